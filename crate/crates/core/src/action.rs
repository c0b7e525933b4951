//! The 5-dimensional gripper action shared by the simulator, the agents and
//! the group actions.

use serde::{Deserialize, Serialize};

/// One control step: planar displacement (x, y), vertical displacement z,
/// yaw displacement theta, and target aperture lambda in [0, 1]
/// (0 fully closed, 1 fully open).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub theta: f64,
    pub lambda: f64,
}

impl ActionVector {
    pub fn zero() -> Self {
        ActionVector { x: 0.0, y: 0.0, z: 0.0, theta: 0.0, lambda: 1.0 }
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        ActionVector { x: a[0], y: a[1], z: a[2], theta: a[3], lambda: a[4] }
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.x, self.y, self.z, self.theta, self.lambda]
    }
}

/// Per-dimension action bounds. Displacements are symmetric; lambda is
/// asymmetric `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionBounds {
    /// |x|, |y|, |z| limit in meters.
    pub xyz: f64,
    /// |theta| limit in radians.
    pub theta: f64,
}

impl Default for ActionBounds {
    fn default() -> Self {
        // x, y, z in [-0.05 m, 0.05 m]; theta in [-pi/4, pi/4]; lambda in [0, 1]
        ActionBounds { xyz: 0.05, theta: std::f64::consts::FRAC_PI_4 }
    }
}

impl ActionBounds {
    pub fn clip(&self, a: ActionVector) -> ActionVector {
        ActionVector {
            x: a.x.clamp(-self.xyz, self.xyz),
            y: a.y.clamp(-self.xyz, self.xyz),
            z: a.z.clamp(-self.xyz, self.xyz),
            theta: a.theta.clamp(-self.theta, self.theta),
            lambda: a.lambda.clamp(0.0, 1.0),
        }
    }

    /// Lower bounds per dimension in (x, y, z, theta, lambda) order.
    pub fn lows(&self) -> [f64; 5] {
        [-self.xyz, -self.xyz, -self.xyz, -self.theta, 0.0]
    }

    pub fn highs(&self) -> [f64; 5] {
        [self.xyz, self.xyz, self.xyz, self.theta, 1.0]
    }
}
