//! Planar symmetry groups: C_n, D_n, SO(2) and O(2), their elements, and
//! sampling. Elements are stored as a rotation angle plus a reflection flag;
//! `reflect = true` means reflection over the x-axis applied after the
//! rotation, so every element is `F^s · R(theta)`.

mod action;
mod rep;

pub use action::{act_on_action, act_on_image, rotate_vec2, Interpolation};
pub use rep::{rep_matrix, FieldType, RepKind, Representation};

use rand::Rng;
use std::f64::consts::TAU;
use thiserror::Error;

/// Snap tolerance when canonicalizing finite-group angles.
pub const ANGLE_SNAP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupKind {
    Cyclic,
    Dihedral,
    So2,
    O2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct GroupSpec {
    pub kind: GroupKind,
    /// Number of rotations (finite kinds only; 1 for continuous kinds).
    pub order: usize,
    /// Largest irrep frequency used when building network types
    /// (continuous kinds only).
    pub max_frequency: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum GroupError {
    #[error("element enumeration is undefined for continuous groups")]
    ContinuousGroup,
    #[error("group element does not belong to the representation's group")]
    IncompatibleGroup,
    #[error("image must be square, got {h}x{w}")]
    NonSquareImage { h: usize, w: usize },
    #[error("regular representation is undefined for continuous groups")]
    RegularOfContinuous,
}

impl GroupSpec {
    pub fn cyclic(n: usize) -> Self {
        assert!(n >= 1, "cyclic group needs order >= 1");
        GroupSpec { kind: GroupKind::Cyclic, order: n, max_frequency: 0 }
    }

    pub fn dihedral(n: usize) -> Self {
        assert!(n >= 1, "dihedral group needs order >= 1");
        GroupSpec { kind: GroupKind::Dihedral, order: n, max_frequency: 0 }
    }

    pub fn so2(max_frequency: usize) -> Self {
        GroupSpec { kind: GroupKind::So2, order: 1, max_frequency }
    }

    pub fn o2(max_frequency: usize) -> Self {
        GroupSpec { kind: GroupKind::O2, order: 1, max_frequency }
    }

    /// Parses the names used in configs and the CLI: c8, d4, d8, so2, o2, ...
    pub fn parse(name: &str) -> Option<Self> {
        let lower = name.to_ascii_lowercase();
        match lower.as_str() {
            "so2" | "so(2)" => return Some(GroupSpec::so2(3)),
            "o2" | "o(2)" => return Some(GroupSpec::o2(3)),
            _ => {}
        }
        let (kind, rest) = lower.split_at(1);
        let n: usize = rest.parse().ok()?;
        match kind {
            "c" => Some(GroupSpec::cyclic(n)),
            "d" => Some(GroupSpec::dihedral(n)),
            _ => None,
        }
    }

    pub fn name(&self) -> String {
        match self.kind {
            GroupKind::Cyclic => format!("c{}", self.order),
            GroupKind::Dihedral => format!("d{}", self.order),
            GroupKind::So2 => "so2".into(),
            GroupKind::O2 => "o2".into(),
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self.kind, GroupKind::Cyclic | GroupKind::Dihedral)
    }

    pub fn has_reflections(&self) -> bool {
        matches!(self.kind, GroupKind::Dihedral | GroupKind::O2)
    }

    /// |G| for finite kinds.
    pub fn size(&self) -> Result<usize, GroupError> {
        match self.kind {
            GroupKind::Cyclic => Ok(self.order),
            GroupKind::Dihedral => Ok(2 * self.order),
            _ => Err(GroupError::ContinuousGroup),
        }
    }

    /// All elements of a finite group: rotations first, then (for dihedral
    /// kinds) the reflections, each in increasing angle order.
    pub fn elements(&self) -> Result<Vec<GroupElement>, GroupError> {
        if !self.is_finite() {
            return Err(GroupError::ContinuousGroup);
        }
        let n = self.order;
        let mut out = Vec::with_capacity(self.size()?);
        for i in 0..n {
            out.push(GroupElement::rotation(TAU * i as f64 / n as f64));
        }
        if self.kind == GroupKind::Dihedral {
            for i in 0..n {
                out.push(GroupElement::new(TAU * i as f64 / n as f64, true));
            }
        }
        Ok(out)
    }

    /// Uniform random element. Finite kinds draw from `elements`; SO(2)
    /// draws a uniform angle; O(2) additionally flips a fair coin for the
    /// reflection.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> GroupElement {
        match self.kind {
            GroupKind::Cyclic | GroupKind::Dihedral => {
                let elems = self.elements().expect("finite");
                elems[rng.gen_range(0..elems.len())]
            }
            GroupKind::So2 => GroupElement::rotation(rng.gen::<f64>() * TAU),
            GroupKind::O2 => GroupElement::new(rng.gen::<f64>() * TAU, rng.gen::<bool>()),
        }
    }

    /// Index of `g` in `elements()`, snapping the angle.
    pub fn element_index(&self, g: GroupElement) -> Result<usize, GroupError> {
        let n = self.order;
        if g.reflect && self.kind != GroupKind::Dihedral {
            return Err(GroupError::IncompatibleGroup);
        }
        let step = TAU / n as f64;
        let k = (g.theta / step).round();
        if (g.theta - k * step).abs() > ANGLE_SNAP_TOL {
            return Err(GroupError::IncompatibleGroup);
        }
        let k = (k as isize).rem_euclid(n as isize) as usize;
        Ok(if g.reflect { n + k } else { k })
    }

    /// Whether `g` is an element of this group (always true for continuous
    /// kinds matching the reflection support).
    pub fn contains(&self, g: GroupElement) -> bool {
        match self.kind {
            GroupKind::So2 => !g.reflect,
            GroupKind::O2 => true,
            GroupKind::Cyclic | GroupKind::Dihedral => self.element_index(g).is_ok(),
        }
    }

    /// Snaps the angle of `g` to the nearest exact multiple of 2*pi/n.
    pub fn snap(&self, g: GroupElement) -> Result<GroupElement, GroupError> {
        if !self.is_finite() {
            return Ok(g);
        }
        let idx = self.element_index(g)?;
        let k = idx % self.order;
        Ok(GroupElement::new(TAU * k as f64 / self.order as f64, g.reflect))
    }
}

/// One planar symmetry: `F^reflect · R(theta)` with `theta` in `[0, 2*pi)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GroupElement {
    pub theta: f64,
    pub reflect: bool,
}

impl GroupElement {
    pub fn new(theta: f64, reflect: bool) -> Self {
        GroupElement { theta: canonical_angle(theta), reflect }
    }

    pub fn rotation(theta: f64) -> Self {
        GroupElement::new(theta, false)
    }

    pub fn identity() -> Self {
        GroupElement { theta: 0.0, reflect: false }
    }

    pub fn reflection_x() -> Self {
        GroupElement { theta: 0.0, reflect: true }
    }

    pub fn is_identity(&self) -> bool {
        !self.reflect && (self.theta.abs() < ANGLE_SNAP_TOL || (TAU - self.theta) < ANGLE_SNAP_TOL)
    }

    /// True when the rotation part is an exact multiple of 90 degrees, i.e.
    /// the element acts on square pixel grids as a permutation.
    pub fn is_quarter_turn(&self) -> bool {
        let q = self.theta / (TAU / 4.0);
        (q - q.round()).abs() < ANGLE_SNAP_TOL
    }

    /// `self . other`: apply `other` first, then `self`. Matches the 2x2
    /// matrix product of the standard representation.
    pub fn compose(self, other: GroupElement) -> GroupElement {
        let theta = if other.reflect { -self.theta } else { self.theta } + other.theta;
        GroupElement::new(theta, self.reflect ^ other.reflect)
    }

    pub fn inverse(self) -> GroupElement {
        let theta = if self.reflect { self.theta } else { -self.theta };
        GroupElement::new(theta, self.reflect)
    }

    pub fn approx_eq(self, other: GroupElement, tol: f64) -> bool {
        if self.reflect != other.reflect {
            return false;
        }
        let d = (self.theta - other.theta).abs();
        d < tol || (TAU - d) < tol
    }
}

/// Reduce an angle to `[0, 2*pi)`, snapping values within tolerance of the
/// upper boundary down to zero.
pub fn canonical_angle(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(TAU);
    if TAU - t < ANGLE_SNAP_TOL {
        t = 0.0;
    }
    t
}

/// Free-function aliases mirroring the library's operation vocabulary.
pub fn compose(g: GroupElement, h: GroupElement) -> GroupElement {
    g.compose(h)
}

pub fn inverse(g: GroupElement) -> GroupElement {
    g.inverse()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn c4_enumerates_four_rotations() {
        let g = GroupSpec::cyclic(4);
        let elems = g.elements().unwrap();
        assert_eq!(elems.len(), 4);
        for (i, e) in elems.iter().enumerate() {
            assert!(!e.reflect);
            assert!((e.theta - FRAC_PI_2 * i as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn d4_has_eight_elements_closed_under_compose() {
        let g = GroupSpec::dihedral(4);
        let elems = g.elements().unwrap();
        assert_eq!(elems.len(), 8);
        assert_eq!(elems.iter().filter(|e| e.reflect).count(), 4);
        for &a in &elems {
            for &b in &elems {
                let c = g.snap(a.compose(b)).expect("closure");
                assert!(elems.iter().any(|e| e.approx_eq(c, 1e-9)));
            }
        }
    }

    #[test]
    fn continuous_groups_refuse_enumeration() {
        assert_eq!(GroupSpec::so2(3).elements(), Err(GroupError::ContinuousGroup));
        assert_eq!(GroupSpec::o2(3).elements(), Err(GroupError::ContinuousGroup));
    }

    #[test]
    fn sample_so2_is_deterministic_for_fixed_seed() {
        let g = GroupSpec::so2(3);
        let mut r1 = ChaCha8Rng::seed_from_u64(42);
        let mut r2 = ChaCha8Rng::seed_from_u64(42);
        let a = g.sample(&mut r1);
        let b = g.sample(&mut r2);
        assert_eq!(a, b);
        assert!((0.0..TAU).contains(&a.theta));
        assert!(!a.reflect);
    }

    #[test]
    fn sample_so2_mean_cosine_vanishes() {
        // Monte-Carlo oracle: E[cos(theta)] = 0 for theta ~ U[0, 2pi).
        let g = GroupSpec::so2(3);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let mean = (0..n).map(|_| g.sample(&mut rng).theta.cos()).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "mean cos = {mean}");
    }

    #[test]
    fn sample_c8_hits_45_degree_grid() {
        let g = GroupSpec::cyclic(8);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let e = g.sample(&mut rng);
            let k = e.theta / (TAU / 8.0);
            assert!((k - k.round()).abs() < 1e-12);
            assert!(!e.reflect);
        }
    }

    #[test]
    fn compose_basics() {
        let r90 = GroupElement::rotation(FRAC_PI_2);
        let r180 = r90.compose(r90);
        assert!(r180.approx_eq(GroupElement::rotation(PI), 1e-12));

        let f = GroupElement::reflection_x();
        assert!(f.compose(f).is_identity());
    }

    #[test]
    fn d4_is_not_abelian() {
        // oracle: multiply standard 2x2 matrices
        let r90 = GroupElement::rotation(FRAC_PI_2);
        let f = GroupElement::reflection_x();
        let ab = r90.compose(f);
        let ba = f.compose(r90);
        let m = |g: GroupElement| {
            let rep = Representation::standard(GroupSpec::dihedral(4));
            rep_matrix(&rep, g).unwrap()
        };
        let prod = |a: &Array2<f64>, b: &Array2<f64>| a.dot(b);
        let mab = prod(&m(r90), &m(f));
        let mba = prod(&m(f), &m(r90));
        // matrix oracle agrees with element composition
        assert!(matrices_close(&m(ab), &mab, 1e-12));
        assert!(matrices_close(&m(ba), &mba, 1e-12));
        // and the two orders differ
        assert!(!matrices_close(&mab, &mba, 1e-9));
    }

    #[test]
    fn inverse_composes_to_identity() {
        let g = GroupSpec::dihedral(8);
        for e in g.elements().unwrap() {
            assert!(e.inverse().compose(e).is_identity());
            assert!(e.compose(e.inverse()).is_identity());
        }
        let r = GroupElement::rotation(0.7342);
        assert!(r.inverse().compose(r).is_identity());
        let fr = GroupElement::new(1.234, true);
        assert!(fr.inverse().compose(fr).is_identity());
    }

    fn matrices_close(a: &Array2<f64>, b: &Array2<f64>, tol: f64) -> bool {
        a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() < tol)
    }
}
