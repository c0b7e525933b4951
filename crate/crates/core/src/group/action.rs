//! Group actions on images and on action vectors.
//!
//! Images are planar fields sampled on a square pixel grid; a group element
//! moves the field by inverse-warping about the image center. Quarter-turn
//! elements (any multiple of 90 degrees, reflected or not) permute the grid
//! exactly and are applied without any arithmetic on pixel values.

use super::{GroupElement, GroupError};
use crate::action::{ActionBounds, ActionVector};
use crate::autodiff::Scalar;
use ndarray::{Array3, ArrayView3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    Nearest,
    Bilinear,
}

/// Integer 2x2 matrix of the inverse standard action for quarter-turn
/// elements (entries in {-1, 0, 1}).
fn quarter_inverse_matrix(g: GroupElement) -> [[i64; 2]; 2] {
    let k = ((g.theta / std::f64::consts::FRAC_PI_2).round() as i64).rem_euclid(4) as usize;
    // R(k * 90deg)
    const ROT: [[[i64; 2]; 2]; 4] = [
        [[1, 0], [0, 1]],
        [[0, -1], [1, 0]],
        [[-1, 0], [0, -1]],
        [[0, 1], [-1, 0]],
    ];
    // inverse of F^s R_k is R_{4-k} F^s
    let r_inv = ROT[(4 - k) % 4];
    if g.reflect {
        // R_inv . F with F = diag(1, -1)
        [[r_inv[0][0], -r_inv[0][1]], [r_inv[1][0], -r_inv[1][1]]]
    } else {
        r_inv
    }
}

/// Rotate/reflect a 2-vector by the standard representation of `g`.
/// Quarter turns use exact sign/swap arithmetic.
pub fn rotate_vec2(g: GroupElement, v: [f64; 2]) -> [f64; 2] {
    if g.is_quarter_turn() {
        let minv = quarter_inverse_matrix(g.inverse());
        let x = minv[0][0] as f64 * v[0] + minv[0][1] as f64 * v[1];
        let y = minv[1][0] as f64 * v[0] + minv[1][1] as f64 * v[1];
        [x, y]
    } else {
        let (s, c) = g.theta.sin_cos();
        let (x, y) = (c * v[0] - s * v[1], s * v[0] + c * v[1]);
        if g.reflect {
            [x, -y]
        } else {
            [x, y]
        }
    }
}

/// Apply `g` to a (C, H, W) image about its center. Quarter turns are exact
/// pixel permutations; anything else resamples with the requested
/// interpolation and fills out-of-bounds samples with the per-channel
/// minimum (the table height in depth images).
pub fn act_on_image<T: Scalar>(
    g: GroupElement,
    image: ArrayView3<'_, T>,
    interpolation: Interpolation,
) -> Result<Array3<T>, GroupError> {
    let (c, h, w) = image.dim();
    if h != w {
        return Err(GroupError::NonSquareImage { h, w });
    }
    let mut out = Array3::<T>::zeros((c, h, w));

    if g.is_quarter_turn() {
        let m = quarter_inverse_matrix(g);
        let n = h as i64;
        for ci in 0..c {
            for r in 0..h {
                let y2 = (n - 1) - 2 * r as i64;
                for col in 0..w {
                    let x2 = 2 * col as i64 - (n - 1);
                    let sx2 = m[0][0] * x2 + m[0][1] * y2;
                    let sy2 = m[1][0] * x2 + m[1][1] * y2;
                    let sc = ((sx2 + (n - 1)) / 2) as usize;
                    let sr = (((n - 1) - sy2) / 2) as usize;
                    out[[ci, r, col]] = image[[ci, sr, sc]];
                }
            }
        }
        return Ok(out);
    }

    // general angle: inverse warp. g^-1 in canonical form is
    // F^s R(theta'), i.e. rotate by theta' first, then flip y if reflected.
    let ginv = g.inverse();
    let (s, cth) = ginv.theta.sin_cos();
    let half = (h as f64 - 1.0) / 2.0;
    let fills: Vec<T> = (0..c)
        .map(|ci| {
            image
                .index_axis(ndarray::Axis(0), ci)
                .iter()
                .copied()
                .fold(T::infinity(), |a, b| if b < a { b } else { a })
        })
        .collect();
    for r in 0..h {
        let y = half - r as f64;
        for col in 0..w {
            let x = col as f64 - half;
            let sx = cth * x - s * y;
            let mut sy = s * x + cth * y;
            if g.reflect {
                sy = -sy;
            }
            let src_c = sx + half;
            let src_r = half - sy;
            for ci in 0..c {
                out[[ci, r, col]] = match interpolation {
                    Interpolation::Nearest => {
                        let rr = src_r.round();
                        let cc = src_c.round();
                        if rr < 0.0 || cc < 0.0 || rr >= h as f64 || cc >= w as f64 {
                            fills[ci]
                        } else {
                            image[[ci, rr as usize, cc as usize]]
                        }
                    }
                    Interpolation::Bilinear => {
                        bilinear(&image, ci, src_r, src_c, h, w, fills[ci])
                    }
                };
            }
        }
    }
    Ok(out)
}

fn bilinear<T: Scalar>(
    image: &ArrayView3<'_, T>,
    ci: usize,
    r: f64,
    c: f64,
    h: usize,
    w: usize,
    fill: T,
) -> T {
    let r0 = r.floor();
    let c0 = c.floor();
    let dr = T::from_f(r - r0);
    let dc = T::from_f(c - c0);
    let one = T::one();
    let sample = |ri: f64, cj: f64| -> T {
        if ri < 0.0 || cj < 0.0 || ri >= h as f64 || cj >= w as f64 {
            fill
        } else {
            image[[ci, ri as usize, cj as usize]]
        }
    };
    let v00 = sample(r0, c0);
    let v01 = sample(r0, c0 + 1.0);
    let v10 = sample(r0 + 1.0, c0);
    let v11 = sample(r0 + 1.0, c0 + 1.0);
    let top = v00 * (one - dc) + v01 * dc;
    let bot = v10 * (one - dc) + v11 * dc;
    top * (one - dr) + bot * dr
}

/// Apply `g` to an action: the (x, y) displacement rotates by the standard
/// representation, theta flips sign under reflections, z and lambda are
/// untouched. The result is re-clipped to the action bounds.
pub fn act_on_action(g: GroupElement, a: ActionVector, bounds: ActionBounds) -> ActionVector {
    let xy = rotate_vec2(g, [a.x, a.y]);
    let theta = if g.reflect { -a.theta } else { a.theta };
    bounds.clip(ActionVector { x: xy[0], y: xy[1], z: a.z, theta, lambda: a.lambda })
}
