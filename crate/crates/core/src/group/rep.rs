//! Matrix representations of the planar symmetry groups.

use super::{GroupElement, GroupError, GroupSpec};
use ndarray::Array2;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum RepKind {
    /// One-dimensional representation fixing everything (rho_0).
    Trivial,
    /// The standard action on R^2 (rho_1).
    Standard,
    /// rho_m(g) = rho_1(m g): rotation by m*theta; reflections act as the
    /// x-axis flip. `Irrep(0)` collapses to the trivial representation.
    Irrep(usize),
    /// O(2) irreps rho_(1,k). k = 0 is the one-dimensional reflection-sign
    /// representation; k >= 1 rotates by k*theta and reflects over x.
    O2Irrep(usize),
    /// Permutation action of the group on itself (finite groups only).
    Regular,
    DirectSum(Vec<Representation>),
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Representation {
    pub group: GroupSpec,
    pub kind: RepKind,
}

impl Representation {
    pub fn trivial(group: GroupSpec) -> Self {
        Representation { group, kind: RepKind::Trivial }
    }

    pub fn standard(group: GroupSpec) -> Self {
        Representation { group, kind: RepKind::Standard }
    }

    pub fn irrep(group: GroupSpec, m: usize) -> Self {
        Representation { group, kind: RepKind::Irrep(m) }
    }

    pub fn o2_irrep(group: GroupSpec, k: usize) -> Self {
        Representation { group, kind: RepKind::O2Irrep(k) }
    }

    pub fn regular(group: GroupSpec) -> Result<Self, GroupError> {
        if !group.is_finite() {
            return Err(GroupError::RegularOfContinuous);
        }
        Ok(Representation { group, kind: RepKind::Regular })
    }

    /// The reflection-sign representation: +1 on rotations, -1 on
    /// reflections; trivial for groups without reflections.
    pub fn reflection_sign(group: GroupSpec) -> Self {
        if group.has_reflections() {
            Representation { group, kind: RepKind::O2Irrep(0) }
        } else {
            Representation::trivial(group)
        }
    }

    pub fn dimension(&self) -> usize {
        match &self.kind {
            RepKind::Trivial => 1,
            RepKind::Standard => 2,
            RepKind::Irrep(0) => 1,
            RepKind::Irrep(_) => 2,
            RepKind::O2Irrep(0) => 1,
            RepKind::O2Irrep(_) => 2,
            RepKind::Regular => self.group.size().expect("finite"),
            RepKind::DirectSum(children) => children.iter().map(|c| c.dimension()).sum(),
        }
    }
}

fn rot2(theta: f64) -> Array2<f64> {
    let (s, c) = theta.sin_cos();
    ndarray::array![[c, -s], [s, c]]
}

fn flip_x() -> Array2<f64> {
    ndarray::array![[1.0, 0.0], [0.0, -1.0]]
}

/// Matrix of `rep` at group element `g`.
pub fn rep_matrix(rep: &Representation, g: GroupElement) -> Result<Array2<f64>, GroupError> {
    if !rep.group.contains(g) {
        return Err(GroupError::IncompatibleGroup);
    }
    let g = rep.group.snap(g)?;
    Ok(match &rep.kind {
        RepKind::Trivial | RepKind::Irrep(0) => Array2::eye(1),
        RepKind::O2Irrep(0) => {
            let v = if g.reflect { -1.0 } else { 1.0 };
            Array2::from_elem((1, 1), v)
        }
        RepKind::Standard => rotate_then_flip(1, g),
        RepKind::Irrep(m) => rotate_then_flip(*m, g),
        RepKind::O2Irrep(k) => rotate_then_flip(*k, g),
        RepKind::Regular => {
            let elems = rep.group.elements()?;
            let n = elems.len();
            let mut p = Array2::zeros((n, n));
            for (j, &h) in elems.iter().enumerate() {
                let i = rep.group.element_index(g.compose(h))?;
                p[[i, j]] = 1.0;
            }
            p
        }
        RepKind::DirectSum(children) => {
            let dim: usize = children.iter().map(|c| c.dimension()).sum();
            let mut out = Array2::zeros((dim, dim));
            let mut off = 0;
            for c in children {
                let block = rep_matrix(c, g)?;
                let d = block.nrows();
                out.slice_mut(ndarray::s![off..off + d, off..off + d]).assign(&block);
                off += d;
            }
            out
        }
    })
}

fn rotate_then_flip(freq: usize, g: GroupElement) -> Array2<f64> {
    let r = rot2(freq as f64 * g.theta);
    if g.reflect {
        flip_x().dot(&r)
    } else {
        r
    }
}

/// The feature-field type of a geometric tensor: an ordered list of
/// representations over one group. The channel count of any tensor carrying
/// this type equals `total_dim`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FieldType {
    pub group: GroupSpec,
    pub fields: Vec<Representation>,
}

impl FieldType {
    pub fn new(group: GroupSpec, fields: Vec<Representation>) -> Self {
        assert!(fields.iter().all(|f| f.group == group), "mixed-group field type");
        FieldType { group, fields }
    }

    pub fn trivial(group: GroupSpec, count: usize) -> Self {
        FieldType::new(group, vec![Representation::trivial(group); count])
    }

    pub fn regular(group: GroupSpec, count: usize) -> Self {
        let rep = Representation::regular(group).expect("finite group");
        FieldType::new(group, vec![rep; count])
    }

    pub fn total_dim(&self) -> usize {
        self.fields.iter().map(|f| f.dimension()).sum()
    }

    /// Per-field channel widths.
    pub fn dims(&self) -> Vec<usize> {
        self.fields.iter().map(|f| f.dimension()).collect()
    }

    /// Channel offset of each field.
    pub fn offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.fields.len());
        let mut off = 0;
        for f in &self.fields {
            out.push(off);
            off += f.dimension();
        }
        out
    }

    /// Block-diagonal representation matrix over all fields.
    pub fn rep_matrix(&self, g: GroupElement) -> Result<Array2<f64>, GroupError> {
        let sum = Representation {
            group: self.group,
            kind: RepKind::DirectSum(self.fields.clone()),
        };
        rep_matrix(&sum, g)
    }

    pub fn concat(&self, other: &FieldType) -> FieldType {
        assert_eq!(self.group, other.group);
        let mut fields = self.fields.clone();
        fields.extend(other.fields.iter().cloned());
        FieldType::new(self.group, fields)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use std::f64::consts::FRAC_PI_2;

    fn close(a: &Array2<f64>, b: &Array2<f64>, tol: f64) -> bool {
        a.shape() == b.shape() && a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn standard_rep_of_rot90() {
        let rep = Representation::standard(GroupSpec::cyclic(4));
        let m = rep_matrix(&rep, GroupElement::rotation(FRAC_PI_2)).unwrap();
        let want = ndarray::array![[0.0, -1.0], [1.0, 0.0]];
        assert!(close(&m, &want, 1e-12));
    }

    #[test]
    fn irrep2_at_45_degrees_is_rot90() {
        let g8 = GroupSpec::cyclic(8);
        let rep = Representation::irrep(g8, 2);
        let m = rep_matrix(&rep, GroupElement::rotation(FRAC_PI_2 / 2.0)).unwrap();
        let want = ndarray::array![[0.0, -1.0], [1.0, 0.0]];
        assert!(close(&m, &want, 1e-12));
    }

    #[test]
    fn regular_rep_is_permutation_with_expected_trace() {
        for spec in [GroupSpec::cyclic(8), GroupSpec::dihedral(4), GroupSpec::dihedral(8)] {
            let rep = Representation::regular(spec).unwrap();
            let n = spec.size().unwrap();
            for e in spec.elements().unwrap() {
                let m = rep_matrix(&rep, e).unwrap();
                // permutation: exactly one 1 per row and column
                for row in m.rows() {
                    assert_eq!(row.iter().filter(|&&v| v == 1.0).count(), 1);
                    assert!(row.iter().all(|&v| v == 0.0 || v == 1.0));
                }
                for col in m.columns() {
                    assert_eq!(col.iter().filter(|&&v| v == 1.0).count(), 1);
                }
                let trace: f64 = m.diag().sum();
                if e.is_identity() {
                    assert_eq!(trace, n as f64);
                } else {
                    assert_eq!(trace, 0.0, "non-identity regular rep has trace 0");
                }
            }
        }
    }

    #[test]
    fn homomorphism_property_all_pairs() {
        for spec in [GroupSpec::cyclic(8), GroupSpec::dihedral(8)] {
            let mut reps = vec![
                Representation::trivial(spec),
                Representation::standard(spec),
                Representation::irrep(spec, 2),
                Representation::irrep(spec, 3),
                Representation::regular(spec).unwrap(),
                Representation::reflection_sign(spec),
            ];
            reps.push(Representation {
                group: spec,
                kind: RepKind::DirectSum(vec![
                    Representation::trivial(spec),
                    Representation::standard(spec),
                ]),
            });
            let elems = spec.elements().unwrap();
            for rep in &reps {
                for &a in &elems {
                    for &b in &elems {
                        let ab = rep_matrix(rep, a.compose(b)).unwrap();
                        let ma = rep_matrix(rep, a).unwrap();
                        let mb = rep_matrix(rep, b).unwrap();
                        let prod = ma.dot(&mb);
                        assert!(
                            close(&ab, &prod, 1e-10),
                            "homomorphism failed for {:?} at {:?} {:?}",
                            rep.kind,
                            a,
                            b
                        );
                    }
                }
                let id = rep_matrix(rep, GroupElement::identity()).unwrap();
                assert!(close(&id, &Array2::eye(rep.dimension()), 1e-12));
            }
        }
    }

    #[test]
    fn incompatible_elements_are_rejected() {
        let rep = Representation::standard(GroupSpec::cyclic(4));
        let odd = GroupElement::rotation(0.1);
        assert!(rep_matrix(&rep, odd).is_err());
        let refl = GroupElement::reflection_x();
        assert!(rep_matrix(&rep, refl).is_err());
    }

    #[test]
    fn field_type_dims() {
        let g = GroupSpec::dihedral(4);
        let ft = FieldType::new(
            g,
            vec![
                Representation::standard(g),
                Representation::trivial(g),
                Representation::regular(g).unwrap(),
            ],
        );
        assert_eq!(ft.total_dim(), 2 + 1 + 8);
        assert_eq!(ft.dims(), vec![2, 1, 8]);
        assert_eq!(ft.offsets(), vec![0, 2, 3]);
    }
}
