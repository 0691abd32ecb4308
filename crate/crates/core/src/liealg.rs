//! su(2) and SU(2) realised as imaginary and unit quaternions.
//!
//! The basis of su(2) is `e_a = u_a / 2` with `u_1, u_2, u_3` the imaginary
//! quaternion units, so `[e1, e2] = e3` cyclically and the bracket of
//! coefficient vectors is the cross product. The rotation generators
//! `xi_1, xi_2, xi_3` of so(3) are exactly `ad(e_1), ad(e_2), ad(e_3)` in this
//! basis, which is the isomorphism used for the group directions.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use thiserror::Error;

use crate::dual::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LieError {
    #[error("deformation parameter must be positive and finite, got {0}")]
    NonPositiveEpsilon(f64),
    #[error("so(3) basis index must be 1, 2 or 3, got {0}")]
    IndexOutOfRange(usize),
    #[error("quaternion with zero norm cannot be normalised")]
    ZeroQuaternion,
}

/// Element of su(2): coefficients on `(e1, e2, e3)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AlgElement {
    pub x: [f64; 3],
}

impl AlgElement {
    pub const ZERO: AlgElement = AlgElement { x: [0.0; 3] };

    pub const fn new(x1: f64, x2: f64, x3: f64) -> Self {
        AlgElement { x: [x1, x2, x3] }
    }

    /// Basis element `e_i`, `i` in 1..=3.
    pub fn basis(i: usize) -> Result<Self, LieError> {
        if !(1..=3).contains(&i) {
            return Err(LieError::IndexOutOfRange(i));
        }
        let mut x = [0.0; 3];
        x[i - 1] = 1.0;
        Ok(AlgElement { x })
    }

    /// Coefficient dot product `x1 y1 + x2 y2 + x3 y3`.
    pub fn dot(&self, o: &Self) -> f64 {
        self.x[0] * o.x[0] + self.x[1] * o.x[1] + self.x[2] * o.x[2]
    }

    /// Ad-invariant fibre metric `-tr(XY)` in the defining 2x2 representation,
    /// i.e. half the coefficient dot product. All form norms, energies and
    /// charges are measured with this metric.
    pub fn tr_inner(&self, o: &Self) -> f64 {
        0.5 * self.dot(o)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(&self, k: f64) -> Self {
        AlgElement {
            x: [k * self.x[0], k * self.x[1], k * self.x[2]],
        }
    }

    /// Imaginary quaternion `(v1, v2, v3)` representing this element.
    pub fn to_quaternion(&self) -> [f64; 4] {
        [0.0, 0.5 * self.x[0], 0.5 * self.x[1], 0.5 * self.x[2]]
    }

    pub fn from_quaternion_imag(q: [f64; 4]) -> Self {
        AlgElement::new(2.0 * q[1], 2.0 * q[2], 2.0 * q[3])
    }
}

impl Add for AlgElement {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        AlgElement::new(self.x[0] + o.x[0], self.x[1] + o.x[1], self.x[2] + o.x[2])
    }
}

impl AddAssign for AlgElement {
    fn add_assign(&mut self, o: Self) {
        for k in 0..3 {
            self.x[k] += o.x[k];
        }
    }
}

impl Sub for AlgElement {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        AlgElement::new(self.x[0] - o.x[0], self.x[1] - o.x[1], self.x[2] - o.x[2])
    }
}

impl Neg for AlgElement {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

impl Mul<AlgElement> for f64 {
    type Output = AlgElement;
    fn mul(self, v: AlgElement) -> AlgElement {
        v.scale(self)
    }
}

/// Undeformed bracket `[X, Y]`.
pub fn bracket(x: &AlgElement, y: &AlgElement) -> AlgElement {
    AlgElement { x: cross(&x.x, &y.x) }
}

/// Deformed bracket `[X, Y]_eps = eps [X, Y]`.
pub fn eps_bracket(x: &AlgElement, y: &AlgElement, eps: f64) -> Result<AlgElement, LieError> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(LieError::NonPositiveEpsilon(eps));
    }
    Ok(bracket(x, y).scale(eps))
}

/// Coefficient-level bracket, generic over the scalar type.
#[inline]
pub fn cross<S: Scalar>(a: &[S; 3], b: &[S; 3]) -> [S; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Unit quaternion `q0 + q1 i + q2 j + q3 k` standing for a point of SU(2).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupElement {
    pub q: [f64; 4],
}

impl GroupElement {
    pub const IDENTITY: GroupElement = GroupElement {
        q: [1.0, 0.0, 0.0, 0.0],
    };

    /// Normalises the given quaternion.
    pub fn new(q0: f64, q1: f64, q2: f64, q3: f64) -> Result<Self, LieError> {
        let n = (q0 * q0 + q1 * q1 + q2 * q2 + q3 * q3).sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(LieError::ZeroQuaternion);
        }
        Ok(GroupElement {
            q: [q0 / n, q1 / n, q2 / n, q3 / n],
        })
    }

    pub fn inverse(&self) -> Self {
        GroupElement {
            q: [self.q[0], -self.q[1], -self.q[2], -self.q[3]],
        }
    }

    pub fn negate(&self) -> Self {
        GroupElement {
            q: [-self.q[0], -self.q[1], -self.q[2], -self.q[3]],
        }
    }

    pub fn norm(&self) -> f64 {
        self.q.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Rotation matrix of `Ad(g)` on su(2) coefficient vectors.
    pub fn ad_matrix(&self) -> [[f64; 3]; 3] {
        let [w, x, y, z] = self.q;
        [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]
    }
}

impl Mul for GroupElement {
    type Output = GroupElement;
    fn mul(self, o: GroupElement) -> GroupElement {
        let p = qmul(&self.q, &o.q);
        // renormalise to keep products on the unit sphere
        let n = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        GroupElement {
            q: [p[0] / n, p[1] / n, p[2] / n, p[3] / n],
        }
    }
}

/// Hamilton product, generic over the scalar type.
#[inline]
pub fn qmul<S: Scalar>(a: &[S; 4], b: &[S; 4]) -> [S; 4] {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

#[inline]
pub fn qconj<S: Scalar>(a: &[S; 4]) -> [S; 4] {
    [a[0], -a[1], -a[2], -a[3]]
}

/// Exponential map su(2) -> SU(2).
pub fn exp_map(x: &AlgElement) -> GroupElement {
    let v = x.to_quaternion();
    let th = (v[1] * v[1] + v[2] * v[2] + v[3] * v[3]).sqrt();
    if th < 1e-300 {
        return GroupElement::IDENTITY;
    }
    let s = th.sin() / th;
    GroupElement {
        q: [th.cos(), s * v[1], s * v[2], s * v[3]],
    }
}

/// `g X g^{-1}`.
pub fn adjoint(g: &GroupElement, x: &AlgElement) -> AlgElement {
    AlgElement {
        x: apply_ad(&g.ad_matrix(), &x.x),
    }
}

/// Apply a precomputed `Ad(g)` matrix to a generic coefficient vector.
#[inline]
pub fn apply_ad<S: Scalar>(m: &[[f64; 3]; 3], v: &[S; 3]) -> [S; 3] {
    let mut out = [S::zero(); 3];
    for (r, row) in m.iter().enumerate() {
        out[r] = v[0].scale(row[0]) + v[1].scale(row[1]) + v[2].scale(row[2]);
    }
    out
}

/// The su(2) element matching the so(3) generator `xi_i`.
pub fn so3_to_su2(i: usize) -> Result<AlgElement, LieError> {
    AlgElement::basis(i)
}

/// Right-translated tangent direction `xi_i[g]` on SO(3), stored through an
/// SU(2) representative of the base point.
#[derive(Clone, Copy, Debug)]
pub struct So3Direction {
    pub index: usize,
    pub base: GroupElement,
}

impl So3Direction {
    pub fn new(index: usize, base: GroupElement) -> Result<Self, LieError> {
        so3_to_su2(index)?;
        Ok(So3Direction { index, base })
    }

    pub fn generator(&self) -> AlgElement {
        so3_to_su2(self.index).expect("index checked at construction")
    }

    /// Point reached after flowing for time `t`: `exp(t xi_i) g`.
    pub fn flow(&self, t: f64) -> GroupElement {
        exp_map(&self.generator().scale(t)) * self.base
    }
}

/// The 3x3 so(3) matrices listed as the basis of the rotation algebra.
pub fn xi_matrix(i: usize) -> Result<[[f64; 3]; 3], LieError> {
    match i {
        1 => Ok([[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]]),
        2 => Ok([[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]),
        3 => Ok([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]),
        _ => Err(LieError::IndexOutOfRange(i)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn e(i: usize) -> AlgElement {
        AlgElement::basis(i).unwrap()
    }

    fn close(a: &AlgElement, b: &AlgElement, tol: f64) -> bool {
        (*a - *b).norm() <= tol
    }

    #[test]
    fn basis_commutation() {
        assert_eq!(bracket(&e(1), &e(2)), e(3));
        assert_eq!(bracket(&e(2), &e(3)), e(1));
        assert_eq!(bracket(&e(3), &e(1)), e(2));
        assert_eq!(bracket(&(e(1) + e(2)), &e(2)), e(3));
        let x = AlgElement::new(0.3, -1.2, 2.0);
        assert_eq!(bracket(&x, &x), AlgElement::ZERO);
    }

    #[test]
    fn quaternion_commutator_agrees_with_cross_product() {
        let x = AlgElement::new(0.3, -1.2, 2.0);
        let y = AlgElement::new(-0.7, 0.1, 0.4);
        let (qx, qy) = (x.to_quaternion(), y.to_quaternion());
        let a = qmul(&qx, &qy);
        let b = qmul(&qy, &qx);
        let comm = [0.0, a[1] - b[1], a[2] - b[2], a[3] - b[3]];
        assert!(close(&AlgElement::from_quaternion_imag(comm), &bracket(&x, &y), 1e-14));
    }

    #[test]
    fn deformed_bracket() {
        assert_eq!(eps_bracket(&e(1), &e(2), 0.5).unwrap(), e(3).scale(0.5));
        assert_eq!(eps_bracket(&e(1), &e(1), 0.3).unwrap(), AlgElement::ZERO);
        assert_eq!(eps_bracket(&e(2), &e(1), 1.0).unwrap(), -e(3));
        assert!(eps_bracket(&e(1), &e(2), 0.0).is_err());
        assert!(eps_bracket(&e(1), &e(2), -1.0).is_err());
    }

    #[test]
    fn exponential_closed_forms() {
        assert_eq!(exp_map(&AlgElement::ZERO), GroupElement::IDENTITY);
        let g = exp_map(&e(1).scale(std::f64::consts::PI));
        assert!((g.q[0]).abs() < 1e-15 && (g.q[1] - 1.0).abs() < 1e-15);
        let x = AlgElement::new(0.4, -2.1, 0.9);
        let id = exp_map(&x) * exp_map(&-x);
        for (a, b) in id.q.iter().zip(GroupElement::IDENTITY.q.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn adjoint_rotates_e1_to_e2() {
        // Worked by hand: exp((pi/2) e3) = cos(pi/4) + sin(pi/4) k, and
        // conjugating i by it gives j.
        let g = exp_map(&e(3).scale(std::f64::consts::FRAC_PI_2));
        assert!(close(&adjoint(&g, &e(1)), &e(2), 1e-14));
        let x = AlgElement::new(1.0, 2.0, 3.0);
        assert!(close(&adjoint(&GroupElement::IDENTITY, &x), &x, 0.0));
    }

    #[test]
    fn adjoint_matches_quaternion_conjugation() {
        let g = GroupElement::new(0.3, -0.5, 0.8, 0.1).unwrap();
        let x = AlgElement::new(0.2, -1.0, 0.6);
        let q = qmul(&qmul(&g.q, &x.to_quaternion()), &qconj(&g.q));
        assert!(close(&AlgElement::from_quaternion_imag(q), &adjoint(&g, &x), 1e-14));
    }

    #[test]
    fn so3_isomorphism() {
        assert_eq!(so3_to_su2(1).unwrap(), e(1));
        assert_eq!(
            bracket(&so3_to_su2(1).unwrap(), &so3_to_su2(2).unwrap()),
            so3_to_su2(3).unwrap()
        );
        assert_eq!(so3_to_su2(4), Err(LieError::IndexOutOfRange(4)));
        assert_eq!(so3_to_su2(0), Err(LieError::IndexOutOfRange(0)));
        // xi_i is the matrix of ad(e_i) in the e-basis
        for i in 1..=3 {
            let m = xi_matrix(i).unwrap();
            for j in 1..=3 {
                let col = bracket(&e(i), &e(j));
                for r in 0..3 {
                    assert_eq!(m[r][j - 1], col.x[r]);
                }
            }
        }
    }

    #[test]
    fn xi_matrices_close_under_commutator() {
        let mm = |a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]| {
            let mut c = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        c[i][j] += a[i][k] * b[k][j];
                    }
                }
            }
            c
        };
        for (i, j, k) in [(1, 2, 3), (2, 3, 1), (3, 1, 2)] {
            let (a, b) = (xi_matrix(i).unwrap(), xi_matrix(j).unwrap());
            let (ab, ba) = (mm(&a, &b), mm(&b, &a));
            let c = xi_matrix(k).unwrap();
            for r in 0..3 {
                for s in 0..3 {
                    assert_eq!(ab[r][s] - ba[r][s], c[r][s]);
                }
            }
        }
    }

    #[test]
    fn flow_along_direction_is_right_translation() {
        let g = GroupElement::new(0.9, 0.1, -0.3, 0.2).unwrap();
        let d = So3Direction::new(2, g).unwrap();
        let h = d.flow(1e-6);
        // (Ad(h) - Ad(g)) X / t ~ [e2, Ad(g) X]
        let x = AlgElement::new(0.5, 0.2, -0.4);
        let fd = (adjoint(&h, &x) - adjoint(&g, &x)).scale(1e6);
        assert!(close(&fd, &bracket(&e(2), &adjoint(&g, &x)), 1e-5));
        assert!(So3Direction::new(0, g).is_err());
    }

    fn alg() -> impl Strategy<Value = AlgElement> {
        (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64).prop_map(|(a, b, c)| AlgElement::new(a, b, c))
    }

    fn group() -> impl Strategy<Value = GroupElement> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_filter("nonzero", |(a, b, c, d)| a * a + b * b + c * c + d * d > 1e-3)
            .prop_map(|(a, b, c, d)| GroupElement::new(a, b, c, d).unwrap())
    }

    proptest! {
        #[test]
        fn jacobi_identity(x in alg(), y in alg(), z in alg()) {
            let j = bracket(&x, &bracket(&y, &z))
                + bracket(&y, &bracket(&z, &x))
                + bracket(&z, &bracket(&x, &y));
            prop_assert!(j.norm() <= 1e-12);
        }

        #[test]
        fn adjoint_is_isometry(g in group(), x in alg(), y in alg()) {
            let (gx, gy) = (adjoint(&g, &x), adjoint(&g, &y));
            prop_assert!((gx.dot(&gy) - x.dot(&y)).abs() <= 1e-12 * (1.0 + x.norm() * y.norm()));
            prop_assert!(close(&adjoint(&g.negate(), &x), &gx, 1e-13));
        }

        #[test]
        fn deformed_bracket_is_scaled(x in alg(), y in alg(), eps in 1e-4..10.0f64) {
            prop_assert_eq!(eps_bracket(&x, &y, eps).unwrap(), bracket(&x, &y).scale(eps));
        }

        #[test]
        fn exp_inverse(x in alg()) {
            let g = exp_map(&x);
            prop_assert!((g.norm() - 1.0).abs() <= 1e-12);
            let id = g * g.inverse();
            prop_assert!((id.q[0] - 1.0).abs() <= 1e-12);
            prop_assert!(id.q[1].abs() + id.q[2].abs() + id.q[3].abs() <= 1e-12);
        }

        #[test]
        fn products_stay_unit(g in group(), h in group()) {
            prop_assert!(((g * h).norm() - 1.0).abs() <= 1e-12);
        }
    }
}
