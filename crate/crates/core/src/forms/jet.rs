//! Pointwise algebra on su(2)-valued 1-forms carried together with their
//! first partial derivatives. Every integrand of the inner products, the
//! energy and the Hessian is assembled from these helpers.

use crate::dual::{Grad4, Scalar};
use crate::liealg::cross;

pub type Coef = [f64; 3];

/// Increasing index pairs of 2-forms, in storage order.
pub const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

#[inline]
pub fn add3(a: &Coef, b: &Coef) -> Coef {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub3(a: &Coef, b: &Coef) -> Coef {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale3(k: f64, a: &Coef) -> Coef {
    [k * a[0], k * a[1], k * a[2]]
}

#[inline]
pub fn axpy3(y: &mut Coef, k: f64, x: &Coef) {
    y[0] += k * x[0];
    y[1] += k * x[1];
    y[2] += k * x[2];
}

/// Fibre metric `-tr(XY)` on coefficient vectors.
#[inline]
pub fn ip3(a: &Coef, b: &Coef) -> f64 {
    0.5 * (a[0] * b[0] + a[1] * b[1] + a[2] * b[2])
}

/// A 1-form `alpha = sum alpha_mu dx^mu` at a point with `d[i][mu] = d_i alpha_mu`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet1 {
    pub v: [Coef; 4],
    pub d: [[Coef; 4]; 4],
}

impl Jet1 {
    pub const ZERO: Jet1 = Jet1 {
        v: [[0.0; 3]; 4],
        d: [[[0.0; 3]; 4]; 4],
    };

    pub fn from_grad(c: &[[Grad4; 3]; 4]) -> Jet1 {
        let mut j = Jet1::ZERO;
        for mu in 0..4 {
            for a in 0..3 {
                j.v[mu][a] = c[mu][a].re;
                for i in 0..4 {
                    j.d[i][mu][a] = c[mu][a].eps[i];
                }
            }
        }
        j
    }

    pub fn values(c: &[[f64; 3]; 4]) -> Jet1 {
        Jet1 { v: *c, ..Jet1::ZERO }
    }

    pub fn axpy(&mut self, k: f64, o: &Jet1) {
        for mu in 0..4 {
            axpy3(&mut self.v[mu], k, &o.v[mu]);
            for i in 0..4 {
                axpy3(&mut self.d[i][mu], k, &o.d[i][mu]);
            }
        }
    }

    pub fn scaled(&self, k: f64) -> Jet1 {
        let mut out = Jet1::ZERO;
        out.axpy(k, self);
        out
    }

    pub fn sub(&self, o: &Jet1) -> Jet1 {
        let mut out = *self;
        out.axpy(-1.0, o);
        out
    }

    pub fn add(&self, o: &Jet1) -> Jet1 {
        let mut out = *self;
        out.axpy(1.0, o);
        out
    }

    /// Apply the same linear map to every coefficient vector.
    pub fn map_coef(&self, f: impl Fn(&Coef) -> Coef) -> Jet1 {
        let mut out = Jet1::ZERO;
        for mu in 0..4 {
            out.v[mu] = f(&self.v[mu]);
            for i in 0..4 {
                out.d[i][mu] = f(&self.d[i][mu]);
            }
        }
        out
    }

    pub fn bracket_left(&self, x: &Coef) -> Jet1 {
        self.map_coef(|c| cross(x, c))
    }

    pub fn norm_sq_l2(&self) -> f64 {
        self.v.iter().map(|c| ip3(c, c)).sum()
    }
}

/// `nabla^eps_A alpha`: all sixteen components `d_i alpha_j + eps [A_i, alpha_j]`.
#[inline]
pub fn cov_grad(conn: &[Coef; 4], eps: f64, a: &Jet1) -> [[Coef; 4]; 4] {
    let mut g = a.d;
    for i in 0..4 {
        for j in 0..4 {
            axpy3(&mut g[i][j], eps, &cross(&conn[i], &a.v[j]));
        }
    }
    g
}

#[inline]
pub fn ip_grad(a: &[[Coef; 4]; 4], b: &[[Coef; 4]; 4]) -> f64 {
    let mut s = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            s += ip3(&a[i][j], &b[i][j]);
        }
    }
    s
}

#[inline]
pub fn ip1(a: &[Coef; 4], b: &[Coef; 4]) -> f64 {
    ip3(&a[0], &b[0]) + ip3(&a[1], &b[1]) + ip3(&a[2], &b[2]) + ip3(&a[3], &b[3])
}

#[inline]
pub fn ip2(a: &[Coef; 6], b: &[Coef; 6]) -> f64 {
    let mut s = 0.0;
    for k in 0..6 {
        s += ip3(&a[k], &b[k]);
    }
    s
}

/// `[a ∧ b]` for 1-forms: components `[a_mu, b_nu] - [a_nu, b_mu]`.
#[inline]
pub fn wedge_bracket11(a: &[Coef; 4], b: &[Coef; 4]) -> [Coef; 6] {
    let mut out = [[0.0; 3]; 6];
    for (k, &(m, n)) in PAIRS.iter().enumerate() {
        out[k] = sub3(&cross(&a[m], &b[n]), &cross(&a[n], &b[m]));
    }
    out
}

/// Exterior derivative of a 1-form jet.
#[inline]
pub fn d1(a: &Jet1) -> [Coef; 6] {
    let mut out = [[0.0; 3]; 6];
    for (k, &(m, n)) in PAIRS.iter().enumerate() {
        out[k] = sub3(&a.d[m][n], &a.d[n][m]);
    }
    out
}

/// `d^eps_A alpha = d alpha + eps [A ∧ alpha]`.
#[inline]
pub fn cov_d1(conn: &[Coef; 4], eps: f64, a: &Jet1) -> [Coef; 6] {
    let mut out = d1(a);
    let w = wedge_bracket11(conn, &a.v);
    for k in 0..6 {
        axpy3(&mut out[k], eps, &w[k]);
    }
    out
}

/// `F^eps_A = dA + (eps/2) [A ∧ A]`.
#[inline]
pub fn curvature(conn: &Jet1, eps: f64) -> [Coef; 6] {
    let mut out = d1(conn);
    for (k, &(m, n)) in PAIRS.iter().enumerate() {
        axpy3(&mut out[k], eps, &cross(&conn.v[m], &conn.v[n]));
    }
    out
}

/// Formal adjoint of `d^eps_A` on 1-forms: `-(d_mu alpha_mu + eps [A_mu, alpha_mu])`.
#[inline]
pub fn codiff1(conn: &[Coef; 4], eps: f64, a: &Jet1) -> Coef {
    let mut s = [0.0; 3];
    for mu in 0..4 {
        axpy3(&mut s, -1.0, &a.d[mu][mu]);
        axpy3(&mut s, -eps, &cross(&conn[mu], &a.v[mu]));
    }
    s
}

/// Pointwise `(F ∧ F)` divided by the volume form, with the fibre metric.
#[inline]
pub fn wedge_self_density(f: &[Coef; 6]) -> f64 {
    // pairs (01,23), (02,13), (03,12) with permutation signs +, -, +
    2.0 * (ip3(&f[0], &f[5]) - ip3(&f[1], &f[4]) + ip3(&f[2], &f[3]))
}

/// Convert generic kernel output to plain coefficients.
pub fn re_form<S: Scalar>(c: &[[S; 3]; 4]) -> [[f64; 3]; 4] {
    let mut out = [[0.0; 3]; 4];
    for mu in 0..4 {
        for a in 0..3 {
            out[mu][a] = c[mu][a].re();
        }
    }
    out
}
