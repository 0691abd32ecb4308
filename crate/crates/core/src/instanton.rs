//! The glued family `A(q)` on the unit ball, its extension `Ã(q)` to R^4,
//! the one-instanton charts and all parameter derivatives.
//!
//! Every chart formula is written once, generically over [`Scalar`], as a
//! function of `(x, p, lambda)`. Spatial and parameter derivatives are then
//! obtained by seeding dual numbers in the right slots.

use std::sync::Arc;

use thiserror::Error;

use crate::dual::{Dual, Grad4, Scalar, D1};
use crate::forms::jet::{self, Coef, Jet1};
use crate::forms::{Domain, Field, FormField, FormKernel, FormValue, KernelField, Point4};
use crate::liealg::{apply_ad, cross, qconj, qmul, AlgElement, GroupElement, LieError};

pub type Form1<S> = [[S; 3]; 4];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InstantonError {
    #[error("parameter outside the admissible set: {0}")]
    ParamSpace(String),
    #[error(transparent)]
    Lie(#[from] LieError),
}

/// Constants bounding the parameter set: `|p| < 1 - d0`, `0 < lambda < lambda0 < d0/2`,
/// `D1 eps < lambda^2 < D2 eps`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Constraints {
    pub d0: f64,
    pub lam0: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Default for Constraints {
    fn default() -> Self {
        Constraints {
            d0: 0.6,
            lam0: 0.29,
            d1: 0.5,
            d2: 2.0,
        }
    }
}

impl Constraints {
    pub fn validate(&self) -> Result<(), InstantonError> {
        if !(0.0 < 2.0 * self.lam0 && 2.0 * self.lam0 < self.d0 && self.d0 < 1.0) {
            return Err(InstantonError::ParamSpace(format!(
                "need 0 < 2 lambda0 < d0 < 1, got lambda0 = {}, d0 = {}",
                self.lam0, self.d0
            )));
        }
        if !(0.0 < self.d1 && self.d1 < self.d2) {
            return Err(InstantonError::ParamSpace(format!(
                "need 0 < D1 < D2, got {} and {}",
                self.d1, self.d2
            )));
        }
        Ok(())
    }
}

/// Gluing parameter `q = (p, [g], lambda)` together with `eps`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamQ {
    pub p: Point4,
    pub g: GroupElement,
    pub lam: f64,
    pub eps: f64,
}

impl ParamQ {
    pub fn new(
        p: Point4,
        g: GroupElement,
        lam: f64,
        eps: f64,
        c: &Constraints,
    ) -> Result<Self, InstantonError> {
        c.validate()?;
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(LieError::NonPositiveEpsilon(eps).into());
        }
        if !p.is_finite() || p.norm() >= 1.0 - c.d0 {
            return Err(InstantonError::ParamSpace(format!(
                "|p| = {} must be below 1 - d0 = {}",
                p.norm(),
                1.0 - c.d0
            )));
        }
        if !(lam > 0.0 && lam < c.lam0) {
            return Err(InstantonError::ParamSpace(format!(
                "lambda = {lam} must lie in (0, {})",
                c.lam0
            )));
        }
        let l2 = lam * lam;
        if !(c.d1 * eps < l2 && l2 < c.d2 * eps) {
            return Err(InstantonError::ParamSpace(format!(
                "lambda^2 = {l2} must lie in ({}, {})",
                c.d1 * eps,
                c.d2 * eps
            )));
        }
        Ok(ParamQ { p, g, lam, eps })
    }

    /// Point reached from `q` after time `t` along the coordinate vector
    /// `v = (dp_1..dp_4, dxi_1..dxi_3, dlambda)`; the group part moves by
    /// left multiplication with `exp(t sum v_{4+i} e_i)`.
    pub fn moved(&self, v: &[f64; 8], t: f64) -> ParamQ {
        let mut p = self.p;
        for k in 0..4 {
            p.0[k] += t * v[k];
        }
        let x = AlgElement::new(t * v[4], t * v[5], t * v[6]);
        ParamQ {
            p,
            g: crate::liealg::exp_map(&x) * self.g,
            lam: self.lam + t * v[7],
            eps: self.eps,
        }
    }
}

/// The cutoff profile: 1 on `[0, 1]`, 0 on `[2, inf)`, a degree-7 smoothstep
/// between. Entries are the value and the first three derivatives in `t`.
pub fn profile(t: f64) -> [f64; 4] {
    if t <= 1.0 {
        return [1.0, 0.0, 0.0, 0.0];
    }
    if t >= 2.0 {
        return [0.0; 4];
    }
    let u = t - 1.0;
    let u2 = u * u;
    let u3 = u2 * u;
    [
        1.0 - u3 * u * (35.0 - 84.0 * u + 70.0 * u2 - 20.0 * u3),
        -140.0 * u3 * (1.0 - u).powi(3),
        -420.0 * u2 * (1.0 - u).powi(2) * (1.0 - 2.0 * u),
        -840.0 * u * (1.0 - u) * (1.0 - 5.0 * u + 5.0 * u2),
    ]
}

/// `beta(t)` for a generic scalar.
#[inline]
pub fn beta<S: Scalar>(t: S) -> S {
    let tr = t.re();
    if tr <= 1.0 {
        return S::one();
    }
    if tr >= 2.0 {
        return S::zero();
    }
    let u = t - S::one();
    let u2 = u * u;
    let u4 = u2 * u2;
    let poly = S::cst(35.0) - u.scale(84.0) + u2.scale(70.0) - (u2 * u).scale(20.0);
    S::one() - u4 * poly
}

#[inline]
fn norm2<S: Scalar>(y: &[S; 4]) -> S {
    y[0] * y[0] + y[1] * y[1] + y[2] * y[2] + y[3] * y[3]
}

/// `beta(|y| / s)`; branches on the value so no square root is taken near `y = 0`.
#[inline]
pub fn beta_ball<S: Scalar>(y: &[S; 4], s: S) -> S {
    let r2 = norm2(y);
    let (r2v, sv) = (r2.re(), s.re());
    if r2v <= sv * sv {
        return S::one();
    }
    if r2v >= 4.0 * sv * sv {
        return S::zero();
    }
    beta(r2.sqrt() / s)
}

/// Value and spatial derivatives up to order three of `beta((x - p)/s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CutoffJet {
    pub value: f64,
    pub grad: [f64; 4],
    pub hess: [[f64; 4]; 4],
    pub third: [[[f64; 4]; 4]; 4],
}

/// Cutoff `beta_{s,p}(x) = beta(|x - p| / s)` with derivatives.
pub fn cutoff(s: f64, p: &Point4, x: &Point4) -> CutoffJet {
    let y = |k: usize| x.0[k] - p.0[k];
    let mut out = CutoffJet {
        value: beta_ball(&[y(0), y(1), y(2), y(3)], s),
        grad: [0.0; 4],
        hess: [[0.0; 4]; 4],
        third: [[[0.0; 4]; 4]; 4],
    };
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                type T3 = D1<D1<D1<f64>>>;
                let mut ys = [T3::cst(0.0); 4];
                for k in 0..4 {
                    let l1 = D1::seeded(y(k), 0, if k == a { 1.0 } else { 0.0 });
                    let l2 = D1::seeded(l1, 0, D1::cst(if k == b { 1.0 } else { 0.0 }));
                    ys[k] = D1::seeded(l2, 0, Scalar::cst(if k == c { 1.0 } else { 0.0 }));
                }
                let v = beta_ball(&ys, T3::cst(s));
                out.third[a][b][c] = v.eps[0].eps[0].eps[0];
                if c == 0 {
                    out.hess[a][b] = v.re.eps[0].eps[0];
                    if b == 0 {
                        out.grad[a] = v.re.re.eps[0];
                    }
                }
            }
        }
    }
    out
}

#[inline]
fn quat_units<S: Scalar>(mu: usize) -> [S; 4] {
    let mut u = [S::zero(); 4];
    u[mu] = S::one();
    u
}

/// `I^1_{lambda,p}` as e-coefficients, with `y = x - p`:
/// component `mu` is `2 Im(y conj(u_mu)) / (lambda^2 + |y|^2)`.
pub fn i1<S: Scalar>(y: &[S; 4], lam: S) -> Form1<S> {
    let den = (lam * lam + norm2(y)).recip().scale(2.0);
    let mut out = [[S::zero(); 3]; 4];
    for (mu, o) in out.iter_mut().enumerate() {
        let q = qmul(y, &qconj(&quat_units::<S>(mu)));
        *o = [q[1] * den, q[2] * den, q[3] * den];
    }
    out
}

/// `I^2_{lambda,p}`: component `mu` is `2 lambda^2 Im(conj(y) u_mu) / (|y|^2 (lambda^2 + |y|^2))`.
pub fn i2<S: Scalar>(y: &[S; 4], lam: S) -> Form1<S> {
    let r2 = norm2(y);
    let l2 = lam * lam;
    let f = (l2 / (r2 * (l2 + r2))).scale(2.0);
    let yc = qconj(y);
    let mut out = [[S::zero(); 3]; 4];
    for (mu, o) in out.iter_mut().enumerate() {
        let q = qmul(&yc, &quat_units::<S>(mu));
        *o = [q[1] * f, q[2] * f, q[3] * f];
    }
    out
}

/// `Ad(q) v` for a generic unit quaternion.
pub fn ad_quat<S: Scalar>(q: &[S; 4], v: &[S; 3]) -> [S; 3] {
    let vq = [S::zero(), v[0], v[1], v[2]];
    let r = qmul(&qmul(q, &vq), &qconj(q));
    [r[1], r[2], r[3]]
}

/// Smooth compactly supported stand-in for the background minimiser:
/// `phi(|x|^2) (M_mu + L_{mu nu} x^nu)` with `phi(s) = (1 - s/R^2)^4` for `s < R^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Background {
    pub m: [[f64; 3]; 4],
    pub l: [[[f64; 3]; 4]; 4],
    pub radius: f64,
}

impl Default for Background {
    fn default() -> Self {
        let m = [
            [0.30, -0.20, 0.10],
            [-0.15, 0.25, 0.20],
            [0.10, 0.05, -0.30],
            [0.20, -0.10, 0.15],
        ];
        let mut l = [[[0.0; 3]; 4]; 4];
        for mu in 0..4 {
            for nu in 0..4 {
                for a in 0..3 {
                    // fixed pseudo-random pattern, no symmetry between mu and nu
                    let k = (7 * mu + 3 * nu + 5 * a + mu * nu * a) % 11;
                    l[mu][nu][a] = 0.05 * (k as f64 - 5.0);
                }
            }
        }
        Background { m, l, radius: 1.5 }
    }
}

impl Background {
    pub fn zero() -> Self {
        Background {
            m: [[0.0; 3]; 4],
            l: [[[0.0; 3]; 4]; 4],
            radius: 1.5,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.m.iter().flatten().all(|v| *v == 0.0)
            && self.l.iter().flatten().flatten().all(|v| *v == 0.0)
    }

    pub fn eval<S: Scalar>(&self, x: &[S; 4]) -> Form1<S> {
        let mut out = [[S::zero(); 3]; 4];
        let s = norm2(x);
        let r2 = self.radius * self.radius;
        if s.re() >= r2 {
            return out;
        }
        let t = S::one() - s.scale(1.0 / r2);
        let t2 = t * t;
        let phi = t2 * t2;
        for mu in 0..4 {
            for a in 0..3 {
                let mut v = S::cst(self.m[mu][a]);
                for nu in 0..4 {
                    v = v + x[nu].scale(self.l[mu][nu][a]);
                }
                out[mu][a] = phi * v;
            }
        }
        out
    }
}

/// How the boundary correction `P I^2` is realised; `h = I^2 - P I^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Pi2Strategy {
    /// `P I^2 = 0`, so `h = I^2`.
    Zero,
    /// `P I^2 = beta_{rho,p} I^2`, so `h = (1 - beta_{rho,p}) I^2` is `O(lambda^2)`
    /// with bounded derivatives and `A(q)` equals the background on the boundary.
    CutoffTail { rho: f64 },
}

impl Pi2Strategy {
    pub fn default_for(c: &Constraints) -> Self {
        Pi2Strategy::CutoffTail { rho: 0.5 * c.d0 }
    }

    pub fn h<S: Scalar>(&self, y: &[S; 4], lam: S) -> Form1<S> {
        let i = i2(y, lam);
        match *self {
            Pi2Strategy::Zero => i,
            Pi2Strategy::CutoffTail { rho } => {
                let w = S::one() - beta_ball(y, S::cst(rho));
                i.map(|c| c.map(|v| v * w))
            }
        }
    }

    pub fn pi2<S: Scalar>(&self, y: &[S; 4], lam: S) -> Form1<S> {
        match *self {
            Pi2Strategy::Zero => [[S::zero(); 3]; 4],
            Pi2Strategy::CutoffTail { rho } => {
                let w = beta_ball(y, S::cst(rho));
                i2(y, lam).map(|c| c.map(|v| v * w))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Model {
    pub bg: Background,
    pub pi2: Pi2Strategy,
}

impl Model {
    pub fn new(bg: Background, pi2: Pi2Strategy) -> Self {
        Model { bg, pi2 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    /// `A(q)` on the unit ball.
    Glued,
    /// `Ã(q)` on R^4.
    Extended,
    /// The trivial connection on R^4, carried with the charts of `q`.
    Flat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Chart {
    /// `B_{lambda/4}(p)`, gauge of `I^1`.
    Inner,
    /// Complement of `p`, gauge of `I^2`.
    Outer,
}

/// One of the eight parameter directions, in basis order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamDir {
    P(usize),
    Xi(usize),
    Lambda,
}

impl ParamDir {
    pub const ALL: [ParamDir; 8] = [
        ParamDir::P(0),
        ParamDir::P(1),
        ParamDir::P(2),
        ParamDir::P(3),
        ParamDir::Xi(1),
        ParamDir::Xi(2),
        ParamDir::Xi(3),
        ParamDir::Lambda,
    ];

    pub fn index(&self) -> usize {
        match *self {
            ParamDir::P(i) => i,
            ParamDir::Xi(i) => 3 + i,
            ParamDir::Lambda => 7,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            ParamDir::P(i) => format!("p{}", i + 1),
            ParamDir::Xi(i) => format!("xi{i}"),
            ParamDir::Lambda => "lambda".into(),
        }
    }
}

/// A connection given by two chart formulas glued at `|x - p| = lambda/4`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChartedConnection {
    pub q: ParamQ,
    pub model: Model,
    pub kind: Kind,
    ad: [[f64; 3]; 3],
}

/// Value and first spatial derivatives of a connection and of its eight
/// parameter derivatives at one point, in one chart.
#[derive(Clone, Copy, Debug)]
pub struct TangentJets {
    pub a: Jet1,
    pub d: [Jet1; 8],
}

impl ChartedConnection {
    pub fn new(q: ParamQ, model: Model, kind: Kind) -> Self {
        ChartedConnection {
            q,
            model,
            kind,
            ad: q.g.ad_matrix(),
        }
    }

    pub fn with_q(&self, q: ParamQ) -> Self {
        ChartedConnection::new(q, self.model, self.kind)
    }

    pub fn extended(&self) -> Self {
        ChartedConnection::new(self.q, self.model, Kind::Extended)
    }

    pub fn split_radius(&self) -> f64 {
        0.25 * self.q.lam
    }

    pub fn chart_at(&self, x: &Point4) -> Chart {
        if x.dist(&self.q.p) < self.split_radius() {
            Chart::Inner
        } else {
            Chart::Outer
        }
    }

    pub fn domain(&self) -> Domain {
        match self.kind {
            Kind::Glued => Domain::Ball {
                center: Point4::default(),
                radius: 1.0,
            },
            Kind::Extended | Kind::Flat => Domain::R4,
        }
    }

    /// The algebra part `K` in `A = bg_term + (1/eps) Ad(g) K` for the chart.
    pub fn core<S: Scalar>(&self, chart: Chart, y: &[S; 4], lam: S) -> Form1<S> {
        match (chart, self.kind) {
            (_, Kind::Flat) => [[S::zero(); 3]; 4],
            (Chart::Inner, _) => i1(y, lam),
            (Chart::Outer, Kind::Extended) => i2(y, lam),
            (Chart::Outer, Kind::Glued) => {
                let i = i2(y, lam);
                let h = self.model.pi2.h(y, lam);
                let w = S::one() - beta_ball(y, lam.scale(0.25));
                let mut out = i;
                for mu in 0..4 {
                    for a in 0..3 {
                        out[mu][a] = i[mu][a] - w * h[mu][a];
                    }
                }
                out
            }
        }
    }

    /// `(1 - beta_{lambda,p}) bg` in the outer chart of the glued connection.
    pub fn bg_term<S: Scalar>(&self, chart: Chart, x: &[S; 4], y: &[S; 4], lam: S) -> Form1<S> {
        if chart == Chart::Inner || self.kind != Kind::Glued || self.model.bg.is_zero() {
            return [[S::zero(); 3]; 4];
        }
        let w = S::one() - beta_ball(y, lam);
        if w.re() == 0.0 {
            return [[S::zero(); 3]; 4];
        }
        self.model.bg.eval(x).map(|c| c.map(|v| v * w))
    }

    /// Chart formula as a function of `(x, p, lambda)`.
    pub fn eval_generic<S: Scalar>(&self, chart: Chart, x: &[S; 4], p: &[S; 4], lam: S) -> Form1<S> {
        let y = [x[0] - p[0], x[1] - p[1], x[2] - p[2], x[3] - p[3]];
        let k = self.core(chart, &y, lam);
        let mut out = self.bg_term(chart, x, &y, lam);
        let ie = 1.0 / self.q.eps;
        for mu in 0..4 {
            let r = apply_ad(&self.ad, &k[mu]);
            for a in 0..3 {
                out[mu][a] = out[mu][a] + r[a].scale(ie);
            }
        }
        out
    }

    fn params<S: Scalar>(&self) -> ([S; 4], S) {
        (
            [
                S::cst(self.q.p.0[0]),
                S::cst(self.q.p.0[1]),
                S::cst(self.q.p.0[2]),
                S::cst(self.q.p.0[3]),
            ],
            S::cst(self.q.lam),
        )
    }

    /// Chart formula at a generic point with the parameters held fixed.
    pub fn eval_at<S: Scalar>(&self, chart: Chart, x: &[S; 4]) -> Form1<S> {
        let (p, lam) = self.params::<S>();
        self.eval_generic(chart, x, &p, lam)
    }

    pub fn value(&self, chart: Chart, x: &Point4) -> [Coef; 4] {
        self.eval_at(chart, &x.0)
    }

    pub fn jet(&self, chart: Chart, x: &Point4) -> Jet1 {
        let xs = crate::dual::grad_point(x.0);
        Jet1::from_grad(&self.eval_at(chart, &xs))
    }

    /// Curvature `dA + (eps/2)[A ∧ A]` in the given chart.
    pub fn curvature(&self, chart: Chart, x: &Point4) -> [Coef; 6] {
        jet::curvature(&self.jet(chart, x), self.q.eps)
    }

    /// `|F|^2` with the chart chosen by position.
    pub fn energy_density(&self, x: &Point4) -> f64 {
        let f = self.curvature(self.chart_at(x), x);
        jet::ip2(&f, &f)
    }

    /// Transition `g g_{12,p}(x) g^{-1}`: sections satisfy `alpha_inner = Ad(h) alpha_outer`.
    pub fn transition(&self, x: &Point4) -> GroupElement {
        let y = [
            x.0[0] - self.q.p.0[0],
            x.0[1] - self.q.p.0[1],
            x.0[2] - self.q.p.0[2],
            x.0[3] - self.q.p.0[3],
        ];
        let u = GroupElement { q: unit_quat(&y) };
        self.q.g * u * self.q.g.inverse()
    }

    /// Generic transition quaternion at `x`.
    pub fn transition_generic<S: Scalar>(&self, x: &[S; 4]) -> [S; 4] {
        let (p, _) = self.params::<S>();
        let y = [x[0] - p[0], x[1] - p[1], x[2] - p[2], x[3] - p[3]];
        let u = unit_quat(&y);
        let g = self.q.g.q.map(S::cst);
        qmul(&qmul(&g, &u), &qconj(&g))
    }

    /// Connection value plus the eight parameter-derivative jets.
    pub fn tangent_jets(&self, chart: Chart, x: &Point4) -> TangentJets {
        type T = Dual<Grad4, 5>;
        let xs: [T; 4] = std::array::from_fn(|k| T::constant(Grad4::var(x.0[k], k)));
        let ps: [T; 4] = std::array::from_fn(|k| T::var(Grad4::cst(self.q.p.0[k]), k));
        let lam = T::var(Grad4::cst(self.q.lam), 4);
        let y = [xs[0] - ps[0], xs[1] - ps[1], xs[2] - ps[2], xs[3] - ps[3]];
        let k = self.core(chart, &y, lam);
        let bgt = self.bg_term(chart, &xs, &y, lam);
        let ie = 1.0 / self.q.eps;
        let mut a = [[T::cst(0.0); 3]; 4];
        let mut kr = [[Grad4::cst(0.0); 3]; 4];
        for mu in 0..4 {
            let r = apply_ad(&self.ad, &k[mu]);
            for c in 0..3 {
                a[mu][c] = bgt[mu][c] + r[c].scale(ie);
                kr[mu][c] = r[c].re.scale(ie);
            }
        }
        let pick = |slot: Option<usize>| -> Jet1 {
            let c: [[Grad4; 3]; 4] = std::array::from_fn(|mu| {
                std::array::from_fn(|cc| match slot {
                    None => a[mu][cc].re,
                    Some(s) => a[mu][cc].eps[s],
                })
            });
            Jet1::from_grad(&c)
        };
        let core = Jet1::from_grad(&kr);
        let mut d = [Jet1::ZERO; 8];
        for (i, di) in d.iter_mut().enumerate().take(4) {
            *di = pick(Some(i));
        }
        for i in 0..3 {
            let mut e = [0.0; 3];
            e[i] = 1.0;
            d[4 + i] = core.bracket_left(&e);
        }
        d[7] = pick(Some(4));
        TangentJets { a: pick(None), d }
    }

    /// Second derivative in `p_1` of the chart formula, with its spatial gradient.
    pub fn d2_p1_jet(&self, chart: Chart, x: &Point4) -> Jet1 {
        type T = D1<D1<Grad4>>;
        let xs: [T; 4] = std::array::from_fn(|k| T::cst(0.0) + T::constant(D1::constant(Grad4::var(x.0[k], k))));
        let mut ps: [T; 4] = std::array::from_fn(|k| T::cst(self.q.p.0[k]));
        let inner = D1::seeded(Grad4::cst(self.q.p.0[0]), 0, Grad4::cst(1.0));
        ps[0] = D1::seeded(inner, 0, D1::cst(1.0));
        let v = self.eval_generic(chart, &xs, &ps, T::cst(self.q.lam));
        let c: [[Grad4; 3]; 4] = std::array::from_fn(|mu| std::array::from_fn(|a| v[mu][a].eps[0].eps[0]));
        Jet1::from_grad(&c)
    }

    /// Chart-wise field of the connection as a [`FormField`].
    pub fn field(&self) -> ChartedField {
        ChartedField::new(
            Arc::new(KernelField(ConnKernel {
                conn: *self,
                chart: Chart::Inner,
            })),
            Arc::new(KernelField(ConnKernel {
                conn: *self,
                chart: Chart::Outer,
            })),
            self.q.p,
            self.split_radius(),
            self.domain(),
        )
    }

    pub fn chart_field(&self, chart: Chart) -> Field {
        Arc::new(KernelField(ConnKernel { conn: *self, chart }))
    }

    /// Curvature 2-form of one chart as a field with analytic partials.
    pub fn curvature_field(&self, chart: Chart) -> Field {
        Arc::new(KernelField(CurvKernel { conn: *self, chart }))
    }

    /// `∂A/∂(dir)` chart-wise, with analytic spatial partials.
    pub fn d_param_field(&self, dir: ParamDir) -> ChartedField {
        let mk = |chart| -> Field {
            Arc::new(KernelField(DerivKernel {
                conn: *self,
                chart,
                dir,
            }))
        };
        ChartedField::new(
            mk(Chart::Inner),
            mk(Chart::Outer),
            self.q.p,
            self.split_radius(),
            self.domain(),
        )
    }

    /// `∂²A/∂p_1²` chart-wise, with analytic spatial partials.
    pub fn d2_p1_field(&self) -> ChartedField {
        let mk = |chart| -> Field { Arc::new(KernelField(D2Kernel { conn: *self, chart })) };
        ChartedField::new(
            mk(Chart::Inner),
            mk(Chart::Outer),
            self.q.p,
            self.split_radius(),
            self.domain(),
        )
    }

    /// Parameter derivative at a point, evaluated from the explicit term-by-term
    /// product-rule expansion (cutoff derivative times instanton, and so on).
    pub fn d_param_expanded(&self, dir: ParamDir, chart: Chart, x: &Point4) -> [Coef; 4] {
        if self.kind == Kind::Flat {
            return [[0.0; 3]; 4];
        }
        let y = sub4(&x.0, &self.q.p.0);
        let lam = self.q.lam;
        let ie = 1.0 / self.q.eps;
        let ad = |v: &Coef| apply_ad(&self.ad, v);
        // derivative of a generic (y, lambda) expression along dir; dy/dp_i = -e_i
        let dy = |f: &dyn Fn(&[D1<f64>; 4], D1<f64>) -> Form1<D1<f64>>| -> Form1<f64> {
            let (ys, l): ([D1<f64>; 4], D1<f64>) = match dir {
                ParamDir::P(i) => (
                    std::array::from_fn(|k| D1::seeded(y[k], 0, if k == i { -1.0 } else { 0.0 })),
                    D1::constant(lam),
                ),
                ParamDir::Lambda => (y.map(D1::constant), D1::var(lam, 0)),
                ParamDir::Xi(_) => (y.map(D1::constant), D1::constant(lam)),
            };
            f(&ys, l).map(|c| c.map(|v| v.eps[0]))
        };
        let ds = |s: f64| -> (f64, f64) {
            let v = dy(&|ys, l| {
                let b = beta_ball(ys, l.scale(s));
                [[b, D1::cst(0.0), D1::cst(0.0)]; 4]
            });
            (beta_ball(&y, lam * s), v[0][0])
        };
        let mut out = [[0.0; 3]; 4];
        match (dir, chart) {
            (ParamDir::Xi(i), _) => {
                let k = self.core(chart, &y, lam);
                let mut e = [0.0; 3];
                e[i - 1] = 1.0;
                for mu in 0..4 {
                    out[mu] = jet::scale3(ie, &cross(&e, &ad(&k[mu])));
                }
            }
            (_, Chart::Inner) => {
                let di = dy(&|ys, l| i1(ys, l));
                for mu in 0..4 {
                    out[mu] = jet::scale3(ie, &ad(&di[mu]));
                }
            }
            (_, Chart::Outer) if self.kind == Kind::Extended => {
                let di = dy(&|ys, l| i2(ys, l));
                for mu in 0..4 {
                    out[mu] = jet::scale3(ie, &ad(&di[mu]));
                }
            }
            (_, Chart::Outer) => {
                let (_, dbl) = ds(1.0);
                let (bq, dbq) = ds(0.25);
                let bg = self.model.bg.eval(&x.0);
                let i = i2(&y, lam);
                let di = dy(&|ys, l| i2(ys, l));
                let pi = self.model.pi2.pi2(&y, lam);
                let dpi = {
                    let s = self.model.pi2;
                    dy(&move |ys, l| s.pi2(ys, l))
                };
                for mu in 0..4 {
                    let mut t = jet::scale3(-dbl, &bg[mu]);
                    jet::axpy3(&mut t, ie * dbq, &ad(&i[mu]));
                    jet::axpy3(&mut t, ie * bq, &ad(&di[mu]));
                    jet::axpy3(&mut t, -ie * dbq, &ad(&pi[mu]));
                    jet::axpy3(&mut t, ie * (1.0 - bq), &ad(&dpi[mu]));
                    out[mu] = t;
                }
            }
        }
        out
    }

    /// `eps ∂²A/∂p_1²` in the outer chart from the explicit expansion
    /// `-eps ∂²beta_lambda bg + Ad(g)[∂²I² + ∂²beta_{lambda/4} h + 2 ∂beta_{lambda/4} ∂h - (1 - beta_{lambda/4}) ∂²h]`.
    pub fn eps_d2_p1_expanded(&self, x: &Point4) -> [Coef; 4] {
        if self.kind == Kind::Flat {
            return [[0.0; 3]; 4];
        }
        let y = sub4(&x.0, &self.q.p.0);
        let lam = self.q.lam;
        type T = D1<D1<f64>>;
        let ys: [T; 4] = std::array::from_fn(|k| {
            let d = if k == 0 { -1.0 } else { 0.0 };
            D1::seeded(D1::seeded(y[k], 0, d), 0, D1::cst(d))
        });
        let l = T::cst(lam);
        let bl = beta_ball(&ys, l);
        let bq = beta_ball(&ys, l.scale(0.25));
        let i = i2(&ys, l);
        let h = self.model.pi2.h(&ys, l);
        let bg = self.model.bg.eval(&x.0);
        let first = |v: T| v.re.eps[0];
        let second = |v: T| v.eps[0].eps[0];
        let mut out = [[0.0; 3]; 4];
        for mu in 0..4 {
            let mut core = [0.0; 3];
            for a in 0..3 {
                core[a] = second(i[mu][a]) + second(bq) * h[mu][a].re.re
                    + 2.0 * first(bq) * first(h[mu][a])
                    - (1.0 - bq.re.re) * second(h[mu][a]);
            }
            let mut t = apply_ad(&self.ad, &core);
            if self.kind == Kind::Glued {
                jet::axpy3(&mut t, -self.q.eps * second(bl), &bg[mu]);
            } else {
                t = apply_ad(&self.ad, &std::array::from_fn(|a| second(i[mu][a])));
            }
            out[mu] = t;
        }
        out
    }

    /// `b = Ã - A` as a chart-wise field (zero in the inner chart).
    pub fn difference_b(&self) -> ChartedField {
        let glued = ChartedConnection::new(self.q, self.model, Kind::Glued);
        ChartedField::new(
            Arc::new(KernelField(DiffKernel {
                glued,
                chart: Chart::Inner,
            })),
            Arc::new(KernelField(DiffKernel {
                glued,
                chart: Chart::Outer,
            })),
            self.q.p,
            self.split_radius(),
            glued.domain(),
        )
    }

    /// `Ã - A` at a point in the given chart.
    pub fn difference_at<S: Scalar>(&self, chart: Chart, x: &[S; 4]) -> Form1<S> {
        let glued = ChartedConnection::new(self.q, self.model, Kind::Glued);
        let ext = glued.extended();
        let a = glued.eval_at(chart, x);
        let t = ext.eval_at(chart, x);
        std::array::from_fn(|mu| std::array::from_fn(|c| t[mu][c] - a[mu][c]))
    }
}

fn sub4(a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]]
}

/// `y / |y|` as a quaternion.
pub fn unit_quat<S: Scalar>(y: &[S; 4]) -> [S; 4] {
    let n = norm2(y).sqrt().recip();
    [y[0] * n, y[1] * n, y[2] * n, y[3] * n]
}

struct ConnKernel {
    conn: ChartedConnection,
    chart: Chart,
}

impl FormKernel for ConnKernel {
    fn degree(&self) -> usize {
        1
    }
    fn domain(&self) -> Domain {
        self.conn.domain()
    }
    fn eval<S: Scalar>(&self, x: [S; 4]) -> Vec<[S; 3]> {
        self.conn.eval_at(self.chart, &x).to_vec()
    }
}

struct CurvKernel {
    conn: ChartedConnection,
    chart: Chart,
}

impl FormKernel for CurvKernel {
    fn degree(&self) -> usize {
        2
    }
    fn domain(&self) -> Domain {
        self.conn.domain()
    }
    fn eval<S: Scalar>(&self, x: [S; 4]) -> Vec<[S; 3]> {
        let xs: [Dual<S, 4>; 4] = std::array::from_fn(|k| Dual::var(x[k], k));
        let a = self.conn.eval_at(self.chart, &xs);
        let eps = self.conn.q.eps;
        jet::PAIRS
            .iter()
            .map(|&(m, n)| {
                let br = cross(&a[m].map(|v| v.re), &a[n].map(|v| v.re));
                std::array::from_fn(|c| a[n][c].eps[m] - a[m][c].eps[n] + br[c].scale(eps))
            })
            .collect()
    }
}

struct DerivKernel {
    conn: ChartedConnection,
    chart: Chart,
    dir: ParamDir,
}

impl FormKernel for DerivKernel {
    fn degree(&self) -> usize {
        1
    }
    fn domain(&self) -> Domain {
        self.conn.domain()
    }
    fn eval<S: Scalar>(&self, x: [S; 4]) -> Vec<[S; 3]> {
        let c = &self.conn;
        if let ParamDir::Xi(i) = self.dir {
            let (p, lam) = c.params::<S>();
            let y = [x[0] - p[0], x[1] - p[1], x[2] - p[2], x[3] - p[3]];
            let k = c.core(self.chart, &y, lam);
            let mut e = [S::zero(); 3];
            e[i - 1] = S::cst(1.0 / c.q.eps);
            return k.iter().map(|v| cross(&e, &apply_ad(&c.ad, v))).collect();
        }
        let xs: [D1<S>; 4] = x.map(D1::constant);
        let mut ps: [D1<S>; 4] = c.q.p.0.map(D1::cst);
        let mut lam = D1::cst(c.q.lam);
        match self.dir {
            ParamDir::P(i) => ps[i] = D1::var(S::cst(c.q.p.0[i]), 0),
            ParamDir::Lambda => lam = D1::var(S::cst(c.q.lam), 0),
            ParamDir::Xi(_) => unreachable!(),
        }
        c.eval_generic(self.chart, &xs, &ps, lam)
            .iter()
            .map(|v| v.map(|d| d.eps[0]))
            .collect()
    }
}

struct D2Kernel {
    conn: ChartedConnection,
    chart: Chart,
}

impl FormKernel for D2Kernel {
    fn degree(&self) -> usize {
        1
    }
    fn domain(&self) -> Domain {
        self.conn.domain()
    }
    fn eval<S: Scalar>(&self, x: [S; 4]) -> Vec<[S; 3]> {
        let c = &self.conn;
        let xs: [D1<D1<S>>; 4] = x.map(|v| D1::constant(D1::constant(v)));
        let mut ps: [D1<D1<S>>; 4] = c.q.p.0.map(D1::cst);
        let inner = D1::seeded(S::cst(c.q.p.0[0]), 0, S::one());
        ps[0] = D1::seeded(inner, 0, D1::cst(1.0));
        c.eval_generic(self.chart, &xs, &ps, D1::cst(c.q.lam))
            .iter()
            .map(|v| v.map(|d| d.eps[0].eps[0]))
            .collect()
    }
}

struct DiffKernel {
    glued: ChartedConnection,
    chart: Chart,
}

impl FormKernel for DiffKernel {
    fn degree(&self) -> usize {
        1
    }
    fn domain(&self) -> Domain {
        self.glued.domain()
    }
    fn eval<S: Scalar>(&self, x: [S; 4]) -> Vec<[S; 3]> {
        self.glued.difference_at(self.chart, &x).to_vec()
    }
}

/// Two chart representatives glued at `|x - p| = r_split`.
#[derive(Clone)]
pub struct ChartedField {
    pub inner: Field,
    pub outer: Field,
    pub p: Point4,
    pub r_split: f64,
    pub domain: Domain,
}

impl ChartedField {
    pub fn new(inner: Field, outer: Field, p: Point4, r_split: f64, domain: Domain) -> Self {
        ChartedField {
            inner,
            outer,
            p,
            r_split,
            domain,
        }
    }

    pub fn chart_at(&self, x: &Point4) -> Chart {
        if x.dist(&self.p) < self.r_split {
            Chart::Inner
        } else {
            Chart::Outer
        }
    }

    pub fn chart(&self, c: Chart) -> &Field {
        match c {
            Chart::Inner => &self.inner,
            Chart::Outer => &self.outer,
        }
    }
}

impl FormField for ChartedField {
    fn degree(&self) -> usize {
        self.outer.degree()
    }
    fn domain(&self) -> Domain {
        self.domain
    }
    fn value_at(&self, x: &Point4) -> FormValue {
        self.chart(self.chart_at(x)).value_at(x)
    }
    fn analytic_partial(&self, x: &Point4, dirs: &[usize]) -> Option<FormValue> {
        self.chart(self.chart_at(x)).analytic_partial(x, dirs)
    }
}

/// `I^1_{lambda,p}` as a field on R^4.
pub fn i1_form(lam: f64, p: Point4) -> Field {
    Arc::new(KernelField(InstantonKernel { lam, p, which: 1 }))
}

/// `I^2_{lambda,p}` as a field on R^4 minus `p`.
pub fn i2_form(lam: f64, p: Point4) -> Field {
    Arc::new(KernelField(InstantonKernel { lam, p, which: 2 }))
}

struct InstantonKernel {
    lam: f64,
    p: Point4,
    which: u8,
}

impl FormKernel for InstantonKernel {
    fn degree(&self) -> usize {
        1
    }
    fn domain(&self) -> Domain {
        if self.which == 1 {
            Domain::R4
        } else {
            Domain::PuncturedR4 { center: self.p }
        }
    }
    fn eval<S: Scalar>(&self, x: [S; 4]) -> Vec<[S; 3]> {
        let y: [S; 4] = std::array::from_fn(|k| x[k] - S::cst(self.p.0[k]));
        let l = S::cst(self.lam);
        if self.which == 1 {
            i1(&y, l).to_vec()
        } else {
            i2(&y, l).to_vec()
        }
    }
}

/// `A = 0`, with the chart layout of `q`.
pub fn flat_connection(q: ParamQ) -> ChartedConnection {
    ChartedConnection::new(
        q,
        Model::new(Background::zero(), Pi2Strategy::Zero),
        Kind::Flat,
    )
}

/// Glued connection `A(q)`.
pub fn glued_connection(q: ParamQ, model: Model) -> ChartedConnection {
    ChartedConnection::new(q, model, Kind::Glued)
}

/// Extension `Ã(q)` on R^4.
pub fn extended_connection(q: ParamQ) -> ChartedConnection {
    ChartedConnection::new(
        q,
        Model::new(Background::zero(), Pi2Strategy::Zero),
        Kind::Extended,
    )
}

#[cfg(test)]
mod tests;
