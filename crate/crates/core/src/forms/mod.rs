//! Exterior calculus for su(2)-valued forms on flat R^4 and polar quadrature.
//!
//! Forms are stored on increasing multi-indices in lexicographic order, with
//! the orientation `dx0 ∧ dx1 ∧ dx2 ∧ dx3 = vol`. Fields are closed-form
//! evaluators; partial derivatives come from dual-number kernels when the
//! field provides them and from Richardson-extrapolated central differences
//! otherwise.

pub mod jet;
pub mod quadrature;

use std::io::Write;
use std::sync::Arc;

use thiserror::Error;

use crate::dual::{Scalar, D1};
use crate::liealg::{bracket, AlgElement};

pub use quadrature::{
    ball_rule, ball_rule_with, integrate, integrate_indexed, integrate_many, pairwise_sum,
    unit_ball_rule, weight_fn, weighted_r4_rule,
    AngularOrder, QuadratureRule, RuleConfig,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormError {
    #[error("degree mismatch: {0}")]
    DegreeMismatch(String),
    #[error("point {0:?} lies outside the field domain")]
    OutsideDomain([f64; 4]),
    #[error("non-finite integrand at node {index} ({x:?})")]
    NonFinite { index: usize, x: [f64; 4] },
    #[error("quadrature tolerance {tol:e} not reached within node budget (last change {err:e})")]
    Budget { tol: f64, err: f64 },
    #[error("integral over the unbounded region does not converge (tail share {share:e})")]
    TailNotConvergent { share: f64 },
    #[error("invalid rule parameters: {0}")]
    BadRule(String),
}

/// A point of R^4.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Point4(pub [f64; 4]);

impl Point4 {
    pub fn new(x0: f64, x1: f64, x2: f64, x3: f64) -> Self {
        Point4([x0, x1, x2, x3])
    }
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
    pub fn dist(&self, o: &Point4) -> f64 {
        (0..4).map(|k| (self.0[k] - o.0[k]).powi(2)).sum::<f64>().sqrt()
    }
    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
    pub fn shifted(&self, dir: usize, h: f64) -> Point4 {
        let mut y = self.0;
        y[dir] += h;
        Point4(y)
    }
}

/// Where a field may be evaluated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Domain {
    R4,
    PuncturedR4 { center: Point4 },
    Ball { center: Point4, radius: f64 },
    PuncturedBall { center: Point4, radius: f64, hole: Point4 },
    Annulus { center: Point4, inner: f64, outer: f64 },
}

impl Domain {
    pub fn contains(&self, x: &Point4) -> bool {
        if !x.is_finite() {
            return false;
        }
        match *self {
            Domain::R4 => true,
            Domain::PuncturedR4 { center } => x.dist(&center) > 0.0,
            Domain::Ball { center, radius } => x.dist(&center) < radius,
            Domain::PuncturedBall {
                center,
                radius,
                hole,
            } => x.dist(&center) < radius && x.dist(&hole) > 0.0,
            Domain::Annulus {
                center,
                inner,
                outer,
            } => {
                let r = x.dist(&center);
                r > inner && r < outer
            }
        }
    }
}

/// Binomial coefficient `C(4, k)`.
pub fn component_count(k: usize) -> usize {
    [1, 4, 6, 4, 1][k]
}

/// Increasing multi-indices of length `k` in storage order.
pub fn multi_indices(k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for mask in 0u32..16 {
        if mask.count_ones() as usize == k {
            out.push((0..4).filter(|i| mask & (1 << i) != 0).collect::<Vec<_>>());
        }
    }
    out.sort();
    out
}

fn index_position(idx: &[usize]) -> usize {
    multi_indices(idx.len())
        .iter()
        .position(|m| m.as_slice() == idx)
        .expect("sorted multi-index")
}

/// Sign of the permutation that sorts the concatenation of `a` and `b`, or
/// `None` if they share an index.
fn merge_sign(a: &[usize], b: &[usize]) -> Option<(f64, Vec<usize>)> {
    let mut all: Vec<usize> = a.iter().chain(b.iter()).copied().collect();
    let mut inv = 0;
    for i in 0..all.len() {
        for j in i + 1..all.len() {
            if all[i] == all[j] {
                return None;
            }
            if all[i] > all[j] {
                inv += 1;
            }
        }
    }
    all.sort();
    Some((if inv % 2 == 0 { 1.0 } else { -1.0 }, all))
}

/// Value of a k-form at a point: one Lie algebra element per multi-index.
#[derive(Clone, Debug, PartialEq)]
pub struct FormValue {
    pub degree: usize,
    pub comps: Vec<AlgElement>,
}

impl FormValue {
    pub fn zero(degree: usize) -> Self {
        FormValue {
            degree,
            comps: vec![AlgElement::ZERO; component_count(degree)],
        }
    }

    pub fn new(degree: usize, comps: Vec<AlgElement>) -> Result<Self, FormError> {
        if degree > 4 || comps.len() != component_count(degree) {
            return Err(FormError::DegreeMismatch(format!(
                "{} components for a {}-form",
                comps.len(),
                degree
            )));
        }
        Ok(FormValue { degree, comps })
    }

    /// Single-term form `coef dx^{idx}` (index list need not be sorted).
    pub fn monomial(idx: &[usize], coef: AlgElement) -> Self {
        let (sign, sorted) = merge_sign(idx, &[]).expect("distinct indices");
        let mut f = FormValue::zero(idx.len());
        f.comps[index_position(&sorted)] = coef.scale(sign);
        f
    }

    pub fn component(&self, idx: &[usize]) -> AlgElement {
        self.comps[index_position(idx)]
    }

    pub fn add(&self, o: &FormValue) -> FormValue {
        assert_eq!(self.degree, o.degree);
        FormValue {
            degree: self.degree,
            comps: self
                .comps
                .iter()
                .zip(o.comps.iter())
                .map(|(a, b)| *a + *b)
                .collect(),
        }
    }

    pub fn scale(&self, k: f64) -> FormValue {
        FormValue {
            degree: self.degree,
            comps: self.comps.iter().map(|a| a.scale(k)).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.comps
            .iter()
            .flat_map(|a| a.x.iter())
            .fold(0.0f64, |m, v| if v.is_nan() || m.is_nan() { f64::NAN } else { m.max(v.abs()) })
    }

    /// Pointwise inner product with the fibre metric `-tr`.
    pub fn inner(&self, o: &FormValue) -> f64 {
        self.comps
            .iter()
            .zip(o.comps.iter())
            .map(|(a, b)| a.tr_inner(b))
            .sum()
    }
}

/// Hodge star for the flat metric and orientation `dx0∧dx1∧dx2∧dx3`.
pub fn hodge_star(v: &FormValue) -> FormValue {
    let k = v.degree;
    let mut out = FormValue::zero(4 - k);
    for (pos, idx) in multi_indices(k).iter().enumerate() {
        let comp: Vec<usize> = (0..4).filter(|i| !idx.contains(i)).collect();
        let (sign, _) = merge_sign(idx, &comp).expect("complementary");
        out.comps[index_position(&comp)] += v.comps[pos].scale(sign);
    }
    out
}

/// Wedge product with an arbitrary bilinear pairing of coefficients.
pub fn wedge_with(
    a: &FormValue,
    b: &FormValue,
    op: impl Fn(&AlgElement, &AlgElement) -> AlgElement,
) -> Result<FormValue, FormError> {
    if a.degree + b.degree > 4 {
        return Err(FormError::DegreeMismatch(format!(
            "wedge of degrees {} and {}",
            a.degree, b.degree
        )));
    }
    let mut out = FormValue::zero(a.degree + b.degree);
    let (ia, ib) = (multi_indices(a.degree), multi_indices(b.degree));
    for (pa, i) in ia.iter().enumerate() {
        for (pb, j) in ib.iter().enumerate() {
            if let Some((sign, merged)) = merge_sign(i, j) {
                let c = op(&a.comps[pa], &b.comps[pb]).scale(sign);
                out.comps[index_position(&merged)] += c;
            }
        }
    }
    Ok(out)
}

/// `[a ∧ b]` pointwise.
pub fn wedge_bracket_values(a: &FormValue, b: &FormValue) -> Result<FormValue, FormError> {
    wedge_with(a, b, bracket)
}

/// `dx^i ∧ w`.
pub fn dx_wedge(i: usize, w: &FormValue) -> FormValue {
    let mut out = FormValue::zero(w.degree + 1);
    for (p, idx) in multi_indices(w.degree).iter().enumerate() {
        if let Some((sign, merged)) = merge_sign(&[i], idx) {
            out.comps[index_position(&merged)] += w.comps[p].scale(sign);
        }
    }
    out
}

/// A Lie-algebra-valued k-form given by a closed-form evaluator.
pub trait FormField: Send + Sync {
    fn degree(&self) -> usize;
    fn domain(&self) -> Domain {
        Domain::R4
    }
    /// Unchecked value at `x`.
    fn value_at(&self, x: &Point4) -> FormValue;
    /// Analytic partial derivative along `dirs` (length up to 3), if the field
    /// can produce one.
    fn analytic_partial(&self, _x: &Point4, _dirs: &[usize]) -> Option<FormValue> {
        None
    }
    /// Length scale used for finite-difference steps near `x`.
    fn local_scale(&self, _x: &Point4) -> f64 {
        1.0
    }
}

pub type Field = Arc<dyn FormField>;

/// Domain-checked evaluation.
pub fn eval(f: &dyn FormField, x: &Point4) -> Result<FormValue, FormError> {
    if !f.domain().contains(x) {
        return Err(FormError::OutsideDomain(x.0));
    }
    Ok(f.value_at(x))
}

/// Partial derivative along `dirs`: analytic when available, otherwise
/// central differences with one Richardson level applied to the last index.
pub fn partial(f: &dyn FormField, x: &Point4, dirs: &[usize]) -> Result<FormValue, FormError> {
    if dirs.is_empty() {
        return eval(f, x);
    }
    if !f.domain().contains(x) {
        return Err(FormError::OutsideDomain(x.0));
    }
    if let Some(v) = f.analytic_partial(x, dirs) {
        return Ok(v);
    }
    let (last, rest) = dirs.split_last().expect("nonempty");
    let h = 1e-4 * f.local_scale(x);
    let central = |h: f64| -> Result<FormValue, FormError> {
        let fp = partial(f, &x.shifted(*last, h), rest)?;
        let fm = partial(f, &x.shifted(*last, -h), rest)?;
        Ok(fp.add(&fm.scale(-1.0)).scale(0.5 / h))
    };
    let coarse = central(h)?;
    let fine = central(0.5 * h)?;
    Ok(fine.scale(4.0 / 3.0).add(&coarse.scale(-1.0 / 3.0)))
}

/// Closed-form kernel, generic over the scalar type so that dual numbers
/// yield exact derivatives.
pub trait FormKernel: Send + Sync {
    fn degree(&self) -> usize;
    fn domain(&self) -> Domain {
        Domain::R4
    }
    fn eval<S: Scalar>(&self, x: [S; 4]) -> Vec<[S; 3]>;
}

/// Field backed by a [`FormKernel`]; partials up to order 3 are analytic.
pub struct KernelField<K>(pub K);

fn seed1(x: &Point4, d: usize) -> [D1<f64>; 4] {
    let mut out = [D1::constant(0.0); 4];
    for k in 0..4 {
        out[k] = D1::seeded(x.0[k], 0, if k == d { 1.0 } else { 0.0 });
    }
    out
}

fn seed2(x: &Point4, d1: usize, d2: usize) -> [D1<D1<f64>>; 4] {
    let inner = seed1(x, d1);
    let mut out = [D1::constant(D1::constant(0.0)); 4];
    for k in 0..4 {
        out[k] = D1::seeded(inner[k], 0, D1::cst(if k == d2 { 1.0 } else { 0.0 }));
    }
    out
}

fn seed3(x: &Point4, d1: usize, d2: usize, d3: usize) -> [D1<D1<D1<f64>>>; 4] {
    let inner = seed2(x, d1, d2);
    let mut out = [D1::constant(D1::constant(D1::constant(0.0))); 4];
    for k in 0..4 {
        out[k] = D1::seeded(inner[k], 0, Scalar::cst(if k == d3 { 1.0 } else { 0.0 }));
    }
    out
}

fn to_form(degree: usize, c: Vec<[f64; 3]>) -> FormValue {
    FormValue {
        degree,
        comps: c.into_iter().map(|x| AlgElement { x }).collect(),
    }
}

impl<K: FormKernel> FormField for KernelField<K> {
    fn degree(&self) -> usize {
        self.0.degree()
    }
    fn domain(&self) -> Domain {
        self.0.domain()
    }
    fn value_at(&self, x: &Point4) -> FormValue {
        to_form(self.0.degree(), self.0.eval(x.0))
    }
    fn analytic_partial(&self, x: &Point4, dirs: &[usize]) -> Option<FormValue> {
        let k = self.0.degree();
        let c: Vec<[f64; 3]> = match *dirs {
            [] => self.0.eval(x.0),
            [a] => self
                .0
                .eval(seed1(x, a))
                .iter()
                .map(|v| [v[0].eps[0], v[1].eps[0], v[2].eps[0]])
                .collect(),
            [a, b] => self
                .0
                .eval(seed2(x, a, b))
                .iter()
                .map(|v| [v[0].eps[0].eps[0], v[1].eps[0].eps[0], v[2].eps[0].eps[0]])
                .collect(),
            [a, b, c] => self
                .0
                .eval(seed3(x, a, b, c))
                .iter()
                .map(|v| {
                    [
                        v[0].eps[0].eps[0].eps[0],
                        v[1].eps[0].eps[0].eps[0],
                        v[2].eps[0].eps[0].eps[0],
                    ]
                })
                .collect(),
            _ => return None,
        };
        Some(to_form(k, c))
    }
}

/// Field without analytic derivatives; every partial goes through finite
/// differences.
pub struct ClosureField<F> {
    pub degree: usize,
    pub domain: Domain,
    pub f: F,
}

impl<F: Fn(&Point4) -> FormValue + Send + Sync> FormField for ClosureField<F> {
    fn degree(&self) -> usize {
        self.degree
    }
    fn domain(&self) -> Domain {
        self.domain
    }
    fn value_at(&self, x: &Point4) -> FormValue {
        (self.f)(x)
    }
}

struct ExteriorD {
    inner: Field,
}

impl FormField for ExteriorD {
    fn degree(&self) -> usize {
        self.inner.degree() + 1
    }
    fn domain(&self) -> Domain {
        self.inner.domain()
    }
    fn value_at(&self, x: &Point4) -> FormValue {
        let mut out = FormValue::zero(self.degree());
        for i in 0..4 {
            let p = partial(self.inner.as_ref(), x, &[i])
                .unwrap_or_else(|_| FormValue::zero(self.inner.degree()).scale(f64::NAN));
            out = out.add(&dx_wedge(i, &p));
        }
        out
    }
    fn analytic_partial(&self, x: &Point4, dirs: &[usize]) -> Option<FormValue> {
        if dirs.len() >= 3 {
            return None;
        }
        let mut out = FormValue::zero(self.degree());
        for i in 0..4 {
            let mut d = vec![i];
            d.extend_from_slice(dirs);
            let p = self.inner.analytic_partial(x, &d)?;
            out = out.add(&dx_wedge(i, &p));
        }
        Some(out)
    }
    fn local_scale(&self, x: &Point4) -> f64 {
        self.inner.local_scale(x)
    }
}

/// `d omega`, degree k+1.
pub fn exterior_d(omega: Field) -> Result<Field, FormError> {
    if omega.degree() >= 4 {
        return Err(FormError::DegreeMismatch("d of a 4-form".into()));
    }
    Ok(Arc::new(ExteriorD { inner: omega }))
}

struct WedgeBracket {
    a: Field,
    b: Field,
}

impl FormField for WedgeBracket {
    fn degree(&self) -> usize {
        self.a.degree() + self.b.degree()
    }
    fn domain(&self) -> Domain {
        self.a.domain()
    }
    fn value_at(&self, x: &Point4) -> FormValue {
        wedge_bracket_values(&self.a.value_at(x), &self.b.value_at(x)).expect("degrees checked")
    }
    fn analytic_partial(&self, x: &Point4, dirs: &[usize]) -> Option<FormValue> {
        if dirs.len() != 1 {
            return None;
        }
        let (a, b) = (self.a.value_at(x), self.b.value_at(x));
        let da = self.a.analytic_partial(x, dirs)?;
        let db = self.b.analytic_partial(x, dirs)?;
        let l = wedge_bracket_values(&da, &b).ok()?;
        let r = wedge_bracket_values(&a, &db).ok()?;
        Some(l.add(&r))
    }
}

/// `[alpha ∧ beta]` for two 1-forms.
pub fn wedge_bracket(alpha: Field, beta: Field) -> Result<Field, FormError> {
    if alpha.degree() != 1 || beta.degree() != 1 {
        return Err(FormError::DegreeMismatch(format!(
            "wedge_bracket needs two 1-forms, got {} and {}",
            alpha.degree(),
            beta.degree()
        )));
    }
    Ok(Arc::new(WedgeBracket { a: alpha, b: beta }))
}

struct CovD {
    conn: Field,
    omega: Field,
    eps: f64,
}

impl FormField for CovD {
    fn degree(&self) -> usize {
        self.omega.degree() + 1
    }
    fn domain(&self) -> Domain {
        self.omega.domain()
    }
    fn value_at(&self, x: &Point4) -> FormValue {
        let mut out = FormValue::zero(self.degree());
        for i in 0..4 {
            let p = partial(self.omega.as_ref(), x, &[i])
                .unwrap_or_else(|_| FormValue::zero(self.omega.degree()).scale(f64::NAN));
            out = out.add(&dx_wedge(i, &p));
        }
        let w = wedge_bracket_values(&self.conn.value_at(x), &self.omega.value_at(x))
            .expect("degrees checked");
        out.add(&w.scale(self.eps))
    }
    fn local_scale(&self, x: &Point4) -> f64 {
        self.omega.local_scale(x)
    }
}

/// `d^eps_A omega = d omega + eps [A ∧ omega]`.
pub fn covariant_d_eps(conn: Field, omega: Field, eps: f64) -> Result<Field, FormError> {
    if conn.degree() != 1 {
        return Err(FormError::DegreeMismatch("connection must be a 1-form".into()));
    }
    if omega.degree() >= 4 {
        return Err(FormError::DegreeMismatch("d_A of a 4-form".into()));
    }
    Ok(Arc::new(CovD { conn, omega, eps }))
}

struct Codiff {
    conn: Field,
    omega: Field,
    eps: f64,
}

impl FormField for Codiff {
    fn degree(&self) -> usize {
        self.omega.degree() - 1
    }
    fn domain(&self) -> Domain {
        self.omega.domain()
    }
    fn value_at(&self, x: &Point4) -> FormValue {
        // -*(d *omega + eps [A ∧ *omega]); the star commutes with partials
        let mut inner = FormValue::zero(5 - self.omega.degree());
        for i in 0..4 {
            let p = partial(self.omega.as_ref(), x, &[i])
                .unwrap_or_else(|_| FormValue::zero(self.omega.degree()).scale(f64::NAN));
            inner = inner.add(&dx_wedge(i, &hodge_star(&p)));
        }
        let star = hodge_star(&self.omega.value_at(x));
        let w = wedge_bracket_values(&self.conn.value_at(x), &star).expect("degrees checked");
        hodge_star(&inner.add(&w.scale(self.eps))).scale(-1.0)
    }
    fn local_scale(&self, x: &Point4) -> f64 {
        self.omega.local_scale(x)
    }
}

/// Formal L2 adjoint of `d^eps_A` on flat R^4: `-* d^eps_A *`.
pub fn codifferential_eps(conn: Field, omega: Field, eps: f64) -> Result<Field, FormError> {
    if conn.degree() != 1 {
        return Err(FormError::DegreeMismatch("connection must be a 1-form".into()));
    }
    if omega.degree() == 0 {
        return Err(FormError::DegreeMismatch("codifferential of a 0-form".into()));
    }
    Ok(Arc::new(Codiff { conn, omega, eps }))
}

/// `nabla^eps_A alpha` for a 1-form: sixteen components `d_i alpha_j + eps [A_i, alpha_j]`.
pub struct CovGrad {
    conn: Field,
    alpha: Field,
    eps: f64,
}

impl CovGrad {
    /// Entry `[i][j]` is the component `d_i alpha_j + eps [A_i, alpha_j]`.
    pub fn eval(&self, x: &Point4) -> Result<[[AlgElement; 4]; 4], FormError> {
        let a = eval(self.conn.as_ref(), x)?;
        let v = eval(self.alpha.as_ref(), x)?;
        let mut out = [[AlgElement::ZERO; 4]; 4];
        for i in 0..4 {
            let di = partial(self.alpha.as_ref(), x, &[i])?;
            for j in 0..4 {
                out[i][j] = di.comps[j] + bracket(&a.comps[i], &v.comps[j]).scale(self.eps);
            }
        }
        Ok(out)
    }

    pub fn norm_sq(&self, x: &Point4) -> Result<f64, FormError> {
        let g = self.eval(x)?;
        Ok(g.iter().flatten().map(|c| c.tr_inner(c)).sum())
    }
}

pub fn covariant_grad_eps(conn: Field, alpha: Field, eps: f64) -> Result<CovGrad, FormError> {
    if conn.degree() != 1 || alpha.degree() != 1 {
        return Err(FormError::DegreeMismatch("covariant gradient acts on 1-forms".into()));
    }
    Ok(CovGrad { conn, alpha, eps })
}

/// Write `x0,x1,x2,x3,component,e1,e2,e3` rows for a field sampled at `points`.
pub fn dump_field<W: Write>(out: &mut W, f: &dyn FormField, points: &[Point4]) -> std::io::Result<()> {
    writeln!(out, "x0,x1,x2,x3,component,e1,e2,e3")?;
    for x in points {
        let v = match eval(f, x) {
            Ok(v) => v,
            Err(_) => continue,
        };
        for (c, a) in v.comps.iter().enumerate() {
            writeln!(
                out,
                "{:.10e},{:.10e},{:.10e},{:.10e},{},{:.12e},{:.12e},{:.12e}",
                x.0[0], x.0[1], x.0[2], x.0[3], c, a.x[0], a.x[1], a.x[2]
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests;
