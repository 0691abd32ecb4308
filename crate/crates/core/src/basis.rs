//! Inner products on tangent fields, Gram–Schmidt bases of the tangent
//! spaces to `A(q)` and `Ã(q)`, projections and basis derivatives.
//!
//! All inner products of a basis are evaluated on one shared quadrature rule,
//! so orthonormality is a property of the discrete product. Fields enter as
//! [`Jet1`] values (coefficients plus first partials) in the chart the
//! connection uses at each node.

use std::io::Write;
use std::sync::Arc;

use thiserror::Error;

use crate::forms::jet::{self, Coef, Jet1};
use crate::forms::{
    eval, integrate_many, partial, unit_ball_rule, weighted_r4_rule, Domain, Field, FormError,
    FormField, FormValue, Point4, QuadratureRule, RuleConfig,
};
use crate::instanton::{
    Chart, ChartedConnection, ChartedField, InstantonError, Kind, ParamDir, Pi2Strategy,
};

pub type Mat = Vec<Vec<f64>>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BasisError {
    #[error(transparent)]
    Form(#[from] FormError),
    #[error(transparent)]
    Instanton(#[from] InstantonError),
    #[error("input {index} is numerically dependent on the previous ones (condition number {cond:.3e})")]
    Singular { index: usize, cond: f64 },
    #[error("finite-difference step {0:e} underflows")]
    Step(f64),
}

/// Smallest residual-to-input norm ratio accepted by Gram–Schmidt.
const MIN_RESIDUAL_RATIO: f64 = 1e-7;

/// Value and first partials of a field at a point.
pub fn field_jet(f: &dyn FormField, x: &Point4) -> Result<Jet1, FormError> {
    if f.degree() != 1 {
        return Err(FormError::DegreeMismatch(format!(
            "jets need a 1-form, got degree {}",
            f.degree()
        )));
    }
    let mut j = Jet1::ZERO;
    let v = eval(f, x)?;
    for mu in 0..4 {
        j.v[mu] = v.comps[mu].x;
    }
    for i in 0..4 {
        let d = partial(f, x, &[i])?;
        for mu in 0..4 {
            j.d[i][mu] = d.comps[mu].x;
        }
    }
    Ok(j)
}

/// A finite family of 1-forms evaluated as jets in a prescribed chart.
pub trait JetFamily: Sync {
    fn len(&self) -> usize;
    fn jets(&self, chart: Chart, x: &Point4, out: &mut [Jet1]) -> Result<(), FormError>;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The eight parameter derivatives of a connection, in basis order.
pub struct Tangents<'a>(pub &'a ChartedConnection);

impl JetFamily for Tangents<'_> {
    fn len(&self) -> usize {
        8
    }
    fn jets(&self, chart: Chart, x: &Point4, out: &mut [Jet1]) -> Result<(), FormError> {
        out.copy_from_slice(&self.0.tangent_jets(chart, x).d);
        Ok(())
    }
}

/// Arbitrary fields; charted fields pick their chart by position, which
/// matches the connection's choice when they share `p` and the split radius.
pub struct Fields(pub Vec<Field>);

impl JetFamily for Fields {
    fn len(&self) -> usize {
        self.0.len()
    }
    fn jets(&self, _: Chart, x: &Point4, out: &mut [Jet1]) -> Result<(), FormError> {
        for (o, f) in out.iter_mut().zip(&self.0) {
            *o = field_jet(f.as_ref(), x)?;
        }
        Ok(())
    }
}

/// Fixed linear combinations `out_i = sum_k coef[i][k] base_k`.
pub struct Combos<'a> {
    pub base: &'a dyn JetFamily,
    pub coef: Mat,
}

impl JetFamily for Combos<'_> {
    fn len(&self) -> usize {
        self.coef.len()
    }
    fn jets(&self, chart: Chart, x: &Point4, out: &mut [Jet1]) -> Result<(), FormError> {
        let mut b = vec![Jet1::ZERO; self.base.len()];
        self.base.jets(chart, x, &mut b)?;
        for (o, row) in out.iter_mut().zip(&self.coef) {
            *o = combine(row, &b);
        }
        Ok(())
    }
}

/// Two families side by side.
pub struct Concat<'a>(pub &'a dyn JetFamily, pub &'a dyn JetFamily);

impl JetFamily for Concat<'_> {
    fn len(&self) -> usize {
        self.0.len() + self.1.len()
    }
    fn jets(&self, chart: Chart, x: &Point4, out: &mut [Jet1]) -> Result<(), FormError> {
        let n = self.0.len();
        self.0.jets(chart, x, &mut out[..n])?;
        self.1.jets(chart, x, &mut out[n..])
    }
}

pub fn combine(coef: &[f64], jets: &[Jet1]) -> Jet1 {
    let mut o = Jet1::ZERO;
    for (c, j) in coef.iter().zip(jets) {
        if *c != 0.0 {
            o.axpy(*c, j);
        }
    }
    o
}

/// Radii (about `p`) where the connection has cutoff kinks besides the
/// `lambda` scales already built into the rules.
pub fn extra_breaks(conn: &ChartedConnection) -> Vec<f64> {
    match (conn.kind, conn.model.pi2) {
        (Kind::Glued, Pi2Strategy::CutoffTail { rho }) => vec![rho, 2.0 * rho],
        _ => vec![],
    }
}

/// Rule for `(.,.)_{A;1,2;B^4}`.
pub fn ball_rule_for(conn: &ChartedConnection, cfg: &RuleConfig) -> Result<QuadratureRule, FormError> {
    unit_ball_rule(conn.q.p, conn.q.lam, &extra_breaks(conn), cfg)
}

/// Rule for the weighted product on R^4; `aux` carries the weight.
pub fn weighted_rule_for(conn: &ChartedConnection, cfg: &RuleConfig) -> Result<QuadratureRule, FormError> {
    weighted_r4_rule(conn.q.p, conn.q.lam, &extra_breaks(conn), cfg)
}

/// `∫ <∇α, ∇β> + aux <α, β>` on a rule, with `∇ = ∇^eps_A`.
pub struct Product<'a> {
    pub conn: &'a ChartedConnection,
    pub rule: &'a QuadratureRule,
}

#[inline]
fn pair_density(conn: &[Coef; 4], eps: f64, aux: f64, js: &[Jet1], out: &mut [f64]) {
    let grads: Vec<[[Coef; 4]; 4]> = js.iter().map(|j| jet::cov_grad(conn, eps, j)).collect();
    let mut k = 0;
    for i in 0..js.len() {
        for j in i..js.len() {
            out[k] = jet::ip_grad(&grads[i], &grads[j]) + aux * jet::ip1(&js[i].v, &js[j].v);
            k += 1;
        }
    }
}

fn unpack(n: usize, v: &[f64]) -> Mat {
    let mut g = vec![vec![0.0; n]; n];
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            g[i][j] = v[k];
            g[j][i] = v[k];
            k += 1;
        }
    }
    g
}

impl<'a> Product<'a> {
    pub fn new(conn: &'a ChartedConnection, rule: &'a QuadratureRule) -> Self {
        Product { conn, rule }
    }

    fn gram_on(&self, rule: &QuadratureRule, fam: &dyn JetFamily) -> Result<Mat, FormError> {
        let n = fam.len();
        let m = n * (n + 1) / 2;
        let eps = self.conn.q.eps;
        let err = std::sync::Mutex::new(None);
        let v = integrate_many(rule, m, |k, x, out| {
            let chart = self.conn.chart_at(x);
            let a = self.conn.value(chart, x);
            let mut js = vec![Jet1::ZERO; n];
            if let Err(e) = fam.jets(chart, x, &mut js) {
                *err.lock().expect("poisoned") = Some(e);
                return;
            }
            pair_density(&a, eps, rule.aux[k], &js, out);
        })?;
        if let Some(e) = err.into_inner().expect("poisoned") {
            return Err(e);
        }
        Ok(unpack(n, &v))
    }

    /// Gram matrix of the family.
    pub fn gram(&self, fam: &dyn JetFamily) -> Result<Mat, FormError> {
        self.gram_on(self.rule, fam)
    }

    /// Largest share of a diagonal entry that comes from the outermost panel
    /// of an exterior rule; zero for rules without a tail.
    pub fn tail_share(&self, fam: &dyn JetFamily, full: &Mat) -> Result<f64, FormError> {
        let Some(sub) = self.rule.tail_rule() else {
            return Ok(0.0);
        };
        let t = self.gram_on(&sub, fam)?;
        let mut share: f64 = 0.0;
        for i in 0..t.len() {
            if full[i][i] > 0.0 {
                share = share.max(t[i][i].abs() / full[i][i]);
            } else if t[i][i] != 0.0 {
                share = f64::INFINITY;
            }
        }
        Ok(share)
    }
}

/// Tail share above which a weighted product is reported as non-convergent.
pub const TAIL_LIMIT: f64 = 1e-3;

/// `(α, β)_{A;1,2;B^4}`.
pub fn inner_ball(
    alpha: Field,
    beta: Field,
    conn: &ChartedConnection,
    cfg: &RuleConfig,
) -> Result<f64, FormError> {
    let rule = ball_rule_for(conn, cfg)?;
    Ok(Product::new(conn, &rule).gram(&Fields(vec![alpha, beta]))?[0][1])
}

/// Weighted product on R^4: derivative term unweighted, L² term with `w`.
pub fn inner_weighted(
    alpha: Field,
    beta: Field,
    conn: &ChartedConnection,
    cfg: &RuleConfig,
) -> Result<f64, FormError> {
    let rule = weighted_rule_for(conn, cfg)?;
    let p = Product::new(conn, &rule);
    let fam = Fields(vec![alpha, beta]);
    let g = p.gram(&fam)?;
    let share = p.tail_share(&fam, &g)?;
    if share > TAIL_LIMIT {
        return Err(FormError::TailNotConvergent { share });
    }
    Ok(g[0][1])
}

/// Modified Gram–Schmidt with one reorthogonalisation pass, carried out on
/// coefficient vectors with the metric `g`. Returns `t` with
/// `basis_i = sum_k t[i][k] input_k` and the smallest residual ratio seen.
pub fn mgs(g: &Mat) -> Result<(Mat, f64), BasisError> {
    let n = g.len();
    let ip = |u: &[f64], v: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            if u[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                s += u[i] * g[i][j] * v[j];
            }
        }
        s
    };
    let mut t: Mat = Vec::with_capacity(n);
    let mut worst = f64::INFINITY;
    for i in 0..n {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        let n0 = g[i][i].max(0.0).sqrt();
        for _pass in 0..2 {
            for u in &t {
                let r = ip(&v, u);
                for k in 0..n {
                    v[k] -= r * u[k];
                }
            }
        }
        let nv = ip(&v, &v).max(0.0).sqrt();
        let ratio = if n0 > 0.0 { nv / n0 } else { 0.0 };
        worst = worst.min(ratio);
        if !(ratio > MIN_RESIDUAL_RATIO) {
            return Err(BasisError::Singular {
                index: i,
                cond: if ratio > 0.0 { 1.0 / ratio } else { f64::INFINITY },
            });
        }
        // one more normalisation after the second pass keeps the unit length exact
        v.iter_mut().for_each(|c| *c /= nv);
        let nn = ip(&v, &v).sqrt();
        v.iter_mut().for_each(|c| *c /= nn);
        t.push(v);
    }
    Ok((t, worst))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProductKind {
    /// `(.,.)_{A(q);1,2;B^4}`
    Ball,
    /// weighted product on R^4 for `Ã(q)`
    Weighted,
}

/// Orthonormal basis built from ordered inputs.
///
/// `c` is the lower-triangular table with
/// `basis_i = c[i][i] input_i + sum_{j<i} c[i][j] basis_j`;
/// `raw` expresses each basis field in the eight raw parameter derivatives.
#[derive(Clone, Debug)]
pub struct GramBasis {
    pub kind: ProductKind,
    pub eps: f64,
    /// Gram matrix of the raw derivative fields.
    pub raw_gram: Mat,
    /// Inputs in terms of raw derivative fields.
    pub input: Mat,
    /// Basis in terms of inputs.
    pub t: Mat,
    pub c: Mat,
    pub raw: Mat,
    /// Inverse of the smallest residual ratio met during orthogonalisation.
    pub cond: f64,
    /// `max |<basis_i, basis_j> - delta_ij|` from the Gram matrix.
    pub gram_residual: f64,
    /// Share of the weighted product carried by the outermost tail panel.
    pub tail_share: f64,
}

fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (n, m, l) = (a.len(), b.len(), b[0].len());
    let mut o = vec![vec![0.0; l]; n];
    for i in 0..n {
        for k in 0..m {
            if a[i][k] == 0.0 {
                continue;
            }
            for j in 0..l {
                o[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    o
}

fn transpose(a: &Mat) -> Mat {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

/// `a G a^T`.
pub fn congruence(a: &Mat, g: &Mat) -> Mat {
    matmul(&matmul(a, g), &transpose(a))
}

pub fn identity(n: usize) -> Mat {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

pub fn max_offset_from_identity(g: &Mat) -> f64 {
    let mut m: f64 = 0.0;
    for (i, row) in g.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            m = m.max((v - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    m
}

impl GramBasis {
    /// Orthonormalise inputs `input` (rows over raw fields with Gram `raw_gram`).
    pub fn from_gram(
        kind: ProductKind,
        eps: f64,
        raw_gram: Mat,
        input: Mat,
    ) -> Result<GramBasis, BasisError> {
        let g_in = congruence(&input, &raw_gram);
        let (t, worst) = mgs(&g_in)?;
        let n = t.len();
        // c[i][j] = -c[i][i] (input_i, basis_j) for j < i
        let mut c = vec![vec![0.0; n]; n];
        for i in 0..n {
            c[i][i] = t[i][i];
            for j in 0..i {
                let mut s = 0.0;
                for k in 0..n {
                    s += g_in[i][k] * t[j][k];
                }
                c[i][j] = -t[i][i] * s;
            }
        }
        let raw = matmul(&t, &input);
        let gram_residual = max_offset_from_identity(&congruence(&raw, &raw_gram));
        Ok(GramBasis {
            kind,
            eps,
            raw_gram,
            input,
            t,
            c,
            raw,
            cond: 1.0 / worst,
            gram_residual,
            tail_share: 0.0,
        })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Coefficients of `q_i` over `(∂/∂p_1..4, ξ_1..3, ∂/∂λ)`.
    pub fn q_vector(&self, i: usize) -> [f64; 8] {
        std::array::from_fn(|k| self.raw[i][k])
    }

    /// The vector fields rebuilt by the recursion
    /// `q_i = c_ii ∂_i + sum_{j<i} c_ij q_j`.
    pub fn q_recursion(&self) -> Vec<[f64; 8]> {
        let mut q: Vec<[f64; 8]> = Vec::with_capacity(8);
        for i in 0..self.len() {
            let mut v = [0.0; 8];
            for k in 0..8 {
                v[k] = self.c[i][i] * self.input[i][k];
            }
            for j in 0..i {
                for k in 0..8 {
                    v[k] += self.c[i][j] * q[j][k];
                }
            }
            q.push(v);
        }
        q
    }

    /// Basis field `i` as a linear combination of raw derivative fields.
    pub fn field(&self, i: usize, conn: &ChartedConnection) -> LinComb {
        LinComb::new(
            ParamDir::ALL
                .iter()
                .map(|d| (self.raw[i][d.index()], Arc::new(conn.d_param_field(*d)) as Field))
                .collect(),
            conn.domain(),
        )
    }

    /// Basis field family as jets of the given connection's tangents.
    pub fn family<'a>(&self, tangents: &'a Tangents<'a>) -> Combos<'a> {
        Combos {
            base: tangents,
            coef: self.raw.clone(),
        }
    }

    /// CSV rows `kind,eps,i,j,c_ij,raw_ij,gram_ij`.
    pub fn write_csv<W: Write>(&self, w: &mut W, header: bool) -> std::io::Result<()> {
        if header {
            writeln!(w, "kind,eps,i,j,c_ij,raw_ij,gram_ij")?;
        }
        let kind = match self.kind {
            ProductKind::Ball => "ball",
            ProductKind::Weighted => "weighted",
        };
        let g = congruence(&self.raw, &self.raw_gram);
        for i in 0..self.len() {
            for j in 0..self.len() {
                writeln!(
                    w,
                    "{kind},{:e},{},{},{:e},{:e},{:e}",
                    self.eps,
                    i + 1,
                    j + 1,
                    if j <= i { self.c[i][j] } else { 0.0 },
                    self.raw[i][j],
                    g[i][j]
                )?;
            }
        }
        Ok(())
    }
}

/// Lemma-5.8 basis `a_1..a_8` of `T_{A(q)}`.
pub fn gram_schmidt_ball(conn: &ChartedConnection, cfg: &RuleConfig) -> Result<GramBasis, BasisError> {
    let rule = ball_rule_for(conn, cfg)?;
    gram_schmidt_ball_on(conn, &rule)
}

pub fn gram_schmidt_ball_on(
    conn: &ChartedConnection,
    rule: &QuadratureRule,
) -> Result<GramBasis, BasisError> {
    let g = Product::new(conn, rule).gram(&Tangents(conn))?;
    GramBasis::from_gram(ProductKind::Ball, conn.q.eps, g, identity(8))
}

/// Lemma-5.9 basis `â_1..â_8` from `ã_i = Ã_{q_i}`, with the `q_i` of `ball`.
pub fn gram_schmidt_weighted(
    ball: &GramBasis,
    extended: &ChartedConnection,
    cfg: &RuleConfig,
) -> Result<GramBasis, BasisError> {
    let rule = weighted_rule_for(extended, cfg)?;
    let p = Product::new(extended, &rule);
    let fam = Tangents(extended);
    let g = p.gram(&fam)?;
    let share = p.tail_share(&fam, &g)?;
    if share > TAIL_LIMIT {
        return Err(FormError::TailNotConvergent { share }.into());
    }
    let mut b = GramBasis::from_gram(ProductKind::Weighted, extended.q.eps, g, ball.raw.clone())?;
    b.tail_share = share;
    Ok(b)
}

/// Finite linear combination of fields.
#[derive(Clone)]
pub struct LinComb {
    pub terms: Vec<(f64, Field)>,
    pub domain: Domain,
}

impl LinComb {
    pub fn new(terms: Vec<(f64, Field)>, domain: Domain) -> Self {
        LinComb { terms, domain }
    }
}

impl FormField for LinComb {
    fn degree(&self) -> usize {
        1
    }
    fn domain(&self) -> Domain {
        self.domain
    }
    fn value_at(&self, x: &Point4) -> FormValue {
        let mut v = FormValue::zero(1);
        for (c, f) in &self.terms {
            if *c != 0.0 {
                v = v.add(&f.value_at(x).scale(*c));
            }
        }
        v
    }
    fn analytic_partial(&self, x: &Point4, dirs: &[usize]) -> Option<FormValue> {
        let mut v = FormValue::zero(1);
        for (c, f) in &self.terms {
            if *c != 0.0 {
                v = v.add(&f.analytic_partial(x, dirs)?.scale(*c));
            }
        }
        Some(v)
    }
}

/// Result of projecting targets onto the orthogonal complement of a basis.
#[derive(Clone, Debug)]
pub struct PerpReport {
    /// `(v, a_i)` for each basis field.
    pub coef: Vec<f64>,
    /// `‖v‖`
    pub norm_full: f64,
    /// `‖v^⊥‖`, computed from the projected field itself.
    pub norm: f64,
    /// Contributions of `B_{λ/4}(p)` and of its complement to `‖v^⊥‖²`.
    pub inner_sq: f64,
    pub outer_sq: f64,
    /// `max_i |(v^⊥, a_i)| / ‖v^⊥‖`
    pub orthogonality: f64,
}

/// Project each target onto the complement of `span{a_i}` in the product of
/// `basis`, with `basis` given over the connection's raw tangents.
pub fn perp_reports(
    conn: &ChartedConnection,
    basis: &GramBasis,
    rule: &QuadratureRule,
    targets: &dyn JetFamily,
) -> Result<Vec<PerpReport>, FormError> {
    let tangents = Tangents(conn);
    let basis_fam = basis.family(&tangents);
    let nb = basis.len();
    let nt = targets.len();
    let both = Concat(&basis_fam, targets);
    let g = Product::new(conn, rule).gram(&both)?;
    // v^⊥ = v - sum_i (v, a_i) a_i, expressed over [a_1..a_n, v_1..v_m]
    let coef: Vec<Vec<f64>> = (0..nt).map(|t| (0..nb).map(|i| g[i][nb + t]).collect()).collect();
    let mut rows = vec![];
    for (t, c) in coef.iter().enumerate() {
        let mut row = vec![0.0; nb + nt];
        for i in 0..nb {
            row[i] = -c[i];
        }
        row[nb + t] = 1.0;
        rows.push(row);
    }
    // second pass: norms of the projected fields and their remaining overlap
    let perp = Combos {
        base: &both,
        coef: rows,
    };
    let eps = conn.q.eps;
    let m = 3 * nt + nt * nb;
    let v = integrate_many(rule, m, |k, x, out| {
        let chart = conn.chart_at(x);
        let a = conn.value(chart, x);
        let mut js = vec![Jet1::ZERO; nb + nt];
        if both.jets(chart, x, &mut js).is_err() {
            out[0] = f64::NAN;
            return;
        }
        let pj: Vec<Jet1> = perp.coef.iter().map(|r| combine(r, &js)).collect();
        let gb: Vec<_> = js[..nb].iter().map(|j| jet::cov_grad(&a, eps, j)).collect();
        for (t, p) in pj.iter().enumerate() {
            let gp = jet::cov_grad(&a, eps, p);
            let d = jet::ip_grad(&gp, &gp) + rule.aux[k] * jet::ip1(&p.v, &p.v);
            out[3 * t] = d;
            if chart == Chart::Inner {
                out[3 * t + 1] = d;
            } else {
                out[3 * t + 2] = d;
            }
            for i in 0..nb {
                out[3 * nt + t * nb + i] =
                    jet::ip_grad(&gp, &gb[i]) + rule.aux[k] * jet::ip1(&p.v, &js[i].v);
            }
        }
    })?;
    Ok((0..nt)
        .map(|t| {
            let norm = v[3 * t].max(0.0).sqrt();
            let ortho = (0..nb)
                .map(|i| v[3 * nt + t * nb + i].abs())
                .fold(0.0, f64::max)
                / norm.max(f64::MIN_POSITIVE);
            PerpReport {
                coef: coef[t].clone(),
                norm_full: g[nb + t][nb + t].max(0.0).sqrt(),
                norm,
                inner_sq: v[3 * t + 1],
                outer_sq: v[3 * t + 2],
                orthogonality: ortho,
            }
        })
        .collect())
}

/// `v - sum_i (v, a_i) a_i` as a field.
pub fn project_perp(
    v: Field,
    basis: &GramBasis,
    conn: &ChartedConnection,
    cfg: &RuleConfig,
) -> Result<LinComb, FormError> {
    let rule = ball_rule_for(conn, cfg)?;
    let tangents = Tangents(conn);
    let fam = Concat(&tangents, &Fields(vec![v.clone()]));
    let g = Product::new(conn, &rule).gram(&fam)?;
    let mut terms = vec![(1.0, v)];
    for d in ParamDir::ALL {
        let k = d.index();
        // s_k = sum_i (v, a_i) raw[i][k], (v, a_i) = sum_l raw[i][l] (v, raw_l)
        let mut s = 0.0;
        for i in 0..basis.len() {
            let vi: f64 = (0..8).map(|l| basis.raw[i][l] * g[l][8]).sum();
            s += vi * basis.raw[i][k];
        }
        terms.push((-s, Arc::new(conn.d_param_field(d)) as Field));
    }
    Ok(LinComb::new(terms, conn.domain()))
}

/// Weights `(t, w)` of the Richardson-extrapolated central difference
/// `f'(0) ≈ sum w f(t)`, exact for polynomials of degree 4.
pub fn fd_weights(h: f64) -> [(f64, f64); 4] {
    let a = 4.0 / 3.0 / h;
    let b = 1.0 / 6.0 / h;
    [(0.5 * h, a), (-0.5 * h, -a), (h, -b), (-h, b)]
}

/// Step along the coordinate vector `v` moving `p` and `lambda` by about
/// `rel * lambda` and the group part by about `rel` radians.
pub fn fd_step(conn: &ChartedConnection, v: &[f64; 8], rel: f64) -> Result<f64, BasisError> {
    let lam = conn.q.lam;
    let mut s: f64 = 0.0;
    for (k, c) in v.iter().enumerate() {
        let scale = if (4..7).contains(&k) { 1.0 } else { lam };
        s = s.max(c.abs() / scale);
    }
    let h = rel / s;
    if !(h.is_finite() && h > 0.0 && h * s > 1e-14) {
        return Err(BasisError::Step(h));
    }
    Ok(h)
}

/// `a_i` at shifted parameters, evaluated in the charts of the base connection.
pub struct ShiftedBasis {
    pub terms: Vec<(f64, ChartedConnection, [f64; 8])>,
}

impl JetFamily for ShiftedBasis {
    fn len(&self) -> usize {
        1
    }
    fn jets(&self, chart: Chart, x: &Point4, out: &mut [Jet1]) -> Result<(), FormError> {
        let mut o = Jet1::ZERO;
        for (w, c, coef) in &self.terms {
            let tj = c.tangent_jets(chart, x);
            for k in 0..8 {
                o.axpy(w * coef[k], &tj.d[k]);
            }
        }
        out[0] = o;
        Ok(())
    }
}

/// `(a_i)_{q_j}`: derivative of basis field `i` along the flow of `q_j`,
/// by Richardson-extrapolated central differences with a step of about
/// `rel` parameter scales. Bases at shifted parameters are computed on the
/// base rule, and charts follow the base connection.
pub fn basis_directional_derivative(
    conn: &ChartedConnection,
    basis: &GramBasis,
    rule: &QuadratureRule,
    i: usize,
    j: usize,
    rel: f64,
) -> Result<ShiftedBasis, BasisError> {
    let v = basis.q_vector(j);
    let h = fd_step(conn, &v, rel)?;
    let mut terms = vec![];
    for (t, w) in fd_weights(h) {
        let shifted = conn.with_q(conn.q.moved(&v, t));
        let b = gram_schmidt_ball_on(&shifted, rule)?;
        terms.push((w, shifted, b.q_vector(i)));
    }
    Ok(ShiftedBasis { terms })
}

impl ShiftedBasis {
    /// The derivative as a field, with charts fixed by the base connection.
    pub fn field(&self, base: &ChartedConnection) -> LinComb {
        let mut terms = vec![];
        for (w, c, coef) in &self.terms {
            for d in ParamDir::ALL {
                let mut f: ChartedField = c.d_param_field(d);
                f.p = base.q.p;
                f.r_split = base.split_radius();
                terms.push((w * coef[d.index()], Arc::new(f) as Field));
            }
        }
        LinComb::new(terms, base.domain())
    }
}

/// `a_11² ∂²A/∂p_1²` as a jet family of one member.
pub struct ScaledSecondP1<'a> {
    pub conn: &'a ChartedConnection,
    pub factor: f64,
}

impl JetFamily for ScaledSecondP1<'_> {
    fn len(&self) -> usize {
        1
    }
    fn jets(&self, chart: Chart, x: &Point4, out: &mut [Jet1]) -> Result<(), FormError> {
        out[0] = self.conn.d2_p1_jet(chart, x).scaled(self.factor);
        Ok(())
    }
}
