//! The deformed Yang–Mills functional, its charge and first two variations,
//! and the sweep reports that test the scaling estimates for the glued family.
//!
//! Connections are evaluated chart by chart: at each quadrature node the chart
//! of the base connection is used for the connection, for perturbations and
//! for test fields alike.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Write;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::basis::{
    ball_rule_for, basis_directional_derivative, combine, gram_schmidt_ball_on,
    gram_schmidt_weighted, perp_reports, BasisError, Combos, Concat, GramBasis, JetFamily, Mat,
    Product, ScaledSecondP1, Tangents, TAIL_LIMIT,
};
use crate::dual::{grad_point, Grad4, Scalar};
use crate::forms::jet::{self, Coef, Jet1};
use crate::forms::quadrature::{integrate_converged, r4_rule};
use crate::forms::{
    integrate, integrate_many, Field, FormError, Point4, QuadratureRule, RuleConfig,
};
use crate::harness::{fit_slope, SlopeFit};
use crate::instanton::{
    ad_quat, glued_connection, Chart, ChartedConnection, InstantonError, Kind, Model, ParamQ,
};
use crate::liealg::qconj;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FunctionalError {
    #[error(transparent)]
    Form(#[from] FormError),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Instanton(#[from] InstantonError),
    #[error("test field {0} has zero norm")]
    DegenerateTestField(usize),
}

/// Integration region of a functional.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    Ball,
    R4,
}

impl Region {
    /// The unit ball for `A(q)`, all of R^4 otherwise.
    pub fn natural(conn: &ChartedConnection) -> Region {
        match conn.kind {
            Kind::Glued => Region::Ball,
            Kind::Extended | Kind::Flat => Region::R4,
        }
    }
}

pub fn region_rule(
    conn: &ChartedConnection,
    region: Region,
    cfg: &RuleConfig,
) -> Result<QuadratureRule, FormError> {
    match region {
        Region::Ball => ball_rule_for(conn, cfg),
        Region::R4 => {
            if conn.kind == Kind::Glued {
                return Err(FormError::BadRule(
                    "the glued connection is only defined on the unit ball".into(),
                ));
            }
            r4_rule(conn.q.p, conn.q.lam, 1.0, cfg)
        }
    }
}

/// `sum_k w_k f(k, chart, x, jets)` for several integrands, with the family
/// evaluated in the chart of `conn` at each node.
fn integrate_family(
    conn: &ChartedConnection,
    rule: &QuadratureRule,
    fam: &dyn JetFamily,
    m: usize,
    f: impl Fn(usize, Chart, &Point4, &[Jet1], &mut [f64]) + Sync,
) -> Result<Vec<f64>, FormError> {
    let err = Mutex::new(None);
    let n = fam.len();
    let v = integrate_many(rule, m, |k, x, out| {
        let chart = conn.chart_at(x);
        let mut js = vec![Jet1::ZERO; n];
        if let Err(e) = fam.jets(chart, x, &mut js) {
            *err.lock().expect("poisoned") = Some(e);
            return;
        }
        f(k, chart, x, &js, out);
    })?;
    if let Some(e) = err.into_inner().expect("poisoned") {
        return Err(e);
    }
    Ok(v)
}

/// `∫ |F^eps_A|^2` on a rule.
pub fn ym_on(conn: &ChartedConnection, rule: &QuadratureRule) -> Result<f64, FormError> {
    integrate(rule, |x| conn.energy_density(x))
}

/// `YM_eps(A)` over `region`.
pub fn ym_eps(conn: &ChartedConnection, region: Region, cfg: &RuleConfig) -> Result<f64, FormError> {
    ym_on(conn, &region_rule(conn, region, cfg)?)
}

/// `YM_eps(A)` refined until the relative change drops below `tol`.
/// Returns the value and the last relative change.
pub fn ym_eps_converged(
    conn: &ChartedConnection,
    region: Region,
    cfg: &RuleConfig,
    tol: f64,
) -> Result<(f64, f64), FormError> {
    integrate_converged(
        cfg,
        tol,
        |c| region_rule(conn, region, c),
        |x| conn.energy_density(x),
    )
}

/// `∫ |F^eps_{A + sum_k c_k alpha_k}|^2` on a rule.
pub fn ym_perturbed_on(
    conn: &ChartedConnection,
    fam: &dyn JetFamily,
    coef: &[f64],
    rule: &QuadratureRule,
) -> Result<f64, FormError> {
    let eps = conn.q.eps;
    let v = integrate_family(conn, rule, fam, 1, |_, chart, x, js, out| {
        let mut a = conn.jet(chart, x);
        for (c, j) in coef.iter().zip(js) {
            a.axpy(*c, j);
        }
        let f = jet::curvature(&a, eps);
        out[0] = jet::ip2(&f, &f);
    })?;
    Ok(v[0])
}

/// Orientation sign that makes the glued family carry charge `+1`.
pub const CHARGE_SIGN: f64 = 1.0;

/// Normalised second Chern density `eps^2 tr(F ∧ F) / 8 pi^2` at `x`.
pub fn charge_density(conn: &ChartedConnection, x: &Point4) -> f64 {
    let f = conn.curvature(conn.chart_at(x), x);
    let e = conn.q.eps;
    CHARGE_SIGN * e * e * jet::wedge_self_density(&f) / (8.0 * PI * PI)
}

/// Topological charge over the connection's natural region. A tail panel
/// carrying more than [`TAIL_LIMIT`] of the total is reported as an error.
pub fn charge(conn: &ChartedConnection, cfg: &RuleConfig) -> Result<f64, FormError> {
    let rule = region_rule(conn, Region::natural(conn), cfg)?;
    let total = integrate(&rule, |x| charge_density(conn, x))?;
    if let Some(t) = rule.tail_rule() {
        let tail = integrate(&t, |x| charge_density(conn, x))?;
        if tail != 0.0 {
            let share = tail.abs() / total.abs().max(f64::MIN_POSITIVE);
            if share > TAIL_LIMIT {
                return Err(FormError::TailNotConvergent { share });
            }
        }
    }
    Ok(total)
}

/// `2 ∫ <F, d_A alpha_k>` for each member of the family.
pub fn grad_pairings_on(
    conn: &ChartedConnection,
    fam: &dyn JetFamily,
    rule: &QuadratureRule,
) -> Result<Vec<f64>, FormError> {
    let eps = conn.q.eps;
    integrate_family(conn, rule, fam, fam.len(), |_, chart, x, js, out| {
        let a = conn.jet(chart, x);
        let f = jet::curvature(&a, eps);
        for (o, j) in out.iter_mut().zip(js) {
            *o = 2.0 * jet::ip2(&f, &jet::cov_d1(&a.v, eps, j));
        }
    })
}

/// First variation `2 ∫ <F_A, d_A a>` over `region`.
pub fn grad_pairing(
    conn: &ChartedConnection,
    a: Field,
    region: Region,
    cfg: &RuleConfig,
) -> Result<f64, FormError> {
    let rule = region_rule(conn, region, cfg)?;
    Ok(grad_pairings_on(conn, &crate::basis::Fields(vec![a]), &rule)?[0])
}

/// Hessian entries `2 ∫ <d_A a, d_A b> + 2 ∫ <F_A, eps [a ∧ b]>` for all
/// `a` in `left` and `b` in `right`.
pub fn hessian_on(
    conn: &ChartedConnection,
    left: &dyn JetFamily,
    right: &dyn JetFamily,
    rule: &QuadratureRule,
) -> Result<Mat, FormError> {
    let (nl, nr) = (left.len(), right.len());
    let eps = conn.q.eps;
    let both = Concat(left, right);
    let v = integrate_family(conn, rule, &both, nl * nr, |_, chart, x, js, out| {
        let a = conn.jet(chart, x);
        let f = jet::curvature(&a, eps);
        let d: Vec<[Coef; 6]> = js.iter().map(|j| jet::cov_d1(&a.v, eps, j)).collect();
        for i in 0..nl {
            for j in 0..nr {
                let w = jet::wedge_bracket11(&js[i].v, &js[nl + j].v);
                out[i * nr + j] =
                    2.0 * jet::ip2(&d[i], &d[nl + j]) + 2.0 * eps * jet::ip2(&f, &w);
            }
        }
    })?;
    Ok((0..nl).map(|i| v[i * nr..(i + 1) * nr].to_vec()).collect())
}

/// The Hessian quadratic form `<∇²YM_eps(A) a, b>` over `region`.
pub fn hessian_form(
    conn: &ChartedConnection,
    a: Field,
    b: Field,
    region: Region,
    cfg: &RuleConfig,
) -> Result<f64, FormError> {
    let rule = region_rule(conn, region, cfg)?;
    let l = crate::basis::Fields(vec![a]);
    let r = crate::basis::Fields(vec![b]);
    Ok(hessian_on(conn, &l, &r, &rule)?[0][0])
}

/// `psi(|x - c| / s) coef` with `psi(t) = (1 - t^2)^4`, given in the `home`
/// chart and carried to the other chart by the transition of the connection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bump {
    pub center: Point4,
    pub scale: f64,
    pub coef: [Coef; 4],
    pub home: Chart,
}

impl Bump {
    pub fn eval<S: Scalar>(&self, x: &[S; 4]) -> [[S; 3]; 4] {
        let mut t2 = S::zero();
        for k in 0..4 {
            let d = x[k] - S::cst(self.center.0[k]);
            t2 = t2 + d * d;
        }
        let t2 = t2.scale(1.0 / (self.scale * self.scale));
        if t2.re() >= 1.0 {
            return [[S::zero(); 3]; 4];
        }
        let u = S::one() - t2;
        let psi = (u * u) * (u * u);
        self.coef.map(|c| c.map(|v| psi.scale(v)))
    }

    pub fn supports(&self, x: &Point4) -> bool {
        x.dist(&self.center) < self.scale
    }
}

fn random_unit(rng: &mut ChaCha8Rng) -> [f64; 4] {
    loop {
        let v: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let n2: f64 = v.iter().map(|c| c * c).sum();
        if n2 > 1e-2 && n2 <= 1.0 {
            let n = n2.sqrt();
            return v.map(|c| c / n);
        }
    }
}

/// Seeded bump fields at scales `lambda/4`, `lambda` and `0.9`, cycling in
/// that order. Centres lie within half a scale of `p` for the small ones and
/// within `0.09` of the origin for the large ones, so the polar rule about
/// `p` resolves every support; all supports stay in the unit ball. A bump is
/// given in the inner gauge when its support contains `p`.
pub fn test_bumps(conn: &ChartedConnection, n: usize, seed: u64) -> Vec<Bump> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (p, lam) = (conn.q.p, conn.q.lam);
    (0..n)
        .map(|k| {
            let (scale, base, reach) = match k % 3 {
                0 => (0.25 * lam, p, 0.125 * lam),
                1 => (lam, p, 0.5 * lam),
                _ => (0.9, Point4::default(), 0.09),
            };
            let u = random_unit(&mut rng);
            let r = reach * rng.gen::<f64>();
            let mut c = Point4(std::array::from_fn(|i| base.0[i] + r * u[i]));
            let room = 0.995 - scale;
            if c.norm() > room {
                let s = room / c.norm();
                c = Point4(c.0.map(|v| v * s));
            }
            let coef = std::array::from_fn(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)));
            let home = if c.dist(&p) < scale {
                Chart::Inner
            } else {
                Chart::Outer
            };
            Bump {
                center: c,
                scale,
                coef,
                home,
            }
        })
        .collect()
}

/// Bumps as a jet family over the charts of `conn`.
pub struct TestFields<'a> {
    pub conn: &'a ChartedConnection,
    pub bumps: &'a [Bump],
}

impl JetFamily for TestFields<'_> {
    fn len(&self) -> usize {
        self.bumps.len()
    }
    fn jets(&self, chart: Chart, x: &Point4, out: &mut [Jet1]) -> Result<(), FormError> {
        let xs = grad_point(x.0);
        let mut h: Option<[Grad4; 4]> = None;
        for (o, b) in out.iter_mut().zip(self.bumps) {
            if !b.supports(x) {
                *o = Jet1::ZERO;
                continue;
            }
            let mut v = b.eval(&xs);
            if b.home != chart {
                let t = *h.get_or_insert_with(|| self.conn.transition_generic(&xs));
                // inner = Ad(h) outer
                let q = if chart == Chart::Inner { t } else { qconj(&t) };
                for c in v.iter_mut() {
                    *c = ad_quat(&q, c);
                }
            }
            *o = Jet1::from_grad(&v);
        }
        Ok(())
    }
}

/// How a series is judged.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Check {
    /// `≃ eps^e`: fitted slope within `width` of `e`.
    Slope { width: f64 },
    /// `≲ eps^e`: the nonzero ratios to `eps^e` have max/min at most
    /// [`BOUNDED_SPREAD`] or do not grow as `eps` decreases.
    Bounded,
    /// Ratios to `eps^e` within a factor band.
    Band(f64),
    /// Fitted slope at least this value, unless all values are below [`EXACT`].
    SlopeAtLeast(f64),
    /// Every value at most this bound.
    AtMost(f64),
    Info,
}

pub const BOUNDED_SPREAD: f64 = 10.0;
/// Largest fit residual, in natural-log units, for a two-sided slope verdict.
pub const MAX_RESIDUAL: f64 = 0.1;
/// Values below this count as exactly zero for slope lower bounds.
pub const EXACT: f64 = 1e-10;

/// One quantity across a sweep.
#[derive(Clone, Debug)]
pub struct Series {
    pub quantity: String,
    pub exponent: Option<f64>,
    pub check: Check,
    /// `(eps, value)`
    pub values: Vec<(f64, f64)>,
    pub fit: Option<SlopeFit>,
    pub pass: bool,
    pub note: String,
}

impl Series {
    pub fn new(quantity: impl Into<String>, exponent: Option<f64>, check: Check) -> Self {
        Series {
            quantity: quantity.into(),
            exponent,
            check,
            values: vec![],
            fit: None,
            pass: false,
            note: String::new(),
        }
    }

    /// `value / eps^e` in sweep order.
    pub fn ratios(&self) -> Vec<f64> {
        let e = self.exponent.unwrap_or(0.0);
        self.values.iter().map(|(x, v)| v.abs() / x.powf(e)).collect()
    }

    /// Fit and verdict from the collected values.
    pub fn finish(&mut self) {
        let pts: Vec<(f64, f64)> = self
            .values
            .iter()
            .filter(|(_, v)| *v != 0.0)
            .map(|(x, v)| (*x, v.abs()))
            .collect();
        self.fit = fit_slope(&pts).ok();
        if self.values.iter().any(|(_, v)| !v.is_finite()) {
            self.pass = false;
            self.note = "non-finite value".into();
            return;
        }
        let e = self.exponent.unwrap_or(0.0);
        let slope_ok = |f: &Option<SlopeFit>| f.map(|f| f.residual < MAX_RESIDUAL).unwrap_or(false);
        match self.check {
            Check::Slope { width } => {
                self.pass = slope_ok(&self.fit)
                    && self.fit.map(|f| (f.slope - e).abs() <= width).unwrap_or(false);
                self.note = match self.fit {
                    Some(f) => format!("slope {:.4} in [{:.2}, {:.2}]", f.slope, e - width, e + width),
                    None => "no fit".into(),
                };
            }
            Check::SlopeAtLeast(s) => {
                if self.values.iter().all(|(_, v)| v.abs() < EXACT) {
                    self.pass = true;
                    self.note = "exact".into();
                } else {
                    self.pass = self.fit.map(|f| f.slope >= s).unwrap_or(false);
                    self.note = match self.fit {
                        Some(f) => format!("slope {:.4} >= {s}", f.slope),
                        None => "no fit".into(),
                    };
                }
            }
            Check::Bounded => {
                let r: Vec<f64> = self.ratios().into_iter().filter(|v| *v > 0.0).collect();
                let (lo, hi) = min_max(&r);
                let spread = if r.is_empty() { 1.0 } else { hi / lo };
                let decreasing = r.windows(2).all(|w| w[1] <= w[0]);
                self.pass = spread <= BOUNDED_SPREAD || decreasing;
                self.note = if r.is_empty() {
                    "all zero".into()
                } else {
                    format!(
                        "ratio max/min {spread:.3}{}",
                        if decreasing { ", non-increasing" } else { "" }
                    )
                };
            }
            Check::Band(b) => {
                let r = self.ratios();
                let (lo, hi) = min_max(&r);
                self.pass = !r.is_empty() && lo > 0.0 && hi / lo <= b;
                self.note = format!("ratio band {:.3} (limit {b})", hi / lo);
            }
            Check::AtMost(b) => {
                let m = self.values.iter().map(|(_, v)| v.abs()).fold(0.0, f64::max);
                self.pass = m <= b;
                self.note = format!("max {m:.3e} <= {b:e}");
            }
            Check::Info => {
                self.pass = true;
            }
        }
    }
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(*x), b.max(*x)))
}

pub const CSV_HEADER: [&str; 8] = [
    "lemma",
    "quantity",
    "eps",
    "value",
    "predicted_exponent",
    "slope",
    "residual",
    "verdict",
];

/// Values, fits and verdicts of one lemma across a sweep.
#[derive(Clone, Debug)]
pub struct EstimateReport {
    pub lemma: String,
    pub series: Vec<Series>,
    /// Relative change of a reference Gram matrix under one rule refinement.
    pub tol: Option<f64>,
    pub rule: RuleConfig,
}

impl EstimateReport {
    pub fn passed(&self) -> bool {
        self.series.iter().all(|s| s.pass)
    }

    pub fn get(&self, quantity: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.quantity == quantity)
    }

    /// CSV rows in series order, one per sweep point.
    pub fn write_csv<W: Write>(&self, w: W, header: bool) -> Result<(), csv::Error> {
        let mut wr = csv::Writer::from_writer(w);
        if header {
            wr.write_record(CSV_HEADER)?;
        }
        for s in &self.series {
            let exp = s.exponent.map(|e| e.to_string()).unwrap_or_default();
            let (slope, res) = match s.fit {
                Some(f) => (format!("{:e}", f.slope), format!("{:e}", f.residual)),
                None => (String::new(), String::new()),
            };
            let verdict = if s.pass { "pass" } else { "fail" };
            for (e, v) in &s.values {
                wr.write_record([
                    self.lemma.as_str(),
                    &s.quantity,
                    &format!("{e:e}"),
                    &format!("{v:e}"),
                    &exp,
                    &slope,
                    &res,
                    verdict,
                ])?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    /// Human-readable summary table.
    pub fn table(&self) -> String {
        let mut o = String::new();
        let _ = writeln!(o, "Lemma {}", self.lemma);
        if let Some(t) = self.tol {
            let _ = writeln!(o, "  quadrature refinement change {t:.2e}");
        }
        let _ = writeln!(
            o,
            "  {:<22} {:>8} {:>10} {:>10}  {:<6} note",
            "quantity", "exponent", "slope", "residual", "verdict"
        );
        for s in &self.series {
            let (sl, rs) = match s.fit {
                Some(f) => (format!("{:.4}", f.slope), format!("{:.2e}", f.residual)),
                None => ("-".into(), "-".into()),
            };
            let _ = writeln!(
                o,
                "  {:<22} {:>8} {:>10} {:>10}  {:<6} {}",
                s.quantity,
                s.exponent.map(|e| e.to_string()).unwrap_or("-".into()),
                sl,
                rs,
                if s.pass { "pass" } else { "FAIL" },
                s.note
            );
        }
        o
    }
}

/// The parameter points of a sweep and the numerical settings shared by all reports.
#[derive(Clone, Debug)]
pub struct Sweep {
    pub points: Vec<ParamQ>,
    pub model: Model,
    pub rule: RuleConfig,
    pub seed: u64,
    pub n_test: usize,
    /// Whether reports should measure the effect of one rule refinement.
    pub check_quadrature: bool,
}

impl Sweep {
    pub fn conn(&self, q: &ParamQ) -> ChartedConnection {
        glued_connection(*q, self.model)
    }

    /// Largest relative change of the tangent Gram diagonal at the first
    /// point when the rule is refined once.
    pub fn quadrature_change(&self) -> Result<f64, FunctionalError> {
        let Some(q) = self.points.first() else {
            return Ok(0.0);
        };
        let conn = self.conn(q);
        let g0 = Product::new(&conn, &ball_rule_for(&conn, &self.rule)?).gram(&Tangents(&conn))?;
        let g1 = Product::new(&conn, &ball_rule_for(&conn, &self.rule.refined())?)
            .gram(&Tangents(&conn))?;
        Ok((0..8)
            .map(|i| (g1[i][i] - g0[i][i]).abs() / g1[i][i])
            .fold(0.0, f64::max))
    }

    fn map_points<T: Send>(
        &self,
        f: impl Fn(&ParamQ) -> Result<T, FunctionalError> + Sync,
    ) -> Result<Vec<T>, FunctionalError> {
        self.points.par_iter().map(&f).collect()
    }

    fn report(
        &self,
        lemma: &str,
        mut series: Vec<Series>,
        values: Vec<Vec<f64>>,
    ) -> Result<EstimateReport, FunctionalError> {
        for (q, row) in self.points.iter().zip(&values) {
            for (s, v) in series.iter_mut().zip(row) {
                s.values.push((q.eps, *v));
            }
        }
        series.iter_mut().for_each(Series::finish);
        let tol = if self.check_quadrature {
            Some(self.quadrature_change()?)
        } else {
            None
        };
        Ok(EstimateReport {
            lemma: lemma.into(),
            series,
            tol,
            rule: self.rule,
        })
    }
}

const TWO_SIDED: Check = Check::Slope { width: 0.1 };

/// Pairings below this fraction of the product of norms are recorded as 0.
const PAIRING_FLOOR: f64 = 1e-10;

fn max_pairing(g: &Mat, rows: &[usize], cols: &[usize]) -> f64 {
    let mut m: f64 = 0.0;
    for &i in rows {
        for &j in cols {
            if i == j {
                continue;
            }
            let v = g[i][j].abs();
            if v > PAIRING_FLOOR * (g[i][i] * g[j][j]).sqrt() {
                m = m.max(v);
            }
        }
    }
    m
}

/// Norms and pairings of the raw tangent fields of `A(q)` in the ball product.
pub fn lemma57_report(sweep: &Sweep) -> Result<EstimateReport, FunctionalError> {
    let series = vec![
        Series::new("norm_p1", Some(-1.5), TWO_SIDED),
        Series::new("norm_xi1", Some(-1.0), TWO_SIDED),
        Series::new("norm_lambda", Some(-1.5), TWO_SIDED),
        Series::new("pair_p_p", Some(-1.5), Check::Bounded),
        Series::new("pair_xi_xi", Some(-1.0), Check::Bounded),
        Series::new("pair_p_xi", Some(-1.0), Check::Bounded),
        Series::new("pair_p_lambda", Some(-2.0), Check::Bounded),
        Series::new("pair_xi_lambda", Some(-1.5), Check::Bounded),
    ];
    let (p, xi, l) = ([0, 1, 2, 3], [4, 5, 6], [7]);
    let values = sweep.map_points(|q| {
        let conn = sweep.conn(q);
        let rule = ball_rule_for(&conn, &sweep.rule)?;
        let g = Product::new(&conn, &rule).gram(&Tangents(&conn))?;
        Ok(vec![
            g[0][0].sqrt(),
            g[4][4].sqrt(),
            g[7][7].sqrt(),
            max_pairing(&g, &p, &p),
            max_pairing(&g, &xi, &xi),
            max_pairing(&g, &p, &xi),
            max_pairing(&g, &p, &l),
            max_pairing(&g, &xi, &l),
        ])
    })?;
    sweep.report("5.7", series, values)
}

/// Exponents of `a_ii`.
pub const DIAGONAL_EXPONENTS: [f64; 8] = [1.5, 1.5, 1.5, 1.5, 1.0, 1.0, 1.0, 1.5];

/// Gram–Schmidt coefficients of the ball basis.
pub fn lemma58_report(sweep: &Sweep) -> Result<EstimateReport, FunctionalError> {
    let mut series = vec![Series::new("gram_residual", None, Check::AtMost(1e-8))];
    for (i, e) in DIAGONAL_EXPONENTS.iter().enumerate() {
        series.push(Series::new(format!("a{0}{0}", i + 1), Some(*e), Check::Band(3.0)));
    }
    series.push(Series::new("a_ij_j_le_4", Some(1.5), Check::Bounded));
    series.push(Series::new("a_ij_xi", Some(1.0), Check::Bounded));
    series.push(Series::new("a_8j", Some(1.0), Check::Bounded));
    let values = sweep.map_points(|q| {
        let conn = sweep.conn(q);
        let rule = ball_rule_for(&conn, &sweep.rule)?;
        let b = gram_schmidt_ball_on(&conn, &rule)?;
        let direct = Product::new(&conn, &rule).gram(&b.family(&Tangents(&conn)))?;
        let mut v = vec![crate::basis::max_offset_from_identity(&direct)];
        v.extend((0..8).map(|i| b.c[i][i]));
        let m = |cells: &[(usize, usize)]| cells.iter().map(|&(i, j)| b.c[i][j].abs()).fold(0.0, f64::max);
        let low: Vec<(usize, usize)> = (1..7).flat_map(|i| (0..i.min(4)).map(move |j| (i, j))).collect();
        v.push(m(&low));
        v.push(m(&[(5, 4), (6, 4), (6, 5)]));
        v.push(m(&(0..7).map(|j| (7, j)).collect::<Vec<_>>()));
        Ok(v)
    })?;
    sweep.report("5.8", series, values)
}

/// The weighted basis of `T_Ã` built from `ã_i = Ã_{q_i}`.
pub fn lemma59_report(sweep: &Sweep) -> Result<EstimateReport, FunctionalError> {
    let mut series = vec![
        Series::new("gram_residual", None, Check::AtMost(1e-8)),
        Series::new("tail_share", None, Check::AtMost(TAIL_LIMIT)),
    ];
    for i in 1..=8 {
        series.push(Series::new(format!("b{i}{i}_minus_1"), Some(1.0), Check::SlopeAtLeast(0.8)));
    }
    series.push(Series::new("b_ij", Some(1.0), Check::Bounded));
    let values = sweep.map_points(|q| {
        let conn = sweep.conn(q);
        let ball = gram_schmidt_ball_on(&conn, &ball_rule_for(&conn, &sweep.rule)?)?;
        let ext = conn.extended();
        let w = gram_schmidt_weighted(&ball, &ext, &sweep.rule)?;
        let rule = crate::basis::weighted_rule_for(&ext, &sweep.rule)?;
        let direct = Product::new(&ext, &rule).gram(&w.family(&Tangents(&ext)))?;
        let mut v = vec![crate::basis::max_offset_from_identity(&direct), w.tail_share];
        v.extend((0..8).map(|i| (w.c[i][i] - 1.0).abs()));
        let off = (1..8)
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .map(|(i, j)| w.c[i][j].abs())
            .fold(0.0, f64::max);
        v.push(off);
        Ok(v)
    })?;
    sweep.report("5.9", series, values)
}

/// `‖a_i - ã_i‖_{A;1,2;B^4}` for `i = 1..8`, with `ã_i` the derivative of
/// `tilde` along the same `q_i`, evaluated in the charts of `conn`.
pub fn lemma36_point(
    conn: &ChartedConnection,
    tilde: &ChartedConnection,
    basis: &GramBasis,
    rule: &QuadratureRule,
) -> Result<[f64; 8], FormError> {
    let (ta, tt) = (Tangents(conn), Tangents(tilde));
    let both = Concat(&ta, &tt);
    let coef = basis
        .raw
        .iter()
        .map(|r| r.iter().copied().chain(r.iter().map(|v| -v)).collect())
        .collect();
    let diff = Combos { base: &both, coef };
    let g = Product::new(conn, rule).gram(&diff)?;
    Ok(std::array::from_fn(|i| g[i][i].max(0.0).sqrt()))
}

pub fn lemma36_report(sweep: &Sweep) -> Result<EstimateReport, FunctionalError> {
    let series = (1..=8)
        .map(|i| Series::new(format!("diff_a{i}"), Some(if i <= 4 { 1.5 } else { 1.0 }), Check::Bounded))
        .collect();
    let values = sweep.map_points(|q| {
        let conn = sweep.conn(q);
        let rule = ball_rule_for(&conn, &sweep.rule)?;
        let basis = gram_schmidt_ball_on(&conn, &rule)?;
        Ok(lemma36_point(&conn, &conn.extended(), &basis, &rule)?.to_vec())
    })?;
    sweep.report("3.6", series, values)
}

/// Sampled dual norms at one parameter point.
#[derive(Clone, Debug, PartialEq)]
pub struct Lemma37Point {
    /// `max_beta |(H_A - H_Ã)(a_i, beta)| / ‖beta‖`
    pub hessian: [f64; 8],
    /// `max_beta |∫(d*_A a_i, d*_A beta) - ∫(d*_Ã a_i, d*_Ã beta)| / ‖beta‖`
    pub codiff: [f64; 8],
    /// Largest mismatch between the direct Hessian difference and the sum of
    /// the five expansion terms, relative to the sum of their magnitudes.
    pub five_term_residual: f64,
    /// `‖beta‖_{A;1,2}` of each test field.
    pub test_norms: Vec<f64>,
}

/// The Hessian and `d d*` differences of `conn` and `tilde` along the basis
/// fields, tested against `bumps` on the ball.
pub fn lemma37_point(
    conn: &ChartedConnection,
    tilde: &ChartedConnection,
    basis: &GramBasis,
    rule: &QuadratureRule,
    bumps: &[Bump],
) -> Result<Lemma37Point, FunctionalError> {
    let nb = bumps.len();
    let eps = conn.q.eps;
    let tests = TestFields { conn, bumps };
    let pairs = 8 * nb;
    // layout: norms, then per pair (direct, expansion, magnitude, codiff)
    let m = nb + 4 * pairs;
    let v = integrate_family(conn, rule, &tests, m, |k, chart, x, bs, out| {
        let tj = conn.tangent_jets(chart, x);
        let a = tj.a;
        let at = tilde.jet(chart, x);
        let b = at.sub(&a);
        let fa = jet::curvature(&a, eps);
        let ft = jet::curvature(&at, eps);
        let db = jet::cov_d1(&a.v, eps, &b);
        let bb = jet::wedge_bracket11(&b.v, &b.v);
        struct Pre {
            v: [Coef; 4],
            da: [Coef; 6],
            dt: [Coef; 6],
            wb: [Coef; 6],
            sa: Coef,
            st: Coef,
        }
        let pre = |j: &Jet1| Pre {
            v: j.v,
            da: jet::cov_d1(&a.v, eps, j),
            dt: jet::cov_d1(&at.v, eps, j),
            wb: jet::wedge_bracket11(&b.v, &j.v),
            sa: jet::codiff1(&a.v, eps, j),
            st: jet::codiff1(&at.v, eps, j),
        };
        let ai: Vec<Pre> = (0..8).map(|i| pre(&combine(&basis.raw[i], &tj.d))).collect();
        let be: Vec<Option<Pre>> = bs
            .iter()
            .map(|j| if *j == Jet1::ZERO { None } else { Some(pre(j)) })
            .collect();
        for (j, bj) in bs.iter().enumerate() {
            let g = jet::cov_grad(&a.v, eps, bj);
            out[j] = jet::ip_grad(&g, &g) + rule.aux[k] * jet::ip1(&bj.v, &bj.v);
        }
        for (i, p) in ai.iter().enumerate() {
            for (j, q) in be.iter().enumerate() {
                let Some(q) = q else { continue };
                let w = jet::wedge_bracket11(&p.v, &q.v);
                let ha = 2.0 * jet::ip2(&p.da, &q.da) + 2.0 * eps * jet::ip2(&fa, &w);
                let ht = 2.0 * jet::ip2(&p.dt, &q.dt) + 2.0 * eps * jet::ip2(&ft, &w);
                let t = [
                    eps * jet::ip2(&p.da, &q.wb),
                    eps * jet::ip2(&p.wb, &q.da),
                    eps * jet::ip2(&db, &w),
                    eps * eps * jet::ip2(&p.wb, &q.wb),
                    0.5 * eps * eps * jet::ip2(&bb, &w),
                ];
                let o = nb + 4 * (i * nb + j);
                out[o] = ha - ht;
                out[o + 1] = -2.0 * t.iter().sum::<f64>();
                out[o + 2] = 2.0 * t.iter().map(|v| v.abs()).sum::<f64>()
                    + HESSIAN_ROUNDOFF * (ha.abs() + ht.abs());
                out[o + 3] = jet::ip3(&p.sa, &q.sa) - jet::ip3(&p.st, &q.st);
            }
        }
    })?;
    let norms: Vec<f64> = v[..nb].iter().map(|n| n.max(0.0).sqrt()).collect();
    if let Some(j) = norms.iter().position(|n| !(*n > 0.0)) {
        return Err(FunctionalError::DegenerateTestField(j));
    }
    let mut hessian = [0.0; 8];
    let mut codiff = [0.0; 8];
    let mut resid: f64 = 0.0;
    for i in 0..8 {
        for j in 0..nb {
            let o = nb + 4 * (i * nb + j);
            hessian[i] = f64::max(hessian[i], v[o].abs() / norms[j]);
            codiff[i] = f64::max(codiff[i], v[o + 3].abs() / norms[j]);
            if v[o + 2] > 0.0 {
                resid = resid.max((v[o] - v[o + 1]).abs() / v[o + 2]);
            }
        }
    }
    Ok(Lemma37Point {
        hessian,
        codiff,
        five_term_residual: resid,
        test_norms: norms,
    })
}

/// Where `b` vanishes on a test field the direct difference is pure
/// cancellation error; the expansion size is floored at this share of the
/// Hessians so those pairs do not dominate the residual.
pub const HESSIAN_ROUNDOFF: f64 = 1e-6;

pub fn lemma37_report(sweep: &Sweep) -> Result<EstimateReport, FunctionalError> {
    let mut series: Vec<Series> = (1..=8)
        .map(|i| Series::new(format!("hessian_a{i}"), Some(1.5), Check::Bounded))
        .collect();
    series.extend((1..=8).map(|i| Series::new(format!("codiff_a{i}"), Some(1.5), Check::Bounded)));
    series.push(Series::new("five_term_residual", None, Check::AtMost(1e-8)));
    let values = sweep.map_points(|q| {
        let conn = sweep.conn(q);
        let rule = ball_rule_for(&conn, &sweep.rule)?;
        let basis = gram_schmidt_ball_on(&conn, &rule)?;
        let bumps = test_bumps(&conn, sweep.n_test, sweep.seed);
        let r = lemma37_point(&conn, &conn.extended(), &basis, &rule, &bumps)?;
        let mut v = r.hessian.to_vec();
        v.extend(r.codiff);
        v.push(r.five_term_residual);
        Ok(v)
    })?;
    sweep.report("3.7", series, values)
}

/// `(a_1)_{q_1}^⊥` at one parameter point, by the analytic and the
/// finite-difference path.
#[derive(Clone, Debug, PartialEq)]
pub struct Lemma310Point {
    pub analytic: f64,
    pub fd: f64,
    pub inner: f64,
    pub outer: f64,
    pub orthogonality: f64,
}

/// Relative step of the finite-difference path.
pub const FD_REL_STEP: f64 = 1e-3;

pub fn lemma310_point(
    conn: &ChartedConnection,
    rule: &QuadratureRule,
) -> Result<Lemma310Point, FunctionalError> {
    let basis = gram_schmidt_ball_on(conn, rule)?;
    let fd = basis_directional_derivative(conn, &basis, rule, 0, 0, FD_REL_STEP)?;
    let a11 = basis.c[0][0];
    let ana = ScaledSecondP1 {
        conn,
        factor: a11 * a11,
    };
    let r = perp_reports(conn, &basis, rule, &Concat(&ana, &fd))?;
    Ok(Lemma310Point {
        analytic: r[0].norm,
        fd: r[1].norm,
        inner: r[0].inner_sq.max(0.0).sqrt(),
        outer: r[0].outer_sq.max(0.0).sqrt(),
        orthogonality: r[0].orthogonality.max(r[1].orthogonality),
    })
}

pub fn lemma310_report(sweep: &Sweep) -> Result<EstimateReport, FunctionalError> {
    let series = vec![
        Series::new("perp_analytic", Some(1.0), Check::SlopeAtLeast(0.8)),
        Series::new("perp_fd", Some(1.0), Check::SlopeAtLeast(0.8)),
        Series::new("path_mismatch", None, Check::AtMost(0.05)),
        Series::new("orthogonality", None, Check::AtMost(1e-8)),
        Series::new("perp_inner", Some(1.0), Check::Bounded),
        Series::new("perp_outer", Some(1.0), Check::Bounded),
    ];
    let values = sweep.map_points(|q| {
        let conn = sweep.conn(q);
        let rule = ball_rule_for(&conn, &sweep.rule)?;
        let r = lemma310_point(&conn, &rule)?;
        Ok(vec![
            r.analytic,
            r.fd,
            (r.fd - r.analytic).abs() / r.analytic,
            r.orthogonality,
            r.inner,
            r.outer,
        ])
    })?;
    sweep.report("3.10", series, values)
}
