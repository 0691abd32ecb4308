//! Sweep configuration, slope fitting, output files and the command line.
//!
//! Exit codes: 0 when every verdict passes, 1 on a failed verdict, 2 on a
//! usage or configuration error, 3 on a numerical or I/O failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use thiserror::Error;

use crate::basis::{ball_rule_for, gram_schmidt_ball_on, gram_schmidt_weighted};
use crate::forms::{dump_field, AngularOrder, Point4, RuleConfig};
use crate::functionals::{
    charge, lemma310_report, lemma36_report, lemma37_report, lemma57_report, lemma58_report,
    lemma59_report, ym_eps, ym_eps_converged, Check, EstimateReport, FunctionalError, Region,
    Series, Sweep,
};
use crate::instanton::{Background, Constraints, Model, ParamQ, Pi2Strategy};
use crate::liealg::GroupElement;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// RMS deviation from the fitted line in natural-log units.
    pub residual: f64,
    pub n: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("a slope fit needs at least 3 points, got {0}")]
    TooFew(usize),
    #[error("value {value} at eps {eps} is not positive")]
    NonPositive { eps: f64, value: f64 },
}

/// Least-squares line through `(ln eps, ln value)`.
pub fn fit_slope(pairs: &[(f64, f64)]) -> Result<SlopeFit, FitError> {
    if pairs.len() < 3 {
        return Err(FitError::TooFew(pairs.len()));
    }
    for &(eps, value) in pairs {
        if !(value > 0.0 && eps > 0.0) || !value.is_finite() {
            return Err(FitError::NonPositive { eps, value });
        }
    }
    let n = pairs.len() as f64;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok(SlopeFit {
        slope,
        intercept,
        residual: (ss / n).sqrt(),
        n: pairs.len(),
    })
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Numerical(#[from] FunctionalError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            _ => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pi2Choice {
    /// `PI^2 = I^2` outside radius `d0/2`.
    Cutoff,
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackgroundChoice {
    Default,
    Zero,
}

/// Contents of the configuration file; every key is optional.
///
/// ```toml
/// [sweep]
/// eps = [0.0625, 0.03125, 0.015625, 0.0078125, 0.00390625, 0.001953125]
/// ratio_d = 1.0          # lambda^2 / eps
/// p = [0.0, 0.0, 0.0, 0.0]
/// g = [1.0, 0.0, 0.0, 0.0]   # unit quaternion
///
/// [constraints]
/// d0 = 0.6
/// lam0 = 0.29
/// d1 = 0.5
/// d2 = 2.0
///
/// [numerics]
/// tol = 1e-4
/// seed = 1
/// n_test = 32
/// gauss = 8
/// split = 1
/// angular = [8, 8, 16]
/// pi2 = "cutoff"         # or "zero"
/// background = "default" # or "zero"
///
/// [output]
/// dir = "out"
/// ```
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub sweep: SweepSection,
    pub constraints: Constraints,
    pub numerics: Numerics,
    pub output: Output,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub eps: Vec<f64>,
    pub ratio_d: f64,
    pub p: [f64; 4],
    pub g: [f64; 4],
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    pub tol: f64,
    pub seed: u64,
    pub n_test: usize,
    pub gauss: usize,
    pub split: usize,
    pub angular: [usize; 3],
    pub pi2: Pi2Choice,
    pub background: BackgroundChoice,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Output {
    pub dir: PathBuf,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            eps: (4..=9).map(|k| 0.5f64.powi(k)).collect(),
            ratio_d: 1.0,
            p: [0.0; 4],
            g: [1.0, 0.0, 0.0, 0.0],
        }
    }
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            tol: 1e-4,
            seed: 1,
            n_test: 32,
            gauss: 8,
            split: 1,
            angular: [8, 8, 16],
            pi2: Pi2Choice::Cutoff,
            background: BackgroundChoice::Default,
        }
    }
}

impl Default for Output {
    fn default() -> Self {
        Output { dir: "out".into() }
    }
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            sweep: SweepSection::default(),
            constraints: Constraints::default(),
            numerics: Numerics::default(),
            output: Output::default(),
        }
    }
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        self.constraints
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        let c = &self.constraints;
        let d = self.sweep.ratio_d;
        if !(c.d1 < d && d < c.d2) {
            return bad(format!("ratio_d = {d} must lie in ({}, {})", c.d1, c.d2));
        }
        let e = &self.sweep.eps;
        if e.len() < 4 {
            return bad(format!("the eps list needs at least 4 points, got {}", e.len()));
        }
        if e.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return bad("eps values must be positive".into());
        }
        if e.windows(2).any(|w| w[1] >= w[0]) {
            return bad("the eps list must be strictly decreasing".into());
        }
        if !(self.numerics.tol > 0.0) {
            return bad(format!("tol = {} must be positive", self.numerics.tol));
        }
        let n = &self.numerics;
        if n.n_test == 0 || n.gauss == 0 || n.split == 0 || n.angular.contains(&0) {
            return bad("n_test, gauss, split and angular orders must be positive".into());
        }
        self.points()?;
        Ok(())
    }

    pub fn group(&self) -> Result<GroupElement, HarnessError> {
        let [a, b, c, d] = self.sweep.g;
        GroupElement::new(a, b, c, d).map_err(|e| HarnessError::Config(format!("g: {e}")))
    }

    pub fn points(&self) -> Result<Vec<ParamQ>, HarnessError> {
        let g = self.group()?;
        let p = Point4(self.sweep.p);
        self.sweep
            .eps
            .iter()
            .map(|&e| {
                ParamQ::new(p, g, (self.sweep.ratio_d * e).sqrt(), e, &self.constraints)
                    .map_err(|err| HarnessError::Config(format!("eps = {e}: {err}")))
            })
            .collect()
    }

    pub fn rule(&self) -> RuleConfig {
        let [n_chi, n_theta, n_phi] = self.numerics.angular;
        RuleConfig {
            gauss: self.numerics.gauss,
            split: self.numerics.split,
            angular: AngularOrder {
                n_chi,
                n_theta,
                n_phi,
            },
            ..RuleConfig::default()
        }
    }

    pub fn model(&self) -> Model {
        let bg = match self.numerics.background {
            BackgroundChoice::Default => Background::default(),
            BackgroundChoice::Zero => Background::zero(),
        };
        let pi2 = match self.numerics.pi2 {
            Pi2Choice::Cutoff => Pi2Strategy::default_for(&self.constraints),
            Pi2Choice::Zero => Pi2Strategy::Zero,
        };
        Model::new(bg, pi2)
    }

    pub fn sweep(&self, check_quadrature: bool) -> Result<Sweep, HarnessError> {
        Ok(Sweep {
            points: self.points()?,
            model: self.model(),
            rule: self.rule(),
            seed: self.numerics.seed,
            n_test: self.numerics.n_test,
            check_quadrature,
        })
    }
}

/// File stem used for a report's outputs.
pub fn report_stem(report: &EstimateReport) -> String {
    let tag: String = report
        .lemma
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    if report.lemma.chars().next().is_some_and(|c| c.is_ascii_digit()) {
        format!("lemma_{tag}")
    } else {
        tag
    }
}

/// Write `<stem>.csv` and `<stem>.svg` into `dir`. Returns the paths written.
pub fn emit_outputs(report: &EstimateReport, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir)?;
    let stem = report_stem(report);
    let csv_path = dir.join(format!("{stem}.csv"));
    report.write_csv(fs::File::create(&csv_path)?, true)?;
    let svg_path = dir.join(format!("{stem}.svg"));
    fs::write(&svg_path, render_svg(report))?;
    Ok(vec![csv_path, svg_path])
}

pub const SVG_WIDTH: f64 = 1000.0;
pub const SVG_HEIGHT: f64 = 700.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

/// Log-log plot of every series with positive values, with fitted lines.
pub fn render_svg(report: &EstimateReport) -> String {
    let (ml, mr, mt, mb) = (90.0, 230.0, 50.0, 70.0);
    let (pw, ph) = (SVG_WIDTH - ml - mr, SVG_HEIGHT - mt - mb);
    let plotted: Vec<&Series> = report
        .series
        .iter()
        .filter(|s| s.values.iter().any(|(_, v)| *v > 0.0 && v.is_finite()))
        .collect();
    let pts = plotted
        .iter()
        .flat_map(|s| s.values.iter())
        .filter(|(_, v)| *v > 0.0 && v.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (e, v) in pts {
        x0 = x0.min(e.log10());
        x1 = x1.max(e.log10());
        y0 = y0.min(v.log10());
        y1 = y1.max(v.log10());
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (-1.0, 0.0, -1.0, 0.0);
    }
    let padx = ((x1 - x0) * 0.05).max(0.05);
    let pady = ((y1 - y0) * 0.05).max(0.05);
    let (x0, x1, y0, y1) = (x0 - padx, x1 + padx, y0 - pady, y1 + pady);
    let sx = |lx: f64| ml + (lx - x0) / (x1 - x0) * pw;
    let sy = |ly: f64| mt + (y1 - ly) / (y1 - y0) * ph;
    let mut o = String::new();
    let _ = writeln!(
        o,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(o, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        o,
        r#"<text x="{}" y="28" font-size="16" text-anchor="middle">Lemma {} (log-log)</text>"#,
        ml + pw / 2.0,
        report.lemma
    );
    let _ = writeln!(
        o,
        r#"<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for k in (x0.ceil() as i32)..=(x1.floor() as i32) {
        let x = sx(k as f64);
        let _ = writeln!(
            o,
            r##"<line x1="{x:.2}" y1="{mt}" x2="{x:.2}" y2="{:.2}" stroke="#ddd"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">1e{k}</text>"##,
            mt + ph,
            mt + ph + 18.0
        );
    }
    // eps ticks at the sweep points
    if let Some(s) = plotted.first() {
        for (e, _) in &s.values {
            let x = sx(e.log10());
            let _ = writeln!(
                o,
                r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#,
                mt + ph,
                mt + ph - 6.0
            );
        }
    }
    for k in (y0.ceil() as i32)..=(y1.floor() as i32) {
        let y = sy(k as f64);
        let _ = writeln!(
            o,
            r##"<line x1="{ml}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{k}</text>"##,
            ml + pw,
            ml - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        o,
        r#"<text x="{}" y="{}" text-anchor="middle">eps</text>"#,
        ml + pw / 2.0,
        SVG_HEIGHT - 20.0
    );
    for (n, s) in plotted.iter().enumerate() {
        let col = PALETTE[n % PALETTE.len()];
        for (e, v) in s.values.iter().filter(|(_, v)| *v > 0.0 && v.is_finite()) {
            let _ = writeln!(
                o,
                r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{col}"/>"#,
                sx(e.log10()),
                sy(v.log10())
            );
        }
        if let Some(f) = s.fit {
            // ln v = a + b ln e  =>  log10 v = a / ln 10 + b log10 e
            let ly = |lx: f64| f.intercept / std::f64::consts::LN_10 + f.slope * lx;
            let (a, b) = (x0 + padx, x1 - padx);
            let _ = writeln!(
                o,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{col}" stroke-dasharray="6 4"/>"#,
                sx(a),
                sy(ly(a)).clamp(mt, mt + ph),
                sx(b),
                sy(ly(b)).clamp(mt, mt + ph)
            );
        }
        let ly = mt + 16.0 + 18.0 * n as f64;
        let slope = s.fit.map(|f| format!(" {:.3}", f.slope)).unwrap_or_default();
        let _ = writeln!(
            o,
            r#"<rect x="{:.2}" y="{:.2}" width="10" height="10" fill="{col}"/><text x="{:.2}" y="{:.2}">{}{slope}</text>"#,
            ml + pw + 15.0,
            ly - 9.0,
            ml + pw + 30.0,
            ly,
            s.quantity
        );
    }
    o.push_str("</svg>\n");
    o
}

#[derive(Parser, Debug)]
#[command(name = "ymlab", about = "Glued instantons and the scaling estimates of the eps-Yang-Mills functional")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Comma-separated eps values, strictly decreasing.
    #[arg(long, global = true, value_delimiter = ',')]
    pub eps_list: Option<Vec<f64>>,
    /// lambda^2 / eps.
    #[arg(long = "ratio-D", global = true)]
    pub ratio_d: Option<f64>,
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Seed of the test-field family.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Topological charge of the extended connection at each eps.
    Charge,
    /// eps^2 YM_eps of the extended connection against 8 pi^2, and YM_eps of A(q) on the ball.
    Energy,
    /// Gram–Schmidt tables of both bases at each eps.
    BuildBasis,
    /// Two-sided scaling of the tangent norms and basis coefficients.
    VerifyScaling,
    /// One lemma report.
    VerifyLemma {
        #[arg(value_enum)]
        lemma: LemmaId,
    },
    /// Sample a field along the x0 axis at the first eps.
    DumpField {
        #[arg(long, value_enum, default_value_t = DumpKind::Glued)]
        field: DumpKind,
        #[arg(long, default_value_t = 101)]
        points: usize,
    },
    /// Every report.
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LemmaId {
    #[value(name = "5.7")]
    L57,
    #[value(name = "5.8")]
    L58,
    #[value(name = "5.9")]
    L59,
    #[value(name = "3.6")]
    L36,
    #[value(name = "3.7")]
    L37,
    #[value(name = "3.10")]
    L310,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DumpKind {
    /// `A(q)`
    Glued,
    /// `Ã(q)`
    Extended,
    /// `b = Ã(q) - A(q)`
    Difference,
}

impl Cli {
    /// The configuration file (or defaults) with command-line overrides applied.
    pub fn config(&self) -> Result<SweepConfig, HarnessError> {
        let mut c = match &self.config {
            Some(p) => SweepConfig::load(p)?,
            None => SweepConfig::default(),
        };
        if let Some(e) = &self.eps_list {
            c.sweep.eps = e.clone();
        }
        if let Some(d) = self.ratio_d {
            c.sweep.ratio_d = d;
        }
        if let Some(t) = self.tol {
            c.numerics.tol = t;
        }
        if let Some(s) = self.seed {
            c.numerics.seed = s;
        }
        if let Some(o) = &self.out {
            c.output.dir = o.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

pub fn lemma_report(id: LemmaId, sweep: &Sweep) -> Result<EstimateReport, FunctionalError> {
    match id {
        LemmaId::L57 => lemma57_report(sweep),
        LemmaId::L58 => lemma58_report(sweep),
        LemmaId::L59 => lemma59_report(sweep),
        LemmaId::L36 => lemma36_report(sweep),
        LemmaId::L37 => lemma37_report(sweep),
        LemmaId::L310 => lemma310_report(sweep),
    }
}

/// Largest allowed `|Q - 1|` and relative energy error.
pub const CHARGE_TOL: f64 = 1e-2;
pub const ENERGY_TOL: f64 = 1e-2;

pub fn charge_report(sweep: &Sweep) -> Result<EstimateReport, FunctionalError> {
    let mut s = Series::new("charge", None, Check::Info);
    let mut d = Series::new("charge_minus_1", None, Check::AtMost(CHARGE_TOL));
    for q in &sweep.points {
        let ext = sweep.conn(q).extended();
        let v = charge(&ext, &sweep.rule)?;
        s.values.push((q.eps, v));
        d.values.push((q.eps, (v - 1.0).abs()));
    }
    s.finish();
    d.finish();
    Ok(EstimateReport {
        lemma: "charge".into(),
        series: vec![s, d],
        tol: None,
        rule: sweep.rule,
    })
}

pub fn energy_report(sweep: &Sweep, tol: f64) -> Result<EstimateReport, FunctionalError> {
    let target = 8.0 * std::f64::consts::PI.powi(2);
    let mut e = Series::new("eps2_ym_extended", None, Check::Info);
    let mut r = Series::new("energy_rel_error", None, Check::AtMost(ENERGY_TOL));
    let mut g = Series::new("ym_glued_ball", Some(-2.0), Check::Info);
    let mut change: f64 = 0.0;
    for q in &sweep.points {
        let conn = sweep.conn(q);
        let (v, err) = ym_eps_converged(&conn.extended(), Region::R4, &sweep.rule, tol)?;
        change = change.max(err);
        let v = q.eps * q.eps * v;
        e.values.push((q.eps, v));
        r.values.push((q.eps, (v - target).abs() / target));
        g.values.push((q.eps, ym_eps(&conn, Region::Ball, &sweep.rule)?));
    }
    for s in [&mut e, &mut r, &mut g] {
        s.finish();
    }
    Ok(EstimateReport {
        lemma: "energy".into(),
        series: vec![e, r, g],
        tol: Some(change),
        rule: sweep.rule,
    })
}

fn print_report(report: &EstimateReport) {
    print!("{}", report.table());
}

fn finish_report(report: &EstimateReport, dir: &Path) -> Result<bool, HarnessError> {
    print_report(report);
    emit_outputs(report, dir)?;
    Ok(report.passed())
}

fn build_basis(cfg: &SweepConfig, sweep: &Sweep) -> Result<bool, HarnessError> {
    let dir = &cfg.output.dir;
    fs::create_dir_all(dir)?;
    let mut ball = fs::File::create(dir.join("basis_ball.csv"))?;
    let mut weighted = fs::File::create(dir.join("basis_weighted.csv"))?;
    let mut ok = true;
    for (k, q) in sweep.points.iter().enumerate() {
        let conn = sweep.conn(q);
        let b = gram_schmidt_ball_on(&conn, &ball_rule_for(&conn, &sweep.rule).map_err(FunctionalError::from)?)
            .map_err(FunctionalError::from)?;
        let w = gram_schmidt_weighted(&b, &conn.extended(), &sweep.rule).map_err(FunctionalError::from)?;
        b.write_csv(&mut ball, k == 0)?;
        w.write_csv(&mut weighted, k == 0)?;
        println!(
            "eps {:e}: ball residual {:.2e} cond {:.2e}; weighted residual {:.2e} cond {:.2e} tail {:.2e}",
            q.eps, b.gram_residual, b.cond, w.gram_residual, w.cond, w.tail_share
        );
        ok &= b.gram_residual <= 1e-8 && w.gram_residual <= 1e-8;
    }
    Ok(ok)
}

fn dump(cfg: &SweepConfig, sweep: &Sweep, kind: DumpKind, n: usize) -> Result<bool, HarnessError> {
    if n < 2 {
        return Err(HarnessError::Config("dump-field needs at least 2 points".into()));
    }
    let conn = sweep.conn(&sweep.points[0]);
    let field = match kind {
        DumpKind::Glued => conn.field(),
        DumpKind::Extended => conn.extended().field(),
        DumpKind::Difference => conn.difference_b(),
    };
    let pts: Vec<Point4> = (0..n)
        .map(|k| {
            let t = -0.99 + 1.98 * k as f64 / (n - 1) as f64;
            Point4::new(t, 0.013, -0.007, 0.005)
        })
        .collect();
    fs::create_dir_all(&cfg.output.dir)?;
    let path = cfg.output.dir.join("field.csv");
    let mut f = std::io::BufWriter::new(fs::File::create(&path)?);
    dump_field(&mut f, &field, &pts)?;
    println!("wrote {}", path.display());
    Ok(true)
}

fn execute(cli: &Cli) -> Result<bool, HarnessError> {
    let cfg = cli.config()?;
    let dir = cfg.output.dir.clone();
    match &cli.command {
        Command::Charge => {
            let sweep = cfg.sweep(false)?;
            let r = charge_report(&sweep)?;
            for (e, v) in &r.series[0].values {
                println!("eps {e:e}: charge {v:.4} (target 1.00 ± {CHARGE_TOL})");
            }
            finish_report(&r, &dir)
        }
        Command::Energy => {
            let sweep = cfg.sweep(false)?;
            finish_report(&energy_report(&sweep, cfg.numerics.tol)?, &dir)
        }
        Command::BuildBasis => build_basis(&cfg, &cfg.sweep(false)?),
        Command::VerifyScaling => {
            let sweep = cfg.sweep(false)?;
            let mut ok = true;
            for id in [LemmaId::L57, LemmaId::L58] {
                ok &= finish_report(&lemma_report(id, &sweep)?, &dir)?;
            }
            Ok(ok)
        }
        Command::VerifyLemma { lemma } => {
            let sweep = cfg.sweep(false)?;
            finish_report(&lemma_report(*lemma, &sweep)?, &dir)
        }
        Command::DumpField { field, points } => dump(&cfg, &cfg.sweep(false)?, *field, *points),
        Command::All => {
            let sweep = cfg.sweep(false)?;
            let mut ok = true;
            let mut summary = String::new();
            let mut reports = vec![charge_report(&sweep)?, energy_report(&sweep, cfg.numerics.tol)?];
            for id in [
                LemmaId::L57,
                LemmaId::L58,
                LemmaId::L59,
                LemmaId::L36,
                LemmaId::L37,
                LemmaId::L310,
            ] {
                reports.push(lemma_report(id, &sweep)?);
            }
            for r in &reports {
                ok &= finish_report(r, &dir)?;
                let _ = writeln!(
                    summary,
                    "{} {}",
                    r.lemma,
                    if r.passed() { "pass" } else { "fail" }
                );
            }
            fs::write(dir.join("summary.txt"), &summary)?;
            print!("{summary}");
            Ok(ok)
        }
    }
}

/// Run the command line and return the process exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
