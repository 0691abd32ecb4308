//! Polar product rules on balls, clipped balls and inverted exteriors, with a
//! deterministic chunked pairwise reduction.

use std::f64::consts::PI;

use rayon::prelude::*;

use super::{FormError, Point4};

const CHUNK: usize = 512;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
                p1 = z;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Orders of the product rule on S^3.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AngularOrder {
    pub n_chi: usize,
    pub n_theta: usize,
    pub n_phi: usize,
}

impl AngularOrder {
    pub fn count(&self) -> usize {
        self.n_chi * self.n_theta * self.n_phi
    }
}

/// Unit directions and weights on S^3; the weights sum to `2 pi^2`.
///
/// Directions are `(cos chi, sin chi cos th, sin chi sin th cos ph, sin chi sin th sin ph)`.
/// `cos chi` uses Gauss–Chebyshev of the second kind, `cos th` Gauss–Legendre,
/// `ph` the trapezoid rule.
pub fn sphere_rule(o: AngularOrder) -> Vec<([f64; 4], f64)> {
    let (ut, uw) = gauss_legendre(o.n_theta);
    let mut out = Vec::with_capacity(o.count());
    let m = o.n_chi + 1;
    for k in 1..=o.n_chi {
        let a = k as f64 * PI / m as f64;
        let (t, s) = (a.cos(), a.sin());
        let wc = PI / m as f64 * s * s;
        for (u, wu) in ut.iter().zip(uw.iter()) {
            let su = (1.0 - u * u).sqrt();
            for j in 0..o.n_phi {
                let ph = 2.0 * PI * (j as f64 + 0.5) / o.n_phi as f64;
                let wp = 2.0 * PI / o.n_phi as f64;
                let dir = [t, s * u, s * su * ph.cos(), s * su * ph.sin()];
                out.push((dir, wc * wu * wp));
            }
        }
    }
    out
}

/// Resolution knobs shared by all rule builders.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RuleConfig {
    /// Gauss points per radial panel.
    pub gauss: usize,
    /// Each panel is further split into this many equal pieces.
    pub split: usize,
    pub angular: AngularOrder,
    /// Exterior `s = r0/r` panels are `[2^-k-1, 2^-k]` for `k < tail_levels`, then one tail panel.
    pub tail_levels: usize,
    pub max_nodes: usize,
}

impl Default for RuleConfig {
    fn default() -> Self {
        RuleConfig {
            gauss: 8,
            split: 1,
            angular: AngularOrder {
                n_chi: 8,
                n_theta: 8,
                n_phi: 16,
            },
            tail_levels: 12,
            max_nodes: 4_000_000,
        }
    }
}

impl RuleConfig {
    /// One refinement doubling: radial panels halved, angular orders doubled.
    pub fn refined(&self) -> RuleConfig {
        RuleConfig {
            split: self.split * 2,
            angular: AngularOrder {
                n_chi: self.angular.n_chi * 2,
                n_theta: self.angular.n_theta * 2,
                n_phi: self.angular.n_phi * 2,
            },
            ..*self
        }
    }
}

/// A positive-weight rule with an auxiliary per-node weight function value.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub nodes: Vec<Point4>,
    pub weights: Vec<f64>,
    /// Extra weight `w(x)` evaluated at each node (1 unless the rule is weighted).
    pub aux: Vec<f64>,
    pub center: Point4,
    pub scales: Vec<f64>,
    pub tol: f64,
    /// Node indices of the outermost exterior panel (`s` near 0), if any.
    pub tail: Option<(usize, usize)>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes `a..b` as a rule of their own.
    pub fn slice(&self, a: usize, b: usize) -> QuadratureRule {
        QuadratureRule {
            nodes: self.nodes[a..b].to_vec(),
            weights: self.weights[a..b].to_vec(),
            aux: self.aux[a..b].to_vec(),
            center: self.center,
            scales: vec![],
            tol: self.tol,
            tail: None,
        }
    }

    /// The outermost exterior panel, if the rule has one.
    pub fn tail_rule(&self) -> Option<QuadratureRule> {
        self.tail.map(|(a, b)| self.slice(a, b))
    }

    fn append(&mut self, o: QuadratureRule) {
        let off = self.nodes.len();
        self.nodes.extend(o.nodes);
        self.weights.extend(o.weights);
        self.aux.extend(o.aux);
        if let Some((a, b)) = o.tail {
            self.tail = Some((a + off, b + off));
        }
    }
}

fn scale_breaks(lam: f64, rmax: f64, extra: &[f64]) -> Vec<f64> {
    let mut b = vec![0.0, lam / 4.0, lam / 2.0, lam, 2.0 * lam];
    let mut r = 4.0 * lam;
    while r < rmax {
        b.push(r);
        r *= 2.0;
    }
    b.extend(extra.iter().copied().filter(|&e| e > 0.0));
    b.retain(|&r| r < rmax * (1.0 - 1e-12));
    b.push(rmax);
    b.sort_by(|x, y| x.partial_cmp(y).expect("finite breaks"));
    b.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * y.abs().max(1e-300));
    b
}

fn radial_nodes(breaks: &[f64], cfg: &RuleConfig, gl: &(Vec<f64>, Vec<f64>)) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for win in breaks.windows(2) {
        let h = (win[1] - win[0]) / cfg.split as f64;
        for s in 0..cfg.split {
            let a = win[0] + s as f64 * h;
            for (t, w) in gl.0.iter().zip(gl.1.iter()) {
                let r = a + 0.5 * h * (t + 1.0);
                out.push((r, 0.5 * h * w * r * r * r));
            }
        }
    }
    out
}

fn check_cfg(lam: f64, cfg: &RuleConfig) -> Result<(), FormError> {
    if !(lam > 0.0 && lam.is_finite()) || cfg.gauss == 0 || cfg.split == 0 {
        return Err(FormError::BadRule(format!("lambda {lam}, gauss {}", cfg.gauss)));
    }
    Ok(())
}

fn check_budget(n: usize, cfg: &RuleConfig) -> Result<(), FormError> {
    if n > cfg.max_nodes {
        return Err(FormError::BadRule(format!(
            "{n} nodes exceed the budget of {}",
            cfg.max_nodes
        )));
    }
    Ok(())
}

/// Polar rule on `B_R(p)` with radial breaks at `lambda/4, lambda/2, lambda, 2 lambda`,
/// then doubling radii up to `R`.
pub fn ball_rule(p: Point4, lam: f64, r: f64, cfg: &RuleConfig) -> Result<QuadratureRule, FormError> {
    ball_rule_with(p, lam, r, &[], cfg)
}

pub fn ball_rule_with(
    p: Point4,
    lam: f64,
    r: f64,
    extra: &[f64],
    cfg: &RuleConfig,
) -> Result<QuadratureRule, FormError> {
    check_cfg(lam, cfg)?;
    if !(r > 0.0) {
        return Err(FormError::BadRule(format!("radius {r}")));
    }
    let gl = gauss_legendre(cfg.gauss);
    let rad = radial_nodes(&scale_breaks(lam, r, extra), cfg, &gl);
    let sph = sphere_rule(cfg.angular);
    check_budget(rad.len() * sph.len(), cfg)?;
    let mut nodes = Vec::with_capacity(rad.len() * sph.len());
    let mut weights = Vec::with_capacity(rad.len() * sph.len());
    for (r, wr) in &rad {
        for (d, wd) in &sph {
            nodes.push(Point4([
                p.0[0] + r * d[0],
                p.0[1] + r * d[1],
                p.0[2] + r * d[2],
                p.0[3] + r * d[3],
            ]));
            weights.push(wr * wd);
        }
    }
    let n = nodes.len();
    Ok(QuadratureRule {
        nodes,
        weights,
        aux: vec![1.0; n],
        center: p,
        scales: vec![lam / 4.0, lam / 2.0, lam, 2.0 * lam],
        tol: 0.0,
        tail: None,
    })
}

/// Polar rule centred at `p` covering the unit ball `|x| < 1`; each ray is
/// clipped where it leaves the ball.
pub fn unit_ball_rule(
    p: Point4,
    lam: f64,
    extra: &[f64],
    cfg: &RuleConfig,
) -> Result<QuadratureRule, FormError> {
    check_cfg(lam, cfg)?;
    let pn2: f64 = p.0.iter().map(|v| v * v).sum();
    if pn2 >= 1.0 {
        return Err(FormError::BadRule("center outside the unit ball".into()));
    }
    let gl = gauss_legendre(cfg.gauss);
    let sph = sphere_rule(cfg.angular);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for (d, wd) in &sph {
        let pd: f64 = (0..4).map(|k| p.0[k] * d[k]).sum();
        let rmax = -pd + (pd * pd + 1.0 - pn2).sqrt();
        for (r, wr) in radial_nodes(&scale_breaks(lam, rmax, extra), cfg, &gl) {
            nodes.push(Point4([
                p.0[0] + r * d[0],
                p.0[1] + r * d[1],
                p.0[2] + r * d[2],
                p.0[3] + r * d[3],
            ]));
            weights.push(wr * wd);
        }
        check_budget(nodes.len(), cfg)?;
    }
    let n = nodes.len();
    Ok(QuadratureRule {
        nodes,
        weights,
        aux: vec![1.0; n],
        center: p,
        scales: vec![lam / 4.0, lam / 2.0, lam, 2.0 * lam],
        tol: 0.0,
        tail: None,
    })
}

/// Rule for `|x - c| > r0` via `r = r0 / s`, `s` in `(0, 1)`.
pub fn exterior_rule(
    c: Point4,
    r0: f64,
    cfg: &RuleConfig,
    weight: impl Fn(&Point4) -> f64,
) -> Result<QuadratureRule, FormError> {
    let gl = gauss_legendre(cfg.gauss);
    let sph = sphere_rule(cfg.angular);
    let mut sb: Vec<f64> = (0..=cfg.tail_levels).map(|k| 0.5f64.powi(k as i32)).collect();
    sb.push(0.0);
    sb.reverse();
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    let mut tail = (0, 0);
    for (pi, win) in sb.windows(2).enumerate() {
        let h = (win[1] - win[0]) / cfg.split as f64;
        let start = nodes.len();
        for sp in 0..cfg.split {
            let a = win[0] + sp as f64 * h;
            for (t, w) in gl.0.iter().zip(gl.1.iter()) {
                let s = a + 0.5 * h * (t + 1.0);
                let r = r0 / s;
                // r^3 dr = r0^4 s^-5 ds
                let wr = 0.5 * h * w * r0.powi(4) / s.powi(5);
                for (d, wd) in &sph {
                    nodes.push(Point4([
                        c.0[0] + r * d[0],
                        c.0[1] + r * d[1],
                        c.0[2] + r * d[2],
                        c.0[3] + r * d[3],
                    ]));
                    weights.push(wr * wd);
                }
            }
        }
        if pi == 0 {
            tail = (start, nodes.len());
        }
        check_budget(nodes.len(), cfg)?;
    }
    let aux = nodes.iter().map(&weight).collect();
    Ok(QuadratureRule {
        nodes,
        weights,
        aux,
        center: c,
        scales: vec![],
        tol: 0.0,
        tail: Some(tail),
    })
}

/// Rule for all of R^4: polar ball of radius `r` about `p` plus the inverted exterior.
pub fn r4_rule(p: Point4, lam: f64, r: f64, cfg: &RuleConfig) -> Result<QuadratureRule, FormError> {
    let mut rule = ball_rule(p, lam, r, cfg)?;
    rule.append(exterior_rule(p, r, cfg, |_| 1.0)?);
    check_budget(rule.len(), cfg)?;
    Ok(rule)
}

/// The weight `w(x) = 1` for `|x| <= 1`, `1/(1+|x|^2)^2` outside.
pub fn weight_fn(x: &Point4) -> f64 {
    let r2: f64 = x.0.iter().map(|v| v * v).sum();
    if r2 <= 1.0 {
        1.0
    } else {
        1.0 / ((1.0 + r2) * (1.0 + r2))
    }
}

/// Rule for `int_{R^4} (...) dx` split at `|x| = 1`; `aux` carries `w(x)`.
/// Inside, polar about `p` and clipped to the unit ball; outside, inverted about 0.
pub fn weighted_r4_rule(
    p: Point4,
    lam: f64,
    extra: &[f64],
    cfg: &RuleConfig,
) -> Result<QuadratureRule, FormError> {
    let mut rule = unit_ball_rule(p, lam, extra, cfg)?;
    rule.append(exterior_rule(Point4::default(), 1.0, cfg, weight_fn)?);
    check_budget(rule.len(), cfg)?;
    Ok(rule)
}

/// Recursive pairwise sum.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        2 => v[0] + v[1],
        n => {
            let (a, b) = v.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// `sum_k w_k f(k, x_k)` with a fixed reduction tree; `f` receives the node index.
pub fn integrate_indexed(
    rule: &QuadratureRule,
    f: impl Fn(usize, &Point4) -> f64 + Sync,
) -> Result<f64, FormError> {
    let v = integrate_many(rule, 1, |k, x, out| out[0] = f(k, x))?;
    Ok(v[0])
}

/// Deterministic `sum_k w_k f(x_k)`.
pub fn integrate(rule: &QuadratureRule, f: impl Fn(&Point4) -> f64 + Sync) -> Result<f64, FormError> {
    integrate_indexed(rule, |_, x| f(x))
}

/// Several integrals at once. `f(k, x, out)` writes `m` values for node `k`.
pub fn integrate_many(
    rule: &QuadratureRule,
    m: usize,
    f: impl Fn(usize, &Point4, &mut [f64]) + Sync,
) -> Result<Vec<f64>, FormError> {
    let chunks: Vec<Result<Vec<f64>, FormError>> = (0..rule.len().div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(rule.len());
            let mut terms = vec![vec![0.0; hi - lo]; m];
            let mut buf = vec![0.0; m];
            for k in lo..hi {
                buf.iter_mut().for_each(|b| *b = 0.0);
                f(k, &rule.nodes[k], &mut buf);
                for (j, b) in buf.iter().enumerate() {
                    if !b.is_finite() {
                        return Err(FormError::NonFinite {
                            index: k,
                            x: rule.nodes[k].0,
                        });
                    }
                    terms[j][k - lo] = rule.weights[k] * b;
                }
            }
            Ok(terms.iter().map(|t| pairwise_sum(t)).collect())
        })
        .collect();
    let mut per: Vec<Vec<f64>> = vec![Vec::with_capacity(chunks.len()); m];
    for c in chunks {
        let c = c?;
        for (j, v) in c.into_iter().enumerate() {
            per[j].push(v);
        }
    }
    Ok(per.iter().map(|p| pairwise_sum(p)).collect())
}

/// Integrate with `build(cfg)` and its refinement; refine until the relative
/// change is below `tol` or the node budget is exhausted.
pub fn integrate_converged(
    cfg: &RuleConfig,
    tol: f64,
    build: impl Fn(&RuleConfig) -> Result<QuadratureRule, FormError>,
    f: impl Fn(&Point4) -> f64 + Sync + Copy,
) -> Result<(f64, f64), FormError> {
    let mut c = *cfg;
    let mut prev = integrate(&build(&c)?, f)?;
    loop {
        let next_cfg = c.refined();
        let rule = match build(&next_cfg) {
            Ok(r) => r,
            Err(FormError::BadRule(_)) => {
                return Err(FormError::Budget {
                    tol,
                    err: f64::INFINITY,
                })
            }
            Err(e) => return Err(e),
        };
        let next = integrate(&rule, f)?;
        let err = (next - prev).abs() / next.abs().max(1e-300);
        if err <= tol || (next - prev).abs() <= tol * 1e-12 {
            return Ok((next, err));
        }
        prev = next;
        c = next_cfg;
        if c.refined().angular.count() * 8 > c.max_nodes {
            return Err(FormError::Budget { tol, err });
        }
    }
}
