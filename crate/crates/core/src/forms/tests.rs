use std::f64::consts::PI;
use std::sync::Arc;

use super::quadrature::{exterior_rule, gauss_legendre, integrate_converged, r4_rule, sphere_rule};
use super::*;
use crate::dual::Scalar;
use crate::liealg::AlgElement;

fn e(i: usize) -> AlgElement {
    AlgElement::basis(i).unwrap()
}

fn close(a: &FormValue, b: &FormValue, tol: f64) -> bool {
    a.degree == b.degree && a.add(&b.scale(-1.0)).max_abs() <= tol
}

fn random_form(k: usize, seed: u64) -> FormValue {
    let mut s = seed;
    let mut next = || {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    };
    FormValue {
        degree: k,
        comps: (0..component_count(k))
            .map(|_| AlgElement::new(next(), next(), next()))
            .collect(),
    }
}

#[test]
fn hodge_examples() {
    let s = hodge_star(&FormValue::monomial(&[0], e(1)));
    assert_eq!(s, FormValue::monomial(&[1, 2, 3], e(1)));
    let s = hodge_star(&FormValue::monomial(&[0, 1], e(2)));
    assert_eq!(s, FormValue::monomial(&[2, 3], e(2)));
    let s = hodge_star(&FormValue::monomial(&[0, 2], e(2)));
    assert_eq!(s, FormValue::monomial(&[1, 3], e(2)).scale(-1.0));
}

#[test]
fn double_star_sign_rule_is_exact() {
    for k in 0..=4 {
        let f = random_form(k, 17 + k as u64);
        let sign = if (k * (4 - k)) % 2 == 0 { 1.0 } else { -1.0 };
        assert_eq!(hodge_star(&hodge_star(&f)), f.scale(sign));
    }
}

#[test]
fn wedge_bracket_matches_index_oracle() {
    let a = random_form(1, 3);
    let b = random_form(1, 4);
    let w = wedge_bracket_values(&a, &b).unwrap();
    for (pos, idx) in multi_indices(2).iter().enumerate() {
        let (m, n) = (idx[0], idx[1]);
        let want = bracket(&a.comps[m], &b.comps[n]) - bracket(&a.comps[n], &b.comps[m]);
        assert!((w.comps[pos] - want).norm() < 1e-15);
    }
    let sym = wedge_bracket_values(&b, &a).unwrap();
    assert!(close(&w, &sym, 1e-15));
    let single = FormValue::monomial(&[0], e(1));
    assert_eq!(wedge_bracket_values(&single, &single).unwrap().max_abs(), 0.0);
    let ab = wedge_bracket_values(&FormValue::monomial(&[0], e(1)), &FormValue::monomial(&[1], e(2)))
        .unwrap();
    assert_eq!(ab, FormValue::monomial(&[0, 1], e(3)));
}

#[test]
fn wedge_is_bilinear() {
    let (a, b, c) = (random_form(1, 5), random_form(1, 6), random_form(1, 7));
    let lhs = wedge_bracket_values(&a.add(&b.scale(2.5)), &c).unwrap();
    let rhs = wedge_bracket_values(&a, &c)
        .unwrap()
        .add(&wedge_bracket_values(&b, &c).unwrap().scale(2.5));
    assert!(close(&lhs, &rhs, 1e-12));
}

#[test]
fn wedge_degree_overflow_is_rejected() {
    let a = random_form(3, 1);
    let b = random_form(2, 2);
    assert!(wedge_bracket_values(&a, &b).is_err());
}

/// Cubic polynomial 1-form with fixed random coefficients.
struct Poly1 {
    c: Vec<f64>,
}

impl Poly1 {
    fn new(seed: u64) -> Self {
        let mut c = Vec::new();
        for s in 0..40 {
            let g = random_form(4, seed * 131 + s);
            c.extend(g.comps[0].x);
        }
        Poly1 { c }
    }
}

impl FormKernel for Poly1 {
    fn degree(&self) -> usize {
        1
    }
    fn eval<S: Scalar>(&self, x: [S; 4]) -> Vec<[S; 3]> {
        let mut out = vec![[S::zero(); 3]; 4];
        let mut k = 0;
        for (mu, o) in out.iter_mut().enumerate() {
            for a in 0..3 {
                let l = x[mu] * S::cst(self.c[k])
                    + x[(mu + 1) % 4] * x[(a + 2) % 4] * S::cst(self.c[k + 1])
                    + x[0] * x[1] * x[(mu + a) % 4] * S::cst(self.c[k + 2])
                    + x[3] * x[3] * x[2] * S::cst(self.c[k + 3]);
                o[a] = l;
                k += 4;
            }
        }
        out
    }
}

#[test]
fn d_of_d_vanishes_analytically() {
    let f: Field = Arc::new(KernelField(Poly1::new(9)));
    let dd = exterior_d(exterior_d(f).unwrap()).unwrap();
    for x in [[0.1, 0.2, -0.3, 0.4], [1.0, -2.0, 0.5, 0.25]] {
        let v = eval(dd.as_ref(), &Point4(x)).unwrap();
        assert!(v.max_abs() < 1e-10, "{v:?}");
    }
}

#[test]
fn d_of_d_vanishes_with_differences() {
    let k = KernelField(Poly1::new(4));
    let f: Field = Arc::new(ClosureField {
        degree: 1,
        domain: Domain::R4,
        f: move |x: &Point4| k.value_at(x),
    });
    let dd = exterior_d(exterior_d(f).unwrap()).unwrap();
    let v = eval(dd.as_ref(), &Point4([0.3, -0.1, 0.2, 0.5])).unwrap();
    assert!(v.max_abs() < 1e-6, "{v:?}");
}

struct Linear {
    coef: f64,
    dir: usize,
    comp: usize,
    alg: usize,
}

impl FormKernel for Linear {
    fn degree(&self) -> usize {
        1
    }
    fn eval<S: Scalar>(&self, x: [S; 4]) -> Vec<[S; 3]> {
        let mut out = vec![[S::zero(); 3]; 4];
        out[self.comp][self.alg] = x[self.dir].scale(self.coef);
        out
    }
}

struct Const0;

impl FormKernel for Const0 {
    fn degree(&self) -> usize {
        0
    }
    fn eval<S: Scalar>(&self, _x: [S; 4]) -> Vec<[S; 3]> {
        vec![[S::cst(1.0), S::cst(2.0), S::cst(-3.0)]]
    }
}

#[test]
fn exterior_d_examples() {
    let c: Field = Arc::new(KernelField(Const0));
    let dc = exterior_d(c).unwrap();
    assert_eq!(eval(dc.as_ref(), &Point4([0.3, 0.1, 0.2, 0.0])).unwrap().max_abs(), 0.0);
    // x1 e1 dx0; the e1 coefficient vector is (1,0,0) in units of e1
    let f: Field = Arc::new(KernelField(Linear {
        coef: 1.0,
        dir: 1,
        comp: 0,
        alg: 0,
    }));
    let d = eval(exterior_d(f).unwrap().as_ref(), &Point4([0.2, 0.7, 0.0, 1.0])).unwrap();
    assert_eq!(d, FormValue::monomial(&[0, 1], e(1)).scale(-1.0));
}

#[test]
fn codifferential_examples() {
    let zero: Field = Arc::new(ClosureField {
        degree: 1,
        domain: Domain::R4,
        f: |_: &Point4| FormValue::zero(1),
    });
    let f: Field = Arc::new(KernelField(Linear {
        coef: 1.0,
        dir: 0,
        comp: 0,
        alg: 0,
    }));
    let c = codifferential_eps(zero.clone(), f, 0.3).unwrap();
    let v = eval(c.as_ref(), &Point4([0.5, 0.1, 0.2, 0.3])).unwrap();
    assert_eq!(v.degree, 0);
    assert!((v.comps[0] - e(1).scale(-1.0)).norm() < 1e-12);
    let cst: Field = Arc::new(ClosureField {
        degree: 1,
        domain: Domain::R4,
        f: |_: &Point4| FormValue::monomial(&[2], AlgElement::new(1.0, 2.0, 3.0)),
    });
    let c = codifferential_eps(zero, cst, 0.3).unwrap();
    assert!(eval(c.as_ref(), &Point4([0.1; 4])).unwrap().max_abs() < 1e-12);
}

#[test]
fn covariant_d_reduces_to_d_and_is_affine_in_eps() {
    let zero: Field = Arc::new(ClosureField {
        degree: 1,
        domain: Domain::R4,
        f: |_: &Point4| FormValue::zero(1),
    });
    let a: Field = Arc::new(KernelField(Poly1::new(2)));
    let w: Field = Arc::new(KernelField(Poly1::new(3)));
    let x = Point4([0.1, -0.4, 0.3, 0.2]);
    let d = eval(exterior_d(w.clone()).unwrap().as_ref(), &x).unwrap();
    let d0 = eval(covariant_d_eps(zero, w.clone(), 0.7).unwrap().as_ref(), &x).unwrap();
    assert!(close(&d, &d0, 1e-14));
    let d1 = eval(covariant_d_eps(a.clone(), w.clone(), 1.0).unwrap().as_ref(), &x).unwrap();
    let d2 = eval(covariant_d_eps(a, w, 2.0).unwrap().as_ref(), &x).unwrap();
    let lin = d.scale(-1.0).add(&d1.scale(2.0));
    assert!(close(&lin, &d2, 1e-12));
}

#[test]
fn analytic_partials_match_differences() {
    let f = KernelField(Poly1::new(11));
    let x = Point4([0.3, 0.2, -0.5, 0.4]);
    for dirs in [vec![1], vec![2, 3], vec![0, 0, 3]] {
        let a = f.analytic_partial(&x, &dirs).unwrap();
        let (last, rest) = dirs.split_last().unwrap();
        let h = 1e-4;
        let p = f.analytic_partial(&x.shifted(*last, h), rest).unwrap();
        let m = f.analytic_partial(&x.shifted(*last, -h), rest).unwrap();
        let fd = p.add(&m.scale(-1.0)).scale(0.5 / h);
        assert!(close(&a, &fd, 1e-6), "{dirs:?}");
    }
}

#[test]
fn covariant_gradient_matches_differences_and_constant_gauge() {
    let a: Field = Arc::new(KernelField(Poly1::new(21)));
    let al: Field = Arc::new(KernelField(Poly1::new(22)));
    let x = Point4([0.2, 0.1, -0.3, 0.25]);
    let g = covariant_grad_eps(a.clone(), al.clone(), 0.4).unwrap();
    let v = g.eval(&x).unwrap();
    let av = a.value_at(&x);
    for i in 0..4 {
        let h = 1e-5;
        let p = al.value_at(&x.shifted(i, h));
        let m = al.value_at(&x.shifted(i, -h));
        for j in 0..4 {
            let fd = (p.comps[j] - m.comps[j]).scale(0.5 / h)
                + bracket(&av.comps[i], &al.value_at(&x).comps[j]).scale(0.4);
            assert!((fd - v[i][j]).norm() < 1e-6);
        }
    }
    // constant gauge: rotate both A and alpha
    let gr = crate::liealg::GroupElement::new(0.3, -0.5, 0.7, 0.2).unwrap();
    let rot = |f: Field| -> Field {
        Arc::new(ClosureField {
            degree: 1,
            domain: Domain::R4,
            f: move |x: &Point4| {
                let v = f.value_at(x);
                FormValue {
                    degree: 1,
                    comps: v.comps.iter().map(|c| crate::liealg::adjoint(&gr, c)).collect(),
                }
            },
        })
    };
    let g2 = covariant_grad_eps(rot(a), rot(al), 0.4).unwrap();
    let n1 = g.norm_sq(&x).unwrap();
    let n2 = g2.norm_sq(&x).unwrap();
    assert!((n1 - n2).abs() < 1e-7 * n1.max(1.0));
}

#[test]
fn degree_errors() {
    let f: Field = Arc::new(KernelField(Const0));
    let g: Field = Arc::new(KernelField(Poly1::new(1)));
    assert!(wedge_bracket(f.clone(), g.clone()).is_err());
    assert!(codifferential_eps(g.clone(), f.clone(), 1.0).is_err());
    assert!(covariant_d_eps(f, g, 1.0).is_err());
}

#[test]
fn evaluation_outside_domain_fails() {
    let f: Field = Arc::new(ClosureField {
        degree: 1,
        domain: Domain::Ball {
            center: Point4::default(),
            radius: 1.0,
        },
        f: |_: &Point4| FormValue::zero(1),
    });
    assert!(matches!(
        eval(f.as_ref(), &Point4([2.0, 0.0, 0.0, 0.0])),
        Err(FormError::OutsideDomain(_))
    ));
    // near the boundary the difference stencil leaves the domain
    assert!(matches!(
        partial(f.as_ref(), &Point4([1.0 - 1e-6, 0.0, 0.0, 0.0]), &[0]),
        Err(FormError::OutsideDomain(_))
    ));
    let d = exterior_d(f).unwrap();
    let v = eval(d.as_ref(), &Point4([1.0 - 1e-6, 0.0, 0.0, 0.0])).unwrap();
    assert!(v.max_abs().is_nan());
}

#[test]
fn gauss_legendre_is_exact_on_low_monomials() {
    for n in [2usize, 3, 5, 8] {
        let (x, w) = gauss_legendre(n);
        for deg in 0..2 * n {
            let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
            let want = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((got - want).abs() < 1e-14, "n={n} deg={deg}");
        }
    }
}

#[test]
fn radial_panel_is_exact_for_degree_five() {
    // int_0^R r^k r^3 dr over a single-panel ball with unit angular weight
    let cfg = RuleConfig {
        gauss: 3,
        ..RuleConfig::default()
    };
    let rule = ball_rule(Point4::default(), 10.0, 1.0, &cfg).unwrap();
    for k in 0..=2 {
        let got = integrate(&rule, |x| x.norm().powi(k)).unwrap();
        let want = 2.0 * PI * PI / (k as f64 + 4.0);
        assert!((got - want).abs() < 1e-13 * want, "k={k}");
    }
}

#[test]
fn sphere_rule_has_total_area() {
    let s: f64 = sphere_rule(AngularOrder {
        n_chi: 5,
        n_theta: 4,
        n_phi: 7,
    })
    .iter()
    .map(|(_, w)| w)
    .sum();
    assert!((s - 2.0 * PI * PI).abs() < 1e-13);
}

#[test]
fn ball_volumes() {
    let cfg = RuleConfig::default();
    let r = unit_ball_rule(Point4([0.1, -0.2, 0.05, 0.3]), 0.1, &[], &cfg).unwrap();
    let v = integrate(&r, |_| 1.0).unwrap();
    assert!((v - PI * PI / 2.0).abs() < 1e-4 * PI * PI / 2.0, "{v}");
    let lam = 0.08;
    let small = ball_rule(Point4([0.2, 0.0, 0.0, 0.1]), lam, lam / 4.0, &cfg).unwrap();
    let v = integrate(&small, |_| 1.0).unwrap();
    let want = PI * PI * (lam / 4.0f64).powi(4) / 2.0;
    assert!((v - want).abs() < 1e-12 * want);
}

#[test]
fn instanton_density_integrates_to_eight_pi_squared() {
    let lam: f64 = 0.05;
    let p = Point4([0.1, 0.0, -0.2, 0.05]);
    let f = move |x: &Point4| {
        let r2 = x.dist(&p).powi(2);
        48.0 * lam.powi(4) / (lam * lam + r2).powi(4)
    };
    let v = integrate(&r4_rule(p, lam, 1.0, &RuleConfig::default()).unwrap(), f).unwrap();
    assert!((v - 8.0 * PI * PI).abs() < 1e-4 * 8.0 * PI * PI, "{v}");
    let (v, err) = integrate_converged(
        &RuleConfig::default(),
        1e-4,
        |c| r4_rule(p, lam, 1.0, c),
        f,
    )
    .unwrap();
    assert!(err <= 1e-4);
    assert!((v - 8.0 * PI * PI).abs() < 1e-4 * 8.0 * PI * PI);
}

#[test]
fn weighted_rule_matches_radial_oracle() {
    // int w(x) e^{-|x|^2}: inside 2 pi^2 int_0^1 r^3 e^{-r^2}, outside with w
    let rule = weighted_r4_rule(Point4([0.1, 0.0, 0.0, 0.0]), 0.2, &[], &RuleConfig::default()).unwrap();
    let got = integrate_indexed(&rule, |k, x| rule.aux[k] * (-x.norm().powi(2)).exp()).unwrap();
    let (t, w) = gauss_legendre(40);
    let radial = |a: f64, b: f64, f: &dyn Fn(f64) -> f64| -> f64 {
        t.iter()
            .zip(&w)
            .map(|(t, w)| {
                let r = a + 0.5 * (b - a) * (t + 1.0);
                0.5 * (b - a) * w * f(r)
            })
            .sum()
    };
    let inner = radial(0.0, 1.0, &|r| r.powi(3) * (-r * r).exp());
    let mut outer = 0.0;
    for k in 0..12 {
        let (a, b) = (1.0 + k as f64, 2.0 + k as f64);
        outer += radial(a, b, &|r| r.powi(3) * (-r * r).exp() / (1.0 + r * r).powi(2));
    }
    let want = 2.0 * PI * PI * (inner + outer);
    assert!((got - want).abs() < 1e-8 * want, "{got} {want}");
    assert_eq!(weight_fn(&Point4([1.0, 0.0, 0.0, 0.0])), 1.0);
    assert!((weight_fn(&Point4([1.0 + 1e-12, 0.0, 0.0, 0.0])) - 0.25).abs() < 1e-11);
    assert_eq!(integrate(&rule, |_| 0.0).unwrap(), 0.0);
}

#[test]
fn unweighted_mass_of_w_diverges_in_the_tail() {
    let rule = exterior_rule(Point4::default(), 1.0, &RuleConfig::default(), weight_fn).unwrap();
    let (a, b) = rule.tail.unwrap();
    let total = integrate_indexed(&rule, |k, _| rule.aux[k]).unwrap();
    let tail = integrate_indexed(&rule, |k, _| if k >= a && k < b { rule.aux[k] } else { 0.0 }).unwrap();
    assert!(tail / total > 1e-2);
}

#[test]
fn integration_is_deterministic_and_linear() {
    let rule = unit_ball_rule(Point4([0.0, 0.1, 0.0, 0.0]), 0.1, &[], &RuleConfig::default()).unwrap();
    let f = |x: &Point4| (x.0[0] * 3.0).sin() + x.0[1] * x.0[2];
    let g = |x: &Point4| x.norm().powi(2);
    let a = integrate(&rule, f).unwrap();
    let b = integrate(&rule, f).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
    let fg = integrate(&rule, |x| f(x) + 2.0 * g(x)).unwrap();
    let sep = a + 2.0 * integrate(&rule, g).unwrap();
    assert!((fg - sep).abs() < 1e-14 * sep.abs().max(1.0));
}

#[test]
fn non_finite_density_names_the_node() {
    let rule = ball_rule(Point4::default(), 0.5, 1.0, &RuleConfig::default()).unwrap();
    let err = integrate(&rule, |x| if x.0[0] > 0.9 { f64::NAN } else { 1.0 }).unwrap_err();
    match err {
        FormError::NonFinite { index, x } => {
            assert_eq!(rule.nodes[index].0, x);
            assert!(x[0] > 0.9);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn field_dump_has_one_row_per_component() {
    let f = KernelField(Poly1::new(3));
    let mut buf = Vec::new();
    dump_field(&mut buf, &f, &[Point4([0.0; 4]), Point4([0.1, 0.2, 0.3, 0.4])]).unwrap();
    let s = String::from_utf8(buf).unwrap();
    assert_eq!(s.lines().count(), 1 + 8);
    assert!(s.starts_with("x0,x1,x2,x3,component,e1,e2,e3"));
}
