use num_complex::Complex64;
use num_rational::Rational64;
use proptest::prelude::*;

use flmicro::grid::{dft, idft, Field, GridSpec};
use flmicro::microlocal::{m_scale, SetDescriptor};
use flmicro::newton::CompletePolyhedron;
use flmicro::pdo::{quantize, Expr, Symbol};
use flmicro::propagation::{bootstrap_schedule, example_thresholds, example_symbol, threshold_case};
use flmicro::weights::Weight;

fn bracket(v: &[f64]) -> f64 {
    (1.0 + v.iter().map(|c| c * c).sum::<f64>()).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn peetre_inequality(m in -4.0f64..4.0, xi in prop::array::uniform2(-1e3f64..1e3), eta in prop::array::uniform2(-1e3f64..1e3)) {
        let w = Weight::homogeneous(m);
        let sum = [xi[0] + eta[0], xi[1] + eta[1]];
        let lhs = w.eval(&sum);
        let rhs = 2f64.powf(m.abs() / 2.0) * w.eval(&xi) * bracket(&eta).powf(m.abs());
        prop_assert!(lhs <= rhs * (1.0 + 1e-12), "{lhs} > {rhs}");
    }

    #[test]
    fn quasi_homogeneous_scaling(t in 0.01f64..100.0, xi in prop::array::uniform2(-1e2f64..1e2)) {
        // <t^(1/M) xi>_M^2 - 1 scales by t^2
        let w = Weight::quasi_homogeneous(&[1, 2], 1.0).unwrap();
        let scaled = m_scale(&xi, &[1, 2], t);
        let (a, b) = (w.eval(&scaled).powi(2) - 1.0, w.eval(&xi).powi(2) - 1.0);
        prop_assert!((a - t * t * b).abs() <= 1e-9 * (1.0 + t * t * b));
    }

    #[test]
    fn xk_is_m_conic(k in 0.05f64..0.95, t in 0.01f64..100.0, xi in prop::array::uniform2(-50.0f64..50.0)) {
        let x = SetDescriptor::Xk { k };
        let scaled = m_scale(&xi, &[1, 2], t);
        // skip samples within rounding of the boundary
        let margin = |v: &[f64]| ((v[0] - (1.0 - k) * v[1] * v[1]).abs()).min((v[0] - v[1] * v[1] / (1.0 - k)).abs());
        prop_assume!(margin(&xi) > 1e-9 * (1.0 + xi[0].abs() + xi[1] * xi[1]));
        prop_assert_eq!(x.contains(&xi), x.contains(&scaled));
    }

    #[test]
    fn worked_symbol_is_quasi_homogeneous(t in 0.01f64..100.0, x in prop::array::uniform2(-5.0f64..5.0), xi in prop::array::uniform2(-50.0f64..50.0)) {
        let a = example_symbol();
        let scaled = [t * xi[0], t.sqrt() * xi[1]];
        let scale = t * ((x[0] * xi[0]).abs() + xi[0].abs() + xi[1] * xi[1]);
        prop_assert!((a.eval(&x, &scaled) - a.eval(&x, &xi) * t).norm() <= 1e-12 * scale.max(1e-300));
    }

    #[test]
    fn polyhedron_orders_are_ordered(a in 1i64..6, b in 1i64..6, inner in prop::collection::vec((0i64..6, 0i64..6), 0..4)) {
        let mut pts = vec![vec![0, 0], vec![a, 0], vec![0, b]];
        pts.extend(inner.into_iter().map(|(x, y)| vec![x, y]));
        if let Ok(p) = CompletePolyhedron::build(&pts) {
            let o = p.orders();
            prop_assert!(o.mu >= Rational64::from(o.mu1 as i64));
            prop_assert!(o.mu1 >= o.mu0 && o.mu0 >= 1);
            let d = p.delta();
            prop_assert!(d >= Rational64::from(0) && d < Rational64::from(1));
        }
    }

    #[test]
    fn bootstrap_reaches_the_target(t in -5.0f64..5.0, gap in 0.0f64..10.0, eps in 0.01f64..3.0) {
        let s = t + gap;
        let sched = bootstrap_schedule(t, s, 1.0, eps).unwrap();
        prop_assert_eq!(sched[0], t);
        prop_assert!(*sched.last().unwrap() >= s);
        if sched.len() > 1 {
            prop_assert!(sched[sched.len() - 2] < s);
        }
        for w in sched.windows(2) {
            prop_assert!(((w[1] - w[0]) - eps).abs() <= 1e-9 * (1.0 + eps));
        }
    }

    #[test]
    fn thresholds_never_exceed_the_target(t in 1.01f64..6.0, extra in 0.0f64..5.0, q in 1.0f64..8.0) {
        let s = t + extra + 1e-6;
        prop_assume!(t > 2.0 / q + 0.5);
        let bound = example_thresholds(t, s, q, threshold_case(t, q)).unwrap();
        prop_assert!(bound <= s && bound > t);
    }

    #[test]
    fn dft_round_trip(values in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 32)) {
        let g = GridSpec::new(1, 4.0, 32).unwrap();
        let f = Field::new(g, values.into_iter().map(|(a, b)| Complex64::new(a, b)).collect()).unwrap();
        let back = idft(&dft(&f));
        prop_assert!(back.sub(&f).unwrap().max_abs() <= 1e-12);
    }

    #[test]
    fn quantization_is_linear(c in -3.0f64..3.0, values in prop::collection::vec(-1.0f64..1.0, 64)) {
        let g = GridSpec::new(1, 4.0, 32).unwrap();
        let f = Field::new(g, values[..32].iter().map(|v| Complex64::new(*v, 0.0)).collect()).unwrap();
        let h = Field::new(g, values[32..].iter().map(|v| Complex64::new(0.0, *v)).collect()).unwrap();
        let a = Symbol::from_expr(1, &Expr::add(vec![Expr::mul(vec![Expr::x(0), Expr::xi(0)]), Expr::c(1.0)])).unwrap();
        let comb = f.add(&h.scale(Complex64::new(c, 0.0))).unwrap();
        let lhs = quantize(&a, &comb).unwrap();
        let rhs = quantize(&a, &f).unwrap().add(&quantize(&a, &h).unwrap().scale(Complex64::new(c, 0.0))).unwrap();
        prop_assert!(lhs.sub(&rhs).unwrap().max_abs() <= 1e-10 * (1.0 + rhs.max_abs()));
    }
}
