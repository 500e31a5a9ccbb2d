mod common;

use fracflow_core::config::{ExperimentConfig, InitialData, PairSpec, PointSpec, ScenarioName};
use fracflow_core::modular::{norm_relation_holds, sigma_bounds, DEFAULT_TOL};
use fracflow_core::operator::convexity_inequality_check;
use fracflow_core::{
    apply_operator, energy, gagliardo_modular, gagliardo_seminorm, lebesgue_modular, luxemburg_norm, monotonicity_gap,
    nehari_lambda, weak_form, GridFunction, PointExponent, RayProfile,
};
use proptest::prelude::*;
use proptest::test_runner::FileFailurePersistence;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const N: usize = 12;

fn cells() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, N)
}

fn scale() -> impl Strategy<Value = f64> {
    (-2.0..2.0f64).prop_map(|k| 10f64.powf(k))
}

fn state(values: &[f64], c: f64, m: usize) -> GridFunction {
    let v: Vec<f64> = values.iter().map(|x| x * c).collect();
    GridFunction::from_interior(common::grid(N, m), &v).unwrap()
}

fn nonzero(v: &[f64]) -> bool {
    v.iter().any(|x| x.abs() > 1e-3)
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 96,
        failure_persistence: Some(Box::new(FileFailurePersistence::Off)),
        ..ProptestConfig::default()
    })]

    #[test]
    fn lebesgue_modular_norm_relations(v in cells(), c in scale(), a in 1.1..3.0f64, b in 0.0..2.0f64) {
        prop_assume!(nonzero(&v));
        let u = state(&v, c, 4);
        let h = PointExponent::Bump { a, b };
        let (lo, hi) = (a, a + b);
        let rep = luxemburg_norm(&u, &h, DEFAULT_TOL).unwrap();
        prop_assert!(norm_relation_holds(rep.modular_value, rep.luxemburg_norm, lo, hi, DEFAULT_TOL));
        let (s_lo, s_hi) = sigma_bounds(rep.luxemburg_norm, lo, hi);
        prop_assert!(s_lo <= s_hi);
        let at_norm = lebesgue_modular(&u.scaled(1.0 / rep.luxemburg_norm), &h).unwrap();
        prop_assert!((at_norm - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn modular_strictly_decreasing_in_lambda(v in cells(), l1 in 0.1..10.0f64, ratio in 1.01..5.0f64) {
        prop_assume!(nonzero(&v));
        let u = state(&v, 1.0, 4);
        let h = PointExponent::Bump { a: 2.0, b: 1.0 };
        let small = lebesgue_modular(&u.scaled(1.0 / l1), &h).unwrap();
        let large = lebesgue_modular(&u.scaled(1.0 / (l1 * ratio)), &h).unwrap();
        prop_assert!(small > large);
    }

    #[test]
    fn gagliardo_modular_norm_relations(v in cells(), c in scale()) {
        prop_assume!(nonzero(&v));
        let u = state(&v, c, 8);
        let field = common::variable_field();
        let domain = *u.grid().domain();
        let (lo, hi) = field.p.declared_bounds(&domain);
        let rep = gagliardo_seminorm(&u, &field, DEFAULT_TOL).unwrap();
        prop_assert!(norm_relation_holds(rep.modular_value, rep.luxemburg_norm, lo, hi, DEFAULT_TOL));
        let direct = gagliardo_modular(&u, &field).unwrap();
        prop_assert!((direct - rep.modular_value).abs() <= 1e-12 * direct);
    }

    #[test]
    fn cauchy_schwarz(a in cells(), b in cells()) {
        let (u, v) = (state(&a, 1.0, 2), state(&b, 1.0, 2));
        prop_assert!(u.inner_product(&v).unwrap().abs() <= u.l2_norm() * v.l2_norm() * (1.0 + 1e-14));
    }

    #[test]
    fn operator_is_odd_and_dual(v in cells(), c in scale()) {
        let ctx = common::variable_ctx(N, 8);
        let u = GridFunction::from_interior(ctx.grid().clone(), &v.iter().map(|x| x * c).collect::<Vec<_>>()).unwrap();
        let lu = apply_operator(&u, &ctx).unwrap();
        let lneg = apply_operator(&u.scaled(-1.0), &ctx).unwrap();
        for (a, b) in lu.interior().iter().zip(lneg.interior()) {
            prop_assert_eq!(*a, -*b);
        }
        let rho = gagliardo_modular(&u, ctx.field()).unwrap();
        let wf = weak_form(&u, &u, &ctx).unwrap();
        prop_assert!((wf - rho).abs() <= 1e-12 * (1.0 + rho));
    }

    #[test]
    fn weak_form_matches_operator_pairing(a in cells(), b in cells()) {
        let ctx = common::variable_ctx(N, 8);
        let u = GridFunction::from_interior(ctx.grid().clone(), &a).unwrap();
        let v = GridFunction::from_interior(ctx.grid().clone(), &b).unwrap();
        let wf = weak_form(&u, &v, &ctx).unwrap();
        let pairing = apply_operator(&u, &ctx).unwrap().inner_product(&v).unwrap();
        let scale = weak_form(&u, &u, &ctx).unwrap() + weak_form(&v, &v, &ctx).unwrap() + 1.0;
        prop_assert!((wf - pairing).abs() <= 1e-12 * scale);
    }

    #[test]
    fn monotonicity_gap_nonnegative(a in cells(), b in cells()) {
        let ctx = common::variable_ctx(N, 8);
        let u = GridFunction::from_interior(ctx.grid().clone(), &a).unwrap();
        let v = GridFunction::from_interior(ctx.grid().clone(), &b).unwrap();
        let gap = monotonicity_gap(&u, &v, &ctx).unwrap();
        let scale = weak_form(&u, &u, &ctx).unwrap() + weak_form(&v, &v, &ctx).unwrap();
        prop_assert!(gap >= -1e-12 * scale);
        if u.sub(&v).unwrap().l2_norm() > 1e-8 {
            prop_assert!(gap > 0.0);
        }
    }

    #[test]
    fn linear_gap_is_quadratic_form(a in cells(), b in cells()) {
        let ctx = common::constant_ctx(N, 8);
        let u = GridFunction::from_interior(ctx.grid().clone(), &a).unwrap();
        let v = GridFunction::from_interior(ctx.grid().clone(), &b).unwrap();
        let d = u.sub(&v).unwrap();
        let gap = monotonicity_gap(&u, &v, &ctx).unwrap();
        let quad = weak_form(&d, &d, &ctx).unwrap();
        prop_assert!((gap - quad).abs() <= 1e-11 * (1.0 + quad));
    }

    #[test]
    fn convexity_inequality(r in -10.0..10.0f64, s in -10.0..10.0f64, pbar in 2.0..6.0f64) {
        prop_assert!(convexity_inequality_check(r, s, pbar));
    }

    #[test]
    fn shifted_energy_identity(v in cells(), c in scale()) {
        let ctx = common::variable_ctx(N, 8);
        let u = GridFunction::from_interior(ctx.grid().clone(), &v.iter().map(|x| x * c).collect::<Vec<_>>()).unwrap();
        let domain = *ctx.grid().domain();
        let (_, p_plus) = ctx.field().p.declared_bounds(&domain);
        let (q_minus, _) = ctx.field().q.declared_bounds(domain.a, domain.b);
        let r = energy(&u, &ctx).unwrap();
        let lhs = r.energy - r.nehari / q_minus;
        let rhs = (1.0 / p_plus - 1.0 / q_minus) * r.gagliardo_modular;
        prop_assert!(lhs >= rhs - 1e-12 * r.scale());
    }

    #[test]
    fn nehari_crossing_is_unique_and_maximizes_energy(v in cells()) {
        prop_assume!(nonzero(&v));
        let ctx = common::variable_ctx(N, 8);
        let u = GridFunction::from_interior(ctx.grid().clone(), &v).unwrap();
        let ray = RayProfile::new(&u, &ctx).unwrap();
        let lambda = ray.nehari_root().unwrap();
        let ts = fracflow_core::experiment::log_grid(lambda, 1e3, 200);
        prop_assert_eq!(fracflow_core::experiment::sign_changes(&ray, &ts), 1);
        let peak = ray.energy(lambda);
        for t in ts {
            prop_assert!(ray.energy(t) <= peak + 1e-12 * ray.scale(lambda));
        }
    }

    #[test]
    fn nehari_scaling_is_reparameterization(v in cells(), c in 0.01..100.0f64) {
        prop_assume!(nonzero(&v));
        let ctx = common::variable_ctx(N, 8);
        let u = GridFunction::from_interior(ctx.grid().clone(), &v).unwrap();
        let l = nehari_lambda(&u, &ctx, 1e-9).unwrap();
        let lc = nehari_lambda(&u.scaled(c), &ctx, 1e-9).unwrap();
        prop_assert!((lc - l / c).abs() <= 1e-10 * l / c);
    }

    #[test]
    fn config_round_trip(seed in any::<u64>(), n in 4usize..128, s in 0.05..0.45f64, amp in 0.1..50.0f64,
                         pb in 0.0..0.01f64, qb in 0.0..0.5f64, radius in prop::option::of(0.5..10.0f64)) {
        let mut cfg = ExperimentConfig::default_for(ScenarioName::Blowup);
        cfg.seed = seed;
        cfg.domain.n = n;
        cfg.domain.exterior_radius = radius;
        cfg.exponents.s = s;
        cfg.exponents.p = PairSpec::AffineRadial { a: 2.0, b: pb };
        cfg.exponents.q = PointSpec::Bump { a: 3.0, b: qb };
        cfg.initial = InitialData::Sine { amplitude: amp };
        let text = cfg.to_toml().unwrap();
        prop_assert_eq!(ExperimentConfig::parse(&text).unwrap(), cfg);
    }
}

/// Hoelder with the standard constant `1/h- + 1/h'-`. The constant printed
/// as `1/h- - 1/h+` is only counted: it vanishes for constant `h`.
#[test]
fn hoelder_inequality() {
    let g = common::grid(16, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut printed_violations, samples) = (0, 1000);
    for k in 0..samples {
        let (a, b) = (1.2 + (k % 7) as f64 * 0.3, 0.5 + (k % 5) as f64 * 0.2);
        let h = PointExponent::Bump { a, b };
        // conjugate h' = h / (h - 1) is decreasing in h
        let conj = PointExponent::Custom {
            f: std::sync::Arc::new(move |x: f64| {
                let hx = a + b * x * x;
                hx / (hx - 1.0)
            }),
            lower: (a + b) / (a + b - 1.0),
            upper: a / (a - 1.0),
        };
        let u = common::random_state(&g, &mut rng, 3.0);
        let v = common::random_state(&g, &mut rng, 3.0);
        let uv: Vec<f64> = u.interior().iter().zip(v.interior()).map(|(x, y)| (x * y).abs()).collect();
        let lhs = g.integrate(&uv).unwrap();
        let nu = luxemburg_norm(&u, &h, DEFAULT_TOL).unwrap().luxemburg_norm;
        let nv = luxemburg_norm(&v, &conj, DEFAULT_TOL).unwrap().luxemburg_norm;
        let (h_minus, h_plus) = (a, a + b);
        let conj_minus = (a + b) / (a + b - 1.0);
        assert!(lhs <= (1.0 / h_minus + 1.0 / conj_minus) * nu * nv * (1.0 + 1e-9), "sample {k}");
        if lhs > (1.0 / h_minus - 1.0 / h_plus) * nu * nv {
            printed_violations += 1;
        }
    }
    println!("printed-constant violations: {printed_violations}/{samples}");
}

/// `sup max_i |(Lu)_i|` over sampled states with modular at most `r` is
/// finite and non-decreasing in `r`.
#[test]
fn operator_bounded_on_modular_balls() {
    let ctx = common::variable_ctx(16, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dirs: Vec<GridFunction> = (0..20).map(|_| common::random_state(ctx.grid(), &mut rng, 1.0)).collect();
    let ts: Vec<f64> = (0..60).map(|k| 10f64.powf(-3.0 + k as f64 * 0.1)).collect();
    let mut prev = 0.0;
    for r in [0.25, 0.5, 1.0, 2.0, 4.0, 8.0] {
        let mut sup: f64 = 0.0;
        for d in &dirs {
            for &t in &ts {
                let u = d.scaled(t);
                if gagliardo_modular(&u, ctx.field()).unwrap() <= r {
                    sup = sup.max(apply_operator(&u, &ctx).unwrap().max_abs());
                }
            }
        }
        assert!(sup.is_finite() && sup >= prev, "r = {r}: {sup} < {prev}");
        prev = sup;
    }
}
