//! Structural invariants checked on random inputs.

use mattis_core::cascade::{CascadeConfig, CascadeEngine};
use mattis_core::expr::GFunction;
use mattis_core::hj::{characteristics_probe, default_engine, evolve_from, GridSpec};
use mattis_core::ldp::LdpConfig;
use mattis_core::oracle::{draw_sample, OracleSpec};
use mattis_core::rbm::{magnetization_sum, rbm_engine};
use mattis_core::{ModelSpec, PiecewisePath, SymMatrix};
use proptest::prelude::*;

fn cfg() -> ProptestConfig {
    ProptestConfig {
        cases: 24,
        ..ProptestConfig::default()
    }
}

fn rbm_ldp(beta: f64) -> mattis_core::ldp::LdpEngine<mattis_core::rbm::RbmField> {
    rbm_engine(beta, LdpConfig::default()).unwrap()
}

proptest! {
    #![proptest_config(cfg())]

    #[test]
    fn f_star_is_midpoint_convex(
        beta in 0.0..0.34f64,
        a in prop::array::uniform2(-0.85..0.85f64),
        b in prop::array::uniform2(-0.85..0.85f64),
    ) {
        let e = rbm_ldp(beta);
        let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
        let fa = e.f_star(&a).unwrap().value;
        let fb = e.f_star(&b).unwrap().value;
        let fm = e.f_star(&mid).unwrap().value;
        prop_assert!(fm <= 0.5 * (fa + fb) + 1e-9, "{fm} > avg of {fa}, {fb}");
    }

    #[test]
    fn f_star_maximizer_satisfies_first_order_condition(
        beta in 0.0..0.34f64,
        m in prop::array::uniform2(-0.85..0.85f64),
    ) {
        let e = rbm_ldp(beta);
        let fs = e.f_star(&m).unwrap();
        prop_assert!(fs.converged);
        prop_assert!(fs.grad_norm <= 1e-8, "|m + grad f| = {}", fs.grad_norm);
    }

    #[test]
    fn cgf_is_midpoint_convex(
        y1 in prop::array::uniform2(-0.6..0.6f64),
        y2 in prop::array::uniform2(-0.6..0.6f64),
    ) {
        let e = rbm_ldp(0.25);
        let g = magnetization_sum();
        let mid = [0.5 * (y1[0] + y2[0]), 0.5 * (y1[1] + y2[1])];
        let l1 = e.cgf_lambda(&g, &y1).unwrap();
        let l2 = e.cgf_lambda(&g, &y2).unwrap();
        let lm = e.cgf_lambda(&g, &mid).unwrap();
        prop_assert!(lm <= 0.5 * (l1 + l2) + 1e-10);
    }

    #[test]
    fn characteristics_invert(
        t in 0.0..0.06f64,
        d in prop::array::uniform2(0.0..1.0f64),
        x in prop::array::uniform2(-1.0..1.0f64),
    ) {
        // X(t, Z(t, y)) = y.
        let model = ModelSpec::rbm();
        let engine = default_engine(&model).unwrap();
        let y = SymMatrix::diag(&d);
        let probe = characteristics_probe(&engine, t, &y, &x).unwrap();
        let z = &probe.z_val;
        let grad = engine.grad_phi(z, &x).unwrap().grad_y;
        let back = z - &model.xi().grad_sym(&grad).scale(t);
        prop_assert!((&back - &y).sup_norm() <= 1e-10);
        prop_assert!(probe.residual <= 1e-9);
    }

    #[test]
    fn zero_increment_levels_are_invisible(
        d0 in prop::array::uniform2(0.0..0.4f64),
        inc in prop::array::uniform2(0.05..0.5f64),
        zeta in 0.2..0.8f64,
        split in 0.05..0.95f64,
        x in prop::array::uniform2(-1.0..1.0f64),
    ) {
        let model = ModelSpec::rbm();
        let ce = CascadeEngine::new(&model, CascadeConfig { quad_order: 16, ..CascadeConfig::default() }).unwrap();
        let q = PiecewisePath::new(
            vec![0.0, zeta],
            vec![SymMatrix::diag(&d0), SymMatrix::diag(&[d0[0] + inc[0], d0[1] + inc[1]])],
        ).unwrap();
        let refined = q.refine(split);
        prop_assert!(refined.jumps() > q.jumps());
        let a = ce.psi(&q, &x).unwrap();
        let b = ce.psi(&refined, &x).unwrap();
        prop_assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
    }

    #[test]
    fn repeated_levels_get_one_gradient(
        d in prop::array::uniform2(0.0..0.4f64),
        off in -0.05..0.05f64,
        inc in prop::array::uniform2(0.05..0.4f64),
        x in prop::array::uniform2(-1.0..1.0f64),
    ) {
        let model = ModelSpec::rbm();
        let ce = CascadeEngine::new(&model, CascadeConfig { quad_order: 8, ..CascadeConfig::default() }).unwrap();
        let q0 = SymMatrix::from_rows(&[vec![d[0] + 0.1, off], vec![off, d[1] + 0.1]]).unwrap();
        let top = &q0 + &SymMatrix::diag(&inc);
        let q = PiecewisePath::new(vec![0.0, 0.3, 0.6], vec![q0, top.clone(), top]).unwrap();
        let g = ce.grad_q_psi(&q, &x).unwrap();
        prop_assert_eq!(g.breaks(), q.breaks());
        prop_assert_eq!(&g.levels()[1], &g.levels()[2]);
        prop_assert!((&g.levels()[1] - &g.levels()[0]).sup_norm() > 1e-6);
    }

    #[test]
    fn grid_scheme_is_monotone(
        amp in 0.0..0.5f64,
        tilt in prop::array::uniform2(-1.0..1.0f64),
        bump in 0.0..0.1f64,
    ) {
        // Raising the initial slice at one interior node never lowers the
        // solution anywhere.
        let model = ModelSpec::rbm();
        let spec = GridSpec::square(2, 0.0, 1.0, 1.0 / 16.0);
        let n = 17;
        let base: Vec<f64> = (0..n * n)
            .map(|k| {
                let (i, j) = ((k / n) as f64 / 16.0, (k % n) as f64 / 16.0);
                amp * (tilt[0] * i + tilt[1] * j + i * j)
            })
            .collect();
        let mut raised = base.clone();
        raised[8 * n + 8] += bump;
        let t_final = 0.004;
        let u = evolve_from(&model, &spec, t_final, base).unwrap();
        let v = evolve_from(&model, &spec, t_final, raised).unwrap();
        for (a, b) in u.final_slice().iter().zip(v.final_slice()) {
            prop_assert!(b >= &(a - 1e-14));
        }
    }

    #[test]
    fn disorder_draws_are_deterministic(seed in any::<u64>(), index in 0u64..1000, n in 1usize..6) {
        let spec = OracleSpec::enriched(
            ModelSpec::rbm(), 0.02, SymMatrix::zeros(2), magnetization_sum(),
        ).unwrap();
        let a = draw_sample(&spec, n, seed, index).unwrap();
        let b = draw_sample(&spec, n, seed, index).unwrap();
        prop_assert_eq!(&a, &b);
        let c = draw_sample(&spec, n, seed, index + 1).unwrap();
        prop_assert_ne!(a.eta, c.eta);
    }

    #[test]
    fn expression_display_round_trips(
        a in -3.0..3.0f64, b in -3.0..3.0f64, p in 1i32..4,
        m in prop::array::uniform2(-1.0..1.0f64),
    ) {
        let src = format!("{a} * m1^{p} - abs(m2) * {b} + norm(m)");
        let g = GFunction::parse(&src).unwrap();
        let again = GFunction::parse(&g.expr().to_string()).unwrap();
        prop_assert!((g.eval(&m) - again.eval(&m)).abs() <= 1e-12);
    }
}

#[test]
fn cascade_samples_do_not_depend_on_the_split() {
    let model = ModelSpec::rbm();
    let ce = CascadeEngine::new(
        &model,
        CascadeConfig {
            mc_truncation: 200,
            ..CascadeConfig::default()
        },
    )
    .unwrap();
    let q = PiecewisePath::new(
        vec![0.0, 0.4],
        vec![SymMatrix::diag(&[0.1, 0.1]), SymMatrix::diag(&[0.5, 0.4])],
    )
    .unwrap();
    let x = [0.3, -0.1];
    let whole = ce.rpc_samples(&q, &x, 11, 0..300).unwrap();
    let mut parts = ce.rpc_samples(&q, &x, 11, 0..120).unwrap();
    parts.extend(ce.rpc_samples(&q, &x, 11, 120..300).unwrap());
    assert_eq!(whole, parts);
}

#[test]
fn model_and_path_survive_json() {
    for model in [ModelSpec::rbm(), ModelSpec::rbm_multitype()] {
        let s = serde_json::to_string(&model).unwrap();
        let back: ModelSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(model, back);
    }
    let q = PiecewisePath::new(
        vec![0.0, 0.25, 0.7],
        vec![
            SymMatrix::diag(&[0.0, 0.1]),
            SymMatrix::diag(&[0.2, 0.2]),
            SymMatrix::diag(&[0.9, 0.5]),
        ],
    )
    .unwrap();
    let s = serde_json::to_string(&q).unwrap();
    let back: PiecewisePath = serde_json::from_str(&s).unwrap();
    assert_eq!(q, back);
}
