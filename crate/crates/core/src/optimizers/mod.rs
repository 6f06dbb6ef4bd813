//! DSMT and baseline steppers as pure state transitions, plus the
//! theorem-driven parameter selectors.

mod selectors;
mod state;
mod steppers;

pub use selectors::{select_params_ncvx, select_params_pl, Bound, ParamSelection};
pub use state::{AgentStreams, AlgorithmState, HyperParams, Variant};
pub(crate) use state::mean_row;
pub use steppers::{baseline_step, dsgt_step, dsmt_step, init_state, smt_step, step, StepContext};

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::oracle::{generate_quadratic, ObjectiveSuite, ProblemConstants, QuadraticSpec, Sampling};
    use crate::topology::{build_graph, mixing_from_graph, GraphSpec, LcaOperator, MixingMatrix, WeightScheme};

    struct Fixture {
        mixing: Arc<MixingMatrix>,
        lca: LcaOperator,
        oracle: ObjectiveSuite,
    }

    fn ring_quadratic(n: usize, seed: u64) -> Fixture {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = build_graph(&GraphSpec::ring(n), &mut rng).unwrap();
        let mixing = Arc::new(mixing_from_graph(&g, WeightScheme::UniformNeighbor, true).unwrap());
        let lca = LcaOperator::new(mixing.clone()).unwrap();
        let spec = QuadraticSpec {
            n_agents: n,
            rows_per_agent: 8,
            dim: 3,
            heterogeneity: 1.0,
            noise: 0.1,
        };
        let oracle = generate_quadratic(&spec, &mut rng).unwrap();
        Fixture { mixing, lca, oracle }
    }

    fn ctx<'a>(f: &'a Fixture, v: Variant, alpha: f64, beta: f64, sampling: Sampling) -> StepContext<'a> {
        StepContext::for_variant(
            v,
            &f.mixing,
            &f.lca,
            &f.oracle,
            HyperParams::new(alpha, beta, 1000).unwrap(),
            sampling,
        )
    }

    fn run(v: Variant, c: &StepContext<'_>, x0: &DMatrix<f64>, seed: u64, steps: usize) -> Vec<AlgorithmState> {
        let mut streams = AgentStreams::new(seed, x0.nrows());
        let mut s = init_state(v, x0, c, &mut streams).unwrap();
        let mut out = vec![s.clone()];
        for _ in 0..steps {
            s = step(&s, c, &mut streams).unwrap();
            out.push(s.clone());
        }
        out
    }

    fn random_x0(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn beta_one_rejected() {
        assert!(HyperParams::new(0.1, 1.0, 10).is_err());
        assert!(HyperParams::new(0.0, 0.5, 10).is_err());
        assert!(HyperParams::new(0.1, 0.5, 0).is_err());
    }

    #[test]
    fn init_sets_momentum_fields() {
        let f = ring_quadratic(6, 1);
        let c = ctx(&f, Variant::Dsmt, 0.01, 0.8, Sampling::default());
        let x0 = random_x0(6, 3, 2);
        let s = init_state(Variant::Dsmt, &x0, &c, &mut AgentStreams::new(9, 6)).unwrap();
        assert_eq!(s.y, s.z);
        assert_eq!(s.y_l, s.z);
        assert_eq!(s.x_l, x0);
        assert_eq!(s.z_prev, DMatrix::zeros(6, 3));
        // z₀ = βz₋₁ + (1−β)g₀ with z₋₁ = 0: replay the same stream.
        let mut streams = AgentStreams::new(9, 6);
        for i in 0..6 {
            let g = f
                .oracle
                .sample_grad(i, &x0.row(i).transpose(), Sampling::default(), streams.agent(i))
                .unwrap();
            let expect = &s.z_prev.row(i).transpose() * 0.8 + g.value * (1.0 - 0.8);
            assert_eq!(s.z.row(i).transpose(), expect);
        }
    }

    #[test]
    fn common_start_with_full_gradients_gives_identical_rows() {
        let blocks = (0..4)
            .map(|_| (DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 2.0]), DVector::from_vec(vec![1.0, -1.0])))
            .collect();
        let oracle = ObjectiveSuite::quadratic(blocks).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = build_graph(&GraphSpec::ring(4), &mut rng).unwrap();
        let mixing = Arc::new(mixing_from_graph(&g, WeightScheme::UniformNeighbor, true).unwrap());
        let lca = LcaOperator::new(mixing.clone()).unwrap();
        let f = Fixture { mixing, lca, oracle };
        let c = ctx(&f, Variant::Dsmt, 0.05, 0.7, Sampling::without_replacement(2));
        let x0 = DMatrix::from_fn(4, 2, |_, q| [0.3, -0.2][q]);
        let traj = run(Variant::Dsmt, &c, &x0, 0, 50);
        for w in traj.windows(2) {
            let (s, t) = (&w[0], &w[1]);
            for i in 1..4 {
                assert_eq!(t.x.row(i), t.x.row(0));
                assert_eq!(t.y.row(i), t.y.row(0));
            }
            // SGDM form of the averaged recursion.
            let zbar = mean_row(&s.z);
            assert!((t.x_bar() - (s.x_bar() - zbar * 0.05)).amax() < 1e-14);
            let expect = mean_row(&s.z) * 0.7 + &t.g_bar_last * 0.3;
            assert!((mean_row(&t.z) - expect).amax() < 1e-14);
        }
    }

    #[test]
    fn dsmt_one_step_scalar_pair() {
        let blocks = vec![
            (DMatrix::from_element(1, 1, 1.0), DVector::from_element(1, 2.0)),
            (DMatrix::from_element(1, 1, 1.0), DVector::from_element(1, 0.0)),
        ];
        let oracle = ObjectiveSuite::quadratic(blocks).unwrap();
        let mixing = Arc::new(MixingMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[0.75, 0.25, 0.25, 0.75])).unwrap());
        let lca = LcaOperator::new(mixing.clone()).unwrap();
        let f = Fixture { mixing, lca, oracle };
        let c = ctx(&f, Variant::Dsmt, 0.1, 0.5, Sampling::without_replacement(1));
        let x0 = DMatrix::from_column_slice(2, 1, &[1.0, -1.0]);
        let traj = run(Variant::Dsmt, &c, &x0, 0, 1);
        let s = &traj[1];
        let close = |m: &DMatrix<f64>, v: [f64; 2]| {
            assert_abs_diff_eq!(m[(0, 0)], v[0], epsilon = 1e-15);
            assert_abs_diff_eq!(m[(1, 0)], v[1], epsilon = 1e-15);
        };
        close(&s.x, [0.28205080756887735, -0.1820508075688772]);
        close(&s.x_l, [1.05, -0.95]);
        close(&s.z, [-1.1089745962155613, -0.3410254037844386]);
        close(&s.y, [-0.8141016151377545, -0.6358983848622454]);
        close(&s.y_l, [-1.1089745962155613, -0.3410254037844386]);
    }

    #[test]
    fn zero_eta_lca_reproduces_plain_mixing() {
        let f = ring_quadratic(8, 4);
        let lca0 = LcaOperator::with_eta(f.mixing.clone(), 0.0).unwrap();
        let hp = HyperParams::new(0.02, 0.6, 100).unwrap();
        let with_lca = StepContext {
            mixing: Some(&f.mixing),
            lca: Some(&lca0),
            oracle: &f.oracle,
            hp,
            sampling: Sampling::default(),
            hb_momentum: 0.9,
        };
        let plain = ctx(&f, Variant::DsmtNoLca, 0.02, 0.6, Sampling::default());
        let x0 = random_x0(8, 3, 5);
        let a = run(Variant::Dsmt, &with_lca, &x0, 11, 100);
        let b = run(Variant::DsmtNoLca, &plain, &x0, 11, 100);
        for (s, t) in a.iter().zip(&b) {
            assert_eq!(s.x, t.x);
            assert_eq!(s.y, t.y);
            assert_eq!(s.z, t.z);
        }
    }

    #[test]
    fn momentum_tracking_and_mean_recursions() {
        let f = ring_quadratic(10, 6);
        for v in [Variant::Dsmt, Variant::DsmtNoLca] {
            let c = ctx(&f, v, 0.01, 0.9, Sampling::with_replacement(2));
            let traj = run(v, &c, &random_x0(10, 3, 7), 3, 1000);
            for w in traj.windows(2) {
                let zbar = mean_row(&w[1].z);
                assert!((mean_row(&w[1].y) - &zbar).norm() <= 1e-10 * (1.0 + zbar.norm()));
                let resid = w[1].x_bar() - w[0].x_bar() + mean_row(&w[0].y) * 0.01;
                assert!(resid.norm() <= 1e-10 * (1.0 + w[0].x_bar().norm()), "{v}");
            }
        }
    }

    #[test]
    fn gradient_tracking_identity() {
        let f = ring_quadratic(10, 8);
        let c = ctx(&f, Variant::Dsgt, 0.01, 0.0, Sampling::default());
        for s in run(Variant::Dsgt, &c, &random_x0(10, 3, 1), 2, 500) {
            let gbar = &s.g_bar_last;
            assert!((mean_row(&s.y) - gbar).norm() <= 1e-10 * (1.0 + gbar.norm()));
        }
    }

    #[test]
    fn deterministic_dsgt_reaches_optimum() {
        let f = ring_quadratic(6, 10);
        let full = Sampling::without_replacement(8);
        let c = ctx(&f, Variant::Dsgt, 0.05, 0.0, full);
        let last = run(Variant::Dsgt, &c, &random_x0(6, 3, 2), 0, 4000).pop().unwrap();
        let (x_star, _) = crate::oracle::solve_reference(&f.oracle).unwrap();
        for i in 0..6 {
            assert!((last.x.row(i).transpose() - &x_star).norm() < 1e-8);
        }
    }

    #[test]
    fn single_agent_reductions() {
        let mixing = Arc::new(MixingMatrix::averaging(1).unwrap());
        let lca = LcaOperator::new(mixing.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = QuadraticSpec {
            n_agents: 1,
            rows_per_agent: 20,
            dim: 4,
            heterogeneity: 1.0,
            noise: 0.5,
        };
        let oracle = generate_quadratic(&spec, &mut rng).unwrap();
        let f = Fixture { mixing, lca, oracle };
        let x0 = random_x0(1, 4, 8);
        let rel = |a: &DMatrix<f64>, b: &DMatrix<f64>| (a - b).norm() / (1.0 + b.norm());
        let reference = run(Variant::Csgdm, &ctx(&f, Variant::Csgdm, 0.02, 0.8, Sampling::default()), &x0, 5, 1000);
        let dsmt = run(Variant::Dsmt, &ctx(&f, Variant::Dsmt, 0.02, 0.8, Sampling::default()), &x0, 5, 1000);
        for (a, b) in dsmt.iter().zip(&reference) {
            assert!(rel(&a.x, &b.x) <= 1e-12);
        }
        let sgd = run(Variant::Csgd, &ctx(&f, Variant::Csgd, 0.02, 0.0, Sampling::default()), &x0, 5, 1000);
        for v in [Variant::Dsgt, Variant::Dsgd] {
            let t = run(v, &ctx(&f, v, 0.02, 0.0, Sampling::default()), &x0, 5, 1000);
            for (a, b) in t.iter().zip(&sgd) {
                assert!(rel(&a.x, &b.x) <= 1e-12, "{v}");
            }
        }
        let m0 = run(Variant::Csgdm, &ctx(&f, Variant::Csgdm, 0.02, 0.0, Sampling::default()), &x0, 5, 300);
        for (a, b) in m0.iter().zip(&sgd) {
            assert_eq!(a.x, b.x);
        }
    }

    #[test]
    fn exact_diffusion_on_identical_agents_is_gradient_descent() {
        let blocks = (0..5)
            .map(|_| (DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 1.0, 1.0]), DVector::from_vec(vec![1.0, 3.0])))
            .collect();
        let oracle = ObjectiveSuite::quadratic(blocks).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = build_graph(&GraphSpec::ring(5), &mut rng).unwrap();
        let mixing = Arc::new(mixing_from_graph(&g, WeightScheme::UniformNeighbor, true).unwrap());
        let lca = LcaOperator::new(mixing.clone()).unwrap();
        let f = Fixture { mixing, lca, oracle };
        let c = ctx(&f, Variant::Ed, 0.1, 0.0, Sampling::without_replacement(2));
        let x0 = DMatrix::from_fn(5, 2, |_, q| [1.0, -2.0][q]);
        let traj = run(Variant::Ed, &c, &x0, 0, 200);
        let mut x = DVector::from_vec(vec![1.0, -2.0]);
        for s in &traj {
            assert!((s.x_bar() - &x).amax() < 1e-12);
            x -= f.oracle.grad_global(&x).unwrap() * 0.1;
        }
    }

    #[test]
    fn divergence_reports_iteration() {
        let f = ring_quadratic(4, 2);
        let c = ctx(&f, Variant::Dsgd, 50.0, 0.0, Sampling::default());
        let mut streams = AgentStreams::new(0, 4);
        let mut s = init_state(Variant::Dsgd, &random_x0(4, 3, 0), &c, &mut streams).unwrap();
        let err = loop {
            match step(&s, &c, &mut streams) {
                Ok(t) => s = t,
                Err(e) => break e,
            }
        };
        match err {
            crate::LabError::Divergence { k } => assert_eq!(k, s.k + 1),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn context_mismatch_rejected() {
        let f = ring_quadratic(4, 2);
        let mut c = ctx(&f, Variant::Dsgt, 0.01, 0.0, Sampling::default());
        let x0 = random_x0(4, 3, 0);
        assert!(init_state(Variant::Dsmt, &x0, &c, &mut AgentStreams::new(0, 4)).is_err());
        c.mixing = None;
        assert!(init_state(Variant::Dsgt, &x0, &c, &mut AgentStreams::new(0, 4)).is_err());
        let c = ctx(&f, Variant::Dsgt, 0.01, 0.0, Sampling::default());
        assert!(init_state(Variant::Dsgt, &random_x0(4, 2, 0), &c, &mut AgentStreams::new(0, 4)).is_err());
    }

    #[test]
    fn snapshot_lists_used_blocks() {
        let f = ring_quadratic(4, 2);
        let c = ctx(&f, Variant::Dsgt, 0.01, 0.0, Sampling::default());
        let s = init_state(Variant::Dsgt, &random_x0(4, 3, 0), &c, &mut AgentStreams::new(0, 4)).unwrap();
        let names: Vec<_> = s.snapshot().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["x", "y", "g"]);
        let x = crate::matrix_io::parse_matrix(&s.snapshot()[0].1).unwrap();
        assert_eq!(x, s.x);
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("SGD".parse::<Variant>().is_err());
    }

    fn ncvx_constants() -> ProblemConstants {
        ProblemConstants {
            l: 1.0,
            c: 1.0,
            sigma: 1.0,
            sigma_star_f: 0.0,
            mu: None,
            delta0: 1.0,
            f_star: None,
        }
    }

    #[test]
    fn ncvx_selector_frozen_values() {
        let s = select_params_ncvx(&ncvx_constants(), 10_000, 16, 0.9).unwrap();
        assert_abs_diff_eq!(s.formula_alpha, 5.389139355445636544e-5, epsilon = 1e-17);
        assert_abs_diff_eq!(s.hp.beta, 0.96031497370079501313, epsilon = 1e-15);
        assert_eq!(s.active_bound, "formula");
        let frozen = [
            3.2602533184831316277e-4,
            8.2677138123343722643e-4,
            2.5168398347135603447e-3,
            1.4142135623730950488e-2,
            8.7716867798470023619e-4,
        ];
        for (b, v) in s.bounds.iter().zip(frozen) {
            assert_abs_diff_eq!(b.value, v, epsilon = 1e-15);
        }
        assert!(s.violations(s.hp.alpha).is_empty());
    }

    #[test]
    fn ncvx_selector_properties() {
        let c = ncvx_constants();
        let one = select_params_ncvx(&c, 1000, 1, 0.83).unwrap();
        assert_eq!(one.hp.beta, 0.83);
        let a = select_params_ncvx(&c, 1000, 8, 0.9).unwrap();
        let b = select_params_ncvx(&c, 2000, 8, 0.9).unwrap();
        assert!(b.formula_alpha < a.formula_alpha);
        let mut bad = c.clone();
        bad.l = 0.0;
        assert!(select_params_ncvx(&bad, 10, 4, 0.9).unwrap_err().to_string().contains("L must"));
        let mut bad = c;
        bad.delta0 = -1.0;
        assert!(select_params_ncvx(&bad, 10, 4, 0.9).unwrap_err().to_string().contains("delta0"));
    }

    fn pl_constants() -> ProblemConstants {
        ProblemConstants {
            l: 1.0,
            c: 0.5,
            sigma: 1.0,
            sigma_star_f: 0.2,
            mu: Some(0.1),
            delta0: 1.0,
            f_star: Some(0.0),
        }
    }

    #[test]
    fn pl_selector_frozen_values() {
        let s = select_params_pl(&pl_constants(), 100_000, 4, 0.9, 2.0).unwrap();
        assert_abs_diff_eq!(s.formula_alpha, 4.9205531301337994358e-3, epsilon = 1e-15);
        assert_abs_diff_eq!(s.hp.beta, 0.95, epsilon = 1e-15);
        assert_eq!(s.active_bound, "pl_2");
        assert_abs_diff_eq!(s.hp.alpha, 3.4993421236807480194e-7, epsilon = 1e-19);
        let frozen = [
            0.16666666666666666667,
            3.4993421236807480194e-7,
            3.7646162621052134905e-4,
            8.3658139157893633122e-4,
            2.4300493479991846212e-5,
        ];
        for (b, v) in s.bounds.iter().zip(frozen) {
            assert_abs_diff_eq!(b.value, v, epsilon = 1e-15);
        }
        assert!(s.violations(s.hp.alpha).is_empty());
        assert_eq!(s.unclamped().alpha, s.formula_alpha);
    }

    #[test]
    fn pl_selector_properties() {
        let c = pl_constants();
        let a = select_params_pl(&c, 20_000, 4, 0.9, 2.0).unwrap();
        let b = select_params_pl(&c, 40_000, 4, 0.9, 2.0).unwrap();
        assert!(b.formula_alpha < a.formula_alpha);
        assert!(b.formula_alpha > 0.5 * a.formula_alpha);
        assert!(select_params_pl(&c, 100, 1, 0.9, 2.0).is_err());
        let err = select_params_pl(&c, 1, 4, 0.9, 1e-3).unwrap_err().to_string();
        assert!(err.contains("increase K"), "{err}");
        let mut no_mu = c;
        no_mu.mu = None;
        assert!(select_params_pl(&no_mu, 100, 4, 0.9, 2.0).is_err());
    }
}
