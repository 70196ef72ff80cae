mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;
use regret_synth::operators::{build_stacked, noncausal_control};
use regret_synth::slp::{achievability_residual, closed_loop_response, recover_controller, Controller};
use regret_synth::sim::{generate, rollout, DisturbanceFamily};
use regret_synth::synthesis::{RegretWeight, Synthesizer};
use regret_synth::verify::{
    local_level_lower_bound, min_regret_eigenvalue, polytopic_exact_level, AscentSettings,
};

fn random_gain(rng: &mut ChaCha8Rng, case: &Case, scale: f64) -> Controller {
    let (n, m, _) = case.sys.dims();
    let t = case.sys.horizon();
    let mut k = gaussian(rng, m * (t + 1), n * (t + 1)) * scale;
    for row in 0..=t {
        for c in n * (row + 1)..n * (t + 1) {
            for i in 0..m {
                k[(m * row + i, c)] = 0.0;
            }
        }
    }
    Controller::from_dense(&case.sys, &k).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn stacked_maps_match_rollouts(seed in 0u64..10_000) {
        let case = random_case(seed, 10);
        let ops = build_stacked(&case.sys).unwrap();
        let (f, g) = open_loop_maps(&case.sys);
        prop_assert!((&ops.f - f).amax() < 1e-10);
        prop_assert!((&ops.g - g).amax() < 1e-10);
    }

    #[test]
    fn benchmark_is_the_clairvoyant_optimum(seed in 0u64..10_000) {
        let case = random_case(seed, 6);
        let syn = Synthesizer::new(&case.sys, &case.cost, settings()).unwrap();
        let o = syn.benchmark().unwrap();
        let oracle = benchmark_oracle(&case.sys, &case.cost);
        prop_assert!((o.matrix() - &oracle).amax() <= 1e-9 * oracle.amax().max(1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ops = build_stacked(&case.sys).unwrap();
        let (f, g) = open_loop_maps(&case.sys);
        let (q, r) = cost_blocks(&case.sys, &case.cost);
        let j = |u: &DVector<f64>, d: &DVector<f64>| {
            let x = &f * u + &g * d;
            (x.transpose() * &q * &x)[(0, 0)] + (u.transpose() * &r * u)[(0, 0)]
        };
        for _ in 0..20 {
            let d = gaussian_vec(&mut rng, case.sys.delta_dim());
            let star = noncausal_control(&case.sys, &ops, &case.cost, &d).unwrap();
            let best = j(&star, &d);
            prop_assert!((o.cost(&d) - best).abs() <= 1e-8 * best.abs().max(1.0));
            let other = &star + gaussian_vec(&mut rng, star.len()) * 0.1;
            prop_assert!(j(&other, &d) >= best - 1e-9 * best.abs().max(1.0));
        }
    }

    #[test]
    fn gain_round_trips_through_the_response(seed in 0u64..10_000) {
        let case = random_case(seed, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let k0 = random_gain(&mut rng, &case, 0.4);
        let phi = closed_loop_response(&case.sys, &k0).unwrap();
        let ops = build_stacked(&case.sys).unwrap();
        prop_assert!(achievability_residual(&phi, &ops).unwrap() < 1e-9);
        let k1 = recover_controller(&case.sys, &phi).unwrap();
        prop_assert!((k0.dense() - k1.dense()).amax() < 1e-8);
        let d = gaussian_vec(&mut rng, case.sys.delta_dim());
        let (x0, w) = split_w(&case.sys, &d);
        let (xs, us) = rollout(&case.sys, &k1, &x0, &w).unwrap();
        prop_assert!((stack(&xs) - phi.phi_x() * &d).amax() < 1e-8);
        prop_assert!((stack(&us) - phi.phi_u() * &d).amax() < 1e-8);
    }

    #[test]
    fn causal_regret_is_nonnegative(seed in 0u64..10_000) {
        let case = random_case(seed, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = random_gain(&mut rng, &case, 0.5);
        let phi = closed_loop_response(&case.sys, &k).unwrap();
        let syn = Synthesizer::new(&case.sys, &case.cost, settings()).unwrap();
        let o = syn.benchmark().unwrap();
        let floor = min_regret_eigenvalue(&phi, &case.cost, &o).unwrap();
        prop_assert!(floor >= -1e-8 * o.matrix().amax().max(1.0));
    }

    #[test]
    fn generated_disturbances_stay_in_the_set(seed in 0u64..10_000) {
        let case = random_case(seed, 8);
        for fam in DisturbanceFamily::all() {
            for w in generate(&fam, &case.sys, &case.shape, 20, seed).unwrap() {
                for wk in &w {
                    prop_assert!((wk.transpose() * &case.shape * wk)[(0, 0)] <= 1.0 + 1e-12);
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn synthesis_levels_are_ordered(seed in 0u64..10_000) {
        let case = random_case(seed, 5);
        let syn = Synthesizer::new(&case.sys, &case.cost, settings()).unwrap();
        let o = syn.benchmark().unwrap();
        let w = RegretWeight::identity(&case.sys);
        let zero = syn.zero_init(&o, &w).unwrap();
        let adv = syn.adversarial_init(&o, &w).unwrap();
        let hinf = syn.hinf(None).unwrap();
        let (mz, ma, mh) = (zero.level().unwrap(), adv.level().unwrap(), hinf.level().unwrap());
        prop_assert!(mz >= -1e-7);
        prop_assert!(ma >= mz - 1e-6 * mz.abs().max(1.0));
        prop_assert!(mh >= mz - 1e-6 * mz.abs().max(1.0));

        let pw = hinf.response().unwrap().phi_w();
        let (q, r) = cost_blocks(&case.sys, &case.cost);
        let c = block_diag(&[q, r]);
        let gram = pw.transpose() * c * &pw;
        let top = ((&gram + gram.transpose()) * 0.5).symmetric_eigen().eigenvalues.max();
        prop_assert!((mh - top).abs() <= 1e-5 * top.abs().max(1e-9), "γ² {mh} vs {top}");
    }

    #[test]
    fn pointwise_level_grows_with_the_set(seed in 0u64..10_000) {
        let case = random_case(seed, 4);
        let syn = Synthesizer::new(&case.sys, &case.cost, settings()).unwrap();
        let o = syn.benchmark().unwrap();
        let w = RegretWeight::identity(&case.sys);
        let levels: Vec<f64> = [4.0, 1.0, 0.25]
            .iter()
            .map(|s| syn.pointwise(&o, &w, &case.x0, &(&case.shape * *s), None).unwrap().level().unwrap())
            .collect();
        prop_assert!(levels[0] <= levels[1] + 1e-6 && levels[1] <= levels[2] + 1e-6, "{levels:?}");
        let res = syn.pointwise(&o, &w, &case.x0, &case.shape, None).unwrap();
        prop_assert!(res.lambdas.iter().all(|&l| l >= -1e-7));
        let ascent = AscentSettings { restarts: 10, max_iter: 200, seed };
        let local = local_level_lower_bound(res.response().unwrap(), &case.cost, &o, &w, &case.x0, &case.shape, &ascent).unwrap();
        prop_assert!(local.value <= res.level().unwrap() + 1e-6);
    }
}

#[test]
fn box_polytope_is_dominated_by_its_enclosing_ellipsoid() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for p in [1usize, 2] {
        let case = random_case_dims(&mut rng, 1, 1, p, 2);
        let a = 0.5;
        let vertices: Vec<DVector<f64>> = if p == 1 {
            vec![DVector::from_element(1, a), DVector::from_element(1, -a)]
        } else {
            [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]
                .iter()
                .map(|&(x, y)| DVector::from_vec(vec![a * x, a * y]))
                .collect()
        };
        let shape = DMatrix::identity(p, p) / (p as f64 * a * a);
        let syn = Synthesizer::new(&case.sys, &case.cost, settings()).unwrap();
        let o = syn.benchmark().unwrap();
        let w = RegretWeight::identity(&case.sys);
        let res = syn.pointwise(&o, &w, &case.x0, &shape, None).unwrap();
        let bar = res.level().unwrap();
        let poly = polytopic_exact_level(res.response().unwrap(), &case.cost, &o, &w, &case.x0, &vertices).unwrap();
        assert!(poly <= bar + 1e-6, "p = {p}: polytope {poly} above ellipsoid {bar}");
        let mut more = vertices.clone();
        more.push(DVector::zeros(p));
        let poly_more = polytopic_exact_level(res.response().unwrap(), &case.cost, &o, &w, &case.x0, &more).unwrap();
        assert!(poly_more >= poly - 1e-9);
    }
}

#[test]
fn zero_state_cost_gives_zero_competitive_level() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let case = random_case_dims(&mut rng, 2, 1, 2, 4);
    let t = case.sys.horizon();
    let cost = regret_synth::operators::CostSpec::time_invariant(
        DMatrix::zeros(2, 2),
        DMatrix::identity(1, 1),
        t,
        Default::default(),
    )
    .unwrap();
    let syn = Synthesizer::new(&case.sys, &cost, settings()).unwrap();
    let o = syn.benchmark().unwrap();
    let w = RegretWeight::benchmark(&o);
    assert!(w.regularisation().is_some());
    let mu = syn.energy_ball(&o, &w, &case.x0, 1.0, None).unwrap().level().unwrap();
    assert!(mu.abs() <= 1e-6, "mu = {mu}");
}
