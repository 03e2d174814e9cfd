mod common;

use lqteam::rng::stream;
use lqteam::team::{gaussian_cost, mc_cost, solve_linear};
use lqteam::{Error, LinearPolicy, NoiseFamily, NoiseModel, Policy, ProblemInstance, TeamSpec, ZeroPolicy};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

#[test]
fn linear_solver_matches_projected_gradient() {
    for spec in common::random_specs(10, 100) {
        let gamma = solve_linear(&spec).unwrap().flat();
        let (oracle, obj) = common::ngl_projected_gradient(&spec);
        for (a, b) in gamma.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-6, "{gamma:?} vs {oracle:?}");
        }
        assert!((gaussian_cost(&spec).unwrap() - obj).abs() < 1e-8);
    }
}

#[test]
fn single_player_full_information() {
    // S = H = e₁ᵀ: the player sees the cross term exactly, u = −y, cost 0
    let spec = TeamSpec::from_rows(vec![1], &[vec![1.0]], &[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
    assert_eq!(spec.w_rank().0, 1);
    let g = solve_linear(&spec).unwrap();
    assert!((g.gains[0][0] + 1.0).abs() < 1e-12);
    assert!(gaussian_cost(&spec).unwrap().abs() < 1e-12);
}

#[test]
fn gaussian_cost_closed_form_for_diagonal_team() {
    // Q = I, W = I: players see independent noise and S draws its own
    // coordinates, so the best policy is zero and J_G = E[q] = m/2.
    let spec = TeamSpec::new(vec![1, 1], DMatrix::identity(2, 2), DMatrix::identity(4, 4)).unwrap();
    assert_eq!(solve_linear(&spec).unwrap().flat(), vec![0.0, 0.0]);
    assert!((gaussian_cost(&spec).unwrap() - 1.0).abs() < 1e-15);
}

#[test]
fn cost_matches_direct_formula() {
    let spec = common::reference_spec();
    let mut rng = stream(8);
    let inst = ProblemInstance::sample(&spec, 10, &mut rng).unwrap();
    let q = spec.q();
    let s = inst.s();
    let q_inv = q.clone().try_inverse().unwrap();
    for _ in 0..100 {
        let xi = DVector::from_fn(10, |_, _| rng.sample::<f64, _>(StandardNormal));
        let u = DVector::from_fn(2, |_, _| 3.0 * rng.sample::<f64, _>(StandardNormal));
        let sx = &s * &xi;
        let direct = 0.5 * u.dot(&(q * &u)) + u.dot(&sx) + 0.5 * sx.dot(&(&q_inv * &sx));
        let got = inst.cost(u.as_slice(), xi.as_slice()).unwrap();
        assert!((got - direct).abs() < 1e-10 * (1.0 + direct.abs()), "{got} vs {direct}");
    }
}

#[test]
fn closed_form_is_independent_of_n_and_frame() {
    let spec = common::reference_spec();
    let jg = gaussian_cost(&spec).unwrap();
    for n in [4, 16, 64] {
        for seed in 0..3 {
            let inst = ProblemInstance::sample(&spec, n, &mut stream(seed)).unwrap();
            assert_eq!(gaussian_cost(inst.spec()).unwrap().to_bits(), jg.to_bits());
        }
    }
}

#[test]
fn observation_blocks_follow_w() {
    let spec = common::reference_spec();
    let inst = ProblemInstance::sample(&spec, 12, &mut stream(3)).unwrap();
    let rt = inst.frame().matrix().transpose();
    assert!((inst.s() - spec.w0() * &rt).abs().max() < 1e-14);
    for i in 0..2 {
        assert!((inst.h(i) - spec.w_block(i) * &rt).abs().max() < 1e-14);
    }
}

#[test]
fn mc_cost_agrees_with_closed_form_under_gaussian_noise() {
    let spec = common::reference_spec();
    let gamma = solve_linear(&spec).unwrap();
    let inst = ProblemInstance::sample(&spec, 20, &mut stream(5)).unwrap();
    let noise = NoiseModel::new(NoiseFamily::Gaussian, 20).unwrap();
    let est = mc_cost(&inst, &gamma, &noise, 200_000, &mut stream(6)).unwrap();
    assert!(est.z_against(gaussian_cost(&spec).unwrap()).abs() < 4.0, "{est:?}");
}

#[test]
fn zero_policy_costs_expected_q() {
    let spec = common::reference_spec();
    let inst = ProblemInstance::sample(&spec, 30, &mut stream(2)).unwrap();
    let noise = NoiseModel::new(NoiseFamily::LaplaceProduct, 30).unwrap();
    let est = mc_cost(&inst, &ZeroPolicy, &noise, 200_000, &mut stream(4)).unwrap();
    assert!(est.z_against(spec.expected_q()).abs() < 4.0, "{est:?} vs {}", spec.expected_q());
}

#[test]
fn mc_cost_is_reproducible() {
    let spec = common::reference_spec();
    let gamma = solve_linear(&spec).unwrap();
    let inst = ProblemInstance::sample(&spec, 9, &mut stream(5)).unwrap();
    let noise = NoiseModel::new(NoiseFamily::ExpProduct, 9).unwrap();
    let a = mc_cost(&inst, &gamma, &noise, 30_000, &mut stream(1)).unwrap();
    let b = rayon::ThreadPoolBuilder::new()
        .num_threads(3)
        .build()
        .unwrap()
        .install(|| mc_cost(&inst, &gamma, &noise, 30_000, &mut stream(1)).unwrap());
    assert_eq!(a, b);
}

#[test]
fn invalid_specs_name_the_field() {
    let eye4: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    let check = |res: lqteam::Result<TeamSpec>, field: &str| match res {
        Err(Error::InvalidSpec { field: f, .. }) => assert_eq!(f, field),
        Err(Error::RankDeficient(_)) if field == "W" => {}
        other => panic!("expected an error naming {field}, got {other:?}"),
    };
    check(TeamSpec::from_rows(vec![1, 1], &[vec![2.0, 1.0], vec![0.0, 2.0]], &eye4), "Q");
    check(TeamSpec::from_rows(vec![1, 1], &[vec![1.0, 2.0], vec![2.0, 1.0]], &eye4), "Q");
    let mut w = eye4.clone();
    w[3] = vec![0.0; 4];
    check(TeamSpec::from_rows(vec![1, 1], &[vec![2.0, 1.0], vec![1.0, 2.0]], &w), "W");
    assert!(TeamSpec::from_rows(vec![1, 2], &[vec![2.0, 1.0], vec![1.0, 2.0]], &eye4).is_err());
    assert!(TeamSpec::from_rows(vec![], &[], &[]).is_err());
}

#[test]
fn instance_requires_n_at_least_ell() {
    let spec = common::reference_spec();
    assert!(matches!(ProblemInstance::sample(&spec, 3, &mut stream(0)), Err(Error::Dimension(_))));
    assert!(ProblemInstance::sample(&spec, 4, &mut stream(0)).is_ok());
}

#[test]
fn linear_policy_acts_blockwise() {
    let spec = TeamSpec::new(vec![2, 1], DMatrix::identity(2, 2), DMatrix::identity(5, 5)).unwrap();
    let p = LinearPolicy::from_flat(&spec, &[1.0, 2.0, 3.0]).unwrap();
    let mut u = [0.0; 2];
    p.actions(&spec, &[9.0, 9.0, 1.0, 1.0, 2.0], &mut u);
    assert_eq!(u, [3.0, 6.0]);
    assert!(LinearPolicy::from_flat(&spec, &[1.0]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cost_is_nonnegative(seed in any::<u64>(), n_extra in 0usize..6, scale in 0.01f64..100.0) {
        let mut rng = stream(seed);
        let spec = common::random_spec(&mut rng);
        let n = spec.ell() + n_extra;
        let inst = ProblemInstance::sample(&spec, n, &mut rng).unwrap();
        for _ in 0..20 {
            let xi: Vec<f64> = (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
            let u: Vec<f64> = (0..spec.m()).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
            prop_assert!(inst.cost(&u, &xi).unwrap() >= -1e-9);
        }
    }

    #[test]
    fn best_linear_beats_perturbations(seed in any::<u64>(), eps in -1.0f64..1.0) {
        let spec = common::random_spec(&mut stream(seed));
        let gamma = solve_linear(&spec).unwrap().flat();
        let jg = gaussian_cost(&spec).unwrap();
        let mut rng = stream(seed ^ 1);
        let perturbed: Vec<f64> = gamma.iter().map(|g| g + eps * rng.sample::<f64, _>(StandardNormal)).collect();
        prop_assert!(spec.ngl_objective(&perturbed).unwrap() >= jg - 1e-9 * (1.0 + jg));
    }
}
