//! Input generators and independent reference computations shared by the
//! integration tests.

#![allow(dead_code)]

use lqteam::rng::{stream, Stream};
use lqteam::stiefel::sample_stiefel;
use lqteam::TeamSpec;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Two players with scalar observations and a fixed full-rank `W`.
pub fn reference_spec() -> TeamSpec {
    TeamSpec::from_rows(
        vec![1, 1],
        &[vec![2.0, 1.0], vec![1.0, 2.0]],
        &[vec![1.0, 0.5, 0.2, 0.0], vec![0.3, 1.0, 0.0, 0.4], vec![1.0, 0.2, 0.6, 0.3], vec![0.1, 1.0, 0.4, 0.5]],
    )
    .unwrap()
}

/// Random spec with `m ≤ 3`, observation sizes ≤ 2, `Q` SPD with condition
/// number ≤ 100 and a well-conditioned random `W`.
pub fn random_spec(rng: &mut Stream) -> TeamSpec {
    let m = rng.random_range(1..=3);
    let obs_dims: Vec<usize> = (0..m).map(|_| rng.random_range(1..=2)).collect();
    let ell = m + obs_dims.iter().sum::<usize>();
    let u = sample_stiefel(m, m, rng).unwrap().into_matrix();
    let eig: Vec<f64> = (0..m).map(|_| rng.random_range(1.0..100.0)).collect();
    let q = &u * DMatrix::from_diagonal(&DVector::from_vec(eig)) * u.transpose();
    let q = (&q + q.transpose()) * 0.5;
    let w = DMatrix::<f64>::identity(ell, ell) + DMatrix::from_fn(ell, ell, |_, _| 0.5 * rng.sample::<f64, _>(StandardNormal));
    TeamSpec::new(obs_dims, q, w).unwrap()
}

pub fn random_specs(count: usize, seed: u64) -> Vec<TeamSpec> {
    let mut rng = stream(seed);
    (0..count).map(|_| random_spec(&mut rng)).collect()
}

/// Best linear policy by projected gradient descent on the Gaussian cost
/// written in terms of the observation covariance `Σ = WWᵀ`.
///
/// With `u = Gz` for a gain matrix `G` (`m × ℓ`) restricted to player `i`'s
/// observation columns in row `i`, and `s = Ez` the first `m` coordinates,
///
/// `J(G) = ½tr(GᵀQGΣ) + tr(GᵀEΣ) + ½tr(EᵀQ⁻¹EΣ)`,
///
/// whose gradient `QGΣ + EΣ` is projected onto the sparsity pattern.
/// Returns the flattened gains and the objective.
pub fn ngl_projected_gradient(spec: &TeamSpec) -> (Vec<f64>, f64) {
    let m = spec.m();
    let ell = spec.ell();
    let w = spec.w();
    let sigma = w * w.transpose();
    let q = spec.q().clone();
    let e = DMatrix::from_fn(m, ell, |i, j| if i == j { 1.0 } else { 0.0 });
    let mask = DMatrix::from_fn(m, ell, |i, j| if spec.obs_range(i).contains(&j) { 1.0 } else { 0.0 });
    let q_inv = q.clone().try_inverse().unwrap();
    let objective = |g: &DMatrix<f64>| {
        0.5 * (g.transpose() * &q * g * &sigma).trace()
            + (g.transpose() * &e * &sigma).trace()
            + 0.5 * (e.transpose() * &q_inv * &e * &sigma).trace()
    };
    // Lipschitz constant of the gradient: λ_max(Q)·λ_max(Σ)
    let lq = q.symmetric_eigenvalues().max();
    let ls = sigma.symmetric_eigenvalues().max();
    let step = 1.0 / (lq * ls);
    let grad = |g: &DMatrix<f64>| (&q * g * &sigma + &e * &sigma).component_mul(&mask);
    // accelerated projected gradient with gradient-based restarts
    let mut g = DMatrix::<f64>::zeros(m, ell);
    let mut prev = g.clone();
    let mut k = 0.0;
    for _ in 0..1_000_000 {
        let y = &g + (&g - &prev) * (k / (k + 3.0));
        let gy = grad(&y);
        let next = &y - gy.clone() * step;
        if gy.dot(&(&next - &g)) > 0.0 {
            k = 0.0;
        } else {
            k += 1.0;
        }
        prev = std::mem::replace(&mut g, next);
        if grad(&g).norm() < 1e-14 * (1.0 + lq * ls) {
            break;
        }
    }
    let flat: Vec<f64> = (0..m).flat_map(|i| spec.obs_range(i).map(|j| g[(i, j)]).collect::<Vec<_>>()).collect();
    (flat, objective(&g))
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn step<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64, m: f64, fm: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1) + step(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    step(f, a, fa, b, fb, m, fm, whole, tol, 50)
}

/// `Γ(k/2)` for integer `k ≥ 1` from exact factorial-type products.
pub fn gamma_half_integer(k: u32) -> f64 {
    if k.is_multiple_of(2) {
        (1..k / 2).map(f64::from).product()
    } else {
        // Γ(j + 1/2) = √π · (2j−1)!! / 2^j
        let j = (k - 1) / 2;
        let mut v = std::f64::consts::PI.sqrt();
        for i in 0..j {
            v *= (2 * i + 1) as f64 / 2.0;
        }
        v
    }
}

/// `P(‖Z‖ > ρ)` for `Z ~ N(0, I_k)` by quadrature of the chi density.
pub fn chi_survival_quadrature(k: u32, rho: f64) -> f64 {
    let norm = 2f64.powf(k as f64 / 2.0 - 1.0) * gamma_half_integer(k);
    let f = |r: f64| r.powi(k as i32 - 1) * (-0.5 * r * r).exp() / norm;
    let top = rho.max((k as f64).sqrt()) + 40.0;
    // split at the mode so each piece is smooth and unimodal
    let mode = ((k as f64) - 1.0).max(0.0).sqrt();
    if rho < mode {
        integrate(&f, rho, mode, 1e-14) + integrate(&f, mode, top, 1e-14)
    } else {
        integrate(&f, rho, top, 1e-14)
    }
}

/// Largest `|u_i(c) − γ_iᵀc| / (1 + |γ_iᵀc|)` over cell centers `c` in the
/// central `mass` region of each player's partition.
pub fn linear_deviation(policy: &lqteam::TabulatedPolicy, gamma: &lqteam::LinearPolicy, mass: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, t) in policy.players().iter().enumerate() {
        for c in t.central_cells(mass) {
            let center = t.center(c);
            let lin: f64 = gamma.gains[i].iter().zip(center).map(|(g, x)| g * x).sum();
            worst = worst.max((t.eval(center) - lin).abs() / (1.0 + lin.abs()));
        }
    }
    worst
}
