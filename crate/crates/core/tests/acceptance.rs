//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line with the
//! measured quantities before asserting.

mod common;

use std::process::Command;
use std::time::{Duration, Instant};

use lqteam::bounds::{envelope_budget, tail_weight};
use lqteam::diagnostics::{density_report, gap_sweep};
use lqteam::pbp::{pbp_solve, truncated_gaussian_value};
use lqteam::rng::stream;
use lqteam::team::{gaussian_cost, mc_cost, solve_linear};
use lqteam::{BoundConstants, NoiseFamily, NoiseModel, PbpConfig, ProblemInstance, TeamSpec};
use rand::Rng;
use rand_distr::StandardNormal;

fn report(id: u32, name: &str, ok: bool, elapsed: Duration, detail: String) {
    println!("{} criterion {id:>2} {name}: {detail} [{:.1}s]", if ok { "PASS" } else { "FAIL" }, elapsed.as_secs_f64());
    assert!(ok, "criterion {id} failed: {detail}");
}

#[test]
fn criterion_01_linear_solver_oracle() {
    let start = Instant::now();
    let (mut gamma_err, mut obj_err): (f64, f64) = (0.0, 0.0);
    for spec in common::random_specs(50, 1) {
        let gamma = solve_linear(&spec).unwrap().flat();
        let (oracle, obj) = common::ngl_projected_gradient(&spec);
        gamma_err = gamma.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(gamma_err, f64::max);
        obj_err = obj_err.max((gaussian_cost(&spec).unwrap() - obj).abs());
    }
    let t = start.elapsed();
    let ok = gamma_err <= 1e-6 && obj_err <= 1e-8 && t < Duration::from_secs(30);
    report(1, "linear solver vs projected gradient", ok, t, format!("max |Δγ| = {gamma_err:.2e}, max |ΔJ| = {obj_err:.2e} over 50 specs"));
}

#[test]
fn criterion_02_gaussian_closed_form_vs_monte_carlo() {
    let start = Instant::now();
    let mut worst_z: f64 = 0.0;
    let mut bit_identical = true;
    for (k, spec) in common::random_specs(20, 2).iter().enumerate() {
        let jg = gaussian_cost(spec).unwrap();
        let gamma = solve_linear(spec).unwrap();
        let ell = spec.ell();
        let inst = ProblemInstance::sample(spec, 4 * ell, &mut stream(100 + k as u64)).unwrap();
        let noise = NoiseModel::new(NoiseFamily::Gaussian, 4 * ell).unwrap();
        let est = mc_cost(&inst, &gamma, &noise, 1_000_000, &mut stream(200 + k as u64)).unwrap();
        worst_z = worst_z.max(est.z_against(jg).abs());
        for n in [ell, 4 * ell, 16 * ell] {
            for r in 0..5 {
                let inst = ProblemInstance::sample(spec, n, &mut stream(1000 * k as u64 + 10 * n as u64 + r)).unwrap();
                bit_identical &= gaussian_cost(inst.spec()).unwrap().to_bits() == jg.to_bits();
            }
        }
    }
    let t = start.elapsed();
    let ok = worst_z < 4.0 && bit_identical && t < Duration::from_secs(120);
    report(2, "Gaussian closed form vs Monte Carlo", ok, t, format!("max |z| = {worst_z:.2} over 20 specs at 1e6 samples, closed form bit-identical: {bit_identical}"));
}

#[test]
fn criterion_03_moment_only_dependence() {
    let start = Instant::now();
    let mut worst: (f64, String) = (0.0, String::new());
    let specs: Vec<TeamSpec> = std::iter::once(common::reference_spec()).chain(common::random_specs(2, 3)).collect();
    for (k, spec) in specs.iter().enumerate() {
        let jg = gaussian_cost(spec).unwrap();
        let gamma = solve_linear(spec).unwrap();
        let n = 3 * spec.ell();
        let inst = ProblemInstance::sample(spec, n, &mut stream(300 + k as u64)).unwrap();
        for family in NoiseFamily::ALL.into_iter().filter(|f| *f != NoiseFamily::Gaussian) {
            let noise = NoiseModel::new(family, n).unwrap();
            let z = mc_cost(&inst, &gamma, &noise, 1_000_000, &mut stream(400 + k as u64)).unwrap().z_against(jg).abs();
            if z >= worst.0 {
                worst = (z, format!("spec {k}, {family}"));
            }
        }
    }
    let t = start.elapsed();
    let ok = worst.0 < 5.0 && t < Duration::from_secs(180);
    report(3, "non-Gaussian noise leaves the linear cost unchanged", ok, t, format!("max |z| = {:.2} ({}) over 3 specs x 4 families at 1e6 samples", worst.0, worst.1));
}

#[test]
fn criterion_04_cost_nonnegativity() {
    let start = Instant::now();
    let mut rng = stream(4);
    let mut min_cost = f64::INFINITY;
    let mut triples = 0;
    for _ in 0..10_000 {
        let spec = common::random_spec(&mut rng);
        let n = spec.ell() + rng.random_range(0..8usize);
        let inst = ProblemInstance::sample(&spec, n, &mut rng).unwrap();
        for _ in 0..10 {
            let scale = 10f64.powf(rng.random_range(-2.0..3.0));
            let xi: Vec<f64> = (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
            let u: Vec<f64> = (0..spec.m()).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
            min_cost = min_cost.min(inst.cost(&u, &xi).unwrap());
            triples += 1;
        }
    }
    let t = start.elapsed();
    report(4, "cost nonnegativity", min_cost >= -1e-9, t, format!("min cost {min_cost:.3e} over {triples} triples"));
}

#[test]
fn criterion_05_gap_decay() {
    let start = Instant::now();
    let spec = common::reference_spec();
    let jg = gaussian_cost(&spec).unwrap();
    let cfg = PbpConfig { bins: 64, samples: 200_000, ..PbpConfig::for_spec(&spec).unwrap() };
    let rows = gap_sweep(&spec, NoiseFamily::ExpProduct, &[4, 16, 64, 256], &cfg, &BoundConstants::default(), &mut stream(7)).unwrap();
    let mut ok = rows.iter().all(|r| r.error.is_none());
    let mut parts = Vec::new();
    for r in &rows {
        let (gap, se) = (r.gap.unwrap_or(f64::NAN), r.combined_stderr().unwrap_or(f64::NAN));
        ok &= gap >= -3.0 * se;
        parts.push(format!("n={} gap {gap:.3e} (se {se:.1e})", r.n));
    }
    let (first, last) = (rows[0].gap.unwrap_or(f64::NAN), rows[3].gap.unwrap_or(f64::NAN));
    ok &= last <= first && last <= 0.05 * jg;
    let t = start.elapsed();
    ok &= t < Duration::from_secs(600);
    report(5, "gap decay", ok, t, format!("{}; 0.05·J_G = {:.3e}", parts.join(", "), 0.05 * jg));
}

#[test]
fn criterion_06_pbp_recovers_gaussian_optimum() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut shapes = Vec::new();
    for (k, spec) in common::random_specs(3, 6).iter().enumerate() {
        let n = spec.ell() + 4;
        let inst = ProblemInstance::sample(spec, n, &mut stream(600 + k as u64)).unwrap();
        let noise = NoiseModel::new(NoiseFamily::Gaussian, n).unwrap();
        let sol = pbp_solve(&inst, &noise, &PbpConfig::for_spec(spec).unwrap(), &mut stream(700 + k as u64)).unwrap();
        let gamma = solve_linear(spec).unwrap();
        worst = worst.max(common::linear_deviation(&sol.policy, &gamma, 0.9));
        shapes.push(format!("{:?}", spec.obs_dims()));
    }
    let t = start.elapsed();
    let ok = worst <= 0.05 && t < Duration::from_secs(300);
    report(6, "PBP recovers the Gaussian linear optimum", ok, t, format!("sup-cell relative deviation {worst:.4} on central 90% cells, obs dims {}", shapes.join(" ")));
}

#[test]
fn criterion_07_clt_diagnostics_trend() {
    let start = Instant::now();
    let mut rng = stream(3);
    let reports: Vec<_> = [8, 64, 512]
        .iter()
        .map(|&n| density_report(&NoiseModel::new(NoiseFamily::UniformCubeProduct, n).unwrap(), 2, 1_000_000, &mut rng).unwrap())
        .collect();
    let tv: Vec<f64> = reports.iter().map(|r| r.tv_estimate).collect();
    let ratio: Vec<f64> = reports.iter().map(|r| r.grid_sup_ratio_err).collect();
    let t = start.elapsed();
    let ok = tv.windows(2).all(|w| w[1] < w[0]) && tv[2] < 0.05 && ratio.windows(2).all(|w| w[1] <= w[0]) && t < Duration::from_secs(300);
    report(7, "CLT diagnostics trend", ok, t, format!("TV {tv:.4?}, ratio error {ratio:.4?} for n = 8, 64, 512"));
}

#[test]
fn criterion_08_tail_weight() {
    let start = Instant::now();
    let mut rng = stream(8);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let r = rng.random_range(1..=5usize);
        let l = r + rng.random_range(1..=20usize);
        let t = rng.random_range(0.0..10.0);
        let want = common::chi_survival_quadrature((l - r) as u32, (0.75f64).sqrt() * t);
        worst = worst.max((tail_weight(l, r, t).unwrap() - want).abs());
    }
    let exact = tail_weight(7, 7, 2.5).unwrap() == 0.0 && tail_weight(7, 3, 0.0).unwrap() == 1.0;
    let t = start.elapsed();
    let ok = worst < 1e-10 && exact && t < Duration::from_secs(5);
    report(8, "tail weight vs quadrature", ok, t, format!("max error {worst:.2e} over 100 draws, exact endpoints: {exact}"));
}

#[test]
fn criterion_09_truncated_value_monotone() {
    let start = Instant::now();
    let spec = common::reference_spec();
    let jg = gaussian_cost(&spec).unwrap();
    let cfg = PbpConfig::for_spec(&spec).unwrap();
    let mut rng = stream(9);
    let ts = [0.5, 1.0, 2.0, 4.0, 100.0];
    let vs: Vec<_> = ts.iter().map(|&t| truncated_gaussian_value(&spec, t, &cfg, &mut rng).unwrap()).collect();
    let monotone = vs.windows(2).all(|w| w[1].value >= w[0].value - 3.0 * w[0].combined_stderr(&w[1]));
    let z_last = vs[4].z_against(jg);
    let t = start.elapsed();
    let ok = monotone && z_last.abs() < 4.0 && t < Duration::from_secs(300);
    let values: Vec<String> = vs.iter().zip(ts).map(|(v, t)| format!("v({t}) = {:.5}", v.value)).collect();
    report(9, "truncated value monotonicity", ok, t, format!("{}; J_G = {jg:.5}, z(v(100)) = {z_last:.2}", values.join(", ")));
}

#[test]
fn criterion_10_envelope_budget_stability() {
    let start = Instant::now();
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let mut worst: f64 = 0.0;
    for a in [0.05, 0.5, 1.0, sqrt_pi, 4.0] {
        for k in 1..=50u32 {
            let got = envelope_budget(a, 0.0, 2 + k as usize, 2).unwrap();
            let want = f64::from(k) * (a / sqrt_pi).ln() + common::gamma_half_integer(k).ln()
                - std::f64::consts::LN_2
                - common::gamma_half_integer(2 * k).ln();
            worst = worst.max((got - want).abs() / want.abs());
        }
    }
    let finite = [10_000usize, 100_000, 1_000_000].iter().all(|&n| [0.05, 1.0, 10.0].iter().all(|&a| envelope_budget(a, 1.0, n, 2).unwrap().is_finite()));
    let t = start.elapsed();
    report(10, "envelope budget stability", worst < 1e-9 && finite, t, format!("max relative error {worst:.2e} for n − l ≤ 50, finite up to n = 1e6: {finite}"));
}

#[test]
fn criterion_11_reproducible_gap_sweep_csv() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("gap.json");
    std::fs::write(
        &config,
        r#"{"seed": 11, "noise": "exp_product", "n_list": [4, 16, 64, 256], "pbp": {"bins": 64, "samples": 50000},
            "spec": {"obs_dims": [1, 1], "Q": [[2, 1], [1, 2]],
                     "W": [[1, 0.5, 0.2, 0], [0.3, 1, 0, 0.4], [1, 0.2, 0.6, 0.3], [0.1, 1, 0.4, 0.5]]}}"#,
    )
    .unwrap();
    let csv = |tag: &str, workers: &str| {
        let out = dir.path().join(tag);
        let run = Command::new(env!("CARGO_BIN_EXE_lqteam"))
            .args(["gap-sweep", "--config", config.to_str().unwrap(), "--workers", workers, "--out", out.to_str().unwrap()])
            .output()
            .unwrap();
        assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
        std::fs::read(out.join("gap_sweep.csv")).unwrap()
    };
    let first = csv("first", "1");
    let again = csv("again", "1");
    let eight = csv("eight", "8");
    let t = start.elapsed();
    let ok = first == again && first == eight;
    report(11, "reproducible gap sweep", ok, t, format!("{} bytes; repeat identical: {}, 1 vs 8 workers identical: {}", first.len(), first == again, first == eight));
}
