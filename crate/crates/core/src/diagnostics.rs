//! Empirical convergence checks: how close projected noise is to Gaussian,
//! how the optimality gap of linear policies shrinks with the noise
//! dimension, and how fast the cost mass in the tails decays.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::bounds::{fundamental_bounds, BoundConstants, FundamentalBounds};
use crate::error::{Error, Result};
use crate::noise::{NoiseFamily, NoiseModel};
use crate::pbp::{pbp_fit, sample_cost, truncated_gaussian_value, PbpConfig};
use crate::rng::{self, chunked, mix, stream};
use crate::stats::{merge_all, Accum, EstimateWithError};
use crate::stiefel::sample_stiefel;
use crate::team::{gaussian_cost, solve_linear, Policy, ProblemInstance, TeamSpec};

/// Smallest sample count accepted by [`density_report`].
pub const MIN_DENSITY_SAMPLES: usize = 1000;
/// Half-width of the histogram box used for total variation.
const TV_BOX: f64 = 4.0;
/// Radius of the region where the density ratio is checked.
const RATIO_RADIUS: f64 = 2.0;
/// Ratio checks are skipped where the Gaussian density is below this.
const RATIO_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub n: usize,
    pub l: usize,
    /// `sup |f̂/φ_l − 1|` over the check grid.
    pub grid_sup_ratio_err: f64,
    pub tv_estimate: f64,
    pub samples: usize,
    pub bandwidth: f64,
    pub grid_points: usize,
    pub tv_bins_per_axis: usize,
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// Regular grid over `[−2, 2]^l`, restricted to `‖x‖ ≤ 2` and `φ_l ≥ 1e-4`.
/// Spacing is 0.25 up to `l = 2` and coarsens so the grid stays small.
fn ratio_grid(l: usize) -> Vec<f64> {
    let mut per_axis = 17usize;
    while per_axis > 3 && (per_axis as f64).powi(l as i32) > 4096.0 {
        per_axis -= 2;
    }
    let step = 2.0 * RATIO_RADIUS / (per_axis - 1) as f64;
    let total = per_axis.pow(l as u32);
    let mut out = Vec::new();
    let mut x = vec![0.0; l];
    for mut idx in 0..total {
        for v in x.iter_mut() {
            *v = -RATIO_RADIUS + (idx % per_axis) as f64 * step;
            idx /= per_axis;
        }
        let r2: f64 = x.iter().map(|v| v * v).sum();
        if r2.sqrt() <= RATIO_RADIUS + 1e-12 && gaussian_density(&x) >= RATIO_FLOOR {
            out.extend_from_slice(&x);
        }
    }
    out
}

fn gaussian_density(x: &[f64]) -> f64 {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    (2.0 * PI).powf(-0.5 * x.len() as f64) * (-0.5 * r2).exp()
}

/// Product Gaussian-kernel density estimate at `point`. `sorted` holds the
/// samples ordered by their first coordinate so only a window is scanned.
fn kde_at(sorted: &[f64], l: usize, h: f64, point: &[f64]) -> f64 {
    let reach = 8.0 * h;
    let count = sorted.len() / l;
    let lo = partition(sorted, l, point[0] - reach);
    let hi = partition(sorted, l, point[0] + reach);
    let cut = reach * reach;
    let inv = 1.0 / (2.0 * h * h);
    let mut total = 0.0;
    for k in lo..hi {
        let x = &sorted[k * l..(k + 1) * l];
        let d2: f64 = x.iter().zip(point).map(|(a, b)| (a - b) * (a - b)).sum();
        if d2 < cut {
            total += (-d2 * inv).exp();
        }
    }
    total / (count as f64 * (2.0 * PI * h * h).powf(0.5 * l as f64))
}

fn partition(sorted: &[f64], l: usize, x0: f64) -> usize {
    let (mut lo, mut hi) = (0, sorted.len() / l);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if sorted[mid * l] < x0 {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

fn tv_bins(l: usize) -> usize {
    let mut b = 32usize;
    while b > 2 && (b as f64).powi(l as i32) > 1024.0 {
        b -= 1;
    }
    b
}

/// Histogram total variation between the samples and `N(0, I_l)`: per-axis
/// bins on `[−4, 4]` plus one cell for everything outside the box.
fn histogram_tv(points: &[f64], l: usize, bins: usize) -> f64 {
    let count = points.len() / l;
    let width = 2.0 * TV_BOX / bins as f64;
    let cells = bins.pow(l as u32);
    let mut hist = vec![0u64; cells];
    let mut outside = 0u64;
    'samples: for x in points.chunks_exact(l) {
        let mut idx = 0;
        for &v in x {
            if !(-TV_BOX..TV_BOX).contains(&v) {
                outside += 1;
                continue 'samples;
            }
            idx = idx * bins + (((v + TV_BOX) / width) as usize).min(bins - 1);
        }
        hist[idx] += 1;
    }
    let axis: Vec<f64> = (0..bins)
        .map(|b| {
            let a = -TV_BOX + b as f64 * width;
            std_normal_cdf(a + width) - std_normal_cdf(a)
        })
        .collect();
    let mut inside_prob = 0.0;
    let mut tv = 0.0;
    for (c, &h) in hist.iter().enumerate() {
        let mut p = 1.0;
        let mut rest = c;
        for _ in 0..l {
            p *= axis[rest % bins];
            rest /= bins;
        }
        inside_prob += p;
        tv += (h as f64 / count as f64 - p).abs();
    }
    tv += (outside as f64 / count as f64 - (1.0 - inside_prob)).abs();
    (0.5 * tv).clamp(0.0, 1.0)
}

/// Compare the law of `Rᵀξ` (fresh Haar `R`) with `N(0, I_l)`: a kernel
/// density ratio on a grid near the origin and a histogram total variation.
pub fn density_report<R: Rng + ?Sized>(noise: &NoiseModel, l: usize, samples: usize, rng: &mut R) -> Result<DensityReport> {
    if samples < MIN_DENSITY_SAMPLES {
        return Err(Error::TooFewSamples { got: samples, min: MIN_DENSITY_SAMPLES });
    }
    let n = noise.n;
    let frame = sample_stiefel(n, l, rng)?;
    let rt = frame.transpose_row_major();
    let master = rng::fork(rng);
    let parts = chunked(samples, master, |rng, _, len| {
        let mut xi = vec![0.0; n];
        let mut out = vec![0.0; len * l];
        for k in 0..len {
            noise.sample_into(rng, &mut xi);
            for j in 0..l {
                out[k * l + j] = rt[j * n..(j + 1) * n].iter().zip(&xi).map(|(a, b)| a * b).sum();
            }
        }
        out
    });
    let points = parts.concat();

    let mut var = Accum::default();
    for &v in &points {
        var.push(v);
    }
    let est = var.estimate();
    let sd = est.stderr * (est.samples as f64).sqrt();
    let bandwidth = sd * (samples as f64).powf(-1.0 / (l as f64 + 4.0));

    let mut order: Vec<usize> = (0..samples).collect();
    order.sort_by(|&a, &b| points[a * l].total_cmp(&points[b * l]));
    let sorted: Vec<f64> = order.iter().flat_map(|&k| points[k * l..(k + 1) * l].iter().copied()).collect();

    let grid = ratio_grid(l);
    let grid_sup_ratio_err = grid
        .par_chunks(l)
        .map(|x| (kde_at(&sorted, l, bandwidth, x) / gaussian_density(x) - 1.0).abs())
        .reduce(|| 0.0, f64::max);

    let bins = tv_bins(l);
    Ok(DensityReport {
        n,
        l,
        grid_sup_ratio_err,
        tv_estimate: histogram_tv(&points, l, bins),
        samples,
        bandwidth,
        grid_points: grid.len() / l,
        tv_bins_per_axis: bins,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSweepRow {
    pub n: usize,
    /// Seed of this row's substream.
    pub seed: u64,
    /// Both costs are evaluated on the PBP fitting sample.
    pub j_linear: EstimateWithError,
    pub j_pbp: Option<EstimateWithError>,
    /// PBP policy re-evaluated on an independent sample.
    pub j_pbp_holdout: Option<EstimateWithError>,
    /// `J_linear − J_pbp`.
    pub gap: Option<f64>,
    /// Standard error of the paired per-sample difference.
    pub gap_se: Option<f64>,
    pub sweeps: Option<usize>,
    /// Truncated Gaussian value at `t = n^{c4}` and the bounds built on it;
    /// `None` when that PBP run failed.
    pub v_t: Option<EstimateWithError>,
    pub bounds: Option<FundamentalBounds>,
    /// `None` when the row succeeded, else the first PBP error.
    pub error: Option<String>,
}

impl GapSweepRow {
    /// `√(se_linear² + se_pbp²)`.
    pub fn combined_stderr(&self) -> Option<f64> {
        self.j_pbp.as_ref().map(|p| self.j_linear.combined_stderr(p))
    }
}

/// Optimality gap between the best linear policy and PBP for each `n`.
///
/// Row `k` draws its own Haar frame and samples from the substream
/// `mix(master, mix(n, k))`, so rows are independent of each other, of the
/// thread count, and reproducible from the master seed alone. A PBP failure
/// is recorded in the row and the sweep continues.
pub fn gap_sweep<R: Rng + ?Sized>(
    spec: &TeamSpec,
    family: NoiseFamily,
    n_list: &[usize],
    cfg: &PbpConfig,
    consts: &BoundConstants,
    rng: &mut R,
) -> Result<Vec<GapSweepRow>> {
    cfg.validate()?;
    consts.validate()?;
    if spec.m() > 3 || spec.obs_dims().iter().any(|&d| d > 2) {
        return Err(Error::Dimension("gap sweep needs m ≤ 3 and observation sizes ≤ 2".into()));
    }
    if n_list.iter().any(|&n| n < spec.ell()) {
        return Err(Error::Dimension(format!("every n must be at least ℓ = {}", spec.ell())));
    }
    let linear = solve_linear(spec)?;
    let jg = gaussian_cost(spec)?;
    let master = rng::fork(rng);
    n_list
        .par_iter()
        .enumerate()
        .map(|(k, &n)| {
            let seed = mix(master, mix(n as u64, k as u64));
            gap_row(spec, family, n, seed, cfg, consts, &linear, jg)
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn gap_row(
    spec: &TeamSpec,
    family: NoiseFamily,
    n: usize,
    seed: u64,
    cfg: &PbpConfig,
    consts: &BoundConstants,
    linear: &crate::team::LinearPolicy,
    jg: f64,
) -> Result<GapSweepRow> {
    let mut rng = stream(seed);
    let noise = NoiseModel::new(family, n)?;
    let instance = ProblemInstance::sample(spec, n, &mut rng)?;
    let z = instance.draw_observations(&noise, cfg.samples, &mut rng)?;
    let holdout = instance.draw_observations(&noise, cfg.samples, &mut rng)?;
    let t = (n as f64).powf(consts.c4);
    let mut error = None;
    let v_t = match truncated_gaussian_value(spec, t, cfg, &mut rng) {
        Ok(v) => Some(v),
        Err(e) if e.is_numeric() => {
            error = Some(format!("v(t): {e}"));
            None
        }
        Err(e) => return Err(e),
    };
    let bounds = v_t.map(|v| fundamental_bounds(jg, &v, n, consts)).transpose()?;
    let j_linear = sample_cost(spec, linear, &z, None);

    let mut row = GapSweepRow {
        n,
        seed,
        j_linear,
        j_pbp: None,
        j_pbp_holdout: None,
        gap: None,
        gap_se: None,
        sweeps: None,
        v_t,
        bounds,
        error,
    };
    match pbp_fit(spec, &z, None, cfg, linear) {
        Ok(sol) => {
            row.gap_se = Some(paired_stderr(spec, linear, &sol.policy, &z));
            row.gap = Some(row.j_linear.value - sol.cost.value);
            row.j_pbp_holdout = Some(sample_cost(spec, &sol.policy, &holdout, None));
            row.j_pbp = Some(sol.cost);
            row.sweeps = Some(sol.sweeps);
        }
        Err(e) if e.is_numeric() => {
            row.error.get_or_insert_with(|| e.to_string());
        }
        Err(e) => return Err(e),
    }
    Ok(row)
}

fn paired_stderr<A: Policy + ?Sized, B: Policy + ?Sized>(spec: &TeamSpec, a: &A, b: &B, z: &[f64]) -> f64 {
    let ell = spec.ell();
    let m = spec.m();
    let mut ua = vec![0.0; m];
    let mut ub = vec![0.0; m];
    let mut acc = Accum::default();
    for zk in z.chunks_exact(ell) {
        a.actions(spec, zk, &mut ua);
        b.actions(spec, zk, &mut ub);
        acc.push(spec.cost_z(&ua, zk) - spec.cost_z(&ub, zk));
    }
    acc.estimate().stderr
}

/// Cost mass beyond radius `k` in the projected coordinates:
/// `T(n, k) = E[1{‖Rᵀξ‖ > k}·L(γ(Hξ), ξ)]` for every `k` in `k_list`, all
/// from one shared sample.
pub fn tail_mass<P: Policy + ?Sized, R: Rng + ?Sized>(
    instance: &ProblemInstance,
    noise: &NoiseModel,
    policy: &P,
    k_list: &[f64],
    samples: usize,
    rng: &mut R,
) -> Result<Vec<EstimateWithError>> {
    if samples == 0 {
        return Err(Error::TooFewSamples { got: 0, min: 1 });
    }
    if let Some(k) = k_list.iter().find(|k| !(**k >= 0.0)) {
        return Err(Error::Config(format!("tail radius must be nonnegative, got {k}")));
    }
    let spec = instance.spec();
    let master = rng::fork(rng);
    let parts = instance.map_chunks(noise, samples, master, |chunk| {
        let mut accs = vec![Accum::default(); k_list.len()];
        let mut u = vec![0.0; spec.m()];
        while let Some(s) = chunk.next_sample() {
            policy.actions(spec, s.z, &mut u);
            let cost = spec.cost_z(&u, s.z);
            let r = s.zhat.iter().map(|v| v * v).sum::<f64>().sqrt();
            for (acc, &k) in accs.iter_mut().zip(k_list) {
                acc.push(if r > k { cost } else { 0.0 });
            }
        }
        accs
    })?;
    Ok((0..k_list.len()).map(|j| merge_all(parts.iter().map(|p| &p[j])).estimate()).collect())
}
