//! Closed-form evaluation of the explicit error bounds: Gaussian tail
//! weights, the finite-`n` gap bound, the two-sided sandwich on the optimal
//! cost, and the log-concave density envelopes.
//!
//! The universal constants are unknown; every bound carries the constants it
//! used and an `illustrative` flag when `C` was not supplied by the caller.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::error::{Error, Result};
use crate::noise::TailEnvelope;
use crate::rng::{self, chunked};
use crate::stats::{merge_all, Accum, EstimateWithError};
use crate::team::{gaussian_cost, Policy, TeamSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    #[serde(rename = "C")]
    pub c: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    /// Set when `C` is the placeholder value rather than a known constant.
    pub illustrative: bool,
}

impl Default for BoundConstants {
    fn default() -> Self {
        Self { c: 1.0, c1: 0.01, c2: 0.1, c3: 0.01, c4: 0.005, illustrative: true }
    }
}

impl BoundConstants {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("C", self.c), ("c1", self.c1), ("c2", self.c2), ("c3", self.c3), ("c4", self.c4)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("constants.{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }

    /// `C / n^{c3}`, the rate in the density-ratio estimate.
    pub fn rate(&self, n: usize) -> f64 {
        self.c * (n as f64).powf(-self.c3)
    }
}

/// `τ_{ℓ,r}(t) = P(‖Z‖ > √(3/4)·t)` for `Z ~ N(0, I_{ℓ−r})`, i.e. the upper
/// regularized incomplete gamma `Q((ℓ−r)/2, 3t²/8)`.
pub fn tail_weight(l: usize, r: usize, t: f64) -> Result<f64> {
    if r > l {
        return Err(Error::Dimension(format!("rank r = {r} exceeds l = {l}")));
    }
    if !(t >= 0.0) {
        return Err(Error::Config(format!("tail radius must be nonnegative, got {t}")));
    }
    if l == r {
        return Ok(0.0);
    }
    let x = 0.375 * t * t;
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    Ok(gamma_ur(0.5 * (l - r) as f64, x).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapBoundRecord {
    pub n: usize,
    pub leading_term: f64,
    pub truncation_term: EstimateWithError,
    pub probability: f64,
    pub valid: bool,
    pub tau: f64,
    pub rank: usize,
    pub sigma_min: f64,
    /// Per-block radius `σ_min·n^{c4} / (2√(m+1))`.
    pub radius: f64,
    pub gaussian_cost: f64,
    pub constants: BoundConstants,
}

impl GapBoundRecord {
    pub fn total(&self) -> f64 {
        self.leading_term + self.truncation_term.value
    }
}

/// Finite-`n` bound on `J(γ̄) − J(γ_G)` for a policy `γ̄`.
///
/// The leading term is `(C/n^{c3} + τ)/(1 − C/n³ − τ)·J_G` with
/// `τ = τ_{ℓ,r}(n^{c4})`. The truncation term is the Monte Carlo mass of the
/// policy's cost outside the ball-like set where every block
/// `‖Wᵢζ‖`, `i = 0..m`, stays within the per-block radius, with the policy
/// silenced on blocks beyond the radius. The record is flagged invalid when
/// the denominator is not positive.
pub fn explicit_gap_bound<P: Policy + ?Sized, R: Rng + ?Sized>(
    spec: &TeamSpec,
    n: usize,
    consts: &BoundConstants,
    policy: &P,
    mc_samples: usize,
    rng: &mut R,
) -> Result<GapBoundRecord> {
    consts.validate()?;
    if n == 0 {
        return Err(Error::Dimension("n must be positive".into()));
    }
    if mc_samples == 0 {
        return Err(Error::TooFewSamples { got: 0, min: 1 });
    }
    let jg = gaussian_cost(spec)?;
    let ell = spec.ell();
    let m = spec.m();
    let (rank, sigma_min) = spec.w_rank();
    let nf = n as f64;
    let t = nf.powf(consts.c4);
    let tau = tail_weight(ell, rank, t)?;
    let denom = 1.0 - consts.c / nf.powi(3) - tau;
    let leading_term = (consts.rate(n) + tau) / denom * jg;
    let radius = sigma_min * t / (2.0 * ((m + 1) as f64).sqrt());

    let master = rng::fork(rng);
    let parts = chunked(mc_samples, master, |rng, _, len| {
        let mut acc = Accum::default();
        let mut zeta = vec![0.0; ell];
        let mut z = vec![0.0; ell];
        let mut u = vec![0.0; m];
        for _ in 0..len {
            for v in zeta.iter_mut() {
                *v = rng.sample(rand_distr::StandardNormal);
            }
            spec.observe_into(&zeta, &mut z);
            let s_norm = z[..m].iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut outside = s_norm > radius;
            for (i, ui) in u.iter_mut().enumerate() {
                let y = &z[spec.obs_range(i)];
                let far = y.iter().map(|v| v * v).sum::<f64>().sqrt() > radius;
                outside |= far;
                *ui = if far { 0.0 } else { policy.act(i, y) };
            }
            acc.push(if outside { spec.cost_z(&u, &z) } else { 0.0 });
        }
        acc
    });
    let truncation_term = merge_all(&parts).estimate();

    Ok(GapBoundRecord {
        n,
        leading_term,
        truncation_term,
        probability: 1.0 - consts.c * (-nf.powf(consts.c2)).exp(),
        valid: denom > 0.0,
        tau,
        rank,
        sigma_min,
        radius,
        gaussian_cost: jg,
        constants: *consts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FundamentalBounds {
    pub upper: f64,
    /// `v − ε/(1−ε)·J_G` with `ε = C/n^{c3}` when valid; the trivial bound
    /// 0 otherwise.
    pub lower: f64,
    pub valid: bool,
    pub eps: f64,
}

/// Two-sided bound `v − ε/(1−ε)·J_G ≤ J* ≤ J_G` on the optimal cost, with
/// `v` the truncated Gaussian value and `ε = C/n^{c3}`; valid when `ε < 1`.
pub fn fundamental_bounds(jg: f64, v_t: &EstimateWithError, n: usize, consts: &BoundConstants) -> Result<FundamentalBounds> {
    consts.validate()?;
    if n == 0 {
        return Err(Error::Dimension("n must be positive".into()));
    }
    if !(jg >= 0.0) {
        return Err(Error::Config(format!("Gaussian cost must be nonnegative, got {jg}")));
    }
    let eps = consts.rate(n);
    let valid = eps < 1.0;
    let lower = if valid { v_t.value - eps / (1.0 - eps) * jg } else { 0.0 };
    Ok(FundamentalBounds { upper: jg, lower, valid, eps })
}

/// Largest `bₙ` such that a density on `R^n` below `exp(−a√2‖x‖ + bₙ)` has
/// every `l`-dimensional projection below `exp(−a‖x‖ + b)`:
/// `b + k·ln(a/√π) + lnΓ(k/2) − ln 2 − lnΓ(k)`, `k = n − l`, all in log space.
pub fn envelope_budget(a: f64, b: f64, n: usize, l: usize) -> Result<f64> {
    if n <= l {
        return Err(Error::Dimension(format!("need n > l, got n = {n}, l = {l}")));
    }
    if !(a > 0.0 && a.is_finite()) || !b.is_finite() {
        return Err(Error::Config(format!("envelope needs a > 0 and finite b, got a = {a}, b = {b}")));
    }
    let k = (n - l) as f64;
    Ok(b + k * (a.ln() - 0.5 * PI.ln()) + ln_gamma(0.5 * k) - std::f64::consts::LN_2 - ln_gamma(k))
}

/// Envelope for every `l`-dimensional projection of a density on `R^n`
/// bounded by `exp(−a_n‖x‖ + b_n)`.
///
/// Propagation needs the form `exp(−a√2‖x‖ + b_n)`, so `a = a_n/√2`; the
/// returned `b` is the smallest value whose [`envelope_budget`] admits `b_n`.
pub fn projected_envelope(envelope: &TailEnvelope, n: usize, l: usize) -> Result<TailEnvelope> {
    let a = envelope.a / std::f64::consts::SQRT_2;
    let b = envelope.b - envelope_budget(a, 0.0, n, l)?;
    Ok(TailEnvelope { a, b, valid: envelope.valid })
}

/// Constants `(a′, b′)` with both `exp(−a‖x‖ + b)` and `φ_l(x)` below
/// `exp(−a′‖x‖ + b′)` for `‖x‖ > 1`. Uses `−r²/2 ≤ −a′r + a′ − ½` for
/// `r ≥ 1`, `a′ ≤ 1`.
pub fn uniform_tail_constants(projected: &TailEnvelope, l: usize) -> (f64, f64) {
    let a_prime = projected.a.min(1.0);
    let gauss = a_prime - 0.5 - 0.5 * l as f64 * (2.0 * PI).ln();
    (a_prime, projected.b.max(gauss))
}

/// `max{K′/n^{c3}, exp(−a′n^{c4} + b′)}` with `K′ = C/(2π)^{l/2}`.
pub fn uniform_density_bound(consts: &BoundConstants, l: usize, n: usize, a_prime: f64, b_prime: f64) -> Result<f64> {
    consts.validate()?;
    if l == 0 || n == 0 {
        return Err(Error::Dimension("l and n must be positive".into()));
    }
    let k = consts.c * (2.0 * PI).powf(-0.5 * l as f64);
    let nf = n as f64;
    Ok((k * nf.powf(-consts.c3)).max((-a_prime * nf.powf(consts.c4) + b_prime).exp()))
}

/// Whether `n ≥ l^{1/c1}`, the range where [`uniform_density_bound`] applies.
pub fn uniform_bound_applies(consts: &BoundConstants, l: usize, n: usize) -> bool {
    (n as f64).ln() >= (l as f64).ln() / consts.c1
}
