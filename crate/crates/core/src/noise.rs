//! Isotropic log-concave noise laws on `R^n`.
//!
//! Every family has mean zero and identity covariance. Product families are
//! built from a standardized one-dimensional law; the ball is the only family
//! with dependent coordinates.

use std::f64::consts::{LN_2, PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

const SQRT_3: f64 = 1.732_050_807_568_877_2;
/// Laplace scale giving unit variance (variance is `2b²`).
const LAPLACE_SCALE: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    Gaussian,
    /// Coordinates `E − 1`, `E` standard exponential.
    ExpProduct,
    /// Coordinates Laplace with scale `1/√2`.
    LaplaceProduct,
    /// Coordinates uniform on `[−√3, √3]`.
    UniformCubeProduct,
    /// Uniform on the centered ball of radius `√(n + 2)`.
    UniformBall,
}

impl NoiseFamily {
    pub const ALL: [NoiseFamily; 5] = [
        NoiseFamily::Gaussian,
        NoiseFamily::ExpProduct,
        NoiseFamily::LaplaceProduct,
        NoiseFamily::UniformCubeProduct,
        NoiseFamily::UniformBall,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NoiseFamily::Gaussian => "gaussian",
            NoiseFamily::ExpProduct => "exp_product",
            NoiseFamily::LaplaceProduct => "laplace_product",
            NoiseFamily::UniformCubeProduct => "uniform_cube_product",
            NoiseFamily::UniformBall => "uniform_ball",
        }
    }
}

impl fmt::Display for NoiseFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NoiseFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown noise family `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub family: NoiseFamily,
    pub n: usize,
}

/// `log f(x) ≤ −a‖x‖ + b` for all `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEnvelope {
    pub a: f64,
    pub b: f64,
    pub valid: bool,
}

impl NoiseModel {
    pub fn new(family: NoiseFamily, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Dimension("noise dimension must be positive".into()));
        }
        Ok(Self { family, n })
    }

    fn ball_radius(&self) -> f64 {
        ((self.n + 2) as f64).sqrt()
    }

    fn ln_ball_volume(&self) -> f64 {
        let n = self.n as f64;
        0.5 * n * PI.ln() + n * self.ball_radius().ln() - ln_gamma(0.5 * n + 1.0)
    }

    /// Fill `out` (length `n`) with one draw.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.n);
        match self.family {
            NoiseFamily::Gaussian => out.iter_mut().for_each(|x| *x = rng.sample(StandardNormal)),
            NoiseFamily::ExpProduct => out.iter_mut().for_each(|x| *x = rng.sample::<f64, _>(Exp1) - 1.0),
            NoiseFamily::LaplaceProduct => out.iter_mut().for_each(|x| {
                let e: f64 = rng.sample(Exp1);
                *x = if rng.random::<bool>() { e } else { -e } * LAPLACE_SCALE;
            }),
            NoiseFamily::UniformCubeProduct => {
                out.iter_mut().for_each(|x| *x = rng.random_range(-SQRT_3..SQRT_3))
            }
            NoiseFamily::UniformBall => {
                let mut norm2 = 0.0;
                for x in out.iter_mut() {
                    *x = rng.sample(StandardNormal);
                    norm2 += *x * *x;
                }
                let u: f64 = rng.random();
                let radius = self.ball_radius() * u.powf(1.0 / self.n as f64);
                let scale = radius / norm2.sqrt();
                out.iter_mut().for_each(|x| *x *= scale);
            }
        }
    }

    /// `count × n` row-major matrix of i.i.d. draws.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; count * self.n];
        for row in out.chunks_exact_mut(self.n) {
            self.sample_into(rng, row);
        }
        out
    }

    /// Exact log-density; `−∞` off the support.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n {
            return Err(Error::Dimension(format!("point has length {}, expected {}", x.len(), self.n)));
        }
        let n = self.n as f64;
        Ok(match self.family {
            NoiseFamily::Gaussian => -0.5 * n * (2.0 * PI).ln() - 0.5 * x.iter().map(|v| v * v).sum::<f64>(),
            NoiseFamily::ExpProduct => {
                if x.iter().all(|&v| v >= -1.0) {
                    -x.iter().map(|v| v + 1.0).sum::<f64>()
                } else {
                    f64::NEG_INFINITY
                }
            }
            NoiseFamily::LaplaceProduct => {
                -n * (2.0 * LAPLACE_SCALE).ln() - x.iter().map(|v| v.abs()).sum::<f64>() / LAPLACE_SCALE
            }
            NoiseFamily::UniformCubeProduct => {
                if x.iter().all(|v| v.abs() <= SQRT_3) {
                    -n * (2.0 * SQRT_3).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            NoiseFamily::UniformBall => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                if r2 <= (self.n + 2) as f64 {
                    -self.ln_ball_volume()
                } else {
                    f64::NEG_INFINITY
                }
            }
        })
    }

    /// Constants `(a, b)` with `log f(x) ≤ −a‖x‖ + b` everywhere.
    pub fn tail_envelope(&self) -> TailEnvelope {
        let n = self.n as f64;
        let (a, b) = match self.family {
            // −r²/2 ≤ −r + 1/2
            NoiseFamily::Gaussian => (1.0, 0.5 - 0.5 * n * (2.0 * PI).ln()),
            // On the support Σxᵢ ≥ ‖x‖₁ − 2n, so −n − Σxᵢ ≤ n − ‖x‖.
            NoiseFamily::ExpProduct => (1.0, n),
            // ‖x‖ ≤ ‖x‖₁
            NoiseFamily::LaplaceProduct => (SQRT_2, -0.5 * n * LN_2),
            // Support radius √(3n).
            NoiseFamily::UniformCubeProduct => (1.0, (3.0 * n).sqrt() - n * (2.0 * SQRT_3).ln()),
            NoiseFamily::UniformBall => (1.0, self.ball_radius() - self.ln_ball_volume()),
        };
        TailEnvelope { a, b, valid: true }
    }
}
