use serde::{Deserialize, Serialize};

/// A Monte Carlo estimate: value, standard error, sample count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithError {
    pub value: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl EstimateWithError {
    pub fn exact(value: f64, samples: usize) -> Self {
        Self { value, stderr: 0.0, samples }
    }

    /// `|self - other|` measured in combined standard errors.
    pub fn z_against(&self, target: f64) -> f64 {
        let d = (self.value - target).abs();
        if self.stderr == 0.0 {
            if d == 0.0 { 0.0 } else { f64::INFINITY }
        } else {
            d / self.stderr
        }
    }

    pub fn combined_stderr(&self, other: &Self) -> f64 {
        self.stderr.hypot(other.stderr)
    }
}

/// Streaming mean/variance (Welford) with an order-fixed merge.
#[derive(Debug, Clone, Copy, Default)]
pub struct Accum {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Accum {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, o: &Accum) {
        if o.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *o;
            return;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        self.mean += d * o.n as f64 / n as f64;
        self.m2 += o.m2 + d * d * (self.n as f64 * o.n as f64) / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Standard error with the `n - 1` variance; zero for a single sample.
    pub fn estimate(&self) -> EstimateWithError {
        let stderr = if self.n > 1 {
            (self.m2.max(0.0) / (self.n - 1) as f64 / self.n as f64).sqrt()
        } else {
            0.0
        };
        EstimateWithError { value: self.mean, stderr, samples: self.n }
    }
}

pub fn merge_all<'a>(parts: impl IntoIterator<Item = &'a Accum>) -> Accum {
    let mut acc = Accum::default();
    for p in parts {
        acc.merge(p);
    }
    acc
}
