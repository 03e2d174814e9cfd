//! Person-by-person (PBP) approximation of the unrestricted optimal team
//! policy, the truncated Gaussian value `v(t)`, and a direct solver for the
//! optimal piecewise-constant policy used as an independent check.
//!
//! Each player's observation space is cut into equal-probability cells from
//! the empirical quantiles of a fixed sample set. A sweep visits the players
//! in order and replaces player `i`'s rule by the exact minimizer of the
//! sample cost with the other players frozen. On a cell that is a weighted
//! least-squares fit of the stationarity target
//!
//! ```text
//! tᵢ = −(Σ_{j≠i} Q_ij uⱼ + sᵢ) / Q_ii
//! ```
//!
//! so a sweep is block-coordinate descent on a convex quadratic and the
//! sample cost never increases (for damping 1).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::rng::{self, chunked};
use crate::stats::{Accum, EstimateWithError};
use crate::team::{gaussian_cost, solve_linear, LinearPolicy, Policy, ProblemInstance, TeamSpec};

/// What a policy does inside one cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellForm {
    /// One action per cell.
    Constant,
    /// Action plus a slope in the observation, per cell. Contains both the
    /// piecewise-constant and the linear policies.
    Affine,
}

impl CellForm {
    pub fn name(self) -> &'static str {
        match self {
            CellForm::Constant => "constant",
            CellForm::Affine => "affine",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PbpConfig {
    /// Cells for one-dimensional observations.
    pub bins: usize,
    /// Cells per axis for two-dimensional observations.
    pub bins_2d: usize,
    pub samples: usize,
    pub max_iters: usize,
    pub damping: f64,
    /// Stop once the largest per-sample action change in a sweep is below this.
    pub tol: f64,
    pub form: CellForm,
}

impl Default for PbpConfig {
    fn default() -> Self {
        Self { bins: 64, bins_2d: 24, samples: 200_000, max_iters: 200, damping: 1.0, tol: 1e-4, form: CellForm::Affine }
    }
}

impl PbpConfig {
    /// Defaults with `tol = 1e-4·(1 + J_G)`.
    pub fn for_spec(spec: &TeamSpec) -> Result<Self> {
        Ok(Self { tol: 1e-4 * (1.0 + gaussian_cost(spec)?), ..Self::default() })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("pbp.{what}")));
        if self.bins == 0 || self.bins_2d == 0 {
            return bad("bins must be positive");
        }
        if self.samples == 0 {
            return bad("samples must be positive");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be positive");
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad("damping must lie in (0, 1]");
        }
        if !(self.tol > 0.0) {
            return bad("tol must be positive");
        }
        Ok(())
    }
}

/// One player's gridded rule.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerTable {
    /// Interior edges per axis, strictly increasing; `edges[a].len() + 1`
    /// cells along axis `a`, the outer two unbounded.
    edges: Vec<Vec<f64>>,
    /// Cell anchor points, `cells × dims`.
    centers: Vec<f64>,
    /// Action at each anchor.
    values: Vec<f64>,
    /// `cells × dims`; all zero for [`CellForm::Constant`].
    slopes: Vec<f64>,
}

impl PlayerTable {
    pub fn dims(&self) -> usize {
        self.edges.len()
    }

    pub fn cells(&self) -> usize {
        self.values.len()
    }

    pub fn edges(&self, axis: usize) -> &[f64] {
        &self.edges[axis]
    }

    pub fn center(&self, cell: usize) -> &[f64] {
        let d = self.dims();
        &self.centers[cell * d..(cell + 1) * d]
    }

    pub fn value(&self, cell: usize) -> f64 {
        self.values[cell]
    }

    pub fn slope(&self, cell: usize) -> &[f64] {
        let d = self.dims();
        &self.slopes[cell * d..(cell + 1) * d]
    }

    fn axis_cells(&self, axis: usize) -> usize {
        self.edges[axis].len() + 1
    }

    /// Per-axis cell index of `y` (out-of-range values land in the end cells).
    fn axis_index(&self, axis: usize, y: f64) -> usize {
        self.edges[axis].partition_point(|e| *e <= y)
    }

    pub fn locate(&self, y: &[f64]) -> usize {
        let mut idx = 0;
        for (a, &v) in y.iter().enumerate() {
            idx = idx * self.axis_cells(a) + self.axis_index(a, v);
        }
        idx
    }

    /// Per-axis indices of a flat cell index.
    pub fn unflatten(&self, mut cell: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims()];
        for a in (0..self.dims()).rev() {
            out[a] = cell % self.axis_cells(a);
            cell /= self.axis_cells(a);
        }
        out
    }

    fn eval_in(&self, cell: usize, y: &[f64]) -> f64 {
        let d = self.dims();
        let c = &self.centers[cell * d..(cell + 1) * d];
        let s = &self.slopes[cell * d..(cell + 1) * d];
        self.values[cell] + (0..d).map(|a| s[a] * (y[a] - c[a])).sum::<f64>()
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        self.eval_in(self.locate(y), y)
    }

    /// Cells whose per-axis indices avoid the outer `(1 − mass^{1/d})/2`
    /// fraction on each side, i.e. the central `mass` of the grid.
    pub fn central_cells(&self, mass: f64) -> Vec<usize> {
        let d = self.dims() as f64;
        let trim = (1.0 - mass.powf(1.0 / d)) / 2.0;
        (0..self.cells())
            .filter(|&c| {
                self.unflatten(c).iter().enumerate().all(|(a, &k)| {
                    let b = self.axis_cells(a) as f64;
                    let lo = (trim * b).floor() as usize;
                    k >= lo && k + lo < self.axis_cells(a)
                })
            })
            .collect()
    }
}

/// Gridded per-player policies produced by [`pbp_solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedPolicy {
    form: CellForm,
    players: Vec<PlayerTable>,
}

impl TabulatedPolicy {
    pub fn form(&self) -> CellForm {
        self.form
    }

    pub fn players(&self) -> &[PlayerTable] {
        &self.players
    }

    pub fn player(&self, i: usize) -> &PlayerTable {
        &self.players[i]
    }

    /// Text form: a header, then per player its edges and one line per cell
    /// (`center… value slope…`), decimals with 17 significant digits.
    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let num = |x: f64| format!("{x:.16e}");
        writeln!(out, "lqteam-tabulated-policy v1").unwrap();
        writeln!(out, "form {}", self.form.name()).unwrap();
        writeln!(out, "players {}", self.players.len()).unwrap();
        for (i, p) in self.players.iter().enumerate() {
            writeln!(out, "player {i} dims {} cells {}", p.dims(), p.cells()).unwrap();
            for (a, e) in p.edges.iter().enumerate() {
                let nums: Vec<String> = e.iter().map(|&x| num(x)).collect();
                writeln!(out, "edges {a} {} {}", e.len(), nums.join(" ")).unwrap();
            }
            for c in 0..p.cells() {
                let mut nums: Vec<String> = p.center(c).iter().map(|&x| num(x)).collect();
                nums.push(num(p.values[c]));
                nums.extend(p.slope(c).iter().map(|&x| num(x)));
                writeln!(out, "cell {}", nums.join(" ")).unwrap();
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
        let mut next = |what: &str| lines.next().ok_or_else(|| Error::Parse { line: 0, message: format!("unexpected end of file, expected {what}") });
        let perr = |line: usize, message: String| Error::Parse { line, message };

        let (ln, head) = next("header")?;
        if head != "lqteam-tabulated-policy v1" {
            return Err(perr(ln, format!("bad header `{head}`")));
        }
        let (ln, form_line) = next("form")?;
        let form = match form_line.strip_prefix("form ") {
            Some("constant") => CellForm::Constant,
            Some("affine") => CellForm::Affine,
            _ => return Err(perr(ln, format!("bad form line `{form_line}`"))),
        };
        let (ln, pl) = next("players")?;
        let count: usize = pl
            .strip_prefix("players ")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| perr(ln, format!("bad players line `{pl}`")))?;
        let mut players = Vec::with_capacity(count);
        for i in 0..count {
            let (ln, h) = next("player header")?;
            let toks: Vec<&str> = h.split_whitespace().collect();
            let parsed = match toks.as_slice() {
                ["player", idx, "dims", d, "cells", c] => {
                    (idx.parse::<usize>().ok(), d.parse::<usize>().ok(), c.parse::<usize>().ok())
                }
                _ => (None, None, None),
            };
            let (Some(idx), Some(dims), Some(cells)) = parsed else {
                return Err(perr(ln, format!("bad player header `{h}`")));
            };
            if idx != i || dims == 0 {
                return Err(perr(ln, format!("bad player header `{h}`")));
            }
            let mut edges = Vec::with_capacity(dims);
            for a in 0..dims {
                let (ln, e) = next("edges")?;
                let toks: Vec<&str> = e.split_whitespace().collect();
                if toks.len() < 3 || toks[0] != "edges" || toks[1].parse::<usize>().ok() != Some(a) {
                    return Err(perr(ln, format!("bad edges line for axis {a}")));
                }
                let len: usize = toks[2].parse().map_err(|_| perr(ln, "bad edge count".into()))?;
                let vals = parse_nums(&toks[3..], ln)?;
                if vals.len() != len {
                    return Err(perr(ln, format!("expected {len} edges, found {}", vals.len())));
                }
                if vals.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(perr(ln, "edges are not strictly increasing".into()));
                }
                edges.push(vals);
            }
            let expect: usize = edges.iter().map(|e| e.len() + 1).product();
            if expect != cells {
                return Err(perr(ln, format!("edges imply {expect} cells, header says {cells}")));
            }
            let mut centers = Vec::with_capacity(cells * dims);
            let mut values = Vec::with_capacity(cells);
            let mut slopes = Vec::with_capacity(cells * dims);
            for _ in 0..cells {
                let (ln, c) = next("cell")?;
                let toks: Vec<&str> = c.split_whitespace().collect();
                if toks.first() != Some(&"cell") {
                    return Err(perr(ln, "expected a cell line".into()));
                }
                let vals = parse_nums(&toks[1..], ln)?;
                if vals.len() != 2 * dims + 1 {
                    return Err(perr(ln, format!("cell line has {} numbers, expected {}", vals.len(), 2 * dims + 1)));
                }
                centers.extend_from_slice(&vals[..dims]);
                values.push(vals[dims]);
                slopes.extend_from_slice(&vals[dims + 1..]);
            }
            players.push(PlayerTable { edges, centers, values, slopes });
        }
        Ok(Self { form, players })
    }
}

fn parse_nums(toks: &[&str], line: usize) -> Result<Vec<f64>> {
    toks.iter()
        .map(|t| t.parse::<f64>().map_err(|_| Error::Parse { line, message: format!("bad number `{t}`") }))
        .collect()
}

impl Policy for TabulatedPolicy {
    fn act(&self, player: usize, obs: &[f64]) -> f64 {
        self.players[player].eval(obs)
    }
}

/// Result of a PBP run.
#[derive(Debug, Clone)]
pub struct PbpSolution {
    pub policy: TabulatedPolicy,
    /// Sample-set cost of the final policy (weighted when weights were given).
    pub cost: EstimateWithError,
    /// Sample-set cost at the linear starting point, then after each sweep.
    pub history: Vec<f64>,
    pub sweeps: usize,
    pub last_change: f64,
    pub converged: bool,
}

/// Equal-probability interior edges from the empirical quantiles of `values`.
/// Duplicates are dropped so the edges stay strictly increasing.
pub fn quantile_edges(values: &[f64], bins: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut edges: Vec<f64> = Vec::with_capacity(bins.saturating_sub(1));
    if n < 2 {
        return edges;
    }
    for k in 1..bins {
        let pos = (k * n / bins).clamp(1, n - 1);
        let e = 0.5 * (sorted[pos - 1] + sorted[pos]);
        if edges.last().is_none_or(|&last| e > last) {
            edges.push(e);
        }
    }
    edges
}

fn check_pbp_dims(spec: &TeamSpec) -> Result<()> {
    if let Some(d) = spec.obs_dims().iter().find(|&&d| d > 2) {
        return Err(Error::Dimension(format!("grid policies need observation sizes ≤ 2, found {d}")));
    }
    Ok(())
}

/// Build the grid for every player from an observation set `z` (`N × ℓ`).
fn build_tables(spec: &TeamSpec, z: &[f64], cfg: &PbpConfig) -> Vec<PlayerTable> {
    let ell = spec.ell();
    let n = z.len() / ell;
    (0..spec.m())
        .map(|i| {
            let range = spec.obs_range(i);
            let dims = range.len();
            let bins = if dims == 1 { cfg.bins } else { cfg.bins_2d };
            let edges: Vec<Vec<f64>> = (0..dims)
                .map(|a| {
                    let col: Vec<f64> = (0..n).map(|k| z[k * ell + range.start + a]).collect();
                    quantile_edges(&col, bins)
                })
                .collect();
            let cells = edges.iter().map(|e| e.len() + 1).product();
            PlayerTable { edges, centers: vec![0.0; cells * dims], values: vec![0.0; cells], slopes: vec![0.0; cells * dims] }
        })
        .collect()
}

/// Cell index of every sample for every player, and per-cell centroids.
fn assign_cells(spec: &TeamSpec, z: &[f64], tables: &mut [PlayerTable]) -> Vec<Vec<u32>> {
    let ell = spec.ell();
    let n = z.len() / ell;
    tables
        .iter_mut()
        .enumerate()
        .map(|(i, t)| {
            let range = spec.obs_range(i);
            let d = range.len();
            let mut counts = vec![0usize; t.cells()];
            let mut sums = vec![0.0; t.cells() * d];
            let idx: Vec<u32> = (0..n)
                .map(|k| {
                    let y = &z[k * ell + range.start..k * ell + range.end];
                    let c = t.locate(y);
                    counts[c] += 1;
                    for a in 0..d {
                        sums[c * d + a] += y[a];
                    }
                    c as u32
                })
                .collect();
            for c in 0..t.cells() {
                let axes = t.unflatten(c);
                for a in 0..d {
                    t.centers[c * d + a] = if counts[c] > 0 {
                        sums[c * d + a] / counts[c] as f64
                    } else {
                        // empty cell: midpoint of its bounds, or the edge for end cells
                        let e = &t.edges[a];
                        let k = axes[a];
                        match (k.checked_sub(1).and_then(|j| e.get(j)), e.get(k)) {
                            (Some(lo), Some(hi)) => 0.5 * (lo + hi),
                            (Some(lo), None) => *lo,
                            (None, Some(hi)) => *hi,
                            (None, None) => 0.0,
                        }
                    };
                }
            }
            idx
        })
        .collect()
}

fn sample_cost_from_actions(spec: &TeamSpec, z: &[f64], u: &[f64], weights: Option<&[f64]>) -> EstimateWithError {
    let ell = spec.ell();
    let m = spec.m();
    let mut acc = Accum::default();
    for k in 0..z.len() / ell {
        let w = weights.map_or(1.0, |w| w[k]);
        let c = if w == 0.0 { 0.0 } else { w * spec.cost_z(&u[k * m..(k + 1) * m], &z[k * ell..(k + 1) * ell]) };
        acc.push(c);
    }
    acc.estimate()
}

/// Sample-set cost `mean(w·L)` of any policy on an observation set.
pub fn sample_cost<P: Policy + ?Sized>(spec: &TeamSpec, policy: &P, z: &[f64], weights: Option<&[f64]>) -> EstimateWithError {
    let ell = spec.ell();
    let m = spec.m();
    let n = z.len() / ell;
    let mut u = vec![0.0; n * m];
    for k in 0..n {
        policy.actions(spec, &z[k * ell..(k + 1) * ell], &mut u[k * m..(k + 1) * m]);
    }
    sample_cost_from_actions(spec, z, &u, weights)
}

/// Run PBP sweeps on a fixed observation set, starting from `start`.
///
/// `z` holds `N` observation vectors `(s, y₁, …, y_m)` row-major; `weights`
/// (length `N`, nonnegative) multiply each sample's cost.
pub fn pbp_fit(
    spec: &TeamSpec,
    z: &[f64],
    weights: Option<&[f64]>,
    cfg: &PbpConfig,
    start: &LinearPolicy,
) -> Result<PbpSolution> {
    cfg.validate()?;
    check_pbp_dims(spec)?;
    start.check(spec)?;
    let ell = spec.ell();
    let m = spec.m();
    if z.is_empty() || !z.len().is_multiple_of(ell) {
        return Err(Error::Dimension(format!("observation set length {} is not a multiple of ℓ = {ell}", z.len())));
    }
    let n = z.len() / ell;
    if let Some(w) = weights {
        if w.len() != n {
            return Err(Error::Dimension(format!("{} weights for {n} samples", w.len())));
        }
    }
    let weight = |k: usize| weights.map_or(1.0, |w| w[k]);

    let mut tables = build_tables(spec, z, cfg);
    let cells = assign_cells(spec, z, &mut tables);

    // start from the linear policy
    for (i, t) in tables.iter_mut().enumerate() {
        let g = &start.gains[i];
        let d = t.dims();
        for c in 0..t.cells() {
            let at_center: f64 = (0..d).map(|a| g[a] * t.centers[c * d + a]).sum();
            t.values[c] = at_center;
            if cfg.form == CellForm::Affine {
                t.slopes[c * d..(c + 1) * d].copy_from_slice(g);
            }
        }
        if cfg.form == CellForm::Constant {
            // best constant approximation of the linear rule in each cell
            let mut num = vec![0.0; t.cells()];
            let mut den = vec![0.0; t.cells()];
            let range = spec.obs_range(i);
            for k in 0..n {
                let w = weight(k);
                if w > 0.0 {
                    let c = cells[i][k] as usize;
                    let y = &z[k * ell + range.start..k * ell + range.end];
                    num[c] += w * start.act(i, y);
                    den[c] += w;
                }
            }
            for c in 0..t.cells() {
                if den[c] > 0.0 {
                    t.values[c] = num[c] / den[c];
                }
            }
        }
    }

    let mut u = vec![0.0; n * m];
    for k in 0..n {
        for i in 0..m {
            let r = spec.obs_range(i);
            u[k * m + i] = tables[i].eval_in(cells[i][k] as usize, &z[k * ell + r.start..k * ell + r.end]);
        }
    }

    let q = spec.q();
    let mut history = vec![sample_cost_from_actions(spec, z, &u, weights).value];
    let mut last_change = f64::INFINITY;
    let mut sweeps = 0;
    let mut converged = false;

    while sweeps < cfg.max_iters {
        sweeps += 1;
        let mut sweep_change: f64 = 0.0;
        for i in 0..m {
            let t = &mut tables[i];
            let d = t.dims();
            let p = match cfg.form {
                CellForm::Constant => 1,
                CellForm::Affine => 1 + d,
            };
            let range = spec.obs_range(i);
            let mut gram = vec![0.0; t.cells() * p * p];
            let mut rhs = vec![0.0; t.cells() * p];
            let mut occupied = vec![0usize; t.cells()];
            let mut phi = [0.0f64; 3];
            for k in 0..n {
                let w = weight(k);
                if w == 0.0 {
                    continue;
                }
                let zk = &z[k * ell..(k + 1) * ell];
                let uk = &u[k * m..(k + 1) * m];
                let mut other = zk[i];
                for j in 0..m {
                    if j != i {
                        other += q[(i, j)] * uk[j];
                    }
                }
                let target = -other / q[(i, i)];
                let c = cells[i][k] as usize;
                phi[0] = 1.0;
                for a in 1..p {
                    phi[a] = zk[range.start + a - 1] - t.centers[c * d + a - 1];
                }
                let g = &mut gram[c * p * p..(c + 1) * p * p];
                for r in 0..p {
                    for s in 0..p {
                        g[r * p + s] += w * phi[r] * phi[s];
                    }
                }
                for r in 0..p {
                    rhs[c * p + r] += w * phi[r] * target;
                }
                occupied[c] += 1;
            }
            let damping = cfg.damping;
            for c in 0..t.cells() {
                let g = &gram[c * p * p..(c + 1) * p * p];
                if !(g[0] > 0.0) {
                    continue;
                }
                let solved = if p > 1 && occupied[c] > p { solve_cell(g, &rhs[c * p..(c + 1) * p], p) } else { None };
                let (new_value, new_slope) = match solved {
                    Some(theta) => (theta[0], Some(theta[1..].to_vec())),
                    None => {
                        // intercept only, slope held fixed
                        let slope = &t.slopes[c * d..(c + 1) * d];
                        let mut r0 = rhs[c * p];
                        if p > 1 {
                            for a in 0..d {
                                r0 -= g[a + 1] * slope[a];
                            }
                        }
                        (r0 / g[0], None)
                    }
                };
                t.values[c] = (1.0 - damping) * t.values[c] + damping * new_value;
                if let Some(s) = new_slope {
                    for (old, new) in t.slopes[c * d..(c + 1) * d].iter_mut().zip(&s) {
                        *old = (1.0 - damping) * *old + damping * new;
                    }
                }
            }
            for k in 0..n {
                let c = cells[i][k] as usize;
                let new = t.eval_in(c, &z[k * ell + range.start..k * ell + range.end]);
                let old = &mut u[k * m + i];
                if weight(k) > 0.0 {
                    sweep_change = sweep_change.max((new - *old).abs());
                }
                *old = new;
            }
        }
        history.push(sample_cost_from_actions(spec, z, &u, weights).value);
        last_change = sweep_change;
        if sweep_change < cfg.tol {
            converged = true;
            break;
        }
    }
    if !converged && last_change > 10.0 * cfg.tol {
        return Err(Error::NonConvergence { iterations: sweeps, last_change });
    }
    let cost = sample_cost_from_actions(spec, z, &u, weights);
    Ok(PbpSolution { policy: TabulatedPolicy { form: cfg.form, players: tables }, cost, history, sweeps, last_change, converged })
}

/// Solve the `p × p` normal equations of one cell; `None` when the cell's
/// design is degenerate.
fn solve_cell(gram: &[f64], rhs: &[f64], p: usize) -> Option<Vec<f64>> {
    let g = DMatrix::from_row_slice(p, p, gram);
    let diag_max = (0..p).map(|r| g[(r, r)]).fold(0.0, f64::max);
    let chol = nalgebra::Cholesky::new(g)?;
    let l = chol.l();
    if (0..p).any(|r| l[(r, r)] * l[(r, r)] <= 1e-12 * diag_max) {
        return None;
    }
    let theta = chol.solve(&DVector::from_column_slice(rhs));
    theta.iter().all(|v| v.is_finite()).then(|| theta.as_slice().to_vec())
}

/// Approximate the optimal policy of `instance` under `noise` by PBP on
/// `cfg.samples` fresh draws, starting from the best linear policy.
pub fn pbp_solve<R: Rng + ?Sized>(instance: &ProblemInstance, noise: &NoiseModel, cfg: &PbpConfig, rng: &mut R) -> Result<PbpSolution> {
    cfg.validate()?;
    check_pbp_dims(instance.spec())?;
    let start = solve_linear(instance.spec())?;
    let z = instance.draw_observations(noise, cfg.samples, rng)?;
    pbp_fit(instance.spec(), &z, None, cfg, &start)
}

/// `count` draws of `z = Wζ`, `ζ ~ N(0, I_ℓ)`, with `‖ζ‖` alongside.
fn gaussian_observations<R: Rng + ?Sized>(spec: &TeamSpec, count: usize, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let ell = spec.ell();
    let master = rng::fork(rng);
    let parts = chunked(count, master, |rng, _, len| {
        let mut z = vec![0.0; len * ell];
        let mut norms = vec![0.0; len];
        let mut zeta = vec![0.0; ell];
        for k in 0..len {
            for v in zeta.iter_mut() {
                *v = rng.sample(rand_distr::StandardNormal);
            }
            norms[k] = zeta.iter().map(|v| v * v).sum::<f64>().sqrt();
            spec.observe_into(&zeta, &mut z[k * ell..(k + 1) * ell]);
        }
        (z, norms)
    });
    let mut z = Vec::with_capacity(count * ell);
    let mut norms = Vec::with_capacity(count);
    for (a, b) in parts {
        z.extend(a);
        norms.extend(b);
    }
    (z, norms)
}

/// PBP solution of `min_γ E[1{‖ζ‖ ≤ t}·L(γ(Wζ), Wζ)]`, `ζ ~ N(0, I_ℓ)`.
pub fn truncated_gaussian_solution<R: Rng + ?Sized>(spec: &TeamSpec, trunc_radius: f64, cfg: &PbpConfig, rng: &mut R) -> Result<PbpSolution> {
    if !(trunc_radius >= 0.0) {
        return Err(Error::Config(format!("truncation radius must be nonnegative, got {trunc_radius}")));
    }
    cfg.validate()?;
    check_pbp_dims(spec)?;
    let start = solve_linear(spec)?;
    let (z, norms) = gaussian_observations(spec, cfg.samples, rng);
    let weights: Vec<f64> = norms.iter().map(|&r| if r <= trunc_radius { 1.0 } else { 0.0 }).collect();
    pbp_fit(spec, &z, Some(&weights), cfg, &start)
}

/// The truncated Gaussian value `v(t)`.
pub fn truncated_gaussian_value<R: Rng + ?Sized>(spec: &TeamSpec, trunc_radius: f64, cfg: &PbpConfig, rng: &mut R) -> Result<EstimateWithError> {
    Ok(truncated_gaussian_solution(spec, trunc_radius, cfg, rng)?.cost)
}

/// Exactly optimal piecewise-constant policy on the quantile partition (at
/// most two players with scalar observations), from the stationarity system
/// over all cell pairs. Same sample draw as [`pbp_solve`] for equal `rng`.
pub fn brute_force_solution<R: Rng + ?Sized>(
    instance: &ProblemInstance,
    noise: &NoiseModel,
    bins: usize,
    samples: usize,
    rng: &mut R,
) -> Result<(TabulatedPolicy, EstimateWithError)> {
    let spec = instance.spec();
    let m = spec.m();
    if m > 2 || spec.obs_dims().iter().any(|&d| d != 1) {
        return Err(Error::Dimension("brute-force oracle supports at most two players with scalar observations".into()));
    }
    if bins == 0 || samples == 0 {
        return Err(Error::Config("bins and samples must be positive".into()));
    }
    let z = instance.draw_observations(noise, samples, rng)?;
    let cfg = PbpConfig { bins, form: CellForm::Constant, ..PbpConfig::default() };
    let mut tables = build_tables(spec, &z, &cfg);
    let cells = assign_cells(spec, &z, &mut tables);
    let ell = spec.ell();
    let offsets: Vec<usize> = tables.iter().scan(0, |acc, t| {
        let o = *acc;
        *acc += t.cells();
        Some(o)
    }).collect();
    let size: usize = tables.iter().map(PlayerTable::cells).sum();
    let mut a = DMatrix::<f64>::zeros(size, size);
    let mut b = DVector::<f64>::zeros(size);
    let q = spec.q();
    for k in 0..samples {
        let zk = &z[k * ell..(k + 1) * ell];
        for i in 0..m {
            let ri = offsets[i] + cells[i][k] as usize;
            b[ri] -= zk[i];
            for j in 0..m {
                let rj = offsets[j] + cells[j][k] as usize;
                a[(ri, rj)] += q[(i, j)];
            }
        }
    }
    for r in 0..size {
        if a[(r, r)] == 0.0 {
            a[(r, r)] = 1.0;
        }
    }
    let sol = a.lu().solve(&b).ok_or_else(|| Error::Singular("cell stationarity system is singular".into()))?;
    for (i, t) in tables.iter_mut().enumerate() {
        for c in 0..t.cells() {
            t.values[c] = sol[offsets[i] + c];
        }
    }
    let policy = TabulatedPolicy { form: CellForm::Constant, players: tables };
    let est = sample_cost(spec, &policy, &z, None);
    Ok((policy, est))
}

pub fn brute_force_optimal<R: Rng + ?Sized>(
    instance: &ProblemInstance,
    noise: &NoiseModel,
    bins: usize,
    samples: usize,
    rng: &mut R,
) -> Result<EstimateWithError> {
    Ok(brute_force_solution(instance, noise, bins, samples, rng)?.1)
}
