//! Team specifications, ensemble instances `Z = W Rᵀ`, the quadratic cost,
//! the best linear policy and Monte Carlo policy evaluation.
//!
//! Rows of `W` are partitioned as `[W₀; W₁; …; W_m]`: the `m` rows of `W₀`
//! produce the cost cross term `S = W₀Rᵀ`, block `Wᵢ` (height `ℓᵢ`) produces
//! player `i`'s observation matrix `Hᵢ = WᵢRᵀ`. Inside the crate an
//! observation vector `z = Zξ = W(Rᵀξ)` is laid out the same way:
//! `z = (Sξ, H₁ξ, …, H_mξ)`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::rng::{self, chunked};
use crate::stats::{merge_all, Accum, EstimateWithError};
use crate::stiefel::{sample_stiefel, OrthonormalMatrix};

/// Largest admissible condition number of `Q`.
pub const MAX_Q_CONDITION: f64 = 1e12;
/// Singular values of each observation block must exceed this.
pub const RANK_TOL: f64 = 1e-8;

/// Fixed ensemble parameters: observation sizes, cost matrix `Q` and mixing
/// matrix `W`. Validated on construction.
#[derive(Debug, Clone)]
pub struct TeamSpec {
    obs_dims: Vec<usize>,
    q: DMatrix<f64>,
    w: DMatrix<f64>,
    offsets: Vec<usize>,
    // lower Cholesky factor of Q, row-major
    q_chol: Vec<f64>,
    q_inv: DMatrix<f64>,
    w_rows: Vec<f64>,
}

impl PartialEq for TeamSpec {
    fn eq(&self, other: &Self) -> bool {
        self.obs_dims == other.obs_dims && self.q == other.q && self.w == other.w
    }
}

impl TeamSpec {
    pub fn new(obs_dims: Vec<usize>, q: DMatrix<f64>, w: DMatrix<f64>) -> Result<Self> {
        let m = obs_dims.len();
        if m == 0 {
            return Err(Error::InvalidSpec { field: "obs_dims", reason: "team needs at least one player".into() });
        }
        if obs_dims.contains(&0) {
            return Err(Error::InvalidSpec { field: "obs_dims", reason: "observation sizes must be positive".into() });
        }
        if q.shape() != (m, m) {
            return Err(Error::InvalidSpec {
                field: "Q",
                reason: format!("expected {m}×{m}, got {}×{}", q.nrows(), q.ncols()),
            });
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec { field: "Q", reason: "non-finite entry".into() });
        }
        let scale = q.abs().max().max(1.0);
        let asym = (&q - q.transpose()).abs().max();
        if asym > 1e-12 * scale {
            return Err(Error::InvalidSpec { field: "Q", reason: format!("not symmetric (max |Q − Qᵀ| = {asym:e})") });
        }
        let eig = SymmetricEigen::new(q.clone()).eigenvalues;
        let (lo, hi) = (eig.min(), eig.max());
        if !(lo > 0.0) {
            return Err(Error::InvalidSpec { field: "Q", reason: format!("not positive definite (smallest eigenvalue {lo:e})") });
        }
        if hi / lo > MAX_Q_CONDITION {
            return Err(Error::InvalidSpec {
                field: "Q",
                reason: format!("condition number {:e} exceeds {MAX_Q_CONDITION:e}", hi / lo),
            });
        }
        let chol = Cholesky::new(q.clone())
            .ok_or_else(|| Error::InvalidSpec { field: "Q", reason: "Cholesky factorization failed".into() })?;
        let l_factor = chol.l();
        let q_inv = chol.inverse();

        let ell = m + obs_dims.iter().sum::<usize>();
        if w.shape() != (ell, ell) {
            return Err(Error::InvalidSpec {
                field: "W",
                reason: format!("expected {ell}×{ell} (m + Σℓᵢ), got {}×{}", w.nrows(), w.ncols()),
            });
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec { field: "W", reason: "non-finite entry".into() });
        }
        let mut offsets = Vec::with_capacity(m + 1);
        let mut at = m;
        for &d in &obs_dims {
            offsets.push(at);
            at += d;
        }
        offsets.push(at);
        for i in 0..m {
            let block = w.rows(offsets[i], obs_dims[i]).clone_owned();
            let sv = block.singular_values();
            if !(sv.min() > RANK_TOL) {
                return Err(Error::InvalidSpec {
                    field: "W",
                    reason: format!("block W_{} is not of full row rank (σ_min = {:e})", i + 1, sv.min()),
                });
            }
        }
        let q_chol = (0..m).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| l_factor[(i, j)]).collect();
        let w_rows = (0..ell).flat_map(|i| (0..ell).map(move |j| (i, j))).map(|(i, j)| w[(i, j)]).collect();
        Ok(Self { obs_dims, q, w, offsets, q_chol, q_inv, w_rows })
    }

    /// Build from row-major nested vectors (the JSON layout).
    pub fn from_rows(obs_dims: Vec<usize>, q: &[Vec<f64>], w: &[Vec<f64>]) -> Result<Self> {
        let q = rows_to_matrix(q, "Q")?;
        let w = rows_to_matrix(w, "W")?;
        Self::new(obs_dims, q, w)
    }

    pub fn m(&self) -> usize {
        self.obs_dims.len()
    }

    /// `ℓ = m + Σℓᵢ`.
    pub fn ell(&self) -> usize {
        self.w.nrows()
    }

    /// `ℓ̄ = Σℓᵢ`, the number of linear-policy coefficients.
    pub fn ell_bar(&self) -> usize {
        self.ell() - self.m()
    }

    pub fn obs_dims(&self) -> &[usize] {
        &self.obs_dims
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn q_inv(&self) -> &DMatrix<f64> {
        &self.q_inv
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    /// Rows of `W` that generate `S`.
    pub fn w0(&self) -> DMatrix<f64> {
        self.w.rows(0, self.m()).clone_owned()
    }

    /// Block `Wᵢ` for player `i` (0-based).
    pub fn w_block(&self, i: usize) -> DMatrix<f64> {
        self.w.rows(self.offsets[i], self.obs_dims[i]).clone_owned()
    }

    /// Index range of player `i`'s observation inside `z`.
    pub fn obs_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// Offset of player `i`'s coefficients inside a flattened linear policy.
    pub fn gain_offset(&self, i: usize) -> usize {
        self.offsets[i] - self.m()
    }

    /// `z = W ẑ` for `ẑ ∈ R^ℓ`.
    pub fn observe_into(&self, zhat: &[f64], z: &mut [f64]) {
        let ell = self.ell();
        for (i, zi) in z.iter_mut().enumerate() {
            let row = &self.w_rows[i * ell..(i + 1) * ell];
            *zi = row.iter().zip(zhat).map(|(a, b)| a * b).sum();
        }
    }

    /// `L(u, ξ)` given the cross term `s = Sξ`, evaluated as
    /// `½‖Cᵀu + C⁻¹s‖²` with `Q = CCᵀ`; algebraically equal to
    /// `½uᵀQu + uᵀs + ½sᵀQ⁻¹s` and nonnegative by construction.
    pub fn cost_from_cross(&self, u: &[f64], s: &[f64]) -> f64 {
        let m = self.m();
        let c = &self.q_chol;
        let mut v = [0.0f64; 8];
        let mut heap;
        let v: &mut [f64] = if m <= 8 {
            &mut v[..m]
        } else {
            heap = vec![0.0; m];
            &mut heap
        };
        // forward substitution C v = s
        for i in 0..m {
            let mut acc = s[i];
            for j in 0..i {
                acc -= c[i * m + j] * v[j];
            }
            v[i] = acc / c[i * m + i];
        }
        let mut total = 0.0;
        for i in 0..m {
            let mut t = v[i];
            for j in i..m {
                t += c[j * m + i] * u[j];
            }
            total += t * t;
        }
        0.5 * total
    }

    /// `L(u, z)` for an observation vector `z = (s, y₁, …, y_m)`.
    pub fn cost_z(&self, u: &[f64], z: &[f64]) -> f64 {
        self.cost_from_cross(u, &z[..self.m()])
    }

    /// `E[q(ξ)] = ½ tr(Q⁻¹W₀W₀ᵀ)` for any isotropic `ξ`.
    pub fn expected_q(&self) -> f64 {
        let w0 = self.w0();
        0.5 * (&self.q_inv * &w0 * w0.transpose()).trace()
    }

    /// The linear-policy normal equations `(M, b)`: block `(i, j)` of `M` is
    /// `Q_ij WᵢWⱼᵀ`, block `i` of `b` is `Wᵢ` times row `i` of `W₀`.
    /// Both follow from isotropy and depend on neither `n` nor `R`.
    pub fn ngl_system(&self) -> (DMatrix<f64>, DVector<f64>) {
        let lb = self.ell_bar();
        let m = self.m();
        let mut mat = DMatrix::zeros(lb, lb);
        let mut rhs = DVector::zeros(lb);
        let w0 = self.w0();
        for i in 0..m {
            let wi = self.w_block(i);
            let oi = self.gain_offset(i);
            for j in 0..m {
                let wj = self.w_block(j);
                let block = (&wi * wj.transpose()) * self.q[(i, j)];
                mat.view_mut((oi, self.gain_offset(j)), block.shape()).copy_from(&block);
            }
            let bi = &wi * w0.row(i).transpose();
            rhs.rows_mut(oi, self.obs_dims[i]).copy_from(&bi);
        }
        (mat, rhs)
    }

    /// NGL objective `½γᵀMγ + γᵀb + E[q]` at a flattened gain vector.
    pub fn ngl_objective(&self, gains: &[f64]) -> Result<f64> {
        if gains.len() != self.ell_bar() {
            return Err(Error::Dimension(format!("gain vector has length {}, expected {}", gains.len(), self.ell_bar())));
        }
        let (mat, rhs) = self.ngl_system();
        let g = DVector::from_column_slice(gains);
        Ok(0.5 * g.dot(&(&mat * &g)) + g.dot(&rhs) + self.expected_q())
    }

    /// Rank of `W` (singular values above `1e-8·σ_max`) and its smallest
    /// positive singular value.
    pub fn w_rank(&self) -> (usize, f64) {
        let sv = self.w.singular_values();
        let smax = sv.max();
        let tol = 1e-8 * smax;
        let pos: Vec<f64> = sv.iter().copied().filter(|&s| s > tol).collect();
        let smin = pos.iter().copied().fold(f64::INFINITY, f64::min);
        (pos.len(), if pos.is_empty() { 0.0 } else { smin })
    }
}

pub(crate) fn rows_to_matrix(rows: &[Vec<f64>], field: &'static str) -> Result<DMatrix<f64>> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, Vec::len);
    if nr == 0 || nc == 0 {
        return Err(Error::InvalidSpec { field, reason: "matrix is empty".into() });
    }
    if rows.iter().any(|r| r.len() != nc) {
        return Err(Error::InvalidSpec { field, reason: "rows have unequal lengths".into() });
    }
    Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

/// Rows of `m` as nested vectors.
pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// One ensemble member: noise dimension `n`, frame `R`, and `Z = W Rᵀ`.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    spec: TeamSpec,
    n: usize,
    r: OrthonormalMatrix,
    z: DMatrix<f64>,
    rt_rows: Vec<f64>,
}

impl ProblemInstance {
    pub fn build(spec: &TeamSpec, n: usize, r: OrthonormalMatrix) -> Result<Self> {
        let ell = spec.ell();
        if n < ell {
            return Err(Error::Dimension(format!("n = {n} is smaller than ℓ = {ell}")));
        }
        if r.n() != n || r.l() != ell {
            return Err(Error::Dimension(format!("R is {}×{}, expected {n}×{ell}", r.n(), r.l())));
        }
        let z = spec.w() * r.matrix().transpose();
        for i in 0..spec.m() {
            let h = z.rows(spec.obs_range(i).start, spec.obs_dims()[i]).clone_owned();
            let smin = h.singular_values().min();
            if !(smin > RANK_TOL) {
                return Err(Error::RankDeficient(format!("H_{} has σ_min = {smin:e}", i + 1)));
            }
        }
        let rt_rows = r.transpose_row_major();
        Ok(Self { spec: spec.clone(), n, r, z, rt_rows })
    }

    /// Build with a fresh Haar frame.
    pub fn sample<R: Rng + ?Sized>(spec: &TeamSpec, n: usize, rng: &mut R) -> Result<Self> {
        let r = sample_stiefel(n, spec.ell(), rng)?;
        Self::build(spec, n, r)
    }

    pub fn spec(&self) -> &TeamSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn frame(&self) -> &OrthonormalMatrix {
        &self.r
    }

    /// `Z = [S; H₁; …; H_m]`.
    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn s(&self) -> DMatrix<f64> {
        self.z.rows(0, self.spec.m()).clone_owned()
    }

    pub fn h(&self, i: usize) -> DMatrix<f64> {
        self.z.rows(self.spec.obs_range(i).start, self.spec.obs_dims()[i]).clone_owned()
    }

    /// `L(u, ξ) = ½uᵀQu + uᵀSξ + q(ξ)`.
    pub fn cost(&self, u: &[f64], xi: &[f64]) -> Result<f64> {
        let m = self.spec.m();
        if u.len() != m {
            return Err(Error::Dimension(format!("action vector has length {}, expected {m}", u.len())));
        }
        if xi.len() != self.n {
            return Err(Error::Dimension(format!("noise vector has length {}, expected {}", xi.len(), self.n)));
        }
        let s: Vec<f64> = (0..m).map(|i| self.z.row(i).iter().zip(xi).map(|(a, b)| a * b).sum()).collect();
        Ok(self.spec.cost_from_cross(u, &s))
    }

    fn check_noise(&self, noise: &NoiseModel) -> Result<()> {
        if noise.n != self.n {
            return Err(Error::Dimension(format!("noise dimension {} does not match instance n = {}", noise.n, self.n)));
        }
        Ok(())
    }

    /// `ẑ = Rᵀξ`.
    pub fn project_into(&self, xi: &[f64], zhat: &mut [f64]) {
        let n = self.n;
        for (j, o) in zhat.iter_mut().enumerate() {
            *o = self.rt_rows[j * n..(j + 1) * n].iter().zip(xi).map(|(a, b)| a * b).sum();
        }
    }

    /// Run `f` over [`crate::rng::CHUNK`]-sized groups of fresh samples,
    /// chunk `k` drawing from `substream(master, k)`. Results come back in
    /// chunk order.
    pub fn map_chunks<T, F>(&self, noise: &NoiseModel, count: usize, master: u64, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&mut ChunkSampler<'_>) -> T + Sync,
    {
        self.check_noise(noise)?;
        let ell = self.spec.ell();
        Ok(chunked(count, master, |rng, _, len| {
            let mut sampler = ChunkSampler {
                instance: self,
                noise,
                rng,
                remaining: len,
                xi: vec![0.0; self.n],
                zhat: vec![0.0; ell],
                z: vec![0.0; ell],
            };
            f(&mut sampler)
        }))
    }

    /// `count` observation vectors `z = W Rᵀξ`, row-major `count × ℓ`.
    pub fn draw_observations<R: Rng + ?Sized>(&self, noise: &NoiseModel, count: usize, rng: &mut R) -> Result<Vec<f64>> {
        let master = rng::fork(rng);
        let parts = self.map_chunks(noise, count, master, |chunk| {
            let mut out = Vec::new();
            while let Some(s) = chunk.next_sample() {
                out.extend_from_slice(s.z);
            }
            out
        })?;
        Ok(parts.concat())
    }

    /// The raw noise draws `mc_cost` would use for the same `rng` state.
    pub fn draw_noise<R: Rng + ?Sized>(&self, noise: &NoiseModel, count: usize, rng: &mut R) -> Result<Vec<f64>> {
        self.check_noise(noise)?;
        let master = rng::fork(rng);
        let parts = chunked(count, master, |rng, _, len| noise.sample(len, rng));
        Ok(parts.concat())
    }
}

/// Sequential sampler over one chunk; see [`ProblemInstance::map_chunks`].
pub struct ChunkSampler<'a> {
    instance: &'a ProblemInstance,
    noise: &'a NoiseModel,
    rng: &'a mut rng::Stream,
    remaining: usize,
    xi: Vec<f64>,
    zhat: Vec<f64>,
    z: Vec<f64>,
}

/// One draw: the noise `ξ`, its coordinates `ẑ = Rᵀξ`, and `z = Wẑ`.
pub struct Sample<'s> {
    pub xi: &'s [f64],
    pub zhat: &'s [f64],
    pub z: &'s [f64],
}

impl ChunkSampler<'_> {
    pub fn next_sample(&mut self) -> Option<Sample<'_>> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        self.noise.sample_into(self.rng, &mut self.xi);
        self.instance.project_into(&self.xi, &mut self.zhat);
        self.instance.spec.observe_into(&self.zhat, &mut self.z);
        Some(Sample { xi: &self.xi, zhat: &self.zhat, z: &self.z })
    }
}

/// A team policy: player `i` maps its observation `yᵢ` to a scalar action.
pub trait Policy: Sync {
    fn act(&self, player: usize, obs: &[f64]) -> f64;

    fn actions(&self, spec: &TeamSpec, z: &[f64], u: &mut [f64]) {
        for (i, ui) in u.iter_mut().enumerate() {
            *ui = self.act(i, &z[spec.obs_range(i)]);
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPolicy;

impl Policy for ZeroPolicy {
    fn act(&self, _: usize, _: &[f64]) -> f64 {
        0.0
    }
}

/// `uᵢ = gainsᵢᵀ yᵢ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearPolicy {
    pub gains: Vec<Vec<f64>>,
}

impl LinearPolicy {
    pub fn from_flat(spec: &TeamSpec, flat: &[f64]) -> Result<Self> {
        if flat.len() != spec.ell_bar() {
            return Err(Error::Dimension(format!("gain vector has length {}, expected {}", flat.len(), spec.ell_bar())));
        }
        let gains = (0..spec.m())
            .map(|i| {
                let o = spec.gain_offset(i);
                flat[o..o + spec.obs_dims()[i]].to_vec()
            })
            .collect();
        Ok(Self { gains })
    }

    pub fn flat(&self) -> Vec<f64> {
        self.gains.concat()
    }

    pub fn check(&self, spec: &TeamSpec) -> Result<()> {
        let ok = self.gains.len() == spec.m() && self.gains.iter().zip(spec.obs_dims()).all(|(g, &d)| g.len() == d);
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension("linear policy does not match the team's observation sizes".into()))
        }
    }
}

impl Policy for LinearPolicy {
    fn act(&self, player: usize, obs: &[f64]) -> f64 {
        self.gains[player].iter().zip(obs).map(|(g, y)| g * y).sum()
    }
}

/// The unique best linear policy: solves `Mγ = −b`.
pub fn solve_linear(spec: &TeamSpec) -> Result<LinearPolicy> {
    let (mat, rhs) = spec.ngl_system();
    let chol = Cholesky::new(mat).ok_or_else(|| Error::Singular("linear-policy normal matrix is not positive definite".into()))?;
    let gamma = chol.solve(&(-rhs));
    if gamma.iter().any(|g| !g.is_finite()) {
        return Err(Error::Singular("linear-policy solve produced non-finite gains".into()));
    }
    LinearPolicy::from_flat(spec, gamma.as_slice())
}

/// Cost of the best linear policy, which is also the optimal cost of the
/// Gaussian problem; independent of `n` and `R`.
pub fn gaussian_cost(spec: &TeamSpec) -> Result<f64> {
    let policy = solve_linear(spec)?;
    Ok(spec.ngl_objective(&policy.flat())?.max(0.0))
}

/// Monte Carlo estimate of `E[L(γ(H₁ξ), …, γ(H_mξ), ξ)]`.
pub fn mc_cost<P: Policy + ?Sized, R: Rng + ?Sized>(
    instance: &ProblemInstance,
    policy: &P,
    noise: &NoiseModel,
    samples: usize,
    rng: &mut R,
) -> Result<EstimateWithError> {
    if samples == 0 {
        return Err(Error::TooFewSamples { got: 0, min: 1 });
    }
    let spec = instance.spec();
    let master = rng::fork(rng);
    let parts = instance.map_chunks(noise, samples, master, |chunk| {
        let mut acc = Accum::default();
        let mut u = vec![0.0; spec.m()];
        while let Some(s) = chunk.next_sample() {
            policy.actions(spec, s.z, &mut u);
            acc.push(spec.cost_z(&u, s.z));
        }
        acc
    })?;
    Ok(merge_all(&parts).estimate())
}
