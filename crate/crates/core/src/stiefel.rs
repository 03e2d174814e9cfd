//! Haar sampling on the Stiefel manifold `V(n, l)` of `n × l` matrices with
//! orthonormal columns, and the coordinate projection `x ↦ Rᵀx`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Entrywise tolerance on `RᵀR − I`.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// An `n × l` matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalMatrix {
    entries: DMatrix<f64>,
}

impl OrthonormalMatrix {
    /// Wrap `entries`, checking `RᵀR = I` to [`ORTHONORMAL_TOL`].
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        let (n, l) = entries.shape();
        if l == 0 || n == 0 {
            return Err(Error::Dimension("orthonormal matrix must be non-empty".into()));
        }
        if l > n {
            return Err(Error::Dimension(format!("l = {l} exceeds n = {n}")));
        }
        let r = Self { entries };
        let err = r.orthonormality_error();
        if !(err < ORTHONORMAL_TOL) {
            return Err(Error::Dimension(format!("columns are not orthonormal (max |RᵀR − I| = {err:e})")));
        }
        Ok(r)
    }

    /// The first `l` columns of `I_n`.
    pub fn canonical(n: usize, l: usize) -> Result<Self> {
        check_dims(n, l)?;
        Ok(Self { entries: DMatrix::identity(n, l) })
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn l(&self) -> usize {
        self.entries.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn orthonormality_error(&self) -> f64 {
        let g = self.entries.transpose() * &self.entries;
        (g - DMatrix::<f64>::identity(self.l(), self.l())).abs().max()
    }

    /// `Rᵀx` without allocating a transpose.
    pub fn project_into(&self, x: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.entries.column(j).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    /// Row-major copy of `Rᵀ` (`l × n`), the layout used on hot paths.
    pub fn transpose_row_major(&self) -> Vec<f64> {
        let (n, l) = self.entries.shape();
        let mut out = Vec::with_capacity(n * l);
        for j in 0..l {
            out.extend(self.entries.column(j).iter());
        }
        out
    }
}

fn check_dims(n: usize, l: usize) -> Result<()> {
    if n == 0 || l == 0 {
        return Err(Error::Dimension(format!("n and l must be positive (n = {n}, l = {l})")));
    }
    if l > n {
        return Err(Error::Dimension(format!("l = {l} exceeds n = {n}")));
    }
    Ok(())
}

/// Draw `R` uniformly (Haar) from `V(n, l)`.
///
/// Thin QR of an `n × l` standard Gaussian matrix, with column signs flipped
/// so the triangular factor has a positive diagonal. Without the sign fix the
/// law of `Q` depends on the QR routine's sign convention and is not Haar.
pub fn sample_stiefel<R: Rng + ?Sized>(n: usize, l: usize, rng: &mut R) -> Result<OrthonormalMatrix> {
    check_dims(n, l)?;
    let g = DMatrix::<f64>::from_fn(n, l, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..l {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    OrthonormalMatrix::new(q)
}

/// Coordinates `Rᵀx` of the orthogonal projection of `x` onto `range(R)`.
pub fn project_coords(r: &OrthonormalMatrix, x: &[f64]) -> Result<DVector<f64>> {
    if x.len() != r.n() {
        return Err(Error::Dimension(format!("vector has length {}, expected {}", x.len(), r.n())));
    }
    let mut out = DVector::zeros(r.l());
    r.project_into(x, out.as_mut_slice());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn square_case_is_orthogonal() {
        let r = sample_stiefel(3, 3, &mut stream(1)).unwrap();
        assert!(r.orthonormality_error() < ORTHONORMAL_TOL);
        let rrt = r.matrix() * r.matrix().transpose();
        assert!((rrt - DMatrix::<f64>::identity(3, 3)).abs().max() < 1e-12);
    }

    #[test]
    fn same_seed_same_matrix() {
        let a = sample_stiefel(8, 2, &mut stream(99)).unwrap();
        let b = sample_stiefel(8, 2, &mut stream(99)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_dimensions_are_rejected() {
        assert!(matches!(sample_stiefel(2, 3, &mut stream(0)), Err(Error::Dimension(_))));
        assert!(matches!(sample_stiefel(0, 0, &mut stream(0)), Err(Error::Dimension(_))));
        assert!(matches!(sample_stiefel(4, 0, &mut stream(0)), Err(Error::Dimension(_))));
    }

    #[test]
    fn canonical_projection_takes_leading_entries() {
        let r = OrthonormalMatrix::canonical(5, 2).unwrap();
        let p = project_coords(&r, &[3.0, -1.0, 4.0, 1.0, 5.0]).unwrap();
        assert_eq!(p.as_slice(), &[3.0, -1.0]);
        let z = project_coords(&r, &[0.0; 5]).unwrap();
        assert_eq!(z.as_slice(), &[0.0, 0.0]);
        assert!(project_coords(&r, &[1.0; 4]).is_err());
    }

    #[test]
    fn projection_norm_matches_embedded_norm() {
        let mut rng = stream(5);
        let r = sample_stiefel(20, 3, &mut rng).unwrap();
        let x: Vec<f64> = (0..20).map(|_| rng.sample(StandardNormal)).collect();
        let c = project_coords(&r, &x).unwrap();
        let embedded = r.matrix() * &c;
        assert!((c.norm() - embedded.norm()).abs() < 1e-12);
        assert!(c.norm() <= DVector::from_column_slice(&x).norm() + 1e-12);
    }

    #[test]
    fn projector_is_idempotent_with_rank_l() {
        let r = sample_stiefel(30, 4, &mut stream(11)).unwrap();
        let p = r.matrix() * r.matrix().transpose();
        assert!((&p * &p - &p).abs().max() < 1e-9);
        assert!((p.trace() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn non_orthonormal_input_is_rejected() {
        let m = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        assert!(OrthonormalMatrix::new(m).is_err());
    }
}
