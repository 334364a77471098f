//! Dense spectral helpers. These delegate to LAPACK in double precision.

use ndarray::Array2;
use ndarray_linalg::{Eig, EigVals, Eigh, EigValsh, UPLO};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::scalar::{Real, C};

pub(crate) fn to_c64<T: Real>(a: &Array2<C<T>>) -> Array2<Complex64> {
    a.mapv(|z| Complex64::new(z.re.as_f64(), z.im.as_f64()))
}

/// Ascending eigenvalues of a Hermitian matrix (lower triangle is read).
pub fn hermitian_eigenvalues<T: Real>(a: &Array2<C<T>>) -> Result<Vec<f64>> {
    let m = to_c64(a);
    let w = m
        .eigvalsh(UPLO::Lower)
        .map_err(|e| Error::Eigen(e.to_string()))?;
    Ok(w.to_vec())
}

/// Eigenpairs of a Hermitian matrix, eigenvalues ascending, vectors in columns.
pub fn hermitian_eigh<T: Real>(a: &Array2<C<T>>) -> Result<(Vec<f64>, Array2<Complex64>)> {
    let m = to_c64(a);
    let (w, v) = m.eigh(UPLO::Lower).map_err(|e| Error::Eigen(e.to_string()))?;
    Ok((w.to_vec(), v))
}

/// Eigenvalues of a general complex matrix.
pub fn eigenvalues(a: Array2<Complex64>) -> Result<Vec<Complex64>> {
    let w = a.eigvals().map_err(|e| Error::Eigen(e.to_string()))?;
    Ok(w.to_vec())
}

/// Eigenvalues and right eigenvectors (columns) of a general complex matrix.
pub fn eigenpairs(a: &Array2<Complex64>) -> Result<(Vec<Complex64>, Array2<Complex64>)> {
    let (w, v) = a.eig().map_err(|e| Error::Eigen(e.to_string()))?;
    Ok((w.to_vec(), v))
}

/// `exp(-i H t)` for Hermitian `H` via its eigendecomposition.
pub fn unitary_propagator<T: Real>(h: &Array2<C<T>>, t: f64) -> Result<Array2<Complex64>> {
    let (w, v) = hermitian_eigh(h)?;
    let n = w.len();
    let mut scaled = v.clone();
    for (k, &e) in w.iter().enumerate() {
        let phase = Complex64::new(0.0, -e * t).exp();
        for i in 0..n {
            scaled[[i, k]] *= phase;
        }
    }
    Ok(scaled.dot(&v.t().mapv(|z| z.conj())))
}

/// Half the trace norm of `a - b` for Hermitian inputs.
pub fn trace_distance<T: Real>(a: &Array2<C<T>>, b: &Array2<C<T>>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), found: b.nrows() });
    }
    let diff = a - b;
    let w = hermitian_eigenvalues(&diff)?;
    Ok(0.5 * w.iter().map(|x| x.abs()).sum::<f64>())
}
