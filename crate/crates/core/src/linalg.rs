//! Dense complex linear-algebra helpers on top of nalgebra.

use nalgebra::{ComplexField, DMatrix};

use crate::{CMatrix, Complex, Error, Real, Result};

pub fn conj_transpose<T: Real>(m: &CMatrix<T>) -> CMatrix<T> {
    m.adjoint()
}

/// Entrywise conjugate.
pub fn conj<T: Real>(m: &CMatrix<T>) -> CMatrix<T> {
    m.map(|z| z.conj())
}

pub fn kron<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> CMatrix<T> {
    a.kronecker(b)
}

pub fn real_to_complex<T: Real>(m: &DMatrix<T>) -> CMatrix<T> {
    m.map(|x| Complex::new(x, T::zero()))
}

/// Largest entrywise modulus of `a - b`.
pub fn max_abs_diff<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> T {
    a.iter()
        .zip(b.iter())
        .fold(T::zero(), |acc, (x, y)| acc.max((*x - *y).modulus()))
}

pub fn max_abs<T: Real>(a: &CMatrix<T>) -> T {
    a.iter().fold(T::zero(), |acc, x| acc.max(x.modulus()))
}

pub fn trace<T: Real>(a: &CMatrix<T>) -> Complex<T> {
    a.diagonal()
        .iter()
        .fold(Complex::new(T::zero(), T::zero()), |s, z| s + *z)
}

/// Worst deviation of `h` from Hermitian symmetry.
pub fn hermitian_defect<T: Real>(h: &CMatrix<T>) -> T {
    max_abs_diff(h, &h.adjoint())
}

/// Eigen-decomposition of a Hermitian matrix.
///
/// Returns eigenvalues sorted nonincreasing together with the matching
/// eigenvectors as columns. `tol` bounds the accepted Hermitian defect
/// relative to the largest entry (absolute when the matrix is tiny).
pub fn hermitian_eigen<T: Real>(h: &CMatrix<T>, tol: T) -> Result<(Vec<T>, CMatrix<T>)> {
    if !h.is_square() {
        return Err(Error::Dimension(format!(
            "expected square matrix, got {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    let scale = max_abs(h).max(T::one());
    let defect = hermitian_defect(h);
    if defect > tol * scale {
        return Err(Error::Domain(format!(
            "matrix is not Hermitian (defect {:e})",
            defect.as_f64()
        )));
    }
    let n = h.nrows();
    if n == 0 {
        return Ok((Vec::new(), CMatrix::zeros(0, 0)));
    }
    // Symmetrize so roundoff in the input does not leak into the solver.
    let sym = (h + h.adjoint()).map(|z| z * T::lit(0.5));
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

/// Eigen-decomposition of a real symmetric matrix, eigenvalues nonincreasing.
pub fn symmetric_eigen<T: Real>(s: &DMatrix<T>) -> (Vec<T>, DMatrix<T>) {
    let n = s.nrows();
    let sym = (s + s.transpose()) * T::lit(0.5);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Eigenvalues below `rel * max_eig` are treated as zero.
pub fn clamp_eigenvalues<T: Real>(values: &[T], rel: T) -> Vec<T> {
    let top = values.iter().fold(T::zero(), |m, &v| m.max(v));
    let floor = rel * top;
    values.iter().map(|&v| if v > floor { v } else { T::zero() }).collect()
}

/// Square-root factor `S = U diag(sqrt(max(λ, 0)))` with `S Sᴴ` equal to the
/// eigenvalue-clamped input. Columns for clamped eigenvalues are dropped.
pub fn psd_sqrt<T: Real>(h: &CMatrix<T>, rel_clamp: T, tol: T) -> Result<CMatrix<T>> {
    let (values, vectors) = hermitian_eigen(h, tol)?;
    let clamped = clamp_eigenvalues(&values, rel_clamp);
    let keep: Vec<usize> = (0..clamped.len()).filter(|&i| clamped[i] > T::zero()).collect();
    let mut s = CMatrix::zeros(h.nrows(), keep.len());
    for (dst, &i) in keep.iter().enumerate() {
        let root = clamped[i].sqrt();
        s.set_column(dst, &(vectors.column(i) * Complex::new(root, T::zero())));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn two_by_two_matches_characteristic_polynomial() {
        // [[2, 1-j], [1+j, 3]]: trace 5, det 6 - 2 = 4.
        let h = CMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(1.0, -1.0), c(1.0, 1.0), c(3.0, 0.0)]);
        let (vals, vecs) = hermitian_eigen(&h, 1e-10).unwrap();
        let disc = (25.0f64 - 16.0).sqrt();
        assert!((vals[0] - (5.0 + disc) / 2.0).abs() < 1e-12);
        assert!((vals[1] - (5.0 - disc) / 2.0).abs() < 1e-12);
        let back = &vecs
            * CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(2, vals.iter().map(|&v| c(v, 0.0))))
            * vecs.adjoint();
        assert!(max_abs_diff(&back, &h) < 1e-12);
    }

    #[test]
    fn rejects_non_hermitian() {
        let h = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(hermitian_eigen(&h, 1e-10), Err(Error::Domain(_))));
    }

    #[test]
    fn psd_sqrt_reproduces_rank_one() {
        let a = CMatrix::from_column_slice(3, 1, &[c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.5)]);
        let h = &a * a.adjoint();
        let s = psd_sqrt(&h, 1e-10, 1e-10).unwrap();
        assert_eq!(s.ncols(), 1);
        assert!(max_abs_diff(&(&s * s.adjoint()), &h) < 1e-12);
    }

    #[test]
    fn kron_dimensions() {
        let a = CMatrix::<f64>::identity(2, 2);
        let b = CMatrix::<f64>::from_element(3, 1, c(2.0, 0.0));
        let k = kron(&a, &b);
        assert_eq!((k.nrows(), k.ncols()), (6, 2));
        assert_eq!(k[(4, 1)], c(2.0, 0.0));
        assert_eq!(k[(4, 0)], c(0.0, 0.0));
    }
}
