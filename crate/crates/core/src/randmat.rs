//! Seeded random-matrix samplers: complex Gaussian matrices, Wishart
//! log-determinants, extreme eigenvalues, channel outputs and singular values.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen, SVD};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;

/// Relative threshold below which singular values are reported as zero.
pub const SINGULAR_CLAMP: f64 = 1e-12;

/// A reproducible random stream: `(seed, stream_index)` fully determines the
/// draws, and distinct indices give independent ChaCha streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_index: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_index: u64) -> Self {
        RngStream { seed, stream_index }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_index);
        rng
    }
}

/// Singular values in descending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularSpectrum {
    values: Vec<f64>,
}

impl SingularSpectrum {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn squared(&self) -> Vec<f64> {
        self.values.iter().map(|s| s * s).collect()
    }
}

fn check_dims(rows: usize, cols: usize) -> Result<()> {
    if rows == 0 || cols == 0 {
        return Err(Error::dimension(format!(
            "matrix dimensions must be >= 1, got {rows}x{cols}"
        )));
    }
    Ok(())
}

/// One CN(0,1) scalar: real and imaginary parts are N(0, 1/2).
pub fn sample_cn<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// A `rows x cols` matrix of i.i.d. CN(0,1) entries, filled column by column.
pub fn sample_cn_matrix<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    rng: &mut R,
) -> Result<ComplexMatrix> {
    check_dims(rows, cols)?;
    Ok(ComplexMatrix::from_fn(rows, cols, |_, _| sample_cn(rng)))
}

/// `ln det(A)` of a Hermitian positive-definite matrix via its Cholesky factor.
pub fn hermitian_logdet(a: &ComplexMatrix) -> Result<f64> {
    if a.nrows() != a.ncols() {
        return Err(Error::shape("log-determinant needs a square matrix"));
    }
    let chol = Cholesky::new(a.clone())
        .ok_or_else(|| Error::domain("matrix is not positive definite"))?;
    let l = chol.l_dirty();
    Ok(2.0 * (0..a.nrows()).map(|i| l[(i, i)].re.ln()).sum::<f64>())
}

/// One draw of `ln det(H H^H)` with `H` an `n_t x n_r` CN(0,1) matrix.
pub fn wishart_logdet<R: Rng + ?Sized>(n_t: usize, n_r: usize, rng: &mut R) -> Result<f64> {
    check_dims(n_t, n_r)?;
    if n_t > n_r {
        return Err(Error::dimension(format!(
            "H H^H is singular unless n_r >= n_t (got n_t={n_t}, n_r={n_r})"
        )));
    }
    let h = sample_cn_matrix(n_t, n_r, rng)?;
    if n_t == 1 {
        return Ok(h.norm_squared().ln());
    }
    hermitian_logdet(&(&h * h.adjoint()))
}

/// Eigenvalues of the smaller Gram matrix of `m` (`m m^H` or `m^H m`),
/// descending and clipped at zero.
pub fn gram_eigenvalues(m: &ComplexMatrix) -> Vec<f64> {
    let gram = if m.nrows() <= m.ncols() {
        m * m.adjoint()
    } else {
        m.adjoint() * m
    };
    let mut ev: Vec<f64> = if gram.nrows() == 1 {
        vec![gram[(0, 0)].re]
    } else {
        SymmetricEigen::new(gram).eigenvalues.iter().copied().collect()
    };
    for v in ev.iter_mut() {
        *v = v.max(0.0);
    }
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Largest eigenvalue of `Q^H Q` for a fresh `rows x cols` CN(0,1) matrix `Q`.
pub fn lambda1<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Result<f64> {
    let q = sample_cn_matrix(rows, cols, rng)?;
    if rows == 1 || cols == 1 {
        return Ok(q.norm_squared());
    }
    Ok(gram_eigenvalues(&q)[0])
}

/// `Y = X H + W` with fresh `H` (`n_t x n_r`) and `W` (`T x n_r`).
pub fn channel_output<R: Rng + ?Sized>(
    x: &ComplexMatrix,
    n_r: usize,
    rng: &mut R,
) -> Result<ComplexMatrix> {
    check_dims(x.nrows(), x.ncols())
        .map_err(|_| Error::shape("input matrix X must be at least 1x1"))?;
    if n_r == 0 {
        return Err(Error::shape("n_r must be >= 1"));
    }
    let h = sample_cn_matrix(x.ncols(), n_r, rng)?;
    let w = sample_cn_matrix(x.nrows(), n_r, rng)?;
    Ok(x * h + w)
}

/// Singular values of `m`, descending; values below `1e-12 * sigma_1` become 0.
pub fn singular_values(m: &ComplexMatrix) -> SingularSpectrum {
    if m.is_empty() {
        return SingularSpectrum { values: Vec::new() };
    }
    let mut values: Vec<f64> = SVD::new(m.clone(), false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    values.sort_by(|a, b| b.total_cmp(a));
    let cut = values[0] * SINGULAR_CLAMP;
    for v in values.iter_mut() {
        if *v < cut || *v < 0.0 {
            *v = 0.0;
        }
    }
    SingularSpectrum { values }
}

/// A Haar-distributed `n x n` unitary matrix (QR of a Gaussian matrix with
/// the phases of `R`'s diagonal folded back into `Q`).
pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<ComplexMatrix> {
    let g = sample_cn_matrix(n, n, rng)?;
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    Ok(q)
}

/// First `cols` columns of a Haar unitary: a `rows x cols` matrix with
/// orthonormal columns.
pub fn random_truncated_unitary<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    rng: &mut R,
) -> Result<ComplexMatrix> {
    check_dims(rows, cols)?;
    if cols > rows {
        return Err(Error::dimension("truncated unitary needs cols <= rows"));
    }
    Ok(random_unitary(rows, rng)?.columns(0, cols).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::{sample_moments, McConfig, Moments};
    use crate::specfun::{digamma, trigamma};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn same_stream_same_draws() {
        let a = sample_cn_matrix(2, 2, &mut RngStream::new(7, 0).rng()).unwrap();
        let b = sample_cn_matrix(2, 2, &mut RngStream::new(7, 0).rng()).unwrap();
        assert_eq!(a, b);
        let other = sample_cn_matrix(2, 2, &mut RngStream::new(7, 1).rng()).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn cn_component_variances() {
        let mut rng = RngStream::new(11, 0).rng();
        let mut abs2 = Moments::new();
        let mut re = Moments::new();
        let mut im = Moments::new();
        for _ in 0..1_000_000 {
            let z = sample_cn(&mut rng);
            abs2.push(z.norm_sqr());
            re.push(z.re);
            im.push(z.im);
        }
        assert!((abs2.mean() - 1.0).abs() < 0.01);
        assert!((re.variance() - 0.5).abs() < 0.01);
        assert!((im.variance() - 0.5).abs() < 0.01);
    }

    #[test]
    fn zero_dimension_rejected() {
        let mut rng = RngStream::new(1, 0).rng();
        assert!(sample_cn_matrix(0, 2, &mut rng).is_err());
        assert!(wishart_logdet(3, 2, &mut rng).is_err());
    }

    #[test]
    fn wishart_logdet_moments() {
        let cfg = McConfig::new(200_000, 3).with_workers(4);
        for (n_t, n_r) in [(1usize, 1usize), (2, 2), (2, 4)] {
            let m = sample_moments(&cfg, |rng| wishart_logdet(n_t, n_r, rng)).unwrap();
            let mean: f64 = (0..n_t).map(|i| digamma((n_r - i) as f64).unwrap()).sum();
            let var: f64 = (0..n_t).map(|i| trigamma((n_r - i) as f64).unwrap()).sum();
            assert!((m.mean() - mean).abs() < 4.0 * m.stderr_mean(), "{n_t}x{n_r} mean");
            assert!((m.variance() - var).abs() < 4.0 * m.stderr_variance(), "{n_t}x{n_r} var");
        }
    }

    #[test]
    fn lambda1_bounds() {
        let mut rng = RngStream::new(5, 0).rng();
        let mut one = Moments::new();
        let mut four_two = Moments::new();
        for _ in 0..100_000 {
            let v = lambda1(1, 1, &mut rng).unwrap();
            assert!(v >= 0.0);
            one.push(v);
            four_two.push(lambda1(4, 2, &mut rng).unwrap());
        }
        assert!((one.mean() - 1.0).abs() < 3.0 * one.stderr_mean());
        assert!(four_two.mean() <= 8.0);
    }

    #[test]
    fn channel_output_shapes_and_energy() {
        let mut rng = RngStream::new(9, 0).rng();
        let x = ComplexMatrix::zeros(8, 2);
        let y = channel_output(&x, 2, &mut rng).unwrap();
        assert_eq!((y.nrows(), y.ncols()), (8, 2));

        // ‖X‖² = Tρ with T=4, ρ=3, n_r=2: E‖Y‖² = Tρ n_r + T n_r = 32.
        let t = 4;
        let rho = 3.0;
        let mut x = ComplexMatrix::zeros(t, 1);
        x[(0, 0)] = c((t as f64 * rho).sqrt());
        let mut m = Moments::new();
        for _ in 0..200_000 {
            m.push(channel_output(&x, 2, &mut rng).unwrap().norm_squared());
        }
        assert!((m.mean() - 32.0).abs() < 3.0 * m.stderr_mean());
    }

    #[test]
    fn singular_values_simple() {
        let id = ComplexMatrix::identity(2, 2);
        assert_eq!(singular_values(&id).values(), &[1.0, 1.0]);
        let mut d = ComplexMatrix::zeros(2, 2);
        d[(0, 0)] = c(3.0);
        let s = singular_values(&d);
        assert!((s.values()[0] - 3.0).abs() < 1e-14);
        assert_eq!(s.values()[1], 0.0);
    }

    #[test]
    fn singular_values_match_gram_characteristic_polynomial() {
        let mut rng = RngStream::new(21, 0).rng();
        for _ in 0..50 {
            let m = sample_cn_matrix(3, 2, &mut rng).unwrap();
            let g = m.adjoint() * &m;
            // roots of x² − tr x + det for the 2x2 Hermitian Gram matrix
            let tr = g[(0, 0)].re + g[(1, 1)].re;
            let det = g[(0, 0)].re * g[(1, 1)].re - g[(0, 1)].norm_sqr();
            let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
            let expect = [((tr + disc) / 2.0).sqrt(), ((tr - disc) / 2.0).max(0.0).sqrt()];
            let s = singular_values(&m);
            for k in 0..2 {
                assert!((s.values()[k] - expect[k]).abs() < 1e-9);
            }
            let sum: f64 = s.squared().iter().sum();
            assert!((sum / m.norm_squared() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn unitary_is_unitary() {
        let mut rng = RngStream::new(2, 0).rng();
        let u = random_unitary(4, &mut rng).unwrap();
        let e = &u.adjoint() * &u - ComplexMatrix::identity(4, 4);
        assert!(e.norm() < 1e-12);
        let v = random_truncated_unitary(5, 2, &mut rng).unwrap();
        assert!((v.adjoint() * &v - ComplexMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn logdet_matches_product_of_eigenvalues() {
        let mut rng = RngStream::new(4, 0).rng();
        let h = sample_cn_matrix(3, 5, &mut rng).unwrap();
        let gram = &h * h.adjoint();
        let via_eig: f64 = gram_eigenvalues(&h).iter().map(|v| v.ln()).sum();
        assert!((hermitian_logdet(&gram).unwrap() - via_eig).abs() < 1e-10);
    }
}
