//! Dense complex matrix kernels.
//!
//! Everything here works on `DMatrix<Complex64>`. The two unitary
//! constructions at the bottom carry the `sqrt(2)` estimates that the
//! perturbation pipeline relies on:
//!
//! * `polar_unitary(x)` with `||x - I|| < 1` gives `||u - I|| <= sqrt(2) ||x - I||`;
//! * `projection_exchange_unitary(p, q)` with `||p - q|| < 1` gives
//!   `w p w* = q` and `||w - I|| <= sqrt(2) ||p - q||`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Matrix = DMatrix<C64>;
pub type Vector = DVector<C64>;

pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Numerical thresholds shared by every module.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToleranceProfile {
    /// Threshold for numerical rank and zero decisions.
    pub rank_eps: f64,
    /// Threshold for declaring operator equalities.
    pub eq_eps: f64,
    /// Slack for positivity checks.
    pub psd_eps: f64,
}

impl Default for ToleranceProfile {
    fn default() -> Self {
        Self {
            rank_eps: 1e-9,
            eq_eps: 1e-8,
            psd_eps: 1e-12,
        }
    }
}

impl ToleranceProfile {
    pub fn new(rank_eps: f64, eq_eps: f64, psd_eps: f64) -> Result<Self> {
        let tol = Self {
            rank_eps,
            eq_eps,
            psd_eps,
        };
        tol.validate()?;
        Ok(tol)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rank_eps", self.rank_eps),
            ("eq_eps", self.eq_eps),
            ("psd_eps", self.psd_eps),
        ] {
            if !(v > 0.0 && v < 1e-3) {
                return Err(Error::InvalidInput(format!(
                    "{name} = {v} must lie in (0, 1e-3)"
                )));
            }
        }
        Ok(())
    }
}

pub fn identity(n: usize) -> Matrix {
    Matrix::identity(n, n)
}

pub fn check_finite(x: &Matrix) -> Result<()> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::InvalidInput("empty matrix".into()));
    }
    if x.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput("non-finite matrix entry".into()))
    }
}

pub fn check_square(x: &Matrix) -> Result<usize> {
    if x.nrows() != x.ncols() {
        return Err(Error::Shape {
            expected: (x.nrows(), x.nrows()),
            found: x.shape(),
        });
    }
    Ok(x.nrows())
}

pub fn check_shape(x: &Matrix, n: usize) -> Result<()> {
    if x.shape() != (n, n) {
        return Err(Error::Shape {
            expected: (n, n),
            found: x.shape(),
        });
    }
    Ok(())
}

/// Singular values in descending order.
///
/// Computed from the Hermitian eigenvalues of the smaller Gram matrix: the
/// large values are accurate to machine precision relative to `||x||`, while
/// values below about `1e-8 ||x||` are only resolved to that floor.
pub fn singular_values(x: &Matrix) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    let gram = if x.nrows() < x.ncols() {
        x * x.adjoint()
    } else {
        x.adjoint() * x
    };
    let (values, _) = hermitian_eigen(&gram);
    values.iter().rev().map(|&l| l.max(0.0).sqrt()).collect()
}

/// Largest singular value, without input validation.
pub fn opnorm(x: &Matrix) -> f64 {
    singular_values(x).first().copied().unwrap_or(0.0)
}

/// Orthonormal basis of `{v : ||s v|| <= cut}` together with `||s||`.
///
/// A first Gram eigen-decomposition isolates a small candidate subspace; a
/// second one on `s` restricted to it resolves singular values far below
/// the first pass's floor.
pub fn null_space(s: &Matrix, cut: impl Fn(f64) -> f64) -> (Vec<Vector>, f64) {
    let (values, vectors) = hermitian_eigen(&(s.adjoint() * s));
    let sigma_max = values.last().map_or(0.0, |&l| l.max(0.0).sqrt());
    let threshold = cut(sigma_max);
    let loose = (1e-5 * sigma_max.max(1.0)).max(threshold);
    let candidates: Vec<Vector> = values
        .iter()
        .zip(vectors.column_iter())
        .filter(|(&l, _)| l.max(0.0).sqrt() <= loose)
        .map(|(_, v)| v.into_owned())
        .collect();
    if candidates.is_empty() {
        return (candidates, sigma_max);
    }
    let v = Matrix::from_columns(&candidates);
    let t = s * &v;
    let (mu, w) = hermitian_eigen(&(t.adjoint() * &t));
    let null = mu
        .iter()
        .zip(w.column_iter())
        .filter(|(&l, _)| l.max(0.0).sqrt() <= threshold)
        .map(|(_, c)| &v * c)
        .collect();
    (null, sigma_max)
}

/// Largest singular value of `x`.
pub fn operator_norm(x: &Matrix) -> Result<f64> {
    check_finite(x)?;
    Ok(opnorm(x))
}

/// Unnormalized Frobenius norm.
pub fn frobenius(x: &Matrix) -> f64 {
    x.norm()
}

pub fn hermitian_part(x: &Matrix) -> Matrix {
    (x + x.adjoint()).scale(0.5)
}

/// Eigen-decomposition of the Hermitian part of `h`, eigenvalues ascending.
pub fn hermitian_eigen(h: &Matrix) -> (Vec<f64>, Matrix) {
    let eig = hermitian_part(h).symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Smallest eigenvalue of the Hermitian part.
pub fn min_eigenvalue(h: &Matrix) -> f64 {
    hermitian_eigen(h).0.first().copied().unwrap_or(0.0)
}

/// Applies a real function to the spectrum of the Hermitian part of `h`.
pub fn hermitian_function(h: &Matrix, f: impl Fn(f64) -> C64) -> Matrix {
    let (values, vectors) = hermitian_eigen(h);
    let n = values.len();
    let mut scaled = vectors.clone();
    for (c, &lambda) in values.iter().enumerate() {
        let fz = f(lambda);
        for r in 0..n {
            scaled[(r, c)] *= fz;
        }
    }
    scaled * vectors.adjoint()
}

/// `exp(i h)` for Hermitian `h`.
pub fn exp_i_hermitian(h: &Matrix) -> Matrix {
    hermitian_function(h, |lambda| C64::from_polar(1.0, lambda))
}

/// Residual `||u* u - I||` measured in operator norm.
pub fn unitarity_residual(u: &Matrix) -> f64 {
    let n = u.ncols();
    opnorm(&(u.adjoint() * u - identity(n)))
}

/// Unitary factor of the polar decomposition `x = u |x|`.
///
/// Scaled Newton iteration `x <- (g x + (g x)^{-*}) / 2`. Every iterate is
/// built from `x` by inverses and adjoints, so `u` stays in any *-algebra
/// containing `x`.
pub fn polar_unitary(x: &Matrix, tol: &ToleranceProfile) -> Result<Matrix> {
    check_finite(x)?;
    check_square(x)?;
    let rank_deficient = |sigma_min| Error::RankDeficient { sigma_min };
    let mut inv = x.clone().try_inverse().ok_or(rank_deficient(0.0))?;
    let sigma_min = 1.0 / opnorm(&inv);
    if sigma_min.is_nan() || sigma_min <= tol.rank_eps {
        return Err(rank_deficient(sigma_min));
    }
    let mut y = x.clone();
    let mut scaled = true;
    for _ in 0..100 {
        let g = if scaled { (inv.norm() / y.norm()).sqrt() } else { 1.0 };
        let next = (y.scale(g) + inv.adjoint().unscale(g)).scale(0.5);
        let delta = (&next - &y).norm() / next.norm();
        y = next;
        if !scaled && delta < 1e-14 {
            break;
        }
        if delta < 1e-2 {
            scaled = false;
        }
        inv = y.clone().try_inverse().ok_or(rank_deficient(sigma_min))?;
    }
    Ok(y)
}

/// Orthogonal projection onto the eigenvectors of `(h + h*)/2` with
/// eigenvalue in `[lo, hi]`.
///
/// An eigenvalue within `rank_eps` of either endpoint is reported as a
/// spectral-gap error rather than assigned to a side.
pub fn spectral_projection(h: &Matrix, lo: f64, hi: f64, tol: &ToleranceProfile) -> Result<Matrix> {
    check_finite(h)?;
    let n = check_square(h)?;
    if lo.is_nan() || hi.is_nan() || lo > hi {
        return Err(Error::InvalidInput(format!("empty interval [{lo}, {hi}]")));
    }
    let skew = opnorm(&(h - h.adjoint()));
    if skew > tol.eq_eps * (1.0 + opnorm(h)) {
        return Err(Error::InvalidInput(format!(
            "matrix is not Hermitian (||h - h*|| = {skew:e})"
        )));
    }
    let (values, vectors) = hermitian_eigen(h);
    let mut p = Matrix::zeros(n, n);
    for (c, &lambda) in values.iter().enumerate() {
        for endpoint in [lo, hi] {
            if (lambda - endpoint).abs() <= tol.rank_eps {
                return Err(Error::SpectralGap {
                    eigenvalue: lambda,
                    endpoint,
                });
            }
        }
        if lambda > lo && lambda < hi {
            let v = vectors.column(c);
            p += v * v.adjoint();
        }
    }
    Ok(p)
}

/// Unitary `w` with `w p w* = q`, built as the polar part of
/// `q p + (I - q)(I - p)`.
pub fn projection_exchange_unitary(p: &Matrix, q: &Matrix, tol: &ToleranceProfile) -> Result<Matrix> {
    check_finite(p)?;
    check_finite(q)?;
    let n = check_square(p)?;
    check_shape(q, n)?;
    for (name, e) in [("p", p), ("q", q)] {
        let res = opnorm(&(e * e - e)).max(opnorm(&(e - e.adjoint())));
        if res > tol.eq_eps {
            return Err(Error::InvalidInput(format!(
                "{name} is not a projection (residual {res:e})"
            )));
        }
    }
    let distance = opnorm(&(p - q));
    if distance >= 1.0 {
        return Err(Error::ProjectionsTooFar { distance });
    }
    let id = identity(n);
    let x = q * p + (&id - q) * (&id - p);
    polar_unitary(&x, tol)
}
