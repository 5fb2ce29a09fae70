//! Reference computations for the integration tests. Nothing here calls
//! the crate's numerical kernels.

#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

pub type CMat = DMatrix<C64>;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn gaussian(r: &mut ChaCha20Rng, n: usize, m: usize) -> CMat {
    CMat::from_fn(n, m, |_, _| {
        let re: f64 = r.sample(StandardNormal);
        let im: f64 = r.sample(StandardNormal);
        C64::new(re, im)
    })
}

pub fn eye(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Eigenvalues of a real symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(mut a: DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        let total: f64 = a.iter().map(|x| x * x).sum();
        if off <= 1e-32 * total.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// `[[Re h, -Im h], [Im h, Re h]]`, symmetric when `h` is Hermitian.
pub fn real_embedding(h: &CMat) -> DMatrix<f64> {
    let n = h.nrows();
    DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let z = h[(i % n, j % n)];
        match (i / n, j / n) {
            (0, 0) | (1, 1) => z.re,
            (1, 0) => z.im,
            _ => -z.im,
        }
    })
}

pub fn hermitian_eigenvalues(h: &CMat) -> Vec<f64> {
    let sym = (h + h.adjoint()) * C64::new(0.5, 0.0);
    let ev = jacobi_eigenvalues(real_embedding(&sym));
    // every eigenvalue appears twice in the embedding
    ev.into_iter().step_by(2).collect()
}

pub fn opnorm(x: &CMat) -> f64 {
    let g = x.adjoint() * x;
    hermitian_eigenvalues(&g).last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

pub fn frobenius(x: &CMat) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Gram-Schmidt on the columns of `g`.
pub fn orthonormal_columns(g: &CMat) -> CMat {
    let mut q = CMat::zeros(g.nrows(), g.ncols());
    for j in 0..g.ncols() {
        let mut v = g.column(j).into_owned();
        for _ in 0..2 {
            for k in 0..j {
                let qk = q.column(k).into_owned();
                let c = qk.dotc(&v);
                v -= qk * c;
            }
        }
        let nv = v.norm();
        q.set_column(j, &(v / C64::new(nv, 0.0)));
    }
    q
}

/// Haar unitary from a complex Gaussian matrix.
pub fn haar_unitary(r: &mut ChaCha20Rng, n: usize) -> CMat {
    orthonormal_columns(&gaussian(r, n, n))
}

/// Row-major `vec(x) / sqrt(n)`.
pub fn coords(x: &CMat) -> nalgebra::DVector<C64> {
    let n = x.nrows();
    let s = C64::new(1.0 / (n as f64).sqrt(), 0.0);
    nalgebra::DVector::from_fn(n * n, |k, _| x[(k / n, k % n)] * s)
}

pub fn kron_identity(x: &CMat) -> CMat {
    let n = x.nrows();
    CMat::from_fn(n * n, n * n, |r, c| {
        if r % n == c % n {
            x[(r / n, c / n)]
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// Frobenius distance from `y` to the span of `basis`, from the normal
/// equations of the Gram matrix.
pub fn span_residual(basis: &[CMat], y: &CMat) -> f64 {
    let k = basis.len();
    let inner = |a: &CMat, b: &CMat| a.iter().zip(b.iter()).map(|(p, q)| p.conj() * q).sum::<C64>();
    let gram = CMat::from_fn(k, k, |i, j| inner(&basis[i], &basis[j]));
    let rhs = nalgebra::DVector::from_fn(k, |i, _| inner(&basis[i], y));
    let c = gram.lu().solve(&rhs).expect("basis is independent");
    let mut fit = CMat::zeros(y.nrows(), y.ncols());
    for (b, ci) in basis.iter().zip(c.iter()) {
        fit += b * *ci;
    }
    frobenius(&(y - fit))
}

/// Block projections of `(k, m)` blocks laid out as `I_m (x) M_k`; the
/// leftover dimension is one more block.
pub fn block_ranges(n: usize, blocks: &[(usize, usize)]) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    let mut offset = 0;
    for &(k, m) in blocks {
        out.push((offset, k, m));
        offset += k * m;
    }
    if offset < n {
        out.push((offset, 1, n - offset));
    }
    out
}

/// Trace-preserving projection onto the commutant of `W (⊕ I_m (x) M_k) W*`,
/// which is `W (⊕ M_m (x) I_k) W*`: average each `k x k` sub-block's trace.
pub fn commutant_projection(w: &CMat, blocks: &[(usize, usize, usize)], x: &CMat) -> CMat {
    let n = x.nrows();
    let xp = w.adjoint() * x * w;
    let mut y = CMat::zeros(n, n);
    for &(off, k, m) in blocks {
        for a in 0..m {
            for b in 0..m {
                let mut tr = C64::new(0.0, 0.0);
                for i in 0..k {
                    tr += xp[(off + a * k + i, off + b * k + i)];
                }
                let val = tr / C64::new(k as f64, 0.0);
                for i in 0..k {
                    y[(off + a * k + i, off + b * k + i)] = val;
                }
            }
        }
    }
    w * y * w.adjoint()
}

/// Largest `c` with `a - c b >= 0` by bisection on the smallest eigenvalue.
pub fn psd_ratio(a: &CMat, b: &CMat) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hermitian_eigenvalues(&(a - b * C64::new(hi, 0.0)))[0] >= -1e-13 {
        hi *= 2.0;
        if hi > 1e6 {
            return hi;
        }
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if hermitian_eigenvalues(&(a - b * C64::new(mid, 0.0)))[0] >= -1e-13 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

pub fn rows_to_matrix(rows: &[Vec<[f64; 2]>]) -> CMat {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    CMat::from_fn(n, m, |i, j| C64::new(rows[i][j][0], rows[i][j][1]))
}

/// `exp(i h)` for Hermitian `h` by scaling and squaring a Taylor series.
pub fn exp_i(h: &CMat) -> CMat {
    let n = h.nrows();
    let norm = opnorm(h);
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let a = h * C64::new(0.0, 1.0 / f64::from(1u32 << squarings));
    let mut term = eye(n);
    let mut sum = eye(n);
    for k in 1..30 {
        term = &term * &a / C64::new(k as f64, 0.0);
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

pub fn random_hermitian(r: &mut ChaCha20Rng, n: usize) -> CMat {
    let g = gaussian(r, n, n);
    (&g + g.adjoint()) * C64::new(0.5, 0.0)
}

/// `W (⊕ I_m (x) U_k) W*` with each `U_k` Haar.
pub fn block_haar(r: &mut ChaCha20Rng, w: &CMat, blocks: &[(usize, usize, usize)]) -> CMat {
    let n = w.nrows();
    let mut u = CMat::zeros(n, n);
    for &(off, k, m) in blocks {
        let uk = haar_unitary(r, k);
        for a in 0..m {
            u.view_mut((off + a * k, off + a * k), (k, k)).copy_from(&uk);
        }
    }
    w * u * w.adjoint()
}

/// Orthonormal basis (in `tr(b* a) / n`) of the span of `mats`.
pub fn orthonormalize(mats: &[CMat]) -> Vec<CMat> {
    let mut out: Vec<CMat> = Vec::new();
    for x in mats {
        let n = x.nrows() as f64;
        let mut y = x.clone();
        for _ in 0..2 {
            for b in &out {
                let c = b.iter().zip(y.iter()).map(|(p, q)| p.conj() * q).sum::<C64>() / C64::new(n, 0.0);
                y -= b * c;
            }
        }
        let norm = frobenius(&y) / n.sqrt();
        if norm > 1e-9 {
            out.push(y / C64::new(norm, 0.0));
        }
    }
    out
}

pub fn min_eigenvalue(h: &CMat) -> f64 {
    hermitian_eigenvalues(h)[0]
}
