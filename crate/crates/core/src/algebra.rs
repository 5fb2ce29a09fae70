//! Unital *-subalgebras of `M_n` held as trace-orthonormal bases.
//!
//! The inner product throughout is `<a, b> = tr(b* a) / n`. A matrix `x`
//! is identified with its coordinate vector `vec(x) / sqrt(n)` (row-major),
//! which turns that inner product into the standard one on `C^{n^2}`.
//! The same coordinates serve as the GNS space of the normalized trace.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, check_finite, check_shape, identity, Matrix, ToleranceProfile, Vector, C64, ONE};
use crate::rng;

/// `vec(x) / sqrt(n)` in row-major order.
pub fn to_coords(x: &Matrix) -> Vector {
    let n = x.nrows();
    let scale = 1.0 / (n as f64).sqrt();
    Vector::from_fn(n * x.ncols(), |k, _| x[(k / x.ncols(), k % x.ncols())] * scale)
}

/// Inverse of [`to_coords`] for an `n x n` matrix.
pub fn from_coords(v: &Vector, n: usize) -> Matrix {
    let scale = (n as f64).sqrt();
    Matrix::from_fn(n, n, |i, j| v[i * n + j] * scale)
}

/// Normalized-trace inner product `tr(b* a) / n`.
pub fn trace_inner(a: &Matrix, b: &Matrix) -> C64 {
    let n = a.nrows() as f64;
    b.iter().zip(a.iter()).map(|(bz, az)| bz.conj() * az).sum::<C64>() / n
}

/// Normalized Frobenius norm `sqrt(tr(x* x) / n)`.
pub fn trace_norm2(x: &Matrix) -> f64 {
    x.norm() / (x.nrows() as f64).sqrt()
}

/// Incremental orthonormal span in coordinate space with a rank cut.
#[derive(Clone, Debug)]
struct SpanBuilder {
    vectors: Vec<Vector>,
    rank_eps: f64,
}

impl SpanBuilder {
    fn new(rank_eps: f64) -> Self {
        Self {
            vectors: Vec::new(),
            rank_eps,
        }
    }

    fn residual(&self, v: &Vector) -> Vector {
        let mut r = v.clone();
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for q in &self.vectors {
                let c = q.dotc(&r);
                r.axpy(-c, q, ONE);
            }
        }
        r
    }

    /// Appends the normalized residual of `v` if it exceeds the rank cut.
    /// Returns the index of the new vector.
    fn push(&mut self, v: &Vector) -> Option<usize> {
        let norm = v.norm();
        if norm == 0.0 {
            return None;
        }
        let r = self.residual(v);
        let rn = r.norm();
        if rn > self.rank_eps * norm.max(1.0) {
            self.vectors.push(r.unscale(rn));
            Some(self.vectors.len() - 1)
        } else {
            None
        }
    }
}

/// Orthonormal basis (as coordinate vectors) of the span of `items`,
/// choosing at each step the candidate with the largest remaining residual.
fn pivoted_orthonormalize(items: &[Vector], rank_eps: f64) -> Vec<Vector> {
    let scale = items.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1.0);
    let mut residuals: Vec<Vector> = items.to_vec();
    let mut out: Vec<Vector> = Vec::new();
    loop {
        let best = residuals
            .iter()
            .enumerate()
            .map(|(i, r)| (i, r.norm()))
            .max_by(|a, b| a.1.total_cmp(&b.1));
        let Some((idx, norm)) = best else { break };
        if norm <= rank_eps * scale {
            break;
        }
        let mut q = residuals.swap_remove(idx);
        // re-orthogonalize against the accepted set before normalizing
        for p in &out {
            let c = p.dotc(&q);
            q.axpy(-c, p, ONE);
        }
        let qn = q.norm();
        if qn <= rank_eps * scale {
            continue;
        }
        let q = q.unscale(qn);
        for r in residuals.iter_mut() {
            let c = q.dotc(r);
            r.axpy(-c, &q, ONE);
        }
        out.push(q);
    }
    out
}

/// Largest deviation from the unital *-algebra axioms.
#[derive(Clone, Copy, Debug, Default)]
pub struct AlgebraResiduals {
    pub gram: f64,
    pub unit: f64,
    pub adjoint: f64,
    pub product: f64,
}

impl AlgebraResiduals {
    pub fn max(&self) -> f64 {
        self.gram.max(self.unit).max(self.adjoint).max(self.product)
    }
}

/// A unital *-closed subalgebra of the `n x n` matrices.
#[derive(Clone, Debug)]
pub struct Subalgebra {
    ambient_dim: usize,
    basis: Vec<Matrix>,
    /// `n^2 x dim`, columns are the coordinates of `basis`.
    frame: Matrix,
}

impl Subalgebra {
    fn from_coord_vectors(n: usize, vectors: Vec<Vector>) -> Self {
        let basis = vectors.iter().map(|v| from_coords(v, n)).collect();
        let frame = if vectors.is_empty() {
            Matrix::zeros(n * n, 0)
        } else {
            Matrix::from_columns(&vectors)
        };
        Self {
            ambient_dim: n,
            basis,
            frame,
        }
    }

    /// Orthonormalizes the span of `elements` without checking closure.
    pub fn from_spanning_set(n: usize, elements: &[Matrix], tol: &ToleranceProfile) -> Result<Self> {
        for x in elements {
            check_finite(x)?;
            check_shape(x, n)?;
        }
        let coords: Vec<Vector> = elements.iter().map(to_coords).collect();
        Ok(Self::from_coord_vectors(n, pivoted_orthonormalize(&coords, tol.rank_eps)))
    }

    /// Like [`Self::from_spanning_set`] but rejects spans that are not
    /// unital *-algebras within `eq_eps`.
    pub fn from_basis_checked(n: usize, elements: &[Matrix], tol: &ToleranceProfile) -> Result<Self> {
        let a = Self::from_spanning_set(n, elements, tol)?;
        let res = a.validate();
        if res.max() > tol.eq_eps {
            return Err(Error::NotAnAlgebra(format!("{res:?}")));
        }
        Ok(a)
    }

    pub fn full(n: usize) -> Self {
        let s = (n as f64).sqrt();
        let mut basis = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let mut e = Matrix::zeros(n, n);
                e[(i, j)] = C64::new(s, 0.0);
                basis.push(e);
            }
        }
        Self::from_orthonormal(n, basis)
    }

    pub fn scalars(n: usize) -> Self {
        Self::from_orthonormal(n, vec![identity(n)])
    }

    pub fn diagonal(n: usize) -> Self {
        Self::multimatrix(n, &vec![(1, 1); n]).expect("diagonal shape is valid")
    }

    /// Block-diagonal multimatrix algebra: each `(k, m)` contributes a copy
    /// of `M_k` repeated `m` times along the diagonal (`I_m (x) M_k`).
    /// Any leftover dimension is filled with one scalar block.
    pub fn multimatrix(n: usize, blocks: &[(usize, usize)]) -> Result<Self> {
        let used: usize = blocks.iter().map(|&(k, m)| k * m).sum();
        if blocks.iter().any(|&(k, m)| k == 0 || m == 0) || used > n || n == 0 {
            return Err(Error::InvalidInput(format!(
                "block shape {blocks:?} does not fit in dimension {n}"
            )));
        }
        let mut all: Vec<(usize, usize)> = blocks.to_vec();
        if used < n {
            all.push((1, n - used));
        }
        let mut basis = Vec::new();
        let mut offset = 0;
        for (k, m) in all {
            let s = C64::new((n as f64 / m as f64).sqrt(), 0.0);
            for i in 0..k {
                for j in 0..k {
                    let mut e = Matrix::zeros(n, n);
                    for r in 0..m {
                        e[(offset + r * k + i, offset + r * k + j)] = s;
                    }
                    basis.push(e);
                }
            }
            offset += k * m;
        }
        Ok(Self::from_orthonormal(n, basis))
    }

    fn from_orthonormal(n: usize, basis: Vec<Matrix>) -> Self {
        let frame = Matrix::from_columns(&basis.iter().map(to_coords).collect::<Vec<_>>());
        Self {
            ambient_dim: n,
            basis,
            frame,
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Matrix] {
        &self.basis
    }

    /// Coordinates of the basis as columns of an `n^2 x dim` matrix.
    pub fn frame(&self) -> &Matrix {
        &self.frame
    }

    /// Coefficients of the orthogonal projection of `x` onto the span.
    pub fn coefficients(&self, x: &Matrix) -> Vector {
        self.frame.ad_mul(&to_coords(x))
    }

    pub fn combine(&self, coeffs: &Vector) -> Matrix {
        from_coords(&(&self.frame * coeffs), self.ambient_dim)
    }

    /// Trace-orthogonal projection of `x` onto the span.
    pub fn project(&self, x: &Matrix) -> Matrix {
        self.combine(&self.coefficients(x))
    }

    /// Frobenius distance from `x` to the span.
    pub fn residual(&self, x: &Matrix) -> f64 {
        (x - self.project(x)).norm()
    }

    /// Membership test: `(residual <= eq_eps (1 + ||x||_F), residual)`.
    pub fn contains(&self, x: &Matrix, tol: &ToleranceProfile) -> Result<(bool, f64)> {
        check_finite(x)?;
        check_shape(x, self.ambient_dim)?;
        let r = self.residual(x);
        Ok((r <= tol.eq_eps * (1.0 + x.norm()), r))
    }

    /// Largest residual of `other`'s basis against this span.
    pub fn inclusion_residual(&self, other: &Subalgebra) -> f64 {
        other.basis.iter().map(|b| self.residual(b)).fold(0.0, f64::max)
    }

    pub fn require_includes(&self, other: &Subalgebra, tol: &ToleranceProfile) -> Result<()> {
        if other.ambient_dim != self.ambient_dim {
            return Err(Error::Shape {
                expected: (self.ambient_dim, self.ambient_dim),
                found: (other.ambient_dim, other.ambient_dim),
            });
        }
        let residual = self.inclusion_residual(other);
        if residual > tol.eq_eps * (1.0 + (self.ambient_dim as f64).sqrt()) {
            return Err(Error::NotIncluded { residual });
        }
        Ok(())
    }

    /// Mutual containment residual of two spans.
    pub fn span_distance(&self, other: &Subalgebra) -> f64 {
        self.inclusion_residual(other).max(other.inclusion_residual(self))
    }

    /// `v A v*`; a subalgebra again when `v` is unitary.
    pub fn conjugate(&self, v: &Matrix) -> Self {
        let basis: Vec<Matrix> = self.basis.iter().map(|b| v * b * v.adjoint()).collect();
        Self::from_orthonormal(self.ambient_dim, basis)
    }

    pub fn validate(&self) -> AlgebraResiduals {
        let n = self.ambient_dim;
        let gram = (self.frame.ad_mul(&self.frame) - Matrix::identity(self.dim(), self.dim())).camax();
        let unit = self.residual(&identity(n));
        let adjoint = self
            .basis
            .iter()
            .map(|b| self.residual(&b.adjoint()))
            .fold(0.0, f64::max);
        let mut product: f64 = 0.0;
        for a in &self.basis {
            for b in &self.basis {
                product = product.max(self.residual(&(a * b)));
            }
        }
        AlgebraResiduals {
            gram,
            unit,
            adjoint,
            product,
        }
    }

    /// Element with independent standard complex Gaussian coefficients.
    pub fn random_element<R: Rng + ?Sized>(&self, rng: &mut R) -> Matrix {
        let coeffs = Vector::from_fn(self.dim(), |_, _| rng::complex_gaussian(rng));
        self.combine(&coeffs)
    }

    pub fn random_hermitian<R: Rng + ?Sized>(&self, rng: &mut R) -> Matrix {
        linalg::hermitian_part(&self.random_element(rng))
    }

    /// Haar-distributed unitary of the algebra: the polar part of a
    /// Gaussian element. Gaussian measure on the algebra is invariant
    /// under left multiplication by its unitaries, and the polar part
    /// intertwines that action.
    pub fn haar_unitary<R: Rng + ?Sized>(&self, rng: &mut R, tol: &ToleranceProfile) -> Matrix {
        loop {
            let g = self.random_element(rng);
            if let Ok(u) = linalg::polar_unitary(&g, tol) {
                return u;
            }
        }
    }

    /// `exp(i h)` for a random Hermitian `h` of the algebra scaled by `spread`.
    pub fn sample_unitary(&self, rng_seed: u64, spread: f64) -> Result<Matrix> {
        if !(spread > 0.0 && spread.is_finite()) {
            return Err(Error::InvalidInput(format!("spread must be positive, got {spread}")));
        }
        let mut r = rng::seeded(rng_seed);
        let h = self.random_hermitian(&mut r).scale(spread);
        Ok(linalg::exp_i_hermitian(&h))
    }
}

/// Smallest unital *-algebra containing `generators`.
///
/// Starts from `span{I, G, G*}` and repeatedly appends left products with
/// an orthonormal basis of `span{G, G*}` until no new direction survives
/// the rank cut. Words in a *-closed generating set span a *-algebra, and
/// each new word is a generator times a shorter one.
pub fn generate_algebra(n: usize, generators: &[Matrix], tol: &ToleranceProfile) -> Result<Subalgebra> {
    if n == 0 {
        return Err(Error::InvalidInput("ambient dimension must be positive".into()));
    }
    for g in generators {
        check_finite(g)?;
        check_shape(g, n)?;
    }
    let mut gen_coords = Vec::with_capacity(2 * generators.len());
    for g in generators {
        gen_coords.push(to_coords(g));
        gen_coords.push(to_coords(&g.adjoint()));
    }
    let gens: Vec<Matrix> = pivoted_orthonormalize(&gen_coords, tol.rank_eps)
        .iter()
        .map(|v| from_coords(v, n))
        .collect();

    let mut span = SpanBuilder::new(tol.rank_eps);
    let mut frontier: Vec<usize> = Vec::new();
    frontier.extend(span.push(&to_coords(&identity(n))));
    for g in &gens {
        frontier.extend(span.push(&to_coords(g)));
    }
    let mut passes = 0;
    while !frontier.is_empty() && passes < n * n {
        let current: Vec<Matrix> = frontier.iter().map(|&i| from_coords(&span.vectors[i], n)).collect();
        frontier.clear();
        for f in &current {
            for g in &gens {
                frontier.extend(span.push(&to_coords(&(g * f))));
            }
        }
        passes += 1;
    }
    Ok(Subalgebra::from_coord_vectors(n, span.vectors))
}

/// `{x in L : x a = a x for all a in A}`.
///
/// Null space of the stacked commutator maps `c -> [b_i, sum_k c_k l_k]`
/// over `A`'s basis, expressed in `L`'s coordinates.
pub fn relative_commutant(a: &Subalgebra, l: &Subalgebra, tol: &ToleranceProfile) -> Result<Subalgebra> {
    l.require_includes(a, tol)?;
    let n = l.ambient_dim();
    let n2 = n * n;
    let rows = (a.dim() * n2).max(l.dim());
    let mut stacked = Matrix::zeros(rows, l.dim());
    for (k, lk) in l.basis().iter().enumerate() {
        for (i, b) in a.basis().iter().enumerate() {
            let comm = to_coords(&(b * lk - lk * b));
            stacked.view_mut((i * n2, k), (n2, 1)).copy_from(&comm);
        }
    }
    let (null, _) = linalg::null_space(&stacked, |sigma_max| tol.rank_eps * sigma_max.max(1.0));
    let vectors: Vec<Vector> = null.iter().map(|c| l.frame() * c).collect();
    Ok(Subalgebra::from_coord_vectors(n, vectors))
}

/// `M_2(L)`: `2n x 2n` matrices whose four `n x n` blocks lie in `L`.
pub fn amplify_2x2(l: &Subalgebra) -> Subalgebra {
    let n = l.ambient_dim();
    let s = C64::new(2f64.sqrt(), 0.0);
    let mut basis = Vec::with_capacity(4 * l.dim());
    for r in 0..2 {
        for c in 0..2 {
            for b in l.basis() {
                let mut e: Matrix = DMatrix::zeros(2 * n, 2 * n);
                e.view_mut((r * n, c * n), (n, n)).copy_from(&(b * s));
                basis.push(e);
            }
        }
    }
    Subalgebra::from_orthonormal(2 * n, basis)
}

/// Max commutator `||[b, x]||_F` over the basis of `a`.
pub fn commutator_residual(a: &Subalgebra, x: &Matrix) -> f64 {
    a.basis().iter().map(|b| (b * x - x * b).norm()).fold(0.0, f64::max)
}
