//! Conditional expectations onto subalgebras and the Pimsner–Popa constant.

use std::fmt;

use rand::Rng;

use crate::algebra::{from_coords, to_coords, trace_norm2, Subalgebra};
use crate::error::{Error, Result};
use crate::linalg::{self, hermitian_eigen, identity, opnorm, Matrix, ToleranceProfile, Vector, C64, ONE};
use crate::rng;

/// Linear map determined by its values on an orthonormal basis of `domain`.
#[derive(Clone, Debug)]
pub struct BasisMap {
    domain: Subalgebra,
    values: Vec<Matrix>,
    /// columns are the coordinates of `values`
    value_frame: Matrix,
}

impl BasisMap {
    pub fn new(domain: Subalgebra, values: Vec<Matrix>) -> Result<Self> {
        if values.len() != domain.dim() {
            return Err(Error::InvalidInput(format!(
                "{} values for a basis of size {}",
                values.len(),
                domain.dim()
            )));
        }
        let m = values.first().map(|v| v.nrows()).unwrap_or(domain.ambient_dim());
        for v in &values {
            linalg::check_finite(v)?;
            linalg::check_shape(v, m)?;
        }
        let value_frame = if values.is_empty() {
            Matrix::zeros(m * m, 0)
        } else {
            Matrix::from_columns(&values.iter().map(to_coords).collect::<Vec<_>>())
        };
        Ok(Self {
            domain,
            values,
            value_frame,
        })
    }

    pub fn from_fn(domain: Subalgebra, f: impl Fn(&Matrix) -> Matrix) -> Result<Self> {
        let values = domain.basis().iter().map(f).collect();
        Self::new(domain, values)
    }

    pub fn domain(&self) -> &Subalgebra {
        &self.domain
    }

    pub fn values(&self) -> &[Matrix] {
        &self.values
    }

    pub fn target_dim(&self) -> usize {
        (self.value_frame.nrows() as f64).sqrt().round() as usize
    }

    /// Applies the linear extension to the domain component of `x`.
    pub fn apply_unchecked(&self, x: &Matrix) -> Matrix {
        let coeffs = self.domain.coefficients(x);
        self.apply_coefficients(&coeffs)
    }

    pub fn apply_coefficients(&self, coeffs: &Vector) -> Matrix {
        from_coords(&(&self.value_frame * coeffs), self.target_dim())
    }

    /// Applies the map, rejecting `x` outside the domain span.
    pub fn apply(&self, x: &Matrix, tol: &ToleranceProfile) -> Result<Matrix> {
        let (inside, residual) = self.domain.contains(x, tol)?;
        if !inside {
            return Err(Error::OutsideDomain { residual });
        }
        Ok(self.apply_unchecked(x))
    }
}

/// An idempotent positive unital bimodular map onto `range`.
#[derive(Clone, Debug)]
pub struct ConditionalExpectation {
    map: BasisMap,
    range: Subalgebra,
}

impl ConditionalExpectation {
    /// Packages a map without checking the expectation axioms; see
    /// [`verify_expectation`].
    pub fn from_map(map: BasisMap, range: Subalgebra) -> Self {
        Self { map, range }
    }

    pub fn domain(&self) -> &Subalgebra {
        self.map.domain()
    }

    pub fn range(&self) -> &Subalgebra {
        &self.range
    }

    pub fn map(&self) -> &BasisMap {
        &self.map
    }

    pub fn apply(&self, x: &Matrix, tol: &ToleranceProfile) -> Result<Matrix> {
        self.map.apply(x, tol)
    }

    pub fn apply_unchecked(&self, x: &Matrix) -> Matrix {
        self.map.apply_unchecked(x)
    }
}

/// Trace-preserving expectation of `L` onto `A`: the orthogonal projection
/// for the normalized-trace inner product.
pub fn trace_expectation(l: &Subalgebra, a: &Subalgebra, tol: &ToleranceProfile) -> Result<ConditionalExpectation> {
    l.require_includes(a, tol)?;
    let map = BasisMap::from_fn(l.clone(), |b| a.project(b))?;
    Ok(ConditionalExpectation::from_map(map, a.clone()))
}

/// Convenience wrapper for [`ConditionalExpectation::apply`].
pub fn apply(e: &ConditionalExpectation, x: &Matrix, tol: &ToleranceProfile) -> Result<Matrix> {
    e.apply(x, tol)
}

/// Relative eigenvalue resolution of the Hermitian eigensolver.
const NOISE_FLOOR: f64 = 1e3 * f64::EPSILON;

/// Largest `c >= 0` with `E(x*x) - c x*x` positive semidefinite, or `None`
/// for `x = 0`. Returns 0 when `x*x` has weight where `E(x*x)` vanishes to
/// working precision.
pub fn pp_ratio(e: &ConditionalExpectation, x: &Matrix, tol: &ToleranceProfile) -> Option<f64> {
    let b = x.adjoint() * x;
    let b_norm = opnorm(&b);
    if b_norm <= f64::MIN_POSITIVE {
        return None;
    }
    let a = linalg::hermitian_part(&e.apply_unchecked(&b));
    let (alpha, v) = hermitian_eigen(&a);
    let a_max = alpha.iter().fold(0.0f64, |m, z| m.max(z.abs()));
    if alpha.first().copied().unwrap_or(0.0) < -tol.psd_eps * a_max.max(1.0) {
        return Some(0.0);
    }
    // Only eigenvalues at the eigensolver's noise floor count as kernel. A
    // small but resolved eigenvalue is a genuine direction, and cutting it
    // at rank_eps would report 0 for constants that are O(1).
    let floor = NOISE_FLOOR * a_max.max(b_norm);
    let (range_idx, kernel_idx): (Vec<usize>, Vec<usize>) = (0..alpha.len()).partition(|&i| alpha[i] > floor);
    if !kernel_idx.is_empty() {
        let v0 = v.select_columns(&kernel_idx);
        let leak = opnorm(&(v0.adjoint() * &b * &v0));
        // any admissible c would be at most floor / leak < 1e-3
        if leak > 1e3 * floor {
            return Some(0.0);
        }
    }
    if range_idx.is_empty() {
        return Some(0.0);
    }
    let vr = v.select_columns(&range_idx);
    let inv_sqrt: Vec<f64> = range_idx.iter().map(|&i| 1.0 / alpha[i].sqrt()).collect();
    let mut scaled = vr.adjoint() * &b * &vr;
    for r in 0..scaled.nrows() {
        for c in 0..scaled.ncols() {
            scaled[(r, c)] *= inv_sqrt[r] * inv_sqrt[c];
        }
    }
    let lambda = hermitian_eigen(&scaled).0.last().copied().unwrap_or(0.0);
    if lambda <= 0.0 {
        return None;
    }
    Some(1.0 / lambda)
}

#[derive(Clone, Debug)]
pub struct PpConstant {
    /// Certified upper bound on the best constant.
    pub c_hi: f64,
    /// Element attaining `c_hi`.
    pub witness: Matrix,
}

impl PpConstant {
    /// Lower bound on the probabilistic index, `1 / c_hi`.
    pub fn index_lo(&self) -> f64 {
        1.0 / self.c_hi
    }
}

fn structured_candidates(domain: &Subalgebra) -> Vec<Matrix> {
    let m = domain.ambient_dim();
    let mut out: Vec<Matrix> = domain.basis().to_vec();
    let mut vectors: Vec<Vector> = Vec::new();
    for i in 0..m {
        for j in 0..m {
            let mut e = Matrix::zeros(m, m);
            e[(i, j)] = ONE;
            out.push(domain.project(&e));
        }
        vectors.push(Vector::from_fn(m, |k, _| if k == i { ONE } else { C64::new(0.0, 0.0) }));
        for j in (i + 1)..m {
            for phase in [ONE, C64::new(0.0, 1.0)] {
                vectors.push(Vector::from_fn(m, |k, _| {
                    if k == i {
                        ONE
                    } else if k == j {
                        phase
                    } else {
                        C64::new(0.0, 0.0)
                    }
                }));
            }
        }
    }
    vectors.push(Vector::from_element(m, ONE));
    for v in vectors {
        let v = v.normalize();
        out.push(domain.project(&(&v * v.adjoint())));
    }
    out
}

fn random_rank_one<R: Rng + ?Sized>(domain: &Subalgebra, rng: &mut R) -> Matrix {
    let m = domain.ambient_dim();
    let v = Vector::from_fn(m, |_, _| rng::complex_gaussian(rng)).normalize();
    domain.project(&(&v * v.adjoint()))
}

/// Upper bound on the Pimsner–Popa constant of `e`.
///
/// Minimizes [`pp_ratio`] over the domain basis, projected matrix units and
/// rank-one projections, then spends `budget` iterations on random
/// candidates followed by a local random-direction descent.
pub fn pp_constant(
    e: &ConditionalExpectation,
    budget: usize,
    rng_seed: u64,
    tol: &ToleranceProfile,
) -> Result<PpConstant> {
    if budget == 0 {
        return Err(Error::InvalidInput("budget must be at least 1".into()));
    }
    let domain = e.domain();
    let mut rng = rng::seeded(rng_seed);
    let mut best: Option<(f64, Matrix)> = None;
    let consider = |x: Matrix, best: &mut Option<(f64, Matrix)>| -> bool {
        match pp_ratio(e, &x, tol) {
            Some(c) if best.as_ref().is_none_or(|(b, _)| c < *b) => {
                *best = Some((c, x));
                true
            }
            _ => false,
        }
    };
    for x in structured_candidates(domain) {
        consider(x, &mut best);
    }
    let random_rounds = budget.div_ceil(2);
    for i in 0..random_rounds {
        let x = if i % 2 == 0 {
            domain.random_element(&mut rng)
        } else {
            random_rank_one(domain, &mut rng)
        };
        consider(x, &mut best);
    }
    let mut step = 0.3;
    for _ in random_rounds..budget {
        let Some((_, current)) = best.clone() else { break };
        let dir = domain.random_element(&mut rng);
        let scale = trace_norm2(&current) / trace_norm2(&dir).max(f64::MIN_POSITIVE);
        let trial = &current + dir.scale(step * scale);
        if consider(trial, &mut best) {
            step = (step * 1.5).min(1.0);
        } else {
            step = (step * 0.5).max(1e-6);
        }
    }
    let (c_hi, witness) = best.unwrap_or((0.0, Matrix::zeros(domain.ambient_dim(), domain.ambient_dim())));
    Ok(PpConstant { c_hi, witness })
}

/// Largest residual per expectation axiom over a sample set.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExpectationReport {
    pub idempotence: f64,
    pub unitality: f64,
    pub range_containment: f64,
    pub range_fixing: f64,
    pub bimodularity: f64,
    pub positivity: f64,
    pub passed: bool,
}

impl ExpectationReport {
    pub fn entries(&self) -> [(&'static str, f64); 6] {
        [
            ("idempotence", self.idempotence),
            ("unitality", self.unitality),
            ("range_containment", self.range_containment),
            ("range_fixing", self.range_fixing),
            ("bimodularity", self.bimodularity),
            ("positivity", self.positivity),
        ]
    }

    pub fn max_residual(&self) -> f64 {
        self.entries().iter().map(|(_, v)| *v).fold(0.0, f64::max)
    }
}

impl fmt::Display for ExpectationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.entries() {
            writeln!(f, "{k} = {v:e}")?;
        }
        writeln!(f, "verdict = {}", if self.passed { "pass" } else { "fail" })
    }
}

fn unit_sample<R: Rng + ?Sized>(a: &Subalgebra, rng: &mut R) -> Matrix {
    let x = a.random_element(rng);
    let norm = trace_norm2(&x);
    if norm > 0.0 {
        x.unscale(norm)
    } else {
        x
    }
}

/// Measures every [`ConditionalExpectation`] axiom. Positivity is the
/// negative part of the smallest eigenvalue of `E(x*x)` relative to its
/// norm and is judged against `psd_eps`; the rest against `eq_eps`.
pub fn verify_expectation(
    e: &ConditionalExpectation,
    samples: usize,
    rng_seed: u64,
    tol: &ToleranceProfile,
) -> ExpectationReport {
    let domain = e.domain();
    let range = e.range();
    let mut rng = rng::seeded(rng_seed);
    let mut rep = ExpectationReport::default();

    for b in domain.basis() {
        let eb = e.apply_unchecked(b);
        let eeb = e.apply_unchecked(&eb);
        rep.idempotence = rep.idempotence.max((&eeb - &eb).norm());
        rep.range_containment = rep.range_containment.max(range.residual(&eb));
    }
    let id = identity(domain.ambient_dim());
    rep.unitality = (e.apply_unchecked(&id) - &id).norm();
    for r in range.basis() {
        rep.range_fixing = rep.range_fixing.max((e.apply_unchecked(r) - r).norm());
    }
    for _ in 0..samples {
        let x = unit_sample(domain, &mut rng);
        let r1 = unit_sample(range, &mut rng);
        let r2 = unit_sample(range, &mut rng);
        let lhs = e.apply_unchecked(&(&r1 * &x * &r2));
        let rhs = &r1 * e.apply_unchecked(&x) * &r2;
        rep.bimodularity = rep.bimodularity.max((lhs - rhs).norm());

        let exx = e.apply_unchecked(&(x.adjoint() * &x));
        let lam = linalg::min_eigenvalue(&exx);
        let rel = (-lam).max(0.0) / opnorm(&exx).max(1.0);
        rep.positivity = rep.positivity.max(rel);
    }
    rep.passed = rep.idempotence <= tol.eq_eps
        && rep.unitality <= tol.eq_eps
        && rep.range_containment <= tol.eq_eps
        && rep.range_fixing <= tol.eq_eps
        && rep.bimodularity <= tol.eq_eps
        && rep.positivity <= tol.psd_eps;
    rep
}
