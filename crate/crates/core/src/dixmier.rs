//! Haar averaging over the unitary group of a subalgebra.
//!
//! `Ad(u)` is unitary on the Frobenius space, so `int u x u* du` is the
//! orthogonal projection of `x` onto the fixed space, which is the relative
//! commutant `A' ∩ L`. The average lies in the closed convex hull of the
//! orbit `{u x u*}`; [`AverageCertificate::hull_gap`] measures how close a
//! finite sample of the orbit comes to it.

use std::fmt;

use nalgebra::DVector;

use crate::algebra::{commutator_residual, relative_commutant, Subalgebra};
use crate::error::{Error, Result};
use crate::hull::min_norm_point;
use crate::linalg::{opnorm, Matrix, ToleranceProfile};
use crate::rng;

#[derive(Clone, Copy, Debug)]
pub struct HullOptions {
    pub points: usize,
    pub seed: u64,
    pub max_iter: usize,
}

impl Default for HullOptions {
    fn default() -> Self {
        Self {
            points: 200,
            seed: 0,
            max_iter: 2000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AverageCertificate {
    pub input: Matrix,
    pub output: Matrix,
    /// Max `||[b, output]||_F` over the basis of the averaging algebra.
    pub commutant_residual: f64,
    /// Frobenius distance from `output` to the convex hull of a Haar sample
    /// of the orbit, when requested.
    pub hull_gap: Option<f64>,
}

fn real_embedding(x: &Matrix) -> DVector<f64> {
    let mut v = DVector::zeros(2 * x.len());
    for (k, z) in x.iter().enumerate() {
        v[2 * k] = z.re;
        v[2 * k + 1] = z.im;
    }
    v
}

/// Distance from `target` to the convex hull of `points`, all in Frobenius norm.
pub fn empirical_hull_gap(points: &[Matrix], target: &Matrix, max_iter: usize) -> f64 {
    let shifted: Vec<DVector<f64>> = points.iter().map(|p| real_embedding(&(p - target))).collect();
    min_norm_point(&shifted, max_iter).norm()
}

/// Sampled orbit `{u x u*}` under Haar-distributed unitaries of `a`.
pub fn sample_orbit(a: &Subalgebra, x: &Matrix, count: usize, seed: u64, tol: &ToleranceProfile) -> Vec<Matrix> {
    let mut r = rng::seeded(seed);
    (0..count)
        .map(|_| {
            let u = a.haar_unitary(&mut r, tol);
            &u * x * u.adjoint()
        })
        .collect()
}

/// Average over `a`'s unitary group given its precomputed commutant in `L`.
pub fn average_into(
    a: &Subalgebra,
    commutant: &Subalgebra,
    x: &Matrix,
    hull: Option<&HullOptions>,
    tol: &ToleranceProfile,
) -> AverageCertificate {
    let output = commutant.project(x);
    let commutant_residual = commutator_residual(a, &output);
    let hull_gap = hull.map(|h| {
        let orbit = sample_orbit(a, x, h.points, h.seed, tol);
        empirical_hull_gap(&orbit, &output, h.max_iter)
    });
    AverageCertificate {
        input: x.clone(),
        output,
        commutant_residual,
        hull_gap,
    }
}

/// Haar average of `x` over the unitaries of `a`, computed as the
/// trace-orthogonal projection onto `a' ∩ L`.
pub fn haar_average(
    a: &Subalgebra,
    l: &Subalgebra,
    x: &Matrix,
    hull: Option<&HullOptions>,
    tol: &ToleranceProfile,
) -> Result<AverageCertificate> {
    let (inside, residual) = l.contains(x, tol)?;
    if !inside {
        return Err(Error::OutsideDomain { residual });
    }
    let commutant = relative_commutant(a, l, tol)?;
    Ok(average_into(a, &commutant, x, hull, tol))
}

/// Max over sampled unitaries `u` of `a` of `||u x - x u||`; a lower
/// estimate of the norm of `ad(x)` on `a`.
pub fn ad_norm_bound(a: &Subalgebra, x: &Matrix, samples: usize, rng_seed: u64, tol: &ToleranceProfile) -> Result<f64> {
    if samples == 0 {
        return Err(Error::InvalidInput("samples must be at least 1".into()));
    }
    crate::linalg::check_finite(x)?;
    crate::linalg::check_shape(x, a.ambient_dim())?;
    let mut r = rng::seeded(rng_seed);
    Ok((0..samples)
        .map(|_| {
            let u = a.haar_unitary(&mut r, tol);
            opnorm(&(&u * x - x * &u))
        })
        .fold(0.0, f64::max))
}

#[derive(Clone, Debug, PartialEq)]
pub struct NearInclusionReport {
    pub samples: usize,
    /// Largest distance of an averaged element from `N' ∩ L`, combining the
    /// commutator with `N`'s basis and the residual against `L`.
    pub commutant_residual: f64,
    /// Largest `||x - y||`.
    pub max_distance: f64,
    /// `2 gamma_hi`.
    pub bound: f64,
    pub passed: bool,
}

impl fmt::Display for NearInclusionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "samples = {}", self.samples)?;
        writeln!(f, "commutant_residual = {:e}", self.commutant_residual)?;
        writeln!(f, "max_distance = {:e}", self.max_distance)?;
        writeln!(f, "bound = {:e}", self.bound)?;
        writeln!(f, "verdict = {}", if self.passed { "pass" } else { "fail" })
    }
}

/// Checks `M' ∩ L ⊆_{2 gamma} N' ∩ L` on random unit-norm elements of
/// `M' ∩ L`, where `gamma_hi` certifies `N ⊆_gamma M`.
pub fn check_commutant_near_inclusion(
    n: &Subalgebra,
    m: &Subalgebra,
    l: &Subalgebra,
    gamma_hi: f64,
    samples: usize,
    rng_seed: u64,
    tol: &ToleranceProfile,
) -> Result<NearInclusionReport> {
    let n_comm = relative_commutant(n, l, tol)?;
    let m_comm = relative_commutant(m, l, tol)?;
    let mut r = rng::seeded(rng_seed);
    let mut rep = NearInclusionReport {
        samples,
        commutant_residual: 0.0,
        max_distance: 0.0,
        bound: 2.0 * gamma_hi,
        passed: true,
    };
    for _ in 0..samples {
        let x = m_comm.random_element(&mut r);
        let norm = opnorm(&x);
        if norm == 0.0 {
            continue;
        }
        let x = x.unscale(norm);
        let avg = average_into(n, &n_comm, &x, None, tol);
        let inside = avg.commutant_residual.max(l.residual(&avg.output));
        rep.commutant_residual = rep.commutant_residual.max(inside);
        rep.max_distance = rep.max_distance.max(opnorm(&(&x - &avg.output)));
    }
    rep.passed = rep.commutant_residual <= tol.eq_eps && rep.max_distance <= rep.bound + tol.eq_eps;
    Ok(rep)
}
