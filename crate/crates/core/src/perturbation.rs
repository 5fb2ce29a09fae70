//! Distance estimation, the isomorphism `Phi: N -> M`, the expectation
//! `E_K` onto the graph of `Phi`, and the conjugating unitary.
//!
//! Every inequality the construction relies on is re-checked at runtime
//! against `gamma = 1.01 d_hi`, where `d_hi` is a certified upper bound
//! on the distance:
//!
//! | quantity                 | bound             |
//! |--------------------------|-------------------|
//! | `||t - e_M||`            | `2 gamma`         |
//! | `||p - e_M||`            | `4 gamma`         |
//! | `||w - I||`              | `4 sqrt(2) gamma` |
//! | `||Phi(x) - E_M(x)||`    | `8 sqrt(2) gamma` |
//! | `||Phi - id||` (sampled) | `14 d_hi`         |
//! | `||u - I||`              | `20 d_hi`         |

use std::f64::consts::SQRT_2;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::algebra::{amplify_2x2, generate_algebra, relative_commutant, Subalgebra};
use crate::basic::{build_basic_construction, corner_iso};
use crate::dixmier::{average_into, haar_average};
use crate::error::{Error, Result};
use crate::expectation::{BasisMap, ConditionalExpectation};
use crate::format::matrix_to_rows;
use crate::linalg::{
    identity, opnorm, polar_unitary, singular_values, projection_exchange_unitary, spectral_projection, unitarity_residual, Matrix,
    ToleranceProfile, Vector,
};
use crate::rng;

/// Upper end of the distance range the construction accepts.
pub const DISTANCE_GATE: f64 = 1.0 / 15.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HiSource {
    CoarseBound,
    ConjugationCertificate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceInterval {
    pub lo: f64,
    pub hi: f64,
    pub hi_source: HiSource,
}

impl DistanceInterval {
    /// Interval with a caller-certified upper end and no sampled lower end.
    pub fn certified(hi: f64) -> Self {
        Self {
            lo: 0.0,
            hi,
            hi_source: HiSource::ConjugationCertificate,
        }
    }
}

/// Rigorous upper bound `2 sqrt(n) sigma`, where `sigma` is the larger of
/// the norms of `id - E_M` on `N` and `id - E_N` on `M` in normalized
/// Frobenius geometry.
pub fn coarse_distance_bound(n: &Subalgebra, m: &Subalgebra, e_m: &ConditionalExpectation, e_n: &ConditionalExpectation) -> f64 {
    let sigma = |a: &Subalgebra, e: &ConditionalExpectation| -> f64 {
        let cols: Vec<Vector> = a
            .basis()
            .iter()
            .map(|b| crate::algebra::to_coords(&(b - e.apply_unchecked(b))))
            .collect();
        opnorm(&Matrix::from_columns(&cols))
    };
    let s = sigma(n, e_m).max(sigma(m, e_n));
    2.0 * (n.ambient_dim() as f64).sqrt() * s
}

/// Brackets `d(N, M)`.
///
/// `lo` is `max ||u - E_other(u)|| / 2` over Haar-sampled unitaries of
/// both algebras; `hi` is the smaller of [`coarse_distance_bound`] and the
/// optional conjugation certificate `2 ||v - I||`.
#[allow(clippy::too_many_arguments)]
pub fn distance_interval(
    n: &Subalgebra,
    m: &Subalgebra,
    e_m: &ConditionalExpectation,
    e_n: &ConditionalExpectation,
    samples: usize,
    rng_seed: u64,
    certificate: Option<f64>,
    tol: &ToleranceProfile,
) -> Result<DistanceInterval> {
    if n.ambient_dim() != m.ambient_dim() {
        return Err(Error::Shape {
            expected: (n.ambient_dim(), n.ambient_dim()),
            found: (m.ambient_dim(), m.ambient_dim()),
        });
    }
    let mut r = rng::seeded(rng_seed);
    let mut lo: f64 = 0.0;
    for _ in 0..samples {
        let u = n.haar_unitary(&mut r, tol);
        lo = lo.max(opnorm(&(&u - e_m.apply_unchecked(&u))) / 2.0);
        let u = m.haar_unitary(&mut r, tol);
        lo = lo.max(opnorm(&(&u - e_n.apply_unchecked(&u))) / 2.0);
    }
    let coarse = coarse_distance_bound(n, m, e_m, e_n);
    let (hi, hi_source) = match certificate {
        Some(c) if c < 0.0 || !c.is_finite() => {
            return Err(Error::InvalidInput(format!("certificate must be a finite non-negative number, got {c}")))
        }
        Some(c) if c <= coarse => (c, HiSource::ConjugationCertificate),
        _ => (coarse, HiSource::CoarseBound),
    };
    if lo > hi + tol.eq_eps {
        return Err(Error::InvalidInput(format!(
            "upper bound {hi} is below the sampled lower bound {lo}"
        )));
    }
    Ok(DistanceInterval {
        lo: lo.min(hi),
        hi,
        hi_source,
    })
}

/// Max over the identity and Haar-sampled unitaries `u` of the domain of
/// `||phi(u) - u||`; a lower estimate of `||phi - id||`.
pub fn map_norm_estimate(phi: &BasisMap, samples: usize, rng_seed: u64, tol: &ToleranceProfile) -> f64 {
    let domain = phi.domain();
    let id = identity(domain.ambient_dim());
    let mut best = opnorm(&(phi.apply_unchecked(&id) - &id));
    let mut r = rng::seeded(rng_seed);
    for _ in 0..samples {
        let u = domain.haar_unitary(&mut r, tol);
        best = best.max(opnorm(&(phi.apply_unchecked(&u) - &u)));
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    /// Unitaries sampled by [`map_norm_estimate`].
    pub map_samples: usize,
    pub seed: u64,
    /// Attempt the construction even when `d_hi >= 1/15`.
    pub allow_above_gate: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            map_samples: 64,
            seed: 0,
            allow_above_gate: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct IsoCertificate {
    pub phi: BasisMap,
    pub gamma: f64,
    /// Haar average of `e_M` over the unitaries of `pi(N)`.
    pub t: Matrix,
    /// Spectral projection of `t` near 1.
    pub p: Matrix,
    /// Unitary with `w e_M w* = p`.
    pub w: Matrix,
    pub jones: Matrix,
    pub t_minus_e: f64,
    pub p_minus_e: f64,
    pub w_minus_i: f64,
    /// Max `||Phi(x) - E_M(x)||` over `N`'s basis scaled to unit norm.
    pub phi_minus_em: f64,
    pub norm_phi_minus_id_lo: f64,
    pub hom_residual: f64,
    /// Smallest singular value of `Phi` in orthonormal coordinates.
    pub phi_sigma_min: f64,
}

impl IsoCertificate {
    pub fn apply(&self, x: &Matrix) -> Matrix {
        self.phi.apply_unchecked(x)
    }
}

fn check_bound(name: &'static str, value: f64, bound: f64, tol: &ToleranceProfile) -> Result<()> {
    if value > bound + tol.eq_eps {
        return Err(Error::BoundViolated { name, value, bound });
    }
    Ok(())
}

fn check_gate(d: &DistanceInterval, opts: &PipelineOptions) -> Result<()> {
    if !opts.allow_above_gate && (d.hi.is_nan() || d.hi >= DISTANCE_GATE) {
        return Err(Error::Hypothesis { d_hi: d.hi });
    }
    Ok(())
}

/// Largest failure of `Phi` to be a unital *-homomorphism on basis pairs.
fn homomorphism_residual(n: &Subalgebra, phi: &BasisMap) -> f64 {
    let id = identity(n.ambient_dim());
    let mut res = opnorm(&(phi.apply_unchecked(&id) - &id));
    let images: Vec<&Matrix> = phi.values().iter().collect();
    for (i, a) in n.basis().iter().enumerate() {
        res = res.max(opnorm(&(phi.apply_unchecked(&a.adjoint()) - images[i].adjoint())));
        for (j, b) in n.basis().iter().enumerate() {
            let lhs = phi.apply_unchecked(&(a * b));
            res = res.max(opnorm(&(lhs - images[i] * images[j])));
        }
    }
    res
}

/// Coordinates of `Phi` as a `dim M x dim N` matrix.
fn phi_coordinates(m: &Subalgebra, phi: &BasisMap) -> Matrix {
    let cols: Vec<Vector> = phi.values().iter().map(|v| m.coefficients(v)).collect();
    Matrix::from_columns(&cols)
}

/// Builds `Phi(x) = iota(e_M w* pi(x) w e_M)`.
#[allow(clippy::too_many_arguments)]
pub fn build_isomorphism(
    n: &Subalgebra,
    m: &Subalgebra,
    l: &Subalgebra,
    e_n: &ConditionalExpectation,
    e_m: &ConditionalExpectation,
    d: &DistanceInterval,
    opts: &PipelineOptions,
    tol: &ToleranceProfile,
) -> Result<IsoCertificate> {
    check_gate(d, opts)?;
    l.require_includes(n, tol)?;
    let _ = e_n;
    let bc = build_basic_construction(l, m, e_m, tol)?;
    let gamma = 1.01 * d.hi;
    let e = bc.jones().clone();

    let pi_n = bc.gns().represent(n, tol)?;
    let commutant = relative_commutant(&pi_n, bc.generated(), tol)?;
    let t = average_into(&pi_n, &commutant, &e, None, tol).output;
    let t_minus_e = opnorm(&(&t - &e));
    check_bound("t_minus_e", t_minus_e, 2.0 * gamma, tol)?;

    // The assertion above confines the spectrum to within 2 gamma + eq_eps
    // of {0, 1}; widening the window by 2 eq_eps keeps every eigenvalue off
    // its edges, including the gamma = 0 case.
    let slack = 2.0 * tol.eq_eps;
    let p = spectral_projection(&t, 1.0 - 2.0 * gamma - slack, 1.0 + 2.0 * gamma + slack, tol)?;
    let p_minus_e = opnorm(&(&p - &e));
    check_bound("p_minus_e", p_minus_e, 4.0 * gamma, tol)?;

    let w = projection_exchange_unitary(&e, &p, tol)?;
    let w_minus_i = opnorm(&(&w - identity(w.nrows())));
    check_bound("w_minus_i", w_minus_i, 4.0 * SQRT_2 * gamma, tol)?;

    let w_adj = w.adjoint();
    let mut values = Vec::with_capacity(n.dim());
    for b in n.basis() {
        let z = &e * &w_adj * bc.pi(b) * &w * &e;
        values.push(corner_iso(&bc, &z, tol)?);
    }
    let phi = BasisMap::new(n.clone(), values)?;

    let mut phi_minus_em: f64 = 0.0;
    for (b, fb) in n.basis().iter().zip(phi.values()) {
        let s = opnorm(b);
        phi_minus_em = phi_minus_em.max(opnorm(&(fb - e_m.apply_unchecked(b))) / s);
    }
    check_bound("phi_minus_em", phi_minus_em, 8.0 * SQRT_2 * gamma, tol)?;

    let hom_residual = homomorphism_residual(n, &phi);
    if hom_residual > tol.eq_eps {
        return Err(Error::Certificate(format!("Phi is not multiplicative (residual {hom_residual:e})")));
    }
    if n.dim() != m.dim() {
        return Err(Error::Certificate(format!(
            "dim N = {} differs from dim M = {}",
            n.dim(),
            m.dim()
        )));
    }
    let phi_sigma_min = singular_values(&phi_coordinates(m, &phi)).last().copied().unwrap_or(0.0);
    if phi_sigma_min <= tol.rank_eps {
        return Err(Error::Certificate(format!("Phi is not onto M (sigma_min {phi_sigma_min:e})")));
    }
    let norm_phi_minus_id_lo = map_norm_estimate(&phi, opts.map_samples, opts.seed, tol);

    Ok(IsoCertificate {
        phi,
        gamma,
        t,
        p,
        w,
        jones: e,
        t_minus_e,
        p_minus_e,
        w_minus_i,
        phi_minus_em,
        norm_phi_minus_id_lo,
        hom_residual,
        phi_sigma_min,
    })
}

fn block(x: &Matrix, n: usize, r: usize, c: usize) -> Matrix {
    x.view((r * n, c * n), (n, n)).into_owned()
}

fn block_diag(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.nrows();
    let mut out = Matrix::zeros(2 * n, 2 * n);
    out.view_mut((0, 0), (n, n)).copy_from(a);
    out.view_mut((n, n), (n, n)).copy_from(b);
    out
}

/// `K = {diag(x, Phi(x)) : x in N}` inside `M_2(L)`.
pub fn graph_algebra(n: &Subalgebra, iso: &IsoCertificate, tol: &ToleranceProfile) -> Result<Subalgebra> {
    let gens: Vec<Matrix> = n
        .basis()
        .iter()
        .zip(iso.phi.values())
        .map(|(b, fb)| block_diag(b, fb))
        .collect();
    generate_algebra(2 * n.ambient_dim(), &gens, tol)
}

/// `E_K([[a, b], [c, d]]) = diag((E_N(a) + Phi^-1(E_M(d)))/2, (Phi(E_N(a)) + E_M(d))/2)`.
pub fn ek_expectation(
    n: &Subalgebra,
    m: &Subalgebra,
    l: &Subalgebra,
    e_n: &ConditionalExpectation,
    e_m: &ConditionalExpectation,
    iso: &IsoCertificate,
    tol: &ToleranceProfile,
) -> Result<ConditionalExpectation> {
    if iso.hom_residual > tol.eq_eps {
        return Err(Error::Certificate(format!("hom residual {:e}", iso.hom_residual)));
    }
    if n.dim() != m.dim() {
        return Err(Error::Certificate("Phi is not invertible: dimensions differ".into()));
    }
    let coords = phi_coordinates(m, &iso.phi);
    let inverse: DMatrix<_> = coords
        .try_inverse()
        .ok_or_else(|| Error::Certificate("Phi is not invertible on its range".into()))?;
    let phi_inv = |y: &Matrix| n.combine(&(&inverse * m.coefficients(y)));

    let dim = l.ambient_dim();
    let domain = amplify_2x2(l);
    let range = graph_algebra(n, iso, tol)?;
    let map = BasisMap::from_fn(domain, |x| {
        let ea = e_n.apply_unchecked(&block(x, dim, 0, 0));
        let ed = e_m.apply_unchecked(&block(x, dim, 1, 1));
        let top = (&ea + phi_inv(&ed)).scale(0.5);
        let bottom = (iso.apply(&ea) + &ed).scale(0.5);
        block_diag(&top, &bottom)
    })?;
    Ok(ConditionalExpectation::from_map(map, range))
}

#[derive(Clone, Debug)]
pub struct PerturbReport {
    pub d: DistanceInterval,
    pub iso: IsoCertificate,
    pub y: Matrix,
    pub u: Matrix,
    /// Max over `M`'s basis `b` of the Frobenius distance from `u b u*` to `N`.
    pub conjugacy_residual: f64,
    /// Max over `N`'s basis `b` of the distance from `u* b u` to `M`.
    pub reverse_conjugacy_residual: f64,
    pub u_minus_i: f64,
    pub unitarity_residual: f64,
    pub y_minus_i: f64,
    pub intertwining_residual: f64,
    pub off_diagonal_residual: f64,
    pub bound_14_ok: bool,
    pub bound_20_ok: bool,
}

/// Flat JSON view of a [`PerturbReport`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportJson {
    pub d_lo: f64,
    pub d_hi: f64,
    pub hi_source: HiSource,
    pub gamma: f64,
    pub norm_phi_minus_id: f64,
    /// `norm_phi_minus_id` is a sampled lower estimate, so `bound_14_ok`
    /// is one-sided.
    pub norm_phi_minus_id_is_lower_estimate: bool,
    #[serde(rename = "u_minus_I")]
    pub u_minus_i: f64,
    pub conjugacy_residual: f64,
    pub reverse_conjugacy_residual: f64,
    pub unitarity_residual: f64,
    pub bound_14_ok: bool,
    pub bound_20_ok: bool,
    pub t_minus_e: f64,
    pub p_minus_e: f64,
    #[serde(rename = "w_minus_I")]
    pub w_minus_i: f64,
    pub phi_minus_em: f64,
    pub hom_residual: f64,
    #[serde(rename = "y_minus_I")]
    pub y_minus_i: f64,
    pub intertwining_residual: f64,
    pub off_diagonal_residual: f64,
    pub u: Vec<Vec<[f64; 2]>>,
}

impl PerturbReport {
    pub fn to_json(&self) -> ReportJson {
        ReportJson {
            d_lo: self.d.lo,
            d_hi: self.d.hi,
            hi_source: self.d.hi_source,
            gamma: self.iso.gamma,
            norm_phi_minus_id: self.iso.norm_phi_minus_id_lo,
            norm_phi_minus_id_is_lower_estimate: true,
            u_minus_i: self.u_minus_i,
            conjugacy_residual: self.conjugacy_residual,
            reverse_conjugacy_residual: self.reverse_conjugacy_residual,
            unitarity_residual: self.unitarity_residual,
            bound_14_ok: self.bound_14_ok,
            bound_20_ok: self.bound_20_ok,
            t_minus_e: self.iso.t_minus_e,
            p_minus_e: self.iso.p_minus_e,
            w_minus_i: self.iso.w_minus_i,
            phi_minus_em: self.iso.phi_minus_em,
            hom_residual: self.iso.hom_residual,
            y_minus_i: self.y_minus_i,
            intertwining_residual: self.intertwining_residual,
            off_diagonal_residual: self.off_diagonal_residual,
            u: matrix_to_rows(&self.u),
        }
    }

    /// `||u - I|| / d_hi`, zero when `d_hi = 0`.
    pub fn ratio(&self) -> f64 {
        if self.d.hi > 0.0 {
            self.u_minus_i / self.d.hi
        } else {
            0.0
        }
    }
}

/// Unitary `u` of `L` with `u M u* = N` and `||u - I|| <= 20 d_hi`.
///
/// Averages `[[0, I], [0, 0]]` over the unitaries of `K`; the result is
/// `[[0, y], [0, 0]]` with `y Phi(n) = n y`, and `u` is the polar part of `y`.
#[allow(clippy::too_many_arguments)]
pub fn conjugating_unitary(
    n: &Subalgebra,
    m: &Subalgebra,
    l: &Subalgebra,
    e_n: &ConditionalExpectation,
    e_m: &ConditionalExpectation,
    d: &DistanceInterval,
    opts: &PipelineOptions,
    tol: &ToleranceProfile,
) -> Result<PerturbReport> {
    let iso = build_isomorphism(n, m, l, e_n, e_m, d, opts, tol)?;
    let dim = l.ambient_dim();
    let k = graph_algebra(n, &iso, tol)?;
    let l2 = amplify_2x2(l);
    let mut corner = Matrix::zeros(2 * dim, 2 * dim);
    corner.view_mut((0, dim), (dim, dim)).copy_from(&identity(dim));
    let x = haar_average(&k, &l2, &corner, None, tol)?.output;

    let off_diagonal_residual = block(&x, dim, 0, 0)
        .norm()
        .max(block(&x, dim, 1, 0).norm())
        .max(block(&x, dim, 1, 1).norm());
    if off_diagonal_residual > tol.eq_eps {
        return Err(Error::OffDiagonalForm {
            residual: off_diagonal_residual,
        });
    }
    let y = block(&x, dim, 0, 1);
    let y_minus_i = opnorm(&(&y - identity(dim)));
    if y_minus_i >= 1.0 {
        return Err(Error::PolarHypothesis { y_minus_i });
    }
    let u = polar_unitary(&y, tol)?;

    let intertwining_residual = n
        .basis()
        .iter()
        .zip(iso.phi.values())
        .map(|(b, fb)| opnorm(&(&u * fb - b * &u)))
        .fold(0.0, f64::max);
    if intertwining_residual > tol.eq_eps {
        return Err(Error::PipelineInconsistency {
            residual: intertwining_residual,
        });
    }
    let u_adj = u.adjoint();
    let conjugacy_residual = m
        .basis()
        .iter()
        .map(|b| n.residual(&(&u * b * &u_adj)))
        .fold(0.0, f64::max);
    let reverse_conjugacy_residual = n
        .basis()
        .iter()
        .map(|b| m.residual(&(&u_adj * b * &u)))
        .fold(0.0, f64::max);
    let u_minus_i = opnorm(&(&u - identity(dim)));
    let bound_20_ok = u_minus_i <= 20.0 * d.hi + tol.eq_eps;
    let bound_14_ok = iso.norm_phi_minus_id_lo <= 14.0 * d.hi + tol.eq_eps;

    Ok(PerturbReport {
        d: *d,
        unitarity_residual: unitarity_residual(&u),
        iso,
        y,
        u,
        conjugacy_residual,
        reverse_conjugacy_residual,
        u_minus_i,
        y_minus_i,
        intertwining_residual,
        off_diagonal_residual,
        bound_14_ok,
        bound_20_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expectation::{pp_constant, trace_expectation, verify_expectation};
    use crate::linalg::C64;

    fn tol() -> ToleranceProfile {
        ToleranceProfile::default()
    }

    fn rotation(theta: f64) -> Matrix {
        Matrix::from_row_slice(
            2,
            2,
            &[
                C64::new(theta.cos(), 0.0),
                C64::new(-theta.sin(), 0.0),
                C64::new(theta.sin(), 0.0),
                C64::new(theta.cos(), 0.0),
            ],
        )
    }

    struct Setup {
        n: Subalgebra,
        m: Subalgebra,
        l: Subalgebra,
        e_n: ConditionalExpectation,
        e_m: ConditionalExpectation,
    }

    fn setup(n: Subalgebra, v: &Matrix) -> Setup {
        let t = tol();
        let l = Subalgebra::full(n.ambient_dim());
        let m = n.conjugate(v);
        let e_n = trace_expectation(&l, &n, &t).unwrap();
        let e_m = trace_expectation(&l, &m, &t).unwrap();
        Setup { n, m, l, e_n, e_m }
    }

    #[test]
    fn distance_of_equal_algebras_is_zero() {
        let t = tol();
        let s = setup(Subalgebra::diagonal(2), &identity(2));
        let d = distance_interval(&s.n, &s.m, &s.e_m, &s.e_n, 50, 1, Some(0.0), &t).unwrap();
        assert_eq!((d.lo, d.hi), (0.0, 0.0));
        let d = distance_interval(&s.n, &s.m, &s.e_m, &s.e_n, 50, 1, None, &t).unwrap();
        assert!(d.hi < 1e-12 && d.lo <= d.hi);
    }

    #[test]
    fn distance_of_rotated_diagonal() {
        let t = tol();
        let theta: f64 = 0.02;
        let r = rotation(theta);
        let s = setup(Subalgebra::diagonal(2), &r);
        let cert = 2.0 * opnorm(&(&r - identity(2)));
        assert!((cert - 4.0 * (theta / 2.0).sin()).abs() < 1e-14);
        let d = distance_interval(&s.n, &s.m, &s.e_m, &s.e_n, 100, 3, Some(cert), &t).unwrap();
        assert!(d.hi <= 0.0400 && d.hi <= cert);
        assert!(d.lo > 0.0 && d.lo <= d.hi);
    }

    #[test]
    fn distance_diagonal_versus_full() {
        let t = tol();
        let l = Subalgebra::full(2);
        let n = Subalgebra::diagonal(2);
        let e_n = trace_expectation(&l, &n, &t).unwrap();
        let e_l = trace_expectation(&l, &l, &t).unwrap();
        let d = distance_interval(&n, &l, &e_l, &e_n, 100, 2, None, &t).unwrap();
        assert!(d.lo > 0.1, "{d:?}");
        assert_eq!(d.hi_source, HiSource::CoarseBound);
    }

    #[test]
    fn map_norm_examples() {
        let t = tol();
        let n = Subalgebra::multimatrix(3, &[(1, 1), (2, 1)]).unwrap();
        let id = BasisMap::from_fn(n.clone(), |b| b.clone()).unwrap();
        assert!(map_norm_estimate(&id, 20, 1, &t) < 1e-14);
        let neg = BasisMap::from_fn(n.clone(), |b| -b).unwrap();
        assert!((map_norm_estimate(&neg, 5, 1, &t) - 2.0).abs() < 1e-12);
        let v = Subalgebra::full(3).sample_unitary(4, 0.05).unwrap();
        let delta = opnorm(&(&v - identity(3)));
        let ad = BasisMap::from_fn(n, |b| &v * b * v.adjoint()).unwrap();
        let est = map_norm_estimate(&ad, 100, 2, &t);
        assert!(est > 0.0 && est <= 2.0 * delta + 1e-12);
    }

    #[test]
    fn identity_instance_is_exact() {
        let t = tol();
        let s = setup(Subalgebra::diagonal(2), &identity(2));
        let d = DistanceInterval::certified(0.0);
        let rep = conjugating_unitary(&s.n, &s.m, &s.l, &s.e_n, &s.e_m, &d, &PipelineOptions::default(), &t).unwrap();
        assert!(rep.u_minus_i < 1e-12);
        assert!(rep.iso.t_minus_e < 1e-12 && rep.iso.p_minus_e < 1e-12 && rep.iso.w_minus_i < 1e-12);
        for b in s.n.basis() {
            assert!((rep.iso.apply(b) - b).norm() < 1e-12);
        }
        assert!(rep.bound_14_ok && rep.bound_20_ok);
    }

    #[test]
    fn rotated_diagonal_end_to_end() {
        let t = tol();
        let v = rotation(0.01);
        let s = setup(Subalgebra::diagonal(2), &v);
        let cert = 2.0 * opnorm(&(&v - identity(2)));
        let d = distance_interval(&s.n, &s.m, &s.e_m, &s.e_n, 50, 1, Some(cert), &t).unwrap();
        let rep = conjugating_unitary(&s.n, &s.m, &s.l, &s.e_n, &s.e_m, &d, &PipelineOptions::default(), &t).unwrap();
        assert!(rep.iso.hom_residual <= 1e-8);
        assert!(rep.iso.norm_phi_minus_id_lo <= 14.0 * d.hi);
        assert!(rep.conjugacy_residual <= 1e-8 && rep.reverse_conjugacy_residual <= 1e-8);
        assert!(rep.u_minus_i <= 20.0 * d.hi);
        assert!(rep.u_minus_i <= SQRT_2 * rep.iso.norm_phi_minus_id_lo + t.eq_eps);
        assert!(rep.iso.phi_minus_em <= 2.0 * rep.iso.w_minus_i + 1e-12);
        // Ad(v) is another isomorphism N -> M; both map the MASA onto M
        for b in s.n.basis() {
            let fb = rep.iso.apply(b);
            assert!(s.m.residual(&fb) < 1e-10);
            assert!(s.m.residual(&(&v * b * v.adjoint())) < 1e-12);
        }
        assert!(rep.unitarity_residual < 1e-12);
    }

    #[test]
    fn ek_expectation_examples() {
        let t = tol();
        let v = Subalgebra::full(3).sample_unitary(3, 0.004).unwrap();
        let n = Subalgebra::multimatrix(3, &[(1, 1), (2, 1)]).unwrap();
        let s = setup(n, &v);
        let cert = 2.0 * opnorm(&(&v - identity(3)));
        let d = DistanceInterval::certified(cert);
        let iso = build_isomorphism(&s.n, &s.m, &s.l, &s.e_n, &s.e_m, &d, &PipelineOptions::default(), &t).unwrap();
        let ek = ek_expectation(&s.n, &s.m, &s.l, &s.e_n, &s.e_m, &iso, &t).unwrap();

        assert!((ek.apply(&identity(6), &t).unwrap() - identity(6)).norm() < 1e-12);
        for b in s.n.basis() {
            let x = block_diag(b, &iso.apply(b));
            assert!((ek.apply(&x, &t).unwrap() - &x).norm() < 1e-10);
        }
        let mut r = rng::seeded(4);
        let a = s.l.random_element(&mut r);
        let dd = s.l.random_element(&mut r);
        let base = block_diag(&a, &dd);
        let mut other = base.clone();
        other.view_mut((0, 3), (3, 3)).copy_from(&s.l.random_element(&mut r));
        other.view_mut((3, 0), (3, 3)).copy_from(&s.l.random_element(&mut r));
        assert!((ek.apply_unchecked(&base) - ek.apply_unchecked(&other)).norm() < 1e-12);

        let rep = verify_expectation(&ek, 30, 5, &t);
        assert!(rep.passed, "{rep}");
        assert!(pp_constant(&ek, 60, 2, &t).unwrap().c_hi > 0.0);
    }

    #[test]
    fn gate_refuses_large_distances() {
        let t = tol();
        let v = rotation(0.2);
        let s = setup(Subalgebra::diagonal(2), &v);
        let d = DistanceInterval::certified(0.1);
        let r = conjugating_unitary(&s.n, &s.m, &s.l, &s.e_n, &s.e_m, &d, &PipelineOptions::default(), &t);
        assert!(matches!(r, Err(Error::Hypothesis { .. })));
        let forced = PipelineOptions {
            allow_above_gate: true,
            ..PipelineOptions::default()
        };
        let d = DistanceInterval::certified(2.0 * opnorm(&(&v - identity(2))));
        let rep = conjugating_unitary(&s.n, &s.m, &s.l, &s.e_n, &s.e_m, &d, &forced, &t).unwrap();
        assert!(rep.conjugacy_residual < 1e-8);
    }

    #[test]
    fn second_pass_is_trivial() {
        let t = tol();
        let v = Subalgebra::full(3).sample_unitary(8, 0.003).unwrap();
        let s = setup(Subalgebra::diagonal(3), &v);
        let d = DistanceInterval::certified(2.0 * opnorm(&(&v - identity(3))));
        let opts = PipelineOptions::default();
        let first = conjugating_unitary(&s.n, &s.m, &s.l, &s.e_n, &s.e_m, &d, &opts, &t).unwrap();
        let n2 = s.m.conjugate(&first.u);
        let e_n2 = trace_expectation(&s.l, &n2, &t).unwrap();
        let d2 = distance_interval(&n2, &s.n, &s.e_n, &e_n2, 20, 1, None, &t).unwrap();
        let second = conjugating_unitary(&n2, &s.n, &s.l, &e_n2, &s.e_n, &d2, &opts, &t).unwrap();
        assert!(second.u_minus_i < 1e-8, "{}", second.u_minus_i);
    }

    #[test]
    fn report_json_has_expected_fields() {
        let t = tol();
        let s = setup(Subalgebra::diagonal(2), &rotation(0.01));
        let d = DistanceInterval::certified(0.02);
        let rep = conjugating_unitary(&s.n, &s.m, &s.l, &s.e_n, &s.e_m, &d, &PipelineOptions::default(), &t).unwrap();
        let v = serde_json::to_value(rep.to_json()).unwrap();
        for key in [
            "d_lo",
            "d_hi",
            "hi_source",
            "norm_phi_minus_id",
            "u_minus_I",
            "conjugacy_residual",
            "bound_14_ok",
            "bound_20_ok",
            "t_minus_e",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["hi_source"], "conjugation-certificate");
    }
}
