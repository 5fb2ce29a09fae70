//! The acceptance suites behind `kkperturb check`.
//!
//! Each suite returns a [`Criterion`] with a one-line verdict. Suites 1, 2
//! and the `E_K` part of 6 share one batch of pipeline runs.

use std::f64::consts::SQRT_2;
use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::algebra::Subalgebra;
use crate::basic::{build_basic_construction, compression_identity_residual, corner_iso};
use crate::dixmier::{check_commutant_near_inclusion, haar_average, HullOptions};
use crate::error::Result;
use crate::expectation::{pp_constant, trace_expectation, verify_expectation};
use crate::harness::{make_instance, run_suite, Outcome, Scenario, Shape, SuiteResult, UNITARY_TOL};
use crate::linalg::{
    exp_i_hermitian, identity, opnorm, polar_unitary, projection_exchange_unitary, Matrix, ToleranceProfile,
};
use crate::rng;

/// Mutual containment threshold of the main-theorem suite.
pub const CONJUGACY_TOL: f64 = 1e-8;
pub const LEMMA_TOL: f64 = 1e-12;
pub const EXCHANGE_TOL: f64 = 1e-10;
pub const NEAR_COMMUTANT_TOL: f64 = 1e-10;
pub const NEAR_DISTANCE_SLACK: f64 = 1e-8;
pub const MC_TOL: f64 = 5e-2;
pub const HULL_TOL: f64 = 1e-3;
pub const EXPECTATION_TOL: f64 = 1e-10;
pub const PP_TOL: f64 = 1e-3;
pub const BASIC_TOL: f64 = 1e-10;
pub const IDENTITY_TOL: f64 = 1e-12;

pub const MAIN_EPSILONS: [f64; 3] = [0.001, 0.005, 0.01];
/// Perturbation sizes whose certificate `2 epsilon` clears `1/15`.
pub const GATE_EPSILONS: [f64; 3] = [0.05, 0.1, 0.5];

/// `(ambient_dim, shape)` pairs of the main-theorem suite.
pub fn main_configs() -> Vec<(usize, Shape)> {
    vec![
        (2, Shape::Masa),
        (3, Shape::Masa),
        (4, Shape::Masa),
        (3, Shape::Blocks(vec![(1, 1), (2, 1)])),
        (3, Shape::Blocks(vec![(2, 1), (1, 1)])),
    ]
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckConfig {
    pub seed: u64,
    pub trials: usize,
    pub lemma_instances: usize,
    pub near_instances: usize,
    pub mc_samples: usize,
    pub hull_points: usize,
    pub basic_instances: usize,
    pub basic_samples: usize,
    pub gate_trials: usize,
    pub pp_budget: usize,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            seed: 20,
            trials: 100,
            lemma_instances: 1000,
            near_instances: 50,
            mc_samples: 100_000,
            hull_points: 200,
            basic_instances: 10,
            basic_samples: 200,
            gate_trials: 20,
            pp_budget: 400,
        }
    }
}

impl CheckConfig {
    /// Reduced sizes for smoke runs.
    pub fn quick() -> Self {
        Self {
            trials: 4,
            lemma_instances: 100,
            near_instances: 10,
            mc_samples: 20_000,
            basic_instances: 3,
            basic_samples: 40,
            gate_trials: 4,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Criterion {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{v}] {}. {}: {}", self.id, self.title, self.detail)
    }
}

fn criterion(id: u8, title: &'static str, passed: bool, detail: String) -> Criterion {
    Criterion {
        id,
        title,
        passed,
        detail,
    }
}

/// All main-theorem scenarios, one per configuration and epsilon.
pub fn main_scenarios(cfg: &CheckConfig) -> Vec<Scenario> {
    let mut out = Vec::new();
    for (i, (dim, shape)) in main_configs().into_iter().enumerate() {
        for (j, &eps) in MAIN_EPSILONS.iter().enumerate() {
            let seed = cfg.seed.wrapping_mul(1000).wrapping_add((10 * i + j) as u64);
            out.push(Scenario::new(dim, shape.clone(), eps, seed, cfg.trials));
        }
    }
    out
}

pub fn main_suites(cfg: &CheckConfig) -> Result<Vec<SuiteResult>> {
    main_scenarios(cfg).iter().map(run_suite).collect()
}

pub fn criterion_main_theorem(suites: &[SuiteResult]) -> Criterion {
    let mut total = 0;
    let mut bad = Vec::new();
    let (mut unit, mut conj, mut ratio) = (0.0f64, 0.0f64, 0.0f64);
    for suite in suites {
        for r in &suite.records {
            total += 1;
            let Some(rep) = &r.report else {
                bad.push(format!("trial {} errored: {}", r.trial, r.error.as_deref().unwrap_or("?")));
                continue;
            };
            let c = rep.conjugacy_residual.max(rep.reverse_conjugacy_residual);
            unit = unit.max(rep.unitarity_residual);
            conj = conj.max(c);
            ratio = ratio.max(r.ratio().unwrap_or(0.0));
            if rep.unitarity_residual > UNITARY_TOL || c > CONJUGACY_TOL || rep.u_minus_i > 20.0 * rep.d_hi {
                bad.push(format!("trial {} out of bounds", r.trial));
            }
        }
    }
    criterion(
        1,
        "main theorem",
        bad.is_empty() && total > 0,
        format!(
            "{}/{total} trials ok; max ||u*u - I|| {unit:.2e}, max containment {conj:.2e}, max ||u - I||/d_hi {ratio:.3}{}",
            total - bad.len(),
            first_problem(&bad)
        ),
    )
}

fn first_problem(bad: &[String]) -> String {
    bad.first().map(|b| format!("; first problem: {b}")).unwrap_or_default()
}

/// Ratios of each runtime estimate to its bound, maxed over all trials.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct BoundRatios {
    pub t_minus_e: f64,
    pub p_minus_e: f64,
    pub w_minus_i: f64,
    pub phi_minus_em: f64,
    pub phi_minus_id: f64,
}

pub fn criterion_prop_bounds(suites: &[SuiteResult], tol: &ToleranceProfile) -> (Criterion, BoundRatios) {
    let mut worst = BoundRatios::default();
    let mut bad = Vec::new();
    let mut total = 0;
    let ratio = |v: f64, b: f64| if b > 0.0 { v / b } else if v > 0.0 { f64::INFINITY } else { 0.0 };
    for suite in suites {
        for r in &suite.records {
            total += 1;
            let Some(rep) = &r.report else {
                bad.push(format!("trial {} has no report", r.trial));
                continue;
            };
            let g = rep.gamma;
            let checks = [
                (rep.t_minus_e, 2.0 * g, &mut worst.t_minus_e),
                (rep.p_minus_e, 4.0 * g, &mut worst.p_minus_e),
                (rep.w_minus_i, 4.0 * SQRT_2 * g, &mut worst.w_minus_i),
                (rep.phi_minus_em, 8.0 * SQRT_2 * g, &mut worst.phi_minus_em),
                (rep.norm_phi_minus_id, 14.0 * rep.d_hi, &mut worst.phi_minus_id),
            ];
            let mut ok = true;
            for (v, b, w) in checks {
                *w = w.max(ratio(v, b));
                ok &= v <= b + tol.eq_eps;
            }
            if !ok {
                bad.push(format!("trial {} exceeds a bound", r.trial));
            }
        }
    }
    let c = criterion(
        2,
        "proposition bounds",
        bad.is_empty() && total > 0,
        format!(
            "{}/{total} trials within bounds; worst value/bound: t {:.3}, p {:.3}, w {:.3}, Phi-E_M {:.3}, Phi-id {:.3}{}",
            total - bad.len(),
            worst.t_minus_e,
            worst.p_minus_e,
            worst.w_minus_i,
            worst.phi_minus_em,
            worst.phi_minus_id,
            first_problem(&bad)
        ),
    );
    (c, worst)
}

/// `x = I + r z / ||z||` with `r` uniform in `[0, 0.999)`.
pub fn random_near_identity<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> Matrix {
    let z = Matrix::from_fn(n, n, |_, _| rng::complex_gaussian(rng));
    let r: f64 = rng.random::<f64>() * 0.999;
    identity(n) + z.scale(r / opnorm(&z))
}

/// Rank-`k` projection onto the span of `k` Haar-random orthonormal vectors.
pub fn random_projection<R: rand::Rng + ?Sized>(n: usize, k: usize, rng: &mut R, tol: &ToleranceProfile) -> Matrix {
    let u = Subalgebra::full(n).haar_unitary(rng, tol);
    let v = u.columns(0, k).into_owned();
    &v * v.adjoint()
}

/// Projection pair with `||p - q|| < 1`: `q = exp(i t h) p exp(-i t h)`.
pub fn random_projection_pair<R: rand::Rng + ?Sized>(
    n: usize,
    rng: &mut R,
    tol: &ToleranceProfile,
) -> (Matrix, Matrix) {
    loop {
        let k = 1 + (rng.next_u32() as usize) % (n - 1).max(1);
        let p = random_projection(n, k.min(n), rng, tol);
        let h = Subalgebra::full(n).random_hermitian(rng);
        let t: f64 = rng.random::<f64>() * 1.2 / opnorm(&h);
        let v = exp_i_hermitian(&h.scale(t));
        let q = &v * &p * v.adjoint();
        if opnorm(&(&p - &q)) < 1.0 {
            return (p, q);
        }
    }
}

pub fn criterion_lemmas(cfg: &CheckConfig, tol: &ToleranceProfile) -> Criterion {
    let mut r = rng::stream(cfg.seed, 3);
    let (mut worst_polar, mut worst_exchange, mut worst_conj) = (f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0f64);
    let mut errors = 0;
    for i in 0..cfg.lemma_instances {
        let n = 2 + i % 5;
        let x = random_near_identity(n, &mut r);
        match polar_unitary(&x, tol) {
            Ok(u) => worst_polar = worst_polar.max(opnorm(&(&u - identity(n))) - SQRT_2 * opnorm(&(&x - identity(n)))),
            Err(_) => errors += 1,
        }
        let (p, q) = random_projection_pair(n, &mut r, tol);
        match projection_exchange_unitary(&p, &q, tol) {
            Ok(w) => {
                worst_exchange =
                    worst_exchange.max(opnorm(&(&w - identity(n))) - SQRT_2 * opnorm(&(&p - &q)));
                worst_conj = worst_conj.max(opnorm(&(&w * &p * w.adjoint() - &q)));
            }
            Err(_) => errors += 1,
        }
    }
    let passed = errors == 0 && worst_polar <= LEMMA_TOL && worst_exchange <= LEMMA_TOL && worst_conj <= EXCHANGE_TOL;
    criterion(
        3,
        "polar and exchange estimates",
        passed,
        format!(
            "{} + {} instances, {errors} errors; max(||u-I|| - sqrt2 ||x-I||) {worst_polar:.2e}, \
             max(||w-I|| - sqrt2 ||p-q||) {worst_exchange:.2e}, max ||wpw* - q|| {worst_conj:.2e}",
            cfg.lemma_instances, cfg.lemma_instances
        ),
    )
}

pub fn criterion_near_inclusion(cfg: &CheckConfig, tol: &ToleranceProfile) -> Criterion {
    let configs = main_configs();
    let results: Vec<Result<(f64, f64, f64)>> = (0..cfg.near_instances)
        .into_par_iter()
        .map(|i| {
            let (dim, shape) = configs[i % configs.len()].clone();
            let eps = MAIN_EPSILONS[i % MAIN_EPSILONS.len()] * 2.0;
            let s = Scenario::new(dim, shape, eps, cfg.seed.wrapping_add(4000), 1);
            let inst = make_instance(&s, i)?;
            let rep = check_commutant_near_inclusion(&inst.n, &inst.m, &inst.l, inst.certificate, 20, i as u64, tol)?;
            Ok((rep.commutant_residual, rep.max_distance, rep.bound))
        })
        .collect();
    let (mut comm, mut slack, mut errors) = (0.0f64, f64::NEG_INFINITY, 0);
    for res in results {
        match res {
            Ok((c, d, b)) => {
                comm = comm.max(c);
                slack = slack.max(d - b);
            }
            Err(_) => errors += 1,
        }
    }
    criterion(
        4,
        "commutant near-inclusion",
        errors == 0 && comm <= NEAR_COMMUTANT_TOL && slack <= NEAR_DISTANCE_SLACK,
        format!(
            "{} instances, {errors} errors; max commutant residual {comm:.2e}, max(||x - y|| - 2 gamma) {slack:.2e}",
            cfg.near_instances
        ),
    )
}

/// Algebras used by the averaging suite, all inside `M_2` or `M_3`.
pub fn averaging_algebras(seed: u64, tol: &ToleranceProfile) -> Vec<(&'static str, Subalgebra)> {
    let mut r = rng::stream(seed, 5);
    let w = Subalgebra::full(3).haar_unitary(&mut r, tol);
    vec![
        ("scalars in M_2", Subalgebra::scalars(2)),
        ("diagonal in M_2", Subalgebra::diagonal(2)),
        ("diagonal in M_3", Subalgebra::diagonal(3)),
        (
            "rotated M_1 + M_2 in M_3",
            Subalgebra::multimatrix(3, &[(1, 1), (2, 1)]).expect("fits").conjugate(&w),
        ),
        ("M_2 + C in M_3", Subalgebra::multimatrix(3, &[(2, 1)]).expect("fits")),
    ]
}

/// Plain Monte Carlo mean of `u x u*` over `samples` Haar unitaries of `a`.
pub fn monte_carlo_average(a: &Subalgebra, x: &Matrix, samples: usize, seed: u64, tol: &ToleranceProfile) -> Matrix {
    const CHUNKS: usize = 64;
    let n = a.ambient_dim();
    let total = (0..CHUNKS)
        .into_par_iter()
        .map(|c| {
            let mut r = rng::stream(seed, c as u64);
            let count = samples / CHUNKS + usize::from(c < samples % CHUNKS);
            let mut acc = Matrix::zeros(n, n);
            for _ in 0..count {
                let u = a.haar_unitary(&mut r, tol);
                acc += &u * x * u.adjoint();
            }
            acc
        })
        .reduce(|| Matrix::zeros(n, n), |a, b| a + b);
    total.unscale(samples as f64)
}

pub fn criterion_dixmier(cfg: &CheckConfig, tol: &ToleranceProfile) -> Criterion {
    let mut r = rng::stream(cfg.seed, 6);
    let (mut mc, mut hull, mut errors) = (0.0f64, 0.0f64, 0);
    for (k, (_, a)) in averaging_algebras(cfg.seed, tol).iter().enumerate() {
        let l = Subalgebra::full(a.ambient_dim());
        let x = l.random_element(&mut r);
        let x = x.unscale(opnorm(&x));
        let opts = HullOptions {
            points: cfg.hull_points,
            seed: cfg.seed.wrapping_add(k as u64),
            max_iter: 5000,
        };
        match haar_average(a, &l, &x, Some(&opts), tol) {
            Ok(cert) => {
                let mean = monte_carlo_average(a, &x, cfg.mc_samples, cfg.seed.wrapping_add(100 + k as u64), tol);
                mc = mc.max((mean - &cert.output).norm());
                hull = hull.max(cert.hull_gap.unwrap_or(f64::INFINITY));
            }
            Err(_) => errors += 1,
        }
    }
    criterion(
        5,
        "Haar average identity",
        errors == 0 && mc <= MC_TOL && hull <= HULL_TOL,
        format!(
            "max Frobenius gap to {}-sample Monte Carlo mean {mc:.2e}; max {}-point hull gap {hull:.2e}",
            cfg.mc_samples, cfg.hull_points
        ),
    )
}

/// Subalgebras on which the trace expectation is verified.
pub fn expectation_algebras(seed: u64, tol: &ToleranceProfile) -> Vec<(Subalgebra, Subalgebra)> {
    let mut r = rng::stream(seed, 7);
    let mut out = Vec::new();
    for n in 2..=4 {
        let l = Subalgebra::full(n);
        let w = l.haar_unitary(&mut r, tol);
        out.push((l.clone(), Subalgebra::scalars(n)));
        out.push((l.clone(), Subalgebra::diagonal(n)));
        out.push((l.clone(), Subalgebra::diagonal(n).conjugate(&w)));
        out.push((l.clone(), l.clone()));
        if n >= 3 {
            out.push((l.clone(), Subalgebra::multimatrix(n, &[(2, 1)]).expect("fits").conjugate(&w)));
        }
        if n == 4 {
            out.push((l.clone(), Subalgebra::multimatrix(4, &[(2, 2)]).expect("fits")));
            // non-trivial ambient: M_2 + M_2 with a MASA inside
            let big = Subalgebra::multimatrix(4, &[(2, 1), (2, 1)]).expect("fits");
            out.push((big, Subalgebra::diagonal(4)));
        }
    }
    out
}

pub fn criterion_expectation(cfg: &CheckConfig, suites: &[SuiteResult], tol: &ToleranceProfile) -> Criterion {
    let mut worst = 0.0f64;
    let mut errors = 0;
    let algebras = expectation_algebras(cfg.seed, tol);
    for (i, (l, a)) in algebras.iter().enumerate() {
        match trace_expectation(l, a, tol) {
            Ok(e) => {
                let rep = verify_expectation(&e, 30, cfg.seed.wrapping_add(i as u64), tol);
                worst = worst.max(rep.max_residual());
                if !rep.passed {
                    errors += 1;
                }
            }
            Err(_) => errors += 1,
        }
    }
    let full = Subalgebra::full(2);
    let mut pp = Vec::new();
    for a in [Subalgebra::scalars(2), Subalgebra::diagonal(2)] {
        let c = trace_expectation(&full, &a, tol)
            .and_then(|e| pp_constant(&e, cfg.pp_budget, cfg.seed, tol))
            .map(|p| p.c_hi)
            .unwrap_or(f64::NAN);
        pp.push(c);
    }
    let pp_ok = pp.iter().all(|c| (c - 0.5).abs() <= PP_TOL);
    let (mut ek_total, mut ek_bad) = (0, 0);
    for s in suites {
        for r in &s.records {
            ek_total += 1;
            let v = r.verdicts.unwrap_or_default();
            if !(v.ek_expectation && v.pp_positive) {
                ek_bad += 1;
            }
        }
    }
    criterion(
        6,
        "expectations and index",
        errors == 0 && worst <= EXPECTATION_TOL && pp_ok && ek_bad == 0 && ek_total > 0,
        format!(
            "{} trace expectations, max residual {worst:.2e}; pp constants {:.6} (scalars), {:.6} (diagonal); \
             E_K verified on {}/{ek_total} trials",
            algebras.len(),
            pp[0],
            pp[1],
            ek_total - ek_bad
        ),
    )
}

/// Max residuals of the compression identity and of the corner round trips
/// `pi(m) e -> m` and `e pi(x) e -> E_M(x)` over random elements.
pub fn basic_construction_residuals(
    s: &Scenario,
    trial: usize,
    samples: usize,
    seed: u64,
    tol: &ToleranceProfile,
) -> Result<(f64, f64)> {
    let inst = make_instance(s, trial)?;
    let bc = build_basic_construction(&inst.l, &inst.m, &inst.e_m, tol)?;
    let mut r = rng::seeded(seed);
    let (mut comp, mut round) = (0.0f64, 0.0f64);
    let e = bc.jones().clone();
    for _ in 0..samples {
        let x = inst.l.random_element(&mut r);
        comp = comp.max(compression_identity_residual(&bc, &inst.e_m, &x));
        let y = inst.m.random_element(&mut r);
        let back = corner_iso(&bc, &(bc.pi(&y) * &e), tol)?;
        round = round.max(opnorm(&(back - &y)));
        let ex = corner_iso(&bc, &(&e * bc.pi(&x) * &e), tol)?;
        round = round.max(opnorm(&(ex - inst.e_m.apply_unchecked(&x))));
    }
    Ok((comp, round))
}

pub fn criterion_basic(cfg: &CheckConfig, tol: &ToleranceProfile) -> Criterion {
    let configs = main_configs();
    let results: Vec<Result<(f64, f64)>> = (0..cfg.basic_instances)
        .into_par_iter()
        .map(|i| {
            let (dim, shape) = configs[i % configs.len()].clone();
            let s = Scenario::new(dim, shape, 0.01, cfg.seed.wrapping_add(7000), 1);
            basic_construction_residuals(&s, i, cfg.basic_samples, i as u64, tol)
        })
        .collect();
    let (mut comp, mut round, mut errors) = (0.0f64, 0.0f64, 0);
    for res in results {
        match res {
            Ok((c, r)) => {
                comp = comp.max(c);
                round = round.max(r);
            }
            Err(_) => errors += 1,
        }
    }
    criterion(
        7,
        "basic construction identities",
        errors == 0 && comp <= BASIC_TOL && round <= BASIC_TOL,
        format!(
            "{} instances x {} elements, {errors} errors; max compression residual {comp:.2e}, max corner round trip {round:.2e}",
            cfg.basic_instances, cfg.basic_samples
        ),
    )
}

pub fn criterion_gates(cfg: &CheckConfig) -> Result<Criterion> {
    let (mut refused, mut attempted, mut zero_worst, mut zero_total, mut zero_bad) = (0, 0, 0.0f64, 0, 0);
    for (i, (dim, shape)) in main_configs().into_iter().enumerate() {
        for &eps in &GATE_EPSILONS {
            let s = Scenario::new(dim, shape.clone(), eps, cfg.seed.wrapping_add(8000 + i as u64), cfg.gate_trials);
            for r in run_suite(&s)?.records {
                if r.outcome == Outcome::Skipped {
                    refused += 1;
                } else {
                    attempted += 1;
                }
            }
        }
        let s = Scenario::new(dim, shape, 0.0, cfg.seed.wrapping_add(9000 + i as u64), cfg.gate_trials);
        for r in run_suite(&s)?.records {
            zero_total += 1;
            match &r.report {
                Some(rep) if r.outcome == Outcome::Pass => zero_worst = zero_worst.max(rep.u_minus_i),
                _ => zero_bad += 1,
            }
        }
    }
    Ok(criterion(
        8,
        "degenerate gates",
        attempted == 0 && zero_bad == 0 && zero_worst <= IDENTITY_TOL,
        format!(
            "certificate >= 1/15: {refused} refused, {attempted} attempted; epsilon = 0: {}/{zero_total} passed, max ||u - I|| {zero_worst:.2e}",
            zero_total - zero_bad
        ),
    ))
}

/// Runs all eight suites in order.
pub fn run_all(cfg: &CheckConfig) -> Result<Vec<Criterion>> {
    let tol = ToleranceProfile::default();
    let suites = main_suites(cfg)?;
    Ok(vec![
        criterion_main_theorem(&suites),
        criterion_prop_bounds(&suites, &tol).0,
        criterion_lemmas(cfg, &tol),
        criterion_near_inclusion(cfg, &tol),
        criterion_dixmier(cfg, &tol),
        criterion_expectation(cfg, &suites, &tol),
        criterion_basic(cfg, &tol),
        criterion_gates(cfg)?,
    ])
}
