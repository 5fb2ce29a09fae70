//! Randomized conjugation instances and the trial runner.
//!
//! An instance is `N = W B W*` for a block algebra `B` and a Haar unitary
//! `W`, perturbed to `M = v N v*` with `||v - I|| = epsilon`. The unitary
//! `v` certifies `d(N, M) <= 2 epsilon`.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{relative_commutant, Subalgebra};
use crate::error::{Error, Result};
use crate::expectation::{pp_constant, trace_expectation, verify_expectation, ConditionalExpectation};
use crate::linalg::{exp_i_hermitian, identity, opnorm, Matrix, ToleranceProfile};
use crate::perturbation::{conjugating_unitary, distance_interval, ek_expectation, PipelineOptions, ReportJson};
use crate::rng;

pub const MIN_DIM: usize = 2;
pub const MAX_DIM: usize = 8;

/// Block structure of `N`: `(k, m)` is `M_k` repeated `m` times.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Shape {
    /// The diagonal algebra of the ambient dimension.
    Masa,
    Blocks(Vec<(usize, usize)>),
}

impl Shape {
    pub fn blocks(&self, n: usize) -> Vec<(usize, usize)> {
        match self {
            Shape::Masa => vec![(1, 1); n],
            Shape::Blocks(b) => b.clone(),
        }
    }

    pub fn algebra(&self, n: usize) -> Result<Subalgebra> {
        Subalgebra::multimatrix(n, &self.blocks(n))
    }
}

impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("masa") || s.eq_ignore_ascii_case("diagonal") {
            return Ok(Shape::Masa);
        }
        let bad = || Error::InvalidInput(format!("bad shape {s:?}; expected \"masa\" or \"k1xm1,k2xm2,...\""));
        let mut blocks = Vec::new();
        for part in s.split(',') {
            let (k, m) = part.trim().split_once(['x', 'X']).ok_or_else(bad)?;
            let k: usize = k.trim().parse().map_err(|_| bad())?;
            let m: usize = m.trim().parse().map_err(|_| bad())?;
            if k == 0 || m == 0 {
                return Err(bad());
            }
            blocks.push((k, m));
        }
        Ok(Shape::Blocks(blocks))
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Masa => f.write_str("masa"),
            Shape::Blocks(b) => {
                let parts: Vec<String> = b.iter().map(|(k, m)| format!("{k}x{m}")).collect();
                f.write_str(&parts.join(","))
            }
        }
    }
}

impl Serialize for Shape {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Shape {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub ambient_dim: usize,
    pub shape: Shape,
    pub epsilon: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eq_eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psd_eps: Option<f64>,
    /// Haar samples per algebra for the distance lower bound.
    #[serde(default = "default_distance_samples")]
    pub distance_samples: usize,
    #[serde(default = "default_map_samples")]
    pub map_samples: usize,
    /// Samples for checking `E_K`.
    #[serde(default = "default_expectation_samples")]
    pub expectation_samples: usize,
    #[serde(default = "default_pp_budget")]
    pub pp_budget: usize,
    #[serde(default)]
    pub allow_above_gate: bool,
}

fn default_trials() -> usize {
    1
}
fn default_distance_samples() -> usize {
    32
}
fn default_map_samples() -> usize {
    64
}
fn default_expectation_samples() -> usize {
    8
}
fn default_pp_budget() -> usize {
    16
}

impl Scenario {
    pub fn new(ambient_dim: usize, shape: Shape, epsilon: f64, seed: u64, trials: usize) -> Self {
        Self {
            ambient_dim,
            shape,
            epsilon,
            seed,
            trials,
            rank_eps: None,
            eq_eps: None,
            psd_eps: None,
            distance_samples: default_distance_samples(),
            map_samples: default_map_samples(),
            expectation_samples: default_expectation_samples(),
            pp_budget: default_pp_budget(),
            allow_above_gate: false,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::InvalidInput(format!("config: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn tolerances(&self) -> Result<ToleranceProfile> {
        let d = ToleranceProfile::default();
        ToleranceProfile::new(
            self.rank_eps.unwrap_or(d.rank_eps),
            self.eq_eps.unwrap_or(d.eq_eps),
            self.psd_eps.unwrap_or(d.psd_eps),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(MIN_DIM..=MAX_DIM).contains(&self.ambient_dim) {
            return Err(Error::InvalidInput(format!(
                "ambient_dim must lie in [{MIN_DIM}, {MAX_DIM}], got {}",
                self.ambient_dim
            )));
        }
        let used: usize = self.shape.blocks(self.ambient_dim).iter().map(|(k, m)| k * m).sum();
        if used > self.ambient_dim {
            return Err(Error::InvalidInput(format!(
                "shape {} needs dimension {used} > {}",
                self.shape, self.ambient_dim
            )));
        }
        // ||exp(ih) - I|| cannot exceed 2
        if !(self.epsilon >= 0.0 && self.epsilon <= 2.0) {
            return Err(Error::InvalidInput(format!("epsilon must lie in [0, 2], got {}", self.epsilon)));
        }
        if self.trials == 0 {
            return Err(Error::InvalidInput("trials must be positive".into()));
        }
        if self.distance_samples == 0 || self.map_samples == 0 || self.pp_budget == 0 {
            return Err(Error::InvalidInput("sample counts must be positive".into()));
        }
        self.tolerances()?;
        Ok(())
    }
}

pub struct Instance {
    pub n: Subalgebra,
    pub m: Subalgebra,
    pub l: Subalgebra,
    pub e_n: ConditionalExpectation,
    pub e_m: ConditionalExpectation,
    pub v: Matrix,
    /// `2 ||v - I||`.
    pub certificate: f64,
}

/// Generator for trial `trial` of `s`; also feeds the pipeline's seeds.
pub fn trial_rng(s: &Scenario, trial: usize) -> rng::TrialRng {
    rng::stream(s.seed, trial as u64)
}

/// `v = exp(i theta h)` with `||h|| = 1` and `theta = 2 asin(epsilon / 2)`,
/// so that `||v - I|| = max |exp(i theta lambda) - 1|` over `|lambda| <= 1`
/// is attained at `|lambda| = 1` and equals `epsilon`.
///
/// `h` is drawn trace-orthogonal to `fixed` when that leaves anything, so
/// `v` spends its size moving `N` instead of commuting with it.
pub fn perturbation_unitary<R: rand::Rng + ?Sized>(
    n: usize,
    epsilon: f64,
    fixed: Option<&Subalgebra>,
    rng: &mut R,
) -> Matrix {
    if epsilon == 0.0 {
        return identity(n);
    }
    let h0 = Subalgebra::full(n).random_hermitian(rng);
    let mut h = match fixed {
        Some(f) => &h0 - f.project(&h0),
        None => h0.clone(),
    };
    // N' contains every Hermitian when N is trivial
    if opnorm(&h) <= 1e-8 * opnorm(&h0) {
        h = h0;
    }
    let h = crate::linalg::hermitian_part(&h);
    let theta = 2.0 * (epsilon / 2.0).asin();
    exp_i_hermitian(&h.scale(theta / opnorm(&h)))
}

pub fn make_instance(s: &Scenario, trial: usize) -> Result<Instance> {
    s.validate()?;
    let tol = s.tolerances()?;
    let n_dim = s.ambient_dim;
    let mut r = trial_rng(s, trial);
    let l = Subalgebra::full(n_dim);
    let w = l.haar_unitary(&mut r, &tol);
    let n = s.shape.algebra(n_dim)?.conjugate(&w);
    let commutant = relative_commutant(&n, &l, &tol)?;
    let v = perturbation_unitary(n_dim, s.epsilon, Some(&commutant), &mut r);
    let m = n.conjugate(&v);
    let e_n = trace_expectation(&l, &n, &tol)?;
    let e_m = trace_expectation(&l, &m, &tol)?;
    let certificate = 2.0 * opnorm(&(&v - identity(n_dim)));
    Ok(Instance {
        n,
        m,
        l,
        e_n,
        e_m,
        v,
        certificate,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Fail,
    /// Distance gate refused the instance.
    Skipped,
}

/// Acceptance verdicts for one successful pipeline run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdicts {
    pub unitary: bool,
    pub conjugacy: bool,
    pub bound_14: bool,
    pub bound_20: bool,
    pub ek_expectation: bool,
    pub pp_positive: bool,
}

impl Verdicts {
    pub fn all(&self) -> bool {
        self.unitary && self.conjugacy && self.bound_14 && self.bound_20 && self.ek_expectation && self.pp_positive
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub outcome: Outcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub certificate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdicts: Option<Verdicts>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<ReportJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ek_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pp_constant: Option<f64>,
    pub wall_ms: f64,
}

impl TrialRecord {
    /// `||u - I|| / d_hi`, zero when `d_hi = 0`.
    pub fn ratio(&self) -> Option<f64> {
        self.report.as_ref().map(|r| if r.d_hi > 0.0 { r.u_minus_i / r.d_hi } else { 0.0 })
    }
}

/// Unitarity tolerance for the acceptance verdict.
pub const UNITARY_TOL: f64 = 1e-10;

pub fn run_trial(s: &Scenario, trial: usize) -> TrialRecord {
    let start = Instant::now();
    let mut rec = TrialRecord {
        trial,
        outcome: Outcome::Fail,
        error: None,
        certificate: f64::NAN,
        verdicts: None,
        report: None,
        ek_residual: None,
        pp_constant: None,
        wall_ms: 0.0,
    };
    if let Err(e) = run_trial_inner(s, trial, &mut rec) {
        rec.outcome = if e.is_hypothesis() { Outcome::Skipped } else { Outcome::Fail };
        rec.error = Some(e.to_string());
    }
    rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    rec
}

fn run_trial_inner(s: &Scenario, trial: usize, rec: &mut TrialRecord) -> Result<()> {
    let tol = s.tolerances()?;
    let inst = make_instance(s, trial)?;
    rec.certificate = inst.certificate;
    // seeds for the pipeline's own sampling come after the instance draws
    let mut r = trial_rng(s, trial);
    r.set_word_pos(1 << 40);
    let (d_seed, map_seed, ek_seed, pp_seed) = (r.next_u64(), r.next_u64(), r.next_u64(), r.next_u64());

    let d = distance_interval(
        &inst.n,
        &inst.m,
        &inst.e_m,
        &inst.e_n,
        s.distance_samples,
        d_seed,
        Some(inst.certificate),
        &tol,
    )?;
    let opts = PipelineOptions {
        map_samples: s.map_samples,
        seed: map_seed,
        allow_above_gate: s.allow_above_gate,
    };
    let rep = conjugating_unitary(&inst.n, &inst.m, &inst.l, &inst.e_n, &inst.e_m, &d, &opts, &tol)?;
    let ek = ek_expectation(&inst.n, &inst.m, &inst.l, &inst.e_n, &inst.e_m, &rep.iso, &tol)?;
    let ek_rep = verify_expectation(&ek, s.expectation_samples, ek_seed, &tol);
    let pp = pp_constant(&ek, s.pp_budget, pp_seed, &tol)?.c_hi;

    let v = Verdicts {
        unitary: rep.unitarity_residual <= UNITARY_TOL,
        conjugacy: rep.conjugacy_residual.max(rep.reverse_conjugacy_residual) <= tol.eq_eps,
        bound_14: rep.bound_14_ok,
        bound_20: rep.bound_20_ok,
        ek_expectation: ek_rep.passed,
        pp_positive: pp > 0.0,
    };
    rec.outcome = if v.all() { Outcome::Pass } else { Outcome::Fail };
    rec.verdicts = Some(v);
    rec.ek_residual = Some(ek_rep.max_residual());
    rec.pp_constant = Some(pp);
    rec.report = Some(rep.to_json());
    Ok(())
}

/// Aggregates over a suite. Contains no timing, so identical scenarios
/// serialize to identical bytes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: Option<Scenario>,
    pub trials: usize,
    pub passed: usize,
    pub failed: usize,
    pub skipped: usize,
    pub pass_rate: f64,
    pub max_ratio: f64,
    #[serde(rename = "max_u_minus_I")]
    pub max_u_minus_i: f64,
    pub max_d_hi: f64,
    pub max_unitarity_residual: f64,
    pub max_conjugacy_residual: f64,
    pub max_hom_residual: f64,
    pub max_intertwining_residual: f64,
    pub max_ek_residual: f64,
    pub min_pp_constant: Option<f64>,
    /// Max of `norm_phi_minus_id / d_hi`.
    pub max_phi_ratio: f64,
}

impl Summary {
    pub fn from_records(scenario: Option<Scenario>, records: &[TrialRecord]) -> Self {
        let mut s = Summary {
            scenario,
            trials: records.len(),
            ..Summary::default()
        };
        for r in records {
            match r.outcome {
                Outcome::Pass => s.passed += 1,
                Outcome::Fail => s.failed += 1,
                Outcome::Skipped => s.skipped += 1,
            }
            if let Some(rep) = &r.report {
                s.max_ratio = s.max_ratio.max(r.ratio().unwrap_or(0.0));
                s.max_u_minus_i = s.max_u_minus_i.max(rep.u_minus_i);
                s.max_d_hi = s.max_d_hi.max(rep.d_hi);
                s.max_unitarity_residual = s.max_unitarity_residual.max(rep.unitarity_residual);
                s.max_conjugacy_residual = s
                    .max_conjugacy_residual
                    .max(rep.conjugacy_residual)
                    .max(rep.reverse_conjugacy_residual);
                s.max_hom_residual = s.max_hom_residual.max(rep.hom_residual);
                s.max_intertwining_residual = s.max_intertwining_residual.max(rep.intertwining_residual);
                if rep.d_hi > 0.0 {
                    s.max_phi_ratio = s.max_phi_ratio.max(rep.norm_phi_minus_id / rep.d_hi);
                }
            }
            if let Some(e) = r.ek_residual {
                s.max_ek_residual = s.max_ek_residual.max(e);
            }
            if let Some(c) = r.pp_constant {
                s.min_pp_constant = Some(s.min_pp_constant.map_or(c, |m: f64| m.min(c)));
            }
        }
        if s.trials > 0 {
            s.pass_rate = s.passed as f64 / s.trials as f64;
        }
        s
    }

    /// No trial failed. Skipped trials are not failures.
    pub fn ok(&self) -> bool {
        self.failed == 0
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuiteResult {
    pub summary: Summary,
    pub records: Vec<TrialRecord>,
}

/// Runs every trial of `s` in parallel; records come back in trial order.
pub fn run_suite(s: &Scenario) -> Result<SuiteResult> {
    s.validate()?;
    let records: Vec<TrialRecord> = (0..s.trials).into_par_iter().map(|t| run_trial(s, t)).collect();
    Ok(SuiteResult {
        summary: Summary::from_records(Some(s.clone()), &records),
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_parsing() {
        assert_eq!("masa".parse::<Shape>().unwrap(), Shape::Masa);
        assert_eq!("1x1, 2x1".parse::<Shape>().unwrap(), Shape::Blocks(vec![(1, 1), (2, 1)]));
        assert_eq!("2X3".parse::<Shape>().unwrap().to_string(), "2x3");
        for bad in ["", "2", "0x1", "ax1", "1x1,,"] {
            assert!(bad.parse::<Shape>().is_err(), "{bad}");
        }
    }

    #[test]
    fn scenario_validation() {
        assert!(Scenario::new(3, Shape::Masa, 0.01, 0, 1).validate().is_ok());
        assert!(Scenario::new(1, Shape::Masa, 0.01, 0, 1).validate().is_err());
        assert!(Scenario::new(9, Shape::Masa, 0.01, 0, 1).validate().is_err());
        assert!(Scenario::new(3, "2x2".parse().unwrap(), 0.01, 0, 1).validate().is_err());
        assert!(Scenario::new(3, Shape::Masa, -0.1, 0, 1).validate().is_err());
        assert!(Scenario::new(3, Shape::Masa, f64::NAN, 0, 1).validate().is_err());
        assert!(Scenario::new(3, Shape::Masa, 0.01, 0, 0).validate().is_err());
        let mut s = Scenario::new(3, Shape::Masa, 0.01, 0, 1);
        s.eq_eps = Some(0.5);
        assert!(s.validate().is_err());
    }

    #[test]
    fn toml_config() {
        let s = Scenario::from_toml("ambient_dim = 3\nshape = \"1x1,2x1\"\nepsilon = 0.005\nseed = 7\ntrials = 4\neq_eps = 1e-7\n")
            .unwrap();
        assert_eq!(s.shape, Shape::Blocks(vec![(1, 1), (2, 1)]));
        assert_eq!((s.seed, s.trials), (7, 4));
        assert_eq!(s.tolerances().unwrap().eq_eps, 1e-7);
        assert!(Scenario::from_toml("ambient_dim = 3\nshape = \"masa\"\nepsilon = 0.1\nbogus = 1\n").is_err());
        let back = Scenario::from_toml(&toml::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn perturbation_has_requested_size() {
        let mut r = rng::seeded(3);
        for n in 2..6 {
            let d = Subalgebra::diagonal(n);
            let fixed = [None, Some(Subalgebra::scalars(n)), Some(d.clone()), Some(Subalgebra::full(n))];
            for f in &fixed {
                for eps in [0.001, 0.01, 0.3, 1.5] {
                    let v = perturbation_unitary(n, eps, f.as_ref(), &mut r);
                    assert!((opnorm(&(&v - identity(n))) - eps).abs() < 1e-12);
                    assert!(crate::linalg::unitarity_residual(&v) < 1e-13);
                }
            }
            // generator orthogonal to the diagonal: log v has zero diagonal
            let v = perturbation_unitary(n, 0.01, Some(&d), &mut r);
            let moved = d.conjugate(&v);
            assert!(moved.span_distance(&d) > 1e-4);
        }
        assert_eq!(perturbation_unitary(3, 0.0, None, &mut r), identity(3));
    }

    #[test]
    fn instance_examples() {
        let s = Scenario::new(2, Shape::Masa, 0.0, 1, 1);
        let inst = make_instance(&s, 0).unwrap();
        assert_eq!(inst.certificate, 0.0);
        assert!(inst.m.span_distance(&inst.n) < 1e-14);

        let s = Scenario::new(2, Shape::Masa, 0.01, 1, 1);
        assert!((make_instance(&s, 0).unwrap().certificate - 0.02).abs() < 1e-12);

        let s = Scenario::new(3, Shape::Masa, 0.005, 2, 1);
        let inst = make_instance(&s, 3).unwrap();
        assert_eq!(inst.n.dim(), 3);
        assert!(inst.n.validate().max() < 1e-12 && inst.m.validate().max() < 1e-12);
        // N is abelian
        for a in inst.n.basis() {
            for b in inst.n.basis() {
                assert!((a * b - b * a).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn suite_examples() {
        let s = Scenario::new(2, Shape::Masa, 0.0, 0, 1);
        let res = run_suite(&s).unwrap();
        assert_eq!((res.summary.passed, res.summary.max_ratio), (1, 0.0));

        let s = Scenario::new(2, Shape::Masa, 0.1, 0, 2);
        let res = run_suite(&s).unwrap();
        assert_eq!(res.summary.skipped, 2, "{:?}", res.records);
        assert!(res.summary.ok());
        assert!(res.records.iter().all(|r| r.error.as_deref().unwrap().contains("hypothesis")));

        let s = Scenario::new(3, "1x1,2x1".parse().unwrap(), 0.01, 5, 3);
        let res = run_suite(&s).unwrap();
        assert_eq!(res.summary.passed, 3, "{:?}", res.records);
        assert!(res.records.iter().enumerate().all(|(i, r)| r.trial == i));
    }
}
