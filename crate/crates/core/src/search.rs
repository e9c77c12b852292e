//! Local search for the unbudgeted problem.
//!
//! Every strategy starts with all agents at their upper bound and `z = 1`,
//! and flips agents to their lower bound when `zᵢ` falls below `sᵢ`. They
//! differ in how much certainty they wait for:
//!
//! * conservative: flips only once every coordinate of `z` is separated from
//!   `s` by more than `err(t)`;
//! * opportunistic: as conservative, but phases `1..=opportunistic_phase_limit`
//!   may end early once the rate of newly certified agents stalls;
//! * optimistic: flips (and, rarely, unflips) on the raw estimate each
//!   iteration and only certifies at the very end.
//!
//! All three return the global minimizer over extreme points for the
//! perturbed opinions.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::seq::index;

use crate::dynamics::{
    equilibrium_exact, objective, EquilibriumEstimate, EquilibriumPath, DEFAULT_DENSE_LIMIT, SIGN_GUARD,
};
use crate::error::{check_len, Error, Result};
use crate::instance::{
    common_value, perturb_innate, streams, substream, ProblemInstance, ResistanceVector, DEFAULT_PERTURBATION,
};

/// Error level the per-phase iteration cap is sized for.
const CAP_TARGET: f64 = 1e-12;
/// Trace points are recorded every iteration until this many iterations.
const DENSE_TRACE_LIMIT: u64 = 1_000_000;
const SPARSE_TRACE_STRIDE: u64 = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    Conservative,
    Opportunistic,
    Optimistic,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Conservative, Strategy::Opportunistic, Strategy::Optimistic];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Conservative => "conservative",
            Strategy::Opportunistic => "opportunistic",
            Strategy::Optimistic => "optimistic",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conservative" => Ok(Strategy::Conservative),
            "opportunistic" => Ok(Strategy::Opportunistic),
            "optimistic" => Ok(Strategy::Optimistic),
            _ => Err(Error::InvalidConfig(format!("unknown strategy {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub strategy: Strategy,
    /// Iterations per slope sample in opportunistic phases.
    pub slope_window: u64,
    /// An opportunistic phase ends once the slope drops below this fraction
    /// of the largest slope seen in the phase. Zero disables the cutoff.
    pub slope_factor: f64,
    pub opportunistic_phase_limit: usize,
    pub perturb_magnitude: f64,
    pub seed: u64,
    /// Overrides the per-phase iteration cap derived from `ε_α`.
    pub max_phase_iterations: Option<u64>,
    pub dense_limit: usize,
    /// Re-check local optimality with a dense solve when `n <= dense_limit`.
    pub verify: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Optimistic,
            slope_window: 1000,
            slope_factor: 0.1,
            opportunistic_phase_limit: 6,
            perturb_magnitude: DEFAULT_PERTURBATION,
            seed: 0,
            max_phase_iterations: None,
            dense_limit: DEFAULT_DENSE_LIMIT,
            verify: true,
        }
    }
}

impl SolverConfig {
    pub fn with_strategy(strategy: Strategy) -> Self {
        Self {
            strategy,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.slope_factor) {
            return Err(Error::InvalidConfig(format!(
                "slope_factor must lie in [0, 1), got {}",
                self.slope_factor
            )));
        }
        if self.slope_window == 0 {
            return Err(Error::InvalidConfig("slope_window must be at least 1".into()));
        }
        if !(0.0..1e-6).contains(&self.perturb_magnitude) {
            return Err(Error::InvalidConfig(format!(
                "perturbation magnitude must lie in [0, 1e-6), got {}",
                self.perturb_magnitude
            )));
        }
        Ok(())
    }
}

/// Slack beyond `err(t)` before coordinate `i` counts as separated: a bound
/// on the rounding error of `zᵢ`, whose own update contributes a few ulps and
/// whose neighbours contribute `(1 - αᵢ)` times the accumulated error of a
/// contraction with rate `1 - eps`.
pub fn settle_guard(alpha_i: f64, eps: f64) -> f64 {
    16.0 * f64::EPSILON * (1.0 + (1.0 - alpha_i) / eps)
}

/// Every coordinate of `z` is farther than `err + guard` from `s`.
pub(crate) fn all_separated(z: &[f64], s: &[f64], alpha: &ResistanceVector, err: f64) -> bool {
    let eps = alpha.eps();
    (0..z.len()).all(|i| (s[i] - z[i]).abs() > err + settle_guard(alpha.get(i), eps))
}

/// Iterations needed for `err(t) <= 1e-12`, times ten.
pub fn phase_iteration_cap(eps: f64) -> u64 {
    let needed = (1.0 / (eps * CAP_TARGET)).ln() / -(1.0 - eps).ln();
    10 * needed.ceil().max(1.0) as u64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TracePoint {
    /// Global iteration index (number of `z` updates so far).
    pub iter: u64,
    /// Fraction of agents at their lower bound or certified to move there.
    pub ratio_lower: f64,
    pub phase: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PhaseRecord {
    pub phase: usize,
    pub length: u64,
    /// Agents flipped at the end of the phase (lowered plus raised).
    pub flipped: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveTrace {
    pub points: Vec<TracePoint>,
    pub phases: Vec<PhaseRecord>,
    /// Optimistic flips from the lower bound back to the upper bound.
    pub mistakes: u64,
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub alpha: ResistanceVector,
    pub at_lower: Vec<bool>,
    pub flip_counts: Vec<u32>,
    /// `1ᵀ z` of the final certified estimate (perturbed opinions).
    pub objective: f64,
    /// `n · err(t)` for the final estimate.
    pub objective_err: f64,
    pub iterations: u64,
    pub trace: SolveTrace,
    pub wall_time: Duration,
    pub perturbed_s: Vec<f64>,
}

impl SolveResult {
    pub fn lowered(&self) -> usize {
        self.at_lower.iter().filter(|&&b| b).count()
    }
}

pub fn solve_conservative(inst: &ProblemInstance, config: &SolverConfig) -> Result<SolveResult> {
    solve(
        inst,
        &SolverConfig {
            strategy: Strategy::Conservative,
            ..config.clone()
        },
    )
}

pub fn solve_opportunistic(inst: &ProblemInstance, config: &SolverConfig) -> Result<SolveResult> {
    solve(
        inst,
        &SolverConfig {
            strategy: Strategy::Opportunistic,
            ..config.clone()
        },
    )
}

pub fn solve_optimistic(inst: &ProblemInstance, config: &SolverConfig) -> Result<SolveResult> {
    solve(
        inst,
        &SolverConfig {
            strategy: Strategy::Optimistic,
            ..config.clone()
        },
    )
}

/// Runs the configured strategy. Any initial resistance on the instance is
/// ignored.
pub fn solve(inst: &ProblemInstance, config: &SolverConfig) -> Result<SolveResult> {
    config.validate()?;
    let start = Instant::now();
    let n = inst.n();
    // Identical opinions give z = c·1 for every α, so every corner is optimal.
    if let Some(c) = common_value(&inst.s) {
        return Ok(SolveResult {
            alpha: inst.upper_resistance(),
            at_lower: vec![false; n],
            flip_counts: vec![0; n],
            objective: n as f64 * c,
            objective_err: 0.0,
            iterations: 0,
            trace: SolveTrace::default(),
            wall_time: start.elapsed(),
            perturbed_s: inst.s.clone(),
        });
    }
    let s = perturb_innate(&inst.s, config.perturb_magnitude, config.seed);
    let mut search = Search::new(inst, &s, config);
    match config.strategy {
        Strategy::Optimistic => search.run_optimistic()?,
        Strategy::Conservative | Strategy::Opportunistic => search.run_certified()?,
    }
    let result = SolveResult {
        objective: search.est.total(),
        objective_err: n as f64 * search.est.err(),
        iterations: search.iterations,
        alpha: search.alpha,
        at_lower: search.at_lower,
        flip_counts: search.flip_counts,
        trace: search.trace,
        wall_time: start.elapsed(),
        perturbed_s: s,
    };
    if config.verify && n <= config.dense_limit {
        let perturbed = inst.with_opinions(result.perturbed_s.clone())?;
        let report = verify_local_optimality(
            &perturbed,
            result.alpha.as_slice(),
            &VerifyOptions {
                dense_limit: config.dense_limit,
                flip_limit: 0,
                ..VerifyOptions::default()
            },
        )?;
        if !report.violators.is_empty() {
            return Err(Error::VerificationFailed {
                agents: report.violators,
            });
        }
    }
    Ok(result)
}

struct Search<'a> {
    inst: &'a ProblemInstance,
    s: &'a [f64],
    config: &'a SolverConfig,
    alpha: ResistanceVector,
    at_lower: Vec<bool>,
    lowered: usize,
    flip_counts: Vec<u32>,
    est: EquilibriumEstimate,
    iterations: u64,
    phase: usize,
    phase_cap: u64,
    trace: SolveTrace,
}

impl<'a> Search<'a> {
    fn new(inst: &'a ProblemInstance, s: &'a [f64], config: &'a SolverConfig) -> Self {
        let n = inst.n();
        let alpha = inst.upper_resistance();
        let est = EquilibriumEstimate::ones(n, &alpha);
        let mut search = Self {
            inst,
            s,
            config,
            alpha,
            at_lower: vec![false; n],
            lowered: 0,
            flip_counts: vec![0; n],
            est,
            iterations: 0,
            phase: 0,
            phase_cap: 0,
            trace: SolveTrace::default(),
        };
        search.phase_cap = search.current_cap();
        search
    }

    fn current_cap(&self) -> u64 {
        self.config
            .max_phase_iterations
            .unwrap_or_else(|| phase_iteration_cap(self.alpha.eps()))
    }

    fn step(&mut self) -> Result<()> {
        if self.est.t() >= self.phase_cap {
            return Err(Error::IterationBudgetExceeded {
                phase: self.phase,
                iterations: self.iterations,
            });
        }
        self.est.step(&self.inst.matrix, self.s, &self.alpha)?;
        self.iterations += 1;
        Ok(())
    }

    fn record(&mut self, ratio_lower: f64) {
        let it = self.iterations;
        if it < DENSE_TRACE_LIMIT || it.is_multiple_of(SPARSE_TRACE_STRIDE) {
            self.trace.points.push(TracePoint {
                iter: it,
                ratio_lower,
                phase: self.phase,
            });
        }
    }

    fn set_lower(&mut self, i: usize, lower: bool) {
        self.at_lower[i] = lower;
        let value = if lower { self.inst.lower[i] } else { self.inst.upper[i] };
        self.alpha.set(i, value);
        self.flip_counts[i] += 1;
        if lower {
            self.lowered += 1;
        } else {
            self.lowered -= 1;
        }
    }

    fn end_phase(&mut self, flipped: usize) {
        self.trace.phases.push(PhaseRecord {
            phase: self.phase,
            length: self.est.t(),
            flipped,
        });
        self.phase += 1;
        self.est.restart(&self.alpha);
        self.phase_cap = self.current_cap();
    }

    /// Conservative and opportunistic updates.
    fn run_certified(&mut self) -> Result<()> {
        let n = self.inst.n();
        let window = self.config.slope_window;
        let mut candidates: Vec<usize> = Vec::new();
        let mut last_count = 0usize;
        let mut max_slope = 0.0f64;
        loop {
            self.step()?;
            let z = self.est.z();
            let err = self.est.err();
            let eps = self.alpha.eps();
            candidates.clear();
            let mut separated = true;
            for i in 0..n {
                let gap = self.s[i] - z[i];
                if gap.abs() <= err + settle_guard(self.alpha.get(i), eps) {
                    separated = false;
                } else if gap > 0.0 && !self.at_lower[i] {
                    candidates.push(i);
                }
            }
            self.record((self.lowered + candidates.len()) as f64 / n as f64);

            let mut flip = separated && !candidates.is_empty();
            if separated && candidates.is_empty() {
                self.trace.phases.push(PhaseRecord {
                    phase: self.phase,
                    length: self.est.t(),
                    flipped: 0,
                });
                return Ok(());
            }

            let opportunistic = self.config.strategy == Strategy::Opportunistic
                && (1..=self.config.opportunistic_phase_limit).contains(&self.phase);
            if opportunistic && self.est.t().is_multiple_of(window) {
                let count = candidates.len();
                let slope = (count as f64 - last_count as f64) / window as f64;
                let stalled = self.config.slope_factor > 0.0
                    && self.est.t() > window
                    && slope < self.config.slope_factor * max_slope;
                max_slope = max_slope.max(slope);
                last_count = count;
                if stalled && !candidates.is_empty() {
                    flip = true;
                }
            }

            if flip {
                for k in 0..candidates.len() {
                    self.set_lower(candidates[k], true);
                }
                self.end_phase(candidates.len());
                last_count = 0;
                max_slope = 0.0;
            }
        }
    }

    fn run_optimistic(&mut self) -> Result<()> {
        let n = self.inst.n();
        let mut lower_set: Vec<usize> = Vec::new();
        let mut raise_set: Vec<usize> = Vec::new();
        loop {
            self.step()?;
            let z = self.est.z();
            lower_set.clear();
            raise_set.clear();
            for i in 0..n {
                if !self.at_lower[i] && z[i] <= self.s[i] {
                    lower_set.push(i);
                } else if self.at_lower[i] && z[i] > self.s[i] {
                    raise_set.push(i);
                }
            }
            if lower_set.is_empty() && raise_set.is_empty() {
                let separated = all_separated(z, self.s, &self.alpha, self.est.err());
                self.record(self.lowered as f64 / n as f64);
                if separated {
                    self.trace.phases.push(PhaseRecord {
                        phase: self.phase,
                        length: self.est.t(),
                        flipped: 0,
                    });
                    return Ok(());
                }
                continue;
            }
            for k in 0..lower_set.len() {
                self.set_lower(lower_set[k], true);
            }
            for k in 0..raise_set.len() {
                self.set_lower(raise_set[k], false);
            }
            self.trace.mistakes += raise_set.len() as u64;
            self.record(self.lowered as f64 / n as f64);
            self.end_phase(lower_set.len() + raise_set.len());
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VerifyMode {
    /// Every single-coordinate flip evaluated with a dense objective.
    FlipObjective,
    /// Dense equilibrium; each coordinate checked by the sign of `sᵢ - zᵢ`.
    DenseSign,
    /// Certified iterative equilibrium; a sample of coordinates checked.
    SampledSign,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyOptions {
    pub dense_limit: usize,
    /// Largest `n` for [`VerifyMode::FlipObjective`].
    pub flip_limit: usize,
    /// Coordinates checked in [`VerifyMode::SampledSign`].
    pub sample: usize,
    pub seed: u64,
    /// Target radius of the iterative equilibrium.
    pub tolerance: f64,
    pub max_iterations: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            dense_limit: DEFAULT_DENSE_LIMIT,
            flip_limit: 64,
            sample: 1000,
            seed: 0,
            tolerance: 1e-10,
            max_iterations: 10_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalOptimalityReport {
    pub mode: VerifyMode,
    pub checked: Vec<usize>,
    /// Coordinates whose flip would strictly decrease the objective.
    pub violators: Vec<usize>,
}

impl LocalOptimalityReport {
    pub fn passed(&self) -> bool {
        self.violators.is_empty()
    }
}

/// Checks that no single-coordinate flip of the corner `alpha` decreases the
/// objective.
pub fn verify_local_optimality(
    inst: &ProblemInstance,
    alpha: &[f64],
    options: &VerifyOptions,
) -> Result<LocalOptimalityReport> {
    let n = inst.n();
    check_len(n, alpha.len())?;
    let at_lower = corner_flags(inst, alpha)?;

    if n <= options.flip_limit && n <= options.dense_limit {
        let path = EquilibriumPath::Dense {
            limit: options.dense_limit,
        };
        let base = objective(inst, alpha, path)?;
        let slack = 1e-9 * n as f64;
        let mut flipped = alpha.to_vec();
        let mut violators = Vec::new();
        for i in 0..n {
            flipped[i] = if at_lower[i] { inst.upper[i] } else { inst.lower[i] };
            if objective(inst, &flipped, path)? < base - slack {
                violators.push(i);
            }
            flipped[i] = alpha[i];
        }
        return Ok(LocalOptimalityReport {
            mode: VerifyMode::FlipObjective,
            checked: (0..n).collect(),
            violators,
        });
    }

    // Lowering agent i helps iff sᵢ > zᵢ; raising helps iff sᵢ < zᵢ.
    let violates = |i: usize, z: f64, radius: f64| {
        let gap = inst.s[i] - z;
        let bar = radius + SIGN_GUARD;
        if at_lower[i] {
            gap < -bar
        } else {
            gap > bar
        }
    };

    if n <= options.dense_limit {
        let z = equilibrium_exact(inst, alpha, options.dense_limit)?;
        let violators = (0..n).filter(|&i| violates(i, z[i], 0.0)).collect();
        return Ok(LocalOptimalityReport {
            mode: VerifyMode::DenseSign,
            checked: (0..n).collect(),
            violators,
        });
    }

    let resistance = ResistanceVector::new(alpha.to_vec())?;
    let est = crate::dynamics::equilibrium_iterative(
        &inst.matrix,
        &inst.s,
        &resistance,
        options.tolerance,
        options.max_iterations,
    )?;
    let mut rng = substream(options.seed, streams::SAMPLING);
    let mut checked: Vec<usize> = index::sample(&mut rng, n, options.sample.min(n)).into_vec();
    checked.sort_unstable();
    let z = est.z();
    let radius = est.err();
    let inconclusive: Vec<usize> = checked
        .iter()
        .copied()
        .filter(|&i| (inst.s[i] - z[i]).abs() <= radius + SIGN_GUARD && !violates(i, z[i], radius))
        .collect();
    let violators: Vec<usize> = checked.iter().copied().filter(|&i| violates(i, z[i], radius)).collect();
    if violators.is_empty() && !inconclusive.is_empty() {
        return Err(Error::Inconclusive { agents: inconclusive });
    }
    Ok(LocalOptimalityReport {
        mode: VerifyMode::SampledSign,
        checked,
        violators,
    })
}

/// `true` where `alpha` sits at the lower bound; errors if any coordinate is
/// not at a bound.
pub fn corner_flags(inst: &ProblemInstance, alpha: &[f64]) -> Result<Vec<bool>> {
    alpha
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            if a == inst.lower[i] {
                Ok(true)
            } else if a == inst.upper[i] {
                Ok(false)
            } else {
                Err(Error::InvalidInstance(format!(
                    "resistance {a} of agent {i} is not at a bound"
                )))
            }
        })
        .collect()
}
