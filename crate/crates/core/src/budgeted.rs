//! Heuristics for the budgeted problem, where at most `k` agents may move
//! away from their initial resistance `α⁰`.
//!
//! Selected agents are always placed at one of their bounds, and the set of
//! selected agents is settled with the optimistic update restricted to that
//! set, starting from `z = 1`.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::seq::index;
use rayon::prelude::*;

use crate::dynamics::{DerivativeEstimate, EquilibriumEstimate};
use crate::error::{check_len, Error, Result};
use crate::instance::{
    common_value, perturb_innate, streams, substream, ProblemInstance, ResistanceVector, DEFAULT_PERTURBATION,
};
use crate::search::{all_separated, phase_iteration_cap};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BatchSize {
    Count(usize),
    /// Fraction of the budget, rounded up.
    Fraction(f64),
}

impl BatchSize {
    /// Agents per batch for budget `k`.
    pub fn resolve(self, k: usize) -> usize {
        match self {
            BatchSize::Count(b) => b,
            BatchSize::Fraction(f) => ((f * k as f64).ceil() as usize).clamp(1, k.max(1)),
        }
    }
}

impl fmt::Display for BatchSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BatchSize::Count(b) => write!(f, "{b}"),
            BatchSize::Fraction(x) => write!(f, "{}%", x * 100.0),
        }
    }
}

impl FromStr for BatchSize {
    type Err = Error;

    /// `"5"` is a count; `"10%"` and `"0.1"` are fractions of the budget.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("invalid batch size {s:?}"));
        let fraction = if let Some(p) = s.strip_suffix('%') {
            Some(p.parse::<f64>().map_err(|_| bad())? / 100.0)
        } else if s.contains('.') {
            Some(s.parse::<f64>().map_err(|_| bad())?)
        } else {
            None
        };
        match fraction {
            Some(f) if f > 0.0 && f <= 1.0 => Ok(BatchSize::Fraction(f)),
            Some(_) => Err(bad()),
            None => Ok(BatchSize::Count(s.parse().map_err(|_| bad())?)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BudgetStrategy {
    Marginal,
    BatchGradient,
    Random,
}

impl BudgetStrategy {
    pub fn name(self) -> &'static str {
        match self {
            BudgetStrategy::Marginal => "marginal",
            BudgetStrategy::BatchGradient => "bgg",
            BudgetStrategy::Random => "random",
        }
    }
}

impl fmt::Display for BudgetStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BudgetStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "marginal" => Ok(BudgetStrategy::Marginal),
            "bgg" | "batch_gradient" => Ok(BudgetStrategy::BatchGradient),
            "random" => Ok(BudgetStrategy::Random),
            _ => Err(Error::InvalidConfig(format!("unknown budgeted strategy {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BudgetConfig {
    pub k: usize,
    pub batch: BatchSize,
    /// Seeds the perturbation and the random baseline's selection.
    pub seed: u64,
    pub perturb_magnitude: f64,
    pub max_phase_iterations: Option<u64>,
    /// Extra iterations allowed per batch while waiting for the derivative
    /// bounds to separate. Defaults to the phase cap.
    pub max_separation_iterations: Option<u64>,
}

impl BudgetConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            batch: BatchSize::Count(1),
            seed: 0,
            perturb_magnitude: DEFAULT_PERTURBATION,
            max_phase_iterations: None,
            max_separation_iterations: None,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 || self.k > n {
            return Err(Error::InvalidConfig(format!("budget k={} must lie in 1..={n}", self.k)));
        }
        let b = self.batch.resolve(self.k);
        if b == 0 || b > self.k {
            return Err(Error::InvalidConfig(format!(
                "batch size {b} must lie in 1..={}",
                self.k
            )));
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

/// Objective estimate after a round of selection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BudgetRound {
    pub selected: usize,
    pub objective: f64,
}

#[derive(Clone, Debug)]
pub struct BudgetedResult {
    pub strategy: BudgetStrategy,
    pub k: usize,
    pub alpha: Vec<f64>,
    pub selected: Vec<bool>,
    /// Selected agents in the order they were added.
    pub order: Vec<usize>,
    /// `1ᵀ z` of the final settled estimate (perturbed opinions).
    pub objective: f64,
    pub objective_err: f64,
    /// One entry per round, starting with the empty selection.
    pub history: Vec<BudgetRound>,
    /// Some batch was chosen without its bounds separating.
    pub stalled: bool,
    pub iterations: u64,
    pub mistakes: u64,
    pub wall_time: Duration,
    pub perturbed_s: Vec<f64>,
}

/// Lower and upper bounds on `dᵢ` and on `δᵢ = |dᵢ| · (available change)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DerivativeBounds {
    pub d_lower: Vec<f64>,
    pub d_upper: Vec<f64>,
    pub delta_lower: Vec<f64>,
    pub delta_upper: Vec<f64>,
}

impl DerivativeBounds {
    /// Bounds from estimates `z`, `r` whose radii are `err` and `n · err`.
    ///
    /// Negative lower-bound factors are clamped to zero.
    pub fn compute(inst: &ProblemInstance, s: &[f64], alpha: &[f64], z: &[f64], r: &[f64], err: f64) -> Self {
        let n = inst.n();
        let r_err = n as f64 * err;
        let mut b = Self {
            d_lower: vec![0.0; n],
            d_upper: vec![0.0; n],
            delta_lower: vec![0.0; n],
            delta_upper: vec![0.0; n],
        };
        for i in 0..n {
            let gap = (s[i] - z[i]).abs();
            let damp = 1.0 - alpha[i];
            let du = (r[i] + r_err) * (gap + err) / damp;
            let dl = (r[i] - r_err).max(0.0) * (gap - err).max(0.0) / damp;
            let down = alpha[i] - inst.lower[i];
            let up = inst.upper[i] - alpha[i];
            let (room_l, room_u) = if gap <= err {
                (0.0, down.max(up))
            } else if s[i] >= z[i] {
                (down, down)
            } else {
                (up, up)
            };
            b.d_lower[i] = dl;
            b.d_upper[i] = du;
            b.delta_lower[i] = dl * room_l;
            b.delta_upper[i] = du * room_u;
        }
        b
    }
}

pub fn solve_budgeted(
    inst: &ProblemInstance,
    strategy: BudgetStrategy,
    config: &BudgetConfig,
) -> Result<BudgetedResult> {
    match strategy {
        BudgetStrategy::Marginal => marginal_greedy(inst, config),
        BudgetStrategy::BatchGradient => batch_gradient_greedy(inst, config),
        BudgetStrategy::Random => random_baseline(inst, config),
    }
}

struct Setup {
    start: Instant,
    s: Vec<f64>,
    alpha: ResistanceVector,
}

fn setup(inst: &ProblemInstance, config: &BudgetConfig) -> Result<Setup> {
    config.validate(inst.n())?;
    let alpha = inst.initial_resistance()?;
    Ok(Setup {
        start: Instant::now(),
        s: perturb_innate(&inst.s, config.perturb_magnitude, config.seed),
        alpha,
    })
}

/// With identical opinions every selection leaves `z = c·1`; nobody is selected.
fn unanimous(
    inst: &ProblemInstance,
    strategy: BudgetStrategy,
    config: &BudgetConfig,
) -> Result<Option<BudgetedResult>> {
    let Some(c) = common_value(&inst.s) else {
        return Ok(None);
    };
    let st = setup(inst, config)?;
    let n = inst.n();
    let objective = n as f64 * c;
    Ok(Some(BudgetedResult {
        strategy,
        k: config.k,
        alpha: st.alpha.into_vec(),
        selected: vec![false; n],
        order: Vec::new(),
        objective,
        objective_err: 0.0,
        history: vec![BudgetRound { selected: 0, objective }],
        stalled: false,
        iterations: 0,
        mistakes: 0,
        wall_time: st.start.elapsed(),
        perturbed_s: inst.s.clone(),
    }))
}

/// Counters accumulated by the settling loops.
#[derive(Clone, Copy, Debug, Default)]
struct Work {
    iterations: u64,
    mistakes: u64,
}

impl std::ops::AddAssign for Work {
    fn add_assign(&mut self, rhs: Self) {
        self.iterations += rhs.iterations;
        self.mistakes += rhs.mistakes;
    }
}

/// Optimistic updates restricted to `members` until every coordinate of `z`
/// is separated from `s` by more than `err(t)`. `r` is co-iterated when given.
fn settle(
    inst: &ProblemInstance,
    s: &[f64],
    alpha: &mut ResistanceVector,
    members: &[usize],
    est: &mut EquilibriumEstimate,
    mut r: Option<&mut DerivativeEstimate>,
    cap: Option<u64>,
) -> Result<Work> {
    let mut work = Work::default();
    let mut phase = 0;
    let mut phase_cap = cap.unwrap_or_else(|| phase_iteration_cap(alpha.eps()));
    let mut moves: Vec<(usize, f64)> = Vec::new();
    loop {
        if est.t() >= phase_cap {
            return Err(Error::IterationBudgetExceeded {
                phase,
                iterations: work.iterations,
            });
        }
        if let Some(r) = r.as_deref_mut() {
            r.step(&inst.matrix, alpha)?;
        }
        est.step(&inst.matrix, s, alpha)?;
        work.iterations += 1;

        let z = est.z();
        moves.clear();
        for &i in members {
            let a = alpha.get(i);
            if a == inst.upper[i] && z[i] <= s[i] {
                moves.push((i, inst.lower[i]));
            } else if a == inst.lower[i] && z[i] > s[i] {
                moves.push((i, inst.upper[i]));
                work.mistakes += 1;
            }
        }
        if moves.is_empty() {
            if all_separated(z, s, alpha, est.err()) {
                return Ok(work);
            }
            continue;
        }
        for &(i, v) in &moves {
            alpha.set(i, v);
        }
        est.restart(alpha);
        if let Some(r) = r.as_deref_mut() {
            r.rebase(alpha);
        }
        phase += 1;
        phase_cap = cap.unwrap_or_else(|| phase_iteration_cap(alpha.eps()));
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    strategy: BudgetStrategy,
    config: &BudgetConfig,
    setup: Setup,
    order: Vec<usize>,
    est: &EquilibriumEstimate,
    history: Vec<BudgetRound>,
    stalled: bool,
    work: Work,
) -> BudgetedResult {
    let n = setup.alpha.len();
    let mut selected = vec![false; n];
    for &i in &order {
        selected[i] = true;
    }
    BudgetedResult {
        strategy,
        k: config.k,
        alpha: setup.alpha.into_vec(),
        selected,
        order,
        objective: est.total(),
        objective_err: n as f64 * est.err(),
        history,
        stalled,
        iterations: work.iterations,
        mistakes: work.mistakes,
        wall_time: setup.start.elapsed(),
        perturbed_s: setup.s,
    }
}

/// Adds, one agent per round, the candidate whose settled estimate of
/// `1ᵀ z` is smallest. Candidates are evaluated independently from `z = 1`.
pub fn marginal_greedy(inst: &ProblemInstance, config: &BudgetConfig) -> Result<BudgetedResult> {
    if let Some(r) = unanimous(inst, BudgetStrategy::Marginal, config)? {
        return Ok(r);
    }
    let mut st = setup(inst, config)?;
    let n = inst.n();
    let mut in_t = vec![false; n];
    let mut order: Vec<usize> = Vec::new();
    let mut best_f = n as f64;
    let mut best_est: Option<EquilibriumEstimate> = None;
    let mut work = Work::default();
    let mut history = Vec::with_capacity(config.k + 1);
    history.push(BudgetRound {
        selected: 0,
        objective: initial_objective(inst, &st, config)?,
    });

    for _round in 0..config.k {
        let candidates: Vec<usize> = (0..n).filter(|&v| !in_t[v]).collect();
        let evaluated = candidates
            .par_iter()
            .map(|&v| {
                let mut alpha = st.alpha.clone();
                alpha.set(v, inst.upper[v]);
                let mut members = order.clone();
                members.push(v);
                let mut est = EquilibriumEstimate::ones(n, &alpha);
                let w = settle(
                    inst,
                    &st.s,
                    &mut alpha,
                    &members,
                    &mut est,
                    None,
                    config.max_phase_iterations,
                )?;
                Ok((v, est.total(), alpha, est, w))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut winner = None;
        for (v, f, alpha, est, w) in evaluated {
            work += w;
            if f < best_f {
                best_f = f;
                winner = Some((v, alpha, est));
            }
        }
        if let Some((v, alpha, est)) = winner {
            in_t[v] = true;
            order.push(v);
            st.alpha = alpha;
            best_est = Some(est);
        }
        history.push(BudgetRound {
            selected: order.len(),
            objective: best_f,
        });
    }

    let est = match best_est {
        Some(est) => est,
        None => {
            let mut alpha = st.alpha.clone();
            let mut est = EquilibriumEstimate::ones(n, &alpha);
            work += settle(
                inst,
                &st.s,
                &mut alpha,
                &[],
                &mut est,
                None,
                config.max_phase_iterations,
            )?;
            est
        }
    };
    Ok(finish(
        BudgetStrategy::Marginal,
        config,
        st,
        order,
        &est,
        history,
        false,
        work,
    ))
}

/// Settled objective at `α⁰`.
fn initial_objective(inst: &ProblemInstance, st: &Setup, config: &BudgetConfig) -> Result<f64> {
    let mut alpha = st.alpha.clone();
    let mut est = EquilibriumEstimate::ones(inst.n(), &alpha);
    settle(
        inst,
        &st.s,
        &mut alpha,
        &[],
        &mut est,
        None,
        config.max_phase_iterations,
    )?;
    Ok(est.total())
}

/// Ranks unselected agents by certified bounds on `|dᵢ|` times the change
/// available in the improving direction, and adds a batch once its bounds
/// separate from the rest.
pub fn batch_gradient_greedy(inst: &ProblemInstance, config: &BudgetConfig) -> Result<BudgetedResult> {
    if let Some(r) = unanimous(inst, BudgetStrategy::BatchGradient, config)? {
        return Ok(r);
    }
    let mut st = setup(inst, config)?;
    let n = inst.n();
    let b = config.batch.resolve(config.k);
    let mut in_t = vec![false; n];
    let mut order: Vec<usize> = Vec::new();
    let mut history = Vec::new();
    let mut stalled = false;
    let mut work = Work::default();

    while order.len() < config.k {
        let mut est = EquilibriumEstimate::ones(n, &st.alpha);
        let mut r = DerivativeEstimate::new(n, &st.alpha);
        work += settle(
            inst,
            &st.s,
            &mut st.alpha,
            &order,
            &mut est,
            Some(&mut r),
            config.max_phase_iterations,
        )?;
        history.push(BudgetRound {
            selected: order.len(),
            objective: est.total(),
        });

        let batch = b.min(config.k - order.len());
        let sep_cap = config
            .max_separation_iterations
            .unwrap_or_else(|| phase_iteration_cap(st.alpha.eps()));
        let mut extra = 0u64;
        let chosen = loop {
            let bounds = DerivativeBounds::compute(inst, &st.s, st.alpha.as_slice(), est.z(), r.r(), est.err());
            let mut ranked: Vec<usize> = (0..n).filter(|&i| !in_t[i]).collect();
            ranked.sort_by(|&a, &c| bounds.delta_lower[c].total_cmp(&bounds.delta_lower[a]).then(a.cmp(&c)));
            let (picked, rest) = ranked.split_at(batch);
            let min_picked = picked
                .iter()
                .map(|&i| bounds.delta_lower[i])
                .fold(f64::INFINITY, f64::min);
            let max_rest = rest
                .iter()
                .map(|&i| bounds.delta_upper[i])
                .fold(f64::NEG_INFINITY, f64::max);
            if max_rest <= min_picked {
                break picked.to_vec();
            }
            if extra >= sep_cap {
                stalled = true;
                break picked.to_vec();
            }
            r.step(&inst.matrix, &st.alpha)?;
            est.step(&inst.matrix, &st.s, &st.alpha)?;
            extra += 1;
            work.iterations += 1;
        };

        let z = est.z();
        for &i in &chosen {
            let target = if st.s[i] >= z[i] { inst.lower[i] } else { inst.upper[i] };
            st.alpha.set(i, target);
            in_t[i] = true;
            order.push(i);
        }
    }

    let mut est = EquilibriumEstimate::ones(n, &st.alpha);
    work += settle(
        inst,
        &st.s,
        &mut st.alpha,
        &order,
        &mut est,
        None,
        config.max_phase_iterations,
    )?;
    history.push(BudgetRound {
        selected: order.len(),
        objective: est.total(),
    });
    Ok(finish(
        BudgetStrategy::BatchGradient,
        config,
        st,
        order,
        &est,
        history,
        stalled,
        work,
    ))
}

/// Adds uniformly random agents in batches; each batch enters at its upper
/// bound and the selected set is then settled, which leaves every selected
/// agent at the bound preferred by its derivative sign.
pub fn random_baseline(inst: &ProblemInstance, config: &BudgetConfig) -> Result<BudgetedResult> {
    if let Some(r) = unanimous(inst, BudgetStrategy::Random, config)? {
        return Ok(r);
    }
    let mut st = setup(inst, config)?;
    let n = inst.n();
    let b = config.batch.resolve(config.k);
    let mut rng = substream(config.seed, streams::SELECTION);
    let picks = index::sample(&mut rng, n, config.k).into_vec();
    let mut order: Vec<usize> = Vec::with_capacity(config.k);
    let mut work = Work::default();
    let mut history = Vec::new();

    history.push(BudgetRound {
        selected: 0,
        objective: initial_objective(inst, &st, config)?,
    });
    let mut est = EquilibriumEstimate::ones(n, &st.alpha);

    for chunk in picks.chunks(b) {
        for &v in chunk {
            st.alpha.set(v, inst.upper[v]);
            order.push(v);
        }
        est = EquilibriumEstimate::ones(n, &st.alpha);
        work += settle(
            inst,
            &st.s,
            &mut st.alpha,
            &order,
            &mut est,
            None,
            config.max_phase_iterations,
        )?;
        history.push(BudgetRound {
            selected: order.len(),
            objective: est.total(),
        });
    }
    Ok(finish(
        BudgetStrategy::Random,
        config,
        st,
        order,
        &est,
        history,
        false,
        work,
    ))
}

/// Checks the structural contract of a budgeted result against its instance.
pub fn check_budgeted(inst: &ProblemInstance, result: &BudgetedResult) -> Result<()> {
    let n = inst.n();
    check_len(n, result.alpha.len())?;
    let a0 = inst
        .alpha0
        .as_ref()
        .ok_or_else(|| Error::PreconditionUnmet("instance has no initial resistance".into()))?;
    if result.order.len() > result.k {
        return Err(Error::InvalidInstance(format!(
            "{} agents selected with budget {}",
            result.order.len(),
            result.k
        )));
    }
    for i in 0..n {
        let a = result.alpha[i];
        let ok = if result.selected[i] {
            a == inst.lower[i] || a == inst.upper[i]
        } else {
            a == a0[i]
        };
        if !ok {
            return Err(Error::InvalidInstance(format!("agent {i} has resistance {a}")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_size_parsing() {
        assert_eq!("5".parse::<BatchSize>().unwrap(), BatchSize::Count(5));
        assert_eq!("10%".parse::<BatchSize>().unwrap(), BatchSize::Fraction(0.1));
        assert_eq!("0.25".parse::<BatchSize>().unwrap(), BatchSize::Fraction(0.25));
        assert!("0%".parse::<BatchSize>().is_err());
        assert!("1.5".parse::<BatchSize>().is_err());
        assert!("x".parse::<BatchSize>().is_err());
    }

    #[test]
    fn fraction_rounds_up_and_caps() {
        assert_eq!(BatchSize::Fraction(0.1).resolve(25), 3);
        assert_eq!(BatchSize::Fraction(0.1).resolve(3), 1);
        assert_eq!(BatchSize::Fraction(1.0).resolve(7), 7);
    }

    #[test]
    fn budget_validation() {
        let mut c = BudgetConfig::new(0);
        assert!(c.validate(10).is_err());
        c.k = 11;
        assert!(c.validate(10).is_err());
        c.k = 3;
        c.batch = BatchSize::Count(4);
        assert!(c.validate(10).is_err());
        c.batch = BatchSize::Count(3);
        assert!(c.validate(10).is_ok());
    }

    #[test]
    fn strategy_names_parse() {
        for st in [
            BudgetStrategy::Marginal,
            BudgetStrategy::BatchGradient,
            BudgetStrategy::Random,
        ] {
            assert_eq!(st.name().parse::<BudgetStrategy>().unwrap(), st);
        }
    }
}
