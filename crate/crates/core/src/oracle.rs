//! Exhaustive references for small instances.
//!
//! Every objective value here comes from an independent dense solve; nothing
//! is reused between corners.

use rayon::prelude::*;

use crate::dynamics::equilibrium_exact;
use crate::error::{check_len, Error, Result};
use crate::instance::ProblemInstance;

pub const MAX_ENUMERATION: usize = 20;
pub const MAX_EXHAUSTIVE_CHECK: usize = 12;
/// Objective values closer than this are treated as ties.
pub const TIE_TOLERANCE: f64 = 1e-10;
/// Slack for strict decrease in the structural checks.
pub const STRICT_SLACK: f64 = 1e-12;

fn dense_objective(inst: &ProblemInstance, alpha: &[f64]) -> Result<f64> {
    Ok(equilibrium_exact(inst, alpha, usize::MAX)?.iter().sum())
}

fn ensure_size(n: usize, limit: usize) -> Result<()> {
    if n > limit {
        return Err(Error::TooLarge { n, limit });
    }
    Ok(())
}

/// Resistance vector of a corner; bit `i` of `mask` puts agent `i` at `lᵢ`.
pub fn corner_alpha(inst: &ProblemInstance, mask: u32) -> Vec<f64> {
    (0..inst.n())
        .map(|i| {
            if mask >> i & 1 == 1 {
                inst.lower[i]
            } else {
                inst.upper[i]
            }
        })
        .collect()
}

/// Bitmask of the agents at their lower bound.
pub fn corner_mask(at_lower: &[bool]) -> u32 {
    at_lower
        .iter()
        .enumerate()
        .fold(0, |m, (i, &lo)| if lo { m | 1 << i } else { m })
}

/// Objective value of every corner, indexed by bitmask.
#[derive(Clone, Debug)]
pub struct CornerEnumeration {
    n: usize,
    values: Vec<f64>,
}

impl CornerEnumeration {
    pub fn new(inst: &ProblemInstance) -> Result<Self> {
        let n = inst.n();
        ensure_size(n, MAX_ENUMERATION)?;
        let count = 1u32 << n;
        let gray: Vec<(u32, f64)> = (0..count)
            .into_par_iter()
            .map(|g| {
                let mask = g ^ (g >> 1);
                dense_objective(inst, &corner_alpha(inst, mask)).map(|f| (mask, f))
            })
            .collect::<Result<_>>()?;
        let mut values = vec![f64::NAN; count as usize];
        for (mask, f) in gray {
            values[mask as usize] = f;
        }
        Ok(Self { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, mask: u32) -> f64 {
        self.values[mask as usize]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Smallest value; among values within [`TIE_TOLERANCE`] of it, the
    /// smallest bitmask.
    pub fn optimum(&self) -> (u32, f64) {
        let best = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        let mask = self
            .values
            .iter()
            .position(|&f| f <= best + TIE_TOLERANCE)
            .expect("non-empty enumeration") as u32;
        (mask, self.values[mask as usize])
    }

    /// No single flip decreases the objective by more than [`STRICT_SLACK`].
    pub fn is_local_minimum(&self, mask: u32) -> bool {
        let f = self.value(mask);
        (0..self.n).all(|i| self.value(mask ^ 1 << i) >= f - STRICT_SLACK)
    }
}

/// Exact minimum of `1ᵀ z` over all corners.
pub fn brute_force_optimum(inst: &ProblemInstance) -> Result<(u32, f64)> {
    Ok(CornerEnumeration::new(inst)?.optimum())
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalGlobalReport {
    pub global_minimum: f64,
    pub local_minima: Vec<u32>,
    /// Local minima whose value exceeds the global minimum by more than
    /// [`TIE_TOLERANCE`], with their values.
    pub violations: Vec<(u32, f64)>,
}

impl LocalGlobalReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that every single-flip local minimum is a global minimum.
pub fn check_local_global(inst: &ProblemInstance) -> Result<LocalGlobalReport> {
    ensure_size(inst.n(), MAX_EXHAUSTIVE_CHECK)?;
    let corners = CornerEnumeration::new(inst)?;
    let (_, global_minimum) = corners.optimum();
    let local_minima: Vec<u32> = (0..corners.len() as u32)
        .filter(|&m| corners.is_local_minimum(m))
        .collect();
    let violations = local_minima
        .iter()
        .map(|&m| (m, corners.value(m)))
        .filter(|&(_, f)| f > global_minimum + TIE_TOLERANCE)
        .collect();
    Ok(LocalGlobalReport {
        global_minimum,
        local_minima,
        violations,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DescendingReport {
    /// Coordinates where the two vectors differ.
    pub differing: Vec<usize>,
    /// `f(a)` with one differing coordinate switched to `b`'s value.
    pub switched: Vec<f64>,
    pub f_a: f64,
    pub f_b: f64,
    /// First coordinate whose switch lowers `f(a)` strictly.
    pub witness: Option<usize>,
}

/// For `f(a) > f(b)`, looks for a coordinate `i` where `a` and `b` differ
/// such that moving `aᵢ` to `bᵢ` strictly lowers the objective.
pub fn check_descending_coordinate(inst: &ProblemInstance, a: &[f64], b: &[f64]) -> Result<DescendingReport> {
    let n = inst.n();
    ensure_size(n, MAX_EXHAUSTIVE_CHECK)?;
    check_len(n, a.len())?;
    check_len(n, b.len())?;
    inst.check_resistance(a)?;
    inst.check_resistance(b)?;
    let f_a = dense_objective(inst, a)?;
    let f_b = dense_objective(inst, b)?;
    if f_a <= f_b + TIE_TOLERANCE {
        return Err(Error::PreconditionUnmet(format!(
            "descending check needs f(a) > f(b) + {TIE_TOLERANCE}, got {f_a} and {f_b}"
        )));
    }
    let differing: Vec<usize> = (0..n).filter(|&i| a[i] != b[i]).collect();
    let switched = differing
        .iter()
        .map(|&i| {
            let mut c = a.to_vec();
            c[i] = b[i];
            dense_objective(inst, &c)
        })
        .collect::<Result<Vec<_>>>()?;
    let witness = differing
        .iter()
        .zip(&switched)
        .find(|&(_, &f)| f < f_a - STRICT_SLACK)
        .map(|(&i, _)| i);
    Ok(DescendingReport {
        differing,
        switched,
        f_a,
        f_b,
        witness,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SwitchingReport {
    /// Objective with coordinates `(i, k)` taken as (a, a), (a, b), (b, a), (b, b).
    pub f_aa: f64,
    pub f_ab: f64,
    pub f_ba: f64,
    pub f_bb: f64,
    pub premise: bool,
    /// The conclusion holds, or the premise does not.
    pub holds: bool,
}

/// Evaluates the four combinations of two coordinates and checks that a
/// strictly better diagonal pair never dominates both off-diagonal pairs.
pub fn check_switching(
    inst: &ProblemInstance,
    base: &[f64],
    i: usize,
    k: usize,
    a: (f64, f64),
    b: (f64, f64),
) -> Result<SwitchingReport> {
    let n = inst.n();
    check_len(n, base.len())?;
    if i == k || i >= n || k >= n {
        return Err(Error::InvalidConfig(format!("invalid coordinate pair ({i}, {k})")));
    }
    let eval = |vi: f64, vk: f64| {
        let mut c = base.to_vec();
        c[i] = vi;
        c[k] = vk;
        inst.check_resistance(&c)?;
        dense_objective(inst, &c)
    };
    let f_aa = eval(a.0, a.1)?;
    let f_ab = eval(a.0, b.1)?;
    let f_ba = eval(b.0, a.1)?;
    let f_bb = eval(b.0, b.1)?;
    let min_off = f_ab.min(f_ba);
    let premise = f_aa.min(f_bb) < min_off - STRICT_SLACK;
    let holds = !premise || f_aa.max(f_bb) > min_off - STRICT_SLACK;
    Ok(SwitchingReport {
        f_aa,
        f_ab,
        f_ba,
        f_bb,
        premise,
        holds,
    })
}

/// Central difference `[f(α + h eᵢ) - f(α - h eᵢ)] / 2h`.
pub fn central_difference(inst: &ProblemInstance, alpha: &[f64], i: usize, h: f64) -> Result<f64> {
    check_len(inst.n(), alpha.len())?;
    let mut plus = alpha.to_vec();
    let mut minus = alpha.to_vec();
    plus[i] += h;
    minus[i] -= h;
    Ok((dense_objective(inst, &plus)? - dense_objective(inst, &minus)?) / (2.0 * h))
}

/// Exact budgeted optimum: at most `k` agents leave `α⁰`, each to one of
/// its bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct BudgetedOptimum {
    pub objective: f64,
    pub alpha: Vec<f64>,
    /// Changed agents, ascending.
    pub changed: Vec<usize>,
}

pub fn budgeted_optimum(inst: &ProblemInstance, k: usize) -> Result<BudgetedOptimum> {
    let n = inst.n();
    ensure_size(n, MAX_EXHAUSTIVE_CHECK)?;
    if k > 3 {
        return Err(Error::TooLarge { n: k, limit: 3 });
    }
    let a0 = inst
        .alpha0
        .clone()
        .ok_or_else(|| Error::PreconditionUnmet("instance has no initial resistance".into()))?;
    let mut best = BudgetedOptimum {
        objective: dense_objective(inst, &a0)?,
        alpha: a0.clone(),
        changed: Vec::new(),
    };
    let mut subset = Vec::new();
    visit_subsets(n, k, 0, &mut subset, &mut |set| {
        for corner in 0..1u32 << set.len() {
            let mut alpha = a0.clone();
            for (j, &v) in set.iter().enumerate() {
                alpha[v] = if corner >> j & 1 == 1 {
                    inst.lower[v]
                } else {
                    inst.upper[v]
                };
            }
            let f = dense_objective(inst, &alpha)?;
            if f < best.objective - TIE_TOLERANCE {
                best = BudgetedOptimum {
                    objective: f,
                    alpha,
                    changed: set.to_vec(),
                };
            }
        }
        Ok(())
    })?;
    Ok(best)
}

fn visit_subsets(
    n: usize,
    k: usize,
    from: usize,
    subset: &mut Vec<usize>,
    f: &mut dyn FnMut(&[usize]) -> Result<()>,
) -> Result<()> {
    if !subset.is_empty() {
        f(subset)?;
    }
    if subset.len() == k {
        return Ok(());
    }
    for v in from..n {
        subset.push(v);
        visit_subsets(n, k, v + 1, subset, f)?;
        subset.pop();
    }
    Ok(())
}
