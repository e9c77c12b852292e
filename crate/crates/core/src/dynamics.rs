//! Equilibrium opinions `z(α) = [I - (I - A)P]⁻¹ A s` and the influence
//! vector `r(α) = [I - Pᵀ(I - A)]⁻¹ 1`, both iteratively with certified error
//! radii and densely for small instances.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::graph::InteractionMatrix;
use crate::instance::{ProblemInstance, ResistanceVector};

pub const DEFAULT_DENSE_LIMIT: usize = 4096;
const RESIDUAL_TOL: f64 = 1e-10;
/// Slack added to every error radius before a sign is trusted.
pub const SIGN_GUARD: f64 = 1e-9;

/// Iterate `z⁽ᵗ⁾` of `z ← A s + (I - A) P z` with its radius
/// `err(t) = (1 - ε_α)ᵗ / ε_α`.
///
/// The radius bounds `‖z⁽ᵗ⁾ - z(α)‖∞` whenever the phase started from a
/// vector in `[0, 1]ⁿ`. Call [`EquilibriumEstimate::restart`] after every
/// change of `α`.
#[derive(Clone, Debug)]
pub struct EquilibriumEstimate {
    z: Vec<f64>,
    scratch: Vec<f64>,
    t: u64,
    eps: f64,
    err: f64,
}

impl EquilibriumEstimate {
    pub fn new(z0: Vec<f64>, alpha: &ResistanceVector) -> Self {
        let n = z0.len();
        let mut est = Self {
            z: z0,
            scratch: vec![0.0; n],
            t: 0,
            eps: 1.0,
            err: 1.0,
        };
        est.restart(alpha);
        est
    }

    /// Starts from the all-ones vector.
    pub fn ones(n: usize, alpha: &ResistanceVector) -> Self {
        Self::new(vec![1.0; n], alpha)
    }

    /// Begins a new phase: `t = 0` and the radius is recomputed from `ε_α`.
    pub fn restart(&mut self, alpha: &ResistanceVector) {
        self.t = 0;
        self.eps = alpha.eps();
        self.err = 1.0 / self.eps;
    }

    /// One application of the diluted update.
    pub fn step(&mut self, matrix: &InteractionMatrix, s: &[f64], alpha: &ResistanceVector) -> Result<()> {
        debug_assert_eq!(alpha.eps(), self.eps, "alpha changed without restart");
        matrix.apply_diluted_into(alpha.as_slice(), s, &self.z, &mut self.scratch)?;
        std::mem::swap(&mut self.z, &mut self.scratch);
        self.t += 1;
        self.err *= 1.0 - self.eps;
        Ok(())
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn into_z(self) -> Vec<f64> {
        self.z
    }

    /// Iterations since the last restart.
    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn err(&self) -> f64 {
        self.err
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// `1ᵀ z`, summed in index order.
    pub fn total(&self) -> f64 {
        self.z.iter().sum()
    }
}

/// Iterate `r⁽ᵗ⁾ = Σ_{j≤t} [Pᵀ(I - A)]ʲ 1` with its 1-norm radius
/// `n (1 - ε_α)ᵗ⁺¹ / ε_α`.
#[derive(Clone, Debug)]
pub struct DerivativeEstimate {
    r: Vec<f64>,
    scratch: Vec<f64>,
    t: u64,
    eps: f64,
    err_r: f64,
}

impl DerivativeEstimate {
    pub fn new(n: usize, alpha: &ResistanceVector) -> Self {
        let eps = alpha.eps();
        Self {
            r: vec![1.0; n],
            scratch: vec![0.0; n],
            t: 0,
            eps,
            err_r: n as f64 * (1.0 - eps) / eps,
        }
    }

    /// Restarts the counter after `α` changed while keeping the current `r`.
    ///
    /// The radius becomes `n (1 - ε_α)ᵗ / ε_α`, which holds as long as the
    /// kept vector lies between `0` and `r(α)` coordinatewise.
    pub fn rebase(&mut self, alpha: &ResistanceVector) {
        self.t = 0;
        self.eps = alpha.eps();
        self.err_r = self.r.len() as f64 / self.eps;
    }

    pub fn step(&mut self, matrix: &InteractionMatrix, alpha: &ResistanceVector) -> Result<()> {
        debug_assert_eq!(alpha.eps(), self.eps, "alpha changed without rebase");
        matrix.apply_transpose_diluted_into(alpha.as_slice(), &self.r, &mut self.scratch)?;
        std::mem::swap(&mut self.r, &mut self.scratch);
        self.t += 1;
        self.err_r *= 1.0 - self.eps;
        Ok(())
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn err_r(&self) -> f64 {
        self.err_r
    }
}

fn check_dense(n: usize, limit: usize) -> Result<()> {
    if n > limit {
        return Err(Error::TooLarge { n, limit });
    }
    Ok(())
}

/// `B = I - (I - A) P` as a dense matrix.
fn system_matrix(matrix: &InteractionMatrix, alpha: &[f64]) -> DMatrix<f64> {
    let n = matrix.n();
    let mut b = DMatrix::<f64>::identity(n, n);
    for (i, j, p) in matrix.entries() {
        b[(i, j)] -= (1.0 - alpha[i]) * p;
    }
    b
}

fn solve_checked(b: DMatrix<f64>, rhs: DVector<f64>) -> Result<Vec<f64>> {
    let lu = b.clone().lu();
    let x = lu.solve(&rhs).ok_or(Error::SingularSystem {
        residual: f64::INFINITY,
    })?;
    let residual = (&b * &x - &rhs).amax();
    if residual.is_nan() || residual > RESIDUAL_TOL {
        return Err(Error::SingularSystem { residual });
    }
    Ok(x.iter().copied().collect())
}

fn check_alpha(inst: &ProblemInstance, alpha: &[f64]) -> Result<()> {
    check_len(inst.n(), alpha.len())?;
    if let Some(i) = alpha.iter().position(|&a| !(a > 0.0 && a < 1.0)) {
        return Err(Error::InvalidInstance(format!(
            "resistance of agent {i} is {}, expected (0, 1)",
            alpha[i]
        )));
    }
    Ok(())
}

/// Solves `[I - (I - A) P] z = A s` by LU factorization.
pub fn equilibrium_exact(inst: &ProblemInstance, alpha: &[f64], dense_limit: usize) -> Result<Vec<f64>> {
    check_dense(inst.n(), dense_limit)?;
    check_alpha(inst, alpha)?;
    let b = system_matrix(&inst.matrix, alpha);
    let rhs = DVector::from_iterator(inst.n(), alpha.iter().zip(&inst.s).map(|(a, s)| a * s));
    solve_checked(b, rhs)
}

/// Solves `[I - Pᵀ (I - A)] r = 1`, i.e. `rᵀ = 1ᵀ [I - (I - A) P]⁻¹`.
pub fn influence_exact(inst: &ProblemInstance, alpha: &[f64], dense_limit: usize) -> Result<Vec<f64>> {
    check_dense(inst.n(), dense_limit)?;
    check_alpha(inst, alpha)?;
    let bt = system_matrix(&inst.matrix, alpha).transpose();
    solve_checked(bt, DVector::from_element(inst.n(), 1.0))
}

/// Runs the recurrence from `z = 1` until `err(t) <= tol`.
pub fn equilibrium_iterative(
    matrix: &InteractionMatrix,
    s: &[f64],
    alpha: &ResistanceVector,
    tol: f64,
    max_iterations: u64,
) -> Result<EquilibriumEstimate> {
    check_len(matrix.n(), s.len())?;
    let mut est = EquilibriumEstimate::ones(matrix.n(), alpha);
    while est.err() > tol {
        if est.t() >= max_iterations {
            return Err(Error::IterationBudgetExceeded {
                phase: 0,
                iterations: est.t(),
            });
        }
        est.step(matrix, s, alpha)?;
    }
    Ok(est)
}

/// How the objective is evaluated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EquilibriumPath {
    /// LU solve; fails above the given agent count.
    Dense { limit: usize },
    /// Recurrence until every coordinate is within `tol`.
    Iterative { tol: f64, max_iterations: u64 },
}

impl Default for EquilibriumPath {
    fn default() -> Self {
        EquilibriumPath::Dense {
            limit: DEFAULT_DENSE_LIMIT,
        }
    }
}

/// `f(α) = 1ᵀ z(α)`.
pub fn objective(inst: &ProblemInstance, alpha: &[f64], path: EquilibriumPath) -> Result<f64> {
    match path {
        EquilibriumPath::Dense { limit } => Ok(equilibrium_exact(inst, alpha, limit)?.iter().sum()),
        EquilibriumPath::Iterative { tol, max_iterations } => {
            let alpha = ResistanceVector::new(alpha.to_vec())?;
            Ok(equilibrium_iterative(&inst.matrix, &inst.s, &alpha, tol, max_iterations)?.total())
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sign {
    Negative,
    Zero,
    Positive,
}

impl Sign {
    pub fn of(x: f64) -> Sign {
        if x > 0.0 {
            Sign::Positive
        } else if x < 0.0 {
            Sign::Negative
        } else {
            Sign::Zero
        }
    }
}

/// Sign of `∂f/∂αᵢ`, which equals the sign of `sᵢ - zᵢ(α)`.
///
/// `radius` is the certified error of `z` (zero for a dense solve). An exact
/// tie reports [`Sign::Zero`]; a difference inside `radius + SIGN_GUARD` is
/// [`Error::Inconclusive`].
pub fn derivative_sign(inst: &ProblemInstance, z: &[f64], radius: f64, i: usize) -> Result<Sign> {
    check_len(inst.n(), z.len())?;
    let gap = inst.s[i] - z[i];
    if gap == 0.0 {
        return Ok(Sign::Zero);
    }
    if gap.abs() <= radius + SIGN_GUARD {
        return Err(Error::Inconclusive { agents: vec![i] });
    }
    Ok(Sign::of(gap))
}

/// `dᵢ(α) = (sᵢ - zᵢ(α)) rᵢ(α) / (1 - αᵢ)` from dense solves.
pub fn partial_derivative_exact(inst: &ProblemInstance, alpha: &[f64], i: usize, dense_limit: usize) -> Result<f64> {
    Ok(gradient_exact(inst, alpha, dense_limit)?[i])
}

/// Every partial derivative from one pair of dense solves.
pub fn gradient_exact(inst: &ProblemInstance, alpha: &[f64], dense_limit: usize) -> Result<Vec<f64>> {
    let z = equilibrium_exact(inst, alpha, dense_limit)?;
    let r = influence_exact(inst, alpha, dense_limit)?;
    Ok((0..inst.n())
        .map(|i| (inst.s[i] - z[i]) * r[i] / (1.0 - alpha[i]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle(s: Vec<f64>) -> ProblemInstance {
        let m =
            InteractionMatrix::from_dense(&[vec![0.0, 0.5, 0.5], vec![0.5, 0.0, 0.5], vec![0.5, 0.5, 0.0]]).unwrap();
        ProblemInstance::with_uniform_bounds(m, s, 0.001, 0.999).unwrap()
    }

    #[test]
    fn radius_follows_formula() {
        let alpha = ResistanceVector::new(vec![0.5, 0.7, 0.9]).unwrap();
        let inst = triangle(vec![0.2; 3]);
        let mut est = EquilibriumEstimate::new(vec![0.2; 3], &alpha);
        assert_eq!(est.err(), 2.0);
        for _ in 0..3 {
            est.step(&inst.matrix, &inst.s, &alpha).unwrap();
        }
        assert_eq!(est.t(), 3);
        assert_eq!(est.err(), 0.25);
        // Constant opinions are a fixed point.
        for &z in est.z() {
            assert!((z - 0.2).abs() < 1e-15);
        }

        let mut r = DerivativeEstimate::new(3, &alpha);
        for _ in 0..3 {
            r.step(&inst.matrix, &alpha).unwrap();
        }
        assert_eq!(r.err_r(), 3.0 * 0.125);
    }

    #[test]
    fn first_step_on_triangle() {
        let inst = triangle(vec![1.0, 0.5, 0.0]);
        let alpha = ResistanceVector::new(vec![0.1; 3]).unwrap();
        let mut est = EquilibriumEstimate::new(inst.s.clone(), &alpha);
        est.step(&inst.matrix, &inst.s, &alpha).unwrap();
        for (z, e) in est.z().iter().zip([0.325, 0.5, 0.675]) {
            assert!((z - e).abs() < 1e-15);
        }
    }

    #[test]
    fn doubly_stochastic_identity() {
        let inst = triangle(vec![1.0, 0.5, 0.0]);
        let f = objective(&inst, &[0.1; 3], EquilibriumPath::default()).unwrap();
        assert!((f - 1.5).abs() < 1e-12);
        let f = objective(
            &inst,
            &[0.1; 3],
            EquilibriumPath::Iterative {
                tol: 1e-12,
                max_iterations: 1_000_000,
            },
        )
        .unwrap();
        assert!((f - 1.5).abs() < 3e-12);
    }

    #[test]
    fn asymmetric_resistance_fixture() {
        // Regression value for α = (0.9, 0.1, 0.1); independently
        // reproduced as 2.6881188118811883 by a numpy dense solve.
        let inst = triangle(vec![1.0, 0.5, 0.0]);
        let f = objective(&inst, &[0.9, 0.1, 0.1], EquilibriumPath::default()).unwrap();
        assert!((f - 2.688_118_811_881_188_3).abs() < 1e-12, "{f}");
    }

    #[test]
    fn constant_opinions_have_zero_gradient() {
        let inst = triangle(vec![0.4; 3]);
        let alpha = [0.2, 0.5, 0.8];
        let z = equilibrium_exact(&inst, &alpha, 10).unwrap();
        for &zi in &z {
            assert!((zi - 0.4).abs() < 1e-14);
        }
        for g in gradient_exact(&inst, &alpha, 10).unwrap() {
            assert!(g.abs() < 1e-13);
        }
    }

    #[test]
    fn sign_on_triangle() {
        let inst = triangle(vec![1.0, 0.5, 0.0]);
        let z = equilibrium_exact(&inst, &[0.1; 3], 10).unwrap();
        assert_eq!(derivative_sign(&inst, &z, 0.0, 0).unwrap(), Sign::Positive);
        assert_eq!(derivative_sign(&inst, &z, 0.0, 2).unwrap(), Sign::Negative);
        // Agent 1 sits exactly at the mean by symmetry.
        assert!(matches!(
            derivative_sign(&inst, &[1.0, 0.5 + 1e-12, 0.0], 0.0, 1),
            Err(Error::Inconclusive { .. })
        ));
        assert_eq!(derivative_sign(&inst, &[0.0, 0.5, 0.0], 0.0, 1).unwrap(), Sign::Zero);
    }

    #[test]
    fn dense_limit_enforced() {
        let inst = triangle(vec![0.5; 3]);
        assert!(matches!(
            equilibrium_exact(&inst, &[0.5; 3], 2),
            Err(Error::TooLarge { n: 3, limit: 2 })
        ));
        assert!(matches!(
            equilibrium_exact(&inst, &[0.5, 1.0, 0.5], 10),
            Err(Error::InvalidInstance(_))
        ));
    }
}
