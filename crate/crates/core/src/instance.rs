//! Problem instances, resistance vectors, seeded generation and the text
//! instance format.
//!
//! All randomness derives from one `u64` seed. Each generated field draws
//! from its own ChaCha8 stream (see [`streams`]), so changing how one field
//! is produced never shifts the values of another.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Error, Result};
use crate::graph::{InteractionMatrix, WeightedEdgeList};

/// Stream identifiers used with [`substream`].
pub mod streams {
    pub const OPINIONS: u64 = 1;
    pub const LOWER: u64 = 2;
    pub const UPPER: u64 = 3;
    pub const ALPHA0: u64 = 4;
    pub const EDGE_WEIGHTS: u64 = 5;
    pub const PERTURB: u64 = 6;
    pub const SELECTION: u64 = 7;
    pub const SAMPLING: u64 = 8;
}

/// The generator for `(seed, stream)`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub const DEFAULT_LOWER: f64 = 0.001;
pub const DEFAULT_UPPER: f64 = 0.999;
pub const DEFAULT_PERTURBATION: f64 = 1e-9;

/// How (and whether) the initial resistance `α⁰` is generated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Profile {
    /// No `α⁰`; the instance is for the unbudgeted problem.
    Unbudgeted,
    /// `α⁰ᵢ ~ U[lᵢ, uᵢ]`.
    Uniform,
    /// `α⁰ᵢ` with density proportional to `x⁻²` on `[lᵢ, uᵢ]`.
    PowerLawLow,
    /// `uᵢ + lᵢ - x` for `x` drawn as in [`Profile::PowerLawLow`].
    PowerLawHigh,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::Unbudgeted => "unbudgeted",
            Profile::Uniform => "uniform",
            Profile::PowerLawLow => "power_law_low",
            Profile::PowerLawHigh => "power_law_high",
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "unbudgeted" | "none" => Ok(Profile::Unbudgeted),
            "uniform" => Ok(Profile::Uniform),
            "power_law_low" => Ok(Profile::PowerLawLow),
            "power_law_high" => Ok(Profile::PowerLawHigh),
            _ => Err(Error::InvalidConfig(format!("unknown profile {s:?}"))),
        }
    }
}

/// A resistance vector together with its minimum coordinate `ε_α`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResistanceVector {
    alpha: Vec<f64>,
    eps: f64,
}

impl ResistanceVector {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if let Some((i, a)) = alpha.iter().enumerate().find(|(_, &a)| !(a > 0.0 && a < 1.0)) {
            return Err(Error::InvalidInstance(format!(
                "resistance of agent {i} is {a}, expected a value in (0, 1)"
            )));
        }
        let eps = min_of(&alpha);
        Ok(Self { alpha, eps })
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.alpha
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.alpha
    }

    /// `ε_α = minᵢ αᵢ`.
    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn get(&self, i: usize) -> f64 {
        self.alpha[i]
    }

    /// Sets `αᵢ`, keeping `ε_α` current.
    pub fn set(&mut self, i: usize, value: f64) {
        debug_assert!(value > 0.0 && value < 1.0);
        let old = std::mem::replace(&mut self.alpha[i], value);
        if value <= self.eps {
            self.eps = value;
        } else if old == self.eps {
            self.eps = min_of(&self.alpha);
        }
    }
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Innate opinions, resistance bounds, optional initial resistance and the
/// interaction matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemInstance {
    pub matrix: InteractionMatrix,
    pub s: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub alpha0: Option<Vec<f64>>,
    /// Seed the instance was generated from (0 for hand-built instances).
    pub seed: u64,
}

impl ProblemInstance {
    pub fn new(
        matrix: InteractionMatrix,
        s: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        alpha0: Option<Vec<f64>>,
    ) -> Result<Self> {
        let inst = Self {
            matrix,
            s,
            lower,
            upper,
            alpha0,
            seed: 0,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Instance with the same bounds `[l, u]` for every agent.
    pub fn with_uniform_bounds(matrix: InteractionMatrix, s: Vec<f64>, l: f64, u: f64) -> Result<Self> {
        let n = matrix.n();
        Self::new(matrix, s, vec![l; n], vec![u; n], None)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.matrix.n();
        check_len(n, self.s.len())?;
        check_len(n, self.lower.len())?;
        check_len(n, self.upper.len())?;
        for i in 0..n {
            let (s, l, u) = (self.s[i], self.lower[i], self.upper[i]);
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::InvalidInstance(format!(
                    "innate opinion of agent {i} is {s}, expected [0, 1]"
                )));
            }
            if !(0.0 < l && l < u && u < 1.0) {
                return Err(Error::InvalidInstance(format!(
                    "agent {i} bounds must satisfy 0 < l < u < 1, got l={l}, u={u}"
                )));
            }
        }
        if let Some(a0) = &self.alpha0 {
            check_len(n, a0.len())?;
            for (i, &a) in a0.iter().enumerate() {
                if !(self.lower[i] <= a && a <= self.upper[i]) {
                    return Err(Error::InvalidInstance(format!(
                        "initial resistance of agent {i} is {a}, outside [{}, {}]",
                        self.lower[i], self.upper[i]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.matrix.n()
    }

    /// Every agent at its upper bound.
    pub fn upper_resistance(&self) -> ResistanceVector {
        ResistanceVector::new(self.upper.clone()).expect("bounds validated")
    }

    /// The corner selecting the lower bound exactly where `at_lower[i]` holds.
    pub fn corner(&self, at_lower: &[bool]) -> ResistanceVector {
        let alpha = (0..self.n())
            .map(|i| if at_lower[i] { self.lower[i] } else { self.upper[i] })
            .collect();
        ResistanceVector::new(alpha).expect("bounds validated")
    }

    pub fn initial_resistance(&self) -> Result<ResistanceVector> {
        let a0 = self
            .alpha0
            .as_ref()
            .ok_or_else(|| Error::PreconditionUnmet("instance has no initial resistance".into()))?;
        ResistanceVector::new(a0.clone())
    }

    /// Checks `lᵢ <= αᵢ <= uᵢ` for every agent.
    pub fn check_resistance(&self, alpha: &[f64]) -> Result<()> {
        check_len(self.n(), alpha.len())?;
        for (i, &a) in alpha.iter().enumerate() {
            if !(self.lower[i] <= a && a <= self.upper[i]) {
                return Err(Error::InvalidInstance(format!(
                    "resistance {a} of agent {i} outside [{}, {}]",
                    self.lower[i], self.upper[i]
                )));
            }
        }
        Ok(())
    }

    /// Copy of the instance with innate opinions replaced.
    pub fn with_opinions(&self, s: Vec<f64>) -> Result<Self> {
        let mut copy = self.clone();
        copy.s = s;
        copy.validate()?;
        Ok(copy)
    }
}

/// Shifts every opinion by an independent `U[-magnitude, magnitude]` draw and
/// reflects values that leave `[0, 1]` back inside.
/// The shared value of `s` when all entries are equal.
pub fn common_value(s: &[f64]) -> Option<f64> {
    let (&first, rest) = s.split_first()?;
    rest.iter().all(|&x| x == first).then_some(first)
}

pub fn perturb_innate(s: &[f64], magnitude: f64, seed: u64) -> Vec<f64> {
    if magnitude == 0.0 {
        return s.to_vec();
    }
    let mut rng = substream(seed, streams::PERTURB);
    s.iter()
        .map(|&x| {
            let shift = magnitude * (2.0 * rng.random::<f64>() - 1.0);
            let y = x + shift;
            if y < 0.0 {
                -y
            } else if y > 1.0 {
                2.0 - y
            } else {
                y
            }
        })
        .collect()
}

/// Replaces every edge weight by an independent draw from `(0, 1]`.
pub fn randomize_weights(edges: &WeightedEdgeList, seed: u64) -> WeightedEdgeList {
    let mut rng = substream(seed, streams::EDGE_WEIGHTS);
    WeightedEdgeList {
        n: edges.n,
        edges: edges
            .edges
            .iter()
            .map(|&(u, v, _)| (u, v, 1.0 - rng.random::<f64>()))
            .collect(),
    }
}

/// Draws from the density `A x⁻²` truncated to `[lo, hi]` by inverting its CDF.
pub fn sample_inverse_square<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let q: f64 = rng.random();
    let (a, b) = (1.0 / lo, 1.0 / hi);
    (1.0 / (a - q * (a - b))).clamp(lo, hi)
}

/// Generates opinions, bounds and (for budgeted profiles) an initial
/// resistance vector for the given matrix.
///
/// `sᵢ ~ U[0,1]`; `lᵢ = 0.001` with probability 0.99, else `U[0.001, 0.1]`;
/// `uᵢ = 0.999` with probability 0.99, else `U[0.9, 0.999]`.
pub fn generate_instance(matrix: InteractionMatrix, seed: u64, profile: Profile) -> ProblemInstance {
    let n = matrix.n();
    let mut rs = substream(seed, streams::OPINIONS);
    let mut rl = substream(seed, streams::LOWER);
    let mut ru = substream(seed, streams::UPPER);
    let s: Vec<f64> = (0..n).map(|_| rs.random::<f64>()).collect();
    let lower: Vec<f64> = (0..n)
        .map(|_| {
            if rl.random_bool(0.99) {
                DEFAULT_LOWER
            } else {
                DEFAULT_LOWER + (0.1 - DEFAULT_LOWER) * rl.random::<f64>()
            }
        })
        .collect();
    let upper: Vec<f64> = (0..n)
        .map(|_| {
            if ru.random_bool(0.99) {
                DEFAULT_UPPER
            } else {
                0.9 + (DEFAULT_UPPER - 0.9) * ru.random::<f64>()
            }
        })
        .collect();
    let mut ra = substream(seed, streams::ALPHA0);
    let alpha0 = match profile {
        Profile::Unbudgeted => None,
        Profile::Uniform => Some(
            (0..n)
                .map(|i| (lower[i] + (upper[i] - lower[i]) * ra.random::<f64>()).min(upper[i]))
                .collect(),
        ),
        Profile::PowerLawLow => Some(
            (0..n)
                .map(|i| sample_inverse_square(&mut ra, lower[i], upper[i]))
                .collect(),
        ),
        Profile::PowerLawHigh => Some(
            (0..n)
                .map(|i| {
                    let x = sample_inverse_square(&mut ra, lower[i], upper[i]);
                    (upper[i] - x + lower[i]).clamp(lower[i], upper[i])
                })
                .collect(),
        ),
    };
    ProblemInstance {
        matrix,
        s,
        lower,
        upper,
        alpha0,
        seed,
    }
}

/// Writes the text instance format: a header `n m seed`, `n` agent lines
/// `s l u [alpha0]`, then `m` matrix entries `i j p`.
pub fn write_instance<W: Write>(inst: &ProblemInstance, mut out: W) -> Result<()> {
    writeln!(out, "{} {} {}", inst.n(), inst.matrix.nnz(), inst.seed)?;
    for i in 0..inst.n() {
        write!(out, "{:.16e} {:.16e} {:.16e}", inst.s[i], inst.lower[i], inst.upper[i])?;
        if let Some(a0) = &inst.alpha0 {
            write!(out, " {:.16e}", a0[i])?;
        }
        writeln!(out)?;
    }
    for (i, j, p) in inst.matrix.entries() {
        writeln!(out, "{i} {j} {p:.16e}")?;
    }
    Ok(())
}

pub fn instance_to_string(inst: &ProblemInstance) -> String {
    let mut buf = Vec::new();
    write_instance(inst, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

pub fn read_instance<R: BufRead>(reader: R) -> Result<ProblemInstance> {
    let mut lines = reader
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !matches!(l, Ok(t) if t.trim().is_empty() || t.trim_start().starts_with('#')));

    let parse_err = |line: usize, message: String| Error::Parse { line, message };
    let (hl, header) = lines.next().ok_or_else(|| parse_err(1, "empty instance file".into()))?;
    let header = header?;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 3 {
        return Err(parse_err(hl, "header must be `n m seed`".into()));
    }
    let n: usize = h[0].parse().map_err(|_| parse_err(hl, "bad n".into()))?;
    let m: usize = h[1].parse().map_err(|_| parse_err(hl, "bad m".into()))?;
    let seed: u64 = h[2].parse().map_err(|_| parse_err(hl, "bad seed".into()))?;

    let num = |tok: &str, line: usize| -> Result<f64> {
        tok.parse::<f64>()
            .map_err(|_| parse_err(line, format!("invalid number {tok:?}")))
    };

    let mut s = Vec::with_capacity(n);
    let mut lower = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    let mut alpha0: Option<Vec<f64>> = None;
    for i in 0..n {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| parse_err(hl + i + 1, format!("expected {n} agent lines")))?;
        let line = line?;
        let f: Vec<&str> = line.split_whitespace().collect();
        let with_a0 = match f.len() {
            3 => false,
            4 => true,
            _ => return Err(parse_err(ln, "agent line must be `s l u [alpha0]`".into())),
        };
        if i == 0 && with_a0 {
            alpha0 = Some(Vec::with_capacity(n));
        }
        if with_a0 != alpha0.is_some() {
            return Err(parse_err(
                ln,
                "alpha0 column must be present on all or no agent lines".into(),
            ));
        }
        s.push(num(f[0], ln)?);
        lower.push(num(f[1], ln)?);
        upper.push(num(f[2], ln)?);
        if let Some(a0) = alpha0.as_mut() {
            a0.push(num(f[3], ln)?);
        }
    }

    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for k in 0..m {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| parse_err(hl + n + k + 1, format!("expected {m} matrix entries")))?;
        let line = line?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 3 {
            return Err(parse_err(ln, "matrix entry must be `i j p`".into()));
        }
        let i: usize = f[0].parse().map_err(|_| parse_err(ln, "bad row index".into()))?;
        let j: usize = f[1].parse().map_err(|_| parse_err(ln, "bad column index".into()))?;
        if i >= n || j >= n {
            return Err(parse_err(ln, format!("index out of range 0..{n}")));
        }
        rows[i].push((j, num(f[2], ln)?));
    }
    if let Some((ln, _)) = lines.next() {
        return Err(parse_err(ln, "unexpected trailing content".into()));
    }

    let matrix = InteractionMatrix::from_rows(rows)?;
    let mut inst = ProblemInstance::new(matrix, s, lower, upper, alpha0)?;
    inst.seed = seed;
    Ok(inst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::preferential_attachment;

    fn small_matrix(n: usize, seed: u64) -> InteractionMatrix {
        let g = preferential_attachment(n, 2, seed).unwrap();
        InteractionMatrix::from_edge_list(&randomize_weights(&g, seed), true).unwrap()
    }

    #[test]
    fn zero_perturbation_is_identity() {
        let s = vec![0.0, 0.25, 1.0];
        assert_eq!(perturb_innate(&s, 0.0, 3), s);
    }

    #[test]
    fn perturbation_is_deterministic_and_bounded() {
        let s = vec![0.5];
        let a = perturb_innate(&s, 1e-9, 7);
        assert_eq!(a, perturb_innate(&s, 1e-9, 7));
        assert!((a[0] - 0.5).abs() <= 1e-9);
        assert_ne!(a, perturb_innate(&s, 1e-9, 8));
    }

    #[test]
    fn perturbation_reflects_at_boundaries() {
        let s = vec![0.0; 64].into_iter().chain(vec![1.0; 64]).collect::<Vec<_>>();
        for x in perturb_innate(&s, 1e-7, 1) {
            assert!((0.0..=1.0).contains(&x));
        }
    }

    #[test]
    fn resistance_vector_tracks_minimum() {
        let mut a = ResistanceVector::new(vec![0.5, 0.9, 0.7]).unwrap();
        assert_eq!(a.eps(), 0.5);
        a.set(1, 0.1);
        assert_eq!(a.eps(), 0.1);
        a.set(1, 0.95);
        assert_eq!(a.eps(), 0.5);
        a.set(0, 0.8);
        assert_eq!(a.eps(), 0.7);
        assert!(ResistanceVector::new(vec![0.5, 1.0]).is_err());
    }

    #[test]
    fn instance_validation() {
        let m = small_matrix(5, 1);
        assert!(ProblemInstance::with_uniform_bounds(m.clone(), vec![0.5; 5], 0.2, 0.1).is_err());
        assert!(ProblemInstance::with_uniform_bounds(m.clone(), vec![1.5; 5], 0.1, 0.2).is_err());
        assert!(ProblemInstance::with_uniform_bounds(m.clone(), vec![0.5; 4], 0.1, 0.2).is_err());
        let err =
            ProblemInstance::new(m.clone(), vec![0.5; 5], vec![0.1; 5], vec![0.2; 5], Some(vec![0.3; 5])).unwrap_err();
        assert!(matches!(err, Error::InvalidInstance(_)));
    }

    #[test]
    fn generation_is_deterministic() {
        let m = small_matrix(50, 2);
        let a = generate_instance(m.clone(), 11, Profile::Uniform);
        let b = generate_instance(m.clone(), 11, Profile::Uniform);
        assert_eq!(a, b);
        // s, l, u do not depend on the profile.
        let c = generate_instance(m, 11, Profile::PowerLawHigh);
        assert_eq!((&a.s, &a.lower, &a.upper), (&c.s, &c.lower, &c.upper));
    }

    #[test]
    fn lower_bound_fraction_matches_protocol() {
        let n = 1_000_000;
        let mut star = WeightedEdgeList::new(n);
        for v in 1..n {
            star.push(0, v, 1.0);
        }
        let m = InteractionMatrix::from_edge_list(&star, true).unwrap();
        let inst = generate_instance(m, 5, Profile::Unbudgeted);
        let frac = |v: &[f64], x: f64| v.iter().filter(|&&b| b == x).count() as f64 / n as f64;
        let fl = frac(&inst.lower, DEFAULT_LOWER);
        let fu = frac(&inst.upper, DEFAULT_UPPER);
        assert!((0.989..=0.991).contains(&fl), "{fl}");
        assert!((0.989..=0.991).contains(&fu), "{fu}");
        assert!(inst.lower.iter().all(|&l| (DEFAULT_LOWER..=0.1).contains(&l)));
        assert!(inst.upper.iter().all(|&u| (0.9..=DEFAULT_UPPER).contains(&u)));
    }

    #[test]
    fn power_law_low_has_lower_median() {
        let mut rng = substream(3, streams::ALPHA0);
        let (lo, hi) = (0.001, 0.999);
        let mut pl: Vec<f64> = (0..100_000).map(|_| sample_inverse_square(&mut rng, lo, hi)).collect();
        let mut un: Vec<f64> = (0..100_000).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect();
        pl.sort_by(f64::total_cmp);
        un.sort_by(f64::total_cmp);
        let (mp, mu) = (pl[50_000], un[50_000]);
        // Median of A x^-2 on [l, u] is the harmonic midpoint 2lu/(l+u).
        let exact = 2.0 * lo * hi / (lo + hi);
        assert!((mp - exact).abs() < 2e-4, "{mp} vs {exact}");
        assert!(mp < mu);
        assert!(pl.iter().all(|&x| (lo..=hi).contains(&x)));
    }

    #[test]
    fn generated_instances_are_valid() {
        let m = small_matrix(40, 4);
        for seed in 0..100 {
            for profile in [
                Profile::Unbudgeted,
                Profile::Uniform,
                Profile::PowerLawLow,
                Profile::PowerLawHigh,
            ] {
                let inst = generate_instance(m.clone(), seed, profile);
                inst.validate().unwrap();
                assert_eq!(inst.alpha0.is_some(), profile != Profile::Unbudgeted);
            }
        }
    }

    #[test]
    fn instance_file_round_trips_bit_exactly() {
        let m = small_matrix(30, 9);
        for profile in [Profile::Unbudgeted, Profile::PowerLawLow] {
            let inst = generate_instance(m.clone(), 21, profile);
            let text = instance_to_string(&inst);
            let back = read_instance(text.as_bytes()).unwrap();
            assert_eq!(back, inst);
            assert_eq!(instance_to_string(&back), text);
        }
    }

    #[test]
    fn instance_reader_reports_lines() {
        let err = read_instance("2 2 0\n0.5 0.1 0.9\n0.5 0.1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = read_instance("1 1 0\n0.5 0.1 0.9\n0 0 1.0\nextra\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");
    }

    #[test]
    fn profile_names_parse() {
        for p in [
            Profile::Unbudgeted,
            Profile::Uniform,
            Profile::PowerLawLow,
            Profile::PowerLawHigh,
        ] {
            assert_eq!(p.name().parse::<Profile>().unwrap(), p);
        }
        assert_eq!("power-law-low".parse::<Profile>().unwrap(), Profile::PowerLawLow);
        assert!("zipf".parse::<Profile>().is_err());
    }
}
