#![allow(dead_code)]

use osp_core::graph::preferential_attachment;
use osp_core::instance::randomize_weights;
use osp_core::{generate_instance, InteractionMatrix, ProblemInstance, Profile, WeightedEdgeList};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Directed ring plus random chords with weights in (0, 1]; strongly connected.
pub fn random_matrix(n: usize, seed: u64) -> InteractionMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_9a9e);
    let mut e = WeightedEdgeList::new(n);
    for i in 0..n {
        e.push(i, (i + 1) % n, 1.0 - rng.random::<f64>());
    }
    for _ in 0..rng.random_range(0..=2 * n) {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u != v {
            e.push(u, v, 1.0 - rng.random::<f64>());
        }
    }
    InteractionMatrix::from_edge_list(&e, false).unwrap()
}

pub fn random_instance(n: usize, seed: u64) -> ProblemInstance {
    generate_instance(random_matrix(n, seed), seed, Profile::Unbudgeted)
}

pub fn random_budgeted(n: usize, seed: u64, profile: Profile) -> ProblemInstance {
    generate_instance(random_matrix(n, seed), seed, profile)
}

/// Random `α` strictly inside every `[lᵢ, uᵢ]`.
pub fn interior_alpha(inst: &ProblemInstance, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa1fa);
    (0..inst.n())
        .map(|i| {
            let (l, u) = (inst.lower[i], inst.upper[i]);
            l + (u - l) * (0.05 + 0.9 * rng.random::<f64>())
        })
        .collect()
}

/// Opinions `(1, 0.5, 0)` on the complete graph with off-diagonal weights 1/2.
pub fn three_node(l: f64, u: f64) -> ProblemInstance {
    let m = InteractionMatrix::from_dense(&[vec![0.0, 0.5, 0.5], vec![0.5, 0.0, 0.5], vec![0.5, 0.5, 0.0]]).unwrap();
    ProblemInstance::with_uniform_bounds(m, vec![1.0, 0.5, 0.0], l, u).unwrap()
}

/// Preferential attachment graph with random weights and the generated profile.
pub fn synthetic(n: usize, m: usize, seed: u64, profile: Profile) -> ProblemInstance {
    let edges = randomize_weights(&preferential_attachment(n, m, seed).unwrap(), seed);
    let matrix = InteractionMatrix::from_edge_list(&edges, true).unwrap();
    generate_instance(matrix, seed, profile)
}

pub fn dense_f(inst: &ProblemInstance, alpha: &[f64]) -> f64 {
    osp_core::equilibrium_exact(inst, alpha, usize::MAX)
        .unwrap()
        .iter()
        .sum()
}
