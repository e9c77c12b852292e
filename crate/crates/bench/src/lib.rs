//! Shared inputs for the benchmarks.

use osp_core::graph::preferential_attachment;
use osp_core::{generate_instance, InteractionMatrix, ProblemInstance, Profile};

/// Symmetrized preferential attachment graph with `m` edges per new node.
pub fn instance(n: usize, m: usize, seed: u64, profile: Profile) -> ProblemInstance {
    let edges = preferential_attachment(n, m, seed).expect("valid graph parameters");
    let matrix = InteractionMatrix::from_edge_list(&edges, true).expect("non-empty rows");
    generate_instance(matrix, seed, profile)
}

/// Resistances spread over the interior of each agent's interval.
pub fn interior_alpha(inst: &ProblemInstance) -> Vec<f64> {
    (0..inst.n())
        .map(|i| {
            let t = (i % 7) as f64 / 7.0 + 0.05;
            inst.lower[i] + t * (inst.upper[i] - inst.lower[i])
        })
        .collect()
}
