#![allow(dead_code)]

use ltgnn::graph::{Dataset, InteractionGraph, LoadReport};
use ltgnn::model::ModelKind;
use ltgnn::propagation::{PropagationConfig, VrMode};
use ltgnn::synthetic::{community_bipartite, split_per_user, uniform_bipartite, CommunitySpec};
use ltgnn::training::TrainConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn uniform_graph(n_users: usize, n_items: usize, n_edges: usize, seed: u64) -> InteractionGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = uniform_bipartite(n_users, n_items, n_edges, &mut rng).unwrap();
    InteractionGraph::from_pairs(n_users, n_items, &pairs).unwrap()
}

/// Clustered interactions with a per-user held-out split.
pub fn community_dataset(spec: &CommunitySpec, test_fraction: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = community_bipartite(spec, &mut rng).unwrap();
    let (train, test) = split_per_user(spec.n_users, &pairs, test_fraction, &mut rng);
    let mut lists = vec![Vec::new(); spec.n_users];
    for (u, i) in test {
        lists[u].push(i as u32);
    }
    Dataset {
        train: InteractionGraph::from_pairs(spec.n_users, spec.n_items, &train).unwrap(),
        test: lists,
        report: LoadReport::default(),
    }
}

pub fn small_spec() -> CommunitySpec {
    CommunitySpec {
        n_users: 120,
        n_items: 160,
        n_edges: 2400,
        communities: 4,
        affinity: 0.8,
        popularity_exponent: 0.5,
    }
}

pub fn ltgnn(alpha: f64, layers: usize, sample_size: usize, vr_mode: VrMode) -> ModelKind {
    ModelKind::Ltgnn(PropagationConfig {
        alpha,
        layers,
        sample_size,
        vr_mode,
    })
}

pub fn config(model: ModelKind, dim: usize, batch_size: usize, epochs: usize) -> TrainConfig {
    TrainConfig {
        model,
        epochs,
        batch_size,
        dim,
        lr: 1e-2,
        eval_every: 0,
        ..TrainConfig::default()
    }
}
