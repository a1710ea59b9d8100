//! Full-ranking top-K metrics, the PPNP relative-error probe and the
//! runtime scaling harness.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dense::{dot, frobenius_distance, DenseMatrix};
use crate::error::{Error, Result};
use crate::graph::InteractionGraph;
use crate::model::{EmbeddingState, ModelKind};
use crate::propagation::PpnpSolver;
use crate::scalar::Real;
use crate::synthetic::uniform_bipartite;
use crate::training::{TrainConfig, Trainer};

/// Per-epoch record of a training run.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EvalReport {
    pub epoch: u64,
    /// Optimizer steps completed so far.
    pub iterations: u64,
    /// Mean BPR loss per triplet over the epoch.
    pub loss: f64,
    pub k: usize,
    pub recall: Option<f64>,
    pub ndcg: Option<f64>,
    pub epoch_seconds: f64,
    pub sampling_seconds: f64,
    pub training_seconds: f64,
    pub memory_refresh_seconds: f64,
    /// Last PPNP relative error measured during the epoch.
    pub ppnp_rel_error: Option<f64>,
    /// Multiply-adds spent in neighbor aggregation during the epoch.
    pub aggregation_ops: u64,
}

impl EvalReport {
    pub fn csv_header(k: usize) -> String {
        format!(
            "epoch,loss,recall@{k},ndcg@{k},epoch_seconds,sampling_seconds,training_seconds,\
             memory_refresh_seconds,ppnp_rel_error,aggregation_ops,iterations"
        )
    }

    pub fn csv_row(&self) -> String {
        let opt = |x: Option<f64>| x.map(|v| format!("{v}")).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.loss,
            opt(self.recall),
            opt(self.ndcg),
            self.epoch_seconds,
            self.sampling_seconds,
            self.training_seconds,
            self.memory_refresh_seconds,
            opt(self.ppnp_rel_error),
            self.aggregation_ops,
            self.iterations
        )
    }
}

/// Averaged ranking metrics.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Metrics {
    pub k: usize,
    pub recall: f64,
    pub ndcg: f64,
    /// Users with at least one test item.
    pub users: usize,
}

/// Top-`k` local item ids by descending score, skipping `exclude` (sorted
/// ascending). Ties go to the smaller item id.
pub fn rank_items<T: Real>(user_row: &[T], items: &DenseMatrix<T>, exclude: &[u32], k: usize) -> Vec<u32> {
    let mut skip = exclude.iter().peekable();
    let mut cand: Vec<(f64, u32)> = Vec::with_capacity(items.rows());
    for i in 0..items.rows() as u32 {
        while skip.peek().is_some_and(|&&x| x < i) {
            skip.next();
        }
        if skip.peek() == Some(&&i) {
            continue;
        }
        cand.push((dot(user_row, items.row(i as usize)).as_f64(), i));
    }
    let order = |a: &(f64, u32), b: &(f64, u32)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    if k == 0 {
        return Vec::new();
    }
    if cand.len() > k {
        cand.select_nth_unstable_by(k, order);
        cand.truncate(k);
    }
    cand.sort_unstable_by(order);
    cand.into_iter().map(|(_, i)| i).collect()
}

/// Recall and NDCG of one ranked list against sorted test positives.
pub fn user_metrics(ranked: &[u32], positives: &[u32], k: usize) -> (f64, f64) {
    let mut hits = 0usize;
    let mut dcg = 0.0;
    for (pos, item) in ranked.iter().take(k).enumerate() {
        if positives.binary_search(item).is_ok() {
            hits += 1;
            dcg += 1.0 / ((pos + 2) as f64).log2();
        }
    }
    let ideal: f64 = (0..k.min(positives.len())).map(|p| 1.0 / ((p + 2) as f64).log2()).sum();
    let recall = hits as f64 / positives.len() as f64;
    let ndcg = if ideal > 0.0 { dcg / ideal } else { 0.0 };
    (recall, ndcg)
}

/// Mean recall@k and NDCG@k over users with a non-empty test list.
pub fn recall_ndcg(ranked: &[Vec<u32>], test_positives: &[Vec<u32>], k: usize) -> (f64, f64) {
    let mut sum = (0.0, 0.0);
    let mut users = 0usize;
    for (list, positives) in ranked.iter().zip(test_positives) {
        if positives.is_empty() {
            continue;
        }
        let (r, n) = user_metrics(list, positives, k);
        sum.0 += r;
        sum.1 += n;
        users += 1;
    }
    if users == 0 {
        return (0.0, 0.0);
    }
    (sum.0 / users as f64, sum.1 / users as f64)
}

/// Full-ranking evaluation of final embeddings, excluding each user's
/// training items. `test` holds local item ids per user.
pub fn evaluate<T: Real>(emb: &DenseMatrix<T>, graph: &InteractionGraph, test: &[Vec<u32>], k: usize) -> Result<Metrics> {
    if emb.rows() != graph.n_nodes() {
        return Err(Error::Dimension(format!(
            "{} embedding rows for {} nodes",
            emb.rows(),
            graph.n_nodes()
        )));
    }
    if test.len() > graph.n_users() {
        return Err(Error::Dimension(format!(
            "test split has {} users, graph has {}",
            test.len(),
            graph.n_users()
        )));
    }
    let n = graph.n_users();
    let item_rows: Vec<usize> = (n..graph.n_nodes()).collect();
    let items = emb.gather(&item_rows);
    let per_user: Vec<Option<(f64, f64)>> = test
        .par_iter()
        .enumerate()
        .map(|(u, positives)| {
            if positives.is_empty() {
                return None;
            }
            let exclude: Vec<u32> = graph.user_item_nodes(u).iter().map(|&v| v - n as u32).collect();
            let ranked = rank_items(emb.row(u), &items, &exclude, k);
            Some(user_metrics(&ranked, positives, k))
        })
        .collect();
    let mut recall = 0.0;
    let mut ndcg = 0.0;
    let mut users = 0;
    for (r, g) in per_user.into_iter().flatten() {
        recall += r;
        ndcg += g;
        users += 1;
    }
    let denom = users.max(1) as f64;
    Ok(Metrics {
        k,
        recall: recall / denom,
        ndcg: ndcg / denom,
        users,
    })
}

/// `||out - reference||_F / ||reference||_F`.
pub fn relative_error<A: Real, B: Real>(out: &DenseMatrix<A>, reference: &DenseMatrix<B>) -> f64 {
    frobenius_distance(out, reference) / reference.frobenius_norm()
}

/// Relative error of the saved output history against exact PPNP of the
/// current input table, over all nodes or only `rows`.
pub fn ppnp_relative_error<T: Real>(
    solver: &PpnpSolver,
    state: &EmbeddingState<T>,
    rows: Option<&[usize]>,
) -> Result<f64> {
    let exact = solver.solve(&state.e_in)?;
    Ok(match rows {
        None => relative_error(&state.e_out_hist, &exact),
        Some(r) => relative_error(&state.e_out_hist.gather(r), &exact.gather(r)),
    })
}

/// Scaling experiment over uniform synthetic graphs of fixed density.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScalingConfig {
    pub sizes: Vec<usize>,
    /// Fraction of user-item pairs observed; users = items = sqrt(edges / density).
    pub density: f64,
    pub models: Vec<ModelKind>,
    /// Timed epochs per model and size; the fastest is reported.
    pub epochs: usize,
    /// Shared optimizer and batching settings; its `model` field is ignored.
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScalingRow {
    pub model: String,
    pub edges: usize,
    pub users: usize,
    pub items: usize,
    pub epoch_s: f64,
    pub sample_s: f64,
    pub train_s: f64,
    pub refresh_s: f64,
    pub aggregation_ops: u64,
}

/// Seconds per epoch for every model and graph size, one row each.
pub fn scaling_benchmark(config: &ScalingConfig) -> Result<Vec<ScalingRow>> {
    if !(config.density > 0.0 && config.density <= 1.0) {
        return Err(Error::Config("density must lie in (0, 1]".into()));
    }
    if config.epochs == 0 {
        return Err(Error::Config("scaling benchmark needs at least one epoch".into()));
    }
    let mut rows = Vec::new();
    for &edges in &config.sizes {
        let side = ((edges as f64 / config.density).sqrt().ceil() as usize).max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(config.train.seed ^ edges as u64);
        let pairs = uniform_bipartite(side, side, edges, &mut rng)?;
        let graph = InteractionGraph::from_pairs(side, side, &pairs)?;
        for model in &config.models {
            let train = TrainConfig {
                model: *model,
                eval_every: 0,
                probe_every: None,
                ..config.train.clone()
            };
            let mut trainer = Trainer::<f32>::new(&graph, train)?;
            let mut best: Option<EvalReport> = None;
            for _ in 0..config.epochs {
                let report = trainer.run_epoch()?;
                if best.as_ref().map_or(true, |b| report.epoch_seconds < b.epoch_seconds) {
                    best = Some(report);
                }
            }
            let best = best.expect("at least one epoch");
            log::info!("{} |E|={edges}: {:.3}s/epoch", model.name(), best.epoch_seconds);
            rows.push(ScalingRow {
                model: model.name(),
                edges,
                users: side,
                items: side,
                epoch_s: best.epoch_seconds,
                sample_s: best.sampling_seconds,
                train_s: best.training_seconds,
                refresh_s: best.memory_refresh_seconds,
                aggregation_ops: best.aggregation_ops,
            });
        }
    }
    Ok(rows)
}

pub fn write_scaling_csv(path: &Path, rows: &[ScalingRow]) -> Result<()> {
    let mut out = String::from("model,edges,epoch_s,sample_s,train_s,refresh_s\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.model, r.edges, r.epoch_s, r.sample_s, r.train_s, r.refresh_s
        ));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn column(values: &[f64]) -> DenseMatrix<f64> {
        DenseMatrix::from_vec(values.len(), 1, values.to_vec()).unwrap()
    }

    #[test]
    fn single_candidate() {
        let items = column(&[1.0, 2.0]);
        assert_eq!(rank_items(&[1.0], &items, &[1], 5), vec![0]);
    }

    #[test]
    fn ties_prefer_small_ids() {
        let items = column(&[0.5; 6]);
        assert_eq!(rank_items(&[1.0], &items, &[], 3), vec![0, 1, 2]);
        assert_eq!(rank_items(&[1.0], &items, &[0, 2], 3), vec![1, 3, 4]);
    }

    #[test]
    fn ranking_matches_full_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            let items = DenseMatrix::<f64>::from_fn(50, 3, |_, _| rng.gen_range(-1.0..1.0));
            let user: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut exclude: Vec<u32> = (0..50).filter(|_| rng.gen_bool(0.2)).collect();
            exclude.sort_unstable();
            let mut all: Vec<(f64, u32)> = (0..50u32)
                .filter(|i| !exclude.contains(i))
                .map(|i| (dot(&user, items.row(i as usize)), i))
                .collect();
            all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            let want: Vec<u32> = all.iter().take(10).map(|p| p.1).collect();
            assert_eq!(rank_items(&user, &items, &exclude, 10), want);
        }
    }

    #[test]
    fn metric_edge_cases() {
        assert_eq!(user_metrics(&[4, 1, 2], &[4], 20), (1.0, 1.0));
        assert_eq!(user_metrics(&[1, 2, 3], &[9], 3), (0.0, 0.0));
        let (r, n) = recall_ndcg(&[vec![0, 1], vec![0]], &[vec![0, 1], vec![]], 2);
        assert_eq!((r, n), (1.0, 1.0));
    }

    #[test]
    fn hand_computed_dcg() {
        // positives at ranks 1, 3 and 7
        let ranked: Vec<u32> = vec![10, 0, 11, 1, 2, 3, 12, 4];
        let (r, n) = user_metrics(&ranked, &[10, 11, 12], 20);
        let dcg = 1.0 + 1.0 / 4f64.log2() + 1.0 / 8f64.log2();
        let idcg = 1.0 + 1.0 / 3f64.log2() + 1.0 / 4f64.log2();
        assert_eq!(r, 1.0);
        assert!((n - dcg / idcg).abs() < 1e-15);
    }

    #[test]
    fn relative_error_homogeneity() {
        let a = column(&[1.0, -2.0, 3.0]);
        let mut b = a.clone();
        assert_eq!(relative_error(&a, &a), 0.0);
        b.scale(2.0);
        assert!((relative_error(&b, &a) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn evaluate_excludes_training_items() {
        // user 0 trained on item 0, test item 1; item 0 would otherwise win
        let g = InteractionGraph::from_pairs(1, 3, &[(0, 0)]).unwrap();
        let emb = column(&[1.0, 9.0, 2.0, 1.0]);
        let m = evaluate(&emb, &g, &[vec![1]], 1).unwrap();
        assert_eq!((m.recall, m.ndcg, m.users), (1.0, 1.0, 1));
    }
}
