//! BPR objective, lazy Adam, and the mini-batch training loop for every
//! model kind.
//!
//! One iteration of the implicit model:
//! 1. sample a batch of interactions and one negative item per interaction;
//! 2. draw the random neighbor rows for the batch nodes;
//! 3. forward through the implicit layer, warm-started from the saved outputs;
//! 4. compute BPR loss and output gradients on the batch nodes;
//! 5. backward through the same layer, warm-started from the saved gradients;
//! 6. Adam on the batch rows, then save outputs and gradients.
//!
//! Variance-reduction memories are refreshed at every epoch boundary.

use std::time::Instant;

use crate::dense::{axpy, dot, DenseMatrix};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, ppnp_relative_error, EvalReport, Metrics};
use crate::graph::{Dataset, InteractionGraph};
use crate::model::{infer_embeddings, EmbeddingState, Inference, LightGcnSampler, ModelKind};
use crate::propagation::{
    implicit_layers, lightgcn_propagate, lightgcn_sampled_backward, lightgcn_sampled_forward,
    refresh_memory, sample_layers, PpnpSolver, PropagationConfig, Teleport, VrMemory, VrMode, VrTerms,
    DENSE_SOLVE_LIMIT,
};
use crate::sampler::{sample_negatives, BprBatch, EpochSchedule, RngStreams, SampledAdjacency, Stream};
use crate::scalar::Real;
use crate::sparse::{spmm, CsrMatrix};

/// Nodes over which the PPNP relative error is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeScope {
    #[default]
    AllNodes,
    /// Only the nodes of the most recent batch.
    BatchTargets,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub dim: usize,
    pub init_std: f64,
    pub seed: u64,
    /// Evaluate every this many epochs (and after the last); 0 disables.
    pub eval_every: usize,
    pub eval_k: usize,
    pub inference: Inference,
    /// Measure PPNP relative error every this many iterations.
    pub probe_every: Option<usize>,
    #[serde(default)]
    pub probe_scope: ProbeScope,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Ltgnn(PropagationConfig::default()),
            epochs: 100,
            batch_size: 2048,
            lr: 1e-3,
            weight_decay: 1e-4,
            dim: 64,
            init_std: 0.1,
            seed: 0,
            eval_every: 5,
            eval_k: 20,
            inference: Inference::default(),
            probe_every: None,
            probe_scope: ProbeScope::AllNodes,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.dim == 0 {
            return Err(Error::Config("embedding dimension must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!("weight decay {} must be >= 0", self.weight_decay)));
        }
        if !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            return Err(Error::Config(format!("init std {} must be >= 0", self.init_std)));
        }
        if self.probe_every == Some(0) {
            return Err(Error::Config("probe interval must be at least 1".into()));
        }
        if self.eval_k == 0 {
            return Err(Error::Config("evaluation k must be at least 1".into()));
        }
        Ok(())
    }
}

/// `-ln sigmoid(x)`, stable for large `|x|`.
pub fn neg_log_sigmoid(x: f64) -> f64 {
    (-x).max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn margin<T: Real>(emb: &DenseMatrix<T>, [u, i, j]: [usize; 3]) -> f64 {
    dot(emb.row(u), emb.row(i)).as_f64() - dot(emb.row(u), emb.row(j)).as_f64()
}

/// Summed BPR loss; `emb_out` rows follow `batch.targets`.
pub fn bpr_loss<T: Real>(batch: &BprBatch, emb_out: &DenseMatrix<T>) -> f64 {
    batch.local.iter().map(|&l| neg_log_sigmoid(margin(emb_out, l))).sum()
}

/// Gradient of [`bpr_loss`] with respect to each row of `emb_out`.
pub fn bpr_output_gradients<T: Real>(batch: &BprBatch, emb_out: &DenseMatrix<T>) -> DenseMatrix<T> {
    let dim = emb_out.cols();
    let mut grad = DenseMatrix::zeros(emb_out.rows(), dim);
    let mut diff = vec![T::zero(); dim];
    for &l in &batch.local {
        let [u, i, j] = l;
        let g = T::of(sigmoid(margin(emb_out, l)) - 1.0);
        for ((d, &a), &b) in diff.iter_mut().zip(emb_out.row(i)).zip(emb_out.row(j)) {
            *d = a - b;
        }
        axpy(grad.row_mut(u), g, &diff);
        axpy(grad.row_mut(i), g, emb_out.row(u));
        axpy(grad.row_mut(j), -g, emb_out.row(u));
    }
    grad
}

/// Row-sparse Adam moments with per-row step counts.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    m: DenseMatrix<T>,
    v: DenseMatrix<T>,
    steps: Vec<u32>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Real> AdamState<T> {
    pub fn new(rows: usize, dim: usize) -> Self {
        Self {
            m: DenseMatrix::zeros(rows, dim),
            v: DenseMatrix::zeros(rows, dim),
            steps: vec![0; rows],
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn row_steps(&self, row: usize) -> u32 {
        self.steps[row]
    }
}

/// Updates only `rows` of `params` from the matching rows of `grads`,
/// adding `weight_decay * param` to each gradient first.
pub fn adam_step<T: Real>(
    adam: &mut AdamState<T>,
    params: &mut DenseMatrix<T>,
    rows: &[usize],
    grads: &DenseMatrix<T>,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    if grads.rows() != rows.len() || grads.cols() != params.cols() {
        return Err(Error::Dimension(format!(
            "{}x{} gradient for {} rows of width {}",
            grads.rows(),
            grads.cols(),
            rows.len(),
            params.cols()
        )));
    }
    if !grads.is_finite() {
        let iteration = rows.iter().map(|&r| adam.steps[r] as u64).max().unwrap_or(0);
        return Err(Error::NonFinite { what: "gradient", iteration });
    }
    let (b1, b2) = (T::of(adam.beta1), T::of(adam.beta2));
    let wd = T::of(weight_decay);
    for (k, &r) in rows.iter().enumerate() {
        adam.steps[r] += 1;
        let t = adam.steps[r] as i32;
        let bc1 = T::of(1.0 - adam.beta1.powi(t));
        let bc2 = T::of(1.0 - adam.beta2.powi(t));
        let step = T::of(lr);
        let eps = T::of(adam.eps);
        let p = params.row_mut(r);
        let m = adam.m.row_mut(r);
        let v = adam.v.row_mut(r);
        for c in 0..p.len() {
            let g = grads.get(k, c) + wd * p[c];
            m[c] = b1 * m[c] + (T::one() - b1) * g;
            v[c] = b2 * v[c] + (T::one() - b2) * g * g;
            let m_hat = m[c] / bc1;
            let v_hat = v[c] / bc2;
            p[c] -= step * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// One PPNP relative-error measurement.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Probe {
    pub iteration: u64,
    pub epoch: u64,
    pub rel_error: f64,
}

/// Cost and timing of a single iteration.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub triplets: usize,
    pub sampling_seconds: f64,
    pub training_seconds: f64,
    pub aggregation_ops: u64,
}

/// Mini-batch trainer holding the model state between iterations.
pub struct Trainer<'g, T: Real> {
    graph: &'g InteractionGraph,
    norm: CsrMatrix<T>,
    config: TrainConfig,
    state: EmbeddingState<T>,
    adam: AdamState<T>,
    streams: RngStreams,
    memory: Option<VrMemory<T>>,
    /// Per-layer inputs remembered by classic variance-reduced LightGCN.
    layer_history: Vec<DenseMatrix<T>>,
    solver: Option<PpnpSolver>,
    probes: Vec<Probe>,
    last_targets: Vec<usize>,
}

impl<'g, T: Real> Trainer<'g, T> {
    /// Fresh model initialized from the `Init` stream of the seed.
    pub fn new(graph: &'g InteractionGraph, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let streams = RngStreams::new(config.seed);
        let mut rng = streams.stream(0, 0, Stream::Init);
        let state = crate::model::init_embeddings(graph.n_users(), graph.n_items(), config.dim, &mut rng, config.init_std)?;
        Self::with_state(graph, config, state)
    }

    /// Continues from an existing state, e.g. a checkpoint.
    pub fn with_state(graph: &'g InteractionGraph, config: TrainConfig, state: EmbeddingState<T>) -> Result<Self> {
        config.validate()?;
        if state.n_users() != graph.n_users() || state.n_items() != graph.n_items() {
            return Err(Error::Dimension(format!(
                "state for {}x{} does not match graph {}x{}",
                state.n_users(),
                state.n_items(),
                graph.n_users(),
                graph.n_items()
            )));
        }
        if state.dim() != config.dim {
            return Err(Error::Dimension(format!(
                "state dimension {} differs from configured {}",
                state.dim(),
                config.dim
            )));
        }
        let norm: CsrMatrix<T> = graph.norm_adjacency().cast();
        let layer_history = match config.model {
            ModelKind::LightGcn {
                layers,
                sampler: LightGcnSampler::ClassicVr,
                ..
            } => {
                let mut h = vec![state.e_in.clone()];
                for l in 1..layers {
                    h.push(spmm(&norm, &h[l - 1])?);
                }
                h
            }
            _ => Vec::new(),
        };
        let solver = match (config.probe_every, config.model) {
            (Some(_), ModelKind::Ltgnn(c)) if graph.n_nodes() <= DENSE_SOLVE_LIMIT => {
                Some(PpnpSolver::new(graph.norm_adjacency(), c.alpha)?)
            }
            (Some(_), ModelKind::Ltgnn(_)) => {
                log::warn!(
                    "graph has {} nodes; PPNP error probe disabled above {DENSE_SOLVE_LIMIT}",
                    graph.n_nodes()
                );
                None
            }
            _ => None,
        };
        let adam = AdamState::new(graph.n_nodes(), config.dim);
        let mut trainer = Self {
            graph,
            norm,
            streams: RngStreams::new(config.seed),
            config,
            state,
            adam,
            memory: None,
            layer_history,
            solver,
            probes: Vec::new(),
            last_targets: Vec::new(),
        };
        if trainer.solver.is_some() && trainer.config.probe_scope == ProbeScope::AllNodes {
            trainer.probe()?;
        }
        Ok(trainer)
    }

    pub fn state(&self) -> &EmbeddingState<T> {
        &self.state
    }

    pub fn into_state(self) -> EmbeddingState<T> {
        self.state
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn norm_adjacency(&self) -> &CsrMatrix<T> {
        &self.norm
    }

    pub fn probes(&self) -> &[Probe] {
        &self.probes
    }

    pub fn adam(&self) -> &AdamState<T> {
        &self.adam
    }

    /// Nodes of the most recent batch.
    pub fn last_targets(&self) -> &[usize] {
        &self.last_targets
    }

    fn propagation(&self) -> Option<PropagationConfig> {
        match self.config.model {
            ModelKind::Ltgnn(c) => Some(c),
            _ => None,
        }
    }

    fn needs_memory(&self) -> bool {
        self.propagation().is_some_and(|c| c.vr_mode.needs_memory())
    }

    /// Recomputes the variance-reduction memories for the current epoch.
    /// Returns the multiply-adds spent.
    pub fn refresh(&mut self) -> Result<u64> {
        self.memory = Some(refresh_memory(&self.norm, &self.state)?);
        Ok(2 * (self.norm.nnz() * self.config.dim) as u64)
    }

    /// Runs one epoch over every training interaction without evaluation.
    pub fn run_epoch(&mut self) -> Result<EvalReport> {
        let epoch = self.state.epoch;
        let start = Instant::now();
        let mut report = EvalReport {
            epoch: epoch + 1,
            iterations: self.state.iteration,
            loss: 0.0,
            k: self.config.eval_k,
            recall: None,
            ndcg: None,
            epoch_seconds: 0.0,
            sampling_seconds: 0.0,
            training_seconds: 0.0,
            memory_refresh_seconds: 0.0,
            ppnp_rel_error: None,
            aggregation_ops: 0,
        };
        if self.needs_memory() {
            let t = Instant::now();
            report.aggregation_ops += self.refresh()?;
            report.memory_refresh_seconds = t.elapsed().as_secs_f64();
        }
        let t = Instant::now();
        let schedule = EpochSchedule::new(
            self.graph,
            self.config.batch_size,
            &mut self.streams.stream(epoch, u64::MAX, Stream::Shuffle),
        );
        report.sampling_seconds += t.elapsed().as_secs_f64();
        let probes_before = self.probes.len();
        let mut triplets = 0usize;
        for b in 0..schedule.n_batches() {
            let t = Instant::now();
            let pairs = schedule.batch(self.graph, b);
            report.sampling_seconds += t.elapsed().as_secs_f64();
            let stats = self.step(epoch, b as u64, &pairs)?;
            report.loss += stats.loss;
            triplets += stats.triplets;
            report.sampling_seconds += stats.sampling_seconds;
            report.training_seconds += stats.training_seconds;
            report.aggregation_ops += stats.aggregation_ops;
        }
        self.state.epoch += 1;
        report.loss /= triplets.max(1) as f64;
        report.iterations = self.state.iteration;
        report.ppnp_rel_error = self.probes[probes_before..].last().map(|p| p.rel_error);
        report.epoch_seconds = start.elapsed().as_secs_f64();
        Ok(report)
    }

    /// One optimizer iteration on the given `(user, item node)` pairs.
    pub fn step(&mut self, epoch: u64, batch_index: u64, pairs: &[(usize, usize)]) -> Result<StepStats> {
        let t = Instant::now();
        let mut neg_rng = self.streams.stream(epoch, batch_index, Stream::Negatives);
        let batch = sample_negatives(self.graph, pairs, &mut neg_rng);
        if batch.is_empty() {
            return Ok(StepStats::default());
        }
        let mut neighbor_rng = self.streams.stream(epoch, batch_index, Stream::Neighbors);
        let frames = match self.config.model {
            ModelKind::Mf => Vec::new(),
            ModelKind::LightGcn {
                sampler: LightGcnSampler::Full,
                ..
            } => Vec::new(),
            ModelKind::LightGcn {
                layers, sample_size, ..
            } => sample_layers(&self.norm, &batch.targets, layers, Some(sample_size), &mut neighbor_rng),
            ModelKind::Ltgnn(c) => {
                let d = (c.vr_mode != VrMode::Full).then_some(c.sample_size);
                sample_layers(&self.norm, &batch.targets, c.layers, d, &mut neighbor_rng)
            }
        };
        let mut stats = StepStats {
            triplets: batch.len(),
            sampling_seconds: t.elapsed().as_secs_f64(),
            ..Default::default()
        };

        let t = Instant::now();
        let iteration = self.state.iteration;
        let finite = |m: &DenseMatrix<T>, what: &'static str| -> Result<()> {
            if m.is_finite() {
                Ok(())
            } else {
                Err(Error::NonFinite { what, iteration })
            }
        };
        let dim = self.config.dim;
        let frame_ops: u64 = frames.iter().map(|f| (f.nnz() * dim) as u64).sum();
        let full_ops = (self.norm.nnz() * dim) as u64;
        let (lr, wd) = (self.config.lr, self.config.weight_decay);
        match self.config.model {
            ModelKind::Mf => {
                let e_out = self.state.e_in.gather(&batch.targets);
                stats.loss = bpr_loss(&batch, &e_out);
                let grad = bpr_output_gradients(&batch, &e_out);
                adam_step(&mut self.adam, &mut self.state.e_in, &batch.targets, &grad, lr, wd)?;
            }
            ModelKind::Ltgnn(c) => {
                let alpha = T::of(c.alpha);
                let classic_full;
                let forward_terms = match (c.vr_mode, &self.memory) {
                    (VrMode::ClassicVr, Some(m)) => {
                        classic_full = spmm(&self.norm, &m.m_in)?;
                        stats.aggregation_ops += full_ops;
                        Some(VrTerms {
                            base: &m.m_in,
                            aggregated: &classic_full,
                        })
                    }
                    (mode, Some(m)) if mode.forward_memory() => Some(VrTerms {
                        base: &m.m_in,
                        aggregated: &m.m_ag,
                    }),
                    _ => None,
                };
                if let Some(m) = &self.memory {
                    if m.epoch_stamp != self.state.epoch {
                        return Err(Error::StaleMemory {
                            memory: m.epoch_stamp,
                            state: self.state.epoch,
                        });
                    }
                }
                if c.vr_mode.needs_memory() && self.memory.is_none() {
                    return Err(Error::StaleMemory {
                        memory: u64::MAX,
                        state: self.state.epoch,
                    });
                }
                let e_out = implicit_layers(
                    &frames,
                    &self.state.e_out_hist,
                    forward_terms,
                    Teleport::Nodes(&self.state.e_in),
                    alpha,
                );
                finite(&e_out, "forward output")?;
                stats.loss = bpr_loss(&batch, &e_out);
                let grad_out = bpr_output_gradients(&batch, &e_out);
                let backward_terms = match &self.memory {
                    Some(m) if c.vr_mode.backward_memory() => Some(VrTerms {
                        base: &m.m_in_grad,
                        aggregated: &m.m_ag_grad,
                    }),
                    _ => None,
                };
                let grad_in = implicit_layers(
                    &frames,
                    &self.state.grad_in_hist,
                    backward_terms,
                    Teleport::Targets(&grad_out),
                    alpha,
                );
                stats.aggregation_ops += 2 * frame_ops;
                adam_step(&mut self.adam, &mut self.state.e_in, &batch.targets, &grad_in, lr, wd)?;
                self.state.e_out_hist.scatter(&batch.targets, &e_out);
                self.state.grad_in_hist.scatter(&batch.targets, &grad_in);
            }
            ModelKind::LightGcn {
                layers,
                sampler: LightGcnSampler::Full,
                ..
            } => {
                let y = lightgcn_propagate(&self.norm, &self.state.e_in, layers)?;
                let e_out = y.gather(&batch.targets);
                finite(&e_out, "forward output")?;
                stats.loss = bpr_loss(&batch, &e_out);
                let grad_out = bpr_output_gradients(&batch, &e_out);
                let mut full = DenseMatrix::zeros(self.graph.n_nodes(), dim);
                full.scatter(&batch.targets, &grad_out);
                let mut grad = lightgcn_propagate(&self.norm, &full, layers)?;
                for &v in &batch.targets {
                    axpy(grad.row_mut(v), T::of(wd), self.state.e_in.row(v));
                }
                let rows: Vec<usize> = (0..grad.rows())
                    .filter(|&r| grad.row(r).iter().any(|&x| x != T::zero()))
                    .collect();
                let grad = grad.gather(&rows);
                stats.aggregation_ops += 2 * layers as u64 * full_ops;
                adam_step(&mut self.adam, &mut self.state.e_in, &rows, &grad, lr, 0.0)?;
            }
            ModelKind::LightGcn { layers, sampler, .. } => {
                let classic = sampler == LightGcnSampler::ClassicVr;
                let aggregated: Vec<DenseMatrix<T>> = if classic {
                    stats.aggregation_ops += layers as u64 * full_ops;
                    self.layer_history.iter().map(|h| spmm(&self.norm, h)).collect::<Result<_>>()?
                } else {
                    Vec::new()
                };
                let vr = classic.then(|| (self.layer_history.as_slice(), aggregated.as_slice()));
                let out = lightgcn_sampled_forward(&frames, &self.state.e_in, batch.targets.len(), vr);
                finite(&out.output, "forward output")?;
                stats.loss = bpr_loss(&batch, &out.output);
                let grad_out = bpr_output_gradients(&batch, &out.output);
                let (rows, mut grad) = lightgcn_sampled_backward(&frames, &grad_out);
                // batch nodes lead the accumulated rows
                for (k, &v) in rows.iter().take(batch.targets.len()).enumerate() {
                    axpy(grad.row_mut(k), T::of(wd), self.state.e_in.row(v));
                }
                stats.aggregation_ops += 2 * frame_ops;
                if classic {
                    self.save_layer_history(&frames, &out.layers);
                }
                adam_step(&mut self.adam, &mut self.state.e_in, &rows, &grad, lr, 0.0)?;
            }
        }
        if !stats.loss.is_finite() {
            return Err(Error::NonFinite {
                what: "loss",
                iteration,
            });
        }
        self.state.iteration += 1;
        self.last_targets = batch.targets;
        stats.training_seconds = t.elapsed().as_secs_f64();
        if let Some(every) = self.config.probe_every {
            if self.solver.is_some() && self.state.iteration % every as u64 == 0 {
                self.probe()?;
            }
        }
        Ok(stats)
    }

    fn save_layer_history(&mut self, frames: &[SampledAdjacency<T>], layers: &[DenseMatrix<T>]) {
        let inner = &frames[0];
        let mut read: Vec<usize> = inner.rows().to_vec();
        read.extend(inner.column_nodes());
        for v in read {
            let row = self.state.e_in.row(v).to_vec();
            self.layer_history[0].row_mut(v).copy_from_slice(&row);
        }
        for l in 1..self.layer_history.len() {
            self.layer_history[l].scatter(frames[l - 1].rows(), &layers[l - 1]);
        }
    }

    /// Measures and records the PPNP relative error of the output history.
    pub fn probe(&mut self) -> Result<Option<f64>> {
        let Some(solver) = &self.solver else {
            return Ok(None);
        };
        let rows = match self.config.probe_scope {
            ProbeScope::AllNodes => None,
            ProbeScope::BatchTargets => Some(self.last_targets.as_slice()),
        };
        let rel_error = ppnp_relative_error(solver, &self.state, rows)?;
        self.probes.push(Probe {
            iteration: self.state.iteration,
            epoch: self.state.epoch,
            rel_error,
        });
        Ok(Some(rel_error))
    }

    /// Ranking metrics of the current model on `test`.
    pub fn evaluate(&self, test: &[Vec<u32>], k: usize) -> Result<Metrics> {
        let emb = infer_embeddings(&self.norm, &self.state, &self.config.model, self.config.inference)?;
        evaluate(&emb, self.graph, test, k)
    }
}

/// Final state, per-epoch reports and PPNP probes of a run.
#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub state: EmbeddingState<T>,
    pub reports: Vec<EvalReport>,
    pub probes: Vec<Probe>,
}

/// Trains for `config.epochs` epochs on the dataset's training graph.
pub fn train<T: Real>(dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutcome<T>> {
    train_with(dataset, config, |_, _| Ok(()))
}

/// As [`train`], calling `on_epoch` with each report and the current state
/// as soon as the epoch is done.
pub fn train_with<T: Real>(
    dataset: &Dataset,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EvalReport, &EmbeddingState<T>) -> Result<()>,
) -> Result<TrainOutcome<T>> {
    let mut trainer = Trainer::<T>::new(&dataset.train, config.clone())?;
    let mut reports = Vec::with_capacity(config.epochs);
    for e in 1..=config.epochs {
        let mut report = trainer.run_epoch()?;
        let due = config.eval_every > 0 && (e % config.eval_every == 0 || e == config.epochs);
        if due {
            let m = trainer.evaluate(&dataset.test, config.eval_k)?;
            report.recall = Some(m.recall);
            report.ndcg = Some(m.ndcg);
        }
        log::info!(
            "epoch {} loss {:.5} recall {:?} ndcg {:?} ({:.2}s)",
            report.epoch,
            report.loss,
            report.recall,
            report.ndcg,
            report.epoch_seconds
        );
        on_epoch(&report, trainer.state())?;
        reports.push(report);
    }
    let probes = trainer.probes().to_vec();
    Ok(TrainOutcome {
        state: trainer.into_state(),
        reports,
        probes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::Triplet;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_batch(rng: &mut ChaCha8Rng, nodes: usize, triplets: usize, dim: usize) -> (BprBatch, DenseMatrix<f64>) {
        let t: Vec<Triplet> = (0..triplets)
            .map(|_| Triplet {
                user: rng.gen_range(0..nodes),
                pos: rng.gen_range(0..nodes),
                neg: rng.gen_range(0..nodes),
            })
            .collect();
        let batch = BprBatch::from_triplets(t);
        let emb = DenseMatrix::from_fn(batch.targets.len(), dim, |_, _| rng.gen_range(-1.0..1.0));
        (batch, emb)
    }

    #[test]
    fn neg_log_sigmoid_is_stable() {
        assert!((neg_log_sigmoid(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!(neg_log_sigmoid(800.0) < 1e-300);
        assert!((neg_log_sigmoid(-800.0) - 800.0).abs() < 1e-12);
        for &x in &[-5.0f64, -0.3, 0.7, 4.0] {
            let direct = -(1.0 / (1.0 + (-x).exp())).ln();
            assert!((neg_log_sigmoid(x) - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn equal_scores_give_ln2_per_triplet() {
        let batch = BprBatch::from_triplets(vec![
            Triplet { user: 0, pos: 1, neg: 2 },
            Triplet { user: 3, pos: 1, neg: 2 },
        ]);
        let emb = DenseMatrix::from_vec(4, 1, vec![1.0, 0.5, 0.5, 2.0]).unwrap();
        assert!((bpr_loss(&batch, &emb) - 2.0 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn zero_embeddings_zero_gradients() {
        let batch = BprBatch::from_triplets(vec![Triplet { user: 0, pos: 1, neg: 2 }]);
        let g = bpr_output_gradients(&batch, &DenseMatrix::<f64>::zeros(3, 4));
        assert!(g.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (batch, emb) = random_batch(&mut rng, 6, 5, 3);
        let grad = bpr_output_gradients(&batch, &emb);
        let h = 1e-5;
        for r in 0..emb.rows() {
            for c in 0..emb.cols() {
                let mut plus = emb.clone();
                plus.set(r, c, emb.get(r, c) + h);
                let mut minus = emb.clone();
                minus.set(r, c, emb.get(r, c) - h);
                let fd = (bpr_loss(&batch, &plus) - bpr_loss(&batch, &minus)) / (2.0 * h);
                let an = grad.get(r, c);
                assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-3), "{fd} vs {an}");
            }
        }
    }

    #[test]
    fn repeated_node_accumulates_roles() {
        // node 1 is the positive of the first triplet and the negative of the second
        let both = BprBatch::from_triplets(vec![
            Triplet { user: 0, pos: 1, neg: 2 },
            Triplet { user: 0, pos: 2, neg: 1 },
        ]);
        let first = BprBatch::from_triplets(vec![Triplet { user: 0, pos: 1, neg: 2 }]);
        let second = BprBatch::from_triplets(vec![Triplet { user: 0, pos: 2, neg: 1 }]);
        let emb = DenseMatrix::from_vec(3, 2, vec![0.3f64, -0.2, 0.5, 0.1, -0.4, 0.9]).unwrap();
        let g = bpr_output_gradients(&both, &emb);
        let g1 = bpr_output_gradients(&first, &emb);
        // second batch lists targets in order 0, 2, 1
        let swapped = DenseMatrix::from_fn(3, 2, |r, c| emb.get([0, 2, 1][r], c));
        let g2 = bpr_output_gradients(&second, &swapped);
        for c in 0..2 {
            assert!((g.get(1, c) - (g1.get(1, c) + g2.get(2, c))).abs() < 1e-15);
        }
    }

    #[test]
    fn adam_zero_gradient_no_decay_is_noop() {
        let mut adam = AdamState::<f64>::new(2, 3);
        let mut p = DenseMatrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let before = p.clone();
        adam_step(&mut adam, &mut p, &[1], &DenseMatrix::zeros(1, 3), 0.1, 0.0).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn adam_matches_scalar_recurrence() {
        let mut adam = AdamState::<f64>::new(1, 1);
        let mut p = DenseMatrix::from_vec(1, 1, vec![0.5]).unwrap();
        let g = DenseMatrix::from_vec(1, 1, vec![0.3]).unwrap();
        let (lr, b1, b2, eps) = (0.01, 0.9f64, 0.999f64, 1e-8);
        let (mut x, mut m, mut v) = (0.5f64, 0.0f64, 0.0f64);
        for t in 1..=50 {
            adam_step(&mut adam, &mut p, &[0], &g, lr, 0.0).unwrap();
            m = b1 * m + (1.0 - b1) * 0.3;
            v = b2 * v + (1.0 - b2) * 0.09;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            x -= lr * mh / (vh.sqrt() + eps);
            assert!((p.get(0, 0) - x).abs() < 1e-10);
        }
    }

    #[test]
    fn adam_pure_decay_shrinks_row() {
        let mut adam = AdamState::<f64>::new(1, 2);
        let mut p = DenseMatrix::from_vec(1, 2, vec![0.8, -0.6]).unwrap();
        let mut prev = 1.0;
        for _ in 0..20 {
            adam_step(&mut adam, &mut p, &[0], &DenseMatrix::zeros(1, 2), 0.01, 1e-2).unwrap();
            let norm = p.frobenius_norm();
            assert!(norm < prev);
            prev = norm;
        }
    }

    #[test]
    fn adam_rejects_nan() {
        let mut adam = AdamState::<f64>::new(1, 1);
        let mut p = DenseMatrix::zeros(1, 1);
        let g = DenseMatrix::from_vec(1, 1, vec![f64::NAN]).unwrap();
        assert!(matches!(
            adam_step(&mut adam, &mut p, &[0], &g, 0.1, 0.0),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn adam_untouched_rows_keep_step_count() {
        let mut adam = AdamState::<f32>::new(3, 1);
        let mut p = DenseMatrix::zeros(3, 1);
        let g = DenseMatrix::from_vec(1, 1, vec![1.0]).unwrap();
        adam_step(&mut adam, &mut p, &[2], &g, 0.1, 0.0).unwrap();
        assert_eq!((adam.row_steps(0), adam.row_steps(2)), (0, 1));
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad = [
            TrainConfig { batch_size: 0, ..Default::default() },
            TrainConfig { lr: 0.0, ..Default::default() },
            TrainConfig { probe_every: Some(0), ..Default::default() },
            TrainConfig {
                model: ModelKind::Ltgnn(PropagationConfig { alpha: 0.0, ..Default::default() }),
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
        assert!(TrainConfig::default().validate().is_ok());
    }
}
