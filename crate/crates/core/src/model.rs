//! Embedding state, model variants, scoring and checkpoints.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::dense::{dot, DenseMatrix};
use crate::error::{Error, Result};
use crate::propagation::{appnp_iterate, lightgcn_propagate, PropagationConfig, VrMode};
use crate::scalar::{Precision, Real};
use crate::sparse::CsrMatrix;

/// Trainable input embeddings and the histories carried between iterations.
///
/// Rows `0..n_users` are users and `n_users..n_users + n_items` are items.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingState<T> {
    pub e_in: DenseMatrix<T>,
    /// Last computed propagated output per node.
    pub e_out_hist: DenseMatrix<T>,
    /// Last computed input gradient per node.
    pub grad_in_hist: DenseMatrix<T>,
    /// Completed optimizer steps.
    pub iteration: u64,
    /// Completed epochs.
    pub epoch: u64,
    n_users: usize,
    n_items: usize,
}

impl<T: Real> EmbeddingState<T> {
    /// Normal initialization with mean 0; the output history starts at the
    /// input table and the gradient history at zero.
    pub fn init<R: Rng>(n_users: usize, n_items: usize, dim: usize, std: f64, rng: &mut R) -> Self {
        let n = n_users + n_items;
        let e_in = if std == 0.0 {
            DenseMatrix::zeros(n, dim)
        } else {
            let normal = Normal::new(0.0, std).expect("finite positive std");
            DenseMatrix::from_fn(n, dim, |_, _| T::of(normal.sample(rng)))
        };
        Self::from_table(n_users, n_items, e_in)
    }

    /// Cold-start state around an existing input table.
    pub fn from_table(n_users: usize, n_items: usize, e_in: DenseMatrix<T>) -> Self {
        assert_eq!(e_in.rows(), n_users + n_items, "table rows must cover every node");
        let grad_in_hist = DenseMatrix::zeros(e_in.rows(), e_in.cols());
        Self {
            e_out_hist: e_in.clone(),
            e_in,
            grad_in_hist,
            iteration: 0,
            epoch: 0,
            n_users,
            n_items,
        }
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn n_nodes(&self) -> usize {
        self.n_users + self.n_items
    }

    pub fn dim(&self) -> usize {
        self.e_in.cols()
    }

    pub fn is_finite(&self) -> bool {
        self.e_in.is_finite() && self.e_out_hist.is_finite() && self.grad_in_hist.is_finite()
    }
}

/// Checked initialization; `std` must be finite and non-negative.
pub fn init_embeddings<T: Real, R: Rng>(
    n_users: usize,
    n_items: usize,
    dim: usize,
    rng: &mut R,
    std: f64,
) -> Result<EmbeddingState<T>> {
    if dim == 0 {
        return Err(Error::Config("embedding dimension must be at least 1".into()));
    }
    if !(std.is_finite() && std >= 0.0) {
        return Err(Error::Config(format!("initialization std {std} must be finite and >= 0")));
    }
    Ok(EmbeddingState::init(n_users, n_items, dim, std, rng))
}

/// How sampled LightGCN estimates each layer's aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LightGcnSampler {
    Full,
    Ns,
    ClassicVr,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    Mf,
    LightGcn {
        layers: usize,
        sampler: LightGcnSampler,
        /// Neighbors per row for the sampled variants.
        sample_size: usize,
    },
    Ltgnn(PropagationConfig),
}

impl ModelKind {
    pub fn name(&self) -> String {
        match self {
            ModelKind::Mf => "mf".into(),
            ModelKind::LightGcn { layers, sampler, .. } => match sampler {
                LightGcnSampler::Full => format!("lightgcn-l{layers}"),
                LightGcnSampler::Ns => format!("lightgcn-ns-l{layers}"),
                LightGcnSampler::ClassicVr => format!("lightgcn-vr-l{layers}"),
            },
            ModelKind::Ltgnn(c) => format!("ltgnn-{}-l{}", c.vr_mode, c.layers),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelKind::Mf => Ok(()),
            ModelKind::LightGcn { layers, sample_size, .. } => {
                if *layers == 0 {
                    return Err(Error::Config("LightGCN needs at least one layer".into()));
                }
                if *sample_size == 0 {
                    return Err(Error::Config("sample size must be at least 1".into()));
                }
                Ok(())
            }
            ModelKind::Ltgnn(c) => c.validate(),
        }
    }
}

/// Which embeddings are used for scoring after training an implicit model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Inference {
    /// APPNP over the trained input table with this many steps.
    Appnp(usize),
    /// The last propagated output saved during training.
    OutputHistory,
}

impl Default for Inference {
    fn default() -> Self {
        Inference::Appnp(3)
    }
}

/// Final embeddings used for ranking.
pub fn infer_embeddings<T: Real>(
    norm: &CsrMatrix<T>,
    state: &EmbeddingState<T>,
    kind: &ModelKind,
    inference: Inference,
) -> Result<DenseMatrix<T>> {
    match kind {
        ModelKind::Mf => Ok(state.e_in.clone()),
        ModelKind::LightGcn { layers, .. } => lightgcn_propagate(norm, &state.e_in, *layers),
        ModelKind::Ltgnn(c) => match inference {
            Inference::Appnp(steps) => appnp_iterate(norm, &state.e_in, T::of(c.alpha), steps),
            Inference::OutputHistory => Ok(state.e_out_hist.clone()),
        },
    }
}

/// Inner-product affinity of `user` and local item `item`.
pub fn score<T: Real>(emb: &DenseMatrix<T>, n_users: usize, user: usize, item: usize) -> Result<T> {
    if user >= n_users {
        return Err(Error::OutOfRange(format!("user {user} (have {n_users})")));
    }
    let n_items = emb.rows().saturating_sub(n_users);
    if item >= n_items {
        return Err(Error::OutOfRange(format!("item {item} (have {n_items})")));
    }
    Ok(dot(emb.row(user), emb.row(n_users + item)))
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"LTCK";
const CHECKPOINT_VERSION: u32 = 1;

/// Model state as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub kind: ModelKind,
    pub state: EmbeddingState<T>,
}

fn kind_fields(kind: &ModelKind) -> (u8, u8, u32, u32, f64) {
    match *kind {
        ModelKind::Mf => (0, 0, 0, 0, 1.0),
        ModelKind::LightGcn {
            layers,
            sampler,
            sample_size,
        } => {
            let s = match sampler {
                LightGcnSampler::Full => 0,
                LightGcnSampler::Ns => 1,
                LightGcnSampler::ClassicVr => 2,
            };
            (1, s, layers as u32, sample_size as u32, 1.0)
        }
        ModelKind::Ltgnn(c) => {
            let v = match c.vr_mode {
                VrMode::Ns => 0,
                VrMode::Fvr => 1,
                VrMode::Bvr => 2,
                VrMode::Bivr => 3,
                VrMode::ClassicVr => 4,
                VrMode::Full => 5,
            };
            (2, v, c.layers as u32, c.sample_size as u32, c.alpha)
        }
    }
}

fn kind_from_fields(tag: u8, variant: u8, layers: u32, sample_size: u32, alpha: f64) -> Result<ModelKind> {
    let bad = || Error::Format(format!("unknown model tag {tag}/{variant}"));
    Ok(match tag {
        0 => ModelKind::Mf,
        1 => ModelKind::LightGcn {
            layers: layers as usize,
            sample_size: sample_size as usize,
            sampler: match variant {
                0 => LightGcnSampler::Full,
                1 => LightGcnSampler::Ns,
                2 => LightGcnSampler::ClassicVr,
                _ => return Err(bad()),
            },
        },
        2 => ModelKind::Ltgnn(PropagationConfig {
            alpha,
            layers: layers as usize,
            sample_size: sample_size as usize,
            vr_mode: match variant {
                0 => VrMode::Ns,
                1 => VrMode::Fvr,
                2 => VrMode::Bvr,
                3 => VrMode::Bivr,
                4 => VrMode::ClassicVr,
                5 => VrMode::Full,
                _ => return Err(bad()),
            },
        }),
        _ => return Err(bad()),
    })
}

impl<T: Real> Checkpoint<T> {
    /// Writes to a temporary sibling and renames it into place, so an
    /// interrupted write never replaces a good checkpoint.
    pub fn write(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
            let mut w = BufWriter::new(file);
            self.encode(&mut w).map_err(|e| Error::io(&tmp, e))?;
            w.flush().map_err(|e| Error::io(&tmp, e))?;
        }
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    fn encode(&self, w: &mut impl Write) -> std::io::Result<()> {
        let s = &self.state;
        let (tag, variant, layers, sample_size, alpha) = kind_fields(&self.kind);
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_u32::<LittleEndian>(CHECKPOINT_VERSION)?;
        w.write_u8(tag)?;
        w.write_u8(variant)?;
        w.write_u32::<LittleEndian>(layers)?;
        w.write_u32::<LittleEndian>(sample_size)?;
        w.write_f64::<LittleEndian>(alpha)?;
        w.write_u64::<LittleEndian>(s.n_users as u64)?;
        w.write_u64::<LittleEndian>(s.n_items as u64)?;
        w.write_u64::<LittleEndian>(s.dim() as u64)?;
        w.write_u64::<LittleEndian>(s.epoch)?;
        w.write_u64::<LittleEndian>(s.iteration)?;
        w.write_u8(T::TAG)?;
        let mut buf = Vec::with_capacity(s.e_in.as_slice().len() * T::BYTES);
        for m in [&s.e_in, &s.e_out_hist, &s.grad_in_hist] {
            buf.clear();
            for &x in m.as_slice() {
                x.write_le(&mut buf);
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    /// Reads a checkpoint written in either precision, converting to `T`.
    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        Self::decode(&mut r).map_err(|e| match e {
            DecodeError::Io(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
                Error::Format(format!("{} is truncated", path.display()))
            }
            DecodeError::Io(e) => Error::io(path, e),
            DecodeError::Other(e) => e,
        })
    }

    fn decode(r: &mut impl Read) -> std::result::Result<Self, DecodeError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()).into());
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")).into());
        }
        let tag = r.read_u8()?;
        let variant = r.read_u8()?;
        let layers = r.read_u32::<LittleEndian>()?;
        let sample_size = r.read_u32::<LittleEndian>()?;
        let alpha = r.read_f64::<LittleEndian>()?;
        let kind = kind_from_fields(tag, variant, layers, sample_size, alpha)?;
        let n_users = r.read_u64::<LittleEndian>()? as usize;
        let n_items = r.read_u64::<LittleEndian>()? as usize;
        let dim = r.read_u64::<LittleEndian>()? as usize;
        let epoch = r.read_u64::<LittleEndian>()?;
        let iteration = r.read_u64::<LittleEndian>()?;
        let dtype = r.read_u8()?;
        let width = match dtype {
            4 => 4,
            8 => 8,
            other => return Err(Error::Format(format!("unknown dtype tag {other}")).into()),
        };
        let len = (n_users + n_items)
            .checked_mul(dim)
            .ok_or_else(|| Error::Format("checkpoint shape overflows".into()))?;
        let read_matrix = |r: &mut dyn Read| -> std::result::Result<DenseMatrix<T>, DecodeError> {
            let mut bytes = vec![0u8; len * width];
            r.read_exact(&mut bytes)?;
            let data: Vec<T> = bytes
                .chunks_exact(width)
                .map(|c| if width == 4 { T::of(f32::read_le(c) as f64) } else { T::of(f64::read_le(c)) })
                .collect();
            Ok(DenseMatrix::from_vec(n_users + n_items, dim, data)?)
        };
        let e_in = read_matrix(r)?;
        let e_out_hist = read_matrix(r)?;
        let grad_in_hist = read_matrix(r)?;
        Ok(Self {
            kind,
            state: EmbeddingState {
                e_in,
                e_out_hist,
                grad_in_hist,
                iteration,
                epoch,
                n_users,
                n_items,
            },
        })
    }
}

/// Precision a checkpoint was written in, read from its header.
pub fn checkpoint_precision(path: &Path) -> Result<Precision> {
    const DTYPE_OFFSET: usize = 66;
    let mut header = [0u8; DTYPE_OFFSET + 1];
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    f.read_exact(&mut header)
        .map_err(|_| Error::Format(format!("{} is truncated", path.display())))?;
    if &header[..4] != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    match header[DTYPE_OFFSET] {
        4 => Ok(Precision::F32),
        8 => Ok(Precision::F64),
        other => Err(Error::Format(format!("unknown dtype tag {other}"))),
    }
}

enum DecodeError {
    Io(std::io::Error),
    Other(Error),
}

impl From<std::io::Error> for DecodeError {
    fn from(e: std::io::Error) -> Self {
        DecodeError::Io(e)
    }
}

impl From<Error> for DecodeError {
    fn from(e: Error) -> Self {
        DecodeError::Other(e)
    }
}
