//! Bipartite user-item interaction graph.
//!
//! Users occupy node ids `0..n_users`; items occupy `n_users..n_users + n_items`.
//! The graph keeps the binary adjacency, node degrees, and the self-loop
//! normalized adjacency `(D+I)^{-1/2} (A+I) (D+I)^{-1/2}` in CSR form.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

const CACHE_MAGIC: &[u8; 4] = b"LTGN";
const CACHE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InteractionFormat {
    /// One user per line followed by whitespace-separated item ids.
    AdjacencyList,
    /// One `user,item` pair per line (comma or whitespace separated).
    PairCsv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionGraph {
    n_users: usize,
    n_items: usize,
    edges: Vec<(u32, u32)>,
    adjacency: CsrMatrix<f64>,
    degrees: Vec<u32>,
    norm_adjacency: CsrMatrix<f64>,
}

/// Notes produced while reading an interaction file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadReport {
    pub warnings: Vec<String>,
    /// Original user id for each dense user index, when ids were remapped.
    pub user_ids: Option<Vec<u64>>,
    /// Original item id for each dense item index, when ids were remapped.
    pub item_ids: Option<Vec<u64>>,
    pub duplicate_edges: usize,
}

/// Interactions as read from disk, before id remapping.
#[derive(Debug, Clone, Default)]
pub struct RawInteractions {
    pub path: PathBuf,
    /// Every user id mentioned, including users listed without items.
    pub users: Vec<u64>,
    pub pairs: Vec<(u64, u64)>,
}

impl InteractionGraph {
    /// Builds the graph from `(user, item)` pairs with dense local ids.
    /// Duplicate pairs are stored once.
    pub fn from_pairs(n_users: usize, n_items: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let n_nodes = n_users + n_items;
        if n_nodes >= u32::MAX as usize {
            return Err(Error::Config(format!(
                "{n_nodes} nodes exceed the 32-bit index range"
            )));
        }
        let mut edges: Vec<(u32, u32)> = Vec::with_capacity(pairs.len());
        for &(u, i) in pairs {
            if u >= n_users || i >= n_items {
                return Err(Error::OutOfRange(format!(
                    "pair ({u}, {i}) outside {n_users} users x {n_items} items"
                )));
            }
            edges.push((u as u32, (n_users + i) as u32));
        }
        edges.sort_unstable();
        edges.dedup();

        let mut degrees = vec![0u32; n_nodes];
        for &(u, v) in &edges {
            degrees[u as usize] += 1;
            degrees[v as usize] += 1;
        }
        let mut row_ptr = vec![0usize; n_nodes + 1];
        for v in 0..n_nodes {
            row_ptr[v + 1] = row_ptr[v] + degrees[v] as usize;
        }
        let mut fill = row_ptr.clone();
        let mut col_idx = vec![0u32; row_ptr[n_nodes]];
        // Edges are sorted by (user, item), so user rows come out sorted; item
        // rows receive users in ascending order as well.
        for &(u, v) in &edges {
            col_idx[fill[u as usize]] = v;
            fill[u as usize] += 1;
            col_idx[fill[v as usize]] = u;
            fill[v as usize] += 1;
        }
        let values = vec![1.0; col_idx.len()];
        let adjacency = CsrMatrix::from_parts(n_nodes, n_nodes, row_ptr, col_idx, values)?;

        let mut graph = Self {
            n_users,
            n_items,
            edges,
            adjacency,
            degrees,
            norm_adjacency: CsrMatrix::identity(0),
        };
        graph.norm_adjacency = normalized_adjacency(&graph);
        Ok(graph)
    }

    #[inline]
    pub fn n_users(&self) -> usize {
        self.n_users
    }

    #[inline]
    pub fn n_items(&self) -> usize {
        self.n_items
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.n_users + self.n_items
    }

    /// Number of stored undirected edges, equal to the number of distinct interactions.
    #[inline]
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// `(user, item node id)` pairs sorted by user then item.
    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn adjacency(&self) -> &CsrMatrix<f64> {
        &self.adjacency
    }

    pub fn degrees(&self) -> &[u32] {
        &self.degrees
    }

    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        self.degrees[v] as usize
    }

    pub fn norm_adjacency(&self) -> &CsrMatrix<f64> {
        &self.norm_adjacency
    }

    #[inline]
    pub fn item_node(&self, item: usize) -> usize {
        self.n_users + item
    }

    #[inline]
    pub fn is_user(&self, v: usize) -> bool {
        v < self.n_users
    }

    /// Item node ids the user interacted with, ascending.
    #[inline]
    pub fn user_item_nodes(&self, user: usize) -> &[u32] {
        self.adjacency.row_cols(user)
    }

    #[inline]
    pub fn has_interaction(&self, user: usize, item_node: usize) -> bool {
        self.user_item_nodes(user)
            .binary_search(&(item_node as u32))
            .is_ok()
    }

    /// Largest closed-neighborhood size `deg(v) + 1` over all nodes.
    pub fn max_closed_neighborhood(&self) -> usize {
        self.degrees.iter().map(|&d| d as usize + 1).max().unwrap_or(1)
    }

    /// Writes the CSR arrays to a little-endian binary cache.
    pub fn write_cache(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.encode_cache(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    fn encode_cache(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(CACHE_MAGIC)?;
        w.write_u32::<LittleEndian>(CACHE_VERSION)?;
        w.write_u64::<LittleEndian>(self.n_users as u64)?;
        w.write_u64::<LittleEndian>(self.n_items as u64)?;
        for m in [&self.adjacency, &self.norm_adjacency] {
            w.write_u64::<LittleEndian>(m.nnz() as u64)?;
            for &p in m.row_ptr() {
                w.write_u64::<LittleEndian>(p as u64)?;
            }
            for &c in m.col_idx() {
                w.write_u32::<LittleEndian>(c)?;
            }
            for &v in m.values() {
                w.write_f64::<LittleEndian>(v)?;
            }
        }
        Ok(())
    }

    pub fn read_cache(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
        if &magic != CACHE_MAGIC {
            return Err(Error::Format(format!("{}: bad magic bytes", path.display())));
        }
        let io = |e| Error::io(path, e);
        let version = r.read_u32::<LittleEndian>().map_err(io)?;
        if version != CACHE_VERSION {
            return Err(Error::Format(format!("unsupported cache version {version}")));
        }
        let n_users = r.read_u64::<LittleEndian>().map_err(io)? as usize;
        let n_items = r.read_u64::<LittleEndian>().map_err(io)? as usize;
        let n = n_users + n_items;
        let mut mats = Vec::with_capacity(2);
        for _ in 0..2 {
            let nnz = r.read_u64::<LittleEndian>().map_err(io)? as usize;
            let mut row_ptr = vec![0usize; n + 1];
            for p in row_ptr.iter_mut() {
                *p = r.read_u64::<LittleEndian>().map_err(io)? as usize;
            }
            let mut col_idx = vec![0u32; nnz];
            r.read_u32_into::<LittleEndian>(&mut col_idx).map_err(io)?;
            let mut values = vec![0f64; nnz];
            r.read_f64_into::<LittleEndian>(&mut values).map_err(io)?;
            mats.push(CsrMatrix::from_parts(n, n, row_ptr, col_idx, values)?);
        }
        let norm_adjacency = mats.pop().unwrap();
        let adjacency = mats.pop().unwrap();
        let degrees: Vec<u32> = (0..n).map(|v| adjacency.row_len(v) as u32).collect();
        let mut edges = Vec::new();
        for u in 0..n_users {
            for &c in adjacency.row_cols(u) {
                if (c as usize) < n_users {
                    return Err(Error::Format("cache contains a user-user edge".into()));
                }
                edges.push((u as u32, c));
            }
        }
        Ok(Self {
            n_users,
            n_items,
            edges,
            adjacency,
            degrees,
            norm_adjacency,
        })
    }
}

/// Computes `(D+I)^{-1/2} (A+I) (D+I)^{-1/2}` with the self-loop placed in
/// sorted position within each row.
pub fn normalized_adjacency(graph: &InteractionGraph) -> CsrMatrix<f64> {
    let n = graph.n_nodes();
    let adj = graph.adjacency();
    let inv_sqrt: Vec<f64> = graph
        .degrees()
        .iter()
        .map(|&d| 1.0 / ((d as f64) + 1.0).sqrt())
        .collect();
    let mut row_ptr = Vec::with_capacity(n + 1);
    row_ptr.push(0);
    let mut col_idx = Vec::with_capacity(adj.nnz() + n);
    let mut values = Vec::with_capacity(adj.nnz() + n);
    for v in 0..n {
        let mut self_done = false;
        for &c in adj.row_cols(v) {
            if !self_done && c as usize > v {
                col_idx.push(v as u32);
                values.push(inv_sqrt[v] * inv_sqrt[v]);
                self_done = true;
            }
            col_idx.push(c);
            values.push(inv_sqrt[v] * inv_sqrt[c as usize]);
        }
        if !self_done {
            col_idx.push(v as u32);
            values.push(inv_sqrt[v] * inv_sqrt[v]);
        }
        row_ptr.push(col_idx.len());
    }
    CsrMatrix::from_parts(n, n, row_ptr, col_idx, values)
        .expect("normalized adjacency is structurally valid")
}

/// Reads raw interactions without building a graph.
pub fn read_raw(path: &Path, format: InteractionFormat) -> Result<RawInteractions> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut raw = RawInteractions {
        path: path.to_path_buf(),
        ..Default::default()
    };
    let parse_id = |tok: &str, line: usize| -> Result<u64> {
        tok.parse::<u64>().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("expected a non-negative integer id, found {tok:?}"),
        })
    };
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        match format {
            InteractionFormat::AdjacencyList => {
                let mut toks = trimmed.split_whitespace();
                let user = parse_id(toks.next().unwrap(), line_no)?;
                raw.users.push(user);
                for tok in toks {
                    raw.pairs.push((user, parse_id(tok, line_no)?));
                }
            }
            InteractionFormat::PairCsv => {
                let toks: Vec<&str> = trimmed
                    .split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|t| !t.is_empty())
                    .collect();
                if line_no == 1 && toks.iter().any(|t| t.chars().any(|c| c.is_alphabetic())) {
                    continue; // header row
                }
                if toks.len() < 2 {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line: line_no,
                        message: "expected `user,item`".into(),
                    });
                }
                let user = parse_id(toks[0], line_no)?;
                let item = parse_id(toks[1], line_no)?;
                raw.users.push(user);
                raw.pairs.push((user, item));
            }
        }
    }
    Ok(raw)
}

/// Dense id assignment for a set of raw ids. Identity when ids are already
/// `0..count`; otherwise ids are renumbered in ascending order.
struct IdMap {
    count: usize,
    remap: Option<HashMap<u64, usize>>,
    originals: Option<Vec<u64>>,
}

impl IdMap {
    fn build(ids: impl IntoIterator<Item = u64>) -> Self {
        let set: BTreeSet<u64> = ids.into_iter().collect();
        let max = set.iter().next_back().copied();
        match max {
            None => IdMap { count: 0, remap: None, originals: None },
            Some(max) if max as usize + 1 == set.len() => IdMap {
                count: set.len(),
                remap: None,
                originals: None,
            },
            Some(_) => {
                let originals: Vec<u64> = set.into_iter().collect();
                let remap = originals.iter().enumerate().map(|(i, &id)| (id, i)).collect();
                IdMap {
                    count: originals.len(),
                    remap: Some(remap),
                    originals: Some(originals),
                }
            }
        }
    }

    #[inline]
    fn get(&self, id: u64) -> usize {
        match &self.remap {
            None => id as usize,
            Some(m) => m[&id],
        }
    }
}

/// Loads one interaction file into a graph.
pub fn load_interactions(path: &Path, format: InteractionFormat) -> Result<(InteractionGraph, LoadReport)> {
    let raw = read_raw(path, format)?;
    let dataset = Dataset::from_raw(raw, None)?;
    Ok((dataset.train, dataset.report))
}

/// Training graph plus held-out test positives in the same id space.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: InteractionGraph,
    /// Per-user test items as local item ids (`0..n_items`), ascending.
    pub test: Vec<Vec<u32>>,
    pub report: LoadReport,
}

impl Dataset {
    pub fn load(train: &Path, test: Option<&Path>, format: InteractionFormat) -> Result<Self> {
        let train_raw = read_raw(train, format)?;
        let test_raw = match test {
            Some(p) => Some(read_raw(p, format)?),
            None => None,
        };
        Self::from_raw(train_raw, test_raw)
    }

    /// Loads `dir/train.txt` and, when present, `dir/test.txt`; a file path
    /// is read as a training file with no test split.
    pub fn load_path(path: &Path, format: InteractionFormat) -> Result<Self> {
        if path.is_dir() {
            let test = path.join("test.txt");
            Self::load(
                &path.join("train.txt"),
                test.exists().then_some(test.as_path()),
                format,
            )
        } else {
            Self::load(path, None, format)
        }
    }

    pub fn from_raw(train: RawInteractions, test: Option<RawInteractions>) -> Result<Self> {
        if train.pairs.is_empty() {
            return Err(Error::EmptyDataset(train.path));
        }
        let test_pairs: &[(u64, u64)] = test.as_ref().map(|t| t.pairs.as_slice()).unwrap_or(&[]);
        let test_users: &[u64] = test.as_ref().map(|t| t.users.as_slice()).unwrap_or(&[]);
        let users = IdMap::build(train.users.iter().chain(test_users).copied());
        let items = IdMap::build(train.pairs.iter().chain(test_pairs).map(|&(_, i)| i));

        let mut report = LoadReport::default();
        if users.remap.is_some() {
            let msg = format!("user ids are not contiguous; remapped {} users", users.count);
            log::warn!("{msg}");
            report.warnings.push(msg);
        }
        if items.remap.is_some() {
            let msg = format!("item ids are not contiguous; remapped {} items", items.count);
            log::warn!("{msg}");
            report.warnings.push(msg);
        }

        let pairs: Vec<(usize, usize)> = train
            .pairs
            .iter()
            .map(|&(u, i)| (users.get(u), items.get(i)))
            .collect();
        let graph = InteractionGraph::from_pairs(users.count, items.count, &pairs)?;
        report.duplicate_edges = pairs.len() - graph.n_edges();
        if report.duplicate_edges > 0 {
            let msg = format!("dropped {} duplicate interactions", report.duplicate_edges);
            log::warn!("{msg}");
            report.warnings.push(msg);
        }

        let mut test_lists = vec![Vec::new(); users.count];
        for &(u, i) in test_pairs {
            test_lists[users.get(u)].push(items.get(i) as u32);
        }
        for list in &mut test_lists {
            list.sort_unstable();
            list.dedup();
        }
        report.user_ids = users.originals;
        report.item_ids = items.originals;
        Ok(Self {
            train: graph,
            test: test_lists,
            report,
        })
    }

    pub fn n_test_interactions(&self) -> usize {
        self.test.iter().map(Vec::len).sum()
    }
}

/// Writes interactions in the adjacency-list format, one line per user.
pub fn write_adjacency_list(path: &Path, n_users: usize, pairs: &[(usize, usize)]) -> Result<()> {
    let mut per_user: Vec<Vec<usize>> = vec![Vec::new(); n_users];
    for &(u, i) in pairs {
        per_user[u].push(i);
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (u, items) in per_user.iter_mut().enumerate() {
        items.sort_unstable();
        let mut line = u.to_string();
        for i in items.iter() {
            line.push(' ');
            line.push_str(&i.to_string());
        }
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
