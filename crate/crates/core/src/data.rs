//! Datasets, ground-truth neighborhoods, triplet supervision and seeded
//! synthetic benchmarks.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use log::info;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{shape, Error, Result};
use crate::scalar::{cmp_scalar, Scalar};

/// Random stream identifiers. Every component derives its generator from the
/// run seed plus one of these, so adding a consumer never perturbs the others.
pub mod streams {
    pub const NEIGHBORHOODS: u64 = 1;
    pub const SYNTH: u64 = 2;
    pub const LSH: u64 = 3;
    /// Hash learning for bit `r` uses `HASH_LEARN + r`.
    pub const HASH_LEARN: u64 = 1 << 20;
}

/// Deterministic generator for `(seed, stream)`.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Dense row-major feature matrix with optional integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<F> {
    dim: usize,
    values: Vec<F>,
    labels: Option<Vec<i64>>,
}

impl<F: Scalar> Dataset<F> {
    pub fn from_rows(rows: Vec<Vec<F>>, labels: Option<Vec<i64>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(shape(format!(
                    "row {i} has {} features, expected {dim}",
                    row.len()
                )));
            }
            values.extend_from_slice(row);
        }
        Self::from_flat(dim, values, labels)
    }

    pub fn from_flat(dim: usize, values: Vec<F>, labels: Option<Vec<i64>>) -> Result<Self> {
        if dim == 0 {
            return Err(shape("dataset dimension must be at least 1"));
        }
        if !values.len().is_multiple_of(dim) {
            return Err(shape(format!(
                "{} values do not fill rows of dimension {dim}",
                values.len()
            )));
        }
        let n = values.len() / dim;
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(shape(format!("{} labels for {n} rows", l.len())));
            }
        }
        Ok(Self {
            dim,
            values,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[F] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[F]> + '_ {
        self.values.chunks_exact(self.dim)
    }

    pub fn labels(&self) -> Option<&[i64]> {
        self.labels.as_deref()
    }

    /// New dataset holding the given rows (and labels) in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        Self {
            dim: self.dim,
            values,
            labels,
        }
    }

    /// Writes `v1,...,vd[,label]` per row.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for (i, row) in self.rows().enumerate() {
            let mut line = row
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",");
            if let Some(l) = &self.labels {
                line.push(',');
                line.push_str(&l[i].to_string());
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Whether a dense csv carries a trailing label column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelColumn {
    #[default]
    None,
    Last,
}

/// On-disk dataset layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    /// Comma-separated reals, optionally followed by an integer label.
    DenseCsv { labels: LabelColumn },
    /// `label idx:val ...` with 1-based indices. `dim` defaults to the
    /// largest index seen.
    Sparse { dim: Option<usize> },
}

pub fn load_dataset<F: Scalar>(path: impl AsRef<Path>, format: Format) -> Result<Dataset<F>> {
    let file = File::open(path)?;
    parse_dataset(BufReader::new(file), format)
}

pub fn parse_dataset<F: Scalar, R: BufRead>(reader: R, format: Format) -> Result<Dataset<F>> {
    match format {
        Format::DenseCsv { labels } => parse_dense(reader, labels),
        Format::Sparse { dim } => parse_sparse(reader, dim),
    }
}

fn parse_real<F: Scalar>(tok: &str, line: usize) -> Result<F> {
    let v: f64 = tok.trim().parse().map_err(|_| Error::Parse {
        line,
        msg: format!("not a number: {tok:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            msg: format!("non-finite value {tok:?}"),
        });
    }
    F::from_f64(v).ok_or_else(|| Error::Parse {
        line,
        msg: format!("value out of range: {tok:?}"),
    })
}

fn parse_label(tok: &str, line: usize) -> Result<i64> {
    tok.trim().parse().map_err(|_| Error::Parse {
        line,
        msg: format!("not an integer label: {tok:?}"),
    })
}

fn parse_dense<F: Scalar, R: BufRead>(reader: R, label_col: LabelColumn) -> Result<Dataset<F>> {
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut width: Option<usize> = None;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected {w} fields, found {}", fields.len()),
                })
            }
            _ => {}
        }
        let features = match label_col {
            LabelColumn::None => &fields[..],
            LabelColumn::Last => {
                let (last, rest) = fields.split_last().expect("split yields one field");
                labels.push(parse_label(last, lineno)?);
                rest
            }
        };
        if features.is_empty() {
            return Err(Error::Parse {
                line: lineno,
                msg: "row has no feature columns".into(),
            });
        }
        for tok in features {
            values.push(parse_real(tok, lineno)?);
        }
    }
    let Some(w) = width else {
        return Err(Error::Parse {
            line: 0,
            msg: "empty dataset".into(),
        });
    };
    let dim = if label_col == LabelColumn::Last {
        w - 1
    } else {
        w
    };
    let labels = (label_col == LabelColumn::Last).then_some(labels);
    Dataset::from_flat(dim, values, labels)
}

fn parse_sparse<F: Scalar, R: BufRead>(reader: R, dim: Option<usize>) -> Result<Dataset<F>> {
    let mut rows: Vec<(usize, Vec<(usize, F)>)> = Vec::new();
    let mut labels = Vec::new();
    let mut max_idx = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let mut toks = line.split_whitespace();
        let Some(label) = toks.next() else { continue };
        labels.push(parse_label(label, lineno)?);
        let mut entries = Vec::new();
        for tok in toks {
            let (i, v) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: lineno,
                msg: format!("expected idx:val, found {tok:?}"),
            })?;
            let i: usize = i.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad feature index {i:?}"),
            })?;
            if i == 0 {
                return Err(Error::Parse {
                    line: lineno,
                    msg: "feature indices are 1-based".into(),
                });
            }
            if let Some(d) = dim {
                if i > d {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("feature index {i} exceeds dimension {d}"),
                    });
                }
            }
            max_idx = max_idx.max(i);
            entries.push((i - 1, parse_real(v, lineno)?));
        }
        rows.push((lineno, entries));
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 0,
            msg: "empty dataset".into(),
        });
    }
    let dim = dim.unwrap_or(max_idx).max(1);
    let mut values = vec![F::zero(); rows.len() * dim];
    for (r, (_, entries)) in rows.iter().enumerate() {
        for &(i, v) in entries {
            values[r * dim + i] = v;
        }
    }
    Dataset::from_flat(dim, values, Some(labels))
}

/// Per-query ground truth: relevant and irrelevant row indices, both sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryNeighborhood {
    pub query: usize,
    pub relevant: Vec<usize>,
    pub irrelevant: Vec<usize>,
}

impl QueryNeighborhood {
    /// Validates disjointness and non-emptiness.
    pub fn new(query: usize, mut relevant: Vec<usize>, mut irrelevant: Vec<usize>) -> Result<Self> {
        relevant.sort_unstable();
        irrelevant.sort_unstable();
        if relevant.is_empty() || irrelevant.is_empty() {
            return Err(shape(format!("query {query}: empty neighbor set")));
        }
        if relevant.windows(2).any(|w| w[0] == w[1]) || irrelevant.windows(2).any(|w| w[0] == w[1])
        {
            return Err(shape(format!("query {query}: duplicate neighbor")));
        }
        if relevant.binary_search(&query).is_ok() || irrelevant.binary_search(&query).is_ok() {
            return Err(shape(format!("query {query} listed as its own neighbor")));
        }
        if relevant.iter().any(|r| irrelevant.binary_search(r).is_ok()) {
            return Err(shape(format!(
                "query {query}: relevant and irrelevant overlap"
            )));
        }
        Ok(Self {
            query,
            relevant,
            irrelevant,
        })
    }

    pub fn n_candidates(&self) -> usize {
        self.relevant.len() + self.irrelevant.len()
    }

    pub fn is_relevant(&self, idx: usize) -> bool {
        self.relevant.binary_search(&idx).is_ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NeighborMode {
    /// Same label is relevant.
    Label,
    /// Rows among the closest `percentile` fraction (Euclidean) are relevant.
    L2Percentile,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborhoodConfig {
    pub mode: NeighborMode,
    pub k_rel: usize,
    pub k_irr: usize,
    pub percentile: f64,
}

impl Default for NeighborhoodConfig {
    fn default() -> Self {
        Self {
            mode: NeighborMode::Label,
            k_rel: 50,
            k_irr: 100,
            percentile: 0.02,
        }
    }
}

/// Number of rows counted as relevant under the percentile rule, given
/// `others` candidate rows.
pub fn percentile_count(percentile: f64, others: usize) -> usize {
    ((percentile * others as f64).ceil() as usize)
        .max(1)
        .min(others)
}

/// Squared Euclidean distance.
#[inline]
pub fn sq_dist<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .fold(F::zero(), |acc, v| acc + v)
}

/// Relevant/irrelevant pools of `query` before subsampling, in the
/// percentile mode: the `count` closest rows (ties by index) are relevant.
fn percentile_pools<F: Scalar>(
    ds: &Dataset<F>,
    query: usize,
    percentile: f64,
) -> (Vec<usize>, Vec<usize>) {
    let q = ds.row(query);
    let mut others: Vec<(F, usize)> = (0..ds.len())
        .filter(|&j| j != query)
        .map(|j| (sq_dist(q, ds.row(j)), j))
        .collect();
    others.sort_by(|a, b| cmp_scalar(a.0, b.0).then(a.1.cmp(&b.1)));
    let count = percentile_count(percentile, others.len());
    let rel = others[..count].iter().map(|p| p.1).collect();
    let irr = others[count..].iter().map(|p| p.1).collect();
    (rel, irr)
}

fn subsample(pool: &mut Vec<usize>, cap: usize, rng: &mut ChaCha8Rng) {
    if pool.len() > cap {
        let (picked, _) = pool.partial_shuffle(rng, cap);
        *pool = picked.to_vec();
    }
    pool.sort_unstable();
}

/// Builds one neighborhood per query row, subsampled to at most
/// `k_rel`/`k_irr` members. Queries with an empty pool are dropped.
pub fn build_neighborhoods<F: Scalar>(
    ds: &Dataset<F>,
    cfg: &NeighborhoodConfig,
    seed: u64,
) -> Result<Vec<QueryNeighborhood>> {
    if cfg.k_rel == 0 || cfg.k_irr == 0 {
        return Err(Error::Config("k_rel and k_irr must be at least 1".into()));
    }
    let labels = match cfg.mode {
        NeighborMode::Label => Some(ds.labels().ok_or_else(|| {
            Error::Config("label neighborhoods require a labelled dataset".into())
        })?),
        NeighborMode::L2Percentile => {
            if !(cfg.percentile > 0.0 && cfg.percentile < 1.0) {
                return Err(Error::Config(format!(
                    "percentile must lie in (0, 1), got {}",
                    cfg.percentile
                )));
            }
            None
        }
    };

    let mut rng = seeded_rng(seed, streams::NEIGHBORHOODS);
    let mut out = Vec::with_capacity(ds.len());
    let mut dropped = 0usize;
    for q in 0..ds.len() {
        let (mut rel, mut irr) = match labels {
            Some(l) => {
                let (rel, irr): (Vec<usize>, Vec<usize>) = (0..ds.len())
                    .filter(|&j| j != q)
                    .partition(|&j| l[j] == l[q]);
                (rel, irr)
            }
            None => percentile_pools(ds, q, cfg.percentile),
        };
        subsample(&mut rel, cfg.k_rel, &mut rng);
        subsample(&mut irr, cfg.k_irr, &mut rng);
        if rel.is_empty() || irr.is_empty() {
            dropped += 1;
            continue;
        }
        out.push(QueryNeighborhood {
            query: q,
            relevant: rel,
            irrelevant: irr,
        });
    }
    if dropped > 0 {
        info!("dropped {dropped} queries with an empty relevant or irrelevant pool");
    }
    Ok(out)
}

/// Supervision triple: `j` should be closer to `i` than `k` is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triplet {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

impl Triplet {
    pub fn new(i: usize, j: usize, k: usize) -> Self {
        Self { i, j, k }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TripletSet {
    pub triplets: Vec<Triplet>,
}

impl TripletSet {
    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Triplet> {
        self.triplets.iter()
    }

    /// Checks distinct indices within each triplet and bounds against `n` rows.
    pub fn validate(&self, n: usize) -> Result<()> {
        for t in &self.triplets {
            if t.i == t.j || t.i == t.k || t.j == t.k {
                return Err(shape(format!("degenerate triplet {t:?}")));
            }
            if t.i >= n || t.j >= n || t.k >= n {
                return Err(shape(format!("triplet {t:?} out of range for {n} rows")));
            }
        }
        Ok(())
    }
}

/// Every `(i, j, k)` with `j` relevant and `k` irrelevant to query `i`.
pub fn generate_triplets(nbhds: &[QueryNeighborhood]) -> TripletSet {
    let total = nbhds
        .iter()
        .map(|n| n.relevant.len() * n.irrelevant.len())
        .sum();
    let mut triplets = Vec::with_capacity(total);
    let mut order: Vec<&QueryNeighborhood> = nbhds.iter().collect();
    order.sort_by_key(|n| n.query);
    for n in order {
        for &j in &n.relevant {
            for &k in &n.irrelevant {
                triplets.push(Triplet::new(n.query, j, k));
            }
        }
    }
    TripletSet { triplets }
}

/// Gaussian blobs around centers drawn uniformly in `[-1, 1]^d`. Rows are
/// grouped by cluster; the label is the cluster id.
pub fn synth_clusters<F: Scalar>(
    seed: u64,
    dim: usize,
    n_clusters: usize,
    per_cluster: usize,
    spread: f64,
) -> Result<Dataset<F>> {
    if dim == 0 || n_clusters == 0 || per_cluster == 0 {
        return Err(Error::Config("synthetic counts must be at least 1".into()));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::Config(format!(
            "spread must be non-negative, got {spread}"
        )));
    }
    let mut rng = seeded_rng(seed, streams::SYNTH);
    let centers: Vec<f64> = (0..n_clusters * dim)
        .map(|_| rng.random_range(-1.0..=1.0))
        .collect();
    let mut values = Vec::with_capacity(n_clusters * per_cluster * dim);
    let mut labels = Vec::with_capacity(n_clusters * per_cluster);
    for c in 0..n_clusters {
        let center = &centers[c * dim..(c + 1) * dim];
        for _ in 0..per_cluster {
            for &mu in center {
                let z: f64 = rng.sample(StandardNormal);
                values.push(F::c(mu + spread * z));
            }
            labels.push(c as i64);
        }
    }
    Dataset::from_flat(dim, values, Some(labels))
}

/// Draws `train_per + query_per` rows per cluster from [`synth_clusters`] and
/// splits each cluster into its first `train_per` rows and the rest.
pub fn synth_clusters_split<F: Scalar>(
    seed: u64,
    dim: usize,
    n_clusters: usize,
    train_per: usize,
    query_per: usize,
    spread: f64,
) -> Result<(Dataset<F>, Dataset<F>)> {
    let per = train_per + query_per;
    let all = synth_clusters(seed, dim, n_clusters, per, spread)?;
    let (mut train, mut query) = (Vec::new(), Vec::new());
    for c in 0..n_clusters {
        train.extend(c * per..c * per + train_per);
        query.extend(c * per + train_per..(c + 1) * per);
    }
    Ok((all.subset(&train), all.subset(&query)))
}

/// Rows uniform in `[-1, 1]^d` with labels drawn independently of the
/// features.
pub fn synth_uniform<F: Scalar>(
    seed: u64,
    dim: usize,
    n: usize,
    n_labels: usize,
) -> Result<Dataset<F>> {
    if dim == 0 || n == 0 || n_labels == 0 {
        return Err(Error::Config("synthetic counts must be at least 1".into()));
    }
    let mut rng = seeded_rng(seed, streams::SYNTH);
    let mut values = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        for _ in 0..dim {
            values.push(F::c(rng.random_range(-1.0..=1.0)));
        }
        labels.push(rng.random_range(0..n_labels as i64));
    }
    Dataset::from_flat(dim, values, Some(labels))
}
