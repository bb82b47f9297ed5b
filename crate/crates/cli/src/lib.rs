//! Command-line front end: synthetic data, training, encoding, search and
//! evaluation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod model_io;

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use binhash::cghash::{train_cghash, CGConfig, Loss, Regularizer};
use binhash::data::{
    build_neighborhoods, generate_triplets, load_dataset, synth_clusters, Format, LabelColumn,
    NeighborMode, NeighborhoodConfig,
};
use binhash::eval::{cross_ground_truth, evaluate, lsh_baseline};
use binhash::hashcore::rank_codes;
use binhash::rankloss::RankScoreKind;
use binhash::structhash::{train_structhash, StructConfig, TrainMode};
use binhash::{Dataset, Error, HashModel};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

#[derive(Debug, Parser)]
#[command(name = "binhash", version, about = "Supervised binary-code hashing")]
pub struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded Gaussian-cluster dataset as dense csv with labels.
    Synth(SynthArgs),
    /// Learn a hash model.
    Train(TrainArgs),
    /// Write the binary code of every row.
    Encode(EncodeArgs),
    /// Rank database rows by weighted Hamming distance to one query row.
    Search(SearchArgs),
    /// Retrieval metrics of a model as csv.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    DenseCsv,
    Sparse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LabelsArg {
    None,
    Last,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    #[arg(long, value_enum, default_value = "dense-csv")]
    pub format: FormatArg,
    /// Label column of dense csv files.
    #[arg(long, value_enum, default_value = "none")]
    pub labels: LabelsArg,
    /// Dimension of sparse files (default: largest index seen).
    #[arg(long)]
    pub sparse_dim: Option<usize>,
}

impl DataArgs {
    fn format(&self) -> Result<Format, CliError> {
        match self.format {
            FormatArg::DenseCsv => {
                if self.sparse_dim.is_some() {
                    return Err(usage("--sparse-dim only applies to --format sparse"));
                }
                Ok(Format::DenseCsv {
                    labels: match self.labels {
                        LabelsArg::None => LabelColumn::None,
                        LabelsArg::Last => LabelColumn::Last,
                    },
                })
            }
            FormatArg::Sparse => {
                if self.labels == LabelsArg::Last {
                    return Err(usage(
                        "sparse rows always start with a label; drop --labels",
                    ));
                }
                Ok(Format::Sparse {
                    dim: self.sparse_dim,
                })
            }
        }
    }

    fn load(&self, path: &Path) -> Result<Dataset<f64>, CliError> {
        let format = self.format()?;
        Ok(load_dataset(path, format)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NeighborsArg {
    Label,
    L2Percentile,
}

impl From<NeighborsArg> for NeighborMode {
    fn from(n: NeighborsArg) -> Self {
        match n {
            NeighborsArg::Label => NeighborMode::Label,
            NeighborsArg::L2Percentile => NeighborMode::L2Percentile,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    #[arg(long, default_value_t = 3)]
    pub clusters: usize,
    #[arg(long, default_value_t = 100)]
    pub per_cluster: usize,
    #[arg(long, default_value_t = 1.0)]
    pub spread: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Cghash,
    Structhash,
    Lsh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    SquaredHinge,
    Logistic,
    Auc,
    Ndcg,
    Sndcg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegArg {
    L1,
    Linf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Full,
    Stagewise,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Training rows.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub data_format: DataArgs,
    #[arg(long, value_enum, default_value = "cghash")]
    pub method: MethodArg,
    /// squared-hinge or logistic for cghash; auc, ndcg or sndcg for structhash.
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
    /// NDCG cutoff K.
    #[arg(long)]
    pub ndcg_k: Option<usize>,
    #[arg(long, value_enum)]
    pub reg: Option<RegArg>,
    /// Trade-off C (cghash default 1, structhash default 10).
    #[arg(long)]
    pub c: Option<f64>,
    /// Box bound C' on the weights under linf.
    #[arg(long)]
    pub c_prime: Option<f64>,
    #[arg(long, default_value_t = 32)]
    pub bits: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "label")]
    pub neighbors: NeighborsArg,
    #[arg(long, default_value_t = 50)]
    pub k_rel: usize,
    #[arg(long, default_value_t = 100)]
    pub k_irr: usize,
    #[arg(long, default_value_t = 0.02)]
    pub percentile: f64,
    /// Cutting-plane tolerance.
    #[arg(long)]
    pub eps_cp: Option<f64>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub max_cp_iters: Option<usize>,
    /// Model file.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-bit training log (default: `<out>.stats.csv`).
    #[arg(long)]
    pub stats: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EncodeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub data_format: DataArgs,
    /// Codes file (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Database rows.
    #[arg(long)]
    pub db: PathBuf,
    /// File holding the query row (default: the database).
    #[arg(long)]
    pub queries: Option<PathBuf>,
    /// 0-based query row index.
    #[arg(long)]
    pub query_row: usize,
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
    #[command(flatten)]
    pub data_format: DataArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub db: PathBuf,
    #[command(flatten)]
    pub data_format: DataArgs,
    /// Cutoffs for Prec@K and NDCG@K.
    #[arg(long, value_delimiter = ',', default_value = "10,100")]
    pub ks: Vec<usize>,
    #[arg(long, value_enum, default_value = "label")]
    pub neighbors: NeighborsArg,
    #[arg(long, default_value_t = 0.02)]
    pub percentile: f64,
    /// Metrics csv (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Mean precision-recall curve csv.
    #[arg(long)]
    pub pr_out: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    /// Inconsistent or invalid flags; exit code 1.
    Usage(String),
    /// Failure while running; exit code 2.
    Runtime(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Runtime(Error::Io(e))
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Encode(a) => cmd_encode(&a),
        Command::Search(a) => cmd_search(&a),
        Command::Eval(a) => cmd_eval(&a),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| {
        CliError::Runtime(Error::Io(io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        )))
    })
}

fn open_model(path: &Path) -> Result<HashModel<f64>, CliError> {
    let file = File::open(path).map_err(|e| {
        CliError::Runtime(Error::Io(io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        )))
    })?;
    Ok(model_io::read_model(BufReader::new(file))?)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn cmd_synth(a: &SynthArgs) -> Result<(), CliError> {
    if a.dim == 0 || a.clusters == 0 || a.per_cluster == 0 {
        return Err(usage(
            "--dim, --clusters and --per-cluster must be at least 1",
        ));
    }
    if !(a.spread >= 0.0 && a.spread.is_finite()) {
        return Err(usage("--spread must be a non-negative number"));
    }
    let ds: Dataset<f64> = synth_clusters(a.seed, a.dim, a.clusters, a.per_cluster, a.spread)?;
    let mut out = create(&a.out)?;
    ds.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

enum Plan {
    Cg(CGConfig),
    Struct(StructConfig),
    Lsh,
}

fn plan(a: &TrainArgs) -> Result<Plan, CliError> {
    let cg_only = |set: bool, flag: &str| {
        if set {
            Err(usage(format!("{flag} only applies to --method cghash")))
        } else {
            Ok(())
        }
    };
    let sh_only = |set: bool, flag: &str| {
        if set {
            Err(usage(format!("{flag} only applies to --method structhash")))
        } else {
            Ok(())
        }
    };
    if a.bits == 0 {
        return Err(usage("--bits must be at least 1"));
    }
    if let Some(c) = a.c {
        if !(c > 0.0 && c.is_finite()) {
            return Err(usage("--c must be positive"));
        }
    }
    match a.method {
        MethodArg::Cghash => {
            sh_only(a.eps_cp.is_some(), "--eps-cp")?;
            sh_only(a.mode.is_some(), "--mode")?;
            sh_only(a.max_cp_iters.is_some(), "--max-cp-iters")?;
            sh_only(a.ndcg_k.is_some(), "--ndcg-k")?;
            let loss = match a.loss.unwrap_or(LossArg::SquaredHinge) {
                LossArg::SquaredHinge => Loss::SquaredHinge,
                LossArg::Logistic => Loss::Logistic,
                other => return Err(usage(format!("--loss {other:?} is a structhash loss"))),
            };
            let regularizer = match a.reg.unwrap_or(RegArg::L1) {
                RegArg::L1 => Regularizer::L1,
                RegArg::Linf => Regularizer::Linf,
            };
            if a.c_prime.is_some() && regularizer != Regularizer::Linf {
                return Err(usage("--c-prime only applies with --reg linf"));
            }
            if regularizer == Regularizer::Linf && a.c.is_some() {
                return Err(usage("--c does not apply with --reg linf; use --c-prime"));
            }
            let cfg = CGConfig {
                loss,
                regularizer,
                c: a.c.unwrap_or(1.0),
                c_prime: a.c_prime.unwrap_or(1.0),
                bits: a.bits,
                ..Default::default()
            };
            cfg.validate().map_err(|e| usage(e.to_string()))?;
            Ok(Plan::Cg(cfg))
        }
        MethodArg::Structhash => {
            cg_only(a.reg.is_some(), "--reg")?;
            cg_only(a.c_prime.is_some(), "--c-prime")?;
            let base = StructConfig::default();
            let loss = match a.loss.unwrap_or(LossArg::Ndcg) {
                LossArg::Auc => RankScoreKind::Auc,
                LossArg::Ndcg => RankScoreKind::Ndcg {
                    k: a.ndcg_k.unwrap_or(10),
                },
                LossArg::Sndcg => RankScoreKind::Sndcg,
                other => return Err(usage(format!("--loss {other:?} is a cghash loss"))),
            };
            if a.ndcg_k.is_some() && !matches!(loss, RankScoreKind::Ndcg { .. }) {
                return Err(usage("--ndcg-k only applies with --loss ndcg"));
            }
            let cfg = StructConfig {
                loss,
                c: a.c.unwrap_or(base.c),
                bits: a.bits,
                eps_cp: a.eps_cp.unwrap_or(base.eps_cp),
                mode: match a.mode.unwrap_or(ModeArg::Full) {
                    ModeArg::Full => TrainMode::Full,
                    ModeArg::Stagewise => TrainMode::Stagewise,
                },
                max_cp_iters: a.max_cp_iters.unwrap_or(base.max_cp_iters),
                subproblem: base.subproblem,
            };
            cfg.validate().map_err(|e| usage(e.to_string()))?;
            Ok(Plan::Struct(cfg))
        }
        MethodArg::Lsh => {
            for (set, flag) in [
                (a.loss.is_some(), "--loss"),
                (a.reg.is_some(), "--reg"),
                (a.c.is_some(), "--c"),
                (a.c_prime.is_some(), "--c-prime"),
                (a.eps_cp.is_some(), "--eps-cp"),
                (a.mode.is_some(), "--mode"),
                (a.max_cp_iters.is_some(), "--max-cp-iters"),
                (a.ndcg_k.is_some(), "--ndcg-k"),
            ] {
                if set {
                    return Err(usage(format!("{flag} does not apply to --method lsh")));
                }
            }
            Ok(Plan::Lsh)
        }
    }
}

struct StatRow {
    bit: usize,
    objective: f64,
    cp_iterations: Option<usize>,
    wall_ms: f64,
}

fn write_stats(path: &Path, rows: &[StatRow]) -> Result<(), CliError> {
    let mut out = create(path)?;
    writeln!(out, "bit,objective,cp_iterations,wall_ms")?;
    for r in rows {
        let iters = r.cp_iterations.map(|i| i.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{:.3}",
            r.bit + 1,
            r.objective,
            iters,
            r.wall_ms
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn cmd_train(a: &TrainArgs) -> Result<(), CliError> {
    let plan = plan(a)?;
    a.data_format.format()?;
    if a.method != MethodArg::Lsh && (a.k_rel == 0 || a.k_irr == 0) {
        return Err(usage("--k-rel and --k-irr must be at least 1"));
    }
    if a.neighbors == NeighborsArg::L2Percentile && !(a.percentile > 0.0 && a.percentile < 1.0) {
        return Err(usage("--percentile must lie in (0, 1)"));
    }
    let ds = a.data_format.load(&a.data)?;
    let nb_cfg = NeighborhoodConfig {
        mode: a.neighbors.into(),
        k_rel: a.k_rel,
        k_irr: a.k_irr,
        percentile: a.percentile,
    };
    let (model, stats) = match plan {
        Plan::Lsh => (lsh_baseline(ds.dim(), a.bits, a.seed)?, Vec::new()),
        Plan::Cg(cfg) => {
            let nbhds = build_neighborhoods(&ds, &nb_cfg, a.seed)?;
            let ts = generate_triplets(&nbhds);
            info!("{} neighborhoods, {} triplets", nbhds.len(), ts.len());
            let (model, trace) = train_cghash(&ds, &ts, &cfg, a.seed)?;
            let rows = trace
                .bits
                .iter()
                .map(|b| StatRow {
                    bit: b.bit,
                    objective: b.objective,
                    cp_iterations: None,
                    wall_ms: b.wall_ms,
                })
                .collect();
            (model, rows)
        }
        Plan::Struct(cfg) => {
            let nbhds = build_neighborhoods(&ds, &nb_cfg, a.seed)?;
            info!("{} neighborhoods", nbhds.len());
            let (model, trace) = train_structhash(&ds, &nbhds, &cfg, a.seed)?;
            let rows = trace
                .bits
                .iter()
                .map(|b| StatRow {
                    bit: b.bit,
                    objective: b.objective,
                    cp_iterations: Some(b.cp_iterations),
                    wall_ms: b.wall_ms,
                })
                .collect();
            (model, rows)
        }
    };
    let mut out = create(&a.out)?;
    model_io::write_model(&model, &mut out)?;
    out.flush()?;
    if a.method != MethodArg::Lsh {
        let stats_path = a.stats.clone().unwrap_or_else(|| {
            let mut p = a.out.clone().into_os_string();
            p.push(".stats.csv");
            p.into()
        });
        write_stats(&stats_path, &stats)?;
    }
    Ok(())
}

pub fn cmd_encode(a: &EncodeArgs) -> Result<(), CliError> {
    a.data_format.format()?;
    let model = open_model(&a.model)?;
    let ds = a.data_format.load(&a.data)?;
    let codes = model.encode_dataset(&ds)?;
    let mut out = output(a.out.as_deref())?;
    for (i, c) in codes.iter().enumerate() {
        let mut line = i.to_string();
        for b in c.bits() {
            line.push(' ');
            line.push(if b { '1' } else { '0' });
        }
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn cmd_search(a: &SearchArgs) -> Result<(), CliError> {
    a.data_format.format()?;
    if a.top_k == 0 {
        return Err(usage("--top-k must be at least 1"));
    }
    let model = open_model(&a.model)?;
    let db = a.data_format.load(&a.db)?;
    let queries = match &a.queries {
        Some(p) => a.data_format.load(p)?,
        None => db.clone(),
    };
    if a.query_row >= queries.len() {
        return Err(CliError::Runtime(Error::Config(format!(
            "query row {} out of range for {} rows",
            a.query_row,
            queries.len()
        ))));
    }
    let q = model.encode(queries.row(a.query_row))?;
    let codes = model.encode_dataset(&db)?;
    let order = rank_codes(&model.weights, &q, &codes)?;
    let mut out = BufWriter::new(io::stdout().lock());
    writeln!(out, "rank,id,distance")?;
    for (rank, &id) in order.iter().take(a.top_k).enumerate() {
        writeln!(out, "{},{id},{}", rank + 1, model.distance(&q, &codes[id])?)?;
    }
    out.flush()?;
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs) -> Result<(), CliError> {
    a.data_format.format()?;
    if a.ks.is_empty() || a.ks.contains(&0) {
        return Err(usage("--ks must list positive cutoffs"));
    }
    if a.neighbors == NeighborsArg::L2Percentile && !(a.percentile > 0.0 && a.percentile < 1.0) {
        return Err(usage("--percentile must lie in (0, 1)"));
    }
    let model = open_model(&a.model)?;
    let queries = a.data_format.load(&a.queries)?;
    let db = a.data_format.load(&a.db)?;
    let gt = cross_ground_truth(&queries, &db, a.neighbors.into(), a.percentile)?;
    let report = evaluate(&model, &queries, &db, &gt, &a.ks)?;
    let mut out = output(a.out.as_deref())?;
    report.write_csv(&mut out)?;
    out.flush()?;
    if let Some(p) = &a.pr_out {
        let mut pr = create(p)?;
        report.write_pr_csv(&mut pr)?;
        pr.flush()?;
    }
    Ok(())
}
