//! Benchmark harness behind the `ivrq` binary.
//!
//! ```text
//! ivrq gt     --base base.fvecs --query query.fvecs --k 10 --out-prefix gt
//! ivrq build  --base base.fvecs --out index.ivrq --bits 8
//! ivrq search --index index.ivrq --query query.fvecs --k 10 --nprobe 8,32 --mode lut --out res.ivecs
//! ivrq eval   --results res_np8.ivecs --results res_np32.ivecs --gt gt.ivecs --k 10 --csv runs.csv
//! ```
//!
//! `search` writes one ivecs file per n_probe value plus a `.meta.json`
//! sidecar that `eval` reads for the CSV columns. Result rows shorter than K
//! are padded with `-1`.

mod vecs;

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

pub use vecs::{parse_fvecs, parse_ivecs, read_fvecs, read_ivecs, write_fvecs, write_ivecs, IdMatrix};

use crate::error::{Error, Result};
use crate::index::{BuildParams, IvfRabitqIndex};
use crate::linalg::{exact_knn, Neighbors, VectorMatrix};
use crate::search::{search_batch, IpMode, SearchParams};

/// Queries per search call.
pub const DEFAULT_BATCH: usize = 10_000;

/// CSV header written by `eval`.
pub const CSV_HEADER: &str = "sweep_id,n_probe,bits,ip_mode,recall,queries_per_second,index_bytes";

#[derive(Debug, Parser)]
#[command(name = "ivrq", version, about = "IVF-RaBitQ index builder and benchmark")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build an index from an fvecs file.
    Build(BuildArgs),
    /// Exact nearest neighbors by brute force.
    Gt(GtArgs),
    /// Search an index for a sweep of n_probe values.
    Search(SearchArgs),
    /// Recall of search results against ground truth, appended as CSV.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long)]
    pub base: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Number of clusters (default ceil(sqrt(N))).
    #[arg(long)]
    pub nk: Option<usize>,
    #[arg(long, default_value_t = 8)]
    pub bits: u8,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub iters: usize,
    #[arg(long, default_value_t = 0.1)]
    pub train_frac: f64,
    /// Error-bound multiplier for the 1-bit lower bound.
    #[arg(long, default_value_t = 1.9)]
    pub c_eps: f32,
}

#[derive(Debug, Args)]
pub struct GtArgs {
    #[arg(long)]
    pub base: PathBuf,
    #[arg(long)]
    pub query: PathBuf,
    #[arg(long)]
    pub k: usize,
    /// Writes `<prefix>.ivecs` (ids) and `<prefix>.fvecs` (squared distances).
    #[arg(long)]
    pub out_prefix: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Lut,
    Bitwise,
}

impl From<ModeArg> for IpMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Lut => IpMode::Lut,
            ModeArg::Bitwise => IpMode::Bitwise,
        }
    }
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub query: PathBuf,
    #[arg(long)]
    pub k: usize,
    /// Comma-separated n_probe values.
    #[arg(long, value_delimiter = ',', required = true)]
    pub nprobe: Vec<usize>,
    #[arg(long, value_enum, default_value_t = ModeArg::Lut)]
    pub mode: ModeArg,
    /// Query bits in bitwise mode.
    #[arg(long, default_value_t = 4)]
    pub bq: u8,
    #[arg(long)]
    pub no_refine: bool,
    #[arg(long, default_value_t = DEFAULT_BATCH)]
    pub batch: usize,
    /// Result file; with several n_probe values `_np<n>` is added to the stem.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, required = true)]
    pub results: Vec<PathBuf>,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub csv: PathBuf,
}

/// Sidecar written next to each result file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub sweep_id: usize,
    pub n_probe: usize,
    pub bits: u8,
    pub ip_mode: ModeArg,
    pub k: usize,
    pub queries_per_second: f64,
    pub index_bytes: u64,
}

pub fn meta_path(results: &Path) -> PathBuf {
    results.with_extension("meta.json")
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Build(a) => cmd_build(&a),
        Command::Gt(a) => cmd_ground_truth(&a.base, &a.query, a.k, &a.out_prefix),
        Command::Search(a) => cmd_search(&a).map(|_| ()),
        Command::Eval(a) => cmd_eval(&a).map(|_| ()),
    }
}

pub fn cmd_build(a: &BuildArgs) -> Result<()> {
    let base = read_fvecs(&a.base)?;
    let mut params = BuildParams {
        n_clusters: a.nk,
        kmeans_iters: a.iters,
        train_fraction: a.train_frac,
        seed: a.seed,
        ..BuildParams::default()
    };
    params.quantization.bits = a.bits;
    params.quantization.c_eps = a.c_eps;
    let start = Instant::now();
    let (idx, report) = IvfRabitqIndex::build(&base, &params)?;
    let secs = start.elapsed().as_secs_f64();
    idx.save(&a.out)?;
    eprintln!(
        "built {} vectors, {} clusters, B = {} in {secs:.2}s ({} bytes)",
        idx.len(),
        idx.n_clusters(),
        idx.bits(),
        idx.serialized_size()
    );
    if report.low_quality > 0 || report.degenerate > 0 || report.empty_clusters > 0 {
        eprintln!(
            "warning: {} low-quality codes, {} vectors equal to their centroid, {} empty clusters",
            report.low_quality, report.degenerate, report.empty_clusters
        );
    }
    Ok(())
}

fn neighbors_to_ids(res: &[Neighbors], k: usize) -> IdMatrix {
    let mut values = Vec::with_capacity(res.len() * k);
    for n in res {
        values.extend(n.ids.iter().take(k).map(|&id| id as i32));
        values.extend(std::iter::repeat_n(-1, k - n.len().min(k)));
    }
    IdMatrix {
        rows: res.len(),
        dims: k,
        values,
    }
}

pub fn cmd_ground_truth(base: &Path, query: &Path, k: usize, out_prefix: &Path) -> Result<()> {
    let base = read_fvecs(base)?;
    let queries = read_fvecs(query)?;
    let res = exact_knn(&base, &queries, k)?;
    let k = k.min(base.rows());
    write_ivecs(with_suffix(out_prefix, ".ivecs"), &neighbors_to_ids(&res, k))?;
    let dists: Vec<f32> = res.iter().flat_map(|n| n.dists.iter().copied()).collect();
    write_fvecs(with_suffix(out_prefix, ".fvecs"), &VectorMatrix::new(res.len(), k, dists)?)?;
    Ok(())
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn sweep_path(out: &Path, n_probe: usize, many: bool) -> PathBuf {
    if !many {
        return out.to_path_buf();
    }
    let stem = out.file_stem().unwrap_or_default().to_string_lossy();
    let name = match out.extension() {
        Some(ext) => format!("{stem}_np{n_probe}.{}", ext.to_string_lossy()),
        None => format!("{stem}_np{n_probe}"),
    };
    out.with_file_name(name)
}

/// Runs the sweep and returns the written result paths.
pub fn cmd_search(a: &SearchArgs) -> Result<Vec<PathBuf>> {
    if a.batch == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    let idx = IvfRabitqIndex::load(&a.index)?;
    let queries = read_fvecs(&a.query)?;
    let index_bytes = fs::metadata(&a.index)?.len();
    let mut written = Vec::new();
    for (sweep_id, &n_probe) in a.nprobe.iter().enumerate() {
        let sp = SearchParams {
            query_bits: a.bq,
            refine: !a.no_refine,
            ..SearchParams::new(a.k, n_probe).with_mode(a.mode.into())
        };
        sp.validate(idx.n_clusters())?;
        let mut res = Vec::with_capacity(queries.rows());
        let mut secs = 0.0;
        for start in (0..queries.rows()).step_by(a.batch) {
            let rows: Vec<usize> = (start..(start + a.batch).min(queries.rows())).collect();
            let batch = queries.select_rows(&rows);
            let t = Instant::now();
            res.extend(search_batch(&batch, &idx, &sp)?);
            secs += t.elapsed().as_secs_f64();
        }
        let qps = queries.rows() as f64 / secs.max(1e-9);
        let path = sweep_path(&a.out, n_probe, a.nprobe.len() > 1);
        write_ivecs(&path, &neighbors_to_ids(&res, a.k))?;
        let meta = RunMeta {
            sweep_id,
            n_probe,
            bits: idx.bits(),
            ip_mode: a.mode,
            k: a.k,
            queries_per_second: qps,
            index_bytes,
        };
        let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::invalid(e.to_string()))?;
        fs::write(meta_path(&path), json)?;
        eprintln!("n_probe {n_probe}: {qps:.0} queries/s -> {}", path.display());
        written.push(path);
    }
    Ok(written)
}

/// Mean over queries of `|result_i ∩ truth_i| / k`, using the first `k`
/// entries of each row. Negative ids never match.
pub fn recall_at_k(results: &IdMatrix, truth: &IdMatrix, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if results.rows != truth.rows {
        return Err(Error::invalid(format!(
            "{} result rows but {} ground-truth rows",
            results.rows, truth.rows
        )));
    }
    if results.dims < k || truth.dims < k {
        return Err(Error::invalid(format!(
            "k = {k} exceeds result width {} or ground-truth width {}",
            results.dims, truth.dims
        )));
    }
    if results.rows == 0 {
        return Err(Error::invalid("no queries to evaluate"));
    }
    let mut total = 0usize;
    for i in 0..results.rows {
        let t = &truth.row(i)[..k];
        total += results.row(i)[..k]
            .iter()
            .filter(|&&id| id >= 0 && t.contains(&id))
            .count();
    }
    Ok(total as f64 / (k * results.rows) as f64)
}

/// Appends one CSV row per result file and returns the rows.
pub fn cmd_eval(a: &EvalArgs) -> Result<Vec<String>> {
    let truth = read_ivecs(&a.gt)?;
    let mut rows = Vec::new();
    for path in &a.results {
        let meta_file = meta_path(path);
        let meta: RunMeta = serde_json::from_slice(&fs::read(&meta_file).map_err(|e| {
            Error::invalid(format!("cannot read {}: {e}", meta_file.display()))
        })?)
        .map_err(|e| Error::invalid(format!("bad metadata in {}: {e}", meta_file.display())))?;
        let recall = recall_at_k(&read_ivecs(path)?, &truth, a.k)?;
        let mode = match meta.ip_mode {
            ModeArg::Lut => "lut",
            ModeArg::Bitwise => "bitwise",
        };
        rows.push(format!(
            "{},{},{},{mode},{recall:.6},{:.1},{}",
            meta.sweep_id, meta.n_probe, meta.bits, meta.queries_per_second, meta.index_bytes
        ));
    }
    let fresh = fs::metadata(&a.csv).map(|m| m.len() == 0).unwrap_or(true);
    let mut f = OpenOptions::new().create(true).append(true).open(&a.csv)?;
    if fresh {
        writeln!(f, "{CSV_HEADER}")?;
    }
    for r in &rows {
        writeln!(f, "{r}")?;
        println!("{r}");
    }
    Ok(rows)
}
