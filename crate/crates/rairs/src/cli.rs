//! Command-line front end: build, search, bench, gt, stats, verify-air,
//! insert, delete, info.
//!
//! Every subcommand accepts `--config FILE`, a `key=value` file (one pair
//! per line, `#` comments) whose keys are the long flag names; explicit
//! flags override config values, and unknown keys are rejected by the
//! regular flag parser. Dataset arguments are either a path with an
//! `fvecs`/`bvecs`/`ivecs` extension or an inline generator spec
//! `synth:n=10000,d=16[,clusters=16][,seed=42][,spread=0.1][,skip=0]`.
//!
//! Exit status: 0 on success, 2 for unusable flags (with usage text), 1
//! for any failure after that with a one-line diagnostic on stderr.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::assign::{Aggregator, StrategyConfig};
use crate::bench::{sweep, write_cdf_csv, write_report_csv, SweepOptions};
use crate::dataset::{
    generate_synthetic_part, load_ivecs, load_vectors, write_ivecs, FileFormat, VectorSet,
};
use crate::error::{Error, Result};
use crate::exact::{exact_knn, GroundTruth};
use crate::index::{BuildParams, RairsIndex, SearchParams};
use crate::metric::Metric;
use crate::verify::{assignment_overlap, make_candidates, verify_air};

#[derive(Parser)]
#[command(
    name = "rairs",
    version,
    about = "IVF-PQ search with redundancy-aware list assignment",
    args_override_self = true
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build an index from a dataset and save it.
    Build(BuildCmd),
    /// Query a saved index.
    Search(SearchCmd),
    /// Recall/DCO/throughput sweep over nprobe values, written as CSV.
    Bench(BenchCmd),
    /// Exact ground truth for a query set, written as ivecs.
    Gt(GtCmd),
    /// Cell-structure statistics of a saved index.
    Stats(StatsCmd),
    /// Monte-Carlo check of the AIR loss closed form.
    #[command(name = "verify-air")]
    VerifyAir(VerifyAirCmd),
    /// Add vectors to a saved index.
    Insert(InsertCmd),
    /// Remove vectors from a saved index.
    Delete(DeleteCmd),
    /// Print a saved index's effective configuration.
    Info(InfoCmd),
}

#[derive(Args)]
struct Common {
    /// key=value file merged under the flags; explicit flags win.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads (0 = all logical cores).
    #[arg(long, default_value_t = 0, value_name = "N")]
    threads: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MetricArg {
    L2,
    Ip,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Metric {
        match m {
            MetricArg::L2 => Metric::L2,
            MetricArg::Ip => Metric::Ip,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AggrArg {
    Max,
    Min,
    Avg,
}

impl From<AggrArg> for Aggregator {
    fn from(a: AggrArg) -> Aggregator {
        match a {
            AggrArg::Max => Aggregator::Max,
            AggrArg::Min => Aggregator::Min,
            AggrArg::Avg => Aggregator::Avg,
        }
    }
}

#[derive(Args)]
struct StrategyFlags {
    /// Assignment strategy: single, naive, soarl2, soar-ip, air (non-strict),
    /// air-strict, or air-m (multi; needs --m). rair/srair/soar/naive-ra are
    /// accepted spellings of the same strategies.
    #[arg(long, default_value = "air-strict")]
    strategy: String,
    /// Correlation weight for SOAR and AIR losses.
    #[arg(long)]
    lambda: Option<f32>,
    /// Candidate lists examined for the secondary assignment.
    #[arg(long)]
    n_cands: Option<usize>,
    /// Lists per vector for air-m.
    #[arg(long)]
    m: Option<usize>,
    /// Correlation aggregator for air-m with m > 2.
    #[arg(long, value_enum, default_value_t = AggrArg::Max)]
    aggr: AggrArg,
}

impl StrategyFlags {
    fn resolve(&self, metric: Metric) -> Result<StrategyConfig> {
        let lambda = self.lambda.unwrap_or(crate::assign::DEFAULT_LAMBDA);
        let mut cfg = match self.strategy.as_str() {
            "single" => StrategyConfig::single(),
            "naive" | "naive-ra" => StrategyConfig::naive_ra(),
            "soar" | "soarl2" | "soar-ip" => {
                let want = match self.strategy.as_str() {
                    "soarl2" => Some(Metric::L2),
                    "soar-ip" => Some(Metric::Ip),
                    _ => None,
                };
                if let Some(w) = want {
                    if w != metric {
                        return Err(Error::InvalidConfig(format!(
                            "strategy {} expects --metric {}, got {}",
                            self.strategy,
                            metric_name(w),
                            metric_name(metric)
                        )));
                    }
                }
                StrategyConfig::soar(lambda)
            }
            "air" | "rair" => StrategyConfig::air(lambda, false),
            "air-strict" | "srair" => StrategyConfig::air(lambda, true),
            other => {
                let m = if other == "air-m" {
                    self.m.ok_or_else(|| {
                        Error::InvalidConfig("strategy air-m needs --m".into())
                    })?
                } else if let Some(suffix) = other.strip_prefix("air-m") {
                    suffix.parse().map_err(|_| unknown_strategy(other))?
                } else {
                    return Err(unknown_strategy(other));
                };
                StrategyConfig::air_multi(lambda, m, self.aggr.into())
            }
        };
        if let Some(nc) = self.n_cands {
            cfg.n_cands = nc;
        }
        if let Some(m) = self.m {
            if cfg.m >= 2 {
                cfg.m = m;
            } else if m != cfg.m {
                return Err(Error::InvalidConfig(format!(
                    "--m {m} conflicts with strategy {}",
                    self.strategy
                )));
            }
        }
        Ok(cfg)
    }
}

fn unknown_strategy(s: &str) -> Error {
    Error::InvalidConfig(format!(
        "unknown strategy {s:?}; expected single, naive, soarl2, soar-ip, air, \
         air-strict, or air-m"
    ))
}

fn metric_name(m: Metric) -> &'static str {
    match m {
        Metric::L2 => "l2",
        Metric::Ip => "ip",
    }
}

#[derive(Args)]
struct BuildCmd {
    /// Base dataset: a vector file or a synth: spec.
    #[arg(long, value_name = "DATA")]
    base: String,
    /// Where to write the index.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = MetricArg::L2)]
    metric: MetricArg,
    #[command(flatten)]
    strategy: StrategyFlags,
    /// Inverted lists (default: next power of two above sqrt(n)).
    #[arg(long)]
    nlist: Option<usize>,
    /// PQ subspaces (default: dim / 2).
    #[arg(long)]
    m_pq: Option<usize>,
    /// Bits per PQ code.
    #[arg(long, default_value_t = 4)]
    nbits: u32,
    /// Packed-block capacity.
    #[arg(long, default_value_t = crate::pq::DEFAULT_BLK_SZ)]
    blk_sz: usize,
    /// k-means refinement iterations.
    #[arg(long, default_value_t = 25)]
    kmeans_iters: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SearchCmd {
    #[arg(long, value_name = "FILE")]
    index: PathBuf,
    /// Query dataset: a vector file or a synth: spec.
    #[arg(long, value_name = "DATA")]
    queries: String,
    /// Neighbors per query.
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 16)]
    nprobe: usize,
    /// Refinement depth multiplier (default: 10 for K < 100, else 4).
    #[arg(long)]
    k_factor: Option<usize>,
    /// Write result IDs as ivecs instead of printing them.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct BenchCmd {
    #[arg(long, value_name = "FILE")]
    index: PathBuf,
    /// Query dataset: a vector file or a synth: spec.
    #[arg(long, value_name = "DATA")]
    queries: String,
    /// Precomputed ground truth (ivecs). Either this or --base.
    #[arg(long, value_name = "FILE", conflicts_with = "base")]
    gt: Option<PathBuf>,
    /// Base dataset to compute ground truth from. Either this or --gt.
    #[arg(long, value_name = "DATA")]
    base: Option<String>,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Comma-separated nprobe values to sweep.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32")]
    nprobe: Vec<usize>,
    #[arg(long)]
    k_factor: Option<usize>,
    /// Measure per-query latency percentiles in a second, unbatched pass.
    #[arg(long, default_value_t = false)]
    one_at_a_time: bool,
    /// Strategy column label (default: the index's strategy name).
    #[arg(long)]
    label: Option<String>,
    /// Sweep CSV destination (stdout if omitted).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Directory for per-query CDF dumps, one file per sweep point.
    #[arg(long, value_name = "DIR")]
    cdf: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct GtCmd {
    /// Base dataset: a vector file or a synth: spec.
    #[arg(long, value_name = "DATA")]
    base: String,
    /// Query dataset: a vector file or a synth: spec.
    #[arg(long, value_name = "DATA")]
    queries: String,
    #[arg(long, default_value_t = 100)]
    k: usize,
    #[arg(long, value_enum, default_value_t = MetricArg::L2)]
    metric: MetricArg,
    /// Output ivecs path.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct StatsCmd {
    #[arg(long, value_name = "FILE")]
    index: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct VerifyAirCmd {
    /// Space dimension.
    #[arg(long, default_value_t = 8)]
    d: usize,
    /// Radius of the query ball around each vector.
    #[arg(long, default_value_t = 0.5)]
    l_m: f64,
    /// Candidate centroids scored per run.
    #[arg(long, default_value_t = 50)]
    candidates: usize,
    /// Monte-Carlo samples.
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Also report secondary-assignment overlap between two strategies on
    /// a synthetic set, e.g. --overlap air-strict,soarl2.
    #[arg(long, value_name = "A,B")]
    overlap: Option<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct InsertCmd {
    #[arg(long, value_name = "FILE")]
    index: PathBuf,
    /// Vectors to add: a vector file or a synth: spec.
    #[arg(long, value_name = "DATA")]
    data: String,
    /// Added to every incoming vector ID (file loads start at 0).
    #[arg(long, default_value_t = 0)]
    id_offset: u64,
    /// Save here instead of overwriting --index.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct DeleteCmd {
    #[arg(long, value_name = "FILE")]
    index: PathBuf,
    /// Comma-separated vector IDs to remove.
    #[arg(long, value_delimiter = ',', required = true)]
    ids: Vec<u64>,
    /// Save here instead of overwriting --index.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct InfoCmd {
    #[arg(long, value_name = "FILE")]
    index: PathBuf,
    #[command(flatten)]
    common: Common,
}

/// Entry point: parses `argv` (after config-file expansion), runs the
/// subcommand, and maps failures to the documented exit codes.
pub fn run(argv: Vec<OsString>) -> ExitCode {
    let argv = match expand_config(argv) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests land here too; clap marks real
            // parse errors by routing them to stderr.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

/// Splices `key=value` pairs from a `--config` file into the argument list
/// as long flags, right after the subcommand so explicit flags override
/// them. Unknown keys then fail ordinary flag parsing.
fn expand_config(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut path: Option<PathBuf> = None;
    for (i, arg) in argv.iter().enumerate() {
        let Some(s) = arg.to_str() else { continue };
        if s == "--config" {
            path = argv.get(i + 1).map(PathBuf::from);
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        }
    }
    let Some(path) = path else { return Ok(argv) };
    let text = std::fs::read_to_string(&path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    let mut tokens: Vec<OsString> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::InvalidConfig(format!(
                "{}:{}: expected key=value, got {line:?}",
                path.display(),
                ln + 1
            ))
        })?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        let value = value.trim();
        if key == "config" {
            return Err(Error::InvalidConfig(format!(
                "{}:{}: config files cannot nest",
                path.display(),
                ln + 1
            )));
        }
        if key == "one-at-a-time" {
            match value {
                "true" | "1" | "yes" => tokens.push(format!("--{key}").into()),
                "false" | "0" | "no" => {}
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "{}:{}: {key} must be a boolean, got {other:?}",
                        path.display(),
                        ln + 1
                    )))
                }
            }
        } else {
            tokens.push(format!("--{key}").into());
            tokens.push(value.into());
        }
    }
    // Insert after the subcommand (the first token that is not a flag).
    let at = argv
        .iter()
        .enumerate()
        .skip(1)
        .find(|(_, a)| !a.to_string_lossy().starts_with('-'))
        .map(|(i, _)| i + 1)
        .unwrap_or(argv.len());
    let mut out = argv;
    out.splice(at..at, tokens);
    Ok(out)
}

fn init_threads(common: &Common) -> Result<()> {
    if common.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(common.threads)
            .build_global()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    }
    Ok(())
}

/// Loads a dataset argument: `synth:` spec or vector file path.
fn load_spec(spec: &str) -> Result<VectorSet> {
    if let Some(body) = spec.strip_prefix("synth:") {
        return parse_synth(body);
    }
    let path = Path::new(spec);
    let format = FileFormat::from_path(path).ok_or_else(|| {
        Error::InvalidConfig(format!(
            "cannot infer format of {spec:?}; use .fvecs/.bvecs/.ivecs or a synth: spec"
        ))
    })?;
    load_vectors(path, format)
}

fn parse_synth(body: &str) -> Result<VectorSet> {
    let mut n = None;
    let mut d = None;
    let mut clusters = 16usize;
    let mut seed = 42u64;
    let mut spread = 0.1f32;
    let mut skip = 0usize;
    for part in body.split(',') {
        let (key, value) = part.split_once('=').ok_or_else(|| {
            Error::InvalidConfig(format!("synth spec: expected key=value, got {part:?}"))
        })?;
        fn bad(key: &str, value: &str, e: impl std::fmt::Display) -> Error {
            Error::InvalidConfig(format!("synth spec: {key}={value}: {e}"))
        }
        match key {
            "n" => n = Some(value.parse().map_err(|e| bad(key, value, e))?),
            "d" => d = Some(value.parse().map_err(|e| bad(key, value, e))?),
            "clusters" => clusters = value.parse().map_err(|e| bad(key, value, e))?,
            "seed" => seed = value.parse().map_err(|e| bad(key, value, e))?,
            "spread" => spread = value.parse().map_err(|e| bad(key, value, e))?,
            "skip" => skip = value.parse().map_err(|e| bad(key, value, e))?,
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "synth spec: unknown key {key:?}"
                )))
            }
        }
    }
    let n = n.ok_or_else(|| Error::InvalidConfig("synth spec: missing n=".into()))?;
    let d = d.ok_or_else(|| Error::InvalidConfig("synth spec: missing d=".into()))?;
    generate_synthetic_part(n, d, clusters, seed, spread, skip)
}

fn dispatch(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Build(c) => {
            init_threads(&c.common)?;
            let metric = c.metric.into();
            let params = BuildParams {
                metric,
                strategy: c.strategy.resolve(metric)?,
                nlist: c.nlist,
                m_pq: c.m_pq,
                nbits: c.nbits,
                blk_sz: c.blk_sz,
                kmeans_iters: c.kmeans_iters,
                seed: c.seed,
            };
            let data = load_spec(&c.base)?;
            let t = std::time::Instant::now();
            let index = RairsIndex::build(&data, &params)?;
            index.save(&c.out)?;
            println!(
                "built {} vectors into {} lists ({}) in {:.2}s -> {}",
                index.ntotal(),
                index.nlist(),
                index.strategy().name(),
                t.elapsed().as_secs_f64(),
                c.out.display()
            );
            Ok(())
        }
        Cmd::Search(c) => {
            init_threads(&c.common)?;
            let index = RairsIndex::load(&c.index)?;
            let queries = load_spec(&c.queries)?;
            let params = match c.k_factor {
                Some(kf) => SearchParams {
                    k: c.k,
                    nprobe: c.nprobe,
                    k_factor: kf,
                },
                None => SearchParams::new(c.k, c.nprobe),
            };
            let t = std::time::Instant::now();
            let out = index.search(&queries, &params)?;
            let wall = t.elapsed().as_secs_f64();
            if let Some(path) = &c.out {
                let rows: Result<Vec<Vec<i32>>> = out
                    .ids
                    .iter()
                    .map(|ids| {
                        ids.iter()
                            .map(|&id| {
                                i32::try_from(id).map_err(|_| {
                                    Error::InvalidConfig(format!(
                                        "id {id} does not fit the ivecs output format"
                                    ))
                                })
                            })
                            .collect()
                    })
                    .collect();
                write_ivecs(path, &rows?)?;
                println!("wrote {} result rows -> {}", out.ids.len(), path.display());
            } else {
                for (qi, (ids, dists)) in out.ids.iter().zip(&out.dists).enumerate() {
                    let mut line = format!("query {qi}:");
                    for (id, dist) in ids.iter().zip(dists) {
                        let _ = write!(line, " {id}({dist:.4})");
                    }
                    println!("{line}");
                }
            }
            let n = queries.len().max(1) as f64;
            let scan: u64 = out.stats.iter().map(|s| s.scan_dco).sum();
            let refine: u64 = out.stats.iter().map(|s| s.refine_dco).sum();
            println!(
                "{} queries in {:.1}ms; mean scan_dco {:.1}, mean refine_dco {:.1}",
                queries.len(),
                wall * 1e3,
                scan as f64 / n,
                refine as f64 / n
            );
            Ok(())
        }
        Cmd::Bench(c) => {
            init_threads(&c.common)?;
            let index = RairsIndex::load(&c.index)?;
            let queries = load_spec(&c.queries)?;
            let gt = match (&c.gt, &c.base) {
                (Some(path), None) => {
                    GroundTruth::from_ivecs(load_ivecs(path)?, index.metric())?
                }
                (None, Some(base)) => {
                    let base = load_spec(base)?;
                    exact_knn(&base, &queries, c.k, index.metric())?
                }
                _ => {
                    return Err(Error::InvalidConfig(
                        "bench needs exactly one of --gt or --base".into(),
                    ))
                }
            };
            let opts = SweepOptions {
                k_factor: c.k_factor,
                one_at_a_time: c.one_at_a_time,
                label: c.label.clone(),
            };
            let report = sweep(&index, &queries, &gt, c.k, &c.nprobe, &opts)?;
            if let Some(dir) = &c.cdf {
                std::fs::create_dir_all(dir)?;
                for point in &report.points {
                    let name = format!("cdf_{}_nprobe{}.csv", point.strategy, point.nprobe);
                    write_cdf_csv(&dir.join(name), point)?;
                }
            }
            match &c.out {
                Some(path) => {
                    write_report_csv(path, &report)?;
                    println!("wrote {} sweep rows -> {}", report.points.len(), path.display());
                }
                None => {
                    println!(
                        "strategy,nprobe,K,recall,scan_dco,refine_dco,qps,lat_mean_us,lat_p95_us,lat_p99_us"
                    );
                    for p in &report.points {
                        println!(
                            "{},{},{},{:.6},{:.3},{:.3},{:.1},{:.1},{:.1},{:.1}",
                            p.strategy,
                            p.nprobe,
                            p.k,
                            p.recall,
                            p.scan_dco,
                            p.refine_dco,
                            p.qps,
                            p.lat_mean_us,
                            p.lat_p95_us,
                            p.lat_p99_us
                        );
                    }
                }
            }
            Ok(())
        }
        Cmd::Gt(c) => {
            init_threads(&c.common)?;
            let base = load_spec(&c.base)?;
            let queries = load_spec(&c.queries)?;
            let gt = exact_knn(&base, &queries, c.k, c.metric.into())?;
            write_ivecs(&c.out, &gt.to_ivecs()?)?;
            println!(
                "wrote exact top-{} for {} queries -> {}",
                gt.k,
                queries.len(),
                c.out.display()
            );
            Ok(())
        }
        Cmd::Stats(c) => {
            let index = RairsIndex::load(&c.index)?;
            let stats = index.cell_stats()?;
            let occ = index.list_occupancy();
            let (min, max, sum) = occ.iter().fold((u64::MAX, 0u64, 0u64), |(lo, hi, s), &o| {
                (lo.min(o), hi.max(o), s + o)
            });
            println!("vectors:             {}", index.ntotal());
            println!("cells:               {}", stats.ncells());
            println!("stored copies:       {}", stats.stored_copies());
            println!("shared-block copies: {}", stats.shared_block_vectors);
            println!("misc copies:         {}", stats.misc_vector_copies);
            println!(
                "pair-cell vectors:   {:.4}",
                stats.pair_cell_vector_fraction
            );
            println!(
                "large-cell vectors:  {:.4}",
                stats.large_cell_vector_fraction
            );
            println!(
                "list occupancy:      min {} / mean {:.1} / max {}",
                if occ.is_empty() { 0 } else { min },
                sum as f64 / occ.len().max(1) as f64,
                max
            );
            println!("cell-size histogram:");
            for (size, count) in &stats.size_histogram {
                println!("  {size:>6} items x {count}");
            }
            Ok(())
        }
        Cmd::VerifyAir(c) => {
            use rand::{Rng, SeedableRng};
            init_threads(&c.common)?;
            if let Some(pair) = &c.overlap {
                return run_overlap(pair, c.seed);
            }
            if c.d < 2 {
                return Err(Error::InvalidConfig("--d must be at least 2".into()));
            }
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(c.seed);
            let x: Vec<f64> = (0..c.d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut dir: Vec<f64> = (0..c.d)
                .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            let r_norm = rng.random_range(0.1..1.0);
            for v in &mut dir {
                *v *= r_norm / norm;
            }
            let cvec: Vec<f64> = x.iter().zip(&dir).map(|(xi, ri)| xi - ri).collect();
            let cands = make_candidates(&x, &cvec, c.candidates, c.l_m, c.seed ^ 0x5EED)?;
            let res = verify_air(&x, &cvec, &cands, c.l_m, c.samples, c.seed)?;
            println!("d             = {}", res.d);
            println!("l_m           = {}", res.l_m);
            println!("|r|           = {r_norm:.6}");
            println!("lambda_theory = {:.6}", res.lambda_theory);
            println!("samples       = {}", res.samples);
            println!("candidates    = {}", res.pairs);
            println!("correlation   = {:.6}", res.correlation);
            println!("ratio         = {:.6}", res.ratio);
            println!("ratio_theory  = {:.6}", res.ratio_theory);
            println!("ratio_spread  = {:.6}", res.ratio_spread);
            Ok(())
        }
        Cmd::Insert(c) => {
            init_threads(&c.common)?;
            let mut index = RairsIndex::load(&c.index)?;
            let mut data = load_spec(&c.data)?;
            if c.id_offset > 0 {
                let ids = data.ids().iter().map(|&i| i + c.id_offset).collect();
                data = VectorSet::from_rows(data.dim(), data.data().to_vec(), ids)?;
            }
            let before = index.ntotal();
            index.add_vectors(&data)?;
            let out = c.out.as_ref().unwrap_or(&c.index);
            index.save(out)?;
            println!(
                "inserted {} vectors ({} total) -> {}",
                index.ntotal() - before,
                index.ntotal(),
                out.display()
            );
            Ok(())
        }
        Cmd::Delete(c) => {
            let mut index = RairsIndex::load(&c.index)?;
            let report = index.delete_vectors(&c.ids);
            let out = c.out.as_ref().unwrap_or(&c.index);
            index.save(out)?;
            println!(
                "deleted {} vectors, {} missing ({} remain) -> {}",
                report.deleted.len(),
                report.missing.len(),
                index.ntotal(),
                out.display()
            );
            Ok(())
        }
        Cmd::Info(c) => {
            let index = RairsIndex::load(&c.index)?;
            let s = index.strategy();
            println!("vectors  = {}", index.ntotal());
            println!("dim      = {}", index.dim());
            println!("metric   = {}", metric_name(index.metric()));
            println!("nlist    = {}", index.nlist());
            println!("m_pq     = {}", index.codebook().m_pq());
            println!("nbits    = {}", index.codebook().nbits());
            println!("blk_sz   = {}", index.blk_sz());
            println!("strategy = {}", s.name());
            println!("lambda   = {}", s.lambda);
            println!("n_cands  = {}", s.n_cands);
            println!("strict   = {}", s.is_strict);
            println!("m        = {}", s.m);
            println!("aggr     = {:?}", s.aggr);
            Ok(())
        }
    }
}

fn run_overlap(pair: &str, seed: u64) -> Result<()> {
    let (a, b) = pair.split_once(',').ok_or_else(|| {
        Error::InvalidConfig("--overlap expects two strategy names, e.g. air-strict,soarl2".into())
    })?;
    let flags = |name: &str| StrategyFlags {
        strategy: name.trim().to_string(),
        lambda: None,
        n_cands: None,
        m: None,
        aggr: AggrArg::Max,
    };
    let cfg_a = flags(a).resolve(Metric::L2)?;
    let cfg_b = flags(b).resolve(Metric::L2)?;
    let data = crate::dataset::generate_synthetic(20_000, 16, 64, seed, 0.15)?;
    let cq = crate::coarse::train_kmeans(&data, 64, Metric::L2, 15, seed)?;
    let frac = assignment_overlap(&cq, &data, &cfg_a, &cfg_b)?;
    println!("overlap({}, {}) = {:.4}", a.trim(), b.trim(), frac);
    Ok(())
}
