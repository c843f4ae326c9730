//! `hnswmerge`: build HNSW indices, merge them four ways, and benchmark
//! merged-graph search quality against merge cost.
//!
//! Exit codes: 0 on success, 2 for usage problems (bad flags, missing
//! files, malformed config), 1 for runtime failures.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hnsw_merge::eval::{self, GroundTruth, MergeJob, MergeKind, SplitSpec, SweepReport, SweepRow};
use hnsw_merge::io;
use hnsw_merge::vecstore::phases;
use hnsw_merge::{
    build_index, general_merge, sigm_merge, BuildParams, Dataset, DistanceMeter, MergeAlgo,
    MergeParams, Metric, NeighborhoodStrategy, VectorId,
};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "hnswmerge", version, about = "HNSW index merging benchmark tool")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an index over an fvecs file (or a slice of it)
    Build(BuildArgs),
    /// Merge two saved indices and report the merge distance count
    Merge(MergeArgs),
    /// Compute exact nearest neighbors for a query file
    GroundTruth(GroundTruthArgs),
    /// Sweep search recall and cost of a saved index over beam widths
    SearchBench(SearchBenchArgs),
    /// Run the full split/build/merge/sweep protocol from a config file
    BenchAll(BenchAllArgs),
}

#[derive(Args)]
struct BuildArgs {
    /// Base vectors (fvecs)
    #[arg(long)]
    input: PathBuf,
    /// Output index file
    #[arg(long)]
    out: PathBuf,
    #[arg(long = "M", default_value_t = 16)]
    m: usize,
    #[arg(long = "M0", default_value_t = 32)]
    m0: usize,
    #[arg(long, default_value_t = 32)]
    efc: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Index only ids LO..HI of the input (global ids are kept)
    #[arg(long, value_parser = parse_range)]
    range: Option<(usize, usize)>,
    #[arg(long, default_value = "squared-euclidean")]
    metric: Metric,
    #[arg(long, default_value = "rng")]
    strategy: NeighborhoodStrategy,
    /// Store the graph only; the index file then needs the dataset
    /// reloaded separately and cannot be merged or swept directly
    #[arg(long)]
    no_vectors: bool,
}

#[derive(Args)]
struct MergeArgs {
    /// First index file
    #[arg(long)]
    a: PathBuf,
    /// Second index file
    #[arg(long)]
    b: PathBuf,
    #[arg(long)]
    algo: String,
    /// Output index file
    #[arg(long)]
    out: PathBuf,
    /// Target neighborhood size on layers >= 1
    #[arg(long, default_value_t = 16)]
    m: usize,
    /// Target neighborhood size on layer 0
    #[arg(long, default_value_t = 32)]
    m0: usize,
    #[arg(long, default_value_t = 20)]
    search_ef: usize,
    #[arg(long, default_value_t = 20)]
    jump_ef: usize,
    #[arg(long, default_value_t = 32)]
    local_ef: usize,
    #[arg(long, default_value_t = 8)]
    next_step_k: usize,
    #[arg(long, default_value_t = 16)]
    next_step_ef: usize,
    #[arg(long, default_value_t = 16)]
    m_carry: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "rng")]
    strategy: NeighborhoodStrategy,
}

#[derive(Args)]
struct GroundTruthArgs {
    /// Base vectors (fvecs)
    #[arg(long)]
    base: PathBuf,
    /// Query vectors (fvecs)
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Output ground truth (ivecs)
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "squared-euclidean")]
    metric: Metric,
}

#[derive(Args)]
struct SearchBenchArgs {
    /// Index file with embedded vectors
    #[arg(long)]
    index: PathBuf,
    /// Query vectors (fvecs)
    #[arg(long)]
    queries: PathBuf,
    /// Ground truth (ivecs)
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Beam widths, comma separated
    #[arg(long = "L", value_delimiter = ',', default_value = "32,40,50,64,72")]
    beams: Vec<usize>,
    /// Output report (CSV)
    #[arg(long)]
    out: PathBuf,
    /// Algorithm column value; defaults to the index file stem
    #[arg(long)]
    label: Option<String>,
    /// merge_dc column value, for stitching reports together
    #[arg(long, default_value_t = 0)]
    merge_dc: u64,
}

#[derive(Args)]
struct BenchAllArgs {
    /// Run configuration (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Output report (CSV); falls back to `output` from the config
    #[arg(long)]
    out: Option<PathBuf>,
}

enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<hnsw_merge::Error> for CliError {
    fn from(e: hnsw_merge::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Build(args) => cmd_build(args),
        Command::Merge(args) => cmd_merge(args),
        Command::GroundTruth(args) => cmd_ground_truth(args),
        Command::SearchBench(args) => cmd_search_bench(args),
        Command::BenchAll(args) => cmd_bench_all(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("range {s:?} must look like LO:HI"))?;
    let lo: usize = lo.parse().map_err(|_| format!("bad range start {lo:?}"))?;
    let hi: usize = hi.parse().map_err(|_| format!("bad range end {hi:?}"))?;
    if lo >= hi {
        return Err(format!("range start {lo} must be below end {hi}"));
    }
    Ok((lo, hi))
}

fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "{what} {} does not exist",
            path.display()
        )))
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn cmd_build(args: BuildArgs) -> Result<(), CliError> {
    require_file(&args.input, "input file")?;
    let dataset = io::read_fvecs(&args.input)?;
    if dataset.is_empty() {
        return Err(usage(format!("{} holds no vectors", args.input.display())));
    }
    let (lo, hi) = args.range.unwrap_or((0, dataset.len()));
    if hi > dataset.len() {
        return Err(usage(format!(
            "range end {hi} exceeds dataset size {}",
            dataset.len()
        )));
    }
    let params = BuildParams::new(args.m, args.m0, args.efc, args.seed)
        .map_err(|e| usage(e.to_string()))?;
    let ids: Vec<VectorId> = (lo as u32..hi as u32).map(VectorId).collect();

    eprintln!(
        "building index over {} vectors (dim {}), M={} M0={} efc={} seed={}",
        ids.len(),
        dataset.dim(),
        args.m,
        args.m0,
        args.efc,
        args.seed
    );
    let meter = DistanceMeter::new();
    let index = build_index(&dataset, &ids, params, args.strategy, args.metric, &meter)?;
    let embedded = (!args.no_vectors).then_some(&dataset);
    io::save_index(&args.out, &index, args.metric, embedded)?;
    eprintln!(
        "wrote {} ({} vertices, {} layers, build_dc={})",
        args.out.display(),
        index.vertex_count(),
        index.max_layer().map_or(0, |l| l + 1),
        meter.count(phases::BUILD)
    );
    Ok(())
}

fn cmd_merge(args: MergeArgs) -> Result<(), CliError> {
    require_file(&args.a, "index file")?;
    require_file(&args.b, "index file")?;
    let a = io::load_index(&args.a)?;
    let b = io::load_index(&args.b)?;
    if a.metric != b.metric {
        return Err(usage(format!(
            "metric mismatch: {} is {}, {} is {}",
            args.a.display(),
            a.metric.name(),
            args.b.display(),
            b.metric.name()
        )));
    }
    let dataset = match (&a.dataset, &b.dataset) {
        (Some(da), Some(db)) if da == db => da,
        (Some(_), Some(_)) => {
            return Err(usage(
                "indices embed different datasets; build both from one fvecs file with --range",
            ))
        }
        _ => {
            return Err(usage(
                "both indices must embed vectors to be merged (rebuild without --no-vectors)",
            ))
        }
    };

    let meter = DistanceMeter::new();
    let merged = match args.algo.as_str() {
        "sigm" => {
            let inherit = a.index.params();
            let params = BuildParams::new(args.m, args.m0, inherit.ef_construction, args.seed)
                .and_then(|p| p.with_ml(inherit.ml))
                .map_err(|e| usage(e.to_string()))?;
            sigm_merge(
                &a.index,
                &b.index,
                dataset,
                a.metric,
                params,
                args.strategy,
                &meter,
            )?
        }
        other => {
            let algo: MergeAlgo = other.parse().map_err(|_| {
                usage(format!("unknown algorithm {other:?} (expected sigm, ngm, igtm, or cgtm)"))
            })?;
            let params = MergeParams {
                m: args.m,
                m0: args.m0,
                search_ef: args.search_ef,
                jump_ef: args.jump_ef,
                local_ef: args.local_ef,
                next_step_k: args.next_step_k,
                next_step_ef: args.next_step_ef,
                m_carry: args.m_carry,
                seed: args.seed,
            };
            params.validate().map_err(|e| usage(e.to_string()))?;
            general_merge(
                &a.index, &b.index, algo, params, args.strategy, dataset, a.metric, &meter,
            )?
        }
    };

    io::save_index(&args.out, &merged, a.metric, Some(dataset))?;
    eprintln!(
        "wrote {} ({} vertices, {} layers)",
        args.out.display(),
        merged.vertex_count(),
        merged.max_layer().map_or(0, |l| l + 1)
    );
    println!("merge_dc={}", meter.count(phases::MERGE));
    Ok(())
}

fn cmd_ground_truth(args: GroundTruthArgs) -> Result<(), CliError> {
    require_file(&args.base, "base file")?;
    require_file(&args.queries, "query file")?;
    if args.k == 0 {
        return Err(usage("k must be positive"));
    }
    let base = io::read_fvecs(&args.base)?;
    let queries = io::read_fvecs(&args.queries)?;
    eprintln!(
        "computing exact {}-NN for {} queries over {} vectors",
        args.k,
        queries.len(),
        base.len()
    );
    let truth = eval::ground_truth(&base, &queries, args.k, args.metric, &DistanceMeter::new())?;
    let rows: Vec<Vec<i32>> = truth
        .lists()
        .iter()
        .map(|list| list.iter().map(|v| v.0 as i32).collect())
        .collect();
    io::write_ivecs(&args.out, &rows)?;
    eprintln!("wrote {}", args.out.display());
    Ok(())
}

fn load_ground_truth(path: &Path, k: usize, base_len: usize) -> Result<GroundTruth, CliError> {
    let rows = io::read_ivecs(path)?;
    let mut lists = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        if row.len() < k {
            return Err(usage(format!(
                "ground-truth record {i} holds {} ids, need at least k = {k}",
                row.len()
            )));
        }
        let mut list = Vec::with_capacity(k);
        for &raw in row.iter().take(k) {
            if raw < 0 || raw as usize >= base_len {
                return Err(usage(format!(
                    "ground-truth record {i} id {raw} outside the base set of {base_len}"
                )));
            }
            list.push(VectorId(raw as u32));
        }
        lists.push(list);
    }
    GroundTruth::from_lists(k, lists).map_err(|e| usage(e.to_string()))
}

fn cmd_search_bench(args: SearchBenchArgs) -> Result<(), CliError> {
    require_file(&args.index, "index file")?;
    require_file(&args.queries, "query file")?;
    require_file(&args.gt, "ground-truth file")?;
    if args.beams.is_empty() {
        return Err(usage("at least one beam width required"));
    }
    let file = io::load_index(&args.index)?;
    let Some(dataset) = file.dataset.as_ref() else {
        return Err(CliError::Runtime(format!(
            "{} stores no vectors; rebuild without --no-vectors",
            args.index.display()
        )));
    };
    let queries = io::read_fvecs(&args.queries)?;
    let truth = load_ground_truth(&args.gt, args.k, dataset.len())?;
    let points = eval::search_sweep(
        &file.index,
        dataset,
        file.metric,
        &queries,
        &truth,
        args.k,
        &args.beams,
    )?;
    let label = args.label.unwrap_or_else(|| {
        args.index
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "index".to_string())
    });
    let report = SweepReport {
        context: format!(
            "index={}, queries={}, k={}, metric={}",
            args.index.display(),
            queries.len(),
            args.k,
            file.metric.name()
        ),
        rows: points
            .into_iter()
            .map(|p| SweepRow {
                algorithm: label.clone(),
                merge_dc: args.merge_dc,
                l: p.l,
                recall_at_k: p.recall,
                avg_search_dc: p.avg_search_dc,
            })
            .collect(),
    };
    io::write_report_csv(&args.out, &report)?;
    eprintln!("wrote {} ({} rows)", args.out.display(), report.rows.len());
    Ok(())
}

fn cmd_bench_all(args: BenchAllArgs) -> Result<(), CliError> {
    require_file(&args.config, "config file")?;
    let text = std::fs::read_to_string(&args.config).map_err(hnsw_merge::Error::from)?;
    let config: RunConfig =
        toml::from_str(&text).map_err(|e| usage(format!("bad config: {e}")))?;
    let out = args
        .out
        .or_else(|| config.output.clone())
        .ok_or_else(|| usage("no output path: pass --out or set `output` in the config"))?;
    if config.merges.is_empty() {
        return Err(usage("config lists no [[merge]] jobs"));
    }
    let split =
        SplitSpec::new(config.data.split_fraction).map_err(|e| usage(e.to_string()))?;
    let metric = Metric::SquaredEuclidean;

    // resolve base and query sets
    let (base, queries) = match &config.data.base {
        Some(path) => {
            require_file(path, "base file")?;
            let full = io::read_fvecs(path)?;
            match &config.data.queries {
                Some(qpath) => {
                    require_file(qpath, "query file")?;
                    (full, io::read_fvecs(qpath)?)
                }
                None => hold_out_tail(full, config.data.query_count)?,
            }
        }
        None => {
            let s = &config.data.synthetic;
            eprintln!(
                "generating synthetic mixture: {} + {} vectors, dim {}, {} clusters, seed {}",
                s.n, config.data.query_count, s.dim, s.clusters, config.seed
            );
            let full = eval::synthetic_mixture(
                s.n + config.data.query_count,
                s.dim,
                s.clusters,
                config.seed,
            );
            hold_out_tail(full, config.data.query_count)?
        }
    };
    if queries.is_empty() {
        return Err(usage("no query vectors"));
    }

    let supplied_truth = match &config.data.ground_truth {
        Some(path) => {
            require_file(path, "ground-truth file")?;
            Some(load_ground_truth(path, config.search.k, base.len())?)
        }
        None => None,
    };

    let build = BuildParams::new(
        config.build.m,
        config.build.m0,
        config.build.ef_construction,
        config.seed,
    )
    .map_err(|e| usage(e.to_string()))?;

    let mut jobs = Vec::with_capacity(config.merges.len());
    for section in &config.merges {
        let kind = match section.algo().map_err(usage)? {
            None => MergeKind::Sigm,
            Some(algo) => {
                let params = section.merge_params(&config.build, config.seed);
                params.validate().map_err(|e| usage(e.to_string()))?;
                MergeKind::Layered(algo, params)
            }
        };
        jobs.push(MergeJob {
            label: section.label(),
            kind,
        });
    }

    eprintln!(
        "benchmark: {} base vectors, {} queries, split {}, {} merge jobs, beams {:?}",
        base.len(),
        queries.len(),
        config.data.split_fraction,
        jobs.len(),
        config.search.beams
    );
    let report = eval::merge_benchmark(
        &base,
        &queries,
        supplied_truth.as_ref(),
        metric,
        split,
        build,
        NeighborhoodStrategy::Rng,
        &jobs,
        config.search.k,
        &config.search.beams,
    )?;
    io::write_report_csv(&out, &report)?;
    eprintln!("wrote {} ({} rows)", out.display(), report.rows.len());
    for row in &report.rows {
        eprintln!(
            "  {} merge_dc={} L={} recall={:.4} search_dc={:.1}",
            row.algorithm, row.merge_dc, row.l, row.recall_at_k, row.avg_search_dc
        );
    }
    Ok(())
}

/// Splits the last `count` vectors off as the query set.
fn hold_out_tail(full: Dataset, count: usize) -> Result<(Dataset, Dataset), CliError> {
    if count == 0 {
        return Err(usage("query_count must be positive when no query file is given"));
    }
    if full.len() <= count {
        return Err(usage(format!(
            "cannot hold out {count} queries from {} vectors",
            full.len()
        )));
    }
    let (base, queries) = full
        .split_rows(full.len() - count)
        .map_err(|e| usage(e.to_string()))?;
    Ok((base, queries))
}
