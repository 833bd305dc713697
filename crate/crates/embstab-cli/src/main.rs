//! `embstab` — generate session corpora, train skip-gram embeddings
//! deterministically, compare models, cluster them, diff Huffman
//! codings, and drive the leave-one-out stability experiment.
//!
//! Trainer flag names mirror the classic word-vector trainer
//! (`--window`, `--size`, `--sample`, `--min-count`, `--cbow`, `--hs`,
//! `--negative`, `--iter`, `--threads`) plus the extensions `--seed`,
//! `--fixed-window`, `--fixed-tree`, `--round-digits`.
//!
//! Exit codes: 0 success, 1 runtime error, 2 usage error.

mod svg;
mod util;

use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use embstab::corpus::{
    build_vocabulary, corpus_stats, generate_synthetic, load_corpus_bytes, serialize_corpus,
    GroupCatalog, ProductId, SyntheticSpec,
};
use embstab::huffman::{build_coding, diff_codings, perturb_and_diff, HuffmanCoding};
use embstab::loo::{self, FreqAggregation, LooParams, LooRecord};
use embstab::metrics::{dbscan, local_density, overlap_at_k, sample_seeds};
use embstab::trainer::{load_model, save_model, train, TrainConfig, TrainMode};
use util::{fnv64, usage, write_atomic, Usage};

#[derive(Parser)]
#[command(name = "embstab", version, about = "Skip-gram click embeddings and their stability")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic Zipf session corpus plus its group TSV
    Gen(GenArgs),
    /// Train a skip-gram model (HS or NEG)
    Train(TrainArgs),
    /// Top-k neighborhood overlap of two saved models
    Compare(CompareArgs),
    /// Density-based clustering of a saved model
    Cluster(ClusterArgs),
    /// Diff two Huffman codings, or perturb one type's count
    Huffdiff(HuffdiffArgs),
    /// The leave-one-out experiment
    Loo(LooArgs),
    /// Render the histogram SVG and collect the text tables of a run
    Report(ReportArgs),
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            if e.downcast_ref::<Usage>().is_some() {
                eprintln!("usage error: {e}");
                std::process::exit(2);
            }
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Train(args) => cmd_train(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Cluster(args) => cmd_cluster(args),
        Command::Huffdiff(args) => cmd_huffdiff(args),
        Command::Loo(args) => cmd_loo(args),
        Command::Report(args) => cmd_report(args),
    }
}

// ---------------------------------------------------------------- gen

#[derive(Args)]
struct GenArgs {
    /// Number of product groups
    #[arg(long)]
    groups: Option<usize>,
    #[arg(long = "products-per-group")]
    products_per_group: Option<usize>,
    /// Zipf exponent of the global product frequencies
    #[arg(long)]
    zipf: Option<f64>,
    #[arg(long)]
    sessions: Option<usize>,
    #[arg(long = "mean-session-length")]
    mean_session_length: Option<f64>,
    /// Probability that the next click stays in the current group
    #[arg(long = "within-group-bias")]
    within_group_bias: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "out-corpus", default_value = "corpus.txt")]
    out_corpus: PathBuf,
    #[arg(long = "out-groups", default_value = "groups.tsv")]
    out_groups: PathBuf,
    /// Flat key=value file supplying defaults for the flags above
    #[arg(long)]
    config: Option<PathBuf>,
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let file: HashMap<String, String> = match &args.config {
        None => HashMap::new(),
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut map = HashMap::new();
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| usage(format!("{}:{}: expected key=value", path.display(), i + 1)))?;
                map.insert(k.trim().to_owned(), v.trim().to_owned());
            }
            map
        }
    };
    fn pick<T: std::str::FromStr>(
        flag: Option<T>,
        file: &HashMap<String, String>,
        key: &str,
        default: T,
    ) -> Result<T> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match file.get(key) {
            Some(raw) => raw.parse().map_err(|_| usage(format!("bad value for {key}: '{raw}'"))),
            None => Ok(default),
        }
    }
    let spec = SyntheticSpec {
        n_groups: pick(args.groups, &file, "groups", 20)?,
        products_per_group: pick(args.products_per_group, &file, "products_per_group", 50)?,
        zipf_exponent: pick(args.zipf, &file, "zipf_exponent", 1.0)?,
        n_sessions: pick(args.sessions, &file, "sessions", 20_000)?,
        mean_session_length: pick(args.mean_session_length, &file, "mean_session_length", 7.0)?,
        within_group_bias: pick(args.within_group_bias, &file, "within_group_bias", 0.8)?,
        seed: pick(args.seed, &file, "seed", 1)?,
    };
    if spec.n_sessions == 0 || spec.n_groups == 0 || spec.products_per_group == 0 {
        return Err(usage("counts must be positive"));
    }
    if !(spec.zipf_exponent > 0.0)
        || !(spec.mean_session_length >= 1.0)
        || !(0.0..=1.0).contains(&spec.within_group_bias)
    {
        return Err(usage("need zipf > 0, mean session length >= 1, bias in [0,1]"));
    }
    let (corpus, groups) = generate_synthetic(&spec)?;
    write_atomic(&args.out_corpus, serialize_corpus(&corpus).as_bytes())?;
    write_atomic(&args.out_groups, groups.to_tsv().as_bytes())?;
    let vocab = build_vocabulary(&corpus, 1, Some(&groups))?;
    let stats = corpus_stats(&corpus, &vocab, Some(&groups));
    eprintln!(
        "wrote {} sessions over {} products: mean length {:.2}, mean groups/session {:.2}",
        stats.n_sessions,
        spec.n_groups * spec.products_per_group,
        stats.mean_session_length,
        stats.mean_groups_per_session
    );
    Ok(())
}

// -------------------------------------------------------------- train

#[derive(Args)]
struct TrainArgs {
    /// Training corpus, one session per line
    #[arg(long = "train")]
    train: PathBuf,
    /// Input-vector file; auxiliary vectors go to <output>.aux and the
    /// HS coding to <output>.coding.tsv
    #[arg(long)]
    output: PathBuf,
    #[arg(long = "size", default_value_t = 100)]
    size: usize,
    #[arg(long, default_value_t = 5)]
    window: usize,
    /// Subsampling threshold (0 = off)
    #[arg(long, default_value_t = 0.0)]
    sample: f64,
    #[arg(long = "min-count", default_value_t = 5)]
    min_count: u64,
    /// Only 0 (skip-gram) is supported
    #[arg(long, default_value_t = 0)]
    cbow: u8,
    #[arg(long, default_value_t = 0)]
    hs: u8,
    /// Noise samples; NEG mode unless --hs 1 (default 5)
    #[arg(long)]
    negative: Option<usize>,
    #[arg(long, default_value_t = 10)]
    iter: usize,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, default_value_t = 0.025)]
    alpha: f64,
    #[arg(long = "noise-exponent", default_value_t = 0.75)]
    noise_exponent: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Use the full window instead of sampling the offset
    #[arg(long = "fixed-window")]
    fixed_window: bool,
    /// Train against this coding dump instead of building the tree
    #[arg(long = "fixed-tree")]
    fixed_tree: Option<PathBuf>,
    #[arg(long = "round-digits", default_value_t = 4)]
    round_digits: usize,
    /// Classic lookup-table sigmoid instead of exact exp
    #[arg(long = "sigmoid-table")]
    sigmoid_table: bool,
}

fn resolve_mode(hs: u8, negative: Option<usize>) -> Result<(TrainMode, usize)> {
    match hs {
        1 => match negative {
            Some(z) if z > 0 => {
                Err(usage(format!("--hs 1 conflicts with --negative {z}; use --negative 0")))
            }
            _ => Ok((TrainMode::Hs, 0)),
        },
        0 => {
            let z = negative.unwrap_or(5);
            if z == 0 {
                Err(usage("nothing to train: use --hs 1 or --negative > 0"))
            } else {
                Ok((TrainMode::Neg, z))
            }
        }
        other => Err(usage(format!("--hs must be 0 or 1, got {other}"))),
    }
}

impl TrainArgs {
    fn to_config(&self) -> Result<TrainConfig> {
        if self.cbow != 0 {
            return Err(usage("unsupported mode: only --cbow 0 (skip-gram) is implemented"));
        }
        let (mode, negatives) = resolve_mode(self.hs, self.negative)?;
        let mut config = TrainConfig::new(mode);
        config.dims = self.size;
        config.window = self.window;
        config.subsample = self.sample;
        config.min_count = self.min_count;
        config.negatives = negatives;
        config.noise_exponent = self.noise_exponent;
        config.iterations = self.iter;
        config.workers = self.threads;
        config.alpha0 = self.alpha;
        config.alpha_min = self.alpha * 1e-4;
        config.seed = self.seed;
        config.fixed_window = self.fixed_window;
        config.round_digits = self.round_digits;
        config.sigmoid_table = self.sigmoid_table;
        Ok(config)
    }
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut config = args.to_config()?;
    let bytes =
        fs::read(&args.train).with_context(|| format!("reading {}", args.train.display()))?;
    let corpus = load_corpus_bytes(&bytes, args.train.display().to_string())?;
    let vocab = build_vocabulary(&corpus, config.min_count, None)?;
    let coding = match (&config.mode, &args.fixed_tree) {
        (TrainMode::Hs, Some(path)) => {
            let dump = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let fixed = HuffmanCoding::parse_tsv(&dump)?;
            config.fixed_coding = Some(fixed.clone());
            Some(fixed.restrict_to(&vocab)?)
        }
        (TrainMode::Hs, None) => Some(build_coding(&vocab)?),
        (TrainMode::Neg, _) => None,
    };
    let model = train(&corpus, &vocab, &config)?;
    save_model(&model, &args.output)?;
    if let Some(coding) = coding {
        let mut path = args.output.as_os_str().to_owned();
        path.push(".coding.tsv");
        fs::write(PathBuf::from(path), coding.to_tsv())?;
    }
    eprintln!(
        "trained {:?} model: {} types, {} dims, {} epochs -> {}",
        config.mode,
        vocab.len(),
        config.dims,
        config.iterations,
        args.output.display()
    );
    Ok(())
}

// ------------------------------------------------------------ compare

#[derive(Args)]
struct CompareArgs {
    model_a: PathBuf,
    model_b: PathBuf,
    #[arg(long, default_value_t = 15)]
    k: usize,
    /// One seed id per line; replaces sampling
    #[arg(long = "seeds-file")]
    seeds_file: Option<PathBuf>,
    /// Seed pool: the most frequent types of model A
    #[arg(long, default_value_t = 10_000)]
    pool: usize,
    #[arg(long = "sample", default_value_t = 5_000)]
    sample_size: usize,
    #[arg(long = "metrics-seed", default_value_t = 1)]
    metrics_seed: u64,
    #[arg(long, default_value = "compare-out")]
    out: PathBuf,
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let a = load_model(&args.model_a)?;
    let b = load_model(&args.model_b)?;
    let max_k = a.vocab.len().min(b.vocab.len()).saturating_sub(1);
    if args.k > max_k {
        return Err(usage(format!("--k {} exceeds vocabulary bound {max_k}", args.k)));
    }
    let seeds: Vec<ProductId> = match &args.seeds_file {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            text.lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| ProductId::new(l.trim()).map_err(anyhow::Error::from))
                .collect::<Result<_>>()?
        }
        None => {
            let pool = args.pool.min(a.vocab.len());
            let size = args.sample_size.min(pool);
            if size < args.sample_size {
                eprintln!("note: sample clamped to the pool of {pool} types");
            }
            sample_seeds(&a.vocab, args.pool, size, args.metrics_seed)?.seeds
        }
    };
    let report = overlap_at_k(&a, &b, &seeds, args.k)?;
    fs::create_dir_all(&args.out)?;
    let config = serde_json::json!({
        "subcommand": "compare",
        "model_a": args.model_a.display().to_string(),
        "model_b": args.model_b.display().to_string(),
        "k": args.k,
        "seeds_file": args.seeds_file.as_ref().map(|p| p.display().to_string()),
        "pool": args.pool,
        "sample": args.sample_size,
        "metrics_seed": args.metrics_seed,
    });
    write_atomic(&args.out.join("config.json"), serde_json::to_string_pretty(&config)?.as_bytes())?;
    // overlap.csv columns: seed, overlap (fraction of shared top-k ids)
    let mut csv = String::from("seed,overlap\n");
    for (s, o) in report.seeds.iter().zip(&report.per_seed_overlap) {
        csv.push_str(&format!("{s},{o:.6}\n"));
    }
    fs::write(args.out.join("overlap.csv"), csv)?;
    fs::write(args.out.join("summary.json"), serde_json::to_string_pretty(&report)?)?;
    println!("{:.3} \u{00b1} {:.3}", report.mean, report.sd);
    Ok(())
}

// ------------------------------------------------------------ cluster

#[derive(Args)]
struct ClusterArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    groups: Option<PathBuf>,
    #[arg(long, default_value_t = 0.8)]
    eps: f64,
    #[arg(long = "min-neighbors", default_value_t = 10)]
    min_neighbors: usize,
    #[arg(long = "density-radius", default_value_t = 0.8)]
    density_radius: f64,
    #[arg(long = "density-cap", default_value_t = 200)]
    density_cap: usize,
    #[arg(long, default_value = "cluster-out")]
    out: PathBuf,
}

fn cmd_cluster(args: ClusterArgs) -> Result<()> {
    let mut model = load_model(&args.model)?;
    if let Some(path) = &args.groups {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        model.vocab = model.vocab.with_groups(&GroupCatalog::parse(&text)?);
    }
    let mut report = dbscan(&model, args.eps, args.min_neighbors)?;
    let densities = local_density(&model, &report, args.density_radius, args.density_cap)?;
    report.densities = Some(densities.clone());
    fs::create_dir_all(&args.out)?;
    let config = serde_json::json!({
        "subcommand": "cluster",
        "model": args.model.display().to_string(),
        "groups": args.groups.as_ref().map(|p| p.display().to_string()),
        "eps": args.eps,
        "min_neighbors": args.min_neighbors,
        "density_radius": args.density_radius,
        "density_cap": args.density_cap,
    });
    write_atomic(&args.out.join("config.json"), serde_json::to_string_pretty(&config)?.as_bytes())?;
    // clusters.csv columns: cluster index, member count, purity,
    // dominant group, local density around the centroid
    let mut clusters_csv = String::from("cluster,size,purity,dominant_group,density\n");
    let mut members_csv = String::from("cluster,member\n");
    for (i, (cluster, density)) in report.clusters.iter().zip(&densities).enumerate() {
        clusters_csv.push_str(&format!(
            "{i},{},{:.6},{},{density}\n",
            cluster.members.len(),
            cluster.purity,
            cluster.dominant_group
        ));
        for m in &cluster.members {
            members_csv.push_str(&format!("{i},{m}\n"));
        }
    }
    fs::write(args.out.join("clusters.csv"), clusters_csv)?;
    fs::write(args.out.join("members.csv"), members_csv)?;
    fs::write(args.out.join("summary.json"), serde_json::to_string_pretty(&report)?)?;
    eprintln!(
        "{} clusters, {} noise points, mean purity {}",
        report.n_clusters,
        report.noise_count,
        report.mean_purity.map(|p| format!("{p:.3}")).unwrap_or_else(|| "n/a".into())
    );
    Ok(())
}

// ----------------------------------------------------------- huffdiff

#[derive(Args)]
struct HuffdiffArgs {
    /// Coding dump A (`type<TAB>bits`)
    coding_a: Option<PathBuf>,
    /// Coding dump B
    coding_b: Option<PathBuf>,
    /// Alternative form: build the coding of this corpus ...
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long = "min-count", default_value_t = 5)]
    min_count: u64,
    /// ... and diff it against the coding after decrementing this type
    #[arg(long)]
    decrement: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_huffdiff(args: HuffdiffArgs) -> Result<()> {
    let diff = match (&args.coding_a, &args.coding_b, &args.corpus, &args.decrement) {
        (Some(a), Some(b), None, None) => {
            let ca = HuffmanCoding::parse_tsv(
                &fs::read_to_string(a).with_context(|| format!("reading {}", a.display()))?,
            )?;
            let cb = HuffmanCoding::parse_tsv(
                &fs::read_to_string(b).with_context(|| format!("reading {}", b.display()))?,
            )?;
            diff_codings(&ca, &cb)
        }
        (None, None, Some(corpus_path), Some(type_id)) => {
            let bytes = fs::read(corpus_path)
                .with_context(|| format!("reading {}", corpus_path.display()))?;
            let corpus = load_corpus_bytes(&bytes, corpus_path.display().to_string())?;
            let vocab = build_vocabulary(&corpus, args.min_count, None)?;
            perturb_and_diff(&vocab, &ProductId::new(type_id.as_str())?)?
        }
        _ => {
            return Err(usage(
                "pass either two coding files, or --corpus with --decrement",
            ))
        }
    };
    let json = serde_json::to_string_pretty(&diff)?;
    match &args.out {
        Some(path) => fs::write(path, json)?,
        None => println!("{json}"),
    }
    eprintln!(
        "{} changed of {} shared types, max hamming {}, mean {:.4} ({} appeared, {} disappeared)",
        diff.changed_types,
        diff.shared_types,
        diff.max_hamming,
        diff.mean_hamming,
        diff.appeared,
        diff.disappeared
    );
    Ok(())
}

// ---------------------------------------------------------------- loo

#[derive(Args)]
struct LooArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    groups: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    subsamples: usize,
    #[arg(long = "selection-seed", default_value_t = 1)]
    selection_seed: u64,
    /// Reuse the reference Huffman tree for every omitted-session model
    #[arg(long = "fixed-tree")]
    fixed_tree: bool,
    /// Concurrent record pipelines (default: EMBSTAB_THREADS or 1)
    #[arg(long)]
    parallel: Option<usize>,
    /// Parent directory; the run lands in <out>/run-<config hash>
    #[arg(long, default_value = "loo-runs")]
    out: PathBuf,
    #[arg(long = "size", default_value_t = 100)]
    size: usize,
    #[arg(long, default_value_t = 5)]
    window: usize,
    #[arg(long, default_value_t = 10)]
    iter: usize,
    #[arg(long = "min-count", default_value_t = 5)]
    min_count: u64,
    #[arg(long, default_value_t = 0.0)]
    sample: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0.025)]
    alpha: f64,
    #[arg(long, default_value_t = 5)]
    negative: usize,
    /// The harness fixes the window by default; this restores sampling
    #[arg(long = "sampled-window")]
    sampled_window: bool,
    #[arg(long = "round-digits", default_value_t = 4)]
    round_digits: usize,
    #[arg(long, default_value_t = 15)]
    k: usize,
    #[arg(long = "seed-pool", default_value_t = 10_000)]
    seed_pool: usize,
    #[arg(long = "seed-sample", default_value_t = 5_000)]
    seed_sample: usize,
    #[arg(long = "metrics-seed", default_value_t = 1)]
    metrics_seed: u64,
    /// Skip the NEG arm
    #[arg(long = "skip-neg")]
    skip_neg: bool,
    /// Skip DBScan topology
    #[arg(long = "no-topology")]
    no_topology: bool,
    #[arg(long, default_value_t = 0.8)]
    eps: f64,
    #[arg(long = "min-neighbors", default_value_t = 10)]
    min_neighbors: usize,
    #[arg(long = "density-radius", default_value_t = 0.8)]
    density_radius: f64,
    #[arg(long = "density-cap", default_value_t = 200)]
    density_cap: usize,
    /// min | mean | median
    #[arg(long = "freq-agg", default_value = "min")]
    freq_agg: String,
    /// Keep every omitted-session model under <run>/models
    #[arg(long = "keep-models")]
    keep_models: bool,
    #[arg(long)]
    verbose: bool,
}

fn cmd_loo(args: LooArgs) -> Result<()> {
    let corpus_bytes =
        fs::read(&args.corpus).with_context(|| format!("reading {}", args.corpus.display()))?;
    let corpus = load_corpus_bytes(&corpus_bytes, args.corpus.display().to_string())?;
    if args.subsamples > corpus.len() {
        return Err(usage(format!(
            "--subsamples {} exceeds the corpus size {}",
            args.subsamples,
            corpus.len()
        )));
    }
    let (groups_bytes, groups) = match &args.groups {
        Some(path) => {
            let bytes =
                fs::read(path).with_context(|| format!("reading {}", path.display()))?;
            let catalog =
                GroupCatalog::parse(std::str::from_utf8(&bytes).context("groups not UTF-8")?)?;
            (bytes, Some(catalog))
        }
        None => (Vec::new(), None),
    };
    let freq_agg = match args.freq_agg.as_str() {
        "min" => FreqAggregation::Min,
        "mean" => FreqAggregation::Mean,
        "median" => FreqAggregation::Median,
        other => return Err(usage(format!("--freq-agg must be min|mean|median, got '{other}'"))),
    };
    let parallel = match args.parallel {
        Some(p) => p.max(1),
        None => std::env::var("EMBSTAB_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(1),
    };

    let mut config_hs = TrainConfig::new(TrainMode::Hs);
    config_hs.dims = args.size;
    config_hs.window = args.window;
    config_hs.iterations = args.iter;
    config_hs.min_count = args.min_count;
    config_hs.subsample = args.sample;
    config_hs.seed = args.seed;
    config_hs.alpha0 = args.alpha;
    config_hs.alpha_min = args.alpha * 1e-4;
    config_hs.fixed_window = !args.sampled_window;
    config_hs.round_digits = args.round_digits;
    let mut config_neg = config_hs.clone();
    config_neg.mode = TrainMode::Neg;
    config_neg.negatives = args.negative;

    let mut params = LooParams {
        n_subsamples: args.subsamples,
        selection_seed: args.selection_seed,
        fixed_tree: args.fixed_tree,
        k: args.k,
        seed_pool: args.seed_pool,
        seed_sample: args.seed_sample,
        metrics_seed: args.metrics_seed,
        include_neg: !args.skip_neg,
        topology: !args.no_topology,
        eps_sim: args.eps,
        min_neighbors: args.min_neighbors,
        density_radius: args.density_radius,
        density_cap: args.density_cap,
        freq_agg,
        parallel,
        keep_models: None,
        verbose: args.verbose,
    };

    // the run directory is named by the hash of (flags, corpus bytes,
    // group bytes) so a rerun with identical inputs resumes
    let config_json = serde_json::to_string_pretty(&serde_json::json!({
        "config_hs": &config_hs,
        "config_neg": &config_neg,
        "params": &params,
        "corpus": args.corpus.display().to_string(),
        "groups": args.groups.as_ref().map(|p| p.display().to_string()),
    }))?;
    let hash = fnv64(&[config_json.as_bytes(), &corpus_bytes, &groups_bytes]);
    let run_dir = args.out.join(format!("run-{hash:016x}"));
    let records_dir = run_dir.join("records");
    fs::create_dir_all(&records_dir)?;
    let marker = run_dir.join("INCOMPLETE");
    let complete = !marker.exists() && run_dir.join("records.csv").exists();
    if complete {
        eprintln!("run already complete: {}", run_dir.display());
        println!("{}", run_dir.display());
        return Ok(());
    }
    write_atomic(&run_dir.join("config.json"), config_json.as_bytes())?;
    fs::write(&marker, b"run in progress\n")?;
    if args.keep_models {
        params.keep_models = Some(run_dir.join("models"));
    }

    eprintln!("run directory: {}", run_dir.display());
    let ctx = loo::LooContext::prepare(
        &corpus,
        groups.as_ref(),
        config_hs,
        config_neg,
        params,
    )?;
    let indices = ctx.selected_indices();

    // resume: completed records sit in records/omit<i>.json
    let mut cached: Vec<LooRecord> = Vec::new();
    let mut missing: Vec<usize> = Vec::new();
    for &i in &indices {
        let path = records_dir.join(format!("omit{i}.json"));
        match fs::read_to_string(&path) {
            Ok(text) => match serde_json::from_str::<LooRecord>(&text) {
                Ok(r) => cached.push(r),
                Err(_) => missing.push(i),
            },
            Err(_) => missing.push(i),
        }
    }
    if !cached.is_empty() {
        eprintln!("resuming: {} records cached, {} to compute", cached.len(), missing.len());
    }
    let compute = |&i: &usize| -> Result<LooRecord, embstab::Error> {
        let record = ctx.process_record(i)?;
        let path = records_dir.join(format!("omit{i}.json"));
        let json = serde_json::to_string(&record).expect("record serializes");
        if write_atomic(&path, json.as_bytes()).is_err() {
            // the record is still returned; only the cache write failed
            eprintln!("warning: could not cache record {i}");
        }
        Ok(record)
    };
    let computed: Vec<LooRecord> = if parallel == 1 {
        missing.iter().map(compute).collect::<Result<_, _>>()?
    } else {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallel)
            .build()
            .context("building record pipeline pool")?;
        pool.install(|| missing.par_iter().map(compute).collect::<Result<_, _>>())?
    };
    cached.extend(computed);

    let report = ctx.assemble(cached);
    loo::write_report(&run_dir, &report)?;
    fs::remove_file(&marker).ok();
    eprintln!(
        "done: {} records ({} failed), same tree in {} of them",
        report.records.len(),
        report.n_failed,
        report.same_tree_count
    );
    println!("{}", run_dir.display());
    Ok(())
}

// ------------------------------------------------------------- report

#[derive(Args)]
struct ReportArgs {
    run_dir: PathBuf,
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let dir = &args.run_dir;
    for name in ["histogram.csv", "regression_hs.txt", "regression_neg.txt", "summary.json"] {
        if !dir.join(name).exists() {
            anyhow::bail!("missing file: {}", dir.join(name).display());
        }
    }
    let histogram = fs::read_to_string(dir.join("histogram.csv"))?;
    let mut bins = Vec::new();
    for line in histogram.lines().skip(1) {
        let mut parts = line.split(',');
        let (Some(n), Some(count), Some(flag)) = (parts.next(), parts.next(), parts.next())
        else {
            anyhow::bail!("malformed histogram.csv line: '{line}'");
        };
        bins.push(svg::Bin {
            n_clusters: n.parse().context("bad n_clusters")?,
            count: count.parse().context("bad count")?,
            is_reference: flag == "1",
        });
    }
    if bins.is_empty() {
        anyhow::bail!("histogram.csv has no rows (was topology disabled?)");
    }
    write_atomic(&dir.join("histogram.svg"), svg::histogram_svg(&bins).as_bytes())?;

    let mut report = String::new();
    report.push_str("== Summary ==\n");
    report.push_str(&fs::read_to_string(dir.join("summary.json"))?);
    report.push_str("\n\n== Regression, HS overlap ==\n");
    report.push_str(&fs::read_to_string(dir.join("regression_hs.txt"))?);
    report.push_str("\n== Regression, NEG overlap ==\n");
    report.push_str(&fs::read_to_string(dir.join("regression_neg.txt"))?);
    write_atomic(&dir.join("report.txt"), report.as_bytes())?;
    eprintln!("wrote {} and {}", dir.join("histogram.svg").display(), dir.join("report.txt").display());
    Ok(())
}
