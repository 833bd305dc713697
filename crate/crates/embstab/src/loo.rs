//! The leave-one-out experiment: train a reference model plus N
//! single-session-omitted models, extract per-omission features,
//! measure overlap and topology against the reference, and regress
//! stability on the features.
//!
//! Record pipelines are independent and may run in parallel; results
//! are merged in session-index order, so parallelism never changes the
//! report. Failed records (an omission emptying the vocabulary) are
//! retained with their reason rather than resampled, keeping the
//! subsample set a pure function of the selection seed.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    build_vocabulary, corpus_stats, omit_session, CorpusStats, GroupCatalog, Session,
    SessionCorpus, Vocabulary,
};
use crate::error::{Error, Result};
use crate::huffman::{build_coding, diff_codings, HuffmanCoding};
use crate::metrics::{
    cluster_delta, dbscan, local_density, neighbor_table, overlap_from_tables, sample_seeds,
    ClusterReport, NeighborTable, SeedSample,
};
use crate::rng::{stream, DeterministicRng};
use crate::stats::{self, Correlations, RegressionFit};
use crate::trainer::{train, TrainConfig, TrainMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FreqAggregation {
    Min,
    Mean,
    Median,
}

#[derive(Debug, Clone, Serialize)]
pub struct LooParams {
    pub n_subsamples: usize,
    pub selection_seed: u64,
    /// Reuse the reference Huffman tree for every omitted-session model.
    pub fixed_tree: bool,
    pub k: usize,
    pub seed_pool: usize,
    pub seed_sample: usize,
    pub metrics_seed: u64,
    /// Train the NEG arm alongside HS.
    pub include_neg: bool,
    /// DBScan topology on the HS models.
    pub topology: bool,
    pub eps_sim: f64,
    pub min_neighbors: usize,
    pub density_radius: f64,
    pub density_cap: usize,
    pub freq_agg: FreqAggregation,
    /// Maximum concurrently running record pipelines.
    pub parallel: usize,
    /// Save every omitted-session model under this directory instead
    /// of discarding it after measurement.
    pub keep_models: Option<std::path::PathBuf>,
    pub verbose: bool,
}

impl Default for LooParams {
    fn default() -> Self {
        LooParams {
            n_subsamples: 50,
            selection_seed: 1,
            fixed_tree: false,
            k: 15,
            seed_pool: 10_000,
            seed_sample: 5_000,
            metrics_seed: 1,
            include_neg: true,
            topology: true,
            eps_sim: 0.8,
            min_neighbors: 10,
            density_radius: 0.8,
            density_cap: 200,
            freq_agg: FreqAggregation::Min,
            parallel: 1,
            keep_models: None,
            verbose: false,
        }
    }
}

pub const FEATURE_NAMES: [&str; 6] =
    ["Length", "Frequency", "Rank", "MinCount", "HuffmanChanges", "MaxHamming"];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LooFeatures {
    /// Token count of the omitted session.
    pub length: usize,
    /// log10 of the aggregated reference frequency of the session's
    /// retained types (aggregation per [`FreqAggregation`], default min).
    pub freq_agg: f64,
    /// File position of the omitted session.
    pub rank: usize,
    /// 1 when the omission pushes at least one type below min-count.
    pub min_count_flag: u8,
    /// log10(1 + changed Huffman codes vs the reference coding).
    pub huffman_changes_log10: f64,
    pub max_hamming: usize,
}

impl LooFeatures {
    pub fn as_row(&self) -> Vec<f64> {
        vec![
            self.length as f64,
            self.freq_agg,
            self.rank as f64,
            self.min_count_flag as f64,
            self.huffman_changes_log10,
            self.max_hamming as f64,
        ]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LooOutcomes {
    pub overlap_hs: f64,
    pub overlap_neg: Option<f64>,
    pub delta_n_clusters: Option<i64>,
    pub delta_noise: Option<i64>,
    pub delta_mean_purity: Option<f64>,
    /// Mean per-cluster local density of the omitted-session HS model.
    pub mean_local_density: Option<f64>,
    pub dropped_seeds_hs: usize,
    pub dropped_seeds_neg: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LooRecord {
    pub session_index: usize,
    pub features: Option<LooFeatures>,
    pub outcomes: Option<LooOutcomes>,
    /// The omitted-session coding equals the reference coding.
    pub same_tree: Option<bool>,
    pub failed: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterSummary {
    pub n_clusters: usize,
    pub noise_count: usize,
    pub mean_purity: Option<f64>,
    pub mean_local_density: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LooReport {
    pub params: LooParams,
    pub config_hs: TrainConfig,
    pub config_neg: Option<TrainConfig>,
    pub corpus_stats: CorpusStats,
    pub reference_clusters: Option<ClusterSummary>,
    pub seed_info: SeedInfo,
    /// Overlap of the reference model with itself; exactly 1.0.
    pub control_overlap: f64,
    pub records: Vec<LooRecord>,
    /// Omissions whose coding equals the reference coding.
    pub same_tree_count: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedInfo {
    pub n_seeds: usize,
    pub pool_used: usize,
    pub pool_clamped: bool,
    pub sample_clamped: bool,
}

/// Everything shared by all record pipelines: the reference models'
/// neighbor tables, the reference coding and topology, the seed set.
pub struct LooContext<'a> {
    corpus: &'a SessionCorpus,
    groups: Option<&'a GroupCatalog>,
    pub params: LooParams,
    pub config_hs: TrainConfig,
    pub config_neg: TrainConfig,
    vocab_ref: Vocabulary,
    coding_ref: HuffmanCoding,
    ref_table_hs: NeighborTable,
    ref_table_neg: Option<NeighborTable>,
    ref_cluster: Option<ClusterReport>,
    seeds: SeedSample,
    sample_clamped: bool,
    control_overlap: f64,
    stats: CorpusStats,
}

impl<'a> LooContext<'a> {
    /// Build the reference side: vocabulary, coding, both reference
    /// models, the shared seed set and reference neighbor tables, and
    /// (when topology is on) the reference cluster report.
    pub fn prepare(
        corpus: &'a SessionCorpus,
        groups: Option<&'a GroupCatalog>,
        config_hs: TrainConfig,
        config_neg: TrainConfig,
        params: LooParams,
    ) -> Result<Self> {
        if config_hs.mode != TrainMode::Hs || config_neg.mode != TrainMode::Neg {
            return Err(Error::InvalidParameter("configs must be HS and NEG".into()));
        }
        for (what, same) in [
            ("min_count", config_hs.min_count == config_neg.min_count),
            ("window", config_hs.window == config_neg.window),
            ("dims", config_hs.dims == config_neg.dims),
            ("iterations", config_hs.iterations == config_neg.iterations),
            ("seed", config_hs.seed == config_neg.seed),
        ] {
            if !same {
                return Err(Error::InvalidParameter(format!(
                    "HS and NEG configs must share {what}"
                )));
            }
        }
        if params.n_subsamples > corpus.len() {
            return Err(Error::InvalidParameter(format!(
                "{} subsamples requested from {} sessions",
                params.n_subsamples,
                corpus.len()
            )));
        }

        let vocab_ref = build_vocabulary(corpus, config_hs.min_count, groups)?;
        let coding_ref = build_coding(&vocab_ref)?;
        let stats = corpus_stats(corpus, &vocab_ref, groups);

        if params.verbose {
            eprintln!(
                "reference: {} sessions, {} retained types",
                corpus.len(),
                vocab_ref.len()
            );
        }
        let model_hs_ref = train(corpus, &vocab_ref, &config_hs)?;
        let model_neg_ref = if params.include_neg {
            Some(train(corpus, &vocab_ref, &config_neg)?)
        } else {
            None
        };

        let pool = params.seed_pool.min(vocab_ref.len());
        let sample_clamped = params.seed_sample > pool;
        let sample_size = params.seed_sample.min(pool);
        let seeds = sample_seeds(&vocab_ref, params.seed_pool, sample_size, params.metrics_seed)?;

        let ref_table_hs = neighbor_table(&model_hs_ref, &seeds.seeds, params.k)?;
        let ref_table_neg = match &model_neg_ref {
            Some(m) => Some(neighbor_table(m, &seeds.seeds, params.k)?),
            None => None,
        };
        let control_overlap = overlap_from_tables(&ref_table_hs, &ref_table_hs)?.mean;

        let ref_cluster = if params.topology {
            let mut report = dbscan(&model_hs_ref, params.eps_sim, params.min_neighbors)?;
            let densities =
                local_density(&model_hs_ref, &report, params.density_radius, params.density_cap)?;
            report.densities = Some(densities);
            Some(report)
        } else {
            None
        };

        Ok(LooContext {
            corpus,
            groups,
            params,
            config_hs,
            config_neg,
            vocab_ref,
            coding_ref,
            ref_table_hs,
            ref_table_neg,
            ref_cluster,
            seeds,
            sample_clamped,
            control_overlap,
            stats,
        })
    }

    /// The omitted-session indices: distinct draws without replacement
    /// from the selection seed's stream, reported in draw order.
    pub fn selected_indices(&self) -> Vec<usize> {
        let mut rng =
            DeterministicRng::for_stream(self.params.selection_seed, stream::SELECTION, 0);
        let n = self.corpus.len();
        let mut indices: Vec<usize> = (0..n).collect();
        for i in 0..self.params.n_subsamples {
            let j = i + rng.next_range((n - i) as u64) as usize;
            indices.swap(i, j);
        }
        indices.truncate(self.params.n_subsamples);
        indices
    }

    pub fn reference_coding(&self) -> &HuffmanCoding {
        &self.coding_ref
    }

    pub fn reference_n_clusters(&self) -> Option<usize> {
        self.ref_cluster.as_ref().map(|r| r.n_clusters)
    }

    /// One full record pipeline: derive the corpus, rebuild the
    /// vocabulary and coding, train, measure.
    pub fn process_record(&self, session_index: usize) -> Result<LooRecord> {
        let session = self
            .corpus
            .sessions
            .iter()
            .find(|s| s.index == session_index)
            .ok_or(Error::OutOfRange { index: session_index, len: self.corpus.len() })?;
        let reduced = omit_session(self.corpus, session_index)?;
        let vocab = match build_vocabulary(&reduced, self.config_hs.min_count, self.groups) {
            Ok(v) => v,
            Err(e @ (Error::EmptyVocabulary | Error::EmptyCorpus)) => {
                return Ok(LooRecord {
                    session_index,
                    features: None,
                    outcomes: None,
                    same_tree: None,
                    failed: Some(e.to_string()),
                })
            }
            Err(e) => return Err(e),
        };

        let coding = if self.params.fixed_tree {
            self.coding_ref.restrict_to(&vocab)?
        } else {
            build_coding(&vocab)?
        };
        let features = extract_features(
            &self.vocab_ref,
            session,
            &self.coding_ref,
            &coding,
            self.config_hs.min_count,
            self.params.freq_agg,
        );
        let same_tree = diff_codings(&self.coding_ref, &coding).identical();

        let mut config_hs = self.config_hs.clone();
        if self.params.fixed_tree {
            config_hs.fixed_coding = Some(self.coding_ref.clone());
        }
        let model_hs = train(&reduced, &vocab, &config_hs)?;
        if let Some(dir) = &self.params.keep_models {
            fs::create_dir_all(dir)?;
            crate::trainer::save_model(&model_hs, &dir.join(format!("omit{session_index}.hs.vec")))?;
        }

        let surviving: Vec<_> = self
            .seeds
            .seeds
            .iter()
            .filter(|s| vocab.position(s).is_some())
            .cloned()
            .collect();
        let table_hs = neighbor_table(&model_hs, &surviving, self.params.k)?;
        let overlap_hs = overlap_from_tables(&self.ref_table_hs, &table_hs)?;

        let (overlap_neg, dropped_neg) = match &self.ref_table_neg {
            Some(ref_table) => {
                let model_neg = train(&reduced, &vocab, &self.config_neg)?;
                if let Some(dir) = &self.params.keep_models {
                    crate::trainer::save_model(
                        &model_neg,
                        &dir.join(format!("omit{session_index}.neg.vec")),
                    )?;
                }
                let table = neighbor_table(&model_neg, &surviving, self.params.k)?;
                let r = overlap_from_tables(ref_table, &table)?;
                (Some(r.mean), r.dropped_seeds)
            }
            None => (None, 0),
        };

        let (delta, mean_density) = match &self.ref_cluster {
            Some(ref_cluster) => {
                let mut report = dbscan(&model_hs, self.params.eps_sim, self.params.min_neighbors)?;
                let densities = local_density(
                    &model_hs,
                    &report,
                    self.params.density_radius,
                    self.params.density_cap,
                )?;
                let mean_density = if densities.is_empty() {
                    None
                } else {
                    Some(densities.iter().sum::<usize>() as f64 / densities.len() as f64)
                };
                report.densities = Some(densities);
                (Some(cluster_delta(ref_cluster, &report)), mean_density)
            }
            None => (None, None),
        };

        if self.params.verbose {
            eprintln!(
                "record {session_index}: overlap_hs {:.4}, huffman changes log10 {:.3}",
                overlap_hs.mean, features.huffman_changes_log10
            );
        }
        Ok(LooRecord {
            session_index,
            outcomes: Some(LooOutcomes {
                overlap_hs: overlap_hs.mean,
                overlap_neg,
                delta_n_clusters: delta.map(|d| d.delta_n_clusters),
                delta_noise: delta.map(|d| d.delta_noise),
                delta_mean_purity: delta.and_then(|d| d.delta_mean_purity),
                mean_local_density: mean_density,
                dropped_seeds_hs: overlap_hs.dropped_seeds,
                dropped_seeds_neg: dropped_neg,
            }),
            features: Some(features),
            same_tree: Some(same_tree),
            failed: None,
        })
    }

    /// Sort records into session-index order and attach the reference
    /// summaries.
    pub fn assemble(&self, mut records: Vec<LooRecord>) -> LooReport {
        records.sort_unstable_by_key(|r| r.session_index);
        let same_tree_count = records.iter().filter(|r| r.same_tree == Some(true)).count();
        let n_failed = records.iter().filter(|r| r.failed.is_some()).count();
        LooReport {
            params: self.params.clone(),
            config_hs: self.config_hs.clone(),
            config_neg: self.params.include_neg.then(|| self.config_neg.clone()),
            corpus_stats: self.stats.clone(),
            reference_clusters: self.ref_cluster.as_ref().map(|r| ClusterSummary {
                n_clusters: r.n_clusters,
                noise_count: r.noise_count,
                mean_purity: r.mean_purity,
                mean_local_density: r.densities.as_ref().and_then(|d| {
                    if d.is_empty() {
                        None
                    } else {
                        Some(d.iter().sum::<usize>() as f64 / d.len() as f64)
                    }
                }),
            }),
            seed_info: SeedInfo {
                n_seeds: self.seeds.seeds.len(),
                pool_used: self.seeds.pool_used,
                pool_clamped: self.seeds.pool_clamped,
                sample_clamped: self.sample_clamped,
            },
            control_overlap: self.control_overlap,
            records,
            same_tree_count,
            n_failed,
        }
    }
}

/// Run the whole experiment. See [`LooContext`] for the pieces.
pub fn run_loo(
    corpus: &SessionCorpus,
    groups: Option<&GroupCatalog>,
    config_hs: TrainConfig,
    config_neg: TrainConfig,
    params: LooParams,
) -> Result<LooReport> {
    let parallel = params.parallel.max(1);
    let ctx = LooContext::prepare(corpus, groups, config_hs, config_neg, params)?;
    let indices = ctx.selected_indices();
    let records: Vec<LooRecord> = if parallel == 1 {
        indices.iter().map(|&i| ctx.process_record(i)).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallel)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
        pool.install(|| {
            indices.par_iter().map(|&i| ctx.process_record(i)).collect::<Result<_>>()
        })?
    };
    Ok(ctx.assemble(records))
}

/// Features of one omitted session, relative to the reference corpus.
pub fn extract_features(
    vocab_ref: &Vocabulary,
    session: &Session,
    coding_ref: &HuffmanCoding,
    coding_new: &HuffmanCoding,
    min_count: u64,
    agg: FreqAggregation,
) -> LooFeatures {
    let mut session_counts: std::collections::HashMap<&str, u64> = std::collections::HashMap::new();
    for tok in &session.tokens {
        *session_counts.entry(tok.as_str()).or_insert(0) += 1;
    }
    let mut retained_freqs: Vec<u64> = Vec::new();
    let mut min_count_flag = 0u8;
    for (tok, &in_session) in &session_counts {
        if let Some(pos) = vocab_ref.position_str(tok) {
            let freq = vocab_ref.entry(pos).frequency;
            retained_freqs.push(freq);
            if freq < min_count + in_session {
                min_count_flag = 1;
            }
        }
    }
    retained_freqs.sort_unstable();
    let agg_value = if retained_freqs.is_empty() {
        1.0
    } else {
        match agg {
            FreqAggregation::Min => retained_freqs[0] as f64,
            FreqAggregation::Mean => {
                retained_freqs.iter().sum::<u64>() as f64 / retained_freqs.len() as f64
            }
            FreqAggregation::Median => {
                let n = retained_freqs.len();
                if n % 2 == 1 {
                    retained_freqs[n / 2] as f64
                } else {
                    (retained_freqs[n / 2 - 1] + retained_freqs[n / 2]) as f64 / 2.0
                }
            }
        }
    };
    let diff = diff_codings(coding_ref, coding_new);
    LooFeatures {
        length: session.tokens.len(),
        freq_agg: agg_value.log10(),
        rank: session.index,
        min_count_flag,
        huffman_changes_log10: (1.0 + diff.changed_types as f64).log10(),
        max_hamming: diff.max_hamming,
    }
}

/// Records usable for regression: successful, with the chosen overlap.
fn regression_rows(report: &LooReport, target: OverlapTarget) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rows = Vec::new();
    let mut response = Vec::new();
    for record in &report.records {
        let (Some(features), Some(outcomes)) = (&record.features, &record.outcomes) else {
            continue;
        };
        let y = match target {
            OverlapTarget::Hs => Some(outcomes.overlap_hs),
            OverlapTarget::Neg => outcomes.overlap_neg,
        };
        if let Some(y) = y {
            rows.push(features.as_row());
            response.push(y);
        }
    }
    (rows, response)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverlapTarget {
    Hs,
    Neg,
}

/// OLS of the chosen overlap on the six features over all successful
/// records; needs at least 20 of them to say anything.
pub fn regress_stability(report: &LooReport, target: OverlapTarget) -> Result<RegressionFit> {
    let (rows, response) = regression_rows(report, target);
    if rows.len() < 20 {
        return Err(Error::TooFewObservations { n: rows.len(), needed: 20 });
    }
    let names: Vec<String> = FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
    stats::ols(&rows, &response, &names)
}

/// Single-feature fits, in feature order.
pub fn univariate_fits(
    report: &LooReport,
    target: OverlapTarget,
) -> Vec<(String, Result<RegressionFit>)> {
    let (rows, response) = regression_rows(report, target);
    FEATURE_NAMES
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let column: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[j]]).collect();
            let fit = if column.len() < 20 {
                Err(Error::TooFewObservations { n: column.len(), needed: 20 })
            } else {
                stats::ols(&column, &response, &[name.to_string()])
            };
            (name.to_string(), fit)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct HistogramBin {
    pub n_clusters: i64,
    pub count: usize,
    pub is_reference: bool,
}

/// Cluster-count histogram over all HS models including the reference,
/// bins of width one from min to max; the reference bin is flagged.
pub fn cluster_histogram(report: &LooReport) -> Result<Vec<HistogramBin>> {
    let reference = report
        .reference_clusters
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("topology outcomes missing".into()))?;
    let ref_n = reference.n_clusters as i64;
    let mut values = vec![ref_n];
    for record in &report.records {
        if let Some(outcomes) = &record.outcomes {
            if let Some(delta) = outcomes.delta_n_clusters {
                values.push(ref_n + delta);
            }
        }
    }
    let min = *values.iter().min().expect("reference always present");
    let max = *values.iter().max().expect("reference always present");
    Ok((min..=max)
        .map(|v| HistogramBin {
            n_clusters: v,
            count: values.iter().filter(|&&x| x == v).count(),
            is_reference: v == ref_n,
        })
        .collect())
}

/// Correlation between per-record mean local density and HS overlap.
pub fn density_overlap_correlation(report: &LooReport) -> Result<Correlations> {
    let mut density = Vec::new();
    let mut overlap = Vec::new();
    for record in &report.records {
        if let Some(outcomes) = &record.outcomes {
            if let Some(d) = outcomes.mean_local_density {
                density.push(d);
                overlap.push(outcomes.overlap_hs);
            }
        }
    }
    if density.len() < 3 {
        return Err(Error::TooFewObservations { n: density.len(), needed: 3 });
    }
    stats::correlations(&density, &overlap)
}

fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn fmt_opt_i64(v: Option<i64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `records.csv`: one row per record, session-index order.
pub fn records_csv(report: &LooReport) -> String {
    let mut out = String::from(
        "session_index,length,freq_agg,rank,min_count_flag,huffman_changes_log10,max_hamming,\
         same_tree,overlap_hs,overlap_neg,delta_n_clusters,delta_noise,delta_mean_purity,\
         mean_local_density,dropped_seeds_hs,dropped_seeds_neg,failed\n",
    );
    for r in &report.records {
        let f = r.features.as_ref();
        let o = r.outcomes.as_ref();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.session_index,
            f.map(|f| f.length.to_string()).unwrap_or_default(),
            f.map(|f| format!("{:.6}", f.freq_agg)).unwrap_or_default(),
            f.map(|f| f.rank.to_string()).unwrap_or_default(),
            f.map(|f| f.min_count_flag.to_string()).unwrap_or_default(),
            f.map(|f| format!("{:.6}", f.huffman_changes_log10)).unwrap_or_default(),
            f.map(|f| f.max_hamming.to_string()).unwrap_or_default(),
            r.same_tree.map(|b| (b as u8).to_string()).unwrap_or_default(),
            fmt_opt_f64(o.map(|o| o.overlap_hs)),
            fmt_opt_f64(o.and_then(|o| o.overlap_neg)),
            fmt_opt_i64(o.and_then(|o| o.delta_n_clusters)),
            fmt_opt_i64(o.and_then(|o| o.delta_noise)),
            fmt_opt_f64(o.and_then(|o| o.delta_mean_purity)),
            fmt_opt_f64(o.and_then(|o| o.mean_local_density)),
            o.map(|o| o.dropped_seeds_hs.to_string()).unwrap_or_default(),
            o.map(|o| o.dropped_seeds_neg.to_string()).unwrap_or_default(),
            r.failed.as_deref().unwrap_or("").replace([',', '\n'], ";"),
        );
    }
    out
}

/// `histogram.csv`.
pub fn histogram_csv(report: &LooReport) -> String {
    let mut out = String::from("n_clusters,count,is_reference\n");
    if let Ok(bins) = cluster_histogram(report) {
        for b in bins {
            let _ = writeln!(out, "{},{},{}", b.n_clusters, b.count, b.is_reference as u8);
        }
    }
    out
}

/// Paper-style regression tables: full fit on raw features, full fit
/// on z-scored features, univariate fits. Fit errors are written out
/// instead of a table.
pub fn regression_tables(report: &LooReport, target: OverlapTarget) -> String {
    let response = match target {
        OverlapTarget::Hs => "overlap_hs",
        OverlapTarget::Neg => "overlap_neg",
    };
    let mut out = String::new();
    let _ = writeln!(out, "== Full fit (raw features) ==");
    match regress_stability(report, target) {
        Ok(fit) => out.push_str(&fit.to_table(response)),
        Err(e) => {
            let _ = writeln!(out, "not available: {e}");
        }
    }
    let _ = writeln!(out, "\n== Full fit (z-scored features) ==");
    let (rows, y) = regression_rows(report, target);
    let names: Vec<String> = FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
    let zfit = if rows.len() < 20 {
        Err(Error::TooFewObservations { n: rows.len(), needed: 20 })
    } else {
        stats::zscore_columns(&rows, &names).and_then(|z| stats::ols(&z, &y, &names))
    };
    match zfit {
        Ok(fit) => out.push_str(&fit.to_table(response)),
        Err(e) => {
            let _ = writeln!(out, "not available: {e}");
        }
    }
    let _ = writeln!(out, "\n== Univariate fits (raw) ==");
    for (name, fit) in univariate_fits(report, target) {
        let _ = writeln!(out, "-- {name} --");
        match fit {
            Ok(fit) => out.push_str(&fit.to_table(response)),
            Err(e) => {
                let _ = writeln!(out, "not available: {e}");
            }
        }
    }
    out
}

#[derive(Serialize)]
struct SummaryJson<'a> {
    params: &'a LooParams,
    config_hs: &'a TrainConfig,
    config_neg: &'a Option<TrainConfig>,
    corpus_stats: &'a CorpusStats,
    reference_clusters: &'a Option<ClusterSummary>,
    seed_info: &'a SeedInfo,
    control_overlap: f64,
    same_tree_count: usize,
    n_records: usize,
    n_failed: usize,
    overlap_hs: Option<stats::Summary>,
    overlap_neg: Option<stats::Summary>,
    adjusted_r2_hs: Option<f64>,
    adjusted_r2_neg: Option<f64>,
    density_overlap_pearson: Option<f64>,
    density_overlap_spearman: Option<f64>,
}

/// `summary.json`.
pub fn summary_json(report: &LooReport) -> String {
    let overlap_values = |pick: &dyn Fn(&LooOutcomes) -> Option<f64>| -> Vec<f64> {
        report
            .records
            .iter()
            .filter_map(|r| r.outcomes.as_ref().and_then(pick))
            .collect()
    };
    let hs = overlap_values(&|o| Some(o.overlap_hs));
    let neg = overlap_values(&|o| o.overlap_neg);
    let density = density_overlap_correlation(report).ok();
    let summary = SummaryJson {
        params: &report.params,
        config_hs: &report.config_hs,
        config_neg: &report.config_neg,
        corpus_stats: &report.corpus_stats,
        reference_clusters: &report.reference_clusters,
        seed_info: &report.seed_info,
        control_overlap: report.control_overlap,
        same_tree_count: report.same_tree_count,
        n_records: report.records.len(),
        n_failed: report.n_failed,
        overlap_hs: stats::summarize(&hs).ok(),
        overlap_neg: stats::summarize(&neg).ok(),
        adjusted_r2_hs: regress_stability(report, OverlapTarget::Hs).ok().map(|f| f.adjusted_r2),
        adjusted_r2_neg: regress_stability(report, OverlapTarget::Neg).ok().map(|f| f.adjusted_r2),
        density_overlap_pearson: density.map(|c| c.pearson),
        density_overlap_spearman: density.map(|c| c.spearman),
    };
    serde_json::to_string_pretty(&summary).expect("summary serializes")
}

/// Persist the standard report files under `dir`.
pub fn write_report(dir: &Path, report: &LooReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("records.csv"), records_csv(report))?;
    fs::write(dir.join("regression_hs.txt"), regression_tables(report, OverlapTarget::Hs))?;
    fs::write(dir.join("regression_neg.txt"), regression_tables(report, OverlapTarget::Neg))?;
    fs::write(dir.join("histogram.csv"), histogram_csv(report))?;
    fs::write(dir.join("summary.json"), summary_json(report))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, SyntheticSpec};

    fn tiny_setup() -> (SessionCorpus, GroupCatalog) {
        let spec = SyntheticSpec {
            n_groups: 4,
            products_per_group: 10,
            zipf_exponent: 1.0,
            n_sessions: 300,
            mean_session_length: 5.0,
            within_group_bias: 0.6,
            seed: 31,
        };
        generate_synthetic(&spec).unwrap()
    }

    fn tiny_configs() -> (TrainConfig, TrainConfig) {
        let mut hs = TrainConfig::new(TrainMode::Hs);
        hs.dims = 16;
        hs.window = 3;
        hs.iterations = 2;
        hs.min_count = 2;
        hs.fixed_window = true;
        hs.seed = 5;
        let mut neg = hs.clone();
        neg.mode = TrainMode::Neg;
        neg.negatives = 3;
        (hs, neg)
    }

    fn tiny_params(n: usize) -> LooParams {
        LooParams {
            n_subsamples: n,
            selection_seed: 9,
            k: 5,
            seed_pool: 20,
            seed_sample: 10,
            min_neighbors: 3,
            eps_sim: 0.6,
            ..LooParams::default()
        }
    }

    #[test]
    fn zero_subsamples_still_reports_reference() {
        let (corpus, groups) = tiny_setup();
        let (hs, neg) = tiny_configs();
        let report = run_loo(&corpus, Some(&groups), hs, neg, tiny_params(0)).unwrap();
        assert!(report.records.is_empty());
        assert_eq!(report.control_overlap, 1.0);
        assert!(report.reference_clusters.is_some());
        assert_eq!(report.corpus_stats.n_sessions, 300);
    }

    #[test]
    fn fixed_tree_zeroes_huffman_features() {
        let (corpus, groups) = tiny_setup();
        let (hs, neg) = tiny_configs();
        let mut params = tiny_params(4);
        params.fixed_tree = true;
        params.include_neg = false;
        let report = run_loo(&corpus, Some(&groups), hs, neg, params).unwrap();
        for r in &report.records {
            let f = r.features.as_ref().unwrap();
            assert_eq!(f.huffman_changes_log10, 0.0);
            assert_eq!(f.max_hamming, 0);
        }
    }

    #[test]
    fn records_sorted_and_deterministic() {
        let (corpus, groups) = tiny_setup();
        let (hs, neg) = tiny_configs();
        for fixed_tree in [false, true] {
            let mut params = tiny_params(5);
            params.fixed_tree = fixed_tree;
            let r1 =
                run_loo(&corpus, Some(&groups), hs.clone(), neg.clone(), params.clone()).unwrap();
            let r2 = run_loo(&corpus, Some(&groups), hs.clone(), neg.clone(), params).unwrap();
            assert_eq!(records_csv(&r1), records_csv(&r2));
            let indices: Vec<usize> = r1.records.iter().map(|r| r.session_index).collect();
            let mut sorted = indices.clone();
            sorted.sort_unstable();
            assert_eq!(indices, sorted);
        }
    }

    #[test]
    fn parallel_matches_sequential() {
        let (corpus, groups) = tiny_setup();
        let (hs, neg) = tiny_configs();
        let mut params = tiny_params(4);
        params.include_neg = false;
        let seq = run_loo(&corpus, Some(&groups), hs.clone(), neg.clone(), params.clone()).unwrap();
        params.parallel = 2;
        let par = run_loo(&corpus, Some(&groups), hs, neg, params).unwrap();
        assert_eq!(records_csv(&seq), records_csv(&par));
    }

    #[test]
    fn same_tree_count_matches_zero_change_records() {
        let (corpus, groups) = tiny_setup();
        let (hs, neg) = tiny_configs();
        let mut params = tiny_params(8);
        params.include_neg = false;
        params.topology = false;
        let report = run_loo(&corpus, Some(&groups), hs, neg, params).unwrap();
        let zero_changes = report
            .records
            .iter()
            .filter(|r| {
                r.features.as_ref().map(|f| f.huffman_changes_log10 == 0.0).unwrap_or(false)
            })
            .count();
        assert_eq!(report.same_tree_count, zero_changes);
    }

    #[test]
    fn feature_extraction_rules() {
        let corpus = crate::corpus::load_corpus("a a a b b\na b c c\nc a b a\n", "t").unwrap();
        let vocab = build_vocabulary(&corpus, 2, None).unwrap(); // a:6 b:4 c:3
        let coding = build_coding(&vocab).unwrap();
        // session 1 = "a b c c": omitting it drops c from 3 to 1 < 2
        let session = &corpus.sessions[1];
        let f = extract_features(&vocab, session, &coding, &coding, 2, FreqAggregation::Min);
        assert_eq!(f.length, 4);
        assert_eq!(f.rank, 1);
        assert_eq!(f.min_count_flag, 1);
        assert_eq!(f.huffman_changes_log10, 0.0);
        assert_eq!(f.max_hamming, 0);
        assert!((f.freq_agg - 3f64.log10()).abs() < 1e-12);
        // session 2 = "c a b a": c drops from 3 to 2, stays
        let f2 = extract_features(
            &vocab,
            &corpus.sessions[2],
            &coding,
            &coding,
            2,
            FreqAggregation::Min,
        );
        assert_eq!(f2.min_count_flag, 0);
    }

    #[test]
    fn constructed_regression_recovers_coefficient() {
        // overlap = 1 − 0.01·huffman_changes_log10 exactly
        let template = LooFeatures {
            length: 5,
            freq_agg: 1.0,
            rank: 0,
            min_count_flag: 0,
            huffman_changes_log10: 0.0,
            max_hamming: 0,
        };
        let records: Vec<LooRecord> = (0..30)
            .map(|i| {
                let mut f = template.clone();
                f.length = 3 + (i % 7);
                f.rank = i;
                f.freq_agg = 1.0 + (i % 5) as f64 * 0.3;
                f.min_count_flag = (i % 2) as u8;
                f.huffman_changes_log10 = (i as f64 * 0.17) % 2.0;
                f.max_hamming = i % 4;
                LooRecord {
                    session_index: i,
                    outcomes: Some(LooOutcomes {
                        overlap_hs: 1.0 - 0.01 * f.huffman_changes_log10,
                        overlap_neg: None,
                        delta_n_clusters: None,
                        delta_noise: None,
                        delta_mean_purity: None,
                        mean_local_density: None,
                        dropped_seeds_hs: 0,
                        dropped_seeds_neg: 0,
                    }),
                    features: Some(f),
                    same_tree: Some(false),
                    failed: None,
                }
            })
            .collect();
        let report = LooReport {
            params: LooParams::default(),
            config_hs: TrainConfig::new(TrainMode::Hs),
            config_neg: None,
            corpus_stats: CorpusStats {
                n_sessions: 30,
                n_distinct_types: 0,
                n_retained_types: 0,
                mean_session_length: 0.0,
                mean_groups_per_session: 0.0,
            },
            reference_clusters: None,
            seed_info: SeedInfo {
                n_seeds: 0,
                pool_used: 0,
                pool_clamped: false,
                sample_clamped: false,
            },
            control_overlap: 1.0,
            records,
            same_tree_count: 0,
            n_failed: 0,
        };
        let fit = regress_stability(&report, OverlapTarget::Hs).unwrap();
        let pos = fit.feature_names.iter().position(|n| n == "HuffmanChanges").unwrap();
        assert!((fit.coefficients[pos] + 0.01).abs() < 1e-10);
        assert!((fit.r2 - 1.0).abs() < 1e-10);
        // NEG target has no outcomes at all
        assert!(matches!(
            regress_stability(&report, OverlapTarget::Neg),
            Err(Error::TooFewObservations { .. })
        ));

        // identical overlaps propagate the zero-variance error
        let mut flat = report;
        for r in flat.records.iter_mut() {
            r.outcomes.as_mut().unwrap().overlap_hs = 0.5;
        }
        assert!(matches!(
            regress_stability(&flat, OverlapTarget::Hs),
            Err(Error::ZeroVariance(_))
        ));
    }

    #[test]
    fn histogram_bins_and_reference_flag() {
        let outcomes = |delta: i64| LooOutcomes {
            overlap_hs: 0.9,
            overlap_neg: None,
            delta_n_clusters: Some(delta),
            delta_noise: Some(0),
            delta_mean_purity: Some(0.0),
            mean_local_density: None,
            dropped_seeds_hs: 0,
            dropped_seeds_neg: 0,
        };
        // counts {10, 10, 12} with reference 12
        let report = LooReport {
            params: LooParams::default(),
            config_hs: TrainConfig::new(TrainMode::Hs),
            config_neg: None,
            corpus_stats: CorpusStats {
                n_sessions: 2,
                n_distinct_types: 0,
                n_retained_types: 0,
                mean_session_length: 0.0,
                mean_groups_per_session: 0.0,
            },
            reference_clusters: Some(ClusterSummary {
                n_clusters: 12,
                noise_count: 0,
                mean_purity: Some(1.0),
                mean_local_density: None,
            }),
            seed_info: SeedInfo {
                n_seeds: 0,
                pool_used: 0,
                pool_clamped: false,
                sample_clamped: false,
            },
            control_overlap: 1.0,
            records: vec![
                LooRecord {
                    session_index: 0,
                    features: None,
                    outcomes: Some(outcomes(-2)),
                    same_tree: Some(false),
                    failed: None,
                },
                LooRecord {
                    session_index: 1,
                    features: None,
                    outcomes: Some(outcomes(-2)),
                    same_tree: Some(false),
                    failed: None,
                },
            ],
            same_tree_count: 0,
            n_failed: 0,
        };
        let bins = cluster_histogram(&report).unwrap();
        assert_eq!(bins.len(), 3); // 10, 11, 12
        assert_eq!(bins[0].count, 2);
        assert_eq!(bins[1].count, 0);
        assert_eq!(bins[2].count, 1);
        assert!(bins[2].is_reference);
        assert!(!bins[0].is_reference);
    }

    #[test]
    fn density_correlation_monotone_construction() {
        let mut records = Vec::new();
        for i in 0..10 {
            records.push(LooRecord {
                session_index: i,
                features: None,
                outcomes: Some(LooOutcomes {
                    overlap_hs: 0.5 + i as f64 * 0.04,
                    overlap_neg: None,
                    delta_n_clusters: None,
                    delta_noise: None,
                    delta_mean_purity: None,
                    // density strictly decreasing in overlap
                    mean_local_density: Some(100.0 - i as f64 * 7.0),
                    dropped_seeds_hs: 0,
                    dropped_seeds_neg: 0,
                }),
                same_tree: Some(false),
                failed: None,
            });
        }
        let report = LooReport {
            params: LooParams::default(),
            config_hs: TrainConfig::new(TrainMode::Hs),
            config_neg: None,
            corpus_stats: CorpusStats {
                n_sessions: 10,
                n_distinct_types: 0,
                n_retained_types: 0,
                mean_session_length: 0.0,
                mean_groups_per_session: 0.0,
            },
            reference_clusters: None,
            seed_info: SeedInfo {
                n_seeds: 0,
                pool_used: 0,
                pool_clamped: false,
                sample_clamped: false,
            },
            control_overlap: 1.0,
            records,
            same_tree_count: 0,
            n_failed: 0,
        };
        let c = density_overlap_correlation(&report).unwrap();
        assert!((c.spearman + 1.0).abs() < 1e-12);

        // constant densities propagate the zero-variance error
        let mut flat = report;
        for r in flat.records.iter_mut() {
            r.outcomes.as_mut().unwrap().mean_local_density = Some(42.0);
        }
        assert!(matches!(density_overlap_correlation(&flat), Err(Error::ZeroVariance(_))));
    }
}
