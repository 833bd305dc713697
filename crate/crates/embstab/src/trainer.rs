//! Skip-gram training with Hierarchical Softmax or Negative Sampling.
//!
//! With `workers = 1` the trained model is a pure function of
//! (corpus bytes, config): all arithmetic is double precision, the
//! sigmoid is exact by default, and every random decision comes from a
//! tagged sub-stream of the seeded generator. The documented draw
//! order per session is
//!
//! 1. one subsampling decision per retained token, in position order
//!    (only when `subsample > 0`);
//! 2. one window-radius draw per surviving center token, in position
//!    order (only when `fixed_window` is off);
//! 3. noise draws per trained pair, in context order (NEG only).
//!
//! Each step owns its sub-stream, so turning a step off never shifts
//! the draws of the others.
//!
//! With `workers > 1` the corpus is split into contiguous session
//! ranges and all workers update the same weight matrices without
//! locking; results are explicitly non-deterministic, mirroring the
//! classic lock-free trainer behavior. The only guarantee kept is
//! vector finiteness.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::Serialize;

use crate::corpus::{ProductId, SessionCorpus, VocabEntry, Vocabulary};
use crate::error::{Error, Result};
use crate::huffman::{build_coding, HuffmanCoding, TypeCode};
use crate::rng::{stream, DeterministicRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    Hs,
    Neg,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub dims: usize,
    pub window: usize,
    /// true: the context offset is exactly `window`; false: drawn
    /// uniformly from 1..=window per center token.
    pub fixed_window: bool,
    pub iterations: usize,
    pub min_count: u64,
    /// Subsampling threshold t; 0 switches subsampling off.
    pub subsample: f64,
    /// Noise samples per positive pair (NEG only).
    pub negatives: usize,
    /// Smoothing power of the noise distribution D ∝ frequency^α.
    pub noise_exponent: f64,
    pub alpha0: f64,
    pub alpha_min: f64,
    pub seed: u64,
    pub workers: usize,
    /// Fractional digits written by the model serializer.
    pub round_digits: usize,
    /// Approximate the sigmoid with the classic 1000-slot lookup table
    /// instead of exact exp. Off by default.
    pub sigmoid_table: bool,
    /// Externally fixed Huffman coding (HS only); used verbatim
    /// instead of building one from the vocabulary.
    #[serde(skip_serializing)]
    pub fixed_coding: Option<HuffmanCoding>,
}

impl TrainConfig {
    pub fn new(mode: TrainMode) -> Self {
        TrainConfig {
            mode,
            dims: 100,
            window: 5,
            fixed_window: false,
            iterations: 10,
            min_count: 5,
            subsample: 0.0,
            negatives: 5,
            noise_exponent: 0.75,
            alpha0: 0.025,
            alpha_min: 0.025 * 1e-4,
            seed: 1,
            workers: 1,
            round_digits: 4,
            sigmoid_table: false,
            fixed_coding: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dims == 0 {
            return Err(Error::InvalidParameter("dims must be >= 1".into()));
        }
        if self.window == 0 {
            return Err(Error::InvalidParameter("window must be >= 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::InvalidParameter("workers must be >= 1".into()));
        }
        if self.min_count == 0 {
            return Err(Error::InvalidParameter("min_count must be >= 1".into()));
        }
        if !(self.subsample >= 0.0) {
            return Err(Error::InvalidParameter("subsample must be >= 0".into()));
        }
        if !(self.noise_exponent >= 0.0) {
            return Err(Error::InvalidParameter("noise exponent must be >= 0".into()));
        }
        if self.mode == TrainMode::Neg && self.negatives == 0 {
            return Err(Error::InvalidParameter("NEG requires at least one noise sample".into()));
        }
        if !(self.alpha0 > 0.0) || !(self.alpha_min >= 0.0) || self.alpha_min > self.alpha0 {
            return Err(Error::InvalidParameter("need 0 <= alpha_min <= alpha0, alpha0 > 0".into()));
        }
        if !(1..=12).contains(&self.round_digits) {
            return Err(Error::InvalidParameter("round_digits must be in 1..=12".into()));
        }
        Ok(())
    }
}

/// f64 matrix behind relaxed atomics, so lock-free multi-worker
/// updates are observable without undefined behavior. Single-worker
/// access degenerates to plain loads and stores.
struct SharedMatrix {
    data: Vec<AtomicU64>,
}

impl SharedMatrix {
    fn zeros(rows: usize, dims: usize) -> Self {
        let mut data = Vec::with_capacity(rows * dims);
        data.resize_with(rows * dims, || AtomicU64::new(0));
        SharedMatrix { data }
    }

    #[inline(always)]
    fn get(&self, i: usize) -> f64 {
        f64::from_bits(self.data[i].load(Ordering::Relaxed))
    }

    #[inline(always)]
    fn set(&self, i: usize, v: f64) {
        self.data[i].store(v.to_bits(), Ordering::Relaxed);
    }

    fn to_vec(&self) -> Vec<f64> {
        self.data.iter().map(|a| f64::from_bits(a.load(Ordering::Relaxed))).collect()
    }

    fn has_non_finite(&self) -> bool {
        self.data.iter().any(|a| !f64::from_bits(a.load(Ordering::Relaxed)).is_finite())
    }
}

#[inline(always)]
fn dot_cached(cached: &[f64], m: &SharedMatrix, off: usize) -> f64 {
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    let mut s3 = 0.0;
    let d = cached.len();
    let mut k = 0;
    while k + 4 <= d {
        s0 += cached[k] * m.get(off + k);
        s1 += cached[k + 1] * m.get(off + k + 1);
        s2 += cached[k + 2] * m.get(off + k + 2);
        s3 += cached[k + 3] * m.get(off + k + 3);
        k += 4;
    }
    while k < d {
        s0 += cached[k] * m.get(off + k);
        k += 1;
    }
    (s0 + s1) + (s2 + s3)
}

#[derive(Clone)]
enum Sigmoid {
    Exact,
    Table(std::sync::Arc<Vec<f64>>),
}

const TABLE_SIZE: usize = 1000;
const MAX_EXP: f64 = 6.0;

impl Sigmoid {
    fn new(table: bool) -> Self {
        if !table {
            return Sigmoid::Exact;
        }
        let values = (0..TABLE_SIZE)
            .map(|i| {
                let x = (i as f64 / TABLE_SIZE as f64 * 2.0 - 1.0) * MAX_EXP;
                sigmoid_exact(x)
            })
            .collect();
        Sigmoid::Table(std::sync::Arc::new(values))
    }

    #[inline(always)]
    fn eval(&self, x: f64) -> f64 {
        match self {
            Sigmoid::Exact => sigmoid_exact(x),
            Sigmoid::Table(t) => {
                if x >= MAX_EXP {
                    1.0
                } else if x <= -MAX_EXP {
                    0.0
                } else {
                    t[((x + MAX_EXP) / (2.0 * MAX_EXP) * TABLE_SIZE as f64) as usize]
                }
            }
        }
    }
}

/// Numerically stable logistic function; uses exp only.
#[inline(always)]
pub fn sigmoid_exact(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Noise distribution D(type) ∝ frequency^α, realized as a cumulative
/// table with a fixed resolution of 10^8 slots: type i owns the slot
/// interval [boundary(i−1), boundary(i)), and a draw picks a slot
/// uniformly. Probabilities are exact up to the slot quantization.
pub struct NoiseTable {
    boundaries: Vec<u64>,
}

pub const NOISE_SLOTS: u64 = 100_000_000;

impl NoiseTable {
    pub fn new(vocab: &Vocabulary, exponent: f64) -> Self {
        let weights: Vec<f64> =
            vocab.entries().iter().map(|e| pow_frequency(e.frequency, exponent)).collect();
        let total: f64 = weights.iter().sum();
        let mut boundaries = Vec::with_capacity(weights.len());
        let mut cum = 0.0;
        for w in &weights {
            cum += w;
            boundaries.push(((cum / total) * NOISE_SLOTS as f64).round() as u64);
        }
        // monotone, and the last boundary owns every remaining slot
        for i in 1..boundaries.len() {
            if boundaries[i] < boundaries[i - 1] {
                boundaries[i] = boundaries[i - 1];
            }
        }
        *boundaries.last_mut().expect("non-empty vocabulary") = NOISE_SLOTS;
        NoiseTable { boundaries }
    }

    /// Vocabulary position of the drawn type.
    pub fn sample(&self, rng: &mut DeterministicRng) -> usize {
        let slot = rng.next_range(NOISE_SLOTS);
        self.boundaries.partition_point(|&b| b <= slot)
    }
}

/// frequency^α. The common exponents are computed through sqrt, which
/// IEEE 754 rounds exactly, keeping the table bit-stable across
/// platforms; other exponents fall back to powf.
fn pow_frequency(freq: u64, exponent: f64) -> f64 {
    let f = freq as f64;
    if exponent == 0.0 {
        1.0
    } else if exponent == 1.0 {
        f
    } else if exponent == 0.5 {
        f.sqrt()
    } else if exponent == 0.75 {
        (f * f.sqrt()).sqrt()
    } else {
        f.powf(exponent)
    }
}

#[derive(Debug, Clone)]
pub struct EmbeddingModel {
    pub vocab: Vocabulary,
    pub dims: usize,
    pub mode: Option<TrainMode>,
    input: Vec<f64>,
    output: Vec<f64>,
    pub round_digits: usize,
    pub config_echo: Option<TrainConfig>,
}

impl EmbeddingModel {
    pub fn from_parts(
        vocab: Vocabulary,
        dims: usize,
        mode: Option<TrainMode>,
        input: Vec<f64>,
        output: Vec<f64>,
    ) -> Result<Self> {
        if input.len() != vocab.len() * dims {
            return Err(Error::InvalidParameter(format!(
                "input vector storage {} != vocab {} x dims {}",
                input.len(),
                vocab.len(),
                dims
            )));
        }
        if output.len() % dims.max(1) != 0 {
            return Err(Error::InvalidParameter("output storage not a multiple of dims".into()));
        }
        if input.iter().chain(&output).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite vector entries".into()));
        }
        Ok(EmbeddingModel {
            vocab,
            dims,
            mode,
            input,
            output,
            round_digits: 4,
            config_echo: None,
        })
    }

    pub fn input_row(&self, pos: usize) -> &[f64] {
        &self.input[pos * self.dims..(pos + 1) * self.dims]
    }

    pub fn output_row(&self, row: usize) -> &[f64] {
        &self.output[row * self.dims..(row + 1) * self.dims]
    }

    pub fn n_output_rows(&self) -> usize {
        if self.dims == 0 {
            0
        } else {
            self.output.len() / self.dims
        }
    }

    pub fn input_vectors(&self) -> &[f64] {
        &self.input
    }

    pub fn output_vectors(&self) -> &[f64] {
        &self.output
    }
}

/// Per-session token → vocabulary position, `None` for tokens below
/// the min-count threshold. Those stay in place: they separate the
/// surviving tokens by distance but are never trained.
fn index_sessions(corpus: &SessionCorpus, vocab: &Vocabulary) -> Vec<Vec<Option<u32>>> {
    corpus
        .sessions
        .iter()
        .map(|s| {
            s.tokens.iter().map(|t| vocab.position(t).map(|p| p as u32)).collect()
        })
        .collect()
}

/// Per-type probability of discarding a token under subsampling,
/// following the reference trainer's rule: with corpus share s and
/// threshold t the keep probability is sqrt(t/s) + t/s, clamped to 1.
fn discard_probabilities(vocab: &Vocabulary, t: f64) -> Vec<f64> {
    vocab
        .entries()
        .iter()
        .map(|e| {
            let share = e.frequency as f64 / vocab.total_tokens() as f64;
            let keep = (t / share).sqrt() + t / share;
            (1.0 - keep).clamp(0.0, 1.0)
        })
        .collect()
}

/// What to do with a trained (center, context) pair. Training applies
/// the gradient step; the pair log records the pair. Both run through
/// the identical iteration machinery, so the log is exactly the pair
/// stream the trainer consumes.
trait PairAction {
    fn apply(&mut self, center: u32, context: u32, alpha: f64);
}

struct UpdateAction<'a> {
    input: &'a SharedMatrix,
    output: &'a SharedMatrix,
    // HS: root-to-leaf paths per vocab position
    paths: Option<&'a [TypeCode]>,
    // NEG
    noise: Option<&'a NoiseTable>,
    noise_rng: DeterministicRng,
    negatives: usize,
    vocab_size: usize,
    sigmoid: Sigmoid,
    dims: usize,
    center_buf: Vec<f64>,
    neu1e: Vec<f64>,
}

impl PairAction for UpdateAction<'_> {
    #[inline]
    fn apply(&mut self, center: u32, context: u32, alpha: f64) {
        let dims = self.dims;
        let in_off = center as usize * dims;
        for k in 0..dims {
            self.center_buf[k] = self.input.get(in_off + k);
            self.neu1e[k] = 0.0;
        }
        if let Some(paths) = self.paths {
            let path = &paths[context as usize];
            for (&bit, &node) in path.code.iter().zip(&path.points) {
                let out_off = node as usize * dims;
                let x = dot_cached(&self.center_buf, self.output, out_off);
                let g = (1.0 - bit as f64 - self.sigmoid.eval(x)) * alpha;
                for k in 0..dims {
                    let o = self.output.get(out_off + k);
                    self.neu1e[k] += g * o;
                    self.output.set(out_off + k, o + g * self.center_buf[k]);
                }
            }
        } else {
            let noise = self.noise.expect("NEG mode has a noise table");
            for d in 0..=self.negatives {
                let (target, label) = if d == 0 {
                    (context as usize, 1.0)
                } else {
                    if self.vocab_size == 1 {
                        // no distinct noise type exists; skip the noise term
                        break;
                    }
                    // draws hitting the positive are rejected and redrawn;
                    // bounded so a table degenerate enough to own every
                    // slot cannot spin forever
                    let mut t = noise.sample(&mut self.noise_rng);
                    let mut attempts = 0;
                    while t == context as usize {
                        attempts += 1;
                        if attempts > 100 {
                            break;
                        }
                        t = noise.sample(&mut self.noise_rng);
                    }
                    if t == context as usize {
                        break;
                    }
                    (t, 0.0)
                };
                let out_off = target * dims;
                let x = dot_cached(&self.center_buf, self.output, out_off);
                let g = (label - self.sigmoid.eval(x)) * alpha;
                for k in 0..dims {
                    let o = self.output.get(out_off + k);
                    self.neu1e[k] += g * o;
                    self.output.set(out_off + k, o + g * self.center_buf[k]);
                }
            }
        }
        for k in 0..dims {
            self.input.set(in_off + k, self.center_buf[k] + self.neu1e[k]);
        }
    }
}

struct LogAction {
    pairs: Vec<(u32, u32)>,
}

impl PairAction for LogAction {
    fn apply(&mut self, center: u32, context: u32, _alpha: f64) {
        self.pairs.push((center, context));
    }
}

struct WorkerEnv<'a> {
    sessions: &'a [Vec<Option<u32>>],
    discard: Option<&'a [f64]>,
    config: &'a TrainConfig,
    total: u64,
    processed: &'a AtomicU64,
}

/// One worker's full pass: all epochs over its contiguous session range.
fn run_worker<A: PairAction>(
    env: &WorkerEnv<'_>,
    range: std::ops::Range<usize>,
    worker: usize,
    action: &mut A,
    mut after_epoch: impl FnMut(usize) -> Result<()>,
) -> Result<()> {
    let cfg = env.config;
    let mut sub_rng = DeterministicRng::for_stream(cfg.seed, stream::SUBSAMPLE, worker);
    let mut win_rng = DeterministicRng::for_stream(cfg.seed, stream::WINDOW, worker);
    let mut suppressed: Vec<bool> = Vec::new();

    for epoch in 0..cfg.iterations {
        for session in &env.sessions[range.clone()] {
            let retained = session.iter().filter(|t| t.is_some()).count() as u64;
            if retained == 0 {
                continue;
            }
            suppressed.clear();
            suppressed.resize(session.len(), false);
            if let Some(discard) = env.discard {
                for (p, tok) in session.iter().enumerate() {
                    if let Some(w) = tok {
                        suppressed[p] = sub_rng.next_f64() < discard[*w as usize];
                    }
                }
            }
            let base = env.processed.fetch_add(retained, Ordering::Relaxed);
            let mut seq = 0u64;
            for p in 0..session.len() {
                let Some(w) = session[p] else { continue };
                let token_number = base + seq;
                seq += 1;
                if suppressed[p] {
                    continue;
                }
                let alpha = (cfg.alpha0 * (1.0 - token_number as f64 / env.total as f64))
                    .max(cfg.alpha_min);
                let radius = if cfg.fixed_window {
                    cfg.window
                } else {
                    1 + win_rng.next_range(cfg.window as u64) as usize
                };
                let lo = p.saturating_sub(radius);
                let hi = (p + radius).min(session.len() - 1);
                for q in lo..=hi {
                    if q == p {
                        continue;
                    }
                    let Some(c) = session[q] else { continue };
                    if suppressed[q] {
                        continue;
                    }
                    action.apply(w, c, alpha);
                }
            }
        }
        after_epoch(epoch)?;
    }
    Ok(())
}

fn worker_ranges(n_sessions: usize, workers: usize) -> Vec<std::ops::Range<usize>> {
    (0..workers)
        .map(|w| (n_sessions * w / workers)..(n_sessions * (w + 1) / workers))
        .collect()
}

/// Train a skip-gram model. See the module docs for the determinism
/// contract.
pub fn train(
    corpus: &SessionCorpus,
    vocab: &Vocabulary,
    config: &TrainConfig,
) -> Result<EmbeddingModel> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if vocab.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    if vocab.min_count() != config.min_count {
        return Err(Error::InvalidParameter(format!(
            "vocabulary built with min_count {}, config says {}",
            vocab.min_count(),
            config.min_count
        )));
    }

    let n = vocab.len();
    let dims = config.dims;

    // HS tree: the fixed coding verbatim (restricted to this
    // vocabulary, erroring when it does not cover it) or a fresh one.
    let paths: Option<Vec<TypeCode>> = match (config.mode, &config.fixed_coding) {
        (TrainMode::Hs, Some(fixed)) => Some(
            fixed
                .restrict_to(vocab)?
                .entries()
                .iter()
                .map(|(_, tc)| tc.clone())
                .collect(),
        ),
        (TrainMode::Hs, None) => Some(
            build_coding(vocab)?.entries().iter().map(|(_, tc)| tc.clone()).collect(),
        ),
        (TrainMode::Neg, _) => None,
    };
    let n_out = match config.mode {
        TrainMode::Hs => match &config.fixed_coding {
            Some(fixed) => fixed.n_internal(),
            None => n - 1,
        },
        TrainMode::Neg => n,
    };

    let input = SharedMatrix::zeros(n, dims);
    let output = SharedMatrix::zeros(n_out.max(1), dims);
    // uniform in [-0.5/dims, +0.5/dims), drawn per type in canonical
    // order, per dimension
    let mut init_rng = DeterministicRng::for_stream(config.seed, stream::INIT, 0);
    for i in 0..n * dims {
        input.set(i, (init_rng.next_f64() - 0.5) / dims as f64);
    }
    for i in 0..n_out * dims {
        output.set(i, 0.0);
    }

    let sessions = index_sessions(corpus, vocab);
    let discard = if config.subsample > 0.0 {
        Some(discard_probabilities(vocab, config.subsample))
    } else {
        None
    };
    let noise = if config.mode == TrainMode::Neg {
        Some(NoiseTable::new(vocab, config.noise_exponent))
    } else {
        None
    };
    let sigmoid = Sigmoid::new(config.sigmoid_table);

    let total = (vocab.total_tokens() * config.iterations as u64).max(1);
    let processed = AtomicU64::new(0);
    let env = WorkerEnv {
        sessions: &sessions,
        discard: discard.as_deref(),
        config,
        total,
        processed: &processed,
    };

    let ranges = worker_ranges(sessions.len(), config.workers);
    let run_one = |worker: usize, range: std::ops::Range<usize>| -> Result<()> {
        let mut action = UpdateAction {
            input: &input,
            output: &output,
            paths: paths.as_deref(),
            noise: noise.as_ref(),
            noise_rng: DeterministicRng::for_stream(config.seed, stream::NOISE, worker),
            negatives: config.negatives,
            vocab_size: n,
            sigmoid: sigmoid.clone(),
            dims,
            center_buf: vec![0.0; dims],
            neu1e: vec![0.0; dims],
        };
        run_worker(&env, range, worker, &mut action, |epoch| {
            // fail fast on divergence instead of clamping; worker 0
            // owns the scan to avoid redundant passes
            if worker == 0 && (input.has_non_finite() || output.has_non_finite()) {
                Err(Error::NumericDivergence { epoch })
            } else {
                Ok(())
            }
        })
    };

    if config.workers == 1 {
        run_one(0, ranges[0].clone())?;
    } else {
        let results: Vec<Result<()>> = std::thread::scope(|scope| {
            let handles: Vec<_> = ranges
                .iter()
                .enumerate()
                .map(|(w, r)| {
                    let r = r.clone();
                    let run_one = &run_one;
                    scope.spawn(move || run_one(w, r))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        });
        for res in results {
            res?;
        }
    }

    let model = EmbeddingModel {
        vocab: vocab.clone(),
        dims,
        mode: Some(config.mode),
        input: input.to_vec(),
        output: output.to_vec()[..n_out * dims].to_vec(),
        round_digits: config.round_digits,
        config_echo: Some(config.clone()),
    };
    if model.input.iter().chain(&model.output).any(|v| !v.is_finite()) {
        return Err(Error::NumericDivergence { epoch: config.iterations.saturating_sub(1) });
    }
    Ok(model)
}

/// The exact multiset of (center, context) vocabulary positions the
/// trainer would feed through its update step, in order. Single-worker
/// only; shares the iteration machinery with [`train`].
pub fn trained_pairs(
    corpus: &SessionCorpus,
    vocab: &Vocabulary,
    config: &TrainConfig,
) -> Result<Vec<(u32, u32)>> {
    config.validate()?;
    if config.workers != 1 {
        return Err(Error::InvalidParameter("pair logging is single-worker only".into()));
    }
    let sessions = index_sessions(corpus, vocab);
    let discard = if config.subsample > 0.0 {
        Some(discard_probabilities(vocab, config.subsample))
    } else {
        None
    };
    let total = (vocab.total_tokens() * config.iterations as u64).max(1);
    let processed = AtomicU64::new(0);
    let env = WorkerEnv {
        sessions: &sessions,
        discard: discard.as_deref(),
        config,
        total,
        processed: &processed,
    };
    let mut action = LogAction { pairs: Vec::new() };
    run_worker(&env, 0..sessions.len(), 0, &mut action, |_| Ok(()))?;
    Ok(action.pairs)
}

/// Probability the HS tree assigns to `target` given `center`:
/// the product over the target's path of σ((1−2b)·⟨v_center, v'_node⟩).
pub fn hs_probability(
    model: &EmbeddingModel,
    coding: &HuffmanCoding,
    center: &ProductId,
    target: &ProductId,
) -> Result<f64> {
    if model.mode != Some(TrainMode::Hs) {
        return Err(Error::InvalidParameter("hs_probability needs an HS model".into()));
    }
    let c = model.vocab.position(center).ok_or_else(|| Error::UnknownType(center.to_string()))?;
    let tc = coding.get(target).ok_or_else(|| Error::UnknownType(target.to_string()))?;
    let center_row = model.input_row(c);
    let mut p = 1.0;
    for (&bit, &node) in tc.code.iter().zip(&tc.points) {
        let out = model.output_row(node as usize);
        let x: f64 = center_row.iter().zip(out).map(|(a, b)| a * b).sum();
        let sign = 1.0 - 2.0 * bit as f64;
        p *= sigmoid_exact(sign * x);
    }
    Ok(p)
}

/// Auxiliary input of [`pair_loss`] / [`pair_gradient`]: the HS tree,
/// or the explicit noise draw so the NEG loss is deterministic.
pub enum PairAux<'a> {
    Hs(&'a HuffmanCoding),
    Neg(&'a [ProductId]),
}

/// Skip-gram pair loss, exposed for gradient checking.
pub fn pair_loss(
    model: &EmbeddingModel,
    center: &ProductId,
    target: &ProductId,
    aux: &PairAux<'_>,
) -> Result<f64> {
    let c = model.vocab.position(center).ok_or_else(|| Error::UnknownType(center.to_string()))?;
    let t = model.vocab.position(target).ok_or_else(|| Error::UnknownType(target.to_string()))?;
    let center_row = model.input_row(c);
    match aux {
        PairAux::Hs(coding) => {
            let p = hs_probability(model, coding, center, target)?;
            Ok(-p.ln())
        }
        PairAux::Neg(noise) => {
            let mut loss = 0.0;
            let out = model.output_row(t);
            let x: f64 = center_row.iter().zip(out).map(|(a, b)| a * b).sum();
            loss -= sigmoid_exact(x).ln();
            for n in *noise {
                let np =
                    model.vocab.position(n).ok_or_else(|| Error::UnknownType(n.to_string()))?;
                let out = model.output_row(np);
                let x: f64 = center_row.iter().zip(out).map(|(a, b)| a * b).sum();
                loss -= sigmoid_exact(-x).ln();
            }
            Ok(loss)
        }
    }
}

/// Analytic gradient of [`pair_loss`] — the same per-node terms the
/// trainer's update step uses, with the opposite sign (the trainer
/// descends).
pub struct PairGradient {
    pub wrt_center: Vec<f64>,
    /// (output row, gradient) pairs; rows repeat if a noise draw does.
    pub wrt_outputs: Vec<(usize, Vec<f64>)>,
}

pub fn pair_gradient(
    model: &EmbeddingModel,
    center: &ProductId,
    target: &ProductId,
    aux: &PairAux<'_>,
) -> Result<PairGradient> {
    let c = model.vocab.position(center).ok_or_else(|| Error::UnknownType(center.to_string()))?;
    let t = model.vocab.position(target).ok_or_else(|| Error::UnknownType(target.to_string()))?;
    let center_row = model.input_row(c);
    let dims = model.dims;
    let mut wrt_center = vec![0.0; dims];
    let mut wrt_outputs = Vec::new();
    let mut accumulate = |row: usize, dl_dx: f64, wrt_center: &mut Vec<f64>| {
        let out = model.output_row(row);
        for k in 0..dims {
            wrt_center[k] += dl_dx * out[k];
        }
        let grad: Vec<f64> = center_row.iter().map(|v| dl_dx * v).collect();
        wrt_outputs.push((row, grad));
    };
    match aux {
        PairAux::Hs(coding) => {
            let tc = coding.get(target).ok_or_else(|| Error::UnknownType(target.to_string()))?;
            for (&bit, &node) in tc.code.iter().zip(&tc.points) {
                let out = model.output_row(node as usize);
                let x: f64 = center_row.iter().zip(out).map(|(a, b)| a * b).sum();
                // ∂/∂x of −log σ((1−2b)x) is σ(x) − (1 − b)
                let dl_dx = sigmoid_exact(x) - (1.0 - bit as f64);
                accumulate(node as usize, dl_dx, &mut wrt_center);
            }
        }
        PairAux::Neg(noise) => {
            let out = model.output_row(t);
            let x: f64 = center_row.iter().zip(out).map(|(a, b)| a * b).sum();
            accumulate(t, sigmoid_exact(x) - 1.0, &mut wrt_center);
            for n in *noise {
                let np =
                    model.vocab.position(n).ok_or_else(|| Error::UnknownType(n.to_string()))?;
                let out = model.output_row(np);
                let x: f64 = center_row.iter().zip(out).map(|(a, b)| a * b).sum();
                accumulate(np, sigmoid_exact(x), &mut wrt_center);
            }
        }
    }
    Ok(PairGradient { wrt_center, wrt_outputs })
}

/// Fixed-point with half-away-from-zero rounding; `-0` collapses to `0`.
pub fn format_fixed(v: f64, digits: usize) -> String {
    let scale = 10u64.pow(digits as u32);
    let scaled = (v.abs() * scale as f64 + 0.5).floor() as u64;
    let sign = if v < 0.0 && scaled > 0 { "-" } else { "" };
    format!("{}{}.{:0width$}", sign, scaled / scale, scaled % scale, width = digits)
}

/// Write the model text format: header `<n> <dims>`, then one line per
/// type in vocabulary canonical order. Output vectors go to the `aux`
/// sink in the same format, keyed by internal-node index (HS) or type
/// id (NEG).
pub fn write_model(
    model: &EmbeddingModel,
    main: &mut dyn std::io::Write,
    aux: &mut dyn std::io::Write,
) -> Result<()> {
    let digits = model.round_digits;
    writeln!(main, "{} {}", model.vocab.len(), model.dims)?;
    for (i, e) in model.vocab.entries().iter().enumerate() {
        write!(main, "{}", e.id)?;
        for v in model.input_row(i) {
            write!(main, " {}", format_fixed(*v, digits))?;
        }
        writeln!(main)?;
    }
    let rows = model.n_output_rows();
    writeln!(aux, "{} {}", rows, model.dims)?;
    for r in 0..rows {
        match model.mode {
            Some(TrainMode::Neg) => write!(aux, "{}", model.vocab.entry(r).id)?,
            _ => write!(aux, "{r}")?,
        }
        for v in model.output_row(r) {
            write!(aux, " {}", format_fixed(*v, digits))?;
        }
        writeln!(aux)?;
    }
    Ok(())
}

/// Sibling file carrying the auxiliary (output) vectors.
pub fn aux_path(main: &Path) -> PathBuf {
    let mut s = main.as_os_str().to_owned();
    s.push(".aux");
    PathBuf::from(s)
}

pub fn save_model(model: &EmbeddingModel, path: &Path) -> Result<()> {
    let mut main = Vec::new();
    let mut aux = Vec::new();
    write_model(model, &mut main, &mut aux)?;
    fs::write(path, main)?;
    fs::write(aux_path(path), aux)?;
    Ok(())
}

fn parse_vector_file(text: &str) -> Result<(Vec<(String, Vec<f64>)>, usize, usize)> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or(Error::Format { line: 1, message: "missing header".into() })?;
    let mut parts = header.split(' ');
    let parse_usize = |s: Option<&str>| -> Result<usize> {
        s.and_then(|v| v.parse().ok())
            .ok_or(Error::Format { line: 1, message: "header must be '<n> <dims>'".into() })
    };
    let n = parse_usize(parts.next())?;
    let dims = parse_usize(parts.next())?;
    let mut rows = Vec::with_capacity(n);
    let mut digits = 4usize;
    for (i, line) in lines {
        let mut fields = line.split(' ');
        let token = fields
            .next()
            .filter(|t| !t.is_empty())
            .ok_or(Error::Format { line: i + 1, message: "missing token".into() })?;
        let mut values = Vec::with_capacity(dims);
        for field in fields {
            if rows.is_empty() && values.is_empty() {
                if let Some(frac) = field.split('.').nth(1) {
                    digits = frac.len();
                }
            }
            let v: f64 = field.parse().map_err(|_| Error::Format {
                line: i + 1,
                message: format!("bad number '{field}'"),
            })?;
            values.push(v);
        }
        if values.len() != dims {
            return Err(Error::Format {
                line: i + 1,
                message: format!("expected {dims} values, found {}", values.len()),
            });
        }
        rows.push((token.to_owned(), values));
    }
    if rows.len() != n {
        return Err(Error::Format {
            line: n + 1,
            message: format!("header promises {n} vectors, file has {}", rows.len()),
        });
    }
    Ok((rows, dims, digits))
}

/// Parse a saved model. Frequencies are not part of the format; the
/// reloaded vocabulary preserves the file order (canonical at save
/// time) with zeroed frequencies, which is all the comparison paths
/// need.
pub fn parse_model(main_text: &str, aux_text: Option<&str>) -> Result<EmbeddingModel> {
    let (rows, dims, digits) = parse_vector_file(main_text)?;
    if rows.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let entries: Vec<VocabEntry> = rows
        .iter()
        .map(|(token, _)| {
            Ok(VocabEntry { id: ProductId::new(token.as_str())?, frequency: 0, group: None })
        })
        .collect::<Result<_>>()?;
    let vocab = Vocabulary::from_sorted_entries(entries, 0);
    let mut input = Vec::with_capacity(rows.len() * dims);
    for (_, values) in &rows {
        input.extend_from_slice(values);
    }

    let (mode, output) = match aux_text {
        None => (None, Vec::new()),
        Some(text) => {
            let (aux_rows, aux_dims, _) = parse_vector_file(text)?;
            if aux_dims != dims {
                return Err(Error::Format {
                    line: 1,
                    message: format!("aux dims {aux_dims} != model dims {dims}"),
                });
            }
            let node_indexed = aux_rows
                .iter()
                .enumerate()
                .all(|(i, (token, _))| token.parse::<usize>() == Ok(i));
            let mode = if node_indexed && aux_rows.len() + 1 == rows.len() {
                Some(TrainMode::Hs)
            } else if aux_rows.len() == rows.len()
                && aux_rows.iter().zip(&rows).all(|((a, _), (b, _))| a == b)
            {
                Some(TrainMode::Neg)
            } else {
                return Err(Error::Format {
                    line: 1,
                    message: "aux file matches neither HS nodes nor NEG context rows".into(),
                });
            };
            let mut output = Vec::with_capacity(aux_rows.len() * dims);
            for (_, values) in &aux_rows {
                output.extend_from_slice(values);
            }
            (mode, output)
        }
    };

    let mut model = EmbeddingModel::from_parts(vocab, dims, mode, input, output)?;
    model.round_digits = digits;
    Ok(model)
}

/// Load a model from disk; the aux sibling is picked up when present.
pub fn load_model(path: &Path) -> Result<EmbeddingModel> {
    let main_text = fs::read_to_string(path)
        .map_err(|_| Error::MissingFile(path.to_path_buf()))?;
    let aux = aux_path(path);
    let aux_text = if aux.exists() { Some(fs::read_to_string(&aux)?) } else { None };
    parse_model(&main_text, aux_text.as_deref())
}
