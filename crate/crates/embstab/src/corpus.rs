//! Session corpora, vocabularies and synthetic corpus generation.
//!
//! A corpus is one session per line, tokens separated by single spaces.
//! The line number is the session id; there are no ids in the file.
//! Group metadata lives in a separate two-column TSV
//! (`product<TAB>group`) because the corpus format carries none.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, DeterministicRng};

/// One abstract product; the unit that receives an embedding vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProductId(String);

impl ProductId {
    /// Token strings must be non-empty and free of whitespace, or the
    /// line-oriented corpus format could not round-trip them.
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::InvalidParameter("empty product id".into()));
        }
        if id.chars().any(|c| c == ' ' || c == '\t' || c == '\n' || c == '\r') {
            return Err(Error::InvalidParameter(format!("product id '{id}' contains whitespace")));
        }
        Ok(ProductId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ProductId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Chronologically ordered clicks of one user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub tokens: Vec<ProductId>,
    /// 0-based position in the corpus file. Preserved when sessions are
    /// omitted, so it doubles as the Rank feature of a data point.
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionCorpus {
    pub sessions: Vec<Session>,
    pub source_label: String,
}

impl SessionCorpus {
    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }
}

/// Map from product to its group label.
#[derive(Debug, Clone, Default)]
pub struct GroupCatalog {
    map: HashMap<String, String>,
}

impl GroupCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: ProductId, group: impl Into<String>) {
        self.map.insert(id.0, group.into());
    }

    pub fn get(&self, id: &ProductId) -> Option<&str> {
        self.map.get(id.as_str()).map(|s| s.as_str())
    }

    pub fn get_str(&self, id: &str) -> Option<&str> {
        self.map.get(id).map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Parse the two-column TSV (`product<TAB>group`, no header).
    pub fn parse(text: &str) -> Result<Self> {
        let mut catalog = GroupCatalog::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut parts = line.splitn(2, '\t');
            let id = parts.next().unwrap_or_default();
            let group = parts.next().ok_or_else(|| Error::Format {
                line: i + 1,
                message: "expected two tab-separated columns".into(),
            })?;
            catalog.insert(ProductId::new(id)?, group.trim_end());
        }
        Ok(catalog)
    }

    /// Serialize in id order so the output is reproducible.
    pub fn to_tsv(&self) -> String {
        let mut rows: Vec<(&str, &str)> =
            self.map.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
        rows.sort_unstable();
        let mut out = String::new();
        for (id, group) in rows {
            out.push_str(id);
            out.push('\t');
            out.push_str(group);
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabEntry {
    pub id: ProductId,
    pub frequency: u64,
    pub group: Option<String>,
}

/// Types surviving the min-count filter, in canonical order:
/// frequency descending, then id ascending. The order is a total
/// order, so it is independent of input session order.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    entries: Vec<VocabEntry>,
    index: HashMap<String, usize>,
    min_count: u64,
    total_tokens: u64,
}

impl Vocabulary {
    pub fn entries(&self) -> &[VocabEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    /// Sum of retained frequencies.
    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn position(&self, id: &ProductId) -> Option<usize> {
        self.index.get(id.as_str()).copied()
    }

    pub fn position_str(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn entry(&self, pos: usize) -> &VocabEntry {
        &self.entries[pos]
    }

    fn from_entries(mut entries: Vec<VocabEntry>, min_count: u64) -> Self {
        entries.sort_unstable_by(|a, b| {
            b.frequency.cmp(&a.frequency).then_with(|| a.id.cmp(&b.id))
        });
        Self::from_sorted_entries(entries, min_count)
    }

    /// Trusts the given order. Used when the order is canonical by
    /// construction (model files are written in canonical order).
    pub(crate) fn from_sorted_entries(entries: Vec<VocabEntry>, min_count: u64) -> Self {
        let total_tokens = entries.iter().map(|e| e.frequency).sum();
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.id.0.clone(), i))
            .collect();
        Vocabulary { entries, index, min_count, total_tokens }
    }

    /// Copy with group labels refreshed from the catalog; order and
    /// frequencies untouched. Lets a model loaded from disk (whose
    /// format carries no groups) pick up purity labels.
    pub fn with_groups(&self, groups: &GroupCatalog) -> Vocabulary {
        let entries = self
            .entries
            .iter()
            .map(|e| VocabEntry {
                id: e.id.clone(),
                frequency: e.frequency,
                group: groups.get(&e.id).map(str::to_owned),
            })
            .collect();
        Vocabulary::from_sorted_entries(entries, self.min_count)
    }

    /// Copy with one type's frequency decremented by one; the type is
    /// dropped when it falls below the min-count threshold.
    pub fn decremented(&self, id: &ProductId) -> Result<Vocabulary> {
        let pos = self.position(id).ok_or_else(|| Error::UnknownType(id.0.clone()))?;
        let mut entries = self.entries.clone();
        entries[pos].frequency -= 1;
        let min_count = self.min_count;
        entries.retain(|e| e.frequency >= min_count && e.frequency > 0);
        if entries.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        Ok(Vocabulary::from_entries(entries, min_count))
    }
}

/// [`load_corpus`] over raw bytes; malformed UTF-8 is reported with
/// the line it first appears on.
pub fn load_corpus_bytes(bytes: &[u8], source_label: impl Into<String>) -> Result<SessionCorpus> {
    match std::str::from_utf8(bytes) {
        Ok(text) => load_corpus(text, source_label),
        Err(e) => {
            let line = bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1;
            Err(Error::Format { line, message: "invalid UTF-8".into() })
        }
    }
}

/// Parse a corpus: one session per line, single-space separators,
/// trailing whitespace tolerated, empty lines rejected.
pub fn load_corpus(text: &str, source_label: impl Into<String>) -> Result<SessionCorpus> {
    let mut sessions = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() {
            return Err(Error::Format { line: i + 1, message: "empty session line".into() });
        }
        let mut tokens = Vec::new();
        for tok in line.split(' ') {
            if tok.is_empty() {
                return Err(Error::Format {
                    line: i + 1,
                    message: "consecutive separators".into(),
                });
            }
            tokens.push(ProductId::new(tok).map_err(|e| Error::Format {
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        sessions.push(Session { tokens, index: i });
    }
    if sessions.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(SessionCorpus { sessions, source_label: source_label.into() })
}

/// Inverse of [`load_corpus`] up to whitespace normalization.
pub fn serialize_corpus(corpus: &SessionCorpus) -> String {
    let mut out = String::new();
    for session in &corpus.sessions {
        let mut first = true;
        for tok in &session.tokens {
            if !first {
                out.push(' ');
            }
            out.push_str(tok.as_str());
            first = false;
        }
        out.push('\n');
    }
    out
}

/// Count every token occurrence and keep types reaching `min_count`.
pub fn build_vocabulary(
    corpus: &SessionCorpus,
    min_count: u64,
    groups: Option<&GroupCatalog>,
) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if min_count == 0 {
        return Err(Error::InvalidParameter("min_count must be positive".into()));
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for session in &corpus.sessions {
        for tok in &session.tokens {
            *counts.entry(tok.as_str()).or_insert(0) += 1;
        }
    }
    let mut entries: Vec<VocabEntry> = counts
        .into_iter()
        .filter(|&(_, c)| c >= min_count)
        .map(|(id, frequency)| VocabEntry {
            group: groups.and_then(|g| g.get_str(id)).map(str::to_owned),
            id: ProductId(id.to_owned()),
            frequency,
        })
        .collect();
    if entries.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    entries.sort_unstable_by(|a, b| b.frequency.cmp(&a.frequency).then_with(|| a.id.cmp(&b.id)));
    Ok(Vocabulary::from_sorted_entries(entries, min_count))
}

/// Corpus minus exactly one session. The remaining sessions keep their
/// original indices (their file positions) and relative order; the
/// original corpus is untouched.
pub fn omit_session(corpus: &SessionCorpus, index: usize) -> Result<SessionCorpus> {
    let pos = corpus
        .sessions
        .iter()
        .position(|s| s.index == index)
        .ok_or(Error::OutOfRange { index, len: corpus.len() })?;
    let mut sessions = corpus.sessions.clone();
    sessions.remove(pos);
    Ok(SessionCorpus {
        sessions,
        source_label: format!("{}#omit{}", corpus.source_label, index),
    })
}

/// Parameters of the synthetic Zipf corpus generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_groups: usize,
    pub products_per_group: usize,
    pub zipf_exponent: f64,
    pub n_sessions: usize,
    pub mean_session_length: f64,
    /// Probability that the next click stays in the current group.
    pub within_group_bias: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        if self.n_groups == 0 || self.products_per_group == 0 || self.n_sessions == 0 {
            return Err(Error::InvalidParameter("counts must be positive".into()));
        }
        if !(self.zipf_exponent > 0.0) {
            return Err(Error::InvalidParameter("zipf_exponent must be > 0".into()));
        }
        if !(self.mean_session_length >= 1.0) {
            return Err(Error::InvalidParameter("mean_session_length must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.within_group_bias) {
            return Err(Error::InvalidParameter("within_group_bias must be in [0,1]".into()));
        }
        Ok(())
    }
}

/// Cumulative-weight table for sampling an index proportional to its weight.
struct CumTable {
    cum: Vec<f64>,
    total: f64,
}

impl CumTable {
    fn new(weights: impl Iterator<Item = f64>) -> Self {
        let mut cum = Vec::new();
        let mut total = 0.0;
        for w in weights {
            total += w;
            cum.push(total);
        }
        CumTable { cum, total }
    }

    fn sample(&self, rng: &mut DeterministicRng) -> usize {
        let u = rng.next_f64() * self.total;
        // partition_point returns the first index with cum > u
        self.cum.partition_point(|&c| c <= u).min(self.cum.len() - 1)
    }
}

/// Generate a session corpus over `n_groups * products_per_group`
/// products whose global click frequencies follow a Zipf law with the
/// given exponent. Product ids encode their group (`g<group>_p<product>`);
/// global frequency ranks are interleaved over groups so every group
/// spans the whole frequency range.
///
/// Deterministic: a pure function of the spec, including the seed.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(SessionCorpus, GroupCatalog)> {
    spec.validate()?;
    let n_products = spec.n_groups * spec.products_per_group;

    // rank r -> product id, group = r mod n_groups
    let ids: Vec<ProductId> = (0..n_products)
        .map(|r| ProductId(format!("g{}_p{}", r % spec.n_groups, r / spec.n_groups)))
        .collect();
    let mut catalog = GroupCatalog::new();
    for (r, id) in ids.iter().enumerate() {
        catalog.insert(id.clone(), format!("g{}", r % spec.n_groups));
    }

    let global = CumTable::new((0..n_products).map(|r| ((r + 1) as f64).powf(-spec.zipf_exponent)));
    // per-group conditional Zipf over the group's member ranks
    let group_ranks: Vec<Vec<usize>> = (0..spec.n_groups)
        .map(|g| (g..n_products).step_by(spec.n_groups).collect())
        .collect();
    let group_tables: Vec<CumTable> = group_ranks
        .iter()
        .map(|ranks| {
            CumTable::new(ranks.iter().map(|&r| ((r + 1) as f64).powf(-spec.zipf_exponent)))
        })
        .collect();

    // Shifted geometric session length, support >= 1, mean = m: p = 1/m.
    let p = 1.0 / spec.mean_session_length;
    let mut rng = DeterministicRng::for_stream(spec.seed, stream::SYNTHETIC, 0);
    let mut sessions = Vec::with_capacity(spec.n_sessions);
    for index in 0..spec.n_sessions {
        let length = if p >= 1.0 {
            1
        } else {
            let u = rng.next_f64();
            1 + ((1.0 - u).ln() / (1.0 - p).ln()).floor() as usize
        };
        let mut tokens = Vec::with_capacity(length);
        let first = global.sample(&mut rng);
        let mut current_group = first % spec.n_groups;
        tokens.push(ids[first].clone());
        for _ in 1..length {
            let stay = rng.next_f64() < spec.within_group_bias;
            let rank = if stay {
                group_ranks[current_group][group_tables[current_group].sample(&mut rng)]
            } else {
                let r = global.sample(&mut rng);
                current_group = r % spec.n_groups;
                r
            };
            tokens.push(ids[rank].clone());
        }
        sessions.push(Session { tokens, index });
    }
    let label = format!("synthetic(seed={})", spec.seed);
    Ok((SessionCorpus { sessions, source_label: label }, catalog))
}

#[derive(Debug, Clone, Serialize)]
pub struct CorpusStats {
    pub n_sessions: usize,
    /// Distinct types observed in the corpus, before min-count filtering.
    pub n_distinct_types: usize,
    /// Types retained in the vocabulary.
    pub n_retained_types: usize,
    pub mean_session_length: f64,
    /// Distinct group labels per session; a token without a group label
    /// counts as its own singleton pseudo-group.
    pub mean_groups_per_session: f64,
}

pub fn corpus_stats(
    corpus: &SessionCorpus,
    vocab: &Vocabulary,
    groups: Option<&GroupCatalog>,
) -> CorpusStats {
    let mut distinct: HashMap<&str, ()> = HashMap::new();
    let mut token_total = 0usize;
    let mut group_total = 0usize;
    for session in &corpus.sessions {
        token_total += session.tokens.len();
        let mut labels: Vec<&str> = Vec::new();
        let mut singletons: Vec<&str> = Vec::new();
        for tok in &session.tokens {
            distinct.insert(tok.as_str(), ());
            match groups.and_then(|g| g.get(tok)) {
                Some(label) => labels.push(label),
                None => singletons.push(tok.as_str()),
            }
        }
        labels.sort_unstable();
        labels.dedup();
        singletons.sort_unstable();
        singletons.dedup();
        group_total += labels.len() + singletons.len();
    }
    let n = corpus.len();
    CorpusStats {
        n_sessions: n,
        n_distinct_types: distinct.len(),
        n_retained_types: vocab.len(),
        mean_session_length: token_total as f64 / n as f64,
        mean_groups_per_session: group_total as f64 / n as f64,
    }
}
