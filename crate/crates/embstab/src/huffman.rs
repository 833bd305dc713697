//! Deterministic Huffman coding for Hierarchical Softmax, plus the
//! machinery to quantify how the coding shifts between two vocabularies.
//!
//! The construction is a pure function of the frequency multiset:
//!
//! 1. leaves are taken in vocabulary canonical order (frequency
//!    descending, id ascending) and reversed, giving an
//!    ascending-frequency leaf queue;
//! 2. the classic two-queue merge runs over that leaf queue and a FIFO
//!    queue of merged nodes; at equal weight the leaf queue wins, and
//!    within a queue the node that entered earlier wins;
//! 3. the first node popped at a merge receives bit 0, the second bit 1.
//!
//! Internal nodes are numbered breadth-first from the root (bit-0 child
//! before bit-1 child), so the node numbering is recoverable from the
//! code set alone and a dumped coding reloads exactly.

use std::collections::hash_map::Entry;
use std::collections::{HashMap, VecDeque};

use serde::Serialize;

use crate::corpus::{ProductId, Vocabulary};
use crate::error::{Error, Result};

/// Root-to-leaf description of one type in the tree: `code[i]` is the
/// branch taken at internal node `points[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeCode {
    pub code: Vec<u8>,
    pub points: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct HuffmanCoding {
    entries: Vec<(ProductId, TypeCode)>,
    index: HashMap<String, usize>,
    n_internal: usize,
}

impl HuffmanCoding {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Internal node count: vocabulary size − 1 for self-built codings.
    pub fn n_internal(&self) -> usize {
        self.n_internal
    }

    pub fn entries(&self) -> &[(ProductId, TypeCode)] {
        &self.entries
    }

    pub fn get(&self, id: &ProductId) -> Option<&TypeCode> {
        self.index.get(id.as_str()).map(|&i| &self.entries[i].1)
    }

    pub fn get_str(&self, id: &str) -> Option<&TypeCode> {
        self.index.get(id).map(|&i| &self.entries[i].1)
    }

    fn from_entries(entries: Vec<(ProductId, TypeCode)>, n_internal: usize) -> Self {
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, (id, _))| (id.as_str().to_owned(), i))
            .collect();
        HuffmanCoding { entries, index, n_internal }
    }

    /// Weighted code length Σ freq(t)·|code(t)| for the given vocabulary.
    pub fn weighted_length(&self, vocab: &Vocabulary) -> u64 {
        vocab
            .entries()
            .iter()
            .map(|e| {
                self.get(&e.id).map(|tc| e.frequency * tc.code.len() as u64).unwrap_or(0)
            })
            .sum()
    }

    /// Keep only the given vocabulary's types; codes, points and node
    /// numbering stay untouched. Used to reuse a reference tree across
    /// leave-one-out runs.
    pub fn restrict_to(&self, vocab: &Vocabulary) -> Result<HuffmanCoding> {
        let mut entries = Vec::with_capacity(vocab.len());
        for e in vocab.entries() {
            let tc = self
                .get(&e.id)
                .ok_or_else(|| Error::CodingMismatch(e.id.as_str().to_owned()))?;
            entries.push((e.id.clone(), tc.clone()));
        }
        Ok(HuffmanCoding::from_entries(entries, self.n_internal))
    }

    /// Text dump, one `type<TAB>bitstring` line per entry.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (id, tc) in &self.entries {
            out.push_str(id.as_str());
            out.push('\t');
            for &b in &tc.code {
                out.push(if b == 0 { '0' } else { '1' });
            }
            out.push('\n');
        }
        out
    }

    /// Parse a dump and rebuild the tree. The breadth-first node
    /// numbering is a pure function of the code set, so points are
    /// restored exactly as [`build_coding`] produced them.
    pub fn parse_tsv(text: &str) -> Result<HuffmanCoding> {
        let mut raw: Vec<(ProductId, Vec<u8>)> = Vec::new();
        let mut seen: HashMap<String, ()> = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut parts = line.splitn(2, '\t');
            let id = parts.next().unwrap_or_default();
            let bits = parts.next().ok_or_else(|| Error::Format {
                line: i + 1,
                message: "expected type<TAB>bits".into(),
            })?;
            let id = ProductId::new(id)
                .map_err(|e| Error::Format { line: i + 1, message: e.to_string() })?;
            match seen.entry(id.as_str().to_owned()) {
                Entry::Occupied(_) => {
                    return Err(Error::Format {
                        line: i + 1,
                        message: format!("duplicate type '{id}'"),
                    })
                }
                Entry::Vacant(v) => v.insert(()),
            };
            let mut code = Vec::with_capacity(bits.len());
            for c in bits.chars() {
                match c {
                    '0' => code.push(0),
                    '1' => code.push(1),
                    _ => {
                        return Err(Error::Format {
                            line: i + 1,
                            message: format!("invalid code character '{c}'"),
                        })
                    }
                }
            }
            raw.push((id, code));
        }
        if raw.is_empty() {
            return Err(Error::Format { line: 0, message: "empty coding file".into() });
        }
        if raw.len() == 1 {
            if !raw[0].1.is_empty() {
                return Err(Error::Format {
                    line: 1,
                    message: "single-type coding must have an empty code".into(),
                });
            }
            let entries = vec![(raw[0].0.clone(), TypeCode { code: vec![], points: vec![] })];
            return Ok(HuffmanCoding::from_entries(entries, 0));
        }
        let points = assign_points(&raw)?;
        let n_internal = raw.len() - 1;
        let entries = raw
            .into_iter()
            .zip(points)
            .map(|((id, code), points)| (id, TypeCode { code, points }))
            .collect();
        Ok(HuffmanCoding::from_entries(entries, n_internal))
    }
}

/// Rebuild internal-node numbers from a prefix-free code set: insert
/// all codes into a binary trie, then number internal nodes
/// breadth-first (bit 0 before bit 1). Errors if the code set is not a
/// full prefix-free tree.
fn assign_points(raw: &[(ProductId, Vec<u8>)]) -> Result<Vec<Vec<u32>>> {
    #[derive(Default)]
    struct Trie {
        children: [Option<usize>; 2],
        leaf: bool,
    }
    let mut nodes: Vec<Trie> = vec![Trie::default()];
    for (id, code) in raw {
        let mut at = 0usize;
        for &bit in code {
            if nodes[at].leaf {
                return Err(Error::Format {
                    line: 0,
                    message: format!("code of '{id}' extends another code"),
                });
            }
            at = match nodes[at].children[bit as usize] {
                Some(next) => next,
                None => {
                    nodes.push(Trie::default());
                    let next = nodes.len() - 1;
                    nodes[at].children[bit as usize] = Some(next);
                    next
                }
            };
        }
        if nodes[at].leaf || nodes[at].children.iter().any(Option::is_some) {
            return Err(Error::Format {
                line: 0,
                message: format!("code of '{id}' is a prefix of another code"),
            });
        }
        nodes[at].leaf = true;
    }
    // Every internal trie node must have both children (full tree),
    // otherwise the Kraft sum is below one and this is no Huffman coding.
    let mut order: HashMap<usize, u32> = HashMap::new();
    let mut queue = VecDeque::from([0usize]);
    let mut next_id = 0u32;
    while let Some(at) = queue.pop_front() {
        if nodes[at].leaf {
            continue;
        }
        match nodes[at].children {
            [Some(a), Some(b)] => {
                order.insert(at, next_id);
                next_id += 1;
                queue.push_back(a);
                queue.push_back(b);
            }
            _ => {
                return Err(Error::Format {
                    line: 0,
                    message: "code set is not a full binary tree".into(),
                })
            }
        }
    }
    let mut all_points = Vec::with_capacity(raw.len());
    for (_, code) in raw {
        let mut points = Vec::with_capacity(code.len());
        let mut at = 0usize;
        for &bit in code {
            points.push(order[&at]);
            at = nodes[at].children[bit as usize].unwrap();
        }
        all_points.push(points);
    }
    Ok(all_points)
}

/// Build the deterministic Huffman coding of a vocabulary.
pub fn build_coding(vocab: &Vocabulary) -> Result<HuffmanCoding> {
    if vocab.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let n = vocab.len();
    if n == 1 {
        let entries =
            vec![(vocab.entry(0).id.clone(), TypeCode { code: vec![], points: vec![] })];
        return Ok(HuffmanCoding::from_entries(entries, 0));
    }

    // Tree arena: 0..n are leaves (leaf i = vocab entry i), internal
    // nodes appended in merge order.
    #[derive(Clone, Copy)]
    struct Node {
        weight: u64,
        children: Option<(usize, usize)>, // (bit-0 child, bit-1 child)
    }
    let mut nodes: Vec<Node> = vocab
        .entries()
        .iter()
        .map(|e| Node { weight: e.frequency, children: None })
        .collect();

    // Leaf queue: canonical order reversed = ascending frequency.
    let mut leaves: VecDeque<usize> = (0..n).rev().collect();
    let mut merged: VecDeque<usize> = VecDeque::new();
    for _ in 0..n - 1 {
        let pop_min = |nodes: &Vec<Node>, leaves: &mut VecDeque<usize>, merged: &mut VecDeque<usize>| {
            match (leaves.front(), merged.front()) {
                (Some(&l), Some(&m)) => {
                    // equal weight: the leaf queue wins
                    if nodes[l].weight <= nodes[m].weight {
                        leaves.pop_front().unwrap()
                    } else {
                        merged.pop_front().unwrap()
                    }
                }
                (Some(_), None) => leaves.pop_front().unwrap(),
                (None, Some(_)) => merged.pop_front().unwrap(),
                (None, None) => unreachable!("merge ran out of nodes"),
            }
        };
        let first = pop_min(&nodes, &mut leaves, &mut merged);
        let second = pop_min(&nodes, &mut leaves, &mut merged);
        nodes.push(Node {
            weight: nodes[first].weight + nodes[second].weight,
            children: Some((first, second)),
        });
        merged.push_back(nodes.len() - 1);
    }
    let root = nodes.len() - 1;

    // Breadth-first numbering of internal nodes, then codes and points
    // per leaf via an iterative depth-first walk.
    let mut node_number: HashMap<usize, u32> = HashMap::new();
    let mut queue = VecDeque::from([root]);
    let mut next_id = 0u32;
    while let Some(at) = queue.pop_front() {
        if let Some((a, b)) = nodes[at].children {
            node_number.insert(at, next_id);
            next_id += 1;
            queue.push_back(a);
            queue.push_back(b);
        }
    }

    let mut codes: Vec<Option<TypeCode>> = vec![None; n];
    let mut stack: Vec<(usize, Vec<u8>, Vec<u32>)> = vec![(root, Vec::new(), Vec::new())];
    while let Some((at, code, points)) = stack.pop() {
        match nodes[at].children {
            Some((a, b)) => {
                let number = node_number[&at];
                let mut code0 = code.clone();
                let mut points0 = points.clone();
                code0.push(0);
                points0.push(number);
                stack.push((a, code0, points0));
                let mut code1 = code;
                let mut points1 = points;
                code1.push(1);
                points1.push(number);
                stack.push((b, code1, points1));
            }
            None => codes[at] = Some(TypeCode { code, points }),
        }
    }

    let entries = vocab
        .entries()
        .iter()
        .zip(codes)
        .map(|(e, tc)| (e.id.clone(), tc.expect("every leaf reached")))
        .collect();
    Ok(HuffmanCoding::from_entries(entries, n - 1))
}

/// Extended Hamming distance between two codes: mismatches over the
/// common prefix plus the length difference. Reduces to the classical
/// Hamming distance for equal lengths.
pub fn hamming(a: &[u8], b: &[u8]) -> usize {
    let common = a.len().min(b.len());
    let mismatches = a[..common].iter().zip(&b[..common]).filter(|(x, y)| x != y).count();
    mismatches + a.len().abs_diff(b.len())
}

#[derive(Debug, Clone, Serialize)]
pub struct CodingDiff {
    /// Types present in both codings whose codes differ.
    pub changed_types: usize,
    /// Shared types compared.
    pub shared_types: usize,
    /// Types only in the second / only in the first coding.
    pub appeared: usize,
    pub disappeared: usize,
    /// Distances of the changed types, id ascending.
    pub per_type_hamming: Vec<(String, usize)>,
    pub max_hamming: usize,
    /// Mean over all shared types (unchanged types contribute zero).
    pub mean_hamming: f64,
}

impl CodingDiff {
    pub fn identical(&self) -> bool {
        self.changed_types == 0 && self.appeared == 0 && self.disappeared == 0
    }
}

/// Compare two codings type by type over their shared vocabulary.
pub fn diff_codings(a: &HuffmanCoding, b: &HuffmanCoding) -> CodingDiff {
    let mut shared = 0usize;
    let mut changed = Vec::new();
    let mut total_distance = 0usize;
    for (id, code_a) in a.entries() {
        match b.get(id) {
            Some(code_b) => {
                shared += 1;
                let d = hamming(&code_a.code, &code_b.code);
                if d > 0 {
                    total_distance += d;
                    changed.push((id.as_str().to_owned(), d));
                }
            }
            None => {}
        }
    }
    let disappeared = a.len() - shared;
    let appeared = b.len() - shared;
    changed.sort_unstable();
    let max_hamming = changed.iter().map(|&(_, d)| d).max().unwrap_or(0);
    let mean_hamming =
        if shared == 0 { 0.0 } else { total_distance as f64 / shared as f64 };
    CodingDiff {
        changed_types: changed.len(),
        shared_types: shared,
        appeared,
        disappeared,
        per_type_hamming: changed,
        max_hamming,
        mean_hamming,
    }
}

/// Decrement one type's frequency by one, rebuild, and diff against the
/// unperturbed coding. The type disappears from the second coding when
/// the decrement pushes it below the min-count threshold.
pub fn perturb_and_diff(vocab: &Vocabulary, id: &ProductId) -> Result<CodingDiff> {
    let before = build_coding(vocab)?;
    let after = build_coding(&vocab.decremented(id)?)?;
    Ok(diff_codings(&before, &after))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocabulary, load_corpus};

    fn vocab_from_counts(counts: &[(&str, u64)]) -> Vocabulary {
        let mut text = String::new();
        for &(id, c) in counts {
            for _ in 0..c {
                text.push_str(id);
                text.push('\n');
            }
        }
        let corpus = load_corpus(&text, "t").unwrap();
        build_vocabulary(&corpus, 1, None).unwrap()
    }

    #[test]
    fn classic_lengths() {
        // {A:4, B:2, C:1, D:1}: lengths A:1 B:2 C:3 D:3, weighted 14
        let v = vocab_from_counts(&[("A", 4), ("B", 2), ("C", 1), ("D", 1)]);
        let coding = build_coding(&v).unwrap();
        assert_eq!(coding.get_str("A").unwrap().code.len(), 1);
        assert_eq!(coding.get_str("B").unwrap().code.len(), 2);
        assert_eq!(coding.get_str("C").unwrap().code.len(), 3);
        assert_eq!(coding.get_str("D").unwrap().code.len(), 3);
        assert_eq!(coding.weighted_length(&v), 14);
        assert_eq!(coding.n_internal(), 3);
    }

    #[test]
    fn two_types_opposite_bits() {
        let v = vocab_from_counts(&[("A", 1), ("B", 1)]);
        let coding = build_coding(&v).unwrap();
        let a = &coding.get_str("A").unwrap().code;
        let b = &coding.get_str("B").unwrap().code;
        assert_eq!(a.len(), 1);
        assert_eq!(b.len(), 1);
        assert_ne!(a[0], b[0]);
    }

    #[test]
    fn single_type_empty_code() {
        let v = vocab_from_counts(&[("solo", 3)]);
        let coding = build_coding(&v).unwrap();
        let tc = coding.get_str("solo").unwrap();
        assert!(tc.code.is_empty());
        assert!(tc.points.is_empty());
        assert_eq!(coding.n_internal(), 0);
    }

    #[test]
    fn deterministic_under_permutation() {
        // same multiset reached through differently ordered corpora
        let v1 = {
            let c = load_corpus("X Y Z\nX Y Z\nX Y Z\n", "t").unwrap();
            build_vocabulary(&c, 1, None).unwrap()
        };
        let v2 = {
            let c = load_corpus("Z X Y\nY Z X\nX Z Y\n", "t").unwrap();
            build_vocabulary(&c, 1, None).unwrap()
        };
        let c1 = build_coding(&v1).unwrap();
        let c2 = build_coding(&v2).unwrap();
        assert_eq!(c1.to_tsv(), c2.to_tsv());
    }

    #[test]
    fn points_align_with_codes() {
        let v = vocab_from_counts(&[("A", 5), ("B", 3), ("C", 2), ("D", 2), ("E", 1)]);
        let coding = build_coding(&v).unwrap();
        for (_, tc) in coding.entries() {
            assert_eq!(tc.code.len(), tc.points.len());
            // the root is internal node 0 and starts every path
            assert_eq!(tc.points[0], 0);
        }
    }

    #[test]
    fn prefix_free_and_kraft() {
        let v = vocab_from_counts(&[("A", 7), ("B", 7), ("C", 3), ("D", 2), ("E", 2), ("F", 1)]);
        let coding = build_coding(&v).unwrap();
        let codes: Vec<&Vec<u8>> = coding.entries().iter().map(|(_, tc)| &tc.code).collect();
        for (i, a) in codes.iter().enumerate() {
            for (j, b) in codes.iter().enumerate() {
                if i != j {
                    assert!(!b.starts_with(a.as_slice()), "code {i} is a prefix of {j}");
                }
            }
        }
        let kraft: f64 = codes.iter().map(|c| 2f64.powi(-(c.len() as i32))).sum();
        assert!((kraft - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hamming_rules() {
        assert_eq!(hamming(&[0, 1, 0], &[0, 1, 0]), 0);
        assert_eq!(hamming(&[0, 1, 0], &[0, 1, 1]), 1);
        // "01" vs "0110": 0 mismatches over the common prefix, +2 length
        assert_eq!(hamming(&[0, 1], &[0, 1, 1, 0]), 2);
        assert_eq!(hamming(&[], &[1, 1]), 2);
    }

    #[test]
    fn diff_self_is_zero() {
        let v = vocab_from_counts(&[("A", 4), ("B", 2), ("C", 1), ("D", 1)]);
        let coding = build_coding(&v).unwrap();
        let diff = diff_codings(&coding, &coding);
        assert_eq!(diff.changed_types, 0);
        assert_eq!(diff.max_hamming, 0);
        assert_eq!(diff.mean_hamming, 0.0);
        assert!(diff.identical());
    }

    #[test]
    fn diff_symmetry() {
        let a = build_coding(&vocab_from_counts(&[("A", 4), ("B", 2), ("C", 1), ("D", 1)]))
            .unwrap();
        let b = build_coding(&vocab_from_counts(&[("A", 4), ("B", 2), ("C", 2), ("D", 1)]))
            .unwrap();
        let ab = diff_codings(&a, &b);
        let ba = diff_codings(&b, &a);
        assert_eq!(ab.changed_types, ba.changed_types);
        assert_eq!(ab.max_hamming, ba.max_hamming);
        assert_eq!(ab.mean_hamming, ba.mean_hamming);
        assert_eq!(ab.appeared, ba.disappeared);
    }

    #[test]
    fn stable_perturbation_changes_nothing() {
        // all-distinct frequencies with gaps >= 2: decrementing the most
        // frequent type cannot reorder or re-merge anything
        let v = vocab_from_counts(&[("A", 40), ("B", 20), ("C", 10), ("D", 5), ("E", 2)]);
        let diff = perturb_and_diff(&v, &ProductId::new("A").unwrap()).unwrap();
        assert_eq!(diff.changed_types, 0);
        assert_eq!(diff.disappeared, 0);
    }

    #[test]
    fn tie_rich_perturbation_changes_codes() {
        let v = vocab_from_counts(&[
            ("A", 4),
            ("B", 4),
            ("C", 4),
            ("D", 4),
            ("E", 4),
            ("F", 4),
            ("G", 4),
            ("H", 4),
            ("I", 4),
        ]);
        let diff = perturb_and_diff(&v, &ProductId::new("G").unwrap()).unwrap();
        assert!(diff.changed_types > 0, "tie-rich instance must shuffle codes");
    }

    #[test]
    fn perturbation_below_min_count_disappears() {
        let corpus = load_corpus("A A A B B\nA B C C\n", "t").unwrap();
        let v = build_vocabulary(&corpus, 2, None).unwrap(); // {A:4,B:3,C:2}
        let diff = perturb_and_diff(&v, &ProductId::new("C").unwrap()).unwrap();
        assert_eq!(diff.disappeared, 1);
    }

    #[test]
    fn perturb_unknown_type_errors() {
        let v = vocab_from_counts(&[("A", 3), ("B", 2)]);
        assert!(matches!(
            perturb_and_diff(&v, &ProductId::new("nope").unwrap()),
            Err(Error::UnknownType(_))
        ));
    }

    #[test]
    fn tsv_round_trip_restores_points() {
        let v = vocab_from_counts(&[("A", 9), ("B", 5), ("C", 5), ("D", 3), ("E", 1), ("F", 1)]);
        let coding = build_coding(&v).unwrap();
        let reloaded = HuffmanCoding::parse_tsv(&coding.to_tsv()).unwrap();
        assert_eq!(reloaded.n_internal(), coding.n_internal());
        for (id, tc) in coding.entries() {
            let rt = reloaded.get(id).unwrap();
            assert_eq!(rt.code, tc.code);
            assert_eq!(rt.points, tc.points);
        }
    }

    #[test]
    fn tsv_rejects_prefix_violation() {
        assert!(HuffmanCoding::parse_tsv("A\t0\nB\t01\n").is_err());
        assert!(HuffmanCoding::parse_tsv("A\t0\nA\t1\n").is_err());
        assert!(HuffmanCoding::parse_tsv("A\t0\nB\t10\n").is_err()); // not full
    }

    #[test]
    fn restrict_preserves_codes() {
        let full = vocab_from_counts(&[("A", 6), ("B", 4), ("C", 2), ("D", 2)]);
        let coding = build_coding(&full).unwrap();
        let smaller = vocab_from_counts(&[("A", 6), ("B", 4), ("C", 2)]);
        let restricted = coding.restrict_to(&smaller).unwrap();
        assert_eq!(restricted.len(), 3);
        assert_eq!(restricted.n_internal(), coding.n_internal());
        assert_eq!(restricted.get_str("A").unwrap(), coding.get_str("A").unwrap());
        // a type outside the original coding is a mismatch
        let foreign = vocab_from_counts(&[("Z", 1)]);
        assert!(matches!(coding.restrict_to(&foreign), Err(Error::CodingMismatch(_))));
    }
}
