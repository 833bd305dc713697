//! Model comparison: application-level neighborhood overlap and
//! model-level topology (density-based clustering, purity, noise,
//! local density).
//!
//! Neighbor search is exact — full scans over the vocabulary — so the
//! stability measurements never inherit approximate-nearest-neighbor
//! noise. Scans fan out over rayon and merge in seed/type order, so
//! parallelism cannot change any output.

use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{ProductId, Vocabulary};
use crate::error::{Error, Result};
use crate::rng::{stream, DeterministicRng};
use crate::trainer::EmbeddingModel;

/// Cosine similarity; errors on zero vectors.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::InvalidParameter("dimension mismatch".into()));
    }
    let nu: f64 = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector("cosine input".into()));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok(dot / (nu * nv))
}

/// All input vectors scaled to unit norm, flattened. Errors if any
/// type has a zero vector.
fn unit_vectors(model: &EmbeddingModel) -> Result<Vec<f64>> {
    let dims = model.dims;
    let mut out = vec![0.0; model.vocab.len() * dims];
    for (i, e) in model.vocab.entries().iter().enumerate() {
        let row = model.input_row(i);
        let norm: f64 = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroVector(e.id.to_string()));
        }
        for k in 0..dims {
            out[i * dims + k] = row[k] / norm;
        }
    }
    Ok(out)
}

/// The k nearest types to `seed` by cosine similarity, seed excluded,
/// descending; exact ties broken by id ascending.
pub fn top_k_neighbors(
    model: &EmbeddingModel,
    seed: &ProductId,
    k: usize,
) -> Result<Vec<(ProductId, f64)>> {
    let pos = model.vocab.position(seed).ok_or_else(|| Error::UnknownType(seed.to_string()))?;
    if k >= model.vocab.len() {
        return Err(Error::InvalidParameter(format!(
            "k = {k} must be below the vocabulary size {}",
            model.vocab.len()
        )));
    }
    let units = unit_vectors(model)?;
    Ok(top_k_from_units(model, &units, pos, k)
        .into_iter()
        .map(|(i, sim)| (model.vocab.entry(i).id.clone(), sim))
        .collect())
}

fn top_k_from_units(
    model: &EmbeddingModel,
    units: &[f64],
    pos: usize,
    k: usize,
) -> Vec<(usize, f64)> {
    let dims = model.dims;
    let seed_row = &units[pos * dims..(pos + 1) * dims];
    let mut sims: Vec<(usize, f64)> = (0..model.vocab.len())
        .filter(|&i| i != pos)
        .map(|i| {
            let row = &units[i * dims..(i + 1) * dims];
            let dot: f64 = seed_row.iter().zip(row).map(|(a, b)| a * b).sum();
            (i, dot)
        })
        .collect();
    sims.sort_unstable_by(|a, b| {
        b.1.total_cmp(&a.1).then_with(|| model.vocab.entry(a.0).id.cmp(&model.vocab.entry(b.0).id))
    });
    sims.truncate(k);
    sims
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedSample {
    pub seeds: Vec<ProductId>,
    /// Pool actually used (the whole vocabulary when it is smaller
    /// than the requested pool).
    pub pool_used: usize,
    pub pool_clamped: bool,
}

/// Draw `sample_size` seed types without replacement from the
/// `pool_size` most frequent types (vocabulary canonical order), then
/// sort them by id for stable downstream iteration.
pub fn sample_seeds(
    vocab: &Vocabulary,
    pool_size: usize,
    sample_size: usize,
    seed: u64,
) -> Result<SeedSample> {
    let pool = pool_size.min(vocab.len());
    if sample_size > pool {
        return Err(Error::InvalidParameter(format!(
            "sample_size {sample_size} exceeds pool {pool}"
        )));
    }
    let mut rng = DeterministicRng::for_stream(seed, stream::SEED_SAMPLE, 0);
    let mut indices: Vec<usize> = (0..pool).collect();
    // partial Fisher-Yates: the first sample_size slots are the draw
    for i in 0..sample_size {
        let j = i + rng.next_range((pool - i) as u64) as usize;
        indices.swap(i, j);
    }
    let mut seeds: Vec<ProductId> =
        indices[..sample_size].iter().map(|&i| vocab.entry(i).id.clone()).collect();
    seeds.sort_unstable();
    Ok(SeedSample { seeds, pool_used: pool, pool_clamped: pool < pool_size })
}

/// Per-seed top-k neighbor ids of one model, for overlap comparisons.
#[derive(Debug, Clone)]
pub struct NeighborTable {
    pub k: usize,
    pub seeds: Vec<ProductId>,
    pub neighbors: Vec<Vec<String>>,
}

/// Build the top-k table for every seed (parallel over seeds). Every
/// seed must be in the vocabulary.
pub fn neighbor_table(
    model: &EmbeddingModel,
    seeds: &[ProductId],
    k: usize,
) -> Result<NeighborTable> {
    if k >= model.vocab.len() {
        return Err(Error::InvalidParameter(format!(
            "k = {k} must be below the vocabulary size {}",
            model.vocab.len()
        )));
    }
    let missing: Vec<String> = seeds
        .iter()
        .filter(|s| model.vocab.position(s).is_none())
        .map(|s| s.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingSeeds(missing));
    }
    let units = unit_vectors(model)?;
    let neighbors: Vec<Vec<String>> = seeds
        .par_iter()
        .map(|s| {
            let pos = model.vocab.position(s).expect("checked above");
            top_k_from_units(model, &units, pos, k)
                .into_iter()
                .map(|(i, _)| model.vocab.entry(i).id.as_str().to_owned())
                .collect()
        })
        .collect();
    Ok(NeighborTable { k, seeds: seeds.to_vec(), neighbors })
}

#[derive(Debug, Clone, Serialize)]
pub struct OverlapReport {
    pub k: usize,
    pub seeds: Vec<ProductId>,
    /// |top_k(a) ∩ top_k(b)| / k per seed, intersection on type ids.
    pub per_seed_overlap: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation over seeds (0 for a single seed).
    pub sd: f64,
    /// Seeds of the reference table that the other table lacks.
    pub dropped_seeds: usize,
}

/// Overlap between two prebuilt tables. Seeds missing from `other`
/// (possible when a leave-one-out model lost a type) are dropped from
/// the average and counted.
pub fn overlap_from_tables(
    reference: &NeighborTable,
    other: &NeighborTable,
) -> Result<OverlapReport> {
    if reference.k != other.k {
        return Err(Error::InvalidParameter(format!(
            "k mismatch: {} vs {}",
            reference.k, other.k
        )));
    }
    let mut per_seed = Vec::new();
    let mut seeds = Vec::new();
    let mut other_by_seed = std::collections::HashMap::new();
    for (s, n) in other.seeds.iter().zip(&other.neighbors) {
        other_by_seed.insert(s.as_str(), n);
    }
    for (s, n_ref) in reference.seeds.iter().zip(&reference.neighbors) {
        let Some(n_other) = other_by_seed.get(s.as_str()) else { continue };
        let set: std::collections::HashSet<&str> =
            n_ref.iter().map(String::as_str).collect();
        let hits = n_other.iter().filter(|id| set.contains(id.as_str())).count();
        per_seed.push(hits as f64 / reference.k as f64);
        seeds.push(s.clone());
    }
    if per_seed.is_empty() {
        return Err(Error::InvalidParameter("no shared seeds to compare".into()));
    }
    let n = per_seed.len() as f64;
    let mean = per_seed.iter().sum::<f64>() / n;
    let sd = if per_seed.len() < 2 {
        0.0
    } else {
        (per_seed.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Ok(OverlapReport {
        k: reference.k,
        dropped_seeds: reference.seeds.len() - seeds.len(),
        seeds,
        per_seed_overlap: per_seed,
        mean,
        sd,
    })
}

/// Overlap@k of two models over a shared seed list. Strict: every seed
/// must be present in both vocabularies.
pub fn overlap_at_k(
    model_a: &EmbeddingModel,
    model_b: &EmbeddingModel,
    seeds: &[ProductId],
    k: usize,
) -> Result<OverlapReport> {
    let table_a = neighbor_table(model_a, seeds, k)?;
    let table_b = neighbor_table(model_b, seeds, k)?;
    overlap_from_tables(&table_a, &table_b)
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterInfo {
    /// Member ids, ascending.
    pub members: Vec<String>,
    /// Share of members in the cluster's most common group; members
    /// without a group label count as their own singleton pseudo-group.
    pub purity: f64,
    pub dominant_group: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterReport {
    pub eps_sim: f64,
    pub min_neighbors: usize,
    pub n_clusters: usize,
    /// Clusters ordered by their smallest member id.
    pub clusters: Vec<ClusterInfo>,
    pub noise_count: usize,
    /// None when there are no clusters.
    pub mean_purity: Option<f64>,
    /// Filled by [`local_density`].
    pub densities: Option<Vec<usize>>,
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Density-based clustering over all retained types' input vectors.
///
/// Neighborhood: cosine similarity strictly above `eps_sim`, the point
/// itself excluded. Core point: at least `min_neighbors` neighbors.
/// Clusters are the density-connected components of the core points;
/// non-core points adjacent to a core point join the cluster of the
/// lowest-id core point claiming them, everything else is noise.
pub fn dbscan(model: &EmbeddingModel, eps_sim: f64, min_neighbors: usize) -> Result<ClusterReport> {
    let n = model.vocab.len();
    let dims = model.dims;
    let units = unit_vectors(model)?;
    let sim = |i: usize, j: usize| -> f64 {
        let a = &units[i * dims..(i + 1) * dims];
        let b = &units[j * dims..(j + 1) * dims];
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    };

    let core: Vec<bool> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut count = 0;
            for j in 0..n {
                if j != i && sim(i, j) > eps_sim {
                    count += 1;
                    if count >= min_neighbors {
                        return true;
                    }
                }
            }
            false
        })
        .collect();

    // density-connect the cores, in row chunks to bound edge memory
    let core_ids: Vec<usize> = (0..n).filter(|&i| core[i]).collect();
    let mut uf = UnionFind::new(n);
    for chunk in core_ids.chunks(128) {
        let edges: Vec<Vec<usize>> = chunk
            .par_iter()
            .map(|&i| {
                core_ids.iter().copied().filter(|&j| j > i && sim(i, j) > eps_sim).collect()
            })
            .collect();
        for (&i, js) in chunk.iter().zip(&edges) {
            for &j in js {
                uf.union(i, j);
            }
        }
    }

    // border points: lowest-id core point claiming them wins
    let border_owner: Vec<Option<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            if core[i] {
                return None;
            }
            let mut best: Option<usize> = None;
            for &j in &core_ids {
                if sim(i, j) > eps_sim {
                    best = match best {
                        None => Some(j),
                        Some(b) if model.vocab.entry(j).id < model.vocab.entry(b).id => Some(j),
                        keep => keep,
                    };
                }
            }
            best
        })
        .collect();

    let mut assignment: Vec<Option<usize>> = vec![None; n]; // -> component root
    for &i in &core_ids {
        assignment[i] = Some(uf.find(i));
    }
    for i in 0..n {
        if let Some(owner) = border_owner[i] {
            assignment[i] = Some(uf.find(owner));
        }
    }

    let mut by_root: std::collections::HashMap<usize, Vec<usize>> =
        std::collections::HashMap::new();
    let mut noise_count = 0;
    for i in 0..n {
        match assignment[i] {
            Some(root) => by_root.entry(root).or_default().push(i),
            None => noise_count += 1,
        }
    }

    let mut clusters: Vec<ClusterInfo> = by_root
        .into_values()
        .map(|members| cluster_info(model, members))
        .collect();
    clusters.sort_unstable_by(|a, b| a.members[0].cmp(&b.members[0]));
    let mean_purity = if clusters.is_empty() {
        None
    } else {
        Some(clusters.iter().map(|c| c.purity).sum::<f64>() / clusters.len() as f64)
    };
    Ok(ClusterReport {
        eps_sim,
        min_neighbors,
        n_clusters: clusters.len(),
        clusters,
        noise_count,
        mean_purity,
        densities: None,
    })
}

fn cluster_info(model: &EmbeddingModel, mut members: Vec<usize>) -> ClusterInfo {
    members.sort_unstable_by(|&a, &b| model.vocab.entry(a).id.cmp(&model.vocab.entry(b).id));
    // group -> count; unlabeled members are their own pseudo-group
    let mut counts: std::collections::BTreeMap<&str, usize> = std::collections::BTreeMap::new();
    for &m in &members {
        let e = model.vocab.entry(m);
        let key = e.group.as_deref().unwrap_or(e.id.as_str());
        *counts.entry(key).or_insert(0) += 1;
    }
    // BTreeMap iterates keys ascending, so the first maximum is the
    // lexicographically smallest group among ties
    let (dominant, best) = counts
        .iter()
        .fold(("", 0usize), |acc, (k, &c)| if c > acc.1 { (k, c) } else { acc });
    ClusterInfo {
        purity: best as f64 / members.len() as f64,
        dominant_group: dominant.to_owned(),
        members: members
            .into_iter()
            .map(|m| model.vocab.entry(m).id.as_str().to_owned())
            .collect(),
    }
}

/// Per-cluster local density: how many of the `cap` types nearest to
/// the cluster centroid (arithmetic mean of member vectors, not
/// normalized) lie within the similarity radius. The centroid is not a
/// vocabulary point, so no self-exclusion applies.
pub fn local_density(
    model: &EmbeddingModel,
    report: &ClusterReport,
    radius_sim: f64,
    cap: usize,
) -> Result<Vec<usize>> {
    let dims = model.dims;
    report
        .clusters
        .par_iter()
        .map(|cluster| {
            let mut centroid = vec![0.0; dims];
            for id in &cluster.members {
                let pos = model
                    .vocab
                    .position_str(id)
                    .ok_or_else(|| Error::UnknownType(id.clone()))?;
                for (c, v) in centroid.iter_mut().zip(model.input_row(pos)) {
                    *c += v;
                }
            }
            for c in centroid.iter_mut() {
                *c /= cluster.members.len() as f64;
            }
            let mut qualifying = 0usize;
            for i in 0..model.vocab.len() {
                if cosine(&centroid, model.input_row(i))? >= radius_sim {
                    qualifying += 1;
                }
            }
            Ok(qualifying.min(cap))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ClusterDelta {
    pub delta_n_clusters: i64,
    pub delta_noise: i64,
    pub delta_mean_purity: Option<f64>,
}

/// Componentwise differences, second report minus first.
pub fn cluster_delta(a: &ClusterReport, b: &ClusterReport) -> ClusterDelta {
    ClusterDelta {
        delta_n_clusters: b.n_clusters as i64 - a.n_clusters as i64,
        delta_noise: b.noise_count as i64 - a.noise_count as i64,
        delta_mean_purity: match (a.mean_purity, b.mean_purity) {
            (Some(x), Some(y)) => Some(y - x),
            _ => None,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocabulary, load_corpus, GroupCatalog};
    use crate::trainer::TrainMode;

    /// Model with hand-set vectors; frequencies make `names` the
    /// canonical order.
    fn hand_model(names: &[&str], vectors: Vec<Vec<f64>>, groups: Option<&GroupCatalog>) -> EmbeddingModel {
        let n = names.len();
        let mut text = String::new();
        for (i, name) in names.iter().enumerate() {
            for _ in 0..(n - i) {
                text.push_str(name);
                text.push('\n');
            }
        }
        let corpus = load_corpus(&text, "t").unwrap();
        let vocab = build_vocabulary(&corpus, 1, groups).unwrap();
        let dims = vectors[0].len();
        let mut input = Vec::new();
        for v in &vectors {
            input.extend_from_slice(v);
        }
        EmbeddingModel::from_parts(vocab, dims, Some(TrainMode::Hs), input, vec![]).unwrap()
    }

    #[test]
    fn cosine_basics() {
        let u = vec![1.0, 1.0];
        assert!((cosine(&u, &u).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c = cosine(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((c - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroVector(_))));
    }

    #[test]
    fn top_one_picks_nearest() {
        let m = hand_model(
            &["A", "B", "C"],
            vec![vec![1.0, 0.0], vec![0.9, 0.1], vec![0.0, 1.0]],
            None,
        );
        let top = top_k_neighbors(&m, &ProductId::new("A").unwrap(), 1).unwrap();
        assert_eq!(top[0].0.as_str(), "B");
        let all = top_k_neighbors(&m, &ProductId::new("A").unwrap(), 2).unwrap();
        assert_eq!(all.len(), 2);
        assert!(matches!(
            top_k_neighbors(&m, &ProductId::new("A").unwrap(), 3),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            top_k_neighbors(&m, &ProductId::new("zz").unwrap(), 1),
            Err(Error::UnknownType(_))
        ));
    }

    #[test]
    fn identical_vectors_tie_break_by_id() {
        let m = hand_model(
            &["A", "B", "C"],
            vec![vec![1.0, 0.0], vec![0.5, 0.5], vec![0.5, 0.5]],
            None,
        );
        let top = top_k_neighbors(&m, &ProductId::new("A").unwrap(), 2).unwrap();
        assert_eq!(top[0].0.as_str(), "B");
        assert_eq!(top[1].0.as_str(), "C");
    }

    #[test]
    fn scaling_a_vector_does_not_change_ranking() {
        let m1 = hand_model(
            &["A", "B", "C", "D"],
            vec![vec![1.0, 0.2], vec![0.8, 0.3], vec![0.1, 0.9], vec![0.5, 0.5]],
            None,
        );
        let m2 = hand_model(
            &["A", "B", "C", "D"],
            vec![vec![1.0, 0.2], vec![8.0, 3.0], vec![0.1, 0.9], vec![0.5, 0.5]],
            None,
        );
        let a = ProductId::new("A").unwrap();
        let t1: Vec<String> =
            top_k_neighbors(&m1, &a, 3).unwrap().into_iter().map(|(i, _)| i.to_string()).collect();
        let t2: Vec<String> =
            top_k_neighbors(&m2, &a, 3).unwrap().into_iter().map(|(i, _)| i.to_string()).collect();
        assert_eq!(t1, t2);
    }

    #[test]
    fn seed_sampling_rules() {
        let corpus = load_corpus(
            &(0..10).map(|i| format!("t{i}")).collect::<Vec<_>>().join(" "),
            "t",
        )
        .unwrap();
        let vocab = build_vocabulary(&corpus, 1, None).unwrap();
        // pool 10, sample 10 -> whole pool
        let s = sample_seeds(&vocab, 10, 10, 5).unwrap();
        assert_eq!(s.seeds.len(), 10);
        // same seed twice -> identical
        let s2 = sample_seeds(&vocab, 10, 5, 5).unwrap();
        let s3 = sample_seeds(&vocab, 10, 5, 5).unwrap();
        assert_eq!(s2.seeds, s3.seeds);
        // sample 11 from pool 10 -> error
        assert!(sample_seeds(&vocab, 10, 11, 5).is_err());
        // pool larger than vocab clamps and records it
        let s4 = sample_seeds(&vocab, 100, 5, 5).unwrap();
        assert!(s4.pool_clamped);
        assert_eq!(s4.pool_used, 10);
    }

    #[test]
    fn overlap_self_is_one() {
        let m = hand_model(
            &["A", "B", "C", "D", "E"],
            vec![
                vec![1.0, 0.0, 0.0],
                vec![0.9, 0.1, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.9, 0.1],
                vec![0.5, 0.5, 0.5],
            ],
            None,
        );
        let seeds = vec![ProductId::new("A").unwrap(), ProductId::new("C").unwrap()];
        let r = overlap_at_k(&m, &m, &seeds, 3).unwrap();
        assert_eq!(r.mean, 1.0);
        assert_eq!(r.sd, 0.0);
    }

    #[test]
    fn overlap_disjoint_neighborhoods_is_zero() {
        // seed S sits between two groups; in m1 its neighbors are the
        // x side, in m2 the y side
        let names = ["S", "x1", "x2", "y1", "y2"];
        let m1 = hand_model(
            &names,
            vec![
                vec![1.0, 0.0],
                vec![0.95, 0.05],
                vec![0.9, 0.1],
                vec![-1.0, 0.2],
                vec![-1.0, 0.1],
            ],
            None,
        );
        let m2 = hand_model(
            &names,
            vec![
                vec![1.0, 0.0],
                vec![-1.0, 0.2],
                vec![-1.0, 0.1],
                vec![0.95, 0.05],
                vec![0.9, 0.1],
            ],
            None,
        );
        let seeds = vec![ProductId::new("S").unwrap()];
        let r = overlap_at_k(&m1, &m2, &seeds, 2).unwrap();
        assert_eq!(r.mean, 0.0);
    }

    #[test]
    fn overlap_missing_seed_lists_offender() {
        let m1 = hand_model(&["A", "B"], vec![vec![1.0, 0.0], vec![0.0, 1.0]], None);
        let m2 = hand_model(&["A", "C"], vec![vec![1.0, 0.0], vec![0.0, 1.0]], None);
        let seeds = vec![ProductId::new("B").unwrap()];
        match overlap_at_k(&m1, &m2, &seeds, 1) {
            Err(Error::MissingSeeds(ids)) => assert_eq!(ids, vec!["B".to_string()]),
            other => panic!("expected MissingSeeds, got {other:?}"),
        }
    }

    #[test]
    fn twelve_of_fifteen_is_point_eight() {
        assert_eq!(12.0f64 / 15.0, 0.8);
    }

    fn block_model(n_per_block: usize) -> EmbeddingModel {
        // n copies of u plus n copies of an orthogonal v
        let names: Vec<String> = (0..n_per_block)
            .map(|i| format!("u{i:02}"))
            .chain((0..n_per_block).map(|i| format!("v{i:02}")))
            .collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let vectors: Vec<Vec<f64>> = (0..n_per_block)
            .map(|_| vec![1.0, 0.0])
            .chain((0..n_per_block).map(|_| vec![0.0, 1.0]))
            .collect();
        hand_model(&refs, vectors, None)
    }

    #[test]
    fn dbscan_two_blocks() {
        // 12 + 12 identical vectors: every point has 11 neighbors at
        // similarity 1 -> two clusters, no noise
        let m = block_model(12);
        let r = dbscan(&m, 0.8, 10).unwrap();
        assert_eq!(r.n_clusters, 2);
        assert_eq!(r.noise_count, 0);
        assert_eq!(r.clusters.iter().map(|c| c.members.len()).sum::<usize>(), 24);
    }

    #[test]
    fn dbscan_isolated_points_are_noise() {
        let names = ["a", "b", "c", "d", "e"];
        let vectors = (0..5)
            .map(|i| {
                let mut v = vec![0.0; 5];
                v[i] = 1.0;
                v
            })
            .collect();
        let m = hand_model(&names, vectors, None);
        let r = dbscan(&m, 0.8, 10).unwrap();
        assert_eq!(r.n_clusters, 0);
        assert_eq!(r.noise_count, 5);
        assert_eq!(r.mean_purity, None);
    }

    #[test]
    fn dbscan_purity_with_groups() {
        let mut groups = GroupCatalog::new();
        for i in 0..12 {
            groups.insert(ProductId::new(format!("u{i:02}")).unwrap(), "left");
            let side = if i < 6 { "right" } else { "other" };
            groups.insert(ProductId::new(format!("v{i:02}")).unwrap(), side);
        }
        let names: Vec<String> = (0..12)
            .map(|i| format!("u{i:02}"))
            .chain((0..12).map(|i| format!("v{i:02}")))
            .collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let vectors: Vec<Vec<f64>> = (0..12)
            .map(|_| vec![1.0, 0.0])
            .chain((0..12).map(|_| vec![0.0, 1.0]))
            .collect();
        let m = hand_model(&refs, vectors, Some(&groups));
        let r = dbscan(&m, 0.8, 10).unwrap();
        assert_eq!(r.n_clusters, 2);
        let u_cluster = r.clusters.iter().find(|c| c.members[0].starts_with('u')).unwrap();
        assert_eq!(u_cluster.purity, 1.0);
        assert_eq!(u_cluster.dominant_group, "left");
        let v_cluster = r.clusters.iter().find(|c| c.members[0].starts_with('v')).unwrap();
        assert_eq!(v_cluster.purity, 0.5);
        // tie between "right" and "other" (6 each) goes to the
        // lexicographically smaller group
        assert_eq!(v_cluster.dominant_group, "other");
    }

    #[test]
    fn local_density_counts_and_caps() {
        let m = block_model(12);
        let r = dbscan(&m, 0.8, 10).unwrap();
        let d = local_density(&m, &r, 0.8, 200).unwrap();
        // all 12 members coincide with the centroid
        assert_eq!(d, vec![12, 12]);
        let capped = local_density(&m, &r, 0.8, 5).unwrap();
        assert_eq!(capped, vec![5, 5]);
        // an unreachable radius leaves every cluster at density zero
        let none = local_density(&m, &r, 1.1, 200).unwrap();
        assert_eq!(none, vec![0, 0]);
    }

    #[test]
    fn cluster_delta_arithmetic() {
        let m = block_model(12);
        let r = dbscan(&m, 0.8, 10).unwrap();
        let d = cluster_delta(&r, &r);
        assert_eq!(d.delta_n_clusters, 0);
        assert_eq!(d.delta_noise, 0);
        assert_eq!(d.delta_mean_purity, Some(0.0));
        // two clusters vs one -> -1
        let names: Vec<String> = (0..12).map(|i| format!("w{i:02}")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let single = hand_model(&refs, (0..12).map(|_| vec![1.0, 0.0]).collect(), None);
        let r1 = dbscan(&single, 0.8, 10).unwrap();
        assert_eq!(r1.n_clusters, 1);
        assert_eq!(cluster_delta(&r, &r1).delta_n_clusters, -1);
        // reference-model arithmetic: 429 clusters vs 422 -> -7
        assert_eq!(422i64 - 429i64, -7);
    }
}
