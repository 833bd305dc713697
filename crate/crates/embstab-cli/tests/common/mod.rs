//! Independent oracles for the acceptance suite. Everything here is
//! deliberately written through a different algorithmic route than the
//! implementation it checks and must stay that way.

use std::collections::BTreeSet;

/// Huffman codes via repeated minimum scans over a flat node list,
/// with the pinned tie-break spelled out as a total order: smaller
/// weight first, then leaves before merged nodes, then the node that
/// entered earlier. Input entries must be in vocabulary canonical
/// order (frequency descending, id ascending).
pub fn huffman_scan_codes(entries: &[(String, u64)]) -> Vec<(String, Vec<u8>)> {
    let n = entries.len();
    assert!(n > 0);
    if n == 1 {
        return vec![(entries[0].0.clone(), vec![])];
    }
    #[derive(Clone, Copy, PartialEq, Eq)]
    enum Kind {
        Leaf(usize),   // rank in the ascending-frequency array
        Merged(usize), // creation sequence number
    }
    struct Node {
        weight: u64,
        kind: Kind,
        children: Option<(usize, usize)>,
    }
    // ascending order = canonical order reversed
    let mut nodes: Vec<Node> = entries
        .iter()
        .rev()
        .enumerate()
        .map(|(rank, (_, freq))| Node { weight: *freq, kind: Kind::Leaf(rank), children: None })
        .collect();
    let mut active: Vec<usize> = (0..n).collect();
    let order_key = |node: &Node| -> (u64, u8, usize) {
        match node.kind {
            Kind::Leaf(rank) => (node.weight, 0, rank),
            Kind::Merged(seq) => (node.weight, 1, seq),
        }
    };
    let mut seq = 0;
    while active.len() > 1 {
        let take_min = |active: &mut Vec<usize>, nodes: &Vec<Node>| -> usize {
            let best = active
                .iter()
                .enumerate()
                .min_by_key(|(_, &id)| order_key(&nodes[id]))
                .map(|(i, _)| i)
                .unwrap();
            active.swap_remove(best)
        };
        let first = take_min(&mut active, &nodes);
        let second = take_min(&mut active, &nodes);
        nodes.push(Node {
            weight: nodes[first].weight + nodes[second].weight,
            kind: Kind::Merged(seq),
            children: Some((first, second)),
        });
        seq += 1;
        let id = nodes.len() - 1;
        active.push(id);
    }
    let root = active[0];
    // collect codes: first-popped child takes bit 0
    let mut codes: Vec<Option<Vec<u8>>> = (0..n).map(|_| None).collect();
    let mut stack = vec![(root, Vec::new())];
    while let Some((id, code)) = stack.pop() {
        match nodes[id].children {
            Some((a, b)) => {
                let mut c0 = code.clone();
                c0.push(0);
                stack.push((a, c0));
                let mut c1 = code;
                c1.push(1);
                stack.push((b, c1));
            }
            None => {
                if let Kind::Leaf(rank) = nodes[id].kind {
                    codes[rank] = Some(code);
                }
            }
        }
    }
    entries
        .iter()
        .rev()
        .zip(codes)
        .map(|((id, _), code)| (id.clone(), code.expect("leaf reached")))
        .rev()
        .collect()
}

/// Minimum weighted code length over every valid prefix code, found by
/// enumerating all nondecreasing code-length profiles whose Kraft sum
/// is exactly one (tracked in integer units of 2^-(n-1)) and pairing
/// them with the frequencies in descending order.
pub fn optimal_weighted_length(freqs_desc: &[u64]) -> u64 {
    let n = freqs_desc.len();
    assert!(n > 0);
    if n == 1 {
        return 0;
    }
    for w in freqs_desc.windows(2) {
        assert!(w[0] >= w[1], "frequencies must be descending");
    }
    let max_len = n - 1;
    let unit = 1u64 << max_len; // capacity in units of 2^-(n-1)
    let mut best = u64::MAX;
    // lengths assigned to frequencies in descending order must be
    // nondecreasing in any optimal code (rearrangement inequality)
    fn dfs(
        freqs: &[u64],
        i: usize,
        min_len: usize,
        capacity: u64,
        acc: u64,
        max_len: usize,
        best: &mut u64,
    ) {
        let n = freqs.len();
        if i == n {
            if capacity == 0 {
                *best = (*best).min(acc);
            }
            return;
        }
        let remaining = (n - i) as u64;
        if capacity < remaining || acc >= *best {
            return; // each remaining leaf needs at least one unit
        }
        for len in min_len..=max_len {
            let cost = 1u64 << (max_len - len);
            if cost * remaining < capacity {
                break; // even all leaves at this depth cannot fill up,
                       // and deeper levels only consume less
            }
            if cost + (remaining - 1) > capacity {
                continue; // too expensive here; deeper is cheaper
            }
            dfs(freqs, i + 1, len, capacity - cost, acc + freqs[i] * len as u64, max_len, best);
        }
    }
    dfs(freqs_desc, 0, 1, unit, 0, max_len, &mut best);
    best
}

/// Plain-text clustering result in canonical form for set comparison.
#[derive(Debug, PartialEq, Eq)]
pub struct RefClustering {
    /// Each cluster as a sorted id list; clusters sorted by first id.
    pub clusters: Vec<Vec<String>>,
    pub noise: Vec<String>,
}

/// Literal quadratic DBSCAN over raw vectors: pairwise cosine from the
/// definition, neighbor lists, BFS over core points, borders claimed
/// by the lowest-id core neighbor.
pub fn dbscan_reference(
    ids: &[String],
    vectors: &[Vec<f64>],
    eps_sim: f64,
    min_neighbors: usize,
) -> RefClustering {
    let n = ids.len();
    let cos = |a: &[f64], b: &[f64]| -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    };
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if i != j && cos(&vectors[i], &vectors[j]) > eps_sim {
                neighbors[i].push(j);
            }
        }
    }
    let core: Vec<bool> = neighbors.iter().map(|ns| ns.len() >= min_neighbors).collect();
    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut next = 0;
    for start in 0..n {
        if !core[start] || label[start].is_some() {
            continue;
        }
        let id = next;
        next += 1;
        let mut queue = vec![start];
        label[start] = Some(id);
        while let Some(at) = queue.pop() {
            for &j in &neighbors[at] {
                if core[j] && label[j].is_none() {
                    label[j] = Some(id);
                    queue.push(j);
                }
            }
        }
    }
    // borders
    for i in 0..n {
        if core[i] {
            continue;
        }
        let mut claimant: Option<usize> = None;
        for &j in &neighbors[i] {
            if core[j] {
                claimant = match claimant {
                    None => Some(j),
                    Some(c) if ids[j] < ids[c] => Some(j),
                    keep => keep,
                };
            }
        }
        if let Some(c) = claimant {
            label[i] = label[c];
        }
    }
    let mut clusters: Vec<BTreeSet<String>> = vec![BTreeSet::new(); next];
    let mut noise = Vec::new();
    for i in 0..n {
        match label[i] {
            Some(l) => {
                clusters[l].insert(ids[i].clone());
            }
            None => noise.push(ids[i].clone()),
        }
    }
    let mut clusters: Vec<Vec<String>> =
        clusters.into_iter().map(|s| s.into_iter().collect()).collect();
    clusters.sort();
    noise.sort();
    RefClustering { clusters, noise }
}

/// Solve the 3-coefficient normal equations (intercept + 2 features)
/// by Cramer's rule.
pub fn normal_equations_3(x1: &[f64], x2: &[f64], y: &[f64]) -> [f64; 3] {
    let n = y.len() as f64;
    let s = |v: &[f64]| v.iter().sum::<f64>();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    let a = [
        [n, s(x1), s(x2)],
        [s(x1), dot(x1, x1), dot(x1, x2)],
        [s(x2), dot(x1, x2), dot(x2, x2)],
    ];
    let b = [s(y), dot(x1, y), dot(x2, y)];
    let det3 = |m: &[[f64; 3]; 3]| -> f64 {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det3(&a);
    let mut out = [0.0; 3];
    for k in 0..3 {
        let mut m = a;
        for r in 0..3 {
            m[r][k] = b[r];
        }
        out[k] = det3(&m) / d;
    }
    out
}
