//! Independent reference implementations used by the integration tests.
//!
//! Nothing here calls into the library's scoring, ranking or metric code;
//! the oracles work from a dense 0/1 adjacency matrix and naive loops.

#![allow(dead_code)]

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use twra::BipartiteGraph;

/// Random graph with at most `max_users` users and `max_items` items.
/// Isolated nodes never get an index, so every degree is at least 1.
pub fn random_graph(seed: u64, max_users: usize, max_items: usize) -> BipartiteGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.gen_range(2..=max_users);
    let n = rng.gen_range(2..=max_items);
    let density: f64 = rng.gen_range(0.05..0.5);
    let mut links = Vec::new();
    for u in 0..m {
        for i in 0..n {
            if rng.gen_bool(density) {
                links.push((format!("u{u}"), format!("i{i}")));
            }
        }
    }
    // Two fixed links keep at least two users and two items.
    links.push(("u0".into(), "i0".into()));
    links.push((format!("u{}", m - 1), format!("i{}", n - 1)));
    BipartiteGraph::from_raw_links(links.iter().map(|(u, i)| (u.as_str(), i.as_str()))).unwrap()
}

pub struct Dense {
    pub a: Vec<Vec<f64>>,
    pub ku: Vec<f64>,
    pub ki: Vec<f64>,
}

pub fn dense(g: &BipartiteGraph) -> Dense {
    let (m, n) = (g.num_users(), g.num_items());
    let mut a = vec![vec![0.0; n]; m];
    for (u, i) in g.links() {
        a[u as usize][i as usize] = 1.0;
    }
    let ku = a.iter().map(|row| row.iter().sum()).collect();
    let ki = (0..n).map(|i| (0..m).map(|u| a[u][i]).sum()).collect();
    Dense { a, ku, ki }
}

/// Σ_j Σ_v a_uj a_vj a_vi / (k_j k_v)^α
pub fn oracle_p3_alpha(d: &Dense, u: usize, i: usize, alpha: f64) -> f64 {
    let (m, n) = (d.a.len(), d.ki.len());
    let mut s = 0.0;
    for j in 0..n {
        for v in 0..m {
            let paths = d.a[u][j] * d.a[v][j] * d.a[v][i];
            if paths != 0.0 {
                s += paths / (d.ki[j] * d.ku[v]).powf(alpha);
            }
        }
    }
    s
}

pub fn oracle_p3(d: &Dense, u: usize, i: usize) -> f64 {
    oracle_p3_alpha(d, u, i, 1.0)
}

pub fn oracle_rp3_beta(d: &Dense, u: usize, i: usize, beta: f64) -> f64 {
    oracle_p3(d, u, i) / d.ki[i].powf(beta)
}

/// Σ_j a_uj / (k_i^{1-λ} k_j^λ) Σ_v a_vj a_vi / k_v
pub fn oracle_hhp(d: &Dense, u: usize, i: usize, lambda: f64) -> f64 {
    let (m, n) = (d.a.len(), d.ki.len());
    let mut s = 0.0;
    for j in 0..n {
        if d.a[u][j] == 0.0 {
            continue;
        }
        let inner: f64 = (0..m).map(|v| d.a[v][j] * d.a[v][i] / d.ku[v]).sum();
        s += inner / (d.ki[i].powf(1.0 - lambda) * d.ki[j].powf(lambda));
    }
    s
}

pub fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    let scale = a.abs().max(b.abs());
    (a - b).abs() <= rel * scale || (a - b).abs() <= f64::MIN_POSITIVE
}

/// Σ_k |list_k ∩ probe_k| / L / m with hash sets.
pub fn naive_precision(lists: &[Vec<u32>], probe: &[(u32, u32)], l: usize) -> f64 {
    let probe: HashSet<(u32, u32)> = probe.iter().copied().collect();
    let total: f64 = lists
        .iter()
        .enumerate()
        .map(|(u, list)| list.iter().filter(|&&i| probe.contains(&(u as u32, i))).count() as f64 / l as f64)
        .sum();
    total / lists.len() as f64
}

/// Pairwise Hamming distance by explicit set intersection.
pub fn naive_hamming(lists: &[Vec<u32>], l: usize) -> f64 {
    let sets: Vec<HashSet<u32>> = lists.iter().map(|x| x.iter().copied().collect()).collect();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for u in 0..sets.len() {
        for v in u + 1..sets.len() {
            total += 1.0 - sets[u].intersection(&sets[v]).count() as f64 / l as f64;
            pairs += 1;
        }
    }
    total / pairs as f64
}

/// Mean Hamming distance from item co-recommendation counts:
/// Σ_{u<v} D_uv = Σ_i c_i (c_i − 1) / 2.
pub fn closed_form_hamming(lists: &[Vec<u32>], n: usize, l: usize) -> f64 {
    let mut c = vec![0u64; n];
    for &i in lists.iter().flatten() {
        c[i as usize] += 1;
    }
    let shared: u64 = c.iter().map(|&x| x * x.saturating_sub(1) / 2).sum();
    let m = lists.len() as u64;
    1.0 - shared as f64 / (l as f64 * (m * (m - 1) / 2) as f64)
}

/// Up to `cap` permutations of `items`, in lexicographic position order.
fn permutations(items: &[usize], cap: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, rest: &mut Vec<usize>, cap: usize, out: &mut Vec<Vec<usize>>) {
        if out.len() >= cap {
            return;
        }
        if rest.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for k in 0..rest.len() {
            let x = rest.remove(k);
            prefix.push(x);
            go(prefix, rest, cap, out);
            prefix.pop();
            rest.insert(k, x);
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut items.to_vec(), cap, &mut out);
    out
}

/// Evaluates `1 − (1/(n−1)) Σ_q (2q − n − 1) p(i_q)` for every ordering of
/// the items that is consistent with ascending count (up to `cap`
/// orderings) and returns all values.
pub fn brute_force_gini(counts: &[u64], cap: usize) -> Vec<f64> {
    let n = counts.len();
    let total: u64 = counts.iter().sum();
    let mut distinct: Vec<u64> = counts.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let groups: Vec<Vec<Vec<usize>>> = distinct
        .iter()
        .map(|&c| {
            let members: Vec<usize> = (0..n).filter(|&i| counts[i] == c).collect();
            permutations(&members, cap)
        })
        .collect();
    let mut orderings: Vec<Vec<usize>> = vec![Vec::new()];
    for perms in &groups {
        let mut next = Vec::new();
        'outer: for prefix in &orderings {
            for p in perms {
                let mut o = prefix.clone();
                o.extend(p);
                next.push(o);
                if next.len() >= cap {
                    break 'outer;
                }
            }
        }
        orderings = next;
    }
    orderings
        .iter()
        .map(|order| {
            let sum: f64 = order
                .iter()
                .enumerate()
                .map(|(q0, &item)| {
                    let q = (q0 + 1) as f64;
                    (2.0 * q - n as f64 - 1.0) * counts[item] as f64 / total as f64
                })
                .sum();
            1.0 - sum / (n as f64 - 1.0)
        })
        .collect()
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut k = 0;
        while k < idx.len() {
            let mut e = k;
            while e + 1 < idx.len() && v[idx[e + 1]] == v[idx[k]] {
                e += 1;
            }
            let avg = (k + e) as f64 / 2.0 + 1.0;
            for &i in &idx[k..=e] {
                r[i] = avg;
            }
            k = e + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}
