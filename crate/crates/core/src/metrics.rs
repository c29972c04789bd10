//! Accuracy, diversity and coverage of recommendation lists.

use std::collections::BTreeMap;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{BipartiteGraph, ProbeSet};
use crate::error::{Error, Result};
use crate::par;
use crate::ranking::RecommendationLists;

/// Above this many users exact Hamming distance switches to sampling.
pub const EXACT_HAMMING_MAX_USERS: usize = 10_000;
pub const DEFAULT_SAMPLED_PAIRS: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum HammingMode {
    Exact,
    Sampled { pair_count: u64, seed: u64 },
}

impl HammingMode {
    /// Exact up to [`EXACT_HAMMING_MAX_USERS`], sampled beyond.
    pub fn auto(num_users: usize, seed: u64) -> Self {
        if num_users <= EXACT_HAMMING_MAX_USERS {
            HammingMode::Exact
        } else {
            HammingMode::Sampled {
                pair_count: DEFAULT_SAMPLED_PAIRS,
                seed,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrecisionMode {
    /// Average over every training user; users without probe links count as 0.
    #[default]
    AllUsers,
    /// Average over users with at least one probe link.
    ProbeUsers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: f64,
    pub hamming: f64,
    pub gini: f64,
    #[serde(rename = "L")]
    pub list_len: usize,
    pub hamming_mode: HammingMode,
}

/// `(1/m) Σ_k h_k / L` over all `m` users of the lists.
pub fn precision_at_l(lists: &RecommendationLists, probe: &ProbeSet) -> f64 {
    precision_with_mode(lists, probe, PrecisionMode::AllUsers)
}

pub fn precision_with_mode(lists: &RecommendationLists, probe: &ProbeSet, mode: PrecisionMode) -> f64 {
    let l = lists.list_len as f64;
    let mut total = 0.0;
    let mut users = 0usize;
    for (u, list) in lists.lists.iter().enumerate() {
        let held_out = probe.items_of(u);
        if mode == PrecisionMode::ProbeUsers && held_out.is_empty() {
            continue;
        }
        users += 1;
        let hits = list.iter().filter(|i| held_out.binary_search(i).is_ok()).count();
        total += hits as f64 / l;
    }
    if users == 0 {
        0.0
    } else {
        total / users as f64
    }
}

fn common_items(a: &[u32], b: &[u32]) -> u64 {
    let (mut x, mut y, mut common) = (0, 0, 0u64);
    while x < a.len() && y < b.len() {
        match a[x].cmp(&b[y]) {
            std::cmp::Ordering::Less => x += 1,
            std::cmp::Ordering::Greater => y += 1,
            std::cmp::Ordering::Equal => {
                common += 1;
                x += 1;
                y += 1;
            }
        }
    }
    common
}

fn unordered_pair(index: u64, m: u64) -> (usize, usize) {
    // Row u holds pairs (u, u+1..m); rows before u hold Σ (m-1-r) pairs.
    let mut lo = 0u64;
    let mut hi = m - 1;
    let start = |u: u64| u * (2 * m - u - 1) / 2;
    while lo < hi {
        let mid = (lo + hi).div_ceil(2);
        if start(mid) <= index {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    let u = lo;
    let v = u + 1 + (index - start(u));
    (u as usize, v as usize)
}

/// Mean of `1 − D_uv / L` over user pairs, where `D_uv` counts the items two
/// lists share.
pub fn hamming_distance(lists: &RecommendationLists, mode: HammingMode) -> Result<f64> {
    let m = lists.num_users();
    if m < 2 {
        return Err(Error::TooFewUsers(m));
    }
    let sorted: Vec<Vec<u32>> = lists
        .lists
        .iter()
        .map(|l| {
            let mut l = l.clone();
            l.sort_unstable();
            l
        })
        .collect();
    let total_pairs = (m as u64) * (m as u64 - 1) / 2;
    let (common, pairs) = match mode {
        HammingMode::Exact => {
            let common = par::sum_range_u64(m, |u| {
                sorted[u + 1..]
                    .iter()
                    .map(|other| common_items(&sorted[u], other))
                    .sum()
            });
            (common, total_pairs)
        }
        HammingMode::Sampled { pair_count, seed } => {
            let count = pair_count.min(total_pairs);
            if count == 0 {
                return Err(Error::TooFewUsers(m));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let picks = sample_pair_indices(&mut rng, total_pairs, count);
            let common = par::sum_range_u64(picks.len(), |k| {
                let (u, v) = unordered_pair(picks[k], m as u64);
                common_items(&sorted[u], &sorted[v])
            });
            (common, count)
        }
    };
    Ok(1.0 - common as f64 / (lists.list_len as f64 * pairs as f64))
}

fn sample_pair_indices(rng: &mut ChaCha8Rng, total: u64, count: u64) -> Vec<u64> {
    if total <= u32::MAX as u64 {
        rand::seq::index::sample(rng, total as usize, count as usize)
            .into_iter()
            .map(|i| i as u64)
            .collect()
    } else {
        // Floyd's algorithm for populations beyond usize sampling helpers.
        use rand::Rng;
        let mut chosen = std::collections::HashSet::with_capacity(count as usize);
        let mut out = Vec::with_capacity(count as usize);
        for j in total - count..total {
            let t = rng.gen_range(0..=j);
            let pick = if chosen.insert(t) {
                t
            } else {
                chosen.insert(j);
                j
            };
            out.push(pick);
        }
        out
    }
}

/// Per-item recommendation counts over `num_items` items.
pub fn recommendation_counts(lists: &RecommendationLists, num_items: usize) -> Vec<u64> {
    let mut counts = vec![0u64; num_items];
    for &i in lists.lists.iter().flatten() {
        counts[i as usize] += 1;
    }
    counts
}

/// `1 − (1/(n−1)) Σ_q (2q − n − 1) p(i_q)` with items in ascending order of
/// recommendation count. 1 means perfectly even exposure, 0 means every
/// recommendation went to one item.
pub fn gini_coefficient(lists: &RecommendationLists, num_items: usize) -> Result<f64> {
    let mut counts = recommendation_counts(lists, num_items);
    let total: u64 = counts.iter().sum();
    if num_items < 2 || total == 0 {
        return Err(Error::NoRecommendations);
    }
    // Equal counts contribute identically, so an unstable sort is enough.
    counts.sort_unstable();
    let n = num_items as f64;
    let weighted: f64 = counts
        .iter()
        .enumerate()
        .map(|(k, &c)| (2.0 * (k + 1) as f64 - n - 1.0) * c as f64)
        .sum();
    Ok(1.0 - weighted / total as f64 / (n - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegreeHistogramRow {
    pub item_degree: u32,
    pub item_frequency: f64,
    pub recommendation_frequency: f64,
}

/// Catalog share and recommendation-slot share per distinct item degree.
pub fn degree_histograms(graph: &BipartiteGraph, lists: &RecommendationLists) -> Vec<DegreeHistogramRow> {
    let counts = recommendation_counts(lists, graph.num_items());
    let total_slots: u64 = counts.iter().sum();
    let mut by_degree: BTreeMap<u32, (u64, u64)> = BTreeMap::new();
    for (i, &c) in counts.iter().enumerate() {
        let entry = by_degree.entry(graph.item_degree(i) as u32).or_default();
        entry.0 += 1;
        entry.1 += c;
    }
    let n = graph.num_items() as f64;
    by_degree
        .into_iter()
        .map(|(d, (items, slots))| DegreeHistogramRow {
            item_degree: d,
            item_frequency: items as f64 / n,
            recommendation_frequency: if total_slots == 0 {
                0.0
            } else {
                slots as f64 / total_slots as f64
            },
        })
        .collect()
}

pub fn write_histogram_csv(rows: &[DegreeHistogramRow], w: impl Write) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    for r in rows {
        writer.serialize(r)?;
    }
    writer.flush()?;
    Ok(())
}

/// Precision, Hamming distance and Gini coefficient of `lists`.
pub fn evaluate(
    lists: &RecommendationLists,
    probe: &ProbeSet,
    num_items: usize,
    hamming_mode: HammingMode,
) -> Result<MetricsReport> {
    Ok(MetricsReport {
        precision: precision_at_l(lists, probe),
        hamming: hamming_distance(lists, hamming_mode)?,
        gini: gini_coefficient(lists, num_items)?,
        list_len: lists.list_len,
        hamming_mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lists(l: usize, v: Vec<Vec<u32>>) -> RecommendationLists {
        RecommendationLists { list_len: l, lists: v }
    }

    #[test]
    fn perfect_and_empty_precision() {
        let recs = lists(2, vec![vec![0, 1], vec![2, 3]]);
        let probe = ProbeSet::new(2, &[(0, 0), (0, 1), (1, 2), (1, 3)]);
        assert_eq!(precision_at_l(&recs, &probe), 1.0);
        assert_eq!(precision_at_l(&recs, &ProbeSet::new(2, &[])), 0.0);
    }

    #[test]
    fn precision_modes_differ_on_empty_probe_users() {
        let recs = lists(2, vec![vec![0, 1], vec![2, 3]]);
        let probe = ProbeSet::new(2, &[(0, 0)]);
        assert_eq!(precision_at_l(&recs, &probe), 0.25);
        assert_eq!(precision_with_mode(&recs, &probe, PrecisionMode::ProbeUsers), 0.5);
    }

    #[test]
    fn hamming_extremes() {
        let same = lists(3, vec![vec![1, 2, 3]; 4]);
        assert_eq!(hamming_distance(&same, HammingMode::Exact).unwrap(), 0.0);
        let disjoint = lists(2, vec![vec![0, 1], vec![2, 3], vec![4, 5]]);
        assert_eq!(hamming_distance(&disjoint, HammingMode::Exact).unwrap(), 1.0);
        assert!(matches!(
            hamming_distance(&lists(2, vec![vec![0, 1]]), HammingMode::Exact),
            Err(Error::TooFewUsers(1))
        ));
    }

    #[test]
    fn pair_index_decoding_enumerates_all_pairs() {
        let m = 7u64;
        let decoded: Vec<(usize, usize)> = (0..m * (m - 1) / 2).map(|k| unordered_pair(k, m)).collect();
        let expected: Vec<(usize, usize)> = (0..7).flat_map(|u| (u + 1..7).map(move |v| (u, v))).collect();
        assert_eq!(decoded, expected);
    }

    #[test]
    fn sampled_with_all_pairs_equals_exact() {
        let recs = lists(2, vec![vec![0, 1], vec![1, 2], vec![0, 2], vec![3, 1]]);
        let exact = hamming_distance(&recs, HammingMode::Exact).unwrap();
        let sampled = hamming_distance(
            &recs,
            HammingMode::Sampled {
                pair_count: 100,
                seed: 1,
            },
        )
        .unwrap();
        assert!((exact - sampled).abs() < 1e-15);
    }

    #[test]
    fn floyd_sampling_is_distinct() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let picks = sample_pair_indices(&mut rng, u32::MAX as u64 + 10, 1000);
        let set: std::collections::HashSet<_> = picks.iter().collect();
        assert_eq!(set.len(), 1000);
    }

    #[test]
    fn gini_extremes() {
        let uniform = lists(2, vec![vec![0, 1], vec![2, 3]]);
        assert!((gini_coefficient(&uniform, 4).unwrap() - 1.0).abs() < 1e-12);
        let single = lists(1, vec![vec![2], vec![2], vec![2]]);
        assert!(gini_coefficient(&single, 5).unwrap().abs() < 1e-12);
        assert!(matches!(
            gini_coefficient(&lists(1, vec![vec![]]), 5),
            Err(Error::NoRecommendations)
        ));
    }

    #[test]
    fn histogram_single_degree() {
        let g =
            BipartiteGraph::from_raw_links([("a", "x"), ("b", "x"), ("c", "x"), ("a", "y"), ("b", "y"), ("c", "y")])
                .unwrap();
        let rows = degree_histograms(&g, &lists(1, vec![vec![0], vec![1], vec![0]]));
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].item_degree, 3);
        assert_eq!(rows[0].item_frequency, 1.0);
        assert_eq!(rows[0].recommendation_frequency, 1.0);
    }

    #[test]
    fn report_json_field_names() {
        let r = MetricsReport {
            precision: 0.1,
            hamming: 0.5,
            gini: 0.01,
            list_len: 20,
            hamming_mode: HammingMode::Exact,
        };
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(v["L"], 20);
        assert_eq!(v["hamming_mode"]["kind"], "exact");
    }
}
