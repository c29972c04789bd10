//! Forward (per-user) and backward (per-item) rank numbers, the two-way
//! linear rank blend, and top-L list extraction.
//!
//! Ranks are 1-based and ordinal. Equal scores are ordered by ascending
//! internal index, so every table is a permutation and the whole module is
//! deterministic.

use std::cmp::Ordering;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::BipartiteGraph;
use crate::error::{Error, Result};
use crate::par;
use crate::scorers::{Score, ScoreMatrix};

/// Columns gathered per pass when ranking items.
const COLUMN_BLOCK: usize = 32;

/// Ranks stored with 0 for masked pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForwardRanks {
    num_users: usize,
    num_items: usize,
    /// Row-major `m × n`.
    ranks: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackwardRanks {
    num_users: usize,
    num_items: usize,
    /// Item-major `n × m`.
    ranks: Vec<u32>,
}

fn by_score_desc<S: Score>(a: &(S, u32), b: &(S, u32)) -> Ordering {
    b.0.total_order(&a.0).then(a.1.cmp(&b.1))
}

/// Per user, ranks unmasked items by descending score.
pub fn forward_ranks<S: Score>(scores: &ScoreMatrix<S>) -> ForwardRanks {
    let (m, n) = (scores.num_users(), scores.num_items());
    let mut ranks = vec![0u32; m * n];
    par::for_each_row_with(&mut ranks, n, Vec::new, |buf: &mut Vec<(S, u32)>, user, out| {
        buf.clear();
        buf.extend(
            scores
                .row(user)
                .iter()
                .enumerate()
                .filter(|&(i, _)| !scores.is_masked(user, i))
                .map(|(i, &s)| (s, i as u32)),
        );
        buf.sort_unstable_by(by_score_desc);
        for (r, &(_, i)) in buf.iter().enumerate() {
            out[i as usize] = r as u32 + 1;
        }
    });
    ForwardRanks {
        num_users: m,
        num_items: n,
        ranks,
    }
}

/// Per item, ranks the users who have not collected it by descending score.
pub fn backward_ranks<S: Score>(scores: &ScoreMatrix<S>) -> BackwardRanks {
    let (m, n) = (scores.num_users(), scores.num_items());
    let mut ranks = vec![0u32; m * n];
    if m > 0 {
        par::for_each_row_with(
            &mut ranks,
            m * COLUMN_BLOCK,
            || vec![Vec::new(); COLUMN_BLOCK],
            |columns: &mut Vec<Vec<(S, u32)>>, block, out| {
                let first = block * COLUMN_BLOCK;
                let width = out.len() / m;
                for col in columns.iter_mut() {
                    col.clear();
                }
                for user in 0..m {
                    let row = &scores.row(user)[first..first + width];
                    for (c, &s) in row.iter().enumerate() {
                        if !scores.is_masked(user, first + c) {
                            columns[c].push((s, user as u32));
                        }
                    }
                }
                for (c, col) in columns.iter_mut().take(width).enumerate() {
                    col.sort_unstable_by(by_score_desc);
                    let dst = &mut out[c * m..(c + 1) * m];
                    for (r, &(_, u)) in col.iter().enumerate() {
                        dst[u as usize] = r as u32 + 1;
                    }
                }
            },
        );
    }
    BackwardRanks {
        num_users: m,
        num_items: n,
        ranks,
    }
}

impl ForwardRanks {
    pub fn get(&self, user: usize, item: usize) -> Option<u32> {
        let r = self.ranks[user * self.num_items + item];
        (r != 0).then_some(r)
    }

    pub fn row(&self, user: usize) -> &[u32] {
        &self.ranks[user * self.num_items..(user + 1) * self.num_items]
    }
}

impl BackwardRanks {
    pub fn get(&self, user: usize, item: usize) -> Option<u32> {
        let r = self.ranks[item * self.num_users + user];
        (r != 0).then_some(r)
    }

    /// b-ranks of every user for `item`, 0 where collected.
    pub fn column(&self, item: usize) -> &[u32] {
        &self.ranks[item * self.num_users..(item + 1) * self.num_users]
    }
}

/// f-rank and b-rank over the same unmasked pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankTables {
    forward: ForwardRanks,
    backward: BackwardRanks,
}

impl RankTables {
    pub fn new(forward: ForwardRanks, backward: BackwardRanks) -> Result<Self> {
        let same_shape = forward.num_users == backward.num_users && forward.num_items == backward.num_items;
        let same_pairs = same_shape
            && (0..forward.num_users)
                .all(|u| (0..forward.num_items).all(|i| forward.get(u, i).is_some() == backward.get(u, i).is_some()));
        if !same_pairs {
            return Err(Error::InvalidConfig(
                "forward and backward ranks cover different pairs".into(),
            ));
        }
        Ok(RankTables { forward, backward })
    }

    pub fn from_scores<S: Score>(scores: &ScoreMatrix<S>) -> Self {
        RankTables {
            forward: forward_ranks(scores),
            backward: backward_ranks(scores),
        }
    }

    pub fn num_users(&self) -> usize {
        self.forward.num_users
    }

    pub fn num_items(&self) -> usize {
        self.forward.num_items
    }

    pub fn forward(&self) -> &ForwardRanks {
        &self.forward
    }

    pub fn backward(&self) -> &BackwardRanks {
        &self.backward
    }

    pub fn f_rank(&self, user: usize, item: usize) -> Option<u32> {
        self.forward.get(user, item)
    }

    pub fn b_rank(&self, user: usize, item: usize) -> Option<u32> {
        self.backward.get(user, item)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregationSpec {
    pub lambda: f64,
}

impl AggregationSpec {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::AggregationLambdaOutOfRange(lambda));
        }
        Ok(AggregationSpec { lambda })
    }
}

/// `(1 − λ)·f-rank + λ·b-rank`, evaluated on demand.
#[derive(Debug, Clone, Copy)]
pub struct AggregatedRanks<'a> {
    tables: &'a RankTables,
    lambda: f64,
}

pub fn twra_aggregate(ranks: &RankTables, spec: AggregationSpec) -> AggregatedRanks<'_> {
    AggregatedRanks {
        tables: ranks,
        lambda: spec.lambda,
    }
}

#[inline]
fn blend(lambda: f64, f: u32, b: u32) -> f64 {
    (1.0 - lambda) * f as f64 + lambda * b as f64
}

impl<'a> AggregatedRanks<'a> {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn tables(&self) -> &'a RankTables {
        self.tables
    }

    pub fn get(&self, user: usize, item: usize) -> Option<f64> {
        let f = self.tables.f_rank(user, item)?;
        let b = self.tables.b_rank(user, item)?;
        Some(blend(self.lambda, f, b))
    }
}

/// Per-user ordered item lists of at most `list_len` entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecommendationLists {
    pub list_len: usize,
    pub lists: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecommendMode {
    ByScoreDesc,
    ByAgrankAsc,
}

/// What [`recommend`] orders by.
#[derive(Debug, Clone, Copy)]
pub enum RankedInput<'a, S: Score> {
    /// Descending score, ties by ascending item index.
    Scores(&'a ScoreMatrix<S>),
    /// Ascending ag-rank, ties by smaller f-rank, then ascending item index.
    Aggregated(AggregatedRanks<'a>),
}

impl<S: Score> RankedInput<'_, S> {
    pub fn mode(&self) -> RecommendMode {
        match self {
            RankedInput::Scores(_) => RecommendMode::ByScoreDesc,
            RankedInput::Aggregated(_) => RecommendMode::ByAgrankAsc,
        }
    }
}

fn take_smallest<T, F>(mut items: Vec<T>, k: usize, cmp: F) -> Vec<T>
where
    F: Fn(&T, &T) -> Ordering,
{
    if items.len() > k {
        items.select_nth_unstable_by(k - 1, &cmp);
        items.truncate(k);
    }
    items.sort_unstable_by(cmp);
    items
}

/// The first `list_len` uncollected items of every user under the input's
/// ordering.
pub fn recommend<S: Score>(input: RankedInput<'_, S>, list_len: usize) -> Result<RecommendationLists> {
    if list_len == 0 {
        return Err(Error::ZeroListLength);
    }
    let lists = match input {
        RankedInput::Scores(scores) => par::map_range(scores.num_users(), |user| {
            let cands: Vec<(S, u32)> = scores
                .row(user)
                .iter()
                .enumerate()
                .filter(|&(i, _)| !scores.is_masked(user, i))
                .map(|(i, &s)| (s, i as u32))
                .collect();
            take_smallest(cands, list_len, by_score_desc)
                .into_iter()
                .map(|(_, i)| i)
                .collect()
        }),
        RankedInput::Aggregated(ag) => {
            let tables = ag.tables;
            par::map_range(tables.num_users(), |user| {
                let f_row = tables.forward.row(user);
                let cands: Vec<(f64, u32, u32)> = f_row
                    .iter()
                    .enumerate()
                    .filter(|&(_, &f)| f != 0)
                    .map(|(i, &f)| {
                        let b = tables.backward.column(i)[user];
                        (blend(ag.lambda, f, b), f, i as u32)
                    })
                    .collect();
                take_smallest(cands, list_len, |a, b| {
                    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
                })
                .into_iter()
                .map(|(_, _, i)| i)
                .collect()
            })
        }
    };
    Ok(RecommendationLists { list_len, lists })
}

impl RecommendationLists {
    pub fn num_users(&self) -> usize {
        self.lists.len()
    }

    /// Total recommendation slots filled.
    pub fn total_recommendations(&self) -> usize {
        self.lists.iter().map(Vec::len).sum()
    }

    /// `user_index TAB item,item,...` per line.
    pub fn write_tsv(&self, w: &mut impl Write) -> std::io::Result<()> {
        for (u, list) in self.lists.iter().enumerate() {
            write!(w, "{u}\t")?;
            for (k, i) in list.iter().enumerate() {
                if k > 0 {
                    w.write_all(b",")?;
                }
                write!(w, "{i}")?;
            }
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn write_tsv_file(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_tsv(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    /// Reads the TSV form back. `list_len` is not stored in the file.
    pub fn read_tsv(r: impl BufRead, list_len: usize) -> Result<Self> {
        let mut lists = Vec::new();
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let bad = |reason: &str| Error::MalformedRecommendations {
                line_no: idx + 1,
                reason: reason.to_string(),
            };
            let (u, items) = line.split_once('\t').ok_or_else(|| bad("missing tab"))?;
            if u.parse::<usize>().ok() != Some(lists.len()) {
                return Err(bad("user indices must be contiguous from 0"));
            }
            let list = if items.is_empty() {
                Vec::new()
            } else {
                items
                    .split(',')
                    .map(|s| s.parse::<u32>().map_err(|_| bad("bad item index")))
                    .collect::<Result<Vec<_>>>()?
            };
            lists.push(list);
        }
        Ok(RecommendationLists { list_len, lists })
    }

    pub fn read_tsv_file(path: &Path, list_len: usize) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_tsv(BufReader::new(file), list_len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScatterRecord {
    pub item_degree: u32,
    pub f_rank: u32,
    pub b_rank: u32,
}

/// One record per unmasked pair whose item has one of `degrees`, in the
/// order the degrees are given, items and users ascending within.
pub fn rank_scatter_export(ranks: &RankTables, graph: &BipartiteGraph, degrees: &[u32]) -> Result<Vec<ScatterRecord>> {
    let mut out = Vec::new();
    for &d in degrees {
        let items: Vec<usize> = (0..graph.num_items())
            .filter(|&i| graph.item_degree(i) == d as usize)
            .collect();
        if items.is_empty() {
            return Err(Error::DegreeNotPresent(d));
        }
        for i in items {
            for u in 0..graph.num_users() {
                if let (Some(f), Some(b)) = (ranks.f_rank(u, i), ranks.b_rank(u, i)) {
                    out.push(ScatterRecord {
                        item_degree: d,
                        f_rank: f,
                        b_rank: b,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// CSV with header `item_degree,f_rank,b_rank`.
pub fn write_scatter_csv(records: &[ScatterRecord], w: impl Write) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    writer.write_record(["item_degree", "f_rank", "b_rank"])?;
    for r in records {
        writer.write_record([r.item_degree.to_string(), r.f_rank.to_string(), r.b_rank.to_string()])?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const X: f64 = f64::NEG_INFINITY;

    fn matrix(m: usize, n: usize, data: &[f64]) -> ScoreMatrix<f64> {
        ScoreMatrix::from_raw(m, n, data.to_vec()).unwrap()
    }

    #[test]
    fn forward_sorts_descending() {
        let sm = matrix(1, 3, &[0.5, 0.2, 0.9]);
        let f = forward_ranks(&sm);
        assert_eq!(f.row(0), &[2, 3, 1]);
    }

    #[test]
    fn forward_ties_prefer_lower_index() {
        let mut row = vec![0.0; 8];
        row[4] = 1.0;
        row[7] = 1.0;
        let f = forward_ranks(&matrix(1, 8, &row));
        assert_eq!(f.get(0, 4), Some(1));
        assert_eq!(f.get(0, 7), Some(2));
    }

    #[test]
    fn backward_sorts_column() {
        let sm = matrix(2, 1, &[0.1, 0.3]);
        let b = backward_ranks(&sm);
        assert_eq!(b.get(1, 0), Some(1));
        assert_eq!(b.get(0, 0), Some(2));
    }

    #[test]
    fn backward_singleton_and_masks() {
        let sm = matrix(2, 2, &[X, 0.4, 0.7, X]);
        let t = RankTables::from_scores(&sm);
        assert_eq!(t.b_rank(1, 0), Some(1));
        assert_eq!(t.b_rank(0, 0), None);
        assert_eq!(t.f_rank(0, 1), Some(1));
    }

    #[test]
    fn backward_spans_multiple_blocks() {
        let (m, n) = (5, COLUMN_BLOCK * 2 + 3);
        let data: Vec<f64> = (0..m * n).map(|k| ((k * 37) % 11) as f64).collect();
        let b = backward_ranks(&matrix(m, n, &data));
        for i in 0..n {
            let mut col: Vec<u32> = b.column(i).to_vec();
            col.sort();
            assert_eq!(col, vec![1, 2, 3, 4, 5]);
        }
    }

    #[test]
    fn aggregate_arithmetic() {
        assert!((blend(0.3, 10, 2) - 7.6).abs() < 1e-12);
        assert!(matches!(
            AggregationSpec::new(1.2),
            Err(Error::AggregationLambdaOutOfRange(_))
        ));
    }

    #[test]
    fn lists_truncate_to_available_items() {
        let sm = matrix(1, 5, &[X, 0.1, X, 0.3, 0.2]);
        let lists = recommend(RankedInput::Scores(&sm), 20).unwrap();
        assert_eq!(lists.lists[0], vec![3, 4, 1]);
        assert!(matches!(
            recommend(RankedInput::Scores(&sm), 0),
            Err(Error::ZeroListLength)
        ));
    }

    #[test]
    fn tsv_roundtrip() {
        let lists = RecommendationLists {
            list_len: 2,
            lists: vec![vec![3, 1], vec![], vec![0]],
        };
        let mut buf = Vec::new();
        lists.write_tsv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "0\t3,1\n1\t\n2\t0\n");
        assert_eq!(RecommendationLists::read_tsv(buf.as_slice(), 2).unwrap(), lists);
    }

    #[test]
    fn scatter_counts_and_errors() {
        // u0-{a}, u1-{a,b}, u2-{b}: item a has degree 2 with one eligible user.
        let g = BipartiteGraph::from_raw_links([("u0", "a"), ("u1", "a"), ("u1", "b"), ("u2", "b")]).unwrap();
        let sm = crate::scorers::score_matrix::<f64>(&g, crate::scorers::ScorerSpec::P3).unwrap();
        let t = RankTables::from_scores(&sm);
        assert_eq!(rank_scatter_export(&t, &g, &[2]).unwrap().len(), 2);
        assert!(rank_scatter_export(&t, &g, &[]).unwrap().is_empty());
        assert!(matches!(
            rank_scatter_export(&t, &g, &[9]),
            Err(Error::DegreeNotPresent(9))
        ));
        let mut csv = Vec::new();
        write_scatter_csv(&rank_scatter_export(&t, &g, &[2]).unwrap(), &mut csv).unwrap();
        assert!(String::from_utf8(csv)
            .unwrap()
            .starts_with("item_degree,f_rank,b_rank\n"));
    }
}
