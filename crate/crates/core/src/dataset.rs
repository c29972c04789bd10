//! Rating ingestion, the bipartite user-item graph, and the seeded
//! train/probe split.

use std::collections::HashMap;
use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ratings at or above this value become links.
pub const DEFAULT_MIN_RATING: u8 = 3;
/// Fraction of links kept for training.
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RatingFormat {
    /// `user TAB item TAB rating TAB timestamp` (MovieLens 100k `u.data`).
    #[serde(rename = "ml-100k")]
    Ml100kTab,
    /// `user::item::rating::timestamp` (MovieLens 1M/10M `ratings.dat`).
    #[serde(rename = "ml-1m")]
    Ml1mDoubleColon,
    /// Comma-separated with a header naming `user`, `item` and `rating`.
    #[serde(rename = "csv")]
    GenericCsv,
}

impl FromStr for RatingFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ml-100k" | "ml100k" | "ml-100k-tab" | "tab" | "tsv" => Ok(RatingFormat::Ml100kTab),
            "ml-1m" | "ml1m" | "ml-1m-double-colon" | "dat" => Ok(RatingFormat::Ml1mDoubleColon),
            "csv" | "generic-csv" => Ok(RatingFormat::GenericCsv),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

impl fmt::Display for RatingFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RatingFormat::Ml100kTab => "ml-100k",
            RatingFormat::Ml1mDoubleColon => "ml-1m",
            RatingFormat::GenericCsv => "csv",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatingRecord {
    pub raw_user_id: String,
    pub raw_item_id: String,
    pub rating: u8,
    pub timestamp: Option<i64>,
}

fn parse_rating(field: &str, line_no: usize) -> Result<u8> {
    let field = field.trim();
    let value = match field.parse::<i64>() {
        Ok(v) => v,
        // "4.0" style ratings are accepted as long as they are integral.
        Err(_) => match field.parse::<f64>() {
            Ok(f) if f.is_finite() && f.fract() == 0.0 => f as i64,
            _ => {
                return Err(Error::MalformedLine {
                    line_no,
                    reason: format!("rating {field:?} is not an integer"),
                })
            }
        },
    };
    if !(1..=5).contains(&value) {
        return Err(Error::RatingOutOfRange { line_no, value });
    }
    Ok(value as u8)
}

fn parse_timestamp(field: Option<&str>, line_no: usize) -> Result<Option<i64>> {
    match field.map(str::trim) {
        None | Some("") => Ok(None),
        Some(t) => t.parse::<i64>().map(Some).map_err(|_| Error::MalformedLine {
            line_no,
            reason: format!("timestamp {t:?} is not an integer"),
        }),
    }
}

fn parse_delimited_line(line: &str, sep: &str, line_no: usize) -> Result<RatingRecord> {
    let fields: Vec<&str> = line.split(sep).collect();
    if fields.len() < 3 || fields.len() > 4 {
        return Err(Error::MalformedLine {
            line_no,
            reason: format!("expected 3 or 4 fields separated by {sep:?}, found {}", fields.len()),
        });
    }
    let user = fields[0].trim();
    let item = fields[1].trim();
    if user.is_empty() || item.is_empty() {
        return Err(Error::MalformedLine {
            line_no,
            reason: "empty user or item id".to_string(),
        });
    }
    Ok(RatingRecord {
        raw_user_id: user.to_string(),
        raw_item_id: item.to_string(),
        rating: parse_rating(fields[2], line_no)?,
        timestamp: parse_timestamp(fields.get(3).copied(), line_no)?,
    })
}

/// Parses a rating stream. Line numbers in errors are 1-based and count the
/// CSV header. Blank lines are skipped.
pub fn parse_ratings<R: Read>(source: R, format: RatingFormat) -> Result<Vec<RatingRecord>> {
    match format {
        RatingFormat::Ml100kTab => parse_lines(source, "\t"),
        RatingFormat::Ml1mDoubleColon => parse_lines(source, "::"),
        RatingFormat::GenericCsv => parse_csv(source),
    }
}

fn parse_lines<R: Read>(source: R, sep: &str) -> Result<Vec<RatingRecord>> {
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(source).lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_delimited_line(line, sep, idx + 1)?);
    }
    Ok(out)
}

fn parse_csv<R: Read>(source: R) -> Result<Vec<RatingRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let find = |names: &[&str]| {
        headers
            .iter()
            .position(|h| names.iter().any(|n| h.eq_ignore_ascii_case(n)))
    };
    let missing = |col: &str| Error::MalformedLine {
        line_no: 1,
        reason: format!("header has no {col:?} column"),
    };
    let user_col = find(&["user", "user_id", "userid"]).ok_or_else(|| missing("user"))?;
    let item_col =
        find(&["item", "item_id", "itemid", "movie", "movie_id", "movieid"]).ok_or_else(|| missing("item"))?;
    let rating_col = find(&["rating"]).ok_or_else(|| missing("rating"))?;
    let ts_col = find(&["timestamp", "time"]);

    let mut out = Vec::new();
    for (idx, row) in reader.records().enumerate() {
        let line_no = idx + 2;
        let row = row.map_err(|e| Error::MalformedLine {
            line_no,
            reason: e.to_string(),
        })?;
        let field = |c: usize| row.get(c).unwrap_or("");
        let user = field(user_col);
        let item = field(item_col);
        if user.is_empty() || item.is_empty() {
            return Err(Error::MalformedLine {
                line_no,
                reason: "empty user or item id".to_string(),
            });
        }
        out.push(RatingRecord {
            raw_user_id: user.to_string(),
            raw_item_id: item.to_string(),
            rating: parse_rating(field(rating_col), line_no)?,
            timestamp: parse_timestamp(ts_col.map(field), line_no)?,
        });
    }
    Ok(out)
}

pub fn read_ratings_file(path: &Path, format: RatingFormat) -> Result<Vec<RatingRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_ratings(file, format)
}

/// Immutable unweighted user-item graph in compressed adjacency form.
///
/// Users and items carry contiguous indices `0..m` and `0..n`. Both
/// directions are stored with sorted neighbour lists, and every node has at
/// least one link.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipartiteGraph {
    user_offsets: Vec<usize>,
    user_items: Vec<u32>,
    item_offsets: Vec<usize>,
    item_users: Vec<u32>,
    user_ids: Vec<String>,
    item_ids: Vec<String>,
}

fn compress(rows: usize, pairs: &[(u32, u32)]) -> (Vec<usize>, Vec<u32>) {
    let mut offsets = vec![0usize; rows + 1];
    for &(r, _) in pairs {
        offsets[r as usize + 1] += 1;
    }
    for k in 0..rows {
        offsets[k + 1] += offsets[k];
    }
    let mut cursor = offsets.clone();
    let mut cols = vec![0u32; pairs.len()];
    for &(r, c) in pairs {
        cols[cursor[r as usize]] = c;
        cursor[r as usize] += 1;
    }
    for k in 0..rows {
        cols[offsets[k]..offsets[k + 1]].sort_unstable();
    }
    (offsets, cols)
}

impl BipartiteGraph {
    /// Builds a graph from raw-id links. Indices follow first appearance;
    /// repeated pairs collapse to one link.
    pub fn from_raw_links<'a, I>(links: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut user_index: HashMap<&str, u32> = HashMap::new();
        let mut item_index: HashMap<&str, u32> = HashMap::new();
        let mut user_ids = Vec::new();
        let mut item_ids = Vec::new();
        let mut seen = HashSet::new();
        let mut pairs = Vec::new();
        for (user, item) in links {
            let u = *user_index.entry(user).or_insert_with(|| {
                user_ids.push(user.to_string());
                (user_ids.len() - 1) as u32
            });
            let i = *item_index.entry(item).or_insert_with(|| {
                item_ids.push(item.to_string());
                (item_ids.len() - 1) as u32
            });
            if seen.insert((u, i)) {
                pairs.push((u, i));
            }
        }
        if pairs.is_empty() {
            return Err(Error::EmptyGraph);
        }
        Ok(Self::assemble(user_ids, item_ids, pairs))
    }

    /// Builds a graph whose indices are already assigned. Every index must be
    /// in bounds and every node must end up with at least one link.
    pub fn from_index_links(user_ids: Vec<String>, item_ids: Vec<String>, links: &[(u32, u32)]) -> Result<Self> {
        let (m, n) = (user_ids.len(), item_ids.len());
        let mut seen = HashSet::with_capacity(links.len());
        let mut pairs = Vec::with_capacity(links.len());
        for &(u, i) in links {
            if u as usize >= m {
                return Err(Error::IndexOutOfBounds {
                    what: "user",
                    index: u as usize,
                    bound: m,
                });
            }
            if i as usize >= n {
                return Err(Error::IndexOutOfBounds {
                    what: "item",
                    index: i as usize,
                    bound: n,
                });
            }
            if seen.insert((u, i)) {
                pairs.push((u, i));
            }
        }
        if pairs.is_empty() {
            return Err(Error::EmptyGraph);
        }
        let graph = Self::assemble(user_ids, item_ids, pairs);
        if let Some(u) = (0..graph.num_users()).find(|&u| graph.user_degree(u) == 0) {
            return Err(Error::InvalidGraph(format!("user index {u} has no links")));
        }
        if let Some(i) = (0..graph.num_items()).find(|&i| graph.item_degree(i) == 0) {
            return Err(Error::InvalidGraph(format!("item index {i} has no links")));
        }
        Ok(graph)
    }

    fn assemble(user_ids: Vec<String>, item_ids: Vec<String>, pairs: Vec<(u32, u32)>) -> Self {
        let (user_offsets, user_items) = compress(user_ids.len(), &pairs);
        let transposed: Vec<(u32, u32)> = pairs.iter().map(|&(u, i)| (i, u)).collect();
        let (item_offsets, item_users) = compress(item_ids.len(), &transposed);
        BipartiteGraph {
            user_offsets,
            user_items,
            item_offsets,
            item_users,
            user_ids,
            item_ids,
        }
    }

    /// `m`
    pub fn num_users(&self) -> usize {
        self.user_ids.len()
    }

    /// `n`
    pub fn num_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn num_links(&self) -> usize {
        self.user_items.len()
    }

    /// Sorted items collected by `user`.
    pub fn user_items(&self, user: usize) -> &[u32] {
        &self.user_items[self.user_offsets[user]..self.user_offsets[user + 1]]
    }

    /// Sorted users who collected `item`.
    pub fn item_users(&self, item: usize) -> &[u32] {
        &self.item_users[self.item_offsets[item]..self.item_offsets[item + 1]]
    }

    pub fn user_degree(&self, user: usize) -> usize {
        self.user_offsets[user + 1] - self.user_offsets[user]
    }

    pub fn item_degree(&self, item: usize) -> usize {
        self.item_offsets[item + 1] - self.item_offsets[item]
    }

    pub fn user_degrees(&self) -> Vec<u32> {
        (0..self.num_users()).map(|u| self.user_degree(u) as u32).collect()
    }

    pub fn item_degrees(&self) -> Vec<u32> {
        (0..self.num_items()).map(|i| self.item_degree(i) as u32).collect()
    }

    pub fn has_link(&self, user: usize, item: usize) -> bool {
        self.user_items(user).binary_search(&(item as u32)).is_ok()
    }

    /// All links in user-major order with items ascending.
    pub fn links(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.num_users()).flat_map(move |u| self.user_items(u).iter().map(move |&i| (u as u32, i)))
    }

    pub fn user_id(&self, user: usize) -> &str {
        &self.user_ids[user]
    }

    pub fn item_id(&self, item: usize) -> &str {
        &self.item_ids[item]
    }

    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    /// Checks transpose consistency, the degree-sum identity, bounds,
    /// uniqueness and the no-isolated-node rule.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let (m, n) = (self.num_users(), self.num_items());
        let user_sum: usize = (0..m).map(|u| self.user_degree(u)).sum();
        let item_sum: usize = (0..n).map(|i| self.item_degree(i)).sum();
        if user_sum != item_sum || user_sum != self.num_links() {
            return Err(format!(
                "degree sums differ: users {user_sum}, items {item_sum}, links {}",
                self.num_links()
            ));
        }
        for u in 0..m {
            let items = self.user_items(u);
            if items.is_empty() {
                return Err(format!("user {u} is isolated"));
            }
            if items.windows(2).any(|w| w[0] >= w[1]) {
                return Err(format!("user {u} has unsorted or duplicate items"));
            }
            for &i in items {
                if i as usize >= n {
                    return Err(format!("user {u} links to out-of-range item {i}"));
                }
                if self.item_users(i as usize).binary_search(&(u as u32)).is_err() {
                    return Err(format!("link ({u},{i}) missing from item adjacency"));
                }
            }
        }
        for i in 0..n {
            let users = self.item_users(i);
            if users.is_empty() {
                return Err(format!("item {i} is isolated"));
            }
            if users.windows(2).any(|w| w[0] >= w[1]) {
                return Err(format!("item {i} has unsorted or duplicate users"));
            }
            for &u in users {
                if u as usize >= m || !self.has_link(u as usize, i) {
                    return Err(format!("link ({u},{i}) missing from user adjacency"));
                }
            }
        }
        Ok(())
    }
}

/// Keeps ratings `>= min_rating` as links, first occurrence wins.
pub fn build_graph(records: &[RatingRecord], min_rating: u8) -> Result<BipartiteGraph> {
    BipartiteGraph::from_raw_links(
        records
            .iter()
            .filter(|r| r.rating >= min_rating)
            .map(|r| (r.raw_user_id.as_str(), r.raw_item_id.as_str())),
    )
}

/// Held-out (user, item) pairs indexed against the training graph.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ProbeSet {
    offsets: Vec<usize>,
    items: Vec<u32>,
}

impl ProbeSet {
    /// `pairs` must use training-graph indices below `num_users`.
    pub fn new(num_users: usize, pairs: &[(u32, u32)]) -> Self {
        let mut sorted = pairs.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let (offsets, items) = compress(num_users, &sorted);
        ProbeSet { offsets, items }
    }

    pub fn num_users(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Sorted probe items of `user`.
    pub fn items_of(&self, user: usize) -> &[u32] {
        if user + 1 >= self.offsets.len() {
            return &[];
        }
        &self.items[self.offsets[user]..self.offsets[user + 1]]
    }

    pub fn contains(&self, user: usize, item: u32) -> bool {
        self.items_of(user).binary_search(&item).is_ok()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.num_users()).flat_map(move |u| self.items_of(u).iter().map(move |&i| (u as u32, i)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitReport {
    pub total_links: usize,
    pub train_links: usize,
    /// Probe pairs kept after re-indexing against the training graph.
    pub probe_links: usize,
    /// Probe pairs whose user or item has no training link.
    pub discarded_probe: usize,
    pub dropped_users: usize,
    pub dropped_items: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: BipartiteGraph,
    pub probe: ProbeSet,
    pub split_seed: u64,
    pub train_fraction: f64,
    pub report: SplitReport,
}

/// Number of links assigned to training: `floor(total * fraction)`.
pub fn train_link_count(total: usize, train_fraction: f64) -> usize {
    ((total as f64) * train_fraction).floor() as usize
}

/// Splits the links of `graph` globally at random into training and probe
/// sets, then re-indexes the training graph without isolated nodes.
pub fn split(graph: &BipartiteGraph, train_fraction: f64, seed: u64) -> Result<SplitDataset> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidTrainFraction(train_fraction));
    }
    let links: Vec<(u32, u32)> = graph.links().collect();
    let total = links.len();
    let train_count = train_link_count(total, train_fraction);
    let probe_count = total - train_count;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_probe = vec![false; total];
    for idx in rand::seq::index::sample(&mut rng, total, probe_count).iter() {
        is_probe[idx] = true;
    }

    let train = BipartiteGraph::from_raw_links(
        links
            .iter()
            .zip(&is_probe)
            .filter(|(_, &p)| !p)
            .map(|(&(u, i), _)| (graph.user_id(u as usize), graph.item_id(i as usize))),
    )?;

    let train_users: HashMap<&str, u32> = train
        .user_ids()
        .iter()
        .enumerate()
        .map(|(k, id)| (id.as_str(), k as u32))
        .collect();
    let train_items: HashMap<&str, u32> = train
        .item_ids()
        .iter()
        .enumerate()
        .map(|(k, id)| (id.as_str(), k as u32))
        .collect();
    let user_map: Vec<Option<u32>> = (0..graph.num_users())
        .map(|old| train_users.get(graph.user_id(old)).copied())
        .collect();
    let item_map: Vec<Option<u32>> = (0..graph.num_items())
        .map(|old| train_items.get(graph.item_id(old)).copied())
        .collect();

    let mut probe_pairs = Vec::with_capacity(probe_count);
    let mut discarded = 0usize;
    for (&(u, i), _) in links.iter().zip(&is_probe).filter(|(_, &p)| p) {
        match (user_map[u as usize], item_map[i as usize]) {
            (Some(nu), Some(ni)) => probe_pairs.push((nu, ni)),
            _ => discarded += 1,
        }
    }
    let probe = ProbeSet::new(train.num_users(), &probe_pairs);
    let report = SplitReport {
        total_links: total,
        train_links: train.num_links(),
        probe_links: probe.len(),
        discarded_probe: discarded,
        dropped_users: graph.num_users() - train.num_users(),
        dropped_items: graph.num_items() - train.num_items(),
    };
    Ok(SplitDataset {
        train,
        probe,
        split_seed: seed,
        train_fraction,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMeta {
    pub split_seed: u64,
    pub train_fraction: f64,
    pub users: usize,
    pub items: usize,
    #[serde(flatten)]
    pub report: SplitReport,
}

pub const TRAIN_FILE: &str = "train.tsv";
pub const PROBE_FILE: &str = "probe.tsv";
pub const META_FILE: &str = "meta.json";
pub const USER_IDS_FILE: &str = "user_ids.tsv";
pub const ITEM_IDS_FILE: &str = "item_ids.tsv";

fn write_file(path: &Path, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn read_pairs(path: &Path) -> Result<Vec<(u32, u32)>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: &str| Error::MalformedLine {
            line_no: idx + 1,
            reason: format!("{}: {reason}", path.display()),
        };
        let (u, i) = line
            .split_once('\t')
            .ok_or_else(|| bad("expected two tab-separated indices"))?;
        let u = u.trim().parse().map_err(|_| bad("bad user index"))?;
        let i = i.trim().parse().map_err(|_| bad("bad item index"))?;
        out.push((u, i));
    }
    Ok(out)
}

fn read_ids(path: &Path) -> Result<Vec<String>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let (k, id) = line.split_once('\t').ok_or_else(|| Error::MalformedLine {
            line_no: idx + 1,
            reason: format!("{}: expected index TAB id", path.display()),
        })?;
        if k.parse::<usize>().ok() != Some(out.len()) {
            return Err(Error::MalformedLine {
                line_no: idx + 1,
                reason: format!("{}: indices must be contiguous from 0", path.display()),
            });
        }
        out.push(id.to_string());
    }
    Ok(out)
}

impl SplitDataset {
    pub fn meta(&self) -> SplitMeta {
        SplitMeta {
            split_seed: self.split_seed,
            train_fraction: self.train_fraction,
            users: self.train.num_users(),
            items: self.train.num_items(),
            report: self.report,
        }
    }

    /// Writes `train.tsv`, `probe.tsv`, `meta.json` and the two raw-id maps.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_file(&dir.join(TRAIN_FILE), |w| {
            for (u, i) in self.train.links() {
                writeln!(w, "{u}\t{i}")?;
            }
            Ok(())
        })?;
        write_file(&dir.join(PROBE_FILE), |w| {
            for (u, i) in self.probe.pairs() {
                writeln!(w, "{u}\t{i}")?;
            }
            Ok(())
        })?;
        write_file(&dir.join(USER_IDS_FILE), |w| {
            for (k, id) in self.train.user_ids().iter().enumerate() {
                writeln!(w, "{k}\t{id}")?;
            }
            Ok(())
        })?;
        write_file(&dir.join(ITEM_IDS_FILE), |w| {
            for (k, id) in self.train.item_ids().iter().enumerate() {
                writeln!(w, "{k}\t{id}")?;
            }
            Ok(())
        })?;
        let meta = serde_json::to_string_pretty(&self.meta())?;
        write_file(&dir.join(META_FILE), |w| writeln!(w, "{meta}"))
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let meta_path = dir.join(META_FILE);
        let meta: SplitMeta =
            serde_json::from_str(&fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?)?;
        let user_ids = read_ids(&dir.join(USER_IDS_FILE))?;
        let item_ids = read_ids(&dir.join(ITEM_IDS_FILE))?;
        let train = BipartiteGraph::from_index_links(user_ids, item_ids, &read_pairs(&dir.join(TRAIN_FILE))?)?;
        let probe_pairs = read_pairs(&dir.join(PROBE_FILE))?;
        for &(u, i) in &probe_pairs {
            if u as usize >= train.num_users() || i as usize >= train.num_items() {
                return Err(Error::IndexOutOfBounds {
                    what: "probe pair",
                    index: u.max(i) as usize,
                    bound: train.num_users().min(train.num_items()),
                });
            }
        }
        let probe = ProbeSet::new(train.num_users(), &probe_pairs);
        Ok(SplitDataset {
            train,
            probe,
            split_seed: meta.split_seed,
            train_fraction: meta.train_fraction,
            report: meta.report,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(u: &str, i: &str, r: u8) -> RatingRecord {
        RatingRecord {
            raw_user_id: u.into(),
            raw_item_id: i.into(),
            rating: r,
            timestamp: None,
        }
    }

    #[test]
    fn parses_ml1m_line() {
        let recs = parse_ratings("1::1193::5::978300760\n".as_bytes(), RatingFormat::Ml1mDoubleColon).unwrap();
        assert_eq!(
            recs,
            vec![RatingRecord {
                raw_user_id: "1".into(),
                raw_item_id: "1193".into(),
                rating: 5,
                timestamp: Some(978300760),
            }]
        );
    }

    #[test]
    fn parses_ml100k_line() {
        let recs = parse_ratings("196\t242\t3\t881250949\n".as_bytes(), RatingFormat::Ml100kTab).unwrap();
        assert_eq!(recs[0].raw_user_id, "196");
        assert_eq!(recs[0].raw_item_id, "242");
        assert_eq!(recs[0].rating, 3);
    }

    #[test]
    fn rejects_out_of_range_rating() {
        let err = parse_ratings("1::1193::7::0\n".as_bytes(), RatingFormat::Ml1mDoubleColon).unwrap_err();
        assert!(matches!(err, Error::RatingOutOfRange { line_no: 1, value: 7 }));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let src = "1::2::3::4\n1::2\n";
        let err = parse_ratings(src.as_bytes(), RatingFormat::Ml1mDoubleColon).unwrap_err();
        assert!(matches!(err, Error::MalformedLine { line_no: 2, .. }), "{err}");
        let err = parse_ratings("1\t2\tx\t4\n".as_bytes(), RatingFormat::Ml100kTab).unwrap_err();
        assert!(matches!(err, Error::MalformedLine { line_no: 1, .. }));
    }

    #[test]
    fn unknown_format_is_rejected() {
        assert!(matches!(
            "parquet".parse::<RatingFormat>(),
            Err(Error::UnknownFormat(_))
        ));
        assert_eq!("ml-1m".parse::<RatingFormat>().unwrap(), RatingFormat::Ml1mDoubleColon);
    }

    #[test]
    fn parses_csv_with_header() {
        let src = "rating,item,user\n4,a,x\n5.0,b,y\n";
        let recs = parse_ratings(src.as_bytes(), RatingFormat::GenericCsv).unwrap();
        assert_eq!(recs, vec![rec("x", "a", 4), rec("y", "b", 5)]);
        let err = parse_ratings("user,item,rating\nx,a,0\n".as_bytes(), RatingFormat::GenericCsv).unwrap_err();
        assert!(matches!(err, Error::RatingOutOfRange { line_no: 2, value: 0 }));
        let err = parse_ratings("user,rating\nx,3\n".as_bytes(), RatingFormat::GenericCsv).unwrap_err();
        assert!(matches!(err, Error::MalformedLine { line_no: 1, .. }));
    }

    #[test]
    fn threshold_drops_low_ratings_and_isolated_items() {
        let g = build_graph(&[rec("u1", "i1", 5), rec("u1", "i2", 2), rec("u2", "i1", 3)], 3).unwrap();
        assert_eq!(g.num_users(), 2);
        assert_eq!(g.num_items(), 1);
        assert_eq!(g.links().collect::<Vec<_>>(), vec![(0, 0), (1, 0)]);
        assert_eq!(g.user_id(1), "u2");
        g.check_invariants().unwrap();
    }

    #[test]
    fn duplicates_collapse() {
        let g = build_graph(&[rec("u1", "i1", 4), rec("u1", "i1", 5)], 3).unwrap();
        assert_eq!(g.num_links(), 1);
    }

    #[test]
    fn empty_after_threshold() {
        assert!(matches!(build_graph(&[rec("u", "i", 1)], 3), Err(Error::EmptyGraph)));
    }

    fn ten_link_graph() -> BipartiteGraph {
        let links: Vec<(String, String)> = (0..10).map(|k| (format!("u{}", k % 3), format!("i{k}"))).collect();
        BipartiteGraph::from_raw_links(links.iter().map(|(u, i)| (u.as_str(), i.as_str()))).unwrap()
    }

    #[test]
    fn split_of_ten_links() {
        let g = ten_link_graph();
        let s = split(&g, 0.9, 7).unwrap();
        assert_eq!(s.report.total_links, 10);
        assert_eq!(s.report.train_links, 9);
        assert_eq!(s.report.probe_links + s.report.discarded_probe, 1);
        // Each item has degree 1 here, so the probe item vanishes from training.
        assert_eq!(s.report.discarded_probe, 1);
        assert_eq!(s.report.dropped_items, 1);
        s.train.check_invariants().unwrap();
    }

    #[test]
    fn split_is_deterministic() {
        let g = ten_link_graph();
        assert_eq!(split(&g, 0.9, 42).unwrap(), split(&g, 0.9, 42).unwrap());
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let g = ten_link_graph();
        assert!(matches!(split(&g, 1.0, 0), Err(Error::InvalidTrainFraction(_))));
        assert!(matches!(split(&g, 0.0, 0), Err(Error::InvalidTrainFraction(_))));
    }

    #[test]
    fn probe_set_lookup() {
        let p = ProbeSet::new(3, &[(2, 5), (0, 1), (2, 3), (2, 5)]);
        assert_eq!(p.len(), 3);
        assert_eq!(p.items_of(2), &[3, 5]);
        assert!(p.items_of(1).is_empty());
        assert!(p.contains(0, 1));
        assert!(!p.contains(0, 2));
    }
}
