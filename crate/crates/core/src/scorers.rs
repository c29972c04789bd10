//! Three-step diffusion scorers on the user-item graph: P3, P3-alpha,
//! RP3-beta and the HHP ProbS/HeatS hybrid.
//!
//! All four share one sparse kernel. Mass leaves the target user along each
//! collected item `j` with weight `w_item[j]`, accumulates on the users `v`
//! who also collected `j`, is scaled by `w_user[v]`, and lands on every item
//! `i` of `v`. An optional per-target factor `w_target[i]` is applied last.
//! The target user's own `1/k_u` step is a positive per-row constant and is
//! left out of the per-user scorers. It leaves each user's item order alone
//! but not the comparison of users on one item, so [`score_matrix_with`] can
//! put it back ([`UserStep::Included`]) before backward ranking.
//!
//! | scorer | `w_item[j]`     | `w_user[v]`     | `w_target[i]`      |
//! |--------|-----------------|-----------------|--------------------|
//! | P3     | `1/k_j`         | `1/k_v`         | 1                  |
//! | P3α    | `k_j^-α`        | `k_v^-α`        | 1                  |
//! | RP3β   | `1/k_j`         | `1/k_v`         | `k_i^-β`           |
//! | HHP    | `k_j^-λ`        | `1/k_v`         | `k_i^-(1-λ)`       |
//!
//! HHP with `λ = 1` is P3 and with `λ = 0` is the HeatS limit
//! `(1/k_i) Σ_j a_uj Σ_v a_vj a_vi / k_v`.

use std::cmp::Ordering;
use std::fmt::{self, Debug};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::dataset::BipartiteGraph;
use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ScorerSpec {
    P3,
    P3Alpha { alpha: f64 },
    RP3Beta { beta: f64 },
    HHP { hybrid_lambda: f64 },
}

impl ScorerSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ScorerSpec::P3 => Ok(()),
            ScorerSpec::P3Alpha { alpha } if !alpha.is_finite() => {
                Err(Error::InvalidScorerSpec(format!("alpha must be finite, got {alpha}")))
            }
            ScorerSpec::P3Alpha { .. } => Ok(()),
            ScorerSpec::RP3Beta { beta } if beta.is_nan() || beta < 0.0 || beta.is_infinite() => {
                Err(Error::NegativeBeta(beta))
            }
            ScorerSpec::RP3Beta { .. } => Ok(()),
            ScorerSpec::HHP { hybrid_lambda } if !(0.0..=1.0).contains(&hybrid_lambda) => {
                Err(Error::LambdaOutOfRange(hybrid_lambda))
            }
            ScorerSpec::HHP { .. } => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScorerSpec::P3 => "p3",
            ScorerSpec::P3Alpha { .. } => "p3alpha",
            ScorerSpec::RP3Beta { .. } => "rp3beta",
            ScorerSpec::HHP { .. } => "hhp",
        }
    }
}

impl fmt::Display for ScorerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScorerSpec::P3 => write!(f, "P3"),
            ScorerSpec::P3Alpha { alpha } => write!(f, "P3alpha(alpha={alpha})"),
            ScorerSpec::RP3Beta { beta } => write!(f, "RP3beta(beta={beta})"),
            ScorerSpec::HHP { hybrid_lambda } => write!(f, "HHP(lambda={hybrid_lambda})"),
        }
    }
}

/// Floating-point storage for score matrices.
pub trait Score: Copy + PartialOrd + Debug + Send + Sync + 'static {
    /// Stored at collected pairs.
    const MASKED: Self;
    /// Width in bytes; doubles as the precision flag of the dump format.
    const BYTES: u32;

    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn total_order(&self, other: &Self) -> Ordering;
    fn write_le(self, w: &mut impl Write) -> std::io::Result<()>;
    fn read_le(r: &mut impl Read) -> std::io::Result<Self>;
}

impl Score for f32 {
    const MASKED: Self = f32::NEG_INFINITY;
    const BYTES: u32 = 4;

    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn total_order(&self, other: &Self) -> Ordering {
        self.total_cmp(other)
    }
    fn write_le(self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(&self.to_le_bytes())
    }
    fn read_le(r: &mut impl Read) -> std::io::Result<Self> {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)?;
        Ok(f32::from_le_bytes(b))
    }
}

impl Score for f64 {
    const MASKED: Self = f64::NEG_INFINITY;
    const BYTES: u32 = 8;

    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn total_order(&self, other: &Self) -> Ordering {
        self.total_cmp(other)
    }
    fn write_le(self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(&self.to_le_bytes())
    }
    fn read_le(r: &mut impl Read) -> std::io::Result<Self> {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorePrecision {
    #[default]
    Single,
    Double,
}

/// Whether matrix rows carry the walk's first `1/k_u` step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UserStep {
    /// Scores exactly as the per-user scorers return them.
    Omitted,
    /// Row `u` divided by `k_u`, i.e. the full three-step walk probability
    /// for P3.
    #[default]
    Included,
}

/// Per-node weights of the diffusion kernel, prepared once per graph.
#[derive(Debug, Clone)]
pub struct Diffusion<'g> {
    graph: &'g BipartiteGraph,
    spec: ScorerSpec,
    item_step: Vec<f64>,
    user_step: Vec<f64>,
    target: Option<Vec<f64>>,
}

fn powers(degrees: impl Iterator<Item = usize>, exponent: f64) -> Vec<f64> {
    degrees.map(|k| (k as f64).powf(-exponent)).collect()
}

impl<'g> Diffusion<'g> {
    pub fn new(graph: &'g BipartiteGraph, spec: ScorerSpec) -> Result<Self> {
        spec.validate()?;
        let item_deg = || (0..graph.num_items()).map(|i| graph.item_degree(i));
        let user_deg = || (0..graph.num_users()).map(|u| graph.user_degree(u));
        let (item_step, user_step, target) = match spec {
            ScorerSpec::P3 => (powers(item_deg(), 1.0), powers(user_deg(), 1.0), None),
            ScorerSpec::P3Alpha { alpha } => (powers(item_deg(), alpha), powers(user_deg(), alpha), None),
            ScorerSpec::RP3Beta { beta } => (
                powers(item_deg(), 1.0),
                powers(user_deg(), 1.0),
                Some(powers(item_deg(), beta)),
            ),
            ScorerSpec::HHP { hybrid_lambda } => (
                powers(item_deg(), hybrid_lambda),
                powers(user_deg(), 1.0),
                Some(powers(item_deg(), 1.0 - hybrid_lambda)),
            ),
        };
        Ok(Diffusion {
            graph,
            spec,
            item_step,
            user_step,
            target,
        })
    }

    pub fn spec(&self) -> ScorerSpec {
        self.spec
    }

    pub fn graph(&self) -> &'g BipartiteGraph {
        self.graph
    }

    /// Writes the unmasked score row of `user` into `out` (length `n`).
    /// `user_mass` must have length `m` and be all zeros; it is left zeroed.
    pub fn score_row_into(&self, user: usize, user_mass: &mut [f64], touched: &mut Vec<u32>, out: &mut [f64]) {
        let g = self.graph;
        debug_assert_eq!(out.len(), g.num_items());
        debug_assert_eq!(user_mass.len(), g.num_users());
        out.fill(0.0);
        touched.clear();
        for &j in g.user_items(user) {
            let w = self.item_step[j as usize];
            for &v in g.item_users(j as usize) {
                let slot = &mut user_mass[v as usize];
                if *slot == 0.0 {
                    touched.push(v);
                }
                *slot += w;
            }
        }
        for &v in touched.iter() {
            let mass = std::mem::take(&mut user_mass[v as usize]) * self.user_step[v as usize];
            for &i in g.user_items(v as usize) {
                out[i as usize] += mass;
            }
        }
        if let Some(target) = &self.target {
            for (s, t) in out.iter_mut().zip(target) {
                *s *= t;
            }
        }
    }

    /// Unmasked score row of `user`.
    pub fn score_row(&self, user: usize) -> Result<Vec<f64>> {
        let g = self.graph;
        if user >= g.num_users() {
            return Err(Error::IndexOutOfBounds {
                what: "user",
                index: user,
                bound: g.num_users(),
            });
        }
        let mut mass = vec![0.0; g.num_users()];
        let mut out = vec![0.0; g.num_items()];
        self.score_row_into(user, &mut mass, &mut Vec::new(), &mut out);
        Ok(out)
    }
}

/// P3 (ProbS) scores of `user` over every item: the three-step walk
/// probability without the `1/k_u` first step.
pub fn score_p3(graph: &BipartiteGraph, user: usize) -> Result<Vec<f64>> {
    Diffusion::new(graph, ScorerSpec::P3)?.score_row(user)
}

pub fn score_p3_alpha(graph: &BipartiteGraph, user: usize, alpha: f64) -> Result<Vec<f64>> {
    Diffusion::new(graph, ScorerSpec::P3Alpha { alpha })?.score_row(user)
}

pub fn score_rp3_beta(graph: &BipartiteGraph, user: usize, beta: f64) -> Result<Vec<f64>> {
    Diffusion::new(graph, ScorerSpec::RP3Beta { beta })?.score_row(user)
}

pub fn score_hhp(graph: &BipartiteGraph, user: usize, hybrid_lambda: f64) -> Result<Vec<f64>> {
    Diffusion::new(graph, ScorerSpec::HHP { hybrid_lambda })?.score_row(user)
}

/// Dense row-major `m × n` scores. Collected pairs hold [`Score::MASKED`];
/// every other entry is finite and non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix<S: Score> {
    num_users: usize,
    num_items: usize,
    data: Vec<S>,
    spec: Option<ScorerSpec>,
}

impl<S: Score> ScoreMatrix<S> {
    /// Wraps precomputed scores; use [`Score::MASKED`] for excluded pairs.
    pub fn from_raw(num_users: usize, num_items: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != num_users * num_items {
            return Err(Error::BadScoreDump(format!(
                "expected {} scores for {num_users}x{num_items}, got {}",
                num_users * num_items,
                data.len()
            )));
        }
        Ok(ScoreMatrix {
            num_users,
            num_items,
            data,
            spec: None,
        })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn spec(&self) -> Option<ScorerSpec> {
        self.spec
    }

    pub fn row(&self, user: usize) -> &[S] {
        &self.data[user * self.num_items..(user + 1) * self.num_items]
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn raw(&self, user: usize, item: usize) -> S {
        self.data[user * self.num_items + item]
    }

    /// `None` for masked pairs.
    pub fn get(&self, user: usize, item: usize) -> Option<S> {
        let s = self.raw(user, item);
        (!is_masked(s)).then_some(s)
    }

    pub fn is_masked(&self, user: usize, item: usize) -> bool {
        is_masked(self.raw(user, item))
    }

    pub fn masked_count(&self) -> usize {
        self.data.iter().filter(|&&s| is_masked(s)).count()
    }

    /// Multiplies every unmasked entry by `factor` (> 0).
    pub fn scaled(&self, factor: f64) -> Self {
        let data = self
            .data
            .iter()
            .map(|&s| {
                if is_masked(s) {
                    s
                } else {
                    S::from_f64(s.to_f64() * factor)
                }
            })
            .collect();
        ScoreMatrix { data, ..self.clone() }
    }

    pub fn row_mut(&mut self, user: usize) -> &mut [S] {
        &mut self.data[user * self.num_items..(user + 1) * self.num_items]
    }

    /// Writes the debug dump: `b"TWSM"`, `m`, `n`, precision flag (4 or 8),
    /// all little-endian `u32`, then row-major scores with masked entries as
    /// negative infinity.
    pub fn write_dump(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(DUMP_MAGIC)?;
        w.write_all(&(self.num_users as u32).to_le_bytes())?;
        w.write_all(&(self.num_items as u32).to_le_bytes())?;
        w.write_all(&S::BYTES.to_le_bytes())?;
        for &s in &self.data {
            s.write_le(w)?;
        }
        Ok(())
    }

    pub fn read_dump(r: &mut impl Read) -> Result<Self> {
        let mut header = [0u8; 16];
        r.read_exact(&mut header)?;
        if &header[..4] != DUMP_MAGIC {
            return Err(Error::BadScoreDump("bad magic".into()));
        }
        let word = |k: usize| u32::from_le_bytes(header[k..k + 4].try_into().unwrap());
        let (m, n, flag) = (word(4) as usize, word(8) as usize, word(12));
        if flag != S::BYTES {
            return Err(Error::BadScoreDump(format!(
                "precision flag {flag} does not match requested {}-byte scores",
                S::BYTES
            )));
        }
        let mut data = Vec::with_capacity(m * n);
        for _ in 0..m * n {
            data.push(S::read_le(r)?);
        }
        Self::from_raw(m, n, data)
    }
}

pub const DUMP_MAGIC: &[u8; 4] = b"TWSM";

fn is_masked<S: Score>(s: S) -> bool {
    s.total_order(&S::MASKED) == Ordering::Equal
}

/// Scores every user under `spec`, masking the training links. Rows equal
/// the per-user scorer outputs ([`UserStep::Omitted`]).
pub fn score_matrix<S: Score>(graph: &BipartiteGraph, spec: ScorerSpec) -> Result<ScoreMatrix<S>> {
    score_matrix_with(graph, spec, UserStep::Omitted)
}

pub fn score_matrix_with<S: Score>(
    graph: &BipartiteGraph,
    spec: ScorerSpec,
    user_step: UserStep,
) -> Result<ScoreMatrix<S>> {
    let diffusion = Diffusion::new(graph, spec)?;
    let (m, n) = (graph.num_users(), graph.num_items());
    let mut data = vec![S::MASKED; m * n];
    par::for_each_row_with(
        &mut data,
        n,
        || (vec![0.0f64; m], Vec::new(), vec![0.0f64; n]),
        |(mass, touched, row), user, out| {
            diffusion.score_row_into(user, mass, touched, row);
            let scale = match user_step {
                UserStep::Omitted => 1.0,
                UserStep::Included => 1.0 / graph.user_degree(user) as f64,
            };
            for (dst, &src) in out.iter_mut().zip(row.iter()) {
                *dst = S::from_f64(src * scale);
            }
            for &i in graph.user_items(user) {
                out[i as usize] = S::MASKED;
            }
        },
    );
    Ok(ScoreMatrix {
        num_users: m,
        num_items: n,
        data,
        spec: Some(spec),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// u1–{i1,i2}, u2–{i2,i3}
    fn two_user_graph() -> BipartiteGraph {
        BipartiteGraph::from_raw_links([("u1", "i1"), ("u1", "i2"), ("u2", "i2"), ("u2", "i3")]).unwrap()
    }

    #[test]
    fn p3_single_path_value() {
        let g = two_user_graph();
        let row = score_p3(&g, 0).unwrap();
        // u1 -> i2 -> u2 -> i3 is the only path: 1/(k_i2 * k_u2).
        assert!((row[2] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn unreachable_items_score_zero() {
        let g = BipartiteGraph::from_raw_links([("a", "x"), ("b", "y")]).unwrap();
        assert_eq!(score_p3(&g, 0).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn alpha_zero_counts_paths() {
        let g = two_user_graph();
        let row = score_p3_alpha(&g, 0, 0.0).unwrap();
        // (j, v) pairs reaching i1: (i1,u1),(i2,u1); i2: (i1,u1),(i2,u1),(i2,u2); i3: (i2,u2)
        assert_eq!(row, vec![2.0, 3.0, 1.0]);
    }

    #[test]
    fn rp3_beta_divides_by_item_degree() {
        let g = two_user_graph();
        let p3 = score_p3(&g, 0).unwrap();
        let rp3 = score_rp3_beta(&g, 0, 1.0).unwrap();
        for i in 0..3 {
            assert!((rp3[i] - p3[i] / g.item_degree(i) as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn parameter_errors() {
        let g = two_user_graph();
        assert!(matches!(score_rp3_beta(&g, 0, -0.1), Err(Error::NegativeBeta(_))));
        assert!(matches!(score_hhp(&g, 0, 1.5), Err(Error::LambdaOutOfRange(_))));
        assert!(matches!(score_p3(&g, 9), Err(Error::IndexOutOfBounds { .. })));
    }

    #[test]
    fn matrix_masks_training_links() {
        let g = two_user_graph();
        let sm = score_matrix::<f64>(&g, ScorerSpec::P3).unwrap();
        assert_eq!(sm.masked_count(), g.num_links());
        assert!(sm.is_masked(0, 0) && sm.is_masked(0, 1) && sm.is_masked(1, 1) && sm.is_masked(1, 2));
        assert_eq!(sm.get(0, 2), Some(0.25));
    }

    #[test]
    fn included_user_step_divides_rows() {
        let g = BipartiteGraph::from_raw_links([("u1", "i1"), ("u1", "i2"), ("u2", "i2"), ("u2", "i3"), ("u2", "i4")])
            .unwrap();
        let plain = score_matrix::<f64>(&g, ScorerSpec::P3).unwrap();
        let walk = score_matrix_with::<f64>(&g, ScorerSpec::P3, UserStep::Included).unwrap();
        for u in 0..2 {
            for i in 0..4 {
                match (plain.get(u, i), walk.get(u, i)) {
                    (Some(a), Some(b)) => assert!((a / g.user_degree(u) as f64 - b).abs() < 1e-15),
                    (None, None) => {}
                    _ => panic!("mask mismatch"),
                }
            }
        }
    }

    #[test]
    fn dump_roundtrip_and_header() {
        let g = two_user_graph();
        let sm = score_matrix::<f32>(&g, ScorerSpec::P3).unwrap();
        let mut buf = Vec::new();
        sm.write_dump(&mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 6 * 4);
        assert_eq!(&buf[..4], b"TWSM");
        assert_eq!(&buf[12..16], &4u32.to_le_bytes());
        let back = ScoreMatrix::<f32>::read_dump(&mut buf.as_slice()).unwrap();
        assert_eq!(back.as_slice(), sm.as_slice());
        assert!(matches!(
            ScoreMatrix::<f64>::read_dump(&mut buf.as_slice()),
            Err(Error::BadScoreDump(_))
        ));
    }

    #[test]
    fn spec_serializes_with_kind_tag() {
        let json = serde_json::to_string(&ScorerSpec::RP3Beta { beta: 0.7 }).unwrap();
        assert_eq!(json, r#"{"kind":"RP3Beta","beta":0.7}"#);
        let back: ScorerSpec = serde_json::from_str(r#"{"kind":"P3"}"#).unwrap();
        assert_eq!(back, ScorerSpec::P3);
    }
}
