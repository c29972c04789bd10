//! Seeded synthetic rating data with long-tailed item popularity and
//! clustered user taste. Used by the benchmarks, the tests and anyone who
//! wants to try the CLI without a real data set.

use std::io::Write;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::RatingRecord;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub users: usize,
    pub items: usize,
    /// Mean ratings per user (minimum 5).
    pub mean_ratings: usize,
    /// Item popularity decays as `rank^-exponent`.
    pub popularity_exponent: f64,
    /// Number of taste clusters; items are assigned round-robin.
    pub clusters: usize,
    /// Probability that a rating is drawn from the user's own cluster.
    pub affinity: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            users: 300,
            items: 200,
            mean_ratings: 25,
            popularity_exponent: 0.9,
            clusters: 6,
            affinity: 0.7,
            seed: 1,
        }
    }
}

pub fn synthetic_ratings(cfg: &SynthConfig) -> Vec<RatingRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let clusters = cfg.clusters.max(1);
    let weight = |i: usize| ((i + 1) as f64).powf(-cfg.popularity_exponent);
    let global = WeightedIndex::new((0..cfg.items).map(weight)).expect("items > 0");
    let members: Vec<Vec<usize>> = (0..clusters)
        .map(|c| (c..cfg.items).step_by(clusters).collect())
        .collect();
    let local: Vec<Option<WeightedIndex<f64>>> = members
        .iter()
        .map(|items| WeightedIndex::new(items.iter().map(|&i| weight(i))).ok())
        .collect();

    let mut out = Vec::new();
    for u in 0..cfg.users {
        let cluster = u % clusters;
        let target = (5 + rng.gen_range(0..=cfg.mean_ratings.saturating_sub(5) * 2)).min(cfg.items);
        let mut seen = std::collections::HashSet::new();
        let mut attempts = 0;
        while seen.len() < target && attempts < target * 20 {
            attempts += 1;
            let item = match &local[cluster] {
                Some(dist) if rng.gen_bool(cfg.affinity) => members[cluster][dist.sample(&mut rng)],
                _ => global.sample(&mut rng),
            };
            if seen.insert(item) {
                let rating = *[1u8, 2, 3, 3, 4, 4, 4, 5, 5].get(rng.gen_range(0..9)).unwrap();
                out.push(RatingRecord {
                    raw_user_id: format!("{}", u + 1),
                    raw_item_id: format!("{}", item + 1),
                    rating,
                    timestamp: Some(1_000_000 + out.len() as i64),
                });
            }
        }
    }
    out
}

/// Writes records as `user::item::rating::timestamp` lines.
pub fn write_ml1m(records: &[RatingRecord], w: &mut impl Write) -> std::io::Result<()> {
    for r in records {
        writeln!(
            w,
            "{}::{}::{}::{}",
            r.raw_user_id,
            r.raw_item_id,
            r.rating,
            r.timestamp.unwrap_or(0)
        )?;
    }
    Ok(())
}
