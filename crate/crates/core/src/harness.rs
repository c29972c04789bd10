//! End-to-end experiment orchestration: ingest, split, score, rank,
//! aggregate, recommend, evaluate, and write every artifact to disk.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{self, BipartiteGraph, RatingFormat, SplitDataset, DEFAULT_MIN_RATING, DEFAULT_TRAIN_FRACTION};
use crate::error::{Error, Result};
use crate::metrics::{self, HammingMode, MetricsReport};
use crate::ranking::{self, AggregationSpec, RankTables, RankedInput, RecommendationLists};
use crate::scorers::{self, Score, ScoreMatrix, ScorePrecision, ScorerSpec, UserStep};

pub const DEFAULT_LIST_LEN: usize = 20;
pub const DEFAULT_SPLIT_SEED: u64 = 2017;

pub const SPLIT_DIR: &str = "split";
pub const METRICS_FILE: &str = "metrics.json";
pub const RECOMMENDATIONS_FILE: &str = "recommendations.tsv";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_JSON: &str = "sweep.json";
pub const GRAPH_SUMMARY_FILE: &str = "graph_summary.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const HISTOGRAM_FILE: &str = "degree_histograms.csv";
pub const SCATTER_FILE: &str = "rank_scatter.csv";
pub const SWEEP_FIGURE_FILE: &str = "sweep_figure.csv";

/// `0.0, 0.1, …, 1.0`
pub fn default_lambda_grid() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data_path: Option<PathBuf>,
    pub format: RatingFormat,
    pub min_rating: u8,
    pub train_fraction: f64,
    pub split_seed: u64,
    pub scorer: ScorerSpec,
    /// TWRA weight of the backward rank for `run`.
    pub twra_lambda: f64,
    /// λ values visited by `sweep`.
    pub lambda_grid: Vec<f64>,
    pub list_len: usize,
    /// `None` picks exact or sampled by user count.
    pub hamming_mode: Option<HammingMode>,
    pub output_dir: PathBuf,
    pub score_precision: ScorePrecision,
    /// Whether score rows keep the `1/k_u` first step before ranking.
    pub user_step: UserStep,
    /// Item degrees exported to the rank scatter figure.
    pub scatter_degrees: Vec<u32>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data_path: None,
            format: RatingFormat::Ml1mDoubleColon,
            min_rating: DEFAULT_MIN_RATING,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            split_seed: DEFAULT_SPLIT_SEED,
            scorer: ScorerSpec::P3,
            twra_lambda: 0.0,
            lambda_grid: default_lambda_grid(),
            list_len: DEFAULT_LIST_LEN,
            hamming_mode: None,
            output_dir: PathBuf::from("out"),
            score_precision: ScorePrecision::Single,
            user_step: UserStep::Included,
            scatter_degrees: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        self.scorer.validate()?;
        AggregationSpec::new(self.twra_lambda)?;
        if self.list_len == 0 {
            return Err(Error::ZeroListLength);
        }
        if !(1..=5).contains(&self.min_rating) {
            return Err(Error::InvalidConfig(format!(
                "min_rating {} outside 1..=5",
                self.min_rating
            )));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidTrainFraction(self.train_fraction));
        }
        Ok(())
    }

    fn data_path(&self) -> Result<&Path> {
        self.data_path
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig("no data_path given".into()))
    }

    pub fn hamming_mode_for(&self, num_users: usize) -> HammingMode {
        self.hamming_mode
            .unwrap_or_else(|| HammingMode::auto(num_users, self.split_seed))
    }
}

/// Reads the rating file and builds the thresholded graph.
pub fn ingest(config: &ExperimentConfig) -> Result<BipartiteGraph> {
    let records = dataset::read_ratings_file(config.data_path()?, config.format)?;
    dataset::build_graph(&records, config.min_rating)
}

pub fn load_split(config: &ExperimentConfig) -> Result<SplitDataset> {
    config.validate()?;
    let graph = ingest(config)?;
    dataset::split(&graph, config.train_fraction, config.split_seed)
}

/// Scores and rank tables for one split and scorer. Rank tables are built on
/// first use, since λ = 0 only needs the scores.
pub struct Evaluator<'a, S: Score> {
    split: &'a SplitDataset,
    scores: ScoreMatrix<S>,
    tables: Option<RankTables>,
}

impl<'a, S: Score> Evaluator<'a, S> {
    pub fn new(split: &'a SplitDataset, scorer: ScorerSpec, user_step: UserStep) -> Result<Self> {
        Ok(Evaluator {
            split,
            scores: scorers::score_matrix_with(&split.train, scorer, user_step)?,
            tables: None,
        })
    }

    pub fn split(&self) -> &'a SplitDataset {
        self.split
    }

    pub fn scores(&self) -> &ScoreMatrix<S> {
        &self.scores
    }

    pub fn tables(&mut self) -> &RankTables {
        let scores = &self.scores;
        self.tables.get_or_insert_with(|| RankTables::from_scores(scores))
    }

    /// TWRA lists; `λ = 0` ranks by score directly.
    pub fn lists(&mut self, lambda: f64, list_len: usize) -> Result<RecommendationLists> {
        let spec = AggregationSpec::new(lambda)?;
        if lambda == 0.0 {
            return ranking::recommend(RankedInput::Scores(&self.scores), list_len);
        }
        let tables = self.tables();
        ranking::recommend::<S>(RankedInput::Aggregated(ranking::twra_aggregate(tables, spec)), list_len)
    }

    pub fn evaluate(&self, lists: &RecommendationLists, hamming_mode: HammingMode) -> Result<MetricsReport> {
        metrics::evaluate(lists, &self.split.probe, self.split.train.num_items(), hamming_mode)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub scorer: ScorerSpec,
    pub twra_lambda: f64,
    pub split_seed: u64,
    pub train_fraction: f64,
    pub min_rating: u8,
    pub score_precision: ScorePrecision,
    pub user_step: UserStep,
    pub users: usize,
    pub items: usize,
    pub train_links: usize,
    pub probe_links: usize,
}

impl Provenance {
    fn new(config: &ExperimentConfig, split: &SplitDataset, twra_lambda: f64) -> Self {
        Provenance {
            scorer: config.scorer,
            twra_lambda,
            split_seed: split.split_seed,
            train_fraction: split.train_fraction,
            min_rating: config.min_rating,
            score_precision: config.score_precision,
            user_step: config.user_step,
            users: split.train.num_users(),
            items: split.train.num_items(),
            train_links: split.train.num_links(),
            probe_links: split.probe.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    #[serde(flatten)]
    pub metrics: MetricsReport,
    pub provenance: Provenance,
}

/// Metrics and lists for one configuration on an existing split.
pub fn evaluate_config(config: &ExperimentConfig, split: &SplitDataset) -> Result<(RunReport, RecommendationLists)> {
    config.validate()?;
    let hamming_mode = config.hamming_mode_for(split.train.num_users());
    fn go<S: Score>(
        config: &ExperimentConfig,
        split: &SplitDataset,
        mode: HammingMode,
    ) -> Result<(MetricsReport, RecommendationLists)> {
        let mut ev = Evaluator::<S>::new(split, config.scorer, config.user_step)?;
        let lists = ev.lists(config.twra_lambda, config.list_len)?;
        Ok((ev.evaluate(&lists, mode)?, lists))
    }
    let (metrics, lists) = match config.score_precision {
        ScorePrecision::Single => go::<f32>(config, split, hamming_mode)?,
        ScorePrecision::Double => go::<f64>(config, split, hamming_mode)?,
    };
    Ok((
        RunReport {
            metrics,
            provenance: Provenance::new(config, split, config.twra_lambda),
        },
        lists,
    ))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn write_with(path: &Path, body: impl FnOnce(&mut BufWriter<fs::File>) -> Result<()>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Files under the output directory, relative paths, sorted.
    pub files: Vec<String>,
    /// Resolved configuration of the last invocation of each subcommand.
    pub commands: BTreeMap<String, ExperimentConfig>,
}

/// Merges `files` and the command's config into `manifest.json`.
pub fn update_manifest(out: &Path, command: &str, config: &ExperimentConfig, files: &[&str]) -> Result<()> {
    let path = out.join(MANIFEST_FILE);
    let mut manifest: Manifest = if path.exists() {
        serde_json::from_str(&fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?)?
    } else {
        Manifest::default()
    };
    for f in files {
        if !manifest.files.iter().any(|x| x == f) {
            manifest.files.push((*f).to_string());
        }
    }
    manifest.files.sort();
    manifest.commands.insert(command.to_string(), config.clone());
    write_json(&path, &manifest)
}

const SPLIT_FILES: [&str; 5] = [
    "split/train.tsv",
    "split/probe.tsv",
    "split/meta.json",
    "split/user_ids.tsv",
    "split/item_ids.tsv",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub records: usize,
    pub min_rating: u8,
    pub users: usize,
    pub items: usize,
    pub links: usize,
    /// Links over `users × items`.
    pub sparsity: f64,
}

/// `ingest`: parse and threshold, write a graph summary.
pub fn run_ingest(config: &ExperimentConfig) -> Result<GraphSummary> {
    let records = dataset::read_ratings_file(config.data_path()?, config.format)?;
    let graph = dataset::build_graph(&records, config.min_rating)?;
    let summary = GraphSummary {
        records: records.len(),
        min_rating: config.min_rating,
        users: graph.num_users(),
        items: graph.num_items(),
        links: graph.num_links(),
        sparsity: graph.num_links() as f64 / (graph.num_users() as f64 * graph.num_items() as f64),
    };
    create_dir(&config.output_dir)?;
    write_json(&config.output_dir.join(GRAPH_SUMMARY_FILE), &summary)?;
    update_manifest(&config.output_dir, "ingest", config, &[GRAPH_SUMMARY_FILE])?;
    Ok(summary)
}

/// `split`: ingest, split and serialize the split.
pub fn run_split(config: &ExperimentConfig) -> Result<SplitDataset> {
    let split = load_split(config)?;
    split.write_dir(&config.output_dir.join(SPLIT_DIR))?;
    update_manifest(&config.output_dir, "split", config, &SPLIT_FILES)?;
    Ok(split)
}

/// `run`: the full pipeline for one (scorer, λ, L). Writes the split,
/// `metrics.json` and `recommendations.tsv`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport> {
    let split = load_split(config)?;
    let (report, lists) = evaluate_config(config, &split)?;
    let out = &config.output_dir;
    split.write_dir(&out.join(SPLIT_DIR))?;
    write_json(&out.join(METRICS_FILE), &report)?;
    lists.write_tsv_file(&out.join(RECOMMENDATIONS_FILE))?;
    let mut files = SPLIT_FILES.to_vec();
    files.extend([METRICS_FILE, RECOMMENDATIONS_FILE]);
    update_manifest(out, "run", config, &files)?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub lambda: f64,
    pub precision: f64,
    pub hamming: f64,
    pub gini: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub scorer: ScorerSpec,
    pub split_seed: u64,
    #[serde(rename = "L")]
    pub list_len: usize,
    pub hamming_mode: HammingMode,
    pub records: Vec<SweepRecord>,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let in_range = grid.iter().all(|l| (0.0..=1.0).contains(l));
    let increasing = grid.windows(2).all(|w| w[0] < w[1]);
    if !in_range || !increasing {
        return Err(Error::InvalidGrid);
    }
    Ok(())
}

/// Scores and ranks once, then re-aggregates for every λ of the grid.
pub fn sweep_on_split(config: &ExperimentConfig, split: &SplitDataset) -> Result<SweepResult> {
    config.validate()?;
    check_grid(&config.lambda_grid)?;
    let hamming_mode = config.hamming_mode_for(split.train.num_users());
    fn go<S: Score>(config: &ExperimentConfig, split: &SplitDataset, mode: HammingMode) -> Result<Vec<SweepRecord>> {
        let mut ev = Evaluator::<S>::new(split, config.scorer, config.user_step)?;
        config
            .lambda_grid
            .iter()
            .map(|&lambda| {
                let lists = ev.lists(lambda, config.list_len)?;
                let m = ev.evaluate(&lists, mode)?;
                Ok(SweepRecord {
                    lambda,
                    precision: m.precision,
                    hamming: m.hamming,
                    gini: m.gini,
                })
            })
            .collect()
    }
    let records = match config.score_precision {
        ScorePrecision::Single => go::<f32>(config, split, hamming_mode)?,
        ScorePrecision::Double => go::<f64>(config, split, hamming_mode)?,
    };
    Ok(SweepResult {
        scorer: config.scorer,
        split_seed: split.split_seed,
        list_len: config.list_len,
        hamming_mode,
        records,
    })
}

pub fn write_sweep_csv(records: &[SweepRecord], w: impl Write) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    for r in records {
        writer.serialize(r)?;
    }
    writer.flush()?;
    Ok(())
}

/// `sweep`: writes the split, `sweep.csv` and `sweep.json`.
pub fn sweep_lambda(config: &ExperimentConfig) -> Result<SweepResult> {
    check_grid(&config.lambda_grid)?;
    let split = load_split(config)?;
    let result = sweep_on_split(config, &split)?;
    let out = &config.output_dir;
    split.write_dir(&out.join(SPLIT_DIR))?;
    write_with(&out.join(SWEEP_CSV), |w| write_sweep_csv(&result.records, w))?;
    write_json(&out.join(SWEEP_JSON), &result)?;
    let mut files = SPLIT_FILES.to_vec();
    files.extend([SWEEP_CSV, SWEEP_JSON]);
    update_manifest(out, "sweep", config, &files)?;
    Ok(result)
}

/// `figures`: turns the artifacts of earlier `run`/`sweep` invocations in
/// the output directory into plot data. Returns the files written.
///
/// * degree histograms need `recommendations.tsv` from `run`.
/// * the rank scatter recomputes rank tables on the saved split and needs
///   `scatter_degrees`.
/// * the sweep figure needs `sweep.csv` from `sweep`.
pub fn emit_figures(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let out = &config.output_dir;
    let split_dir = out.join(SPLIT_DIR);
    let metrics_path = out.join(METRICS_FILE);
    let recs_path = out.join(RECOMMENDATIONS_FILE);
    let sweep_path = out.join(SWEEP_CSV);
    if !split_dir.join(dataset::META_FILE).exists() {
        return Err(Error::MissingRunArtifacts(split_dir.join(dataset::META_FILE)));
    }
    let have_run = recs_path.exists() && metrics_path.exists();
    if !have_run && !sweep_path.exists() {
        return Err(Error::MissingRunArtifacts(recs_path));
    }
    let split = SplitDataset::read_dir(&split_dir)?;
    let mut written = Vec::new();
    let mut names = Vec::new();

    if have_run {
        let report: RunReport =
            serde_json::from_str(&fs::read_to_string(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?)?;
        let lists = RecommendationLists::read_tsv_file(&recs_path, report.metrics.list_len)?;
        let rows = metrics::degree_histograms(&split.train, &lists);
        let path = out.join(HISTOGRAM_FILE);
        write_with(&path, |w| metrics::write_histogram_csv(&rows, w))?;
        written.push(path);
        names.push(HISTOGRAM_FILE);
    }

    if !config.scatter_degrees.is_empty() {
        fn scatter<S: Score>(config: &ExperimentConfig, split: &SplitDataset) -> Result<Vec<ranking::ScatterRecord>> {
            let mut ev = Evaluator::<S>::new(split, config.scorer, config.user_step)?;
            let tables = ev.tables();
            ranking::rank_scatter_export(tables, &split.train, &config.scatter_degrees)
        }
        let records = match config.score_precision {
            ScorePrecision::Single => scatter::<f32>(config, &split)?,
            ScorePrecision::Double => scatter::<f64>(config, &split)?,
        };
        let path = out.join(SCATTER_FILE);
        write_with(&path, |w| ranking::write_scatter_csv(&records, w))?;
        written.push(path);
        names.push(SCATTER_FILE);
    }

    if sweep_path.exists() {
        let path = out.join(SWEEP_FIGURE_FILE);
        fs::copy(&sweep_path, &path).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        names.push(SWEEP_FIGURE_FILE);
    }

    update_manifest(out, "figures", config, &names)?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_protocol() {
        let c = ExperimentConfig::default();
        assert_eq!(c.min_rating, 3);
        assert_eq!(c.train_fraction, 0.9);
        assert_eq!(c.list_len, 20);
        assert_eq!(c.lambda_grid.len(), 11);
        assert_eq!(c.lambda_grid[3], 0.3);
        assert_eq!(c.scorer, ScorerSpec::P3);
        assert_eq!(c.score_precision, ScorePrecision::Single);
    }

    #[test]
    fn config_json_partial_fill() {
        let c: ExperimentConfig =
            serde_json::from_str(r#"{"scorer": {"kind": "HHP", "hybrid_lambda": 0.3}, "list_len": 10}"#).unwrap();
        assert_eq!(c.scorer, ScorerSpec::HHP { hybrid_lambda: 0.3 });
        assert_eq!(c.list_len, 10);
        assert_eq!(c.min_rating, 3);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn grid_validation() {
        assert!(matches!(check_grid(&[]), Err(Error::EmptyGrid)));
        assert!(matches!(check_grid(&[0.2, 0.1]), Err(Error::InvalidGrid)));
        assert!(matches!(check_grid(&[0.0, 1.5]), Err(Error::InvalidGrid)));
        check_grid(&[0.0]).unwrap();
    }

    #[test]
    fn figures_without_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let config = ExperimentConfig {
            output_dir: dir.path().to_path_buf(),
            ..Default::default()
        };
        assert!(matches!(emit_figures(&config), Err(Error::MissingRunArtifacts(_))));
    }
}
