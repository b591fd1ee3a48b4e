//! End-to-end experiment orchestration: manifest ingestion, cached feature
//! extraction and rendering, evaluator scoring, per-fold SVR training, and
//! metric reporting.
//!
//! Projections and structural features are cached on disk keyed by the
//! cloud's content hash and the relevant configuration, so repeated folds
//! and repeated runs reuse them. Training-side computations (standardizer,
//! grid search, SVR) only ever see clouds recorded in the fold's
//! `train_clouds` list, which the run record exposes for leakage audits.

use std::collections::BTreeSet;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::evaluator::{
    score_batch, EndpointConfig, EvalError, HttpBackend, MockBackend, MockConfig, ScoreBackend,
    ScoreRequest,
};
use crate::features::{extract_structural_features, FeatureError, StructuralFeatureVector};
use crate::manifest::{group_kfold, load_manifest, ManifestError};
use crate::metrics::{compute_report, MetricError, MetricReport};
use crate::pointcloud::{load_ply_from_reader, PlyError};
use crate::projection::{pad_and_resize, render_cube_projections, RenderConfig};
use crate::rating::LmmEvaluation;
use crate::svr::{grid_search, save_model, train_raw, FusedFeature, SvrError, SvrHyper};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Ply(#[from] PlyError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("scoring '{cloud}' failed: {source}")]
    Scoring {
        cloud: String,
        #[source]
        source: EvalError,
    },
    #[error(transparent)]
    Svr(#[from] SvrError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Which feature streams feed the regressor; the reduced sets exist for
/// ablation runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    #[default]
    Full,
    LmmOnly,
    StructuralOnly,
}

/// Evaluator backend selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvaluatorConfig {
    Mock(MockConfig),
    Endpoint(EndpointConfig),
}

fn default_scales() -> Vec<usize> {
    crate::features::DEFAULT_SCALES.to_vec()
}

fn default_workers() -> usize {
    4
}

/// Full description of one cross-validated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub manifest_path: PathBuf,
    #[serde(default)]
    pub projection: RenderConfig,
    #[serde(default = "default_scales")]
    pub scales: Vec<usize>,
    pub evaluator: EvaluatorConfig,
    #[serde(default)]
    pub svr: SvrHyper,
    #[serde(default)]
    pub grid_search: bool,
    pub folds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub logistic: bool,
    pub output_dir: PathBuf,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub feature_set: FeatureSet,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ExperimentError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| ExperimentError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExperimentError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.folds < 2 {
            return Err(ExperimentError::InvalidConfig(format!(
                "folds must be at least 2, got {}",
                self.folds
            )));
        }
        if self.workers < 1 {
            return Err(ExperimentError::InvalidConfig("workers must be >= 1".into()));
        }
        if self.scales.is_empty() {
            return Err(ExperimentError::InvalidConfig("scales must not be empty".into()));
        }
        self.projection
            .validate()
            .map_err(ExperimentError::InvalidConfig)?;
        if let EvaluatorConfig::Mock(mock) = &self.evaluator {
            if !(1..=6).contains(&mock.projections) {
                return Err(ExperimentError::InvalidConfig(format!(
                    "mock projections must be in 1..=6, got {}",
                    mock.projections
                )));
            }
        }
        Ok(())
    }

    /// Stable hash of the serialized config, recorded for reproducibility.
    pub fn config_hash(&self) -> String {
        let text = toml::to_string(self).expect("config serializes");
        hex_digest(text.as_bytes())
    }
}

/// One scored test cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub cloud_name: String,
    pub mos: f64,
    pub pred: f64,
}

/// Results of one fold.
#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub fold_index: usize,
    pub report: MetricReport,
    pub predictions: Vec<Prediction>,
    pub hyper: SvrHyper,
}

/// Which clouds and groups each side of a fold saw; written to the run
/// record so leakage can be audited after the fact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub fold_index: usize,
    pub train_groups: BTreeSet<String>,
    pub test_groups: BTreeSet<String>,
    pub train_clouds: Vec<String>,
    pub test_clouds: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub database_name: String,
    pub seed: u64,
    pub config_hash: String,
    pub folds: Vec<FoldRecord>,
}

/// Everything a run produced, plus where it was written.
#[derive(Debug)]
pub struct RunOutput {
    pub per_fold: Vec<FoldOutcome>,
    pub mean: MetricReport,
    pub record: RunRecord,
    pub metrics_csv: PathBuf,
    pub predictions_csv: PathBuf,
    pub record_json: PathBuf,
    pub model_files: Vec<PathBuf>,
}

fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

fn scales_key(scales: &[usize]) -> String {
    let mut sorted = scales.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    sorted
        .iter()
        .map(|k| format!("k{k}"))
        .collect::<Vec<_>>()
        .join("-")
}

/// One cloud's cached pipeline products.
struct CloudData {
    name: String,
    group_id: String,
    mos: f64,
    structural: StructuralFeatureVector,
    resized_paths: Vec<PathBuf>,
}

fn feature_cache_read(path: &Path, scales: &[usize]) -> Option<StructuralFeatureVector> {
    let text = std::fs::read_to_string(path).ok()?;
    let mut lines = text.lines();
    let _header = lines.next()?;
    let row = lines.next()?;
    let mut fields = row.split(',');
    let _name = fields.next()?;
    let values: Option<Vec<f64>> = fields.map(|f| f.parse().ok()).collect();
    StructuralFeatureVector::from_values(values?, scales.to_vec())
}

fn feature_cache_write(
    path: &Path,
    name: &str,
    fv: &StructuralFeatureVector,
) -> std::io::Result<()> {
    let mut text = String::from("name,");
    text.push_str(&fv.names().join(","));
    text.push('\n');
    text.push_str(name);
    for v in fv.values() {
        text.push(',');
        text.push_str(&format!("{v}"));
    }
    text.push('\n');
    std::fs::write(path, text)
}

/// Renders (or reuses) projections, pads and resizes them for the scoring
/// contract, and extracts (or reuses) structural features for one cloud.
fn prepare_cloud(
    entry: &crate::manifest::ManifestEntry,
    cfg: &ExperimentConfig,
    cache_dir: &Path,
    need_resized: bool,
) -> Result<CloudData, ExperimentError> {
    let bytes = std::fs::read(&entry.ply_path)?;
    let content_hash = hex_digest(&bytes);
    let short = &content_hash[..16];

    // Structural features keyed by (content, scale set).
    let feat_dir = cache_dir.join("features");
    std::fs::create_dir_all(&feat_dir)?;
    let feat_path = feat_dir.join(format!("{short}-{}.csv", scales_key(&cfg.scales)));
    let structural = match feature_cache_read(&feat_path, &cfg.scales) {
        Some(fv) => fv,
        None => {
            let pc = load_ply_from_reader(&mut Cursor::new(&bytes), entry.cloud_name.clone())?;
            let fv = extract_structural_features(&pc, &cfg.scales)?;
            feature_cache_write(&feat_path, &entry.cloud_name, &fv)?;
            fv
        }
    };

    // Projections keyed by (content, render config).
    let render_hash = hex_digest(
        serde_json::to_string(&cfg.projection)
            .expect("render config serializes")
            .as_bytes(),
    );
    let proj_dir = cache_dir
        .join("projections")
        .join(format!("{short}-{}", &render_hash[..16]));
    let face_paths: Vec<PathBuf> = (1..=6)
        .map(|k| proj_dir.join(crate::projection::face_file_name(&entry.cloud_name, k)))
        .collect();
    if !face_paths.iter().all(|p| p.is_file()) {
        let pc = load_ply_from_reader(&mut Cursor::new(&bytes), entry.cloud_name.clone())?;
        let set = render_cube_projections(&pc, &cfg.projection);
        set.save_pngs(&proj_dir)?;
    }

    // 448x448 inputs for the scoring endpoint.
    let resized_dir = proj_dir.join("resized448");
    let resized_paths: Vec<PathBuf> = (1..=6)
        .map(|k| resized_dir.join(crate::projection::face_file_name(&entry.cloud_name, k)))
        .collect();
    if need_resized && !resized_paths.iter().all(|p| p.is_file()) {
        std::fs::create_dir_all(&resized_dir)?;
        for (src, dst) in face_paths.iter().zip(&resized_paths) {
            let img = image::open(src)
                .map_err(|e| ExperimentError::Io(std::io::Error::other(e.to_string())))?
                .to_rgb8();
            let resized = pad_and_resize(&img, 448, cfg.projection.background);
            resized
                .save_with_format(dst, image::ImageFormat::Png)
                .map_err(|e| ExperimentError::Io(std::io::Error::other(e.to_string())))?;
        }
    }

    Ok(CloudData {
        name: entry.cloud_name.clone(),
        group_id: entry.group_id.clone(),
        mos: entry.mos,
        structural,
        resized_paths,
    })
}

fn design_row(full: &FusedFeature, set: FeatureSet) -> Vec<f64> {
    match set {
        FeatureSet::Full => full.values().to_vec(),
        FeatureSet::LmmOnly => full.values()[..5].to_vec(),
        FeatureSet::StructuralOnly => full.values()[5..].to_vec(),
    }
}

fn format_metric_row(label: &str, r: &MetricReport) -> String {
    format!("{label},{},{},{},{}\n", r.srcc, r.plcc, r.krcc, r.rmse)
}

/// Runs the full cross-validated experiment described by `cfg`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput, ExperimentError> {
    cfg.validate()?;
    let manifest = load_manifest(&cfg.manifest_path)?;
    let folds = group_kfold(&manifest, cfg.folds, cfg.seed)?;

    std::fs::create_dir_all(&cfg.output_dir)?;
    let cache_dir = cfg.output_dir.join("cache");
    std::fs::create_dir_all(&cache_dir)?;

    let need_resized = matches!(cfg.evaluator, EvaluatorConfig::Endpoint(_));

    // Stage 1: per-cloud products, in parallel with a bounded pool.
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| ExperimentError::InvalidConfig(e.to_string()))?;
    let clouds: Vec<CloudData> = pool.install(|| {
        manifest
            .entries
            .par_iter()
            .map(|entry| prepare_cloud(entry, cfg, &cache_dir, need_resized))
            .collect::<Result<Vec<_>, _>>()
    })?;

    // Stage 2: evaluator scores in manifest order.
    let requests: Vec<ScoreRequest> = clouds
        .iter()
        .map(|c| ScoreRequest {
            cloud_name: c.name.clone(),
            mos: c.mos,
            image_paths: c.resized_paths.clone(),
        })
        .collect();
    let evals: Vec<LmmEvaluation> = match &cfg.evaluator {
        EvaluatorConfig::Mock(mock_cfg) => {
            let backend = MockBackend {
                config: *mock_cfg,
                range: manifest.score_range,
            };
            score_with(&requests, &backend)?
        }
        EvaluatorConfig::Endpoint(endpoint_cfg) => {
            let backend = HttpBackend {
                config: endpoint_cfg.clone(),
            };
            score_with(&requests, &backend)?
        }
    };

    // Stage 3: fused design matrix (validated at full width even when an
    // ablation subset is trained).
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(clouds.len());
    for (cloud, eval) in clouds.iter().zip(&evals) {
        let fused = FusedFeature::fuse(eval, &cloud.structural)?;
        rows.push(design_row(&fused, cfg.feature_set));
    }

    // Stage 4: folds.
    let mut per_fold = Vec::with_capacity(folds.len());
    let mut fold_records = Vec::with_capacity(folds.len());
    let mut model_files = Vec::new();
    for fold in &folds {
        let train_idx: Vec<usize> = clouds
            .iter()
            .enumerate()
            .filter(|(_, c)| fold.is_train(&c.group_id))
            .map(|(i, _)| i)
            .collect();
        let test_idx: Vec<usize> = clouds
            .iter()
            .enumerate()
            .filter(|(_, c)| fold.is_test(&c.group_id))
            .map(|(i, _)| i)
            .collect();
        debug_assert!(train_idx.iter().all(|i| !test_idx.contains(i)));

        let train_rows: Vec<Vec<f64>> = train_idx.iter().map(|&i| rows[i].clone()).collect();
        let train_y: Vec<f64> = train_idx.iter().map(|&i| clouds[i].mos).collect();
        let train_groups_per_sample: Vec<String> =
            train_idx.iter().map(|&i| clouds[i].group_id.clone()).collect();

        let hyper = if cfg.grid_search {
            grid_search(
                &train_rows,
                &train_y,
                &train_groups_per_sample,
                &cfg.svr,
                cfg.seed ^ (fold.fold_index as u64).wrapping_mul(0x9e37_79b9),
            )?
        } else {
            cfg.svr
        };
        let (model, _) = train_raw(&train_rows, &train_y, &hyper)?;

        let predictions: Vec<Prediction> = test_idx
            .iter()
            .map(|&i| Prediction {
                cloud_name: clouds[i].name.clone(),
                mos: clouds[i].mos,
                pred: model.predict_raw(&rows[i]),
            })
            .collect();
        let preds: Vec<f64> = predictions.iter().map(|p| p.pred).collect();
        let mos: Vec<f64> = predictions.iter().map(|p| p.mos).collect();
        let report = compute_report(&preds, &mos, cfg.logistic)?;

        let model_path = cfg.output_dir.join(format!("model_fold{}.json", fold.fold_index));
        save_model(&model, &model_path)?;
        model_files.push(model_path);

        fold_records.push(FoldRecord {
            fold_index: fold.fold_index,
            train_groups: fold.train_groups.clone(),
            test_groups: fold.test_groups.clone(),
            train_clouds: train_idx.iter().map(|&i| clouds[i].name.clone()).collect(),
            test_clouds: test_idx.iter().map(|&i| clouds[i].name.clone()).collect(),
        });
        per_fold.push(FoldOutcome {
            fold_index: fold.fold_index,
            report,
            predictions,
            hyper,
        });
    }

    // The definitive result is the mean over folds.
    let k = per_fold.len() as f64;
    let mean = MetricReport {
        srcc: per_fold.iter().map(|f| f.report.srcc).sum::<f64>() / k,
        plcc: per_fold.iter().map(|f| f.report.plcc).sum::<f64>() / k,
        krcc: per_fold.iter().map(|f| f.report.krcc).sum::<f64>() / k,
        rmse: per_fold.iter().map(|f| f.report.rmse).sum::<f64>() / k,
        n: per_fold.iter().map(|f| f.report.n).sum(),
        logistic_applied: cfg.logistic,
    };

    // Stage 5: output files.
    let metrics_csv = cfg.output_dir.join("metrics.csv");
    let mut metrics_text = String::from("fold,srcc,plcc,krcc,rmse\n");
    for fold in &per_fold {
        metrics_text.push_str(&format_metric_row(&fold.fold_index.to_string(), &fold.report));
    }
    metrics_text.push_str(&format_metric_row("mean", &mean));
    std::fs::write(&metrics_csv, metrics_text)?;

    let predictions_csv = cfg.output_dir.join("predictions.csv");
    let mut pred_text = String::from("cloud_name,mos,pred\n");
    for fold in &per_fold {
        for p in &fold.predictions {
            pred_text.push_str(&format!("{},{},{}\n", p.cloud_name, p.mos, p.pred));
        }
    }
    std::fs::write(&predictions_csv, pred_text)?;

    let record = RunRecord {
        database_name: manifest.database_name.clone(),
        seed: cfg.seed,
        config_hash: cfg.config_hash(),
        folds: fold_records,
    };
    let record_json = cfg.output_dir.join("run_record.json");
    std::fs::write(
        &record_json,
        serde_json::to_string_pretty(&record).expect("record serializes"),
    )?;

    Ok(RunOutput {
        per_fold,
        mean,
        record,
        metrics_csv,
        predictions_csv,
        record_json,
        model_files,
    })
}

fn score_with<B: ScoreBackend>(
    requests: &[ScoreRequest],
    backend: &B,
) -> Result<Vec<LmmEvaluation>, ExperimentError> {
    score_batch(requests, backend).map_err(|e| ExperimentError::Scoring {
        cloud: e.cloud_name,
        source: e.source,
    })
}
