//! The operations behind each command-line subcommand.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::basis::{fit_coefficients_with, BasisConfig, BasisFitter, CoefficientMatrix};
use crate::clustering::{self, median_bandwidth, Bandwidth, ClusterAssignment, RestartReport};
use crate::config::{Clusterer, FeatureSource, PipelineConfig, Selector};
use crate::error::{Error, Result};
use crate::evaluation::{self, EvaluationReport};
use crate::features::FeatureMatrix;
use crate::fpca::{self, FpcaModel, VarianceRow};
use crate::image_io::{self, Dataset};
use crate::par::Execution;
use crate::sketch_select::{self, SelectionPlan};
use crate::synthetic::{self, PlantedImageSpec, PlantedSpec};
use crate::tables::{self, write_text, FeatureTable};

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("plain data serializes") + "\n"
}

fn coefficient_names(k: usize) -> Vec<String> {
    (0..k * k).map(|i| format!("c{}_{}", i / k + 1, i % k + 1)).collect()
}

/// Raw tensor-product coefficients as a feature table.
pub fn coefficient_features(ds: &Dataset, basis_k: usize, exec: Execution) -> Result<FeatureTable> {
    let coeffs = fit_coefficients_with(ds, BasisConfig::new(basis_k)?, exec)?;
    let a = FeatureMatrix::new(coeffs.into_matrix())?.with_names(coefficient_names(basis_k))?;
    FeatureTable::new(ds.ids(), a)
}

/// Fit the basis and FPCA model, and score every image.
pub fn fpca_features(ds: &Dataset, basis_k: usize, j: usize, exec: Execution) -> Result<(FpcaModel, FeatureTable)> {
    let coeffs = fit_coefficients_with(ds, BasisConfig::new(basis_k)?, exec)?;
    let model = fpca::fit_fpca(&coeffs, j)?;
    let scores = score_table(&model, &coeffs, ds.ids())?;
    Ok((model, scores))
}

fn score_table(model: &FpcaModel, coeffs: &CoefficientMatrix, ids: Vec<String>) -> Result<FeatureTable> {
    let scores = fpca::transform(model, coeffs)?;
    let names = (1..=model.n_components()).map(|j| format!("fpc{j}")).collect();
    FeatureTable::new(ids, FeatureMatrix::new(scores)?.with_names(names)?)
}

pub fn variance_csv(rows: &[VarianceRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.component.to_string(),
                r.eigenvalue.to_string(),
                r.fraction.to_string(),
                r.cumulative.to_string(),
            ]
        })
        .collect();
    tables::rows_csv(&["component", "eigenvalue", "fraction", "cumulative"], &body)
}

/// Writes `model.json`, `scores.csv` and `variance.csv` under `out_dir`.
pub fn cmd_fpca_fit(manifest: &Path, basis_k: usize, j: usize, out_dir: &Path) -> Result<Vec<VarianceRow>> {
    let ds = image_io::load_manifest(manifest)?;
    let (model, scores) = fpca_features(&ds, basis_k, j, Execution::default())?;
    create_dir(out_dir)?;
    model.save(&out_dir.join("model.json"))?;
    scores.save(&out_dir.join("scores.csv"))?;
    let rows = fpca::variance_explained(&model);
    write_text(&out_dir.join("variance.csv"), &variance_csv(&rows))?;
    Ok(rows)
}

/// Score a (possibly new) dataset against a saved model.
pub fn cmd_fpca_transform(model_path: &Path, manifest: &Path, out: &Path) -> Result<FeatureTable> {
    let model = FpcaModel::load(model_path)?;
    let ds = image_io::load_manifest(manifest)?;
    let coeffs = fit_coefficients_with(&ds, model.basis, Execution::default())?;
    let scores = score_table(&model, &coeffs, ds.ids())?;
    scores.save(out)?;
    Ok(scores)
}

/// Frobenius errors of one reconstruction. `pixel_error` compares against
/// the stored pixels; `basis_error` against the image's own basis fit, which
/// is what a truncated expansion can reach.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconstructionError {
    pub id: String,
    pub j_use: usize,
    pub pixel_error: f64,
    pub basis_error: f64,
}

impl std::fmt::Display for ReconstructionError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "id={} j_use={} pixel_error={:.9e} basis_error={:.9e}",
            self.id, self.j_use, self.pixel_error, self.basis_error
        )
    }
}

/// Reconstruct one image from its first `j_use` scores (all when `None`),
/// write it as PGM, and optionally write the error for every `j_use` to
/// `sweep` as CSV.
pub fn cmd_reconstruct(
    model_path: &Path,
    manifest: &Path,
    id: &str,
    j_use: Option<usize>,
    out: &Path,
    sweep: Option<&Path>,
) -> Result<ReconstructionError> {
    let model = FpcaModel::load(model_path)?;
    let ds = image_io::load_manifest(manifest)?;
    let idx = ds.position(id).ok_or_else(|| Error::UnknownId(id.to_owned()))?;
    let j_use = j_use.unwrap_or(model.n_components());
    let fitter = BasisFitter::new(model.basis, ds.height(), ds.width())?;
    let pixels = ds.images()[idx].pixels();
    let c = fitter.fit(pixels)?;
    let projected = fitter.synthesize(c.as_slice())?;
    let row = CoefficientMatrix::new(model.basis.k, nalgebra::DMatrix::from_row_slice(1, c.len(), c.as_slice()))?;
    let scores: Vec<f64> = fpca::transform(&model, &row)?.row(0).iter().copied().collect();

    let errors_at = |j: usize| -> Result<(nalgebra::DMatrix<f64>, ReconstructionError)> {
        let coeffs = fpca::reconstruct(&model, &scores, j)?;
        let img = fitter.synthesize(coeffs.as_slice())?;
        let err = ReconstructionError {
            id: id.to_owned(),
            j_use: j,
            pixel_error: (pixels - &img).norm(),
            basis_error: (&projected - &img).norm(),
        };
        Ok((img, err))
    };

    let (img, err) = errors_at(j_use)?;
    image_io::write_pgm_pixels(&img, out)?;
    if let Some(path) = sweep {
        let rows = (0..=model.n_components())
            .map(|j| {
                let (_, e) = errors_at(j)?;
                Ok(vec![j.to_string(), e.pixel_error.to_string(), e.basis_error.to_string()])
            })
            .collect::<Result<Vec<_>>>()?;
        write_text(path, &tables::rows_csv(&["j_use", "pixel_error", "basis_error"], &rows))?;
    }
    Ok(err)
}

/// Draw a plan, save it, and optionally save the reduced features.
pub fn cmd_select(
    features: &Path,
    k: usize,
    epsilon: f64,
    seed: u64,
    plan_out: &Path,
    reduced_out: Option<&Path>,
) -> Result<SelectionPlan> {
    let table = FeatureTable::load(features)?;
    let sel = sketch_select::select(&table.features, k, epsilon, seed)?;
    sel.plan.save(plan_out)?;
    if let Some(out) = reduced_out {
        FeatureTable::new(table.ids, sel.reduced)?.save(out)?;
    }
    Ok(sel.plan)
}

/// Apply a saved plan to a feature table.
pub fn cmd_apply_plan(features: &Path, plan: &Path, out: &Path) -> Result<FeatureTable> {
    let table = FeatureTable::load(features)?;
    let plan = SelectionPlan::load(plan)?;
    let reduced = FeatureTable::new(table.ids, sketch_select::reduce(&table.features, &plan)?)?;
    reduced.save(out)?;
    Ok(reduced)
}

/// JSON run report written next to every assignment.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub method: &'static str,
    pub k: usize,
    pub objective: f64,
    pub cluster_sizes: Vec<usize>,
    pub best_restart: Option<usize>,
    pub bandwidth: Option<f64>,
    pub restarts: Vec<RestartReport>,
    pub config: serde_json::Value,
}

pub fn cluster_features(a: &FeatureMatrix, clusterer: &Clusterer, exec: Execution) -> Result<(ClusterAssignment, RunReport)> {
    match clusterer {
        Clusterer::Kmeans(cfg) => {
            let res = clustering::kmeans_with(a, cfg, exec)?;
            let report = RunReport {
                method: "kmeans",
                k: cfg.k,
                objective: res.assignment.objective,
                cluster_sizes: res.assignment.cluster_sizes.clone(),
                best_restart: Some(res.best_restart),
                bandwidth: None,
                restarts: res.restarts,
                config: serde_json::to_value(cfg).expect("config serializes"),
            };
            Ok((res.assignment, report))
        }
        Clusterer::Spectral(cfg) => {
            let asg = clustering::spectral_with(a, cfg, exec)?;
            let bandwidth = match cfg.sigma {
                Bandwidth::Median => median_bandwidth(a)?,
                Bandwidth::Fixed(s) => s,
            };
            let report = RunReport {
                method: "spectral_normalized_laplacian",
                k: cfg.k,
                objective: asg.objective,
                cluster_sizes: asg.cluster_sizes.clone(),
                best_restart: None,
                bandwidth: Some(bandwidth),
                restarts: Vec::new(),
                config: serde_json::to_value(cfg).expect("config serializes"),
            };
            Ok((asg, report))
        }
    }
}

pub fn cmd_cluster(features: &Path, clusterer: &Clusterer, assignment_out: &Path, report_out: &Path) -> Result<RunReport> {
    let table = FeatureTable::load(features)?;
    let (asg, report) = cluster_features(&table.features, clusterer, Execution::default())?;
    tables::write_assignment(assignment_out, &table.ids, &asg)?;
    write_text(report_out, &to_json(&report))?;
    Ok(report)
}

/// Where ground-truth labels come from.
#[derive(Debug, Clone, Copy)]
pub enum TruthSource<'a> {
    /// A labelled image manifest.
    Manifest(&'a Path),
    /// An `id,label` CSV.
    Labels(&'a Path),
}

fn truth_by_id(source: TruthSource<'_>) -> Result<(Vec<String>, Vec<usize>)> {
    match source {
        TruthSource::Manifest(p) => {
            let ds = image_io::load_manifest(p)?;
            let labels = ds
                .labels()
                .ok_or_else(|| Error::MalformedManifest(format!("{} has no label column", p.display())))?
                .to_vec();
            Ok((ds.ids(), labels))
        }
        TruthSource::Labels(p) => tables::read_assignment(p),
    }
}

/// Score an `id,label` assignment against ground truth matched by id.
/// `positive_class` is a 1-based label value.
pub fn cmd_evaluate(assignment: &Path, truth: TruthSource<'_>, positive_class: Option<usize>) -> Result<EvaluationReport> {
    let (ids, clusters) = tables::read_assignment(assignment)?;
    let (truth_ids, truth_labels) = truth_by_id(truth)?;
    let lookup: std::collections::HashMap<&str, usize> =
        truth_ids.iter().map(String::as_str).zip(truth_labels.iter().copied()).collect();
    let truth0 = ids
        .iter()
        .map(|id| lookup.get(id.as_str()).map(|l| l - 1).ok_or_else(|| Error::UnknownId(id.clone())))
        .collect::<Result<Vec<_>>>()?;
    let k = clusters.iter().copied().max().unwrap_or(0);
    let labels0: Vec<usize> = clusters.iter().map(|l| l - 1).collect();
    evaluation::align_labels(&truth0, &labels0, k, positive_class.map(|p| p - 1))
}

/// What a pipeline run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub run_dir: PathBuf,
    pub features_used: usize,
    pub objective: f64,
    pub evaluation: Option<EvaluationReport>,
}

pub fn summary_csv(features_used: usize, eval: Option<&EvaluationReport>) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let row = vec![
        features_used.to_string(),
        opt(eval.map(|e| e.accuracy)),
        opt(eval.and_then(|e| e.sensitivity)),
        opt(eval.and_then(|e| e.specificity)),
    ];
    tables::rows_csv(&["features_used", "accuracy", "sensitivity", "specificity"], &[row])
}

#[derive(Serialize)]
struct Metadata {
    created_unix_seconds: u64,
    version: &'static str,
    parallel: bool,
}

/// load → coefficients → optional FPCA → optional selection → cluster →
/// evaluation when labels exist. Everything but `metadata.json` is a pure
/// function of the configuration.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunSummary> {
    run_pipeline_with(cfg, Execution::default())
}

pub fn run_pipeline_with(cfg: &PipelineConfig, exec: Execution) -> Result<RunSummary> {
    cfg.validate()?;
    let ds = image_io::load_manifest(&cfg.manifest)?;
    let positive = match (cfg.positive_class, ds.labels()) {
        (Some(p), Some(labels)) if !labels.contains(&p) => {
            return Err(Error::MissingPositiveClass(format!("label {p} does not occur in the manifest")))
        }
        (Some(_), None) => {
            return Err(Error::MissingPositiveClass("manifest has no labels".into()));
        }
        (p, _) => p.map(|p| p - 1),
    };
    let dir = &cfg.output_dir;
    create_dir(dir)?;
    write_text(&dir.join("config.txt"), &cfg.to_text())?;

    let table = match cfg.feature_source {
        FeatureSource::FpcScores => {
            let (model, scores) = fpca_features(&ds, cfg.basis_k, cfg.fpca_j, exec)?;
            model.save(&dir.join("model.json"))?;
            write_text(&dir.join("variance.csv"), &variance_csv(&fpca::variance_explained(&model)))?;
            scores
        }
        FeatureSource::FourierCoeffs => coefficient_features(&ds, cfg.basis_k, exec)?,
    };
    table.save(&dir.join("features.csv"))?;

    let clustered = match cfg.selector {
        Selector::None => table,
        Selector::Randomized { k, epsilon, seed } => {
            let sel = sketch_select::select(&table.features, k, epsilon, seed)?;
            sel.plan.save(&dir.join("plan.json"))?;
            let reduced = FeatureTable::new(table.ids, sel.reduced)?;
            reduced.save(&dir.join("selected.csv"))?;
            reduced
        }
    };
    let features_used = clustered.features.ncols();

    let (asg, report) = cluster_features(&clustered.features, &cfg.clusterer, exec)?;
    tables::write_assignment(&dir.join("assignment.csv"), &clustered.ids, &asg)?;
    write_text(&dir.join("run_report.json"), &to_json(&report))?;

    let evaluation = match ds.labels() {
        Some(labels) => {
            let truth: Vec<usize> = labels.iter().map(|l| l - 1).collect();
            let eval = evaluation::align_and_score(&truth, &asg, positive)?;
            write_text(&dir.join("evaluation.json"), &(eval.to_json() + "\n"))?;
            write_text(&dir.join("evaluation.txt"), &eval.to_table())?;
            Some(eval)
        }
        None => None,
    };
    write_text(&dir.join("summary.csv"), &summary_csv(features_used, evaluation.as_ref()))?;

    let created = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let meta = Metadata {
        created_unix_seconds: created,
        version: env!("CARGO_PKG_VERSION"),
        parallel: exec.is_parallel(),
    };
    write_text(&dir.join("metadata.json"), &to_json(&meta))?;

    Ok(RunSummary {
        run_dir: dir.clone(),
        features_used,
        objective: asg.objective,
        evaluation,
    })
}

/// Write a planted image dataset (PGMs plus labelled manifest).
pub fn cmd_synth_images(spec: &PlantedImageSpec, out_dir: &Path) -> Result<PathBuf> {
    let planted = synthetic::planted_images(spec)?;
    image_io::write_dataset(&planted.dataset, out_dir)
}

/// Write a planted feature matrix as `features.csv` and its labels as
/// `truth.csv`.
pub fn cmd_synth_features(spec: &PlantedSpec, out_dir: &Path) -> Result<PathBuf> {
    let (a, truth) = synthetic::planted_features(spec)?;
    let width = spec.m.to_string().len().max(3);
    let ids: Vec<String> = (1..=spec.m).map(|i| format!("s{i:0width$}")).collect();
    create_dir(out_dir)?;
    let features = out_dir.join("features.csv");
    let rows: Vec<Vec<String>> = ids
        .iter()
        .zip(&truth)
        .map(|(id, t)| vec![id.clone(), (t + 1).to_string()])
        .collect();
    write_text(&out_dir.join("truth.csv"), &tables::rows_csv(&["id", "label"], &rows))?;
    FeatureTable::new(ids, a)?.save(&features)?;
    Ok(features)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficient_names_are_row_major() {
        assert_eq!(
            coefficient_names(3)[..4],
            ["c1_1".to_string(), "c1_2".into(), "c1_3".into(), "c2_1".into()]
        );
    }

    #[test]
    fn summary_leaves_missing_rates_blank() {
        assert_eq!(
            summary_csv(9, None),
            "features_used,accuracy,sensitivity,specificity\n9,,,\n"
        );
    }

    #[test]
    fn evaluate_matches_by_id() {
        let dir = tempfile::tempdir().unwrap();
        let asg = dir.path().join("a.csv");
        let truth = dir.path().join("t.csv");
        fs::write(&asg, "id,label\nb,1\na,2\nc,2\n").unwrap();
        fs::write(&truth, "id,label\na,1\nb,2\nc,1\n").unwrap();
        let r = cmd_evaluate(&asg, TruthSource::Labels(&truth), Some(1)).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.sensitivity, Some(1.0));
        fs::write(&truth, "id,label\na,1\nb,2\n").unwrap();
        assert!(matches!(
            cmd_evaluate(&asg, TruthSource::Labels(&truth), None),
            Err(Error::UnknownId(id)) if id == "c"
        ));
    }
}
