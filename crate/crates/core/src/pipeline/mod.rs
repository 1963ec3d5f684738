//! End-to-end orchestration: load, explore, partition, then per fold scale,
//! impute, select, tune, fit, evaluate and score importance; finally
//! aggregate, plot and archive.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::data::{load_csv, CleaningReport, Dataset, FeatureKind};
use crate::error::{Error, Result, StageTag};
use crate::evalstats::{self, compare_algorithms, evaluate, summarize, EvaluationRecord, StatReport};
use crate::explore::{explore, ExploreReport};
use crate::featsel::{collective_select, multisurf, mutual_information, write_scores_csv, FeatureScores, SelectionResult};
use crate::hpo::{self, default_space, fixed_params, optimize, Budget, HpoResult, Problem};
use crate::importance::{self, build_matrix, cfibp, loo_importance, CfibpBars, FoldData, FoldImportance, ImportanceMatrix};
use crate::learners::{fit, lcs, Algorithm, HyperValue, Payload, TrainedModel};
use crate::partition::{make_folds, FoldPlan};
use crate::transform::{fit_impute, fit_scaler};

pub mod archive;
pub mod audit;
pub mod config;
pub mod report;

pub use archive::{predict, FoldArchive, FoldChoice, ModelArchive, Predictions};
pub use audit::{Audit, AuditReport, Phase};
pub use config::PipelineConfig;
pub use report::render_plots;

/// Record label of the rule-compacted LCS model.
pub const LCS_QRF: &str = "LCS_QRF";
pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";
pub const COMPLETE_MARKER: &str = "COMPLETE";

/// One scored test instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionRow {
    pub algorithm: String,
    pub fold: usize,
    pub row: usize,
    pub label: u8,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub fold: usize,
    pub mutual_information: FeatureScores,
    pub multisurf: FeatureScores,
    pub archive: FoldArchive,
    pub hpo: Vec<(Algorithm, HpoResult)>,
    pub records: Vec<EvaluationRecord>,
    pub predictions: Vec<PredictionRow>,
    pub importance: Vec<FoldImportance>,
    pub loo_failures: Vec<String>,
}

impl FoldOutcome {
    pub fn selection(&self) -> &SelectionResult {
        &self.archive.selection
    }
}

/// Everything a run produced, in memory.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub output: PathBuf,
    pub cleaning: CleaningReport,
    pub explore: ExploreReport,
    pub plan: FoldPlan,
    pub folds: Vec<FoldOutcome>,
    pub records: Vec<EvaluationRecord>,
    pub statistics: StatReport,
    pub importance: ImportanceMatrix,
    pub cfibp: Vec<CfibpBars>,
    pub audit: AuditReport,
    pub archive: ModelArchive,
}

impl RunSummary {
    /// Mean test balanced accuracy per record label.
    pub fn mean_balanced_accuracy(&self) -> BTreeMap<String, f64> {
        evalstats::metric_by_algorithm(&self.records, "balanced_accuracy")
            .into_iter()
            .map(|(a, v)| (a, crate::stats::mean(&v)))
            .collect()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream seed for one (fold, purpose) pair.
pub fn derive_seed(seed: u64, fold: usize, salt: u64) -> u64 {
    splitmix64(seed ^ splitmix64(((fold as u64) << 16) | salt))
}

fn tag<T>(r: Result<T>, stage: StageTag, fold: Option<usize>) -> Result<T> {
    r.map_err(|e| e.at(stage, fold))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// Run the full pipeline and write every output under `cfg.output`.
///
/// The output directory holds an `INCOMPLETE` marker until the run finishes;
/// on failure the marker keeps the error message.
pub fn run(cfg: &PipelineConfig) -> Result<RunSummary> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output)?;
    let _ = fs::remove_file(cfg.output.join(COMPLETE_MARKER));
    fs::write(cfg.output.join(INCOMPLETE_MARKER), "run in progress\n")?;
    match run_inner(cfg) {
        Ok(s) => {
            fs::remove_file(cfg.output.join(INCOMPLETE_MARKER))?;
            fs::write(cfg.output.join(COMPLETE_MARKER), "")?;
            Ok(s)
        }
        Err(e) => {
            let _ = fs::write(cfg.output.join(INCOMPLETE_MARKER), format!("{e}\n"));
            Err(e)
        }
    }
}

fn run_inner(cfg: &PipelineConfig) -> Result<RunSummary> {
    let out = &cfg.output;
    write_json(&out.join("config.resolved.json"), cfg)?;

    let (d, cleaning) = tag(load_csv(&cfg.data, &cfg.load_options()), StageTag::Load, None)?;
    write_json(&out.join("cleaning_report.json"), &cleaning)?;
    log::info!("loaded {} instances x {} features", d.n_instances(), d.n_features());

    let ex = explore(&d, cfg.alpha);
    tag(ex.write(&out.join("explore")), StageTag::Report, None)?;

    let plan = tag(make_folds(&d, cfg.k, cfg.cv, cfg.seed), StageTag::Partition, None)?;
    plan.write_csv(&d, &out.join("folds.csv"))?;

    let audit = Audit::new(&plan.assignment);
    let folds: Vec<FoldOutcome> = crate::par::map_range(cfg.k, |f| run_fold(cfg, &d, &plan, f, &audit))
        .into_iter()
        .collect::<Result<_>>()?;

    let mut records: Vec<EvaluationRecord> = folds.iter().flat_map(|f| f.records.iter().cloned()).collect();
    records.sort_by(|a, b| a.algorithm.cmp(&b.algorithm).then(a.fold.cmp(&b.fold)));
    let statistics = compare_algorithms(&records, cfg.alpha);

    let eval_dir = out.join("evaluation");
    fs::create_dir_all(&eval_dir)?;
    evalstats::write_records_csv(&eval_dir.join("records.csv"), &records)?;
    evalstats::write_summary_csv(&eval_dir.join("metrics_summary.csv"), &summarize(&records))?;
    evalstats::write_statistics_csv(&eval_dir.join("statistics.csv"), &statistics)?;
    write_json(&eval_dir.join("statistics.json"), &statistics)?;
    report::write_curves_csv(&eval_dir.join("curves.csv"), &records)?;
    write_predictions_csv(&eval_dir.join("predictions.csv"), &d, &folds)?;

    let feat_dir = out.join("features");
    let hpo_dir = out.join("hpo");
    fs::create_dir_all(&feat_dir)?;
    fs::create_dir_all(&hpo_dir)?;
    let names = d.feature_names();
    for fo in &folds {
        write_scores_csv(
            &feat_dir.join(format!("fold_{}.csv", fo.fold)),
            &names,
            &fo.mutual_information,
            &fo.multisurf,
            fo.selection(),
        )?;
        for (alg, h) in &fo.hpo {
            hpo::write_trials_csv(&hpo_dir.join(format!("{alg}_fold_{}.csv", fo.fold)), h)?;
        }
    }

    let imp_dir = out.join("importance");
    fs::create_dir_all(&imp_dir)?;
    let fold_imp: Vec<FoldImportance> = folds.iter().flat_map(|f| f.importance.iter().cloned()).collect();
    let mean_ba = evalstats::metric_by_algorithm(&records, "balanced_accuracy");
    let weights: BTreeMap<String, f64> = cfg
        .algorithms
        .iter()
        .map(|a| {
            let label = a.to_string();
            let w = mean_ba.get(&label).map_or(0.0, |v| crate::stats::mean(v));
            (label, w)
        })
        .collect();
    let matrix = build_matrix(&fold_imp, cfg.k, &names, &weights);
    importance::write_fold_importance_csv(&imp_dir.join("fold_scores.csv"), &fold_imp)?;
    importance::write_matrix_csv(&imp_dir.join("matrix.csv"), &matrix)?;
    let bars: Vec<CfibpBars> = (1..=4).map(|v| cfibp(&matrix, v)).collect();
    for b in &bars {
        b.write_csv(&imp_dir.join(format!("cfibp_v{}.csv", b.variant)))?;
    }
    let loo_failures: Vec<&String> = folds.iter().flat_map(|f| f.loo_failures.iter()).collect();
    write_json(
        &imp_dir.join("metadata.json"),
        &serde_json::json!({
            "leave_one_out_data": "test fold",
            "native_importance": ["DT", "RF", "LCS"],
            "fold_absent_feature_score": 0.0,
            "loo_refit_failures": loo_failures,
        }),
    )?;
    tag(render_plots(out, cfg.top_n), StageTag::Report, None)?;

    let archive = ModelArchive {
        format_version: archive::ARCHIVE_VERSION,
        config: cfg.clone(),
        schema: d.schema(),
        fold_plan: plan.clone(),
        folds: folds.iter().map(|f| f.archive.clone()).collect(),
    };
    archive.save(&out.join("archive.json"))?;
    let audit = audit.report();
    write_json(&out.join("audit.json"), &audit)?;
    if !audit.is_clean() {
        return Err(Error::runtime(format!(
            "leakage audit found {} test-row reads before evaluation",
            audit.pre_evaluation_test_reads
        )));
    }

    Ok(RunSummary {
        output: out.clone(),
        cleaning,
        explore: ex,
        plan,
        folds,
        records,
        statistics,
        importance: matrix,
        cfibp: bars,
        audit,
        archive,
    })
}

fn write_predictions_csv(path: &Path, d: &Dataset, folds: &[FoldOutcome]) -> Result<()> {
    let mut rows: Vec<&PredictionRow> = folds.iter().flat_map(|f| f.predictions.iter()).collect();
    rows.sort_by(|a, b| a.algorithm.cmp(&b.algorithm).then(a.fold.cmp(&b.fold)).then(a.row.cmp(&b.row)));
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["algorithm", "fold", "instance", "class", "score"])?;
    for p in rows {
        w.write_record([p.algorithm.clone(), p.fold.to_string(), d.row_label(p.row), p.label.to_string(), format!("{}", p.score)])?;
    }
    w.flush()?;
    Ok(())
}

struct Fitted {
    algorithm: Algorithm,
    hpo: HpoResult,
    model: TrainedModel,
    compacted: Option<TrainedModel>,
}

fn run_fold(cfg: &PipelineConfig, d: &Dataset, plan: &FoldPlan, f: usize, audit: &Audit) -> Result<FoldOutcome> {
    let train = plan.train_rows(f);
    let test = plan.test_rows(f);
    let names = d.feature_names();
    let kinds = d.kinds();
    let pick = |rows: &[usize]| -> Vec<u8> { rows.iter().map(|&i| d.class_labels[i]).collect() };

    // training side
    audit.read(f, "scaler_fit", Phase::Training, &train);
    let train_raw = d.values.select_rows(&train);
    let ytr = pick(&train);
    let scaler = tag(fit_scaler(&train_raw), StageTag::Transform, Some(f))?;
    let train_scaled = tag(scaler.apply(&train_raw), StageTag::Transform, Some(f))?;
    audit.read(f, "impute_fit", Phase::Training, &train);
    let (imputer, train_x) = tag(fit_impute(&train_scaled, &names, &kinds, None), StageTag::Transform, Some(f))?;

    audit.read(f, "feature_scoring", Phase::Training, &train);
    let mi = mutual_information(&train_x, &ytr, &kinds);
    let ms = multisurf(&train_x, &ytr, &kinds, cfg.msurf_cap, derive_seed(cfg.seed, f, 1));
    let selection = collective_select(&names, &mi, &ms, cfg.max_features);
    let keep = selection.retained_indices(&names);
    let sel_names: Vec<String> = keep.iter().map(|&j| names[j].clone()).collect();
    let sel_kinds: Vec<FeatureKind> = keep.iter().map(|&j| kinds[j]).collect();
    let xtr = train_x.select_cols(&keep);
    let groups: Option<Vec<String>> = d.match_group_ids.as_ref().map(|g| train.iter().map(|&i| g[i].clone()).collect());
    log::info!("fold {f}: {} of {} features retained", keep.len(), names.len());

    let fitted: Vec<Fitted> = crate::par::map_slice(&cfg.algorithms, |&alg| -> Result<Fitted> {
        let salt = 10 + Algorithm::ALL.iter().position(|a| *a == alg).unwrap_or(0) as u64;
        let mut fixed = fixed_params(alg);
        if alg == Algorithm::LCS {
            fixed.insert("iterations".into(), HyperValue::Int(cfg.lcs_iterations as i64));
            fixed.insert("max_rules".into(), HyperValue::Int(cfg.lcs_max_rules as i64));
        }
        let stage = format!("hpo:{alg}");
        let observer = |what: &str, local: &[usize]| {
            let rows: Vec<usize> = local.iter().map(|&i| train[i]).collect();
            audit.read(f, &format!("{stage}:{what}"), Phase::Training, &rows);
        };
        let problem = Problem {
            algorithm: alg,
            x: &xtr,
            y: &ytr,
            kinds: &sel_kinds,
            names: &sel_names,
            groups: groups.as_deref(),
        };
        let budget = Budget { trials: cfg.trials, inner_k: cfg.inner_k, seed: derive_seed(cfg.seed, f, salt) };
        let result = tag(optimize(&problem, &default_space(alg), &fixed, budget, Some(&observer)), StageTag::Tuning, Some(f))?;

        audit.read(f, &format!("final_fit:{alg}"), Phase::Training, &train);
        let model = tag(fit(&result.best, &xtr, &ytr, &sel_kinds, &sel_names), StageTag::Training, Some(f))?;
        let compacted = match &model.payload {
            Payload::Lcs(m) => {
                audit.read(f, "qrf_compact", Phase::Training, &train);
                let c = lcs::qrf_compact(m, &xtr, &ytr);
                let imp = c.importance(xtr.cols());
                Some(TrainedModel {
                    spec: model.spec.clone(),
                    feature_names: model.feature_names.clone(),
                    payload: Payload::Lcs(c),
                    native_importance: Some(imp),
                })
            }
            _ => None,
        };
        log::info!("fold {f}: {alg} tuned (best trial {})", result.best_trial);
        Ok(Fitted { algorithm: alg, hpo: result, model, compacted })
    })
    .into_iter()
    .collect::<Result<_>>()?;

    // evaluation side: the test fold is read from here on
    audit.read(f, "test_transform", Phase::Evaluation, &test);
    let test_scaled = tag(scaler.apply(&d.values.select_rows(&test)), StageTag::Evaluation, Some(f))?;
    let (_, test_x) = tag(fit_impute(&test_scaled, &names, &kinds, Some(&imputer)), StageTag::Evaluation, Some(f))?;
    let xte = test_x.select_cols(&keep);
    let yte = pick(&test);

    let mut models = BTreeMap::new();
    let mut records = Vec::new();
    let mut predictions = Vec::new();
    let mut importance = Vec::new();
    let mut loo_failures = Vec::new();
    let mut hpo_results = Vec::new();
    for item in fitted {
        let label = item.algorithm.to_string();
        let mut entries = vec![(label.clone(), item.model)];
        if let Some(c) = item.compacted {
            entries.push((LCS_QRF.to_string(), c));
        }
        for (i, (lbl, model)) in entries.into_iter().enumerate() {
            audit.read(f, &format!("evaluate:{lbl}"), Phase::Evaluation, &test);
            let scores = tag(model.predict_proba(&xte), StageTag::Evaluation, Some(f))?;
            let rec = evaluate(&lbl, f, &yte, &scores);
            predictions.extend(test.iter().zip(&scores).map(|(&row, &score)| PredictionRow {
                algorithm: lbl.clone(),
                fold: f,
                row,
                label: d.class_labels[row],
                score,
            }));
            // importance for the five base learners only
            if i == 0 {
                let imp = match &model.native_importance {
                    Some(v) => v.clone(),
                    None => {
                        audit.read(f, &format!("loo_importance:{lbl}"), Phase::Evaluation, &test);
                        let data = FoldData {
                            train_x: &xtr,
                            train_y: &ytr,
                            test_x: &xte,
                            test_y: &yte,
                            kinds: &sel_kinds,
                            names: &sel_names,
                        };
                        let loo = loo_importance(&model.spec, &data, rec.metrics["balanced_accuracy"]);
                        loo_failures.extend(loo.iter().filter(|s| s.failed).map(|s| format!("{lbl} fold {f}: {}", s.feature)));
                        loo.into_iter().map(|s| s.importance).collect()
                    }
                };
                importance.push(FoldImportance { algorithm: lbl.clone(), fold: f, features: sel_names.clone(), scores: imp });
            }
            records.push(rec);
            models.insert(lbl, model);
        }
        hpo_results.push((item.algorithm, item.hpo));
    }

    Ok(FoldOutcome {
        fold: f,
        mutual_information: mi,
        multisurf: ms,
        archive: FoldArchive { fold: f, scaler, imputer, selection, models },
        hpo: hpo_results,
        records,
        predictions,
        importance,
        loo_failures,
    })
}
