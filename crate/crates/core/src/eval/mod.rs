//! Downstream evaluation: land-use clustering and popularity regression.

pub mod kmeans;
pub mod lasso;
pub mod metrics;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use self::kmeans::{kmeans, KMeansConfig, KMeansResult};
pub use self::lasso::{lasso_cv_folds, lasso_fit, lasso_objective, FoldScore, LassoConfig, LassoFit};
pub use self::metrics::{ari, f_measure, nmi, Contingency, PairCounts};

use crate::data::csv::{write_csv, LABELS_HEADER};
use crate::data::LabelRecord;
use crate::error::{RecpError, Result};
use crate::numcore::DenseMatrix;

/// Per-run values with their mean and population standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub runs: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl MetricSummary {
    pub fn from_runs(runs: Vec<f64>) -> Self {
        let n = runs.len().max(1) as f64;
        let mean = runs.iter().sum::<f64>() / n;
        let var = runs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        MetricSummary {
            runs,
            mean,
            std: var.sqrt(),
        }
    }
}

impl std::fmt::Display for MetricSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.3} ± {:.3}", self.mean, self.std)
    }
}

/// `report.json`: a task name and named metric summaries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub task: String,
    pub metrics: BTreeMap<String, MetricSummary>,
}

impl Report {
    pub fn metric(&self, name: &str) -> Result<&MetricSummary> {
        self.metrics
            .get(name)
            .ok_or_else(|| RecpError::InvalidInput(format!("report `{}` has no metric `{name}`", self.task)))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n").map_err(|e| RecpError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| RecpError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| RecpError::Ingest {
            path: path.to_path_buf(),
            line: e.line(),
            msg: e.to_string(),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterReport {
    pub nmi: MetricSummary,
    pub ari: MetricSummary,
    pub f_measure: MetricSummary,
    /// Assignments of the first run.
    pub assignments: Vec<usize>,
}

pub const CLUSTER_TASK: &str = "land_use_clustering";
pub const POPULARITY_TASK: &str = "popularity_prediction";

impl ClusterReport {
    pub fn to_report(&self) -> Report {
        let metrics = [
            ("nmi", &self.nmi),
            ("ari", &self.ari),
            ("f_measure", &self.f_measure),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.clone()))
        .collect();
        Report {
            task: CLUSTER_TASK.into(),
            metrics,
        }
    }

    pub fn from_report(r: &Report) -> Result<Self> {
        Ok(ClusterReport {
            nmi: r.metric("nmi")?.clone(),
            ari: r.metric("ari")?.clone(),
            f_measure: r.metric("f_measure")?.clone(),
            assignments: Vec::new(),
        })
    }

    pub fn save_labels(&self, path: impl AsRef<Path>) -> Result<()> {
        let recs: Vec<LabelRecord> = self
            .assignments
            .iter()
            .enumerate()
            .map(|(region, &label)| LabelRecord { region, label })
            .collect();
        write_csv(path, LABELS_HEADER, &recs)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegressionReport {
    pub mae: MetricSummary,
    pub rmse: MetricSummary,
    pub r2: MetricSummary,
}

impl RegressionReport {
    pub fn to_report(&self) -> Report {
        let metrics = [("mae", &self.mae), ("rmse", &self.rmse), ("r2", &self.r2)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect();
        Report {
            task: POPULARITY_TASK.into(),
            metrics,
        }
    }

    pub fn from_report(r: &Report) -> Result<Self> {
        Ok(RegressionReport {
            mae: r.metric("mae")?.clone(),
            rmse: r.metric("rmse")?.clone(),
            r2: r.metric("r2")?.clone(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Clusters for k-means; `None` uses the number of distinct truth labels.
    pub k: Option<usize>,
    pub runs: usize,
    pub restarts: usize,
    pub max_iter: usize,
    pub folds: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k: None,
            runs: 10,
            restarts: 10,
            max_iter: 100,
            folds: 5,
            seed: 0,
        }
    }
}

/// k-means on `e` against `truth`, once per run with seed `seed + run`.
pub fn evaluate_clustering(e: &DenseMatrix, truth: &[usize], cfg: &EvalConfig) -> Result<ClusterReport> {
    if truth.len() != e.rows() {
        return Err(RecpError::InvalidInput(format!(
            "{} labels for {} embedded regions",
            truth.len(),
            e.rows()
        )));
    }
    let k = match cfg.k {
        Some(k) => k,
        None => truth.iter().collect::<std::collections::BTreeSet<_>>().len(),
    };
    let (mut n, mut a, mut f) = (Vec::new(), Vec::new(), Vec::new());
    let mut assignments = Vec::new();
    for run in 0..cfg.runs.max(1) {
        let km = KMeansConfig {
            k,
            restarts: cfg.restarts,
            max_iter: cfg.max_iter,
            seed: cfg.seed.wrapping_add(run as u64),
        };
        let res = kmeans(e, &km)?;
        n.push(nmi(&res.labels, truth)?);
        a.push(ari(&res.labels, truth)?);
        f.push(f_measure(&res.labels, truth)?);
        if run == 0 {
            assignments = res.labels;
        }
    }
    Ok(ClusterReport {
        nmi: MetricSummary::from_runs(n),
        ari: MetricSummary::from_runs(a),
        f_measure: MetricSummary::from_runs(f),
        assignments,
    })
}

/// Lasso popularity regression scored by outer cross-validation.
pub fn evaluate_popularity(e: &DenseMatrix, checkins: &[f64], cfg: &EvalConfig) -> Result<RegressionReport> {
    let folds = lasso_cv_folds(e, checkins, cfg.folds, cfg.seed)?;
    Ok(RegressionReport {
        mae: MetricSummary::from_runs(folds.iter().map(|f| f.mae).collect()),
        rmse: MetricSummary::from_runs(folds.iter().map(|f| f.rmse).collect()),
        r2: MetricSummary::from_runs(folds.iter().map(|f| f.r2).collect()),
    })
}
