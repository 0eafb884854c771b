//! Ablation grid: every variant trained on shared seeds, scored on both
//! downstream tasks, and summarised as a `variant × metric` table.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::data::ViewFeatures;
use crate::error::{RecpError, Result};
use crate::eval::{
    evaluate_clustering, evaluate_popularity, ClusterReport, EvalConfig, MetricSummary, RegressionReport,
    Report, CLUSTER_TASK, POPULARITY_TASK,
};
use crate::train::{train, Ablation, TrainConfig};

pub const CLUSTER_METRICS: [&str; 3] = ["nmi", "ari", "f_measure"];
pub const REGRESSION_METRICS: [&str; 3] = ["mae", "rmse", "r2"];

/// Downstream targets; either may be missing.
#[derive(Clone, Copy, Debug, Default)]
pub struct Targets<'a> {
    pub labels: Option<&'a [usize]>,
    pub checkins: Option<&'a [f64]>,
}

/// Scores of one trained embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct RunScores {
    pub variant: Ablation,
    pub seed: u64,
    pub cluster: Option<ClusterReport>,
    pub regression: Option<RegressionReport>,
}

impl RunScores {
    /// Per-run mean of each metric that was computed, in table order.
    pub fn means(&self) -> Vec<(&'static str, f64)> {
        let mut out = Vec::new();
        if let Some(c) = &self.cluster {
            out.extend([("nmi", c.nmi.mean), ("ari", c.ari.mean), ("f_measure", c.f_measure.mean)]);
        }
        if let Some(r) = &self.regression {
            out.extend([("mae", r.mae.mean), ("rmse", r.rmse.mean), ("r2", r.r2.mean)]);
        }
        out
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.means().into_iter().find(|(n, _)| *n == name).map(|(_, v)| v)
    }
}

/// Trains one variant on one seed and scores the embedding.
pub fn score_run(
    base: &TrainConfig,
    variant: Ablation,
    seed: u64,
    features: &ViewFeatures,
    targets: Targets<'_>,
    eval: &EvalConfig,
) -> Result<RunScores> {
    let cfg = TrainConfig {
        ablation: variant,
        seed,
        ..base.clone()
    };
    let out = train(&cfg, features)?;
    let e = &out.embedding.e;
    let cluster = targets
        .labels
        .map(|l| evaluate_clustering(e, l, eval))
        .transpose()?;
    let regression = targets
        .checkins
        .map(|y| evaluate_popularity(e, y, eval))
        .transpose()?;
    Ok(RunScores {
        variant,
        seed,
        cluster,
        regression,
    })
}

/// Runs `variants × seeds` on up to `jobs` threads. Results come back in
/// grid order regardless of scheduling.
pub fn run_grid(
    base: &TrainConfig,
    variants: &[Ablation],
    seeds: &[u64],
    features: &ViewFeatures,
    targets: Targets<'_>,
    eval: &EvalConfig,
    jobs: usize,
) -> Result<Vec<RunScores>> {
    let grid: Vec<(Ablation, u64)> = variants
        .iter()
        .flat_map(|&v| seeds.iter().map(move |&s| (v, s)))
        .collect();
    let slots: Vec<Mutex<Option<Result<RunScores>>>> = grid.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some(&(variant, seed)) = grid.get(i) else { break };
        log::info!("ablation run {}/{}: {} seed {seed}", i + 1, grid.len(), variant.name());
        let res = score_run(base, variant, seed, features, targets, eval);
        *slots[i].lock().expect("slot lock") = Some(res);
    };
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, grid.len().max(1)) {
            s.spawn(worker);
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot lock").expect("every slot filled"))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub variant: Ablation,
    pub metric: String,
    pub summary: MetricSummary,
}

/// `variant × metric` summaries over seeds.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

pub const TABLE_HEADER: &str = "variant,metric,mean,std,runs";

impl AblationTable {
    pub fn from_runs(runs: &[RunScores]) -> Self {
        let mut rows = Vec::new();
        let mut variants: Vec<Ablation> = runs.iter().map(|r| r.variant).collect();
        variants.dedup();
        for v in variants {
            let mine: Vec<&RunScores> = runs.iter().filter(|r| r.variant == v).collect();
            for metric in CLUSTER_METRICS.iter().chain(&REGRESSION_METRICS) {
                let vals: Vec<f64> = mine.iter().filter_map(|r| r.metric(metric)).collect();
                if !vals.is_empty() {
                    rows.push(AblationRow {
                        variant: v,
                        metric: metric.to_string(),
                        summary: MetricSummary::from_runs(vals),
                    });
                }
            }
        }
        AblationTable { rows }
    }

    pub fn get(&self, variant: Ablation, metric: &str) -> Option<&MetricSummary> {
        self.rows
            .iter()
            .find(|r| r.variant == variant && r.metric == metric)
            .map(|r| &r.summary)
    }

    /// Per-run values are `;`-separated and written in shortest round-trip form.
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from(TABLE_HEADER);
        s.push('\n');
        for r in &self.rows {
            let runs: Vec<String> = r.summary.runs.iter().map(|v| format!("{v:?}")).collect();
            writeln!(
                s,
                "{},{},{:?},{:?},{}",
                r.variant.name(),
                r.metric,
                r.summary.mean,
                r.summary.std,
                runs.join(";")
            )
            .unwrap();
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_string()).map_err(|e| RecpError::io(path, e))
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let bad = |line: usize, msg: String| RecpError::Ingest {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == TABLE_HEADER => {}
            other => {
                return Err(bad(
                    1,
                    format!("expected header `{TABLE_HEADER}`, found `{}`", other.map_or("", |l| l.1)),
                ))
            }
        }
        let mut rows = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad(i + 1, format!("expected 5 fields, found {}", f.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| bad(i + 1, format!("`{s}`: {e}")));
            let runs = f[4]
                .split(';')
                .filter(|s| !s.is_empty())
                .map(num)
                .collect::<Result<Vec<_>>>()?;
            rows.push(AblationRow {
                variant: f[0].parse().map_err(|e: RecpError| bad(i + 1, e.to_string()))?,
                metric: f[1].to_string(),
                summary: MetricSummary {
                    runs,
                    mean: num(f[2])?,
                    std: num(f[3])?,
                },
            });
        }
        Ok(AblationTable { rows })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| RecpError::io(path, e))?;
        Self::parse(&text, path)
    }

    /// The table's rows for one variant as eval reports, one per task present.
    pub fn reports(&self, variant: Ablation) -> Vec<Report> {
        [(CLUSTER_TASK, &CLUSTER_METRICS), (POPULARITY_TASK, &REGRESSION_METRICS)]
            .into_iter()
            .filter_map(|(task, names)| {
                let metrics: std::collections::BTreeMap<String, MetricSummary> = names
                    .iter()
                    .filter_map(|m| self.get(variant, m).map(|s| (m.to_string(), s.clone())))
                    .collect();
                (!metrics.is_empty()).then(|| Report {
                    task: task.into(),
                    metrics,
                })
            })
            .collect()
    }
}

pub const RUNS_HEADER: &str = "variant,seed,nmi,ari,f_measure,mae,rmse,r2";

/// One line per trained embedding with the run-mean of each metric (`NA`
/// when the target was unavailable).
pub fn runs_csv_string(runs: &[RunScores]) -> String {
    let mut s = String::from(RUNS_HEADER);
    s.push('\n');
    for r in runs {
        write!(s, "{},{}", r.variant.name(), r.seed).unwrap();
        for m in CLUSTER_METRICS.iter().chain(&REGRESSION_METRICS) {
            match r.metric(m) {
                Some(v) => write!(s, ",{v:?}").unwrap(),
                None => s.push_str(",NA"),
            }
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fake(variant: Ablation, seed: u64, nmi: f64) -> RunScores {
        let one = |v: f64| MetricSummary::from_runs(vec![v]);
        RunScores {
            variant,
            seed,
            cluster: Some(ClusterReport {
                nmi: one(nmi),
                ari: one(nmi / 2.0),
                f_measure: one(0.1),
                assignments: vec![],
            }),
            regression: None,
        }
    }

    #[test]
    fn table_round_trip() {
        let runs = vec![
            fake(Ablation::Full, 1, 0.9),
            fake(Ablation::Full, 2, 1.0 / 3.0),
            fake(Ablation::NoIv, 1, 0.5),
            fake(Ablation::NoIv, 2, 0.7),
        ];
        let t = AblationTable::from_runs(&runs);
        assert_eq!(t.rows.len(), 6);
        let back = AblationTable::parse(&t.to_csv_string(), Path::new("t.csv")).unwrap();
        assert_eq!(back, t);
        let reps = back.reports(Ablation::Full);
        assert_eq!(reps.len(), 1);
        let c = ClusterReport::from_report(&reps[0]).unwrap();
        assert_eq!(c.nmi.runs, vec![0.9, 1.0 / 3.0]);
        assert!(runs_csv_string(&runs).lines().nth(1).unwrap().ends_with(",NA,NA,NA"));
    }

    #[test]
    fn bad_table_rejected() {
        assert!(AblationTable::parse("variant,metric\n", Path::new("x")).is_err());
        let t = format!("{TABLE_HEADER}\nfull,nmi,abc,0,1\n");
        assert!(AblationTable::parse(&t, Path::new("x")).is_err());
    }
}
