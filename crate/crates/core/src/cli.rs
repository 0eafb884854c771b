//! `recp` command line.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::ablation::{run_grid, runs_csv_string, AblationTable, Targets};
use crate::config::Config;
use crate::data::csv::{load_csv_checkins, load_csv_labels};
use crate::data::{build_checkins, labels_by_region, CityData, ViewFeatures};
use crate::error::{RecpError, Result};
use crate::eval::{evaluate_clustering, evaluate_popularity};
use crate::numcore::GradCheckConfig;
use crate::synth::{generate_city, CitySpec};
use crate::train::{grad_check_objective, history_csv_string, train_with_progress, Ablation, TrainConfig, FinalEmbedding};

/// Gradient checks pass below this relative error.
pub const GRADCHECK_TOL: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "recp", version, about = "Multi-view contrastive-prediction region embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed of the command's main stage.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic city (pois, trips, checkins, labels) to --out.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on a data directory and export the embedding.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        /// Directory with pois.csv and trips.csv; defaults to [data].dir.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_parser = parse_ablation)]
        ablation: Option<Ablation>,
    },
    /// k-means land-use clustering scored against labels.
    EvalCluster {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        embedding: PathBuf,
        /// `region,function` or `region,district` file.
        #[arg(long)]
        labels: PathBuf,
        /// Number of clusters; defaults to the number of distinct labels.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Lasso popularity regression on check-in counts.
    EvalPopularity {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        embedding: PathBuf,
        #[arg(long)]
        checkins: PathBuf,
    },
    /// Train every ablation variant on [train].seeds and tabulate both tasks.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Concurrent training runs.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Finite-difference check of the full objective.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Use the 8-region toy city and d = 4 instead of the configured sizes.
        #[arg(long)]
        toy: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_ablation(s: &str) -> std::result::Result<Ablation, String> {
    s.parse().map_err(|e: RecpError| e.to_string())
}

#[derive(Debug, Serialize)]
struct RunMeta<'a> {
    command: &'a str,
    version: &'a str,
    config_hash: String,
    seed: u64,
    wall_time_s: f64,
    /// sha256 of every artifact written by the run.
    artifacts: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| RecpError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

struct Run<'a> {
    command: &'a str,
    out: PathBuf,
    config: Config,
    seed: u64,
    started: Instant,
    artifacts: Vec<PathBuf>,
}

impl<'a> Run<'a> {
    fn new(command: &'a str, out: &Path, config: Config, seed: u64) -> Result<Self> {
        std::fs::create_dir_all(out).map_err(|e| RecpError::io(out, e))?;
        Ok(Run {
            command,
            out: out.to_path_buf(),
            config,
            seed,
            started: Instant::now(),
            artifacts: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.out.join(name);
        self.artifacts.push(p.clone());
        p
    }

    fn finish(self) -> Result<()> {
        let mut artifacts = BTreeMap::new();
        for p in &self.artifacts {
            let name = p.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
            artifacts.insert(name, sha256_file(p)?);
        }
        let meta = RunMeta {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            config_hash: self.config.hash(),
            seed: self.seed,
            wall_time_s: self.started.elapsed().as_secs_f64(),
            artifacts,
        };
        let path = self.out.join("run_meta.json");
        let text = serde_json::to_string_pretty(&meta).expect("meta serializes") + "\n";
        std::fs::write(&path, text).map_err(|e| RecpError::io(&path, e))?;
        for (k, v) in &meta.artifacts {
            log::info!("wrote {} ({})", self.out.join(k).display(), &v[..12]);
        }
        Ok(())
    }
}

fn data_dir(flag: Option<PathBuf>, config: &Config) -> Result<PathBuf> {
    flag.or_else(|| config.data.dir.clone())
        .ok_or_else(|| RecpError::Config("no data directory: pass --data or set [data].dir".into()))
}

fn load_city(dir: &Path, config: &Config) -> Result<(CityData, ViewFeatures)> {
    let city = CityData::load_dir(dir, config.data.shape())?;
    log::info!(
        "loaded {}: {} regions, {} categories, {} flow columns",
        dir.display(),
        city.regions(),
        city.attributes.values.cols(),
        city.outflow.values.cols()
    );
    let features = ViewFeatures::new(&city.attributes, &city.outflow, &city.inflow)?;
    Ok((city, features))
}

fn read_labels(path: &Path, regions: usize) -> Result<Vec<usize>> {
    labels_by_region(&load_csv_labels(path)?, regions)
}

fn read_checkins(path: &Path, regions: usize) -> Result<Vec<f64>> {
    Ok(build_checkins(&load_csv_checkins(path)?, regions)?.values)
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

fn train_cmd(mut config: Config, seed: Option<u64>, out: &Path, data: Option<PathBuf>, ablation: Option<Ablation>) -> Result<()> {
    if let Some(s) = seed {
        config.train.seed = s;
    }
    if let Some(a) = ablation {
        config.train.ablation = a;
    }
    let dir = data_dir(data, &config)?;
    let (_, features) = load_city(&dir, &config)?;
    let tc = config.train_config();
    let mut run = Run::new("train", out, config, tc.seed)?;
    let every = (tc.epochs / 10).max(1);
    let result = train_with_progress(&tc, &features, |epoch, b| {
        if epoch % every == 0 || epoch == tc.epochs {
            log::info!("epoch {epoch}/{}: total {:.4}", tc.epochs, b.total);
        }
        log::debug!("epoch {epoch}: {:?}", b.terms());
    })?;
    result.embedding.save(run.path("embedding.csv"))?;
    let hist = run.path("loss_history.csv");
    std::fs::write(&hist, history_csv_string(&result.history)).map_err(|e| RecpError::io(&hist, e))?;
    let hash = run.config.hash();
    result.model.save_checkpoint(run.path("model.ckpt"), &hash)?;
    run.finish()
}

fn gradcheck_cmd(config: Config, seed: Option<u64>, toy: bool, out: Option<PathBuf>) -> Result<()> {
    let (spec, mut tc) = if toy {
        (CitySpec::toy(), TrainConfig::toy())
    } else {
        (config.synth.clone(), config.train_config())
    };
    tc.ablation = Ablation::Full;
    tc.seed = seed.unwrap_or(config.train.seed);
    let features = generate_city(&spec)?.view_features()?;
    let started = Instant::now();
    let report = grad_check_objective(&tc, &features, &GradCheckConfig::default(), 0.1)?;
    let (name, idx) = report.worst.clone().unwrap_or_default();
    println!(
        "max rel err {:.3e} over {} coordinates (worst {name}[{idx}]) in {:.2}s",
        report.max_rel_error,
        report.coords_checked,
        started.elapsed().as_secs_f64()
    );
    if let Some(out) = out {
        Run::new("gradcheck", &out, config, tc.seed)?.finish()?;
    }
    if report.max_rel_error < GRADCHECK_TOL {
        Ok(())
    } else {
        Err(RecpError::GradCheck(format!(
            "max rel err {:.3e} >= {GRADCHECK_TOL:e} at {name}[{idx}]",
            report.max_rel_error
        )))
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { common, out } => {
            let mut config = Config::load_or_default(common.config.as_deref())?;
            if let Some(s) = common.seed {
                config.synth.seed = s;
            }
            let city = generate_city(&config.synth)?;
            let seed = config.synth.seed;
            let mut run = Run::new("generate", &out, config, seed)?;
            city.write_dir(&out)?;
            for f in ["pois.csv", "trips.csv", "checkins.csv", "labels.csv"] {
                run.path(f);
            }
            log::info!(
                "generated {} regions, {} POIs, {} trips",
                city.spec.regions,
                city.pois.len(),
                city.trips.len()
            );
            run.finish()
        }
        Command::Train {
            common,
            out,
            data,
            ablation,
        } => {
            let config = Config::load_or_default(common.config.as_deref())?;
            train_cmd(config, common.seed, &out, data, ablation)
        }
        Command::EvalCluster {
            common,
            out,
            embedding,
            labels,
            k,
        } => {
            let mut config = Config::load_or_default(common.config.as_deref())?;
            if let Some(s) = common.seed {
                config.eval.seed = s;
            }
            if k.is_some() {
                config.eval.k = k;
            }
            let e = FinalEmbedding::load(&embedding)?.e;
            let truth = read_labels(&labels, e.rows())?;
            let report = evaluate_clustering(&e, &truth, &config.eval)?;
            let seed = config.eval.seed;
            let mut run = Run::new("eval-cluster", &out, config, seed)?;
            let labels_out = run.path("labels.csv");
            if same_file(&labels_out, &labels) {
                return Err(RecpError::InvalidInput(format!(
                    "--out would overwrite the truth labels {}",
                    labels.display()
                )));
            }
            report.to_report().save(run.path("report.json"))?;
            report.save_labels(labels_out)?;
            println!("NMI {}  ARI {}  F {}", report.nmi, report.ari, report.f_measure);
            run.finish()
        }
        Command::EvalPopularity {
            common,
            out,
            embedding,
            checkins,
        } => {
            let mut config = Config::load_or_default(common.config.as_deref())?;
            if let Some(s) = common.seed {
                config.eval.seed = s;
            }
            let e = FinalEmbedding::load(&embedding)?.e;
            let y = read_checkins(&checkins, e.rows())?;
            let report = evaluate_popularity(&e, &y, &config.eval)?;
            let seed = config.eval.seed;
            let mut run = Run::new("eval-popularity", &out, config, seed)?;
            report.to_report().save(run.path("report.json"))?;
            println!("MAE {}  RMSE {}  R2 {}", report.mae, report.rmse, report.r2);
            run.finish()
        }
        Command::Ablate {
            common,
            out,
            data,
            jobs,
        } => {
            let mut config = Config::load_or_default(common.config.as_deref())?;
            if let Some(s) = common.seed {
                config.eval.seed = s;
            }
            let dir = data_dir(data, &config)?;
            let (city, features) = load_city(&dir, &config)?;
            if city.labels.is_none() && city.checkins.is_none() {
                return Err(RecpError::InvalidInput(format!(
                    "{} has neither labels.csv nor checkins.csv to score against",
                    dir.display()
                )));
            }
            let checkins = city.checkins.as_ref().map(|c| c.values.as_slice());
            let targets = Targets {
                labels: city.labels.as_deref(),
                checkins,
            };
            let runs = run_grid(
                &config.train_config(),
                &Ablation::ALL,
                &config.train.seeds,
                &features,
                targets,
                &config.eval,
                jobs,
            )?;
            let table = AblationTable::from_runs(&runs);
            let seed = config.eval.seed;
            let mut run = Run::new("ablate", &out, config, seed)?;
            table.save(run.path("ablation.csv"))?;
            let p = run.path("ablation_runs.csv");
            std::fs::write(&p, runs_csv_string(&runs)).map_err(|e| RecpError::io(&p, e))?;
            for r in &table.rows {
                println!("{:<7} {:<10} {}", r.variant.name(), r.metric, r.summary);
            }
            run.finish()
        }
        Command::Gradcheck {
            common,
            toy,
            out,
        } => {
            let config = Config::load_or_default(common.config.as_deref())?;
            gradcheck_cmd(config, common.seed, toy, out)
        }
    }
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("RECP_LOG", "info");
    // a second call from the same process (tests) is harmless
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code: 0 success, 1 usage or configuration error, 2 data
/// error, 3 numerical failure.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_logging();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
