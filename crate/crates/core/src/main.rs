//! Command-line front end: diagnose knowledge bases, generate KBs and
//! datasets, train classifiers, verify the risk bounds, and run sweeps.
//!
//! Exit codes: 0 on success (and a Learnable verdict), 2 when a diagnosis
//! says Insufficient or a bound check finds violations, 1 on any error.

use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use abl_rank::datagen::{make_dataset, FeatureModel, GenMode};
use abl_rank::diagnostics::{
    hed_base_sweep, random_kb_sweep, recovery_experiment, verify_bound, RecoverySettings,
    SweepResult,
};
use abl_rank::kb::{self, BuiltinKind, KnowledgeBase, NormalForm};
use abl_rank::learner::{Activation, Arch, Method, TrainConfig};
use abl_rank::probmatrix::ClassPrior;
use abl_rank::Verdict;

#[derive(Parser)]
#[command(name = "abl-rank", version, about = "Knowledge-base supervision diagnosis and experiments")]
struct Cli {
    /// Root seed; all randomness derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Write the report to this path instead of stdout.
    #[arg(long, short = 'o', global = true)]
    out: Option<PathBuf>,
    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Record wall-clock times in reports (makes outputs run-dependent).
    #[arg(long, global = true)]
    timings: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Args)]
struct KbSource {
    /// Path to a KB text file.
    #[arg(long, conflicts_with = "builtin")]
    kb: Option<PathBuf>,
    /// Builtin KB: conj_eq, conjunction, addition, hed.
    #[arg(long)]
    builtin: Option<String>,
    /// Numeral base for the addition and hed builtins.
    #[arg(long, default_value_t = 10)]
    base: u32,
    /// Restrict to these concepts before grounding (comma separated).
    #[arg(long, value_delimiter = ',')]
    concepts: Vec<String>,
}

impl KbSource {
    fn load(&self) -> Result<KnowledgeBase> {
        let mut kb = match (&self.kb, &self.builtin) {
            (Some(path), None) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                let mut kb = kb::parse_kb(&text)?;
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    kb.set_id(stem);
                }
                kb
            }
            (None, Some(name)) => {
                let kind = BuiltinKind::from_name(name)
                    .ok_or_else(|| anyhow!("unknown builtin {name:?}"))?;
                kb::builtin_kb(kind, self.base)?
            }
            _ => bail!("exactly one of --kb or --builtin is required"),
        };
        if !self.concepts.is_empty() {
            let ids: Vec<&str> = self.concepts.iter().map(String::as_str).collect();
            kb = kb.restrict(&ids)?;
        }
        Ok(kb.ground()?)
    }
}

#[derive(Args)]
struct FeatureOpts {
    /// Mean separation of the Gaussian feature model.
    #[arg(long, default_value_t = 3.0)]
    sep: f64,
    /// Noise scale of the Gaussian feature model.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Feature dimension (defaults to the class count).
    #[arg(long)]
    dim: Option<usize>,
}

#[derive(Args)]
struct TrainOpts {
    /// Objective: rand, maxp, mind, avg, tl.
    #[arg(long, default_value = "tl")]
    method: String,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 256)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Classifier architecture: linear or mlp.
    #[arg(long, default_value = "linear")]
    arch: String,
    /// Hidden width of the mlp architecture.
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    /// Activation of the mlp architecture: relu or tanh.
    #[arg(long, default_value = "relu")]
    activation: String,
    #[arg(long, default_value_t = 10_000)]
    n_train: usize,
    #[arg(long, default_value_t = 2_000)]
    n_test: usize,
    /// Sequence sampling process for train/test data: uniform or generative.
    #[arg(long, default_value = "uniform")]
    data_mode: String,
}

impl TrainOpts {
    fn method(&self) -> Result<Method> {
        Method::from_name(&self.method).ok_or_else(|| anyhow!("unknown method {:?}", self.method))
    }

    fn arch(&self) -> Result<Arch> {
        match self.arch.as_str() {
            "linear" => Ok(Arch::Linear),
            "mlp" => {
                let activation = match self.activation.as_str() {
                    "relu" => Activation::Relu,
                    "tanh" => Activation::Tanh,
                    other => bail!("unknown activation {other:?}"),
                };
                Ok(Arch::Mlp { hidden: self.hidden, activation })
            }
            other => bail!("unknown architecture {other:?}"),
        }
    }

    fn config(&self, classes: usize, prior: ClassPrior, seed: u64) -> Result<TrainConfig> {
        Ok(TrainConfig {
            method: self.method()?,
            epochs: self.epochs,
            batch_size: self.batch,
            learning_rate: self.lr,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            seed,
            prior: if self.method()? == Method::Tl {
                prior
            } else {
                ClassPrior::uniform(classes)
            },
        })
    }

    fn settings(&self, features: &FeatureOpts, timings: bool) -> Result<RecoverySettings> {
        let data_mode = match self.data_mode.as_str() {
            "uniform" => GenMode::Uniform,
            "generative" => GenMode::Generative,
            other => bail!("unknown data mode {other:?}"),
        };
        Ok(RecoverySettings {
            arch: self.arch()?,
            feature_dim: features.dim,
            feature_sep: features.sep,
            feature_sigma: features.sigma,
            data_mode,
            n_train: self.n_train,
            n_test: self.n_test,
            timings,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Ground a KB, build its probability matrix, and test the rank
    /// criterion. Exit code 2 when the verdict is Insufficient.
    Diagnose {
        #[command(flatten)]
        source: KbSource,
        /// "uniform" or a path to a file of class probabilities.
        #[arg(long, default_value = "uniform")]
        prior: String,
    },
    /// Generate a random normal-form KB (or dump a builtin one).
    GenKb {
        /// dnf or cnf.
        #[arg(long, required_unless_present = "builtin")]
        form: Option<String>,
        #[arg(long, default_value_t = 3)]
        arity: usize,
        /// Dump this builtin instead of generating randomly.
        #[arg(long)]
        builtin: Option<String>,
        #[arg(long, default_value_t = 10)]
        base: u32,
    },
    /// Sample a sequence dataset and write it as JSON lines.
    GenData {
        #[command(flatten)]
        source: KbSource,
        /// uniform or generative.
        #[arg(long, default_value = "generative")]
        mode: String,
        #[arg(long, default_value = "uniform")]
        prior: String,
        #[arg(short = 'n', long, default_value_t = 1000)]
        count: usize,
        #[command(flatten)]
        features: FeatureOpts,
    },
    /// Diagnose, train under one objective, and evaluate held-out accuracy.
    Train {
        #[command(flatten)]
        source: KbSource,
        #[arg(long, default_value = "uniform")]
        prior: String,
        #[command(flatten)]
        train: TrainOpts,
        #[command(flatten)]
        features: FeatureOpts,
    },
    /// Check the risk bounds with random classifiers. Exit code 2 when any
    /// classifier violates the bound beyond tolerance.
    VerifyBound {
        #[command(flatten)]
        source: KbSource,
        #[arg(long, default_value = "uniform")]
        prior: String,
        /// Number of random classifiers.
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Dataset size.
        #[arg(short = 'n', long, default_value_t = 20_000)]
        count: usize,
        #[arg(long, default_value_t = 0.02)]
        tolerance: f64,
    },
    /// Diagnose and train many random KBs, grouping by rank verdict.
    SweepRandom {
        #[arg(long, default_value = "dnf")]
        form: String,
        #[arg(long, default_value_t = 3)]
        arity: usize,
        #[arg(long, default_value_t = 40)]
        num_kbs: usize,
        /// Comma-separated subset of rand,maxp,mind,avg,tl.
        #[arg(long, value_delimiter = ',', default_values_t = vec!["tl".to_string()])]
        methods: Vec<String>,
        #[command(flatten)]
        train: TrainOpts,
        #[command(flatten)]
        features: FeatureOpts,
    },
    /// Rank and recovery accuracy of the equation KB per numeral base.
    SweepHed {
        #[arg(long, default_value_t = 2)]
        min_base: u32,
        #[arg(long, default_value_t = 10)]
        max_base: u32,
        #[command(flatten)]
        train: TrainOpts,
        #[command(flatten)]
        features: FeatureOpts,
    },
}

fn parse_form(form: &str) -> Result<NormalForm> {
    match form.to_ascii_lowercase().as_str() {
        "dnf" => Ok(NormalForm::Dnf),
        "cnf" => Ok(NormalForm::Cnf),
        other => bail!("unknown normal form {other:?} (expected dnf or cnf)"),
    }
}

fn load_prior(spec: &str, classes: usize) -> Result<ClassPrior> {
    if spec == "uniform" {
        return Ok(ClassPrior::uniform(classes));
    }
    let text =
        fs::read_to_string(spec).with_context(|| format!("reading prior file {spec}"))?;
    Ok(ClassPrior::parse(&text, classes)?)
}

fn emit(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(path, content).with_context(|| format!("writing {}", path.display()))?
        }
        None => {
            std::io::stdout().write_all(content.as_bytes())?;
            if !content.ends_with('\n') {
                println!();
            }
        }
    }
    Ok(())
}

/// Attaches the resolved configuration to a JSON report.
fn with_config(report: serde_json::Value, config: serde_json::Value) -> serde_json::Value {
    let mut map = serde_json::Map::new();
    map.insert("config".into(), config);
    if let serde_json::Value::Object(fields) = report {
        for (k, v) in fields {
            map.insert(k, v);
        }
    }
    serde_json::Value::Object(map)
}

fn sweep_output(result: &SweepResult, format: Format, config: serde_json::Value) -> String {
    match format {
        Format::Csv | Format::Text => result.to_csv(),
        Format::Json => {
            let report = serde_json::json!({
                "config": config,
                "rows": result.rows,
            });
            serde_json::to_string_pretty(&report).expect("sweep serialization")
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    match &cli.command {
        Command::Diagnose { source, prior } => {
            let kb = source.load()?;
            let prior = load_prior(prior, kb.num_classes())?;
            let report = abl_rank::probmatrix::diagnose(&kb, &prior)?;
            let content = match cli.format {
                Format::Json | Format::Csv => report.to_json_string(),
                Format::Text => {
                    let constants = &report.matrix.constants;
                    format!(
                        "kb: {} ({} classes)\nrank: {} / {}\nverdict: {:?}\nb = {}, C = {:.6}\n",
                        report.kb_id,
                        report.classes,
                        report.rank,
                        report.classes,
                        report.verdict,
                        constants.min_concept_prior,
                        constants.target_location_gap(kb.max_arity()),
                    )
                }
            };
            emit(&cli.out, &content)?;
            Ok(if report.verdict == Verdict::Learnable { 0 } else { 2 })
        }
        Command::GenKb { form, arity, builtin, base } => {
            let kb = match builtin {
                Some(name) => {
                    let kind = BuiltinKind::from_name(name)
                        .ok_or_else(|| anyhow!("unknown builtin {name:?}"))?;
                    kb::builtin_kb(kind, *base)?.ground()?
                }
                None => {
                    let form = parse_form(form.as_deref().expect("clap enforces --form"))?;
                    kb::random_kb(form, *arity, cli.seed)?
                }
            };
            let content = match cli.format {
                Format::Json => serde_json::to_string_pretty(&kb.to_grounded_json()?)?,
                Format::Csv | Format::Text => kb::render_kb(&kb),
            };
            emit(&cli.out, &content)?;
            Ok(0)
        }
        Command::GenData { source, mode, prior, count, features } => {
            let kb = source.load()?;
            let prior = load_prior(prior, kb.num_classes())?;
            let mode = match mode.as_str() {
                "uniform" => GenMode::Uniform,
                "generative" => GenMode::Generative,
                other => bail!("unknown mode {other:?}"),
            };
            let model = FeatureModel::gaussian(
                kb.num_classes(),
                features.dim.unwrap_or(kb.num_classes()),
                features.sep,
                features.sigma,
                cli.seed,
            )?;
            let data = make_dataset(&kb, mode, &prior, &model, *count, cli.seed)?;
            emit(&cli.out, &data.to_jsonl())?;
            Ok(0)
        }
        Command::Train { source, prior, train, features } => {
            let kb = source.load()?;
            let prior = load_prior(prior, kb.num_classes())?;
            let cfg = train.config(kb.num_classes(), prior.clone(), cli.seed)?;
            let settings = train.settings(features, cli.timings)?;
            let outcome = recovery_experiment(&kb, &prior, &cfg, &settings)?;
            let config = serde_json::json!({
                "kb": kb.id(),
                "method": cfg.method,
                "epochs": cfg.epochs,
                "batch_size": cfg.batch_size,
                "learning_rate": cfg.learning_rate,
                "arch": settings.arch,
                "sep": settings.feature_sep,
                "sigma": settings.feature_sigma,
                "dim": settings.feature_dim,
                "n_train": settings.n_train,
                "n_test": settings.n_test,
                "seed": cli.seed,
            });
            let content = match cli.format {
                Format::Text => format!(
                    "kb: {} verdict: {:?}\nmethod: {} accuracy: {:.4}\n",
                    kb.id(),
                    outcome.diagnosis.verdict,
                    cfg.method.name(),
                    outcome.train.final_accuracy,
                ),
                _ => {
                    let report = with_config(serde_json::to_value(&outcome.train)?, config);
                    serde_json::to_string_pretty(&report)?
                }
            };
            emit(&cli.out, &content)?;
            Ok(0)
        }
        Command::VerifyBound { source, prior, trials, count, tolerance } => {
            let kb = source.load()?;
            let prior = load_prior(prior, kb.num_classes())?;
            let result = verify_bound(&kb, &prior, *count, *trials, *tolerance, cli.seed)?;
            let config = serde_json::json!({
                "kb": kb.id(),
                "trials": trials,
                "n": count,
                "tolerance": tolerance,
                "seed": cli.seed,
            });
            let content = match cli.format {
                Format::Text => format!(
                    "kb: {} mode: {:?} C: {:.6}\ntrials: {} violations: {} tightness slack: {:.6}\n",
                    result.kb_id,
                    result.mode,
                    result.constant,
                    result.trials.len(),
                    result.violations,
                    result.tightness_slack,
                ),
                _ => {
                    let report = with_config(serde_json::to_value(&result)?, config);
                    serde_json::to_string_pretty(&report)?
                }
            };
            emit(&cli.out, &content)?;
            Ok(if result.violations == 0 { 0 } else { 2 })
        }
        Command::SweepRandom { form, arity, num_kbs, methods, train, features } => {
            let form = parse_form(form)?;
            let methods: Vec<Method> = methods
                .iter()
                .map(|m| Method::from_name(m).ok_or_else(|| anyhow!("unknown method {m:?}")))
                .collect::<Result<_>>()?;
            let settings = train.settings(features, cli.timings)?;
            let result = random_kb_sweep(
                form,
                *arity,
                *num_kbs,
                &methods,
                train.epochs,
                &settings,
                cli.seed,
            )?;
            let config = serde_json::json!({
                "form": form.name(),
                "arity": arity,
                "num_kbs": num_kbs,
                "methods": methods,
                "epochs": train.epochs,
                "n_train": settings.n_train,
                "n_test": settings.n_test,
                "seed": cli.seed,
            });
            emit(&cli.out, &sweep_output(&result, cli.format, config))?;
            Ok(0)
        }
        Command::SweepHed { min_base, max_base, train, features } => {
            if min_base > max_base {
                bail!("--min-base must not exceed --max-base");
            }
            let settings = train.settings(features, cli.timings)?;
            let result =
                hed_base_sweep(*min_base..=*max_base, train.epochs, &settings, cli.seed)?;
            let config = serde_json::json!({
                "min_base": min_base,
                "max_base": max_base,
                "epochs": train.epochs,
                "n_train": settings.n_train,
                "n_test": settings.n_test,
                "seed": cli.seed,
            });
            emit(&cli.out, &sweep_output(&result, cli.format, config))?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
