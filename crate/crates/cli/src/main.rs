//! `forge`: command line front end for the stressforge pipeline.
//!
//! Exit codes: 0 success, 1 data or stage error, 2 usage or configuration
//! error. Commands that draw random numbers need a seed from `--seed`, the
//! config file, or the `FORGE_SEED` environment variable (in that order).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use stressforge::config::{PipelineConfig, Resampling};
use stressforge::evaluate::{metrics, EvaluationReport};
use stressforge::forest::{train_forest, ForestParams, TrainedForest};
use stressforge::ingest::{ingest_manifest, load_dataset, write_dataset, write_table};
use stressforge::pipeline::{modality_scores_csv, ranking_csv, run_matrix, run_to_dir};
use stressforge::preprocess::{preprocess, SparsePolicy, Variant};
use stressforge::ranking::{modality_scores, top_k_features};
use stressforge::resample::{smote_dataset, Placement, SmoteParams};
use stressforge::synthgen::{generate, GeneratorSpec};
use stressforge::{ForgeError, StageRecord};

const SEED_ENV: &str = "FORGE_SEED";

#[derive(Parser)]
#[command(name = "forge", version, about = "Daily stress classification from multimodal wearable data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic source files, a manifest and a truth sidecar.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = Preset::Study)]
        preset: Preset,
        /// Generator spec as TOML; replaces the preset.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        participants: Option<usize>,
        #[arg(long)]
        days: Option<usize>,
    },
    /// Load and merge the sources of a manifest into one daily table.
    Ingest {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Clean a merged table and select a feature variant.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "without")]
        variant: Variant,
        /// Drop columns observed for fewer than this fraction of
        /// participants instead of using the fixed sparse-column list.
        #[arg(long)]
        min_coverage: Option<f64>,
    },
    /// Oversample minority classes with SMOTE up to the majority count.
    Balance {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long)]
        target: Option<usize>,
        /// Z-score features for the neighbour search.
        #[arg(long)]
        standardize: bool,
    },
    /// Train a random forest and save it as JSON.
    Train {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Pipeline config whose `[forest]` table supplies the parameters.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        trees: Option<usize>,
        #[arg(long)]
        max_depth: Option<usize>,
    },
    /// Rank features by importance and score modalities.
    Rank {
        #[arg(long)]
        model: PathBuf,
        /// Data file providing the modality of every feature.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 20)]
        k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a saved model on every row of a data file.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one experiment end to end and write its bundle.
    Run {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        variant: Option<Variant>,
        #[arg(long, value_enum)]
        smote: Option<SmoteMode>,
    },
    /// Run the four variant x resampling scenarios and compare them.
    Matrix {
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trees: Option<usize>,
    /// Also write SVG charts.
    #[arg(long)]
    plots: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Study,
    Planted,
}

#[derive(Clone, Copy, ValueEnum)]
enum SmoteMode {
    None,
    Before,
    After,
}

enum Failure {
    Usage(String),
    Data(ForgeError),
}

impl From<ForgeError> for Failure {
    fn from(e: ForgeError) -> Self {
        match e {
            ForgeError::Config(m) => Failure::Usage(m),
            ForgeError::Toml(m) => Failure::Usage(m),
            other => Failure::Data(other),
        }
    }
}

type CliResult = Result<(), Failure>;

fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> Result<u64, Failure> {
    if let Some(seed) = flag.or(config) {
        return Ok(seed);
    }
    match std::env::var(SEED_ENV) {
        Ok(raw) => raw
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("{SEED_ENV} must be an unsigned integer, got `{raw}`"))),
        Err(_) => Err(Failure::Usage(format!(
            "a seed is required: pass --seed or set {SEED_ENV}"
        ))),
    }
}

fn write_file(path: &Path, text: &str) -> CliResult {
    fs::write(path, text).map_err(|e| Failure::Data(ForgeError::Io { path: path.into(), source: e }))
}

fn make_dir(path: &Path) -> CliResult {
    fs::create_dir_all(path).map_err(|e| Failure::Data(ForgeError::Io { path: path.into(), source: e }))
}

fn provenance_text(records: &[StageRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let _ = writeln!(
            out,
            "{:<16} rows {:>6} -> {:<6} columns {:>4} -> {:<4} {}",
            r.stage.as_str(),
            r.rows_before,
            r.rows_after,
            r.columns_before,
            r.columns_after,
            r.rule
        );
        for w in &r.warnings {
            let _ = writeln!(out, "{:<16} warning: {w}", "");
        }
    }
    out
}

fn load_run_config(args: &RunArgs) -> Result<PipelineConfig, Failure> {
    let mut config = match &args.config {
        Some(path) => {
            let mut c = PipelineConfig::load(path)?;
            if let Some(seed) = args.seed {
                c.seed = seed;
            }
            c
        }
        None => PipelineConfig::new(resolve_seed(args.seed, None)?),
    };
    if let Some(trees) = args.trees {
        config.forest.n_estimators = trees;
    }
    config.plots |= args.plots;
    Ok(config)
}

fn report_files(dir: &Path, report: &EvaluationReport) -> CliResult {
    make_dir(dir)?;
    let json = serde_json::to_string_pretty(report).expect("reports serialize") + "\n";
    write_file(&dir.join("report.json"), &json)?;
    write_file(&dir.join("report.txt"), &report.to_text())?;
    write_file(&dir.join("confusion.csv"), &report.confusion_csv())
}

fn execute(command: Command) -> CliResult {
    match command {
        Command::Synth {
            out,
            seed,
            preset,
            spec,
            participants,
            days,
        } => {
            let seed = resolve_seed(seed, None)?;
            let mut spec = match spec {
                Some(path) => {
                    let text = fs::read_to_string(&path)
                        .map_err(|e| Failure::Data(ForgeError::Io { path, source: e }))?;
                    GeneratorSpec::from_toml(&text)?
                }
                None => match preset {
                    Preset::Study => GeneratorSpec::study(),
                    Preset::Planted => GeneratorSpec::planted_benchmark(),
                },
            };
            if let Some(p) = participants {
                spec.participants = p;
            }
            if let Some(d) = days {
                spec.survey_days = d;
                spec.missing_target_count = spec.missing_target_count.min(spec.participants * d.saturating_sub(1));
            }
            spec.validate()?;
            let data = generate(&spec, seed)?;
            let manifest = data.write_to_dir(&out)?;
            println!("{}", manifest.display());
        }
        Command::Ingest { manifest, out } => {
            let ingested = ingest_manifest(&manifest).map_err(|e| e.in_stage("ingest"))?;
            write_table(&out, &ingested.table)?;
            for (source, old, new) in &ingested.renamed {
                eprintln!("renamed {source}.{old} -> {new}");
            }
            println!("{}", serde_json::to_string_pretty(&ingested.report).expect("reports serialize"));
        }
        Command::Preprocess {
            input,
            out,
            variant,
            min_coverage,
        } => {
            let table = stressforge::ingest::read_table(&input)?;
            let policy = match min_coverage {
                Some(f) if (0.0..=1.0).contains(&f) => SparsePolicy::Coverage {
                    min_participant_fraction: f,
                },
                Some(f) => return Err(Failure::Usage(format!("--min-coverage must lie in [0, 1], got {f}"))),
                None => SparsePolicy::default(),
            };
            let (clean, _) = preprocess(&table, variant, &policy).map_err(|e| e.in_stage("preprocess"))?;
            write_table(&out, &clean)?;
            print!("{}", provenance_text(clean.provenance()));
        }
        Command::Balance {
            input,
            out,
            seed,
            k,
            target,
            standardize,
        } => {
            let params = SmoteParams {
                k,
                target_count: target,
                seed: resolve_seed(seed, None)?,
                standardize,
            };
            let data = load_dataset(&input)?;
            let (balanced, origins) = smote_dataset(&data, &params).map_err(|e| e.in_stage("balance"))?;
            write_dataset(&out, &balanced)?;
            println!("class counts before {:?}", data.class_counts());
            println!("class counts after  {:?}", balanced.class_counts());
            println!("synthetic rows {}", origins.len());
        }
        Command::Train {
            input,
            model,
            seed,
            config,
            trees,
            max_depth,
        } => {
            let (mut params, config_seed) = match config {
                Some(path) => {
                    let c = PipelineConfig::load(&path)?;
                    (c.forest.clone(), Some(c.seed))
                }
                None => (ForestParams::default(), None),
            };
            params.seed = resolve_seed(seed, config_seed)?;
            if let Some(t) = trees {
                params.n_estimators = t;
            }
            if max_depth.is_some() {
                params.max_depth = max_depth;
            }
            params.validate()?;
            let data = load_dataset(&input)?;
            let forest = train_forest(data.features.view(), &data.labels, &params).map_err(|e| e.in_stage("train"))?;
            forest.save(&model, &data.feature_names)?;
            println!("trained {} trees on {} rows x {} features", params.n_estimators, data.n_rows(), data.n_features());
            if let Some(oob) = forest.oob_accuracy(data.features.view(), &data.labels) {
                println!("out-of-bag accuracy {oob:.4}");
            }
        }
        Command::Rank { model, input, k, out } => {
            let (forest, names) = TrainedForest::load(&model)?;
            let data = load_dataset(&input)?;
            let ranking = top_k_features(forest.importances(), &names, k).map_err(|e| e.in_stage("rank"))?;
            let top: Vec<String> = ranking.iter().map(|r| r.name.clone()).collect();
            let tags = data.tags();
            let scores = modality_scores(&top, &tags).map_err(|e| e.in_stage("rank"))?;
            let ranking_text = ranking_csv(&ranking, &tags);
            let scores_text = modality_scores_csv(&scores);
            if let Some(dir) = out {
                make_dir(&dir)?;
                write_file(&dir.join("ranking.csv"), &ranking_text)?;
                write_file(&dir.join("modality_scores.csv"), &scores_text)?;
            }
            print!("{ranking_text}\n{scores_text}");
        }
        Command::Evaluate { model, input, out } => {
            let (forest, names) = TrainedForest::load(&model)?;
            let data = load_dataset(&input)?;
            if names != data.feature_names {
                return Err(Failure::Usage(format!(
                    "model expects {} features that do not match the {} columns of {}",
                    names.len(),
                    data.n_features(),
                    input.display()
                )));
            }
            let predicted = forest.predict(data.features.view()).map_err(|e| e.in_stage("evaluate"))?;
            let report = metrics(&data.labels, &predicted).map_err(|e| e.in_stage("evaluate"))?;
            if let Some(dir) = out {
                report_files(&dir, &report)?;
            }
            print!("{}", report.to_text());
        }
        Command::Run { run, variant, smote } => {
            let mut config = load_run_config(&run)?;
            if let Some(v) = variant {
                config.variant = v;
            }
            match smote {
                Some(SmoteMode::None) => config.resampling = Resampling::None,
                Some(mode) => {
                    if config.resampling == Resampling::None {
                        config.resampling = Resampling::smote(5);
                    }
                    config.smote_placement = match mode {
                        SmoteMode::After => Placement::AfterSplit,
                        _ => Placement::BeforeSplit,
                    };
                }
                None => {}
            }
            config.validate()?;
            let (experiment, dir) = run_to_dir(&config, &run.manifest, &run.out)?;
            print!("{}", provenance_text(&experiment.provenance));
            println!();
            print!("{}", experiment.report.to_text());
            println!("\nbundle written to {}", dir.display());
        }
        Command::Matrix { run } => {
            let config = load_run_config(&run)?;
            config.validate()?;
            let result = run_matrix(&config, &run.manifest, Some(&run.out))?;
            print!("{}", result.comparison_csv());
            for (variant, delta) in result.smote_deltas()? {
                println!("\n{variant}: imbalanced -> smote");
                print!("{}", delta.to_text());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
        Err(Failure::Data(error)) => {
            eprintln!("error: {error}");
            ExitCode::from(1)
        }
    }
}
