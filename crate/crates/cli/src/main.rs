//! `cytopie` command-line interface.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use cytopie::baselines::{train_baseline, BaselineConfig};
use cytopie::brs::{learn_chains, LearnConfig};
use cytopie::chart::{
    read_features_csv, read_labels_csv, write_charts_csv, write_features_csv, write_labels_csv, FeatureTable,
};
use cytopie::dataset::{generate_planted_dataset, load_dataset, write_dataset, PlantedSpec};
use cytopie::embed::{fit_embedding, EmbeddingConfig};
use cytopie::eval::{chart_slides, run_experiment};
use cytopie::{BaselineKind, ClassLabel, Dataset, EmbeddingModel, PipelineConfig};
use cytopie_service::SessionState;

#[derive(Parser)]
#[command(
    name = "cytopie",
    version,
    about = "Slide classification from cell-composition pie charts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a planted two-class dataset (manifest.json plus cell CSVs).
    Generate {
        /// PlantedSpec JSON; defaults to two 8-D blobs, weights (0.8,0.2) vs (0.2,0.8).
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the embedding and distortion on one class's slides.
    FitEmbed {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 1, value_parser = parse_class)]
        class: u8,
        /// Use only the first N slides of the class.
        #[arg(long)]
        slides: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Density charts, 78-variable features and labels for every slide.
    Charts {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Chart CSV (`slide_id,D1..D12,count`).
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Learn a rule set from feature and label CSVs.
    LearnRules {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5000)]
        iterations: usize,
        #[arg(long, default_value_t = 1)]
        chains: usize,
        #[arg(long, default_value_t = 2, value_parser = parse_class)]
        positive_class: u8,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a logistic-regression, linear-SVM or MLP baseline.
    TrainBaseline {
        #[arg(long)]
        kind: BaselineKind,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value_t = 2, value_parser = parse_class)]
        positive_class: u8,
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeated patient-level splits comparing the rule set with the baselines.
    RunExperiment {
        #[arg(long)]
        manifest: PathBuf,
        /// PipelineConfig JSON; flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Serve the HTTP API over DIR/{manifest,model,rules}.json.
    Serve {
        #[arg(long)]
        artifacts: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
    },
}

fn parse_class(s: &str) -> Result<u8, String> {
    match s {
        "1" => Ok(1),
        "2" => Ok(2),
        _ => Err(format!("class must be 1 or 2, got `{s}`")),
    }
}

fn class(v: u8) -> ClassLabel {
    ClassLabel::try_from(v).expect("validated by clap")
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn load(manifest: &Path) -> Result<Dataset> {
    load_dataset(manifest).with_context(|| format!("loading {}", manifest.display()))
}

fn read_training(features: &Path, labels: &Path) -> Result<(FeatureTable, Vec<ClassLabel>)> {
    let table: FeatureTable = read_features_csv(features)?;
    let y = table
        .aligned_labels(&read_labels_csv(labels)?)
        .context("every feature row needs a label")?;
    Ok((table, y))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { spec, seed, out } => {
            let spec = match spec {
                Some(p) => serde_json::from_str(&fs::read_to_string(&p)?)
                    .with_context(|| format!("parsing {}", p.display()))?,
                None => PlantedSpec::two_blobs(8, 6.0, [0.8, 0.2], [0.2, 0.8], 25, 400),
            };
            let ds: Dataset = generate_planted_dataset(&spec, seed)?;
            let manifest = write_dataset(&ds, &out)?;
            println!(
                "wrote {} slides, {} cells to {}",
                ds.slides.len(),
                ds.n_cells(),
                manifest.display()
            );
        }
        Command::FitEmbed {
            manifest,
            class: c,
            slides,
            seed,
            out,
        } => {
            let ds = load(&manifest)?;
            let cfg = EmbeddingConfig {
                seed,
                reference_class: class(c),
                reference_slides: slides,
                ..EmbeddingConfig::default()
            };
            let model = fit_embedding(&ds, &cfg)?;
            write_text(&out, &model.to_json()?)?;
            println!(
                "embedded {} cells from {} slides into {}",
                model.n_train(),
                model.reference_slide_ids.len(),
                out.display()
            );
        }
        Command::Charts {
            manifest,
            model,
            out,
            json,
            features,
            labels,
        } => {
            let ds = load(&manifest)?;
            let model = EmbeddingModel::from_json(&fs::read_to_string(&model)?)?;
            let all: Vec<usize> = (0..ds.slides.len()).collect();
            let (charts, vectors): (Vec<_>, Vec<_>) =
                chart_slides(&model, &ds, &all, PipelineConfig::default().ratio_epsilon)?
                    .into_iter()
                    .unzip();
            write_charts_csv(&charts, create(&out)?)?;
            if let Some(p) = json {
                write_text(&p, &serde_json::to_string_pretty(&charts)?)?;
            }
            if let Some(p) = features {
                let table = FeatureTable {
                    slide_ids: charts.iter().map(|c| c.slide_id.clone()).collect(),
                    rows: vectors.into_iter().map(|v| v.values).collect(),
                };
                write_features_csv(&table, create(&p)?)?;
            }
            if let Some(p) = labels {
                let rows: Vec<(String, ClassLabel)> = ds
                    .slides
                    .iter()
                    .filter_map(|s| Some((s.slide_id.clone(), s.label?)))
                    .collect();
                write_labels_csv(&rows, create(&p)?)?;
            }
            println!("charted {} slides into {}", charts.len(), out.display());
        }
        Command::LearnRules {
            features,
            labels,
            seed,
            iterations,
            chains,
            positive_class,
            out,
        } => {
            let (table, y) = read_training(&features, &labels)?;
            if chains == 0 {
                bail!("--chains must be at least 1");
            }
            let mut cfg = LearnConfig {
                positive_class: class(positive_class),
                ..LearnConfig::default()
            };
            cfg.schedule.iterations = iterations;
            let seeds: Vec<u64> = (0..chains as u64).map(|c| seed.wrapping_add(c)).collect();
            let outcome = learn_chains(table.matrix().view(), &y, &cfg, &seeds)?;
            write_text(&out, &outcome.ruleset.to_json()?)?;
            println!("{}", outcome.ruleset);
            println!("log posterior {:.4}", outcome.log_posterior);
        }
        Command::TrainBaseline {
            kind,
            features,
            labels,
            seed,
            epochs,
            positive_class,
            out,
        } => {
            let (table, y) = read_training(&features, &labels)?;
            let mut cfg = BaselineConfig {
                seed,
                ..BaselineConfig::default()
            };
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            let x = table.matrix();
            let model = train_baseline(kind, x.view(), &y, class(positive_class), &cfg)?;
            let correct = model
                .predict_all(x.view())
                .iter()
                .zip(&y)
                .filter(|(a, b)| a == b)
                .count();
            write_text(&out, &model.to_json()?)?;
            println!(
                "{} training accuracy {:.3}",
                kind.short_name(),
                correct as f64 / y.len() as f64
            );
        }
        Command::RunExperiment {
            manifest,
            config,
            repeats,
            seed,
            report,
        } => {
            let ds = load(&manifest)?;
            let mut cfg: PipelineConfig = match config {
                Some(p) => serde_json::from_str(&fs::read_to_string(&p)?)
                    .with_context(|| format!("parsing {}", p.display()))?,
                None => PipelineConfig::default(),
            };
            if let Some(r) = repeats {
                cfg.split.repeats = r;
            }
            if let Some(s) = seed {
                cfg.split.seed = s;
            }
            let result = run_experiment(&ds, &cfg)?;
            if let Some(p) = report {
                write_text(&p, &result.to_json()?)?;
            }
            println!("{}", result.render_table());
        }
        Command::Serve { artifacts, bind } => {
            let state = SessionState::load(&artifacts)?;
            tokio::runtime::Runtime::new()?.block_on(cytopie_service::serve(state, &bind))?;
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
