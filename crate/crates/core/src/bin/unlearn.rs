use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use entity_unlearn::corpus::generate_world;
use entity_unlearn::harness::experiments::{
    ablate_coverage, ablate_size, ablate_steps, compare_phases, probe_entity, unlearn_entity, RunSpec,
};
use entity_unlearn::harness::report::{render_plots, summary_table, ResultDoc};
use entity_unlearn::harness::{ExperimentConfig, Lab};
use entity_unlearn::lm::{greedy_decode, qa_prompt};
use entity_unlearn::metrics::rouge_l_recall;
use entity_unlearn::unlearn::Algorithm;

#[derive(Parser)]
#[command(
    name = "unlearn",
    about = "Entity-level unlearning experiments on a small language model"
)]
struct Cli {
    /// Experiment config (JSON); defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    /// Worker threads for per-entity experiments.
    #[arg(long, global = true, default_value_t = 1)]
    parallel: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ForgetSetKind {
    Target,
    Constructed,
}

#[derive(Args)]
struct AlgoArgs {
    /// Comma-separated algorithms (GA, GD, KL, PO, NPO_GD).
    #[arg(long, value_delimiter = ',', default_value = "GA,GD,KL,PO,NPO_GD")]
    algorithms: Vec<Algorithm>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus.
    GenWorld,
    /// Train the target model (and optionally a reference model without some entities).
    TrainTarget {
        #[arg(long, value_delimiter = ',')]
        reference_without: Vec<String>,
    },
    /// Build a forget set for one entity by probing the target model.
    Probe {
        #[arg(long)]
        entity: String,
        #[arg(long)]
        target_size: Option<usize>,
    },
    /// Run one unlearning experiment.
    Unlearn {
        #[arg(long)]
        entity: String,
        #[arg(long, default_value = "GA")]
        algorithm: Algorithm,
        #[arg(long, value_enum, default_value = "target")]
        forget_set: ForgetSetKind,
        /// Save a model snapshot at every checkpoint.
        #[arg(long)]
        snapshots: bool,
    },
    /// Knowledge coverage and metrics under progressive replacement by the target set.
    AblateCoverage(AlgoArgs),
    /// Probing cost and metrics across constructed forget-set sizes.
    AblateSize(AlgoArgs),
    /// Metrics at every checkpoint of target-set unlearning.
    AblateSteps(AlgoArgs),
    /// Pretraining-phase versus fine-tuning-phase entities.
    ComparePhases(AlgoArgs),
    /// Render plots and a summary table for result files or run directories.
    Report { inputs: Vec<PathBuf> },
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    write(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.reseed(seed);
    }
    Ok(cfg)
}

fn lab(cli: &Cli, cfg: ExperimentConfig) -> Result<Lab> {
    Ok(Lab::new(cfg)?.with_cache(cli.out.join("models")))
}

fn report_dir(dir: &Path) -> Result<()> {
    let doc = ResultDoc::load(&dir.join("record.json"))?;
    let plots = render_plots(&doc, &dir.join("plots"))?;
    let table = summary_table(&doc);
    write(&dir.join("summary.md"), &table)?;
    println!("{}: {} plots, summary.md", dir.display(), plots.len());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let cfg = load_config(&cli)?;
    let out = cli.out.clone();
    match &cli.command {
        Command::GenWorld => {
            let corpus = generate_world(&cfg.world)?;
            write(&out.join("corpus.json"), &corpus.to_json()?)?;
            write_json(&out.join("config.json"), &cfg)?;
            let facts: usize = corpus.entities.iter().map(|e| e.facts.len()).sum();
            println!(
                "{} entities, {facts} entity facts, {} retain, {} world, {} real-author items -> {}",
                corpus.entities.len(),
                corpus.retain_facts.len(),
                corpus.world_facts.len(),
                corpus.real_authors.len(),
                out.join("corpus.json").display()
            );
        }
        Command::TrainTarget { reference_without } => {
            let lab = lab(&cli, cfg.clone())?;
            let model = lab.target_model()?;
            model.save(out.join("target.model"))?;
            let mut total = 0.0;
            let mut n = 0usize;
            for e in &lab.corpus.entities {
                for f in &e.facts {
                    let hyp = greedy_decode(&model, &qa_prompt(&f.question), cfg.eval.max_decode_tokens)?;
                    total += rouge_l_recall(&f.answer, &hyp)?;
                    n += 1;
                }
            }
            let summary = serde_json::json!({
                "schema_version": 1,
                "parameters": model.n_params(),
                "checksum": model.checksum(),
                "memorization_rouge": total / n as f64,
            });
            write_json(&out.join("train_summary.json"), &summary)?;
            println!(
                "trained {} parameters, memorization ROUGE {:.4}",
                model.n_params(),
                total / n as f64
            );
            if !reference_without.is_empty() {
                let r = lab.reference_model(reference_without)?;
                r.save(out.join("reference.model"))?;
                println!("reference model without {} saved", reference_without.join(","));
            }
        }
        Command::Probe { entity, target_size } => {
            let lab = lab(&cli, cfg.clone())?;
            let model = lab.target_model()?;
            let r = probe_entity(&lab, &model, entity, target_size.unwrap_or(cfg.probe.target_size))?;
            let dir = out.join(format!("probe_{entity}"));
            write_json(&dir.join("config.json"), &cfg)?;
            write_json(&dir.join("record.json"), &r)?;
            println!(
                "{}: {} items in {} rounds, {} rejected{}",
                r.entity_name,
                r.forget_set.len(),
                r.rounds_used,
                r.rejected.len(),
                if r.shortfall { " (shortfall)" } else { "" }
            );
        }
        Command::Unlearn {
            entity,
            algorithm,
            forget_set,
            snapshots,
        } => {
            let lab = lab(&cli, cfg.clone())?;
            let model = lab.target_model()?;
            let reference = lab.reference_model(std::slice::from_ref(entity))?;
            let (forget, kind) = match forget_set {
                ForgetSetKind::Target => (lab.target_qa(entity)?, "target"),
                ForgetSetKind::Constructed => (
                    probe_entity(&lab, &model, entity, cfg.probe.target_size)?
                        .forget_set
                        .items,
                    "constructed",
                ),
            };
            let dir = out.join(format!("unlearn_{entity}_{algorithm}_{kind}"));
            let snap_dir = dir.join("snapshots");
            let spec = RunSpec {
                entity,
                forget: &forget,
                algorithm: *algorithm,
                reference: Some(&reference),
                same_phase_others: false,
                snapshot_dir: snapshots.then_some(snap_dir.as_path()),
            };
            let record = unlearn_entity(&lab, &model, &spec)?;
            write_json(&dir.join("config.json"), &cfg)?;
            write_json(&dir.join("record.json"), &record)?;
            write(&dir.join("loss.jsonl"), &record.loss_jsonl())?;
            report_dir(&dir)?;
            let sel = record.selected();
            println!(
                "selected checkpoint {} (step {}), forget quality {:?}, model utility {:.4}",
                record.selected_checkpoint, sel.step, sel.metrics.forget_quality, sel.metrics.model_utility
            );
        }
        Command::AblateCoverage(a) | Command::AblateSize(a) | Command::AblateSteps(a) | Command::ComparePhases(a) => {
            let (name, result) = match &cli.command {
                Command::AblateCoverage(_) => (
                    "coverage",
                    ablate_coverage(&lab(&cli, cfg.clone())?, &a.algorithms, cli.parallel)?,
                ),
                Command::AblateSize(_) => (
                    "size",
                    ablate_size(&lab(&cli, cfg.clone())?, &a.algorithms, cli.parallel)?,
                ),
                Command::AblateSteps(_) => (
                    "steps",
                    ablate_steps(&lab(&cli, cfg.clone())?, &a.algorithms, cli.parallel)?,
                ),
                _ => {
                    let mut c = cfg.clone();
                    if c.corpus_path.is_none() {
                        c.world.n_finetune = c.finetune.n_entities;
                    }
                    ("phases", compare_phases(&lab(&cli, c)?, &a.algorithms, cli.parallel)?)
                }
            };
            let dir = out.join(name);
            write_json(&dir.join("config.json"), &cfg)?;
            write_json(&dir.join("record.json"), &result)?;
            report_dir(&dir)?;
        }
        Command::Report { inputs } => {
            if inputs.is_empty() {
                bail!("report needs at least one run directory or record file");
            }
            for input in inputs {
                let dir = if input.is_dir() {
                    input.clone()
                } else {
                    input.parent().map(Path::to_path_buf).unwrap_or_default()
                };
                report_dir(&dir)?;
            }
        }
    }
    Ok(())
}
