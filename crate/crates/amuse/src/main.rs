use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use amuse::audio::read_wav;
use amuse::checkpoint::{load_snapshot, save_snapshot, Snapshot};
use amuse::config::{config_scalars, verify_scalars, RunConfig};
use amuse::data::{load_dataset, Dataset};
use amuse::error::AmuseError;
use amuse::fusion::Ablation;
use amuse::model::AmuseModel;
use amuse::optim::{AdamState, ParamSet};
use amuse::report::{
    sha256_hex, write_validated, AblationReport, AblationRow, RunManifest, TrainRunReport,
    ABLATION_SCHEMA, EVAL_SCHEMA, IMPORTANCE_SCHEMA, RHYTHM_SCHEMA, SOURCE_SCHEMA,
};
use amuse::rhythm::rhythm_labels;
use amuse::source::{source_timeline, BandSeparator};
use amuse::synth::{default_classes, generate_dataset, ClassConfig, GenOptions};
use amuse::train;
use amuse::Result;

#[derive(Parser)]
#[command(
    name = "amuse",
    version,
    about = "Audio-visual question answering for music performances on synthetic concert clips"
)]
struct Cli {
    /// Run configuration file (TOML); every field has a default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic clip + QA dataset.
    GenData {
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        per_category: usize,
        /// Class taxonomy JSON (defaults to the built-in one).
        #[arg(long)]
        classes: Option<PathBuf>,
    },
    /// Per-segment tempo estimates and rhythm-change labels for one WAV.
    AnnotateRhythm {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        segment_seconds: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-segment instrument presence timeline for one WAV.
    AnnotateSource {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        segment_seconds: Option<f64>,
        #[arg(long)]
        classes: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretrain the rhythm/source encoders on annotation targets.
    Pretrain {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finetune the full pipeline from a pretrained checkpoint.
    Train {
        #[arg(long)]
        rs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate a checkpoint; write per-category accuracy.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Comma-separated modules to knock out (mie, rhy, src, rois).
        #[arg(long)]
        ablate: Option<String>,
    },
    /// Per-module importance scores for each question category.
    Importance {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Accuracy table over module knockouts (full row included).
    Ablate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated modules, e.g. "rhy,src".
        #[arg(long)]
        modules: String,
        #[arg(long)]
        out: PathBuf,
        /// Retrain each knockout variant instead of zeroing at evaluation.
        #[arg(long)]
        retrain: bool,
        /// Pretrained checkpoint, required with --retrain.
        #[arg(long)]
        rs: Option<PathBuf>,
    },
}

fn load_classes(path: Option<&Path>) -> Result<ClassConfig> {
    match path {
        Some(p) => {
            let bytes = std::fs::read(p)?;
            Ok(serde_json::from_slice(&bytes)?)
        }
        None => Ok(default_classes()),
    }
}

fn config_hash(cfg: &RunConfig) -> String {
    sha256_hex(toml::to_string(cfg).unwrap_or_default().as_bytes())
}

struct Ctx {
    cfg: RunConfig,
    seed: u64,
}

fn load_ctx(cli: &Cli) -> Result<Ctx> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.validate()?;
    let seed = cli.seed.unwrap_or(cfg.training.seed);
    Ok(Ctx { cfg, seed })
}

fn require_exists(path: &Path, field: &str) -> Result<()> {
    if !path.exists() {
        return Err(AmuseError::Config {
            field: field.to_string(),
            message: format!("path '{}' does not exist", path.display()),
        });
    }
    Ok(())
}

fn load_data(ctx: &Ctx, data: &Path) -> Result<Dataset> {
    require_exists(data, "paths.data")?;
    load_dataset(data, &ctx.cfg.featurize(), &ctx.cfg.annotation_settings())
}

/// Rebuilds the model and its parameters from a full-pipeline checkpoint.
fn load_model(ctx: &Ctx, ckpt: &Path, dataset: &Dataset) -> Result<(AmuseModel, ParamSet, AdamState)> {
    let snapshot = load_snapshot(ckpt)?;
    let model_cfg = ctx.cfg.model_config(&dataset.manifest);
    verify_scalars(&snapshot.config_scalars, &model_cfg, &dataset.manifest)?;
    let model = AmuseModel::new(model_cfg, dataset.answers.clone());
    Ok((model, snapshot.params, snapshot.adam))
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenData {
            n,
            out,
            per_category,
            classes,
        } => {
            let ctx = load_ctx(cli)?;
            if let Some(p) = classes {
                require_exists(p, "classes")?;
            }
            let class_cfg = load_classes(classes.as_deref())?;
            let opts = GenOptions {
                n_clips: *n,
                seed: ctx.seed,
                per_category: *per_category,
            };
            let manifest = generate_dataset(out, &class_cfg, &opts)?;
            let mut run_manifest = RunManifest::new("gen-data", config_hash(&ctx.cfg));
            run_manifest.add_output(&out.join("manifest.json"))?;
            run_manifest.add_output(&out.join("qa.json"))?;
            run_manifest.write_beside(&out.join("dataset"))?;
            log::info!(
                "wrote {} clips / {} QA pairs to {}",
                manifest.n_clips,
                manifest.qa_count,
                out.display()
            );
            Ok(())
        }
        Command::AnnotateRhythm {
            input,
            segment_seconds,
            out,
        } => {
            let ctx = load_ctx(cli)?;
            require_exists(input, "in")?;
            let ann = ctx.cfg.annotation_settings();
            let clip = read_wav(input)?;
            let timeline = rhythm_labels(
                &clip,
                segment_seconds.unwrap_or(ann.segment_seconds),
                ann.band,
            )?;
            write_validated(out, &timeline, RHYTHM_SCHEMA)?;
            let mut m = RunManifest::new("annotate-rhythm", config_hash(&ctx.cfg));
            m.add_input(input)?;
            m.add_output(out)?;
            m.write_beside(out)?;
            Ok(())
        }
        Command::AnnotateSource {
            input,
            segment_seconds,
            classes,
            out,
        } => {
            let ctx = load_ctx(cli)?;
            require_exists(input, "in")?;
            require_exists(classes, "classes")?;
            let ann = ctx.cfg.annotation_settings();
            let class_cfg = load_classes(Some(classes))?;
            let separator = BandSeparator::new(class_cfg.separator_entries())?;
            let clip = read_wav(input)?;
            let timeline = source_timeline(
                &clip,
                segment_seconds.unwrap_or(ann.segment_seconds),
                &separator,
                ann.presence_threshold,
            )?;
            write_validated(out, &timeline, SOURCE_SCHEMA)?;
            let mut m = RunManifest::new("annotate-source", config_hash(&ctx.cfg));
            m.add_input(input)?;
            m.add_input(classes)?;
            m.add_output(out)?;
            m.write_beside(out)?;
            Ok(())
        }
        Command::Pretrain {
            data,
            epochs,
            lr,
            out,
        } => {
            let ctx = load_ctx(cli)?;
            let dataset = load_data(&ctx, data)?;
            let model_cfg = ctx.cfg.model_config(&dataset.manifest);
            let rs = amuse::predictors::RsEncoders::new(model_cfg.rs.clone());
            let mut params = ParamSet::new();
            rs.init_params(&mut params, ctx.seed);
            let lr = lr.unwrap_or(ctx.cfg.training.pretrain_lr);
            let mut adam = AdamState::new(lr);
            let report = train::pretrain(
                &rs,
                &mut params,
                &mut adam,
                &dataset,
                epochs.unwrap_or(ctx.cfg.training.pretrain_epochs),
                ctx.cfg.training.batch_size,
                lr,
                ctx.seed,
            )?;
            save_snapshot(
                out,
                &Snapshot {
                    params,
                    adam,
                    config_scalars: config_scalars(&model_cfg, &dataset.manifest),
                },
            )?;
            let mut m = RunManifest::new("pretrain", config_hash(&ctx.cfg));
            m.add_input(&data.join("manifest.json"))?;
            m.add_output(out)?;
            m.write_beside(out)?;
            log::info!(
                "pretraining done: {} steps, final loss {:.6}",
                report.step_losses.len(),
                report.step_losses.last().copied().unwrap_or(f64::NAN)
            );
            Ok(())
        }
        Command::Train {
            rs: rs_ckpt,
            out,
            data,
            epochs,
        } => {
            let ctx = load_ctx(cli)?;
            let data_dir = data.clone().unwrap_or_else(|| ctx.cfg.paths.data.clone());
            let mut dataset = load_data(&ctx, &data_dir)?;
            let model_cfg = ctx.cfg.model_config(&dataset.manifest);

            require_exists(rs_ckpt, "rs")?;
            let rs_snapshot = load_snapshot(rs_ckpt)?;
            verify_scalars(&rs_snapshot.config_scalars, &model_cfg, &dataset.manifest)?;

            let model = AmuseModel::new(model_cfg.clone(), dataset.answers.clone());
            let mut params = ParamSet::new();
            model.init_params(&mut params, ctx.seed);
            for (name, tensor) in rs_snapshot.params.iter() {
                params.set(name, tensor.clone());
            }
            train::freeze_and_cache(&model.rs, &mut params, &mut dataset)?;

            let mut adam = AdamState::new(ctx.cfg.training.finetune_lr);
            let report = train::finetune(
                &model,
                &mut params,
                &mut adam,
                &dataset,
                epochs.unwrap_or(ctx.cfg.training.finetune_epochs),
                ctx.cfg.training.batch_size,
                ctx.seed,
                &Ablation::none(),
            )?;
            save_snapshot(
                out,
                &Snapshot {
                    params,
                    adam,
                    config_scalars: config_scalars(&model_cfg, &dataset.manifest),
                },
            )?;
            let train_report = TrainRunReport {
                epoch_losses: report.epoch_losses,
                lr_trace: report.lr_trace,
            };
            let report_path = out.with_extension("train.json");
            std::fs::write(&report_path, serde_json::to_vec_pretty(&train_report)?)?;
            let mut m = RunManifest::new("train", config_hash(&ctx.cfg));
            m.add_input(rs_ckpt)?;
            m.add_input(&data_dir.join("manifest.json"))?;
            m.add_output(out)?;
            m.add_output(&report_path)?;
            m.write_beside(out)?;
            Ok(())
        }
        Command::Eval {
            ckpt,
            data,
            report,
            ablate,
        } => {
            let ctx = load_ctx(cli)?;
            let mut dataset = load_data(&ctx, data)?;
            require_exists(ckpt, "ckpt")?;
            let (model, mut params, _) = load_model(&ctx, ckpt, &dataset)?;
            train::freeze_and_cache(&model.rs, &mut params, &mut dataset)?;
            let ablation = match ablate {
                Some(names) => Ablation::from_names(
                    &names.split(',').filter(|s| !s.is_empty()).collect::<Vec<_>>(),
                )?,
                None => Ablation::none(),
            };
            let eval = train::evaluate(&model, &params, &dataset, &ablation)?;
            write_validated(report, &eval, EVAL_SCHEMA)?;
            let mut m = RunManifest::new("eval", config_hash(&ctx.cfg));
            m.add_input(ckpt)?;
            m.add_output(report)?;
            m.write_beside(report)?;
            println!("overall accuracy: {:.4}", eval.overall.accuracy);
            Ok(())
        }
        Command::Importance { ckpt, data, out } => {
            let ctx = load_ctx(cli)?;
            let mut dataset = load_data(&ctx, data)?;
            require_exists(ckpt, "ckpt")?;
            let (model, mut params, _) = load_model(&ctx, ckpt, &dataset)?;
            train::freeze_and_cache(&model.rs, &mut params, &mut dataset)?;
            let report = train::importance(&model, &params, &dataset)?;
            write_validated(out, &report, IMPORTANCE_SCHEMA)?;
            let mut m = RunManifest::new("importance", config_hash(&ctx.cfg));
            m.add_input(ckpt)?;
            m.add_output(out)?;
            m.write_beside(out)?;
            Ok(())
        }
        Command::Ablate {
            ckpt,
            data,
            modules,
            out,
            retrain,
            rs,
        } => {
            let ctx = load_ctx(cli)?;
            let mut dataset = load_data(&ctx, data)?;
            require_exists(ckpt, "ckpt")?;
            let (model, mut params, _) = load_model(&ctx, ckpt, &dataset)?;
            train::freeze_and_cache(&model.rs, &mut params, &mut dataset)?;

            let mut rows = vec![AblationRow {
                name: "full".into(),
                report: train::evaluate(&model, &params, &dataset, &Ablation::none())?,
            }];
            for name in modules.split(',').filter(|s| !s.is_empty()) {
                let ablation = Ablation::from_names(&[name])?;
                let report = if *retrain {
                    let rs_ckpt = rs.as_ref().ok_or_else(|| AmuseError::Config {
                        field: "rs".into(),
                        message: "--retrain needs --rs <pretrained checkpoint>".into(),
                    })?;
                    let rs_snapshot = load_snapshot(rs_ckpt)?;
                    let mut fresh = ParamSet::new();
                    model.init_params(&mut fresh, ctx.seed);
                    for (pname, tensor) in rs_snapshot.params.iter() {
                        fresh.set(pname, tensor.clone());
                    }
                    train::freeze_and_cache(&model.rs, &mut fresh, &mut dataset)?;
                    let mut adam = AdamState::new(ctx.cfg.training.finetune_lr);
                    train::finetune(
                        &model,
                        &mut fresh,
                        &mut adam,
                        &dataset,
                        ctx.cfg.training.finetune_epochs,
                        ctx.cfg.training.batch_size,
                        ctx.seed,
                        &ablation,
                    )?;
                    train::evaluate(&model, &fresh, &dataset, &ablation)?
                } else {
                    train::evaluate(&model, &params, &dataset, &ablation)?
                };
                rows.push(AblationRow {
                    name: name.to_string(),
                    report,
                });
            }
            let table = AblationReport { rows };
            write_validated(out, &table, ABLATION_SCHEMA)?;
            let mut m = RunManifest::new("ablate", config_hash(&ctx.cfg));
            m.add_input(ckpt)?;
            m.add_output(out)?;
            m.write_beside(out)?;
            for row in &table.rows {
                println!("{:>6}: overall {:.4}", row.name, row.report.overall.accuracy);
            }
            Ok(())
        }
    }
}

fn stage_name(command: &Command) -> &'static str {
    match command {
        Command::GenData { .. } => "gen-data",
        Command::AnnotateRhythm { .. } => "annotate-rhythm",
        Command::AnnotateSource { .. } => "annotate-source",
        Command::Pretrain { .. } => "pretrain",
        Command::Train { .. } => "train",
        Command::Eval { .. } => "eval",
        Command::Importance { .. } => "importance",
        Command::Ablate { .. } => "ablate",
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err @ AmuseError::Config { .. }) => {
            eprintln!("amuse {}: {}", stage_name(&cli.command), err);
            ExitCode::from(2)
        }
        Err(err) => {
            eprintln!("amuse {}: {}", stage_name(&cli.command), err);
            ExitCode::from(1)
        }
    }
}
