//! `augeval` subcommands. Exit codes: 0 success, 1 invalid input or usage,
//! 2 runtime failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use super::*;
use crate::corpus::{split_durations, write_metadata};
use crate::emotionmap::MultiQuadrantPolicy;
use crate::generators::{GeneratorMode, GeneratorProfile, ManifestEntry, Provenance, MANIFEST_FILE};

#[derive(Parser, Debug)]
#[command(name = "augeval", version, about = "Evaluate music generators through classifier data augmentation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Validate metadata tables and summarise split and class durations.
    Ingest {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        validation: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, value_enum, default_value = "mood-theme")]
        task: TaskArg,
        #[arg(long)]
        mapping: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Map mood/theme tags of one metadata table to emotion quadrants.
    Relabel {
        #[arg(long)]
        metadata: PathBuf,
        #[arg(long, default_value = "train")]
        split: String,
        #[arg(long)]
        mapping: Option<PathBuf>,
        /// Keep tracks spanning several quadrants as multi-label.
        #[arg(long)]
        keep_multi: bool,
        /// Output metadata table; the drop report is written beside it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the separable synthetic corpus.
    SynthCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long, default_value_t = 2.0)]
        hours: f64,
        #[arg(long, default_value_t = 16000)]
        rate: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train one classifier on the train split (first configured seed).
    TrainClassifier {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train the configured model generator and write its checkpoint.
    TrainGenerator {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build an augmentation plan from metadata only.
    Plan {
        #[arg(long)]
        config: PathBuf,
        /// Overrides policy.budget_fraction.
        #[arg(long)]
        policy: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Execute a plan and write samples plus manifest.
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// Existing plan; built from the config when absent.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Baseline plus augmented runs with the configured generator.
    AugmentRun {
        #[arg(long)]
        config: PathBuf,
    },
    /// Baseline runs only.
    BaselineRun {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compare stored reports.
    Compare {
        #[arg(long)]
        baseline: PathBuf,
        /// `name=report.json`, repeatable; the file stem names bare paths.
        #[arg(long, required = true)]
        augmented: Vec<String>,
        #[arg(long)]
        absolute: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify generated samples with a trained classifier.
    ClassifyGenerated {
        #[arg(long)]
        model: PathBuf,
        /// Generator output directory (with manifest) or `<class>/*.wav` tree.
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rebuild the comparison table of a run directory from its reports.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
pub enum TaskArg {
    MoodTheme,
    Emotional,
}

impl From<TaskArg> for LabelTask {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::MoodTheme => LabelTask::MoodTheme,
            TaskArg::Emotional => LabelTask::Emotional,
        }
    }
}

/// 1 for problems with the inputs, 2 for failures while running.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::InvalidArgument(_)
        | Error::MissingColumn { .. }
        | Error::Row { .. }
        | Error::UnknownClass { .. }
        | Error::Mismatch(_)
        | Error::InsufficientSources { .. }
        | Error::Checkpoint(_)
        | Error::Json(_) => 1,
        Error::Io { .. } | Error::Decode { .. } | Error::Diverged { .. } | Error::Generation { .. } | Error::Trial { .. } => 2,
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(d) = path.parent() {
        if !d.as_os_str().is_empty() {
            fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let cfg = ExperimentConfig::load(path)?;
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Ingest {
            train,
            validation,
            test,
            task,
            mapping,
            out,
        } => {
            let cfg = CorpusConfig {
                train,
                validation,
                test,
                task: task.into(),
                mapping,
                multi_quadrant: MultiQuadrantPolicy::default(),
            };
            let corpus = prepare_corpus(&cfg, Some(&out))?;
            let all: Vec<TrackRecord> = Split::ALL.iter().flat_map(|s| corpus.split(*s).to_vec()).collect();
            let missing: Vec<String> = all
                .iter()
                .filter(|r| !r.audio_path.is_file())
                .map(|r| r.audio_path.display().to_string())
                .collect();
            if !missing.is_empty() {
                log::warn!("{} audio files are missing, e.g. {}", missing.len(), missing[0]);
            }
            let hours = write_class_durations(&out, &corpus)?;
            let summary = serde_json::json!({
                "split_hours": split_durations(&all),
                "tracks": all.len(),
                "missing_audio": missing.len(),
                "vocabulary": corpus.vocabulary,
                "class_hours": hours,
            });
            write_json(&out.join("summary.json"), &summary)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(())
        }
        Command::Relabel {
            metadata,
            split,
            mapping,
            keep_multi,
            out,
        } => {
            let split: Split = split.parse()?;
            let records = load_metadata(&metadata, split)?;
            let map = load_mapping(&mapping.unwrap_or_else(|| PathBuf::from(DEFAULT_MAPPING_PATH)))?;
            let policy = if keep_multi {
                MultiQuadrantPolicy::KeepMultiLabel
            } else {
                MultiQuadrantPolicy::Drop
            };
            let r = relabel(&records, &map, policy);
            write_metadata(&out, &r.records)?;
            write_drop_report(&out.with_extension("dropped.jsonl"), &r.dropped)?;
            println!("kept {}, dropped {} of {}", r.records.len(), r.dropped.len(), records.len());
            Ok(())
        }
        Command::SynthCorpus {
            out,
            classes,
            hours,
            rate,
            seed,
        } => {
            let c = make_synthetic_corpus(&out, classes, hours, rate, seed)?;
            write_json(&out.join("corpus.json"), &c)?;
            println!(
                "{} tracks written to {}; nearest-centroid accuracy {:.3}",
                c.records.len(),
                out.display(),
                c.centroid_accuracy
            );
            Ok(())
        }
        Command::TrainClassifier { config } => {
            let cfg = load_config(&config)?;
            let exp = Experiment::prepare(&cfg)?;
            let dir = exp.output_dir().join("classifier");
            let t = exp.train_trial(&exp.train, cfg.experiment.seeds[0], &dir)?;
            println!("{}", t.test.to_json()?);
            Ok(())
        }
        Command::TrainGenerator { config, out } => {
            let cfg = load_config(&config)?;
            let corpus = prepare_corpus(&cfg.corpus, None)?;
            let ckpt = train_generator(&cfg.generator, &corpus)?;
            let path = out.unwrap_or_else(|| cfg.experiment.output_dir.join("generator.json"));
            if let Some(d) = path.parent() {
                fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
            }
            ckpt.save(&path)?;
            println!("generator checkpoint written to {}", path.display());
            Ok(())
        }
        Command::Plan { config, policy, out } => {
            let mut cfg = load_config(&config)?;
            if let Some(f) = policy {
                cfg.policy.budget_fraction = f;
                cfg.policy.validate()?;
            }
            let corpus = prepare_corpus(&cfg.corpus, None)?;
            let profile = cfg.generator.resolved_profile(cfg.classifier.mel.sample_rate_hz);
            let plan = build_plan(&corpus.train, &corpus.vocabulary, &cfg.policy, &profile)?;
            let path = out.unwrap_or_else(|| cfg.experiment.output_dir.join(PLAN_FILE));
            if let Some(d) = path.parent() {
                fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
            }
            plan.save(&path)?;
            println!(
                "{} entries, {:.3} h planned of a {:.3} h budget -> {}",
                plan.entries.len(),
                plan.total_duration_s / 3600.0,
                plan.budget_s / 3600.0,
                path.display()
            );
            Ok(())
        }
        Command::Generate { config, plan, out } => {
            let cfg = load_config(&config)?;
            let corpus = prepare_corpus(&cfg.corpus, None)?;
            let generator = build_generator(&cfg, &corpus)?;
            let plan = match plan {
                Some(p) => AugmentationPlan::load(&p)?,
                None => build_plan(&corpus.train, &corpus.vocabulary, &cfg.policy, generator.profile())?,
            };
            let rate = generator.profile().sample_rate_hz;
            let paths: HashMap<String, PathBuf> =
                corpus.train.iter().map(|r| (r.track_id.clone(), r.audio_path.clone())).collect();
            let sources = |id: &str| -> Result<crate::corpus::AudioBuffer> {
                let p = paths.get(id).ok_or_else(|| Error::invalid(format!("unknown source track {id}")))?;
                load_audio(p, rate)
            };
            let dir = out.unwrap_or_else(|| cfg.experiment.output_dir.join("generated"));
            let ex = execute_plan(&plan, generator.as_ref(), &sources, rate, Some(&dir))?;
            plan.save(&dir.join(PLAN_FILE))?;
            println!(
                "{} samples written to {} ({} failed)",
                ex.samples.len(),
                dir.display(),
                ex.shortfall.failed.len()
            );
            Ok(())
        }
        Command::AugmentRun { config } => {
            let cfg = load_config(&config)?;
            let exp = Experiment::prepare(&cfg)?;
            let base = exp.run_baseline()?;
            let generator = build_generator(&exp.config, &exp.corpus)?;
            let aug = exp.run_augmented(generator.as_ref())?;
            let table = compare(&base.test, &[(aug.name.clone(), aug.test.clone())], cfg.experiment.highlight)?;
            write_table(exp.output_dir(), &table)?;
            print!("{}", table.render_text());
            Ok(())
        }
        Command::BaselineRun { config } => {
            let cfg = load_config(&config)?;
            let out = run_baseline(&cfg)?;
            println!("{}", out.test.to_json()?);
            Ok(())
        }
        Command::Compare {
            baseline,
            augmented,
            absolute,
            out,
        } => {
            let base = load_report(&baseline)?;
            let mut methods = Vec::new();
            for spec in augmented {
                let (name, path) = match spec.split_once('=') {
                    Some((n, p)) => (n.to_string(), PathBuf::from(p)),
                    None => {
                        let p = PathBuf::from(&spec);
                        let n = p.file_stem().and_then(|s| s.to_str()).unwrap_or("augmented").to_string();
                        (n, p)
                    }
                };
                methods.push((name, load_report(&path)?));
            }
            let mode = if absolute {
                HighlightMode::Absolute
            } else {
                HighlightMode::Relative
            };
            let table = compare(&base, &methods, mode)?;
            if let Some(dir) = out {
                write_table(&dir, &table)?;
            }
            print!("{}", table.to_csv());
            print!("{}", table.render_text());
            Ok(())
        }
        Command::ClassifyGenerated { model, samples, out } => {
            let model = TrainedModel::load(&model)?;
            let loaded = load_samples(&samples, &model)?;
            let c = classify_generated(&model, &loaded)?;
            write_classification(&out, &model.vocabulary, &c)?;
            print!("{}", c.confusion.to_csv(model.vocabulary.classes()));
            Ok(())
        }
        Command::Report { run } => {
            let base = load_report(&run.join("baseline").join(REPORT_FILE))?;
            let mut methods = Vec::new();
            let mut dirs: Vec<PathBuf> = fs::read_dir(&run)
                .map_err(|e| Error::io(&run, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("augmented-")))
                .collect();
            dirs.sort();
            for d in dirs {
                let name = d.file_name().and_then(|n| n.to_str()).unwrap_or_default()["augmented-".len()..].to_string();
                methods.push((name, load_report(&d.join(REPORT_FILE))?));
            }
            let resolved = run.join(RESOLVED_CONFIG_FILE);
            let mode = if resolved.is_file() {
                ExperimentConfig::load(&resolved)?.experiment.highlight
            } else {
                HighlightMode::Relative
            };
            let table = compare(&base, &methods, mode)?;
            write_table(&run, &table)?;
            print!("{}", table.render_text());
            Ok(())
        }
    }
}

fn write_table(dir: &Path, table: &ComparisonTable) -> Result<()> {
    write_text(&dir.join("comparison.csv"), &table.to_csv())?;
    write_text(&dir.join("comparison_table.csv"), &table.to_table_csv())?;
    write_text(&dir.join("comparison.txt"), &table.render_text())?;
    write_json(&dir.join("comparison.json"), table)
}

/// Reads a generator output directory through its manifest, or a
/// `<class>/*.wav` tree.
fn load_samples(dir: &Path, model: &TrainedModel) -> Result<Vec<GeneratedSample>> {
    let rate = model.config.mel.sample_rate_hz;
    let manifest = dir.join(MANIFEST_FILE);
    if manifest.is_file() {
        let text = fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let e: ManifestEntry = serde_json::from_str(line).map_err(|err| Error::Row {
                path: manifest.clone(),
                line: i + 1,
                message: err.to_string(),
            })?;
            let label = model
                .vocabulary
                .index_of(&e.class)
                .ok_or_else(|| model.vocabulary.unknown_class(&e.class))?;
            out.push(GeneratedSample::finish(
                load_audio(&dir.join(&e.path), rate)?,
                label,
                Provenance {
                    generator: e.generator,
                    source_id: e.source_id,
                    seed: e.seed,
                    mode: e.mode,
                },
                e.flags,
            ));
        }
        return Ok(out);
    }
    let profile = GeneratorProfile {
        name: "external".into(),
        mode: GeneratorMode::External,
        sample_length_s: 1.0,
        prime_length_s: 0.0,
        sample_rate_hz: rate,
    };
    external_scan(dir, &model.vocabulary, &profile)
}
