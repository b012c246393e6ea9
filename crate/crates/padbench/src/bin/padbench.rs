//! padbench: ear presentation-attack-detection benchmark CLI.
//!
//! Conventions: stdout carries machine-readable results (JSON or CSV),
//! stderr carries diagnostics. Exit codes: 0 success, 1 domain/validation
//! error, 2 usage error. Every run writes a run manifest (config echo,
//! seed, versions) next to its primary output; outputs are deterministic
//! for a fixed seed, so reruns are byte-identical.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use padbench::dataset::{
    build_manifest, split, synthesize_fixture, validate_manifest, FixtureConfig, Manifest,
    SplitSpec,
};
use padbench::error::PadError;
use padbench::metrics::{metrics_report, read_score_file, write_score_file};
use padbench::model::{
    build_padnet, head_gradient_check, load_model, predict, resolve_backbone, save_model,
    synthesize_backbone_checkpoint, train, PadNetSpec, Variant,
};
use padbench::nn::backbone::BackboneConfig;
use padbench::report::{
    audit_consistency, read_audit_csv, render_tables, TableStyle,
};
use padbench::viz::{
    build_embedder, extract_features, pca_project, scatter_plot, tsne_project, EmbedderConfig,
    EmbeddingPoint, DEFAULT_PERPLEXITY,
};

#[derive(Parser)]
#[command(
    name = "padbench",
    version,
    about = "Ear presentation-attack-detection benchmark toolkit"
)]
struct Cli {
    /// Where to write the run manifest; defaults to a path derived from
    /// the command's primary output (or ./padbench-run.json).
    #[arg(long, global = true)]
    run_manifest: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan an image directory into a manifest.
    Ingest(IngestArgs),
    /// Audit a manifest; prints findings.
    Validate(ValidateArgs),
    /// Split a manifest into train/test.
    Split(SplitArgs),
    /// Generate a synthetic desk-scale fixture.
    Fixture(FixtureArgs),
    /// Write a synthetic stand-in pretrained backbone checkpoint.
    Backbone(BackboneArgs),
    /// Train a PADNet variant on a manifest.
    Train(TrainArgs),
    /// Compute APCER/BPCER/HTER from scores (or a model plus manifest).
    Evaluate(EvaluateArgs),
    /// Render metric tables (text + CSV) from a score file.
    Report(ReportArgs),
    /// Cross-check APCER accuracies against HTER values.
    Audit(AuditArgs),
    /// Project samples to 2-D and render a scatter plot.
    Visualize(VisualizeArgs),
    /// Backprop-vs-finite-difference check on head gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Dataset root directory.
    #[arg(long)]
    root: PathBuf,
    /// Output manifest path (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitMode {
    /// Subject-disjoint random split.
    Subject,
    /// Leave-one-PAIS-out.
    Loco,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum)]
    mode: SplitMode,
    /// Held-out PAIS abbreviation (loco mode).
    #[arg(long)]
    held_out: Option<String>,
    /// Test fraction in (0,1) (subject mode).
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path for the train manifest.
    #[arg(long)]
    out_train: PathBuf,
    /// Output path for the test manifest.
    #[arg(long)]
    out_test: PathBuf,
}

#[derive(Args)]
struct FixtureArgs {
    /// Output directory for images plus manifest.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    subjects: usize,
    #[arg(long, default_value_t = 8)]
    per_subject: usize,
    /// Comma-separated PAIS abbreviations.
    #[arg(long, default_value = "Dell-GA7,S3D-GA7,Print-GA7", value_delimiter = ',')]
    pais: Vec<String>,
    #[arg(long, default_value_t = 8)]
    attacks_per_pais: usize,
    #[arg(long, default_value_t = 64)]
    image_size: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BackboneArgs {
    /// Output checkpoint path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0x7ad)]
    seed: u64,
    /// Channel width multiplier (the 1280-wide feature stays fixed).
    #[arg(long, default_value_t = 1.0)]
    width_multiplier: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Padnet1,
    Padnet2,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    /// Pretrained backbone checkpoint; defaults to $PADBENCH_CACHE/backbone.padbench.
    #[arg(long)]
    backbone: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Score file (sample_id,ground_truth,pais,score).
    #[arg(long, conflicts_with_all = ["model", "manifest"])]
    scores: Option<PathBuf>,
    /// Trained model to score a manifest with.
    #[arg(long, requires = "manifest")]
    model: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    /// Where to write the produced scores when using --model.
    #[arg(long)]
    scores_out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StyleArg {
    /// Percent error rates (lower is better).
    Error,
    /// Detection-accuracy presentation (100 − error); HTER stays an error.
    #[value(alias = "paper")]
    Accuracy,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    #[arg(long, value_enum, default_value_t = StyleArg::Error)]
    style: StyleArg,
    /// Output directory for table.txt and table.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AuditArgs {
    /// CSV of APCER accuracies in percent (key,value_percent).
    #[arg(long)]
    apcer: PathBuf,
    /// CSV of HTER errors in percent (key,value_percent).
    #[arg(long)]
    hter: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    /// Trained two-neuron embedding (bona-fide subjects).
    Embed2d,
    /// t-SNE over pooled backbone features.
    Tsne,
    /// PCA baseline over pooled backbone features.
    Pca,
}

#[derive(Args)]
struct VisualizeArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Trained model archive to take the backbone from.
    #[arg(long, conflicts_with = "backbone")]
    model: Option<PathBuf>,
    /// Bare backbone checkpoint (alternative to --model).
    #[arg(long)]
    backbone: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Output PNG path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_PERPLEXITY)]
    perplexity: f64,
    /// Embedding training epochs (embed2d).
    #[arg(long, default_value_t = 60)]
    epochs: usize,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    backbone: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = VariantArg::Padnet1)]
    variant: VariantArg,
    #[arg(long, default_value_t = 5)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version print to stdout and succeed.
            if e.kind() == clap::error::ErrorKind::DisplayHelp
                || e.kind() == clap::error::ErrorKind::DisplayVersion
            {
                print!("{e}");
                std::process::exit(0);
            }
            eprint!("{e}");
            std::process::exit(2);
        }
    };
    match run(cli) {
        Ok(all_passed) => std::process::exit(if all_passed { 0 } else { 1 }),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}

/// Writes the run manifest: command, resolved config, seed, version.
fn write_run_manifest(
    explicit: Option<&Path>,
    primary_output: Option<&Path>,
    command: &str,
    config: serde_json::Value,
    seed: Option<u64>,
) -> Result<(), PadError> {
    let path = match explicit {
        Some(p) => p.to_path_buf(),
        None => match primary_output {
            Some(out) => {
                let mut name = out.file_name().unwrap_or_default().to_os_string();
                name.push(".run.json");
                out.with_file_name(name)
            }
            None => PathBuf::from("padbench-run.json"),
        },
    };
    let manifest = serde_json::json!({
        "schema_version": 1,
        "command": command,
        "config": config,
        "seed": seed,
        "versions": { "padbench": env!("CARGO_PKG_VERSION") },
    });
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| PadError::Format(format!("run manifest: {e}")))?;
    std::fs::write(&path, text + "\n").map_err(|e| PadError::io(&path, e))
}

/// Returns Ok(true) on success, Ok(false) for "ran but found failures"
/// (validation findings, failed audit rows).
fn run(cli: Cli) -> Result<bool, PadError> {
    let run_manifest = cli.run_manifest.as_deref();
    match cli.command {
        Command::Ingest(args) => {
            let outcome = build_manifest(&args.root)?;
            outcome.manifest.save(&args.out)?;
            for skip in &outcome.skipped {
                eprintln!("skipped {}: {}", skip.path.display(), skip.reason);
            }
            write_run_manifest(
                run_manifest,
                Some(&args.out),
                "ingest",
                serde_json::json!({ "root": args.root, "out": args.out }),
                None,
            )?;
            let counts = outcome.manifest.pais_counts();
            println!(
                "{}",
                serde_json::json!({
                    "manifest": args.out,
                    "samples": outcome.manifest.samples.len(),
                    "bona_fide": outcome.manifest.bona_fide_count(),
                    "pais_counts": counts,
                    "skipped": outcome.skipped.len(),
                })
            );
            Ok(true)
        }
        Command::Validate(args) => {
            let manifest = Manifest::load(&args.manifest)?;
            let findings = validate_manifest(&manifest);
            write_run_manifest(
                run_manifest,
                None,
                "validate",
                serde_json::json!({ "manifest": args.manifest }),
                None,
            )?;
            let rendered: Vec<String> = findings.iter().map(|f| f.to_string()).collect();
            println!(
                "{}",
                serde_json::json!({ "findings": rendered, "pass": findings.is_empty() })
            );
            Ok(findings.is_empty())
        }
        Command::Split(args) => {
            let manifest = Manifest::load(&args.manifest)?;
            let spec = match args.mode {
                SplitMode::Subject => SplitSpec::RandomBySubject {
                    test_fraction: args.test_fraction.ok_or_else(|| {
                        PadError::Domain("subject mode requires --test-fraction".into())
                    })?,
                    seed: args.seed,
                },
                SplitMode::Loco => SplitSpec::LeaveOnePaisOut {
                    held_out_pais: args
                        .held_out
                        .clone()
                        .ok_or_else(|| PadError::Domain("loco mode requires --held-out".into()))?,
                    seed: args.seed,
                },
            };
            let outcome = split(&manifest, &spec)?;
            outcome.train.save(&args.out_train)?;
            outcome.test.save(&args.out_test)?;
            write_run_manifest(
                run_manifest,
                Some(&args.out_train),
                "split",
                serde_json::json!({
                    "manifest": args.manifest,
                    "mode": match args.mode { SplitMode::Subject => "subject", SplitMode::Loco => "loco" },
                    "held_out": args.held_out,
                    "test_fraction": args.test_fraction,
                    "out_train": args.out_train,
                    "out_test": args.out_test,
                }),
                Some(args.seed),
            )?;
            println!(
                "{}",
                serde_json::json!({
                    "train": { "path": args.out_train, "samples": outcome.train.samples.len() },
                    "test": { "path": args.out_test, "samples": outcome.test.samples.len() },
                })
            );
            Ok(true)
        }
        Command::Fixture(args) => {
            let config = FixtureConfig {
                n_subjects: args.subjects,
                n_bonafide_per_subject: args.per_subject,
                pais_list: args.pais.clone(),
                n_attack_per_pais: args.attacks_per_pais,
                image_size: args.image_size,
                seed: args.seed,
            };
            let outcome = synthesize_fixture(&args.out, &config)?;
            let manifest_path = args.out.join("manifest.json");
            outcome.manifest.save(&manifest_path)?;
            write_run_manifest(
                run_manifest,
                Some(&manifest_path),
                "fixture",
                serde_json::json!({
                    "out": args.out,
                    "subjects": args.subjects,
                    "per_subject": args.per_subject,
                    "pais": args.pais,
                    "attacks_per_pais": args.attacks_per_pais,
                    "image_size": args.image_size,
                }),
                Some(args.seed),
            )?;
            println!(
                "{}",
                serde_json::json!({
                    "manifest": manifest_path,
                    "samples": outcome.manifest.samples.len(),
                })
            );
            Ok(true)
        }
        Command::Backbone(args) => {
            let config = BackboneConfig {
                width_multiplier: args.width_multiplier,
                seed: args.seed,
            };
            synthesize_backbone_checkpoint(&args.out, &config)?;
            write_run_manifest(
                run_manifest,
                Some(&args.out),
                "backbone",
                serde_json::json!({ "out": args.out, "width_multiplier": args.width_multiplier }),
                Some(args.seed),
            )?;
            println!("{}", serde_json::json!({ "backbone": args.out }));
            Ok(true)
        }
        Command::Train(args) => {
            let manifest = Manifest::load(&args.manifest)?;
            let file: TrainFileConfig = match &args.config {
                Some(path) => TrainFileConfig::load(path)?,
                None => TrainFileConfig::default(),
            };
            let variant = args
                .variant
                .map(|v| match v {
                    VariantArg::Padnet1 => Variant::PadNet1,
                    VariantArg::Padnet2 => Variant::PadNet2,
                })
                .or(file.variant)
                .ok_or_else(|| {
                    PadError::Config("no variant: pass --variant or set it in --config".into())
                })?;
            let seed = args.seed.or(file.seed).unwrap_or(0);
            let mut spec = match variant {
                Variant::PadNet1 => PadNetSpec::padnet1(seed),
                Variant::PadNet2 => PadNetSpec::padnet2(seed),
            };
            if let Some(epochs) = args.epochs.or(file.epochs) {
                spec.train.epochs = epochs;
            }
            if let Some(batch) = args.batch_size.or(file.batch_size) {
                spec.train.batch_size = batch;
            }
            if let Some(lr) = args.learning_rate.or(file.learning_rate) {
                spec.train.learning_rate = lr;
            }
            let backbone_path = args.backbone.clone().or(file.backbone.clone());
            let backbone = resolve_backbone(backbone_path.as_deref())?;
            let mut model = build_padnet(&spec, backbone)?;
            let report = model.parameter_report();
            eprintln!(
                "parameters: backbone frozen {}, backbone trainable {}, head {}",
                report.backbone_frozen, report.backbone_trainable, report.head_trainable
            );
            let history = train(&mut model, &manifest, &spec.train.clone())?;
            save_model(&model, &args.out)?;
            write_run_manifest(
                run_manifest,
                Some(&args.out),
                "train",
                serde_json::json!({
                    "manifest": args.manifest,
                    "variant": variant.as_str(),
                    "train_config": spec.train,
                    "parameter_report": report,
                    "history": history,
                    "out": args.out,
                }),
                Some(seed),
            )?;
            println!(
                "{}",
                serde_json::json!({
                    "model": args.out,
                    "epochs": history.len(),
                    "final": history.last(),
                })
            );
            Ok(true)
        }
        Command::Evaluate(args) => {
            let records = match (&args.scores, &args.model, &args.manifest) {
                (Some(path), None, None) => read_score_file(path)?,
                (None, Some(model_path), Some(manifest_path)) => {
                    let manifest = Manifest::load(manifest_path)?;
                    let mut model = load_model(model_path)?;
                    let records = predict(&mut model, &manifest.samples)?;
                    if let Some(out) = &args.scores_out {
                        write_score_file(out, &records)?;
                    }
                    records
                }
                _ => {
                    return Err(PadError::Domain(
                        "pass either --scores or --model with --manifest".into(),
                    ))
                }
            };
            let report = metrics_report(&records, args.tau)?;
            write_run_manifest(
                run_manifest,
                args.scores_out.as_deref(),
                "evaluate",
                serde_json::json!({
                    "scores": args.scores,
                    "model": args.model,
                    "manifest": args.manifest,
                    "tau": args.tau,
                }),
                None,
            )?;
            println!("{}", serde_json::to_string_pretty(&report).unwrap());
            Ok(true)
        }
        Command::Report(args) => {
            let records = read_score_file(&args.scores)?;
            let report = metrics_report(&records, args.tau)?;
            let style = match args.style {
                StyleArg::Error => TableStyle::ErrorRates,
                StyleArg::Accuracy => TableStyle::Accuracy,
            };
            let rendered = render_tables(&report, style);
            std::fs::create_dir_all(&args.out).map_err(|e| PadError::io(&args.out, e))?;
            let txt = args.out.join("table.txt");
            let csv = args.out.join("table.csv");
            std::fs::write(&txt, &rendered.text).map_err(|e| PadError::io(&txt, e))?;
            std::fs::write(&csv, &rendered.csv).map_err(|e| PadError::io(&csv, e))?;
            write_run_manifest(
                run_manifest,
                Some(&csv),
                "report",
                serde_json::json!({
                    "scores": args.scores,
                    "tau": args.tau,
                    "style": match args.style { StyleArg::Error => "error", StyleArg::Accuracy => "accuracy" },
                    "out": args.out,
                }),
                None,
            )?;
            print!("{}", rendered.csv);
            eprintln!("wrote {} and {}", txt.display(), csv.display());
            Ok(true)
        }
        Command::Audit(args) => {
            let acc = read_audit_csv(&args.apcer)?;
            let hter = read_audit_csv(&args.hter)?;
            let findings = audit_consistency(&acc, &hter)?;
            write_run_manifest(
                run_manifest,
                None,
                "audit",
                serde_json::json!({ "apcer": args.apcer, "hter": args.hter }),
                None,
            )?;
            println!("{}", serde_json::to_string_pretty(&findings).unwrap());
            let all_pass = findings.iter().all(|f| f.pass);
            for f in findings.iter().filter(|f| !f.pass) {
                eprintln!(
                    "inconsistent: {} expected HTER {:.3} reported {:.3}",
                    f.key, f.expected_hter, f.reported_hter
                );
            }
            Ok(all_pass)
        }
        Command::Visualize(args) => {
            let manifest = Manifest::load(&args.manifest)?;
            let mut backbone = match (&args.model, &args.backbone) {
                (Some(model_path), None) => load_model(model_path)?.backbone,
                _ => resolve_backbone(args.backbone.as_deref())?,
            };
            let points: Vec<EmbeddingPoint> = match args.method {
                MethodArg::Embed2d => {
                    let config = EmbedderConfig {
                        epochs: args.epochs,
                        seed: args.seed,
                        ..EmbedderConfig::default()
                    };
                    let (_, points) = build_embedder(&mut backbone, &manifest, &config)?;
                    points
                }
                MethodArg::Tsne | MethodArg::Pca => {
                    let samples: Vec<&padbench::dataset::SampleRecord> =
                        manifest.samples.iter().collect();
                    let features = extract_features(&mut backbone, &samples)?;
                    let rows: Vec<Vec<f64>> =
                        features.rows().into_iter().map(|r| r.to_vec()).collect();
                    let coords = match args.method {
                        MethodArg::Tsne => tsne_project(&rows, args.perplexity, args.seed)?,
                        _ => pca_project(&rows)?,
                    };
                    samples
                        .iter()
                        .zip(coords)
                        .map(|(s, coords)| EmbeddingPoint {
                            sample_id: s.path.display().to_string(),
                            coords,
                            label: s
                                .pais
                                .clone()
                                .or_else(|| s.subject_id.clone())
                                .unwrap_or_else(|| "unlabeled".into()),
                        })
                        .collect()
                }
            };
            scatter_plot(&points, &args.out)?;
            write_run_manifest(
                run_manifest,
                Some(&args.out),
                "visualize",
                serde_json::json!({
                    "manifest": args.manifest,
                    "method": match args.method {
                        MethodArg::Embed2d => "embed2d",
                        MethodArg::Tsne => "tsne",
                        MethodArg::Pca => "pca",
                    },
                    "perplexity": args.perplexity,
                    "out": args.out,
                }),
                Some(args.seed),
            )?;
            println!(
                "{}",
                serde_json::json!({ "plot": args.out, "points": points.len() })
            );
            Ok(true)
        }
        Command::Gradcheck(args) => {
            let manifest = Manifest::load(&args.manifest)?;
            let mut model = match (&args.model, &args.backbone) {
                (Some(path), _) => load_model(path)?,
                (None, explicit) => {
                    let backbone = resolve_backbone(explicit.as_deref())?;
                    let spec = match args.variant {
                        VariantArg::Padnet1 => PadNetSpec::padnet1(args.seed),
                        VariantArg::Padnet2 => PadNetSpec::padnet2(args.seed),
                    };
                    build_padnet(&spec, backbone)?
                }
            };
            let entries = head_gradient_check(&mut model, &manifest, args.count, args.seed)?;
            write_run_manifest(
                run_manifest,
                None,
                "gradcheck",
                serde_json::json!({ "manifest": args.manifest, "count": args.count }),
                Some(args.seed),
            )?;
            println!("{}", serde_json::to_string_pretty(&entries).unwrap());
            let ok = entries.iter().all(|e| e.rel_error <= 1e-3);
            Ok(ok)
        }
    }
}

/// Training config file: human-editable TOML with a schema_version key.
#[derive(Debug, Default, serde::Deserialize)]
struct TrainFileConfig {
    #[serde(default)]
    schema_version: Option<u32>,
    variant: Option<Variant>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    learning_rate: Option<f64>,
    seed: Option<u64>,
    backbone: Option<PathBuf>,
}

impl TrainFileConfig {
    fn load(path: &Path) -> Result<Self, PadError> {
        let text = std::fs::read_to_string(path).map_err(|e| PadError::io(path, e))?;
        let config: TrainFileConfig = toml::from_str(&text)
            .map_err(|e| PadError::Format(format!("{}: {e}", path.display())))?;
        match config.schema_version {
            Some(1) => Ok(config),
            Some(v) => Err(PadError::Format(format!(
                "{}: unsupported config schema_version {v} (expected 1)",
                path.display()
            ))),
            None => Err(PadError::Format(format!(
                "{}: config file must declare schema_version = 1",
                path.display()
            ))),
        }
    }
}
