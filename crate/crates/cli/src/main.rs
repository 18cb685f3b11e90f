//! `epilnet`: train, evaluate, serve, load-test, simulate, and plot.
//!
//! Every subcommand prints its fully resolved configuration before doing
//! anything, so runs are auditable and reproducible from the console log
//! alone. On failure the process prints one `error: ...` line to stderr
//! and exits nonzero; usage mistakes exit with code 2 (clap's default).

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use epilnet_alert::{
    run_scenario, ContactBook, EventSink, HttpEventSink, HttpPredictor, LocationProviders,
    Predictor, QueueOnlySink, ScenarioConfig,
};
use epilnet_core::checkpoint;
use epilnet_core::data::{load_csv, map_group, EegDataset, GroupMode, Split};
use epilnet_core::model::build_epilnet;
use epilnet_core::plot::render_eeg_svg;
use epilnet_core::train::{accuracy_curve_csv, evaluate, train, TrainConfig};
use epilnet_load::{run_load, summarize, write_raw_log, LoadConfig};
use epilnet_serve::{AppState, EventStore, LoadedModel};

#[derive(Parser)]
#[command(
    name = "epilnet",
    version,
    about = "1D residual EEG seizure classifier: training, serving, load testing, and an alert-pipeline simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on the EEG dataset and write a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split: accuracy + confusion matrix.
    Eval(EvalArgs),
    /// Serve predictions and patient history over HTTP.
    Serve(ServeArgs),
    /// Run the closed-loop load protocol against a service.
    Loadtest(LoadtestArgs),
    /// Run a scripted alert-pipeline scenario on the virtual clock.
    Simulate(SimulateArgs),
    /// Render EEG windows as SVG plots.
    Plot(PlotArgs),
}

#[derive(Args)]
#[command(after_help = "\
Input CSV: one header row, an optional leading id column, 178 numeric \
sample columns, and an integer label 1..=5 (classes A..E).\n\
Outputs under the run directory: model.ckpt (EPNT1 checkpoint), epochs.csv \
(epoch,train_acc,val_acc,best), split.txt (one `<record index> <tag>` line \
per record).")]
struct TrainArgs {
    /// Dataset CSV (header row, optional id column, 178 samples + label).
    #[arg(long, env = "EPILNET_DATA")]
    data: PathBuf,
    /// Task grouping: three (healthy/pre-ictal/ictal) or five (A..E).
    #[arg(long, default_value = "five")]
    group: GroupMode,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Stage width multiplier (1.0 = full 64/128/256/512).
    #[arg(long, default_value_t = 1.0)]
    width: f64,
    /// Train/validation/test ratios.
    #[arg(long, default_value = "0.76,0.12,0.12", value_parser = parse_ratios)]
    ratios: (f64, f64, f64),
    /// Seed for the stratified split (defaults to --seed).
    #[arg(long)]
    split_seed: Option<u64>,
    /// Worker threads for validation/test evaluation.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long)]
    no_shuffle: bool,
    /// Checkpoint output path (defaults to <run-dir>/model.ckpt).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output directory (defaults to runs/train-<timestamp>-seed<seed>).
    #[arg(long)]
    run_dir: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, env = "EPILNET_DATA")]
    data: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    /// Split manifest written by `train`; when absent the split is
    /// recomputed from the checkpoint's recorded ratios and seed.
    #[arg(long)]
    split_manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Patient event store (JSON lines), created if missing.
    #[arg(long, default_value = "events.jsonl")]
    events: PathBuf,
    #[arg(long, default_value_t = 30)]
    timeout_secs: u64,
}

#[derive(Args)]
#[command(after_help = "\
Writes one raw log per class (CSV: label,start_us,latency_us,status) and a \
summary.txt with per-class Samples/Average/Min/Max/Std. dev./Throughput \
plus error counts and p99, all recomputable exactly from the raw logs.")]
struct LoadtestArgs {
    #[arg(long)]
    url: String,
    #[arg(long, default_value_t = 100)]
    clients: usize,
    /// Sustained load window, seconds.
    #[arg(long, default_value_t = 60)]
    duration: u64,
    /// Ramp-up window, seconds.
    #[arg(long, default_value_t = 10)]
    rampup: u64,
    /// Payload class A..E, or `all` for one run per class.
    #[arg(long, default_value = "all")]
    class: String,
    /// Dataset CSV to draw request bodies from.
    #[arg(long, env = "EPILNET_DATA", required_unless_present = "synthetic")]
    data: Option<PathBuf>,
    /// Draw payloads from the synthetic generator instead of a file.
    #[arg(long)]
    synthetic: bool,
    /// Cap on distinct payload windows per class.
    #[arg(long, default_value_t = 64)]
    payload_limit: usize,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Skip the reachability preflight.
    #[arg(long)]
    no_preflight: bool,
}

#[derive(Args)]
#[command(after_help = "\
Script grammar, one command per line (# starts a comment):\n\
  start | stop | net-loc <on|off> | gps <on|off>\n\
  at <seconds> inject <healthy|pre-ictal|ictal|inter-ictal>\n\
  at <seconds> window <row-index>\n\
Explicit times must be non-decreasing. `window` submissions obey the duty \
cycle (active the first minute of each five-minute slot) and need --url \
and --data.\n\
Contacts file: JSON lines like \
{\"name\":\"ana\",\"phone\":\"+1-555-0100\",\"role\":\"caretaker\"} \
(roles: caretaker|doctor|hospital). Notification log: JSON lines, ordered \
by virtual time.")]
struct SimulateArgs {
    /// Scenario script file.
    #[arg(long)]
    script: PathBuf,
    /// Contacts file (JSON lines: {"name","phone","role"}).
    #[arg(long)]
    contacts: PathBuf,
    #[arg(long, default_value = "patient-0")]
    patient: String,
    /// Inference service base URL; omit to run offline (events are queued
    /// and reported, `window` commands need the URL).
    #[arg(long)]
    url: Option<String>,
    /// Dataset CSV backing `window <row>` references.
    #[arg(long, env = "EPILNET_DATA")]
    data: Option<PathBuf>,
    /// Notification log output (JSON lines).
    #[arg(long, default_value = "notifications.jsonl")]
    out: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long, env = "EPILNET_DATA")]
    data: PathBuf,
    /// Plot one record by zero-based row index.
    #[arg(long, conflicts_with_all = ["label", "all_classes"])]
    row: Option<usize>,
    /// Plot the first record of one label (A..E).
    #[arg(long, conflicts_with = "all_classes")]
    label: Option<String>,
    /// Plot the first record of every label.
    #[arg(long)]
    all_classes: bool,
    /// Output file (single plot; defaults to eeg-plot.svg).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output directory (with --all-classes; defaults to plots/).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn parse_ratios(s: &str) -> Result<(f64, f64, f64), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated ratios, got {s:?}"));
    }
    let mut values = [0.0f64; 3];
    for (v, p) in values.iter_mut().zip(&parts) {
        *v = p
            .trim()
            .parse()
            .map_err(|_| format!("non-numeric ratio {p:?}"))?;
    }
    Ok((values[0], values[1], values[2]))
}

fn label_letter_to_u8(label: &str) -> Result<u8> {
    match label {
        "A" | "a" => Ok(1),
        "B" | "b" => Ok(2),
        "C" | "c" => Ok(3),
        "D" | "d" => Ok(4),
        "E" | "e" => Ok(5),
        other => bail!("unknown class {other:?} (use A..E)"),
    }
}

fn unix_seconds() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn default_run_dir(prefix: &str, seed: Option<u64>) -> PathBuf {
    let mut name = format!("{prefix}-{}", unix_seconds());
    if let Some(seed) = seed {
        name.push_str(&format!("-seed{seed}"));
    }
    PathBuf::from("runs").join(name)
}

fn print_config(name: &str, entries: &[(&str, String)]) {
    println!("== {name} configuration ==");
    for (key, value) in entries {
        println!("  {key} = {value}");
    }
}

fn load_grouped(path: &Path, mode: GroupMode) -> Result<EegDataset> {
    let dataset = load_csv(path)
        .with_context(|| format!("loading dataset {}", path.display()))?;
    let histogram = dataset.label_histogram();
    println!(
        "loaded {} records from {} (per-label counts {:?})",
        dataset.len(),
        path.display(),
        histogram
    );
    if dataset.len() == epilnet_core::data::OFFICIAL_RECORD_COUNT {
        dataset
            .verify_official_counts()
            .context("file has the official record count but unexpected per-label counts")?;
    } else {
        println!(
            "note: {} records differ from the official {}-record file",
            dataset.len(),
            epilnet_core::data::OFFICIAL_RECORD_COUNT
        );
    }
    Ok(map_group(dataset, mode))
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let split_seed = args.split_seed.unwrap_or(args.seed);
    let run_dir = args
        .run_dir
        .clone()
        .unwrap_or_else(|| default_run_dir("train", Some(args.seed)));
    std::fs::create_dir_all(&run_dir)
        .with_context(|| format!("creating run dir {}", run_dir.display()))?;
    let ckpt_path = args.out.clone().unwrap_or_else(|| run_dir.join("model.ckpt"));

    print_config(
        "train",
        &[
            ("data", args.data.display().to_string()),
            ("group", args.group.to_string()),
            ("epochs", args.epochs.to_string()),
            ("batch", args.batch.to_string()),
            ("seed", args.seed.to_string()),
            ("lr", args.lr.to_string()),
            ("width", args.width.to_string()),
            (
                "ratios",
                format!("{},{},{}", args.ratios.0, args.ratios.1, args.ratios.2),
            ),
            ("split_seed", split_seed.to_string()),
            ("threads", args.threads.to_string()),
            ("shuffle", (!args.no_shuffle).to_string()),
            ("run_dir", run_dir.display().to_string()),
            ("checkpoint", ckpt_path.display().to_string()),
        ],
    );

    let mut dataset = load_grouped(&args.data, args.group)?;
    dataset
        .stratified_split(args.ratios, split_seed)
        .context("stratified split")?;
    let (n_train, n_val, n_test) = dataset.split_sizes()?;
    println!("split sizes: train {n_train}, val {n_val}, test {n_test}");
    dataset.save_split_manifest(run_dir.join("split.txt"))?;
    let stats = dataset.compute_norm_stats()?;
    println!("normalization: mean {:.6}, std {:.6}", stats.mean, stats.std);

    let mut model = build_epilnet::<f32>(dataset.mapping.class_count(), args.width, args.seed)?;
    println!(
        "model: {} trainable parameters ({} serialized values)",
        model.trainable_parameter_count(),
        model.total_value_count()
    );

    let config = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch,
        seed: args.seed,
        learning_rate: args.lr,
        shuffle: !args.no_shuffle,
        eval_threads: args.threads,
        split_ratios: args.ratios,
        split_seed,
    };
    let outcome = train(&mut model, &dataset, &config, Some(&ckpt_path))?;
    for report in &outcome.reports {
        println!(
            "epoch {:>3}: train loss {:.4}, train acc {:.4}, val acc {:.4} ({:.1}s)",
            report.epoch,
            report.train_loss,
            report.train_accuracy,
            report.val_accuracy,
            report.wall_secs
        );
    }
    std::fs::write(
        run_dir.join("epochs.csv"),
        accuracy_curve_csv(&outcome.reports, outcome.best_epoch),
    )
    .context("writing epoch report")?;
    println!(
        "best epoch {} (val acc {:.4}), checkpoint {} digest {}",
        outcome.best_epoch,
        outcome.best_val_accuracy,
        ckpt_path.display(),
        outcome.best.digest()
    );

    // Test accuracy of the best snapshot.
    let best_model = outcome.best.to_model()?;
    let (test_acc, matrix) = evaluate(&best_model, &dataset, Split::Test, args.threads)?;
    println!("test accuracy {test_acc:.4}");
    println!("{matrix}");
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    print_config(
        "eval",
        &[
            ("model", args.model.display().to_string()),
            ("data", args.data.display().to_string()),
            ("split", args.split.clone()),
            (
                "split_manifest",
                args.split_manifest
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_else(|| "(recomputed from checkpoint)".into()),
            ),
            ("threads", args.threads.to_string()),
        ],
    );
    let split: Split = args
        .split
        .parse()
        .map_err(|e: String| anyhow::anyhow!(e))?;
    let ckpt = checkpoint::load(&args.model)
        .with_context(|| format!("loading checkpoint {}", args.model.display()))?;
    println!(
        "checkpoint: {} ({}, {} classes), digest {}",
        args.model.display(),
        ckpt.header.group_mode,
        ckpt.header.class_names.len(),
        ckpt.digest()
    );
    let model = ckpt.to_model()?;

    let mut dataset = load_grouped(&args.data, ckpt.header.group_mode)?;
    match (&args.split_manifest, &ckpt.header.train_meta) {
        (Some(path), _) => dataset.load_split_manifest(path)?,
        (None, Some(meta)) => {
            dataset.stratified_split(meta.split_ratios, meta.split_seed)?;
            println!(
                "split recomputed from checkpoint (ratios {:?}, seed {})",
                meta.split_ratios, meta.split_seed
            );
        }
        (None, None) => bail!(
            "checkpoint carries no split provenance; pass --split-manifest from the training run"
        ),
    }
    dataset.norm = Some(ckpt.header.normalization);

    let (accuracy, matrix) = evaluate(&model, &dataset, split, args.threads)?;
    println!("{split} accuracy {accuracy:.4}");
    println!("{matrix}");
    Ok(())
}

fn cmd_serve(args: ServeArgs) -> Result<()> {
    print_config(
        "serve",
        &[
            ("model", args.model.display().to_string()),
            ("host", args.host.clone()),
            ("port", args.port.to_string()),
            ("events", args.events.display().to_string()),
            ("timeout_secs", args.timeout_secs.to_string()),
        ],
    );
    let ckpt = checkpoint::load(&args.model)
        .with_context(|| format!("loading checkpoint {}", args.model.display()))?;
    let loaded = LoadedModel::from_checkpoint(&ckpt)?;
    println!(
        "serving {} model, digest {}",
        loaded.group_mode, loaded.digest
    );
    let events = EventStore::open(&args.events)?;
    println!(
        "event store {} ({} events)",
        args.events.display(),
        events.total_events()
    );
    let state = Arc::new(AppState::with_model(events, loaded));
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .with_context(|| format!("invalid listen address {}:{}", args.host, args.port))?;
    epilnet_serve::run_blocking(addr, state, Duration::from_secs(args.timeout_secs))?;
    Ok(())
}

fn loadtest_payloads(args: &LoadtestArgs, label: u8) -> Result<Vec<Vec<f64>>> {
    let windows: Vec<Vec<f64>> = if args.synthetic {
        epilnet_core::synthetic::synthetic_records(args.payload_limit, 7)
            .into_iter()
            .filter(|r| r.label == label)
            .map(|r| r.samples.iter().map(|&v| v as f64).collect())
            .collect()
    } else {
        let path = args.data.as_ref().expect("clap enforces data|synthetic");
        let dataset =
            load_csv(path).with_context(|| format!("loading dataset {}", path.display()))?;
        dataset
            .records
            .iter()
            .filter(|r| r.label == label)
            .take(args.payload_limit)
            .map(|r| r.samples.iter().map(|&v| v as f64).collect())
            .collect()
    };
    if windows.is_empty() {
        bail!("no payload windows with label {label} available");
    }
    Ok(windows)
}

fn cmd_loadtest(args: LoadtestArgs) -> Result<()> {
    let classes: Vec<String> = if args.class.eq_ignore_ascii_case("all") {
        ["A", "B", "C", "D", "E"].iter().map(|s| s.to_string()).collect()
    } else {
        vec![args.class.to_uppercase()]
    };
    let out_dir = args
        .out_dir
        .clone()
        .unwrap_or_else(|| default_run_dir("loadtest", None));
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating output dir {}", out_dir.display()))?;

    print_config(
        "loadtest",
        &[
            ("url", args.url.clone()),
            ("clients", args.clients.to_string()),
            ("duration", format!("{}s", args.duration)),
            ("rampup", format!("{}s", args.rampup)),
            ("classes", classes.join(",")),
            (
                "payloads",
                if args.synthetic {
                    "synthetic".into()
                } else {
                    args.data
                        .as_ref()
                        .map(|p| p.display().to_string())
                        .unwrap_or_default()
                },
            ),
            ("payload_limit", args.payload_limit.to_string()),
            ("out_dir", out_dir.display().to_string()),
            ("preflight", (!args.no_preflight).to_string()),
        ],
    );

    let mut all_samples = Vec::new();
    for class in &classes {
        let label = label_letter_to_u8(class)?;
        let payloads = loadtest_payloads(&args, label)?;
        let mut config = LoadConfig::new(&args.url, class.clone(), payloads);
        config.clients = args.clients;
        config.sustain = Duration::from_secs(args.duration);
        config.ramp_up = Duration::from_secs(args.rampup);
        config.preflight = !args.no_preflight;

        println!(
            "running class {class}: {} clients, {}s sustain, {}s ramp-up",
            config.clients, args.duration, args.rampup
        );
        let samples = run_load(&config)?;
        let log_path = out_dir.join(format!("raw-{class}.csv"));
        write_raw_log(&log_path, &samples)?;
        println!("  {} samples, raw log {}", samples.len(), log_path.display());
        all_samples.extend(samples);
    }

    let rows = summarize(&all_samples)?;
    let table = epilnet_load::render_table(&rows);
    print!("{table}");
    std::fs::write(out_dir.join("summary.txt"), &table).context("writing summary")?;
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    print_config(
        "simulate",
        &[
            ("script", args.script.display().to_string()),
            ("contacts", args.contacts.display().to_string()),
            ("patient", args.patient.clone()),
            (
                "url",
                args.url.clone().unwrap_or_else(|| "(offline)".into()),
            ),
            (
                "data",
                args.data
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_else(|| "(none)".into()),
            ),
            ("out", args.out.display().to_string()),
        ],
    );
    let script = std::fs::read_to_string(&args.script)
        .with_context(|| format!("reading script {}", args.script.display()))?;
    let contacts = ContactBook::load(&args.contacts)?;
    println!("{} contacts loaded", contacts.list().len());

    let windows: Option<Vec<[f32; 178]>> = match &args.data {
        Some(path) => {
            let dataset =
                load_csv(path).with_context(|| format!("loading dataset {}", path.display()))?;
            Some(dataset.records.into_iter().map(|r| r.samples).collect())
        }
        None => None,
    };

    let mut http_sink;
    let mut queue_sink;
    let sink: &mut dyn EventSink = match &args.url {
        Some(url) => {
            http_sink = HttpEventSink::new(url);
            &mut http_sink
        }
        None => {
            queue_sink = QueueOnlySink::default();
            &mut queue_sink
        }
    };
    let mut http_predictor;
    let predictor: Option<&mut dyn Predictor> = match &args.url {
        Some(url) => {
            http_predictor = HttpPredictor::new(url);
            Some(&mut http_predictor)
        }
        None => None,
    };

    let outcome = run_scenario(
        &script,
        &contacts,
        LocationProviders::default(),
        sink,
        predictor,
        windows.as_deref(),
        &ScenarioConfig {
            patient_id: args.patient.clone(),
        },
    )?;
    epilnet_alert::write_notification_log(&args.out, &outcome.notifications)?;
    println!(
        "scenario finished at t={}s: {:?}, {} notifications ({}), events stored {}, queued {}, dropped predictions {}",
        outcome.final_time,
        outcome.final_phase,
        outcome.notifications.len(),
        args.out.display(),
        outcome.stored_events,
        outcome.queued_events,
        outcome.dropped_predictions
    );
    Ok(())
}

fn cmd_plot(args: PlotArgs) -> Result<()> {
    print_config(
        "plot",
        &[
            ("data", args.data.display().to_string()),
            (
                "selection",
                if args.all_classes {
                    "all-classes".into()
                } else if let Some(row) = args.row {
                    format!("row {row}")
                } else if let Some(label) = &args.label {
                    format!("label {label}")
                } else {
                    "row 0 (default)".into()
                },
            ),
        ],
    );
    let dataset = load_csv(&args.data)
        .with_context(|| format!("loading dataset {}", args.data.display()))?;
    let letter = |label: u8| (b'A' + label - 1) as char;

    if args.all_classes {
        let out_dir = args.out_dir.clone().unwrap_or_else(|| PathBuf::from("plots"));
        std::fs::create_dir_all(&out_dir)
            .with_context(|| format!("creating {}", out_dir.display()))?;
        for label in 1..=5u8 {
            let record = dataset
                .records
                .iter()
                .find(|r| r.label == label)
                .with_context(|| format!("no record with label {}", letter(label)))?;
            let title = format!("EEG signal, class {}", letter(label));
            let svg = render_eeg_svg(&record.samples, &title)?;
            let path = out_dir.join(format!("class-{}.svg", letter(label)));
            std::fs::write(&path, svg).with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {}", path.display());
        }
        return Ok(());
    }

    let record = if let Some(label) = &args.label {
        let label = label_letter_to_u8(label)?;
        dataset
            .records
            .iter()
            .find(|r| r.label == label)
            .with_context(|| format!("no record with label {}", letter(label)))?
    } else {
        let row = args.row.unwrap_or(0);
        dataset
            .records
            .get(row)
            .with_context(|| format!("row {row} out of range ({} records)", dataset.len()))?
    };
    let title = format!("EEG signal, class {}", letter(record.label));
    let svg = render_eeg_svg(&record.samples, &title)?;
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("eeg-plot.svg"));
    std::fs::write(&out, svg).with_context(|| format!("writing {}", out.display()))?;
    println!("wrote {}", out.display());
    Ok(())
}

fn main() -> std::process::ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Serve(args) => cmd_serve(args),
        Command::Loadtest(args) => cmd_loadtest(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Plot(args) => cmd_plot(args),
    };
    match result {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}
