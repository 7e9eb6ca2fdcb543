use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use loadgan_core::cluster::{cluster_segments, sweep_device, SweepReport};
use loadgan_core::config::RunConfig;
use loadgan_core::features::{extract_features, normalize_segment, segment, FEATURE_NAMES};
use loadgan_core::gan::{self, Branch};
use loadgan_core::hybrid::{interleave_spikes, SpikeModel};
use loadgan_core::metrics::{evaluate_all, EvalConfig, REPORT_COLUMNS};
use loadgan_core::pipeline::{run_device, run_pipeline, StoredClustering};
use loadgan_core::plots::emit_plots;
use loadgan_core::router::route;
use loadgan_core::trace::{format_value, load_csv, write_csv, DeviceTrace, DeviceTraceSet};
use loadgan_core::{CoreError, Result};
use serde_json::json;

#[derive(Parser)]
#[command(name = "loadgan", version, about = "Synthetic appliance load traces from per-cluster GANs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Plain-text `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Classify every device as continuous or intermittent.
    Route {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Per-segment shape features.
    Features {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        segment_len: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Cluster the segments of each device and report the chosen K.
    Cluster {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        segment_len: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Compare the zero/non-zero split with k-means per device (CSV).
    Sweep {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        segment_len: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Train the models of one device and write its artifacts to `--out`.
    Train {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        device: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        epochs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Sample from a checkpoint into a CSV with one column per sequence.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long)]
        seed: u64,
        /// Output length for spike models (defaults to 10 spike windows).
        #[arg(long)]
        length: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Score generated against real traces with a stored clustering.
    Evaluate {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        gen: PathBuf,
        /// Device directory holding `clustering.json`.
        #[arg(long)]
        clusters: PathBuf,
        /// Column to read from both files; the first column by default.
        #[arg(long)]
        device: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Route, cluster, train, generate and evaluate every device.
    Pipeline {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        no_clusters: bool,
        #[arg(long)]
        shared_discriminator: bool,
        #[arg(long)]
        hybrid_continuous: bool,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        segment_len: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Redraw the SVG plots of a run directory.
    Plots {
        #[arg(long)]
        run: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CoreError::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k, v)?;
    }
    Ok(cfg)
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out).map_err(|e| CoreError::io("<stdout>", e))
}

fn print_csv(header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(std::io::stdout().lock());
    let err = |e: csv::Error| CoreError::Format(e.to_string());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    w.flush().map_err(|e| CoreError::io("<stdout>", e))
}

fn column(set: &DeviceTraceSet, device: Option<&str>, path: &Path) -> Result<Vec<f64>> {
    let t = match device {
        Some(d) => set.get(d),
        None => set.traces().first(),
    };
    t.map(|t| t.samples().to_vec()).ok_or_else(|| {
        CoreError::NoData(format!("{}: column {} not found", path.display(), device.unwrap_or("1")))
    })
}

fn cmd_route(input: &Path, common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let set = load_csv(input, cfg.missing)?;
    let mut rows = Vec::new();
    for t in set.iter() {
        let (s, class) = route(t.samples(), &cfg.routing)?;
        rows.push((t.device_id().to_string(), s, class));
    }
    if common.json {
        let v: Vec<_> = rows
            .iter()
            .map(|(d, s, c)| json!({"device": d, "stats": s, "class": c}))
            .collect();
        return print_json(&json!(v));
    }
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|(d, s, c)| {
            vec![
                d.clone(),
                s.r0.to_string(),
                format_value(s.p_nz),
                format_value(s.var_smoothed_diff),
                c.to_string(),
            ]
        })
        .collect();
    print_csv(&["device", "r0", "p_nz", "var_smoothed_diff", "class"], &rows)
}

fn cmd_features(input: &Path, segment_len: Option<usize>, common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let len = segment_len.unwrap_or(cfg.segment_len);
    let set = load_csv(input, cfg.missing)?;
    let mut rows = Vec::new();
    for t in set.iter() {
        for s in segment(t.samples(), len, t.device_id())? {
            let f = extract_features(&normalize_segment(&s.values))?;
            rows.push((s.parent_device, s.index, f));
        }
    }
    if common.json {
        let v: Vec<_> = rows
            .iter()
            .map(|(d, i, f)| json!({"device": d, "segment": i, "features": f.as_slice()}))
            .collect();
        return print_json(&json!(v));
    }
    let mut header = vec!["device", "segment"];
    header.extend(FEATURE_NAMES);
    let rows: Vec<Vec<String>> = rows
        .into_iter()
        .map(|(d, i, f)| {
            let mut r = vec![d, i.to_string()];
            r.extend(f.as_slice().iter().map(|&v| format_value(v)));
            r
        })
        .collect();
    print_csv(&header, &rows)
}

fn cmd_cluster(input: &Path, segment_len: Option<usize>, seed: Option<u64>, common: &Common) -> Result<()> {
    let mut cfg = load_config(common)?;
    if let Some(s) = seed {
        cfg.cluster.seed = s;
    }
    let len = segment_len.unwrap_or(cfg.segment_len);
    let set = load_csv(input, cfg.missing)?;
    let mut out = Vec::new();
    for t in set.iter() {
        let segs: Vec<Vec<f64>> = segment(t.samples(), len, t.device_id())?
            .into_iter()
            .map(|s| s.values)
            .collect();
        let sel = cluster_segments(&segs, &cfg.cluster)?;
        let labels: Vec<usize> = sel.clustering.assignments.iter().map(|a| a + 1).collect();
        out.push(json!({
            "device": t.device_id(),
            "k": sel.k,
            "best_silhouette": sel.best_silhouette,
            "silhouettes": sel.silhouettes,
            "sizes": sel.clustering.sizes(),
            "labels": labels,
        }));
    }
    if common.json {
        return print_json(&json!(out));
    }
    let rows: Vec<Vec<String>> = out
        .iter()
        .map(|v| {
            vec![
                v["device"].as_str().unwrap_or_default().to_string(),
                v["k"].to_string(),
                v["best_silhouette"].as_f64().map(format_value).unwrap_or_default(),
                v["sizes"].as_array().map_or(String::new(), |a| {
                    a.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
                }),
            ]
        })
        .collect();
    print_csv(&["device", "k", "silhouette", "sizes"], &rows)
}

fn cmd_sweep(input: &Path, segment_len: Option<usize>, common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let len = segment_len.unwrap_or(cfg.segment_len);
    let set = load_csv(input, cfg.missing)?;
    let mut report = SweepReport::default();
    for t in set.iter() {
        report
            .rows
            .push(sweep_device(t.device_id(), t.samples(), len, &cfg.routing, &cfg.cluster)?);
    }
    if common.json {
        return print_json(&serde_json::to_value(&report)?);
    }
    report.write_csv(std::io::stdout().lock())
}

fn cmd_train(input: &Path, device: &str, out: &Path, seed: u64, epochs: Option<usize>, common: &Common) -> Result<()> {
    let mut cfg = load_config(common)?;
    cfg.seed = seed;
    if let Some(e) = epochs {
        cfg.train.epochs = e;
    }
    let set = load_csv(input, cfg.missing)?;
    let trace = set
        .get(device)
        .ok_or_else(|| CoreError::NoData(format!("device `{device}` not in {}", input.display())))?;
    let (entry, report) = run_device(trace, out, &cfg)?;
    if common.json {
        return print_json(&json!({"device": entry, "metrics": report}));
    }
    println!(
        "{}: {} via {}, K = {}",
        entry.device,
        entry.class.map_or("?", |c| c.as_str()),
        entry.strategy.as_deref().unwrap_or("?"),
        entry.k.unwrap_or(0)
    );
    for c in &entry.checkpoints {
        println!("checkpoint {}", out.join(c).display());
    }
    Ok(())
}

fn cmd_generate(
    checkpoint: &Path,
    count: usize,
    seed: u64,
    length: Option<usize>,
    out: &Path,
    common: &Common,
) -> Result<()> {
    let file = std::fs::File::open(checkpoint).map_err(|e| CoreError::io(checkpoint, e))?;
    let (mut model, extra) = gan::read_model(std::io::BufReader::new(file))?;
    let branch = model.branch;
    let sequences = if branch == Branch::Spike {
        let mut spikes = SpikeModel::from_parts(model, &extra)?;
        let t = length.unwrap_or(10 * spikes.gap_mean.round().max(1.0) as usize);
        (0..count as u64)
            .map(|i| interleave_spikes(&mut spikes, t, loadgan_core::seed::sub_seed(seed, "generate", i)).map(|r| r.0))
            .collect::<Result<Vec<_>>>()?
    } else {
        gan::sample(&mut model, count, seed)?
    };
    let traces = sequences
        .into_iter()
        .enumerate()
        .map(|(i, s)| DeviceTrace::new(format!("{}_{}", branch.as_str(), i + 1), s))
        .collect::<Result<Vec<_>>>()?;
    let n = traces.len();
    if n > 0 {
        let set = DeviceTraceSet::new(traces)?;
        loadgan_core::atomic::write_atomic(out, |w| write_csv(w, &set))?;
    } else {
        loadgan_core::atomic::write_string(out, "")?;
    }
    if common.json {
        return print_json(&json!({"branch": branch, "sequences": n, "output": out}));
    }
    println!("wrote {n} {} sequences to {}", branch.as_str(), out.display());
    Ok(())
}

fn cmd_evaluate(real: &Path, gen: &Path, clusters: &Path, device: Option<&str>, seed: u64, common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let stored = StoredClustering::load(clusters)?;
    let real_x = column(&load_csv(real, cfg.missing)?, device, real)?;
    let gen_x = column(&load_csv(gen, cfg.missing)?, device, gen)?;
    let cut = |x: &[f64]| -> Vec<Vec<f64>> { x.chunks_exact(stored.segment_len).map(<[f64]>::to_vec).collect() };
    let eval_cfg = EvalConfig {
        diversity_cap: cfg.diversity_cap,
        seed,
    };
    let name = device.unwrap_or("device");
    let ev = evaluate_all(name, &cut(&real_x), &cut(&gen_x), &stored.selection.clustering, &eval_cfg)?;
    if common.json {
        return print_json(&serde_json::to_value(&ev)?);
    }
    for (c, v) in REPORT_COLUMNS.iter().zip(ev.metrics.values()) {
        println!("{c:>10}  {}", format_value(v));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Route { input, common } => cmd_route(&input, &common)?,
        Command::Features { input, segment_len, common } => cmd_features(&input, segment_len, &common)?,
        Command::Cluster { input, segment_len, seed, common } => cmd_cluster(&input, segment_len, seed, &common)?,
        Command::Sweep { input, segment_len, common } => cmd_sweep(&input, segment_len, &common)?,
        Command::Train { input, device, out, seed, epochs, common } => {
            cmd_train(&input, &device, &out, seed, epochs, &common)?
        }
        Command::Generate { checkpoint, count, seed, length, out, common } => {
            cmd_generate(&checkpoint, count, seed, length, &out, &common)?
        }
        Command::Evaluate { real, gen, clusters, device, seed, common } => {
            cmd_evaluate(&real, &gen, &clusters, device.as_deref(), seed, &common)?
        }
        Command::Pipeline {
            input,
            out,
            seed,
            no_clusters,
            shared_discriminator,
            hybrid_continuous,
            epochs,
            segment_len,
            common,
        } => {
            let mut cfg = load_config(&common)?;
            cfg.input = input;
            cfg.out_dir = out;
            cfg.seed = seed;
            cfg.no_clusters |= no_clusters;
            cfg.shared_discriminator |= shared_discriminator;
            cfg.hybrid_continuous |= hybrid_continuous;
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if let Some(l) = segment_len {
                cfg.segment_len = l;
            }
            let manifest = run_pipeline(&cfg)?;
            let failed = manifest.failed_devices();
            if common.json {
                print_json(&serde_json::to_value(&manifest)?)?;
            } else {
                for d in &manifest.devices {
                    match &d.error {
                        Some(e) => println!("{}: failed: {e}", d.device),
                        None => println!(
                            "{}: {} via {}, K = {}",
                            d.device,
                            d.class.map_or("?", |c| c.as_str()),
                            d.strategy.as_deref().unwrap_or("?"),
                            d.k.unwrap_or(0)
                        ),
                    }
                }
            }
            if !failed.is_empty() {
                eprintln!("error: {} device(s) failed: {}", failed.len(), failed.join(", "));
                return Ok(false);
            }
        }
        Command::Plots { run, common } => {
            let files = emit_plots(&run)?;
            if common.json {
                print_json(&json!({"written": files}))?;
            } else {
                for f in files {
                    println!("{}", f.display());
                }
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
