//! End-to-end runs: route every device, model it on its branch, sample,
//! evaluate, and write a self-describing run directory.
//!
//! Layout of a run directory:
//!
//! ```text
//! config.txt               settings snapshot (key = value)
//! routing.csv              routing statistics and class per device
//! sweep.csv                split-versus-k-means comparison per device
//! aggregate_metrics.csv    one metrics row per device plus the average
//! manifest.json            written last; lists every artifact
//! devices/<id>/            clustering.json, clusters.csv, silhouette.csv,
//!                          models/*.ckpt, losses_*.csv, real.csv,
//!                          generated.csv, metrics.json, *.svg
//! ```
//!
//! Labels written to disk are 1-based. Every random draw is seeded with
//! [`derive_seed`] from the global seed, the device id, a branch tag and an
//! index, so results do not depend on processing order.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::atomic::{write_atomic, write_string};
use crate::cluster::{cluster_segments, sweep_device, KSelection, SweepReport};
use crate::config::RunConfig;
use crate::error::{CoreError, Result};
use crate::features::segment;
use crate::gan::{self, Branch, EpochLoss, GanModel};
use crate::hybrid::{self, SquareWaveTest};
use crate::metrics::{evaluate_all, write_aggregate_csv, DeviceEvaluation, EvalConfig, MetricsReport};
use crate::plots::plot_device_dir;
use crate::resample::{downsample, make_windows, reconstruct, stitch, window_starts};
use crate::router::{route, DeviceClass, RoutingStats};
use crate::seed::derive_seed;
use crate::trace::{format_value, load_csv, write_csv, DeviceTrace, DeviceTraceSet};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
/// Relative output directories are resolved against this variable when set.
pub const RUN_ROOT_ENV: &str = "LOADGAN_RUN_ROOT";

pub fn resolve_run_dir(out: &Path) -> PathBuf {
    match std::env::var_os(RUN_ROOT_ENV) {
        Some(root) if out.is_relative() && !root.is_empty() => PathBuf::from(root).join(out),
        _ => out.to_path_buf(),
    }
}

/// Splits `total` over clusters in proportion to `sizes`: one to each
/// non-empty cluster first, the rest by largest remainder (lower index on
/// ties). Empty clusters get nothing.
pub fn apportion(sizes: &[usize], total: usize) -> Vec<usize> {
    let k = sizes.len();
    if k == 0 {
        return Vec::new();
    }
    let filled = sizes.iter().filter(|&&s| s > 0).count();
    let mut counts: Vec<usize> = sizes.iter().map(|&s| usize::from(s > 0 && total >= filled)).collect();
    let rest = total.saturating_sub(counts.iter().sum());
    let weight: usize = sizes.iter().sum();
    if weight == 0 || rest == 0 {
        return counts;
    }
    let mut rema = Vec::with_capacity(k);
    let mut given = 0;
    for (i, &s) in sizes.iter().enumerate() {
        let exact = rest * s;
        counts[i] += exact / weight;
        given += exact / weight;
        rema.push((exact % weight, i));
    }
    rema.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in rema.iter().take(rest - given) {
        counts[i] += 1;
    }
    counts
}

/// Smooth weighted round-robin: cluster `i` appears `counts[i]` times and
/// the clusters are spread as evenly as their weights allow.
pub fn round_robin_order(counts: &[usize]) -> Vec<usize> {
    let total: usize = counts.iter().sum();
    let mut current = vec![0i64; counts.len()];
    let mut order = Vec::with_capacity(total);
    for _ in 0..total {
        for (c, &w) in current.iter_mut().zip(counts) {
            *c += w as i64;
        }
        let pick = (0..counts.len())
            .max_by(|&a, &b| current[a].cmp(&current[b]).then(b.cmp(&a)))
            .expect("non-empty");
        current[pick] -= total as i64;
        order.push(pick);
    }
    order
}

#[derive(Debug, Clone)]
pub struct NamedModel {
    pub name: String,
    pub model: GanModel,
    pub extra: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct IntermittentOutcome {
    pub selection: KSelection,
    pub real_segments: Vec<Vec<f64>>,
    pub models: Vec<NamedModel>,
    pub generated_segments: Vec<Vec<f64>>,
    pub shared_history: Option<Vec<EpochLoss>>,
}

/// Segments, clusters and trains one GAN per cluster (or a single pooled
/// GAN under `no_clusters`), then samples `samples_per_cluster * K`
/// segments. Both paths cluster the real segments identically, so their
/// evaluations are comparable.
pub fn model_intermittent(device: &str, x: &[f64], cfg: &RunConfig) -> Result<IntermittentOutcome> {
    let real_segments: Vec<Vec<f64>> = segment(x, cfg.segment_len, device)?
        .into_iter()
        .map(|s| s.values)
        .collect();
    let selection = cluster_segments(&real_segments, &cfg.cluster)?;
    let k = selection.k;
    let sizes = selection.clustering.sizes();
    let budget = cfg.samples_per_cluster * k;
    let train = cfg.effective_train();

    if cfg.no_clusters {
        let mut tc = train;
        tc.seed = derive_seed(cfg.seed, device, "pooled", 0);
        let mut model = gan::ablation_no_clusters(&real_segments, &tc)?;
        let generated_segments = gan::sample(&mut model, budget, derive_seed(cfg.seed, device, "sample", 0))?;
        return Ok(IntermittentOutcome {
            selection,
            real_segments,
            models: vec![NamedModel {
                name: "pooled".into(),
                model,
                extra: serde_json::Value::Null,
            }],
            generated_segments,
            shared_history: None,
        });
    }

    let mut members: Vec<Vec<Vec<f64>>> = vec![Vec::new(); k];
    for (seg, &a) in real_segments.iter().zip(&selection.clustering.assignments) {
        members[a].push(seg.clone());
    }
    let mut trained = Vec::with_capacity(k);
    let mut train_sets = Vec::with_capacity(k);
    for (c, set) in members.iter().enumerate() {
        if set.is_empty() {
            continue;
        }
        let mut set = set.clone();
        if set.len() == 1 {
            // A lone segment is duplicated so the GAN fits a point mass.
            set.push(set[0].clone());
        }
        let mut tc = train.clone();
        tc.seed = derive_seed(cfg.seed, device, "cluster", c as u64);
        info!("{device}: training cluster {} of {k} on {} segments", c + 1, set.len());
        trained.push((c, gan::train_cluster_gan(&set, &tc)?));
        train_sets.push(set);
    }
    let shared_history = if cfg.shared_discriminator && trained.len() > 1 {
        let mut tc = train.clone();
        tc.seed = derive_seed(cfg.seed, device, "shared", 0);
        let mut models: Vec<GanModel> = trained.iter().map(|(_, m)| m.clone()).collect();
        let h = gan::shared_discriminator_finetune(&mut models, &train_sets, cfg.shared_epochs, &tc)?;
        for ((_, slot), m) in trained.iter_mut().zip(models) {
            *slot = m;
        }
        Some(h)
    } else {
        None
    };

    let counts = apportion(&sizes, budget);
    let mut pools: Vec<std::vec::IntoIter<Vec<f64>>> = vec![Vec::new().into_iter(); k];
    for (c, model) in trained.iter_mut() {
        let s = gan::sample(model, counts[*c], derive_seed(cfg.seed, device, "sample", *c as u64))?;
        pools[*c] = s.into_iter();
    }
    let generated_segments = round_robin_order(&counts)
        .into_iter()
        .map(|c| pools[c].next().expect("pool sized by counts"))
        .collect();
    Ok(IntermittentOutcome {
        selection,
        real_segments,
        models: trained
            .into_iter()
            .map(|(c, model)| NamedModel {
                name: format!("cluster_{}", c + 1),
                model,
                extra: serde_json::Value::Null,
            })
            .collect(),
        generated_segments,
        shared_history,
    })
}

#[derive(Debug, Clone)]
pub struct ContinuousOutcome {
    pub branch: Branch,
    pub factor: usize,
    pub square_test: Option<SquareWaveTest>,
    pub models: Vec<NamedModel>,
    pub generated: Vec<f64>,
}

/// Compresses the trace, models it with the recurrent GAN (or, under
/// `hybrid_continuous`, the square-wave or spike variant) and expands the
/// result back to the original length.
pub fn model_continuous(device: &str, x: &[f64], cfg: &RunConfig) -> Result<ContinuousOutcome> {
    let t = x.len();
    let factor = cfg.continuous.factor_for(t);
    let surrogate = downsample(x, factor)?;
    let train = cfg.effective_train();
    let mut tc = train.clone();
    let sample_seed = derive_seed(cfg.seed, device, "sample", 0);

    let square_test = if cfg.hybrid_continuous {
        Some(hybrid::detect_square_wave(x, &cfg.hybrid)?)
    } else {
        None
    };
    match &square_test {
        Some(sq) if sq.is_square => {
            tc.seed = derive_seed(cfg.seed, device, "square", 0);
            let cycle = sq.cycle_len.map(|c| c / factor as f64);
            let (_, pieces) = hybrid::square_segments(&surrogate.values, cycle);
            let mut model = gan::train_conv_gan(&pieces, Branch::Square, &tc)?;
            let y = hybrid::generate_concatenated(&mut model, surrogate.values.len(), sample_seed)?;
            Ok(ContinuousOutcome {
                branch: Branch::Square,
                factor,
                generated: reconstruct(&y, factor, t)?,
                square_test,
                models: vec![NamedModel {
                    name: "square".into(),
                    model,
                    extra: serde_json::Value::Null,
                }],
            })
        }
        Some(_) => {
            tc.seed = derive_seed(cfg.seed, device, "spike", 0);
            let mut spikes = hybrid::train_spike_model(x, &cfg.hybrid, &tc)?;
            let (generated, _) = hybrid::interleave_spikes(&mut spikes, t, sample_seed)?;
            let extra = spikes.extra_json();
            Ok(ContinuousOutcome {
                branch: Branch::Spike,
                factor: 1,
                generated,
                square_test,
                models: vec![NamedModel {
                    name: "spike".into(),
                    model: spikes.gan,
                    extra,
                }],
            })
        }
        None => {
            tc.seed = derive_seed(cfg.seed, device, "continuous", 0);
            let (u, w) = (cfg.continuous.max_surrogate_len, cfg.continuous.window_len);
            let stride = (w / 2).max(1);
            let windows = make_windows(&surrogate.values, u, w, stride)?;
            let starts = window_starts(surrogate.values.len(), u, w, stride)?;
            let mut model = gan::train_continuous_gan(&windows, &tc)?;
            let gen_windows = gan::sample(&mut model, starts.len(), sample_seed)?;
            let y = stitch(&gen_windows, &starts, surrogate.values.len())?;
            Ok(ContinuousOutcome {
                branch: Branch::Continuous,
                factor,
                generated: reconstruct(&y, factor, t)?,
                square_test,
                models: vec![NamedModel {
                    name: "continuous".into(),
                    model,
                    extra: serde_json::Value::Null,
                }],
            })
        }
    }
}

/// Non-overlapping evaluation windows: length `L`, or half the trace when
/// fewer than two full segments fit.
pub fn evaluation_segments(x: &[f64], segment_len: usize) -> Vec<Vec<f64>> {
    let l = if x.len() >= 2 * segment_len { segment_len } else { x.len() / 2 };
    if l == 0 {
        return Vec::new();
    }
    x.chunks_exact(l).map(<[f64]>::to_vec).collect()
}

/// What `clustering.json` holds: the real-segment clustering used for
/// evaluation, with the segment length it was fitted at.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoredClustering {
    pub segment_len: usize,
    pub selection: KSelection,
}

impl StoredClustering {
    pub fn load(dir: &Path) -> Result<Self> {
        let p = dir.join("clustering.json");
        let f = File::open(&p).map_err(|e| CoreError::io(&p, e))?;
        Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeviceEntry {
    pub device: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class: Option<DeviceClass>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub branch: Option<Branch>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub directory: Option<String>,
    pub checkpoints: Vec<String>,
    pub loss_histories: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics_report: Option<String>,
    pub artifacts: Vec<String>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub files: Vec<String>,
    pub devices: Vec<DeviceEntry>,
}

impl RunManifest {
    pub fn failed_devices(&self) -> Vec<&str> {
        self.devices
            .iter()
            .filter(|d| d.status != "ok")
            .map(|d| d.device.as_str())
            .collect()
    }

    /// Every file path the manifest mentions, relative to the run directory.
    pub fn referenced_files(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self.files.iter().map(String::as_str).collect();
        for d in &self.devices {
            out.extend(d.checkpoints.iter().map(String::as_str));
            out.extend(d.loss_histories.iter().map(String::as_str));
            out.extend(d.metrics_report.as_deref());
            out.extend(d.artifacts.iter().map(String::as_str));
        }
        out
    }

    pub fn load(run_dir: &Path) -> Result<Self> {
        let p = run_dir.join("manifest.json");
        let f = File::open(&p).map_err(|e| CoreError::io(&p, e))?;
        Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
    }
}

fn dir_name(id: &str, taken: &mut Vec<String>) -> String {
    let mut base: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect();
    if base.is_empty() || base.starts_with('.') {
        base.insert(0, 'd');
    }
    let mut name = base.clone();
    let mut n = 2;
    while taken.contains(&name) {
        name = format!("{base}_{n}");
        n += 1;
    }
    taken.push(name.clone());
    name
}

fn rel(run: &Path, p: &Path) -> String {
    p.strip_prefix(run)
        .unwrap_or(p)
        .components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n").map_err(|e| CoreError::io(path, e))
    })
}

fn write_series(path: &Path, device: &str, values: &[f64]) -> Result<()> {
    let set = DeviceTraceSet::new(vec![DeviceTrace::new(device, values.to_vec())?])?;
    write_atomic(path, |w| write_csv(w, &set))
}

fn write_csv_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    write_atomic(path, |w| {
        let mut out = csv::Writer::from_writer(w);
        let err = |e: csv::Error| CoreError::Format(format!("csv write failed: {e}"));
        out.write_record(header).map_err(err)?;
        for r in rows {
            out.write_record(r).map_err(err)?;
        }
        out.flush().map_err(|e| CoreError::io(path, e))
    })
}

struct DeviceArtifacts {
    entry: DeviceEntry,
    report: MetricsReport,
}

fn save_models(dir: &Path, run: &Path, models: &[NamedModel], entry: &mut DeviceEntry) -> Result<()> {
    let mdir = dir.join("models");
    std::fs::create_dir_all(&mdir).map_err(|e| CoreError::io(&mdir, e))?;
    for m in models {
        let ck = mdir.join(format!("{}.ckpt", m.name));
        write_atomic(&ck, |w| gan::write_model(w, &m.model, m.extra.clone()))?;
        entry.checkpoints.push(rel(run, &ck));
        let lc = dir.join(format!("losses_{}.csv", m.name));
        write_atomic(&lc, |w| gan::write_loss_csv(w, &m.model.history))?;
        entry.loss_histories.push(rel(run, &lc));
    }
    Ok(())
}

fn save_clustering(dir: &Path, run: &Path, stored: &StoredClustering, entry: &mut DeviceEntry) -> Result<()> {
    let cj = dir.join("clustering.json");
    write_json(&cj, stored)?;
    let labels: Vec<Vec<String>> = stored
        .selection
        .clustering
        .assignments
        .iter()
        .enumerate()
        .map(|(i, &a)| vec![i.to_string(), (a + 1).to_string()])
        .collect();
    let cc = dir.join("clusters.csv");
    write_csv_rows(&cc, &["segment", "cluster"], &labels)?;
    let sil: Vec<Vec<String>> = stored
        .selection
        .silhouettes
        .iter()
        .map(|&(k, s)| vec![k.to_string(), format_value(s)])
        .collect();
    let sc = dir.join("silhouette.csv");
    write_csv_rows(&sc, &["k", "silhouette"], &sil)?;
    entry.artifacts.extend([rel(run, &cj), rel(run, &cc), rel(run, &sc)]);
    Ok(())
}

fn process_device(
    trace: &DeviceTrace,
    class: DeviceClass,
    dir: &Path,
    run: &Path,
    cfg: &RunConfig,
) -> Result<DeviceArtifacts> {
    let device = trace.device_id();
    let x = trace.samples();
    std::fs::create_dir_all(dir).map_err(|e| CoreError::io(dir, e))?;
    let mut entry = DeviceEntry {
        device: device.to_string(),
        status: "ok".into(),
        class: Some(class),
        directory: Some(rel(run, dir)),
        ..DeviceEntry::default()
    };
    let eval_cfg = EvalConfig {
        diversity_cap: cfg.diversity_cap,
        seed: derive_seed(cfg.seed, device, "eval", 0),
    };

    let (stored, real_eval, gen_eval, generated, models) = match class {
        DeviceClass::Intermittent => {
            let out = model_intermittent(device, x, cfg)?;
            entry.branch = Some(Branch::Cluster);
            entry.strategy = Some(if cfg.no_clusters { "pooled" } else { "kmeans" }.into());
            entry.k = Some(out.selection.k);
            if let Some(h) = &out.shared_history {
                let p = dir.join("losses_shared_discriminator.csv");
                write_atomic(&p, |w| gan::write_loss_csv(w, h))?;
                entry.loss_histories.push(rel(run, &p));
            }
            let generated: Vec<f64> = out.generated_segments.iter().flatten().copied().collect();
            let stored = StoredClustering {
                segment_len: cfg.segment_len,
                selection: out.selection,
            };
            (stored, out.real_segments, out.generated_segments, generated, out.models)
        }
        DeviceClass::Continuous => {
            let out = model_continuous(device, x, cfg)?;
            entry.branch = Some(out.branch);
            entry.strategy = Some(out.branch.as_str().into());
            entry.notes.push(format!("compression factor {}", out.factor));
            if let Some(sq) = &out.square_test {
                entry.notes.push(format!(
                    "square-wave test: {} (centers {} / {})",
                    sq.is_square,
                    format_value(sq.centers.0),
                    format_value(sq.centers.1)
                ));
            }
            let real_eval = evaluation_segments(x, cfg.segment_len);
            let gen_eval = evaluation_segments(&out.generated, cfg.segment_len);
            let seg_len = real_eval.first().map_or(0, Vec::len);
            let selection = cluster_segments(&real_eval, &cfg.cluster)?;
            entry.k = Some(selection.k);
            let stored = StoredClustering {
                segment_len: seg_len,
                selection,
            };
            (stored, real_eval, gen_eval, out.generated, out.models)
        }
    };

    save_clustering(dir, run, &stored, &mut entry)?;
    save_models(dir, run, &models, &mut entry)?;
    let real_csv = dir.join("real.csv");
    write_series(&real_csv, device, x)?;
    let gen_csv = dir.join("generated.csv");
    write_series(&gen_csv, device, &generated)?;
    entry.artifacts.extend([rel(run, &real_csv), rel(run, &gen_csv)]);

    let evaluation: DeviceEvaluation = evaluate_all(device, &real_eval, &gen_eval, &stored.selection.clustering, &eval_cfg)?;
    let mp = dir.join("metrics.json");
    write_json(&mp, &evaluation)?;
    entry.metrics_report = Some(rel(run, &mp));
    for svg in plot_device_dir(dir)? {
        entry.artifacts.push(rel(run, &svg));
    }
    Ok(DeviceArtifacts {
        entry,
        report: evaluation.metrics,
    })
}

/// Routes one device and writes its artifacts into `dir`; manifest paths
/// in the returned entry are relative to `dir`.
pub fn run_device(trace: &DeviceTrace, dir: &Path, cfg: &RunConfig) -> Result<(DeviceEntry, MetricsReport)> {
    cfg.validate()?;
    let (_, class) = route(trace.samples(), &cfg.routing)?;
    let a = process_device(trace, class, dir, dir, cfg)?;
    Ok((a.entry, a.report))
}

fn routing_rows(rows: &[(String, RoutingStats, DeviceClass)]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|(d, s, c)| {
            vec![
                d.clone(),
                s.r0.to_string(),
                format_value(s.p_nz),
                format_value(s.var_smoothed_diff),
                c.to_string(),
            ]
        })
        .collect()
}

/// Runs the whole pipeline. Input and configuration are checked before the
/// run directory is touched; afterwards a failing device is recorded in the
/// manifest and the remaining devices still run.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let set = load_csv(&cfg.input, cfg.missing)?;
    let run = resolve_run_dir(&cfg.out_dir);
    if run.as_os_str().is_empty() {
        return Err(CoreError::Config("output directory is not set".into()));
    }
    std::fs::create_dir_all(run.join("devices")).map_err(|e| CoreError::io(&run, e))?;
    let mut files = Vec::new();
    let snapshot = run.join("config.txt");
    write_string(&snapshot, &cfg.to_text())?;
    files.push(rel(&run, &snapshot));

    let mut routed = Vec::new();
    let mut route_errors = BTreeMap::new();
    for t in set.iter() {
        match route(t.samples(), &cfg.routing) {
            Ok((stats, class)) => routed.push((t.device_id().to_string(), stats, class)),
            Err(e) => {
                route_errors.insert(t.device_id().to_string(), e.to_string());
            }
        }
    }
    let rp = run.join("routing.csv");
    write_csv_rows(&rp, &["device", "r0", "p_nz", "var_smoothed_diff", "class"], &routing_rows(&routed))?;
    files.push(rel(&run, &rp));

    let mut sweep = SweepReport::default();
    for t in set.iter() {
        match sweep_device(t.device_id(), t.samples(), cfg.segment_len, &cfg.routing, &cfg.cluster) {
            Ok(row) => sweep.rows.push(row),
            Err(e) => warn!("{}: sweep skipped: {e}", t.device_id()),
        }
    }
    let sp = run.join("sweep.csv");
    write_atomic(&sp, |w| sweep.write_csv(w))?;
    files.push(rel(&run, &sp));

    let mut taken = Vec::new();
    let mut devices = Vec::new();
    let mut reports = Vec::new();
    for t in set.iter() {
        let id = t.device_id();
        let dir = run.join("devices").join(dir_name(id, &mut taken));
        let result = match routed.iter().find(|(d, ..)| d == id) {
            Some(&(_, _, class)) => process_device(t, class, &dir, &run, cfg),
            None => Err(CoreError::InsufficientData(route_errors.get(id).cloned().unwrap_or_default())),
        };
        match result {
            Ok(a) => {
                reports.push((id.to_string(), a.report));
                devices.push(a.entry);
            }
            Err(e) => {
                warn!("{id}: failed: {e}");
                if dir.exists() {
                    let _ = std::fs::remove_dir_all(&dir);
                }
                devices.push(DeviceEntry {
                    device: id.to_string(),
                    status: "failed".into(),
                    error: Some(e.to_string()),
                    class: routed.iter().find(|(d, ..)| d == id).map(|r| r.2),
                    ..DeviceEntry::default()
                });
            }
        }
    }
    let ap = run.join("aggregate_metrics.csv");
    write_atomic(&ap, |w| write_aggregate_csv(w, &reports))?;
    files.push(rel(&run, &ap));

    let manifest = RunManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        config: cfg.entries().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        files,
        devices,
    };
    if let Some(missing) = manifest.referenced_files().into_iter().find(|f| !run.join(f).is_file()) {
        return Err(CoreError::Format(format!("manifest references missing file {missing}")));
    }
    write_json(&run.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apportion_examples() {
        assert_eq!(apportion(&[32, 8], 128), vec![102, 26]);
        assert_eq!(apportion(&[1, 1, 1], 3), vec![1, 1, 1]);
        assert_eq!(apportion(&[100, 1], 4), vec![3, 1]);
        assert_eq!(apportion(&[5, 5], 7), vec![4, 3]);
        assert_eq!(apportion(&[2, 3], 0), vec![0, 0]);
        assert_eq!(apportion(&[6, 0, 0], 9), vec![9, 0, 0]);
    }

    #[test]
    fn round_robin_counts_and_spreads() {
        let order = round_robin_order(&[3, 1]);
        assert_eq!(order, vec![0, 0, 1, 0]);
        let order = round_robin_order(&[2, 2, 1]);
        for (c, &n) in [2usize, 2, 1].iter().enumerate() {
            assert_eq!(order.iter().filter(|&&o| o == c).count(), n);
        }
        assert!(round_robin_order(&[]).is_empty());
    }

    #[test]
    fn dir_names_are_unique_and_safe() {
        let mut taken = Vec::new();
        assert_eq!(dir_name("a/b", &mut taken), "a_b");
        assert_eq!(dir_name("a?b", &mut taken), "a_b_2");
        assert_eq!(dir_name("..", &mut taken), "d..");
    }

    #[test]
    fn evaluation_segment_lengths() {
        assert_eq!(evaluation_segments(&[1.0; 100], 30).len(), 3);
        assert_eq!(evaluation_segments(&[1.0; 50], 30), vec![vec![1.0; 25]; 2]);
    }
}
