//! Realism and diversity metrics for generated traces.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::{sq_dist, Clustering};
use crate::error::{CoreError, Result};
use crate::features::featurize_all;
use crate::spectrum::dominant_bin;
use crate::trace::format_value;

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_DIVERSITY_CAP: usize = 200;

fn nonempty<S>(set: &[S], what: &str) -> Result<()> {
    if set.is_empty() {
        Err(CoreError::NoData(format!("{what} set is empty")))
    } else {
        Ok(())
    }
}

fn pooled<S: AsRef<[f64]>>(set: &[S]) -> Result<(f64, f64)> {
    let n: usize = set.iter().map(|s| s.as_ref().len()).sum();
    if n == 0 {
        return Err(CoreError::NoData("no samples".into()));
    }
    let mean = set.iter().flat_map(|s| s.as_ref()).sum::<f64>() / n as f64;
    let var = set
        .iter()
        .flat_map(|s| s.as_ref())
        .map(|v| (v - mean).powi(2))
        .sum::<f64>()
        / n as f64;
    Ok((mean, var.sqrt()))
}

/// `|mean(gen) - mean(real)|` over all samples pooled across sequences.
pub fn mean_error<S: AsRef<[f64]>, G: AsRef<[f64]>>(real: &[S], gen: &[G]) -> Result<f64> {
    nonempty(real, "real")?;
    nonempty(gen, "generated")?;
    Ok((pooled(gen)?.0 - pooled(real)?.0).abs())
}

/// `|std(gen) - std(real)|` with population standard deviations.
pub fn std_error<S: AsRef<[f64]>, G: AsRef<[f64]>>(real: &[S], gen: &[G]) -> Result<f64> {
    nonempty(real, "real")?;
    nonempty(gen, "generated")?;
    Ok((pooled(gen)?.1 - pooled(real)?.1).abs())
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (sq_dist(a, b) / a.len() as f64).sqrt()
}

fn same_len<S: AsRef<[f64]>, G: AsRef<[f64]>>(real: &[S], gen: &[G]) -> Result<usize> {
    let len = real[0].as_ref().len();
    let ok = real.iter().map(|s| s.as_ref().len()).chain(gen.iter().map(|s| s.as_ref().len()));
    for l in ok {
        if l != len {
            return Err(CoreError::Shape(format!(
                "sequence lengths differ ({l} vs {len})"
            )));
        }
    }
    if len == 0 {
        return Err(CoreError::Shape("sequences are empty".into()));
    }
    Ok(len)
}

/// Mean over generated sequences of the RMSE to the nearest real sequence.
pub fn fidelity_rmse<S: AsRef<[f64]>, G: AsRef<[f64]>>(real: &[S], gen: &[G]) -> Result<f64> {
    nonempty(real, "real")?;
    nonempty(gen, "generated")?;
    same_len(real, gen)?;
    let total: f64 = gen
        .iter()
        .map(|g| {
            real.iter()
                .map(|r| rmse(g.as_ref(), r.as_ref()))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    Ok(total / gen.len() as f64)
}

/// Length divided by the strongest nonzero DFT bin; the full length when
/// the series has no oscillation.
pub fn dominant_period(x: &[f64]) -> Result<f64> {
    if x.len() < 4 {
        return Err(CoreError::InsufficientData(format!(
            "period needs at least 4 samples, got {}",
            x.len()
        )));
    }
    Ok(match dominant_bin(x) {
        Some(k) => x.len() as f64 / k as f64,
        None => x.len() as f64,
    })
}

/// For each generated sequence, the gap to the real sequence with the
/// nearest dominant period (earliest on ties), averaged.
pub fn period_mae<S: AsRef<[f64]>, G: AsRef<[f64]>>(real: &[S], gen: &[G]) -> Result<f64> {
    nonempty(real, "real")?;
    nonempty(gen, "generated")?;
    let rp = real
        .iter()
        .map(|s| dominant_period(s.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let mut total = 0.0;
    for g in gen {
        let pg = dominant_period(g.as_ref())?;
        let mut best = f64::INFINITY;
        for &p in &rp {
            let d = (pg - p).abs();
            if d < best {
                best = d;
            }
        }
        total += best;
    }
    Ok(total / gen.len() as f64)
}

/// Mean vector and unbiased (N-1) covariance of a feature population.
#[derive(Debug, Clone, PartialEq)]
pub struct FidStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl FidStats {
    pub fn fit<P: AsRef<[f64]>>(features: &[P]) -> Result<Self> {
        let n = features.len();
        if n < 2 {
            return Err(CoreError::InsufficientData(format!(
                "covariance needs at least 2 vectors, got {n}"
            )));
        }
        let d = features[0].as_ref().len();
        if features.iter().any(|f| f.as_ref().len() != d) {
            return Err(CoreError::Shape("feature vectors differ in length".into()));
        }
        let x = DMatrix::from_fn(n, d, |i, j| features[i].as_ref()[j]);
        let mean = DVector::from_fn(d, |j, _| x.column(j).mean());
        let mut centered = x;
        for j in 0..d {
            let m = mean[j];
            centered.column_mut(j).add_scalar_mut(-m);
        }
        let mut cov = centered.transpose() * &centered / (n - 1) as f64;
        cov = (&cov + cov.transpose()) * 0.5;
        Ok(Self { mean, cov })
    }
}

/// Square root of a symmetric matrix with negative eigenvalues clamped.
fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// Fréchet distance between two Gaussian fits.
pub fn frechet_distance(r: &FidStats, g: &FidStats) -> Result<f64> {
    if r.mean.len() != g.mean.len() {
        return Err(CoreError::Shape("feature dimensions differ".into()));
    }
    let diff = &r.mean - &g.mean;
    let root_r = sym_sqrt(&r.cov);
    let inner = &root_r * &g.cov * &root_r;
    let cross = sym_sqrt(&inner).trace();
    let value = diff.dot(&diff) + r.cov.trace() + g.cov.trace() - 2.0 * cross;
    Ok(value.max(0.0))
}

/// Fréchet distance in the handcrafted shape-feature space.
pub fn feature_fid<S: AsRef<[f64]>, G: AsRef<[f64]>>(real: &[S], gen: &[G]) -> Result<f64> {
    let fr = featurize_all(real)?;
    let fg = featurize_all(gen)?;
    frechet_distance(&FidStats::fit(&fr)?, &FidStats::fit(&fg)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diversity {
    pub value: f64,
    pub subsampled: bool,
    pub sequences_used: usize,
}

/// Mean pairwise RMSE over unordered pairs, on a seeded subsample of `cap`
/// sequences when there are more.
pub fn diversity_rmse<G: AsRef<[f64]>>(gen: &[G], cap: usize, seed: u64) -> Result<Diversity> {
    if gen.len() < 2 {
        return Err(CoreError::InsufficientData(format!(
            "diversity needs at least 2 sequences, got {}",
            gen.len()
        )));
    }
    same_len(gen, gen)?;
    let cap = cap.max(2);
    let chosen: Vec<&[f64]> = if gen.len() > cap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = sample(&mut rng, gen.len(), cap).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| gen[i].as_ref()).collect()
    } else {
        gen.iter().map(AsRef::as_ref).collect()
    };
    let n = chosen.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += rmse(chosen[i], chosen[j]);
        }
    }
    Ok(Diversity {
        value: total / (n * (n - 1) / 2) as f64,
        subsampled: n < gen.len(),
        sequences_used: n,
    })
}

/// Histogram of nearest-centroid assignments under the clustering's scaler.
pub fn assign_to_clusters<G: AsRef<[f64]>>(gen: &[G], clustering: &Clustering) -> Result<Vec<usize>> {
    let mut hist = vec![0; clustering.k];
    for a in clustering.assign_raw(gen)? {
        hist[a] += 1;
    }
    Ok(hist)
}

pub fn cluster_coverage(hist: &[usize]) -> f64 {
    if hist.is_empty() {
        return 0.0;
    }
    hist.iter().filter(|&&n| n > 0).count() as f64 / hist.len() as f64
}

/// Jensen-Shannon divergence (base 2) between two normalized histograms.
pub fn cluster_js(p_r: &[usize], p_g: &[usize]) -> Result<f64> {
    if p_r.len() != p_g.len() {
        return Err(CoreError::Shape("histograms differ in length".into()));
    }
    let (sr, sg) = (p_r.iter().sum::<usize>(), p_g.iter().sum::<usize>());
    if sr == 0 || sg == 0 {
        return Err(CoreError::NoData("histogram has zero total".into()));
    }
    let p: Vec<f64> = p_r.iter().map(|&v| v as f64 / sr as f64).collect();
    let q: Vec<f64> = p_g.iter().map(|&v| v as f64 / sg as f64).collect();
    Ok(js_divergence(&p, &q))
}

pub fn js_divergence(p: &[f64], q: &[f64]) -> f64 {
    let kl = |a: &[f64], m: &[f64]| -> f64 {
        a.iter()
            .zip(m)
            .filter(|(&x, _)| x > 0.0)
            .map(|(&x, &y)| x * (x / y).log2())
            .sum()
    };
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    (0.5 * kl(p, &m) + 0.5 * kl(q, &m)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub me: f64,
    pub std_err: f64,
    pub fid_rmse: f64,
    pub period_mae: f64,
    pub feature_fid: f64,
    pub div_rmse: f64,
    pub cluster_coverage: f64,
    pub cluster_js: f64,
}

pub const REPORT_COLUMNS: [&str; 8] = ["ME", "Std", "Fid", "Per", "FeatureFID", "Div", "CC", "CJ"];

impl MetricsReport {
    pub fn values(&self) -> [f64; 8] {
        [
            self.me,
            self.std_err,
            self.fid_rmse,
            self.period_mae,
            self.feature_fid,
            self.div_rmse,
            self.cluster_coverage,
            self.cluster_js,
        ]
    }

    pub fn mean_of(reports: &[MetricsReport]) -> Option<MetricsReport> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        let avg = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        Some(MetricsReport {
            me: avg(|r| r.me),
            std_err: avg(|r| r.std_err),
            fid_rmse: avg(|r| r.fid_rmse),
            period_mae: avg(|r| r.period_mae),
            feature_fid: avg(|r| r.feature_fid),
            div_rmse: avg(|r| r.div_rmse),
            cluster_coverage: avg(|r| r.cluster_coverage),
            cluster_js: avg(|r| r.cluster_js),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub diversity_cap: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            diversity_cap: DEFAULT_DIVERSITY_CAP,
            seed: 0,
        }
    }
}

/// Everything written to a device's JSON report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceEvaluation {
    pub schema_version: u32,
    pub device: String,
    pub metrics: MetricsReport,
    pub real_histogram: Vec<usize>,
    pub generated_histogram: Vec<usize>,
    pub real_sequences: usize,
    pub generated_sequences: usize,
    pub diversity_subsampled: bool,
    pub diversity_sequences_used: usize,
    pub notes: Vec<String>,
}

pub const CJ_NOTE: &str =
    "CJ is the raw Jensen-Shannon divergence (base 2) between real and generated cluster histograms; lower means closer occupancy";

/// Scores generated sequences against real ones of the same length.
pub fn evaluate_all<S: AsRef<[f64]>, G: AsRef<[f64]>>(
    device: &str,
    real: &[S],
    gen: &[G],
    clustering: &Clustering,
    cfg: &EvalConfig,
) -> Result<DeviceEvaluation> {
    let real_histogram = assign_to_clusters(real, clustering)?;
    let generated_histogram = assign_to_clusters(gen, clustering)?;
    let div = diversity_rmse(gen, cfg.diversity_cap, cfg.seed)?;
    let metrics = MetricsReport {
        me: mean_error(real, gen)?,
        std_err: std_error(real, gen)?,
        fid_rmse: fidelity_rmse(real, gen)?,
        period_mae: period_mae(real, gen)?,
        feature_fid: feature_fid(real, gen)?,
        div_rmse: div.value,
        cluster_coverage: cluster_coverage(&generated_histogram),
        cluster_js: cluster_js(&real_histogram, &generated_histogram)?,
    };
    let mut notes = vec![CJ_NOTE.to_string()];
    if div.subsampled {
        notes.push(format!(
            "diversity computed on a seeded subsample of {} of {} sequences",
            div.sequences_used,
            gen.len()
        ));
    }
    Ok(DeviceEvaluation {
        schema_version: REPORT_SCHEMA_VERSION,
        device: device.to_string(),
        metrics,
        real_histogram,
        generated_histogram,
        real_sequences: real.len(),
        generated_sequences: gen.len(),
        diversity_subsampled: div.subsampled,
        diversity_sequences_used: div.sequences_used,
        notes,
    })
}

/// Per-device rows followed by an `average` row, columns in report order.
pub fn write_aggregate_csv<W: Write>(w: W, rows: &[(String, MetricsReport)]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let err = |e: csv::Error| CoreError::Format(format!("csv write failed: {e}"));
    let mut header = vec!["device"];
    header.extend(REPORT_COLUMNS);
    out.write_record(&header).map_err(err)?;
    let reports: Vec<MetricsReport> = rows.iter().map(|(_, r)| *r).collect();
    let avg = MetricsReport::mean_of(&reports);
    for (name, r) in rows.iter().map(|(n, r)| (n.as_str(), r)).chain(avg.as_ref().map(|a| ("average", a))) {
        let mut rec = vec![name.to_string()];
        rec.extend(r.values().iter().map(|&v| format_value(v)));
        out.write_record(&rec).map_err(err)?;
    }
    out.flush().map_err(|e| CoreError::Format(e.to_string()))?;
    Ok(())
}
