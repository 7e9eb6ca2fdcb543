//! Adversarial training and sampling for segment, surrogate and spike-window
//! generators.
//!
//! Every model is trained on data min-max scaled to `[-1, 1]` with the
//! range stored alongside the networks; [`sample`] maps generator outputs
//! back to watts.

use std::io::{Read, Write};

use loadgan_neural::{
    adam_step, discriminator_loss, generator_loss, read_checkpoint, write_checkpoint, Activation,
    AdamState, LayerSpec, Network, NeuralError, OptimConfig, Tensor,
};
use ndarray::{s, Array3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::trace::format_value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlock {
    pub channels: usize,
    pub kernel: usize,
}

/// Widths and kernels of the convolutional generator and discriminator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvArch {
    /// Channels of the feature map the latent vector is projected to.
    pub bridge_channels: usize,
    pub generator: Vec<ConvBlock>,
    pub discriminator: Vec<ConvBlock>,
}

impl Default for ConvArch {
    fn default() -> Self {
        let b = |channels, kernel| ConvBlock { channels, kernel };
        Self {
            bridge_channels: 64,
            generator: vec![b(64, 3), b(128, 5), b(256, 5)],
            discriminator: vec![b(128, 5), b(64, 3)],
        }
    }
}

impl ConvArch {
    /// A narrower stack with the same topology, for quick runs.
    pub fn scaled(&self, divisor: usize) -> Self {
        let d = divisor.max(1);
        let shrink = |v: &[ConvBlock]| {
            v.iter()
                .map(|c| ConvBlock {
                    channels: (c.channels / d).max(1),
                    kernel: c.kernel,
                })
                .collect()
        };
        Self {
            bridge_channels: (self.bridge_channels / d).max(1),
            generator: shrink(&self.generator),
            discriminator: shrink(&self.discriminator),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecurrentArch {
    pub hidden: usize,
    pub layers: usize,
}

impl Default for RecurrentArch {
    fn default() -> Self {
        Self {
            hidden: 64,
            layers: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub latent_dim: usize,
    pub optim: OptimConfig,
    pub seed: u64,
    pub d_steps_per_g: usize,
    pub conv: ConvArch,
    pub recurrent: RecurrentArch,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1500,
            batch_size: 32,
            latent_dim: 100,
            optim: OptimConfig::default(),
            seed: 0,
            d_steps_per_g: 1,
            conv: ConvArch::default(),
            recurrent: RecurrentArch::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.latent_dim == 0 || self.d_steps_per_g == 0 {
            return Err(CoreError::Config(
                "epochs, batch_size, latent_dim and d_steps_per_g must be >= 1".into(),
            ));
        }
        self.optim.validate()?;
        let blocks = self.conv.generator.iter().chain(&self.conv.discriminator);
        if self.conv.bridge_channels == 0
            || blocks.clone().any(|b| b.channels == 0 || b.kernel % 2 == 0)
        {
            return Err(CoreError::Config(
                "conv blocks need >= 1 channel and an odd kernel".into(),
            ));
        }
        if self.recurrent.hidden == 0 || self.recurrent.layers == 0 {
            return Err(CoreError::Config("recurrent hidden size and depth must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Cluster,
    Continuous,
    Square,
    Spike,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Cluster => "cluster",
            Branch::Continuous => "continuous",
            Branch::Square => "square",
            Branch::Spike => "spike",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub d_loss: f64,
    pub g_loss: f64,
}

#[derive(Debug, Clone)]
pub struct GanModel {
    pub generator: Network,
    pub discriminator: Network,
    pub gen_adam: AdamState,
    pub disc_adam: AdamState,
    /// `(min, max)` of the training data in watts.
    pub data_range: (f64, f64),
    pub branch: Branch,
    pub latent_dim: usize,
    pub output_len: usize,
    pub seed: u64,
    pub history: Vec<EpochLoss>,
}

/// Scales values into `[-1, 1]` given the data range; a degenerate range
/// maps everything to 0.
pub fn normalize_value(v: f64, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        2.0 * (v - lo) / (hi - lo) - 1.0
    } else {
        0.0
    }
}

pub fn denormalize_value(y: f64, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        (y + 1.0) * 0.5 * (hi - lo) + lo
    } else {
        lo
    }
}

pub fn data_range<S: AsRef<[f64]>>(set: &[S]) -> (f64, f64) {
    set.iter()
        .flat_map(|s| s.as_ref())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

pub fn conv_generator_specs(latent: usize, len: usize, arch: &ConvArch) -> Vec<LayerSpec> {
    let mut specs = vec![
        LayerSpec::Dense {
            inputs: latent,
            units: arch.bridge_channels * len,
        },
        LayerSpec::Reshape {
            channels: arch.bridge_channels,
            length: len,
        },
    ];
    let mut c_in = arch.bridge_channels;
    for b in &arch.generator {
        specs.push(LayerSpec::Conv1d {
            in_channels: c_in,
            out_channels: b.channels,
            kernel: b.kernel,
        });
        specs.push(LayerSpec::Activation {
            function: Activation::Relu,
        });
        c_in = b.channels;
    }
    specs.extend([
        LayerSpec::Flatten,
        LayerSpec::Dense {
            inputs: c_in * len,
            units: len,
        },
        LayerSpec::Activation {
            function: Activation::Tanh,
        },
        LayerSpec::Reshape {
            channels: 1,
            length: len,
        },
    ]);
    specs
}

pub fn conv_discriminator_specs(len: usize, arch: &ConvArch) -> Vec<LayerSpec> {
    let mut specs = Vec::new();
    let mut c_in = 1;
    for b in &arch.discriminator {
        specs.push(LayerSpec::Conv1d {
            in_channels: c_in,
            out_channels: b.channels,
            kernel: b.kernel,
        });
        specs.push(LayerSpec::Activation {
            function: Activation::LeakyRelu,
        });
        c_in = b.channels;
    }
    specs.extend([
        LayerSpec::Flatten,
        LayerSpec::Dense {
            inputs: c_in * len,
            units: 1,
        },
        LayerSpec::Activation {
            function: Activation::Sigmoid,
        },
    ]);
    specs
}

pub fn recurrent_generator_specs(latent: usize, len: usize, arch: &RecurrentArch) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Dense {
            inputs: latent,
            units: arch.hidden,
        },
        LayerSpec::Repeat { length: len },
        LayerSpec::Lstm {
            input: arch.hidden,
            hidden: arch.hidden,
            layers: arch.layers,
            return_sequences: true,
        },
        LayerSpec::Conv1d {
            in_channels: arch.hidden,
            out_channels: 1,
            kernel: 1,
        },
        LayerSpec::Activation {
            function: Activation::Tanh,
        },
    ]
}

pub fn recurrent_discriminator_specs(arch: &RecurrentArch) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Lstm {
            input: 1,
            hidden: arch.hidden,
            layers: arch.layers,
            return_sequences: false,
        },
        LayerSpec::Flatten,
        LayerSpec::Dense {
            inputs: arch.hidden,
            units: 1,
        },
        LayerSpec::Activation {
            function: Activation::Sigmoid,
        },
    ]
}

fn latent_batch(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Tensor {
    Array3::from_shape_simple_fn((n, dim, 1), || rng.sample(StandardNormal))
}

fn check_tanh_range(t: &Tensor, epoch: usize) -> Result<()> {
    if t.iter().all(|v| (-1.0..=1.0).contains(v)) {
        Ok(())
    } else {
        Err(CoreError::Divergence {
            epoch,
            message: "generator output left [-1, 1]".into(),
        })
    }
}

fn diverged(epoch: usize) -> impl Fn(NeuralError) -> CoreError {
    move |e| match e {
        NeuralError::Divergence(tensor) => CoreError::Divergence {
            epoch,
            message: format!("non-finite gradient in `{tensor}`"),
        },
        other => CoreError::Neural(other),
    }
}

/// One discriminator update on `real` against fresh fakes; returns its loss.
fn discriminator_step(
    model: &mut GanModel,
    real: &Tensor,
    optim: &OptimConfig,
    rng: &mut ChaCha8Rng,
    epoch: usize,
) -> Result<f64> {
    let b = real.dim().0;
    let z = latent_batch(rng, b, model.latent_dim);
    let fake = model.generator.predict(&z)?;
    check_tanh_range(&fake, epoch)?;
    let both = ndarray::concatenate(ndarray::Axis(0), &[real.view(), fake.view()])
        .map_err(|e| CoreError::Shape(e.to_string()))?;
    let out = model.discriminator.forward(&both)?;
    let probs: Vec<f64> = out.iter().copied().collect();
    let (loss, g_real, g_fake) = discriminator_loss(&probs[..b], &probs[b..]);
    if !loss.is_finite() {
        return Err(CoreError::Divergence {
            epoch,
            message: "discriminator loss is not finite".into(),
        });
    }
    let grad = Array3::from_shape_vec(out.dim(), [g_real, g_fake].concat())
        .map_err(|e| CoreError::Shape(e.to_string()))?;
    model.discriminator.backward(&grad)?;
    model.discriminator.clear_cache();
    adam_step(&mut model.discriminator, &mut model.disc_adam, optim).map_err(diverged(epoch))?;
    Ok(loss)
}

/// One generator update through the (frozen) discriminator; returns its loss.
fn generator_step(
    model: &mut GanModel,
    b: usize,
    optim: &OptimConfig,
    rng: &mut ChaCha8Rng,
    epoch: usize,
) -> Result<f64> {
    let z = latent_batch(rng, b, model.latent_dim);
    let fake = model.generator.forward(&z)?;
    check_tanh_range(&fake, epoch)?;
    let out = model.discriminator.forward(&fake)?;
    let probs: Vec<f64> = out.iter().copied().collect();
    let lg = generator_loss(&probs);
    if !lg.loss.is_finite() {
        return Err(CoreError::Divergence {
            epoch,
            message: "generator loss is not finite".into(),
        });
    }
    let grad = Array3::from_shape_vec(out.dim(), lg.grad).map_err(|e| CoreError::Shape(e.to_string()))?;
    let dx = model.discriminator.backward(&grad)?;
    model.discriminator.clear_cache();
    model.discriminator.zero_grad();
    model.generator.backward(&dx)?;
    model.generator.clear_cache();
    adam_step(&mut model.generator, &mut model.gen_adam, optim).map_err(diverged(epoch))?;
    Ok(lg.loss)
}

fn to_tensor(rows: &[&[f64]]) -> Tensor {
    let len = rows.first().map_or(0, |r| r.len());
    Array3::from_shape_fn((rows.len(), 1, len), |(i, _, t)| rows[i][t])
}

/// Runs `epochs` passes over `data` (already in `[-1, 1]`), in shuffled
/// minibatches with the partial final batch kept.
fn fit(model: &mut GanModel, data: &[Vec<f64>], cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<()> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let (mut d_sum, mut g_sum, mut batches) = (0.0, 0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let rows: Vec<&[f64]> = chunk.iter().map(|&i| data[i].as_slice()).collect();
            let real = to_tensor(&rows);
            let mut d_loss = 0.0;
            for _ in 0..cfg.d_steps_per_g {
                d_loss = discriminator_step(model, &real, &cfg.optim, rng, epoch)?;
            }
            let g_loss = generator_step(model, chunk.len(), &cfg.optim, rng, epoch)?;
            d_sum += d_loss;
            g_sum += g_loss;
            batches += 1;
        }
        let rec = EpochLoss {
            epoch,
            d_loss: d_sum / batches as f64,
            g_loss: g_sum / batches as f64,
        };
        if !(rec.d_loss.is_finite() && rec.g_loss.is_finite()) {
            return Err(CoreError::Divergence {
                epoch,
                message: "epoch loss is not finite".into(),
            });
        }
        model.history.push(rec);
    }
    Ok(())
}

fn uniform_length<S: AsRef<[f64]>>(data: &[S]) -> Result<usize> {
    let len = data.first().map_or(0, |s| s.as_ref().len());
    if data.iter().any(|s| s.as_ref().len() != len) {
        return Err(CoreError::Shape("training sequences differ in length".into()));
    }
    if len == 0 {
        return Err(CoreError::Shape("training sequences are empty".into()));
    }
    Ok(len)
}

/// Builds, trains and returns a model for equal-length sequences in watts.
pub fn train_gan<S: AsRef<[f64]>>(
    data: &[S],
    gen_specs: Vec<LayerSpec>,
    disc_specs: Vec<LayerSpec>,
    branch: Branch,
    cfg: &TrainConfig,
) -> Result<GanModel> {
    cfg.validate()?;
    let len = uniform_length(data)?;
    let range = data_range(data);
    let normalized: Vec<Vec<f64>> = data
        .iter()
        .map(|s| s.as_ref().iter().map(|&v| normalize_value(v, range)).collect())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let generator = Network::new(gen_specs, &mut rng)?;
    let discriminator = Network::new(disc_specs, &mut rng)?;
    let mut model = GanModel {
        gen_adam: AdamState::for_network(&generator),
        disc_adam: AdamState::for_network(&discriminator),
        generator,
        discriminator,
        data_range: range,
        branch,
        latent_dim: cfg.latent_dim,
        output_len: len,
        seed: cfg.seed,
        history: Vec::with_capacity(cfg.epochs),
    };
    fit(&mut model, &normalized, cfg, &mut rng)?;
    Ok(model)
}

/// Convolutional GAN on the segments of one cluster.
pub fn train_cluster_gan<S: AsRef<[f64]>>(segments: &[S], cfg: &TrainConfig) -> Result<GanModel> {
    train_conv_gan(segments, Branch::Cluster, cfg)
}

/// Same architecture as [`train_cluster_gan`], tagged with another branch.
pub fn train_conv_gan<S: AsRef<[f64]>>(
    segments: &[S],
    branch: Branch,
    cfg: &TrainConfig,
) -> Result<GanModel> {
    if segments.len() < 2 {
        return Err(CoreError::InsufficientData(format!(
            "GAN training needs at least 2 segments, got {}",
            segments.len()
        )));
    }
    let len = uniform_length(segments)?;
    train_gan(
        segments,
        conv_generator_specs(cfg.latent_dim, len, &cfg.conv),
        conv_discriminator_specs(len, &cfg.conv),
        branch,
        cfg,
    )
}

/// Pools every segment of a device into a single training set.
pub fn ablation_no_clusters<S: AsRef<[f64]>>(segments: &[S], cfg: &TrainConfig) -> Result<GanModel> {
    train_cluster_gan(segments, cfg)
}

/// Recurrent GAN on equal-length surrogate windows.
pub fn train_continuous_gan<S: AsRef<[f64]>>(windows: &[S], cfg: &TrainConfig) -> Result<GanModel> {
    if windows.is_empty() {
        return Err(CoreError::InsufficientData("no windows to train on".into()));
    }
    let len = uniform_length(windows)?;
    train_gan(
        windows,
        recurrent_generator_specs(cfg.latent_dim, len, &cfg.recurrent),
        recurrent_discriminator_specs(&cfg.recurrent),
        Branch::Continuous,
        cfg,
    )
}

const SAMPLE_CHUNK: usize = 64;

/// Generator outputs before denormalization, each of length `output_len`.
pub fn sample_normalized(model: &mut GanModel, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut left = n;
    while left > 0 {
        let b = left.min(SAMPLE_CHUNK);
        let z = latent_batch(&mut rng, b, model.latent_dim);
        let y = model.generator.predict(&z)?;
        check_tanh_range(&y, model.history.len())?;
        for i in 0..b {
            out.push(y.slice(s![i, 0, ..]).to_vec());
        }
        left -= b;
    }
    Ok(out)
}

/// `n` generated sequences in watts; identical for identical seeds.
pub fn sample(model: &mut GanModel, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let range = model.data_range;
    Ok(sample_normalized(model, n, seed)?
        .into_iter()
        .map(|s| s.into_iter().map(|y| denormalize_value(y, range)).collect())
        .collect())
}

/// Fine-tunes several same-length generators against one discriminator.
///
/// The shared discriminator starts from the first model's discriminator and
/// sees every model's training data (in that model's normalized range) as
/// real and every generator's output as fake. Each generator is updated
/// against the shared discriminator. Returns the shared discriminator's
/// per-epoch losses.
pub fn shared_discriminator_finetune(
    models: &mut [GanModel],
    datasets: &[Vec<Vec<f64>>],
    epochs: usize,
    cfg: &TrainConfig,
) -> Result<Vec<EpochLoss>> {
    if models.is_empty() || models.len() != datasets.len() {
        return Err(CoreError::Config("one dataset per model is required".into()));
    }
    let len = models[0].output_len;
    if models.iter().any(|m| m.output_len != len) {
        return Err(CoreError::Shape("shared discriminator needs equal output lengths".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut shared = models[0].discriminator.clone();
    let mut shared_adam = AdamState::for_network(&shared);
    let normalized: Vec<Vec<Vec<f64>>> = models
        .iter()
        .zip(datasets)
        .map(|(m, d)| {
            d.iter()
                .map(|s| s.iter().map(|&v| normalize_value(v, m.data_range)).collect())
                .collect()
        })
        .collect();
    let mut history = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let (mut d_sum, mut g_sum) = (0.0, 0.0);
        for (m, data) in models.iter_mut().zip(&normalized) {
            let b = data.len().min(cfg.batch_size);
            let idx: Vec<usize> = rand::seq::index::sample(&mut rng, data.len(), b).into_vec();
            let rows: Vec<&[f64]> = idx.iter().map(|&i| data[i].as_slice()).collect();
            let real = to_tensor(&rows);
            // Swap the shared network in so the per-model steps train it.
            std::mem::swap(&mut m.discriminator, &mut shared);
            std::mem::swap(&mut m.disc_adam, &mut shared_adam);
            let d = discriminator_step(m, &real, &cfg.optim, &mut rng, epoch);
            let g = d.and_then(|d| Ok((d, generator_step(m, b, &cfg.optim, &mut rng, epoch)?)));
            std::mem::swap(&mut m.discriminator, &mut shared);
            std::mem::swap(&mut m.disc_adam, &mut shared_adam);
            let (d, g) = g?;
            d_sum += d;
            g_sum += g;
        }
        let k = models.len() as f64;
        history.push(EpochLoss {
            epoch,
            d_loss: d_sum / k,
            g_loss: g_sum / k,
        });
    }
    for m in models.iter_mut() {
        m.discriminator = shared.clone();
        m.disc_adam = shared_adam.clone();
    }
    Ok(history)
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelMeta {
    branch: Branch,
    data_range: (f64, f64),
    latent_dim: usize,
    output_len: usize,
    seed: u64,
    history: Vec<EpochLoss>,
    #[serde(default)]
    extra: serde_json::Value,
}

/// Writes both networks, their Adam states and the model metadata.
/// `extra` is stored verbatim (e.g. spike gap statistics).
pub fn write_model<W: Write>(w: W, model: &GanModel, extra: serde_json::Value) -> Result<()> {
    let meta = ModelMeta {
        branch: model.branch,
        data_range: model.data_range,
        latent_dim: model.latent_dim,
        output_len: model.output_len,
        seed: model.seed,
        history: model.history.clone(),
        extra,
    };
    write_checkpoint(
        w,
        &serde_json::to_value(&meta)?,
        &[
            ("generator", &model.generator, &model.gen_adam),
            ("discriminator", &model.discriminator, &model.disc_adam),
        ],
    )?;
    Ok(())
}

pub fn read_model<R: Read>(r: R) -> Result<(GanModel, serde_json::Value)> {
    let mut ck = read_checkpoint(r)?;
    let meta: ModelMeta = serde_json::from_value(ck.meta.clone())?;
    let g = ck.take("generator")?;
    let d = ck.take("discriminator")?;
    Ok((
        GanModel {
            generator: g.network,
            discriminator: d.network,
            gen_adam: g.adam,
            disc_adam: d.adam,
            data_range: meta.data_range,
            branch: meta.branch,
            latent_dim: meta.latent_dim,
            output_len: meta.output_len,
            seed: meta.seed,
            history: meta.history,
        },
        meta.extra,
    ))
}

pub fn write_loss_csv<W: Write>(w: W, history: &[EpochLoss]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let err = |e: csv::Error| CoreError::Format(format!("csv write failed: {e}"));
    out.write_record(["epoch", "d_loss", "g_loss"]).map_err(err)?;
    for h in history {
        out.write_record([h.epoch.to_string(), format_value(h.d_loss), format_value(h.g_loss)])
            .map_err(err)?;
    }
    out.flush().map_err(|e| CoreError::Format(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> TrainConfig {
        TrainConfig {
            epochs: 3,
            batch_size: 4,
            latent_dim: 5,
            conv: ConvArch {
                bridge_channels: 2,
                generator: vec![ConvBlock { channels: 3, kernel: 3 }],
                discriminator: vec![ConvBlock { channels: 2, kernel: 3 }],
            },
            recurrent: RecurrentArch { hidden: 3, layers: 2 },
            ..TrainConfig::default()
        }
    }

    fn segments(n: usize, len: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| (0..len).map(|t| ((i * 7 + t * 3) % 11) as f64 * 10.0).collect())
            .collect()
    }

    #[test]
    fn normalization_round_trip() {
        let r = (-3.0, 17.5);
        for v in [-3.0, 0.0, 4.2, 17.5] {
            assert!((denormalize_value(normalize_value(v, r), r) - v).abs() < 1e-9);
        }
        assert_eq!(normalize_value(5.0, (5.0, 5.0)), 0.0);
        assert_eq!(denormalize_value(0.3, (5.0, 5.0)), 5.0);
    }

    #[test]
    fn cluster_gan_trains_and_samples() {
        let data = segments(6, 8);
        let mut m = train_cluster_gan(&data, &tiny()).unwrap();
        assert_eq!(m.history.len(), 3);
        assert!(m.history.iter().all(|h| h.d_loss.is_finite() && h.g_loss.is_finite()));
        let raw = sample_normalized(&mut m, 70, 1).unwrap();
        assert_eq!(raw.len(), 70);
        assert!(raw.iter().flatten().all(|v| (-1.0..=1.0).contains(v)));
        let a = sample(&mut m, 5, 9).unwrap();
        let b = sample(&mut m, 5, 9).unwrap();
        assert_eq!(a, b);
        assert!(sample(&mut m, 0, 9).unwrap().is_empty());
    }

    #[test]
    fn preconditions() {
        assert!(matches!(
            train_cluster_gan(&segments(1, 8), &tiny()),
            Err(CoreError::InsufficientData(_))
        ));
        assert!(train_continuous_gan(&Vec::<Vec<f64>>::new(), &tiny()).is_err());
        let ragged = vec![vec![1.0; 5], vec![1.0; 6]];
        assert!(matches!(train_continuous_gan(&ragged, &tiny()), Err(CoreError::Shape(_))));
    }

    #[test]
    fn continuous_gan_runs() {
        let mut m = train_continuous_gan(&[vec![2.0, 3.0, 4.0, 3.0, 2.0]], &tiny()).unwrap();
        assert_eq!(m.branch, Branch::Continuous);
        assert_eq!(sample(&mut m, 2, 0).unwrap()[0].len(), 5);
    }

    #[test]
    fn checkpoint_round_trip_reproduces_samples() {
        let mut m = train_cluster_gan(&segments(5, 8), &tiny()).unwrap();
        let mut bytes = Vec::new();
        write_model(&mut bytes, &m, serde_json::json!({"k": 1})).unwrap();
        let (mut back, extra) = read_model(bytes.as_slice()).unwrap();
        assert_eq!(extra, serde_json::json!({"k": 1}));
        assert_eq!(back.history, m.history);
        assert_eq!(back.data_range, m.data_range);
        assert_eq!(sample(&mut back, 3, 4).unwrap(), sample(&mut m, 3, 4).unwrap());
    }

    #[test]
    fn shared_discriminator_phase() {
        let cfg = tiny();
        let a = segments(4, 8);
        let b: Vec<Vec<f64>> = segments(5, 8).into_iter().map(|s| s.iter().map(|v| v + 50.0).collect()).collect();
        let mut models = vec![train_cluster_gan(&a, &cfg).unwrap(), train_cluster_gan(&b, &cfg).unwrap()];
        let h = shared_discriminator_finetune(&mut models, &[a, b], 2, &cfg).unwrap();
        assert_eq!(h.len(), 2);
        let p0: Vec<f64> = models[0].discriminator.params().iter().flat_map(|p| p.values.clone()).collect();
        let p1: Vec<f64> = models[1].discriminator.params().iter().flat_map(|p| p.values.clone()).collect();
        assert_eq!(p0, p1);
    }
}
