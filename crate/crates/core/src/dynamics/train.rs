use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{block_split, DynamicsSample};
use super::model::{
    AffineGradients, AffineModel, FeatureSet, OutputScaling, Standardizer, TrainedModel, UnstructuredModel, WrenchModel,
};
use super::symmetry::{symmetry_loss, symmetry_loss_grad, symmetry_residual_norm, SymmetryConfig};
use super::types::{EffectivenessMatrix, WrenchVector, CONTROL_DIM, WRENCH_DIM};
use crate::error::{Error, Result};
use crate::nncore::{AdamConfig, GradientTape, OptimizerState};
use crate::probe::lr_decay;

/// Smallest dataset `train_dynamics` accepts.
pub const MIN_TRAINING_SAMPLES: usize = 100;

/// Model family and input set of an experiment arm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    AffineSym,
    Affine,
    AffineNoWs,
    Unstructured,
    UnstructuredNoWs,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::AffineSym,
        Variant::Affine,
        Variant::AffineNoWs,
        Variant::Unstructured,
        Variant::UnstructuredNoWs,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::AffineSym => "affine_sym",
            Variant::Affine => "affine",
            Variant::AffineNoWs => "affine_no_ws",
            Variant::Unstructured => "unstructured",
            Variant::UnstructuredNoWs => "unstructured_no_ws",
        }
    }

    pub fn is_affine(self) -> bool {
        matches!(self, Variant::AffineSym | Variant::Affine | Variant::AffineNoWs)
    }

    pub fn features(self) -> FeatureSet {
        match self {
            Variant::AffineNoWs | Variant::UnstructuredNoWs => FeatureSet::ProbesOnly,
            _ => FeatureSet::Full,
        }
    }

    /// Whether the symmetry penalty is active for this arm.
    pub fn uses_symmetry(self) -> bool {
        self == Variant::AffineSym
    }

    /// Training configuration for this arm derived from a shared base.
    pub fn configure(self, base: &DynamicsTrainConfig) -> DynamicsTrainConfig {
        let mut cfg = base.clone();
        cfg.features = self.features();
        cfg.structure = if self.is_affine() {
            ModelStructure::Affine
        } else {
            ModelStructure::Unstructured
        };
        if !self.uses_symmetry() {
            cfg.symmetry.lambda = 0.0;
        }
        cfg
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s.trim())
            .ok_or_else(|| {
                Error::Usage(format!(
                    "unknown variant {s:?}; expected one of affine_sym, affine, affine_no_ws, unstructured, unstructured_no_ws"
                ))
            })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelStructure {
    #[default]
    Affine,
    Unstructured,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DynamicsTrainConfig {
    pub structure: ModelStructure,
    pub features: FeatureSet,
    pub hidden: Vec<usize>,
    pub symmetry: SymmetryConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub final_lr_fraction: f64,
    /// Contiguous block length of the 80/20 train/validation split.
    pub block_len: usize,
    pub seed: u64,
}

impl Default for DynamicsTrainConfig {
    fn default() -> Self {
        Self {
            structure: ModelStructure::Affine,
            features: FeatureSet::Full,
            hidden: vec![64, 64],
            symmetry: SymmetryConfig::default(),
            epochs: 60,
            batch_size: 32,
            adam: AdamConfig::default(),
            final_lr_fraction: 0.1,
            block_len: 50,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsTrainReport {
    pub epoch_loss: Vec<f64>,
    pub train_samples: usize,
    pub val_samples: usize,
    /// `None` when the split left no validation blocks.
    pub val_rmse: Option<f64>,
}

/// Mean squared wrench error (over samples and channels) plus the mean
/// symmetry penalty on `B(o)`.
pub fn training_loss(model: &AffineModel, batch: &[DynamicsSample], sym: &SymmetryConfig) -> Result<f64> {
    affine_loss(model, batch, sym, None)
}

/// [`training_loss`] together with its gradient with respect to every parameter.
pub fn training_loss_grad(
    model: &AffineModel,
    batch: &[DynamicsSample],
    sym: &SymmetryConfig,
) -> Result<(f64, AffineGradients)> {
    let mut grads = model.zero_gradients();
    let loss = affine_loss(model, batch, sym, Some(&mut grads))?;
    Ok((loss, grads))
}

fn affine_loss(
    model: &AffineModel,
    batch: &[DynamicsSample],
    sym: &SymmetryConfig,
    mut grads: Option<&mut AffineGradients>,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset("training batch"));
    }
    sym.validate()?;
    let n = batch.len() as f64;
    let mut total = 0.0;
    for s in batch {
        let pass = model.pass(&s.observation)?;
        let (a, b) = model.heads_to_physical(&pass);
        let u = s.control.vector();
        let err = a + b * u - s.wrench.vector();
        total += err.norm_squared() / (WRENCH_DIM as f64 * n) + symmetry_loss(&b, sym)? / n;
        if let Some(g) = grads.as_deref_mut() {
            let d_y: WrenchVector = err * (2.0 / (WRENCH_DIM as f64 * n));
            let d_b: EffectivenessMatrix = d_y * u.transpose() + symmetry_loss_grad(&b, sym)? / n;
            model.accumulate(&pass, &d_y, &d_b, g)?;
        }
    }
    Ok(total)
}

/// Mean squared wrench error of the unstructured baseline.
pub fn unstructured_loss(model: &UnstructuredModel, batch: &[DynamicsSample]) -> Result<f64> {
    unstructured_loss_impl(model, batch, None)
}

pub fn unstructured_loss_grad(model: &UnstructuredModel, batch: &[DynamicsSample]) -> Result<(f64, GradientTape)> {
    let mut tape = model.net.zero_tape();
    let loss = unstructured_loss_impl(model, batch, Some(&mut tape))?;
    Ok((loss, tape))
}

fn unstructured_loss_impl(
    model: &UnstructuredModel,
    batch: &[DynamicsSample],
    mut tape: Option<&mut GradientTape>,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset("training batch"));
    }
    let n = batch.len() as f64;
    let mut total = 0.0;
    for s in batch {
        let trace = model
            .net
            .forward_traced(&model.joint_input(&s.observation, &s.control))?;
        let err = model.to_physical(trace.output()) - s.wrench.vector();
        total += err.norm_squared() / (WRENCH_DIM as f64 * n);
        if let Some(t) = tape.as_deref_mut() {
            let up: Vec<f64> = (0..WRENCH_DIM)
                .map(|i| 2.0 * err[i] * model.output.scale[i] / (WRENCH_DIM as f64 * n))
                .collect();
            model.net.backpropagate(&trace, &up, Some(t))?;
        }
    }
    Ok(total)
}

/// Trains one model on the training part of a block split and reports the
/// validation RMSE on the held-out blocks.
pub fn train_dynamics(
    dataset: &[DynamicsSample],
    cfg: &DynamicsTrainConfig,
) -> Result<(TrainedModel, DynamicsTrainReport)> {
    if dataset.len() < MIN_TRAINING_SAMPLES {
        return Err(Error::DegenerateDataset(format!(
            "need at least {MIN_TRAINING_SAMPLES} samples, got {}",
            dataset.len()
        )));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::InvalidParameter("epochs and batch_size must be positive".into()));
    }
    cfg.symmetry.validate()?;
    let (train, val) = block_split(dataset, cfg.block_len);
    warn_on_constant_controls(&train);

    let (model, epoch_loss) = match cfg.structure {
        ModelStructure::Affine => {
            let (m, l) = fit_affine(&train, cfg)?;
            (TrainedModel::Affine(m), l)
        }
        ModelStructure::Unstructured => {
            let (m, l) = fit_unstructured(&train, cfg)?;
            (TrainedModel::Unstructured(m), l)
        }
    };
    let val_rmse = if val.is_empty() {
        None
    } else {
        Some(eval_rmse(&model, &val)?)
    };
    log::info!(
        "trained {:?}/{:?} on {} samples, validation RMSE {val_rmse:?}",
        cfg.structure,
        cfg.features,
        train.len()
    );
    Ok((
        model,
        DynamicsTrainReport {
            epoch_loss,
            train_samples: train.len(),
            val_samples: val.len(),
            val_rmse,
        },
    ))
}

fn warn_on_constant_controls(train: &[DynamicsSample]) {
    for k in 0..CONTROL_DIM {
        let first = train[0].control.0[k];
        if train.iter().all(|s| s.control.0[k] == first) {
            log::warn!("control input {k} is constant in the training data; its effectiveness is unidentifiable");
        }
    }
}

fn output_scaling(train: &[DynamicsSample]) -> OutputScaling {
    let y = Standardizer::fit(train.iter().map(|s| &s.wrench.0[..]), WRENCH_DIM);
    let n = (train.len() * CONTROL_DIM) as f64;
    let u_ms = train.iter().flat_map(|s| s.control.0).map(|v| v * v).sum::<f64>() / n;
    let control_scale = if u_ms.sqrt() > 1e-9 { u_ms.sqrt() } else { 1.0 };
    OutputScaling {
        offset: std::array::from_fn(|i| y.mean[i]),
        scale: std::array::from_fn(|i| y.std[i]),
        control_scale,
    }
}

fn fit_affine(train: &[DynamicsSample], cfg: &DynamicsTrainConfig) -> Result<(AffineModel, Vec<f64>)> {
    let mut model = AffineModel::new(cfg.features, &cfg.hidden, cfg.symmetry.clone(), cfg.seed)?;
    let width = cfg.features.width();
    let input = Standardizer::fit(train.iter().map(|s| cfg.features.select(&s.observation)), width);
    model.set_scaling(input, output_scaling(train))?;

    let mut opts = model
        .networks_mut()
        .map(|net| OptimizerState::new(net, cfg.adam))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut grads = model.zero_gradients();
    let sym = cfg.symmetry.clone();
    let epoch_loss = run_epochs(train, cfg, &mut opts, |batch, opts| {
        grads.zero();
        let loss = affine_loss(&model, batch, &sym, Some(&mut grads))?;
        let tapes = [&grads.backbone, &grads.a_head, &grads.b_head];
        for ((net, opt), tape) in model.networks_mut().into_iter().zip(opts.iter_mut()).zip(tapes) {
            opt.step(net, tape)?;
        }
        Ok(loss)
    })?;
    if !model.all_finite() {
        return Err(Error::Numerical("dynamics training diverged".into()));
    }
    Ok((model, epoch_loss))
}

fn fit_unstructured(train: &[DynamicsSample], cfg: &DynamicsTrainConfig) -> Result<(UnstructuredModel, Vec<f64>)> {
    let mut model = UnstructuredModel::new(cfg.features, &cfg.hidden, cfg.seed)?;
    let width = cfg.features.width() + CONTROL_DIM;
    let rows: Vec<Vec<f64>> = train
        .iter()
        .map(|s| {
            let mut x = cfg.features.select(&s.observation).to_vec();
            x.extend_from_slice(&s.control.0);
            x
        })
        .collect();
    let input = Standardizer::fit(rows.iter().map(|r| r.as_slice()), width);
    model.set_scaling(input, output_scaling(train))?;

    let mut opts = vec![OptimizerState::new(&model.net, cfg.adam)?];
    let mut tape = model.net.zero_tape();
    let epoch_loss = run_epochs(train, cfg, &mut opts, |batch, opts| {
        tape.zero();
        let loss = unstructured_loss_impl(&model, batch, Some(&mut tape))?;
        opts[0].step(&mut model.net, &tape)?;
        Ok(loss)
    })?;
    if !model.net.all_finite() {
        return Err(Error::Numerical("dynamics training diverged".into()));
    }
    Ok((model, epoch_loss))
}

/// Shared minibatch loop; returns the mean batch loss of every epoch.
fn run_epochs(
    train: &[DynamicsSample],
    cfg: &DynamicsTrainConfig,
    opts: &mut [OptimizerState],
    mut step: impl FnMut(&[DynamicsSample], &mut [OptimizerState]) -> Result<f64>,
) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let decay = lr_decay(cfg.final_lr_fraction, cfg.epochs);
    let mut batch = Vec::with_capacity(cfg.batch_size);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cfg.adam.learning_rate * decay.powi(epoch as i32);
        for o in opts.iter_mut() {
            o.set_learning_rate(lr);
        }
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut count = 0;
        for idx in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(idx.iter().map(|&i| train[i]));
            sum += step(&batch, opts)?;
            count += 1;
        }
        history.push(sum / count as f64);
    }
    Ok(history)
}

/// Aggregate RMSE over all samples and all six channels (forces and moments
/// mixed; a comparative aggregate).
pub fn eval_rmse(model: &impl WrenchModel, dataset: &[DynamicsSample]) -> Result<f64> {
    let per = channel_mse(model, dataset)?;
    Ok((per.iter().sum::<f64>() / WRENCH_DIM as f64).sqrt())
}

/// RMSE of each wrench channel separately.
pub fn channel_rmse(model: &impl WrenchModel, dataset: &[DynamicsSample]) -> Result<[f64; WRENCH_DIM]> {
    Ok(channel_mse(model, dataset)?.map(f64::sqrt))
}

fn channel_mse(model: &impl WrenchModel, dataset: &[DynamicsSample]) -> Result<[f64; WRENCH_DIM]> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset("evaluation dataset"));
    }
    let mut acc = [0.0; WRENCH_DIM];
    for s in dataset {
        let y = model.predict_wrench(&s.observation, &s.control)?;
        for i in 0..WRENCH_DIM {
            acc[i] += (y.0[i] - s.wrench.0[i]).powi(2);
        }
    }
    Ok(acc.map(|v| v / dataset.len() as f64))
}

/// Mean mirror-residual norm of `B(o)` over a dataset's observations.
pub fn mean_symmetry_residual(model: &AffineModel, dataset: &[DynamicsSample], sym: &SymmetryConfig) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset("evaluation dataset"));
    }
    let mut total = 0.0;
    for s in dataset {
        let (_, b) = model.predict(&s.observation)?;
        total += symmetry_residual_norm(&b, sym);
    }
    Ok(total / dataset.len() as f64)
}
