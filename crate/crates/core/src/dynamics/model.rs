use std::path::Path;

use serde::{Deserialize, Serialize};

use super::symmetry::SymmetryConfig;
use super::types::{
    Control, EffectivenessMatrix, Observation, Wrench, WrenchVector, CONTROL_DIM, OBSERVATION_DIM, PROBE_FEATURES,
    WRENCH_DIM,
};
use crate::error::{check_len, Error, Result};
use crate::nncore::{Activation, GradientTape, Network, NetworkDocument};

/// Which observation entries a model consumes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    /// Both probes and all seven wing taps.
    #[default]
    Full,
    /// Probe estimates only; wing taps dropped.
    ProbesOnly,
}

impl FeatureSet {
    pub fn width(self) -> usize {
        match self {
            FeatureSet::Full => OBSERVATION_DIM,
            FeatureSet::ProbesOnly => PROBE_FEATURES,
        }
    }

    pub fn select(self, o: &Observation) -> &[f64] {
        &o.0[..self.width()]
    }
}

/// Per-feature affine standardization `(x - mean) / std`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(width: usize) -> Self {
        Self {
            mean: vec![0.0; width],
            std: vec![1.0; width],
        }
    }

    /// Fits on rows; features with (near) zero spread keep unit scale.
    pub fn fit<'a>(rows: impl Iterator<Item = &'a [f64]>, width: usize) -> Self {
        let mut n = 0usize;
        let mut mean = vec![0.0; width];
        let mut m2 = vec![0.0; width];
        for row in rows {
            n += 1;
            for k in 0..width {
                let d = row[k] - mean[k];
                mean[k] += d / n as f64;
                m2[k] += d * (row[k] - mean[k]);
            }
        }
        let std = m2
            .iter()
            .map(|v| {
                let s = if n > 0 { (v / n as f64).sqrt() } else { 0.0 };
                if s > 1e-9 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    fn validate(&self, width: usize) -> Result<()> {
        check_len("standardizer mean", width, self.mean.len())?;
        check_len("standardizer std", width, self.std.len())?;
        if self.std.iter().any(|s| !(*s > 0.0)) || self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidParameter(
                "standardizer needs finite mean and positive std".into(),
            ));
        }
        Ok(())
    }
}

/// Fixed output scaling: wrench = offset + scale * raw head output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputScaling {
    pub offset: [f64; WRENCH_DIM],
    pub scale: [f64; WRENCH_DIM],
    /// Degrees of deflection per unit of normalized control.
    pub control_scale: f64,
}

impl Default for OutputScaling {
    fn default() -> Self {
        Self {
            offset: [0.0; WRENCH_DIM],
            scale: [1.0; WRENCH_DIM],
            control_scale: 1.0,
        }
    }
}

impl OutputScaling {
    fn validate(&self) -> Result<()> {
        if self.scale.iter().any(|s| !(*s > 0.0)) || !(self.control_scale > 0.0) {
            return Err(Error::InvalidParameter("output scales must be positive".into()));
        }
        Ok(())
    }
}

/// Anything that predicts wrenches and can be linearized in the control.
pub trait WrenchModel {
    fn predict_wrench(&self, o: &Observation, u: &Control) -> Result<Wrench>;

    /// Affine approximation `(A, B)` about `u_ref`, exact for control-affine models.
    fn local_affine(&self, o: &Observation, u_ref: &Control) -> Result<(WrenchVector, EffectivenessMatrix)>;
}

/// Control-affine wrench model `y = A(o) + B(o) u`, with both heads reading
/// the same backbone features.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineModel {
    pub(crate) features: FeatureSet,
    pub(crate) input: Standardizer,
    pub(crate) output: OutputScaling,
    pub(crate) symmetry: SymmetryConfig,
    pub(crate) backbone: Network,
    pub(crate) a_head: Network,
    pub(crate) b_head: Network,
}

/// Backbone and head traces for one observation.
pub(crate) struct AffinePass {
    pub backbone: crate::nncore::Trace,
    pub a: crate::nncore::Trace,
    pub b: crate::nncore::Trace,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AffineGradients {
    pub backbone: GradientTape,
    pub a_head: GradientTape,
    pub b_head: GradientTape,
}

impl AffineGradients {
    pub fn zero(&mut self) {
        self.backbone.zero();
        self.a_head.zero();
        self.b_head.zero();
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.backbone.flatten();
        v.extend(self.a_head.flatten());
        v.extend(self.b_head.flatten());
        v
    }
}

impl AffineModel {
    /// Freshly initialized model; `hidden` lists backbone widths.
    pub fn new(features: FeatureSet, hidden: &[usize], symmetry: SymmetryConfig, seed: u64) -> Result<Self> {
        if hidden.is_empty() {
            return Err(Error::InvalidParameter(
                "backbone needs at least one hidden layer".into(),
            ));
        }
        symmetry.validate()?;
        let mut widths = vec![features.width()];
        widths.extend(hidden);
        let feat = *hidden.last().unwrap();
        let backbone = Network::new(&widths, Activation::Tanh, Activation::Tanh, seed)?;
        let a_head = Network::new(
            &[feat, WRENCH_DIM],
            Activation::Identity,
            Activation::Identity,
            seed ^ 0xA,
        )?;
        let b_head = Network::new(
            &[feat, WRENCH_DIM * CONTROL_DIM],
            Activation::Identity,
            Activation::Identity,
            seed ^ 0xB,
        )?;
        Ok(Self {
            features,
            input: Standardizer::identity(features.width()),
            output: OutputScaling::default(),
            symmetry,
            backbone,
            a_head,
            b_head,
        })
    }

    pub fn from_parts(
        features: FeatureSet,
        input: Standardizer,
        output: OutputScaling,
        symmetry: SymmetryConfig,
        backbone: Network,
        a_head: Network,
        b_head: Network,
    ) -> Result<Self> {
        input.validate(features.width())?;
        output.validate()?;
        symmetry.validate()?;
        check_len("backbone input", features.width(), backbone.input_width())?;
        check_len("A-head input", backbone.output_width(), a_head.input_width())?;
        check_len("B-head input", backbone.output_width(), b_head.input_width())?;
        check_len("A-head output", WRENCH_DIM, a_head.output_width())?;
        check_len("B-head output", WRENCH_DIM * CONTROL_DIM, b_head.output_width())?;
        Ok(Self {
            features,
            input,
            output,
            symmetry,
            backbone,
            a_head,
            b_head,
        })
    }

    pub fn features(&self) -> FeatureSet {
        self.features
    }

    pub fn symmetry(&self) -> &SymmetryConfig {
        &self.symmetry
    }

    pub fn backbone(&self) -> &Network {
        &self.backbone
    }

    pub fn a_head(&self) -> &Network {
        &self.a_head
    }

    pub fn b_head(&self) -> &Network {
        &self.b_head
    }

    pub(crate) fn set_scaling(&mut self, input: Standardizer, output: OutputScaling) -> Result<()> {
        input.validate(self.features.width())?;
        output.validate()?;
        self.input = input;
        self.output = output;
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.backbone.param_count() + self.a_head.param_count() + self.b_head.param_count()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut v = self.backbone.params();
        v.extend(self.a_head.params());
        v.extend(self.b_head.params());
        v
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        check_len("affine model parameters", self.param_count(), values.len())?;
        let (nb, na) = (self.backbone.param_count(), self.a_head.param_count());
        self.backbone.set_params(&values[..nb])?;
        self.a_head.set_params(&values[nb..nb + na])?;
        self.b_head.set_params(&values[nb + na..])
    }

    pub fn zero_gradients(&self) -> AffineGradients {
        AffineGradients {
            backbone: self.backbone.zero_tape(),
            a_head: self.a_head.zero_tape(),
            b_head: self.b_head.zero_tape(),
        }
    }

    pub(crate) fn pass(&self, o: &Observation) -> Result<AffinePass> {
        let x = self.input.apply(self.features.select(o));
        let backbone = self.backbone.forward_traced(&x)?;
        let a = self.a_head.forward_traced(backbone.output())?;
        let b = self.b_head.forward_traced(backbone.output())?;
        Ok(AffinePass { backbone, a, b })
    }

    pub(crate) fn heads_to_physical(&self, pass: &AffinePass) -> (WrenchVector, EffectivenessMatrix) {
        let s = &self.output;
        let raw_a = pass.a.output();
        let raw_b = pass.b.output();
        let a = WrenchVector::from_fn(|i, _| s.offset[i] + s.scale[i] * raw_a[i]);
        let b = EffectivenessMatrix::from_fn(|i, k| s.scale[i] * raw_b[i * CONTROL_DIM + k] / s.control_scale);
        (a, b)
    }

    /// Baseline wrench `A(o)` and control effectiveness `B(o)` (row-major head layout).
    pub fn predict(&self, o: &Observation) -> Result<(WrenchVector, EffectivenessMatrix)> {
        let pass = self.pass(o)?;
        Ok(self.heads_to_physical(&pass))
    }

    /// Backpropagates physical-unit gradients `dL/dA` and `dL/dB` into `grads`.
    pub(crate) fn accumulate(
        &self,
        pass: &AffinePass,
        d_a: &WrenchVector,
        d_b: &EffectivenessMatrix,
        grads: &mut AffineGradients,
    ) -> Result<()> {
        let s = &self.output;
        let up_a: Vec<f64> = (0..WRENCH_DIM).map(|i| d_a[i] * s.scale[i]).collect();
        let up_b: Vec<f64> = (0..WRENCH_DIM * CONTROL_DIM)
            .map(|j| {
                let (i, k) = (j / CONTROL_DIM, j % CONTROL_DIM);
                d_b[(i, k)] * s.scale[i] / s.control_scale
            })
            .collect();
        let g_a = self.a_head.backpropagate(&pass.a, &up_a, Some(&mut grads.a_head))?;
        let g_b = self.b_head.backpropagate(&pass.b, &up_b, Some(&mut grads.b_head))?;
        let g_feat: Vec<f64> = g_a.iter().zip(&g_b).map(|(x, y)| x + y).collect();
        self.backbone
            .backpropagate(&pass.backbone, &g_feat, Some(&mut grads.backbone))?;
        Ok(())
    }

    pub(crate) fn networks_mut(&mut self) -> [&mut Network; 3] {
        [&mut self.backbone, &mut self.a_head, &mut self.b_head]
    }

    pub fn all_finite(&self) -> bool {
        self.backbone.all_finite() && self.a_head.all_finite() && self.b_head.all_finite()
    }
}

impl WrenchModel for AffineModel {
    fn predict_wrench(&self, o: &Observation, u: &Control) -> Result<Wrench> {
        let (a, b) = self.predict(o)?;
        Ok(Wrench::from_vector(&(a + b * u.vector())))
    }

    fn local_affine(&self, o: &Observation, _u_ref: &Control) -> Result<(WrenchVector, EffectivenessMatrix)> {
        self.predict(o)
    }
}

/// Plain regression baseline `y = F(o, u)`.
#[derive(Clone, Debug, PartialEq)]
pub struct UnstructuredModel {
    pub(crate) features: FeatureSet,
    pub(crate) input: Standardizer,
    pub(crate) output: OutputScaling,
    pub(crate) net: Network,
}

impl UnstructuredModel {
    pub fn new(features: FeatureSet, hidden: &[usize], seed: u64) -> Result<Self> {
        let mut widths = vec![features.width() + CONTROL_DIM];
        widths.extend(hidden);
        widths.push(WRENCH_DIM);
        let net = Network::new(&widths, Activation::Tanh, Activation::Identity, seed)?;
        Ok(Self {
            features,
            input: Standardizer::identity(features.width() + CONTROL_DIM),
            output: OutputScaling::default(),
            net,
        })
    }

    pub fn from_parts(features: FeatureSet, input: Standardizer, output: OutputScaling, net: Network) -> Result<Self> {
        input.validate(features.width() + CONTROL_DIM)?;
        output.validate()?;
        check_len("unstructured input", features.width() + CONTROL_DIM, net.input_width())?;
        check_len("unstructured output", WRENCH_DIM, net.output_width())?;
        Ok(Self {
            features,
            input,
            output,
            net,
        })
    }

    pub fn features(&self) -> FeatureSet {
        self.features
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub(crate) fn set_scaling(&mut self, input: Standardizer, output: OutputScaling) -> Result<()> {
        input.validate(self.features.width() + CONTROL_DIM)?;
        output.validate()?;
        self.input = input;
        self.output = output;
        Ok(())
    }

    pub(crate) fn joint_input(&self, o: &Observation, u: &Control) -> Vec<f64> {
        let mut x = self.features.select(o).to_vec();
        x.extend_from_slice(&u.0);
        self.input.apply(&x)
    }

    pub(crate) fn to_physical(&self, raw: &[f64]) -> WrenchVector {
        WrenchVector::from_fn(|i, _| self.output.offset[i] + self.output.scale[i] * raw[i])
    }
}

impl WrenchModel for UnstructuredModel {
    fn predict_wrench(&self, o: &Observation, u: &Control) -> Result<Wrench> {
        let raw = self.net.forward(&self.joint_input(o, u))?;
        Ok(Wrench::from_vector(&self.to_physical(&raw)))
    }

    /// First-order expansion about `u_ref`: `B = dF/du`, `A = F(u_ref) - B u_ref`.
    fn local_affine(&self, o: &Observation, u_ref: &Control) -> Result<(WrenchVector, EffectivenessMatrix)> {
        let x = self.joint_input(o, u_ref);
        let jac = self.net.input_jacobian(&x)?;
        let y = self.to_physical(&self.net.forward(&x)?);
        let off = self.features.width();
        let b = EffectivenessMatrix::from_fn(|i, k| self.output.scale[i] * jac[i][off + k] / self.input.std[off + k]);
        let a = y - b * u_ref.vector();
        Ok((a, b))
    }
}

/// A trained wrench model of either family.
#[derive(Clone, Debug, PartialEq)]
pub enum TrainedModel {
    Affine(AffineModel),
    Unstructured(UnstructuredModel),
}

impl TrainedModel {
    pub fn as_affine(&self) -> Option<&AffineModel> {
        match self {
            TrainedModel::Affine(m) => Some(m),
            TrainedModel::Unstructured(_) => None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelDocument::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        doc.try_into()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

impl WrenchModel for TrainedModel {
    fn predict_wrench(&self, o: &Observation, u: &Control) -> Result<Wrench> {
        match self {
            TrainedModel::Affine(m) => m.predict_wrench(o, u),
            TrainedModel::Unstructured(m) => m.predict_wrench(o, u),
        }
    }

    fn local_affine(&self, o: &Observation, u_ref: &Control) -> Result<(WrenchVector, EffectivenessMatrix)> {
        match self {
            TrainedModel::Affine(m) => m.local_affine(o, u_ref),
            TrainedModel::Unstructured(m) => m.local_affine(o, u_ref),
        }
    }
}

/// Serialized model. Networks use the nncore-v1 layout; the B-head output is
/// read row-major as a 6x4 matrix (wrench channel major).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelDocument {
    Affine {
        features: FeatureSet,
        input: Standardizer,
        output: OutputScaling,
        symmetry: SymmetryConfig,
        b_layout: String,
        backbone: NetworkDocument,
        a_head: NetworkDocument,
        b_head: NetworkDocument,
    },
    Unstructured {
        features: FeatureSet,
        input: Standardizer,
        output: OutputScaling,
        net: NetworkDocument,
    },
}

const B_LAYOUT: &str = "row-major-6x4";

impl From<&TrainedModel> for ModelDocument {
    fn from(m: &TrainedModel) -> Self {
        match m {
            TrainedModel::Affine(m) => ModelDocument::Affine {
                features: m.features,
                input: m.input.clone(),
                output: m.output.clone(),
                symmetry: m.symmetry.clone(),
                b_layout: B_LAYOUT.to_string(),
                backbone: (&m.backbone).into(),
                a_head: (&m.a_head).into(),
                b_head: (&m.b_head).into(),
            },
            TrainedModel::Unstructured(m) => ModelDocument::Unstructured {
                features: m.features,
                input: m.input.clone(),
                output: m.output.clone(),
                net: (&m.net).into(),
            },
        }
    }
}

impl TryFrom<ModelDocument> for TrainedModel {
    type Error = Error;

    fn try_from(doc: ModelDocument) -> Result<Self> {
        match doc {
            ModelDocument::Affine {
                features,
                input,
                output,
                symmetry,
                b_layout,
                backbone,
                a_head,
                b_head,
            } => {
                if b_layout != B_LAYOUT {
                    return Err(Error::Format(format!("unknown B layout {b_layout:?}")));
                }
                Ok(TrainedModel::Affine(AffineModel::from_parts(
                    features,
                    input,
                    output,
                    symmetry,
                    backbone.try_into()?,
                    a_head.try_into()?,
                    b_head.try_into()?,
                )?))
            }
            ModelDocument::Unstructured {
                features,
                input,
                output,
                net,
            } => Ok(TrainedModel::Unstructured(UnstructuredModel::from_parts(
                features,
                input,
                output,
                net.try_into()?,
            )?)),
        }
    }
}
