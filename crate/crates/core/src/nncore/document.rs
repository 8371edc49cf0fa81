use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{Activation, Layer, Network};
use crate::error::{check_len, Error, Result};

pub const NETWORK_FORMAT_VERSION: &str = "nncore-v1";

/// JSON form of a [`Network`]: layer widths, per-layer activation tags and
/// row-major `(out, in)` weight arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkDocument {
    pub version: String,
    pub widths: Vec<usize>,
    pub activations: Vec<Activation>,
    pub layers: Vec<LayerDocument>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerDocument {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl From<&Network> for NetworkDocument {
    fn from(net: &Network) -> Self {
        Self {
            version: NETWORK_FORMAT_VERSION.to_string(),
            widths: net.widths(),
            activations: net.layers().iter().map(Layer::activation).collect(),
            layers: net
                .layers()
                .iter()
                .map(|l| LayerDocument {
                    weights: l.weights().to_vec(),
                    bias: l.bias().to_vec(),
                })
                .collect(),
        }
    }
}

impl TryFrom<NetworkDocument> for Network {
    type Error = Error;

    fn try_from(doc: NetworkDocument) -> Result<Self> {
        if doc.version != NETWORK_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "expected version {NETWORK_FORMAT_VERSION}, found {}",
                doc.version
            )));
        }
        if doc.widths.len() < 2 {
            return Err(Error::Format("need at least two widths".into()));
        }
        let n = doc.widths.len() - 1;
        check_len("document activations", n, doc.activations.len())?;
        check_len("document layers", n, doc.layers.len())?;
        let layers = doc
            .layers
            .into_iter()
            .zip(doc.activations)
            .zip(doc.widths.windows(2))
            .map(|((l, act), w)| Layer::new(w[0], w[1], l.weights, l.bias, act))
            .collect::<Result<Vec<_>>>()?;
        Network::from_layers(layers)
    }
}

impl Network {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&NetworkDocument::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: NetworkDocument = serde_json::from_str(text)?;
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
