use serde::{Deserialize, Serialize};

use super::coupling::CouplingLayer;
use super::model::FlowModel;
use crate::error::{Error, Result};
use crate::numcore::Activation;
use crate::serial::MlpJson;
use crate::Scalar;

pub const FLOW_FORMAT_VERSION: u32 = 1;

const INTERNAL_ACTIVATIONS: [Activation; 2] = [Activation::LeakyRelu, Activation::Identity];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingJson {
    pub s1: MlpJson,
    pub s2: MlpJson,
    pub t1: MlpJson,
    pub t2: MlpJson,
}

/// On-disk form of a [`FlowModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowJson {
    pub format_version: u32,
    pub d_v: usize,
    pub d_g: usize,
    #[serde(rename = "L")]
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub layers: Vec<CouplingJson>,
    pub s_cap: Option<f64>,
}

impl<T: Scalar> FlowModel<T> {
    pub fn to_json(&self) -> FlowJson {
        FlowJson {
            format_version: FLOW_FORMAT_VERSION,
            d_v: self.d_v(),
            d_g: self.d_g(),
            num_layers: self.num_layers(),
            hidden_dim: self.hidden_dim(),
            layers: self
                .layers()
                .iter()
                .map(|l| CouplingJson {
                    s1: MlpJson::from_mlp(&l.s1, false),
                    s2: MlpJson::from_mlp(&l.s2, false),
                    t1: MlpJson::from_mlp(&l.t1, false),
                    t2: MlpJson::from_mlp(&l.t2, false),
                })
                .collect(),
            s_cap: self.s_cap().map(Scalar::as_f64),
        }
    }

    pub fn from_json(doc: &FlowJson) -> Result<Self> {
        if doc.format_version != FLOW_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "flow format version {} is not supported (expected {FLOW_FORMAT_VERSION})",
                doc.format_version
            )));
        }
        if doc.layers.len() != doc.num_layers {
            return Err(Error::Format(format!("L = {} but {} layers present", doc.num_layers, doc.layers.len())));
        }
        let s_cap = doc.s_cap.map(T::lit);
        let layers = doc
            .layers
            .iter()
            .map(|l| {
                let nets = [
                    l.s1.to_mlp(&INTERNAL_ACTIVATIONS)?,
                    l.t1.to_mlp(&INTERNAL_ACTIVATIONS)?,
                    l.s2.to_mlp(&INTERNAL_ACTIVATIONS)?,
                    l.t2.to_mlp(&INTERNAL_ACTIVATIONS)?,
                ];
                CouplingLayer::from_nets(nets, doc.d_v, doc.d_g, s_cap).map_err(|e| Error::Format(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        FlowModel::from_layers(layers, doc.hidden_dim)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&self.to_json()).expect("flow serializes")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let doc: FlowJson = serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))?;
        Self::from_json(&doc)
    }
}
