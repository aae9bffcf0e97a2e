use serde::{Deserialize, Serialize};

use crate::augment::{ContrastiveJson, ContrastiveNet};
use crate::error::{Error, Result};
use crate::flow::{FlowJson, FlowModel};
use crate::numcore::Matrix;
use crate::semantics::{EmbedderJson, SemanticEmbedder};
use crate::Scalar;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// A trained generator: the flow, the semantic embedder that produces its
/// conditions (absent when raw attributes are used), and the contrastive
/// network from boundary mining (absent when mining was skipped).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel<T> {
    pub flow: FlowModel<T>,
    pub embedder: Option<SemanticEmbedder<T>>,
    pub contrastive: Option<ContrastiveNet<T>>,
}

impl<T: Scalar> TrainedModel<T> {
    /// Flow conditions for each attribute row.
    pub fn conditions(&self, attributes: &Matrix<T>) -> Result<Matrix<T>> {
        match &self.embedder {
            Some(e) => e.embed_rows(attributes),
            None => Ok(attributes.clone()),
        }
    }

    pub fn to_json(&self) -> ModelJson {
        ModelJson {
            format_version: MODEL_FORMAT_VERSION,
            flow: self.flow.to_json(),
            embedder: self.embedder.as_ref().map(SemanticEmbedder::to_json),
            contrastive: self.contrastive.as_ref().map(ContrastiveNet::to_json),
        }
    }

    pub fn from_json(doc: &ModelJson) -> Result<Self> {
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "model format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                doc.format_version
            )));
        }
        let flow = FlowModel::from_json(&doc.flow)?;
        let embedder = doc.embedder.as_ref().map(SemanticEmbedder::from_json).transpose()?;
        if let Some(e) = &embedder {
            if e.d_g() != flow.d_g() {
                return Err(Error::Format("embedder output width differs from the flow condition width".into()));
            }
        }
        let contrastive = doc.contrastive.as_ref().map(ContrastiveNet::from_json).transpose()?;
        Ok(TrainedModel { flow, embedder, contrastive })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&self.to_json()).expect("model serializes")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let doc: ModelJson = serde_json::from_str(s).map_err(|e| Error::Format(format!("model file: {e}")))?;
        Self::from_json(&doc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelJson {
    pub format_version: u32,
    pub flow: FlowJson,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub embedder: Option<EmbedderJson>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub contrastive: Option<ContrastiveJson>,
}
