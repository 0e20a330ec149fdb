//! The uncertainty transfer function model: a fixed 12-node graph of
//! flight-phase by schedule-evolution components, one ergodic HMM per node
//! and one absorbing HMM per edge.

mod decode;
mod dot;
mod learn;
mod modelfile;
mod topology;

pub use decode::{
    normalize_group, utfm_decode, AssessmentReport, HmmDecode, NormalizationMode, PhaseAssessment, TransitionEntry,
    ZERO_MASS_THRESHOLD,
};
pub use dot::export_dot;
pub use learn::{
    component_plans, dataset_sha256, initial_model, prepare_component, sha256_hex, utfm_cross_validate, utfm_learn,
    ComponentCv, ComponentPlan, LearnConfig, PreparedComponent, TrainingLog, TrainingLogEntry,
};
pub use modelfile::{load_model, model_from_json, model_to_json, save_model, ModelFileError, MODEL_FORMAT};
pub use topology::{build_topology, Edge, EdgeKind, Lot, Phase, Row, StateComponentId, UtfmTopology};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureError, FeatureLayout, StandardizationParams};
use crate::hmm::{GaussianHmm, HmmError, TrainConfig};

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum UtfmError {
    #[error("training {component} failed: {reason}")]
    Training { component: String, reason: String },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("unknown component {0:?}")]
    UnknownComponent(String),
    #[error("flight {flight_id}: {source}")]
    Validation {
        flight_id: String,
        #[source]
        source: FeatureError,
    },
    #[error("flight {flight_id}: invalid record, column {column}: {message}")]
    Record {
        flight_id: String,
        column: String,
        message: String,
    },
    #[error("decoding {component} failed: {source}")]
    Decode {
        component: String,
        #[source]
        source: HmmError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentKind {
    Intra,
    Inter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub sequences: usize,
    pub iterations: usize,
    pub converged: bool,
    pub final_log_likelihood: f64,
}

/// One trained HMM together with the feature pipeline that feeds it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentModel {
    pub id: String,
    pub kind: ComponentKind,
    pub lot: Lot,
    pub hmm: GaussianHmm,
    pub layout: FeatureLayout,
    pub standardizer: StandardizationParams,
    pub training: TrainingSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub train: TrainConfig,
    pub config_sha256: String,
    pub dataset_sha256: String,
    pub non_disrupted_train: usize,
    pub disrupted_train: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtfmModel {
    pub version: u32,
    pub provenance: Provenance,
    /// Node models in topology order.
    pub intra: Vec<ComponentModel>,
    /// Edge models in topology order.
    pub inter: Vec<ComponentModel>,
}

impl UtfmModel {
    pub fn intra_model(&self, id: StateComponentId) -> &ComponentModel {
        &self.intra[StateComponentId::ALL.iter().position(|c| *c == id).expect("known id")]
    }

    pub fn inter_model(&self, edge: Edge) -> Option<&ComponentModel> {
        let name = edge.name();
        self.inter.iter().find(|m| m.id == name)
    }

    /// Checks that all 29 components are present in topology order, carry
    /// their hidden-feature labels, and hold consistent parameters.
    pub fn validate(&self) -> Result<(), UtfmError> {
        let bad = |m: String| Err(UtfmError::InvalidModel(m));
        if self.version != MODEL_VERSION {
            return bad(format!("unsupported model version {}", self.version));
        }
        let topology = build_topology();
        if self.intra.len() != 12 || self.inter.len() != 17 {
            return bad(format!(
                "expected 12 intra and 17 inter models, found {} and {}",
                self.intra.len(),
                self.inter.len()
            ));
        }
        let expected = topology
            .intra_nodes
            .iter()
            .map(|id| (id.name().to_string(), id.feature_spec(), ComponentKind::Intra))
            .chain(
                topology
                    .inter_edges
                    .iter()
                    .map(|e| (e.name(), e.feature_spec(), ComponentKind::Inter)),
            );
        for (m, (id, spec, kind)) in self.intra.iter().chain(&self.inter).zip(expected) {
            if m.id != id || m.kind != kind {
                return bad(format!("component {} found where {id} was expected", m.id));
            }
            if m.hmm.state_labels != spec.hidden_features {
                return bad(format!("{id}: state labels differ from its hidden features"));
            }
            if let Err(e) = m.hmm.validate() {
                return bad(format!("{id}: {e}"));
            }
            if m.hmm.dim() != 1 {
                return bad(format!("{id}: expected scalar emissions"));
            }
            if m.hmm.is_absorbing() != (kind == ComponentKind::Inter) {
                return bad(format!("{id}: wrong end-state structure"));
            }
            if !m.standardizer.is_fitted() || m.standardizer.feature_names != m.layout.column_names {
                return bad(format!("{id}: standardizer does not match its layout"));
            }
            let mut observed: Vec<&str> = m.layout.entries.iter().map(|e| e.observation.as_str()).collect();
            observed.dedup();
            let wanted: Vec<&str> = spec.observations.iter().map(|o| o.name()).collect();
            if observed != wanted {
                return bad(format!("{id}: feature layout does not match its observations"));
            }
        }
        Ok(())
    }
}
