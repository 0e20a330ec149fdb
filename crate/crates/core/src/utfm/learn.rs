use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::topology::{build_topology, Lot};
use super::{ComponentKind, ComponentModel, Provenance, TrainingSummary, UtfmError, UtfmModel, MODEL_VERSION};
use crate::dataset::{cross_validate, write_csv, CvConfig, CvReport, DatasetSplit, FlightLegRecord};
use crate::features::{build_observation_matrix, FeatureLayout, FeatureVectorSpec, StandardizationParams};
use crate::hmm::{baum_welch, GaussianHmm, HmmError, ObservationSequence, TrainConfig, VARIANCE_FLOOR};
use crate::json::to_canonical_string;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnConfig {
    pub seed: u64,
    pub train: TrainConfig,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            train: TrainConfig::default(),
        }
    }
}

impl LearnConfig {
    pub fn sha256(&self) -> String {
        sha256_hex(to_canonical_string(self).expect("config serializes").as_bytes())
    }
}

/// Per-HMM Baum-Welch record kept alongside a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLogEntry {
    pub component: String,
    pub lot: Lot,
    pub sequences: usize,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub provenance: Provenance,
    pub entries: Vec<TrainingLogEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the split's records in canonical CSV form.
pub fn dataset_sha256(split: &DatasetSplit) -> String {
    let mut buf = Vec::new();
    let all: Vec<FlightLegRecord> = split.non_disrupted.iter().chain(&split.disrupted).cloned().collect();
    write_csv(&mut buf, &all).expect("writing to memory cannot fail");
    sha256_hex(&buf)
}

/// Starting model for one component. Emission means and variances are taken
/// from `K` equal-count bins of the pooled training values; rows are uniform.
pub fn initial_model(labels: Vec<String>, data: &[ObservationSequence], absorbing: bool) -> Result<GaussianHmm, HmmError> {
    let mut hmm = GaussianHmm::standard_init(labels, 1, absorbing)?;
    let k = hmm.n_states();
    let mut pooled: Vec<f64> = data.iter().flat_map(|s| s.rows().map(|r| r[0])).collect();
    if pooled.is_empty() {
        return Err(HmmError::EmptyData);
    }
    pooled.sort_by(f64::total_cmp);
    let n = pooled.len();
    for i in 0..k {
        let bin = &pooled[i * n / k..((i + 1) * n / k).max(i * n / k + 1).min(n)];
        let mean = bin.iter().sum::<f64>() / bin.len() as f64;
        let var = bin.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / bin.len() as f64;
        hmm.emission_means[i][0] = mean + 1e-3 * i as f64;
        hmm.emission_vars[i][0] = var.max(0.05).max(VARIANCE_FLOOR);
    }
    hmm.validate()?;
    Ok(hmm)
}

/// One of the 29 component HMMs and the data that trains it.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentPlan {
    pub name: String,
    pub kind: ComponentKind,
    pub spec: FeatureVectorSpec,
    pub lot: Lot,
}

impl ComponentPlan {
    pub fn absorbing(&self) -> bool {
        self.kind == ComponentKind::Inter
    }
}

/// The 12 node models in topology order, then the 17 edge models.
pub fn component_plans() -> Vec<ComponentPlan> {
    let topology = build_topology();
    let nodes = topology.intra_nodes.iter().map(|id| ComponentPlan {
        name: id.name().to_string(),
        kind: ComponentKind::Intra,
        spec: id.feature_spec(),
        lot: id.training_lot(),
    });
    let edges = topology.inter_edges.iter().map(|e| ComponentPlan {
        name: e.name(),
        kind: ComponentKind::Inter,
        spec: e.feature_spec(),
        lot: e.training_lot(),
    });
    nodes.chain(edges).collect()
}

/// Fitted feature pipeline and standardized training sequences of one
/// component.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedComponent {
    pub layout: FeatureLayout,
    pub standardizer: StandardizationParams,
    pub sequences: Vec<ObservationSequence>,
}

pub fn prepare_component(plan: &ComponentPlan, records: &[&FlightLegRecord]) -> Result<PreparedComponent, UtfmError> {
    let fail = |reason: String| UtfmError::Training {
        component: plan.name.clone(),
        reason,
    };
    if records.is_empty() {
        return Err(fail(format!("no training records in the {} lot", lot_name(plan.lot))));
    }
    let layout = FeatureLayout::build(&plan.spec, records).map_err(|e| fail(e.to_string()))?;
    let raw = layout.encode_all(records).map_err(|e| fail(e.to_string()))?;
    let standardizer = StandardizationParams::fit(layout.column_names.clone(), &raw).map_err(|e| fail(e.to_string()))?;
    let sequences = build_observation_matrix(records, &layout, &standardizer)
        .and_then(|m| m.sequences())
        .map_err(|e| fail(e.to_string()))?;
    Ok(PreparedComponent {
        layout,
        standardizer,
        sequences,
    })
}

fn train_component(
    plan: &ComponentPlan,
    records: &[&FlightLegRecord],
    config: &LearnConfig,
) -> Result<(ComponentModel, TrainingLogEntry), UtfmError> {
    let name = plan.name.as_str();
    let fail = |reason: String| UtfmError::Training {
        component: name.to_string(),
        reason,
    };
    let prepared = prepare_component(plan, records)?;
    let init = initial_model(plan.spec.hidden_features.clone(), &prepared.sequences, plan.absorbing())
        .map_err(|e| fail(e.to_string()))?;
    let outcome = baum_welch(&init, &prepared.sequences, &config.train).map_err(|e| fail(e.to_string()))?;
    if !outcome.converged {
        log::warn!(
            "{name}: no convergence after {} iterations (final logL {})",
            outcome.iterations,
            outcome.trace.last().copied().unwrap_or(f64::NAN)
        );
    }
    let final_ll = *outcome.trace.last().expect("trace is never empty");
    let entry = TrainingLogEntry {
        component: name.to_string(),
        lot: plan.lot,
        sequences: prepared.sequences.len(),
        iterations: outcome.iterations,
        converged: outcome.converged,
        trace: outcome.trace,
    };
    let model = ComponentModel {
        id: name.to_string(),
        kind: plan.kind,
        lot: plan.lot,
        hmm: outcome.model,
        layout: prepared.layout,
        standardizer: prepared.standardizer,
        training: TrainingSummary {
            sequences: entry.sequences,
            iterations: entry.iterations,
            converged: entry.converged,
            final_log_likelihood: final_ll,
        },
    };
    Ok((model, entry))
}

fn lot_name(lot: Lot) -> &'static str {
    match lot {
        Lot::NonDisrupted => "non-disrupted",
        Lot::Disrupted => "disrupted",
    }
}

/// Trains all 29 component HMMs: the 12 intra-state models (schedule and
/// outcome rows on the non-disrupted lot, decision row on the disrupted lot)
/// followed by the 17 absorbing inter-state models on the disrupted lot.
/// Only each lot's training partition is used.
pub fn utfm_learn(split: &DatasetSplit, config: &LearnConfig) -> Result<(UtfmModel, TrainingLog), UtfmError> {
    let non_disrupted = split.non_disrupted_train();
    let disrupted = split.disrupted_train();

    let mut entries = Vec::with_capacity(29);
    let mut intra = Vec::with_capacity(12);
    let mut inter = Vec::with_capacity(17);
    for plan in component_plans() {
        let records = match plan.lot {
            Lot::NonDisrupted => &non_disrupted,
            Lot::Disrupted => &disrupted,
        };
        let (m, e) = train_component(&plan, records, config)?;
        log::info!("trained {} ({} iterations, converged: {})", plan.name, e.iterations, e.converged);
        match plan.kind {
            ComponentKind::Intra => intra.push(m),
            ComponentKind::Inter => inter.push(m),
        }
        entries.push(e);
    }

    let provenance = Provenance {
        seed: config.seed,
        train: config.train,
        config_sha256: config.sha256(),
        dataset_sha256: dataset_sha256(split),
        non_disrupted_train: non_disrupted.len(),
        disrupted_train: disrupted.len(),
    };
    let model = UtfmModel {
        version: MODEL_VERSION,
        provenance: provenance.clone(),
        intra,
        inter,
    };
    model.validate()?;
    Ok((model, TrainingLog { provenance, entries }))
}

/// Cross-validation outcome of one component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentCv {
    pub component: String,
    pub lot: Lot,
    pub report: CvReport,
}

/// k-fold cross-validation of every component (or only `component`) on its
/// lot's training partition. The layout and standardizer are fitted once on
/// the whole partition; each fold starts from the same binned initial model.
pub fn utfm_cross_validate(
    split: &DatasetSplit,
    config: &CvConfig,
    component: Option<&str>,
) -> Result<Vec<ComponentCv>, UtfmError> {
    let plans: Vec<ComponentPlan> = component_plans()
        .into_iter()
        .filter(|p| component.is_none_or(|c| c == p.name))
        .collect();
    if let (Some(c), true) = (component, plans.is_empty()) {
        return Err(UtfmError::UnknownComponent(c.to_string()));
    }
    let non_disrupted = split.non_disrupted_train();
    let disrupted = split.disrupted_train();
    let mut out = Vec::with_capacity(plans.len());
    for plan in plans {
        let records = match plan.lot {
            Lot::NonDisrupted => &non_disrupted,
            Lot::Disrupted => &disrupted,
        };
        let prepared = prepare_component(&plan, records)?;
        let labels = plan.spec.hidden_features.clone();
        let factory = || initial_model(labels.clone(), &prepared.sequences, plan.absorbing());
        let report = cross_validate(factory, &prepared.sequences, config).map_err(|e| UtfmError::Training {
            component: plan.name.clone(),
            reason: e.to_string(),
        })?;
        log::info!(
            "cross-validated {} (mean held-out logL/obs {:.4}, flagged folds {:?})",
            plan.name,
            report.mean_test_per_observation,
            report.flagged_folds
        );
        out.push(ComponentCv {
            component: plan.name,
            lot: plan.lot,
            report,
        });
    }
    Ok(out)
}
