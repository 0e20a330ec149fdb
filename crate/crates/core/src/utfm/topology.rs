use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::features::{FeatureVectorSpec, ObsCategory, Observation};

/// Flight-operation phases (graph columns).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    #[serde(rename = "TA")]
    Turnaround,
    #[serde(rename = "TO")]
    TaxiOut,
    #[serde(rename = "E")]
    Enroute,
    #[serde(rename = "TI")]
    TaxiIn,
}

impl Phase {
    pub const ALL: [Phase; 4] = [Phase::Turnaround, Phase::TaxiOut, Phase::Enroute, Phase::TaxiIn];

    pub fn abbrev(self) -> &'static str {
        match self {
            Phase::Turnaround => "TA",
            Phase::TaxiOut => "TO",
            Phase::Enroute => "E",
            Phase::TaxiIn => "TI",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn previous(self) -> Option<Phase> {
        self.index().checked_sub(1).map(|i| Phase::ALL[i])
    }
}

/// Schedule-evolution rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Row {
    Schedule,
    Decision,
    Outcome,
}

impl Row {
    pub const ALL: [Row; 3] = [Row::Schedule, Row::Decision, Row::Outcome];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn next(self) -> Option<Row> {
        Row::ALL.get(self.index() + 1).copied()
    }
}

/// Which data lot trains a component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lot {
    NonDisrupted,
    Disrupted,
}

#[allow(clippy::upper_case_acronyms)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StateComponentId {
    TAS,
    TOS,
    ES,
    TIS,
    TAD,
    TOD,
    ED,
    TID,
    TAO,
    TOO,
    EO,
    TIO,
}

const TAS_HIDDEN: &[&str] = &["SWAP_FLT_FLAG", "SCHED_ACFT_TYPE", "SCHED_TURN_MINS", "tod_sched_PB"];
const TOS_HIDDEN: &[&str] = &["taxi_out", "tod_actl_TO", "sched_block_mins"];
const ES_HIDDEN: &[&str] = &["actl_enroute_mins", "tod_actl_LD", "sched_block_mins"];
const TIS_HIDDEN: &[&str] = &["taxi_in", "tod_sched_GP", "sched_block_mins"];
const TAD_HIDDEN: &[&str] = &["shiftper_sched_PB", "ADJST_TURN_MINS", "DELY_MIN", "SWAP_FLT_FLAG"];
const TOD_HIDDEN: &[&str] = &["late_out_vs_sched_mins", "shiftper_actl_PB", "DELY_MIN"];
const ED_HIDDEN: &[&str] = &["shiftper_actl_TO", "shiftper_actl_LD", "DOT_DELAY_MINS"];
const TID_HIDDEN: &[&str] = &["DOT_DELAY_MINS", "shiftper_sched_GP", "shiftper_actl_GP"];
const TAO_HIDDEN: &[&str] = &["SWAP_FLT_FLAG", "ACTL_ACFT_TYPE", "ACTL_TURN_MINS", "tod_actl_PB"];
const TOO_HIDDEN: &[&str] = &["taxi_out", "tod_actl_TO", "actl_block_mins"];
const EO_HIDDEN: &[&str] = &["actl_enroute_mins", "tod_actl_LD", "actl_block_mins"];
const TIO_HIDDEN: &[&str] = &["taxi_in", "tod_actl_GP", "actl_block_mins"];

const PLAN_OBS: &[ObsCategory] = &[ObsCategory::Rte, ObsCategory::Freq, ObsCategory::PaxDmd];
const DECISION_OBS: &[ObsCategory] = &[
    ObsCategory::Orig,
    ObsCategory::Dest,
    ObsCategory::Freq,
    ObsCategory::PaxDmd,
    ObsCategory::Disrp,
];

impl StateComponentId {
    pub const ALL: [StateComponentId; 12] = [
        Self::TAS,
        Self::TOS,
        Self::ES,
        Self::TIS,
        Self::TAD,
        Self::TOD,
        Self::ED,
        Self::TID,
        Self::TAO,
        Self::TOO,
        Self::EO,
        Self::TIO,
    ];

    pub fn new(phase: Phase, row: Row) -> Self {
        Self::ALL[row.index() * 4 + phase.index()]
    }

    fn position(self) -> usize {
        self as usize
    }

    pub fn phase(self) -> Phase {
        Phase::ALL[self.position() % 4]
    }

    pub fn row(self) -> Row {
        Row::ALL[self.position() / 4]
    }

    pub fn name(self) -> &'static str {
        const NAMES: [&str; 12] = ["TAS", "TOS", "ES", "TIS", "TAD", "TOD", "ED", "TID", "TAO", "TOO", "EO", "TIO"];
        NAMES[self.position()]
    }

    /// Epistemic features that label this component's hidden states.
    pub fn hidden_features(self) -> &'static [&'static str] {
        match self {
            Self::TAS => TAS_HIDDEN,
            Self::TOS => TOS_HIDDEN,
            Self::ES => ES_HIDDEN,
            Self::TIS => TIS_HIDDEN,
            Self::TAD => TAD_HIDDEN,
            Self::TOD => TOD_HIDDEN,
            Self::ED => ED_HIDDEN,
            Self::TID => TID_HIDDEN,
            Self::TAO => TAO_HIDDEN,
            Self::TOO => TOO_HIDDEN,
            Self::EO => EO_HIDDEN,
            Self::TIO => TIO_HIDDEN,
        }
    }

    pub fn observation_categories(self) -> &'static [ObsCategory] {
        match self.row() {
            Row::Decision => DECISION_OBS,
            Row::Schedule | Row::Outcome => PLAN_OBS,
        }
    }

    pub fn training_lot(self) -> Lot {
        match self.row() {
            Row::Decision => Lot::Disrupted,
            Row::Schedule | Row::Outcome => Lot::NonDisrupted,
        }
    }

    pub fn feature_spec(self) -> FeatureVectorSpec {
        FeatureVectorSpec {
            component_id: self.name().to_string(),
            hidden_features: labels(self.hidden_features()),
            observations: self
                .observation_categories()
                .iter()
                .map(|c| Observation::Category(*c))
                .collect(),
        }
    }
}

impl fmt::Display for StateComponentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StateComponentId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown state component {s:?}"))
    }
}

fn labels(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

/// Transition parameter an edge carries in the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    /// Schedule row, previous phase to next.
    Alpha,
    /// Decision row, previous phase to next.
    Beta,
    /// Outcome row, previous phase to next.
    Gamma,
    /// Schedule to decision, same phase.
    Kappa,
    /// Decision to outcome, same phase.
    Lambda,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub from: StateComponentId,
    pub to: StateComponentId,
}

impl Edge {
    pub fn name(self) -> String {
        format!("{}->{}", self.from, self.to)
    }

    pub fn kind(self) -> EdgeKind {
        if self.from.row() == self.to.row() {
            match self.from.row() {
                Row::Schedule => EdgeKind::Alpha,
                Row::Decision => EdgeKind::Beta,
                Row::Outcome => EdgeKind::Gamma,
            }
        } else if self.from.row() == Row::Schedule {
            EdgeKind::Kappa
        } else {
            EdgeKind::Lambda
        }
    }

    /// Hidden states are the source component's features; observations are
    /// the target component's features.
    pub fn feature_spec(self) -> FeatureVectorSpec {
        FeatureVectorSpec {
            component_id: self.name(),
            hidden_features: labels(self.from.hidden_features()),
            observations: self
                .to
                .hidden_features()
                .iter()
                .map(|f| Observation::Feature(f.to_string()))
                .collect(),
        }
    }

    pub fn training_lot(self) -> Lot {
        Lot::Disrupted
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtfmTopology {
    pub intra_nodes: Vec<StateComponentId>,
    pub inter_edges: Vec<Edge>,
}

/// The fixed 12-node, 17-edge graph. Row edges come first, then column
/// edges, each in phase order.
pub fn build_topology() -> UtfmTopology {
    let mut inter_edges = Vec::with_capacity(17);
    for row in Row::ALL {
        for w in Phase::ALL.windows(2) {
            inter_edges.push(Edge {
                from: StateComponentId::new(w[0], row),
                to: StateComponentId::new(w[1], row),
            });
        }
    }
    for row in [Row::Schedule, Row::Decision] {
        for phase in Phase::ALL {
            inter_edges.push(Edge {
                from: StateComponentId::new(phase, row),
                to: StateComponentId::new(phase, row.next().expect("not the last row")),
            });
        }
    }
    UtfmTopology {
        intra_nodes: StateComponentId::ALL.to_vec(),
        inter_edges,
    }
}

impl UtfmTopology {
    /// Edge entering `to` along its row, if any.
    pub fn row_edge_into(&self, to: StateComponentId) -> Option<Edge> {
        self.inter_edges
            .iter()
            .copied()
            .find(|e| e.to == to && e.from.row() == to.row())
    }

    /// Edge leaving `from` down its column, if any.
    pub fn column_edge_from(&self, from: StateComponentId) -> Option<Edge> {
        self.inter_edges
            .iter()
            .copied()
            .find(|e| e.from == from && e.to.phase() == from.phase())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use StateComponentId::*;

    #[test]
    fn ids_cover_phase_row_grid() {
        for id in StateComponentId::ALL {
            assert_eq!(StateComponentId::new(id.phase(), id.row()), id);
            assert_eq!(id.name().parse::<StateComponentId>().unwrap(), id);
        }
        assert_eq!(TOD.phase(), Phase::TaxiOut);
        assert_eq!(TOD.row(), Row::Decision);
        assert_eq!(EO.name(), "EO");
    }

    #[test]
    fn topology_matches_edge_table() {
        let t = build_topology();
        assert_eq!(t.intra_nodes.len(), 12);
        let names: Vec<String> = t.inter_edges.iter().map(|e| e.name()).collect();
        assert_eq!(
            names,
            [
                "TAS->TOS", "TOS->ES", "ES->TIS", "TAD->TOD", "TOD->ED", "ED->TID", "TAO->TOO", "TOO->EO", "EO->TIO",
                "TAS->TAD", "TOS->TOD", "ES->ED", "TIS->TID", "TAD->TAO", "TOD->TOO", "ED->EO", "TID->TIO",
            ]
        );
    }

    #[test]
    fn edge_kinds() {
        let e = |from, to| Edge { from, to }.kind();
        assert_eq!(e(TAS, TOS), EdgeKind::Alpha);
        assert_eq!(e(TOD, ED), EdgeKind::Beta);
        assert_eq!(e(EO, TIO), EdgeKind::Gamma);
        assert_eq!(e(ES, ED), EdgeKind::Kappa);
        assert_eq!(e(TID, TIO), EdgeKind::Lambda);
    }

    #[test]
    fn turnaround_has_no_incoming_row_edge() {
        let t = build_topology();
        for row in Row::ALL {
            assert!(t.row_edge_into(StateComponentId::new(Phase::Turnaround, row)).is_none());
        }
        assert_eq!(t.row_edge_into(TIS).unwrap().from, ES);
        assert!(t.column_edge_from(TAO).is_none());
        assert_eq!(t.column_edge_from(TOS).unwrap().to, TOD);
    }

    #[test]
    fn inter_spec_uses_source_labels_and_target_observations() {
        let spec = Edge { from: TAD, to: TAO }.feature_spec();
        assert_eq!(spec.component_id, "TAD->TAO");
        assert_eq!(spec.hidden_features, TAD_HIDDEN);
        let obs: Vec<&str> = spec.observations.iter().map(Observation::name).collect();
        assert_eq!(obs, TAO_HIDDEN);
    }
}
