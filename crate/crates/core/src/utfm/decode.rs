use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::topology::{build_topology, EdgeKind, Phase, Row, StateComponentId};
use super::{ComponentModel, UtfmError, UtfmModel};
use crate::dataset::FlightLegRecord;
use crate::features::build_observation_matrix;
use crate::hmm::{log_sum_exp, viterbi};

/// Probabilities below this print as `0.00`.
pub const ZERO_MASS_THRESHOLD: f64 = 0.005;

/// How Viterbi results are turned into group shares.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizationMode {
    /// Softmax of per-step (length-normalized) Viterbi log-probabilities.
    #[default]
    LogSumExp,
    /// Ratio of raw Viterbi probabilities, evaluated in log space.
    RawProbSum,
}

impl NormalizationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            NormalizationMode::LogSumExp => "log-sum-exp",
            NormalizationMode::RawProbSum => "raw-prob-sum",
        }
    }
}

/// Softmax of log-scores. A group whose members all score `-inf` is split
/// evenly.
pub fn normalize_group(log_scores: &[f64]) -> Vec<f64> {
    let total = log_sum_exp(log_scores);
    if total == f64::NEG_INFINITY {
        return vec![1.0 / log_scores.len() as f64; log_scores.len()];
    }
    log_scores.iter().map(|s| (s - total).exp()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmDecode {
    pub component: String,
    pub steps: usize,
    /// Most likely hidden-state label at each step.
    pub path: Vec<String>,
    #[serde(with = "crate::json::log_prob")]
    pub log_prob: f64,
    #[serde(with = "crate::json::log_prob")]
    pub per_step_log_prob: f64,
}

/// Group shares for one flight phase. Members without an incoming row edge
/// (the turnaround phase) are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseAssessment {
    pub phase: Phase,
    pub a: f64,
    pub b: Option<f64>,
    pub c: f64,
    pub p: f64,
    pub q: Option<f64>,
    pub r: f64,
    pub u: f64,
    pub v: Option<f64>,
}

impl PhaseAssessment {
    pub fn schedule(&self) -> Vec<f64> {
        [Some(self.a), self.b, Some(self.c)].into_iter().flatten().collect()
    }

    pub fn decision(&self) -> Vec<f64> {
        [Some(self.p), self.q, Some(self.r)].into_iter().flatten().collect()
    }

    pub fn outcome(&self) -> Vec<f64> {
        [Some(self.u), self.v].into_iter().flatten().collect()
    }
}

/// One arc of the decoded map: a node loop (`from == to`) or an edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionEntry {
    pub from: String,
    pub to: String,
    pub parameter: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentReport {
    pub flight_id: String,
    pub mode: NormalizationMode,
    pub phases: Vec<PhaseAssessment>,
    /// 12 loops followed by 17 edges, in topology order.
    pub transitions: Vec<TransitionEntry>,
    pub flags: Vec<String>,
    pub decodes: Vec<HmmDecode>,
}

impl AssessmentReport {
    pub fn transition(&self, from: &str, to: &str) -> Option<f64> {
        self.transitions
            .iter()
            .find(|t| t.from == from && t.to == to)
            .map(|t| t.probability)
    }

    /// Plain-text reading of the map, one line per phase plus any flags.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "flight {} ({})", self.flight_id, self.mode.as_str());
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.2}"));
        for p in &self.phases {
            let _ = writeln!(
                s,
                "{:<2}  schedule a={:.2} b={} c={:.2} | decision p={:.2} q={} r={:.2} | outcome u={:.2} v={}",
                p.phase.abbrev(),
                p.a,
                opt(p.b),
                p.c,
                p.p,
                opt(p.q),
                p.r,
                p.u,
                opt(p.v)
            );
        }
        for f in &self.flags {
            let _ = writeln!(s, "flag: {f}");
        }
        s
    }
}

fn decode_component(model: &ComponentModel, flight: &FlightLegRecord) -> Result<HmmDecode, UtfmError> {
    let matrix = build_observation_matrix(&[flight], &model.layout, &model.standardizer).map_err(|e| {
        UtfmError::Validation {
            flight_id: flight.flight_id.clone(),
            source: e,
        }
    })?;
    let seq = matrix
        .sequences()
        .map_err(|e| UtfmError::Validation {
            flight_id: flight.flight_id.clone(),
            source: e,
        })?
        .remove(0);
    let v = viterbi(&model.hmm, &seq).map_err(|e| UtfmError::Decode {
        component: model.id.clone(),
        source: e,
    })?;
    Ok(HmmDecode {
        component: model.id.clone(),
        steps: seq.len(),
        path: v.path.iter().map(|&i| model.hmm.state_labels[i].clone()).collect(),
        log_prob: v.log_prob,
        per_step_log_prob: v.per_step_log_prob,
    })
}

/// Decodes every component HMM on one flight and normalizes the results into
/// per-phase schedule, decision and outcome groups.
pub fn utfm_decode(model: &UtfmModel, flight: &FlightLegRecord, mode: NormalizationMode) -> Result<AssessmentReport, UtfmError> {
    flight.validate().map_err(|(column, message)| UtfmError::Record {
        flight_id: flight.flight_id.clone(),
        column: column.to_string(),
        message,
    })?;
    let topology = build_topology();
    let mut decodes = Vec::with_capacity(29);
    for m in model.intra.iter().chain(&model.inter) {
        decodes.push(decode_component(m, flight)?);
    }
    let score = |component: &str| {
        let d = decodes
            .iter()
            .find(|d| d.component == component)
            .expect("every component decoded");
        match mode {
            NormalizationMode::LogSumExp => d.per_step_log_prob,
            NormalizationMode::RawProbSum => d.log_prob,
        }
    };

    let mut phases = Vec::with_capacity(4);
    let mut loops = Vec::with_capacity(12);
    let mut edge_probs: Vec<(String, f64)> = Vec::with_capacity(17);
    for phase in Phase::ALL {
        let node = |row| StateComponentId::new(phase, row);
        // Each group: the node itself, the row edge entering it, and (for
        // schedule and decision) the column edge leaving it.
        let group = |row: Row| {
            let id = node(row);
            let incoming = topology.row_edge_into(id);
            let outgoing = topology.column_edge_from(id);
            let mut names = vec![id.name().to_string()];
            names.extend(incoming.map(|e| e.name()));
            names.extend(outgoing.map(|e| e.name()));
            let scores: Vec<f64> = names.iter().map(|n| score(n)).collect();
            let shares = normalize_group(&scores);
            let own = shares[0];
            let inc = incoming.map(|_| shares[1]);
            let out = outgoing.map(|_| shares[shares.len() - 1]);
            (own, inc, out, names)
        };
        let (a, b, c, sn) = group(Row::Schedule);
        let (p, q, r, dn) = group(Row::Decision);
        let (u, v, _, on) = group(Row::Outcome);
        let c = c.expect("schedule row has a column edge");
        let r = r.expect("decision row has a column edge");
        loops.push((node(Row::Schedule), "a", a));
        loops.push((node(Row::Decision), "p", p));
        loops.push((node(Row::Outcome), "u", u));
        if let Some(b) = b {
            edge_probs.push((sn[1].clone(), b));
        }
        edge_probs.push((sn[sn.len() - 1].clone(), c));
        if let Some(q) = q {
            edge_probs.push((dn[1].clone(), q));
        }
        edge_probs.push((dn[dn.len() - 1].clone(), r));
        if let Some(v) = v {
            edge_probs.push((on[1].clone(), v));
        }
        phases.push(PhaseAssessment {
            phase,
            a,
            b,
            c,
            p,
            q,
            r,
            u,
            v,
        });
    }

    let mut transitions = Vec::with_capacity(29);
    for id in StateComponentId::ALL {
        let (_, param, prob) = loops.iter().find(|(n, _, _)| *n == id).expect("every node looped");
        transitions.push(TransitionEntry {
            from: id.name().into(),
            to: id.name().into(),
            parameter: param.to_string(),
            probability: *prob,
        });
    }
    let mut flags = Vec::new();
    for edge in &topology.inter_edges {
        let name = edge.name();
        let prob = edge_probs.iter().find(|(n, _)| *n == name).expect("every edge scored").1;
        let parameter = match edge.kind() {
            EdgeKind::Alpha => "b",
            EdgeKind::Beta => "q",
            EdgeKind::Gamma => "v",
            EdgeKind::Kappa => "c",
            EdgeKind::Lambda => "r",
        };
        if edge.kind() == EdgeKind::Alpha && prob < ZERO_MASS_THRESHOLD {
            flags.push(format!(
                "{name}: zero schedule-row transition mass ({prob:.2}), tactical measure ineffective"
            ));
        }
        transitions.push(TransitionEntry {
            from: edge.from.name().into(),
            to: edge.to.name().into(),
            parameter: parameter.into(),
            probability: prob,
        });
    }

    Ok(AssessmentReport {
        flight_id: flight.flight_id.clone(),
        mode,
        phases,
        transitions,
        flags,
        decodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dominant_member_takes_the_whole_group() {
        let s = normalize_group(&[0.0, -40.0, -45.0]);
        assert!((s[0] - 1.0).abs() < 1e-6);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equal_scores_split_evenly() {
        for s in normalize_group(&[-3.7; 3]) {
            assert!((s - 1.0 / 3.0).abs() < 1e-12);
        }
        for s in normalize_group(&[-1e4, -1e4]) {
            assert!((s - 0.5).abs() < 1e-12);
        }
        assert_eq!(normalize_group(&[f64::NEG_INFINITY; 2]), vec![0.5, 0.5]);
    }

    #[test]
    fn raising_a_score_raises_its_share() {
        let base = normalize_group(&[-2.0, -1.5, -3.0]);
        let bumped = normalize_group(&[-2.0, -1.4, -3.0]);
        assert!(bumped[1] > base[1]);
        assert!(bumped[0] < base[0] && bumped[2] < base[2]);
    }

    #[test]
    fn mode_names() {
        assert_eq!(NormalizationMode::default().as_str(), "log-sum-exp");
        assert_eq!(
            serde_json::to_string(&NormalizationMode::RawProbSum).unwrap(),
            "\"raw-prob-sum\""
        );
    }
}
