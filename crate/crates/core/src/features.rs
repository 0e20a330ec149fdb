//! Feature transformations and per-component observation layouts.
//!
//! First-degree transforms turn raw fields into numeric columns (spherical
//! direction vectors, great-circle route distance, sine/cosine pairs for
//! cyclic quantities, one-hot vectors for categories). Second-degree
//! standardization then rescales every column to zero mean and unit variance
//! using parameters fitted on training data only.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{is_model_column, DelayCode, FieldValue, FlightLegRecord};
use crate::hmm::{HmmError, ObservationSequence};

/// IAU mean Earth radius.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

pub const DOW_PERIOD: f64 = 7.0;
pub const DOY_PERIOD: f64 = 365.25;
pub const MOY_PERIOD: f64 = 12.0;
pub const SEASON_PERIOD: f64 = 4.0;
/// Times of day are stored in hours.
pub const TOD_PERIOD: f64 = 24.0;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("input error: {0}")]
    Input(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("standardizer used before fitting")]
    Unfitted,
    #[error("record {record} (flight {flight_id}): missing field {field}")]
    MissingField {
        record: usize,
        flight_id: String,
        field: String,
    },
    #[error(transparent)]
    Hmm(#[from] HmmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub latitude_deg: f64,
    pub longitude_deg: f64,
}

impl GeoPoint {
    pub fn new(latitude_deg: f64, longitude_deg: f64) -> Result<Self, FeatureError> {
        let p = Self {
            latitude_deg,
            longitude_deg,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        if !(-90.0..=90.0).contains(&self.latitude_deg) {
            return Err(FeatureError::Input(format!(
                "latitude {} outside [-90, 90]",
                self.latitude_deg
            )));
        }
        if !(self.longitude_deg > -180.0 && self.longitude_deg <= 180.0) {
            return Err(FeatureError::Input(format!(
                "longitude {} outside (-180, 180]",
                self.longitude_deg
            )));
        }
        Ok(())
    }
}

/// Unit direction vector of a point on the sphere.
pub fn spherical_coords(p: GeoPoint) -> Result<(f64, f64, f64), FeatureError> {
    p.validate()?;
    let (lat, lon) = (p.latitude_deg.to_radians(), p.longitude_deg.to_radians());
    Ok((lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()))
}

/// Great-circle distance in kilometers (haversine).
pub fn route_distance(orig: GeoPoint, dest: GeoPoint) -> Result<f64, FeatureError> {
    orig.validate()?;
    dest.validate()?;
    let (lat1, lat2) = (orig.latitude_deg.to_radians(), dest.latitude_deg.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (dest.longitude_deg - orig.longitude_deg).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    Ok(2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin())
}

/// `(sin, cos)` of the phase angle `2 pi value / period`.
pub fn periodic_encode(value: f64, period: f64) -> Result<(f64, f64), FeatureError> {
    if !period.is_finite() || period <= 0.0 {
        return Err(FeatureError::Input(format!("period must be positive, got {period}")));
    }
    if !value.is_finite() {
        return Err(FeatureError::Input(format!("cannot encode non-finite value {value}")));
    }
    let angle = 2.0 * PI * (value / period).rem_euclid(1.0);
    Ok(angle.sin_cos())
}

/// Indicator vector over `vocabulary`. Out-of-vocabulary categories encode as
/// all zeros and log a warning.
pub fn one_hot(category: &str, vocabulary: &[String]) -> Result<Vec<f64>, FeatureError> {
    if vocabulary.is_empty() {
        return Err(FeatureError::Config("one-hot vocabulary is empty".into()));
    }
    let mut v = vec![0.0; vocabulary.len()];
    match vocabulary.iter().position(|c| c == category) {
        Some(i) => v[i] = 1.0,
        None => log::warn!("unknown category {category:?} encoded as all zeros"),
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub feature_names: Vec<String>,
    /// Empty until fitted.
    pub mean: Vec<f64>,
    /// Population standard deviation; zero for constant features.
    pub std: Vec<f64>,
    pub constant: Vec<bool>,
}

impl StandardizationParams {
    pub fn unfitted(feature_names: Vec<String>) -> Self {
        Self {
            feature_names,
            mean: Vec::new(),
            std: Vec::new(),
            constant: Vec::new(),
        }
    }

    pub fn is_fitted(&self) -> bool {
        !self.feature_names.is_empty() && self.mean.len() == self.feature_names.len()
    }

    /// Fits column means and population standard deviations.
    pub fn fit(feature_names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self, FeatureError> {
        let d = feature_names.len();
        if d == 0 {
            return Err(FeatureError::Config("no features to standardize".into()));
        }
        if rows.is_empty() {
            return Err(FeatureError::Input("cannot fit a standardizer on zero rows".into()));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(FeatureError::Input(format!(
                "row has {} columns, expected {d}",
                bad.len()
            )));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for j in 0..d {
                var[j] += (r[j] - mean[j]).powi(2);
            }
        }
        let mut std: Vec<f64> = var.iter().map(|v| (v / n).sqrt()).collect();
        let constant: Vec<bool> = std
            .iter()
            .zip(&mean)
            .map(|(s, m)| *s <= 1e-12 * m.abs().max(1.0))
            .collect();
        for (s, c) in std.iter_mut().zip(&constant) {
            if *c {
                *s = 0.0;
            }
        }
        if let Some(j) = mean.iter().position(|m| !m.is_finite()) {
            return Err(FeatureError::Input(format!(
                "feature {} has a non-finite mean",
                feature_names[j]
            )));
        }
        Ok(Self {
            feature_names,
            mean,
            std,
            constant,
        })
    }

    pub fn apply(&self, row: &[f64]) -> Result<Vec<f64>, FeatureError> {
        if !self.is_fitted() {
            return Err(FeatureError::Unfitted);
        }
        if row.len() != self.mean.len() {
            return Err(FeatureError::Input(format!(
                "row has {} columns, expected {}",
                row.len(),
                self.mean.len()
            )));
        }
        Ok(row
            .iter()
            .enumerate()
            .map(|(j, x)| {
                if self.constant[j] {
                    0.0
                } else {
                    (x - self.mean[j]) / self.std[j]
                }
            })
            .collect())
    }

    /// Maps a standardized row back to raw units. Constant features come back
    /// as their fitted value.
    pub fn invert(&self, row: &[f64]) -> Result<Vec<f64>, FeatureError> {
        if !self.is_fitted() {
            return Err(FeatureError::Unfitted);
        }
        Ok(row
            .iter()
            .enumerate()
            .map(|(j, z)| self.mean[j] + z * self.std[j])
            .collect())
    }
}

/// Observation categories of the intra-state components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObsCategory {
    #[serde(rename = "RTE")]
    Rte,
    #[serde(rename = "FREQ")]
    Freq,
    #[serde(rename = "PAX DMD")]
    PaxDmd,
    #[serde(rename = "ORIG")]
    Orig,
    #[serde(rename = "DEST")]
    Dest,
    #[serde(rename = "DISRP")]
    Disrp,
}

impl ObsCategory {
    pub fn name(self) -> &'static str {
        match self {
            ObsCategory::Rte => "RTE",
            ObsCategory::Freq => "FREQ",
            ObsCategory::PaxDmd => "PAX DMD",
            ObsCategory::Orig => "ORIG",
            ObsCategory::Dest => "DEST",
            ObsCategory::Disrp => "DISRP",
        }
    }
}

/// One observation group of a component: either an aleatoric category or a
/// single epistemic feature (inter-state observations).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "name", rename_all = "snake_case")]
pub enum Observation {
    Category(ObsCategory),
    Feature(String),
}

impl Observation {
    pub fn name(&self) -> &str {
        match self {
            Observation::Category(c) => c.name(),
            Observation::Feature(f) => f,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVectorSpec {
    pub component_id: String,
    pub hidden_features: Vec<String>,
    pub observations: Vec<Observation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Encoding {
    /// Numeric field passed through (durations, percentages, counts, flags).
    Raw,
    Periodic { period: f64 },
    OneHot { vocabulary: Vec<String> },
    /// Latitude/longitude pair to a unit vector.
    Spherical,
    /// Great-circle distance between origin and destination.
    RouteDistance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutEntry {
    pub observation: String,
    pub source_field: String,
    pub encoding: Encoding,
    pub columns: Vec<usize>,
}

/// Ordered column manifest of one component's observation matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub entries: Vec<LayoutEntry>,
    pub column_names: Vec<String>,
}

/// Record field behind a feature label. The labels use `DELY_MIN` where the
/// data column is `DELY_MINS`.
pub fn field_for_label(label: &str) -> &str {
    match label {
        "DELY_MIN" => "DELY_MINS",
        other => other,
    }
}

fn encoding_for_field(field: &str, records: &[&FlightLegRecord]) -> Encoding {
    if field.ends_with("_ACFT_TYPE") {
        let mut vocab: Vec<String> = records
            .iter()
            .filter_map(|r| match r.field(field) {
                Some(FieldValue::Text(s)) => Some(s.to_string()),
                _ => None,
            })
            .collect();
        vocab.sort();
        vocab.dedup();
        Encoding::OneHot { vocabulary: vocab }
    } else if field.starts_with("tod_") {
        Encoding::Periodic { period: TOD_PERIOD }
    } else {
        Encoding::Raw
    }
}

impl FeatureLayout {
    /// Expands a component's observation groups into encoded columns.
    /// `records` supply the category vocabularies of text features.
    pub fn build(spec: &FeatureVectorSpec, records: &[&FlightLegRecord]) -> Result<Self, FeatureError> {
        let mut entries: Vec<LayoutEntry> = Vec::new();
        let mut names: Vec<String> = Vec::new();
        let mut push = |observation: &str, source: &str, encoding: Encoding, cols: Vec<String>| {
            let start = names.len();
            names.extend(cols);
            entries.push(LayoutEntry {
                observation: observation.to_string(),
                source_field: source.to_string(),
                encoding,
                columns: (start..names.len()).collect(),
            });
        };
        let sc = |p: &str| vec![format!("{p}_sin"), format!("{p}_cos")];
        for obs in &spec.observations {
            let o = obs.name();
            match obs {
                Observation::Category(ObsCategory::Rte) => {
                    push(o, "route", Encoding::RouteDistance, vec!["route_km".into()])
                }
                Observation::Category(ObsCategory::Freq) => {
                    for (f, period) in [
                        ("dow", DOW_PERIOD),
                        ("doy", DOY_PERIOD),
                        ("moy", MOY_PERIOD),
                        ("season", SEASON_PERIOD),
                    ] {
                        push(o, f, Encoding::Periodic { period }, sc(f));
                    }
                }
                Observation::Category(ObsCategory::PaxDmd) => push(o, "ONBD_CT", Encoding::Raw, vec!["ONBD_CT".into()]),
                Observation::Category(c @ (ObsCategory::Orig | ObsCategory::Dest)) => {
                    let p = if *c == ObsCategory::Orig { "orig" } else { "dest" };
                    push(
                        o,
                        p,
                        Encoding::Spherical,
                        ["x", "y", "z"].iter().map(|a| format!("{p}_{a}_dir")).collect(),
                    );
                    if *c == ObsCategory::Orig {
                        push(
                            o,
                            "sched_route_originator_flag",
                            Encoding::Raw,
                            vec!["sched_route_originator_flag".into()],
                        );
                    }
                }
                Observation::Category(ObsCategory::Disrp) => {
                    let vocab = DelayCode::weather_vocabulary();
                    let cols = vocab.iter().map(|c| format!("delay_code_{c}")).collect();
                    push(o, "delay_code", Encoding::OneHot { vocabulary: vocab }, cols)
                }
                Observation::Feature(label) => {
                    let field = field_for_label(label);
                    if !is_model_column(field) {
                        return Err(FeatureError::Config(format!("unknown feature {label:?}")));
                    }
                    let encoding = encoding_for_field(field, records);
                    let cols = match &encoding {
                        Encoding::OneHot { vocabulary } => {
                            if vocabulary.is_empty() {
                                return Err(FeatureError::Config(format!(
                                    "no training values for categorical feature {field}"
                                )));
                            }
                            vocabulary.iter().map(|v| format!("{field}={v}")).collect()
                        }
                        Encoding::Periodic { .. } => sc(field),
                        _ => vec![field.to_string()],
                    };
                    push(o, field, encoding, cols)
                }
            }
        }
        Ok(Self {
            entries,
            column_names: names,
        })
    }

    pub fn width(&self) -> usize {
        self.column_names.len()
    }

    /// Encodes one record into raw (unstandardized) columns.
    pub fn encode(&self, record: &FlightLegRecord, index: usize) -> Result<Vec<f64>, FeatureError> {
        let missing = |field: &str| FeatureError::MissingField {
            record: index,
            flight_id: record.flight_id.clone(),
            field: field.to_string(),
        };
        let number = |field: &str| match record.field(field) {
            Some(FieldValue::Number(x)) => Ok(x),
            _ => Err(missing(field)),
        };
        let point = |p: &str| GeoPoint::new(number(&format!("{p}_lat"))?, number(&format!("{p}_lon"))?);

        let mut row = Vec::with_capacity(self.width());
        for e in &self.entries {
            let f = e.source_field.as_str();
            match &e.encoding {
                Encoding::Raw => row.push(number(f)?),
                Encoding::Periodic { period } => {
                    let (s, c) = periodic_encode(number(f)?, *period)?;
                    row.extend([s, c]);
                }
                Encoding::Spherical => {
                    let (x, y, z) = spherical_coords(point(f)?)?;
                    row.extend([x, y, z]);
                }
                Encoding::RouteDistance => row.push(route_distance(point("orig")?, point("dest")?)?),
                Encoding::OneHot { vocabulary } => {
                    let v = match record.field(f) {
                        Some(FieldValue::Text(s)) => one_hot(s, vocabulary)?,
                        // A non-disrupted record has no delay code.
                        _ if f == "delay_code" => vec![0.0; vocabulary.len()],
                        _ => return Err(missing(f)),
                    };
                    row.extend(v);
                }
            }
        }
        Ok(row)
    }

    /// Raw encoded rows for a record list, in record order.
    pub fn encode_all(&self, records: &[&FlightLegRecord]) -> Result<Vec<Vec<f64>>, FeatureError> {
        records.iter().enumerate().map(|(i, r)| self.encode(r, i)).collect()
    }
}

/// Standardized observation rows, one per record.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub column_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.column_names.len()
    }

    /// One scalar observation sequence per record, stepping through the
    /// columns in layout order.
    pub fn sequences(&self) -> Result<Vec<ObservationSequence>, FeatureError> {
        Ok(self
            .rows
            .iter()
            .map(|r| ObservationSequence::scalar(r.clone()))
            .collect::<Result<_, _>>()?)
    }
}

/// Encodes and standardizes records under a fitted layout.
pub fn build_observation_matrix(
    records: &[&FlightLegRecord],
    layout: &FeatureLayout,
    params: &StandardizationParams,
) -> Result<FeatureMatrix, FeatureError> {
    if !params.is_fitted() {
        return Err(FeatureError::Unfitted);
    }
    if params.feature_names != layout.column_names {
        return Err(FeatureError::Config(
            "standardizer was fitted on a different column layout".into(),
        ));
    }
    let rows = layout
        .encode_all(records)?
        .iter()
        .map(|r| params.apply(r))
        .collect::<Result<_, _>>()?;
    Ok(FeatureMatrix {
        column_names: layout.column_names.clone(),
        rows,
    })
}
