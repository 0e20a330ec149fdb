//! Flight-leg records: CSV ingestion, schema validation, disrupted /
//! non-disrupted segmentation, seeded hold-out and fold assignment, and
//! k-fold cross-validation of HMM training.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hmm::{baum_welch, forward_backward, GaussianHmm, HmmError, ObservationSequence, TrainConfig};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("row error at line {line}, column {column}: {message}")]
    Row {
        line: u64,
        column: String,
        message: String,
    },
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Hmm(#[from] HmmError),
}

/// Weather delay codes, plus any other airline code passed through verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum DelayCode {
    /// Weather holding.
    HD03,
    /// ATC gate hold for weather at departure station.
    HD06,
    /// ATC gate hold for weather at enroute or at destination station.
    HD07,
    /// Ice on wings / cold-soaked fuel.
    HD08,
    /// Deicing at gate.
    HD09,
    /// Inspection due to lightning strike.
    MX05,
    /// Inspection due to turbulence.
    MX07,
    /// Hail, ice, or snow damage.
    MX08,
    Other(String),
}

impl DelayCode {
    pub const WEATHER: [DelayCode; 8] = [
        DelayCode::HD03,
        DelayCode::HD06,
        DelayCode::HD07,
        DelayCode::HD08,
        DelayCode::HD09,
        DelayCode::MX05,
        DelayCode::MX07,
        DelayCode::MX08,
    ];

    pub fn as_str(&self) -> &str {
        match self {
            DelayCode::HD03 => "HD03",
            DelayCode::HD06 => "HD06",
            DelayCode::HD07 => "HD07",
            DelayCode::HD08 => "HD08",
            DelayCode::HD09 => "HD09",
            DelayCode::MX05 => "MX05",
            DelayCode::MX07 => "MX07",
            DelayCode::MX08 => "MX08",
            DelayCode::Other(s) => s,
        }
    }

    pub fn is_weather(&self) -> bool {
        !matches!(self, DelayCode::Other(_))
    }

    /// Names of the weather codes, in one-hot column order.
    pub fn weather_vocabulary() -> Vec<String> {
        Self::WEATHER.iter().map(|c| c.as_str().to_string()).collect()
    }
}

impl From<String> for DelayCode {
    fn from(s: String) -> Self {
        match s.as_str() {
            "HD03" => DelayCode::HD03,
            "HD06" => DelayCode::HD06,
            "HD07" => DelayCode::HD07,
            "HD08" => DelayCode::HD08,
            "HD09" => DelayCode::HD09,
            "MX05" => DelayCode::MX05,
            "MX07" => DelayCode::MX07,
            // Letter-O spelling seen in some code tables.
            "MX08" | "MXO8" => DelayCode::MX08,
            _ => DelayCode::Other(s),
        }
    }
}

impl From<DelayCode> for String {
    fn from(c: DelayCode) -> Self {
        c.as_str().to_string()
    }
}

impl fmt::Display for DelayCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One flight leg. Column names follow the feature nomenclature; times of day
/// are hours in `[0, 24)`, durations are minutes, `shiftper_*` are percent of
/// the work shift completed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightLegRecord {
    pub flight_id: String,
    pub date: String,
    pub orig: String,
    pub dest: String,

    // Determinate aleatoric.
    pub dow: u32,
    pub doy: u32,
    pub moy: u32,
    pub season: u32,
    pub orig_lat: f64,
    pub orig_lon: f64,
    pub dest_lat: f64,
    pub dest_lon: f64,
    #[serde(rename = "ONBD_CT")]
    pub onbd_ct: f64,
    pub sched_route_originator_flag: u8,

    // Indeterminate aleatoric.
    pub delay_code: Option<DelayCode>,
    pub delay_mins: Option<f64>,

    // Epistemic.
    #[serde(rename = "SCHED_TURN_MINS")]
    pub sched_turn_mins: Option<f64>,
    #[serde(rename = "ACTL_TURN_MINS")]
    pub actl_turn_mins: Option<f64>,
    #[serde(rename = "ADJST_TURN_MINS")]
    pub adjst_turn_mins: Option<f64>,
    pub taxi_out: Option<f64>,
    pub taxi_in: Option<f64>,
    pub sched_block_mins: Option<f64>,
    pub actl_block_mins: Option<f64>,
    pub actl_enroute_mins: Option<f64>,
    #[serde(rename = "tod_sched_PB")]
    pub tod_sched_pb: Option<f64>,
    #[serde(rename = "tod_sched_TO")]
    pub tod_sched_to: Option<f64>,
    #[serde(rename = "tod_sched_LD")]
    pub tod_sched_ld: Option<f64>,
    #[serde(rename = "tod_sched_GP")]
    pub tod_sched_gp: Option<f64>,
    #[serde(rename = "tod_actl_PB")]
    pub tod_actl_pb: Option<f64>,
    #[serde(rename = "tod_actl_TO")]
    pub tod_actl_to: Option<f64>,
    #[serde(rename = "tod_actl_LD")]
    pub tod_actl_ld: Option<f64>,
    #[serde(rename = "tod_actl_GP")]
    pub tod_actl_gp: Option<f64>,
    #[serde(rename = "shiftper_sched_PB")]
    pub shiftper_sched_pb: Option<f64>,
    #[serde(rename = "shiftper_sched_TO")]
    pub shiftper_sched_to: Option<f64>,
    #[serde(rename = "shiftper_sched_LD")]
    pub shiftper_sched_ld: Option<f64>,
    #[serde(rename = "shiftper_sched_GP")]
    pub shiftper_sched_gp: Option<f64>,
    #[serde(rename = "shiftper_actl_PB")]
    pub shiftper_actl_pb: Option<f64>,
    #[serde(rename = "shiftper_actl_TO")]
    pub shiftper_actl_to: Option<f64>,
    #[serde(rename = "shiftper_actl_LD")]
    pub shiftper_actl_ld: Option<f64>,
    #[serde(rename = "shiftper_actl_GP")]
    pub shiftper_actl_gp: Option<f64>,
    #[serde(rename = "DELY_MINS")]
    pub dely_mins: Option<f64>,
    #[serde(rename = "DOT_DELAY_MINS")]
    pub dot_delay_mins: Option<f64>,
    pub late_out_vs_sched_mins: Option<f64>,
    #[serde(rename = "SWAP_FLT_FLAG")]
    pub swap_flt_flag: Option<u8>,
    #[serde(rename = "SCHED_ACFT_TYPE")]
    pub sched_acft_type: Option<String>,
    #[serde(rename = "ACTL_ACFT_TYPE")]
    pub actl_acft_type: Option<String>,
}

/// CSV header, in file order.
pub const COLUMNS: [&str; 48] = [
    "flight_id",
    "date",
    "orig",
    "dest",
    "dow",
    "doy",
    "moy",
    "season",
    "orig_lat",
    "orig_lon",
    "dest_lat",
    "dest_lon",
    "ONBD_CT",
    "sched_route_originator_flag",
    "delay_code",
    "delay_mins",
    "SCHED_TURN_MINS",
    "ACTL_TURN_MINS",
    "ADJST_TURN_MINS",
    "taxi_out",
    "taxi_in",
    "sched_block_mins",
    "actl_block_mins",
    "actl_enroute_mins",
    "tod_sched_PB",
    "tod_sched_TO",
    "tod_sched_LD",
    "tod_sched_GP",
    "tod_actl_PB",
    "tod_actl_TO",
    "tod_actl_LD",
    "tod_actl_GP",
    "shiftper_sched_PB",
    "shiftper_sched_TO",
    "shiftper_sched_LD",
    "shiftper_sched_GP",
    "shiftper_actl_PB",
    "shiftper_actl_TO",
    "shiftper_actl_LD",
    "shiftper_actl_GP",
    "DELY_MINS",
    "DOT_DELAY_MINS",
    "late_out_vs_sched_mins",
    "SWAP_FLT_FLAG",
    "SCHED_ACFT_TYPE",
    "ACTL_ACFT_TYPE",
    "delay_reason",
    "notes",
];

/// Columns that may be present in a file but carry no model input.
const PASSTHROUGH: [&str; 2] = ["delay_reason", "notes"];

pub fn is_model_column(name: &str) -> bool {
    COLUMNS.contains(&name) && !PASSTHROUGH.contains(&name)
}

/// A single field of a record, looked up by column name.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldValue<'a> {
    Number(f64),
    Text(&'a str),
    Missing,
}

impl FlightLegRecord {
    /// A record is disrupted iff it carries a delay code.
    pub fn is_disrupted(&self) -> bool {
        self.delay_code.is_some()
    }

    /// Looks a field up by its CSV column name; `None` for unknown names.
    pub fn field(&self, name: &str) -> Option<FieldValue<'_>> {
        use FieldValue::*;
        let num = |v: Option<f64>| v.map_or(Missing, Number);
        fn text(v: &Option<String>) -> FieldValue<'_> {
            match v {
                Some(s) if !s.is_empty() => FieldValue::Text(s.as_str()),
                _ => FieldValue::Missing,
            }
        }
        Some(match name {
            "flight_id" => Text(&self.flight_id),
            "date" => Text(&self.date),
            "orig" => Text(&self.orig),
            "dest" => Text(&self.dest),
            "dow" => Number(self.dow as f64),
            "doy" => Number(self.doy as f64),
            "moy" => Number(self.moy as f64),
            "season" => Number(self.season as f64),
            "orig_lat" => Number(self.orig_lat),
            "orig_lon" => Number(self.orig_lon),
            "dest_lat" => Number(self.dest_lat),
            "dest_lon" => Number(self.dest_lon),
            "ONBD_CT" => Number(self.onbd_ct),
            "sched_route_originator_flag" => Number(self.sched_route_originator_flag as f64),
            "delay_code" => self.delay_code.as_ref().map_or(Missing, |c| Text(c.as_str())),
            "delay_mins" => num(self.delay_mins),
            "SCHED_TURN_MINS" => num(self.sched_turn_mins),
            "ACTL_TURN_MINS" => num(self.actl_turn_mins),
            "ADJST_TURN_MINS" => num(self.adjst_turn_mins),
            "taxi_out" => num(self.taxi_out),
            "taxi_in" => num(self.taxi_in),
            "sched_block_mins" => num(self.sched_block_mins),
            "actl_block_mins" => num(self.actl_block_mins),
            "actl_enroute_mins" => num(self.actl_enroute_mins),
            "tod_sched_PB" => num(self.tod_sched_pb),
            "tod_sched_TO" => num(self.tod_sched_to),
            "tod_sched_LD" => num(self.tod_sched_ld),
            "tod_sched_GP" => num(self.tod_sched_gp),
            "tod_actl_PB" => num(self.tod_actl_pb),
            "tod_actl_TO" => num(self.tod_actl_to),
            "tod_actl_LD" => num(self.tod_actl_ld),
            "tod_actl_GP" => num(self.tod_actl_gp),
            "shiftper_sched_PB" => num(self.shiftper_sched_pb),
            "shiftper_sched_TO" => num(self.shiftper_sched_to),
            "shiftper_sched_LD" => num(self.shiftper_sched_ld),
            "shiftper_sched_GP" => num(self.shiftper_sched_gp),
            "shiftper_actl_PB" => num(self.shiftper_actl_pb),
            "shiftper_actl_TO" => num(self.shiftper_actl_to),
            "shiftper_actl_LD" => num(self.shiftper_actl_ld),
            "shiftper_actl_GP" => num(self.shiftper_actl_gp),
            "DELY_MINS" => num(self.dely_mins),
            "DOT_DELAY_MINS" => num(self.dot_delay_mins),
            "late_out_vs_sched_mins" => num(self.late_out_vs_sched_mins),
            "SWAP_FLT_FLAG" => self.swap_flt_flag.map_or(Missing, |f| Number(f as f64)),
            "SCHED_ACFT_TYPE" => text(&self.sched_acft_type),
            "ACTL_ACFT_TYPE" => text(&self.actl_acft_type),
            _ => return None,
        })
    }

    /// Checks value ranges. Returns the offending column and a message.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        fn range(col: &'static str, v: f64, lo: f64, hi: f64, hi_open: bool) -> Result<(), (&'static str, String)> {
            let ok = v.is_finite() && v >= lo && if hi_open { v < hi } else { v <= hi };
            if ok {
                Ok(())
            } else {
                let close = if hi_open { ")" } else { "]" };
                Err((col, format!("value {v} outside [{lo}, {hi}{close}")))
            }
        }
        fn opt(col: &'static str, v: Option<f64>, lo: f64, hi: f64, hi_open: bool) -> Result<(), (&'static str, String)> {
            v.map_or(Ok(()), |v| range(col, v, lo, hi, hi_open))
        }
        let inf = f64::INFINITY;

        if self.flight_id.is_empty() {
            return Err(("flight_id", "empty flight id".into()));
        }
        range("dow", self.dow as f64, 1.0, 7.0, false)?;
        range("doy", self.doy as f64, 1.0, 366.0, false)?;
        range("moy", self.moy as f64, 1.0, 12.0, false)?;
        range("season", self.season as f64, 1.0, 4.0, false)?;
        range("orig_lat", self.orig_lat, -90.0, 90.0, false)?;
        range("dest_lat", self.dest_lat, -90.0, 90.0, false)?;
        for (col, lon) in [("orig_lon", self.orig_lon), ("dest_lon", self.dest_lon)] {
            if !(lon.is_finite() && lon > -180.0 && lon <= 180.0) {
                return Err((col, format!("value {lon} outside (-180, 180]")));
            }
        }
        range("ONBD_CT", self.onbd_ct, 0.0, inf, false)?;
        if self.sched_route_originator_flag > 1 {
            return Err(("sched_route_originator_flag", "flag must be 0 or 1".into()));
        }
        if self.swap_flt_flag.is_some_and(|f| f > 1) {
            return Err(("SWAP_FLT_FLAG", "flag must be 0 or 1".into()));
        }
        opt("delay_mins", self.delay_mins, 0.0, inf, false)?;
        for (col, v) in [
            ("SCHED_TURN_MINS", self.sched_turn_mins),
            ("ACTL_TURN_MINS", self.actl_turn_mins),
            ("ADJST_TURN_MINS", self.adjst_turn_mins),
            ("taxi_out", self.taxi_out),
            ("taxi_in", self.taxi_in),
            ("sched_block_mins", self.sched_block_mins),
            ("actl_block_mins", self.actl_block_mins),
            ("actl_enroute_mins", self.actl_enroute_mins),
            ("DELY_MINS", self.dely_mins),
        ] {
            opt(col, v, 0.0, inf, false)?;
        }
        for (col, v) in [
            ("tod_sched_PB", self.tod_sched_pb),
            ("tod_sched_TO", self.tod_sched_to),
            ("tod_sched_LD", self.tod_sched_ld),
            ("tod_sched_GP", self.tod_sched_gp),
            ("tod_actl_PB", self.tod_actl_pb),
            ("tod_actl_TO", self.tod_actl_to),
            ("tod_actl_LD", self.tod_actl_ld),
            ("tod_actl_GP", self.tod_actl_gp),
        ] {
            opt(col, v, 0.0, 24.0, true)?;
        }
        for (col, v) in [
            ("shiftper_sched_PB", self.shiftper_sched_pb),
            ("shiftper_sched_TO", self.shiftper_sched_to),
            ("shiftper_sched_LD", self.shiftper_sched_ld),
            ("shiftper_sched_GP", self.shiftper_sched_gp),
            ("shiftper_actl_PB", self.shiftper_actl_pb),
            ("shiftper_actl_TO", self.shiftper_actl_to),
            ("shiftper_actl_LD", self.shiftper_actl_ld),
            ("shiftper_actl_GP", self.shiftper_actl_gp),
        ] {
            opt(col, v, 0.0, 100.0, false)?;
        }
        for (col, v) in [
            ("DOT_DELAY_MINS", self.dot_delay_mins),
            ("late_out_vs_sched_mins", self.late_out_vs_sched_mins),
        ] {
            opt(col, v, -inf, inf, false)?;
        }
        if let (Some(block), Some(enroute)) = (self.actl_block_mins, self.actl_enroute_mins) {
            if block < enroute {
                return Err((
                    "actl_block_mins",
                    format!("block time {block} shorter than enroute time {enroute}"),
                ));
            }
        }
        Ok(())
    }
}

/// Reads and validates records from CSV. The header must name only known
/// columns and must include every model column.
pub fn read_csv<R: Read>(reader: R) -> Result<Vec<FlightLegRecord>, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| DatasetError::Schema(format!("cannot read header: {e}")))?
        .clone();
    for h in headers.iter() {
        if !COLUMNS.contains(&h) {
            return Err(DatasetError::Schema(format!("unknown column {h:?}")));
        }
    }
    for required in COLUMNS.iter().filter(|c| !PASSTHROUGH.contains(c)) {
        if !headers.iter().any(|h| h == *required) {
            return Err(DatasetError::Schema(format!("missing column {required:?}")));
        }
    }

    let mut records = Vec::new();
    for result in rdr.deserialize::<FlightLegRecord>() {
        let record = result.map_err(|e| row_error(&e, &headers))?;
        let line = records.len() as u64 + 2;
        record.validate().map_err(|(column, message)| DatasetError::Row {
            line,
            column: column.to_string(),
            message,
        })?;
        records.push(record);
    }
    Ok(records)
}

fn row_error(e: &csv::Error, headers: &csv::StringRecord) -> DatasetError {
    let line = e.position().map_or(0, |p| p.line());
    match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => DatasetError::Row {
            line,
            column: err
                .field()
                .and_then(|i| headers.get(i as usize))
                .unwrap_or("?")
                .to_string(),
            message: err.kind().to_string(),
        },
        _ => DatasetError::Row {
            line,
            column: "?".into(),
            message: e.to_string(),
        },
    }
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<FlightLegRecord>, DatasetError> {
    read_csv(std::fs::File::open(path)?)
}

/// Writes records with the canonical header (pass-through columns omitted).
pub fn write_csv<W: Write>(writer: W, records: &[FlightLegRecord]) -> Result<(), DatasetError> {
    let mut wtr = csv::WriterBuilder::new().has_headers(true).from_writer(writer);
    for r in records {
        wtr.serialize(r)
            .map_err(|e| DatasetError::Io(std::io::Error::other(e.to_string())))?;
    }
    if records.is_empty() {
        let header: Vec<&str> = COLUMNS.iter().copied().filter(|c| !PASSTHROUGH.contains(c)).collect();
        wtr.write_record(&header)
            .map_err(|e| DatasetError::Io(std::io::Error::other(e.to_string())))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Drops disrupted records whose delay code is not weather-related.
pub fn weather_only(records: Vec<FlightLegRecord>) -> Vec<FlightLegRecord> {
    records
        .into_iter()
        .filter(|r| r.delay_code.as_ref().is_none_or(DelayCode::is_weather))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub seed: u64,
    pub hold_out_fraction: f64,
    pub folds: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            hold_out_fraction: 0.2,
            folds: 5,
        }
    }
}

/// Index bookkeeping for one lot: a held-out test slice and `k` folds that
/// partition the remaining training indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub train: Vec<usize>,
    pub test_hold_out: Vec<usize>,
    pub folds: Vec<Vec<usize>>,
}

impl Partition {
    fn build(n: usize, config: &SplitConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let n_test = (n as f64 * config.hold_out_fraction).floor() as usize;
        let mut test_hold_out = order[..n_test].to_vec();
        let train_shuffled = &order[n_test..];
        let mut folds = vec![Vec::new(); config.folds];
        for (pos, &idx) in train_shuffled.iter().enumerate() {
            folds[pos % config.folds].push(idx);
        }
        folds.iter_mut().for_each(|f| f.sort_unstable());
        test_hold_out.sort_unstable();
        let mut train = train_shuffled.to_vec();
        train.sort_unstable();
        Self {
            train,
            test_hold_out,
            folds,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub non_disrupted: Vec<FlightLegRecord>,
    pub disrupted: Vec<FlightLegRecord>,
    /// Indices into `non_disrupted`.
    pub non_disrupted_part: Partition,
    /// Indices into `disrupted`.
    pub disrupted_part: Partition,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn non_disrupted_train(&self) -> Vec<&FlightLegRecord> {
        self.non_disrupted_part.train.iter().map(|&i| &self.non_disrupted[i]).collect()
    }

    pub fn disrupted_train(&self) -> Vec<&FlightLegRecord> {
        self.disrupted_part.train.iter().map(|&i| &self.disrupted[i]).collect()
    }

    pub fn disrupted_test(&self) -> Vec<&FlightLegRecord> {
        self.disrupted_part.test_hold_out.iter().map(|&i| &self.disrupted[i]).collect()
    }
}

/// Partitions records by delay-code presence and assigns each lot a seeded
/// hold-out slice and training folds.
pub fn segment(records: Vec<FlightLegRecord>, config: &SplitConfig) -> Result<DatasetSplit, DatasetError> {
    if records.is_empty() {
        return Err(DatasetError::Config("cannot segment an empty record list".into()));
    }
    if config.folds == 0 {
        return Err(DatasetError::Config("folds must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&config.hold_out_fraction) {
        return Err(DatasetError::Config(format!(
            "hold_out_fraction {} outside [0, 1)",
            config.hold_out_fraction
        )));
    }
    let (disrupted, non_disrupted): (Vec<_>, Vec<_>) = records.into_iter().partition(FlightLegRecord::is_disrupted);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let non_disrupted_part = Partition::build(non_disrupted.len(), config, &mut rng);
    let disrupted_part = Partition::build(disrupted.len(), config, &mut rng);
    Ok(DatasetSplit {
        non_disrupted,
        disrupted,
        non_disrupted_part,
        disrupted_part,
        seed: config.seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    pub seed: u64,
    pub train: TrainConfig,
    /// A fold is flagged when its held-out per-observation log-likelihood is
    /// more than this many standard deviations from the fold mean.
    pub flag_threshold: f64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            seed: 42,
            train: TrainConfig::default(),
            flag_threshold: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_sequences: usize,
    pub test_sequences: usize,
    pub train_log_likelihood: f64,
    pub test_log_likelihood: f64,
    pub test_per_observation: f64,
    /// Mean state posterior over every held-out observation.
    pub state_marginals: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<FoldResult>,
    pub mean_test_per_observation: f64,
    pub std_test_per_observation: f64,
    pub flagged_folds: Vec<usize>,
    pub consistency_flag: bool,
}

/// k-fold cross-validation of Baum-Welch training. `factory` supplies a fresh
/// initial model for every fold.
pub fn cross_validate<F>(factory: F, sequences: &[ObservationSequence], config: &CvConfig) -> Result<CvReport, DatasetError>
where
    F: Fn() -> Result<GaussianHmm, HmmError>,
{
    let k = config.folds;
    if k < 2 {
        return Err(DatasetError::Config("cross-validation needs at least 2 folds".into()));
    }
    if sequences.len() < k {
        return Err(DatasetError::Config(format!(
            "{} sequences cannot fill {k} folds",
            sequences.len()
        )));
    }
    let mut order: Vec<usize> = (0..sequences.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let fold_of: Vec<usize> = {
        let mut f = vec![0; sequences.len()];
        for (pos, &idx) in order.iter().enumerate() {
            f[idx] = pos % k;
        }
        f
    };

    let mut folds = Vec::with_capacity(k);
    for fold in 0..k {
        let train: Vec<ObservationSequence> = (0..sequences.len())
            .filter(|&i| fold_of[i] != fold)
            .map(|i| sequences[i].clone())
            .collect();
        let test: Vec<&ObservationSequence> = (0..sequences.len())
            .filter(|&i| fold_of[i] == fold)
            .map(|i| &sequences[i])
            .collect();
        let init = factory()?;
        let outcome = baum_welch(&init, &train, &config.train)?;
        let n_states = outcome.model.n_states();
        let mut marginals = vec![0.0; n_states];
        let mut test_ll = 0.0;
        let mut n_obs = 0usize;
        for seq in &test {
            let post = forward_backward(&outcome.model, seq)?;
            test_ll += post.log_likelihood;
            n_obs += seq.len();
            for row in &post.gamma {
                for (m, g) in marginals.iter_mut().zip(row) {
                    *m += g;
                }
            }
        }
        marginals.iter_mut().for_each(|m| *m /= n_obs as f64);
        folds.push(FoldResult {
            fold,
            train_sequences: train.len(),
            test_sequences: test.len(),
            train_log_likelihood: *outcome.trace.last().expect("trace is never empty"),
            test_log_likelihood: test_ll,
            test_per_observation: test_ll / n_obs as f64,
            state_marginals: marginals,
            converged: outcome.converged,
            iterations: outcome.iterations,
        });
    }

    let values: Vec<f64> = folds.iter().map(|f| f.test_per_observation).collect();
    let mean = values.iter().sum::<f64>() / k as f64;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k as f64).sqrt();
    let flagged_folds: Vec<usize> = values
        .iter()
        .enumerate()
        .filter(|(_, v)| (*v - mean).abs() > config.flag_threshold * std)
        .map(|(i, _)| i)
        .collect();
    Ok(CvReport {
        consistency_flag: !flagged_folds.is_empty(),
        folds,
        mean_test_per_observation: mean,
        std_test_per_observation: std,
        flagged_folds,
    })
}
