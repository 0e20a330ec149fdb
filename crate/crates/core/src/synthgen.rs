//! Seeded synthetic flight-leg generator.
//!
//! Produces schema-valid records for a point-to-point network. A configurable
//! fraction of legs is disrupted by a weather delay code; each disrupted leg
//! is handled under one of several latent recovery regimes (for example
//! swap-prone or delay-prone), which shape its decision-row fields.

use std::path::Path;

use chrono::{Datelike, NaiveDate};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DelayCode, FlightLegRecord};
use crate::features::GeoPoint;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Airport {
    pub code: String,
    pub latitude_deg: f64,
    pub longitude_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub orig: String,
    pub dest: String,
    pub block_mins: f64,
    pub daily_frequency: u32,
    /// Mean fraction of seats filled.
    pub load_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AircraftType {
    pub name: String,
    pub seats: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayCodeWeight {
    pub code: String,
    pub weight: f64,
}

/// Latent recovery policy applied to a disrupted leg.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub name: String,
    pub weight: f64,
    pub swap_rate: f64,
    pub dely_mins_mean: f64,
    pub dely_mins_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub year: i32,
    pub disruption_rate: f64,
    /// Swap rate of legs that run undisrupted.
    pub baseline_swap_rate: f64,
    pub airports: Vec<Airport>,
    pub routes: Vec<Route>,
    pub aircraft_types: Vec<AircraftType>,
    pub delay_codes: Vec<DelayCodeWeight>,
    pub regimes: Vec<Regime>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        let airports = [
            ("DAL", 32.8471, -96.8518),
            ("HOU", 29.6454, -95.2789),
            ("MDW", 41.7868, -87.7522),
            ("BOS", 42.3656, -71.0096),
            ("BWI", 39.1774, -76.6684),
            ("ATL", 33.6407, -84.4277),
            ("DEN", 39.8561, -104.6737),
            ("PHX", 33.4352, -112.0101),
            ("LAS", 36.0840, -115.1537),
            ("OAK", 37.7126, -122.2197),
            ("MCO", 28.4312, -81.3081),
            ("MSY", 29.9934, -90.2580),
        ];
        let routes = [
            ("DAL", "HOU", 65.0, 24, 0.92),
            ("HOU", "DAL", 65.0, 24, 0.90),
            ("MDW", "BOS", 140.0, 6, 0.70),
            ("BOS", "MDW", 150.0, 6, 0.68),
            ("DAL", "DEN", 120.0, 8, 0.78),
            ("DEN", "PHX", 110.0, 10, 0.74),
            ("PHX", "LAS", 70.0, 12, 0.88),
            ("LAS", "OAK", 85.0, 10, 0.84),
            ("BWI", "ATL", 120.0, 8, 0.66),
            ("ATL", "MCO", 85.0, 8, 0.86),
            ("MCO", "BWI", 140.0, 8, 0.72),
            ("HOU", "MSY", 70.0, 10, 0.80),
            ("MSY", "MDW", 135.0, 6, 0.64),
            ("MDW", "DEN", 155.0, 8, 0.76),
        ];
        let codes = [
            ("HD03", 0.10),
            ("HD06", 0.25),
            ("HD07", 0.20),
            ("HD08", 0.08),
            ("HD09", 0.12),
            ("MX05", 0.08),
            ("MX07", 0.10),
            ("MX08", 0.07),
        ];
        Self {
            year: 2017,
            disruption_rate: 0.2,
            baseline_swap_rate: 0.02,
            airports: airports
                .iter()
                .map(|(c, la, lo)| Airport {
                    code: c.to_string(),
                    latitude_deg: *la,
                    longitude_deg: *lo,
                })
                .collect(),
            routes: routes
                .iter()
                .map(|(o, d, b, f, lf)| Route {
                    orig: o.to_string(),
                    dest: d.to_string(),
                    block_mins: *b,
                    daily_frequency: *f,
                    load_factor: *lf,
                })
                .collect(),
            aircraft_types: vec![
                AircraftType {
                    name: "B737-700".into(),
                    seats: 143,
                },
                AircraftType {
                    name: "B737-800".into(),
                    seats: 175,
                },
            ],
            delay_codes: codes
                .iter()
                .map(|(c, w)| DelayCodeWeight {
                    code: c.to_string(),
                    weight: *w,
                })
                .collect(),
            regimes: vec![
                Regime {
                    name: "swap-prone".into(),
                    weight: 0.5,
                    swap_rate: 0.8,
                    dely_mins_mean: 10.0,
                    dely_mins_sd: 4.0,
                },
                Regime {
                    name: "delay-prone".into(),
                    weight: 0.5,
                    swap_rate: 0.05,
                    dely_mins_mean: 60.0,
                    dely_mins_sd: 15.0,
                },
            ],
        }
    }
}

impl NetworkConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, SynthError> {
        let cfg: Self = toml::from_str(text).map_err(|e| SynthError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SynthError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("network config always serializes")
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let err = |m: String| Err(SynthError::Config(m));
        if NaiveDate::from_yo_opt(self.year, 1).is_none() {
            return err(format!("year {} out of range", self.year));
        }
        if !(0.0..=1.0).contains(&self.disruption_rate) {
            return err(format!("disruption_rate {} outside [0, 1]", self.disruption_rate));
        }
        if !(0.0..=1.0).contains(&self.baseline_swap_rate) {
            return err(format!("baseline_swap_rate {} outside [0, 1]", self.baseline_swap_rate));
        }
        if self.airports.len() < 2 {
            return err("need at least 2 airports".into());
        }
        for (i, a) in self.airports.iter().enumerate() {
            if self.airports[..i].iter().any(|b| b.code == a.code) {
                return err(format!("duplicate airport {}", a.code));
            }
            GeoPoint::new(a.latitude_deg, a.longitude_deg)
                .map_err(|e| SynthError::Config(format!("airport {}: {e}", a.code)))?;
        }
        if self.routes.is_empty() {
            return err("need at least one route".into());
        }
        for r in &self.routes {
            for code in [&r.orig, &r.dest] {
                if !self.airports.iter().any(|a| &a.code == code) {
                    return err(format!("route references unknown airport {code}"));
                }
            }
            if r.orig == r.dest {
                return err(format!("route {}-{} has identical endpoints", r.orig, r.dest));
            }
            if !r.block_mins.is_finite() || r.block_mins <= 30.0 {
                return err(format!("route {}-{} block_mins must exceed 30", r.orig, r.dest));
            }
            if !(r.load_factor > 0.0 && r.load_factor <= 1.0) {
                return err(format!("route {}-{} load_factor outside (0, 1]", r.orig, r.dest));
            }
            if r.daily_frequency == 0 {
                return err(format!("route {}-{} has zero daily frequency", r.orig, r.dest));
            }
        }
        if self.aircraft_types.is_empty() {
            return err("need at least one aircraft type".into());
        }
        if self.aircraft_types.iter().any(|t| t.name.is_empty() || t.seats == 0) {
            return err("aircraft types need a name and a positive seat count".into());
        }
        check_weights("delay code", self.delay_codes.iter().map(|c| c.weight))?;
        for c in &self.delay_codes {
            if !DelayCode::from(c.code.clone()).is_weather() {
                return err(format!("{} is not a weather delay code", c.code));
            }
        }
        if self.regimes.len() < 2 {
            return err("need at least 2 regimes".into());
        }
        check_weights("regime", self.regimes.iter().map(|r| r.weight))?;
        for r in &self.regimes {
            if !(0.0..=1.0).contains(&r.swap_rate) {
                return err(format!("regime {} swap_rate outside [0, 1]", r.name));
            }
            if !(r.dely_mins_mean >= 0.0 && r.dely_mins_sd >= 0.0) {
                return err(format!("regime {} needs non-negative delay mean and sd", r.name));
            }
        }
        Ok(())
    }
}

fn check_weights(what: &str, weights: impl Iterator<Item = f64>) -> Result<(), SynthError> {
    let w: Vec<f64> = weights.collect();
    if w.is_empty() {
        return Err(SynthError::Config(format!("{what} weights are empty")));
    }
    if w.iter().any(|x| x.is_nan() || *x < 0.0) {
        return Err(SynthError::Config(format!("{what} weights must be non-negative")));
    }
    let total: f64 = w.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(SynthError::Config(format!("{what} weights sum to {total}, not 1")));
    }
    Ok(())
}

/// Extra minutes a delay code adds to (turn, taxi-out, enroute, gate hold).
fn code_effect(code: &DelayCode) -> (f64, f64, f64, f64) {
    match code {
        DelayCode::HD03 => (0.0, 4.0, 20.0, 0.0),
        DelayCode::HD06 => (0.0, 6.0, 0.0, 15.0),
        DelayCode::HD07 => (0.0, 3.0, 12.0, 10.0),
        DelayCode::HD08 => (10.0, 12.0, 0.0, 0.0),
        DelayCode::HD09 => (15.0, 18.0, 0.0, 0.0),
        DelayCode::MX05 | DelayCode::MX07 | DelayCode::MX08 => (30.0, 0.0, 0.0, 0.0),
        DelayCode::Other(_) => (0.0, 0.0, 0.0, 0.0),
    }
}

fn season(month: u32) -> u32 {
    match month {
        12 | 1 | 2 => 1,
        3..=5 => 2,
        6..=8 => 3,
        _ => 4,
    }
}

fn wrap_hours(h: f64) -> f64 {
    let r = (h.rem_euclid(24.0) * 1e4).round() / 1e4;
    if r >= 24.0 {
        0.0
    } else {
        r
    }
}

/// Percent of an 8-hour work shift (shifts start at 05:00, 13:00, 21:00)
/// elapsed at a time of day.
fn shift_percent(tod: f64) -> f64 {
    round1((tod - 5.0).rem_euclid(8.0) / 8.0 * 100.0).min(100.0)
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

struct Noise {
    rng: ChaCha8Rng,
}

impl Noise {
    fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        if sd == 0.0 {
            return mean;
        }
        Normal::new(mean, sd).expect("finite normal").sample(&mut self.rng)
    }

    /// Normal draw clamped below.
    fn at_least(&mut self, lo: f64, mean: f64, sd: f64) -> f64 {
        round1(self.normal(mean, sd).max(lo))
    }

    fn bernoulli(&mut self, p: f64) -> bool {
        self.rng.random::<f64>() < p
    }
}

/// Generates `n_flights` records. Identical `(config, seed)` pairs give
/// identical output.
pub fn generate(config: &NetworkConfig, n_flights: usize, seed: u64) -> Result<Vec<FlightLegRecord>, SynthError> {
    config.validate()?;
    if n_flights == 0 {
        return Err(SynthError::Config("n_flights must be at least 1".into()));
    }
    let route_pick = WeightedIndex::new(config.routes.iter().map(|r| r.daily_frequency as f64))
        .map_err(|e| SynthError::Config(e.to_string()))?;
    let code_pick = WeightedIndex::new(config.delay_codes.iter().map(|c| c.weight))
        .map_err(|e| SynthError::Config(e.to_string()))?;
    let regime_pick = WeightedIndex::new(config.regimes.iter().map(|r| r.weight))
        .map_err(|e| SynthError::Config(e.to_string()))?;
    let days_in_year = if NaiveDate::from_yo_opt(config.year, 366).is_some() { 366 } else { 365 };
    let airport = |code: &str| {
        config
            .airports
            .iter()
            .find(|a| a.code == code)
            .expect("validated route endpoint")
    };

    let mut g = Noise {
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let mut out = Vec::with_capacity(n_flights);
    for i in 0..n_flights {
        let route = &config.routes[route_pick.sample(&mut g.rng)];
        let (o, d) = (airport(&route.orig), airport(&route.dest));
        let doy = g.rng.random_range(1..=days_in_year);
        let date = NaiveDate::from_yo_opt(config.year, doy).expect("day within year");

        let n_types = config.aircraft_types.len();
        let sched_type = &config.aircraft_types[g.rng.random_range(0..n_types)];
        let load = g.normal(route.load_factor, 0.04).clamp(0.3, 1.0);
        let onbd_ct = (sched_type.seats as f64 * load).round();
        let originator = g.bernoulli(0.3);

        let disrupted = g.bernoulli(config.disruption_rate);
        let code = disrupted.then(|| DelayCode::from(config.delay_codes[code_pick.sample(&mut g.rng)].code.clone()));
        let regime = disrupted.then(|| &config.regimes[regime_pick.sample(&mut g.rng)]);
        let (turn_x, taxi_x, enroute_x, hold_x) = code.as_ref().map_or((0.0, 0.0, 0.0, 0.0), code_effect);

        let swap = match regime {
            Some(r) => g.bernoulli(r.swap_rate),
            None => g.bernoulli(config.baseline_swap_rate),
        };
        let actl_type = if swap && n_types > 1 {
            let k = g.rng.random_range(1..n_types);
            &config.aircraft_types[(config.aircraft_types.iter().position(|t| t == sched_type).unwrap() + k) % n_types]
        } else {
            sched_type
        };
        let dely = match regime {
            Some(r) => g.at_least(0.0, r.dely_mins_mean, r.dely_mins_sd),
            None => 0.0,
        };

        let sched_pb = (g.rng.random_range(330..1320) as f64) / 60.0;
        let sched_turn = g.at_least(25.0, 45.0, 6.0);
        let adjst_turn = round1(sched_turn + turn_x + 0.5 * dely + g.normal(0.0, 2.0).abs());
        let sched_block = round1(route.block_mins + g.normal(0.0, 2.0));
        let taxi_out = g.at_least(3.0, 11.0 + taxi_x, 3.0);
        let enroute = g.at_least(20.0, sched_block - 17.0 + enroute_x, 4.0);
        let taxi_in = g.at_least(2.0, 6.0, 1.5);
        let actl_block = round1(taxi_out + enroute + taxi_in);
        let late_out = if disrupted {
            round1(dely + hold_x + g.normal(0.0, 4.0))
        } else {
            round1(g.normal(-1.0, 3.0))
        };
        let actl_turn = round1((sched_turn + late_out.max(0.0) + g.normal(0.0, 2.0)).max(0.0));
        let dot_delay = round1(late_out + actl_block - sched_block);

        let actl_pb = sched_pb + late_out / 60.0;
        let actl_to = actl_pb + taxi_out / 60.0;
        let actl_ld = actl_to + enroute / 60.0;
        let actl_gp = actl_ld + taxi_in / 60.0;
        let sched_to = sched_pb + 11.0 / 60.0;
        let sched_gp = sched_pb + sched_block / 60.0;
        let sched_ld = sched_gp - 6.0 / 60.0;
        let tods = [sched_pb, sched_to, sched_ld, sched_gp, actl_pb, actl_to, actl_ld, actl_gp].map(wrap_hours);
        let shift = tods.map(shift_percent);

        out.push(FlightLegRecord {
            flight_id: format!("F{}", i + 1),
            date: date.format("%Y-%m-%d").to_string(),
            orig: o.code.clone(),
            dest: d.code.clone(),
            dow: date.weekday().number_from_monday(),
            doy: date.ordinal(),
            moy: date.month(),
            season: season(date.month()),
            orig_lat: o.latitude_deg,
            orig_lon: o.longitude_deg,
            dest_lat: d.latitude_deg,
            dest_lon: d.longitude_deg,
            onbd_ct,
            sched_route_originator_flag: originator as u8,
            delay_mins: disrupted.then_some(dely),
            delay_code: code,
            sched_turn_mins: Some(sched_turn),
            actl_turn_mins: Some(actl_turn),
            adjst_turn_mins: Some(adjst_turn),
            taxi_out: Some(taxi_out),
            taxi_in: Some(taxi_in),
            sched_block_mins: Some(sched_block),
            actl_block_mins: Some(actl_block),
            actl_enroute_mins: Some(enroute),
            tod_sched_pb: Some(tods[0]),
            tod_sched_to: Some(tods[1]),
            tod_sched_ld: Some(tods[2]),
            tod_sched_gp: Some(tods[3]),
            tod_actl_pb: Some(tods[4]),
            tod_actl_to: Some(tods[5]),
            tod_actl_ld: Some(tods[6]),
            tod_actl_gp: Some(tods[7]),
            shiftper_sched_pb: Some(shift[0]),
            shiftper_sched_to: Some(shift[1]),
            shiftper_sched_ld: Some(shift[2]),
            shiftper_sched_gp: Some(shift[3]),
            shiftper_actl_pb: Some(shift[4]),
            shiftper_actl_to: Some(shift[5]),
            shiftper_actl_ld: Some(shift[6]),
            shiftper_actl_gp: Some(shift[7]),
            dely_mins: Some(dely),
            dot_delay_mins: Some(dot_delay),
            late_out_vs_sched_mins: Some(late_out),
            swap_flt_flag: Some(swap as u8),
            sched_acft_type: Some(sched_type.name.clone()),
            actl_acft_type: Some(actl_type.name.clone()),
        });
    }
    Ok(out)
}
