//! Experiment orchestration: ground-truth route simulation, localization
//! sweeps per method and route length, accuracy reports and difference
//! scores.

mod run;
mod simulate;

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::BsdNoise;
use crate::error::{Error, Result};
use crate::localize::LocalizerConfig;
use crate::world::TagSet;

pub use run::{
    encode_map_store, localize_simulated, noisy_image_descriptor, retrieval_pairs, retrieval_queries, run_experiment,
    Environment,
};
pub use simulate::simulate_routes;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "es")]
    Es,
    #[serde(rename = "es+t")]
    EsTurns,
    #[serde(rename = "bsd")]
    Bsd,
    #[serde(rename = "bsd+t")]
    BsdTurns,
    #[serde(rename = "t-only")]
    TurnOnly,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Es, Method::EsTurns, Method::Bsd, Method::BsdTurns, Method::TurnOnly];

    pub fn name(self) -> &'static str {
        match self {
            Method::Es => "es",
            Method::EsTurns => "es+t",
            Method::Bsd => "bsd",
            Method::BsdTurns => "bsd+t",
            Method::TurnOnly => "t-only",
        }
    }

    pub fn uses_turns(self) -> bool {
        matches!(self, Method::EsTurns | Method::BsdTurns | Method::TurnOnly)
    }

    pub fn uses_descriptors(self) -> bool {
        matches!(self, Method::Es | Method::EsTurns)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Method> {
        let s = s.to_ascii_lowercase();
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method '{s}' (expected es, es+t, bsd, bsd+t, t-only)")))
    }
}

/// Query-side corruption.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    /// Isotropic gaussian noise added to the image-side latent before encoding.
    pub descriptor_sigma: f64,
    /// Probability of flipping each query turn bit.
    pub turn_flip: f64,
    pub bsd: BsdNoise,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel { descriptor_sigma: 0.0, turn_flip: 0.0, bsd: BsdNoise::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub method: Method,
    pub route_count: usize,
    /// Ground-truth route length in locations.
    pub max_length: usize,
    /// Success window: trailing locations that must match.
    pub window: usize,
    pub noise: NoiseModel,
    pub localizer: LocalizerConfig,
    /// Tags a simulated route may not touch.
    pub exclusions: TagSet,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            method: Method::Es,
            route_count: 500,
            max_length: 20,
            window: 5,
            noise: NoiseModel::default(),
            localizer: LocalizerConfig::default(),
            exclusions: TagSet::default_exclusions(),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.localizer.validate()?;
        if self.route_count == 0 {
            return Err(Error::invalid("route_count must be >= 1"));
        }
        if self.window == 0 {
            return Err(Error::invalid("window must be >= 1"));
        }
        if self.max_length < self.window {
            return Err(Error::invalid(format!(
                "max_length {} shorter than success window {}",
                self.max_length, self.window
            )));
        }
        let n = &self.noise;
        if !(n.descriptor_sigma >= 0.0 && n.descriptor_sigma.is_finite()) {
            return Err(Error::invalid("descriptor_sigma must be finite and >= 0"));
        }
        for p in [n.turn_flip, n.bsd.junction_flip, n.bsd.gap_flip] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("flip probability {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthAccuracy {
    pub length: usize,
    pub top1: f64,
    pub top5: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub config: ExperimentConfig,
    pub graph_locations: usize,
    /// Turn constraints are enforced at every step, not only on the final
    /// estimate.
    pub turn_filtering: String,
    pub elapsed_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub method: Method,
    /// Ground-truth routes, in simulation order.
    pub routes: Vec<Vec<u32>>,
    /// Indexed by `length - 1`.
    pub lengths: Vec<LengthAccuracy>,
    /// Per length, the indices of the routes localized at rank 1.
    pub localized: Vec<BTreeSet<u32>>,
    pub meta: ReportMeta,
}

impl AccuracyReport {
    pub fn at(&self, length: usize) -> Option<&LengthAccuracy> {
        length.checked_sub(1).and_then(|i| self.lengths.get(i))
    }

    pub fn localized_at(&self, length: usize) -> Result<&BTreeSet<u32>> {
        length
            .checked_sub(1)
            .and_then(|i| self.localized.get(i))
            .ok_or_else(|| Error::invalid(format!("report has no route length {length}")))
    }

    /// `length,top1,top5` CSV.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["length", "top1", "top5"])?;
        for l in &self.lengths {
            wr.write_record([l.length.to_string(), format!("{:.6}", l.top1), format!("{:.6}", l.top5)])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// JSON sidecar with metadata and localized sets.
    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }
}

/// `|a \ b| / |a|`: the fraction of routes localized by one method that the
/// other misses.
pub fn difference_score(a: &BTreeSet<u32>, b: &BTreeSet<u32>) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::invalid("difference score undefined for an empty first set"));
    }
    Ok(a.difference(b).count() as f64 / a.len() as f64)
}
