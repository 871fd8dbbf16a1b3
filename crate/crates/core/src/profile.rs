//! Parametric startup-latency models of virtualization technologies.
//!
//! A profile is a log-normal distribution pinned by its median and 99th
//! percentile, shifted by a fixed offset and inflated once the number of
//! concurrent starts exceeds the modeled core count:
//!
//! ```text
//! L  ~ LogNormal(ln(median), (ln(p99) - ln(median)) / z_0.99)
//! L' = (L + fixed_overhead) * max(1, in_flight / cores) ^ contention_exponent
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Standard normal quantile at 0.99.
pub const Z_99: f64 = 2.326_347_874_040_840_8;

pub const DEFAULT_CORES: u32 = 24;

static DEFAULT_PROFILES: &str = include_str!("../profiles/default.json");

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("profile {name:?}: {reason}")]
    Invalid { name: String, reason: &'static str },
    #[error("duplicate profile {0:?}")]
    Duplicate(String),
    #[error("unknown profile {0:?}")]
    Unknown(String),
    #[error("reading profiles: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing profiles: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeProfile {
    pub name: String,
    pub median_ms: f64,
    pub p99_ms: f64,
    #[serde(default = "default_cores")]
    pub cores: u32,
    #[serde(default = "default_exponent")]
    pub contention_exponent: f64,
    #[serde(default)]
    pub fixed_overhead_ms: f64,
    /// Values not backed by a published figure.
    #[serde(default)]
    pub approximate: bool,
    #[serde(default)]
    pub source: String,
}

fn default_cores() -> u32 {
    DEFAULT_CORES
}

fn default_exponent() -> f64 {
    1.0
}

impl RuntimeProfile {
    pub fn new(name: impl Into<String>, median_ms: f64, p99_ms: f64) -> Self {
        RuntimeProfile {
            name: name.into(),
            median_ms,
            p99_ms,
            cores: DEFAULT_CORES,
            contention_exponent: 1.0,
            fixed_overhead_ms: 0.0,
            approximate: false,
            source: String::new(),
        }
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        let fail = |reason| {
            Err(ProfileError::Invalid {
                name: self.name.clone(),
                reason,
            })
        };
        if self.name.is_empty() {
            return fail("empty name");
        }
        if !(self.median_ms.is_finite() && self.median_ms > 0.0) {
            return fail("median_ms must be positive");
        }
        if !(self.p99_ms.is_finite() && self.p99_ms >= self.median_ms) {
            return fail("p99_ms must be at least median_ms");
        }
        if self.cores == 0 {
            return fail("cores must be positive");
        }
        if !(self.contention_exponent.is_finite() && self.contention_exponent >= 0.0) {
            return fail("contention_exponent must be non-negative");
        }
        if !(self.fixed_overhead_ms.is_finite() && self.fixed_overhead_ms >= 0.0) {
            return fail("fixed_overhead_ms must be non-negative");
        }
        Ok(())
    }

    /// Location and scale of the underlying normal.
    pub fn lognormal_params(&self) -> (f64, f64) {
        let mu = self.median_ms.ln();
        let sigma = (self.p99_ms.ln() - mu) / Z_99;
        (mu, sigma.max(0.0))
    }

    fn distribution(&self) -> LogNormal<f64> {
        let (mu, sigma) = self.lognormal_params();
        LogNormal::new(mu, sigma).expect("validated profile has finite parameters")
    }

    pub fn contention_factor(&self, in_flight: u32) -> f64 {
        let load = f64::from(in_flight) / f64::from(self.cores);
        load.max(1.0).powf(self.contention_exponent)
    }

    /// Draws one startup latency in milliseconds for `in_flight` concurrent starts.
    pub fn sample_ms<R: Rng + ?Sized>(&self, rng: &mut R, in_flight: u32) -> f64 {
        let base = self.distribution().sample(rng);
        (base + self.fixed_overhead_ms) * self.contention_factor(in_flight)
    }

    /// Same as [`sample_ms`](Self::sample_ms), in whole nanoseconds, never zero.
    pub fn sample_ns<R: Rng + ?Sized>(&self, rng: &mut R, in_flight: u32) -> u64 {
        let ns = (self.sample_ms(rng, in_flight) * 1e6).round();
        if ns >= u64::MAX as f64 {
            u64::MAX
        } else {
            (ns as u64).max(1)
        }
    }
}

/// Named collection of profiles.
#[derive(Debug, Clone, Default)]
pub struct ProfileSet {
    profiles: BTreeMap<String, RuntimeProfile>,
}

impl ProfileSet {
    /// The table shipped with the crate.
    pub fn defaults() -> Self {
        Self::from_json(DEFAULT_PROFILES).expect("bundled profile table is valid")
    }

    pub fn from_profiles(
        profiles: impl IntoIterator<Item = RuntimeProfile>,
    ) -> Result<Self, ProfileError> {
        let mut set = ProfileSet::default();
        for profile in profiles {
            profile.validate()?;
            if set.profiles.contains_key(&profile.name) {
                return Err(ProfileError::Duplicate(profile.name));
            }
            set.profiles.insert(profile.name.clone(), profile);
        }
        Ok(set)
    }

    pub fn from_json(text: &str) -> Result<Self, ProfileError> {
        let profiles: Vec<RuntimeProfile> = serde_json::from_str(text)?;
        Self::from_profiles(profiles)
    }

    pub fn load(path: &Path) -> Result<Self, ProfileError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, name: &str) -> Result<&RuntimeProfile, ProfileError> {
        self.profiles
            .get(name)
            .ok_or_else(|| ProfileError::Unknown(name.to_owned()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.profiles.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.profiles.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = &RuntimeProfile> {
        self.profiles.values()
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn to_json(&self) -> String {
        let list: Vec<_> = self.profiles.values().collect();
        serde_json::to_string_pretty(&list).expect("profiles serialize")
    }
}
