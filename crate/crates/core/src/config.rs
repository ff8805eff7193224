//! Run configuration: `key = value` text files, overrides and a stable digest.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::indicators::{MlceConfig, TRAPPED_CAP};
use crate::integrator::IntegratorConfig;
use crate::orbits::OrbitConfig;
use crate::scan::GridSpec;

/// Environment variable that overrides the worker count.
pub const WORKERS_ENV: &str = "STORMER_WORKERS";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub integrator: IntegratorConfig,
    /// Integration time for mLCE estimates.
    pub mlce_time: f64,
    pub renorm_interval: f64,
    /// Cap for escape and crossing times.
    pub trapped_cap: f64,
    /// Integration time for latitude extrema.
    pub lambda_time: f64,
    /// How long to wait for equatorial crossings in orbit searches.
    pub crossing_t_cap: f64,
    /// Integration tolerance for residual scans, refinement and verification.
    pub orbit_tol: f64,
    pub residual_tol: f64,
    pub verify_tol: f64,
    /// Worker threads; `None` uses all available cores.
    pub workers: Option<usize>,
    pub seed: u64,
    pub grid: Option<GridSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            integrator: IntegratorConfig::default(),
            mlce_time: 1e4,
            renorm_interval: 1.0,
            trapped_cap: TRAPPED_CAP,
            lambda_time: 1e4,
            crossing_t_cap: 1e3,
            orbit_tol: 1e-14,
            residual_tol: 1e-8,
            verify_tol: 1e-5,
            workers: None,
            seed: 0,
            grid: None,
        }
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("{key}: expected a number, got {value:?}")))
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .parse::<usize>()
        .map_err(|_| Error::Config(format!("{key}: expected a non-negative integer, got {value:?}")))
}

impl RunConfig {
    /// Keys accepted by [`RunConfig::set`].
    pub const KEYS: &'static [&'static str] = &[
        "abs_tol",
        "rel_tol",
        "tol",
        "h_init",
        "h_max",
        "t_cap",
        "r_min",
        "max_steps",
        "mlce_time",
        "renorm_interval",
        "trapped_cap",
        "lambda_time",
        "crossing_t_cap",
        "orbit_tol",
        "residual_tol",
        "verify_tol",
        "workers",
        "seed",
        "grid",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "abs_tol" => self.integrator.abs_tol = parse_f64(key, value)?,
            "rel_tol" => self.integrator.rel_tol = parse_f64(key, value)?,
            "tol" => {
                let v = parse_f64(key, value)?;
                self.integrator.abs_tol = v;
                self.integrator.rel_tol = v;
            }
            "h_init" => {
                self.integrator.h_init = match value {
                    "auto" | "" => None,
                    v => Some(parse_f64(key, v)?),
                }
            }
            "h_max" => self.integrator.h_max = parse_f64(key, value)?,
            "t_cap" => self.integrator.t_cap = parse_f64(key, value)?,
            "r_min" => self.integrator.r_min = parse_f64(key, value)?,
            "max_steps" => self.integrator.max_steps = parse_usize(key, value)? as u64,
            "mlce_time" => self.mlce_time = parse_f64(key, value)?,
            "renorm_interval" => self.renorm_interval = parse_f64(key, value)?,
            "trapped_cap" => self.trapped_cap = parse_f64(key, value)?,
            "lambda_time" => self.lambda_time = parse_f64(key, value)?,
            "crossing_t_cap" => self.crossing_t_cap = parse_f64(key, value)?,
            "orbit_tol" => self.orbit_tol = parse_f64(key, value)?,
            "residual_tol" => self.residual_tol = parse_f64(key, value)?,
            "verify_tol" => self.verify_tol = parse_f64(key, value)?,
            "workers" => {
                self.workers = match value {
                    "auto" | "" => None,
                    v => Some(parse_usize(key, v)?),
                }
            }
            "seed" => self.seed = parse_usize(key, value)? as u64,
            "grid" => self.grid = Some(value.parse()?),
            _ => return Err(Error::Config(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    /// Apply `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            self.set(key.trim(), value)
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.integrator.validate().map_err(|e| Error::Config(e.to_string()))?;
        let positive = [
            ("mlce_time", self.mlce_time),
            ("renorm_interval", self.renorm_interval),
            ("trapped_cap", self.trapped_cap),
            ("lambda_time", self.lambda_time),
            ("crossing_t_cap", self.crossing_t_cap),
            ("orbit_tol", self.orbit_tol),
            ("residual_tol", self.residual_tol),
            ("verify_tol", self.verify_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.renorm_interval >= self.mlce_time {
            return Err(Error::Config("renorm_interval must be shorter than mlce_time".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if let Some(g) = &self.grid {
            g.validate()?;
        }
        Ok(())
    }

    /// Worker count after applying the environment override.
    pub fn resolved_workers(&self) -> Result<usize> {
        match std::env::var(WORKERS_ENV) {
            Ok(v) if !v.trim().is_empty() => match v.trim().parse::<usize>() {
                Ok(n) if n > 0 => Ok(n),
                _ => Err(Error::Config(format!("{WORKERS_ENV} must be a positive integer, got {v:?}"))),
            },
            _ => Ok(self
                .workers
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))),
        }
    }

    /// Canonical listing of every parameter that can change a numerical
    /// result. Worker count, seed and grid are left out.
    pub fn canonical(&self) -> String {
        let i = &self.integrator;
        let mut s = String::new();
        let mut put = |k: &str, v: f64| {
            let _ = writeln!(s, "{k}={v:.16e}");
        };
        put("abs_tol", i.abs_tol);
        put("rel_tol", i.rel_tol);
        put("h_init", i.h_init.unwrap_or(0.0));
        put("h_max", i.h_max);
        put("t_cap", i.t_cap);
        put("r_min", i.r_min);
        put("max_steps", i.max_steps as f64);
        put("mlce_time", self.mlce_time);
        put("renorm_interval", self.renorm_interval);
        put("trapped_cap", self.trapped_cap);
        put("lambda_time", self.lambda_time);
        put("crossing_t_cap", self.crossing_t_cap);
        put("orbit_tol", self.orbit_tol);
        put("residual_tol", self.residual_tol);
        put("verify_tol", self.verify_tol);
        s
    }

    /// Hex SHA-256 of [`RunConfig::canonical`] followed by `extra`.
    pub fn digest_with(&self, extra: &str) -> String {
        let mut h = Sha256::new();
        h.update(self.canonical().as_bytes());
        h.update(extra.as_bytes());
        hex::encode(h.finalize())
    }

    pub fn digest(&self) -> String {
        self.digest_with("")
    }

    pub fn mlce_config(&self) -> MlceConfig {
        MlceConfig {
            total_time: self.mlce_time,
            renorm_interval: self.renorm_interval,
            keep_history: false,
            integrator: self.integrator.clone(),
        }
    }

    pub fn orbit_config(&self) -> OrbitConfig {
        OrbitConfig {
            integrator: self.integrator.clone().with_t_cap(self.crossing_t_cap).with_tolerance(self.orbit_tol),
            residual_tol: self.residual_tol,
            verify_tol: self.verify_tol,
        }
    }
}
