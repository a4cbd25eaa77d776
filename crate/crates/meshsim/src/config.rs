//! Scenario files and run manifests.
//!
//! Scenario files are flat `key = value` pairs grouped under `[section]`
//! headers, with `#` comments. Parsing is strict: unknown keys, duplicate
//! keys, and malformed values are errors, so a typo cannot silently fall
//! back to a default.
//!
//! Every command writes a manifest next to its outputs recording the tool
//! version, the SHA-256 of the configuration, the seeds, and the SHA-256 of
//! each output file. Two runs are byte-identical iff their manifests match.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::engine::{ArchKind, ArchitectureConfig, PowerMode};
use crate::forecast::ForecastConfig;
use crate::mesh::Placement;
use crate::powerctl::{Hyper, PowerBounds, RewardConfig};
use crate::propagation::Environment;
use crate::traffic::{Hotspot, Surge, TrafficScenario};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("[{section}] has duplicate key `{key}`")]
    DuplicateKey { section: String, key: String },
    #[error("[{section}] has unknown key `{key}`")]
    UnknownKey { section: String, key: String },
    #[error("[{section}] is missing required key `{key}`")]
    MissingKey { section: String, key: String },
    #[error("[{section}] {key} = `{value}`: expected {expected}")]
    BadValue {
        section: String,
        key: String,
        value: String,
        expected: String,
    },
    #[error("missing required section [{0}]")]
    MissingSection(String),
    #[error("[{section}]: {message}")]
    Invalid { section: String, message: String },
}

/// A parsed scenario file: section name to key/value map, insertion order
/// not significant.
#[derive(Debug, Clone, Default)]
pub struct Config {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

pub fn parse_config(text: &str) -> Result<Config, ConfigError> {
    let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or(ConfigError::Syntax {
                line: line_no,
                message: "unterminated section header".into(),
            })?;
            let name = name.trim();
            if name.is_empty() {
                return Err(ConfigError::Syntax {
                    line: line_no,
                    message: "empty section name".into(),
                });
            }
            sections.entry(name.to_string()).or_default();
            current = Some(name.to_string());
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: line_no,
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        let section = current.clone().ok_or(ConfigError::Syntax {
            line: line_no,
            message: "key outside any [section]".into(),
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        let map = sections.get_mut(&section).unwrap();
        if map.insert(key.clone(), value).is_some() {
            return Err(ConfigError::DuplicateKey { section, key });
        }
    }
    Ok(Config { sections })
}

impl Config {
    pub fn has_section(&self, name: &str) -> bool {
        self.sections.contains_key(name)
    }

    pub fn section_names(&self) -> Vec<&str> {
        self.sections.keys().map(|s| s.as_str()).collect()
    }

    /// Borrow a section for typed reads; call [`SectionReader::finish`] to
    /// reject unknown keys.
    pub fn section(&self, name: &str) -> Result<SectionReader, ConfigError> {
        let map = self
            .sections
            .get(name)
            .ok_or_else(|| ConfigError::MissingSection(name.to_string()))?;
        Ok(SectionReader {
            name: name.to_string(),
            remaining: map.clone(),
        })
    }
}

pub struct SectionReader {
    name: String,
    remaining: BTreeMap<String, String>,
}

impl SectionReader {
    fn take(&mut self, key: &str) -> Option<String> {
        self.remaining.remove(key)
    }

    fn bad(&self, key: &str, value: &str, expected: &str) -> ConfigError {
        ConfigError::BadValue {
            section: self.name.clone(),
            key: key.to_string(),
            value: value.to_string(),
            expected: expected.to_string(),
        }
    }

    fn missing(&self, key: &str) -> ConfigError {
        ConfigError::MissingKey {
            section: self.name.clone(),
            key: key.to_string(),
        }
    }

    pub fn str_req(&mut self, key: &str) -> Result<String, ConfigError> {
        self.take(key).ok_or_else(|| self.missing(key))
    }

    pub fn str_opt(&mut self, key: &str) -> Option<String> {
        self.take(key)
    }

    pub fn f64_req(&mut self, key: &str) -> Result<f64, ConfigError> {
        let v = self.str_req(key)?;
        v.parse().map_err(|_| self.bad(key, &v, "a number"))
    }

    pub fn f64_or(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.take(key) {
            Some(v) => v.parse().map_err(|_| self.bad(key, &v, "a number")),
            None => Ok(default),
        }
    }

    pub fn usize_req(&mut self, key: &str) -> Result<usize, ConfigError> {
        let v = self.str_req(key)?;
        v.parse().map_err(|_| self.bad(key, &v, "a non-negative integer"))
    }

    pub fn usize_or(&mut self, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.take(key) {
            Some(v) => v
                .parse()
                .map_err(|_| self.bad(key, &v, "a non-negative integer")),
            None => Ok(default),
        }
    }

    pub fn usize_opt(&mut self, key: &str) -> Result<Option<usize>, ConfigError> {
        match self.take(key) {
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| self.bad(key, &v, "a non-negative integer")),
            None => Ok(None),
        }
    }

    pub fn u64_or(&mut self, key: &str, default: u64) -> Result<u64, ConfigError> {
        match self.take(key) {
            Some(v) => v
                .parse()
                .map_err(|_| self.bad(key, &v, "a non-negative integer")),
            None => Ok(default),
        }
    }

    pub fn bool_or(&mut self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.take(key) {
            Some(v) => match v.as_str() {
                "true" | "on" | "yes" => Ok(true),
                "false" | "off" | "no" => Ok(false),
                _ => Err(self.bad(key, &v, "true/false")),
            },
            None => Ok(default),
        }
    }

    /// Error on any key not consumed by a typed read.
    pub fn finish(self) -> Result<(), ConfigError> {
        if let Some(key) = self.remaining.keys().next() {
            return Err(ConfigError::UnknownKey {
                section: self.name,
                key: key.clone(),
            });
        }
        Ok(())
    }
}

/// Build a [`TrafficScenario`] from a `[traffic]` section.
pub fn traffic_from_config(cfg: &Config) -> Result<TrafficScenario, ConfigError> {
    let mut s = cfg.section("traffic")?;
    let scenario = TrafficScenario {
        n_cells: s.usize_req("n_cells")?,
        duration_ticks: s.usize_req("duration_ticks")?,
        tick_seconds: s.f64_or("tick_seconds", 1.0)?,
        day_ticks: s.usize_or("day_ticks", 240)?,
        base_users: s.f64_req("base_users")?,
        diurnal_amplitude: s.f64_or("diurnal_amplitude", 0.0)?,
        hotspot: Hotspot {
            area_fraction: s.f64_or("hotspot_area_fraction", 0.2)?,
            user_fraction: s.f64_or("hotspot_user_fraction", 0.95)?,
        },
        surge: match (
            s.usize_opt("surge_start_tick")?,
            s.usize_opt("surge_end_tick")?,
        ) {
            (Some(start_tick), Some(end_tick)) => Some(Surge {
                start_tick,
                end_tick,
                multiplier: s.f64_or("surge_multiplier", 3.0)?,
            }),
            (None, None) => None,
            _ => {
                return Err(ConfigError::Invalid {
                    section: "traffic".into(),
                    message: "surge_start_tick and surge_end_tick must be given together".into(),
                })
            }
        },
        noise_sigma: s.f64_or("noise_sigma", 0.0)?,
        seed: s.u64_or("seed", 0)?,
    };
    s.finish()?;
    scenario.validate().map_err(|e| ConfigError::Invalid {
        section: "traffic".into(),
        message: e.to_string(),
    })?;
    Ok(scenario)
}

/// Build an [`ArchitectureConfig`] from the named section.
pub fn arch_from_config(cfg: &Config, section: &str) -> Result<ArchitectureConfig, ConfigError> {
    let mut s = cfg.section(section)?;
    let kind_s = s.str_req("kind")?;
    let kind = match kind_s.as_str() {
        "macro" => ArchKind::Macro,
        "mesh" => ArchKind::Mesh,
        _ => return Err(s.bad("kind", &kind_s, "macro or mesh")),
    };
    let env_s = s.str_opt("environment").unwrap_or_else(|| "medium_city".into());
    let environment = match env_s.as_str() {
        "medium_city" => Environment::MediumCity,
        "metropolitan" => Environment::Metropolitan,
        _ => return Err(s.bad("environment", &env_s, "medium_city or metropolitan")),
    };
    let placement_s = s.str_opt("placement").unwrap_or_else(|| "grid".into());
    let placement = match placement_s.as_str() {
        "grid" => Placement::Grid,
        "uniform" => Placement::UniformRandom,
        _ => return Err(s.bad("placement", &placement_s, "grid or uniform")),
    };
    let mode_s = s.str_opt("power_mode").unwrap_or_else(|| "fixed".into());
    let power_mode = match mode_s.as_str() {
        "fixed" => PowerMode::Fixed,
        "adaptive" => PowerMode::AdaptiveHeuristic,
        "policy" => PowerMode::AdaptivePolicy,
        _ => return Err(s.bad("power_mode", &mode_s, "fixed, adaptive, or policy")),
    };
    let default_bounds = match kind {
        ArchKind::Macro => crate::powerctl::MACRO_POWER_BOUNDS,
        ArchKind::Mesh => crate::powerctl::MESH_POWER_BOUNDS,
    };
    let forecaster = if s.bool_or("forecaster", false)? {
        Some(ForecastConfig {
            window: s.usize_or("forecast_window", 30)?,
            horizon: s.usize_or("forecast_horizon", 5)?,
            hidden_dim: s.usize_or("forecast_hidden_dim", 8)?,
            lr: s.f64_or("forecast_lr", 0.05)?,
            epochs: s.usize_or("forecast_epochs", 40)?,
            seed: 0, // replaced by the run seed
        })
    } else {
        None
    };
    let arch = ArchitectureConfig {
        kind,
        n_sites: s.usize_req("n_sites")?,
        side_m: s.f64_req("side_m")?,
        f_mhz: s.f64_req("f_mhz")?,
        g_dbi: s.f64_or("g_dbi", 0.0)?,
        h_bs_m: s.f64_or("h_bs_m", 40.0)?,
        h_ms_m: s.f64_or("h_ms_m", 1.5)?,
        environment,
        bounds: PowerBounds {
            p_min_dbm: s.f64_or("p_min_dbm", default_bounds.p_min_dbm)?,
            p_max_dbm: s.f64_or("p_max_dbm", default_bounds.p_max_dbm)?,
        },
        power_mode,
        forecaster,
        coverage_target: s.f64_or("coverage_target", 0.95)?,
        sensitivity_dbm: s.f64_or("sensitivity_dbm", -88.0)?,
        margin_db: s.f64_or("margin_db", 3.0)?,
        spectral_capacity_mbps: s.f64_req("spectral_capacity_mbps")?,
        per_user_rate_mbps: s.f64_or("per_user_rate_mbps", 1.0)?,
        conflict_threshold_dbm: s.f64_or("conflict_threshold_dbm", -60.0)?,
        overhead_w_per_site: s.f64_req("overhead_w_per_site")?,
        shadowing_sigma_db: s.f64_or("shadowing_sigma_db", 0.0)?,
        placement,
        min_sep_m: s.f64_or("min_sep_m", 1.0)?,
    };
    s.finish()?;
    if arch.bounds.p_min_dbm > arch.bounds.p_max_dbm {
        return Err(ConfigError::Invalid {
            section: section.to_string(),
            message: format!(
                "p_min_dbm {} exceeds p_max_dbm {}",
                arch.bounds.p_min_dbm, arch.bounds.p_max_dbm
            ),
        });
    }
    Ok(arch)
}

/// Build a [`ForecastConfig`] from a `[forecast]` section.
pub fn forecast_from_config(cfg: &Config) -> Result<ForecastConfig, ConfigError> {
    let mut s = cfg.section("forecast")?;
    let out = ForecastConfig {
        window: s.usize_or("window", 30)?,
        horizon: s.usize_or("horizon", 5)?,
        hidden_dim: s.usize_or("hidden_dim", 8)?,
        lr: s.f64_or("lr", 0.05)?,
        epochs: s.usize_or("epochs", 40)?,
        seed: s.u64_or("seed", 0)?,
    };
    s.finish()?;
    Ok(out)
}

/// Everything `train-policy` needs, read from a `[policy]` section.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTrainConfig {
    pub n_nodes: usize,
    pub side_m: f64,
    pub f_mhz: f64,
    pub g_dbi: f64,
    pub bounds: PowerBounds,
    pub k: usize,
    pub reward: RewardConfig,
    pub hyper: Hyper,
    pub seed: u64,
}

pub fn policy_from_config(cfg: &Config) -> Result<PolicyTrainConfig, ConfigError> {
    let mut s = cfg.section("policy")?;
    let defaults = Hyper::default();
    let out = PolicyTrainConfig {
        n_nodes: s.usize_req("n_nodes")?,
        side_m: s.f64_req("side_m")?,
        f_mhz: s.f64_or("f_mhz", 2400.0)?,
        g_dbi: s.f64_or("g_dbi", 2.0)?,
        bounds: PowerBounds {
            p_min_dbm: s.f64_or("p_min_dbm", -10.0)?,
            p_max_dbm: s.f64_or("p_max_dbm", 30.0)?,
        },
        k: s.usize_or("k", 3)?,
        reward: RewardConfig {
            alpha: s.f64_or("alpha", 1.0)?,
            beta: s.f64_or("beta", 1.0)?,
            i_threshold_dbm: s.f64_or("i_threshold_dbm", -60.0)?,
        },
        hyper: Hyper {
            episodes: s.usize_or("episodes", defaults.episodes)?,
            steps_per_episode: s.usize_or("steps_per_episode", defaults.steps_per_episode)?,
            gamma: s.f64_or("gamma", defaults.gamma)?,
            lr: s.f64_or("lr", defaults.lr)?,
            epsilon_start: s.f64_or("epsilon_start", defaults.epsilon_start)?,
            epsilon_end: s.f64_or("epsilon_end", defaults.epsilon_end)?,
            replay: s.bool_or("replay", defaults.replay)?,
        },
        seed: s.u64_or("seed", 0)?,
    };
    s.finish()?;
    Ok(out)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// What a command run recorded about itself.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub tool_version: String,
    pub command: String,
    pub config_sha256: String,
    pub seeds: Vec<u64>,
    /// (file name, sha256 of contents)
    pub outputs: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &str, config_bytes: &[u8], seeds: &[u64]) -> Manifest {
        Manifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_sha256: sha256_hex(config_bytes),
            seeds: seeds.to_vec(),
            outputs: Vec::new(),
        }
    }

    pub fn record(&mut self, name: &str, contents: &[u8]) {
        self.outputs.push((name.to_string(), sha256_hex(contents)));
    }

    pub fn render_text(&self) -> String {
        let seeds: Vec<String> = self.seeds.iter().map(|s| s.to_string()).collect();
        let mut s = format!(
            "meshsim-manifest v1\nversion={}\ncommand={}\nconfig_sha256={}\nseeds={}\n",
            self.tool_version,
            self.command,
            self.config_sha256,
            seeds.join(",")
        );
        for (name, hash) in &self.outputs {
            s.push_str(&format!("output {name} sha256={hash}\n"));
        }
        s
    }
}
