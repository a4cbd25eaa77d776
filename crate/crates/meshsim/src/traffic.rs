//! Synthetic demand generation.
//!
//! Produces per-cell, per-tick user counts with diurnal variation, hotspot
//! concentration (a small area fraction holding most users), optional event
//! surges, and truncated Gaussian noise. Integer apportionment uses the
//! largest-remainder method so cell counts always sum to the tick total.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hotspot {
    /// Fraction of cells that are hotspots, 0 < a < 1.
    pub area_fraction: f64,
    /// Fraction of users concentrated in the hotspot cells, a < p <= 1.
    pub user_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Surge {
    pub start_tick: usize,
    pub end_tick: usize,
    pub multiplier: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficScenario {
    pub n_cells: usize,
    pub duration_ticks: usize,
    pub tick_seconds: f64,
    /// Ticks per (possibly compressed) diurnal cycle.
    pub day_ticks: usize,
    pub base_users: f64,
    pub diurnal_amplitude: f64,
    pub hotspot: Hotspot,
    pub surge: Option<Surge>,
    pub noise_sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Error, PartialEq)]
#[error("invalid scenario field {field}: {reason}")]
pub struct InvalidScenario {
    pub field: &'static str,
    pub reason: String,
}

fn bad(field: &'static str, reason: impl Into<String>) -> InvalidScenario {
    InvalidScenario {
        field,
        reason: reason.into(),
    }
}

impl TrafficScenario {
    pub fn validate(&self) -> Result<(), InvalidScenario> {
        if self.n_cells == 0 {
            return Err(bad("n_cells", "must be positive"));
        }
        if self.duration_ticks == 0 {
            return Err(bad("duration_ticks", "must be positive"));
        }
        if !(self.tick_seconds > 0.0) {
            return Err(bad("tick_seconds", "must be positive"));
        }
        if self.day_ticks == 0 {
            return Err(bad("day_ticks", "must be positive"));
        }
        if !(self.base_users >= 0.0) {
            return Err(bad("base_users", "must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.diurnal_amplitude) {
            return Err(bad("diurnal_amplitude", "must be in [0, 1)"));
        }
        let h = &self.hotspot;
        if !(h.area_fraction > 0.0 && h.area_fraction < 1.0) {
            return Err(bad("hotspot.area_fraction", "must be in (0, 1)"));
        }
        if !(h.user_fraction >= h.area_fraction && h.user_fraction <= 1.0) {
            return Err(bad(
                "hotspot.user_fraction",
                "must satisfy a <= p <= 1 (hotspots at least as dense as uniform)",
            ));
        }
        if let Some(s) = &self.surge {
            if s.multiplier < 1.0 {
                return Err(bad("surge.multiplier", "must be >= 1"));
            }
            if s.end_tick <= s.start_tick {
                return Err(bad("surge.end_tick", "must exceed start_tick"));
            }
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(bad("noise_sigma", "must be non-negative"));
        }
        Ok(())
    }

    pub fn n_hotspot_cells(&self) -> usize {
        ((self.hotspot.area_fraction * self.n_cells as f64).ceil() as usize)
            .clamp(1, self.n_cells - 1)
    }
}

/// Generated demand: per-cell user counts for every tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficSeries {
    pub n_cells: usize,
    pub tick_seconds: f64,
    /// counts[t][c] = users in cell c at tick t
    pub counts: Vec<Vec<u64>>,
}

impl TrafficSeries {
    pub fn total(&self, tick: usize) -> u64 {
        self.counts[tick].iter().sum()
    }

    pub fn duration_ticks(&self) -> usize {
        self.counts.len()
    }

    /// Per-cell series of one cell as f64, for forecaster training.
    pub fn cell_series(&self, cell: usize) -> Vec<f64> {
        self.counts.iter().map(|row| row[cell] as f64).collect()
    }

    pub fn total_series(&self) -> Vec<f64> {
        (0..self.counts.len()).map(|t| self.total(t) as f64).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("tick,cell_id,users\n");
        for (t, row) in self.counts.iter().enumerate() {
            for (c, users) in row.iter().enumerate() {
                s.push_str(&format!("{t},{c},{users}\n"));
            }
        }
        s
    }

    pub fn from_csv(text: &str, tick_seconds: f64) -> Result<TrafficSeries, InvalidScenario> {
        let mut rows: Vec<(usize, usize, u64)> = Vec::new();
        let mut n_cells = 0;
        let mut n_ticks = 0;
        for (lineno, line) in text.lines().enumerate() {
            if lineno == 0 || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(bad("csv", format!("line {}: expected 3 columns", lineno + 1)));
            }
            let parse = |s: &str| -> Result<u64, InvalidScenario> {
                s.trim()
                    .parse()
                    .map_err(|_| bad("csv", format!("line {}: bad number {s}", lineno + 1)))
            };
            let t = parse(fields[0])? as usize;
            let c = parse(fields[1])? as usize;
            let users = parse(fields[2])?;
            n_cells = n_cells.max(c + 1);
            n_ticks = n_ticks.max(t + 1);
            rows.push((t, c, users));
        }
        if rows.is_empty() {
            return Err(bad("csv", "no data rows"));
        }
        let mut counts = vec![vec![0u64; n_cells]; n_ticks];
        for (t, c, users) in rows {
            counts[t][c] = users;
        }
        Ok(TrafficSeries {
            n_cells,
            tick_seconds,
            counts,
        })
    }
}

/// Largest-remainder apportionment of `total` users across weights.
/// Weights must be non-negative and sum to ~1; the result sums to `total`.
fn apportion(total: u64, weights: &[f64]) -> Vec<u64> {
    let mut floors = Vec::with_capacity(weights.len());
    let mut remainders: Vec<(usize, f64)> = Vec::with_capacity(weights.len());
    let mut assigned = 0u64;
    for (i, &w) in weights.iter().enumerate() {
        let quota = w * total as f64;
        let fl = quota.floor() as u64;
        floors.push(fl);
        assigned += fl;
        remainders.push((i, quota - fl as f64));
    }
    let leftover = total - assigned.min(total);
    // largest remainder first, index tie-break for determinism
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for &(i, _) in remainders.iter().take(leftover as usize) {
        floors[i] += 1;
    }
    floors
}

/// Generate the full demand series, deterministically per seed.
pub fn generate_demand(scenario: &TrafficScenario) -> Result<TrafficSeries, InvalidScenario> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let noise = Normal::new(0.0, scenario.noise_sigma.max(f64::MIN_POSITIVE)).unwrap();

    let n_hot = scenario.n_hotspot_cells();
    let n_cold = scenario.n_cells - n_hot;
    let p = scenario.hotspot.user_fraction;
    // first n_hot cells are the hotspots
    let mut weights = vec![0.0; scenario.n_cells];
    for w in weights.iter_mut().take(n_hot) {
        *w = p / n_hot as f64;
    }
    for w in weights.iter_mut().skip(n_hot).take(n_cold) {
        *w = (1.0 - p) / n_cold as f64;
    }

    let mut counts = Vec::with_capacity(scenario.duration_ticks);
    for t in 0..scenario.duration_ticks {
        let diurnal = 1.0
            + scenario.diurnal_amplitude
                * (2.0 * std::f64::consts::PI * t as f64 / scenario.day_ticks as f64).sin();
        let surge = match &scenario.surge {
            Some(s) if t >= s.start_tick && t < s.end_tick => s.multiplier,
            _ => 1.0,
        };
        let eps = if scenario.noise_sigma > 0.0 {
            noise.sample(&mut rng).max(-1.0)
        } else {
            0.0
        };
        let total = (scenario.base_users * diurnal * surge * (1.0 + eps)).round().max(0.0) as u64;
        counts.push(apportion(total, &weights));
    }

    Ok(TrafficSeries {
        n_cells: scenario.n_cells,
        tick_seconds: scenario.tick_seconds,
        counts,
    })
}

/// Time-averaged share of users found in the busiest ceil(a * n_cells) cells.
pub fn concentration_stat(series: &TrafficSeries, area_fraction: f64) -> Result<f64, InvalidScenario> {
    if !(area_fraction > 0.0 && area_fraction < 1.0) {
        return Err(bad("area_fraction", "must be in (0, 1)"));
    }
    let n_top = ((area_fraction * series.n_cells as f64).ceil() as usize).max(1);
    let mut shares = Vec::with_capacity(series.counts.len());
    for row in &series.counts {
        let total: u64 = row.iter().sum();
        if total == 0 {
            continue;
        }
        let mut sorted = row.clone();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        let top: u64 = sorted.iter().take(n_top).sum();
        shares.push(top as f64 / total as f64);
    }
    if shares.is_empty() {
        return Err(bad("series", "all ticks empty"));
    }
    Ok(shares.iter().sum::<f64>() / shares.len() as f64)
}
