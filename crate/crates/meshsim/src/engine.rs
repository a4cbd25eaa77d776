//! The discrete-time simulation loop and the matched-coverage comparison.
//!
//! Per tick: forecast the load (optional), size node transmit powers to the
//! predicted demand (adaptive mode, slew-limited to 3 dB per tick to mirror
//! the control action space), assign each demanded cell to its best server,
//! serve users up to per-node capacity, and meter power and energy.
//!
//! The serving model: a cell's users are served when its best server delivers
//! at least the sensitivity and still has residual capacity. Per-node
//! capacity is `spectral_capacity / per_user_rate` scaled by the spatial
//! reuse share `1/n_zones`: nodes inside one zone are mutually
//! non-interfering and transmit on the co-channel simultaneously, while the
//! zones themselves are scheduled orthogonally. All serving constants are
//! configuration values echoed into every report.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::forecast::{self, ForecastConfig};
use crate::mesh::{self, LinkModel, Placement, Topology};
use crate::powerctl::{PcAction, PcEnv, PowerBounds, QFunction, RewardConfig, POWER_DELTAS_DB};
use crate::propagation::{self, Environment, PathLossParams};
use crate::traffic::TrafficSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchKind {
    Macro,
    Mesh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerMode {
    Fixed,
    AdaptiveHeuristic,
    AdaptivePolicy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchitectureConfig {
    pub kind: ArchKind,
    pub n_sites: usize,
    pub side_m: f64,
    pub f_mhz: f64,
    pub g_dbi: f64,
    /// Base-station and receiver heights, used by the macro COST-231 model.
    pub h_bs_m: f64,
    pub h_ms_m: f64,
    pub environment: Environment,
    pub bounds: PowerBounds,
    pub power_mode: PowerMode,
    pub forecaster: Option<ForecastConfig>,
    /// Fraction of demanded cells that must be covered; must match across
    /// compared architectures.
    pub coverage_target: f64,
    pub sensitivity_dbm: f64,
    /// Power margin above sensitivity when sizing adaptive powers.
    pub margin_db: f64,
    pub spectral_capacity_mbps: f64,
    pub per_user_rate_mbps: f64,
    pub conflict_threshold_dbm: f64,
    /// Fixed per-site draw for cooling and electronics, watts.
    pub overhead_w_per_site: f64,
    /// Log-normal shadowing sigma in dB; 0 disables it.
    pub shadowing_sigma_db: f64,
    pub placement: Placement,
    pub min_sep_m: f64,
}

impl ArchitectureConfig {
    pub fn desk_macro(side_m: f64) -> ArchitectureConfig {
        ArchitectureConfig {
            kind: ArchKind::Macro,
            n_sites: 5,
            side_m,
            f_mhz: 1800.0,
            g_dbi: 15.0,
            h_bs_m: 40.0,
            h_ms_m: 1.5,
            environment: Environment::MediumCity,
            bounds: crate::powerctl::MACRO_POWER_BOUNDS,
            power_mode: PowerMode::Fixed,
            forecaster: None,
            coverage_target: 0.95,
            sensitivity_dbm: -88.0,
            margin_db: 3.0,
            spectral_capacity_mbps: 1000.0,
            per_user_rate_mbps: 1.0,
            conflict_threshold_dbm: -60.0,
            overhead_w_per_site: 100.0,
            shadowing_sigma_db: 0.0,
            placement: Placement::Grid,
            min_sep_m: 1.0,
        }
    }

    pub fn desk_mesh(side_m: f64) -> ArchitectureConfig {
        ArchitectureConfig {
            kind: ArchKind::Mesh,
            n_sites: 50,
            side_m,
            f_mhz: 2400.0,
            g_dbi: 2.0,
            h_bs_m: 10.0,
            h_ms_m: 1.5,
            environment: Environment::MediumCity,
            bounds: crate::powerctl::MESH_POWER_BOUNDS,
            power_mode: PowerMode::AdaptiveHeuristic,
            forecaster: Some(ForecastConfig::default()),
            coverage_target: 0.95,
            sensitivity_dbm: -88.0,
            margin_db: 3.0,
            spectral_capacity_mbps: 200.0,
            per_user_rate_mbps: 1.0,
            conflict_threshold_dbm: -60.0,
            overhead_w_per_site: 1.0,
            shadowing_sigma_db: 0.0,
            placement: Placement::Grid,
            min_sep_m: 1.0,
        }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),
    #[error("adaptive policy mode requested but no trained policy supplied")]
    UntrainedPolicy,
    #[error("{arch:?} missed the coverage target: achieved {achieved:.4} < {target:.4}")]
    CoverageUnmet {
        arch: ArchKind,
        achieved: f64,
        target: f64,
    },
    #[error(transparent)]
    Mesh(#[from] mesh::MeshError),
    #[error(transparent)]
    Forecast(#[from] forecast::ForecastError),
    #[error(transparent)]
    PowerCtl(#[from] crate::powerctl::PowerCtlError),
}

/// One tick of the log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickLog {
    pub tick: usize,
    pub total_power_w: f64,
    pub demand: u64,
    pub users_served: u64,
    pub congestion_events: u64,
    /// Fraction of demanded cells whose best server meets sensitivity.
    pub coverage: f64,
    /// Received power summed over served cells, watts.
    pub useful_power_w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub kind: ArchKind,
    pub seed: u64,
    pub ticks: Vec<TickLog>,
    pub tick_seconds: f64,
    pub n_zones: usize,
    pub mean_power_w: f64,
    pub total_energy_j: f64,
    pub useful_energy_j: f64,
    pub users_served_total: u64,
    pub demand_total: u64,
    pub served_ratio: f64,
    pub users_per_watt: f64,
    pub mean_coverage: f64,
    pub congestion_total: u64,
}

impl SimReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "tick,total_power_w,demand,users_served,congestion_events,coverage,useful_power_w\n",
        );
        for t in &self.ticks {
            s.push_str(&format!(
                "{},{:.6},{},{},{},{:.6},{:.6e}\n",
                t.tick,
                t.total_power_w,
                t.demand,
                t.users_served,
                t.congestion_events,
                t.coverage,
                t.useful_power_w
            ));
        }
        s
    }

    pub fn summary_text(&self) -> String {
        format!(
            "arch: {:?}\nseed: {}\nzones: {}\nmean_power_w: {:.6}\ntotal_energy_j: {:.6}\n\
             useful_energy_j: {:.6e}\nusers_served_total: {}\ndemand_total: {}\n\
             served_ratio: {:.6}\nusers_per_watt: {:.6}\nmean_coverage: {:.6}\n\
             congestion_total: {}\n",
            self.kind,
            self.seed,
            self.n_zones,
            self.mean_power_w,
            self.total_energy_j,
            self.useful_energy_j,
            self.users_served_total,
            self.demand_total,
            self.served_ratio,
            self.users_per_watt,
            self.mean_coverage,
            self.congestion_total
        )
    }
}

/// Cell centers for the traffic grid laid over the region.
pub fn cell_centers(n_cells: usize, side_m: f64) -> Vec<(f64, f64)> {
    let mut rows = (n_cells as f64).sqrt().floor() as usize;
    while rows > 1 && n_cells % rows != 0 {
        rows -= 1;
    }
    let cols = n_cells / rows;
    let dx = side_m / cols as f64;
    let dy = side_m / rows as f64;
    let mut out = Vec::with_capacity(n_cells);
    for r in 0..rows {
        for c in 0..cols {
            out.push((dx * (c as f64 + 0.5), dy * (r as f64 + 0.5)));
        }
    }
    out
}

/// Serve demanded cells from their best server, capacity-limited.
///
/// `p_rx_dbm[node][cell]` is the received power at each cell from each node
/// at current transmit powers; `capacity_users[node]` the per-tick serving
/// capacity. Returns per-cell served counts and total congestion (unserved
/// users).
pub fn capacity_model(
    p_rx_dbm: &[Vec<f64>],
    demand: &[u64],
    sensitivity_dbm: f64,
    capacity_users: &[f64],
) -> (Vec<u64>, u64) {
    let n_nodes = p_rx_dbm.len();
    let mut residual: Vec<f64> = capacity_users.to_vec();
    let mut served = vec![0u64; demand.len()];
    let mut congestion = 0u64;
    for (cell, &want) in demand.iter().enumerate() {
        if want == 0 {
            continue;
        }
        let (best, best_rx) = (0..n_nodes)
            .map(|node| (node, p_rx_dbm[node][cell]))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(b.0.cmp(&a.0)))
            .unwrap();
        if best_rx < sensitivity_dbm {
            congestion += want;
            continue;
        }
        let can = residual[best].floor().max(0.0) as u64;
        let take = want.min(can);
        residual[best] -= take as f64;
        served[cell] = take;
        congestion += want - take;
    }
    (served, congestion)
}

struct LinkTable {
    /// loss_db[node][cell]
    loss_db: Vec<Vec<f64>>,
}

fn build_link_table(
    arch: &ArchitectureConfig,
    topology: &Topology,
    centers: &[(f64, f64)],
    seed: u64,
) -> Result<LinkTable, EngineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_5A0D);
    let shadow = Normal::new(0.0, arch.shadowing_sigma_db.max(f64::MIN_POSITIVE)).unwrap();
    let mut loss_db = Vec::with_capacity(topology.nodes.len());
    for node in &topology.nodes {
        let mut row = Vec::with_capacity(centers.len());
        for &(cx, cy) in centers {
            let d_m = ((node.x_m - cx).powi(2) + (node.y_m - cy).powi(2)).sqrt();
            let mut loss = match arch.kind {
                ArchKind::Mesh => propagation::fspl(d_m.max(1.0), arch.f_mhz)
                    .map_err(|e| EngineError::ConfigMismatch(e.to_string()))?,
                ArchKind::Macro => {
                    // site-to-cell distances below the model floor are
                    // evaluated at the 1 km validity boundary
                    let d_km = (d_m / 1000.0).clamp(1.0, 20.0);
                    propagation::cost231_path_loss(&PathLossParams {
                        f_mhz: arch.f_mhz,
                        h_bs_m: arch.h_bs_m,
                        h_ms_m: arch.h_ms_m,
                        d_km,
                        environment: arch.environment,
                    })
                    .map_err(|e| EngineError::ConfigMismatch(e.to_string()))?
                }
            };
            if arch.shadowing_sigma_db > 0.0 {
                loss += shadow.sample(&mut rng);
            }
            row.push(loss);
        }
        loss_db.push(row);
    }
    Ok(LinkTable { loss_db })
}

fn p_rx(arch: &ArchitectureConfig, links: &LinkTable, powers: &[f64]) -> Vec<Vec<f64>> {
    links
        .loss_db
        .iter()
        .enumerate()
        .map(|(node, row)| {
            row.iter()
                .map(|loss| powers[node] + arch.g_dbi - loss)
                .collect()
        })
        .collect()
}

/// Snap up to the lowest lattice power (p_min + 3k) not below `wanted`.
fn snap_power(bounds: &PowerBounds, wanted: f64) -> f64 {
    if wanted <= bounds.p_min_dbm {
        return bounds.p_min_dbm;
    }
    let steps = ((wanted - bounds.p_min_dbm) / 3.0).ceil();
    bounds.clamp(bounds.p_min_dbm + 3.0 * steps)
}

/// Run one architecture over the full traffic series, deterministically.
pub fn run_simulation(
    arch: &ArchitectureConfig,
    traffic: &TrafficSeries,
    policy: Option<&QFunction>,
    seed: u64,
) -> Result<SimReport, EngineError> {
    if arch.power_mode == PowerMode::AdaptivePolicy && policy.is_none() {
        return Err(EngineError::UntrainedPolicy);
    }
    if traffic.n_cells < 1 {
        return Err(EngineError::ConfigMismatch("traffic has no cells".into()));
    }

    let topology = mesh::generate_topology(
        arch.n_sites,
        arch.side_m,
        arch.f_mhz,
        arch.placement,
        arch.min_sep_m,
        arch.bounds.p_max_dbm,
        arch.g_dbi,
        seed,
    )?;
    let centers = cell_centers(traffic.n_cells, arch.side_m);
    let links = build_link_table(arch, &topology, &centers, seed)?;

    // spatial reuse share from the node-to-node conflict graph at reference
    // (maximum) transmit power
    let node_model = match arch.kind {
        ArchKind::Mesh => LinkModel::Fspl,
        ArchKind::Macro => LinkModel::Cost231 {
            h_bs_m: arch.h_bs_m,
            h_ms_m: arch.h_ms_m,
            environment: arch.environment,
        },
    };
    let n_zones = match mesh::build_interference_matrix(&topology, node_model) {
        Ok(matrix) => mesh::partition_zones(&matrix, arch.conflict_threshold_dbm).n_zones,
        // macro sites closer than the COST-231 floor: treat as one conflict
        // domain per site (no reuse)
        Err(mesh::MeshError::Link { .. }) => arch.n_sites,
        Err(e) => return Err(e.into()),
    };
    let zone_share = 1.0 / n_zones as f64;
    let capacity_users: Vec<f64> = vec![
        zone_share * arch.spectral_capacity_mbps / arch.per_user_rate_mbps;
        arch.n_sites
    ];

    // static serving assignment at reference power, for power targeting
    let ref_powers = vec![arch.bounds.p_max_dbm; arch.n_sites];
    let ref_rx = p_rx(arch, &links, &ref_powers);
    let designated: Vec<usize> = (0..traffic.n_cells)
        .map(|cell| {
            (0..arch.n_sites)
                .max_by(|&a, &b| {
                    ref_rx[a][cell]
                        .partial_cmp(&ref_rx[b][cell])
                        .unwrap()
                        .then(b.cmp(&a))
                })
                .unwrap()
        })
        .collect();

    // forecaster trained on the total-load history of this very series
    let total_series = traffic.total_series();
    let forecaster = match &arch.forecaster {
        Some(cfg) => {
            let cfg = ForecastConfig { seed, ..*cfg };
            let (model, _) = forecast::train_forecaster(&total_series, &cfg)?;
            Some(model)
        }
        None => None,
    };

    let pc_env = if arch.power_mode == PowerMode::AdaptivePolicy {
        Some(PcEnv::new(
            topology.clone(),
            node_model,
            arch.bounds,
            3,
            RewardConfig {
                alpha: 1.0,
                beta: 1.0,
                i_threshold_dbm: arch.conflict_threshold_dbm,
            },
        )?)
    } else {
        None
    };

    let mut powers = match arch.power_mode {
        PowerMode::Fixed => vec![arch.bounds.p_max_dbm; arch.n_sites],
        _ => vec![arch.bounds.p_min_dbm; arch.n_sites],
    };

    let mut ticks = Vec::with_capacity(traffic.duration_ticks());
    let mut total_energy_j = 0.0;
    let mut useful_energy_j = 0.0;
    let mut users_served_total = 0u64;
    let mut demand_total = 0u64;
    let mut congestion_total = 0u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for t in 0..traffic.duration_ticks() {
        let demand = &traffic.counts[t];
        let tick_demand: u64 = demand.iter().sum();

        // predicted per-cell demand at the control horizon
        let predicted: Vec<f64> = match &forecaster {
            Some(model) if t + 1 >= model.window => {
                let window = &total_series[t + 1 - model.window..t + 1];
                let predicted_total = forecast::predict(model, window)?;
                let now_total = tick_demand as f64;
                demand
                    .iter()
                    .map(|&d| {
                        if now_total > 0.0 {
                            predicted_total * d as f64 / now_total
                        } else {
                            predicted_total / demand.len() as f64
                        }
                    })
                    .collect()
            }
            _ => demand.iter().map(|&d| d as f64).collect(),
        };

        // power control
        match arch.power_mode {
            PowerMode::Fixed => {}
            PowerMode::AdaptiveHeuristic => {
                for node in 0..arch.n_sites {
                    let mut needed = arch.bounds.p_min_dbm;
                    let mut active = false;
                    for cell in 0..traffic.n_cells {
                        if designated[cell] == node && predicted[cell] >= 0.5 {
                            active = true;
                            let want = arch.sensitivity_dbm + arch.margin_db
                                + links.loss_db[node][cell]
                                - arch.g_dbi;
                            needed = needed.max(want);
                        }
                    }
                    let target = if active {
                        snap_power(&arch.bounds, needed)
                    } else {
                        arch.bounds.p_min_dbm
                    };
                    // slew toward the target, one control step per tick
                    let delta = (target - powers[node]).clamp(-3.0, 3.0);
                    powers[node] = arch.bounds.clamp(powers[node] + delta);
                }
            }
            PowerMode::AdaptivePolicy => {
                let env = pc_env.as_ref().unwrap();
                let q = policy.unwrap();
                let state = env.state_for(&powers)?;
                let action: PcAction =
                    crate::powerctl::select_action(q, env, &state, 0.0, &mut rng);
                debug_assert!(POWER_DELTAS_DB.contains(&action.delta_db));
                let (next, _) = env.step(&state, &action)?;
                powers = next.powers_dbm;
            }
        }

        // serving
        let rx = p_rx(arch, &links, &powers);
        let (served, congestion) =
            capacity_model(&rx, demand, arch.sensitivity_dbm, &capacity_users);
        let users_served: u64 = served.iter().sum();

        // coverage over demanded cells
        let mut demanded = 0usize;
        let mut covered = 0usize;
        let mut useful_power_w = 0.0;
        for cell in 0..traffic.n_cells {
            if demand[cell] == 0 {
                continue;
            }
            demanded += 1;
            let best = (0..arch.n_sites)
                .map(|node| rx[node][cell])
                .fold(f64::NEG_INFINITY, f64::max);
            if best >= arch.sensitivity_dbm {
                covered += 1;
            }
            if served[cell] > 0 {
                useful_power_w += propagation::dbm_to_w(best);
            }
        }
        let coverage = if demanded == 0 {
            1.0
        } else {
            covered as f64 / demanded as f64
        };

        let total_power_w: f64 = powers
            .iter()
            .map(|&p| propagation::dbm_to_w(p) + arch.overhead_w_per_site)
            .sum();

        total_energy_j += total_power_w * traffic.tick_seconds;
        useful_energy_j += useful_power_w * traffic.tick_seconds;
        users_served_total += users_served;
        demand_total += tick_demand;
        congestion_total += congestion;
        ticks.push(TickLog {
            tick: t,
            total_power_w,
            demand: tick_demand,
            users_served,
            congestion_events: congestion,
            coverage,
            useful_power_w,
        });
    }

    let mean_power_w =
        ticks.iter().map(|t| t.total_power_w).sum::<f64>() / ticks.len() as f64;
    let mean_coverage = ticks.iter().map(|t| t.coverage).sum::<f64>() / ticks.len() as f64;
    let mean_served = users_served_total as f64 / ticks.len() as f64;
    Ok(SimReport {
        kind: arch.kind,
        seed,
        tick_seconds: traffic.tick_seconds,
        n_zones,
        mean_power_w,
        total_energy_j,
        useful_energy_j,
        users_served_total,
        demand_total,
        served_ratio: if demand_total > 0 {
            users_served_total as f64 / demand_total as f64
        } else {
            1.0
        },
        users_per_watt: mean_served / mean_power_w,
        mean_coverage,
        congestion_total,
        ticks,
    })
}

/// Mean and sample standard deviation of second-vs-first architecture ratios
/// over the seed sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioStat {
    pub metric: &'static str,
    pub first_mean: f64,
    pub second_mean: f64,
    pub ratio_mean: f64,
    pub ratio_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub seeds: Vec<u64>,
    pub stats: Vec<RatioStat>,
    pub first_reports: Vec<SimReport>,
    pub second_reports: Vec<SimReport>,
}

impl ComparisonReport {
    pub fn stat(&self, metric: &str) -> Option<&RatioStat> {
        self.stats.iter().find(|s| s.metric == metric)
    }

    /// CSV shaped metric, first, second, gain (second/first), std.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,first,second,gain,gain_std\n");
        for stat in &self.stats {
            s.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6}\n",
                stat.metric, stat.first_mean, stat.second_mean, stat.ratio_mean, stat.ratio_std
            ));
        }
        s
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Run both architectures per seed at matched coverage and report ratio
/// statistics. Refuses to compare when either side misses its coverage
/// target on any seed.
pub fn compare_architectures(
    first: &ArchitectureConfig,
    second: &ArchitectureConfig,
    traffic: &TrafficSeries,
    seeds: &[u64],
) -> Result<ComparisonReport, EngineError> {
    if (first.coverage_target - second.coverage_target).abs() > 1e-12 {
        return Err(EngineError::ConfigMismatch(format!(
            "coverage targets differ: {} vs {}",
            first.coverage_target, second.coverage_target
        )));
    }
    let mut first_reports = Vec::with_capacity(seeds.len());
    let mut second_reports = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let a = run_simulation(first, traffic, None, seed)?;
        if a.mean_coverage < first.coverage_target {
            return Err(EngineError::CoverageUnmet {
                arch: first.kind,
                achieved: a.mean_coverage,
                target: first.coverage_target,
            });
        }
        let b = run_simulation(second, traffic, None, seed)?;
        if b.mean_coverage < second.coverage_target {
            return Err(EngineError::CoverageUnmet {
                arch: second.kind,
                achieved: b.mean_coverage,
                target: second.coverage_target,
            });
        }
        first_reports.push(a);
        second_reports.push(b);
    }

    let metrics: [(&'static str, fn(&SimReport) -> f64); 5] = [
        ("mean_power_w", |r| r.mean_power_w),
        ("users_per_watt", |r| r.users_per_watt),
        ("served_ratio", |r| r.served_ratio),
        ("useful_energy_j", |r| r.useful_energy_j),
        ("mean_coverage", |r| r.mean_coverage),
    ];
    let mut stats = Vec::new();
    for (metric, get) in metrics {
        let firsts: Vec<f64> = first_reports.iter().map(|r| get(r)).collect();
        let seconds: Vec<f64> = second_reports.iter().map(|r| get(r)).collect();
        let ratios: Vec<f64> = firsts
            .iter()
            .zip(&seconds)
            .map(|(a, b)| b / a)
            .collect();
        let (first_mean, _) = mean_std(&firsts);
        let (second_mean, _) = mean_std(&seconds);
        let (ratio_mean, ratio_std) = mean_std(&ratios);
        stats.push(RatioStat {
            metric,
            first_mean,
            second_mean,
            ratio_mean,
            ratio_std,
        });
    }
    Ok(ComparisonReport {
        seeds: seeds.to_vec(),
        stats,
        first_reports,
        second_reports,
    })
}
