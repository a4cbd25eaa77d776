//! Mesh geometry and interference structure.
//!
//! Node placement over a square region, pairwise link evaluation, the N x N
//! received-power interference matrix (diagonal undefined), top-K interferer
//! extraction, and spatial-reuse zone partitioning via greedy conflict-graph
//! coloring.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::propagation::{
    self, Environment, LinkBudget, PathLossParams, PropagationError,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub id: usize,
    pub x_m: f64,
    pub y_m: f64,
    pub p_tx_dbm: f64,
    pub g_dbi: f64,
}

/// Immutable node layout over a square region of side `side_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub nodes: Vec<Node>,
    pub side_m: f64,
    pub f_mhz: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    UniformRandom,
    Grid,
}

/// Link model used when filling the interference matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinkModel {
    Fspl,
    Cost231 {
        h_bs_m: f64,
        h_ms_m: f64,
        environment: Environment,
    },
}

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("could not place {requested} nodes with min separation {min_sep_m} m (placed {achieved})")]
    PlacementInfeasible {
        requested: usize,
        achieved: usize,
        min_sep_m: f64,
    },
    #[error("need at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("invalid placement parameter: {0}")]
    InvalidParameter(String),
    #[error("nodes {0} and {1} are closer than 1 m")]
    CoLocated(usize, usize),
    #[error("link ({i}, {j}): {source}")]
    Link {
        i: usize,
        j: usize,
        source: PropagationError,
    },
    #[error("k = {k} outside [1, {max}]")]
    KOutOfRange { k: usize, max: usize },
}

const PLACEMENT_RETRY_BUDGET: usize = 10_000;

/// Euclidean distance between two nodes in meters.
pub fn distance(a: &Node, b: &Node) -> f64 {
    ((a.x_m - b.x_m).powi(2) + (a.y_m - b.y_m).powi(2)).sqrt()
}

/// Place `n` nodes over a square region, deterministically per seed.
///
/// Grid placement factors n as r x c with |r - c| minimal and spaces nodes
/// evenly with half-spacing margins. Uniform-random placement rejects draws
/// closer than `min_sep_m` to an accepted node, within a bounded retry
/// budget.
pub fn generate_topology(
    n: usize,
    side_m: f64,
    f_mhz: f64,
    placement: Placement,
    min_sep_m: f64,
    p_tx_dbm: f64,
    g_dbi: f64,
    seed: u64,
) -> Result<Topology, MeshError> {
    if n < 2 {
        return Err(MeshError::TooFewNodes(n));
    }
    if !(side_m > 0.0) {
        return Err(MeshError::InvalidParameter(format!(
            "side_m must be positive, got {side_m}"
        )));
    }
    if !(min_sep_m >= 1.0) {
        return Err(MeshError::InvalidParameter(format!(
            "min_sep_m must be >= 1, got {min_sep_m}"
        )));
    }

    let positions = match placement {
        Placement::Grid => grid_positions(n, side_m),
        Placement::UniformRandom => uniform_positions(n, side_m, min_sep_m, seed)?,
    };

    let nodes = positions
        .into_iter()
        .enumerate()
        .map(|(id, (x_m, y_m))| Node {
            id,
            x_m,
            y_m,
            p_tx_dbm,
            g_dbi,
        })
        .collect();

    Ok(Topology {
        nodes,
        side_m,
        f_mhz,
        seed,
    })
}

fn grid_positions(n: usize, side_m: f64) -> Vec<(f64, f64)> {
    // rows x cols factorization with minimal |rows - cols|
    let mut rows = (n as f64).sqrt().floor() as usize;
    while rows > 1 && n % rows != 0 {
        rows -= 1;
    }
    let cols = n / rows;
    let dx = side_m / cols as f64;
    let dy = side_m / rows as f64;
    let mut out = Vec::with_capacity(n);
    for r in 0..rows {
        for c in 0..cols {
            out.push((dx * (c as f64 + 0.5), dy * (r as f64 + 0.5)));
        }
    }
    out
}

fn uniform_positions(
    n: usize,
    side_m: f64,
    min_sep_m: f64,
    seed: u64,
) -> Result<Vec<(f64, f64)>, MeshError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(n);
    let mut tries = 0usize;
    while out.len() < n {
        if tries >= PLACEMENT_RETRY_BUDGET {
            return Err(MeshError::PlacementInfeasible {
                requested: n,
                achieved: out.len(),
                min_sep_m,
            });
        }
        tries += 1;
        let x = rng.gen_range(0.0..side_m);
        let y = rng.gen_range(0.0..side_m);
        let ok = out
            .iter()
            .all(|&(px, py)| ((x - px).powi(2) + (y - py).powi(2)).sqrt() >= min_sep_m);
        if ok {
            out.push((x, y));
        }
    }
    Ok(out)
}

/// N x N received-power matrix in dBm. The diagonal is undefined: reading it
/// is a contract violation and panics rather than yielding a number.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceMatrix {
    n: usize,
    // row-major; diagonal slots hold NaN and are never exposed
    data: Vec<f64>,
}

impl InterferenceMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Received power at node `j` from transmitter `i`, in dBm.
    ///
    /// Panics if `i == j`: the self-entry has no physical meaning.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        assert!(i != j, "interference matrix diagonal ({i},{i}) is undefined");
        self.data[i * self.n + j]
    }

    /// Off-diagonal entries of column `j`: incoming interference at node `j`.
    pub fn incoming(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.n).filter(move |&i| i != j).map(move |i| (i, self.entry(i, j)))
    }

    /// Sum of defined entries in linear milliwatts (diagonal contributes nothing).
    pub fn total_linear_mw(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j {
                    acc += propagation::dbm_to_mw(self.entry(i, j));
                }
            }
        }
        acc
    }

    /// CSV export with the diagonal emitted as the literal token `NA`.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s.push_str("from_id");
        for j in 0..self.n {
            s.push_str(&format!(",to_{j}"));
        }
        s.push('\n');
        for i in 0..self.n {
            s.push_str(&i.to_string());
            for j in 0..self.n {
                if i == j {
                    s.push_str(",NA");
                } else {
                    s.push_str(&format!(",{:.6}", self.entry(i, j)));
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Fill the interference matrix from pairwise link budgets, O(N^2).
pub fn build_interference_matrix(
    topology: &Topology,
    model: LinkModel,
) -> Result<InterferenceMatrix, MeshError> {
    let n = topology.nodes.len();
    let mut data = vec![f64::NAN; n * n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let tx = &topology.nodes[i];
            let rx = &topology.nodes[j];
            let d_m = distance(tx, rx);
            if d_m < 1.0 {
                return Err(MeshError::CoLocated(i, j));
            }
            let loss_db = match model {
                LinkModel::Fspl => propagation::fspl(d_m, topology.f_mhz)
                    .map_err(|source| MeshError::Link { i, j, source })?,
                LinkModel::Cost231 {
                    h_bs_m,
                    h_ms_m,
                    environment,
                } => propagation::cost231_path_loss(&PathLossParams {
                    f_mhz: topology.f_mhz,
                    h_bs_m,
                    h_ms_m,
                    d_km: d_m / 1000.0,
                    environment,
                })
                .map_err(|source| MeshError::Link { i, j, source })?,
            };
            data[i * n + j] = propagation::received_power(&LinkBudget {
                p_tx_dbm: tx.p_tx_dbm,
                g_tx_dbi: tx.g_dbi,
                g_rx_dbi: rx.g_dbi,
                loss_db,
            });
        }
    }
    Ok(InterferenceMatrix { n, data })
}

/// The `k` strongest interferers into `node_id`, sorted descending by power,
/// ties broken by smaller source id.
pub fn top_k_interferers(
    matrix: &InterferenceMatrix,
    node_id: usize,
    k: usize,
) -> Result<Vec<(usize, f64)>, MeshError> {
    let max = matrix.n() - 1;
    if k < 1 || k > max {
        return Err(MeshError::KOutOfRange { k, max });
    }
    let mut col: Vec<(usize, f64)> = matrix.incoming(node_id).collect();
    col.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    col.truncate(k);
    Ok(col)
}

/// Node-to-zone map produced by conflict-graph coloring.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoneAssignment {
    pub zone_of: Vec<usize>,
    pub n_zones: usize,
}

/// Partition nodes into zones such that no two nodes in the same zone hear
/// each other above `conflict_threshold_dbm`.
///
/// Conflict edge (i, j) iff max(entry(i,j), entry(j,i)) > threshold, colored
/// with Welsh-Powell greedy (descending degree, first-fit, id tie-break).
pub fn partition_zones(
    matrix: &InterferenceMatrix,
    conflict_threshold_dbm: f64,
) -> ZoneAssignment {
    let n = matrix.n();
    let mut conflict = vec![false; n * n];
    let mut degree = vec![0usize; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if matrix.entry(i, j).max(matrix.entry(j, i)) > conflict_threshold_dbm {
                conflict[i * n + j] = true;
                conflict[j * n + i] = true;
                degree[i] += 1;
                degree[j] += 1;
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| degree[b].cmp(&degree[a]).then(a.cmp(&b)));

    let mut zone_of = vec![usize::MAX; n];
    let mut n_zones = 0;
    for &v in &order {
        let mut used = vec![false; n_zones];
        for u in 0..n {
            if conflict[v * n + u] && zone_of[u] != usize::MAX {
                used[zone_of[u]] = true;
            }
        }
        let zone = (0..n_zones).find(|&c| !used[c]).unwrap_or_else(|| {
            n_zones += 1;
            n_zones - 1
        });
        zone_of[v] = zone;
    }

    ZoneAssignment { zone_of, n_zones }
}

/// Average count of simultaneously active co-channel nodes per zone: N / zones.
pub fn reuse_capacity_gain(assignment: &ZoneAssignment) -> f64 {
    assignment.zone_of.len() as f64 / assignment.n_zones as f64
}

impl Topology {
    /// Plain-text table: one header line, then `id x_m y_m p_tx_dbm g_dbi` rows.
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "# side_m={} f_mhz={} seed={}\nid\tx_m\ty_m\tp_tx_dbm\tg_dbi\n",
            self.side_m, self.f_mhz, self.seed
        );
        for node in &self.nodes {
            s.push_str(&format!(
                "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\n",
                node.id, node.x_m, node.y_m, node.p_tx_dbm, node.g_dbi
            ));
        }
        s
    }

    pub fn from_table(text: &str) -> Result<Topology, MeshError> {
        let mut side_m = 0.0;
        let mut f_mhz = 0.0;
        let mut seed = 0u64;
        let mut nodes = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                for kv in meta.split_whitespace() {
                    let (key, value) = kv
                        .split_once('=')
                        .ok_or_else(|| MeshError::InvalidParameter(format!("bad header: {kv}")))?;
                    match key {
                        "side_m" => side_m = parse_f64(key, value)?,
                        "f_mhz" => f_mhz = parse_f64(key, value)?,
                        "seed" => {
                            seed = value.parse().map_err(|_| {
                                MeshError::InvalidParameter(format!("bad seed: {value}"))
                            })?
                        }
                        _ => {
                            return Err(MeshError::InvalidParameter(format!(
                                "unknown header key: {key}"
                            )))
                        }
                    }
                }
                continue;
            }
            if line.starts_with("id") {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 5 {
                return Err(MeshError::InvalidParameter(format!(
                    "expected 5 columns, got {}: {line}",
                    fields.len()
                )));
            }
            nodes.push(Node {
                id: fields[0]
                    .parse()
                    .map_err(|_| MeshError::InvalidParameter(format!("bad id: {}", fields[0])))?,
                x_m: parse_f64("x_m", fields[1])?,
                y_m: parse_f64("y_m", fields[2])?,
                p_tx_dbm: parse_f64("p_tx_dbm", fields[3])?,
                g_dbi: parse_f64("g_dbi", fields[4])?,
            });
        }
        for (expect, node) in nodes.iter().enumerate() {
            if node.id != expect {
                return Err(MeshError::InvalidParameter(format!(
                    "node ids must be contiguous from 0, found {} at row {expect}",
                    node.id
                )));
            }
        }
        if nodes.len() < 2 {
            return Err(MeshError::TooFewNodes(nodes.len()));
        }
        Ok(Topology {
            nodes,
            side_m,
            f_mhz,
            seed,
        })
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64, MeshError> {
    value
        .parse()
        .map_err(|_| MeshError::InvalidParameter(format!("bad {key}: {value}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(id: usize, x: f64, y: f64) -> Node {
        Node {
            id,
            x_m: x,
            y_m: y,
            p_tx_dbm: 20.0,
            g_dbi: 0.0,
        }
    }

    fn fspl_topology(nodes: Vec<Node>, side_m: f64, f_mhz: f64) -> Topology {
        Topology {
            nodes,
            side_m,
            f_mhz,
            seed: 0,
        }
    }

    #[test]
    fn distance_345() {
        assert_eq!(distance(&node(0, 0.0, 0.0), &node(1, 3.0, 4.0)), 5.0);
        assert_eq!(distance(&node(0, 7.0, 7.0), &node(1, 7.0, 7.0)), 0.0);
    }

    #[test]
    fn distance_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let a = node(0, rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0));
            let b = node(1, rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0));
            assert_eq!(distance(&a, &b), distance(&b, &a));
        }
    }

    #[test]
    fn grid_2x2_positions() {
        let topo =
            generate_topology(4, 1000.0, 2400.0, Placement::Grid, 1.0, 20.0, 0.0, 0).unwrap();
        let pos: Vec<(f64, f64)> = topo.nodes.iter().map(|n| (n.x_m, n.y_m)).collect();
        assert_eq!(
            pos,
            vec![(250.0, 250.0), (750.0, 250.0), (250.0, 750.0), (750.0, 750.0)]
        );
    }

    #[test]
    fn topology_deterministic_per_seed() {
        let make = || {
            generate_topology(
                20,
                1000.0,
                2400.0,
                Placement::UniformRandom,
                5.0,
                20.0,
                0.0,
                42,
            )
            .unwrap()
        };
        assert_eq!(make(), make());
        let other = generate_topology(
            20,
            1000.0,
            2400.0,
            Placement::UniformRandom,
            5.0,
            20.0,
            0.0,
            43,
        )
        .unwrap();
        assert_ne!(make(), other);
    }

    #[test]
    fn min_separation_holds() {
        let topo = generate_topology(
            100,
            1000.0,
            2400.0,
            Placement::UniformRandom,
            10.0,
            20.0,
            0.0,
            7,
        )
        .unwrap();
        for i in 0..100 {
            for j in (i + 1)..100 {
                assert!(distance(&topo.nodes[i], &topo.nodes[j]) >= 10.0);
            }
        }
    }

    #[test]
    fn infeasible_placement_reports_achieved() {
        let err = generate_topology(
            50,
            10.0,
            2400.0,
            Placement::UniformRandom,
            9.0,
            20.0,
            0.0,
            1,
        )
        .unwrap_err();
        match err {
            MeshError::PlacementInfeasible { requested, achieved, .. } => {
                assert_eq!(requested, 50);
                assert!(achieved < 50);
            }
            other => panic!("expected PlacementInfeasible, got {other:?}"),
        }
    }

    #[test]
    fn matrix_symmetric_for_equal_parameters() {
        let topo = fspl_topology(vec![node(0, 0.0, 0.0), node(1, 300.0, 0.0)], 1000.0, 2400.0);
        let m = build_interference_matrix(&topo, LinkModel::Fspl).unwrap();
        assert!((m.entry(0, 1) - m.entry(1, 0)).abs() < 1e-9);
    }

    #[test]
    #[should_panic(expected = "diagonal")]
    fn matrix_diagonal_is_a_contract_violation() {
        let topo = fspl_topology(vec![node(0, 0.0, 0.0), node(1, 300.0, 0.0)], 1000.0, 2400.0);
        let m = build_interference_matrix(&topo, LinkModel::Fspl).unwrap();
        let _ = m.entry(1, 1);
    }

    #[test]
    fn collinear_chain_spacing_law() {
        let topo = fspl_topology(
            vec![node(0, 0.0, 0.0), node(1, 250.0, 0.0), node(2, 500.0, 0.0)],
            1000.0,
            2400.0,
        );
        let m = build_interference_matrix(&topo, LinkModel::Fspl).unwrap();
        // middle node hears both ends equally
        assert!((m.entry(0, 1) - m.entry(2, 1)).abs() < 1e-9);
        // end-to-end link is one doubling weaker than adjacent
        let delta = m.entry(1, 0) - m.entry(2, 0);
        assert!((delta - 20.0 * 2f64.log10()).abs() < 1e-9);
    }

    #[test]
    fn power_bump_shifts_one_row() {
        let mut topo = fspl_topology(
            vec![node(0, 0.0, 0.0), node(1, 250.0, 0.0), node(2, 100.0, 400.0)],
            1000.0,
            2400.0,
        );
        let before = build_interference_matrix(&topo, LinkModel::Fspl).unwrap();
        topo.nodes[1].p_tx_dbm += 3.0;
        let after = build_interference_matrix(&topo, LinkModel::Fspl).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i == j {
                    continue;
                }
                let shift = after.entry(i, j) - before.entry(i, j);
                let expected = if i == 1 { 3.0 } else { 0.0 };
                assert!((shift - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn colocated_rejected() {
        let topo = fspl_topology(vec![node(0, 0.0, 0.0), node(1, 0.5, 0.0)], 1000.0, 2400.0);
        assert!(matches!(
            build_interference_matrix(&topo, LinkModel::Fspl),
            Err(MeshError::CoLocated(0, 1))
        ));
    }

    #[test]
    fn cost231_matrix_rejects_short_links() {
        let topo = fspl_topology(vec![node(0, 0.0, 0.0), node(1, 400.0, 0.0)], 1000.0, 1800.0);
        let model = LinkModel::Cost231 {
            h_bs_m: 40.0,
            h_ms_m: 1.5,
            environment: Environment::MediumCity,
        };
        assert!(matches!(
            build_interference_matrix(&topo, model),
            Err(MeshError::Link { i: 0, j: 1, .. })
        ));
    }

    #[test]
    fn top_k_matches_brute_force() {
        let topo = generate_topology(
            6,
            1000.0,
            2400.0,
            Placement::UniformRandom,
            5.0,
            20.0,
            0.0,
            11,
        )
        .unwrap();
        let m = build_interference_matrix(&topo, LinkModel::Fspl).unwrap();
        for j in 0..6 {
            let mut brute: Vec<(usize, f64)> = m.incoming(j).collect();
            brute.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            brute.truncate(3);
            assert_eq!(top_k_interferers(&m, j, 3).unwrap(), brute);
        }
        // full column and prefix property
        for j in 0..6 {
            let full = top_k_interferers(&m, j, 5).unwrap();
            for k in 1..5 {
                assert_eq!(top_k_interferers(&m, j, k).unwrap(), full[..k]);
            }
        }
        assert!(matches!(
            top_k_interferers(&m, 0, 6),
            Err(MeshError::KOutOfRange { .. })
        ));
        assert!(matches!(
            top_k_interferers(&m, 0, 0),
            Err(MeshError::KOutOfRange { .. })
        ));
    }

    #[test]
    fn zone_threshold_extremes() {
        let topo = generate_topology(
            8,
            1000.0,
            2400.0,
            Placement::UniformRandom,
            10.0,
            20.0,
            0.0,
            5,
        )
        .unwrap();
        let m = build_interference_matrix(&topo, LinkModel::Fspl).unwrap();
        let one = partition_zones(&m, 1000.0);
        assert_eq!(one.n_zones, 1);
        assert_eq!(reuse_capacity_gain(&one), 8.0);
        let all = partition_zones(&m, -1000.0);
        assert_eq!(all.n_zones, 8);
        assert_eq!(reuse_capacity_gain(&all), 1.0);
    }

    /// Exact chromatic number by exhaustive search, for small test instances.
    fn chromatic_number(n: usize, conflict: &dyn Fn(usize, usize) -> bool) -> usize {
        for colors in 1..=n {
            let mut assign = vec![0usize; n];
            loop {
                let ok = (0..n).all(|i| {
                    (0..i).all(|j| !(conflict(i, j) && assign[i] == assign[j]))
                });
                if ok {
                    return colors;
                }
                // next assignment in mixed radix
                let mut pos = 0;
                loop {
                    if pos == n {
                        break;
                    }
                    assign[pos] += 1;
                    if assign[pos] < colors {
                        break;
                    }
                    assign[pos] = 0;
                    pos += 1;
                }
                if pos == n {
                    break;
                }
            }
        }
        unreachable!("n colors always suffice")
    }

    // exhaustive check: greedy coloring is conflict-free and near-optimal
    #[test]
    fn zones_conflict_free_and_near_chromatic() {
        for seed in 0..10u64 {
            let topo = generate_topology(
                5,
                800.0,
                2400.0,
                Placement::UniformRandom,
                20.0,
                20.0,
                0.0,
                seed,
            )
            .unwrap();
            let m = build_interference_matrix(&topo, LinkModel::Fspl).unwrap();
            let threshold = -55.0;
            let z = partition_zones(&m, threshold);
            for i in 0..5 {
                for j in (i + 1)..5 {
                    if z.zone_of[i] == z.zone_of[j] {
                        assert!(m.entry(i, j).max(m.entry(j, i)) <= threshold);
                    }
                }
            }
            let conflict =
                |i: usize, j: usize| m.entry(i, j).max(m.entry(j, i)) > threshold;
            assert!(z.n_zones <= chromatic_number(5, &conflict) + 1);
        }
    }

    // sanity for the exhaustive helper itself: a triangle needs 3 colors
    #[test]
    fn chromatic_helper_triangle() {
        let conflict = |i: usize, j: usize| i != j;
        assert_eq!(chromatic_number(3, &conflict), 3);
        let no_conflict = |_: usize, _: usize| false;
        assert_eq!(chromatic_number(4, &no_conflict), 1);
    }

    #[test]
    fn reuse_gain_monotone_in_threshold() {
        let topo = generate_topology(
            12,
            1000.0,
            2400.0,
            Placement::UniformRandom,
            10.0,
            20.0,
            0.0,
            9,
        )
        .unwrap();
        let m = build_interference_matrix(&topo, LinkModel::Fspl).unwrap();
        let mut prev = f64::INFINITY;
        for threshold in [-30.0, -50.0, -70.0, -90.0, -110.0] {
            let gain = reuse_capacity_gain(&partition_zones(&m, threshold));
            assert!(gain <= prev + 1e-12);
            prev = gain;
        }
    }

    #[test]
    fn topology_table_round_trip() {
        let topo = generate_topology(
            5,
            1000.0,
            2400.0,
            Placement::UniformRandom,
            10.0,
            17.5,
            2.0,
            3,
        )
        .unwrap();
        let parsed = Topology::from_table(&topo.to_table()).unwrap();
        assert_eq!(parsed.side_m, topo.side_m);
        assert_eq!(parsed.nodes.len(), topo.nodes.len());
        for (a, b) in parsed.nodes.iter().zip(&topo.nodes) {
            assert!((a.x_m - b.x_m).abs() < 1e-6);
            assert!((a.y_m - b.y_m).abs() < 1e-6);
        }
    }

    #[test]
    fn matrix_csv_has_na_diagonal() {
        let topo = fspl_topology(vec![node(0, 0.0, 0.0), node(1, 300.0, 0.0)], 1000.0, 2400.0);
        let m = build_interference_matrix(&topo, LinkModel::Fspl).unwrap();
        let csv = m.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "from_id,to_0,to_1");
        assert!(lines[1].starts_with("0,NA,"));
        assert!(lines[2].ends_with(",NA"));
    }
}
