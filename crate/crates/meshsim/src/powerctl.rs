//! Interference-aware transmit-power control as a value-based RL problem.
//!
//! State: the vector of current transmit powers plus the top-K strongest
//! interference terms per node. Actions: pick one node, nudge its power by
//! -3, 0, or +3 dB (saturating at the configured bounds). Reward: hinge
//! penalty on per-link interference above a threshold plus a linear-watt
//! energy cost. Small instances use a tabular Q function keyed on the exact
//! power vector; larger instances use a one-hidden-layer approximator over
//! the state features. A brute-force enumerator over discrete power levels
//! serves as the verification oracle.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::mesh::{self, InterferenceMatrix, LinkModel, Topology};
use crate::propagation::dbm_to_mw;

pub const POWER_DELTAS_DB: [f64; 3] = [-3.0, 0.0, 3.0];

/// Mesh-node transmit power bounds in dBm.
pub const MESH_POWER_BOUNDS: PowerBounds = PowerBounds {
    p_min_dbm: -10.0,
    p_max_dbm: 30.0,
};

/// Macro-site transmit power bounds in dBm (46 dBm high-power towers).
pub const MACRO_POWER_BOUNDS: PowerBounds = PowerBounds {
    p_min_dbm: 30.0,
    p_max_dbm: 46.0,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerBounds {
    pub p_min_dbm: f64,
    pub p_max_dbm: f64,
}

impl PowerBounds {
    pub fn clamp(&self, p_dbm: f64) -> f64 {
        p_dbm.clamp(self.p_min_dbm, self.p_max_dbm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardConfig {
    /// Penalty weight per dB of interference above the threshold.
    pub alpha: f64,
    /// Energy weight per watt of total transmit power.
    pub beta: f64,
    pub i_threshold_dbm: f64,
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), PowerCtlError> {
        if self.alpha < 0.0 || self.beta < 0.0 || (self.alpha == 0.0 && self.beta == 0.0) {
            return Err(PowerCtlError::BadRewardConfig);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcState {
    pub powers_dbm: Vec<f64>,
    /// topk_features[node] = the K strongest incoming interference powers, dBm.
    pub topk_features: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcAction {
    pub node_id: usize,
    pub delta_db: f64,
}

#[derive(Debug, Error)]
pub enum PowerCtlError {
    #[error("alpha and beta must be non-negative and not both zero")]
    BadRewardConfig,
    #[error("invalid action: node {node_id} with delta {delta_db} dB")]
    InvalidAction { node_id: usize, delta_db: f64 },
    #[error("Q value {0} exceeded the divergence bound; lower the learning rate")]
    DivergenceDetected(f64),
    #[error("enumeration of {0} power vectors exceeds the 10^6 bound")]
    TooLarge(u128),
    #[error(transparent)]
    Mesh(#[from] mesh::MeshError),
    #[error("policy file malformed: {0}")]
    Malformed(String),
}

/// The MDP wrapper: immutable geometry plus power bounds and reward weights.
#[derive(Debug, Clone)]
pub struct PcEnv {
    pub topology: Topology,
    pub model: LinkModel,
    pub bounds: PowerBounds,
    pub k: usize,
    pub reward_cfg: RewardConfig,
}

/// Hinge interference penalty plus linear-watt energy cost, negated.
pub fn reward(matrix: &InterferenceMatrix, powers_dbm: &[f64], cfg: &RewardConfig) -> f64 {
    let mut violation_db = 0.0;
    let n = matrix.n();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                violation_db += (matrix.entry(i, j) - cfg.i_threshold_dbm).max(0.0);
            }
        }
    }
    let total_w: f64 = powers_dbm.iter().map(|&p| dbm_to_mw(p) / 1000.0).sum();
    -cfg.alpha * violation_db - cfg.beta * total_w
}

impl PcEnv {
    pub fn new(
        topology: Topology,
        model: LinkModel,
        bounds: PowerBounds,
        k: usize,
        reward_cfg: RewardConfig,
    ) -> Result<PcEnv, PowerCtlError> {
        reward_cfg.validate()?;
        Ok(PcEnv {
            topology,
            model,
            bounds,
            k,
            reward_cfg,
        })
    }

    pub fn n(&self) -> usize {
        self.topology.nodes.len()
    }

    fn with_powers(&self, powers_dbm: &[f64]) -> Topology {
        let mut topo = self.topology.clone();
        for (node, &p) in topo.nodes.iter_mut().zip(powers_dbm) {
            node.p_tx_dbm = p;
        }
        topo
    }

    pub fn matrix_for(&self, powers_dbm: &[f64]) -> Result<InterferenceMatrix, PowerCtlError> {
        Ok(mesh::build_interference_matrix(
            &self.with_powers(powers_dbm),
            self.model,
        )?)
    }

    /// Build the full state (powers + top-K features) for a power vector.
    pub fn state_for(&self, powers_dbm: &[f64]) -> Result<PcState, PowerCtlError> {
        let matrix = self.matrix_for(powers_dbm)?;
        let k = self.k.min(self.n() - 1);
        let mut topk_features = Vec::with_capacity(self.n());
        for node in 0..self.n() {
            let top = mesh::top_k_interferers(&matrix, node, k)?;
            topk_features.push(top.into_iter().map(|(_, p)| p).collect());
        }
        Ok(PcState {
            powers_dbm: powers_dbm.to_vec(),
            topk_features,
        })
    }

    pub fn reward_of(&self, powers_dbm: &[f64]) -> Result<f64, PowerCtlError> {
        Ok(reward(
            &self.matrix_for(powers_dbm)?,
            powers_dbm,
            &self.reward_cfg,
        ))
    }

    /// Apply one action: adjust the chosen node's power (saturating), rebuild
    /// the interference matrix and features, return the next state and the
    /// reward of that next state. Pure in (state, action).
    pub fn step(&self, state: &PcState, action: &PcAction) -> Result<(PcState, f64), PowerCtlError> {
        if action.node_id >= self.n() || !POWER_DELTAS_DB.contains(&action.delta_db) {
            return Err(PowerCtlError::InvalidAction {
                node_id: action.node_id,
                delta_db: action.delta_db,
            });
        }
        let mut powers = state.powers_dbm.clone();
        powers[action.node_id] = self.bounds.clamp(powers[action.node_id] + action.delta_db);
        let next = self.state_for(&powers)?;
        let r = self.reward_of(&powers)?;
        Ok((next, r))
    }

    pub fn action_count(&self) -> usize {
        3 * self.n()
    }

    pub fn action_from_index(&self, idx: usize) -> PcAction {
        PcAction {
            node_id: idx / 3,
            delta_db: POWER_DELTAS_DB[idx % 3],
        }
    }
}

/// State-action value function: exact table for tiny instances, one-hidden-
/// layer approximator for the rest.
#[derive(Debug, Clone)]
pub enum QFunction {
    Tabular(TabularQ),
    Mlp(MlpQ),
}

impl QFunction {
    pub fn values(&self, state: &PcState) -> Vec<f64> {
        match self {
            QFunction::Tabular(t) => t.values(state),
            QFunction::Mlp(m) => m.values(state),
        }
    }
}

/// Q table keyed on the power vector quantized to 0.1 dB.
#[derive(Debug, Clone, Default)]
pub struct TabularQ {
    pub n_actions: usize,
    table: HashMap<Vec<i32>, Vec<f64>>,
}

fn quantize(powers_dbm: &[f64]) -> Vec<i32> {
    powers_dbm.iter().map(|p| (p * 10.0).round() as i32).collect()
}

impl TabularQ {
    pub fn new(n_actions: usize) -> TabularQ {
        TabularQ {
            n_actions,
            table: HashMap::new(),
        }
    }

    pub fn values(&self, state: &PcState) -> Vec<f64> {
        self.table
            .get(&quantize(&state.powers_dbm))
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.n_actions])
    }

    fn entry(&mut self, state: &PcState) -> &mut Vec<f64> {
        let n_actions = self.n_actions;
        self.table
            .entry(quantize(&state.powers_dbm))
            .or_insert_with(|| vec![0.0; n_actions])
    }
}

/// One-hidden-layer tanh network over [powers; top-K features], one output
/// per action.
#[derive(Debug, Clone)]
pub struct MlpQ {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub n_actions: usize,
    /// w1 (hidden x input), b1, w2 (actions x hidden), b2, flat.
    weights: Vec<f64>,
}

impl MlpQ {
    pub fn new_random(input_dim: usize, hidden_dim: usize, n_actions: usize, seed: u64) -> MlpQ {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = hidden_dim * input_dim + hidden_dim + n_actions * hidden_dim + n_actions;
        let scale = (1.0 / input_dim as f64).sqrt();
        MlpQ {
            input_dim,
            hidden_dim,
            n_actions,
            weights: (0..n).map(|_| rng.gen_range(-scale..scale)).collect(),
        }
    }

    fn features(&self, state: &PcState) -> Vec<f64> {
        // dBm scaled to keep activations in a sane range
        let mut f: Vec<f64> = state.powers_dbm.iter().map(|p| p / 30.0).collect();
        for topk in &state.topk_features {
            f.extend(topk.iter().map(|p| (p + 60.0) / 60.0));
        }
        f.resize(self.input_dim, 0.0);
        f
    }

    fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (hd, id, na) = (self.hidden_dim, self.input_dim, self.n_actions);
        let w1 = &self.weights[..hd * id];
        let b1 = &self.weights[hd * id..hd * id + hd];
        let w2 = &self.weights[hd * id + hd..hd * id + hd + na * hd];
        let b2 = &self.weights[hd * id + hd + na * hd..];
        let mut hidden = vec![0.0; hd];
        for r in 0..hd {
            let mut z = b1[r];
            for (c, &xi) in x.iter().enumerate() {
                z += w1[r * id + c] * xi;
            }
            hidden[r] = z.tanh();
        }
        let mut out = vec![0.0; na];
        for a in 0..na {
            let mut z = b2[a];
            for (r, &h) in hidden.iter().enumerate() {
                z += w2[a * hd + r] * h;
            }
            out[a] = z;
        }
        (hidden, out)
    }

    pub fn values(&self, state: &PcState) -> Vec<f64> {
        self.forward(&self.features(state)).1
    }

    /// Semi-gradient update of one action's value toward `target`.
    fn update(&mut self, state: &PcState, action_idx: usize, target: f64, lr: f64) {
        let x = self.features(state);
        let (hidden, out) = self.forward(&x);
        let delta = out[action_idx] - target;
        let (hd, id, na) = (self.hidden_dim, self.input_dim, self.n_actions);
        let w2_base = hd * id + hd;
        // backprop through the single output
        let mut dhidden = vec![0.0; hd];
        for r in 0..hd {
            let w2 = self.weights[w2_base + action_idx * hd + r];
            dhidden[r] = delta * w2 * (1.0 - hidden[r] * hidden[r]);
            self.weights[w2_base + action_idx * hd + r] -= lr * delta * hidden[r];
        }
        self.weights[w2_base + na * hd + action_idx] -= lr * delta;
        for r in 0..hd {
            for (c, &xi) in x.iter().enumerate() {
                self.weights[r * id + c] -= lr * dhidden[r] * xi;
            }
            self.weights[hd * id + r] -= lr * dhidden[r];
        }
    }
}

/// Epsilon-greedy action selection; ties broken by (node_id, delta) order.
pub fn select_action(
    q: &QFunction,
    env: &PcEnv,
    state: &PcState,
    epsilon: f64,
    rng: &mut ChaCha8Rng,
) -> PcAction {
    let n_actions = env.action_count();
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        return env.action_from_index(rng.gen_range(0..n_actions));
    }
    let values = q.values(state);
    let mut best = 0usize;
    for idx in 1..n_actions {
        if values[idx] > values[best] {
            best = idx;
        }
    }
    env.action_from_index(best)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyper {
    pub episodes: usize,
    pub steps_per_episode: usize,
    pub gamma: f64,
    pub lr: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub replay: bool,
}

impl Default for Hyper {
    /// Tuned for the small tabular lattice (transitions are deterministic,
    /// so a large step size is safe). The MLP representation needs a much
    /// smaller learning rate, around 0.005.
    fn default() -> Self {
        Hyper {
            episodes: 1000,
            steps_per_episode: 30,
            gamma: 0.95,
            lr: 0.5,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            replay: false,
        }
    }
}

const Q_DIVERGENCE_BOUND: f64 = 1e9;

/// Per-episode log line: (episode, return, epsilon).
pub type LearningCurve = Vec<(usize, f64, f64)>;

/// Q-learning (tabular for N <= 4, semi-gradient TD otherwise), episodic,
/// fully determined by the seed.
pub fn train_policy(
    env: &PcEnv,
    hyper: &Hyper,
    seed: u64,
) -> Result<(QFunction, LearningCurve), PowerCtlError> {
    env.reward_cfg.validate()?;
    let n = env.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tabular = n <= 4;
    let k = env.k.min(n - 1);
    let mut q = if tabular {
        QFunction::Tabular(TabularQ::new(env.action_count()))
    } else {
        QFunction::Mlp(MlpQ::new_random(
            n + n * k,
            32,
            env.action_count(),
            seed ^ 0x9e3779b97f4a7c15,
        ))
    };

    let mut replay_buf: Vec<(PcState, usize, f64, PcState)> = Vec::new();
    let mut curve = Vec::with_capacity(hyper.episodes);

    for episode in 0..hyper.episodes {
        let epsilon = if hyper.episodes > 1 {
            hyper.epsilon_start
                + (hyper.epsilon_end - hyper.epsilon_start) * episode as f64
                    / (hyper.episodes - 1) as f64
        } else {
            hyper.epsilon_end
        };

        // random on-lattice start each episode for state coverage
        let powers: Vec<f64> = (0..n)
            .map(|_| {
                let steps =
                    ((env.bounds.p_max_dbm - env.bounds.p_min_dbm) / 3.0).floor() as i64;
                env.bounds
                    .clamp(env.bounds.p_min_dbm + 3.0 * rng.gen_range(0..=steps) as f64)
            })
            .collect();
        let mut state = env.state_for(&powers)?;
        let mut episode_return = 0.0;

        for _ in 0..hyper.steps_per_episode {
            let action = select_action(&q, env, &state, epsilon, &mut rng);
            let action_idx = action.node_id * 3
                + POWER_DELTAS_DB
                    .iter()
                    .position(|&d| d == action.delta_db)
                    .unwrap();
            let (next, r) = env.step(&state, &action)?;
            episode_return += r;

            let apply = |q: &mut QFunction,
                         s: &PcState,
                         a: usize,
                         r: f64,
                         s2: &PcState|
             -> Result<(), PowerCtlError> {
                let next_max = q
                    .values(s2)
                    .into_iter()
                    .fold(f64::NEG_INFINITY, f64::max);
                let target = r + hyper.gamma * next_max;
                if !target.is_finite() || target.abs() > Q_DIVERGENCE_BOUND {
                    return Err(PowerCtlError::DivergenceDetected(target));
                }
                match q {
                    QFunction::Tabular(t) => {
                        let cell = &mut t.entry(s)[a];
                        *cell += hyper.lr * (target - *cell);
                    }
                    QFunction::Mlp(m) => m.update(s, a, target, hyper.lr),
                }
                Ok(())
            };

            apply(&mut q, &state, action_idx, r, &next)?;
            if hyper.replay {
                replay_buf.push((state.clone(), action_idx, r, next.clone()));
                for _ in 0..4.min(replay_buf.len()) {
                    let pick = rng.gen_range(0..replay_buf.len());
                    let (s, a, r, s2) = replay_buf[pick].clone();
                    apply(&mut q, &s, a, r, &s2)?;
                }
            }
            state = next;
        }
        curve.push((episode, episode_return, epsilon));
    }
    Ok((q, curve))
}

/// Follow the greedy policy from `start_powers` until the power vector stops
/// changing or revisits a state; returns the final powers and their reward.
pub fn greedy_fixed_point(
    env: &PcEnv,
    q: &QFunction,
    start_powers: &[f64],
    max_steps: usize,
) -> Result<(Vec<f64>, f64), PowerCtlError> {
    let mut rng = ChaCha8Rng::seed_from_u64(0); // epsilon = 0, rng unused
    let mut state = env.state_for(start_powers)?;
    let mut seen = vec![quantize(&state.powers_dbm)];
    for _ in 0..max_steps {
        let action = select_action(q, env, &state, 0.0, &mut rng);
        let (next, _) = env.step(&state, &action)?;
        let key = quantize(&next.powers_dbm);
        if seen.contains(&key) {
            state = next;
            break;
        }
        seen.push(key);
        state = next;
    }
    let r = env.reward_of(&state.powers_dbm)?;
    Ok((state.powers_dbm, r))
}

/// Exhaustively enumerate all power vectors over the given discrete levels;
/// returns the reward-maximizing vector, ties to the lexicographically
/// smallest.
pub fn brute_force_optimal(
    env: &PcEnv,
    power_levels: &[f64],
) -> Result<(Vec<f64>, f64), PowerCtlError> {
    let n = env.n();
    let combos = (power_levels.len() as u128).pow(n as u32);
    if combos > 1_000_000 {
        return Err(PowerCtlError::TooLarge(combos));
    }
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut idx = vec![0usize; n];
    loop {
        let powers: Vec<f64> = idx.iter().map(|&i| power_levels[i]).collect();
        let r = env.reward_of(&powers)?;
        let better = match &best {
            None => true,
            Some((bp, br)) => r > *br + 1e-12 || ((r - br).abs() <= 1e-12 && powers < *bp),
        };
        if better {
            best = Some((powers, r));
        }
        // odometer increment
        let mut pos = n;
        loop {
            if pos == 0 {
                return Ok(best.unwrap());
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < power_levels.len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

impl QFunction {
    /// Versioned flat-file serialization.
    pub fn save_text(&self, n: usize, k: usize, bounds: &PowerBounds) -> String {
        match self {
            QFunction::Tabular(t) => {
                let mut s = format!(
                    "policy v1 repr=tabular n={} k={} p_min={} p_max={} actions={}\n",
                    n, k, bounds.p_min_dbm, bounds.p_max_dbm, t.n_actions
                );
                let mut keys: Vec<&Vec<i32>> = t.table.keys().collect();
                keys.sort();
                for key in keys {
                    let ks: Vec<String> = key.iter().map(|v| v.to_string()).collect();
                    let vs: Vec<String> =
                        t.table[key].iter().map(|v| format!("{v:.17e}")).collect();
                    s.push_str(&format!("{}|{}\n", ks.join(","), vs.join(",")));
                }
                s
            }
            QFunction::Mlp(m) => {
                let mut s = format!(
                    "policy v1 repr=mlp n={} k={} p_min={} p_max={} input={} hidden={} actions={}\n",
                    n, k, bounds.p_min_dbm, bounds.p_max_dbm, m.input_dim, m.hidden_dim,
                    m.n_actions
                );
                for w in &m.weights {
                    s.push_str(&format!("{w:.17e}\n"));
                }
                s
            }
        }
    }

    pub fn load_text(text: &str) -> Result<QFunction, PowerCtlError> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| PowerCtlError::Malformed("empty file".into()))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("policy") || fields.next() != Some("v1") {
            return Err(PowerCtlError::Malformed("bad magic".into()));
        }
        let mut kv: HashMap<&str, &str> = HashMap::new();
        for field in fields {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| PowerCtlError::Malformed(format!("bad field {field}")))?;
            kv.insert(key, value);
        }
        let get_usize = |key: &str| -> Result<usize, PowerCtlError> {
            kv.get(key)
                .ok_or_else(|| PowerCtlError::Malformed(format!("missing {key}")))?
                .parse()
                .map_err(|_| PowerCtlError::Malformed(format!("bad {key}")))
        };
        match kv.get("repr").copied() {
            Some("tabular") => {
                let n_actions = get_usize("actions")?;
                let mut table = HashMap::new();
                for line in lines.filter(|l| !l.trim().is_empty()) {
                    let (key_s, val_s) = line
                        .split_once('|')
                        .ok_or_else(|| PowerCtlError::Malformed(format!("bad row {line}")))?;
                    let key: Result<Vec<i32>, _> =
                        key_s.split(',').map(|v| v.parse::<i32>()).collect();
                    let vals: Result<Vec<f64>, _> =
                        val_s.split(',').map(|v| v.parse::<f64>()).collect();
                    table.insert(
                        key.map_err(|_| PowerCtlError::Malformed("bad key".into()))?,
                        vals.map_err(|_| PowerCtlError::Malformed("bad values".into()))?,
                    );
                }
                Ok(QFunction::Tabular(TabularQ { n_actions, table }))
            }
            Some("mlp") => {
                let weights: Result<Vec<f64>, _> = lines
                    .filter(|l| !l.trim().is_empty())
                    .map(|l| l.trim().parse::<f64>())
                    .collect();
                Ok(QFunction::Mlp(MlpQ {
                    input_dim: get_usize("input")?,
                    hidden_dim: get_usize("hidden")?,
                    n_actions: get_usize("actions")?,
                    weights: weights
                        .map_err(|_| PowerCtlError::Malformed("bad weight".into()))?,
                }))
            }
            other => Err(PowerCtlError::Malformed(format!("unknown repr {other:?}"))),
        }
    }
}

/// Learning curve CSV: episode, return, epsilon.
pub fn curve_to_csv(curve: &LearningCurve) -> String {
    let mut s = String::from("episode,return,epsilon\n");
    for (episode, ret, epsilon) in curve {
        s.push_str(&format!("{episode},{ret:.9},{epsilon:.6}\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Node;

    fn chain_topology(n: usize, spacing_m: f64, p_tx_dbm: f64) -> Topology {
        Topology {
            nodes: (0..n)
                .map(|id| Node {
                    id,
                    x_m: spacing_m * id as f64,
                    y_m: 0.0,
                    p_tx_dbm,
                    g_dbi: 0.0,
                })
                .collect(),
            side_m: spacing_m * n as f64,
            f_mhz: 2400.0,
            seed: 0,
        }
    }

    fn chain_env(n: usize, cfg: RewardConfig) -> PcEnv {
        PcEnv::new(
            chain_topology(n, 250.0, 10.0),
            LinkModel::Fspl,
            PowerBounds {
                p_min_dbm: 0.0,
                p_max_dbm: 21.0,
            },
            3,
            cfg,
        )
        .unwrap()
    }

    #[test]
    fn reward_zero_without_violations_or_energy_weight() {
        let env = chain_env(
            3,
            RewardConfig {
                alpha: 1.0,
                beta: 0.0,
                i_threshold_dbm: 100.0, // far above any entry
            },
        );
        let powers = vec![10.0, 10.0, 10.0];
        assert_eq!(env.reward_of(&powers).unwrap(), 0.0);
    }

    #[test]
    fn reward_energy_term_at_zero_dbm() {
        let env = chain_env(
            10,
            RewardConfig {
                alpha: 0.0,
                beta: 1.0,
                i_threshold_dbm: 0.0,
            },
        );
        let powers = vec![0.0; 10];
        // 0 dBm = 1 mW per node
        let r = env.reward_of(&powers).unwrap();
        assert!((r - (-0.01)).abs() < 1e-12);
    }

    #[test]
    fn reward_single_violation_counted_in_db() {
        // 2 nodes; set the threshold 5 dB below each incoming entry
        let env0 = chain_env(
            2,
            RewardConfig {
                alpha: 1.0,
                beta: 0.0,
                i_threshold_dbm: 0.0,
            },
        );
        let powers = vec![10.0, 10.0];
        let matrix = env0.matrix_for(&powers).unwrap();
        let entry = matrix.entry(0, 1);
        let env = chain_env(
            2,
            RewardConfig {
                alpha: 1.0,
                beta: 0.0,
                i_threshold_dbm: entry - 5.0,
            },
        );
        // both directions violate by exactly 5 dB
        let r = env.reward_of(&powers).unwrap();
        assert!((r - (-10.0)).abs() < 1e-9);
    }

    #[test]
    fn step_noop_preserves_state() {
        let env = chain_env(
            3,
            RewardConfig {
                alpha: 1.0,
                beta: 0.5,
                i_threshold_dbm: -60.0,
            },
        );
        let state = env.state_for(&[9.0, 9.0, 9.0]).unwrap();
        let (next, r) = env
            .step(
                &state,
                &PcAction {
                    node_id: 1,
                    delta_db: 0.0,
                },
            )
            .unwrap();
        assert_eq!(next, state);
        assert_eq!(r, env.reward_of(&state.powers_dbm).unwrap());
    }

    #[test]
    fn step_saturates_at_bounds() {
        let env = chain_env(
            2,
            RewardConfig {
                alpha: 1.0,
                beta: 0.0,
                i_threshold_dbm: -60.0,
            },
        );
        let state = env.state_for(&[21.0, 0.0]).unwrap();
        let (next, _) = env
            .step(
                &state,
                &PcAction {
                    node_id: 0,
                    delta_db: 3.0,
                },
            )
            .unwrap();
        assert_eq!(next.powers_dbm[0], 21.0);
        let (next, _) = env
            .step(
                &state,
                &PcAction {
                    node_id: 1,
                    delta_db: -3.0,
                },
            )
            .unwrap();
        assert_eq!(next.powers_dbm[1], 0.0);
    }

    #[test]
    fn clamp_idempotence_near_bound() {
        let env = chain_env(
            2,
            RewardConfig {
                alpha: 1.0,
                beta: 0.0,
                i_threshold_dbm: -60.0,
            },
        );
        let state = env.state_for(&[20.0, 0.0]).unwrap();
        let up = PcAction {
            node_id: 0,
            delta_db: 3.0,
        };
        let noop = PcAction {
            node_id: 0,
            delta_db: 0.0,
        };
        let (once, _) = env.step(&state, &up).unwrap();
        let (twice, _) = env.step(&once, &up).unwrap();
        let (once_noop, _) = env.step(&once, &noop).unwrap();
        assert_eq!(twice, once_noop);
    }

    #[test]
    fn invalid_action_rejected() {
        let env = chain_env(
            2,
            RewardConfig {
                alpha: 1.0,
                beta: 0.0,
                i_threshold_dbm: -60.0,
            },
        );
        let state = env.state_for(&[10.0, 10.0]).unwrap();
        assert!(matches!(
            env.step(
                &state,
                &PcAction {
                    node_id: 5,
                    delta_db: 0.0
                }
            ),
            Err(PowerCtlError::InvalidAction { .. })
        ));
        assert!(matches!(
            env.step(
                &state,
                &PcAction {
                    node_id: 0,
                    delta_db: 1.5
                }
            ),
            Err(PowerCtlError::InvalidAction { .. })
        ));
    }

    #[test]
    fn lowering_loudest_node_improves_reward_when_alpha_dominates() {
        let env = chain_env(
            3,
            RewardConfig {
                alpha: 10.0,
                beta: 0.001,
                i_threshold_dbm: -75.0,
            },
        );
        let powers = vec![10.0, 10.0, 10.0];
        let before = env.reward_of(&powers).unwrap();
        let after = env.reward_of(&[10.0, 7.0, 10.0]).unwrap();
        assert!(after > before, "before {before} after {after}");
    }

    #[test]
    fn select_action_greedy_and_tiebreak() {
        let env = chain_env(
            2,
            RewardConfig {
                alpha: 1.0,
                beta: 0.0,
                i_threshold_dbm: -60.0,
            },
        );
        let state = env.state_for(&[9.0, 9.0]).unwrap();
        let mut t = TabularQ::new(env.action_count());
        t.entry(&state)[4] = 5.0; // node 1, delta 0
        let q = QFunction::Tabular(t);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = select_action(&q, &env, &state, 0.0, &mut rng);
        assert_eq!((a.node_id, a.delta_db), (1, 0.0));

        // two equal maxima: lexicographically smaller (node, delta) wins
        let mut t = TabularQ::new(env.action_count());
        t.entry(&state)[2] = 7.0; // node 0, +3
        t.entry(&state)[3] = 7.0; // node 1, -3
        let q = QFunction::Tabular(t);
        let a = select_action(&q, &env, &state, 0.0, &mut rng);
        assert_eq!((a.node_id, a.delta_db), (0, 3.0));
    }

    #[test]
    fn epsilon_one_is_reproducible() {
        let env = chain_env(
            2,
            RewardConfig {
                alpha: 1.0,
                beta: 0.0,
                i_threshold_dbm: -60.0,
            },
        );
        let state = env.state_for(&[9.0, 9.0]).unwrap();
        let q = QFunction::Tabular(TabularQ::new(env.action_count()));
        let draw = |seed: u64| -> Vec<(usize, f64)> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..10)
                .map(|_| {
                    let a = select_action(&q, &env, &state, 1.0, &mut rng);
                    (a.node_id, a.delta_db)
                })
                .collect()
        };
        assert_eq!(draw(5), draw(5));
        assert_ne!(draw(5), draw(6));
    }

    #[test]
    fn energy_only_objective_reaches_all_p_min() {
        let env = chain_env(
            2,
            RewardConfig {
                alpha: 0.0,
                beta: 1.0,
                i_threshold_dbm: 0.0,
            },
        );
        let (q, _) = train_policy(&env, &Hyper::default(), 7).unwrap();
        let (powers, _) = greedy_fixed_point(&env, &q, &[21.0, 21.0], 100).unwrap();
        assert_eq!(powers, vec![0.0, 0.0]);
    }

    #[test]
    fn brute_force_small_cases() {
        let env = chain_env(
            3,
            RewardConfig {
                alpha: 0.0,
                beta: 1.0,
                i_threshold_dbm: 0.0,
            },
        );
        let (best, _) = brute_force_optimal(&env, &[0.0, 10.0, 20.0]).unwrap();
        assert_eq!(best, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn brute_force_pinned_three_node_chain() {
        // alpha heavily penalizes the adjacent links at high power; the
        // optimum keeps everyone at the lowest level
        let env = PcEnv::new(
            chain_topology(3, 250.0, 10.0),
            LinkModel::Fspl,
            PowerBounds {
                p_min_dbm: 0.0,
                p_max_dbm: 20.0,
            },
            2,
            RewardConfig {
                alpha: 1.0,
                beta: 100.0,
                i_threshold_dbm: -80.0,
            },
        )
        .unwrap();
        let (best, best_r) = brute_force_optimal(&env, &[0.0, 10.0, 20.0]).unwrap();
        // independent re-enumeration in test code
        let mut check_best: Option<(Vec<f64>, f64)> = None;
        for &a in &[0.0, 10.0, 20.0] {
            for &b in &[0.0, 10.0, 20.0] {
                for &c in &[0.0, 10.0, 20.0] {
                    let powers = vec![a, b, c];
                    let r = env.reward_of(&powers).unwrap();
                    if check_best.as_ref().map_or(true, |(_, br)| r > *br) {
                        check_best = Some((powers, r));
                    }
                }
            }
        }
        let (cb, cr) = check_best.unwrap();
        assert_eq!(best, cb);
        assert!((best_r - cr).abs() < 1e-12);
        assert_eq!(best, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn brute_force_enumeration_bound() {
        let env = chain_env(
            3,
            RewardConfig {
                alpha: 0.0,
                beta: 1.0,
                i_threshold_dbm: 0.0,
            },
        );
        let levels: Vec<f64> = (0..101).map(|i| i as f64 * 0.2).collect();
        assert!(matches!(
            brute_force_optimal(&env, &levels),
            Err(PowerCtlError::TooLarge(_))
        ));
    }

    #[test]
    fn trained_policy_near_brute_force_optimum() {
        for (alpha, beta, threshold) in [
            (1.0, 10.0, -75.0),
            (0.5, 50.0, -80.0),
            (2.0, 1.0, -70.0),
        ] {
            let env = PcEnv::new(
                chain_topology(3, 250.0, 10.0),
                LinkModel::Fspl,
                PowerBounds {
                    p_min_dbm: 0.0,
                    p_max_dbm: 6.0,
                },
                2,
                RewardConfig {
                    alpha,
                    beta,
                    i_threshold_dbm: threshold,
                },
            )
            .unwrap();
            let (q, _) = train_policy(&env, &Hyper::default(), 3).unwrap();
            let (_, fp_reward) = greedy_fixed_point(&env, &q, &[6.0, 6.0, 6.0], 200).unwrap();
            let (_, best) = brute_force_optimal(&env, &[0.0, 3.0, 6.0]).unwrap();
            assert!(
                fp_reward >= best - 0.05 * best.abs() - 1e-9,
                "alpha {alpha} beta {beta}: fixed point {fp_reward} vs optimum {best}"
            );
        }
    }

    #[test]
    fn episode_replay_is_bitwise_deterministic() {
        let env = chain_env(
            3,
            RewardConfig {
                alpha: 1.0,
                beta: 1.0,
                i_threshold_dbm: -75.0,
            },
        );
        let hyper = Hyper {
            episodes: 20,
            ..Hyper::default()
        };
        let (_, c1) = train_policy(&env, &hyper, 11).unwrap();
        let (_, c2) = train_policy(&env, &hyper, 11).unwrap();
        assert_eq!(c1, c2);
    }

    #[test]
    fn policy_save_load_round_trip() {
        let env = chain_env(
            2,
            RewardConfig {
                alpha: 1.0,
                beta: 1.0,
                i_threshold_dbm: -70.0,
            },
        );
        let hyper = Hyper {
            episodes: 10,
            ..Hyper::default()
        };
        let (q, _) = train_policy(&env, &hyper, 2).unwrap();
        let text = q.save_text(2, 1, &env.bounds);
        let loaded = QFunction::load_text(&text).unwrap();
        let state = env.state_for(&[9.0, 3.0]).unwrap();
        assert_eq!(q.values(&state), loaded.values(&state));
        // byte-stable serialization
        assert_eq!(text, loaded.save_text(2, 1, &env.bounds));
    }

    #[test]
    fn mlp_learning_makes_progress_on_ten_nodes() {
        let topo = mesh::generate_topology(
            10,
            1200.0,
            2400.0,
            mesh::Placement::UniformRandom,
            100.0,
            10.0,
            0.0,
            21,
        )
        .unwrap();
        let env = PcEnv::new(
            topo,
            LinkModel::Fspl,
            PowerBounds {
                p_min_dbm: -9.0,
                p_max_dbm: 21.0,
            },
            3,
            RewardConfig {
                alpha: 0.2,
                beta: 20.0,
                i_threshold_dbm: -70.0,
            },
        )
        .unwrap();
        let hyper = Hyper {
            episodes: 300,
            steps_per_episode: 25,
            lr: 0.005,
            ..Hyper::default()
        };
        let (_, curve) = train_policy(&env, &hyper, 4).unwrap();
        let tenth = curve.len() / 10;
        let first: f64 =
            curve[..tenth].iter().map(|(_, r, _)| r).sum::<f64>() / tenth as f64;
        let last: f64 = curve[curve.len() - tenth..]
            .iter()
            .map(|(_, r, _)| r)
            .sum::<f64>()
            / tenth as f64;
        assert!(last >= first, "no learning progress: first {first} last {last}");
    }
}
