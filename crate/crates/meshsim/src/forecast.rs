//! Short-horizon traffic-load forecasting.
//!
//! A from-scratch univariate LSTM (standard gate equations, no peepholes)
//! trained by sequential SGD with exact backpropagation through time, plus a
//! persistence baseline. Series are normalized to zero mean / unit variance
//! internally; the stats live in the model so predictions denormalize and
//! clamp at zero (load cannot be negative).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ForecastError {
    #[error("series of length {len} too short: need at least window + horizon + 1 = {need}")]
    InsufficientData { len: usize, need: usize },
    #[error("non-finite loss at epoch {0}; lower the learning rate")]
    DivergenceDetected(usize),
    #[error("window length {got} does not match trained window {expected}")]
    WindowMismatch { got: usize, expected: usize },
    #[error("model file malformed: {0}")]
    Malformed(String),
}

/// Univariate LSTM with affine readout of the final hidden state.
///
/// Parameters are stored in one flat vector, in the order
/// W_f, W_i, W_o, W_c (each hidden x (1+hidden), row-major),
/// b_f, b_i, b_o, b_c, w_y, b_y. The flat layout keeps SGD updates and
/// finite-difference checks trivial.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    pub hidden_dim: usize,
    pub window: usize,
    pub horizon: usize,
    pub norm_mean: f64,
    pub norm_std: f64,
    params: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastConfig {
    pub window: usize,
    pub horizon: usize,
    pub hidden_dim: usize,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        // horizon 5 at a 1 s engine tick = a 5 s lead
        ForecastConfig {
            window: 30,
            horizon: 5,
            hidden_dim: 8,
            lr: 0.05,
            epochs: 40,
            seed: 0,
        }
    }
}

/// Per-step activations retained for backprop.
pub struct ForwardCache {
    xs: Vec<f64>,
    h: Vec<Vec<f64>>, // h[t] after step t; h[0] is the initial zero state
    c: Vec<Vec<f64>>,
    f: Vec<Vec<f64>>,
    i: Vec<Vec<f64>>,
    o: Vec<Vec<f64>>,
    g: Vec<Vec<f64>>,
    pub prediction: f64,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl LstmModel {
    pub fn new_random(hidden_dim: usize, window: usize, horizon: usize, seed: u64) -> LstmModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Self::param_count(hidden_dim);
        let mut params: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.1..0.1)).collect();
        // forget-gate bias +1, the usual stabilizer for short windows
        let m = hidden_dim * (1 + hidden_dim);
        for k in 0..hidden_dim {
            params[4 * m + k] += 1.0;
        }
        LstmModel {
            hidden_dim,
            window,
            horizon,
            norm_mean: 0.0,
            norm_std: 1.0,
            params,
        }
    }

    pub fn param_count(hidden_dim: usize) -> usize {
        4 * hidden_dim * (1 + hidden_dim) + 4 * hidden_dim + hidden_dim + 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn gate_row(&self, gate: usize, row: usize) -> &[f64] {
        let m = 1 + self.hidden_dim;
        let base = gate * self.hidden_dim * m + row * m;
        &self.params[base..base + m]
    }

    fn bias(&self, gate: usize, row: usize) -> f64 {
        let m = self.hidden_dim * (1 + self.hidden_dim);
        self.params[4 * m + gate * self.hidden_dim + row]
    }

    fn w_y(&self) -> &[f64] {
        let m = self.hidden_dim * (1 + self.hidden_dim);
        let base = 4 * m + 4 * self.hidden_dim;
        &self.params[base..base + self.hidden_dim]
    }

    fn b_y(&self) -> f64 {
        *self.params.last().unwrap()
    }
}

/// Run the LSTM over a normalized sequence; returns the readout of the final
/// hidden state and the cached activations.
pub fn lstm_forward(model: &LstmModel, sequence: &[f64]) -> ForwardCache {
    let hd = model.hidden_dim;
    let steps = sequence.len();
    let mut cache = ForwardCache {
        xs: sequence.to_vec(),
        h: vec![vec![0.0; hd]],
        c: vec![vec![0.0; hd]],
        f: Vec::with_capacity(steps),
        i: Vec::with_capacity(steps),
        o: Vec::with_capacity(steps),
        g: Vec::with_capacity(steps),
        prediction: 0.0,
    };
    for &x in sequence {
        let h_prev = cache.h.last().unwrap().clone();
        let c_prev = cache.c.last().unwrap().clone();
        let mut f = vec![0.0; hd];
        let mut i = vec![0.0; hd];
        let mut o = vec![0.0; hd];
        let mut g = vec![0.0; hd];
        for r in 0..hd {
            let mut acc = [0.0f64; 4];
            for (gate, slot) in acc.iter_mut().enumerate() {
                let row = model.gate_row(gate, r);
                let mut z = row[0] * x;
                for (k, &h) in h_prev.iter().enumerate() {
                    z += row[1 + k] * h;
                }
                *slot = z + model.bias(gate, r);
            }
            f[r] = sigmoid(acc[0]);
            i[r] = sigmoid(acc[1]);
            o[r] = sigmoid(acc[2]);
            g[r] = acc[3].tanh();
        }
        let mut c = vec![0.0; hd];
        let mut h = vec![0.0; hd];
        for r in 0..hd {
            c[r] = f[r] * c_prev[r] + i[r] * g[r];
            h[r] = o[r] * c[r].tanh();
        }
        cache.f.push(f);
        cache.i.push(i);
        cache.o.push(o);
        cache.g.push(g);
        cache.c.push(c);
        cache.h.push(h);
    }
    let h_last = cache.h.last().unwrap();
    cache.prediction = model
        .w_y()
        .iter()
        .zip(h_last)
        .map(|(w, h)| w * h)
        .sum::<f64>()
        + model.b_y();
    cache
}

/// Exact gradients of the squared-error loss 0.5 (pred - target)^2 with
/// respect to every parameter, via backpropagation through time.
pub fn lstm_gradients(model: &LstmModel, sequence: &[f64], target: f64) -> (f64, Vec<f64>) {
    let hd = model.hidden_dim;
    let m = 1 + hd;
    let cache = lstm_forward(model, sequence);
    let mut grads = vec![0.0; model.params.len()];
    let residual = cache.prediction - target;
    let loss = 0.5 * residual * residual;

    // readout
    let wy_base = 4 * hd * m + 4 * hd;
    let h_last = cache.h.last().unwrap();
    for r in 0..hd {
        grads[wy_base + r] = residual * h_last[r];
    }
    *grads.last_mut().unwrap() = residual;

    let mut dh: Vec<f64> = model.w_y().iter().map(|w| residual * w).collect();
    let mut dc = vec![0.0; hd];

    for t in (0..sequence.len()).rev() {
        let x = cache.xs[t];
        let h_prev = &cache.h[t];
        let c_prev = &cache.c[t];
        let c = &cache.c[t + 1];
        let (f, i, o, g) = (&cache.f[t], &cache.i[t], &cache.o[t], &cache.g[t]);

        let mut dh_prev = vec![0.0; hd];
        let mut dc_prev = vec![0.0; hd];
        for r in 0..hd {
            let tanh_c = c[r].tanh();
            let do_r = dh[r] * tanh_c;
            let dc_r = dc[r] + dh[r] * o[r] * (1.0 - tanh_c * tanh_c);
            let df_r = dc_r * c_prev[r];
            let di_r = dc_r * g[r];
            let dg_r = dc_r * i[r];
            dc_prev[r] = dc_r * f[r];

            // pre-activation deltas, gate order f, i, o, c
            let deltas = [
                df_r * f[r] * (1.0 - f[r]),
                di_r * i[r] * (1.0 - i[r]),
                do_r * o[r] * (1.0 - o[r]),
                dg_r * (1.0 - g[r] * g[r]),
            ];
            for (gate, &delta) in deltas.iter().enumerate() {
                let base = gate * hd * m + r * m;
                grads[base] += delta * x;
                for k in 0..hd {
                    grads[base + 1 + k] += delta * h_prev[k];
                    dh_prev[k] += delta * model.params[base + 1 + k];
                }
                grads[4 * hd * m + gate * hd + r] += delta;
            }
        }
        dh = dh_prev;
        dc = dc_prev;
    }

    (loss, grads)
}

/// Training output: the fitted model plus per-epoch MSE in normalized units.
pub fn train_forecaster(
    series: &[f64],
    cfg: &ForecastConfig,
) -> Result<(LstmModel, Vec<f64>), ForecastError> {
    let need = cfg.window + cfg.horizon + 1;
    if series.len() < need {
        return Err(ForecastError::InsufficientData {
            len: series.len(),
            need,
        });
    }
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    let var = series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / series.len() as f64;
    let std = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
    let normalized: Vec<f64> = series.iter().map(|x| (x - mean) / std).collect();

    let mut model = LstmModel::new_random(cfg.hidden_dim, cfg.window, cfg.horizon, cfg.seed);
    model.norm_mean = mean;
    model.norm_std = std;

    let n_pairs = series.len() - cfg.window - cfg.horizon + 1;
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut sse = 0.0;
        for start in 0..n_pairs {
            let window = &normalized[start..start + cfg.window];
            let target = normalized[start + cfg.window + cfg.horizon - 1];
            let (loss, grads) = lstm_gradients(&model, window, target);
            sse += 2.0 * loss; // loss is half the squared error
            for (p, g) in model.params.iter_mut().zip(&grads) {
                *p -= cfg.lr * g;
            }
        }
        let mse = sse / n_pairs as f64;
        if !mse.is_finite() {
            return Err(ForecastError::DivergenceDetected(epoch));
        }
        loss_curve.push(mse);
    }
    Ok((model, loss_curve))
}

/// Denormalized point forecast at +horizon, clamped at zero.
pub fn predict(model: &LstmModel, recent_window: &[f64]) -> Result<f64, ForecastError> {
    if recent_window.len() != model.window {
        return Err(ForecastError::WindowMismatch {
            got: recent_window.len(),
            expected: model.window,
        });
    }
    let normalized: Vec<f64> = recent_window
        .iter()
        .map(|x| (x - model.norm_mean) / model.norm_std)
        .collect();
    let raw = lstm_forward(model, &normalized).prediction;
    Ok((raw * model.norm_std + model.norm_mean).max(0.0))
}

/// The minimal baseline: repeat the last observation.
pub fn persistence_baseline(recent_window: &[f64]) -> f64 {
    *recent_window.last().expect("window must be non-empty")
}

impl LstmModel {
    /// Flat text format: one header line, then one parameter per line.
    pub fn save_text(&self) -> String {
        let mut s = format!(
            "lstm v1 hidden={} window={} horizon={} mean={:.17e} std={:.17e}\n",
            self.hidden_dim, self.window, self.horizon, self.norm_mean, self.norm_std
        );
        for p in &self.params {
            s.push_str(&format!("{:.17e}\n", p));
        }
        s
    }

    pub fn load_text(text: &str) -> Result<LstmModel, ForecastError> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| ForecastError::Malformed("empty file".into()))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("lstm") || fields.next() != Some("v1") {
            return Err(ForecastError::Malformed("bad magic".into()));
        }
        let mut hidden = 0usize;
        let mut window = 0usize;
        let mut horizon = 0usize;
        let mut mean = 0.0;
        let mut std = 1.0;
        for kv in fields {
            let (key, value) = kv
                .split_once('=')
                .ok_or_else(|| ForecastError::Malformed(format!("bad header field {kv}")))?;
            let err = |_| ForecastError::Malformed(format!("bad value for {key}"));
            match key {
                "hidden" => hidden = value.parse().map_err(err)?,
                "window" => window = value.parse().map_err(err)?,
                "horizon" => horizon = value.parse().map_err(err)?,
                "mean" => mean = value.parse().map_err(|_| ForecastError::Malformed("bad mean".into()))?,
                "std" => std = value.parse().map_err(|_| ForecastError::Malformed("bad std".into()))?,
                _ => return Err(ForecastError::Malformed(format!("unknown key {key}"))),
            }
        }
        let params: Result<Vec<f64>, _> = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.trim()
                    .parse::<f64>()
                    .map_err(|_| ForecastError::Malformed(format!("bad parameter {l}")))
            })
            .collect();
        let params = params?;
        if params.len() != Self::param_count(hidden) {
            return Err(ForecastError::Malformed(format!(
                "expected {} parameters, got {}",
                Self::param_count(hidden),
                params.len()
            )));
        }
        Ok(LstmModel {
            hidden_dim: hidden,
            window,
            horizon,
            norm_mean: mean,
            norm_std: std,
            params,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sinusoid(n: usize, period: f64) -> Vec<f64> {
        (0..n)
            .map(|t| 100.0 + 50.0 * (2.0 * std::f64::consts::PI * t as f64 / period).sin())
            .collect()
    }

    #[test]
    fn zero_parameters_predict_bias() {
        let mut model = LstmModel::new_random(4, 5, 1, 0);
        for p in model.params_mut() {
            *p = 0.0;
        }
        *model.params_mut().last_mut().unwrap() = 7.25;
        let cache = lstm_forward(&model, &[0.3, -0.1, 0.9, 0.0, 0.5]);
        assert_eq!(cache.prediction, 7.25);
    }

    #[test]
    fn forward_is_pure() {
        let model = LstmModel::new_random(4, 5, 1, 3);
        let seq = [0.1, 0.2, -0.4, 0.8, 0.0];
        let a = lstm_forward(&model, &seq).prediction;
        let b = lstm_forward(&model, &seq).prediction;
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn zero_residual_zero_gradients() {
        let mut model = LstmModel::new_random(4, 5, 1, 1);
        // kill the readout path and place the bias exactly on the target
        let hd = 4;
        let m = hd * (1 + hd);
        let wy_base = 4 * m + 4 * hd;
        for r in 0..hd {
            model.params_mut()[wy_base + r] = 0.0;
        }
        *model.params_mut().last_mut().unwrap() = 1.5;
        let (loss, grads) = lstm_gradients(&model, &[0.1, 0.2, 0.3, 0.4, 0.5], 1.5);
        assert_eq!(loss, 0.0);
        assert!(grads.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn readout_bias_gradient_linear_in_residual() {
        let model = LstmModel::new_random(4, 5, 1, 2);
        let seq = [0.2, -0.3, 0.5, 0.1, 0.0];
        let pred = lstm_forward(&model, &seq).prediction;
        let (_, g1) = lstm_gradients(&model, &seq, pred - 1.0);
        let (_, g2) = lstm_gradients(&model, &seq, pred - 2.0);
        let b1 = *g1.last().unwrap();
        let b2 = *g2.last().unwrap();
        assert!((b2 - 2.0 * b1).abs() < 1e-12);
    }

    /// Central finite differences over every parameter, the independent
    /// oracle for the BPTT implementation.
    fn finite_difference_grads(model: &LstmModel, seq: &[f64], target: f64) -> Vec<f64> {
        let h = 1e-5;
        let mut grads = Vec::with_capacity(model.params().len());
        let mut probe = model.clone();
        for idx in 0..model.params().len() {
            let orig = probe.params()[idx];
            probe.params_mut()[idx] = orig + h;
            let up = lstm_forward(&probe, seq).prediction;
            probe.params_mut()[idx] = orig - h;
            let down = lstm_forward(&probe, seq).prediction;
            probe.params_mut()[idx] = orig;
            let loss_up = 0.5 * (up - target).powi(2);
            let loss_down = 0.5 * (down - target).powi(2);
            grads.push((loss_up - loss_down) / (2.0 * h));
        }
        grads
    }

    #[test]
    fn bptt_matches_finite_differences_many_seeds() {
        let mut worst = 0.0f64;
        for seed in 0..20u64 {
            let model = LstmModel::new_random(4, 5, 1, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let seq: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let target: f64 = rng.gen_range(-1.0..1.0);
            let (_, analytic) = lstm_gradients(&model, &seq, target);
            let numeric = finite_difference_grads(&model, &seq, target);
            for (a, n) in analytic.iter().zip(&numeric) {
                let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-4);
                worst = worst.max(rel);
            }
        }
        assert!(worst <= 1e-5, "max relative gradient error {worst}");
    }

    #[test]
    fn constant_series_learned_by_bias() {
        let series = vec![42.0; 100];
        let cfg = ForecastConfig {
            window: 10,
            horizon: 2,
            hidden_dim: 4,
            lr: 0.1,
            epochs: 30,
            seed: 0,
        };
        let (model, curve) = train_forecaster(&series, &cfg).unwrap();
        assert!(*curve.last().unwrap() <= 1e-6, "final mse {}", curve.last().unwrap());
        let forecast = predict(&model, &vec![42.0; 10]).unwrap();
        assert!((forecast - 42.0).abs() < 0.5);
    }

    #[test]
    fn sinusoid_beats_persistence() {
        let period = 60.0;
        let series = sinusoid(600, period);
        let cfg = ForecastConfig::default();
        let (model, curve) = train_forecaster(&series, &cfg).unwrap();
        let final_mse = *curve.last().unwrap();
        // persistence on a sinusoid has variance-normalized MSE 4 sin^2(pi h / T)
        let persistence_mse = 4.0 * (std::f64::consts::PI * 5.0 / period).sin().powi(2);
        assert!(final_mse <= 0.05, "final mse {final_mse}");
        assert!(final_mse < persistence_mse);
        // point forecast at a known phase
        let start = 500;
        let window = &series[start..start + cfg.window];
        let forecast = predict(&model, window).unwrap();
        let truth = series[start + cfg.window + cfg.horizon - 1];
        assert!(
            (forecast - truth).abs() / truth.abs() < 0.10,
            "forecast {forecast} vs truth {truth}"
        );
    }

    #[test]
    fn persistence_empirical_mse_matches_analytic() {
        let period = 60.0;
        let series = sinusoid(600, period);
        let mean = series.iter().sum::<f64>() / series.len() as f64;
        let var = series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / series.len() as f64;
        let horizon = 5usize;
        let mut sse = 0.0;
        let mut count = 0;
        for t in 0..series.len() - horizon {
            let err = series[t + horizon] - series[t];
            sse += err * err;
            count += 1;
        }
        let mse_normalized = sse / count as f64 / var;
        // err = sin(w(t+h)) - sin(wt) has mean square A^2 (1 - cos wh);
        // dividing by the series variance A^2/2 gives 4 sin^2(pi h / T)
        let analytic = 4.0 * (std::f64::consts::PI * horizon as f64 / period).sin().powi(2);
        assert!(
            (mse_normalized - analytic).abs() / analytic < 0.05,
            "empirical {mse_normalized} vs analytic {analytic}"
        );
    }

    #[test]
    fn persistence_returns_last() {
        assert_eq!(persistence_baseline(&[1.0, 2.0, 3.0]), 3.0);
        assert_eq!(persistence_baseline(&[5.5, 5.5]), 5.5);
    }

    #[test]
    fn training_is_deterministic() {
        let series = sinusoid(200, 40.0);
        let cfg = ForecastConfig {
            epochs: 5,
            ..ForecastConfig::default()
        };
        let (m1, c1) = train_forecaster(&series, &cfg).unwrap();
        let (m2, c2) = train_forecaster(&series, &cfg).unwrap();
        assert_eq!(c1, c2);
        assert_eq!(m1.params(), m2.params());
    }

    #[test]
    fn shift_equivariance() {
        let series = sinusoid(300, 50.0);
        let shifted: Vec<f64> = series.iter().map(|x| x + 37.0).collect();
        let cfg = ForecastConfig {
            epochs: 8,
            ..ForecastConfig::default()
        };
        let (m1, _) = train_forecaster(&series, &cfg).unwrap();
        let (m2, _) = train_forecaster(&shifted, &cfg).unwrap();
        let w1 = &series[100..100 + cfg.window];
        let w2 = &shifted[100..100 + cfg.window];
        let p1 = predict(&m1, w1).unwrap();
        let p2 = predict(&m2, w2).unwrap();
        assert!((p2 - p1 - 37.0).abs() < 1e-9, "p1 {p1} p2 {p2}");
    }

    #[test]
    fn normalization_round_trip() {
        let model = LstmModel {
            hidden_dim: 1,
            window: 1,
            horizon: 1,
            norm_mean: 12.5,
            norm_std: 3.75,
            params: vec![0.0; LstmModel::param_count(1)],
        };
        for x in [0.0, 1.0, -5.5, 123.456] {
            let normalized = (x - model.norm_mean) / model.norm_std;
            let back = normalized * model.norm_std + model.norm_mean;
            assert!((back - x).abs() < 1e-12);
        }
    }

    #[test]
    fn window_mismatch_rejected() {
        let model = LstmModel::new_random(4, 10, 1, 0);
        assert!(matches!(
            predict(&model, &[1.0; 9]),
            Err(ForecastError::WindowMismatch { got: 9, expected: 10 })
        ));
    }

    #[test]
    fn insufficient_data_rejected() {
        let cfg = ForecastConfig::default();
        assert!(matches!(
            train_forecaster(&[1.0; 10], &cfg),
            Err(ForecastError::InsufficientData { .. })
        ));
    }

    #[test]
    fn save_load_round_trip() {
        let series = sinusoid(200, 40.0);
        let cfg = ForecastConfig {
            epochs: 3,
            ..ForecastConfig::default()
        };
        let (model, _) = train_forecaster(&series, &cfg).unwrap();
        let loaded = LstmModel::load_text(&model.save_text()).unwrap();
        assert_eq!(loaded, model);
    }
}
