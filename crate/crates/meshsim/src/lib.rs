//! System-level simulator for AI-driven low-power wireless mesh networks.
//!
//! Modules:
//! - [`propagation`]: COST-231 Hata and free-space path loss, link budgets
//! - [`mesh`]: node placement, interference matrix, spatial-reuse zones
//! - [`powerctl`]: RL transmit-power control with a brute-force oracle
//! - [`forecast`]: from-scratch LSTM load forecasting plus persistence
//! - [`traffic`]: synthetic demand with hotspots, diurnal cycles, surges
//! - [`sustain`]: energy/CO2/cost KPI arithmetic and scenario presets
//! - [`engine`]: the tick loop and the macro-vs-mesh comparison harness
//! - [`config`]: flat key-value scenario files and run manifests

pub mod config;
pub mod engine;
pub mod forecast;
pub mod mesh;
pub mod powerctl;
pub mod propagation;
pub mod sustain;
pub mod traffic;
