//! Closed-form path-loss and link-budget computations.
//!
//! Two models are provided: COST-231 Hata for urban macrocellular links
//! (1500-2000 MHz, strict validity-domain enforcement) and free-space path
//! loss for short mesh-node links. All powers are in dBm and all gains and
//! losses in dB; linear watts appear only at the KPI aggregation boundary.
//!
//! The COST-231 model carries a ~3 dB empirical error band when base-station
//! antennas sit above surrounding rooftops; that error is a documented caveat
//! here, not sampled as noise. Optional shadowing lives in the engine.

use thiserror::Error;

/// Propagation environment for the COST-231 correction constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Environment {
    /// Medium-sized city / suburban, C_m = 0 dB.
    MediumCity,
    /// Metropolitan center, C_m = 3 dB.
    Metropolitan,
}

impl Environment {
    pub fn correction_db(self) -> f64 {
        match self {
            Environment::MediumCity => 0.0,
            Environment::Metropolitan => 3.0,
        }
    }
}

/// Inputs to the COST-231 Hata path-loss model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLossParams {
    /// Carrier frequency in MHz, valid 1500-2000.
    pub f_mhz: f64,
    /// Base-station antenna height in m, valid 30-200.
    pub h_bs_m: f64,
    /// Mobile-station antenna height in m, valid 1-10.
    pub h_ms_m: f64,
    /// Link distance in km, valid 1-20.
    pub d_km: f64,
    pub environment: Environment,
}

/// Transmit-side and receive-side terms of a single link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub p_tx_dbm: f64,
    pub g_tx_dbi: f64,
    pub g_rx_dbi: f64,
    pub loss_db: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum PropagationError {
    #[error("{field} = {value} outside COST-231 domain [{min}, {max}]")]
    Domain {
        field: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("distance {0} m below 1 m minimum (near-field not modeled)")]
    NonPositiveInput(f64),
    #[error("frequency must be positive, got {0} MHz")]
    NonPositiveFrequency(f64),
    #[error("d_far ({d_far} m) must exceed d_near ({d_near} m)")]
    Order { d_far: f64, d_near: f64 },
}

const F_RANGE: (f64, f64) = (1500.0, 2000.0);
const H_BS_RANGE: (f64, f64) = (30.0, 200.0);
const H_MS_RANGE: (f64, f64) = (1.0, 10.0);
const D_KM_RANGE: (f64, f64) = (1.0, 20.0);

fn check_range(
    field: &'static str,
    value: f64,
    (min, max): (f64, f64),
) -> Result<(), PropagationError> {
    if !value.is_finite() || value < min || value > max {
        return Err(PropagationError::Domain {
            field,
            value,
            min,
            max,
        });
    }
    Ok(())
}

impl PathLossParams {
    pub fn validate(&self) -> Result<(), PropagationError> {
        check_range("f_mhz", self.f_mhz, F_RANGE)?;
        check_range("h_bs_m", self.h_bs_m, H_BS_RANGE)?;
        check_range("h_ms_m", self.h_ms_m, H_MS_RANGE)?;
        check_range("d_km", self.d_km, D_KM_RANGE)?;
        Ok(())
    }
}

/// Mobile-station height correction a(h_MS).
///
/// The small/medium-city Hata form is used for both environments:
/// a(h) = (1.1 log10 f - 0.7) h - (1.56 log10 f - 0.8). The large-city
/// variant is out of scope for the supported environments.
pub fn mobile_height_correction(
    f_mhz: f64,
    h_ms_m: f64,
    _environment: Environment,
) -> Result<f64, PropagationError> {
    check_range("f_mhz", f_mhz, F_RANGE)?;
    check_range("h_ms_m", h_ms_m, H_MS_RANGE)?;
    let lf = f_mhz.log10();
    Ok((1.1 * lf - 0.7) * h_ms_m - (1.56 * lf - 0.8))
}

/// COST-231 Hata urban macrocellular path loss in dB.
pub fn cost231_path_loss(params: &PathLossParams) -> Result<f64, PropagationError> {
    params.validate()?;
    let a = mobile_height_correction(params.f_mhz, params.h_ms_m, params.environment)?;
    let lhb = params.h_bs_m.log10();
    Ok(46.3 + 33.9 * params.f_mhz.log10() - 13.82 * lhb - a
        + (44.9 - 6.55 * lhb) * params.d_km.log10()
        + params.environment.correction_db())
}

/// Free-space path loss in dB for distance in meters and frequency in MHz.
///
/// Distances below 1 m are rejected: the formula diverges in the near field.
pub fn fspl(d_m: f64, f_mhz: f64) -> Result<f64, PropagationError> {
    if !(d_m >= 1.0) {
        return Err(PropagationError::NonPositiveInput(d_m));
    }
    if !(f_mhz > 0.0) {
        return Err(PropagationError::NonPositiveFrequency(f_mhz));
    }
    Ok(20.0 * d_m.log10() + 20.0 * f_mhz.log10() - 27.55)
}

/// Received power in dBm: p_tx + g_tx + g_rx - loss.
pub fn received_power(budget: &LinkBudget) -> f64 {
    budget.p_tx_dbm + budget.g_tx_dbi + budget.g_rx_dbi - budget.loss_db
}

/// Link-budget improvement from moving a receiver closer to its server.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProximityGain {
    pub delta_db: f64,
    pub linear_factor: f64,
}

/// FSPL delta between a far and a near link at the same frequency.
///
/// Equals 20 log10(d_far/d_near); frequency cancels but is validated.
pub fn proximity_gain_db(
    d_far_m: f64,
    d_near_m: f64,
    f_mhz: f64,
) -> Result<ProximityGain, PropagationError> {
    if d_far_m <= d_near_m {
        return Err(PropagationError::Order {
            d_far: d_far_m,
            d_near: d_near_m,
        });
    }
    let delta_db = fspl(d_far_m, f_mhz)? - fspl(d_near_m, f_mhz)?;
    Ok(ProximityGain {
        delta_db,
        linear_factor: 10f64.powf(delta_db / 10.0),
    })
}

/// dBm to milliwatts.
pub fn dbm_to_mw(p_dbm: f64) -> f64 {
    10f64.powf(p_dbm / 10.0)
}

/// dBm to watts.
pub fn dbm_to_w(p_dbm: f64) -> f64 {
    dbm_to_mw(p_dbm) / 1000.0
}
