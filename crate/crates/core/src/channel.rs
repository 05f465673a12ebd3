//! Client/parameter-server link budget.
//!
//! Median path loss follows the Okumura-Hata model; every realization adds
//! log-normal shadowing and Nakagami-m fading, where the fading power is
//! `Gamma(shape = m, mean = omega)`. SNRs are plain dB sums. Model weights
//! crossing a link pick up white Gaussian noise whose power is the per-layer
//! signal power divided by the linear SNR.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fl::ModelParams;
use crate::Scalar;

/// Distances below this (km) are clamped before evaluating the Hata formula.
pub const MIN_DISTANCE_KM: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Environment {
    UrbanSmallCity,
    Suburban,
}

impl FromStr for Environment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "urban_small_city" => Ok(Self::UrbanSmallCity),
            "suburban" => Ok(Self::Suburban),
            other => Err(Error::Config(format!("unknown environment {other:?}"))),
        }
    }
}

impl fmt::Display for Environment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::UrbanSmallCity => "urban_small_city",
            Self::Suburban => "suburban",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub carrier_freq_mhz: f64,
    pub bs_antenna_height_m: f64,
    pub ue_antenna_height_m: f64,
    pub environment: Environment,
    pub shadow_sigma_db: f64,
    pub nakagami_m: f64,
    pub nakagami_omega: f64,
    pub ptx_dl_dbm: f64,
    pub ptx_ul_dbm: f64,
    pub ps_gain_dbi: f64,
    pub noise_floor_dbm: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            carrier_freq_mhz: 900.0,
            bs_antenna_height_m: 30.0,
            ue_antenna_height_m: 1.5,
            environment: Environment::UrbanSmallCity,
            shadow_sigma_db: 6.0,
            nakagami_m: 2.0,
            nakagami_omega: 1.0,
            ptx_dl_dbm: 15.0,
            ptx_ul_dbm: 10.0,
            ps_gain_dbi: 15.0,
            noise_floor_dbm: -115.0,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(150.0..=1500.0).contains(&self.carrier_freq_mhz) {
            return fail(format!(
                "carrier_freq_mhz {} outside the Okumura-Hata range [150, 1500]",
                self.carrier_freq_mhz
            ));
        }
        if !(self.bs_antenna_height_m > 0.0 && self.ue_antenna_height_m > 0.0) {
            return fail("antenna heights must be positive".into());
        }
        if self.nakagami_m.is_nan() || self.nakagami_m < 0.5 {
            return fail(format!("nakagami_m must be >= 0.5, got {}", self.nakagami_m));
        }
        if !(self.nakagami_omega > 0.0 && self.nakagami_omega.is_finite()) {
            return fail(format!("nakagami_omega must be > 0, got {}", self.nakagami_omega));
        }
        if !(self.shadow_sigma_db >= 0.0 && self.shadow_sigma_db.is_finite()) {
            return fail(format!("shadow_sigma_db must be >= 0, got {}", self.shadow_sigma_db));
        }
        for (name, v) in [
            ("ptx_dl_dbm", self.ptx_dl_dbm),
            ("ptx_ul_dbm", self.ptx_ul_dbm),
            ("ps_gain_dbi", self.ps_gain_dbi),
            ("noise_floor_dbm", self.noise_floor_dbm),
        ] {
            if !v.is_finite() {
                return fail(format!("{name} must be finite"));
            }
        }
        Ok(())
    }
}

/// One draw of a client/PS link. All quantities in dB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelRealization {
    pub path_loss: f64,
    pub shadowing: f64,
    pub fading: f64,
    /// `-path_loss + shadowing + fading`
    pub h_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Downlink,
    Uplink,
}

/// Validated channel model.
#[derive(Debug, Clone)]
pub struct LinkBudget {
    cfg: ChannelConfig,
    fading: Gamma<f64>,
}

impl LinkBudget {
    pub fn new(cfg: ChannelConfig) -> Result<Self> {
        cfg.validate()?;
        let fading = Gamma::new(cfg.nakagami_m, cfg.nakagami_omega / cfg.nakagami_m)
            .map_err(|e| Error::Config(format!("nakagami parameters: {e}")))?;
        Ok(Self { cfg, fading })
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.cfg
    }

    /// Median Okumura-Hata path loss in dB at `distance_km`.
    pub fn path_loss(&self, distance_km: f64) -> f64 {
        okumura_hata(distance_km, &self.cfg)
    }

    /// Draws shadowing (one standard normal) then fading power (Gamma).
    pub fn sample<R: Rng + ?Sized>(&self, distance_km: f64, rng: &mut R) -> ChannelRealization {
        let path_loss = self.path_loss(distance_km);
        let z: f64 = StandardNormal.sample(rng);
        let shadowing = self.cfg.shadow_sigma_db * z;
        let power = self.fading.sample(rng).max(f64::MIN_POSITIVE);
        let fading = 10.0 * power.log10();
        ChannelRealization {
            path_loss,
            shadowing,
            fading,
            h_db: -path_loss + shadowing + fading,
        }
    }

    /// `ptx + G_tx + h_dB - N_dB`.
    pub fn snr_db(&self, ptx_dbm: f64, realization: &ChannelRealization) -> f64 {
        snr_db(ptx_dbm, realization, &self.cfg)
    }

    pub fn link_snr_db(&self, direction: Direction, realization: &ChannelRealization) -> f64 {
        let ptx = match direction {
            Direction::Downlink => self.cfg.ptx_dl_dbm,
            Direction::Uplink => self.cfg.ptx_ul_dbm,
        };
        self.snr_db(ptx, realization)
    }
}

/// Okumura-Hata median path loss (dB). Distances below 10 m are clamped.
pub fn okumura_hata(distance_km: f64, cfg: &ChannelConfig) -> f64 {
    let d = distance_km.max(MIN_DISTANCE_KM);
    let f = cfg.carrier_freq_mhz;
    let hb = cfg.bs_antenna_height_m;
    let hm = cfg.ue_antenna_height_m;
    let log_f = f.log10();
    let mobile_correction = (1.1 * log_f - 0.7) * hm - (1.56 * log_f - 0.8);
    let urban = 69.55 + 26.16 * log_f - 13.82 * hb.log10() - mobile_correction
        + (44.9 - 6.55 * hb.log10()) * d.log10();
    match cfg.environment {
        Environment::UrbanSmallCity => urban,
        Environment::Suburban => urban - 2.0 * (f / 28.0).log10().powi(2) - 5.4,
    }
}

pub fn snr_db(ptx_dbm: f64, realization: &ChannelRealization, cfg: &ChannelConfig) -> f64 {
    ptx_dbm + cfg.ps_gain_dbi + realization.h_db - cfg.noise_floor_dbm
}

/// Adds `N(0, E[theta^2] / gamma)` to every element, with the mean square and
/// the noise drawn independently for each layer. `snr_db` of `+inf` is noiseless.
pub fn perturb_weights<S: Scalar, R: Rng + ?Sized>(
    params: &ModelParams<S>,
    snr_db: f64,
    rng: &mut R,
) -> ModelParams<S> {
    let mut out = params.clone();
    let gamma = 10f64.powf(snr_db / 10.0);
    for layer in out.layers_mut() {
        if layer.is_empty() {
            continue;
        }
        let mean_square =
            layer.iter().map(|v| v.to_f64_lossy().powi(2)).sum::<f64>() / layer.len() as f64;
        let sigma = (mean_square / gamma).sqrt();
        if sigma.is_nan() || sigma <= 0.0 {
            continue;
        }
        for v in layer.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v += S::from_f64_lossy(sigma * z);
        }
    }
    out
}
