//! Streaming e-process kernels for a single ordered model pair `(i, j)`.
//!
//! Two kernels are provided. The product kernel
//! `E_t = prod_r (1 + lambda_r d_r)` is an e-process for the strong
//! hypothesis that the conditional expected loss difference is nonpositive
//! at every round. The empirical-Bernstein kernel
//! `E_t = exp{lambda * sum_r d_r - psi_{E,c}(lambda) * V_t}` with
//! `V_t = sum_r (d_r - gamma_r)^2` is an e-process for the uniformly weak
//! hypothesis that the running average of those conditional means stays
//! nonpositive. Both are kept in log space; e-values grow geometrically and
//! overflow otherwise.

use crate::error::{Result, SmcsError};

/// Absolute slack allowed when checking `|d| <= c/2` on analytically tight
/// bounds.
pub const BOUND_TOL: f64 = 1e-9;

/// Predictor for the centering sequence `gamma_t` in the variance process.
/// Predictability is required: `gamma_{t+1}` may only use data through `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaMode {
    /// `gamma_t = 0` for all rounds; retained for reproducibility tests.
    Zero,
    /// Running mean of past differences, clipped to `[-c/2, c/2]`. Shrinks
    /// the variance process and tightens bounds.
    RunningMean,
}

/// Rule choosing the betting fraction `lambda_t` each round.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case", tag = "scheme")]
pub enum BettingScheme {
    /// `lambda_t = kappa / c_t`; the default `kappa = 1/2` bets half of the
    /// admissible range, i.e. `lambda = (2c)^{-1}`.
    FixedFraction { kappa: f64 },
    /// The adaptive scheme for quantile-score panels:
    /// `lambda_t = 1 / (K_t c_t + epsilon)` where `K_t >= 1` shrinks when
    /// recent evidence runs against the null and grows otherwise, and a
    /// centrality factor in `[1, 2]` offsets the `max{tau, 1-tau}` term in
    /// the bound.
    CovidAdaptive { tau: f64, epsilon: f64 },
}

impl BettingScheme {
    pub fn fixed_half() -> Self {
        BettingScheme::FixedFraction { kappa: 0.5 }
    }

    /// Next betting fraction given the predictable bound `c_t` and the most
    /// recent observed difference. Returns 0 when `c_t = 0` under the fixed
    /// fraction scheme; the adaptive scheme relies on its epsilon safeguard
    /// (the round carries no evidence anyway since `d = 0` when `c = 0`).
    pub fn lambda_next(&self, c_t: f64, last_d: f64) -> f64 {
        match *self {
            BettingScheme::FixedFraction { kappa } => {
                if c_t == 0.0 {
                    0.0
                } else {
                    kappa / c_t
                }
            }
            BettingScheme::CovidAdaptive { tau, epsilon } => {
                let centrality = (2.0 - (tau - 0.5).abs()) / (1.0 + (tau - 0.5).abs());
                let momentum = (1.5 * std::f64::consts::PI + (-last_d).atan())
                    / std::f64::consts::PI;
                let k = centrality * momentum;
                1.0 / (k * c_t + epsilon)
            }
        }
    }
}

/// The empirical-Bernstein exponent `psi_{E,c}(lambda) =
/// (-log(1 - c*lambda) - c*lambda) / c^2`, defined for `0 <= lambda < 1/c`.
pub fn psi_e(c: f64, lambda: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(SmcsError::Domain(format!("psi_e needs c > 0, got {c}")));
    }
    if !(0.0..1.0 / c).contains(&lambda) {
        return Err(SmcsError::Domain(format!(
            "psi_e needs 0 <= lambda < 1/c, got lambda={lambda}, c={c}"
        )));
    }
    Ok(((-(1.0 - c * lambda).ln()) - c * lambda) / (c * c))
}

/// All per-pair accumulators for one ordered pair `(i, j)`.
#[derive(Debug, Clone)]
pub struct PairState {
    t: u64,
    log_e: f64,
    sum_d: f64,
    v: f64,
    gamma_mode: GammaMode,
    /// Current predictable centering value (to be used for the *next* d).
    gamma: f64,
    /// Running mean of observed differences, pre-clipping.
    d_mean: f64,
    n_obs: u64,
    last_d: f64,
}

impl PairState {
    pub fn new(gamma_mode: GammaMode) -> Self {
        PairState {
            t: 0,
            log_e: 0.0,
            sum_d: 0.0,
            v: 0.0,
            gamma_mode,
            gamma: 0.0,
            d_mean: 0.0,
            n_obs: 0,
            last_d: 0.0,
        }
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn log_e(&self) -> f64 {
        self.log_e
    }

    pub fn sum_d(&self) -> f64 {
        self.sum_d
    }

    pub fn variance_process(&self) -> f64 {
        self.v
    }

    pub fn last_d(&self) -> f64 {
        self.last_d
    }

    /// Running average of the observed loss differences.
    pub fn delta_hat(&self) -> f64 {
        if self.t == 0 {
            0.0
        } else {
            self.sum_d / self.t as f64
        }
    }

    fn check_bound(&self, d: f64, half_c: f64) -> Result<()> {
        if d.abs() <= half_c + BOUND_TOL {
            Ok(())
        } else {
            Err(SmcsError::BoundViolation {
                t: self.t + 1,
                i: 0,
                j: 0,
                d: d.abs(),
                half_c,
            })
        }
    }

    /// A round carrying no evidence for this pair (identical forecasts, or a
    /// skipped model under the freeze policy does *not* go through here —
    /// freeze leaves `t` untouched). The round still counts towards `t`.
    pub fn no_evidence_round(&mut self) {
        self.t += 1;
        self.last_d = 0.0;
    }

    /// Product-kernel update: `log E += log(1 + lambda * d)`.
    /// Requires `|d| <= c_t/2` (within tolerance) and `0 <= lambda <= 1/c_t`,
    /// which keeps the factor at or above 1/2.
    pub fn strong_update(&mut self, d: f64, c_t: f64, lambda: f64) -> Result<()> {
        if c_t < 0.0 {
            return Err(SmcsError::Domain(format!("negative bound c_t={c_t}")));
        }
        if c_t == 0.0 {
            self.check_bound(d, 0.0)?;
            self.no_evidence_round();
            return Ok(());
        }
        self.check_bound(d, c_t / 2.0)?;
        if !(0.0..=1.0 / c_t + BOUND_TOL).contains(&lambda) {
            return Err(SmcsError::Domain(format!(
                "strong kernel needs 0 <= lambda <= 1/c, got lambda={lambda}, c={c_t}"
            )));
        }
        self.log_e += (1.0 + lambda * d).ln();
        self.sum_d += d;
        self.t += 1;
        self.last_d = d;
        Ok(())
    }

    /// Empirical-Bernstein update with a fixed bound `c` and fixed `lambda`.
    pub fn bernstein_update(&mut self, d: f64, lambda: f64, c: f64) -> Result<()> {
        let psi = psi_e(c, lambda)?;
        self.check_bound(d, c / 2.0)?;
        let gamma = self.gamma;
        let dev = d - gamma;
        self.log_e += lambda * d - psi * dev * dev;
        self.v += dev * dev;
        self.sum_d += d;
        self.t += 1;
        self.last_d = d;
        // Advance the predictable centering using data through this round.
        self.n_obs += 1;
        self.d_mean += (d - self.d_mean) / self.n_obs as f64;
        self.gamma = match self.gamma_mode {
            GammaMode::Zero => 0.0,
            GammaMode::RunningMean => self.d_mean.clamp(-c / 2.0, c / 2.0),
        };
        Ok(())
    }

    /// The supermartingale family `M_t(x) = exp{lambda * sum_d - lambda*t*x
    /// - psi_{E,c}(lambda) * V_t}`, strictly decreasing in `x`.
    pub fn supermartingale_at(&self, x: f64, lambda: f64, c: f64) -> Result<f64> {
        let psi = psi_e(c, lambda)?;
        let exponent = lambda * self.sum_d - lambda * self.t as f64 * x - psi * self.v;
        Ok(exponent.clamp(-745.0, 709.0).exp())
    }

    /// Time-uniform lower confidence bound for the running average of
    /// conditional mean differences:
    /// `delta_hat - (psi*V + log(1/alpha)) / (lambda*t)`, clipped at `-c/2`.
    pub fn lower_conf_bound(&self, lambda: f64, c: f64, alpha: f64) -> Result<f64> {
        if self.t == 0 {
            return Err(SmcsError::State(
                "lower_conf_bound needs at least one round".into(),
            ));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(SmcsError::Domain(format!("alpha must be in (0,1), got {alpha}")));
        }
        let psi = psi_e(c, lambda)?;
        let t = self.t as f64;
        let val = self.delta_hat() - (psi * self.v + (1.0 / alpha).ln()) / (lambda * t);
        Ok(val.max(-c / 2.0))
    }
}
