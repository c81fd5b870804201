//! Loss-resilient adaptive frame rate.
//!
//! The MLLM consumes one frame every `1/R_M` seconds, so a sender running at
//! `R_t = K·R_M` ships `K` candidate frames per sampling slot. Extra frames
//! act as redundancy: the slot succeeds if any one of them arrives intact.
//! The controller picks the smallest `K` for which that probability reaches
//! `1 − ε` under the current per-packet loss estimate.

use crate::error::{Error, Result};

pub const DEFAULT_MLLM_RATE: f64 = 2.0;
pub const DEFAULT_EPSILON: f64 = 0.001;
pub const DEFAULT_R_MAX: f64 = 30.0;
pub const DEFAULT_ALPHA: f64 = 0.3;
pub const DEFAULT_EPOCH_MS: f64 = 1000.0;

/// Probability that all `kappa` packets of a frame survive i.i.d. loss `p`.
///
/// `kappa` may be fractional (an epoch average).
pub fn frame_success_prob(p: f64, kappa: f64) -> f64 {
    (1.0 - p).powf(kappa).clamp(0.0, 1.0)
}

/// Probability that at least one of `k` frames arrives intact.
pub fn group_success_prob(frame_success: f64, k: u32) -> f64 {
    (1.0 - (1.0 - frame_success).powf(f64::from(k))).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateDecision {
    /// Selected frame rate, an integer multiple of the MLLM rate.
    pub rate: f64,
    /// Frames per MLLM sampling slot.
    pub k: u32,
    /// Set when the residual target cannot be met below the rate cap.
    pub residual_violation: bool,
}

fn check_unit(name: &'static str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::param(name, format!("{v} is outside [0, 1]")))
    }
}

/// Minimum frame rate whose slot success probability is at least `1 − eps`.
///
/// Returns `r_m · max(1, ⌈ln ε / ln(1 − (1−p)^κ)⌉)` capped at the largest
/// multiple of `r_m` not above `r_max`. A lossless link gives `K = 1`. When
/// the target is out of reach under the cap (including `p = 1`), the capped
/// rate is returned with `residual_violation` set.
pub fn select_frame_rate(p: f64, kappa: f64, r_m: f64, eps: f64, r_max: f64) -> Result<RateDecision> {
    check_unit("p", p)?;
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(Error::param("kappa", format!("{kappa} is not a positive real")));
    }
    if !(r_m.is_finite() && r_m > 0.0) {
        return Err(Error::param("mllm_rate", format!("{r_m} is not a positive rate")));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::param("epsilon", format!("{eps} is outside (0, 1)")));
    }
    if r_max.is_nan() || r_max < r_m {
        return Err(Error::param("r_max", format!("{r_max} is below mllm_rate {r_m}")));
    }

    let k_cap = ((r_max / r_m) + 1e-9).floor().max(1.0);
    let capped = |k_cap: f64| RateDecision {
        rate: r_m * k_cap,
        k: k_cap.min(f64::from(u32::MAX)) as u32,
        residual_violation: true,
    };

    let p_f = frame_success_prob(p, kappa);
    if p_f >= 1.0 {
        return Ok(RateDecision {
            rate: r_m,
            k: 1,
            residual_violation: false,
        });
    }
    let miss = 1.0 - p_f;
    if p_f <= 0.0 || miss >= 1.0 {
        return Ok(capped(k_cap));
    }

    let k_real = (eps.ln() / miss.ln()).ceil().max(1.0);
    if k_real > k_cap {
        return Ok(capped(k_cap));
    }
    let mut k = k_real as u32;

    // The closed form can be off by one when the ratio lands within rounding
    // of an integer; settle on the exact minimum of the group probability.
    let target = 1.0 - eps;
    while k > 1 && group_success_prob(p_f, k - 1) >= target {
        k -= 1;
    }
    while group_success_prob(p_f, k) < target {
        if f64::from(k + 1) > k_cap {
            return Ok(capped(k_cap));
        }
        k += 1;
    }

    Ok(RateDecision {
        rate: r_m * f64::from(k),
        k,
        residual_violation: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossEstimate {
    pub p: f64,
    pub sample_count: u64,
}

impl LossEstimate {
    pub fn new(p: f64) -> Result<Self> {
        check_unit("p", p)?;
        Ok(Self { p, sample_count: 0 })
    }
}

/// EWMA of per-epoch loss ratios. An epoch without feedback leaves the
/// estimate as it was.
pub fn update_loss_estimate(prev: LossEstimate, acked: u64, lost: u64, alpha: f64) -> Result<LossEstimate> {
    check_unit("alpha", alpha)?;
    let total = acked + lost;
    if total == 0 {
        return Ok(prev);
    }
    let ratio = lost as f64 / total as f64;
    Ok(LossEstimate {
        p: (alpha * ratio + (1.0 - alpha) * prev.p).clamp(0.0, 1.0),
        sample_count: prev.sample_count + total,
    })
}

/// Mean packets per frame for the given frame sizes.
pub fn update_kappa(frame_sizes_bits: &[f64], mtu_payload_bits: f64) -> Result<f64> {
    if frame_sizes_bits.is_empty() {
        return Err(Error::EmptyInput("frame sizes"));
    }
    if !(mtu_payload_bits.is_finite() && mtu_payload_bits > 0.0) {
        return Err(Error::param("mtu_payload_bits", "must be a positive real"));
    }
    let mut packets = 0u64;
    for &size in frame_sizes_bits {
        if !(size.is_finite() && size > 0.0) {
            return Err(Error::param("frame size", format!("{size} is not a positive size")));
        }
        packets += crate::transport::packet_count(size, mtu_payload_bits) as u64;
    }
    Ok(packets as f64 / frame_sizes_bits.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig {
    pub mllm_rate: f64,
    pub epsilon: f64,
    pub r_max: f64,
    pub alpha: f64,
    pub epoch_ms: f64,
    pub initial_loss: f64,
    pub initial_kappa: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            mllm_rate: DEFAULT_MLLM_RATE,
            epsilon: DEFAULT_EPSILON,
            r_max: DEFAULT_R_MAX,
            alpha: DEFAULT_ALPHA,
            epoch_ms: DEFAULT_EPOCH_MS,
            initial_loss: 0.0,
            initial_kappa: 1.0,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mllm_rate.is_finite() && self.mllm_rate >= 1.0) {
            return Err(Error::param("mllm_rate", "must be at least 1 frame/s"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::param("epsilon", "must lie in (0, 1)"));
        }
        if !(self.r_max.is_finite() && self.r_max >= self.mllm_rate) {
            return Err(Error::param("r_max", "must be at least mllm_rate"));
        }
        check_unit("alpha", self.alpha)?;
        if !(self.epoch_ms.is_finite() && self.epoch_ms > 0.0) {
            return Err(Error::param("epoch_ms", "must be positive"));
        }
        check_unit("initial_loss", self.initial_loss)?;
        if !(self.initial_kappa.is_finite() && self.initial_kappa >= 1.0) {
            return Err(Error::param("initial_kappa", "must be at least 1"));
        }
        Ok(())
    }
}

/// Per-epoch frame-rate state machine. Owned by a single caller.
#[derive(Debug, Clone)]
pub struct RateController {
    config: ControllerConfig,
    loss: LossEstimate,
    kappa: f64,
    decision: RateDecision,
}

impl RateController {
    pub fn new(config: ControllerConfig) -> Result<Self> {
        config.validate()?;
        let loss = LossEstimate::new(config.initial_loss)?;
        let decision = select_frame_rate(
            loss.p,
            config.initial_kappa,
            config.mllm_rate,
            config.epsilon,
            config.r_max,
        )?;
        Ok(Self {
            config,
            loss,
            kappa: config.initial_kappa,
            decision,
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn loss(&self) -> LossEstimate {
        self.loss
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn decision(&self) -> RateDecision {
        self.decision
    }

    /// Folds one epoch of feedback in and re-selects the frame rate.
    ///
    /// `frame_sizes_bits` are the frames sent during the epoch; when empty,
    /// the previous packets-per-frame average is kept.
    pub fn on_epoch(
        &mut self,
        acked: u64,
        lost: u64,
        frame_sizes_bits: &[f64],
        mtu_payload_bits: f64,
    ) -> Result<RateDecision> {
        self.loss = update_loss_estimate(self.loss, acked, lost, self.config.alpha)?;
        if !frame_sizes_bits.is_empty() {
            self.kappa = update_kappa(frame_sizes_bits, mtu_payload_bits)?;
        }
        self.decision = select_frame_rate(
            self.loss.p,
            self.kappa,
            self.config.mllm_rate,
            self.config.epsilon,
            self.config.r_max,
        )?;
        Ok(self.decision)
    }
}
