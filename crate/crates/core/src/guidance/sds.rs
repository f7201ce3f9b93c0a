use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Capability, DenoiseRequest, GuidanceError, GuidanceProvider, GuidanceResult, OracleHints, Tensor};

/// Cumulative signal levels `alpha_bar[t]` of a diffusion forward process.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    /// Betas linear in square root between `beta_start` and `beta_end`.
    pub fn scaled_linear(steps: usize, beta_start: f64, beta_end: f64) -> GuidanceResult<Self> {
        if steps < 2 || !(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0) {
            return Err(GuidanceError::Config(format!(
                "invalid schedule: {steps} steps, beta {beta_start}..{beta_end}"
            )));
        }
        let (s0, s1) = (beta_start.sqrt(), beta_end.sqrt());
        let mut alpha_bar = Vec::with_capacity(steps);
        let mut acc = 1.0;
        for i in 0..steps {
            let s = s0 + (s1 - s0) * i as f64 / (steps - 1) as f64;
            acc *= 1.0 - s * s;
            alpha_bar.push(acc);
        }
        Ok(Self { alpha_bar })
    }

    pub fn from_alpha_bar(alpha_bar: Vec<f64>) -> GuidanceResult<Self> {
        let ok = !alpha_bar.is_empty()
            && alpha_bar.iter().all(|&a| a > 0.0 && a < 1.0)
            && alpha_bar.windows(2).all(|w| w[0] > w[1]);
        if !ok {
            return Err(GuidanceError::Config(
                "alpha_bar must be strictly decreasing inside (0, 1)".into(),
            ));
        }
        Ok(Self { alpha_bar })
    }

    pub fn steps(&self) -> usize {
        self.alpha_bar.len()
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self::scaled_linear(1000, 8.5e-4, 1.2e-2).expect("valid default schedule")
    }
}

/// `sqrt(ab) x + sqrt(1 - ab) eps`.
pub fn add_noise(x: &Tensor, t: usize, eps: &Tensor, schedule: &NoiseSchedule) -> GuidanceResult<Tensor> {
    eps.ensure_shape("noise", &x.shape)?;
    if t >= schedule.steps() {
        return Err(GuidanceError::Config(format!(
            "timestep {t} outside [0, {})",
            schedule.steps()
        )));
    }
    let ab = schedule.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    let data = x.data.iter().zip(&eps.data).map(|(x, e)| a * x + b * e).collect();
    Ok(Tensor {
        shape: x.shape.clone(),
        data,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum WeightMode {
    One,
    OneMinusAlphaBar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct SdsConfig {
    pub t_min: f64,
    pub t_max: f64,
    pub weight_mode: WeightMode,
    pub guidance_scale: f64,
}

impl Default for SdsConfig {
    fn default() -> Self {
        Self {
            t_min: 0.02,
            t_max: 0.98,
            weight_mode: WeightMode::OneMinusAlphaBar,
            guidance_scale: 100.0,
        }
    }
}

impl SdsConfig {
    pub fn validate(&self) -> GuidanceResult<()> {
        if !(0.0 < self.t_min && self.t_min < self.t_max && self.t_max < 1.0) {
            return Err(GuidanceError::Config(format!(
                "need 0 < tMin < tMax < 1, got {} and {}",
                self.t_min, self.t_max
            )));
        }
        if !(self.guidance_scale >= 1.0) {
            return Err(GuidanceError::Config(format!(
                "guidance scale {} must be at least 1",
                self.guidance_scale
            )));
        }
        Ok(())
    }

    /// Inclusive timestep range `[round(tMin T), round(tMax T)]`, clipped to the schedule.
    pub fn timestep_range(&self, schedule: &NoiseSchedule) -> (usize, usize) {
        let n = schedule.steps() as f64;
        let lo = (self.t_min * n).round() as usize;
        let hi = ((self.t_max * n).round() as usize).min(schedule.steps() - 1);
        (lo.min(hi), hi)
    }

    pub fn weight(&self, schedule: &NoiseSchedule, t: usize) -> f64 {
        match self.weight_mode {
            WeightMode::One => 1.0,
            WeightMode::OneMinusAlphaBar => 1.0 - schedule.alpha_bar(t),
        }
    }
}

/// One SDS draw: the gradient with respect to the clean latent and the timestep used.
#[derive(Debug, Clone, PartialEq)]
pub struct SdsSample {
    pub gradient: Tensor,
    pub t: usize,
}

/// Standard normal noise rounded to `f32`, the precision it would have on the wire.
pub fn sample_noise<R: Rng + ?Sized>(rng: &mut R, shape: Vec<usize>) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.sample(StandardNormal);
            v as f32 as f64
        })
        .collect();
    Tensor { shape, data }
}

/// `w(t) (eps_hat - eps)` for a timestep from `t_rng` and noise from `noise_rng`.
#[allow(clippy::too_many_arguments)]
pub fn sds_gradient<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    x: &Tensor,
    prompt: &str,
    provider: &dyn GuidanceProvider,
    config: &SdsConfig,
    schedule: &NoiseSchedule,
    t_rng: &mut R1,
    noise_rng: &mut R2,
    hints: OracleHints,
) -> GuidanceResult<SdsSample> {
    config.validate()?;
    provider.require(Capability::Denoise)?;
    let spec = provider.latent_spec();
    x.ensure_shape("latent", &spec.shape())?;
    let (lo, hi) = config.timestep_range(schedule);
    let t = t_rng.gen_range(lo..=hi);
    let eps = sample_noise(noise_rng, x.shape.clone());
    let x_t = add_noise(x, t, &eps, schedule)?;
    let request = DenoiseRequest {
        latent: x_t,
        t,
        prompt: prompt.to_string(),
        guidance_scale: config.guidance_scale,
        hints: OracleHints {
            clean: Some(x.clone()),
            noise: Some(eps.clone()),
            ..hints
        },
    };
    let eps_hat = provider
        .denoise(&request)
        .map_err(|e| e.context(format!("denoise at t={t}")))?;
    eps_hat.ensure_shape("eps_hat", &x.shape)?;
    let w = config.weight(schedule, t);
    let data = eps_hat.data.iter().zip(&eps.data).map(|(a, b)| w * (a - b)).collect();
    Ok(SdsSample {
        gradient: Tensor {
            shape: x.shape.clone(),
            data,
        },
        t,
    })
}
