//! Generative losses as pure computations: the spatial-mixture image
//! log-likelihood, Gaussian and Bernoulli KL terms, and the two-phase total
//! loss combiner. No gradients, no training machinery; any trainer can
//! consume these.

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::mask::Mask;

const EPS: f64 = 1e-6;

/// One mixture component: its mixing mask, predicted mean image and decoded
/// mask. Exactly one component per scene carries `is_background`, which
/// selects the background noise scale.
#[derive(Debug, Clone)]
pub struct ComponentPrediction {
    pub mask: Mask,
    pub mean_image: Frame,
    pub decoded_mask: Mask,
    pub is_background: bool,
}

/// Diagonal-Gaussian posterior over a latent vector.
#[derive(Debug, Clone)]
pub struct LatentPosterior {
    pub mean: Vec<f64>,
    pub log_variance: Vec<f64>,
}

impl LatentPosterior {
    pub fn new(mean: Vec<f64>, log_variance: Vec<f64>) -> Result<Self> {
        if mean.len() != log_variance.len() {
            return Err(Error::DimensionMismatch(
                mean.len(),
                1,
                log_variance.len(),
                1,
            ));
        }
        if log_variance.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericError("latent log-variance"));
        }
        Ok(LatentPosterior { mean, log_variance })
    }
}

#[derive(Debug, Clone)]
pub struct LossWeights {
    pub beta: f64,
    pub gamma: f64,
    /// Mixture noise scale for object components.
    pub sigma: f64,
    /// Mixture noise scale for the background component; smaller, to break
    /// symmetry in favor of a large uniform background.
    pub sigma_b: f64,
    /// Step at which the physics term joins the total loss.
    pub phase_switch_step: usize,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            beta: 0.5,
            gamma: 0.5,
            sigma: 0.11,
            sigma_b: 0.07,
            phase_switch_step: 100_000,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.gamma > 0.0 && self.sigma > 0.0 && self.sigma_b > 0.0) {
            return Err(Error::InvalidConfig("loss weights must be positive".into()));
        }
        Ok(())
    }
}

/// Log-likelihood of `image` under the spatial Gaussian mixture: per pixel
/// and channel, the log of the mask-weighted sum of component densities,
/// each gated by its decoded-mask match probability; summed over pixels and
/// channels. The image loss is this value negated.
pub fn image_log_likelihood(
    image: &Frame,
    components: &[ComponentPrediction],
    w: &LossWeights,
) -> Result<f64> {
    w.validate()?;
    if components.is_empty() {
        return Err(Error::ContractViolation("no mixture components".into()));
    }
    let n_background = components.iter().filter(|c| c.is_background).count();
    if n_background != 1 {
        return Err(Error::ContractViolation(format!(
            "expected exactly one background component, got {n_background}"
        )));
    }
    let (width, height) = (image.width(), image.height());
    for c in components {
        if c.mask.width() != width || c.mask.height() != height {
            return Err(Error::DimensionMismatch(
                c.mask.width(),
                c.mask.height(),
                width,
                height,
            ));
        }
        c.mask.check_same_size(&c.decoded_mask)?;
        if c.mean_image.width() != width || c.mean_image.height() != height {
            return Err(Error::DimensionMismatch(
                c.mean_image.width(),
                c.mean_image.height(),
                width,
                height,
            ));
        }
    }
    // Partition of unity within 1e-4.
    for y in 0..height {
        for x in 0..width {
            let sum: f64 = components.iter().map(|c| c.mask.get(x, y)).sum();
            if (sum - 1.0).abs() > 1e-4 {
                return Err(Error::ContractViolation(format!(
                    "component masks sum to {sum} at ({x}, {y})"
                )));
            }
        }
    }

    let gauss = |x: f64, mu: f64, sigma: f64| -> f64 {
        let z = (x - mu) / sigma;
        (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
    };

    let mut total = 0.0;
    for y in 0..height {
        for x in 0..width {
            let pixel = image.get(x, y);
            for ch in 0..3 {
                let mut mix = 0.0;
                for c in components {
                    let m = c.mask.get(x, y);
                    if m == 0.0 {
                        continue;
                    }
                    let sigma = if c.is_background { w.sigma_b } else { w.sigma };
                    let density = gauss(pixel[ch], c.mean_image.get(x, y)[ch], sigma);
                    // Decoded-mask match probability, two-sided on the
                    // mixing mask's indicator.
                    let d = c.decoded_mask.get(x, y);
                    let p_match = if m > 0.5 { d } else { 1.0 - d };
                    mix += m * density * p_match;
                }
                total += mix.max(EPS).ln();
            }
        }
    }
    if !total.is_finite() {
        return Err(Error::NumericError("image log-likelihood"));
    }
    Ok(total)
}

/// Closed-form KL of a diagonal-Gaussian posterior to the standard normal
/// prior.
pub fn kl_gaussian(post: &LatentPosterior) -> f64 {
    post.mean
        .iter()
        .zip(&post.log_variance)
        .map(|(mu, logvar)| 0.5 * (mu * mu + logvar.exp() - 1.0 - logvar))
        .sum()
}

/// Mean per-pixel Bernoulli KL between two mask maps, both clamped away
/// from 0 and 1.
pub fn kl_mask(attention_mask: &Mask, decoded_mask: &Mask) -> Result<f64> {
    attention_mask.check_same_size(decoded_mask)?;
    let clamp = |v: f64| v.clamp(EPS, 1.0 - EPS);
    let n = (attention_mask.width() * attention_mask.height()) as f64;
    let total: f64 = attention_mask
        .weights()
        .iter()
        .zip(decoded_mask.weights())
        .map(|(&q0, &p0)| {
            let q = clamp(q0);
            let p = clamp(p0);
            q * (q / p).ln() + (1.0 - q) * ((1.0 - q) / (1.0 - p)).ln()
        })
        .sum();
    Ok(total / n)
}

/// Combined KL loss: `beta` times the latent KLs plus `gamma` times the
/// mask KLs.
pub fn kl_loss(
    posteriors: &[LatentPosterior],
    mask_pairs: &[(Mask, Mask)],
    w: &LossWeights,
) -> Result<f64> {
    let latent: f64 = posteriors.iter().map(kl_gaussian).sum();
    let mut mask = 0.0;
    for (q, p) in mask_pairs {
        mask += kl_mask(q, p)?;
    }
    Ok(w.beta * latent + w.gamma * mask)
}

/// Two-phase total loss: image and KL terms always, physics only from
/// `phase_switch_step` on.
pub fn total_loss(step: usize, l_image: f64, l_kl: f64, l_physics: f64, w: &LossWeights) -> f64 {
    if step >= w.phase_switch_step {
        l_image + l_kl + l_physics
    } else {
        l_image + l_kl
    }
}

/// Alternative phase trigger: a moving-average plateau detector. Feed it
/// the running loss; once the relative change between consecutive window
/// averages drops below the threshold, it reports (and stays) switched.
#[derive(Debug, Clone)]
pub struct PlateauDetector {
    window: usize,
    relative_change: f64,
    history: Vec<f64>,
    previous_average: Option<f64>,
    switched: bool,
}

impl Default for PlateauDetector {
    fn default() -> Self {
        PlateauDetector::new(1000, 1e-3)
    }
}

impl PlateauDetector {
    pub fn new(window: usize, relative_change: f64) -> Self {
        PlateauDetector {
            window,
            relative_change,
            history: Vec::new(),
            previous_average: None,
            switched: false,
        }
    }

    /// Returns true once the loss has plateaued; latches.
    pub fn observe(&mut self, loss: f64) -> bool {
        if self.switched {
            return true;
        }
        self.history.push(loss);
        if self.history.len() == self.window {
            let avg: f64 = self.history.iter().sum::<f64>() / self.window as f64;
            if let Some(prev) = self.previous_average {
                let denom = prev.abs().max(EPS);
                if ((prev - avg).abs() / denom) < self.relative_change {
                    self.switched = true;
                }
            }
            self.previous_average = Some(avg);
            self.history.clear();
        }
        self.switched
    }

    pub fn is_switched(&self) -> bool {
        self.switched
    }
}
