//! First-order motion prediction and the physics likelihood that scores an
//! observed object state against its history.
//!
//! Prediction is deliberately zero-order in shape and first-order in motion:
//! next translation and rotation extrapolate the mean frame-to-frame
//! difference over a short history window, size is the window mean, and the
//! predicted mask is the object's slice of a depth-ordered render of every
//! tracked object's prediction, so expected occlusions are part of the
//! prediction.

use nalgebra::Vector3;

use crate::camera::Camera;
use crate::cuboid::Cuboid;
use crate::error::{Error, Result};
use crate::geometry::render_all;
use crate::mask::Mask;
use crate::track::ObjectTrack;

#[derive(Debug, Clone)]
pub struct DynamicsParams {
    pub sigma_t: f64,
    pub sigma_s: f64,
    pub sigma_q: f64,
    /// How many trailing states feed the velocity means.
    pub history_window: usize,
    /// Threshold for the mask indicator.
    pub mask_bin_threshold: f64,
    /// Per-pixel probability floor applied before taking logs.
    pub log_floor: f64,
}

impl Default for DynamicsParams {
    fn default() -> Self {
        DynamicsParams {
            sigma_t: 1.0,
            sigma_s: 1.0,
            sigma_q: 1.0,
            history_window: 3,
            mask_bin_threshold: 0.5,
            log_floor: 1e-6,
        }
    }
}

impl DynamicsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_t > 0.0 && self.sigma_s > 0.0 && self.sigma_q > 0.0) {
            return Err(Error::InvalidConfig("sigmas must be positive".into()));
        }
        if self.history_window < 2 {
            return Err(Error::InvalidConfig(
                "history_window must be at least 2".into(),
            ));
        }
        Ok(())
    }
}

/// Wraps an angle difference into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut r = a % two_pi;
    if r <= -std::f64::consts::PI {
        r += two_pi;
    } else if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

/// One-step state extrapolation from the last `history_window` states:
/// translation and rotation advance by the mean successive difference
/// (angles wrapped), size is the window mean.
pub fn predict_cuboid(track: &ObjectTrack, params: &DynamicsParams) -> Result<Cuboid> {
    predict_cuboid_steps(track, params, 1)
}

/// Extrapolates `steps` time steps past the track's last state. Association
/// across occlusion gaps uses this with the gap length; everything else
/// uses one step.
pub fn predict_cuboid_steps(
    track: &ObjectTrack,
    params: &DynamicsParams,
    steps: usize,
) -> Result<Cuboid> {
    params.validate()?;
    let states = track.states();
    if states.len() < 2 {
        return Err(Error::InsufficientHistory(states.len(), 2));
    }
    let window = &states[states.len().saturating_sub(params.history_window)..];
    let n_diffs = (window.len() - 1) as f64;

    let mut vel = Vector3::zeros();
    let mut ang_vel = Vector3::zeros();
    let mut size_sum = Vector3::zeros();
    for pair in window.windows(2) {
        vel += pair[1].cuboid.translation - pair[0].cuboid.translation;
        let dq = pair[1].cuboid.rotation - pair[0].cuboid.rotation;
        ang_vel += Vector3::new(wrap_angle(dq.x), wrap_angle(dq.y), wrap_angle(dq.z));
    }
    for state in window {
        size_sum += state.cuboid.size;
    }
    vel /= n_diffs;
    ang_vel /= n_diffs;
    let size = size_sum / window.len() as f64;

    let last = &window[window.len() - 1].cuboid;
    let k = steps as f64;
    Cuboid::new(
        last.translation + vel * k,
        size,
        last.rotation + ang_vel * k,
    )
}

/// Full prediction for one track: the extrapolated cuboid plus its expected
/// visible mask, rendered assuming every other track's predicted object is
/// present. Tracks without enough history fall back to their last observed
/// cuboid for the render; `extra_cuboids` (static occluders and the like)
/// are always rendered.
pub fn predict(
    track: &ObjectTrack,
    all_tracks: &[ObjectTrack],
    extra_cuboids: &[Cuboid],
    cam: &Camera,
    params: &DynamicsParams,
) -> Result<(Cuboid, Mask)> {
    let predicted = predict_cuboid(track, params)?;
    let mut cuboids = Vec::with_capacity(all_tracks.len() + extra_cuboids.len() + 1);
    let mut self_index = None;
    for other in all_tracks {
        if other.id == track.id {
            self_index = Some(cuboids.len());
            cuboids.push(predicted);
            continue;
        }
        match predict_cuboid(other, params) {
            Ok(c) => cuboids.push(c),
            Err(_) => {
                if let Some(last) = other.last_state() {
                    cuboids.push(last.cuboid);
                }
            }
        }
    }
    let self_index = match self_index {
        Some(i) => i,
        None => {
            let i = cuboids.len();
            cuboids.push(predicted);
            i
        }
    };
    cuboids.extend_from_slice(extra_cuboids);
    let masks = render_all(&cuboids, cam)?;
    Ok((predicted, masks[self_index].clone()))
}

/// Per-pixel probability that the predicted soft mask explains the observed
/// one: where the observed mask is on (above the indicator threshold) the
/// probability is the predicted weight, elsewhere its complement.
pub fn mask_probability(
    predicted: &Mask,
    observed: &Mask,
    params: &DynamicsParams,
) -> Result<Mask> {
    predicted.check_same_size(observed)?;
    let th = params.mask_bin_threshold;
    Ok(Mask::from_fn(
        predicted.width(),
        predicted.height(),
        |x, y| {
            if observed.get(x, y) > th {
                predicted.get(x, y)
            } else {
                1.0 - predicted.get(x, y)
            }
        },
    ))
}

/// Mean over pixels of the floored log mask probability.
pub fn mask_log_term(predicted: &Mask, observed: &Mask, params: &DynamicsParams) -> Result<f64> {
    let p = mask_probability(predicted, observed, params)?;
    let n = (p.width() * p.height()) as f64;
    Ok(p.weights()
        .iter()
        .map(|&v| v.max(params.log_floor).ln())
        .sum::<f64>()
        / n)
}

/// Log-likelihood of an observed (cuboid, mask) state under the prediction:
/// nine Gaussian log-densities over translation, size and rotation, plus the
/// mean per-pixel floored log mask probability. The mask term is averaged
/// rather than summed so both parts stay O(1) regardless of resolution.
pub fn physics_log_likelihood(
    predicted: &(Cuboid, Mask),
    observed: &(Cuboid, Mask),
    params: &DynamicsParams,
) -> Result<f64> {
    params.validate()?;
    let (pc, pm) = predicted;
    let (oc, om) = observed;
    let mut log_prob = 0.0;
    let gauss = |obs: f64, pred: f64, sigma: f64| -> f64 {
        let z = (obs - pred) / sigma;
        -0.5 * (2.0 * std::f64::consts::PI * sigma * sigma).ln() - 0.5 * z * z
    };
    for i in 0..3 {
        log_prob += gauss(oc.translation[i], pc.translation[i], params.sigma_t);
        log_prob += gauss(oc.size[i], pc.size[i], params.sigma_s);
        log_prob += gauss(
            wrap_angle(oc.rotation[i] - pc.rotation[i]),
            0.0,
            params.sigma_q,
        );
    }
    if !log_prob.is_finite() {
        return Err(Error::NumericError("physics log-likelihood"));
    }
    let mask_term = mask_log_term(pm, om, params)?;
    if !mask_term.is_finite() {
        return Err(Error::NumericError("mask log term"));
    }
    Ok(log_prob + mask_term)
}

/// Log-likelihood at a perfect prediction with identical hard masks:
/// nine standard-normal peaks, zero mask term.
pub fn perfect_prediction_log_likelihood() -> f64 {
    -4.5 * (2.0 * std::f64::consts::PI).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn track_from_translations(points: &[[f64; 3]]) -> ObjectTrack {
        let mut t = ObjectTrack::new("a");
        for (i, p) in points.iter().enumerate() {
            t.push_state(
                i,
                Cuboid::axis_aligned(Vector3::new(p[0], p[1], p[2]), Vector3::new(1.0, 1.0, 1.0))
                    .unwrap(),
                Mask::ones(8, 8),
            )
            .unwrap();
        }
        t
    }

    #[test]
    fn constant_velocity_extrapolates() {
        let t = track_from_translations(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        let c = predict_cuboid(&t, &DynamicsParams::default()).unwrap();
        assert_relative_eq!(c.translation.x, 3.0);
        assert_relative_eq!(c.translation.y, 0.0);
    }

    #[test]
    fn size_is_window_mean() {
        let mut t = ObjectTrack::new("a");
        for (i, sy) in [1.0, 3.0].iter().enumerate() {
            t.push_state(
                i,
                Cuboid::axis_aligned(Vector3::new(0.0, 0.0, 5.0), Vector3::new(1.0, 1.0, *sy))
                    .unwrap(),
                Mask::ones(8, 8),
            )
            .unwrap();
        }
        let c = predict_cuboid(&t, &DynamicsParams::default()).unwrap();
        assert_relative_eq!(c.size.z, 2.0);
    }

    #[test]
    fn stationary_object_predicts_itself() {
        let t = track_from_translations(&[[1.0, 2.0, 5.0], [1.0, 2.0, 5.0], [1.0, 2.0, 5.0]]);
        let cam = Camera::identity_pose(60.0, 64, 64);
        let params = DynamicsParams::default();
        let (c, m) = predict(&t, std::slice::from_ref(&t), &[], &cam, &params).unwrap();
        let last = t.last_state().unwrap();
        assert_relative_eq!(c.translation.x, last.cuboid.translation.x);
        assert_relative_eq!(c.translation.z, last.cuboid.translation.z);
        let rendered = render_all(&[last.cuboid], &cam).unwrap();
        assert_eq!(m.weights(), rendered[0].weights());
    }

    #[test]
    fn history_window_caps_lookback() {
        // With window 3, only the last three states matter: the early
        // outlier is ignored.
        let t = track_from_translations(&[
            [100.0, 0.0, 0.0],
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [2.0, 0.0, 0.0],
        ]);
        let c = predict_cuboid(&t, &DynamicsParams::default()).unwrap();
        assert_relative_eq!(c.translation.x, 3.0);
    }

    #[test]
    fn insufficient_history_errors() {
        let t = track_from_translations(&[[0.0, 0.0, 0.0]]);
        assert!(matches!(
            predict_cuboid(&t, &DynamicsParams::default()),
            Err(Error::InsufficientHistory(1, 2))
        ));
    }

    #[test]
    fn rotation_differences_wrap() {
        let mut t = ObjectTrack::new("a");
        let almost_pi = std::f64::consts::PI - 0.05;
        for (i, q) in [almost_pi, -almost_pi].iter().enumerate() {
            t.push_state(
                i,
                Cuboid::new(
                    Vector3::new(0.0, 0.0, 5.0),
                    Vector3::new(1.0, 1.0, 1.0),
                    Vector3::new(0.0, 0.0, *q),
                )
                .unwrap(),
                Mask::ones(8, 8),
            )
            .unwrap();
        }
        let c = predict_cuboid(&t, &DynamicsParams::default()).unwrap();
        // The short way around is +0.1 rad, not -2 pi + 0.1.
        assert_relative_eq!(c.rotation.z, -almost_pi + 0.1, epsilon = 1e-9);
    }

    #[test]
    fn mask_probability_formula() {
        let params = DynamicsParams::default();
        let ones = Mask::ones(4, 4);
        let p = mask_probability(&ones, &ones, &params).unwrap();
        assert!(p.weights().iter().all(|&v| v == 1.0));

        let half = Mask::constant(4, 4, 0.5);
        let p = mask_probability(&half, &ones, &params).unwrap();
        assert!(p.weights().iter().all(|&v| v == 0.5));
        let p = mask_probability(&half, &Mask::zeros(4, 4), &params).unwrap();
        assert!(p.weights().iter().all(|&v| v == 0.5));

        let p = mask_probability(&Mask::zeros(4, 4), &ones, &params).unwrap();
        assert!(p.weights().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mask_probability_tracks_prediction_on_support() {
        let params = DynamicsParams::default();
        let pred = Mask::from_fn(4, 4, |x, y| (x + y) as f64 / 6.0);
        let hard = Mask::ones(4, 4);
        let p = mask_probability(&pred, &hard, &params).unwrap();
        assert_eq!(p.weights(), pred.weights());
    }

    fn unit_state(x: f64) -> (Cuboid, Mask) {
        (
            Cuboid::axis_aligned(Vector3::new(x, 0.0, 5.0), Vector3::new(1.0, 1.0, 1.0)).unwrap(),
            Mask::ones(8, 8),
        )
    }

    #[test]
    fn perfect_prediction_value() {
        let params = DynamicsParams::default();
        let s = unit_state(0.0);
        let ll = physics_log_likelihood(&s, &s, &params).unwrap();
        assert_relative_eq!(ll, perfect_prediction_log_likelihood(), epsilon = 1e-12);
        // 9 standard-normal peaks: -4.5 ln(2 pi) = -8.2704...
        assert_relative_eq!(ll, -8.270446798842054, epsilon = 1e-9);
    }

    #[test]
    fn one_sigma_costs_half() {
        let params = DynamicsParams::default();
        let pred = unit_state(0.0);
        let obs = unit_state(1.0);
        let base = physics_log_likelihood(&pred, &pred, &params).unwrap();
        let moved = physics_log_likelihood(&pred, &obs, &params).unwrap();
        assert_relative_eq!(base - moved, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn half_mask_contributes_ln_half() {
        let params = DynamicsParams::default();
        let pred = (unit_state(0.0).0, Mask::constant(8, 8, 0.5));
        let obs = unit_state(0.0);
        let ll = physics_log_likelihood(&pred, &obs, &params).unwrap();
        assert_relative_eq!(
            ll,
            perfect_prediction_log_likelihood() + 0.5f64.ln(),
            epsilon = 1e-12
        );
    }

    proptest! {
        #[test]
        fn maximized_at_prediction(
            dt in -2.0f64..2.0,
            ds in -0.5f64..0.5,
            dq in -1.0f64..1.0,
        ) {
            prop_assume!(dt.abs() > 1e-6 || ds.abs() > 1e-6 || dq.abs() > 1e-6);
            let params = DynamicsParams::default();
            let pred = unit_state(0.0);
            let perturbed = (
                Cuboid::new(
                    Vector3::new(dt, 0.0, 5.0),
                    Vector3::new(1.0 + ds.max(-0.9), 1.0, 1.0),
                    Vector3::new(dq, 0.0, 0.0),
                )
                .unwrap(),
                Mask::ones(8, 8),
            );
            let at_pred = physics_log_likelihood(&pred, &pred, &params).unwrap();
            let away = physics_log_likelihood(&pred, &perturbed, &params).unwrap();
            prop_assert!(away < at_pred);
        }

        #[test]
        fn translation_equivariance(shift in proptest::array::uniform3(-5.0f64..5.0)) {
            let params = DynamicsParams::default();
            let base = track_from_translations(&[[0.0, 0.5, 4.0], [0.5, 0.7, 4.2], [1.5, 0.4, 4.1]]);
            let shifted = track_from_translations(&[
                [0.0 + shift[0], 0.5 + shift[1], 4.0 + shift[2]],
                [0.5 + shift[0], 0.7 + shift[1], 4.2 + shift[2]],
                [1.5 + shift[0], 0.4 + shift[1], 4.1 + shift[2]],
            ]);
            let a = predict_cuboid(&base, &params).unwrap();
            let b = predict_cuboid(&shifted, &params).unwrap();
            for i in 0..3 {
                prop_assert!((b.translation[i] - a.translation[i] - shift[i]).abs() < 1e-9);
            }
        }
    }
}
