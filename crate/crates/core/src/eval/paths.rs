//! Emotion paths for continuous generation.

use std::f64::consts::PI;

use crate::data::EmotionPoint;
use crate::error::{dim, invalid, Result};

/// `r · direction/‖direction‖` for each radius; `r = 0` is the origin.
pub fn radial_path(direction: &EmotionPoint, radii: &[f64]) -> Result<Vec<EmotionPoint>> {
    let norm = direction.norm();
    if norm == 0.0 {
        return Err(invalid("radial path direction must be nonzero"));
    }
    if let Some(r) = radii.iter().find(|r| !(**r >= 0.0 && r.is_finite())) {
        return Err(invalid(format!("radii must be nonnegative and finite, got {r}")));
    }
    radii
        .iter()
        .map(|&r| EmotionPoint::new(direction.coords().iter().map(|c| r * (c / norm)).collect()))
        .collect()
}

/// `steps` points on the circle of radius `‖from‖`, sweeping the shorter arc
/// from the angle of `from` to the angle of `to` in uniform increments. Both
/// endpoints are included; a half-turn goes counterclockwise.
pub fn angular_path(from: &EmotionPoint, to: &EmotionPoint, steps: usize) -> Result<Vec<EmotionPoint>> {
    if from.dim() != 2 || to.dim() != 2 {
        return Err(dim("angular paths need 2-dimensional emotion points"));
    }
    if from.norm() == 0.0 || to.norm() == 0.0 {
        return Err(invalid("angular path endpoints must be nonzero (angle undefined at the origin)"));
    }
    if steps == 0 {
        return Err(invalid("angular path needs at least one step"));
    }
    let r = from.norm();
    let (f, t) = (from.coords(), to.coords());
    let a0 = f[1].atan2(f[0]);
    let mut delta = t[1].atan2(t[0]) - a0;
    if delta > PI {
        delta -= 2.0 * PI;
    } else if delta <= -PI {
        delta += 2.0 * PI;
    }
    let bare = from.without_label();
    if delta == 0.0 {
        return Ok(vec![bare; steps]);
    }
    let same_radius = (to.norm() - r).abs() <= 1e-12 * r;
    (0..steps)
        .map(|k| {
            if k == 0 {
                return Ok(bare.clone());
            }
            if k == steps - 1 && same_radius {
                return Ok(to.without_label());
            }
            let a = a0 + delta * (k as f64 / (steps - 1) as f64);
            EmotionPoint::new(vec![r * a.cos(), r * a.sin()])
        })
        .collect()
}
