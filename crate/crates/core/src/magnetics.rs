//! Gradient-coil actuation of permanently magnetised bases and overdamped
//! rigid-body stepping.
//!
//! Force is the moment projected on the alignment field times the commanded
//! gradient; a weak uniform field of fixed magnitude supplies the aligning
//! torque. Bodies have no inertia: velocity is force over drag.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{wrap_angle, Pose, Vec2};

/// 1 emu = 1e-3 A·m².
pub const EMU_TO_AM2: f64 = 1e-3;
/// Remanent moment of the Type 1 base, emu.
pub const TYPE1_MOMENT_EMU: f64 = 1.310e-5;
/// Remanent moment of the Type 2 base, emu.
pub const TYPE2_MOMENT_EMU: f64 = 1.308e-5;
/// Sampled moments are clamped to this fraction of the mean.
pub const MOMENT_ENVELOPE: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MagneticsError {
    #[error("time step {dt} s exceeds the limit {dt_max} s")]
    StepTooLarge { dt: f64, dt_max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagneticBase {
    /// Remanent moment, A·m².
    pub moment_am2: f64,
    /// The measured value the moment was converted from, emu.
    pub moment_emu: f64,
    /// Direction of the moment in the body frame, radians from +x.
    #[serde(default)]
    pub moment_axis: f64,
    /// Relative sample-to-sample spread used by [`MagneticBase::sampled`].
    #[serde(default = "default_sigma")]
    pub variation_sigma: f64,
}

fn default_sigma() -> f64 {
    0.05
}

impl MagneticBase {
    pub fn from_emu(moment_emu: f64) -> Self {
        Self { moment_am2: moment_emu * EMU_TO_AM2, moment_emu, moment_axis: 0.0, variation_sigma: default_sigma() }
    }

    pub fn type1() -> Self {
        Self::from_emu(TYPE1_MOMENT_EMU)
    }

    pub fn type2() -> Self {
        Self::from_emu(TYPE2_MOMENT_EMU)
    }

    /// A copy with the moment drawn from a normal distribution around this
    /// mean, clamped to the ±15 % manufacturing envelope.
    pub fn sampled<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        let m = sample_moment(self.moment_am2, self.variation_sigma, rng);
        Self { moment_am2: m, moment_emu: m / EMU_TO_AM2, ..self.clone() }
    }
}

/// Draw one moment around `mean` with relative spread `sigma`.
pub fn sample_moment<R: Rng + ?Sized>(mean: f64, sigma: f64, rng: &mut R) -> f64 {
    let draw = if sigma > 0.0 {
        Normal::new(mean, sigma * mean.abs()).map(|d| d.sample(rng)).unwrap_or(mean)
    } else {
        mean
    };
    let band = MOMENT_ENVELOPE * mean.abs();
    draw.clamp(mean - band, mean + band)
}

/// One operator command for the coil system.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FieldCommand {
    /// Gradient along x, T/m.
    #[serde(default)]
    pub grad_x: f64,
    /// Gradient along y, T/m.
    #[serde(default)]
    pub grad_y: f64,
    /// Direction of the aligning field, radians; `None` keeps the current one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heading: Option<f64>,
    /// Rate at which the aligning field turns, rad/s.
    #[serde(default)]
    pub rotate_rate: f64,
}

impl FieldCommand {
    pub fn gradient(grad_x: f64, grad_y: f64) -> Self {
        Self { grad_x, grad_y, ..Self::default() }
    }

    /// Clamp each gradient axis to `±coil_limit`; non-finite values become 0.
    pub fn clamped(&self, coil_limit: f64) -> Self {
        let c = |v: f64| if v.is_finite() { v.clamp(-coil_limit, coil_limit) } else { 0.0 };
        Self {
            grad_x: c(self.grad_x),
            grad_y: c(self.grad_y),
            heading: self.heading.filter(|h| h.is_finite()),
            rotate_rate: if self.rotate_rate.is_finite() { self.rotate_rate } else { 0.0 },
        }
    }

    pub fn grad(&self) -> Vec2 {
        Vec2::new(self.grad_x, self.grad_y)
    }
}

/// Coil and field constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoilParams {
    /// Largest gradient per axis, T/m.
    pub coil_limit: f64,
    /// Magnitude of the uniform aligning field, T.
    pub b_align: f64,
    /// Largest admissible integration step, s.
    pub dt_max: f64,
}

impl Default for CoilParams {
    fn default() -> Self {
        Self { coil_limit: 2.0, b_align: 5e-3, dt_max: 1e-3 }
    }
}

/// Stokes-like drag of a body on the substrate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DragModel {
    /// N·s/m.
    pub c_translation: f64,
    /// N·m·s/rad.
    pub c_rotation: f64,
    /// Multiplier applied to Type 1 bases in near-pure water.
    pub wall_amplification: f64,
    /// Net force below which a sticking base does not translate, N.
    pub stick_threshold: f64,
}

/// Calibrated so a Type 2 base at the 2 T/m coil limit moves 100 µm/s,
/// one body length in 2 s.
pub const DEFAULT_C_TRANSLATION: f64 = 2.616e-4;
/// Gives a turning rate of about 10 rad/s at 90° misalignment in 5 mT.
pub const DEFAULT_C_ROTATION: f64 = 6.55e-12;

impl Default for DragModel {
    fn default() -> Self {
        Self {
            c_translation: DEFAULT_C_TRANSLATION,
            c_rotation: DEFAULT_C_ROTATION,
            wall_amplification: 3.0,
            stick_threshold: 2e-10,
        }
    }
}

impl DragModel {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.c_translation > 0.0 && self.c_rotation > 0.0) {
            return Err("drag coefficients must be positive".into());
        }
        if !(self.wall_amplification >= 1.0) {
            return Err("wall_amplification must be at least 1".into());
        }
        if !(self.stick_threshold >= 0.0) {
            return Err("stick_threshold must be non-negative".into());
        }
        Ok(())
    }

    /// Drag for a body whose coefficients are scaled by `multiplier`, and
    /// which sticks below the threshold when `sticking`.
    pub fn effective(&self, multiplier: f64, sticking: bool) -> EffectiveDrag {
        let amp = if sticking { self.wall_amplification } else { 1.0 };
        EffectiveDrag {
            c_translation: self.c_translation * multiplier * amp,
            c_rotation: self.c_rotation * multiplier * amp,
            stick_threshold: if sticking { self.stick_threshold } else { 0.0 },
        }
    }
}

/// Drag actually applied in one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveDrag {
    pub c_translation: f64,
    pub c_rotation: f64,
    pub stick_threshold: f64,
}

/// Angle between the aligning field and the body's moment.
pub fn misalignment(base: &MagneticBase, field_heading: f64, body_heading: f64) -> f64 {
    wrap_angle(field_heading - body_heading - base.moment_axis)
}

/// Gradient force in N for a moment at `misalignment` from the field.
pub fn magnetic_force(base: &MagneticBase, cmd: &FieldCommand, misalignment: f64) -> Vec2 {
    cmd.grad() * (base.moment_am2 * misalignment.cos())
}

/// Aligning torque in N·m.
pub fn magnetic_torque(base: &MagneticBase, field_heading: f64, body_heading: f64, b_align: f64) -> f64 {
    base.moment_am2 * b_align * misalignment(base, field_heading, body_heading).sin()
}

/// Advance `pose` by one explicit step of overdamped motion. Force is in N,
/// torque in N·m, positions in µm.
pub fn step_overdamped(
    pose: &Pose,
    force: Vec2,
    torque: f64,
    drag: &EffectiveDrag,
    dt: f64,
    dt_max: f64,
) -> Result<Pose, MagneticsError> {
    if !(dt > 0.0 && dt <= dt_max) {
        return Err(MagneticsError::StepTooLarge { dt, dt_max });
    }
    let v = if force.norm() < drag.stick_threshold { Vec2::ZERO } else { force * (1e6 / drag.c_translation) };
    let omega = torque / drag.c_rotation;
    Ok(Pose { position: pose.position + v * dt, theta: wrap_angle(pose.theta + omega * dt) })
}

/// Translational speed in µm/s of a base fully aligned with a gradient of
/// magnitude `grad` under `drag`.
pub fn aligned_speed(base: &MagneticBase, grad: f64, drag: &EffectiveDrag) -> f64 {
    base.moment_am2 * grad / drag.c_translation * 1e6
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn free() -> EffectiveDrag {
        DragModel::default().effective(1.0, false)
    }

    #[test]
    fn emu_conversion() {
        let b = MagneticBase::type1();
        assert!((b.moment_am2 - 1.310e-8).abs() < 1e-20);
        let f = magnetic_force(&b, &FieldCommand::gradient(1.0, 0.0), 0.0);
        assert!((f.x - 1.310e-8).abs() < 1e-12 && f.y == 0.0);
    }

    #[test]
    fn zero_gradient_zero_force() {
        let f = magnetic_force(&MagneticBase::type2(), &FieldCommand::default(), 0.3);
        assert_eq!(f, Vec2::ZERO);
    }

    #[test]
    fn force_reverses_with_gradient() {
        let b = MagneticBase::type2();
        let a = magnetic_force(&b, &FieldCommand::gradient(0.7, -1.1), 0.2);
        let r = magnetic_force(&b, &FieldCommand::gradient(-0.7, 1.1), 0.2);
        assert_eq!(a, -r);
    }

    #[test]
    fn torque_shape() {
        let b = MagneticBase::type1();
        assert_eq!(magnetic_torque(&b, 0.4, 0.4, 5e-3), 0.0);
        let max = magnetic_torque(&b, std::f64::consts::FRAC_PI_2, 0.0, 5e-3);
        assert!((max - b.moment_am2 * 5e-3).abs() < 1e-24);
        assert_eq!(magnetic_torque(&b, 0.3, 0.0, 5e-3), -magnetic_torque(&b, -0.3, 0.0, 5e-3));
    }

    #[test]
    fn drag_calibration() {
        let v = aligned_speed(&MagneticBase::type2(), 2.0, &free());
        assert!((v - 100.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn step_limits() {
        let p = Pose::default();
        assert!(matches!(
            step_overdamped(&p, Vec2::ZERO, 0.0, &free(), 2e-3, 1e-3),
            Err(MagneticsError::StepTooLarge { .. })
        ));
        assert_eq!(step_overdamped(&p, Vec2::ZERO, 0.0, &free(), 1e-3, 1e-3).unwrap(), p);
    }

    #[test]
    fn sticking_suppresses_weak_forces() {
        let sticky = DragModel::default().effective(1.0, true);
        let p = Pose::default();
        let weak = step_overdamped(&p, Vec2::new(1e-10, 0.0), 0.0, &sticky, 1e-3, 1e-3).unwrap();
        assert_eq!(weak, p);
        let strong = step_overdamped(&p, Vec2::new(1e-8, 0.0), 0.0, &sticky, 1e-3, 1e-3).unwrap();
        let free_step = step_overdamped(&p, Vec2::new(1e-8, 0.0), 0.0, &free(), 1e-3, 1e-3).unwrap();
        assert!((strong.position.x * 3.0 - free_step.position.x).abs() < 1e-15);
    }

    #[test]
    fn clamping() {
        let c = FieldCommand { grad_x: 5.0, grad_y: -9.0, heading: Some(f64::NAN), rotate_rate: f64::INFINITY }.clamped(2.0);
        assert_eq!((c.grad_x, c.grad_y, c.heading, c.rotate_rate), (2.0, -2.0, None, 0.0));
    }

    #[test]
    fn sampled_moments_respect_envelope() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let b = MagneticBase { variation_sigma: 0.2, ..MagneticBase::type1() };
        for _ in 0..1000 {
            let s = b.sampled(&mut rng);
            assert!((s.moment_am2 / b.moment_am2 - 1.0).abs() <= MOMENT_ENVELOPE + 1e-12);
            assert!((s.moment_emu * EMU_TO_AM2 - s.moment_am2).abs() < 1e-22);
        }
    }
}
