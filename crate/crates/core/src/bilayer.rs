//! Bimorph bending of soft/hard bilayer strips and the double-bilayer gripper.
//!
//! The bending radius follows the modified Timoshenko bimorph relation
//!
//! ```text
//! R = (h1 + h2) (8 (1 + m)² + (1 + m n)(m² + 1/(m n))) / (6 ε (1 + m)²)
//! ```
//!
//! where `m` is a layer thickness ratio, `n` a modulus ratio and `ε` the
//! expansion mismatch. Which layer sits in the numerator of `m` and `n` is a
//! [`SymbolConvention`]; [`select_convention`] picks it by matching the
//! analytic optimum soft-to-hard ratio of 0.47 at `n = 2`, `ε = 1`.
//!
//! Two parameter sets are kept apart: the analytic one (`n = 2`) and the
//! experimental calibration, whose effective modulus ratio and strain gain
//! are fitted so the measured optimum (ratio 2, 27° between pure water and
//! 40 % water) is reproduced. See [`ExperimentalCalibration`].

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::gel::{GelError, GelModel, PEAK_WATER_FRACTION};
use crate::roots;

/// Meaning of `m` in the radius formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThicknessConvention {
    SoftOverHard,
    HardOverSoft,
}

/// Meaning of `n` in the radius formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModulusConvention {
    HardOverSoft,
    SoftOverHard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolConvention {
    pub thickness: ThicknessConvention,
    pub modulus: ModulusConvention,
}

impl SymbolConvention {
    /// Convention reproducing the 0.47 analytic optimum (see [`select_convention`]).
    pub const SELECTED: SymbolConvention =
        SymbolConvention { thickness: ThicknessConvention::HardOverSoft, modulus: ModulusConvention::HardOverSoft };

    pub const ALL: [SymbolConvention; 4] = [
        SymbolConvention { thickness: ThicknessConvention::SoftOverHard, modulus: ModulusConvention::HardOverSoft },
        SymbolConvention { thickness: ThicknessConvention::HardOverSoft, modulus: ModulusConvention::HardOverSoft },
        SymbolConvention { thickness: ThicknessConvention::SoftOverHard, modulus: ModulusConvention::SoftOverHard },
        SymbolConvention { thickness: ThicknessConvention::HardOverSoft, modulus: ModulusConvention::SoftOverHard },
    ];

    /// `m` for a soft-to-hard thickness ratio.
    pub fn m(&self, soft_to_hard: f64) -> f64 {
        match self.thickness {
            ThicknessConvention::SoftOverHard => soft_to_hard,
            ThicknessConvention::HardOverSoft => 1.0 / soft_to_hard,
        }
    }

    /// `n` for a hard-to-soft modulus ratio.
    pub fn n(&self, hard_to_soft: f64) -> f64 {
        match self.modulus {
            ModulusConvention::HardOverSoft => hard_to_soft,
            ModulusConvention::SoftOverHard => 1.0 / hard_to_soft,
        }
    }
}

impl Default for SymbolConvention {
    fn default() -> Self {
        Self::SELECTED
    }
}

/// Bending radius for total thickness `h_total`, returning `+∞` for zero mismatch.
pub fn radius_formula(h_total: f64, m: f64, n: f64, epsilon: f64) -> f64 {
    if epsilon == 0.0 {
        return f64::INFINITY;
    }
    let opm2 = (1.0 + m) * (1.0 + m);
    h_total * (8.0 * opm2 + (1.0 + m * n) * (m * m + 1.0 / (m * n))) / (6.0 * epsilon * opm2)
}

/// Arc angle in degrees of a strip of length `length` bent to radius `radius`.
pub fn angle_from_radius(length: f64, radius: f64) -> f64 {
    if radius.is_infinite() {
        return 0.0;
    }
    length / radius * 180.0 / PI
}

/// How the layer thicknesses vary along a thickness-ratio sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SweepMode {
    /// `h_soft + h_hard` held fixed.
    FixedTotal { total_um: f64 },
    /// Hard layer held fixed; the soft layer grows with the ratio.
    FixedHard { h_hard_um: f64 },
}

impl SweepMode {
    /// `(h_soft, h_hard)` for a soft-to-hard ratio.
    pub fn thicknesses(&self, ratio: f64) -> (f64, f64) {
        match *self {
            SweepMode::FixedTotal { total_um } => {
                let h_hard = total_um / (1.0 + ratio);
                (total_um - h_hard, h_hard)
            }
            SweepMode::FixedHard { h_hard_um } => (ratio * h_hard_um, h_hard_um),
        }
    }
}

/// Expansion mismatch of the soft layer relative to its straight reference state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MismatchModel {
    /// Multiplier from relative swelling to mismatch strain.
    pub gain: f64,
    /// Water fraction at which the strip is straight.
    pub reference_water_fraction: f64,
}

impl MismatchModel {
    pub fn strain_from_lambda(&self, lambda: f64, lambda_ref: f64) -> f64 {
        self.gain * (lambda / lambda_ref - 1.0)
    }

    pub fn strain_at(&self, water_fraction: f64, gel: &GelModel) -> Result<f64, GelError> {
        let lambda = gel.lambda_eq_at(water_fraction)?;
        Ok(self.strain_from_lambda(lambda, self.reference_lambda(gel)?))
    }

    pub fn reference_lambda(&self, gel: &GelModel) -> Result<f64, GelError> {
        gel.lambda_eq_at(self.reference_water_fraction)
    }
}

/// Effective modulus ratio of the printed soft/hard pair, fitted so the
/// fixed-hard-layer optimum sits at soft-to-hard ratio 2.
pub const DEFAULT_N_EFF: f64 = 63.552_465;
/// Mismatch gain fitted so pure water bends a ratio-2 strip 27° from 40 % water.
pub const DEFAULT_STRAIN_GAIN: f64 = 1.107_625_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BilayerSpec {
    pub length_um: f64,
    pub h_hard_um: f64,
    pub h_soft_um: f64,
    /// Hard-to-soft elastic modulus ratio.
    pub modulus_ratio_n: f64,
    pub mismatch: MismatchModel,
    #[serde(default)]
    pub convention: SymbolConvention,
}

impl Default for BilayerSpec {
    /// The calibrated ratio-2 strip on a 59 µm × 6 µm hard layer.
    fn default() -> Self {
        Self {
            length_um: 59.0,
            h_hard_um: 6.0,
            h_soft_um: 12.0,
            modulus_ratio_n: DEFAULT_N_EFF,
            mismatch: MismatchModel { gain: DEFAULT_STRAIN_GAIN, reference_water_fraction: PEAK_WATER_FRACTION },
            convention: SymbolConvention::SELECTED,
        }
    }
}

impl BilayerSpec {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.length_um > 0.0 && self.h_hard_um > 0.0 && self.h_soft_um > 0.0) {
            return Err("bilayer dimensions must be positive".into());
        }
        if !(self.modulus_ratio_n > 0.0) {
            return Err("modulus ratio must be positive".into());
        }
        Ok(())
    }

    /// Soft-to-hard thickness ratio.
    pub fn thickness_ratio(&self) -> f64 {
        self.h_soft_um / self.h_hard_um
    }

    pub fn with_thickness_ratio(&self, ratio: f64) -> Self {
        Self { h_soft_um: ratio * self.h_hard_um, ..self.clone() }
    }

    pub fn radius_for_strain(&self, epsilon: f64) -> f64 {
        let c = self.convention;
        radius_formula(
            self.h_soft_um + self.h_hard_um,
            c.m(self.thickness_ratio()),
            c.n(self.modulus_ratio_n),
            epsilon,
        )
    }

    pub fn angle_for_strain(&self, epsilon: f64) -> f64 {
        angle_from_radius(self.length_um, self.radius_for_strain(epsilon))
    }

    /// Bend angle with the soft layer at swelling ratio `lambda`.
    pub fn angle_for_lambda(&self, lambda: f64, lambda_ref: f64) -> f64 {
        self.angle_for_strain(self.mismatch.strain_from_lambda(lambda, lambda_ref))
    }
}

/// Radius in µm at equilibrium in a solvent of the given water fraction.
pub fn bend_radius(spec: &BilayerSpec, water_fraction: f64, gel: &GelModel) -> Result<f64, GelError> {
    Ok(spec.radius_for_strain(spec.mismatch.strain_at(water_fraction, gel)?))
}

/// Bend angle in degrees; signed like the radius.
pub fn bend_angle(spec: &BilayerSpec, water_fraction: f64, gel: &GelModel) -> Result<f64, GelError> {
    Ok(angle_from_radius(spec.length_um, bend_radius(spec, water_fraction, gel)?))
}

/// Angle change between `water_fraction` and the strip's straight reference.
pub fn delta_theta(spec: &BilayerSpec, water_fraction: f64, gel: &GelModel) -> Result<f64, GelError> {
    let reference = bend_angle(spec, spec.mismatch.reference_water_fraction, gel)?;
    Ok((bend_angle(spec, water_fraction, gel)? - reference).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub ratio: f64,
    pub radius_um: f64,
    pub theta_deg: f64,
}

/// Strip geometry used by a thickness-ratio sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepGeometry {
    pub mode: SweepMode,
    pub length_um: f64,
    pub convention: SymbolConvention,
}

impl SweepGeometry {
    /// Unit total thickness and unit length, for dimensionless checks.
    pub fn normalized() -> Self {
        Self { mode: SweepMode::FixedTotal { total_um: 1.0 }, length_um: 1.0, convention: SymbolConvention::SELECTED }
    }

    /// The 59 µm strip with its 6 µm hard layer held fixed.
    pub fn fixed_hard_strip() -> Self {
        Self { mode: SweepMode::FixedHard { h_hard_um: 6.0 }, length_um: 59.0, convention: SymbolConvention::SELECTED }
    }
}

/// Radius and angle at each soft-to-hard ratio, in input order.
pub fn sweep_thickness_ratio(n: f64, epsilon: f64, ratios: &[f64], geometry: &SweepGeometry) -> Vec<SweepPoint> {
    let c = geometry.convention;
    ratios
        .iter()
        .map(|&ratio| {
            let (h_soft, h_hard) = geometry.mode.thicknesses(ratio);
            let radius_um = radius_formula(h_soft + h_hard, c.m(ratio), c.n(n), epsilon);
            SweepPoint { ratio, radius_um, theta_deg: angle_from_radius(geometry.length_um, radius_um) }
        })
        .collect()
}

/// Soft-to-hard ratio in (0.05, 20) that minimises the bending radius.
pub fn analytic_optimum(n: f64, mode: SweepMode, convention: SymbolConvention) -> f64 {
    let radius = |log_ratio: f64| {
        let ratio = log_ratio.exp();
        let (h_soft, h_hard) = mode.thicknesses(ratio);
        radius_formula(h_soft + h_hard, convention.m(ratio), convention.n(n), 1.0)
    };
    roots::golden_min(radius, 0.05f64.ln(), 20f64.ln(), 1e-12).exp()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConventionCandidate {
    pub convention: SymbolConvention,
    pub mode: SweepMode,
    pub argmin_ratio: f64,
}

/// Evaluate every convention in both sweep modes and return the candidate
/// whose analytic optimum is nearest `target`, along with all candidates.
pub fn select_convention(n: f64, target: f64, h_hard_um: f64) -> (ConventionCandidate, Vec<ConventionCandidate>) {
    let modes = [SweepMode::FixedTotal { total_um: h_hard_um * 2.0 }, SweepMode::FixedHard { h_hard_um }];
    let all: Vec<ConventionCandidate> = modes
        .iter()
        .flat_map(|&mode| {
            SymbolConvention::ALL.iter().map(move |&convention| ConventionCandidate {
                convention,
                mode,
                argmin_ratio: analytic_optimum(n, mode, convention),
            })
        })
        .collect();
    let best = *all
        .iter()
        .min_by(|a, b| (a.argmin_ratio - target).abs().total_cmp(&(b.argmin_ratio - target).abs()))
        .expect("non-empty candidate list");
    (best, all)
}

/// Fitted constants of the printed bilayers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentalCalibration {
    pub n_eff: f64,
    pub strain_gain: f64,
}

impl ExperimentalCalibration {
    /// Fit `n_eff` so the fixed-hard optimum lands on `peak_ratio`, then the
    /// mismatch gain so pure water bends the peak strip by `delta_deg`.
    pub fn fit(gel: &GelModel, template: &BilayerSpec, peak_ratio: f64, delta_deg: f64) -> Result<Self, GelError> {
        let mode = SweepMode::FixedHard { h_hard_um: template.h_hard_um };
        let conv = template.convention;
        let log_n = roots::bisect(
            |log_n| analytic_optimum(log_n.exp(), mode, conv) - peak_ratio,
            0.0,
            12.0,
            200,
        )?;
        let n_eff = log_n.exp();
        let unit = BilayerSpec {
            modulus_ratio_n: n_eff,
            mismatch: MismatchModel { gain: 1.0, ..template.mismatch },
            ..template.with_thickness_ratio(peak_ratio)
        };
        let strain_gain = delta_deg / delta_theta(&unit, 1.0, gel)?;
        Ok(Self { n_eff, strain_gain })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JawState {
    Open,
    Closed,
    Intermediate,
}

/// Two bilayer jaws acting as a clamp around a male feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GripperSpec {
    pub left: BilayerSpec,
    pub right: BilayerSpec,
    pub jaw_gap_closed_um: f64,
    pub open_threshold_deg: f64,
    pub close_threshold_deg: f64,
}

impl Default for GripperSpec {
    fn default() -> Self {
        Self {
            left: BilayerSpec::default(),
            right: BilayerSpec::default(),
            jaw_gap_closed_um: 58.0,
            open_threshold_deg: 15.0,
            close_threshold_deg: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aperture {
    pub aperture_um: f64,
    pub state: JawState,
    pub left_opening_deg: f64,
    pub right_opening_deg: f64,
    /// Lateral shift of the jaw centreline; zero for symmetric jaws.
    pub centerline_offset_um: f64,
}

impl GripperSpec {
    pub fn validate(&self) -> Result<(), String> {
        self.left.validate()?;
        self.right.validate()?;
        if !(self.open_threshold_deg > self.close_threshold_deg && self.close_threshold_deg >= 0.0) {
            return Err("gripper thresholds must satisfy open > close >= 0".into());
        }
        Ok(())
    }

    /// Aperture with both soft layers at swelling ratio `lambda`.
    ///
    /// A shrinking soft layer bends each jaw outward, so the opening angle is
    /// the negated bend angle.
    pub fn aperture_for_lambda(&self, lambda: f64, lambda_ref: f64) -> Aperture {
        let left = -self.left.angle_for_lambda(lambda, lambda_ref);
        let right = -self.right.angle_for_lambda(lambda, lambda_ref);
        self.aperture_for_openings(left, right)
    }

    pub fn aperture_for_openings(&self, left_deg: f64, right_deg: f64) -> Aperture {
        let dl = self.left.length_um * left_deg.to_radians().sin();
        let dr = self.right.length_um * right_deg.to_radians().sin();
        let state = if left_deg >= self.open_threshold_deg && right_deg >= self.open_threshold_deg {
            JawState::Open
        } else if left_deg <= self.close_threshold_deg && right_deg <= self.close_threshold_deg {
            JawState::Closed
        } else {
            JawState::Intermediate
        };
        Aperture {
            aperture_um: self.jaw_gap_closed_um + dl + dr,
            state,
            left_opening_deg: left_deg,
            right_opening_deg: right_deg,
            centerline_offset_um: 0.5 * (dl - dr),
        }
    }
}

/// Aperture at equilibrium in a solvent of the given water fraction.
pub fn gripper_aperture(grip: &GripperSpec, water_fraction: f64, gel: &GelModel) -> Result<Aperture, GelError> {
    let lambda = gel.lambda_eq_at(water_fraction)?;
    let lambda_ref = grip.left.mismatch.reference_lambda(gel)?;
    Ok(grip.aperture_for_lambda(lambda, lambda_ref))
}
