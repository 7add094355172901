//! Hydrogel free energy, swelling equilibrium and solvent calibration.
//!
//! The responsive parts are PNIPAM hydrogels whose linear swelling ratio λ
//! (stimulated size over designed size) is set by the chemical potential of
//! the surrounding water/ethyl-lactate mixture. Swelling is treated as
//! homogeneous and isotropic, so the volume ratio to the free-swelling state
//! is `J' = λ³` and the deviatoric invariant is fixed at 3.
//!
//! The chemical potential is always carried as the ratio `μ/kT`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::roots::{self, RootError};

/// Largest admissible volume ratio; λ = 3.
pub const JP_MAX: f64 = 27.0;
/// Lower end of the admissible volume ratio, as a multiple of λ0⁻³.
pub const JP_MIN_FACTOR: f64 = 1.001;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GelError {
    #[error("volume ratio {jp} is at or below the dry-state limit {limit}")]
    Domain { jp: f64, limit: f64 },
    #[error("deviatoric invariant {0} is below 3")]
    Invariant(f64),
    #[error("no equilibrium for mu/kT = {mu}: admissible range is [{min}, {max}]")]
    NoRoot { mu: f64, min: f64, max: f64 },
    #[error("water fraction {0} outside [0, 1]")]
    Range(f64),
    #[error("invalid hydrogel parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Solver(#[from] RootError),
}

/// Calibration point: equilibrium swelling ratio at one solvent composition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Anchor {
    pub water_fraction: f64,
    pub lambda_eq: f64,
}

impl From<[f64; 2]> for Anchor {
    fn from(v: [f64; 2]) -> Self {
        Anchor { water_fraction: v[0], lambda_eq: v[1] }
    }
}

impl From<Anchor> for [f64; 2] {
    fn from(a: Anchor) -> Self {
        [a.water_fraction, a.lambda_eq]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Shape-preserving piecewise cubic Hermite; monotone between anchors.
    #[default]
    MonotoneCubic,
    Linear,
}

/// Mapping from water fraction to equilibrium swelling ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompositionCalibration {
    pub anchors: Vec<Anchor>,
    #[serde(default)]
    pub interpolation: Interpolation,
}

/// Peak swelling ratio used at 40 % water. Only "above 1" is measured.
pub const DEFAULT_PEAK_LAMBDA: f64 = 1.02;
pub const LAMBDA_PURE_WATER: f64 = 0.753;
pub const LAMBDA_PURE_EL: f64 = 0.927;
pub const PEAK_WATER_FRACTION: f64 = 0.40;

impl Default for CompositionCalibration {
    fn default() -> Self {
        Self {
            anchors: vec![
                Anchor { water_fraction: 0.0, lambda_eq: LAMBDA_PURE_EL },
                Anchor { water_fraction: PEAK_WATER_FRACTION, lambda_eq: DEFAULT_PEAK_LAMBDA },
                Anchor { water_fraction: 1.0, lambda_eq: LAMBDA_PURE_WATER },
            ],
            interpolation: Interpolation::MonotoneCubic,
        }
    }
}

impl CompositionCalibration {
    pub fn validate(&self) -> Result<(), GelError> {
        let a = &self.anchors;
        if a.len() < 2 {
            return Err(GelError::Params("calibration needs at least two anchors".into()));
        }
        if a[0].water_fraction != 0.0 || a[a.len() - 1].water_fraction != 1.0 {
            return Err(GelError::Params("calibration anchors must span water fractions 0 to 1".into()));
        }
        if a.windows(2).any(|w| w[1].water_fraction <= w[0].water_fraction) {
            return Err(GelError::Params("anchor water fractions must be strictly increasing".into()));
        }
        if a.iter().any(|p| !(p.lambda_eq > 0.0) || !p.lambda_eq.is_finite()) {
            return Err(GelError::Params("anchor swelling ratios must be positive".into()));
        }
        Ok(())
    }

    /// Interpolated equilibrium swelling ratio at `phi`.
    pub fn lambda_at(&self, phi: f64) -> Result<f64, GelError> {
        if !(0.0..=1.0).contains(&phi) {
            return Err(GelError::Range(phi));
        }
        let a = &self.anchors;
        let k = match a.iter().position(|p| p.water_fraction >= phi) {
            Some(0) => return Ok(a[0].lambda_eq),
            Some(k) => k - 1,
            None => return Ok(a[a.len() - 1].lambda_eq),
        };
        let (p0, p1) = (a[k], a[k + 1]);
        if phi == p1.water_fraction {
            return Ok(p1.lambda_eq);
        }
        let h = p1.water_fraction - p0.water_fraction;
        let t = (phi - p0.water_fraction) / h;
        match self.interpolation {
            Interpolation::Linear => Ok(p0.lambda_eq + t * (p1.lambda_eq - p0.lambda_eq)),
            Interpolation::MonotoneCubic => {
                let d = self.hermite_slopes();
                let (t2, t3) = (t * t, t * t * t);
                let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
                let h10 = t3 - 2.0 * t2 + t;
                let h01 = -2.0 * t3 + 3.0 * t2;
                let h11 = t3 - t2;
                Ok(h00 * p0.lambda_eq + h10 * h * d[k] + h01 * p1.lambda_eq + h11 * h * d[k + 1])
            }
        }
    }

    /// Fritsch–Butland node slopes with the three-point end condition.
    fn hermite_slopes(&self) -> Vec<f64> {
        let a = &self.anchors;
        let n = a.len();
        let h: Vec<f64> = a.windows(2).map(|w| w[1].water_fraction - w[0].water_fraction).collect();
        let delta: Vec<f64> =
            a.windows(2).zip(&h).map(|(w, h)| (w[1].lambda_eq - w[0].lambda_eq) / h).collect();
        if n == 2 {
            return vec![delta[0]; 2];
        }
        let mut d = vec![0.0; n];
        for k in 1..n - 1 {
            if delta[k - 1] * delta[k] > 0.0 {
                let w1 = 2.0 * h[k] + h[k - 1];
                let w2 = h[k] + 2.0 * h[k - 1];
                d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
            }
        }
        let end = |h0: f64, h1: f64, m0: f64, m1: f64| {
            let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
            if d.signum() != m0.signum() {
                0.0
            } else if m0.signum() != m1.signum() && d.abs() > 3.0 * m0.abs() {
                3.0 * m0
            } else {
                d
            }
        };
        d[0] = end(h[0], h[1], delta[0], delta[1]);
        d[n - 1] = end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        d
    }
}

/// Constitutive constants of the hydrogel free energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HydrogelParams {
    /// Dimensionless chain density of the dry network.
    pub nv: f64,
    /// Free-swelling stretch relative to the dry network.
    pub lambda0: f64,
    /// Flory–Huggins interaction parameter.
    pub chi: f64,
    #[serde(default)]
    pub calibration: CompositionCalibration,
}

impl Default for HydrogelParams {
    fn default() -> Self {
        Self { nv: 0.0854, lambda0: 2.2617, chi: -0.7363, calibration: CompositionCalibration::default() }
    }
}

impl HydrogelParams {
    pub fn validate(&self) -> Result<(), GelError> {
        if !(self.nv > 0.0) {
            return Err(GelError::Params(format!("nv must be positive, got {}", self.nv)));
        }
        if !(self.lambda0 > 1.0) {
            return Err(GelError::Params(format!("lambda0 must exceed 1, got {}", self.lambda0)));
        }
        if !self.chi.is_finite() {
            return Err(GelError::Params("chi must be finite".into()));
        }
        self.calibration.validate()
    }

    /// λ0⁻³, the free-swelling-frame volume ratio of the dry network.
    pub fn dry_limit(&self) -> f64 {
        self.lambda0.powi(-3)
    }
}

/// Non-responsive material constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HardMaterialParams {
    /// Neo-Hookean stiffness, MPa.
    pub c10: f64,
    /// Compressibility, MPa⁻¹.
    pub d1: f64,
    /// Hard-to-soft elastic modulus ratio.
    pub modulus_ratio_n: f64,
}

impl Default for HardMaterialParams {
    fn default() -> Self {
        Self { c10: 0.015, d1: 10.0, modulus_ratio_n: 2.0 }
    }
}

/// Which way a responsive part is relaxing; selects the kinetic time constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Deswelling toward water-rich states (slow).
    TowardWater,
    /// Swelling toward ethyl-lactate-rich states (fast).
    TowardEl,
}

/// Swelling state of one responsive part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwellState {
    pub lambda: f64,
    pub lambda_eq: f64,
    pub direction: Direction,
}

impl SwellState {
    /// A part resting at equilibrium.
    pub fn at_equilibrium(lambda: f64) -> Self {
        Self { lambda, lambda_eq: lambda, direction: Direction::TowardEl }
    }

    /// Volume ratio to the free-swelling state.
    pub fn jp(&self) -> f64 {
        self.lambda * self.lambda * self.lambda
    }
}

fn check_jp(jp: f64, params: &HydrogelParams) -> Result<(), GelError> {
    let limit = params.dry_limit();
    if !(jp > limit) {
        return Err(GelError::Domain { jp, limit });
    }
    Ok(())
}

/// Free energy density for volume ratio `jp`, deviatoric invariant `i1bar`
/// and normalised chemical potential `mu_over_kt`.
pub fn free_energy(jp: f64, i1bar: f64, mu_over_kt: f64, params: &HydrogelParams) -> Result<f64, GelError> {
    check_jp(jp, params)?;
    if !(i1bar >= 3.0) {
        return Err(GelError::Invariant(i1bar));
    }
    let l0 = params.lambda0;
    let a = params.dry_limit();
    let elastic = 0.5 * params.nv * (jp.powf(2.0 / 3.0) * i1bar / l0 - 3.0 * a - 2.0 / l0 * (l0.powi(3) * jp).ln());
    let mixing = (jp - a) * (jp / (jp - a)).ln();
    let interaction = -params.chi / (l0.powi(6) * jp);
    let loading = -mu_over_kt * (jp - a);
    Ok(elastic + mixing + interaction + loading)
}

/// `∂W/∂J'` along the isotropic branch, without the loading term.
fn stress_free(jp: f64, params: &HydrogelParams) -> f64 {
    let a = params.dry_limit();
    params.nv / params.lambda0 * (jp.powf(-1.0 / 3.0) - 1.0 / jp) + (jp / (jp - a)).ln() - a / jp
        + params.chi * a * a / (jp * jp)
}

/// `∂²W/∂J'²` along the isotropic branch.
fn stiffness(jp: f64, params: &HydrogelParams) -> f64 {
    let a = params.dry_limit();
    params.nv / params.lambda0 * (jp.powi(-2) - jp.powf(-4.0 / 3.0) / 3.0) - a * a / (jp * jp * (jp - a))
        - 2.0 * params.chi * a * a / (jp * jp * jp)
}

/// Analytic derivative of [`free_energy`] in `J'` with `Ī₁ ≡ 3`.
pub fn dw_djp(jp: f64, mu_over_kt: f64, params: &HydrogelParams) -> Result<f64, GelError> {
    check_jp(jp, params)?;
    Ok(stress_free(jp, params) - mu_over_kt)
}

/// Equilibrium solver with the stable bracket precomputed.
///
/// `μ(J') = ∂W/∂J' + μ` is not monotone over the whole admissible range: it
/// falls from +∞ near the dry limit to a minimum, rises, then decays again at
/// large swelling. Equilibria on the falling parts are energy maxima, so the
/// solver brackets the rising (convex) branch, where the root is unique.
#[derive(Debug, Clone, PartialEq)]
pub struct GelModel {
    pub params: HydrogelParams,
    stable: (f64, f64),
}

impl GelModel {
    pub fn new(params: HydrogelParams) -> Result<Self, GelError> {
        params.validate()?;
        let stable = stable_bracket(&params)?;
        Ok(Self { params, stable })
    }

    /// Volume-ratio interval of the stable branch.
    pub fn stable_bracket(&self) -> (f64, f64) {
        self.stable
    }

    /// Range of `μ/kT` for which an equilibrium exists.
    pub fn mu_range(&self) -> (f64, f64) {
        (stress_free(self.stable.0, &self.params), stress_free(self.stable.1, &self.params))
    }

    pub fn equilibrium_jp(&self, mu_over_kt: f64) -> Result<f64, GelError> {
        let (min, max) = self.mu_range();
        if !(mu_over_kt >= min && mu_over_kt <= max) {
            return Err(GelError::NoRoot { mu: mu_over_kt, min, max });
        }
        let p = &self.params;
        let root = roots::newton_bisect(
            |j| stress_free(j, p) - mu_over_kt,
            |j| stiffness(j, p),
            self.stable.0,
            self.stable.1,
            200,
        )?;
        Ok(root)
    }

    pub fn equilibrium_lambda(&self, mu_over_kt: f64) -> Result<f64, GelError> {
        Ok(self.equilibrium_jp(mu_over_kt)?.cbrt())
    }

    /// The chemical potential that holds the gel at swelling ratio `lambda`.
    pub fn mu_for_lambda(&self, lambda: f64) -> Result<f64, GelError> {
        let jp = lambda.powi(3);
        check_jp(jp, &self.params)?;
        Ok(stress_free(jp, &self.params))
    }

    pub fn env_to_mu(&self, water_fraction: f64) -> Result<f64, GelError> {
        let lambda = self.params.calibration.lambda_at(water_fraction)?;
        self.mu_for_lambda(lambda)
    }

    /// Equilibrium swelling ratio in a solvent of the given water fraction.
    pub fn lambda_eq_at(&self, water_fraction: f64) -> Result<f64, GelError> {
        self.equilibrium_lambda(self.env_to_mu(water_fraction)?)
    }
}

fn stable_bracket(params: &HydrogelParams) -> Result<(f64, f64), GelError> {
    let lo = JP_MIN_FACTOR * params.dry_limit();
    let hi = JP_MAX;
    const N: usize = 400;
    let grid: Vec<f64> = (0..=N).map(|i| lo * (hi / lo).powf(i as f64 / N as f64)).collect();
    let k = |j: f64| stiffness(j, params);
    // maximal runs of positive stiffness, endpoints refined by bisection
    let mut runs: Vec<(f64, f64)> = Vec::new();
    let mut start: Option<f64> = if k(grid[0]) > 0.0 { Some(grid[0]) } else { None };
    for w in grid.windows(2) {
        let (k0, k1) = (k(w[0]), k(w[1]));
        if k0 <= 0.0 && k1 > 0.0 {
            start = Some(roots::bisect(k, w[0], w[1], 200)?);
        } else if k0 > 0.0 && k1 <= 0.0 {
            let end = roots::bisect(k, w[0], w[1], 200)?;
            runs.push((start.take().unwrap_or(w[0]), end));
        }
    }
    if let Some(s) = start {
        runs.push((s, hi));
    }
    let contains_free = runs.iter().copied().find(|&(a, b)| a <= 1.0 && 1.0 <= b);
    contains_free
        .or_else(|| runs.iter().copied().max_by(|x, y| (x.1 - x.0).total_cmp(&(y.1 - y.0))))
        .ok_or_else(|| GelError::Params("free energy has no convex swelling branch".into()))
}

/// Equilibrium swelling ratio for a chemical potential.
pub fn equilibrium_lambda(mu_over_kt: f64, params: &HydrogelParams) -> Result<f64, GelError> {
    GelModel::new(params.clone())?.equilibrium_lambda(mu_over_kt)
}

/// Chemical potential reproducing the calibrated swelling at `water_fraction`.
pub fn env_to_mu(water_fraction: f64, params: &HydrogelParams) -> Result<f64, GelError> {
    GelModel::new(params.clone())?.env_to_mu(water_fraction)
}

/// Swelling-vs-composition table for one printing laser power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaserPowerTable {
    pub laser_power_mw: f64,
    pub anchors: Vec<Anchor>,
}

/// On-disk calibration document (TOML).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub schema_version: u32,
    pub constitutive: Constitutive,
    pub composition: Composition,
    #[serde(default)]
    pub laser_power_tables: Vec<LaserPowerTable>,
    #[serde(default)]
    pub hard: HardMaterialParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constitutive {
    pub nv: f64,
    pub lambda0: f64,
    pub chi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Composition {
    /// Printing laser power of the default part, mW.
    pub laser_power_mw: f64,
    #[serde(default)]
    pub interpolation: Interpolation,
    pub anchors: Vec<Anchor>,
}

impl Default for CalibrationFile {
    fn default() -> Self {
        let p = HydrogelParams::default();
        Self {
            schema_version: 1,
            constitutive: Constitutive { nv: p.nv, lambda0: p.lambda0, chi: p.chi },
            composition: Composition {
                laser_power_mw: 12.0,
                interpolation: p.calibration.interpolation,
                anchors: p.calibration.anchors,
            },
            laser_power_tables: Vec::new(),
            hard: HardMaterialParams::default(),
        }
    }
}

impl CalibrationFile {
    pub fn from_toml(text: &str) -> Result<Self, GelError> {
        let file: CalibrationFile = toml::from_str(text).map_err(|e| GelError::Params(e.to_string()))?;
        file.params()?.validate()?;
        Ok(file)
    }

    /// Parameters for the default part.
    pub fn params(&self) -> Result<HydrogelParams, GelError> {
        self.params_for(self.composition.laser_power_mw)
    }

    /// Parameters for a part printed at `laser_power_mw`; falls back to the
    /// default table when no table matches.
    pub fn params_for(&self, laser_power_mw: f64) -> Result<HydrogelParams, GelError> {
        let anchors = self
            .laser_power_tables
            .iter()
            .find(|t| (t.laser_power_mw - laser_power_mw).abs() < 1e-9)
            .map(|t| t.anchors.clone())
            .unwrap_or_else(|| self.composition.anchors.clone());
        let params = HydrogelParams {
            nv: self.constitutive.nv,
            lambda0: self.constitutive.lambda0,
            chi: self.constitutive.chi,
            calibration: CompositionCalibration { anchors, interpolation: self.composition.interpolation },
        };
        params.validate()?;
        Ok(params)
    }
}
