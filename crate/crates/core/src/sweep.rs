//! Parameter sweeps that bypass the world and tabulate the gel and bilayer
//! models directly.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bilayer::{bend_angle, delta_theta, BilayerSpec};
use crate::gel::{Direction, GelError, GelModel, SwellState};
use crate::kinetics::{relax, tau_for, KineticsParams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SweepError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error(transparent)]
    Gel(#[from] GelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    SwellCurve,
    TransitionCurve,
    BilayerRatio,
    CycleRepeat,
}

impl SweepKind {
    pub const ALL: [SweepKind; 4] =
        [SweepKind::SwellCurve, SweepKind::TransitionCurve, SweepKind::BilayerRatio, SweepKind::CycleRepeat];

    pub fn as_str(self) -> &'static str {
        match self {
            SweepKind::SwellCurve => "swell_curve",
            SweepKind::TransitionCurve => "transition_curve",
            SweepKind::BilayerRatio => "bilayer_ratio",
            SweepKind::CycleRepeat => "cycle_repeat",
        }
    }
}

impl fmt::Display for SweepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepKind {
    type Err = SweepError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.replace('-', "_").to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == norm || k.as_str().replace('_', "") == norm)
            .ok_or_else(|| SweepError::Grid(format!("unknown sweep kind '{s}'")))
    }
}

/// Grid settings for every sweep kind; each kind reads only its own fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepParams {
    /// Number of water-fraction samples on [0, 1].
    pub water_points: usize,
    /// Transition curve length and spacing, s.
    pub t_end: f64,
    pub t_step: f64,
    /// Soft-to-hard thickness ratios.
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub ratio_step: f64,
    /// Water fraction the bilayer is bent in.
    pub bend_water_fraction: f64,
    pub cycles: usize,
    /// Each half cycle lasts this many time constants of its direction.
    pub settle_taus: f64,
    /// Integration step of the cycle sweep, s.
    pub cycle_dt: f64,
}

impl Default for SweepParams {
    fn default() -> Self {
        Self {
            water_points: 101,
            t_end: 90.0,
            t_step: 0.5,
            ratio_min: 0.5,
            ratio_max: 4.0,
            ratio_step: 0.1,
            bend_water_fraction: 1.0,
            cycles: 8,
            settle_taus: 25.0,
            cycle_dt: 0.1,
        }
    }
}

/// A numeric table with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| *c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    /// CSV with nine decimals, stable across runs and platforms.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", self.columns.join(","))?;
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|v| format!("{v:.9}")).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = Vec::new();
        self.write_csv(&mut out).expect("writing to memory");
        String::from_utf8(out).expect("ascii output")
    }
}

/// Evenly spaced points from `lo` to `hi` inclusive with spacing `step`.
fn stepped(lo: f64, hi: f64, step: f64, what: &str) -> Result<Vec<f64>, SweepError> {
    if !(lo.is_finite() && hi.is_finite() && step > 0.0 && hi >= lo) {
        return Err(SweepError::Grid(format!("{what}: need finite lo <= hi and positive step")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    if n > 10_000_000 {
        return Err(SweepError::Grid(format!("{what}: too many points")));
    }
    Ok((0..=n).map(|i| lo + i as f64 * step).collect())
}

pub fn run_sweep(
    kind: SweepKind,
    p: &SweepParams,
    gel: &GelModel,
    kinetics: &KineticsParams,
    bilayer: &BilayerSpec,
) -> Result<Table, SweepError> {
    match kind {
        SweepKind::SwellCurve => swell_curve(p, gel),
        SweepKind::TransitionCurve => transition_curve(p, gel, kinetics),
        SweepKind::BilayerRatio => bilayer_ratio(p, gel, bilayer),
        SweepKind::CycleRepeat => cycle_repeat(p, gel, kinetics),
    }
}

/// Equilibrium swelling ratio against water fraction.
pub fn swell_curve(p: &SweepParams, gel: &GelModel) -> Result<Table, SweepError> {
    if p.water_points < 2 {
        return Err(SweepError::Grid("water_points must be at least 2".into()));
    }
    let n = p.water_points - 1;
    let rows = (0..=n)
        .map(|i| {
            let phi = i as f64 / n as f64;
            Ok(vec![phi, gel.lambda_eq_at(phi)?])
        })
        .collect::<Result<_, SweepError>>()?;
    Ok(Table { columns: vec!["water_fraction", "lambda_eq"], rows })
}

/// Swelling ratio over time after switching between pure ethyl lactate and
/// pure water, in both directions.
pub fn transition_curve(p: &SweepParams, gel: &GelModel, k: &KineticsParams) -> Result<Table, SweepError> {
    let times = stepped(0.0, p.t_end, p.t_step, "time")?;
    let (el, water) = (gel.lambda_eq_at(0.0)?, gel.lambda_eq_at(1.0)?);
    let to_water = SwellState::at_equilibrium(el);
    let to_el = SwellState::at_equilibrium(water);
    let rows = times
        .iter()
        .map(|&t| {
            vec![
                t,
                relax(to_water, water, t, k, Direction::TowardWater).lambda,
                relax(to_el, el, t, k, Direction::TowardEl).lambda,
            ]
        })
        .collect();
    Ok(Table { columns: vec!["time", "lambda_to_water", "lambda_to_el"], rows })
}

/// Bend angle in the bending solvent and its change from the straight state,
/// against soft-to-hard thickness ratio.
pub fn bilayer_ratio(p: &SweepParams, gel: &GelModel, template: &BilayerSpec) -> Result<Table, SweepError> {
    if !(p.ratio_min > 0.0) {
        return Err(SweepError::Grid("ratio_min must be positive".into()));
    }
    if !(0.0..=1.0).contains(&p.bend_water_fraction) {
        return Err(SweepError::Grid("bend_water_fraction outside [0, 1]".into()));
    }
    let ratios = stepped(p.ratio_min, p.ratio_max, p.ratio_step, "ratio")?;
    let rows = ratios
        .iter()
        .map(|&r| {
            let s = template.with_thickness_ratio(r);
            Ok(vec![r, bend_angle(&s, p.bend_water_fraction, gel)?, delta_theta(&s, p.bend_water_fraction, gel)?])
        })
        .collect::<Result<_, SweepError>>()?;
    Ok(Table { columns: vec!["ratio", "theta_deg", "delta_theta_deg"], rows })
}

/// Alternate pure ethyl lactate and pure water, each long enough to settle,
/// and record the swelling ratio at the end of every half cycle.
pub fn cycle_repeat(p: &SweepParams, gel: &GelModel, k: &KineticsParams) -> Result<Table, SweepError> {
    if p.cycles == 0 || !(p.settle_taus > 0.0) || !(p.cycle_dt > 0.0) {
        return Err(SweepError::Grid("cycles, settle_taus and cycle_dt must be positive".into()));
    }
    let (el, water) = (gel.lambda_eq_at(0.0)?, gel.lambda_eq_at(1.0)?);
    let mut s = SwellState::at_equilibrium(water);
    let phase = |s: &mut SwellState, target: f64, dir: Direction| {
        let duration = p.settle_taus * tau_for(dir, k.laser_power_mw, k);
        let steps = (duration / p.cycle_dt).ceil() as usize;
        for _ in 0..steps {
            *s = relax(*s, target, p.cycle_dt, k, dir);
        }
        s.lambda
    };
    let rows = (1..=p.cycles)
        .map(|c| {
            let a = phase(&mut s, el, Direction::TowardEl);
            let b = phase(&mut s, water, Direction::TowardWater);
            vec![c as f64, a, b]
        })
        .collect();
    Ok(Table { columns: vec!["cycle", "lambda_el", "lambda_water"], rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gel::HydrogelParams;

    fn gel() -> GelModel {
        GelModel::new(HydrogelParams::default()).unwrap()
    }

    #[test]
    fn kinds_parse() {
        for k in SweepKind::ALL {
            assert_eq!(k.as_str().parse::<SweepKind>().unwrap(), k);
        }
        assert_eq!("SwellCurve".parse::<SweepKind>().unwrap(), SweepKind::SwellCurve);
        assert_eq!("cycle-repeat".parse::<SweepKind>().unwrap(), SweepKind::CycleRepeat);
        assert!("nope".parse::<SweepKind>().is_err());
    }

    #[test]
    fn swell_curve_endpoints() {
        let t = swell_curve(&SweepParams::default(), &gel()).unwrap();
        let l = t.column("lambda_eq").unwrap();
        assert_eq!(l.len(), 101);
        assert!((l[0] - 0.927).abs() < 1e-9);
        assert!((l[40] - 1.02).abs() < 1e-9);
        assert!((l[100] - 0.753).abs() < 1e-9);
    }

    #[test]
    fn transition_curve_starts_at_endpoints() {
        let t = transition_curve(&SweepParams::default(), &gel(), &KineticsParams::default()).unwrap();
        assert!((t.rows[0][1] - 0.927).abs() < 1e-9 && (t.rows[0][2] - 0.753).abs() < 1e-9);
        assert_eq!(t.rows.len(), 181);
    }

    #[test]
    fn grid_errors() {
        let g = gel();
        let k = KineticsParams::default();
        let b = BilayerSpec::default();
        let bad = [
            SweepParams { water_points: 1, ..SweepParams::default() },
            SweepParams { t_step: 0.0, ..SweepParams::default() },
            SweepParams { ratio_min: 3.0, ratio_max: 1.0, ..SweepParams::default() },
            SweepParams { cycles: 0, ..SweepParams::default() },
        ];
        for (kind, p) in SweepKind::ALL.into_iter().zip(bad) {
            assert!(matches!(run_sweep(kind, &p, &g, &k, &b), Err(SweepError::Grid(_))), "{kind}");
        }
    }

    #[test]
    fn csv_has_nine_decimals() {
        let t = Table { columns: vec!["a", "b"], rows: vec![vec![1.0, 1.0 / 3.0]] };
        assert_eq!(t.to_csv_string(), "a,b\n1.000000000,0.333333333\n");
    }
}
