//! Hydrogel free energy, equilibrium solver and composition calibration.

use microforge_core::gel::{dw_djp, free_energy, GelModel, HydrogelParams};
use proptest::prelude::*;

fn model() -> GelModel {
    GelModel::new(HydrogelParams::default()).unwrap()
}

/// Fourth-order central difference of the free energy in `J'` at `Ī₁ = 3`.
fn fd_derivative(jp: f64, mu: f64, p: &HydrogelParams) -> f64 {
    let h = 1e-3 * (jp - p.dry_limit()).min(jp);
    let w = |j: f64| free_energy(j, 3.0, mu, p).unwrap();
    (-w(jp + 2.0 * h) + 8.0 * w(jp + h) - 8.0 * w(jp - h) + w(jp - 2.0 * h)) / (12.0 * h)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn analytic_derivative_matches_finite_differences(u in 0.02f64..1.0, mu in -0.5f64..0.5) {
        let p = HydrogelParams::default();
        let a = p.dry_limit();
        let jp = a + u * (10.0 - a);
        let analytic = dw_djp(jp, mu, &p).unwrap();
        let numeric = fd_derivative(jp, mu, &p);
        let rel = (analytic - numeric).abs() / analytic.abs().max(1.0);
        prop_assert!(rel < 1e-6, "jp = {jp}, mu = {mu}: {analytic} vs {numeric}");
    }

    #[test]
    fn equilibrium_has_zero_residual(t in 0.0f64..=1.0) {
        let g = model();
        let (lo, hi) = g.mu_range();
        let mu = lo + t * (hi - lo);
        let jp = g.equilibrium_jp(mu).unwrap();
        prop_assert!(dw_djp(jp, mu, &g.params).unwrap().abs() < 1e-10);
        let (a, b) = g.stable_bracket();
        prop_assert!(jp >= a && jp <= b);
    }

    #[test]
    fn swelling_grows_with_chemical_potential(t1 in 0.0f64..=1.0, t2 in 0.0f64..=1.0) {
        let g = model();
        let (lo, hi) = g.mu_range();
        let (m1, m2) = (lo + t1.min(t2) * (hi - lo), lo + t1.max(t2) * (hi - lo));
        prop_assert!(g.equilibrium_lambda(m1).unwrap() <= g.equilibrium_lambda(m2).unwrap());
    }

    #[test]
    fn equilibrium_is_an_energy_minimum(t in 0.05f64..0.95, dj in 1e-3f64..0.05) {
        let g = model();
        let (lo, hi) = g.mu_range();
        let mu = lo + t * (hi - lo);
        let jp = g.equilibrium_jp(mu).unwrap();
        let w = |j: f64| free_energy(j, 3.0, mu, &g.params).unwrap();
        prop_assert!(w(jp) <= w(jp + dj) && w(jp) <= w(jp - dj.min(0.5 * (jp - g.params.dry_limit()))));
    }

    #[test]
    fn calibrated_swelling_stays_between_the_anchors(phi in 0.0f64..=1.0) {
        let l = model().lambda_eq_at(phi).unwrap();
        prop_assert!((0.753 - 1e-9..=1.02 + 1e-9).contains(&l), "lambda({phi}) = {l}");
    }

    #[test]
    fn mu_roundtrips_through_lambda(phi in 0.0f64..=1.0) {
        let g = model();
        let mu = g.env_to_mu(phi).unwrap();
        let l = g.equilibrium_lambda(mu).unwrap();
        prop_assert!((g.mu_for_lambda(l).unwrap() - mu).abs() < 1e-10);
    }
}

#[test]
fn anchors_are_reproduced_exactly() {
    let g = model();
    assert!((g.lambda_eq_at(0.0).unwrap() - 0.927).abs() < 1e-12);
    assert!((g.lambda_eq_at(0.4).unwrap() - 1.02).abs() < 1e-12);
    assert!((g.lambda_eq_at(1.0).unwrap() - 0.753).abs() < 1e-12);
}

#[test]
fn swelling_peaks_strictly_inside_the_composition_range() {
    let g = model();
    let l: Vec<f64> = (0..=100).map(|i| g.lambda_eq_at(i as f64 / 100.0).unwrap()).collect();
    let peak = (0..l.len()).max_by(|&a, &b| l[a].total_cmp(&l[b])).unwrap();
    assert_eq!(peak, 40);
    assert!(l[..=peak].windows(2).all(|w| w[1] > w[0]));
    assert!(l[peak..].windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn outside_the_domain_is_an_error() {
    let p = HydrogelParams::default();
    assert!(free_energy(p.dry_limit(), 3.0, 0.0, &p).is_err());
    assert!(free_energy(1.0, 2.9, 0.0, &p).is_err());
    assert!(dw_djp(0.5 * p.dry_limit(), 0.0, &p).is_err());
    assert!(model().lambda_eq_at(1.5).is_err());
    let (_, hi) = model().mu_range();
    assert!(model().equilibrium_jp(hi + 1.0).is_err());
}
