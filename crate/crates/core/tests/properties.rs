use std::f64::consts::PI;

use num_complex::Complex64;
use orrlab_core::elliptic::{assemble_conjugated_operator, h1t_norm_grid, LambdaSolver};
use orrlab_core::profiles::{composite_norm, ChannelConfig, ProfileSpec, ShearProfile};
use orrlab_core::spectral::{a_infinite_factor, a_infinite_rate, ModeField, WeightIntegral, WeightParams};
use orrlab_core::Grid;
use proptest::prelude::*;

/// Largest product over every composition of `j` into positive parts.
fn brute_force(d: &[f64], j: usize) -> f64 {
    if j == 0 {
        return 1.0;
    }
    (1..=j).map(|first| d[first] * brute_force(d, j - first)).fold(0.0, f64::max)
}

fn table() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..4.0, 9)
}

fn complex_vec(n: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b)| Complex64::new(a, b)), n)
}

fn sine_field(grid: &std::sync::Arc<Grid>, t: f64, c: &[Complex64]) -> ModeField {
    let c = c.to_vec();
    ModeField::from_fn(grid.clone(), 1.0, t, move |y| {
        c.iter().enumerate().map(|(m, a)| a * ((m + 1) as f64 * PI * y).sin()).sum()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn composite_norm_is_submultiplicative(d in table(), j1 in 1usize..=4, j2 in 1usize..=4) {
        let a = composite_norm(&d, j1).unwrap();
        let b = composite_norm(&d, j2).unwrap();
        let ab = composite_norm(&d, j1 + j2).unwrap();
        prop_assert!(a * b <= ab * (1.0 + 1e-12));
    }

    #[test]
    fn composite_norm_matches_enumeration(d in table(), j in 1usize..=8) {
        let fast = composite_norm(&d, j).unwrap();
        let slow = brute_force(&d, j);
        prop_assert!((fast - slow).abs() <= 1e-12 * slow.max(1.0));
    }

    #[test]
    fn bump_profile_g_within_bilipschitz_bounds(eps in 0.0f64..0.02, width in 0.12f64..0.3) {
        let channel = ChannelConfig::finite(2.0 * PI, 129);
        let p = ShearProfile::build(&ProfileSpec::bump(eps, 0.5, width), &channel).unwrap();
        let grid = channel.grid().unwrap();
        for g in p.sample_g(&grid.z) {
            prop_assert!(g >= p.bilip_lower - 1e-14 && g <= p.bilip_upper + 1e-14);
        }
    }

    #[test]
    fn parseval_on_the_box(values in complex_vec(64), k in -3.0f64..3.0, t in 0.0f64..20.0) {
        let grid = Grid::infinite(5.0, 64).unwrap();
        let f = ModeField::new(grid, k, t, values).unwrap();
        prop_assert!((f.l2_norm() - f.spectrum().l2_norm()).abs() <= 1e-12 * f.l2_norm().max(1e-300));
    }

    #[test]
    fn duality_holds(cu in complex_vec(5), cv in complex_vec(5), t in 0.0f64..30.0) {
        let grid = Grid::finite(97).unwrap();
        let w = WeightParams::default();
        let (u, v) = (sine_field(&grid, t, &cu), sine_field(&grid, t, &cv));
        prop_assume!(u.l2_norm() > 1e-6 && v.l2_norm() > 1e-6);
        let lam = LambdaSolver::new(&grid, 1.0, &w).unwrap();
        let d = lam.dual_norm(&u, t).unwrap();
        prop_assert!(u.inner(&v).norm() <= d.value * h1t_norm_grid(&v, t, w.c_low) * (1.0 + 1e-10));
        prop_assert!((d.value - d.via_h1t).abs() <= 1e-8 * d.value);
    }

    #[test]
    fn infinite_weight_is_non_increasing(k in -4.0f64..4.0, eta in -50.0f64..50.0, t in 0.0f64..100.0, dt in 0.0f64..5.0) {
        prop_assume!(k.abs() > 1e-3);
        let w = WeightParams::default();
        prop_assert!(a_infinite_factor(k, eta, t + dt, &w) <= a_infinite_factor(k, eta, t, &w) * (1.0 + 1e-15));
        prop_assert!(a_infinite_rate(k, eta, t, &w) >= 0.0);
    }

    #[test]
    fn weight_integral_is_non_decreasing(a in -20.0f64..20.0, t in 0.0f64..30.0, dt in 0.0f64..5.0) {
        let wi = WeightIntegral::new(0.25, 0.25, 1.0).unwrap();
        let lo = wi.value(a, t).unwrap();
        let hi = wi.value(a, t + dt).unwrap();
        prop_assert!(hi >= lo - 1e-12);
        prop_assert!(hi <= wi.limit(a).unwrap() + 1e-9);
    }

    #[test]
    fn stream_solve_respects_conjugation(values in complex_vec(64), t in 0.0f64..10.0) {
        let channel = ChannelConfig::infinite(2.0 * PI, 4.0, 64);
        let grid = channel.grid().unwrap();
        let p = ShearProfile::build(&ProfileSpec::sine(0.03), &channel).unwrap();
        let plus = assemble_conjugated_operator(&p, &grid, 1.0).unwrap();
        let minus = assemble_conjugated_operator(&p, &grid, -1.0).unwrap();
        let conj: Vec<Complex64> = values.iter().map(|c| c.conj()).collect();
        let a = plus.solve_values(&values, t).unwrap();
        let b = minus.solve_values(&conj, t).unwrap();
        let scale = a.iter().map(|c| c.norm()).fold(0.0, f64::max);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x.conj() - y).norm() <= 1e-9 * scale.max(1e-300));
        }
    }
}
