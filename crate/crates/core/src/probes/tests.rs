use super::*;
use crate::field::{Grid, SampledField};
use crate::forms::{d_commutator, PVSpec};
use crate::kernelspace::CZKernelSpec;
use crate::numeric::bump_profile;
use crate::Error;
use std::f64::consts::PI;

/// J₁ by its power series; |z| ≤ 2 needs far fewer than 30 terms.
fn bessel_j1(z: f64) -> f64 {
    let mut term = z / 2.0;
    let mut sum = term;
    for m in 1..30 {
        term *= -(z * z / 4.0) / (m as f64 * (m as f64 + 1.0));
        sum += term;
    }
    sum
}

/// B_ε[sin 2πx₁] on T² from the disk average sin(2πx₁)·2J₁(2πr)/(2πr).
fn sin_oracle(eps: f64) -> f64 {
    let m = 200_000;
    let (l0, l1) = (eps.ln(), 0.25f64.ln());
    let dl = (l1 - l0) / m as f64;
    let mut s = 0.0;
    for k in 0..m {
        let r = (l0 + (k as f64 + 0.5) * dl).exp();
        let z = 2.0 * PI * r;
        s += (1.0 - 2.0 * bessel_j1(z) / z).abs() * dl;
    }
    2.0 / PI * s
}

#[test]
fn bessel_series_matches_known_value() {
    // J₁(1) = 0.44005058574493355.
    assert!((bessel_j1(1.0) - 0.440_050_585_744_933_55).abs() < 1e-15);
}

#[test]
fn bianchini_of_constant_is_zero() {
    let f = TorusField::from_fn(2, 64, |_| 3.0).unwrap();
    assert!(bianchini_seminorm(&f, 1.0 / 16.0).unwrap().abs() < 1e-12);
}

#[test]
fn bianchini_of_sine_matches_disk_average_oracle() {
    let eps = 1.0 / 16.0;
    let f = TorusField::from_fn(2, 128, |x| (2.0 * PI * x[0]).sin()).unwrap();
    let v = bianchini_seminorm(&f, eps).unwrap();
    let oracle = sin_oracle(eps);
    assert!((v - oracle).abs() <= 0.02 * oracle, "{v} vs {oracle}");
}

#[test]
fn bianchini_is_monotone_in_eps_and_translation_invariant() {
    let f = TorusField::from_fn(2, 64, |x| (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos()).unwrap();
    let a = bianchini_seminorm(&f, 1.0 / 32.0).unwrap();
    let b = bianchini_seminorm(&f, 1.0 / 16.0).unwrap();
    assert!(a > b);
    let g = f.roll(&[5, -3]);
    let c = bianchini_seminorm(&g, 1.0 / 16.0).unwrap();
    assert!((b - c).abs() <= 2.0 / 64.0 * b);
    assert!(bianchini_seminorm(&f, 0.3).is_err());
}

#[test]
fn still_flow_gives_zero_on_both_sides() {
    let cfg = MixingConfig {
        points_per_axis: 32,
        quadrature_intervals: 4,
        ..MixingConfig::default()
    };
    let r = mixing_identity_check(&FlowSpec::still(0.5, 8), 1.0 / 16.0, &cfg).unwrap();
    assert!(r.lhs.abs() <= 1e-8 && r.rhs.abs() <= 1e-8, "{r:?}");
}

#[test]
fn shear_is_divergence_free() {
    assert_eq!(FlowSpec::shear(0.5, 16).divergence_defect(16), 0.0);
}

#[test]
fn compressible_flow_is_rejected() {
    let flow = FlowSpec::new(
        2,
        |x, _, out| {
            out[0] = (2.0 * PI * x[0]).sin();
            out[1] = 0.0;
        },
        0.5,
        16,
        |x| x[0] < 0.5,
    )
    .unwrap();
    assert!(flow.divergence_defect(16) > 1.0);
    let cfg = MixingConfig {
        points_per_axis: 32,
        quadrature_intervals: 4,
        ..MixingConfig::default()
    };
    assert!(matches!(
        mixing_identity_check(&flow, 1.0 / 16.0, &cfg),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn coarse_time_step_is_a_cfl_error() {
    let cfg = MixingConfig {
        points_per_axis: 64,
        quadrature_intervals: 1,
        ..MixingConfig::default()
    };
    let r = mixing_identity_check(&FlowSpec::shear(0.5, 2), 1.0 / 16.0, &cfg);
    assert!(matches!(r, Err(Error::TimeStep(_))));
}

#[test]
fn shear_mixing_identity_on_a_coarse_grid() {
    let cfg = MixingConfig {
        points_per_axis: 64,
        quadrature_intervals: 8,
        ..MixingConfig::default()
    };
    let r = mixing_identity_check(&FlowSpec::shear(0.5, 16), 1.0 / 16.0, &cfg).unwrap();
    assert!(r.relative_gap <= 0.05, "{r:?}");
    assert!(r.lhs > 0.0);
}

fn bump_field(grid: Grid, c: f64, r: f64) -> SampledField {
    SampledField::from_fn(grid, c.abs() + r, move |x| bump_profile((x[0] - c).powi(2) / (r * r))).unwrap()
}

#[test]
fn trilinear_form_vanishes_for_constant_field() {
    let grid = Grid::new(1, 2.0, 128).unwrap();
    let (f, g) = (bump_field(grid, 0.2, 0.5), bump_field(grid, -0.1, 0.6));
    let pv = PVSpec::new(0.05, 1.5).unwrap();
    let v = bressan_trilinear(|_, out| out[0] = 2.5, &f, &g, &pv).unwrap();
    assert_eq!(v, 0.0);
}

#[test]
fn trilinear_form_with_dilation_field_matches_commutator() {
    let grid = Grid::new(1, 2.0, 128).unwrap();
    let (f, g) = (bump_field(grid, 0.2, 0.5), bump_field(grid, -0.1, 0.6));
    let pv = PVSpec::new(0.05, 1.5).unwrap();
    let v = bressan_trilinear(|x, out| out[0] = x[0], &f, &g, &pv).unwrap();
    let probes: Vec<Vec<f64>> = (0..grid.len()).map(|i| grid.node_vec(i)).collect();
    let c = d_commutator(&CZKernelSpec::radial_power(1), &[], &f, &pv, &probes).unwrap();
    let oracle: f64 = c.iter().zip(&g.values).map(|(a, b)| a * b).sum::<f64>() * grid.cell_volume();
    assert!((v - oracle).abs() <= 1e-10 * oracle.abs(), "{v} vs {oracle}");
}

fn small_cfg(d: usize) -> SchurConfig {
    let mut c = SchurConfig::for_dim(d);
    if d == 2 {
        c.points_per_axis = 96;
        c.probes_per_axis = 3;
    }
    c
}

#[test]
fn bump_kernel_has_unit_schur_norms() {
    for d in [1, 2] {
        let cfg = small_cfg(d);
        let k = &builtin_bikernels(d).unwrap()[0];
        let r = schur_suite_with(k, 0.5, &cfg).unwrap();
        let h = 2.0 * cfg.half_extent / cfg.points_per_axis as f64;
        for name in ["Int_1", "Int_inf"] {
            let v = r.get(name).unwrap();
            assert!((v - 1.0).abs() <= 2.0 * h, "d={d} {name} = {v}");
        }
        let op = r.get("Op_eps").unwrap();
        assert!((op - r.total).abs() < 1e-15);
    }
}

#[test]
fn zero_kernel_has_zero_norms() {
    let k = BiKernel::zero(1).unwrap();
    let r = schur_suite(&k, 0.5).unwrap();
    assert!(r.components.values().chain(r.derived.values()).all(|v| *v == 0.0));
    let s = si_ann_suite(&k, 0.5).unwrap();
    assert!(s.components.values().chain(s.derived.values()).all(|v| *v == 0.0));
}

#[test]
fn schur_duality_is_exact() {
    let k = BiKernel::new(1, 0.0, |x, y| {
        (1.0 + 0.5 * x[0]) * bump_profile((x[0] - y[0] - 0.3).powi(2)) * (1.0 + y[0] * y[0])
    })
    .unwrap();
    let cfg = SchurConfig::for_dim(1);
    let a = schur_suite_with(&k, 0.5, &cfg).unwrap();
    let b = schur_suite_with(&k.dual(), 0.5, &cfg).unwrap();
    let pairs = [
        ("Int_eps_inf", "Int_eps_1"),
        ("Reg_eps_lt_inf", "Reg_eps_rt_1"),
        ("Reg_eps_rt_inf", "Reg_eps_lt_1"),
    ];
    for (x, y) in pairs {
        let (u, v) = (a.get(x).unwrap(), b.get(y).unwrap());
        assert!((u - v).abs() <= 1e-10 * u.abs().max(1.0), "{x}: {u} vs {y}: {v}");
    }
    assert!(a.get("Int_eps_1").unwrap() != a.get("Int_eps_inf").unwrap());
}

#[test]
fn averaged_annular_norm_below_both_annular_norms() {
    for d in [1, 2] {
        let cfg = small_cfg(d);
        for k in builtin_bikernels(d).unwrap() {
            let r = si_ann_suite_with(&k, 0.5, &cfg).unwrap();
            let (a1, ai, av) = (r.get("Ann_1").unwrap(), r.get("Ann_inf").unwrap(), r.get("Ann_av").unwrap());
            assert!(av <= 1.1 * a1.min(ai), "{} d={d}: {av} vs {a1}, {ai}", k.name);
            assert!(r.get("SI_eps_1").unwrap().is_finite());
        }
    }
}

#[test]
fn bump_annular_norm_below_l1() {
    let cfg = small_cfg(1);
    let k = &builtin_bikernels(1).unwrap()[0];
    let r = si_ann_suite_with(k, 0.0, &cfg).unwrap();
    assert!(r.get("Ann_1").unwrap() <= 1.0 + 1e-6);
}

#[test]
fn carleson_norm_closed_forms() {
    let cfg = CarlesonConfig::default();
    assert_eq!(carleson_norm(|_, _| 0.0, 1, (-2, 3), &cfg).unwrap(), 0.0);
    let ind = |x: &[f64], j: i32| if j == 0 && x[0].abs() <= 1.0 { 1.0 } else { 0.0 };
    let v = carleson_norm(ind, 1, (0, 0), &cfg).unwrap();
    assert!((v - 1.0).abs() <= 2.0 / 64.0, "{v}");
    for m in 0..5 {
        let v = carleson_norm(|_, _| 1.0, 1, (0, m), &cfg).unwrap();
        assert!((v - ((m + 1) as f64).sqrt()).abs() <= 0.1 * ((m + 1) as f64).sqrt());
    }
}

fn small_growth(seed: u64) -> GrowthProbeConfig {
    GrowthProbeConfig {
        n_range: (0, 2),
        mc_samples: 4096,
        seed,
        ..GrowthProbeConfig::default()
    }
}

#[test]
fn growth_probe_is_bit_reproducible_across_thread_counts() {
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let t = growth_probe(&small_growth(17)).unwrap();
            let mut buf = Vec::new();
            t.write_csv(&mut buf).unwrap();
            String::from_utf8(buf).unwrap()
        })
    };
    let a = run(1);
    assert_eq!(a, run(3));
    assert!(a.starts_with("n,ratio,bound,ratio_over_bound,seed\n"));
    assert_eq!(a.lines().count(), 4);
}

#[test]
fn growth_rows_respect_the_holder_bound() {
    let t = growth_probe(&small_growth(3)).unwrap();
    assert!(t.complete);
    for r in &t.rows {
        assert!(r.ratio <= r.kernel_l1 + r.error_slack, "{r:?}");
        assert!(r.ratio_over_bound.is_finite());
    }
    assert_eq!(t.rows[0].bound, t.rows[0].kernel_l1);
}

#[test]
fn growth_probe_needs_eight_trials() {
    let cfg = GrowthProbeConfig {
        trials: 4,
        ..GrowthProbeConfig::default()
    };
    assert!(growth_probe(&cfg).is_err());
}

#[test]
fn growth_probe_sample_cap_truncates() {
    let cfg = GrowthProbeConfig {
        max_samples: Some(1),
        ..small_growth(1)
    };
    let t = growth_probe(&cfg).unwrap();
    assert!(!t.complete);
    assert_eq!(t.rows.len(), 1);
}
