use super::*;
use crate::field::Grid;
use crate::kernelspace::CZKernelSpec;
use crate::numeric::{bump_profile, norm2};
use proptest::prelude::*;
use rand::Rng;

pub(crate) fn bump_at(grid: Grid, c: &[f64], r: f64, amp: f64) -> SampledField {
    let c = c.to_vec();
    let reach = crate::numeric::norm(&c) + r;
    SampledField::from_fn(grid, reach, move |x| {
        let d2: f64 = x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
        amp * bump_profile(d2 / (r * r))
    })
    .unwrap()
}

/// Sum of three random bumps with Rademacher signs inside |x| ≤ 0.8.
pub(crate) fn random_field(grid: Grid, rng: &mut impl Rng) -> SampledField {
    let d = grid.dim;
    let mut out = SampledField::zeros(grid);
    for _ in 0..3 {
        let c: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.3..0.3)).collect();
        let r = rng.gen_range(0.3..0.5);
        let s = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        out = out.axpby(1.0, &bump_at(grid, &c, r, s), 1.0).unwrap();
    }
    out
}

pub(crate) fn smooth_kernel(n: usize, d: usize, res: usize) -> KernelB {
    KernelB::new(n, d, vec![(0.0, 1.0); n], 0.5, res, res, move |a, v| {
        let w: f64 = a.iter().map(|t| 1.0 + t).product();
        w * v[0] * bump_profile(4.0 * norm2(v))
    })
    .unwrap()
}

fn chi01(grid: Grid) -> SampledField {
    SampledField::from_fn(grid, 1.0 + 1e-9, |x| if x[0] >= 0.0 && x[0] <= 1.0 { 1.0 } else { 0.0 }).unwrap()
}

#[test]
fn vanishing_last_field_gives_zero() {
    let g = Grid::new(1, 2.0, 64).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let s = smooth_kernel(1, 1, 16);
    let fields = vec![random_field(g, &mut rng), random_field(g, &mut rng), SampledField::zeros(g)];
    let r = evaluate_kernel(&s, &fields, &Budget::default()).unwrap();
    assert_eq!(r.value, 0.0);
}

#[test]
fn box_oracle_one_half() {
    let g = Grid::new(1, 2.0, 256).unwrap();
    let s = KernelB::new(0, 1, vec![], 1.0, 1, 256, |_, v| if v[0].abs() <= 1.0 { 0.5 } else { 0.0 }).unwrap();
    let b = chi01(g);
    let r = evaluate_kernel(&s, &[b.clone(), b], &Budget::default()).unwrap();
    assert!((r.value - 0.5).abs() <= 4.0 * g.spacing(), "{}", r.value);
}

#[test]
fn montecarlo_matches_tensor() {
    let g = Grid::new(1, 2.0, 64).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = smooth_kernel(1, 1, 32);
    let fields: Vec<_> = (0..3).map(|_| random_field(g, &mut rng)).collect();
    let t = evaluate_kernel(&s, &fields, &Budget::default()).unwrap();
    let budget = Budget {
        method: Some(Method::Montecarlo),
        mc_samples: 1 << 18,
        seed: 11,
    };
    let m = evaluate_kernel(&s, &fields, &budget).unwrap();
    assert!((t.value - m.value).abs() <= m.error_estimate + t.error_estimate, "{t:?} {m:?}");
}

#[test]
fn montecarlo_is_thread_count_independent() {
    let g = Grid::new(1, 2.0, 64).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let s = smooth_kernel(4, 1, 6);
    let fields: Vec<_> = (0..6).map(|_| random_field(g, &mut rng)).collect();
    let budget = Budget {
        method: None,
        mc_samples: 50_000,
        seed: 99,
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| evaluate_kernel(&s, &fields, &budget).unwrap())
    };
    let (a, b) = (run(1), run(4));
    assert_eq!(a.method, Method::Montecarlo);
    assert_eq!(a.value.to_bits(), b.value.to_bits());
    assert_eq!(a.error_estimate.to_bits(), b.error_estimate.to_bits());
}

#[test]
fn translation_invariance() {
    let g = Grid::new(1, 2.0, 128).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let s = smooth_kernel(1, 1, 32);
    let fields: Vec<_> = (0..3).map(|_| random_field(g, &mut rng)).collect();
    let shifted: Vec<_> = fields.iter().map(|f| f.translate(&[0.25]).unwrap()).collect();
    let a = evaluate_kernel(&s, &fields, &Budget::default()).unwrap();
    let b = evaluate_kernel(&s, &shifted, &Budget::default()).unwrap();
    assert!((a.value - b.value).abs() <= 2.0 * (a.error_estimate + b.error_estimate) + 1e-14);
}

#[test]
fn superposition_in_each_slot() {
    let g = Grid::new(1, 2.0, 64).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let s = smooth_kernel(1, 1, 16);
    let base: Vec<_> = (0..3).map(|_| random_field(g, &mut rng)).collect();
    for slot in 0..3 {
        let other = random_field(g, &mut rng);
        let mut f1 = base.clone();
        let mut f2 = base.clone();
        let mut f12 = base.clone();
        f2[slot] = other.clone();
        f12[slot] = base[slot].axpby(2.0, &other, -3.0).unwrap();
        f1[slot] = base[slot].clone();
        let b = Budget::default();
        let v1 = evaluate_kernel(&s, &f1, &b).unwrap();
        let v2 = evaluate_kernel(&s, &f2, &b).unwrap();
        let v12 = evaluate_kernel(&s, &f12, &b).unwrap();
        assert!((v12.value - (2.0 * v1.value - 3.0 * v2.value)).abs() <= 1e-12 * (1.0 + v12.value.abs()));
    }
}

#[test]
fn symmetry_of_first_slots() {
    let g = Grid::new(1, 2.0, 64).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let s = KernelB::new(2, 1, vec![(0.0, 1.0), (0.0, 1.0)], 0.5, 12, 16, |a, v| {
        (1.0 + a[0] + 2.0 * a[1] * a[1]) * v[0] * bump_profile(4.0 * v[0] * v[0])
    })
    .unwrap();
    let swapped = KernelB::new(2, 1, vec![(0.0, 1.0), (0.0, 1.0)], 0.5, 12, 16, |a, v| {
        (1.0 + a[1] + 2.0 * a[0] * a[0]) * v[0] * bump_profile(4.0 * v[0] * v[0])
    })
    .unwrap();
    let f: Vec<_> = (0..4).map(|_| random_field(g, &mut rng)).collect();
    let pf = vec![f[1].clone(), f[0].clone(), f[2].clone(), f[3].clone()];
    let b = Budget::default();
    let x = evaluate_kernel(&swapped, &f, &b).unwrap();
    let y = evaluate_kernel(&s, &pf, &b).unwrap();
    assert!((x.value - y.value).abs() <= 2.0 * (x.error_estimate + y.error_estimate) + 1e-13);
}

#[test]
fn dilation_identities() {
    let g = Grid::new(1, 4.0, 256).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let s = smooth_kernel(1, 1, 32);
    let fields: Vec<_> = (0..3).map(|_| random_field(g, &mut rng)).collect();
    let p = ExponentTuple::new(vec![4.0, 4.0, 2.0]).unwrap();
    let inst = FormInstance::new(s, fields).unwrap().with_exponents(p).unwrap();
    let b = Budget::default();
    let r0 = evaluate_dilated(&inst, 0, &b).unwrap();
    let direct0 = evaluate_form(&inst, &b).unwrap();
    assert_eq!(r0.direct.value, direct0.value);
    for j in [-1, 1] {
        let r = evaluate_dilated(&inst, j, &b).unwrap();
        let tol = 3.0 * (r.direct.error_estimate + r.rescaled.error_estimate);
        assert!((r.direct.value - r.rescaled.value).abs() <= tol, "j={j}: {r:?}");
        let nrm = r.normalized.unwrap();
        let tol = 3.0 * (r.direct.error_estimate + nrm.error_estimate);
        assert!((r.direct.value - nrm.value).abs() <= tol, "j={j}");
    }
}

#[test]
fn partial_sums_of_single_piece_are_constant() {
    let g = Grid::new(1, 2.0, 64).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let s = smooth_kernel(1, 1, 16);
    let dk = DyadicKernel::from_pieces(vec![(0, s.clone())]).unwrap();
    let fields: Vec<_> = (0..3).map(|_| random_field(g, &mut rng)).collect();
    let ps = partial_sum_form(&dk, &fields, None, &Budget::default()).unwrap();
    let direct = evaluate_kernel(&s, &fields, &Budget::default()).unwrap();
    assert_eq!(ps.partial.len(), 1);
    assert_eq!(ps.partial[0].1, direct.value);

    let dk2 = DyadicKernel::from_pieces(vec![(0, s.clone()), (2, s.scaled(0.25))]).unwrap();
    let mut zeroed = fields.clone();
    zeroed[1] = SampledField::zeros(g);
    let ps = partial_sum_form(&dk2, &zeroed, None, &Budget::default()).unwrap();
    assert!(ps.partial.iter().all(|(_, v, _)| *v == 0.0));
}

#[test]
fn geometric_pieces_give_geometric_increments() {
    let g = Grid::new(1, 2.0, 128).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let s = smooth_kernel(1, 1, 16);
    let pieces: Vec<_> = (0..4).map(|j| (j, s.scaled(0.5f64.powi(j)))).collect();
    let dk = DyadicKernel::from_pieces(pieces).unwrap();
    let fields: Vec<_> = (0..3).map(|_| random_field(g, &mut rng)).collect();
    let p = ExponentTuple::new(vec![3.0, 3.0, 3.0]).unwrap();
    let ps = partial_sum_form(&dk, &fields, Some(&p), &Budget::default()).unwrap();
    for (inc, (_, bound)) in ps.increments.iter().zip(ps.holder_bounds.iter().skip(1)) {
        assert!(*inc <= bound * (1.0 + 1e-6));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn holder_bound_holds(seed in 0u64..10_000, which in 0usize..3) {
        let g = Grid::new(1, 2.0, 64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = smooth_kernel(1, 1, 16);
        let fields: Vec<_> = (0..3).map(|_| random_field(g, &mut rng)).collect();
        let tuples = [vec![3.0, 3.0, 3.0], vec![f64::INFINITY, 2.0, 2.0], vec![4.0, 2.0, 4.0]];
        let p = ExponentTuple::new(tuples[which].clone()).unwrap();
        let r = evaluate_kernel(&s, &fields, &Budget::default()).unwrap();
        let bound = holder_bound(&s, &fields, &p).unwrap();
        prop_assert!(r.value.abs() <= bound + r.error_estimate);
    }
}

fn pv() -> PVSpec {
    PVSpec::new(1.0 / 64.0, 1.5).unwrap()
}

#[test]
fn constant_coefficients_reduce_to_truncated_convolution() {
    let g = Grid::new(1, 2.0, 512).unwrap();
    let f = bump_at(g, &[0.1], 0.4, 1.0);
    let c = 1.5;
    let a = vec![SampledField::from_fn(g, 2.0, |_| c).unwrap(); 2];
    let kappa = CZKernelSpec::hilbert();
    let spec = pv();
    let x = vec![vec![-0.2], vec![0.05], vec![0.5]];
    let got = d_commutator(&kappa, &a, &f, &spec, &x).unwrap();
    let plain = d_commutator(&kappa, &[], &f, &spec, &x).unwrap();
    // Node-sum oracle for the truncated convolution.
    let h = g.spacing() / 8.0;
    for (xi, (v, p)) in x.iter().zip(got.iter().zip(&plain)) {
        assert!((v - c * c * p).abs() <= 1e-12 * (1.0 + p.abs()));
        let mut acc = 0.0;
        let m = (1.5 / h) as i64;
        for k in -m..m {
            let z = (k as f64 + 0.5) * h;
            if z.abs() >= spec.inner_radius && z.abs() <= spec.outer_radius {
                acc += f.sample(&[xi[0] - z]) / z * h;
            }
        }
        assert!((p - acc).abs() <= 1e-3 * (1.0 + acc.abs()), "{p} vs {acc}");
    }
}

#[test]
fn odd_kernel_even_data_vanishes_at_origin() {
    let g = Grid::new(2, 2.0, 64).unwrap();
    let f = bump_at(g, &[0.0, 0.0], 0.6, 1.0);
    let a = vec![bump_at(g, &[0.0, 0.0], 0.9, 2.0)];
    let kappa = CZKernelSpec::new("odd", 2, |x| x[0] / norm2(x).powf(1.5), Some(-2.0), true).unwrap();
    let v = d_commutator(&kappa, &a, &f, &pv(), &[vec![0.0, 0.0]]).unwrap();
    assert!(v[0].abs() <= 1e-12, "{}", v[0]);
}

/// Dense midpoint oracle for pv∫_{ε≤|y|≤R} f(−y) m_{0,−y}a / y dy... at x = 0.
fn calderon_oracle(a: &SampledField, f: &SampledField, spec: &PVSpec, x: f64) -> f64 {
    let m = 400_000;
    let h = (spec.outer_radius - spec.inner_radius) / m as f64;
    let mut acc = Accumulator::new();
    for sgn in [1.0, -1.0] {
        for k in 0..m {
            let r = spec.inner_radius + (k as f64 + 0.5) * h;
            let y = x - sgn * r;
            let fy = f.sample(&[y]);
            if fy == 0.0 {
                continue;
            }
            let mut mean = 0.0;
            let q = 64;
            for u in 0..q {
                let s = (u as f64 + 0.5) / q as f64;
                mean += a.sample(&[(1.0 - s) * x + s * y]);
            }
            acc.add(fy * (mean / q as f64) / (sgn * r) * h);
        }
    }
    acc.value()
}

#[test]
fn calderon_matches_dense_oracle_and_commutator() {
    let g = Grid::new(1, 2.0, 512).unwrap();
    let f = bump_at(g, &[0.15], 0.5, 1.0);
    let a = SampledField::from_fn(g, 1.8, |x| x[0] * (1.0 - crate::numeric::smoothstep5((x[0].abs() - 1.2) / 0.5))).unwrap();
    let spec = pv();
    for x in [0.0, 0.3] {
        let v = calderon_1d(&[a.clone()], &f, &spec, &[x]).unwrap()[0];
        let oracle = calderon_oracle(&a, &f, &spec, x);
        assert!((v - oracle).abs() <= 0.01 * oracle.abs(), "{v} vs {oracle}");
        let kappa = CZKernelSpec::new("cauchy", 1, |x| 1.0 / x[0], Some(-1.0), true).unwrap();
        let w = d_commutator(&kappa, &[a.clone()], &f, &spec, &[vec![x]]).unwrap()[0];
        assert!((v - w).abs() <= 1e-12);
    }
    let even = bump_at(g, &[0.0], 0.5, 1.0);
    let h0 = calderon_1d(&[], &even, &spec, &[0.0]).unwrap()[0];
    assert!(h0.abs() <= 1e-12);
}

/// The truncation error is first order in ε_in: successive halvings shrink
/// the change by a factor 2.
#[test]
fn pv_converges_linearly_in_inner_radius() {
    let g = Grid::new(1, 2.0, 1024).unwrap();
    let f = bump_at(g, &[0.1], 0.5, 1.0);
    let a = bump_at(g, &[0.0], 1.0, 1.0);
    let v: Vec<f64> = [32.0, 64.0, 128.0]
        .iter()
        .map(|k| calderon_1d(&[a.clone()], &f, &PVSpec::new(1.0 / k, 1.5).unwrap(), &[0.0]).unwrap()[0])
        .collect();
    let ratio = (v[0] - v[1]) / (v[1] - v[2]);
    assert!((ratio - 2.0).abs() <= 0.2, "{v:?}");
}

#[test]
fn rotation_zero_and_parity() {
    let g = Grid::new(2, 1.0, 32).unwrap();
    let f = bump_at(g, &[0.0, 0.0], 0.4, 1.0);
    let spec = PVSpec::new(0.125, 0.75).unwrap();
    let r = rotation_reduce(|_| 0.0, &[f.clone()], &f, &f, &spec, 16).unwrap();
    assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
    assert!(matches!(
        rotation_reduce(|t| (2.0 * t).cos(), &[f.clone()], &f, &f, &spec, 16),
        Err(Error::Parity(_))
    ));
}

#[test]
fn rotation_identity_on_coarse_grid() {
    let g = Grid::new(2, 1.5, 64).unwrap();
    let a = bump_at(g, &[0.1, -0.05], 0.6, 1.0);
    let f = bump_at(g, &[0.2, 0.1], 0.5, 1.0);
    let gg = bump_at(g, &[-0.1, 0.0], 0.5, 1.0);
    let spec = PVSpec::new(0.125, 1.0).unwrap();
    let r = rotation_reduce(f64::sin, &[a], &f, &gg, &spec, 64).unwrap();
    assert!(r.relative_gap <= 0.05, "{r:?}");
}
