use super::*;
use crate::field::{Grid, SampledField};
use crate::forms::tests::random_field;
use crate::forms::{evaluate_kernel, Budget};
use crate::kernelspace::besov_norm;
use crate::numeric::bump_profile;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Smooth in α on [1, 2]^n, odd in v on |v| ≤ 1.
fn test_kernel(n: usize, d: usize, res: usize) -> KernelB {
    KernelB::new(n, d, vec![(1.0, 2.0); n], 1.0, res, res, move |a, v| {
        let w: f64 = a.iter().map(|t| bump_profile((2.0 * t - 3.0).powi(2))).product();
        let r2: f64 = v.iter().map(|c| c * c).sum();
        w * v[0] * bump_profile(r2)
    })
    .unwrap()
    .declare_cancellation()
    .unwrap()
}

/// Like `test_kernel` on α₁ ∈ [2, 3], α₂ ∈ [−3, −2], where every
/// permutation of four slots has a gate-respecting chain.
fn mixed_sign_kernel(res: usize) -> KernelB {
    KernelB::new(2, 1, vec![(2.0, 3.0), (-3.0, -2.0)], 1.0, res, res, |a, v| {
        let w = bump_profile((2.0 * a[0] - 5.0).powi(2)) * bump_profile((2.0 * a[1] + 5.0).powi(2));
        w * v[0] * bump_profile(v[0] * v[0])
    })
    .unwrap()
    .declare_cancellation()
    .unwrap()
}

fn fields(grid: Grid, count: usize, rng: &mut ChaCha8Rng) -> Vec<SampledField> {
    (0..count).map(|_| random_field(grid, rng)).collect()
}

fn check_identity(s: &KernelB, p: &Permutation, grid: Grid, tuples: usize, seed: u64) {
    let (out, chain) = ell_general(s, p).unwrap();
    assert_eq!(chain.composed(), *p);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let budget = Budget::default();
    for _ in 0..tuples {
        let b = fields(grid, s.n + 2, &mut rng);
        let lhs = evaluate_kernel(&out, &b, &budget).unwrap();
        let rhs = evaluate_kernel(s, &p.permute(&b), &budget).unwrap();
        let tol = 3.0 * (lhs.error_estimate + rhs.error_estimate) + 1e-12;
        assert!(
            (lhs.value - rhs.value).abs() <= tol,
            "{p}: {} vs {} (tol {tol})",
            lhs.value,
            rhs.value
        );
    }
}

#[test]
fn permutation_algebra() {
    let p = Permutation::from_one_based(&[2, 1, 3, 4]).unwrap();
    assert!(p.compose(&p.inverse()).is_identity());
    assert_eq!(p.permute(&['a', 'b', 'c', 'd']), vec!['b', 'a', 'c', 'd']);
    assert!(Permutation::new(vec![0, 0, 1]).is_err());
    assert!(is_first_n_permutation(&p));
}

#[test]
fn identity_permutation_gives_empty_chain() {
    let s = test_kernel(2, 1, 8);
    let (out, chain) = ell_general(&s, &Permutation::identity(4)).unwrap();
    assert!(chain.links.is_empty());
    assert_eq!(out.eval(&[1.3, 1.6], &[0.2]), s.eval(&[1.3, 1.6], &[0.2]));
}

#[test]
fn swap_permutation_is_one_link() {
    let s = test_kernel(1, 1, 8);
    let p = Permutation::transposition(3, 1, 2).unwrap();
    let (out, chain) = ell_general(&s, &p).unwrap();
    assert_eq!(chain.links, vec![Generator::SwapLastTwo]);
    let direct = swap_last_two(&s).unwrap();
    for (a, v) in [(-0.5, 0.3), (-0.2, -0.7)] {
        assert_eq!(out.eval(&[a], &[v]), direct.eval(&[a], &[v]));
    }
}

#[test]
fn swap_is_an_involution() {
    let s = test_kernel(2, 1, 8);
    let twice = swap_last_two(&swap_last_two(&s).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let a = [rng.gen_range(1.0..2.0), rng.gen_range(1.0..2.0)];
        let v = [rng.gen_range(-1.0..1.0)];
        assert_eq!(twice.eval(&a, &v), s.eval(&a, &v));
    }
    assert!((swap_last_two(&s).unwrap().l1_norm() - s.l1_norm()).abs() <= 1e-8 * s.l1_norm());
}

#[test]
fn transposition_chain_matches_closed_form() {
    let (n, d) = (2, 2);
    let s = test_kernel(n, d, 6);
    let out = ell_transposition(&s).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let b: Vec<f64> = vec![rng.gen_range(0.5..1.0), rng.gen_range(0.4..2.1)];
        let w: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let b1 = b[0];
        let a = [1.0 / b1, b[1] / b1];
        let v: Vec<f64> = w.iter().map(|c| b1 * c).collect();
        let expect = b1.abs().powi(d as i32 - n as i32 - 1) * s.eval(&a, &v);
        assert!((out.eval(&b, &w) - expect).abs() <= 1e-10 * (1.0 + expect.abs()));
    }
}

#[test]
fn some_permutations_are_blocked_on_a_positive_box() {
    let p = Permutation::from_one_based(&[4, 3, 1, 2]).unwrap();
    let r = decompose_permutation(&p, &[(1.0, 2.0), (1.0, 2.0)], 0.125);
    assert!(matches!(r, Err(Error::SingularSupport(_))));
}

#[test]
fn transposition_rejects_support_near_zero() {
    let s = KernelB::new(1, 1, vec![(0.0, 1.0)], 1.0, 8, 8, |_, v| v[0]).unwrap();
    assert!(matches!(ell_transposition(&s), Err(Error::SingularSupport(_))));
}

#[test]
fn inversion_support_and_involution() {
    let g = BoxFn::new(vec![(1.0, 2.0), (-1.0, 1.0)], |s| s[0] * (1.0 - s[1] * s[1])).unwrap();
    let j = inversion_j(&g, 0.125).unwrap();
    assert_eq!(j.bbox[0], (0.5, 1.0));
    let jj = inversion_j(&j, 0.125).unwrap();
    for s in [[1.2, 0.3], [1.9, -0.8], [1.5, 0.0]] {
        assert!((jj.eval(&s) - g.eval(&s)).abs() <= 1e-10);
    }
    let res = 256;
    let h = 1.0 / res as f64;
    assert!((j.l1_norm(res) - g.l1_norm(res)).abs() <= 2.0 * h * g.l1_norm(res));
}

#[test]
fn shear_m_trivial_for_n_one_and_isometric() {
    let g = BoxFn::new(vec![(1.0, 2.0), (-1.0, 1.0), (0.0, 1.0)], |s| {
        (s[0] - 1.0) * (2.0 - s[0]) * (1.0 - s[1] * s[1]) * s[2]
    })
    .unwrap();
    let m1 = shear_m(&g, 1, 0.125).unwrap();
    assert_eq!(m1.eval(&[1.3, 0.2, 0.5]), g.eval(&[1.3, 0.2, 0.5]));
    let m2 = shear_m(&g, 2, 0.125).unwrap();
    let res = 96;
    let rel = (m2.l1_norm(res) - g.l1_norm(res)).abs() / g.l1_norm(res);
    assert!(rel <= 2.0 / res as f64, "rel {rel}");
}

#[test]
fn gamma_maps_match_closed_forms() {
    let n = 2;
    let g = BoxFn::new(vec![(1.0, 2.0), (-1.0, 1.0), (-1.0, 1.0)], |s| {
        bump_profile((2.0 * s[0] - 3.0).powi(2)) * bump_profile(s[1] * s[1]) * (1.0 + s[2])
    })
    .unwrap();
    let (g1, g2) = gamma12(&g, n, 0.125).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let s = [rng.gen_range(0.5..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-1.0..1.0)];
        let s1: f64 = s[0];
        let e1 = s1.abs().powi(-(n as i32) - 1) * g.eval(&[1.0 / s1, s[1] / s1, s[2]]);
        let e2 = s1.abs().powi(1 - n as i32) * g.eval(&[s1, s[1] / s1, s[2]]);
        assert!((g1.eval(&s) - e1).abs() <= 1e-10);
        assert!((g2.eval(&s) - e2).abs() <= 1e-10);
    }
    let res = 128;
    let rel = (g1.l1_norm(res) - g.l1_norm(res)).abs() / g.l1_norm(res);
    assert!(rel <= 3.0 / res as f64 * 2.0, "rel {rel}");
    let c = fb_norm(&g1, 0.25, 48) / (n as f64 * fb_norm(&g, 0.5, 48));
    assert!(c.is_finite() && c <= 50.0, "fitted constant {c}");
}

#[test]
fn generators_preserve_l1_and_cancellation() {
    let s = test_kernel(2, 1, 32);
    let base = s.l1_norm();
    let h = 1.0 / 32.0;
    let outs = [
        perm_first_n(&s, &Permutation::from_one_based(&[2, 1]).unwrap()).unwrap(),
        swap_last_two(&s).unwrap(),
        ell_transposition(&s).unwrap(),
    ];
    for out in &outs {
        let r = l1_ratio(out, &s);
        assert!((r - 1.0).abs() <= 3.0 * h, "{}: ratio {r}", out.name);
        assert!(out.cancellation_defect() <= 1e-6, "{}", out.name);
        assert!(out.cancels_in_v);
    }
    assert!(base > 0.0);
}

#[test]
fn first_n_permutation_keeps_besov_norm() {
    let s = KernelB::new(2, 1, vec![(1.0, 2.0), (0.0, 3.0)], 1.0, 16, 32, |a, v| {
        a[0] * (1.0 + a[1]) * v[0] * bump_profile(v[0] * v[0])
    })
    .unwrap();
    let out = perm_first_n(&s, &Permutation::from_one_based(&[2, 1]).unwrap()).unwrap();
    let (a, b) = (besov_norm(&s, 0.5).unwrap(), besov_norm(&out, 0.5).unwrap());
    assert!((a.total - b.total).abs() <= 1e-8 * a.total);
}

#[test]
fn adjoint_identity_for_each_generator() {
    let grid = Grid::new(1, 2.0, 64).unwrap();
    let s1 = test_kernel(1, 1, 24);
    check_identity(&s1, &Permutation::transposition(3, 1, 2).unwrap(), grid, 4, 1);
    check_identity(&s1, &Permutation::transposition(3, 0, 1).unwrap(), grid, 4, 2);
    let s2 = test_kernel(2, 1, 12);
    check_identity(&s2, &Permutation::from_one_based(&[2, 1, 3, 4]).unwrap(), grid, 3, 3);
}

#[test]
fn adjoint_identity_for_a_four_link_permutation() {
    let grid = Grid::new(1, 2.0, 48).unwrap();
    let s = mixed_sign_kernel(12);
    let p = Permutation::from_one_based(&[4, 3, 1, 2]).unwrap();
    let chain = decompose_permutation(&p, &s.alpha_box, 0.125).unwrap();
    assert!(chain.transpositions <= 2);
    check_identity(&s, &p, grid, 2, 4);
}

#[test]
fn chain_serializes() {
    let s = test_kernel(1, 1, 8);
    let (_, chain) = ell_general(&s, &Permutation::transposition(3, 0, 1).unwrap()).unwrap();
    let js: serde_json::Value = serde_json::from_str(&chain.to_json()).unwrap();
    assert_eq!(js["links"][0]["type"], "transpose-1-(n+1)");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn every_permutation_of_four_slots_has_a_chain(images in Just((0usize..4).collect::<Vec<_>>()).prop_shuffle()) {
        let p = Permutation::new(images).unwrap();
        let chain = decompose_permutation(&p, &[(2.0, 3.0), (-3.0, -2.0)], 0.125).unwrap();
        prop_assert_eq!(chain.composed(), p);
        prop_assert!(chain.transpositions <= 2);
    }
}


#[test]
fn unweighted_transposition_fails_the_form_identity() {
    let grid = Grid::new(1, 2.0, 64).unwrap();
    let s = test_kernel(1, 1, 24);
    let out = ell_transposition(&s).unwrap();
    let inner = out.closure();
    // Drops the |β₁|^{d−n−1} factor.
    let bare = out
        .remapped(out.alpha_box.clone(), out.v_box, Arc::new(move |a: &[f64], v: &[f64]| a[0].abs() * inner(a, v)))
        .unwrap();
    let p = Permutation::transposition(3, 0, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let budget = Budget::default();
    let b = fields(grid, 3, &mut rng);
    let lhs = evaluate_kernel(&bare, &b, &budget).unwrap();
    let rhs = evaluate_kernel(&s, &p.permute(&b), &budget).unwrap();
    assert!((lhs.value - rhs.value).abs() > 3.0 * (lhs.error_estimate + rhs.error_estimate));
}
