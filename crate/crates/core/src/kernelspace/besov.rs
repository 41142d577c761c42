//! The four 𝓑_ε seminorms, the compact-support dyadic split, Γ_ε and 𝔐.

use super::{KernelB, NormReport};
use crate::error::{invalid, Error, Result};
use crate::numeric::{box_sum, fit_slope, norm, radial_cutoff};
use std::sync::Arc;

#[derive(Debug, Clone, Copy)]
pub struct BesovConfig {
    /// Shifts h = 2^{−m}, m = 0..=max_level, clipped to the cell width.
    pub max_level: u32,
}

impl Default for BesovConfig {
    fn default() -> Self {
        Self { max_level: 12 }
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eps) {
        return invalid(format!("ε = {eps} outside [0, 1]"));
    }
    Ok(())
}

/// Dyadic shifts 2^{−m} ≥ `cell` (within rounding), m = 0..=max_level.
fn shift_set(max_level: u32, cell: f64) -> Vec<f64> {
    (0..=max_level)
        .map(|m| 2f64.powi(-(m as i32)))
        .filter(|h| *h >= cell * (1.0 - 1e-12))
        .collect()
}

/// h^{−ε}∬|ς(p + h e_axis) − ς(p)| over the box extended by h along `axis`
/// (axis indexes the combined (α, v) coordinates).
fn shifted_difference(s: &KernelB, axis: usize, h: f64) -> f64 {
    let (mut lo, mut step, mut count) = s.quadrature_layout();
    let len = step[axis] * count[axis] as f64 + h;
    let c = (len / step[axis] - 1e-9).ceil() as usize;
    lo[axis] -= h;
    step[axis] = len / c as f64;
    count[axis] = c;
    let n = s.n;
    box_sum(&lo, &step, &count, |p| {
        let (a, v) = p.split_at(n);
        let mut q = p.to_vec();
        q[axis] += h;
        let (qa, qv) = q.split_at(n);
        (s.eval(qa, qv) - s.eval(a, v)).abs()
    })
}

pub fn besov_norm(s: &KernelB, eps: f64) -> Result<NormReport> {
    besov_norm_with(s, eps, BesovConfig::default())
}

/// 𝓑_{ε,1..4} by midpoint quadrature; the sups over h run over dyadic shifts
/// (both signs give equal values by translation invariance of the integral).
pub fn besov_norm_with(s: &KernelB, eps: f64, cfg: BesovConfig) -> Result<NormReport> {
    check_eps(eps)?;
    let n = s.n;
    let mut report = NormReport::new("besov", eps);

    let b1 = if n == 0 {
        s.l1_norm()
    } else {
        (0..n)
            .map(|i| s.integrate(|a, _, v| (1.0 + a[i].abs()).powf(eps) * v.abs()))
            .fold(0.0, f64::max)
    };
    report.set("B_eps_1", b1);

    let mut b2: f64 = 0.0;
    let steps = s.alpha_steps();
    let mut alpha_h = Vec::new();
    for i in 0..n {
        let hs = shift_set(cfg.max_level, steps[i]);
        for &h in &hs {
            b2 = b2.max(h.powf(-eps) * shifted_difference(s, i, h));
        }
        alpha_h.push(hs);
    }
    report.set("B_eps_2", b2);

    let v_h = shift_set(cfg.max_level, s.v_step());
    let mut b3: f64 = 0.0;
    for k in 0..s.d {
        for &h in &v_h {
            b3 = b3.max(h.powf(-eps) * shifted_difference(s, n + k, h));
        }
    }
    report.set("B_eps_3", b3);

    report.set("B_eps_4", s.integrate(|_, v, x| (1.0 + norm(v)).powf(eps) * x.abs()));

    report.note("alpha_h_sets", &alpha_h);
    report.note("v_h_set", &v_h);
    report.note("alpha_res", s.alpha_res);
    report.note("v_res", s.v_res);
    report.note("max_level", cfg.max_level);
    report.note("kernel", &s.name);
    Ok(report)
}

/// One piece of the compact-support split ς = Σ_m ς_m^{(2^{−m})}.
#[derive(Debug, Clone)]
pub struct SplitPiece {
    pub m: usize,
    pub kernel: KernelB,
}

fn eta0(r: f64) -> f64 {
    radial_cutoff(r, 0.125, 0.25)
}

/// ς_0 = η₀(v)ς and ς_m(α, v) = η₁(v)2^{md}ς(α, 2^m v) with η₁(v) = η₀(v) − η₀(2v);
/// each piece lives in |v| ≤ 1/4.
pub fn dyadic_split(s: &KernelB, eps: f64, depth: usize) -> Result<Vec<SplitPiece>> {
    check_eps(eps)?;
    let d = s.d;
    let mut out = Vec::with_capacity(depth + 1);
    for m in 0..=depth {
        let inner = s.clone();
        let scale = 2f64.powi(m as i32);
        let jac = scale.powi(d as i32);
        let f: super::AlphaVFn = if m == 0 {
            Arc::new(move |a: &[f64], v: &[f64]| eta0(norm(v)) * inner.eval(a, v))
        } else {
            Arc::new(move |a: &[f64], v: &[f64]| {
                let r = norm(v);
                let cut = eta0(r) - eta0(2.0 * r);
                if cut == 0.0 {
                    return 0.0;
                }
                let w: Vec<f64> = v.iter().map(|c| scale * c).collect();
                cut * jac * inner.eval(a, &w)
            })
        };
        let mut k = s.remapped(s.alpha_box.clone(), 0.25, f)?;
        k.name = format!("{}[split m={m}]", s.name);
        out.push(SplitPiece { m, kernel: k });
    }
    Ok(out)
}

/// Fitted log₂-slope of ‖ς_m‖_{𝓑_δ} against m over pieces with nonzero norm.
pub fn split_decay_slope(pieces: &[SplitPiece], delta: f64) -> Result<f64> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for p in pieces.iter().filter(|p| p.m >= 1) {
        let b = besov_norm(&p.kernel, delta)?.total;
        if b > 0.0 {
            xs.push(p.m as f64);
            ys.push(b.log2());
        }
    }
    if xs.len() < 2 {
        return Err(Error::UndefinedRatio("fewer than two nonzero split pieces".into()));
    }
    Ok(fit_slope(&xs, &ys))
}

/// Γ_ε = sup_j ‖ς_j‖_{𝓑_ε} / sup_j ‖ς_j‖_{L¹}.
pub fn gamma_eps(family: &[KernelB], eps: f64) -> Result<f64> {
    if family.is_empty() {
        return invalid("empty kernel family");
    }
    let mut num: f64 = 0.0;
    let mut den: f64 = 0.0;
    for s in family {
        num = num.max(besov_norm(s, eps)?.total);
        den = den.max(s.l1_norm());
    }
    if den == 0.0 {
        return Err(Error::UndefinedRatio("all kernels in the family vanish".into()));
    }
    Ok(num / den)
}

/// 𝔐 = sup_j ‖ς_j‖_{L¹}·log^ν(1 + nΓ_ε).
pub fn m_quantity(family: &[KernelB], n: usize, eps: f64, nu: f64) -> Result<f64> {
    let gamma = gamma_eps(family, eps)?;
    let sup_l1 = family.iter().map(|s| s.l1_norm()).fold(0.0, f64::max);
    let lg = (1.0 + n as f64 * gamma).ln();
    Ok(if nu == 0.0 { sup_l1 } else { sup_l1 * lg.powf(nu) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernelspace::tests::box_kernel;
    use proptest::prelude::*;

    #[test]
    fn box_kernel_closed_forms() {
        let s = box_kernel(512);
        let h = 1.0 / 512.0;
        let r = besov_norm(&s, 1.0).unwrap();
        assert!((r.get("B_eps_1").unwrap() - 1.5).abs() <= 2.0 * h);
        assert!((r.get("B_eps_2").unwrap() - 2.0).abs() <= 4.0 * h);
        assert!((r.get("B_eps_3").unwrap() - 1.0).abs() <= 4.0 * h);
        assert!((r.get("B_eps_4").unwrap() - 1.5).abs() <= 2.0 * h);
        let r0 = besov_norm(&s, 0.0).unwrap();
        assert!((r0.get("B_eps_1").unwrap() - 1.0).abs() <= 2.0 * h);
    }

    #[test]
    fn eps_out_of_range() {
        assert!(besov_norm(&box_kernel(8), 1.5).is_err());
        assert!(besov_norm(&box_kernel(8), -0.1).is_err());
    }

    #[test]
    fn gamma_and_m_quantity() {
        let s = box_kernel(128);
        let g0 = gamma_eps(std::slice::from_ref(&s), 0.0).unwrap();
        assert!(g0 >= 1.0);
        let g1 = gamma_eps(std::slice::from_ref(&s), 1.0).unwrap();
        let scaled = gamma_eps(&[s.scaled(3.5)], 1.0).unwrap();
        assert!((g1 - scaled).abs() <= 1e-12 * g1);
        let total = besov_norm(&s, 1.0).unwrap().total;
        assert!((g1 - total / s.l1_norm()).abs() < 1e-12);
        assert!((m_quantity(&[s.clone()], 3, 1.0, 0.0).unwrap() - s.l1_norm()).abs() < 1e-15);
        assert_eq!(m_quantity(&[s.clone()], 0, 1.0, 2.0).unwrap(), 0.0);
        let m = m_quantity(&[s.clone()], 3, 1.0, 2.0).unwrap();
        assert!((m - s.l1_norm() * (1.0 + 3.0 * g1).ln().powi(2)).abs() < 1e-12);
        let zero = s.scaled(0.0);
        assert!(matches!(gamma_eps(&[zero], 1.0), Err(Error::UndefinedRatio(_))));
    }

    #[test]
    fn split_of_narrow_kernel_is_single_piece() {
        let s = KernelB::new(1, 1, vec![(0.0, 1.0)], 0.125, 16, 64, |a, v| a[0] * (1.0 - 64.0 * v[0] * v[0])).unwrap();
        let pieces = dyadic_split(&s, 0.5, 6).unwrap();
        assert!((pieces[0].kernel.l1_norm() - s.l1_norm()).abs() < 1e-3 * s.l1_norm());
        for p in &pieces[1..] {
            assert_eq!(p.kernel.l1_norm(), 0.0);
        }
        let a = [0.3];
        for v in [-0.1, 0.0, 0.07] {
            assert_eq!(pieces[0].kernel.eval(&a, &[v]), s.eval(&a, &[v]));
        }
    }

    fn gaussian_type(v_box: f64) -> KernelB {
        KernelB::new(1, 1, vec![(0.0, 1.0)], v_box, 8, 4096, |a, v| (1.0 + a[0]) * (-v[0] * v[0]).exp()).unwrap()
    }

    #[test]
    fn split_reconstructs_gaussian() {
        let s = gaussian_type(8.0);
        let pieces = dyadic_split(&s, 0.5, 10).unwrap();
        let rec = |a: &[f64], v: &[f64]| -> f64 {
            pieces
                .iter()
                .map(|p| {
                    let t = 2f64.powi(-(p.m as i32));
                    t * p.kernel.eval(a, &[t * v[0]])
                })
                .sum()
        };
        let res = s.integrate(|a, v, x| (x - rec(a, v)).abs());
        assert!(res / s.l1_norm() <= 1e-2, "{res}");
    }

    #[test]
    fn split_pieces_decay() {
        // Polynomially decaying kernel: ‖ς_m‖ falls like 2^{−2m}.
        let s = KernelB::new(1, 1, vec![(0.0, 1.0)], 256.0, 4, 1 << 15, |_, v| (1.0 + v[0].abs()).powi(-3)).unwrap();
        let (eps, delta) = (0.5, 0.1);
        let pieces = dyadic_split(&s, eps, 6).unwrap();
        let pieces: Vec<_> = pieces.into_iter().map(|mut p| { p.kernel = p.kernel.with_resolution(4, 256); p }).collect();
        let slope = split_decay_slope(&pieces, delta).unwrap();
        assert!(slope <= -(eps - 2.0 * delta) + 0.2, "{slope}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn weighted_components_monotone_in_eps(e1 in 0.0f64..1.0, e2 in 0.0f64..1.0) {
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            let s = gaussian_type(4.0).with_resolution(8, 256);
            let a = besov_norm(&s, lo).unwrap();
            let b = besov_norm(&s, hi).unwrap();
            for key in ["B_eps_1", "B_eps_4"] {
                prop_assert!(a.get(key).unwrap() <= b.get(key).unwrap() * (1.0 + 1e-14));
            }
        }

        #[test]
        fn besov_is_absolutely_homogeneous(c in -5.0f64..5.0) {
            let s = box_kernel(32);
            let a = besov_norm(&s, 0.7).unwrap();
            let b = besov_norm(&s.scaled(c), 0.7).unwrap();
            for (k, v) in &a.components {
                let w = b.components[k];
                prop_assert!((w - c.abs() * v).abs() <= 1e-12 * v.abs().max(1.0));
            }
        }
    }
}
