//! Truncated d-commutators, the Calderón commutator and the method of
//! rotations.

use crate::error::{invalid, Error, Result};
use crate::field::{SampledField, MAX_DIM};
use crate::kernelspace::CZKernelSpec;
use crate::numeric::{log_radial_rule, par_sum, sphere_rule, Accumulator};
use serde::Serialize;
use std::f64::consts::PI;

/// Symmetric-annulus truncation ε_in ≤ |x−y| ≤ R_out.
#[derive(Debug, Clone, Serialize)]
pub struct PVSpec {
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub annuli_per_decade: usize,
    /// Gauss–Legendre nodes per annulus (in log r).
    pub gl_nodes: usize,
    /// Directions on S^{d−1} (d = 2).
    pub directions: usize,
    /// Midpoint nodes for the segment means m_{x,y}a.
    pub segment_nodes: usize,
}

impl PVSpec {
    pub fn new(inner_radius: f64, outer_radius: f64) -> Result<Self> {
        if !(inner_radius > 0.0 && outer_radius > inner_radius && outer_radius.is_finite()) {
            return invalid("PV truncation needs 0 < ε_in < R_out < ∞");
        }
        Ok(Self {
            inner_radius,
            outer_radius,
            annuli_per_decade: 20,
            gl_nodes: 6,
            directions: 128,
            segment_nodes: 8,
        })
    }

    fn radial(&self) -> Vec<(f64, f64)> {
        let per_octave = ((self.annuli_per_decade as f64) * 2f64.log10()).ceil().max(1.0) as usize;
        log_radial_rule(self.inner_radius, self.outer_radius, per_octave, self.gl_nodes)
    }
}

#[inline]
fn product_of_means(a: &[SampledField], x: &[f64], y: &[f64], nodes: usize) -> f64 {
    let mut p = 1.0;
    for ai in a {
        p *= ai.segment_mean_unchecked(x, y, nodes);
        if p == 0.0 {
            break;
        }
    }
    p
}

fn check_inputs(d: usize, a: &[SampledField], f: &SampledField) -> Result<()> {
    if f.dim() != d || a.iter().any(|ai| ai.dim() != d) {
        return Err(Error::Dimension("kernel and field dimensions differ".into()));
    }
    if d > 2 {
        return invalid("annular quadrature implemented for d ∈ {1, 2}");
    }
    Ok(())
}

/// 𝒞[a₁,…,aₙ]f(x) = ∫_{ε_in ≤ |x−y| ≤ R_out} κ(x−y) Πᵢ m_{x,y}aᵢ f(y) dy at
/// each probe, accumulated annulus by annulus from the outside in.
pub fn d_commutator(
    kappa: &CZKernelSpec,
    a: &[SampledField],
    f: &SampledField,
    pv: &PVSpec,
    x_probe: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let d = kappa.d;
    check_inputs(d, a, f)?;
    let l = f.grid.half_extent;
    let radial = pv.radial();
    let (dirs, dw) = sphere_rule(d, pv.directions);
    x_probe
        .iter()
        .map(|x| {
            if x.len() != d {
                return Err(Error::Dimension("probe dimension".into()));
            }
            if x.iter().any(|c| c.abs() > l) {
                return invalid(format!("probe {x:?} lies outside the grid box"));
            }
            let mut acc = Accumulator::new();
            let mut y = [0.0; MAX_DIM];
            for (r, w) in &radial {
                let jac = w * r.powi(d as i32 - 1);
                for (th, tw) in dirs.iter().zip(&dw) {
                    for ax in 0..d {
                        y[ax] = x[ax] - r * th[ax];
                    }
                    let fy = f.sample(&y[..d]);
                    if fy == 0.0 {
                        continue;
                    }
                    let z: Vec<f64> = th.iter().map(|c| r * c).collect();
                    acc.add(jac * tw * kappa.kappa(&z) * fy * product_of_means(a, x, &y[..d], pv.segment_nodes));
                }
            }
            Ok(acc.value())
        })
        .collect()
}

/// 𝒞_{e₁}[a₁,…,aₙ, f](x) = pv∫(x−y)⁻¹ f(y) Πᵢ∫₀¹ aᵢ((1−u)x + uy) du dy, via
/// the d-commutator with κ(x) = 1/x.
pub fn calderon_1d(a: &[SampledField], f: &SampledField, pv: &PVSpec, x_probe: &[f64]) -> Result<Vec<f64>> {
    if f.dim() != 1 {
        return Err(Error::Dimension("the Calderón commutator is one-dimensional".into()));
    }
    let kappa = CZKernelSpec::new("cauchy", 1, |x| 1.0 / x[0], Some(-1.0), true)?;
    let probes: Vec<Vec<f64>> = x_probe.iter().map(|x| vec![*x]).collect();
    d_commutator(&kappa, a, f, pv, &probes)
}

#[derive(Debug, Clone, Serialize)]
pub struct RotationResult {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
    pub relative_gap: f64,
}

/// Subsamples per axis for the cell-averaged κ_Ω weights.
const ROTATION_SUPERSAMPLE: usize = 16;

/// ⟨𝒞_Ω[a]f, g⟩ with κ_Ω(z) = |z|^{−2}Ω(z/|z|) by a Cartesian sum with
/// cell-averaged kernel weights, against ½∫Ω(θ)⟨𝒞_θ[a, f], g⟩dθ by the
/// trapezoid rule in θ and Gauss–Legendre shells in s of both signs. Ω is
/// given as a function of the angle.
pub fn rotation_reduce<O>(
    omega: O,
    a: &[SampledField],
    f: &SampledField,
    g: &SampledField,
    pv: &PVSpec,
    theta_nodes: usize,
) -> Result<RotationResult>
where
    O: Fn(f64) -> f64 + Sync,
{
    check_inputs(2, a, f)?;
    if g.dim() != 2 || g.grid != f.grid || a.iter().any(|ai| ai.grid != f.grid) {
        return Err(Error::Dimension("rotation identity needs all fields on one 2-D grid".into()));
    }
    if theta_nodes < 4 || theta_nodes % 2 != 0 {
        return invalid("theta_nodes must be even and at least 4");
    }
    let step = 2.0 * PI / theta_nodes as f64;
    let scale = (0..theta_nodes).map(|k| omega(k as f64 * step).abs()).fold(1.0, f64::max);
    for k in 0..theta_nodes {
        let t = k as f64 * step;
        if (omega(t) + omega(t + PI)).abs() > crate::tolerances::PARITY * scale {
            return Err(Error::Parity(format!("Ω(θ+π) ≠ −Ω(θ) at θ = {t}")));
        }
    }

    let grid = f.grid;
    let h = grid.spacing();
    let n = grid.points_per_axis as isize;
    let (eps, big_r) = (pv.inner_radius, pv.outer_radius);
    let reach = (big_r / h).ceil() as isize + 1;
    let ss = ROTATION_SUPERSAMPLE;
    // Cell-averaged truncated kernel, ∫_{cell(z)} κ_Ω χ_{ε ≤ |w| ≤ R} dw.
    let mut weights: Vec<(isize, isize, f64)> = Vec::new();
    for i in -reach..=reach {
        for j in -reach..=reach {
            let (zx, zy) = (i as f64 * h, j as f64 * h);
            let r_c = (zx * zx + zy * zy).sqrt();
            if r_c + h < eps || r_c - h > big_r {
                continue;
            }
            let mut acc = Accumulator::new();
            for p in 0..ss {
                for q in 0..ss {
                    let wx = zx + ((p as f64 + 0.5) / ss as f64 - 0.5) * h;
                    let wy = zy + ((q as f64 + 0.5) / ss as f64 - 0.5) * h;
                    let r2 = wx * wx + wy * wy;
                    let r = r2.sqrt();
                    if r >= eps && r <= big_r {
                        acc.add(omega(wy.atan2(wx)) / r2);
                    }
                }
            }
            let w = acc.value() * h * h / (ss * ss) as f64;
            if w != 0.0 {
                weights.push((i, j, w));
            }
        }
    }
    let g_nodes: Vec<usize> = (0..grid.len()).filter(|&k| g.values[k] != 0.0).collect();
    let hd = grid.cell_volume();
    let lhs = par_sum(g_nodes.len(), |k| {
        let idx = g_nodes[k];
        let m = grid.multi_index(idx);
        let x = grid.node_vec(idx);
        let mut acc = Accumulator::new();
        for (i, j, w) in &weights {
            let (yi, yj) = (m[0] as isize - i, m[1] as isize - j);
            if yi < 0 || yj < 0 || yi >= n || yj >= n {
                continue;
            }
            let fy = f.values[(yi * n + yj) as usize];
            if fy == 0.0 {
                continue;
            }
            let y = [grid.coord(yi as usize), grid.coord(yj as usize)];
            acc.add(w * fy * product_of_means(a, &x, &y, pv.segment_nodes));
        }
        g.values[idx] * acc.value()
    }) * hd;

    let radial = pv.radial();
    let rhs = 0.5
        * step
        * par_sum(theta_nodes, |k| {
            let t = k as f64 * step;
            let om = omega(t);
            if om == 0.0 {
                return 0.0;
            }
            let th = [t.cos(), t.sin()];
            let mut outer = Accumulator::new();
            for &idx in &g_nodes {
                let x = grid.node_vec(idx);
                let mut acc = Accumulator::new();
                for (r, w) in &radial {
                    for sgn in [1.0, -1.0] {
                        let s = sgn * r;
                        let y = [x[0] - s * th[0], x[1] - s * th[1]];
                        let fy = f.sample(&y);
                        if fy != 0.0 {
                            acc.add(w / s * fy * product_of_means(a, &x, &y, pv.segment_nodes));
                        }
                    }
                }
                outer.add(g.values[idx] * acc.value());
            }
            om * outer.value() * hd
        });
    let gap = (lhs - rhs).abs();
    let denom = lhs.abs().max(rhs.abs());
    Ok(RotationResult {
        lhs,
        rhs,
        gap,
        relative_gap: if denom > 0.0 { gap / denom } else { 0.0 },
    })
}
