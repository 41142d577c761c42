//! Littlewood–Paley decomposition K = Σ_j ς_j^{(2^j)} and its inverse.

use super::{AlphaVFn, ClosureKernel, KernelB};
use crate::error::{invalid, Error, Result};
use crate::field::{Grid, SampledField};
use crate::lpcalc::MollifierSpec;
use crate::numeric::{box_sum, log_radial_rule, sphere_rule, Accumulator};
use serde::Serialize;
use std::sync::Arc;

/// K = Σ_{j_min ≤ j ≤ j_max} ς_j^{(2^j)}.
#[derive(Debug, Clone)]
pub struct DyadicKernel {
    pub n: usize,
    pub d: usize,
    pub pieces: Vec<(i32, KernelB)>,
}

impl DyadicKernel {
    pub fn from_pieces(pieces: Vec<(i32, KernelB)>) -> Result<Self> {
        let first = pieces.first().ok_or_else(|| Error::InvalidArgument("empty dyadic kernel".into()))?;
        let (n, d) = (first.1.n, first.1.d);
        if pieces.iter().any(|(_, s)| s.n != n || s.d != d) {
            return Err(Error::Dimension("pieces disagree on (n, d)".into()));
        }
        Ok(Self { n, d, pieces })
    }

    pub fn j_range(&self) -> (i32, i32) {
        let lo = self.pieces.iter().map(|p| p.0).min().unwrap_or(0);
        let hi = self.pieces.iter().map(|p| p.0).max().unwrap_or(0);
        (lo, hi)
    }

    /// Σ_j 2^{jd} ς_j(α, 2^j x).
    pub fn eval(&self, alpha: &[f64], x: &[f64]) -> f64 {
        let mut acc = Accumulator::new();
        let mut v = vec![0.0; x.len()];
        for (j, s) in &self.pieces {
            let t = 2f64.powi(*j);
            for (vi, xi) in v.iter_mut().zip(x) {
                *vi = t * xi;
            }
            acc.add(t.powi(self.d as i32) * s.eval(alpha, &v));
        }
        acc.value()
    }

    /// Union of the piece α boxes.
    pub fn alpha_box(&self) -> Vec<(f64, f64)> {
        (0..self.n)
            .map(|i| {
                self.pieces.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, s)| {
                    (lo.min(s.alpha_box[i].0), hi.max(s.alpha_box[i].1))
                })
            })
            .collect()
    }

    /// The partial sum over |j| ≤ big_n.
    pub fn truncated(&self, big_n: i32) -> Option<Self> {
        let pieces: Vec<_> = self.pieces.iter().filter(|(j, _)| j.abs() <= big_n).cloned().collect();
        Self::from_pieces(pieces).ok()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DecomposeConfig {
    pub alpha_res: usize,
    /// Grid points across the dilated support 2^j·S of K.
    pub points_per_support: usize,
    /// Grid points across the unit length of ψ.
    pub psi_points: usize,
    pub max_points_per_axis: usize,
    /// Radius used for K without a declared x-support.
    pub truncation: f64,
}

impl DecomposeConfig {
    pub fn for_dim(d: usize) -> Self {
        Self {
            alpha_res: 8,
            points_per_support: 64,
            psi_points: 32,
            max_points_per_axis: if d == 1 { 1 << 17 } else { 1024 },
            truncation: 8.0,
        }
    }
}

pub fn decompose_kernel(k: &ClosureKernel, m: &MollifierSpec, j_range: (i32, i32)) -> Result<DyadicKernel> {
    decompose_kernel_with(k, m, j_range, &DecomposeConfig::for_dim(k.d))
}

/// ς_j(α, v) = ∫ K^{(2^{−j})}(α, w) ψ(v − w) dw, sampled per scale on a grid
/// resolving both factors and stored as a table (constant on α cells, linear
/// in v). ψ is resampled on each scale grid with exact discrete cancellation.
pub fn decompose_kernel_with(
    k: &ClosureKernel,
    m: &MollifierSpec,
    j_range: (i32, i32),
    cfg: &DecomposeConfig,
) -> Result<DyadicKernel> {
    if m.phi.dim() != k.d {
        return Err(Error::Dimension("mollifier and kernel dimensions differ".into()));
    }
    if j_range.0 > j_range.1 {
        return invalid("empty scale range");
    }
    if k.n > 0 && cfg.alpha_res == 0 {
        return invalid("alpha_res must be positive");
    }
    let s = k.x_support.unwrap_or(cfg.truncation);
    let mut pieces = Vec::new();
    for j in j_range.0..=j_range.1 {
        let t = 2f64.powi(j);
        let half = t * s + 2.0;
        let h = (t * s / cfg.points_per_support as f64).min(1.0 / cfg.psi_points as f64);
        let mut n_pts = ((2.0 * half / h).ceil() as usize).max(8);
        n_pts += n_pts % 2;
        if n_pts > cfg.max_points_per_axis {
            return Err(Error::Resolution(format!(
                "scale j = {j} needs {n_pts} points per axis (limit {}); shrink j_range",
                cfg.max_points_per_axis
            )));
        }
        let grid = Grid::new(k.d, half, n_pts)?;
        let psi = MollifierSpec::new(grid)?.psi;
        let scale = t.powi(-(k.d as i32));
        let alpha_nodes = alpha_cell_centres(&k.alpha_box, cfg.alpha_res);
        let mut seen: Vec<(Vec<f64>, Arc<SampledField>)> = Vec::new();
        let mut tables = Vec::with_capacity(alpha_nodes.len());
        for a in &alpha_nodes {
            let samples = SampledField::from_fn(grid, t * s, |w| {
                let x: Vec<f64> = w.iter().map(|c| c / t).collect();
                scale * k.eval(a, &x)
            })?;
            if let Some((_, tab)) = seen.iter().find(|(v, _)| *v == samples.values) {
                tables.push(tab.clone());
                continue;
            }
            let conv = if samples.values.iter().all(|v| *v == 0.0) {
                SampledField::zeros(grid)
            } else {
                samples.convolve(&psi)?
            };
            let tab = Arc::new(conv);
            seen.push((samples.values, tab.clone()));
            tables.push(tab);
        }
        let piece = table_kernel(k, cfg.alpha_res, grid, tables)?
            .with_name(format!("{}_j{j}", k.name))
            .declare_cancellation()?;
        pieces.push((j, piece));
    }
    DyadicKernel::from_pieces(pieces)
}

fn alpha_cell_centres(alpha_box: &[(f64, f64)], res: usize) -> Vec<Vec<f64>> {
    let n = alpha_box.len();
    let total = res.pow(n as u32);
    (0..total)
        .map(|idx| {
            let mut a = vec![0.0; n];
            let mut r = idx;
            for i in (0..n).rev() {
                let (lo, hi) = alpha_box[i];
                a[i] = lo + ((r % res) as f64 + 0.5) * (hi - lo) / res as f64;
                r /= res;
            }
            a
        })
        .collect()
}

fn table_kernel(k: &ClosureKernel, alpha_res: usize, grid: Grid, tables: Vec<Arc<SampledField>>) -> Result<KernelB> {
    let alpha_box = k.alpha_box.clone();
    let boxes = alpha_box.clone();
    let eval: AlphaVFn = Arc::new(move |a: &[f64], v: &[f64]| {
        let mut idx = 0;
        for (ai, (lo, hi)) in a.iter().zip(&boxes) {
            let c = (((ai - lo) / (hi - lo)) * alpha_res as f64).floor().clamp(0.0, alpha_res as f64 - 1.0);
            idx = idx * alpha_res + c as usize;
        }
        tables[idx].sample(v)
    });
    KernelB::from_arc(k.n, k.d, alpha_box, grid.half_extent, alpha_res.max(1), grid.points_per_axis, eval)
}

/// The reconstructed kernel together with its quality report.
#[derive(Clone)]
pub struct Reconstruction {
    pub kernel: ClosureKernel,
    pub annulus: (f64, f64),
    /// max(‖ς_{j_min}‖_{L¹}, ‖ς_{j_max}‖_{L¹}): size of the first omitted terms.
    pub tail_bound: f64,
    dk: Arc<DyadicKernel>,
}

impl std::fmt::Debug for Reconstruction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Reconstruction")
            .field("annulus", &self.annulus)
            .field("tail_bound", &self.tail_bound)
            .finish()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    pub annulus: (f64, f64),
    pub l1_error: f64,
    pub l1_reference: f64,
    pub relative: f64,
    pub tail_bound: f64,
}

pub fn reconstruct(dk: &DyadicKernel, annulus: (f64, f64)) -> Result<Reconstruction> {
    let (r_in, r_out) = annulus;
    if !(r_in > 0.0 && r_out > r_in && r_out.is_finite()) {
        return invalid("annulus needs 0 < r_in < r_out < ∞");
    }
    let (j_min, j_max) = dk.j_range();
    if dk.pieces.len() > 1 && (2f64.powi(-j_max) > r_in || 2f64.powi(-j_min) < r_out) {
        return Err(Error::Resolution(format!(
            "annulus [{r_in}, {r_out}] outside the resolved radii [2^{}, 2^{}]",
            -j_max, -j_min
        )));
    }
    let tail_bound = dk
        .pieces
        .iter()
        .filter(|(j, _)| *j == j_min || *j == j_max)
        .map(|(_, s)| s.l1_norm())
        .fold(0.0, f64::max);
    let dk = Arc::new(dk.clone());
    let inner = dk.clone();
    let kernel = ClosureKernel::new(dk.n, dk.d, dk.alpha_box(), None, move |a, x| inner.eval(a, x))?
        .with_name("reconstruction");
    Ok(Reconstruction {
        kernel,
        annulus,
        tail_bound,
        dk,
    })
}

impl Reconstruction {
    pub fn dyadic(&self) -> &DyadicKernel {
        &self.dk
    }

    /// Relative L¹(α × annulus) distance to `reference`.
    pub fn residual_against(&self, reference: &ClosureKernel, alpha_res: usize) -> Result<ResidualReport> {
        if reference.n != self.kernel.n || reference.d != self.kernel.d {
            return Err(Error::Dimension("reference kernel shape differs".into()));
        }
        let d = self.kernel.d;
        let radial = log_radial_rule(self.annulus.0, self.annulus.1, 16, 8);
        let (dirs, dw) = sphere_rule(d, 64);
        let ab = reference.alpha_box.clone();
        let lo: Vec<f64> = ab.iter().map(|b| b.0).collect();
        let step: Vec<f64> = ab.iter().map(|b| (b.1 - b.0) / alpha_res as f64).collect();
        let count = vec![alpha_res; ab.len()];
        let integrate = |g: &(dyn Fn(&[f64], &[f64]) -> f64 + Sync)| {
            box_sum(&lo, &step, &count, |a| {
                let mut acc = Accumulator::new();
                for (r, w) in &radial {
                    let jac = r.powi(d as i32 - 1) * w;
                    for (th, tw) in dirs.iter().zip(&dw) {
                        let x: Vec<f64> = th.iter().map(|c| r * c).collect();
                        acc.add(jac * tw * g(a, &x));
                    }
                }
                acc.value()
            })
        };
        let err = integrate(&|a, x| (self.kernel.eval(a, x) - reference.eval(a, x)).abs());
        let refl1 = integrate(&|a, x| reference.eval(a, x).abs());
        if refl1 == 0.0 {
            return Err(Error::UndefinedRatio("reference kernel vanishes on the annulus".into()));
        }
        Ok(ResidualReport {
            annulus: self.annulus,
            l1_error: err,
            l1_reference: refl1,
            relative: err / refl1,
            tail_bound: self.tail_bound,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::bump_profile;

    fn single_scale() -> ClosureKernel {
        ClosureKernel::new(1, 1, vec![(0.0, 1.0)], Some(4.0), |a, x| {
            (1.0 + a[0]) * x[0] * bump_profile(x[0] * x[0] / 16.0)
        })
        .unwrap()
    }

    fn mollifier() -> MollifierSpec {
        MollifierSpec::new(Grid::new(1, 4.0, 256).unwrap()).unwrap()
    }

    #[test]
    fn zero_kernel_gives_zero_pieces() {
        let k = ClosureKernel::new(1, 1, vec![(0.0, 1.0)], Some(1.0), |_, _| 0.0).unwrap();
        let dk = decompose_kernel(&k, &mollifier(), (-2, 2)).unwrap();
        for (_, s) in &dk.pieces {
            assert_eq!(s.l1_norm(), 0.0);
            assert!(s.cancels_in_v);
        }
    }

    #[test]
    fn round_trip_on_annulus() {
        let k = single_scale();
        let dk = decompose_kernel(&k, &mollifier(), (-8, 8)).unwrap();
        for (_, s) in &dk.pieces {
            assert!(s.cancellation_defect() <= 1e-6);
        }
        let rec = reconstruct(&dk, (0.25, 4.0)).unwrap();
        let res = rec.residual_against(&k, 8).unwrap();
        assert!(res.relative <= 1e-2, "{res:?}");
    }

    #[test]
    fn single_piece_is_exact() {
        let s = KernelB::new(0, 1, vec![], 1.0, 1, 64, |_, v| v[0] * (1.0 - v[0] * v[0])).unwrap();
        let dk = DyadicKernel::from_pieces(vec![(0, s.clone())]).unwrap();
        let rec = reconstruct(&dk, (0.25, 1.0)).unwrap();
        for x in [0.3, -0.7, 0.9] {
            assert_eq!(rec.kernel.eval(&[], &[x]), s.eval(&[], &[x]));
        }
    }

    #[test]
    fn disjoint_scales_negligible_near_unit_sphere() {
        let s = KernelB::new(0, 1, vec![], 1.0, 1, 64, |_, v| bump_profile(v[0] * v[0])).unwrap();
        let dk = DyadicKernel::from_pieces(vec![(-6, s.clone()), (6, s.clone())]).unwrap();
        let peak = 1.0 / std::f64::consts::E;
        for x in [0.5, 0.9, 1.0, 1.5] {
            assert!(dk.eval(&[], &[x]).abs() <= 2f64.powi(-6) * peak + 1e-15);
        }
    }

    #[test]
    fn nyquist_limit_raises_resolution() {
        let k = single_scale();
        let mut cfg = DecomposeConfig::for_dim(1);
        cfg.max_points_per_axis = 4096;
        assert!(matches!(
            decompose_kernel_with(&k, &mollifier(), (-2, 8), &cfg),
            Err(Error::Resolution(_))
        ));
    }
}
