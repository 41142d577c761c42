//! Littlewood–Paley operators: mollifier projections P_j, differences Q_j,
//! Fourier-side band filters 𝒬_j and 𝒬̃_j, the decaying mean-zero class 𝒰 and
//! its dyadic atom decomposition.

use crate::error::{invalid, Error, Result};
use crate::fft::{fft_nd, signed_index};
use crate::field::{Grid, SampledField, MAX_DIM};
use crate::numeric::{norm, norm2, radial_cutoff, smoothstep5, Bump};
use crate::tolerances;
use rustfft::num_complex::Complex64;
use std::f64::consts::PI;

/// Mollifier φ (normalized radial bump on |x| < 1) and ψ = φ − 2^{−d}φ(·/2).
#[derive(Debug, Clone)]
pub struct MollifierSpec {
    pub phi: SampledField,
    pub psi: SampledField,
    bump: Bump,
}

impl MollifierSpec {
    /// Samples φ and ψ on `grid`, which must contain |x| ≤ 2. The analytic
    /// normalization is corrected by the discrete mass so that h^d Σφ = 1.
    pub fn new(grid: Grid) -> Result<Self> {
        if grid.half_extent < 2.0 {
            return invalid("mollifier grid must contain the ball of radius 2");
        }
        let mut bump = Bump::new(grid.dim);
        let raw = SampledField::from_fn(grid, 1.0, |x| bump.eval(x))?;
        bump.norm /= raw.integral();
        let phi = SampledField::from_fn(grid, 1.0, |x| bump.eval(x))?;
        // Both halves of ψ carry unit discrete mass, so h^d Σψ = 0 to rounding.
        let wide = SampledField::from_fn(grid, 2.0, |x| crate::numeric::bump_profile(norm2(x) / 4.0))?;
        let wide = wide.scaled(1.0 / wide.integral());
        let psi = phi.axpby(1.0, &wide, -1.0)?;
        Ok(Self { phi, psi, bump })
    }

    pub fn bump(&self) -> Bump {
        self.bump
    }

    /// φ^{(2^j)} sampled on `grid` and renormalized to unit discrete mass; a
    /// single-node delta when the dilated support does not reach the
    /// neighbouring nodes.
    pub fn dilated_phi(&self, j: i32, grid: Grid) -> Result<SampledField> {
        let t = 2f64.powi(j);
        let radius = 1.0 / t;
        if radius > grid.half_extent {
            return Err(Error::SupportOverflow(format!(
                "φ^(2^{j}) has support radius {radius} beyond box {}",
                grid.half_extent
            )));
        }
        if radius <= grid.spacing() {
            return Ok(delta(grid));
        }
        let f = SampledField::from_fn(grid, radius, |x| {
            let mut y = [0.0; MAX_DIM];
            for (a, v) in x.iter().enumerate() {
                y[a] = t * v;
            }
            crate::numeric::bump_profile(norm2(&y[..x.len()]))
        })?;
        let mass = f.integral();
        Ok(f.scaled(1.0 / mass))
    }
}

fn delta(grid: Grid) -> SampledField {
    let mut d = SampledField::zeros(grid);
    let centre = grid.flat_index(&[grid.points_per_axis / 2; MAX_DIM]);
    d.values[centre] = 1.0 / grid.cell_volume();
    d
}

/// P_j f = f ∗ φ^{(2^j)}.
pub fn project_p(f: &SampledField, j: i32, m: &MollifierSpec) -> Result<SampledField> {
    if m.phi.dim() != f.dim() {
        return Err(Error::Dimension("mollifier and field dimensions differ".into()));
    }
    let radius = 2f64.powi(-j);
    if radius + f.support_radius > f.grid.half_extent {
        return Err(Error::SupportOverflow(format!(
            "P_{j} needs radius {} but the box half extent is {}",
            radius + f.support_radius,
            f.grid.half_extent
        )));
    }
    let k = m.dilated_phi(j, f.grid)?;
    f.convolve(&k)
}

/// Q_j f = P_j f − P_{j−1} f.
pub fn band_q(f: &SampledField, j: i32, m: &MollifierSpec) -> Result<SampledField> {
    let a = project_p(f, j, m)?;
    let b = project_p(f, j - 1, m)?;
    a.axpby(1.0, &b, -1.0)
}

/// Radial Fourier-side profile χ₀: 1 on |ξ| ≤ 1/2, 0 from |ξ| = 1, quintic
/// smoothstep bridge.
#[derive(Debug, Clone, Copy, Default)]
pub struct BandCutoffSpec;

impl BandCutoffSpec {
    #[inline]
    pub fn chi0(&self, r: f64) -> f64 {
        1.0 - smoothstep5((r - 0.5) / 0.5)
    }

    /// η̂_j(ξ) = χ₀(2^{−j}|ξ|) − χ₀(2^{1−j}|ξ|).
    pub fn eta_hat(&self, j: i32, r: f64) -> f64 {
        self.chi0(2f64.powi(-j) * r) - self.chi0(2f64.powi(1 - j) * r)
    }

    /// Wider profile, equal to 1 on supp η̂_j ⊂ {2^{j−2} ≤ |ξ| ≤ 2^j}.
    pub fn eta_tilde_hat(&self, j: i32, r: f64) -> f64 {
        self.chi0(2f64.powi(-j - 1) * r) - self.chi0(2f64.powi(3 - j) * r)
    }

    pub fn name(&self) -> &'static str {
        "chi0: 1 on |xi|<=1/2, 0 on |xi|>=1, quintic smoothstep bridge"
    }
}

/// Multiplies the periodic DFT of `f` (period 2L per axis, angular frequency
/// ξ = πk/L) by η̂_j, or by the wider 𝒬̃_j profile when `tilde` is set.
pub fn fourier_q(f: &SampledField, j: i32, c: &BandCutoffSpec, tilde: bool) -> Result<SampledField> {
    let g = f.grid;
    let h = g.spacing();
    if 2f64.powi(j) > PI / (2.0 * h) {
        return Err(Error::Resolution(format!(
            "band 2^{j} exceeds the resolvable limit π/(2h) = {}",
            PI / (2.0 * h)
        )));
    }
    let n = g.points_per_axis;
    let d = g.dim;
    let shape = vec![n; d];
    let mut data: Vec<Complex64> = f.values.iter().map(|v| Complex64::new(*v, 0.0)).collect();
    fft_nd(&mut data, &shape, false);
    let dk = PI / g.half_extent;
    for (idx, z) in data.iter_mut().enumerate() {
        let m = g.multi_index(idx);
        let mut xi = [0.0; MAX_DIM];
        for a in 0..d {
            xi[a] = dk * signed_index(m[a], n) as f64;
        }
        let r = norm(&xi[..d]);
        let mult = if tilde { c.eta_tilde_hat(j, r) } else { c.eta_hat(j, r) };
        *z *= mult;
    }
    fft_nd(&mut data, &shape, true);
    let scale = 1.0 / g.len() as f64;
    let values = data.iter().map(|z| z.re * scale).collect();
    SampledField::from_values(g, values, g.half_extent * (d as f64).sqrt())
}

/// sup_x (1+|x|^{d+1/2})(|u(x)| + |∇u(x)|), gradient by centered differences
/// (one-sided at the boundary).
pub fn u_norm(u: &SampledField) -> f64 {
    let g = u.grid;
    let (d, n, h) = (g.dim, g.points_per_axis, g.spacing());
    let mut best: f64 = 0.0;
    let mut x = [0.0; MAX_DIM];
    for idx in 0..g.len() {
        let m = g.multi_index(idx);
        let mut grad2 = 0.0;
        for a in 0..d {
            let stride = n.pow((d - 1 - a) as u32);
            let i = m[a];
            let der = if i == 0 {
                (u.values[idx + stride] - u.values[idx]) / h
            } else if i == n - 1 {
                (u.values[idx] - u.values[idx - stride]) / h
            } else {
                (u.values[idx + stride] - u.values[idx - stride]) / (2.0 * h)
            };
            grad2 += der * der;
        }
        g.node(idx, &mut x);
        let w = 1.0 + norm(&x[..d]).powf(d as f64 + 0.5);
        best = best.max(w * (u.values[idx].abs() + grad2.sqrt()));
    }
    best
}

/// A mean-zero field of class 𝒰.
#[derive(Debug, Clone)]
pub struct UKernel {
    pub u: SampledField,
    pub u_norm: f64,
}

impl UKernel {
    pub fn new(u: SampledField) -> Result<Self> {
        let mean = u.integral();
        let mass = u.lp_norm(1.0)?;
        if mean.abs() > tolerances::U_MEAN_ZERO * mass.max(1.0) {
            return Err(Error::Cancellation(format!("∫u = {mean:e}")));
        }
        let u_norm = u_norm(&u);
        if !u_norm.is_finite() {
            return Err(Error::NonFinite("𝒰 norm".into()));
        }
        Ok(Self { u, u_norm })
    }
}

/// One atom of the 𝒰 decomposition: u = Σ_{j≤0} 2^{j/2} (u_j)^{(2^j)}.
#[derive(Debug, Clone)]
pub struct UAtom {
    pub j: i32,
    pub atom: SampledField,
}

/// Half extent of the atom grids; atoms live in |x| ≤ 1/4.
pub const ATOM_HALF_EXTENT: f64 = 0.5;

fn default_atom_points(d: usize) -> usize {
    match d {
        1 => 512,
        2 => 96,
        _ => 32,
    }
}

/// Atoms u_0, u_{−1}, …, u_{−depth} on default-resolution atom grids.
pub fn decompose_u(u: &UKernel, depth: usize) -> Result<Vec<UAtom>> {
    decompose_u_with(u, depth, default_atom_points(u.u.dim()))
}

/// Constructive atom decomposition. With χ₀ = 1 on |x| ≤ 1/8 and 0 from 1/4,
/// χ_k(y) = χ₀(2^{−k}y) − χ₀(2^{1−k}y), a_k = ∫uχ_k and A_k = −Σ_{i<k} a_i:
/// B_k = uχ_k − a_kχ̃_k + A_k(χ̃_k − χ̃_{k−1}) and u_{−k}(x) = 2^{k(d+1/2)}B_k(2^k x).
/// Every integral is a Riemann sum on the atom's own grid, so each atom has
/// discrete mean zero up to rounding.
pub fn decompose_u_with(u: &UKernel, depth: usize, atom_points: usize) -> Result<Vec<UAtom>> {
    let d = u.u.dim();
    let grid = Grid::new(d, ATOM_HALF_EXTENT, atom_points)?;
    let chi0 = |r: f64| radial_cutoff(r, 0.125, 0.25);
    let chi = |k: usize, r: f64| {
        if k == 0 {
            chi0(r)
        } else {
            chi0(r / 2f64.powi(k as i32)) - chi0(r / 2f64.powi(k as i32 - 1))
        }
    };
    let mut atoms = Vec::with_capacity(depth + 1);
    let mut a_sum = 0.0;
    let mut y = vec![0.0; d];
    for k in 0..=depth {
        let s = 2f64.powi(k as i32);
        let jac = s.powi(d as i32) * grid.cell_volume();
        let mut uy = vec![0.0; grid.len()];
        let mut ck = vec![0.0; grid.len()];
        let mut cprev = vec![0.0; grid.len()];
        let (mut a_k, mut mass_k, mut mass_prev) = (0.0, 0.0, 0.0);
        for idx in 0..grid.len() {
            grid.node(idx, &mut y);
            y.iter_mut().for_each(|v| *v *= s);
            let r = norm(&y);
            uy[idx] = u.u.sample(&y);
            ck[idx] = chi(k, r);
            if k >= 1 {
                cprev[idx] = chi(k - 1, r);
            }
            a_k += uy[idx] * ck[idx];
            mass_k += ck[idx];
            mass_prev += cprev[idx];
        }
        a_k *= jac;
        mass_k *= jac;
        mass_prev *= jac;
        let big_a = -a_sum;
        let weight = s.powf(d as f64 + 0.5);
        let values: Vec<f64> = (0..grid.len())
            .map(|i| {
                let tk = ck[i] / mass_k;
                let mut b = uy[i] * ck[i] - a_k * tk;
                if k >= 1 {
                    b += big_a * (tk - cprev[i] / mass_prev);
                }
                weight * b
            })
            .collect();
        a_sum += a_k;
        atoms.push(UAtom {
            j: -(k as i32),
            atom: SampledField::from_values(grid, values, 0.25)?,
        });
    }
    Ok(atoms)
}

/// Σ_k 2^{−k/2} (u_{−k})^{(2^{−k})} on `grid`.
pub fn reconstruct_u(atoms: &[UAtom], grid: Grid) -> Result<SampledField> {
    let mut out = SampledField::zeros(grid);
    for a in atoms {
        let k = -a.j;
        let piece = a.atom.dilate_onto(2f64.powi(-k), grid)?;
        out = out.axpby(1.0, &piece, 2f64.powf(-k as f64 / 2.0))?;
    }
    Ok(out)
}
