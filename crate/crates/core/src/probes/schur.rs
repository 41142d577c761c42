//! Schur and regularity norms, SI and annular integrability conditions, and
//! Carleson-function norms, for kernels k(x, y) on ℝ^d × ℝ^d.

use crate::error::{invalid, Error, Result};
use crate::field::MAX_DIM;
use crate::kernelspace::NormReport;
use crate::numeric::{gauss_legendre01, log_radial_rule, norm, par_max, sphere_rule, Accumulator, Bump};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::sync::Arc;

pub type BiFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// k(x, y), set to zero within `diagonal_margin` of the diagonal.
#[derive(Clone)]
pub struct BiKernel {
    pub d: usize,
    eval: BiFn,
    pub diagonal_margin: f64,
    pub translation_invariant: bool,
    pub name: String,
}

impl std::fmt::Debug for BiKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BiKernel")
            .field("d", &self.d)
            .field("diagonal_margin", &self.diagonal_margin)
            .field("name", &self.name)
            .finish()
    }
}

impl BiKernel {
    pub fn new<F>(d: usize, diagonal_margin: f64, k: F) -> Result<Self>
    where
        F: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        if !(1..=2).contains(&d) {
            return invalid("kernel norms implemented for d ∈ {1, 2}");
        }
        if !(diagonal_margin >= 0.0 && diagonal_margin.is_finite()) {
            return invalid("diagonal margin must be finite and ≥ 0");
        }
        Ok(Self {
            d,
            eval: Arc::new(k),
            diagonal_margin,
            translation_invariant: false,
            name: "kernel".into(),
        })
    }

    /// k(x, y) = φ(x − y).
    pub fn convolution<F>(d: usize, diagonal_margin: f64, phi: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        let mut k = Self::new(d, diagonal_margin, move |x, y| {
            let mut z = [0.0; MAX_DIM];
            for a in 0..x.len() {
                z[a] = x[a] - y[a];
            }
            phi(&z[..x.len()])
        })?;
        k.translation_invariant = true;
        Ok(k)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        if self.diagonal_margin > 0.0 {
            let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
            if r2 < self.diagonal_margin * self.diagonal_margin {
                return 0.0;
            }
        }
        (self.eval)(x, y)
    }

    /// k^dual(x, y) = k(y, x).
    pub fn dual(&self) -> Self {
        let inner = self.eval.clone();
        Self {
            d: self.d,
            eval: Arc::new(move |x, y| inner(y, x)),
            diagonal_margin: self.diagonal_margin,
            translation_invariant: self.translation_invariant,
            name: format!("{}^dual", self.name),
        }
    }

    pub fn zero(d: usize) -> Result<Self> {
        Ok(Self::convolution(d, 0.0, |_| 0.0)?.with_name("zero"))
    }
}

/// Translation-invariant kernels shipped with the library: the normalized
/// bump φ(x−y), a Gaussian, and a first Riesz-type kernel cut off to
/// 1/16 ≤ |x−y| ≤ 1.
pub fn builtin_bikernels(d: usize) -> Result<Vec<BiKernel>> {
    let bump = Bump::new(d);
    let riesz = BiKernel::convolution(d, 1.0 / 16.0, move |z| {
        let r = norm(z);
        if r > 1.0 {
            0.0
        } else {
            z[0] / r.powi(d as i32 + 1)
        }
    })?
    .with_name("riesz");
    Ok(vec![
        BiKernel::convolution(d, 0.0, move |z| bump.eval(z))?.with_name("bump"),
        BiKernel::convolution(d, 0.0, |z| (-std::f64::consts::PI * crate::numeric::norm2(z)).exp())?
            .with_name("gaussian"),
        riesz,
    ])
}

#[derive(Debug, Clone, Serialize)]
pub struct SchurConfig {
    /// Integration box [−L, L]^d.
    pub half_extent: f64,
    pub points_per_axis: usize,
    /// Sup points form a lattice in [−probe_extent, probe_extent]^d.
    pub probe_extent: f64,
    pub probes_per_axis: usize,
    /// Shifts h = ±2^{−m} eᵢ, m = 0..=max_level, clipped to the cell width.
    pub max_level: u32,
    /// Dyadic radii R for the annular norms.
    pub r_range: (i32, i32),
    /// Separations |y − y′| = 2^{−m} for the SI norms.
    pub si_levels: (u32, u32),
    pub shells_per_octave: usize,
    pub gl_nodes: usize,
    pub directions: usize,
}

impl SchurConfig {
    pub fn for_dim(d: usize) -> Self {
        Self {
            half_extent: 3.0,
            points_per_axis: if d == 1 { 1536 } else { 192 },
            probe_extent: 0.75,
            probes_per_axis: if d == 1 { 7 } else { 5 },
            max_level: 8,
            r_range: (-5, 0),
            si_levels: (1, 4),
            shells_per_octave: 4,
            gl_nodes: 6,
            directions: 64,
        }
    }

    fn spacing(&self) -> f64 {
        2.0 * self.half_extent / self.points_per_axis as f64
    }

    fn probes(&self, d: usize) -> Vec<Vec<f64>> {
        let m = self.probes_per_axis.max(1);
        let c = |k: usize| {
            if m == 1 {
                0.0
            } else {
                -self.probe_extent + 2.0 * self.probe_extent * k as f64 / (m - 1) as f64
            }
        };
        let mut out = Vec::new();
        for idx in 0..m.pow(d as u32) {
            let mut p = vec![0.0; d];
            let mut rem = idx;
            for a in (0..d).rev() {
                p[a] = c(rem % m);
                rem /= m;
            }
            out.push(p);
        }
        out
    }

    fn shifts(&self, d: usize) -> Vec<(f64, Vec<f64>)> {
        let h_cell = self.spacing();
        let mut out = Vec::new();
        for m in 0..=self.max_level {
            let h = 0.5f64.powi(m as i32);
            if h < h_cell * (1.0 - 1e-12) {
                break;
            }
            for a in 0..d {
                for s in [1.0, -1.0] {
                    let mut e = vec![0.0; d];
                    e[a] = s * h;
                    out.push((h, e));
                }
            }
        }
        out
    }

    fn validate(&self, d: usize) -> Result<()> {
        if !(self.half_extent > 0.0 && self.points_per_axis >= 4 && self.probe_extent < self.half_extent) {
            return invalid("Schur grid needs L > probe extent and at least 4 points per axis");
        }
        if self.r_range.0 > self.r_range.1 || self.si_levels.0 > self.si_levels.1 {
            return invalid("empty dyadic range");
        }
        if d == 2 && self.directions < 4 {
            return invalid("need at least 4 directions in d = 2");
        }
        Ok(())
    }
}

/// Σ over midpoint nodes x ∈ [−L, L]^d of g(x)·h^d.
fn grid_sum<G>(d: usize, cfg: &SchurConfig, g: G) -> f64
where
    G: Fn(&[f64]) -> f64 + Sync + Send,
{
    let h = cfg.spacing();
    crate::numeric::box_sum(
        &vec![-cfg.half_extent; d],
        &vec![h; d],
        &vec![cfg.points_per_axis; d],
        g,
    )
}

/// sup over probes y of ∫ (1+|x−y|)^ε |k(x, y)| dx.
fn int_one(k: &BiKernel, eps: f64, cfg: &SchurConfig) -> f64 {
    let probes = cfg.probes(k.d);
    par_max(probes.len(), |i| {
        let y = &probes[i];
        grid_sum(k.d, cfg, |x| {
            let w = if eps == 0.0 {
                1.0
            } else {
                let r: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                (1.0 + r).powf(eps)
            };
            w * k.eval(x, y).abs()
        })
    })
}

/// sup_{h, y} |h|^{−ε} ∫ |k(x+h, y) − k(x, y)| dx (left) or with y + h (right).
fn reg_one(k: &BiKernel, eps: f64, right: bool, cfg: &SchurConfig) -> f64 {
    let probes = cfg.probes(k.d);
    let shifts = cfg.shifts(k.d);
    let d = k.d;
    par_max(probes.len() * shifts.len(), |t| {
        let y = &probes[t / shifts.len()];
        let (h, e) = &shifts[t % shifts.len()];
        let yh: Vec<f64> = y.iter().zip(e).map(|(a, b)| a + b).collect();
        let v = grid_sum(d, cfg, |x| {
            if right {
                (k.eval(x, &yh) - k.eval(x, y)).abs()
            } else {
                let mut xh = [0.0; MAX_DIM];
                for a in 0..d {
                    xh[a] = x[a] + e[a];
                }
                (k.eval(&xh[..d], y) - k.eval(x, y)).abs()
            }
        });
        h.powf(-eps) * v
    })
}

/// Int¹, Int^∞ (ε = 0 and ε), the four Reg seminorms, Op_ε (six-term sum)
/// and Op₀. Sups run over a probe lattice and dyadic shifts, so every value
/// is a lower bound for its supremum.
pub fn schur_suite(k: &BiKernel, eps: f64) -> Result<NormReport> {
    schur_suite_with(k, eps, &SchurConfig::for_dim(k.d))
}

pub fn schur_suite_with(k: &BiKernel, eps: f64, cfg: &SchurConfig) -> Result<NormReport> {
    if !(0.0..=1.0).contains(&eps) {
        return invalid("ε must lie in [0, 1]");
    }
    cfg.validate(k.d)?;
    let kt = k.dual();
    let mut r = NormReport::new("schur", eps);
    let int1 = int_one(k, 0.0, cfg);
    let int_inf = int_one(&kt, 0.0, cfg);
    let int1_eps = int_one(k, eps, cfg);
    let int_inf_eps = int_one(&kt, eps, cfg);
    let reg1_lt = reg_one(k, eps, false, cfg);
    let reg1_rt = reg_one(k, eps, true, cfg);
    // Reg^∞_lt[k] = Reg¹_rt[k^dual], Reg^∞_rt[k] = Reg¹_lt[k^dual].
    let reginf_lt = reg_one(&kt, eps, true, cfg);
    let reginf_rt = reg_one(&kt, eps, false, cfg);
    r.set("Int_eps_1", int1_eps);
    r.set("Int_eps_inf", int_inf_eps);
    r.set("Reg_eps_lt_1", reg1_lt);
    r.set("Reg_eps_lt_inf", reginf_lt);
    r.set("Reg_eps_rt_1", reg1_rt);
    r.set("Reg_eps_rt_inf", reginf_rt);
    r.set_derived("Int_1", int1);
    r.set_derived("Int_inf", int_inf);
    r.set_derived("Op_0", int1 + int_inf);
    r.set_derived("Op_eps", r.total);
    r.lower_bound = true;
    r.note("config", cfg);
    r.note("kernel", &k.name);
    Ok(r)
}

/// Polar rule around a point: (offset z, weight) for ∫_{R ≤ |z| ≤ 2R} g(z) dz.
fn annulus_rule(d: usize, r0: f64, r1: f64, cfg: &SchurConfig) -> Vec<(Vec<f64>, f64)> {
    let radial = log_radial_rule(r0, r1, cfg.shells_per_octave, cfg.gl_nodes);
    let (dirs, dw) = sphere_rule(d, cfg.directions);
    let mut out = Vec::with_capacity(radial.len() * dirs.len());
    for (r, w) in &radial {
        for (th, tw) in dirs.iter().zip(&dw) {
            out.push((th.iter().map(|c| r * c).collect(), w * r.powi(d as i32 - 1) * tw));
        }
    }
    out
}

/// Polar rule for the ball B(0, R).
fn ball_rule(d: usize, radius: f64, cfg: &SchurConfig) -> Vec<(Vec<f64>, f64)> {
    let (gx, gw) = gauss_legendre01(cfg.gl_nodes * 2);
    let (dirs, dw) = sphere_rule(d, cfg.directions);
    let mut out = Vec::new();
    for (x, w) in gx.iter().zip(&gw) {
        let r = radius * x;
        for (th, tw) in dirs.iter().zip(&dw) {
            out.push((th.iter().map(|c| r * c).collect(), radius * w * r.powi(d as i32 - 1) * tw));
        }
    }
    out
}

fn annular_one(k: &BiKernel, cfg: &SchurConfig, probes: &[Vec<f64>]) -> f64 {
    let d = k.d;
    let mut best: f64 = 0.0;
    for j in cfg.r_range.0..=cfg.r_range.1 {
        let r = 2f64.powi(j);
        let rule = annulus_rule(d, r, 2.0 * r, cfg);
        best = best.max(par_max(probes.len(), |i| {
            let y = &probes[i];
            let mut acc = Accumulator::new();
            let mut x = [0.0; MAX_DIM];
            for (z, w) in &rule {
                for a in 0..d {
                    x[a] = y[a] + z[a];
                }
                acc.add(w * k.eval(&x[..d], y).abs());
            }
            acc.value()
        }));
    }
    best
}

/// SI¹_ε, SI^∞_ε over sampled pairs and dyadic R ≥ 2; Ann¹, Ann^∞ and Ann_av
/// (with |B(a, R)|⁻¹ normalization) over dyadic R and probe centers.
pub fn si_ann_suite(k: &BiKernel, eps: f64) -> Result<NormReport> {
    si_ann_suite_with(k, eps, &SchurConfig::for_dim(k.d))
}

pub fn si_ann_suite_with(k: &BiKernel, eps: f64, cfg: &SchurConfig) -> Result<NormReport> {
    if eps < 0.0 {
        return invalid("ε must be ≥ 0");
    }
    cfg.validate(k.d)?;
    let d = k.d;
    let kt = k.dual();
    let probes = cfg.probes(d);
    let mut r = NormReport::new("si_ann", eps);

    let si = |kk: &BiKernel| -> f64 {
        let mut pairs = Vec::new();
        for y in &probes {
            for m in cfg.si_levels.0..=cfg.si_levels.1 {
                let delta = 0.5f64.powi(m as i32);
                for a in 0..d {
                    let mut yp = y.clone();
                    yp[a] += delta;
                    pairs.push((y.clone(), yp, delta));
                }
            }
        }
        par_max(pairs.len(), |i| {
            let (y, yp, delta) = &pairs[i];
            let mut best: f64 = 0.0;
            let mut big_r = 2.0;
            while big_r * delta <= cfg.half_extent / 2.0 {
                let cut = big_r * delta;
                let v = grid_sum(d, cfg, |x| {
                    let dist: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                    if dist < cut {
                        0.0
                    } else {
                        (kk.eval(x, y) - kk.eval(x, yp)).abs()
                    }
                });
                best = best.max(big_r.powf(eps) * v);
                big_r *= 2.0;
            }
            best
        })
    };
    r.set("SI_eps_1", si(k));
    r.set("SI_eps_inf", si(&kt));

    let ann1 = annular_one(k, cfg, &probes);
    let ann_inf = annular_one(&kt, cfg, &probes);
    let mut ann_av: f64 = 0.0;
    for j in cfg.r_range.0..=cfg.r_range.1 {
        let big_r = 2f64.powi(j);
        let ball = ball_rule(d, big_r, cfg);
        let annulus = annulus_rule(d, big_r, 2.0 * big_r, cfg);
        let volume: f64 = ball.iter().map(|(_, w)| w).sum();
        ann_av = ann_av.max(par_max(probes.len(), |i| {
            let a = &probes[i];
            let mut outer = Accumulator::new();
            let mut x = [0.0; MAX_DIM];
            let mut y = [0.0; MAX_DIM];
            for (zx, wx) in &ball {
                for c in 0..d {
                    x[c] = a[c] + zx[c];
                }
                let mut inner = Accumulator::new();
                for (zy, wy) in &annulus {
                    for c in 0..d {
                        y[c] = x[c] - zy[c];
                    }
                    inner.add(wy * k.eval(&x[..d], &y[..d]).abs());
                }
                outer.add(wx * inner.value());
            }
            outer.value() / volume
        }));
    }
    r.set_derived("Ann_1", ann1);
    r.set_derived("Ann_inf", ann_inf);
    r.set_derived("Ann_av", ann_av);
    r.lower_bound = true;
    r.note("config", cfg);
    r.note("kernel", &k.name);
    Ok(r)
}

#[derive(Debug, Clone, Serialize)]
pub struct CarlesonConfig {
    /// Random ball centers per scale, in addition to the origin.
    pub ball_samples: usize,
    /// Centers are drawn from [−center_extent, center_extent]^d.
    pub center_extent: f64,
    /// Midpoint cells per axis across a ball's diameter.
    pub cells_per_diameter: usize,
    pub seed: u64,
}

impl Default for CarlesonConfig {
    fn default() -> Self {
        Self {
            ball_samples: 16,
            center_extent: 1.0,
            cells_per_diameter: 64,
            seed: 0,
        }
    }
}

/// max over scales k in `j_range` and sampled balls B of radius 2^{−k} of
/// (|B|⁻¹∫_B Σ_{k ≤ j ≤ j_max} |w(x, j)|² dx)^{1/2}. |B| is the discrete
/// ball measure of the same midpoint grid.
pub fn carleson_norm<W>(w: W, d: usize, j_range: (i32, i32), cfg: &CarlesonConfig) -> Result<f64>
where
    W: Fn(&[f64], i32) -> f64 + Sync,
{
    if !(1..=3).contains(&d) {
        return Err(Error::Dimension("Carleson norm implemented for d ≤ 3".into()));
    }
    if j_range.0 > j_range.1 || cfg.cells_per_diameter == 0 {
        return invalid("empty scale range or zero cells");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: f64 = 0.0;
    for k in j_range.0..=j_range.1 {
        let radius = 0.5f64.powi(k);
        let mut centers = vec![vec![0.0; d]];
        for _ in 0..cfg.ball_samples {
            centers.push((0..d).map(|_| rng.gen_range(-cfg.center_extent..=cfg.center_extent)).collect());
        }
        let m = cfg.cells_per_diameter;
        let h = 2.0 * radius / m as f64;
        let value = par_max(centers.len(), |i| {
            let c = &centers[i];
            let lo: Vec<f64> = c.iter().map(|x| x - radius).collect();
            let mut count = 0usize;
            let mut acc = Accumulator::new();
            let mut x = [0.0; MAX_DIM];
            for idx in 0..m.pow(d as u32) {
                let mut rem = idx;
                let mut r2 = 0.0;
                for a in (0..d).rev() {
                    x[a] = lo[a] + ((rem % m) as f64 + 0.5) * h;
                    rem /= m;
                    r2 += (x[a] - c[a]).powi(2);
                }
                if r2 > radius * radius {
                    continue;
                }
                count += 1;
                for j in k..=j_range.1 {
                    acc.add(w(&x[..d], j).powi(2));
                }
            }
            if count == 0 {
                0.0
            } else {
                (acc.value() / count as f64).sqrt()
            }
        });
        best = best.max(value);
    }
    Ok(best)
}
