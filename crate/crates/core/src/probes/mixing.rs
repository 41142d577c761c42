//! Bianchini seminorm on the torus, the mixing identity for a flow, and the
//! trilinear form with the kernel ⟨v(x)−v(y), x−y⟩|x−y|^{−d−2}.

use crate::error::{invalid, Error, Result};
use crate::fft::fft_nd;
use crate::field::{SampledField, MAX_DIM};
use crate::forms::PVSpec;
use crate::numeric::{log_radial_rule, par_sum, sphere_rule, unit_ball_volume, Accumulator};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::Serialize;
use std::sync::Arc;

/// Samples on the torus [0,1)^d at nodes i·h, h = 1/n (row-major).
#[derive(Debug, Clone)]
pub struct TorusField {
    pub d: usize,
    pub n: usize,
    pub values: Vec<f64>,
}

impl TorusField {
    pub fn new(d: usize, n: usize, values: Vec<f64>) -> Result<Self> {
        check_dims(d, n)?;
        if values.len() != n.pow(d as u32) {
            return Err(Error::Dimension("torus field length".into()));
        }
        Ok(Self { d, n, values })
    }

    pub fn from_fn<F>(d: usize, n: usize, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        check_dims(d, n)?;
        let values = (0..n.pow(d as u32))
            .into_par_iter()
            .map(|idx| f(&torus_node(d, n, idx)))
            .collect();
        Ok(Self { d, n, values })
    }

    /// Cell-averaged indicator of a set, `ss` subsamples per axis.
    pub fn coverage<F>(d: usize, n: usize, ss: usize, inside: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> bool + Sync,
    {
        check_dims(d, n)?;
        let offs = subcell_offsets(d, ss, 1.0 / n as f64);
        let values = (0..n.pow(d as u32))
            .into_par_iter()
            .map(|idx| {
                let x = torus_node(d, n, idx);
                let mut y = [0.0; MAX_DIM];
                let hits = offs
                    .iter()
                    .filter(|o| {
                        for a in 0..d {
                            y[a] = x[a] + o[a];
                        }
                        inside(&y[..d])
                    })
                    .count();
                hits as f64 / offs.len() as f64
            })
            .collect();
        Ok(Self { d, n, values })
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.d as i32)
    }

    pub fn integral(&self) -> f64 {
        crate::numeric::sum(&self.values) * self.cell_volume()
    }

    /// Periodic shift by whole cells.
    pub fn roll(&self, shift: &[isize]) -> Self {
        let (d, n) = (self.d, self.n as isize);
        let mut out = vec![0.0; self.values.len()];
        for (idx, o) in out.iter_mut().enumerate() {
            let mut src = 0isize;
            let mut rem = idx as isize;
            let mut stride = 1isize;
            for a in (0..d).rev() {
                let i = rem % n;
                rem /= n;
                src += (i - shift[a]).rem_euclid(n) * stride;
                stride *= n;
            }
            *o = self.values[src as usize];
        }
        Self {
            d,
            n: self.n,
            values: out,
        }
    }
}

fn check_dims(d: usize, n: usize) -> Result<()> {
    if !(1..=2).contains(&d) {
        return invalid("torus routines support d ∈ {1, 2}");
    }
    if n < 8 {
        return invalid("torus grid needs at least 8 points per axis");
    }
    Ok(())
}

fn torus_node(d: usize, n: usize, idx: usize) -> Vec<f64> {
    let h = 1.0 / n as f64;
    let mut x = vec![0.0; d];
    let mut rem = idx;
    for a in (0..d).rev() {
        x[a] = (rem % n) as f64 * h;
        rem /= n;
    }
    x
}

fn subcell_offsets(d: usize, ss: usize, h: f64) -> Vec<Vec<f64>> {
    let o: Vec<f64> = (0..ss).map(|k| ((k as f64 + 0.5) / ss as f64 - 0.5) * h).collect();
    let mut out = vec![vec![]];
    for _ in 0..d {
        out = out
            .into_iter()
            .flat_map(|p| {
                o.iter().map(move |c| {
                    let mut q = p.clone();
                    q.push(*c);
                    q
                })
            })
            .collect();
    }
    out
}

/// Minimal-image offset of node index k on an n-point periodic axis.
fn wrapped(k: usize, n: usize, h: f64) -> f64 {
    crate::fft::signed_index(k, n) as f64 * h
}

/// Cell-averaged periodic kernel g(z) on the torus grid (ss subsamples per
/// axis), as its forward transform.
fn kernel_hat<G>(d: usize, n: usize, ss: usize, g: G) -> Vec<Complex64>
where
    G: Fn(&[f64]) -> f64 + Sync,
{
    let h = 1.0 / n as f64;
    let offs = subcell_offsets(d, ss, h);
    let mut data: Vec<Complex64> = (0..n.pow(d as u32))
        .into_par_iter()
        .map(|idx| {
            let mut z = [0.0; MAX_DIM];
            let mut rem = idx;
            let mut zc = [0.0; MAX_DIM];
            for a in (0..d).rev() {
                zc[a] = wrapped(rem % n, n, h);
                rem /= n;
            }
            let mut acc = Accumulator::new();
            for o in &offs {
                for a in 0..d {
                    z[a] = zc[a] + o[a];
                }
                acc.add(g(&z[..d]));
            }
            Complex64::new(acc.value() / offs.len() as f64, 0.0)
        })
        .collect();
    fft_nd(&mut data, &vec![n; d], false);
    data
}

/// Circular convolution Σ_z g(z) u(x − z) given ĝ (no cell-volume factor).
fn circ_convolve(u: &[f64], g_hat: &[Complex64], d: usize, n: usize) -> Vec<f64> {
    let mut data: Vec<Complex64> = u.iter().map(|v| Complex64::new(*v, 0.0)).collect();
    let shape = vec![n; d];
    fft_nd(&mut data, &shape, false);
    for (a, b) in data.iter_mut().zip(g_hat) {
        *a *= b;
    }
    fft_nd(&mut data, &shape, true);
    let norm = data.len() as f64;
    data.iter().map(|c| c.re / norm).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct BianchiniConfig {
    /// Log-midpoint radii per octave of [ε, 1/4].
    pub radii_per_octave: usize,
    /// Subsamples per axis for the ball weights.
    pub ball_supersample: usize,
}

impl Default for BianchiniConfig {
    fn default() -> Self {
        Self {
            radii_per_octave: 8,
            ball_supersample: 4,
        }
    }
}

/// Precomputed ball-average transforms for a torus grid.
struct BallBank {
    /// (Δlog r, ĝ_r) per radius.
    radii: Vec<(f64, Vec<Complex64>)>,
}

impl BallBank {
    fn new(d: usize, n: usize, eps: f64, cfg: &BianchiniConfig) -> Result<Self> {
        if !(eps > 0.0 && eps < 0.25) {
            return invalid("Bianchini seminorm needs 0 < ε < 1/4");
        }
        let octaves = (0.25 / eps).log2();
        let count = ((octaves * cfg.radii_per_octave as f64).ceil() as usize).max(1);
        let dl = (0.25 / eps).ln() / count as f64;
        let radii = (0..count)
            .map(|k| {
                let r = (eps.ln() + (k as f64 + 0.5) * dl).exp();
                let mut hat = kernel_hat(d, n, cfg.ball_supersample, |z| {
                    if crate::numeric::norm2(z) <= r * r {
                        1.0
                    } else {
                        0.0
                    }
                });
                let mass = hat[0].re;
                if mass <= 0.0 {
                    return Err(Error::Resolution(format!("ball of radius {r} covers no subsample")));
                }
                for c in hat.iter_mut() {
                    *c /= mass;
                }
                Ok((dl, hat))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { radii })
    }

    /// ∫ dr/r ∫_Q g(u(x), avg_{B_r(x)} u) dx.
    fn integrate<G>(&self, u: &TorusField, g: G) -> f64
    where
        G: Fn(f64, f64) -> f64,
    {
        let hd = u.cell_volume();
        let mut acc = Accumulator::new();
        for (dl, hat) in &self.radii {
            let avg = circ_convolve(&u.values, hat, u.d, u.n);
            let mut s = Accumulator::new();
            for (a, b) in u.values.iter().zip(&avg) {
                s.add(g(*a, *b));
            }
            acc.add(s.value() * hd * dl);
        }
        acc.value()
    }
}

/// B_ε[f] = ∫_ε^{1/4} ∫_Q |f(x) − avg_{B_r(x)} f| dx dr/r.
pub fn bianchini_seminorm(f: &TorusField, eps: f64) -> Result<f64> {
    bianchini_seminorm_with(f, eps, &BianchiniConfig::default())
}

pub fn bianchini_seminorm_with(f: &TorusField, eps: f64, cfg: &BianchiniConfig) -> Result<f64> {
    let bank = BallBank::new(f.d, f.n, eps, cfg)?;
    Ok(bank.integrate(f, |a, b| (a - b).abs()))
}

/// B_ε of an indicator given as coverage fractions u, using
/// |1_E − ū| = 1_E + ū − 2·1_E·ū, which is linear in each factor and so
/// exact for cell-averaged indicators in the mean.
fn bianchini_indicator(bank: &BallBank, u: &TorusField) -> f64 {
    bank.integrate(u, |a, b| a + b - 2.0 * a * b)
}

pub type VelocityFn = Arc<dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync>;
pub type SetFn = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// A periodic, divergence-free velocity field b(x, t) on [0,1)^d, a final
/// time, an RK4 step count, and the initial set A.
#[derive(Clone)]
pub struct FlowSpec {
    pub d: usize,
    pub velocity: VelocityFn,
    pub final_time: f64,
    pub time_steps: usize,
    pub initial_set: SetFn,
    pub name: String,
}

impl std::fmt::Debug for FlowSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FlowSpec")
            .field("d", &self.d)
            .field("final_time", &self.final_time)
            .field("time_steps", &self.time_steps)
            .field("name", &self.name)
            .finish()
    }
}

impl FlowSpec {
    pub fn new<B, A>(d: usize, velocity: B, final_time: f64, time_steps: usize, initial_set: A) -> Result<Self>
    where
        B: Fn(&[f64], f64, &mut [f64]) + Send + Sync + 'static,
        A: Fn(&[f64]) -> bool + Send + Sync + 'static,
    {
        check_dims(d, 8)?;
        if !(final_time.is_finite() && final_time >= 0.0) || time_steps == 0 {
            return invalid("flow needs T ≥ 0 and at least one time step");
        }
        Ok(Self {
            d,
            velocity: Arc::new(velocity),
            final_time,
            time_steps,
            initial_set: Arc::new(initial_set),
            name: "flow".into(),
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// The autonomous shear b(x) = (sin 2πx₂, 0) with A = {x₁ < 1/2}.
    pub fn shear(final_time: f64, time_steps: usize) -> Self {
        Self::new(
            2,
            |x, _, out| {
                out[0] = (2.0 * std::f64::consts::PI * x[1]).sin();
                out[1] = 0.0;
            },
            final_time,
            time_steps,
            |x| x[0].rem_euclid(1.0) < 0.5,
        )
        .expect("valid shear flow")
        .with_name("shear")
    }

    /// b ≡ 0 with the same initial set as `shear`.
    pub fn still(final_time: f64, time_steps: usize) -> Self {
        Self::new(
            2,
            |_, _, out| out.iter_mut().for_each(|o| *o = 0.0),
            final_time,
            time_steps,
            |x| x[0].rem_euclid(1.0) < 0.5,
        )
        .expect("valid flow")
        .with_name("still")
    }

    fn dt(&self) -> f64 {
        self.final_time / self.time_steps as f64
    }

    fn velocity_at(&self, x: &[f64], t: f64) -> [f64; MAX_DIM] {
        let mut out = [0.0; MAX_DIM];
        (self.velocity)(x, t, &mut out[..self.d]);
        out
    }

    /// φ_t⁻¹(x): RK4 on dy/ds = −b(y, t − s) for k steps of size dt.
    fn pull_back(&self, x: &[f64], k: usize) -> [f64; MAX_DIM] {
        let d = self.d;
        let dt = self.dt();
        let mut y = [0.0; MAX_DIM];
        y[..d].copy_from_slice(x);
        let mut t = k as f64 * dt;
        let mut tmp = [0.0; MAX_DIM];
        for _ in 0..k {
            let k1 = self.velocity_at(&y[..d], t);
            for a in 0..d {
                tmp[a] = y[a] - 0.5 * dt * k1[a];
            }
            let k2 = self.velocity_at(&tmp[..d], t - 0.5 * dt);
            for a in 0..d {
                tmp[a] = y[a] - 0.5 * dt * k2[a];
            }
            let k3 = self.velocity_at(&tmp[..d], t - 0.5 * dt);
            for a in 0..d {
                tmp[a] = y[a] - dt * k3[a];
            }
            let k4 = self.velocity_at(&tmp[..d], t - dt);
            for a in 0..d {
                y[a] -= dt / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]);
            }
            t -= dt;
        }
        y
    }

    /// max |div b| relative to max |b| over a sampled lattice and times, by
    /// central differences.
    pub fn divergence_defect(&self, samples_per_axis: usize) -> f64 {
        let d = self.d;
        let delta = 1e-5;
        let times: Vec<f64> = (0..=4).map(|k| self.final_time * k as f64 / 4.0).collect();
        let count = samples_per_axis.pow(d as u32);
        let mut worst: f64 = 0.0;
        let mut speed: f64 = 0.0;
        for &t in &times {
            for idx in 0..count {
                let x: Vec<f64> = torus_node(d, samples_per_axis, idx)
                    .iter()
                    .map(|c| c + 0.37 / samples_per_axis as f64)
                    .collect();
                let b0 = self.velocity_at(&x, t);
                speed = speed.max(crate::numeric::norm(&b0[..d]));
                let mut div = 0.0;
                for a in 0..d {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[a] += delta;
                    xm[a] -= delta;
                    div += (self.velocity_at(&xp, t)[a] - self.velocity_at(&xm, t)[a]) / (2.0 * delta);
                }
                worst = worst.max(div.abs());
            }
        }
        if speed == 0.0 {
            worst
        } else {
            worst / speed.max(1.0)
        }
    }

    /// max |b| over the sampled lattice and times.
    fn max_speed(&self, samples_per_axis: usize) -> f64 {
        let d = self.d;
        let count = samples_per_axis.pow(d as u32);
        let mut speed: f64 = 0.0;
        for k in 0..=self.time_steps.min(16) {
            let t = self.final_time * k as f64 / self.time_steps.min(16) as f64;
            for idx in 0..count {
                let x = torus_node(d, samples_per_axis, idx);
                speed = speed.max(crate::numeric::norm(&self.velocity_at(&x, t)[..d]));
            }
        }
        speed
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MixingConfig {
    /// Torus grid points per axis.
    pub points_per_axis: usize,
    /// Subsamples per axis for coverage fractions and kernel cell weights.
    pub supersample: usize,
    /// Trapezoid intervals in t; must divide the flow's time_steps.
    pub quadrature_intervals: usize,
    /// Largest RK4 displacement allowed per step, in cells.
    pub cfl_cells: f64,
    pub bianchini: BianchiniConfig,
}

impl Default for MixingConfig {
    fn default() -> Self {
        Self {
            points_per_axis: 128,
            supersample: 4,
            quadrature_intervals: 16,
            cfl_cells: 4.0,
            bianchini: BianchiniConfig::default(),
        }
    }
}

impl MixingConfig {
    /// Halves h and the time steps' spacing.
    pub fn refined(&self) -> Self {
        let mut c = self.clone();
        c.points_per_axis *= 2;
        c.quadrature_intervals *= 2;
        c
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MixingResult {
    pub eps: f64,
    pub final_time: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
    pub relative_gap: f64,
    /// Grid points per axis.
    pub resolution: usize,
    pub time_steps: usize,
}

impl MixingResult {
    pub const CSV_HEADER: [&'static str; 6] = ["eps", "T", "lhs", "rhs", "gap", "resolution"];

    pub fn csv_record(&self) -> Vec<String> {
        vec![
            self.eps.to_string(),
            self.final_time.to_string(),
            self.lhs.to_string(),
            self.rhs.to_string(),
            self.gap.to_string(),
            self.resolution.to_string(),
        ]
    }
}

/// Floor below which |lhs|, |rhs| are treated as zero in the relative gap.
pub const MIXING_GAP_FLOOR: f64 = 1e-12;

/// lhs = B_ε[1_{φ_T(A)}] − B_ε[1_A]; rhs = (2/V_d)∫₀^T∫_Q f ∫_{ε≤|x−y|≤1/4}
/// ⟨x−y, b(x,t)−b(y,t)⟩|x−y|^{−d−2} f(y) dy dx dt with f = ½(1_{φ_t(A)} − 1_{φ_t(A)^∁}).
pub fn mixing_identity_check(flow: &FlowSpec, eps: f64, cfg: &MixingConfig) -> Result<MixingResult> {
    let (d, n) = (flow.d, cfg.points_per_axis);
    check_dims(d, n)?;
    if !(eps > 0.0 && eps < 0.25) {
        return invalid("mixing identity needs 0 < ε < 1/4");
    }
    if cfg.quadrature_intervals == 0 || flow.time_steps % cfg.quadrature_intervals != 0 {
        return invalid("quadrature_intervals must divide the flow's time_steps");
    }
    let defect = flow.divergence_defect(16);
    if defect > crate::tolerances::DIVERGENCE {
        return invalid(format!("velocity field is not divergence-free (defect {defect:e})"));
    }
    let h = 1.0 / n as f64;
    let step_len = flow.dt() * flow.max_speed(32);
    if step_len > cfg.cfl_cells * h {
        return Err(Error::TimeStep(format!(
            "RK4 step moves {:.3} cells > {}; increase time_steps",
            step_len / h,
            cfg.cfl_cells
        )));
    }

    let coverage_at = |k: usize| {
        TorusField::coverage(d, n, cfg.supersample, |x| (flow.initial_set)(&flow.pull_back(x, k)[..d]))
    };

    let bank = BallBank::new(d, n, eps, &cfg.bianchini)?;
    let u0 = coverage_at(0)?;
    let u_t = coverage_at(flow.time_steps)?;
    let lhs = bianchini_indicator(&bank, &u_t) - bianchini_indicator(&bank, &u0);

    // G_k(z) = z_k |z|^{−d−2} on ε ≤ |z| ≤ 1/4.
    let g_hats: Vec<Vec<Complex64>> = (0..d)
        .map(|k| {
            kernel_hat(d, n, cfg.supersample, move |z| {
                let r2 = crate::numeric::norm2(z);
                if r2 < eps * eps || r2 > 1.0 / 16.0 {
                    0.0
                } else {
                    z[k] / r2.powf((d as f64 + 2.0) / 2.0)
                }
            })
        })
        .collect();
    let hd = h.powi(d as i32);
    let stride = flow.time_steps / cfg.quadrature_intervals;
    let nodes: Vec<usize> = (0..=cfg.quadrature_intervals).map(|q| q * stride).collect();
    let integrand = |k: usize| -> Result<f64> {
        let t = k as f64 * flow.dt();
        let u = if k == 0 {
            u0.clone()
        } else if k == flow.time_steps {
            u_t.clone()
        } else {
            coverage_at(k)?
        };
        let f: Vec<f64> = u.values.iter().map(|c| c - 0.5).collect();
        let velocity: Vec<[f64; MAX_DIM]> = (0..f.len())
            .into_par_iter()
            .map(|idx| flow.velocity_at(&torus_node(d, n, idx), t))
            .collect();
        let mut acc = Accumulator::new();
        for comp in 0..d {
            let gf = circ_convolve(&f, &g_hats[comp], d, n);
            let fb: Vec<f64> = f.iter().zip(&velocity).map(|(a, b)| a * b[comp]).collect();
            let gfb = circ_convolve(&fb, &g_hats[comp], d, n);
            for i in 0..f.len() {
                acc.add(f[i] * (velocity[i][comp] * gf[i] - gfb[i]));
            }
        }
        Ok(acc.value() * hd * hd)
    };
    let mut values = Vec::with_capacity(nodes.len());
    for &k in &nodes {
        values.push(integrand(k)?);
    }
    let dt_q = flow.final_time / cfg.quadrature_intervals as f64;
    let mut time_acc = Accumulator::new();
    for (q, v) in values.iter().enumerate() {
        let w = if q == 0 || q == values.len() - 1 { 0.5 } else { 1.0 };
        time_acc.add(w * v);
    }
    let rhs = 2.0 / unit_ball_volume(d) * time_acc.value() * dt_q;
    let gap = (lhs - rhs).abs();
    let denom = lhs.abs().max(rhs.abs()).max(MIXING_GAP_FLOOR);
    Ok(MixingResult {
        eps,
        final_time: flow.final_time,
        lhs,
        rhs,
        gap,
        relative_gap: gap / denom,
        resolution: n,
        time_steps: flow.time_steps,
    })
}

/// ∬_{ε<|x−y|<N} ⟨v(x)−v(y), x−y⟩|x−y|^{−d−2} f(y) g(x) dy dx, by a sum over
/// the nodes of g and polar shells around each.
pub fn bressan_trilinear<V>(v: V, f: &SampledField, g: &SampledField, pv: &PVSpec) -> Result<f64>
where
    V: Fn(&[f64], &mut [f64]) + Sync,
{
    let d = f.dim();
    if g.grid != f.grid {
        return Err(Error::Dimension("f and g must share a grid".into()));
    }
    if d > 2 {
        return invalid("annular quadrature implemented for d ∈ {1, 2}");
    }
    let grid = g.grid;
    let per_octave = ((pv.annuli_per_decade as f64) * 2f64.log10()).ceil().max(1.0) as usize;
    let radial = log_radial_rule(pv.inner_radius, pv.outer_radius, per_octave, pv.gl_nodes);
    let (dirs, dw) = sphere_rule(d, pv.directions);
    let g_nodes: Vec<usize> = (0..grid.len()).filter(|&k| g.values[k] != 0.0).collect();
    let total = par_sum(g_nodes.len(), |k| {
        let idx = g_nodes[k];
        let x = grid.node_vec(idx);
        let mut vx = [0.0; MAX_DIM];
        v(&x, &mut vx[..d]);
        let mut acc = Accumulator::new();
        let mut y = [0.0; MAX_DIM];
        let mut vy = [0.0; MAX_DIM];
        for (r, w) in &radial {
            // |x−y|^{−d−2}·⟨·, x−y⟩ with x − y = rθ, times the shell Jacobian r^{d−1}.
            let jac = w * r.powi(-2);
            for (th, tw) in dirs.iter().zip(&dw) {
                for a in 0..d {
                    y[a] = x[a] - r * th[a];
                }
                let fy = f.sample(&y[..d]);
                if fy == 0.0 {
                    continue;
                }
                v(&y[..d], &mut vy[..d]);
                let dot: f64 = (0..d).map(|a| (vx[a] - vy[a]) * th[a]).sum();
                acc.add(jac * tw * dot * fy);
            }
        }
        g.values[idx] * acc.value()
    });
    Ok(total * grid.cell_volume())
}
