//! The five 𝓚_ε seminorms over dyadic parameter ranges.

use super::{ClosureKernel, NormReport};
use crate::error::{invalid, Error, Result};
use crate::fft::{fft_nd, pad, signed_index};
use crate::field::{Grid, SampledField, MAX_DIM};
use crate::numeric::{bump_profile, gauss_legendre01, log_radial_rule, norm, par_sum, sphere_rule, Accumulator, Bump};
use crate::tolerances;
use std::f64::consts::PI;
use std::sync::Arc;

const HAT_STEP: f64 = 0.05;
const HAT_MAX: f64 = 400.0;

/// A radial Schwartz-class η with its Fourier transform tabulated along a ray.
#[derive(Clone)]
pub struct EtaSpec {
    pub name: String,
    pub d: usize,
    pub support: f64,
    profile: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    hat: Arc<Vec<f64>>,
}

impl std::fmt::Debug for EtaSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EtaSpec").field("name", &self.name).field("d", &self.d).finish()
    }
}

impl EtaSpec {
    /// The normalized mollifier bump.
    pub fn bump(d: usize) -> Result<Self> {
        let b = Bump::new(d);
        Self::from_radial("mollifier_bump", d, 1.0, move |r| b.norm * bump_profile(r * r))
    }

    /// η(x) = profile(|x|), supported in |x| ≤ support. Fails the
    /// nondegeneracy gate when sup over dyadic τ of |η̂(τθ)| is below 10⁻³.
    pub fn from_radial<F>(name: impl Into<String>, d: usize, support: f64, profile: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(1..=MAX_DIM).contains(&d) {
            return invalid("η dimension unsupported");
        }
        let profile: Arc<dyn Fn(f64) -> f64 + Send + Sync> = Arc::new(profile);
        let hat = Arc::new(radial_hat_table(d, support, profile.as_ref()));
        let spec = Self {
            name: name.into(),
            d,
            support,
            profile,
            hat,
        };
        let nd = spec.nondegeneracy();
        if nd < tolerances::ETA_NONDEGENERACY {
            return invalid(format!("η fails the nondegeneracy condition ({nd:e})"));
        }
        Ok(spec)
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        let r = norm(x);
        if r >= self.support {
            0.0
        } else {
            (self.profile)(r)
        }
    }

    /// η̂(ξ) for |ξ| = rho (radial), linear interpolation in the table; zero
    /// beyond the tabulated range.
    #[inline]
    pub fn hat(&self, rho: f64) -> f64 {
        let p = rho / HAT_STEP;
        let i = p.floor() as usize;
        if i + 1 >= self.hat.len() {
            return 0.0;
        }
        let t = p - i as f64;
        (1.0 - t) * self.hat[i] + t * self.hat[i + 1]
    }

    /// inf over directions of sup over dyadic τ of |η̂(τθ)|; direction-free for
    /// radial η.
    pub fn nondegeneracy(&self) -> f64 {
        (-20..=20).map(|k| self.hat(2f64.powi(k)).abs()).fold(0.0, f64::max)
    }

    pub fn sampled(&self, grid: Grid) -> Result<SampledField> {
        SampledField::from_fn(grid, self.support, |x| self.eval(x))
    }
}

/// η̂(ρe₁) = ∫ P(s) cos(ρs) ds with P the projection of η onto the first axis.
fn radial_hat_table(d: usize, support: f64, profile: &(dyn Fn(f64) -> f64 + Send + Sync)) -> Vec<f64> {
    let ns = 4096;
    let ds = support / ns as f64;
    let (gx, gw) = gauss_legendre01(48);
    let proj: Vec<f64> = (0..ns)
        .map(|k| {
            let s = (k as f64 + 0.5) * ds;
            let w_max = (support * support - s * s).max(0.0).sqrt();
            let eval = |r: f64| if r >= support { 0.0 } else { profile(r) };
            match d {
                1 => eval(s),
                2 => 2.0 * w_max * gx.iter().zip(&gw).map(|(x, w)| w * eval((s * s + (x * w_max).powi(2)).sqrt())).sum::<f64>(),
                _ => {
                    2.0 * PI
                        * w_max
                        * gx.iter()
                            .zip(&gw)
                            .map(|(x, w)| {
                                let rho = x * w_max;
                                w * rho * eval((s * s + rho * rho).sqrt())
                            })
                            .sum::<f64>()
                }
            }
        })
        .collect();
    let count = (HAT_MAX / HAT_STEP) as usize + 1;
    (0..count)
        .map(|i| {
            let rho = i as f64 * HAT_STEP;
            let mut acc = Accumulator::new();
            for (k, p) in proj.iter().enumerate() {
                acc.add(p * (rho * (k as f64 + 0.5) * ds).cos());
            }
            2.0 * ds * acc.value()
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct KNormConfig {
    /// t = 2^k for |k| ≤ k_max.
    pub k_max: i32,
    /// α shifts h = 2^{−m}, m = 0..=h_levels (clipped to the α cell width).
    pub h_levels: u32,
    /// Annulus radii R = 2^r, r in r_range.
    pub r_range: (i32, i32),
    /// |y| = 2^m, m in y_range, for the 𝓚_{ε,5} sup.
    pub y_range: (i32, i32),
    /// R = 2^r, r = 1..=r5_max, for 𝓚_{ε,5}.
    pub r5_max: i32,
    /// Grid for the L²-in-x seminorms.
    pub half_extent: f64,
    pub points_per_axis: usize,
    /// Truncation radius used when K has no declared x-support.
    pub truncation: f64,
    pub alpha_res: usize,
    pub shells_per_octave: usize,
    pub gl_nodes: usize,
    pub directions: usize,
}

impl KNormConfig {
    /// Grid and ranges sized so that t_min ≥ 4h and S + t_max fits the padded
    /// period.
    pub fn for_kernel(k: &ClosureKernel, k_max: i32) -> Self {
        let s = k.x_support.unwrap_or(8.0);
        let t_min = 2f64.powi(-k_max);
        let t_max = 2f64.powi(k_max);
        let half_extent = 0.5 * (s + t_max) * 1.05;
        let n = ((2.0 * half_extent) / (t_min / 4.0)).ceil() as usize;
        let points_per_axis = n.next_power_of_two().max(16);
        Self {
            k_max,
            h_levels: 4,
            r_range: (-k_max - 2, k_max + 2),
            y_range: (-k_max - 2, 2),
            r5_max: 6,
            half_extent,
            points_per_axis,
            truncation: 8.0,
            alpha_res: 16,
            shells_per_octave: 4,
            gl_nodes: 6,
            directions: 64,
        }
    }
}

/// 𝓚^η_{ε,1}, 𝓚^η_{ε,2}, 𝓚_{ε,3}, 𝓚_{ε,4}, 𝓚_{ε,5} with every sup over the
/// configured dyadic sets.
pub fn k_norm(k: &ClosureKernel, eps: f64, eta: &EtaSpec, cfg: &KNormConfig) -> Result<NormReport> {
    if !(eps > 0.0 && eps <= 1.0) {
        return invalid(format!("ε = {eps} outside (0, 1]"));
    }
    if eta.d != k.d {
        return Err(Error::Dimension("η and kernel dimensions differ".into()));
    }
    if k.d > 2 {
        return invalid("annular quadratures are implemented for d ∈ {1, 2}");
    }
    let grid = Grid::new(k.d, cfg.half_extent, cfg.points_per_axis)?;
    let h = grid.spacing();
    let s = k.x_support.unwrap_or(cfg.truncation).min(cfg.half_extent);
    let t_min = 2f64.powi(-cfg.k_max);
    let t_max = 2f64.powi(cfg.k_max);
    if t_min * eta.support < 4.0 * h || s + t_max * eta.support > 2.0 * cfg.half_extent {
        let lo = (4.0 * h / eta.support).log2().ceil();
        let hi = ((2.0 * cfg.half_extent - s) / eta.support).log2().floor();
        return Err(Error::Resolution(format!(
            "t range 2^±{} not resolvable on this grid; achievable t ∈ [2^{lo}, 2^{hi}]",
            cfg.k_max
        )));
    }
    let mut report = NormReport::new("k_eps", eps);
    let ts: Vec<f64> = (-cfg.k_max..=cfg.k_max).map(|k| 2f64.powi(k)).collect();
    let (k1, k2, hsets) = l2_seminorms(k, eps, eta, cfg, grid, s, &ts)?;
    report.set("K_eps_1", k1);
    report.set("K_eps_2", k2);
    let (k3, k4) = annular_seminorms(k, eps, cfg, &hsets);
    report.set("K_eps_3", k3);
    report.set("K_eps_4", k4);
    report.set("K_eps_5", regularity_seminorm(k, eps, cfg));
    report.lower_bound = true;
    report.note("t_set", &ts);
    report.note("alpha_h_sets", &hsets);
    report.note("R_set", (cfg.r_range.0..=cfg.r_range.1).map(|r| 2f64.powi(r)).collect::<Vec<_>>());
    report.note("y_magnitudes", (cfg.y_range.0..=cfg.y_range.1).map(|m| 2f64.powi(m)).collect::<Vec<_>>());
    report.note("R5_set", (1..=cfg.r5_max).map(|r| 2f64.powi(r)).collect::<Vec<_>>());
    report.note("grid", grid);
    report.note("x_support_used", s);
    report.note("alpha_res", cfg.alpha_res);
    report.note("eta", &eta.name);
    Ok(report)
}

fn alpha_layout(k: &ClosureKernel, res: usize, axis: Option<(usize, f64)>) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    let mut lo = Vec::new();
    let mut step = Vec::new();
    let mut count = Vec::new();
    for (i, (a, b)) in k.alpha_box.iter().enumerate() {
        let (mut a, b) = (*a, *b);
        let mut c = res;
        if let Some((ax, h)) = axis {
            if ax == i {
                let cell = (b - a) / res as f64;
                a -= h;
                c = ((b - a) / cell - 1e-9).ceil() as usize;
            }
        }
        lo.push(a);
        step.push((b - a) / c as f64);
        count.push(c);
    }
    (lo, step, count)
}

fn alpha_nodes(lo: &[f64], step: &[f64], count: &[usize]) -> (Vec<Vec<f64>>, f64) {
    let total: usize = count.iter().product();
    let cell: f64 = step.iter().product();
    let nodes = (0..total)
        .map(|idx| {
            let mut a = vec![0.0; lo.len()];
            let mut r = idx;
            for i in (0..lo.len()).rev() {
                a[i] = lo[i] + ((r % count[i]) as f64 + 0.5) * step[i];
                r /= count[i];
            }
            a
        })
        .collect();
    (nodes, cell)
}

fn shift_set(levels: u32, cell: f64) -> Vec<f64> {
    (0..=levels)
        .map(|m| 2f64.powi(-(m as i32)))
        .filter(|h| *h >= cell * (1.0 - 1e-12))
        .collect()
}

type L2Result = (f64, f64, Vec<Vec<f64>>);

fn l2_seminorms(
    k: &ClosureKernel,
    eps: f64,
    eta: &EtaSpec,
    cfg: &KNormConfig,
    grid: Grid,
    s: f64,
    ts: &[f64],
) -> Result<L2Result> {
    let d = k.d;
    let n = grid.points_per_axis;
    let m = 2 * n;
    let shape = vec![m; d];
    let h = grid.spacing();
    let dxi = 2.0 * PI / (m as f64 * h);
    let freq: Vec<f64> = (0..m.pow(d as u32))
        .map(|idx| {
            let mut r = idx;
            let mut acc = 0.0;
            for _ in 0..d {
                let kk = signed_index(r % m, m) as f64 * dxi;
                acc += kk * kk;
                r /= m;
            }
            acc.sqrt()
        })
        .collect();
    let norm_factor = grid.cell_volume() / (m.pow(d as u32)) as f64;
    // t ↦ t^{d/2}‖η^{(1/t)} ∗ g‖₂ for every t, from one spectrum of g.
    let profile = |values: &[f64]| -> Vec<f64> {
        let mut data = pad(values, d, n, m);
        fft_nd(&mut data, &shape, false);
        let power: Vec<f64> = data.iter().map(|z| z.norm_sqr()).collect();
        ts.iter()
            .map(|&t| {
                let mut acc = Accumulator::new();
                for (p, r) in power.iter().zip(&freq) {
                    if *p != 0.0 {
                        let e = eta.hat(t * r);
                        acc.add(e * e * p);
                    }
                }
                let l2sq = acc.value() * norm_factor;
                t.powf(d as f64 / 2.0) * l2sq.max(0.0).sqrt()
            })
            .collect()
    };
    let sample = |alpha: &[f64]| -> Vec<f64> {
        let mut x = [0.0; MAX_DIM];
        (0..grid.len())
            .map(|idx| {
                grid.node(idx, &mut x);
                if norm(&x[..d]) > s {
                    0.0
                } else {
                    k.eval(alpha, &x[..d])
                }
            })
            .collect()
    };

    let (lo, step, count) = alpha_layout(k, cfg.alpha_res, None);
    let (nodes, cell) = alpha_nodes(&lo, &step, &count);
    let profiles: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        nodes.par_iter().map(|a| profile(&sample(a))).collect()
    };
    let mut k1: f64 = 0.0;
    let axes = k.n.max(1);
    for i in 0..axes {
        for ti in 0..ts.len() {
            let mut acc = Accumulator::new();
            for (a, p) in nodes.iter().zip(&profiles) {
                let w = if k.n == 0 { 1.0 } else { (1.0 + a[i].abs()).powf(eps) };
                acc.add(w * p[ti]);
            }
            k1 = k1.max(acc.value() * cell);
        }
    }

    let mut k2: f64 = 0.0;
    let mut hsets = Vec::new();
    for i in 0..k.n {
        let hs = shift_set(cfg.h_levels, step[i]);
        for &hh in &hs {
            let (lo_e, step_e, count_e) = alpha_layout(k, cfg.alpha_res, Some((i, hh)));
            let (nodes_e, cell_e) = alpha_nodes(&lo_e, &step_e, &count_e);
            let diffs: Vec<Vec<f64>> = {
                use rayon::prelude::*;
                nodes_e
                    .par_iter()
                    .map(|a| {
                        let mut b = a.clone();
                        b[i] += hh;
                        let (fa, fb) = (sample(a), sample(&b));
                        let diff: Vec<f64> = fb.iter().zip(&fa).map(|(x, y)| x - y).collect();
                        if diff.iter().all(|v| *v == 0.0) {
                            vec![0.0; ts.len()]
                        } else {
                            profile(&diff)
                        }
                    })
                    .collect()
            };
            for ti in 0..ts.len() {
                let total: f64 = crate::numeric::sum(&diffs.iter().map(|p| p[ti]).collect::<Vec<_>>());
                k2 = k2.max(hh.powf(-eps) * total * cell_e);
            }
        }
        hsets.push(hs);
    }
    Ok((k1, k2, hsets))
}

/// Polar rule on r0 ≤ |x| ≤ r1: (points, weights).
fn annulus_rule(d: usize, r0: f64, r1: f64, cfg: &KNormConfig) -> Vec<(Vec<f64>, f64)> {
    let radial = log_radial_rule(r0, r1, cfg.shells_per_octave, cfg.gl_nodes);
    let (dirs, dw) = sphere_rule(d, cfg.directions);
    let mut out = Vec::with_capacity(radial.len() * dirs.len());
    for (r, w) in radial {
        let jac = r.powi(d as i32 - 1);
        for (th, tw) in dirs.iter().zip(&dw) {
            out.push((th.iter().map(|c| r * c).collect(), w * jac * tw));
        }
    }
    out
}

fn annular_seminorms(k: &ClosureKernel, eps: f64, cfg: &KNormConfig, hsets: &[Vec<f64>]) -> (f64, f64) {
    let (lo, step, count) = alpha_layout(k, cfg.alpha_res, None);
    let (nodes, cell) = alpha_nodes(&lo, &step, &count);
    let mut k3: f64 = 0.0;
    let mut k4: f64 = 0.0;
    for r in cfg.r_range.0..=cfg.r_range.1 {
        let big_r = 2f64.powi(r);
        let rule = annulus_rule(k.d, big_r, 2.0 * big_r, cfg);
        for i in 0..k.n.max(1) {
            let v = par_sum(nodes.len(), |ai| {
                let a = &nodes[ai];
                let w = if k.n == 0 { 1.0 } else { (1.0 + a[i].abs()).powf(eps) };
                w * rule.iter().map(|(x, wx)| wx * k.eval(a, x).abs()).sum::<f64>()
            }) * cell;
            k3 = k3.max(v);
        }
        for i in 0..k.n {
            for &hh in &hsets[i] {
                let (lo_e, step_e, count_e) = alpha_layout(k, cfg.alpha_res, Some((i, hh)));
                let (nodes_e, cell_e) = alpha_nodes(&lo_e, &step_e, &count_e);
                let v = par_sum(nodes_e.len(), |ai| {
                    let a = &nodes_e[ai];
                    let mut b = a.clone();
                    b[i] += hh;
                    rule.iter().map(|(x, wx)| wx * (k.eval(&b, x) - k.eval(a, x)).abs()).sum::<f64>()
                }) * cell_e;
                k4 = k4.max(hh.powf(-eps) * v);
            }
        }
    }
    (k3, k4)
}

/// sup_{R ≥ 2, y} R^ε ∬_{|x| ≥ R|y|} |K(α, x−y) − K(α, x)| dx dα, y on dyadic
/// spheres (8 directions in d = 2, ±1 in d = 1).
fn regularity_seminorm(k: &ClosureKernel, eps: f64, cfg: &KNormConfig) -> f64 {
    let (lo, step, count) = alpha_layout(k, cfg.alpha_res, None);
    let (nodes, cell) = alpha_nodes(&lo, &step, &count);
    let (ydirs, _) = sphere_rule(k.d, 8);
    let mut best: f64 = 0.0;
    for m in cfg.y_range.0..=cfg.y_range.1 {
        let ymag = 2f64.powi(m);
        for dir in &ydirs {
            let y: Vec<f64> = dir.iter().map(|c| ymag * c).collect();
            let r_lo = 2.0 * ymag;
            let outer = match k.x_support {
                Some(s) => (s + ymag).max(2f64.powi(cfg.r5_max + 1) * ymag),
                None => r_lo * 2f64.powi(24),
            };
            let octaves = ((outer / r_lo).log2().ceil() as i32).max(cfg.r5_max);
            // Per-octave integrals from the outermost inward.
            let mut octave_vals = vec![0.0; octaves as usize];
            for o in (0..octaves).rev() {
                let a0 = r_lo * 2f64.powi(o);
                let rule = annulus_rule(k.d, a0, 2.0 * a0, cfg);
                octave_vals[o as usize] = par_sum(nodes.len(), |ai| {
                    let a = &nodes[ai];
                    rule.iter()
                        .map(|(x, wx)| {
                            let xm: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p - q).collect();
                            wx * (k.eval(a, &xm) - k.eval(a, x)).abs()
                        })
                        .sum::<f64>()
                }) * cell;
            }
            let mut tail = Accumulator::new();
            let mut tails = vec![0.0; octaves as usize];
            for o in (0..octaves as usize).rev() {
                tail.add(octave_vals[o]);
                tails[o] = tail.value();
            }
            for r in 1..=cfg.r5_max {
                let o = (r - 1) as usize;
                if o < tails.len() {
                    best = best.max(2f64.powi(r).powf(eps) * tails[o]);
                }
            }
        }
    }
    best
}
