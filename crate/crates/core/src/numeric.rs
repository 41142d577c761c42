//! Small numerical building blocks: compensated summation, Gauss–Legendre
//! rules, smooth cutoffs, the C^∞ bump and sphere quadratures.

use rayon::prelude::*;
use std::f64::consts::PI;

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct Accumulator {
    sum: f64,
    comp: f64,
}

impl Accumulator {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated sum of a slice, in order.
pub fn sum(values: &[f64]) -> f64 {
    let mut acc = Accumulator::new();
    for &v in values {
        acc.add(v);
    }
    acc.value()
}

/// Evaluates `f` on `0..count` in parallel and sums the results in index order,
/// so the result does not depend on the thread count.
pub fn par_sum<F>(count: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let parts: Vec<f64> = (0..count).into_par_iter().map(f).collect();
    sum(&parts)
}

/// Parallel maximum over `0..count` (order-independent by construction).
pub fn par_max<F>(count: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    (0..count)
        .into_par_iter()
        .map(f)
        .reduce(|| 0.0, f64::max)
}

/// Midpoint-rule sum over a tensor box: Σ f(p)·Π step, with p running over
/// cell centres lo + (k + ½)·step. Parallel over the leading axis, summed in
/// index order.
pub fn box_sum<F>(lo: &[f64], step: &[f64], count: &[usize], f: F) -> f64
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    let dim = lo.len();
    if dim == 0 {
        let p: [f64; 0] = [];
        return f(&p);
    }
    if count.iter().any(|&c| c == 0) {
        return 0.0;
    }
    let inner: usize = count[1..].iter().product();
    let cell: f64 = step.iter().product();
    let total = par_sum(count[0], |i0| {
        let mut p = vec![0.0; dim];
        p[0] = lo[0] + (i0 as f64 + 0.5) * step[0];
        let mut acc = Accumulator::new();
        for rest in 0..inner {
            let mut r = rest;
            for a in (1..dim).rev() {
                let k = r % count[a];
                r /= count[a];
                p[a] = lo[a] + (k as f64 + 0.5) * step[a];
            }
            acc.add(f(&p));
        }
        acc.value()
    });
    total * cell
}

/// Gauss–Legendre nodes and weights on [0, 1].
pub fn gauss_legendre01(q: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(q >= 1);
    let mut nodes = vec![0.0; q];
    let mut weights = vec![0.0; q];
    for i in 0..q {
        let mut x = (PI * (i as f64 + 0.75) / (q as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=q {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = q as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = 0.5 * (1.0 - x);
        weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Quintic smoothstep on [0,1]: 0 below, 1 above, C² in between.
#[inline]
pub fn smoothstep5(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

/// Radial cutoff equal to 1 for r ≤ r0, 0 for r ≥ r1, smoothstep bridge.
#[inline]
pub fn radial_cutoff(r: f64, r0: f64, r1: f64) -> f64 {
    1.0 - smoothstep5((r - r0) / (r1 - r0))
}

/// Unnormalized bump exp(−1/(1−r²)) for r < 1, else 0.
#[inline]
pub fn bump_profile(r2: f64) -> f64 {
    if r2 >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r2)).exp()
    }
}

/// Volume of the unit ball in ℝ^d.
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(d - 2) * 2.0 * PI / d as f64,
    }
}

/// Surface measure of S^{d−1}.
pub fn sphere_area(d: usize) -> f64 {
    d as f64 * unit_ball_volume(d)
}

/// Normalizing constant c_d with ∫ c_d·exp(−1/(1−|x|²)) dx = 1 over ℝ^d.
pub fn bump_normalization(d: usize) -> f64 {
    // The radial integrand vanishes to all orders at r = 1, so a fine
    // composite midpoint rule is accurate to round-off.
    let m = 200_000;
    let mut acc = Accumulator::new();
    for k in 0..m {
        let r = (k as f64 + 0.5) / m as f64;
        acc.add(r.powi(d as i32 - 1) * bump_profile(r * r));
    }
    let radial = acc.value() / m as f64;
    1.0 / (sphere_area(d) * radial)
}

/// Normalized mollifier φ(x) = c_d exp(−1/(1−|x|²)).
#[derive(Debug, Clone, Copy)]
pub struct Bump {
    pub dim: usize,
    pub norm: f64,
}

impl Bump {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            norm: bump_normalization(dim),
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.norm * bump_profile(norm2(x))
    }

    /// ψ(x) = φ(x) − 2^{−d} φ(x/2).
    #[inline]
    pub fn psi(&self, x: &[f64]) -> f64 {
        let r2 = norm2(x);
        self.norm * (bump_profile(r2) - 0.5f64.powi(self.dim as i32) * bump_profile(r2 / 4.0))
    }
}

#[inline]
pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

#[inline]
pub fn norm(x: &[f64]) -> f64 {
    norm2(x).sqrt()
}

/// Quadrature directions on S^{d−1} with weights summing to |S^{d−1}|.
/// d = 1 uses {±1}; d = 2 uses `m` equally spaced angles offset by half a step.
pub fn sphere_rule(d: usize, m: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    match d {
        1 => (vec![vec![1.0], vec![-1.0]], vec![1.0, 1.0]),
        2 => {
            let m = m.max(2);
            let w = 2.0 * PI / m as f64;
            let dirs = (0..m)
                .map(|k| {
                    let t = (k as f64 + 0.5) * w;
                    vec![t.cos(), t.sin()]
                })
                .collect();
            (dirs, vec![w; m])
        }
        _ => panic!("sphere rule implemented for d ∈ {{1, 2}}"),
    }
}

/// Dyadic radial shells between r0 and r1 (geometric), with Gauss–Legendre
/// nodes in log r. Returns (r, weight for ∫ g(r) dr).
pub fn log_radial_rule(r0: f64, r1: f64, shells_per_octave: usize, q: usize) -> Vec<(f64, f64)> {
    if r1 <= r0 {
        return Vec::new();
    }
    let octaves = (r1 / r0).log2();
    let shells = ((octaves * shells_per_octave as f64).ceil() as usize).max(1);
    let (gx, gw) = gauss_legendre01(q);
    let l0 = r0.ln();
    let dl = (r1.ln() - l0) / shells as f64;
    let mut out = Vec::with_capacity(shells * q);
    // Outermost shell first: callers summing in order accumulate from the
    // outside in.
    for s in (0..shells).rev() {
        for k in 0..q {
            let l = l0 + (s as f64 + gx[k]) * dl;
            let r = l.exp();
            out.push((r, gw[k] * dl * r));
        }
    }
    out
}

/// Least-squares slope of y against x.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre01(6);
        for p in 0..12 {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum();
            assert_relative_eq!(q, 1.0 / (p as f64 + 1.0), epsilon = 1e-13);
        }
    }

    #[test]
    fn bump_is_normalized() {
        for d in 1..=3 {
            let b = Bump::new(d);
            // Radial check against an independent trapezoid over [0,1].
            let m = 50_000;
            let mut s = if d == 1 { 0.5 * b.eval(&[0.0]) } else { 0.0 };
            for k in 1..m {
                let r = k as f64 / m as f64;
                s += r.powi(d as i32 - 1) * b.eval(&[r]);
            }
            assert_relative_eq!(s / m as f64 * sphere_area(d), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn ball_volumes() {
        assert_relative_eq!(unit_ball_volume(2), PI, epsilon = 1e-15);
        assert_relative_eq!(unit_ball_volume(3), 4.0 * PI / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn log_rule_integrates_power() {
        let rule = log_radial_rule(0.1, 3.0, 2, 8);
        let s: f64 = rule.iter().map(|(r, w)| w / r).sum();
        assert_relative_eq!(s, (30.0f64).ln(), epsilon = 1e-12);
    }

    #[test]
    fn box_sum_integrates_bilinear_exactly() {
        let v = box_sum(&[0.0, -1.0], &[0.125, 0.25], &[8, 8], |p| p[0] * p[1] + 1.0);
        assert_relative_eq!(v, 2.0, epsilon = 1e-14);
    }

    #[test]
    fn compensated_sum_recovers_cancellation() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(sum(&v), 2.0);
    }
}
