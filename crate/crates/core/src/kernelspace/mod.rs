//! Kernel representations and their norm scales.
//!
//! [`KernelB`] is a compactly supported ς(α, v) on ℝⁿ×ℝ^d given by a closure,
//! [`ClosureKernel`] is a possibly singular K(α, x), and [`DyadicKernel`]
//! stores K = Σ_j ς_j^{(2^j)}.

mod besov;
mod decompose;
mod knorm;

pub use besov::{besov_norm, besov_norm_with, dyadic_split, gamma_eps, m_quantity, split_decay_slope, BesovConfig, SplitPiece};
pub use decompose::{decompose_kernel, decompose_kernel_with, reconstruct, DecomposeConfig, DyadicKernel, Reconstruction, ResidualReport};
pub use knorm::{k_norm, EtaSpec, KNormConfig};

use crate::error::{invalid, Error, Result};
use crate::numeric::{box_sum, bump_profile, norm, norm2, Accumulator};
use crate::tolerances;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

/// Shared closure (α, v) ↦ value.
pub type AlphaVFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// Shared closure x ↦ value on ℝ^d.
pub type PointFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A kernel ς(α, v) supported in Π[loᵢ, hiᵢ] × [−V, V]^d.
#[derive(Clone)]
pub struct KernelB {
    pub n: usize,
    pub d: usize,
    eval: AlphaVFn,
    /// Per-coordinate α support intervals.
    pub alpha_box: Vec<(f64, f64)>,
    /// Half extent V of the v box.
    pub v_box: f64,
    /// Midpoint cells per α axis.
    pub alpha_res: usize,
    /// Midpoint cells per v axis.
    pub v_res: usize,
    pub cancels_in_v: bool,
    pub name: String,
}

impl fmt::Debug for KernelB {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelB")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("d", &self.d)
            .field("alpha_box", &self.alpha_box)
            .field("v_box", &self.v_box)
            .field("alpha_res", &self.alpha_res)
            .field("v_res", &self.v_res)
            .field("cancels_in_v", &self.cancels_in_v)
            .finish()
    }
}

impl KernelB {
    pub fn new<F>(
        n: usize,
        d: usize,
        alpha_box: Vec<(f64, f64)>,
        v_box: f64,
        alpha_res: usize,
        v_res: usize,
        f: F,
    ) -> Result<Self>
    where
        F: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        Self::from_arc(n, d, alpha_box, v_box, alpha_res, v_res, Arc::new(f))
    }

    pub fn from_arc(
        n: usize,
        d: usize,
        alpha_box: Vec<(f64, f64)>,
        v_box: f64,
        alpha_res: usize,
        v_res: usize,
        eval: AlphaVFn,
    ) -> Result<Self> {
        if d == 0 || d > crate::field::MAX_DIM {
            return invalid(format!("kernel dimension d = {d} unsupported"));
        }
        if alpha_box.len() != n {
            return Err(Error::Dimension(format!("{} α intervals for n = {n}", alpha_box.len())));
        }
        if alpha_box.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo < hi)) {
            return invalid("α intervals must be finite with lo < hi");
        }
        if !(v_box.is_finite() && v_box > 0.0) {
            return invalid("v box half extent must be positive");
        }
        if (n > 0 && alpha_res == 0) || v_res == 0 {
            return invalid("quadrature resolutions must be positive");
        }
        let k = Self {
            n,
            d,
            eval,
            alpha_box,
            v_box,
            alpha_res,
            v_res,
            cancels_in_v: false,
            name: "kernel".into(),
        };
        let mass = k.l1_norm();
        if !mass.is_finite() {
            return Err(Error::NonFinite(format!("kernel samples on its box (mass {mass})")));
        }
        Ok(k)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Same kernel on a refined or coarsened quadrature grid.
    pub fn with_resolution(mut self, alpha_res: usize, v_res: usize) -> Self {
        self.alpha_res = alpha_res.max(1);
        self.v_res = v_res.max(1);
        self
    }

    /// Sets `cancels_in_v` after checking the per-α gate.
    pub fn declare_cancellation(mut self) -> Result<Self> {
        let defect = self.cancellation_defect();
        if defect > tolerances::CANCELLATION {
            return Err(Error::Cancellation(format!(
                "{}: relative per-α v-integral {defect:e}",
                self.name
            )));
        }
        self.cancels_in_v = true;
        Ok(self)
    }

    #[inline]
    pub fn in_box(&self, alpha: &[f64], v: &[f64]) -> bool {
        alpha
            .iter()
            .zip(&self.alpha_box)
            .all(|(a, (lo, hi))| *a >= *lo && *a <= *hi)
            && v.iter().all(|c| c.abs() <= self.v_box)
    }

    /// ς(α, v), zero outside the declared box.
    #[inline]
    pub fn eval(&self, alpha: &[f64], v: &[f64]) -> f64 {
        if self.in_box(alpha, v) {
            (self.eval)(alpha, v)
        } else {
            0.0
        }
    }

    /// Box-restricted evaluation as a shareable closure.
    pub fn closure(&self) -> AlphaVFn {
        let k = self.clone();
        Arc::new(move |a: &[f64], v: &[f64]| k.eval(a, v))
    }

    pub fn alpha_steps(&self) -> Vec<f64> {
        self.alpha_box
            .iter()
            .map(|(lo, hi)| (hi - lo) / self.alpha_res as f64)
            .collect()
    }

    pub fn v_step(&self) -> f64 {
        2.0 * self.v_box / self.v_res as f64
    }

    /// Midpoint quadrature layout (lo, step, count) over the α×v box.
    pub fn quadrature_layout(&self) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
        let mut lo: Vec<f64> = self.alpha_box.iter().map(|(l, _)| *l).collect();
        let mut step = self.alpha_steps();
        let mut count = vec![self.alpha_res; self.n];
        for _ in 0..self.d {
            lo.push(-self.v_box);
            step.push(self.v_step());
            count.push(self.v_res);
        }
        (lo, step, count)
    }

    /// ∬ g(α, v, ς(α, v)) dα dv by the midpoint rule on the kernel box.
    pub fn integrate<G>(&self, g: G) -> f64
    where
        G: Fn(&[f64], &[f64], f64) -> f64 + Sync + Send,
    {
        let (lo, step, count) = self.quadrature_layout();
        let n = self.n;
        box_sum(&lo, &step, &count, |p| {
            let (a, v) = p.split_at(n);
            g(a, v, (self.eval)(a, v))
        })
    }

    pub fn l1_norm(&self) -> f64 {
        self.integrate(|_, _, s| s.abs())
    }

    /// Number of α quadrature nodes.
    pub fn alpha_node_count(&self) -> usize {
        self.alpha_res.pow(self.n as u32)
    }

    /// Centre of α cell `idx` (row-major, last coordinate fastest).
    pub fn alpha_node(&self, idx: usize) -> Vec<f64> {
        let steps = self.alpha_steps();
        let mut a = vec![0.0; self.n];
        let mut r = idx;
        for i in (0..self.n).rev() {
            let k = r % self.alpha_res;
            r /= self.alpha_res;
            a[i] = self.alpha_box[i].0 + (k as f64 + 0.5) * steps[i];
        }
        a
    }

    /// (∫ς(α, v) dv, ∫|ς(α, v)| dv) at a fixed α by the midpoint rule in v.
    pub fn v_moments(&self, alpha: &[f64]) -> (f64, f64) {
        let lo = vec![-self.v_box; self.d];
        let step = vec![self.v_step(); self.d];
        let count = vec![self.v_res; self.d];
        let mut sum = Accumulator::new();
        let mut abs = Accumulator::new();
        let cell: f64 = step.iter().product();
        let total: usize = count.iter().product();
        let mut v = vec![0.0; self.d];
        for idx in 0..total {
            let mut r = idx;
            for a in (0..self.d).rev() {
                v[a] = lo[a] + ((r % count[a]) as f64 + 0.5) * step[a];
                r /= count[a];
            }
            let s = (self.eval)(alpha, &v);
            sum.add(s);
            abs.add(s.abs());
        }
        (sum.value() * cell, abs.value() * cell)
    }

    /// max over α nodes of |∫ς dv| / (∫|ς| dv + floor).
    pub fn cancellation_defect(&self) -> f64 {
        crate::numeric::par_max(self.alpha_node_count(), |idx| {
            let (s, m) = self.v_moments(&self.alpha_node(idx));
            s.abs() / (m + tolerances::CANCELLATION_FLOOR)
        })
    }

    pub fn scaled(&self, c: f64) -> Self {
        let inner = self.eval.clone();
        let mut k = self.clone();
        k.eval = Arc::new(move |a: &[f64], v: &[f64]| c * inner(a, v));
        k
    }

    /// ς^{(t)}(α, v) = t^d ς(α, tv) on the v box shrunk by t.
    pub fn dilated(&self, t: f64) -> Result<Self> {
        if !(t.is_finite() && t > 0.0) {
            return invalid("dilation factor must be positive");
        }
        if t == 1.0 {
            return Ok(self.clone());
        }
        let inner = self.eval.clone();
        let scale = t.powi(self.d as i32);
        let eval: AlphaVFn = Arc::new(move |a: &[f64], v: &[f64]| {
            let w: Vec<f64> = v.iter().map(|c| t * c).collect();
            scale * inner(a, &w)
        });
        let mut k = self.remapped(self.alpha_box.clone(), self.v_box / t, eval)?;
        k.name = format!("{}^({t})", self.name);
        Ok(k)
    }

    /// Replaces the closure and box, keeping resolutions and flags.
    pub fn remapped(&self, alpha_box: Vec<(f64, f64)>, v_box: f64, eval: AlphaVFn) -> Result<Self> {
        let mut k = Self::from_arc(self.n, self.d, alpha_box, v_box, self.alpha_res, self.v_res, eval)?;
        k.name = self.name.clone();
        k.cancels_in_v = self.cancels_in_v;
        Ok(k)
    }
}

/// K(α, x) on ℝⁿ×ℝ^d, possibly singular at x = 0.
#[derive(Clone)]
pub struct ClosureKernel {
    pub n: usize,
    pub d: usize,
    eval: AlphaVFn,
    pub alpha_box: Vec<(f64, f64)>,
    /// Radius outside which K vanishes, if compactly supported in x.
    pub x_support: Option<f64>,
    pub name: String,
}

impl fmt::Debug for ClosureKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClosureKernel")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("d", &self.d)
            .field("alpha_box", &self.alpha_box)
            .field("x_support", &self.x_support)
            .finish()
    }
}

impl ClosureKernel {
    pub fn new<F>(n: usize, d: usize, alpha_box: Vec<(f64, f64)>, x_support: Option<f64>, f: F) -> Result<Self>
    where
        F: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        if alpha_box.len() != n {
            return Err(Error::Dimension("α box length must equal n".into()));
        }
        if d == 0 || d > crate::field::MAX_DIM {
            return invalid("unsupported kernel dimension");
        }
        Ok(Self {
            n,
            d,
            eval: Arc::new(f),
            alpha_box,
            x_support,
            name: "closure".into(),
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// K(α, x); zero outside the α box, outside the x support and at x = 0.
    #[inline]
    pub fn eval(&self, alpha: &[f64], x: &[f64]) -> f64 {
        if !alpha
            .iter()
            .zip(&self.alpha_box)
            .all(|(a, (lo, hi))| *a >= *lo && *a <= *hi)
        {
            return 0.0;
        }
        let r2 = norm2(x);
        if r2 == 0.0 {
            return 0.0;
        }
        if let Some(s) = self.x_support {
            if r2 > s * s {
                return 0.0;
            }
        }
        (self.eval)(alpha, x)
    }

    /// K^{(t)}(α, x) = t^d K(α, tx).
    pub fn dilated(&self, t: f64) -> Result<Self> {
        if !(t.is_finite() && t > 0.0) {
            return invalid("dilation factor must be positive");
        }
        let inner = self.clone();
        let d = self.d;
        let scale = t.powi(d as i32);
        let mut k = ClosureKernel::new(self.n, d, self.alpha_box.clone(), self.x_support.map(|s| s / t), move |a, x| {
            let y: Vec<f64> = x.iter().map(|c| t * c).collect();
            scale * inner.eval(a, &y)
        })?;
        k.name = format!("{}^({t})", self.name);
        Ok(k)
    }

    /// A single-scale kernel K = ς^{(1)} viewed as a closure kernel.
    pub fn from_kernel_b(s: &KernelB) -> Self {
        let inner = s.clone();
        Self {
            n: s.n,
            d: s.d,
            eval: Arc::new(move |a: &[f64], x: &[f64]| inner.eval(a, x)),
            alpha_box: s.alpha_box.clone(),
            x_support: Some(s.v_box * (s.d as f64).sqrt()),
            name: s.name.clone(),
        }
    }
}

/// A convolution kernel κ on ℝ^d∖{0}.
#[derive(Clone)]
pub struct CZKernelSpec {
    pub name: String,
    pub d: usize,
    kappa: PointFn,
    /// Degree of homogeneity, −d for the classical singular kernels.
    pub homogeneity: Option<f64>,
    pub odd: bool,
    /// Constant C bounding ‖κ̂‖_∞ and the Hörmander-type regularity integral.
    pub cz_constant: Option<f64>,
    /// Radius outside which κ vanishes, if any.
    pub support: Option<f64>,
}

impl fmt::Debug for CZKernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CZKernelSpec")
            .field("name", &self.name)
            .field("d", &self.d)
            .field("homogeneity", &self.homogeneity)
            .field("odd", &self.odd)
            .field("cz_constant", &self.cz_constant)
            .field("support", &self.support)
            .finish()
    }
}

/// Deterministic probe points used by the homogeneity and parity gates.
fn probe_points(d: usize) -> Vec<Vec<f64>> {
    let mut pts = Vec::new();
    for k in 0..12 {
        let t = 0.37 + 0.61 * k as f64;
        let p: Vec<f64> = (0..d).map(|a| (t * (a as f64 + 1.3)).sin() + 0.2 * (a as f64 + 1.0)).collect();
        if norm(&p) > 1e-3 {
            pts.push(p);
        }
    }
    pts
}

impl CZKernelSpec {
    pub fn new<F>(name: impl Into<String>, d: usize, kappa: F, homogeneity: Option<f64>, odd: bool) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        let spec = Self {
            name: name.into(),
            d,
            kappa: Arc::new(kappa),
            homogeneity,
            odd,
            cz_constant: None,
            support: None,
        };
        if let Some(deg) = homogeneity {
            for x in probe_points(d) {
                for t in [0.5, 2.0, 3.7] {
                    let y: Vec<f64> = x.iter().map(|c| t * c).collect();
                    let (a, b) = (spec.kappa(&y), t.powf(deg) * spec.kappa(&x));
                    if (a - b).abs() > tolerances::HOMOGENEITY * a.abs().max(b.abs()).max(1e-300) {
                        return invalid(format!("{}: not homogeneous of degree {deg}", spec.name));
                    }
                }
            }
        }
        if odd {
            for x in probe_points(d) {
                let y: Vec<f64> = x.iter().map(|c| -c).collect();
                let (a, b) = (spec.kappa(&x), spec.kappa(&y));
                if (a + b).abs() > tolerances::PARITY * a.abs().max(1.0) {
                    return Err(Error::Parity(format!("{}: κ(−x) ≠ −κ(x)", spec.name)));
                }
            }
        }
        Ok(spec)
    }

    pub fn with_cz_constant(mut self, c: f64) -> Self {
        self.cz_constant = Some(c);
        self
    }

    pub fn with_support(mut self, r: f64) -> Self {
        self.support = Some(r);
        self
    }

    /// κ(x), with κ(0) = 0 and zero outside the declared support.
    #[inline]
    pub fn kappa(&self, x: &[f64]) -> f64 {
        let r2 = norm2(x);
        if r2 == 0.0 {
            return 0.0;
        }
        if let Some(s) = self.support {
            if r2 > s * s {
                return 0.0;
            }
        }
        (self.kappa)(x)
    }

    pub fn closure(&self) -> PointFn {
        let s = self.clone();
        Arc::new(move |x: &[f64]| s.kappa(x))
    }

    /// Hilbert-transform kernel 1/x on ℝ.
    pub fn hilbert() -> Self {
        Self::new("hilbert", 1, |x| 1.0 / x[0], Some(-1.0), true)
            .expect("1/x is odd and homogeneous")
            .with_cz_constant(std::f64::consts::PI)
    }

    /// |x|^{−d}: even, homogeneous, not a CZ kernel (no cancellation); used for
    /// cross-checks of annular quadratures.
    pub fn radial_power(d: usize) -> Self {
        Self::new("radial_power", d, move |x| norm(x).powi(-(d as i32)), Some(-(d as f64)), false)
            .expect("|x|^{-d} is homogeneous")
    }

    /// Smooth compactly supported odd kernel x₁·exp(−1/(1−|x|²)) on |x| < 1.
    pub fn odd_bump(d: usize) -> Self {
        Self::new("odd_bump", d, |x| x[0] * bump_profile(norm2(x)), None, true)
            .expect("x₁·bump is odd")
            .with_support(1.0)
    }
}

/// κ_ij(x) = xᵢxⱼ/|x|^{d+2} (i < j) and κᵢ(x) = (xᵢ² − x_d²)/|x|^{d+2} (i < d).
pub fn riesz_kernels(d: usize) -> Result<Vec<CZKernelSpec>> {
    if d < 2 {
        return invalid("second-order Riesz-type kernels need d ≥ 2");
    }
    let p = (d + 2) as i32;
    let mut out = Vec::new();
    for i in 0..d {
        for j in (i + 1)..d {
            out.push(
                CZKernelSpec::new(
                    format!("kappa_{}{}", i + 1, j + 1),
                    d,
                    move |x| x[i] * x[j] / norm(x).powi(p),
                    Some(-(d as f64)),
                    false,
                )?
                .with_cz_constant(1.0),
            );
        }
    }
    for i in 0..d - 1 {
        out.push(
            CZKernelSpec::new(
                format!("kappa_{}", i + 1),
                d,
                move |x| (x[i] * x[i] - x[d - 1] * x[d - 1]) / norm(x).powi(p),
                Some(-(d as f64)),
                false,
            )?
            .with_cz_constant(1.0),
        );
    }
    Ok(out)
}

/// K(α, x) = χ_{[0,1]ⁿ}(α)κ(x).
pub fn cj_kernel(kappa: &CZKernelSpec, n: usize) -> ClosureKernel {
    let k = kappa.clone();
    ClosureKernel {
        n,
        d: kappa.d,
        eval: Arc::new(move |_a: &[f64], x: &[f64]| k.kappa(x)),
        alpha_box: vec![(0.0, 1.0); n],
        x_support: kappa.support,
        name: format!("cj[{}]", kappa.name),
    }
}

/// Seminorm components with the discretization that produced them.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct NormReport {
    pub kind: String,
    pub epsilon: f64,
    /// Summed into `total`.
    pub components: BTreeMap<String, f64>,
    /// Derived quantities reported alongside (not part of `total`).
    pub derived: BTreeMap<String, f64>,
    pub total: f64,
    /// True when sups were taken over sampled sets and only bound the true
    /// value from below.
    pub lower_bound: bool,
    pub discretization: BTreeMap<String, serde_json::Value>,
}

impl NormReport {
    pub fn new(kind: impl Into<String>, epsilon: f64) -> Self {
        Self {
            kind: kind.into(),
            epsilon,
            components: BTreeMap::new(),
            derived: BTreeMap::new(),
            total: 0.0,
            lower_bound: false,
            discretization: BTreeMap::new(),
        }
    }

    pub fn set(&mut self, name: &str, value: f64) {
        self.components.insert(name.to_string(), value);
        self.total = crate::numeric::sum(&self.components.values().copied().collect::<Vec<_>>());
    }

    pub fn set_derived(&mut self, name: &str, value: f64) {
        self.derived.insert(name.to_string(), value);
    }

    pub fn note(&mut self, key: &str, value: impl Serialize) {
        self.discretization.insert(
            key.to_string(),
            serde_json::to_value(value).unwrap_or(serde_json::Value::Null),
        );
    }

    /// Component or derived value by name.
    pub fn get(&self, name: &str) -> Option<f64> {
        self.components.get(name).or_else(|| self.derived.get(name)).copied()
    }
}
