//! The multilinear forms
//!
//! Λ[ς](b₁,…,b_{n+2}) = ∭ ς(α, x−y) b_{n+2}(x) b_{n+1}(y) Πᵢ bᵢ(x − αᵢ(x−y)) dα dx dy,
//!
//! their dyadic partial sums, and the truncated commutators in [`commutator`].

mod commutator;

pub use commutator::{calderon_1d, d_commutator, rotation_reduce, PVSpec, RotationResult};

use crate::error::{invalid, Error, Result};
use crate::field::{ExponentTuple, SampledField, MAX_DIM};
use crate::kernelspace::{DyadicKernel, KernelB};
use crate::numeric::{box_sum, Accumulator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

/// Integration dimension n + 2d up to which tensor quadrature is used.
pub const TENSOR_MAX_DIM: usize = 5;
const MC_CHUNK: usize = 4096;
const MC_UNIFORM_MIX: f64 = 0.1;
const MC_TABLE_CELLS: usize = 1 << 20;

#[derive(Debug, Clone)]
pub enum FormKernel {
    Single(KernelB),
    Dyadic(DyadicKernel),
}

impl FormKernel {
    pub fn n(&self) -> usize {
        match self {
            FormKernel::Single(s) => s.n,
            FormKernel::Dyadic(k) => k.n,
        }
    }

    pub fn d(&self) -> usize {
        match self {
            FormKernel::Single(s) => s.d,
            FormKernel::Dyadic(k) => k.d,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FormInstance {
    pub kernel: FormKernel,
    /// b₁, …, b_{n+2}.
    pub fields: Vec<SampledField>,
    pub exponents: Option<ExponentTuple>,
}

impl FormInstance {
    pub fn new(kernel: KernelB, fields: Vec<SampledField>) -> Result<Self> {
        Self::with_kernel(FormKernel::Single(kernel), fields)
    }

    pub fn with_kernel(kernel: FormKernel, fields: Vec<SampledField>) -> Result<Self> {
        let (n, d) = (kernel.n(), kernel.d());
        if fields.len() != n + 2 {
            return Err(Error::Dimension(format!("{} fields for an (n+2)-linear form with n = {n}", fields.len())));
        }
        if fields.iter().any(|f| f.dim() != d) {
            return Err(Error::Dimension("field and kernel dimensions differ".into()));
        }
        Ok(Self {
            kernel,
            fields,
            exponents: None,
        })
    }

    pub fn with_exponents(mut self, p: ExponentTuple) -> Result<Self> {
        if p.len() != self.fields.len() {
            return Err(Error::Dimension("exponent tuple length".into()));
        }
        self.exponents = Some(p);
        Ok(self)
    }

    /// Same kernel, new fields.
    pub fn with_fields(&self, fields: Vec<SampledField>) -> Result<Self> {
        let mut out = Self::with_kernel(self.kernel.clone(), fields)?;
        out.exponents = self.exponents.clone();
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Tensor,
    Montecarlo,
}

#[derive(Debug, Clone, Serialize)]
pub struct Budget {
    pub mc_samples: usize,
    pub seed: u64,
    /// Overrides the dimension-based choice.
    pub method: Option<Method>,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            mc_samples: 1 << 18,
            seed: 0,
            method: None,
        }
    }
}

impl Budget {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FormResult {
    pub value: f64,
    pub error_estimate: f64,
    pub budget: Budget,
    pub method: Method,
    pub seed: Option<u64>,
    /// Quadrature nodes or Monte Carlo samples actually used.
    pub evaluations: u64,
}

impl FormResult {
    fn combine(parts: &[FormResult], budget: &Budget) -> FormResult {
        let mut v = Accumulator::new();
        let mut e = Accumulator::new();
        for p in parts {
            v.add(p.value);
            e.add(p.error_estimate);
        }
        let method = if parts.iter().any(|p| p.method == Method::Montecarlo) {
            Method::Montecarlo
        } else {
            Method::Tensor
        };
        FormResult {
            value: v.value(),
            error_estimate: e.value(),
            budget: budget.clone(),
            method,
            seed: (method == Method::Montecarlo).then_some(budget.seed),
            evaluations: parts.iter().map(|p| p.evaluations).sum(),
        }
    }
}

pub fn evaluate_form(inst: &FormInstance, budget: &Budget) -> Result<FormResult> {
    match &inst.kernel {
        FormKernel::Single(s) => evaluate_kernel(s, &inst.fields, budget),
        FormKernel::Dyadic(dk) => {
            let parts = dk
                .pieces
                .iter()
                .map(|(j, s)| evaluate_kernel(&s.dilated(2f64.powi(*j))?, &inst.fields, budget))
                .collect::<Result<Vec<_>>>()?;
            Ok(FormResult::combine(&parts, budget))
        }
    }
}

/// Λ[ς](b) for a single kernel.
pub fn evaluate_kernel(s: &KernelB, fields: &[SampledField], budget: &Budget) -> Result<FormResult> {
    if fields.len() != s.n + 2 {
        return Err(Error::Dimension("field count must be n + 2".into()));
    }
    if fields.iter().any(|f| f.dim() != s.d) {
        return Err(Error::Dimension("field and kernel dimensions differ".into()));
    }
    let method = budget.method.unwrap_or(if s.n + 2 * s.d <= TENSOR_MAX_DIM {
        Method::Tensor
    } else {
        Method::Montecarlo
    });
    let r = match method {
        Method::Tensor => tensor(s, fields, budget),
        Method::Montecarlo => montecarlo(s, fields, budget),
    }?;
    if !r.value.is_finite() {
        return Err(Error::NonFinite(format!("form value for kernel {}", s.name)));
    }
    Ok(r)
}

/// b_{n+2}(x) b_{n+1}(x−v) Πᵢ bᵢ(x − αᵢv).
#[inline]
fn integrand(fields: &[SampledField], alpha: &[f64], v: &[f64], x: &[f64]) -> f64 {
    let n = alpha.len();
    let d = x.len();
    let mut val = fields[n + 1].sample(x);
    if val == 0.0 {
        return 0.0;
    }
    let mut p = [0.0; MAX_DIM];
    for a in 0..d {
        p[a] = x[a] - v[a];
    }
    val *= fields[n].sample(&p[..d]);
    for (i, ai) in alpha.iter().enumerate() {
        if val == 0.0 {
            return 0.0;
        }
        for a in 0..d {
            p[a] = x[a] - ai * v[a];
        }
        val *= fields[i].sample(&p[..d]);
    }
    val
}

/// Midpoint rule in (α, v) on the kernel box, node sum in x over the support
/// of b_{n+2}. The error estimate is the gap to the rule with every step
/// doubled.
fn tensor(s: &KernelB, fields: &[SampledField], budget: &Budget) -> Result<FormResult> {
    let last = &fields[s.n + 1];
    let grid = last.grid;
    let d = s.d;
    let xs: Vec<(Vec<f64>, [usize; MAX_DIM])> = (0..grid.len())
        .filter(|&i| last.values[i] != 0.0)
        .map(|i| (grid.node_vec(i), grid.multi_index(i)))
        .collect();
    let hd = grid.cell_volume();
    let level = |alpha_res: usize, v_res: usize, stride: usize| -> f64 {
        let (mut lo, mut step, mut count) = s.quadrature_layout();
        for i in 0..s.n {
            count[i] = alpha_res;
            step[i] = (s.alpha_box[i].1 - s.alpha_box[i].0) / alpha_res as f64;
        }
        for a in 0..d {
            count[s.n + a] = v_res;
            step[s.n + a] = 2.0 * s.v_box / v_res as f64;
            lo[s.n + a] = -s.v_box;
        }
        let weight = hd * (stride.pow(d as u32)) as f64;
        box_sum(&lo, &step, &count, |p| {
            let (a, v) = p.split_at(s.n);
            let k = s.eval(a, v);
            if k == 0.0 {
                return 0.0;
            }
            let mut acc = Accumulator::new();
            for (x, m) in &xs {
                if stride > 1 && m[..d].iter().any(|c| c % stride != 0) {
                    continue;
                }
                acc.add(integrand(fields, a, v, x));
            }
            k * acc.value() * weight
        })
    };
    let fine = level(s.alpha_res, s.v_res, 1);
    let coarse = level((s.alpha_res / 2).max(1), (s.v_res / 2).max(1), 2);
    let nodes = (s.alpha_res.pow(s.n as u32) * s.v_res.pow(d as u32) * xs.len()) as u64;
    Ok(FormResult {
        value: fine,
        error_estimate: (fine - coarse).abs(),
        budget: budget.clone(),
        method: Method::Tensor,
        seed: None,
        evaluations: nodes,
    })
}

/// Cumulative table for sampling cell indices with probability ∝ weight,
/// mixed with a uniform component.
struct CellSampler {
    cdf: Vec<f64>,
    prob: Vec<f64>,
}

impl CellSampler {
    fn new(weights: &[f64]) -> Self {
        let total: f64 = weights.iter().sum();
        let m = weights.len() as f64;
        let prob: Vec<f64> = weights
            .iter()
            .map(|w| {
                if total > 0.0 {
                    (1.0 - MC_UNIFORM_MIX) * w / total + MC_UNIFORM_MIX / m
                } else {
                    1.0 / m
                }
            })
            .collect();
        let mut cdf = Vec::with_capacity(prob.len());
        let mut acc = 0.0;
        for p in &prob {
            acc += p;
            cdf.push(acc);
        }
        Self { cdf, prob }
    }

    #[inline]
    fn draw(&self, u: f64) -> usize {
        let target = u * self.cdf[self.cdf.len() - 1];
        self.cdf.partition_point(|c| *c < target).min(self.cdf.len() - 1)
    }
}

/// Importance-sampled Monte Carlo: (α, v) cells ∝ |ς| at cell centres, x
/// cells ∝ |b_{n+2}| at nodes, each mixed with 10% uniform. Chunks of 4096
/// samples draw from ChaCha8 stream `chunk` of the master seed and are summed
/// in chunk order, so results do not depend on the thread count.
fn montecarlo(s: &KernelB, fields: &[SampledField], budget: &Budget) -> Result<FormResult> {
    if budget.mc_samples < 2 {
        return invalid("Monte Carlo needs at least two samples");
    }
    let n = s.n;
    let d = s.d;
    let dims = n + d;
    // Importance table in (α, v), coarsened to at most MC_TABLE_CELLS cells.
    let v_cells = s.v_res.min(64);
    let v_total = v_cells.pow(d as u32);
    let a_cells = if n == 0 {
        1
    } else {
        let cap = ((MC_TABLE_CELLS / v_total).max(1) as f64).powf(1.0 / n as f64).floor() as usize;
        s.alpha_res.min(cap.max(1))
    };
    let mut lo = Vec::with_capacity(dims);
    let mut step = Vec::with_capacity(dims);
    let mut count = Vec::with_capacity(dims);
    for (a, b) in &s.alpha_box {
        lo.push(*a);
        step.push((b - a) / a_cells as f64);
        count.push(a_cells);
    }
    for _ in 0..d {
        lo.push(-s.v_box);
        step.push(2.0 * s.v_box / v_cells as f64);
        count.push(v_cells);
    }
    let total_cells: usize = count.iter().product();
    let cell_vol: f64 = step.iter().product();
    let centre = |idx: usize, out: &mut [f64]| {
        let mut r = idx;
        for a in (0..dims).rev() {
            out[a] = lo[a] + ((r % count[a]) as f64 + 0.5) * step[a];
            r /= count[a];
        }
    };
    let kw: Vec<f64> = (0..total_cells)
        .into_par_iter()
        .map(|i| {
            let mut p = vec![0.0; dims];
            centre(i, &mut p);
            s.eval(&p[..n], &p[n..]).abs()
        })
        .collect();
    let ksampler = CellSampler::new(&kw);

    let last = &fields[n + 1];
    let grid = last.grid;
    let xw: Vec<f64> = last.values.iter().map(|v| v.abs()).collect();
    let xsampler = CellSampler::new(&xw);
    let h = grid.spacing();
    let hd = grid.cell_volume();

    let chunks = budget.mc_samples.div_ceil(MC_CHUNK);
    let partial: Vec<(f64, f64, usize)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
            rng.set_stream(c as u64);
            let m = MC_CHUNK.min(budget.mc_samples - c * MC_CHUNK);
            let mut sum = Accumulator::new();
            let mut sq = Accumulator::new();
            let mut p = vec![0.0; dims];
            let mut x = [0.0; MAX_DIM];
            for _ in 0..m {
                let ci = ksampler.draw(rng.gen());
                centre(ci, &mut p);
                for a in 0..dims {
                    p[a] += (rng.gen::<f64>() - 0.5) * step[a];
                }
                let xi = xsampler.draw(rng.gen());
                grid.node(xi, &mut x);
                for xa in x.iter_mut().take(d) {
                    *xa += (rng.gen::<f64>() - 0.5) * h;
                }
                let dens = (ksampler.prob[ci] / cell_vol) * (xsampler.prob[xi] / hd);
                let (a, v) = p.split_at(n);
                let k = s.eval(a, v);
                let f = if k == 0.0 { 0.0 } else { k * integrand(fields, a, v, &x[..d]) / dens };
                sum.add(f);
                sq.add(f * f);
            }
            (sum.value(), sq.value(), m)
        })
        .collect();
    let mut sum = Accumulator::new();
    let mut sq = Accumulator::new();
    let mut total = 0usize;
    for (a, b, m) in partial {
        sum.add(a);
        sq.add(b);
        total += m;
    }
    let nn = total as f64;
    let mean = sum.value() / nn;
    let var = (sq.value() / nn - mean * mean).max(0.0) * nn / (nn - 1.0);
    Ok(FormResult {
        value: mean,
        error_estimate: 3.0 * (var / nn).sqrt(),
        budget: budget.clone(),
        method: Method::Montecarlo,
        seed: Some(budget.seed),
        evaluations: total as u64,
    })
}

/// Both sides of the scaling identities at scale 2^j.
#[derive(Debug, Clone, Serialize)]
pub struct DilatedResult {
    /// Λ[ς^{(2^j)}](b).
    pub direct: FormResult,
    /// 2^{−jd} Λ[ς](b(2^{−j}·)).
    pub rescaled: FormResult,
    /// Λ[ς](g) with gᵢ = 2^{−jd/pᵢ} bᵢ(2^{−j}·), when exponents are given.
    pub normalized: Option<FormResult>,
}

/// x ↦ b(tx) on the same grid.
fn compose_scale(b: &SampledField, t: f64) -> Result<SampledField> {
    let d = b.dim() as i32;
    Ok(b.dilate(t)?.scaled(t.powi(-d)))
}

pub fn evaluate_dilated(inst: &FormInstance, j: i32, budget: &Budget) -> Result<DilatedResult> {
    let s = match &inst.kernel {
        FormKernel::Single(s) => s,
        FormKernel::Dyadic(_) => return invalid("evaluate_dilated takes a single-scale kernel"),
    };
    let t = 2f64.powi(j);
    let d = s.d as i32;
    for f in &inst.fields {
        if f.support_radius * t > f.grid.half_extent {
            return Err(Error::SupportOverflow(format!(
                "rescaled support {} exceeds the box {}",
                f.support_radius * t,
                f.grid.half_extent
            )));
        }
    }
    let direct = evaluate_kernel(&s.dilated(t)?, &inst.fields, budget)?;
    let rescaled_fields = inst
        .fields
        .iter()
        .map(|b| compose_scale(b, 1.0 / t))
        .collect::<Result<Vec<_>>>()?;
    let mut rescaled = evaluate_kernel(s, &rescaled_fields, budget)?;
    let factor = t.powi(-d);
    rescaled.value *= factor;
    rescaled.error_estimate *= factor;
    let normalized = match &inst.exponents {
        Some(p) => {
            let g = rescaled_fields
                .iter()
                .zip(p.exponents())
                .map(|(b, pi)| {
                    let w = if pi.is_infinite() { 1.0 } else { t.powf(-(d as f64) / pi) };
                    b.scaled(w)
                })
                .collect::<Vec<_>>();
            Some(evaluate_kernel(s, &g, budget)?)
        }
        None => None,
    };
    Ok(DilatedResult {
        direct,
        rescaled,
        normalized,
    })
}

/// Σ_{|j| ≤ N} Λ[ς_j^{(2^j)}](b) for N = 0, …, N_max.
#[derive(Debug, Clone, Serialize)]
pub struct PartialSums {
    /// (N, partial value, accumulated error estimate).
    pub partial: Vec<(i32, f64, f64)>,
    /// |S_N − S_{N−1}| for N ≥ 1.
    pub increments: Vec<f64>,
    /// Per-scale bound ‖ς_j‖_{L¹}·Π‖bᵢ‖_{pᵢ} when exponents are given.
    pub holder_bounds: Vec<(i32, f64)>,
}

pub fn partial_sum_form(dk: &DyadicKernel, fields: &[SampledField], exponents: Option<&ExponentTuple>, budget: &Budget) -> Result<PartialSums> {
    let n_max = dk.pieces.iter().map(|(j, _)| j.abs()).max().unwrap_or(0);
    let mut per_scale = Vec::with_capacity(dk.pieces.len());
    let mut holder_bounds = Vec::new();
    let norms = match exponents {
        Some(p) => Some(p.norm_product(fields)?),
        None => None,
    };
    for (j, s) in &dk.pieces {
        let r = evaluate_kernel(&s.dilated(2f64.powi(*j))?, fields, budget)?;
        per_scale.push((*j, r.value, r.error_estimate));
        if let Some(np) = norms {
            holder_bounds.push((*j, s.l1_norm() * np));
        }
    }
    let mut partial = Vec::new();
    let mut increments = Vec::new();
    let mut prev: Option<f64> = None;
    for big_n in 0..=n_max {
        let mut v = Accumulator::new();
        let mut e = Accumulator::new();
        for (j, val, err) in &per_scale {
            if j.abs() <= big_n {
                v.add(*val);
                e.add(*err);
            }
        }
        let value = v.value();
        if let Some(p) = prev {
            increments.push((value - p).abs());
        }
        prev = Some(value);
        partial.push((big_n, value, e.value()));
    }
    Ok(PartialSums {
        partial,
        increments,
        holder_bounds,
    })
}

/// ‖ς‖_{L¹}·Πᵢ‖bᵢ‖_{pᵢ}.
pub fn holder_bound(s: &KernelB, fields: &[SampledField], p: &ExponentTuple) -> Result<f64> {
    Ok(s.l1_norm() * p.norm_product(fields)?)
}

#[cfg(test)]
pub(crate) mod tests;
