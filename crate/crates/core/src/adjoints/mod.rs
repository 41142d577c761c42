//! Kernel transforms realizing permutations of the form's arguments:
//! Λ[ℓ_ϖς](b₁,…,b_{n+2}) = Λ[ς](b_{ϖ(1)},…,b_{ϖ(n+2)}).
//!
//! Generators: permutations of the first n slots, the swap of the last two,
//! and the transposition (1, n+1), the last one factored through the
//! inversion J and the shears M, M̃. Transforms compose closures; nothing is
//! resampled.

use crate::error::{invalid, Error, Result};
use crate::kernelspace::{AlphaVFn, KernelB};
use crate::numeric::Accumulator;
use crate::tolerances;
use serde::Serialize;
use std::collections::{HashSet, VecDeque};
use std::fmt;
use std::sync::Arc;

/// A bijection of {0, …, m−1} stored by images: `images[i] = ϖ(i)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Permutation {
    images: Vec<usize>,
}

impl Permutation {
    pub fn new(images: Vec<usize>) -> Result<Self> {
        let m = images.len();
        let mut seen = vec![false; m];
        for &i in &images {
            if i >= m || seen[i] {
                return invalid(format!("{images:?} is not a permutation"));
            }
            seen[i] = true;
        }
        Ok(Self { images })
    }

    /// One-based images, as written in `b_{ϖ(1)}, …`.
    pub fn from_one_based(images: &[usize]) -> Result<Self> {
        if images.contains(&0) {
            return invalid("one-based images must be ≥ 1");
        }
        Self::new(images.iter().map(|i| i - 1).collect())
    }

    pub fn identity(m: usize) -> Self {
        Self { images: (0..m).collect() }
    }

    /// The transposition of slots i and j (zero-based).
    pub fn transposition(m: usize, i: usize, j: usize) -> Result<Self> {
        if i >= m || j >= m {
            return invalid("transposition index out of range");
        }
        let mut p = Self::identity(m);
        p.images.swap(i, j);
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[usize] {
        &self.images
    }

    #[inline]
    pub fn apply(&self, i: usize) -> usize {
        self.images[i]
    }

    pub fn is_identity(&self) -> bool {
        self.images.iter().enumerate().all(|(i, j)| i == *j)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.len()];
        for (i, &j) in self.images.iter().enumerate() {
            inv[j] = i;
        }
        Self { images: inv }
    }

    /// (self ∘ other)(i) = self(other(i)).
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            images: other.images.iter().map(|&i| self.images[i]).collect(),
        }
    }

    /// b ↦ (b_{ϖ(1)}, …, b_{ϖ(m)}).
    pub fn permute<T: Clone>(&self, b: &[T]) -> Vec<T> {
        self.images.iter().map(|&i| b[i].clone()).collect()
    }

    /// Whether ϖ fixes the last two slots of an (n+2)-tuple.
    fn fixes_last_two(&self) -> bool {
        let m = self.len();
        self.images[m - 1] == m - 1 && self.images[m - 2] == m - 2
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.images.iter().map(|i| (i + 1).to_string()).collect();
        write!(f, "[{}]", parts.join(" "))
    }
}

/// One generator of ℓ_ϖ.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Generator {
    /// ϖ₀ ∈ S_n acting on the first n slots (one-based images).
    PermFirstN { images: Vec<usize> },
    SwapLastTwo,
    /// The transposition of slots 1 and n+1.
    #[serde(rename = "transpose-1-(n+1)")]
    Transpose1N1,
}

impl Generator {
    /// The permutation of {0,…,n+1} this generator realizes.
    pub fn permutation(&self, n: usize) -> Permutation {
        match self {
            Generator::PermFirstN { images } => {
                let mut p: Vec<usize> = images.iter().map(|i| i - 1).collect();
                p.extend([n, n + 1]);
                Permutation { images: p }
            }
            Generator::SwapLastTwo => Permutation::transposition(n + 2, n, n + 1).expect("in range"),
            Generator::Transpose1N1 => Permutation::transposition(n + 2, 0, n).expect("in range"),
        }
    }
}

/// Generators in application order; ℓ_ϖ = ℓ_{g_k} ∘ ⋯ ∘ ℓ_{g_1} realizes
/// ϖ = g_k ∘ ⋯ ∘ g_1.
#[derive(Debug, Clone, Serialize)]
pub struct TransformChain {
    pub n: usize,
    pub target: Permutation,
    pub links: Vec<Generator>,
    pub transpositions: usize,
}

impl TransformChain {
    pub fn composed(&self) -> Permutation {
        self.links
            .iter()
            .fold(Permutation::identity(self.n + 2), |acc, g| g.permutation(self.n).compose(&acc))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("chain serializes")
    }
}

/// A closure on ℝ^N supported in a box.
#[derive(Clone)]
pub struct BoxFn {
    pub bbox: Vec<(f64, f64)>,
    eval: AlphaVFn,
    /// Number of leading coordinates passed as the first closure argument.
    split: usize,
}

impl fmt::Debug for BoxFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoxFn").field("bbox", &self.bbox).finish()
    }
}

impl BoxFn {
    pub fn new<F>(bbox: Vec<(f64, f64)>, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        if bbox.is_empty() || bbox.iter().any(|(a, b)| !(a.is_finite() && b.is_finite() && a < b)) {
            return invalid("box must be nonempty with finite lo < hi");
        }
        Ok(Self {
            bbox,
            eval: Arc::new(move |s: &[f64], _: &[f64]| f(s)),
            split: usize::MAX,
        })
    }

    fn from_kernel(s: &KernelB) -> Self {
        let mut bbox = s.alpha_box.clone();
        bbox.extend(std::iter::repeat((-s.v_box, s.v_box)).take(s.d));
        Self {
            bbox,
            eval: s.closure(),
            split: s.n,
        }
    }

    pub fn dim(&self) -> usize {
        self.bbox.len()
    }

    #[inline]
    pub fn eval(&self, s: &[f64]) -> f64 {
        if !s.iter().zip(&self.bbox).all(|(x, (lo, hi))| *x >= *lo && *x <= *hi) {
            return 0.0;
        }
        if self.split == usize::MAX {
            (self.eval)(s, &[])
        } else {
            let (a, v) = s.split_at(self.split);
            (self.eval)(a, v)
        }
    }

    fn wrap<F>(&self, bbox: Vec<(f64, f64)>, f: F) -> Self
    where
        F: Fn(&BoxFn, &[f64]) -> f64 + Send + Sync + 'static,
    {
        let inner = self.clone();
        BoxFn {
            bbox,
            eval: Arc::new(move |s: &[f64], _: &[f64]| f(&inner, s)),
            split: usize::MAX,
        }
    }

    /// Midpoint integral of g(γ(s)) over the box with `res` cells per axis.
    pub fn integrate<G>(&self, res: usize, g: G) -> f64
    where
        G: Fn(f64) -> f64 + Sync + Send,
    {
        let lo: Vec<f64> = self.bbox.iter().map(|b| b.0).collect();
        let step: Vec<f64> = self.bbox.iter().map(|b| (b.1 - b.0) / res as f64).collect();
        crate::numeric::box_sum(&lo, &step, &vec![res; self.dim()], |s| g(self.eval(s)))
    }

    pub fn l1_norm(&self, res: usize) -> f64 {
        self.integrate(res, f64::abs)
    }
}

fn check_s1(bbox: &[(f64, f64)], s_min: f64, what: &str) -> Result<()> {
    let (lo, hi) = bbox[0];
    if lo < s_min && hi > -s_min {
        return Err(Error::SingularSupport(format!(
            "{what}: first coordinate range [{lo}, {hi}] meets |s₁| < {s_min}"
        )));
    }
    Ok(())
}

fn recip_interval((lo, hi): (f64, f64)) -> (f64, f64) {
    (1.0 / hi, 1.0 / lo)
}

/// [a, b]·[c, d].
fn mul_interval((a, b): (f64, f64), (c, d): (f64, f64)) -> (f64, f64) {
    let p = [a * c, a * d, b * c, b * d];
    (p.iter().cloned().fold(f64::INFINITY, f64::min), p.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
}

/// J₁g(s) = s₁⁻² g(1/s₁, s₂, …).
pub fn inversion_j(g: &BoxFn, s_min: f64) -> Result<BoxFn> {
    check_s1(&g.bbox, s_min, "inversion")?;
    let mut bbox = g.bbox.clone();
    bbox[0] = recip_interval(bbox[0]);
    Ok(g.wrap(bbox, |inner, s| {
        let s1 = s[0];
        if s1 == 0.0 {
            return 0.0;
        }
        let mut t = s.to_vec();
        t[0] = 1.0 / s1;
        inner.eval(&t) / (s1 * s1)
    }))
}

/// M g(s) = |s₁|^{n−1} g(s₁, s₁s₂, …, s₁sₙ, s_{n+1}, …).
pub fn shear_m(g: &BoxFn, n: usize, s_min: f64) -> Result<BoxFn> {
    if n == 0 || n > g.dim() {
        return invalid("shear index range");
    }
    check_s1(&g.bbox, s_min, "shear M")?;
    let mut bbox = g.bbox.clone();
    let r = recip_interval(bbox[0]);
    for b in bbox.iter_mut().take(n).skip(1) {
        *b = mul_interval(*b, r);
    }
    Ok(g.wrap(bbox, move |inner, s| {
        let s1 = s[0];
        let mut t = s.to_vec();
        for ti in t.iter_mut().take(n).skip(1) {
            *ti *= s1;
        }
        s1.abs().powi(n as i32 - 1) * inner.eval(&t)
    }))
}

/// M̃_d g(α, v) = |α₁|^d g(α, α₁v), v the last d coordinates.
pub fn shear_mtilde(g: &BoxFn, d: usize, s_min: f64) -> Result<BoxFn> {
    let m = g.dim();
    if d == 0 || d >= m {
        return invalid("M̃ needs 0 < d < dimension");
    }
    check_s1(&g.bbox, s_min, "shear M̃")?;
    let mut bbox = g.bbox.clone();
    let r = recip_interval(bbox[0]);
    for b in bbox.iter_mut().skip(m - d) {
        *b = mul_interval(*b, r);
    }
    Ok(g.wrap(bbox, move |inner, s| {
        let a1 = s[0];
        let mut t = s.to_vec();
        for ti in t.iter_mut().skip(m - d) {
            *ti *= a1;
        }
        a1.abs().powi(d as i32) * inner.eval(&t)
    }))
}

/// Γ₁ = J₁∘M g, Γ₂ = J₁∘M∘J₁ g, i.e.
/// Γ₁(s) = |s₁|^{−n−1} g(1/s₁, s₂/s₁, …, sₙ/s₁, s_{n+1}, …),
/// Γ₂(s) = |s₁|^{1−n} g(s₁, s₂/s₁, …, sₙ/s₁, s_{n+1}, …).
pub fn gamma12(g: &BoxFn, n: usize, s_min: f64) -> Result<(BoxFn, BoxFn)> {
    let g1 = inversion_j(&shear_m(g, n, s_min)?, s_min)?;
    let g2 = inversion_j(&shear_m(&inversion_j(g, s_min)?, n, s_min)?, s_min)?;
    Ok((g1, g2))
}

/// The 𝔅_ε norm max_i ∫(1+|s_i|)^ε|γ| + sup_{h,i} h^{−ε}∫|γ(s+he_i) − γ(s)|,
/// h over dyadic values down to the cell width.
pub fn fb_norm(g: &BoxFn, eps: f64, res: usize) -> f64 {
    let m = g.dim();
    let lo: Vec<f64> = g.bbox.iter().map(|b| b.0).collect();
    let step: Vec<f64> = g.bbox.iter().map(|b| (b.1 - b.0) / res as f64).collect();
    let count = vec![res; m];
    let mut weighted: f64 = 0.0;
    for i in 0..m {
        weighted = weighted.max(crate::numeric::box_sum(&lo, &step, &count, |s| {
            (1.0 + s[i].abs()).powf(eps) * g.eval(s).abs()
        }));
    }
    let mut diff: f64 = 0.0;
    for i in 0..m {
        let mut h = 1.0;
        while h >= step[i] * (1.0 - 1e-12) {
            let mut lo_e = lo.clone();
            lo_e[i] -= h;
            let mut step_e = step.clone();
            let c = ((g.bbox[i].1 - lo_e[i]) / step[i]).ceil() as usize;
            step_e[i] = (g.bbox[i].1 - lo_e[i]) / c as f64;
            let mut count_e = count.clone();
            count_e[i] = c;
            let v = crate::numeric::box_sum(&lo_e, &step_e, &count_e, |s| {
                let mut t = s.to_vec();
                t[i] += h;
                (g.eval(&t) - g.eval(s)).abs()
            });
            diff = diff.max(h.powf(-eps) * v);
            h /= 2.0;
        }
    }
    weighted + diff
}

fn boxfn_to_kernel(f: &BoxFn, template: &KernelB, name: String) -> Result<KernelB> {
    let n = template.n;
    let alpha_box = f.bbox[..n].to_vec();
    let v_box = f.bbox[n..].iter().map(|(a, b)| a.abs().max(b.abs())).fold(0.0, f64::max);
    let inner = f.clone();
    let eval: AlphaVFn = Arc::new(move |a: &[f64], v: &[f64]| {
        let mut s = Vec::with_capacity(a.len() + v.len());
        s.extend_from_slice(a);
        s.extend_from_slice(v);
        inner.eval(&s)
    });
    let mut k = template.remapped(alpha_box, v_box, eval)?;
    k.name = name;
    Ok(k)
}

/// ς(α_{π⁻¹(1)}, …, α_{π⁻¹(n)}, v); realizes Λ[out](b) = Λ[ς](b_{π⁻¹(1)}, …, b_{π⁻¹(n)}, b_{n+1}, b_{n+2}).
pub fn perm_first_n(s: &KernelB, pi: &Permutation) -> Result<KernelB> {
    if pi.len() != s.n {
        return Err(Error::Dimension("permutation length must be n".into()));
    }
    if pi.is_identity() {
        return Ok(s.clone());
    }
    // Argument i of ς is α_{π⁻¹(i)}, so output slot j carries the range of ς's slot π(j).
    let alpha_box: Vec<(f64, f64)> = (0..s.n).map(|j| s.alpha_box[pi.apply(j)]).collect();
    let inner = s.closure();
    let inv = pi.inverse();
    let eval: AlphaVFn = Arc::new(move |b: &[f64], v: &[f64]| {
        let a: Vec<f64> = (0..b.len()).map(|i| b[inv.apply(i)]).collect();
        inner(&a, v)
    });
    let mut k = s.remapped(alpha_box, s.v_box, eval)?;
    k.name = format!("perm{}({})", pi, s.name);
    Ok(k)
}

/// ς(1−α₁, …, 1−αₙ, −v); Λ[out](b) = Λ[ς](b₁, …, bₙ, b_{n+2}, b_{n+1}).
pub fn swap_last_two(s: &KernelB) -> Result<KernelB> {
    let alpha_box: Vec<(f64, f64)> = s.alpha_box.iter().map(|(lo, hi)| (1.0 - hi, 1.0 - lo)).collect();
    let inner = s.closure();
    let eval: AlphaVFn = Arc::new(move |a: &[f64], v: &[f64]| {
        let b: Vec<f64> = a.iter().map(|x| 1.0 - x).collect();
        let w: Vec<f64> = v.iter().map(|x| -x).collect();
        inner(&b, &w)
    });
    let mut k = s.remapped(alpha_box, s.v_box, eval)?;
    k.name = format!("swap({})", s.name);
    Ok(k)
}

/// The transposition of slots 1 and n+1:
/// ℓς(β, w) = |β₁|^{d−n−1} ς(1/β₁, β₂/β₁, …, βₙ/β₁, β₁w),
/// built as J, then M̃_d, J, M, J (each applied to the previous result).
pub fn ell_transposition(s: &KernelB) -> Result<KernelB> {
    ell_transposition_with(s, tolerances::DEFAULT_S_MIN)
}

pub fn ell_transposition_with(s: &KernelB, s_min: f64) -> Result<KernelB> {
    if s.n == 0 {
        return invalid("the (1, n+1) transposition needs n ≥ 1");
    }
    let g = BoxFn::from_kernel(s);
    let g = inversion_j(&g, s_min)?;
    let g = shear_mtilde(&g, s.d, s_min)?;
    let g = inversion_j(&g, s_min)?;
    let g = shear_m(&g, s.n, s_min)?;
    let g = inversion_j(&g, s_min)?;
    boxfn_to_kernel(&g, s, format!("transpose({})", s.name))
}

/// Applies one generator.
pub fn apply_generator(s: &KernelB, g: &Generator, s_min: f64) -> Result<KernelB> {
    match g {
        Generator::PermFirstN { images } => {
            // ℓ_ϖ for ϖ ∈ S_n is perm_first_n(·, ϖ⁻¹).
            let p = Permutation::from_one_based(images)?;
            perm_first_n(s, &p.inverse())
        }
        Generator::SwapLastTwo => swap_last_two(s),
        Generator::Transpose1N1 => ell_transposition_with(s, s_min),
    }
}

fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        let n = used.len();
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for i in 0..n {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// α-box after a generator, or None when the transposition gate fails.
fn propagate_box(bbox: &[(f64, f64)], g: &Generator, s_min: f64) -> Option<Vec<(f64, f64)>> {
    match g {
        Generator::PermFirstN { images } => {
            // ℓς(β) = ς(β_{ϖ(1)}, …), so β_j ranges over the box of slot ϖ⁻¹(j).
            let mut out = bbox.to_vec();
            for (i, &j) in images.iter().enumerate() {
                out[j - 1] = bbox[i];
            }
            Some(out)
        }
        Generator::SwapLastTwo => Some(bbox.iter().map(|(lo, hi)| (1.0 - hi, 1.0 - lo)).collect()),
        Generator::Transpose1N1 => {
            let (lo, hi) = bbox[0];
            if lo < s_min && hi > -s_min {
                return None;
            }
            let r = recip_interval((lo, hi));
            let mut out = vec![r];
            out.extend(bbox[1..].iter().map(|b| mul_interval(*b, r)));
            Some(out)
        }
    }
}

/// Shortest generator word with at most two transpositions realizing `p`
/// whose intermediate α-boxes pass the singular-support gate.
pub fn decompose_permutation(p: &Permutation, alpha_box: &[(f64, f64)], s_min: f64) -> Result<TransformChain> {
    let m = p.len();
    if m < 2 {
        return invalid("permutation of an (n+2)-linear form needs n+2 ≥ 2 slots");
    }
    let n = m - 2;
    if alpha_box.len() != n {
        return Err(Error::Dimension("α box length must be n".into()));
    }
    let mut gens: Vec<Generator> = Vec::new();
    for images in all_permutations(n) {
        if images.iter().enumerate().any(|(i, j)| i != *j) {
            gens.push(Generator::PermFirstN {
                images: images.iter().map(|i| i + 1).collect(),
            });
        }
    }
    gens.push(Generator::SwapLastTwo);
    if n >= 1 {
        gens.push(Generator::Transpose1N1);
    }
    let key = |perm: &Permutation, t: usize, bbox: &[(f64, f64)]| -> (Vec<usize>, usize, Vec<(i64, i64)>) {
        let q = |x: f64| (x * 1e9).round() as i64;
        (perm.images.clone(), t, bbox.iter().map(|(a, b)| (q(*a), q(*b))).collect())
    };
    let start = Permutation::identity(m);
    let mut queue = VecDeque::new();
    let mut seen = HashSet::new();
    seen.insert(key(&start, 0, alpha_box));
    queue.push_back((start, 0usize, alpha_box.to_vec(), Vec::<Generator>::new()));
    const MAX_LINKS: usize = 9;
    while let Some((perm, t, bbox, word)) = queue.pop_front() {
        if perm == *p {
            return Ok(TransformChain {
                n,
                target: p.clone(),
                transpositions: t,
                links: word,
            });
        }
        if word.len() >= MAX_LINKS {
            continue;
        }
        for g in &gens {
            let nt = t + usize::from(*g == Generator::Transpose1N1);
            if nt > 2 {
                continue;
            }
            // Consecutive links of the same kind collapse.
            if let Some(last) = word.last() {
                let same_kind = matches!(
                    (last, g),
                    (Generator::PermFirstN { .. }, Generator::PermFirstN { .. })
                        | (Generator::SwapLastTwo, Generator::SwapLastTwo)
                        | (Generator::Transpose1N1, Generator::Transpose1N1)
                );
                if same_kind {
                    continue;
                }
            }
            let Some(nb) = propagate_box(&bbox, g, s_min) else { continue };
            let np = g.permutation(n).compose(&perm);
            if seen.insert(key(&np, nt, &nb)) {
                let mut w = word.clone();
                w.push(g.clone());
                queue.push_back((np, nt, nb, w));
            }
        }
    }
    Err(Error::SingularSupport(format!(
        "no generator word for {p} keeps the α₁ support away from 0 (s_min = {s_min})"
    )))
}

/// ℓ_ϖς together with the generator chain used.
pub fn ell_general(s: &KernelB, p: &Permutation) -> Result<(KernelB, TransformChain)> {
    ell_general_with(s, p, tolerances::DEFAULT_S_MIN)
}

pub fn ell_general_with(s: &KernelB, p: &Permutation, s_min: f64) -> Result<(KernelB, TransformChain)> {
    if p.len() != s.n + 2 {
        return Err(Error::Dimension("permutation length must be n + 2".into()));
    }
    let chain = decompose_permutation(p, &s.alpha_box, s_min)?;
    debug_assert_eq!(chain.composed(), *p);
    let mut k = s.clone();
    for g in &chain.links {
        k = apply_generator(&k, g, s_min)?;
    }
    if s.cancels_in_v {
        k.cancels_in_v = true;
    }
    Ok((k, chain))
}

/// max over α nodes of |∫ ℓς dv| relative to ∫|ℓς| dv, the v-integral taken
/// by the midpoint rule at `v_res` cells.
pub fn transformed_cancellation(s: &KernelB, v_res: usize) -> f64 {
    let probe = s.clone().with_resolution(s.alpha_res, v_res);
    probe.cancellation_defect()
}

/// ‖ℓς‖₁ / ‖ς‖₁ on the kernels' own quadrature grids.
pub fn l1_ratio(out: &KernelB, input: &KernelB) -> f64 {
    let mut a = Accumulator::new();
    a.add(out.l1_norm());
    a.value() / input.l1_norm()
}

/// Whether ϖ is handled by a single type-(i) generator.
pub fn is_first_n_permutation(p: &Permutation) -> bool {
    p.len() >= 2 && p.fixes_last_two()
}

#[cfg(test)]
mod tests;
