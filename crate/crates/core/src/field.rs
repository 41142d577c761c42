//! Sampled scalar fields on uniform tensor grids over boxes [−L, L]^d.
//!
//! Nodes sit at x = −L + i·h for i = 0..N (the origin is node N/2), values are
//! stored row-major with the last axis fastest, and off-node evaluation is
//! multilinear with zero extension outside the box.

use crate::error::{invalid, Error, Result};
use crate::fft::{fft_nd, pad};
use crate::numeric::{norm, Accumulator};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dim: usize,
    pub half_extent: f64,
    pub points_per_axis: usize,
}

impl Grid {
    pub fn new(dim: usize, half_extent: f64, points_per_axis: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return invalid(format!("grid dimension {dim} outside 1..={MAX_DIM}"));
        }
        if !(half_extent.is_finite() && half_extent > 0.0) {
            return invalid(format!("half extent {half_extent} must be positive"));
        }
        if points_per_axis < 4 || points_per_axis % 2 != 0 {
            return invalid(format!("points per axis {points_per_axis} must be even and ≥ 4"));
        }
        if (points_per_axis as u128).pow(dim as u32) > (1u128 << 40) {
            return invalid("total node count too large");
        }
        Ok(Self {
            dim,
            half_extent,
            points_per_axis,
        })
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_extent / self.points_per_axis as f64
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cell volume h^d.
    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 - (self.points_per_axis / 2) as f64) * self.spacing()
    }

    /// Writes the coordinates of node `idx` into `out[..dim]`.
    #[inline]
    pub fn node(&self, idx: usize, out: &mut [f64]) {
        let n = self.points_per_axis;
        let mut rem = idx;
        for a in (0..self.dim).rev() {
            out[a] = self.coord(rem % n);
            rem /= n;
        }
    }

    pub fn node_vec(&self, idx: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        self.node(idx, &mut x);
        x
    }

    /// Multi-index of node `idx` (axis 0 first).
    pub fn multi_index(&self, idx: usize) -> [usize; MAX_DIM] {
        let n = self.points_per_axis;
        let mut m = [0; MAX_DIM];
        let mut rem = idx;
        for a in (0..self.dim).rev() {
            m[a] = rem % n;
            rem /= n;
        }
        m
    }

    pub fn flat_index(&self, m: &[usize]) -> usize {
        m[..self.dim]
            .iter()
            .fold(0, |acc, &i| acc * self.points_per_axis + i)
    }

    /// Same box scaled by `s` (node positions scale, node count unchanged).
    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(self.dim, self.half_extent * s, self.points_per_axis)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledField {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub support_radius: f64,
}

impl SampledField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
            support_radius: 0.0,
        }
    }

    /// Samples `f` at every node and zeroes nodes outside `support_radius`.
    pub fn from_fn<F>(grid: Grid, support_radius: f64, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let values: Vec<f64> = (0..grid.len())
            .into_par_iter()
            .map(|idx| {
                let mut x = [0.0; MAX_DIM];
                grid.node(idx, &mut x);
                let x = &x[..grid.dim];
                if norm(x) > support_radius {
                    0.0
                } else {
                    f(x)
                }
            })
            .collect();
        Self::from_values(grid, values, support_radius)
    }

    pub fn from_values(grid: Grid, values: Vec<f64>, support_radius: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if !(support_radius >= 0.0) {
            return invalid("support radius must be nonnegative");
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("field value at node {i}")));
        }
        let mut f = Self {
            grid,
            values,
            support_radius,
        };
        f.enforce_support();
        Ok(f)
    }

    fn enforce_support(&mut self) {
        let r = self.support_radius;
        if r >= self.grid.half_extent * (self.grid.dim as f64).sqrt() {
            return;
        }
        let g = self.grid;
        self.values.par_iter_mut().enumerate().for_each(|(idx, v)| {
            let mut x = [0.0; MAX_DIM];
            g.node(idx, &mut x);
            if norm(&x[..g.dim]) > r {
                *v = 0.0;
            }
        });
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    /// Multilinear interpolation; zero outside the node range.
    #[inline]
    pub fn sample(&self, x: &[f64]) -> f64 {
        let g = &self.grid;
        let n = g.points_per_axis as isize;
        let inv_h = 1.0 / g.spacing();
        match g.dim {
            1 => {
                let p = (x[0] + g.half_extent) * inv_h;
                let i0 = p.floor();
                let t = p - i0;
                let i0 = i0 as isize;
                let at = |i: isize| {
                    if i >= 0 && i < n {
                        self.values[i as usize]
                    } else {
                        0.0
                    }
                };
                if t == 0.0 {
                    at(i0)
                } else {
                    (1.0 - t) * at(i0) + t * at(i0 + 1)
                }
            }
            2 => {
                let p0 = (x[0] + g.half_extent) * inv_h;
                let p1 = (x[1] + g.half_extent) * inv_h;
                let f0 = p0.floor();
                let f1 = p1.floor();
                let (t0, t1) = (p0 - f0, p1 - f1);
                let (i0, j0) = (f0 as isize, f1 as isize);
                if i0 < -1 || j0 < -1 || i0 >= n || j0 >= n {
                    return 0.0;
                }
                let at = |i: isize, j: isize| {
                    if i >= 0 && i < n && j >= 0 && j < n {
                        self.values[(i * n + j) as usize]
                    } else {
                        0.0
                    }
                };
                (1.0 - t0) * ((1.0 - t1) * at(i0, j0) + t1 * at(i0, j0 + 1))
                    + t0 * ((1.0 - t1) * at(i0 + 1, j0) + t1 * at(i0 + 1, j0 + 1))
            }
            _ => self.sample_general(x),
        }
    }

    fn sample_general(&self, x: &[f64]) -> f64 {
        let g = &self.grid;
        let d = g.dim;
        let n = g.points_per_axis as isize;
        let inv_h = 1.0 / g.spacing();
        let mut base = [0isize; MAX_DIM];
        let mut frac = [0.0; MAX_DIM];
        for a in 0..d {
            let p = (x[a] + g.half_extent) * inv_h;
            let f = p.floor();
            base[a] = f as isize;
            frac[a] = p - f;
        }
        let mut total = 0.0;
        'corner: for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut idx = 0isize;
            for a in 0..d {
                let bit = (corner >> a) & 1;
                let i = base[a] + bit as isize;
                if i < 0 || i >= n {
                    continue 'corner;
                }
                w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
                idx = idx * n + i;
            }
            total += w * self.values[idx as usize];
        }
        total
    }

    /// Riemann sum h^d Σ f.
    pub fn integral(&self) -> f64 {
        let mut acc = Accumulator::new();
        for &v in &self.values {
            acc.add(v);
        }
        acc.value() * self.grid.cell_volume()
    }

    /// L¹-normalized dilate x ↦ t^d f(tx) on the same grid.
    pub fn dilate(&self, t: f64) -> Result<Self> {
        if !(t.is_finite() && t > 0.0) {
            return invalid(format!("dilation factor {t} must be positive and finite"));
        }
        if t == 1.0 {
            return Ok(self.clone());
        }
        self.dilate_onto(t, self.grid)
    }

    /// x ↦ t^d f(tx) resampled onto `target`.
    pub fn dilate_onto(&self, t: f64, target: Grid) -> Result<Self> {
        if !(t.is_finite() && t > 0.0) {
            return invalid(format!("dilation factor {t} must be positive and finite"));
        }
        if target.dim != self.grid.dim {
            return Err(Error::Dimension("dilation target grid dimension".into()));
        }
        let scale = t.powi(self.grid.dim as i32);
        let d = self.grid.dim;
        Self::from_fn(target, self.support_radius / t, |x| {
            let mut y = [0.0; MAX_DIM];
            for a in 0..d {
                y[a] = t * x[a];
            }
            scale * self.sample(&y[..d])
        })
    }

    /// Exact change of domain: x ↦ f(x/s) on the grid scaled by s (node values
    /// are unchanged).
    pub fn rescale_domain(&self, s: f64) -> Result<Self> {
        if !(s.is_finite() && s > 0.0) {
            return invalid("domain scale must be positive");
        }
        Ok(Self {
            grid: self.grid.scaled(s)?,
            values: self.values.clone(),
            support_radius: self.support_radius * s,
        })
    }

    /// x ↦ f(x − a).
    pub fn translate(&self, a: &[f64]) -> Result<Self> {
        let g = self.grid;
        if a.len() != g.dim {
            return Err(Error::Dimension("translation vector length".into()));
        }
        if norm(a) + self.support_radius > g.half_extent {
            return Err(Error::SupportOverflow(format!(
                "translated support {} exceeds box half extent {}",
                norm(a) + self.support_radius,
                g.half_extent
            )));
        }
        let h = g.spacing();
        let shifts: Vec<f64> = a.iter().map(|v| v / h).collect();
        let aligned = shifts.iter().all(|s| (s - s.round()).abs() < 1e-9);
        let radius = norm(a) + self.support_radius;
        if aligned {
            let n = g.points_per_axis as isize;
            let sh: Vec<isize> = shifts.iter().map(|s| s.round() as isize).collect();
            let mut out = vec![0.0; g.len()];
            for (idx, v) in out.iter_mut().enumerate() {
                let m = g.multi_index(idx);
                let mut src = 0isize;
                let mut inside = true;
                for ax in 0..g.dim {
                    let i = m[ax] as isize - sh[ax];
                    if i < 0 || i >= n {
                        inside = false;
                        break;
                    }
                    src = src * n + i;
                }
                if inside {
                    *v = self.values[src as usize];
                }
            }
            return Self::from_values(g, out, radius);
        }
        let d = g.dim;
        Self::from_fn(g, radius, |x| {
            let mut y = [0.0; MAX_DIM];
            for ax in 0..d {
                y[ax] = x[ax] - a[ax];
            }
            self.sample(&y[..d])
        })
    }

    /// Riemann-sum Lᵖ norm; p = ∞ gives the max modulus.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        if p.is_nan() || p < 1.0 {
            return invalid(format!("Lᵖ exponent {p} below 1"));
        }
        if p.is_infinite() {
            return Ok(self.values.iter().fold(0.0, |m, v| m.max(v.abs())));
        }
        let mut acc = Accumulator::new();
        if p == 1.0 {
            self.values.iter().for_each(|v| acc.add(v.abs()));
            return Ok(acc.value() * self.grid.cell_volume());
        }
        let scale = self.values.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
        if scale == 0.0 {
            return Ok(0.0);
        }
        self.values.iter().for_each(|v| acc.add((v.abs() / scale).powf(p)));
        Ok(scale * (acc.value() * self.grid.cell_volume()).powf(1.0 / p))
    }

    /// m_{x,y}a = ∫₀¹ a(sx + (1−s)y) ds by the composite midpoint rule.
    pub fn segment_mean(&self, x: &[f64], y: &[f64], s_nodes: usize) -> Result<f64> {
        let g = &self.grid;
        if x.len() != g.dim || y.len() != g.dim {
            return Err(Error::Dimension("segment endpoint dimension".into()));
        }
        if s_nodes == 0 {
            return invalid("segment mean needs at least one node");
        }
        let inside = |p: &[f64]| p.iter().all(|c| c.abs() <= g.half_extent);
        if !inside(x) || !inside(y) {
            return invalid("segment endpoints must lie in the grid box");
        }
        Ok(self.segment_mean_unchecked(x, y, s_nodes))
    }

    /// Segment mean without domain checks (hot path for quadratures).
    #[inline]
    pub fn segment_mean_unchecked(&self, x: &[f64], y: &[f64], s_nodes: usize) -> f64 {
        let d = self.grid.dim;
        let mut p = [0.0; MAX_DIM];
        let mut acc = 0.0;
        for k in 0..s_nodes {
            let s = (k as f64 + 0.5) / s_nodes as f64;
            for a in 0..d {
                p[a] = s * x[a] + (1.0 - s) * y[a];
            }
            acc += self.sample(&p[..d]);
        }
        acc / s_nodes as f64
    }

    fn check_convolution(&self, g: &SampledField) -> Result<()> {
        if self.grid != g.grid {
            return Err(Error::Dimension("convolution operands must share a grid".into()));
        }
        if self.support_radius + g.support_radius > self.grid.half_extent {
            return Err(Error::SupportOverflow(format!(
                "combined support {} exceeds box half extent {}",
                self.support_radius + g.support_radius,
                self.grid.half_extent
            )));
        }
        Ok(())
    }

    /// (f∗g)(x) = h^d Σ_y f(y) g(x−y) by spectral multiplication on the
    /// zero-padded grid.
    pub fn convolve(&self, g: &SampledField) -> Result<Self> {
        self.check_convolution(g)?;
        let grid = self.grid;
        let (d, n) = (grid.dim, grid.points_per_axis);
        let m = 2 * n;
        let shape = vec![m; d];
        let mut a = pad(&self.values, d, n, m);
        let mut b = pad(&g.values, d, n, m);
        fft_nd(&mut a, &shape, false);
        fft_nd(&mut b, &shape, false);
        a.iter_mut().zip(&b).for_each(|(x, y)| *x *= y);
        fft_nd(&mut a, &shape, true);
        let scale = grid.cell_volume() / (m.pow(d as u32)) as f64;
        let values = (0..grid.len())
            .map(|idx| {
                let mi = grid.multi_index(idx);
                let src = mi[..d].iter().fold(0, |acc, &i| acc * m + i + n / 2);
                a[src].re * scale
            })
            .collect();
        let radius = (self.support_radius + g.support_radius).min(grid.half_extent);
        Self::from_values(grid, values, radius)
    }

    /// Direct-summation convolution, O(N^{2d}); reference for [`Self::convolve`].
    pub fn convolve_direct(&self, g: &SampledField) -> Result<Self> {
        self.check_convolution(g)?;
        let grid = self.grid;
        let (d, n) = (grid.dim, grid.points_per_axis as isize);
        let nz: Vec<(usize, f64)> = self
            .values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, *v))
            .collect();
        let values: Vec<f64> = (0..grid.len())
            .into_par_iter()
            .map(|k| {
                let mk = grid.multi_index(k);
                let mut acc = Accumulator::new();
                'outer: for &(j, fv) in &nz {
                    let mj = grid.multi_index(j);
                    let mut idx = 0isize;
                    for a in 0..d {
                        let i = mk[a] as isize - mj[a] as isize + n / 2;
                        if i < 0 || i >= n {
                            continue 'outer;
                        }
                        idx = idx * n + i;
                    }
                    acc.add(fv * g.values[idx as usize]);
                }
                acc.value() * grid.cell_volume()
            })
            .collect();
        let radius = (self.support_radius + g.support_radius).min(grid.half_extent);
        Self::from_values(grid, values, radius)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| c * v).collect(),
            support_radius: self.support_radius,
        }
    }

    /// Pointwise linear combination a·self + b·other (same grid).
    pub fn axpby(&self, a: f64, other: &SampledField, b: f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::Dimension("fields live on different grids".into()));
        }
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
            support_radius: self.support_radius.max(other.support_radius),
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// CSV serialization: header `dim,extent,points_per_axis`, a row with those
    /// numbers, then one value per row in row-major order.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().flexible(true).from_writer(w);
        let io = |e: csv::Error| Error::Io(e.to_string());
        wr.write_record(["dim", "extent", "points_per_axis"]).map_err(io)?;
        wr.write_record([
            self.grid.dim.to_string(),
            format!("{:e}", self.grid.half_extent),
            self.grid.points_per_axis.to_string(),
        ])
        .map_err(io)?;
        for v in &self.values {
            wr.write_record([format!("{v:e}")]).map_err(io)?;
        }
        wr.flush().map_err(|e| Error::Io(e.to_string()))
    }

    /// Parses the CSV format of [`Self::write_csv`]. The support radius is set
    /// to the largest |x| among nonzero nodes.
    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().flexible(true).from_reader(r);
        let io = |e: csv::Error| Error::Io(e.to_string());
        let header = rd.headers().map_err(io)?.clone();
        if header.iter().collect::<Vec<_>>() != ["dim", "extent", "points_per_axis"] {
            return invalid("field CSV header must be dim,extent,points_per_axis");
        }
        let mut records = rd.records();
        let meta = records
            .next()
            .ok_or_else(|| Error::InvalidArgument("missing grid row".into()))?
            .map_err(io)?;
        let parse = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("bad number {s:?}")))
        };
        if meta.len() != 3 {
            return invalid("grid row needs three entries");
        }
        let grid = Grid::new(parse(&meta[0])? as usize, parse(&meta[1])?, parse(&meta[2])? as usize)?;
        let mut values = Vec::with_capacity(grid.len());
        for rec in records {
            let rec = rec.map_err(io)?;
            values.push(parse(&rec[0])?);
        }
        let mut radius: f64 = 0.0;
        for (idx, v) in values.iter().enumerate() {
            if *v != 0.0 && idx < grid.len() {
                radius = radius.max(norm(&grid.node_vec(idx)));
            }
        }
        Self::from_values(grid, values, radius)
    }
}

/// Hölder exponents p₁,…,p_{n+2} with Σ 1/pᵢ = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentTuple {
    exponents: Vec<f64>,
}

impl ExponentTuple {
    pub fn new(exponents: Vec<f64>) -> Result<Self> {
        if exponents.is_empty() {
            return invalid("empty exponent tuple");
        }
        for &p in &exponents {
            if p.is_nan() || p <= 1.0 {
                return invalid(format!("exponent {p} not in (1, ∞]"));
            }
        }
        let s: f64 = exponents.iter().map(|p| 1.0 / p).sum();
        if (s - 1.0).abs() > crate::tolerances::EXPONENT_SUM {
            return invalid(format!("Σ 1/pᵢ = {s}, expected 1"));
        }
        Ok(Self { exponents })
    }

    pub fn exponents(&self) -> &[f64] {
        &self.exponents
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    /// Π‖bᵢ‖_{pᵢ}.
    pub fn norm_product(&self, fields: &[SampledField]) -> Result<f64> {
        if fields.len() != self.exponents.len() {
            return Err(Error::Dimension("exponent tuple length vs field count".into()));
        }
        let mut prod = 1.0;
        for (f, &p) in fields.iter().zip(&self.exponents) {
            prod *= f.lp_norm(p)?;
        }
        Ok(prod)
    }
}
