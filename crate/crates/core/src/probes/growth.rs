//! Empirical growth of the CJ form's normalized size with n.

use crate::error::{invalid, Result};
use crate::field::{ExponentTuple, Grid, SampledField};
use crate::forms::{evaluate_kernel, Budget, Method};
use crate::kernelspace::KernelB;
use crate::numeric::{bump_profile, fit_slope};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;

/// Exponent tuples (p₁, …, p_{n+2}) with Σ 1/pᵢ = 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExponentRule {
    /// pᵢ = n + 2.
    Equal,
    /// p₁ = … = pₙ = ∞, p_{n+1} = p_{n+2} = 2.
    L2Pair,
    /// p_{n+2} = 2, the rest 2(n+1).
    Mixed,
}

impl ExponentRule {
    pub fn tuple(self, n: usize) -> Result<ExponentTuple> {
        let m = n + 2;
        let p = match self {
            ExponentRule::Equal => vec![m as f64; m],
            ExponentRule::L2Pair => {
                let mut p = vec![f64::INFINITY; n];
                p.extend([2.0, 2.0]);
                p
            }
            ExponentRule::Mixed => {
                let mut p = vec![2.0 * (n as f64 + 1.0); n + 1];
                p.push(2.0);
                p
            }
        };
        ExponentTuple::new(p)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthProbeConfig {
    pub n_range: (usize, usize),
    pub d: usize,
    pub half_extent: f64,
    pub points_per_axis: usize,
    pub exponent_rules: Vec<ExponentRule>,
    pub trials: usize,
    pub seed: u64,
    pub mc_samples: usize,
    /// Bumps per random field.
    pub bumps: usize,
    /// Quadrature resolutions of the kernel χ_{[0,1]^n}(α)κ(v).
    pub alpha_res: usize,
    pub v_res: usize,
    /// Stop once this many Monte Carlo samples have been spent.
    pub max_samples: Option<u64>,
}

impl Default for GrowthProbeConfig {
    fn default() -> Self {
        Self {
            n_range: (1, 5),
            d: 1,
            half_extent: 2.0,
            points_per_axis: 64,
            exponent_rules: vec![ExponentRule::Equal, ExponentRule::L2Pair, ExponentRule::Mixed],
            trials: 8,
            seed: 0,
            mc_samples: 1 << 15,
            bumps: 3,
            alpha_res: 8,
            v_res: 64,
            max_samples: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthRow {
    pub n: usize,
    /// max over trials and exponent rules of |Λ| / Π‖bᵢ‖_{pᵢ}.
    pub ratio: f64,
    /// n² log³(2+n) for n ≥ 1; ‖ς‖₁ (the Hölder constant) for n = 0.
    pub bound: f64,
    pub ratio_over_bound: f64,
    pub seed: u64,
    /// ‖ς‖₁, so that ratio ≤ kernel_l1 + error_slack is the Hölder bound.
    pub kernel_l1: f64,
    /// error_estimate / Π‖bᵢ‖_{pᵢ} at the maximizing trial.
    pub error_slack: f64,
    pub trial_seeds: Vec<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthTable {
    pub rows: Vec<GrowthRow>,
    /// False when `max_samples` cut the table short.
    pub complete: bool,
    pub config: GrowthProbeConfig,
}

impl GrowthTable {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["n", "ratio", "bound", "ratio_over_bound", "seed"])
            .map_err(csv_err)?;
        for r in &self.rows {
            out.write_record([
                r.n.to_string(),
                format!("{:e}", r.ratio),
                format!("{:e}", r.bound),
                format!("{:e}", r.ratio_over_bound),
                r.seed.to_string(),
            ])
            .map_err(csv_err)?;
        }
        out.flush().map_err(|e| crate::Error::Io(e.to_string()))
    }

    /// Least-squares slope of log(ratio/bound) against log n over rows n ≥ 1.
    pub fn normalized_slope(&self) -> Option<f64> {
        let rows: Vec<&GrowthRow> = self.rows.iter().filter(|r| r.n >= 1 && r.ratio_over_bound > 0.0).collect();
        if rows.len() < 2 {
            return None;
        }
        let x: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.ratio_over_bound.ln()).collect();
        Some(fit_slope(&x, &y))
    }
}

fn csv_err(e: csv::Error) -> crate::Error {
    crate::Error::Io(e.to_string())
}

/// χ_{[0,1]^n}(α)·v₁·exp(−1/(1−|v|²)).
pub fn cj_box_kernel(n: usize, d: usize, alpha_res: usize, v_res: usize) -> Result<KernelB> {
    Ok(KernelB::new(n, d, vec![(0.0, 1.0); n], 1.0, alpha_res, v_res, |_, v| {
        v[0] * bump_profile(crate::numeric::norm2(v))
    })?
    .with_name(format!("cj_box_{n}")))
}

/// Rademacher-signed sum of `bumps` shifted bumps inside |x| ≤ 0.9.
pub fn random_bump_field(grid: Grid, bumps: usize, rng: &mut impl Rng) -> Result<SampledField> {
    let d = grid.dim;
    let specs: Vec<(Vec<f64>, f64, f64)> = (0..bumps)
        .map(|_| {
            let c: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let r = rng.gen_range(0.15..0.4);
            let s = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            (c, r, s)
        })
        .collect();
    SampledField::from_fn(grid, 0.9 * (d as f64).sqrt() + 0.1, move |x| {
        specs
            .iter()
            .map(|(c, r, s)| {
                let d2: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
                s * bump_profile(d2 / (r * r))
            })
            .sum()
    })
}

fn growth_bound(n: usize, kernel_l1: f64) -> f64 {
    if n == 0 {
        kernel_l1
    } else {
        let nf = n as f64;
        nf * nf * (2.0 + nf).ln().powi(3)
    }
}

struct Trial {
    ratio: f64,
    slack: f64,
    seed: u64,
    samples: u64,
}

/// For each n: the largest |Λ_CJ(b)|/Π‖bᵢ‖_{pᵢ} over random bump fields and
/// exponent rules, by Monte Carlo, next to n² log³(2+n). Trials run in
/// parallel with per-trial streams, so the table is bit-identical across
/// thread counts.
pub fn growth_probe(cfg: &GrowthProbeConfig) -> Result<GrowthTable> {
    if cfg.trials < 8 {
        return invalid("growth probe needs at least 8 trials per n");
    }
    if cfg.n_range.0 > cfg.n_range.1 || cfg.exponent_rules.is_empty() {
        return invalid("empty n range or no exponent rules");
    }
    let grid = Grid::new(cfg.d, cfg.half_extent, cfg.points_per_axis)?;
    let mut rows = Vec::new();
    let mut spent: u64 = 0;
    let mut complete = true;
    for n in cfg.n_range.0..=cfg.n_range.1 {
        if let Some(cap) = cfg.max_samples {
            if spent >= cap {
                complete = false;
                break;
            }
        }
        let kernel = cj_box_kernel(n, cfg.d, cfg.alpha_res, cfg.v_res)?;
        let kernel_l1 = kernel.l1_norm();
        let tuples: Vec<ExponentTuple> = cfg
            .exponent_rules
            .iter()
            .map(|r| r.tuple(n))
            .collect::<Result<_>>()?;
        let trials: Vec<Trial> = (0..cfg.trials)
            .into_par_iter()
            .map(|t| -> Result<Trial> {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(((n as u64) << 32) | t as u64);
                let fields: Vec<SampledField> = (0..n + 2)
                    .map(|_| random_bump_field(grid, cfg.bumps, &mut rng))
                    .collect::<Result<_>>()?;
                let seed = rng.next_u64();
                let budget = Budget {
                    mc_samples: cfg.mc_samples,
                    seed,
                    method: Some(Method::Montecarlo),
                };
                let res = evaluate_kernel(&kernel, &fields, &budget)?;
                let mut best = (0.0f64, 0.0f64);
                for p in &tuples {
                    let np = p.norm_product(&fields)?;
                    if np > 0.0 {
                        let ratio = res.value.abs() / np;
                        if ratio > best.0 {
                            best = (ratio, res.error_estimate / np);
                        }
                    }
                }
                Ok(Trial {
                    ratio: best.0,
                    slack: best.1,
                    seed,
                    samples: res.evaluations,
                })
            })
            .collect::<Result<_>>()?;
        let top = trials
            .iter()
            .fold(None::<&Trial>, |acc, t| match acc {
                Some(a) if a.ratio >= t.ratio => Some(a),
                _ => Some(t),
            })
            .expect("trials ≥ 8");
        spent += trials.iter().map(|t| t.samples).sum::<u64>();
        let bound = growth_bound(n, kernel_l1);
        rows.push(GrowthRow {
            n,
            ratio: top.ratio,
            bound,
            ratio_over_bound: top.ratio / bound,
            seed: cfg.seed,
            kernel_l1,
            error_slack: top.slack,
            trial_seeds: trials.iter().map(|t| t.seed).collect(),
        });
    }
    Ok(GrowthTable {
        rows,
        complete,
        config: cfg.clone(),
    })
}
