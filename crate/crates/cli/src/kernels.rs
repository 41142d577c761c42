//! Built-in kernels and kernel expression files.

use crate::config::parse_flat;
use crate::CliError;
use cjlab::kernelspace::{cj_kernel, riesz_kernels, ClosureKernel, CZKernelSpec, KernelB};
use cjlab::numeric::{bump_profile, norm, norm2, smoothstep5};
use cjlab::probes::cj_box_kernel;
use evalexpr::{build_operator_tree, ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node, Value};
use std::sync::Arc;

pub const KERNEL_B_NAMES: &[&str] = &["box", "cj-box", "riesz", "gaussian-tensor"];

/// Smooth annulus 1/16 ≤ |v| ≤ 1 that keeps the truncated Riesz kernel
/// bounded.
fn annulus(r: f64) -> f64 {
    smoothstep5((r - 1.0 / 16.0) / (1.0 / 16.0)) * (1.0 - smoothstep5((r - 0.5) / 0.5))
}

/// Kernels ς(α, v) on a box, used by the norm, form and adjoint commands.
pub fn kernel_b(name: &str, n: usize, d: usize, alpha_res: usize, v_res: usize) -> Result<KernelB, CliError> {
    let unit = vec![(0.0, 1.0); n];
    let k = match name {
        // ½ on [0,1]^n × [−1,1]^d.
        "box" => KernelB::new(n, d, unit, 1.0, alpha_res, v_res, |_, _| 0.5)?,
        "cj-box" => cj_box_kernel(n, d, alpha_res, v_res)?,
        "riesz" => {
            if d < 2 {
                return Err(CliError::Validation("the riesz kernel needs d ≥ 2".into()));
            }
            KernelB::new(n, d, unit, 1.0, alpha_res, v_res, move |_, v| {
                let r = norm(v);
                if r == 0.0 {
                    0.0
                } else {
                    v[0] * v[1] / r.powi(d as i32 + 2) * annulus(r)
                }
            })?
            .declare_cancellation()?
        }
        "gaussian-tensor" => KernelB::new(n, d, unit, 1.0, alpha_res, v_res, |a, v| {
            let w: f64 = a.iter().map(|t| (-4.0 * (t - 0.5).powi(2)).exp()).product();
            w * v[0] * (-8.0 * norm2(v)).exp()
        })?
        .declare_cancellation()?,
        other => {
            return Err(CliError::Validation(format!(
                "unknown kernel `{other}`; built-ins are {KERNEL_B_NAMES:?}"
            )))
        }
    };
    Ok(k.with_name(name))
}

/// Kernels K(α, x) for the K-norm and the dyadic decomposition: the CJ
/// kernels χ_{[0,1]^n}(α)κ(x) for a CZ κ, or any box kernel.
pub fn closure_kernel(name: &str, n: usize, d: usize, alpha_res: usize, v_res: usize) -> Result<ClosureKernel, CliError> {
    let kappa = match (name, d) {
        ("hilbert", 1) => Some(CZKernelSpec::hilbert()),
        ("odd-bump", _) => Some(CZKernelSpec::odd_bump(d)),
        ("riesz", 2..) => Some(riesz_kernels(d)?.remove(0)),
        ("hilbert", _) => return Err(CliError::Validation("the hilbert kernel is one-dimensional".into())),
        _ => None,
    };
    match kappa {
        Some(k) => Ok(cj_kernel(&k, n).with_name(name)),
        None => Ok(ClosureKernel::from_kernel_b(&kernel_b(name, n, d, alpha_res, v_res)?)),
    }
}

/// A kernel read from a flat file:
///
/// ```text
/// n = 1
/// d = 1
/// alpha_box = 0 1          # one lo/hi pair per α coordinate, comma separated
/// v_box = 1
/// expr = 0.5 * v1 * math::exp(-r*r)
/// cancels = true           # optional: verify ∫ς dv = 0
/// ```
///
/// The expression sees a1…an, v1…vd and r = |v|.
pub fn kernel_file(path: &str, alpha_res: usize, v_res: usize) -> Result<KernelB, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{path}: {e}")))?;
    let entries = parse_flat(&text)?;
    let get = |k: &str| {
        entries
            .iter()
            .rev()
            .find(|(key, _)| key == k)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| CliError::Validation(format!("{path}: missing `{k}`")))
    };
    let bad = |k: &str| CliError::Validation(format!("{path}: cannot parse `{k}`"));
    let n: usize = get("n")?.parse().map_err(|_| bad("n"))?;
    let d: usize = get("d")?.parse().map_err(|_| bad("d"))?;
    let v_box: f64 = get("v_box")?.parse().map_err(|_| bad("v_box"))?;
    let alpha_box: Vec<(f64, f64)> = if n == 0 {
        Vec::new()
    } else {
        get("alpha_box")?
            .split(',')
            .map(|pair| {
                let xs: Vec<f64> = pair.split_whitespace().filter_map(|s| s.parse().ok()).collect();
                match xs[..] {
                    [lo, hi] => Ok((lo, hi)),
                    _ => Err(bad("alpha_box")),
                }
            })
            .collect::<Result<_, _>>()?
    };
    let expr = get("expr")?;
    let tree: Arc<Node<DefaultNumericTypes>> = Arc::new(
        build_operator_tree(expr).map_err(|e| CliError::Validation(format!("{path}: expr: {e}")))?,
    );
    let probe = eval_expr(&tree, &vec![0.5; n], &vec![0.5; d]);
    if let Err(e) = probe {
        return Err(CliError::Validation(format!("{path}: expr: {e}")));
    }
    let cancels = entries.iter().any(|(k, v)| k == "cancels" && v == "true");
    let k = KernelB::new(n, d, alpha_box, v_box, alpha_res, v_res, move |a, v| {
        eval_expr(&tree, a, v).unwrap_or(f64::NAN)
    })?
    .with_name(path);
    Ok(if cancels { k.declare_cancellation()? } else { k })
}

fn eval_expr(tree: &Node<DefaultNumericTypes>, a: &[f64], v: &[f64]) -> Result<f64, String> {
    let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
    let vars = a
        .iter()
        .enumerate()
        .map(|(i, x)| (format!("a{}", i + 1), *x))
        .chain(v.iter().enumerate().map(|(i, x)| (format!("v{}", i + 1), *x)))
        .chain(std::iter::once(("r".to_string(), norm(v))));
    for (name, x) in vars {
        ctx.set_value(name, Value::Float(x)).map_err(|e| e.to_string())?;
    }
    match tree.eval_with_context(&ctx).map_err(|e| e.to_string())? {
        Value::Float(x) => Ok(x),
        Value::Int(i) => Ok(i as f64),
        other => Err(format!("expression returned {other}")),
    }
}

/// Box kernel for the adjoint check: a smooth weight in α times an odd
/// profile in v, on an α box away from the singular hyperplane α₁ = 0. For
/// n = 2 the coordinates have opposite signs so that every permutation of
/// the four slots has a transform chain.
pub fn adjoint_kernel(n: usize, d: usize, res: usize) -> Result<KernelB, CliError> {
    let centres: Vec<f64> = match n {
        1 => vec![2.5],
        2 => vec![2.5, -2.5],
        _ => return Err(CliError::Validation("adjoint-check supports n ∈ {1, 2}".into())),
    };
    let alpha_box = centres.iter().map(|c| (c - 0.5, c + 0.5)).collect();
    let k = KernelB::new(n, d, alpha_box, 1.0, res, res, move |a, v| {
        let w: f64 = a.iter().zip(&centres).map(|(t, c)| bump_profile((2.0 * (t - c)).powi(2))).product();
        w * v[0] * bump_profile(norm2(v))
    })?
    .declare_cancellation()?;
    Ok(k.with_name(format!("adjoint_test_{n}_{d}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_box_has_unit_mass() {
        let k = kernel_b("box", 1, 1, 16, 64).unwrap();
        assert!((k.l1_norm() - 1.0).abs() < 1e-12);
        assert!(kernel_b("riesz", 1, 1, 4, 16).is_err());
        assert!(kernel_b("nope", 1, 1, 4, 16).is_err());
    }

    #[test]
    fn cancelling_builtins_integrate_to_zero() {
        for (name, d) in [("riesz", 2), ("gaussian-tensor", 1), ("cj-box", 1)] {
            let k = kernel_b(name, 1, d, 4, 64).unwrap();
            assert!(k.cancellation_defect() < 1e-9, "{name}");
        }
    }

    #[test]
    fn expression_file_matches_builtin_box() {
        let dir = std::env::temp_dir().join(format!("cjlab-kernel-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("box.kernel");
        std::fs::write(&path, "n = 1\nd = 1\nalpha_box = 0 1\nv_box = 1\nexpr = 0.5\n").unwrap();
        let k = kernel_file(path.to_str().unwrap(), 16, 64).unwrap();
        assert!((k.l1_norm() - 1.0).abs() < 1e-12);
        std::fs::write(&path, "n = 1\nd = 1\nalpha_box = 0 1\nv_box = 1\nexpr = v1 * math::exp(-r)\n").unwrap();
        let k = kernel_file(path.to_str().unwrap(), 4, 64).unwrap();
        assert!((k.eval(&[0.5], &[0.5]) - 0.5 * (-0.5f64).exp()).abs() < 1e-12);
        std::fs::write(&path, "n = 1\nd = 1\nalpha_box = 0 1\nv_box = 1\nexpr = a1 +\n").unwrap();
        assert!(kernel_file(path.to_str().unwrap(), 4, 64).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }
}
