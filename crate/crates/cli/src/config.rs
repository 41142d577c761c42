//! Flat key=value run configuration: per-command defaults, then a config
//! file, then `--set` overrides, then dedicated flags.

use crate::CliError;
use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

/// Keys accepted by each command with their defaults. `None` marks a key
/// that has no default and must be supplied when the command needs it.
pub fn defaults(command: &str) -> &'static [(&'static str, Option<&'static str>)] {
    match command {
        "norm" => &[
            ("kernel", Some("box")),
            ("kernel_file", None),
            ("n", Some("1")),
            ("d", Some("1")),
            ("eps", Some("1.0")),
            ("alpha_res", Some("64")),
            ("v_res", Some("512")),
            ("seed", None),
        ],
        "knorm" => &[
            ("kernel", Some("hilbert")),
            ("kernel_file", None),
            ("n", Some("1")),
            ("d", Some("1")),
            ("eps", Some("1.0")),
            ("k_max", Some("3")),
            ("alpha_res", Some("16")),
            ("v_res", Some("128")),
            ("seed", None),
        ],
        "decompose" | "reconstruct" => &[
            ("kernel", Some("hilbert")),
            ("kernel_file", None),
            ("n", Some("1")),
            ("d", Some("1")),
            ("j_min", Some("-4")),
            ("j_max", Some("4")),
            ("alpha_res", Some("8")),
            ("v_res", Some("128")),
            ("points_per_support", Some("64")),
            ("annulus_inner", Some("0.25")),
            ("annulus_outer", Some("4.0")),
            ("seed", None),
        ],
        "form" => &[
            ("kernel", Some("cj-box")),
            ("kernel_file", None),
            ("n", Some("1")),
            ("d", Some("1")),
            ("extent", Some("2.0")),
            ("points", Some("64")),
            ("bumps", Some("3")),
            ("alpha_res", Some("16")),
            ("v_res", Some("64")),
            ("samples", Some("65536")),
            ("method", Some("auto")),
            ("seed", Some("0")),
        ],
        "commutator" => &[
            ("n", Some("1")),
            ("d", Some("1")),
            ("extent", Some("2.0")),
            ("points", Some("512")),
            ("bumps", Some("3")),
            ("eps_in", Some("0.001")),
            ("r_out", Some("2.0")),
            ("probes", Some("-0.5 0 0.5")),
            ("seed", Some("0")),
        ],
        "adjoint-check" => &[
            ("n", Some("1")),
            ("d", Some("1")),
            ("perm", Some("swap")),
            ("tuples", Some("20")),
            ("extent", Some("2.0")),
            ("points", Some("64")),
            ("res", Some("16")),
            ("samples", Some("65536")),
            ("seed", Some("0")),
        ],
        "rotation-check" => &[
            ("extent", Some("2.0")),
            ("points", Some("128")),
            ("theta_nodes", Some("96")),
            ("eps_in", Some("0.125")),
            ("r_out", Some("1.0")),
            ("bumps", Some("3")),
            ("seed", Some("0")),
        ],
        "growth" => &[
            ("n_min", Some("1")),
            ("n_max", Some("5")),
            ("d", Some("1")),
            ("extent", Some("2.0")),
            ("points", Some("64")),
            ("trials", Some("8")),
            ("samples", Some("32768")),
            ("bumps", Some("3")),
            ("max_samples", None),
            ("seed", None),
        ],
        "schur" => &[
            ("kernel", Some("bump")),
            ("d", Some("1")),
            ("eps", Some("0.5")),
            ("suite", Some("both")),
            ("seed", None),
        ],
        "carleson" => &[
            ("weight", Some("constant")),
            ("d", Some("1")),
            ("j_min", Some("0")),
            ("j_max", Some("3")),
            ("ball_samples", Some("16")),
            ("seed", Some("0")),
        ],
        "mixing" => &[
            ("flow", Some("shear")),
            ("eps", Some("0.0625")),
            ("final_time", Some("1.0")),
            ("steps", Some("64")),
            ("points", Some("128")),
            ("intervals", Some("16")),
            ("seed", None),
        ],
        _ => &[],
    }
}

/// The fully resolved key=value configuration of one run.
#[derive(Debug, Clone)]
pub struct Params {
    command: String,
    values: BTreeMap<String, String>,
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_flat(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Validation(format!("line {}: expected key = value", i + 1)))?;
        out.push((k.trim().replace('-', "_"), v.trim().to_string()));
    }
    Ok(out)
}

impl Params {
    pub fn resolve(
        command: &str,
        config_file: Option<&Path>,
        sets: &[String],
        flags: Vec<(&str, Option<String>)>,
    ) -> Result<Self, CliError> {
        let allowed = defaults(command);
        let mut values: BTreeMap<String, String> = allowed
            .iter()
            .filter_map(|(k, v)| v.map(|v| (k.to_string(), v.to_string())))
            .collect();
        let mut layered: Vec<(String, String)> = Vec::new();
        if let Some(path) = config_file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
            layered.extend(parse_flat(&text)?);
        }
        for s in sets {
            layered.extend(parse_flat(s)?);
        }
        layered.extend(flags.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))));
        for (k, v) in layered {
            if !allowed.iter().any(|(a, _)| *a == k) {
                return Err(CliError::Validation(format!("key `{k}` does not apply to `{command}`")));
            }
            values.insert(k, v);
        }
        Ok(Self {
            command: command.to_string(),
            values,
        })
    }

    pub fn map(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn opt_str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn str(&self, key: &str) -> Result<&str, CliError> {
        self.opt_str(key)
            .ok_or_else(|| CliError::Validation(format!("`{}` requires `{key}`", self.command)))
    }

    pub fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.opt_str(key)
            .map(|s| {
                s.parse::<T>()
                    .map_err(|_| CliError::Validation(format!("cannot parse {key} = {s}")))
            })
            .transpose()
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        self.opt(key)?
            .ok_or_else(|| CliError::Validation(format!("`{}` requires `{key}`", self.command)))
    }

    /// Whitespace- or comma-separated floats.
    pub fn floats(&self, key: &str) -> Result<Vec<f64>, CliError> {
        self.str(key)?
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| CliError::Validation(format!("cannot parse {key} entry {s}")))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn later_layers_win() {
        let p = Params::resolve(
            "norm",
            None,
            &["eps = 0.5".into(), "n=2".into()],
            vec![("eps", Some("0.25".into())), ("d", None)],
        )
        .unwrap();
        assert_eq!(p.get::<f64>("eps").unwrap(), 0.25);
        assert_eq!(p.get::<usize>("n").unwrap(), 2);
        assert_eq!(p.get::<usize>("d").unwrap(), 1);
        assert!(p.opt_str("seed").is_none());
    }

    #[test]
    fn foreign_keys_are_rejected() {
        assert!(matches!(
            Params::resolve("norm", None, &["perm=swap".into()], vec![]),
            Err(CliError::Validation(_))
        ));
        assert!(parse_flat("no equals sign").is_err());
        assert_eq!(parse_flat("# c\n a-b = 1 # tail\n").unwrap(), vec![("a_b".into(), "1".into())]);
    }
}
