//! Run settings: command-line flags merged over an optional TOML file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// A list of reals given as `a,b,c` or as an evenly spaced grid `lo:hi:n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "Vec<f64>")]
pub struct Grid(pub Vec<f64>);

#[derive(Deserialize)]
#[serde(untagged)]
enum GridRepr {
    List(Vec<f64>),
    Single(f64),
    Text(String),
}

impl TryFrom<GridRepr> for Grid {
    type Error = String;

    fn try_from(r: GridRepr) -> Result<Self, String> {
        match r {
            GridRepr::List(v) => Ok(Grid(v)),
            GridRepr::Single(x) => Ok(Grid(vec![x])),
            GridRepr::Text(s) => s.parse(),
        }
    }
}

impl From<Grid> for Vec<f64> {
    fn from(g: Grid) -> Self {
        g.0
    }
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let real = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| format!("`{t}` is not a number"))
        };
        match parts.as_slice() {
            [lo, hi, n] => {
                let (lo, hi) = (real(lo)?, real(hi)?);
                let n: usize = n
                    .trim()
                    .parse()
                    .map_err(|_| format!("`{n}` is not a point count"))?;
                if n == 0 {
                    return Err("a grid needs at least one point".into());
                }
                if n == 1 {
                    return Ok(Grid(vec![lo]));
                }
                Ok(Grid(
                    (0..n)
                        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                        .collect(),
                ))
            }
            [list] => list
                .split(',')
                .filter(|t| !t.trim().is_empty())
                .map(real)
                .collect::<Result<_, _>>()
                .map(Grid),
            _ => Err(format!("expected `a,b,c` or `lo:hi:n`, got `{s}`")),
        }
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let items: Vec<String> = self.0.iter().map(|x| x.to_string()).collect();
        f.write_str(&items.join(","))
    }
}

/// Every setting a command can read. Flags and file keys share names
/// (`--quadrature-nodes` is `quadrature_nodes`); a flag wins over the file.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Tree: regular:<d>, kary:<k> or gw:<law>, e.g. gw:poisson:3.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tree: Option<String>,
    /// Offspring law, e.g. poisson:4 or powerlaw:1.3:1000000.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub law: Option<String>,
    /// Survival model: loop, link or link-delay.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Depth D.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    /// Single link rate.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Link rates as a,b,c or lo:hi:n.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub betas: Option<Grid>,
    /// Probability that a link is a cross.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u: Option<f64>,
    /// Cross probabilities for prune-prob.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub us: Option<Grid>,
    /// Pruning rate.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Pruning rates for prune-prob.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Grid>,
    /// Largest degree in the prune-prob grid.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_max: Option<usize>,
    /// Monte Carlo replicas N.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicas: Option<usize>,
    /// Percolated components for probe-53.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub components: Option<usize>,
    /// Gauss-Legendre nodes for pruning probabilities.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quadrature_nodes: Option<usize>,
    /// Survival level defining the threshold.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
    /// Width at which bisection stops.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    /// Normal quantile for intervals (threshold) or violation flags (dominate).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    /// Values of epsilon for gwt-check.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<Grid>,
    /// Gauge parameters q for the exponential gauge q^-|x|.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<Grid>,
    /// Bracket width in q for branching-number estimates.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_tolerance: Option<f64>,
    /// Use one Galton-Watson tree, drawn from the seed, for every replica.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quenched: Option<bool>,
    /// Master seed.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Output CSV path; a `.meta.json` sidecar is written next to it.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

macro_rules! merge_fields {
    ($flags:ident, $file:ident; $($field:ident),*) => {
        Settings { $($field: $flags.$field.or($file.$field)),* }
    };
}

macro_rules! set_keys {
    ($s:ident; $($field:ident),*) => {
        [$((stringify!($field), $s.$field.is_some())),*]
    };
}

impl Settings {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| {
            CliError::Config(format!("{}: {}", path.display(), e.to_string().trim_end()))
        })
    }

    /// Flags over file values.
    pub fn merged_over(self, file: Settings) -> Settings {
        let flags = self;
        merge_fields!(flags, file; tree, law, model, depth, beta, betas, u, us, lambda, lambdas, d_max, replicas,
            components, quadrature_nodes, target, tolerance, z, eps, q, q_tolerance, quenched, seed, threads, out)
    }

    /// Names of the settings that have a value.
    pub fn present(&self) -> Vec<&'static str> {
        let s = self;
        set_keys!(s; tree, law, model, depth, beta, betas, u, us, lambda, lambdas, d_max, replicas, components,
            quadrature_nodes, target, tolerance, z, eps, q, q_tolerance, quenched, seed, threads, out)
        .into_iter()
        .filter(|(_, set)| *set)
        .map(|(k, _)| k)
        .collect()
    }
}

/// Looks up required settings with messages naming the key.
pub fn required<T: Clone>(value: &Option<T>, key: &str) -> Result<T, CliError> {
    value.clone().ok_or_else(|| {
        CliError::Config(format!(
            "missing `{key}` (flag --{} or config key {key})",
            key.replace('_', "-")
        ))
    })
}

pub fn check(ok: bool, key: &str, message: impl fmt::Display) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(format!("`{key}`: {message}")))
    }
}
