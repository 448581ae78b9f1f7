//! Terminal claims and path payoffs.

use std::fmt;
use std::str::FromStr;

use crate::error::{LabError, Result};
use crate::lattice::{NodeRef, PathLattice};

/// Recipe for a payoff on the canonical path.
#[derive(Debug, Clone, PartialEq)]
pub enum ClaimSpec {
    Constant(f64),
    /// `B` at the node.
    Identity,
    /// `W` at the node.
    Brownian,
    /// `B^2` at the node.
    Square,
    /// `|B|` at the node.
    Abs,
    /// `|W_k|` for a fixed intermediate step `k`.
    AbsBrownianAt(usize),
    /// `max_s B_s` along the path.
    RunningMax,
    /// `(strike - spot * exp(B))^+`, a put on a multiplicative tree.
    Put { spot: f64, strike: f64 },
    /// `(B - strike)^+`.
    Call { strike: f64 },
    /// Pareto transform of the quantile of `|B|` within its time slice.
    Pareto { alpha: f64, scale: f64 },
}

impl ClaimSpec {
    /// Evaluates a path functional; `None` for distribution-dependent specs.
    pub fn eval_path(&self, b: &[f64], w: &[f64]) -> Option<f64> {
        let bt = *b.last()?;
        let wt = *w.last()?;
        Some(match *self {
            ClaimSpec::Constant(c) => c,
            ClaimSpec::Identity => bt,
            ClaimSpec::Brownian => wt,
            ClaimSpec::Square => bt * bt,
            ClaimSpec::Abs => bt.abs(),
            ClaimSpec::AbsBrownianAt(k) => w.get(k).copied().unwrap_or(wt).abs(),
            ClaimSpec::RunningMax => b.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            ClaimSpec::Put { spot, strike } => (strike - spot * bt.exp()).max(0.0),
            ClaimSpec::Call { strike } => (bt - strike).max(0.0),
            ClaimSpec::Pareto { .. } => return None,
        })
    }

    /// Values on the nodes of one time slice, given each node's `B` and `W`
    /// paths. All nodes of a slice are equally likely under the base measure.
    pub fn eval_slice<I>(&self, paths: I) -> Result<Vec<f64>>
    where
        I: IntoIterator<Item = (Vec<f64>, Vec<f64>)>,
    {
        match *self {
            ClaimSpec::Pareto { alpha, scale } => {
                if !(alpha > 0.0 && scale > 0.0) {
                    return Err(LabError::InvalidParameter(format!("pareto({alpha}, {scale})")));
                }
                let abs: Vec<f64> =
                    paths.into_iter().map(|(b, _)| b.last().copied().unwrap_or(0.0).abs()).collect();
                Ok(pareto_transform(&abs, alpha, scale))
            }
            _ => Ok(paths
                .into_iter()
                .map(|(b, w)| self.eval_path(&b, &w).expect("path functional"))
                .collect()),
        }
    }
}

/// Maps each value to `scale * (1 - u)^(-1/alpha)` where `u` is its mid-rank
/// quantile among `values` (ties within 1e-9 share a rank).
pub fn pareto_transform(values: &[f64], alpha: f64, scale: f64) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]).then(i.cmp(&j)));
    let mut out = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let base = values[order[start]];
        let mut end = start + 1;
        while end < n && values[order[end]] - base <= 1e-9 * (1.0 + base.abs()) {
            end += 1;
        }
        let u = (start as f64 + 0.5 * (end - start) as f64) / n as f64;
        let x = scale * (1.0 - u).powf(-1.0 / alpha);
        for &i in &order[start..end] {
            out[i] = x;
        }
        start = end;
    }
    out
}

impl fmt::Display for ClaimSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClaimSpec::Constant(c) => write!(f, "constant({c})"),
            ClaimSpec::Identity => write!(f, "identity"),
            ClaimSpec::Brownian => write!(f, "brownian"),
            ClaimSpec::Square => write!(f, "square"),
            ClaimSpec::Abs => write!(f, "abs"),
            ClaimSpec::AbsBrownianAt(k) => write!(f, "abs_w_at({k})"),
            ClaimSpec::RunningMax => write!(f, "running_max"),
            ClaimSpec::Put { spot, strike } => write!(f, "put({spot},{strike})"),
            ClaimSpec::Call { strike } => write!(f, "call({strike})"),
            ClaimSpec::Pareto { alpha, scale } => write!(f, "pareto({alpha},{scale})"),
        }
    }
}

/// Splits `name(a, b)` into the name and its numeric arguments.
pub fn parse_call(s: &str) -> Result<(String, Vec<f64>)> {
    let s = s.trim();
    let bad = || LabError::UnknownSpec(s.to_string());
    match s.find('(') {
        None => Ok((s.to_ascii_lowercase(), Vec::new())),
        Some(open) => {
            let inner = s[open + 1..].strip_suffix(')').ok_or_else(bad)?;
            let args = inner
                .split(',')
                .filter(|a| !a.trim().is_empty())
                .map(|a| a.trim().parse::<f64>().map_err(|_| bad()))
                .collect::<Result<Vec<_>>>()?;
            Ok((s[..open].trim().to_ascii_lowercase(), args))
        }
    }
}

impl FromStr for ClaimSpec {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = parse_call(s)?;
        let bad = || LabError::UnknownSpec(s.to_string());
        let arg = |i: usize| args.get(i).copied().ok_or_else(bad);
        Ok(match (name.as_str(), args.len()) {
            ("constant", 1) => ClaimSpec::Constant(arg(0)?),
            ("identity", 0) => ClaimSpec::Identity,
            ("brownian", 0) => ClaimSpec::Brownian,
            ("square", 0) => ClaimSpec::Square,
            ("abs", 0) => ClaimSpec::Abs,
            ("abs_w_at", 1) => ClaimSpec::AbsBrownianAt(arg(0)? as usize),
            ("running_max", 0) => ClaimSpec::RunningMax,
            ("put", 2) => ClaimSpec::Put { spot: arg(0)?, strike: arg(1)? },
            ("call", 1) => ClaimSpec::Call { strike: arg(0)? },
            ("pareto", 1) => ClaimSpec::Pareto { alpha: arg(0)?, scale: 1.0 },
            ("pareto", 2) => ClaimSpec::Pareto { alpha: arg(0)?, scale: arg(1)? },
            _ => return Err(bad()),
        })
    }
}

/// Leaf-indexed terminal value `xi`.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalClaim {
    values: Vec<f64>,
}

impl TerminalClaim {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(LabError::InvalidParameter(format!("non-finite claim value {bad}")));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { values: self.values.iter().map(|&x| f(x)).collect() }
    }

    /// `q_n(xi)`.
    pub fn truncated(&self, level: f64) -> Self {
        self.map(|x| truncate(x, level))
    }
}

/// `q_n(x) = x n / max(|x|, n)`.
pub fn truncate(x: f64, level: f64) -> f64 {
    if x.abs() <= level { x } else { x * level / x.abs() }
}

pub fn claim_from_spec(lattice: &PathLattice, spec: &ClaimSpec) -> Result<TerminalClaim> {
    let n = lattice.steps();
    let paths = (0..lattice.leaf_count()).map(|i| {
        let node = NodeRef { step: n, index: i };
        (lattice.b_path(node), lattice.w_path(node))
    });
    TerminalClaim::new(spec.eval_slice(paths)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_lattice, RegimeSpec, TimeGrid};

    fn lat(n: usize) -> PathLattice {
        build_lattice(TimeGrid::new(1.0, n).unwrap(), &RegimeSpec::Constant(1.0)).unwrap()
    }

    #[test]
    fn identity_and_constant() {
        let l = lat(3);
        assert_eq!(claim_from_spec(&l, &ClaimSpec::Identity).unwrap().values(), l.b_slice(3));
        assert!(claim_from_spec(&l, &ClaimSpec::Constant(2.5)).unwrap().values().iter().all(|&x| x == 2.5));
    }

    #[test]
    fn parse_round_trip() {
        for s in ["constant(2)", "identity", "pareto(1.5,2)", "put(1,1.1)", "abs_w_at(1)", "running_max"] {
            let spec: ClaimSpec = s.parse().unwrap();
            assert_eq!(spec.to_string().parse::<ClaimSpec>().unwrap(), spec);
        }
        assert!("nope".parse::<ClaimSpec>().is_err());
        assert!("pareto(1,2,3)".parse::<ClaimSpec>().is_err());
    }

    #[test]
    fn pareto_has_heavy_top_and_shares_ties() {
        let l = lat(10);
        let xi = claim_from_spec(&l, &ClaimSpec::Pareto { alpha: 1.5, scale: 1.0 }).unwrap();
        let max = xi.values().iter().cloned().fold(0.0, f64::max);
        // the two extreme leaves carry mass 2^-10 together: u = 1 - 2^-10
        assert!((max - 2f64.powf(10.0 / 1.5)).abs() < 1e-9 * max);
        assert_eq!(xi.values()[0], xi.values()[1023]);
        assert!(xi.values().iter().all(|&x| x >= 1.0));
    }

    #[test]
    fn truncation_clips() {
        assert_eq!(truncate(5.0, 2.0), 2.0);
        assert_eq!(truncate(-5.0, 2.0), -2.0);
        assert_eq!(truncate(1.5, 2.0), 1.5);
    }
}
