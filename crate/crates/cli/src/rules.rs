//! Rule specifications: short names or JSON objects like
//! `{"kind":"spherical","alpha":2.0,"n":3}`. Custom rules are not
//! expressible in files.

use serde::{Deserialize, Serialize};

use abelab_core::incentivization::{normalize, optimal_rule, NormalizedRule};
use abelab_core::scoring::{BinaryRule, ScoringRule};
use abelab_core::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum RuleSpec {
    Quadratic {
        #[serde(default)]
        n: Option<usize>,
    },
    Logarithmic {
        #[serde(default)]
        n: Option<usize>,
    },
    Spherical {
        alpha: f64,
        #[serde(default)]
        n: Option<usize>,
    },
    Tsallis {
        gamma: f64,
        #[serde(default)]
        n: Option<usize>,
    },
    Hs {
        #[serde(default)]
        n: Option<usize>,
    },
    NegativeLogProduct {
        #[serde(default)]
        n: Option<usize>,
    },
    Opt {
        ell: f64,
    },
}

impl RuleSpec {
    /// Parse either a short name (`quadratic`, `log`, `spherical`, `hs`,
    /// `opt:2`, `opt:inf`, ...) or a JSON object.
    pub fn parse(text: &str) -> Result<RuleSpec> {
        let t = text.trim();
        if t.starts_with('{') {
            return serde_json::from_str(t)
                .map_err(|e| Error::Argument(format!("bad rule spec: {e}")));
        }
        let (name, param) = match t.split_once(':') {
            Some((n, p)) => (n, Some(p)),
            None => (t, None),
        };
        let parse_param = |p: Option<&str>| -> Result<f64> {
            let p = p.ok_or_else(|| Error::Argument(format!("{name} needs a parameter")))?;
            if p == "inf" {
                return Ok(f64::INFINITY);
            }
            p.parse().map_err(|e| Error::Argument(format!("bad parameter {p}: {e}")))
        };
        match name {
            "quadratic" | "quad" => Ok(RuleSpec::Quadratic { n: None }),
            "logarithmic" | "log" => Ok(RuleSpec::Logarithmic { n: None }),
            "spherical" | "sph" => Ok(RuleSpec::Spherical {
                alpha: param.map(|p| parse_param(Some(p))).transpose()?.unwrap_or(2.0),
                n: None,
            }),
            "tsallis" => Ok(RuleSpec::Tsallis { gamma: parse_param(param)?, n: None }),
            "hs" => Ok(RuleSpec::Hs { n: None }),
            "negative-log-product" | "nlp" => Ok(RuleSpec::NegativeLogProduct { n: None }),
            "opt" => Ok(RuleSpec::Opt { ell: parse_param(param)? }),
            other => Err(Error::Argument(format!("unknown rule {other}"))),
        }
    }

    fn n_or(&self, fallback: usize) -> usize {
        match self {
            RuleSpec::Quadratic { n }
            | RuleSpec::Logarithmic { n }
            | RuleSpec::Spherical { n, .. }
            | RuleSpec::Tsallis { n, .. }
            | RuleSpec::Hs { n }
            | RuleSpec::NegativeLogProduct { n } => n.unwrap_or(fallback),
            RuleSpec::Opt { .. } => 2,
        }
    }

    /// Build the n-outcome rule, defaulting the dimension to `dim`.
    pub fn build_vector(&self, dim: usize) -> Result<ScoringRule> {
        let n = self.n_or(dim);
        if n != dim {
            return Err(Error::Dimension(format!(
                "rule is for {n} outcomes but the data has {dim}"
            )));
        }
        match self {
            RuleSpec::Quadratic { .. } => Ok(ScoringRule::quadratic(n)),
            RuleSpec::Logarithmic { .. } => Ok(ScoringRule::logarithmic(n)),
            RuleSpec::Spherical { alpha, .. } => ScoringRule::spherical(*alpha, n),
            RuleSpec::Tsallis { gamma, .. } => ScoringRule::tsallis(*gamma, n),
            RuleSpec::Hs { .. } => Ok(ScoringRule::hs(n)),
            RuleSpec::NegativeLogProduct { .. } => Ok(ScoringRule::negative_log_product(n)),
            RuleSpec::Opt { ell } => ScoringRule::opt(*ell),
        }
    }

    /// Build the normalized binary rule (for index and simulation work).
    pub fn build_normalized(&self) -> Result<NormalizedRule> {
        let binary = match self {
            RuleSpec::Quadratic { .. } => BinaryRule::quadratic(),
            RuleSpec::Logarithmic { .. } => BinaryRule::logarithmic(),
            RuleSpec::Spherical { alpha, .. } => {
                if (alpha - 2.0).abs() > 1e-12 {
                    return Err(Error::Argument(
                        "binary spherical rule is built for alpha = 2".into(),
                    ));
                }
                BinaryRule::spherical()
            }
            RuleSpec::Hs { .. } => BinaryRule::hs(),
            RuleSpec::Opt { ell } => return optimal_rule(*ell),
            other => {
                return Err(Error::Argument(format!(
                    "no binary normalization for {other:?}"
                )))
            }
        };
        normalize(&binary)
    }
}
