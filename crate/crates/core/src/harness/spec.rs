//! Model-spec files.
//!
//! A spec is a JSON document:
//!
//! ```json
//! {
//!   "family": "softmax",
//!   "A": [[0.0, 1.0], [0.5, -0.2]],
//!   "M": [[1.0, 0.0], [0.0, 0.0]],
//!   "constraint": { "E": 1.0 },
//!   "seed": 7
//! }
//! ```
//!
//! `B` may replace `M`; `"generator": {"name", "n", "d", "seed"}` may
//! replace both matrices. An optional `"eps"` fixes `B = A + eps·M` when
//! only a direction is given, and an optional `"experiment"` object carries
//! sweep/verify settings.

use std::path::Path;

use serde::Deserialize;

use crate::distributions::Seed;
use crate::error::{Error, Result};
use crate::leverage::BoxConstraint;
use crate::numerics::ParamMatrix;
use crate::softmax::EnergyConstraint;
use crate::tester::{Constraint, Family, OracleSpec};

use super::generators::Generator;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    family: String,
    #[serde(rename = "A")]
    a: Option<Vec<Vec<f64>>>,
    #[serde(rename = "B")]
    b: Option<Vec<Vec<f64>>>,
    #[serde(rename = "M")]
    m: Option<Vec<Vec<f64>>>,
    generator: Option<RawGenerator>,
    constraint: RawConstraint,
    seed: Option<u64>,
    eps: Option<f64>,
    experiment: Option<ExperimentSettings>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGenerator {
    name: String,
    n: usize,
    d: usize,
    seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstraint {
    #[serde(rename = "E")]
    energy: Option<f64>,
    c: Option<f64>,
    #[serde(rename = "C")]
    cap: Option<f64>,
}

/// Optional experiment settings carried in a spec file; CLI flags override.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSettings {
    pub eps_grid: Option<Vec<f64>>,
    pub trials: Option<usize>,
    pub target: Option<f64>,
    pub restarts: Option<usize>,
    pub max_iters: Option<usize>,
    pub instances: Option<usize>,
    pub budget: Option<u64>,
}

/// The second matrix of a spec: an explicit alternative or a direction.
#[derive(Debug, Clone, PartialEq)]
pub enum Alternative {
    B(ParamMatrix),
    M(ParamMatrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub family: Family,
    pub a: ParamMatrix,
    pub alternative: Alternative,
    pub constraint: Constraint,
    pub seed: Seed,
    pub eps: Option<f64>,
    pub experiment: ExperimentSettings,
}

fn matrix(field: &str, rows: &[Vec<f64>]) -> Result<ParamMatrix> {
    if rows.is_empty() {
        return Err(Error::Spec(format!("field `{field}`: matrix has no rows")));
    }
    ParamMatrix::from_rows(rows).map_err(|e| Error::Spec(format!("field `{field}`: {e}")))
}

impl ModelSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Spec(msg) => Error::Spec(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawSpec = serde_json::from_str(text).map_err(|e| Error::Spec(e.to_string()))?;
        let family = match raw.family.as_str() {
            "softmax" => Family::Softmax,
            "leverage" => Family::Leverage,
            other => {
                return Err(Error::Spec(format!(
                    "field `family`: expected \"softmax\" or \"leverage\", got {other:?}"
                )))
            }
        };
        let constraint = match (family, &raw.constraint) {
            (Family::Softmax, RawConstraint { energy: Some(e), c: None, cap: None }) => {
                Constraint::Energy(
                    EnergyConstraint::new(*e)
                        .map_err(|err| Error::Spec(format!("field `constraint.E`: {err}")))?,
                )
            }
            (Family::Leverage, RawConstraint { energy: None, c: Some(c), cap: Some(cap) }) => {
                Constraint::Box(
                    BoxConstraint::new(*c, *cap)
                        .map_err(|err| Error::Spec(format!("field `constraint`: {err}")))?,
                )
            }
            (Family::Softmax, _) => {
                return Err(Error::Spec(
                    "field `constraint`: softmax specs need exactly {\"E\": ...}".into(),
                ))
            }
            (Family::Leverage, _) => {
                return Err(Error::Spec(
                    "field `constraint`: leverage specs need exactly {\"c\": ..., \"C\": ...}".into(),
                ))
            }
        };

        let (a, alternative) = match (&raw.generator, &raw.a) {
            (Some(g), None) => {
                if raw.b.is_some() || raw.m.is_some() {
                    return Err(Error::Spec(
                        "field `generator`: cannot be combined with `B` or `M`".into(),
                    ));
                }
                let gen = Generator::from_name(&g.name)
                    .map_err(|e| Error::Spec(format!("field `generator.name`: {e}")))?;
                let seed = Seed(g.seed.or(raw.seed).unwrap_or(0));
                let (a, m) = gen
                    .instance(g.n, g.d, seed)
                    .map_err(|e| Error::Spec(format!("field `generator`: {e}")))?;
                (a, Alternative::M(m))
            }
            (None, Some(a_rows)) => {
                let a = matrix("A", a_rows)?;
                let alt = match (&raw.b, &raw.m) {
                    (Some(b), None) => Alternative::B(matrix("B", b)?),
                    (None, Some(m)) => Alternative::M(matrix("M", m)?),
                    (Some(_), Some(_)) => {
                        return Err(Error::Spec("give either `B` or `M`, not both".into()))
                    }
                    (None, None) => return Err(Error::Spec("missing field `B` or `M`".into())),
                };
                let other = match &alt {
                    Alternative::B(b) => ("B", b),
                    Alternative::M(m) => ("M", m),
                };
                if !a.same_shape(other.1) {
                    return Err(Error::Spec(format!(
                        "field `{}`: shape {}x{} does not match `A` ({}x{})",
                        other.0,
                        other.1.rows(),
                        other.1.cols(),
                        a.rows(),
                        a.cols()
                    )));
                }
                (a, alt)
            }
            (Some(_), Some(_)) => {
                return Err(Error::Spec("give either `A` or `generator`, not both".into()))
            }
            (None, None) => return Err(Error::Spec("missing field `A` (or `generator`)".into())),
        };
        if family == Family::Leverage && a.rows() < a.cols() {
            return Err(Error::Spec(format!(
                "field `A`: leverage models need n ≥ d, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        if let Some(eps) = raw.eps {
            if !(eps.is_finite() && eps > 0.0) {
                return Err(Error::Spec(format!("field `eps`: must be positive, got {eps}")));
            }
        }
        Ok(Self {
            family,
            a,
            alternative,
            constraint,
            seed: Seed(raw.seed.unwrap_or(0)),
            eps: raw.eps,
            experiment: raw.experiment.unwrap_or_default(),
        })
    }

    /// The `(A, B)` pair. With a direction `M`, `B = A + eps·M` where `eps`
    /// comes from the argument or the file.
    pub fn oracle_spec(&self, eps: Option<f64>) -> Result<OracleSpec> {
        let b = match &self.alternative {
            Alternative::B(b) => b.clone(),
            Alternative::M(m) => {
                let eps = eps.or(self.eps).ok_or_else(|| {
                    Error::Spec("spec gives a direction `M`; supply `eps` to form B = A + eps·M".into())
                })?;
                self.a.add_scaled(m, eps)?
            }
        };
        OracleSpec::new(self.a.clone(), b, self.constraint)
    }

    /// Perturbation direction: `M`, or `B − A` when `B` is given.
    pub fn direction(&self) -> Result<ParamMatrix> {
        match &self.alternative {
            Alternative::M(m) => Ok(m.clone()),
            Alternative::B(b) => b.sub(&self.a),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_softmax_with_direction() {
        let s = ModelSpec::parse(
            r#"{"family":"softmax","A":[[0,0],[0,0],[0,0]],"M":[[1,0],[0,0],[0,0]],
                "constraint":{"E":2.0},"seed":5,"eps":0.1}"#,
        )
        .unwrap();
        assert_eq!(s.family, Family::Softmax);
        assert_eq!(s.seed, Seed(5));
        let o = s.oracle_spec(None).unwrap();
        assert!((o.params1.get(0, 0) - 0.1).abs() < 1e-15);
        let o = s.oracle_spec(Some(0.5)).unwrap();
        assert!((o.params1.get(0, 0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn parses_leverage_with_b() {
        let s = ModelSpec::parse(
            r#"{"family":"leverage","A":[[1,0],[0,1]],"B":[[1,0],[0,2]],"constraint":{"c":0.5,"C":2}}"#,
        )
        .unwrap();
        assert!(matches!(s.constraint, Constraint::Box(_)));
        assert_eq!(s.direction().unwrap().get(1, 1), 1.0);
    }

    #[test]
    fn syntax_errors_carry_line_and_column() {
        let err = ModelSpec::parse("{\n  \"family\": \"softmax\",\n  \"A\": [[1, 2],\n}").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 4"), "{msg}");
    }

    #[test]
    fn field_errors_name_the_field() {
        let cases = [
            (r#"{"family":"gauss","A":[[1]],"B":[[1]],"constraint":{"E":1}}"#, "family"),
            (r#"{"family":"softmax","A":[[1,2],[3]],"B":[[1,2],[3,4]],"constraint":{"E":1}}"#, "`A`"),
            (r#"{"family":"softmax","A":[[1,2]],"B":[[1]],"constraint":{"E":1}}"#, "`B`"),
            (r#"{"family":"softmax","A":[[1]],"B":[[1]],"constraint":{"c":1,"C":2}}"#, "constraint"),
            (r#"{"family":"leverage","A":[[1,2]],"B":[[1,2]],"constraint":{"c":1,"C":2}}"#, "n ≥ d"),
            (r#"{"family":"softmax","A":[[1]],"constraint":{"E":1}}"#, "`B` or `M`"),
            (r#"{"family":"softmax","A":[[1]],"B":[[1]],"constraint":{"E":1},"extra":1}"#, "extra"),
            (r#"{"family":"softmax","A":[[1]],"B":[[1]],"constraint":{"E":-1}}"#, "constraint.E"),
        ];
        for (text, needle) in cases {
            let msg = ModelSpec::parse(text).unwrap_err().to_string();
            assert!(msg.contains(needle), "{text} → {msg}");
        }
    }

    #[test]
    fn direction_without_eps_cannot_form_b() {
        let s = ModelSpec::parse(
            r#"{"family":"softmax","A":[[0]],"M":[[1]],"constraint":{"E":1}}"#,
        )
        .unwrap();
        assert!(s.oracle_spec(None).is_err());
    }

    #[test]
    fn generator_specs() {
        let s = ModelSpec::parse(
            r#"{"family":"softmax","generator":{"name":"gaussian","n":5,"d":3,"seed":11},
                "constraint":{"E":1},"experiment":{"trials":100,"eps_grid":[0.2,0.1]}}"#,
        )
        .unwrap();
        assert_eq!((s.a.rows(), s.a.cols()), (5, 3));
        assert_eq!(s.experiment.trials, Some(100));
        let again = ModelSpec::parse(
            r#"{"family":"softmax","generator":{"name":"gaussian","n":5,"d":3,"seed":11},"constraint":{"E":1}}"#,
        )
        .unwrap();
        assert_eq!(s.a, again.a);
    }
}
