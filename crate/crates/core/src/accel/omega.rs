use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Regularization profile `omega(s)` of a proximal step oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OmegaSpec {
    /// `coef * s^exponent`.
    Power { coef: f64, exponent: f64 },
    /// `omega(s) = level` for every `s`.
    Constant { level: f64 },
}

impl OmegaSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            OmegaSpec::Power { coef, exponent } => {
                if !(coef > 0.0) || !coef.is_finite() {
                    return Err(invalid("omega.coef", format!("must be positive, got {coef}")));
                }
                if !(exponent >= 0.0) || !exponent.is_finite() {
                    return Err(invalid(
                        "omega.exponent",
                        format!("must be >= 0, got {exponent}"),
                    ));
                }
            }
            OmegaSpec::Constant { level } => {
                if !(level > 0.0) || !level.is_finite() {
                    return Err(invalid("omega.level", format!("must be positive, got {level}")));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, s: f64) -> f64 {
        match *self {
            OmegaSpec::Power { coef, exponent } => coef * s.powf(exponent),
            OmegaSpec::Constant { level } => level,
        }
    }

    /// Exponent `g` with `omega(z s) <= z^g omega(s)` for all `z >= 1`.
    pub fn growth_gamma(&self) -> f64 {
        match *self {
            OmegaSpec::Power { exponent, .. } => exponent.max(1.0),
            OmegaSpec::Constant { .. } => 1.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn evaluates_both_kinds() {
        let p = OmegaSpec::Power { coef: 4.0, exponent: 2.0 };
        assert_eq!(p.eval(0.5), 1.0);
        assert_eq!(p.growth_gamma(), 2.0);
        let c = OmegaSpec::Constant { level: 3.0 };
        assert_eq!(c.eval(100.0), 3.0);
        assert_eq!(c.growth_gamma(), 1.0);
        assert!(OmegaSpec::Constant { level: 0.0 }.validate().is_err());
    }

    #[test]
    fn serde_tags_by_kind() {
        let text = r#"{"kind":"power","coef":2.0,"exponent":1.5}"#;
        let o: OmegaSpec = serde_json::from_str(text).unwrap();
        assert_eq!(o, OmegaSpec::Power { coef: 2.0, exponent: 1.5 });
    }

    proptest! {
        #[test]
        fn growth_condition_holds(coef in 0.1f64..10.0, exponent in 0.0f64..4.0,
                                  s in 1e-3f64..10.0, z in 1.0f64..50.0) {
            let o = OmegaSpec::Power { coef, exponent };
            let g = o.growth_gamma();
            prop_assert!(o.eval(z * s) <= z.powf(g) * o.eval(s) * (1.0 + 1e-12));
        }
    }
}
