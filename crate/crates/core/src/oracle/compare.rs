//! Elementwise tolerance check between an eager and a compiled output.

use serde::{Deserialize, Serialize};

use super::tensor::{TensorPayload, TensorValue};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceConfig {
    pub atol: f64,
    pub rtol: f64,
    pub equal_nan: bool,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            atol: 0.001,
            rtol: 0.001,
            equal_nan: true,
        }
    }
}

impl ToleranceConfig {
    pub fn exact() -> Self {
        Self {
            atol: 0.0,
            rtol: 0.0,
            equal_nan: false,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.atol >= 0.0 && self.rtol >= 0.0
    }
}

/// Why two outputs cannot be compared element by element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StructureMismatch {
    Shape { eager: Vec<usize>, compiled: Vec<usize> },
    Dtype { eager: String, compiled: String },
    OutputCount { eager: usize, compiled: usize },
    /// At least one side was shipped as a digest and the digests differ.
    Digest,
}

/// First point at which the outputs disagree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Structure {
        mismatch: StructureMismatch,
    },
    Element {
        index: usize,
        #[serde(with = "super::tensor::wire_value")]
        eager: f64,
        #[serde(with = "super::tensor::wire_value")]
        compiled: f64,
    },
}

impl Violation {
    pub fn is_structural(&self) -> bool {
        matches!(self, Violation::Structure { .. })
    }
}

/// Whether one pair of elements satisfies `|eager - compiled| <= atol + rtol * |compiled|`.
///
/// The compiled value is the reference on the right-hand side, so the check is
/// not symmetric. Non-finite values only match themselves; two NaNs match when
/// `equal_nan` is set.
pub fn elements_close(eager: f64, compiled: f64, tol: &ToleranceConfig) -> bool {
    if eager.is_nan() || compiled.is_nan() {
        return tol.equal_nan && eager.is_nan() && compiled.is_nan();
    }
    if eager.is_infinite() || compiled.is_infinite() {
        return eager == compiled;
    }
    (eager - compiled).abs() <= tol.atol + tol.rtol * compiled.abs()
}

/// Compare one eager output against the matching compiled output.
///
/// Returns `None` when consistent, otherwise the first violation.
pub fn elementwise_consistent(
    eager: &TensorValue,
    compiled: &TensorValue,
    tol: &ToleranceConfig,
) -> Option<Violation> {
    let structure = |mismatch| Some(Violation::Structure { mismatch });
    if eager.shape != compiled.shape {
        return structure(StructureMismatch::Shape {
            eager: eager.shape.clone(),
            compiled: compiled.shape.clone(),
        });
    }
    if eager.dtype != compiled.dtype {
        return structure(StructureMismatch::Dtype {
            eager: eager.dtype.clone(),
            compiled: compiled.dtype.clone(),
        });
    }
    match (&eager.payload, &compiled.payload) {
        (TensorPayload::Values(a), TensorPayload::Values(b)) => {
            if a.len() != b.len() {
                return structure(StructureMismatch::Shape {
                    eager: vec![a.len()],
                    compiled: vec![b.len()],
                });
            }
            a.iter()
                .zip(b)
                .position(|(&x, &y)| !elements_close(x, y, tol))
                .map(|index| Violation::Element {
                    index,
                    eager: a[index],
                    compiled: b[index],
                })
        }
        (TensorPayload::Digest(a), TensorPayload::Digest(b)) if a.sha256 == b.sha256 => None,
        _ => structure(StructureMismatch::Digest),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec1(v: &[f64]) -> TensorValue {
        TensorValue::new(vec![v.len()], "float32", v.to_vec()).unwrap()
    }

    #[test]
    fn within_default_tolerance() {
        // 0.0015 <= 0.001 + 0.001 * 1.0015 = 0.0020015
        let tol = ToleranceConfig::default();
        assert_eq!(elementwise_consistent(&vec1(&[1.0]), &vec1(&[1.0015]), &tol), None);
    }

    #[test]
    fn beyond_default_tolerance() {
        // 0.010 > 0.001 + 0.001 * 1.010 = 0.00201
        let tol = ToleranceConfig::default();
        let v = elementwise_consistent(&vec1(&[1.0]), &vec1(&[1.010]), &tol).unwrap();
        assert_eq!(
            v,
            Violation::Element {
                index: 0,
                eager: 1.0,
                compiled: 1.010
            }
        );
    }

    #[test]
    fn identical_tensors_agree() {
        let t = vec1(&[0.0, -3.5, 1e300, f64::INFINITY]);
        assert_eq!(elementwise_consistent(&t, &t, &ToleranceConfig::default()), None);
        assert_eq!(elementwise_consistent(&t, &t, &ToleranceConfig::exact()), None);
    }

    #[test]
    fn asymmetric_in_arguments() {
        // rhs magnitude scales the bound: |0 - 1| <= 0 + 1 * |1| holds, the swap does not.
        let tol = ToleranceConfig {
            atol: 0.0,
            rtol: 1.0,
            equal_nan: true,
        };
        assert!(elements_close(0.0, 1.0, &tol));
        assert!(!elements_close(1.0, 0.0, &tol));
    }

    #[test]
    fn nan_handling() {
        let tol = ToleranceConfig::default();
        assert!(elements_close(f64::NAN, f64::NAN, &tol));
        assert!(!elements_close(f64::NAN, 1.0, &tol));
        assert!(!elements_close(1.0, f64::NAN, &tol));
        let strict = ToleranceConfig {
            equal_nan: false,
            ..tol
        };
        assert!(!elements_close(f64::NAN, f64::NAN, &strict));
    }

    #[test]
    fn infinities_only_match_themselves() {
        let tol = ToleranceConfig::default();
        assert!(elements_close(f64::INFINITY, f64::INFINITY, &tol));
        assert!(!elements_close(1.0, f64::INFINITY, &tol));
        assert!(!elements_close(f64::NEG_INFINITY, f64::INFINITY, &tol));
    }

    #[test]
    fn reports_first_violation() {
        let tol = ToleranceConfig::default();
        let v = elementwise_consistent(&vec1(&[1.0, 2.0, 3.0]), &vec1(&[1.0, 2.5, 9.0]), &tol);
        assert!(matches!(v, Some(Violation::Element { index: 1, .. })));
    }

    #[test]
    fn structure_mismatches() {
        let tol = ToleranceConfig::default();
        let a = TensorValue::new(vec![2, 2], "float32", vec![0.0; 4]).unwrap();
        let b = TensorValue::new(vec![4], "float32", vec![0.0; 4]).unwrap();
        assert!(matches!(
            elementwise_consistent(&a, &b, &tol),
            Some(Violation::Structure { mismatch: StructureMismatch::Shape { .. } })
        ));
        let c = TensorValue::new(vec![2, 2], "float64", vec![0.0; 4]).unwrap();
        assert!(matches!(
            elementwise_consistent(&a, &c, &tol),
            Some(Violation::Structure { mismatch: StructureMismatch::Dtype { .. } })
        ));
    }

    #[test]
    fn integer_values_compare_exactly_under_unit_atol() {
        let tol = ToleranceConfig {
            atol: 0.5,
            rtol: 0.0,
            equal_nan: true,
        };
        let a = TensorValue::new(vec![2], "int64", vec![3.0, 4.0]).unwrap();
        let b = TensorValue::new(vec![2], "int64", vec![3.0, 5.0]).unwrap();
        assert!(elementwise_consistent(&a, &a, &tol).is_none());
        assert!(elementwise_consistent(&a, &b, &tol).is_some());
    }
}
