use serde::{Deserialize, Serialize};

use super::OracleError;

/// One output tensor in row-major order.
///
/// Large outputs may arrive as a digest instead of values; two digests can only
/// be compared for equality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorValue {
    pub shape: Vec<usize>,
    pub dtype: String,
    #[serde(flatten)]
    pub payload: TensorPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorPayload {
    #[serde(rename = "data")]
    Values(#[serde(with = "wire_values")] Vec<f64>),
    Digest(TensorDigest),
}

/// Summary of a tensor too large to ship element by element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorDigest {
    pub sha256: String,
    pub count: usize,
    #[serde(with = "wire_value")]
    pub min: f64,
    #[serde(with = "wire_value")]
    pub max: f64,
    #[serde(with = "wire_value")]
    pub mean: f64,
}

impl TensorValue {
    pub fn new(
        shape: Vec<usize>,
        dtype: impl Into<String>,
        data: Vec<f64>,
    ) -> Result<Self, OracleError> {
        let t = Self {
            shape,
            dtype: dtype.into(),
            payload: TensorPayload::Values(data),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn scalar(dtype: impl Into<String>, value: f64) -> Self {
        Self {
            shape: Vec::new(),
            dtype: dtype.into(),
            payload: TensorPayload::Values(vec![value]),
        }
    }

    /// Number of elements implied by the shape. An empty shape is a scalar.
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn values(&self) -> Option<&[f64]> {
        match &self.payload {
            TensorPayload::Values(v) => Some(v),
            TensorPayload::Digest(_) => None,
        }
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        let expected = self.numel();
        let actual = match &self.payload {
            TensorPayload::Values(v) => v.len(),
            TensorPayload::Digest(d) => d.count,
        };
        if actual != expected {
            return Err(OracleError::ShapeDataMismatch {
                shape: self.shape.clone(),
                len: actual,
            });
        }
        Ok(())
    }
}

/// Finite values travel as JSON numbers; NaN and the infinities as the strings
/// `"nan"`, `"inf"` and `"-inf"`.
pub(crate) mod wire_value {
    use serde::de::{self, Deserializer, Visitor};
    use serde::Serializer;
    use std::fmt;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_str("nan")
        } else if v.is_infinite() {
            s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        d.deserialize_any(WireF64)
    }

    pub(super) struct WireF64;

    impl<'de> Visitor<'de> for WireF64 {
        type Value = f64;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("a number or one of \"nan\", \"inf\", \"-inf\"")
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
            Ok(v)
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
            match v {
                "nan" => Ok(f64::NAN),
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(E::invalid_value(de::Unexpected::Str(other), &self)),
            }
        }
    }
}

pub(crate) mod wire_values {
    use serde::de::{Deserializer, SeqAccess, Visitor};
    use serde::ser::{SerializeSeq, Serializer};
    use std::fmt;

    struct Item(f64);

    impl serde::Serialize for Item {
        fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
            super::wire_value::serialize(&self.0, s)
        }
    }

    impl<'de> serde::Deserialize<'de> for Item {
        fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
            d.deserialize_any(super::wire_value::WireF64).map(Item)
        }
    }

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for x in v {
            seq.serialize_element(&Item(*x))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        struct SeqVisitor;
        impl<'de> Visitor<'de> for SeqVisitor {
            type Value = Vec<f64>;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a list of numbers")
            }
            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Vec<f64>, A::Error> {
                let mut out = Vec::with_capacity(seq.size_hint().unwrap_or(0).min(1 << 20));
                while let Some(Item(x)) = seq.next_element()? {
                    out.push(x);
                }
                Ok(out)
            }
        }
        d.deserialize_seq(SeqVisitor)
    }
}
