//! Serde adapters writing non-finite floats as the strings `"inf"`, `"-inf"`, `"nan"`.

use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;

pub(crate) fn format_real(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x == f64::INFINITY {
        "inf".to_string()
    } else if x == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        // shortest representation that parses back to the same bits
        format!("{x:?}")
    }
}

pub(crate) fn parse_real(s: &str) -> Option<f64> {
    match s.trim() {
        "inf" | "+inf" | "Infinity" => Some(f64::INFINITY),
        "-inf" | "-Infinity" => Some(f64::NEG_INFINITY),
        "nan" | "NaN" => Some(f64::NAN),
        t => t.parse().ok(),
    }
}

pub(crate) fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else {
        s.serialize_str(&format_real(*x))
    }
}

struct RealVisitor;

impl Visitor<'_> for RealVisitor {
    type Value = f64;

    fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
        f.write_str("a number or one of \"inf\", \"-inf\", \"nan\"")
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
        parse_real(v).ok_or_else(|| E::custom(format!("invalid real {v:?}")))
    }
}

pub(crate) fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    d.deserialize_any(RealVisitor)
}

pub(crate) mod vec {
    use serde::de::{Deserializer, SeqAccess, Visitor};
    use serde::ser::{SerializeSeq, Serializer};

    struct Wrap(f64);

    impl serde::Serialize for Wrap {
        fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
            super::serialize(&self.0, s)
        }
    }

    struct Unwrap(f64);

    impl<'de> serde::Deserialize<'de> for Unwrap {
        fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
            super::deserialize(d).map(Unwrap)
        }
    }

    pub(crate) fn serialize<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(xs.len()))?;
        for x in xs {
            seq.serialize_element(&Wrap(*x))?;
        }
        seq.end()
    }

    struct SeqVisitor;

    impl<'de> Visitor<'de> for SeqVisitor {
        type Value = Vec<f64>;

        fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
            f.write_str("a sequence of reals")
        }

        fn visit_seq<A: SeqAccess<'de>>(self, mut a: A) -> Result<Vec<f64>, A::Error> {
            let mut out = Vec::new();
            while let Some(Unwrap(x)) = a.next_element()? {
                out.push(x);
            }
            Ok(out)
        }
    }

    pub(crate) fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        d.deserialize_seq(SeqVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::{Deserialize, Serialize};

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Probe {
        #[serde(with = "crate::real")]
        x: f64,
        #[serde(with = "crate::real::vec")]
        xs: Vec<f64>,
    }

    #[test]
    fn non_finite_round_trip() {
        let p = Probe {
            x: f64::INFINITY,
            xs: vec![1.0, f64::NEG_INFINITY, 0.1 + 0.2],
        };
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"x":"inf","xs":[1.0,"-inf",0.30000000000000004]}"#);
        let back: Probe = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn text_form() {
        assert_eq!(format_real(f64::INFINITY), "inf");
        assert_eq!(parse_real("inf"), Some(f64::INFINITY));
        let x = 1.0 / 3.0;
        assert_eq!(parse_real(&format_real(x)).unwrap().to_bits(), x.to_bits());
    }
}
