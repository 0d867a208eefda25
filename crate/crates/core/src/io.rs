//! Score-file ingestion and number formatting shared by the CLI and the
//! simulation writers.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Reads one source's calibration scores.
///
/// Accepts either a JSON array of numbers or a CSV file whose first line is
/// the header `score` followed by one value per line. Blank lines are
/// skipped.
pub fn read_scores(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    parse_scores(&text, &path.display().to_string())
}

pub fn parse_scores(text: &str, origin: &str) -> Result<Vec<f64>> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let scores = if text.trim_start().starts_with('[') {
        let values: Vec<serde_json::Value> =
            serde_json::from_str(text).map_err(|e| parse_err(e.line(), e.to_string()))?;
        values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.as_f64()
                    .ok_or_else(|| parse_err(1, format!("element {i} is not a number: {v}")))
            })
            .collect::<Result<Vec<f64>>>()?
    } else {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        match lines.next() {
            Some((_, header)) if header.eq_ignore_ascii_case("score") => {}
            Some((line, header)) => {
                return Err(parse_err(
                    line,
                    format!("expected header `score`, found `{header}`"),
                ));
            }
            None => return Err(parse_err(1, "file is empty".into())),
        }
        lines
            .map(|(line, l)| {
                l.parse::<f64>()
                    .map_err(|e| parse_err(line, format!("`{l}` is not a number ({e})")))
            })
            .collect::<Result<Vec<f64>>>()?
    };
    if scores.is_empty() {
        return Err(parse_err(1, "no scores found".into()));
    }
    if let Some(i) = scores.iter().position(|v| !v.is_finite()) {
        return Err(parse_err(
            i + 2,
            format!("score {} is not finite", scores[i]),
        ));
    }
    Ok(scores)
}

/// Formats a float with 17 significant digits in `%g` style: `.` decimal
/// separator, no locale, trailing zeros trimmed, `inf`/`-inf`/`nan` for the
/// non-finite values.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..17).contains(&exp) {
        let decimals = (16 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}"))
    } else {
        format!("{}e{}", trim_zeros(mantissa), exp)
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// Serde adapter for extended reals: finite values as JSON numbers, the
/// infinities as the strings `"inf"` / `"-inf"`.
pub mod ext_real {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&super::fmt_f64(*v))
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(de::Error::custom(format!("not an extended real: {other}"))),
            },
        }
    }
}

/// [`ext_real`] for optional values; `None` is `null`.
pub mod opt_real {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => super::ext_real::serialize(x, s),
            None => s.serialize_none(),
        }
    }

    #[derive(Deserialize)]
    struct Wrap(#[serde(with = "super::ext_real")] f64);

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
    }
}

/// [`ext_real`] for vectors.
pub mod ext_real_vec {
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for x in v {
            seq.serialize_element(&Wrap(*x))?;
        }
        seq.end()
    }

    #[derive(serde::Serialize, Deserialize)]
    struct Wrap(#[serde(with = "super::ext_real")] f64);

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Ok(Vec::<Wrap>::deserialize(d)?
            .into_iter()
            .map(|w| w.0)
            .collect())
    }
}
