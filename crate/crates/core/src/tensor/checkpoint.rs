//! Plain-text parameter files with lossless hexadecimal floats.
//!
//! ```text
//! CFG <free-form configuration line>
//! P <name> <d0> <d1> ...
//! <row 0 values>
//! <row 1 values>
//! ```

use std::fmt::Write as _;

use super::{ParamStore, Tensor, TensorError};

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const MANTISSA_BITS: u32 = 52;
const MANTISSA_MASK: u64 = (1 << MANTISSA_BITS) - 1;

/// C99 `%a`-style text for `x`, exact for every finite value.
pub fn format_hex_f64(x: f64) -> String {
    let bits = x.to_bits();
    let sign = if bits >> 63 == 1 { "-" } else { "" };
    let exp = ((bits >> MANTISSA_BITS) & 0x7ff) as i64;
    let mant = bits & MANTISSA_MASK;
    if exp == 0x7ff {
        return match (mant, sign) {
            (0, "") => "inf".into(),
            (0, _) => "-inf".into(),
            _ => "nan".into(),
        };
    }
    if exp == 0 && mant == 0 {
        return format!("{sign}0x0p+0");
    }
    let (lead, e) = if exp == 0 { (0, -1022) } else { (1, exp - 1023) };
    let digits = format!("{mant:013x}");
    let digits = digits.trim_end_matches('0');
    if digits.is_empty() {
        format!("{sign}0x{lead}p{e:+}")
    } else {
        format!("{sign}0x{lead}.{digits}p{e:+}")
    }
}

// x · 2^e without intermediate overflow or double rounding for our inputs.
fn ldexp(mut x: f64, mut e: i64) -> f64 {
    while e > 1000 {
        x *= 2f64.powi(1000);
        e -= 1000;
    }
    while e < -1000 {
        x *= 2f64.powi(-537);
        e += 537;
    }
    x * 2f64.powi(e as i32)
}

/// Parses hexadecimal float text with at most 13 fraction digits.
pub fn parse_hex_f64(s: &str) -> Option<f64> {
    match s {
        "inf" => return Some(f64::INFINITY),
        "-inf" => return Some(f64::NEG_INFINITY),
        "nan" => return Some(f64::NAN),
        _ => {}
    }
    let (neg, rest) = match s.strip_prefix('-') {
        Some(r) => (true, r),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let rest = rest.strip_prefix("0x").or_else(|| rest.strip_prefix("0X"))?;
    let (mant_text, exp_text) = rest.split_once(['p', 'P'])?;
    let (int_text, frac_text) = mant_text.split_once('.').unwrap_or((mant_text, ""));
    if int_text.is_empty() || int_text.len() + frac_text.len() > 14 {
        return None;
    }
    let mut m: u64 = 0;
    for c in int_text.chars().chain(frac_text.chars()) {
        m = (m << 4) | u64::from(c.to_digit(16)?);
    }
    let e: i64 = exp_text.parse().ok()?;
    let v = ldexp(m as f64, e - 4 * frac_text.len() as i64);
    Some(if neg { -v } else { v })
}

/// Serializes every parameter value. `config` becomes the `CFG` line.
pub fn write_params(store: &ParamStore, config: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "CFG {config}");
    for id in store.ids() {
        let t = store.value(id);
        let _ = write!(out, "P {}", store.name(id));
        for d in t.shape() {
            let _ = write!(out, " {d}");
        }
        out.push('\n');
        for r in 0..t.rows() {
            let row: Vec<String> = t.row(r).iter().map(|&x| format_hex_f64(x)).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
    }
    out
}

/// Inverse of [`write_params`]; returns the `CFG` payload and the parameters.
pub fn read_params(text: &str) -> Result<(String, ParamStore), CheckpointError> {
    let bad = |line: usize, msg: &str| CheckpointError::Malformed { line, msg: msg.to_string() };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, first) = lines.next().ok_or_else(|| bad(1, "empty checkpoint"))?;
    let config = first
        .strip_prefix("CFG")
        .ok_or_else(|| bad(1, "missing CFG header"))?
        .trim()
        .to_string();
    let mut store = ParamStore::new();
    while let Some((ln, line)) = lines.next() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        if parts.next() != Some("P") {
            return Err(bad(ln, "expected a P record"));
        }
        let name = parts.next().ok_or_else(|| bad(ln, "missing parameter name"))?;
        let shape = parts
            .map(|d| d.parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| bad(ln, "bad dimension"))?;
        let proto = Tensor::zeros(&shape);
        let (rows, cols) = (proto.rows(), proto.cols());
        let mut data = Vec::with_capacity(proto.len());
        for _ in 0..rows {
            let (rl, row) = lines.next().ok_or_else(|| bad(ln, "truncated parameter"))?;
            let before = data.len();
            for tok in row.split_whitespace() {
                data.push(parse_hex_f64(tok).ok_or_else(|| bad(rl, "bad float"))?);
            }
            if data.len() - before != cols {
                return Err(bad(rl, "wrong row width"));
            }
        }
        store.insert(name, Tensor::new(shape, data)?)?;
    }
    Ok((config, store))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_spellings() {
        assert_eq!(format_hex_f64(1.0), "0x1p+0");
        assert_eq!(format_hex_f64(-0.5), "-0x1p-1");
        assert_eq!(format_hex_f64(0.1), "0x1.999999999999ap-4");
        assert_eq!(format_hex_f64(-0.0), "-0x0p+0");
        assert_eq!(format_hex_f64(f64::from_bits(1)), "0x0.0000000000001p-1022");
    }

    #[test]
    fn extremes_round_trip() {
        for x in [f64::MAX, f64::MIN_POSITIVE, f64::from_bits(1), f64::from_bits(MANTISSA_MASK), -0.0, 0.0] {
            let back = parse_hex_f64(&format_hex_f64(x)).unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{x:e}");
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_hex_f64("1.5").is_none());
        assert!(parse_hex_f64("0x1.gp+0").is_none());
        assert!(read_params("P w 1 1\n0x1p+0\n").is_err());
        assert!(read_params("CFG\nP w 1 2\n0x1p+0\n").is_err());
    }

    proptest! {
        #[test]
        fn every_finite_bit_pattern_round_trips(bits in any::<u64>()) {
            let x = f64::from_bits(bits);
            prop_assume!(x.is_finite());
            let back = parse_hex_f64(&format_hex_f64(x)).unwrap();
            prop_assert_eq!(back.to_bits(), bits);
        }
    }

    #[test]
    fn store_round_trip_is_bit_exact() {
        let mut store = ParamStore::new();
        store.init("enc.w", &[3, 4], 9).unwrap();
        store.init("dec.bil", &[2, 3, 3], 9).unwrap();
        store.init("dec.b", &[1, 4], 9).unwrap();
        let text = write_params(&store, "k=2 d=3");
        let (cfg, back) = read_params(&text).unwrap();
        assert_eq!(cfg, "k=2 d=3");
        assert!(store.bitwise_eq(&back));
        assert_eq!(write_params(&back, "k=2 d=3"), text);
    }
}
