//! Small CSV helpers shared by the serializers in the other modules.
//!
//! All files use `,` separators, `.` decimals, LF line endings and a single
//! header row. Two float styles are in play: most files print with Rust's
//! shortest round-trip formatting (re-reading reproduces the value exactly),
//! while grid snapshots use a C-style `%.12g` to keep file sizes sane.

use std::io::BufRead;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("expected header `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("unexpected end of file")]
    Eof,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Format `v` like C's `printf("%.*g", sig, v)`: `sig` significant digits,
/// trailing zeros trimmed, scientific notation when the exponent falls
/// outside `[-4, sig)`.
pub fn fmt_g(v: f64, sig: usize) -> String {
    assert!(sig >= 1);
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{:.*e}", sig - 1, v);
    let (mant, exp) = sci.split_once('e').expect("float in e-notation");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -4 || exp >= sig as i32 {
        let mant = trim_zeros(mant);
        if exp < 0 {
            format!("{mant}e-{:02}", -exp)
        } else {
            format!("{mant}e+{:02}", exp)
        }
    } else {
        let frac = (sig as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", frac, v)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Read one line, failing with a position-tagged error on EOF.
pub fn read_line<R: BufRead>(r: &mut R, line_no: &mut usize) -> Result<Option<String>, CsvError> {
    let mut buf = String::new();
    let n = r.read_line(&mut buf)?;
    if n == 0 {
        return Ok(None);
    }
    *line_no += 1;
    while buf.ends_with('\n') || buf.ends_with('\r') {
        buf.pop();
    }
    Ok(Some(buf))
}

pub fn expect_header<R: BufRead>(
    r: &mut R,
    line_no: &mut usize,
    expected: &str,
) -> Result<(), CsvError> {
    match read_line(r, line_no)? {
        Some(found) if found == expected => Ok(()),
        Some(found) => Err(CsvError::Header { expected: expected.into(), found }),
        None => Err(CsvError::Eof),
    }
}

pub fn parse_f64(field: &str, line: usize) -> Result<f64, CsvError> {
    field.trim().parse().map_err(|_| CsvError::Parse {
        line,
        msg: format!("not a float: `{field}`"),
    })
}

/// Parse a field that may be empty (missing value).
pub fn parse_opt_f64(field: &str, line: usize) -> Result<Option<f64>, CsvError> {
    let t = field.trim();
    if t.is_empty() { Ok(None) } else { parse_f64(t, line).map(Some) }
}

pub fn parse_usize(field: &str, line: usize) -> Result<usize, CsvError> {
    field.trim().parse().map_err(|_| CsvError::Parse {
        line,
        msg: format!("not an index: `{field}`"),
    })
}

pub fn split_fields(line: &str, want: usize, line_no: usize) -> Result<Vec<&str>, CsvError> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != want {
        return Err(CsvError::Parse {
            line: line_no,
            msg: format!("expected {want} fields, found {}", fields.len()),
        });
    }
    Ok(fields)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt_g_matches_c_conventions() {
        assert_eq!(fmt_g(0.0, 12), "0");
        assert_eq!(fmt_g(150.0, 12), "150");
        assert_eq!(fmt_g(2.0, 12), "2");
        assert_eq!(fmt_g(0.002, 12), "0.002");
        assert_eq!(fmt_g(1.59362426004, 12), "1.59362426004");
        assert_eq!(fmt_g(1e-7, 12), "1e-07");
        assert_eq!(fmt_g(-3.25e13, 12), "-3.25e+13");
        assert_eq!(fmt_g(1e11, 12), "100000000000");
        assert_eq!(fmt_g(1.5e15, 12), "1.5e+15");
        assert_eq!(fmt_g(0.999999999999999, 12), "1");
    }

    #[test]
    fn fmt_g_round_trips_to_twelve_digits() {
        for &v in &[1.0 / 3.0, 2489.34917548398, 6.077e-5, -0.405845151377397] {
            let back: f64 = fmt_g(v, 12).parse().unwrap();
            assert!((back - v).abs() <= 5e-12 * v.abs());
        }
    }
}
