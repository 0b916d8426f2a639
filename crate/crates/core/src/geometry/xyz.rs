//! ASCII `.xyz` point files: one point per line, three space-separated
//! decimals with 9 significant digits, LF line endings.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use super::{GeometryError, PointCloud};

#[derive(Debug, Error)]
pub enum XyzError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Formats like C's `%.9g`.
pub fn format_sig9(x: f64) -> String {
    const P: i32 = 9;
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= P {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (P - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn to_string(cloud: &PointCloud) -> String {
    let mut out = String::with_capacity(cloud.len() * 36);
    for p in cloud.points() {
        let _ = writeln!(
            out,
            "{} {} {}",
            format_sig9(p[0]),
            format_sig9(p[1]),
            format_sig9(p[2])
        );
    }
    out
}

pub fn parse(text: &str) -> Result<PointCloud, XyzError> {
    let mut pts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut p = [0.0; 3];
        let mut fields = line.split_whitespace();
        for c in p.iter_mut() {
            let f = fields.next().ok_or_else(|| XyzError::Parse {
                line: i + 1,
                msg: "expected three coordinates".into(),
            })?;
            *c = f.parse().map_err(|e| XyzError::Parse {
                line: i + 1,
                msg: format!("bad coordinate `{f}`: {e}"),
            })?;
        }
        if fields.next().is_some() {
            return Err(XyzError::Parse {
                line: i + 1,
                msg: "more than three coordinates".into(),
            });
        }
        pts.push(p);
    }
    Ok(PointCloud::new(pts)?)
}

pub fn write(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<(), XyzError> {
    std::fs::write(path, to_string(cloud))?;
    Ok(())
}

pub fn read(path: impl AsRef<Path>) -> Result<PointCloud, XyzError> {
    parse(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sig9_matches_printf() {
        let cases = [
            (0.288675134594813, "0.288675135"),
            (1.0, "1"),
            (-0.5, "-0.5"),
            (1e-5, "1e-05"),
            (0.0001234, "0.0001234"),
            (123456789.0, "123456789"),
            (1234567890.0, "1.23456789e+09"),
            (-2.5e-7, "-2.5e-07"),
            (0.0, "0"),
        ];
        for (x, s) in cases {
            assert_eq!(format_sig9(x), s, "{x}");
        }
    }

    #[test]
    fn file_layout() {
        let c = PointCloud::new(vec![[0.5, -0.25, 1.0], [0.1, 0.2, 0.3]]).unwrap();
        assert_eq!(to_string(&c), "0.5 -0.25 1\n0.1 0.2 0.3\n");
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(
            parse("1 2\n"),
            Err(XyzError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse("1 2 3\n1 2 x\n"),
            Err(XyzError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse(""),
            Err(XyzError::Geometry(GeometryError::Empty))
        ));
    }

    proptest! {
        #[test]
        fn nine_digits_survive_round_trip(x in -10.0f64..10.0) {
            let back: f64 = format_sig9(x).parse().unwrap();
            prop_assert!((back - x).abs() <= x.abs() * 1e-8 + 1e-300);
        }
    }
}
