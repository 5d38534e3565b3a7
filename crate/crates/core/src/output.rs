//! Text artifact writers: CSV with 9 significant digits and ASCII PGM
//! heatmaps.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::ArrayView2;

use crate::error::{Error, Result};

/// Formats like C's `%.9g`.
pub fn fmt_g9(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        let mantissa = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (8 - exp) as usize;
        trim_fraction(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Row-major CSV, no header, LF endings.
pub fn matrix_to_csv(m: ArrayView2<'_, f64>) -> String {
    let mut out = String::with_capacity(m.len() * 12);
    for row in m.rows() {
        let mut first = true;
        for &v in row {
            if !first {
                out.push(',');
            }
            first = false;
            out.push_str(&fmt_g9(v));
        }
        out.push('\n');
    }
    out
}

/// ASCII "P2" greymap, min-max scaled to 0..=255 per matrix. A constant
/// matrix maps to all zeros.
pub fn matrix_to_pgm(m: ArrayView2<'_, f64>) -> String {
    let (lo, hi) = m.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let span = hi - lo;
    let mut out = String::new();
    let _ = writeln!(out, "P2\n{} {}\n255", m.ncols(), m.nrows());
    for row in m.rows() {
        let line: Vec<String> = row
            .iter()
            .map(|&v| {
                let level = if span > 0.0 {
                    ((v - lo) / span * 255.0).round()
                } else {
                    0.0
                };
                (level as u32).min(255).to_string()
            })
            .collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
        }
    }
    fs::write(path, contents).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}
