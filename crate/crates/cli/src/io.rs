//! Spectrum and table files.
//!
//! Format: UTF-8, LF line endings, `#` comment lines, a header line, then
//! comma-separated rows printed with nine significant digits (C `%.9g`).

use anyhow::{anyhow, bail, Context, Result};
use nanocavity::Spectrum;
use std::fmt::Write as _;
use std::path::Path;

pub const SPECTRUM_HEADER: &str = "wavelength_nm,reflectance";

/// `x` formatted like C's `printf("%.9g", x)`.
pub fn fmt_g9(x: f64) -> String {
    fmt_g(x, 9)
}

/// C `%.{precision}g`: shortest of fixed or exponent form by the C rule, trailing zeros removed.
pub fn fmt_g(x: f64, precision: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let p = precision.max(1);
    // Rounding to p significant digits decides the exponent, exactly as printf does.
    let sci = format!("{:.*e}", p - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= p as i32 {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    } else {
        let decimals = (p as i32 - 1 - exp) as usize;
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

pub fn read_spectrum(path: &Path) -> Result<Spectrum> {
    let text = std::fs::read_to_string(path).with_context(|| format!("{}", path.display()))?;
    parse_spectrum(&text).with_context(|| format!("{}", path.display()))
}

pub fn parse_spectrum(text: &str) -> Result<Spectrum> {
    let mut meta = Vec::new();
    let mut header_seen = false;
    let (mut wavelengths, mut reflectance) = (Vec::new(), Vec::new());
    for (i, raw) in text.split('\n').enumerate() {
        let lineno = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if let Some(comment) = line.strip_prefix('#') {
            meta.push(comment.strip_prefix(' ').unwrap_or(comment).to_string());
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        if !header_seen {
            if line.trim() != SPECTRUM_HEADER {
                bail!("line {lineno}: expected header '{SPECTRUM_HEADER}', found '{}'", line.trim());
            }
            header_seen = true;
            continue;
        }
        let (w, r) = parse_row(line).map_err(|e| anyhow!("line {lineno}: {e}"))?;
        if let Some(&prev) = wavelengths.last() {
            if !(w > prev) {
                bail!("line {lineno}: wavelength {w} is not greater than the previous {prev}; wavelengths must increase");
            }
        }
        wavelengths.push(w);
        reflectance.push(r);
    }
    if !header_seen {
        bail!("missing header '{SPECTRUM_HEADER}'");
    }
    let mut spectrum = Spectrum::new(wavelengths, reflectance)?;
    spectrum.meta = meta;
    Ok(spectrum)
}

fn parse_row(line: &str) -> std::result::Result<(f64, f64), String> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 2 {
        return Err(format!("expected 2 comma-separated fields, found {}", fields.len()));
    }
    let mut out = [0.0; 2];
    for (slot, field) in out.iter_mut().zip(&fields) {
        let v: f64 = field.parse().map_err(|_| format!("'{field}' is not a number"))?;
        if !v.is_finite() {
            return Err(format!("non-finite value '{field}'"));
        }
        *slot = v;
    }
    Ok((out[0], out[1]))
}

pub fn format_spectrum(spectrum: &Spectrum) -> String {
    let rows: Vec<Vec<f64>> = spectrum.iter().map(|(w, r)| vec![w, r]).collect();
    format_table(&spectrum.meta, &["wavelength_nm", "reflectance"], &rows)
}

pub fn write_spectrum(path: &Path, spectrum: &Spectrum) -> Result<()> {
    write_text(path, &format_spectrum(spectrum))
}

/// Comment lines, header, then one `%.9g` row per entry.
pub fn format_table(meta: &[String], header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for m in meta {
        // Embedded newlines would break the line-oriented format.
        for part in m.split('\n') {
            let _ = writeln!(out, "# {part}");
        }
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|&v| fmt_g9(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn write_table(path: &Path, meta: &[String], header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    write_text(path, &format_table(meta, header, rows))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("{}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_printf_g9() {
        // Reference strings produced by C printf("%.9g").
        let cases: &[(f64, &str)] = &[
            (0.0, "0"),
            (1.0, "1"),
            (-1.0, "-1"),
            (1388.8, "1388.8"),
            (1390.0015, "1390.0015"),
            (0.1, "0.1"),
            (1e-5, "1e-05"),
            (1.23456789012e-5, "1.23456789e-05"),
            (123456789.0, "123456789"),
            (1234567890.0, "1.23456789e+09"),
            (0.0001, "0.0001"),
            (0.00012345678901, "0.000123456789"),
            (9.9999999995, "10"),
            (999999999.5, "1e+09"),
            (5e-324, "4.94065646e-324"),
            (f64::MAX, "1.79769313e+308"),
            (0.005, "0.005"),
            (2.5e-10, "2.5e-10"),
            (1e100, "1e+100"),
            (-0.000123, "-0.000123"),
            (123.456, "123.456"),
        ];
        for &(x, want) in cases {
            assert_eq!(fmt_g9(x), want, "{x:e}");
        }
    }

    #[test]
    fn comment_lines_become_meta() {
        let mut text = String::from("# run 4\n#tight\nwavelength_nm,reflectance\n");
        for i in 0..16 {
            text.push_str(&format!("{},{}\n", 1300 + i, 0.01 * i as f64));
        }
        let s = parse_spectrum(&text).unwrap();
        assert_eq!(s.meta, vec!["run 4".to_string(), "tight".to_string()]);
        assert_eq!(s.len(), 16);
    }

    #[test]
    fn bad_field_names_line() {
        let text = "wavelength_nm,reflectance\n1300,0.1\n1301,abc\n";
        let e = parse_spectrum(text).unwrap_err().to_string();
        assert!(e.starts_with("line 3:"), "{e}");
        let e = parse_spectrum("wavelength_nm,reflectance\n1300,inf\n").unwrap_err().to_string();
        assert!(e.contains("line 2") && e.contains("non-finite"), "{e}");
    }
}
