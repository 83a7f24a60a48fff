//! Parsers for the compact argument forms (`rate:0.5`, `0.1:1.2:24`,
//! `d=100,s=3`).

use std::path::Path;

use imcid::inference::DeltaRule;
use imcid::DgpConfig;

use crate::{CliError, CliResult};

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn number<T: std::str::FromStr>(what: &str, text: &str) -> CliResult<T> {
    text.trim()
        .parse()
        .map_err(|_| usage(format!("invalid {what}: {text:?}")))
}

pub fn delta_rule(text: &str) -> CliResult<DeltaRule> {
    let t = text.trim();
    if t.eq_ignore_ascii_case("data-driven") {
        return Ok(DeltaRule::DataDriven);
    }
    if let Some(c) = t.strip_prefix("rate:") {
        return Ok(DeltaRule::Rate {
            c: number("bandwidth constant", c)?,
        });
    }
    Ok(DeltaRule::Fixed {
        value: number("bandwidth", t)?,
    })
}

/// `min:max:points`.
pub fn grid(text: &str) -> CliResult<(f64, f64, usize)> {
    let parts: Vec<&str> = text.split(':').collect();
    let [lo, hi, k] = parts.as_slice() else {
        return Err(usage(format!(
            "grid must look like min:max:points, got {text:?}"
        )));
    };
    let lo: f64 = number("grid minimum", lo)?;
    let hi: f64 = number("grid maximum", hi)?;
    let k: usize = number("grid size", k)?;
    if !(lo > 0.0) || !(hi >= lo) || !hi.is_finite() || k == 0 || (k > 1 && hi == lo) {
        return Err(usage(format!(
            "grid needs 0 < min < max and points >= 1, got {text:?}"
        )));
    }
    Ok((lo, hi, k))
}

/// Applies `key=value` overrides (`n`, `d`, `s`, `rho`, `beta1`) to a DGP.
pub fn apply_cell(dgp: &mut DgpConfig, text: &str) -> CliResult<()> {
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| usage(format!("cell entries look like key=value, got {item:?}")))?;
        match key.trim() {
            "n" => dgp.n = number("n", value)?,
            "d" => dgp.d = number("d", value)?,
            "s" => dgp.s = number("s", value)?,
            "rho" => dgp.rho = number("rho", value)?,
            "beta1" => dgp.beta1 = number("beta1", value)?,
            other => return Err(usage(format!("unknown cell key {other:?}"))),
        }
    }
    Ok(())
}

/// Reads a contrast vector: one row of numbers, optionally after a header.
pub fn contrast_file(path: &Path) -> CliResult<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|source| {
        CliError::Core(imcid::Error::Io {
            path: path.to_path_buf(),
            source,
        })
    })?;
    let rows: Vec<&str> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect();
    let parse_row = |row: &str| -> Option<Vec<f64>> {
        row.split(',')
            .map(|c| c.trim().parse::<f64>().ok())
            .collect()
    };
    match rows.as_slice() {
        [row] => parse_row(row),
        [_header, row] => parse_row(row),
        _ => None,
    }
    .ok_or_else(|| usage(format!("{} must hold one row of numbers", path.display())))
}
