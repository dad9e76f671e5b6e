//! Results CSV: fixed column order, 6-significant-digit numbers, LF endings.

use std::io::{self, Write};
use std::path::Path;

use crate::config::ConfigError;
use metasim::{Mechanism, PerformanceRecord, SizeKind};

pub const RESULT_HEADER: &str = "mechanism,size_kind,K,n,theta,tau2,pC,sigma2,M,\
bias_tau2_dl,bias_tau2_mp,bias_tau2_reml,\
bias_theta_dl,bias_theta_mp,bias_theta_reml,bias_theta_ssw,\
coverage_dl,coverage_mp,coverage_reml,coverage_ssw,reml_nonconv";

/// Six significant digits. Fixed notation while the decimal exponent stays
/// in [-4, 5], scientific `d.dddddE+XX` outside. Locale independent.
pub fn fmt_g6(x: f64) -> String {
    if x == 0.0 {
        return "0.00000".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("float in scientific notation");
    let e: i32 = exp.parse().expect("exponent");
    if (-4..=5).contains(&e) {
        let decimals = (5 - e).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{}E{}{:02}", mantissa, if e < 0 { '-' } else { '+' }, e.abs())
    }
}

pub fn write_results<W: Write>(records: &[PerformanceRecord], out: &mut W) -> io::Result<()> {
    writeln!(out, "{RESULT_HEADER}")?;
    for r in records {
        let sigma2 = r.sigma2.map(fmt_g6).unwrap_or_default();
        let biases_tau2: Vec<String> = (0..3).map(|i| fmt_g6(r.bias_tau2(i))).collect();
        let biases_theta: Vec<String> = (0..4).map(|i| fmt_g6(r.bias_theta(i))).collect();
        let coverages: Vec<String> = r.coverage.iter().map(|&c| fmt_g6(c)).collect();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.mechanism.label(),
            r.size_kind.label(),
            r.k,
            r.center,
            fmt_g6(r.theta),
            fmt_g6(r.tau2),
            fmt_g6(r.p_c),
            sigma2,
            r.m,
            biases_tau2.join(","),
            biases_theta.join(","),
            coverages.join(","),
            r.reml_nonconv,
        )?;
    }
    Ok(())
}

pub fn write_results_file(records: &[PerformanceRecord], path: &Path) -> io::Result<()> {
    let mut buf = Vec::new();
    write_results(records, &mut buf)?;
    std::fs::write(path, buf)
}

/// One parsed CSV line, as written by `write_results`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub mechanism: Mechanism,
    pub size_kind: SizeKind,
    pub k: u32,
    pub n: u32,
    pub theta: f64,
    pub tau2: f64,
    pub p_c: f64,
    pub sigma2: Option<f64>,
    pub m: u64,
    pub bias_tau2: [f64; 3],
    pub bias_theta: [f64; 4],
    pub coverage: [f64; 4],
    pub reml_nonconv: u64,
}

pub fn read_results(path: &Path) -> Result<Vec<CsvRow>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == RESULT_HEADER => {}
        other => {
            return Err(ConfigError::Parse {
                line: 1,
                msg: format!("unexpected results header {other:?}"),
            })
        }
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            parse_row(l).map_err(|msg| ConfigError::Parse { line: i + 2, msg })
        })
        .collect()
}

fn parse_row(line: &str) -> Result<CsvRow, String> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 21 {
        return Err(format!("expected 21 fields, got {}", fields.len()));
    }
    let num = |i: usize| -> Result<f64, String> {
        fields[i].parse().map_err(|_| format!("bad number `{}`", fields[i]))
    };
    let int = |i: usize| -> Result<u64, String> {
        fields[i].parse().map_err(|_| format!("bad integer `{}`", fields[i]))
    };
    Ok(CsvRow {
        mechanism: fields[0].parse::<Mechanism>()?,
        size_kind: fields[1].parse::<SizeKind>()?,
        k: int(2)? as u32,
        n: int(3)? as u32,
        theta: num(4)?,
        tau2: num(5)?,
        p_c: num(6)?,
        sigma2: if fields[7].is_empty() { None } else { Some(num(7)?) },
        m: int(8)?,
        bias_tau2: [num(9)?, num(10)?, num(11)?],
        bias_theta: [num(12)?, num(13)?, num(14)?, num(15)?],
        coverage: [num(16)?, num(17)?, num(18)?, num(19)?],
        reml_nonconv: int(20)?,
    })
}
