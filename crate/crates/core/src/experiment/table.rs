use std::path::Path;

use super::sweep::SweepRow;
use crate::error::{Error, Result};

const SIGNIFICANT_DIGITS: usize = 12;

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Internal(format!("{other:?}")),
    }
}

/// Rounds to 12 significant digits and prints the shortest string that reads
/// back to the rounded value, switching to exponent form outside
/// `[1e-4, 1e12)` like C's `%g`. Missing values print as `NaN`.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().unwrap_or(x);
    let mag = rounded.abs();
    if rounded == 0.0 {
        "0".into()
    } else if !(1e-4..1e12).contains(&mag) {
        format!("{rounded:e}")
    } else {
        rounded.to_string()
    }
}

/// Column names for a market with `types` consumer types.
pub fn header(types: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "price",
        "delta",
        "sigma",
        "status",
        "regime",
        "lower_threshold",
        "upper_threshold",
        "lambda",
        "r_so",
        "r_noins",
        "r_ins",
        "social_so",
        "social_noins",
        "social_ins",
        "social_reduction_pct",
        "total_premium",
        "profit_ins",
        "total_user_cost_noins",
        "total_user_cost_ins",
        "total_user_reduction_pct",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for prefix in [
        "cost_noins",
        "cost_ins_own",
        "cost_ins_none",
        "user_reduction_pct",
        "insurance_benefit_pct",
    ] {
        h.extend((1..=types).map(|k| format!("{prefix}_{k}")));
    }
    h.push("oracle_r_ins".into());
    h.push("oracle_total_premium".into());
    h
}

fn record(row: &SweepRow) -> Vec<String> {
    let num = |x: f64| format_number(x);
    let opt = |x: Option<f64>| format_number(x.unwrap_or(f64::NAN));
    let mut r = vec![
        num(row.point.price),
        opt(row.point.delta),
        opt(row.point.sigma),
        row.status.as_str().to_string(),
        row.regime.map(|g| g.as_str()).unwrap_or("none").to_string(),
        num(row.lower_threshold),
        num(row.upper_threshold),
        num(row.lambda),
        num(row.r_so),
        num(row.r_noins),
        num(row.r_ins),
        num(row.social_so),
        num(row.social_noins),
        num(row.social_ins),
        num(row.social_reduction_pct),
        num(row.total_premium),
        num(row.profit_ins),
        num(row.total_user_cost_noins),
        num(row.total_user_cost_ins),
        num(row.total_user_reduction_pct),
    ];
    for col in [
        &row.cost_noins,
        &row.cost_ins_own,
        &row.cost_ins_none,
        &row.user_reduction_pct,
        &row.insurance_benefit_pct,
    ] {
        r.extend(col.iter().map(|x| num(*x)));
    }
    r.push(num(row.oracle_r_ins));
    r.push(num(row.oracle_total_premium));
    r
}

pub fn emit_csv(rows: &[SweepRow], types: usize, path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(csv_err)?;
    w.write_record(header(types)).map_err(csv_err)?;
    for row in rows {
        w.write_record(record(row)).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Header and string cells of a result file.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let head = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(csv_err)?.iter().map(String::from).collect());
    }
    Ok((head, rows))
}
