use std::path::Path;

use super::{Algorithm, HarnessError, MeanRow, MetricsRow, ProbeRecord, Result};

const ROW_HEADER: [&str; 9] = ["t", "algo", "trial", "se", "err_s_rel", "precision", "recall", "kappa_proxy", "phase"];

/// 17 significant digits, enough to round-trip any `f64`.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn csv_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Csv { path: path.display().to_string(), message: e.to_string() }
}

fn write_records<I>(path: &Path, header: &[&str], records: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for rec in records {
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::Io { path: path.display().to_string(), source: e })
}

pub fn write_rows_csv(rows: &[MetricsRow], path: &Path) -> Result<()> {
    write_records(
        path,
        &ROW_HEADER,
        rows.iter().map(|r| {
            vec![
                r.t.to_string(),
                r.algo.name().to_string(),
                r.trial.to_string(),
                num(r.se),
                opt(r.err_s_rel),
                num(r.precision),
                num(r.recall),
                opt(r.kappa_proxy),
                r.phase.clone(),
            ]
        }),
    )
}

pub fn write_mean_csv(rows: &[MeanRow], path: &Path) -> Result<()> {
    let header = ["t", "algo", "se", "err_s_rel", "precision", "recall", "kappa_proxy", "phase"];
    write_records(
        path,
        &header,
        rows.iter().map(|r| {
            vec![
                r.t.to_string(),
                r.algo.name().to_string(),
                num(r.se),
                opt(r.err_s_rel),
                num(r.precision),
                num(r.recall),
                opt(r.kappa_proxy),
                r.phase.clone(),
            ]
        }),
    )
}

pub fn write_probes_csv(rows: &[ProbeRecord], path: &Path) -> Result<()> {
    let header = ["t", "algo", "trial", "j", "k", "kappa_proxy", "degenerate"];
    write_records(
        path,
        &header,
        rows.iter().map(|p| {
            vec![
                p.t.to_string(),
                p.algo.name().to_string(),
                p.trial.to_string(),
                p.j.to_string(),
                p.k.to_string(),
                opt(p.value),
                p.degenerate.to_string(),
            ]
        }),
    )
}

/// Parses a file written by [`write_rows_csv`]. `exact_support` is not
/// stored and comes back as `precision == 1 && recall == 1`.
pub fn read_rows_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().collect::<Vec<_>>() != ROW_HEADER {
        return Err(csv_err(path, "unexpected header"));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let f = |i: usize| -> Result<f64> { rec[i].parse::<f64>().map_err(|e| csv_err(path, e)) };
        let of = |i: usize| -> Result<Option<f64>> {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                rec[i].parse::<f64>().map(Some).map_err(|e| csv_err(path, e))
            }
        };
        let algo = match &rec[1] {
            "reprocs" => Algorithm::Reprocs,
            "reprocs-cpca" => Algorithm::ReprocsCpca,
            other => return Err(csv_err(path, format!("unknown algorithm {other}"))),
        };
        let precision = f(5)?;
        let recall = f(6)?;
        out.push(MetricsRow {
            t: rec[0].parse().map_err(|e| csv_err(path, e))?,
            algo,
            trial: rec[2].parse().map_err(|e| csv_err(path, e))?,
            se: f(3)?,
            err_s_rel: of(4)?,
            precision,
            recall,
            kappa_proxy: of(7)?,
            phase: rec[8].to_string(),
            exact_support: precision == 1.0 && recall == 1.0,
        });
    }
    Ok(out)
}
