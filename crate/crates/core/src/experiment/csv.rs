use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::experiment::sweep::SweepTable;

/// Shortest rendering with 12 significant digits, trailing zeros removed.
pub fn format_float(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let exp = v.abs().log10().floor() as i32;
    if !(-6..=15).contains(&exp) {
        let s = format!("{v:.11e}");
        let (mantissa, e) = s.split_once('e').expect("scientific notation");
        return format!("{}e{e}", trim_zeros(mantissa));
    }
    let decimals = (11 - exp).max(0) as usize;
    trim_zeros(&format!("{v:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn csv_header(table: &SweepTable) -> String {
    let mut cols = vec!["policy".to_string(), "rho".into(), "beta".into(), "eta".into()];
    cols.extend((1..=table.num_types).map(|k| format!("beta_k_{k}")));
    cols.extend((1..=table.num_servers).map(|s| format!("psi_s_{s}")));
    cols.extend(["ci_halfwidth".into(), "runs".into(), "seed".into()]);
    cols.join(",")
}

/// Header plus one line per row. Error rows keep the policy and load and leave the values empty.
pub fn write_csv<W: Write>(table: &SweepTable, mut out: W) -> Result<()> {
    writeln!(out, "{}", csv_header(table))?;
    let width = 4 + table.num_types + table.num_servers + 3;
    for row in &table.rows {
        let mut fields = vec![row.policy.name().to_string(), format_float(row.rho)];
        match &row.result {
            Ok(v) => {
                fields.push(format_float(v.beta));
                fields.push(format_float(v.eta));
                let list = |xs: &Option<Vec<f64>>, n: usize| match xs {
                    Some(xs) => xs.iter().map(|&x| format_float(x)).collect(),
                    None => vec![String::new(); n],
                };
                fields.extend(list(&v.blocking, table.num_types));
                fields.extend(list(&v.idle, table.num_servers));
                fields.push(v.ci_halfwidth.map(format_float).unwrap_or_default());
                fields.push(v.runs.map(|r| r.to_string()).unwrap_or_default());
                fields.push(v.seed.map(|s| s.to_string()).unwrap_or_default());
            }
            Err(_) => fields.resize(width, String::new()),
        }
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

pub fn to_csv_string(table: &SweepTable) -> String {
    let mut buf = Vec::new();
    write_csv(table, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

pub fn emit_csv(table: &SweepTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_csv(table, file)
}
