//! Report serialization: a fixed-header CSV with 17-significant-digit
//! numbers, so reruns with the same seed produce byte-identical files.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};

use crate::experiments::ResultRow;

pub const HEADER: &str = "experiment,model_id,algorithm,policy,N,mode,kl,kl_bound,tv,chi2,\
                          ess_min_inf,ess_min_2,assumption_ok,eps_minorization,runtime_ms,seed";

fn number(cell: Option<f64>) -> String {
    match cell {
        Some(v) => format!("{v:.16e}"),
        None => String::new(),
    }
}

fn flag(cell: Option<bool>) -> String {
    match cell {
        Some(true) => "true".to_string(),
        Some(false) => "false".to_string(),
        None => String::new(),
    }
}

/// Renders rows to CSV text with `\n` line endings.
pub fn render_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for row in rows {
        let cells = [
            row.experiment.to_string(),
            row.model_id.clone(),
            row.algorithm.clone(),
            row.policy.clone(),
            row.n.to_string(),
            row.mode.to_string(),
            number(row.kl),
            number(row.kl_bound),
            number(row.tv),
            number(row.chi2),
            number(row.ess_min_inf),
            number(row.ess_min_2),
            flag(row.assumption_ok),
            number(row.eps_minorization),
            number(row.runtime_ms),
            row.seed.to_string(),
        ];
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Writes rows to `path`, creating parent directories as needed.
pub fn write_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("could not create {}", parent.display()))?;
        }
    }
    let mut file = std::fs::File::create(path)
        .with_context(|| format!("could not create {}", path.display()))?;
    file.write_all(render_csv(rows).as_bytes())
        .with_context(|| format!("could not write {}", path.display()))?;
    Ok(())
}
