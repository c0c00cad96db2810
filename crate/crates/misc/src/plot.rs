//! Self-contained matplotlib scripts: log-log error vs model work, one series
//! per method, plus the complexity-bound guide curve.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, ensure, Context};
use misc_core::rates::{predicted_error, ComplexityParams};

use crate::study::{ConvergenceRecord, COLUMNS};

/// Read a study CSV, naming any missing column; an empty file is an error.
pub fn read_study_csv(path: &Path) -> anyhow::Result<Vec<ConvergenceRecord>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = r.headers().with_context(|| format!("reading {}", path.display()))?.clone();
    ensure!(!headers.is_empty(), "{}: empty CSV", path.display());
    for col in COLUMNS {
        if !headers.iter().any(|h| h == col) {
            bail!("{}: missing column `{col}`", path.display());
        }
    }
    let records = r
        .deserialize()
        .collect::<Result<Vec<ConvergenceRecord>, _>>()
        .with_context(|| format!("parsing {}", path.display()))?;
    ensure!(!records.is_empty(), "{}: no records", path.display());
    Ok(records)
}

fn py_list(xs: impl Iterator<Item = f64>) -> String {
    let items: Vec<String> = xs.map(|x| format!("{x:e}")).collect();
    format!("[{}]", items.join(", "))
}

/// Guide `C W^-zeta (log W)^{(zeta+1)(z-1)}` over the a-priori work range,
/// anchored at its last point (or the last record when absent).
fn guide(records: &[ConvergenceRecord], params: &ComplexityParams) -> Option<(Vec<f64>, Vec<f64>)> {
    let apriori: Vec<&ConvergenceRecord> = records.iter().filter(|r| r.method == "misc-apriori").collect();
    let pool: Vec<&ConvergenceRecord> = if apriori.is_empty() { records.iter().collect() } else { apriori };
    let lo = pool.iter().map(|r| r.work_model).fold(f64::INFINITY, f64::min);
    let anchor = pool.iter().filter(|r| r.abs_error > 0.0).max_by(|a, b| a.work_model.total_cmp(&b.work_model))?;
    let hi = anchor.work_model;
    if !(lo > 1.0 && hi > lo) {
        return None;
    }
    let c = anchor.abs_error / predicted_error(hi, params);
    let ws: Vec<f64> = (0..=32).map(|k| lo * (hi / lo).powf(k as f64 / 32.0)).collect();
    let es = ws.iter().map(|&w| c * predicted_error(w, params)).collect();
    Some((ws, es))
}

pub fn plot_script(records: &[ConvergenceRecord], params: Option<&ComplexityParams>, title: &str, image: &str) -> anyhow::Result<String> {
    ensure!(!records.is_empty(), "no records to plot");
    let mut series: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for r in records {
        series.entry(&r.method).or_default().push((r.work_model, r.abs_error));
    }
    let mut s = String::new();
    writeln!(s, "#!/usr/bin/env python3")?;
    writeln!(s, "import matplotlib")?;
    writeln!(s, "matplotlib.use(\"Agg\")")?;
    writeln!(s, "import matplotlib.pyplot as plt\n")?;
    writeln!(s, "series = {{")?;
    for (name, pts) in &series {
        let pts: Vec<(f64, f64)> = pts.iter().copied().filter(|p| p.1 > 0.0).collect();
        writeln!(
            s,
            "    {name:?}: ({}, {}),",
            py_list(pts.iter().map(|p| p.0)),
            py_list(pts.iter().map(|p| p.1))
        )?;
    }
    writeln!(s, "}}\n")?;
    writeln!(s, "fig, ax = plt.subplots(figsize=(7, 5))")?;
    writeln!(s, "for name, (w, e) in series.items():")?;
    writeln!(s, "    if name.startswith(\"sgsc@\"):")?;
    writeln!(s, "        ax.loglog(w, e, \":\", color=\"0.7\", linewidth=0.8)")?;
    writeln!(s, "    else:")?;
    writeln!(s, "        ax.loglog(w, e, \"o-\", label=name)")?;
    if let Some(p) = params {
        if let Some((ws, es)) = guide(records, p) {
            let label = if p.zfrak > 1 {
                format!("W^-{} (log W)^{}", p.zeta, (p.zeta + 1.0) * (p.zfrak as f64 - 1.0))
            } else {
                format!("W^-{}", p.zeta)
            };
            writeln!(s, "ax.loglog({}, {}, \"k--\", label={label:?})", py_list(ws.into_iter()), py_list(es.into_iter()))?;
        }
    }
    writeln!(s, "ax.set_xlabel(\"work (model)\")")?;
    writeln!(s, "ax.set_ylabel(\"|error|\")")?;
    writeln!(s, "ax.set_title({title:?})")?;
    writeln!(s, "ax.grid(True, which=\"both\", alpha=0.3)")?;
    writeln!(s, "ax.legend()")?;
    writeln!(s, "fig.tight_layout()")?;
    writeln!(s, "fig.savefig({image:?}, dpi=150)")?;
    Ok(s)
}

/// Script for `csv` written to `out`; the image goes next to it as `.png`.
pub fn emit_plot(csv: &Path, out: &Path, params: Option<&ComplexityParams>) -> anyhow::Result<()> {
    let records = read_study_csv(csv)?;
    let image = out.with_extension("png");
    let title = csv.file_stem().map_or("study".into(), |s| s.to_string_lossy().into_owned());
    let script = plot_script(&records, params, &title, &image.to_string_lossy())?;
    std::fs::write(out, script).with_context(|| format!("writing {}", out.display()))
}
