//! Plain-text, CSV and JSON renderings of an [`EvalReport`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{EvalReport, Series};

/// Column-aligned text table.
struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new<S: Into<String>>(headers: impl IntoIterator<Item = S>) -> Self {
        Table {
            headers: headers.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn render(&self, out: &mut String) {
        let mut widths: Vec<usize> = self.headers.iter().map(|h| h.chars().count()).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let line = |cells: &[String], out: &mut String| {
            let mut text = String::new();
            for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
                if i > 0 {
                    text.push_str("  ");
                }
                // first column left-aligned, numbers right-aligned
                if i == 0 {
                    let _ = write!(text, "{cell:<w$}");
                } else {
                    let _ = write!(text, "{cell:>w$}");
                }
            }
            out.push_str(text.trim_end());
            out.push('\n');
        };
        line(&self.headers, out);
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        line(&rule, out);
        for row in &self.rows {
            line(row, out);
        }
    }

    fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut wtr = csv::Writer::from_path(path)?;
        wtr.write_record(&self.headers)?;
        for row in &self.rows {
            wtr.write_record(row)?;
        }
        wtr.flush()
    }
}

fn num(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into())
}

fn all_series(report: &EvalReport) -> Vec<Series> {
    let mut s: Vec<Series> = report.spearman.overall.iter().map(|o| o.series).collect();
    s.sort();
    s
}

fn unit_means_table(report: &EvalReport) -> Table {
    let series = all_series(report);
    let mut table = Table::new(
        std::iter::once("unit".to_string()).chain(series.iter().map(|s| s.label().to_string())),
    );
    let mut by_unit: BTreeMap<u8, BTreeMap<Series, Option<f64>>> = BTreeMap::new();
    for u in &report.spearman.units {
        by_unit
            .entry(u.unit)
            .or_default()
            .insert(u.series, u.mean_rho_over_years);
    }
    for (unit, cols) in &by_unit {
        let mut row = vec![unit.to_string()];
        row.extend(series.iter().map(|s| num(cols.get(s).copied().flatten())));
        table.push(row);
    }
    let overall: BTreeMap<Series, _> = report
        .spearman
        .overall
        .iter()
        .map(|o| (o.series, o))
        .collect();
    let mut mean_row = vec!["All (mean of units)".to_string()];
    mean_row.extend(series.iter().map(|s| num(overall[s].mean_unit_rho)));
    table.push(mean_row);
    let mut pooled_row = vec!["All (pooled)".to_string()];
    pooled_row.extend(series.iter().map(|s| num(overall[s].pooled_rho)));
    table.push(pooled_row);
    table
}

fn unit_detail_table(report: &EvalReport) -> Table {
    let mut table = Table::new([
        "series",
        "unit",
        "panel",
        "mean_rho_years",
        "years_used",
        "pooled_rho",
        "pooled_n",
    ]);
    for u in &report.spearman.units {
        table.push(vec![
            u.series.label().into(),
            u.unit.to_string(),
            u.panel.to_string(),
            num(u.mean_rho_over_years),
            u.years_used.to_string(),
            num(u.pooled_rho),
            u.pooled_n.to_string(),
        ]);
    }
    table
}

fn overall_table(report: &EvalReport) -> Table {
    let mut table = Table::new([
        "series",
        "pooled_rho",
        "pooled_n",
        "mean_unit_rho",
        "units_used",
    ]);
    for o in &report.spearman.overall {
        table.push(vec![
            o.series.label().into(),
            num(o.pooled_rho),
            o.pooled_n.to_string(),
            num(o.mean_unit_rho),
            o.units_used.to_string(),
        ]);
    }
    table
}

fn cells_table(report: &EvalReport) -> Table {
    let mut table = Table::new(["series", "unit", "year", "n", "rho"]);
    for c in &report.spearman.cells {
        table.push(vec![
            c.series.label().into(),
            c.unit.to_string(),
            c.year.to_string(),
            c.n.to_string(),
            num(Some(c.rho)),
        ]);
    }
    table
}

fn skipped_table(report: &EvalReport) -> Table {
    let mut table = Table::new(["series", "unit", "year", "n", "reason"]);
    for s in &report.spearman.skipped {
        table.push(vec![
            s.series.label().into(),
            s.unit.to_string(),
            s.year
                .map(|y| y.to_string())
                .unwrap_or_else(|| "all".into()),
            s.n.to_string(),
            s.reason.clone(),
        ]);
    }
    table
}

fn mad_summary_table(report: &EvalReport) -> Table {
    let mut table = Table::new([
        "strategy",
        "panel",
        "weighted_mad",
        "unweighted_mad",
        "profiles",
        "occurrences",
    ]);
    for m in &report.consistency {
        table.push(vec![
            m.strategy.to_string(),
            m.panel
                .map(|p| p.to_string())
                .unwrap_or_else(|| "all".into()),
            num(m.table.weighted_mean),
            num(m.table.unweighted_mean),
            m.table.rows.len().to_string(),
            m.table
                .rows
                .iter()
                .map(|r| r.weight)
                .sum::<u64>()
                .to_string(),
        ]);
    }
    table
}

fn mad_rows_table(report: &EvalReport) -> Table {
    let mut table = Table::new([
        "strategy", "panel", "profile", "weight", "obs_1", "obs_2", "obs_3", "obs_4", "mad",
    ]);
    for m in &report.consistency {
        for r in &m.table.rows {
            let mut row = vec![
                m.strategy.to_string(),
                m.panel
                    .map(|p| p.to_string())
                    .unwrap_or_else(|| "all".into()),
                r.profile.to_string(),
                r.weight.to_string(),
            ];
            row.extend(r.observed_pct.iter().map(|v| format!("{v:.1}")));
            row.push(format!("{:.1}", r.mad));
            table.push(row);
        }
    }
    table
}

fn profiles_table(report: &EvalReport) -> Table {
    let mut table = Table::new(["strategy", "panel", "rank", "profile", "count"]);
    for p in &report.profiles {
        for (i, prof) in p.profiles.iter().enumerate() {
            table.push(vec![
                p.strategy.to_string(),
                p.panel.to_string(),
                (i + 1).to_string(),
                format!(
                    "{}{}",
                    prof.quantized,
                    if prof.off_total { " (!)" } else { "" }
                ),
                prof.count.to_string(),
            ]);
        }
    }
    table
}

pub fn render_text(report: &EvalReport) -> String {
    let mut out = String::new();
    let section = |title: &str, table: Table, out: &mut String| {
        out.push_str(title);
        out.push('\n');
        if table.rows.is_empty() {
            out.push_str("(none)\n");
        } else {
            table.render(out);
        }
        out.push('\n');
    };
    section(
        "Spearman correlation with departmental mean (per unit, mean over years)",
        unit_means_table(report),
        &mut out,
    );
    section(
        "Spearman correlation per unit",
        unit_detail_table(report),
        &mut out,
    );
    section(
        "Spearman correlation overall",
        overall_table(report),
        &mut out,
    );
    section("Skipped correlation cells", skipped_table(report), &mut out);
    section(
        "Mean absolute deviation of stated vs observed",
        mad_summary_table(report),
        &mut out,
    );

    for table in &report.profiles {
        let mut t = Table::new(["rank", "profile", "count"]);
        for (i, p) in table.profiles.iter().enumerate() {
            t.push(vec![
                (i + 1).to_string(),
                format!("{}{}", p.quantized, if p.off_total { " (!)" } else { "" }),
                p.count.to_string(),
            ]);
        }
        section(
            &format!(
                "Most common profiles: {} panel {}",
                table.strategy, table.panel
            ),
            t,
            &mut out,
        );
    }

    let mut flags = Table::new(["strategy", "iterations", "usable", "flags"]);
    for f in &report.flag_counts {
        let detail: Vec<String> = f.flags.iter().map(|(k, v)| format!("{k}={v}")).collect();
        flags.push(vec![
            f.strategy.to_string(),
            f.iterations.to_string(),
            f.usable.to_string(),
            if detail.is_empty() {
                "-".into()
            } else {
                detail.join(" ")
            },
        ]);
    }
    section("Iterations and flags", flags, &mut out);

    let mut excl = Table::new(["article", "strategy", "flagged_iterations"]);
    for e in &report.exclusions {
        excl.push(vec![
            e.article_id.clone(),
            e.strategy.to_string(),
            e.flagged_iterations.to_string(),
        ]);
    }
    section("Excluded articles", excl, &mut out);

    if !report.notes.is_empty() {
        out.push_str("Notes\n");
        for n in &report.notes {
            let _ = writeln!(out, "- {n}");
        }
    }
    out
}

/// Writes `report.json`, `report.txt` and one CSV per table into `dir`.
/// Returns the paths written.
pub fn write_report_files(report: &EvalReport, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let json_path = dir.join("report.json");
    let mut json = serde_json::to_string_pretty(report).map_err(std::io::Error::other)?;
    json.push('\n');
    std::fs::write(&json_path, json)?;
    written.push(json_path);

    let text_path = dir.join("report.txt");
    std::fs::write(&text_path, render_text(report))?;
    written.push(text_path);

    let tables = [
        ("spearman_units_mean.csv", unit_means_table(report)),
        ("spearman_units.csv", unit_detail_table(report)),
        ("spearman_overall.csv", overall_table(report)),
        ("spearman_cells.csv", cells_table(report)),
        ("spearman_skipped.csv", skipped_table(report)),
        ("mad_summary.csv", mad_summary_table(report)),
        ("mad_profiles.csv", mad_rows_table(report)),
        ("profiles.csv", profiles_table(report)),
    ];
    for (name, table) in tables {
        let path = dir.join(name);
        table.write_csv(&path)?;
        written.push(path);
    }
    Ok(written)
}
