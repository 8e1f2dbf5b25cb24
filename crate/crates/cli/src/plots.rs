//! Gnuplot scripts with the sample rows inlined as data blocks.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum PlotError {
    #[error("cannot access {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0} has no data rows")]
    Empty(PathBuf),
    #[error("{0} has no header line")]
    Malformed(PathBuf),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> PlotError + '_ {
    move |source| PlotError::Io { path: path.to_path_buf(), source }
}

struct Csv {
    columns: Vec<String>,
    rows: Vec<String>,
}

impl Csv {
    fn col(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name).map(|i| i + 1)
    }
}

fn datablock(csv: &Csv) -> String {
    let mut s = String::from("set datafile separator \",\"\n$data << EOD\n");
    for r in &csv.rows {
        s.push_str(r);
        s.push('\n');
    }
    s.push_str("EOD\n");
    s
}

/// Reads a fitted value like `metrics.kernel.exponent` from a `summary.json` next to the records.
fn summary_value(records: &Path, pointer: &str) -> Option<f64> {
    let text = std::fs::read_to_string(records.with_file_name("summary.json")).ok()?;
    let v: serde_json::Value = serde_json::from_str(&text).ok()?;
    v.pointer(pointer)?.as_f64()
}

fn line_plot(csv: &Csv, x: usize, ys: &[(usize, &str)], title: &str, xlabel: &str, log: bool) -> String {
    let mut s = datablock(csv);
    let _ = writeln!(s, "set title \"{title}\"\nset xlabel \"{xlabel}\"\nset key outside");
    if log {
        s.push_str("set logscale xy\n");
    }
    let series: Vec<String> = ys.iter().map(|(c, name)| format!("$data using {x}:{c} with linespoints title \"{name}\"")).collect();
    let _ = writeln!(s, "plot {}", series.join(", \\\n     "));
    s
}

/// Writes plot scripts for a `records.csv` into `out_dir` and returns their paths.
///
/// Which scripts appear depends on the columns: energy against `t`, distance against
/// `t`, log-log kernel decay, CC-ball volumes, or a generic series plot.
pub fn emit_plots(records: &Path, out_dir: &Path) -> Result<Vec<PathBuf>, PlotError> {
    let text = std::fs::read_to_string(records).map_err(io(records))?;
    let mut lines = text.lines();
    let header = lines.next().filter(|h| !h.trim().is_empty()).ok_or_else(|| PlotError::Malformed(records.to_path_buf()))?;
    let csv = Csv {
        columns: header.split(',').map(str::to_string).collect(),
        rows: lines.filter(|l| !l.trim().is_empty()).map(str::to_string).collect(),
    };
    if csv.rows.is_empty() {
        return Err(PlotError::Empty(records.to_path_buf()));
    }

    let mut scripts: Vec<(&str, String)> = Vec::new();
    if let (Some(t), Some(eh)) = (csv.col("t"), csv.col("E_H")) {
        let mut ys = vec![(eh, "E_H")];
        ys.extend(csv.col("E_R").map(|c| (c, "E_R")));
        scripts.push(("energy.gp", line_plot(&csv, t, &ys, "energy", "t", false)));
        if let Some(d) = csv.col("distance") {
            scripts.push(("distance.gp", line_plot(&csv, t, &[(d, "map distance")], "distance between flows", "t", false)));
        }
    }
    if let (Some(t), Some(sup)) = (csv.col("t"), csv.col("sup")) {
        let mut s = line_plot(&csv, t, &[(sup, "sup u")], "on-diagonal heat kernel decay", "t", true);
        if let Some(slope) = summary_value(records, "/metrics/kernel/exponent") {
            let _ = writeln!(s, "set label 1 \"fitted slope = {slope:.4}\" at graph 0.05, graph 0.1\nreplot");
        }
        scripts.push(("kernel_decay.gp", s));
    }
    if let (Some(d), Some(v)) = (csv.col("delta"), csv.col("volume")) {
        let mut ys = vec![(v, "volume")];
        ys.extend(csv.col("coarse_volume").map(|c| (c, "grid-point volume")));
        let mut s = line_plot(&csv, d, &ys, "CC ball volume", "delta", true);
        if let Some(slope) = summary_value(records, "/metrics/cc_ball/exponent") {
            let _ = writeln!(s, "set label 1 \"fitted exponent = {slope:.4}\" at graph 0.05, graph 0.1\nreplot");
        }
        scripts.push(("cc_ball.gp", s));
    }
    if scripts.is_empty() {
        let ys: Vec<(usize, &str)> = csv.columns.iter().enumerate().skip(1).map(|(i, c)| (i + 1, c.as_str())).collect();
        scripts.push(("series.gp", line_plot(&csv, 1, &ys, "samples", &csv.columns[0], false)));
    }

    std::fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let mut paths = Vec::new();
    for (name, body) in scripts {
        let p = out_dir.join(name);
        std::fs::write(&p, body).map_err(io(&p))?;
        paths.push(p);
    }
    Ok(paths)
}
