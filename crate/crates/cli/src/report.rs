//! Report rows, CSV round-tripping, SVG summary and atomic emission.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use streamsim_core::allocator::AdjustAction;
use streamsim_core::{PipelineMode, SimTrace};

use crate::experiment::CalibrationRow;

pub const REPORT_HEADER: &str =
    "scenario,mode,throughput,normalized_throughput,throughput_per_cost,gen_util,train_util,max_staleness,status";

/// Documents how the cost column is computed.
pub const COST_NOTE: &str = "# throughput in samples/s; throughput_per_cost = throughput / (ceil(gen_gpus/8) * gen_machine_cost + ceil(train_gpus/8) * train_machine_cost); a colocated pool is counted once; normalized_throughput is relative to the first row";

#[derive(Debug, Clone, PartialEq)]
pub enum RowStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub scenario: String,
    pub mode: String,
    pub throughput: f64,
    pub normalized_throughput: f64,
    pub throughput_per_cost: f64,
    pub gen_util: f64,
    pub train_util: f64,
    pub max_staleness: usize,
    pub status: RowStatus,
}

impl ReportRow {
    pub fn failed(scenario: &str, mode: PipelineMode, msg: String) -> Self {
        Self {
            scenario: scenario.to_string(),
            mode: mode.to_string(),
            throughput: 0.0,
            normalized_throughput: 0.0,
            throughput_per_cost: 0.0,
            gen_util: 0.0,
            train_util: 0.0,
            max_staleness: 0,
            status: RowStatus::Failed(msg),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == RowStatus::Ok
    }
}

/// Controller and allocation state of one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocationRow {
    pub iteration: usize,
    pub x: u32,
    pub y: u32,
    pub t_gen: f64,
    pub t_train: f64,
    pub delta: f64,
    pub action: AdjustAction,
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub title: String,
    pub rows: Vec<ReportRow>,
    /// Trace of the first seed of each successful scenario.
    pub traces: Vec<(String, SimTrace)>,
    pub allocation: Vec<(String, AllocationRow)>,
}

impl Report {
    pub fn new(title: &str) -> Self {
        Self {
            title: title.to_string(),
            ..Self::default()
        }
    }

    pub fn any_failed(&self) -> bool {
        self.rows.iter().any(|r| !r.is_ok())
    }

    /// Normalizes throughput to the first row.
    pub fn normalize(&mut self) {
        let base = self.rows.first().map(|r| r.throughput).unwrap_or(0.0);
        for r in &mut self.rows {
            r.normalized_throughput = if r.is_ok() && base > 0.0 {
                r.throughput / base
            } else {
                0.0
            };
        }
    }

    pub fn row(&self, scenario: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.scenario == scenario)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{COST_NOTE}\n{REPORT_HEADER}\n");
        for r in &self.rows {
            let status = match &r.status {
                RowStatus::Ok => "ok".to_string(),
                RowStatus::Failed(m) => format!("failed: {}", sanitize(m)),
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.scenario,
                r.mode,
                r.throughput,
                r.normalized_throughput,
                r.throughput_per_cost,
                r.gen_util,
                r.train_util,
                r.max_staleness,
                status
            );
        }
        out
    }

    pub fn allocation_csv(&self) -> String {
        let mut out = String::from("scenario,iteration,x,y,T_gen,T_train,delta,action\n");
        for (id, a) in &self.allocation {
            let _ = writeln!(
                out,
                "{id},{},{},{},{:.3},{:.3},{:.3},{}",
                a.iteration,
                a.x,
                a.y,
                a.t_gen,
                a.t_train,
                a.delta,
                a.action.as_str()
            );
        }
        out
    }

    /// Bar chart of normalized throughput.
    pub fn to_svg(&self) -> String {
        const W: f64 = 640.0;
        const H: f64 = 360.0;
        const LEFT: f64 = 60.0;
        const BOTTOM: f64 = 300.0;
        const TOP: f64 = 40.0;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{} normalized throughput</text>"#,
            W / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{LEFT}" y1="{BOTTOM}" x2="{}" y2="{BOTTOM}" stroke="black"/>"#,
            W - 20.0
        );
        let _ = writeln!(
            s,
            r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{BOTTOM}" stroke="black"/>"#
        );
        let max = self.rows.iter().map(|r| r.normalized_throughput).fold(1.0, f64::max);
        let n = self.rows.len();
        if n > 0 {
            let slot = (W - 20.0 - LEFT) / n as f64;
            let bar = slot * 0.6;
            for (i, r) in self.rows.iter().enumerate() {
                let h = (BOTTOM - TOP) * r.normalized_throughput / max;
                let x = LEFT + slot * i as f64 + (slot - bar) / 2.0;
                let fill = if r.is_ok() { "#4878a8" } else { "#c04040" };
                let _ = writeln!(
                    s,
                    r#"<rect class="bar" x="{x:.1}" y="{:.1}" width="{bar:.1}" height="{h:.1}" fill="{fill}"/>"#,
                    BOTTOM - h
                );
                let _ = writeln!(
                    s,
                    r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{:.2}</text>"#,
                    x + bar / 2.0,
                    BOTTOM - h - 4.0,
                    r.normalized_throughput
                );
                let _ = writeln!(
                    s,
                    r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="10">{}</text>"#,
                    x + bar / 2.0,
                    BOTTOM + 16.0,
                    escape(&r.scenario)
                );
            }
        } else {
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle" fill="gray">no scenarios</text>"#,
                W / 2.0,
                (TOP + BOTTOM) / 2.0
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn sanitize(msg: &str) -> String {
    msg.replace([',', '\n', '\r'], ";")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Parses rows written by [`Report::to_csv`].
pub fn parse_report_csv(text: &str) -> Result<Vec<ReportRow>, String> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    match lines.next() {
        Some(h) if h == REPORT_HEADER => {}
        other => return Err(format!("unexpected header {other:?}")),
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.splitn(9, ',').collect();
            if f.len() != 9 {
                return Err(format!("row {}: expected 9 fields", i + 1));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| format!("row {}: {e}", i + 1));
            let status = match f[8] {
                "ok" => RowStatus::Ok,
                s => RowStatus::Failed(
                    s.strip_prefix("failed: ")
                        .ok_or_else(|| format!("row {}: bad status `{s}`", i + 1))?
                        .to_string(),
                ),
            };
            Ok(ReportRow {
                scenario: f[0].to_string(),
                mode: f[1].to_string(),
                throughput: num(f[2])?,
                normalized_throughput: num(f[3])?,
                throughput_per_cost: num(f[4])?,
                gen_util: num(f[5])?,
                train_util: num(f[6])?,
                max_staleness: f[7].parse().map_err(|e| format!("row {}: {e}", i + 1))?,
                status,
            })
        })
        .collect()
}

pub fn calibration_csv(rows: &[CalibrationRow]) -> String {
    let mut out = String::from("alpha,target_recall,sigma,recall,saturated\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.4},{}",
            r.alpha, r.target_recall, r.sigma, r.recall, r.saturated
        );
    }
    out
}

/// Writes `contents` to `path` through a temporary sibling and a rename, so
/// readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> io::Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let mut tmp_name = name.to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}

/// Writes `report.csv`, `allocation.csv`, `summary.svg` and one
/// `trace_<scenario>.csv` / `iterations_<scenario>.csv` pair per scenario.
/// Returns the files written.
pub fn emit_report(report: &Report, out_dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut files = vec![
        (out_dir.join("report.csv"), report.to_csv()),
        (out_dir.join("allocation.csv"), report.allocation_csv()),
        (out_dir.join("summary.svg"), report.to_svg()),
    ];
    for (id, trace) in &report.traces {
        files.push((out_dir.join(format!("trace_{id}.csv")), trace.events_csv()));
        files.push((out_dir.join(format!("iterations_{id}.csv")), trace.iterations_csv()));
    }
    for (path, text) in &files {
        write_atomic(path, text)?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, thr: f64) -> ReportRow {
        ReportRow {
            scenario: id.into(),
            mode: "fully_async".into(),
            throughput: thr,
            normalized_throughput: 0.0,
            throughput_per_cost: thr / 3.0,
            gen_util: 0.91,
            train_util: 0.5,
            max_staleness: 1,
            status: RowStatus::Ok,
        }
    }

    #[test]
    fn csv_round_trip() {
        let mut r = Report::new("t");
        r.rows = vec![row("a", 1.234_567_890_123), row("b", 2.0 / 3.0)];
        r.rows.push(ReportRow::failed(
            "c",
            PipelineMode::OneStepAsync,
            "bad, worse\nbroken".into(),
        ));
        r.normalize();
        assert_eq!(r.rows[0].normalized_throughput, 1.0);
        let back = parse_report_csv(&r.to_csv()).unwrap();
        assert_eq!(back[..2], r.rows[..2]);
        assert_eq!(back[2].status, RowStatus::Failed("bad; worse;broken".into()));
    }

    #[test]
    fn empty_report() {
        let r = Report::new("empty");
        let csv = r.to_csv();
        assert!(parse_report_csv(&csv).unwrap().is_empty());
        let svg = r.to_svg();
        assert!(svg.starts_with("<svg") && !svg.contains("class=\"bar\""));
    }

    #[test]
    fn svg_has_one_bar_per_row() {
        let mut r = Report::new("ablation");
        r.rows = (0..4).map(|i| row(&format!("r{i}"), 1.0 + i as f64)).collect();
        r.normalize();
        assert_eq!(r.to_svg().matches("class=\"bar\"").count(), 4);
        assert!(!r.to_svg().contains("href"));
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = std::env::temp_dir().join(format!("streamsim-report-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let p = dir.join("x.csv");
        write_atomic(&p, "one").unwrap();
        write_atomic(&p, "two").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        assert!(!dir.join("x.csv.tmp").exists());
        fs::remove_dir_all(&dir).unwrap();
    }
}
