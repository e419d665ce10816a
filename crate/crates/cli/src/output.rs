//! CSV artifacts with a `#` metadata header, and SVG histograms.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};

use crate::settings::RunConfig;

/// Header lines shared by every file a run writes. The timestamp only
/// appears here, so bodies of identical runs compare equal.
pub fn metadata(cfg: &RunConfig) -> Result<String> {
    let mut out = String::new();
    writeln!(out, "# idcgan {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(out, "# command: {}", cfg.subcommand)?;
    writeln!(out, "# seed: {}", cfg.seed()?)?;
    writeln!(out, "# config_sha256: {}", cfg.hash())?;
    for (k, v) in cfg.entries() {
        writeln!(out, "# config: {k} = {v}")?;
    }
    let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    writeln!(out, "# created_unix: {now}")?;
    Ok(out)
}

/// Accumulates CSV rows in memory and writes header plus body at once.
pub struct CsvOut {
    path: PathBuf,
    writer: csv::Writer<Vec<u8>>,
}

impl CsvOut {
    pub fn new(path: PathBuf, columns: &[&str]) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(columns)?;
        Ok(Self { path, writer })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub fn finish(self, cfg: &RunConfig) -> Result<PathBuf> {
        let body = self.writer.into_inner().context("flushing CSV")?;
        let mut bytes = metadata(cfg)?.into_bytes();
        bytes.extend(body);
        write_file(&self.path, &bytes)?;
        Ok(self.path)
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// Shortest round-trip formatting.
pub fn num(v: f64) -> String {
    format!("{v}")
}

/// Two overlaid frequency histograms on shared bin edges.
pub fn histogram_svg(title: &str, edges: &[f64], a: (&str, &[f64]), b: (&str, &[f64])) -> String {
    const W: f64 = 480.0;
    const H: f64 = 240.0;
    const PAD: f64 = 30.0;
    let top = a.1.iter().chain(b.1).cloned().fold(0.0, f64::max).max(1e-12);
    let n = a.1.len().max(1) as f64;
    let bw = (W - 2.0 * PAD) / n;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<text x="{PAD}" y="16">{title}</text>"#);
    for ((name, freq), colour) in [a, b].into_iter().zip(["#1f77b4", "#d62728"]) {
        for (i, &f) in freq.iter().enumerate() {
            let h = f / top * (H - 2.0 * PAD);
            let x = PAD + i as f64 * bw;
            let _ = writeln!(
                s,
                r#"<rect x="{x:.2}" y="{:.2}" width="{bw:.2}" height="{h:.2}" fill="{colour}" fill-opacity="0.45"><title>{name}</title></rect>"#,
                H - PAD - h
            );
        }
    }
    let lo = edges.first().copied().unwrap_or(0.0);
    let hi = edges.last().copied().unwrap_or(1.0);
    let _ = writeln!(s, r#"<line x1="{PAD}" y1="{y}" x2="{x2}" y2="{y}" stroke="black"/>"#, y = H - PAD, x2 = W - PAD);
    let _ = writeln!(s, r#"<text x="{PAD}" y="{}">{lo}</text>"#, H - PAD + 14.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{hi}</text>"#, W - PAD, H - PAD + 14.0);
    let _ = writeln!(s, r##"<text x="{}" y="16" text-anchor="end"><tspan fill="#1f77b4">{}</tspan> / <tspan fill="#d62728">{}</tspan></text>"##, W - PAD, a.0, b.0);
    s.push_str("</svg>\n");
    s
}
