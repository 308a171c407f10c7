use std::path::Path;

use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "step,wall_seconds,total_loss,mlm_loss,ns_loss,ponder_loss,mlm_acc,ns_acc,examples_per_sec,mean_ponder_steps";

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricsRow {
    pub step: usize,
    pub wall_seconds: f64,
    pub total_loss: f64,
    pub mlm_loss: f64,
    pub ns_loss: f64,
    pub ponder_loss: f64,
    pub mlm_acc: f64,
    pub ns_acc: f64,
    pub examples_per_sec: f64,
    pub mean_ponder_steps: f64,
}

/// Six significant digits, without trailing zeros, switching to exponent
/// notation outside `[1e-5, 1e6)`.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    // rounding can carry into the next decade
    let sci = format!("{x:.5e}");
    let (mantissa, e) = sci.split_once('e').expect("exponent form");
    let e: i32 = e.parse().expect("integer exponent");
    let exp = exp.max(e);
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim(&format!("{x:.decimals$}"))
    } else {
        format!("{}e{e}", trim(mantissa))
    }
}

fn trim(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        let f = format_sig;
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.step,
            f(self.wall_seconds),
            f(self.total_loss),
            f(self.mlm_loss),
            f(self.ns_loss),
            f(self.ponder_loss),
            f(self.mlm_acc),
            f(self.ns_acc),
            f(self.examples_per_sec),
            f(self.mean_ponder_steps)
        )
    }

    pub fn parse(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != 10 {
            return Err(Error::Mismatch(format!(
                "metrics row has {} fields, expected 10",
                fields.len()
            )));
        }
        let bad = |s: &str| Error::Mismatch(format!("bad metrics value {s:?}"));
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(s));
        Ok(Self {
            step: fields[0].parse().map_err(|_| bad(fields[0]))?,
            wall_seconds: num(fields[1])?,
            total_loss: num(fields[2])?,
            mlm_loss: num(fields[3])?,
            ns_loss: num(fields[4])?,
            ponder_loss: num(fields[5])?,
            mlm_acc: num(fields[6])?,
            ns_acc: num(fields[7])?,
            examples_per_sec: num(fields[8])?,
            mean_ponder_steps: num(fields[9])?,
        })
    }
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.to_csv());
        s.push('\n');
    }
    s
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    std::fs::write(path, metrics_csv(rows)).map_err(|e| Error::io(path, e))
}

/// Reads a metrics file, checking the header.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(Error::Mismatch(format!("{}: unexpected header", path.display())));
    }
    lines.map(MetricsRow::parse).collect()
}
