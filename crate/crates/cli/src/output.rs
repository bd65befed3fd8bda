use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use lvjump::noise::MergedGrid;

use crate::Failure;

/// 17 significant digits: lossless for f64.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[String]) -> Self {
        Csv {
            text: header.join(",") + "\n",
        }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    pub fn write(&self, path: &Path) -> Result<(), Failure> {
        write_file(path, &self.text)
    }
}

pub fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::bad_input(format!("{}: {e}", path.display())))
}

pub fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_file(path, &text)
}

/// `time,slot_kind,<prefix>_1..` rows for per-species series on a grid;
/// `diverged_at` appends the sentinel row.
pub fn trajectory_csv(
    grid: &MergedGrid,
    prefix: &str,
    series: &[&[f64]],
    diverged_at: Option<f64>,
) -> Csv {
    let mut header = vec!["time".to_string(), "slot_kind".to_string()];
    header.extend((1..=series.len()).map(|i| format!("{prefix}_{i}")));
    let mut csv = Csv::new(&header);
    let len = series.iter().map(|s| s.len()).min().unwrap_or(0);
    let mut line = String::new();
    for (s, slot) in grid.slots().iter().take(len).enumerate() {
        line.clear();
        let _ = write!(line, "{},{}", num(slot.time), slot.kind.as_str());
        for values in series {
            let _ = write!(line, ",{}", num(values[s]));
        }
        csv.text.push_str(&line);
        csv.text.push('\n');
    }
    if let Some(t) = diverged_at {
        let mut fields = vec![num(t), "DIVERGED".to_string()];
        fields.extend(std::iter::repeat_n(String::new(), series.len()));
        csv.row(&fields);
    }
    csv
}
