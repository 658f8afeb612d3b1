//! Panel and label CSV formats plus output helpers.
//!
//! Panel CSV: one row per individual, the series id first and the counts at
//! t = 1..T after it. Empty trailing cells mark a shorter series. A header
//! row is optional: a first row whose count cells are all non-numeric.
//!
//! Label CSV: `id,label` rows with an optional header.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use inarmix::{CountSeries, PanelData};
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

fn open_csv(path: &Path) -> CliResult<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|source| CliError::Unreadable {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(file))
}

fn csv_error(path: &Path, err: csv::Error) -> CliError {
    let line = err.position().map_or(0, |p| p.line() as usize);
    match err.into_kind() {
        csv::ErrorKind::Io(source) => CliError::Unreadable {
            path: path.to_path_buf(),
            source,
        },
        other => CliError::parse(path, line, format!("{other:?}")),
    }
}

/// Reads a panel. With `complete_only`, series shorter than the longest are
/// dropped.
pub fn read_panel(path: &Path, complete_only: bool) -> CliResult<PanelData> {
    let mut reader = open_csv(path)?;
    let mut ids = Vec::new();
    let mut series = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(idx + 1, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let id = record.get(0).unwrap_or_default().to_string();
        let cells: Vec<&str> = record.iter().skip(1).collect();
        let filled: Vec<&&str> = cells.iter().filter(|c| !c.is_empty()).collect();
        let is_header = idx == 0 && !filled.is_empty() && filled.iter().all(|c| c.parse::<u64>().is_err());
        if is_header {
            continue;
        }
        let end = cells.iter().rposition(|c| !c.is_empty()).map_or(0, |p| p + 1);
        let mut values = Vec::with_capacity(end);
        for (t, cell) in cells[..end].iter().enumerate() {
            if cell.is_empty() {
                return Err(CliError::parse(
                    path,
                    line,
                    format!("series `{id}` has an empty cell at t={} before later counts", t + 1),
                ));
            }
            let v = cell.parse::<u64>().map_err(|_| {
                CliError::parse(
                    path,
                    line,
                    format!("`{cell}` is not a non-negative integer (series `{id}`)"),
                )
            })?;
            values.push(v);
        }
        if values.is_empty() {
            return Err(CliError::parse(path, line, format!("series `{id}` has no counts")));
        }
        if id.is_empty() {
            return Err(CliError::parse(path, line, "missing series id"));
        }
        ids.push(id);
        series.push(CountSeries::new(values)?);
    }
    if series.is_empty() {
        return Err(CliError::parse(path, 0, "no series found"));
    }
    if complete_only {
        let full = series.iter().map(CountSeries::len).max().unwrap_or(0);
        let keep: Vec<usize> = (0..series.len()).filter(|&i| series[i].len() == full).collect();
        let dropped = series.len() - keep.len();
        if dropped > 0 {
            log::info!("dropped {dropped} incomplete series");
        }
        ids = keep.iter().map(|&i| ids[i].clone()).collect();
        series = keep.iter().map(|&i| series[i].clone()).collect();
    }
    Ok(PanelData::with_ids(ids, series)?)
}

/// Reads `id,label` rows. Labels may be any strings; they are returned as
/// given, keyed by id in file order.
pub fn read_labels(path: &Path) -> CliResult<Vec<(String, String)>> {
    let mut reader = open_csv(path)?;
    let mut out: Vec<(String, String)> = Vec::new();
    let mut seen = BTreeMap::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(idx + 1, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        if record.len() < 2 {
            return Err(CliError::parse(path, line, "expected `id,label`"));
        }
        let (id, label) = (record[0].to_string(), record[1].to_string());
        if idx == 0 && id.eq_ignore_ascii_case("id") {
            continue;
        }
        if seen.insert(id.clone(), line).is_some() {
            return Err(CliError::parse(path, line, format!("duplicate id `{id}`")));
        }
        out.push((id, label));
    }
    if out.is_empty() {
        return Err(CliError::parse(path, 0, "no labels found"));
    }
    Ok(out)
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|source| CliError::Write {
        path: dir.to_path_buf(),
        source,
    })
}

pub fn write_string(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serialisable output");
    text.push('\n');
    write_string(path, &text)
}

/// Writes rows as CSV; every row must already be formatted.
pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<()> {
    let err = |e: csv::Error| CliError::Write {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    };
    let mut w = csv::WriterBuilder::new().flexible(true).from_path(path).map_err(err)?;
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_panel(path: &Path, panel: &PanelData) -> CliResult<()> {
    let header: Vec<String> = std::iter::once("id".to_string())
        .chain((1..=panel.max_len()).map(|t| format!("t{t}")))
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = panel.ids().iter().zip(panel.series()).map(|(id, s)| {
        let mut row = vec![id.clone()];
        row.extend(s.values().iter().map(u64::to_string));
        row.resize(panel.max_len() + 1, String::new());
        row
    });
    write_csv(path, &header, rows)
}

pub fn write_labels(path: &Path, ids: &[String], labels: &[usize]) -> CliResult<()> {
    write_csv(
        path,
        &["id", "label"],
        ids.iter().zip(labels).map(|(id, l)| vec![id.clone(), l.to_string()]),
    )
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub schema_version: u32,
    pub command: &'a str,
    pub tool_version: &'a str,
    pub seed: Option<u64>,
    pub files: Vec<String>,
}

/// Records what a command wrote into `dir/manifest.json`.
pub fn write_manifest(dir: &Path, command: &str, seed: Option<u64>, files: &[PathBuf]) -> CliResult<()> {
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        command,
        tool_version: env!("CARGO_PKG_VERSION"),
        seed,
        files: files
            .iter()
            .map(|p| {
                p.file_name()
                    .map_or_else(String::new, |n| n.to_string_lossy().into_owned())
            })
            .collect(),
    };
    write_json(&dir.join("manifest.json"), &manifest)
}

/// Formats a float for CSV output with full round-trip precision.
pub fn num(v: f64) -> String {
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(contents: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("panel.csv");
        fs::write(&path, contents).unwrap();
        (dir, path)
    }

    #[test]
    fn ragged_panel_with_header() {
        let (_d, p) = tmp("id,t1,t2,t3\na,1,2,3\nb,4,5,\n");
        let panel = read_panel(&p, false).unwrap();
        assert_eq!(panel.ids(), &["a", "b"]);
        assert_eq!(panel.get(1).values(), &[4, 5]);
        let complete = read_panel(&p, true).unwrap();
        assert_eq!(complete.ids(), &["a"]);
    }

    #[test]
    fn headerless_panel() {
        let (_d, p) = tmp("7,0,1\n8,2,2\n");
        let panel = read_panel(&p, false).unwrap();
        assert_eq!(panel.ids(), &["7", "8"]);
    }

    #[test]
    fn bad_cells_are_parse_errors() {
        for text in ["a,1,2\nb,1,x\n", "a,1,,2\n", "a,1,-2\n", "a,,\n"] {
            let (_d, p) = tmp(text);
            let err = read_panel(&p, false).unwrap_err();
            assert_eq!(err.exit_code(), 4, "{text:?}: {err}");
        }
    }

    #[test]
    fn missing_file_is_unreadable() {
        let err = read_panel(Path::new("/nonexistent/panel.csv"), false).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn panel_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        let panel = PanelData::with_ids(
            vec!["x".into(), "y".into()],
            vec![
                CountSeries::new(vec![1, 2, 3]).unwrap(),
                CountSeries::new(vec![0]).unwrap(),
            ],
        )
        .unwrap();
        write_panel(&path, &panel).unwrap();
        assert_eq!(read_panel(&path, false).unwrap(), panel);
    }
}
