//! On-disk formats.
//!
//! * System CSV: header `f1..fd,b[,label]`, one row per equation.
//! * Solutions sidecar: one comma-separated solution per line, line `j` is class `j`, no header.
//! * Trace JSON-Lines: a header object `{"meta": ...}` followed by one step object per line.
//! * Summary CSV: `iteration,err_0..err_n`, iteration 0 being the initial iterates.
//! * Aggregate CSV: `iteration` then `median_i,q25_i,q75_i` for each iterate.
//!
//! Floats are written with Rust's shortest round-trip representation, so
//! files read back bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use mrk_core::{AggregateSeries, ErrorSeries, LinearSystem, RowMatrix, StepRecord, Trace, TraceMetadata};

fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

/// `dir/name.csv` -> `dir/name.solutions.csv`
pub fn default_solutions_path(system_path: &Path) -> PathBuf {
    let stem = system_path.file_stem().and_then(|s| s.to_str()).unwrap_or("system");
    system_path.with_file_name(format!("{stem}.solutions.csv"))
}

pub fn write_system_csv(system: &LinearSystem, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let d = system.dim();
    let mut header: Vec<String> = (1..=d).map(|j| format!("f{j}")).collect();
    header.push("b".into());
    if system.labels().is_some() {
        header.push("label".into());
    }
    w.write_record(&header)?;
    for l in 0..system.nrows() {
        let mut rec: Vec<String> = system.row(l).iter().map(|&v| fmt_f64(v)).collect();
        rec.push(fmt_f64(system.rhs_entry(l)));
        if let Some(labels) = system.labels() {
            rec.push(labels[l].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_solutions(solutions: &[Vec<f64>], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    for s in solutions {
        let line: Vec<String> = s.iter().map(|&v| fmt_f64(v)).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Raw contents of a system CSV.
pub struct SystemTable {
    pub matrix: RowMatrix,
    pub rhs: Vec<f64>,
    pub labels: Option<Vec<usize>>,
}

pub fn read_system_csv(path: &Path) -> Result<SystemTable> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let header = r.headers()?.clone();
    let cols: Vec<&str> = header.iter().collect();
    let b_col = cols
        .iter()
        .position(|&c| c == "b")
        .with_context(|| format!("{}: header has no `b` column", path.display()))?;
    let label_col = cols.iter().position(|&c| c == "label");
    if b_col == 0
        || cols[..b_col]
            .iter()
            .enumerate()
            .any(|(j, c)| *c != format!("f{}", j + 1))
    {
        bail!("{}: expected header f1..fd,b[,label], found {:?}", path.display(), cols);
    }
    let d = b_col;
    let mut data = Vec::new();
    let mut rhs = Vec::new();
    let mut labels = label_col.map(|_| Vec::new());
    for (line, rec) in r.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: record {}", path.display(), line + 1))?;
        let parse = |j: usize| -> Result<f64> {
            let cell = rec.get(j).unwrap_or("");
            cell.trim()
                .parse::<f64>()
                .with_context(|| format!("{}: row {}, column {}: {cell:?}", path.display(), line + 2, j + 1))
        };
        for j in 0..d {
            data.push(parse(j)?);
        }
        rhs.push(parse(b_col)?);
        if let (Some(labels), Some(c)) = (labels.as_mut(), label_col) {
            let cell = rec.get(c).unwrap_or("");
            labels.push(
                cell.trim()
                    .parse::<usize>()
                    .with_context(|| format!("{}: row {}: bad label {cell:?}", path.display(), line + 2))?,
            );
        }
    }
    let rows = rhs.len();
    Ok(SystemTable {
        matrix: RowMatrix::from_row_major(rows, d, data)?,
        rhs,
        labels,
    })
}

pub fn read_solutions(path: &Path) -> Result<Vec<Vec<f64>>> {
    let f = File::open(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .with_context(|| format!("{}: line {}", path.display(), n + 1))?;
        out.push(v);
    }
    Ok(out)
}

/// Loads a system file and, when it exists, its solutions sidecar.
///
/// An explicit `solutions` path must exist; the default sidecar is optional.
pub fn load_system(path: &Path, solutions: Option<&Path>) -> Result<LinearSystem> {
    let table = read_system_csv(path)?;
    let sols = match solutions {
        Some(p) => Some(read_solutions(p)?),
        None => {
            let p = default_solutions_path(path);
            if p.exists() {
                Some(read_solutions(&p)?)
            } else {
                None
            }
        }
    };
    let system = LinearSystem::new(table.matrix, table.rhs)?;
    let labels = table.labels;
    // solutions are only meaningful against labelled rows
    let sols = if labels.is_some() { sols } else { None };
    Ok(system.with_ground_truth(labels, sols)?)
}

/// First line of a trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub meta: TraceMetadata,
    pub initial_iterates: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_errors: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labeling: Option<Vec<usize>>,
}

/// One step line: the step record, the errors after it and optionally the iterates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    #[serde(flatten)]
    pub step: StepRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub err: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<Vec<f64>>>,
}

pub fn write_trace_jsonl<W: Write>(trace: &Trace, mut w: W) -> Result<()> {
    let header = TraceHeader {
        meta: trace.metadata.clone(),
        initial_iterates: trace.initial_iterates.clone(),
        initial_errors: trace.errors.as_ref().map(|e| e.at(0).to_vec()),
        labeling: trace.errors.as_ref().map(|e| e.labeling.clone()),
    };
    serde_json::to_writer(&mut w, &header)?;
    writeln!(w)?;
    for (k, step) in trace.steps.iter().enumerate() {
        let line = TraceLine {
            step: step.clone(),
            err: trace.errors.as_ref().map(|e| e.at(k + 1).to_vec()),
            x: trace.iterate_history.as_ref().map(|h| h[k + 1].clone()),
        };
        serde_json::to_writer(&mut w, &line)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_trace_jsonl(trace: &Trace, path: &Path) -> Result<()> {
    write_trace_jsonl(trace, create(path)?)
}

pub fn read_trace_jsonl(path: &Path) -> Result<(TraceHeader, Vec<TraceLine>)> {
    let f = File::open(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = BufReader::new(f).lines();
    let first = lines
        .next()
        .with_context(|| format!("{}: empty trace file", path.display()))??;
    let header: TraceHeader = serde_json::from_str(&first).with_context(|| format!("{}: header", path.display()))?;
    let mut steps = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        steps.push(serde_json::from_str(&line).with_context(|| format!("{}: line {}", path.display(), n + 2))?);
    }
    Ok((header, steps))
}

pub fn write_summary_csv<W: Write>(errors: &ErrorSeries, w: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    let mut header = vec!["iteration".to_string()];
    header.extend((0..errors.num_iterates).map(|i| format!("err_{i}")));
    w.write_record(&header)?;
    for (k, row) in errors.rows().enumerate() {
        let mut rec = vec![k.to_string()];
        rec.extend(row.iter().map(|&v| fmt_f64(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_summary_csv(errors: &ErrorSeries, path: &Path) -> Result<()> {
    write_summary_csv(errors, create(path)?)
}

pub fn write_aggregate_csv<W: Write>(agg: &AggregateSeries, w: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    let k = agg.num_iterates();
    let mut header = vec!["iteration".to_string()];
    for i in 0..k {
        header.push(format!("median_{i}"));
        header.push(format!("q25_{i}"));
        header.push(format!("q75_{i}"));
    }
    w.write_record(&header)?;
    for step in 0..agg.len() {
        let mut rec = vec![step.to_string()];
        for i in 0..k {
            rec.push(fmt_f64(agg.median[step][i]));
            rec.push(fmt_f64(agg.q25[step][i]));
            rec.push(fmt_f64(agg.q75[step][i]));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_aggregate_csv(agg: &AggregateSeries, path: &Path) -> Result<()> {
    write_aggregate_csv(agg, create(path)?)
}

/// Reads a numeric CSV with a header row; returns the header and the rows.
pub fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let header = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push(
            rec.iter()
                .map(|c| c.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .with_context(|| format!("{}: non-numeric cell", path.display()))?,
        );
    }
    Ok((header, rows))
}
