//! CSV files exchanged by the command-line tools.
//!
//! Every file has a mandatory header row. Floats are written in shortest
//! round-trip form, so reading a file back reproduces the values exactly.

use std::fs::File;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::estimate::EstimateRecord;
use crate::compare::MethodComparison;
use crate::metrics::{EventKind, StreamErrors};
use crate::sim::CorruptionScript;
use crate::stream::{GroundTruth, SampleStream};

pub const STREAM_HEADER: [&str; 3] = ["sample_index", "time_s", "current_A"];
pub const TRUTH_HEADER: [&str; 4] = ["sample_index", "speed_rpm", "position_rad", "pulse_flag"];
pub const ESTIMATES_HEADER: [&str; 4] = ["sample_index", "pulse_flag", "speed_rpm", "position_rad"];
pub const MANIFEST_HEADER: [&str; 2] = ["kind", "time_s"];
pub const ERRORS_HEADER: [&str; 10] = [
    "name",
    "real_speed_rpm",
    "mean_error_rpm",
    "mean_error_pct",
    "deviation_rpm",
    "deviation_pct",
    "mean_position_error_rad",
    "truth_pulses",
    "detected_pulses",
    "count_error",
];
pub const COMPARISON_HEADER: [&str; 7] = [
    "method",
    "event",
    "time_s",
    "outcome",
    "detected_pulses",
    "truth_pulses",
    "count_error",
];

struct Table {
    path: PathBuf,
    reader: csv::Reader<File>,
}

impl Table {
    fn open(path: &Path, header: &[&str]) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        let got = reader.headers().map_err(|e| csv_error(path, e))?.clone();
        if got.iter().ne(header.iter().copied()) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                msg: format!("expected header {}, found {}", header.join(","), got.iter().collect::<Vec<_>>().join(",")),
            });
        }
        Ok(Table {
            path: path.to_path_buf(),
            reader,
        })
    }

    /// Each data row with its line number.
    fn rows(&mut self) -> impl Iterator<Item = Result<Row>> + '_ {
        let path = self.path.clone();
        self.reader.records().map(move |r| {
            let rec = r.map_err(|e| csv_error(&path, e))?;
            let line = rec.position().map_or(0, |p| p.line());
            Ok(Row {
                path: path.clone(),
                line,
                rec,
            })
        })
    }
}

struct Row {
    path: PathBuf,
    line: u64,
    rec: csv::StringRecord,
}

impl Row {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line: self.line,
            msg: msg.into(),
        }
    }

    fn field(&self, i: usize, name: &str) -> Result<&str> {
        self.rec.get(i).ok_or_else(|| self.err(format!("missing column {name}")))
    }

    fn f64(&self, i: usize, name: &str) -> Result<f64> {
        let s = self.field(i, name)?;
        let v: f64 = s.parse().map_err(|_| self.err(format!("{name}: '{s}' is not a number")))?;
        if !v.is_finite() {
            return Err(self.err(format!("{name}: '{s}' is not finite")));
        }
        Ok(v)
    }

    fn opt_f64(&self, i: usize, name: &str) -> Result<Option<f64>> {
        if self.field(i, name)?.is_empty() {
            Ok(None)
        } else {
            self.f64(i, name).map(Some)
        }
    }

    fn index(&self, i: usize, expected: usize) -> Result<usize> {
        let s = self.field(i, "sample_index")?;
        let v: usize = s
            .parse()
            .map_err(|_| self.err(format!("sample_index: '{s}' is not a non-negative integer")))?;
        if v != expected {
            return Err(self.err(format!("sample_index {v} out of sequence, expected {expected}")));
        }
        Ok(v)
    }

    fn flag(&self, i: usize, name: &str) -> Result<bool> {
        match self.field(i, name)? {
            "0" => Ok(false),
            "1" => Ok(true),
            s => Err(self.err(format!("{name}: '{s}' must be 0 or 1"))),
        }
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        kind => Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: format!("{kind:?}"),
        },
    }
}

fn writer(path: &Path, header: &[&str]) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    Ok(w)
}

fn finish(path: &Path, mut w: csv::Writer<File>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

pub fn write_stream(path: impl AsRef<Path>, stream: &SampleStream) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path, &STREAM_HEADER)?;
    for (i, x) in stream.current.iter().enumerate() {
        w.write_record([i.to_string(), stream.time(i).to_string(), x.to_string()])
            .map_err(|e| csv_error(path, e))?;
    }
    finish(path, w)
}

/// Read a stream; the sampling rate is recovered from the time column,
/// which must advance by a constant step.
pub fn read_stream(path: impl AsRef<Path>) -> Result<SampleStream> {
    let path = path.as_ref();
    let mut table = Table::open(path, &STREAM_HEADER)?;
    let mut times = Vec::new();
    let mut current = Vec::new();
    let mut lines = Vec::new();
    for row in table.rows() {
        let row = row?;
        row.index(0, current.len())?;
        times.push(row.f64(1, "time_s")?);
        current.push(row.f64(2, "current_A")?);
        lines.push(row.line);
    }
    if current.len() < 2 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: lines.last().copied().unwrap_or(1),
            msg: "a stream needs at least two samples to fix the sampling rate".into(),
        });
    }
    let last = current.len() - 1;
    let span = times[last] - times[0];
    if !(span > 0.0) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: lines[last],
            msg: "time_s does not increase".into(),
        });
    }
    // the writer emits i/fs, so the rate is exact to well under a micro-hertz
    let fs = ((last as f64 / span) * 1e6).round() / 1e6;
    for (i, &t) in times.iter().enumerate() {
        let expected = i as f64 / fs;
        if (t - expected).abs() > 1e-6 / fs + 1e-9 * expected.abs() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lines[i],
                msg: format!("time_s {t} breaks the constant step of 1/{fs} s"),
            });
        }
    }
    Ok(SampleStream::new(fs, current))
}

pub fn write_truth(path: impl AsRef<Path>, truth: &GroundTruth) -> Result<()> {
    let path = path.as_ref();
    let flags = truth.pulse_flags();
    let mut w = writer(path, &TRUTH_HEADER)?;
    for i in 0..truth.len() {
        w.write_record([
            i.to_string(),
            truth.speed_rpm[i].to_string(),
            truth.position_rad[i].to_string(),
            flag(flags[i]).to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    finish(path, w)
}

pub fn read_truth(path: impl AsRef<Path>) -> Result<GroundTruth> {
    let path = path.as_ref();
    let mut table = Table::open(path, &TRUTH_HEADER)?;
    let mut truth = GroundTruth {
        speed_rpm: Vec::new(),
        position_rad: Vec::new(),
        pulse_indices: Vec::new(),
    };
    for row in table.rows() {
        let row = row?;
        let i = row.index(0, truth.len())?;
        truth.speed_rpm.push(row.f64(1, "speed_rpm")?);
        truth.position_rad.push(row.f64(2, "position_rad")?);
        if row.flag(3, "pulse_flag")? {
            truth.pulse_indices.push(i);
        }
    }
    Ok(truth)
}

pub fn write_estimates(path: impl AsRef<Path>, records: &[EstimateRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path, &ESTIMATES_HEADER)?;
    for r in records {
        w.write_record([
            r.sample_index.to_string(),
            flag(r.pulse).to_string(),
            r.speed_rpm.map(|v| v.to_string()).unwrap_or_default(),
            r.position_rad.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    finish(path, w)
}

pub fn read_estimates(path: impl AsRef<Path>) -> Result<Vec<EstimateRecord>> {
    let path = path.as_ref();
    let mut table = Table::open(path, &ESTIMATES_HEADER)?;
    let mut out: Vec<EstimateRecord> = Vec::new();
    for row in table.rows() {
        let row = row?;
        out.push(EstimateRecord {
            sample_index: row.index(0, out.len())?,
            pulse: row.flag(1, "pulse_flag")?,
            speed_rpm: row.opt_f64(2, "speed_rpm")?,
            position_rad: row.f64(3, "position_rad")?,
        });
    }
    Ok(out)
}

/// Write the scripted false and ghost pulse times, in time order.
pub fn write_manifest(path: impl AsRef<Path>, script: &CorruptionScript) -> Result<()> {
    let path = path.as_ref();
    let mut events: Vec<(EventKind, f64)> = script
        .false_pulse_times
        .iter()
        .map(|&t| (EventKind::FalsePulse, t))
        .chain(script.ghost_pulse_times.iter().map(|&t| (EventKind::Ghost, t)))
        .collect();
    events.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut w = writer(path, &MANIFEST_HEADER)?;
    for (kind, t) in events {
        w.write_record([kind.name().to_string(), t.to_string()])
            .map_err(|e| csv_error(path, e))?;
    }
    finish(path, w)
}

/// Read a manifest back into a script; noise settings stay at their defaults.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<CorruptionScript> {
    let path = path.as_ref();
    let mut table = Table::open(path, &MANIFEST_HEADER)?;
    let mut script = CorruptionScript::default();
    for row in table.rows() {
        let row = row?;
        let t = row.f64(1, "time_s")?;
        if t < 0.0 {
            return Err(row.err(format!("time_s {t} is negative")));
        }
        match row.field(0, "kind")? {
            "false" => script.false_pulse_times.push(t),
            "ghost" => script.ghost_pulse_times.push(t),
            k => return Err(row.err(format!("kind '{k}' must be 'false' or 'ghost'"))),
        }
    }
    Ok(script)
}

pub fn write_errors<'a>(path: impl AsRef<Path>, rows: impl IntoIterator<Item = (&'a str, &'a StreamErrors)>) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path, &ERRORS_HEADER)?;
    for (name, e) in rows {
        let s = &e.speed;
        w.write_record([
            name.to_string(),
            s.mean_true_rpm.to_string(),
            s.mean_error_rpm.to_string(),
            s.mean_error_pct.to_string(),
            s.std_error_rpm.to_string(),
            s.std_error_pct.to_string(),
            e.mean_position_error_rad.to_string(),
            e.truth_pulses.to_string(),
            e.detected_pulses.to_string(),
            e.count_error().to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    finish(path, w)
}

/// One summary row per method (event `total`), followed by that method's
/// event rows. A method that was not run has blank counts.
pub fn write_comparison(path: impl AsRef<Path>, fs: f64, methods: &[MethodComparison]) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path, &COMPARISON_HEADER)?;
    for m in methods {
        w.write_record([
            m.method.clone(),
            "total".into(),
            String::new(),
            match m.detected_pulses {
                Some(_) => format!("{}/{} correct", m.correct_events(), m.events.len()),
                None => String::new(),
            },
            m.detected_pulses.map(|d| d.to_string()).unwrap_or_default(),
            m.truth_pulses.to_string(),
            m.count_error().map(|e| e.to_string()).unwrap_or_default(),
        ])
        .map_err(|e| csv_error(path, e))?;
        for e in &m.events {
            w.write_record([
                m.method.clone(),
                e.kind.name().into(),
                (e.sample as f64 / fs).to_string(),
                e.outcome.name().into(),
                String::new(),
                String::new(),
                String::new(),
            ])
            .map_err(|e| csv_error(path, e))?;
        }
    }
    finish(path, w)
}
