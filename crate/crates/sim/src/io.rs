//! JSON scenario files, CSV traces and JSON result files.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use svt_core::controller::{Event, Mode};
use svt_core::scenario::{RunResult, ScenarioConfig};
use svt_core::sim::KinState;
use svt_core::trace::{Trace, TraceRow};
use svt_core::Vec3;

/// Trace CSV header, in column order.
pub const TRACE_COLUMNS: [&str; 20] = [
    "t", "mode", "vis", "tx", "ty", "tz", "tvx", "tvy", "tvz", "px", "py", "pz", "pvx", "pvy",
    "pvz", "ex", "ey", "ez", "V", "event",
];

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}, column {column}: at `{field}`: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        field: String,
        msg: String,
    },
    #[error("{path}: {source}")]
    Config {
        path: PathBuf,
        #[source]
        source: svt_core::Error,
    },
    #[error("{path}: line {line}: {msg}")]
    Trace {
        path: PathBuf,
        line: u64,
        msg: String,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl IoError {
    /// True for problems with the user's scenario file.
    pub fn is_config(&self) -> bool {
        matches!(self, IoError::Parse { .. } | IoError::Config { .. })
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Parse, resolve defaults and validate a scenario.
pub fn parse_scenario(text: &str, path: &Path) -> Result<ScenarioConfig, IoError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        IoError::Parse {
            path: path.to_owned(),
            line: inner.line(),
            column: inner.column(),
            field,
            msg: inner.to_string(),
        }
    })?;
    cfg.resolve();
    cfg.validate().map_err(|source| IoError::Config {
        path: path.to_owned(),
        source,
    })?;
    Ok(cfg)
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_scenario(&text, path)
}

pub fn write_scenario(path: &Path, cfg: &ScenarioConfig) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(cfg).map_err(|source| IoError::Json {
        path: path.to_owned(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

fn event_str(e: &Event) -> String {
    match e {
        Event::Lost => "lost".into(),
        Event::Reacquired => "reacquired".into(),
        Event::Replanned => "replanned".into(),
        Event::BackoffLimited { required } => format!("backoff_limited:{required}"),
    }
}

fn parse_event(s: &str) -> Option<Event> {
    match s {
        "lost" => Some(Event::Lost),
        "reacquired" => Some(Event::Reacquired),
        "replanned" => Some(Event::Replanned),
        _ => {
            let v = s.strip_prefix("backoff_limited:")?;
            Some(Event::BackoffLimited {
                required: v.parse().ok()?,
            })
        }
    }
}

/// Write a trace as CSV. Floats use shortest round-trip formatting, so
/// reading the file back reproduces every value exactly.
pub fn write_trace_to<W: Write>(w: W, trace: &Trace) -> Result<(), csv::Error> {
    let mut out = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    out.write_record(TRACE_COLUMNS)?;
    let mut rec: Vec<String> = Vec::with_capacity(TRACE_COLUMNS.len());
    for r in &trace.rows {
        rec.clear();
        rec.push(r.t.to_string());
        rec.push(r.mode.as_str().into());
        rec.push(u8::from(r.visible).to_string());
        for v in [r.target.pos, r.target.vel, r.pursuer.pos, r.pursuer.vel] {
            rec.extend(v.to_array().iter().map(f64::to_string));
        }
        match r.estimate {
            Some(e) => rec.extend(e.to_array().iter().map(f64::to_string)),
            None => rec.extend(std::iter::repeat_n(String::new(), 3)),
        }
        rec.push(r.v.to_string());
        let ev: Vec<String> = r.events.iter().flatten().map(event_str).collect();
        rec.push(ev.join(";"));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_trace(path: &Path, trace: &Trace) -> Result<(), IoError> {
    let f = fs::File::create(path).map_err(io_err(path))?;
    write_trace_to(BufWriter::new(f), trace).map_err(|source| IoError::Csv {
        path: path.to_owned(),
        source,
    })
}

/// Read a trace CSV. `dt` is recovered from the time column; `offset`
/// is not stored in the file and must be supplied.
pub fn read_trace_from<R: Read>(r: R, path: &Path, offset: f64) -> Result<Trace, IoError> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(r);
    let csv_err = |source| IoError::Csv {
        path: path.to_owned(),
        source,
    };
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().ne(TRACE_COLUMNS.iter().copied()) {
        return Err(IoError::Trace {
            path: path.to_owned(),
            line: 1,
            msg: format!("expected header `{}`", TRACE_COLUMNS.join(",")),
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |msg: String| IoError::Trace {
            path: path.to_owned(),
            line,
            msg,
        };
        let num = |i: usize| -> Result<f64, IoError> {
            rec[i]
                .parse::<f64>()
                .map_err(|e| bad(format!("column `{}`: {e}", TRACE_COLUMNS[i])))
        };
        let v3 = |i: usize| -> Result<Vec3, IoError> {
            Ok(Vec3::new(num(i)?, num(i + 1)?, num(i + 2)?))
        };
        let mode = match &rec[1] {
            "tracking" => Mode::Tracking,
            "recovery" => Mode::Recovery,
            m => return Err(bad(format!("column `mode`: unknown mode `{m}`"))),
        };
        let visible = match &rec[2] {
            "1" => true,
            "0" => false,
            v => return Err(bad(format!("column `vis`: expected 0 or 1, got `{v}`"))),
        };
        let estimate = if rec[15].is_empty() {
            None
        } else {
            Some(v3(15)?)
        };
        let mut events = [None, None];
        if !rec[19].is_empty() {
            for (slot, s) in rec[19].split(';').enumerate() {
                let e = parse_event(s)
                    .ok_or_else(|| bad(format!("column `event`: unknown event `{s}`")))?;
                if slot >= 2 {
                    return Err(bad("column `event`: more than two events".into()));
                }
                events[slot] = Some(e);
            }
        }
        rows.push(TraceRow {
            t: num(0)?,
            mode,
            visible,
            target: KinState::new(v3(3)?, v3(6)?),
            pursuer: KinState::new(v3(9)?, v3(12)?),
            estimate,
            v: num(18)?,
            events,
        });
    }
    let dt = match rows.as_slice() {
        [a, b, ..] => b.t - a.t,
        _ => svt_core::DEFAULT_DT,
    };
    Ok(Trace { dt, offset, rows })
}

pub fn read_trace(path: &Path, offset: f64) -> Result<Trace, IoError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    read_trace_from(std::io::BufReader::new(f), path, offset)
}

/// Contents of a result file: the fully resolved config and its metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: ScenarioConfig,
    pub result: RunResult,
}

pub fn write_result(path: &Path, record: &RunRecord) -> Result<(), IoError> {
    let json_err = |source| IoError::Json {
        path: path.to_owned(),
        source,
    };
    let mut text = serde_json::to_string_pretty(record).map_err(json_err)?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_result(path: &Path) -> Result<RunRecord, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| IoError::Json {
        path: path.to_owned(),
        source,
    })
}
