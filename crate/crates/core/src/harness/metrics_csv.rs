//! Learning-curve log as CSV with a fixed header. Floats are written in their
//! shortest round-trip form, so every non-timing field reads back exactly.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::MetricsRecord;

pub const HEADER: [&str; 10] = [
    "phase",
    "iteration",
    "generation",
    "path_index",
    "genotype",
    "fitness",
    "mean_train_loss",
    "eval_accuracy",
    "wallclock_ms",
    "seed",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_metrics<W: Write>(writer: W, rows: &[MetricsRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(HEADER)?;
    for r in rows {
        wtr.write_record([
            r.phase.to_string(),
            r.iteration.to_string(),
            r.generation.to_string(),
            opt(r.path_index),
            r.genotype.to_string(),
            r.fitness.to_string(),
            r.mean_train_loss.to_string(),
            opt(r.eval_accuracy),
            opt(r.wallclock_ms),
            r.seed.to_string(),
        ])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn metrics_to_string(rows: &[MetricsRecord]) -> Result<String> {
    let mut buf = Vec::new();
    write_metrics(&mut buf, rows)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

pub fn write_metrics_csv(path: impl AsRef<Path>, rows: &[MetricsRecord]) -> Result<()> {
    super::write_atomic(path.as_ref(), metrics_to_string(rows)?.as_bytes())
}

pub fn read_metrics<R: Read>(reader: R) -> Result<Vec<MetricsRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
    let mut records = rdr.records();
    let header = records
        .next()
        .ok_or_else(|| Error::Parse { row: 1, message: "missing header".into() })??;
    if header.iter().ne(HEADER) {
        return Err(Error::Parse {
            row: 1,
            message: format!("unexpected header, expected `{}`", HEADER.join(",")),
        });
    }
    let mut rows = Vec::new();
    for record in records {
        let record = record?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        let bad = |field: &str, why: String| Error::Parse {
            row,
            message: format!("{field}: {why}"),
        };
        if record.len() != HEADER.len() {
            return Err(bad("row", format!("{} fields, expected {}", record.len(), HEADER.len())));
        }
        let f = |i: usize| record.get(i).unwrap_or("");
        fn num<T: std::str::FromStr>(s: &str) -> std::result::Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            s.parse::<T>().map_err(|e| format!("`{s}`: {e}"))
        }
        fn maybe<T: std::str::FromStr>(s: &str) -> std::result::Result<Option<T>, String>
        where
            T::Err: std::fmt::Display,
        {
            if s.is_empty() {
                Ok(None)
            } else {
                num(s).map(Some)
            }
        }
        let record = MetricsRecord {
            phase: f(0).parse().map_err(|e: Error| bad("phase", e.to_string()))?,
            iteration: num(f(1)).map_err(|e| bad("iteration", e))?,
            generation: num(f(2)).map_err(|e| bad("generation", e))?,
            path_index: maybe(f(3)).map_err(|e| bad("path_index", e))?,
            genotype: f(4).parse().map_err(|e: Error| bad("genotype", e.to_string()))?,
            fitness: num(f(5)).map_err(|e| bad("fitness", e))?,
            mean_train_loss: num(f(6)).map_err(|e| bad("mean_train_loss", e))?,
            eval_accuracy: maybe(f(7)).map_err(|e| bad("eval_accuracy", e))?,
            wallclock_ms: maybe(f(8)).map_err(|e| bad("wallclock_ms", e))?,
            seed: num(f(9)).map_err(|e| bad("seed", e))?,
        };
        rows.push(record);
    }
    Ok(rows)
}

pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<Vec<MetricsRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_metrics(file)
}
