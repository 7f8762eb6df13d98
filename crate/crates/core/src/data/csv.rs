use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{Beat, ClassHistogram, DataError, Dataset, Origin, BEAT_LEN, NUM_CLASSES};

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    read_csv(BufReader::new(file)).map_err(|e| match e {
        DataError::Io { source, .. } => io_err(path, source),
        other => other,
    })
}

/// Parses beats from CSV text. Row indices in errors are zero-based over
/// non-blank lines. There is no header row.
pub fn read_csv<R: BufRead>(reader: R) -> Result<Dataset, DataError> {
    let mut ds = Dataset::new();
    let mut out_of_range = 0usize;
    let mut row = 0usize;
    for line in reader.lines() {
        let line = line.map_err(|source| DataError::Io {
            path: "<reader>".into(),
            source,
        })?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (beat, origin) = parse_row(line, row)?;
        out_of_range += beat.samples().iter().filter(|v| !(0.0..=1.0).contains(*v)).count();
        ds.push(beat, origin);
        row += 1;
    }
    if out_of_range > 0 {
        log::warn!("{out_of_range} sample values outside [0, 1]");
    }
    Ok(ds)
}

fn parse_row(line: &str, row: usize) -> Result<(Beat, Origin), DataError> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    let origin = match fields.len() {
        n if n == BEAT_LEN + 1 => Origin::Real,
        n if n == BEAT_LEN + 2 => Origin::parse(fields[BEAT_LEN + 1]).ok_or_else(|| DataError::Row {
            row,
            reason: format!("unknown origin tag {:?}", fields[BEAT_LEN + 1]),
        })?,
        n => {
            return Err(DataError::Row {
                row,
                reason: format!("expected {} columns, found {n}", BEAT_LEN + 1),
            })
        }
    };
    let mut samples = Vec::with_capacity(BEAT_LEN);
    for (col, f) in fields[..BEAT_LEN].iter().enumerate() {
        let v: f64 = f.parse().map_err(|_| DataError::Row {
            row,
            reason: format!("column {col}: not a number: {f:?}"),
        })?;
        if !v.is_finite() {
            return Err(DataError::Row {
                row,
                reason: format!("column {col}: non-finite value {f:?}"),
            });
        }
        samples.push(v);
    }
    let raw = fields[BEAT_LEN];
    let label: f64 = raw.parse().map_err(|_| DataError::Row {
        row,
        reason: format!("label is not a number: {raw:?}"),
    })?;
    if label.fract() != 0.0 || !(0.0..NUM_CLASSES as f64).contains(&label) {
        return Err(DataError::Row {
            row,
            reason: format!("label {raw:?} is not an integer in 0..{NUM_CLASSES}"),
        });
    }
    let beat = Beat::new(samples, label as u8).map_err(|e| DataError::Row {
        row,
        reason: e.to_string(),
    })?;
    Ok((beat, origin))
}

/// Writes one beat per line. Values use the shortest round-tripping decimal
/// form, so [`read_csv`] recovers them exactly.
pub fn write_csv<W: Write>(ds: &Dataset, mut w: W, with_origin: bool) -> std::io::Result<()> {
    let mut line = String::with_capacity(BEAT_LEN * 20);
    for (beat, origin) in ds.iter() {
        line.clear();
        for v in beat.samples() {
            line.push_str(&v.to_string());
            line.push(',');
        }
        line.push_str(&format!("{}.0", beat.label()));
        if with_origin {
            line.push(',');
            line.push_str(origin.as_str());
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    w.flush()
}

pub fn save_csv(ds: &Dataset, path: impl AsRef<Path>, with_origin: bool) -> Result<(), DataError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    write_csv(ds, BufWriter::new(file), with_origin).map_err(|e| io_err(path, e))
}

/// `class,count` rows for each class.
pub fn write_histogram_csv<W: Write>(hist: &ClassHistogram, mut w: W) -> std::io::Result<()> {
    writeln!(w, "class,count")?;
    for (class, count) in hist.0.iter().enumerate() {
        writeln!(w, "{class},{count}")?;
    }
    w.flush()
}
