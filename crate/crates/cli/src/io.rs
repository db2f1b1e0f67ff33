//! File formats: counts CSV, metadata CSV, matrix/long-format CSVs, and a
//! compact binary cache of posterior draws.
//!
//! Floats are written with 17 significant digits so every artifact parses
//! back to the identical bit pattern.

use crate::error::{CliError, CliResult};
use mlndlm::{CountDataset, StateDraw};
use nalgebra::DMatrix;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

/// 17 significant digits; round-trips f64 exactly.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn create(path: &Path) -> CliResult<BufWriter<std::fs::File>> {
    Ok(BufWriter::new(std::fs::File::create(path).map_err(|e| {
        CliError::Io(format!("cannot create {}: {e}", path.display()))
    })?))
}

fn open(path: &Path) -> CliResult<BufReader<std::fs::File>> {
    Ok(BufReader::new(std::fs::File::open(path).map_err(|e| {
        CliError::Io(format!("cannot open {}: {e}", path.display()))
    })?))
}

// ---------------------------------------------------------------------------
// Counts and metadata
// ---------------------------------------------------------------------------

/// Counts CSV: header `category,1,2,...,T`; one row per category.
pub fn write_counts(path: &Path, data: &CountDataset, categories: &[String]) -> CliResult<()> {
    let mut w = create(path)?;
    let header: Vec<String> = std::iter::once("category".to_string())
        .chain((1..=data.t_total()).map(|t| t.to_string()))
        .collect();
    writeln!(w, "{}", header.join(",")).map_err(io_err)?;
    for d in 0..data.d() {
        let mut row = vec![categories[d].clone()];
        for t in 0..data.t_total() {
            row.push(data.y[(d, t)].to_string());
        }
        writeln!(w, "{}", row.join(",")).map_err(io_err)?;
    }
    Ok(())
}

/// Metadata CSV: columns `time_index,series_id,observed`.
pub fn write_metadata(path: &Path, data: &CountDataset) -> CliResult<()> {
    let mut w = create(path)?;
    writeln!(w, "time_index,series_id,observed").map_err(io_err)?;
    for (k, range) in data.series_ranges().into_iter().enumerate() {
        for t in range {
            writeln!(w, "{},{},{}", t + 1, k + 1, data.observed[t]).map_err(io_err)?;
        }
    }
    Ok(())
}

pub struct LoadedData {
    pub data: CountDataset,
    pub categories: Vec<String>,
}

pub fn read_counts_and_metadata(
    counts_path: &Path,
    metadata_path: &Path,
) -> CliResult<LoadedData> {
    // Counts.
    let reader = open(counts_path)?;
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Validation("counts file is empty".into()))?
        .map_err(io_err)?;
    let t_total = header.split(',').count().saturating_sub(1);
    if t_total == 0 {
        return Err(CliError::Validation("counts header has no timepoints".into()));
    }
    let mut categories = Vec::new();
    let mut rows: Vec<Vec<u64>> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let cat = fields
            .next()
            .ok_or_else(|| CliError::Validation(format!("counts line {} empty", lineno + 2)))?;
        categories.push(cat.to_string());
        let counts: Vec<u64> = fields
            .map(|f| {
                f.trim().parse::<u64>().map_err(|_| {
                    CliError::Validation(format!(
                        "counts line {}: '{}' is not a nonnegative integer",
                        lineno + 2,
                        f
                    ))
                })
            })
            .collect::<CliResult<_>>()?;
        if counts.len() != t_total {
            return Err(CliError::Validation(format!(
                "counts line {}: {} values, expected {t_total}",
                lineno + 2,
                counts.len()
            )));
        }
        rows.push(counts);
    }
    if rows.len() < 2 {
        return Err(CliError::Validation("need at least 2 categories".into()));
    }
    let d = rows.len();
    let y = DMatrix::from_fn(d, t_total, |i, j| rows[i][j]);

    // Metadata.
    let reader = open(metadata_path)?;
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Validation("metadata file is empty".into()))?
        .map_err(io_err)?;
    if header.trim() != "time_index,series_id,observed" {
        return Err(CliError::Validation(format!(
            "metadata header must be 'time_index,series_id,observed', got '{header}'"
        )));
    }
    let mut observed = vec![true; t_total];
    let mut series_of_t: Vec<Option<String>> = vec![None; t_total];
    let mut seen = 0usize;
    for line in lines {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(CliError::Validation(format!("bad metadata row: '{line}'")));
        }
        let t: usize = fields[0]
            .trim()
            .parse()
            .map_err(|_| CliError::Validation(format!("bad time_index '{}'", fields[0])))?;
        if t == 0 || t > t_total {
            return Err(CliError::Validation(format!(
                "time_index {t} outside 1..{t_total}"
            )));
        }
        let obs: bool = fields[2]
            .trim()
            .parse()
            .map_err(|_| CliError::Validation(format!("bad observed flag '{}'", fields[2])))?;
        observed[t - 1] = obs;
        series_of_t[t - 1] = Some(fields[1].trim().to_string());
        seen += 1;
    }
    if seen != t_total {
        return Err(CliError::Validation(format!(
            "metadata covers {seen} of {t_total} timepoints"
        )));
    }
    // Series must be contiguous runs.
    let mut series_lengths = Vec::new();
    let mut current: Option<&String> = None;
    let mut used: Vec<&String> = Vec::new();
    for entry in series_of_t.iter() {
        let id = entry.as_ref().expect("covered above");
        match current {
            Some(c) if c == id => *series_lengths.last_mut().unwrap() += 1,
            _ => {
                if used.contains(&id) {
                    return Err(CliError::Validation(format!(
                        "series '{id}' appears in non-contiguous blocks"
                    )));
                }
                used.push(id);
                series_lengths.push(1usize);
                current = Some(id);
            }
        }
    }

    Ok(LoadedData {
        data: CountDataset {
            y,
            observed,
            series_lengths,
        },
        categories,
    })
}

// ---------------------------------------------------------------------------
// Matrices and long-format tables
// ---------------------------------------------------------------------------

/// Matrix CSV shaped like the counts file: `dim,1,2,...,T` with one row per
/// coordinate.
pub fn write_matrix(path: &Path, m: &DMatrix<f64>, row_prefix: &str) -> CliResult<()> {
    let mut w = create(path)?;
    let header: Vec<String> = std::iter::once("dim".to_string())
        .chain((1..=m.ncols()).map(|t| t.to_string()))
        .collect();
    writeln!(w, "{}", header.join(",")).map_err(io_err)?;
    for i in 0..m.nrows() {
        let mut row = vec![format!("{row_prefix}{}", i + 1)];
        for j in 0..m.ncols() {
            row.push(fmt17(m[(i, j)]));
        }
        writeln!(w, "{}", row.join(",")).map_err(io_err)?;
    }
    Ok(())
}

pub fn read_matrix(path: &Path) -> CliResult<DMatrix<f64>> {
    let reader = open(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .skip(1)
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::Validation(format!("bad float '{f}'")))
            })
            .collect::<CliResult<_>>()?;
        rows.push(vals);
    }
    if rows.is_empty() {
        return Err(CliError::Validation("matrix file has no data rows".into()));
    }
    let ncols = rows[0].len();
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

// ---------------------------------------------------------------------------
// Binary draw cache
// ---------------------------------------------------------------------------

const CACHE_MAGIC: &[u8; 8] = b"MLNDLMB1";

/// Compact binary cache of posterior draws for re-summarization:
/// magic, dims `(S, Q, p, T, K)` as u64 LE, then eta draws, theta draws,
/// theta0 draws, and sigma draws as little-endian f64 in draw-major order.
pub fn write_draw_cache(
    path: &Path,
    eta: &[DMatrix<f64>],
    states: &[StateDraw],
) -> CliResult<()> {
    let mut w = create(path)?;
    let s = eta.len();
    let (p, t_total) = (eta[0].nrows(), eta[0].ncols());
    let q = states[0].theta[0].nrows();
    let k = states[0].theta0.len();
    w.write_all(CACHE_MAGIC).map_err(io_err)?;
    for dim in [s, q, p, t_total, k] {
        w.write_all(&(dim as u64).to_le_bytes()).map_err(io_err)?;
    }
    let put = |m: &DMatrix<f64>, w: &mut BufWriter<std::fs::File>| -> CliResult<()> {
        for v in m.iter() {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
        Ok(())
    };
    for m in eta {
        put(m, &mut w)?;
    }
    for st in states {
        for m in &st.theta {
            put(m, &mut w)?;
        }
    }
    for st in states {
        for m in &st.theta0 {
            put(m, &mut w)?;
        }
    }
    for st in states {
        put(&st.sigma, &mut w)?;
    }
    Ok(())
}

pub struct DrawCache {
    pub eta: Vec<DMatrix<f64>>,
    pub theta: Vec<Vec<DMatrix<f64>>>,
    pub sigma: Vec<DMatrix<f64>>,
}

pub fn read_draw_cache(path: &Path) -> CliResult<DrawCache> {
    let mut r = open(path)?;
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != CACHE_MAGIC {
        return Err(CliError::Validation("not a draw cache file".into()));
    }
    let mut dims = [0usize; 5];
    for d in &mut dims {
        let mut buf = [0u8; 8];
        r.read_exact(&mut buf).map_err(io_err)?;
        *d = u64::from_le_bytes(buf) as usize;
    }
    let [s, q, p, t_total, k] = dims;
    let get = |rows: usize, cols: usize, r: &mut BufReader<std::fs::File>| -> CliResult<DMatrix<f64>> {
        let mut m = DMatrix::zeros(rows, cols);
        for v in m.iter_mut() {
            let mut buf = [0u8; 8];
            r.read_exact(&mut buf).map_err(io_err)?;
            *v = f64::from_le_bytes(buf);
        }
        Ok(m)
    };
    let mut eta = Vec::with_capacity(s);
    for _ in 0..s {
        eta.push(get(p, t_total, &mut r)?);
    }
    let mut theta = Vec::with_capacity(s);
    for _ in 0..s {
        let mut per_t = Vec::with_capacity(t_total);
        for _ in 0..t_total {
            per_t.push(get(q, p, &mut r)?);
        }
        theta.push(per_t);
    }
    for _ in 0..s * k {
        let _ = get(q, p, &mut r)?;
    }
    let mut sigma = Vec::with_capacity(s);
    for _ in 0..s {
        sigma.push(get(p, p, &mut r)?);
    }
    Ok(DrawCache { eta, theta, sigma })
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Io(e.to_string())
}
