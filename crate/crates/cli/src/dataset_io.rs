//! Pair dataset files: a CSV text form and a little-endian binary form,
//! told apart on read by the leading magic bytes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use clap::ValueEnum;
use levy_sid::simulate::DatasetPair;

use crate::error::CliError;

pub const MAGIC: &[u8; 4] = b"LSID";
pub const BINARY_VERSION: u8 = 1;
const CSV_TAG: &str = "#levy-sid-pairs v1";
const BINARY_HEADER: usize = 4 + 1 + 8 + 8 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DatasetFormat {
    Csv,
    Bin,
}

impl DatasetFormat {
    pub fn extension(self) -> &'static str {
        match self {
            DatasetFormat::Csv => "csv",
            DatasetFormat::Bin => "bin",
        }
    }
}

pub fn write_dataset(path: &Path, data: &DatasetPair, format: DatasetFormat) -> Result<(), CliError> {
    let io = |e| CliError::io(path, e);
    let mut w = BufWriter::with_capacity(1 << 20, File::create(path).map_err(io)?);
    match format {
        DatasetFormat::Csv => write_csv(&mut w, data),
        DatasetFormat::Bin => write_binary(&mut w, data),
    }
    .and_then(|_| w.flush())
    .map_err(io)
}

fn write_csv(w: &mut impl Write, data: &DatasetPair) -> std::io::Result<()> {
    writeln!(w, "{CSV_TAG} n={} M={} h={:?}", data.dimension(), data.len(), data.h())?;
    let mut line = String::new();
    for j in 0..data.len() {
        line.clear();
        for (k, v) in data.z_row(j).iter().chain(data.x_row(j)).enumerate() {
            if k > 0 {
                line.push(',');
            }
            line.push_str(&format!("{v:?}"));
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}

fn write_binary(w: &mut impl Write, data: &DatasetPair) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[BINARY_VERSION])?;
    w.write_all(&(data.dimension() as u64).to_le_bytes())?;
    w.write_all(&(data.len() as u64).to_le_bytes())?;
    w.write_all(&data.h().to_le_bytes())?;
    let mut buf = Vec::with_capacity(16 * data.dimension());
    for j in 0..data.len() {
        buf.clear();
        for v in data.z_row(j).iter().chain(data.x_row(j)) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<DatasetPair, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let file = path.display().to_string();
    if bytes.starts_with(MAGIC) {
        parse_binary(&bytes, &file)
    } else {
        let text = std::str::from_utf8(&bytes).map_err(|_| CliError::data(&file, "neither a binary dataset nor UTF-8 text"))?;
        parse_csv(text, &file)
    }
}

fn assemble(n: usize, rows: usize, h: f64, z: Vec<f64>, x: Vec<f64>, file: &str) -> Result<DatasetPair, CliError> {
    debug_assert_eq!(z.len(), n * rows);
    DatasetPair::new(n, h, z, x).map_err(|e| CliError::data(file, e.to_string()))
}

pub fn parse_binary(bytes: &[u8], file: &str) -> Result<DatasetPair, CliError> {
    if bytes.len() < BINARY_HEADER {
        return Err(CliError::data(file, "truncated binary header"));
    }
    if bytes[4] != BINARY_VERSION {
        return Err(CliError::data(file, format!("unsupported binary version {}", bytes[4])));
    }
    let word = |at: usize| <[u8; 8]>::try_from(&bytes[at..at + 8]).expect("eight bytes");
    let n = u64::from_le_bytes(word(5));
    let rows = u64::from_le_bytes(word(13));
    let h = f64::from_le_bytes(word(21));
    if n == 0 {
        return Err(CliError::data(file, "dimension n must be at least 1"));
    }
    let expected = (rows as u128) * 2 * (n as u128) * 8 + BINARY_HEADER as u128;
    if expected != bytes.len() as u128 {
        return Err(CliError::data(
            file,
            format!("header announces n={n}, M={rows} ({expected} bytes) but the file has {} bytes", bytes.len()),
        ));
    }
    let (n, rows) = (n as usize, rows as usize);
    let mut z = Vec::with_capacity(n * rows);
    let mut x = Vec::with_capacity(n * rows);
    for (j, record) in bytes[BINARY_HEADER..].chunks_exact(16 * n).enumerate() {
        for (k, chunk) in record.chunks_exact(8).enumerate() {
            let v = f64::from_le_bytes(chunk.try_into().expect("eight bytes"));
            if !v.is_finite() {
                return Err(CliError::data(file, format!("row {}: value {} is not finite", j + 1, k + 1)));
            }
            if k < n {
                z.push(v);
            } else {
                x.push(v);
            }
        }
    }
    assemble(n, rows, h, z, x, file)
}

fn header_field<T: std::str::FromStr>(fields: &[&str], key: &str, file: &str) -> Result<T, CliError> {
    fields
        .iter()
        .find_map(|f| f.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
        .ok_or_else(|| CliError::data(file, format!("line 1: header lacks `{key}=`")))?
        .parse()
        .map_err(|_| CliError::data(file, format!("line 1: bad value for `{key}`")))
}

pub fn parse_csv(text: &str, file: &str) -> Result<DatasetPair, CliError> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    let rest = header
        .strip_prefix(CSV_TAG)
        .ok_or_else(|| CliError::data(file, format!("line 1: expected header starting with `{CSV_TAG}`")))?;
    let fields: Vec<&str> = rest.split_whitespace().collect();
    let n: usize = header_field(&fields, "n", file)?;
    let rows: usize = header_field(&fields, "M", file)?;
    let h: f64 = header_field(&fields, "h", file)?;
    if n == 0 {
        return Err(CliError::data(file, "line 1: dimension n must be at least 1"));
    }
    let mut z = Vec::with_capacity(n.saturating_mul(rows).min(1 << 28));
    let mut x = Vec::with_capacity(z.capacity());
    let mut seen = 0usize;
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        if line.trim().is_empty() {
            continue;
        }
        seen += 1;
        if seen > rows {
            return Err(CliError::data(file, format!("line {line_no}: more rows than the announced M={rows}")));
        }
        let mut count = 0;
        for (k, cell) in line.split(',').enumerate() {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| CliError::data(file, format!("line {line_no}, column {}: `{cell}` is not a number", k + 1)))?;
            if !v.is_finite() {
                return Err(CliError::data(file, format!("line {line_no}, column {}: value is not finite", k + 1)));
            }
            if k < n {
                z.push(v);
            } else if k < 2 * n {
                x.push(v);
            }
            count += 1;
        }
        if count != 2 * n {
            return Err(CliError::data(file, format!("line {line_no}: expected {} columns, found {count}", 2 * n)));
        }
    }
    if seen != rows {
        return Err(CliError::data(file, format!("header announces M={rows} rows, found {seen}")));
    }
    assemble(n, rows, h, z, x, file)
}
