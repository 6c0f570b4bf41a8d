//! Binary EEG ("EEGB") and lead-field ("LFB1") files, plus CSV EEG import.
//!
//! All numbers are little-endian. EEG samples are stored channel-major;
//! gains row-major per point.

use std::io::{Read, Write};
use std::path::Path;

use crate::beamformer::LeadField;
use crate::covstream::EegWindow;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const EEG_MAGIC: [u8; 5] = *b"EEGB\x01";
pub const LEADFIELD_MAGIC: [u8; 4] = *b"LFB1";

pub fn write_eeg<W: Write>(mut w: W, x: &EegWindow) -> Result<()> {
    w.write_all(&EEG_MAGIC)?;
    w.write_all(&(x.channels() as u32).to_le_bytes())?;
    w.write_all(&(x.samples() as u64).to_le_bytes())?;
    w.write_all(&x.sample_rate().unwrap_or(0.0).to_le_bytes())?;
    for v in x.data().as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_eeg<R: Read>(mut r: R) -> Result<EegWindow> {
    let mut magic = [0u8; 5];
    read_exact(&mut r, &mut magic, "EEG header")?;
    if magic != EEG_MAGIC {
        return Err(Error::Format(format!("not an EEGB v1 file (magic {magic:02x?})")));
    }
    let k = read_u32(&mut r)? as usize;
    let n = read_u64(&mut r)?;
    let rate = read_f64(&mut r)?;
    let total = (k as u64)
        .checked_mul(n)
        .filter(|&t| t <= (isize::MAX as u64) / 8)
        .ok_or_else(|| Error::Format(format!("implausible size {k} x {n}")))? as usize;
    let data = read_f64s(&mut r, total)?;
    ensure_eof(&mut r)?;
    let sample_rate = if rate == 0.0 { None } else { Some(rate) };
    EegWindow::new(Matrix::from_vec(k, n as usize, data), sample_rate).map_err(data_error)
}

pub fn write_leadfield<W: Write>(mut w: W, lf: &LeadField) -> Result<()> {
    w.write_all(&LEADFIELD_MAGIC)?;
    w.write_all(&(lf.electrodes() as u32).to_le_bytes())?;
    w.write_all(&(lf.len() as u32).to_le_bytes())?;
    for (p, g) in lf.points().iter().zip(lf.gains()) {
        for v in p.iter().chain(g.as_slice()) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_leadfield<R: Read>(mut r: R) -> Result<LeadField> {
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, "lead-field header")?;
    if magic != LEADFIELD_MAGIC {
        return Err(Error::Format(format!("not an LFB1 file (magic {magic:02x?})")));
    }
    let k = read_u32(&mut r)? as usize;
    let p = read_u32(&mut r)? as usize;
    let mut points = Vec::with_capacity(p.min(1 << 20));
    let mut gains = Vec::with_capacity(p.min(1 << 20));
    for _ in 0..p {
        let pos = read_f64s(&mut r, 3)?;
        points.push([pos[0], pos[1], pos[2]]);
        gains.push(Matrix::from_vec(k, 3, read_f64s(&mut r, 3 * k)?));
    }
    ensure_eof(&mut r)?;
    LeadField::new(k, points, gains).map_err(data_error)
}

/// EEG from CSV, one channel per row, no header.
pub fn read_eeg_csv<R: Read>(r: R, sample_rate: Option<f64>) -> Result<EegWindow> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Format(format!("CSV row {}: {e}", i + 1)))?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|e| Error::Format(format!("CSV row {}: {f:?}: {e}", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Format("CSV file has no rows".into()));
    }
    let n = rows[0].len();
    if let Some(i) = rows.iter().position(|r| r.len() != n) {
        return Err(Error::Format(format!(
            "CSV row {} has {} values, expected {n}",
            i + 1,
            rows[i].len()
        )));
    }
    let k = rows.len();
    EegWindow::new(Matrix::from_vec(k, n, rows.concat()), sample_rate).map_err(data_error)
}

/// Reads EEG by extension: `.csv` as CSV, anything else as EEGB.
pub fn load_eeg(path: &Path) -> Result<EegWindow> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        read_eeg_csv(file, None)
    } else {
        read_eeg(file)
    }
}

pub fn save_eeg(path: &Path, x: &EegWindow) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_eeg(&mut w, x)?;
    w.flush()?;
    Ok(())
}

pub fn load_leadfield(path: &Path) -> Result<LeadField> {
    read_leadfield(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn save_leadfield(path: &Path, lf: &LeadField) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_leadfield(&mut w, lf)?;
    w.flush()?;
    Ok(())
}

/// Content errors found while decoding are reported as format errors.
fn data_error(e: Error) -> Error {
    match e {
        Error::Io(_) | Error::Format(_) => e,
        other => Error::Format(other.to_string()),
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated {what}")),
        _ => Error::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, "header")?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, "header")?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, "header")?;
    Ok(f64::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n.min(1 << 24));
    let mut b = [0u8; 8];
    for _ in 0..n {
        read_exact(r, &mut b, "payload")?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}

fn ensure_eof<R: Read>(r: &mut R) -> Result<()> {
    let mut b = [0u8; 1];
    match r.read(&mut b)? {
        0 => Ok(()),
        _ => Err(Error::Format("trailing bytes after payload".into())),
    }
}
