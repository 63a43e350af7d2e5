//! Readers and writers for the `fvecs` / `bvecs` benchmark formats and a
//! plain-text format (one whitespace-separated vector per line).
//!
//! Both binary formats are a sequence of records `[i32 dim LE][dim values]`,
//! with `f32` LE values for `fvecs` and `u8` values for `bvecs`. Values are
//! widened to `f64` on read; writing narrows them back, so a read/write cycle
//! of a well-formed file is byte-exact.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::DataMatrix;
use crate::error::{format_err, invalid, Error, Result};

/// On-disk vector encodings understood by [`read_path`] and [`write_path`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VecFormat {
    Fvecs,
    Bvecs,
    Text,
}

impl VecFormat {
    /// Picks a format from the file extension; anything other than
    /// `.fvecs`/`.bvecs` is treated as text.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("fvecs") => VecFormat::Fvecs,
            Some(e) if e.eq_ignore_ascii_case("bvecs") => VecFormat::Bvecs,
            _ => VecFormat::Text,
        }
    }
}

/// Reads the next record header. `Ok(None)` on a clean end of input.
fn read_dim(r: &mut impl Read) -> Result<Option<usize>> {
    let mut buf = [0u8; 4];
    let mut filled = 0;
    while filled < 4 {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e.into()),
        }
    }
    match filled {
        0 => Ok(None),
        4 => {
            let dim = i32::from_le_bytes(buf);
            if dim <= 0 {
                return Err(format_err(format!("record dimension must be positive, got {dim}")));
            }
            Ok(Some(dim as usize))
        }
        n => Err(format_err(format!("truncated record header ({n} of 4 bytes)"))),
    }
}

fn read_payload(r: &mut impl Read, buf: &mut [u8], record: usize) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => format_err(format!("truncated payload in record {record}")),
        _ => Error::Io(e),
    })
}

fn read_records(mut r: impl Read, width: usize, widen: impl Fn(&[u8]) -> f64) -> Result<DataMatrix> {
    let mut dims = None;
    let mut values = Vec::new();
    let mut count = 0usize;
    let mut payload = Vec::new();
    while let Some(dim) = read_dim(&mut r)? {
        match dims {
            None => {
                dims = Some(dim);
                payload.resize(dim * width, 0);
            }
            Some(d) if d != dim => {
                return Err(format_err(format!(
                    "inconsistent dimension in record {count}: expected {d}, found {dim}"
                )))
            }
            _ => {}
        }
        read_payload(&mut r, &mut payload, count)?;
        values.extend(payload.chunks_exact(width).map(&widen));
        count += 1;
    }
    match dims {
        None => Ok(DataMatrix::empty()),
        Some(d) => DataMatrix::from_column_major(d, count, values),
    }
}

pub fn read_fvecs(r: impl Read) -> Result<DataMatrix> {
    read_records(r, 4, |b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
}

pub fn read_bvecs(r: impl Read) -> Result<DataMatrix> {
    read_records(r, 1, |b| b[0] as f64)
}

fn header(dims: usize) -> Result<[u8; 4]> {
    let dim = i32::try_from(dims).map_err(|_| invalid(format!("dimension {dims} does not fit in i32")))?;
    if dim <= 0 {
        return Err(invalid("cannot write zero-dimensional records"));
    }
    Ok(dim.to_le_bytes())
}

/// Writes `x` as `fvecs`. Values are narrowed to `f32`.
pub fn write_fvecs(mut w: impl Write, x: &DataMatrix) -> Result<()> {
    if x.is_empty() {
        return Ok(());
    }
    let head = header(x.dims())?;
    for j in 0..x.count() {
        w.write_all(&head)?;
        for &v in x.column_slice(j) {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

/// Writes `x` as `bvecs`. Every value must be an integer in `0..=255`.
pub fn write_bvecs(mut w: impl Write, x: &DataMatrix) -> Result<()> {
    if x.is_empty() {
        return Ok(());
    }
    let head = header(x.dims())?;
    let mut bytes = Vec::with_capacity(x.dims());
    for j in 0..x.count() {
        bytes.clear();
        for &v in x.column_slice(j) {
            if v.fract() != 0.0 || !(0.0..=255.0).contains(&v) {
                return Err(invalid(format!("value {v} in column {j} is not a byte")));
            }
            bytes.push(v as u8);
        }
        w.write_all(&head)?;
        w.write_all(&bytes)?;
    }
    Ok(())
}

/// Reads one vector per non-empty line. Lines starting with `#` are skipped.
pub fn read_text(r: impl BufRead) -> Result<DataMatrix> {
    let mut dims = None;
    let mut values = Vec::new();
    let mut count = 0;
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let before = values.len();
        for tok in line.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
            let v: f64 = tok
                .parse()
                .map_err(|_| format_err(format!("line {}: cannot parse {tok:?}", lineno + 1)))?;
            values.push(v);
        }
        let dim = values.len() - before;
        match dims {
            None => dims = Some(dim),
            Some(d) if d != dim => {
                return Err(format_err(format!(
                    "line {}: expected {d} values, found {dim}",
                    lineno + 1
                )))
            }
            _ => {}
        }
        count += 1;
    }
    match dims {
        None => Ok(DataMatrix::empty()),
        Some(d) => DataMatrix::from_column_major(d, count, values),
    }
}

/// Writes one vector per line using the shortest round-tripping decimal form.
pub fn write_text(mut w: impl Write, x: &DataMatrix) -> Result<()> {
    for j in 0..x.count() {
        let line: Vec<String> = x.column_slice(j).iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn read_path(path: impl AsRef<Path>) -> Result<DataMatrix> {
    let path = path.as_ref();
    let r = BufReader::new(File::open(path)?);
    match VecFormat::from_path(path) {
        VecFormat::Fvecs => read_fvecs(r),
        VecFormat::Bvecs => read_bvecs(r),
        VecFormat::Text => read_text(r),
    }
}

pub fn write_path(path: impl AsRef<Path>, x: &DataMatrix) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path)?);
    match VecFormat::from_path(path) {
        VecFormat::Fvecs => write_fvecs(&mut w, x)?,
        VecFormat::Bvecs => write_bvecs(&mut w, x)?,
        VecFormat::Text => write_text(&mut w, x)?,
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fvec_record(vals: &[f32]) -> Vec<u8> {
        let mut out = (vals.len() as i32).to_le_bytes().to_vec();
        for v in vals {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    #[test]
    fn fvecs_single_record() {
        let x = read_fvecs(&fvec_record(&[1.0, 2.0])[..]).unwrap();
        assert_eq!((x.dims(), x.count()), (2, 1));
        assert_eq!(x.column_slice(0), &[1.0, 2.0]);
    }

    #[test]
    fn fvecs_empty_file() {
        let x = read_fvecs(&[][..]).unwrap();
        assert!(x.is_empty());
        assert_eq!(x.dims(), 0);
    }

    #[test]
    fn fvecs_inconsistent_dims() {
        let mut bytes = fvec_record(&[1.0, 2.0]);
        bytes.extend(fvec_record(&[1.0, 2.0, 3.0]));
        assert!(matches!(read_fvecs(&bytes[..]), Err(Error::Format(_))));
    }

    #[test]
    fn fvecs_truncated_and_bad_dim() {
        let bytes = fvec_record(&[1.0, 2.0]);
        assert!(matches!(read_fvecs(&bytes[..bytes.len() - 1]), Err(Error::Format(_))));
        assert!(matches!(read_fvecs(&bytes[..2]), Err(Error::Format(_))));
        let zero = 0i32.to_le_bytes();
        assert!(matches!(read_fvecs(&zero[..]), Err(Error::Format(_))));
        let neg = (-3i32).to_le_bytes();
        assert!(matches!(read_fvecs(&neg[..]), Err(Error::Format(_))));
    }

    #[test]
    fn bvecs_widening() {
        let bytes = [4, 0, 0, 0, 0x00, 0x7f, 0xff, 0x01];
        let x = read_bvecs(&bytes[..]).unwrap();
        assert_eq!(x.column_slice(0), &[0.0, 127.0, 255.0, 1.0]);
        assert!(matches!(read_bvecs(&bytes[..7]), Err(Error::Format(_))));
    }

    #[test]
    fn bvecs_random_round_trip() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..16).map(|_| rng.random_range(0..=255u8) as f64).collect())
            .collect();
        let x = DataMatrix::from_points(&pts).unwrap();
        let mut buf = Vec::new();
        write_bvecs(&mut buf, &x).unwrap();
        assert_eq!(buf.len(), 10 * (4 + 16));
        assert_eq!(read_bvecs(&buf[..]).unwrap(), x);
    }

    #[test]
    fn bvecs_rejects_non_bytes() {
        let x = DataMatrix::from_points(&[[1.5, 2.0]]).unwrap();
        assert!(write_bvecs(Vec::new(), &x).is_err());
        let x = DataMatrix::from_points(&[[256.0]]).unwrap();
        assert!(write_bvecs(Vec::new(), &x).is_err());
    }

    #[test]
    fn text_parsing() {
        let src = "# header\n1 2 3\n\n4,5,6\n";
        let x = read_text(src.as_bytes()).unwrap();
        assert_eq!((x.dims(), x.count()), (3, 2));
        assert_eq!(x.column_slice(1), &[4.0, 5.0, 6.0]);
        assert!(read_text("1 2\n3\n".as_bytes()).is_err());
        assert!(read_text("1 x\n".as_bytes()).is_err());
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(VecFormat::from_path(Path::new("a/sift_base.fvecs")), VecFormat::Fvecs);
        assert_eq!(VecFormat::from_path(Path::new("b.BVECS")), VecFormat::Bvecs);
        assert_eq!(VecFormat::from_path(Path::new("c.txt")), VecFormat::Text);
    }

    proptest! {
        // A well-formed fvecs byte stream survives read followed by write unchanged.
        #[test]
        fn fvecs_bytes_round_trip(dim in 1usize..9, rows in proptest::collection::vec(proptest::collection::vec(-1e6f32..1e6, 8), 0..12)) {
            let mut bytes = Vec::new();
            for r in &rows {
                bytes.extend(fvec_record(&r[..dim]));
            }
            let x = read_fvecs(&bytes[..]).unwrap();
            let mut out = Vec::new();
            write_fvecs(&mut out, &x).unwrap();
            prop_assert_eq!(out, bytes);
        }

        #[test]
        fn text_round_trip(rows in proptest::collection::vec(proptest::collection::vec(-1e9f64..1e9, 3), 1..10)) {
            let x = DataMatrix::from_points(&rows).unwrap();
            let mut buf = Vec::new();
            write_text(&mut buf, &x).unwrap();
            prop_assert_eq!(read_text(&buf[..]).unwrap(), x);
        }
    }
}
