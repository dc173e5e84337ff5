//! Binary container format shared by dataset, checkpoint, and trajectory
//! files, plus PNG heatmap export.
//!
//! Layout of every file: 4 magic bytes, `u16` little-endian version, body,
//! and a trailing FNV-1a 64-bit checksum over everything before it. All
//! integers and floats are little-endian; floats are 64-bit.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, FormatErrorKind, Result};
use crate::grid::{Field2D, GridState};
use crate::solver::Trajectory;

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Append-only encoder for the body of a container file.
#[derive(Default)]
pub(crate) struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put_u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn put_u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn put_u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn put_u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn put_f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn put_f64_slice(&mut self, vs: &[f64]) {
        self.put_u64(vs.len() as u64);
        for &v in vs {
            self.put_f64(v);
        }
    }

    pub fn put_str(&mut self, s: &str) {
        self.put_u64(s.len() as u64);
        self.buf.extend_from_slice(s.as_bytes());
    }

    pub fn put_opt_f64(&mut self, v: Option<f64>) {
        match v {
            Some(x) => {
                self.put_u8(1);
                self.put_f64(x);
            }
            None => self.put_u8(0),
        }
    }

    pub fn put_opt_u64(&mut self, v: Option<u64>) {
        match v {
            Some(x) => {
                self.put_u8(1);
                self.put_u64(x);
            }
            None => self.put_u8(0),
        }
    }
}

/// Cursor over a decoded body; every read checks remaining length.
pub(crate) struct Decoder<'a> {
    data: &'a [u8],
    pos: usize,
    path: PathBuf,
}

impl<'a> Decoder<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::format(&self.path, FormatErrorKind::Truncated));
        }
        let slice = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64_vec(&mut self) -> Result<Vec<f64>> {
        let n = self.u64()? as usize;
        if n.checked_mul(8).map_or(true, |bytes| self.pos + bytes > self.data.len()) {
            return Err(Error::format(&self.path, FormatErrorKind::Truncated));
        }
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn string(&mut self) -> Result<String> {
        let n = self.u64()? as usize;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| Error::format(&self.path, FormatErrorKind::InvalidField))
    }

    pub fn opt_f64(&mut self) -> Result<Option<f64>> {
        Ok(if self.u8()? == 1 { Some(self.f64()?) } else { None })
    }

    pub fn opt_u64(&mut self) -> Result<Option<u64>> {
        Ok(if self.u8()? == 1 { Some(self.u64()?) } else { None })
    }

    pub fn done(&self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(Error::format(&self.path, FormatErrorKind::InvalidField));
        }
        Ok(())
    }

    pub fn invalid(&self) -> Error {
        Error::format(&self.path, FormatErrorKind::InvalidField)
    }
}

/// Write `magic | version | body | fnv1a64` to `path`.
pub(crate) fn write_container(
    path: &Path,
    magic: &[u8; 4],
    version: u16,
    body: &Encoder,
) -> Result<()> {
    let mut bytes = Vec::with_capacity(body.buf.len() + 14);
    bytes.extend_from_slice(magic);
    bytes.extend_from_slice(&version.to_le_bytes());
    bytes.extend_from_slice(&body.buf);
    let checksum = fnv1a64(&bytes);
    bytes.extend_from_slice(&checksum.to_le_bytes());
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Read and verify a container, returning its body bytes and version.
pub(crate) fn read_container(
    path: &Path,
    magic: &[u8; 4],
    max_version: u16,
) -> Result<(Vec<u8>, u16)> {
    let bytes = fs::read(path)?;
    if bytes.len() < 14 {
        return Err(Error::format(path, FormatErrorKind::Truncated));
    }
    if &bytes[..4] != magic {
        return Err(Error::format(path, FormatErrorKind::BadMagic));
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    if version == 0 || version > max_version {
        return Err(Error::format(path, FormatErrorKind::UnsupportedVersion));
    }
    let (payload, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().unwrap());
    if fnv1a64(payload) != stored {
        return Err(Error::format(path, FormatErrorKind::ChecksumMismatch));
    }
    Ok((payload[6..].to_vec(), version))
}

pub(crate) fn decoder<'a>(data: &'a [u8], path: &Path) -> Decoder<'a> {
    Decoder { data, pos: 0, path: path.to_path_buf() }
}

const TRAJECTORY_MAGIC: &[u8; 4] = b"DRST";
const TRAJECTORY_VERSION: u16 = 1;

/// Persist a trajectory in the snapshot container format.
pub fn save_trajectory(traj: &Trajectory, path: &Path) -> Result<()> {
    let mut enc = Encoder::new();
    enc.put_u32(traj.n_rows() as u32);
    enc.put_u32(traj.n_cols() as u32);
    enc.put_f64(traj.sample_interval);
    enc.put_u32(traj.snapshots.len() as u32);
    for snap in &traj.snapshots {
        enc.put_f64(snap.time);
        enc.put_f64_slice(snap.u.values());
        enc.put_f64_slice(snap.v.values());
    }
    write_container(path, TRAJECTORY_MAGIC, TRAJECTORY_VERSION, &enc)
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory> {
    let (body, _) = read_container(path, TRAJECTORY_MAGIC, TRAJECTORY_VERSION)?;
    let mut dec = decoder(&body, path);
    let n_rows = dec.u32()? as usize;
    let n_cols = dec.u32()? as usize;
    let sample_interval = dec.f64()?;
    let n_snapshots = dec.u32()? as usize;
    let mut snapshots = Vec::with_capacity(n_snapshots);
    for _ in 0..n_snapshots {
        let time = dec.f64()?;
        let u = Field2D::from_values(n_rows, n_cols, dec.f64_vec()?)
            .map_err(|_| dec.invalid())?;
        let v = Field2D::from_values(n_rows, n_cols, dec.f64_vec()?)
            .map_err(|_| dec.invalid())?;
        snapshots.push(GridState::new(u, v, time).map_err(|_| dec.invalid())?);
    }
    dec.done()?;
    if snapshots.is_empty() {
        return Err(Error::format(path, FormatErrorKind::InvalidField));
    }
    Ok(Trajectory { snapshots, sample_interval })
}

/// Write a grayscale heatmap of one field: min-max scaled, one pixel per cell.
pub fn save_png_heatmap(field: &Field2D, path: &Path) -> Result<()> {
    let (lo, hi) = (field.min(), field.max());
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut img = image::GrayImage::new(field.n_cols() as u32, field.n_rows() as u32);
    for i in 0..field.n_rows() {
        for j in 0..field.n_cols() {
            let t = (field.get(i, j) - lo) / span;
            img.put_pixel(j as u32, i as u32, image::Luma([(t * 255.0).round() as u8]));
        }
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    img.save(path).map_err(|e| Error::Config(format!("png write failed: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{random_init, simulate, SimParams};

    #[test]
    fn trajectory_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.drst");
        let p = SimParams::default_for_grid(8).unwrap();
        let init = random_init(5, 8, 0.0, 1.0).unwrap();
        let traj = simulate(&init, &p, 0.01, 5).unwrap();
        save_trajectory(&traj, &path).unwrap();
        let loaded = load_trajectory(&path).unwrap();
        assert_eq!(traj, loaded);
    }

    #[test]
    fn corrupted_magic_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.drst");
        let p = SimParams::default_for_grid(4).unwrap();
        let init = random_init(5, 4, 0.0, 1.0).unwrap();
        let traj = simulate(&init, &p, 0.002, 1).unwrap();
        save_trajectory(&traj, &path).unwrap();

        let mut bytes = fs::read(&path).unwrap();
        bytes[0] = b'X';
        fs::write(&path, &bytes).unwrap();
        match load_trajectory(&path) {
            Err(Error::Format { kind, .. }) => assert_eq!(kind, FormatErrorKind::BadMagic),
            other => panic!("expected BadMagic, got {other:?}"),
        }
    }

    #[test]
    fn truncated_and_corrupted_files_get_distinct_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.drst");
        let p = SimParams::default_for_grid(4).unwrap();
        let init = random_init(5, 4, 0.0, 1.0).unwrap();
        let traj = simulate(&init, &p, 0.002, 1).unwrap();
        save_trajectory(&traj, &path).unwrap();
        let bytes = fs::read(&path).unwrap();

        fs::write(&path, &bytes[..10]).unwrap();
        match load_trajectory(&path) {
            Err(Error::Format { kind, .. }) => assert_eq!(kind, FormatErrorKind::Truncated),
            other => panic!("expected Truncated, got {other:?}"),
        }

        let mut flipped = bytes.clone();
        let mid = flipped.len() / 2;
        flipped[mid] ^= 0xff;
        fs::write(&path, &flipped).unwrap();
        match load_trajectory(&path) {
            Err(Error::Format { kind, .. }) => {
                assert_eq!(kind, FormatErrorKind::ChecksumMismatch)
            }
            other => panic!("expected ChecksumMismatch, got {other:?}"),
        }
    }

    #[test]
    fn png_heatmap_writes_a_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.png");
        let f = Field2D::from_fn(16, 16, |i, j| (i + j) as f64);
        save_png_heatmap(&f, &path).unwrap();
        assert!(path.exists());
        let img = image::open(&path).unwrap().to_luma8();
        assert_eq!(img.dimensions(), (16, 16));
    }
}
