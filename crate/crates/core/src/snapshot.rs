//! Flat binary snapshot records and the text manifest that indexes them.
//!
//! Record layout (little endian): magic `NLWD`, `u32` version word, `u64 n`,
//! `f64` t, dr, dt, p, gamma0, then `n+1` values of ψ and `n+1` values of
//! ∂_tψ. Bit 16 of the version word marks fields given in image-cone
//! coordinates.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::PowerParams;
use crate::profiles::InitialData;
use crate::solver::{FieldState, Model, RadialGrid, Trajectory};

pub const MAGIC: [u8; 4] = *b"NLWD";
pub const FORMAT_VERSION: u32 = 1;
pub const IMAGE_CONE_FLAG: u32 = 1 << 16;
const HEADER_BYTES: u64 = 4 + 4 + 8 + 5 * 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotHeader {
    pub version: u32,
    pub image_cone: bool,
    pub n: u64,
    pub t: f64,
    pub dr: f64,
    pub dt: f64,
    pub p: f64,
    pub gamma0: f64,
}

impl SnapshotHeader {
    pub fn record_bytes(&self) -> u64 {
        HEADER_BYTES + 16 * (self.n + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotRecord {
    pub header: SnapshotHeader,
    pub psi: Vec<f64>,
    pub pi: Vec<f64>,
}

impl SnapshotRecord {
    pub fn from_state(state: &FieldState, grid: &RadialGrid, params: &PowerParams) -> Self {
        Self {
            header: SnapshotHeader {
                version: FORMAT_VERSION,
                image_cone: false,
                n: state.n() as u64,
                t: state.t,
                dr: grid.dr,
                dt: grid.dt,
                p: params.p(),
                gamma0: params.gamma0(),
            },
            psi: state.psi.clone(),
            pi: state.pi.clone(),
        }
    }

    pub fn state(&self) -> FieldState {
        FieldState {
            t: self.header.t,
            psi: self.psi.clone(),
            pi: self.pi.clone(),
        }
    }
}

pub fn write_record<W: Write>(w: &mut W, rec: &SnapshotRecord) -> Result<u64> {
    let h = &rec.header;
    let len = h.n as usize + 1;
    if rec.psi.len() != len || rec.pi.len() != len {
        return Err(Error::Format(format!(
            "record arrays have lengths {} and {}, header says {len}",
            rec.psi.len(),
            rec.pi.len()
        )));
    }
    let word = h.version | if h.image_cone { IMAGE_CONE_FLAG } else { 0 };
    w.write_all(&MAGIC)?;
    w.write_all(&word.to_le_bytes())?;
    w.write_all(&h.n.to_le_bytes())?;
    for x in [h.t, h.dr, h.dt, h.p, h.gamma0] {
        w.write_all(&x.to_le_bytes())?;
    }
    for x in rec.psi.iter().chain(&rec.pi) {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(h.record_bytes())
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_record<R: Read>(r: &mut R) -> Result<SnapshotRecord> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let word = u32::from_le_bytes(b4);
    let version = word & 0xffff;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let n = u64::from_le_bytes(b8);
    if n > (1 << 32) {
        return Err(Error::Format(format!("implausible node count {n}")));
    }
    let header = SnapshotHeader {
        version,
        image_cone: word & IMAGE_CONE_FLAG != 0,
        n,
        t: read_f64(r)?,
        dr: read_f64(r)?,
        dt: read_f64(r)?,
        p: read_f64(r)?,
        gamma0: read_f64(r)?,
    };
    let len = n as usize + 1;
    let mut bytes = vec![0u8; 16 * len];
    r.read_exact(&mut bytes)?;
    let mut vals = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")));
    let psi: Vec<f64> = vals.by_ref().take(len).collect();
    let pi: Vec<f64> = vals.collect();
    Ok(SnapshotRecord { header, psi, pi })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManifestEntry {
    pub offset: u64,
    pub t: f64,
}

/// Paths of a persisted trajectory.
#[derive(Debug, Clone)]
pub struct PersistedTrajectory {
    pub data: PathBuf,
    pub manifest: PathBuf,
}

/// Writes every record to `<stem>.bin` and the offsets to `<stem>.manifest`.
pub fn write_records(dir: &Path, stem: &str, records: &[SnapshotRecord]) -> Result<PersistedTrajectory> {
    std::fs::create_dir_all(dir)?;
    let data = dir.join(format!("{stem}.bin"));
    let manifest = dir.join(format!("{stem}.manifest"));
    let mut w = BufWriter::new(File::create(&data)?);
    let mut m = BufWriter::new(File::create(&manifest)?);
    writeln!(m, "# nlw snapshot manifest v{FORMAT_VERSION}")?;
    writeln!(m, "data {stem}.bin")?;
    writeln!(m, "records {}", records.len())?;
    let mut offset = 0u64;
    for (k, rec) in records.iter().enumerate() {
        writeln!(m, "{k} {offset} {:e}", rec.header.t)?;
        offset += write_record(&mut w, rec)?;
    }
    w.flush()?;
    m.flush()?;
    Ok(PersistedTrajectory { data, manifest })
}

pub fn write_trajectory(dir: &Path, stem: &str, traj: &Trajectory) -> Result<PersistedTrajectory> {
    let records: Vec<_> = traj
        .snapshots
        .iter()
        .map(|s| SnapshotRecord::from_state(s, &traj.grid, &traj.params))
        .collect();
    write_records(dir, stem, &records)
}

/// Parses a manifest; returns the data file path and the entries.
pub fn read_manifest(path: &Path) -> Result<(PathBuf, Vec<ManifestEntry>)> {
    let reader = BufReader::new(File::open(path)?);
    let mut data = None;
    let mut entries = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.as_slice() {
            ["data", name] => data = Some(path.with_file_name(name)),
            ["records", _] => {}
            [_, off, t] => {
                let offset = off
                    .parse()
                    .map_err(|_| Error::Format(format!("bad offset in manifest line '{line}'")))?;
                let t = t
                    .parse()
                    .map_err(|_| Error::Format(format!("bad time in manifest line '{line}'")))?;
                entries.push(ManifestEntry { offset, t });
            }
            _ => return Err(Error::Format(format!("unrecognized manifest line '{line}'"))),
        }
    }
    let data = data.ok_or_else(|| Error::Format("manifest names no data file".into()))?;
    Ok((data, entries))
}

pub fn read_record_at(path: &Path, offset: u64) -> Result<SnapshotRecord> {
    let mut f = BufReader::new(File::open(path)?);
    f.seek(SeekFrom::Start(offset))?;
    read_record(&mut f)
}

/// Reads all records of a data file in order.
pub fn read_all(path: &Path) -> Result<Vec<SnapshotRecord>> {
    let len = std::fs::metadata(path)?.len();
    let mut f = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < len {
        let rec = read_record(&mut f)?;
        pos += rec.header.record_bytes();
        out.push(rec);
    }
    Ok(out)
}

/// Rebuilds a trajectory from persisted records.
pub fn load_trajectory(manifest: &Path, params: PowerParams, model: Model, data: InitialData) -> Result<Trajectory> {
    let (path, entries) = read_manifest(manifest)?;
    let records = read_all(&path)?;
    if records.len() != entries.len() || records.is_empty() {
        return Err(Error::Format(format!(
            "manifest lists {} records, data file holds {}",
            entries.len(),
            records.len()
        )));
    }
    let h = records[0].header;
    let grid = RadialGrid::new(h.n as f64 * h.dr, h.n as usize, h.dt / h.dr)?;
    Ok(Trajectory {
        grid,
        params,
        model,
        data,
        snapshots: records.iter().map(SnapshotRecord::state).collect(),
        truncated_at: None,
        scheme_order: 2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::Profile;
    use crate::solver::simulate;

    #[test]
    fn record_round_trip_and_flag() {
        let rec = SnapshotRecord {
            header: SnapshotHeader {
                version: FORMAT_VERSION,
                image_cone: true,
                n: 3,
                t: 1.5,
                dr: 0.25,
                dt: 0.125,
                p: 3.0,
                gamma0: 1.5,
            },
            psi: vec![0.0, 1.0, -2.0, f64::NAN],
            pi: vec![0.0, 0.5, 0.25, 0.125],
        };
        let mut buf = Vec::new();
        let bytes = write_record(&mut buf, &rec).unwrap();
        assert_eq!(bytes as usize, buf.len());
        assert_eq!(&buf[..4], b"NLWD");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1 | IMAGE_CONE_FLAG);
        let back = read_record(&mut buf.as_slice()).unwrap();
        assert_eq!(back.header, rec.header);
        assert!(back.psi[3].is_nan());
        assert_eq!(back.pi, rec.pi);
    }

    #[test]
    fn rejects_bad_magic() {
        let buf = vec![0u8; 64];
        assert!(matches!(read_record(&mut buf.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn trajectory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = PowerParams::new(3.0, 1.5, 0.01).unwrap();
        let g = RadialGrid::new(6.0, 64, 0.5).unwrap();
        let data = InitialData::at_rest(Profile::gaussian(1.0, 1.0).unwrap());
        let model = Model::full_space(&p);
        let tr = simulate(&data, 1.0, 0.25, &model, &p, &g).unwrap();
        let files = write_trajectory(dir.path(), "run", &tr).unwrap();
        let (path, entries) = read_manifest(&files.manifest).unwrap();
        assert_eq!(path, files.data);
        assert_eq!(entries.len(), 5);
        let third = read_record_at(&path, entries[2].offset).unwrap();
        assert_eq!(third.state(), tr.snapshots[2]);
        let back = load_trajectory(&files.manifest, p, model, data).unwrap();
        assert_eq!(back.snapshots, tr.snapshots);
        assert_eq!(back.grid.n, g.n);
    }
}
