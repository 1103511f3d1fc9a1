//! Output files.
//!
//! Space-time fields are stored as raw little-endian `f64` in time-major
//! order (`rows × n_theta`) next to a JSON header with the same stem. CSV and
//! JSON numbers use the shortest representation that round-trips, so files
//! are byte-identical across runs with the same inputs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::{TimeGrid, Trajectory};
use crate::error::{Error, Result};
use crate::grid::{CircleGrid, Field};
use crate::ocp::{IterRecord, SyncSample};

pub const FIELD_DTYPE: &str = "f64le";
pub const FIELD_LAYOUT: &str = "time-major";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub field: String,
    pub units: String,
    pub n_theta: usize,
    /// Number of time steps; zero for a single field.
    pub n_t: usize,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub rows: usize,
    pub dtype: String,
    pub layout: String,
    /// Name of the binary file holding the samples.
    pub data: String,
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_bytes(path, s.as_bytes())
}

fn write_raw(
    stem: &Path,
    name: &str,
    units: &str,
    n_theta: usize,
    n_t: usize,
    t_final: f64,
    data: &[f64],
) -> Result<()> {
    let bin = with_ext(stem, ".f64");
    let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
    write_bytes(&bin, &bytes)?;
    let header = FieldHeader {
        field: name.to_string(),
        units: units.to_string(),
        n_theta,
        n_t,
        t_final,
        rows: data.len() / n_theta,
        dtype: FIELD_DTYPE.into(),
        layout: FIELD_LAYOUT.into(),
        data: bin
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    write_json(&with_ext(stem, ".json"), &header)
}

/// Writes `<stem>.f64` and `<stem>.json`.
pub fn write_trajectory(stem: &Path, name: &str, units: &str, traj: &Trajectory) -> Result<()> {
    let time = traj.time();
    write_raw(
        stem,
        name,
        units,
        traj.grid().n_theta(),
        time.n_t(),
        time.t_final(),
        traj.data(),
    )
}

/// Writes a single field as a one-row file.
pub fn write_field(stem: &Path, name: &str, units: &str, field: &Field) -> Result<()> {
    write_raw(stem, name, units, field.grid().n_theta(), 0, 0.0, field.values())
}

/// Reads a field file written by this module. `path` may name the header,
/// the binary file, or the common stem.
pub fn read_raw(path: &Path) -> Result<(FieldHeader, Vec<f64>)> {
    let stem = match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("f64") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let header_path = with_ext(&stem, ".json");
    let header: FieldHeader = serde_json::from_slice(&read_bytes(&header_path)?)?;
    if header.dtype != FIELD_DTYPE || header.layout != FIELD_LAYOUT {
        return Err(Error::Config(format!(
            "{}: unsupported dtype/layout {}/{}",
            header_path.display(),
            header.dtype,
            header.layout
        )));
    }
    let bin = header_path.with_file_name(&header.data);
    let bytes = read_bytes(&bin)?;
    if bytes.len() != 8 * header.rows * header.n_theta {
        return Err(Error::Config(format!(
            "{}: expected {} rows of {} samples, found {} bytes",
            bin.display(),
            header.rows,
            header.n_theta,
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((header, data))
}

/// Reads row `row` (last row if `None`) of a field file as a field on `grid`.
pub fn read_field(path: &Path, grid: &CircleGrid, row: Option<usize>) -> Result<Field> {
    let (header, data) = read_raw(path)?;
    if header.n_theta != grid.n_theta() {
        return Err(Error::GridMismatch {
            expected: grid.n_theta(),
            got: header.n_theta,
        });
    }
    let row = row.unwrap_or(header.rows - 1);
    if row >= header.rows {
        return Err(Error::Config(format!(
            "{}: row {row} out of range ({} rows)",
            path.display(),
            header.rows
        )));
    }
    let n = header.n_theta;
    Field::new(grid, data[row * n..(row + 1) * n].to_vec())
}

/// Reads a space-time field that must match `grid` and `time`.
pub fn read_trajectory(path: &Path, grid: &CircleGrid, time: &TimeGrid) -> Result<Trajectory> {
    let (header, data) = read_raw(path)?;
    if header.n_theta != grid.n_theta() || header.rows != time.n_rows() {
        return Err(Error::ShapeMismatch(format!(
            "{}: file holds {} x {} samples, run needs {} x {}",
            path.display(),
            header.rows,
            header.n_theta,
            time.n_rows(),
            grid.n_theta()
        )));
    }
    Trajectory::new(grid, time, data)
}

pub fn timeseries_csv(series: &[SyncSample]) -> String {
    let mut s = String::from("t,R,psi,mass,Jq_running\n");
    for x in series {
        let _ = writeln!(s, "{},{},{},{},{}", x.t, x.r, x.psi, x.mass, x.jq_running);
    }
    s
}

pub fn convergence_csv(iterates: &[IterRecord]) -> String {
    let mut s = String::from("iter,J,J_q,J_u,grad_norm,step,backtracks\n");
    for r in iterates {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.iter, r.cost, r.tracking, r.energy, r.grad_norm, r.step, r.backtracks
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::wrapped_gaussian;

    #[test]
    fn field_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let grid = CircleGrid::new(64).unwrap();
        let q = wrapped_gaussian(&grid, 1.3, 0.3).unwrap();
        let stem = dir.path().join("q");
        write_field(&stem, "q", "1/rad", &q).unwrap();
        for p in ["q", "q.json", "q.f64"] {
            let back = read_field(&dir.path().join(p), &grid, None).unwrap();
            assert_eq!(back.values(), q.values());
        }
    }

    #[test]
    fn trajectory_round_trip_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let grid = CircleGrid::new(16).unwrap();
        let time = TimeGrid::new(2.0, 4).unwrap();
        let u = Trajectory::from_fn(&grid, &time, |th, t| th.sin() * t).unwrap();
        let stem = dir.path().join("u1");
        write_trajectory(&stem, "u1", "rad/s", &u).unwrap();
        let (h, _) = read_raw(&stem).unwrap();
        assert_eq!((h.n_theta, h.n_t, h.rows), (16, 4, 5));
        assert_eq!(h.t_final, 2.0);
        let back = read_trajectory(&stem, &grid, &time).unwrap();
        assert_eq!(back.data(), u.data());
        let third = read_field(&stem, &grid, Some(2)).unwrap();
        assert_eq!(third.values(), u.row(2));
    }

    #[test]
    fn mismatched_grid_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let grid = CircleGrid::new(16).unwrap();
        let stem = dir.path().join("z");
        write_field(&stem, "z", "1/rad", &Field::constant(&grid, 1.0)).unwrap();
        let other = CircleGrid::new(32).unwrap();
        assert!(matches!(
            read_field(&stem, &other, None),
            Err(Error::GridMismatch { .. })
        ));
        assert!(read_field(&dir.path().join("missing"), &grid, None).is_err());
    }

    #[test]
    fn csv_formats() {
        let s = timeseries_csv(&[SyncSample {
            t: 0.5,
            r: 0.25,
            psi: 1.0,
            mass: 1.0,
            jq_running: 0.0,
        }]);
        assert_eq!(s, "t,R,psi,mass,Jq_running\n0.5,0.25,1,1,0\n");
    }
}
