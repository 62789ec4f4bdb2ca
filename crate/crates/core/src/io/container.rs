//! Little-endian binary containers for snapshots, bases and models.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::bytes::{Reader, Writer};
use crate::error::{ContainerError, Result};
use crate::flowdata::{Grid, SnapshotMatrix, VelocityField};
use crate::pod::PodBasis;
use crate::rom::LinearRom;

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"SPPIVSNP";
pub const BASIS_MAGIC: &[u8; 8] = b"SPPIVPOD";
pub const ROM_MAGIC: &[u8; 8] = b"SPPIVROM";
pub const VERSION: u32 = 1;

fn dim(msg: impl Into<String>) -> ContainerError {
    ContainerError::Dimension(msg.into())
}

fn to_u32(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| dim(format!("{what} exceeds u32")).into())
}

fn write_grid(w: &mut Writer, g: &Grid) -> Result<()> {
    w.u32(to_u32(g.nx(), "nx")?);
    w.u32(to_u32(g.ny(), "ny")?);
    Ok(())
}

fn read_grid(r: &mut Reader, nx: usize, ny: usize, n_active: usize, dx: f64, dy: f64) -> Result<Arc<Grid>> {
    let len = nx.checked_mul(ny).ok_or_else(|| dim("grid size overflow"))?;
    let mask = r.bits(len)?;
    let grid = Grid::with_mask(nx, ny, dx, dy, mask).map_err(|e| dim(e.to_string()))?;
    if grid.n_active() != n_active {
        return Err(dim(format!("mask has {} active points, header says {n_active}", grid.n_active())).into());
    }
    Ok(Arc::new(grid))
}

fn read_mean(r: &mut Reader, grid: &Arc<Grid>) -> Result<VelocityField> {
    let stacked = r.f64s(2 * grid.n_active())?;
    Ok(VelocityField::from_stacked(grid.clone(), &stacked).map_err(|e| dim(e.to_string()))?)
}

pub fn write_snapshots(x: &SnapshotMatrix) -> Result<Vec<u8>> {
    let g = x.grid();
    let mut w = Writer::new(SNAPSHOT_MAGIC, VERSION);
    write_grid(&mut w, g)?;
    w.u32(to_u32(x.n_snapshots(), "N")?);
    w.u32(to_u32(g.n_active(), "n_active")?);
    w.f64(g.dx());
    w.f64(g.dy());
    w.f64(x.dt());
    w.bits(g.mask());
    w.f64s(x.mean_field().stacked().iter());
    w.f64s(x.data().as_slice());
    Ok(w.buf)
}

pub fn read_snapshots(buf: &[u8]) -> Result<SnapshotMatrix> {
    let mut r = Reader::open(buf, SNAPSHOT_MAGIC, VERSION)?;
    let (nx, ny, n, n_active) = (r.usize()?, r.usize()?, r.usize()?, r.usize()?);
    let (dx, dy, dt) = (r.f64()?, r.f64()?, r.f64()?);
    let grid = read_grid(&mut r, nx, ny, n_active, dx, dy)?;
    let mean = read_mean(&mut r, &grid)?;
    let rows = 2 * n_active;
    let data = r.f64s(rows.checked_mul(n).ok_or_else(|| dim("size overflow"))?)?;
    r.finish()?;
    let data = DMatrix::from_vec(rows, n, data);
    Ok(SnapshotMatrix::from_parts(grid, data, mean, dt).map_err(|e| dim(e.to_string()))?)
}

/// `r`, grid header, mask, `U_r` column-major, sigma, total energy, mean.
pub fn write_basis(b: &PodBasis) -> Result<Vec<u8>> {
    let g = b.grid();
    let mut w = Writer::new(BASIS_MAGIC, VERSION);
    w.u32(to_u32(b.r(), "r")?);
    write_grid(&mut w, g)?;
    w.u32(to_u32(g.n_active(), "n_active")?);
    w.f64(g.dx());
    w.f64(g.dy());
    w.bits(g.mask());
    w.f64s(b.modes().as_slice());
    w.f64s(b.sigma());
    w.f64(b.sigma_full_sq_sum());
    w.f64s(b.mean_field().stacked().iter());
    Ok(w.buf)
}

pub fn read_basis(buf: &[u8]) -> Result<PodBasis> {
    let mut r = Reader::open(buf, BASIS_MAGIC, VERSION)?;
    let (rank, nx, ny, n_active) = (r.usize()?, r.usize()?, r.usize()?, r.usize()?);
    let (dx, dy) = (r.f64()?, r.f64()?);
    let grid = read_grid(&mut r, nx, ny, n_active, dx, dy)?;
    let rows = 2 * n_active;
    let modes = DMatrix::from_vec(rows, rank, r.f64s(rows.checked_mul(rank).ok_or_else(|| dim("size overflow"))?)?);
    let sigma = r.f64s(rank)?;
    let total = r.f64()?;
    let mean = read_mean(&mut r, &grid)?;
    r.finish()?;
    Ok(PodBasis::from_parts(modes, sigma, total, grid, mean).map_err(|e| dim(e.to_string()))?)
}

/// `r`, `2p`, `F` row-major, `Q`, `R`.
pub fn write_rom(m: &LinearRom) -> Result<Vec<u8>> {
    let mut w = Writer::new(ROM_MAGIC, VERSION);
    w.u32(to_u32(m.r(), "r")?);
    w.u32(to_u32(m.r_obs.len(), "observation count")?);
    w.f64s(m.f.transpose().as_slice());
    w.f64s(m.q.iter());
    w.f64s(m.r_obs.iter());
    Ok(w.buf)
}

pub fn read_rom(buf: &[u8]) -> Result<LinearRom> {
    let mut r = Reader::open(buf, ROM_MAGIC, VERSION)?;
    let (rank, obs) = (r.usize()?, r.usize()?);
    let f = r.f64s(rank.checked_mul(rank).ok_or_else(|| dim("size overflow"))?)?;
    let q = r.f64s(rank)?;
    let ro = r.f64s(obs)?;
    r.finish()?;
    let f = DMatrix::from_row_slice(rank, rank, &f);
    Ok(LinearRom::new(f, DVector::from_vec(q), DVector::from_vec(ro)).map_err(|e| dim(e.to_string()))?)
}

pub fn save_snapshots(path: impl AsRef<Path>, x: &SnapshotMatrix) -> Result<()> {
    Ok(fs::write(path, write_snapshots(x)?)?)
}

pub fn load_snapshots(path: impl AsRef<Path>) -> Result<SnapshotMatrix> {
    read_snapshots(&fs::read(path)?)
}

pub fn save_basis(path: impl AsRef<Path>, b: &PodBasis) -> Result<()> {
    Ok(fs::write(path, write_basis(b)?)?)
}

pub fn load_basis(path: impl AsRef<Path>) -> Result<PodBasis> {
    read_basis(&fs::read(path)?)
}

pub fn save_rom(path: impl AsRef<Path>, m: &LinearRom) -> Result<()> {
    Ok(fs::write(path, write_rom(m)?)?)
}

pub fn load_rom(path: impl AsRef<Path>) -> Result<LinearRom> {
    read_rom(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn sample() -> SnapshotMatrix {
        let mask = vec![false, true, false, false, false, true];
        let grid = Arc::new(Grid::with_mask(3, 2, 0.5, 0.25, mask).unwrap());
        let fields: Vec<_> = (0..10)
            .map(|k| {
                let k = k as f64;
                let u = (0..4).map(|i| (k * 0.37 + i as f64).sin()).collect();
                let v = (0..4).map(|i| (k * 0.11 - i as f64).cos() / 3.0).collect();
                VelocityField::new(grid.clone(), u, v).unwrap()
            })
            .collect();
        SnapshotMatrix::assemble(&fields, 1e-3).unwrap()
    }

    fn code(e: Error) -> &'static str {
        e.code()
    }

    #[test]
    fn snapshot_round_trip_is_bit_exact() {
        let x = sample();
        let y = read_snapshots(&write_snapshots(&x).unwrap()).unwrap();
        assert_eq!(x.data(), y.data());
        assert_eq!(x.mean_field().stacked(), y.mean_field().stacked());
        assert_eq!(**x.grid(), **y.grid());
        assert_eq!(x.dt().to_bits(), y.dt().to_bits());
    }

    #[test]
    fn header_layout() {
        let buf = write_snapshots(&sample()).unwrap();
        assert_eq!(&buf[..8], b"SPPIVSNP");
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[12..16].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(buf[16..20].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(buf[20..24].try_into().unwrap()), 10);
        assert_eq!(u32::from_le_bytes(buf[24..28].try_into().unwrap()), 4);
        assert_eq!(f64::from_le_bytes(buf[28..36].try_into().unwrap()), 0.5);
        // 6 mask bits in one byte, 2 * 4 mean values, 8 * 10 data values
        assert_eq!(buf.len(), 52 + 1 + 8 * 8 + 8 * 80);
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let buf = write_snapshots(&sample()).unwrap();
        for cut in [3, 20, buf.len() - 3] {
            assert_eq!(code(read_snapshots(&buf[..cut]).unwrap_err()), "corrupt_container", "cut {cut}");
        }
    }

    #[test]
    fn missing_column_is_dimension_error() {
        let buf = write_snapshots(&sample()).unwrap();
        let short = &buf[..buf.len() - 8 * 8];
        assert_eq!(code(read_snapshots(short).unwrap_err()), "dimension_error");
    }

    #[test]
    fn magic_version_and_nan_have_distinct_codes() {
        let buf = write_snapshots(&sample()).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert_eq!(code(read_snapshots(&bad).unwrap_err()), "bad_magic");
        let mut bad = buf.clone();
        bad[8] = 2;
        assert_eq!(code(read_snapshots(&bad).unwrap_err()), "version_mismatch");
        let mut bad = buf.clone();
        let n = bad.len();
        bad[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert_eq!(code(read_snapshots(&bad).unwrap_err()), "non_finite_payload");
        assert_eq!(code(read_basis(&buf).unwrap_err()), "bad_magic");
    }

    #[test]
    fn basis_and_rom_round_trip() {
        let x = sample();
        let (basis, _) = crate::pod::compute_pod(&x, 3).unwrap();
        let b2 = read_basis(&write_basis(&basis).unwrap()).unwrap();
        assert_eq!(basis.modes(), b2.modes());
        assert_eq!(basis.sigma(), b2.sigma());
        assert_eq!(basis.sigma_full_sq_sum(), b2.sigma_full_sq_sum());

        let f = DMatrix::from_fn(3, 3, |i, j| (i * 3 + j) as f64 * 0.1);
        let rom = LinearRom::new(f, DVector::from_vec(vec![1.0, 2.0, 3.0]), DVector::from_vec(vec![0.5; 4])).unwrap();
        let buf = write_rom(&rom).unwrap();
        // row-major F: second stored value is F[0,1]
        assert_eq!(f64::from_le_bytes(buf[28..36].try_into().unwrap()), 0.1);
        assert_eq!(read_rom(&buf).unwrap(), rom);
    }
}
