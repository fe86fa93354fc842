//! Plain-text and binary artifact formats.
//!
//! Floats are written with Rust's shortest round-trip formatting, so equal
//! inputs give byte-identical files.
//!
//! The binary snapshot file starts with a 16-byte header: the magic
//! `b"MKDVSNAP"`, a little-endian `u32` format version and a `u32` point
//! count `n`. Each record is `t`, the grid half-width and `n` values, all
//! little-endian `f64`.

use std::io::{Read, Write};

use crate::effective::EffectiveTrajectory;
use crate::error::{Error, Result};
use crate::grid::LineGrid;
use crate::operator::SpectrumSummary;
use crate::solver::FieldState;
use crate::tracker::TrackPoint;

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"MKDVSNAP";
pub const SNAPSHOT_VERSION: u32 = 1;

/// Long-form `t,x,u`.
pub fn write_snapshots_csv<W: Write>(mut w: W, snaps: &[FieldState]) -> Result<()> {
    writeln!(w, "t,x,u")?;
    for s in snaps {
        for (j, u) in s.values.iter().enumerate() {
            writeln!(w, "{},{},{}", s.t, s.grid.x(j), u)?;
        }
    }
    Ok(())
}

pub fn write_trajectory_csv<W: Write>(mut w: W, traj: &EffectiveTrajectory) -> Result<()> {
    writeln!(w, "t,a1,a2,c1,c2,valid")?;
    for (s, v) in traj.states.iter().zip(&traj.valid) {
        writeln!(w, "{},{},{},{},{},{}", s.t, s.a[0], s.a[1], s.c[0], s.c[1], u8::from(*v))?;
    }
    Ok(())
}

pub fn write_fit_csv<W: Write>(mut w: W, fits: &[TrackPoint]) -> Result<()> {
    writeln!(w, "t,a1,a2,c1,c2,h2err,iters")?;
    for p in fits {
        writeln!(w, "{},{},{},{},{},{},{}", p.t, p.a[0], p.a[1], p.c[0], p.c[1], p.h2_error, p.iters)?;
    }
    Ok(())
}

pub fn write_spectrum_csv<W: Write>(mut w: W, s: &SpectrumSummary) -> Result<()> {
    writeln!(w, "lambda_index,lambda")?;
    for (i, l) in s.eigenvalues.iter().enumerate() {
        writeln!(w, "{i},{l}")?;
    }
    Ok(())
}

pub fn write_snapshots_binary<W: Write>(mut w: W, snaps: &[FieldState]) -> Result<()> {
    let n = snaps.first().map_or(0, |s| s.values.len());
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
    w.write_all(&u32::try_from(n).map_err(|_| Error::Io("grid too large".into()))?.to_le_bytes())?;
    for s in snaps {
        if s.values.len() != n {
            return Err(Error::Io("snapshots on different grids".into()));
        }
        w.write_all(&s.t.to_le_bytes())?;
        w.write_all(&s.grid.half_width().to_le_bytes())?;
        for v in &s.values {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_snapshots_binary<R: Read>(mut r: R) -> Result<Vec<FieldState>> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    if &header[..8] != SNAPSHOT_MAGIC {
        return Err(Error::Io("not a snapshot file".into()));
    }
    let version = u32::from_le_bytes(header[8..12].try_into().expect("4 bytes"));
    if version != SNAPSHOT_VERSION {
        return Err(Error::Io(format!("unsupported snapshot version {version}")));
    }
    let n = u32::from_le_bytes(header[12..16].try_into().expect("4 bytes")) as usize;
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    let record = 8 * (n + 2);
    if n == 0 || body.len() % record != 0 {
        return Err(Error::Io("truncated snapshot file".into()));
    }
    let f = |b: &[u8]| f64::from_le_bytes(b.try_into().expect("8 bytes"));
    let mut grid: Option<LineGrid> = None;
    body.chunks(record)
        .map(|rec| {
            let (t, hw) = (f(&rec[..8]), f(&rec[8..16]));
            let g = match &grid {
                Some(g) if g.half_width() == hw => g.clone(),
                _ => {
                    let g = LineGrid::new(n, hw)?;
                    grid = Some(g.clone());
                    g
                }
            };
            let values = rec[16..].chunks(8).map(f).collect();
            Ok(FieldState::new(t, values, &g))
        })
        .collect()
}
