//! Structured grids on the unit cube and the fields that live on them.
//!
//! Unknowns sit at interior points only: an axis with `n` points has spacing
//! `1/(n+1)` and coordinates `(i+1)/(n+1)`. Values are stored flat with the
//! x index running fastest, `i = ix + nx*(iy + ny*iz)`.
//!
//! An axis with a single point is treated as collapsed: the stencil has no
//! neighbors along it, so `3x1x1` is a 1D problem and `8x8x1` a 2D one.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::{Scalar, ScalarKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Grid3D {
    nx: usize,
    ny: usize,
    nz: usize,
}

impl Grid3D {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::invalid(format!(
                "grid dimensions must be positive, got {nx}x{ny}x{nz}"
            )));
        }
        nx.checked_mul(ny)
            .and_then(|p| p.checked_mul(nz))
            .ok_or_else(|| Error::invalid("grid size overflows usize"))?;
        Ok(Grid3D { nx, ny, nz })
    }

    pub fn cube(n: usize) -> Result<Self> {
        Self::new(n, n, n)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn nz(&self) -> usize {
        self.nz
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    /// Total number of points.
    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Points in one z-plane.
    pub fn plane_len(&self) -> usize {
        self.nx * self.ny
    }

    /// Per-axis spacing `1/(n+1)`.
    pub fn spacing(&self) -> [f64; 3] {
        self.dims().map(|n| 1.0 / (n as f64 + 1.0))
    }

    /// Spacing along x; equal to every axis spacing on cubic grids.
    pub fn dx(&self) -> f64 {
        self.spacing()[0]
    }

    /// Whether the axis carries stencil neighbors (more than one point).
    pub fn active(&self) -> [bool; 3] {
        self.dims().map(|n| n > 1)
    }

    pub fn linear_index(&self, ix: usize, iy: usize, iz: usize) -> Result<usize> {
        if ix >= self.nx || iy >= self.ny || iz >= self.nz {
            return Err(Error::Index {
                ix,
                iy,
                iz,
                nx: self.nx,
                ny: self.ny,
                nz: self.nz,
            });
        }
        Ok(self.index(ix, iy, iz))
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        debug_assert!(ix < self.nx && iy < self.ny && iz < self.nz);
        ix + self.nx * (iy + self.ny * iz)
    }

    #[inline]
    pub fn triple(&self, i: usize) -> (usize, usize, usize) {
        let ix = i % self.nx;
        let rest = i / self.nx;
        (ix, rest % self.ny, rest / self.ny)
    }

    /// Physical coordinate of interior point `(ix, iy, iz)`.
    #[inline]
    pub fn position(&self, ix: usize, iy: usize, iz: usize) -> [f64; 3] {
        let h = self.spacing();
        [
            (ix as f64 + 1.0) * h[0],
            (iy as f64 + 1.0) * h[1],
            (iz as f64 + 1.0) * h[2],
        ]
    }
}

impl fmt::Display for Grid3D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.nx, self.ny, self.nz)
    }
}

/// Flat array of values bound to a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Field<T> {
    grid: Grid3D,
    values: Vec<T>,
}

impl<T: Scalar> Field<T> {
    pub fn zeros(grid: Grid3D) -> Self {
        Field {
            grid,
            values: vec![T::zero(); grid.len()],
        }
    }

    pub fn from_values(grid: Grid3D, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension {
                expected: grid.len(),
                actual: values.len(),
            });
        }
        Ok(Field { grid, values })
    }

    /// Samples `f` at every interior point. Fails on the first non-finite value.
    pub fn from_fn(grid: Grid3D, f: impl Fn(f64, f64, f64) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.len());
        for iz in 0..grid.nz {
            for iy in 0..grid.ny {
                for ix in 0..grid.nx {
                    let [x, y, z] = grid.position(ix, iy, iz);
                    let v = f(x, y, z);
                    if !v.is_finite() {
                        return Err(Error::NonFinite {
                            what: "function evaluation",
                            value: v,
                            x,
                            y,
                            z,
                        });
                    }
                    values.push(T::from_f64(v));
                }
            }
        }
        Ok(Field { grid, values })
    }

    pub fn grid(&self) -> Grid3D {
        self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, ix: usize, iy: usize, iz: usize) -> Result<T> {
        Ok(self.values[self.grid.linear_index(ix, iy, iz)?])
    }

    pub fn max_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Raw little-endian format: `nx, ny, nz` as u64, one kind byte, then values.
    pub fn write_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::with_capacity(25 + self.len() * T::KIND.bytes());
        for d in self.grid.dims() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        buf.push(T::KIND.code());
        for v in &self.values {
            v.write_le(&mut buf);
        }
        let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        out.write_all(&buf)
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn read_binary(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?)
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io(path, e))?;
        let bad = |message: String| Error::Parse {
            path: path.display().to_string(),
            line: 0,
            message,
        };
        if bytes.len() < 25 {
            return Err(bad("truncated header".into()));
        }
        let mut dims = [0usize; 3];
        for (k, d) in dims.iter_mut().enumerate() {
            let raw = u64::from_le_bytes(bytes[8 * k..8 * k + 8].try_into().expect("8 bytes"));
            *d = usize::try_from(raw).map_err(|_| bad(format!("dimension {raw} too large")))?;
        }
        let kind = ScalarKind::from_code(bytes[24])
            .ok_or_else(|| bad(format!("unknown scalar kind tag {}", bytes[24])))?;
        if kind != T::KIND {
            return Err(bad(format!(
                "file holds {kind} values, expected {}",
                T::KIND
            )));
        }
        let grid = Grid3D::new(dims[0], dims[1], dims[2])?;
        let width = kind.bytes();
        let body = &bytes[25..];
        if body.len() != grid.len() * width {
            return Err(bad(format!(
                "expected {} value bytes, found {}",
                grid.len() * width,
                body.len()
            )));
        }
        let values = body.chunks_exact(width).map(T::read_le).collect();
        Ok(Field { grid, values })
    }

    /// CSV with header `index,value` (real) or `index,re,im` (complex).
    /// The grid dimensions travel in a leading `# nx,ny,nz` comment line.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let [nx, ny, nz] = self.grid.dims();
        writeln!(out, "# {nx},{ny},{nz}").map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(out);
        if T::KIND.is_complex() {
            w.write_record(["index", "re", "im"])?;
        } else {
            w.write_record(["index", "value"])?;
        }
        for (i, v) in self.values.iter().enumerate() {
            let (re, im) = v.format_parts();
            match im {
                Some(im) => w.write_record([i.to_string(), re, im])?,
                None => w.write_record([i.to_string(), re])?,
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bad = |line: usize, message: String| Error::Parse {
            path: path.display().to_string(),
            line,
            message,
        };
        let (first, rest) = text.split_once('\n').unwrap_or((&text, ""));
        let dims: Vec<usize> = first
            .trim()
            .strip_prefix('#')
            .ok_or_else(|| bad(1, "missing `# nx,ny,nz` line".into()))?
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad(1, "invalid grid dimensions".into()))?;
        if dims.len() != 3 {
            return Err(bad(1, "expected three grid dimensions".into()));
        }
        let grid = Grid3D::new(dims[0], dims[1], dims[2])?;
        let mut values = vec![T::zero(); grid.len()];
        let mut seen = vec![false; grid.len()];
        let mut reader = csv::Reader::from_reader(rest.as_bytes());
        for (k, rec) in reader.records().enumerate() {
            // header is line 2, first record line 3
            let line = k + 3;
            let rec = rec?;
            let idx: usize = rec
                .get(0)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| bad(line, "invalid index".into()))?;
            if idx >= grid.len() || seen[idx] {
                return Err(bad(line, format!("index {idx} out of range or repeated")));
            }
            let re = rec.get(1).ok_or_else(|| bad(line, "missing value".into()))?;
            values[idx] = T::parse_parts(re, rec.get(2)).map_err(|m| bad(line, m))?;
            seen[idx] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(bad(0, format!("no value for index {missing}")));
        }
        Ok(Field { grid, values })
    }

    /// Picks binary or CSV by extension (`.csv` is CSV, anything else binary).
    pub fn write_auto(&self, path: impl AsRef<Path>) -> Result<()> {
        if is_csv(path.as_ref()) {
            self.write_csv(path)
        } else {
            self.write_binary(path)
        }
    }

    pub fn read_auto(path: impl AsRef<Path>) -> Result<Self> {
        if is_csv(path.as_ref()) {
            Self::read_csv(path)
        } else {
            Self::read_binary(path)
        }
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Samples a real function on the grid.
pub fn eval_on_grid(grid: Grid3D, f: impl Fn(f64, f64, f64) -> f64) -> Result<Field<f64>> {
    Field::from_fn(grid, f)
}
