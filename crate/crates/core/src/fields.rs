//! Grid-sampled fields on Nil³ with exact twisted-periodic access.
//!
//! A field stores `N³` samples at `(x, y, z) = (i h, j h, k h)`, `h = 1/N`, with `k`
//! varying fastest. Out-of-range indices are resolved through the lattice action:
//! `x` and `z` wrap plainly, and crossing the `y` seam shifts `z` by `x`, which is an
//! integer number of cells because all axes share the same `N`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, GridIndex, Result};
use crate::scalar::Real;

pub const MIN_GRID: usize = 8;

/// Upper bound on map components, so per-point scratch can live on the stack.
pub const MAX_COMPONENTS: usize = 8;

const POINT_CHUNK: usize = 1024;

/// Uniform `N × N × N` grid on the fundamental domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
}

impl Grid {
    pub fn new(n: usize) -> Result<Self> {
        if n < MIN_GRID {
            return Err(Error::InvalidArgument(format!("grid size {n} < {MIN_GRID}")));
        }
        Ok(Grid { n })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid spacing `1/N`.
    #[inline]
    pub fn h<T: Real>(&self) -> T {
        T::one() / T::from_usize_lossy(self.n)
    }

    /// Cell volume `h³`.
    #[inline]
    pub fn cell_volume<T: Real>(&self) -> T {
        let h = self.h::<T>();
        h * h * h
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    #[inline]
    pub fn unravel(&self, idx: usize) -> GridIndex {
        let k = idx % self.n;
        let j = (idx / self.n) % self.n;
        (idx / (self.n * self.n), j, k)
    }

    /// Coordinate of index `i` along any axis.
    #[inline]
    pub fn coord<T: Real>(&self, i: usize) -> T {
        T::from_usize_lossy(i) / T::from_usize_lossy(self.n)
    }

    pub fn point<T: Real>(&self, i: usize, j: usize, k: usize) -> [T; 3] {
        [self.coord(i), self.coord(j), self.coord(k)]
    }

    /// Resolves arbitrary integer indices to the stored in-range triple.
    pub fn wrap(&self, i: isize, j: isize, k: isize) -> GridIndex {
        let n = self.n as isize;
        let mut k = k;
        // f(x, y + 1, z) = f(x, y, z − x); x = i/N so the z shift is i cells.
        let q = j.div_euclid(n);
        let j = j.rem_euclid(n);
        k -= q * i;
        (i.rem_euclid(n) as usize, j as usize, k.rem_euclid(n) as usize)
    }

    /// Flat offsets of the `(i, j ± 1, ·)` rows and the z shift each row carries.
    ///
    /// Returns `((row_plus, shift_plus), (row_minus, shift_minus))`, where the value at
    /// `(i, j + 1, k)` is stored at `row_plus + (k − shift_plus) mod N`.
    #[inline]
    pub(crate) fn y_neighbors(&self, i: usize, j: usize) -> ((usize, usize), (usize, usize)) {
        let n = self.n;
        let plus = if j + 1 == n {
            (self.index(i, 0, 0), i % n)
        } else {
            (self.index(i, j + 1, 0), 0)
        };
        let minus = if j == 0 {
            // (i, −1, k) → (i, N − 1, k + i)
            (self.index(i, n - 1, 0), (n - i % n) % n)
        } else {
            (self.index(i, j - 1, 0), 0)
        };
        (plus, minus)
    }
}

/// Scalar function on Nil³ sampled on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField<T> {
    grid: Grid,
    data: Vec<T>,
}

impl<T: Real> ScalarField<T> {
    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, T::zero())
    }

    pub fn constant(grid: Grid, c: T) -> Self {
        ScalarField { grid, data: vec![c; grid.len()] }
    }

    pub fn from_vec(grid: Grid, data: Vec<T>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} samples, got {}",
                grid.len(),
                data.len()
            )));
        }
        Ok(ScalarField { grid, data })
    }

    /// Samples `f(x, y, z)` at every grid point. The caller is responsible for `f`
    /// being lattice invariant if the field is meant to be smooth on the quotient.
    pub fn from_fn<F>(grid: Grid, f: F) -> Self
    where
        F: Fn(T, T, T) -> T + Sync,
    {
        let n = grid.n();
        let mut data = vec![T::zero(); grid.len()];
        data.par_chunks_mut(n * n).enumerate().for_each(|(i, slab)| {
            let x = grid.coord(i);
            for j in 0..n {
                let y = grid.coord(j);
                for k in 0..n {
                    slab[j * n + k] = f(x, y, grid.coord(k));
                }
            }
        });
        ScalarField { grid, data }
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.grid
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> T {
        self.data[self.grid.index(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: T) {
        let idx = self.grid.index(i, j, k);
        self.data[idx] = v;
    }

    /// Value at arbitrary integer indices under the twisted-periodic identification.
    #[inline]
    pub fn get_wrapped(&self, i: isize, j: isize, k: isize) -> T {
        let (i, j, k) = self.grid.wrap(i, j, k);
        self.get(i, j, k)
    }

    pub fn map(&self, f: impl Fn(T) -> T + Sync) -> Self {
        ScalarField { grid: self.grid, data: self.data.par_iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T + Sync) -> Self {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        let data = self.data.par_iter().zip(other.data.par_iter()).map(|(&a, &b)| f(a, b)).collect();
        ScalarField { grid: self.grid, data }
    }

    /// `self += a · other`
    pub fn axpy(&mut self, a: T, other: &Self) {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        self.data.par_iter_mut().zip(other.data.par_iter()).for_each(|(s, &o)| *s = *s + a * o);
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> T {
        self.data.iter().fold(T::neg_infinity(), |m, &v| m.max(v))
    }

    pub fn min(&self) -> T {
        self.data.iter().fold(T::infinity(), |m, &v| m.min(v))
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(idx) => Err(Error::NonFinite { at: self.grid.unravel(idx) }),
            None => Ok(()),
        }
    }
}

/// Map `M → ℝ^K` (extrinsic) or into a `K`-dimensional chart (intrinsic).
#[derive(Debug, Clone, PartialEq)]
pub struct MapField<T> {
    grid: Grid,
    components: Vec<ScalarField<T>>,
}

impl<T: Real> MapField<T> {
    pub fn new(components: Vec<ScalarField<T>>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidArgument("map needs at least one component".into()))?;
        let grid = first.grid();
        if components.iter().any(|c| c.grid() != grid) {
            return Err(Error::InvalidArgument("components live on different grids".into()));
        }
        Ok(MapField { grid, components })
    }

    pub fn zeros(grid: Grid, k: usize) -> Self {
        MapField { grid, components: vec![ScalarField::zeros(grid); k] }
    }

    /// Builds a map pointwise; `f` writes the `K` values for `(x, y, z)` into `out`.
    pub fn from_fn<F>(grid: Grid, k: usize, f: F) -> Self
    where
        F: Fn([T; 3], &mut [T]) + Sync,
    {
        let empty = MapField { grid, components: Vec::new() };
        empty.map_points_sized(k, 0, |idx, _, out| {
            let (i, j, kk) = grid.unravel(idx);
            f(grid.point(i, j, kk), out)
        })
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Number of components `K`.
    #[inline]
    pub fn dim(&self) -> usize {
        self.components.len()
    }

    #[inline]
    pub fn component(&self, a: usize) -> &ScalarField<T> {
        &self.components[a]
    }

    #[inline]
    pub fn component_mut(&mut self, a: usize) -> &mut ScalarField<T> {
        &mut self.components[a]
    }

    pub fn components(&self) -> &[ScalarField<T>] {
        &self.components
    }

    pub fn into_components(self) -> Vec<ScalarField<T>> {
        self.components
    }

    /// Copies the `K` values at flat index `idx` into `out`.
    #[inline]
    pub fn read_point(&self, idx: usize, out: &mut [T]) {
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = c.data[idx];
        }
    }

    #[inline]
    pub fn write_point(&mut self, idx: usize, vals: &[T]) {
        for (c, &v) in self.components.iter_mut().zip(vals) {
            c.data[idx] = v;
        }
    }

    /// Applies `f(idx, point_in, point_out)` at every grid point, producing a new map
    /// of dimension `k_out`. Runs in parallel over points.
    pub fn map_points<F>(&self, k_out: usize, f: F) -> Self
    where
        F: Fn(usize, &[T], &mut [T]) + Sync,
    {
        self.map_points_sized(k_out, self.dim(), f)
    }

    fn map_points_sized<F>(&self, k_out: usize, k_in: usize, f: F) -> Self
    where
        F: Fn(usize, &[T], &mut [T]) + Sync,
    {
        assert!(k_in <= MAX_COMPONENTS && (1..=MAX_COMPONENTS).contains(&k_out), "too many components");
        let len = self.grid.len();
        let mut flat = vec![T::zero(); len * k_out];
        flat.par_chunks_mut(k_out * POINT_CHUNK).enumerate().for_each(|(c, chunk)| {
            let mut p = [T::zero(); MAX_COMPONENTS];
            for (off, out) in chunk.chunks_mut(k_out).enumerate() {
                let idx = c * POINT_CHUNK + off;
                self.read_point(idx, &mut p[..k_in]);
                f(idx, &p[..k_in], out);
            }
        });
        let mut comps = vec![vec![T::zero(); len]; k_out];
        for (idx, vals) in flat.chunks_exact(k_out).enumerate() {
            for (c, &v) in comps.iter_mut().zip(vals) {
                c[idx] = v;
            }
        }
        MapField { grid: self.grid, components: comps.into_iter().map(|data| ScalarField { grid: self.grid, data }).collect() }
    }

    pub fn axpy(&mut self, a: T, other: &Self) {
        assert_eq!(self.dim(), other.dim());
        for (c, o) in self.components.iter_mut().zip(&other.components) {
            c.axpy(a, o);
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.dim(), other.dim());
        let components = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.zip_map(b, |u, v| u - v))
            .collect();
        MapField { grid: self.grid, components }
    }

    /// Max over components of the max absolute value.
    pub fn max_abs(&self) -> T {
        self.components.iter().fold(T::zero(), |m, c| m.max(c.max_abs()))
    }

    /// Pointwise Euclidean norm `|u(p)|` as a scalar field.
    pub fn pointwise_norm(&self) -> ScalarField<T> {
        let mut out = ScalarField::zeros(self.grid);
        out.data.par_iter_mut().enumerate().for_each(|(idx, o)| {
            let s = self.components.iter().fold(T::zero(), |s, c| s + c.data[idx] * c.data[idx]);
            *o = s.sqrt();
        });
        out
    }

    pub fn check_finite(&self) -> Result<()> {
        self.components.iter().try_for_each(|c| c.check_finite())
    }
}

// ---------------------------------------------------------------------------
// Snapshots

/// File magic for map snapshots.
pub const SNAPSHOT_MAGIC: [u8; 8] = *b"SUBRHMAP";
pub const SNAPSHOT_VERSION: u32 = 1;
/// Magic (8) + version, N, K, reserved (4 × u32).
pub const SNAPSHOT_HEADER_LEN: usize = 24;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("snapshot I/O failed for {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("snapshot header mismatch: {0}")]
    HeaderMismatch(String),
    #[error("snapshot payload truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("snapshot sidecar invalid: {0}")]
    Sidecar(String),
}

/// JSON sidecar written next to every snapshot (`<path>.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub time: f64,
    pub scenario: String,
    pub seed: u64,
    pub grid_n: usize,
    pub k: usize,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Expected file size of a snapshot for grid size `n` and `k` components.
pub fn snapshot_len(n: usize, k: usize) -> usize {
    SNAPSHOT_HEADER_LEN + k * n * n * n * 8
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SnapshotError + '_ {
    move |source| SnapshotError::Io { path: path.to_path_buf(), source }
}

/// Writes `u` as a binary snapshot plus JSON sidecar.
pub fn write_snapshot(
    u: &MapField<f64>,
    path: &Path,
    time: f64,
    scenario: &str,
    seed: u64,
) -> Result<(), SnapshotError> {
    let n = u.grid().n();
    let k = u.dim();
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let mut header = Vec::with_capacity(SNAPSHOT_HEADER_LEN);
    header.extend_from_slice(&SNAPSHOT_MAGIC);
    for v in [SNAPSHOT_VERSION, n as u32, k as u32, 0u32] {
        header.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&header).map_err(io_err(path))?;
    for c in u.components() {
        for v in c.data() {
            w.write_all(&v.to_le_bytes()).map_err(io_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))?;

    let meta = SnapshotMeta { time, scenario: scenario.to_string(), seed, grid_n: n, k };
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(&meta).map_err(|e| SnapshotError::Sidecar(e.to_string()))?;
    std::fs::write(&side, json).map_err(io_err(&side))?;
    Ok(())
}

/// Reads a snapshot written by [`write_snapshot`]; the sidecar is not required.
pub fn read_snapshot(path: &Path) -> Result<MapField<f64>, SnapshotError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut bytes = Vec::new();
    BufReader::new(file).read_to_end(&mut bytes).map_err(io_err(path))?;
    if bytes.len() < SNAPSHOT_HEADER_LEN {
        return Err(SnapshotError::Truncated { expected: SNAPSHOT_HEADER_LEN, found: bytes.len() });
    }
    if bytes[..8] != SNAPSHOT_MAGIC {
        return Err(SnapshotError::HeaderMismatch("bad magic".into()));
    }
    let word = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let version = word(8);
    if version != SNAPSHOT_VERSION {
        return Err(SnapshotError::HeaderMismatch(format!("unsupported version {version}")));
    }
    let n = word(12) as usize;
    let k = word(16) as usize;
    let grid = Grid::new(n).map_err(|e| SnapshotError::HeaderMismatch(e.to_string()))?;
    if k == 0 {
        return Err(SnapshotError::HeaderMismatch("zero components".into()));
    }
    let expected = snapshot_len(n, k);
    if bytes.len() != expected {
        if bytes.len() < expected {
            return Err(SnapshotError::Truncated { expected, found: bytes.len() });
        }
        return Err(SnapshotError::HeaderMismatch(format!(
            "trailing bytes: expected {expected}, found {}",
            bytes.len()
        )));
    }
    let per = grid.len();
    let mut comps = Vec::with_capacity(k);
    for a in 0..k {
        let start = SNAPSHOT_HEADER_LEN + a * per * 8;
        let data = bytes[start..start + per * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        comps.push(ScalarField { grid, data });
    }
    Ok(MapField { grid, components: comps })
}

pub fn read_snapshot_meta(path: &Path) -> Result<SnapshotMeta, SnapshotError> {
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(io_err(&side))?;
    serde_json::from_str(&text).map_err(|e| SnapshotError::Sidecar(e.to_string()))
}
