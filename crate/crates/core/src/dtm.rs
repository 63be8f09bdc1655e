//! Digital terrain map: a regular height raster with a bilinear surface model.
//!
//! World frame is right-handed, z up, meters throughout. Node `(col, row)` sits at
//! `(origin_x + col * cell_size, origin_y + row * cell_size)`; row 0 is the lowest y.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::error::{NavError, Result};
use crate::Vec3;

/// Terrain heights on a regular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TerrainGrid {
    origin_x: f64,
    origin_y: f64,
    cell_size: f64,
    n_cols: usize,
    n_rows: usize,
    /// Row-major, `heights[row * n_cols + col]`.
    heights: Vec<f64>,
    max_height: f64,
}

/// A point on the terrain surface together with the upward unit normal there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceContact {
    pub point: Vec3,
    pub normal: Vec3,
}

impl TerrainGrid {
    pub fn new(
        origin_x: f64,
        origin_y: f64,
        cell_size: f64,
        n_cols: usize,
        n_rows: usize,
        heights: Vec<f64>,
    ) -> Result<Self> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(NavError::InvalidGrid(format!("cell_size must be positive, got {cell_size}")));
        }
        if n_cols < 2 || n_rows < 2 {
            return Err(NavError::InvalidGrid(format!(
                "grid needs at least 2x2 nodes, got {n_cols}x{n_rows}"
            )));
        }
        if heights.len() != n_cols * n_rows {
            return Err(NavError::InvalidGrid(format!(
                "expected {} heights, got {}",
                n_cols * n_rows,
                heights.len()
            )));
        }
        if !origin_x.is_finite() || !origin_y.is_finite() {
            return Err(NavError::InvalidGrid("origin must be finite".into()));
        }
        if let Some(i) = heights.iter().position(|h| !h.is_finite()) {
            return Err(NavError::InvalidGrid(format!(
                "non-finite height at col {}, row {}",
                i % n_cols,
                i / n_cols
            )));
        }
        let max_height = heights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            origin_x,
            origin_y,
            cell_size,
            n_cols,
            n_rows,
            heights,
            max_height,
        })
    }

    /// Builds a grid by sampling `f(x, y)` at every node.
    pub fn from_fn(
        origin_x: f64,
        origin_y: f64,
        cell_size: f64,
        n_cols: usize,
        n_rows: usize,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        let mut heights = Vec::with_capacity(n_cols * n_rows);
        for row in 0..n_rows {
            for col in 0..n_cols {
                let x = origin_x + col as f64 * cell_size;
                let y = origin_y + row as f64 * cell_size;
                heights.push(f(x, y));
            }
        }
        Self::new(origin_x, origin_y, cell_size, n_cols, n_rows, heights)
    }

    pub fn origin_x(&self) -> f64 {
        self.origin_x
    }

    pub fn origin_y(&self) -> f64 {
        self.origin_y
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn max_height(&self) -> f64 {
        self.max_height
    }

    pub fn x_max(&self) -> f64 {
        self.origin_x + (self.n_cols - 1) as f64 * self.cell_size
    }

    pub fn y_max(&self) -> f64 {
        self.origin_y + (self.n_rows - 1) as f64 * self.cell_size
    }

    /// Height stored at node `(col, row)`.
    pub fn node(&self, col: usize, row: usize) -> f64 {
        self.heights[row * self.n_cols + col]
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.origin_x && x <= self.x_max() && y >= self.origin_y && y <= self.y_max()
    }

    /// Cell indices and fractional offsets for an in-bounds query. Points on a shared
    /// edge belong to the cell with the floor-indexed lower-left corner; the far edge
    /// of the grid is folded into the last cell.
    fn locate(&self, x: f64, y: f64) -> Result<(usize, usize, f64, f64)> {
        if !self.contains(x, y) {
            return Err(NavError::OutOfBounds { x, y });
        }
        let fx = (x - self.origin_x) / self.cell_size;
        let fy = (y - self.origin_y) / self.cell_size;
        let col = (fx.floor() as usize).min(self.n_cols - 2);
        let row = (fy.floor() as usize).min(self.n_rows - 2);
        Ok((col, row, fx - col as f64, fy - row as f64))
    }

    fn corners(&self, col: usize, row: usize) -> [f64; 4] {
        [
            self.node(col, row),
            self.node(col + 1, row),
            self.node(col, row + 1),
            self.node(col + 1, row + 1),
        ]
    }

    /// Bilinear terrain height at `(x, y)`.
    pub fn height_at(&self, x: f64, y: f64) -> Result<f64> {
        let (col, row, tx, ty) = self.locate(x, y)?;
        let [h00, h10, h01, h11] = self.corners(col, row);
        Ok(h00 * (1.0 - tx) * (1.0 - ty) + h10 * tx * (1.0 - ty) + h01 * (1.0 - tx) * ty + h11 * tx * ty)
    }

    /// Height gradient `(dh/dx, dh/dy)` of the bilinear patch containing `(x, y)`.
    pub fn gradient_at(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        let (col, row, tx, ty) = self.locate(x, y)?;
        let [h00, h10, h01, h11] = self.corners(col, row);
        let dx = ((h10 - h00) * (1.0 - ty) + (h11 - h01) * ty) / self.cell_size;
        let dy = ((h01 - h00) * (1.0 - tx) + (h11 - h10) * tx) / self.cell_size;
        Ok((dx, dy))
    }

    /// Upward unit normal of the bilinear surface at `(x, y)`.
    pub fn normal_at(&self, x: f64, y: f64) -> Result<Vec3> {
        let (dx, dy) = self.gradient_at(x, y)?;
        Ok(Vec3::new(-dx, -dy, 1.0).normalize())
    }

    /// Parameter interval `[0, t_exit]` over which `origin + t * dir` stays inside the
    /// footprint. `origin` must already be inside.
    fn footprint_exit(&self, origin: &Vec3, dir: &Vec3) -> f64 {
        let mut t_exit = f64::INFINITY;
        for (o, d, lo, hi) in [
            (origin.x, dir.x, self.origin_x, self.x_max()),
            (origin.y, dir.y, self.origin_y, self.y_max()),
        ] {
            if d > 0.0 {
                t_exit = t_exit.min((hi - o) / d);
            } else if d < 0.0 {
                t_exit = t_exit.min((lo - o) / d);
            }
        }
        t_exit.max(0.0)
    }

    /// First intersection of the ray `origin + t * direction`, `t > 0`, with the terrain.
    ///
    /// Marches in half-cell steps until the ray drops below the surface, then bisects
    /// the bracketing interval down to floating-point resolution. Marching starts at
    /// the level of the highest node, since no intersection can exist above it.
    pub fn intersect_ray(&self, origin: Vec3, direction: Vec3) -> Result<SurfaceContact> {
        let norm = direction.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(NavError::RayEscapesDtm);
        }
        let dir = direction / norm;
        let ground = self.height_at(origin.x, origin.y)?;
        if !(origin.z > ground) {
            return Err(NavError::OriginBelowSurface {
                z: origin.z,
                height: ground,
            });
        }

        let t_exit = self.footprint_exit(&origin, &dir);
        let gap = |t: f64| -> Result<f64> {
            let p = origin + dir * t;
            Ok(p.z - self.height_at(p.x, p.y)?)
        };

        let mut t_start = 0.0;
        if origin.z > self.max_height {
            if dir.z >= 0.0 {
                return Err(NavError::RayEscapesDtm);
            }
            t_start = (origin.z - self.max_height) / -dir.z;
        }
        if t_start > t_exit {
            return Err(NavError::RayEscapesDtm);
        }
        if t_exit.is_infinite() && dir.z >= 0.0 {
            return Err(NavError::RayEscapesDtm);
        }

        let step = 0.5 * self.cell_size;
        let mut t_above = t_start;
        let mut t_below = None;
        let mut k = 1u64;
        loop {
            let t = (t_start + k as f64 * step).min(t_exit);
            if gap(t)? <= 0.0 {
                t_below = Some(t);
                break;
            }
            t_above = t;
            if t >= t_exit {
                break;
            }
            k += 1;
        }
        let mut t_below = t_below.ok_or(NavError::RayEscapesDtm)?;

        for _ in 0..200 {
            let mid = 0.5 * (t_above + t_below);
            if mid <= t_above || mid >= t_below {
                break;
            }
            let g = gap(mid)?;
            if g > 0.0 {
                t_above = mid;
            } else {
                t_below = mid;
                if g == 0.0 {
                    break;
                }
            }
        }
        let t = if gap(t_above)?.abs() < gap(t_below)?.abs() {
            t_above
        } else {
            t_below
        };
        let point = origin + dir * t;
        Ok(SurfaceContact {
            point,
            normal: self.normal_at(point.x, point.y)?,
        })
    }

    /// Reads an ESRI-style ASCII grid file.
    pub fn load_ascii(path: impl AsRef<Path>) -> std::result::Result<Self, GridFormatError> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| GridFormatError::Io(e.to_string()))?;
        Self::parse_ascii(&text)
    }

    /// Parses the ASCII grid format: six `key value` header lines followed by `nrows`
    /// rows of heights, the first row being the highest y.
    pub fn parse_ascii(text: &str) -> std::result::Result<Self, GridFormatError> {
        const KEYS: [&str; 6] = ["ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value"];
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let mut header = [0.0f64; 6];
        for (slot, key) in KEYS.iter().enumerate() {
            let (line_no, line) = lines.next().ok_or(GridFormatError::Truncated)?;
            let mut parts = line.split_whitespace();
            let found = parts.next().unwrap_or_default();
            if !found.eq_ignore_ascii_case(key) {
                return Err(GridFormatError::Header {
                    line: line_no + 1,
                    message: format!("expected `{key}`, found `{found}`"),
                });
            }
            header[slot] = parts
                .next()
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| GridFormatError::Header {
                    line: line_no + 1,
                    message: format!("missing or invalid value for `{key}`"),
                })?;
        }
        let [ncols, nrows, xll, yll, cell, nodata] = header;
        if ncols < 2.0 || nrows < 2.0 || ncols.fract() != 0.0 || nrows.fract() != 0.0 {
            return Err(GridFormatError::Header {
                line: 1,
                message: format!("ncols/nrows must be integers >= 2, got {ncols}/{nrows}"),
            });
        }
        let (n_cols, n_rows) = (ncols as usize, nrows as usize);

        let mut heights = vec![0.0; n_cols * n_rows];
        for file_row in 0..n_rows {
            let (line_no, line) = lines.next().ok_or(GridFormatError::Truncated)?;
            let values: Vec<&str> = line.split_whitespace().collect();
            if values.len() != n_cols {
                return Err(GridFormatError::Row {
                    line: line_no + 1,
                    message: format!("expected {n_cols} values, found {}", values.len()),
                });
            }
            let row = n_rows - 1 - file_row;
            for (col, v) in values.iter().enumerate() {
                let h: f64 = v.parse().map_err(|_| GridFormatError::Row {
                    line: line_no + 1,
                    message: format!("invalid height `{v}`"),
                })?;
                if h == nodata {
                    return Err(GridFormatError::NoData {
                        line: line_no + 1,
                        col,
                    });
                }
                heights[row * n_cols + col] = h;
            }
        }
        if let Some((line_no, _)) = lines.next() {
            return Err(GridFormatError::Row {
                line: line_no + 1,
                message: "unexpected trailing data".into(),
            });
        }
        TerrainGrid::new(xll, yll, cell, n_cols, n_rows, heights).map_err(|e| GridFormatError::Invalid(e.to_string()))
    }

    /// Serializes to the ASCII grid format read by [`TerrainGrid::parse_ascii`].
    pub fn to_ascii(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "ncols {}", self.n_cols);
        let _ = writeln!(out, "nrows {}", self.n_rows);
        let _ = writeln!(out, "xllcorner {}", self.origin_x);
        let _ = writeln!(out, "yllcorner {}", self.origin_y);
        let _ = writeln!(out, "cellsize {}", self.cell_size);
        let _ = writeln!(out, "nodata_value -9999");
        for row in (0..self.n_rows).rev() {
            let line: Vec<String> = (0..self.n_cols).map(|c| self.node(c, row).to_string()).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridFormatError {
    #[error("cannot read grid file: {0}")]
    Io(String),
    #[error("grid file ends early")]
    Truncated,
    #[error("line {line}: bad header: {message}")]
    Header { line: usize, message: String },
    #[error("line {line}: {message}")]
    Row { line: usize, message: String },
    #[error("line {line}, column {col}: nodata cell; the surface must be complete")]
    NoData { line: usize, col: usize },
    #[error("{0}")]
    Invalid(String),
}
