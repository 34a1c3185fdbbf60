//! Cell-centred uniform grids on `(-b, b)^d` and functions tabulated on them.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

/// `n` cells per axis on `(-b, b)^d`; nodes are the cell centres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub b: f64,
    pub dim: usize,
    pub n: usize,
}

impl Grid {
    pub fn new(b: f64, dim: usize, n: usize) -> Result<Self> {
        if !(b > 0.0) || dim == 0 || n == 0 {
            return Err(Error::Domain(format!("invalid grid b={b}, d={dim}, n={n}")));
        }
        Ok(Self { b, dim, n })
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.b / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.b + (i as f64 + 0.5) * self.spacing()
    }

    /// Axis indices of a flat index; the last axis varies fastest.
    pub fn unravel(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim];
        for j in (0..self.dim).rev() {
            out[j] = idx % self.n;
            idx /= self.n;
        }
        out
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        self.unravel(idx).into_iter().map(|i| self.coord(i)).collect()
    }

    pub fn points(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }
}

/// Function sampled at the nodes of a [`Grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GriddedFunction {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl GriddedFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Domain(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("gridded function has non-finite values".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = grid.points().map(|x| f(&x)).collect();
        Self { grid, values }
    }

    /// Multilinear interpolation between cell centres; constant in the
    /// half-cell next to the boundary and zero outside `(-b, b)^d`.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let g = &self.grid;
        let h = g.spacing();
        let mut base = vec![0usize; g.dim];
        let mut frac = vec![0.0; g.dim];
        for j in 0..g.dim {
            if x[j].abs() >= g.b {
                return 0.0;
            }
            let u = ((x[j] + g.b) / h - 0.5).clamp(0.0, (g.n - 1) as f64);
            let i = (u.floor() as usize).min(g.n.saturating_sub(2));
            base[j] = i;
            frac[j] = if g.n == 1 { 0.0 } else { u - i as f64 };
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << g.dim) {
            let mut w = 1.0;
            let mut idx = 0;
            for j in 0..g.dim {
                let bit = (corner >> j) & 1;
                let i = (base[j] + bit).min(g.n - 1);
                w *= if bit == 1 { frac[j] } else { 1.0 - frac[j] };
                idx = idx * g.n + i;
            }
            if w != 0.0 {
                acc += w * self.values[idx];
            }
        }
        acc
    }

    /// Grid dump: a header row of axis coordinates followed by the values.
    /// One data row for `d = 1`; for `d = 2` each row starts with its
    /// second-axis coordinate.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let g = &self.grid;
        let mut wr = csv::WriterBuilder::new().flexible(true).from_writer(w);
        let coords: Vec<String> = (0..g.n).map(|i| format!("{}", g.coord(i))).collect();
        match g.dim {
            1 => {
                wr.write_record(&coords)?;
                wr.write_record(self.values.iter().map(|v| v.to_string()))?;
            }
            2 => {
                let mut head = vec![String::new()];
                head.extend(coords.iter().cloned());
                wr.write_record(&head)?;
                for i2 in 0..g.n {
                    let mut row = vec![coords[i2].clone()];
                    row.extend((0..g.n).map(|i1| self.values[i1 * g.n + i2].to_string()));
                    wr.write_record(&row)?;
                }
            }
            d => return Err(Error::Domain(format!("grid CSV supports d <= 2, got {d}"))),
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(r);
        let rows: Vec<csv::StringRecord> = rd.records().collect::<std::result::Result<_, _>>()?;
        if rows.len() < 2 {
            return Err(Error::Parse("grid CSV needs a header row and data".into()));
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("not a number: `{s}`")))
        };
        let head = &rows[0];
        let two_d = head.get(0).map(|s| s.trim().is_empty()).unwrap_or(false);
        let coords: Vec<f64> = head
            .iter()
            .skip(usize::from(two_d))
            .map(parse)
            .collect::<Result<_>>()?;
        let n = coords.len();
        if n < 2 {
            return Err(Error::Parse("grid CSV needs at least two coordinates".into()));
        }
        let h = coords[1] - coords[0];
        let b = n as f64 * h / 2.0;
        if (coords[0] - (-b + h / 2.0)).abs() > 1e-9 * b.max(1.0) {
            return Err(Error::Parse("grid coordinates must be cell centres of a symmetric grid".into()));
        }
        if two_d {
            if rows.len() - 1 != n {
                return Err(Error::Parse("2-d grid CSV must be square".into()));
            }
            let grid = Grid::new(b, 2, n)?;
            let mut values = vec![0.0; n * n];
            for (i2, row) in rows[1..].iter().enumerate() {
                let vals: Vec<f64> = row.iter().skip(1).map(parse).collect::<Result<_>>()?;
                if vals.len() != n {
                    return Err(Error::Parse(format!("row {} has {} values", i2 + 1, vals.len())));
                }
                for (i1, v) in vals.into_iter().enumerate() {
                    values[i1 * n + i2] = v;
                }
            }
            GriddedFunction::new(grid, values)
        } else {
            let vals: Vec<f64> = rows[1].iter().map(parse).collect::<Result<_>>()?;
            GriddedFunction::new(Grid::new(b, 1, n)?, vals)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_reproduces_linear_functions_inside() {
        let g = Grid::new(1.0, 2, 16).unwrap();
        let f = GriddedFunction::from_fn(g, |x| 2.0 * x[0] - x[1] + 0.5);
        for x in [[0.1, -0.3], [0.77, 0.8], [-0.9, 0.0]] {
            assert!((f.interpolate(&x) - (2.0 * x[0] - x[1] + 0.5)).abs() < 1e-12);
        }
        assert_eq!(f.interpolate(&[1.2, 0.0]), 0.0);
    }

    #[test]
    fn csv_round_trip() {
        for d in [1, 2] {
            let g = Grid::new(0.5, d, 8).unwrap();
            let f = GriddedFunction::from_fn(g, |x| x.iter().map(|v| v.sin()).sum());
            let mut buf = Vec::new();
            f.write_csv(&mut buf).unwrap();
            let back = GriddedFunction::read_csv(&buf[..]).unwrap();
            assert_eq!(back.grid.n, 8);
            assert!((back.grid.b - 0.5).abs() < 1e-12);
            for (a, b) in f.values.iter().zip(&back.values) {
                assert_eq!(a, b);
            }
        }
    }
}
