//! Space-time tables as CSV: a header `t,x_0,...,x_{nx-1}` followed by one
//! row per time node. Numbers are written in shortest round-trip form.

use std::io::{BufRead, Write};

use super::{GridMeasure, GridMeasureFlow, SpaceTimeGrid};
use crate::error::{Error, Result};

/// A parsed space-time table.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub xs: Vec<f64>,
    pub ts: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    /// Rebuild the grid from the first/last coordinates and node counts,
    /// checking that every coordinate sits where the grid puts it.
    pub fn grid(&self) -> Result<SpaceTimeGrid> {
        let (nx, nt) = (self.xs.len(), self.ts.len());
        if nx < 3 || nt < 2 {
            return Err(Error::Csv(format!("table too small: {nt} x {nx}")));
        }
        let g = SpaceTimeGrid::new(self.xs[0], self.xs[nx - 1], nx, self.ts[0], self.ts[nt - 1], nt)
            .map_err(|e| Error::Csv(e.to_string()))?;
        let close = |a: f64, b: f64, scale: f64| (a - b).abs() <= 1e-9 * scale.max(1.0);
        let xs_ok = self
            .xs
            .iter()
            .enumerate()
            .all(|(j, &x)| close(x, g.x(j), g.dx()));
        let ts_ok = self
            .ts
            .iter()
            .enumerate()
            .all(|(k, &t)| close(t, g.t(k), g.dt()));
        if !(xs_ok && ts_ok) {
            return Err(Error::Csv("coordinates are not uniformly spaced".into()));
        }
        Ok(g)
    }
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

/// Write a table whose row `k` is `row(k)`.
pub fn write_table<'a, W: Write>(
    mut w: W,
    grid: &SpaceTimeGrid,
    row: impl Fn(usize) -> &'a [f64],
) -> Result<()> {
    let mut line = String::from("t");
    for j in 0..grid.nx() {
        line.push(',');
        line.push_str(&fmt_f64(grid.x(j)));
    }
    writeln!(w, "{line}")?;
    for k in 0..grid.nt() {
        line.clear();
        line.push_str(&fmt_f64(grid.t(k)));
        for v in row(k) {
            line.push(',');
            line.push_str(&fmt_f64(*v));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_table<R: BufRead>(r: R) -> Result<Table> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Csv("empty input".into()))??;
    let mut cols = header.trim().split(',');
    if cols.next() != Some("t") {
        return Err(Error::Csv("header must start with `t`".into()));
    }
    let parse = |s: &str, line: usize| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::Csv(format!("line {line}: cannot parse `{s}`")))
    };
    let xs = cols.map(|c| parse(c, 1)).collect::<Result<Vec<_>>>()?;
    let mut ts = Vec::new();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut vals = line
            .trim()
            .split(',')
            .map(|c| parse(c, i + 2))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != xs.len() + 1 {
            return Err(Error::Csv(format!(
                "line {}: expected {} fields, got {}",
                i + 2,
                xs.len() + 1,
                vals.len()
            )));
        }
        ts.push(vals.remove(0));
        rows.push(vals);
    }
    Ok(Table { xs, ts, rows })
}

/// Densities of every slice, one row per time node.
pub fn write_flow_csv<W: Write>(flow: &GridMeasureFlow, w: W) -> Result<()> {
    write_table(w, flow.grid(), |k| flow.slice(k).density())
}

pub fn read_flow_csv<R: BufRead>(r: R) -> Result<GridMeasureFlow> {
    let table = read_table(r)?;
    let grid = table.grid()?;
    let measures = table
        .rows
        .into_iter()
        .map(|d| GridMeasure::from_density(grid.space(), d))
        .collect::<Result<Vec<_>>>()?;
    GridMeasureFlow::new(grid, measures)
}
