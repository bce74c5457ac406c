//! Plain-text output: comma-separated tables with a header row, and
//! whitespace-separated snapshots with a `#` header.
//!
//! Every number is written as `{:.12e}` so that identical runs produce
//! identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::grid::{Grid, ScalarField, VectorField};
use crate::measure::AtomicYoungMeasure;

pub fn fmt_num(x: f64) -> String {
    format!("{x:.12e}")
}

/// A numeric table with named columns.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|&x| fmt_num(x)).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

fn grid_line(grid: &Grid) -> String {
    let e: Vec<String> = grid.extents().iter().map(|n| n.to_string()).collect();
    let h: Vec<String> = grid.spacing().iter().map(|&x| fmt_num(x)).collect();
    format!("# grid: dim={} extents={} spacing={}\n", grid.dim(), e.join("x"), h.join(","))
}

/// Atoms and weights per cell: `cell s_1 [s_2] weight`, one atom per line.
pub fn measure_snapshot(nu: &AtomicYoungMeasure, t: f64) -> String {
    let d = nu.dim();
    let mut s = String::new();
    s.push_str("# field: nu\n");
    s.push_str(&grid_line(nu.grid()));
    let _ = writeln!(s, "# time: {}", fmt_num(t));
    let coords: Vec<String> = (1..=d).map(|k| format!("s{k}")).collect();
    let _ = writeln!(s, "# columns: cell {} weight", coords.join(" "));
    for c in 0..nu.grid().cell_count() {
        let (atoms, w) = nu.cell(c);
        for (a, &wi) in atoms.chunks(d).zip(w) {
            let _ = write!(s, "{c}");
            for x in a {
                let _ = write!(s, " {}", fmt_num(*x));
            }
            let _ = writeln!(s, " {}", fmt_num(wi));
        }
    }
    s
}

/// Per-cell phase field and enthalpy: `cell x [y] lambda_1 … lambda_{d+1} w`.
pub fn state_snapshot(lambda: &VectorField, w: &ScalarField, t: f64) -> String {
    let grid = lambda.grid();
    let d = grid.dim();
    let mut s = String::new();
    s.push_str("# field: lambda,w\n");
    s.push_str(&grid_line(grid));
    let _ = writeln!(s, "# time: {}", fmt_num(t));
    let pos = ["x", "y"][..d].join(" ");
    let lams: Vec<String> = (1..=lambda.ncomp()).map(|k| format!("lambda{k}")).collect();
    let _ = writeln!(s, "# columns: cell {pos} {} w", lams.join(" "));
    for c in 0..grid.cell_count() {
        let _ = write!(s, "{c}");
        for x in &grid.center(c)[..d] {
            let _ = write!(s, " {}", fmt_num(*x));
        }
        for x in lambda.cell(c) {
            let _ = write!(s, " {}", fmt_num(*x));
        }
        let _ = writeln!(s, " {}", fmt_num(w.values()[c]));
    }
    s
}
