//! Writing grids and reports to CSV, JSON and text files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::density::DensityGrid;
use crate::error::{Error, Result};
use crate::solution::fmt17;

/// CSV with columns t,x,value and a stderr column for Monte Carlo grids.
pub fn write_grid_csv<W: Write>(grid: &DensityGrid, mut w: W) -> std::io::Result<()> {
    if grid.stderr.is_some() {
        writeln!(w, "t,x,value,stderr")?;
    } else {
        writeln!(w, "t,x,value")?;
    }
    for (it, t) in grid.ts.iter().enumerate() {
        for (ix, x) in grid.xs.iter().enumerate() {
            write!(w, "{},{},{}", fmt17(*t), fmt17(*x), fmt17(grid.values[it][ix]))?;
            if let Some(s) = &grid.stderr {
                write!(w, ",{}", fmt17(s[it][ix]))?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

pub fn grid_csv_string(grid: &DensityGrid) -> String {
    let mut buf = Vec::new();
    write_grid_csv(grid, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io { path: path.display().to_string(), message: e.to_string() }
}

/// Write `contents` produced by `f` to `path`, surfacing failures with the path.
pub fn write_file<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).map_err(|e| io_error(path, e))?;
    w.flush().map_err(|e| io_error(path, e))
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(std::io::Error::other)?;
        writeln!(w)
    })
}

pub fn write_grid(grid: &DensityGrid, path: &Path) -> Result<()> {
    write_file(path, |w| write_grid_csv(grid, w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::Formula;
    use crate::quadrature::QuadratureSpec;

    fn grid() -> DensityGrid {
        DensityGrid {
            xs: vec![0.0, 0.5, 1.0],
            ts: vec![0.1, 0.2],
            values: vec![vec![0.1, 0.2, 0.3], vec![0.4, 0.5, 1.0 / 3.0]],
            stderr: None,
            method: QuadratureSpec::tensor(4),
            n: 2,
            formulas: vec![Formula::Homogeneous; 2],
            diagnostics: Default::default(),
        }
    }

    #[test]
    fn csv_rows_and_precision() {
        let s = grid_csv_string(&grid());
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[0], "t,x,value");
        let last: f64 = lines[6].split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(last, 1.0 / 3.0);
    }

    #[test]
    fn csv_stderr_column() {
        let mut g = grid();
        g.stderr = Some(vec![vec![0.0; 3]; 2]);
        assert!(grid_csv_string(&g).starts_with("t,x,value,stderr\n"));
    }

    #[test]
    fn json_round_trip() {
        let g = grid();
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(serde_json::from_str::<DensityGrid>(&s).unwrap(), g);
    }

    #[test]
    fn io_failure_names_path() {
        let e = write_grid(&grid(), Path::new("/nonexistent-dir/x.csv")).unwrap_err();
        assert!(e.to_string().contains("/nonexistent-dir/x.csv"));
    }
}
