//! Plain numeric CSV: a header row naming `y`, `x0..x{dx-1}` and optionally
//! `z0..z{dz-1}`, one sample per line.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data::{Dataset, FeatureKind, Split};
use crate::error::{Error, Result};
use crate::numkit::Matrix;

fn bad(path: &Path, offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        message: message.into(),
    }
}

/// Column role parsed from a header cell.
#[derive(Debug, PartialEq)]
enum Column {
    Label,
    X(usize),
    Z(usize),
}

fn parse_header(cell: &str) -> Option<Column> {
    let cell = cell.trim();
    if cell == "y" {
        return Some(Column::Label);
    }
    if let Some(idx) = cell.strip_prefix('x') {
        return idx.parse().ok().map(Column::X);
    }
    cell.strip_prefix('z')?.parse().ok().map(Column::Z)
}

/// Reads a dataset. When no `z` columns are present the interpretable
/// representation is left empty. `classes` defaults to `max(y) + 1`.
pub fn read_csv(path: impl AsRef<Path>, classes: Option<usize>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad(path, 0, "empty file"))?;
    let mut roles = Vec::new();
    for cell in header.split(',') {
        roles.push(parse_header(cell).ok_or_else(|| bad(path, 0, format!("unknown column `{cell}`")))?);
    }
    if !roles.contains(&Column::Label) {
        return Err(bad(path, 0, "missing `y` column"));
    }
    let dx = roles.iter().filter(|r| matches!(r, Column::X(_))).count();
    let dz = roles.iter().filter(|r| matches!(r, Column::Z(_))).count();
    for (i, r) in roles.iter().enumerate() {
        match *r {
            Column::X(k) if k >= dx => return Err(bad(path, 0, format!("column {i}: x{k} out of sequence"))),
            Column::Z(k) if k >= dz => return Err(bad(path, 0, format!("column {i}: z{k} out of sequence"))),
            _ => {}
        }
    }

    let mut xs = Vec::new();
    let mut zs = Vec::new();
    let mut ys = Vec::new();
    let mut offset = header.len() + 1;
    for line in lines {
        if line.trim().is_empty() {
            offset += line.len() + 1;
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != roles.len() {
            return Err(bad(path, offset, format!("expected {} fields, found {}", roles.len(), cells.len())));
        }
        let mut xrow = vec![0.0; dx];
        let mut zrow = vec![0.0; dz];
        for (cell, role) in cells.iter().zip(&roles) {
            match *role {
                Column::Label => ys.push(
                    cell.trim()
                        .parse::<usize>()
                        .map_err(|_| bad(path, offset, format!("bad label `{cell}`")))?,
                ),
                Column::X(k) | Column::Z(k) => {
                    let v: f64 = cell
                        .trim()
                        .parse()
                        .map_err(|_| bad(path, offset, format!("bad number `{cell}`")))?;
                    if !v.is_finite() {
                        return Err(bad(path, offset, "non-finite value"));
                    }
                    if matches!(role, Column::X(_)) {
                        xrow[k] = v;
                    } else {
                        zrow[k] = v;
                    }
                }
            }
        }
        xs.extend(xrow);
        zs.extend(zrow);
        offset += line.len() + 1;
    }
    let n = ys.len();
    let classes = classes.unwrap_or_else(|| ys.iter().max().map_or(1, |m| m + 1));
    Dataset::new(
        Matrix::from_vec(n, dx, xs)?,
        Matrix::from_vec(n, dz, zs)?,
        ys,
        classes,
        FeatureKind::Synthetic,
        Split::Train,
    )
}

pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>, include_z: bool) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("y");
    for j in 0..dataset.x_dim() {
        write!(out, ",x{j}").unwrap();
    }
    if include_z {
        for j in 0..dataset.z_dim() {
            write!(out, ",z{j}").unwrap();
        }
    }
    out.push('\n');
    for i in 0..dataset.len() {
        write!(out, "{}", dataset.y()[i]).unwrap();
        for v in dataset.x().row(i) {
            write!(out, ",{v}").unwrap();
        }
        if include_z {
            for v in dataset.z().row(i) {
                write!(out, ",{v}").unwrap();
            }
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
