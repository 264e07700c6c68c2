//! Model Poisson problems and MatrixMarket I/O.
//!
//! The built-in generators return Jacobi-scaled systems `D^{-1/2} A D^{-1/2}`
//! with unit diagonal, which places the spectrum of the scaled matrix inside
//! `(0, 2)` and makes unpreconditioned Richardson with `α = 1` well defined.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// A linear system `A x = b` together with provenance metadata.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub a: SparseMatrix,
    pub b: Vec<f64>,
    pub label: String,
    pub meta: BTreeMap<String, String>,
}

impl ProblemInstance {
    pub fn n(&self) -> usize {
        self.a.n_rows()
    }

    /// Replaces `(A, b)` with their Jacobi-scaled counterparts and records it in `meta`.
    pub fn jacobi_scaled(mut self) -> Result<Self> {
        let (a, b, _) = jacobi_scale(&self.a, &self.b)?;
        self.a = a;
        self.b = b;
        self.meta.insert("scaling".into(), "jacobi".into());
        Ok(self)
    }
}

/// 7-point finite-difference Laplacian on the unit cube with `k` interior
/// points per dimension and homogeneous Dirichlet boundaries.
///
/// Unknown `(x, y, z)` is numbered `x + k·y + k²·z`. The load is `f ≡ 1`
/// scaled by `h² = 1/(k+1)²`.
pub fn fd_laplacian_3d(k: usize) -> Result<ProblemInstance> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!(
            "fd3d needs k >= 2, got {k}"
        )));
    }
    let n = k * k * k;
    let idx = |x: usize, y: usize, z: usize| x + k * y + k * k * z;
    let mut triplets = Vec::with_capacity(7 * n);
    for z in 0..k {
        for y in 0..k {
            for x in 0..k {
                let i = idx(x, y, z);
                triplets.push((i, i, 6.0));
                if x > 0 {
                    triplets.push((i, idx(x - 1, y, z), -1.0));
                }
                if x + 1 < k {
                    triplets.push((i, idx(x + 1, y, z), -1.0));
                }
                if y > 0 {
                    triplets.push((i, idx(x, y - 1, z), -1.0));
                }
                if y + 1 < k {
                    triplets.push((i, idx(x, y + 1, z), -1.0));
                }
                if z > 0 {
                    triplets.push((i, idx(x, y, z - 1), -1.0));
                }
                if z + 1 < k {
                    triplets.push((i, idx(x, y, z + 1), -1.0));
                }
            }
        }
    }
    let a = SparseMatrix::from_triplets(n, n, &triplets)?;
    let h = 1.0 / (k as f64 + 1.0);
    let b = vec![h * h; n];
    let mut meta = BTreeMap::new();
    meta.insert("generator".into(), "fd3d".into());
    meta.insert("k".into(), k.to_string());
    meta.insert("h".into(), format!("{h:e}"));
    ProblemInstance {
        a,
        b,
        label: format!("FD 3D (k={k})"),
        meta,
    }
    .jacobi_scaled()
}

/// Linear finite elements for `-Δu = 1` on `[0,1]²` with `m` interior nodes
/// per side, on a uniform mesh of right triangles (each grid cell split along
/// its anti-diagonal).
///
/// Element stiffness is exact for linear triangles; the load uses one-point
/// centroid quadrature.
pub fn fe_laplacian_square(m: usize) -> Result<ProblemInstance> {
    if m < 2 {
        return Err(Error::InvalidParameter(format!(
            "fe_square needs m >= 2, got {m}"
        )));
    }
    let side = m + 2;
    let h = 1.0 / (m as f64 + 1.0);
    // grid node (gx, gy) -> unknown index, or None on the boundary
    let unknown = |gx: usize, gy: usize| -> Option<usize> {
        if gx == 0 || gy == 0 || gx == side - 1 || gy == side - 1 {
            None
        } else {
            Some((gx - 1) + m * (gy - 1))
        }
    };
    let n = m * m;
    let mut triplets = Vec::new();
    let mut b = vec![0.0; n];
    let f = |_x: f64, _y: f64| 1.0;

    for cy in 0..side - 1 {
        for cx in 0..side - 1 {
            let p00 = (cx, cy);
            let p10 = (cx + 1, cy);
            let p01 = (cx, cy + 1);
            let p11 = (cx + 1, cy + 1);
            for tri in [[p00, p10, p01], [p10, p11, p01]] {
                let xy: Vec<(f64, f64)> = tri
                    .iter()
                    .map(|&(gx, gy)| (gx as f64 * h, gy as f64 * h))
                    .collect();
                let (stiff, area) = linear_triangle_stiffness(&xy);
                let cxm = (xy[0].0 + xy[1].0 + xy[2].0) / 3.0;
                let cym = (xy[0].1 + xy[1].1 + xy[2].1) / 3.0;
                let load = f(cxm, cym) * area / 3.0;
                for (a_loc, &(ga, gb)) in tri.iter().enumerate() {
                    let Some(row) = unknown(ga, gb) else { continue };
                    b[row] += load;
                    for (b_loc, &(gc, gd)) in tri.iter().enumerate() {
                        if let Some(col) = unknown(gc, gd) {
                            triplets.push((row, col, stiff[a_loc][b_loc]));
                        }
                    }
                }
            }
        }
    }
    let a = SparseMatrix::from_triplets(n, n, &triplets)?;
    let mut meta = BTreeMap::new();
    meta.insert("generator".into(), "fe_square".into());
    meta.insert("m".into(), m.to_string());
    meta.insert("h".into(), format!("{h:e}"));
    ProblemInstance {
        a,
        b,
        label: format!("FE Square (m={m})"),
        meta,
    }
    .jacobi_scaled()
}

/// Stiffness matrix `∫ ∇φ_a · ∇φ_b` and area of a linear triangle.
fn linear_triangle_stiffness(p: &[(f64, f64)]) -> ([[f64; 3]; 3], f64) {
    let (x1, y1) = p[0];
    let (x2, y2) = p[1];
    let (x3, y3) = p[2];
    let det = (x2 - x1) * (y3 - y1) - (x3 - x1) * (y2 - y1);
    let area = 0.5 * det.abs();
    // gradients of barycentric coordinates: (y_{b} - y_{c}, x_{c} - x_{b}) / det
    let grads = [
        ((y2 - y3) / det, (x3 - x2) / det),
        ((y3 - y1) / det, (x1 - x3) / det),
        ((y1 - y2) / det, (x2 - x1) / det),
    ];
    let mut k = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            k[a][b] = area * (grads[a].0 * grads[b].0 + grads[a].1 * grads[b].1);
        }
    }
    (k, area)
}

/// Symmetric diagonal scaling.
///
/// Returns `(D^{-1/2} A D^{-1/2}, D^{-1/2} b, w)` where `w = diag(D^{-1/2})`
/// recovers the original unknowns as `x = w ⊙ x̃`. Entries are scaled as
/// `a_ij · (w_i w_j)` so that symmetry survives rounding exactly.
pub fn jacobi_scale(a: &SparseMatrix, b: &[f64]) -> Result<(SparseMatrix, Vec<f64>, Vec<f64>)> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.n_rows(),
            cols: a.n_cols(),
        });
    }
    crate::error::check_len(a.n_rows(), b.len())?;
    let diag = a.diagonal();
    let mut w = Vec::with_capacity(diag.len());
    for (row, &d) in diag.iter().enumerate() {
        if d <= 0.0 || d.is_nan() {
            return Err(Error::NonPositiveDiagonal { row, value: d });
        }
        w.push(1.0 / d.sqrt());
    }
    let triplets: Vec<_> = a
        .triplets()
        .map(|(i, j, v)| (i, j, v * (w[i] * w[j])))
        .collect();
    let scaled = SparseMatrix::from_triplets(a.n_rows(), a.n_cols(), &triplets)?;
    let b_scaled = b.iter().zip(&w).map(|(bi, wi)| bi * wi).collect();
    Ok((scaled, b_scaled, w))
}

/// Reads a MatrixMarket `coordinate real|integer general|symmetric` file.
/// The right-hand side is set to all ones; no scaling is applied.
pub fn read_matrix_market(path: &Path) -> Result<ProblemInstance> {
    let file = File::open(path)?;
    let a = parse_matrix_market(BufReader::new(file))?;
    let n = a.n_rows();
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.n_rows(),
            cols: a.n_cols(),
        });
    }
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "matrix".into());
    let mut meta = BTreeMap::new();
    meta.insert("generator".into(), "mm_file".into());
    meta.insert("path".into(), path.display().to_string());
    meta.insert("rhs".into(), "ones".into());
    Ok(ProblemInstance {
        a,
        b: vec![1.0; n],
        label,
        meta,
    })
}

/// Parses MatrixMarket coordinate data. Symmetric storage is expanded.
pub fn parse_matrix_market<R: BufRead>(reader: R) -> Result<SparseMatrix> {
    let mm_err = |line: usize, msg: &str| Error::MatrixMarket {
        line,
        msg: msg.to_string(),
    };
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));

    let (_, banner) = lines.next().ok_or_else(|| mm_err(1, "empty file"))?;
    let banner = banner?;
    let tokens: Vec<String> = banner
        .split_whitespace()
        .map(|t| t.to_ascii_lowercase())
        .collect();
    if tokens.first().map(String::as_str) != Some("%%matrixmarket") {
        return Err(mm_err(1, "missing %%MatrixMarket banner"));
    }
    if tokens.len() != 5 {
        return Err(mm_err(
            1,
            "banner must have object, format, field and symmetry",
        ));
    }
    if tokens[1] != "matrix" || tokens[2] != "coordinate" {
        return Err(mm_err(1, "only 'matrix coordinate' is supported"));
    }
    match tokens[3].as_str() {
        "real" | "integer" | "double" => {}
        other => return Err(mm_err(1, &format!("unsupported field '{other}'"))),
    }
    let symmetric = match tokens[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(mm_err(1, &format!("unsupported symmetry '{other}'"))),
    };

    let mut size: Option<(usize, usize, usize)> = None;
    let mut triplets = Vec::new();
    let mut entries = 0usize;
    for (lineno, line) in lines {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        match size {
            None => {
                if fields.len() != 3 {
                    return Err(mm_err(lineno, "size line must be 'rows cols nnz'"));
                }
                let parse = |s: &str| {
                    s.parse::<usize>()
                        .map_err(|_| mm_err(lineno, &format!("bad integer '{s}'")))
                };
                let (r, c, nz) = (parse(fields[0])?, parse(fields[1])?, parse(fields[2])?);
                if symmetric && r != c {
                    return Err(mm_err(lineno, "symmetric matrix must be square"));
                }
                size = Some((r, c, nz));
            }
            Some((rows, cols, nz)) => {
                if fields.len() != 3 {
                    return Err(mm_err(lineno, "entry line must be 'row col value'"));
                }
                let i: usize = fields[0]
                    .parse()
                    .map_err(|_| mm_err(lineno, "bad row index"))?;
                let j: usize = fields[1]
                    .parse()
                    .map_err(|_| mm_err(lineno, "bad column index"))?;
                let v: f64 = fields[2].parse().map_err(|_| mm_err(lineno, "bad value"))?;
                if i == 0 || j == 0 || i > rows || j > cols {
                    return Err(mm_err(lineno, "index outside declared dimensions"));
                }
                entries += 1;
                if entries > nz {
                    return Err(mm_err(lineno, "more entries than declared"));
                }
                triplets.push((i - 1, j - 1, v));
                if symmetric && i != j {
                    triplets.push((j - 1, i - 1, v));
                }
            }
        }
    }
    let (rows, cols, nz) = size.ok_or_else(|| mm_err(0, "missing size line"))?;
    if entries != nz {
        return Err(mm_err(
            0,
            &format!("declared {nz} entries, found {entries}"),
        ));
    }
    SparseMatrix::from_triplets(rows, cols, &triplets)
}

/// Writes `a` as `coordinate real general` using shortest round-trip formatting.
pub fn write_matrix_market_to<W: Write>(a: &SparseMatrix, mut out: W) -> Result<()> {
    writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(out, "{} {} {}", a.n_rows(), a.n_cols(), a.nnz())?;
    for (i, j, v) in a.triplets() {
        writeln!(out, "{} {} {:e}", i + 1, j + 1, v)?;
    }
    Ok(())
}

pub fn write_matrix_market(a: &SparseMatrix, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_matrix_market_to(a, &mut out)?;
    out.flush()?;
    Ok(())
}
