//! Dense tableau simplex for `max cᵀx  s.t.  Ax ≤ b, x ≥ 0` with `b ≥ 0`.
//!
//! The origin is feasible, so a single phase suffices. Dantzig pricing is used
//! until a run of degenerate pivots appears, after which Bland's rule takes
//! over to guarantee termination.

use crate::error::{Error, Result};

const TOL: f64 = 1e-12;
const DEGENERATE_RUN: usize = 50;

pub(crate) struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

/// `rows` holds the constraint rows of `A` (each of length `c.len()`).
pub(crate) fn maximize(c: &[f64], rows: &[Vec<f64>], b: &[f64]) -> Result<LpSolution> {
    let nv = c.len();
    let nc = rows.len();
    if b.len() != nc {
        return Err(Error::DimensionMismatch { expected: nc, got: b.len() });
    }
    if let Some(bi) = b.iter().find(|&&bi| bi < 0.0) {
        return Err(Error::InvalidParameter(format!("negative right-hand side {bi}")));
    }
    let width = nv + nc + 1;
    // Tableau rows 0..nc are constraints, row nc is the objective (reduced costs).
    let mut t = vec![0.0; (nc + 1) * width];
    for (i, row) in rows.iter().enumerate() {
        if row.len() != nv {
            return Err(Error::DimensionMismatch { expected: nv, got: row.len() });
        }
        t[i * width..i * width + nv].copy_from_slice(row);
        t[i * width + nv + i] = 1.0;
        t[i * width + width - 1] = b[i];
    }
    for (j, &cj) in c.iter().enumerate() {
        t[nc * width + j] = -cj;
    }
    let mut basis: Vec<usize> = (nv..nv + nc).collect();
    let scale = c.iter().fold(1.0f64, |a, v| a.max(v.abs()));

    let mut degenerate = 0;
    let max_iter = 100 * (nv + nc) + 1000;
    for _ in 0..max_iter {
        let obj = &t[nc * width..nc * width + width - 1];
        let bland = degenerate >= DEGENERATE_RUN;
        let entering = if bland {
            obj.iter().position(|&r| r < -TOL * scale)
        } else {
            obj.iter()
                .enumerate()
                .filter(|(_, &r)| r < -TOL * scale)
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(j, _)| j)
        };
        let Some(col) = entering else {
            let mut x = vec![0.0; nv];
            for (i, &bv) in basis.iter().enumerate() {
                if bv < nv {
                    x[bv] = t[i * width + width - 1];
                }
            }
            let objective = c.iter().zip(&x).map(|(a, b)| a * b).sum();
            return Ok(LpSolution { x, objective });
        };

        let mut leave = None;
        let mut best = f64::INFINITY;
        for i in 0..nc {
            let a = t[i * width + col];
            if a > TOL {
                let ratio = t[i * width + width - 1] / a;
                let better = match leave {
                    None => true,
                    Some(l) => {
                        ratio < best - 1e-15 || (ratio <= best + 1e-15 && basis[i] < basis[l])
                    }
                };
                if better {
                    best = ratio;
                    leave = Some(i);
                }
            }
        }
        let Some(row) = leave else {
            return Err(Error::Solver("linear program is unbounded".into()));
        };
        if best <= 1e-15 {
            degenerate += 1;
        } else {
            degenerate = 0;
        }

        let piv = t[row * width + col];
        for k in 0..width {
            t[row * width + k] /= piv;
        }
        let pivot_row: Vec<f64> = t[row * width..(row + 1) * width].to_vec();
        for i in 0..=nc {
            if i == row {
                continue;
            }
            let f = t[i * width + col];
            if f != 0.0 {
                for (k, pv) in pivot_row.iter().enumerate() {
                    t[i * width + k] -= f * pv;
                }
            }
        }
        basis[row] = col;
    }
    Err(Error::Solver(format!("simplex did not converge in {max_iter} pivots")))
}
