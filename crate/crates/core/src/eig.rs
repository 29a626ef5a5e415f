//! Eigenvalues with right and left eigenvectors of dense complex matrices.

use std::cmp::Ordering;

use nalgebra::linalg::Schur;

use crate::dq::C64;
use crate::error::{Error, Result};
use crate::network::CMatrix;

/// Above this condition estimate of the right-eigenvector matrix the left
/// eigenvectors are unreliable and a warning is logged.
pub const COND_WARN: f64 = 1e10;

/// `M = W diag(values) U` with unit-norm columns in `W` and `U = W^-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub values: Vec<C64>,
    /// Column `k` is the right eigenvector `w_k`.
    pub right: CMatrix,
    /// Row `k` is the left eigenvector `u_k`.
    pub left: CMatrix,
    /// `||W||_F ||U||_F`, an upper bound on the 2-norm condition number.
    pub cond: f64,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn right_vec(&self, k: usize) -> Vec<C64> {
        self.right.column(k).iter().copied().collect()
    }

    pub fn left_vec(&self, k: usize) -> Vec<C64> {
        self.left.row(k).iter().copied().collect()
    }

    /// `|u_k . w_j|` against another spectrum's right vectors.
    pub fn overlap(&self, k: usize, other: &Spectrum, j: usize) -> f64 {
        dot(self.left.row(k).iter(), other.right.column(j).iter()).norm()
    }
}

pub(crate) fn dot<'a>(
    u: impl Iterator<Item = &'a C64>,
    w: impl Iterator<Item = &'a C64>,
) -> C64 {
    u.zip(w).map(|(a, b)| a * b).sum()
}

fn order(a: &C64, b: &C64) -> Ordering {
    b.norm()
        .total_cmp(&a.norm())
        .then(b.re.total_cmp(&a.re))
        .then(b.im.total_cmp(&a.im))
}

/// Decomposes `m`; eigenvalues come out sorted by descending modulus.
pub fn eig_lr(m: &CMatrix) -> Result<Spectrum> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::Eigen(format!("matrix is {}x{}, not square", n, m.ncols())));
    }
    if n == 0 {
        return Err(Error::Eigen("empty matrix".into()));
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Eigen("matrix has non-finite entries".into()));
    }
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        let id = CMatrix::identity(n, n);
        return Ok(Spectrum {
            values: vec![C64::new(0.0, 0.0); n],
            right: id.clone(),
            left: id,
            cond: n as f64,
        });
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Eigen("Schur iteration did not converge".into()))?;
    let (q, t) = schur.unpack();

    // eigenvectors of the triangular factor by back-substitution
    let tiny = f64::EPSILON * scale;
    let mut v = CMatrix::zeros(n, n);
    for k in 0..n {
        let lam = t[(k, k)];
        v[(k, k)] = C64::new(1.0, 0.0);
        for j in (0..k).rev() {
            let mut acc = C64::new(0.0, 0.0);
            for l in j + 1..=k {
                acc += t[(j, l)] * v[(l, k)];
            }
            let mut d = t[(j, j)] - lam;
            if d.norm() < tiny {
                d = C64::new(tiny, 0.0);
            }
            v[(j, k)] = -acc / d;
        }
    }
    let mut w = q * v;
    for mut col in w.column_iter_mut() {
        let nrm = col.norm();
        col /= C64::new(nrm, 0.0);
    }

    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| order(&t[(a, a)], &t[(b, b)]));
    let values: Vec<C64> = idx.iter().map(|&k| t[(k, k)]).collect();
    let right = CMatrix::from_fn(n, n, |r, c| w[(r, idx[c])]);
    let left = right
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Eigen("eigenvector matrix is singular (defective matrix)".into()))?;
    let cond = right.norm() * left.norm();
    if !cond.is_finite() {
        return Err(Error::Eigen("eigenvector matrix is numerically singular".into()));
    }
    if cond > COND_WARN {
        log::warn!("eigenvector matrix condition estimate {cond:.3e} exceeds {COND_WARN:e}");
    }
    Ok(Spectrum {
        values,
        right,
        left,
        cond,
    })
}
