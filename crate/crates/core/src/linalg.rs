//! Dense linear-algebra helpers shared by the solvers.
//!
//! Every singular decomposition returned from here follows one sign
//! convention: in each left singular vector the entry of largest magnitude
//! is positive (ties go to the lowest row index), and the matching right
//! singular vector is flipped with it. This keeps scores and loadings
//! reproducible across runs and LAPACK builds.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use ndarray_linalg::{JobSvd, QR, SVD, SVDDC};

use crate::error::Result;

/// Thin singular value decomposition `a = u · diag(s) · vt`.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: Array2<f64>,
    pub s: Array1<f64>,
    pub vt: Array2<f64>,
}

impl ThinSvd {
    pub fn rank(&self, rel_tol: f64) -> usize {
        let cutoff = rel_tol * self.s.first().copied().unwrap_or(0.0);
        self.s.iter().filter(|&&v| v > cutoff && v > 0.0).count()
    }

    /// Left singular vectors as columns of `v` (transpose of `vt`).
    pub fn v(&self) -> Array2<f64> {
        self.vt.t().to_owned()
    }
}

pub fn thin_svd(a: ArrayView2<f64>) -> Result<ThinSvd> {
    let (n, m) = a.dim();
    let k = n.min(m);
    if k == 0 {
        return Ok(ThinSvd {
            u: Array2::zeros((n, 0)),
            s: Array1::zeros(0),
            vt: Array2::zeros((0, m)),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(crate::SlideError::NonFinite("singular value decomposition input"));
    }
    let (u, s, vt) = match a.svddc(JobSvd::Some) {
        Ok((Some(u), s, Some(vt))) => (u, s, vt),
        // gesdd occasionally fails to converge where the QR-iteration driver succeeds.
        _ => {
            let (u, s, vt) = a.svd(true, true)?;
            let u = u.expect("u requested");
            let vt = vt.expect("vt requested");
            (u.slice(s![.., ..k]).to_owned(), s, vt.slice(s![..k, ..]).to_owned())
        }
    };
    let mut out = ThinSvd { u, s, vt };
    apply_sign_convention(&mut out.u, Some(&mut out.vt));
    Ok(out)
}

/// Flip columns of `u` (and the matching rows of `vt`) so that each column's
/// largest-magnitude entry is positive.
pub fn apply_sign_convention(u: &mut Array2<f64>, mut vt: Option<&mut Array2<f64>>) {
    for j in 0..u.ncols() {
        if pivot_is_negative(u.column(j)) {
            u.column_mut(j).mapv_inplace(|v| -v);
            if let Some(vt) = vt.as_deref_mut() {
                vt.row_mut(j).mapv_inplace(|v| -v);
            }
        }
    }
}

fn pivot_is_negative(col: ndarray::ArrayView1<f64>) -> bool {
    let mut best = 0.0_f64;
    let mut sign_negative = false;
    for &v in col.iter() {
        // strict comparison keeps the first (lowest-index) maximiser
        if v.abs() > best {
            best = v.abs();
            sign_negative = v < 0.0;
        }
    }
    sign_negative
}

/// Orthonormal basis of the column space of `a` via Householder QR.
///
/// Signs are fixed so that `R` has a non-negative diagonal, i.e. the result
/// agrees with classical Gram–Schmidt applied to the columns in order.
pub fn orthonormalize(a: ArrayView2<f64>) -> Result<Array2<f64>> {
    let (n, m) = a.dim();
    if m == 0 {
        return Ok(Array2::zeros((n, 0)));
    }
    let (mut q, r) = a.qr()?;
    for j in 0..q.ncols() {
        if r[[j, j]] < 0.0 {
            q.column_mut(j).mapv_inplace(|v| -v);
        }
    }
    Ok(q)
}

/// Orthonormal basis for `col(a)`, dropping directions whose singular value
/// does not exceed `abs_cutoff`.
pub fn column_basis(a: ArrayView2<f64>, abs_cutoff: f64) -> Result<Array2<f64>> {
    let svd = thin_svd(a)?;
    let k = svd.s.iter().filter(|&&v| v > abs_cutoff).count();
    Ok(svd.u.slice(s![.., ..k]).to_owned())
}

pub fn frobenius_sq(a: ArrayView2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum()
}

pub fn column_means(a: ArrayView2<f64>) -> Array1<f64> {
    let n = a.nrows().max(1) as f64;
    a.sum_axis(Axis(0)) / n
}

pub fn column_center(a: ArrayView2<f64>) -> (Array2<f64>, Array1<f64>) {
    let means = column_means(a);
    let centered = &a - &means.view().insert_axis(Axis(0));
    (centered, means)
}

/// Largest singular value.
pub fn spectral_norm(a: ArrayView2<f64>) -> Result<f64> {
    if a.is_empty() {
        return Ok(0.0);
    }
    let (_, s, _) = a.svddc(JobSvd::None)?;
    Ok(s.first().copied().unwrap_or(0.0))
}

/// Maximum absolute deviation of `qᵀq` from the identity.
pub fn orthonormality_defect(q: ArrayView2<f64>) -> f64 {
    let g = q.t().dot(&q);
    let mut worst = 0.0_f64;
    for ((i, j), v) in g.indexed_iter() {
        let target = if i == j { 1.0 } else { 0.0 };
        worst = worst.max((v - target).abs());
    }
    worst
}

/// Gather the listed rows and columns of `a` into a new matrix.
pub fn submatrix(a: ArrayView2<f64>, rows: &[usize], cols: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn((rows.len(), cols.len()), |(i, j)| a[[rows[i], cols[j]]])
}
