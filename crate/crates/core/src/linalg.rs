//! Dense complex linear algebra used by the estimators.
//!
//! Every least-squares solve goes through a thin SVD. Normal-equation forms such
//! as `(A^H A)^{-1} A^H` are never formed explicitly; the design matrices of the
//! non-optimal training schemes can be badly conditioned.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Relative singular-value threshold for rank decisions.
pub const RANK_TOL: f64 = 1e-10;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// How a least-squares solve treats a rank-deficient design.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankPolicy {
    /// Fail with [`Error::RankDeficient`].
    Strict,
    /// Return the minimum-norm solution (truncated pseudo-inverse).
    MinimumNorm,
}

struct Thin {
    u: CMat,
    s: Vec<f64>,
    v_t: CMat,
}

fn thin_svd(a: &CMat) -> Thin {
    let svd = a.clone().svd(true, true);
    Thin {
        u: svd.u.expect("u requested"),
        s: svd.singular_values.iter().copied().collect(),
        v_t: svd.v_t.expect("v_t requested"),
    }
}

fn rank_of(s: &[f64], rel_tol: f64) -> usize {
    let smax = s.iter().copied().fold(0.0_f64, f64::max);
    if smax == 0.0 || !smax.is_finite() {
        return 0;
    }
    s.iter().filter(|&&x| x > rel_tol * smax).count()
}

pub fn singular_values(a: &CMat) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.clone().singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

pub fn numerical_rank(a: &CMat, rel_tol: f64) -> usize {
    rank_of(&singular_values(a), rel_tol)
}

/// Ratio of the smallest to the largest singular value (0 for an empty or zero matrix).
pub fn min_sv_ratio(a: &CMat) -> f64 {
    let s = singular_values(a);
    match (s.first(), s.last()) {
        (Some(&max), Some(&min)) if max > 0.0 => min / max,
        _ => 0.0,
    }
}

/// Solves `min ||A X - B||_F` for a tall (or square) `A`.
///
/// Under [`RankPolicy::Strict`] `A` must have full column rank.
pub fn lstsq(a: &CMat, b: &CMat, policy: RankPolicy, what: &str) -> Result<CMat> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{what}: design has {} rows, observation has {}",
            a.nrows(),
            b.nrows()
        )));
    }
    let n = a.ncols();
    if n == 0 {
        return Ok(CMat::zeros(0, b.ncols()));
    }
    let t = thin_svd(a);
    let rank = rank_of(&t.s, RANK_TOL);
    if policy == RankPolicy::Strict && rank < n {
        return Err(Error::RankDeficient {
            what: what.to_string(),
            rank,
            required: n,
        });
    }
    let smax = t.s.iter().copied().fold(0.0_f64, f64::max);
    // x = V diag(1/s) U^H b, dropping directions below the rank threshold.
    let mut uhb = t.u.adjoint() * b;
    for (i, &s) in t.s.iter().enumerate() {
        let scale = if s > RANK_TOL * smax { 1.0 / s } else { 0.0 };
        uhb.row_mut(i).scale_mut(scale);
    }
    Ok(t.v_t.adjoint() * uhb)
}

/// Solves `min ||Y D - Z||_F` for `Y` given a wide (or square) `D`, i.e. `Y = Z D^+`.
pub fn right_lstsq(z: &CMat, d: &CMat, policy: RankPolicy, what: &str) -> Result<CMat> {
    if z.ncols() != d.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{what}: design has {} columns, observation has {}",
            d.ncols(),
            z.ncols()
        )));
    }
    let yh = lstsq(&d.adjoint(), &z.adjoint(), policy, what)?;
    Ok(yh.adjoint())
}

/// Vector least squares, `min ||A x - b||`.
pub fn lstsq_vec(a: &CMat, b: &CVec, policy: RankPolicy, what: &str) -> Result<CVec> {
    let bm = CMat::from_column_slice(b.len(), 1, b.as_slice());
    let x = lstsq(a, &bm, policy, what)?;
    Ok(CVec::from_column_slice(x.as_slice()))
}

/// `||A^+||_F^2 = sum_i 1/s_i^2`, which equals `tr((A A^H)^{-1})` for a full-row-rank
/// `A` and `tr((A^H A)^{-1})` for a full-column-rank `A`.
pub fn pinv_frobenius_sq(a: &CMat, what: &str) -> Result<f64> {
    let s = singular_values(a);
    let full = a.nrows().min(a.ncols());
    let rank = rank_of(&s, RANK_TOL);
    if rank < full || full == 0 {
        return Err(Error::UndefinedMse(format!(
            "{what} has numerical rank {rank}, need {full}"
        )));
    }
    Ok(s.iter().map(|x| 1.0 / (x * x)).sum())
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = CMat::zeros(ar * br, ac * bc);
    for j in 0..ac {
        for i in 0..ar {
            let s = a[(i, j)];
            if s == ZERO {
                continue;
            }
            let mut blk = out.view_mut((i * br, j * bc), (br, bc));
            blk.zip_apply(b, |o, x| *o = s * x);
        }
    }
    out
}

/// Column-stacking vectorization.
pub fn vec_of(a: &CMat) -> CVec {
    CVec::from_column_slice(a.as_slice())
}

pub fn unvec(v: &[C64], rows: usize, cols: usize) -> CMat {
    CMat::from_column_slice(rows, cols, v)
}

pub fn diag(v: &CVec) -> CMat {
    CMat::from_diagonal(v)
}

/// `A diag(v)`: scales column `j` of `A` by `v[j]`.
pub fn scale_columns(a: &CMat, v: &CVec) -> CMat {
    let mut out = a.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col *= v[j];
    }
    out
}

pub fn fro_sq(a: &CMat) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

/// `||a - b||_F / ||b||_F`; falls back to the absolute error when `b` is zero.
pub fn rel_error(a: &CMat, b: &CMat) -> f64 {
    let diff = fro_sq(&(a - b)).sqrt();
    let nb = fro_sq(b).sqrt();
    if nb == 0.0 {
        diff
    } else {
        diff / nb
    }
}

pub fn rel_error_vec(a: &CVec, b: &CVec) -> f64 {
    let diff = (a - b).norm();
    let nb = b.norm();
    if nb == 0.0 {
        diff
    } else {
        diff / nb
    }
}

pub fn max_abs(a: &CMat) -> f64 {
    a.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

pub fn ones(n: usize) -> CVec {
    CVec::from_element(n, ONE)
}

pub fn col_vec(a: &CMat, j: usize) -> CVec {
    a.column(j).into_owned()
}

pub fn as_column(v: &CVec) -> CMat {
    CMat::from_column_slice(v.len(), 1, v.as_slice())
}
