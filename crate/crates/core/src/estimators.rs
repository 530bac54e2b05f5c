//! Least-squares estimators for the three training phases, CSI recovery from
//! the scaling identities, and the closed-form MSE expressions.

use crate::channel_model::UserCsi;
use crate::error::{Error, Result};
use crate::linalg::{
    fro_sq, kron, lstsq, lstsq_vec, pinv_frobenius_sq, right_lstsq, scale_columns, unvec, CMat,
    CVec, RankPolicy,
};

/// Phase I: `[g1, Q_bar] = Z Theta_bar^+`.
pub fn ls_phase1(z1: &CMat, theta_bar2: &CMat) -> Result<(CVec, CMat)> {
    let y = right_lstsq(
        z1,
        theta_bar2,
        RankPolicy::Strict,
        "phase I training matrix",
    )?;
    let m2 = theta_bar2.nrows() - 1;
    Ok((y.column(0).into_owned(), y.columns(1, m2).into_owned()))
}

/// Phase II Case 1 output: composite `F = [Q_bar E, R]` and its split.
#[derive(Debug, Clone)]
pub struct Phase2Estimate {
    pub f: Option<CMat>,
    pub e: CMat,
    pub r: CMat,
}

/// Phase II Case 1: `F = Z Omega^+`, `E = Q_bar^+ F[:, 0..=M1]`, `R = F[:, M1+1..]`.
///
/// `policy` applies to `Omega` only; a `Q_bar` without full column rank is a
/// case mismatch (the stacked estimator is needed).
pub fn ls_phase2_case1(
    z2: &CMat,
    omega: &CMat,
    q_bar: &CMat,
    policy: RankPolicy,
) -> Result<Phase2Estimate> {
    let rows = omega.nrows();
    if rows.is_multiple_of(2) {
        return Err(Error::DimensionMismatch(
            "Omega must have 2 M1 + 1 rows".into(),
        ));
    }
    let m1 = (rows - 1) / 2;
    let f = right_lstsq(z2, omega, policy, "Omega")?;
    let e = match lstsq(
        q_bar,
        &f.columns(0, m1 + 1).into_owned(),
        RankPolicy::Strict,
        "Q_bar",
    ) {
        Ok(e) => e,
        Err(Error::RankDeficient { rank, required, .. }) => {
            return Err(Error::CaseMismatch(format!(
                "Q_bar has column rank {rank} < M2 = {required}; use the stacked Case 2 estimator"
            )))
        }
        Err(other) => return Err(other),
    };
    let r = f.columns(m1 + 1, m1).into_owned();
    Ok(Phase2Estimate { f: Some(f), e, r })
}

/// Phase II Case 2: stacked LS on `z = Xi [vec(E); vec(R)] + v`.
pub fn ls_phase2_case2(
    z2: &CVec,
    xi: &CMat,
    n: usize,
    m1: usize,
    m2: usize,
) -> Result<Phase2Estimate> {
    let cols_e = m2 * (m1 + 1);
    if xi.ncols() != cols_e + n * m1 {
        return Err(Error::DimensionMismatch(format!(
            "Xi has {} columns, expected {}",
            xi.ncols(),
            cols_e + n * m1
        )));
    }
    let x = lstsq_vec(xi, z2, RankPolicy::Strict, "Xi")?;
    Ok(Phase2Estimate {
        f: None,
        e: unvec(&x.as_slice()[..cols_e], m2, m1 + 1),
        r: unvec(&x.as_slice()[cols_e..], n, m1),
    })
}

/// `R~ = Q_bar diag(e_0)` and `Q_m = Q_bar diag(e_m)`.
pub fn recover_single_user(q_bar: &CMat, e: &CMat) -> Result<(CMat, Vec<CMat>)> {
    if e.nrows() != q_bar.ncols() || e.ncols() == 0 {
        return Err(Error::DimensionMismatch("E must be M2 x (M1 + 1)".into()));
    }
    let col = |j: usize| e.column(j).into_owned();
    let r_tilde = scale_columns(q_bar, &col(0));
    let q = (1..e.ncols())
        .map(|m| scale_columns(q_bar, &col(m)))
        .collect();
    Ok((r_tilde, q))
}

/// `B = [([Q_1 theta2, ..., Q_M1 theta2] + R) diag(theta1), R~ diag(theta2)]`.
pub fn build_b(q: &[CMat], r: &CMat, r_tilde: &CMat, theta1: &CVec, theta2: &CVec) -> Result<CMat> {
    let (n, m1) = r.shape();
    let m2 = r_tilde.ncols();
    if q.len() != m1 || theta1.len() != m1 || theta2.len() != m2 || r_tilde.nrows() != n {
        return Err(Error::DimensionMismatch("inconsistent B inputs".into()));
    }
    let mut b = CMat::zeros(n, m1 + m2);
    for m in 0..m1 {
        let col = (&q[m] * theta2 + r.column(m)) * theta1[m];
        b.set_column(m, &col);
    }
    b.columns_mut(m1, m2)
        .copy_from(&scale_columns(r_tilde, theta2));
    Ok(b)
}

/// Phase III Case 1: `Lambda = B^+ Z X^+`.
pub fn ls_phase3_case1(z3: &CMat, b: &CMat, x: &CMat) -> Result<CMat> {
    let left = lstsq(b, z3, RankPolicy::Strict, "B")?;
    right_lstsq(&left, x, RankPolicy::Strict, "X")
}

/// Stacked Phase III design with blocks `x^(i)^T kron B^(i)`; reduces to
/// `X^T kron B` when `B` is the same at every symbol.
pub fn build_phase3_stack(x: &CMat, bs: &[CMat]) -> Result<CMat> {
    let (km1, i3) = x.shape();
    if bs.len() != i3 || bs.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} B blocks for {i3} symbols",
            bs.len()
        )));
    }
    let (n, m) = bs[0].shape();
    if bs.iter().any(|b| b.shape() != (n, m)) {
        return Err(Error::DimensionMismatch("B blocks differ in shape".into()));
    }
    let mut out = CMat::zeros(i3 * n, km1 * m);
    for (i, b) in bs.iter().enumerate() {
        let xi = CMat::from_row_slice(1, km1, x.column(i).as_slice());
        out.rows_mut(i * n, n).copy_from(&kron(&xi, b));
    }
    Ok(out)
}

/// Phase III Case 2: `vec(Lambda)` from the stacked model.
pub fn ls_phase3_case2(z3: &CVec, stack: &CMat, m: usize) -> Result<CMat> {
    if m == 0 || !stack.ncols().is_multiple_of(m) {
        return Err(Error::DimensionMismatch(
            "stack width is not a multiple of M1 + M2".into(),
        ));
    }
    let v = lstsq_vec(stack, z3, RankPolicy::Strict, "X^T kron B")?;
    Ok(unvec(v.as_slice(), m, stack.ncols() / m))
}

/// Users `2..K` from the reference CSI and `Lambda = [b_k; b~_k]` columns.
pub fn recover_multi_user(reference: &UserCsi, lambda: &CMat) -> Result<Vec<UserCsi>> {
    let m1 = reference.r.ncols();
    let m2 = reference.r_tilde.ncols();
    if lambda.nrows() != m1 + m2 || reference.q.len() != m1 {
        return Err(Error::DimensionMismatch(
            "Lambda must have M1 + M2 rows".into(),
        ));
    }
    Ok(lambda
        .column_iter()
        .map(|col| {
            let b = col.rows(0, m1).into_owned();
            let bt = col.rows(m1, m2).into_owned();
            UserCsi {
                r: scale_columns(&reference.r, &b),
                r_tilde: scale_columns(&reference.r_tilde, &bt),
                q: reference
                    .q
                    .iter()
                    .zip(b.iter())
                    .map(|(q, s)| q * *s)
                    .collect(),
            }
        })
        .collect())
}

/// Design matrices whose closed-form per-coefficient MSE is known.
#[derive(Debug, Clone, Copy)]
pub enum MseDesign<'a> {
    /// `sigma2 / (M2 + 1) tr((Theta Theta^H)^{-1})`
    Phase1 { theta_bar2: &'a CMat },
    /// `sigma2 / (2 M1 + 1) tr((Omega Omega^H)^{-1})`
    Phase2Case1 { omega: &'a CMat },
    /// `sigma2 / cols(Xi) tr((Xi^H Xi)^{-1})`
    Phase2Case2 { xi: &'a CMat },
    /// `sigma2 / ((K - 1)(M1 + M2)) tr((X X^H)^{-1}) tr((B^H B)^{-1})`
    Phase3Case1 { x: &'a CMat, b: &'a CMat },
    /// General stacked Phase III model, `sigma2 / cols tr((S^H S)^{-1})`.
    Phase3Stacked { stack: &'a CMat },
}

pub fn theoretical_mse(design: MseDesign<'_>, sigma2: f64) -> Result<f64> {
    Ok(match design {
        MseDesign::Phase1 { theta_bar2 } => {
            sigma2 / theta_bar2.nrows() as f64
                * pinv_frobenius_sq(theta_bar2, "phase I training matrix")?
        }
        MseDesign::Phase2Case1 { omega } => {
            sigma2 / omega.nrows() as f64 * pinv_frobenius_sq(omega, "Omega")?
        }
        MseDesign::Phase2Case2 { xi } => sigma2 / xi.ncols() as f64 * pinv_frobenius_sq(xi, "Xi")?,
        MseDesign::Phase3Case1 { x, b } => {
            let tx = pinv_frobenius_sq(x, "X")?;
            let tb = pinv_frobenius_sq(b, "B")?;
            sigma2 / (x.nrows() * b.ncols()) as f64 * tx * tb
        }
        MseDesign::Phase3Stacked { stack } => {
            sigma2 / stack.ncols() as f64 * pinv_frobenius_sq(stack, "stacked B")?
        }
    })
}

/// `||est - truth||_F^2 / ||truth||_F^2 / (rows cols)`.
pub fn normalized_mse(estimate: &CMat, truth: &CMat) -> Result<f64> {
    if estimate.shape() != truth.shape() {
        return Err(Error::DimensionMismatch(format!(
            "estimate {:?} vs truth {:?}",
            estimate.shape(),
            truth.shape()
        )));
    }
    let denom = fro_sq(truth);
    if denom == 0.0 {
        return Err(Error::InvalidArgument(
            "normalized MSE of a zero channel".into(),
        ));
    }
    Ok(fro_sq(&(estimate - truth)) / denom / truth.len() as f64)
}

/// [`normalized_mse`] over a list of equally shaped matrices treated as one block.
pub fn normalized_mse_list(estimate: &[CMat], truth: &[CMat]) -> Result<f64> {
    if estimate.len() != truth.len() || truth.is_empty() {
        return Err(Error::DimensionMismatch(
            "matrix lists differ in length".into(),
        ));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    let mut count = 0usize;
    for (e, t) in estimate.iter().zip(truth) {
        if e.shape() != t.shape() {
            return Err(Error::DimensionMismatch("matrix shapes differ".into()));
        }
        num += fro_sq(&(e - t));
        den += fro_sq(t);
        count += t.len();
    }
    if den == 0.0 {
        return Err(Error::InvalidArgument(
            "normalized MSE of a zero channel".into(),
        ));
    }
    Ok(num / den / count as f64)
}

/// Mean squared error per coefficient, `||est - truth||_F^2 / (rows cols)`.
pub fn mse_per_entry(estimate: &CMat, truth: &CMat) -> f64 {
    fro_sq(&(estimate - truth)) / truth.len() as f64
}
