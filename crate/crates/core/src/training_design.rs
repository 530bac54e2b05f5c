//! Training reflection schedules and pilot matrices for the three estimation
//! phases, plus minimum-overhead accounting.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json;
use crate::linalg::{diag, max_abs, ones, singular_values, CMat, CVec, C64, ONE, RANK_TOL};
use crate::random::{mix_seed, random_phase_matrix, random_phases, rng_from_seed};

/// `W[p, q] = exp(-j 2 pi p q / n)`.
pub fn dft(n: usize) -> Result<CMat> {
    if n == 0 {
        return Err(Error::InvalidArgument("DFT size must be at least 1".into()));
    }
    Ok(CMat::from_fn(n, n, |p, q| {
        // reduce p*q first so large sizes keep full phase accuracy
        let pq = (p * q) % n;
        C64::from_polar(1.0, -2.0 * PI * pq as f64 / n as f64)
    }))
}

/// Row `r` (taken mod `n`) of the `n x n` DFT matrix.
pub fn dft_row(n: usize, r: usize) -> CVec {
    CVec::from_fn(n, |q, _| {
        C64::from_polar(1.0, -2.0 * PI * ((r * q) % n) as f64 / n as f64)
    })
}

fn rows_of(n: usize, rows: impl IntoIterator<Item = usize>) -> CMat {
    let rows: Vec<CVec> = rows.into_iter().map(|r| dft_row(n, r % n)).collect();
    let mut m = CMat::zeros(rows.len(), n);
    for (i, r) in rows.iter().enumerate() {
        m.set_row(i, &r.transpose());
    }
    m
}

fn ceil_div(a: usize, b: usize) -> usize {
    a.div_ceil(b)
}

/// Minimum Phase I length.
pub fn phase1_min_pilots(m2: usize) -> usize {
    m2 + 1
}

/// Minimum Phase II length for the given case.
pub fn phase2_min_pilots(n: usize, m1: usize, m2: usize) -> usize {
    if n >= m2 {
        2 * m1 + 1
    } else {
        ceil_div((m1 + 1) * m2, n) + m1
    }
}

/// Minimum Phase II length of the stacked (Case 2) estimator. The part of the
/// signal that involves `E` lives in the column space of `Q_bar`, of dimension
/// `min(N, M2)`, so for `N >= M2` this is `2 M1 + 1` as in Case 1.
pub fn phase2_case2_min_pilots(n: usize, m1: usize, m2: usize) -> usize {
    ceil_div((m1 + 1) * m2, n.min(m2)) + m1
}

/// Minimum Phase III length (0 for a single user).
pub fn phase3_min_pilots(n: usize, m1: usize, m2: usize, k: usize) -> usize {
    if k <= 1 {
        0
    } else if n >= m1 + m2 {
        k - 1
    } else {
        ceil_div((k - 1) * (m1 + m2), n)
    }
}

/// Which Phase II / Phase III estimator applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankCase {
    Case1,
    Case2,
}

impl RankCase {
    pub fn phase2(n: usize, m2: usize) -> Self {
        if n >= m2 {
            Self::Case1
        } else {
            Self::Case2
        }
    }

    pub fn phase3(n: usize, m1: usize, m2: usize) -> Self {
        if n >= m1 + m2 {
            Self::Case1
        } else {
            Self::Case2
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase1Schedule {
    pub i1: usize,
    /// `(M2 + 1) x I1`; row 0 is all ones, column `i` below it is `theta2` at symbol `i`.
    #[serde(with = "json::matrix")]
    pub theta_bar2: CMat,
    /// IRS 1 reflection, held at all ones.
    #[serde(with = "json::vector")]
    pub theta1: CVec,
}

impl Phase1Schedule {
    pub fn m2(&self) -> usize {
        self.theta_bar2.nrows() - 1
    }

    pub fn theta2(&self, i: usize) -> CVec {
        self.theta_bar2
            .view((1, i), (self.m2(), 1))
            .column(0)
            .into_owned()
    }
}

fn check_pilots(phase: &'static str, got: usize, required: usize) -> Result<()> {
    if got < required {
        return Err(Error::InsufficientPilots {
            phase,
            required,
            got,
        });
    }
    Ok(())
}

/// First `M2 + 1` rows of the `I1`-point DFT.
pub fn phase1_design(m1: usize, m2: usize, i1: usize) -> Result<Phase1Schedule> {
    check_pilots("phase I", i1, phase1_min_pilots(m2))?;
    Ok(Phase1Schedule {
        i1,
        theta_bar2: rows_of(i1, 0..=m2),
        theta1: ones(m1),
    })
}

/// Uniformly random IRS 2 phases (the fixed all-ones row is kept).
pub fn phase1_random<R: Rng + ?Sized>(
    m1: usize,
    m2: usize,
    i1: usize,
    rng: &mut R,
) -> Result<Phase1Schedule> {
    check_pilots("phase I", i1, phase1_min_pilots(m2))?;
    let mut theta_bar2 = CMat::from_element(m2 + 1, i1, ONE);
    theta_bar2
        .rows_mut(1, m2)
        .copy_from(&random_phase_matrix(rng, m2, i1));
    Ok(Phase1Schedule {
        i1,
        theta_bar2,
        theta1: ones(m1),
    })
}

/// Phase II schedule. In Case 1 IRS 2 applies the common phase `psi_row[i]`
/// to every subsurface at symbol `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum Phase2Schedule {
    Case1 {
        i2: usize,
        #[serde(with = "json::matrix")]
        theta1: CMat,
        /// Common IRS 2 phase per symbol (the row vector `psi^H`).
        #[serde(with = "json::vector")]
        psi_row: CVec,
        /// `[psi^H; Theta1 diag(psi^H); Theta1]`, `(2 M1 + 1) x I2`.
        #[serde(with = "json::matrix")]
        omega: CMat,
    },
    Case2 {
        i2: usize,
        #[serde(with = "json::vector_list")]
        theta1: Vec<CVec>,
        #[serde(with = "json::vector_list")]
        theta2: Vec<CVec>,
    },
}

impl Phase2Schedule {
    pub fn i2(&self) -> usize {
        match self {
            Self::Case1 { i2, .. } | Self::Case2 { i2, .. } => *i2,
        }
    }

    pub fn case(&self) -> RankCase {
        match self {
            Self::Case1 { .. } => RankCase::Case1,
            Self::Case2 { .. } => RankCase::Case2,
        }
    }

    /// Reflections applied at symbol `i`.
    pub fn reflections(&self, i: usize, m2: usize) -> (CVec, CVec) {
        match self {
            Self::Case1 {
                theta1, psi_row, ..
            } => (
                theta1.column(i).into_owned(),
                CVec::from_element(m2, psi_row[i]),
            ),
            Self::Case2 { theta1, theta2, .. } => (theta1[i].clone(), theta2[i].clone()),
        }
    }
}

/// `[psi^H; Theta1 diag(psi^H); Theta1]`.
pub fn assemble_omega(theta1: &CMat, psi_row: &CVec) -> Result<CMat> {
    let (m1, i2) = theta1.shape();
    if psi_row.len() != i2 {
        return Err(Error::DimensionMismatch(format!(
            "psi has length {}, Theta1 has {i2} columns",
            psi_row.len()
        )));
    }
    let mut omega = CMat::zeros(2 * m1 + 1, i2);
    omega.set_row(0, &psi_row.transpose());
    omega.rows_mut(1, m1).copy_from(&(theta1 * diag(psi_row)));
    omega.rows_mut(m1 + 1, m1).copy_from(theta1);
    Ok(omega)
}

fn case1_from(theta1: CMat, psi_row: CVec) -> Result<Phase2Schedule> {
    let omega = assemble_omega(&theta1, &psi_row)?;
    Ok(Phase2Schedule::Case1 {
        i2: theta1.ncols(),
        theta1,
        psi_row,
        omega,
    })
}

/// Joint design from the row-shifted DFT: with the first DFT row moved to the
/// bottom, `Theta1` takes the first `M1` rows and `psi^H` the next one. In
/// unshifted indices `Theta1 = [w_1; ...; w_M1]`, `psi^H = w_{M1+1}`, so `Omega`
/// consists of the distinct rows `w_1, ..., w_{2 M1 + 1}` (mod `I2`).
pub fn phase2_design_case1(m1: usize, i2: usize) -> Result<Phase2Schedule> {
    check_pilots("phase II", i2, 2 * m1 + 1)?;
    let theta1 = rows_of(i2, 1..=m1);
    let psi_row = dft_row(i2, (m1 + 1) % i2);
    case1_from(theta1, psi_row)
}

/// `Theta1` and `psi^H` taken from the first `M1 + 1` rows of the unshifted DFT.
/// `Omega` then repeats row `w_M1`, so it is rank deficient by one.
pub fn phase2_design_heuristic(m1: usize, i2: usize) -> Result<Phase2Schedule> {
    check_pilots("phase II", i2, 2 * m1 + 1)?;
    case1_from(rows_of(i2, 0..m1), dft_row(i2, m1))
}

/// Uniformly random `Theta1` and `psi^H`.
pub fn phase2_design_random<R: Rng + ?Sized>(
    m1: usize,
    i2: usize,
    rng: &mut R,
) -> Result<Phase2Schedule> {
    check_pilots("phase II", i2, 2 * m1 + 1)?;
    case1_from(random_phase_matrix(rng, m1, i2), random_phases(rng, i2))
}

/// Deviations from the four orthogonality conditions on `(Theta1, psi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase2ConditionReport {
    /// `max |Theta1 Theta1^H - I2 I|`
    pub gram: f64,
    /// `max |Theta1 1|`
    pub row_sums: f64,
    /// `max |Theta1 psi|`
    pub psi_orthogonal: f64,
    /// `max |Theta1 diag(psi^H) Theta1^H|`
    pub cross: f64,
    pub tol: f64,
    pub passed: bool,
}

pub fn verify_phase2_conditions(
    theta1: &CMat,
    psi_row: &CVec,
    tol: f64,
) -> Result<Phase2ConditionReport> {
    let (m1, i2) = theta1.shape();
    if psi_row.len() != i2 {
        return Err(Error::DimensionMismatch(
            "psi length differs from the number of symbols".into(),
        ));
    }
    let gram =
        max_abs(&(theta1 * theta1.adjoint() - CMat::identity(m1, m1) * C64::new(i2 as f64, 0.0)));
    let row_sums = (theta1 * ones(i2))
        .iter()
        .map(|x| x.norm())
        .fold(0.0, f64::max);
    let psi = psi_row.map(|x| x.conj());
    let psi_orthogonal = (theta1 * psi).iter().map(|x| x.norm()).fold(0.0, f64::max);
    let cross = max_abs(&(theta1 * diag(psi_row) * theta1.adjoint()));
    let passed = [gram, row_sums, psi_orthogonal, cross]
        .iter()
        .all(|d| *d <= tol);
    Ok(Phase2ConditionReport {
        gram,
        row_sums,
        psi_orthogonal,
        cross,
        tol,
        passed,
    })
}

/// How Case 2 reflection sequences are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Case2Mode {
    /// I.i.d. uniform phases for every subsurface and symbol.
    #[default]
    Random,
    /// `theta1` from row-shifted DFT columns, `theta2` from cyclic shifts of a
    /// Zadoff-Chu sequence whose root changes with the attempt number.
    Structured,
}

/// Unit-modulus Zadoff-Chu sequence of length `len` with root `root`.
pub fn zadoff_chu(len: usize, root: usize) -> CVec {
    let l = len as f64;
    let cf = (len % 2) as f64;
    CVec::from_fn(len, |n, _| {
        let n = n as f64;
        C64::from_polar(1.0, -PI * root as f64 * n * (n + cf) / l)
    })
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// The `index`-th positive integer coprime with `len` (a valid ZC root).
fn zc_root(len: usize, index: usize) -> usize {
    if len <= 1 {
        return 1;
    }
    (1..).filter(|r| gcd(*r, len) == 1).nth(index).unwrap_or(1)
}

/// One uncertified Case 2 schedule. `attempt` selects the draw: a fresh seed in
/// random mode, a different Zadoff-Chu root in structured mode.
pub fn phase2_design_case2(
    m1: usize,
    m2: usize,
    n: usize,
    i2: usize,
    mode: Case2Mode,
    seed: u64,
    attempt: u32,
) -> Result<Phase2Schedule> {
    if n == 0 {
        return Err(Error::InvalidArgument("N must be at least 1".into()));
    }
    check_pilots("phase II", i2, phase2_case2_min_pilots(n, m1, m2))?;
    let (theta1, theta2) = match mode {
        Case2Mode::Random => {
            let mut rng = rng_from_seed(mix_seed(&[seed, attempt as u64]));
            let t1 = (0..i2).map(|_| random_phases(&mut rng, m1)).collect();
            let t2 = (0..i2).map(|_| random_phases(&mut rng, m2)).collect();
            (t1, t2)
        }
        Case2Mode::Structured => {
            let zc = zadoff_chu(m2, zc_root(m2, attempt as usize));
            let t1 = (0..i2)
                .map(|i| CVec::from_fn(m1, |r, _| dft_row(i2, (r + 1) % i2)[i]))
                .collect();
            // shift by symbol index, with a per-wrap DFT twist so repeats differ
            let t2 = (0..i2)
                .map(|i| {
                    let shift = i % m2;
                    let wrap = (i / m2) as f64;
                    CVec::from_fn(m2, |q, _| {
                        zc[(q + shift) % m2]
                            * C64::from_polar(1.0, -2.0 * PI * wrap * q as f64 / m2 as f64)
                    })
                })
                .collect();
            (t1, t2)
        }
    };
    Ok(Phase2Schedule::Case2 { i2, theta1, theta2 })
}

/// Outcome of a numerical rank check on a stacked design matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankCertificate {
    pub rank: usize,
    pub required: usize,
    /// Smallest over largest singular value.
    pub min_sv_ratio: f64,
    pub passed: bool,
}

pub fn rank_certificate(a: &CMat) -> RankCertificate {
    let s = singular_values(a);
    let required = a.ncols();
    let smax = s.first().copied().unwrap_or(0.0);
    let rank = if smax > 0.0 {
        s.iter().filter(|x| **x > RANK_TOL * smax).count()
    } else {
        0
    };
    let min_sv_ratio = if smax > 0.0 && s.len() >= required {
        s[required - 1] / smax
    } else {
        0.0
    };
    RankCertificate {
        rank,
        required,
        min_sv_ratio,
        passed: rank == required && a.nrows() >= required,
    }
}

/// Stacked Phase II Case 2 design `Xi` for a given `Q_bar` (usually estimated).
///
/// Block `i` is `[theta~1^T kron Q_bar diag(theta2), theta1^T kron I_N]` with
/// `theta~1 = [1; theta1]`; unknowns are `[vec(E); vec(R)]`.
pub fn build_xi(q_bar: &CMat, theta1: &[CVec], theta2: &[CVec]) -> Result<CMat> {
    let (n, m2) = q_bar.shape();
    if theta1.len() != theta2.len() || theta1.is_empty() {
        return Err(Error::DimensionMismatch(
            "theta1 and theta2 sequences differ in length".into(),
        ));
    }
    let m1 = theta1[0].len();
    if theta1.iter().any(|t| t.len() != m1) || theta2.iter().any(|t| t.len() != m2) {
        return Err(Error::DimensionMismatch(
            "reflection vector lengths are inconsistent".into(),
        ));
    }
    let cols_e = m2 * (m1 + 1);
    let mut xi = CMat::zeros(theta1.len() * n, cols_e + n * m1);
    for (i, (t1, t2)) in theta1.iter().zip(theta2).enumerate() {
        let qpsi = crate::linalg::scale_columns(q_bar, t2);
        for c in 0..=m1 {
            let w = if c == 0 { ONE } else { t1[c - 1] };
            xi.view_mut((i * n, c * m2), (n, m2))
                .copy_from(&(&qpsi * w));
        }
        for m in 0..m1 {
            let mut blk = xi.view_mut((i * n, cols_e + m * n), (n, n));
            for d in 0..n {
                blk[(d, d)] = t1[m];
            }
        }
    }
    Ok(xi)
}

pub fn verify_xi_rank(q_bar: &CMat, schedule: &Phase2Schedule) -> Result<RankCertificate> {
    match schedule {
        Phase2Schedule::Case2 { theta1, theta2, .. } => {
            Ok(rank_certificate(&build_xi(q_bar, theta1, theta2)?))
        }
        Phase2Schedule::Case1 { .. } => Err(Error::CaseMismatch(
            "rank certification applies to stacked (Case 2) schedules".into(),
        )),
    }
}

/// Draws Case 2 schedules until one passes [`verify_xi_rank`] against `q_bar`.
pub fn phase2_certified_case2(
    q_bar: &CMat,
    m1: usize,
    i2: usize,
    mode: Case2Mode,
    seed: u64,
    max_retries: u32,
) -> Result<(Phase2Schedule, RankCertificate)> {
    let (n, m2) = q_bar.shape();
    let mut last = None;
    for attempt in 0..max_retries.max(1) {
        let sched = phase2_design_case2(m1, m2, n, i2, mode, seed, attempt)?;
        let cert = verify_xi_rank(q_bar, &sched)?;
        if cert.passed {
            return Ok((sched, cert));
        }
        last = Some(cert);
    }
    let last = last.expect("at least one attempt");
    Err(Error::DesignFailure {
        attempts: max_retries.max(1),
        last_rank: last.rank,
        required: last.required,
    })
}

/// Phase III schedule: pilot matrix plus per-symbol reflections. In Case 1 the
/// reflections are the same at every symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase3Schedule {
    pub i3: usize,
    pub case: RankCase,
    /// `(K - 1) x I3`, row `k` holds the pilots of user `k + 2`.
    #[serde(with = "json::matrix")]
    pub x: CMat,
    #[serde(with = "json::vector_list")]
    pub theta1: Vec<CVec>,
    #[serde(with = "json::vector_list")]
    pub theta2: Vec<CVec>,
}

/// `X` is the first `K - 1` rows of the `I3`-point DFT. Reflections are random
/// unit-modulus phases; held fixed in Case 1 and redrawn every symbol in Case 2,
/// where a fixed `B` cannot give the stacked model full column rank
/// (`rank(X^T kron B) = (K - 1) N`).
pub fn phase3_design<R: Rng + ?Sized>(
    k: usize,
    i3: usize,
    m1: usize,
    m2: usize,
    n: usize,
    rng: &mut R,
) -> Result<Phase3Schedule> {
    if k < 2 {
        return Err(Error::InvalidArgument(
            "phase III needs at least two users".into(),
        ));
    }
    let case = RankCase::phase3(n, m1, m2);
    check_pilots("phase III", i3, phase3_min_pilots(n, m1, m2, k).max(k - 1))?;
    let x = rows_of(i3, 0..k - 1);
    let (theta1, theta2) = match case {
        RankCase::Case1 => {
            let t1 = random_phases(rng, m1);
            let t2 = random_phases(rng, m2);
            (vec![t1; i3], vec![t2; i3])
        }
        RankCase::Case2 => (
            (0..i3).map(|_| random_phases(rng, m1)).collect(),
            (0..i3).map(|_| random_phases(rng, m2)).collect(),
        ),
    };
    Ok(Phase3Schedule {
        i3,
        case,
        x,
        theta1,
        theta2,
    })
}

/// Training schemes with an overhead formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Proposed,
    Decoupled,
    PerAntenna,
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Self::Proposed),
            "decoupled" => Ok(Self::Decoupled),
            "per_antenna" | "perAntenna" | "per-antenna" => Ok(Self::PerAntenna),
            other => Err(Error::InvalidArgument(format!("unknown scheme {other:?}"))),
        }
    }
}

pub fn proposed_overhead(n: usize, m1: usize, m2: usize, k: usize) -> usize {
    phase1_min_pilots(m2) + phase2_min_pilots(n, m1, m2) + phase3_min_pilots(n, m1, m2, k)
}

/// Minimum number of pilot symbols for `scheme`.
pub fn overhead(scheme: Scheme, n: usize, m1: usize, m2: usize, k: usize) -> Result<usize> {
    if n == 0 || m1 == 0 || m2 == 0 || k == 0 {
        return Err(Error::InvalidArgument(
            "N, M1, M2 and K must be positive".into(),
        ));
    }
    match scheme {
        Scheme::Proposed => Ok(proposed_overhead(n, m1, m2, k)),
        Scheme::Decoupled => Ok(crate::benchmarks::decoupled_overhead(n, m1, m2, k)),
        Scheme::PerAntenna => crate::benchmarks::per_antenna_overhead(m1, m2, k),
    }
}
