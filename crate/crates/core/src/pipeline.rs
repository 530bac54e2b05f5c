//! End-to-end simulation of the three-phase training protocol for one channel
//! realization: generate the received pilots, run the estimators, and collect
//! the estimated CSI.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel_model::{CascadedChannelSet, ChannelRealization, ReflectionState, UserCsi};
use crate::error::{Error, Result};
use crate::estimators::{
    build_b, build_phase3_stack, ls_phase1, ls_phase2_case1, ls_phase2_case2, ls_phase3_case1,
    ls_phase3_case2, recover_multi_user, recover_single_user, theoretical_mse, MseDesign,
};
use crate::json;
use crate::linalg::{numerical_rank, vec_of, CMat, CVec, RankPolicy, C64, ONE, RANK_TOL};
use crate::random::{cn, mix_seed, rng_from_seed, SimRng};
use crate::training_design::{
    build_xi, phase1_design, phase1_min_pilots, phase1_random, phase2_case2_min_pilots,
    phase2_certified_case2, phase2_design_case1, phase2_design_heuristic, phase2_design_random,
    phase3_design, phase3_min_pilots, Case2Mode, Phase2Schedule, RankCase, RankCertificate, Scheme,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase1Design {
    #[default]
    Optimal,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase2Design {
    #[default]
    Optimal,
    /// First `M1 + 1` rows of the unshifted DFT; solved with the minimum-norm LS.
    Heuristic,
    Random,
}

/// Which reference CSI the later phases build on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceCsi {
    /// Phase II uses the Phase I estimate of `Q_bar`; Phase III uses the
    /// recovered reference-user CSI.
    #[default]
    Estimated,
    /// Ground truth is substituted at both hand-offs.
    GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    /// Pilot counts per phase; `None` uses the minimum for the active case.
    pub i1: Option<usize>,
    pub i2: Option<usize>,
    pub i3: Option<usize>,
    pub phase1_design: Phase1Design,
    pub phase2_design: Phase2Design,
    pub case2_mode: Case2Mode,
    /// Force a Phase II estimator; `Case1` with `N < M2` is rejected.
    pub phase2_case: Option<RankCase>,
    pub max_retries: u32,
    pub reference: ReferenceCsi,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            i1: None,
            i2: None,
            i3: None,
            phase1_design: Phase1Design::Optimal,
            phase2_design: Phase2Design::Optimal,
            case2_mode: Case2Mode::Random,
            phase2_case: None,
            max_retries: 32,
            reference: ReferenceCsi::Estimated,
        }
    }
}

/// Estimated CSI of one realization plus the bookkeeping of how it was obtained.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateReport {
    pub scheme: Scheme,
    /// Estimated cascaded CSI, user 1 first.
    pub users: Vec<UserCsi>,
    #[serde(with = "json::matrix_opt", default)]
    pub lambda: Option<CMat>,
    #[serde(with = "json::matrix_opt", default)]
    pub g1: Option<CMat>,
    #[serde(with = "json::matrix_opt", default)]
    pub q_bar: Option<CMat>,
    #[serde(with = "json::matrix_opt", default)]
    pub e: Option<CMat>,
    /// Composite `[Q_bar E, R]` (Phase II Case 1 only).
    #[serde(with = "json::matrix_opt", default)]
    pub f: Option<CMat>,
    /// Pilot symbols per phase or stage, in protocol order.
    pub pilots: Vec<(String, usize)>,
    /// Closed-form per-coefficient MSE of each phase, where defined.
    pub theoretical_mse: BTreeMap<String, f64>,
    pub phase2_case: Option<RankCase>,
    pub phase3_case: Option<RankCase>,
    pub phase2_certificate: Option<RankCertificate>,
}

impl EstimateReport {
    pub fn total_pilots(&self) -> usize {
        self.pilots.iter().map(|(_, c)| c).sum()
    }
}

/// Received signal for one symbol: `sum_k x_k h_k + v`.
pub(crate) fn observe<R: Rng + ?Sized>(
    real: &ChannelRealization,
    pilots: &[(usize, C64)],
    theta1: &CVec,
    theta2: &CVec,
    sigma2: f64,
    rng: &mut R,
) -> Result<CVec> {
    let refl = ReflectionState {
        theta1: theta1.clone(),
        theta2: theta2.clone(),
    };
    let mut z = CVec::zeros(real.n());
    for &(k, x) in pilots {
        z += real.effective_channel(k, &refl)? * x;
    }
    if sigma2 > 0.0 {
        for v in z.iter_mut() {
            *v += cn(rng, sigma2);
        }
    }
    Ok(z)
}

fn stream(seed: u64, tag: u64) -> SimRng {
    rng_from_seed(mix_seed(&[seed, tag]))
}

/// Runs Phases I-III of the proposed scheme on one realization.
///
/// `seed` drives the receiver noise and every randomized design choice.
pub fn simulate_proposed(
    real: &ChannelRealization,
    truth: &CascadedChannelSet,
    opts: &PipelineOptions,
    sigma2: f64,
    seed: u64,
) -> Result<EstimateReport> {
    if sigma2.is_nan() || sigma2 < 0.0 {
        return Err(Error::InvalidArgument(
            "noise power must be non-negative".into(),
        ));
    }
    let (n, m1, m2, k) = (real.n(), real.m1(), real.m2(), real.k());
    let mut pilots = Vec::new();
    let mut theory = BTreeMap::new();

    // Phase I: IRS 1 fixed at all ones, IRS 2 sweeps the training matrix.
    let i1 = opts.i1.unwrap_or_else(|| phase1_min_pilots(m2));
    let mut design_rng = stream(seed, 0);
    let p1 = match opts.phase1_design {
        Phase1Design::Optimal => phase1_design(m1, m2, i1)?,
        Phase1Design::Random => phase1_random(m1, m2, i1, &mut design_rng)?,
    };
    let mut noise = stream(seed, 1);
    let mut z1 = CMat::zeros(n, i1);
    for i in 0..i1 {
        z1.set_column(
            i,
            &observe(
                real,
                &[(0, ONE)],
                &p1.theta1,
                &p1.theta2(i),
                sigma2,
                &mut noise,
            )?,
        );
    }
    let (g1_hat, q_bar_hat) = ls_phase1(&z1, &p1.theta_bar2)?;
    pilots.push(("phase1".to_string(), i1));
    if let Ok(t) = theoretical_mse(
        MseDesign::Phase1 {
            theta_bar2: &p1.theta_bar2,
        },
        sigma2,
    ) {
        theory.insert("phase1".to_string(), t);
    }

    let q_ref = match opts.reference {
        ReferenceCsi::Estimated => q_bar_hat.clone(),
        ReferenceCsi::GroundTruth => truth.q_bar.clone(),
    };

    // Phase II
    let case2 = match opts.phase2_case {
        Some(RankCase::Case1) if n < m2 => {
            return Err(Error::CaseMismatch(format!(
                "Case 1 needs N >= M2, got N = {n} < M2 = {m2}"
            )))
        }
        Some(c) => c,
        None => RankCase::phase2(n, m2),
    };
    let mut noise = stream(seed, 2);
    let mut cert = None;
    let p2_est = match case2 {
        RankCase::Case1 => {
            let i2 = opts.i2.unwrap_or(2 * m1 + 1);
            let sched = match opts.phase2_design {
                Phase2Design::Optimal => phase2_design_case1(m1, i2)?,
                Phase2Design::Heuristic => phase2_design_heuristic(m1, i2)?,
                Phase2Design::Random => phase2_design_random(m1, i2, &mut design_rng)?,
            };
            let Phase2Schedule::Case1 { omega, .. } = &sched else {
                unreachable!()
            };
            let mut z2 = CMat::zeros(n, i2);
            for i in 0..i2 {
                let (t1, t2) = sched.reflections(i, m2);
                z2.set_column(
                    i,
                    &observe(real, &[(0, ONE)], &t1, &t2, sigma2, &mut noise)?,
                );
            }
            let policy = if numerical_rank(omega, RANK_TOL) < omega.nrows() {
                RankPolicy::MinimumNorm
            } else {
                RankPolicy::Strict
            };
            if let Ok(t) = theoretical_mse(MseDesign::Phase2Case1 { omega }, sigma2) {
                theory.insert("phase2".to_string(), t);
            }
            pilots.push(("phase2".to_string(), i2));
            ls_phase2_case1(&z2, omega, &q_ref, policy)?
        }
        RankCase::Case2 => {
            let i2 = opts
                .i2
                .unwrap_or_else(|| phase2_case2_min_pilots(n, m1, m2));
            let (sched, c) = phase2_certified_case2(
                &q_ref,
                m1,
                i2,
                opts.case2_mode,
                mix_seed(&[seed, 3]),
                opts.max_retries,
            )?;
            cert = Some(c);
            let Phase2Schedule::Case2 { theta1, theta2, .. } = &sched else {
                unreachable!()
            };
            let mut z2 = CMat::zeros(n, i2);
            for i in 0..i2 {
                z2.set_column(
                    i,
                    &observe(
                        real,
                        &[(0, ONE)],
                        &theta1[i],
                        &theta2[i],
                        sigma2,
                        &mut noise,
                    )?,
                );
            }
            let xi = build_xi(&q_ref, theta1, theta2)?;
            if let Ok(t) = theoretical_mse(MseDesign::Phase2Case2 { xi: &xi }, sigma2) {
                theory.insert("phase2".to_string(), t);
            }
            pilots.push(("phase2".to_string(), i2));
            ls_phase2_case2(&vec_of(&z2), &xi, n, m1, m2)?
        }
    };

    let (r_tilde_hat, q_hat) = recover_single_user(&q_ref, &p2_est.e)?;
    let user1 = UserCsi {
        r: p2_est.r.clone(),
        r_tilde: r_tilde_hat,
        q: q_hat,
    };

    let mut report = EstimateReport {
        scheme: Scheme::Proposed,
        users: vec![user1],
        lambda: None,
        g1: Some(CMat::from_column_slice(n, 1, g1_hat.as_slice())),
        q_bar: Some(q_bar_hat),
        e: Some(p2_est.e),
        f: p2_est.f,
        pilots,
        theoretical_mse: theory,
        phase2_case: Some(case2),
        phase3_case: None,
        phase2_certificate: cert,
    };
    if k < 2 {
        return Ok(report);
    }

    // Phase III: users 2..K transmit, user 1 silent.
    let reference = match opts.reference {
        ReferenceCsi::Estimated => report.users[0].clone(),
        ReferenceCsi::GroundTruth => truth.users[0].clone(),
    };
    let i3 = opts.i3.unwrap_or_else(|| phase3_min_pilots(n, m1, m2, k));
    let p3 = phase3_design(k, i3, m1, m2, n, &mut design_rng)?;
    let mut noise = stream(seed, 4);
    let mut z3 = CMat::zeros(n, i3);
    for i in 0..i3 {
        let tx: Vec<(usize, C64)> = (1..k).map(|kk| (kk, p3.x[(kk - 1, i)])).collect();
        z3.set_column(
            i,
            &observe(real, &tx, &p3.theta1[i], &p3.theta2[i], sigma2, &mut noise)?,
        );
    }
    let lambda = match p3.case {
        RankCase::Case1 => {
            let b = build_b(
                &reference.q,
                &reference.r,
                &reference.r_tilde,
                &p3.theta1[0],
                &p3.theta2[0],
            )?;
            if let Ok(t) = theoretical_mse(MseDesign::Phase3Case1 { x: &p3.x, b: &b }, sigma2) {
                report.theoretical_mse.insert("phase3".to_string(), t);
            }
            ls_phase3_case1(&z3, &b, &p3.x)?
        }
        RankCase::Case2 => {
            let bs = (0..i3)
                .map(|i| {
                    build_b(
                        &reference.q,
                        &reference.r,
                        &reference.r_tilde,
                        &p3.theta1[i],
                        &p3.theta2[i],
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let stack = build_phase3_stack(&p3.x, &bs)?;
            if let Ok(t) = theoretical_mse(MseDesign::Phase3Stacked { stack: &stack }, sigma2) {
                report.theoretical_mse.insert("phase3".to_string(), t);
            }
            ls_phase3_case2(&vec_of(&z3), &stack, m1 + m2)?
        }
    };
    report
        .users
        .extend(recover_multi_user(&reference, &lambda)?);
    report.lambda = Some(lambda);
    report.pilots.push(("phase3".to_string(), i3));
    report.phase3_case = Some(p3.case);
    Ok(report)
}
