//! Decoupled ON/OFF benchmark and the overhead of the per-antenna benchmark.
//!
//! The decoupled scheme estimates the two single-reflection channels one at a
//! time with the other IRS switched OFF, then switches both ON, cancels the
//! single-reflection contributions using those estimates and fits the
//! double-reflection channels as column scalings of the estimated `R~`
//! (`Q_m = R~ diag(c_m)`, both share `G2`). Extra users are handled by two
//! more stages estimating `b_k` (IRS 2 OFF) and `b~_k` (IRS 1 OFF).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::channel_model::{CascadedChannelSet, ChannelRealization, UserCsi};
use crate::error::{Error, Result};
use crate::estimators::{build_phase3_stack, ls_phase3_case1, ls_phase3_case2, recover_multi_user};
use crate::linalg::{
    kron, lstsq, lstsq_vec, right_lstsq, scale_columns, unvec, vec_of, CMat, CVec, RankPolicy, C64,
    ONE,
};
use crate::pipeline::{observe, EstimateReport, ReferenceCsi};
use crate::random::{mix_seed, random_phases, rng_from_seed, SimRng};
use crate::training_design::{dft, RankCase, Scheme};

fn ceil_div(a: usize, b: usize) -> usize {
    a.div_ceil(b)
}

/// Pilot symbols of each decoupled stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoupledPilots {
    /// IRS 2 OFF: `R`.
    pub a: usize,
    /// IRS 1 OFF: `R~`.
    pub b: usize,
    /// Both ON: `c_m`.
    pub c: usize,
    /// IRS 2 OFF, users 2..K: `b_k`.
    pub users_b: usize,
    /// IRS 1 OFF, users 2..K: `b~_k`.
    pub users_b_tilde: usize,
}

impl DecoupledPilots {
    /// Per-stage minima.
    pub fn minimum(n: usize, m1: usize, m2: usize, k: usize) -> Self {
        let km1 = k.saturating_sub(1);
        let multi = |m: usize| {
            if km1 == 0 {
                0
            } else if n >= m {
                km1
            } else {
                ceil_div(km1 * m, n)
            }
        };
        Self {
            a: m1,
            b: m2,
            c: if n >= m2 { m1 } else { ceil_div(m1 * m2, n) },
            users_b: multi(m1),
            users_b_tilde: multi(m2),
        }
    }

    pub fn single_user_total(&self) -> usize {
        self.a + self.b + self.c
    }

    pub fn total(&self) -> usize {
        self.single_user_total() + self.users_b + self.users_b_tilde
    }

    /// Single-user stages scaled to a total of `total` symbols, in proportion to
    /// their minima; rounding leftovers go to stage C.
    pub fn scaled_single_user(n: usize, m1: usize, m2: usize, total: usize) -> Result<Self> {
        let min = Self::minimum(n, m1, m2, 1);
        if total < min.single_user_total() {
            return Err(Error::InsufficientPilots {
                phase: "decoupled",
                required: min.single_user_total(),
                got: total,
            });
        }
        let f = total as f64 / min.single_user_total() as f64;
        let a = ((min.a as f64 * f).floor() as usize).max(min.a);
        let b = ((min.b as f64 * f).floor() as usize).max(min.b);
        Ok(Self {
            a,
            b,
            c: total - a - b,
            users_b: 0,
            users_b_tilde: 0,
        })
    }
}

pub fn decoupled_overhead(n: usize, m1: usize, m2: usize, k: usize) -> usize {
    DecoupledPilots::minimum(n, m1, m2, k).total()
}

/// `K M + K M^2 / 4` with `M = M1 + M2`; defined only for `M1 = M2`.
pub fn per_antenna_overhead(m1: usize, m2: usize, k: usize) -> Result<usize> {
    if m1 != m2 {
        return Err(Error::Unsupported(
            "the per-antenna overhead formula assumes M1 = M2".into(),
        ));
    }
    let m = m1 + m2;
    Ok(k * m + k * m * m / 4)
}

fn stream(seed: u64, tag: u64) -> SimRng {
    rng_from_seed(mix_seed(&[seed, tag]))
}

fn dft_rows(i: usize, rows: usize) -> Result<CMat> {
    Ok(dft(i)?.rows(0, rows).into_owned())
}

fn check_stage(phase: &'static str, got: usize, required: usize) -> Result<()> {
    if got < required {
        return Err(Error::InsufficientPilots {
            phase,
            required,
            got,
        });
    }
    Ok(())
}

/// Runs every decoupled stage on one realization.
pub fn decoupled_estimate(
    real: &ChannelRealization,
    truth: &CascadedChannelSet,
    pilots: &DecoupledPilots,
    reference: ReferenceCsi,
    sigma2: f64,
    seed: u64,
) -> Result<EstimateReport> {
    let (n, m1, m2, k) = (real.n(), real.m1(), real.m2(), real.k());
    let min = DecoupledPilots::minimum(n, m1, m2, k);
    check_stage("decoupled stage A", pilots.a, min.a)?;
    check_stage("decoupled stage B", pilots.b, min.b)?;
    check_stage("decoupled stage C", pilots.c, min.c)?;
    let off1 = CVec::zeros(m1);
    let off2 = CVec::zeros(m2);
    let mut design = stream(seed, 10);
    let user1 = [(0usize, ONE)];

    // Stage A: IRS 2 OFF, z = R theta1 + v.
    let ta = dft_rows(pilots.a, m1)?;
    let mut noise = stream(seed, 11);
    let mut za = CMat::zeros(n, pilots.a);
    for i in 0..pilots.a {
        za.set_column(
            i,
            &observe(
                real,
                &user1,
                &ta.column(i).into_owned(),
                &off2,
                sigma2,
                &mut noise,
            )?,
        );
    }
    let r_hat = right_lstsq(&za, &ta, RankPolicy::Strict, "stage A training")?;

    // Stage B: IRS 1 OFF, z = R~ theta2 + v.
    let tb = dft_rows(pilots.b, m2)?;
    let mut noise = stream(seed, 12);
    let mut zb = CMat::zeros(n, pilots.b);
    for i in 0..pilots.b {
        zb.set_column(
            i,
            &observe(
                real,
                &user1,
                &off1,
                &tb.column(i).into_owned(),
                sigma2,
                &mut noise,
            )?,
        );
    }
    let r_tilde_hat = right_lstsq(&zb, &tb, RankPolicy::Strict, "stage B training")?;

    // Stage C: both ON; residual after cancellation is R~ diag(theta2) C theta1.
    let mut noise = stream(seed, 13);
    let (t1c, t2c): (Vec<CVec>, Vec<CVec>) = if n >= m2 {
        let t = dft_rows(pilots.c, m1)?;
        (
            (0..pilots.c).map(|i| t.column(i).into_owned()).collect(),
            vec![CVec::from_element(m2, ONE); pilots.c],
        )
    } else {
        (
            (0..pilots.c)
                .map(|_| random_phases(&mut design, m1))
                .collect(),
            (0..pilots.c)
                .map(|_| random_phases(&mut design, m2))
                .collect(),
        )
    };
    let mut resid = CMat::zeros(n, pilots.c);
    for i in 0..pilots.c {
        let z = observe(real, &user1, &t1c[i], &t2c[i], sigma2, &mut noise)?;
        resid.set_column(i, &(z - &r_hat * &t1c[i] - &r_tilde_hat * &t2c[i]));
    }
    let c_hat = if n >= m2 {
        let mut theta = CMat::zeros(m1, pilots.c);
        for (i, t) in t1c.iter().enumerate() {
            theta.set_column(i, t);
        }
        let left = lstsq(
            &r_tilde_hat,
            &resid,
            RankPolicy::Strict,
            "stage C reference R~",
        )?;
        right_lstsq(&left, &theta, RankPolicy::Strict, "stage C training")?
    } else {
        let mut stack = CMat::zeros(pilots.c * n, m1 * m2);
        for i in 0..pilots.c {
            let t1 = CMat::from_row_slice(1, m1, t1c[i].as_slice());
            let blk = kron(&t1, &scale_columns(&r_tilde_hat, &t2c[i]));
            stack.rows_mut(i * n, n).copy_from(&blk);
        }
        let v = lstsq_vec(
            &stack,
            &vec_of(&resid),
            RankPolicy::Strict,
            "stage C stacked design",
        )?;
        unvec(v.as_slice(), m2, m1)
    };
    let q_hat = (0..m1)
        .map(|m| scale_columns(&r_tilde_hat, &c_hat.column(m).into_owned()))
        .collect();
    let est1 = UserCsi {
        r: r_hat,
        r_tilde: r_tilde_hat,
        q: q_hat,
    };

    let mut stage_pilots = vec![
        ("stage_a".to_string(), pilots.a),
        ("stage_b".to_string(), pilots.b),
        ("stage_c".to_string(), pilots.c),
    ];
    let mut users = vec![est1.clone()];
    let mut lambda_out = None;

    if k >= 2 {
        check_stage("decoupled user stage b", pilots.users_b, min.users_b)?;
        check_stage(
            "decoupled user stage b~",
            pilots.users_b_tilde,
            min.users_b_tilde,
        )?;
        let refc = match reference {
            ReferenceCsi::Estimated => est1.clone(),
            ReferenceCsi::GroundTruth => truth.users[0].clone(),
        };
        let b = scaling_stage(
            real,
            &refc.r,
            true,
            pilots.users_b,
            sigma2,
            &mut design,
            stream(seed, 14),
        )?;
        let bt = scaling_stage(
            real,
            &refc.r_tilde,
            false,
            pilots.users_b_tilde,
            sigma2,
            &mut design,
            stream(seed, 15),
        )?;
        let mut lambda = CMat::zeros(m1 + m2, k - 1);
        lambda.rows_mut(0, m1).copy_from(&b);
        lambda.rows_mut(m1, m2).copy_from(&bt);
        users.extend(recover_multi_user(&refc, &lambda)?);
        lambda_out = Some(lambda);
        stage_pilots.push(("users_b".to_string(), pilots.users_b));
        stage_pilots.push(("users_b_tilde".to_string(), pilots.users_b_tilde));
    }

    Ok(EstimateReport {
        scheme: Scheme::Decoupled,
        users,
        lambda: lambda_out,
        g1: None,
        q_bar: None,
        e: None,
        f: None,
        pilots: stage_pilots,
        theoretical_mse: BTreeMap::new(),
        phase2_case: None,
        phase3_case: None,
        phase2_certificate: None,
    })
}

/// One multi-user scaling stage with a single IRS ON. `reference` is `R_1`
/// (IRS 1 ON) or `R~_1` (IRS 2 ON); returns the scalings of users 2..K as columns.
fn scaling_stage(
    real: &ChannelRealization,
    reference: &CMat,
    irs1_on: bool,
    i: usize,
    sigma2: f64,
    design: &mut SimRng,
    mut noise: SimRng,
) -> Result<CMat> {
    let (n, m1, m2, k) = (real.n(), real.m1(), real.m2(), real.k());
    let m = reference.ncols();
    let case = if n >= m {
        RankCase::Case1
    } else {
        RankCase::Case2
    };
    let x = dft_rows(i, k - 1)?;
    let thetas: Vec<CVec> = match case {
        RankCase::Case1 => vec![random_phases(design, m); i],
        RankCase::Case2 => (0..i).map(|_| random_phases(design, m)).collect(),
    };
    let mut z = CMat::zeros(n, i);
    for s in 0..i {
        let tx: Vec<(usize, C64)> = (1..k).map(|kk| (kk, x[(kk - 1, s)])).collect();
        let (t1, t2) = if irs1_on {
            (thetas[s].clone(), CVec::zeros(m2))
        } else {
            (CVec::zeros(m1), thetas[s].clone())
        };
        z.set_column(s, &observe(real, &tx, &t1, &t2, sigma2, &mut noise)?);
    }
    match case {
        RankCase::Case1 => ls_phase3_case1(&z, &scale_columns(reference, &thetas[0]), &x),
        RankCase::Case2 => {
            let bs: Vec<CMat> = thetas.iter().map(|t| scale_columns(reference, t)).collect();
            ls_phase3_case2(&vec_of(&z), &build_phase3_stack(&x, &bs)?, m)
        }
    }
}
