//! Config-driven Monte Carlo experiments.
//!
//! Every trial draws its channel from `(seed, trial)` alone, so all sweep
//! points of an experiment share the same fading realizations. Receiver noise
//! and randomized designs are seeded from `(seed, sweep index, trial)`.
//! Results are collected in trial order and reduced with pairwise summation,
//! which makes the output independent of the worker thread count.

pub mod spec;
pub mod table;

use rayon::prelude::*;

use crate::benchmarks::{decoupled_estimate, per_antenna_overhead, DecoupledPilots};
use crate::channel_model::{cascade, gen_channels, ChannelRealization, UserCsi};
use crate::error::{Error, Result};
use crate::estimators::{
    ls_phase1, mse_per_entry, normalized_mse, normalized_mse_list, theoretical_mse, MseDesign,
};
use crate::linalg::{numerical_rank, right_lstsq, CMat, RankPolicy, ONE, RANK_TOL};
use crate::pipeline::{observe, simulate_proposed, Phase1Design, Phase2Design, PipelineOptions};
use crate::random::{mix_seed, rng_from_seed};
use crate::training_design::{
    phase1_design, phase1_min_pilots, phase1_random, phase2_design_case1, phase2_design_heuristic,
    phase2_design_random, phase2_min_pilots, phase3_min_pilots, Phase2Schedule, Scheme,
};

pub use spec::{ExperimentKind, ExperimentSpec, SweepParameter, SweepPoint};
pub use table::{emit_csv, mean_stderr, pairwise_sum, ResultRow, ResultTable, CSV_HEADER};

/// Environment variable that fixes the number of worker threads.
pub const THREADS_ENV: &str = "DUALIRS_THREADS";

const NOISE_TAG: u64 = 0x6e_6f69_7365;

/// `(metric, value, closed-form value)` from one trial.
type Sample = (String, f64, Option<f64>);

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.trim().parse().map_err(|_| {
            Error::InvalidConfig(format!(
                "{THREADS_ENV} must be a positive integer, got {v:?}"
            ))
        })?;
        builder = builder.num_threads(n.max(1));
    }
    builder
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker threads: {e}")))
}

/// Errors that exclude a single trial instead of aborting the run.
fn is_trial_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::DesignFailure { .. }
            | Error::DegenerateChannel { .. }
            | Error::RankDeficient { .. }
            | Error::UndefinedMse(_)
    )
}

fn at_point(value: f64) -> impl Fn(Error) -> Error {
    move |e| Error::AtSweepPoint {
        value,
        source: Box::new(e),
    }
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ResultTable> {
    spec.validate()?;
    let pool = thread_pool()?;
    let mut table = ResultTable::default();
    for (index, value) in spec.points().into_iter().enumerate() {
        let point = spec.point(value)?;
        if spec.experiment.is_overhead() {
            overhead_rows(&point, &mut table).map_err(at_point(value))?;
            continue;
        }
        check_point(spec, &point).map_err(at_point(value))?;
        let results: Vec<Result<Vec<Sample>>> = pool.install(|| {
            (0..spec.trials)
                .into_par_iter()
                .map(|t| run_trial(spec, &point, index as u64, t as u64))
                .collect()
        });
        let mut ok = Vec::with_capacity(results.len());
        for (t, r) in results.into_iter().enumerate() {
            match r {
                Ok(s) => ok.push(s),
                Err(e) if is_trial_failure(&e) => table
                    .warnings
                    .push(format!("sweep {value:e}, trial {t}: excluded ({e})")),
                Err(e) => return Err(at_point(value)(e)),
            }
        }
        aggregate(value, &ok, &mut table);
    }
    Ok(table)
}

fn aggregate(value: f64, trials: &[Vec<Sample>], table: &mut ResultTable) {
    let Some(first) = trials.first() else {
        table
            .warnings
            .push(format!("sweep {value:e}: every trial failed"));
        return;
    };
    for (j, (name, _, _)) in first.iter().enumerate() {
        let values: Vec<f64> = trials.iter().map(|s| s[j].1).collect();
        let theories: Option<Vec<f64>> = trials.iter().map(|s| s[j].2).collect();
        let (mean, stderr) = mean_stderr(&values);
        table.rows.push(ResultRow {
            sweep: value,
            metric: name.clone(),
            mean,
            stderr,
            trials: values.len(),
            theory: theories.map(|t| pairwise_sum(&t) / t.len() as f64),
        });
    }
}

fn overhead_rows(point: &SweepPoint, table: &mut ResultTable) -> Result<()> {
    let c = &point.system;
    let mut push = |metric: &str, v: usize| {
        table.rows.push(ResultRow {
            sweep: point.value,
            metric: metric.to_string(),
            mean: v as f64,
            stderr: 0.0,
            trials: 1,
            theory: None,
        })
    };
    push(
        "proposed",
        crate::training_design::overhead(Scheme::Proposed, c.n, c.m1, c.m2, c.k)?,
    );
    push(
        "decoupled",
        crate::training_design::overhead(Scheme::Decoupled, c.n, c.m1, c.m2, c.k)?,
    );
    match per_antenna_overhead(c.m1, c.m2, c.k) {
        Ok(v) => push("per_antenna", v),
        Err(e) => table.warnings.push(format!(
            "sweep {:e}: per_antenna skipped ({e})",
            point.value
        )),
    }
    Ok(())
}

/// Pilot split for the matched-overhead comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchedAllocation {
    pub i1: usize,
    pub i2: usize,
    pub i3: usize,
    pub decoupled: DecoupledPilots,
}

/// Gives both schemes the same single-user budget (default: the proposed
/// minimum) and the same multi-user budget (default: the larger minimum).
/// Without an explicit `i1`, Phases I and II are scaled in proportion to their
/// minima; the decoupled stages are scaled the same way and the two
/// multi-user stages split their budget evenly.
pub fn matched_allocation(point: &SweepPoint) -> Result<MatchedAllocation> {
    let c = &point.system;
    let (n, m1, m2, k) = (c.n, c.m1, c.m2, c.k);
    let p1 = phase1_min_pilots(m2);
    let p2 = phase2_min_pilots(n, m1, m2);
    let total = point.total_pilots.unwrap_or(p1 + p2);
    let i1 = match point.i1 {
        Some(i1) => i1,
        None => ((total as f64 * p1 as f64 / (p1 + p2) as f64).round() as usize).max(p1),
    };
    if i1 >= total || total - i1 < p2 || i1 < p1 {
        return Err(Error::InsufficientPilots {
            phase: "matched single-user budget",
            required: p1 + p2,
            got: total,
        });
    }
    let mut decoupled = DecoupledPilots::scaled_single_user(n, m1, m2, total)?;
    let dmin = DecoupledPilots::minimum(n, m1, m2, k);
    let multi_min = dmin.users_b + dmin.users_b_tilde;
    let i3 = if k < 2 {
        0
    } else {
        point
            .i3
            .unwrap_or_else(|| phase3_min_pilots(n, m1, m2, k).max(multi_min))
    };
    decoupled.users_b = i3 / 2;
    decoupled.users_b_tilde = i3 - i3 / 2;
    Ok(MatchedAllocation {
        i1,
        i2: total - i1,
        i3,
        decoupled,
    })
}

fn check_point(spec: &ExperimentSpec, point: &SweepPoint) -> Result<()> {
    let c = &point.system;
    match spec.experiment {
        ExperimentKind::MseDesignPhase2 if c.n < c.m2 => Err(Error::CaseMismatch(format!(
            "the Phase II design comparison needs N >= M2 (N = {}, M2 = {})",
            c.n, c.m2
        ))),
        ExperimentKind::MseVsAllocation => {
            let total = point.total_pilots.unwrap_or(0);
            match point.i1 {
                Some(i1) if i1 < total => Ok(()),
                _ => Err(Error::InvalidConfig(
                    "mse_vs_allocation needs i1 < total_pilots".into(),
                )),
            }
        }
        ExperimentKind::MseSingleUser if c.k != 1 => {
            Err(Error::InvalidConfig("mse_single_user needs k = 1".into()))
        }
        ExperimentKind::MseMultiUser if c.k < 2 => {
            Err(Error::InvalidConfig("mse_multi_user needs k >= 2".into()))
        }
        ExperimentKind::MseSingleUser | ExperimentKind::MseMultiUser => {
            matched_allocation(point).map(|_| ())
        }
        _ => Ok(()),
    }
}

fn run_trial(
    spec: &ExperimentSpec,
    point: &SweepPoint,
    sweep_index: u64,
    trial: u64,
) -> Result<Vec<Sample>> {
    let config = &point.system;
    let real = gen_channels(config, trial)?;
    let sigma2 = point.sigma2();
    let seed = mix_seed(&[config.seed, sweep_index, trial, NOISE_TAG]);
    match spec.experiment {
        ExperimentKind::MseDesignPhase1 => phase1_trial(&real, point, sigma2, seed),
        ExperimentKind::MseDesignPhase2 => phase2_trial(&real, point, sigma2, seed),
        ExperimentKind::MseVsAllocation => allocation_trial(spec, &real, point, sigma2, seed),
        ExperimentKind::MseSingleUser | ExperimentKind::MseMultiUser => {
            comparison_trial(spec, &real, point, sigma2, seed)
        }
        ExperimentKind::OverheadVsN | ExperimentKind::OverheadVsK => {
            unreachable!("handled without trials")
        }
    }
}

fn sample(name: impl Into<String>, value: f64, theory: Option<f64>) -> Sample {
    (name.into(), value, theory)
}

fn phase1_trial(
    real: &ChannelRealization,
    point: &SweepPoint,
    sigma2: f64,
    seed: u64,
) -> Result<Vec<Sample>> {
    let cc = cascade(real)?;
    let (n, m1, m2) = (real.n(), real.m1(), real.m2());
    let i1 = point.i1.unwrap_or_else(|| phase1_min_pilots(m2));
    let mut truth = CMat::zeros(n, m2 + 1);
    truth.set_column(0, &cc.g1);
    truth.columns_mut(1, m2).copy_from(&cc.q_bar);
    let mut out = Vec::new();
    for (d, design) in [(0u64, Phase1Design::Optimal), (1, Phase1Design::Random)] {
        let mut rng = rng_from_seed(mix_seed(&[seed, d]));
        let sched = match design {
            Phase1Design::Optimal => phase1_design(m1, m2, i1)?,
            Phase1Design::Random => phase1_random(m1, m2, i1, &mut rng)?,
        };
        let mut z = CMat::zeros(n, i1);
        for i in 0..i1 {
            z.set_column(
                i,
                &observe(
                    real,
                    &[(0, ONE)],
                    &sched.theta1,
                    &sched.theta2(i),
                    sigma2,
                    &mut rng,
                )?,
            );
        }
        let (g1, q_bar) = ls_phase1(&z, &sched.theta_bar2)?;
        let mut est = CMat::zeros(n, m2 + 1);
        est.set_column(0, &g1);
        est.columns_mut(1, m2).copy_from(&q_bar);
        let name = design_name1(design);
        let theory = theoretical_mse(
            MseDesign::Phase1 {
                theta_bar2: &sched.theta_bar2,
            },
            sigma2,
        )?;
        out.push(sample(
            format!("{name}.q_bar"),
            normalized_mse(&q_bar, &cc.q_bar)?,
            None,
        ));
        out.push(sample(
            format!("{name}.phase1"),
            mse_per_entry(&est, &truth),
            Some(theory),
        ));
    }
    Ok(out)
}

fn design_name1(d: Phase1Design) -> &'static str {
    match d {
        Phase1Design::Optimal => "optimal",
        Phase1Design::Random => "random",
    }
}

fn design_name2(d: Phase2Design) -> &'static str {
    match d {
        Phase2Design::Optimal => "optimal",
        Phase2Design::Heuristic => "heuristic",
        Phase2Design::Random => "random",
    }
}

fn phase2_trial(
    real: &ChannelRealization,
    point: &SweepPoint,
    sigma2: f64,
    seed: u64,
) -> Result<Vec<Sample>> {
    let cc = cascade(real)?;
    let (n, m1, m2) = (real.n(), real.m1(), real.m2());
    let i2 = point.i2.unwrap_or(2 * m1 + 1);
    let truth = cc.composite();
    let mut out = Vec::new();
    for (d, design) in [
        (0u64, Phase2Design::Optimal),
        (1, Phase2Design::Heuristic),
        (2, Phase2Design::Random),
    ] {
        let mut rng = rng_from_seed(mix_seed(&[seed, d]));
        let sched = match design {
            Phase2Design::Optimal => phase2_design_case1(m1, i2)?,
            Phase2Design::Heuristic => phase2_design_heuristic(m1, i2)?,
            Phase2Design::Random => phase2_design_random(m1, i2, &mut rng)?,
        };
        let Phase2Schedule::Case1 { omega, .. } = &sched else {
            unreachable!()
        };
        let mut z = CMat::zeros(n, i2);
        for i in 0..i2 {
            let (t1, t2) = sched.reflections(i, m2);
            z.set_column(i, &observe(real, &[(0, ONE)], &t1, &t2, sigma2, &mut rng)?);
        }
        let full = numerical_rank(omega, RANK_TOL) == omega.nrows();
        let policy = if full {
            RankPolicy::Strict
        } else {
            RankPolicy::MinimumNorm
        };
        let f = right_lstsq(&z, omega, policy, "Omega")?;
        let theory = if full {
            Some(theoretical_mse(MseDesign::Phase2Case1 { omega }, sigma2)?)
        } else {
            None
        };
        let name = design_name2(design);
        out.push(sample(
            format!("{name}.f"),
            normalized_mse(&f, &truth)?,
            None,
        ));
        out.push(sample(
            format!("{name}.phase2"),
            mse_per_entry(&f, &truth),
            theory,
        ));
    }
    Ok(out)
}

fn options(spec: &ExperimentSpec) -> PipelineOptions {
    PipelineOptions {
        phase2_design: spec.phase2_design,
        case2_mode: spec.case2_mode,
        phase2_case: spec.phase2_case,
        reference: spec.reference_csi,
        ..PipelineOptions::default()
    }
}

fn allocation_trial(
    spec: &ExperimentSpec,
    real: &ChannelRealization,
    point: &SweepPoint,
    sigma2: f64,
    seed: u64,
) -> Result<Vec<Sample>> {
    let cc = cascade(real)?;
    let total = point.total_pilots.expect("validated");
    let i1 = point.i1.expect("validated");
    let opts = PipelineOptions {
        i1: Some(i1),
        i2: Some(total - i1),
        ..options(spec)
    };
    let rep = simulate_proposed(real, &cc, &opts, sigma2, seed)?;
    let est = &rep.users[0];
    let tr = &cc.users[0];
    Ok(vec![
        sample(
            "q_bar",
            normalized_mse(rep.q_bar.as_ref().expect("phase I ran"), &cc.q_bar)?,
            None,
        ),
        sample(
            "e",
            normalized_mse(rep.e.as_ref().expect("phase II ran"), &cc.e)?,
            None,
        ),
        sample("r", normalized_mse(&est.r, &tr.r)?, None),
        sample("r_tilde", normalized_mse(&est.r_tilde, &tr.r_tilde)?, None),
        sample("q", normalized_mse_list(&est.q, &tr.q)?, None),
    ])
}

/// Normalized MSE of `R`, `R~` and `{Q_m}`, each pooled over the given users,
/// plus their average as `total`.
pub fn csi_metrics(prefix: &str, est: &[UserCsi], truth: &[UserCsi]) -> Result<Vec<(String, f64)>> {
    let pick = |f: fn(&UserCsi) -> &CMat, v: &[UserCsi]| {
        v.iter().map(|u| f(u).clone()).collect::<Vec<_>>()
    };
    let r = normalized_mse_list(&pick(|u| &u.r, est), &pick(|u| &u.r, truth))?;
    let rt = normalized_mse_list(&pick(|u| &u.r_tilde, est), &pick(|u| &u.r_tilde, truth))?;
    let qe: Vec<CMat> = est.iter().flat_map(|u| u.q.iter().cloned()).collect();
    let qt: Vec<CMat> = truth.iter().flat_map(|u| u.q.iter().cloned()).collect();
    let q = normalized_mse_list(&qe, &qt)?;
    Ok(vec![
        (format!("{prefix}.r"), r),
        (format!("{prefix}.r_tilde"), rt),
        (format!("{prefix}.q"), q),
        (format!("{prefix}.total"), (r + rt + q) / 3.0),
    ])
}

fn comparison_trial(
    spec: &ExperimentSpec,
    real: &ChannelRealization,
    point: &SweepPoint,
    sigma2: f64,
    seed: u64,
) -> Result<Vec<Sample>> {
    let cc = cascade(real)?;
    let alloc = matched_allocation(point)?;
    let opts = PipelineOptions {
        i1: Some(alloc.i1),
        i2: Some(alloc.i2),
        i3: if real.k() > 1 { Some(alloc.i3) } else { None },
        ..options(spec)
    };
    let prop = simulate_proposed(real, &cc, &opts, sigma2, mix_seed(&[seed, 0]))?;
    let dec = decoupled_estimate(
        real,
        &cc,
        &alloc.decoupled,
        spec.reference_csi,
        sigma2,
        mix_seed(&[seed, 1]),
    )?;
    debug_assert_eq!(prop.total_pilots(), dec.total_pilots());
    let mut out: Vec<Sample> = Vec::new();
    for (name, rep) in [("proposed", &prop), ("decoupled", &dec)] {
        for (m, v) in csi_metrics(name, &rep.users, &cc.users)? {
            out.push(sample(m, v, None));
        }
        if real.k() > 1 {
            let lambda = rep.lambda.as_ref().expect("multi-user stages ran");
            out.push(sample(
                format!("{name}.lambda"),
                normalized_mse(lambda, &cc.lambda())?,
                None,
            ));
            for (m, v) in csi_metrics(&format!("{name}.others"), &rep.users[1..], &cc.users[1..])? {
                out.push(sample(m, v, None));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel_model::SystemConfig;

    fn desk_unit() -> SystemConfig {
        SystemConfig {
            gamma0_db: 0.0,
            alpha_near: 0.0,
            alpha_far: 0.0,
            k: 1,
            ..SystemConfig::desk()
        }
    }

    #[test]
    fn overhead_vs_n_is_flat_for_large_n() {
        let sys = SystemConfig {
            m1: 20,
            m2: 20,
            k: 1,
            ..SystemConfig::default()
        };
        let spec = ExperimentSpec::new(ExperimentKind::OverheadVsN, sys)
            .with_sweep(SweepParameter::N, &[40.0, 60.0]);
        let t = run_experiment(&spec).unwrap();
        assert_eq!(t.series("proposed"), vec![(40.0, 62.0), (60.0, 62.0)]);
    }

    #[test]
    fn noiseless_phase1_rows_are_zero() {
        let mut spec = ExperimentSpec::new(ExperimentKind::MseDesignPhase1, desk_unit());
        spec.trials = 5;
        spec.sigma2_override = Some(0.0);
        let t = run_experiment(&spec).unwrap();
        assert!(!t.rows.is_empty());
        for r in &t.rows {
            assert!(r.mean < 1e-24, "{r:?}");
        }
    }

    #[test]
    fn output_does_not_depend_on_thread_count() {
        let mut spec = ExperimentSpec::new(ExperimentKind::MseSingleUser, desk_unit())
            .with_sweep(SweepParameter::Sigma2, &[0.1, 0.01]);
        spec.trials = 16;
        let a = run_experiment(&spec).unwrap().to_csv();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool.install(|| run_experiment(&spec).unwrap().to_csv());
        assert_eq!(a, b);
    }

    #[test]
    fn point_errors_carry_context() {
        let mut spec = ExperimentSpec::new(
            ExperimentKind::MseDesignPhase2,
            SystemConfig {
                n: 4,
                ..desk_unit()
            },
        )
        .with_sweep(SweepParameter::TxPowerDbm, &[10.0]);
        spec.trials = 2;
        match run_experiment(&spec) {
            Err(Error::AtSweepPoint { value, source }) => {
                assert_eq!(value, 10.0);
                assert!(matches!(*source, Error::CaseMismatch(_)));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn matched_allocation_defaults() {
        let spec = ExperimentSpec::new(ExperimentKind::MseMultiUser, SystemConfig::desk());
        let p = spec.point(0.0).unwrap();
        let a = matched_allocation(&p).unwrap();
        assert_eq!(a.i1 + a.i2, a.decoupled.single_user_total());
        assert_eq!(a.i3, a.decoupled.users_b + a.decoupled.users_b_tilde);
        assert_eq!(a.i3, 4);
    }
}
