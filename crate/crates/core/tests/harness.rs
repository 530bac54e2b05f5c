use dualirs::harness::{
    emit_csv, run_experiment, ExperimentKind, ExperimentSpec, ResultTable, SweepParameter,
};
use dualirs::SystemConfig;

fn unit_desk(k: usize) -> SystemConfig {
    SystemConfig {
        k,
        gamma0_db: 0.0,
        alpha_near: 0.0,
        alpha_far: 0.0,
        ..SystemConfig::desk()
    }
}

#[test]
fn phase1_theory_inside_three_stderr() {
    let mut spec = ExperimentSpec::new(ExperimentKind::MseDesignPhase1, unit_desk(1))
        .with_sweep(SweepParameter::Sigma2, &[1.0, 0.1, 0.01, 0.001, 1e-4]);
    spec.trials = 2000;
    let t = run_experiment(&spec).unwrap();
    let rows: Vec<_> = t
        .rows
        .iter()
        .filter(|r| r.metric == "optimal.phase1")
        .collect();
    assert_eq!(rows.len(), 5);
    let inside = rows
        .iter()
        .filter(|r| {
            let theory = r.theory.unwrap();
            assert!((theory - r.sweep / 9.0).abs() <= 1e-12 * theory);
            (r.mean - theory).abs() <= 3.0 * r.stderr
        })
        .count();
    assert!(inside as f64 >= 0.95 * rows.len() as f64, "{rows:?}");
}

#[test]
fn phase1_mse_falls_one_decade_per_ten_db() {
    let powers = [0.0, 10.0, 20.0, 30.0];
    let mut spec = ExperimentSpec::new(ExperimentKind::MseDesignPhase1, SystemConfig::desk())
        .with_sweep(SweepParameter::TxPowerDbm, &powers);
    spec.trials = 300;
    let t = run_experiment(&spec).unwrap();
    let s = t.series("optimal.phase1");
    for w in s.windows(2) {
        assert!(w[1].1 < w[0].1);
        let slope = (w[1].1.log10() - w[0].1.log10()) / ((w[1].0 - w[0].0) / 10.0);
        assert!((slope + 1.0).abs() <= 0.1, "slope {slope}");
    }
}

#[test]
fn same_spec_gives_identical_csv() {
    let mut spec = ExperimentSpec::new(ExperimentKind::MseMultiUser, unit_desk(3))
        .with_sweep(SweepParameter::Sigma2, &[0.1, 0.01]);
    spec.trials = 12;
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    emit_csv(&run_experiment(&spec).unwrap(), &a).unwrap();
    emit_csv(&run_experiment(&spec).unwrap(), &b).unwrap();
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    let parsed = ResultTable::from_csv(std::str::from_utf8(&bytes).unwrap()).unwrap();
    assert_eq!(parsed.rows, run_experiment(&spec).unwrap().rows);
}

#[test]
fn allocation_error_of_e_has_interior_minimum() {
    let sys = SystemConfig {
        n: 25,
        m1: 20,
        m2: 20,
        k: 1,
        tx_power_dbm: 15.0,
        elements_per_subsurface: 25,
        ..SystemConfig::default()
    };
    let mut spec = ExperimentSpec::new(ExperimentKind::MseVsAllocation, sys)
        .with_sweep(SweepParameter::I1, &[21.0, 100.0, 300.0, 600.0, 1021.0]);
    spec.total_pilots = Some(1062);
    spec.trials = 150;
    let t = run_experiment(&spec).unwrap();
    let e = t.series("e");
    let best = (0..e.len())
        .min_by(|&a, &b| e[a].1.total_cmp(&e[b].1))
        .unwrap();
    assert!(best > 0 && best + 1 < e.len(), "{e:?}");
}

#[test]
fn overhead_vs_k_grows_linearly_for_large_arrays() {
    let sys = SystemConfig {
        n: 45,
        m1: 20,
        m2: 20,
        ..SystemConfig::default()
    };
    let spec = ExperimentSpec::new(ExperimentKind::OverheadVsK, sys)
        .with_sweep(SweepParameter::K, &[1.0, 5.0, 10.0]);
    let t = run_experiment(&spec).unwrap();
    assert_eq!(
        t.series("proposed"),
        vec![(1.0, 62.0), (5.0, 66.0), (10.0, 71.0)]
    );
    assert_eq!(
        t.series("decoupled"),
        vec![(1.0, 60.0), (5.0, 68.0), (10.0, 78.0)]
    );
    assert_eq!(t.series("per_antenna")[2], (10.0, 4400.0));
}

#[test]
fn comparison_budgets_match() {
    // Every single-user comparison row is averaged over the same trial count for
    // both schemes; a budget mismatch would error before any row is produced.
    let mut spec = ExperimentSpec::new(ExperimentKind::MseSingleUser, unit_desk(1))
        .with_sweep(SweepParameter::Sigma2, &[0.01]);
    spec.trials = 20;
    let t = run_experiment(&spec).unwrap();
    for scheme in ["proposed", "decoupled"] {
        for m in ["r", "r_tilde", "q", "total"] {
            let row = t.get(0.01, &format!("{scheme}.{m}")).unwrap();
            assert_eq!(row.trials, 20);
        }
    }
    assert!(t.warnings.is_empty(), "{:?}", t.warnings);
}
