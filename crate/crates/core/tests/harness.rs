use std::fs;
use std::io::BufReader;
use std::path::Path;

use nep::game::{solve_ne, Game};
use nep::harness::{
    convergence_svg, generate_connectivity_game, run_experiment, Algorithm, AlgorithmSpec,
    ExperimentConfig, StepSetting,
};
use nep::io::GameFile;
use nep::network::{metropolis_weights, Coupling, Graph};
use nep::solvers::{pppa_run, ExtendedState, RunTrace, SolverConfig};
use nep::tuning::TuningReport;
use nep::NepError;

fn config(out: &Path) -> ExperimentConfig {
    ExperimentConfig {
        game: "connectivity:5:3:box".into(),
        graph: "er:5:0.6:3".into(),
        mode: None,
        algorithms: vec![
            AlgorithmSpec::new(Algorithm::Pppa, StepSetting::Theory),
            AlgorithmSpec::new(Algorithm::Agp, StepSetting::TheoryScaled(100.0)),
            AlgorithmSpec::new(Algorithm::Pppa, StepSetting::TheoryScaled(100.0)),
        ],
        iters: 300,
        tol: 0.0,
        out_dir: out.to_path_buf(),
        parallel: false,
        init_seed: Some(4),
    }
}

#[test]
fn zero_linear_terms_give_zero_equilibrium() {
    let game = generate_connectivity_game(6, 9, false).unwrap();
    let mut file = GameFile::from_game(&game);
    for b in &mut file.linear {
        b.iter_mut().for_each(|v| *v = 0.0);
    }
    let game = file.into_game().unwrap();
    let x = solve_ne(&game, 1e-12).unwrap();
    assert!(x.amax() <= 1e-14);

    let coupling =
        Coupling::doubly_stochastic(&metropolis_weights(&Graph::cycle(6).unwrap()).unwrap());
    let report = TuningReport::new(&game, &coupling, None).unwrap();
    let mut cfg = SolverConfig::new(report.alpha);
    cfg.max_iters = 50_000;
    cfg.stop_tol = 1e-9;
    let out = pppa_run(
        &game,
        &coupling,
        &cfg,
        &ExtendedState::random(&game, 1.0, 2),
        Some(x.as_slice()),
    )
    .unwrap();
    assert!(out.converged);
    assert!(out.state.data().amax() <= 1e-9);
}

#[test]
fn bundles_are_reproducible_byte_for_byte() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let first = run_experiment(&config(a.path())).unwrap();
    run_experiment(&config(b.path())).unwrap();
    let mut par = config(c.path());
    par.parallel = true;
    run_experiment(&par).unwrap();
    assert_eq!(first.runs.len(), 3);
    for name in [
        "tuning.json",
        "trace_pppa_theory.csv",
        "trace_agp_theory_x100.csv",
        "trace_pppa_theory_x100.csv",
        "convergence.svg",
    ] {
        let x = fs::read(a.path().join(name)).unwrap();
        assert_eq!(x, fs::read(b.path().join(name)).unwrap(), "{name}");
        assert_eq!(x, fs::read(c.path().join(name)).unwrap(), "{name}");
    }
    assert!(!a.path().join("failure.json").exists());
}

#[test]
fn plot_is_derived_from_written_traces() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = run_experiment(&config(dir.path())).unwrap();
    let series: Vec<(String, RunTrace)> = bundle
        .runs
        .iter()
        .map(|r| {
            let f = fs::File::open(&r.trace).unwrap();
            (
                r.label.clone(),
                RunTrace::read_csv(BufReader::new(f)).unwrap(),
            )
        })
        .collect();
    assert_eq!(
        fs::read_to_string(&bundle.plot).unwrap(),
        convergence_svg(&series)
    );
    assert_eq!(series[0].1.len(), 301);
    let tuning: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&bundle.tuning).unwrap()).unwrap();
    assert_eq!(tuning["n_agents"], 5);
}

#[test]
fn pppa_beats_agp_in_a_short_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = run_experiment(&config(dir.path())).unwrap();
    let pppa = bundle
        .runs
        .iter()
        .find(|r| r.label == "pppa_theory_x100")
        .unwrap();
    let agp = bundle
        .runs
        .iter()
        .find(|r| r.label == "agp_theory_x100")
        .unwrap();
    assert!(pppa.final_dist_to_ne < agp.final_dist_to_ne);
}

#[test]
fn config_validation() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.json");
    fs::write(
        &path,
        r#"{"game": "connectivity:4:1", "graph": "path:4", "algorithms": [], "out_dir": "out"}"#,
    )
    .unwrap();
    let cfg = ExperimentConfig::from_file(&path).unwrap();
    assert_eq!(cfg.out_dir, dir.path().join("out"));
    assert!(matches!(run_experiment(&cfg), Err(NepError::Config(_))));
    assert!(!dir.path().join("out").exists());

    let mut cfg = config(dir.path());
    cfg.game = dir.path().join("missing.json").display().to_string();
    assert!(matches!(cfg.validate(), Err(NepError::Config(_))));

    let mut cfg = config(dir.path());
    cfg.algorithms
        .push(AlgorithmSpec::new(Algorithm::Pppa, StepSetting::Theory));
    assert!(matches!(cfg.validate(), Err(NepError::Config(_))));

    fs::write(&path, r#"{"game": "g", "graph": "h", "algorithms": [{"algo": "pppa", "step": "fast"}], "out_dir": "o"}"#)
        .unwrap();
    assert!(ExperimentConfig::from_file(&path).is_err());
}

#[test]
fn shipped_experiment_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../experiments");
    for name in ["step_comparison.json", "box_comparison.json"] {
        let cfg = ExperimentConfig::from_file(&root.join(name)).unwrap();
        cfg.validate().unwrap();
        let game = nep::io::load_game(&cfg.game).unwrap();
        assert_eq!(game.num_agents(), 10);
    }
}
