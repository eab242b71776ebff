mod common;

use nalgebra::DVector;
use proptest::prelude::*;
use rgne::graph::{CommGraph, Topology};
use rgne::instances::{reference_game, reference_params};
use rgne::solver::{InitialPoint, Mode, RhoRule, StepProfile};
use rgne_cli::config::SweepSpec;
use rgne_cli::{load_config, parse_config, ConfigError};
use serde_json::json;

#[test]
fn shipped_config_is_the_reference_instance() {
    let cfg = common::shipped();
    assert_eq!(cfg.solver, reference_params());
    assert_eq!(cfg.graph.topology, Topology::Ring);
    assert!(cfg.centralized.enabled);
    for t in [Topology::Ring, Topology::Complete, Topology::Star] {
        let g = CommGraph::new(t, 5).unwrap();
        let built = cfg.game.build(&g).unwrap();
        let want = reference_game(&g);
        assert_eq!(built.game_matrix(), want.game_matrix());
        assert_eq!(built.coupling(), want.coupling());
        assert_eq!(built.uncertainty(), want.uncertainty());
        for i in 0..5 {
            assert_eq!(built.agents()[i].local_set, want.agents()[i].local_set);
        }
    }
    // spot values: Ω_i = [−5, 15]², α_i = 10(i − 1)·1 for agents i = 1..5
    let g = CommGraph::new(Topology::Ring, 5).unwrap();
    let game = cfg.game.build(&g).unwrap();
    let f0 = game.pseudo_gradient(&DVector::zeros(10)).unwrap();
    assert_eq!(f0.as_slice(), &[0.0, 0.0, -10.0, -10.0, -20.0, -20.0, -30.0, -30.0, -40.0, -40.0]);
    let c = &game.coupling()[0];
    assert_eq!(c.resource, 75.0);
    assert_eq!(c.resource_perturbation.as_slice(), &[1.0]);
    assert!(c.nominal.iter().all(|a| a.as_slice() == [1.0, 1.0]));
}

#[test]
fn load_reads_files_and_reports_missing_ones() {
    assert_eq!(load_config(&common::shipped_path()).unwrap(), common::shipped());
    let err = load_config(std::path::Path::new("/nonexistent/config.json")).unwrap_err();
    assert!(matches!(err, ConfigError::Read { .. }));
}

#[test]
fn defaults_are_filled() {
    let text = common::with(common::SMALL, |v| {
        v.as_object_mut().unwrap().remove("solver");
    });
    let cfg = parse_config(&text).unwrap();
    assert_eq!(cfg.solver.sigma_bar, 0.5);
    assert_eq!(cfg.solver.tolerance, 1e-6);
    assert_eq!(cfg.solver.max_iterations, 50_000);
    assert!(!cfg.centralized.enabled);
    assert_eq!(cfg.sweep, None);
}

fn pointer_of(text: &str) -> String {
    parse_config(text).unwrap_err().pointer().unwrap().to_owned()
}

#[test]
fn missing_graph_points_at_graph() {
    let text = common::with(common::SMALL, |v| {
        v.as_object_mut().unwrap().remove("graph");
    });
    assert_eq!(pointer_of(&text), "/graph");
}

#[test]
fn sigma_bar_above_one_is_rejected_with_the_bound() {
    let text = common::with(common::SMALL, |v| v["solver"]["sigma_bar"] = json!(1.2));
    let err = parse_config(&text).unwrap_err();
    assert_eq!(err.pointer(), Some("/solver/sigma_bar"));
    let msg = err.to_string();
    assert!(msg.contains("σ̄ < 1") && msg.contains("1.2"), "{msg}");
}

#[test]
fn schema_errors_carry_json_pointers() {
    let wrong_type = common::with(common::SMALL, |v| v["game"]["agents"][1]["dim"] = json!("two"));
    assert_eq!(pointer_of(&wrong_type), "/game/agents/1/dim");
    let unknown = common::with(common::SMALL, |v| v["solver"]["sigma"] = json!(0.1));
    assert_eq!(pointer_of(&unknown), "/solver/sigma");
    let shape = common::with(common::SMALL, |v| v["game"]["agents"][0]["hessian"] = json!([[1, 0]]));
    assert_eq!(pointer_of(&shape), "/game/agents/0/hessian");
    let perturbation = common::with(common::SMALL, |v| {
        v["game"]["coupling"][0]["perturbation"][1] = json!([[1, 2]])
    });
    assert_eq!(pointer_of(&perturbation), "/game/coupling/0/perturbation/1");
    let disconnected = common::with(common::SMALL, |v| {
        v["graph"]["topology"] = json!({"edge_list": []})
    });
    assert_eq!(pointer_of(&disconnected), "/graph/topology");
    let bad_sweep = common::with(common::SMALL, |v| v["sweep"] = json!({"topologies": ["ring", "nope"]}));
    assert_eq!(pointer_of(&bad_sweep), "/sweep/topologies/1");
}

#[test]
fn shipped_config_round_trips() {
    let cfg = common::shipped();
    let again = parse_config(&serde_json::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(again, cfg);
}

proptest! {
    #[test]
    fn edited_configs_round_trip(
        sigma_bar in 0.0..0.99f64,
        fraction in 0.01..0.99f64,
        tolerance in 1e-12..1e-3f64,
        max_iterations in 1usize..100_000,
        evenly in any::<bool>(),
        loose in any::<bool>(),
        seed in proptest::option::of(any::<u64>()),
        random_init in proptest::option::of((any::<u64>(), 0.1..10.0f64)),
        sweep in proptest::option::of(proptest::sample::subsequence(vec!["ring", "complete", "star", "path"], 0..4)),
        tseng in any::<bool>(),
        resource in -100.0..100.0f64,
        centralized in any::<bool>(),
    ) {
        let mut cfg = common::shipped();
        cfg.solver.sigma_bar = sigma_bar;
        cfg.solver.fraction = fraction;
        cfg.solver.tolerance = tolerance;
        cfg.solver.max_iterations = max_iterations;
        cfg.solver.step_profile = if evenly { StepProfile::EvenlySpaced } else { StepProfile::Uniform };
        cfg.solver.rho_rule = if loose { RhoRule::Loose } else { RhoRule::Conservative };
        cfg.solver.mode = if tseng { Mode::Tseng } else { Mode::Ripfbf };
        if let Some((s, scale)) = random_init {
            cfg.solver.initial = InitialPoint::Random { seed: s, scale };
        }
        cfg.seed = seed;
        cfg.sweep = sweep.map(|names| SweepSpec {
            topologies: names.iter().map(|n| Topology::from_name(n).unwrap()).collect(),
            modes: vec![Mode::Ripfbf, Mode::Tseng],
        });
        cfg.game.coupling[0].resource = resource;
        cfg.centralized.enabled = centralized;
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: rgne_cli::ExperimentConfig = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
