//! Orchestration: build → robustify → lower → solve → verify, once per
//! (topology, mode) pair.

use nalgebra::DVector;
use rgne::graph::CommGraph;
use rgne::model::{validate_game, Assumption};
use rgne::operators::Layout;
use rgne::robustify::{build_extended_game, to_canonical, CanonicalGame};
use rgne::solver::{run_centralized, run_distributed, ConsensusGaps, DistributedRun, Mode};
use rgne::verify::{kkt_residual, verify_equilibrium, KktReport, VerificationSummary};
use rgne::{Topology, UncertainGame};
use serde::Serialize;

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    /// The effective config, including command-line overrides.
    pub config: ExperimentConfig,
    pub runs: Vec<RunRecord>,
    pub centralized: Vec<CentralizedRecord>,
    /// Failures of whole stages, e.g. a topology whose game cannot be built.
    pub errors: Vec<StageError>,
    /// Standing assumptions that did not hold; the solver still ran.
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageError {
    pub topology: String,
    pub mode: Option<Mode>,
    pub stage: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Duals {
    /// `λ_i` per agent.
    pub lambda: Vec<Vec<f64>>,
    /// `μ_i` per agent.
    pub mu: Vec<Vec<f64>>,
    /// Local copies `z_i` of the shared dual block.
    pub z: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub topology: String,
    pub mode: Mode,
    pub converged: bool,
    pub iterations: usize,
    pub initial_residual: f64,
    pub final_residual: f64,
    pub ell_a: f64,
    pub ell_phi: f64,
    pub x: Vec<f64>,
    pub duals: Duals,
    pub consensus: ConsensusGaps,
    pub kkt: Option<KktReport>,
    pub verification: Option<VerificationSummary>,
    pub verification_error: Option<String>,
    /// `‖x − x_centralized‖_∞` when the centralized solve ran.
    pub centralized_deviation: Option<f64>,
    #[serde(skip)]
    pub residuals: Vec<f64>,
    #[serde(skip)]
    pub lyapunov: Vec<f64>,
    #[serde(skip)]
    pub wall_ms: Vec<f64>,
    #[serde(skip)]
    pub x_trace: Vec<Vec<f64>>,
}

impl RunRecord {
    pub fn verified(&self) -> bool {
        self.verification.as_ref().is_some_and(|v| v.passed)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CentralizedRecord {
    pub topology: String,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl RunReport {
    /// 0 verified, 2 converged but verification failed, 3 not converged or a
    /// stage failed.
    pub fn exit_code(&self) -> i32 {
        if !self.errors.is_empty() || self.runs.iter().any(|r| !r.converged) {
            3
        } else if self.runs.iter().any(|r| !r.verified()) {
            2
        } else {
            0
        }
    }

    pub fn centralized_for(&self, topology: &str) -> Option<&CentralizedRecord> {
        self.centralized.iter().find(|c| c.topology == topology)
    }
}

struct TopologyOutcome {
    runs: Vec<RunRecord>,
    centralized: Option<CentralizedRecord>,
    errors: Vec<StageError>,
    warnings: Vec<String>,
}

/// Runs every (topology, mode) pair of the config. Topologies run on their
/// own threads; results keep the config's order.
pub fn run_experiment(config: &ExperimentConfig) -> RunReport {
    let topologies = config.topologies();
    let outcomes: Vec<TopologyOutcome> = std::thread::scope(|s| {
        let handles: Vec<_> = topologies
            .iter()
            .map(|t| s.spawn(move || run_topology(config, t)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("topology worker panicked"))
            .collect()
    });
    let mut report = RunReport {
        config: config.clone(),
        runs: Vec::new(),
        centralized: Vec::new(),
        errors: Vec::new(),
        warnings: Vec::new(),
    };
    for o in outcomes {
        report.runs.extend(o.runs);
        report.centralized.extend(o.centralized);
        report.errors.extend(o.errors);
        report.warnings.extend(o.warnings);
    }
    report
}

fn run_topology(config: &ExperimentConfig, topology: &Topology) -> TopologyOutcome {
    let name = topology.name().to_owned();
    let mut out = TopologyOutcome {
        runs: Vec::new(),
        centralized: None,
        errors: Vec::new(),
        warnings: Vec::new(),
    };
    let fail = |stage, mode, message: String| StageError {
        topology: name.clone(),
        mode,
        stage,
        message,
    };
    let graph = match CommGraph::new(topology.clone(), config.game.agents.len()) {
        Ok(g) => g,
        Err(e) => {
            out.errors.push(fail("graph", None, e.to_string()));
            return out;
        }
    };
    let game = match config.game.build(&graph) {
        Ok(g) => g,
        Err(e) => {
            out.errors.push(fail("game", None, e.to_string()));
            return out;
        }
    };
    match validate_game(&game) {
        Ok(report) => {
            for c in report.checks.iter().filter(|c| !c.passed) {
                let line = format!("{name}: {:?} does not hold: {}", c.assumption, c.detail);
                if c.assumption == Assumption::Monotonicity {
                    out.warnings.push(line);
                } else {
                    out.errors.push(fail("validate", None, line));
                }
            }
            if !out.errors.is_empty() {
                return out;
            }
        }
        Err(e) => {
            out.errors.push(fail("validate", None, e.to_string()));
            return out;
        }
    }
    let cg = match build_extended_game(&game).and_then(|eg| to_canonical(&eg, &graph)) {
        Ok(cg) => cg,
        Err(e) => {
            out.errors.push(fail("robustify", None, e.to_string()));
            return out;
        }
    };
    if config.centralized.enabled {
        match run_centralized(cg.extended(), &config.centralized.params) {
            Ok(sol) => {
                out.centralized = Some(CentralizedRecord {
                    topology: name.clone(),
                    converged: sol.converged,
                    iterations: sol.iterations,
                    residual: sol.residual,
                    x: sol.x.as_slice().to_vec(),
                    lambda: sol.lambda.as_slice().to_vec(),
                });
                if !sol.converged {
                    out.errors.push(fail(
                        "centralized",
                        None,
                        format!("no convergence after {} iterations (residual {:.3e})", sol.iterations, sol.residual),
                    ));
                }
            }
            Err(e) => out.errors.push(fail("centralized", None, e.to_string())),
        }
    }
    for mode in config.modes() {
        match run_distributed(&cg, &config.solver_params(mode)) {
            Ok(run) => {
                let mut record = record_run(config, &game, &cg, &name, &run);
                if let Some(c) = &out.centralized {
                    let xc = DVector::from_column_slice(&c.x);
                    record.centralized_deviation = Some((&run.x - xc).amax());
                }
                out.runs.push(record);
            }
            Err(e) => out.errors.push(fail("solve", Some(mode), e.to_string())),
        }
    }
    out
}

fn record_run(
    config: &ExperimentConfig,
    game: &UncertainGame,
    cg: &CanonicalGame,
    topology: &str,
    run: &DistributedRun,
) -> RunRecord {
    let layout = Layout::of(cg);
    let pt = &run.final_point;
    let n = cg.num_agents();
    let duals = Duals {
        lambda: (0..n).map(|i| pt.lambda.rows_range(layout.in_range(i)).as_slice().to_vec()).collect(),
        mu: (0..n).map(|i| pt.mu.rows_range(layout.eq_range(i)).as_slice().to_vec()).collect(),
        z: (0..n)
            .map(|i| {
                let zb = cg.z_block(i);
                let off = cg.w_offset(i);
                pt.w.rows_range(off + zb.start..off + zb.end).as_slice().to_vec()
            })
            .collect(),
    };
    let (verification, verification_error) = match verify_equilibrium(game, &run.x, &config.verify) {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e.to_string())),
    };
    RunRecord {
        topology: topology.to_owned(),
        mode: run.mode,
        converged: run.converged,
        iterations: run.iterations,
        initial_residual: run.initial_residual,
        final_residual: run.final_residual(),
        ell_a: run.ell_a,
        ell_phi: run.ell_phi,
        x: run.x.as_slice().to_vec(),
        duals,
        consensus: run.consensus,
        kkt: kkt_residual(cg, pt).ok(),
        verification,
        verification_error,
        centralized_deviation: None,
        residuals: run.residuals.clone(),
        lyapunov: run.lyapunov.clone(),
        wall_ms: run.wall_ms.clone(),
        x_trace: run.x_trace.iter().map(|x| x.as_slice().to_vec()).collect(),
    }
}
