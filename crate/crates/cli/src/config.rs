//! JSON experiment description. Matrices are row-major nested arrays.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rgne::graph::CommGraph;
use rgne::solver::{CentralizedParams, InitialPoint, Mode, SolverParams};
use rgne::verify::VerifyConfig;
use rgne::{Agent, AgentCost, Polytope, QuadraticCost, Topology, UncertainConstraint, UncertainGame, UncertaintySets};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    /// `pointer` is a JSON pointer into the config document.
    #[error("{pointer}: {message}")]
    Invalid { pointer: String, message: String },
}

impl ConfigError {
    fn at(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            pointer: pointer.into(),
            message: message.into(),
        }
    }

    pub fn pointer(&self) -> Option<&str> {
        match self {
            ConfigError::Invalid { pointer, .. } => Some(pointer),
            ConfigError::Read { .. } => None,
        }
    }
}

pub type Matrix = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub game: GameSpec,
    pub graph: GraphSpec,
    #[serde(default)]
    pub solver: SolverParams,
    #[serde(default)]
    pub centralized: CentralizedSpec,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub output: OutputSpec,
    /// Replaces the solver's initial point by a seeded random one.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSpec {
    pub agents: Vec<AgentSpec>,
    pub coupling: Vec<CouplingSpec>,
    pub uncertainty: UncertaintySpec,
}

/// `J_i = ½ x_iᵀ H x_i + c_iᵀ x_i + Σ_j x_iᵀ C_ij x_j`. `neighbor_average`
/// adds `B / |N_i|` as `C_ij` for every graph neighbor `j`, so the same agent
/// description adapts to each topology of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub dim: usize,
    pub hessian: Matrix,
    pub linear: Vec<f64>,
    #[serde(default)]
    pub cross: Vec<CrossSpec>,
    #[serde(default)]
    pub neighbor_average: Option<Matrix>,
    pub local_set: PolytopeSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossSpec {
    pub agent: usize,
    pub block: Matrix,
}

/// `Σ_i (a_i0 + P_i δ_i)ᵀ x_i ≤ b0 + qᵀ δ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSpec {
    pub nominal: Vec<Vec<f64>>,
    pub perturbation: Vec<Matrix>,
    pub resource: f64,
    pub resource_perturbation: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintySpec {
    pub local: Vec<PolytopeSpec>,
    pub global: PolytopeSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PolytopeSpec {
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    /// `{x | A x ≤ b, A_eq x = b_eq}`
    Halfspaces {
        a: Matrix,
        b: Vec<f64>,
        #[serde(default)]
        aeq: Matrix,
        #[serde(default)]
        beq: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub topology: Topology,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CentralizedSpec {
    pub enabled: bool,
    #[serde(flatten)]
    pub params: CentralizedParams,
}

/// Empty lists fall back to the configured graph and solver mode.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub topologies: Vec<Topology>,
    pub modes: Vec<Mode>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_owned(),
        source,
    })?;
    parse_config(&text)
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let mut pointer = json_pointer(e.path());
        let message = e.inner().to_string();
        // a missing field is reported at its parent; point at the field itself
        if let Some(field) = message
            .strip_prefix("missing field `")
            .and_then(|rest| rest.split('`').next())
        {
            pointer = format!("{}/{field}", pointer.trim_end_matches('/'));
        }
        ConfigError::at(pointer, message)
    })?;
    cfg.validate()?;
    Ok(cfg)
}

fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{}", escape_pointer(key))),
            Segment::Enum { variant } => out.push_str(&format!("/{}", escape_pointer(variant))),
            Segment::Unknown => out.push_str("/?"),
        }
    }
    out
}

fn escape_pointer(s: &str) -> String {
    s.replace('~', "~0").replace('/', "~1")
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.solver.validate().map_err(|e| {
            let field = match e.to_string() {
                m if m.contains("σ̄") => "sigma_bar",
                m if m.contains("fraction") => "fraction",
                m if m.contains("tolerance") => "tolerance",
                m if m.contains("constant schedule") => "schedule",
                _ => "",
            };
            ConfigError::at(format!("/solver/{field}").trim_end_matches('/'), e.to_string())
        })?;
        if self.solver.max_iterations == 0 {
            return Err(ConfigError::at("/solver/max_iterations", "must be at least 1"));
        }
        let v = &self.verify;
        for (name, value) in [
            ("feasibility_tolerance", v.feasibility_tolerance),
            ("membership_tolerance", v.membership_tolerance),
            ("best_response_tolerance", v.best_response_tolerance),
            ("max_best_response_gap", v.max_best_response_gap),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ConfigError::at(format!("/verify/{name}"), format!("{value} must be positive")));
            }
        }
        let c = &self.centralized.params;
        if !(c.tolerance > 0.0) || !(c.fraction > 0.0 && c.fraction < 1.0) {
            return Err(ConfigError::at(
                "/centralized",
                "needs a positive tolerance and a step fraction in (0, 1)",
            ));
        }
        let n = self.game.agents.len();
        for (k, t) in self.topologies().iter().enumerate() {
            let pointer = if self.sweep.as_ref().is_some_and(|s| !s.topologies.is_empty()) {
                format!("/sweep/topologies/{k}")
            } else {
                "/graph/topology".to_owned()
            };
            let g = CommGraph::new(t.clone(), n).map_err(|e| ConfigError::at(&pointer, e.to_string()))?;
            self.game.build(&g)?;
        }
        Ok(())
    }

    /// Topologies of the run list.
    pub fn topologies(&self) -> Vec<Topology> {
        match &self.sweep {
            Some(s) if !s.topologies.is_empty() => s.topologies.clone(),
            _ => vec![self.graph.topology.clone()],
        }
    }

    pub fn modes(&self) -> Vec<Mode> {
        match &self.sweep {
            Some(s) if !s.modes.is_empty() => s.modes.clone(),
            _ => vec![self.solver.mode],
        }
    }

    /// Solver parameters after applying `seed`.
    pub fn solver_params(&self, mode: Mode) -> SolverParams {
        let mut p = SolverParams {
            mode,
            ..self.solver.clone()
        };
        if let Some(seed) = self.seed {
            let scale = match p.initial {
                InitialPoint::Random { scale, .. } => scale,
                InitialPoint::Zero => 1.0,
            };
            p.initial = InitialPoint::Random { seed, scale };
        }
        p
    }
}

fn matrix(m: &Matrix, rows: usize, cols: usize, pointer: &str) -> Result<DMatrix<f64>, ConfigError> {
    if m.len() != rows || m.iter().any(|r| r.len() != cols) {
        return Err(ConfigError::at(pointer, format!("expected a {rows}×{cols} matrix")));
    }
    Ok(DMatrix::from_fn(rows, cols, |r, c| m[r][c]))
}

fn vector(v: &[f64], len: usize, pointer: &str) -> Result<DVector<f64>, ConfigError> {
    if v.len() != len {
        return Err(ConfigError::at(pointer, format!("expected {len} entries, got {}", v.len())));
    }
    Ok(DVector::from_column_slice(v))
}

impl PolytopeSpec {
    pub fn dim(&self) -> usize {
        match self {
            PolytopeSpec::Box { lower, .. } => lower.len(),
            PolytopeSpec::Halfspaces { a, aeq, .. } => {
                a.first().or(aeq.first()).map_or(0, |r| r.len())
            }
        }
    }

    pub fn build(&self, pointer: &str) -> Result<Polytope, ConfigError> {
        let invalid = |e: rgne::Error| ConfigError::at(pointer, e.to_string());
        match self {
            PolytopeSpec::Box { lower, upper } => {
                if lower.len() != upper.len() {
                    return Err(ConfigError::at(format!("{pointer}/box/upper"), "length differs from lower"));
                }
                Polytope::from_bounds(lower, upper).map_err(invalid)
            }
            PolytopeSpec::Halfspaces { a, b, aeq, beq } => {
                let d = self.dim();
                let a = matrix(a, b.len(), d, &format!("{pointer}/halfspaces/a"))?;
                let aeq = matrix(aeq, beq.len(), d, &format!("{pointer}/halfspaces/aeq"))?;
                Polytope::with_equalities(a, DVector::from_column_slice(b), aeq, DVector::from_column_slice(beq))
                    .map_err(invalid)
            }
        }
    }
}

impl GameSpec {
    /// The game on `graph`; neighbor-averaged interaction terms follow its edges.
    pub fn build(&self, graph: &CommGraph) -> Result<UncertainGame, ConfigError> {
        let n = self.agents.len();
        if n != graph.num_nodes() {
            return Err(ConfigError::at("/game/agents", "agent count differs from the graph size"));
        }
        if self.uncertainty.local.len() != n {
            return Err(ConfigError::at("/game/uncertainty/local", format!("expected {n} local sets")));
        }
        let mut agents = Vec::with_capacity(n);
        for (i, a) in self.agents.iter().enumerate() {
            let p = format!("/game/agents/{i}");
            let d = a.dim;
            let mut cost = QuadraticCost::new(
                matrix(&a.hessian, d, d, &format!("{p}/hessian"))?,
                vector(&a.linear, d, &format!("{p}/linear"))?,
            );
            for (k, c) in a.cross.iter().enumerate() {
                let cp = format!("{p}/cross/{k}");
                let Some(other) = self.agents.get(c.agent).filter(|_| c.agent != i) else {
                    return Err(ConfigError::at(format!("{cp}/agent"), "not another agent of the game"));
                };
                let block = matrix(&c.block, d, other.dim, &format!("{cp}/block"))?;
                add_cross(&mut cost, c.agent, block);
            }
            if let Some(b) = &a.neighbor_average {
                let nb = graph.neighbors(i);
                for &j in nb {
                    let block = matrix(b, d, self.agents[j].dim, &format!("{p}/neighbor_average"))?;
                    add_cross(&mut cost, j, block / nb.len() as f64);
                }
            }
            let local_set = a.local_set.build(&format!("{p}/local_set"))?;
            if local_set.dim() != d {
                return Err(ConfigError::at(format!("{p}/local_set"), format!("dimension must be {d}")));
            }
            agents.push(Agent {
                dim: d,
                cost: AgentCost::Quadratic(cost),
                local_set,
            });
        }
        let local: Vec<Polytope> = self
            .uncertainty
            .local
            .iter()
            .enumerate()
            .map(|(i, s)| s.build(&format!("/game/uncertainty/local/{i}")))
            .collect::<Result<_, _>>()?;
        let global = self.uncertainty.global.build("/game/uncertainty/global")?;
        let mut coupling = Vec::with_capacity(self.coupling.len());
        for (k, c) in self.coupling.iter().enumerate() {
            let p = format!("/game/coupling/{k}");
            if c.nominal.len() != n || c.perturbation.len() != n {
                return Err(ConfigError::at(&p, format!("needs one nominal and one perturbation block per agent ({n})")));
            }
            let nominal = (0..n)
                .map(|i| vector(&c.nominal[i], agents[i].dim, &format!("{p}/nominal/{i}")))
                .collect::<Result<_, _>>()?;
            let perturbation = (0..n)
                .map(|i| matrix(&c.perturbation[i], agents[i].dim, local[i].dim(), &format!("{p}/perturbation/{i}")))
                .collect::<Result<_, _>>()?;
            coupling.push(UncertainConstraint {
                nominal,
                perturbation,
                resource: c.resource,
                resource_perturbation: vector(&c.resource_perturbation, global.dim(), &format!("{p}/resource_perturbation"))?,
            });
        }
        UncertainGame::new(agents, coupling, UncertaintySets { local, global })
            .map_err(|e| ConfigError::at("/game", e.to_string()))
    }
}

fn add_cross(cost: &mut QuadraticCost, j: usize, block: DMatrix<f64>) {
    cost.cross
        .entry(j)
        .and_modify(|b| *b += &block)
        .or_insert(block);
}
