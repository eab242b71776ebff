use nalgebra::DVector;

use super::{AgentCost, UncertainGame};
use crate::error::{Error, Result};
use crate::geometry::{self, Projector};
use crate::linalg;
use crate::lp::{LinearProgram, LpOutcome, Sense};

const PSD_TOL: f64 = 1e-10;
const SAMPLED_PAIRS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assumption {
    /// Each cost is convex in the agent's own variable.
    Convexity,
    /// Uncertainty polytopes are bounded and contain the origin in their interior.
    BoundedUncertainty,
    /// The robust feasible set is nonempty and strictly feasible.
    Slater,
    /// The pseudo-gradient is monotone.
    Monotonicity,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Witness {
    None,
    /// Smallest eigenvalue of the relevant symmetric matrix.
    Eigenvalue(f64),
    /// Recession direction of an uncertainty set.
    Direction {
        set: String,
        direction: Vec<f64>,
    },
    /// Best achievable uniform slack of the robust feasible set and the
    /// strategy attaining it.
    Slack {
        slack: f64,
        point: Vec<f64>,
    },
    /// Most negative sampled `⟨F(x) − F(y), x − y⟩`.
    SampledInner(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionCheck {
    pub assumption: Assumption,
    pub passed: bool,
    pub detail: String,
    pub witness: Witness,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<AssumptionCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, assumption: Assumption) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.assumption == assumption)
    }

    /// First failed check as an error.
    pub fn into_result(self) -> Result<()> {
        for c in self.checks {
            if c.passed {
                continue;
            }
            return Err(match c.witness {
                Witness::Direction { set, direction } => Error::Unbounded { set, direction },
                Witness::Slack { slack, .. } => Error::Infeasible {
                    what: c.detail,
                    slack,
                },
                _ => Error::InvalidParameter(c.detail),
            });
        }
        Ok(())
    }
}

/// Checks the standing assumptions of the game. Pure: identical games give
/// identical reports.
pub fn validate_game(game: &UncertainGame) -> Result<ValidationReport> {
    let mut checks = Vec::with_capacity(game.num_agents() + 3);
    checks.push(convexity(game)?);
    checks.push(boundedness(game)?);
    checks.push(slater(game)?);
    checks.push(monotonicity(game)?);
    Ok(ValidationReport { checks })
}

fn convexity(game: &UncertainGame) -> Result<AssumptionCheck> {
    let mut worst = f64::INFINITY;
    let mut worst_agent = 0;
    let mut sampled = false;
    for (i, agent) in game.agents().iter().enumerate() {
        let ev = match &agent.cost {
            AgentCost::Quadratic(q) => linalg::min_sym_eigenvalue(&q.hessian),
            AgentCost::Oracle(_) => {
                sampled = true;
                sampled_own_monotonicity(game, i)?
            }
        };
        if ev < worst {
            worst = ev;
            worst_agent = i;
        }
    }
    let passed = worst >= -PSD_TOL;
    Ok(AssumptionCheck {
        assumption: Assumption::Convexity,
        passed,
        detail: if passed {
            format!(
                "all cost Hessians PSD (min eigenvalue {worst:.3e}){}",
                if sampled {
                    ", oracle costs sampled"
                } else {
                    ""
                }
            )
        } else {
            format!("agent {worst_agent}: cost is not convex (min eigenvalue {worst:.3e})")
        },
        witness: Witness::Eigenvalue(worst),
    })
}

fn boundedness(game: &UncertainGame) -> Result<AssumptionCheck> {
    let u = game.uncertainty();
    let named = u
        .local
        .iter()
        .enumerate()
        .map(|(i, p)| (format!("local[{i}]"), p))
        .chain(std::iter::once(("global".to_string(), &u.global)));
    for (name, p) in named {
        if let Some(direction) = geometry::recession_direction(p)? {
            return Ok(AssumptionCheck {
                assumption: Assumption::BoundedUncertainty,
                passed: false,
                detail: format!("uncertainty set {name} is unbounded"),
                witness: Witness::Direction {
                    set: name,
                    direction: direction.iter().copied().collect(),
                },
            });
        }
        if p.num_equalities() > 0 || p.b().iter().any(|&d| d <= 0.0) {
            return Ok(AssumptionCheck {
                assumption: Assumption::BoundedUncertainty,
                passed: false,
                detail: format!(
                    "uncertainty set {name} does not contain the origin in its interior"
                ),
                witness: Witness::None,
            });
        }
    }
    Ok(AssumptionCheck {
        assumption: Assumption::BoundedUncertainty,
        passed: true,
        detail: "all uncertainty sets bounded with the origin interior".into(),
        witness: Witness::None,
    })
}

/// Maximize a uniform slack `t ≤ 1` on every inequality of `Ω` and every
/// dualized robust row. `t* ≥ 0` certifies nonemptiness, `t* > 0` Slater.
fn slater(game: &UncertainGame) -> Result<AssumptionCheck> {
    let mut lp = LinearProgram::new();
    let x0 = lp.add_vars(game.dim(), f64::NEG_INFINITY, f64::INFINITY);
    let t = lp.add_var(-1.0, f64::NEG_INFINITY, 1.0);

    for (i, agent) in game.agents().iter().enumerate() {
        let off = x0 + game.offset(i);
        let set = &agent.local_set;
        for r in 0..set.num_inequalities() {
            let mut terms: Vec<_> = (0..agent.dim).map(|k| (off + k, set.a()[(r, k)])).collect();
            terms.push((t, 1.0));
            lp.add_row(terms, Sense::Le, set.b()[r]);
        }
        geometry::add_rows(&mut lp, off, set.aeq(), set.beq(), Sense::Eq);
    }

    let u = game.uncertainty();
    for c in game.coupling() {
        let mut coupled: Vec<(usize, f64)> = vec![(t, 1.0)];
        for (i, agent) in game.agents().iter().enumerate() {
            let off = x0 + game.offset(i);
            let d_i = &u.local[i];
            let y = lp.add_vars(d_i.num_inequalities(), 0.0, f64::INFINITY);
            // P_iᵀ x_i − D_iᵀ y_i = 0
            for row in 0..d_i.dim() {
                let mut terms: Vec<_> = (0..agent.dim)
                    .map(|k| (off + k, c.perturbation[i][(k, row)]))
                    .collect();
                terms.extend((0..d_i.num_inequalities()).map(|m| (y + m, -d_i.a()[(m, row)])));
                lp.add_row(terms, Sense::Eq, 0.0);
            }
            coupled.extend((0..agent.dim).map(|k| (off + k, c.nominal[i][k])));
            coupled.extend((0..d_i.num_inequalities()).map(|m| (y + m, d_i.b()[m])));
        }
        let g = &u.global;
        let z = lp.add_vars(g.num_inequalities(), 0.0, f64::INFINITY);
        // Dᵀ z = −q
        for row in 0..g.dim() {
            let terms = (0..g.num_inequalities())
                .map(|m| (z + m, g.a()[(m, row)]))
                .collect();
            lp.add_row(terms, Sense::Eq, -c.resource_perturbation[row]);
        }
        coupled.extend((0..g.num_inequalities()).map(|m| (z + m, g.b()[m])));
        lp.add_row(coupled, Sense::Le, c.resource);
    }

    Ok(match lp.solve()? {
        LpOutcome::Optimal { x, .. } => {
            let slack = x[t];
            let point: Vec<f64> = x[x0..x0 + game.dim()].to_vec();
            let (passed, detail) = if slack > 1e-9 {
                (
                    true,
                    format!("robust feasible set has strictly feasible points (slack {slack:.3e})"),
                )
            } else if slack >= -1e-9 {
                (
                    false,
                    "robust feasible set is nonempty but has no strictly feasible point"
                        .to_string(),
                )
            } else {
                (false, "robust feasible set is empty".to_string())
            };
            AssumptionCheck {
                assumption: Assumption::Slater,
                passed,
                detail,
                witness: Witness::Slack { slack, point },
            }
        }
        LpOutcome::Infeasible => AssumptionCheck {
            assumption: Assumption::Slater,
            passed: false,
            detail: "robust feasible set is empty (local sets or dual systems infeasible)".into(),
            witness: Witness::Slack {
                slack: f64::NEG_INFINITY,
                point: Vec::new(),
            },
        },
        LpOutcome::Unbounded => unreachable!("slack is bounded above"),
    })
}

fn monotonicity(game: &UncertainGame) -> Result<AssumptionCheck> {
    if let Some((m, _)) = game.game_matrix() {
        let ev = linalg::min_sym_eigenvalue(&m);
        let passed = ev >= -PSD_TOL;
        return Ok(AssumptionCheck {
            assumption: Assumption::Monotonicity,
            passed,
            detail: format!("symmetric part of the game matrix has min eigenvalue {ev:.3e}"),
            witness: Witness::Eigenvalue(ev),
        });
    }
    let mut worst = f64::INFINITY;
    let mut sampler = Sampler::new(game)?;
    for _ in 0..SAMPLED_PAIRS {
        let x = sampler.point()?;
        let y = sampler.point()?;
        let ip = (game.pseudo_gradient(&x)? - game.pseudo_gradient(&y)?).dot(&(&x - &y));
        worst = worst.min(ip);
    }
    let passed = worst >= -PSD_TOL;
    Ok(AssumptionCheck {
        assumption: Assumption::Monotonicity,
        passed,
        detail: format!("sampled ⟨F(x) − F(y), x − y⟩ ≥ {worst:.3e} over {SAMPLED_PAIRS} pairs"),
        witness: Witness::SampledInner(worst),
    })
}

fn sampled_own_monotonicity(game: &UncertainGame, i: usize) -> Result<f64> {
    let mut sampler = Sampler::new(game)?;
    let mut worst = f64::INFINITY;
    let off = game.offset(i);
    let n_i = game.agents()[i].dim;
    for _ in 0..SAMPLED_PAIRS {
        let x = sampler.point()?;
        let mut y = x.clone();
        let other = sampler.point()?;
        y.rows_mut(off, n_i).copy_from(&other.rows(off, n_i));
        let gx = game.partial_gradient(i, &x)?;
        let gy = game.partial_gradient(i, &y)?;
        let d = x.rows(off, n_i) - y.rows(off, n_i);
        let dd = d.norm_squared();
        if dd > 0.0 {
            worst = worst.min((gx - gy).dot(&d) / dd);
        }
    }
    Ok(worst)
}

/// Deterministic points of `Ω`: splitmix64 draws in a wide box, projected.
struct Sampler {
    state: u64,
    projectors: Vec<Projector>,
}

impl Sampler {
    fn new(game: &UncertainGame) -> Result<Self> {
        let projectors = game
            .agents()
            .iter()
            .map(|a| Projector::new(&a.local_set))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            state: 0x9E37_79B9_7F4A_7C15,
            projectors,
        })
    }

    fn uniform(&mut self) -> f64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        (z >> 11) as f64 / (1u64 << 53) as f64
    }

    fn point(&mut self) -> Result<DVector<f64>> {
        let mut blocks = Vec::new();
        for k in 0..self.projectors.len() {
            let dim = self.projectors[k].dim();
            let raw = DVector::from_iterator(dim, (0..dim).map(|_| 200.0 * self.uniform() - 100.0));
            blocks.extend(self.projectors[k].project(&raw)?.iter().copied());
        }
        Ok(DVector::from_vec(blocks))
    }
}
