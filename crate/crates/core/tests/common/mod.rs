#![allow(dead_code)]

use std::sync::OnceLock;

use rgne::graph::{CommGraph, Topology};
use rgne::instances::{reference_game, reference_params};
use rgne::robustify::{build_extended_game, to_canonical, CanonicalGame, ExtendedGame};
use rgne::solver::{run_distributed, DistributedRun};
use rgne::UncertainGame;

pub struct Reference {
    pub game: UncertainGame,
    pub extended: ExtendedGame,
    pub canonical: CanonicalGame,
}

pub fn reference(topology: Topology) -> Reference {
    let g = CommGraph::new(topology, 5).unwrap();
    let game = reference_game(&g);
    let extended = build_extended_game(&game).unwrap();
    let canonical = to_canonical(&extended, &g).unwrap();
    Reference {
        game,
        extended,
        canonical,
    }
}

/// The reference ring instance solved once per test binary.
pub fn ring_run() -> &'static (Reference, DistributedRun) {
    static RUN: OnceLock<(Reference, DistributedRun)> = OnceLock::new();
    RUN.get_or_init(|| {
        let r = reference(Topology::Ring);
        let run = run_distributed(&r.canonical, &reference_params()).unwrap();
        (r, run)
    })
}
