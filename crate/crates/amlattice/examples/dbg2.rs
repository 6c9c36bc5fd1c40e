use amlattice::grid::SpatialGrid;
use amlattice::program::{Burst, ModulationProgram};
use amlattice::tdse::{prepare_state, propagate, Resolution, StateSpec};
use amlattice::units::{LatticeConfig, PhysicalParams};
use amlattice::wstark::wannier_stark_ladder;

fn main() {
    let c = LatticeConfig::new(PhysicalParams::sr88(10.0).unwrap()).unwrap();
    let ladder = wannier_stark_ladder(&c, 1, 32, 16).unwrap();
    let grid = SpatialGrid::new(64, 16).unwrap();
    let psi0 = prepare_state(&ladder, &grid, StateSpec::SiteLocalized { site: 0 }).unwrap();
    let tb = c.scales.bloch_period;
    let program = ModulationProgram::new()
        .burst(Burst::resonant(1.5 * tb, 1, 0.25, 0.7))
        .hold(0.4 * tb)
        .burst(Burst::resonant(0.8 * tb, 2, 0.4, 0.1));
    let total = program.total_duration();
    for steps in [3000usize, 6000, 12000] {
        let res = Resolution {
            points_per_site: 16,
            steps_per_bloch_period: Some(steps),
            guard_amplitude: 1.0,
        };
        let out = propagate(&c, &program, &psi0, &[total], &res, false).unwrap();
        println!(
            "steps={steps}: max_edge={:.3e} 1-fid={:.2e}",
            out.max_edge_amplitude,
            1.0 - out.observables[0].fidelity
        );
    }
    // and with 32 points per site
    let ladder32 = wannier_stark_ladder(&c, 1, 32, 32).unwrap();
    let grid32 = SpatialGrid::new(64, 32).unwrap();
    let psi032 = prepare_state(&ladder32, &grid32, StateSpec::SiteLocalized { site: 0 }).unwrap();
    for steps in [3000usize, 6000] {
        let res = Resolution {
            points_per_site: 32,
            steps_per_bloch_period: Some(steps),
            guard_amplitude: 1.0,
        };
        let out = propagate(&c, &program, &psi032, &[total], &res, false).unwrap();
        println!(
            "pps32 steps={steps}: max_edge={:.3e} 1-fid={:.2e}",
            out.max_edge_amplitude,
            1.0 - out.observables[0].fidelity
        );
    }
}
