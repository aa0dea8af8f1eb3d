//! Built-in experiment setups.

use mbmlmc::fem::QoiSpec;
use mbmlmc::geometry::{Point, Rect};
use mbmlmc::homogenize::{lame_from_e_nu, MaterialPair};
use mbmlmc::media::{Domain, InclusionGenParams, InclusionLayout, DEFAULT_FRACTION_QUADRATURE};
use mbmlmc::problem::ProblemConfig;

use crate::config::{ExperimentConfig, ReferenceSettings};

pub const NAMES: [&str; 3] = ["heat-rect", "heat-desk", "elasticity-lshape"];

pub fn preset(name: &str) -> Option<ExperimentConfig> {
    match name {
        "heat-rect" => Some(heat_rect()),
        "heat-desk" => Some(heat_desk()),
        "elasticity-lshape" => Some(elasticity_lshape()),
        _ => None,
    }
}

fn heat_problem(width: f64, height: f64, region: Rect) -> ProblemConfig {
    ProblemConfig {
        domain: Domain::heat_rectangle(width, height),
        block_edge: 0.05,
        inclusions: InclusionGenParams::bernoulli(0.5, 0.05),
        material: MaterialPair::Scalar { kappa_m: 100.0, kappa_i: 10000.0 },
        neumann: vec![(2, [1600.0, 0.0])],
        qoi: QoiSpec::BlockAverageGradientComponent { region, axis: 1 },
        h_coarse: 0.05,
        h_fine: 0.00625,
        fraction_quadrature: DEFAULT_FRACTION_QUADRATURE,
        global_shortcut: true,
    }
}

/// Heat conduction in a 1 x 0.2 strip of 80 blocks; QoI is the mean vertical
/// gradient over a 2 x 2 block window near the left end.
pub fn heat_rect() -> ExperimentConfig {
    ExperimentConfig {
        problem: heat_problem(1.0, 0.2, Rect::new(0.1, 0.05, 0.2, 0.15)),
        tolerances: vec![0.1, 0.05],
        levels: vec![2, 3],
        pilot_samples: 50,
        gamma: 0.5,
        s: 1.0,
        repetitions: 20,
        baseline_repetitions: Some(2),
        master_seed: 1,
        reference: ReferenceSettings::default(),
        out: None,
    }
}

/// The same physics on a 4 x 2 block strip: small enough for smoke runs.
pub fn heat_desk() -> ExperimentConfig {
    ExperimentConfig {
        problem: heat_problem(0.2, 0.1, Rect::new(0.05, 0.025, 0.15, 0.075)),
        tolerances: vec![0.2, 0.1],
        levels: vec![2, 3],
        pilot_samples: 20,
        gamma: 0.5,
        s: 1.0,
        repetitions: 4,
        baseline_repetitions: Some(2),
        master_seed: 1,
        reference: ReferenceSettings::default(),
        out: None,
    }
}

/// Plane-strain L-shaped plate with stiff inclusions on a 4 x 4 subgrid per block;
/// QoI is the mollified strain trace near the filleted corner.
pub fn elasticity_lshape() -> ExperimentConfig {
    let matrix = lame_from_e_nu(100.0, 0.2).expect("valid moduli");
    let inclusion = lame_from_e_nu(1000.0, 0.2).expect("valid moduli");
    ExperimentConfig {
        problem: ProblemConfig {
            domain: Domain::l_shape(),
            block_edge: 0.2,
            inclusions: InclusionGenParams::with_layout(
                InclusionLayout::SubgridPermutation { n: 4, n_min: 0, n_max: 16 },
                0.05,
            ),
            material: MaterialPair::Elastic { matrix, inclusion, d: 2 },
            neumann: vec![(3, [500.0, 500.0])],
            qoi: QoiSpec::MollifiedStrainTrace { center: Point::new(0.4586, 0.5412), radius: 0.05 },
            h_coarse: 0.05,
            h_fine: 0.0125,
            fraction_quadrature: 16,
            global_shortcut: true,
        },
        tolerances: vec![0.2, 0.1],
        levels: vec![2, 3],
        pilot_samples: 30,
        gamma: 0.5,
        s: 1.0,
        repetitions: 10,
        baseline_repetitions: Some(2),
        master_seed: 1,
        reference: ReferenceSettings::default(),
        out: None,
    }
}
