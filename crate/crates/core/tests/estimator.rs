use std::collections::BTreeSet;

use mbmlmc::fem::QoiSpec;
use mbmlmc::geometry::{Point, Rect};
use mbmlmc::homogenize::{lame_from_e_nu, MaterialPair, ModelSpec};
use mbmlmc::media::{Domain, InclusionGenParams, InclusionLayout};
use mbmlmc::problem::{Problem, ProblemConfig};
use mbmlmc::stats::pairwise_sum;
use mbmlmc::verify::estimator_check;

fn desk() -> Problem {
    Problem::new(ProblemConfig {
        domain: Domain::heat_rectangle(0.2, 0.1),
        block_edge: 0.05,
        inclusions: InclusionGenParams::bernoulli(0.5, 0.05),
        material: MaterialPair::Scalar { kappa_m: 100.0, kappa_i: 10000.0 },
        neumann: vec![(2, [1600.0, 0.0])],
        qoi: QoiSpec::BlockAverageGradientComponent { region: Rect::new(0.05, 0.025, 0.15, 0.075), axis: 1 },
        h_coarse: 0.05,
        h_fine: 0.00625,
        fraction_quadrature: 16,
        global_shortcut: true,
    })
    .unwrap()
}

fn plate() -> Problem {
    let matrix = lame_from_e_nu(100.0, 0.2).unwrap();
    let inclusion = lame_from_e_nu(1000.0, 0.2).unwrap();
    Problem::new(ProblemConfig {
        domain: Domain::l_shape(),
        block_edge: 0.2,
        inclusions: InclusionGenParams::with_layout(InclusionLayout::SubgridPermutation { n: 4, n_min: 0, n_max: 16 }, 0.05),
        material: MaterialPair::Elastic { matrix, inclusion, d: 2 },
        neumann: vec![(3, [500.0, 500.0])],
        qoi: QoiSpec::MollifiedStrainTrace { center: Point::new(0.4586, 0.5412), radius: 0.05 },
        h_coarse: 0.05,
        h_fine: 0.0125,
        fraction_quadrature: 8,
        global_shortcut: true,
    })
    .unwrap()
}

fn additive(eta: f64, blocks: &[f64]) -> bool {
    let sum = pairwise_sum(blocks);
    (sum - eta).abs() <= 1e-12 * eta.abs().max(f64::MIN_POSITIVE)
}

#[test]
fn modeling_error_identity_scalar() {
    let p = desk();
    for seed in 0..6 {
        for model in [ModelSpec::BlockwiseHomogenized, ModelSpec::refined(BTreeSet::from([2, 3]))] {
            let c = estimator_check(&p, &model, seed, None).unwrap();
            // Q(u) - Q(u0) = -int (A - A0) grad u0 . grad w
            let rel = (c.q_error + c.residual).abs() / c.q_error.abs();
            assert!(rel <= 1e-6, "seed {seed} {model}: {} vs {}", c.q_error, -c.residual);
            assert!(additive(c.report.eta_est, &c.report.eta_blocks));
        }
    }
}

#[test]
fn modeling_error_identity_elastic() {
    let p = plate();
    for seed in 0..2 {
        let c = estimator_check(&p, &ModelSpec::BlockwiseHomogenized, seed, None).unwrap();
        let rel = (c.q_error + c.residual).abs() / c.q_error.abs();
        assert!(rel <= 1e-6, "seed {seed}: {} vs {}", c.q_error, -c.residual);
    }
}

#[test]
fn bounds_enclose_the_error() {
    let p = desk();
    for seed in 0..10 {
        for s in [1.0, 0.5, 3.0] {
            let c = estimator_check(&p, &ModelSpec::BlockwiseHomogenized, seed, Some(s)).unwrap();
            let b = c.report.bounds.unwrap();
            assert!(b.eta_low - 1e-10 <= c.q_error && c.q_error <= b.eta_upp + 1e-10, "seed {seed} s {s}: {} not in [{}, {}]", c.q_error, b.eta_low, b.eta_upp);
        }
    }
}

#[test]
fn bounds_enclose_the_error_elastic() {
    let p = plate();
    for seed in 0..2 {
        let c = estimator_check(&p, &ModelSpec::BlockwiseHomogenized, seed, Some(1.0)).unwrap();
        let b = c.report.bounds.unwrap();
        assert!(b.eta_low - 1e-10 <= c.q_error && c.q_error <= b.eta_upp + 1e-10, "{} not in [{}, {}]", c.q_error, b.eta_low, b.eta_upp);
    }
}

#[test]
fn indicators_vanish_in_resolved_blocks() {
    let p = desk();
    let refined = BTreeSet::from([1, 6]);
    for seed in 0..4 {
        let c = estimator_check(&p, &ModelSpec::refined(refined.clone()), seed, None).unwrap();
        for b in &refined {
            assert_eq!(c.report.eta_blocks[b - 1], 0.0);
        }
        assert!(additive(c.report.eta_est, &c.report.eta_blocks));
    }
}

#[test]
fn fully_resolved_model_has_no_error() {
    let p = desk();
    let all: BTreeSet<usize> = (1..=8).collect();
    let c = estimator_check(&p, &ModelSpec::refined(all), 4, Some(1.0)).unwrap();
    assert_eq!(c.residual, 0.0);
    assert_eq!(c.report.eta_est, 0.0);
    assert!(c.report.eta_blocks.iter().all(|&x| x == 0.0));
    assert!(c.q_error.abs() <= 1e-9 * 1600.0);
}

#[test]
fn eta_matches_brute_force_elementwise_sum() {
    use mbmlmc::estimator::eta_est;
    use mbmlmc::fem::qoi::qoi_load;
    use mbmlmc::fem::Discretization;
    use mbmlmc::homogenize::hs_scalar;
    use mbmlmc::media::{volume_fractions, Inclusion, Microstructure, Region};
    use std::sync::Arc;

    let mut cfg = desk().config;
    cfg.domain = Domain::heat_rectangle(0.2, 0.05);
    cfg.qoi = QoiSpec::BlockAverageGradientComponent { region: Rect::new(0.05, 0.0, 0.15, 0.05), axis: 1 };
    let p = Problem::new(cfg).unwrap();
    assert_eq!(p.partition.len(), 4);
    let inc = Inclusion { center: Point::new(0.077, 0.021), radius: 0.0131, block: 2 };
    let micro = Microstructure::new(vec![inc], Arc::clone(&p.partition), 0);
    let mesh = p.mesh(&ModelSpec::FineScale).unwrap();
    let surr = p.coefficient(&ModelSpec::BlockwiseHomogenized, &micro, &mesh).unwrap();
    let fine = p.coefficient(&ModelSpec::FineScale, &micro, &mesh).unwrap();
    let disc = Discretization::new(Arc::clone(&mesh), p.physics());
    let k = disc.assemble(&surr).unwrap();
    let u0 = disc.solve(&k, &p.spec.load(&mesh)).unwrap();
    let w0 = disc.solve(&k, &qoi_load(&mesh, p.physics(), &p.config.qoi).unwrap()).unwrap();

    let (km, ki) = (100.0, 10000.0);
    let (phi_m, phi_i) = volume_fractions(&micro, Region::Block(2), p.config.fraction_quadrature).unwrap();
    let k0 = hs_scalar(km, ki, phi_m, phi_i).unwrap();
    let mut brute = 0.0;
    for e in 0..mesh.num_elements() {
        if mesh.element_block[e] != 2 {
            continue;
        }
        let kappa = if inc.contains(mesh.centroid(e)) { ki } else { km };
        let g = &mesh.geom[e];
        let t = mesh.triangles[e];
        let grad = |f: &[f64]| {
            (0..3).fold([0.0, 0.0], |a, i| [a[0] + f[t[i] as usize] * g.grads[i][0], a[1] + f[t[i] as usize] * g.grads[i][1]])
        };
        let (gu, gw) = (grad(&u0.values), grad(&w0.values));
        brute += -k0 * (1.0 - k0 / kappa) * (gu[0] * gw[0] + gu[1] * gw[1]) * g.area;
    }
    let eta = eta_est(&u0, &w0, &fine, &surr, 4).unwrap();
    assert!(brute != 0.0);
    assert!((eta - brute).abs() <= 1e-10 * brute.abs(), "{eta} vs {brute}");
}

#[test]
fn bound_width_regression() {
    let p = desk();
    let c = estimator_check(&p, &ModelSpec::BlockwiseHomogenized, 2024, Some(1.0)).unwrap();
    let b = c.report.bounds.unwrap();
    let width = b.eta_upp - b.eta_low;
    // pinned from the first verified run
    assert!((width - 1.147_963_859_084_965e2).abs() <= 1e-8 * width, "{width}");
}

#[test]
fn surrogate_and_fine_qoi_are_correlated() {
    use mbmlmc::problem::ModelEvaluator;
    use mbmlmc::stats::correlation;
    let p = desk();
    let (mut hi, mut lo) = (Vec::new(), Vec::new());
    for seed in 0..200 {
        hi.push(p.evaluate(&ModelSpec::FineScale, seed).unwrap().q);
        lo.push(p.evaluate(&ModelSpec::BlockwiseHomogenized, seed).unwrap().q);
    }
    let r = correlation(&hi, &lo);
    assert!(r > 0.5, "correlation {r}");
}
