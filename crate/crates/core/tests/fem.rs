use std::collections::BTreeSet;
use std::sync::Arc;

use mbmlmc::fem::qoi::{dot, qoi_load};
use mbmlmc::fem::space::apply_full_stiffness;
use mbmlmc::fem::{build_mesh, Discretization, Physics, ProblemSpec, QoiSpec};
use mbmlmc::geometry::Rect;
use mbmlmc::homogenize::{lame_from_e_nu, MaterialPair, ModelSpec};
use mbmlmc::media::{partition_blocks, Domain, InclusionGenParams, InclusionLayout};
use mbmlmc::problem::{Problem, ProblemConfig};
use mbmlmc::verify::manufactured_study;

const HS: [f64; 4] = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0];

#[test]
fn manufactured_scalar_orders() {
    let s = manufactured_study(Physics::ScalarDiffusion, &HS).unwrap();
    for r in s.l2_orders() {
        assert!((r - 2.0).abs() <= 0.2, "L2 order {r}");
    }
    for r in s.h1_orders() {
        assert!((r - 1.0).abs() <= 0.2, "H1 order {r}");
    }
}

#[test]
fn manufactured_elastic_orders() {
    let s = manufactured_study(Physics::PlaneStrain, &HS).unwrap();
    for r in s.l2_orders() {
        assert!((r - 2.0).abs() <= 0.2, "L2 order {r}");
    }
    for r in s.h1_orders() {
        assert!((r - 1.0).abs() <= 0.2, "H1 order {r}");
    }
}

fn heat(h_coarse: f64, h_fine: f64) -> Problem {
    Problem::new(ProblemConfig {
        domain: Domain::heat_rectangle(0.2, 0.1),
        block_edge: 0.05,
        inclusions: InclusionGenParams::bernoulli(0.5, 0.05),
        material: MaterialPair::Scalar { kappa_m: 100.0, kappa_i: 10000.0 },
        neumann: vec![(2, [1600.0, 0.0])],
        qoi: QoiSpec::BlockAverageGradientComponent { region: Rect::new(0.05, 0.025, 0.15, 0.075), axis: 1 },
        h_coarse,
        h_fine,
        fraction_quadrature: 16,
        global_shortcut: true,
    })
    .unwrap()
}

fn lshape() -> Problem {
    let matrix = lame_from_e_nu(100.0, 0.2).unwrap();
    let inclusion = lame_from_e_nu(1000.0, 0.2).unwrap();
    Problem::new(ProblemConfig {
        domain: Domain::l_shape(),
        block_edge: 0.2,
        inclusions: InclusionGenParams::with_layout(InclusionLayout::SubgridPermutation { n: 4, n_min: 0, n_max: 16 }, 0.05),
        material: MaterialPair::Elastic { matrix, inclusion, d: 2 },
        neumann: vec![(3, [500.0, 500.0])],
        qoi: QoiSpec::MollifiedStrainTrace { center: mbmlmc::geometry::Point::new(0.4586, 0.5412), radius: 0.05 },
        h_coarse: 0.05,
        h_fine: 0.0125,
        fraction_quadrature: 8,
        global_shortcut: true,
    })
    .unwrap()
}

#[test]
fn adjoint_identity_holds_on_every_model() {
    // Q(u) = B(u, w) = F(w)
    let p = heat(0.05, 0.0125);
    let micro = p.microstructure(5).unwrap();
    for model in [
        ModelSpec::BlockwiseHomogenized,
        ModelSpec::refined(BTreeSet::from([2, 7])),
        ModelSpec::FineScale,
    ] {
        let mesh = p.mesh(&model).unwrap();
        let disc = Discretization::new(Arc::clone(&mesh), p.physics());
        let coeff = p.coefficient(&model, &micro, &mesh).unwrap();
        let k = disc.assemble(&coeff).unwrap();
        let f = p.spec.load(&mesh);
        let g = qoi_load(&mesh, p.physics(), &p.config.qoi).unwrap();
        let u = disc.solve(&k, &f).unwrap();
        let w = disc.solve(&k, &g).unwrap();
        let (qu, fw) = (dot(&g, &u.values), dot(&f, &w.values));
        assert!((qu - fw).abs() <= 1e-8 * qu.abs(), "{model}: {qu} vs {fw}");
    }
}

#[test]
fn hanging_nodes_interpolate_their_masters() {
    let p = heat(0.05, 0.00625);
    let model = ModelSpec::refined(BTreeSet::from([3]));
    let mesh = p.mesh(&model).unwrap();
    assert!(!mesh.hanging.is_empty());
    let micro = p.microstructure(1).unwrap();
    let (u, _, _) = p.solve(&model, &micro).unwrap();
    for h in &mesh.hanging {
        let [a, b] = h.masters;
        let mid = 0.5 * (u.values[a as usize] + u.values[b as usize]);
        assert!((u.values[h.slave as usize] - mid).abs() <= 1e-12 * mid.abs().max(1.0));
    }
}

#[test]
fn neumann_flux_balances_dirichlet_reactions() {
    // the reactions at the clamped dofs balance the whole imposed flux
    let p = heat(0.05, 0.0125);
    let micro = p.microstructure(9).unwrap();
    let (u, coeff, _) = p.solve(&ModelSpec::FineScale, &micro).unwrap();
    let r = apply_full_stiffness(&u.mesh, Physics::ScalarDiffusion, &coeff, &u.values);
    let f = p.spec.load(&u.mesh);
    let disc = Discretization::new(Arc::clone(&u.mesh), Physics::ScalarDiffusion);
    let reaction: f64 = (0..r.len()).filter(|&i| disc.dofs.dirichlet[i]).map(|i| r[i] - f[i]).sum();
    let imposed: f64 = f.iter().sum();
    assert!((reaction + imposed).abs() <= 1e-7 * imposed, "{reaction} vs {imposed}");
    assert!((imposed - 1600.0 * 0.2).abs() < 1e-9);
}

#[test]
fn stiffer_inclusions_lower_the_energy() {
    // F(u) = B(u, u) decreases as the inclusion conductivity grows
    let mut last = f64::INFINITY;
    for kappa_i in [100.0, 1000.0, 10000.0] {
        let mut cfg = heat(0.05, 0.0125).config;
        cfg.material = MaterialPair::Scalar { kappa_m: 100.0, kappa_i };
        let p = Problem::new(cfg).unwrap();
        let micro = p.microstructure(3).unwrap();
        let (u, _, _) = p.solve(&ModelSpec::FineScale, &micro).unwrap();
        let energy = dot(&p.spec.load(&u.mesh), &u.values);
        assert!(energy < last);
        last = energy;
    }
}

#[test]
fn lshape_models_solve_and_agree_in_sign() {
    let p = lshape();
    let micro = p.microstructure(2).unwrap();
    let q_fine = p.evaluate_micro(&ModelSpec::FineScale, &micro).unwrap().q;
    let q_blk = p.evaluate_micro(&ModelSpec::BlockwiseHomogenized, &micro).unwrap().q;
    assert!(q_fine.is_finite() && q_blk.is_finite());
    assert!(q_fine * q_blk > 0.0);
    assert!((q_fine - q_blk).abs() < 0.5 * q_fine.abs());
}

#[test]
fn body_load_on_clamped_square_is_symmetric() {
    let part = partition_blocks(&Domain::clamped_rectangle(Rect::new(0.0, 0.0, 1.0, 1.0)), 0.5).unwrap();
    let mesh = build_mesh(&part, &ModelSpec::FineScale, 0.5, 0.125).unwrap();
    let spec = ProblemSpec {
        physics: Physics::ScalarDiffusion,
        body: Some(Arc::new(|_| [1.0, 0.0])),
        neumann: Vec::new(),
    };
    let f = spec.load(&mesh);
    assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}
