mod common;

use dpflow::geometry::{make_cell, CellMask, Shape};
use dpflow::homogenize::*;
use dpflow::kernels::{DensityField, Kernel4, Profile, TimeProfile};
use dpflow::stokes::{edge_grad, edge_grad_adjoint, edge_inner, edge_weights, Bc, Coefficients, EdgeField, Grid, SolveOptions, StokesOperator};
use std::f64::consts::PI;

fn opts() -> SolveOptions {
    SolveOptions::with_tol(1e-11)
}

fn setup(kernels: KernelSet, y: CellMask, z: Option<CellMask>) -> CellSetup {
    CellSetup {
        kernels,
        rho1: DensityField::constant(1.0, 2.0),
        rho2: DensityField::constant(1.0, 2.0),
        y_mask: y,
        z_mask: z,
        n_tau: 16,
        opts: opts(),
    }
}

fn iso4(mu: f64) -> Tensor4 {
    kron_identity([[mu, 0.0], [0.0, mu]])
}

#[test]
fn constant_coefficients_collapse_for_any_masks() {
    let (mu, kappa, lambda) = (1.7, 0.4, 3.0);
    let ks = KernelSet {
        a0: Kernel4::isotropic(mu),
        a1: Kernel4::exp_decay(kappa, lambda),
        b0: Kernel4::isotropic(mu),
        b1: Kernel4::exp_decay(kappa, lambda),
    };
    let pairs = [
        (Shape::half_plane(1, 0.5), Some(Shape::centered_box(0.5))),
        (Shape::centered_disk(0.3), Some(Shape::half_plane(2, 0.25))),
        (Shape::centered_box(0.5), None),
        (Shape::Empty, Some(Shape::centered_disk(0.25))),
    ];
    for (ys, zs) in pairs {
        let y = make_cell(&ys, 16).unwrap();
        let z = zs.map(|s| make_cell(&s, 16).unwrap());
        let m = homogenize(&setup(ks.clone(), y, z), 0.1, 4).unwrap();
        for (k, t) in m.times.iter().enumerate() {
            assert!(t_max_diff(&m.a0[k], &iso4(mu)) < 1e-8);
            assert!(t_max_diff(&m.a1[k], &iso4(kappa * (-lambda * t).exp())) < 1e-8);
        }
        assert!(m.diagnostics.grad_z_max < 1e-8);
        assert!(m.check().passed, "{:?}", m.check());
    }
}

#[test]
fn literal_mode_pore_cell_gives_scaled_tensor() {
    let z = make_cell(&Shape::centered_box(0.5), 16).unwrap();
    let a0 = Kernel4::constant([[2.0, 0.0], [0.0, 3.0]]);
    let a1 = Kernel4::exp_decay(0.5, 1.0);
    let c = assemble_c(&a0, &a1, Some(&z), Branch::Skeleton, opts()).unwrap();
    let mp = z.measure();
    assert!(t_max_diff(&c.c0, &t_scale(&kron_identity(a0.matrix), 1.0 - mp)) < 1e-8);
    assert!(t_max_diff(&c.c1, &t_scale(&kron_identity(a1.matrix), 1.0 - mp)) < 1e-8);
    assert!(c.grad_z_max < 1e-8);
    let none = assemble_c(&a0, &a1, Some(&CellMask::empty(16)), Branch::Skeleton, opts()).unwrap();
    assert!(t_max_diff(&none.c0, &kron_identity(a0.matrix)) < 1e-12);
    let zero = assemble_c(&a0, &Kernel4::zero(), Some(&z), Branch::Skeleton, opts()).unwrap();
    assert_eq!(zero.c1, ZERO4);
}

/// Flux of one direction recomputed from a dense saddle-point solve.
fn dense_flux(n: usize, cell: impl Fn([f64; 2]) -> f64, a: usize) -> [f64; 4] {
    let g = Grid::new(n, Bc::Periodic).unwrap();
    let coef = Coefficients::from_fn(n, |i, j| {
        let v = cell([(i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64]);
        [[v, v], [v, v]]
    });
    let op = StokesOperator::new(g, &coef, None, None).unwrap();
    let k = op.edge_coefficients().clone();
    let unit = |b: usize| {
        let mut e = EdgeField::zeros(g);
        let (c, ax) = (b / 2, b % 2);
        if c == ax {
            e.nn[c].iter_mut().for_each(|v| *v = 1.0)
        } else {
            e.tt[c].iter_mut().for_each(|v| *v = 1.0)
        }
        e
    };
    let mut drive = unit(a);
    drive.mul_assign(&k);
    let mut rhs = edge_grad_adjoint(&drive);
    rhs.scale(-1.0);
    let (u, _) = common::dense_stokes(&op, &rhs);
    let mut kdu = edge_grad(&u);
    kdu.mul_assign(&k);
    let mean: f64 = (0..n * n).map(|q| cell([((q / n) as f64 + 0.5) / n as f64, ((q % n) as f64 + 0.5) / n as f64])).sum::<f64>()
        / (n * n) as f64;
    let w = edge_weights(g);
    let mut out = [0.0; 4];
    for b in 0..4 {
        out[b] = if a == b { mean } else { 0.0 } + edge_inner(&kdu, &unit(b), &w);
    }
    out
}

#[test]
fn pore_cell_with_z_dependence_matches_dense_solve() {
    let a0 = Kernel4::isotropic(1.0).with_z(Profile::sine(2.0, 1.0, 1));
    let z = CellMask::empty(8);
    let sol = solve_cell_z([[1.0, 0.0], [0.0, 0.0]], &a0, &z, Branch::Skeleton, opts()).unwrap();
    let want = dense_flux(8, |p| 2.0 + (2.0 * PI * p[0]).sin(), 0);
    for b in 0..4 {
        assert!((sol.flux[b / 2][b % 2] - want[b]).abs() < 1e-8, "{b}: {:?} vs {want:?}", sol.flux);
    }
}

#[test]
fn crack_cell_matches_dense_solve() {
    let coef = YCoefficient { base0: iso4(1.0), profile0: Profile::cosine(2.0, 1.0, 1), base1: ZERO4, profile1: Profile::ONE };
    let y = CellMask::empty(8);
    for a in 0..4 {
        let mut xi = [[0.0; 2]; 2];
        xi[a / 2][a % 2] = 1.0;
        let sol = solve_cell_y(xi, &coef, &y, Branch::Skeleton, opts()).unwrap();
        let want = dense_flux(8, |p| 2.0 + (2.0 * PI * p[0]).cos(), a);
        for b in 0..4 {
            assert!((sol.flux[b / 2][b % 2] - want[b]).abs() < 1e-8, "{a}{b}: {:?} vs {want:?}", sol.flux);
        }
    }
}

#[test]
fn constant_crack_coefficient_needs_no_corrector() {
    let coef = YCoefficient { base0: iso4(2.5), profile0: Profile::ONE, base1: ZERO4, profile1: Profile::ONE };
    let sol = solve_cell_y([[0.0, 1.0], [0.0, 0.0]], &coef, &CellMask::empty(16), Branch::Skeleton, opts()).unwrap();
    assert!(sol.field.u.max_abs() < 1e-10);
    assert!((sol.flux[0][1] - 2.5).abs() < 1e-12);
}

#[test]
fn corrector_map_is_linear() {
    let y = make_cell(&Shape::half_plane(1, 0.5), 16).unwrap();
    let coef = YCoefficient { base0: iso4(1.0), profile0: Profile::cosine(2.0, 1.0, 1), base1: ZERO4, profile1: Profile::ONE };
    let xi = [[0.3, -1.2], [0.7, 0.5]];
    let combined = solve_cell_y(xi, &coef, &y, Branch::Skeleton, opts()).unwrap();
    let mut sum = dpflow::stokes::FaceField::zeros(combined.field.grid());
    for a in 0..4 {
        let mut e = [[0.0; 2]; 2];
        e[a / 2][a % 2] = 1.0;
        let s = solve_cell_y(e, &coef, &y, Branch::Skeleton, opts()).unwrap();
        sum.add_scaled(xi[a / 2][a % 2], &s.field.u);
    }
    assert!(common::rel_diff(&combined.field.u, &sum) < 1e-8);
}

fn laminate_model(n: usize) -> EffectiveModel {
    let ks = KernelSet {
        a0: Kernel4::y_cosine(2.0, 1.0, 1, 1.0),
        a1: Kernel4::zero(),
        b0: Kernel4::isotropic(1.0),
        b1: Kernel4::zero(),
    };
    homogenize(&setup(ks, make_cell(&Shape::half_plane(1, 0.5), n).unwrap(), None), 0.1, 1).unwrap()
}

#[test]
fn laminate_tensor_is_stable_under_refinement() {
    let coarse = laminate_model(64);
    let fine = laminate_model(128);
    assert!(fine.check().passed, "{:?}", fine.check());
    for i in 0..4 {
        for j in 0..4 {
            let (a, b) = (coarse.a0[0][i][j], fine.a0[0][i][j]);
            assert!((a - b).abs() <= 0.02 * b.abs().max(1e-3), "{i}{j}: {a} vs {b}");
        }
    }
}

fn memory_coef(c1_scale: f64) -> YCoefficient {
    YCoefficient {
        base0: iso4(1.0),
        profile0: Profile::cosine(2.0, 1.0, 1),
        base1: t_scale(&iso4(1.0), c1_scale),
        profile1: Profile::cosine(2.0, 1.0, 1),
    }
}

#[test]
fn coupled_memory_cell_agrees_with_averaged_tensors() {
    let y = make_cell(&Shape::half_plane(1, 0.5), 8).unwrap();
    let dt = 0.1;
    let kappa: Vec<f64> = (0..6).map(|k| (-(k as f64) * dt).exp()).collect();
    for s in [0.0, 0.6] {
        let c = memory_coef(s);
        let coupled = coupled_memory_fluxes(&c, &kappa, dt, &y, Branch::Skeleton, opts()).unwrap();
        let averaged = averaged_memory_fluxes(&c, &kappa, dt, &y, Branch::Skeleton, opts()).unwrap();
        for (a, b) in coupled.iter().zip(&averaged) {
            assert!(t_max_diff(a, b) < 1e-8, "scale {s}: {}", t_max_diff(a, b));
        }
    }
}

#[test]
fn density_examples() {
    let n = 16;
    let r = effective_density(&DensityField::constant(1.3, 2.0), &DensityField::constant(1.3, 2.0), &make_cell(&Shape::half_plane(1, 0.5), n).unwrap(), 0.3);
    assert!((r - 1.3).abs() < 1e-14);
    let r = effective_density(&DensityField::constant(1.0, 2.0), &DensityField::constant(2.0, 2.0), &make_cell(&Shape::half_plane(1, 0.5), n).unwrap(), 0.5);
    assert!((r - 1.75).abs() < 1e-14);
    let rho1 = DensityField { profile: Profile::cosine(2.0, 1.0, 1), lambda: 3.0 };
    let rho2 = DensityField::constant(1.0, 3.0);
    let coarse = effective_density(&rho1, &rho2, &make_cell(&Shape::half_plane(1, 0.5), 32).unwrap(), 0.0);
    let fine = effective_density(&rho1, &rho2, &make_cell(&Shape::half_plane(1, 0.5), 320).unwrap(), 0.0);
    assert!((coarse - fine).abs() < 1e-3);
}

#[test]
fn time_dependent_kernels_sample_profiles() {
    let ks = KernelSet {
        a0: Kernel4::isotropic(2.0).with_time(TimeProfile::Exp { lambda: 1.0 }),
        a1: Kernel4::zero(),
        b0: Kernel4::isotropic(1.0),
        b1: Kernel4::tau_cosine(1.0, 0.5, 0.2),
    };
    let mut s = setup(ks, make_cell(&Shape::half_plane(1, 0.5), 16).unwrap(), None);
    s.kernels.a0.alpha = 1.0;
    let m = homogenize(&s, 0.25, 4).unwrap();
    for (k, t) in m.times.iter().enumerate() {
        let want = 0.5 * 2.0 * (-t).exp() + 0.5;
        assert!((m.a0[k][0][0] - want).abs() < 1e-8);
        assert!((m.a1[k][0][0] - 0.5 * 0.2).abs() < 1e-8);
    }
}
