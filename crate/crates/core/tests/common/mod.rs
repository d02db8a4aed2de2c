#![allow(dead_code)]

use dpflow::stokes::{FaceField, StokesOperator};
use nalgebra::{DMatrix, DVector};

/// Assembles the saddle-point matrix of `op` column by column and solves it with an SVD
/// pseudo-inverse. Returns the velocity and the face gradient of the pressure.
pub fn dense_stokes(op: &StokesOperator, f: &FaceField) -> (FaceField, FaceField) {
    let g = op.grid();
    let act = op.active_faces();
    let faces: Vec<(usize, usize)> =
        (0..2).flat_map(|c| (0..g.faces_per_component()).filter(move |&k| act[c][k]).map(move |k| (c, k))).collect();
    let cells: Vec<usize> = (0..g.cells()).filter(|&k| op.fluid_cells()[k]).collect();
    let (nu, np) = (faces.len(), cells.len());
    let mut m = DMatrix::<f64>::zeros(nu + np, nu + np);
    for (j, &(c, k)) in faces.iter().enumerate() {
        let mut e = FaceField::zeros(g);
        e.c[c][k] = 1.0;
        let ke = op.apply(&e);
        for (i, &(ci, ki)) in faces.iter().enumerate() {
            m[(i, j)] = ke.c[ci][ki];
        }
        let d = op.div(&e);
        for (i, &cell) in cells.iter().enumerate() {
            m[(nu + i, j)] = d[cell];
        }
    }
    for (j, &cell) in cells.iter().enumerate() {
        let mut e = vec![0.0; g.cells()];
        e[cell] = 1.0;
        let ge = op.grad(&e);
        for (i, &(ci, ki)) in faces.iter().enumerate() {
            m[(i, nu + j)] = ge.c[ci][ki];
        }
    }
    let mut rhs = DVector::<f64>::zeros(nu + np);
    for (i, &(c, k)) in faces.iter().enumerate() {
        rhs[i] = f.c[c][k];
    }
    let svd = m.clone().svd(true, true);
    let mut x = svd.solve(&rhs, 1e-11).expect("svd solve");
    // iterative refinement recovers the digits the bidiagonalization loses
    for _ in 0..3 {
        let r = &rhs - &m * &x;
        x += svd.solve(&r, 1e-11).expect("svd solve");
    }
    let mut u = FaceField::zeros(g);
    for (i, &(c, k)) in faces.iter().enumerate() {
        u.c[c][k] = x[i];
    }
    let mut p = vec![0.0; g.cells()];
    for (i, &cell) in cells.iter().enumerate() {
        p[cell] = x[nu + i];
    }
    (u, op.grad(&p))
}

pub fn rel_diff(a: &FaceField, b: &FaceField) -> f64 {
    let mut d = a.clone();
    d.add_scaled(-1.0, b);
    d.max_abs() / b.max_abs().max(1e-300)
}

/// Max-norm difference relative to `max(‖b‖∞, scale)`.
pub fn abs_diff(a: &FaceField, b: &FaceField, scale: f64) -> f64 {
    let mut d = a.clone();
    d.add_scaled(-1.0, b);
    d.max_abs() / b.max_abs().max(scale)
}
