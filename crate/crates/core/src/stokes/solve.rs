use serde::{Deserialize, Serialize};
use std::time::Instant;

use super::grid::{Bc, EdgeField, FaceField, Grid, StaggeredField};
use super::ops::{discrete_div, edge_coefficients, edge_grad, edge_grad_adjoint, face_average, grad_into, Coefficients};
use super::spectral::{eig1d, FastDiag, Kind1d};
use crate::error::{Error, Result};

/// Tolerance and iteration cap of the outer projected iteration.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SolveOptions {
    pub tol: f64,
    /// Defaults to 10·n².
    pub max_iter: Option<usize>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: 1e-10, max_iter: None }
    }
}

impl SolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        SolveOptions { tol, max_iter: None }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// Relative residual of the projected momentum equation.
    pub residual: f64,
    /// Max-norm of the discrete divergence over fluid cells.
    pub divergence: f64,
    pub wall_time_s: f64,
}

enum Poisson {
    Fast(FastDiag),
    Masked { pre: FastDiag },
}

/// The discrete operator `u ↦ −Div(k∇u) + m u` on the free faces, together with
/// the projection onto discretely divergence-free fields.
pub struct StokesOperator {
    grid: Grid,
    kedge: EdgeField,
    mass: FaceField,
    active: [Vec<bool>; 2],
    cells: Vec<bool>,
    masked: bool,
    singular: bool,
    vel_pre: [FastDiag; 2],
    poisson: Poisson,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

impl StokesOperator {
    /// `mass` holds a per-cell coefficient of the zero-order term (e.g. ρ/dt);
    /// `mask` marks fluid cells, faces touching a solid cell are fixed at zero.
    pub fn new(grid: Grid, coef: &Coefficients, mass: Option<&[f64]>, mask: Option<&[bool]>) -> Result<Self> {
        if coef.min() <= 0.0 || !coef.max().is_finite() {
            return Err(Error::contract(format!("viscosity range [{}, {}] is not positive", coef.min(), coef.max())));
        }
        let (n, h) = (grid.n, grid.h());
        let cells = match mask {
            Some(m) if m.len() != grid.cells() => {
                return Err(Error::contract(format!("mask has {} cells, grid {}", m.len(), grid.cells())));
            }
            Some(m) => m.to_vec(),
            None => vec![true; grid.cells()],
        };
        let masked = cells.iter().any(|&c| !c);
        let mut active = [vec![false; grid.faces_per_component()], vec![false; grid.faces_per_component()]];
        for (c, act) in active.iter_mut().enumerate() {
            for a in 0..grid.n_alpha() {
                if let Some((l, r)) = grid.adjacent_alpha(a) {
                    for b in 0..n {
                        act[a * n + b] = cells[grid.cell_in_frame(c, l, b)] && cells[grid.cell_in_frame(c, r, b)];
                    }
                }
            }
        }
        let kedge = edge_coefficients(grid, coef)?;
        let mass = match mass {
            Some(m) => {
                if m.len() != grid.cells() || m.iter().any(|&v| v < 0.0) {
                    return Err(Error::contract("mass coefficient must be a nonnegative cell field"));
                }
                face_average(grid, m)
            }
            None => FaceField::zeros(grid),
        };
        let mass_mean = {
            let vals: Vec<f64> = (0..2)
                .flat_map(|c| mass.c[c].iter().zip(&active[c]).filter(|(_, &a)| a).map(|(v, _)| *v))
                .collect();
            mean(&vals)
        };
        let singular = grid.bc == Bc::Periodic && !masked && mass_mean == 0.0;
        let (ka, kb) = match grid.bc {
            Bc::Periodic => (Kind1d::Periodic, Kind1d::Periodic),
            Bc::DirichletZero => (Kind1d::Dirichlet, Kind1d::Wall),
        };
        let vel_pre = [0, 1].map(|c| {
            FastDiag::new(
                eig1d(ka, n),
                eig1d(kb, n),
                mean(&kedge.nn[c]) / (h * h),
                mean(&kedge.tt[c]) / (h * h),
                mass_mean,
            )
        });
        let pk = if grid.bc == Bc::Periodic { Kind1d::Periodic } else { Kind1d::Neumann };
        let fd = FastDiag::new(eig1d(pk, n), eig1d(pk, n), 1.0 / (h * h), 1.0 / (h * h), 0.0);
        let poisson = if masked { Poisson::Masked { pre: fd } } else { Poisson::Fast(fd) };
        Ok(StokesOperator { grid, kedge, mass, active, cells, masked, singular, vel_pre, poisson })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn active_faces(&self) -> &[Vec<bool>; 2] {
        &self.active
    }

    pub fn fluid_cells(&self) -> &[bool] {
        &self.cells
    }

    /// Per-edge viscosity after averaging.
    pub fn edge_coefficients(&self) -> &EdgeField {
        &self.kedge
    }

    /// True when constants lie in the kernel (periodic, unmasked, no zero-order term).
    pub fn is_singular(&self) -> bool {
        self.singular
    }

    pub fn restrict(&self, u: &mut FaceField) {
        for c in 0..2 {
            for (v, &a) in u.c[c].iter_mut().zip(&self.active[c]) {
                if !a {
                    *v = 0.0;
                }
            }
        }
    }

    /// `K u` on active faces.
    pub fn apply(&self, u: &FaceField) -> FaceField {
        let mut g = edge_grad(u);
        g.mul_assign(&self.kedge);
        let mut out = edge_grad_adjoint(&g);
        for c in 0..2 {
            for ((o, m), v) in out.c[c].iter_mut().zip(&self.mass.c[c]).zip(&u.c[c]) {
                *o += m * v;
            }
        }
        self.restrict(&mut out);
        out
    }

    /// Divergence on fluid cells (0 elsewhere) of a field supported on active faces.
    pub fn div(&self, u: &FaceField) -> Vec<f64> {
        let mut d = discrete_div(u);
        for (v, &c) in d.iter_mut().zip(&self.cells) {
            if !c {
                *v = 0.0;
            }
        }
        d
    }

    /// Gradient on active faces.
    pub fn grad(&self, p: &[f64]) -> FaceField {
        let mut out = FaceField::zeros(self.grid);
        grad_into(self.grid, p, Some(&self.active), &mut out);
        out
    }

    fn laplace(&self, p: &[f64]) -> Vec<f64> {
        let mut d = self.div(&self.grad(p));
        d.iter_mut().for_each(|v| *v = -*v);
        d
    }

    /// Pseudo-inverse of `−div grad` on the fluid cells. `scale` bounds the size of
    /// rounding errors in `rhs`, so nearly consistent data stops early.
    fn poisson_solve(&self, rhs: &[f64], scale: f64) -> Result<Vec<f64>> {
        match &self.poisson {
            Poisson::Fast(fd) => {
                let mut x = rhs.to_vec();
                fd.apply(&mut x);
                let m = mean(&x);
                x.iter_mut().for_each(|v| *v -= m);
                Ok(x)
            }
            Poisson::Masked { pre } => self.poisson_cg(rhs, pre, scale),
        }
    }

    fn poisson_cg(&self, b: &[f64], pre: &FastDiag, scale: f64) -> Result<Vec<f64>> {
        let ncell = b.len();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let precond = |r: &[f64]| {
            let mut z = r.to_vec();
            pre.apply(&mut z);
            for (v, &c) in z.iter_mut().zip(&self.cells) {
                if !c {
                    *v = 0.0;
                }
            }
            z
        };
        let bn = dot(b, b).sqrt();
        let mut x = vec![0.0; ncell];
        let floor = 1e-13 * bn.max(scale);
        if bn <= floor {
            return Ok(x);
        }
        let mut r = b.to_vec();
        let mut z = precond(&r);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let cap = 4 * ncell + 100;
        let mut best = f64::INFINITY;
        for _ in 0..cap {
            let q = self.laplace(&p);
            let pq = dot(&p, &q);
            if pq <= 0.0 {
                break;
            }
            let a = rz / pq;
            for k in 0..ncell {
                x[k] += a * p[k];
                r[k] -= a * q[k];
            }
            let rn = dot(&r, &r).sqrt();
            best = best.min(rn / bn);
            if rn <= floor {
                return Ok(x);
            }
            z = precond(&r);
            let rz1 = dot(&r, &z);
            let beta = rz1 / rz;
            rz = rz1;
            for k in 0..ncell {
                p[k] = z[k] + beta * p[k];
            }
        }
        if best <= 1e-10 {
            return Ok(x);
        }
        Err(Error::SolverFailure { stage: "pressure poisson".into(), iterations: cap, residual: best })
    }

    /// Orthogonal projection onto discretely divergence-free fields on the active faces.
    pub fn project(&self, x: &FaceField) -> Result<FaceField> {
        let mut y = x.clone();
        self.restrict(&mut y);
        let d = self.div(&y);
        let scale = 4.0 * self.grid.n as f64 * y.dot(&y).sqrt();
        let phi = self.poisson_solve(&d, scale)?;
        y.add_scaled(1.0, &self.grad(&phi));
        Ok(y)
    }

    fn precondition(&self, r: &FaceField) -> FaceField {
        let g = self.grid;
        let n = g.n;
        let mut z = r.clone();
        let start = if g.bc == Bc::DirichletZero { 1 } else { 0 };
        for c in 0..2 {
            let rows = self.vel_pre[c].rows();
            self.vel_pre[c].apply(&mut z.c[c][start * n..(start + rows) * n]);
        }
        self.restrict(&mut z);
        z
    }

    /// Solves `K u + grad p = f`, `div u = 0` on the fluid region.
    pub fn solve(&self, rhs: &FaceField, guess: Option<&FaceField>, opts: SolveOptions) -> Result<(StaggeredField, SolveReport)> {
        let t0 = Instant::now();
        let g = self.grid;
        if rhs.grid != g {
            return Err(Error::contract("right-hand side lives on a different grid"));
        }
        if !(opts.tol > 0.0) {
            return Err(Error::validation(format!("tolerance {} must be > 0", opts.tol)));
        }
        let mut f = rhs.clone();
        self.restrict(&mut f);
        if self.singular {
            for c in 0..2 {
                let m = mean(&f.c[c]);
                f.c[c].iter_mut().for_each(|v| *v -= m);
            }
        }
        let b = self.project(&f)?;
        let bn = b.dot(&b).sqrt();
        // rounding floor: a pure gradient forcing projects to noise of this size
        let floor = 1e-13 * f.dot(&f).sqrt();
        let stop = (opts.tol * bn).max(floor);
        let cap = opts.max_iter.unwrap_or(10 * g.n * g.n);
        let mut u = match guess {
            Some(u0) => self.project(u0)?,
            None => FaceField::zeros(g),
        };
        let mut iterations = 0;
        let mut rel = 0.0;
        if bn > floor {
            let mut ku = self.apply(&u);
            ku.scale(-1.0);
            ku.add_scaled(1.0, &f);
            let mut r = self.project(&ku)?;
            rel = r.dot(&r).sqrt() / bn;
            let mut z = self.project(&self.precondition(&r))?;
            let mut p = z.clone();
            let mut rz = r.dot(&z);
            while rel * bn > stop {
                if iterations >= cap {
                    return Err(Error::SolverFailure { stage: "stokes".into(), iterations, residual: rel });
                }
                iterations += 1;
                let q = self.apply(&p);
                let pq = p.dot(&q);
                if !(pq > 0.0) {
                    return Err(Error::SolverFailure { stage: "stokes (indefinite)".into(), iterations, residual: rel });
                }
                let a = rz / pq;
                u.add_scaled(a, &p);
                r.add_scaled(-a, &self.project(&q)?);
                rel = r.dot(&r).sqrt() / bn;
                if rel * bn <= stop {
                    break;
                }
                z = self.project(&self.precondition(&r))?;
                let rz1 = r.dot(&z);
                let beta = rz1 / rz;
                rz = rz1;
                let mut pn = z.clone();
                pn.add_scaled(beta, &p);
                p = pn;
            }
            u = self.project(&u)?;
        }
        if self.singular {
            let m = u.component_means();
            for c in 0..2 {
                u.c[c].iter_mut().for_each(|v| *v -= m[c]);
            }
        }
        let mut s = self.apply(&u);
        s.scale(-1.0);
        s.add_scaled(1.0, &f);
        let ds = self.div(&s);
        let mut p = self.poisson_solve(&ds, 4.0 * g.n as f64 * s.dot(&s).sqrt())?;
        p.iter_mut().for_each(|v| *v = -*v);
        let fluid: Vec<usize> = (0..g.cells()).filter(|&k| self.cells[k]).collect();
        let pm = fluid.iter().map(|&k| p[k]).sum::<f64>() / fluid.len().max(1) as f64;
        for &k in &fluid {
            p[k] -= pm;
        }
        let divergence = self.div(&u).iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        let report = SolveReport { iterations, residual: rel, divergence, wall_time_s: t0.elapsed().as_secs_f64() };
        Ok((StaggeredField { u, p }, report))
    }

    pub fn is_masked(&self) -> bool {
        self.masked
    }
}

/// One solve of the spatial Stokes operator with per-cell orthotropic viscosity.
pub fn solve_generalized_stokes(
    grid: Grid,
    coef: &Coefficients,
    mask: Option<&[bool]>,
    rhs: &FaceField,
    tol: f64,
) -> Result<(StaggeredField, SolveReport)> {
    let op = StokesOperator::new(grid, coef, None, mask)?;
    op.solve(rhs, None, SolveOptions::with_tol(tol))
}

