use super::grid::{Bc, EdgeField, FaceField, Grid};
use crate::error::{Error, Result};

/// Cell-centred divergence.
pub fn discrete_div(u: &FaceField) -> Vec<f64> {
    let g = u.grid;
    let (n, h) = (g.n, g.h());
    let mut out = vec![0.0; g.cells()];
    for c in 0..2 {
        let uc = &u.c[c];
        for a in 0..n {
            let a1 = if g.bc == Bc::Periodic { (a + 1) % n } else { a + 1 };
            for b in 0..n {
                out[g.cell_in_frame(c, a, b)] += (uc[a1 * n + b] - uc[a * n + b]) / h;
            }
        }
    }
    out
}

/// Face-normal pressure differences; boundary faces of a box get 0.
pub fn discrete_grad(grid: Grid, p: &[f64]) -> Result<FaceField> {
    if p.len() != grid.cells() {
        return Err(Error::contract(format!("pressure has {} cells, grid has {}", p.len(), grid.cells())));
    }
    let mut out = FaceField::zeros(grid);
    grad_into(grid, p, None, &mut out);
    Ok(out)
}

/// Gradient restricted to `active` faces when given.
pub(crate) fn grad_into(grid: Grid, p: &[f64], active: Option<&[Vec<bool>; 2]>, out: &mut FaceField) {
    let (n, h) = (grid.n, grid.h());
    for c in 0..2 {
        for a in 0..grid.n_alpha() {
            let adj = grid.adjacent_alpha(a);
            for b in 0..n {
                let k = a * n + b;
                out.c[c][k] = match adj {
                    Some((l, r)) if active.is_none_or(|m| m[c][k]) => {
                        (p[grid.cell_in_frame(c, r, b)] - p[grid.cell_in_frame(c, l, b)]) / h
                    }
                    _ => 0.0,
                };
            }
        }
    }
}

fn check_grid(a: Grid, b: Grid) -> Result<()> {
    if a != b {
        return Err(Error::contract(format!("grid mismatch: {a:?} vs {b:?}")));
    }
    Ok(())
}

/// `⟨div u, p⟩ + ⟨u, grad p⟩` with h² weights; zero up to rounding.
pub fn adjointness_defect(u: &FaceField, p: &[f64]) -> Result<f64> {
    let gp = discrete_grad(u.grid, p)?;
    check_grid(u.grid, gp.grid)?;
    let h2 = u.grid.h().powi(2);
    let d = discrete_div(u);
    let lhs: f64 = d.iter().zip(p).map(|(a, b)| a * b).sum::<f64>() * h2;
    Ok(lhs + u.dot(&gp) * h2)
}

/// Orthotropic viscosity per cell and velocity component: `k[c][axis][cell]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Coefficients {
    pub n: usize,
    pub k: [[Vec<f64>; 2]; 2],
}

impl Coefficients {
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> [[f64; 2]; 2]) -> Self {
        let mut k: [[Vec<f64>; 2]; 2] = Default::default();
        for row in k.iter_mut() {
            for arr in row.iter_mut() {
                *arr = vec![0.0; n * n];
            }
        }
        for i in 0..n {
            for j in 0..n {
                let v = f(i, j);
                for c in 0..2 {
                    for ax in 0..2 {
                        k[c][ax][i * n + j] = v[c][ax];
                    }
                }
            }
        }
        Coefficients { n, k }
    }

    pub fn uniform(n: usize, v: [[f64; 2]; 2]) -> Self {
        Self::from_fn(n, |_, _| v)
    }

    /// Scalar field `a(cell)` times the identity on every component.
    pub fn isotropic(n: usize, a: &[f64]) -> Self {
        Self::from_fn(n, |i, j| {
            let v = a[i * n + j];
            [[v, v], [v, v]]
        })
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.k.iter_mut().flatten().flatten().for_each(|v| *v *= s);
        out
    }

    pub fn min(&self) -> f64 {
        self.k.iter().flatten().flatten().fold(f64::INFINITY, |a, &v| a.min(v))
    }

    pub fn max(&self) -> f64 {
        self.k.iter().flatten().flatten().fold(f64::NEG_INFINITY, |a, &v| a.max(v))
    }
}

/// Quadrature weight of every edge: ½ for the half-width edges at box walls.
pub fn edge_weights(grid: Grid) -> EdgeField {
    let mut w = EdgeField::zeros(grid);
    for c in 0..2 {
        w.nn[c].iter_mut().for_each(|v| *v = 1.0);
        let nt = grid.n_tau();
        for a in 0..grid.n_alpha() {
            for t in 0..nt {
                let wall = grid.bc == Bc::DirichletZero && (t == 0 || t == grid.n);
                w.tt[c][a * nt + t] = if wall { 0.5 } else { 1.0 };
            }
        }
    }
    w
}

fn harmonic(vals: &[f64]) -> f64 {
    if vals.is_empty() {
        return 0.0;
    }
    if vals.iter().any(|&v| v <= 0.0) {
        return vals.iter().sum::<f64>() / vals.len() as f64;
    }
    vals.len() as f64 / vals.iter().map(|v| 1.0 / v).sum::<f64>()
}

/// Cell values moved to edges: nn edges sit at cell centres, tt edges at corners
/// (harmonic mean of the in-domain cells around the corner).
pub fn edge_coefficients(grid: Grid, coef: &Coefficients) -> Result<EdgeField> {
    if coef.n != grid.n {
        return Err(Error::contract(format!("coefficients on {} grid, solver grid {}", coef.n, grid.n)));
    }
    let n = grid.n;
    let mut e = EdgeField::zeros(grid);
    let mut buf = Vec::with_capacity(4);
    for c in 0..2 {
        let (kn, kt) = (&coef.k[c][c], &coef.k[c][1 - c]);
        for s in 0..n {
            for b in 0..n {
                e.nn[c][s * n + b] = kn[grid.cell_in_frame(c, s, b)];
            }
        }
        let nt = grid.n_tau();
        for a in 0..grid.n_alpha() {
            for t in 0..nt {
                buf.clear();
                for da in [-1isize, 0] {
                    for dt in [-1isize, 0] {
                        let (ca, cb) = (a as isize + da, t as isize + dt);
                        let (ca, cb) = match grid.bc {
                            Bc::Periodic => (ca.rem_euclid(n as isize), cb.rem_euclid(n as isize)),
                            Bc::DirichletZero => {
                                if ca < 0 || cb < 0 || ca >= n as isize || cb >= n as isize {
                                    continue;
                                }
                                (ca, cb)
                            }
                        };
                        buf.push(kt[grid.cell_in_frame(c, ca as usize, cb as usize)]);
                    }
                }
                e.tt[c][a * nt + t] = harmonic(&buf);
            }
        }
    }
    Ok(e)
}

/// Arithmetic average of adjacent cell values on each face; box walls get 0.
pub fn face_average(grid: Grid, cell: &[f64]) -> FaceField {
    let n = grid.n;
    let mut out = FaceField::zeros(grid);
    for c in 0..2 {
        for a in 0..grid.n_alpha() {
            if let Some((l, r)) = grid.adjacent_alpha(a) {
                for b in 0..n {
                    out.c[c][a * n + b] =
                        0.5 * (cell[grid.cell_in_frame(c, l, b)] + cell[grid.cell_in_frame(c, r, b)]);
                }
            }
        }
    }
    out
}

/// Difference quotients of each component on both edge families.
pub fn edge_grad(u: &FaceField) -> EdgeField {
    let g = u.grid;
    let (n, h) = (g.n, g.h());
    let nt = g.n_tau();
    let mut e = EdgeField::zeros(g);
    for c in 0..2 {
        let uc = &u.c[c];
        for s in 0..n {
            let s1 = if g.bc == Bc::Periodic { (s + 1) % n } else { s + 1 };
            for b in 0..n {
                e.nn[c][s * n + b] = (uc[s1 * n + b] - uc[s * n + b]) / h;
            }
        }
        for a in 0..g.n_alpha() {
            let row = &uc[a * n..(a + 1) * n];
            let out = &mut e.tt[c][a * nt..(a + 1) * nt];
            match g.bc {
                Bc::Periodic => {
                    out[0] = (row[0] - row[n - 1]) / h;
                    for t in 1..n {
                        out[t] = (row[t] - row[t - 1]) / h;
                    }
                }
                Bc::DirichletZero => {
                    out[0] = 2.0 * row[0] / h;
                    for t in 1..n {
                        out[t] = (row[t] - row[t - 1]) / h;
                    }
                    out[n] = -2.0 * row[n - 1] / h;
                }
            }
        }
    }
    e
}

/// Adjoint of [`edge_grad`] including the edge weights, so that
/// `⟨edge_grad_adjoint(q), u⟩ = Σ_e w_e q_e (∇u)_e`.
pub fn edge_grad_adjoint(q: &EdgeField) -> FaceField {
    let g = q.grid;
    let (n, h) = (g.n, g.h());
    let nt = g.n_tau();
    let mut out = FaceField::zeros(g);
    for c in 0..2 {
        let oc = &mut out.c[c];
        for s in 0..n {
            let s1 = if g.bc == Bc::Periodic { (s + 1) % n } else { s + 1 };
            for b in 0..n {
                let v = q.nn[c][s * n + b] / h;
                oc[s1 * n + b] += v;
                oc[s * n + b] -= v;
            }
        }
        for a in 0..g.n_alpha() {
            let qrow = &q.tt[c][a * nt..(a + 1) * nt];
            let orow = &mut oc[a * n..(a + 1) * n];
            match g.bc {
                Bc::Periodic => {
                    for t in 0..n {
                        let v = qrow[t] / h;
                        orow[t] += v;
                        orow[(t + n - 1) % n] -= v;
                    }
                }
                Bc::DirichletZero => {
                    orow[0] += 0.5 * qrow[0] * 2.0 / h;
                    for t in 1..n {
                        let v = qrow[t] / h;
                        orow[t] += v;
                        orow[t - 1] -= v;
                    }
                    orow[n - 1] -= 0.5 * qrow[n] * 2.0 / h;
                }
            }
        }
        if g.bc == Bc::DirichletZero {
            for b in 0..n {
                oc[b] = 0.0;
                oc[n * n + b] = 0.0;
            }
        }
    }
    out
}

/// `Σ_e w_e a_e b_e h²` over both families and components.
pub fn edge_inner(a: &EdgeField, b: &EdgeField, w: &EdgeField) -> f64 {
    let h2 = a.grid.h().powi(2);
    let mut s = 0.0;
    for c in 0..2 {
        s += a.nn[c].iter().zip(&b.nn[c]).zip(&w.nn[c]).map(|((x, y), z)| x * y * z).sum::<f64>();
        s += a.tt[c].iter().zip(&b.tt[c]).zip(&w.tt[c]).map(|((x, y), z)| x * y * z).sum::<f64>();
    }
    s * h2
}

/// Discrete `‖∇u‖²`.
pub fn grad_norm_sq(u: &FaceField) -> f64 {
    let g = edge_grad(u);
    edge_inner(&g, &g, &edge_weights(u.grid))
}
