use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Sample;

/// Boundary treatment of the square grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bc {
    Periodic,
    DirichletZero,
}

/// Uniform n×n grid of the unit square (or torus).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub n: usize,
    pub bc: Bc,
}

impl Grid {
    pub fn new(n: usize, bc: Bc) -> Result<Self> {
        if n < 4 {
            return Err(Error::validation(format!("grid size {n} < 4")));
        }
        Ok(Grid { n, bc })
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn cells(&self) -> usize {
        self.n * self.n
    }

    /// Number of face positions along the normal axis of a component.
    pub fn n_alpha(&self) -> usize {
        match self.bc {
            Bc::Periodic => self.n,
            Bc::DirichletZero => self.n + 1,
        }
    }

    /// Number of tangential edges per normal position.
    pub fn n_tau(&self) -> usize {
        self.n_alpha()
    }

    pub fn faces_per_component(&self) -> usize {
        self.n_alpha() * self.n
    }

    /// Flat index of cell (i, j).
    pub fn cell(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }

    /// Cell index in the frame of component `c`, where `a` runs along axis `c`.
    pub fn cell_in_frame(&self, c: usize, a: usize, b: usize) -> usize {
        if c == 0 {
            a * self.n + b
        } else {
            b * self.n + a
        }
    }

    /// Physical position of face node (α, β) of component `c`.
    pub fn face_position(&self, c: usize, alpha: usize, beta: usize) -> [f64; 2] {
        let h = self.h();
        let mut p = [0.0; 2];
        p[c] = alpha as f64 * h;
        p[1 - c] = (beta as f64 + 0.5) * h;
        p
    }

    pub fn cell_center(&self, i: usize, j: usize) -> [f64; 2] {
        let h = self.h();
        [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h]
    }

    /// Whether face α lies on the boundary of a Dirichlet box.
    pub fn is_boundary_alpha(&self, alpha: usize) -> bool {
        self.bc == Bc::DirichletZero && (alpha == 0 || alpha == self.n)
    }

    /// The two cells (normal-axis indices) adjacent to face α, wrapped when periodic.
    pub fn adjacent_alpha(&self, alpha: usize) -> Option<(usize, usize)> {
        match self.bc {
            Bc::Periodic => Some(((alpha + self.n - 1) % self.n, alpha)),
            Bc::DirichletZero if alpha == 0 || alpha == self.n => None,
            Bc::DirichletZero => Some((alpha - 1, alpha)),
        }
    }
}

/// Velocity components on faces; component `c` is stored α-major (`α * n + β`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceField {
    pub grid: Grid,
    pub c: [Vec<f64>; 2],
}

impl FaceField {
    pub fn zeros(grid: Grid) -> Self {
        let len = grid.faces_per_component();
        FaceField { grid, c: [vec![0.0; len], vec![0.0; len]] }
    }

    /// Samples `f(component, position)` at every face; boundary faces of a box are left at 0.
    pub fn from_fn(grid: Grid, f: impl Fn(usize, [f64; 2]) -> f64) -> Self {
        let mut out = Self::zeros(grid);
        for c in 0..2 {
            for a in 0..grid.n_alpha() {
                if grid.is_boundary_alpha(a) {
                    continue;
                }
                for b in 0..grid.n {
                    out.c[c][a * grid.n + b] = f(c, grid.face_position(c, a, b));
                }
            }
        }
        out
    }

    pub fn get(&self, c: usize, alpha: usize, beta: usize) -> f64 {
        self.c[c][alpha * self.grid.n + beta]
    }

    pub fn dot(&self, o: &Self) -> f64 {
        self.c.iter().zip(&o.c).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()).sum()
    }

    /// Grid L² norm (h² weights).
    pub fn l2(&self) -> f64 {
        (self.dot(self) * self.grid.h().powi(2)).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.c.iter().flatten().fold(0.0f64, |a, &v| a.max(v.abs()))
    }

    pub fn scale(&mut self, s: f64) {
        self.c.iter_mut().flatten().for_each(|v| *v *= s);
    }

    pub fn add_scaled(&mut self, a: f64, o: &Self) {
        for (x, y) in self.c.iter_mut().zip(&o.c) {
            for (p, q) in x.iter_mut().zip(y) {
                *p += a * q;
            }
        }
    }

    /// Mean of each component over all face positions.
    pub fn component_means(&self) -> [f64; 2] {
        let len = self.c[0].len() as f64;
        [self.c[0].iter().sum::<f64>() / len, self.c[1].iter().sum::<f64>() / len]
    }

    /// Cell-centred velocity: average of the two faces bounding each cell.
    pub fn cell_average(&self) -> [Vec<f64>; 2] {
        let g = self.grid;
        let n = g.n;
        let mut out = [vec![0.0; n * n], vec![0.0; n * n]];
        for c in 0..2 {
            for a in 0..n {
                let a1 = if g.bc == Bc::Periodic { (a + 1) % n } else { a + 1 };
                for b in 0..n {
                    let v = 0.5 * (self.c[c][a * n + b] + self.c[c][a1 * n + b]);
                    out[c][g.cell_in_frame(c, a, b)] = v;
                }
            }
        }
        out
    }
}

impl Sample for FaceField {
    fn zero_like(&self) -> Self {
        FaceField::zeros(self.grid)
    }
    fn axpy(&mut self, a: f64, x: &Self) {
        self.add_scaled(a, x);
    }
}

/// Per-component difference quotients on the two edge families.
///
/// `nn[c]` holds derivatives along axis `c` at cell centres (`σ * n + β`);
/// `tt[c]` holds derivatives along the other axis at cell corners (`α * n_τ + τ`).
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeField {
    pub grid: Grid,
    pub nn: [Vec<f64>; 2],
    pub tt: [Vec<f64>; 2],
}

impl EdgeField {
    pub fn zeros(grid: Grid) -> Self {
        let nn = grid.n * grid.n;
        let tt = grid.n_alpha() * grid.n_tau();
        EdgeField { grid, nn: [vec![0.0; nn], vec![0.0; nn]], tt: [vec![0.0; tt], vec![0.0; tt]] }
    }

    fn arrays(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.nn.iter().chain(self.tt.iter())
    }

    fn arrays_mut(&mut self) -> impl Iterator<Item = &mut Vec<f64>> {
        self.nn.iter_mut().chain(self.tt.iter_mut())
    }

    pub fn max_abs(&self) -> f64 {
        self.arrays().flatten().fold(0.0f64, |a, &v| a.max(v.abs()))
    }

    /// Multiplies each entry by the matching coefficient.
    pub fn mul_assign(&mut self, k: &EdgeField) {
        for (x, y) in self.arrays_mut().zip(k.arrays()) {
            for (p, q) in x.iter_mut().zip(y) {
                *p *= q;
            }
        }
    }

    /// Scales the four arrays (nn₀, nn₁, tt₀, tt₁) by separate factors.
    pub fn scale_families(&mut self, s: [f64; 4]) {
        for (arr, f) in self.arrays_mut().zip(s) {
            arr.iter_mut().for_each(|v| *v *= f);
        }
    }
}

impl Sample for EdgeField {
    fn zero_like(&self) -> Self {
        EdgeField::zeros(self.grid)
    }
    fn axpy(&mut self, a: f64, x: &Self) {
        for (p, q) in self.arrays_mut().zip(x.arrays()) {
            for (s, v) in p.iter_mut().zip(q) {
                *s += a * v;
            }
        }
    }
}

impl crate::kernels::KernelAction<EdgeField> for [f64; 4] {
    fn apply_add(&self, w: f64, g: &EdgeField, out: &mut EdgeField) {
        for ((o, x), f) in out.arrays_mut().zip(g.arrays()).zip(self) {
            for (p, q) in o.iter_mut().zip(x) {
                *p += w * f * q;
            }
        }
    }
}

/// Velocity on faces and pressure at cell centres.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StaggeredField {
    pub u: FaceField,
    pub p: Vec<f64>,
}

impl StaggeredField {
    pub fn zeros(grid: Grid) -> Self {
        StaggeredField { u: FaceField::zeros(grid), p: vec![0.0; grid.cells()] }
    }

    pub fn grid(&self) -> Grid {
        self.u.grid
    }
}
