//! Cell problems at the pore (z) and crack (y) scales and the effective tensors
//! assembled from them.
//!
//! A tensor acts on velocity gradients ξ ∈ ℝ^{2×2}; entry `(c, axis)` of ξ is stored at
//! flat index `2c + axis`, so every tensor is a 4×4 array.

use nalgebra::Matrix4;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CellMask;
use crate::kernels::{DensityField, Kernel4, Profile};
use crate::stokes::{
    edge_coefficients, edge_grad, edge_grad_adjoint, edge_inner, edge_weights, Bc, Coefficients, EdgeField, FaceField,
    Grid, SolveOptions, SolveReport, StaggeredField, StokesOperator,
};

pub type Tensor4 = [[f64; 4]; 4];

pub const ZERO4: Tensor4 = [[0.0; 4]; 4];

/// `I₂ ⊗ M`: the same matrix acting on the gradient of each velocity component.
pub fn kron_identity(m: [[f64; 2]; 2]) -> Tensor4 {
    let mut t = ZERO4;
    for c in 0..2 {
        for a in 0..2 {
            for b in 0..2 {
                t[2 * c + a][2 * c + b] = m[a][b];
            }
        }
    }
    t
}

pub fn t_scale(t: &Tensor4, s: f64) -> Tensor4 {
    t.map(|r| r.map(|v| v * s))
}

pub fn t_add(a: &Tensor4, b: &Tensor4) -> Tensor4 {
    let mut o = *a;
    for i in 0..4 {
        for j in 0..4 {
            o[i][j] += b[i][j];
        }
    }
    o
}

pub fn t_max_diff(a: &Tensor4, b: &Tensor4) -> f64 {
    let mut m = 0.0f64;
    for i in 0..4 {
        for j in 0..4 {
            m = m.max((a[i][j] - b[i][j]).abs());
        }
    }
    m
}

pub fn asymmetry(t: &Tensor4) -> f64 {
    let mut m = 0.0f64;
    for i in 0..4 {
        for j in 0..4 {
            m = m.max((t[i][j] - t[j][i]).abs());
        }
    }
    m
}

/// Smallest eigenvalue of the symmetric part.
pub fn eigmin(t: &Tensor4) -> f64 {
    let m = Matrix4::from_fn(|i, j| 0.5 * (t[i][j] + t[j][i]));
    m.symmetric_eigenvalues().min()
}

/// Largest entry left out when only the diagonal acts (the solver is orthotropic).
pub fn off_diagonal(t: &Tensor4) -> f64 {
    let mut m = 0.0f64;
    for i in 0..4 {
        for j in 0..4 {
            if i != j {
                m = m.max(t[i][j].abs());
            }
        }
    }
    m
}

fn diag_coefficients(t: &Tensor4) -> [[f64; 2]; 2] {
    [[t[0][0], t[1][1]], [t[2][2], t[3][3]]]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Z,
    Y,
}

/// Which part of the cell carries the flow being homogenized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// Complement of the marked region (the marked region is excluded).
    Skeleton,
    /// The marked region itself.
    Fluid,
}

#[derive(Clone, Debug, Serialize)]
pub struct CorrectorSolution {
    pub level: Level,
    pub direction: (usize, usize),
    pub field: StaggeredField,
    /// Row `b` of column ξ: the flux tested against the unit direction `b`.
    pub flux: [[f64; 2]; 2],
    pub report: SolveReport,
}

/// Bilinear data of one cell: the A-type coefficient that defines the correctors and a
/// memory coefficient that is tested through the same corrector map.
pub struct CellProblem {
    level: Level,
    op: StokesOperator,
    k0: EdgeField,
    k1: EdgeField,
    w: EdgeField,
    q0: Tensor4,
    q1: Tensor4,
    dropped: f64,
    opts: SolveOptions,
}

/// Solved correctors for the four unit directions and the resulting flux tensors.
#[derive(Clone, Debug, Serialize)]
pub struct CellSolution {
    pub flux0: Tensor4,
    pub flux1: Tensor4,
    pub correctors: Vec<CorrectorSolution>,
    /// Max-norm of the corrector gradients.
    pub max_grad: f64,
    pub dropped_offdiag: f64,
    pub iterations: usize,
    pub max_divergence: f64,
}

fn unit_edge(grid: Grid, a: usize) -> EdgeField {
    let (c, ax) = (a / 2, a % 2);
    let mut e = EdgeField::zeros(grid);
    if ax == c {
        e.nn[c].iter_mut().for_each(|v| *v = 1.0);
    } else {
        e.tt[c].iter_mut().for_each(|v| *v = 1.0);
    }
    e
}

fn mul(a: &EdgeField, b: &EdgeField) -> EdgeField {
    let mut o = a.clone();
    o.mul_assign(b);
    o
}

impl CellProblem {
    /// `t0(y)` and `t1(y)` give the tensors at cell centres; `region` marks the cells that
    /// carry flow (all others are excluded).
    pub fn new(
        level: Level,
        region: &CellMask,
        t0: impl Fn([f64; 2]) -> Tensor4,
        t1: impl Fn([f64; 2]) -> Tensor4,
        opts: SolveOptions,
    ) -> Result<Self> {
        let n = region.resolution();
        let grid = Grid::new(n, Bc::Periodic)?;
        let h2 = grid.h().powi(2);
        let (mut q0, mut q1) = (ZERO4, ZERO4);
        let mut dropped = 0.0f64;
        let mut d0 = vec![[[0.0; 2]; 2]; n * n];
        let mut d1 = d0.clone();
        for i in 0..n {
            for j in 0..n {
                let y = [(i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64];
                let (a, b) = (t0(y), t1(y));
                d0[i * n + j] = diag_coefficients(&a);
                d1[i * n + j] = diag_coefficients(&b);
                if region.cells()[i * n + j] {
                    q0 = t_add(&q0, &t_scale(&a, h2));
                    q1 = t_add(&q1, &t_scale(&b, h2));
                    dropped = dropped.max(off_diagonal(&a)).max(off_diagonal(&b));
                }
            }
        }
        let c0 = Coefficients::from_fn(n, |i, j| d0[i * n + j]);
        let c1 = Coefficients::from_fn(n, |i, j| d1[i * n + j]);
        let op = StokesOperator::new(grid, &c0, None, Some(region.cells()))?;
        let k0 = op.edge_coefficients().clone();
        let k1 = edge_coefficients(grid, &c1)?;
        Ok(CellProblem { level, op, k0, k1, w: edge_weights(grid), q0, q1, dropped, opts })
    }

    pub fn grid(&self) -> Grid {
        self.op.grid()
    }

    pub fn operator(&self) -> &StokesOperator {
        &self.op
    }

    /// Right-hand side `−Dᵀ(k₀ Ξ)` of the corrector equation.
    pub fn corrector_rhs(&self, xi: [f64; 4]) -> FaceField {
        let g = self.grid();
        let mut e = EdgeField::zeros(g);
        for (a, &x) in xi.iter().enumerate() {
            if x != 0.0 {
                let u = unit_edge(g, a);
                crate::kernels::Sample::axpy(&mut e, x, &u);
            }
        }
        e.mul_assign(&self.k0);
        let mut rhs = edge_grad_adjoint(&e);
        rhs.scale(-1.0);
        rhs
    }

    /// Corrector for the direction `xi` (flat index `2c + axis`).
    pub fn corrector(&self, xi: [f64; 4]) -> Result<(StaggeredField, SolveReport)> {
        self.op.solve(&self.corrector_rhs(xi), None, self.opts)
    }

    fn flux(&self, k: &EdgeField, q: &Tensor4, du: &[EdgeField]) -> Tensor4 {
        let g = self.grid();
        let units: Vec<EdgeField> = (0..4).map(|a| mul(&unit_edge(g, a), k)).collect();
        let kdu: Vec<EdgeField> = du.iter().map(|d| mul(d, k)).collect();
        let mut t = *q;
        for a in 0..4 {
            for b in 0..4 {
                t[a][b] += edge_inner(&units[a], &du[b], &self.w)
                    + edge_inner(&kdu[a], &unit_edge(g, b), &self.w)
                    + edge_inner(&kdu[a], &du[b], &self.w);
            }
        }
        t
    }

    pub fn solve_all(&self) -> Result<CellSolution> {
        let sols: Vec<(StaggeredField, SolveReport)> = (0..4)
            .into_par_iter()
            .map(|a| {
                let mut xi = [0.0; 4];
                xi[a] = 1.0;
                self.corrector(xi)
            })
            .collect::<Result<_>>()?;
        let du: Vec<EdgeField> = sols.iter().map(|(s, _)| edge_grad(&s.u)).collect();
        let flux0 = self.flux(&self.k0, &self.q0, &du);
        let flux1 = self.flux(&self.k1, &self.q1, &du);
        let max_grad = du.iter().fold(0.0f64, |m, d| m.max(d.max_abs()));
        let iterations = sols.iter().map(|(_, r)| r.iterations).sum();
        let max_divergence = sols.iter().fold(0.0f64, |m, (_, r)| m.max(r.divergence));
        let correctors = sols
            .into_iter()
            .enumerate()
            .map(|(a, (field, report))| {
                let f = flux0[a];
                CorrectorSolution {
                    level: self.level,
                    direction: (a / 2, a % 2),
                    field,
                    flux: [[f[0], f[1]], [f[2], f[3]]],
                    report,
                }
            })
            .collect();
        Ok(CellSolution { flux0, flux1, correctors, max_grad, dropped_offdiag: self.dropped, iterations, max_divergence })
    }
}

fn region_for(mask: &CellMask, branch: Branch) -> CellMask {
    match branch {
        Branch::Skeleton => mask.complement(),
        Branch::Fluid => mask.clone(),
    }
}

fn unsupported_offdiag(k: &Kernel4, name: &str) -> Result<()> {
    if k.matrix[0][1].abs() > 0.0 || k.matrix[1][0].abs() > 0.0 {
        return Err(Error::Unsupported(format!(
            "kernel {name} has off-diagonal entries; the staggered solver is orthotropic"
        )));
    }
    Ok(())
}

fn z_tensor(k: &Kernel4) -> impl Fn([f64; 2]) -> Tensor4 + '_ {
    move |z| t_scale(&kron_identity(k.matrix), k.z.map_or(1.0, |p| p.eval(z)))
}

fn xi_index(xi: [[f64; 2]; 2]) -> [f64; 4] {
    [xi[0][0], xi[0][1], xi[1][0], xi[1][1]]
}

/// Pore-scale corrector for one direction, with `a0` frozen at unit y/t/τ factors.
pub fn solve_cell_z(
    xi: [[f64; 2]; 2],
    a0: &Kernel4,
    z_mask: &CellMask,
    branch: Branch,
    opts: SolveOptions,
) -> Result<CorrectorSolution> {
    unsupported_offdiag(a0, "A0")?;
    let region = region_for(z_mask, branch);
    let cp = CellProblem::new(Level::Z, &region, z_tensor(a0), |_| ZERO4, opts)?;
    single_direction(&cp, xi)
}

fn single_direction(cp: &CellProblem, xi: [[f64; 2]; 2]) -> Result<CorrectorSolution> {
    let v = xi_index(xi);
    let (field, report) = cp.corrector(v)?;
    let sol = cp.solve_all()?;
    let mut flux = [[0.0; 2]; 2];
    for b in 0..4 {
        flux[b / 2][b % 2] = (0..4).map(|a| v[a] * sol.flux0[a][b]).sum();
    }
    let direction = (0..4).find(|&a| v[a] != 0.0).map_or((0, 0), |a| (a / 2, a % 2));
    Ok(CorrectorSolution { level: cp.level, direction, field, flux, report })
}

/// Pore-scale tensors of the skeleton: `C₀ = T(A₀)` and the memory tensor `C₁` tested
/// through the A₀ correctors, both per unit y/t/τ factor.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CTensors {
    pub c0: Tensor4,
    pub c1: Tensor4,
    pub grad_z_max: f64,
    pub iterations: usize,
}

pub fn assemble_c(a0: &Kernel4, a1: &Kernel4, z_mask: Option<&CellMask>, branch: Branch, opts: SolveOptions) -> Result<CTensors> {
    unsupported_offdiag(a0, "A0")?;
    unsupported_offdiag(a1, "A1")?;
    let Some(z) = z_mask else {
        return Ok(match branch {
            Branch::Skeleton => {
                CTensors { c0: kron_identity(a0.matrix), c1: kron_identity(a1.matrix), grad_z_max: 0.0, iterations: 0 }
            }
            Branch::Fluid => CTensors { c0: ZERO4, c1: ZERO4, grad_z_max: 0.0, iterations: 0 },
        });
    };
    let region = region_for(z, branch);
    let cp = CellProblem::new(Level::Z, &region, z_tensor(a0), z_tensor(a1), opts)?;
    let s = cp.solve_all()?;
    Ok(CTensors { c0: s.flux0, c1: s.flux1, grad_z_max: s.max_grad, iterations: s.iterations })
}

/// Crack-scale coefficient `C(y) = p(y) · base` for the defining and the memory tensor.
#[derive(Clone, Copy, Debug)]
pub struct YCoefficient {
    pub base0: Tensor4,
    pub profile0: Profile,
    pub base1: Tensor4,
    pub profile1: Profile,
}

fn y_problem(coef: &YCoefficient, y_mask: &CellMask, branch: Branch, opts: SolveOptions) -> Result<CellProblem> {
    let region = region_for(y_mask, branch);
    CellProblem::new(
        Level::Y,
        &region,
        |y| t_scale(&coef.base0, coef.profile0.eval(y)),
        |y| t_scale(&coef.base1, coef.profile1.eval(y)),
        opts,
    )
}

/// Crack-scale corrector for one direction.
pub fn solve_cell_y(
    xi: [[f64; 2]; 2],
    coef: &YCoefficient,
    y_mask: &CellMask,
    branch: Branch,
    opts: SolveOptions,
) -> Result<CorrectorSolution> {
    single_direction(&y_problem(coef, y_mask, branch, opts)?, xi)
}

/// Effective tensors per unit slow-time and τ factor.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DETensors {
    pub d0: Tensor4,
    pub d1: Tensor4,
    pub e0: Tensor4,
    pub e1: Tensor4,
    pub dropped_offdiag: f64,
    pub iterations: usize,
    pub max_divergence: f64,
}

/// A vanishing pore-scale tensor (no skeleton left in Z) carries no crack-scale flow.
fn y_branch(coef: &YCoefficient, y_mask: &CellMask, branch: Branch, opts: SolveOptions) -> Result<CellSolution> {
    if coef.base0 == ZERO4 {
        if coef.base1 != ZERO4 {
            return Err(Error::contract("memory tensor without a defining tensor on the same branch"));
        }
        return Ok(CellSolution {
            flux0: ZERO4,
            flux1: ZERO4,
            correctors: Vec::new(),
            max_grad: 0.0,
            dropped_offdiag: 0.0,
            iterations: 0,
            max_divergence: 0.0,
        });
    }
    y_problem(coef, y_mask, branch, opts)?.solve_all()
}

/// Crack-scale assembly. `skeleton` holds the pore-scale C tensors of A, `pores` those of B
/// on the pore space and `cracks` the B tensors of a pore-free cell.
pub fn assemble_d_e(
    kernels: &KernelSet,
    skeleton: &CTensors,
    cracks: &CTensors,
    pores: &CTensors,
    y_mask: &CellMask,
    opts: SolveOptions,
) -> Result<DETensors> {
    let ya = YCoefficient { base0: skeleton.c0, profile0: kernels.a0.y, base1: skeleton.c1, profile1: kernels.a1.y };
    let yb = YCoefficient { base0: cracks.c0, profile0: kernels.b0.y, base1: cracks.c1, profile1: kernels.b1.y };
    let sk = y_branch(&ya, y_mask, Branch::Skeleton, opts)?;
    let fl = y_branch(&yb, y_mask, Branch::Fluid, opts)?;
    // pores inside the blocks carry B with no crack-scale corrector
    let n = y_mask.resolution();
    let h2 = 1.0 / (n * n) as f64;
    let (mut w0, mut w1) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            if !y_mask.cells()[i * n + j] {
                let y = [(i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64];
                w0 += kernels.b0.y.eval(y) * h2;
                w1 += kernels.b1.y.eval(y) * h2;
            }
        }
    }
    Ok(DETensors {
        d0: sk.flux0,
        d1: sk.flux1,
        e0: t_add(&fl.flux0, &t_scale(&pores.c0, w0)),
        e1: t_add(&fl.flux1, &t_scale(&pores.c1, w1)),
        dropped_offdiag: sk.dropped_offdiag.max(fl.dropped_offdiag),
        iterations: sk.iterations + fl.iterations,
        max_divergence: sk.max_divergence.max(fl.max_divergence),
    })
}

/// ρ = ∬(χ₁ρ₁ + χ₂ρ₂) dy dz by midpoint quadrature on the crack mask.
pub fn effective_density(rho1: &DensityField, rho2: &DensityField, y_mask: &CellMask, m_p: f64) -> f64 {
    let [a, b] = density_parts(rho1, rho2, y_mask, m_p);
    a + b
}

/// The two summands `∬χ₁ρ₁` and `∬χ₂ρ₂` separately.
pub fn density_parts(rho1: &DensityField, rho2: &DensityField, y_mask: &CellMask, m_p: f64) -> [f64; 2] {
    let n = y_mask.resolution();
    let (mut s1, mut s2) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let y = [(i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64];
            let (r1, r2) = (rho1.value([0.0; 2], y), rho2.value([0.0; 2], y));
            if y_mask.cells()[i * n + j] {
                s2 += r2;
            } else {
                s1 += (1.0 - m_p) * r1;
                s2 += m_p * r2;
            }
        }
    }
    let w = (n * n) as f64;
    [s1 / w, s2 / w]
}

/// The four coefficient and memory kernels of the two phases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSet {
    pub a0: Kernel4,
    pub a1: Kernel4,
    pub b0: Kernel4,
    pub b1: Kernel4,
}

impl KernelSet {
    pub fn validate(&self) -> Result<()> {
        for (k, name) in [(&self.a0, "A0"), (&self.a1, "A1"), (&self.b0, "B0"), (&self.b1, "B1")] {
            k.validate().map_err(|e| e.at_stage(name))?;
        }
        if self.a0.alpha <= 0.0 || self.b0.alpha <= 0.0 {
            return Err(Error::validation("A0 and B0 need a positive coercivity constant"));
        }
        Ok(())
    }

    /// Coercivity constant of the index-0 pair.
    pub fn alpha(&self) -> f64 {
        self.a0.alpha.min(self.b0.alpha)
    }
}

/// Cell geometry, kernels and densities for one homogenization.
#[derive(Clone, Debug)]
pub struct CellSetup {
    pub kernels: KernelSet,
    pub rho1: DensityField,
    pub rho2: DensityField,
    pub y_mask: CellMask,
    /// `None` drops the pore scale.
    pub z_mask: Option<CellMask>,
    pub n_tau: usize,
    pub opts: SolveOptions,
}

/// Midpoint mean of the τ factor.
pub fn tau_mean(k: &Kernel4, n_tau: usize) -> f64 {
    (0..n_tau).map(|j| k.tau.eval1((j as f64 + 0.5) / n_tau as f64)).sum::<f64>() / n_tau as f64
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct CellDiagnostics {
    pub grad_z_max: f64,
    pub dropped_offdiag: f64,
    pub iterations: usize,
    pub max_divergence: f64,
}

/// The homogenized data set: tensors sampled at the slow times `k·dt`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EffectiveModel {
    pub m_c: f64,
    pub m_p: f64,
    pub rho: f64,
    /// `∬χ₁ρ₁` and `∬χ₂ρ₂`, the weights of the two phase forces.
    pub rho_parts: [f64; 2],
    pub lambda: f64,
    pub alpha: f64,
    pub dt: f64,
    pub times: Vec<f64>,
    /// 𝒜₀ at each time.
    pub a0: Vec<Tensor4>,
    /// 𝒜₁ at each lag.
    pub a1: Vec<Tensor4>,
    pub c0: Tensor4,
    pub c1: Tensor4,
    pub d0: Vec<Tensor4>,
    pub d1: Vec<Tensor4>,
    pub e0: Vec<Tensor4>,
    pub e1: Vec<Tensor4>,
    pub diagnostics: CellDiagnostics,
}

/// Verdicts of the symmetry, coercivity and density-bound checks.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EffectiveCheck {
    pub asymmetry_a0: f64,
    pub asymmetry_a1: f64,
    pub eigmin_a0: f64,
    pub alpha: f64,
    pub rho: f64,
    pub lambda: f64,
    pub decomposition_defect: f64,
    pub symmetric: bool,
    pub coercive: bool,
    pub density_bounded: bool,
    pub passed: bool,
}

impl EffectiveModel {
    pub fn check(&self) -> EffectiveCheck {
        let asymmetry_a0 = self.a0.iter().map(asymmetry).fold(0.0, f64::max);
        let asymmetry_a1 = self.a1.iter().map(asymmetry).fold(0.0, f64::max);
        let eigmin_a0 = self.a0.iter().map(eigmin).fold(f64::INFINITY, f64::min);
        let mut decomposition_defect = 0.0f64;
        for k in 0..self.a0.len() {
            decomposition_defect = decomposition_defect
                .max(t_max_diff(&self.a0[k], &t_add(&self.d0[k], &self.e0[k])))
                .max(t_max_diff(&self.a1[k], &t_add(&self.d1[k], &self.e1[k])));
        }
        let symmetric = asymmetry_a0 <= 1e-10 && asymmetry_a1 <= 1e-10;
        let coercive = eigmin_a0 >= self.alpha - 1e-8;
        let density_bounded = self.rho >= 1.0 / self.lambda - 1e-12 && self.rho <= self.lambda + 1e-12;
        EffectiveCheck {
            asymmetry_a0,
            asymmetry_a1,
            eigmin_a0,
            alpha: self.alpha,
            rho: self.rho,
            lambda: self.lambda,
            decomposition_defect,
            symmetric,
            coercive,
            density_bounded,
            passed: symmetric && coercive && density_bounded && decomposition_defect == 0.0,
        }
    }

    /// Orthotropic viscosity `k[c][axis]` seen by the macro solver at step `k`.
    pub fn macro_viscosity(&self, k: usize) -> [[f64; 2]; 2] {
        diag_coefficients(&self.a0[k.min(self.a0.len() - 1)])
    }

    /// Memory kernel samples for the four edge families (nn₀, nn₁, tt₀, tt₁).
    pub fn memory_samples(&self) -> Vec<[f64; 4]> {
        self.a1.iter().map(|t| [t[0][0], t[3][3], t[1][1], t[2][2]]).collect()
    }

    /// Largest tensor entry the orthotropic macro solver cannot represent.
    pub fn dropped_cross_norm(&self) -> f64 {
        self.a0.iter().chain(&self.a1).map(off_diagonal).fold(0.0, f64::max)
    }

    pub fn is_memoryless(&self) -> bool {
        self.a1.iter().all(|t| t.iter().flatten().all(|&v| v == 0.0))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }
}

/// Full assembly chain: pore-scale, crack-scale, slow-time sampling, density.
pub fn homogenize(setup: &CellSetup, dt: f64, steps: usize) -> Result<EffectiveModel> {
    let ks = &setup.kernels;
    ks.validate()?;
    setup.rho1.validate()?;
    setup.rho2.validate()?;
    if !(dt > 0.0) || setup.n_tau == 0 {
        return Err(Error::validation("time step and τ node count must be positive"));
    }
    let opts = setup.opts;
    let z = setup.z_mask.as_ref();
    let m_c = setup.y_mask.measure();
    let m_p = z.map_or(0.0, |m| m.measure());
    let stage = |s: &'static str| move |e: Error| e.at_stage(s);
    let skeleton = assemble_c(&ks.a0, &ks.a1, z, Branch::Skeleton, opts).map_err(stage("pore cell (skeleton)"))?;
    let pores = assemble_c(&ks.b0, &ks.b1, z, Branch::Fluid, opts).map_err(stage("pore cell (pores)"))?;
    let cracks = match z {
        Some(zm) => {
            let full = CellMask::empty(zm.resolution());
            assemble_c(&ks.b0, &ks.b1, Some(&full), Branch::Skeleton, opts).map_err(stage("pore cell (cracks)"))?
        }
        None => assemble_c(&ks.b0, &ks.b1, None, Branch::Skeleton, opts)?,
    };
    let de = assemble_d_e(ks, &skeleton, &cracks, &pores, &setup.y_mask, opts).map_err(stage("crack cell"))?;
    let nt = setup.n_tau;
    let (ta0, ta1, tb0, tb1) = (tau_mean(&ks.a0, nt), tau_mean(&ks.a1, nt), tau_mean(&ks.b0, nt), tau_mean(&ks.b1, nt));
    let times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
    let d0: Vec<Tensor4> = times.iter().map(|&t| t_scale(&de.d0, ks.a0.time.eval(t) * ta0)).collect();
    let e0: Vec<Tensor4> = times.iter().map(|&t| t_scale(&de.e0, ks.b0.time.eval(t) * tb0)).collect();
    let d1: Vec<Tensor4> = times.iter().map(|&t| t_scale(&de.d1, ks.a1.time.eval(t) * ta1)).collect();
    let e1: Vec<Tensor4> = times.iter().map(|&t| t_scale(&de.e1, ks.b1.time.eval(t) * tb1)).collect();
    let a0 = d0.iter().zip(&e0).map(|(a, b)| t_add(a, b)).collect();
    let a1 = d1.iter().zip(&e1).map(|(a, b)| t_add(a, b)).collect();
    let rho_parts = density_parts(&setup.rho1, &setup.rho2, &setup.y_mask, m_p);
    Ok(EffectiveModel {
        m_c,
        m_p,
        rho: rho_parts[0] + rho_parts[1],
        rho_parts,
        lambda: setup.rho1.lambda.max(setup.rho2.lambda),
        alpha: ks.alpha(),
        dt,
        times,
        a0,
        a1,
        c0: skeleton.c0,
        c1: skeleton.c1,
        d0,
        d1,
        e0,
        e1,
        diagnostics: CellDiagnostics {
            grad_z_max: skeleton.grad_z_max.max(pores.grad_z_max).max(cracks.grad_z_max),
            dropped_offdiag: de.dropped_offdiag,
            iterations: skeleton.iterations + pores.iterations + cracks.iterations + de.iterations,
            max_divergence: de.max_divergence,
        },
    })
}

/// Crack-scale cell problem with the memory kept inside the corrector equation:
/// at each time `t_n` the corrector solves
/// `Σ [C₀(ξ + ∇u_n) + Σ_j w_nj κ(t_n − t_j) C₁(ξ + ∇u_j)]·∇w = 0`.
///
/// Returns the total flux tensors `F_n` (memoryless part plus history) at each step.
pub fn coupled_memory_fluxes(
    coef: &YCoefficient,
    kappa: &[f64],
    dt: f64,
    y_mask: &CellMask,
    branch: Branch,
    opts: SolveOptions,
) -> Result<Vec<Tensor4>> {
    let steps = kappa.len();
    if steps == 0 {
        return Ok(Vec::new());
    }
    let base = y_problem(coef, y_mask, branch, opts)?;
    let g = base.grid();
    let region = region_for(y_mask, branch);
    // implicit trapezoid endpoint folded into the operator
    let shift = 0.5 * dt * kappa[0];
    let n = g.n;
    let mut d = vec![[[0.0; 2]; 2]; n * n];
    for i in 0..n {
        for j in 0..n {
            let y = [(i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64];
            let t = t_add(&t_scale(&coef.base0, coef.profile0.eval(y)), &t_scale(&coef.base1, shift * coef.profile1.eval(y)));
            d[i * n + j] = diag_coefficients(&t);
        }
    }
    let op = StokesOperator::new(g, &Coefficients::from_fn(n, |i, j| d[i * n + j]), None, Some(region.cells()))?;
    let keff = op.edge_coefficients();
    let units: Vec<EdgeField> = (0..4).map(|a| unit_edge(g, a)).collect();
    let mut hist: Vec<Vec<EdgeField>> = vec![Vec::new(); 4];
    let mut out = Vec::with_capacity(steps);
    for step in 0..steps {
        let mut total = ZERO4;
        for a in 0..4 {
            // strain ξ + ∇u_j for j < step, weighted by the memory kernel
            let mut h = EdgeField::zeros(g);
            for (jj, s) in hist[a].iter().enumerate() {
                let w = if jj == 0 { 0.5 * dt } else { dt };
                crate::kernels::Sample::axpy(&mut h, w * kappa[step - jj], s);
            }
            h.mul_assign(&base.k1);
            // no history yet at t = 0
            let (opn, kn) = if step == 0 { (&base.op, &base.k0) } else { (&op, keff) };
            let mut drive = mul(&units[a], kn);
            crate::kernels::Sample::axpy(&mut drive, 1.0, &h);
            let mut rhs = edge_grad_adjoint(&drive);
            rhs.scale(-1.0);
            let (sol, _) = opn.solve(&rhs, None, opts)?;
            let mut strain = edge_grad(&sol.u);
            crate::kernels::Sample::axpy(&mut strain, 1.0, &units[a]);
            let du = edge_grad(&sol.u);
            let kdu0 = mul(&du, &base.k0);
            for b in 0..4 {
                let mut f = base.q0[a][b] + edge_inner(&kdu0, &units[b], &base.w);
                // history including the endpoint j = step
                for (jj, s) in hist[a].iter().chain(std::iter::once(&strain)).enumerate() {
                    if step == 0 {
                        break;
                    }
                    let w = if jj == 0 || jj == step { 0.5 * dt } else { dt };
                    let mut dj = s.clone();
                    crate::kernels::Sample::axpy(&mut dj, -1.0, &units[a]);
                    let k1du = mul(&dj, &base.k1);
                    f += w * kappa[step - jj] * (base.q1[a][b] + edge_inner(&k1du, &units[b], &base.w));
                }
                total[a][b] = f;
            }
            hist[a].push(strain);
        }
        out.push(total);
    }
    Ok(out)
}

/// The same fluxes from the averaged (memoryless-corrector) tensors.
pub fn averaged_memory_fluxes(
    coef: &YCoefficient,
    kappa: &[f64],
    dt: f64,
    y_mask: &CellMask,
    branch: Branch,
    opts: SolveOptions,
) -> Result<Vec<Tensor4>> {
    let s = y_problem(coef, y_mask, branch, opts)?.solve_all()?;
    Ok((0..kappa.len())
        .map(|step| {
            let mut t = s.flux0;
            if step > 0 {
                let w: f64 = (0..=step).map(|j| if j == 0 || j == step { 0.5 * dt } else { dt } * kappa[step - j]).sum();
                t = t_add(&t, &t_scale(&s.flux1, w));
            }
            t
        })
        .collect())
}

/// Projects a face field onto the span of the four corrector directions of a solved cell.
pub fn corrector_combination(sol: &CellSolution, xi: [f64; 4]) -> FaceField {
    let g = sol.correctors[0].field.grid();
    let mut u = FaceField::zeros(g);
    for (a, c) in sol.correctors.iter().enumerate() {
        u.add_scaled(xi[a], &c.field.u);
    }
    u
}
