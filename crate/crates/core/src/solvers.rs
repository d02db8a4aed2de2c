//! Time stepping of the ε-scale system (one global velocity field) and of the
//! homogenized nonlocal system, with energy diagnostics and weak-limit comparisons.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::geometry::DomainMasks;
use crate::homogenize::{EffectiveModel, KernelSet};
use crate::kernels::{frac, volterra_convolve, DensityField, GradientHistory, Sample};
use crate::stokes::{
    edge_coefficients, edge_grad, edge_grad_adjoint, face_average, grad_norm_sq, Bc, Coefficients, EdgeField,
    FaceField, Grid, SolveOptions, StaggeredField, StokesOperator,
};

/// Body force presets `f(x, t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Force {
    Zero,
    Constant { value: [f64; 2] },
    /// `amp · (x₂ − ½, −(x₁ − ½))`, a solenoidal stirring force.
    Rotation { amp: f64 },
}

impl Force {
    pub fn eval(&self, x: [f64; 2], _t: f64) -> [f64; 2] {
        match *self {
            Force::Zero => [0.0; 2],
            Force::Constant { value } => value,
            Force::Rotation { amp } => [amp * (x[1] - 0.5), -amp * (x[0] - 0.5)],
        }
    }

    pub fn faces(&self, grid: Grid, t: f64) -> FaceField {
        FaceField::from_fn(grid, |c, p| self.eval(p, t)[c])
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Force::Zero) || matches!(self, Force::Constant { value } if *value == [0.0; 2])
            || matches!(self, Force::Rotation { amp } if *amp == 0.0)
    }
}

/// Additional forcing `(x, t) ↦ 𝐟` given in code, e.g. for manufactured solutions.
#[derive(Clone)]
pub struct CustomForce(pub std::sync::Arc<dyn Fn([f64; 2], f64) -> [f64; 2] + Send + Sync>);

impl std::fmt::Debug for CustomForce {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("CustomForce(..)")
    }
}

/// Divergence-free initial data presets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialField {
    Zero,
    /// Discrete curl of `ψ = amp · sin²(πx₁) sin²(πx₂)`.
    Vortex { amp: f64 },
}

impl InitialField {
    pub fn faces(&self, grid: Grid) -> FaceField {
        match *self {
            InitialField::Zero => FaceField::zeros(grid),
            InitialField::Vortex { amp } => {
                let h = grid.h();
                let psi = |a: usize, b: usize| {
                    let (x, y) = (a as f64 * h, b as f64 * h);
                    amp * ((std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).sin()).powi(2)
                };
                let n = grid.n;
                let mut u = FaceField::zeros(grid);
                for a in 0..grid.n_alpha() {
                    for b in 0..n {
                        u.c[0][a * n + b] = (psi(a, b + 1) - psi(a, b)) / h;
                        u.c[1][a * n + b] = -(psi(b + 1, a) - psi(b, a)) / h;
                    }
                }
                if grid.bc == Bc::DirichletZero {
                    for b in 0..n {
                        for c in 0..2 {
                            u.c[c][b] = 0.0;
                            u.c[c][n * n + b] = 0.0;
                        }
                    }
                }
                u
            }
        }
    }
}

/// Post-processed output of one run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    /// ‖√ρ u(t_k)‖².
    pub kinetic: Vec<f64>,
    /// ‖∇u(t_k)‖².
    pub dissipation: Vec<f64>,
    pub divergence: Vec<f64>,
    pub iterations: Vec<usize>,
    /// Σ dt ‖√ρ f(t_k)‖² accumulated over the steps.
    pub force_work: f64,
    /// Bound on the memory kernels' norm over all lags.
    pub kernel_bound: f64,
    pub alpha: f64,
    pub terminal: StaggeredField,
    #[serde(skip)]
    pub snapshots: Vec<(usize, FaceField)>,
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl Trajectory {
    pub fn max_divergence(&self) -> f64 {
        self.divergence.iter().cloned().fold(0.0, f64::max)
    }

    /// Per-step scalars as CSV; no timing columns so output is reproducible.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,t,kinetic,dissipation,divergence,iterations\n");
        for k in 0..self.times.len() {
            let _ = writeln!(
                s,
                "{k},{:.6e},{:.12e},{:.12e},{:.3e},{}",
                self.times[k], self.kinetic[k], self.dissipation[k], self.divergence[k], self.iterations[k]
            );
        }
        s
    }
}

/// Cell-averaged velocity as a whitespace-separated text grid, one row per `x₂` line.
pub fn field_to_text(u: &FaceField) -> String {
    let g = u.grid;
    let cells = u.cell_average();
    let mut s = String::new();
    for j in (0..g.n).rev() {
        let row: Vec<String> =
            (0..g.n).map(|i| format!("{:.6e},{:.6e}", cells[0][g.cell(i, j)], cells[1][g.cell(i, j)])).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

/// Memory contribution `spatial ⊙ (κ ∗ ∇u)` with per-family kernel samples.
struct MemoryTerm {
    spatial: EdgeField,
    kernel: Vec<[f64; 4]>,
}

struct Stepper<'a> {
    grid: Grid,
    rho: Vec<f64>,
    rho_face: FaceField,
    dt: f64,
    steps: usize,
    opts: SolveOptions,
    coef: &'a dyn Fn(f64) -> Coefficients,
    time_dependent: bool,
    memory: Vec<MemoryTerm>,
    force: &'a dyn Fn(f64) -> FaceField,
    snapshot_every: usize,
}

fn weighted_sq(u: &FaceField, w: &FaceField) -> f64 {
    let h2 = u.grid.h().powi(2);
    (0..2).map(|c| u.c[c].iter().zip(&w.c[c]).map(|(a, r)| r * a * a).sum::<f64>()).sum::<f64>() * h2
}

impl Stepper<'_> {
    fn operator(&self, t: f64) -> Result<StokesOperator> {
        let mass: Vec<f64> = self.rho.iter().map(|r| r / self.dt).collect();
        StokesOperator::new(self.grid, &(self.coef)(t), Some(&mass), None)
    }

    fn run(&self, u0: FaceField, alpha: f64) -> Result<Trajectory> {
        let t0 = Instant::now();
        let g = self.grid;
        let dt = self.dt;
        let mut op = self.operator(dt)?;
        let mut u = u0;
        let with_memory = !self.memory.is_empty();
        let mut history = GradientHistory::new(dt);
        if with_memory {
            history.push(edge_grad(&u));
        }
        let mut out = Trajectory {
            dt,
            times: vec![0.0],
            kinetic: vec![weighted_sq(&u, &self.rho_face)],
            dissipation: vec![grad_norm_sq(&u)],
            divergence: vec![op.div(&u).iter().fold(0.0f64, |a, v| a.max(v.abs()))],
            iterations: vec![0],
            force_work: 0.0,
            kernel_bound: self
                .memory
                .iter()
                .map(|m| m.spatial.max_abs() * m.kernel.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs())))
                .sum(),
            alpha,
            terminal: StaggeredField::zeros(g),
            snapshots: vec![(0, u.clone())],
            wall_time_s: 0.0,
        };
        let mut p = vec![0.0; g.cells()];
        let inv_rho = self.rho_face.clone().inverse_or_zero();
        for n in 1..=self.steps {
            let t = n as f64 * dt;
            if self.time_dependent && n > 1 {
                op = self.operator(t)?;
            }
            let f = (self.force)(t);
            out.force_work += dt * weighted_sq(&f, &inv_rho);
            let mut rhs = f;
            for c in 0..2 {
                for ((r, v), m) in rhs.c[c].iter_mut().zip(&u.c[c]).zip(&self.rho_face.c[c]) {
                    *r += m / dt * v;
                }
            }
            if with_memory {
                let mut mem = EdgeField::zeros(g);
                for term in &self.memory {
                    let mut m = volterra_convolve(&term.kernel, &history, n - 1)?;
                    m.mul_assign(&term.spatial);
                    mem.axpy(1.0, &m);
                }
                rhs.add_scaled(-1.0, &edge_grad_adjoint(&mem));
            }
            let (sol, rep) = op.solve(&rhs, Some(&u), self.opts).map_err(|e| Error::AtStep { step: n, source: Box::new(e) })?;
            u = sol.u;
            p = sol.p;
            if with_memory {
                history.push(edge_grad(&u));
            }
            out.times.push(t);
            out.kinetic.push(weighted_sq(&u, &self.rho_face));
            out.dissipation.push(grad_norm_sq(&u));
            out.divergence.push(rep.divergence);
            out.iterations.push(rep.iterations);
            if self.snapshot_every > 0 && n % self.snapshot_every == 0 {
                out.snapshots.push((n, u.clone()));
            }
        }
        out.terminal = StaggeredField { u, p };
        out.wall_time_s = t0.elapsed().as_secs_f64();
        Ok(out)
    }
}

trait InverseOrZero {
    fn inverse_or_zero(self) -> Self;
}

impl InverseOrZero for FaceField {
    /// The force enters as ρf, so ‖√ρ f‖² = Σ (ρf)²/ρ.
    fn inverse_or_zero(mut self) -> Self {
        self.c.iter_mut().flatten().for_each(|v| *v = if *v > 0.0 { 1.0 / *v } else { 0.0 });
        self
    }
}

/// The ε-scale problem in the single-global-field form.
#[derive(Clone, Debug)]
pub struct MicroProblem {
    pub masks: DomainMasks,
    pub kernels: KernelSet,
    pub rho1: DensityField,
    pub rho2: DensityField,
    pub f1: Force,
    pub f2: Force,
    pub u0: InitialField,
    pub v0: InitialField,
    pub t_end: f64,
    pub steps: usize,
    pub opts: SolveOptions,
    pub snapshot_every: usize,
}

fn check_steps(t_end: f64, steps: usize) -> Result<f64> {
    if !(t_end > 0.0) || steps < 8 {
        return Err(Error::validation(format!("need T > 0 and at least 8 steps (got T = {t_end}, {steps} steps)")));
    }
    if steps > 512 {
        return Err(Error::validation(format!("{steps} steps exceed the history cap of 512")));
    }
    Ok(t_end / steps as f64)
}

fn diag(m: [[f64; 2]; 2]) -> Result<[f64; 2]> {
    if m[0][1] != 0.0 || m[1][0] != 0.0 {
        return Err(Error::Unsupported("off-diagonal kernel entries are not supported by the solver".into()));
    }
    Ok([m[0][0], m[1][1]])
}

impl MicroProblem {
    fn cell_y(&self, k: usize) -> [f64; 2] {
        let n = self.masks.grid_n;
        self.masks.fast_y(k / n, k % n)
    }

    /// Cell density χ₁ρ₁ + χ₂ρ₂ at scale ε.
    pub fn density(&self) -> Vec<f64> {
        (0..self.masks.chi1.len())
            .map(|k| {
                let y = self.cell_y(k);
                if self.masks.chi1[k] {
                    self.rho1.value([0.0; 2], y)
                } else {
                    self.rho2.value([0.0; 2], y)
                }
            })
            .collect()
    }

    pub fn coefficients(&self, t: f64) -> Result<Coefficients> {
        let n = self.masks.grid_n;
        let (ma, mb) = (diag(self.kernels.a0.matrix)?, diag(self.kernels.b0.matrix)?);
        let tau = frac(t / self.masks.epsilon);
        Ok(Coefficients::from_fn(n, |i, j| {
            let k = i * n + j;
            let y = self.masks.fast_y(i, j);
            let (m, f) = if self.masks.chi1[k] {
                (ma, self.kernels.a0.factor(t, y, tau))
            } else {
                (mb, self.kernels.b0.factor(t, y, tau))
            };
            [[m[0] * f, m[1] * f], [m[0] * f, m[1] * f]]
        }))
    }

    /// Initial global field χ₁u⁰ + χ₂v⁰ on faces, projected to be divergence-free.
    pub fn initial_field(&self, grid: Grid, op: &StokesOperator) -> Result<FaceField> {
        let (u, v) = (self.u0.faces(grid), self.v0.faces(grid));
        if u == v {
            return Ok(u);
        }
        let mut chi = vec![0.0; grid.cells()];
        for (k, c) in chi.iter_mut().enumerate() {
            *c = if self.masks.chi1[k] { 1.0 } else { 0.0 };
        }
        let w = face_average(grid, &chi);
        let mut out = FaceField::zeros(grid);
        for c in 0..2 {
            for k in 0..out.c[c].len() {
                out.c[c][k] = w.c[c][k] * u.c[c][k] + (1.0 - w.c[c][k]) * v.c[c][k];
            }
        }
        op.project(&out)
    }
}

pub fn run_micro(problem: &MicroProblem) -> Result<Trajectory> {
    let dt = check_steps(problem.t_end, problem.steps)?;
    problem.kernels.validate()?;
    let m = &problem.masks;
    let grid = Grid::new(m.grid_n, Bc::DirichletZero)?;
    let rho = problem.density();
    let rho_face = face_average(grid, &rho);
    let ks = &problem.kernels;
    let time_dependent = !matches!(ks.a0.time, crate::kernels::TimeProfile::Constant)
        || !matches!(ks.b0.time, crate::kernels::TimeProfile::Constant)
        || !ks.a0.tau.is_constant()
        || !ks.b0.tau.is_constant();
    problem.coefficients(0.0)?;
    let coef = |t: f64| problem.coefficients(t).expect("checked above");
    let mut memory = Vec::new();
    for (k, phase1) in [(&ks.a1, true), (&ks.b1, false)] {
        if k.is_zero() {
            continue;
        }
        let d = diag(k.matrix)?;
        let n = m.grid_n;
        let spatial = Coefficients::from_fn(n, |i, j| {
            let inside = m.chi1[i * n + j] == phase1;
            let f = if inside { k.y.eval(m.fast_y(i, j)) } else { 0.0 };
            [[d[0] * f, d[1] * f], [d[0] * f, d[1] * f]]
        });
        let kernel = (0..=problem.steps)
            .map(|s| {
                let t = s as f64 * dt;
                [k.time.eval(t) * k.tau.eval1(frac(t / m.epsilon)); 4]
            })
            .collect();
        memory.push(MemoryTerm { spatial: edge_coefficients(grid, &spatial)?, kernel });
    }
    let force = |t: f64| {
        let (a, b) = (problem.f1.faces(grid, t), problem.f2.faces(grid, t));
        let mut chi = vec![0.0; grid.cells()];
        for (k, c) in chi.iter_mut().enumerate() {
            *c = if m.chi1[k] { rho[k] } else { 0.0 };
        }
        let w1 = face_average(grid, &chi);
        let mut out = FaceField::zeros(grid);
        for c in 0..2 {
            for q in 0..out.c[c].len() {
                let r = rho_face.c[c][q];
                out.c[c][q] = w1.c[c][q] * a.c[c][q] + (r - w1.c[c][q]) * b.c[c][q];
            }
        }
        out
    };
    let stepper = Stepper {
        grid,
        rho: rho.clone(),
        rho_face: rho_face.clone(),
        dt,
        steps: problem.steps,
        opts: problem.opts,
        coef: &coef,
        time_dependent,
        memory,
        force: &force,
        snapshot_every: problem.snapshot_every,
    };
    let op0 = StokesOperator::new(grid, &coef(0.0), None, None)?;
    let u0 = problem.initial_field(grid, &op0)?;
    stepper.run(u0, ks.alpha())
}

/// `(1−m_c)(1−m_p) u⁰ + (m_c + m_p(1−m_c)) v⁰`.
pub fn macro_initial_condition(u0: &FaceField, v0: &FaceField, m_c: f64, m_p: f64) -> FaceField {
    let [wu, _, _, wv] = limit_weights(m_c, m_p);
    let mut out = u0.clone();
    out.scale(wu);
    out.add_scaled(wv, v0);
    out
}

/// Weights of the skeleton, crack, pore and total fluid limits: `[(1−m_c)(1−m_p), m_c, (1−m_c)m_p, m_c + (1−m_c)m_p]`.
pub fn limit_weights(m_c: f64, m_p: f64) -> [f64; 4] {
    let vp = (1.0 - m_c) * m_p;
    [(1.0 - m_c) * (1.0 - m_p), m_c, vp, m_c + vp]
}

#[derive(Clone, Debug)]
pub struct WeightedLimits {
    pub u: FaceField,
    pub v_c: FaceField,
    pub v_p: FaceField,
    pub v: FaceField,
}

pub fn weighted_limits(u0: &FaceField, m_c: f64, m_p: f64) -> WeightedLimits {
    let w = limit_weights(m_c, m_p);
    let scaled = |s: f64| {
        let mut f = u0.clone();
        f.scale(s);
        f
    };
    WeightedLimits { u: scaled(w[0]), v_c: scaled(w[1]), v_p: scaled(w[2]), v: scaled(w[3]) }
}

/// The homogenized problem on the unit box.
#[derive(Clone, Debug)]
pub struct MacroProblem {
    pub model: EffectiveModel,
    pub grid_n: usize,
    pub f1: Force,
    pub f2: Force,
    pub u0: InitialField,
    pub v0: InitialField,
    pub t_end: f64,
    pub steps: usize,
    pub opts: SolveOptions,
    pub snapshot_every: usize,
    /// Added to the phase-weighted force.
    pub extra_force: Option<CustomForce>,
}

pub fn run_macro(problem: &MacroProblem) -> Result<Trajectory> {
    let dt = check_steps(problem.t_end, problem.steps)?;
    let model = &problem.model;
    if model.a0.len() <= problem.steps || (model.dt - dt).abs() > 1e-12 * dt {
        return Err(Error::contract(format!(
            "effective model sampled with dt = {} on {} nodes, run needs dt = {dt} on {}",
            model.dt,
            model.a0.len(),
            problem.steps + 1
        )));
    }
    let check = model.check();
    if !check.passed {
        return Err(Error::validation(format!("effective model fails its invariant checks: {check:?}")));
    }
    let grid = Grid::new(problem.grid_n, Bc::DirichletZero)?;
    let n = grid.n;
    let time_dependent = model.a0.windows(2).any(|w| w[0] != w[1]);
    let coef = |t: f64| {
        let k = (t / dt).round() as usize;
        Coefficients::uniform(n, model.macro_viscosity(k))
    };
    let memory = if model.is_memoryless() {
        Vec::new()
    } else {
        let mut ones = EdgeField::zeros(grid);
        ones.nn.iter_mut().chain(ones.tt.iter_mut()).flatten().for_each(|v| *v = 1.0);
        vec![MemoryTerm { spatial: ones, kernel: model.memory_samples() }]
    };
    let rho = vec![model.rho; grid.cells()];
    let rho_face = face_average(grid, &rho);
    let [w1, w2] = model.rho_parts;
    let force = |t: f64| {
        let mut f = problem.f1.faces(grid, t);
        f.scale(w1);
        f.add_scaled(w2, &problem.f2.faces(grid, t));
        if let Some(CustomForce(g)) = &problem.extra_force {
            f.add_scaled(1.0, &FaceField::from_fn(grid, |c, x| g(x, t)[c]));
        }
        f
    };
    let stepper = Stepper {
        grid,
        rho,
        rho_face,
        dt,
        steps: problem.steps,
        opts: problem.opts,
        coef: &coef,
        time_dependent,
        memory,
        force: &force,
        snapshot_every: problem.snapshot_every,
    };
    let u0 = macro_initial_condition(&problem.u0.faces(grid), &problem.v0.faces(grid), model.m_c, model.m_p);
    stepper.run(u0, model.alpha)
}

/// Discrete energy ledger of one run against its data-side bound.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct EnergyReport {
    pub sup_kinetic: f64,
    pub dissipation: f64,
    /// `sup ‖√ρu‖² + α Σ dt ‖∇u‖²`.
    pub total: f64,
    pub gronwall: f64,
    pub within_bound: bool,
}

/// `C = 2 (‖√ρu⁰‖² + Σ dt ‖√ρ f‖²) · exp((1 + K²T/α²) T)` where K bounds the memory kernels.
pub fn energy_report(traj: &Trajectory, alpha: f64) -> EnergyReport {
    let sup_kinetic = traj.kinetic.iter().cloned().fold(0.0, f64::max);
    let dissipation = alpha * traj.dissipation.iter().skip(1).map(|d| traj.dt * d).sum::<f64>();
    let total = sup_kinetic + dissipation;
    let t_end = traj.times.last().copied().unwrap_or(0.0);
    let growth = if alpha > 0.0 { 1.0 + traj.kernel_bound.powi(2) * t_end / (alpha * alpha) } else { f64::INFINITY };
    let data = traj.kinetic[0] + traj.force_work;
    let gronwall = if data == 0.0 { 0.0 } else { 2.0 * data * (growth * t_end).exp() };
    EnergyReport { sup_kinetic, dissipation, total, gronwall, within_bound: total <= gronwall * (1.0 + 1e-12) }
}

/// Averages a cell field over `blocks × blocks` equal squares.
pub fn block_average(cell: &[f64], n: usize, blocks: usize) -> Result<Vec<f64>> {
    if blocks == 0 || n % blocks != 0 {
        return Err(Error::contract(format!("{blocks} blocks do not tile an {n} grid")));
    }
    let m = n / blocks;
    let mut out = vec![0.0; blocks * blocks];
    for i in 0..n {
        for j in 0..n {
            out[(i / m) * blocks + j / m] += cell[i * n + j];
        }
    }
    out.iter_mut().for_each(|v| *v /= (m * m) as f64);
    Ok(out)
}

/// Relative ℓ² errors of the ε-cell averages of `χ₁u_ε` and `χ₂u_ε`
/// against the weighted macro field.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeakLimitErrors {
    pub skeleton: f64,
    pub fluid: f64,
}

pub fn weak_limit_errors(micro: &FaceField, masks: &DomainMasks, macro_u: &FaceField, m_c: f64, m_p: f64) -> Result<WeakLimitErrors> {
    let blocks = masks.inv_epsilon();
    let w = limit_weights(m_c, m_p);
    let cu = micro.cell_average();
    let cm = macro_u.cell_average();
    let (nu, nm) = (micro.grid.n, macro_u.grid.n);
    let mut err = [0.0; 2];
    let mut norm = [0.0; 2];
    for c in 0..2 {
        let mac = block_average(&cm[c], nm, blocks)?;
        for (phase, (mask, weight)) in [(&masks.chi1, w[0]), (&masks.chi2, w[3])].into_iter().enumerate() {
            let masked: Vec<f64> = cu[c].iter().zip(mask).map(|(v, &m)| if m { *v } else { 0.0 }).collect();
            let mic = block_average(&masked, nu, blocks)?;
            for (a, b) in mic.iter().zip(&mac) {
                err[phase] += (a - weight * b).powi(2);
                norm[phase] += (weight * b).powi(2);
            }
        }
    }
    let rel = |e: f64, n: f64| if n > 0.0 { (e / n).sqrt() } else { e.sqrt() };
    Ok(WeakLimitErrors { skeleton: rel(err[0], norm[0]), fluid: rel(err[1], norm[1]) })
}

/// Relative L² difference of two velocity fields on the same grid.
pub fn relative_l2(a: &FaceField, b: &FaceField) -> f64 {
    let mut d = a.clone();
    d.add_scaled(-1.0, b);
    let nb = b.l2();
    if nb > 0.0 {
        d.l2() / nb
    } else {
        d.l2()
    }
}
