//! Configuration, experiment orchestration and report emission behind the CLI.
//!
//! Commands return an [`Outcome`]: the report plus named output files. Only
//! [`write_outcome`] touches the file system.

mod config;

pub use config::*;

use nalgebra::Matrix4;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::geometry::{rasterize_epsilon, CellMask, DomainMasks};
use crate::homogenize::{homogenize, kron_identity, t_max_diff, t_scale, EffectiveModel, Tensor4};
use crate::kernels::check_kernel;
use crate::msconv::{test_convolution, test_strong_norm, test_translate, test_weak_msconv, ConvergenceTable, TranslateOutcome};
use crate::solvers::{
    energy_report, field_to_text, limit_weights, relative_l2, run_macro, run_micro, weak_limit_errors, weighted_limits,
    MacroProblem, MicroProblem, Trajectory,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Cell,
    Micro,
    Macro,
    Compare,
    Msconv,
    Check,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Cell => "cell",
            Command::Micro => "micro",
            Command::Macro => "macro",
            Command::Compare => "compare",
            Command::Msconv => "msconv",
            Command::Check => "check",
        }
    }
}

/// One named pass/fail check with the value and tolerance it was judged by.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
}

impl Verdict {
    /// Passes when `value <= tolerance`.
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Verdict { name: name.into(), passed: value <= tolerance, value, tolerance }
    }

    pub fn flag(name: impl Into<String>, passed: bool) -> Self {
        Verdict { name: name.into(), passed, value: passed as u8 as f64, tolerance: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Failed,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub tolerances: Tolerances,
    pub status: Status,
    pub verdicts: Vec<Verdict>,
    pub inconclusive: Vec<String>,
    pub summary: serde_json::Value,
}

impl Report {
    fn new(cmd: Command, cfg: &RunConfig, seed: u64, verdicts: Vec<Verdict>, inconclusive: Vec<String>, summary: serde_json::Value) -> Self {
        let status = if verdicts.iter().any(|v| !v.passed) {
            Status::Failed
        } else if !inconclusive.is_empty() {
            Status::Inconclusive
        } else {
            Status::Ok
        };
        Report {
            command: cmd.name().into(),
            config_hash: cfg.hash(),
            seed,
            tolerances: cfg.tolerances,
            status,
            verdicts,
            inconclusive,
            summary,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.status {
            Status::Ok => 0,
            Status::Failed => 4,
            Status::Inconclusive => 5,
        }
    }

    pub fn failed(&self) -> Vec<&Verdict> {
        self.verdicts.iter().filter(|v| !v.passed).collect()
    }
}

/// Report plus the files a command produced, in write order.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub report: Report,
    pub files: Vec<(String, String)>,
}

/// 2 for bad input, 3 for solver failures, 1 for I/O.
pub fn exit_code(err: &Error) -> i32 {
    match err.root() {
        Error::SolverFailure { .. } => 3,
        Error::Io(_) => 1,
        _ => 2,
    }
}

pub fn run(cmd: Command, cfg: &RunConfig, seed: u64) -> Result<Outcome> {
    cfg.validate()?;
    match cmd {
        Command::Cell => cmd_cell(cfg, seed),
        Command::Micro => cmd_micro(cfg, seed),
        Command::Macro => cmd_macro(cfg, seed),
        Command::Compare => cmd_compare(cfg, seed),
        Command::Msconv => cmd_msconv(cfg, seed),
        Command::Check => cmd_check(cfg, seed),
    }
}

/// Writes every file and then `report.json` into `dir`.
pub fn write_outcome(dir: &Path, out: &Outcome) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, text) in &out.files {
        std::fs::write(dir.join(name), text)?;
    }
    let json = serde_json::to_string_pretty(&out.report).expect("report serializes");
    std::fs::write(dir.join("report.json"), json + "\n")?;
    Ok(())
}

fn eig_range(t: &Tensor4) -> (f64, f64) {
    let m = Matrix4::from_fn(|i, j| 0.5 * (t[i][j] + t[j][i]));
    let e = m.symmetric_eigenvalues();
    (e.min(), e.max())
}

fn model_summary(m: &EffectiveModel) -> serde_json::Value {
    let (lo, hi) = m.a0.iter().map(eig_range).fold((f64::INFINITY, f64::NEG_INFINITY), |a, b| (a.0.min(b.0), a.1.max(b.1)));
    serde_json::json!({
        "m_c": m.m_c,
        "m_p": m.m_p,
        "rho": m.rho,
        "alpha": m.alpha,
        "eig_a0": [lo, hi],
        "a0_t0": m.a0[0],
        "memoryless": m.is_memoryless(),
        "dropped_offdiag": m.diagnostics.dropped_offdiag,
        "dropped_cross": m.dropped_cross_norm(),
        "cell_iterations": m.diagnostics.iterations,
    })
}

fn model_verdicts(m: &EffectiveModel, tol: &Tolerances, prefix: &str) -> Vec<Verdict> {
    let c = m.check();
    vec![
        Verdict::at_most(format!("{prefix}symmetry"), c.asymmetry_a0.max(c.asymmetry_a1), tol.symmetry),
        Verdict::at_most(format!("{prefix}coercivity"), (c.alpha - c.eigmin_a0).max(0.0), tol.coercivity),
        Verdict::flag(format!("{prefix}density bounds"), c.density_bounded),
        Verdict::at_most(format!("{prefix}decomposition"), c.decomposition_defect, tol.symmetry),
    ]
}

fn tensors_csv(m: &EffectiveModel) -> String {
    let mut s = String::from("t,tensor,row,c0,c1,c2,c3\n");
    for (k, &t) in m.times.iter().enumerate() {
        for (name, ten) in [("a0", &m.a0[k]), ("a1", &m.a1[k])] {
            for (r, row) in ten.iter().enumerate() {
                let _ = writeln!(s, "{t:.10e},{name},{r},{:.15e},{:.15e},{:.15e},{:.15e}", row[0], row[1], row[2], row[3]);
            }
        }
    }
    s
}

fn build_model(cfg: &RunConfig) -> Result<EffectiveModel> {
    let setup = cfg.cell_setup()?;
    homogenize(&setup, cfg.dt(), cfg.discretization.steps).map_err(|e| e.at_stage("cell"))
}

fn cmd_cell(cfg: &RunConfig, seed: u64) -> Result<Outcome> {
    let model = build_model(cfg)?;
    let mut verdicts = model_verdicts(&model, &cfg.tolerances, "");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ks = cfg.kernel_set();
    for (name, k) in [("a0", &ks.a0), ("a1", &ks.a1), ("b0", &ks.b0), ("b1", &ks.b1)] {
        verdicts.push(Verdict::flag(format!("kernel {name} samples"), check_kernel(k, 64, &mut rng).passed));
    }
    let (y, z) = cfg.cell_masks()?;
    let mut files = vec![("effective_model.json".to_string(), model.to_json()), ("tensors.csv".to_string(), tensors_csv(&model))];
    files.push(("y2.txt".into(), y.to_pbm()));
    let mut connectivity = serde_json::json!({
        "y2_components": y.connected_components(),
        "y1_components": y.complement().connected_components(),
    });
    if let Some(z) = &z {
        files.push(("z2.txt".into(), z.to_pbm()));
        connectivity["z2_components"] = z.connected_components().into();
    }
    let summary = serde_json::json!({ "model": model_summary(&model), "connectivity": connectivity });
    Ok(Outcome { report: Report::new(Command::Cell, cfg, seed, verdicts, vec![], summary), files })
}

fn micro_problem(cfg: &RunConfig, masks: DomainMasks) -> MicroProblem {
    let d = &cfg.discretization;
    let f = &cfg.forcing;
    MicroProblem {
        masks,
        kernels: cfg.kernel_set(),
        rho1: cfg.rho1(),
        rho2: cfg.rho2(),
        f1: f.f1,
        f2: f.f2,
        u0: f.u0,
        v0: f.v0,
        t_end: d.t_end,
        steps: d.steps,
        opts: cfg.solve_options(),
        snapshot_every: 0,
    }
}

fn masks_at(cfg: &RunConfig, eps: f64) -> Result<DomainMasks> {
    let (y, z) = cfg.cell_masks()?;
    rasterize_epsilon(&y, z.as_ref(), eps, cfg.discretization.micro_n)
}

fn run_summary(t: &Trajectory, alpha: f64) -> serde_json::Value {
    serde_json::json!({
        "energy": energy_report(t, alpha),
        "max_divergence": t.max_divergence(),
        "iterations": t.iterations.iter().sum::<usize>(),
        "wall_time_s": t.wall_time_s,
    })
}

fn cmd_micro(cfg: &RunConfig, seed: u64) -> Result<Outcome> {
    let masks = masks_at(cfg, cfg.study.epsilon)?;
    let chi2 = CellMask::from_cells(masks.grid_n, masks.chi2.clone())?;
    let p = micro_problem(cfg, masks);
    let t = run_micro(&p).map_err(|e| e.at_stage("micro"))?;
    let alpha = p.kernels.alpha();
    let e = energy_report(&t, alpha);
    let verdicts = vec![
        Verdict::at_most("divergence", t.max_divergence(), cfg.tolerances.divergence),
        Verdict::flag("energy within bound", e.within_bound),
    ];
    let files = vec![
        ("trajectory.csv".into(), t.to_csv()),
        ("terminal_u.txt".into(), field_to_text(&t.terminal.u)),
        ("chi2.txt".into(), chi2.to_pbm()),
    ];
    let summary = serde_json::json!({ "epsilon": cfg.study.epsilon, "run": run_summary(&t, alpha) });
    Ok(Outcome { report: Report::new(Command::Micro, cfg, seed, verdicts, vec![], summary), files })
}

fn macro_problem(cfg: &RunConfig, model: EffectiveModel) -> MacroProblem {
    let d = &cfg.discretization;
    let f = &cfg.forcing;
    MacroProblem {
        model,
        grid_n: d.macro_n,
        f1: f.f1,
        f2: f.f2,
        u0: f.u0,
        v0: f.v0,
        t_end: d.t_end,
        steps: d.steps,
        opts: cfg.solve_options(),
        snapshot_every: 0,
        extra_force: None,
    }
}

fn cmd_macro(cfg: &RunConfig, seed: u64) -> Result<Outcome> {
    let model = build_model(cfg)?;
    let mut verdicts = model_verdicts(&model, &cfg.tolerances, "model ");
    let summary_model = model_summary(&model);
    let alpha = model.alpha;
    let t = run_macro(&macro_problem(cfg, model)).map_err(|e| e.at_stage("macro"))?;
    verdicts.push(Verdict::at_most("divergence", t.max_divergence(), cfg.tolerances.divergence));
    let files = vec![("trajectory.csv".into(), t.to_csv()), ("terminal_u.txt".into(), field_to_text(&t.terminal.u))];
    let summary = serde_json::json!({ "model": summary_model, "run": run_summary(&t, alpha) });
    Ok(Outcome { report: Report::new(Command::Macro, cfg, seed, verdicts, vec![], summary), files })
}

/// One ε row of a convergence study.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StudyRow {
    pub eps: f64,
    pub skeleton_error: f64,
    pub fluid_error: f64,
    pub sup_kinetic: f64,
    pub dissipation: f64,
    pub energy_total: f64,
    pub gronwall: f64,
    pub within_bound: bool,
    pub max_divergence: f64,
    pub iterations: usize,
    pub wall_time_s: f64,
    pub error: Option<String>,
}

impl StudyRow {
    fn failed(eps: f64, e: &Error) -> Self {
        StudyRow {
            eps,
            skeleton_error: f64::NAN,
            fluid_error: f64::NAN,
            sup_kinetic: f64::NAN,
            dissipation: f64::NAN,
            energy_total: f64::NAN,
            gronwall: f64::NAN,
            within_bound: false,
            max_divergence: f64::NAN,
            iterations: 0,
            wall_time_s: 0.0,
            error: Some(e.to_string()),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StudyReport {
    pub rows: Vec<StudyRow>,
    pub macro_divergence: f64,
    pub energy_ratio: f64,
    pub model: serde_json::Value,
}

impl StudyReport {
    /// Wall times are left out so the table is reproducible byte for byte.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("eps,skeleton_error,fluid_error,sup_kinetic,dissipation,energy_total,gronwall,within_bound,max_divergence,iterations,status\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{},{:.3e},{},{}",
                r.eps,
                r.skeleton_error,
                r.fluid_error,
                r.sup_kinetic,
                r.dissipation,
                r.energy_total,
                r.gronwall,
                r.within_bound,
                r.max_divergence,
                r.iterations,
                if r.error.is_some() { "failed" } else { "ok" }
            );
        }
        s
    }

    pub fn verdicts(&self, tol: &Tolerances) -> Vec<Verdict> {
        let ok: Vec<&StudyRow> = self.rows.iter().filter(|r| r.error.is_none()).collect();
        let all_rows = ok.len() == self.rows.len();
        // identically zero errors (a homogeneous medium) count as converged
        let dec = all_rows
            && (ok.windows(2).all(|w| w[1].skeleton_error < w[0].skeleton_error) || ok.iter().all(|r| r.skeleton_error <= 1e-10));
        let last = ok.last().map_or(f64::INFINITY, |r| r.skeleton_error);
        let div = ok.iter().map(|r| r.max_divergence).fold(self.macro_divergence, f64::max);
        vec![
            Verdict::flag("all rows ran", all_rows),
            Verdict::flag("skeleton error strictly decreasing", dec),
            Verdict::at_most("final skeleton error", last, tol.final_error),
            Verdict::at_most("energy ratio", self.energy_ratio, tol.energy_ratio),
            Verdict::flag("energy within gronwall bound", all_rows && ok.iter().all(|r| r.within_bound)),
            Verdict::at_most("divergence", div, tol.divergence),
        ]
    }
}

/// Macro run once, micro per ε in parallel; failures stay in their rows.
pub fn study(cfg: &RunConfig) -> Result<StudyReport> {
    let model = build_model(cfg)?;
    let summary = model_summary(&model);
    let (m_c, m_p) = (model.m_c, model.m_p);
    let mac = run_macro(&macro_problem(cfg, model)).map_err(|e| e.at_stage("macro"))?;
    let alpha = cfg.kernel_set().alpha();
    let rows: Vec<StudyRow> = cfg
        .study
        .eps
        .par_iter()
        .map(|&eps| {
            let start = Instant::now();
            let row = || -> Result<StudyRow> {
                let masks = masks_at(cfg, eps)?;
                let p = micro_problem(cfg, masks);
                let t = run_micro(&p).map_err(|e| e.at_stage(format!("micro eps {eps}")))?;
                let w = weak_limit_errors(&t.terminal.u, &p.masks, &mac.terminal.u, m_c, m_p)?;
                let e = energy_report(&t, alpha);
                Ok(StudyRow {
                    eps,
                    skeleton_error: w.skeleton,
                    fluid_error: w.fluid,
                    sup_kinetic: e.sup_kinetic,
                    dissipation: e.dissipation,
                    energy_total: e.total,
                    gronwall: e.gronwall,
                    within_bound: e.within_bound,
                    max_divergence: t.max_divergence(),
                    iterations: t.iterations.iter().sum(),
                    wall_time_s: start.elapsed().as_secs_f64(),
                    error: None,
                })
            };
            row().unwrap_or_else(|e| StudyRow::failed(eps, &e))
        })
        .collect();
    let totals: Vec<f64> = rows.iter().filter(|r| r.error.is_none()).map(|r| r.energy_total).collect();
    let (lo, hi) = totals.iter().fold((f64::INFINITY, 0.0f64), |a, &b| (a.0.min(b), a.1.max(b)));
    let energy_ratio = if totals.is_empty() { f64::INFINITY } else if lo > 0.0 { hi / lo } else if hi == 0.0 { 1.0 } else { f64::INFINITY };
    Ok(StudyReport { rows, macro_divergence: mac.max_divergence(), energy_ratio, model: summary })
}

fn cmd_compare(cfg: &RunConfig, seed: u64) -> Result<Outcome> {
    for &e in &cfg.study.eps {
        let k = (1.0 / e).round() as usize;
        if cfg.discretization.macro_n % k != 0 {
            return Err(Error::UnderResolved(format!("macro_n = {} is not a multiple of 1/epsilon = {k}", cfg.discretization.macro_n)));
        }
    }
    let s = study(cfg)?;
    let verdicts = s.verdicts(&cfg.tolerances);
    let files = vec![("study.csv".into(), s.to_csv())];
    let summary = serde_json::to_value(&s).expect("study serializes");
    Ok(Outcome { report: Report::new(Command::Compare, cfg, seed, verdicts, vec![], summary), files })
}

/// Strictly decreasing, or identically converged to rounding.
pub fn converging(t: &ConvergenceTable) -> bool {
    t.strictly_decreasing() || t.abs_error.iter().all(|e| *e <= 1e-12 * t.limit.abs().max(1.0))
}

fn table_verdicts(t: &ConvergenceTable, tol: &Tolerances) -> Vec<Verdict> {
    vec![
        Verdict::flag(format!("{} errors decreasing", t.name), converging(t)),
        Verdict::at_most(format!("{} final error", t.name), t.final_error(), tol.msconv_rel * t.limit.abs() + tol.msconv_abs),
    ]
}

fn cmd_msconv(cfg: &RunConfig, seed: u64) -> Result<Outcome> {
    let m = &cfg.msconv;
    let tol = &cfg.tolerances;
    let weak = test_weak_msconv(&m.u, &m.psi, &m.eps, m.quad_n)?;
    let strong = test_strong_norm(&m.u, m.p, &m.eps, m.quad_n)?;
    let conv = test_convolution(&m.u, &m.v, &m.psi, &m.eps, m.quad_n)?;
    let mut verdicts = Vec::new();
    let mut files = Vec::new();
    for t in [&weak, &strong, &conv.table] {
        verdicts.extend(table_verdicts(t, tol));
        files.push((format!("msconv_{}.csv", t.name), t.to_csv()));
    }
    verdicts.push(Verdict::flag("young inequality", conv.young.iter().all(|y| y.holds)));
    let mut inconclusive = Vec::new();
    let mut translate = serde_json::Value::Null;
    if let (Some(shift), Some(rule)) = (m.shift, &m.rule) {
        // the translate rule carries its own ε list; resolve for its smallest scale
        let emin = rule.eps().iter().cloned().fold(1.0, f64::min);
        let quad = m.quad_n.max((16.0 / (emin * emin)).ceil() as usize);
        match test_translate(&m.u, &m.psi, shift, rule, quad)? {
            TranslateOutcome::Settled { r, s, table } => {
                verdicts.push(Verdict::at_most("translate final error", table.final_error(), tol.msconv_rel * table.limit.abs() + tol.msconv_abs));
                files.push(("msconv_translate.csv".into(), table.to_csv()));
                translate = serde_json::json!({ "r": r, "s": s });
            }
            TranslateOutcome::Inconclusive { reason, cluster } => {
                inconclusive.push(format!("translate: {reason}"));
                translate = serde_json::json!({ "inconclusive": reason, "cluster": cluster });
            }
        }
    }
    let summary = serde_json::json!({
        "weak": weak,
        "strong": strong,
        "convolution": conv.table,
        "translate": translate,
    });
    Ok(Outcome { report: Report::new(Command::Msconv, cfg, seed, verdicts, inconclusive, summary), files })
}

/// `𝒜₀ = μI₄` and `𝒜₁(t) = κ(t)I₄` for constant kernels on any masks.
pub fn collapse_defect(model: &EffectiveModel, mu: f64, kappa: impl Fn(f64) -> f64) -> f64 {
    let id = kron_identity([[1.0, 0.0], [0.0, 1.0]]);
    let mut d = 0.0f64;
    for (k, &t) in model.times.iter().enumerate() {
        d = d.max(t_max_diff(&model.a0[k], &t_scale(&id, mu))).max(t_max_diff(&model.a1[k], &t_scale(&id, kappa(t))));
    }
    d
}

/// Worst defect of the weight identities over a 0.1 grid of `(m_c, m_p)`.
pub fn weight_identity_defect() -> (f64, bool) {
    let mut worst = 0.0f64;
    let mut proportional = true;
    for a in 0..=10 {
        for b in 0..=10 {
            let (m_c, m_p) = (a as f64 / 10.0, b as f64 / 10.0);
            let w = limit_weights(m_c, m_p);
            worst = worst.max((w[0] + w[1] + w[2] - 1.0).abs()).max((w[1] + w[2] - w[3]).abs());
            let g = crate::stokes::Grid::new(8, crate::stokes::Bc::DirichletZero).expect("grid");
            let u0 = crate::solvers::InitialField::Vortex { amp: 1.0 }.faces(g);
            let l = weighted_limits(&u0, m_c, m_p);
            for c in 0..2 {
                for q in 0..u0.c[c].len() {
                    let x = u0.c[c][q];
                    proportional &= l.u.c[c][q] == w[0] * x && l.v_c.c[c][q] == w[1] * x && l.v_p.c[c][q] == w[2] * x;
                }
            }
        }
    }
    (worst, proportional)
}

/// The quick invariant suite: model checks on three presets, constant collapse,
/// weight identities, homogeneous micro/macro agreement and the msconv demo.
fn cmd_check(cfg: &RunConfig, seed: u64) -> Result<Outcome> {
    let tol = &cfg.tolerances;
    let mut verdicts = Vec::new();
    let presets: Vec<RunConfig> = ["cracks_only", "two_level", "constant"]
        .iter()
        .map(|n| {
            let mut c = RunConfig::preset(n)?;
            c.geometry.cell_n = 32;
            Ok(c)
        })
        .collect::<Result<_>>()?;
    let models: Vec<EffectiveModel> = presets.par_iter().map(build_model).collect::<Result<_>>()?;
    for (name, m) in ["cracks_only", "two_level", "constant"].iter().zip(&models) {
        verdicts.extend(model_verdicts(m, tol, &format!("{name} ")));
    }
    let (mu, kappa, lam) = (1.7, 0.4, 1.0);
    verdicts.push(Verdict::at_most("constant collapse", collapse_defect(&models[2], mu, |t| kappa * (-lam * t).exp()), 1e-8));
    let (worst, proportional) = weight_identity_defect();
    verdicts.push(Verdict::at_most("weight identity", worst, 1e-14));
    verdicts.push(Verdict::flag("weighted limits proportional", proportional));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ks = presets[0].kernel_set();
    verdicts.push(Verdict::flag("kernel a0 samples", check_kernel(&ks.a0, 64, &mut rng).passed));
    let mut hom = RunConfig::preset("homogeneous")?;
    hom.discretization.micro_n = 32;
    hom.discretization.macro_n = 32;
    let model = build_model(&hom)?;
    let mac = run_macro(&macro_problem(&hom, model))?;
    let mic = run_micro(&micro_problem(&hom, masks_at(&hom, 0.25)?))?;
    verdicts.push(Verdict::at_most("homogeneous micro/macro", relative_l2(&mic.terminal.u, &mac.terminal.u), 1e-6));
    verdicts.push(Verdict::at_most("divergence", mic.max_divergence().max(mac.max_divergence()), tol.divergence));
    let (u, v, psi) = crate::msconv::demo_sequences();
    let conv = test_convolution(&u, &v, &psi, &[1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0], 16 * 1024)?;
    verdicts.extend(table_verdicts(&conv.table, tol));
    let summary = serde_json::json!({ "models": models.iter().map(model_summary).collect::<Vec<_>>() });
    Ok(Outcome { report: Report::new(Command::Check, cfg, seed, verdicts, vec![], summary), files: vec![] })
}
