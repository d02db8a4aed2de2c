use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{make_cell, rasterize_epsilon, CellMask, Shape};
use crate::homogenize::{CellSetup, KernelSet};
use crate::kernels::{DensityField, Kernel4, TimeProfile};
use crate::msconv::{demo_sequences, EpsRule, Func1, OscillatorySequence, Shift, TestFunction};
use crate::solvers::{Force, InitialField};
use crate::stokes::SolveOptions;

/// Named kernel presets with numeric parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "recipe", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelRecipe {
    Zero,
    Isotropic { mu: f64 },
    /// Constant 2×2 matrix acting on velocity components.
    Constant { matrix: [[f64; 2]; 2] },
    YCosine { base: f64, amp: f64, axis: usize, mu: f64 },
    TauCosine { base: f64, amp: f64, mu: f64 },
    ExpDecay { kappa: f64, lambda: f64 },
    /// `mu e^{-λ t}` with a y-cosine factor.
    YCosineDecay { base: f64, amp: f64, axis: usize, mu: f64, lambda: f64 },
}

impl KernelRecipe {
    pub fn build(&self) -> Kernel4 {
        match *self {
            KernelRecipe::Zero => Kernel4::zero(),
            KernelRecipe::Isotropic { mu } => Kernel4::isotropic(mu),
            KernelRecipe::Constant { matrix } => Kernel4::constant(matrix),
            KernelRecipe::YCosine { base, amp, axis, mu } => Kernel4::y_cosine(base, amp, axis, mu),
            KernelRecipe::TauCosine { base, amp, mu } => Kernel4::tau_cosine(base, amp, mu),
            KernelRecipe::ExpDecay { kappa, lambda } => Kernel4::exp_decay(kappa, lambda),
            KernelRecipe::YCosineDecay { base, amp, axis, mu, lambda } => {
                Kernel4::y_cosine(base, amp, axis, mu).with_time(TimeProfile::Exp { lambda })
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    /// Crack region Y₂ in the unit cell.
    pub y2: Shape,
    /// Pore region Z₂; absent means cracks only.
    #[serde(default)]
    pub z2: Option<Shape>,
    pub cell_n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub a0: KernelRecipe,
    pub a1: KernelRecipe,
    pub b0: KernelRecipe,
    pub b1: KernelRecipe,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    pub rho1: f64,
    pub rho2: f64,
    pub lambda: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationConfig {
    pub micro_n: usize,
    pub macro_n: usize,
    pub steps: usize,
    pub t_end: f64,
    pub tol: f64,
    pub n_tau: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingConfig {
    pub f1: Force,
    pub f2: Force,
    pub u0: InitialField,
    pub v0: InitialField,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    /// Scale used by `micro`.
    pub epsilon: f64,
    /// Decreasing scales used by `compare`.
    pub eps: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MsconvConfig {
    pub u: OscillatorySequence,
    pub v: OscillatorySequence,
    pub psi: TestFunction,
    pub eps: Vec<f64>,
    pub quad_n: usize,
    #[serde(default = "two")]
    pub p: f64,
    #[serde(default)]
    pub shift: Option<Shift>,
    #[serde(default)]
    pub rule: Option<EpsRule>,
}

fn two() -> f64 {
    2.0
}

/// Tolerances used by the verdicts; echoed into every report.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub symmetry: f64,
    pub coercivity: f64,
    pub divergence: f64,
    pub energy_ratio: f64,
    pub final_error: f64,
    pub msconv_rel: f64,
    pub msconv_abs: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            symmetry: 1e-10,
            coercivity: 1e-8,
            divergence: 1e-8,
            energy_ratio: 2.0,
            final_error: 0.25,
            msconv_rel: 0.05,
            msconv_abs: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub kernels: KernelConfig,
    pub density: DensityConfig,
    pub discretization: DiscretizationConfig,
    pub forcing: ForcingConfig,
    pub study: StudyConfig,
    pub msconv: MsconvConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
}

pub const PRESETS: [&str; 4] = ["cracks_only", "two_level", "homogeneous", "constant"];

fn default_msconv() -> MsconvConfig {
    let (u, v, psi) = demo_sequences();
    MsconvConfig {
        u,
        v,
        psi,
        eps: vec![1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0],
        quad_n: 16 * 4096,
        p: 2.0,
        shift: Some(Shift { num: 1, den: 3 }),
        rule: Some(EpsRule { base: 2, exponents: vec![2, 4, 6] }),
    }
}

impl RunConfig {
    /// Built-in configurations. `cracks_only` is the default demo.
    pub fn preset(name: &str) -> Result<Self> {
        let rot = Force::Rotation { amp: 4.0 };
        let mut cfg = RunConfig {
            geometry: GeometryConfig { y2: Shape::half_plane(1, 0.5), z2: None, cell_n: 64 },
            kernels: KernelConfig {
                a0: KernelRecipe::YCosine { base: 2.0, amp: 1.0, axis: 1, mu: 1.0 },
                a1: KernelRecipe::ExpDecay { kappa: 0.25, lambda: 2.0 },
                b0: KernelRecipe::Isotropic { mu: 1.0 },
                b1: KernelRecipe::ExpDecay { kappa: 0.25, lambda: 2.0 },
            },
            density: DensityConfig { rho1: 1.0, rho2: 1.0, lambda: 2.0 },
            discretization: DiscretizationConfig { micro_n: 256, macro_n: 64, steps: 8, t_end: 0.5, tol: 1e-10, n_tau: 16 },
            forcing: ForcingConfig { f1: rot, f2: rot, u0: InitialField::Zero, v0: InitialField::Zero },
            study: StudyConfig { epsilon: 0.25, eps: vec![0.5, 0.25, 0.125] },
            msconv: default_msconv(),
            tolerances: Tolerances::default(),
        };
        match name {
            "cracks_only" => {}
            "two_level" => {
                cfg.geometry = GeometryConfig { y2: Shape::half_plane(1, 0.5), z2: Some(Shape::centered_box(0.5)), cell_n: 32 };
                cfg.kernels.b0 = KernelRecipe::TauCosine { base: 1.5, amp: 0.5, mu: 1.0 };
                cfg.density = DensityConfig { rho1: 1.2, rho2: 0.8, lambda: 2.0 };
                cfg.discretization.micro_n = 64;
                cfg.discretization.macro_n = 32;
                cfg.study = StudyConfig { epsilon: 0.5, eps: vec![0.5, 0.25] };
            }
            "homogeneous" => {
                let mem = KernelRecipe::ExpDecay { kappa: 0.25, lambda: 2.0 };
                cfg.kernels = KernelConfig { a0: KernelRecipe::Isotropic { mu: 1.0 }, a1: mem.clone(), b0: KernelRecipe::Isotropic { mu: 1.0 }, b1: mem };
                cfg.geometry = GeometryConfig { y2: Shape::Empty, z2: None, cell_n: 32 };
                cfg.discretization.micro_n = 64;
                cfg.discretization.macro_n = 64;
                cfg.forcing.u0 = InitialField::Vortex { amp: 0.1 };
                cfg.forcing.v0 = InitialField::Vortex { amp: 0.1 };
                cfg.study = StudyConfig { epsilon: 0.25, eps: vec![0.5, 0.25] };
            }
            "constant" => {
                let mem = KernelRecipe::ExpDecay { kappa: 0.4, lambda: 1.0 };
                cfg.kernels = KernelConfig { a0: KernelRecipe::Isotropic { mu: 1.7 }, a1: mem.clone(), b0: KernelRecipe::Isotropic { mu: 1.7 }, b1: mem };
                cfg.geometry = GeometryConfig { y2: Shape::centered_disk(0.3), z2: Some(Shape::centered_box(0.5)), cell_n: 32 };
                cfg.msconv = MsconvConfig {
                    u: OscillatorySequence { g: Func1::SinSquared { amp: 1.0 }, phi1: Func1::ONE, phi2: Func1::ONE },
                    v: OscillatorySequence { g: Func1::SinSquared { amp: 1.0 }, phi1: Func1::ONE, phi2: Func1::ONE },
                    psi: TestFunction::ONE,
                    eps: vec![0.5, 0.25],
                    quad_n: 1024,
                    p: 2.0,
                    shift: None,
                    rule: None,
                };
            }
            other => return Err(Error::validation(format!("unknown preset '{other}' (known: {})", PRESETS.join(", ")))),
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::validation(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.discretization;
        let t = &self.tolerances;
        let positive = [d.tol, d.t_end, t.symmetry, t.coercivity, t.divergence, t.energy_ratio, t.final_error, t.msconv_rel, t.msconv_abs];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::validation("tolerances, tol and t_end must be positive and finite"));
        }
        if d.n_tau == 0 || d.macro_n < 4 {
            return Err(Error::validation("n_tau must be positive and macro_n at least 4"));
        }
        self.kernel_set().validate()?;
        self.rho1().validate()?;
        self.rho2().validate()?;
        let (y, z) = self.cell_masks()?;
        for &e in std::iter::once(&self.study.epsilon).chain(&self.study.eps) {
            rasterize_epsilon(&y, z.as_ref(), e, d.micro_n).map_err(|err| err.at_stage(format!("epsilon {e}")))?;
        }
        if self.study.eps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::validation("study.eps must be strictly decreasing"));
        }
        Ok(())
    }

    pub fn kernel_set(&self) -> KernelSet {
        let k = &self.kernels;
        KernelSet { a0: k.a0.build(), a1: k.a1.build(), b0: k.b0.build(), b1: k.b1.build() }
    }

    pub fn rho1(&self) -> DensityField {
        DensityField::constant(self.density.rho1, self.density.lambda)
    }

    pub fn rho2(&self) -> DensityField {
        DensityField::constant(self.density.rho2, self.density.lambda)
    }

    pub fn cell_masks(&self) -> Result<(CellMask, Option<CellMask>)> {
        let n = self.geometry.cell_n;
        let y = make_cell(&self.geometry.y2, n).map_err(|e| e.at_stage("geometry.y2"))?;
        let z = match &self.geometry.z2 {
            Some(s) => Some(make_cell(s, n).map_err(|e| e.at_stage("geometry.z2"))?),
            None => None,
        };
        Ok((y, z))
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions::with_tol(self.discretization.tol)
    }

    pub fn cell_setup(&self) -> Result<CellSetup> {
        let (y_mask, z_mask) = self.cell_masks()?;
        Ok(CellSetup {
            kernels: self.kernel_set(),
            rho1: self.rho1(),
            rho2: self.rho2(),
            y_mask,
            z_mask,
            n_tau: self.discretization.n_tau,
            opts: self.solve_options(),
        })
    }

    pub fn dt(&self) -> f64 {
        self.discretization.t_end / self.discretization.steps as f64
    }
}
