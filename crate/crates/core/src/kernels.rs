//! Coefficient and memory tensors, densities, gradient histories and the
//! convolution quadratures built on them.

use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

pub type Mat2 = Matrix2<f64>;

/// Fractional part, always in [0, 1).
pub fn frac(v: f64) -> f64 {
    let f = v - v.floor();
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Wave {
    Cos,
    Sin,
}

/// 1-periodic factor `base + amp * wave(2π v[axis-1])`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub base: f64,
    pub amp: f64,
    #[serde(default = "one")]
    pub axis: usize,
    #[serde(default = "cos_wave")]
    pub wave: Wave,
}

fn one() -> usize {
    1
}

fn cos_wave() -> Wave {
    Wave::Cos
}

impl Profile {
    pub const ONE: Profile = Profile { base: 1.0, amp: 0.0, axis: 1, wave: Wave::Cos };

    pub fn cosine(base: f64, amp: f64, axis: usize) -> Self {
        Profile { base, amp, axis, wave: Wave::Cos }
    }

    pub fn sine(base: f64, amp: f64, axis: usize) -> Self {
        Profile { base, amp, axis, wave: Wave::Sin }
    }

    pub fn is_constant(&self) -> bool {
        self.amp == 0.0
    }

    pub fn eval1(&self, s: f64) -> f64 {
        let a = 2.0 * PI * s;
        self.base
            + self.amp
                * match self.wave {
                    Wave::Cos => a.cos(),
                    Wave::Sin => a.sin(),
                }
    }

    pub fn eval(&self, v: [f64; 2]) -> f64 {
        self.eval1(v[self.axis - 1])
    }

    /// Mean over one period.
    pub fn mean(&self) -> f64 {
        self.base
    }

    pub fn min(&self) -> f64 {
        self.base - self.amp.abs()
    }

    pub fn max(&self) -> f64 {
        self.base + self.amp.abs()
    }
}

/// Dependence on the slow time variable.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeProfile {
    Constant,
    /// e^{-λ t}
    Exp { lambda: f64 },
}

impl TimeProfile {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Constant => 1.0,
            TimeProfile::Exp { lambda } => (-lambda * t).exp(),
        }
    }
}

/// A tensor field `K(x, t, y, τ) = M · p_y(y) · p_t(t) · p_τ(τ)`, 1-periodic in y and τ.
///
/// `z` is an optional pore-scale factor used only by extension-mode cell tests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kernel4 {
    pub matrix: [[f64; 2]; 2],
    #[serde(default = "constant_profile")]
    pub y: Profile,
    #[serde(default = "constant_profile")]
    pub tau: Profile,
    #[serde(default = "constant_time")]
    pub time: TimeProfile,
    #[serde(default)]
    pub z: Option<Profile>,
    /// Coercivity constant; 0 for memory kernels.
    #[serde(default)]
    pub alpha: f64,
}

fn constant_profile() -> Profile {
    Profile::ONE
}

fn constant_time() -> TimeProfile {
    TimeProfile::Constant
}

fn iso(mu: f64) -> [[f64; 2]; 2] {
    [[mu, 0.0], [0.0, mu]]
}

impl Kernel4 {
    /// Constant matrix `M`; α is its smallest eigenvalue.
    pub fn constant(m: [[f64; 2]; 2]) -> Self {
        let alpha = Mat2::from(m).transpose().symmetric_eigenvalues().min().max(0.0);
        Kernel4 { matrix: m, y: Profile::ONE, tau: Profile::ONE, time: TimeProfile::Constant, z: None, alpha }
    }

    pub fn isotropic(mu: f64) -> Self {
        Self::constant(iso(mu))
    }

    pub fn zero() -> Self {
        Self::constant(iso(0.0))
    }

    /// `(base + amp cos 2π y_axis) · mu I`.
    pub fn y_cosine(base: f64, amp: f64, axis: usize, mu: f64) -> Self {
        Kernel4 {
            y: Profile::cosine(base, amp, axis),
            alpha: mu * (base - amp.abs()),
            ..Self::isotropic(mu)
        }
    }

    /// `kappa e^{-λ t} I`, a memory kernel.
    pub fn exp_decay(kappa: f64, lambda: f64) -> Self {
        Kernel4 { time: TimeProfile::Exp { lambda }, alpha: 0.0, ..Self::isotropic(kappa) }
    }

    /// `(base + amp cos 2π τ) · mu I`.
    pub fn tau_cosine(base: f64, amp: f64, mu: f64) -> Self {
        Kernel4 {
            tau: Profile::cosine(base, amp, 1),
            alpha: mu * (base - amp.abs()),
            ..Self::isotropic(mu)
        }
    }

    pub fn with_time(mut self, time: TimeProfile) -> Self {
        self.time = time;
        if !matches!(time, TimeProfile::Constant) {
            self.alpha = 0.0;
        }
        self
    }

    pub fn with_z(mut self, z: Profile) -> Self {
        self.z = Some(z);
        self.alpha *= z.min().max(0.0);
        self
    }

    pub fn mat(&self) -> Mat2 {
        Mat2::new(self.matrix[0][0], self.matrix[0][1], self.matrix[1][0], self.matrix[1][1])
    }

    pub fn is_zero(&self) -> bool {
        self.matrix.iter().flatten().all(|&v| v == 0.0)
    }

    /// Whether the value depends on y.
    pub fn varies_in_y(&self) -> bool {
        !self.y.is_constant()
    }

    /// Scalar factor multiplying `M` at (t, y, τ).
    pub fn factor(&self, t: f64, y: [f64; 2], tau: f64) -> f64 {
        self.y.eval(y) * self.time.eval(t) * self.tau.eval1(tau)
    }

    /// Value at (x, t, y, τ); the pore factor, if any, is not applied.
    pub fn value(&self, _x: [f64; 2], t: f64, y: [f64; 2], tau: f64) -> Mat2 {
        self.mat() * self.factor(t, y, tau)
    }

    /// Value including the pore-scale factor at z.
    pub fn value_z(&self, x: [f64; 2], t: f64, y: [f64; 2], tau: f64, z: [f64; 2]) -> Mat2 {
        let pz = self.z.map_or(1.0, |p| p.eval(z));
        self.value(x, t, y, tau) * pz
    }

    /// Upper bound on the spectral norm over all arguments at slow time t.
    pub fn norm_bound(&self, t: f64) -> f64 {
        let m = self.mat();
        let eig = m.symmetric_eigenvalues();
        let mnorm = eig.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        let py = self.y.max().abs().max(self.y.min().abs());
        let pt = self.tau.max().abs().max(self.tau.min().abs());
        let pz = self.z.map_or(1.0, |p| p.max().abs().max(p.min().abs()));
        mnorm * py * pt * pz * self.time.eval(t).abs()
    }

    /// Rejects asymmetric matrices and negative coercivity constants.
    pub fn validate(&self) -> Result<()> {
        let m = self.matrix;
        if (m[0][1] - m[1][0]).abs() > 1e-12 {
            return Err(Error::validation(format!("kernel matrix {m:?} is not symmetric")));
        }
        if self.alpha < 0.0 || !self.alpha.is_finite() {
            return Err(Error::validation(format!("coercivity constant {} must be >= 0", self.alpha)));
        }
        for p in [Some(self.y), Some(self.tau), self.z].into_iter().flatten() {
            if !(1..=2).contains(&p.axis) {
                return Err(Error::validation(format!("profile axis {} not in 1..=2", p.axis)));
            }
        }
        Ok(())
    }
}

/// K(x, t, frac(x/ε), frac(t/ε)).
pub fn eval_eps_trace(k: &Kernel4, x: [f64; 2], t: f64, epsilon: f64) -> Mat2 {
    let y = [frac(x[0] / epsilon), frac(x[1] / epsilon)];
    k.value(x, t, y, frac(t / epsilon))
}

/// Outcome of the randomized symmetry, coercivity and periodicity probe.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelCheck {
    pub max_asymmetry: f64,
    pub min_rayleigh: f64,
    pub alpha: f64,
    pub max_wrap_defect: f64,
    pub passed: bool,
}

/// Spot-checks a kernel at `samples` random points with random unit directions.
/// The coercivity part is enforced only when `alpha > 0`.
pub fn check_kernel<R: Rng>(k: &Kernel4, samples: usize, rng: &mut R) -> KernelCheck {
    let (mut asym, mut rayleigh, mut wrap) = (0.0f64, f64::INFINITY, 0.0f64);
    for _ in 0..samples {
        let x = [rng.random::<f64>(), rng.random::<f64>()];
        let y = [rng.random::<f64>(), rng.random::<f64>()];
        let t = rng.random::<f64>();
        let tau = rng.random::<f64>();
        let v = k.value(x, t, y, tau);
        asym = asym.max((v - v.transpose()).abs().max());
        let th = 2.0 * PI * rng.random::<f64>();
        let xi = Vector2::new(th.cos(), th.sin());
        rayleigh = rayleigh.min(xi.dot(&(v * xi)));
        let shifted = k.value(x, t, [y[0] + 1.0, y[1] - 1.0], tau + 1.0);
        wrap = wrap.max((shifted - v).abs().max());
    }
    let passed = asym <= 1e-12 && wrap <= 1e-12 && (k.alpha == 0.0 || rayleigh >= k.alpha - 1e-10);
    KernelCheck { max_asymmetry: asym, min_rayleigh: rayleigh, alpha: k.alpha, max_wrap_defect: wrap, passed }
}

/// Scalar density `ρ(x, y) = base + amp cos 2π y_axis`, bounded in [Λ⁻¹, Λ].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityField {
    pub profile: Profile,
    pub lambda: f64,
}

impl DensityField {
    pub fn constant(rho: f64, lambda: f64) -> Self {
        DensityField { profile: Profile::cosine(rho, 0.0, 1), lambda }
    }

    pub fn value(&self, _x: [f64; 2], y: [f64; 2]) -> f64 {
        self.profile.eval(y)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = (self.profile.min(), self.profile.max());
        if !(self.lambda >= 1.0) || lo < 1.0 / self.lambda - 1e-12 || hi > self.lambda + 1e-12 {
            return Err(Error::validation(format!(
                "density range [{lo}, {hi}] not inside [1/Λ, Λ] with Λ = {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Values that a Volterra sum can accumulate.
pub trait Sample: Clone {
    fn zero_like(&self) -> Self;
    fn axpy(&mut self, a: f64, x: &Self);
}

impl Sample for f64 {
    fn zero_like(&self) -> Self {
        0.0
    }
    fn axpy(&mut self, a: f64, x: &Self) {
        *self += a * x;
    }
}

impl Sample for Vec<f64> {
    fn zero_like(&self) -> Self {
        vec![0.0; self.len()]
    }
    fn axpy(&mut self, a: f64, x: &Self) {
        for (s, v) in self.iter_mut().zip(x) {
            *s += a * v;
        }
    }
}

impl Sample for Mat2 {
    fn zero_like(&self) -> Self {
        Mat2::zeros()
    }
    fn axpy(&mut self, a: f64, x: &Self) {
        *self += x * a;
    }
}

/// How one kernel sample acts on one history sample.
pub trait KernelAction<T> {
    /// `out += w * K(g)`.
    fn apply_add(&self, w: f64, g: &T, out: &mut T);
}

impl<T: Sample> KernelAction<T> for f64 {
    fn apply_add(&self, w: f64, g: &T, out: &mut T) {
        out.axpy(w * self, g);
    }
}

impl KernelAction<Mat2> for Mat2 {
    fn apply_add(&self, w: f64, g: &Mat2, out: &mut Mat2) {
        *out += (self * g) * w;
    }
}

impl KernelAction<Vec<f64>> for Vec<f64> {
    fn apply_add(&self, w: f64, g: &Vec<f64>, out: &mut Vec<f64>) {
        for ((o, k), v) in out.iter_mut().zip(self).zip(g) {
            *o += w * k * v;
        }
    }
}

/// Uniformly spaced, append-only record of gradient samples.
#[derive(Clone, Debug)]
pub struct GradientHistory<T> {
    dt: f64,
    samples: Vec<T>,
}

impl<T: Sample> GradientHistory<T> {
    pub fn new(dt: f64) -> Self {
        GradientHistory { dt, samples: Vec::new() }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn push(&mut self, g: T) {
        self.samples.push(g);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, j: usize) -> &T {
        &self.samples[j]
    }

    pub fn last(&self) -> Option<&T> {
        self.samples.last()
    }
}

/// Trapezoidal approximation of `∫₀^{t_n} K(t_n − s) G(s) ds`.
///
/// `kernel_samples[m]` is `K(m dt)`; samples `0..=n` of both inputs are used.
pub fn volterra_convolve<T, K>(kernel_samples: &[K], history: &GradientHistory<T>, n: usize) -> Result<T>
where
    T: Sample,
    K: KernelAction<T>,
{
    if history.len() <= n || kernel_samples.len() <= n {
        return Err(Error::contract(format!(
            "convolution at step {n} needs {} samples, history has {} and kernel {}",
            n + 1,
            history.len(),
            kernel_samples.len()
        )));
    }
    let mut out = history.get(0).zero_like();
    if n == 0 {
        return Ok(out);
    }
    let dt = history.dt();
    for j in 0..=n {
        let w = if j == 0 || j == n { 0.5 * dt } else { dt };
        kernel_samples[n - j].apply_add(w, history.get(j), &mut out);
    }
    Ok(out)
}

/// Exponent triple for the discrete Young inequality; `f64::INFINITY` is allowed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct YoungExponents {
    pub p: f64,
    pub q: f64,
    pub m: f64,
}

impl YoungExponents {
    pub fn validate(&self) -> Result<()> {
        let ok = |e: f64| e >= 1.0;
        if !(ok(self.p) && ok(self.q) && ok(self.m)) {
            return Err(Error::contract(format!("exponents {self:?} must all be >= 1")));
        }
        let defect = 1.0 / self.p + 1.0 / self.q - 1.0 - 1.0 / self.m;
        if defect.abs() > 1e-12 {
            return Err(Error::contract(format!("exponents {self:?} violate 1/p + 1/q = 1 + 1/m")));
        }
        Ok(())
    }
}

/// Both sides of `‖u∗v‖_m ≤ ‖u‖_p ‖v‖_q` with spacing-weighted norms.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct YoungReport {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Norm `(h Σ |u_i|^p)^{1/p}`, or the max norm for p = ∞.
pub fn weighted_norm(u: &[f64], h: f64, p: f64) -> f64 {
    if p.is_infinite() {
        u.iter().fold(0.0f64, |a, &v| a.max(v.abs()))
    } else {
        (h * u.iter().map(|v| v.abs().powf(p)).sum::<f64>()).powf(1.0 / p)
    }
}

/// Discrete full convolution `(u∗v)_k = h Σ_i u_i v_{k−i}` (length `|u| + |v| − 1`).
pub fn discrete_convolution(u: &[f64], v: &[f64], h: f64) -> Vec<f64> {
    if u.is_empty() || v.is_empty() {
        return Vec::new();
    }
    let len = u.len() + v.len() - 1;
    if u.len().min(v.len()) <= 64 {
        let mut out = vec![0.0; len];
        for (i, a) in u.iter().enumerate() {
            for (j, b) in v.iter().enumerate() {
                out[i + j] += h * a * b;
            }
        }
        return out;
    }
    let size = len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let pad = |w: &[f64]| {
        let mut b: Vec<Complex<f64>> = w.iter().map(|&r| Complex::new(r, 0.0)).collect();
        b.resize(size, Complex::new(0.0, 0.0));
        b
    };
    let (mut a, mut b) = (pad(u), pad(v));
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y;
    }
    inv.process(&mut a);
    let scale = h / size as f64;
    a[..len].iter().map(|c| c.re * scale).collect()
}

/// Evaluates both sides of the discrete Young bound for an already computed convolution.
pub fn young_report(conv: &[f64], u: &[f64], v: &[f64], h: f64, e: YoungExponents) -> Result<YoungReport> {
    e.validate()?;
    let lhs = weighted_norm(conv, h, e.m);
    let rhs = weighted_norm(u, h, e.p) * weighted_norm(v, h, e.q);
    Ok(YoungReport { lhs, rhs, holds: lhs <= rhs * (1.0 + 1e-12) + 1e-300 })
}

/// Checks `‖u∗v‖_m ≤ ‖u‖_p ‖v‖_q` for samples on a grid of spacing `h`.
pub fn discrete_young_norm_check(u: &[f64], v: &[f64], h: f64, e: YoungExponents) -> Result<YoungReport> {
    e.validate()?;
    let conv = discrete_convolution(u, v, h);
    young_report(&conv, u, v, h, e)
}
