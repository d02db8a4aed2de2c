//! One-dimensional laboratory for reiterated (three-scale) convergence: pairings of
//! oscillating sequences with oscillating test functions, translates and convolutions.

use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::kernels::{discrete_convolution, young_report, YoungExponents, YoungReport};

/// Named scalar functions used as factors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Func1 {
    Const { value: f64 },
    /// `base + amp cos(2π freq s)`
    Cosine { base: f64, amp: f64, freq: u32 },
    /// `base + amp sin(2π freq s)`
    Sine { base: f64, amp: f64, freq: u32 },
    /// `amp sin²(π s)`, smooth and vanishing at integers.
    SinSquared { amp: f64 },
    /// `a + b s`
    Linear { a: f64, b: f64 },
}

impl Func1 {
    pub const ONE: Func1 = Func1::Const { value: 1.0 };

    pub fn eval(&self, s: f64) -> f64 {
        match *self {
            Func1::Const { value } => value,
            Func1::Cosine { base, amp, freq } => base + amp * (2.0 * PI * freq as f64 * s).cos(),
            Func1::Sine { base, amp, freq } => base + amp * (2.0 * PI * freq as f64 * s).sin(),
            Func1::SinSquared { amp } => amp * (PI * s).sin().powi(2),
            Func1::Linear { a, b } => a + b * s,
        }
    }

    pub fn is_periodic(&self) -> bool {
        !matches!(self, Func1::Linear { b, .. } if *b != 0.0)
    }
}

/// `g(x) φ₁(x/ε) φ₂(x/ε²)` on [0, 1], extended by zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillatorySequence {
    pub g: Func1,
    pub phi1: Func1,
    pub phi2: Func1,
}

/// A test function `ψ(x, y, z) = ψ_x(x) ψ_y(y) ψ_z(z)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub x: Func1,
    pub y: Func1,
    pub z: Func1,
}

impl TestFunction {
    pub const ONE: TestFunction = TestFunction { x: Func1::ONE, y: Func1::ONE, z: Func1::ONE };

    pub fn eval(&self, x: f64, y: f64, z: f64) -> f64 {
        self.x.eval(x) * self.y.eval(y) * self.z.eval(z)
    }

    pub fn at_scale(&self, x: f64, eps: f64) -> f64 {
        self.eval(x, x / eps, x / (eps * eps))
    }
}

impl OscillatorySequence {
    pub fn check(&self) -> Result<()> {
        if !self.phi1.is_periodic() || !self.phi2.is_periodic() {
            return Err(Error::validation("fast factors must be 1-periodic"));
        }
        Ok(())
    }

    pub fn eval(&self, x: f64, eps: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        self.g.eval(x) * self.phi1.eval(x / eps) * self.phi2.eval(x / (eps * eps))
    }

    pub fn limit(&self, x: f64, y: f64, z: f64) -> f64 {
        self.g.eval(x) * self.phi1.eval(y) * self.phi2.eval(z)
    }
}

const GL4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
];

/// Composite 4-point Gauss–Legendre rule on [a, b].
pub fn gauss(a: f64, b: f64, panels: usize, f: impl Fn(f64) -> f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let h = (b - a) / panels as f64;
    let mut s = 0.0;
    for p in 0..panels {
        let m = a + (p as f64 + 0.5) * h;
        for (x, w) in GL4 {
            s += w * f(m + 0.5 * h * x);
        }
    }
    0.5 * h * s
}

const LIMIT_PANELS: usize = 256;

/// Pairing values, the limit they should approach, and the gaps.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub name: String,
    pub eps: Vec<f64>,
    pub pairing: Vec<f64>,
    pub limit: f64,
    pub abs_error: Vec<f64>,
}

impl ConvergenceTable {
    fn new(name: &str, eps: &[f64], pairing: Vec<f64>, limit: f64) -> Self {
        let abs_error = pairing.iter().map(|p| (p - limit).abs()).collect();
        ConvergenceTable { name: name.into(), eps: eps.to_vec(), pairing, limit, abs_error }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("eps,pairing,limit,abs_error\n");
        for k in 0..self.eps.len() {
            let _ = writeln!(s, "{:.10e},{:.15e},{:.15e},{:.6e}", self.eps[k], self.pairing[k], self.limit, self.abs_error[k]);
        }
        s
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.abs_error.windows(2).all(|w| w[1] < w[0])
    }

    pub fn final_error(&self) -> f64 {
        self.abs_error.last().copied().unwrap_or(f64::NAN)
    }
}

fn check_eps(eps: &[f64], quad_n: usize) -> Result<f64> {
    if eps.is_empty() {
        return Err(Error::validation("empty epsilon list"));
    }
    if eps.iter().any(|&e| !(e > 0.0 && e <= 1.0)) || eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::validation("epsilon list must be strictly decreasing in (0, 1]"));
    }
    let emin = *eps.last().unwrap();
    let need = (16.0 / (emin * emin)).ceil() as usize;
    if quad_n < need {
        return Err(Error::UnderResolved(format!("quad_n = {quad_n} < 16/eps_min^2 = {need}")));
    }
    Ok(emin)
}

/// `∫ a(s) b(s) ds` over one period or over [0, 1].
fn product_integral(a: Func1, b: Func1) -> f64 {
    gauss(0.0, 1.0, LIMIT_PANELS, |s| a.eval(s) * b.eval(s))
}

/// `∫₀¹ u_ε ψ(x, x/ε, x/ε²) dx` against `∭ u₀ ψ`.
pub fn test_weak_msconv(seq: &OscillatorySequence, psi: &TestFunction, eps: &[f64], quad_n: usize) -> Result<ConvergenceTable> {
    seq.check()?;
    check_eps(eps, quad_n)?;
    let pairing = eps.par_iter().map(|&e| gauss(0.0, 1.0, quad_n, |x| seq.eval(x, e) * psi.at_scale(x, e))).collect();
    let limit = product_integral(seq.g, psi.x) * product_integral(seq.phi1, psi.y) * product_integral(seq.phi2, psi.z);
    Ok(ConvergenceTable::new("weak", eps, pairing, limit))
}

/// `‖u_ε‖_p` against `‖u₀‖_{L^p(Ω×Y×Z)}`.
pub fn test_strong_norm(seq: &OscillatorySequence, p: f64, eps: &[f64], quad_n: usize) -> Result<ConvergenceTable> {
    seq.check()?;
    check_eps(eps, quad_n)?;
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::validation(format!("exponent {p} not in (1, ∞)")));
    }
    let pairing =
        eps.par_iter().map(|&e| gauss(0.0, 1.0, quad_n, |x| seq.eval(x, e).abs().powf(p)).powf(1.0 / p)).collect();
    let f = |a: Func1| gauss(0.0, 1.0, LIMIT_PANELS, |s| a.eval(s).abs().powf(p));
    let limit = (f(seq.g) * f(seq.phi1) * f(seq.phi2)).powf(1.0 / p);
    Ok(ConvergenceTable::new("strong_norm", eps, pairing, limit))
}

/// A rational shift `num/den`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shift {
    pub num: i64,
    pub den: u64,
}

impl Shift {
    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

/// ε_k = base^{-k} along the listed exponents.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpsRule {
    pub base: u64,
    pub exponents: Vec<u32>,
}

impl EpsRule {
    pub fn eps(&self) -> Vec<f64> {
        self.exponents.iter().map(|&k| (self.base as f64).powi(-(k as i32))).collect()
    }
}

fn modpow(b: u64, mut e: u64, m: u64) -> u64 {
    let mut r = 1u128 % m as u128;
    let mut bb = b as u128 % m as u128;
    while e > 0 {
        if e & 1 == 1 {
            r = r * bb % m as u128;
        }
        bb = bb * bb % m as u128;
        e >>= 1;
    }
    r as u64
}

/// Fractional part of `num · base^e / den`, exactly.
fn frac_scaled(s: Shift, base: u64, e: u64) -> Ratio<u64> {
    let num = s.num.rem_euclid(s.den as i64) as u128;
    let r = (num * modpow(base, e, s.den) as u128 % s.den as u128) as u64;
    Ratio::new(r, s.den)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TranslateOutcome {
    Settled { r: String, s: String, table: ConvergenceTable },
    Inconclusive { reason: String, cluster: Vec<(String, String)> },
}

/// Pairing of `u_ε(· + a)` against the limit `u₀(x + a, y + r, z + s)` where `(r, s)`
/// are the exact fractional parts of `a/ε` and `a/ε²` along the rule.
pub fn test_translate(
    seq: &OscillatorySequence,
    psi: &TestFunction,
    shift: Shift,
    rule: &EpsRule,
    quad_n: usize,
) -> Result<TranslateOutcome> {
    seq.check()?;
    if shift.den == 0 || rule.base < 2 || rule.exponents.is_empty() {
        return Err(Error::validation("shift denominator must be > 0, base >= 2, exponents non-empty"));
    }
    let eps = rule.eps();
    check_eps(&eps, quad_n)?;
    let cluster: Vec<(Ratio<u64>, Ratio<u64>)> = rule
        .exponents
        .iter()
        .map(|&k| (frac_scaled(shift, rule.base, k as u64), frac_scaled(shift, rule.base, 2 * k as u64)))
        .collect();
    if cluster.windows(2).any(|w| w[0] != w[1]) {
        return Ok(TranslateOutcome::Inconclusive {
            reason: "fractional parts of a/eps and a/eps^2 do not settle along the rule".into(),
            cluster: cluster.iter().map(|(r, s)| (r.to_string(), s.to_string())).collect(),
        });
    }
    let (r, s) = cluster[0];
    let (rf, sf) = (*r.numer() as f64 / *r.denom() as f64, *s.numer() as f64 / *s.denom() as f64);
    let a = shift.value();
    let shifted = |x: f64, e: f64| {
        let xa = x + a;
        if !(0.0..=1.0).contains(&xa) {
            return 0.0;
        }
        seq.g.eval(xa) * seq.phi1.eval(xa / e) * seq.phi2.eval(xa / (e * e))
    };
    let pairing = eps.par_iter().map(|&e| gauss(0.0, 1.0, quad_n, |x| shifted(x, e) * psi.at_scale(x, e))).collect();
    let gx = split_gauss(-a, |x| {
        let xa = x + a;
        if (0.0..=1.0).contains(&xa) {
            seq.g.eval(xa) * psi.x.eval(x)
        } else {
            0.0
        }
    });
    let limit = gx
        * gauss(0.0, 1.0, LIMIT_PANELS, |y| seq.phi1.eval(y + rf) * psi.y.eval(y))
        * gauss(0.0, 1.0, LIMIT_PANELS, |z| seq.phi2.eval(z + sf) * psi.z.eval(z));
    Ok(TranslateOutcome::Settled { r: r.to_string(), s: s.to_string(), table: ConvergenceTable::new("translate", &eps, pairing, limit) })
}

/// Gauss rule on [0, 1] split at an interior breakpoint, if any.
fn split_gauss(brk: f64, f: impl Fn(f64) -> f64) -> f64 {
    if brk > 0.0 && brk < 1.0 {
        gauss(0.0, brk, LIMIT_PANELS, &f) + gauss(brk, 1.0, LIMIT_PANELS, &f)
    } else {
        gauss(0.0, 1.0, LIMIT_PANELS, f)
    }
}

/// Convolution test output, with the Young checks of every evaluated convolution.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvolutionResult {
    pub table: ConvergenceTable,
    pub young: Vec<YoungReport>,
}

/// Factorized limit `∭ (u₀ ∗∗ v₀) f`.
pub fn convolution_limit(u: &OscillatorySequence, v: &OscillatorySequence, f: &TestFunction) -> f64 {
    // macroscopic factor: zero extension of both g's limits the inner range to [0, x]
    let gx = gauss(0.0, 1.0, LIMIT_PANELS, |x| {
        f.x.eval(x) * gauss(0.0, x, 64, |s| u.g.eval(x - s) * v.g.eval(s))
    });
    let torus = |a: Func1, b: Func1, t: Func1| {
        gauss(0.0, 1.0, 128, |y| t.eval(y) * gauss(0.0, 1.0, 128, |eta| a.eval(y - eta) * b.eval(eta)))
    };
    gx * torus(u.phi1, v.phi1, f.y) * torus(u.phi2, v.phi2, f.z)
}

/// `∫₀¹ (u_ε ∗ v_ε)(x) f(x, x/ε, x/ε²) dx` by FFT convolution of midpoint samples.
pub fn test_convolution(
    u: &OscillatorySequence,
    v: &OscillatorySequence,
    f: &TestFunction,
    eps: &[f64],
    quad_n: usize,
) -> Result<ConvolutionResult> {
    u.check()?;
    v.check()?;
    check_eps(eps, quad_n)?;
    let h = 1.0 / quad_n as f64;
    let rows: Vec<(f64, YoungReport)> = eps
        .par_iter()
        .map(|&e| {
            let xs: Vec<f64> = (0..quad_n).map(|i| (i as f64 + 0.5) * h).collect();
            let us: Vec<f64> = xs.iter().map(|&x| u.eval(x, e)).collect();
            let vs: Vec<f64> = xs.iter().map(|&x| v.eval(x, e)).collect();
            // c[k] ≈ (u ∗ v)((k + 1) h)
            let c = discrete_convolution(&us, &vs, h);
            let pairing: f64 = (0..quad_n)
                .map(|k| {
                    let x = (k + 1) as f64 * h;
                    let w = if k + 1 == quad_n { 0.5 } else { 1.0 };
                    w * c[k] * f.at_scale(x, e)
                })
                .sum::<f64>()
                * h;
            let young = young_report(&c, &us, &vs, h, YoungExponents { p: 2.0, q: 2.0, m: f64::INFINITY })?;
            Ok((pairing, young))
        })
        .collect::<Result<_>>()?;
    let limit = convolution_limit(u, v, f);
    let (pairing, young): (Vec<f64>, Vec<YoungReport>) = rows.into_iter().unzip();
    Ok(ConvolutionResult { table: ConvergenceTable::new("convolution", eps, pairing, limit), young })
}

/// Built-in smooth demo: compactly supported macro factors and mean-nonzero fast factors.
pub fn demo_sequences() -> (OscillatorySequence, OscillatorySequence, TestFunction) {
    let u = OscillatorySequence {
        g: Func1::SinSquared { amp: 1.0 },
        phi1: Func1::Cosine { base: 1.0, amp: 0.5, freq: 1 },
        phi2: Func1::Sine { base: 1.0, amp: 0.5, freq: 1 },
    };
    let v = OscillatorySequence {
        g: Func1::SinSquared { amp: 2.0 },
        phi1: Func1::Cosine { base: 1.0, amp: 0.8, freq: 1 },
        phi2: Func1::Cosine { base: 1.0, amp: 0.3, freq: 1 },
    };
    let f = TestFunction {
        x: Func1::Linear { a: 1.0, b: 0.5 },
        y: Func1::Cosine { base: 1.0, amp: 1.0, freq: 1 },
        z: Func1::Cosine { base: 0.5, amp: 1.0, freq: 1 },
    };
    (u, v, f)
}
