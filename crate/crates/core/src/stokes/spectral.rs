//! Fast diagonalization of separable constant-coefficient operators.

use nalgebra::DMatrix;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Second-difference matrices (unit spacing) on the 1-D index sets used by the grid.
#[derive(Clone, Copy, Debug, Hash, PartialEq, Eq)]
pub(crate) enum Kind1d {
    /// Circulant on n nodes.
    Periodic,
    /// n − 1 interior nodes of n intervals, zero at both ends.
    Dirichlet,
    /// n nodes half a cell away from no-slip walls (end diagonal 3).
    Wall,
    /// n cells with zero-flux ends (end diagonal 1).
    Neumann,
}

pub(crate) struct Eig1d {
    pub q: DMatrix<f64>,
    pub lam: Vec<f64>,
}

fn matrix(kind: Kind1d, n: usize) -> DMatrix<f64> {
    let size = if kind == Kind1d::Dirichlet { n - 1 } else { n };
    let mut t = DMatrix::zeros(size, size);
    for i in 0..size {
        t[(i, i)] = 2.0;
        if i + 1 < size {
            t[(i, i + 1)] = -1.0;
            t[(i + 1, i)] = -1.0;
        }
    }
    match kind {
        Kind1d::Periodic => {
            t[(0, size - 1)] -= 1.0;
            t[(size - 1, 0)] -= 1.0;
        }
        Kind1d::Dirichlet => {}
        Kind1d::Wall => {
            t[(0, 0)] = 3.0;
            t[(size - 1, size - 1)] = 3.0;
        }
        Kind1d::Neumann => {
            t[(0, 0)] = 1.0;
            t[(size - 1, size - 1)] = 1.0;
        }
    }
    t
}

type Cache = Mutex<HashMap<(Kind1d, usize), Arc<Eig1d>>>;

pub(crate) fn eig1d(kind: Kind1d, n: usize) -> Arc<Eig1d> {
    static CACHE: OnceLock<Cache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(e) = cache.lock().unwrap().get(&(kind, n)) {
        return e.clone();
    }
    let se = matrix(kind, n).symmetric_eigen();
    let e = Arc::new(Eig1d { q: se.eigenvectors, lam: se.eigenvalues.iter().copied().collect() });
    cache.lock().unwrap().insert((kind, n), e.clone());
    e
}

/// Inverse (pseudo-inverse on the null space) of `sa·Tₐ ⊗ I + sb·I ⊗ T_b + shift`
/// acting on row-major `ra × rb` arrays.
pub(crate) struct FastDiag {
    a: Arc<Eig1d>,
    b: Arc<Eig1d>,
    inv: DMatrix<f64>,
}

impl FastDiag {
    pub fn new(a: Arc<Eig1d>, b: Arc<Eig1d>, sa: f64, sb: f64, shift: f64) -> Self {
        let (ra, rb) = (a.lam.len(), b.lam.len());
        let mut inv = DMatrix::zeros(ra, rb);
        let mut dmax = 0.0f64;
        for i in 0..ra {
            for j in 0..rb {
                dmax = dmax.max(sa * a.lam[i] + sb * b.lam[j] + shift);
            }
        }
        for i in 0..ra {
            for j in 0..rb {
                let d = sa * a.lam[i] + sb * b.lam[j] + shift;
                inv[(i, j)] = if d > 1e-10 * dmax { 1.0 / d } else { 0.0 };
            }
        }
        FastDiag { a, b, inv }
    }

    pub fn rows(&self) -> usize {
        self.a.lam.len()
    }

    pub fn cols(&self) -> usize {
        self.b.lam.len()
    }

    /// Applies the inverse in place to a row-major `rows × cols` block.
    pub fn apply(&self, data: &mut [f64]) {
        let (ra, rb) = (self.rows(), self.cols());
        debug_assert_eq!(data.len(), ra * rb);
        let x = DMatrix::from_row_slice(ra, rb, data);
        let mut y = self.a.q.tr_mul(&x) * &self.b.q;
        y.component_mul_assign(&self.inv);
        let z = &self.a.q * y * self.b.q.transpose();
        for i in 0..ra {
            for j in 0..rb {
                data[i * rb + j] = z[(i, j)];
            }
        }
    }
}
