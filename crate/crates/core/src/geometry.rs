//! Periodic unit cells and their rasterized ε-scale images on the unit box.
//!
//! Grids are two-dimensional. A flat index `i * n + j` addresses the cell whose
//! centre is `((i + 1/2)/n, (j + 1/2)/n)`, so `i` runs along the first axis.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Parametric description of a marked region inside the unit cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Empty,
    Full,
    /// Points with `y[axis - 1] < threshold`; `axis` is 1-based.
    HalfPlane { axis: usize, threshold: f64 },
    /// Axis-aligned square of the given side centred at (1/2, 1/2).
    CenteredBox { side: f64 },
    /// Disk centred at (1/2, 1/2).
    CenteredDisk { radius: f64 },
    /// Rows indexed by the second axis, columns by the first.
    Bitmap { rows: Vec<String> },
}

impl Shape {
    pub fn half_plane(axis: usize, threshold: f64) -> Self {
        Shape::HalfPlane { axis, threshold }
    }

    pub fn centered_box(side: f64) -> Self {
        Shape::CenteredBox { side }
    }

    pub fn centered_disk(radius: f64) -> Self {
        Shape::CenteredDisk { radius }
    }

    /// Closed-form area of the region, when there is one.
    pub fn analytic_measure(&self) -> Option<f64> {
        match *self {
            Shape::Empty => Some(0.0),
            Shape::Full => Some(1.0),
            Shape::HalfPlane { threshold, .. } => Some(threshold.clamp(0.0, 1.0)),
            Shape::CenteredBox { side } => Some(side.clamp(0.0, 1.0).powi(2)),
            Shape::CenteredDisk { radius } => {
                if radius <= 0.5 {
                    Some(PI * radius * radius)
                } else {
                    None
                }
            }
            Shape::Bitmap { .. } => None,
        }
    }

    fn contains(&self, y: [f64; 2]) -> bool {
        match *self {
            Shape::Empty => false,
            Shape::Full => true,
            Shape::HalfPlane { axis, threshold } => y[axis - 1] < threshold,
            Shape::CenteredBox { side } => {
                (y[0] - 0.5).abs() < 0.5 * side && (y[1] - 0.5).abs() < 0.5 * side
            }
            Shape::CenteredDisk { radius } => {
                let (a, b) = (y[0] - 0.5, y[1] - 0.5);
                a * a + b * b < radius * radius
            }
            Shape::Bitmap { .. } => unreachable!("bitmaps are rasterized directly"),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Shape::HalfPlane { axis, threshold } => {
                if !(1..=2).contains(&axis) {
                    return Err(Error::validation(format!("half_plane axis {axis} not in 1..=2")));
                }
                if !(0.0..=1.0).contains(&threshold) {
                    return Err(Error::validation(format!("half_plane threshold {threshold} outside [0,1]")));
                }
            }
            Shape::CenteredBox { side } if !(0.0..=1.0).contains(&side) => {
                return Err(Error::validation(format!("box side {side} outside [0,1]")));
            }
            Shape::CenteredDisk { radius } if !(0.0..=0.5).contains(&radius) => {
                return Err(Error::validation(format!("disk radius {radius} outside [0,1/2]")));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Rasterized characteristic function of a periodic cell region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellMask {
    n: usize,
    cells: Vec<bool>,
}

impl CellMask {
    /// Builds a mask straight from a boolean grid (`i * n + j` layout).
    pub fn from_cells(n: usize, cells: Vec<bool>) -> Result<Self> {
        if cells.len() != n * n {
            return Err(Error::contract(format!("mask has {} cells, expected {}", cells.len(), n * n)));
        }
        Ok(CellMask { n, cells })
    }

    pub fn empty(n: usize) -> Self {
        CellMask { n, cells: vec![false; n * n] }
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    /// Exact pixel fraction.
    pub fn measure(&self) -> f64 {
        self.count() as f64 / (self.n * self.n) as f64
    }

    pub fn is_empty(&self) -> bool {
        self.cells.iter().all(|&c| !c)
    }

    /// Value at integer cell coordinates, wrapped periodically.
    pub fn at(&self, i: isize, j: isize) -> bool {
        let n = self.n as isize;
        let (i, j) = (i.rem_euclid(n) as usize, j.rem_euclid(n) as usize);
        self.cells[i * self.n + j]
    }

    /// Value at a point of the torus (coordinates taken modulo 1).
    pub fn sample(&self, y: [f64; 2]) -> bool {
        let n = self.n as f64;
        let idx = |v: f64| ((v - v.floor()) * n).floor() as isize;
        self.at(idx(y[0]), idx(y[1]))
    }

    pub fn complement(&self) -> Self {
        CellMask { n: self.n, cells: self.cells.iter().map(|&c| !c).collect() }
    }

    /// Number of 4-connected components of the marked region on the torus.
    pub fn connected_components(&self) -> usize {
        let n = self.n;
        let mut seen = vec![false; n * n];
        let mut count = 0;
        let mut stack = Vec::new();
        for start in 0..n * n {
            if !self.cells[start] || seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(k) = stack.pop() {
                let (i, j) = ((k / n) as isize, (k % n) as isize);
                for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                    let ii = (i + di).rem_euclid(n as isize) as usize;
                    let jj = (j + dj).rem_euclid(n as isize) as usize;
                    let kk = ii * n + jj;
                    if self.cells[kk] && !seen[kk] {
                        seen[kk] = true;
                        stack.push(kk);
                    }
                }
            }
        }
        count
    }

    /// Plain PBM text (`P1` header, one row per second-axis index).
    pub fn to_pbm(&self) -> String {
        let mut s = format!("P1\n{} {}\n", self.n, self.n);
        for j in 0..self.n {
            for i in 0..self.n {
                s.push(if self.cells[i * self.n + j] { '1' } else { '0' });
            }
            s.push('\n');
        }
        s
    }
}

/// Rasterizes a shape at cell centres. Requires `n >= 4`.
pub fn make_cell(shape: &Shape, n: usize) -> Result<CellMask> {
    if n < 4 {
        return Err(Error::validation(format!("cell resolution {n} < 4")));
    }
    shape.validate()?;
    let cells = match shape {
        Shape::Bitmap { rows } => bitmap_cells(rows, n)?,
        _ => {
            let h = 1.0 / n as f64;
            let mut cells = vec![false; n * n];
            for i in 0..n {
                for j in 0..n {
                    cells[i * n + j] = shape.contains([(i as f64 + 0.5) * h, (j as f64 + 0.5) * h]);
                }
            }
            cells
        }
    };
    let mask = CellMask { n, cells };
    if let Some(a) = shape.analytic_measure() {
        let m = mask.measure();
        if a > 0.0 && a < 1.0 && (m == 0.0 || m == 1.0) {
            return Err(Error::DegenerateGeometry(format!(
                "region of area {a:.4} rasterizes to measure {m} at n = {n}"
            )));
        }
    }
    Ok(mask)
}

fn bitmap_cells(rows: &[String], n: usize) -> Result<Vec<bool>> {
    if rows.len() != n || rows.iter().any(|r| r.chars().count() != n) {
        return Err(Error::validation(format!("bitmap must be {n} rows of {n} characters")));
    }
    let mut cells = vec![false; n * n];
    for (j, row) in rows.iter().enumerate() {
        for (i, ch) in row.chars().enumerate() {
            cells[i * n + j] = match ch {
                '1' => true,
                '0' => false,
                c => return Err(Error::validation(format!("bitmap character {c:?}"))),
            };
        }
    }
    Ok(cells)
}

/// χ₂ at a point given its crack and pore memberships; χ₁ is the negation.
pub fn chi2_point(y_in_y2: bool, z_in_z2: bool) -> bool {
    y_in_y2 || z_in_z2
}

/// Whether the pore scale is resolved or dropped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    TwoLevel,
    CracksOnly,
}

/// Converts ε to the integer 1/ε, rejecting anything else.
pub fn inverse_epsilon(epsilon: f64) -> Result<usize> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::validation(format!("epsilon {epsilon} not in (0, 1]")));
    }
    let k = (1.0 / epsilon).round();
    if (1.0 / epsilon - k).abs() > 1e-9 * k {
        return Err(Error::UnderResolved(format!("1/epsilon = {} is not an integer", 1.0 / epsilon)));
    }
    Ok(k as usize)
}

/// Partition of the unit box into skeleton (χ₁) and fluid (χ₂) cells at scale ε.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DomainMasks {
    pub grid_n: usize,
    pub epsilon: f64,
    pub mode: Mode,
    /// χ_{Y₂}(x/ε): crack cells.
    pub cracks: Vec<bool>,
    /// (1 − χ_{Y₂}(x/ε)) χ_{Z₂}(x/ε²): pore cells.
    pub pores: Vec<bool>,
    pub chi1: Vec<bool>,
    pub chi2: Vec<bool>,
}

impl DomainMasks {
    pub fn inv_epsilon(&self) -> usize {
        (1.0 / self.epsilon).round() as usize
    }

    /// Grid cells per ε-period.
    pub fn cells_per_period(&self) -> usize {
        self.grid_n / self.inv_epsilon()
    }

    pub fn fluid_fraction(&self) -> f64 {
        self.chi2.iter().filter(|&&c| c).count() as f64 / self.chi2.len() as f64
    }

    /// Fast variable y = frac(x/ε) at the centre of cell (i, j).
    pub fn fast_y(&self, i: usize, j: usize) -> [f64; 2] {
        let m = self.cells_per_period();
        [((i % m) as f64 + 0.5) / m as f64, ((j % m) as f64 + 0.5) / m as f64]
    }
}

fn period_index(i: usize, cells_per_period: usize, mask_n: usize) -> isize {
    // floor(((i mod m) + 1/2) * n / m) in integer arithmetic
    (((2 * (i % cells_per_period) + 1) * mask_n) / (2 * cells_per_period)) as isize
}

/// Samples χ₂^ε(x) = χ_{Y₂}(x/ε) + (1 − χ_{Y₂}(x/ε)) χ_{Z₂}(x/ε²) at cell centres of an
/// `grid_n`² grid. `z_mask = None` selects cracks-only mode.
pub fn rasterize_epsilon(
    y_mask: &CellMask,
    z_mask: Option<&CellMask>,
    epsilon: f64,
    grid_n: usize,
) -> Result<DomainMasks> {
    let k = inverse_epsilon(epsilon)?;
    if grid_n % k != 0 || grid_n / k < 4 {
        return Err(Error::UnderResolved(format!(
            "1/epsilon = {k} must divide N = {grid_n} with at least 4 cells per period"
        )));
    }
    let my = grid_n / k;
    let mz = match z_mask {
        Some(_) => {
            let k2 = k * k;
            if grid_n % k2 != 0 || grid_n / k2 < 4 {
                return Err(Error::UnderResolved(format!(
                    "1/epsilon^2 = {k2} must divide N = {grid_n} with at least 4 cells per pore period"
                )));
            }
            grid_n / k2
        }
        None => 0,
    };
    let total = grid_n * grid_n;
    let (mut cracks, mut pores) = (vec![false; total], vec![false; total]);
    for i in 0..grid_n {
        for j in 0..grid_n {
            let idx = i * grid_n + j;
            let ny = y_mask.resolution();
            let c = y_mask.at(period_index(i, my, ny), period_index(j, my, ny));
            let z = match z_mask {
                Some(zm) => {
                    let nz = zm.resolution();
                    zm.at(period_index(i, mz, nz), period_index(j, mz, nz))
                }
                None => false,
            };
            cracks[idx] = c;
            pores[idx] = !c && z;
        }
    }
    let chi2: Vec<bool> = cracks.iter().zip(&pores).map(|(&c, &p)| chi2_point(c, p)).collect();
    let chi1 = chi2.iter().map(|&c| !c).collect();
    Ok(DomainMasks {
        grid_n,
        epsilon,
        mode: if z_mask.is_some() { Mode::TwoLevel } else { Mode::CracksOnly },
        cracks,
        pores,
        chi1,
        chi2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_plane_and_box_measures() {
        assert_eq!(make_cell(&Shape::half_plane(1, 0.5), 64).unwrap().measure(), 0.5);
        assert_eq!(make_cell(&Shape::centered_box(0.5), 64).unwrap().measure(), 0.25);
    }

    #[test]
    fn disk_measure_close_to_area() {
        let m = make_cell(&Shape::centered_disk(0.3), 128).unwrap().measure();
        assert!((m - PI * 0.09).abs() <= 2.0 / 128.0, "{m}");
    }

    #[test]
    fn tiny_region_is_degenerate() {
        let err = make_cell(&Shape::centered_disk(0.05), 4).unwrap_err();
        assert!(matches!(err, Error::DegenerateGeometry(_)));
        assert!(make_cell(&Shape::half_plane(1, 0.5), 3).is_err());
    }

    #[test]
    fn chi_truth_table() {
        assert!(chi2_point(true, false));
        assert!(chi2_point(true, true));
        assert!(chi2_point(false, true));
        assert!(!chi2_point(false, false));
    }

    #[test]
    fn empty_and_full_cells() {
        let e = make_cell(&Shape::Empty, 8).unwrap();
        let d = rasterize_epsilon(&e, Some(&e), 0.5, 16).unwrap();
        assert!(d.chi1.iter().all(|&c| c));
        let f = make_cell(&Shape::Full, 8).unwrap();
        let d = rasterize_epsilon(&f, None, 0.25, 16).unwrap();
        assert!(d.chi2.iter().all(|&c| c));
    }

    #[test]
    fn two_level_fluid_fraction() {
        let y = make_cell(&Shape::half_plane(1, 0.5), 16).unwrap();
        let z = make_cell(&Shape::centered_box(0.5), 16).unwrap();
        let d = rasterize_epsilon(&y, Some(&z), 0.25, 256).unwrap();
        assert!((d.fluid_fraction() - 0.625).abs() < 1.0 / 256.0);
    }

    #[test]
    fn under_resolution_refused() {
        let y = make_cell(&Shape::half_plane(1, 0.5), 8).unwrap();
        assert!(matches!(rasterize_epsilon(&y, Some(&y), 0.125, 128), Err(Error::UnderResolved(_))));
        assert!(matches!(rasterize_epsilon(&y, None, 1.0 / 3.0, 64), Err(Error::UnderResolved(_))));
        assert!(rasterize_epsilon(&y, None, 0.3, 64).is_err());
    }

    #[test]
    fn pbm_round_trip() {
        let m = make_cell(&Shape::centered_box(0.5), 8).unwrap();
        let text = m.to_pbm();
        let rows: Vec<String> = text.lines().skip(2).map(String::from).collect();
        let back = make_cell(&Shape::Bitmap { rows }, 8).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn connectivity_counts() {
        let b = make_cell(&Shape::centered_box(0.5), 16).unwrap();
        assert_eq!(b.connected_components(), 1);
        assert_eq!(b.complement().connected_components(), 1);
        let rows = ["1000", "0000", "0010", "0000"].map(String::from).to_vec();
        let m = make_cell(&Shape::Bitmap { rows }, 4).unwrap();
        assert_eq!(m.connected_components(), 2);
    }
}
