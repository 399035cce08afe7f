//! Delay-Doppler discretization, the J-cell cover and patch bookkeeping.
//!
//! Delay lives on `{k·dt}` with `dt = T/n_t`, Doppler on `{q·dg}` with
//! `dg = B/n_g`, and `B = 1/(J·T)`. The bounding region is `n_a` delay cells
//! by `n_b` Doppler cells, translated to the first quadrant. A cell `(a, b)`
//! spans delays `[a·T, (a+1)·T)` and Dopplers `[b·B, (b+1)·B)`.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::seed;

/// Smallest divisor `d ≥ 2` of `n`, or `None` when `n` is prime or `n < 2`.
pub fn smallest_divisor(n: usize) -> Option<usize> {
    if n < 4 {
        return None;
    }
    let mut d = 2;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return Some(d);
        }
        d += 1;
    }
    None
}

pub fn is_prime(n: usize) -> bool {
    n >= 2 && smallest_divisor(n).is_none()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    j: usize,
    t: f64,
    b: f64,
    n_t: usize,
    n_g: usize,
    n_a: usize,
    n_b: usize,
}

impl Grid {
    /// Builds the grid, deriving `B = 1/(J·T)`.
    ///
    /// Besides primality of `J` this rejects boxes that do not fit on the
    /// circular axis (`n_a > J·n_g` or `n_b > J·n_t`) and boxes holding fewer
    /// than `J` cells that are distinct modulo `J`, since no cover could be
    /// padded to `J` entries.
    pub fn new(j: usize, t: f64, n_t: usize, n_g: usize, n_a: usize, n_b: usize) -> Result<Self> {
        if j < 2 {
            return Err(Error::TooSmall(j));
        }
        if let Some(divisor) = smallest_divisor(j) {
            return Err(Error::NotPrime {
                j,
                divisor,
                cofactor: j / divisor,
            });
        }
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "T must be a positive finite number of seconds, got {t}"
            )));
        }
        for (name, v) in [("n_t", n_t), ("n_g", n_g), ("n_a", n_a), ("n_b", n_b)] {
            if v == 0 {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be at least 1"
                )));
            }
        }
        if n_a > j * n_g {
            return Err(Error::InvalidParameter(format!(
                "n_a = {n_a} delay cells exceed the circular axis of J·n_g = {} periods",
                j * n_g
            )));
        }
        if n_b > j * n_t {
            return Err(Error::InvalidParameter(format!(
                "n_b = {n_b} Doppler cells exceed the axis bandwidth of J·n_t = {} cells",
                j * n_t
            )));
        }
        if n_a.min(j) * n_b.min(j) < j {
            return Err(Error::InvalidParameter(format!(
                "a {n_a}×{n_b} box cannot hold J = {j} cells distinct modulo J"
            )));
        }
        Ok(Grid {
            j,
            t,
            b: derive_b(j, t),
            n_t,
            n_g,
            n_a,
            n_b,
        })
    }

    pub fn j(&self) -> usize {
        self.j
    }
    pub fn t(&self) -> f64 {
        self.t
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn n_t(&self) -> usize {
        self.n_t
    }
    pub fn n_g(&self) -> usize {
        self.n_g
    }
    pub fn n_a(&self) -> usize {
        self.n_a
    }
    pub fn n_b(&self) -> usize {
        self.n_b
    }
    pub fn dt(&self) -> f64 {
        self.t / self.n_t as f64
    }
    pub fn dg(&self) -> f64 {
        self.b / self.n_g as f64
    }
    /// Number of periods of length `T` on the circular axis, `J·n_g`.
    pub fn periods(&self) -> usize {
        self.j * self.n_g
    }
    /// Samples on the circular axis, `J·n_g·n_t`.
    pub fn total_samples(&self) -> usize {
        self.periods() * self.n_t
    }
    /// Recomputes `B` and compares it bit for bit with the stored value.
    pub fn check_invariants(&self) -> bool {
        derive_b(self.j, self.t).to_bits() == self.b.to_bits()
    }
    pub fn same_shape(&self, other: &Grid) -> bool {
        self == other
    }
}

fn derive_b(j: usize, t: f64) -> f64 {
    1.0 / (j as f64 * t)
}

pub fn build_grid(
    j: usize,
    t: f64,
    n_t: usize,
    n_g: usize,
    n_a: usize,
    n_b: usize,
) -> Result<Grid> {
    Grid::new(j, t, n_t, n_g, n_a, n_b)
}

/// The `J` cell offsets `(a_j, b_j)`. The first `occupied` cells carry
/// scattering mass, the rest are padding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cover {
    cells: Vec<(usize, usize)>,
    occupied: usize,
}

impl Cover {
    /// Builds a cover from an explicit cell list.
    pub fn new(grid: &Grid, cells: Vec<(usize, usize)>, occupied: usize) -> Result<Self> {
        let j = grid.j();
        if cells.len() != j {
            return Err(Error::Mismatch(format!(
                "cover has {} cells, J = {j}",
                cells.len()
            )));
        }
        if occupied > j {
            return Err(Error::TooManyCells { count: occupied, j });
        }
        for &(a, b) in &cells {
            if a >= grid.n_a() || b >= grid.n_b() {
                return Err(Error::InvalidParameter(format!(
                    "cell ({a}, {b}) lies outside the {}×{} box",
                    grid.n_a(),
                    grid.n_b()
                )));
            }
        }
        check_aliasing(&cells, j)?;
        Ok(Cover { cells, occupied })
    }

    /// Builds a cover from an `n_a × n_b` occupancy mask.
    ///
    /// Occupied cells come first in row-major order; the remaining entries are
    /// the lexicographically smallest unused cells whose residues modulo `J`
    /// are not yet taken.
    pub fn from_mask(grid: &Grid, mask: &[Vec<bool>]) -> Result<Self> {
        let j = grid.j();
        if mask.len() != grid.n_a() || mask.iter().any(|row| row.len() != grid.n_b()) {
            return Err(Error::Mismatch(format!(
                "mask must be {}×{}",
                grid.n_a(),
                grid.n_b()
            )));
        }
        let mut cells: Vec<(usize, usize)> = Vec::with_capacity(j);
        for (a, row) in mask.iter().enumerate() {
            for (b, &set) in row.iter().enumerate() {
                if set {
                    cells.push((a, b));
                }
            }
        }
        let occupied = cells.len();
        if occupied > j {
            return Err(Error::TooManyCells { count: occupied, j });
        }
        check_aliasing(&cells, j)?;
        'fill: for a in 0..grid.n_a() {
            for b in 0..grid.n_b() {
                if cells.len() == j {
                    break 'fill;
                }
                let taken = cells.iter().any(|&(x, y)| x % j == a % j && y % j == b % j);
                if !taken {
                    cells.push((a, b));
                }
            }
        }
        debug_assert_eq!(cells.len(), j, "grid guarantees J residue classes");
        Ok(Cover { cells, occupied })
    }

    pub fn cells(&self) -> &[(usize, usize)] {
        &self.cells
    }
    pub fn occupied(&self) -> usize {
        self.occupied
    }
    pub fn len(&self) -> usize {
        self.cells.len()
    }
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
    pub fn is_padding(&self, j: usize) -> bool {
        j >= self.occupied
    }
    pub fn position(&self, a: usize, b: usize) -> Option<usize> {
        self.cells.iter().position(|&c| c == (a, b))
    }
    /// Covered area in units of `T·B`: always `J`, i.e. area 1.
    pub fn occupied_area(&self, grid: &Grid) -> f64 {
        self.occupied as f64 * grid.b() * grid.t()
    }
    /// Occupancy mask of the cover's occupied cells.
    pub fn mask(&self, grid: &Grid) -> Vec<Vec<bool>> {
        let mut m = vec![vec![false; grid.n_b()]; grid.n_a()];
        for &(a, b) in &self.cells[..self.occupied] {
            m[a][b] = true;
        }
        m
    }
}

fn check_aliasing(cells: &[(usize, usize)], j: usize) -> Result<()> {
    for (i, &first) in cells.iter().enumerate() {
        for &second in &cells[i + 1..] {
            if first.0 % j == second.0 % j && first.1 % j == second.1 % j {
                return Err(Error::AliasedCells { first, second, j });
            }
        }
    }
    Ok(())
}

pub fn build_cover(grid: &Grid, mask: &[Vec<bool>]) -> Result<Cover> {
    Cover::from_mask(grid, mask)
}

/// Scattering function on the fine grid, stored per cell. Patch `j` is an
/// `n_t × n_g` matrix whose entry `(s, q)` is `C` at delay `a_j·T + s·dt`
/// and Doppler `b_j·B + q·dg`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringFunction {
    grid: Grid,
    cover: Cover,
    patches: Vec<DMatrix<f64>>,
}

impl ScatteringFunction {
    pub fn new(grid: Grid, cover: Cover, patches: Vec<DMatrix<f64>>) -> Result<Self> {
        if patches.len() != cover.len() {
            return Err(Error::Mismatch(format!(
                "{} patches for {} cells",
                patches.len(),
                cover.len()
            )));
        }
        for (j, p) in patches.iter().enumerate() {
            if p.shape() != (grid.n_t(), grid.n_g()) {
                return Err(Error::Mismatch(format!(
                    "patch {j} is {:?}, expected ({}, {})",
                    p.shape(),
                    grid.n_t(),
                    grid.n_g()
                )));
            }
            for s in 0..grid.n_t() {
                for q in 0..grid.n_g() {
                    let value = p[(s, q)];
                    if !value.is_finite() || value < 0.0 {
                        return Err(Error::InvalidValue {
                            cell: j,
                            s,
                            q,
                            value,
                        });
                    }
                    if cover.is_padding(j) && value != 0.0 {
                        let (a, b) = cover.cells()[j];
                        return Err(Error::MassOutsideCover { a, b });
                    }
                }
            }
        }
        Ok(ScatteringFunction {
            grid,
            cover,
            patches,
        })
    }

    pub fn zeros(grid: &Grid, cover: &Cover) -> Self {
        let patches = vec![DMatrix::zeros(grid.n_t(), grid.n_g()); cover.len()];
        ScatteringFunction {
            grid: grid.clone(),
            cover: cover.clone(),
            patches,
        }
    }

    /// `C = value` on every occupied cell.
    pub fn constant(grid: &Grid, cover: &Cover, value: f64) -> Result<Self> {
        let patches = (0..cover.len())
            .map(|j| {
                let v = if cover.is_padding(j) { 0.0 } else { value };
                DMatrix::from_element(grid.n_t(), grid.n_g(), v)
            })
            .collect();
        Self::new(grid.clone(), cover.clone(), patches)
    }

    /// Values drawn uniformly from `(0, 1]` on every occupied cell.
    pub fn random(grid: &Grid, cover: &Cover, seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        let patches = (0..cover.len())
            .map(|j| {
                DMatrix::from_fn(grid.n_t(), grid.n_g(), |_, _| {
                    let u: f64 = rng.random();
                    if cover.is_padding(j) {
                        0.0
                    } else {
                        1.0 - u
                    }
                })
            })
            .collect();
        ScatteringFunction {
            grid: grid.clone(),
            cover: cover.clone(),
            patches,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn cover(&self) -> &Cover {
        &self.cover
    }
    pub fn patches(&self) -> &[DMatrix<f64>] {
        &self.patches
    }
    pub fn patch(&self, j: usize) -> &DMatrix<f64> {
        &self.patches[j]
    }
    pub fn max_value(&self) -> f64 {
        self.patches
            .iter()
            .flat_map(|p| p.iter())
            .fold(0.0, |m, &v| m.max(v))
    }
    /// Discrete squared 2-norm `Σ C²·dt·dg`.
    pub fn squared_norm(&self) -> f64 {
        let w = self.grid.dt() * self.grid.dg();
        self.patches.iter().map(|p| p.norm_squared()).sum::<f64>() * w
    }
    /// Pointwise linear combination `alpha·self + other`, same grid and cover.
    pub fn scaled_add(&self, alpha: f64, other: &ScatteringFunction) -> Result<Self> {
        if self.grid != other.grid || self.cover != other.cover {
            return Err(Error::Mismatch("grid or cover differs".into()));
        }
        let patches = self
            .patches
            .iter()
            .zip(&other.patches)
            .map(|(p, o)| p * alpha + o)
            .collect();
        Self::new(self.grid.clone(), self.cover.clone(), patches)
    }
}

/// Dense `n_a·n_t × n_b·n_g` array with patch `j` copied to block `(a_j, b_j)`.
pub fn assemble(sf: &ScatteringFunction) -> DMatrix<f64> {
    let g = &sf.grid;
    let mut dense = DMatrix::zeros(g.n_a() * g.n_t(), g.n_b() * g.n_g());
    for (&(a, b), patch) in sf.cover.cells().iter().zip(&sf.patches) {
        dense
            .view_mut((a * g.n_t(), b * g.n_g()), (g.n_t(), g.n_g()))
            .copy_from(patch);
    }
    dense
}

/// Inverse of [`assemble`]: cuts a dense array into the cover's patches.
pub fn extract_patches(
    dense: &DMatrix<f64>,
    grid: &Grid,
    cover: &Cover,
) -> Result<ScatteringFunction> {
    let (n_t, n_g) = (grid.n_t(), grid.n_g());
    if dense.shape() != (grid.n_a() * n_t, grid.n_b() * n_g) {
        return Err(Error::Mismatch(format!(
            "dense array is {:?}, expected ({}, {})",
            dense.shape(),
            grid.n_a() * n_t,
            grid.n_b() * n_g
        )));
    }
    for a in 0..grid.n_a() {
        for b in 0..grid.n_b() {
            let occupied = cover.position(a, b).is_some_and(|j| !cover.is_padding(j));
            if occupied {
                continue;
            }
            let block = dense.view((a * n_t, b * n_g), (n_t, n_g));
            if block.iter().any(|&v| v != 0.0) {
                return Err(Error::MassOutsideCover { a, b });
            }
        }
    }
    let patches = cover
        .cells()
        .iter()
        .map(|&(a, b)| dense.view((a * n_t, b * n_g), (n_t, n_g)).into_owned())
        .collect();
    ScatteringFunction::new(grid.clone(), cover.clone(), patches)
}
