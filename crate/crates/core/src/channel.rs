//! Discrete WSSUS channel: spreading realizations, delta-train echoes and
//! exact second-order statistics.
//!
//! The received signal lives on a circular axis of `N = J·n_g·n_t` samples,
//! sample `x` at time `x·dt`. Every Doppler on the grid, `γ = (b·n_g + q)·dg`,
//! satisfies `γ·dt = (b·n_g + q)/N`, so each modulation is an exact DFT
//! frequency of the axis.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gabor::{root_of_unity, WeightSequence};
use crate::grid::{Cover, Grid, ScatteringFunction};
use crate::{seed, C64};

/// One draw of the spreading function on the fine grid, stored per cell
/// like [`ScatteringFunction`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpreadingRealization {
    grid: Grid,
    cover: Cover,
    eta: Vec<DMatrix<C64>>,
}

impl SpreadingRealization {
    pub fn new(grid: Grid, cover: Cover, eta: Vec<DMatrix<C64>>) -> Result<Self> {
        if eta.len() != cover.len() {
            return Err(Error::Mismatch(format!(
                "{} patches for {} cells",
                eta.len(),
                cover.len()
            )));
        }
        for (j, p) in eta.iter().enumerate() {
            if p.shape() != (grid.n_t(), grid.n_g()) {
                return Err(Error::Mismatch(format!(
                    "patch {j} has shape {:?}",
                    p.shape()
                )));
            }
            if cover.is_padding(j) && p.iter().any(|z| *z != C64::new(0.0, 0.0)) {
                let (a, b) = cover.cells()[j];
                return Err(Error::MassOutsideCover { a, b });
            }
        }
        Ok(SpreadingRealization { grid, cover, eta })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn cover(&self) -> &Cover {
        &self.cover
    }
    pub fn patches(&self) -> &[DMatrix<C64>] {
        &self.eta
    }
}

/// Draws `η_j[s,q] = sqrt(C_j[s,q]·dt·dg/2)·(g1 + i·g2)` with `g1, g2`
/// standard normal, visiting cells, then `s`, then `q`.
///
/// The draw is proper (`E[η²] = 0`) and `E|η|² = C·dt·dg`.
pub fn sample_spreading(sf: &ScatteringFunction, seed: u64) -> SpreadingRealization {
    let grid = sf.grid();
    let cell_area = grid.dt() * grid.dg();
    let mut rng = seed::rng(seed);
    let eta = sf
        .patches()
        .iter()
        .map(|patch| {
            let mut out = DMatrix::zeros(grid.n_t(), grid.n_g());
            for s in 0..grid.n_t() {
                for q in 0..grid.n_g() {
                    let g1: f64 = StandardNormal.sample(&mut rng);
                    let g2: f64 = StandardNormal.sample(&mut rng);
                    let scale = (patch[(s, q)] * cell_area / 2.0).sqrt();
                    out[(s, q)] = C64::new(scale * g1, scale * g2);
                }
            }
            out
        })
        .collect();
    SpreadingRealization {
        grid: grid.clone(),
        cover: sf.cover().clone(),
        eta,
    }
}

/// One received echo on the circular axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Echo {
    samples: Vec<C64>,
}

impl Echo {
    pub fn new(samples: Vec<C64>) -> Self {
        Echo { samples }
    }
    pub fn samples(&self) -> &[C64] {
        &self.samples
    }
    pub fn len(&self) -> usize {
        self.samples.len()
    }
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Precomputed state for sounding many realizations over one grid, cover
/// and weight sequence.
#[derive(Debug, Clone)]
pub struct Sounder {
    grid: Grid,
    cover: Cover,
    weights: WeightSequence,
    /// `exp(2πi·m/N)`, `m = 0..N`.
    phase: Vec<C64>,
}

impl Sounder {
    pub fn new(grid: &Grid, cover: &Cover, weights: &WeightSequence) -> Result<Self> {
        if weights.j() != grid.j() || cover.len() != grid.j() {
            return Err(Error::Mismatch(format!(
                "grid has J = {}, weights {}, cover {}",
                grid.j(),
                weights.j(),
                cover.len()
            )));
        }
        let n = grid.total_samples();
        let phase = (0..n)
            .map(|m| C64::from_polar(1.0, TAU * m as f64 / n as f64))
            .collect();
        Ok(Sounder {
            grid: grid.clone(),
            cover: cover.clone(),
            weights: weights.clone(),
            phase,
        })
    }

    /// Echo of the weighted delta train `Σ_k c_k δ(t − kT)`:
    ///
    /// ```text
    /// y[x] = Σ_k c_k · h(x, x − k·n_t),   h(x, τ) = Σ_γ η[τ, γ]·exp(2πi·γ·x·dt)·dg
    /// ```
    ///
    /// With `x = p·n_t + s`, the delay sample `x − k·n_t` falls in cell `a`
    /// exactly when `k ≡ p − a` modulo `J·n_g`, at intra-cell offset `s`.
    pub fn sound(&self, real: &SpreadingRealization) -> Result<Echo> {
        if real.grid != self.grid || real.cover != self.cover {
            return Err(Error::Mismatch(
                "realization does not match the sounder".into(),
            ));
        }
        let g = &self.grid;
        let (n_t, n_g, n) = (g.n_t(), g.n_g(), g.total_samples());
        let dg = g.dg();
        let mut y = vec![C64::new(0.0, 0.0); n];
        for (x, out) in y.iter_mut().enumerate() {
            let (p, s) = (x / n_t, x % n_t);
            let mut acc = C64::new(0.0, 0.0);
            for (j, &(a, b)) in self.cover.cells().iter().enumerate() {
                if self.cover.is_padding(j) {
                    continue;
                }
                let eta = &real.eta[j];
                let mut inner = C64::new(0.0, 0.0);
                for q in 0..n_g {
                    let gamma = b * n_g + q;
                    inner += eta[(s, q)] * self.phase[(gamma * x) % n];
                }
                acc += self.weights.at(p as i64 - a as i64) * inner;
            }
            *out = acc * dg;
        }
        Ok(Echo { samples: y })
    }
}

pub fn sound(real: &SpreadingRealization, w: &WeightSequence) -> Result<Echo> {
    Sounder::new(real.grid(), real.cover(), w)?.sound(real)
}

/// `L` independent echoes; echo `l` is drawn with seed `seed_base + l`
/// (wrapping), so the ensemble does not depend on thread scheduling.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoEnsemble {
    grid: Grid,
    echoes: Vec<Echo>,
}

impl EchoEnsemble {
    pub fn new(grid: Grid, echoes: Vec<Echo>) -> Result<Self> {
        let n = grid.total_samples();
        if let Some(bad) = echoes.iter().position(|e| e.len() != n) {
            return Err(Error::Mismatch(format!(
                "echo {bad} has {} samples, expected {n}",
                echoes[bad].len()
            )));
        }
        if let Some(bad) = echoes.iter().position(|e| {
            e.samples
                .iter()
                .any(|z| !(z.re.is_finite() && z.im.is_finite()))
        }) {
            return Err(Error::Format(format!("echo {bad} has non-finite samples")));
        }
        Ok(EchoEnsemble { grid, echoes })
    }
    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn echoes(&self) -> &[Echo] {
        &self.echoes
    }
    pub fn len(&self) -> usize {
        self.echoes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.echoes.is_empty()
    }
}

pub fn simulate_ensemble(
    sf: &ScatteringFunction,
    w: &WeightSequence,
    l: usize,
    seed_base: u64,
) -> Result<EchoEnsemble> {
    let sounder = Sounder::new(sf.grid(), sf.cover(), w)?;
    let echoes = (0..l as u64)
        .into_par_iter()
        .map(|i| sounder.sound(&sample_spreading(sf, seed_base.wrapping_add(i))))
        .collect::<Result<Vec<_>>>()?;
    Ok(EchoEnsemble {
        grid: sf.grid().clone(),
        echoes,
    })
}

/// Exact autocorrelation of the impulse response on the circular lag grid
/// `{n·T : n = 0..J·n_g}`.
///
/// `cell(j, n, s) = Σ_q exp(−2πi·q·dg·nT)·C_j[s,q]·dg` is the per-patch
/// ACF; the composite ACF at delay sample `d = a·n_t + s` is the
/// phase-weighted sum `Σ_{j: a_j = a} exp(−2πi·nT·b_j·B)·cell(j, n, s)`.
#[derive(Debug, Clone)]
pub struct TrueAcf {
    grid: Grid,
    cover: Cover,
    cells: Vec<DMatrix<C64>>,
    composite: DMatrix<C64>,
}

impl TrueAcf {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn cover(&self) -> &Cover {
        &self.cover
    }
    /// `P_{h_j}(nT, s·dt)`, `n` taken modulo `J·n_g`.
    pub fn cell(&self, j: usize, n: i64, s: usize) -> C64 {
        let lag = n.rem_euclid(self.grid.periods() as i64) as usize;
        self.cells[j][(lag, s)]
    }
    /// `P_h(nT, d·dt)` for a delay sample `d` of the bounding box.
    pub fn composite(&self, n: i64, d: usize) -> C64 {
        let lag = n.rem_euclid(self.grid.periods() as i64) as usize;
        self.composite[(lag, d)]
    }
    /// Lags by delay samples, `J·n_g × n_a·n_t`.
    pub fn composite_table(&self) -> &DMatrix<C64> {
        &self.composite
    }
}

pub fn true_acf(sf: &ScatteringFunction) -> TrueAcf {
    let g = sf.grid();
    let (n_t, n_g, j, periods) = (g.n_t(), g.n_g(), g.j(), g.periods());
    let dg = g.dg();
    // q·dg·nT = q·n/(J·n_g)
    let cells: Vec<DMatrix<C64>> = sf
        .patches()
        .iter()
        .map(|patch| {
            DMatrix::from_fn(periods, n_t, |n, s| {
                let mut acc = C64::new(0.0, 0.0);
                for q in 0..n_g {
                    acc += root_of_unity(-((q * n) as i64), periods) * patch[(s, q)];
                }
                acc * dg
            })
        })
        .collect();
    let mut composite = DMatrix::zeros(periods, g.n_a() * n_t);
    for (cell, &(a, b)) in cells.iter().zip(sf.cover().cells()) {
        for n in 0..periods {
            // nT·b·B = n·b/J
            let phase = root_of_unity(-((n * b) as i64), j);
            for s in 0..n_t {
                composite[(n, a * n_t + s)] += phase * cell[(n, s)];
            }
        }
    }
    TrueAcf {
        grid: g.clone(),
        cover: sf.cover().clone(),
        cells,
        composite,
    }
}

/// `E[conj(y[x1])·y[x2]]` for echoes of `sf` sounded with `w`, summed
/// directly over the fine grid from `E|η|² = C·dt·dg`.
pub fn echo_second_moment(
    sf: &ScatteringFunction,
    w: &WeightSequence,
    x1: usize,
    x2: usize,
) -> C64 {
    let g = sf.grid();
    let (n_t, n_g, n) = (g.n_t(), g.n_g(), g.total_samples());
    let (x1, x2) = (x1 % n, x2 % n);
    if x1 % n_t != x2 % n_t {
        return C64::new(0.0, 0.0);
    }
    let s = x1 % n_t;
    let (p1, p2) = ((x1 / n_t) as i64, (x2 / n_t) as i64);
    let shift = (x2 + n - x1) % n;
    let mut acc = C64::new(0.0, 0.0);
    for (j, &(a, b)) in sf.cover().cells().iter().enumerate() {
        let patch = sf.patch(j);
        let weight = w.at(p1 - a as i64).conj() * w.at(p2 - a as i64);
        let mut inner = C64::new(0.0, 0.0);
        for q in 0..n_g {
            let gamma = b * n_g + q;
            inner += root_of_unity(((gamma * shift) % n) as i64, n) * patch[(s, q)];
        }
        acc += weight * inner;
    }
    let dg = g.dg();
    acc * (g.dt() * dg * dg * dg)
}
