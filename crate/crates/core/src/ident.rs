//! Identification pipeline: lag statistics `Π_n`, the S-transform, frame
//! inversion, and the exact covariance of the echo-based estimator.
//!
//! Lags are stored as a single index `n ∈ [0, J·n_g)` in units of `T`;
//! the split `n = m·J + r` with `r ∈ 1..=J`, `m ∈ 0..n_g` only happens
//! inside [`s_transform`].

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::channel::{echo_second_moment, true_acf, Echo, EchoEnsemble, TrueAcf};
use crate::error::{Error, Result};
use crate::gabor::{build_frame_matrices, root_of_unity, FrameMatrices, WeightSequence};
use crate::grid::{Cover, Grid, ScatteringFunction};
use crate::C64;

const CHUNK: usize = 64;

/// Constant relating echo products to `Π`:
/// `E[conj(y[s + n·n_t])·y[s]] = dt·dg²·Π_n[s]`.
///
/// One `dg` comes from the quadrature weight of the Doppler sum in the
/// impulse response, which enters once per echo factor, and one `dt·dg` from
/// `E|η|² = C·dt·dg`; the `dg` of the latter is the one already inside the
/// ACF. Locked by a regression test against the exact echo moments.
pub fn pi_normalizer(grid: &Grid) -> f64 {
    let dg = grid.dg();
    grid.dt() * dg * dg
}

/// `Π[n, s]` for lags `n ∈ [0, J·n_g)` and intra-period samples `s ∈ [0, n_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiTable {
    grid: Grid,
    values: DMatrix<C64>,
}

impl PiTable {
    pub fn new(grid: Grid, values: DMatrix<C64>) -> Result<Self> {
        if values.shape() != (grid.periods(), grid.n_t()) {
            return Err(Error::Mismatch(format!(
                "Π table is {:?}, expected ({}, {})",
                values.shape(),
                grid.periods(),
                grid.n_t()
            )));
        }
        Ok(PiTable { grid, values })
    }
    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn values(&self) -> &DMatrix<C64> {
        &self.values
    }
    /// `Π_n[s]` with `n` taken modulo `J·n_g`.
    pub fn get(&self, n: i64, s: usize) -> C64 {
        self.values[(n.rem_euclid(self.grid.periods() as i64) as usize, s)]
    }
}

/// `Π_n(t) = Σ_k conj(c_{k+n})·c_k·P_h(nT, t − kT)`.
///
/// `t − kT` lands in delay cell `a` only for `k ≡ −a`, so the sum runs
/// over the delay cells of the cover.
pub fn pi_from_acf(acf: &TrueAcf, w: &WeightSequence) -> Result<PiTable> {
    let g = acf.grid();
    if w.j() != g.j() {
        return Err(Error::Mismatch(format!(
            "weights have period {}, J = {}",
            w.j(),
            g.j()
        )));
    }
    let mut delay_cells: Vec<usize> = acf.cover().cells().iter().map(|&(a, _)| a).collect();
    delay_cells.sort_unstable();
    delay_cells.dedup();
    let n_t = g.n_t();
    let values = DMatrix::from_fn(g.periods(), n_t, |n, s| {
        let n = n as i64;
        delay_cells
            .iter()
            .map(|&a| {
                let k = -(a as i64);
                w.at(k + n).conj() * w.at(k) * acf.composite(n, a * n_t + s)
            })
            .sum()
    });
    Ok(PiTable {
        grid: g.clone(),
        values,
    })
}

/// Unnormalized products `conj(y[(s + n·n_t) mod N])·y[s]` of one echo.
pub fn echo_products(grid: &Grid, echo: &Echo) -> DMatrix<C64> {
    let y = echo.samples();
    let (n_t, n) = (grid.n_t(), grid.total_samples());
    DMatrix::from_fn(grid.periods(), n_t, |lag, s| {
        y[(s + lag * n_t) % n].conj() * y[s]
    })
}

/// `Π̂_n[s] = (1/(L·dt·dg²))·Σ_l conj(y_l[s + n·n_t])·y_l[s]`, an unbiased
/// estimate of `Π_n[s]`.
///
/// Echoes are summed in fixed chunks of 64 whose partial sums are added in
/// order, so the result does not depend on the thread count.
pub fn pi_hat(echoes: &EchoEnsemble) -> Result<PiTable> {
    if echoes.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let g = echoes.grid();
    let partial: Vec<DMatrix<C64>> = echoes
        .echoes()
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = DMatrix::zeros(g.periods(), g.n_t());
            for e in chunk {
                acc += echo_products(g, e);
            }
            acc
        })
        .collect();
    let mut sum = DMatrix::zeros(g.periods(), g.n_t());
    for p in partial {
        sum += p;
    }
    let scale = 1.0 / (echoes.len() as f64 * pi_normalizer(g));
    Ok(PiTable {
        grid: g.clone(),
        values: sum * C64::new(scale, 0.0),
    })
}

/// `S[r, s, q]`, `r ∈ 1..=J`, stored as one `n_t × n_g` matrix per `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct STable {
    grid: Grid,
    values: Vec<DMatrix<C64>>,
}

impl STable {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    /// Matrix for `r` (1-based).
    pub fn for_r(&self, r: usize) -> &DMatrix<C64> {
        &self.values[r - 1]
    }
    pub fn get(&self, r: usize, s: usize, q: usize) -> C64 {
        self.values[r - 1][(s, q)]
    }
}

/// `S_r(s, q) = (1/B)·Σ_{m=0}^{n_g−1} exp(2πi·q·dg·T·(mJ+r))·Π_{mJ+r}[s]`.
///
/// `q·dg·T·(mJ + r) = q·(mJ + r)/(J·n_g)`, so the `m`-sum is a length-`n_g`
/// DFT; it is evaluated directly.
pub fn s_transform(pi: &PiTable) -> STable {
    let g = pi.grid();
    let (j, n_t, n_g, periods) = (g.j(), g.n_t(), g.n_g(), g.periods());
    let inv_b = 1.0 / g.b();
    let values = (1..=j)
        .map(|r| {
            DMatrix::from_fn(n_t, n_g, |s, q| {
                let mut acc = C64::new(0.0, 0.0);
                for m in 0..n_g {
                    let lag = m * j + r;
                    acc += root_of_unity((q * lag) as i64, periods) * pi.get(lag as i64, s);
                }
                acc * inv_b
            })
        })
        .collect();
    STable {
        grid: g.clone(),
        values,
    }
}

/// Complex patches returned by [`reconstruct`], before any clean-up.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    grid: Grid,
    cover: Cover,
    patches: Vec<DMatrix<C64>>,
}

/// What [`Reconstruction::clamped`] changed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClampReport {
    /// Occupied points with negative real part, set to 0.
    pub negative_points: usize,
    /// Nonzero points in padding cells, set to 0.
    pub padding_points: usize,
    pub max_abs_imag: f64,
}

impl Reconstruction {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn cover(&self) -> &Cover {
        &self.cover
    }
    pub fn patches(&self) -> &[DMatrix<C64>] {
        &self.patches
    }
    pub fn max_abs_imag(&self) -> f64 {
        self.patches
            .iter()
            .flat_map(|p| p.iter())
            .fold(0.0, |m, z| m.max(z.im.abs()))
    }
    /// Real parts, unmodified.
    pub fn real_patches(&self) -> Vec<DMatrix<f64>> {
        self.patches.iter().map(|p| p.map(|z| z.re)).collect()
    }
    /// `max |Re Ĉ − C| / max |C|` over all cells, or the absolute error
    /// when `C ≡ 0`.
    pub fn max_relative_error(&self, truth: &ScatteringFunction) -> Result<f64> {
        if truth.grid() != &self.grid || truth.cover() != &self.cover {
            return Err(Error::Mismatch(
                "truth has a different grid or cover".into(),
            ));
        }
        let err = self
            .patches
            .iter()
            .zip(truth.patches())
            .flat_map(|(p, t)| p.iter().zip(t.iter()).map(|(z, c)| (z.re - c).abs()))
            .fold(0.0, f64::max);
        let scale = truth.max_value();
        Ok(if scale > 0.0 { err / scale } else { err })
    }
    /// Discards imaginary parts, zeroes padding cells and clamps negative
    /// values to 0.
    pub fn clamped(&self) -> (ScatteringFunction, ClampReport) {
        let mut report = ClampReport {
            max_abs_imag: self.max_abs_imag(),
            ..ClampReport::default()
        };
        let patches = self
            .patches
            .iter()
            .enumerate()
            .map(|(j, p)| {
                p.map(|z| {
                    if self.cover.is_padding(j) {
                        if z.re != 0.0 {
                            report.padding_points += 1;
                        }
                        0.0
                    } else if z.re < 0.0 || z.re.is_nan() {
                        report.negative_points += 1;
                        0.0
                    } else {
                        z.re
                    }
                })
            })
            .collect();
        let sf = ScatteringFunction::new(self.grid.clone(), self.cover.clone(), patches)
            .expect("clamped values are finite and nonnegative");
        (sf, report)
    }
}

/// `C_j(s, q) = Σ_r V[j, r]·S_r(s, q)`.
pub fn reconstruct(s: &STable, fm: &FrameMatrices, cover: &Cover) -> Result<Reconstruction> {
    let g = s.grid();
    if fm.cells() != cover.cells() {
        return Err(Error::Mismatch(
            "frame matrices were built for another cover".into(),
        ));
    }
    if cover.len() != g.j() {
        return Err(Error::Mismatch(format!(
            "cover has {} cells, J = {}",
            cover.len(),
            g.j()
        )));
    }
    let v = fm.v();
    let patches = (0..g.j())
        .map(|j| {
            let mut acc = DMatrix::zeros(g.n_t(), g.n_g());
            for r in 1..=g.j() {
                acc += s.for_r(r) * v[(j, r - 1)];
            }
            acc
        })
        .collect();
    Ok(Reconstruction {
        grid: g.clone(),
        cover: cover.clone(),
        patches,
    })
}

/// Recovers `C` from exact second-order statistics of the echo.
pub fn identify_oracle(sf: &ScatteringFunction, w: &WeightSequence) -> Result<Reconstruction> {
    let fm = build_frame_matrices(w, sf.cover())?;
    let pi = pi_from_acf(&true_acf(sf), w)?;
    reconstruct(&s_transform(&pi), &fm, sf.cover())
}

/// Estimator output: the raw complex reconstruction and its clamped form.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub raw: Reconstruction,
    pub clamped: ScatteringFunction,
    pub clamp: ClampReport,
    pub cond: f64,
}

pub fn estimate(echoes: &EchoEnsemble, w: &WeightSequence, cover: &Cover) -> Result<Estimate> {
    let fm = build_frame_matrices(w, cover)?;
    let pi = pi_hat(echoes)?;
    let raw = reconstruct(&s_transform(&pi), &fm, cover)?;
    let (clamped, clamp) = raw.clamped();
    Ok(Estimate {
        raw,
        clamped,
        clamp,
        cond: fm.cond(),
    })
}

/// The three Isserlis pairings of `E[conj(A)·B·C·conj(D)]` for
/// `Π̂_{n1}[s]·conj(Π̂_{n2}[s])` with `A = y[s + n1·n_t]`, `B = D = y[s]`,
/// `C = y[s + n2·n_t]`, before normalization.
#[derive(Debug, Clone, Copy)]
pub struct Pairings {
    /// `E[conj(A)·B]·E[C·conj(D)]`: the product of the means.
    pub mean_product: C64,
    /// `E[conj(A)·C]·E[B·conj(D)]`.
    pub cross: C64,
    /// `E[conj(A)·conj(D)]·E[B·C]`: pseudo-covariances, zero for a proper channel.
    pub pseudo: C64,
}

pub fn pihat_pairings(
    sf: &ScatteringFunction,
    w: &WeightSequence,
    n1: i64,
    n2: i64,
    s: usize,
) -> Pairings {
    let g = sf.grid();
    let at = |n: i64| (s + n.rem_euclid(g.periods() as i64) as usize * g.n_t()) % g.total_samples();
    let (xa, xb, xc) = (at(n1), s, at(n2));
    let mean_a = echo_second_moment(sf, w, xa, xb);
    let mean_c = echo_second_moment(sf, w, xc, xb).conj();
    Pairings {
        mean_product: mean_a * mean_c,
        cross: echo_second_moment(sf, w, xa, xc) * echo_second_moment(sf, w, xb, xb),
        pseudo: C64::new(0.0, 0.0),
    }
}

/// `Cov(Π̂_{n1}[s], Π̂_{n2}[s]) = E[(Π̂1 − EΠ̂1)·conj(Π̂2 − EΠ̂2)]` for an
/// ensemble of `l` echoes: the fourth moment minus the mean product, divided
/// by `l` and the squared normalizer.
pub fn pihat_covariance(
    sf: &ScatteringFunction,
    w: &WeightSequence,
    n1: i64,
    n2: i64,
    s: usize,
    l: usize,
) -> C64 {
    let p = pihat_pairings(sf, w, n1, n2, s);
    let fourth = p.mean_product + p.cross + p.pseudo;
    let norm = pi_normalizer(sf.grid());
    (fourth - p.mean_product) / (l as f64 * norm * norm)
}

/// Covariance of `Π̂_{m1·J+r}[s]` and `Π̂_{m2·J+r}[s]`, `r ∈ 1..=J`.
pub fn pihat_covariance_exact(
    sf: &ScatteringFunction,
    w: &WeightSequence,
    m1: usize,
    m2: usize,
    r: usize,
    s: usize,
    l: usize,
) -> C64 {
    let j = sf.grid().j();
    pihat_covariance(sf, w, (m1 * j + r) as i64, (m2 * j + r) as i64, s, l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_spreading, simulate_ensemble, sound};
    use crate::gabor::random_weights;
    use crate::grid::{assemble, build_cover, build_grid};

    fn setup(
        j: usize,
        n_t: usize,
        n_g: usize,
        n_a: usize,
        n_b: usize,
        mask: &[Vec<bool>],
    ) -> (Grid, Cover) {
        let g = build_grid(j, 1.0, n_t, n_g, n_a, n_b).unwrap();
        let c = build_cover(&g, mask).unwrap();
        (g, c)
    }

    fn max_abs(m: &DMatrix<C64>) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn pi_of_zero_acf_is_zero() {
        let (g, c) = setup(3, 2, 2, 3, 1, &[vec![true], vec![true], vec![false]]);
        let sf = ScatteringFunction::zeros(&g, &c);
        let pi = pi_from_acf(&true_acf(&sf), &random_weights(3, 1).unwrap()).unwrap();
        assert_eq!(max_abs(pi.values()), 0.0);
    }

    #[test]
    fn pi_collapses_to_acf_for_unit_weights_and_one_delay_cell() {
        // occupied cells share delay cell a = 0
        let (g, c) = setup(2, 3, 2, 1, 2, &[vec![true, true]]);
        let sf = ScatteringFunction::random(&g, &c, 6);
        let acf = true_acf(&sf);
        let pi = pi_from_acf(&acf, &WeightSequence::ones(2).unwrap()).unwrap();
        for n in 0..g.periods() as i64 {
            for s in 0..3 {
                assert!((pi.get(n, s) - acf.composite(n, s)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn normalizer_matches_exact_echo_moments() {
        // one-point scattering function on a 1-cell instance
        let (g, c) = setup(2, 2, 3, 2, 1, &[vec![true], vec![false]]);
        let mut patches = vec![DMatrix::zeros(2, 3); 2];
        patches[0][(1, 2)] = 3.0;
        let sf = ScatteringFunction::new(g.clone(), c, patches).unwrap();
        let w = random_weights(2, 8).unwrap();
        let pi = pi_from_acf(&true_acf(&sf), &w).unwrap();
        let s = 1;
        for n in 0..g.periods() {
            let raw = echo_second_moment(&sf, &w, s + n * g.n_t(), s);
            let expected = pi.get(n as i64, s);
            assert!(
                (raw / pi_normalizer(&g) - expected).norm() <= 1e-13 * expected.norm().max(1.0)
            );
        }
        assert_eq!(pi_normalizer(&g), g.dt() * g.dg() * g.dg());
    }

    #[test]
    fn pi_hat_edge_cases() {
        let (g, c) = setup(2, 2, 2, 2, 1, &[vec![true], vec![true]]);
        let empty = EchoEnsemble::new(g.clone(), vec![]).unwrap();
        assert!(matches!(pi_hat(&empty), Err(Error::EmptyEnsemble)));

        let zeros =
            EchoEnsemble::new(g.clone(), vec![Echo::new(vec![C64::new(0.0, 0.0); 8]); 3]).unwrap();
        assert_eq!(max_abs(pi_hat(&zeros).unwrap().values()), 0.0);

        let sf = ScatteringFunction::random(&g, &c, 1);
        let one = simulate_ensemble(&sf, &random_weights(2, 3).unwrap(), 1, 4).unwrap();
        let pi = pi_hat(&one).unwrap();
        let y = one.echoes()[0].samples();
        for (s, ys) in y.iter().enumerate().take(2) {
            let v = pi.get(0, s);
            assert_eq!(v.im, 0.0);
            assert!(v.re >= 0.0);
            assert!((v.re - ys.norm_sqr() / pi_normalizer(&g)).abs() <= 1e-14 * v.re);
        }
    }

    #[test]
    fn pi_hat_is_thread_count_independent() {
        let (g, c) = setup(3, 1, 2, 3, 1, &[vec![true], vec![true], vec![true]]);
        let sf = ScatteringFunction::random(&g, &c, 1);
        let ens = simulate_ensemble(&sf, &random_weights(3, 3).unwrap(), 300, 4).unwrap();
        let a = pi_hat(&ens).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool.install(|| pi_hat(&ens).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn s_transform_examples() {
        let g = build_grid(3, 0.5, 2, 4, 3, 1).unwrap();
        let zero = PiTable::new(g.clone(), DMatrix::zeros(12, 2)).unwrap();
        let st = s_transform(&zero);
        for r in 1..=3 {
            assert_eq!(max_abs(st.for_r(r)), 0.0);
        }
        for r0 in 1..=3usize {
            let mut v = DMatrix::zeros(12, 2);
            for s in 0..2 {
                v[(r0, s)] = C64::new(1.0, 0.0);
            }
            let st = s_transform(&PiTable::new(g.clone(), v).unwrap());
            for r in 1..=3 {
                for s in 0..2 {
                    for q in 0..4 {
                        let expected = if r == r0 {
                            let angle =
                                std::f64::consts::TAU * q as f64 * g.dg() * g.t() * r0 as f64;
                            C64::from_polar(1.0 / g.b(), angle)
                        } else {
                            C64::new(0.0, 0.0)
                        };
                        assert!((st.get(r, s, q) - expected).norm() < 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn s_transform_is_linear() {
        let g = build_grid(5, 1.0, 2, 3, 5, 1).unwrap();
        let mut rng = crate::seed::rng(3);
        use rand::Rng;
        let mut rand_table = || {
            DMatrix::from_fn(15, 2, |_, _| {
                C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
            })
        };
        let (p1, p2) = (rand_table(), rand_table());
        let alpha = C64::new(0.3, -1.7);
        let combo = PiTable::new(g.clone(), &p1 * alpha + &p2).unwrap();
        let s1 = s_transform(&PiTable::new(g.clone(), p1).unwrap());
        let s2 = s_transform(&PiTable::new(g.clone(), p2).unwrap());
        let s12 = s_transform(&combo);
        for r in 1..=5 {
            let diff = s1.for_r(r) * alpha + s2.for_r(r) - s12.for_r(r);
            assert!(max_abs(&diff) <= 1e-12 * max_abs(s12.for_r(r)).max(1.0));
        }
    }

    #[test]
    fn reconstruct_zero() {
        let (g, c) = setup(2, 2, 2, 2, 1, &[vec![true], vec![true]]);
        let fm = build_frame_matrices(&random_weights(2, 1).unwrap(), &c).unwrap();
        let st = s_transform(&PiTable::new(g, DMatrix::zeros(4, 2)).unwrap());
        let rec = reconstruct(&st, &fm, &c).unwrap();
        assert!(rec.patches().iter().all(|p| max_abs(p) == 0.0));
    }

    #[test]
    fn oracle_recovers_exactly() {
        let (g, c) = setup(
            5,
            3,
            2,
            5,
            5,
            &[
                vec![true, false, false, false, false],
                vec![false, false, true, false, false],
                vec![false, true, false, false, true],
                vec![false, false, false, false, false],
                vec![false, false, false, true, false],
            ],
        );
        let sf = ScatteringFunction::random(&g, &c, 12);
        let w = random_weights(5, 12).unwrap();
        let rec = identify_oracle(&sf, &w).unwrap();
        assert!(rec.max_relative_error(&sf).unwrap() <= 1e-9);
        assert!(rec.max_abs_imag() <= 1e-9 * sf.max_value());
    }

    #[test]
    fn oracle_single_cell_constant() {
        let (g, c) = setup(3, 2, 2, 3, 1, &[vec![false], vec![true], vec![false]]);
        let sf = ScatteringFunction::constant(&g, &c, 0.25).unwrap();
        let rec = identify_oracle(&sf, &random_weights(3, 2).unwrap()).unwrap();
        assert!(rec.max_relative_error(&sf).unwrap() <= 1e-9);
    }

    #[test]
    fn oracle_overspread_box() {
        // 2×2 box with J = 2: box area 2, two diagonal cells of area 1/2 each
        let (g, c) = setup(2, 3, 3, 2, 2, &[vec![true, false], vec![false, true]]);
        assert_eq!(g.n_a() as f64 * g.n_b() as f64 * g.b() * g.t(), 2.0);
        let sf = ScatteringFunction::random(&g, &c, 5);
        let rec = identify_oracle(&sf, &random_weights(2, 5).unwrap()).unwrap();
        assert!(rec.max_relative_error(&sf).unwrap() <= 1e-9);
    }

    #[test]
    fn permuting_cover_gives_same_assembly() {
        let (g, c) = setup(
            3,
            2,
            2,
            3,
            3,
            &[
                vec![true, false, false],
                vec![false, false, true],
                vec![false, true, false],
            ],
        );
        let sf = ScatteringFunction::random(&g, &c, 7);
        let w = random_weights(3, 7).unwrap();
        let rec = identify_oracle(&sf, &w).unwrap();

        let order = [2usize, 0, 1];
        let cells: Vec<_> = order.iter().map(|&i| c.cells()[i]).collect();
        let permuted_cover = Cover::new(&g, cells, 3).unwrap();
        let patches: Vec<_> = order.iter().map(|&i| sf.patch(i).clone()).collect();
        let permuted = ScatteringFunction::new(g.clone(), permuted_cover, patches).unwrap();
        let rec_p = identify_oracle(&permuted, &w).unwrap();

        let (a, _) = rec.clamped();
        let (b, _) = rec_p.clamped();
        let diff = (assemble(&a) - assemble(&b)).abs().max();
        assert!(diff <= 1e-12);
    }

    #[test]
    fn estimate_of_zero_channel_is_zero() {
        let (g, c) = setup(2, 2, 2, 2, 1, &[vec![true], vec![true]]);
        let sf = ScatteringFunction::zeros(&g, &c);
        let w = random_weights(2, 9).unwrap();
        let ens = simulate_ensemble(&sf, &w, 10, 0).unwrap();
        let est = estimate(&ens, &w, &c).unwrap();
        assert!(est
            .clamped
            .patches()
            .iter()
            .all(|p| p.iter().all(|&v| v == 0.0)));
        assert!(est.raw.patches().iter().all(|p| max_abs(p) == 0.0));
    }

    #[test]
    fn covariance_edge_cases() {
        let (g, c) = setup(2, 2, 2, 2, 1, &[vec![true], vec![false]]);
        let w = random_weights(2, 1).unwrap();
        let zero = ScatteringFunction::zeros(&g, &c);
        assert_eq!(
            pihat_covariance_exact(&zero, &w, 0, 1, 1, 0, 1),
            C64::new(0.0, 0.0)
        );
        let sf = ScatteringFunction::random(&g, &c, 2);
        for m in 0..2 {
            for r in 1..=2 {
                for s in 0..2 {
                    let v = pihat_covariance_exact(&sf, &w, m, m, r, s, 10);
                    assert!(v.im.abs() <= 1e-15 * v.re.abs());
                    assert!(v.re >= 0.0);
                }
            }
        }
        // scales as 1/L
        let a = pihat_covariance_exact(&sf, &w, 0, 1, 2, 1, 1);
        let b = pihat_covariance_exact(&sf, &w, 0, 1, 2, 1, 4);
        assert!((a / 4.0 - b).norm() <= 1e-15 * a.norm());
    }

    #[test]
    fn monte_carlo_mean_of_pi_hat() {
        let (g, c) = setup(2, 1, 1, 2, 1, &[vec![true], vec![true]]);
        let sf = ScatteringFunction::random(&g, &c, 21);
        let w = random_weights(2, 21).unwrap();
        let exact = pi_from_acf(&true_acf(&sf), &w).unwrap();
        let draws = 10_000u64;
        let norm = pi_normalizer(&g);
        let shape = (g.periods(), g.n_t());
        let mut sum = DMatrix::<C64>::zeros(shape.0, shape.1);
        let mut sq_re = DMatrix::<f64>::zeros(shape.0, shape.1);
        let mut sq_im = DMatrix::<f64>::zeros(shape.0, shape.1);
        for l in 0..draws {
            let e = sound(&sample_spreading(&sf, 1000 + l), &w).unwrap();
            let p = echo_products(&g, &e) / C64::new(norm, 0.0);
            sq_re += p.map(|z| z.re * z.re);
            sq_im += p.map(|z| z.im * z.im);
            sum += p;
        }
        let n = draws as f64;
        for i in 0..shape.0 {
            for s in 0..shape.1 {
                let mean = sum[(i, s)] / n;
                let se_re = ((sq_re[(i, s)] / n - mean.re * mean.re) / n).sqrt();
                let se_im = ((sq_im[(i, s)] / n - mean.im * mean.im) / n).sqrt();
                let target = exact.get(i as i64, s);
                assert!((mean.re - target.re).abs() <= 5.0 * se_re + 1e-15);
                assert!((mean.im - target.im).abs() <= 5.0 * se_im + 1e-15);
            }
        }
    }
}
