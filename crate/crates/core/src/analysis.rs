//! Monte Carlo bias/variance harness for the echo-based estimator, and the
//! variance bound `4·‖V‖²·J²·‖C‖₂² / (L·B²)`.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::channel::{echo_second_moment, sample_spreading, Sounder};
use crate::error::{Error, Result};
use crate::gabor::{build_frame_matrices, root_of_unity, FrameMatrices, WeightSequence};
use crate::grid::{Cover, Grid, ScatteringFunction};
use crate::ident::{echo_products, pi_normalizer};
use crate::{seed, C64};

/// Accepted range for the variance ratio between `L` and `4·L` echoes.
pub const SCALING_RANGE: (f64, f64) = (2.67, 6.0);

/// Bias acceptance band in standard errors.
pub const BIAS_SIGMAS: f64 = 5.0;

/// `4·‖V‖²·J²·‖C‖₂² / (L·B²)` with the spectral norm of `V` and
/// `‖C‖₂² = Σ C²·dt·dg`.
pub fn variance_bound(fm: &FrameMatrices, grid: &Grid, l: usize, sf: &ScatteringFunction) -> f64 {
    bound_with_norm(fm.v_spectral_norm(), grid, l, sf)
}

/// Same bound with the Frobenius norm of `V`, which is never smaller.
pub fn variance_bound_frobenius(
    fm: &FrameMatrices,
    grid: &Grid,
    l: usize,
    sf: &ScatteringFunction,
) -> f64 {
    bound_with_norm(fm.v_frobenius_norm(), grid, l, sf)
}

fn bound_with_norm(v_norm: f64, grid: &Grid, l: usize, sf: &ScatteringFunction) -> f64 {
    let j = grid.j() as f64;
    let b = grid.b();
    4.0 * v_norm * v_norm * j * j * sf.squared_norm() / (l as f64 * b * b)
}

/// `Ĉ_j[s, q] = Σ_n weights[j][q][n]·Π̂_n[s]`: the estimator as a linear
/// functional of the lag table. Lag `n` belongs to `r = ((n − 1) mod J) + 1`.
#[derive(Debug, Clone)]
pub struct LinearEstimator {
    grid: Grid,
    weights: Vec<DMatrix<C64>>,
}

impl LinearEstimator {
    pub fn new(grid: &Grid, fm: &FrameMatrices) -> Self {
        let (j, n_g, periods) = (grid.j(), grid.n_g(), grid.periods());
        let inv_b = 1.0 / grid.b();
        let weights = (0..j)
            .map(|cell| {
                DMatrix::from_fn(n_g, periods, |q, n| {
                    let r = (n + j - 1) % j + 1;
                    fm.v()[(cell, r - 1)] * root_of_unity((q * n) as i64, periods) * inv_b
                })
            })
            .collect();
        LinearEstimator {
            grid: grid.clone(),
            weights,
        }
    }

    /// Applies the estimator to a (normalized) lag table, `J·n_g × n_t`.
    pub fn apply(&self, pi: &DMatrix<C64>) -> Vec<DMatrix<C64>> {
        // (n_g × P)·(P × n_t) is q × s; transpose to s × q
        self.weights.iter().map(|w| (w * pi).transpose()).collect()
    }

    /// Exact variance `E|Ĉ_j[s,q] − C_j[s,q]|²` of an `l`-echo estimate.
    pub fn exact_variance(
        &self,
        sf: &ScatteringFunction,
        w: &WeightSequence,
        l: usize,
    ) -> Vec<DMatrix<f64>> {
        let g = &self.grid;
        let (n_t, periods) = (g.n_t(), g.periods());
        let norm = pi_normalizer(g);
        let mut out = vec![DMatrix::zeros(n_t, g.n_g()); g.j()];
        for s in 0..n_t {
            // Gram matrix of the echo samples entering Π̂[·, s]
            let gram = DMatrix::from_fn(periods, periods, |a, b| {
                echo_second_moment(sf, w, s + a * n_t, s + b * n_t)
            });
            let factor = gram[(0, 0)].re / (l as f64 * norm * norm);
            for (cell, weights) in self.weights.iter().enumerate() {
                for q in 0..g.n_g() {
                    let lam = weights.row(q).transpose();
                    // Σ λ1·conj(λ2)·gram[n1, n2] = (conj λ)ᵀ·gramᵀ·λ
                    let quad = (lam.adjoint() * gram.transpose() * &lam)[(0, 0)];
                    out[cell][(s, q)] = factor * quad.re;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McConfig {
    /// Echoes per estimate.
    pub l: usize,
    pub trials: usize,
    pub seed: u64,
    /// Also run with `4·l` echoes and report the variance ratio.
    pub scaling_check: bool,
}

/// Per-point statistics across trials.
#[derive(Debug, Clone, PartialEq)]
pub struct PointStats {
    pub cell: usize,
    pub s: usize,
    pub q: usize,
    pub truth: f64,
    pub mean: C64,
    /// `Re(mean) − truth`.
    pub bias: f64,
    /// `Σ|Ĉ − mean|²/(trials − 1)` over trials.
    pub variance: f64,
    /// Standard error of the mean, `sqrt(variance/trials)`.
    pub std_error: f64,
    pub exact_variance: f64,
}

impl PointStats {
    pub fn within_bias_band(&self) -> bool {
        (self.mean - C64::new(self.truth, 0.0)).norm() <= BIAS_SIGMAS * self.std_error
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingCheck {
    pub l_small: usize,
    pub l_large: usize,
    pub variance_small: f64,
    pub variance_large: f64,
    pub ratio: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub grid: Grid,
    pub config: McConfig,
    pub cond: f64,
    pub v_spectral_norm: f64,
    pub v_frobenius_norm: f64,
    pub points: Vec<PointStats>,
    /// Mean across-trial variance over the fine grid of each patch.
    pub patch_variance: Vec<f64>,
    /// Mean across-trial variance over the fine grid of all patches.
    pub cover_averaged_variance: f64,
    pub exact_cover_averaged_variance: f64,
    /// Within-trial estimate of the cover-averaged variance, per trial.
    pub trial_variance: Vec<f64>,
    pub bound: f64,
    pub bound_frobenius: f64,
    pub scaling: Option<ScalingCheck>,
}

impl McReport {
    pub fn unbiased(&self) -> bool {
        self.points.iter().all(PointStats::within_bias_band)
    }
    /// `bound / cover-averaged variance`, `None` when the variance is zero.
    pub fn slack_ratio(&self) -> Option<f64> {
        (self.cover_averaged_variance > 0.0).then(|| self.bound / self.cover_averaged_variance)
    }
    pub fn bound_holds(&self) -> bool {
        self.cover_averaged_variance <= self.bound
    }
    pub fn trials_within_bound(&self) -> usize {
        self.trial_variance
            .iter()
            .filter(|&&v| v < self.bound || (v == 0.0 && self.bound == 0.0))
            .count()
    }

    /// Text record: `key=value` lines, then CSV blocks.
    pub fn to_text(&self) -> String {
        let g = &self.grid;
        let c = &self.config;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        kv("J", g.j().to_string());
        kv("T", format!("{:e}", g.t()));
        kv("B", format!("{:e}", g.b()));
        kv("n_t", g.n_t().to_string());
        kv("n_g", g.n_g().to_string());
        kv("n_a", g.n_a().to_string());
        kv("n_b", g.n_b().to_string());
        kv("L", c.l.to_string());
        kv("trials", c.trials.to_string());
        kv("mc_seed", c.seed.to_string());
        kv("rng", seed::GENERATOR.to_string());
        kv("cond", format!("{:e}", self.cond));
        kv("v_norm", "spectral".to_string());
        kv("v_spectral_norm", format!("{:e}", self.v_spectral_norm));
        kv("v_frobenius_norm", format!("{:e}", self.v_frobenius_norm));
        kv("bound", format!("{:e}", self.bound));
        kv("bound_frobenius", format!("{:e}", self.bound_frobenius));
        kv(
            "cover_averaged_variance",
            format!("{:e}", self.cover_averaged_variance),
        );
        kv(
            "exact_cover_averaged_variance",
            format!("{:e}", self.exact_cover_averaged_variance),
        );
        kv(
            "slack_ratio",
            self.slack_ratio()
                .map_or("none".into(), |s| format!("{s:e}")),
        );
        kv("bound_holds", self.bound_holds().to_string());
        kv(
            "trials_within_bound",
            format!(
                "{}/{}",
                self.trials_within_bound(),
                self.trial_variance.len()
            ),
        );
        kv("unbiased", self.unbiased().to_string());
        if let Some(sc) = &self.scaling {
            kv("scaling_L_large", sc.l_large.to_string());
            kv("scaling_variance_large", format!("{:e}", sc.variance_large));
            kv("scaling_ratio", format!("{:e}", sc.ratio));
            kv("scaling_passed", sc.passed.to_string());
        }
        out.push('\n');
        out.push_str("j,s,q,bias,variance\n");
        for p in &self.points {
            let _ = writeln!(
                out,
                "{},{},{},{:e},{:e}",
                p.cell, p.s, p.q, p.bias, p.variance
            );
        }
        out.push('\n');
        out.push_str("j,s,q,truth,mean_re,mean_im,std_error,exact_variance\n");
        for p in &self.points {
            let _ = writeln!(
                out,
                "{},{},{},{:e},{:e},{:e},{:e},{:e}",
                p.cell, p.s, p.q, p.truth, p.mean.re, p.mean.im, p.std_error, p.exact_variance
            );
        }
        out.push('\n');
        out.push_str("trial,cover_averaged_variance\n");
        for (t, v) in self.trial_variance.iter().enumerate() {
            let _ = writeln!(out, "{t},{v:e}");
        }
        out
    }
}

/// Running mean and sum of squared deviations of complex samples.
#[derive(Debug, Clone)]
struct Welford {
    count: usize,
    mean: Vec<C64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(len: usize) -> Self {
        Welford {
            count: 0,
            mean: vec![C64::new(0.0, 0.0); len],
            m2: vec![0.0; len],
        }
    }
    fn push(&mut self, xs: impl Iterator<Item = C64>) {
        self.count += 1;
        let n = self.count as f64;
        for ((x, mean), m2) in xs.zip(&mut self.mean).zip(&mut self.m2) {
            let delta = x - *mean;
            *mean += delta / n;
            *m2 += (delta.conj() * (x - *mean)).re;
        }
    }
    fn variance(&self, i: usize) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2[i] / (self.count - 1) as f64
        }
    }
}

struct TrialResult {
    estimate: Vec<C64>,
    /// Within-trial estimate of the variance of the trial mean, cover-averaged.
    variance: f64,
}

fn flatten(patches: &[DMatrix<C64>]) -> impl Iterator<Item = C64> + '_ {
    patches.iter().flat_map(|p| p.iter().copied())
}

fn run_trial(
    sounder: &Sounder,
    est: &LinearEstimator,
    sf: &ScatteringFunction,
    l: usize,
    trial_seed: u64,
) -> Result<TrialResult> {
    let g = sf.grid();
    let points = g.j() * g.n_t() * g.n_g();
    let norm = C64::new(pi_normalizer(g), 0.0);
    let mut acc = Welford::new(points);
    for i in 0..l as u64 {
        let echo = sounder.sound(&sample_spreading(sf, trial_seed.wrapping_add(i)))?;
        let pi = echo_products(g, &echo) / norm;
        acc.push(flatten(&est.apply(&pi)));
    }
    let variance = (0..points).map(|i| acc.variance(i)).sum::<f64>() / (points as f64 * l as f64);
    Ok(TrialResult {
        estimate: acc.mean,
        variance,
    })
}

fn run_trials(
    sounder: &Sounder,
    est: &LinearEstimator,
    sf: &ScatteringFunction,
    l: usize,
    trials: usize,
    master: u64,
) -> Result<Vec<TrialResult>> {
    (0..trials as u64)
        .into_par_iter()
        .map(|t| run_trial(sounder, est, sf, l, seed::mix(master, t)))
        .collect()
}

fn across_trials(results: &[TrialResult], points: usize) -> Welford {
    let mut w = Welford::new(points);
    for r in results {
        w.push(r.estimate.iter().copied());
    }
    w
}

/// Runs `trials` independent `L`-echo estimates of `sf_true`.
///
/// Trial `t` uses master seed `mix(seed, t)` and echo `l` of that trial the
/// seed `mix(seed, t) + l`; the optional `4·L` run uses `mix(mix(seed, u64::MAX), t)`.
pub fn monte_carlo(
    sf_true: &ScatteringFunction,
    w: &WeightSequence,
    cover: &Cover,
    config: McConfig,
) -> Result<McReport> {
    if config.trials < 2 {
        return Err(Error::InvalidParameter(
            "monte carlo needs at least 2 trials".into(),
        ));
    }
    if config.l == 0 {
        return Err(Error::InvalidParameter("L must be at least 1".into()));
    }
    if sf_true.cover() != cover {
        return Err(Error::Mismatch(
            "scattering function uses another cover".into(),
        ));
    }
    let g = sf_true.grid();
    let fm = build_frame_matrices(w, cover)?;
    let est = LinearEstimator::new(g, &fm);
    let sounder = Sounder::new(g, cover, w)?;
    let (n_t, n_g) = (g.n_t(), g.n_g());
    let points = g.j() * n_t * n_g;

    let results = run_trials(
        &sounder,
        &est,
        sf_true,
        config.l,
        config.trials,
        config.seed,
    )?;
    let stats = across_trials(&results, points);
    let exact = est.exact_variance(sf_true, w, config.l);

    // flatten order matches nalgebra's column-major storage: s fastest, then q
    let mut point_stats = Vec::with_capacity(points);
    for (cell, exact_patch) in exact.iter().enumerate() {
        for q in 0..n_g {
            for s in 0..n_t {
                let i = cell * n_t * n_g + q * n_t + s;
                let truth = sf_true.patch(cell)[(s, q)];
                let variance = stats.variance(i);
                point_stats.push(PointStats {
                    cell,
                    s,
                    q,
                    truth,
                    mean: stats.mean[i],
                    bias: stats.mean[i].re - truth,
                    variance,
                    std_error: (variance / config.trials as f64).sqrt(),
                    exact_variance: exact_patch[(s, q)],
                });
            }
        }
    }
    point_stats.sort_by_key(|p| (p.cell, p.s, p.q));
    let per_patch = n_t * n_g;
    let patch_variance = (0..g.j())
        .map(|cell| {
            point_stats[cell * per_patch..(cell + 1) * per_patch]
                .iter()
                .map(|p| p.variance)
                .sum::<f64>()
                / per_patch as f64
        })
        .collect::<Vec<_>>();
    let cover_averaged_variance = patch_variance.iter().sum::<f64>() / g.j() as f64;
    let exact_cover_averaged_variance = exact.iter().map(|m| m.sum()).sum::<f64>() / points as f64;

    let scaling = if config.scaling_check {
        let l_large = 4 * config.l;
        let large = run_trials(
            &sounder,
            &est,
            sf_true,
            l_large,
            config.trials,
            seed::mix(config.seed, u64::MAX),
        )?;
        let stats_large = across_trials(&large, points);
        let variance_large =
            (0..points).map(|i| stats_large.variance(i)).sum::<f64>() / points as f64;
        let ratio = cover_averaged_variance / variance_large;
        Some(ScalingCheck {
            l_small: config.l,
            l_large,
            variance_small: cover_averaged_variance,
            variance_large,
            ratio,
            passed: ratio >= SCALING_RANGE.0 && ratio <= SCALING_RANGE.1,
        })
    } else {
        None
    };

    Ok(McReport {
        grid: g.clone(),
        config,
        cond: fm.cond(),
        v_spectral_norm: fm.v_spectral_norm(),
        v_frobenius_norm: fm.v_frobenius_norm(),
        points: point_stats,
        patch_variance,
        cover_averaged_variance,
        exact_cover_averaged_variance,
        trial_variance: results.iter().map(|r| r.variance).collect(),
        bound: variance_bound(&fm, g, config.l, sf_true),
        bound_frobenius: variance_bound_frobenius(&fm, g, config.l, sf_true),
        scaling,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::simulate_ensemble;
    use crate::gabor::random_weights;
    use crate::grid::{build_cover, build_grid};
    use crate::ident::estimate;

    fn smallest() -> (Grid, Cover) {
        let g = build_grid(2, 1.0, 1, 1, 2, 2).unwrap();
        let c = build_cover(&g, &[vec![true, false], vec![false, true]]).unwrap();
        (g, c)
    }

    #[test]
    fn bound_examples() {
        let (g, c) = smallest();
        let w = random_weights(2, 4).unwrap();
        let fm = build_frame_matrices(&w, &c).unwrap();
        let zero = ScatteringFunction::zeros(&g, &c);
        assert_eq!(variance_bound(&fm, &g, 10, &zero), 0.0);

        let sf = ScatteringFunction::random(&g, &c, 4);
        let b1 = variance_bound(&fm, &g, 10, &sf);
        let b2 = variance_bound(&fm, &g, 20, &sf);
        assert!((b1 / 2.0 - b2).abs() <= 1e-15 * b1);
        assert!(variance_bound_frobenius(&fm, &g, 10, &sf) >= b1);
    }

    #[test]
    fn bound_hand_computed() {
        // J = 2, c ≡ 1, cover (0,0),(0,1): mixing = [[1,−1],[1,1]], V = ½[[1,1],[−1,1]],
        // whose singular values are both 1/√2, so ‖V‖² = 1/2.
        let g = build_grid(2, 1.0, 1, 1, 1, 2).unwrap();
        let c = build_cover(&g, &[vec![true, true]]).unwrap();
        let fm = build_frame_matrices(&WeightSequence::ones(2).unwrap(), &c).unwrap();
        let patches = vec![
            DMatrix::from_element(1, 1, 2.0),
            DMatrix::from_element(1, 1, 1.0),
        ];
        let sf = ScatteringFunction::new(g.clone(), c, patches).unwrap();
        // ‖C‖₂² = (4 + 1)·dt·dg = 5·1·0.5 = 2.5; B = 0.5
        // bound = 4·0.5·4·2.5/(L·0.25) = 80/L
        let bound = variance_bound(&fm, &g, 8, &sf);
        assert!((bound - 10.0).abs() < 1e-12, "{bound}");
    }

    #[test]
    fn linear_estimator_matches_pipeline() {
        let g = build_grid(3, 1.0, 2, 2, 3, 2).unwrap();
        let c = build_cover(
            &g,
            &[vec![true, false], vec![false, true], vec![true, false]],
        )
        .unwrap();
        let sf = ScatteringFunction::random(&g, &c, 3);
        let w = random_weights(3, 3).unwrap();
        let ens = simulate_ensemble(&sf, &w, 5, 17).unwrap();
        let est = estimate(&ens, &w, &c).unwrap();
        let fm = build_frame_matrices(&w, &c).unwrap();
        let lin = LinearEstimator::new(&g, &fm);
        let pi = crate::ident::pi_hat(&ens).unwrap();
        let out = lin.apply(pi.values());
        for (a, b) in out.iter().zip(est.raw.patches()) {
            let scale = b.iter().map(|z| z.norm()).fold(1e-300, f64::max);
            assert!((a - b).iter().map(|z| z.norm()).fold(0.0, f64::max) <= 1e-12 * scale);
        }
    }

    #[test]
    fn zero_channel_report() {
        let (g, c) = smallest();
        let w = random_weights(2, 1).unwrap();
        let sf = ScatteringFunction::zeros(&g, &c);
        let cfg = McConfig {
            l: 5,
            trials: 3,
            seed: 1,
            scaling_check: false,
        };
        let r = monte_carlo(&sf, &w, &c, cfg).unwrap();
        assert!(r.points.iter().all(|p| p.bias == 0.0 && p.variance == 0.0));
        assert_eq!(r.bound, 0.0);
        assert!(r.unbiased());
        assert!(r.slack_ratio().is_none());
    }

    #[test]
    fn reports_are_reproducible() {
        let (g, c) = smallest();
        let w = random_weights(2, 1).unwrap();
        let sf = ScatteringFunction::random(&g, &c, 1);
        let cfg = McConfig {
            l: 20,
            trials: 4,
            seed: 99,
            scaling_check: true,
        };
        let a = monte_carlo(&sf, &w, &c, cfg).unwrap();
        let b = monte_carlo(&sf, &w, &c, cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_text(), b.to_text());
        let c2 = monte_carlo(&sf, &w, &c, McConfig { seed: 100, ..cfg }).unwrap();
        assert_ne!(a.cover_averaged_variance, c2.cover_averaged_variance);
    }

    #[test]
    fn rejects_bad_config() {
        let (g, c) = smallest();
        let w = random_weights(2, 1).unwrap();
        let sf = ScatteringFunction::random(&g, &c, 1);
        assert!(monte_carlo(
            &sf,
            &w,
            &c,
            McConfig {
                l: 5,
                trials: 1,
                seed: 0,
                scaling_check: false
            }
        )
        .is_err());
        assert!(monte_carlo(
            &sf,
            &w,
            &c,
            McConfig {
                l: 0,
                trials: 3,
                seed: 0,
                scaling_check: false
            }
        )
        .is_err());
    }
}
