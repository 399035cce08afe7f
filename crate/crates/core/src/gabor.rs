//! J-periodic unimodular weights, their finite Weyl-Heisenberg (Gabor)
//! system in `C^J`, and the frame matrices used to unmix the patches.
//!
//! Vectors are stored 0-indexed; component `i` corresponds to `r = i + 1`
//! and every formula is evaluated at `r`.

use std::f64::consts::TAU;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::{is_prime, smallest_divisor, Cover};
use crate::{seed, C64};

/// Largest accepted condition number of the mixing matrix.
pub const MAX_COND: f64 = 1e10;

/// Determinant magnitude below which a J-subset counts as dependent.
pub const HAAR_DET_THRESHOLD: f64 = 1e-12;

const HAAR_SAMPLES: usize = 1000;
const HAAR_SEED: u64 = 0x4841_4152;

/// Unit-modulus phase `exp(2πi·num/den)` with `num` reduced modulo `den`.
pub(crate) fn root_of_unity(num: i64, den: usize) -> C64 {
    let k = num.rem_euclid(den as i64) as f64;
    C64::from_polar(1.0, TAU * k / den as f64)
}

/// J-periodic unimodular sequence `c_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSequence {
    c: Vec<C64>,
}

impl WeightSequence {
    /// Wraps explicit weights. `J = len` must be prime and every entry must
    /// have modulus one to within `1e-12`.
    pub fn from_values(c: Vec<C64>) -> Result<Self> {
        check_prime(c.len())?;
        if let Some((k, v)) = c.iter().enumerate().find(|(_, v)| {
            let dev = (v.norm() - 1.0).abs();
            dev.is_nan() || dev > 1e-12
        }) {
            return Err(Error::InvalidParameter(format!(
                "weight c_{k} = {v} is not unimodular"
            )));
        }
        Ok(WeightSequence { c })
    }

    /// All-ones weights; the degenerate sequence for which the Haar property fails.
    pub fn ones(j: usize) -> Result<Self> {
        Self::from_values(vec![C64::new(1.0, 0.0); j])
    }

    pub fn j(&self) -> usize {
        self.c.len()
    }

    /// `c_k` with `k` taken modulo `J`.
    pub fn at(&self, k: i64) -> C64 {
        self.c[k.rem_euclid(self.c.len() as i64) as usize]
    }

    pub fn values(&self) -> &[C64] {
        &self.c
    }
}

fn check_prime(j: usize) -> Result<()> {
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
    debug_assert!(is_prime(j));
    Ok(())
}

/// `c_k = exp(2πi·u_k)` with `u_k` i.i.d. uniform on `[0, 1)`.
pub fn random_weights(j: usize, seed: u64) -> Result<WeightSequence> {
    check_prime(j)?;
    let mut rng = seed::rng(seed);
    let c = (0..j)
        .map(|_| {
            let u: f64 = rng.random();
            C64::from_polar(1.0, TAU * u)
        })
        .collect();
    Ok(WeightSequence { c })
}

/// Gabor vector `c_{k,l}(r) = exp(−2πi·r·l/J)·c_{r−k}`, `r = 1..=J`.
pub fn gabor_vector(w: &WeightSequence, k: i64, l: i64) -> Vec<C64> {
    let j = w.j();
    (1..=j as i64)
        .map(|r| root_of_unity(-(r * l), j) * w.at(r - k))
        .collect()
}

/// Matrices tying the S-transform to the patches of a given cover.
///
/// Column `j` of `u` is the Gabor vector at `(a_j, −b_j)`. Its entrywise
/// conjugate carries exactly the factor `exp(−2πi·r·b_j/J)·conj(c_{r−a_j})`
/// that the S-transform attaches to patch `j`, so with `d_j = c_{−a_j}`
///
/// ```text
/// S_r = Σ_j mixing[r, j] · C_j,   mixing = conj(U) · diag(d)
/// ```
///
/// and `v = mixing⁻¹` recovers the patches.
#[derive(Debug, Clone)]
pub struct FrameMatrices {
    cells: Vec<(usize, usize)>,
    u: DMatrix<C64>,
    d: DVector<C64>,
    mixing: DMatrix<C64>,
    v: DMatrix<C64>,
    cond: f64,
}

impl FrameMatrices {
    pub fn cells(&self) -> &[(usize, usize)] {
        &self.cells
    }
    pub fn u(&self) -> &DMatrix<C64> {
        &self.u
    }
    /// Diagonal of `D`.
    pub fn d(&self) -> &DVector<C64> {
        &self.d
    }
    pub fn mixing(&self) -> &DMatrix<C64> {
        &self.mixing
    }
    pub fn v(&self) -> &DMatrix<C64> {
        &self.v
    }
    pub fn cond(&self) -> f64 {
        self.cond
    }
    /// Spectral norm of `V`.
    pub fn v_spectral_norm(&self) -> f64 {
        self.v
            .singular_values()
            .iter()
            .fold(0.0f64, |m, &s| m.max(s))
    }
    pub fn v_frobenius_norm(&self) -> f64 {
        self.v.norm()
    }
    /// `‖V·mixing − I‖_F`.
    pub fn inverse_residual(&self) -> f64 {
        let n = self.v.nrows();
        (&self.v * &self.mixing - DMatrix::<C64>::identity(n, n)).norm()
    }
}

fn condition_number(m: &DMatrix<C64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.iter().fold(0.0f64, |a, &s| a.max(s));
    let min = sv.iter().fold(f64::INFINITY, |a, &s| a.min(s));
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

pub fn build_frame_matrices(w: &WeightSequence, cover: &Cover) -> Result<FrameMatrices> {
    let j = w.j();
    if cover.len() != j {
        return Err(Error::Mismatch(format!(
            "cover has {} cells but the weights have period {j}",
            cover.len()
        )));
    }
    let mut u = DMatrix::zeros(j, j);
    for (col, &(a, b)) in cover.cells().iter().enumerate() {
        let v = gabor_vector(w, a as i64, -(b as i64));
        u.set_column(col, &DVector::from_vec(v));
    }
    let d = DVector::from_iterator(j, cover.cells().iter().map(|&(a, _)| w.at(-(a as i64))));
    let mut mixing = u.map(|z| z.conj());
    for (col, dj) in d.iter().enumerate() {
        for row in 0..j {
            mixing[(row, col)] *= dj;
        }
    }
    let cond = condition_number(&mixing);
    if cond.is_nan() || cond > MAX_COND {
        return Err(Error::IllConditioned { cond });
    }
    let v = mixing.clone().try_inverse().ok_or(Error::IllConditioned {
        cond: f64::INFINITY,
    })?;
    Ok(FrameMatrices {
        cells: cover.cells().to_vec(),
        u,
        d,
        mixing,
        v,
        cond,
    })
}

/// Outcome of testing J-subsets of the `J²` Gabor vectors for independence.
#[derive(Debug, Clone)]
pub struct HaarReport {
    pub j: usize,
    /// `C(J², J)`.
    pub total_subsets: u128,
    pub exhaustive: bool,
    pub tested: usize,
    pub min_abs_det: f64,
    /// Subsets with `|det| ≤ HAAR_DET_THRESHOLD`, as `(k, l)` index lists.
    pub failures: Vec<Vec<(usize, usize)>>,
}

impl HaarReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// Checks the Haar property of the Gabor system of `w`.
///
/// All `C(J², J)` subsets are tested when there are at most
/// `exhaustive_limit` of them, otherwise 1000 random subsets.
pub fn haar_check(w: &WeightSequence, exhaustive_limit: u64) -> HaarReport {
    let j = w.j();
    let vectors: Vec<Vec<C64>> = (0..j * j)
        .map(|i| gabor_vector(w, (i / j) as i64, (i % j) as i64))
        .collect();
    let total = binomial((j * j) as u128, j as u128);
    let exhaustive = total <= exhaustive_limit as u128;

    let mut report = HaarReport {
        j,
        total_subsets: total,
        exhaustive,
        tested: 0,
        min_abs_det: f64::INFINITY,
        failures: Vec::new(),
    };
    let mut test = |subset: &[usize]| {
        let m = DMatrix::from_fn(j, j, |r, c| vectors[subset[c]][r]);
        let det = m.determinant().norm();
        report.tested += 1;
        report.min_abs_det = report.min_abs_det.min(det);
        if det <= HAAR_DET_THRESHOLD {
            report
                .failures
                .push(subset.iter().map(|&i| (i / j, i % j)).collect());
        }
    };
    if exhaustive {
        for subset in (0..j * j).combinations(j) {
            test(&subset);
        }
    } else {
        let mut rng = seed::rng(HAAR_SEED);
        for _ in 0..HAAR_SAMPLES {
            let mut subset = index::sample(&mut rng, j * j, j).into_vec();
            subset.sort_unstable();
            test(&subset);
        }
    }
    report
}
