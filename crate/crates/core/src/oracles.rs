//! Independent estimators used to check the HGM output: plain Monte Carlo
//! for the probability, Monte Carlo on the hyperplane `V(J)` for single
//! state entries, and nested quadrature for `d <= 3`.
//!
//! Sampling is counter based: sample block `k` draws from a ChaCha20 stream
//! selected by `k`, so the estimate depends only on `(seed, n)` and not on
//! how rayon schedules the blocks.

use nalgebra::DVector;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{HgmError, Result};
use crate::geometry::{self, FaceComplex, HalfspaceSystem, IndexSet};
use crate::inclusion_exclusion::indicator;
use crate::linalg;

/// Samples per counter block.
const BLOCK: usize = 4096;
/// Quadrature box half-width; the tail beyond it is below 1e-15 per axis.
pub const QUAD_BOUND: f64 = 8.0;
const QUAD_PANELS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_samples: u64,
    pub seed: u64,
}

impl McEstimate {
    fn from_hits(hits: u64, n: u64, seed: u64, scale: f64) -> Self {
        let p = hits as f64 / n as f64;
        Self {
            mean: scale * p,
            std_error: scale * (p * (1.0 - p) / n as f64).sqrt(),
            n_samples: n,
            seed,
        }
    }
}

/// Standard normal deviates for one block, by inverse CDF of the stream.
pub(crate) struct NormalStream {
    rng: ChaCha20Rng,
    normal: Normal,
}

impl NormalStream {
    pub(crate) fn new(seed: u64, block: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(block);
        Self {
            rng,
            normal: Normal::standard(),
        }
    }

    pub(crate) fn next(&mut self) -> f64 {
        // 53 random bits mapped to the open interval (0, 1)
        let u = ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
        self.normal.inverse_cdf(u)
    }

    pub(crate) fn fill(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.next();
        }
    }
}

/// Count samples `y ~ N(0, I_m)` with `accept(y)`, over `n` samples in
/// counter blocks.  Block counts are integers, so the sum does not depend
/// on the reduction order.
fn count_hits(m: usize, n: u64, seed: u64, accept: impl Fn(&[f64]) -> bool + Sync) -> u64 {
    let blocks = n.div_ceil(BLOCK as u64);
    (0..blocks)
        .into_par_iter()
        .map(|k| {
            let len = (n - k * BLOCK as u64).min(BLOCK as u64);
            let mut stream = NormalStream::new(seed, k);
            let mut y = vec![0.0; m];
            let mut hits = 0u64;
            for _ in 0..len {
                stream.fill(&mut y);
                if accept(&y) {
                    hits += 1;
                }
            }
            hits
        })
        .sum()
}

/// Fraction of `N(0, I_d)` samples landing in `P`.
pub fn mc_probability(sys: &HalfspaceSystem, n_samples: u64, seed: u64) -> Result<McEstimate> {
    if n_samples == 0 {
        return Err(HgmError::DimensionMismatch(
            "n_samples must be at least 1".into(),
        ));
    }
    let hits = count_hits(sys.dim(), n_samples, seed, |x| indicator(sys, x) == 1);
    Ok(McEstimate::from_hits(hits, n_samples, seed, 1.0))
}

/// Estimate `g^J = det(alpha_J)^{-1/2} int_{V(J)} e^{-|x|^2/2} prod_{j not in J} H(f_j) dmu`
/// by sampling the tangent coordinates of `V(J)`:
/// `g^J = (2 pi)^{(d-|J|)/2} e^{-|x0|^2/2} det(alpha_J)^{-1/2} Pr[f_j(x0 + Q y) >= 0, j not in J]`.
pub fn mc_face_integral(
    sys: &HalfspaceSystem,
    fc: &FaceComplex,
    set: IndexSet,
    n_samples: u64,
    seed: u64,
) -> Result<McEstimate> {
    if n_samples == 0 {
        return Err(HgmError::DimensionMismatch(
            "n_samples must be at least 1".into(),
        ));
    }
    if !fc.contains(set) {
        return Err(HgmError::DimensionMismatch(format!(
            "{set} is not in the face complex"
        )));
    }
    let idx: Vec<usize> = set.iter().collect();
    let k = idx.len();
    let mut gram = vec![0.0; k * k];
    for (r, &i) in idx.iter().enumerate() {
        for (c, &j) in idx.iter().enumerate() {
            gram[r * k + c] = sys.normal(i).dot(&sys.normal(j));
        }
    }
    let det = linalg::spd_inverse(&gram, k)
        .ok_or(HgmError::SingularGram(set))?
        .det;
    let frame = geometry::affine_frame(sys, set)?;
    let x0 = &frame.origin;
    let q = &frame.tangent;
    let m = q.ncols();
    let scale = (2.0 * std::f64::consts::PI).powf(m as f64 / 2.0)
        * (-0.5 * x0.norm_squared()).exp()
        / det.sqrt();
    let others: Vec<usize> = (0..sys.len()).filter(|&j| !set.contains(j)).collect();
    let inside = |x: &DVector<f64>| others.iter().all(|&j| sys.eval(j, x.as_slice()) >= 0.0);

    if m == 0 {
        let p = if inside(x0) { 1.0 } else { 0.0 };
        return Ok(McEstimate {
            mean: scale * p,
            std_error: 0.0,
            n_samples,
            seed,
        });
    }
    let hits = count_hits(m, n_samples, seed, |y| {
        let x = x0 + q * DVector::from_column_slice(y);
        inside(&x)
    });
    Ok(McEstimate::from_hits(hits, n_samples, seed, scale))
}

fn simpson(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
}

#[allow(clippy::too_many_arguments)]
fn adaptive(
    f: &impl Fn(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    m: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let (lm, flm, left) = simpson(f, a, fa, m, fm);
    let (rm, frm, right) = simpson(f, m, fm, b, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)
        + adaptive(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson over `[lo, hi]` started from `QUAD_PANELS` panels, so
/// kinks of the integrand are resolved locally.
fn integrate_1d(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> f64 {
    let width = (hi - lo) / QUAD_PANELS as f64;
    let panel_tol = tol / QUAD_PANELS as f64;
    (0..QUAD_PANELS)
        .map(|p| {
            let a = lo + p as f64 * width;
            let b = if p + 1 == QUAD_PANELS { hi } else { a + width };
            let (fa, fb) = (f(a), f(b));
            let (m, fm, whole) = simpson(&f, a, fa, b, fb);
            adaptive(&f, a, fa, b, fb, m, fm, whole, panel_tol, 40)
        })
        .sum()
}

/// Normal mass of the feasible interval of the last coordinate with the
/// leading coordinates fixed to `prefix`.
fn inner_mass(sys: &HalfspaceSystem, prefix: &[f64], normal: &Normal) -> f64 {
    let d = sys.dim();
    let last = d - 1;
    let (mut lo, mut hi) = (-QUAD_BOUND, QUAD_BOUND);
    for j in 0..sys.len() {
        let aj = sys.a().column(j);
        let rest: f64 = sys.b()[j]
            + prefix
                .iter()
                .enumerate()
                .map(|(i, x)| aj[i] * x)
                .sum::<f64>();
        let c = aj[last];
        if c == 0.0 {
            if rest < 0.0 {
                return 0.0;
            }
        } else if c > 0.0 {
            lo = lo.max(-rest / c);
        } else {
            hi = hi.min(-rest / c);
        }
    }
    if hi <= lo {
        return 0.0;
    }
    normal.cdf(hi) - normal.cdf(lo)
}

fn nested(sys: &HalfspaceSystem, prefix: &[f64], tol: f64, normal: &Normal) -> f64 {
    if prefix.len() + 1 == sys.dim() {
        return inner_mass(sys, prefix, normal);
    }
    let density = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    // each outer level has total mass at most one, so the tolerance passes down
    integrate_1d(
        |x| {
            let mut p = prefix.to_vec();
            p.push(x);
            density(x) * nested(sys, &p, tol, normal)
        },
        -QUAD_BOUND,
        QUAD_BOUND,
        tol,
    )
}

/// Probability of `P` by nested adaptive Simpson on `[-8, 8]^d`, with the
/// innermost axis integrated exactly through the normal CDF.
pub fn quadrature_probability(sys: &HalfspaceSystem, abs_tol: f64) -> Result<f64> {
    let d = sys.dim();
    if d > 3 {
        return Err(HgmError::DimensionTooLarge(d));
    }
    let normal = Normal::standard();
    let inner_tol = abs_tol / (2.0 * d as f64);
    Ok(nested(sys, &[], inner_tol, &normal))
}
