//! Verification suites shared by the test targets and `hgm check`: the
//! inclusion-exclusion identities on random points, finite-difference and
//! commutation checks of the connection, and the observed order of the
//! fixed-step integrator.

use nalgebra::DVector;

use crate::error::Result;
use crate::geometry::{self, FaceComplex, HalfspaceSystem, IndexSet};
use crate::hgm::{self, Path, PathKind};
use crate::inclusion_exclusion::{face_ie_sum, face_indicator, ie_sum, indicator};
use crate::ode::{Scheme, SolverConfig};
use crate::oracles::NormalStream;
use crate::pfaffian::{GVector, GramCache, PfaffianOperator};

/// Points closer than this (relative to `|a_j|`) to a hyperplane are skipped.
pub const BOUNDARY_GUARD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IdentityReport {
    pub checked: usize,
    pub skipped: usize,
    pub failures: usize,
}

impl IdentityReport {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.checked > 0
    }

    fn merge(&mut self, other: IdentityReport) {
        self.checked += other.checked;
        self.skipped += other.skipped;
        self.failures += other.failures;
    }
}

/// Sampling scale that covers the polyhedron and its surroundings.
fn spread(sys: &HalfspaceSystem) -> f64 {
    1.0 + (0..sys.len())
        .map(|j| sys.b()[j].abs() / sys.normal(j).norm())
        .fold(0.0, f64::max)
}

fn near_boundary(sys: &HalfspaceSystem, x: &[f64], skip: IndexSet) -> bool {
    (0..sys.len())
        .any(|j| !skip.contains(j) && sys.eval(j, x).abs() < BOUNDARY_GUARD * sys.normal(j).norm())
}

/// `indicator(x) == ie_sum(x)` on `n_points` Gaussian points.
pub fn ie_identity(
    sys: &HalfspaceSystem,
    fc: &FaceComplex,
    n_points: usize,
    seed: u64,
) -> IdentityReport {
    let d = sys.dim();
    let s = spread(sys);
    let mut stream = NormalStream::new(seed, 0);
    let mut x = vec![0.0; d];
    let mut report = IdentityReport::default();
    for _ in 0..n_points {
        stream.fill(&mut x);
        x.iter_mut().for_each(|v| *v *= s);
        if near_boundary(sys, &x, IndexSet::EMPTY) {
            report.skipped += 1;
            continue;
        }
        report.checked += 1;
        if indicator(sys, &x) != ie_sum(sys, fc, &x) {
            report.failures += 1;
        }
    }
    report
}

/// The face identity on `n_points` points of `V(J)` for every nonempty
/// `J` in the complex.
pub fn face_identity(
    sys: &HalfspaceSystem,
    fc: &FaceComplex,
    n_points: usize,
    seed: u64,
) -> Result<IdentityReport> {
    let s = spread(sys);
    let mut report = IdentityReport::default();
    for (pos, &set) in fc.members().iter().enumerate() {
        if set.is_empty() {
            continue;
        }
        let frame = geometry::affine_frame(sys, set)?;
        let m = frame.tangent.ncols();
        let mut stream = NormalStream::new(seed, pos as u64 + 1);
        let mut y = vec![0.0; m];
        let mut part = IdentityReport::default();
        for _ in 0..n_points {
            stream.fill(&mut y);
            let x = &frame.origin + &frame.tangent * DVector::from_column_slice(&y) * s;
            if near_boundary(sys, x.as_slice(), set) {
                part.skipped += 1;
                continue;
            }
            part.checked += 1;
            match face_ie_sum(sys, fc, set, x.as_slice()) {
                Ok(v) if v == face_indicator(sys, set, x.as_slice()) => {}
                _ => part.failures += 1,
            }
        }
        report.merge(part);
    }
    Ok(report)
}

/// Copy of `sys` with every entry of `a` and `b` moved by `eps` times a
/// standard normal deviate (stream chosen by `seed`).
pub fn perturbed(sys: &HalfspaceSystem, eps: f64, seed: u64) -> Result<HalfspaceSystem> {
    let mut stream = NormalStream::new(seed, u64::MAX);
    let a = sys.a().map(|v| v + eps * stream.next());
    let b = sys.b().map(|v| v + eps * stream.next());
    HalfspaceSystem::new(a, b)
}

fn tight() -> SolverConfig {
    SolverConfig {
        rel_tol: 1e-12,
        abs_tol: 1e-15,
        ..SolverConfig::default()
    }
}

/// HGM run returning the face complex its state vector is indexed by: the
/// cone method for `n = d`, the bounded method otherwise.  Rotating the
/// normals changes neither `b` nor the state entries.
fn run_with_complex(
    sys: &HalfspaceSystem,
    cfg: &SolverConfig,
) -> Result<(FaceComplex, hgm::HgmResult)> {
    if sys.len() == sys.dim() {
        hgm::probability_cone(sys, cfg).map(|(_, fc, r)| (fc, r))
    } else {
        hgm::probability_bounded(sys, cfg)
    }
}

/// Central difference of `g^{empty}` in `b_j` against `g^{{j}}`, one
/// relative error per `j`.
pub fn fd_pfaffian(sys: &HalfspaceSystem, eps: f64) -> Result<Vec<f64>> {
    let cfg = tight();
    let (fc, base) = run_with_complex(sys, &cfg)?;
    let empty = fc
        .index_of(IndexSet::EMPTY)
        .expect("empty set is always present");
    (0..sys.len())
        .map(|j| {
            let shifted = |sign: f64| -> Result<f64> {
                let mut b = sys.b().clone();
                b[j] += sign * eps;
                let (_, r) = run_with_complex(&sys.with_offsets(b)?, &cfg)?;
                Ok(r.g_final.values[empty])
            };
            let fd = (shifted(1.0)? - shifted(-1.0)?) / (2.0 * eps);
            let exact = base.g_final.values[fc
                .index_of(IndexSet::singleton(j))
                .expect("facet in complex")];
            Ok((fd - exact).abs() / exact.abs())
        })
        .collect()
}

/// Path and initial vector for `sys` by the given kind; the system returned
/// is the one the state vector refers to (rotated for cones).
pub fn path_setup(
    sys: &HalfspaceSystem,
    kind: PathKind,
) -> Result<(HalfspaceSystem, FaceComplex, Path, GVector)> {
    match kind {
        PathKind::Bounded => {
            let fc = geometry::face_complex_lp(sys, geometry::DEFAULT_FEAS_TOL)?;
            let path = hgm::path_bounded(sys, &fc)?;
            let g0 = hgm::initial_bounded(sys, &fc, &GramCache::new(sys.a(), &fc)?)?;
            Ok((sys.clone(), fc, path, g0))
        }
        PathKind::Cone => {
            let (rotated, path) = hgm::path_cone(sys)?;
            let fc = FaceComplex::cone(sys.dim());
            let g0 = hgm::initial_cone(&rotated, &fc)?;
            Ok((rotated, fc, path, g0))
        }
    }
}

/// The same path stopped at `t`.
pub fn truncated(path: &Path, t: f64) -> Path {
    let (a, b) = path.at(t);
    Path {
        a0: path.a0.clone(),
        a1: a,
        b0: path.b0.clone(),
        b1: b,
        kind: path.kind,
    }
}

/// Largest `|(M_kj - M_jk) g(t)| / |g(t)|` over all pairs and `samples`
/// equally spaced `t` in `(0, 1]`.
pub fn commutation_residual(sys: &HalfspaceSystem, kind: PathKind, samples: usize) -> Result<f64> {
    let (_, fc, path, g0) = path_setup(sys, kind)?;
    let cfg = tight();
    let n = sys.len();
    let mut worst = 0.0f64;
    for s in 1..=samples {
        let t = s as f64 / samples as f64;
        let part = truncated(&path, t);
        let g = hgm::integrate(&part, &fc, &g0, &cfg)?.g_final.values;
        let op = PfaffianOperator::new(GramCache::new(&part.a1, &fc)?, &fc, part.b1.as_slice())?;
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        for k in 0..n {
            for j in (k + 1)..n {
                let lhs = op.second_derivative(k, j)?.mul_vec(&g);
                let rhs = op.second_derivative(j, k)?.mul_vec(&g);
                let diff = lhs
                    .iter()
                    .zip(&rhs)
                    .map(|(x, y)| (x - y).powi(2))
                    .sum::<f64>()
                    .sqrt();
                worst = worst.max(diff / norm);
            }
        }
    }
    Ok(worst)
}

/// Observed orders `log2(e(N) / e(2N))` of fixed-step RK4 on the final
/// probability, for `N = base, 2 base, ...` (`levels` ratios).  The
/// reference is an adaptive run at tight tolerance.
pub fn observed_orders(
    sys: &HalfspaceSystem,
    kind: PathKind,
    base: usize,
    levels: usize,
) -> Result<Vec<f64>> {
    let (_, fc, path, g0) = path_setup(sys, kind)?;
    let d = sys.dim();
    let reference = hgm::integrate(&path, &fc, &g0, &tight())?
        .g_final
        .probability(d);
    let errors: Vec<f64> = (0..=levels)
        .map(|l| {
            let cfg = SolverConfig {
                scheme: Scheme::FixedRk4 { steps: base << l },
                ..SolverConfig::default()
            };
            hgm::integrate(&path, &fc, &g0, &cfg)
                .map(|r| (r.g_final.probability(d) - reference).abs())
        })
        .collect::<Result<_>>()?;
    Ok(errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect())
}
