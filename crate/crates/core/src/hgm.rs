//! The holonomic gradient method: pick a homotopy `gamma(t) = (a(t), b(t))`
//! ending at the target system, start from a point where the state vector is
//! known in closed form, and integrate the Pfaffian connection to `t = 1`.
//!
//! Two starting points are supported:
//!
//! * **bounded** polyhedra in general position: `a(t) = a`, `b(t) = t b`.  At
//!   `b = 0` every hyperplane passes through the origin, so only the vertex
//!   entries `|J| = d` are nonzero and equal `1 / sqrt(det alpha_J)`.
//! * **simplicial cones** (`n = d`): after rotating the normals to upper
//!   triangular form, `a(t) = (1-t) diag(a) + t a`, `b(t) = t b`.  At `t = 0`
//!   the cone is an orthant and `g^J = (pi/2)^{(d-|J|)/2} / |prod_{j in J} a_jj|`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{HgmError, Result};
use crate::geometry::{self, FaceComplex, HalfspaceSystem, DEFAULT_FEAS_TOL, DEFAULT_RANK_TOL};
use crate::linalg;
use crate::lp::{self, LpStatus, StandardLp};
use crate::ode::{self, SolverConfig, StageRejected};
use crate::pfaffian::{GVector, GramCache, PfaffianOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    Bounded,
    Cone,
}

/// Which starting point to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Cone when `n = d` with independent normals, otherwise bounded.
    #[default]
    Auto,
    Bounded,
    Cone,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "auto" => Ok(Method::Auto),
            "bounded" => Ok(Method::Bounded),
            "cone" => Ok(Method::Cone),
            _ => Err(format!("unknown method {s:?}")),
        }
    }
}

/// Affine homotopy `gamma(t) = ((1-t) a0 + t a1, (1-t) b0 + t b1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub a0: DMatrix<f64>,
    pub a1: DMatrix<f64>,
    pub b0: DVector<f64>,
    pub b1: DVector<f64>,
    pub kind: PathKind,
}

impl Path {
    pub fn at(&self, t: f64) -> (DMatrix<f64>, DVector<f64>) {
        if t == 1.0 {
            return (self.a1.clone(), self.b1.clone());
        }
        (
            &self.a0 * (1.0 - t) + &self.a1 * t,
            &self.b0 * (1.0 - t) + &self.b1 * t,
        )
    }

    pub fn a_dot(&self) -> DMatrix<f64> {
        &self.a1 - &self.a0
    }

    pub fn b_dot(&self) -> DVector<f64> {
        &self.b1 - &self.b0
    }

    pub fn a_is_constant(&self) -> bool {
        self.a0 == self.a1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HgmResult {
    /// Clamped to `[0, 1]`; see `flags` when clamping happened.
    pub probability: f64,
    pub raw_probability: f64,
    pub g_final: GVector,
    pub steps_taken: usize,
    pub rejections: usize,
    /// `cond_limit / max cond(alpha_F)` over every evaluated stage.
    pub min_gram_condition_margin: f64,
    pub wall_time: f64,
    pub flags: Vec<String>,
    pub kind: Option<PathKind>,
}

impl HgmResult {
    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::json!({
            "probability": self.probability,
            "raw_probability": self.raw_probability,
            "g_final": self.g_final.values,
            "steps": self.steps_taken,
            "rejections": self.rejections,
            "min_gram_condition_margin": self.min_gram_condition_margin,
            "wall_time_s": self.wall_time,
            "method": self.kind,
            "flags": self.flags,
        })
    }
}

/// Is `{x : a_j.x >= 0 for all j}` just the origin?  Probes
/// `max ±x_i` over that cone intersected with the unit box.
pub fn recession_cone_trivial(sys: &HalfspaceSystem, tol: f64) -> Result<bool> {
    let (d, n) = (sys.dim(), sys.len());
    // variables: u = x + 1 in [0, 2]^d, surplus s (n), box slack w (d)
    let vars = 2 * d + n;
    let mut base = StandardLp::new(vars);
    for j in 0..n {
        let aj = sys.normal(j);
        let scale = aj.norm();
        let mut row = vec![0.0; vars];
        for i in 0..d {
            row[i] = aj[i] / scale;
        }
        row[d + j] = -1.0;
        base.push_row(&row, aj.sum() / scale);
    }
    for i in 0..d {
        let mut row = vec![0.0; vars];
        row[i] = 1.0;
        row[d + n + i] = 1.0;
        base.push_row(&row, 2.0);
    }
    for i in 0..d {
        for sign in [1.0, -1.0] {
            let mut lp = base.clone();
            lp.c = vec![0.0; vars];
            lp.c[i] = -sign;
            match lp::solve(&lp, 1e-9, lp::DEFAULT_MAX_PIVOTS)? {
                LpStatus::Optimal { value, .. } => {
                    if -value - sign > tol {
                        return Ok(false);
                    }
                }
                // the box keeps it bounded and x = 0 is always feasible
                _ => return Err(HgmError::LpNumericalFailure(lp::DEFAULT_MAX_PIVOTS)),
            }
        }
    }
    Ok(true)
}

/// Bounded-case path `a(t) = a`, `b(t) = t b`.
pub fn path_bounded(sys: &HalfspaceSystem, fc: &FaceComplex) -> Result<Path> {
    if !recession_cone_trivial(sys, DEFAULT_FEAS_TOL)? {
        return Err(HgmError::UnboundedPolyhedron);
    }
    let report = geometry::general_position_check(sys, fc, DEFAULT_FEAS_TOL, DEFAULT_RANK_TOL)?;
    if !report.passed() {
        return Err(HgmError::GeneralPositionFailure(report.offenders()));
    }
    Ok(Path {
        a0: sys.a().clone(),
        a1: sys.a().clone(),
        b0: DVector::zeros(sys.len()),
        b1: sys.b().clone(),
        kind: PathKind::Bounded,
    })
}

/// `g^J = 1/sqrt(det alpha_J)` for `|J| = d`, zero otherwise.
pub fn initial_bounded(
    sys: &HalfspaceSystem,
    fc: &FaceComplex,
    cache: &GramCache,
) -> Result<GVector> {
    let d = sys.dim();
    let values = fc
        .members()
        .iter()
        .enumerate()
        .map(|(pos, s)| {
            if s.len() == d {
                1.0 / cache.det(pos).sqrt()
            } else {
                0.0
            }
        })
        .collect();
    Ok(GVector { values })
}

/// Orthogonal `R` with `R a` upper triangular and positive on the diagonal.
/// Returns `(R, R a)`; the identity when `a` already has that form.
pub fn cone_rotation(sys: &HalfspaceSystem) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (d, n) = (sys.dim(), sys.len());
    if d != n {
        return Err(HgmError::NotSquare { d, n });
    }
    let a = sys.a();
    let cols: Vec<DVector<f64>> = (0..n).map(|j| sys.normal(j)).collect();
    if linalg::min_singular_value_normalized(&cols) <= DEFAULT_RANK_TOL {
        return Err(HgmError::SingularNormals);
    }
    let triangular = (0..d).all(|i| (0..i).all(|j| a[(i, j)] == 0.0) && a[(i, i)] > 0.0);
    if triangular {
        return Ok((DMatrix::identity(d, d), a.clone()));
    }
    let qr = a.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for i in 0..d {
        if r[(i, i)] < 0.0 {
            r.row_mut(i).neg_mut();
            q.column_mut(i).neg_mut();
        }
    }
    Ok((q.transpose(), r))
}

/// Rotate a simplicial cone to triangular form and build its path.
pub fn path_cone(sys: &HalfspaceSystem) -> Result<(HalfspaceSystem, Path)> {
    let (_, upper) = cone_rotation(sys)?;
    let rotated = HalfspaceSystem::new(upper.clone(), sys.b().clone())?;
    let d = sys.dim();
    let diag = DMatrix::from_diagonal(&upper.diagonal());
    let path = Path {
        a0: diag,
        a1: upper,
        b0: DVector::zeros(d),
        b1: sys.b().clone(),
        kind: PathKind::Cone,
    };
    Ok((rotated, path))
}

/// `g^J = (pi/2)^{(d-|J|)/2} / |prod_{j in J} a_jj|` at the orthant start.
pub fn initial_cone(sys: &HalfspaceSystem, fc: &FaceComplex) -> Result<GVector> {
    let (d, n) = (sys.dim(), sys.len());
    if d != n {
        return Err(HgmError::NotSquare { d, n });
    }
    let a = sys.a();
    if let Some(j) = (0..d).find(|&j| a[(j, j)] == 0.0) {
        return Err(HgmError::ZeroDiagonal(j));
    }
    let half_pi = std::f64::consts::FRAC_PI_2;
    let values = fc
        .members()
        .iter()
        .map(|s| {
            let denom: f64 = s.iter().map(|j| a[(j, j)]).product::<f64>().abs();
            half_pi.sqrt().powi((d - s.len()) as i32) / denom
        })
        .collect();
    Ok(GVector { values })
}

/// Integrate the connection along `path` from `g0`.
pub fn integrate(
    path: &Path,
    fc: &FaceComplex,
    g0: &GVector,
    cfg: &SolverConfig,
) -> Result<HgmResult> {
    let start = Instant::now();
    if g0.len() != fc.len() {
        return Err(HgmError::DimensionMismatch(format!(
            "initial vector has {} entries, face complex {}",
            g0.len(),
            fc.len()
        )));
    }
    let d = path.a1.nrows();
    let b_dot: Vec<f64> = path.b_dot().iter().copied().collect();
    let mut max_cond = 1.0f64;

    let outcome = if path.a_is_constant() {
        let cache = GramCache::new(&path.a1, fc)?;
        max_cond = cache.max_cond();
        let ill = max_cond > cfg.cond_limit;
        let b0: Vec<f64> = path.b0.iter().copied().collect();
        let mut op = PfaffianOperator::new(cache, fc, &b0)?;
        let mut b = b0.clone();
        ode::integrate(
            |t, g, out| {
                if ill {
                    return Err(StageRejected);
                }
                for (bk, (b0k, dk)) in b.iter_mut().zip(b0.iter().zip(&b_dot)) {
                    *bk = b0k + t * dk;
                }
                op.set_offsets(&b);
                op.rhs(None, &b_dot, g, out);
                Ok(())
            },
            &g0.values,
            cfg,
        )?
    } else {
        let a_dot = path.a_dot();
        ode::integrate(
            |t, g, out| {
                let (a, b) = path.at(t);
                let cache = GramCache::new(&a, fc).map_err(|_| StageRejected)?;
                let c = cache.max_cond();
                max_cond = max_cond.max(c);
                if c > cfg.cond_limit {
                    return Err(StageRejected);
                }
                let b: Vec<f64> = b.iter().copied().collect();
                let op = PfaffianOperator::new(cache, fc, &b).map_err(|_| StageRejected)?;
                op.rhs(Some(&a_dot), &b_dot, g, out);
                Ok(())
            },
            &g0.values,
            cfg,
        )?
    };

    let g_final = GVector { values: outcome.y };
    let raw = g_final.probability(d);
    let mut flags = Vec::new();
    let probability = if (0.0..=1.0).contains(&raw) {
        raw
    } else {
        flags.push("probability_out_of_range".to_string());
        raw.clamp(0.0, 1.0)
    };
    Ok(HgmResult {
        probability,
        raw_probability: raw,
        g_final,
        steps_taken: outcome.steps,
        rejections: outcome.rejections,
        min_gram_condition_margin: cfg.cond_limit / max_cond,
        wall_time: start.elapsed().as_secs_f64(),
        flags,
        kind: Some(path.kind),
    })
}

fn normals_independent(sys: &HalfspaceSystem) -> bool {
    let cols: Vec<DVector<f64>> = (0..sys.len()).map(|j| sys.normal(j)).collect();
    linalg::min_singular_value_normalized(&cols) > DEFAULT_RANK_TOL
}

/// Run the bounded pipeline and return the face complex used with the result.
pub fn probability_bounded(
    sys: &HalfspaceSystem,
    cfg: &SolverConfig,
) -> Result<(FaceComplex, HgmResult)> {
    let start = Instant::now();
    if !recession_cone_trivial(sys, DEFAULT_FEAS_TOL)? {
        return Err(HgmError::UnboundedPolyhedron);
    }
    let fc = geometry::face_complex_lp(sys, DEFAULT_FEAS_TOL)?;
    if !geometry::face_feasible(sys, geometry::IndexSet::EMPTY, DEFAULT_FEAS_TOL)? {
        let result = HgmResult {
            probability: 0.0,
            raw_probability: 0.0,
            g_final: GVector::zeros(fc.len()),
            steps_taken: 0,
            rejections: 0,
            min_gram_condition_margin: f64::INFINITY,
            wall_time: start.elapsed().as_secs_f64(),
            flags: vec!["empty_polyhedron".to_string()],
            kind: Some(PathKind::Bounded),
        };
        return Ok((fc, result));
    }
    let path = path_bounded(sys, &fc)?;
    let cache = GramCache::new(sys.a(), &fc)?;
    let g0 = initial_bounded(sys, &fc, &cache)?;
    let mut result = integrate(&path, &fc, &g0, cfg)?;
    result.wall_time = start.elapsed().as_secs_f64();
    Ok((fc, result))
}

/// Run the cone pipeline; the returned system is the rotated one the state
/// vector refers to.
pub fn probability_cone(
    sys: &HalfspaceSystem,
    cfg: &SolverConfig,
) -> Result<(HalfspaceSystem, FaceComplex, HgmResult)> {
    let start = Instant::now();
    let (rotated, path) = path_cone(sys)?;
    let fc = FaceComplex::cone(sys.dim());
    let g0 = initial_cone(&rotated, &fc)?;
    let mut result = integrate(&path, &fc, &g0, cfg)?;
    result.wall_time = start.elapsed().as_secs_f64();
    Ok((rotated, fc, result))
}

/// Full pipeline: face complex, diagnostics, path, initial vector, integration.
pub fn probability(sys: &HalfspaceSystem, method: Method, cfg: &SolverConfig) -> Result<HgmResult> {
    cfg.validate()?;
    match method {
        Method::Bounded => probability_bounded(sys, cfg).map(|r| r.1),
        Method::Cone => probability_cone(sys, cfg).map(|r| r.2),
        Method::Auto => {
            if sys.len() == sys.dim() && normals_independent(sys) {
                probability_cone(sys, cfg).map(|r| r.2)
            } else if recession_cone_trivial(sys, DEFAULT_FEAS_TOL)? {
                probability_bounded(sys, cfg).map(|r| r.1)
            } else {
                Err(HgmError::NoApplicableMethod(
                    "polyhedron is neither bounded nor a simplicial cone".into(),
                ))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{c_cone, orthant, p_simplex, q_simplex, segment};
    use crate::geometry::IndexSet;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn recession_probe() {
        assert!(recession_cone_trivial(&p_simplex(3), 1e-9).unwrap());
        assert!(!recession_cone_trivial(&orthant(2), 1e-9).unwrap());
        assert!(recession_cone_trivial(&segment(0.0, 0.0), 1e-9).unwrap());
        assert!(!recession_cone_trivial(&c_cone(2), 1e-9).unwrap());
    }

    #[test]
    fn bounded_path_shape() {
        let sys = p_simplex(2);
        let fc = FaceComplex::simplex(2);
        let path = path_bounded(&sys, &fc).unwrap();
        assert!(path.a_is_constant());
        let (_, b) = path.at(0.5);
        assert!(b
            .iter()
            .all(|&v| (v - 0.5 * 2f64.sqrt() / 2.0).abs() < 1e-15));
        assert_eq!(path.at(1.0).1, *sys.b());
        assert!(path_bounded(&q_simplex(3), &FaceComplex::simplex(3)).is_ok());
        assert_eq!(
            path_bounded(&c_cone(2), &FaceComplex::cone(2)),
            Err(HgmError::UnboundedPolyhedron)
        );
    }

    #[test]
    fn bounded_initial_values() {
        let sys = p_simplex(2);
        let fc = FaceComplex::simplex(2);
        let g = initial_bounded(&sys, &fc, &GramCache::new(sys.a(), &fc).unwrap()).unwrap();
        for (s, v) in fc.members().iter().zip(&g.values) {
            let want = if s.len() == 2 { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-14, "{s} {v}");
        }
        let seg = segment(-1.0, 1.0);
        let fc = FaceComplex::simplex(1);
        let g = initial_bounded(&seg, &fc, &GramCache::new(seg.a(), &fc).unwrap()).unwrap();
        assert_eq!(g.values, vec![0.0, 1.0, 1.0]);
    }

    #[test]
    fn cone_rotations() {
        let (r, _) = cone_rotation(&c_cone(4)).unwrap();
        assert_eq!(r, DMatrix::identity(4, 4));

        let swap =
            HalfspaceSystem::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]], &[0.0, 0.0]).unwrap();
        let (r, upper) = cone_rotation(&swap).unwrap();
        assert!((&r * swap.a() - &upper).abs().max() < 1e-14);
        assert!((&r * r.transpose() - DMatrix::identity(2, 2)).abs().max() < 1e-14);
        assert!(upper[(1, 0)] == 0.0 && upper[(0, 0)] > 0.0 && upper[(1, 1)] > 0.0);
        assert!((upper.clone() - DMatrix::identity(2, 2)).abs().max() < 1e-14);

        let dep =
            HalfspaceSystem::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0]], &[0.0, 0.0]).unwrap();
        assert_eq!(cone_rotation(&dep), Err(HgmError::SingularNormals));
        assert_eq!(
            cone_rotation(&p_simplex(2)),
            Err(HgmError::NotSquare { d: 2, n: 3 })
        );
    }

    #[test]
    fn cone_initial_values() {
        let fc = FaceComplex::cone(2);
        let g = initial_cone(&orthant(2), &fc).unwrap();
        assert!((g.values[0] - FRAC_PI_2).abs() < 1e-15);
        assert!((g.values[1] - FRAC_PI_2.sqrt()).abs() < 1e-15);
        assert!((g.values[2] - FRAC_PI_2.sqrt()).abs() < 1e-15);
        assert_eq!(g.values[3], 1.0);
        assert!((g.probability(2) - 0.25).abs() < 1e-15);

        let fc3 = FaceComplex::cone(3);
        let two = HalfspaceSystem::new(DMatrix::identity(3, 3) * 2.0, DVector::zeros(3)).unwrap();
        let g = initial_cone(&two, &fc3).unwrap();
        let pos = fc3.index_of(IndexSet::singleton(0)).unwrap();
        assert!((g.values[pos] - 0.5 * FRAC_PI_2).abs() < 1e-15);

        let zero_diag =
            HalfspaceSystem::from_rows(&[vec![0.0, 1.0], vec![1.0, 1.0]], &[0.0, 0.0]).unwrap();
        assert_eq!(
            initial_cone(&zero_diag, &fc),
            Err(HgmError::ZeroDiagonal(0))
        );
    }

    #[test]
    fn zero_length_path_returns_start() {
        let sys = p_simplex(2).with_offsets(DVector::zeros(3)).unwrap();
        let fc = FaceComplex::simplex(2);
        let cache = GramCache::new(sys.a(), &fc).unwrap();
        let g0 = initial_bounded(&sys, &fc, &cache).unwrap();
        let path = Path {
            a0: sys.a().clone(),
            a1: sys.a().clone(),
            b0: DVector::zeros(3),
            b1: DVector::zeros(3),
            kind: PathKind::Bounded,
        };
        let r = integrate(&path, &fc, &g0, &SolverConfig::default()).unwrap();
        assert_eq!(r.g_final, g0);
    }

    #[test]
    fn half_line_by_cone_method() {
        let sys = HalfspaceSystem::from_rows(&[vec![1.0]], &[0.0]).unwrap();
        let r = probability(&sys, Method::Cone, &SolverConfig::default()).unwrap();
        assert!((r.probability - 0.5).abs() < 1e-14);
    }

    #[test]
    fn triangle_end_to_end() {
        let r = probability(&p_simplex(2), Method::Auto, &SolverConfig::default()).unwrap();
        assert!((r.probability - 0.285205).abs() < 5e-4, "{}", r.probability);
        assert_eq!(r.kind, Some(PathKind::Bounded));
    }

    #[test]
    fn tilted_cone_end_to_end() {
        let r = probability(&c_cone(2), Method::Auto, &SolverConfig::default()).unwrap();
        assert!((r.probability - 0.580822).abs() < 5e-4, "{}", r.probability);
        assert_eq!(r.kind, Some(PathKind::Cone));
    }

    #[test]
    fn no_applicable_method() {
        // half-plane strip in R^2: unbounded and not a cone
        let strip =
            HalfspaceSystem::from_rows(&[vec![1.0, -1.0], vec![0.0, 0.0]], &[1.0, 1.0]).unwrap();
        assert!(matches!(
            probability(&strip, Method::Auto, &SolverConfig::default()),
            Err(HgmError::NoApplicableMethod(_))
        ));
    }
}
