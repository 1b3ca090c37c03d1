//! Explicit Runge-Kutta integration of `y' = f(t, y)` over `t in [0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{HgmError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Dormand-Prince 5(4) embedded pair with adaptive steps.
    DormandPrince45,
    /// Classical RK4 with step-doubling error control.
    Rk4Doubling,
    /// Classical RK4 with `steps` equal steps and no error control.
    FixedRk4 { steps: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
    pub scheme: Scheme,
    /// Stages whose Gram blocks exceed this 1-norm condition are rejected.
    pub cond_limit: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            h_init: 1e-2,
            h_min: 1e-12,
            h_max: 0.25,
            max_steps: 1_000_000,
            scheme: Scheme::DormandPrince45,
            cond_limit: 1e12,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rel_tol > 0.0
            && self.abs_tol > 0.0
            && self.h_min > 0.0
            && self.h_min <= self.h_init
            && self.h_init <= self.h_max
            && !matches!(self.scheme, Scheme::FixedRk4 { steps: 0 });
        if ok {
            Ok(())
        } else {
            Err(HgmError::DimensionMismatch(format!(
                "invalid solver configuration {self:?}"
            )))
        }
    }
}

/// Returned by a right-hand side that refuses to be evaluated at a stage
/// (e.g. too close to the singular locus); the step is retried smaller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageRejected;

#[derive(Debug, Clone, PartialEq)]
pub struct OdeOutcome {
    pub y: Vec<f64>,
    pub steps: usize,
    pub rejections: usize,
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Fifth-order minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

struct Work {
    k: Vec<Vec<f64>>,
    tmp: Vec<f64>,
}

impl Work {
    fn new(stages: usize, n: usize) -> Self {
        Self {
            k: vec![vec![0.0; n]; stages],
            tmp: vec![0.0; n],
        }
    }
}

/// One Dormand-Prince step. `work.k[0]` must hold `f(t, y)`. On success
/// `y_new` holds the fifth-order solution, `work.k[6]` holds `f(t+h, y_new)`
/// and the returned value is the infinity norm of the error estimate.
fn dp_step<F>(
    f: &mut F,
    t: f64,
    h: f64,
    y: &[f64],
    y_new: &mut [f64],
    work: &mut Work,
) -> std::result::Result<f64, StageRejected>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> std::result::Result<(), StageRejected>,
{
    let n = y.len();
    for s in 1..7 {
        for i in 0..n {
            let mut acc = y[i];
            for (p, a) in A[s].iter().enumerate().take(s) {
                acc += h * a * work.k[p][i];
            }
            work.tmp[i] = acc;
        }
        let (_, rest) = work.k.split_at_mut(s);
        f(t + C[s] * h, &work.tmp, &mut rest[0])?;
        if s == 5 {
            // stage 6 input is the fifth-order solution
            for i in 0..n {
                let mut acc = y[i];
                for (p, a) in A[6].iter().enumerate() {
                    acc += h * a * work.k[p][i];
                }
                y_new[i] = acc;
            }
        }
    }
    // k[6] was evaluated at tmp built from A[6], which equals y_new.
    let mut err = 0.0f64;
    for i in 0..n {
        let e: f64 = (0..7).map(|s| E[s] * work.k[s][i]).sum::<f64>() * h;
        err = err.max(e.abs());
    }
    Ok(err)
}

fn rk4_step<F>(
    f: &mut F,
    t: f64,
    h: f64,
    y: &[f64],
    out: &mut [f64],
    work: &mut Work,
) -> std::result::Result<(), StageRejected>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> std::result::Result<(), StageRejected>,
{
    let n = y.len();
    f(t, y, &mut work.k[0])?;
    for s in 1..4 {
        let c = if s == 3 { 1.0 } else { 0.5 };
        for i in 0..n {
            work.tmp[i] = y[i] + c * h * work.k[s - 1][i];
        }
        let (_, rest) = work.k.split_at_mut(s);
        f(t + c * h, &work.tmp, &mut rest[0])?;
    }
    for i in 0..n {
        out[i] = y[i]
            + h / 6.0 * (work.k[0][i] + 2.0 * work.k[1][i] + 2.0 * work.k[2][i] + work.k[3][i]);
    }
    Ok(())
}

/// Integrate from `t = 0` to `t = 1`.
pub fn integrate<F>(mut f: F, y0: &[f64], cfg: &SolverConfig) -> Result<OdeOutcome>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> std::result::Result<(), StageRejected>,
{
    cfg.validate()?;
    match cfg.scheme {
        Scheme::DormandPrince45 => integrate_dp(&mut f, y0, cfg),
        Scheme::Rk4Doubling => integrate_rk4_doubling(&mut f, y0, cfg),
        Scheme::FixedRk4 { steps } => integrate_rk4_fixed(&mut f, y0, steps),
    }
}

fn step_factor(ratio: f64, order: f64) -> f64 {
    if ratio == 0.0 {
        5.0
    } else {
        (0.9 * ratio.powf(-1.0 / order)).clamp(0.2, 5.0)
    }
}

fn integrate_dp<F>(f: &mut F, y0: &[f64], cfg: &SolverConfig) -> Result<OdeOutcome>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> std::result::Result<(), StageRejected>,
{
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut y_new = vec![0.0; n];
    let mut work = Work::new(7, n);
    let mut t = 0.0;
    let mut h = cfg.h_init;
    let mut steps = 0;
    let mut rejections = 0;
    let mut have_k0 = false;
    while t < 1.0 {
        if steps >= cfg.max_steps {
            return Err(HgmError::MaxStepsExceeded(cfg.max_steps));
        }
        let last = t + h >= 1.0;
        let h_step = if last { 1.0 - t } else { h };
        if !have_k0 {
            if f(t, &y, &mut work.k[0]).is_err() {
                return Err(HgmError::StepUnderflow { t });
            }
            have_k0 = true;
        }
        match dp_step(f, t, h_step, &y, &mut y_new, &mut work) {
            Err(StageRejected) => {
                rejections += 1;
                h = h_step * 0.5;
                if h < cfg.h_min {
                    return Err(HgmError::StepUnderflow { t });
                }
            }
            Ok(err) => {
                let tol = cfg.abs_tol + cfg.rel_tol * inf_norm(&y).max(inf_norm(&y_new));
                let ratio = err / tol;
                if ratio <= 1.0 {
                    t = if last { 1.0 } else { t + h_step };
                    std::mem::swap(&mut y, &mut y_new);
                    let k6 = std::mem::take(&mut work.k[6]);
                    work.k[6] = std::mem::replace(&mut work.k[0], k6);
                    steps += 1;
                    h = (h_step * step_factor(ratio, 5.0)).min(cfg.h_max);
                    if last {
                        h = h.max(cfg.h_min);
                    }
                } else {
                    rejections += 1;
                    h = h_step * step_factor(ratio, 5.0).min(0.9);
                    if h < cfg.h_min {
                        return Err(HgmError::StepUnderflow { t });
                    }
                }
            }
        }
    }
    Ok(OdeOutcome {
        y,
        steps,
        rejections,
    })
}

fn integrate_rk4_doubling<F>(f: &mut F, y0: &[f64], cfg: &SolverConfig) -> Result<OdeOutcome>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> std::result::Result<(), StageRejected>,
{
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut big = vec![0.0; n];
    let mut half = vec![0.0; n];
    let mut two = vec![0.0; n];
    let mut work = Work::new(4, n);
    let mut t = 0.0;
    let mut h = cfg.h_init;
    let mut steps = 0;
    let mut rejections = 0;
    while t < 1.0 {
        if steps >= cfg.max_steps {
            return Err(HgmError::MaxStepsExceeded(cfg.max_steps));
        }
        let last = t + h >= 1.0;
        let h_step = if last { 1.0 - t } else { h };
        let attempt = rk4_step(f, t, h_step, &y, &mut big, &mut work)
            .and_then(|_| rk4_step(f, t, 0.5 * h_step, &y, &mut half, &mut work))
            .and_then(|_| {
                rk4_step(
                    f,
                    t + 0.5 * h_step,
                    0.5 * h_step,
                    &half,
                    &mut two,
                    &mut work,
                )
            });
        match attempt {
            Err(StageRejected) => {
                rejections += 1;
                h = h_step * 0.5;
                if h < cfg.h_min {
                    return Err(HgmError::StepUnderflow { t });
                }
            }
            Ok(()) => {
                let err = big
                    .iter()
                    .zip(&two)
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
                    / 15.0;
                let tol = cfg.abs_tol + cfg.rel_tol * inf_norm(&y).max(inf_norm(&two));
                let ratio = err / tol;
                if ratio <= 1.0 {
                    t = if last { 1.0 } else { t + h_step };
                    std::mem::swap(&mut y, &mut two);
                    steps += 1;
                    h = (h_step * step_factor(ratio, 5.0))
                        .min(cfg.h_max)
                        .max(cfg.h_min);
                } else {
                    rejections += 1;
                    h = h_step * step_factor(ratio, 5.0).min(0.9);
                    if h < cfg.h_min {
                        return Err(HgmError::StepUnderflow { t });
                    }
                }
            }
        }
    }
    Ok(OdeOutcome {
        y,
        steps,
        rejections,
    })
}

fn integrate_rk4_fixed<F>(f: &mut F, y0: &[f64], steps: usize) -> Result<OdeOutcome>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> std::result::Result<(), StageRejected>,
{
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut next = vec![0.0; n];
    let mut work = Work::new(4, n);
    let h = 1.0 / steps as f64;
    for s in 0..steps {
        let t = s as f64 * h;
        rk4_step(f, t, h, &y, &mut next, &mut work).map_err(|_| HgmError::StepUnderflow { t })?;
        std::mem::swap(&mut y, &mut next);
    }
    Ok(OdeOutcome {
        y,
        steps,
        rejections: 0,
    })
}
