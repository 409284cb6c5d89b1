//! Monte Carlo checks of Schatten-norm concentration on random subspaces of `M_d`.
//!
//! `M = E ||X||_q` over the Hilbert-Schmidt sphere sets the scale. On a
//! Haar-random subspace of dimension about `(M/b)^2 d^2` the ratio
//! `||x||_q / ||x||_2` stays within a constant factor of `M`; on larger
//! subspaces only the one-sided bound `max ratio <= C sqrt(m/d^2) b` survives.
//! Here `b = 1` because `||x||_q <= ||x||_2` for `q >= 2`.

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensembles::{hs_sphere_point, random_subspace_basis, RngStream};
use crate::error::{LabError, Result};
use crate::linalg::{schatten_from_singular_values, singular_values, SchattenOrder};
use crate::optimize::{subspace_max_ratio, subspace_norm_window, AscentConfig, NormWindow};
use crate::stats::mean_and_stderr;

/// `b` for the Schatten q-norm against the Hilbert-Schmidt norm.
pub const SCHATTEN_B: f64 = 1.0;

pub const DEFAULT_EPSILON: f64 = 0.5;
pub const DEFAULT_SAMPLES: usize = 500;
pub const DEFAULT_TRIALS: usize = 20;

const SPHERE_STREAMS: u64 = 11;
const BASIS_STREAMS: u64 = 12;
const OPTIMIZER_STREAMS: u64 = 13;

/// `d^(1/q - 1/2)`, the smallest value of `||x||_q / ||x||_2` on `M_d`.
pub fn ratio_floor(d: usize, q: SchattenOrder) -> f64 {
    (d as f64).powf(q.reciprocal() - 0.5)
}

/// Sphere mean of the q-norm and of the operator norm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub q: SchattenOrder,
    pub d: usize,
    pub samples: usize,
    pub m_hat: f64,
    pub m_stderr: f64,
    pub opnorm_mean_hat: f64,
    pub opnorm_stderr: f64,
    pub b: f64,
}

impl NormStats {
    /// `d^(1/q - 1/2) <= M_hat + 3 sigma`.
    pub fn lower_bound_holds(&self) -> bool {
        ratio_floor(self.d, self.q) <= self.m_hat + 3.0 * self.m_stderr
    }

    /// `(E||X||_inf)^(1-2/q)` plus three propagated standard errors.
    pub fn holder_cap(&self) -> f64 {
        let e = 1.0 - 2.0 * self.q.reciprocal();
        let slope = if e == 0.0 { 0.0 } else { e * self.opnorm_mean_hat.powf(e - 1.0) };
        self.opnorm_mean_hat.powf(e) + 3.0 * slope * self.opnorm_stderr
    }

    /// `M_hat <= holder_cap`: the pointwise interpolation `||X||_q <= ||X||_2^(2/q) ||X||_inf^(1-2/q)`
    /// followed by Jensen.
    pub fn holder_bound_holds(&self) -> bool {
        self.m_hat <= self.holder_cap() + 3.0 * self.m_stderr
    }
}

/// Estimates `M = E ||X||_q` for `X` uniform on the Hilbert-Schmidt sphere of `M_d`.
pub fn estimate_m(d: usize, q: SchattenOrder, samples: usize, rng: &mut RngStream) -> Result<NormStats> {
    if q.value() < 2.0 {
        return Err(LabError::UnsupportedOrder { order: q.value(), reason: "concentration experiments need q >= 2" });
    }
    if samples < 100 {
        return Err(LabError::Config(format!("need at least 100 samples, got {samples}")));
    }
    if d == 0 {
        return Err(LabError::Dimension("d must be positive".into()));
    }
    let base = rng.next_u64();
    let draws: Vec<(f64, f64)> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::for_trial(base, SPHERE_STREAMS, i);
            let x = hs_sphere_point(d, &mut rng);
            let s = singular_values(&x)?;
            Ok((schatten_from_singular_values(&s, q), s[0]))
        })
        .collect::<Result<_>>()?;
    let qs: Vec<f64> = draws.iter().map(|t| t.0).collect();
    let ops: Vec<f64> = draws.iter().map(|t| t.1).collect();
    let (m_hat, m_stderr) = mean_and_stderr(&qs);
    let (opnorm_mean_hat, opnorm_stderr) = mean_and_stderr(&ops);
    Ok(NormStats { q, d, samples, m_hat, m_stderr, opnorm_mean_hat, opnorm_stderr, b: SCHATTEN_B })
}

/// `c_eff * eps^2 * (M/b)^2 * d^2`, before rounding.
pub fn dvoretzky_dimension_exact(stats: &NormStats, epsilon: f64, c_eff: f64) -> f64 {
    let n = (stats.d * stats.d) as f64;
    c_eff * epsilon * epsilon * (stats.m_hat / stats.b).powi(2) * n
}

/// Subspace dimension at which the concentration window is expected to hold,
/// rounded and clamped to `[1, d^2]`.
pub fn dvoretzky_dimension(d: usize, q: SchattenOrder, stats: &NormStats, epsilon: f64, c_eff: f64) -> Result<usize> {
    if stats.d != d || stats.q != q {
        return Err(LabError::Config(format!(
            "statistics are for (d = {}, q = {}), asked for (d = {d}, q = {q})",
            stats.d, stats.q
        )));
    }
    let m = dvoretzky_dimension_exact(stats, epsilon, c_eff).round() as usize;
    Ok(m.clamp(1, d * d))
}

/// Per-trial extremes of `||x||_q / ||x||_2` on Haar subspaces of one dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DvoretzkyWindow {
    pub d: usize,
    pub q: SchattenOrder,
    pub m: usize,
    pub trials: usize,
    pub m_hat: f64,
    pub per_trial: Vec<NormWindow>,
    /// Smallest `eps` with every trial's window inside `[(1-eps) M_hat, (1+eps) M_hat]`.
    pub epsilon_effective: f64,
}

/// One CSV row of a window experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowRow {
    pub d: usize,
    pub q: SchattenOrder,
    pub m: usize,
    pub trial: usize,
    pub max_ratio: f64,
    pub min_ratio: f64,
}

impl DvoretzkyWindow {
    pub fn rows(&self) -> Vec<WindowRow> {
        self.per_trial
            .iter()
            .enumerate()
            .map(|(trial, w)| WindowRow {
                d: self.d,
                q: self.q,
                m: self.m,
                trial,
                max_ratio: w.max_ratio,
                min_ratio: w.min_ratio,
            })
            .collect()
    }

    /// Largest `max_ratio / min_ratio` over trials.
    pub fn worst_spread(&self) -> f64 {
        self.per_trial.iter().map(|w| w.max_ratio / w.min_ratio).fold(0.0, f64::max)
    }
}

fn check_window_args(d: usize, q: SchattenOrder, m: usize) -> Result<()> {
    if !(q.value() > 2.0) {
        return Err(LabError::UnsupportedOrder { order: q.value(), reason: "the window needs q > 2" });
    }
    if m == 0 || m > d * d {
        return Err(LabError::Dimension(format!("subspace dimension {m} outside [1, {}]", d * d)));
    }
    Ok(())
}

/// Draws `trials` Haar subspaces of dimension `m` and records the extremes of the ratio on each.
pub fn window_experiment(
    d: usize,
    q: SchattenOrder,
    m: usize,
    trials: usize,
    cfg: &AscentConfig,
    stats: &NormStats,
    rng: &mut RngStream,
) -> Result<DvoretzkyWindow> {
    check_window_args(d, q, m)?;
    if stats.d != d || stats.q != q {
        return Err(LabError::Config("norm statistics do not match (d, q)".into()));
    }
    let base = rng.next_u64();
    let per_trial: Vec<NormWindow> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let w = random_subspace_basis(m, d, &mut RngStream::for_trial(base, BASIS_STREAMS, t))?;
            subspace_norm_window(&w, q, cfg, &mut RngStream::for_trial(base, OPTIMIZER_STREAMS, t))
        })
        .collect::<Result<_>>()?;
    let epsilon_effective = per_trial
        .iter()
        .map(|w| (w.max_ratio / stats.m_hat - 1.0).max(1.0 - w.min_ratio / stats.m_hat))
        .fold(0.0, f64::max);
    Ok(DvoretzkyWindow { d, q, m, trials, m_hat: stats.m_hat, per_trial, epsilon_effective })
}

/// Worst (largest) subspace maximum of the ratio at one dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShrinkRow {
    pub d: usize,
    pub q: SchattenOrder,
    pub m: usize,
    pub worst_max_ratio: f64,
    /// `worst_max_ratio / (sqrt(m / d^2) * b)`.
    pub empirical_c: f64,
}

/// Sweeps the subspace dimension and records the one-sided constant `C`.
pub fn shrinking_experiment(
    d: usize,
    q: SchattenOrder,
    m_list: &[usize],
    trials: usize,
    cfg: &AscentConfig,
    rng: &mut RngStream,
) -> Result<Vec<ShrinkRow>> {
    for &m in m_list {
        check_window_args(d, q, m)?;
    }
    if trials == 0 {
        return Err(LabError::Config("need at least one trial".into()));
    }
    let base = rng.next_u64();
    let n = (d * d) as f64;
    m_list
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let maxima: Vec<f64> = (0..trials as u64)
                .into_par_iter()
                .map(|t| {
                    let cell = (k as u64) << 32 | t;
                    let w = random_subspace_basis(m, d, &mut RngStream::for_trial(base, BASIS_STREAMS, cell))?;
                    subspace_max_ratio(&w, q, cfg, &mut RngStream::for_trial(base, OPTIMIZER_STREAMS, cell))
                })
                .collect::<Result<_>>()?;
            let worst = maxima.iter().copied().fold(0.0, f64::max);
            Ok(ShrinkRow {
                d,
                q,
                m,
                worst_max_ratio: worst,
                empirical_c: worst / ((m as f64 / n).sqrt() * SCHATTEN_B),
            })
        })
        .collect()
}

/// Writes serializable rows as comma-separated values with a header.
pub fn write_csv<W: std::io::Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
