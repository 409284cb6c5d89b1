//! Maximum output p-norm estimation.
//!
//! For a channel defined by an isometry `W`, the maximum output p-norm is
//! `max ||vec_to_matrix(W c)||_{2p}^2` over unit `c in C^m`. This module
//! maximizes (or minimizes) `f(c) = ||vec_to_matrix(W c)||_q` on the sphere by
//! projected gradient steps with Armijo backtracking, retracting by
//! renormalization, and backs the ascent with plain random sampling.
//!
//! Every reported value is `f` evaluated at an actual unit vector, so maxima
//! are lower bounds on the true maximum and minima upper bounds on the true
//! minimum.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::PartialTraceChannel;
use crate::ensembles::{Isometry, RngStream};
use crate::error::{LabError, Result};
use crate::linalg::{schatten_norm, vec_to_matrix, PureState, SchattenOrder, C64, PURE_NORM_TOL};

/// Order of the smooth surrogate used when minimizing the operator norm.
pub const OPNORM_SURROGATE_ORDER: f64 = 64.0;

const MIN_STEP: f64 = 1e-18;

const RESTART_STREAMS: u64 = 1;
const BASELINE_STREAMS: u64 = 2;
const MIN_RESTART_STREAMS: u64 = 3;
const MIN_BASELINE_STREAMS: u64 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AscentConfig {
    pub restarts: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub armijo_c: f64,
    pub armijo_shrink: f64,
    pub init_step: f64,
    pub sample_baseline: usize,
}

impl Default for AscentConfig {
    fn default() -> Self {
        AscentConfig {
            restarts: 20,
            max_iters: 500,
            grad_tol: 1e-8,
            armijo_c: 1e-4,
            armijo_shrink: 0.5,
            init_step: 1.0,
            sample_baseline: 2000,
        }
    }
}

impl AscentConfig {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |x: f64| x > 0.0 && x < 1.0;
        if self.restarts == 0 {
            return Err(LabError::Config("restarts must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(LabError::Config("max_iters must be positive".into()));
        }
        if !(self.grad_tol > 0.0) {
            return Err(LabError::Config("grad_tol must be positive".into()));
        }
        if !open_unit(self.armijo_c) || !open_unit(self.armijo_shrink) {
            return Err(LabError::Config("armijo_c and armijo_shrink must lie in (0, 1)".into()));
        }
        if !(self.init_step > 0.0) || !self.init_step.is_finite() {
            return Err(LabError::Config("init_step must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

/// `c -> ||vec_to_matrix(W c)||_q` for a fixed isometry `W`.
///
/// Values and gradients go through the spectrum of `A A^dag`, so no SVD is
/// needed: with `A A^dag = U diag(s^2) U^dag`, the Euclidean gradient of
/// `||A||_q` with respect to `A` is `U diag((s/f)^(q-2)) U^dag A / f`.
pub struct SubspaceNorm<'a> {
    w: &'a DMatrix<C64>,
    d: usize,
    r: usize,
    q: SchattenOrder,
}

impl<'a> SubspaceNorm<'a> {
    pub fn new(w: &'a Isometry, q: SchattenOrder) -> Self {
        let (d, r) = w.out_shape();
        SubspaceNorm { w: w.matrix().as_dmatrix(), d, r, q }
    }

    pub fn dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn order(&self) -> SchattenOrder {
        self.q
    }

    fn with_order(&self, q: SchattenOrder) -> SubspaceNorm<'a> {
        SubspaceNorm { w: self.w, d: self.d, r: self.r, q }
    }

    fn reshaped(&self, c: &DVector<C64>) -> DMatrix<C64> {
        let y = self.w * c;
        DMatrix::from_row_slice(self.d, self.r, y.as_slice())
    }

    fn norm_from_gram_spectrum(&self, lambdas: &[f64], lmax: f64) -> f64 {
        if lmax <= 0.0 {
            return 0.0;
        }
        if self.q.is_infinite() {
            return lmax.sqrt();
        }
        let half = 0.5 * self.q.value();
        // singular values below SPECTRAL_ZERO * s_max are dropped
        let cutoff = 1e-28 * lmax;
        let sum: f64 = lambdas.iter().filter(|&&l| l > cutoff).map(|&l| (l / lmax).powf(half)).sum();
        lmax.sqrt() * sum.powf(1.0 / self.q.value())
    }

    /// `f(c)`; `c` is assumed to be a unit vector.
    pub fn value(&self, c: &DVector<C64>) -> f64 {
        let a = self.reshaped(c);
        let lambdas: Vec<f64> = (&a * a.adjoint()).symmetric_eigenvalues().iter().copied().collect();
        let lmax = lambdas.iter().copied().fold(0.0, f64::max);
        self.norm_from_gram_spectrum(&lambdas, lmax)
    }

    /// `f(c)` and its Euclidean gradient in `C^m ≅ R^{2m}`.
    ///
    /// For `q = inf` the gradient is that of the top singular value, `W^dag vec(u_1 v_1^dag)`,
    /// which is only a gradient where `s_1` is simple.
    pub fn value_and_gradient(&self, c: &DVector<C64>) -> (f64, DVector<C64>) {
        let a = self.reshaped(c);
        let eig = (&a * a.adjoint()).symmetric_eigen();
        let lambdas: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let (top, lmax) = lambdas
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, l)| if l > acc.1 { (i, l) } else { acc });
        let f = self.norm_from_gram_spectrum(&lambdas, lmax);
        if f == 0.0 {
            return (0.0, DVector::zeros(c.len()));
        }
        let u = &eig.eigenvectors;
        let weights: Vec<f64> = if self.q.is_infinite() {
            (0..lambdas.len()).map(|i| if i == top { 1.0 / f } else { 0.0 }).collect()
        } else {
            let e = 0.5 * (self.q.value() - 2.0);
            let f2 = f * f;
            let cutoff = 1e-28 * lmax;
            lambdas
                .iter()
                .map(|&l| if l > cutoff { (l / f2).powf(e) / f } else { 0.0 })
                .collect()
        };
        let mut weighted = u.clone();
        for (j, mut col) in weighted.column_iter_mut().enumerate() {
            col *= C64::new(weights[j], 0.0);
        }
        let g_mat = weighted * (u.adjoint() * &a);
        let mut vec_g = DVector::zeros(self.d * self.r);
        for i in 0..self.d {
            for j in 0..self.r {
                vec_g[i * self.r + j] = g_mat[(i, j)];
            }
        }
        (f, self.w.ad_mul(&vec_g))
    }
}

/// Component of `g` tangent to the sphere at `c`: `g - Re(c^dag g) c`.
pub fn tangent_projection(c: &DVector<C64>, g: &DVector<C64>) -> DVector<C64> {
    let radial = c.dotc(g).re;
    g - c * C64::new(radial, 0.0)
}

/// Euclidean gradient of `c -> ||vec_to_matrix(W c)||_q`, assembled as a complex vector.
pub fn ratio_gradient(w: &Isometry, c: &DVector<C64>, q: SchattenOrder) -> Result<DVector<C64>> {
    if !(q.value() > 2.0) {
        return Err(LabError::UnsupportedOrder { order: q.value(), reason: "the ratio is not smooth for q <= 2" });
    }
    if c.len() != w.in_dim() {
        return Err(LabError::Dimension(format!("point has {} coordinates, subspace has dimension {}", c.len(), w.in_dim())));
    }
    if (c.norm() - 1.0).abs() > PURE_NORM_TOL {
        return Err(LabError::Domain("gradient point must be a unit vector".into()));
    }
    Ok(SubspaceNorm::new(w, q).value_and_gradient(c).1)
}

/// One projected-gradient run from a fixed start.
#[derive(Clone, Debug)]
pub struct AscentRun {
    pub value: f64,
    pub point: DVector<C64>,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each accepted step, starting with the initial value.
    pub history: Vec<f64>,
}

/// Projected gradient ascent (or descent) on the unit sphere with Armijo backtracking.
///
/// `q = inf` is not smooth: maximization switches to alternating power
/// iteration on the top singular pair, and minimization descends the
/// `OPNORM_SURROGATE_ORDER` norm and reports the operator norm at the end point.
pub fn sphere_ascent(obj: &SubspaceNorm<'_>, start: DVector<C64>, sense: Sense, cfg: &AscentConfig) -> AscentRun {
    if obj.order().is_infinite() {
        return match sense {
            Sense::Maximize => power_iteration(obj, start, cfg),
            Sense::Minimize => {
                let surrogate = obj.with_order(SchattenOrder::new(OPNORM_SURROGATE_ORDER).expect("valid order"));
                let mut run = armijo_run(&surrogate, start, sense, cfg);
                run.value = obj.value(&run.point);
                run
            }
        };
    }
    armijo_run(obj, start, sense, cfg)
}

fn armijo_run(obj: &SubspaceNorm<'_>, start: DVector<C64>, sense: Sense, cfg: &AscentConfig) -> AscentRun {
    let sign = match sense {
        Sense::Maximize => 1.0,
        Sense::Minimize => -1.0,
    };
    let mut c = start;
    let (mut f, mut g) = obj.value_and_gradient(&c);
    let mut gt = tangent_projection(&c, &g);
    let mut history = vec![f];
    let mut converged = false;
    let mut iterations = 0;
    let mut first_step = cfg.init_step;
    'outer: while iterations < cfg.max_iters {
        let gn2 = gt.norm_squared();
        if gn2.sqrt() <= cfg.grad_tol {
            converged = true;
            break;
        }
        iterations += 1;
        let mut t = first_step;
        let (cand, fc) = loop {
            let mut cand = &c + &gt * C64::new(sign * t, 0.0);
            let n = cand.norm();
            cand /= C64::new(n, 0.0);
            let fc = obj.value(&cand);
            if sign * (fc - f) >= cfg.armijo_c * t * gn2 {
                break (cand, fc);
            }
            t *= cfg.armijo_shrink;
            if t < MIN_STEP {
                // no representable improvement left along the gradient
                break 'outer;
            }
        };
        g = obj.value_and_gradient(&cand).1;
        let gt_new = tangent_projection(&cand, &g);
        first_step = barzilai_borwein(&(&cand - &c), &(&gt_new - &gt), cfg.init_step);
        c = cand;
        gt = gt_new;
        f = fc;
        history.push(f);
    }
    AscentRun { value: f, point: c, iterations, converged, history }
}

/// Trial step `|<s, s> / <s, y>|` for the next line search, kept within four decades of `init_step`.
fn barzilai_borwein(s: &DVector<C64>, y: &DVector<C64>, init_step: f64) -> f64 {
    let sy = s.dotc(y).re.abs();
    if sy == 0.0 || !sy.is_finite() {
        return init_step;
    }
    (s.norm_squared() / sy).clamp(1e-4 * init_step, 1e4 * init_step)
}

fn power_iteration(obj: &SubspaceNorm<'_>, start: DVector<C64>, cfg: &AscentConfig) -> AscentRun {
    let mut c = start;
    let (mut f, mut g) = obj.value_and_gradient(&c);
    let mut history = vec![f];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        // g = W^dag vec(u_1 v_1^dag); the maximizer of |<g, c>| over the sphere
        let n = g.norm();
        if n == 0.0 {
            break;
        }
        let cand = &g / C64::new(n, 0.0);
        let (fc, gc) = obj.value_and_gradient(&cand);
        if fc <= f {
            converged = true;
            break;
        }
        let gain = fc - f;
        c = cand;
        f = fc;
        g = gc;
        history.push(f);
        if gain <= cfg.grad_tol * f {
            converged = true;
            break;
        }
    }
    AscentRun { value: f, point: c, iterations, converged, history }
}

/// Uniform point on the unit sphere of `C^m`.
pub fn random_unit_vector<R: Rng + ?Sized>(m: usize, rng: &mut R) -> DVector<C64> {
    let v = DVector::from_iterator(
        m,
        (0..m).map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            C64::new(re, im)
        }),
    );
    let n = v.norm();
    v / C64::new(n, 0.0)
}

struct Search {
    runs: Vec<AscentRun>,
    baseline_best: (f64, DVector<C64>),
}

fn multi_start(obj: &SubspaceNorm<'_>, sense: Sense, cfg: &AscentConfig, base_seed: u64) -> Search {
    let (restart_exp, baseline_exp) = match sense {
        Sense::Maximize => (RESTART_STREAMS, BASELINE_STREAMS),
        Sense::Minimize => (MIN_RESTART_STREAMS, MIN_BASELINE_STREAMS),
    };
    let m = obj.dim();
    let runs: Vec<AscentRun> = (0..cfg.restarts as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::for_trial(base_seed, restart_exp, i);
            let start = random_unit_vector(m, &mut rng);
            sphere_ascent(obj, start, sense, cfg)
        })
        .collect();
    let samples: Vec<(f64, DVector<C64>)> = (0..cfg.sample_baseline as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::for_trial(base_seed, baseline_exp, i);
            let c = random_unit_vector(m, &mut rng);
            (obj.value(&c), c)
        })
        .collect();
    let better = |a: f64, b: f64| match sense {
        Sense::Maximize => a > b,
        Sense::Minimize => a < b,
    };
    let mut best: Option<(f64, DVector<C64>)> = None;
    for (v, c) in samples {
        if best.as_ref().is_none_or(|(b, _)| better(v, *b)) {
            best = Some((v, c));
        }
    }
    let baseline_best = best.unwrap_or_else(|| {
        let c = runs[0].point.clone();
        (match sense {
            Sense::Maximize => f64::NEG_INFINITY,
            Sense::Minimize => f64::INFINITY,
        }, c)
    });
    Search { runs, baseline_best }
}

/// Best point found for the maximum output p-norm; a certified lower bound on the true maximum.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MaxNormEstimate {
    pub best_value: f64,
    pub best_input: PureState,
    pub per_restart_values: Vec<f64>,
    pub iterations_used: Vec<usize>,
    /// Best value among the random baseline samples; 0 when no samples were drawn.
    pub baseline_max: f64,
}

/// `||Φ(|x><x|)||_p = ||vec_to_matrix(V x)||_{2p}^2`.
pub fn output_p_norm_at(channel: &PartialTraceChannel, x: &PureState, p: SchattenOrder) -> Result<f64> {
    let y = channel.embed(x)?;
    if (x.amplitudes().norm() - 1.0).abs() > PURE_NORM_TOL {
        return Err(LabError::Domain("input must be a unit vector".into()));
    }
    let s = schatten_norm(&vec_to_matrix(&y)?, p.doubled())?;
    Ok(s * s)
}

fn check_p(p: SchattenOrder) -> Result<()> {
    if !(p.value() > 1.0) {
        return Err(LabError::InvalidOrder(p.value()));
    }
    Ok(())
}

/// Multi-restart estimate of the maximum output p-norm of a channel.
pub fn estimate_max_output_norm(
    channel: &PartialTraceChannel,
    p: SchattenOrder,
    cfg: &AscentConfig,
    rng: &mut RngStream,
) -> Result<MaxNormEstimate> {
    check_p(p)?;
    cfg.validate()?;
    let w = channel.isometry();
    let obj = SubspaceNorm::new(w, p.doubled());
    let search = multi_start(&obj, Sense::Maximize, cfg, rng.next_u64());

    let per_restart_values: Vec<f64> = search.runs.iter().map(|r| r.value * r.value).collect();
    let iterations_used: Vec<usize> = search.runs.iter().map(|r| r.iterations).collect();
    let baseline_max = if cfg.sample_baseline > 0 { search.baseline_best.0.powi(2) } else { 0.0 };

    let (mut best_value, mut best_point) = (baseline_max, &search.baseline_best.1);
    for (v, run) in per_restart_values.iter().zip(&search.runs) {
        if *v > best_value {
            best_value = *v;
            best_point = &run.point;
        }
    }
    let best_input = PureState::normalized(best_point.clone())?.canonical_phase();
    Ok(MaxNormEstimate { best_value, best_input, per_restart_values, iterations_used, baseline_max })
}

/// Empirical extremes of `||x||_q / ||x||_2` over a subspace of `M_d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormWindow {
    /// Lower bound on the true maximum.
    pub max_ratio: f64,
    /// Upper bound on the true minimum.
    pub min_ratio: f64,
}

fn check_q(q: SchattenOrder) -> Result<()> {
    if !(q.value() > 2.0) {
        return Err(LabError::UnsupportedOrder { order: q.value(), reason: "the window needs q > 2" });
    }
    Ok(())
}

/// Largest ratio found on the subspace spanned by `w`.
pub fn subspace_max_ratio(w: &Isometry, q: SchattenOrder, cfg: &AscentConfig, rng: &mut RngStream) -> Result<f64> {
    check_q(q)?;
    cfg.validate()?;
    let obj = SubspaceNorm::new(w, q);
    let search = multi_start(&obj, Sense::Maximize, cfg, rng.next_u64());
    Ok(search.runs.iter().map(|r| r.value).fold(search.baseline_best.0, f64::max))
}

/// Both extremes of the ratio on the subspace spanned by `w`.
pub fn subspace_norm_window(w: &Isometry, q: SchattenOrder, cfg: &AscentConfig, rng: &mut RngStream) -> Result<NormWindow> {
    check_q(q)?;
    cfg.validate()?;
    let obj = SubspaceNorm::new(w, q);
    let seed = rng.next_u64();
    let hi = multi_start(&obj, Sense::Maximize, cfg, seed);
    let lo = multi_start(&obj, Sense::Minimize, cfg, seed);
    let max_ratio = hi.runs.iter().map(|r| r.value).fold(hi.baseline_best.0, f64::max);
    let min_ratio = lo.runs.iter().map(|r| r.value).fold(lo.baseline_best.0, f64::min);
    Ok(NormWindow { max_ratio, min_ratio })
}
