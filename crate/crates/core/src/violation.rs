//! End-to-end multiplicativity test for a random channel at the critical
//! environment dimension: optimizer estimate for `Φ` against the certified
//! witness `(Φ ⊗ Φ̄)(ψ_m)`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{certified_product_lower_bounds, conjugate_channel, PartialTraceChannel};
use crate::ensembles::{haar_isometry, mix64, Field, RngStream};
use crate::entropy::{entropy_from_p_norm, nats_to_bits, RenyiOrder};
use crate::error::{LabError, Result};
use crate::optimize::{estimate_max_output_norm, AscentConfig, MaxNormEstimate};

pub const SCHEMA_VERSION: &str = "v1";

const CHANNEL_STREAM: u64 = 0x6368_616e;
const OPTIMIZER_STREAM: u64 = 0x6f70_7469;

/// `round(d^(1 + 1/p))` clamped to `[1, d^2]`; `p = inf` gives `d`.
pub fn critical_m(d: usize, p: f64) -> Result<usize> {
    if d < 2 {
        return Err(LabError::Dimension(format!("d must be at least 2, got {d}")));
    }
    if p.is_nan() || p <= 1.0 {
        return Err(LabError::InvalidOrder(p));
    }
    let m = (d as f64).powf(1.0 + 1.0 / p).round() as usize;
    Ok(m.clamp(1, d * d))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Certification {
    Certified,
    Estimate,
}

/// Optimizer output for the single channel, without the maximizing input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormEstimateSummary {
    /// Squared best ratio, a lower bound on the maximum output p-norm.
    pub value: f64,
    pub per_restart_values: Vec<f64>,
    pub iterations_used: Vec<usize>,
    pub baseline_max: f64,
}

impl From<&MaxNormEstimate> for NormEstimateSummary {
    fn from(e: &MaxNormEstimate) -> Self {
        NormEstimateSummary {
            value: e.best_value,
            per_restart_values: e.per_restart_values.clone(),
            iterations_used: e.iterations_used.clone(),
            baseline_max: e.baseline_max,
        }
    }
}

/// One channel, one order. Entropies are in nats with a bits copy alongside.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub p: RenyiOrder,
    pub d: usize,
    pub m: usize,
    pub seed: u64,
    pub field: Field,
    pub single_norm_estimate: NormEstimateSummary,
    /// Upper estimate of the single channel's minimal output entropy.
    pub single_entropy_estimate: f64,
    pub single_entropy_estimate_bits: f64,
    pub product_lambda_max: f64,
    pub product_p_norm_lb: f64,
    pub product_entropy_ub: f64,
    pub product_entropy_ub_bits: f64,
    pub overlap_max_entangled: f64,
    /// `p/(p-1) log(d^2/m)`.
    pub certified_entropy_cap: f64,
    /// `product_p_norm_lb - single^2`.
    pub multiplicativity_gap: f64,
    /// `2 single_entropy_estimate - product_entropy_ub`.
    pub additivity_gap: f64,
    pub violation_detected: bool,
    pub certification: BTreeMap<String, Certification>,
    pub config: AscentConfig,
}

impl ViolationReport {
    /// Single estimate of the maximum output p-norm.
    pub fn single_norm(&self) -> f64 {
        self.single_norm_estimate.value
    }

    /// `d^(1/p - 1)`, the output norm of the maximally mixed state.
    pub fn norm_floor(&self) -> f64 {
        (self.d as f64).powf(1.0 / self.p.value() - 1.0)
    }

    /// One line for terminals.
    pub fn summary_line(&self) -> String {
        format!(
            "p={} d={} m={} field={} single={:.6} product_lb={:.6} mult_gap={:+.6} add_gap={:+.6} detected={}",
            self.p,
            self.d,
            self.m,
            field_name(self.field),
            self.single_norm(),
            self.product_p_norm_lb,
            self.multiplicativity_gap,
            self.additivity_gap,
            self.violation_detected
        )
    }
}

fn field_name(f: Field) -> &'static str {
    match f {
        Field::Complex => "complex",
        Field::Real => "real",
    }
}

fn certification_map() -> BTreeMap<String, Certification> {
    use Certification::*;
    [
        ("single_norm_estimate", Estimate),
        ("single_entropy_estimate", Estimate),
        ("product_lambda_max", Certified),
        ("product_p_norm_lb", Certified),
        ("product_entropy_ub", Certified),
        ("certified_entropy_cap", Certified),
        ("multiplicativity_gap", Estimate),
        ("additivity_gap", Estimate),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

/// Samples the channel `run_violation` would use for this seed.
pub fn sample_channel(d: usize, m: usize, field: Field, seed: u64) -> Result<PartialTraceChannel> {
    let mut rng = RngStream::new(seed, CHANNEL_STREAM);
    let v = haar_isometry(m, d, d, field, &mut rng)?.with_provenance(seed, CHANNEL_STREAM);
    Ok(PartialTraceChannel::new(v))
}

/// Builds the report for an already constructed channel with equal input and environment shapes.
pub fn report_for_channel(
    channel: &PartialTraceChannel,
    p: f64,
    seed: u64,
    cfg: &AscentConfig,
) -> Result<ViolationReport> {
    let order = RenyiOrder::new(p)?;
    if p <= 1.0 {
        return Err(LabError::InvalidOrder(p));
    }
    let (d, m) = (channel.output_dim(), channel.input_dim());
    let field = channel.isometry().field();
    if field == Field::Real {
        let conj = conjugate_channel(channel);
        if conj.isometry().matrix().max_abs_diff(channel.isometry().matrix()) != 0.0 {
            return Err(LabError::Numerical("real channel differs from its conjugate".into()));
        }
    }
    let bounds = certified_product_lower_bounds(channel, p)?;
    let mut rng = RngStream::new(seed, OPTIMIZER_STREAM);
    let estimate = estimate_max_output_norm(channel, order.as_schatten(), cfg, &mut rng)?;
    let single = estimate.best_value;
    let single_entropy = entropy_from_p_norm(single, order)?;
    let cap = p / (p - 1.0) * ((d * d) as f64 / m as f64).ln();
    let additivity_gap = 2.0 * single_entropy - bounds.entropy_ub;
    Ok(ViolationReport {
        p: order,
        d,
        m,
        seed,
        field,
        single_norm_estimate: NormEstimateSummary::from(&estimate),
        single_entropy_estimate: single_entropy,
        single_entropy_estimate_bits: nats_to_bits(single_entropy),
        product_lambda_max: bounds.lambda_max,
        product_p_norm_lb: bounds.p_norm_lb,
        product_entropy_ub: bounds.entropy_ub,
        product_entropy_ub_bits: nats_to_bits(bounds.entropy_ub),
        overlap_max_entangled: bounds.overlap_max_entangled,
        certified_entropy_cap: cap,
        multiplicativity_gap: bounds.p_norm_lb - single * single,
        additivity_gap,
        violation_detected: additivity_gap > 0.0,
        certification: certification_map(),
        config: cfg.clone(),
    })
}

/// Samples a Haar channel `C^m -> M_d` from `seed` and compares it with its product with the conjugate.
pub fn run_violation(p: f64, d: usize, m: usize, field: Field, seed: u64, cfg: &AscentConfig) -> Result<ViolationReport> {
    if p.is_nan() || p <= 1.0 {
        return Err(LabError::InvalidOrder(p));
    }
    if d < 2 {
        return Err(LabError::Dimension(format!("d must be at least 2, got {d}")));
    }
    if m == 0 || m > d * d {
        return Err(LabError::Dimension(format!("m = {m} outside [1, {}]", d * d)));
    }
    cfg.validate()?;
    let channel = sample_channel(d, m, field, seed)?;
    report_for_channel(&channel, p, seed, cfg)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MRule {
    Critical,
    Explicit(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanGrid {
    pub p_values: Vec<f64>,
    pub d_values: Vec<usize>,
    pub m_rule: MRule,
    pub trials: usize,
    pub field: Field,
}

impl Default for ScanGrid {
    fn default() -> Self {
        ScanGrid {
            p_values: vec![2.0, 3.0, 4.0],
            d_values: vec![8, 16, 32],
            m_rule: MRule::Critical,
            trials: 5,
            field: Field::Complex,
        }
    }
}

/// One grid point before the trial index.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanCell {
    pub p: f64,
    pub d: usize,
    pub m: usize,
    pub trial: usize,
}

impl ScanGrid {
    /// Expands the grid in `(p, d, m, trial)` order, validating every cell.
    pub fn cells(&self) -> Result<Vec<ScanCell>> {
        if self.p_values.is_empty() || self.d_values.is_empty() {
            return Err(LabError::Config("p_values and d_values must be non-empty".into()));
        }
        if self.trials == 0 {
            return Err(LabError::Config("trials must be positive".into()));
        }
        let mut cells = Vec::new();
        for &p in &self.p_values {
            if !p.is_finite() || p <= 1.0 {
                return Err(LabError::Config(format!("p = {p} must be finite and greater than 1")));
            }
            for &d in &self.d_values {
                if d < 2 {
                    return Err(LabError::Config(format!("d = {d} must be at least 2")));
                }
                let ms = match &self.m_rule {
                    MRule::Critical => vec![critical_m(d, p)?],
                    MRule::Explicit(list) if list.is_empty() => {
                        return Err(LabError::Config("explicit m list is empty".into()))
                    }
                    MRule::Explicit(list) => list.clone(),
                };
                for m in ms {
                    if m == 0 || m > d * d {
                        return Err(LabError::Config(format!("m = {m} outside [1, {}] for d = {d}", d * d)));
                    }
                    for trial in 0..self.trials {
                        cells.push(ScanCell { p, d, m, trial });
                    }
                }
            }
        }
        Ok(cells)
    }
}

/// Seed of one scan cell; depends on the cell's coordinates, not on the rest of the grid.
pub fn cell_seed(master_seed: u64, cell: &ScanCell) -> u64 {
    let mut h = mix64(master_seed);
    for k in [cell.p.to_bits(), cell.d as u64, cell.m as u64, cell.trial as u64] {
        h = mix64(h ^ k);
    }
    h
}

/// Aggregate over the trials sharing one `(p, d)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub p: f64,
    pub d: usize,
    pub reports: usize,
    pub violation_fraction: f64,
    pub mean_multiplicativity_gap: f64,
    pub mean_additivity_gap: f64,
    pub mean_single_norm_estimate: f64,
    pub mean_product_p_norm_lb: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanOutput {
    pub schema_version: String,
    pub master_seed: u64,
    pub grid: ScanGrid,
    pub config: AscentConfig,
    pub reports: Vec<ViolationReport>,
    pub summary: Vec<CellSummary>,
}

impl ScanOutput {
    pub fn summary_for(&self, p: f64, d: usize) -> Option<&CellSummary> {
        self.summary.iter().find(|s| s.p == p && s.d == d)
    }
}

fn summarize(grid: &ScanGrid, reports: &[ViolationReport]) -> Vec<CellSummary> {
    let mut out = Vec::new();
    for &p in &grid.p_values {
        for &d in &grid.d_values {
            let group: Vec<&ViolationReport> = reports.iter().filter(|r| r.p.value() == p && r.d == d).collect();
            if group.is_empty() {
                continue;
            }
            let n = group.len() as f64;
            let mean = |f: &dyn Fn(&ViolationReport) -> f64| group.iter().map(|r| f(r)).sum::<f64>() / n;
            out.push(CellSummary {
                p,
                d,
                reports: group.len(),
                violation_fraction: group.iter().filter(|r| r.violation_detected).count() as f64 / n,
                mean_multiplicativity_gap: mean(&|r| r.multiplicativity_gap),
                mean_additivity_gap: mean(&|r| r.additivity_gap),
                mean_single_norm_estimate: mean(&|r| r.single_norm()),
                mean_product_p_norm_lb: mean(&|r| r.product_p_norm_lb),
            });
        }
    }
    out
}

/// Runs every cell of the grid; reports come back in `(p, d, m, trial)` order.
pub fn run_scan(grid: &ScanGrid, cfg: &AscentConfig, master_seed: u64) -> Result<ScanOutput> {
    cfg.validate()?;
    let cells = grid.cells()?;
    let reports: Vec<ViolationReport> = cells
        .par_iter()
        .map(|c| run_violation(c.p, c.d, c.m, grid.field, cell_seed(master_seed, c), cfg))
        .collect::<Result<_>>()?;
    let summary = summarize(grid, &reports);
    Ok(ScanOutput {
        schema_version: SCHEMA_VERSION.to_string(),
        master_seed,
        grid: grid.clone(),
        config: cfg.clone(),
        reports,
        summary,
    })
}
