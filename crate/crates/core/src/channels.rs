//! Quantum channels of the form `rho -> tr_2(V rho V^dag)` and the product
//! channel `Φ ⊗ Φ̄` evaluated on the maximally entangled state.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ensembles::Isometry;
use crate::entropy::{renyi_from_spectrum, RenyiOrder};
use crate::error::{LabError, Result};
use crate::linalg::{
    gram_outer, partial_trace_2, reshape_row_major, schatten_from_singular_values, CMatrix, DensityMatrix, PureState,
    C64,
};

/// The channel `M_m -> M_d`, `rho -> tr_2(V rho V^dag)` for an isometry `V: C^m -> C^d ⊗ C^r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartialTraceChannel {
    isometry: Isometry,
}

impl PartialTraceChannel {
    pub fn new(isometry: Isometry) -> Self {
        PartialTraceChannel { isometry }
    }

    pub fn isometry(&self) -> &Isometry {
        &self.isometry
    }

    pub fn input_dim(&self) -> usize {
        self.isometry.in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.isometry.out_shape().0
    }

    pub fn env_dim(&self) -> usize {
        self.isometry.out_shape().1
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        let m = self.input_dim();
        if rho.dim() != m {
            return Err(LabError::Dimension(format!("channel input is {m}-dimensional, state is {}", rho.dim())));
        }
        let v = self.isometry.matrix();
        let big = v.matmul(rho.matrix())?.matmul(&v.adjoint())?;
        let (d, r) = self.isometry.out_shape();
        DensityMatrix::new(partial_trace_2(&big, d, r)?)
    }

    /// `V x`, tagged with the output shape `(d, r)`.
    pub fn embed(&self, x: &PureState) -> Result<PureState> {
        if x.dim() != self.input_dim() {
            return Err(LabError::Dimension(format!(
                "channel input is {}-dimensional, state is {}",
                self.input_dim(),
                x.dim()
            )));
        }
        let y = self.isometry.matrix().as_dmatrix() * x.amplitudes();
        let (d, r) = self.isometry.out_shape();
        PureState::normalized(y)?.with_shape(d, r)
    }

    /// Output on a pure input: `A A^dag` with `A` the reshaped `V x`.
    pub fn apply_pure(&self, x: &PureState) -> Result<DensityMatrix> {
        let y = self.embed(x)?;
        let (d, r) = self.isometry.out_shape();
        let a = reshape_row_major(y.amplitudes().as_slice(), d, r);
        DensityMatrix::new(CMatrix::wrap(&a * a.adjoint()))
    }
}

/// Kraus operators `K_j`, each `d x m`.
#[derive(Clone, Debug, PartialEq)]
pub struct KrausSet {
    operators: Vec<CMatrix>,
}

impl KrausSet {
    pub fn new(operators: Vec<CMatrix>) -> Result<Self> {
        let first = operators.first().ok_or_else(|| LabError::Dimension("empty Kraus set".into()))?;
        let shape = (first.rows(), first.cols());
        if operators.iter().any(|k| (k.rows(), k.cols()) != shape) {
            return Err(LabError::Shape("Kraus operators must share a shape".into()));
        }
        Ok(KrausSet { operators })
    }

    pub fn operators(&self) -> &[CMatrix] {
        &self.operators
    }

    /// Largest entry of `sum_j K_j^dag K_j - I`.
    pub fn completeness_defect(&self) -> f64 {
        let m = self.operators[0].cols();
        let mut acc = DMatrix::<C64>::zeros(m, m);
        for k in &self.operators {
            acc += k.as_dmatrix().adjoint() * k.as_dmatrix();
        }
        CMatrix::wrap(acc).max_abs_diff(&CMatrix::identity(m))
    }

    /// `sum_j K_j rho K_j^dag`.
    pub fn apply(&self, rho: &CMatrix) -> Result<CMatrix> {
        let k0 = &self.operators[0];
        if rho.rows() != k0.cols() || !rho.is_square() {
            return Err(LabError::Dimension(format!(
                "Kraus input is {}-dimensional, state is {}x{}",
                k0.cols(),
                rho.rows(),
                rho.cols()
            )));
        }
        let mut acc = DMatrix::<C64>::zeros(k0.rows(), k0.rows());
        for k in &self.operators {
            let k = k.as_dmatrix();
            acc += k * rho.as_dmatrix() * k.adjoint();
        }
        Ok(CMatrix::wrap(acc))
    }
}

/// `K_j = (I_d ⊗ <j|) V`, i.e. `K_j[a, k] = V[a*r + j, k]`.
pub fn kraus_from_isometry(channel: &PartialTraceChannel) -> KrausSet {
    let (d, r) = channel.isometry.out_shape();
    let m = channel.input_dim();
    let v = channel.isometry.matrix().as_dmatrix();
    let operators = (0..r)
        .map(|j| CMatrix::wrap(DMatrix::from_fn(d, m, |a, k| v[(a * r + j, k)])))
        .collect();
    KrausSet { operators }
}

/// The channel defined by the entrywise conjugate isometry.
pub fn conjugate_channel(channel: &PartialTraceChannel) -> PartialTraceChannel {
    PartialTraceChannel::new(channel.isometry.conj())
}

/// `(1/sqrt(m)) sum_i e_i ⊗ e_i`, shaped `(m, m)`.
pub fn maximally_entangled_state(m: usize) -> Result<PureState> {
    if m == 0 {
        return Err(LabError::Dimension("maximally entangled state needs m >= 1".into()));
    }
    let mut v = DVector::zeros(m * m);
    let amp = C64::new(1.0 / (m as f64).sqrt(), 0.0);
    for i in 0..m {
        v[i * m + i] = amp;
    }
    PureState::new(v)?.with_shape(m, m)
}

/// `(Φ ⊗ Φ̄)(|ψ_m><ψ_m|)` as a `d^2 x d^2` density matrix.
///
/// The product Kraus operator `K_j ⊗ K̄_l` sends `ψ_m` to `vec(K_j K_l^dag) / sqrt(m)`;
/// stacking these `r^2` vectors as the columns of `B` gives the output `B B^dag`.
/// All blocks `K_j K_l^dag` are read off `V V^dag`.
pub fn product_channel_on_max_entangled(channel: &PartialTraceChannel) -> Result<DensityMatrix> {
    let (d, r) = channel.isometry.out_shape();
    if d != r {
        return Err(LabError::UnsupportedShape(format!(
            "product channel evaluation needs a square output shape, got ({d}, {r})"
        )));
    }
    let m = channel.input_dim();
    let vvd = gram_outer(channel.isometry.matrix().as_dmatrix());
    let norm = 1.0 / (m as f64).sqrt();
    let b = DMatrix::from_fn(d * d, r * r, |row, col| {
        let (a, bb) = (row / d, row % d);
        let (j, l) = (col / r, col % r);
        vvd[(a * r + j, bb * r + l)] * norm
    });
    DensityMatrix::new(CMatrix::wrap(gram_outer(&b)))
}

/// Certified quantities read off the witness state `(Φ ⊗ Φ̄)(ψ_m)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductBounds {
    /// Largest eigenvalue of the witness output.
    pub lambda_max: f64,
    /// `m / d^2`.
    pub bound_m_over_d2: f64,
    /// `||witness||_p`, a lower bound on the product channel's maximum output p-norm.
    pub p_norm_lb: f64,
    /// `S_p(witness)`, an upper bound on the product channel's minimal output entropy.
    pub entropy_ub: f64,
    /// `<ψ_d| witness |ψ_d>`; recorded only.
    pub overlap_max_entangled: f64,
}

impl ProductBounds {
    pub fn from_state(state: &DensityMatrix, m: usize, d: usize, p: RenyiOrder) -> Result<Self> {
        if p.value() <= 1.0 {
            return Err(LabError::InvalidOrder(p.value()));
        }
        if state.dim() != d * d {
            return Err(LabError::Dimension(format!("witness is {}-dimensional, expected {}", state.dim(), d * d)));
        }
        let spectrum = state.eigenvalues();
        let mat = state.matrix();
        let overlap: C64 = (0..d)
            .flat_map(|a| (0..d).map(move |b| (a, b)))
            .map(|(a, b)| mat.get(a * d + a, b * d + b))
            .sum::<C64>()
            / d as f64;
        Ok(ProductBounds {
            lambda_max: spectrum[0],
            bound_m_over_d2: m as f64 / (d * d) as f64,
            p_norm_lb: schatten_from_singular_values(spectrum, p.as_schatten()),
            entropy_ub: renyi_from_spectrum(spectrum, p),
            overlap_max_entangled: overlap.re,
        })
    }
}

/// Evaluates the product channel on `ψ_m` and returns the certified bounds.
pub fn certified_product_lower_bounds(channel: &PartialTraceChannel, p: f64) -> Result<ProductBounds> {
    if !(p > 1.0) {
        return Err(LabError::InvalidOrder(p));
    }
    let p = RenyiOrder::new(p)?;
    let state = product_channel_on_max_entangled(channel)?;
    ProductBounds::from_state(&state, channel.input_dim(), channel.output_dim(), p)
}
