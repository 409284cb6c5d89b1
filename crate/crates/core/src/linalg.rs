//! Dense complex linear algebra and the tensor/matrix identifications used
//! throughout the crate.
//!
//! Index convention: a vector in `C^d ⊗ C^r` with index `k` corresponds to the
//! matrix entry `(k / r, k % r)`. The same row-major pairing is used for
//! [`vec_to_matrix`], [`tensor_product`] and [`partial_trace_2`], so that
//! `tr_2(|y><y|) = A A^dag` with `A = vec_to_matrix(y)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{LabError, Result};

pub use nalgebra::Complex;

pub type C64 = Complex<f64>;

/// Relative cutoff below which singular values and eigenvalues count as exact zeros.
pub const SPECTRAL_ZERO: f64 = 1e-14;

/// Tolerance for Hermiticity, positivity and trace checks on density matrices.
pub const STATE_TOL: f64 = 1e-10;

/// Tolerance on the Euclidean norm of a pure state.
pub const PURE_NORM_TOL: f64 = 1e-12;

const SVD_MAX_ITERS: usize = 100_000;

/// Dense complex matrix.
///
/// Serialized as `{"rows", "cols", "re", "im"}` with row-major flattening.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixJson", into = "MatrixJson")]
pub struct CMatrix(DMatrix<C64>);

impl CMatrix {
    /// Wraps an nalgebra matrix, rejecting empty shapes and non-finite entries.
    pub fn from_dmatrix(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() == 0 || m.ncols() == 0 {
            return Err(LabError::Shape(format!("empty {}x{} matrix", m.nrows(), m.ncols())));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(LabError::NonFinite);
        }
        Ok(CMatrix(m))
    }

    /// Builds a matrix from row-major entries.
    pub fn from_row_major(rows: usize, cols: usize, entries: &[C64]) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(LabError::Shape(format!(
                "{} entries for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        Self::from_dmatrix(DMatrix::from_row_slice(rows, cols, entries))
    }

    pub(crate) fn wrap(m: DMatrix<C64>) -> Self {
        debug_assert!(m.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
        CMatrix(m)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        CMatrix(DMatrix::identity(n, n))
    }

    /// Real diagonal matrix.
    pub fn from_diagonal(diag: &[f64]) -> Self {
        let v = DVector::from_iterator(diag.len(), diag.iter().map(|&x| C64::new(x, 0.0)));
        CMatrix(DMatrix::from_diagonal(&v))
    }

    /// Outer product `u v^dag`.
    pub fn outer(u: &DVector<C64>, v: &DVector<C64>) -> Self {
        CMatrix(u * v.adjoint())
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    pub fn as_dmatrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_dmatrix(self) -> DMatrix<C64> {
        self.0
    }

    /// Entries in row-major order.
    pub fn row_major(&self) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.rows() * self.cols());
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                out.push(self.0[(i, j)]);
            }
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        CMatrix(self.0.adjoint())
    }

    /// Entrywise complex conjugate.
    pub fn conj(&self) -> Self {
        CMatrix(self.0.map(|z| z.conj()))
    }

    pub fn scale(&self, s: f64) -> Self {
        CMatrix(self.0.map(|z| z * s))
    }

    pub fn matmul(&self, rhs: &CMatrix) -> Result<Self> {
        if self.cols() != rhs.rows() {
            return Err(LabError::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows(),
                self.cols(),
                rhs.rows(),
                rhs.cols()
            )));
        }
        Ok(CMatrix(&self.0 * &rhs.0))
    }

    pub fn trace(&self) -> C64 {
        self.0.diagonal().iter().sum()
    }

    /// Hilbert-Schmidt (Frobenius) norm.
    pub fn hs_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest entrywise modulus of `self - rhs`.
    pub fn max_abs_diff(&self, rhs: &CMatrix) -> f64 {
        assert_eq!((self.rows(), self.cols()), (rhs.rows(), rhs.cols()));
        self.0
            .iter()
            .zip(rhs.0.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Largest entrywise modulus of `A - A^dag`.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.rows();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.0[(i, j)] - self.0[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Whether every imaginary part is exactly zero.
    pub fn is_real(&self) -> bool {
        self.0.iter().all(|z| z.im == 0.0)
    }
}

impl fmt::Display for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Exchange format for [`CMatrix`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl TryFrom<MatrixJson> for CMatrix {
    type Error = LabError;

    fn try_from(m: MatrixJson) -> Result<Self> {
        let n = m.rows * m.cols;
        if m.re.len() != n || m.im.len() != n {
            return Err(LabError::Shape(format!(
                "matrix {}x{} with {} real and {} imaginary parts",
                m.rows,
                m.cols,
                m.re.len(),
                m.im.len()
            )));
        }
        let entries: Vec<C64> = m.re.iter().zip(&m.im).map(|(&re, &im)| C64::new(re, im)).collect();
        CMatrix::from_row_major(m.rows, m.cols, &entries)
    }
}

impl From<CMatrix> for MatrixJson {
    fn from(m: CMatrix) -> Self {
        let entries = m.row_major();
        MatrixJson {
            rows: m.rows(),
            cols: m.cols(),
            re: entries.iter().map(|z| z.re).collect(),
            im: entries.iter().map(|z| z.im).collect(),
        }
    }
}

/// Order of a Schatten norm, `1 <= p <= inf`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct SchattenOrder(f64);

impl SchattenOrder {
    pub const ONE: SchattenOrder = SchattenOrder(1.0);
    pub const TWO: SchattenOrder = SchattenOrder(2.0);
    pub const INFINITY: SchattenOrder = SchattenOrder(f64::INFINITY);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || value < 1.0 {
            return Err(LabError::InvalidOrder(value));
        }
        Ok(SchattenOrder(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    /// The order `2p` used when a p-norm of a state is read off a reshaped vector.
    pub fn doubled(self) -> SchattenOrder {
        SchattenOrder(2.0 * self.0)
    }

    /// `1/p`, with `1/inf = 0`.
    pub fn reciprocal(self) -> f64 {
        if self.is_infinite() {
            0.0
        } else {
            1.0 / self.0
        }
    }
}

impl fmt::Display for SchattenOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl FromStr for SchattenOrder {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "∞" => Ok(SchattenOrder::INFINITY),
            other => {
                let v: f64 = other
                    .parse()
                    .map_err(|_| LabError::Config(format!("cannot parse order '{s}'")))?;
                SchattenOrder::new(v)
            }
        }
    }
}

impl Serialize for SchattenOrder {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_infinite() {
            serializer.serialize_str("inf")
        } else {
            serializer.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for SchattenOrder {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Num(v) => SchattenOrder::new(v).map_err(serde::de::Error::custom),
            Repr::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Unit vector in `C^dim`, optionally tagged as a bipartite state on `C^d ⊗ C^r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StateJson", into = "StateJson")]
pub struct PureState {
    amplitudes: DVector<C64>,
    shape: Option<(usize, usize)>,
}

impl PureState {
    /// Accepts amplitudes that are already normalized to within `PURE_NORM_TOL`.
    pub fn new(amplitudes: DVector<C64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(LabError::Dimension("empty state vector".into()));
        }
        if amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(LabError::NonFinite);
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > PURE_NORM_TOL {
            return Err(LabError::Domain(format!("state has norm {norm}, expected 1")));
        }
        Ok(PureState { amplitudes, shape: None })
    }

    /// Normalizes arbitrary nonzero amplitudes.
    pub fn normalized(amplitudes: DVector<C64>) -> Result<Self> {
        let norm = amplitudes.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(LabError::Domain("cannot normalize a zero or non-finite vector".into()));
        }
        Self::new(amplitudes / C64::new(norm, 0.0))
    }

    /// Computational basis vector `e_k`.
    pub fn basis(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return Err(LabError::Dimension(format!("basis index {k} out of range for dim {dim}")));
        }
        let mut v = DVector::zeros(dim);
        v[k] = C64::new(1.0, 0.0);
        Self::new(v)
    }

    /// The product state `u ⊗ v`, tagged with shape `(u.dim, v.dim)`.
    pub fn product(u: &PureState, v: &PureState) -> Self {
        let (d, r) = (u.dim(), v.dim());
        let mut out = DVector::zeros(d * r);
        for i in 0..d {
            for j in 0..r {
                out[i * r + j] = u.amplitudes[i] * v.amplitudes[j];
            }
        }
        PureState { amplitudes: out, shape: Some((d, r)) }
    }

    pub fn with_shape(mut self, d: usize, r: usize) -> Result<Self> {
        if d * r != self.dim() {
            return Err(LabError::Shape(format!(
                "shape ({d}, {r}) incompatible with dimension {}",
                self.dim()
            )));
        }
        self.shape = Some((d, r));
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn bipartite_shape(&self) -> Option<(usize, usize)> {
        self.shape
    }

    /// Rank-one projector `|x><x|`.
    pub fn projector(&self) -> CMatrix {
        CMatrix::outer(&self.amplitudes, &self.amplitudes)
    }

    /// Multiplies by the global phase that makes the first nonzero amplitude real positive.
    pub fn canonical_phase(&self) -> Self {
        let lead = self
            .amplitudes
            .iter()
            .find(|z| z.norm() > SPECTRAL_ZERO)
            .copied()
            .unwrap_or(C64::new(1.0, 0.0));
        let phase = lead.conj() / lead.norm();
        let mut amplitudes = &self.amplitudes * phase;
        if let Some(z) = amplitudes.iter_mut().find(|z| z.norm() > SPECTRAL_ZERO) {
            z.im = 0.0;
        }
        PureState { amplitudes, shape: self.shape }
    }
}

#[derive(Serialize, Deserialize)]
struct StateJson {
    re: Vec<f64>,
    im: Vec<f64>,
    shape: Option<(usize, usize)>,
}

impl From<PureState> for StateJson {
    fn from(x: PureState) -> Self {
        StateJson {
            re: x.amplitudes.iter().map(|z| z.re).collect(),
            im: x.amplitudes.iter().map(|z| z.im).collect(),
            shape: x.shape,
        }
    }
}

impl TryFrom<StateJson> for PureState {
    type Error = LabError;

    fn try_from(j: StateJson) -> Result<Self> {
        if j.re.len() != j.im.len() {
            return Err(LabError::Shape("re and im parts differ in length".into()));
        }
        let v = DVector::from_iterator(j.re.len(), j.re.iter().zip(&j.im).map(|(&a, &b)| C64::new(a, b)));
        let x = PureState::new(v)?;
        match j.shape {
            Some((d, r)) => x.with_shape(d, r),
            None => Ok(x),
        }
    }
}

/// Hermitian positive semi-definite trace-one matrix with its cached spectrum.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    matrix: CMatrix,
    eigenvalues: Vec<f64>,
}

impl DensityMatrix {
    /// Validates a candidate state.
    ///
    /// Eigenvalues in `[-1e-10, 0)` are clipped to zero and the trace is
    /// renormalized to one. The stored matrix is only rebuilt from its
    /// eigendecomposition when the clipped mass is above rounding level.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(LabError::Shape(format!(
                "density matrix must be square, got {}x{}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        let scale = matrix.hs_norm().max(f64::MIN_POSITIVE);
        let defect = matrix.hermitian_defect();
        if defect > STATE_TOL * scale {
            return Err(LabError::NotHermitian(defect));
        }
        let trace = matrix.trace().re;
        if (trace - 1.0).abs() > STATE_TOL {
            return Err(LabError::NotNormalized(trace));
        }
        let mut eigenvalues = hermitian_spectrum(matrix.as_dmatrix());
        let min = eigenvalues.last().copied().unwrap_or(0.0);
        if min < -STATE_TOL {
            return Err(LabError::NotPositive(min));
        }
        let clipped: f64 = eigenvalues.iter().filter(|&&l| l < 0.0).map(|l| -l).sum();
        for l in eigenvalues.iter_mut() {
            *l = l.max(0.0);
        }
        let total: f64 = eigenvalues.iter().sum();
        for l in eigenvalues.iter_mut() {
            *l /= total;
        }
        let matrix = if clipped > 1e3 * f64::EPSILON {
            let eig = matrix.as_dmatrix().clone().symmetric_eigen();
            let vals = eig.eigenvalues.map(|l| C64::new(l.max(0.0), 0.0));
            let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.adjoint();
            let tr = rebuilt.trace().re;
            CMatrix::wrap(rebuilt / C64::new(tr, 0.0))
        } else {
            matrix.scale(1.0 / trace)
        };
        Ok(DensityMatrix { matrix, eigenvalues })
    }

    pub fn from_pure(x: &PureState) -> Self {
        let mut eigenvalues = vec![0.0; x.dim()];
        eigenvalues[0] = 1.0;
        DensityMatrix { matrix: x.projector(), eigenvalues }
    }

    /// `I_d / d`.
    pub fn maximally_mixed(d: usize) -> Self {
        DensityMatrix {
            matrix: CMatrix::identity(d).scale(1.0 / d as f64),
            eigenvalues: vec![1.0 / d as f64; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// Spectrum, sorted nonincreasing, clipped at zero, summing to one.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// Entrywise conjugate (the transpose of a Hermitian matrix); same spectrum.
    pub fn conj(&self) -> Self {
        DensityMatrix { matrix: self.matrix.conj(), eigenvalues: self.eigenvalues.clone() }
    }
}

/// Singular values sorted nonincreasing.
pub fn singular_values(a: &CMatrix) -> Result<Vec<f64>> {
    let svd = a
        .as_dmatrix()
        .clone()
        .try_svd(false, false, f64::EPSILON, SVD_MAX_ITERS)
        .ok_or_else(|| LabError::Numerical("SVD did not converge".into()))?;
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// `(sum_j s_j^p)^(1/p)` over a nonincreasing list of nonnegative values.
///
/// Values below `SPECTRAL_ZERO * s_max` are dropped. The sum is scaled by
/// `s_max` so that large `p` does not underflow.
pub fn schatten_from_singular_values(s: &[f64], p: SchattenOrder) -> f64 {
    let s_max = s.iter().copied().fold(0.0, f64::max);
    if s_max == 0.0 {
        return 0.0;
    }
    if p.is_infinite() {
        return s_max;
    }
    let cutoff = SPECTRAL_ZERO * s_max;
    let sum: f64 = s
        .iter()
        .filter(|&&x| x > cutoff)
        .map(|&x| (x / s_max).powf(p.value()))
        .sum();
    s_max * sum.powf(1.0 / p.value())
}

/// Schatten p-norm `(tr (A^dag A)^(p/2))^(1/p)`; operator norm for `p = inf`.
pub fn schatten_norm(a: &CMatrix, p: SchattenOrder) -> Result<f64> {
    Ok(schatten_from_singular_values(&singular_values(a)?, p))
}

/// Reshapes a bipartite vector into a `d x r` matrix: entry `(i, j)` is amplitude `i*r + j`.
pub fn vec_to_matrix(x: &PureState) -> Result<CMatrix> {
    let (d, r) = x
        .bipartite_shape()
        .ok_or_else(|| LabError::Shape("state has no bipartite shape".into()))?;
    Ok(CMatrix::wrap(reshape_row_major(x.amplitudes().as_slice(), d, r)))
}

pub(crate) fn reshape_row_major(v: &[C64], d: usize, r: usize) -> DMatrix<C64> {
    debug_assert_eq!(v.len(), d * r);
    DMatrix::from_row_slice(d, r, v)
}

/// Schmidt coefficients of a bipartite pure state, nonincreasing, length `min(d, r)`.
pub fn schmidt_coefficients(x: &PureState) -> Result<Vec<f64>> {
    singular_values(&vec_to_matrix(x)?)
}

/// Partial trace over the second factor of `C^d ⊗ C^r`.
pub fn partial_trace_2(rho: &CMatrix, d: usize, r: usize) -> Result<CMatrix> {
    if !rho.is_square() || rho.rows() != d * r {
        return Err(LabError::Shape(format!(
            "partial trace over ({d}, {r}) needs a {0}x{0} matrix, got {1}x{2}",
            d * r,
            rho.rows(),
            rho.cols()
        )));
    }
    let m = rho.as_dmatrix();
    let out = DMatrix::from_fn(d, d, |i, k| (0..r).map(|j| m[(i * r + j, k * r + j)]).sum());
    Ok(CMatrix::wrap(out))
}

/// Eigenvalues of a Hermitian matrix, sorted nonincreasing.
pub fn hermitian_eigenvalues(a: &CMatrix) -> Result<Vec<f64>> {
    if !a.is_square() {
        return Err(LabError::Shape(format!("{}x{} matrix has no spectrum", a.rows(), a.cols())));
    }
    let defect = a.hermitian_defect();
    if defect > 1e-8 * a.hs_norm().max(1.0) {
        return Err(LabError::NotHermitian(defect));
    }
    Ok(hermitian_spectrum(a.as_dmatrix()))
}

pub(crate) fn hermitian_spectrum(a: &DMatrix<C64>) -> Vec<f64> {
    let mut vals: Vec<f64> = a.clone().symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    vals
}

/// Kronecker product `A ⊗ B`; row index `(i, k) -> i * rows(B) + k`.
pub fn tensor_product(a: &CMatrix, b: &CMatrix) -> CMatrix {
    CMatrix::wrap(a.as_dmatrix().kronecker(b.as_dmatrix()))
}

/// `B B^dag`, assembled from four real products.
///
/// nalgebra's complex product is a plain triple loop; the real one goes
/// through a blocked kernel, which matters at the `d^2 x d^2` sizes of the
/// product-channel output.
pub(crate) fn gram_outer(b: &DMatrix<C64>) -> DMatrix<C64> {
    let x = b.map(|z| z.re);
    let y = b.map(|z| z.im);
    let re = &x * x.transpose() + &y * y.transpose();
    let im = &y * x.transpose() - &x * y.transpose();
    DMatrix::from_fn(b.nrows(), b.nrows(), |i, j| C64::new(re[(i, j)], im[(i, j)]))
}
