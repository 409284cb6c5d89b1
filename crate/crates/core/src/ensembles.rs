//! Reproducible sampling of Haar isometries, Haar subspaces of `M_d`,
//! uniform points on the Hilbert-Schmidt sphere and their real variants.

use nalgebra::DMatrix;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::{CMatrix, MatrixJson, C64};

/// Tolerance on `V^dag V = I`.
pub const ISOMETRY_TOL: f64 = 1e-10;

/// Splitmix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream id for trial `trial` of experiment `experiment`.
pub fn substream_id(experiment: u64, trial: u64) -> u64 {
    mix64(mix64(experiment) ^ trial.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// A ChaCha20 generator keyed by `(master_seed, stream_id)`.
///
/// Distinct stream ids give independent sequences under the same seed, so
/// parallel trials can each own a stream without coordinating.
#[derive(Clone, Debug)]
pub struct RngStream {
    master_seed: u64,
    stream_id: u64,
    rng: ChaCha20Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_id);
        RngStream { master_seed, stream_id, rng }
    }

    /// The stream owned by trial `trial` of experiment `experiment`.
    pub fn for_trial(master_seed: u64, experiment: u64, trial: u64) -> Self {
        Self::new(master_seed, substream_id(experiment, trial))
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Complex,
    Real,
}

/// A `(d*r) x m` matrix with orthonormal columns, viewed as a map `C^m -> C^d ⊗ C^r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IsometryJson", into = "IsometryJson")]
pub struct Isometry {
    matrix: CMatrix,
    d: usize,
    r: usize,
    field: Field,
    seed: Option<u64>,
    stream: Option<u64>,
}

impl Isometry {
    pub fn new(matrix: CMatrix, d: usize, r: usize, field: Field) -> Result<Self> {
        let m = matrix.cols();
        if d == 0 || r == 0 {
            return Err(LabError::Dimension("output factors must be nonzero".into()));
        }
        if matrix.rows() != d * r {
            return Err(LabError::Shape(format!(
                "isometry into C^{d} ⊗ C^{r} needs {} rows, got {}",
                d * r,
                matrix.rows()
            )));
        }
        if m > d * r {
            return Err(LabError::Dimension(format!("m = {m} exceeds d*r = {}", d * r)));
        }
        if field == Field::Real && !matrix.is_real() {
            return Err(LabError::Domain("real isometry has nonzero imaginary parts".into()));
        }
        let gram = matrix.adjoint().matmul(&matrix)?;
        let defect = gram.max_abs_diff(&CMatrix::identity(m));
        if defect > ISOMETRY_TOL {
            return Err(LabError::Domain(format!("columns are not orthonormal (defect {defect:e})")));
        }
        Ok(Isometry { matrix, d, r, field, seed: None, stream: None })
    }

    /// The identity map of `C^d ⊗ C^r` (m = d*r).
    pub fn identity(d: usize, r: usize) -> Self {
        Isometry {
            matrix: CMatrix::identity(d * r),
            d,
            r,
            field: Field::Real,
            seed: None,
            stream: None,
        }
    }

    /// Records which generator stream produced this sample.
    pub fn with_provenance(mut self, seed: u64, stream: u64) -> Self {
        self.seed = Some(seed);
        self.stream = Some(stream);
        self
    }

    pub fn in_dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn out_shape(&self) -> (usize, usize) {
        (self.d, self.r)
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn stream(&self) -> Option<u64> {
        self.stream
    }

    /// Entrywise conjugate `V̄`. Real isometries are returned unchanged.
    pub fn conj(&self) -> Self {
        let matrix = match self.field {
            Field::Real => self.matrix.clone(),
            Field::Complex => self.matrix.conj(),
        };
        Isometry { matrix, ..self.clone() }
    }

    /// The isometry spanned by the first `k` columns (a nested subspace).
    pub fn leading_columns(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.in_dim() {
            return Err(LabError::Dimension(format!("cannot keep {k} of {} columns", self.in_dim())));
        }
        let matrix = CMatrix::wrap(self.matrix.as_dmatrix().columns(0, k).into_owned());
        Ok(Isometry { matrix, ..self.clone() })
    }

    /// Column `k` reshaped into a `d x r` matrix.
    pub fn basis_matrix(&self, k: usize) -> CMatrix {
        let col: Vec<C64> = self.matrix.as_dmatrix().column(k).iter().copied().collect();
        CMatrix::wrap(crate::linalg::reshape_row_major(&col, self.d, self.r))
    }
}

#[derive(Serialize, Deserialize)]
struct IsometryJson {
    #[serde(flatten)]
    matrix: MatrixJson,
    m: usize,
    d: usize,
    r: usize,
    field: Field,
    seed: Option<u64>,
    stream: Option<u64>,
}

impl From<Isometry> for IsometryJson {
    fn from(v: Isometry) -> Self {
        IsometryJson {
            m: v.in_dim(),
            d: v.d,
            r: v.r,
            field: v.field,
            seed: v.seed,
            stream: v.stream,
            matrix: v.matrix.into(),
        }
    }
}

impl TryFrom<IsometryJson> for Isometry {
    type Error = LabError;

    fn try_from(j: IsometryJson) -> Result<Self> {
        let matrix = CMatrix::try_from(j.matrix)?;
        if matrix.cols() != j.m {
            return Err(LabError::Shape(format!("m = {} but matrix has {} columns", j.m, matrix.cols())));
        }
        let mut v = Isometry::new(matrix, j.d, j.r, j.field)?;
        v.seed = j.seed;
        v.stream = j.stream;
        Ok(v)
    }
}

/// I.i.d. complex Gaussian entries with `E|z|^2 = 1` (real and imaginary parts each of variance 1/2).
///
/// Entries are drawn in row-major order, real part first.
pub fn complex_gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut entries = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        entries.push(C64::new(s * re, s * im));
    }
    CMatrix::wrap(DMatrix::from_row_slice(rows, cols, &entries))
}

/// I.i.d. standard real Gaussian entries, drawn in row-major order.
pub fn real_gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    let entries: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    DMatrix::from_row_slice(rows, cols, &entries)
}

/// Haar-distributed isometry `C^m -> C^d ⊗ C^r` (orthogonal for `Field::Real`).
///
/// Gaussian matrix, thin QR, then each column of `Q` is multiplied by the
/// phase of the matching diagonal entry of `R`. This makes the triangular
/// factor positive so the decomposition is unique and `Q` is exactly Haar.
pub fn haar_isometry<R: Rng + ?Sized>(m: usize, d: usize, r: usize, field: Field, rng: &mut R) -> Result<Isometry> {
    let n = d * r;
    if m == 0 || n == 0 {
        return Err(LabError::Dimension("dimensions must be positive".into()));
    }
    if m > n {
        return Err(LabError::Dimension(format!("m = {m} exceeds d*r = {n}")));
    }
    let q = match field {
        Field::Complex => {
            let g = complex_gaussian_matrix(n, m, rng).into_dmatrix();
            let qr = g.qr();
            let rdiag = qr.r().diagonal();
            let mut q = qr.q();
            for (j, mut col) in q.column_iter_mut().enumerate() {
                let z = rdiag[j];
                let phase = if z.norm() > 0.0 { z / z.norm() } else { C64::new(1.0, 0.0) };
                col *= phase;
            }
            q
        }
        Field::Real => {
            let g = real_gaussian_matrix(n, m, rng);
            let qr = g.qr();
            let rdiag = qr.r().diagonal();
            let mut q = qr.q();
            for (j, mut col) in q.column_iter_mut().enumerate() {
                if rdiag[j] < 0.0 {
                    col.neg_mut();
                }
            }
            q.map(|x| C64::new(x, 0.0))
        }
    };
    Isometry::new(CMatrix::wrap(q), d, r, field)
}

/// Uniform point on the unit Hilbert-Schmidt sphere of `M_d`.
pub fn hs_sphere_point<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
    let g = complex_gaussian_matrix(d, d, rng);
    let n = g.hs_norm();
    g.scale(1.0 / n)
}

/// Orthonormal basis (as an isometry into `C^d ⊗ C^d`) of a Haar-random
/// `m`-dimensional subspace of `M_d`.
pub fn random_subspace_basis<R: Rng + ?Sized>(m: usize, d: usize, rng: &mut R) -> Result<Isometry> {
    if m > d * d {
        return Err(LabError::Dimension(format!("subspace dimension {m} exceeds d^2 = {}", d * d)));
    }
    haar_isometry(m, d, d, Field::Complex, rng)
}
