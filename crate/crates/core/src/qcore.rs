//! Small dense complex linear algebra, pure states and projective measurement.
//!
//! Dimensions here never exceed 4 (two qubits), so everything is stored densely
//! in row-major order and multiplied naively.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{LabError, Result};
use crate::rng::RandomStream;

/// Absolute tolerance for analytic identity checks.
pub const IDENTITY_TOL: f64 = 1e-12;
/// Projections with norm below this are treated as degenerate.
pub const DEGENERACY_FLOOR: f64 = 1e-15;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    entries: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: vec![ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.entries[i * dim + i] = ONE;
        }
        m
    }

    /// Builds a matrix from row-major entries.
    pub fn from_rows(entries: Vec<Complex64>) -> Result<Self> {
        let dim = (entries.len() as f64).sqrt().round() as usize;
        if dim == 0 || dim * dim != entries.len() {
            return Err(LabError::NotSquare { len: entries.len() });
        }
        Ok(Self { dim, entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.dim + col]
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|z| z * factor).collect(),
        }
    }

    pub fn scale_real(&self, factor: f64) -> Self {
        self.scale(Complex64::new(factor, 0.0))
    }

    pub fn adjoint(&self) -> Self {
        let n = self.dim;
        let mut out = Self::zeros(n);
        for r in 0..n {
            for c in 0..n {
                out.entries[c * n + r] = self.entries[r * n + c].conj();
            }
        }
        out
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(LabError::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        Ok(())
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        let n = self.dim;
        let mut out = Self::zeros(n);
        for r in 0..n {
            for k in 0..n {
                let lhs = self.entries[r * n + k];
                if lhs == ZERO {
                    continue;
                }
                for c in 0..n {
                    out.entries[r * n + c] += lhs * other.entries[k * n + c];
                }
            }
        }
        Ok(out)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        })
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Largest elementwise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_dim(other)?;
        Ok(self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn hermiticity_residual(&self) -> f64 {
        self.max_abs_diff(&self.adjoint()).expect("same dim")
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermiticity_residual() < IDENTITY_TOL
    }

    /// `max |M² - I|`, the involution residual.
    pub fn involution_residual(&self) -> f64 {
        let sq = self.try_mul(self).expect("same dim");
        sq.max_abs_diff(&Self::identity(self.dim)).expect("same dim")
    }

    pub fn is_involutory(&self) -> bool {
        self.involution_residual() < IDENTITY_TOL
    }

    pub fn apply(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        if v.len() != self.dim {
            return Err(LabError::DimensionMismatch {
                expected: self.dim,
                found: v.len(),
            });
        }
        let n = self.dim;
        Ok((0..n)
            .map(|r| (0..n).map(|c| self.entries[r * n + c] * v[c]).sum())
            .collect())
    }

    /// Eigenvalues of a Hermitian matrix, ascending.
    pub fn hermitian_eigenvalues(&self) -> Result<Vec<f64>> {
        let residual = self.hermiticity_residual();
        if residual > 1e-9 {
            return Err(LabError::InvalidParameter(format!(
                "matrix is not Hermitian (residual {residual:e})"
            )));
        }
        let m = DMatrix::from_row_slice(self.dim, self.dim, &self.entries);
        let mut vals: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        vals.sort_by(f64::total_cmp);
        Ok(vals)
    }

    /// Largest |eigenvalue| of a Hermitian matrix (its operator norm).
    pub fn spectral_radius(&self) -> Result<f64> {
        Ok(self
            .hermitian_eigenvalues()?
            .into_iter()
            .map(f64::abs)
            .fold(0.0, f64::max))
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix({}x{}) [", self.dim, self.dim)?;
        for r in 0..self.dim {
            write!(f, "  ")?;
            for c in 0..self.dim {
                let z = self.get(r, c);
                write!(f, "{:+.6}{:+.6}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

// Operator impls panic on dimension mismatch; the `try_*` forms return errors.
impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: Self) -> ComplexMatrix {
        self.try_mul(rhs).expect("matrix dimension mismatch")
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: Self) -> ComplexMatrix {
        self.try_add(rhs).expect("matrix dimension mismatch")
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: Self) -> ComplexMatrix {
        self.try_sub(rhs).expect("matrix dimension mismatch")
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn neg(self) -> ComplexMatrix {
        self.scale_real(-1.0)
    }
}

/// The 2×2 Pauli matrix for `axis`, with σ_z = diag(+1, −1) on (|H⟩, |V⟩).
pub fn pauli(axis: Axis) -> ComplexMatrix {
    let entries = match axis {
        Axis::X => vec![ZERO, ONE, ONE, ZERO],
        Axis::Y => vec![ZERO, -I, I, ZERO],
        Axis::Z => vec![ONE, ZERO, ZERO, -ONE],
    };
    ComplexMatrix { dim: 2, entries }
}

/// Kronecker product `a ⊗ b`.
pub fn tensor(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (na, nb) = (a.dim, b.dim);
    let n = na * nb;
    let mut out = ComplexMatrix::zeros(n);
    for ar in 0..na {
        for ac in 0..na {
            let x = a.get(ar, ac);
            if x == ZERO {
                continue;
            }
            for br in 0..nb {
                for bc in 0..nb {
                    out.entries[(ar * nb + br) * n + ac * nb + bc] = x * b.get(br, bc);
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    amplitudes: Vec<Complex64>,
}

impl QuantumState {
    /// Wraps amplitudes that must already be unit norm.
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(LabError::InvalidParameter("empty state".into()));
        }
        let norm_sq = norm_sq(&amplitudes);
        if (norm_sq - 1.0).abs() > IDENTITY_TOL {
            return Err(LabError::NotNormalized { norm_sq });
        }
        Ok(Self { amplitudes })
    }

    /// Rescales arbitrary nonzero amplitudes to unit norm.
    pub fn normalized(amplitudes: Vec<Complex64>) -> Result<Self> {
        let norm = norm_sq(&amplitudes).sqrt();
        if !norm.is_finite() || norm < DEGENERACY_FLOOR {
            return Err(LabError::NumericalDegeneracy(format!(
                "cannot normalize vector of norm {norm:e}"
            )));
        }
        let inv = 1.0 / norm;
        Ok(Self {
            amplitudes: amplitudes.into_iter().map(|z| z * inv).collect(),
        })
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        assert!(index < dim, "basis index out of range");
        let mut amplitudes = vec![ZERO; dim];
        amplitudes[index] = ONE;
        Self { amplitudes }
    }

    /// |H⟩ = (1, 0).
    pub fn horizontal() -> Self {
        Self::basis(2, 0)
    }

    /// |V⟩ = (0, 1).
    pub fn vertical() -> Self {
        Self::basis(2, 1)
    }

    /// (|H₁V₂⟩ − |V₁H₂⟩)/√2.
    pub fn singlet() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            amplitudes: vec![ZERO, Complex64::new(h, 0.0), Complex64::new(-h, 0.0), ZERO],
        }
    }

    /// |H₁V₂⟩.
    pub fn product_hv() -> Self {
        Self::horizontal().product(&Self::vertical())
    }

    pub fn product(&self, other: &Self) -> Self {
        let amplitudes = self
            .amplitudes
            .iter()
            .flat_map(|a| other.amplitudes.iter().map(move |b| a * b))
            .collect();
        Self { amplitudes }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    /// Interleaved (re, im) pairs.
    pub fn to_reals(&self) -> Vec<f64> {
        self.amplitudes.iter().flat_map(|z| [z.re, z.im]).collect()
    }

    pub fn from_reals(values: &[f64]) -> Result<Self> {
        if !values.len().is_multiple_of(2) {
            return Err(LabError::InvalidParameter(
                "state vector needs an even number of reals".into(),
            ));
        }
        let amplitudes: Vec<Complex64> = values.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
        if (norm_sq(&amplitudes) - 1.0).abs() <= IDENTITY_TOL {
            return Ok(Self { amplitudes });
        }
        Self::normalized(amplitudes)
    }

    pub fn inner(&self, other: &Self) -> Result<Complex64> {
        if self.dim() != other.dim() {
            return Err(LabError::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }
}

fn norm_sq(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// ⟨ψ|M|ψ⟩.
pub fn expectation(state: &QuantumState, op: &ComplexMatrix) -> Result<Complex64> {
    let m_psi = op.apply(&state.amplitudes)?;
    Ok(state.amplitudes.iter().zip(&m_psi).map(|(a, b)| a.conj() * b).sum())
}

/// ⟨φ|M|ψ⟩.
pub fn matrix_element(bra: &QuantumState, op: &ComplexMatrix, ket: &QuantumState) -> Result<Complex64> {
    let m_ket = QuantumState {
        amplitudes: op.apply(&ket.amplitudes)?,
    };
    bra.inner(&m_ket)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementOutcome {
    pub value: i8,
    pub post_state: QuantumState,
}

/// Eigenprojector (I + sign·M)/2 of a ±1-valued observable.
pub fn eigenprojector(observable: &ComplexMatrix, sign: i8) -> ComplexMatrix {
    let id = ComplexMatrix::identity(observable.dim());
    let signed = observable.scale_real(f64::from(sign));
    (&id + &signed).scale_real(0.5)
}

/// Born probability of the `+1` outcome, `⟨ψ|P₊|ψ⟩`, clamped to [0, 1].
pub fn plus_probability(state: &QuantumState, observable: &ComplexMatrix) -> Result<f64> {
    let p = 0.5 * (1.0 + expectation(state, observable)?.re);
    Ok(p.clamp(0.0, 1.0))
}

/// Lüders collapse onto the `sign` eigenspace, together with the branch probability.
pub fn project(state: &QuantumState, observable: &ComplexMatrix, sign: i8) -> Result<(f64, QuantumState)> {
    let projected = eigenprojector(observable, sign).apply(&state.amplitudes)?;
    let weight = norm_sq(&projected);
    if weight.sqrt() < DEGENERACY_FLOOR {
        return Err(LabError::NumericalDegeneracy(format!(
            "projection onto the {sign:+} eigenspace has norm {:e}",
            weight.sqrt()
        )));
    }
    Ok((weight, QuantumState::normalized(projected)?))
}

/// One projective measurement of a Hermitian involution with Lüders collapse.
///
/// Draws exactly one uniform from `rng`; the outcome is `+1` iff that draw is
/// below `⟨ψ|P₊|ψ⟩`.
pub fn measure_projective(
    state: &QuantumState,
    observable: &ComplexMatrix,
    rng: &mut RandomStream,
) -> Result<MeasurementOutcome> {
    if observable.dim() != state.dim() {
        return Err(LabError::DimensionMismatch {
            expected: observable.dim(),
            found: state.dim(),
        });
    }
    let herm = observable.hermiticity_residual();
    let inv = observable.involution_residual();
    if herm > 1e-10 || inv > 1e-10 {
        return Err(LabError::NotInvolutory {
            residual: herm.max(inv),
        });
    }
    let p_plus = plus_probability(state, observable)?;
    let value: i8 = if rng.uniform() < p_plus { 1 } else { -1 };
    let (_, post_state) = project(state, observable, value)?;
    Ok(MeasurementOutcome { value, post_state })
}
