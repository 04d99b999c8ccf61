//! Analyzer observables, the Bell operator and its squared-operator identity.
//!
//! An analyzer at angle `a` measures `A(a) = cos(k·a)·σ_z + sin(k·a)·σ_x` with
//! `k = 2` for photon polarizers and `k = 1` for spin analyzers. Any two of them
//! commute up to `[A(a), A(a′)] = 2i·σ_y·sin(k(a′−a))`.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::qcore::{self, pauli, tensor, Axis, ComplexMatrix, QuantumState, IDENTITY_TOL};
use crate::rng::{Purpose, RandomStream};
use crate::stats::CorrelationEstimate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParticleKind {
    Photon,
    Electron,
}

impl ParticleKind {
    /// Angle multiplier `k`.
    pub fn multiplier(self) -> f64 {
        match self {
            ParticleKind::Photon => 2.0,
            ParticleKind::Electron => 1.0,
        }
    }

    /// Angle between an analyzer axis and its orthogonal output port.
    pub fn orthogonal_offset(self) -> f64 {
        std::f64::consts::PI / self.multiplier()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ParticleKind::Photon => "photon",
            ParticleKind::Electron => "electron",
        }
    }
}

impl std::str::FromStr for ParticleKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "photon" => Ok(ParticleKind::Photon),
            "electron" => Ok(ParticleKind::Electron),
            other => Err(format!("unknown particle kind `{other}` (expected photon|electron)")),
        }
    }
}

/// A measurement orientation. `angle` is in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyzerSetting {
    pub angle: f64,
    pub kind: ParticleKind,
}

impl AnalyzerSetting {
    pub fn new(angle: f64, kind: ParticleKind) -> Self {
        Self { angle, kind }
    }

    pub fn photon_deg(deg: f64) -> Self {
        Self::new(deg.to_radians(), ParticleKind::Photon)
    }

    pub fn electron_deg(deg: f64) -> Self {
        Self::new(deg.to_radians(), ParticleKind::Electron)
    }

    pub fn degrees(&self) -> f64 {
        self.angle.to_degrees()
    }

    /// `k·angle`, the Bloch-sphere angle of the analyzer axis in the x–z plane.
    pub fn bloch_angle(&self) -> f64 {
        self.kind.multiplier() * self.angle
    }
}

pub fn analyzer_observable(s: &AnalyzerSetting) -> ComplexMatrix {
    let (sin, cos) = s.bloch_angle().sin_cos();
    &pauli(Axis::Z).scale_real(cos) + &pauli(Axis::X).scale_real(sin)
}

/// `xy − yx`.
pub fn commutator(x: &ComplexMatrix, y: &ComplexMatrix) -> Result<ComplexMatrix> {
    x.try_mul(y)?.try_sub(&y.try_mul(x)?)
}

/// Which sign pattern the four products enter the Bell operator with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BellForm {
    /// `A⊗B − A⊗B′ + A′⊗B′ + A′⊗B`, the signed combination behind the CHSH
    /// statistic. Its square is `4I − [A′,A]⊗[B,B′]`.
    Chsh,
    /// `A⊗B + A′⊗B + A⊗B′ − A′⊗B′`. Its square is `4I − [A,A′]⊗[B,B′]`.
    Operator,
}

#[derive(Debug, Clone)]
pub struct BellOperatorSet {
    pub settings: [AnalyzerSetting; 4],
    pub a: ComplexMatrix,
    pub a_prime: ComplexMatrix,
    pub b: ComplexMatrix,
    pub b_prime: ComplexMatrix,
    pub form: BellForm,
    pub s: ComplexMatrix,
}

impl BellOperatorSet {
    pub fn alice(&self) -> (&ComplexMatrix, &ComplexMatrix) {
        (&self.a, &self.a_prime)
    }

    /// The Alice-side commutator in the order that enters the identity for this form.
    pub fn alice_commutator(&self) -> ComplexMatrix {
        let (x, y) = match self.form {
            BellForm::Chsh => (&self.a_prime, &self.a),
            BellForm::Operator => (&self.a, &self.a_prime),
        };
        commutator(x, y).expect("2x2 operators")
    }

    pub fn bob_commutator(&self) -> ComplexMatrix {
        commutator(&self.b, &self.b_prime).expect("2x2 operators")
    }

    /// The two-particle commutator product subtracted from `4I` in `S²`.
    pub fn commutator_product(&self) -> ComplexMatrix {
        tensor(&self.alice_commutator(), &self.bob_commutator())
    }

    /// Largest |eigenvalue| of `S`.
    pub fn norm(&self) -> f64 {
        self.s.spectral_radius().expect("S is Hermitian by construction")
    }

    pub fn s_squared(&self) -> ComplexMatrix {
        &self.s * &self.s
    }
}

/// Bell operator in the CHSH orientation for the menu `(a, a′; b, b′)`.
pub fn bell_operator(
    a: AnalyzerSetting,
    a_prime: AnalyzerSetting,
    b: AnalyzerSetting,
    b_prime: AnalyzerSetting,
) -> Result<BellOperatorSet> {
    bell_operator_with(BellForm::Chsh, a, a_prime, b, b_prime)
}

pub fn bell_operator_with(
    form: BellForm,
    a: AnalyzerSetting,
    a_prime: AnalyzerSetting,
    b: AnalyzerSetting,
    b_prime: AnalyzerSetting,
) -> Result<BellOperatorSet> {
    if a.kind != a_prime.kind {
        return Err(LabError::MixedKinds { side: "Alice" });
    }
    if b.kind != b_prime.kind {
        return Err(LabError::MixedKinds { side: "Bob" });
    }
    let (ma, map) = (analyzer_observable(&a), analyzer_observable(&a_prime));
    let (mb, mbp) = (analyzer_observable(&b), analyzer_observable(&b_prime));
    let ab = tensor(&ma, &mb);
    let abp = tensor(&ma, &mbp);
    let apb = tensor(&map, &mb);
    let apbp = tensor(&map, &mbp);
    let s = match form {
        BellForm::Chsh => &(&(&ab - &abp) + &apbp) + &apb,
        BellForm::Operator => &(&(&ab + &apb) + &abp) - &apbp,
    };
    Ok(BellOperatorSet {
        settings: [a, a_prime, b, b_prime],
        a: ma,
        a_prime: map,
        b: mb,
        b_prime: mbp,
        form,
        s,
    })
}

/// `max |S² − (4I − C)|` where `C` is the commutator product for the set's form.
pub fn bell_squared_residual(set: &BellOperatorSet) -> f64 {
    let rhs = &ComplexMatrix::identity(4).scale_real(4.0) - &set.commutator_product();
    set.s_squared().max_abs_diff(&rhs).expect("4x4 operators")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChshExpectation {
    /// `⟨ψ|S|ψ⟩`.
    pub value: f64,
    /// `E(a,b), E(a,b′), E(a′,b′), E(a′,b)`.
    pub correlations: [f64; 4],
}

impl ChshExpectation {
    /// `|E(a,b) − E(a,b′)| + |E(a′,b′) + E(a′,b)|`.
    pub fn chsh_lhs(&self) -> f64 {
        let [e1, e2, e3, e4] = self.correlations;
        (e1 - e2).abs() + (e3 + e4).abs()
    }
}

fn require_two_qubits(state: &QuantumState) -> Result<()> {
    if state.dim() != 4 {
        return Err(LabError::DimensionMismatch {
            expected: 4,
            found: state.dim(),
        });
    }
    Ok(())
}

/// `⟨ψ|X⊗Y|ψ⟩` for two analyzer observables.
pub fn correlation(state: &QuantumState, x: &ComplexMatrix, y: &ComplexMatrix) -> Result<f64> {
    Ok(qcore::expectation(state, &tensor(x, y))?.re)
}

pub fn chsh_expectation(state: &QuantumState, set: &BellOperatorSet) -> Result<ChshExpectation> {
    require_two_qubits(state)?;
    let correlations = [
        correlation(state, &set.a, &set.b)?,
        correlation(state, &set.a, &set.b_prime)?,
        correlation(state, &set.a_prime, &set.b_prime)?,
        correlation(state, &set.a_prime, &set.b)?,
    ];
    let value = qcore::expectation(state, &set.s)?.re;
    Ok(ChshExpectation { value, correlations })
}

pub fn s_squared_expectation(state: &QuantumState, set: &BellOperatorSet) -> Result<f64> {
    require_two_qubits(state)?;
    Ok(qcore::expectation(state, &set.s_squared())?.re)
}

/// Coefficient `c` with `[X, X′] = 2i·c·σ_y`, or an error if the commutator has
/// any other component.
pub fn sigma_y_coefficient(comm: &ComplexMatrix) -> Result<f64> {
    let c = comm.get(0, 1).re / 2.0;
    let model = pauli(Axis::Y).scale(num_complex::Complex64::new(0.0, 2.0 * c));
    let residual = comm.max_abs_diff(&model)?;
    if residual > IDENTITY_TOL {
        return Err(LabError::InvalidParameter(format!(
            "commutator is not proportional to σ_y (residual {residual:e})"
        )));
    }
    Ok(c)
}

/// Monte Carlo estimate of `⟨ψ|S²|ψ⟩` from local outcome sampling.
///
/// With `[X,X′] = 2i·cₐ·σ_y` and `[B,B′] = 2i·c_b·σ_y` the identity gives
/// `S² = 4I + 4·cₐ·c_b·(σ_y⊗σ_y)`, so each trial measures σ_y on particle 1
/// then on particle 2 (Lüders collapse in between) and records the product.
pub fn s_squared_monte_carlo(
    state: &QuantumState,
    set: &BellOperatorSet,
    n: u64,
    seed: u64,
) -> Result<CorrelationEstimate> {
    require_two_qubits(state)?;
    if n < 2 {
        return Err(LabError::TooFewTrials {
            min: 2,
            found: n as usize,
        });
    }
    let ca = sigma_y_coefficient(&set.alice_commutator())?;
    let cb = sigma_y_coefficient(&set.bob_commutator())?;
    let id = ComplexMatrix::identity(2);
    let y = pauli(Axis::Y);
    let y1 = tensor(&y, &id);
    let y2 = tensor(&id, &y);
    let mut rng = RandomStream::keyed(seed, Purpose::Sweep, 0);
    let (mut sum, mut sum_sq) = (0i64, 0i64);
    for _ in 0..n {
        let first = qcore::measure_projective(state, &y1, &mut rng)?;
        let second = qcore::measure_projective(&first.post_state, &y2, &mut rng)?;
        let prod = i64::from(first.value * second.value);
        sum += prod;
        sum_sq += prod * prod;
    }
    let yy = CorrelationEstimate::from_int_sums(sum, sum_sq, n);
    Ok(yy.affine(4.0, 4.0 * ca * cb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use std::f64::consts::SQRT_2;

    fn optimal_photon() -> BellOperatorSet {
        bell_operator(
            AnalyzerSetting::photon_deg(0.0),
            AnalyzerSetting::photon_deg(45.0),
            AnalyzerSetting::photon_deg(22.5),
            AnalyzerSetting::photon_deg(67.5),
        )
        .unwrap()
    }

    fn two_i_sigma_y(scale: f64) -> ComplexMatrix {
        pauli(Axis::Y).scale(Complex64::new(0.0, 2.0 * scale))
    }

    #[test]
    fn photon_zero_is_sigma_z() {
        let a = analyzer_observable(&AnalyzerSetting::photon_deg(0.0));
        assert!(a.max_abs_diff(&pauli(Axis::Z)).unwrap() < IDENTITY_TOL);
    }

    #[test]
    fn analyzers_are_hermitian_involutions() {
        for deg in [0.0, 13.0, 22.5, 45.0, 90.0, 137.0, -60.0] {
            for kind in [ParticleKind::Photon, ParticleKind::Electron] {
                let m = analyzer_observable(&AnalyzerSetting::new(f64::to_radians(deg), kind));
                assert!(m.is_hermitian());
                assert!(m.is_involutory());
            }
        }
    }

    #[test]
    fn photon_commutator_at_45() {
        let a0 = analyzer_observable(&AnalyzerSetting::photon_deg(0.0));
        let a45 = analyzer_observable(&AnalyzerSetting::photon_deg(45.0));
        let c = commutator(&a0, &a45).unwrap();
        assert!(c.max_abs_diff(&two_i_sigma_y(1.0)).unwrap() < IDENTITY_TOL);
    }

    #[test]
    fn electron_commutator_at_90() {
        let a0 = analyzer_observable(&AnalyzerSetting::electron_deg(0.0));
        let a90 = analyzer_observable(&AnalyzerSetting::electron_deg(90.0));
        let c = commutator(&a0, &a90).unwrap();
        assert!(c.max_abs_diff(&two_i_sigma_y(1.0)).unwrap() < IDENTITY_TOL);
    }

    #[test]
    fn elementary_commutators() {
        let z = pauli(Axis::Z);
        assert!(commutator(&z, &z).unwrap().max_abs() < IDENTITY_TOL);
        let zx = commutator(&z, &pauli(Axis::X)).unwrap();
        assert!(zx.max_abs_diff(&two_i_sigma_y(1.0)).unwrap() < IDENTITY_TOL);
        let a = analyzer_observable(&AnalyzerSetting::photon_deg(31.0));
        assert!(commutator(&a, &a).unwrap().max_abs() < IDENTITY_TOL);
    }

    #[test]
    fn commutator_dimension_mismatch() {
        let err = commutator(&pauli(Axis::Z), &ComplexMatrix::identity(4)).unwrap_err();
        assert!(matches!(err, LabError::DimensionMismatch { .. }));
    }

    #[test]
    fn optimal_menu_norm_is_tsirelson() {
        let set = optimal_photon();
        assert!((set.norm() - 2.0 * SQRT_2).abs() < 1e-9);
        let op = bell_operator_with(
            BellForm::Operator,
            AnalyzerSetting::photon_deg(0.0),
            AnalyzerSetting::photon_deg(45.0),
            AnalyzerSetting::photon_deg(22.5),
            AnalyzerSetting::photon_deg(67.5),
        )
        .unwrap();
        assert!((op.norm() - 2.0 * SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn commuting_alice_side_collapses_to_four() {
        let set = bell_operator(
            AnalyzerSetting::photon_deg(10.0),
            AnalyzerSetting::photon_deg(10.0),
            AnalyzerSetting::photon_deg(33.0),
            AnalyzerSetting::photon_deg(71.0),
        )
        .unwrap();
        for ev in set.s_squared().hermitian_eigenvalues().unwrap() {
            assert!((ev - 4.0).abs() < 1e-9);
        }
        assert!((set.norm() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn mixed_kinds_rejected() {
        let err = bell_operator(
            AnalyzerSetting::photon_deg(0.0),
            AnalyzerSetting::electron_deg(45.0),
            AnalyzerSetting::photon_deg(22.5),
            AnalyzerSetting::photon_deg(67.5),
        )
        .unwrap_err();
        assert_eq!(err, LabError::MixedKinds { side: "Alice" });
    }

    #[test]
    fn residual_at_named_menus() {
        assert!(bell_squared_residual(&optimal_photon()) < IDENTITY_TOL);
        let electron = bell_operator(
            AnalyzerSetting::electron_deg(0.0),
            AnalyzerSetting::electron_deg(90.0),
            AnalyzerSetting::electron_deg(45.0),
            AnalyzerSetting::electron_deg(135.0),
        )
        .unwrap();
        assert!(bell_squared_residual(&electron) < IDENTITY_TOL);
    }

    #[test]
    fn singlet_reaches_two_root_two() {
        let e = chsh_expectation(&QuantumState::singlet(), &optimal_photon()).unwrap();
        assert!((e.value.abs() - 2.0 * SQRT_2).abs() < IDENTITY_TOL);
        assert!((e.chsh_lhs() - 2.0 * SQRT_2).abs() < IDENTITY_TOL);
    }

    #[test]
    fn singlet_all_zero_angles() {
        let z = AnalyzerSetting::photon_deg(0.0);
        let set = bell_operator(z, z, z, z).unwrap();
        let e = chsh_expectation(&QuantumState::singlet(), &set).unwrap();
        assert!((e.value + 2.0).abs() < IDENTITY_TOL);
    }

    #[test]
    fn s_squared_matrix_elements() {
        let set = optimal_photon();
        let hv = s_squared_expectation(&QuantumState::product_hv(), &set).unwrap();
        let singlet = s_squared_expectation(&QuantumState::singlet(), &set).unwrap();
        assert!((hv - 4.0).abs() < IDENTITY_TOL);
        assert!((singlet - 8.0).abs() < IDENTITY_TOL);
    }

    #[test]
    fn s_squared_requires_two_qubits() {
        let err = s_squared_expectation(&QuantumState::horizontal(), &optimal_photon()).unwrap_err();
        assert!(matches!(err, LabError::DimensionMismatch { expected: 4, found: 2 }));
    }

    #[test]
    fn s_squared_consistency_with_commutator_product() {
        let set = optimal_photon();
        for state in [QuantumState::singlet(), QuantumState::product_hv()] {
            let direct = s_squared_expectation(&state, &set).unwrap();
            let via = 4.0 - qcore::expectation(&state, &set.commutator_product()).unwrap().re;
            assert!((direct - via).abs() < IDENTITY_TOL);
        }
    }
}
