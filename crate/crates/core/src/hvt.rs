//! Local hidden-variable models and cloned ensembles.
//!
//! A model samples a hidden variable `λ` from its distribution and answers a
//! single-wing measurement `(setting, λ) → (±1, λ′)`. The responder never sees
//! the other wing's setting; the signature has no slot for it.
//!
//! Built-in models:
//!
//! * `static-sign`: `λ` is one angle, uniform over a period of the analyzer.
//!   Alice reads `sign(cos k(a−λ))`, Bob reads `−sign(cos k(b−λ))`. `λ` never
//!   changes, so measurement order is irrelevant.
//! * `collapse-rotation`: each particle carries its own copy of the angle. A
//!   measurement fires `+1` with the Malus probability `cos²(k(a−λ)/2)` and
//!   leaves that particle's angle on the analyzer axis (`+1`) or on its
//!   orthogonal port (`−1`). Bob reports the negated reading. This is an
//!   illustrative dynamic model, not a reconstruction of a known theory.
//! * `qm-oracle`: `λ` is the shared two-qubit state vector itself, measured with
//!   Lüders collapse. It is not local and is only there for comparison.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::observables::{analyzer_observable, AnalyzerSetting, ParticleKind};
use crate::qcore::{self, tensor, ComplexMatrix, QuantumState};
use crate::rng::RandomStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Wing {
    Alice,
    Bob,
}

impl Wing {
    pub fn index(self) -> usize {
        match self {
            Wing::Alice => 0,
            Wing::Bob => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenVariable {
    values: Vec<f64>,
}

impl HiddenVariable {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(LabError::InvalidParameter(format!(
                "hidden variable entry {bad} is not finite"
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    /// Bitwise equality, distinguishing `0.0` from `-0.0`.
    pub fn bit_identical(&self, other: &Self) -> bool {
        self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    pub outcome: i8,
    pub lambda: HiddenVariable,
}

pub trait HiddenVariableModel: Send + Sync {
    fn name(&self) -> &str;

    fn kind(&self) -> ParticleKind;

    fn dimension(&self) -> usize;

    /// Whether a measurement may change `λ`.
    fn is_dynamic(&self) -> bool;

    /// Whether outcomes depend only on the local setting and the local part of `λ`.
    fn is_local(&self) -> bool {
        true
    }

    /// Draws `λ` from the model's distribution.
    fn sample(&self, rng: &mut RandomStream) -> HiddenVariable;

    /// One measurement on `wing` at `setting`. Draws at most one uniform from `rng`.
    fn respond(
        &self,
        wing: Wing,
        setting: &AnalyzerSetting,
        lambda: &HiddenVariable,
        rng: &mut RandomStream,
    ) -> Result<Response>;
}

fn sign(x: f64) -> i8 {
    if x >= 0.0 {
        1
    } else {
        -1
    }
}

fn wing_sign(wing: Wing) -> i8 {
    match wing {
        Wing::Alice => 1,
        Wing::Bob => -1,
    }
}

fn angle_period(kind: ParticleKind) -> f64 {
    2.0 * std::f64::consts::PI / kind.multiplier()
}

#[derive(Debug, Clone)]
pub struct StaticSign {
    kind: ParticleKind,
}

impl StaticSign {
    pub const NAME: &'static str = "static-sign";

    pub fn new(kind: ParticleKind) -> Self {
        Self { kind }
    }
}

impl HiddenVariableModel for StaticSign {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn kind(&self) -> ParticleKind {
        self.kind
    }

    fn dimension(&self) -> usize {
        1
    }

    fn is_dynamic(&self) -> bool {
        false
    }

    fn sample(&self, rng: &mut RandomStream) -> HiddenVariable {
        HiddenVariable {
            values: vec![rng.uniform_in(0.0, angle_period(self.kind))],
        }
    }

    fn respond(
        &self,
        wing: Wing,
        setting: &AnalyzerSetting,
        lambda: &HiddenVariable,
        _rng: &mut RandomStream,
    ) -> Result<Response> {
        let k = setting.kind.multiplier();
        let reading = sign((k * (setting.angle - lambda.values[0])).cos());
        Ok(Response {
            outcome: wing_sign(wing) * reading,
            lambda: lambda.clone(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct CollapseRotation {
    kind: ParticleKind,
}

impl CollapseRotation {
    pub const NAME: &'static str = "collapse-rotation";

    pub fn new(kind: ParticleKind) -> Self {
        Self { kind }
    }

    /// Malus probability of a `+1` reading for a particle at `lambda`.
    pub fn plus_probability(setting: &AnalyzerSetting, lambda: f64) -> f64 {
        let half = 0.5 * setting.kind.multiplier() * (setting.angle - lambda);
        half.cos().powi(2)
    }
}

impl HiddenVariableModel for CollapseRotation {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn kind(&self) -> ParticleKind {
        self.kind
    }

    fn dimension(&self) -> usize {
        2
    }

    fn is_dynamic(&self) -> bool {
        true
    }

    fn sample(&self, rng: &mut RandomStream) -> HiddenVariable {
        let theta = rng.uniform_in(0.0, angle_period(self.kind));
        HiddenVariable {
            values: vec![theta, theta],
        }
    }

    fn respond(
        &self,
        wing: Wing,
        setting: &AnalyzerSetting,
        lambda: &HiddenVariable,
        rng: &mut RandomStream,
    ) -> Result<Response> {
        let slot = wing.index();
        let p_plus = Self::plus_probability(setting, lambda.values[slot]);
        let reading: i8 = if rng.uniform() < p_plus { 1 } else { -1 };
        let mut values = lambda.values.clone();
        values[slot] = if reading == 1 {
            setting.angle
        } else {
            setting.angle + setting.kind.orthogonal_offset()
        };
        Ok(Response {
            outcome: wing_sign(wing) * reading,
            lambda: HiddenVariable { values },
        })
    }
}

/// The quantum state itself as the hidden variable.
#[derive(Debug, Clone)]
pub struct QmOracle {
    name: String,
    kind: ParticleKind,
    state: QuantumState,
}

impl QmOracle {
    pub const NAME: &'static str = "qm-oracle";

    /// Singlet source.
    pub fn new(kind: ParticleKind) -> Self {
        Self::with_state(Self::NAME, kind, QuantumState::singlet()).expect("singlet is two-qubit")
    }

    pub fn with_state(name: &str, kind: ParticleKind, state: QuantumState) -> Result<Self> {
        if state.dim() != 4 {
            return Err(LabError::DimensionMismatch {
                expected: 4,
                found: state.dim(),
            });
        }
        Ok(Self {
            name: name.to_string(),
            kind,
            state,
        })
    }

    pub fn state(&self) -> &QuantumState {
        &self.state
    }

    /// The single-wing analyzer lifted to the two-qubit space.
    pub fn local_observable(wing: Wing, setting: &AnalyzerSetting) -> ComplexMatrix {
        let m = analyzer_observable(setting);
        let id = ComplexMatrix::identity(2);
        match wing {
            Wing::Alice => tensor(&m, &id),
            Wing::Bob => tensor(&id, &m),
        }
    }
}

impl HiddenVariableModel for QmOracle {
    fn name(&self) -> &str {
        &self.name
    }

    fn kind(&self) -> ParticleKind {
        self.kind
    }

    fn dimension(&self) -> usize {
        8
    }

    fn is_dynamic(&self) -> bool {
        true
    }

    fn is_local(&self) -> bool {
        false
    }

    fn sample(&self, _rng: &mut RandomStream) -> HiddenVariable {
        HiddenVariable {
            values: self.state.to_reals(),
        }
    }

    fn respond(
        &self,
        wing: Wing,
        setting: &AnalyzerSetting,
        lambda: &HiddenVariable,
        rng: &mut RandomStream,
    ) -> Result<Response> {
        let psi = QuantumState::from_reals(&lambda.values)?;
        let out = qcore::measure_projective(&psi, &Self::local_observable(wing, setting), rng)?;
        Ok(Response {
            outcome: out.value,
            lambda: HiddenVariable {
                values: out.post_state.to_reals(),
            },
        })
    }
}

pub fn builtin_models(kind: ParticleKind) -> Vec<Box<dyn HiddenVariableModel>> {
    vec![
        Box::new(StaticSign::new(kind)),
        Box::new(CollapseRotation::new(kind)),
        Box::new(QmOracle::new(kind)),
    ]
}

pub fn builtin_model_names() -> [&'static str; 3] {
    [StaticSign::NAME, CollapseRotation::NAME, QmOracle::NAME]
}

pub fn model_by_name(name: &str, kind: ParticleKind) -> Option<Box<dyn HiddenVariableModel>> {
    builtin_models(kind).into_iter().find(|m| m.name() == name)
}

/// `n` hidden variables, index-aligned across the four time bins.
#[derive(Debug, Clone, PartialEq)]
pub struct CloneEnsemble {
    pub model: String,
    pub seed: u64,
    elements: Vec<HiddenVariable>,
}

impl CloneEnsemble {
    pub fn new(model: &str, seed: u64, elements: Vec<HiddenVariable>) -> Result<Self> {
        if elements.is_empty() {
            return Err(LabError::EmptyEnsemble);
        }
        Ok(Self {
            model: model.to_string(),
            seed,
            elements,
        })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[HiddenVariable] {
        &self.elements
    }

    pub fn get(&self, index: usize) -> &HiddenVariable {
        &self.elements[index]
    }

    /// A fresh copy of the ensemble for one time bin.
    pub fn bin_copy(&self) -> Vec<HiddenVariable> {
        self.elements.clone()
    }

    /// One record per line: `index<TAB>model<TAB>seed<TAB>v1,v2,...` with
    /// 17 significant digits per value.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# index\tmodel\tseed\tlambda")?;
        for (i, el) in self.elements.iter().enumerate() {
            let mut values = String::new();
            for (j, v) in el.values.iter().enumerate() {
                if j > 0 {
                    values.push(',');
                }
                write!(values, "{v:.16e}").expect("write to String");
            }
            writeln!(out, "{i}\t{}\t{}\t{values}", self.model, self.seed)?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self> {
        let mut model: Option<String> = None;
        let mut seed: Option<u64> = None;
        let mut elements = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line_no = lineno + 1;
            let line = line.map_err(|e| LabError::MalformedRecord {
                line: line_no,
                reason: e.to_string(),
            })?;
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: &str| LabError::MalformedRecord {
                line: line_no,
                reason: reason.to_string(),
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(bad("expected 4 tab-separated fields"));
            }
            let index: usize = fields[0].parse().map_err(|_| bad("bad index"))?;
            if index != elements.len() {
                return Err(bad("records out of order"));
            }
            match &model {
                None => model = Some(fields[1].to_string()),
                Some(m) if m != fields[1] => return Err(bad("mixed model names")),
                _ => {}
            }
            let s: u64 = fields[2].parse().map_err(|_| bad("bad seed"))?;
            match seed {
                None => seed = Some(s),
                Some(prev) if prev != s => return Err(bad("mixed seeds")),
                _ => {}
            }
            let values = fields[3]
                .split(',')
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad("bad lambda value"))?;
            elements.push(HiddenVariable::new(values).map_err(|_| bad("non-finite lambda"))?);
        }
        let model = model.ok_or(LabError::EmptyEnsemble)?;
        Self::new(&model, seed.unwrap_or_default(), elements)
    }
}

/// Draws `n` i.i.d. hidden variables from `model` in index order.
pub fn sample_ensemble(model: &dyn HiddenVariableModel, n: usize, rng: &mut RandomStream) -> Result<CloneEnsemble> {
    if n == 0 {
        return Err(LabError::EmptyEnsemble);
    }
    let elements = (0..n).map(|_| model.sample(rng)).collect();
    CloneEnsemble::new(model.name(), rng.seed(), elements)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Purpose;

    fn photon(deg: f64) -> AnalyzerSetting {
        AnalyzerSetting::photon_deg(deg)
    }

    #[test]
    fn static_sign_reads_plus_at_small_offset() {
        let model = StaticSign::new(ParticleKind::Photon);
        let lambda = HiddenVariable::new(vec![10f64.to_radians()]).unwrap();
        let r = model
            .respond(Wing::Alice, &photon(0.0), &lambda, &mut RandomStream::new(0))
            .unwrap();
        assert_eq!(r.outcome, 1);
        assert!(r.lambda.bit_identical(&lambda));
    }

    #[test]
    fn static_sign_repeat_is_identical() {
        let model = StaticSign::new(ParticleKind::Photon);
        let mut rng = RandomStream::new(2);
        for _ in 0..200 {
            let lambda = model.sample(&mut rng);
            let a = photon(rng.uniform_in(0.0, 180.0));
            let first = model.respond(Wing::Bob, &a, &lambda, &mut rng).unwrap();
            let second = model.respond(Wing::Bob, &a, &first.lambda, &mut rng).unwrap();
            assert_eq!(first.outcome, second.outcome);
        }
    }

    #[test]
    fn collapse_rotation_lands_on_axis_and_is_stable() {
        let model = CollapseRotation::new(ParticleKind::Photon);
        let mut rng = RandomStream::new(9);
        let a = photon(30.0);
        for _ in 0..500 {
            let lambda = model.sample(&mut rng);
            let first = model.respond(Wing::Alice, &a, &lambda, &mut rng).unwrap();
            let landed = first.lambda.values()[0];
            let expected = if first.outcome == 1 {
                a.angle
            } else {
                a.angle + std::f64::consts::FRAC_PI_2
            };
            assert_eq!(landed, expected);
            assert_eq!(first.lambda.values()[1], lambda.values()[1], "Bob's copy untouched");
            let second = model.respond(Wing::Alice, &a, &first.lambda, &mut rng).unwrap();
            assert_eq!(first.outcome, second.outcome);
        }
    }

    #[test]
    fn qm_oracle_eigen_collapse_is_stable() {
        let model = QmOracle::new(ParticleKind::Photon);
        let mut rng = RandomStream::new(4);
        let b = photon(22.5);
        for _ in 0..200 {
            let lambda = model.sample(&mut rng);
            let first = model.respond(Wing::Bob, &b, &lambda, &mut rng).unwrap();
            let second = model.respond(Wing::Bob, &b, &first.lambda, &mut rng).unwrap();
            assert_eq!(first.outcome, second.outcome);
        }
    }

    #[test]
    fn builtins_are_named_and_flagged() {
        let models = builtin_models(ParticleKind::Photon);
        let names: Vec<&str> = models.iter().map(|m| m.name()).collect();
        assert_eq!(names, builtin_model_names());
        assert!(!models[0].is_dynamic());
        assert!(models[1].is_dynamic() && models[1].is_local());
        assert!(!models[2].is_local());
        assert!(model_by_name("nope", ParticleKind::Photon).is_none());
    }

    #[test]
    fn empty_ensemble_rejected() {
        let model = StaticSign::new(ParticleKind::Photon);
        let err = sample_ensemble(&model, 0, &mut RandomStream::new(0)).unwrap_err();
        assert_eq!(err, LabError::EmptyEnsemble);
    }

    #[test]
    fn single_element_ensemble() {
        let model = StaticSign::new(ParticleKind::Photon);
        let ens = sample_ensemble(&model, 1, &mut RandomStream::new(0)).unwrap();
        assert_eq!(ens.len(), 1);
    }

    #[test]
    fn seeded_ensembles_match() {
        let model = CollapseRotation::new(ParticleKind::Electron);
        let a = sample_ensemble(&model, 50, &mut RandomStream::keyed(77, Purpose::Sample, 0)).unwrap();
        let b = sample_ensemble(&model, 50, &mut RandomStream::keyed(77, Purpose::Sample, 0)).unwrap();
        assert!(a.elements().iter().zip(b.elements()).all(|(x, y)| x.bit_identical(y)));
    }

    #[test]
    fn bin_copies_are_bit_identical() {
        let model = CollapseRotation::new(ParticleKind::Photon);
        let ens = sample_ensemble(&model, 100, &mut RandomStream::new(3)).unwrap();
        let bins: Vec<Vec<HiddenVariable>> = (0..4).map(|_| ens.bin_copy()).collect();
        for bin in &bins[1..] {
            assert!(bin.iter().zip(&bins[0]).all(|(x, y)| x.bit_identical(y)));
        }
    }

    #[test]
    fn persistence_round_trip() {
        let model = QmOracle::new(ParticleKind::Photon);
        let ens = sample_ensemble(&model, 5, &mut RandomStream::new(12)).unwrap();
        let mut buf = Vec::new();
        ens.write_to(&mut buf).unwrap();
        let back = CloneEnsemble::read_from(buf.as_slice()).unwrap();
        assert_eq!(back.model, "qm-oracle");
        assert_eq!(back.seed, 12);
        assert!(back
            .elements()
            .iter()
            .zip(ens.elements())
            .all(|(x, y)| x.bit_identical(y)));
    }

    #[test]
    fn persistence_rejects_garbage() {
        let err = CloneEnsemble::read_from("0\tstatic-sign\t1\tnotanumber\n".as_bytes()).unwrap_err();
        assert!(matches!(err, LabError::MalformedRecord { line: 1, .. }));
        let err = CloneEnsemble::read_from("1\tstatic-sign\t1\t0.5\n".as_bytes()).unwrap_err();
        assert!(matches!(err, LabError::MalformedRecord { .. }));
    }
}
