//! Executes a [`RunConfig`] and assembles its [`ReportDocument`].

use std::f64::consts::TAU;

use num_complex::Complex64;

use super::config::{Mode, RunConfig, Source};
use super::report::{AnalyticSummary, IdentityChecks, ReportDocument, SequentialReport};
use crate::error::{LabError, Result};
use crate::harness::{
    random_settings_run, run_four_bin, sequential_correlation_exact, time_order_term, FourBinSchedule, RunOptions,
    SettingMenu, Side, TrialRecord,
};
use crate::hvt::{model_by_name, HiddenVariableModel, QmOracle};
use crate::observables::{
    analyzer_observable, bell_operator, bell_operator_with, bell_squared_residual, chsh_expectation, commutator,
    s_squared_expectation, AnalyzerSetting, BellForm, ParticleKind,
};
use crate::oumandel::{self, BeamSplitterParams};
use crate::qcore::{pauli, Axis, QuantumState};
use crate::rng::{Purpose, RandomStream};

pub const BELL_SQUARE_SAMPLES: usize = 10_000;
pub const COMMUTATOR_SAMPLES: usize = 1_000;
pub const FACTORIZATION_SAMPLES: usize = 1_000;

/// A finished run: the report plus the per-trial table, if one was kept.
pub struct RunOutput {
    pub document: ReportDocument,
    pub table: Option<Table>,
}

pub enum Table {
    Trials(Vec<TrialRecord>),
    /// `index  forward  backward` rows from a sequential run.
    Sequential(Vec<crate::harness::SequentialSample>),
}

impl Table {
    pub fn write<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        match self {
            Table::Trials(r) => crate::harness::write_trial_table(r, out),
            Table::Sequential(rows) => {
                writeln!(out, "index\tforward\tbackward")?;
                for r in rows {
                    writeln!(out, "{}\t{}\t{}", r.index, r.forward, r.backward)?;
                }
                Ok(())
            }
        }
    }
}

fn quantum_state(source: &Source) -> Option<QuantumState> {
    match source {
        Source::Singlet => Some(QuantumState::singlet()),
        Source::Product => Some(QuantumState::product_hv()),
        _ => None,
    }
}

fn build_model(config: &RunConfig) -> Result<Box<dyn HiddenVariableModel>> {
    let kind = config.kind;
    match &config.source {
        Source::Singlet => Ok(Box::new(QmOracle::with_state(
            "singlet",
            kind,
            QuantumState::singlet(),
        )?)),
        Source::Product => Ok(Box::new(QmOracle::with_state(
            "product",
            kind,
            QuantumState::product_hv(),
        )?)),
        Source::Hvt(name) => {
            model_by_name(name, kind).ok_or_else(|| LabError::InvalidParameter(format!("unknown model `{name}`")))
        }
        Source::OuMandel => Err(LabError::InvalidParameter(
            "the ou-mandel source has no per-particle model".into(),
        )),
    }
}

fn splitter(config: &RunConfig) -> Result<BeamSplitterParams> {
    BeamSplitterParams::from_transmissions(config.splitter.0, config.splitter.1)
}

fn options(config: &RunConfig, record: bool) -> RunOptions {
    RunOptions {
        seed: config.seed,
        workers: config.workers,
        side: config.side,
        record_trials: record,
    }
}

fn analytic(config: &RunConfig, menu: &SettingMenu) -> Result<Option<AnalyticSummary>> {
    if let Some(state) = quantum_state(&config.source) {
        let set = bell_operator(menu.a, menu.a_prime, menu.b, menu.b_prime)?;
        let e = chsh_expectation(&state, &set)?;
        return Ok(Some(AnalyticSummary {
            correlations: e.correlations,
            chsh_lhs: e.chsh_lhs(),
            s_expectation: Some(e.value),
            s_squared: Some(s_squared_expectation(&state, &set)?),
            optimum_deg: None,
            optimum_value: None,
        }));
    }
    if config.source == Source::OuMandel {
        let p = splitter(config)?;
        let correlations = oumandel::analytic_correlations(&p, menu)?;
        let [e1, e2, e3, e4] = correlations;
        let best = oumandel::optimize_chsh_menu(&p);
        return Ok(Some(AnalyticSummary {
            correlations,
            chsh_lhs: (e1 - e2).abs() + (e3 + e4).abs(),
            s_expectation: None,
            s_squared: None,
            optimum_deg: Some(best.degrees()),
            optimum_value: Some(best.value),
        }));
    }
    Ok(None)
}

/// Runs the configured mode. The result depends only on `config`, never on
/// `config.workers`.
pub fn execute(config: &RunConfig) -> Result<RunOutput> {
    let kind = if config.source == Source::OuMandel {
        ParticleKind::Photon
    } else {
        config.kind
    };
    let menu = SettingMenu::from_degrees(kind, config.angles_deg);
    let record = config.table_out.is_some();
    let mut doc = ReportDocument::new(config.clone());
    let mut table = None;

    match config.mode {
        Mode::IdentityChecks => {
            doc.identity_checks = Some(identity_checks(config.kind, config.angles_deg, config.seed)?);
        }
        Mode::FourBin | Mode::RandomSettings => {
            let mut report = if config.source == Source::OuMandel {
                if config.mode == Mode::RandomSettings {
                    return Err(LabError::InvalidParameter(
                        "random-settings mode needs a per-particle source, not ou-mandel".into(),
                    ));
                }
                let p = splitter(config)?;
                oumandel::coincidence_report(&p, &menu, config.trials, config.convention, &options(config, false))?
            } else {
                let model = build_model(config)?;
                if config.mode == Mode::FourBin {
                    let mut schedule = FourBinSchedule::new(menu, config.trials);
                    if config.tandem {
                        schedule = schedule.tandem();
                    }
                    run_four_bin(model.as_ref(), &schedule, &options(config, record))?
                } else {
                    random_settings_run(model.as_ref(), &menu, config.trials, &options(config, record))?
                }
            };
            if record {
                table = Some(Table::Trials(std::mem::take(&mut report.records)));
            }
            doc.chsh = Some(report);
            doc.analytic = analytic(config, &menu)?;
        }
        Mode::Sequential => {
            let model = build_model(config)?;
            let (first, second) = match config.side {
                Side::BSide => (menu.b, menu.b_prime),
                Side::ASide => (menu.a, menu.a_prime),
            };
            let term = time_order_term(model.as_ref(), first, second, config.trials, &options(config, record))?;
            let exact = match quantum_state(&config.source) {
                Some(state) => {
                    let wing = config.side.wing();
                    Some((
                        sequential_correlation_exact(&state, wing, &first, &second)?,
                        sequential_correlation_exact(&state, wing, &second, &first)?,
                    ))
                }
                None => None,
            };
            doc.sequential = Some(SequentialReport {
                first_deg: first.degrees(),
                second_deg: second.degrees(),
                summary: term.summary,
                forward: term.forward,
                backward: term.backward,
                exact_forward: exact.map(|e| e.0),
                exact_backward: exact.map(|e| e.1),
            });
            if record {
                table = Some(Table::Sequential(term.trace));
            }
        }
    }
    Ok(RunOutput { document: doc, table })
}

/// Random-angle sweeps of the operator identities plus the named matrix
/// elements at the given menu.
pub fn identity_checks(kind: ParticleKind, angles_deg: [f64; 4], seed: u64) -> Result<IdentityChecks> {
    let mut rng = RandomStream::keyed(seed, Purpose::Sweep, 1);
    let mut bell_residual = 0.0f64;
    let mut max_norm = 0.0f64;
    let mut bell_samples = 0;
    for k in [ParticleKind::Photon, ParticleKind::Electron] {
        for form in [BellForm::Chsh, BellForm::Operator] {
            for _ in 0..BELL_SQUARE_SAMPLES {
                let s: [AnalyzerSetting; 4] =
                    std::array::from_fn(|_| AnalyzerSetting::new(rng.uniform_in(0.0, TAU), k));
                let set = bell_operator_with(form, s[0], s[1], s[2], s[3])?;
                bell_residual = bell_residual.max(bell_squared_residual(&set));
                max_norm = max_norm.max(set.norm());
                bell_samples += 1;
            }
        }
    }

    let sigma_y = pauli(Axis::Y);
    let mut comm_residual = 0.0f64;
    let mut comm_samples = 0;
    for k in [ParticleKind::Photon, ParticleKind::Electron] {
        for _ in 0..COMMUTATOR_SAMPLES {
            let x = AnalyzerSetting::new(rng.uniform_in(0.0, TAU), k);
            let y = AnalyzerSetting::new(rng.uniform_in(0.0, TAU), k);
            let c = commutator(&analyzer_observable(&x), &analyzer_observable(&y))?;
            let closed = sigma_y.scale(Complex64::new(0.0, 2.0 * (k.multiplier() * (y.angle - x.angle)).sin()));
            comm_residual = comm_residual.max(c.max_abs_diff(&closed)?);
            comm_samples += 1;
        }
    }

    let mut fact_residual = 0.0f64;
    for _ in 0..FACTORIZATION_SAMPLES {
        let p = BeamSplitterParams::from_transmissions(rng.uniform(), rng.uniform())?;
        fact_residual = fact_residual.max(oumandel::factorization_residual(&p));
    }

    let menu = SettingMenu::from_degrees(kind, angles_deg);
    let set = bell_operator(menu.a, menu.a_prime, menu.b, menu.b_prime)?;
    let singlet = QuantumState::singlet();
    Ok(IdentityChecks {
        bell_square_residual: bell_residual,
        bell_square_samples: bell_samples,
        commutator_residual: comm_residual,
        commutator_samples: comm_samples,
        factorization_residual: fact_residual,
        factorization_samples: FACTORIZATION_SAMPLES,
        max_bell_norm: max_norm,
        s_squared_product: s_squared_expectation(&QuantumState::product_hv(), &set)?,
        s_squared_singlet: s_squared_expectation(&singlet, &set)?,
        s_singlet: chsh_expectation(&singlet, &set)?.value,
        max_eigenvalue: set.norm(),
    })
}
