//! Four-time-bin CHSH runs, the time-order term and inequality verdicts.
//!
//! The schedule measures `(a,b)`, `(a,b′)`, `(a′,b′)`, `(a′,b)` in bins 1–4.
//! Element `i` of every bin starts from the same hidden variable and the same
//! per-wing random substreams, so the four bins are matched clones. Alice is
//! always measured before Bob within a trial.
//!
//! With matched clones the per-ensemble identity
//!
//! ```text
//! |⟨AB⟩₁ − ⟨AB′⟩₂| + |⟨A′B′⟩₃ + ⟨A′B⟩₄|
//!     ≤ 2 + N⁻¹Σ|B₁B′₃ − B′₂B₄| + N⁻¹Σ|A₁A′₃ − A₂A′₄|
//! ```
//!
//! holds exactly for any ±1 data, and the Alice term vanishes because Alice's
//! first measurement in bins 1/2 (and 3/4) is the same draw on the same state.
//! All sums are kept as integers so the check is exact.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::hvt::QmOracle;
use crate::hvt::{HiddenVariable, HiddenVariableModel, Wing};
use crate::observables::{AnalyzerSetting, ParticleKind};
use crate::qcore::{self, QuantumState};
use crate::rng::{Purpose, RandomStream};
use crate::stats::CorrelationEstimate;

pub const BELL_BOUND: f64 = 2.0;
pub const CIRELSON_BOUND: f64 = 2.0 * std::f64::consts::SQRT_2;
/// Slack used when comparing a statistic against a bound.
pub const VERDICT_TOL: f64 = 1e-12;

/// Which wing's sequential term enters the time-ordered bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    #[serde(rename = "A-side")]
    ASide,
    #[serde(rename = "B-side")]
    BSide,
}

impl Side {
    pub fn wing(self) -> Wing {
        match self {
            Side::ASide => Wing::Alice,
            Side::BSide => Wing::Bob,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::ASide => "A-side",
            Side::BSide => "B-side",
        }
    }
}

impl std::str::FromStr for Side {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "A-side" | "a-side" | "A" | "a" => Ok(Side::ASide),
            "B-side" | "b-side" | "B" | "b" => Ok(Side::BSide),
            other => Err(format!("unknown side `{other}` (expected A-side|B-side)")),
        }
    }
}

/// Alice's two and Bob's two analyzer settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SettingMenu {
    pub a: AnalyzerSetting,
    pub a_prime: AnalyzerSetting,
    pub b: AnalyzerSetting,
    pub b_prime: AnalyzerSetting,
}

impl SettingMenu {
    /// `[a, a′, b, b′]` in degrees.
    pub fn from_degrees(kind: ParticleKind, deg: [f64; 4]) -> Self {
        let s = |d: f64| AnalyzerSetting::new(d.to_radians(), kind);
        Self {
            a: s(deg[0]),
            a_prime: s(deg[1]),
            b: s(deg[2]),
            b_prime: s(deg[3]),
        }
    }

    /// 0°, 45°; 22.5°, 67.5°.
    pub fn optimal_photon() -> Self {
        Self::from_degrees(ParticleKind::Photon, [0.0, 45.0, 22.5, 67.5])
    }

    /// Bin pairs in schedule order: `(a,b), (a,b′), (a′,b′), (a′,b)`.
    pub fn bin_pairs(&self) -> [(AnalyzerSetting, AnalyzerSetting); 4] {
        [
            (self.a, self.b),
            (self.a, self.b_prime),
            (self.a_prime, self.b_prime),
            (self.a_prime, self.b),
        ]
    }

    pub fn degrees(&self) -> [f64; 4] {
        [
            self.a.degrees(),
            self.a_prime.degrees(),
            self.b.degrees(),
            self.b_prime.degrees(),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleVariant {
    /// Four separate experiments, one measurement per wing per trial.
    FourBin,
    /// Two experiments with tandem analyzers: Bob measures `b` then `b′`, and on
    /// the matched clone `b′` then `b`; Alice measures `a` then `a′` in both.
    Tandem,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourBinSchedule {
    pub menu: SettingMenu,
    pub trials_per_bin: usize,
    pub variant: ScheduleVariant,
}

impl FourBinSchedule {
    pub fn new(menu: SettingMenu, trials_per_bin: usize) -> Self {
        Self {
            menu,
            trials_per_bin,
            variant: ScheduleVariant::FourBin,
        }
    }

    pub fn tandem(mut self) -> Self {
        self.variant = ScheduleVariant::Tandem;
        self
    }
}

/// Seed, parallelism and reporting knobs shared by all runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub seed: u64,
    /// Worker threads; `None` uses the global rayon pool.
    pub workers: Option<usize>,
    pub side: Side,
    pub record_trials: bool,
}

impl RunOptions {
    pub fn seeded(seed: u64) -> Self {
        Self {
            seed,
            workers: None,
            side: Side::BSide,
            record_trials: false,
        }
    }
}

fn with_workers<T: Send>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(job()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| LabError::InvalidParameter(format!("thread pool: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

/// One row of the per-trial table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub bin: u8,
    pub alice_deg: f64,
    pub bob_deg: f64,
    pub a: i8,
    pub b: i8,
}

pub fn write_trial_table<W: Write>(records: &[TrialRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "trial\tbin\talice_deg\tbob_deg\tA\tB")?;
    for r in records {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.trial, r.bin, r.alice_deg, r.bob_deg, r.a, r.b
        )?;
    }
    Ok(())
}

/// Statistics of one correlation bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinSummary {
    pub alice_deg: f64,
    pub bob_deg: f64,
    pub estimate: CorrelationEstimate,
    /// Outcome counts `[++, +−, −+, −−]`.
    pub counts: [u64; 4],
    /// `Σ AᵢBᵢ`.
    pub product_sum: i64,
}

impl BinSummary {
    fn from_counts(pair: (AnalyzerSetting, AnalyzerSetting), counts: [u64; 4]) -> Self {
        let n: u64 = counts.iter().sum();
        let product_sum = counts[0] as i64 + counts[3] as i64 - counts[1] as i64 - counts[2] as i64;
        Self {
            alice_deg: pair.0.degrees(),
            bob_deg: pair.1.degrees(),
            estimate: CorrelationEstimate::from_int_sums(product_sum, n as i64, n),
            counts,
            product_sum,
        }
    }
}

fn count_slot(a: i8, b: i8) -> usize {
    match (a, b) {
        (1, 1) => 0,
        (1, -1) => 1,
        (-1, 1) => 2,
        _ => 3,
    }
}

/// The sequential term of the time-ordered bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeOrderSummary {
    pub side: Side,
    /// `|N⁻¹Σ dᵢ|`.
    pub t_signed: f64,
    pub t_signed_stderr: f64,
    /// `N⁻¹Σ|dᵢ|`.
    pub t_abs: f64,
    pub t_abs_stderr: f64,
    /// `t_abs / t_signed` when `t_signed > 0`.
    pub f: Option<f64>,
    pub n: u64,
    /// `Σ dᵢ`, `Σ|dᵢ|` for the selected side.
    pub diff_sum: i64,
    pub abs_diff_sum: i64,
    /// `Σ|dᵢ|` for the other wing.
    pub other_side_abs_diff_sum: i64,
}

impl TimeOrderSummary {
    fn from_sums(side: Side, n: u64, diff_sum: i64, abs_diff_sum: i64, sq_sum: i64, other: i64) -> Self {
        let signed = CorrelationEstimate::from_int_sums(diff_sum, sq_sum, n);
        let abs = CorrelationEstimate::from_int_sums(abs_diff_sum, sq_sum, n);
        let t_signed = signed.mean.abs();
        let t_abs = abs.mean;
        Self {
            side,
            t_signed,
            t_signed_stderr: signed.stderr,
            t_abs,
            t_abs_stderr: abs.stderr,
            f: slack_factor(t_signed, t_abs),
            n,
            diff_sum,
            abs_diff_sum,
            other_side_abs_diff_sum: other,
        }
    }

    pub fn other_side_t_abs(&self) -> f64 {
        self.other_side_abs_diff_sum as f64 / self.n as f64
    }
}

/// `t_abs / t_signed`, undefined when `t_signed` is zero.
pub fn slack_factor(t_signed: f64, t_abs: f64) -> Option<f64> {
    (t_signed > 0.0).then(|| t_abs / t_signed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub bound: f64,
    pub value: f64,
    /// `bound − value`; negative when violated.
    pub margin: f64,
    pub stderr: f64,
    pub satisfied: bool,
}

impl Verdict {
    fn new(bound: f64, value: f64, stderr: f64) -> Self {
        let margin = bound - value;
        Self {
            bound,
            value,
            margin,
            stderr,
            satisfied: margin >= -VERDICT_TOL,
        }
    }

    /// Margin in units of the standard error (infinite when the error is zero).
    pub fn sigmas(&self) -> f64 {
        if self.stderr > 0.0 {
            self.margin / self.stderr
        } else if self.margin >= -VERDICT_TOL {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdicts {
    pub bell_2: Verdict,
    pub new_bound: Verdict,
    pub cirelson: Verdict,
}

/// Bell's bound 2, the time-ordered bound `2 + t_abs` and the Cirel'son bound.
pub fn evaluate_inequalities(chsh_lhs: f64, chsh_stderr: f64, t_abs: f64, t_abs_stderr: f64) -> Verdicts {
    let combined = chsh_stderr.hypot(t_abs_stderr);
    Verdicts {
        bell_2: Verdict::new(BELL_BOUND, chsh_lhs, chsh_stderr),
        new_bound: Verdict::new(BELL_BOUND + t_abs, chsh_lhs, combined),
        cirelson: Verdict::new(CIRELSON_BOUND, chsh_lhs, chsh_stderr),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChshReport {
    pub source: String,
    pub kind: ParticleKind,
    pub variant: String,
    /// Per bin, in schedule order.
    pub bins: [BinSummary; 4],
    pub chsh_lhs: f64,
    pub chsh_stderr: f64,
    pub time_order: Option<TimeOrderSummary>,
    pub verdicts: Verdicts,
    #[serde(skip)]
    pub records: Vec<TrialRecord>,
}

impl ChshReport {
    pub fn correlations(&self) -> [f64; 4] {
        self.bins.map(|b| b.estimate.mean)
    }

    /// `|Σ₁ − Σ₂| + |Σ₃ + Σ₄|` in integer units, i.e. `N·chsh_lhs` for equal bins.
    fn lhs_numerator(&self) -> Option<i64> {
        let n = self.bins[0].estimate.n;
        if self.bins.iter().any(|b| b.estimate.n != n) {
            return None;
        }
        let s = self.bins.map(|b| b.product_sum);
        Some((s[0] - s[1]).abs() + (s[2] + s[3]).abs())
    }

    /// `chsh_lhs ≤ 2 + t_abs` evaluated exactly on integer sums.
    pub fn time_ordered_bound_holds_exactly(&self) -> Option<bool> {
        let t = self.time_order?;
        let lhs = self.lhs_numerator()?;
        Some(lhs <= 2 * t.n as i64 + t.abs_diff_sum)
    }

    /// The two-sided identity `chsh_lhs ≤ 2 + t_abs(A) + t_abs(B)`, exact.
    pub fn two_sided_bound_holds_exactly(&self) -> Option<bool> {
        let t = self.time_order?;
        let lhs = self.lhs_numerator()?;
        Some(lhs <= 2 * t.n as i64 + t.abs_diff_sum + t.other_side_abs_diff_sum)
    }
}

/// Outcomes of one cloned element across the four bins.
#[derive(Debug, Clone, Copy, Default)]
struct ElementOutcome {
    alice: [i8; 4],
    bob: [i8; 4],
}

impl ElementOutcome {
    fn products(&self) -> [i64; 4] {
        std::array::from_fn(|k| i64::from(self.alice[k] * self.bob[k]))
    }

    /// `B₁B′₃ − B′₂B₄`.
    fn bob_difference(&self) -> i64 {
        i64::from(self.bob[0] * self.bob[2] - self.bob[1] * self.bob[3])
    }

    /// `A₁A′₃ − A₂A′₄`.
    fn alice_difference(&self) -> i64 {
        i64::from(self.alice[0] * self.alice[2] - self.alice[1] * self.alice[3])
    }
}

fn respond_chain(
    model: &dyn HiddenVariableModel,
    lambda: &HiddenVariable,
    steps: &[(Wing, AnalyzerSetting)],
    seed: u64,
    index: u64,
) -> Result<Vec<i8>> {
    let mut alice_rng = RandomStream::keyed(seed, Purpose::Alice, index);
    let mut bob_rng = RandomStream::keyed(seed, Purpose::Bob, index);
    let mut lambda = lambda.clone();
    let mut out = Vec::with_capacity(steps.len());
    for (wing, setting) in steps {
        let rng = match wing {
            Wing::Alice => &mut alice_rng,
            Wing::Bob => &mut bob_rng,
        };
        let r = model.respond(*wing, setting, &lambda, rng)?;
        out.push(r.outcome);
        lambda = r.lambda;
    }
    Ok(out)
}

fn element_outcome(
    model: &dyn HiddenVariableModel,
    lambda: &HiddenVariable,
    schedule: &FourBinSchedule,
    seed: u64,
    index: u64,
) -> Result<ElementOutcome> {
    let m = schedule.menu;
    let mut el = ElementOutcome::default();
    match schedule.variant {
        ScheduleVariant::FourBin => {
            for (k, (sa, sb)) in m.bin_pairs().into_iter().enumerate() {
                let r = respond_chain(model, lambda, &[(Wing::Alice, sa), (Wing::Bob, sb)], seed, index)?;
                el.alice[k] = r[0];
                el.bob[k] = r[1];
            }
        }
        ScheduleVariant::Tandem => {
            let forward = [
                (Wing::Alice, m.a),
                (Wing::Alice, m.a_prime),
                (Wing::Bob, m.b),
                (Wing::Bob, m.b_prime),
            ];
            let backward = [
                (Wing::Alice, m.a),
                (Wing::Alice, m.a_prime),
                (Wing::Bob, m.b_prime),
                (Wing::Bob, m.b),
            ];
            let r1 = respond_chain(model, lambda, &forward, seed, index)?;
            let r2 = respond_chain(model, lambda, &backward, seed, index)?;
            // bins: (A₁,B₁), (A₂,B′₂), (A′₃,B′₃), (A′₄,B₄)
            el.alice = [r1[0], r2[0], r1[1], r2[1]];
            el.bob = [r1[2], r2[2], r1[3], r2[3]];
        }
    }
    Ok(el)
}

fn sample_element(model: &dyn HiddenVariableModel, seed: u64, index: u64) -> HiddenVariable {
    model.sample(&mut RandomStream::keyed(seed, Purpose::Sample, index))
}

/// Runs the four-bin schedule on matched clones of one ensemble.
pub fn run_four_bin(
    model: &dyn HiddenVariableModel,
    schedule: &FourBinSchedule,
    opts: &RunOptions,
) -> Result<ChshReport> {
    let n = schedule.trials_per_bin;
    if n < 2 {
        return Err(LabError::TooFewTrials { min: 2, found: n });
    }
    let seed = opts.seed;
    let outcomes: Vec<ElementOutcome> = with_workers(opts.workers, || {
        (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let lambda = sample_element(model, seed, i);
                element_outcome(model, &lambda, schedule, seed, i)
            })
            .collect::<Result<Vec<_>>>()
    })??;

    let pairs = schedule.menu.bin_pairs();
    let mut counts = [[0u64; 4]; 4];
    let (mut uu, mut vv, mut uv, mut su, mut sv) = (0i64, 0i64, 0i64, 0i64, 0i64);
    let (mut d_b, mut abs_b, mut sq_b, mut d_a, mut abs_a, mut sq_a) = (0i64, 0i64, 0i64, 0i64, 0i64, 0i64);
    for el in &outcomes {
        for k in 0..4 {
            counts[k][count_slot(el.alice[k], el.bob[k])] += 1;
        }
        let x = el.products();
        let (u, v) = (x[0] - x[1], x[2] + x[3]);
        su += u;
        sv += v;
        uu += u * u;
        vv += v * v;
        uv += u * v;
        let (db, da) = (el.bob_difference(), el.alice_difference());
        d_b += db;
        abs_b += db.abs();
        sq_b += db * db;
        d_a += da;
        abs_a += da.abs();
        sq_a += da * da;
    }
    let bins: [BinSummary; 4] = std::array::from_fn(|k| BinSummary::from_counts(pairs[k], counts[k]));

    // Per-element z = s₁u + s₂v has mean chsh_lhs; its spread gives the paired stderr.
    let s1 = if su >= 0 { 1 } else { -1 };
    let s2 = if sv >= 0 { 1 } else { -1 };
    let z_sum = s1 * su + s2 * sv;
    let z_sq = uu + vv + 2 * s1 * s2 * uv;
    let z = CorrelationEstimate::from_int_sums(z_sum, z_sq, n as u64);

    let (selected, other) = match opts.side {
        Side::BSide => ((d_b, abs_b, sq_b), abs_a),
        Side::ASide => ((d_a, abs_a, sq_a), abs_b),
    };
    let t = TimeOrderSummary::from_sums(opts.side, n as u64, selected.0, selected.1, selected.2, other);
    let verdicts = evaluate_inequalities(z.mean, z.stderr, t.t_abs, t.t_abs_stderr);

    let records = if opts.record_trials {
        let mut records = Vec::with_capacity(4 * n);
        for (k, (sa, sb)) in pairs.iter().enumerate() {
            for (i, el) in outcomes.iter().enumerate() {
                records.push(TrialRecord {
                    trial: (k * n + i) as u64,
                    bin: k as u8 + 1,
                    alice_deg: sa.degrees(),
                    bob_deg: sb.degrees(),
                    a: el.alice[k],
                    b: el.bob[k],
                });
            }
        }
        records
    } else {
        Vec::new()
    };

    Ok(ChshReport {
        source: model.name().to_string(),
        kind: schedule.menu.a.kind,
        variant: match schedule.variant {
            ScheduleVariant::FourBin => "four-bin".into(),
            ScheduleVariant::Tandem => "tandem".into(),
        },
        bins,
        chsh_lhs: z.mean,
        chsh_stderr: z.stderr,
        time_order: Some(t),
        verdicts,
        records,
    })
}

/// Combines four independent bin estimates into `chsh_lhs` with a quadrature stderr.
pub fn chsh_from_bins(bins: &[BinSummary; 4]) -> (f64, f64) {
    let e = bins.map(|b| b.estimate);
    let lhs = (e[0].mean - e[1].mean).abs() + (e[2].mean + e[3].mean).abs();
    let var: f64 = e.iter().map(|x| x.stderr * x.stderr).sum();
    (lhs, var.sqrt())
}

/// Random-order schedule: every trial picks Alice's and Bob's settings uniformly
/// and independently, and records are binned afterwards.
pub fn random_settings_run(
    model: &dyn HiddenVariableModel,
    menu: &SettingMenu,
    n: usize,
    opts: &RunOptions,
) -> Result<ChshReport> {
    if n < 8 {
        return Err(LabError::TooFewTrials { min: 8, found: n });
    }
    let seed = opts.seed;
    let alice_menu = [menu.a, menu.a_prime];
    let bob_menu = [menu.b, menu.b_prime];
    let trials: Vec<(usize, i8, i8)> = with_workers(opts.workers, || {
        (0..n as u64)
            .into_par_iter()
            .map(|t| {
                let mut pick = RandomStream::keyed(seed, Purpose::Settings, t);
                let (ai, bi) = (pick.index(2), pick.index(2));
                let lambda = sample_element(model, seed, t);
                let r = respond_chain(
                    model,
                    &lambda,
                    &[(Wing::Alice, alice_menu[ai]), (Wing::Bob, bob_menu[bi])],
                    seed,
                    t,
                )?;
                let bin = match (ai, bi) {
                    (0, 0) => 0,
                    (0, _) => 1,
                    (_, 1) => 2,
                    _ => 3,
                };
                Ok((bin, r[0], r[1]))
            })
            .collect::<Result<Vec<_>>>()
    })??;

    let pairs = menu.bin_pairs();
    let mut counts = [[0u64; 4]; 4];
    for &(bin, a, b) in &trials {
        counts[bin][count_slot(a, b)] += 1;
    }
    for (k, c) in counts.iter().enumerate() {
        let total: u64 = c.iter().sum();
        if total < 2 {
            return Err(LabError::UndefinedCorrelation(format!(
                "bin {} has {total} trials",
                k + 1
            )));
        }
    }
    let bins: [BinSummary; 4] = std::array::from_fn(|k| BinSummary::from_counts(pairs[k], counts[k]));
    let (lhs, stderr) = chsh_from_bins(&bins);
    let verdicts = evaluate_inequalities(lhs, stderr, 0.0, 0.0);
    let records = if opts.record_trials {
        trials
            .iter()
            .enumerate()
            .map(|(t, &(bin, a, b))| TrialRecord {
                trial: t as u64,
                bin: bin as u8 + 1,
                alice_deg: pairs[bin].0.degrees(),
                bob_deg: pairs[bin].1.degrees(),
                a,
                b,
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(ChshReport {
        source: model.name().to_string(),
        kind: menu.a.kind,
        variant: "random-settings".into(),
        bins,
        chsh_lhs: lhs,
        chsh_stderr: stderr,
        time_order: None,
        verdicts,
        records,
    })
}

/// Both orders of a sequential measurement on one cloned element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequentialSample {
    pub index: u64,
    /// Product of the two outcomes in order (first, second).
    pub forward: i8,
    /// Product in order (second, first), same initial state and draws.
    pub backward: i8,
}

impl SequentialSample {
    pub fn difference(&self) -> i64 {
        i64::from(self.forward - self.backward)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeOrderTerm {
    pub summary: TimeOrderSummary,
    /// `E[first·second]` estimated in each order.
    pub forward: CorrelationEstimate,
    pub backward: CorrelationEstimate,
    pub trace: Vec<SequentialSample>,
}

/// Tandem measurement on one wing: each cloned element is measured at `first`
/// then `second`, and an identical clone at `second` then `first`.
pub fn time_order_term(
    model: &dyn HiddenVariableModel,
    first: AnalyzerSetting,
    second: AnalyzerSetting,
    n: usize,
    opts: &RunOptions,
) -> Result<TimeOrderTerm> {
    if n < 2 {
        return Err(LabError::TooFewTrials { min: 2, found: n });
    }
    let seed = opts.seed;
    let wing = opts.side.wing();
    let trace: Vec<SequentialSample> = with_workers(opts.workers, || {
        (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let lambda = sample_element(model, seed, i);
                let run = |x: AnalyzerSetting, y: AnalyzerSetting| -> Result<i8> {
                    let mut rng = RandomStream::keyed(seed, Purpose::Sequential, i);
                    let r1 = model.respond(wing, &x, &lambda, &mut rng)?;
                    let r2 = model.respond(wing, &y, &r1.lambda, &mut rng)?;
                    Ok(r1.outcome * r2.outcome)
                };
                Ok(SequentialSample {
                    index: i,
                    forward: run(first, second)?,
                    backward: run(second, first)?,
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;

    let (mut d, mut abs, mut sq) = (0i64, 0i64, 0i64);
    let (mut fw, mut bw) = (0i64, 0i64);
    for s in &trace {
        let diff = s.difference();
        d += diff;
        abs += diff.abs();
        sq += diff * diff;
        fw += i64::from(s.forward);
        bw += i64::from(s.backward);
    }
    let n64 = n as u64;
    Ok(TimeOrderTerm {
        summary: TimeOrderSummary::from_sums(opts.side, n64, d, abs, sq, 0),
        forward: CorrelationEstimate::from_int_sums(fw, n as i64, n64),
        backward: CorrelationEstimate::from_int_sums(bw, n as i64, n64),
        trace,
    })
}

/// `E[s₁s₂]` for two successive Lüders measurements on one wing of `state`,
/// by summing over the four outcome branches.
pub fn sequential_correlation_exact(
    state: &QuantumState,
    wing: Wing,
    first: &AnalyzerSetting,
    second: &AnalyzerSetting,
) -> Result<f64> {
    let m1 = QmOracle::local_observable(wing, first);
    let m2 = QmOracle::local_observable(wing, second);
    let mut total = 0.0;
    for s1 in [1i8, -1] {
        let p1 = 0.5 * (1.0 + f64::from(s1) * qcore::expectation(state, &m1)?.re);
        if p1 <= qcore::DEGENERACY_FLOOR {
            continue;
        }
        let (_, post) = qcore::project(state, &m1, s1)?;
        for s2 in [1i8, -1] {
            let p2 = 0.5 * (1.0 + f64::from(s2) * qcore::expectation(&post, &m2)?.re);
            total += f64::from(s1 * s2) * p1 * p2;
        }
    }
    Ok(total)
}
