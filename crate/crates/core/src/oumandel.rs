//! Second-quantized two-photon beam-splitter model and post-selected coincidences.
//!
//! An x-polarized and a y-polarized photon meet a beam splitter and leave toward
//! detector 1 or 2. The output state lives on four two-photon kets, in this order:
//!
//! | index | ket          | amplitude      |
//! |-------|--------------|----------------|
//! | 0     | `|1₁ₓ,1₂ᵧ⟩`  | `√(TxTy)`      |
//! | 1     | `|1₁ᵧ,1₂ₓ⟩`  | `√(RxRy)`      |
//! | 2     | `|1₁ₓ,1₁ᵧ⟩`  | `−i√(RyTx)`    |
//! | 3     | `|1₂ₓ,1₂ᵧ⟩`  | `+i√(RxTy)`    |
//!
//! Each detector sits behind a polarizer; detector `d` at angle `θ` annihilates
//! the mode `cos θ·a_dx + sin θ·a_dy`. A coincidence needs one photon per
//! detector, so kets 2 and 3 never contribute.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::harness::{chsh_from_bins, evaluate_inequalities, BinSummary, ChshReport, RunOptions, SettingMenu};
use crate::observables::{AnalyzerSetting, ParticleKind};
use crate::qcore::IDENTITY_TOL;
use crate::rng::{Purpose, RandomStream};
use crate::stats::CorrelationEstimate;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Coincidence rates are scaled so that the four post-selection channels sum to
/// one for a balanced splitter.
pub const RATE_NORMALIZATION: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamSplitterParams {
    pub tx: f64,
    pub rx: f64,
    pub ty: f64,
    pub ry: f64,
}

impl BeamSplitterParams {
    pub fn new(tx: f64, rx: f64, ty: f64, ry: f64) -> Result<Self> {
        for (name, v) in [("Tx", tx), ("Rx", rx), ("Ty", ty), ("Ry", ry)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(LabError::InvalidParameter(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if (tx + rx - 1.0).abs() > IDENTITY_TOL || (ty + ry - 1.0).abs() > IDENTITY_TOL {
            return Err(LabError::InvalidParameter(format!(
                "T + R must be 1 per polarization (Tx+Rx = {}, Ty+Ry = {})",
                tx + rx,
                ty + ry
            )));
        }
        Ok(Self { tx, rx, ty, ry })
    }

    /// Lossless splitter with the given transmissions.
    pub fn from_transmissions(tx: f64, ty: f64) -> Result<Self> {
        Self::new(tx, 1.0 - tx, ty, 1.0 - ty)
    }

    pub fn balanced() -> Self {
        Self {
            tx: 0.5,
            rx: 0.5,
            ty: 0.5,
            ry: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FockTwoPhotonState {
    pub amplitudes: [Complex64; 4],
}

impl FockTwoPhotonState {
    pub fn norm_sq(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

pub fn ou_mandel_state(p: &BeamSplitterParams) -> FockTwoPhotonState {
    FockTwoPhotonState {
        amplitudes: [
            Complex64::new((p.tx * p.ty).sqrt(), 0.0),
            Complex64::new((p.rx * p.ry).sqrt(), 0.0),
            -I * (p.ry * p.tx).sqrt(),
            I * (p.rx * p.ty).sqrt(),
        ],
    }
}

/// Ket index for the x photon at detector `dx` and the y photon at `dy` (1 or 2).
fn ket_index(dx: usize, dy: usize) -> usize {
    match (dx, dy) {
        (1, 2) => 0,
        (2, 1) => 1,
        (1, 1) => 2,
        (2, 2) => 3,
        _ => unreachable!("detectors are 1 and 2"),
    }
}

/// The product `|ψₓ⟩|ψᵧ⟩` of the two single-photon states, expanded on the kets.
pub fn factorized_state(p: &BeamSplitterParams) -> FockTwoPhotonState {
    // Amplitude of each photon to reach detector 1 or 2.
    let x_photon = [Complex64::new(p.tx.sqrt(), 0.0), I * p.rx.sqrt()];
    let y_photon = [-I * p.ry.sqrt(), Complex64::new(p.ty.sqrt(), 0.0)];
    let mut amplitudes = [Complex64::new(0.0, 0.0); 4];
    for (dx, ax) in x_photon.iter().enumerate() {
        for (dy, ay) in y_photon.iter().enumerate() {
            amplitudes[ket_index(dx + 1, dy + 1)] += ax * ay;
        }
    }
    FockTwoPhotonState { amplitudes }
}

/// Largest amplitude difference between the four-term state and its factorized form.
pub fn factorization_residual(p: &BeamSplitterParams) -> f64 {
    ou_mandel_state(p).max_abs_diff(&factorized_state(p))
}

/// Polarizer angles in front of detectors 1 and 2, in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarizerPair {
    pub theta_a: f64,
    pub theta_b: f64,
}

impl PolarizerPair {
    pub fn new(theta_a: f64, theta_b: f64) -> Self {
        Self { theta_a, theta_b }
    }

    pub fn degrees(a: f64, b: f64) -> Self {
        Self::new(a.to_radians(), b.to_radians())
    }
}

/// Whether the detection fields annihilate (physical) or create photons, as the
/// written field operators literally read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    Annihilation,
    Creation,
}

impl std::str::FromStr for Convention {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "annihilation" => Ok(Convention::Annihilation),
            "creation" => Ok(Convention::Creation),
            other => Err(format!("unknown convention `{other}` (expected annihilation|creation)")),
        }
    }
}

/// `⟨0|Ê₂Ê₁|ket⟩` for one basis ket: each detector removes one photon along its
/// polarizer axis.
fn detection_coefficient(ket: usize, pol: &PolarizerPair) -> f64 {
    let (sa, ca) = pol.theta_a.sin_cos();
    let (sb, cb) = pol.theta_b.sin_cos();
    match ket {
        0 => ca * sb, // x at detector 1, y at detector 2
        1 => sa * cb, // y at detector 1, x at detector 2
        _ => 0.0,     // both photons at one detector
    }
}

pub fn coincidence_amplitude(p: &BeamSplitterParams, pol: &PolarizerPair, convention: Convention) -> Complex64 {
    match convention {
        Convention::Annihilation => ou_mandel_state(p)
            .amplitudes
            .iter()
            .enumerate()
            .map(|(k, c)| c * detection_coefficient(k, pol))
            .sum(),
        // Creation operators raise the photon number to four; no vacuum overlap.
        Convention::Creation => Complex64::new(0.0, 0.0),
    }
}

/// Normalized coincidence rate `2·|⟨0|Ê₁Ê₂|ψ⟩|²`.
pub fn coincidence_probability(p: &BeamSplitterParams, pol: &PolarizerPair) -> f64 {
    coincidence_probability_with(p, pol, Convention::Annihilation)
}

pub fn coincidence_probability_with(p: &BeamSplitterParams, pol: &PolarizerPair, convention: Convention) -> f64 {
    RATE_NORMALIZATION * coincidence_amplitude(p, pol, convention).norm_sqr()
}

/// Rates `[P(θ,θ′), P(θ,θ′⊥), P(θ⊥,θ′), P(θ⊥,θ′⊥)]` with `⊥ = +90°`.
pub fn channel_rates(p: &BeamSplitterParams, theta_a: f64, theta_b: f64, convention: Convention) -> [f64; 4] {
    let perp = std::f64::consts::FRAC_PI_2;
    let rate = |a: f64, b: f64| coincidence_probability_with(p, &PolarizerPair::new(a, b), convention);
    [
        rate(theta_a, theta_b),
        rate(theta_a, theta_b + perp),
        rate(theta_a + perp, theta_b),
        rate(theta_a + perp, theta_b + perp),
    ]
}

/// Post-selected correlation `(P₊₊ + P₋₋ − P₊₋ − P₋₊) / ΣP`.
pub fn post_selected_correlation(
    p: &BeamSplitterParams,
    theta_a: f64,
    theta_b: f64,
    convention: Convention,
) -> Result<f64> {
    let r = channel_rates(p, theta_a, theta_b, convention);
    let total: f64 = r.iter().sum();
    if total < 1e-15 {
        return Err(LabError::UndefinedCorrelation(format!(
            "no coincidences at θa = {:.4}°, θb = {:.4}°",
            theta_a.to_degrees(),
            theta_b.to_degrees()
        )));
    }
    Ok((r[0] + r[3] - r[1] - r[2]) / total)
}

/// `|E(a,b) − E(a,b′)| + |E(a′,b′) + E(a′,b)|` from coincidence correlations
/// (angles in radians).
pub fn chsh_from_coincidences(p: &BeamSplitterParams, alice: [f64; 2], bob: [f64; 2]) -> Result<f64> {
    chsh_from_coincidences_with(p, alice, bob, Convention::Annihilation)
}

pub fn chsh_from_coincidences_with(
    p: &BeamSplitterParams,
    alice: [f64; 2],
    bob: [f64; 2],
    convention: Convention,
) -> Result<f64> {
    let e = |a: f64, b: f64| post_selected_correlation(p, a, b, convention);
    let [a, ap] = alice;
    let [b, bp] = bob;
    Ok((e(a, b)? - e(a, bp)?).abs() + (e(ap, bp)? + e(ap, b)?).abs())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizedMenu {
    /// `[a, a′, b, b′]` in radians.
    pub angles: [f64; 4],
    pub value: f64,
}

impl OptimizedMenu {
    pub fn degrees(&self) -> [f64; 4] {
        self.angles.map(f64::to_degrees)
    }
}

fn menu_value(p: &BeamSplitterParams, x: &[f64; 4]) -> f64 {
    chsh_from_coincidences(p, [x[0], x[1]], [x[2], x[3]]).unwrap_or(f64::NEG_INFINITY)
}

/// Golden-section maximization of `f` on `[lo, hi]`.
fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol {
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Maximizes the coincidence CHSH value over all four polarizer angles: a coarse
/// grid on `[0°, 180°)`, then cyclic golden-section refinement of each angle to
/// 1e−8 rad.
pub fn optimize_chsh_menu(p: &BeamSplitterParams) -> OptimizedMenu {
    const STEPS: usize = 24;
    let step = std::f64::consts::PI / STEPS as f64;
    let mut best = (0..STEPS.pow(4))
        .into_par_iter()
        .map(|code| {
            let x: [f64; 4] = std::array::from_fn(|k| ((code / STEPS.pow(3 - k as u32)) % STEPS) as f64 * step);
            (menu_value(p, &x), x)
        })
        .reduce(
            || (f64::NEG_INFINITY, [0.0; 4]),
            // ties broken by lexicographic angle order so the result is thread-count independent
            |l, r| match l.0.total_cmp(&r.0) {
                std::cmp::Ordering::Greater => l,
                std::cmp::Ordering::Less => r,
                std::cmp::Ordering::Equal => {
                    if l.1.iter().zip(&r.1).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne())
                        == Some(std::cmp::Ordering::Greater)
                    {
                        r
                    } else {
                        l
                    }
                }
            },
        );

    let mut radius = step;
    for _ in 0..200 {
        let before = best.0;
        for k in 0..4 {
            let mut x = best.1;
            let centre = x[k];
            let arg = golden_max(
                |t| {
                    let mut y = x;
                    y[k] = t;
                    menu_value(p, &y)
                },
                centre - radius,
                centre + radius,
                1e-8,
            );
            x[k] = arg;
            let v = menu_value(p, &x);
            if v > best.0 {
                best = (v, x);
            }
        }
        if best.0 - before < 1e-15 {
            break;
        }
        radius = (radius * 0.7).max(1e-4);
    }
    OptimizedMenu {
        angles: best.1,
        value: best.0,
    }
}

const CLICK_CHUNK: u64 = 4096;

/// Multinomial sampling of `n` post-selected coincidence events over the four
/// polarizer channels. Returns counts `[++, +−, −+, −−]`.
pub fn sample_coincidences(
    p: &BeamSplitterParams,
    theta_a: f64,
    theta_b: f64,
    n: u64,
    seed: u64,
    bin: u64,
    convention: Convention,
) -> Result<[u64; 4]> {
    let r = channel_rates(p, theta_a, theta_b, convention);
    let total: f64 = r.iter().sum();
    if total < 1e-15 {
        return Err(LabError::UndefinedCorrelation("no coincidences to sample".into()));
    }
    let cdf = [r[0] / total, (r[0] + r[1]) / total, (r[0] + r[1] + r[2]) / total];
    let chunks = n.div_ceil(CLICK_CHUNK);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = RandomStream::keyed(seed, Purpose::Clicks, (bin << 32) | c);
            let len = CLICK_CHUNK.min(n - c * CLICK_CHUNK);
            let mut counts = [0u64; 4];
            for _ in 0..len {
                let u = rng.uniform();
                let slot = cdf.iter().position(|&edge| u < edge).unwrap_or(3);
                counts[slot] += 1;
            }
            counts
        })
        .reduce(|| [0u64; 4], |a, b| std::array::from_fn(|k| a[k] + b[k]));
    Ok(counts)
}

/// CHSH report from sampled coincidence events, `n` per correlation bin.
pub fn coincidence_report(
    p: &BeamSplitterParams,
    menu: &SettingMenu,
    n: usize,
    convention: Convention,
    opts: &RunOptions,
) -> Result<ChshReport> {
    if n < 2 {
        return Err(LabError::TooFewTrials { min: 2, found: n });
    }
    let pairs = menu.bin_pairs();
    let mut bins = Vec::with_capacity(4);
    for (k, (sa, sb)) in pairs.iter().enumerate() {
        let counts = sample_coincidences(p, sa.angle, sb.angle, n as u64, opts.seed, k as u64, convention)?;
        let product_sum = counts[0] as i64 + counts[3] as i64 - counts[1] as i64 - counts[2] as i64;
        bins.push(BinSummary {
            alice_deg: sa.degrees(),
            bob_deg: sb.degrees(),
            estimate: CorrelationEstimate::from_int_sums(product_sum, n as i64, n as u64),
            counts,
            product_sum,
        });
    }
    let bins: [BinSummary; 4] = bins.try_into().expect("four bins");
    let (lhs, stderr) = chsh_from_bins(&bins);
    Ok(ChshReport {
        source: "ou-mandel".into(),
        kind: ParticleKind::Photon,
        variant: "coincidence".into(),
        bins,
        chsh_lhs: lhs,
        chsh_stderr: stderr,
        time_order: None,
        verdicts: evaluate_inequalities(lhs, stderr, 0.0, 0.0),
        records: Vec::new(),
    })
}

/// Closed-form post-selected correlation for the menu's analyzer settings.
pub fn analytic_correlations(p: &BeamSplitterParams, menu: &SettingMenu) -> Result<[f64; 4]> {
    let pairs = menu.bin_pairs();
    let mut out = [0.0; 4];
    for (k, (a, b)) in pairs.iter().enumerate() {
        out[k] = post_selected_correlation(p, a.angle, b.angle, Convention::Annihilation)?;
    }
    Ok(out)
}

/// Convenience for polarizer settings expressed as analyzer settings.
pub fn polarizers(a: &AnalyzerSetting, b: &AnalyzerSetting) -> PolarizerPair {
    PolarizerPair::new(a.angle, b.angle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::SQRT_2;

    #[test]
    fn fully_transmitting_is_single_ket() {
        let s = ou_mandel_state(&BeamSplitterParams::from_transmissions(1.0, 1.0).unwrap());
        assert_eq!(s.amplitudes[0], Complex64::new(1.0, 0.0));
        assert!(s.amplitudes[1..].iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn balanced_amplitudes() {
        let s = ou_mandel_state(&BeamSplitterParams::balanced());
        let expected = [
            Complex64::new(0.5, 0.0),
            Complex64::new(0.5, 0.0),
            Complex64::new(0.0, -0.5),
            Complex64::new(0.0, 0.5),
        ];
        for (a, b) in s.amplitudes.iter().zip(&expected) {
            assert!((a - b).norm() < 1e-15);
        }
        assert!((s.norm_sq() - 1.0).abs() < IDENTITY_TOL);
    }

    #[test]
    fn factorization_at_corners() {
        assert!(factorization_residual(&BeamSplitterParams::balanced()) < IDENTITY_TOL);
        let corner = BeamSplitterParams::from_transmissions(1.0, 0.0).unwrap();
        assert!(factorization_residual(&corner) < IDENTITY_TOL);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(BeamSplitterParams::new(0.6, 0.6, 0.5, 0.5).is_err());
        assert!(BeamSplitterParams::new(1.2, -0.2, 0.5, 0.5).is_err());
    }

    #[test]
    fn balanced_coincidences() {
        let p = BeamSplitterParams::balanced();
        assert!(coincidence_probability(&p, &PolarizerPair::degrees(0.0, 0.0)) < 1e-15);
        let peak = coincidence_probability(&p, &PolarizerPair::degrees(0.0, 90.0));
        assert!((peak - 0.5).abs() < 1e-15);
        for a in 0..18 {
            for b in 0..18 {
                let pol = PolarizerPair::degrees(10.0 * a as f64, 10.0 * b as f64);
                assert!(coincidence_probability(&p, &pol) <= peak + 1e-15);
            }
        }
    }

    #[test]
    fn creation_convention_never_clicks() {
        let p = BeamSplitterParams::balanced();
        let pol = PolarizerPair::degrees(0.0, 90.0);
        assert_eq!(coincidence_probability_with(&p, &pol, Convention::Creation), 0.0);
        let err = post_selected_correlation(&p, 0.0, 1.0, Convention::Creation).unwrap_err();
        assert!(matches!(err, LabError::UndefinedCorrelation(_)));
    }

    #[test]
    fn degenerate_menu_is_classical() {
        let p = BeamSplitterParams::balanced();
        let t = 0.3;
        assert!(chsh_from_coincidences(&p, [t, t], [t, t]).unwrap() <= 2.0 + 1e-12);
    }

    #[test]
    fn optimum_for_balanced_splitter() {
        let best = optimize_chsh_menu(&BeamSplitterParams::balanced());
        assert!((best.value - 2.0 * SQRT_2).abs() < 1e-6, "{}", best.value);
    }

    #[test]
    fn sampled_counts_sum_to_n() {
        let p = BeamSplitterParams::balanced();
        let counts = sample_coincidences(&p, 0.2, 0.9, 10_001, 5, 0, Convention::Annihilation).unwrap();
        assert_eq!(counts.iter().sum::<u64>(), 10_001);
    }
}
