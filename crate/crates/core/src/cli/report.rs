//! Versioned run reports: a JSON document for machines and a text rendering for
//! people.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{Mode, RunConfig};
use crate::harness::{ChshReport, TimeOrderSummary, Verdict};
use crate::stats::CorrelationEstimate;

pub const SCHEMA_VERSION: &str = "1.0";
pub const SCHEMA_MAJOR: u64 = 1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("report is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("report has no schema_version")]
    MissingVersion,
    #[error("unsupported report schema version {found} (this build reads {SCHEMA_MAJOR}.x)")]
    UnsupportedVersion { found: String },
}

/// Closed-form expectations for the configured source and menu.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticSummary {
    /// `E(a,b), E(a,b′), E(a′,b′), E(a′,b)`.
    pub correlations: [f64; 4],
    pub chsh_lhs: f64,
    /// `⟨S⟩` and `⟨S²⟩` for two-qubit sources.
    pub s_expectation: Option<f64>,
    pub s_squared: Option<f64>,
    /// Best polarizer menu for the `ou-mandel` source.
    pub optimum_deg: Option<[f64; 4]>,
    pub optimum_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialReport {
    pub first_deg: f64,
    pub second_deg: f64,
    pub summary: TimeOrderSummary,
    /// `E[first·second]` in each order.
    pub forward: CorrelationEstimate,
    pub backward: CorrelationEstimate,
    /// Exact Lüders values for quantum sources.
    pub exact_forward: Option<f64>,
    pub exact_backward: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityChecks {
    /// Largest `‖S² − (4I − [X,X′]⊗[Y,Y′])‖_max` over random menus.
    pub bell_square_residual: f64,
    pub bell_square_samples: usize,
    /// Largest deviation of `[A(a),A(a′)]` from `2iσ_y sin k(a′−a)`.
    pub commutator_residual: f64,
    pub commutator_samples: usize,
    /// Largest `|ψ − ψ_factorized|` (four-term state vs product form) over random beam splitters.
    pub factorization_residual: f64,
    pub factorization_samples: usize,
    /// Largest `‖S‖` seen in the Bell-square sweep.
    pub max_bell_norm: f64,
    /// At the configured menu.
    pub s_squared_product: f64,
    pub s_squared_singlet: f64,
    pub s_singlet: f64,
    pub max_eigenvalue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema_version: String,
    pub software_version: String,
    pub seed: u64,
    pub config: RunConfig,
    pub chsh: Option<ChshReport>,
    pub analytic: Option<AnalyticSummary>,
    pub sequential: Option<SequentialReport>,
    pub identity_checks: Option<IdentityChecks>,
}

impl ReportDocument {
    pub fn new(config: RunConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.into(),
            software_version: env!("CARGO_PKG_VERSION").into(),
            seed: config.seed,
            config,
            chsh: None,
            analytic: None,
            sequential: None,
            identity_checks: None,
        }
    }

    pub fn to_json(&self) -> Result<String, ReportError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Rejects documents whose major schema version differs from this build's.
    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let version = value
            .get("schema_version")
            .and_then(|v| v.as_str())
            .ok_or(ReportError::MissingVersion)?;
        let major = version.split('.').next().and_then(|m| m.parse::<u64>().ok());
        if major != Some(SCHEMA_MAJOR) {
            return Err(ReportError::UnsupportedVersion {
                found: version.to_string(),
            });
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let c = &self.config;
        let _ = writeln!(
            s,
            "bell-lab {}  mode={}  source={}  kind={}  seed={}",
            self.software_version,
            c.mode.as_str(),
            c.source.label(),
            c.kind.as_str(),
            self.seed
        );
        if c.mode != Mode::IdentityChecks {
            let [a, ap, b, bp] = c.angles_deg;
            let _ = writeln!(s, "menu: a={a}° a′={ap}° b={b}° b′={bp}°  trials={}", c.trials);
        }
        if let Some(r) = &self.chsh {
            render_chsh(&mut s, r);
        }
        if let Some(a) = &self.analytic {
            let [e1, e2, e3, e4] = a.correlations;
            let _ = writeln!(
                s,
                "closed form: E = [{e1:+.6}, {e2:+.6}, {e3:+.6}, {e4:+.6}]  chsh_lhs = {:.6}",
                a.chsh_lhs
            );
            if let (Some(v), Some(v2)) = (a.s_expectation, a.s_squared) {
                let _ = writeln!(s, "  ⟨S⟩ = {v:+.6}  ⟨S²⟩ = {v2:.6}");
            }
            if let (Some(m), Some(v)) = (a.optimum_deg, a.optimum_value) {
                let _ = writeln!(
                    s,
                    "  optimal polarizers: a={:.4}° a′={:.4}° b={:.4}° b′={:.4}°  chsh_lhs = {v:.9}",
                    m[0], m[1], m[2], m[3]
                );
            }
        }
        if let Some(q) = &self.sequential {
            let t = &q.summary;
            let _ = writeln!(
                s,
                "sequential ({}) {}° then {}°: E_fwd = {:+.5} ± {:.5}  E_bwd = {:+.5} ± {:.5}",
                t.side.as_str(),
                q.first_deg,
                q.second_deg,
                q.forward.mean,
                q.forward.stderr,
                q.backward.mean,
                q.backward.stderr
            );
            if let (Some(f), Some(b)) = (q.exact_forward, q.exact_backward) {
                let _ = writeln!(s, "  exact: E_fwd = {f:+.6}  E_bwd = {b:+.6}");
            }
            render_time_order(&mut s, t);
        }
        if let Some(x) = &self.identity_checks {
            let _ = writeln!(
                s,
                "S² identity: max residual {:.3e} over {} menus",
                x.bell_square_residual, x.bell_square_samples
            );
            let _ = writeln!(
                s,
                "commutator closed form: max residual {:.3e} over {} pairs",
                x.commutator_residual, x.commutator_samples
            );
            let _ = writeln!(
                s,
                "two-photon factorization: max residual {:.3e} over {} splitters",
                x.factorization_residual, x.factorization_samples
            );
            let _ = writeln!(s, "max ‖S‖ over sweep: {:.12}", x.max_bell_norm);
            let _ = writeln!(
                s,
                "at menu: ⟨HV|S²|HV⟩ = {:.12}  ⟨ψ⁻|S²|ψ⁻⟩ = {:.12}  ⟨ψ⁻|S|ψ⁻⟩ = {:+.12}  max|eig S| = {:.12}",
                x.s_squared_product, x.s_squared_singlet, x.s_singlet, x.max_eigenvalue
            );
        }
        s
    }
}

fn render_chsh(s: &mut String, r: &ChshReport) {
    let _ = writeln!(s, "{} run, source {}:", r.variant, r.source);
    for (k, b) in r.bins.iter().enumerate() {
        let _ = writeln!(
            s,
            "  bin {} ({:>7.2}°, {:>7.2}°): E = {:+.5} ± {:.5}  counts ++ {} +− {} −+ {} −− {}",
            k + 1,
            b.alice_deg,
            b.bob_deg,
            b.estimate.mean,
            b.estimate.stderr,
            b.counts[0],
            b.counts[1],
            b.counts[2],
            b.counts[3]
        );
    }
    let _ = writeln!(s, "  chsh_lhs = {:.5} ± {:.5}", r.chsh_lhs, r.chsh_stderr);
    if let Some(t) = &r.time_order {
        render_time_order(s, t);
    }
    render_verdict(s, "Bell (2)", &r.verdicts.bell_2);
    if r.time_order.is_some() {
        render_verdict(s, "time-ordered (2 + t_abs)", &r.verdicts.new_bound);
    }
    render_verdict(s, "Cirel'son (2√2)", &r.verdicts.cirelson);
    if let Some(exact) = r.time_ordered_bound_holds_exactly() {
        let _ = writeln!(
            s,
            "  time-ordered bound on integer sums: {}",
            if exact { "holds" } else { "VIOLATED" }
        );
    }
}

fn render_time_order(s: &mut String, t: &TimeOrderSummary) {
    let f = t.f.map_or_else(|| "undefined".to_string(), |f| format!("{f:.4}"));
    let _ = writeln!(
        s,
        "  time-order term ({}): t_signed = {:.5} ± {:.5}  t_abs = {:.5} ± {:.5}  f = {f}",
        t.side.as_str(),
        t.t_signed,
        t.t_signed_stderr,
        t.t_abs,
        t.t_abs_stderr
    );
}

fn render_verdict(s: &mut String, label: &str, v: &Verdict) {
    let _ = writeln!(
        s,
        "  {label}: bound {:.5}  {}  (margin {:+.5}, {:.1}σ)",
        v.bound,
        if v.satisfied { "satisfied" } else { "violated" },
        v.margin,
        v.sigmas()
    );
}
