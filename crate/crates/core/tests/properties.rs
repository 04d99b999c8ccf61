use std::f64::consts::{SQRT_2, TAU};

use num_complex::Complex64;
use proptest::prelude::*;

use bell_lab::cli::{ReportDocument, RunConfig};
use bell_lab::harness::{run_four_bin, time_order_term, FourBinSchedule, RunOptions, SettingMenu, Side};
use bell_lab::hvt::{builtin_models, CollapseRotation, HiddenVariableModel, StaticSign, Wing};
use bell_lab::observables::{
    analyzer_observable, bell_operator, bell_operator_with, bell_squared_residual, chsh_expectation, commutator,
    sigma_y_coefficient, AnalyzerSetting, BellForm, ParticleKind,
};
use bell_lab::oumandel::{self, BeamSplitterParams, Convention};
use bell_lab::qcore::{self, QuantumState};
use bell_lab::rng::RandomStream;
use bell_lab::stats::CorrelationEstimate;

fn kind() -> impl Strategy<Value = ParticleKind> {
    prop_oneof![Just(ParticleKind::Photon), Just(ParticleKind::Electron)]
}

fn angle() -> impl Strategy<Value = f64> {
    -TAU..TAU
}

fn two_qubit_state() -> impl Strategy<Value = QuantumState> {
    prop::array::uniform8(-1.0f64..1.0)
        .prop_filter("non-zero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-3)
        .prop_map(|v| {
            let amps = (0..4).map(|k| Complex64::new(v[2 * k], v[2 * k + 1])).collect();
            QuantumState::normalized(amps).unwrap()
        })
}

fn local_model() -> impl Strategy<Value = usize> {
    0usize..3
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn bell_square_identity(k in kind(), a in angle(), ap in angle(), b in angle(), bp in angle(), op in any::<bool>()) {
        let form = if op { BellForm::Operator } else { BellForm::Chsh };
        let s = [a, ap, b, bp].map(|x| AnalyzerSetting::new(x, k));
        let set = bell_operator_with(form, s[0], s[1], s[2], s[3]).unwrap();
        prop_assert!(bell_squared_residual(&set) < 1e-12);
        prop_assert!(set.s.is_hermitian());
    }

    #[test]
    fn commutator_closed_form(k in kind(), a in angle(), ap in angle()) {
        let (x, y) = (AnalyzerSetting::new(a, k), AnalyzerSetting::new(ap, k));
        let c = commutator(&analyzer_observable(&x), &analyzer_observable(&y)).unwrap();
        let coeff = sigma_y_coefficient(&c).unwrap();
        prop_assert!((coeff - (k.multiplier() * (ap - a)).sin()).abs() < 1e-12);
        // Antisymmetry.
        let back = commutator(&analyzer_observable(&y), &analyzer_observable(&x)).unwrap();
        prop_assert!(back.max_abs_diff(&c.scale_real(-1.0)).unwrap() < 1e-12);
    }

    #[test]
    fn analyzers_are_involutions(k in kind(), a in angle()) {
        let m = analyzer_observable(&AnalyzerSetting::new(a, k));
        prop_assert!(m.is_hermitian() && m.is_involutory());
        // Rotating by π/k flips the observable.
        let flipped = analyzer_observable(&AnalyzerSetting::new(a + k.orthogonal_offset(), k));
        prop_assert!(flipped.max_abs_diff(&m.scale_real(-1.0)).unwrap() < 1e-12);
    }

    #[test]
    fn cirelson_bound(k in kind(), a in angle(), ap in angle(), b in angle(), bp in angle(), psi in two_qubit_state()) {
        let s = [a, ap, b, bp].map(|x| AnalyzerSetting::new(x, k));
        let set = bell_operator(s[0], s[1], s[2], s[3]).unwrap();
        prop_assert!(set.norm() <= 2.0 * SQRT_2 + 1e-12);
        let e = chsh_expectation(&psi, &set).unwrap();
        prop_assert!(e.value.abs() <= 2.0 * SQRT_2 + 1e-12);
        prop_assert!(e.chsh_lhs() <= 2.0 * SQRT_2 + 1e-12);
    }

    #[test]
    fn lueders_post_state_is_an_eigenvector(a in angle(), psi in two_qubit_state(), u in 0.0f64..1.0, wing in any::<bool>()) {
        let w = if wing { Wing::Alice } else { Wing::Bob };
        let m = bell_lab::hvt::QmOracle::local_observable(w, &AnalyzerSetting::new(a, ParticleKind::Photon));
        let p_plus = qcore::plus_probability(&psi, &m).unwrap();
        prop_assume!(p_plus > 1e-6 && p_plus < 1.0 - 1e-6);
        let sign: i8 = if u < p_plus { 1 } else { -1 };
        let (weight, post) = qcore::project(&psi, &m, sign).unwrap();
        let expected = if sign == 1 { p_plus } else { 1.0 - p_plus };
        prop_assert!((weight - expected).abs() < 1e-12);
        let applied = m.apply(post.amplitudes()).unwrap();
        for (x, y) in applied.iter().zip(post.amplitudes()) {
            prop_assert!((x - y * f64::from(sign)).norm() < 1e-12);
        }
    }

    /// For any ±1 data on four equal bins,
    /// |⟨AB⟩₁−⟨AB′⟩₂| + |⟨A′B′⟩₃+⟨A′B⟩₄| ≤ 2 + N⁻¹Σ|B₁B′₃−B′₂B₄| + N⁻¹Σ|A₁A′₃−A₂A′₄|.
    #[test]
    fn two_sided_identity_on_arbitrary_data(rows in prop::collection::vec(prop::array::uniform8(any::<bool>()), 1..64)) {
        let pm = |b: bool| if b { 1i64 } else { -1 };
        let (mut s, mut tb, mut ta) = ([0i64; 4], 0i64, 0i64);
        for r in &rows {
            let a = [pm(r[0]), pm(r[1]), pm(r[2]), pm(r[3])];
            let b = [pm(r[4]), pm(r[5]), pm(r[6]), pm(r[7])];
            for k in 0..4 {
                s[k] += a[k] * b[k];
            }
            tb += (b[0] * b[2] - b[1] * b[3]).abs();
            ta += (a[0] * a[2] - a[1] * a[3]).abs();
        }
        let n = rows.len() as i64;
        prop_assert!((s[0] - s[1]).abs() + (s[2] + s[3]).abs() <= 2 * n + tb + ta);
    }

    #[test]
    fn exact_bound_for_every_model(m in local_model(), seed in any::<u64>(), a in angle(), ap in angle(), b in angle(), bp in angle(), tandem in any::<bool>(), side_a in any::<bool>()) {
        let model = &builtin_models(ParticleKind::Photon)[m];
        let menu = SettingMenu::from_degrees(ParticleKind::Photon, [a, ap, b, bp].map(f64::to_degrees));
        let mut schedule = FourBinSchedule::new(menu, 64);
        if tandem {
            schedule = schedule.tandem();
        }
        let opts = RunOptions { side: if side_a { Side::ASide } else { Side::BSide }, ..RunOptions::seeded(seed) };
        let r = run_four_bin(model.as_ref(), &schedule, &opts).unwrap();
        prop_assert_eq!(r.two_sided_bound_holds_exactly(), Some(true));
        if !side_a {
            prop_assert_eq!(r.time_ordered_bound_holds_exactly(), Some(true));
        }
        let t = r.time_order.unwrap();
        prop_assert!(t.t_signed <= t.t_abs);
    }

    #[test]
    fn time_order_term_signed_below_abs(m in local_model(), seed in any::<u64>(), b in angle(), bp in angle(), side_a in any::<bool>()) {
        let model = &builtin_models(ParticleKind::Photon)[m];
        let opts = RunOptions { side: if side_a { Side::ASide } else { Side::BSide }, ..RunOptions::seeded(seed) };
        let term = time_order_term(model.as_ref(), AnalyzerSetting::new(b, ParticleKind::Photon), AnalyzerSetting::new(bp, ParticleKind::Photon), 32, &opts).unwrap();
        let s = term.summary;
        prop_assert!(s.t_signed <= s.t_abs);
        if !model.is_dynamic() {
            prop_assert_eq!(s.abs_diff_sum, 0);
            prop_assert_eq!(s.f, None);
        }
    }

    #[test]
    fn static_model_is_exactly_order_free(seed in any::<u64>(), k in kind(), a in angle(), ap in angle(), b in angle(), bp in angle()) {
        let menu = SettingMenu::from_degrees(k, [a, ap, b, bp].map(f64::to_degrees));
        let r = run_four_bin(&StaticSign::new(k), &FourBinSchedule::new(menu, 64).tandem(), &RunOptions::seeded(seed)).unwrap();
        let t = r.time_order.unwrap();
        prop_assert_eq!((t.diff_sum, t.abs_diff_sum, t.other_side_abs_diff_sum), (0, 0, 0));
        prop_assert!(r.chsh_lhs <= 2.0);
    }

    /// Static responses depend only on λ and the setting, so any reordering of
    /// the ensemble leaves the per-element outcomes attached to their λ.
    #[test]
    fn static_model_permutation_invariance(seed in any::<u64>(), a in angle(), b in angle(), perm_seed in any::<u64>()) {
        let model = StaticSign::new(ParticleKind::Photon);
        let mut rng = RandomStream::new(seed);
        let lambdas: Vec<_> = (0..32).map(|_| model.sample(&mut rng)).collect();
        let (sa, sb) = (AnalyzerSetting::new(a, ParticleKind::Photon), AnalyzerSetting::new(b, ParticleKind::Photon));
        let product = |l: &bell_lab::hvt::HiddenVariable, r: &mut RandomStream| {
            model.respond(Wing::Alice, &sa, l, r).unwrap().outcome * model.respond(Wing::Bob, &sb, l, r).unwrap().outcome
        };
        let forward: i64 = lambdas.iter().map(|l| i64::from(product(l, &mut RandomStream::new(0)))).sum();
        let mut order: Vec<usize> = (0..lambdas.len()).collect();
        let mut prng = RandomStream::new(perm_seed);
        for i in (1..order.len()).rev() {
            order.swap(i, prng.index(i + 1));
        }
        let shuffled: i64 = order.iter().map(|&i| i64::from(product(&lambdas[i], &mut prng))).sum();
        prop_assert_eq!(forward, shuffled);
    }

    #[test]
    fn collapse_rotation_is_outcome_stable(seed in any::<u64>(), a in angle(), wing in any::<bool>()) {
        let w = if wing { Wing::Alice } else { Wing::Bob };
        let model = CollapseRotation::new(ParticleKind::Photon);
        let mut rng = RandomStream::new(seed);
        let lambda = model.sample(&mut rng);
        let s = AnalyzerSetting::new(a, ParticleKind::Photon);
        let first = model.respond(w, &s, &lambda, &mut rng).unwrap();
        let second = model.respond(w, &s, &first.lambda, &mut rng).unwrap();
        prop_assert_eq!(first.outcome, second.outcome);
        prop_assert_eq!(first.lambda, second.lambda);
    }

    #[test]
    fn estimator_bounds(samples in prop::collection::vec(prop_oneof![Just(1.0f64), Just(-1.0)], 2..200)) {
        let e = CorrelationEstimate::from_samples(samples.iter().copied());
        prop_assert!((-1.0..=1.0).contains(&e.mean));
        prop_assert!(e.stderr >= 0.0 && e.stderr.is_finite());
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        prop_assert!((e.mean - mean).abs() < 1e-12);
    }

    #[test]
    fn coincidence_correlation_is_bounded(tx in 0.0f64..=1.0, ty in 0.0f64..=1.0, a in angle(), b in angle()) {
        let p = BeamSplitterParams::from_transmissions(tx, ty).unwrap();
        prop_assert!(oumandel::factorization_residual(&p) < 1e-12);
        if let Ok(e) = oumandel::post_selected_correlation(&p, a, b, Convention::Annihilation) {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&e));
        }
        prop_assert!((oumandel::ou_mandel_state(&p).norm_sq() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn report_json_round_trip(seed in any::<u64>(), x in any::<f64>().prop_filter("finite", |v| v.is_finite()), trials in 2usize..1_000_000) {
        let config = RunConfig { seed, trials, angles_deg: [x, -x, x / 3.0, 1e-300], ..RunConfig::default() };
        let doc = ReportDocument::new(config);
        let back = ReportDocument::from_json(&doc.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, doc);
    }
}

#[test]
fn every_builtin_model_runs_on_both_kinds() {
    for k in [ParticleKind::Photon, ParticleKind::Electron] {
        for model in builtin_models(k) {
            let m: &dyn HiddenVariableModel = model.as_ref();
            assert_eq!(m.kind(), k);
            let r = run_four_bin(
                m,
                &FourBinSchedule::new(SettingMenu::from_degrees(k, [0.0, 90.0, 45.0, 135.0]), 16),
                &RunOptions::seeded(1),
            )
            .unwrap();
            assert_eq!(r.bins.iter().map(|b| b.estimate.n).sum::<u64>(), 64);
        }
    }
}
