use iondyne::derivation::{derive_from_summary, derive_results, DeriveOptions, RunEstimate};
use iondyne::inference::{fit_resonance, ResonanceFit, ResonancePoint};
use iondyne::physics::{spin_flip_rates, stark_shift, LaserField};
use iondyne::{CorrectionLedger, Error, Measured, PhysicalConstants, TAU};
use proptest::prelude::*;

const W0: f64 = TAU * 755.222_766e12;
const GAMMA: f64 = TAU * 21.57e6;

fn run(i: usize, det_ghz: f64, rel_dr: f64, rel_s: f64) -> RunEstimate {
    let f = LaserField::from_fractions(TAU * det_ghz * 1e9, TAU * 440e6, 0.995, 0.005, 0.0).unwrap();
    let dr = spin_flip_rates(&f, GAMMA).unwrap().delta_r();
    let s = stark_shift(&f).unwrap();
    RunEstimate {
        run: i,
        label: format!("d{det_ghz}"),
        optical_frequency: W0 + f.detuning(),
        delta_r: Measured::new(dr, dr.abs() * rel_dr),
        stark: Measured::new(s, s.abs() * rel_s),
        leak_b: Measured::new(0.206, 0.01),
    }
}

fn campaign() -> Vec<RunEstimate> {
    [-13.94, -12.03, 11.52, 13.42]
        .iter()
        .enumerate()
        .map(|(i, d)| run(i, *d, 1e-2, 1e-4))
        .collect()
}

fn resonance(runs: &[RunEstimate]) -> ResonanceFit {
    let pts: Vec<_> = runs
        .iter()
        .map(|r| ResonancePoint {
            optical_frequency: r.optical_frequency,
            stark: r.stark.value,
            stark_unc: r.stark.unc,
            delta_r: r.delta_r.value,
            delta_r_unc: r.delta_r.unc,
        })
        .collect();
    fit_resonance(&pts).unwrap()
}

fn derive(runs: &[RunEstimate], ledger: &CorrectionLedger) -> iondyne::derivation::FinalResults {
    derive_results(runs, &resonance(runs), ledger, &PhysicalConstants::reference(), DeriveOptions::default())
        .unwrap()
}

#[test]
fn noiseless_campaign_recovers_truth() {
    let r = derive(&campaign(), &CorrectionLedger::empty());
    assert!((r.gamma_ps.value / GAMMA - 1.0).abs() < 1e-9);
    r.check_identities().unwrap();
    let b = r.breakdown.unwrap();
    assert_eq!(b.runs.len(), 4);
    assert_eq!(b.ledger_shift, 0.0);
}

#[test]
fn ledger_is_applied_once_to_the_average() {
    let runs = campaign();
    let bare = derive(&runs, &CorrectionLedger::empty());
    let full = derive(&runs, &CorrectionLedger::shipped());
    let shift = CorrectionLedger::shipped().total_shift();
    assert!((full.gamma_ps.value / bare.gamma_ps.value - (1.0 + shift)).abs() < 1e-14);
    let b = full.breakdown.unwrap();
    let total = (b.stat_rel.powi(2) + b.resonance_rel.powi(2) + b.ledger_rel.powi(2)).sqrt();
    assert!((full.gamma_ps.rel_unc() - total).abs() < 1e-14);
}

#[test]
fn resonance_term_can_be_switched_off() {
    let runs = campaign();
    let fit = resonance(&runs);
    let c = PhysicalConstants::reference();
    let off = derive_results(&runs, &fit, &CorrectionLedger::empty(), &c, DeriveOptions { resonance_uncertainty: false }).unwrap();
    assert_eq!(off.breakdown.unwrap().resonance_rel, 0.0);
}

#[test]
fn mislabelled_runs_are_rejected() {
    let mut runs = campaign();
    runs[3].label = runs[0].label.clone();
    let fit = resonance(&runs);
    let err = derive_results(&runs, &fit, &CorrectionLedger::empty(), &PhysicalConstants::reference(), DeriveOptions::default());
    assert!(matches!(err, Err(Error::Input(_))));
    assert!(matches!(
        derive_results(&[], &fit, &CorrectionLedger::empty(), &PhysicalConstants::reference(), DeriveOptions::default()),
        Err(Error::Input(_))
    ));
}

#[test]
fn inconsistent_sign_is_reported() {
    let mut runs = campaign();
    let fit = resonance(&runs);
    runs[0].stark.value = -runs[0].stark.value;
    let err = derive_results(&runs, &fit, &CorrectionLedger::empty(), &PhysicalConstants::reference(), DeriveOptions::default());
    assert!(matches!(err, Err(Error::InconsistentSign(_))), "{err:?}");
}

#[test]
fn summary_mode_reproduces_published_values() {
    let c = PhysicalConstants::reference().with_lambda_ps(396.847e-9).unwrap();
    let r = derive_from_summary(
        Measured::new(TAU * 21.57e6, TAU * 0.08e6),
        Measured::new(0.93572, 0.00025),
        &c,
    )
    .unwrap();
    assert!((r.lifetime.value * 1e9 - 6.904).abs() < 5e-4);
    assert!((r.gamma_pd.value / TAU / 1e6 - 1.482).abs() < 1e-3);
    assert!(r.breakdown.is_none());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn common_rescaling_leaves_gamma_unchanged(k in 0.01..100.0f64, rel_dr in 1e-3..0.1f64) {
        let runs: Vec<_> = [-13.94, -12.03, 11.52, 13.42]
            .iter()
            .enumerate()
            .map(|(i, d)| run(i, *d, rel_dr, 1e-4))
            .collect();
        let scaled: Vec<_> = runs
            .iter()
            .map(|r| RunEstimate { delta_r: r.delta_r.scaled(k), stark: r.stark.scaled(k), ..r.clone() })
            .collect();
        let a = derive(&runs, &CorrectionLedger::shipped());
        let b = derive(&scaled, &CorrectionLedger::shipped());
        prop_assert!((a.gamma_ps.value / b.gamma_ps.value - 1.0).abs() < 1e-12);
        prop_assert!((a.gamma_ps.unc / b.gamma_ps.unc - 1.0).abs() < 1e-9);
    }

    #[test]
    fn identities_hold_for_any_summary(g_mhz in 1.0..100.0f64, br in 0.5..0.999f64, urel in 1e-5..1e-2f64) {
        let r = derive_from_summary(
            Measured::new(TAU * g_mhz * 1e6, TAU * g_mhz * 1e6 * urel),
            Measured::new(br, br * urel),
            &PhysicalConstants::reference(),
        ).unwrap();
        prop_assert!(r.check_identities().is_ok());
        prop_assert!((r.branching.value - br).abs() < 1e-12);
    }

    #[test]
    fn resonance_fit_is_equivariant(shift_ghz in -500.0..500.0f64, k in 0.1..10.0f64) {
        let runs = campaign();
        let base = resonance(&runs);
        let moved: Vec<_> = runs
            .iter()
            .map(|r| RunEstimate { optical_frequency: r.optical_frequency + TAU * shift_ghz * 1e9, ..r.clone() })
            .collect();
        let m = resonance(&moved);
        prop_assert!((m.zero_crossing - base.zero_crossing - TAU * shift_ghz * 1e9).abs() < 1e-9 * TAU * 1e9);
        prop_assert!((m.zero_crossing_uncertainty / base.zero_crossing_uncertainty - 1.0).abs() < 1e-6);
        let scaled: Vec<_> = runs
            .iter()
            .map(|r| RunEstimate { stark: r.stark.scaled(k), ..r.clone() })
            .collect();
        let s = resonance(&scaled);
        prop_assert!((s.slope / base.slope / k - 1.0).abs() < 1e-9);
        prop_assert!((s.zero_crossing - base.zero_crossing).abs() < 1e-6 * TAU * 1e9);
    }
}
