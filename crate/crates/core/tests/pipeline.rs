//! Short end-to-end runs through the public API.

use dpdlab::dpd::{build_scheme, ff_layout_hash, CoeffVec};
use dpdlab::gmp::GmpConfig;
use dpdlab::metrics::{evm_aligned, report, PsdSettings};
use dpdlab::pa::{sample_pa_params, PaBank, SalehParams};
use dpdlab::trainer::{
    evaluate, evaluate_without_dpd, train, write_telemetry_csv, Algorithm, TrainSettings,
};
use dpdlab::waveform::{generate_multitone, set_drive_level, ComplexSignal};

fn setup(seed: u64) -> (ComplexSignal, PaBank) {
    let raw = generate_multitone(60_000, 32, 4e6, 32e6, seed).unwrap();
    let sig = set_drive_level(&raw, 8.0, &SalehParams::nominal()).unwrap();
    let bank = PaBank::new(sample_pa_params(8, seed).unwrap()).unwrap();
    (sig, bank)
}

#[test]
fn every_algorithm_beats_no_dpd() {
    let (sig, bank) = setup(4);
    let gmp = GmpConfig::saleh_default();
    let scheme = build_scheme(8, 1, 2, &[4, 6]).unwrap();
    let settings = TrainSettings::default();
    let psd = PsdSettings::default();
    let none = report(
        &evaluate_without_dpd(&sig, &bank).unwrap(),
        &sig,
        0,
        2000,
        &psd,
    )
    .unwrap();
    for alg in Algorithm::ALL {
        let run = train(alg, &sig, &bank, &gmp, Some(&scheme), &settings).unwrap();
        assert!(!run.history.is_empty());
        let outs = evaluate(&run.coeffs, &sig, &bank, &gmp, Some(&scheme)).unwrap();
        let r = report(&outs, &sig, gmp.latency(), 2000, &psd).unwrap();
        assert_eq!(r.evm_percent.len(), 8);
        assert!(
            r.mean_evm_percent < none.mean_evm_percent,
            "{alg}: {} vs {}",
            r.mean_evm_percent,
            none.mean_evm_percent
        );
    }
}

#[test]
fn coefficients_round_trip_through_json() {
    let (sig, bank) = setup(5);
    let gmp = GmpConfig::saleh_default();
    let run = train(
        Algorithm::Ff,
        &sig,
        &bank,
        &gmp,
        None,
        &TrainSettings::default(),
    )
    .unwrap();
    let hash = ff_layout_hash(8, gmp.q());
    let text = run.coeffs.to_json(&hash).unwrap();
    let back = CoeffVec::from_json(&text, &hash).unwrap();
    assert_eq!(back, run.coeffs);
    assert!(CoeffVec::from_json(&text, "other").is_err());

    let a = evaluate(&run.coeffs, &sig, &bank, &gmp, None).unwrap();
    let b = evaluate(&back, &sig, &bank, &gmp, None).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(evm_aligned(x.samples(), y.samples(), 0, 0).unwrap(), 0.0);
    }
}

#[test]
fn telemetry_csv_has_one_row_per_block() {
    let (sig, bank) = setup(6);
    let gmp = GmpConfig::saleh_default();
    let run = train(
        Algorithm::Ff,
        &sig,
        &bank,
        &gmp,
        None,
        &TrainSettings::default(),
    )
    .unwrap();
    let mut buf = Vec::new();
    write_telemetry_csv(&run.history, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("iteration,samples,mean_abs_error_0"));
    assert!(header.ends_with("max_coeff_delta"));
    assert_eq!(lines.count(), run.history.len());
}

#[test]
fn lc_layouts_require_a_scheme() {
    let (sig, bank) = setup(7);
    let gmp = GmpConfig::saleh_default();
    assert!(train(
        Algorithm::LcI,
        &sig,
        &bank,
        &gmp,
        None,
        &TrainSettings::default()
    )
    .is_err());
}
