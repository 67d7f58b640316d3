//! Frame descriptors against independent naive-loop oracles on large
//! batches of random frames.

mod common;

use afe_core::features::mel::hz_to_mel;

const TRIALS: usize = 1000;
const REL_TOL: f64 = 1e-10;

#[test]
fn mel_point_values() {
    let want = 2595.0 * 2f64.log10();
    assert!((hz_to_mel(700.0).unwrap() - want).abs() <= 1e-12);
    assert_eq!(hz_to_mel(0.0).unwrap(), 0.0);
}

#[test]
fn zcr_matches_counting_oracle() {
    assert!(common::zcr_oracle_sweep(TRIALS, 11) <= REL_TOL);
}

#[test]
fn centroid_matches_weighted_average_oracle() {
    assert!(common::centroid_oracle_sweep(TRIALS, 12) <= REL_TOL);
}

#[test]
fn rolloff_matches_cumulative_oracle() {
    assert!(common::rolloff_oracle_sweep(TRIALS, 13) <= REL_TOL);
}

#[test]
fn mfcc_matches_double_loop_oracle() {
    assert!(common::mfcc_oracle_sweep(TRIALS, 14) <= REL_TOL);
}

#[test]
fn mel_spectrogram_matches_triple_loop_oracle() {
    assert!(common::mel_oracle_sweep(TRIALS, 15) <= REL_TOL);
}

#[test]
fn chroma_matches_folding_oracle() {
    assert!(common::chroma_oracle_sweep(TRIALS, 16) <= REL_TOL);
}
