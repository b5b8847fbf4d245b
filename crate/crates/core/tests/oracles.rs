mod common;

use accompanion_core::engine::EngineConfig;
use accompanion_core::eval::corpus::robustness_setup;
use accompanion_core::eval::run_follower_experiment;
use accompanion_core::follower::{
    featurize_reference, FollowerKind, FrameSequence, HmmConfig, HmmFollower, OltwConfig, OltwFollower, ScoreFollower,
};
use accompanion_core::midi::WindowConfig;
use accompanion_core::score::{build_onset_grid, Part};
use accompanion_core::PitchSet;
use common::{compare, dtw_oracle_report, full_dtw, full_dtw_path, random_hmm_case, set, windows_for};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn hmm_matches_dense_forward_algorithm() {
    let mut rng = ChaCha8Rng::seed_from_u64(5005);
    for _ in 0..100 {
        let (chords, windows, beat_period) = random_hmm_case(&mut rng);
        compare(&chords, &windows, beat_period);
    }
}

#[test]
fn hmm_scale_at_expected_tempo() {
    let chords = [(0.0, set(&[60])), (1.0, set(&[62])), (2.0, set(&[64]))];
    let windows = windows_for(&[(0.0, &[60]), (0.5, &[62]), (1.0, &[64])]);
    let maps = compare(&chords, &windows, 0.5);
    assert_eq!(maps, vec![0, 1, 2]);
    let mut f = HmmFollower::from_chords(chords.to_vec(), HmmConfig::default(), 0.5).unwrap();
    for w in &windows {
        f.step(w);
    }
    assert!((f.state().kalman_beat_period - 0.5).abs() < 0.01);
}

#[test]
fn hmm_skips_missed_note() {
    let chords = [(0.0, set(&[60])), (1.0, set(&[62])), (2.0, set(&[64]))];
    let windows = windows_for(&[(0.0, &[60]), (1.0, &[64])]);
    let maps = compare(&chords, &windows, 0.5);
    assert_eq!(maps.last(), Some(&2));
}

#[test]
fn dtw_oracle_on_identical_sequences_is_diagonal() {
    let frames: Vec<PitchSet> = (0..30u8).map(|i| set(&[60 + i % 7])).collect();
    assert_eq!(full_dtw_path(&frames, &frames), (0..30).collect::<Vec<_>>());
}

/// Prints the offline bound and the online median for the robustness setup.
#[test]
#[ignore]
fn robustness_probe() {
    let setup = robustness_setup().unwrap();
    let grid = build_onset_grid(&setup.score, Part::Solo).unwrap();
    let refs: Vec<_> = setup
        .references
        .iter()
        .map(|r| featurize_reference(r, &WindowConfig::default()))
        .collect();
    let bound = dtw_oracle_report(&setup.test, &refs, &grid);
    let online = run_follower_experiment(
        &setup.score,
        &setup.test,
        &setup.references,
        FollowerKind::Oltw,
        &EngineConfig::default(),
    )
    .unwrap();
    let hmm = run_follower_experiment(
        &setup.score,
        &setup.test,
        &setup.references,
        FollowerKind::Hmm,
        &EngineConfig::default(),
    )
    .unwrap();
    println!("dtw median {:.6}", bound.median_abs_ms);
    println!("oltw median {:.6}", online.median_abs_ms);
    println!("hmm median {:.6}", hmm.median_abs_ms);
}

fn short_reference() -> (FrameSequence, accompanion_core::score::OnsetGrid) {
    let setup = robustness_setup().unwrap();
    let grid = build_onset_grid(&setup.score, Part::Solo).unwrap();
    let mut seq = featurize_reference(&setup.test, &WindowConfig::default());
    seq.frames.truncate(450);
    (seq, grid)
}

/// Resamples the frames at `rate` (2.0 plays every frame twice).
fn warp(frames: &[PitchSet], rate: f64) -> Vec<PitchSet> {
    let len = (frames.len() as f64 * rate).round() as usize;
    (0..len)
        .map(|t| frames[((t as f64 / rate) as usize).min(frames.len() - 1)])
        .collect()
}

fn run_online(
    seq: &FrameSequence,
    grid: &accompanion_core::score::OnsetGrid,
    input: &[PitchSet],
) -> (OltwFollower, Vec<usize>) {
    let mut f = OltwFollower::new(seq.clone(), grid.clone(), &OltwConfig::default()).unwrap();
    let path = input
        .iter()
        .enumerate()
        .map(|(t, &frame)| {
            f.push_frame(frame, t as f64 * 0.01);
            f.current_frame().unwrap()
        })
        .collect();
    (f, path)
}

#[test]
fn oltw_half_speed_stays_within_step() {
    let (seq, grid) = short_reference();
    let input = warp(&seq.frames, 2.0);
    let (f, path) = run_online(&seq, &grid, &input);
    let step = f.step_frames();
    // inside a held note every frame is equally good; position is only
    // determined where the reference changes
    for &(k, _) in &seq.knots {
        if 2 * k < input.len() {
            let j = path[2 * k];
            assert!(j.abs_diff(k) <= step, "input {} at frame {j}, expected {k}", 2 * k);
        }
    }
}

#[test]
fn oltw_endpoint_cost_near_full_dtw() {
    let (seq, grid) = short_reference();
    for rate in [1.0, 0.9, 1.1] {
        let input = warp(&seq.frames, rate);
        let (f, _) = run_online(&seq, &grid, &input);
        let end = f.current_frame().unwrap();
        let (_, optimal) = full_dtw(&input, &seq.frames[..=end]);
        let online = f.path_cost();
        assert!(
            online <= optimal * 1.05 + 1e-9,
            "rate {rate}: online {online}, optimal {optimal}"
        );
    }
}
