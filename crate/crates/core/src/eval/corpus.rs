//! Fixed synthetic corpora. Seeds and shapes are part of the corpus
//! version; changing them changes every number derived from it.

use super::perturb::perturb_performance;
use super::synth::{generate_score, render_performance, RenderSpec, ScoreSpec, SyntheticPerformance};
use super::tempo_exp::TempoTrial;
use crate::error::Result;
use crate::score::{ReferencePerformance, Score};

/// A piece, a clean test performance and noisy references of it.
#[derive(Clone, Debug)]
pub struct FollowerSetup {
    pub score: Score,
    pub test: ReferencePerformance,
    pub references: Vec<ReferencePerformance>,
}

/// 200-onset constant-tempo piece with five references perturbed at
/// 100 ms.
pub fn robustness_setup() -> Result<FollowerSetup> {
    let spec = ScoreSpec {
        iois: vec![0.5, 1.0],
        ..ScoreSpec::new(200, 7001)
    };
    let score = generate_score(&spec)?;
    let test = render_performance(&score, &RenderSpec::constant(120.0, 7002)).reference()?;
    let references = perturb_performance(&test, 100.0, 5, 7003)?;
    Ok(FollowerSetup {
        score,
        test,
        references,
    })
}

/// Renditions of one expressive piece: ritardando, rubato or both, with
/// onset jitter and grace notes.
fn expressive_piece(k: u64) -> Result<(SyntheticPerformance, SyntheticPerformance)> {
    let spec = ScoreSpec {
        grace_every: 6,
        ..ScoreSpec::new(120, 8100 + k)
    };
    let score = generate_score(&spec)?;
    let bpm = 96.0 + 8.0 * k as f64;
    let shape = |seed| {
        let r = RenderSpec::constant(bpm, seed).with_jitter(15.0);
        match k % 3 {
            0 => r.with_ritardando(1.6),
            1 => r.with_rubato(0.15, 8.0),
            _ => r.with_ritardando(1.3).with_rubato(0.1, 6.0),
        }
    };
    let test = render_performance(&score, &shape(8200 + k));
    let rehearsal = render_performance(&score, &shape(8300 + k));
    Ok((test, rehearsal))
}

/// Number of pieces in the expressive corpus.
pub const EXPRESSIVE_PIECES: u64 = 6;

/// Tempo trials over the expressive corpus. Each test performance comes
/// with an independent rendition of the same interpretation as its LTE
/// reference.
pub fn expressive_corpus() -> Result<Vec<TempoTrial>> {
    (0..EXPRESSIVE_PIECES)
        .map(|k| {
            let (test, rehearsal) = expressive_piece(k)?;
            TempoTrial::new(test.onset_pairs(), vec![rehearsal.reference()?.tempo_curve().clone()])
        })
        .collect()
}

/// Constant-tempo duet for end-to-end runs, played at its marked tempo.
pub fn steady_duet() -> Result<(Score, SyntheticPerformance)> {
    let spec = ScoreSpec {
        iois: vec![0.5, 1.0, 2.0],
        bpm: 100.0,
        ..ScoreSpec::new(48, 9001)
    };
    let score = generate_score(&spec)?;
    let perf = render_performance(&score, &RenderSpec::constant(100.0, 9002));
    Ok((score, perf))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expressive_corpus_shape() {
        let trials = expressive_corpus().unwrap();
        assert_eq!(trials.len(), EXPRESSIVE_PIECES as usize);
        assert!(trials.iter().all(|t| t.onsets.len() > 120 && t.curves.len() == 1));
    }
}
