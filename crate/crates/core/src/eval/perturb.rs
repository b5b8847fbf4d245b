use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::score::{AlignmentPoint, PerformedNote, ReferencePerformance};

/// Notes within this distance of an alignment point belong to it.
const ASSIGN_RADIUS_SEC: f64 = 0.05;
/// Minimum spacing restored between perturbed alignment points.
const ALIGN_NUDGE_SEC: f64 = 0.001;
const MIN_DURATION_SEC: f64 = 0.010;

/// `count` noisy copies of `perf`: every note onset and offset moves by an
/// independent zero-mean Gaussian of `sigma_ms`. Each alignment point
/// follows the mean perturbed onset of the notes it aligns.
pub fn perturb_performance(
    perf: &ReferencePerformance,
    sigma_ms: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<ReferencePerformance>> {
    if !(sigma_ms.is_finite() && sigma_ms >= 0.0) {
        return Err(Error::Config(format!("sigma_ms must be non-negative, got {sigma_ms}")));
    }
    if sigma_ms == 0.0 {
        return Ok(vec![perf.clone(); count]);
    }
    let noise = Normal::new(0.0, sigma_ms * 1e-3).expect("positive finite sigma");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let owner = assign_notes(perf);
    (0..count)
        .map(|_| {
            let mut sums = vec![(0.0, 0usize); perf.alignment().len()];
            let mut notes: Vec<PerformedNote> = perf
                .notes()
                .iter()
                .zip(&owner)
                .map(|(n, owner)| {
                    let onset = (n.onset_sec + noise.sample(&mut rng)).max(0.0);
                    let offset = n.offset_sec() + noise.sample(&mut rng);
                    if let Some(k) = *owner {
                        sums[k].0 += onset;
                        sums[k].1 += 1;
                    }
                    PerformedNote {
                        onset_sec: onset,
                        duration_sec: (offset - onset).max(MIN_DURATION_SEC),
                        ..*n
                    }
                })
                .collect();
            notes.sort_by(|a, b| a.onset_sec.total_cmp(&b.onset_sec).then(a.pitch.cmp(&b.pitch)));
            let mut alignment: Vec<AlignmentPoint> = perf
                .alignment()
                .iter()
                .zip(&sums)
                .map(|(p, &(sum, n))| AlignmentPoint {
                    score_onset_beats: p.score_onset_beats,
                    perf_onset_sec: if n > 0 { sum / n as f64 } else { p.perf_onset_sec },
                })
                .collect();
            for k in 1..alignment.len() {
                let floor = alignment[k - 1].perf_onset_sec + ALIGN_NUDGE_SEC;
                if alignment[k].perf_onset_sec < floor {
                    alignment[k].perf_onset_sec = floor;
                }
            }
            ReferencePerformance::new(notes, alignment)
        })
        .collect()
}

/// Alignment point each note belongs to: the nearest one within
/// [`ASSIGN_RADIUS_SEC`].
fn assign_notes(perf: &ReferencePerformance) -> Vec<Option<usize>> {
    let points = perf.alignment();
    perf.notes()
        .iter()
        .map(|n| {
            let i = points.partition_point(|p| p.perf_onset_sec < n.onset_sec);
            [i.checked_sub(1), (i < points.len()).then_some(i)]
                .into_iter()
                .flatten()
                .map(|k| (k, (points[k].perf_onset_sec - n.onset_sec).abs()))
                .filter(|&(_, d)| d <= ASSIGN_RADIUS_SEC)
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(k, _)| k)
        })
        .collect()
}
