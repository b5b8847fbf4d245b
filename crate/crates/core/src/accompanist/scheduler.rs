use super::decoder::{decode_note, TempoContext};
use super::{AccompConfig, AccompanimentEvent, AccompanimentReference, ExpressiveParams};
use crate::score::{Part, Score, ScoreNote, ONSET_EPSILON};

/// Onsets one update may skip before the jump is flagged as suspect.
pub const MAX_QUIET_SKIP: usize = 4;

#[derive(Clone, Debug)]
struct Pending {
    note: ScoreNote,
    event: Option<AccompanimentEvent>,
}

/// Holds the accompaniment notes that have not been handed to the output
/// yet and re-times them whenever the tempo model moves.
#[derive(Clone, Debug)]
pub struct Scheduler {
    cfg: AccompConfig,
    reference: Option<AccompanimentReference>,
    pending: Vec<Pending>,
    skipped_onsets: usize,
    large_jumps: usize,
}

impl Scheduler {
    pub fn new(score: &Score, cfg: AccompConfig, reference: Option<AccompanimentReference>) -> Self {
        let pending = score
            .chords(Part::Accompaniment)
            .into_iter()
            .flat_map(|c| c.notes)
            .map(|note| Pending { note, event: None })
            .collect();
        Scheduler {
            cfg,
            reference,
            pending,
            skipped_onsets: 0,
            large_jumps: 0,
        }
    }

    /// Accompaniment onsets dropped because the soloist moved past them
    /// before they were played.
    pub fn skipped_onsets(&self) -> usize {
        self.skipped_onsets
    }

    /// Updates that skipped more than [`MAX_QUIET_SKIP`] onsets at once.
    pub fn large_jumps(&self) -> usize {
        self.large_jumps
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    /// Scheduled time of a pending note, if it has been timed.
    pub fn scheduled_onset(&self, note_id: &str) -> Option<f64> {
        self.pending
            .iter()
            .find(|p| p.note.id == note_id)
            .and_then(|p| p.event.as_ref())
            .map(|e| e.onset_sec)
    }

    /// Applies a tempo update made at soloist score position `score_now`.
    /// Notes before it are dropped; notes at least one horizon in the
    /// future (or never timed) are re-timed.
    pub fn update(&mut self, now: f64, score_now: f64, tempo: &TempoContext, params: &ExpressiveParams) {
        let mut dropped: Vec<f64> = Vec::new();
        self.pending.retain(|p| {
            let keep = p.note.onset_beats >= score_now - ONSET_EPSILON;
            if !keep
                && dropped
                    .last()
                    .is_none_or(|&o| (o - p.note.onset_beats).abs() > ONSET_EPSILON)
            {
                dropped.push(p.note.onset_beats);
            }
            keep
        });
        if dropped.len() > MAX_QUIET_SKIP {
            log::warn!(
                "soloist jumped past {} accompaniment onsets (beats {} to {}); dropping them",
                dropped.len(),
                dropped[0],
                dropped[dropped.len() - 1]
            );
            self.large_jumps += 1;
        } else if !dropped.is_empty() {
            log::debug!("dropping {} accompaniment onsets the soloist has passed", dropped.len());
        }
        self.skipped_onsets += dropped.len();
        let horizon = now + self.cfg.horizon_sec();
        for p in &mut self.pending {
            if p.event.as_ref().is_some_and(|e| e.onset_sec < horizon) {
                continue;
            }
            p.event = Some(decode_note(&p.note, params, tempo, self.reference.as_ref(), &self.cfg));
        }
    }

    /// Removes and returns the timed notes due before `now + horizon`,
    /// ordered by onset. They can no longer be re-timed.
    pub fn take_due(&mut self, now: f64) -> Vec<AccompanimentEvent> {
        let horizon = now + self.cfg.horizon_sec();
        let mut due = Vec::new();
        self.pending.retain(|p| match &p.event {
            Some(e) if e.onset_sec < horizon => {
                due.push(e.clone());
                false
            }
            _ => true,
        });
        due.sort_by(|a, b| a.onset_sec.total_cmp(&b.onset_sec));
        due
    }

    /// Earliest scheduled onset still pending.
    pub fn next_onset(&self) -> Option<f64> {
        self.pending
            .iter()
            .filter_map(|p| p.event.as_ref().map(|e| e.onset_sec))
            .min_by(f64::total_cmp)
    }
}
