use crate::error::{Error, Result};
use crate::score::ONSET_EPSILON;

/// Absolute asynchronies of a follower run and their summary.
#[derive(Clone, Debug, PartialEq)]
pub struct AsynchronyReport {
    /// Per onset, in score order (ms). Onsets never reached are infinite.
    pub asynchronies_ms: Vec<f64>,
    pub median_abs_ms: f64,
    pub pct_le_25: f64,
    pub pct_le_50: f64,
    pub pct_le_100: f64,
}

impl AsynchronyReport {
    pub fn from_asynchronies_ms(asynchronies_ms: Vec<f64>) -> Result<Self> {
        if asynchronies_ms.is_empty() {
            return Err(Error::Experiment("no onsets to evaluate".into()));
        }
        let mut abs: Vec<f64> = asynchronies_ms.iter().map(|a| a.abs()).collect();
        abs.sort_by(f64::total_cmp);
        let n = abs.len();
        let median = if n % 2 == 1 {
            abs[n / 2]
        } else {
            (abs[n / 2 - 1] + abs[n / 2]) / 2.0
        };
        let pct = |limit: f64| 100.0 * abs.iter().filter(|&&a| a <= limit).count() as f64 / n as f64;
        Ok(AsynchronyReport {
            median_abs_ms: median,
            pct_le_25: pct(25.0),
            pct_le_50: pct(50.0),
            pct_le_100: pct(100.0),
            asynchronies_ms: asynchronies_ms.iter().map(|a| a.abs()).collect(),
        })
    }
}

/// Compares estimated and true onset times (seconds), both keyed by score
/// onset. The key sets must agree.
pub fn asynchrony_metrics(estimated: &[(f64, f64)], truth: &[(f64, f64)]) -> Result<AsynchronyReport> {
    let sorted = |v: &[(f64, f64)]| {
        let mut v = v.to_vec();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        v
    };
    let (est, truth) = (sorted(estimated), sorted(truth));
    if est.len() != truth.len() {
        return Err(Error::Experiment(format!(
            "{} estimated onsets against {} true onsets",
            est.len(),
            truth.len()
        )));
    }
    let mut out = Vec::with_capacity(est.len());
    for (e, t) in est.iter().zip(&truth) {
        if (e.0 - t.0).abs() > ONSET_EPSILON {
            return Err(Error::Experiment(format!(
                "score onset {} has no counterpart (found {})",
                t.0, e.0
            )));
        }
        out.push((e.1 - t.1).abs() * 1000.0);
    }
    AsynchronyReport::from_asynchronies_ms(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        let r = AsynchronyReport::from_asynchronies_ms(vec![10.0, 30.0, 60.0, 120.0]).unwrap();
        assert_eq!(r.median_abs_ms, 45.0);
        assert_eq!((r.pct_le_25, r.pct_le_50, r.pct_le_100), (25.0, 50.0, 75.0));
    }

    #[test]
    fn all_zero() {
        let r = AsynchronyReport::from_asynchronies_ms(vec![0.0; 7]).unwrap();
        assert_eq!(r.median_abs_ms, 0.0);
        assert_eq!((r.pct_le_25, r.pct_le_50, r.pct_le_100), (100.0, 100.0, 100.0));
    }

    #[test]
    fn unreached_onsets_count_as_misses() {
        let r = AsynchronyReport::from_asynchronies_ms(vec![0.0, f64::INFINITY, f64::INFINITY]).unwrap();
        assert_eq!(r.median_abs_ms, f64::INFINITY);
        assert!((r.pct_le_100 - 100.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn keys_must_match() {
        let truth = [(0.0, 1.0), (1.0, 1.5)];
        assert!(asynchrony_metrics(&[(0.0, 1.0)], &truth).is_err());
        assert!(asynchrony_metrics(&[(0.0, 1.0), (2.0, 1.5)], &truth).is_err());
        let r = asynchrony_metrics(&[(1.0, 1.52), (0.0, 1.0)], &truth).unwrap();
        assert_eq!(r.asynchronies_ms.len(), 2);
        assert!((r.asynchronies_ms[1] - 20.0).abs() < 1e-9);
    }

    #[test]
    fn empty_rejected() {
        assert!(AsynchronyReport::from_asynchronies_ms(Vec::new()).is_err());
    }
}
