use std::io::Write;

use super::metrics::AsynchronyReport;
use super::tempo_exp::TempoErrorReport;
use crate::error::Result;

/// Aligned-column follower table: median absolute asynchrony and the
/// share of onsets within 25, 50 and 100 ms.
pub fn follower_table(rows: &[(String, AsynchronyReport)]) -> String {
    let mut out = format!(
        "{:<10} {:>11} {:>9} {:>9} {:>9}\n",
        "Follower", "Median(ms)", "<=25ms", "<=50ms", "<=100ms"
    );
    for (name, r) in rows {
        out.push_str(&format!(
            "{:<10} {:>11.1} {:>9.1} {:>9.1} {:>9.1}\n",
            name, r.median_abs_ms, r.pct_le_25, r.pct_le_50, r.pct_le_100
        ));
    }
    out
}

pub fn write_follower_csv<W: Write>(rows: &[(String, AsynchronyReport)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["follower", "median_abs_ms", "pct_le_25", "pct_le_50", "pct_le_100"])?;
    for (name, r) in rows {
        w.write_record([
            name.clone(),
            format!("{:.3}", r.median_abs_ms),
            format!("{:.3}", r.pct_le_25),
            format!("{:.3}", r.pct_le_50),
            format!("{:.3}", r.pct_le_100),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Aligned-column tempo table: tempo and onset errors of the selected
/// parameters per model.
pub fn tempo_table(rows: &[TempoErrorReport]) -> String {
    let mut out = format!(
        "{:<6} {:>22} {:>17}  {}\n",
        "Model", "Tempo error(ms/beat)", "Onset error(ms)", "Params"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<6} {:>22.1} {:>17.1}  {}\n",
            r.variant().name(),
            r.mean_abs_tempo_error_ms_per_beat,
            r.mean_abs_onset_error_ms,
            r.params
        ));
    }
    out
}

pub fn write_tempo_csv<W: Write>(rows: &[TempoErrorReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "tempo_error_ms_per_beat", "onset_error_ms", "params"])?;
    for r in rows {
        w.write_record([
            r.variant().name().to_string(),
            format!("{:.3}", r.mean_abs_tempo_error_ms_per_beat),
            format!("{:.3}", r.mean_abs_onset_error_ms),
            r.params.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
