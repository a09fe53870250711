//! Pearson correlation of pitch and energy between two utterances.

use crate::error::{Error, Result};
use crate::prosody::ProsodyTrack;

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::UndefinedCorrelation(format!(
            "need two equal-length sequences of at least 2 values, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance".into()));
    }
    // sqrt of the product, not the product of sqrts, keeps r symmetric in x, y
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    /// Log-f0 correlation over jointly voiced frames; `None` when fewer
    /// than two frames are voiced in both tracks or either side is flat.
    pub lf0_r: Option<f64>,
    pub energy_r: Option<f64>,
    pub n_frames_used: usize,
    pub n_voiced_used: usize,
}

impl CorrelationReport {
    /// `key=value` lines with six decimals; undefined values print `nan`.
    pub fn to_key_value(&self) -> String {
        let f = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |r| format!("{r:.6}"));
        format!(
            "lf0_r={}\nenergy_r={}\nn_frames_used={}\nn_voiced_used={}\n",
            f(self.lf0_r),
            f(self.energy_r),
            self.n_frames_used,
            self.n_voiced_used
        )
    }
}

/// Correlates two tracks on the shared frame grid, truncated to the
/// shorter one. Fails only when neither correlation is defined.
pub fn correlate_prosody(a: &ProsodyTrack, b: &ProsodyTrack) -> Result<CorrelationReport> {
    let n = a.len().min(b.len()).min(a.energy.len()).min(b.energy.len());
    let (mut la, mut lb) = (Vec::new(), Vec::new());
    for i in 0..n {
        if a.f0[i] > 0.0 && b.f0[i] > 0.0 {
            la.push(a.f0[i].ln());
            lb.push(b.f0[i].ln());
        }
    }
    let lf0 = pearson(&la, &lb);
    let energy = pearson(&a.energy[..n], &b.energy[..n]);
    if let (Err(e), Err(_)) = (&lf0, &energy) {
        return Err(Error::UndefinedCorrelation(e.to_string()));
    }
    Ok(CorrelationReport {
        lf0_r: lf0.ok(),
        energy_r: energy.ok(),
        n_frames_used: n,
        n_voiced_used: la.len(),
    })
}
