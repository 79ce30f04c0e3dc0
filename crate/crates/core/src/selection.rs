//! Time-consistency scoring and data selection.
//!
//! Each sample keeps a negative exponential moving average of its prediction
//! inconsistency across evaluation passes; the tau% lowest scores mark the
//! samples whose loss landscape is sharpest and most worth augmenting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::kl_divergence;

const PROB_FLOOR: f64 = 1e-12;

/// Per-sample time-consistency state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TCSRecord {
    pub sample_id: u64,
    /// Running TCS value c; larger means more consistent.
    pub c: f64,
    /// Prediction from the previous step; None before the first update
    /// (the first step compares against the uniform distribution).
    pub last_probs: Option<Vec<f64>>,
    /// Hard label from the previous step.
    pub last_label: usize,
    /// Ground-truth label when the sample is labeled; pseudo labels refresh
    /// from each new prediction otherwise.
    pub fixed_label: Option<usize>,
    pub step: u64,
}

impl TCSRecord {
    pub fn new(sample_id: u64, fixed_label: Option<usize>) -> Self {
        TCSRecord {
            sample_id,
            c: 0.0,
            last_probs: None,
            last_label: fixed_label.unwrap_or(0),
            fixed_label,
            step: 0,
        }
    }
}

/// Instantaneous inconsistency a = KL(prev || new) + |log(prev[y]/new[y])|
/// with the previous hard label y.
pub fn inconsistency(prev: &[f64], new: &[f64], prev_label: usize) -> Result<f64> {
    if prev.len() != new.len() {
        return Err(Error::ShapeMismatch {
            op: "tcs_update",
            detail: format!("{} vs {}", prev.len(), new.len()),
        });
    }
    if prev_label >= prev.len() {
        return Err(Error::InvalidClass { index: prev_label, num_classes: prev.len() });
    }
    let kl = kl_divergence(prev, new, PROB_FLOOR)?;
    let ratio = (prev[prev_label].max(PROB_FLOOR) / new[prev_label].max(PROB_FLOOR)).ln().abs();
    Ok(kl + ratio)
}

/// One EMA update: c <- gamma_c * (-a) + (1 - gamma_c) * c.
///
/// The first update (no stored prediction) compares against the uniform
/// distribution. The stored prediction and hard label refresh afterwards.
pub fn tcs_update(record: &mut TCSRecord, new_probs: &[f64], gamma_c: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&gamma_c) {
        return Err(Error::InvalidParam(format!("gamma_c {gamma_c} outside [0, 1]")));
    }
    let sum: f64 = new_probs.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParam(format!(
            "prediction vector sums to {sum}, expected 1"
        )));
    }
    let uniform;
    let (prev, prev_label) = match &record.last_probs {
        Some(p) => (p.as_slice(), record.last_label),
        None => {
            uniform = vec![1.0 / new_probs.len() as f64; new_probs.len()];
            let label = record.fixed_label.unwrap_or_else(|| argmax(new_probs));
            (uniform.as_slice(), label)
        }
    };
    let a = inconsistency(prev, new_probs, prev_label)?;
    record.c = gamma_c * (-a) + (1.0 - gamma_c) * record.c;
    record.last_probs = Some(new_probs.to_vec());
    record.last_label = record.fixed_label.unwrap_or_else(|| argmax(new_probs));
    record.step += 1;
    Ok(())
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Ids of the floor(tau% * n) samples with smallest c; ties break by
/// ascending sample id.
pub fn select_low_tcs(records: &[TCSRecord], tau_pct: f64) -> Result<Vec<u64>> {
    if records.is_empty() {
        return Err(Error::EmptyInput("select_low_tcs"));
    }
    if !(tau_pct > 0.0 && tau_pct <= 100.0) {
        return Err(Error::InvalidParam(format!("tau_pct {tau_pct} outside (0, 100]")));
    }
    let take = (tau_pct / 100.0 * records.len() as f64).floor() as usize;
    let mut order: Vec<(f64, u64)> = records.iter().map(|r| (r.c, r.sample_id)).collect();
    order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    Ok(order.into_iter().take(take).map(|(_, id)| id).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record_with(prev: Vec<f64>, label: usize, c: f64) -> TCSRecord {
        TCSRecord {
            sample_id: 0,
            c,
            last_label: label,
            last_probs: Some(prev),
            fixed_label: Some(label),
            step: 1,
        }
    }

    #[test]
    fn identical_predictions_decay_c() {
        let mut r = record_with(vec![0.9, 0.1], 0, -2.0);
        tcs_update(&mut r, &[0.9, 0.1], 0.25).unwrap();
        // a = 0, so c = (1 - gamma) * c_prev
        assert!((r.c - (-2.0 * 0.75)).abs() < 1e-15);
    }

    #[test]
    fn gamma_one_is_memoryless() {
        let mut r = record_with(vec![0.9, 0.1], 0, -5.0);
        tcs_update(&mut r, &[0.5, 0.5], 1.0).unwrap();
        let a = inconsistency(&[0.9, 0.1], &[0.5, 0.5], 0).unwrap();
        assert!((r.c - (-a)).abs() < 1e-15);
    }

    #[test]
    fn inconsistency_matches_scalar_recomputation() {
        let prev = [0.9, 0.1];
        let new = [0.5, 0.5];
        let a = inconsistency(&prev, &new, 0).unwrap();
        // KL([0.9, 0.1] || [0.5, 0.5]) + |log(0.9/0.5)|
        let kl = 0.9 * (0.9f64 / 0.5).ln() + 0.1 * (0.1f64 / 0.5).ln();
        let expected = kl + (0.9f64 / 0.5).ln().abs();
        assert!((a - expected).abs() < 1e-12);
    }

    #[test]
    fn first_update_compares_against_uniform() {
        let mut r = TCSRecord::new(1, None);
        tcs_update(&mut r, &[0.25, 0.75], 1.0).unwrap();
        let a = inconsistency(&[0.5, 0.5], &[0.25, 0.75], 1).unwrap();
        assert!((r.c - (-a)).abs() < 1e-15);
        // pseudo label refreshed to the new argmax
        assert_eq!(r.last_label, 1);
    }

    #[test]
    fn larger_inconsistency_never_raises_c() {
        let gamma = 0.6;
        let base = record_with(vec![0.8, 0.2], 0, -1.0);
        let mut small = base.clone();
        let mut large = base;
        tcs_update(&mut small, &[0.7, 0.3], gamma).unwrap();
        tcs_update(&mut large, &[0.1, 0.9], gamma).unwrap();
        assert!(large.c <= small.c);
    }

    #[test]
    fn ema_stays_bounded_by_max_inconsistency() {
        let mut r = TCSRecord::new(0, Some(0));
        let gamma = 0.3;
        let mut max_a: f64 = 0.0;
        let seqs = [
            [0.6, 0.4],
            [0.1, 0.9],
            [0.5, 0.5],
            [0.95, 0.05],
            [0.3, 0.7],
        ];
        let mut prev: Vec<f64> = vec![0.5, 0.5];
        for p in seqs {
            let a = inconsistency(&prev, &p, 0).unwrap();
            max_a = max_a.max(a);
            tcs_update(&mut r, &p, gamma).unwrap();
            prev = p.to_vec();
        }
        assert!(r.c.abs() <= max_a + 1e-12);
    }

    #[test]
    fn select_all_at_tau_100() {
        let records: Vec<TCSRecord> = (0..5).map(|i| TCSRecord::new(i, None)).collect();
        let ids = select_low_tcs(&records, 100.0).unwrap();
        assert_eq!(ids.len(), 5);
    }

    #[test]
    fn select_argmin_at_small_tau() {
        let mut records: Vec<TCSRecord> = (0..3).map(|i| TCSRecord::new(i, None)).collect();
        records[0].c = -3.0;
        records[1].c = -1.0;
        records[2].c = -2.0;
        let ids = select_low_tcs(&records, 34.0).unwrap();
        assert_eq!(ids, vec![0]);
    }

    #[test]
    fn deterministic_tie_break_by_id() {
        let mut records: Vec<TCSRecord> = (0..4).map(|i| TCSRecord::new(i, None)).collect();
        for r in &mut records {
            r.c = -1.0;
        }
        let ids = select_low_tcs(&records, 50.0).unwrap();
        assert_eq!(ids, vec![0, 1]);
    }

    #[test]
    fn select_size_is_floor() {
        let records: Vec<TCSRecord> = (0..7).map(|i| TCSRecord::new(i, None)).collect();
        let ids = select_low_tcs(&records, 50.0).unwrap();
        assert_eq!(ids.len(), 3); // floor(0.5 * 7)
    }

    #[test]
    fn empty_pool_is_an_error() {
        assert!(matches!(
            select_low_tcs(&[], 50.0),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut r = record_with(vec![0.9, 0.1], 0, 0.0);
        assert!(tcs_update(&mut r, &[0.2, 0.3, 0.5], 0.5).is_err());
    }
}
