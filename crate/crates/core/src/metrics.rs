//! Error metrics and accuracy aggregation.
//!
//! MAPE here is the ratio form `Σ|y − ŷ| / Σ|y|`, not a mean of per-point
//! percentages. NLL is the mean negative natural log of the probability
//! assigned to each realized outcome, with probabilities floored at
//! [`PROB_FLOOR`].

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PROB_FLOOR: f64 = 1e-10;

pub fn mape(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(Error::WidthMismatch { expected: y.len(), actual: y_hat.len() });
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (&a, &b) in y.iter().zip(y_hat) {
        if !a.is_finite() {
            return Err(Error::NonFinite(a));
        }
        if !b.is_finite() {
            return Err(Error::NonFinite(b));
        }
        num += (a - b).abs();
        den += a.abs();
    }
    if den == 0.0 {
        return Err(Error::Data("MAPE undefined: all observed values are zero".into()));
    }
    Ok(num / den)
}

fn check_prob(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Data(format!("probability {p} outside [0, 1]")));
    }
    Ok(p.max(PROB_FLOOR))
}

pub fn nll(p: &[f64]) -> Result<f64> {
    if p.is_empty() {
        return Err(Error::Empty("probability series"));
    }
    let mut s = 0.0;
    for &v in p {
        s -= check_prob(v)?.ln();
    }
    Ok(s / p.len() as f64)
}

/// Trailing mean of `correct` over the last `window` entries, one value per
/// entry. The first `window - 1` values average the available prefix.
pub fn moving_accuracy(correct: &[bool], window: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(correct.len());
    let mut hits = 0usize;
    for (i, &c) in correct.iter().enumerate() {
        hits += c as usize;
        if i >= window {
            hits -= correct[i - window] as usize;
        }
        out.push(hits as f64 / (i + 1).min(window) as f64);
    }
    out
}

/// Trailing-window sums over a fixed number of entries.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct Window {
    cap: usize,
    items: VecDeque<(f64, f64)>,
}

impl Window {
    fn new(cap: usize) -> Self {
        Window { cap, items: VecDeque::with_capacity(cap) }
    }

    fn push(&mut self, a: f64, b: f64) {
        if self.cap == 0 {
            return;
        }
        if self.items.len() == self.cap {
            self.items.pop_front();
        }
        self.items.push_back((a, b));
    }

    // Recomputed from the buffer so long streams do not accumulate
    // cancellation error from add/subtract updates.
    fn sums(&self) -> (f64, f64) {
        self.items.iter().fold((0.0, 0.0), |(x, y), &(a, b)| (x + a, y + b))
    }
}

/// Streaming MAPE and NLL, over the whole stream and a trailing window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricAccumulator {
    abs_err: f64,
    abs_y: f64,
    neg_log_p: f64,
    count: usize,
    nll_count: usize,
    err_window: Window,
    nll_window: Window,
}

impl MetricAccumulator {
    pub fn new(window: usize) -> Self {
        MetricAccumulator {
            abs_err: 0.0,
            abs_y: 0.0,
            neg_log_p: 0.0,
            count: 0,
            nll_count: 0,
            err_window: Window::new(window),
            nll_window: Window::new(window),
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn window_len(&self) -> usize {
        self.err_window.items.len()
    }

    /// Adds one point prediction and, when known, the probability the model
    /// gave to the realized outcome.
    pub fn push(&mut self, y: f64, y_hat: f64, p: Option<f64>) -> Result<()> {
        if !y.is_finite() {
            return Err(Error::NonFinite(y));
        }
        if !y_hat.is_finite() {
            return Err(Error::NonFinite(y_hat));
        }
        let nlp = p.map(check_prob).transpose()?.map(|p| -p.ln());
        let e = (y - y_hat).abs();
        self.abs_err += e;
        self.abs_y += y.abs();
        self.count += 1;
        self.err_window.push(e, y.abs());
        if let Some(v) = nlp {
            self.neg_log_p += v;
            self.nll_count += 1;
            self.nll_window.push(v, 1.0);
        }
        Ok(())
    }

    pub fn mape(&self) -> Option<f64> {
        (self.abs_y > 0.0).then(|| self.abs_err / self.abs_y)
    }

    pub fn nll(&self) -> Option<f64> {
        (self.nll_count > 0).then(|| self.neg_log_p / self.nll_count as f64)
    }

    pub fn window_mape(&self) -> Option<f64> {
        let (e, y) = self.err_window.sums();
        (y > 0.0).then(|| e / y)
    }

    pub fn window_nll(&self) -> Option<f64> {
        let (s, n) = self.nll_window.sums();
        (n > 0.0).then(|| s / n)
    }
}

/// Mean and sample standard deviation.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn mape_examples() {
        assert_eq!(mape(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_relative_eq!(mape(&[100.0, 200.0], &[110.0, 190.0]).unwrap(), 20.0 / 300.0);
        assert_relative_eq!(mape(&[3.0, 5.0], &[6.0, 10.0]).unwrap(), 1.0);
        assert!(mape(&[0.0, 0.0], &[1.0, 1.0]).is_err());
        assert!(mape(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn nll_examples() {
        assert_eq!(nll(&[1.0, 1.0]).unwrap(), 0.0);
        assert_relative_eq!(nll(&[1.0 / 22.0; 5]).unwrap(), 22f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(nll(&[0.5, 0.25]).unwrap(), 1.0397207708399179, epsilon = 1e-12);
        assert_relative_eq!(nll(&[0.0]).unwrap(), -(1e-10f64).ln());
        assert!(nll(&[1.5]).is_err());
        assert!(nll(&[-0.1]).is_err());
    }

    #[test]
    fn moving_accuracy_examples() {
        assert!(moving_accuracy(&[true; 300], 100).iter().all(|&a| a == 1.0));
        let alt: Vec<bool> = (0..400).map(|i| i % 2 == 0).collect();
        let ma = moving_accuracy(&alt, 100);
        assert!(ma[99..].iter().all(|&a| (a - 0.5).abs() < 1e-12));
        let ma = moving_accuracy(&[true, false, false, true], 100);
        assert_eq!(ma, vec![1.0, 0.5, 1.0 / 3.0, 0.5]);
    }

    #[test]
    fn window_holds_at_most_its_capacity() {
        let mut m = MetricAccumulator::new(3);
        for i in 0..5 {
            m.push(10.0, i as f64, Some(0.5)).unwrap();
            assert_eq!(m.window_len(), (i + 1).min(3));
            assert_eq!(m.count(), i + 1);
        }
        assert_relative_eq!(m.window_mape().unwrap(), (8.0 + 7.0 + 6.0) / 30.0);
    }

    #[test]
    fn mean_sd_matches_hand_values() {
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert_relative_eq!(s, (5.0f64 / 3.0).sqrt());
    }

    proptest! {
        #[test]
        fn mape_is_scale_invariant(
            pairs in prop::collection::vec((1.0f64..1e4, 0.0f64..1e4), 1..50),
            c in 0.01f64..100.0,
        ) {
            let (y, yh): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let cy: Vec<f64> = y.iter().map(|v| v * c).collect();
            let cyh: Vec<f64> = yh.iter().map(|v| v * c).collect();
            let a = mape(&y, &yh).unwrap();
            prop_assert!((a - mape(&cy, &cyh).unwrap()).abs() <= 1e-12 * a.max(1.0));
        }

        #[test]
        fn nll_nonnegative_and_zero_only_for_certainty(p in prop::collection::vec(0.0f64..=1.0, 1..50)) {
            let v = nll(&p).unwrap();
            prop_assert!(v >= 0.0);
            prop_assert_eq!(v == 0.0, p.iter().all(|&x| x == 1.0));
        }

        #[test]
        fn streaming_matches_batch(
            rows in prop::collection::vec((0.0f64..1e4, 0.0f64..1e4, 0.0f64..=1.0), 1..200),
            window in 1usize..60,
        ) {
            let mut acc = MetricAccumulator::new(window);
            for &(y, yh, p) in &rows {
                acc.push(y, yh, Some(p)).unwrap();
            }
            let y: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let yh: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let p: Vec<f64> = rows.iter().map(|r| r.2).collect();
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(1.0);
            if let Ok(m) = mape(&y, &yh) {
                prop_assert!(close(acc.mape().unwrap(), m));
            }
            prop_assert!(close(acc.nll().unwrap(), nll(&p).unwrap()));
            let start = rows.len().saturating_sub(window);
            if let Ok(m) = mape(&y[start..], &yh[start..]) {
                prop_assert!(close(acc.window_mape().unwrap(), m));
            }
            prop_assert!(close(acc.window_nll().unwrap(), nll(&p[start..]).unwrap()));
        }
    }
}
