use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::Bucketizer;
use crate::error::{Error, Result};
use crate::sdr::Sdr;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SoftmaxParams {
    pub num_classes: usize,
    pub learning_rate: f64,
    /// Steps between an activation pattern and the target it is trained on.
    pub lookahead: usize,
}

impl Default for SoftmaxParams {
    fn default() -> Self {
        SoftmaxParams {
            num_classes: 22,
            learning_rate: 0.001,
            lookahead: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointEstimate {
    /// Center of the most probable bucket; ties go to the lower bucket.
    #[default]
    Argmax,
    /// Probability-weighted mean of bucket centers.
    Expectation,
}

/// Single-layer softmax classifier over a binary input.
///
/// For a binary input `x` the activation of class `j` is the sum of the
/// weights `w[i][j]` over active bits `i`. Training moves the weights of
/// active rows by `-λ (y - z)`, a step down the cross-entropy gradient, so
/// only `|x| * K` weights change per update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Wire", try_from = "Wire")]
pub struct SoftmaxClassifier {
    input_width: usize,
    params: SoftmaxParams,
    weights: Vec<f64>,
    history: VecDeque<Sdr>,
}

impl SoftmaxClassifier {
    pub fn new(input_width: usize, params: SoftmaxParams) -> Result<Self> {
        if input_width == 0 {
            return Err(Error::param("classifier.input_width", "must be positive"));
        }
        if params.num_classes < 2 {
            return Err(Error::param("classifier.num_classes", "need at least 2 classes"));
        }
        if !(params.learning_rate.is_finite() && params.learning_rate > 0.0) {
            return Err(Error::param("classifier.learning_rate", "must be positive"));
        }
        Ok(SoftmaxClassifier {
            weights: vec![0.0; input_width * params.num_classes],
            input_width,
            params,
            history: VecDeque::new(),
        })
    }

    pub fn params(&self) -> &SoftmaxParams {
        &self.params
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn num_classes(&self) -> usize {
        self.params.num_classes
    }

    pub fn weight(&self, input: usize, class: usize) -> f64 {
        self.weights[input * self.params.num_classes + class]
    }

    pub fn set_weight(&mut self, input: usize, class: usize, w: f64) {
        let k = self.params.num_classes;
        self.weights[input * k + class] = w;
    }

    fn check(&self, x: &Sdr) -> Result<()> {
        if x.width() != self.input_width {
            return Err(Error::WidthMismatch {
                expected: self.input_width,
                actual: x.width(),
            });
        }
        Ok(())
    }

    /// Class activations (pre-softmax).
    pub fn activations(&self, x: &Sdr) -> Result<Vec<f64>> {
        self.check(x)?;
        let k = self.params.num_classes;
        let mut a = vec![0.0; k];
        for &i in x.active() {
            let row = &self.weights[i as usize * k..(i as usize + 1) * k];
            for (acc, w) in a.iter_mut().zip(row) {
                *acc += w;
            }
        }
        Ok(a)
    }

    pub fn infer(&self, x: &Sdr) -> Result<Vec<f64>> {
        Ok(softmax(&self.activations(x)?))
    }

    /// One gradient step associating `x` with `target`.
    pub fn train(&mut self, x: &Sdr, target: usize) -> Result<()> {
        let k = self.params.num_classes;
        if target >= k {
            return Err(Error::OutOfRange { index: target, limit: k });
        }
        let mut delta = self.infer(x)?;
        delta[target] -= 1.0;
        let lr = self.params.learning_rate;
        for &i in x.active() {
            let row = &mut self.weights[i as usize * k..(i as usize + 1) * k];
            for (w, d) in row.iter_mut().zip(&delta) {
                *w -= lr * d;
            }
        }
        Ok(())
    }

    /// Streaming update: trains the pattern seen `lookahead` steps ago on
    /// `target` (when learning and a target is known), records `x`, and
    /// returns the distribution for `lookahead` steps ahead.
    pub fn compute(&mut self, x: &Sdr, target: Option<usize>, learn: bool) -> Result<Vec<f64>> {
        self.check(x)?;
        if let (true, Some(t)) = (learn, target) {
            if self.history.len() == self.params.lookahead {
                let old = self.history.front().expect("nonempty").clone();
                self.train(&old, t)?;
            }
        }
        self.history.push_back(x.clone());
        while self.history.len() > self.params.lookahead {
            self.history.pop_front();
        }
        self.infer(x)
    }
}

pub fn softmax(a: &[f64]) -> Vec<f64> {
    let max = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = a.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(dist: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p > dist[best] {
            best = i;
        }
    }
    best
}

impl PointEstimate {
    pub fn point(self, dist: &[f64], buckets: &Bucketizer) -> Result<f64> {
        match self {
            PointEstimate::Argmax => buckets.bucket_center(argmax(dist)),
            PointEstimate::Expectation => dist
                .iter()
                .enumerate()
                .map(|(i, p)| Ok(p * buckets.bucket_center(i)?))
                .sum(),
        }
    }
}

/// Serialized form: only nonzero weight rows are stored.
#[derive(Serialize, Deserialize)]
struct Wire {
    input_width: usize,
    params: SoftmaxParams,
    rows: Vec<(usize, Vec<f64>)>,
    history: VecDeque<Sdr>,
}

impl From<SoftmaxClassifier> for Wire {
    fn from(c: SoftmaxClassifier) -> Wire {
        let rows = c
            .weights
            .chunks(c.params.num_classes)
            .enumerate()
            .filter(|(_, r)| r.iter().any(|&v| v != 0.0))
            .map(|(i, r)| (i, r.to_vec()))
            .collect();
        Wire {
            input_width: c.input_width,
            params: c.params,
            rows,
            history: c.history,
        }
    }
}

impl TryFrom<Wire> for SoftmaxClassifier {
    type Error = Error;

    fn try_from(w: Wire) -> Result<Self> {
        let mut c = SoftmaxClassifier::new(w.input_width, w.params)?;
        let k = c.params.num_classes;
        for (i, row) in w.rows {
            if i >= c.input_width || row.len() != k {
                return Err(Error::Snapshot(format!("classifier weight row {i} has the wrong shape")));
            }
            c.weights[i * k..(i + 1) * k].copy_from_slice(&row);
        }
        if w.history.len() > c.params.lookahead || w.history.iter().any(|x| x.width() != c.input_width) {
            return Err(Error::Snapshot("classifier history does not match its parameters".into()));
        }
        c.history = w.history;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_relative_eq;
    use rand::Rng as _;

    fn clf(width: usize) -> SoftmaxClassifier {
        SoftmaxClassifier::new(width, SoftmaxParams::default()).unwrap()
    }

    fn random_case(seed: u64) -> (SoftmaxClassifier, Sdr, usize) {
        let mut r = rng::seeded(seed);
        let width = r.gen_range(5..60);
        let mut c = SoftmaxClassifier::new(
            width,
            SoftmaxParams { num_classes: r.gen_range(2..8), ..Default::default() },
        )
        .unwrap();
        for i in 0..width {
            for j in 0..c.num_classes() {
                c.set_weight(i, j, r.gen_range(-2.0..2.0));
            }
        }
        let x = Sdr::random(width, r.gen_range(1..=width.min(6)), seed).unwrap();
        let target = r.gen_range(0..c.num_classes());
        (c, x, target)
    }

    #[test]
    fn zero_weights_give_uniform() {
        let y = clf(10).infer(&Sdr::new(10, vec![1, 2]).unwrap()).unwrap();
        for p in y {
            assert_relative_eq!(p, 1.0 / 22.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn single_bit_closed_form() {
        let mut c = clf(10);
        c.set_weight(4, 0, 1.0);
        let y = c.infer(&Sdr::new(10, vec![4]).unwrap()).unwrap();
        let e = std::f64::consts::E;
        assert_relative_eq!(y[0], e / (e + 21.0), epsilon = 1e-15);
    }

    #[test]
    fn sparse_inference_matches_dense_evaluation() {
        for seed in 0..100 {
            let (c, x, _) = random_case(seed);
            let dense = x.to_dense();
            let k = c.num_classes();
            let a: Vec<f64> = (0..k)
                .map(|j| (0..c.input_width()).map(|i| c.weight(i, j) * if dense[i] { 1.0 } else { 0.0 }).sum())
                .collect();
            let z: f64 = a.iter().map(|v| v.exp()).sum();
            let y = c.infer(&x).unwrap();
            for j in 0..k {
                assert!((y[j] - a[j].exp() / z).abs() <= 1e-12);
            }
            assert!((y.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            assert!(y.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn update_matches_finite_difference_gradient() {
        for seed in 0..100 {
            let (mut c, x, target) = random_case(seed);
            let loss = |c: &SoftmaxClassifier| -c.infer(&x).unwrap()[target].ln();
            let lr = c.params().learning_rate;
            let before = c.clone();
            c.train(&x, target).unwrap();
            let h = 1e-6;
            for &i in x.active() {
                for j in 0..c.num_classes() {
                    let analytic = (before.weight(i as usize, j) - c.weight(i as usize, j)) / lr;
                    let mut plus = before.clone();
                    plus.set_weight(i as usize, j, before.weight(i as usize, j) + h);
                    let mut minus = before.clone();
                    minus.set_weight(i as usize, j, before.weight(i as usize, j) - h);
                    let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
                    let scale = analytic.abs().max(numeric.abs()).max(1e-3);
                    assert!((analytic - numeric).abs() / scale < 1e-5, "seed {seed}: {analytic} vs {numeric}");
                }
            }
        }
    }

    #[test]
    fn update_is_zero_at_the_fixed_point() {
        // Saturated weights make y equal the one-hot target to machine precision.
        let mut c = clf(4);
        c.set_weight(1, 3, 800.0);
        let before = c.clone();
        c.train(&Sdr::new(4, vec![1]).unwrap(), 3).unwrap();
        assert_eq!(c, before);
    }

    #[test]
    fn repeated_training_converges_monotonically() {
        let params = SoftmaxParams { learning_rate: 0.05, ..Default::default() };
        let mut c = SoftmaxClassifier::new(50, params).unwrap();
        let x = Sdr::new(50, vec![3, 9, 27]).unwrap();
        let mut last = 0.0;
        for _ in 0..2000 {
            c.train(&x, 5).unwrap();
            let p = c.infer(&x).unwrap()[5];
            assert!(p > last);
            last = p;
        }
        assert!(last > 0.9);
    }

    #[test]
    fn training_decreases_cross_entropy() {
        for seed in 0..100 {
            let (mut c, x, target) = random_case(seed);
            let before = -c.infer(&x).unwrap()[target].ln();
            c.train(&x, target).unwrap();
            assert!(-c.infer(&x).unwrap()[target].ln() < before);
        }
    }

    #[test]
    fn sparse_training_equals_dense_training() {
        let mut r = rng::seeded(5);
        let width = 40;
        let k = 6;
        let params = SoftmaxParams { num_classes: k, learning_rate: 0.05, lookahead: 1 };
        let mut sparse = SoftmaxClassifier::new(width, params).unwrap();
        let mut dense = vec![vec![0.0f64; k]; width];
        for step in 0..300 {
            let x = Sdr::random(width, 5, step).unwrap();
            let xd: Vec<f64> = x.to_dense().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
            let target = r.gen_range(0..k);
            let a: Vec<f64> = (0..k).map(|j| (0..width).fold(0.0, |s, i| s + dense[i][j] * xd[i])).collect();
            let mut g = softmax(&a);
            g[target] -= 1.0;
            for i in 0..width {
                for j in 0..k {
                    dense[i][j] -= 0.05 * g[j] * xd[i];
                }
            }
            sparse.train(&x, target).unwrap();
        }
        for i in 0..width {
            for j in 0..k {
                assert_eq!(sparse.weight(i, j).to_bits(), dense[i][j].to_bits(), "w[{i}][{j}]");
            }
        }
    }

    #[test]
    fn lookahead_pairs_old_pattern_with_new_target() {
        let params = SoftmaxParams { num_classes: 3, learning_rate: 0.5, lookahead: 2 };
        let mut c = SoftmaxClassifier::new(8, params).unwrap();
        let xs: Vec<Sdr> = (0..3).map(|i| Sdr::new(8, vec![i]).unwrap()).collect();
        c.compute(&xs[0], Some(0), true).unwrap();
        c.compute(&xs[1], Some(0), true).unwrap();
        assert_eq!(c.weight(0, 2), 0.0);
        // Pattern 0 is now two steps old and gets trained on target 2.
        c.compute(&xs[2], Some(2), true).unwrap();
        assert!(c.weight(0, 2) > 0.0);
        assert_eq!(c.weight(1, 2), 0.0);
    }

    #[test]
    fn errors() {
        let mut c = clf(10);
        assert!(c.infer(&Sdr::empty(11).unwrap()).is_err());
        assert!(c.train(&Sdr::empty(10).unwrap(), 22).is_err());
    }

    #[test]
    fn point_estimates() {
        let b = Bucketizer::new(0.0, 22.0, 22).unwrap();
        let mut one_hot = vec![0.0; 22];
        one_hot[3] = 1.0;
        assert_eq!(PointEstimate::Argmax.point(&one_hot, &b).unwrap(), 3.5);
        assert_eq!(PointEstimate::Argmax.point(&[1.0 / 22.0; 22], &b).unwrap(), 0.5);
        let mut bimodal = vec![0.0; 22];
        bimodal[2] = 0.3;
        bimodal[15] = 0.7;
        assert_eq!(PointEstimate::Argmax.point(&bimodal, &b).unwrap(), 15.5);
        assert_relative_eq!(PointEstimate::Expectation.point(&bimodal, &b).unwrap(), 0.3 * 2.5 + 0.7 * 15.5);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let (mut c, x, t) = random_case(3);
        c.compute(&x, Some(t), true).unwrap();
        let text = serde_json::to_string(&c).unwrap();
        let back: SoftmaxClassifier = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
    }
}
