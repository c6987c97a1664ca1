use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::deep::{round_f32, BnMode, DeepDecoderSpec, DeepWeights};
use super::DecoderWeights;
use crate::error::{Error, Result};
use crate::grid::BinaryMask;
use crate::shape::ShapeCode;

/// Adam and minibatch settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 1000,
            batch_size: 64,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Argument(format!("train config: {m}")));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be > 0");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be > 0");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be > 0");
        }
        Ok(())
    }
}

/// Per-pixel cross-entropy between `p = (tanh(x) + 1) / 2` and a binary
/// target, with its derivative in `x`. Written as `softplus(2x) - 2xy` so that
/// saturated outputs stay finite.
pub fn bce_with_tanh(x: f64, target: f64) -> (f64, f64) {
    let t = 2.0 * x;
    let softplus = if t > 0.0 { t + (-t).exp().ln_1p() } else { t.exp().ln_1p() };
    let sigmoid = if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    };
    (softplus - t * target, 2.0 * (sigmoid - target))
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: i32,
}

/// Fits a deep decoder to `(code, mask)` pairs. Returns the weights and the
/// mean training loss of each epoch, measured on the minibatches as they
/// were processed.
pub fn train_decoder(
    spec: DeepDecoderSpec,
    pairs: &[(ShapeCode, BinaryMask)],
    config: &TrainConfig,
) -> Result<(DecoderWeights, Vec<f64>)> {
    config.validate()?;
    spec.stages()?;
    if pairs.is_empty() {
        return Err(Error::Argument("decoder training needs at least one pair".into()));
    }
    for (i, (a, m)) in pairs.iter().enumerate() {
        if a.len() != spec.c {
            return Err(Error::Dimension(format!("pair {i}: code length {} != c = {}", a.len(), spec.c)));
        }
        if m.dims() != (spec.d_out, spec.d_out) {
            return Err(Error::Dimension(format!(
                "pair {i}: mask is {:?}, decoder output is {}x{}",
                m.dims(),
                spec.d_out,
                spec.d_out
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut w = DeepWeights::init(spec, &mut rng)?;
    let n_stages = w.stages.len();
    let shapes: Vec<usize> = w.tensors().iter().map(|t| t.2.len()).collect();
    let mut adam = Adam {
        m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        step: 0,
    };
    let pixels = spec.d_out * spec.d_out;
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let b = chunk.len();
            let alphas: Vec<f64> = chunk.iter().flat_map(|&i| pairs[i].0 .0.iter().copied()).collect();
            let cache = w.forward(&alphas, b, BnMode::Batch);
            let scale = 1.0 / (b * pixels) as f64;
            let mut grad_pre = vec![0.0; b * pixels];
            let mut loss = 0.0;
            for (bi, &i) in chunk.iter().enumerate() {
                let mask = pairs[i].1.data();
                for p in 0..pixels {
                    let (l, g) = bce_with_tanh(cache.pre[bi * pixels + p], mask[p] as f64);
                    loss += l;
                    grad_pre[bi * pixels + p] = g * scale;
                }
            }
            epoch_loss += loss / pixels as f64;

            let mut grads = DeepWeights::gradient_buffer(spec)?;
            w.backward(&cache, &grad_pre, &mut grads);
            w.update_running_stats(&cache);

            adam.step += 1;
            let bc1 = 1.0 - config.beta1.powi(adam.step);
            let bc2 = 1.0 - config.beta2.powi(adam.step);
            let grads_t: Vec<&Vec<f64>> = grads.tensors().into_iter().map(|t| t.2).collect();
            for (ti, param) in w.tensors_mut().into_iter().enumerate() {
                if DeepWeights::is_running_stat(ti, n_stages) {
                    continue;
                }
                let (m, v) = (&mut adam.m[ti], &mut adam.v[ti]);
                for j in 0..param.len() {
                    let g = grads_t[ti][j];
                    m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g;
                    v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g * g;
                    let step = config.learning_rate * (m[j] / bc1) / ((v[j] / bc2).sqrt() + config.epsilon);
                    param[j] = round_f32(param[j] - step);
                }
            }
        }
        let mean = epoch_loss / pairs.len() as f64;
        log::debug!("decoder epoch {epoch}: loss {mean:.6}");
        history.push(mean);
    }
    Ok((DecoderWeights::Deep(w), history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::decode;

    fn disk(n: usize, r: f64) -> BinaryMask {
        let c = (n as f64 - 1.0) / 2.0;
        BinaryMask::from_fn(n, n, |x, y| (x as f64 - c).powi(2) + (y as f64 - c).powi(2) <= r * r)
    }

    #[test]
    fn bce_matches_direct_formula() {
        for &x in &[-2.0, -0.3, 0.0, 0.7, 1.5] {
            for &y in &[0.0, 1.0] {
                let p = (f64::tanh(x) + 1.0) / 2.0;
                let direct = -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
                let (l, g) = bce_with_tanh(x, y);
                assert!((l - direct).abs() < 1e-12);
                let h = 1e-6;
                let fd = (bce_with_tanh(x + h, y).0 - bce_with_tanh(x - h, y).0) / (2.0 * h);
                assert!((fd - g).abs() < 1e-8);
            }
        }
        let (l, g) = bce_with_tanh(400.0, 1.0);
        assert!(l.is_finite() && l >= 0.0 && g.abs() < 1e-12);
    }

    #[test]
    fn memorizes_a_single_pair() {
        let spec = DeepDecoderSpec { c: 4, d_f: 3, n_conv0: 16, d0: 4, d_out: 16 };
        let pairs = vec![(ShapeCode(vec![0.5, -0.2, 0.1, 0.9]), disk(16, 5.0))];
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            epochs: 200,
            batch_size: 1,
            ..TrainConfig::default()
        };
        let (w, hist) = train_decoder(spec, &pairs, &cfg).unwrap();
        assert_eq!(hist.len(), 200);
        assert!(*hist.last().unwrap() < 0.05, "final loss {}", hist.last().unwrap());
        // running statistics have caught up with the single sample
        let out = decode(&w, &pairs[0].0).unwrap();
        let pred = out.threshold(0.0);
        let agree = pred.data().iter().zip(pairs[0].1.data()).filter(|(a, b)| a == b).count();
        assert!(agree as f64 >= 0.95 * 256.0, "agree {agree}");
    }

    #[test]
    fn identical_seed_gives_identical_history() {
        let spec = DeepDecoderSpec { c: 2, d_f: 3, n_conv0: 8, d0: 2, d_out: 8 };
        let pairs: Vec<_> = (0..5)
            .map(|i| (ShapeCode(vec![i as f64 * 0.2, 1.0 - i as f64 * 0.1]), disk(8, 1.0 + i as f64 * 0.5)))
            .collect();
        let cfg = TrainConfig {
            learning_rate: 1e-3,
            epochs: 5,
            batch_size: 2,
            rng_seed: 9,
            ..TrainConfig::default()
        };
        let (w1, h1) = train_decoder(spec, &pairs, &cfg).unwrap();
        let (w2, h2) = train_decoder(spec, &pairs, &cfg).unwrap();
        assert_eq!(h1.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), h2.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        assert_eq!(w1, w2);
    }

    #[test]
    fn rejects_bad_inputs() {
        let spec = DeepDecoderSpec { c: 2, d_f: 3, n_conv0: 8, d0: 2, d_out: 8 };
        let cfg = TrainConfig::default();
        assert!(train_decoder(spec, &[], &cfg).is_err());
        let wrong = vec![(ShapeCode(vec![0.0, 0.0]), disk(6, 1.0))];
        assert!(matches!(train_decoder(spec, &wrong, &cfg), Err(Error::Dimension(_))));
        let wrong = vec![(ShapeCode(vec![0.0]), disk(8, 1.0))];
        assert!(matches!(train_decoder(spec, &wrong, &cfg), Err(Error::Dimension(_))));
        let bad = TrainConfig { learning_rate: 0.0, ..TrainConfig::default() };
        assert!(train_decoder(spec, &[(ShapeCode(vec![0.0, 0.0]), disk(8, 1.0))], &bad).is_err());
    }
}
