use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layers::{
    conv_same_backward, conv_same_forward, leaky, leaky_deriv, tconv2_backward, tconv2_forward,
};
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;
pub const INIT_STD: f64 = 0.02;

/// Architecture of the convolutional decoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeepDecoderSpec {
    pub c: usize,
    pub d_f: usize,
    pub n_conv0: usize,
    pub d0: usize,
    pub d_out: usize,
}

impl DeepDecoderSpec {
    /// Spec with 3x3 filters, 256 initial filters, and a 6 -> 96 upsampling path.
    pub fn paper_default(c: usize) -> Self {
        DeepDecoderSpec { c, d_f: 3, n_conv0: 256, d0: 6, d_out: 96 }
    }

    /// Number of upsampling stages; errors if the spec is inconsistent.
    pub fn stages(&self) -> Result<usize> {
        let bad = |m: String| Err(Error::Argument(format!("decoder spec: {m}")));
        if self.c == 0 || self.d0 == 0 || self.n_conv0 == 0 {
            return bad("c, d0 and n_conv0 must be positive".into());
        }
        if self.d_f.is_multiple_of(2) {
            return bad(format!("filter size {} must be odd", self.d_f));
        }
        if self.d_out <= self.d0 || !self.d_out.is_multiple_of(self.d0) || !(self.d_out / self.d0).is_power_of_two() {
            return bad(format!("d_out/d0 = {}/{} must be a power of two >= 2", self.d_out, self.d0));
        }
        let u = (self.d_out / self.d0).trailing_zeros() as usize;
        if !self.n_conv0.is_multiple_of(1 << u) {
            return bad(format!("n_conv0 {} not divisible by 2^{u}", self.n_conv0));
        }
        Ok(u)
    }

    /// Channel count entering stage `k` (k = u gives the last stage's output).
    pub fn channels(&self, k: usize) -> usize {
        self.n_conv0 >> k
    }

    /// Extent of the activation entering stage `k`.
    pub fn extent(&self, k: usize) -> usize {
        self.d0 << k
    }
}

/// One upsampling stage: transposed convolution then batch norm.
#[derive(Clone, Debug, PartialEq)]
pub struct Stage {
    /// `[d_f, d_f, c_in, c_out]`
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
    pub bn_gamma: Vec<f64>,
    pub bn_beta: Vec<f64>,
    pub bn_mean: Vec<f64>,
    pub bn_var: Vec<f64>,
}

/// Deep decoder parameters. Values are kept exactly representable in f32 so
/// that weight files round-trip bit for bit; arithmetic runs in f64.
#[derive(Clone, Debug, PartialEq)]
pub struct DeepWeights {
    pub spec: DeepDecoderSpec,
    /// `[d0*d0*n_conv0, c]`; output rows are ordered `(y, x, channel)`.
    pub dense_w: Vec<f64>,
    pub dense_b: Vec<f64>,
    pub stages: Vec<Stage>,
    /// `[d_f, d_f, c_last, 1]`
    pub out_kernel: Vec<f64>,
    pub out_bias: Vec<f64>,
}

pub(crate) fn round_f32(x: f64) -> f64 {
    x as f32 as f64
}

impl DeepWeights {
    /// All-zero weights with unit running variance.
    pub fn zeros(spec: DeepDecoderSpec) -> Result<Self> {
        let u = spec.stages()?;
        let k2 = spec.d_f * spec.d_f;
        let stages = (0..u)
            .map(|k| {
                let (cin, cout) = (spec.channels(k), spec.channels(k + 1));
                Stage {
                    kernel: vec![0.0; k2 * cin * cout],
                    bias: vec![0.0; cout],
                    bn_gamma: vec![0.0; cout],
                    bn_beta: vec![0.0; cout],
                    bn_mean: vec![0.0; cout],
                    bn_var: vec![1.0; cout],
                }
            })
            .collect();
        Ok(DeepWeights {
            spec,
            dense_w: vec![0.0; spec.d0 * spec.d0 * spec.n_conv0 * spec.c],
            dense_b: vec![0.0; spec.d0 * spec.d0 * spec.n_conv0],
            stages,
            out_kernel: vec![0.0; k2 * spec.channels(u)],
            out_bias: vec![0.0],
        })
    }

    /// All-zero buffer shaped like the weights, for accumulating gradients.
    pub fn gradient_buffer(spec: DeepDecoderSpec) -> Result<Self> {
        let mut g = Self::zeros(spec)?;
        g.stages.iter_mut().for_each(|s| s.bn_var.iter_mut().for_each(|v| *v = 0.0));
        Ok(g)
    }

    /// Normal(0, 0.02) weights, zero biases, identity batch norm.
    pub fn init<R: Rng>(spec: DeepDecoderSpec, rng: &mut R) -> Result<Self> {
        Self::init_with_std(spec, INIT_STD, rng)
    }

    pub fn init_with_std<R: Rng>(spec: DeepDecoderSpec, std: f64, rng: &mut R) -> Result<Self> {
        let mut w = Self::zeros(spec)?;
        let normal = Normal::new(0.0, std).map_err(|e| Error::Argument(format!("init std: {e}")))?;
        let mut fill = |v: &mut Vec<f64>| {
            for x in v.iter_mut() {
                *x = round_f32(normal.sample(rng));
            }
        };
        fill(&mut w.dense_w);
        for s in &mut w.stages {
            fill(&mut s.kernel);
            s.bn_gamma.iter_mut().for_each(|g| *g = 1.0);
        }
        fill(&mut w.out_kernel);
        Ok(w)
    }

    /// Named parameter tensors with their shapes, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &Vec<f64>)> {
        let s = &self.spec;
        let mut out = vec![
            ("dense.w".to_string(), vec![s.d0 * s.d0 * s.n_conv0, s.c], &self.dense_w),
            ("dense.b".to_string(), vec![s.d0 * s.d0 * s.n_conv0], &self.dense_b),
        ];
        for (k, st) in self.stages.iter().enumerate() {
            let (cin, cout) = (s.channels(k), s.channels(k + 1));
            out.push((format!("stage{k}.kernel"), vec![s.d_f, s.d_f, cin, cout], &st.kernel));
            out.push((format!("stage{k}.bias"), vec![cout], &st.bias));
            out.push((format!("stage{k}.bn.gamma"), vec![cout], &st.bn_gamma));
            out.push((format!("stage{k}.bn.beta"), vec![cout], &st.bn_beta));
            out.push((format!("stage{k}.bn.running_mean"), vec![cout], &st.bn_mean));
            out.push((format!("stage{k}.bn.running_var"), vec![cout], &st.bn_var));
        }
        let last = s.channels(self.stages.len());
        out.push(("out.kernel".to_string(), vec![s.d_f, s.d_f, last, 1], &self.out_kernel));
        out.push(("out.bias".to_string(), vec![1], &self.out_bias));
        out
    }

    /// Mutable views in the same order as [`tensors`](Self::tensors).
    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = vec![&mut self.dense_w, &mut self.dense_b];
        for st in &mut self.stages {
            out.push(&mut st.kernel);
            out.push(&mut st.bias);
            out.push(&mut st.bn_gamma);
            out.push(&mut st.bn_beta);
            out.push(&mut st.bn_mean);
            out.push(&mut st.bn_var);
        }
        out.push(&mut self.out_kernel);
        out.push(&mut self.out_bias);
        out
    }

    /// Checks tensor lengths against the spec and that running variances are positive.
    pub fn validate(&self) -> Result<()> {
        let reference = Self::zeros(self.spec)?;
        if self.stages.len() != reference.stages.len() {
            return Err(Error::Dimension("stage count does not match spec".into()));
        }
        for ((name, _, a), (_, _, b)) in self.tensors().iter().zip(reference.tensors()) {
            if a.len() != b.len() {
                return Err(Error::Dimension(format!(
                    "{name} has {} values, spec needs {}",
                    a.len(),
                    b.len()
                )));
            }
        }
        if self.stages.iter().flat_map(|s| &s.bn_var).any(|v| !(*v > 0.0)) {
            return Err(Error::Argument("batch-norm running variance must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn is_running_stat(index: usize, n_stages: usize) -> bool {
        if index < 2 || index >= 2 + 6 * n_stages {
            return false;
        }
        (index - 2) % 6 >= 4
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnMode {
    /// Minibatch statistics; running averages are not touched by the forward pass.
    Batch,
    /// Stored running statistics.
    Running,
}

struct StageCache {
    input: Vec<f64>,
    xhat: Vec<f64>,
    y: Vec<f64>,
    inv_std: Vec<f64>,
    batch_mean: Vec<f64>,
    batch_var: Vec<f64>,
}

/// Intermediate activations for a batch, kept for the backward pass.
pub struct ForwardCache {
    batch: usize,
    mode: BnMode,
    alphas: Vec<f64>,
    stages: Vec<StageCache>,
    last: Vec<f64>,
    /// Pre-tanh output, `[batch, d_out, d_out]`.
    pub pre: Vec<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> Vec<f64> {
        self.pre.iter().map(|x| x.tanh()).collect()
    }
}

impl DeepWeights {
    /// Runs a batch of codes (concatenated, `batch * c` values).
    pub fn forward(&self, alphas: &[f64], batch: usize, mode: BnMode) -> ForwardCache {
        let s = &self.spec;
        debug_assert_eq!(alphas.len(), batch * s.c);
        let n0 = s.d0 * s.d0 * s.n_conv0;
        let mut act = vec![0.0; batch * n0];
        for b in 0..batch {
            let a = &alphas[b * s.c..(b + 1) * s.c];
            for (o, out) in act[b * n0..(b + 1) * n0].iter_mut().enumerate() {
                let row = &self.dense_w[o * s.c..(o + 1) * s.c];
                *out = self.dense_b[o] + row.iter().zip(a).map(|(w, x)| w * x).sum::<f64>();
            }
        }
        let mut caches = Vec::with_capacity(self.stages.len());
        for (k, st) in self.stages.iter().enumerate() {
            let (h, cin, cout) = (s.extent(k), s.channels(k), s.channels(k + 1));
            let in_len = h * h * cin;
            let out_len = 4 * h * h * cout;
            let mut pre = vec![0.0; batch * out_len];
            for b in 0..batch {
                tconv2_forward(
                    &act[b * in_len..(b + 1) * in_len],
                    h,
                    h,
                    cin,
                    &st.kernel,
                    &st.bias,
                    s.d_f,
                    cout,
                    &mut pre[b * out_len..(b + 1) * out_len],
                );
            }
            let count = (batch * 4 * h * h) as f64;
            let (mean, var) = match mode {
                BnMode::Batch => {
                    let mut mean = vec![0.0; cout];
                    for px in pre.chunks_exact(cout) {
                        for (m, v) in mean.iter_mut().zip(px) {
                            *m += v;
                        }
                    }
                    mean.iter_mut().for_each(|m| *m /= count);
                    let mut var = vec![0.0; cout];
                    for px in pre.chunks_exact(cout) {
                        for ((q, v), m) in var.iter_mut().zip(px).zip(&mean) {
                            *q += (v - m) * (v - m);
                        }
                    }
                    var.iter_mut().for_each(|q| *q /= count);
                    (mean, var)
                }
                BnMode::Running => (st.bn_mean.clone(), st.bn_var.clone()),
            };
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
            let mut xhat = pre;
            let mut y = vec![0.0; xhat.len()];
            for (px, ypx) in xhat.chunks_exact_mut(cout).zip(y.chunks_exact_mut(cout)) {
                for ch in 0..cout {
                    px[ch] = (px[ch] - mean[ch]) * inv_std[ch];
                    ypx[ch] = st.bn_gamma[ch] * px[ch] + st.bn_beta[ch];
                }
            }
            let next: Vec<f64> = y.iter().map(|&v| leaky(v)).collect();
            caches.push(StageCache {
                input: std::mem::replace(&mut act, next),
                xhat,
                y,
                inv_std,
                batch_mean: mean,
                batch_var: var,
            });
        }
        let u = self.stages.len();
        let (h, cin) = (s.d_out, s.channels(u));
        let in_len = h * h * cin;
        let mut pre = vec![0.0; batch * h * h];
        for b in 0..batch {
            conv_same_forward(
                &act[b * in_len..(b + 1) * in_len],
                h,
                h,
                cin,
                &self.out_kernel,
                &self.out_bias,
                s.d_f,
                1,
                &mut pre[b * h * h..(b + 1) * h * h],
            );
        }
        ForwardCache {
            batch,
            mode,
            alphas: alphas.to_vec(),
            stages: caches,
            last: act,
            pre,
        }
    }

    /// Folds the minibatch statistics of a `Batch`-mode pass into the running averages.
    pub fn update_running_stats(&mut self, cache: &ForwardCache) {
        for (st, c) in self.stages.iter_mut().zip(&cache.stages) {
            for ch in 0..st.bn_mean.len() {
                st.bn_mean[ch] = round_f32(BN_MOMENTUM * st.bn_mean[ch] + (1.0 - BN_MOMENTUM) * c.batch_mean[ch]);
                st.bn_var[ch] = round_f32(BN_MOMENTUM * st.bn_var[ch] + (1.0 - BN_MOMENTUM) * c.batch_var[ch]);
            }
        }
    }

    /// Reverse pass given the gradient with respect to the pre-tanh output.
    /// Parameter gradients are accumulated into `grads`; running statistics
    /// get no gradient. Returns the gradient with respect to the codes.
    pub fn backward(&self, cache: &ForwardCache, grad_pre: &[f64], grads: &mut DeepWeights) -> Vec<f64> {
        let s = &self.spec;
        let batch = cache.batch;
        let u = self.stages.len();
        let (h, cin) = (s.d_out, s.channels(u));
        let in_len = h * h * cin;
        let mut g_act = vec![0.0; batch * in_len];
        for b in 0..batch {
            conv_same_backward(
                &cache.last[b * in_len..(b + 1) * in_len],
                h,
                h,
                cin,
                &self.out_kernel,
                s.d_f,
                1,
                &grad_pre[b * h * h..(b + 1) * h * h],
                &mut g_act[b * in_len..(b + 1) * in_len],
                &mut grads.out_kernel,
                &mut grads.out_bias,
            );
        }
        for k in (0..u).rev() {
            let st = &self.stages[k];
            let c = &cache.stages[k];
            let (h, cin, cout) = (s.extent(k), s.channels(k), s.channels(k + 1));
            // leaky relu and the affine part of batch norm
            let mut g_xhat = vec![0.0; g_act.len()];
            {
                let gs = &mut grads.stages[k];
                for (((ga, y), xh), gx) in g_act
                    .chunks_exact(cout)
                    .zip(c.y.chunks_exact(cout))
                    .zip(c.xhat.chunks_exact(cout))
                    .zip(g_xhat.chunks_exact_mut(cout))
                {
                    for ch in 0..cout {
                        let gy = ga[ch] * leaky_deriv(y[ch]);
                        gs.bn_gamma[ch] += gy * xh[ch];
                        gs.bn_beta[ch] += gy;
                        gx[ch] = gy * st.bn_gamma[ch];
                    }
                }
            }
            // normalization
            let mut g_pre = g_xhat;
            match cache.mode {
                BnMode::Running => {
                    for px in g_pre.chunks_exact_mut(cout) {
                        for ch in 0..cout {
                            px[ch] *= c.inv_std[ch];
                        }
                    }
                }
                BnMode::Batch => {
                    let count = (batch * 4 * h * h) as f64;
                    let mut mean_g = vec![0.0; cout];
                    let mut mean_gx = vec![0.0; cout];
                    for (px, xh) in g_pre.chunks_exact(cout).zip(c.xhat.chunks_exact(cout)) {
                        for ch in 0..cout {
                            mean_g[ch] += px[ch];
                            mean_gx[ch] += px[ch] * xh[ch];
                        }
                    }
                    for ch in 0..cout {
                        mean_g[ch] /= count;
                        mean_gx[ch] /= count;
                    }
                    for (px, xh) in g_pre.chunks_exact_mut(cout).zip(c.xhat.chunks_exact(cout)) {
                        for ch in 0..cout {
                            px[ch] = c.inv_std[ch] * (px[ch] - mean_g[ch] - xh[ch] * mean_gx[ch]);
                        }
                    }
                }
            }
            let in_len = h * h * cin;
            let out_len = 4 * h * h * cout;
            let mut g_in = vec![0.0; batch * in_len];
            let gs = &mut grads.stages[k];
            for b in 0..batch {
                tconv2_backward(
                    &c.input[b * in_len..(b + 1) * in_len],
                    h,
                    h,
                    cin,
                    &st.kernel,
                    s.d_f,
                    cout,
                    &g_pre[b * out_len..(b + 1) * out_len],
                    Some(&mut g_in[b * in_len..(b + 1) * in_len]),
                    &mut gs.kernel,
                    &mut gs.bias,
                );
            }
            g_act = g_in;
        }
        let n0 = s.d0 * s.d0 * s.n_conv0;
        let mut g_alpha = vec![0.0; batch * s.c];
        for b in 0..batch {
            let a = &cache.alphas[b * s.c..(b + 1) * s.c];
            let ga = &mut g_alpha[b * s.c..(b + 1) * s.c];
            for (o, g) in g_act[b * n0..(b + 1) * n0].iter().enumerate() {
                grads.dense_b[o] += g;
                let row = &self.dense_w[o * s.c..(o + 1) * s.c];
                let grow = &mut grads.dense_w[o * s.c..(o + 1) * s.c];
                for j in 0..s.c {
                    grow[j] += g * a[j];
                    ga[j] += g * row[j];
                }
            }
        }
        g_alpha
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> DeepDecoderSpec {
        DeepDecoderSpec { c: 4, d_f: 3, n_conv0: 8, d0: 2, d_out: 8 }
    }

    #[test]
    fn spec_validation() {
        assert_eq!(DeepDecoderSpec::paper_default(16).stages().unwrap(), 4);
        let p = DeepDecoderSpec::paper_default(16);
        let filters: Vec<usize> = (0..4).map(|k| p.channels(k)).collect();
        assert_eq!(filters, vec![256, 128, 64, 32]);
        let mut bad = small();
        bad.d_f = 4;
        assert!(bad.stages().is_err());
        bad = small();
        bad.d_out = 12;
        assert!(bad.stages().is_err());
        bad = small();
        bad.n_conv0 = 6;
        assert!(bad.stages().is_err());
    }

    #[test]
    fn running_stat_indices() {
        let w = DeepWeights::zeros(small()).unwrap();
        let names: Vec<String> = w.tensors().into_iter().map(|t| t.0).collect();
        for (i, n) in names.iter().enumerate() {
            assert_eq!(DeepWeights::is_running_stat(i, w.stages.len()), n.contains("running"), "{n}");
        }
    }

    fn loss(w: &DeepWeights, alphas: &[f64], batch: usize, mode: BnMode, up: &[f64]) -> f64 {
        let c = w.forward(alphas, batch, mode);
        c.output().iter().zip(up).map(|(a, b)| a * b).sum()
    }

    fn check_mode(mode: BnMode, batch: usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let spec = small();
        let mut w = DeepWeights::init(spec, &mut rng).unwrap();
        // scale up so the tiny init does not hide errors behind saturation-free linearity
        for t in w.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= 10.0);
        }
        for st in &mut w.stages {
            for (i, g) in st.bn_gamma.iter_mut().enumerate() {
                *g = 0.5 + 0.1 * i as f64;
            }
            for (i, v) in st.bn_var.iter_mut().enumerate() {
                *v = 0.5 + 0.2 * i as f64;
            }
            for (i, b) in st.bn_beta.iter_mut().enumerate() {
                *b = 0.05 * i as f64 - 0.1;
            }
        }
        let alphas: Vec<f64> = (0..batch * spec.c).map(|_| rng.random_range(-1.0..1.0)).collect();
        let up: Vec<f64> = (0..batch * 64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cache = w.forward(&alphas, batch, mode);
        let out = cache.output();
        let gpre: Vec<f64> = out.iter().zip(&up).map(|(z, g)| g * (1.0 - z * z)).collect();
        let mut grads = DeepWeights::gradient_buffer(spec).unwrap();
        let ga = w.backward(&cache, &gpre, &mut grads);
        let e = 1e-6;
        for j in 0..alphas.len() {
            let mut a = alphas.clone();
            a[j] += e;
            let mut b = alphas.clone();
            b[j] -= e;
            let fd = (loss(&w, &a, batch, mode, &up) - loss(&w, &b, batch, mode, &up)) / (2.0 * e);
            assert!((fd - ga[j]).abs() <= 1e-5 * fd.abs().max(1e-2), "alpha {j}: {fd} vs {}", ga[j]);
        }
        let n_stages = w.stages.len();
        let gt: Vec<Vec<f64>> = grads.tensors().into_iter().map(|t| t.2.clone()).collect();
        let names: Vec<String> = w.tensors().into_iter().map(|t| t.0).collect();
        for ti in 0..gt.len() {
            if DeepWeights::is_running_stat(ti, n_stages) {
                assert!(gt[ti].iter().all(|&g| g == 0.0));
                continue;
            }
            let len = gt[ti].len();
            let step = (len / 7).max(1);
            for j in (0..len).step_by(step) {
                let mut a = w.clone();
                a.tensors_mut()[ti][j] += e;
                let mut b = w.clone();
                b.tensors_mut()[ti][j] -= e;
                let fd = (loss(&a, &alphas, batch, mode, &up) - loss(&b, &alphas, batch, mode, &up)) / (2.0 * e);
                let g = gt[ti][j];
                assert!((fd - g).abs() <= 1e-5 * fd.abs().max(1e-2), "{} [{j}]: fd {fd} vs {g}", names[ti]);
            }
        }
    }

    #[test]
    fn gradients_match_fd_running_stats() {
        check_mode(BnMode::Running, 1);
    }

    #[test]
    fn gradients_match_fd_batch_stats() {
        check_mode(BnMode::Batch, 3);
    }

    #[test]
    fn running_stats_follow_momentum() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut w = DeepWeights::init(small(), &mut rng).unwrap();
        let alphas: Vec<f64> = (0..8).map(|i| i as f64 * 0.3 - 1.0).collect();
        let cache = w.forward(&alphas, 2, BnMode::Batch);
        let before = w.stages[0].bn_var[0];
        w.update_running_stats(&cache);
        let want = round_f32(0.9 * before + 0.1 * cache.stages[0].batch_var[0]);
        assert_eq!(w.stages[0].bn_var[0], want);
    }
}
