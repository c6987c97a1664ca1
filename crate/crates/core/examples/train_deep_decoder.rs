//! Trains a small convolutional decoder on the codes of a blob model and
//! compares its reconstructions with the linear decoder.

use contour_fusion::decoder::{decode, train_decoder, DecoderWeights, DeepDecoderSpec, LinearWeights, TrainConfig};
use contour_fusion::metrics::iou;
use contour_fusion::shape::{fit_shape_bundle, ShapeKernelSpec};
use contour_fusion::synth::{blob_training_set, BlobParams};

fn main() -> contour_fusion::Result<()> {
    let params = BlobParams { base_radius: 10.0, ..BlobParams::default() };
    let train = blob_training_set(&params, 60, 32, 5)?;
    let bundle = fit_shape_bundle(&train, ShapeKernelSpec::linear(8.0), 8, None)?;
    let pairs: Vec<_> = bundle
        .kpca
        .encode_training_set(&train)
        .into_iter()
        .map(|(m, a)| (a, m))
        .collect();

    let spec = DeepDecoderSpec { c: 8, d_f: 3, n_conv0: 16, d0: 4, d_out: 32 };
    let cfg = TrainConfig { learning_rate: 1e-3, epochs: 40, batch_size: 8, ..TrainConfig::default() };
    let (deep, losses) = train_decoder(spec, &pairs, &cfg)?;
    for (e, l) in losses.iter().enumerate().step_by(5) {
        println!("epoch {e:3}  loss {l:.4}");
    }

    let linear = DecoderWeights::Linear(LinearWeights::from_kpca(&bundle.kpca)?);
    for (name, dec) in [("linear", &linear), ("deep", &deep)] {
        let mut sum = 0.0;
        for (a, m) in &pairs {
            sum += iou(m, &decode(dec, a)?.inside())?;
        }
        println!("{name:6} mean training IoU {:.3}", sum / pairs.len() as f64);
    }
    Ok(())
}
