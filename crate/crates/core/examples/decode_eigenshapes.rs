//! Walks along the first principal component of a blob model and prints the
//! decoded shapes as ASCII.

use contour_fusion::decoder::{decode_slice, DecoderWeights, LinearWeights};
use contour_fusion::grid::BinaryMask;
use contour_fusion::shape::{fit_shape_bundle, ShapeKernelSpec};
use contour_fusion::synth::{blob_training_set, BlobParams};

fn ascii(m: &BinaryMask) -> String {
    let mut s = String::new();
    for y in (0..m.height()).step_by(2) {
        for x in 0..m.width() {
            s.push(if m.get(x, y) { '#' } else { '.' });
        }
        s.push('\n');
    }
    s
}

fn main() -> contour_fusion::Result<()> {
    let params = BlobParams { base_radius: 9.0, harmonic_amp: 0.35, ..BlobParams::default() };
    let train = blob_training_set(&params, 60, 32, 3)?;
    let bundle = fit_shape_bundle(&train, ShapeKernelSpec::linear(8.0), 4, None)?;
    let decoder = DecoderWeights::Linear(LinearWeights::from_kpca(&bundle.kpca)?);
    let sd = bundle.kpca.lambda[0].sqrt();
    for t in [-2.0, 0.0, 2.0] {
        let mut alpha = vec![0.0; bundle.kpca.c()];
        alpha[0] = t * sd;
        let m = decode_slice(&decoder, &alpha)?.inside();
        println!("alpha_0 = {t:+} sd, area {}\n{}", m.area(), ascii(&m));
    }
    Ok(())
}
