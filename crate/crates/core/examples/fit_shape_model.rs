//! Fits a kernel-PCA shape model to random blobs and reports how well
//! held-out shapes survive an encode/decode round trip.

use contour_fusion::decoder::{decode, DecoderWeights, LinearWeights};
use contour_fusion::metrics::iou;
use contour_fusion::shape::{fit_shape_bundle, ShapeKernelSpec};
use contour_fusion::synth::{blob_training_set, BlobParams};

fn main() -> contour_fusion::Result<()> {
    let params = BlobParams { base_radius: 12.0, ..BlobParams::default() };
    let train = blob_training_set(&params, 80, 48, 1)?;
    let bundle = fit_shape_bundle(&train, ShapeKernelSpec::linear(10.0), 16, None)?;
    let kpca = &bundle.kpca;
    let total: f64 = kpca.lambda.iter().sum();
    println!("c = {}  kde sigma = {:.3}", kpca.c(), bundle.kde.sigma);
    for (k, l) in kpca.lambda.iter().take(6).enumerate() {
        println!("  component {k}: variance {l:10.2} ({:.1}%)", 100.0 * l / total);
    }

    let decoder = DecoderWeights::Linear(LinearWeights::from_kpca(kpca)?);
    let test = blob_training_set(&params, 10, 48, 99)?;
    for (i, m) in test.masks().iter().enumerate() {
        let back = decode(&decoder, &kpca.encode(m)?)?.inside();
        println!("held-out {i}: reconstruction IoU {:.3}", iou(m, &back)?);
    }
    Ok(())
}
