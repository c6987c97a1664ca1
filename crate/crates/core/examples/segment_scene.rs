//! Generates a synthetic scene of touching blobs, segments it with the
//! linear decoder and scores each instance.

use contour_fusion::decoder::{DecoderVariant, DecoderWeights, LinearWeights};
use contour_fusion::evolve::{segment, SegmentParams};
use contour_fusion::metrics::{match_instances, weighted_iou};
use contour_fusion::shape::{fit_shape_bundle, ShapeKernelSpec};
use contour_fusion::synth::{gen_scene, shape_training_set, BlobParams, SceneSpec, ShapeFamily};

fn main() -> contour_fusion::Result<()> {
    let window = 64;
    let family = ShapeFamily::Blob(BlobParams { base_radius: 16.0, ..BlobParams::default() });
    let train = shape_training_set(&family, 100, window, 7)?;
    let bundle = fit_shape_bundle(&train, ShapeKernelSpec::linear(10.0), 16, None)?;
    let decoder = DecoderWeights::Linear(LinearWeights::from_kpca(&bundle.kpca)?);

    let spec = SceneSpec { width: 128, height: 128, n_shapes: 3, shape: family, ..SceneSpec::default() };
    let truth = gen_scene(&spec, 21)?;
    let params = SegmentParams::for_variant(DecoderVariant::Linear);
    let res = segment(&truth.inputs(window)?, &bundle, &decoder, &params)?;
    println!(
        "{:?} after {} iterations, energy {:.1} -> {:.1}",
        res.status,
        res.iterations,
        res.trace[0],
        res.trace.last().unwrap()
    );
    for s in &res.states {
        println!("  center ({:.1}, {:.1})  angle {:.2}", s.center.0, s.center.1, s.kappa);
    }
    let report = match_instances(&res.masks, &truth.gt_masks, 0.7)?;
    for m in &report.matches {
        let w = weighted_iou(&res.masks[m.pred], &truth.gt_masks[m.gt], 3.0)?;
        println!("gt {} <- pred {}: IoU {:.3}  wIoU {:.3}", m.gt, m.pred, m.iou, w);
    }
    println!("precision {:.2}  recall {:.2}", report.precision, report.recall);
    Ok(())
}
