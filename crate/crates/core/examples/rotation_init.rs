//! Recovers the orientation of a rotated asymmetric shape by the grid
//! search used to initialize shape angles.

use contour_fusion::decoder::{DecoderVariant, DecoderWeights, LinearWeights};
use contour_fusion::evolve::{init_rotation, rotate_mask, InitConfig, SegmentParams};
use contour_fusion::scene::OrientationModel;
use contour_fusion::shape::{fit_shape_bundle, ShapeKernelSpec, TrainingShapeSet};
use contour_fusion::synth::gen_keyed_bar;

fn main() -> contour_fusion::Result<()> {
    let window = 48;
    let masks = (0..12).map(|i| gen_keyed_bar(14.0 + 0.3 * i as f64, 3.5, 5.5, window)).collect();
    let bundle = fit_shape_bundle(&TrainingShapeSet::new(masks)?, ShapeKernelSpec::linear(10.0), 6, None)?;
    let decoder = DecoderWeights::Linear(LinearWeights::from_kpca(&bundle.kpca)?);
    let smooth = SegmentParams::for_variant(DecoderVariant::Linear).smooth;
    let cfg = InitConfig { use_rotation_init: true, delta_kappa: 10f64.to_radians(), ..InitConfig::default() };

    let bar = gen_keyed_bar(16.0, 3.5, 5.5, window);
    for deg in [0.0, 50.0, 130.0, 220.0, 310.0] {
        let seen = rotate_mask(&bar, f64::to_radians(deg));
        let k = init_rotation(&seen, &bundle.kpca, &decoder, &OrientationModel::default(), &smooth, &cfg)?;
        // The search returns the angle that brings the shape back upright.
        println!("rotated by {deg:5.1} deg, search says {:5.1} deg", k.to_degrees());
    }
    Ok(())
}
