//! Generates a scene of rectilinear building footprints and prints the
//! instance map and the detections handed to the segmenter.

use contour_fusion::synth::{gen_scene, BuildingParams, SceneSpec, ShapeFamily};

fn main() -> contour_fusion::Result<()> {
    let spec = SceneSpec {
        width: 80,
        height: 80,
        n_shapes: 3,
        shape: ShapeFamily::Building(BuildingParams { min_side: 10.0, max_side: 24.0, ..BuildingParams::default() }),
        ..SceneSpec::default()
    };
    let truth = gen_scene(&spec, 5)?;
    for y in (0..spec.height).step_by(2) {
        let row: String = (0..spec.width)
            .map(|x| match truth.gt_masks.iter().position(|m| m.get(x, y)) {
                Some(k) => char::from(b'A' + k as u8),
                None => '.',
            })
            .collect();
        println!("{row}");
    }
    for d in &truth.detections {
        println!("{d:?}");
    }
    Ok(())
}
