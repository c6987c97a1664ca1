//! Parses a configuration, overrides a key and prints the resolved
//! segmentation settings for both decoder variants.

use contour_fusion::config::Config;
use contour_fusion::decoder::DecoderVariant;

fn main() -> contour_fusion::Result<()> {
    let mut cfg = Config::parse_text(
        "# short runs\n\
         optimizer.max_iterations = 200\n\
         energy-weights.gamma_shp = 0.5\n\
         orientation.kind = von-mises\n\
         orientation.concentration = 4\n",
    )?;
    cfg.set("smooth.gamma", "0.01")?;
    cfg.validate()?;
    for variant in [DecoderVariant::Linear, DecoderVariant::Deep] {
        let p = cfg.segment_params(variant);
        println!("{variant:?}: delta {} gamma {} weights {:?}", p.smooth.delta, p.smooth.gamma, p.weights);
    }
    println!("--- resolved file ---\n{}", cfg.to_text());
    Ok(())
}
