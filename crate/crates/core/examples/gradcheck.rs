//! Compares analytic energy gradients with central differences on small
//! random scenes.

use contour_fusion::gradcheck::{run_gradcheck, GradcheckConfig};

fn main() -> contour_fusion::Result<()> {
    let cfg = GradcheckConfig { n_scenes: 2, ..GradcheckConfig::default() };
    let cases = run_gradcheck(&cfg, 0)?;
    for c in &cases {
        println!(
            "{:28} seed {:2}  {:4} params  rel error {:.2e}  {}",
            c.suite,
            c.seed,
            c.n_params,
            c.rel_error,
            if c.passed { "ok" } else { "FAIL" }
        );
    }
    Ok(())
}
