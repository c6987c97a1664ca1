//! Scores a hand-made prediction against ground truth: plain IoU, the
//! contour-weighted IoU and greedy one-to-one matching.

use contour_fusion::grid::BinaryMask;
use contour_fusion::metrics::{contour_band, iou_matrix, match_instances, weighted_iou};

fn disc(cx: f64, cy: f64, r: f64) -> BinaryMask {
    BinaryMask::from_fn(64, 64, |x, y| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r)
}

fn main() -> contour_fusion::Result<()> {
    let gt = vec![disc(18.0, 20.0, 10.0), disc(44.0, 40.0, 12.0)];
    let pred = vec![disc(45.0, 41.0, 11.0), disc(19.0, 20.0, 10.0), disc(50.0, 10.0, 4.0)];

    println!("band around gt 0 has {} pixels", contour_band(&gt[0], 3.0)?.area());
    for (p, row) in iou_matrix(&pred, &gt)?.iter().enumerate() {
        println!("pred {p}: IoU vs gt {row:.3?}");
    }
    let report = match_instances(&pred, &gt, 0.7)?;
    for m in &report.matches {
        let w = weighted_iou(&pred[m.pred], &gt[m.gt], 3.0)?;
        println!("matched pred {} to gt {}: IoU {:.3}  wIoU {:.3}", m.pred, m.gt, m.iou, w);
    }
    println!("precision {:.3}  recall {:.3}", report.precision, report.recall);
    Ok(())
}
