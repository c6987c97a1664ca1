use serde::{Deserialize, Serialize};

use super::{Detection, LocationModel};

/// Axis-aligned rectangle in pixel coordinates (closed).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn centered(center: (f64, f64), size: f64) -> Self {
        let r = size / 2.0;
        Rect {
            x0: center.0 - r,
            y0: center.1 - r,
            x1: center.0 + r,
            y1: center.1 + r,
        }
    }

    pub fn dilate(&self, r: f64) -> Self {
        Rect {
            x0: self.x0 - r,
            y0: self.y0 - r,
            x1: self.x1 + r,
            y1: self.y1 + r,
        }
    }

    pub fn intersects(&self, o: &Rect) -> bool {
        self.x0 <= o.x1 && o.x0 <= self.x1 && self.y0 <= o.y1 && o.y0 <= self.y1
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }
}

/// Which pairs of shapes interact through the overlap term.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionGraph {
    /// Pairs `(i, j)` with `i < j`, indices into the detection list.
    pub edges: Vec<(usize, usize)>,
    pub rects: Vec<Rect>,
}

impl InteractionGraph {
    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        let key = (a.min(b), a.max(b));
        self.edges.binary_search(&key).is_ok()
    }
}

/// Each detection gets its class window centered on the detected position
/// and widened by the location model's reach; overlapping rectangles are
/// joined by an edge.
pub fn build_interaction_graph(
    detections: &[Detection],
    loc: &LocationModel,
    window_sizes: &[usize],
) -> InteractionGraph {
    let reach = loc.reach();
    let rects: Vec<Rect> = detections
        .iter()
        .map(|d| Rect::centered(d.center, window_sizes[d.class_id] as f64).dilate(reach))
        .collect();
    let mut edges = Vec::new();
    for i in 0..rects.len() {
        for j in i + 1..rects.len() {
            if rects[i].intersects(&rects[j]) {
                edges.push((i, j));
            }
        }
    }
    InteractionGraph { edges, rects }
}
