//! Axis-aligned pixel-space boxes shared by annotation, label IO and metrics.

use serde::{Deserialize, Serialize};

/// Pixel-space box in edge coordinates: a box covering exactly pixel `(u, v)`
/// is `(u, v, u + 1, v + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    /// Strictly positive extent on both axes.
    pub fn is_valid(&self) -> bool {
        self.x_min < self.x_max && self.y_min < self.y_max
    }

    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        )
    }

    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let b = BBox::new(
            self.x_min.max(other.x_min),
            self.y_min.max(other.y_min),
            self.x_max.min(other.x_max),
            self.y_max.min(other.y_max),
        );
        b.is_valid().then_some(b)
    }

    /// Clip to `[0, width] x [0, height]`. Returns the clipped box (if any
    /// area remains) and whether clipping changed it.
    pub fn clip_to(&self, width: f64, height: f64) -> Option<(BBox, bool)> {
        let clipped = BBox::new(
            self.x_min.max(0.0),
            self.y_min.max(0.0),
            self.x_max.min(width),
            self.y_max.min(height),
        );
        clipped
            .is_valid()
            .then(|| (clipped, clipped != *self))
    }

    /// True when `other` lies inside `self` after growing `self` by `slack`
    /// on every side.
    pub fn contains_with_slack(&self, other: &BBox, slack: f64) -> bool {
        other.x_min >= self.x_min - slack
            && other.y_min >= self.y_min - slack
            && other.x_max <= self.x_max + slack
            && other.y_max <= self.y_max + slack
    }

    /// Intersection over union; 0 for disjoint or degenerate boxes.
    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = match self.intersection(other) {
            Some(b) => b.area(),
            None => return 0.0,
        };
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            (inter / union).clamp(0.0, 1.0)
        }
    }
}
