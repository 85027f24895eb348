//! Axis-aligned boxes in continuous image coordinates.
//!
//! Boxes are half-open: pixel `(row, col)` lies inside iff
//! `x1 <= col < x2` and `y1 <= row < y2`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let b = BBox { x1, y1, x2, y2 };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x1, self.y1, self.x2, self.y2]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidBox(format!("{self}: non-finite coordinate")));
        }
        if !(self.x1 < self.x2 && self.y1 < self.y2) {
            return Err(Error::InvalidBox(format!("{self}: zero or negative extent")));
        }
        Ok(())
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    #[inline]
    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    #[inline]
    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BBox {
        BBox {
            x1: self.x1 + dx,
            y1: self.y1 + dy,
            x2: self.x2 + dx,
            y2: self.y2 + dy,
        }
    }

    /// Tightest box enclosing both.
    pub fn enclose(&self, other: &BBox) -> BBox {
        BBox {
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
            x2: self.x2.max(other.x2),
            y2: self.y2.max(other.y2),
        }
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// Intersection over union, in `[0, 1]`.
    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection_area(other);
        if inter == 0.0 {
            return 0.0;
        }
        let union = self.area() + other.area() - inter;
        (inter / union).clamp(0.0, 1.0)
    }

    /// Clip to `[0, width] x [0, height]`; `None` when nothing of positive area is left.
    pub fn clip(&self, width: f64, height: f64) -> Option<BBox> {
        let b = BBox {
            x1: self.x1.clamp(0.0, width),
            y1: self.y1.clamp(0.0, height),
            x2: self.x2.clamp(0.0, width),
            y2: self.y2.clamp(0.0, height),
        };
        (b.x1 < b.x2 && b.y1 < b.y2).then_some(b)
    }

    pub fn within(&self, width: f64, height: f64) -> bool {
        self.x1 >= 0.0 && self.y1 >= 0.0 && self.x2 <= width && self.y2 <= height
    }

    /// Bit-exact identity key, for counting distinct boxes.
    pub fn key(&self) -> [u64; 4] {
        [
            self.x1.to_bits(),
            self.y1.to_bits(),
            self.x2.to_bits(),
            self.y2.to_bits(),
        ]
    }

    /// Lexicographic total order on `(x1, y1, x2, y2)`.
    pub fn total_cmp(&self, other: &BBox) -> std::cmp::Ordering {
        self.x1
            .total_cmp(&other.x1)
            .then(self.y1.total_cmp(&other.y1))
            .then(self.x2.total_cmp(&other.x2))
            .then(self.y2.total_cmp(&other.y2))
    }
}

/// `min(IoU_h, IoU_o)` between two human-object pairs.
pub fn pair_overlap(human_a: &BBox, object_a: &BBox, human_b: &BBox, object_b: &BBox) -> f64 {
    human_a.iou(human_b).min(object_a.iou(object_b))
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

/// Comma-separated `x1,y1,x2,y2` using the shortest round-tripping decimal form.
impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.x1, self.y1, self.x2, self.y2)
    }
}

impl FromStr for BBox {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').collect();
        if parts.len() != 4 {
            return Err(Error::InvalidBox(format!(
                "expected 4 comma-separated coordinates, got `{s}`"
            )));
        }
        let mut v = [0.0; 4];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p
                .trim()
                .parse()
                .map_err(|e| Error::InvalidBox(format!("`{p}`: {e}")))?;
        }
        BBox::try_from(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn iou_identical_and_disjoint() {
        let a = b(1.0, 2.0, 5.0, 9.0);
        assert_eq!(a.iou(&a), 1.0);
        assert_eq!(a.iou(&b(10.0, 10.0, 12.0, 12.0)), 0.0);
        // touching edges share no area under the half-open convention
        assert_eq!(a.iou(&b(5.0, 2.0, 8.0, 9.0)), 0.0);
    }

    #[test]
    fn iou_matches_pixel_count() {
        // pixel-set oracle on the integer grid
        let a = b(0.0, 0.0, 10.0, 10.0);
        let c = b(5.0, 0.0, 15.0, 10.0);
        let inside = |bx: &BBox, r: i32, col: i32| {
            bx.x1 <= col as f64 && (col as f64) < bx.x2 && bx.y1 <= r as f64 && (r as f64) < bx.y2
        };
        let (mut inter, mut union) = (0u32, 0u32);
        for r in -2..20 {
            for col in -2..20 {
                let (ia, ic) = (inside(&a, r, col), inside(&c, r, col));
                inter += (ia && ic) as u32;
                union += (ia || ic) as u32;
            }
        }
        assert_eq!(inter as f64 / union as f64, 1.0 / 3.0);
        assert!((a.iou(&c) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_rejected() {
        assert!(BBox::new(3.0, 0.0, 3.0, 5.0).is_err());
        assert!(BBox::new(0.0, 4.0, 3.0, 1.0).is_err());
        assert!(BBox::new(f64::NAN, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn text_round_trip() {
        let a = b(0.1, 17.3, 4.0, 1e-3 + 20.0);
        let s = a.to_string();
        assert_eq!(s.parse::<BBox>().unwrap(), a);
        assert_eq!(b(0.0, 0.0, 4.0, 8.0).to_string(), "0,0,4,8");
        assert!("1,2,3".parse::<BBox>().is_err());
    }

    #[test]
    fn clip_to_image() {
        let a = b(-5.0, -1.0, 20.0, 8.0);
        assert_eq!(a.clip(10.0, 10.0), Some(b(0.0, 0.0, 10.0, 8.0)));
        assert_eq!(b(12.0, 0.0, 20.0, 4.0).clip(10.0, 10.0), None);
    }

    #[test]
    fn json_as_array() {
        let a = b(0.0, 0.5, 4.0, 8.0);
        let s = serde_json::to_string(&a).unwrap();
        assert_eq!(s, "[0.0,0.5,4.0,8.0]");
        assert_eq!(serde_json::from_str::<BBox>(&s).unwrap(), a);
        assert!(serde_json::from_str::<BBox>("[1,1,1,2]").is_err());
    }
}
