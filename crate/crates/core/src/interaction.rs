//! Interaction Patterns: binary rasters of a box pair inside its attention window.
//!
//! Channel 0 holds the human box, channel 1 the object box, and any further
//! channels hold extra boxes for higher-order patterns. Everything outside the
//! tightest window around the boxes is discarded before resampling, so the
//! encoding ignores joint translation. A cell is set iff its centre falls
//! inside the box.
//!
//! Coordinates are taken relative to the window origin and snapped to a
//! 2^-20 px lattice before rasterizing. This makes the output independent of
//! the rounding noise that a translation introduces into `f64` differences.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::dataset::HoiInstance;
use crate::error::{Error, Result};

pub const DEFAULT_IP_SIZE: usize = 64;

const SNAP_SCALE: f64 = (1u64 << 20) as f64;

/// Relative coordinate on the snapping lattice.
pub fn snap(v: f64) -> f64 {
    (v * SNAP_SCALE).round() / SNAP_SCALE
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairFeatureMode {
    /// Pattern stretched to a square.
    Ip0,
    /// Pattern scaled on its longer side and zero padded.
    Ip1,
    /// Centre offset normalized by window width and height.
    Vec0,
    /// Centre offset normalized by the window's longer side.
    Vec1,
}

impl PairFeatureMode {
    pub fn padded(self) -> bool {
        matches!(self, PairFeatureMode::Ip1 | PairFeatureMode::Vec1)
    }

    pub fn is_pattern(self) -> bool {
        matches!(self, PairFeatureMode::Ip0 | PairFeatureMode::Ip1)
    }
}

impl std::str::FromStr for PairFeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ip0" => Ok(PairFeatureMode::Ip0),
            "ip1" => Ok(PairFeatureMode::Ip1),
            "vec0" => Ok(PairFeatureMode::Vec0),
            "vec1" => Ok(PairFeatureMode::Vec1),
            other => Err(Error::Config(format!("unknown pair feature mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InteractionPattern {
    size: usize,
    channels: usize,
    cells: Vec<u8>,
    window: BBox,
}

impl InteractionPattern {
    #[cfg(any(test, feature = "oracles"))]
    pub(crate) fn from_parts(size: usize, channels: usize, cells: Vec<u8>, window: BBox) -> Self {
        debug_assert_eq!(cells.len(), channels * size * size);
        InteractionPattern {
            size,
            channels,
            cells,
            window,
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn window(&self) -> BBox {
        self.window
    }

    /// Row-major `size x size` cells of one channel.
    pub fn channel(&self, c: usize) -> &[u8] {
        let n = self.size * self.size;
        &self.cells[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, row: usize, col: usize) -> u8 {
        self.channel(c)[row * self.size + col]
    }

    /// All channels, channel-major.
    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    /// Row and column ranges of the set cells of a channel, `None` if empty.
    pub fn extent(&self, c: usize) -> Option<(Range<usize>, Range<usize>)> {
        let ch = self.channel(c);
        let s = self.size;
        let mut bounds: Option<(usize, usize, usize, usize)> = None;
        for r in 0..s {
            for col in 0..s {
                if ch[r * s + col] != 0 {
                    let (r0, r1, c0, c1) = bounds.unwrap_or((r, r, col, col));
                    bounds = Some((r0.min(r), r1.max(r), c0.min(col), c1.max(col)));
                }
            }
        }
        bounds.map(|(r0, r1, c0, c1)| (r0..r1 + 1, c0..c1 + 1))
    }
}

/// Tightest window enclosing both boxes.
pub fn attention_window(human: &BBox, object: &BBox) -> BBox {
    human.enclose(object)
}

/// Cell layout along one axis: `cells` content cells starting at `offset`,
/// spanning `extent` pixels of the window.
#[derive(Clone, Copy, Debug)]
struct Axis {
    extent: f64,
    offset: usize,
    cells: usize,
}

impl Axis {
    fn centre(&self, local: usize) -> f64 {
        (local as f64 + 0.5) * self.extent / self.cells as f64
    }

    /// First local index whose centre is `>= v`.
    fn first_at_or_after(&self, v: f64) -> usize {
        let n = self.cells;
        let guess = (v * n as f64 / self.extent - 0.5).ceil();
        let mut i = if guess.is_nan() || guess <= 0.0 {
            0
        } else {
            (guess as usize).min(n)
        };
        while i > 0 && self.centre(i - 1) >= v {
            i -= 1;
        }
        while i < n && self.centre(i) < v {
            i += 1;
        }
        i
    }

    /// Grid indices whose centres fall in `[lo, hi)`.
    fn span(&self, lo: f64, hi: f64) -> Range<usize> {
        let a = self.first_at_or_after(lo);
        let b = self.first_at_or_after(hi);
        if a >= b {
            0..0
        } else {
            (a + self.offset)..(b + self.offset)
        }
    }
}

fn axes(width: f64, height: f64, size: usize, padded: bool) -> (Axis, Axis) {
    let full = |extent| Axis {
        extent,
        offset: 0,
        cells: size,
    };
    if !padded || width == height {
        return (full(width), full(height));
    }
    let (long, short) = if width > height {
        (width, height)
    } else {
        (height, width)
    };
    let n = ((short / long) * size as f64).round().clamp(1.0, size as f64) as usize;
    let pad = size - n;
    let short_axis = Axis {
        extent: short,
        offset: pad - pad / 2,
        cells: n,
    };
    if width > height {
        (full(width), short_axis)
    } else {
        (short_axis, full(height))
    }
}

/// Rasterize `human`, `object` and any `extra` boxes into a `size x size`
/// pattern; `padded` selects the aspect-preserving variant.
pub fn encode_ip(
    human: &BBox,
    object: &BBox,
    size: usize,
    padded: bool,
    extra: &[BBox],
) -> InteractionPattern {
    assert!(size >= 2, "pattern size must be at least 2");
    let window = extra
        .iter()
        .fold(attention_window(human, object), |w, b| w.enclose(b));
    let (ax, ay) = axes(
        snap(window.width()),
        snap(window.height()),
        size,
        padded,
    );
    let channels = 2 + extra.len();
    let mut cells = vec![0u8; channels * size * size];
    let boxes = [human, object].into_iter().chain(extra.iter());
    for (c, b) in boxes.enumerate() {
        let cols = ax.span(snap(b.x1 - window.x1), snap(b.x2 - window.x1));
        let rows = ay.span(snap(b.y1 - window.y1), snap(b.y2 - window.y1));
        let ch = &mut cells[c * size * size..(c + 1) * size * size];
        for r in rows {
            ch[r * size + cols.start..r * size + cols.end].fill(1);
        }
    }
    InteractionPattern {
        size,
        channels,
        cells,
        window,
    }
}

/// Human-to-object centre offset, normalized by the attention window
/// (width and height for vec0, the longer side for vec1).
pub fn encode_vec(human: &BBox, object: &BBox, padded: bool) -> (f64, f64) {
    let w = attention_window(human, object);
    let (hx, hy) = human.center();
    let (ox, oy) = object.center();
    let (dx, dy) = (ox - hx, oy - hy);
    if padded {
        let long = w.width().max(w.height());
        (dx / long, dy / long)
    } else {
        (dx / w.width(), dy / w.height())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AverageIp {
    pub size: usize,
    pub count: usize,
    pub human: Vec<f64>,
    pub object: Vec<f64>,
}

/// Cell-wise mean pattern over every instance of `hoi_id`.
pub fn average_ip(
    instances: &[HoiInstance],
    hoi_id: usize,
    size: usize,
    padded: bool,
) -> Result<AverageIp> {
    let n = size * size;
    let mut human = vec![0.0; n];
    let mut object = vec![0.0; n];
    let mut count = 0usize;
    for inst in instances.iter().filter(|i| i.hoi_id == hoi_id) {
        let p = encode_ip(&inst.human_box, &inst.object_box, size, padded, &[]);
        for (acc, &v) in human.iter_mut().zip(p.channel(0)) {
            *acc += v as f64;
        }
        for (acc, &v) in object.iter_mut().zip(p.channel(1)) {
            *acc += v as f64;
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyClass(hoi_id));
    }
    let inv = 1.0 / count as f64;
    human.iter_mut().chain(object.iter_mut()).for_each(|v| *v *= inv);
    Ok(AverageIp {
        size,
        count,
        human,
        object,
    })
}

/// Grayscale rendering of a `[0, 1]` grid, each cell drawn as `scale x scale` pixels.
pub fn grid_image(grid: &[f64], size: usize, scale: u32) -> image::GrayImage {
    let scale = scale.max(1);
    image::GrayImage::from_fn(size as u32 * scale, size as u32 * scale, |x, y| {
        let v = grid[(y / scale) as usize * size + (x / scale) as usize];
        image::Luma([(v.clamp(0.0, 1.0) * 255.0).round() as u8])
    })
}
