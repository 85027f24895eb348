//! Seeded synthetic scenes: flat-coloured people and objects laid out by
//! per-class spatial rules, with exhaustive ground truth and optional
//! detector-style corruption.

use std::collections::BTreeMap;
use std::sync::Arc;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::dataset::{
    Dataset, Detection, HoiInstance, ImageAnnotation, ImageStore, Split, StatsTable, Taxonomy,
    PERSON,
};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    Person,
    Bicycle,
    Chair,
    Ellipse,
    Rect,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pattern {
    Solid,
    Stripes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Appearance {
    pub shape: Shape,
    pub color: [u8; 3],
    pub pattern: Pattern,
    /// Inclusive pixel ranges.
    pub width: (u32, u32),
    pub height: (u32, u32),
}

/// Where the object sits relative to the human.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Placement {
    /// Directly below the human, horizontally centred (riding, sitting).
    Below,
    /// Left or right of the human, standing on the same ground line.
    Beside,
    /// Above the head (carrying).
    Overhead,
    /// Against the body at hand height.
    Held,
    /// On the ground some distance in front of the human.
    Ahead,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthRule {
    pub hoi_id: usize,
    pub verb: String,
    pub object_category: String,
    pub object: Appearance,
    pub placement: Placement,
    /// Relative frequency with which an interaction slot picks this rule.
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub rules: Vec<SynthRule>,
    pub human: Appearance,
    pub width: u32,
    pub height: u32,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    /// Probability that an image has no interaction at all.
    pub background_rate: f64,
    /// Probability of a second interaction in a non-background image.
    pub second_interaction_rate: f64,
    /// Uniform count in `0..=max` of people not interacting with anything.
    pub max_bystanders: usize,
    /// Uniform count in `0..=max` of objects nobody interacts with.
    pub max_distractors: usize,
    /// Probability that a bystander stands next to an object in some rule's
    /// layout without interacting (neutral pose, no label).
    pub decoy_rate: f64,
    /// Probability that an interaction slot yields an occluded ("invisible") label.
    pub invisible_rate: f64,
}

fn look(shape: Shape, color: [u8; 3], pattern: Pattern, w: (u32, u32), h: (u32, u32)) -> Appearance {
    Appearance {
        shape,
        color,
        pattern,
        width: w,
        height: h,
    }
}

fn rule(
    hoi_id: usize,
    verb: &str,
    object: &str,
    appearance: Appearance,
    placement: Placement,
    rate: f64,
) -> SynthRule {
    SynthRule {
        hoi_id,
        verb: verb.into(),
        object_category: object.into(),
        object: appearance,
        placement,
        rate,
    }
}

/// The default benchmark: 8 classes over 4 object categories. Three
/// categories have two classes that differ only in layout; the ball classes
/// also differ in the ball's look. `ride dog` and `hold ball` are rare.
pub fn default_rules() -> Vec<SynthRule> {
    let bicycle = look(Shape::Bicycle, [200, 40, 40], Pattern::Solid, (22, 28), (13, 16));
    let chair = look(Shape::Chair, [120, 70, 30], Pattern::Solid, (13, 16), (15, 19));
    let dog = look(Shape::Ellipse, [215, 170, 90], Pattern::Solid, (18, 24), (11, 14));
    let striped = look(Shape::Ellipse, [20, 20, 20], Pattern::Stripes, (9, 11), (9, 11));
    let plain = look(Shape::Ellipse, [250, 140, 0], Pattern::Solid, (9, 11), (9, 11));
    vec![
        rule(0, "ride", "bicycle", bicycle.clone(), Placement::Below, 1.0),
        rule(1, "walk", "bicycle", bicycle, Placement::Beside, 1.0),
        rule(2, "sit_on", "chair", chair.clone(), Placement::Below, 1.0),
        rule(3, "carry", "chair", chair, Placement::Overhead, 1.0),
        rule(4, "pet", "dog", dog.clone(), Placement::Beside, 1.0),
        rule(5, "ride", "dog", dog, Placement::Below, 0.07),
        rule(6, "kick", "ball", striped, Placement::Ahead, 1.0),
        rule(7, "hold", "ball", plain, Placement::Held, 0.07),
    ]
}

pub fn default_human() -> Appearance {
    look(Shape::Person, [40, 70, 190], Pattern::Solid, (10, 13), (26, 32))
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            rules: default_rules(),
            human: default_human(),
            width: 128,
            height: 128,
            n_train: 400,
            n_test: 150,
            seed: 9,
            background_rate: 0.15,
            second_interaction_rate: 0.3,
            max_bystanders: 1,
            max_distractors: 0,
            decoy_rate: 0.5,
            invisible_rate: 0.01,
        }
    }
}

impl SynthConfig {
    /// Easy variant: one interaction per image, no clutter, no rare classes.
    pub fn separable() -> Self {
        let mut rules = default_rules();
        for r in &mut rules {
            r.rate = 1.0;
        }
        SynthConfig {
            rules,
            background_rate: 0.0,
            second_interaction_rate: 0.0,
            max_bystanders: 0,
            max_distractors: 0,
            decoy_rate: 0.0,
            invisible_rate: 0.0,
            ..SynthConfig::default()
        }
    }

    /// Classes that share object category and look with another class and
    /// differ from it only in placement.
    pub fn spatial_classes(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .rules
            .iter()
            .filter(|r| {
                self.rules.iter().any(|o| {
                    o.hoi_id != r.hoi_id
                        && o.object_category == r.object_category
                        && o.object == r.object
                        && o.placement != r.placement
                })
            })
            .map(|r| r.hoi_id)
            .collect();
        out.sort_unstable();
        out
    }

    pub fn taxonomy(&self) -> Result<Taxonomy> {
        let mut rules: Vec<&SynthRule> = self.rules.iter().collect();
        rules.sort_by_key(|r| r.hoi_id);
        Taxonomy::from_pairs(rules.iter().map(|r| (r.verb.as_str(), r.object_category.as_str())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.rules.is_empty() {
            return Err(Error::Config("at least one synthesis rule is required".into()));
        }
        for (name, p) in [
            ("background_rate", self.background_rate),
            ("second_interaction_rate", self.second_interaction_rate),
            ("decoy_rate", self.decoy_rate),
            ("invisible_rate", self.invisible_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} {p} outside [0, 1]")));
            }
        }
        let tax = self.taxonomy()?;
        for r in &self.rules {
            if r.rate < 0.0 || !r.rate.is_finite() {
                return Err(Error::Config(format!("rule {} has a bad rate {}", r.hoi_id, r.rate)));
            }
            if tax.category(r.hoi_id).map(|c| (&c.verb, &c.object_category))
                != Some((&r.verb, &r.object_category))
            {
                return Err(Error::Config(format!("rule ids must be dense, got {}", r.hoi_id)));
            }
            for a in [&r.object, &self.human] {
                if a.width.0 == 0 || a.width.0 > a.width.1 || a.height.0 == 0 || a.height.0 > a.height.1 {
                    return Err(Error::Config(format!("rule {} has an empty size range", r.hoi_id)));
                }
            }
            let (w, h) = layout_extent(&self.human, r);
            if w > self.width || h > self.height {
                return Err(Error::Placement {
                    hoi_id: r.hoi_id,
                    message: format!(
                        "`{} {}` needs up to {w}x{h} px but images are {}x{}",
                        r.verb, r.object_category, self.width, self.height
                    ),
                });
            }
        }
        Ok(())
    }
}

/// Largest extent a rule's human+object layout can take.
fn layout_extent(human: &Appearance, r: &SynthRule) -> (u32, u32) {
    let (hw, hh) = (human.width.1, human.height.1);
    let (ow, oh) = (r.object.width.1, r.object.height.1);
    match r.placement {
        Placement::Below | Placement::Overhead => (hw.max(ow) + 4, hh + oh + 2),
        Placement::Beside => (hw + ow + hh / 2, hh.max(oh) + 2),
        Placement::Held => (hw + ow + 2, hh.max(oh)),
        Placement::Ahead => (hw + ow + 3 * hh, hh.max(oh) + 2),
    }
}

/// Sampled sizes, in pixels.
fn sample_size<R: Rng>(a: &Appearance, rng: &mut R) -> (i64, i64) {
    (
        rng.random_range(a.width.0..=a.width.1) as i64,
        rng.random_range(a.height.0..=a.height.1) as i64,
    )
}

/// Object box relative to a human box at the origin.
fn place_object<R: Rng>(p: Placement, hw: i64, hh: i64, ow: i64, oh: i64, rng: &mut R) -> [i64; 4] {
    let side = |rng: &mut R| rng.random_bool(0.5);
    let (x, y) = match p {
        Placement::Below => {
            let jitter = (ow / 6).max(1);
            let x = (hw - ow) / 2 + rng.random_range(-jitter..=jitter);
            (x, hh + rng.random_range(-1..=2))
        }
        Placement::Overhead => {
            let jitter = (ow / 6).max(1);
            let x = (hw - ow) / 2 + rng.random_range(-jitter..=jitter);
            (x, -oh - rng.random_range(-1..=2))
        }
        Placement::Beside => {
            let gap = rng.random_range(2..=hh / 2);
            let x = if side(rng) { hw + gap } else { -ow - gap };
            (x, hh - oh + rng.random_range(-2..=2))
        }
        Placement::Held => {
            let x = if side(rng) { hw - 1 } else { -ow + 1 };
            (x, hh / 3 + rng.random_range(0..=hh / 4))
        }
        Placement::Ahead => {
            let gap = rng.random_range(hh..=3 * hh);
            let x = if side(rng) { hw + gap } else { -ow - gap };
            (x, hh - oh + rng.random_range(-2..=2))
        }
    };
    [x, y, x + ow, y + oh]
}

#[derive(Clone, Debug)]
struct Entity {
    bbox: [i64; 4],
    /// People only: index of the object category they interact with, which
    /// picks the arm pose. `None` is the idle pose.
    pose: Option<usize>,
    look: Appearance,
    category: String,
}

fn to_bbox(b: [i64; 4]) -> BBox {
    BBox {
        x1: b[0] as f64,
        y1: b[1] as f64,
        x2: b[2] as f64,
        y2: b[3] as f64,
    }
}

fn inflate(b: [i64; 4], m: i64) -> [i64; 4] {
    [b[0] - m, b[1] - m, b[2] + m, b[3] + m]
}

fn overlaps(a: [i64; 4], b: [i64; 4]) -> bool {
    a[0] < b[2] && b[0] < a[2] && a[1] < b[3] && b[1] < a[3]
}

fn enclose(a: [i64; 4], b: [i64; 4]) -> [i64; 4] {
    [a[0].min(b[0]), a[1].min(b[1]), a[2].max(b[2]), a[3].max(b[3])]
}

/// Translate a group (given relative to some origin) to a random free spot.
fn find_spot<R: Rng>(
    group: &[[i64; 4]],
    taken: &[[i64; 4]],
    w: i64,
    h: i64,
    rng: &mut R,
) -> Option<(i64, i64)> {
    let ext = group.iter().copied().reduce(enclose)?;
    let (gw, gh) = (ext[2] - ext[0], ext[3] - ext[1]);
    if gw > w || gh > h {
        return None;
    }
    for _ in 0..60 {
        let dx = rng.random_range(0..=w - gw) - ext[0];
        let dy = rng.random_range(0..=h - gh) - ext[1];
        let free = group.iter().all(|b| {
            let moved = [b[0] + dx, b[1] + dy, b[2] + dx, b[3] + dy];
            taken.iter().all(|t| !overlaps(inflate(moved, 2), *t))
        });
        if free {
            return Some((dx, dy));
        }
    }
    None
}

fn shift(b: [i64; 4], dx: i64, dy: i64) -> [i64; 4] {
    [b[0] + dx, b[1] + dy, b[2] + dx, b[3] + dy]
}

fn jitter_color<R: Rng>(c: [u8; 3], rng: &mut R) -> [u8; 3] {
    let j = rng.random_range(-15i32..=15);
    c.map(|v| (v as i32 + j).clamp(0, 255) as u8)
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, Rgb(c));
    }
}

fn fill_rect(img: &mut RgbImage, b: [i64; 4], c: [u8; 3]) {
    for y in b[1]..b[3] {
        for x in b[0]..b[2] {
            put(img, x, y, c);
        }
    }
}

fn fill_ellipse(img: &mut RgbImage, b: [i64; 4], c: [u8; 3], stripes: bool) {
    let cx = (b[0] + b[2]) as f64 / 2.0;
    let cy = (b[1] + b[3]) as f64 / 2.0;
    let rx = (b[2] - b[0]) as f64 / 2.0;
    let ry = (b[3] - b[1]) as f64 / 2.0;
    for y in b[1]..b[3] {
        for x in b[0]..b[2] {
            let u = (x as f64 + 0.5 - cx) / rx;
            let v = (y as f64 + 0.5 - cy) / ry;
            if u * u + v * v <= 1.0 {
                let white = stripes && ((x - b[0]) / 2) % 2 == 1;
                put(img, x, y, if white { [245, 245, 245] } else { c });
            }
        }
    }
}

const SKIN: [u8; 3] = [230, 190, 160];

fn draw(img: &mut RgbImage, e: &Entity, color: [u8; 3]) {
    let [x1, y1, x2, y2] = e.bbox;
    let (w, h) = (x2 - x1, y2 - y1);
    match e.look.shape {
        Shape::Person => {
            let head = (h / 4).max(3);
            let hx = (w - head) / 2;
            fill_ellipse(img, [x1 + hx, y1, x1 + hx + head, y1 + head], SKIN, false);
            let torso = [x1, y1 + head, x2, y1 + head + (h - head) / 2];
            fill_rect(img, torso, color);
            // Both poses paint about the same skin area on the torso, so they
            // only differ in layout once the crop is large enough.
            // Two 1-px arm lines; the pose only moves them sideways, so it
            // survives a person-sized crop but not a much larger window.
            let cols = match e.pose.map(|p| p % 4) {
                None => [0, w - 1],
                Some(0) => [2, w - 3],
                Some(1) => [w / 2 - 1, w / 2],
                Some(2) => [1, 3],
                Some(_) => [w - 4, w - 2],
            };
            for c in cols {
                fill_rect(img, [x1 + c, torso[1], x1 + c + 1, torso[3]], SKIN);
            }
            let leg = (w / 3).max(1);
            fill_rect(img, [x1 + 1, y1 + head + (h - head) / 2, x1 + 1 + leg, y2], [30, 30, 60]);
            fill_rect(img, [x2 - 1 - leg, y1 + head + (h - head) / 2, x2 - 1, y2], [30, 30, 60]);
        }
        Shape::Bicycle => {
            let d = (h * 3 / 5).max(3);
            fill_ellipse(img, [x1, y2 - d, x1 + d, y2], [25, 25, 25], false);
            fill_ellipse(img, [x2 - d, y2 - d, x2, y2], [25, 25, 25], false);
            fill_rect(img, [x1 + d / 2, y1 + h / 4, x2 - d / 2, y1 + h / 4 + (h / 5).max(2)], color);
            fill_rect(img, [x1 + w / 3, y1, x1 + w / 3 + 2, y2 - d / 2], color);
        }
        Shape::Chair => {
            let t = (w / 5).max(2);
            fill_rect(img, [x1, y1, x1 + t, y2], color);
            fill_rect(img, [x1, y1 + h / 2, x2, y1 + h / 2 + t], color);
            fill_rect(img, [x2 - t, y1 + h / 2, x2, y2], color);
        }
        Shape::Ellipse => fill_ellipse(img, e.bbox, color, e.look.pattern == Pattern::Stripes),
        Shape::Rect => fill_rect(img, e.bbox, color),
    }
}

fn background<R: Rng>(w: u32, h: u32, rng: &mut R) -> RgbImage {
    let base = rng.random_range(90..=160i32);
    let tint = [0, 1, 2].map(|_| base + rng.random_range(-12..=12));
    let mut img = RgbImage::from_fn(w, h, |_, _| {
        let n = rng.random_range(-10..=10);
        Rgb(tint.map(|t| (t + n).clamp(0, 255) as u8))
    });
    // a few faint patches so crops of empty space are not uniform
    for _ in 0..rng.random_range(2..=4) {
        let pw = rng.random_range(8..=w as i64 / 2);
        let ph = rng.random_range(8..=h as i64 / 2);
        let x = rng.random_range(0..=w as i64 - pw);
        let y = rng.random_range(0..=h as i64 - ph);
        let c = tint.map(|t| (t + rng.random_range(-25..=25)).clamp(0, 255) as u8);
        fill_rect(&mut img, [x, y, x + pw, y + ph], c);
    }
    img
}

/// Everything drawn in one image.
struct Scene {
    annotation: ImageAnnotation,
    image: RgbImage,
    entities: Vec<Entity>,
}

fn pick_rule<'a, R: Rng>(rules: &'a [SynthRule], total: f64, rng: &mut R) -> &'a SynthRule {
    let mut u = rng.random_range(0.0..total);
    for r in rules {
        if r.rate <= 0.0 {
            continue;
        }
        if u < r.rate {
            return r;
        }
        u -= r.rate;
    }
    rules.iter().rev().find(|r| r.rate > 0.0).expect("positive total rate")
}

fn render_scene(cfg: &SynthConfig, image_id: String, rng: &mut ChaCha8Rng) -> Scene {
    let (w, h) = (cfg.width as i64, cfg.height as i64);
    let mut ann = ImageAnnotation::new(image_id.clone(), cfg.width, cfg.height);
    let mut taken: Vec<[i64; 4]> = Vec::new();
    let mut entities: Vec<Entity> = Vec::new();
    let categories: Vec<&str> = {
        let mut c: Vec<&str> = cfg.rules.iter().map(|r| r.object_category.as_str()).collect();
        c.dedup();
        c
    };
    let pose_of = |cat: &str| categories.iter().position(|c| *c == cat);
    let human = |b, pose| Entity {
        bbox: b,
        pose,
        look: cfg.human.clone(),
        category: PERSON.to_string(),
    };
    let total_rate: f64 = cfg.rules.iter().map(|r| r.rate.max(0.0)).sum();

    let slots = if total_rate <= 0.0 || rng.random_bool(cfg.background_rate) {
        0
    } else {
        1 + rng.random_bool(cfg.second_interaction_rate) as usize
    };
    for _ in 0..slots {
        let r = pick_rule(&cfg.rules, total_rate, rng);
        let (hw, hh) = sample_size(&cfg.human, rng);
        let (ow, oh) = sample_size(&r.object, rng);
        let hb = [0, 0, hw, hh];
        let invisible = rng.random_bool(cfg.invisible_rate);
        let ob = place_object(r.placement, hw, hh, ow, oh, rng);
        let group: Vec<[i64; 4]> = if invisible { vec![hb] } else { vec![hb, ob] };
        let Some((dx, dy)) = find_spot(&group, &taken, w, h, rng) else {
            continue;
        };
        let (hb, ob) = (shift(hb, dx, dy), shift(ob, dx, dy));
        ann.positives.insert(r.hoi_id);
        taken.push(hb);
        entities.push(human(hb, pose_of(&r.object_category)));
        if invisible {
            // the object is fully occluded: label only
            ann.invisible.insert(r.hoi_id);
            continue;
        }
        taken.push(ob);
        entities.push(Entity {
            bbox: ob,
            pose: None,
            look: r.object.clone(),
            category: r.object_category.clone(),
        });
        ann.instances.push(HoiInstance {
            image_id: image_id.clone(),
            hoi_id: r.hoi_id,
            human_box: to_bbox(hb),
            object_box: to_bbox(ob),
        });
    }
    // an invisible label on a class that also has instances is still a positive
    ann.invisible.retain(|k| !ann.instances.iter().any(|i| i.hoi_id == *k));

    for _ in 0..rng.random_range(0..=cfg.max_bystanders) {
        let (hw, hh) = sample_size(&cfg.human, rng);
        let hb = [0, 0, hw, hh];
        if rng.random_bool(cfg.decoy_rate) {
            let r = &cfg.rules[rng.random_range(0..cfg.rules.len())];
            let (ow, oh) = sample_size(&r.object, rng);
            let ob = place_object(r.placement, hw, hh, ow, oh, rng);
            if let Some((dx, dy)) = find_spot(&[hb, ob], &taken, w, h, rng) {
                let (hb, ob) = (shift(hb, dx, dy), shift(ob, dx, dy));
                taken.extend([hb, ob]);
                entities.push(human(hb, None));
                entities.push(Entity {
                    bbox: ob,
                    pose: None,
                    look: r.object.clone(),
                    category: r.object_category.clone(),
                });
            }
        } else if let Some((dx, dy)) = find_spot(&[hb], &taken, w, h, rng) {
            let b = shift(hb, dx, dy);
            taken.push(b);
            entities.push(human(b, None));
        }
    }
    for _ in 0..rng.random_range(0..=cfg.max_distractors) {
        let r = &cfg.rules[rng.random_range(0..cfg.rules.len())];
        let (ow, oh) = sample_size(&r.object, rng);
        if let Some((dx, dy)) = find_spot(&[[0, 0, ow, oh]], &taken, w, h, rng) {
            let b = [dx, dy, dx + ow, dy + oh];
            taken.push(b);
            entities.push(Entity {
                bbox: b,
                pose: None,
                look: r.object.clone(),
                category: r.object_category.clone(),
            });
        }
    }

    let mut image = background(cfg.width, cfg.height, rng);
    for e in &entities {
        let c = jitter_color(e.look.color, rng);
        draw(&mut image, e, c);
    }
    Scene {
        annotation: ann,
        image,
        entities,
    }
}

/// Counts the generator reports for what it drew, independent of the
/// statistics code that later re-derives them from the annotations.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Declaration {
    pub train: StatsTable,
    pub test: StatsTable,
}

#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub train: Dataset,
    pub test: Dataset,
    /// Every drawn person and object as a score-1 detection, including
    /// bystanders and distractors.
    pub train_scene: Vec<Detection>,
    pub test_scene: Vec<Detection>,
    pub declared: Declaration,
}

fn image_rng(seed: u64, split: Split, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tag = match split {
        Split::Train => 0u64,
        Split::Test => 1u64,
    };
    rng.set_stream((tag << 40) | index as u64);
    rng
}

fn generate_split(
    cfg: &SynthConfig,
    taxonomy: &Arc<Taxonomy>,
    split: Split,
    n: usize,
) -> Result<(Dataset, Vec<Detection>, StatsTable)> {
    let scenes = crate::par::map_range(n, |i| {
        let id = format!("{split}_{i:06}");
        render_scene(cfg, id, &mut image_rng(cfg.seed, split, i))
    });
    let mut annotations = Vec::with_capacity(n);
    let mut rasters = BTreeMap::new();
    let mut scene_dets = Vec::new();
    let (mut positives, mut instances, mut boxes) = (0, 0, 0);
    for s in scenes {
        positives += s.annotation.positives.len();
        instances += s.annotation.instances.len();
        // every drawn interaction uses its own pair of boxes
        boxes += 2 * s.annotation.instances.len();
        for e in &s.entities {
            scene_dets.push(Detection {
                image_id: s.annotation.image_id.clone(),
                category: e.category.clone(),
                score: 1.0,
                bbox: to_bbox(e.bbox),
            });
        }
        rasters.insert(s.annotation.image_id.clone(), Arc::new(s.image));
        annotations.push(s.annotation);
    }
    let declared = StatsTable::from_counts(n, positives, instances, boxes);
    let ds = Dataset::new(
        taxonomy.clone(),
        split,
        annotations,
        ImageStore::Memory(Arc::new(rasters)),
    )?;
    Ok((ds, scene_dets, declared))
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let taxonomy = Arc::new(cfg.taxonomy()?);
    let (train, train_scene, dtrain) = generate_split(cfg, &taxonomy, Split::Train, cfg.n_train)?;
    let (test, test_scene, dtest) = generate_split(cfg, &taxonomy, Split::Test, cfg.n_test)?;
    Ok(SynthOutput {
        train,
        test,
        train_scene,
        test_scene,
        declared: Declaration {
            train: dtrain,
            test: dtest,
        },
    })
}

/// One score-1 detection per distinct ground-truth box.
pub fn perfect_detections(ds: &Dataset) -> Vec<Detection> {
    let mut out = Vec::new();
    for a in &ds.annotations {
        let mut seen = std::collections::BTreeSet::new();
        for inst in &a.instances {
            let object = ds.taxonomy.object_of(inst.hoi_id).to_string();
            for (cat, b) in [(PERSON.to_string(), inst.human_box), (object, inst.object_box)] {
                if seen.insert((cat.clone(), b.key())) {
                    out.push(Detection {
                        image_id: a.image_id.clone(),
                        category: cat,
                        score: 1.0,
                        bbox: b,
                    });
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Std-dev of box edge jitter, as a fraction of box size.
    pub box_jitter: f64,
    /// Std-dev of the score drop applied to kept detections.
    pub score_noise: f64,
    /// Each kept detection spawns a displaced and a random-location false
    /// positive, each with this probability.
    pub false_positive_rate: f64,
    /// Each kept detection also spawns up to `max_parts` part detections
    /// (a sub-box of the entity with IoU below 0.5), each with probability
    /// `part_rate`.
    pub part_rate: f64,
    pub max_parts: usize,
    pub miss_rate: f64,
    /// False positives score uniformly in `[0, fp_score_max)`.
    pub fp_score_max: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn none() -> Self {
        NoiseModel {
            box_jitter: 0.0,
            score_noise: 0.0,
            false_positive_rate: 0.0,
            part_rate: 0.0,
            max_parts: 0,
            miss_rate: 0.0,
            fp_score_max: 0.0,
            seed: 0,
        }
    }

    /// Corruption used by the default benchmark.
    pub fn benchmark(seed: u64) -> Self {
        NoiseModel {
            box_jitter: 0.1,
            score_noise: 0.15,
            false_positive_rate: 0.6,
            part_rate: 1.0,
            max_parts: 5,
            miss_rate: 0.03,
            fp_score_max: 0.6,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("miss_rate", self.miss_rate),
            ("false_positive_rate", self.false_positive_rate),
            ("part_rate", self.part_rate),
            ("fp_score_max", self.fp_score_max),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} {v} outside [0, 1]")));
            }
        }
        if !(self.box_jitter >= 0.0 && self.score_noise >= 0.0) {
            return Err(Error::Config("noise scales must be non-negative".into()));
        }
        Ok(())
    }
}

fn clip_box(b: BBox, w: f64, h: f64) -> Option<BBox> {
    b.clip(w, h).filter(|c| c.width() >= 1.0 && c.height() >= 1.0)
}

/// Jitter, rescore, drop and inject detections. Per-image streams keep the
/// result independent of image order and thread count.
pub fn corrupt_detections(dets: &[Detection], ds: &Dataset, noise: &NoiseModel) -> Result<Vec<Detection>> {
    noise.validate()?;
    let index = ds.index();
    let mut per_image: BTreeMap<&str, Vec<&Detection>> = BTreeMap::new();
    for d in dets {
        if !index.contains_key(d.image_id.as_str()) {
            return Err(Error::UnknownImage(d.image_id.clone()));
        }
        per_image.entry(d.image_id.as_str()).or_default().push(d);
    }
    let groups: Vec<(&str, Vec<&Detection>)> = per_image.into_iter().collect();
    let out = crate::par::map(&groups, |(image_id, dets)| {
        let ann = &ds.annotations[index[image_id]];
        let (w, h) = (ann.width as f64, ann.height as f64);
        let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
        rng.set_stream(index[image_id] as u64);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let mut out = Vec::new();
        for d in dets {
            if noise.miss_rate > 0.0 && rng.random_bool(noise.miss_rate) {
                continue;
            }
            let mut b = d.bbox;
            if noise.box_jitter > 0.0 {
                let (bw, bh) = (b.width(), b.height());
                let mut e = || noise.box_jitter * normal.sample(&mut rng);
                let moved = BBox {
                    x1: b.x1 + e() * bw,
                    y1: b.y1 + e() * bh,
                    x2: b.x2 + e() * bw,
                    y2: b.y2 + e() * bh,
                };
                if moved.validate().is_ok() {
                    b = clip_box(moved, w, h).unwrap_or(b);
                }
            }
            let score = if noise.score_noise > 0.0 {
                (d.score - (noise.score_noise * normal.sample(&mut rng)).abs()).clamp(0.0, 1.0)
            } else {
                d.score
            };
            out.push(Detection {
                image_id: d.image_id.clone(),
                category: d.category.clone(),
                score,
                bbox: b,
            });
            for _ in 0..noise.max_parts {
                if noise.part_rate > 0.0 && rng.random_bool(noise.part_rate) {
                    // side fractions with product below 0.5
                    let mut fw: f64 = rng.random_range(0.55..0.85);
                    let mut fh: f64 = rng.random_range(0.45..0.49 / fw);
                    if rng.random_bool(0.5) {
                        std::mem::swap(&mut fw, &mut fh);
                    }
                    let (bw, bh) = (d.bbox.width(), d.bbox.height());
                    let x = d.bbox.x1 + rng.random_range(0.0..=1.0 - fw) * bw;
                    let y = d.bbox.y1 + rng.random_range(0.0..=1.0 - fh) * bh;
                    let part = BBox { x1: x, y1: y, x2: x + fw * bw, y2: y + fh * bh };
                    if let Some(fb) = clip_box(part, w, h) {
                        out.push(Detection {
                            image_id: d.image_id.clone(),
                            category: d.category.clone(),
                            score: rng.random_range(0.0..1.0) * noise.fp_score_max,
                            bbox: fb,
                        });
                    }
                }
            }
            if noise.false_positive_rate > 0.0 {
                let (bw, bh) = (d.bbox.width(), d.bbox.height());
                if rng.random_bool(noise.false_positive_rate) {
                    // same size, displaced by 0.2..0.5 of the box on each axis
                    let mut off = |s: f64| {
                        let m = rng.random_range(0.2..0.5) * s;
                        if rng.random_bool(0.5) { m } else { -m }
                    };
                    let shifted = d.bbox.translate(off(bw), off(bh));
                    if let Some(fb) = clip_box(shifted, w, h) {
                        out.push(Detection {
                            image_id: d.image_id.clone(),
                            category: d.category.clone(),
                            score: rng.random_range(0.0..1.0) * noise.fp_score_max,
                            bbox: fb,
                        });
                    }
                }
                if rng.random_bool(noise.false_positive_rate) {
                    let x = rng.random_range(0.0..(w - bw).max(0.0) + 1.0).min(w - 1.0);
                    let y = rng.random_range(0.0..(h - bh).max(0.0) + 1.0).min(h - 1.0);
                    if let Some(fb) = clip_box(BBox { x1: x, y1: y, x2: x + bw, y2: y + bh }, w, h) {
                        out.push(Detection {
                            image_id: d.image_id.clone(),
                            category: d.category.clone(),
                            score: rng.random_range(0.0..1.0) * noise.fp_score_max,
                            bbox: fb,
                        });
                    }
                }
            }
        }
        out
    });
    Ok(out.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{dataset_stats, rare_split};
    use crate::interaction::average_ip;
    use crate::proposals::{generate_proposals, proposal_recall};

    fn small() -> SynthConfig {
        SynthConfig {
            n_train: 60,
            n_test: 20,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic_and_thread_independent() {
        let a = generate(&small()).unwrap();
        let b = crate::par::sequential(|| generate(&small()).unwrap());
        assert_eq!(a.train, b.train);
        assert_eq!(a.test_scene, b.test_scene);
        let id = &a.train.annotations[3].image_id;
        assert_eq!(a.train.images.png_bytes(id).unwrap(), b.train.images.png_bytes(id).unwrap());
    }

    #[test]
    fn declaration_matches_stats() {
        let out = generate(&small()).unwrap();
        assert_eq!(dataset_stats(&out.train), out.declared.train);
        assert_eq!(dataset_stats(&out.test), out.declared.test);
        assert_eq!(perfect_detections(&out.train).len(), out.declared.train.boxes);
    }

    #[test]
    fn zero_rate_class_is_absent() {
        let mut cfg = small();
        cfg.rules[6].rate = 0.0;
        let out = generate(&cfg).unwrap();
        assert!(out.train.instances().all(|i| i.hoi_id != 6));
        assert!(out.train.annotations.iter().all(|a| !a.positives.contains(&6)));
    }

    #[test]
    fn oversized_rule_names_itself() {
        let mut cfg = small();
        cfg.rules[3].object.height = (90, 95);
        match generate(&cfg) {
            Err(Error::Placement { hoi_id, .. }) => assert_eq!(hoi_id, 3),
            other => panic!("expected placement error, got {other:?}"),
        }
    }

    #[test]
    fn spatial_rules_show_in_average_patterns() {
        let out = generate(&SynthConfig { n_train: 200, ..SynthConfig::default() }).unwrap();
        let inst: Vec<_> = out.train.instances().cloned().collect();
        let ride = average_ip(&inst, 0, 16, true).unwrap();
        let walk = average_ip(&inst, 1, 16, true).unwrap();
        let l1: f64 = ride.object.iter().zip(&walk.object).map(|(a, b)| (a - b).abs()).sum::<f64>()
            / ride.object.len() as f64;
        assert!(l1 > 0.1, "object-channel L1 {l1}");
        let half = ride.human.len() / 2;
        let upper = ride.human[..half].iter().sum::<f64>();
        let lower = ride.human[half..].iter().sum::<f64>();
        assert!(upper > lower);
    }

    #[test]
    fn default_benchmark_has_rare_classes() {
        let out = generate(&SynthConfig::default()).unwrap();
        let split = rare_split(&out.train, 10);
        assert_eq!(split.rare.iter().copied().collect::<Vec<_>>(), vec![5, 7]);
        assert_eq!(out.train.annotations.len(), 400);
        assert_eq!(out.test.annotations.len(), 150);
        // rare classes still show up at test time
        let test = crate::dataset::instance_counts(&out.test);
        assert!(test[5] > 0 && test[7] > 0, "{test:?}");
        assert_eq!(SynthConfig::default().spatial_classes(), vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn corruption_examples() {
        let out = generate(&small()).unwrap();
        let ds = &out.train;
        let perfect = perfect_detections(ds);
        assert_eq!(corrupt_detections(&perfect, ds, &NoiseModel::none()).unwrap(), perfect);
        let all_missed = NoiseModel { miss_rate: 1.0, false_positive_rate: 1.0, ..NoiseModel::benchmark(1) };
        assert!(corrupt_detections(&perfect, ds, &all_missed).unwrap().is_empty());

        let split = rare_split(ds, 10);
        let recall = |d: &[Detection]| {
            proposal_recall(&generate_proposals(d, 10, 10, &ds.taxonomy), ds, &split, 0.5).full.unwrap()
        };
        assert_eq!(recall(&perfect), 1.0);
        let noisy = corrupt_detections(&perfect, ds, &NoiseModel::benchmark(3)).unwrap();
        assert!(recall(&noisy) < 1.0);
        for d in &noisy {
            d.validate(&ds.taxonomy).unwrap();
        }
    }
}
