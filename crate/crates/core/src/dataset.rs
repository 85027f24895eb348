//! Domain types shared by every stage, plus the on-disk dataset layout.
//!
//! A dataset root holds one split:
//!
//! ```text
//! root/
//!   taxonomy.txt        HOIDET-TAXONOMY v1, then `id<TAB>verb<TAB>object_category`
//!   annotations.jsonl   schema header line, then one ImageAnnotation per line
//!   images/<id>.png
//! ```

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::error::{Error, Result};

pub const PERSON: &str = "person";
pub const TAXONOMY_FILE: &str = "taxonomy.txt";
pub const ANNOTATIONS_FILE: &str = "annotations.jsonl";
pub const IMAGES_DIR: &str = "images";
pub const TAXONOMY_HEADER: &str = "HOIDET-TAXONOMY v1";
pub const ANNOTATIONS_SCHEMA: &str = "HOIDET-ANNOTATIONS";
pub const ANNOTATIONS_VERSION: u32 = 1;
pub const DEFAULT_RARE_THRESHOLD: usize = 10;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HoiCategory {
    pub id: usize,
    pub verb: String,
    pub object_category: String,
}

impl HoiCategory {
    /// Sentence shown to annotators, e.g. "A person riding a bicycle".
    pub fn prompt(&self) -> String {
        format!("A person {} a {}", self.verb, self.object_category)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Taxonomy {
    hoi_categories: Vec<HoiCategory>,
    object_categories: Vec<String>,
    by_object: BTreeMap<String, Vec<usize>>,
}

impl Taxonomy {
    /// Object categories are taken in order of first appearance.
    pub fn new(hoi_categories: Vec<HoiCategory>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut object_categories = Vec::new();
        let mut by_object: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, c) in hoi_categories.iter().enumerate() {
            if c.id != i {
                return Err(Error::Taxonomy(format!(
                    "ids must be dense 0..K-1; position {i} has id {}",
                    c.id
                )));
            }
            if c.verb.is_empty() || c.object_category.is_empty() {
                return Err(Error::Taxonomy(format!("class {i} has an empty name")));
            }
            if c.verb.contains(['\t', '\n']) || c.object_category.contains(['\t', '\n', ',']) {
                return Err(Error::Taxonomy(format!("class {i} name contains a separator")));
            }
            if !seen.insert((c.verb.clone(), c.object_category.clone())) {
                return Err(Error::Taxonomy(format!(
                    "duplicate class ({}, {})",
                    c.verb, c.object_category
                )));
            }
            if !by_object.contains_key(&c.object_category) {
                object_categories.push(c.object_category.clone());
            }
            by_object.entry(c.object_category.clone()).or_default().push(i);
        }
        Ok(Taxonomy {
            hoi_categories,
            object_categories,
            by_object,
        })
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        Taxonomy::new(
            pairs
                .into_iter()
                .enumerate()
                .map(|(id, (verb, obj))| HoiCategory {
                    id,
                    verb: verb.to_string(),
                    object_category: obj.to_string(),
                })
                .collect(),
        )
    }

    /// Number of HOI classes, K.
    pub fn len(&self) -> usize {
        self.hoi_categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hoi_categories.is_empty()
    }

    pub fn categories(&self) -> &[HoiCategory] {
        &self.hoi_categories
    }

    pub fn category(&self, hoi_id: usize) -> Option<&HoiCategory> {
        self.hoi_categories.get(hoi_id)
    }

    pub fn object_categories(&self) -> &[String] {
        &self.object_categories
    }

    pub fn object_of(&self, hoi_id: usize) -> &str {
        &self.hoi_categories[hoi_id].object_category
    }

    /// Class ids whose object category is `object`, ascending.
    pub fn classes_for_object(&self, object: &str) -> &[usize] {
        self.by_object.get(object).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_detectable(&self, category: &str) -> bool {
        category == PERSON || self.by_object.contains_key(category)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from(TAXONOMY_HEADER);
        s.push('\n');
        for c in &self.hoi_categories {
            s.push_str(&format!("{}\t{}\t{}\n", c.id, c.verb, c.object_category));
        }
        s
    }

    pub fn parse(text: &str, file: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim_end() == TAXONOMY_HEADER => {}
            _ => {
                return Err(Error::parse(
                    file,
                    1,
                    "header",
                    format!("expected `{TAXONOMY_HEADER}`"),
                ))
            }
        }
        let mut cats = Vec::new();
        for (i, line) in lines {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::parse(
                    file,
                    lineno,
                    "record",
                    format!("expected 3 tab-separated fields, got {}", fields.len()),
                ));
            }
            let id = fields[0]
                .parse()
                .map_err(|e| Error::parse(file, lineno, "id", e))?;
            cats.push(HoiCategory {
                id,
                verb: fields[1].to_string(),
                object_category: fields[2].to_string(),
            });
        }
        Taxonomy::new(cats)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: String,
    pub category: String,
    pub score: f64,
    #[serde(rename = "box")]
    pub bbox: BBox,
}

impl Detection {
    pub fn validate(&self, taxonomy: &Taxonomy) -> Result<()> {
        self.bbox.validate()?;
        if !taxonomy.is_detectable(&self.category) {
            return Err(Error::validation(
                &self.image_id,
                format!("detection category `{}` not in taxonomy", self.category),
            ));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::validation(
                &self.image_id,
                format!("detection score {} outside [0, 1]", self.score),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoiInstance {
    pub image_id: String,
    pub hoi_id: usize,
    pub human_box: BBox,
    pub object_box: BBox,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageAnnotation {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub positives: BTreeSet<usize>,
    pub instances: Vec<HoiInstance>,
    pub invisible: BTreeSet<usize>,
}

impl ImageAnnotation {
    pub fn new(image_id: impl Into<String>, width: u32, height: u32) -> Self {
        ImageAnnotation {
            image_id: image_id.into(),
            width,
            height,
            positives: BTreeSet::new(),
            instances: Vec::new(),
            invisible: BTreeSet::new(),
        }
    }

    pub fn validate(&self, taxonomy: &Taxonomy) -> Result<()> {
        let fail = |m: String| Err(Error::validation(&self.image_id, m));
        if self.image_id.is_empty() || self.image_id.contains(['\t', '\n', '/']) {
            return fail(format!("bad image id `{}`", self.image_id));
        }
        if self.width == 0 || self.height == 0 {
            return fail("zero image dimension".into());
        }
        let k = taxonomy.len();
        if let Some(&bad) = self.positives.iter().find(|&&h| h >= k) {
            return fail(format!("positive label {bad} outside [0, {k})"));
        }
        if let Some(&bad) = self.invisible.difference(&self.positives).next() {
            return fail(format!("invisible label {bad} is not a positive label"));
        }
        let (w, h) = (self.width as f64, self.height as f64);
        for (i, inst) in self.instances.iter().enumerate() {
            if inst.image_id != self.image_id {
                return fail(format!(
                    "instance {i} belongs to image `{}`",
                    inst.image_id
                ));
            }
            if inst.hoi_id >= k {
                return fail(format!("instance {i} hoi_id {} outside [0, {k})", inst.hoi_id));
            }
            if !self.positives.contains(&inst.hoi_id) {
                return fail(format!(
                    "instance {i} hoi_id {} not among positive labels",
                    inst.hoi_id
                ));
            }
            if self.invisible.contains(&inst.hoi_id) {
                return fail(format!(
                    "instance {i} hoi_id {} is flagged invisible",
                    inst.hoi_id
                ));
            }
            for (role, b) in [("human", &inst.human_box), ("object", &inst.object_box)] {
                if let Err(e) = b.validate() {
                    return fail(format!("instance {i} {role} box: {e}"));
                }
                if !b.within(w, h) {
                    return fail(format!(
                        "instance {i} {role} box {b} outside image {}x{}",
                        self.width, self.height
                    ));
                }
            }
        }
        Ok(())
    }

    /// Distinct boxes by exact coordinate equality.
    pub fn distinct_boxes(&self) -> usize {
        let mut keys = HashSet::new();
        for inst in &self.instances {
            keys.insert(inst.human_box.key());
            keys.insert(inst.object_box.key());
        }
        keys.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

/// Where rasters for a dataset live.
#[derive(Clone, Debug)]
pub enum ImageStore {
    Directory(PathBuf),
    Memory(Arc<BTreeMap<String, Arc<RgbImage>>>),
}

impl ImageStore {
    pub fn empty() -> Self {
        ImageStore::Memory(Arc::new(BTreeMap::new()))
    }

    pub fn get(&self, image_id: &str) -> Result<Arc<RgbImage>> {
        match self {
            ImageStore::Memory(map) => map
                .get(image_id)
                .cloned()
                .ok_or_else(|| Error::MissingImage(image_id.to_string())),
            ImageStore::Directory(dir) => {
                let path = dir.join(format!("{image_id}.png"));
                if !path.is_file() {
                    return Err(Error::MissingImage(image_id.to_string()));
                }
                Ok(Arc::new(image::open(&path)?.to_rgb8()))
            }
        }
    }

    /// Raw PNG bytes for one image.
    pub fn png_bytes(&self, image_id: &str) -> Result<Vec<u8>> {
        match self {
            ImageStore::Directory(dir) => {
                let path = dir.join(format!("{image_id}.png"));
                fs::read(&path).map_err(|_| Error::MissingImage(image_id.to_string()))
            }
            ImageStore::Memory(_) => encode_png(&*self.get(image_id)?),
        }
    }

    /// Load every listed image that exists; missing ones are skipped.
    pub fn preload<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> ImageStore {
        match self {
            ImageStore::Memory(_) => self.clone(),
            ImageStore::Directory(_) => {
                let ids: Vec<&str> = ids.into_iter().collect();
                let loaded = crate::par::map(&ids, |id| (id.to_string(), self.get(id).ok()));
                ImageStore::Memory(Arc::new(
                    loaded
                        .into_iter()
                        .filter_map(|(id, img)| img.map(|i| (id, i)))
                        .collect(),
                ))
            }
        }
    }
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)?;
    Ok(buf.into_inner())
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub taxonomy: Arc<Taxonomy>,
    pub split: Split,
    pub annotations: Vec<ImageAnnotation>,
    pub images: ImageStore,
}

/// Raster storage is not part of dataset identity.
impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.taxonomy == other.taxonomy
            && self.split == other.split
            && self.annotations == other.annotations
    }
}

#[derive(Serialize, Deserialize)]
struct AnnotationsHeader {
    schema: String,
    version: u32,
    split: Split,
}

impl Dataset {
    pub fn new(
        taxonomy: Arc<Taxonomy>,
        split: Split,
        annotations: Vec<ImageAnnotation>,
        images: ImageStore,
    ) -> Result<Self> {
        let ds = Dataset {
            taxonomy,
            split,
            annotations,
            images,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for a in &self.annotations {
            if !ids.insert(a.image_id.as_str()) {
                return Err(Error::validation(&a.image_id, "duplicate image id in split"));
            }
            a.validate(&self.taxonomy)?;
        }
        Ok(())
    }

    pub fn annotation(&self, image_id: &str) -> Option<&ImageAnnotation> {
        self.annotations.iter().find(|a| a.image_id == image_id)
    }

    /// image_id -> index into `annotations`.
    pub fn index(&self) -> BTreeMap<&str, usize> {
        self.annotations
            .iter()
            .enumerate()
            .map(|(i, a)| (a.image_id.as_str(), i))
            .collect()
    }

    pub fn instances(&self) -> impl Iterator<Item = &HoiInstance> {
        self.annotations.iter().flat_map(|a| a.instances.iter())
    }

    /// Copy with every raster loaded into memory.
    pub fn with_images_in_memory(&self) -> Dataset {
        let images = self
            .images
            .preload(self.annotations.iter().map(|a| a.image_id.as_str()));
        Dataset {
            images,
            ..self.clone()
        }
    }

    pub fn annotations_text(&self) -> Result<String> {
        annotations_to_text(self.split, &self.annotations)
    }
}

pub fn annotations_to_text(split: Split, annotations: &[ImageAnnotation]) -> Result<String> {
    let header = AnnotationsHeader {
        schema: ANNOTATIONS_SCHEMA.to_string(),
        version: ANNOTATIONS_VERSION,
        split,
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for a in annotations {
        out.push_str(&serde_json::to_string(a).expect("annotation serializes"));
        out.push('\n');
    }
    Ok(out)
}

/// Parse an annotations file body; validation against the taxonomy is left to the caller.
pub fn parse_annotations(text: &str, file: &str) -> Result<(Split, Vec<ImageAnnotation>)> {
    let mut lines = text.lines().enumerate();
    let header: AnnotationsHeader = match lines.next() {
        Some((_, l)) => serde_json::from_str(l)
            .map_err(|e| Error::parse(file, 1, "header", e))?,
        None => return Err(Error::parse(file, 1, "header", "empty file")),
    };
    if header.schema != ANNOTATIONS_SCHEMA || header.version != ANNOTATIONS_VERSION {
        return Err(Error::parse(
            file,
            1,
            "header",
            format!(
                "unsupported schema {} v{}",
                header.schema, header.version
            ),
        ));
    }
    let mut anns = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let a: ImageAnnotation = serde_json::from_str(line).map_err(|e| {
            let field = json_error_field(&e);
            Error::parse(file, i + 1, field, e)
        })?;
        anns.push(a);
    }
    Ok((header.split, anns))
}

fn json_error_field(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    msg.split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| format!("column {}", e.column()))
}

pub fn load_dataset(root: impl AsRef<Path>) -> Result<Dataset> {
    let root = root.as_ref();
    let tax_path = root.join(TAXONOMY_FILE);
    let tax_text = fs::read_to_string(&tax_path).map_err(|e| Error::io(&tax_path, e))?;
    let taxonomy = Taxonomy::parse(&tax_text, &tax_path.display().to_string())?;

    let ann_path = root.join(ANNOTATIONS_FILE);
    let file = fs::File::open(&ann_path).map_err(|e| Error::io(&ann_path, e))?;
    let mut text = String::new();
    for line in BufReader::new(file).lines() {
        text.push_str(&line.map_err(|e| Error::io(&ann_path, e))?);
        text.push('\n');
    }
    let (split, annotations) = parse_annotations(&text, &ann_path.display().to_string())?;

    let img_dir = root.join(IMAGES_DIR);
    if !img_dir.is_dir() {
        return Err(Error::io(
            &img_dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "image directory missing"),
        ));
    }
    Dataset::new(
        Arc::new(taxonomy),
        split,
        annotations,
        ImageStore::Directory(img_dir),
    )
}

pub fn save_dataset(ds: &Dataset, root: impl AsRef<Path>) -> Result<()> {
    let root = root.as_ref();
    let img_dir = root.join(IMAGES_DIR);
    fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    write_file(&root.join(TAXONOMY_FILE), ds.taxonomy.to_text().as_bytes())?;
    write_file(&root.join(ANNOTATIONS_FILE), ds.annotations_text()?.as_bytes())?;

    match &ds.images {
        ImageStore::Memory(map) => {
            let entries: Vec<(&String, &Arc<RgbImage>)> = map.iter().collect();
            let written = crate::par::map(&entries, |(id, img)| {
                let path = img_dir.join(format!("{id}.png"));
                encode_png(img).and_then(|bytes| write_file(&path, &bytes))
            });
            written.into_iter().collect::<Result<Vec<_>>>()?;
        }
        ImageStore::Directory(src) => {
            let same = src.canonicalize().ok() == img_dir.canonicalize().ok();
            if !same {
                for a in &ds.annotations {
                    let from = src.join(format!("{}.png", a.image_id));
                    if from.is_file() {
                        let to = img_dir.join(format!("{}.png", a.image_id));
                        fs::copy(&from, &to).map_err(|e| Error::io(&to, e))?;
                    }
                }
            }
        }
    }
    Ok(())
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    w.write_all(bytes).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Counts in the layout of the benchmark statistics table.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsTable {
    pub images: usize,
    pub positives: usize,
    pub instances: usize,
    pub boxes: usize,
    pub instances_per_positive: f64,
    pub boxes_per_positive: f64,
}

impl StatsTable {
    pub fn from_counts(images: usize, positives: usize, instances: usize, boxes: usize) -> Self {
        let ratio = |n: usize| {
            if positives == 0 {
                0.0
            } else {
                n as f64 / positives as f64
            }
        };
        StatsTable {
            images,
            positives,
            instances,
            boxes,
            instances_per_positive: ratio(instances),
            boxes_per_positive: ratio(boxes),
        }
    }
}

impl fmt::Display for StatsTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{} ({:.2}/pos)\t{} ({:.2}/pos)",
            self.images,
            self.positives,
            self.instances,
            self.instances_per_positive,
            self.boxes,
            self.boxes_per_positive
        )
    }
}

pub fn dataset_stats(ds: &Dataset) -> StatsTable {
    let positives = ds.annotations.iter().map(|a| a.positives.len()).sum();
    let instances = ds.annotations.iter().map(|a| a.instances.len()).sum();
    let boxes = ds.annotations.iter().map(|a| a.distinct_boxes()).sum();
    StatsTable::from_counts(ds.annotations.len(), positives, instances, boxes)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RareSplit {
    pub threshold: usize,
    pub rare: BTreeSet<usize>,
    pub non_rare: BTreeSet<usize>,
}

/// Classes with fewer than `threshold` training instances are rare.
/// Invisible-flagged labels carry no instances and so do not count.
pub fn rare_split(train: &Dataset, threshold: usize) -> RareSplit {
    let counts = instance_counts(train);
    let (rare, non_rare) = (0..train.taxonomy.len()).partition(|&k| counts[k] < threshold);
    RareSplit {
        threshold,
        rare,
        non_rare,
    }
}

pub fn instance_counts(ds: &Dataset) -> Vec<usize> {
    let mut counts = vec![0usize; ds.taxonomy.len()];
    for inst in ds.instances() {
        counts[inst.hoi_id] += 1;
    }
    counts
}
