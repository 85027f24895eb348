//! Task bookkeeping and the write-ahead log behind it.
//!
//! Every claim and every accepted submission is appended to a JSON-lines log
//! and synced before the caller sees the result. Opening a store replays the
//! log, so a restart keeps both submissions and live leases.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use hoidet::dataset::{annotations_to_text, Dataset, HoiInstance, ImageAnnotation, Split, Taxonomy};
use hoidet::BBox;
use serde::{Deserialize, Serialize};

use crate::error::{AnnotateError, Result};

pub const DEFAULT_LEASE_MS: u64 = 30 * 60 * 1000;

/// Milliseconds since an arbitrary epoch.
pub type Clock = Arc<dyn Fn() -> u64 + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskState {
    Open,
    Claimed,
    Submitted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub task_id: String,
    pub image_id: String,
    pub hoi_id: usize,
    pub prompt: String,
    pub state: TaskState,
    pub lease_expires_ms: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSubmission {
    /// May be left empty when the id is given by the URL.
    #[serde(default)]
    pub task_id: String,
    pub annotator: String,
    pub lease_id: String,
    #[serde(default)]
    pub human_boxes: Vec<BBox>,
    #[serde(default)]
    pub object_boxes: Vec<BBox>,
    /// (human index, object index)
    #[serde(default)]
    pub links: Vec<(usize, usize)>,
    #[serde(default)]
    pub invisible: bool,
}

/// Answer to a poll for work.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NextTask {
    pub task: Option<AnnotationTask>,
    pub lease_id: Option<String>,
    /// Tasks still open after this claim.
    pub remaining: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub total: usize,
    pub open: usize,
    pub claimed: usize,
    pub submitted: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
enum LogEntry {
    Claim {
        task_id: String,
        annotator: String,
        lease_id: String,
        expires_ms: u64,
    },
    Submit {
        submission: TaskSubmission,
    },
}

#[derive(Clone, Debug)]
struct Lease {
    id: String,
    annotator: String,
    expires_ms: u64,
}

#[derive(Clone, Debug)]
struct Slot {
    image: usize,
    hoi_id: usize,
    lease: Option<Lease>,
    submission: Option<TaskSubmission>,
}

impl Slot {
    fn state(&self, now: u64) -> TaskState {
        if self.submission.is_some() {
            TaskState::Submitted
        } else if self.lease.as_ref().is_some_and(|l| l.expires_ms > now) {
            TaskState::Claimed
        } else {
            TaskState::Open
        }
    }
}

struct State {
    slots: BTreeMap<String, Slot>,
    leases_granted: u64,
    log: Option<File>,
}

pub struct TaskStore {
    taxonomy: Arc<Taxonomy>,
    split: Split,
    /// Source images: dimensions and rasters. Labels are only used to
    /// create tasks.
    source: Dataset,
    clock: Clock,
    lease_ms: u64,
    log_path: Option<PathBuf>,
    state: Mutex<State>,
}

pub fn task_id(image_id: &str, hoi_id: usize) -> String {
    format!("{image_id}.{hoi_id}")
}

impl TaskStore {
    /// One task per (image, positive label) of `source`. With `log_path`,
    /// an existing log is replayed and new events are appended to it.
    pub fn open(source: Dataset, log_path: Option<&Path>, clock: Clock, lease_ms: u64) -> Result<Self> {
        if lease_ms == 0 {
            return Err(AnnotateError::BadRequest("lease must be positive".into()));
        }
        let mut slots = BTreeMap::new();
        for (i, a) in source.annotations.iter().enumerate() {
            for &k in &a.positives {
                slots.insert(
                    task_id(&a.image_id, k),
                    Slot {
                        image: i,
                        hoi_id: k,
                        lease: None,
                        submission: None,
                    },
                );
            }
        }
        let store = TaskStore {
            taxonomy: source.taxonomy.clone(),
            split: source.split,
            source,
            clock,
            lease_ms,
            log_path: log_path.map(Path::to_path_buf),
            state: Mutex::new(State {
                slots,
                leases_granted: 0,
                log: None,
            }),
        };
        if let Some(path) = log_path {
            store.replay(path)?;
            let f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| AnnotateError::io(path, e))?;
            store.lock().log = Some(f);
        }
        Ok(store)
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn replay(&self, path: &Path) -> Result<()> {
        if !path.exists() {
            return Ok(());
        }
        let text = fs::read_to_string(path).map_err(|e| AnnotateError::io(path, e))?;
        let mut st = self.lock();
        let mut replayed = 0;
        let mut offset = 0;
        for (i, line) in text.split_inclusive('\n').enumerate() {
            let start = offset;
            offset += line.len();
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| AnnotateError::Log {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let entry: LogEntry = match serde_json::from_str(line) {
                Ok(e) => e,
                // a torn final write from a crash: cut it off so appends stay line-aligned
                Err(e) if offset == text.len() && !line.ends_with('\n') => {
                    log::warn!("{}:{}: dropping incomplete final entry ({e})", path.display(), i + 1);
                    let f = OpenOptions::new().write(true).open(path).map_err(|e| AnnotateError::io(path, e))?;
                    f.set_len(start as u64).map_err(|e| AnnotateError::io(path, e))?;
                    break;
                }
                Err(e) => return Err(bad(e.to_string())),
            };
            match entry {
                LogEntry::Claim {
                    task_id,
                    annotator,
                    lease_id,
                    expires_ms,
                } => {
                    let slot = st.slots.get_mut(&task_id).ok_or_else(|| bad(format!("unknown task `{task_id}`")))?;
                    slot.lease = Some(Lease {
                        id: lease_id,
                        annotator,
                        expires_ms,
                    });
                    st.leases_granted += 1;
                }
                LogEntry::Submit { submission } => {
                    let slot = st
                        .slots
                        .get_mut(&submission.task_id)
                        .ok_or_else(|| bad(format!("unknown task `{}`", submission.task_id)))?;
                    slot.submission = Some(submission);
                }
            }
            replayed += 1;
        }
        if replayed > 0 {
            log::info!("replayed {replayed} entries from {}", path.display());
        }
        Ok(())
    }

    fn append(&self, st: &mut State, entry: &LogEntry) -> Result<()> {
        let (Some(f), Some(path)) = (st.log.as_mut(), self.log_path.as_ref()) else {
            return Ok(());
        };
        let mut line = serde_json::to_string(entry).expect("log entry serializes");
        line.push('\n');
        f.write_all(line.as_bytes())
            .and_then(|_| f.sync_data())
            .map_err(|e| AnnotateError::io(path, e))
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    pub fn image_png(&self, image_id: &str) -> Result<Vec<u8>> {
        if self.source.annotation(image_id).is_none() {
            return Err(AnnotateError::UnknownImage(image_id.to_string()));
        }
        Ok(self.source.images.png_bytes(image_id)?)
    }

    fn describe(&self, id: &str, slot: &Slot, now: u64) -> AnnotationTask {
        let state = slot.state(now);
        AnnotationTask {
            task_id: id.to_string(),
            image_id: self.source.annotations[slot.image].image_id.clone(),
            hoi_id: slot.hoi_id,
            prompt: self
                .taxonomy
                .category(slot.hoi_id)
                .map(|c| c.prompt())
                .unwrap_or_default(),
            state,
            lease_expires_ms: match state {
                TaskState::Claimed => slot.lease.as_ref().map(|l| l.expires_ms),
                _ => None,
            },
        }
    }

    pub fn task(&self, id: &str) -> Result<AnnotationTask> {
        let st = self.lock();
        let slot = st.slots.get(id).ok_or_else(|| AnnotateError::UnknownTask(id.to_string()))?;
        Ok(self.describe(id, slot, (self.clock)()))
    }

    /// Claim the first open task, in (image id, class) order.
    pub fn next_task(&self, annotator: &str) -> Result<NextTask> {
        if annotator.trim().is_empty() {
            return Err(AnnotateError::BadRequest("annotator id is required".into()));
        }
        let now = (self.clock)();
        let mut st = self.lock();
        let open: Vec<String> = st
            .slots
            .iter()
            .filter(|(_, s)| s.state(now) == TaskState::Open)
            .map(|(id, _)| id.clone())
            .collect();
        let Some(id) = open.first().cloned() else {
            return Ok(NextTask {
                task: None,
                lease_id: None,
                remaining: 0,
            });
        };
        let lease = Lease {
            id: format!("lease-{}", st.leases_granted + 1),
            annotator: annotator.to_string(),
            expires_ms: now.saturating_add(self.lease_ms),
        };
        self.append(
            &mut st,
            &LogEntry::Claim {
                task_id: id.clone(),
                annotator: lease.annotator.clone(),
                lease_id: lease.id.clone(),
                expires_ms: lease.expires_ms,
            },
        )?;
        st.leases_granted += 1;
        let lease_id = lease.id.clone();
        let slot = st.slots.get_mut(&id).expect("task listed above");
        slot.lease = Some(lease);
        let task = self.describe(&id, slot, now);
        Ok(NextTask {
            task: Some(task),
            lease_id: Some(lease_id),
            remaining: open.len() - 1,
        })
    }

    /// Accept a submission made under the task's current lease. A second
    /// submission under the same lease replaces the first.
    pub fn submit(&self, sub: TaskSubmission) -> Result<AnnotationTask> {
        let now = (self.clock)();
        let mut st = self.lock();
        let slot = st
            .slots
            .get(&sub.task_id)
            .ok_or_else(|| AnnotateError::UnknownTask(sub.task_id.clone()))?;
        let conflict = |message: &str| AnnotateError::Conflict {
            task_id: sub.task_id.clone(),
            message: message.to_string(),
        };
        match &slot.lease {
            None => return Err(conflict("task was never claimed")),
            Some(l) if l.id != sub.lease_id => return Err(conflict("lease was superseded by a newer claim")),
            Some(l) if l.annotator != sub.annotator => return Err(conflict("lease belongs to another annotator")),
            Some(_) => {}
        }
        let a = &self.source.annotations[slot.image];
        validate_submission(&sub, a.width, a.height)?;
        self.append(&mut st, &LogEntry::Submit { submission: sub.clone() })?;
        let slot = st.slots.get_mut(&sub.task_id).expect("checked above");
        slot.submission = Some(sub.clone());
        Ok(self.describe(&sub.task_id, slot, now))
    }

    pub fn progress(&self) -> Progress {
        let now = (self.clock)();
        let st = self.lock();
        let mut p = Progress {
            total: st.slots.len(),
            ..Progress::default()
        };
        for s in st.slots.values() {
            match s.state(now) {
                TaskState::Open => p.open += 1,
                TaskState::Claimed => p.claimed += 1,
                TaskState::Submitted => p.submitted += 1,
            }
        }
        p
    }

    /// Annotations for every image with at least one submitted task, in
    /// image id order.
    pub fn export_annotations(&self) -> Vec<ImageAnnotation> {
        let st = self.lock();
        let mut by_image: BTreeMap<usize, Vec<(usize, &TaskSubmission)>> = BTreeMap::new();
        for s in st.slots.values() {
            if let Some(sub) = &s.submission {
                by_image.entry(s.image).or_default().push((s.hoi_id, sub));
            }
        }
        let mut out: Vec<ImageAnnotation> = by_image
            .into_iter()
            .map(|(i, mut subs)| {
                let src = &self.source.annotations[i];
                subs.sort_by_key(|(k, _)| *k);
                let mut a = ImageAnnotation::new(src.image_id.clone(), src.width, src.height);
                for (k, sub) in subs {
                    a.positives.insert(k);
                    if sub.invisible {
                        a.invisible.insert(k);
                    }
                    a.instances.extend(instances_of(&src.image_id, k, sub));
                }
                a
            })
            .collect();
        out.sort_by(|x, y| x.image_id.cmp(&y.image_id));
        out
    }

    /// The annotations file for the current snapshot.
    pub fn export(&self) -> Result<String> {
        let anns = self.export_annotations();
        for a in &anns {
            a.validate(&self.taxonomy)?;
        }
        Ok(annotations_to_text(self.split, &anns)?)
    }

    /// Write the export next to the source taxonomy so `load_dataset` can
    /// read it back; images are copied only for exported ids.
    pub fn export_dataset(&self, root: &Path) -> Result<()> {
        let anns = self.export_annotations();
        let ds = Dataset::new(self.taxonomy.clone(), self.split, anns, self.source.images.clone())?;
        let keep: BTreeSet<&str> = ds.annotations.iter().map(|a| a.image_id.as_str()).collect();
        let images = ds.images.preload(keep);
        hoidet::dataset::save_dataset(&Dataset { images, ..ds.clone() }, root)?;
        Ok(())
    }
}

/// One instance per link, all labelled with the task's class.
pub fn instances_of(image_id: &str, hoi_id: usize, sub: &TaskSubmission) -> Vec<HoiInstance> {
    sub.links
        .iter()
        .map(|&(h, o)| HoiInstance {
            image_id: image_id.to_string(),
            hoi_id,
            human_box: sub.human_boxes[h],
            object_box: sub.object_boxes[o],
        })
        .collect()
}

/// Structural checks on a submission; the error names the violated rule.
pub fn validate_submission(sub: &TaskSubmission, width: u32, height: u32) -> Result<()> {
    let (nh, no) = (sub.human_boxes.len(), sub.object_boxes.len());
    if sub.invisible && (nh > 0 || no > 0 || !sub.links.is_empty()) {
        return Err(AnnotateError::reject(
            "invisible-means-empty",
            "an invisible submission carries no boxes or links",
        ));
    }
    for (role, boxes) in [("human", &sub.human_boxes), ("object", &sub.object_boxes)] {
        for (i, b) in boxes.iter().enumerate() {
            if !b.within(width as f64, height as f64) {
                return Err(AnnotateError::reject(
                    "box-inside-image",
                    format!("{role} box {i} {b} leaves the {width}x{height} image"),
                ));
            }
        }
    }
    let mut seen = BTreeSet::new();
    for &(h, o) in &sub.links {
        if h >= nh || o >= no {
            return Err(AnnotateError::reject(
                "link-in-range",
                format!("link ({h}, {o}) with {nh} human and {no} object boxes"),
            ));
        }
        if !seen.insert((h, o)) {
            return Err(AnnotateError::reject("unique-links", format!("link ({h}, {o}) repeated")));
        }
    }
    let used_h: BTreeSet<usize> = sub.links.iter().map(|l| l.0).collect();
    let used_o: BTreeSet<usize> = sub.links.iter().map(|l| l.1).collect();
    if no > 0 {
        if let Some(i) = (0..nh).find(|i| !used_h.contains(i)) {
            return Err(AnnotateError::reject("box-linked", format!("human box {i} has no link")));
        }
    }
    if nh > 0 {
        if let Some(i) = (0..no).find(|i| !used_o.contains(i)) {
            return Err(AnnotateError::reject("box-linked", format!("object box {i} has no link")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use hoidet::dataset::ImageStore;
    use std::sync::atomic::{AtomicU64, Ordering};

    fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    fn source() -> Dataset {
        let tax = Taxonomy::from_pairs([("ride", "horse"), ("feed", "horse"), ("hold", "cup")]).unwrap();
        let mut a = ImageAnnotation::new("img0", 100, 80);
        a.positives.extend([0, 2]);
        let mut b = ImageAnnotation::new("img1", 100, 80);
        b.positives.insert(1);
        Dataset::new(Arc::new(tax), Split::Test, vec![a, b], ImageStore::empty()).unwrap()
    }

    fn manual_clock() -> (Clock, Arc<AtomicU64>) {
        let t = Arc::new(AtomicU64::new(1000));
        let t2 = t.clone();
        (Arc::new(move || t2.load(Ordering::SeqCst)), t)
    }

    fn sub(task: &NextTask, annotator: &str) -> TaskSubmission {
        TaskSubmission {
            task_id: task.task.as_ref().unwrap().task_id.clone(),
            annotator: annotator.into(),
            lease_id: task.lease_id.clone().unwrap(),
            human_boxes: vec![],
            object_boxes: vec![],
            links: vec![],
            invisible: false,
        }
    }

    #[test]
    fn one_task_per_positive_label() {
        let (clock, _) = manual_clock();
        let store = TaskStore::open(source(), None, clock, 10).unwrap();
        assert_eq!(store.progress().total, 3);
        let t = store.task("img0.2").unwrap();
        assert_eq!(t.prompt, "A person hold a cup");
        assert_eq!(t.state, TaskState::Open);
    }

    #[test]
    fn one_human_two_objects_gives_two_instances() {
        let (clock, _) = manual_clock();
        let store = TaskStore::open(source(), None, clock, 10).unwrap();
        let t = store.next_task("ann").unwrap();
        assert_eq!(t.remaining, 2);
        let mut s = sub(&t, "ann");
        s.human_boxes = vec![bx(0.0, 0.0, 10.0, 30.0)];
        s.object_boxes = vec![bx(20.0, 0.0, 40.0, 10.0), bx(50.0, 0.0, 60.0, 10.0)];
        s.links = vec![(0, 0), (0, 1)];
        store.submit(s).unwrap();
        let anns = store.export_annotations();
        assert_eq!(anns.len(), 1);
        assert_eq!(anns[0].instances.len(), 2);
        assert_eq!(anns[0].instances[0].human_box, anns[0].instances[1].human_box);
        assert_eq!(anns[0].instances[1].object_box, bx(50.0, 0.0, 60.0, 10.0));
    }

    #[test]
    fn invisible_records_label_without_instances() {
        let (clock, _) = manual_clock();
        let store = TaskStore::open(source(), None, clock, 10).unwrap();
        let t = store.next_task("ann").unwrap();
        let mut s = sub(&t, "ann");
        s.invisible = true;
        store.submit(s).unwrap();
        let a = &store.export_annotations()[0];
        assert!(a.positives.contains(&0) && a.invisible.contains(&0));
        assert!(a.instances.is_empty());
    }

    #[test]
    fn rejections_name_the_rule() {
        let rule = |s: &TaskSubmission| match validate_submission(s, 100, 80) {
            Err(AnnotateError::Rejected { rule, .. }) => rule,
            other => panic!("{other:?}"),
        };
        let h = bx(0.0, 0.0, 10.0, 10.0);
        let mut s = TaskSubmission {
            task_id: "t".into(),
            annotator: "a".into(),
            lease_id: "l".into(),
            human_boxes: vec![h],
            object_boxes: vec![h],
            links: vec![(0, 1)],
            invisible: false,
        };
        assert_eq!(rule(&s), "link-in-range");
        s.links = vec![(0, 0), (0, 0)];
        assert_eq!(rule(&s), "unique-links");
        s.links.clear();
        assert_eq!(rule(&s), "box-linked");
        s.invisible = true;
        assert_eq!(rule(&s), "invisible-means-empty");
        s.invisible = false;
        s.links = vec![(0, 0)];
        s.object_boxes = vec![bx(90.0, 70.0, 101.0, 80.0)];
        assert_eq!(rule(&s), "box-inside-image");
        // humans alone need no links
        s.object_boxes.clear();
        s.links.clear();
        validate_submission(&s, 100, 80).unwrap();
    }

    #[test]
    fn expired_lease_is_reserved_and_old_lease_conflicts() {
        let (clock, t) = manual_clock();
        let store = TaskStore::open(source(), None, clock, 10).unwrap();
        let first = store.next_task("a").unwrap();
        let second = store.next_task("b").unwrap();
        assert_ne!(first.task.as_ref().unwrap().task_id, second.task.as_ref().unwrap().task_id);
        t.fetch_add(10, Ordering::SeqCst);
        // both leases lapsed: the first task comes back first
        let again = store.next_task("c").unwrap();
        assert_eq!(again.task.as_ref().unwrap().task_id, first.task.as_ref().unwrap().task_id);
        assert!(matches!(store.submit(sub(&first, "a")), Err(AnnotateError::Conflict { .. })));
        // lapsed but not re-claimed: still accepted
        store.submit(sub(&second, "b")).unwrap();
        store.submit(sub(&again, "c")).unwrap();
    }

    #[test]
    fn exhausted_queue_reports_zero_remaining() {
        let (clock, _) = manual_clock();
        let store = TaskStore::open(source(), None, clock, 10).unwrap();
        for _ in 0..3 {
            let t = store.next_task("a").unwrap();
            store.submit(sub(&t, "a")).unwrap();
        }
        let none = store.next_task("a").unwrap();
        assert_eq!(none, NextTask { task: None, lease_id: None, remaining: 0 });
        assert_eq!(store.progress().submitted, 3);
    }

    #[test]
    fn resubmission_replaces_instances() {
        let (clock, _) = manual_clock();
        let store = TaskStore::open(source(), None, clock, 10).unwrap();
        let t = store.next_task("a").unwrap();
        let mut s = sub(&t, "a");
        s.human_boxes = vec![bx(0.0, 0.0, 10.0, 10.0)];
        s.object_boxes = vec![bx(10.0, 0.0, 20.0, 10.0)];
        s.links = vec![(0, 0)];
        store.submit(s.clone()).unwrap();
        s.object_boxes = vec![bx(30.0, 0.0, 40.0, 10.0)];
        store.submit(s).unwrap();
        let a = &store.export_annotations()[0];
        assert_eq!(a.instances.len(), 1);
        assert_eq!(a.instances[0].object_box.x1, 30.0);
    }

    #[test]
    fn empty_export_is_header_only_and_stable() {
        let (clock, _) = manual_clock();
        let store = TaskStore::open(source(), None, clock, 10).unwrap();
        let text = store.export().unwrap();
        assert_eq!(text.lines().count(), 1);
        assert_eq!(text, store.export().unwrap());
    }

    #[test]
    fn log_replay_restores_claims_and_submissions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("wal.jsonl");
        let (clock, _) = manual_clock();
        let (t0, t1);
        {
            let store = TaskStore::open(source(), Some(&path), clock.clone(), 100).unwrap();
            t0 = store.next_task("a").unwrap();
            let mut s = sub(&t0, "a");
            s.invisible = true;
            store.submit(s).unwrap();
            t1 = store.next_task("a").unwrap();
        }
        let store = TaskStore::open(source(), Some(&path), clock, 100).unwrap();
        let p = store.progress();
        assert_eq!((p.open, p.claimed, p.submitted), (1, 1, 1));
        // the surviving lease still works, and ids keep counting up
        store.submit(sub(&t1, "a")).unwrap();
        let t2 = store.next_task("a").unwrap();
        assert_eq!(t2.lease_id.as_deref(), Some("lease-3"));
    }

    #[test]
    fn torn_final_line_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("wal.jsonl");
        let (clock, _) = manual_clock();
        {
            let store = TaskStore::open(source(), Some(&path), clock.clone(), 100).unwrap();
            let t = store.next_task("a").unwrap();
            store.submit(sub(&t, "a")).unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"op\":\"sub").unwrap();
        drop(f);
        let store = TaskStore::open(source(), Some(&path), clock.clone(), 100).unwrap();
        assert_eq!(store.progress().submitted, 1);
        store.next_task("b").unwrap();
        drop(store);
        let store = TaskStore::open(source(), Some(&path), clock.clone(), 100).unwrap();
        assert_eq!(store.progress().claimed, 1);
        drop(store);
        // damage before the end is an error
        let text = fs::read_to_string(&path).unwrap();
        fs::write(&path, format!("garbage\n{text}")).unwrap();
        assert!(matches!(
            TaskStore::open(source(), Some(&path), clock, 100),
            Err(AnnotateError::Log { line: 1, .. })
        ));
    }
}
