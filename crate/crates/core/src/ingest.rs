//! Scene annotations, detection files and the language-conditioned detection
//! service client.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, FrameDims};
use crate::http::{JsonClient, ServiceConfig};

/// Inclusive frame-index interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FrameRange {
    pub start: u64,
    pub end: u64,
}

impl FrameRange {
    pub fn contains(&self, frame: u64) -> bool {
        self.start <= frame && frame <= self.end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtObject {
    pub track_id: u64,
    pub bbox: BoundingBox,
}

/// One annotated (scene, description) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneAnnotation {
    pub scene_id: String,
    pub frame_ranges: Vec<FrameRange>,
    pub description: String,
    pub gt: BTreeMap<u64, Vec<GtObject>>,
}

impl SceneAnnotation {
    pub fn contains_frame(&self, frame: u64) -> bool {
        self.frame_ranges.iter().any(|r| r.contains(frame))
    }

    /// Every frame index covered by the ranges, ascending.
    pub fn scored_frames(&self) -> impl Iterator<Item = u64> + '_ {
        self.frame_ranges.iter().flat_map(|r| r.start..=r.end)
    }

    /// `[first range start, last range end]`, or `None` without ranges.
    pub fn span(&self) -> Option<FrameRange> {
        Some(FrameRange {
            start: self.frame_ranges.first()?.start,
            end: self.frame_ranges.last()?.end,
        })
    }
}

/// Rewrite `"frame_range": { [a, b], [c, d] }` (a set of pairs written with
/// braces, as in the published listing) to a JSON array.
fn normalize_range_braces(doc: &str) -> String {
    let key = "\"frame_range\"";
    let Some(kpos) = doc.find(key) else {
        return doc.to_string();
    };
    let bytes = doc.as_bytes();
    let mut i = kpos + key.len();
    while i < bytes.len() && bytes[i].is_ascii_whitespace() {
        i += 1;
    }
    if i >= bytes.len() || bytes[i] != b':' {
        return doc.to_string();
    }
    i += 1;
    while i < bytes.len() && bytes[i].is_ascii_whitespace() {
        i += 1;
    }
    if i >= bytes.len() || bytes[i] != b'{' {
        return doc.to_string();
    }
    let open = i;
    let Some(rel_close) = doc[open..].find('}') else {
        return doc.to_string();
    };
    let close = open + rel_close;
    let inner = &doc[open + 1..close];
    if !inner.trim_start().starts_with('[') || inner.contains(['"', '{']) {
        return doc.to_string();
    }
    format!("{}[{}]{}", &doc[..open], inner, &doc[close + 1..])
}

fn as_u64(v: &Value, path: &str, what: &str) -> Result<u64> {
    match v.as_i64() {
        Some(n) if n < 0 => Err(Error::schema(path, format!("negative {what} {n}"))),
        Some(n) => Ok(n as u64),
        None => v
            .as_u64()
            .ok_or_else(|| Error::schema(path, format!("{what} must be a non-negative integer"))),
    }
}

fn parse_range(v: &Value, path: &str) -> Result<FrameRange> {
    let arr = v
        .as_array()
        .filter(|a| a.len() == 2)
        .ok_or_else(|| Error::schema(path, "malformed range: expected [start, end]"))?;
    let start = as_u64(&arr[0], path, "range start")?;
    let end = as_u64(&arr[1], path, "range end")?;
    if start > end {
        return Err(Error::schema(
            path,
            format!("malformed range: start {start} > end {end}"),
        ));
    }
    Ok(FrameRange { start, end })
}

fn parse_bbox(v: &Value, path: &str) -> Result<BoundingBox> {
    let arr = v
        .as_array()
        .filter(|a| a.len() == 4)
        .ok_or_else(|| Error::schema(path, "bbox must be [x1, y1, x2, y2]"))?;
    let mut c = [0.0; 4];
    for (slot, x) in c.iter_mut().zip(arr) {
        *slot = x
            .as_f64()
            .ok_or_else(|| Error::schema(path, "bbox coordinates must be numbers"))?;
    }
    if c[0] > c[2] {
        return Err(Error::schema(path, "x1>x2"));
    }
    if c[1] > c[3] {
        return Err(Error::schema(path, "y1>y2"));
    }
    BoundingBox::new(c[0], c[1], c[2], c[3]).map_err(|e| Error::schema(path, e.to_string()))
}

/// Parse one annotation document.
pub fn parse_orset(document: &str) -> Result<SceneAnnotation> {
    let normalized = normalize_range_braces(document);
    let root: Value = serde_json::from_str(&normalized)
        .map_err(|e| Error::schema("$", format!("not valid structured text: {e}")))?;
    let obj = root
        .as_object()
        .ok_or_else(|| Error::schema("$", "expected an object"))?;
    let field = |name: &str| {
        obj.get(name)
            .ok_or_else(|| Error::schema(name, "missing field"))
    };

    let scene_id = field("scene_id")?
        .as_str()
        .ok_or_else(|| Error::schema("scene_id", "must be a string"))?
        .to_string();
    let description = field("description")?
        .as_str()
        .ok_or_else(|| Error::schema("description", "must be a string"))?
        .to_string();

    let ranges_v = field("frame_range")?;
    let ranges_arr = ranges_v
        .as_array()
        .ok_or_else(|| Error::schema("frame_range", "must be a list of [start, end] pairs"))?;
    let frame_ranges: Vec<FrameRange> =
        if ranges_arr.len() == 2 && ranges_arr.iter().all(Value::is_number) {
            vec![parse_range(ranges_v, "frame_range")?]
        } else {
            ranges_arr
                .iter()
                .enumerate()
                .map(|(i, r)| parse_range(r, &format!("frame_range[{i}]")))
                .collect::<Result<_>>()?
        };
    for (i, pair) in frame_ranges.windows(2).enumerate() {
        if pair[1].start <= pair[0].end {
            return Err(Error::schema(
                format!("frame_range[{}]", i + 1),
                "ranges must be sorted and non-overlapping",
            ));
        }
    }

    let ann = field("annotations")?
        .as_object()
        .ok_or_else(|| Error::schema("annotations", "must be a map of frame -> objects"))?;
    let mut gt = BTreeMap::new();
    for (key, objs) in ann {
        let path = format!("annotations.{key}");
        let frame: u64 = key
            .parse()
            .map_err(|_| Error::schema(&path, "frame key must be a non-negative integer"))?;
        if !frame_ranges.iter().any(|r| r.contains(frame)) {
            return Err(Error::schema(
                &path,
                format!("frame {frame} lies outside every frame_range"),
            ));
        }
        let list = objs
            .as_array()
            .ok_or_else(|| Error::schema(&path, "must be a list of objects"))?;
        let mut parsed = Vec::with_capacity(list.len());
        for (i, o) in list.iter().enumerate() {
            let opath = format!("{path}[{i}]");
            let o = o
                .as_object()
                .ok_or_else(|| Error::schema(&opath, "must be an object"))?;
            let id_path = format!("{opath}.id");
            let id = o
                .get("id")
                .ok_or_else(|| Error::schema(&id_path, "missing field"))?;
            let track_id = as_u64(id, &id_path, "id")?;
            let bbox_path = format!("{opath}.bbox");
            let bbox = o
                .get("bbox")
                .ok_or_else(|| Error::schema(&bbox_path, "missing field"))?;
            parsed.push(GtObject {
                track_id,
                bbox: parse_bbox(bbox, &bbox_path)?,
            });
        }
        gt.insert(frame, parsed);
    }

    Ok(SceneAnnotation {
        scene_id,
        frame_ranges,
        description,
        gt,
    })
}

/// Canonical JSON rendering; frames are written in ascending order.
pub fn serialize_orset(scene: &SceneAnnotation) -> String {
    let mut ann = Map::new();
    for (frame, objs) in &scene.gt {
        let list: Vec<Value> = objs
            .iter()
            .map(|o| json!({"id": o.track_id, "bbox": <[f64; 4]>::from(o.bbox)}))
            .collect();
        ann.insert(frame.to_string(), Value::Array(list));
    }
    let ranges: Vec<Value> = scene
        .frame_ranges
        .iter()
        .map(|r| json!([r.start, r.end]))
        .collect();
    let mut root = Map::new();
    root.insert("scene_id".into(), Value::String(scene.scene_id.clone()));
    root.insert("frame_range".into(), Value::Array(ranges));
    root.insert("annotations".into(), Value::Object(ann));
    root.insert(
        "description".into(),
        Value::String(scene.description.clone()),
    );
    let mut s = serde_json::to_string_pretty(&Value::Object(root)).expect("json values serialize");
    s.push('\n');
    s
}

pub fn read_orset(path: &Path) -> Result<SceneAnnotation> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_orset(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectionOrigin {
    File,
    Service,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub frame: u64,
    pub bbox: BoundingBox,
    pub score: Option<f64>,
    pub origin: DetectionOrigin,
    /// Ground-truth identity for synthetic detections; consumed only by the
    /// synthetic embedding provider.
    pub provenance: Option<u64>,
}

/// Reference to a frame image. The engine never decodes pixels; the image
/// reference is forwarded to external services as-is.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameRef {
    pub index: u64,
    pub image: Option<String>,
}

impl FrameRef {
    pub fn new(index: u64) -> Self {
        FrameRef { index, image: None }
    }

    /// Image reference sent over the wire: the path if known, else the index.
    pub fn wire_ref(&self) -> String {
        self.image.clone().unwrap_or_else(|| self.index.to_string())
    }
}

pub trait DetectionSource: Send + Sync {
    fn detect(&self, frame: &FrameRef, description: &str) -> Result<Vec<Detection>>;
}

/// Precomputed detections grouped by frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionTable {
    pub by_frame: BTreeMap<u64, Vec<Detection>>,
}

impl DetectionTable {
    pub fn len(&self) -> usize {
        self.by_frame.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn push(&mut self, det: Detection) {
        self.by_frame.entry(det.frame).or_default().push(det);
    }
}

impl DetectionSource for DetectionTable {
    fn detect(&self, frame: &FrameRef, _description: &str) -> Result<Vec<Detection>> {
        Ok(self.by_frame.get(&frame.index).cloned().unwrap_or_default())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionRecord {
    frame: u64,
    bbox: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    identity: Option<u64>,
}

/// Read JSON-lines detections. Blank lines are skipped; order within a frame
/// follows file order.
pub fn read_detections_from<R: BufRead>(reader: R) -> Result<DetectionTable> {
    let mut table = DetectionTable::default();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Line {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Line {
            line: line_no,
            message,
        };
        let rec: DetectionRecord =
            serde_json::from_str(&line).map_err(|e| bad(format!("malformed detection ({e})")))?;
        let [x1, y1, x2, y2] = rec.bbox;
        if x1 > x2 {
            return Err(bad("x1>x2".into()));
        }
        if y1 > y2 {
            return Err(bad("y1>y2".into()));
        }
        if let Some(s) = rec.score {
            if !(0.0..=1.0).contains(&s) {
                return Err(bad(format!("score {s} outside [0, 1]")));
            }
        }
        let bbox = BoundingBox::new(x1, y1, x2, y2).map_err(|e| bad(e.to_string()))?;
        table.push(Detection {
            frame: rec.frame,
            bbox,
            score: rec.score,
            origin: DetectionOrigin::File,
            provenance: rec.identity,
        });
    }
    Ok(table)
}

pub fn read_detections(path: &Path) -> Result<DetectionTable> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_detections_from(BufReader::new(f))
}

pub fn write_detections<W: Write>(mut out: W, table: &DetectionTable) -> std::io::Result<()> {
    for det in table.by_frame.values().flatten() {
        let rec = DetectionRecord {
            frame: det.frame,
            bbox: det.bbox.into(),
            score: det.score,
            identity: det.provenance,
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Prompt wording. `Generic` suits models that answer with coordinate lists;
/// `Labeling` suits models tuned for explicit grounding/labeling instructions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptFamily {
    #[default]
    Generic,
    Labeling,
}

impl fmt::Display for PromptFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromptFamily::Generic => "generic",
            PromptFamily::Labeling => "labeling",
        })
    }
}

pub fn build_prompt(description: &str, family: PromptFamily) -> Result<String> {
    if description.trim().is_empty() {
        return Err(Error::InvalidArgument(
            "description must not be empty".into(),
        ));
    }
    Ok(match family {
        PromptFamily::Generic => format!(
            "Please detect all {description} in the image and output their coordinates in the [x1, y1, x2, y2] format."
        ),
        PromptFamily::Labeling => format!(
            "Please detect and label all {description} in the following image and mark their positions."
        ),
    })
}

#[derive(Serialize)]
struct DetectRequest<'a> {
    image: &'a str,
    prompt: &'a str,
}

#[derive(Deserialize)]
struct DetectReply {
    boxes: Vec<[f64; 4]>,
}

/// Remote language-conditioned detector.
pub struct ServiceDetector {
    client: JsonClient,
    family: PromptFamily,
    dims: FrameDims,
}

impl ServiceDetector {
    pub fn new(config: ServiceConfig, family: PromptFamily, dims: FrameDims) -> Self {
        ServiceDetector {
            client: JsonClient::new(config),
            family,
            dims,
        }
    }
}

impl DetectionSource for ServiceDetector {
    fn detect(&self, frame: &FrameRef, description: &str) -> Result<Vec<Detection>> {
        service_detect(&self.client, frame, description, self.family, &self.dims)
    }
}

fn service_detect(
    client: &JsonClient,
    frame: &FrameRef,
    description: &str,
    family: PromptFamily,
    dims: &FrameDims,
) -> Result<Vec<Detection>> {
    let prompt = build_prompt(description, family)?;
    let image = frame.wire_ref();
    let reply: DetectReply = client.post(&DetectRequest {
        image: &image,
        prompt: &prompt,
    })?;
    reply
        .boxes
        .into_iter()
        .map(|[a, b, c, d]| {
            // models occasionally swap corners; order them before clamping
            let raw = BoundingBox::new(a.min(c), b.min(d), a.max(c), b.max(d))
                .map_err(|e| Error::Body(e.to_string()))?;
            Ok(Detection {
                frame: frame.index,
                bbox: raw.clamp_to(dims),
                score: None,
                origin: DetectionOrigin::Service,
                provenance: None,
            })
        })
        .collect()
}
