//! The six-slice story bundle consumed by the scrollytelling UI, its
//! validator, and the loss parity fixtures shared with the UI.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dataset::{write_ppm, Image, LabeledDataset};
use crate::error::{Error, Result};
use crate::fingerprint;
use crate::inference::InferenceResult;
use crate::losses::{euclidean_distance, triplet_loss_value, Margin};
use crate::net::{Activation, EmbeddingNet};
use crate::projection::FramesFile;
use crate::rng;
use crate::trainer::{embed_dataset, TrainingRun};

pub const FORMAT_VERSION: u32 = 1;
pub const SCROLL_MODE: &str = "steps";
/// Brown, light brown, gray, black, white.
pub const PALETTE: [&str; 5] = ["#5C4033", "#C4A484", "#808080", "#000000", "#FFFFFF"];
pub const SLICE_IDS: [&str; 6] = [
    "snn_concept",
    "embedding_model",
    "euclidean_distance",
    "loss_function",
    "training",
    "inferencing",
];
pub const QUERY_ASSET_ID: &str = "query";
/// Absolute tolerance for every re-derived number.
pub const CONSISTENCY_TOLERANCE: f64 = 1e-9;
pub const QUIZ_LENGTH: usize = 7;
pub const QUIZ_CHOICES: usize = 4;

// ---------------------------------------------------------------------------
// Content resources
// ---------------------------------------------------------------------------

const DEFAULT_NARRATIVE: &str = include_str!("../resources/narrative.toml");
const DEFAULT_QUIZ: &str = include_str!("../resources/quiz.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceText {
    pub heading: String,
    pub narrative: String,
}

/// Slice headings and prose, loaded from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarrativePack {
    pub title: String,
    pub formula_text: String,
    pub loss_formula_text: String,
    pub snn_concept: SliceText,
    pub embedding_model: SliceText,
    pub euclidean_distance: SliceText,
    pub loss_function: SliceText,
    pub training: SliceText,
    pub inferencing: SliceText,
}

impl NarrativePack {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("narrative pack: {e}")))
    }
}

impl Default for NarrativePack {
    fn default() -> Self {
        NarrativePack::from_toml(DEFAULT_NARRATIVE).expect("bundled narrative pack parses")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuizQuestion {
    pub prompt: String,
    pub choices: Vec<String>,
    pub answer_index: usize,
}

/// The seven pre/post test questions with their published answers.
pub fn default_quiz() -> Vec<QuizQuestion> {
    serde_json::from_str(DEFAULT_QUIZ).expect("bundled quiz parses")
}

// ---------------------------------------------------------------------------
// Bundle types
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoryBundle {
    pub format_version: u32,
    pub scroll_mode: String,
    pub dataset_fingerprint: String,
    pub title: String,
    pub palette: Vec<String>,
    pub classes: Vec<ClassEntry>,
    pub assets: BTreeMap<String, Asset>,
    pub slices: Vec<Slice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quiz: Option<Vec<QuizQuestion>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub name: String,
    pub color: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Asset {
    pub ppm_base64: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum Slice {
    SnnConcept(SnnConceptSlice),
    EmbeddingModel(EmbeddingModelSlice),
    EuclideanDistance(EuclideanDistanceSlice),
    LossFunction(LossFunctionSlice),
    Training(TrainingSlice),
    Inferencing(InferencingSlice),
}

impl Slice {
    pub fn id(&self) -> &'static str {
        match self {
            Slice::SnnConcept(_) => SLICE_IDS[0],
            Slice::EmbeddingModel(_) => SLICE_IDS[1],
            Slice::EuclideanDistance(_) => SLICE_IDS[2],
            Slice::LossFunction(_) => SLICE_IDS[3],
            Slice::Training(_) => SLICE_IDS[4],
            Slice::Inferencing(_) => SLICE_IDS[5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnnConceptSlice {
    pub heading: String,
    pub narrative: String,
    pub figure_asset_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bubble {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub color: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridCell {
    pub asset_id: String,
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridLayout {
    pub columns: usize,
    pub cells: Vec<GridCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingModelSlice {
    pub heading: String,
    pub narrative: String,
    pub sample_asset_ids: Vec<String>,
    pub before_grid: GridLayout,
    pub after_bubbles: Vec<Bubble>,
    pub architecture_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripletRole {
    Anchor,
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleBubble {
    pub role: TripletRole,
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub color: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LineRole {
    #[serde(rename = "anchor-positive")]
    AnchorPositive,
    #[serde(rename = "anchor-negative")]
    AnchorNegative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: String,
    pub to: String,
    pub role: LineRole,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EuclideanDistanceSlice {
    pub heading: String,
    pub narrative: String,
    pub bubbles: Vec<RoleBubble>,
    pub lines: Vec<Line>,
    pub formula_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossFunctionSlice {
    pub heading: String,
    pub narrative: String,
    pub bubbles: Vec<RoleBubble>,
    pub margin_default: f64,
    pub margin_range: [f64; 2],
    pub loss_kind: String,
    pub initial_loss: f64,
    pub formula_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassBubble {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub class: String,
    pub color: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingFrame {
    pub epoch: usize,
    pub loss: f64,
    pub bubbles: Vec<ClassBubble>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSlice {
    pub heading: String,
    pub narrative: String,
    pub frames: Vec<TrainingFrame>,
    pub loss_curve: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleNeighbor {
    pub id: String,
    pub distance: f64,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferencingSlice {
    pub heading: String,
    pub narrative: String,
    pub query_asset_id: String,
    pub query_coords: [f64; 2],
    pub query_embedding: Vec<f64>,
    pub radius: f64,
    pub k: usize,
    pub neighbors: Vec<BundleNeighbor>,
}

impl StoryBundle {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn slice(&self, id: &str) -> Option<&Slice> {
        self.slices.iter().find(|s| s.id() == id)
    }
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

pub struct BundleInputs<'a> {
    pub run: &'a TrainingRun,
    pub frames: &'a FramesFile,
    pub inference: &'a InferenceResult,
    pub dataset: &'a LabeledDataset,
    pub narrative: &'a NarrativePack,
    pub quiz: Option<Vec<QuizQuestion>>,
}

pub fn encode_asset(img: &Image) -> Asset {
    Asset {
        ppm_base64: BASE64.encode(write_ppm(img)),
        label: img.label.clone(),
    }
}

/// One-line description of the network, input to embedding.
pub fn architecture_text(net: &EmbeddingNet) -> String {
    let act = |a: Activation| match a {
        Activation::Relu => "relu",
        Activation::Linear => "linear",
    };
    let s = net.input_shape();
    let mut parts = vec![format!("input {}×{}×{}", s.height, s.width, s.channels)];
    for (spec, shape) in net.architecture().conv_layers.iter().zip(&net.plan().conv) {
        parts.push(format!(
            "conv {}@{}×{} {}",
            spec.out_channels,
            spec.kernel,
            spec.kernel,
            act(spec.activation)
        ));
        parts.push(format!(
            "max-pool 2×2 → {}×{}×{}",
            shape.pool_h, shape.pool_w, shape.out_channels
        ));
    }
    for spec in &net.architecture().fc_layers {
        parts.push(format!("dense {} {}", spec.out_dim, act(spec.activation)));
    }
    parts.push(format!(
        "embedding ({} numbers)",
        net.architecture().embedding_dim
    ));
    parts.join(" → ")
}

fn check_fingerprint(name: &str, value: u64, dataset: u64) -> Result<()> {
    if value != dataset {
        return Err(Error::Fingerprint {
            left_name: name.into(),
            left: value,
            right_name: "dataset".into(),
            right: dataset,
        });
    }
    Ok(())
}

pub fn build_bundle(inputs: &BundleInputs<'_>) -> Result<StoryBundle> {
    let BundleInputs {
        run,
        frames,
        inference,
        dataset,
        narrative,
        ..
    } = inputs;
    let fp = dataset.fingerprint();
    check_fingerprint("training run", run.dataset_fingerprint, fp)?;
    check_fingerprint("frames", frames.fingerprint()?, fp)?;
    check_fingerprint("inference", inference.fingerprint()?, fp)?;
    if frames.frames.len() != run.snapshots.len() {
        return Err(Error::Bundle(format!(
            "{} frames for {} snapshots",
            frames.frames.len(),
            run.snapshots.len()
        )));
    }
    if let Some(f) = frames
        .frames
        .iter()
        .find(|f| f.coords.rows() != dataset.len())
    {
        return Err(Error::Bundle(format!(
            "frame {} has {} rows for {} items",
            f.epoch,
            f.coords.rows(),
            dataset.len()
        )));
    }

    let mut assets: BTreeMap<String, Asset> = dataset
        .items
        .iter()
        .map(|img| (img.id.clone(), encode_asset(img)))
        .collect();
    let mut query = inference.query()?;
    query.label = query.label.trim().to_owned();
    assets.insert(QUERY_ASSET_ID.into(), encode_asset(&query));

    let color = |i: usize| dataset.color_of(&dataset.items[i].label).to_owned();
    let classes = dataset
        .classes
        .iter()
        .map(|c| ClassEntry {
            name: c.clone(),
            color: dataset.color_of(c).to_owned(),
        })
        .collect();

    // one figure per class
    let figure_asset_ids = dataset
        .classes
        .iter()
        .filter_map(|c| dataset.items.iter().find(|i| &i.label == c))
        .map(|i| i.id.clone())
        .collect();

    let first = &frames.frames[0].coords;
    let last = &frames.frames[frames.frames.len() - 1].coords;

    let ids = dataset.ids();
    let columns = (ids.len() as f64).sqrt().ceil().max(1.0) as usize;
    let embedding_model = EmbeddingModelSlice {
        heading: narrative.embedding_model.heading.clone(),
        narrative: narrative.embedding_model.narrative.clone(),
        sample_asset_ids: ids.iter().map(|s| s.to_string()).collect(),
        before_grid: GridLayout {
            columns,
            cells: ids
                .iter()
                .enumerate()
                .map(|(i, id)| GridCell {
                    asset_id: id.to_string(),
                    row: i / columns,
                    col: i % columns,
                })
                .collect(),
        },
        after_bubbles: (0..ids.len())
            .map(|i| Bubble {
                id: ids[i].to_owned(),
                x: last.get(i, 0),
                y: last.get(i, 1),
                color: color(i),
            })
            .collect(),
        architecture_text: architecture_text(&run.final_net),
    };

    let t = run.first_triplet;
    let roles = [
        (TripletRole::Anchor, t.anchor),
        (TripletRole::Positive, t.positive),
        (TripletRole::Negative, t.negative),
    ];
    let triplet_bubbles: Vec<RoleBubble> = roles
        .iter()
        .map(|&(role, i)| RoleBubble {
            role,
            id: ids[i].to_owned(),
            x: first.get(i, 0),
            y: first.get(i, 1),
            color: color(i),
        })
        .collect();
    let xy = |b: &RoleBubble| [b.x, b.y];
    let (a, p, n) = (
        xy(&triplet_bubbles[0]),
        xy(&triplet_bubbles[1]),
        xy(&triplet_bubbles[2]),
    );
    let lines = vec![
        Line {
            from: ids[t.anchor].to_owned(),
            to: ids[t.positive].to_owned(),
            role: LineRole::AnchorPositive,
            distance: euclidean_distance(&a, &p)?,
        },
        Line {
            from: ids[t.anchor].to_owned(),
            to: ids[t.negative].to_owned(),
            role: LineRole::AnchorNegative,
            distance: euclidean_distance(&a, &n)?,
        },
    ];
    let margin = run.hyperparams.margin;

    let training = TrainingSlice {
        heading: narrative.training.heading.clone(),
        narrative: narrative.training.narrative.clone(),
        frames: frames
            .frames
            .iter()
            .zip(&run.snapshots)
            .map(|(f, s)| TrainingFrame {
                epoch: s.epoch,
                loss: s.mean_loss,
                bubbles: (0..ids.len())
                    .map(|i| ClassBubble {
                        id: ids[i].to_owned(),
                        x: f.coords.get(i, 0),
                        y: f.coords.get(i, 1),
                        class: dataset.items[i].label.clone(),
                        color: color(i),
                    })
                    .collect(),
            })
            .collect(),
        loss_curve: run.loss_curve(),
    };

    let gallery = embed_dataset(&run.final_net, dataset)?;
    let mut neighbors = Vec::with_capacity(inference.neighbors.len());
    for nb in &inference.neighbors {
        let i = dataset
            .index_of(&nb.id)
            .ok_or_else(|| Error::Bundle(format!("neighbor {} is not a dataset item", nb.id)))?;
        let embedding = gallery.row(i).to_vec();
        let d = euclidean_distance(&inference.query_embedding, &embedding)?;
        if (d - nb.distance).abs() > CONSISTENCY_TOLERANCE {
            return Err(Error::Bundle(format!(
                "neighbor {} distance {} disagrees with the final network ({d})",
                nb.id, nb.distance
            )));
        }
        neighbors.push(BundleNeighbor {
            id: nb.id.clone(),
            distance: nb.distance,
            embedding,
        });
    }
    let inferencing = InferencingSlice {
        heading: narrative.inferencing.heading.clone(),
        narrative: narrative.inferencing.narrative.clone(),
        query_asset_id: QUERY_ASSET_ID.into(),
        query_coords: inference.query_coords_2d,
        query_embedding: inference.query_embedding.clone(),
        radius: inference.radius_2d,
        k: inference.k,
        neighbors,
    };

    let bundle = StoryBundle {
        format_version: FORMAT_VERSION,
        scroll_mode: SCROLL_MODE.into(),
        dataset_fingerprint: fingerprint::to_hex(fp),
        title: narrative.title.clone(),
        palette: PALETTE.iter().map(|s| s.to_string()).collect(),
        classes,
        assets,
        slices: vec![
            Slice::SnnConcept(SnnConceptSlice {
                heading: narrative.snn_concept.heading.clone(),
                narrative: narrative.snn_concept.narrative.clone(),
                figure_asset_ids,
            }),
            Slice::EmbeddingModel(embedding_model),
            Slice::EuclideanDistance(EuclideanDistanceSlice {
                heading: narrative.euclidean_distance.heading.clone(),
                narrative: narrative.euclidean_distance.narrative.clone(),
                bubbles: triplet_bubbles.clone(),
                lines,
                formula_text: narrative.formula_text.clone(),
            }),
            Slice::LossFunction(LossFunctionSlice {
                heading: narrative.loss_function.heading.clone(),
                narrative: narrative.loss_function.narrative.clone(),
                bubbles: triplet_bubbles,
                margin_default: margin.value(),
                margin_range: Margin::UI_RANGE,
                loss_kind: "triplet".into(),
                initial_loss: triplet_loss_value(&a, &p, &n, margin)?,
                formula_text: narrative.loss_formula_text.clone(),
            }),
            Slice::Training(training),
            Slice::Inferencing(inferencing),
        ],
        quiz: inputs.quiz.clone(),
    };
    let problems = validate_bundle(&serde_json::to_value(&bundle)?);
    if let Some(v) = problems.first() {
        return Err(Error::Bundle(format!(
            "{} validation errors, first at {}: {}",
            problems.len(),
            v.path,
            v.message
        )));
    }
    Ok(bundle)
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

/// Parses `text` and validates it; only non-JSON input is an error.
pub fn validate_bundle_str(text: &str) -> Result<Vec<Violation>> {
    let doc: Value = serde_json::from_str(text)?;
    Ok(validate_bundle(&doc))
}

/// Every violated bundle invariant, in document order.
pub fn validate_bundle(doc: &Value) -> Vec<Violation> {
    let mut c = Checker::default();
    c.bundle(doc);
    c.out
}

#[derive(Default)]
struct Checker {
    out: Vec<Violation>,
    assets: BTreeSet<String>,
    classes: HashMap<String, String>,
    colors: BTreeSet<String>,
    /// Final training frame coordinates by bubble id.
    final_coords: HashMap<String, [f64; 2]>,
    /// `(role, id, x, y)` of the euclidean and loss slices.
    triplets: Vec<Vec<(String, String, f64, f64)>>,
}

fn is_hex_color(s: &str) -> bool {
    s.len() == 7 && s.starts_with('#') && s[1..].chars().all(|c| c.is_ascii_hexdigit())
}

impl Checker {
    fn err(&mut self, path: &str, message: impl Into<String>) {
        self.out.push(Violation {
            path: path.to_owned(),
            message: message.into(),
        });
    }

    fn field<'v>(&mut self, obj: &'v Value, path: &str, key: &str) -> Option<&'v Value> {
        match obj.as_object() {
            None => {
                self.err(path, "expected an object");
                None
            }
            Some(m) => {
                let v = m.get(key);
                if v.is_none() {
                    self.err(&format!("{path}.{key}"), "missing");
                }
                v
            }
        }
    }

    fn num(&mut self, v: &Value, path: &str) -> Option<f64> {
        match v.as_f64() {
            Some(x) if x.is_finite() => Some(x),
            _ => {
                self.err(path, "expected a finite number");
                None
            }
        }
    }

    fn uint(&mut self, v: &Value, path: &str) -> Option<u64> {
        let r = v.as_u64();
        if r.is_none() {
            self.err(path, "expected a non-negative integer");
        }
        r
    }

    fn string<'v>(&mut self, v: &'v Value, path: &str) -> Option<&'v str> {
        let r = v.as_str();
        if r.is_none() {
            self.err(path, "expected a string");
        }
        r
    }

    fn array<'v>(&mut self, v: &'v Value, path: &str) -> Option<&'v [Value]> {
        let r = v.as_array().map(|a| a.as_slice());
        if r.is_none() {
            self.err(path, "expected an array");
        }
        r
    }

    fn num_at(&mut self, obj: &Value, path: &str, key: &str) -> Option<f64> {
        let v = self.field(obj, path, key)?;
        self.num(v, &format!("{path}.{key}"))
    }

    fn uint_at(&mut self, obj: &Value, path: &str, key: &str) -> Option<u64> {
        let v = self.field(obj, path, key)?;
        self.uint(v, &format!("{path}.{key}"))
    }

    fn str_at<'v>(&mut self, obj: &'v Value, path: &str, key: &str) -> Option<&'v str> {
        let v = self.field(obj, path, key)?;
        self.string(v, &format!("{path}.{key}"))
    }

    fn array_at<'v>(&mut self, obj: &'v Value, path: &str, key: &str) -> Option<&'v [Value]> {
        let v = self.field(obj, path, key)?;
        self.array(v, &format!("{path}.{key}"))
    }

    fn asset_ref(&mut self, id: &str, path: &str) {
        if !self.assets.contains(id) {
            self.err(path, format!("unknown asset id {id:?}"));
        }
    }

    fn asset_at(&mut self, obj: &Value, path: &str, key: &str) -> Option<String> {
        let id = self.str_at(obj, path, key)?.to_owned();
        self.asset_ref(&id, &format!("{path}.{key}"));
        Some(id)
    }

    fn asset_list(&mut self, obj: &Value, path: &str, key: &str) {
        if let Some(items) = self.array_at(obj, path, key) {
            for (i, v) in items.iter().enumerate() {
                let p = format!("{path}.{key}[{i}]");
                if let Some(id) = self.string(v, &p) {
                    self.asset_ref(id, &p);
                }
            }
        }
    }

    fn coord(&mut self, obj: &Value, path: &str, key: &str) -> Option<f64> {
        let x = self.num_at(obj, path, key)?;
        if x.abs() > 1.0 + 1e-12 {
            self.err(
                &format!("{path}.{key}"),
                format!("{x} lies outside [-1, 1]"),
            );
        }
        Some(x)
    }

    fn color(&mut self, obj: &Value, path: &str) -> Option<String> {
        let c = self.str_at(obj, path, "color")?.to_owned();
        if !self.colors.contains(&c) {
            self.err(
                &format!("{path}.color"),
                format!("{c} is neither a palette nor a class color"),
            );
        }
        Some(c)
    }

    /// `{id, x, y, color}`; returns `(id, x, y)`.
    fn bubble(&mut self, v: &Value, path: &str) -> Option<(String, f64, f64)> {
        let id = self.asset_at(v, path, "id");
        let x = self.coord(v, path, "x");
        let y = self.coord(v, path, "y");
        self.color(v, path);
        Some((id?, x?, y?))
    }

    fn close(&mut self, path: &str, stored: f64, derived: f64, what: &str) {
        if (stored - derived).abs() > CONSISTENCY_TOLERANCE {
            self.err(
                path,
                format!("{what} {stored} does not match recomputed {derived}"),
            );
        }
    }

    fn bundle(&mut self, doc: &Value) {
        if !doc.is_object() {
            self.err("$", "bundle must be a JSON object");
            return;
        }
        if let Some(v) = self.uint_at(doc, "$", "format_version") {
            if v != FORMAT_VERSION as u64 {
                self.err("format_version", format!("unsupported version {v}"));
            }
        }
        if let Some(m) = self.str_at(doc, "$", "scroll_mode") {
            if m != SCROLL_MODE {
                self.err("scroll_mode", format!("expected \"steps\", got {m:?}"));
            }
        }
        if let Some(fp) = self.str_at(doc, "$", "dataset_fingerprint") {
            if fingerprint::from_hex(fp).is_none() {
                self.err("dataset_fingerprint", "expected 16 hex digits");
            }
        }
        self.str_at(doc, "$", "title");
        if let Some(p) = self.array_at(doc, "$", "palette") {
            if p.is_empty() {
                self.err("palette", "palette is empty");
            }
            for (i, c) in p.iter().enumerate() {
                let path = format!("palette[{i}]");
                if let Some(s) = self.string(c, &path) {
                    if is_hex_color(s) {
                        self.colors.insert(s.to_owned());
                    } else {
                        self.err(&path, format!("{s:?} is not #RRGGBB"));
                    }
                }
            }
        }
        if let Some(cs) = self.array_at(doc, "$", "classes") {
            for (i, c) in cs.iter().enumerate() {
                let path = format!("classes[{i}]");
                let name = self.str_at(c, &path, "name");
                let color = self.str_at(c, &path, "color");
                if let (Some(n), Some(col)) = (name, color) {
                    if !is_hex_color(col) {
                        self.err(&format!("{path}.color"), format!("{col:?} is not #RRGGBB"));
                    }
                    if self.classes.insert(n.to_owned(), col.to_owned()).is_some() {
                        self.err(&format!("{path}.name"), format!("duplicate class {n:?}"));
                    }
                    self.colors.insert(col.to_owned());
                }
            }
        }
        self.assets(doc);
        if let Some(slices) = self.array_at(doc, "$", "slices") {
            let ids: Vec<&str> = slices
                .iter()
                .map(|s| s.get("id").and_then(Value::as_str).unwrap_or("?"))
                .collect();
            if ids != SLICE_IDS {
                self.err(
                    "slices",
                    format!("expected slice order {SLICE_IDS:?}, got {ids:?}"),
                );
            }
            // training first: inferencing reads its final frame
            let order: Vec<usize> = (0..slices.len())
                .filter(|&i| ids[i] == "training")
                .chain((0..slices.len()).filter(|&i| ids[i] != "training"))
                .collect();
            for i in order {
                let path = format!("slices[{i}]");
                match ids[i] {
                    "snn_concept" => self.snn_concept(&slices[i], &path),
                    "embedding_model" => self.embedding_model(&slices[i], &path),
                    "euclidean_distance" => self.euclidean(&slices[i], &path),
                    "loss_function" => self.loss_function(&slices[i], &path),
                    "training" => self.training(&slices[i], &path),
                    "inferencing" => self.inferencing(&slices[i], &path),
                    other => self.err(&format!("{path}.id"), format!("unknown slice id {other:?}")),
                }
            }
            if let [a, b] = self.triplets.as_slice() {
                if a != b {
                    self.err(
                        "slices",
                        "euclidean_distance and loss_function show different triplets",
                    );
                }
            }
        }
        if let Some(q) = doc.get("quiz") {
            if !q.is_null() {
                self.quiz(q);
            }
        }
        self.out.sort_by_key(|v| slice_rank(&v.path));
    }

    fn assets(&mut self, doc: &Value) {
        let Some(assets) = self.field(doc, "$", "assets") else {
            return;
        };
        let Some(map) = assets.as_object() else {
            self.err("assets", "expected an object");
            return;
        };
        for (id, a) in map {
            let path = format!("assets[{id:?}]");
            self.assets.insert(id.clone());
            if let Some(b64) = self.str_at(a, &path, "ppm_base64") {
                match BASE64.decode(b64) {
                    Err(e) => self.err(&format!("{path}.ppm_base64"), format!("bad base64: {e}")),
                    Ok(bytes) => {
                        if let Err(e) = crate::dataset::read_ppm(&bytes) {
                            self.err(&format!("{path}.ppm_base64"), e.to_string());
                        }
                    }
                }
            }
            if let Some(label) = self.str_at(a, &path, "label") {
                if id != QUERY_ASSET_ID && !self.classes.contains_key(label) {
                    self.err(&format!("{path}.label"), format!("unknown class {label:?}"));
                }
            }
        }
    }

    fn text(&mut self, s: &Value, path: &str) {
        self.str_at(s, path, "heading");
        self.str_at(s, path, "narrative");
    }

    fn snn_concept(&mut self, s: &Value, path: &str) {
        self.text(s, path);
        self.asset_list(s, path, "figure_asset_ids");
    }

    fn embedding_model(&mut self, s: &Value, path: &str) {
        self.text(s, path);
        self.str_at(s, path, "architecture_text");
        self.asset_list(s, path, "sample_asset_ids");
        if let Some(grid) = self.field(s, path, "before_grid") {
            let gpath = format!("{path}.before_grid");
            let cols = self.uint_at(grid, &gpath, "columns");
            if cols == Some(0) {
                self.err(&format!("{gpath}.columns"), "must be ≥ 1");
            }
            if let Some(cells) = self.array_at(grid, &gpath, "cells") {
                let mut seen = BTreeSet::new();
                for (i, c) in cells.iter().enumerate() {
                    let cp = format!("{gpath}.cells[{i}]");
                    self.asset_at(c, &cp, "asset_id");
                    let (r, col) = (self.uint_at(c, &cp, "row"), self.uint_at(c, &cp, "col"));
                    if let (Some(r), Some(col), Some(n)) = (r, col, cols) {
                        if col >= n {
                            self.err(
                                &format!("{cp}.col"),
                                format!("column {col} beyond {n} columns"),
                            );
                        }
                        if !seen.insert((r, col)) {
                            self.err(&cp, format!("cell ({r}, {col}) used twice"));
                        }
                    }
                }
            }
        }
        if let Some(bs) = self.array_at(s, path, "after_bubbles") {
            for (i, b) in bs.iter().enumerate() {
                self.bubble(b, &format!("{path}.after_bubbles[{i}]"));
            }
        }
    }

    /// a/p/n bubbles; returns coordinates by id.
    fn role_bubbles(&mut self, s: &Value, path: &str) -> HashMap<String, [f64; 2]> {
        let mut coords = HashMap::new();
        let mut listing = Vec::new();
        let Some(bs) = self.array_at(s, path, "bubbles") else {
            return coords;
        };
        let mut roles = Vec::new();
        for (i, b) in bs.iter().enumerate() {
            let bp = format!("{path}.bubbles[{i}]");
            let role = self.str_at(b, &bp, "role").map(str::to_owned);
            if let Some(r) = &role {
                if !["anchor", "positive", "negative"].contains(&r.as_str()) {
                    self.err(&format!("{bp}.role"), format!("unknown role {r:?}"));
                }
                roles.push(r.clone());
            }
            if let Some((id, x, y)) = self.bubble(b, &bp) {
                coords.insert(id.clone(), [x, y]);
                listing.push((role.unwrap_or_default(), id, x, y));
            }
        }
        roles.sort();
        if roles != ["anchor", "negative", "positive"] {
            self.err(
                &format!("{path}.bubbles"),
                "expected exactly one anchor, one positive and one negative",
            );
        }
        self.triplets.push(listing);
        coords
    }

    fn euclidean(&mut self, s: &Value, path: &str) {
        self.text(s, path);
        self.str_at(s, path, "formula_text");
        let coords = self.role_bubbles(s, path);
        let Some(lines) = self.array_at(s, path, "lines") else {
            return;
        };
        for (i, l) in lines.iter().enumerate() {
            let lp = format!("{path}.lines[{i}]");
            if let Some(r) = self.str_at(l, &lp, "role") {
                if r != "anchor-positive" && r != "anchor-negative" {
                    self.err(&format!("{lp}.role"), format!("unknown line role {r:?}"));
                }
            }
            let from = self.str_at(l, &lp, "from").map(str::to_owned);
            let to = self.str_at(l, &lp, "to").map(str::to_owned);
            let dist = self.num_at(l, &lp, "distance");
            let end = |c: &mut Self, id: Option<String>, key: &str| {
                let id = id?;
                let p = coords.get(&id).copied();
                if p.is_none() {
                    c.err(
                        &format!("{lp}.{key}"),
                        format!("{id:?} is not one of the slice bubbles"),
                    );
                }
                p
            };
            let (a, b) = (end(self, from, "from"), end(self, to, "to"));
            if let (Some(a), Some(b), Some(d)) = (a, b, dist) {
                let derived = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
                self.close(&format!("{lp}.distance"), d, derived, "distance");
            }
        }
    }

    fn loss_function(&mut self, s: &Value, path: &str) {
        self.text(s, path);
        self.str_at(s, path, "formula_text");
        self.role_bubbles(s, path);
        if let Some(kind) = self.str_at(s, path, "loss_kind") {
            if kind != "triplet" {
                self.err(
                    &format!("{path}.loss_kind"),
                    format!("expected \"triplet\", got {kind:?}"),
                );
            }
        }
        if let Some(r) = self.array_at(s, path, "margin_range") {
            let vals: Vec<Option<f64>> = r.iter().map(Value::as_f64).collect();
            if vals != [Some(Margin::UI_RANGE[0]), Some(Margin::UI_RANGE[1])] {
                self.err(&format!("{path}.margin_range"), "expected [0, 5]");
            }
        }
        let margin = self.num_at(s, path, "margin_default");
        if let Some(m) = margin {
            if !(Margin::UI_RANGE[0]..=Margin::UI_RANGE[1]).contains(&m) {
                self.err(
                    &format!("{path}.margin_default"),
                    format!("{m} outside [0, 5]"),
                );
            }
        }
        let stored = self.num_at(s, path, "initial_loss");
        let listing = self.triplets.last().cloned().unwrap_or_default();
        let find = |role: &str| {
            listing
                .iter()
                .find(|(r, ..)| r == role)
                .map(|&(_, _, x, y)| [x, y])
        };
        if let (Some(a), Some(p), Some(n), Some(m), Some(stored)) = (
            find("anchor"),
            find("positive"),
            find("negative"),
            margin,
            stored,
        ) {
            let sq = |u: [f64; 2], v: [f64; 2]| (u[0] - v[0]).powi(2) + (u[1] - v[1]).powi(2);
            let derived = (sq(a, p) - sq(a, n) + m).max(0.0);
            self.close(
                &format!("{path}.initial_loss"),
                stored,
                derived,
                "initial_loss",
            );
        }
    }

    fn training(&mut self, s: &Value, path: &str) {
        self.text(s, path);
        let curve: Option<Vec<Option<f64>>> = self.array_at(s, path, "loss_curve").map(|c| {
            c.iter()
                .enumerate()
                .map(|(i, v)| self.num(v, &format!("{path}.loss_curve[{i}]")))
                .collect()
        });
        let Some(frames) = self.array_at(s, path, "frames") else {
            return;
        };
        if frames.is_empty() {
            self.err(&format!("{path}.frames"), "no frames");
        }
        if let Some(c) = &curve {
            if c.len() != frames.len() {
                self.err(
                    &format!("{path}.frames"),
                    format!("{} frames but {} loss_curve entries", frames.len(), c.len()),
                );
            }
        }
        let mut first_ids: Option<BTreeSet<String>> = None;
        for (i, f) in frames.iter().enumerate() {
            let fp = format!("{path}.frames[{i}]");
            if let Some(e) = self.uint_at(f, &fp, "epoch") {
                if e != i as u64 {
                    self.err(
                        &format!("{fp}.epoch"),
                        format!("expected epoch {i}, got {e}"),
                    );
                }
            }
            let loss = self.num_at(f, &fp, "loss");
            if let (Some(l), Some(Some(Some(c)))) =
                (loss, curve.as_ref().map(|c| c.get(i).copied()))
            {
                self.close(&format!("{fp}.loss"), l, c, "frame loss");
            }
            let Some(bs) = self.array_at(f, &fp, "bubbles") else {
                continue;
            };
            let mut ids = BTreeSet::new();
            let last = i + 1 == frames.len();
            for (j, b) in bs.iter().enumerate() {
                let bp = format!("{fp}.bubbles[{j}]");
                let class = self.str_at(b, &bp, "class").map(str::to_owned);
                let color = b.get("color").and_then(Value::as_str).map(str::to_owned);
                if let Some((id, x, y)) = self.bubble(b, &bp) {
                    if last {
                        self.final_coords.insert(id.clone(), [x, y]);
                    }
                    ids.insert(id);
                }
                if let Some(c) = class {
                    match self.classes.get(&c) {
                        None => self.err(&format!("{bp}.class"), format!("unknown class {c:?}")),
                        Some(expected) if color.as_deref() != Some(expected.as_str()) => {
                            let expected = expected.clone();
                            self.err(
                                &format!("{bp}.color"),
                                format!("class {c} is drawn in {expected}"),
                            )
                        }
                        _ => {}
                    }
                }
            }
            match &first_ids {
                None => first_ids = Some(ids),
                Some(f0) if *f0 != ids => {
                    self.err(&format!("{fp}.bubbles"), "bubble ids differ from frame 0")
                }
                _ => {}
            }
        }
    }

    fn inferencing(&mut self, s: &Value, path: &str) {
        self.text(s, path);
        self.asset_at(s, path, "query_asset_id");
        let qc = self
            .array_at(s, path, "query_coords")
            .and_then(|q| match q {
                [x, y] => Some([x.as_f64()?, y.as_f64()?]),
                _ => None,
            });
        if qc.is_none() && s.get("query_coords").is_some() {
            self.err(&format!("{path}.query_coords"), "expected [x, y]");
        }
        let qe: Option<Vec<f64>> = self
            .array_at(s, path, "query_embedding")
            .and_then(|q| q.iter().map(Value::as_f64).collect());
        if qe.is_none() && s.get("query_embedding").is_some() {
            self.err(
                &format!("{path}.query_embedding"),
                "expected an array of numbers",
            );
        }
        let radius = self.num_at(s, path, "radius");
        let k = self.uint_at(s, path, "k");
        if k == Some(0) {
            self.err(&format!("{path}.k"), "must be ≥ 1");
        }
        let Some(ns) = self.array_at(s, path, "neighbors") else {
            return;
        };
        if ns.is_empty() {
            self.err(&format!("{path}.neighbors"), "no neighbors");
        }
        if let Some(k) = k {
            if ns.len() as u64 > k {
                self.err(
                    &format!("{path}.neighbors"),
                    format!("{} neighbors exceed k = {k}", ns.len()),
                );
            }
        }
        let mut prev: Option<(f64, String)> = None;
        let mut last_id = None;
        for (i, n) in ns.iter().enumerate() {
            let np = format!("{path}.neighbors[{i}]");
            let id = self.asset_at(n, &np, "id");
            let d = self.num_at(n, &np, "distance");
            let emb: Option<Vec<f64>> = self
                .array_at(n, &np, "embedding")
                .and_then(|e| e.iter().map(Value::as_f64).collect());
            if let (Some(d), Some(e), Some(q)) = (d, &emb, &qe) {
                match euclidean_distance(q, e) {
                    Ok(derived) => self.close(&format!("{np}.distance"), d, derived, "distance"),
                    Err(e) => self.err(&format!("{np}.embedding"), e.to_string()),
                }
            }
            if let (Some(d), Some(id)) = (d, &id) {
                let cur = (d, id.clone());
                if let Some(p) = &prev {
                    if p.0 > cur.0 || (p.0 == cur.0 && p.1 > cur.1) {
                        self.err(&np, "neighbors not sorted by (distance, id)");
                    }
                }
                prev = Some(cur);
            }
            last_id = id;
        }
        if let (Some(r), Some(c), Some(id)) = (radius, qc, last_id) {
            match self.final_coords.get(&id).copied() {
                None => self.err(
                    &format!("{path}.radius"),
                    format!("neighbor {id:?} has no bubble in the last training frame"),
                ),
                Some(p) => {
                    let derived = ((c[0] - p[0]).powi(2) + (c[1] - p[1]).powi(2)).sqrt();
                    self.close(&format!("{path}.radius"), r, derived, "radius");
                }
            }
        }
    }

    fn quiz(&mut self, q: &Value) {
        let Some(items) = self.array(q, "quiz") else {
            return;
        };
        if items.len() != QUIZ_LENGTH {
            self.err(
                "quiz",
                format!("expected {QUIZ_LENGTH} questions, got {}", items.len()),
            );
        }
        for (i, item) in items.iter().enumerate() {
            let path = format!("quiz[{i}]");
            self.str_at(item, &path, "prompt");
            let n = self.array_at(item, &path, "choices").map(|c| {
                for (j, ch) in c.iter().enumerate() {
                    self.string(ch, &format!("{path}.choices[{j}]"));
                }
                c.len()
            });
            if let Some(n) = n {
                if n != QUIZ_CHOICES {
                    self.err(
                        &format!("{path}.choices"),
                        format!("expected {QUIZ_CHOICES} choices, got {n}"),
                    );
                }
            }
            if let Some(a) = self.uint_at(item, &path, "answer_index") {
                if a >= QUIZ_CHOICES as u64 {
                    self.err(&format!("{path}.answer_index"), format!("{a} out of range"));
                }
            }
        }
    }
}

/// Sort key keeping violations in document order even though the training
/// slice is checked first.
fn slice_rank(path: &str) -> usize {
    path.strip_prefix("slices[")
        .and_then(|r| r.split(']').next())
        .and_then(|n| n.parse::<usize>().ok())
        .map_or(
            if path.starts_with("quiz") {
                usize::MAX
            } else {
                0
            },
            |n| n + 1,
        )
}

// ---------------------------------------------------------------------------
// Parity fixtures
// ---------------------------------------------------------------------------

pub const PARITY_CASES: usize = 20;

/// One 2D triplet with the values the UI must reproduce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityCase {
    pub anchor: [f64; 2],
    pub positive: [f64; 2],
    pub negative: [f64; 2],
    pub margin: f64,
    pub d_ap: f64,
    pub d_an: f64,
    pub expected_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityFile {
    pub format_version: u32,
    pub formula: String,
    pub tolerance: f64,
    pub cases: Vec<ParityCase>,
}

fn parity_case(a: [f64; 2], p: [f64; 2], n: [f64; 2], margin: f64) -> Result<ParityCase> {
    Ok(ParityCase {
        anchor: a,
        positive: p,
        negative: n,
        margin,
        d_ap: euclidean_distance(&a, &p)?,
        d_an: euclidean_distance(&a, &n)?,
        expected_loss: triplet_loss_value(&a, &p, &n, Margin::new(margin)?)?,
    })
}

/// Five hand-picked edge cases followed by seeded random triplets in
/// `[−1, 1]²` with margins in `[0, 5]`.
pub fn parity_fixtures(seed: u64) -> ParityFile {
    let build = || -> Result<Vec<ParityCase>> {
        let mut cases = vec![
            // positive on the anchor, negative far: inactive hinge
            parity_case([0.2, -0.3], [0.2, -0.3], [1.0, 1.0], 1.0)?,
            // all three coincide: loss equals the margin
            parity_case([0.5, 0.5], [0.5, 0.5], [0.5, 0.5], 1.0)?,
            // zero margin, correctly ordered
            parity_case([0.0, 0.0], [0.1, 0.0], [0.0, 0.9], 0.0)?,
            // exactly at the kink: 1 − 2 + 1 = 0
            parity_case([0.0, 0.0], [1.0, 0.0], [1.0, 1.0], 1.0)?,
            // maximal margin, wrong order
            parity_case([-1.0, -1.0], [1.0, 1.0], [-0.9, -1.0], 5.0)?,
        ];
        let mut r = rng::seeded(seed);
        let pt =
            |r: &mut rng::SplitMix64| [2.0 * rng::uniform(r) - 1.0, 2.0 * rng::uniform(r) - 1.0];
        while cases.len() < PARITY_CASES {
            let (a, p, n) = (pt(&mut r), pt(&mut r), pt(&mut r));
            let m = 5.0 * rng::uniform(&mut r);
            cases.push(parity_case(a, p, n, m)?);
        }
        Ok(cases)
    };
    ParityFile {
        format_version: FORMAT_VERSION,
        formula: "max(0, |a-p|^2 - |a-n|^2 + margin)".into(),
        tolerance: CONSISTENCY_TOLERANCE,
        cases: build().expect("fixture inputs are valid"),
    }
}
