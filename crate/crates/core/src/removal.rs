//! Two-stage object removal and retention.
//!
//! 1. A dedicated model call turns the instruction into a category and a
//!    description of the target object.
//! 2. A description-based segmenter yields one coarse mask; a category-based
//!    segmenter yields instance candidates. The candidate overlapping the
//!    coarse mask most is the refined mask.
//! 3. Removal dilates the refined mask and inpaints it. Retention keeps only
//!    the refined region.
//!
//! Segmenters and inpainters are adapters: an HTTP service, or a stub backed
//! by a manifest of mask files for deterministic runs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dispatch::{exchange, ExchangeError, ReplyError, DEFAULT_RETRIES};
use crate::http::{self, HttpError, JsonClient};
use crate::imaging::{
    dilate_mask, iou, naive_inpaint, overlap_area, retain_object, BinaryMask, ImageError, RasterImage,
};
use crate::llm::{GatewayError, LlmBackend};
use crate::parser::{parse_object_descriptors, ObjectDescriptor};
use crate::prompt::{Language, PromptEngine};

pub const DEFAULT_DILATION_RADIUS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalStage {
    Descriptor,
    Segmentation,
    Refinement,
    Inpainting,
    Compositing,
}

impl std::fmt::Display for RemovalStage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RemovalStage::Descriptor => "descriptor",
            RemovalStage::Segmentation => "segmentation",
            RemovalStage::Refinement => "refinement",
            RemovalStage::Inpainting => "inpainting",
            RemovalStage::Compositing => "compositing",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdapterError {
    #[error(transparent)]
    Http(#[from] HttpError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("stub manifest: {0}")]
    Manifest(String),
    #[error("no stub masks for image {0:?}")]
    UnknownImage(String),
    #[error("adapter returned no mask")]
    NoMask,
    #[error("adapter config: {0}")]
    Config(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RefineError {
    #[error("candidate list is empty")]
    EmptyCandidates,
    #[error("no candidate overlaps the coarse mask")]
    NoOverlap,
    #[error("mask dimensions differ")]
    DimensionMismatch,
}

#[derive(Debug, Error)]
pub enum RemovalError {
    #[error("descriptor: {cause}")]
    Descriptor { cause: ReplyError, tokens_spent: usize },
    #[error("descriptor: backend error: {source}")]
    Backend { source: GatewayError, tokens_spent: usize },
    #[error("empty instruction")]
    EmptyInstruction,
    #[error("{stage}: {source}")]
    Adapter {
        stage: RemovalStage,
        source: AdapterError,
        tokens_spent: usize,
    },
    #[error("refinement: {0}")]
    Refine(RefineError),
    #[error("{stage}: {source}")]
    Image {
        stage: RemovalStage,
        source: ImageError,
        tokens_spent: usize,
    },
}

impl RemovalError {
    pub fn stage(&self) -> RemovalStage {
        match self {
            RemovalError::Descriptor { .. } | RemovalError::Backend { .. } | RemovalError::EmptyInstruction => {
                RemovalStage::Descriptor
            }
            RemovalError::Adapter { stage, .. } | RemovalError::Image { stage, .. } => *stage,
            RemovalError::Refine(_) => RemovalStage::Refinement,
        }
    }

    pub fn tokens_spent(&self) -> usize {
        match self {
            RemovalError::Descriptor { tokens_spent, .. }
            | RemovalError::Backend { tokens_spent, .. }
            | RemovalError::Adapter { tokens_spent, .. }
            | RemovalError::Image { tokens_spent, .. } => *tokens_spent,
            RemovalError::EmptyInstruction | RemovalError::Refine(_) => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledMask {
    pub label: String,
    pub mask: BinaryMask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapMetric {
    /// Raw intersection area in pixels.
    #[default]
    Intersection,
    Iou,
}

/// Index of the candidate overlapping `coarse` most. Ties go to the lowest index.
pub fn refine_mask_index(
    coarse: &BinaryMask,
    candidates: &[LabeledMask],
    metric: OverlapMetric,
) -> Result<usize, RefineError> {
    if candidates.is_empty() {
        return Err(RefineError::EmptyCandidates);
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let score = match metric {
            OverlapMetric::Intersection => overlap_area(&c.mask, coarse).map(|a| a as f64),
            OverlapMetric::Iou => iou(&c.mask, coarse),
        }
        .map_err(|_| RefineError::DimensionMismatch)?;
        if score > 0.0 && best.is_none_or(|(_, s)| score > s) {
            best = Some((i, score));
        }
    }
    best.map(|(i, _)| i).ok_or(RefineError::NoOverlap)
}

/// The candidate with the largest intersection with `coarse`.
pub fn refine_mask<'a>(coarse: &BinaryMask, candidates: &'a [LabeledMask]) -> Result<&'a LabeledMask, RefineError> {
    refine_mask_index(coarse, candidates, OverlapMetric::Intersection).map(|i| &candidates[i])
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SegmentQuery<'a> {
    Category(&'a str),
    Description(&'a str),
}

pub trait Segmenter: Send + Sync {
    fn segment(
        &self,
        image: &RasterImage,
        image_id: &str,
        query: &SegmentQuery<'_>,
    ) -> Result<Vec<LabeledMask>, AdapterError>;
}

pub trait Inpainter: Send + Sync {
    fn inpaint(&self, image: &RasterImage, mask: &BinaryMask) -> Result<RasterImage, AdapterError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NaiveInpainter;

impl Inpainter for NaiveInpainter {
    fn inpaint(&self, image: &RasterImage, mask: &BinaryMask) -> Result<RasterImage, AdapterError> {
        Ok(naive_inpaint(image, mask)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct StubMaskRef {
    pub label: String,
    pub mask: PathBuf,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq, Eq)]
pub struct StubImageEntry {
    /// Coarse mask returned for any description query.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<PathBuf>,
    /// Instance masks returned for any category query.
    #[serde(default)]
    pub category: Vec<StubMaskRef>,
}

/// Stub segmentation data keyed by image id. Mask paths are relative to the
/// manifest file.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq, Eq)]
pub struct StubManifest {
    pub images: BTreeMap<String, StubImageEntry>,
}

/// Answers segmentation queries from pre-computed masks.
#[derive(Debug, Clone, Default)]
pub struct StubSegmenter {
    images: BTreeMap<String, (Option<BinaryMask>, Vec<LabeledMask>)>,
}

impl StubSegmenter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, image_id: impl Into<String>, coarse: Option<BinaryMask>, candidates: Vec<LabeledMask>) {
        self.images.insert(image_id.into(), (coarse, candidates));
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AdapterError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| AdapterError::Manifest(format!("{}: {e}", path.display())))?;
        let manifest: StubManifest = serde_json::from_str(&text).map_err(|e| AdapterError::Manifest(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut out = Self::new();
        for (id, entry) in manifest.images {
            let coarse = entry.description.map(|p| BinaryMask::load(base.join(p))).transpose()?;
            let candidates = entry
                .category
                .into_iter()
                .map(|r| {
                    Ok(LabeledMask {
                        label: r.label,
                        mask: BinaryMask::load(base.join(r.mask))?,
                    })
                })
                .collect::<Result<_, AdapterError>>()?;
            out.insert(id, coarse, candidates);
        }
        Ok(out)
    }
}

impl Segmenter for StubSegmenter {
    fn segment(
        &self,
        _image: &RasterImage,
        image_id: &str,
        query: &SegmentQuery<'_>,
    ) -> Result<Vec<LabeledMask>, AdapterError> {
        let (coarse, candidates) = self
            .images
            .get(image_id)
            .ok_or_else(|| AdapterError::UnknownImage(image_id.to_string()))?;
        Ok(match query {
            SegmentQuery::Description(d) => vec![LabeledMask {
                label: d.to_string(),
                mask: coarse.clone().ok_or(AdapterError::NoMask)?,
            }],
            SegmentQuery::Category(_) => candidates.clone(),
        })
    }
}

#[derive(Serialize)]
struct SegmentRequest<'a> {
    image: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    category: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    description: Option<&'a str>,
}

#[derive(Deserialize)]
struct WireMask {
    #[serde(default)]
    label: String,
    mask: String,
}

#[derive(Deserialize)]
struct SegmentResponse {
    masks: Vec<WireMask>,
}

/// POSTs `{"image", "category"|"description"}` and expects
/// `{"masks": [{"label", "mask"}]}` with base64 PNG bitmaps.
#[derive(Debug, Clone)]
pub struct HttpSegmenter {
    endpoint: String,
    client: JsonClient,
}

impl HttpSegmenter {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        Self {
            endpoint: endpoint.into(),
            client: JsonClient::new(timeout, None),
        }
    }
}

impl Segmenter for HttpSegmenter {
    fn segment(
        &self,
        image: &RasterImage,
        _image_id: &str,
        query: &SegmentQuery<'_>,
    ) -> Result<Vec<LabeledMask>, AdapterError> {
        let (category, description) = match query {
            SegmentQuery::Category(c) => (Some(*c), None),
            SegmentQuery::Description(d) => (None, Some(*d)),
        };
        let body = SegmentRequest {
            image: http::encode_image(image)?,
            category,
            description,
        };
        let resp: SegmentResponse = self.client.post(&self.endpoint, &body)?;
        resp.masks
            .into_iter()
            .map(|m| {
                let mask = http::decode_mask(&m.mask)?;
                if mask.dimensions() != image.dimensions() {
                    return Err(ImageError::MaskDimensionMismatch {
                        mask_w: mask.width(),
                        mask_h: mask.height(),
                        image_w: image.width(),
                        image_h: image.height(),
                    }
                    .into());
                }
                Ok(LabeledMask { label: m.label, mask })
            })
            .collect()
    }
}

#[derive(Serialize)]
struct InpaintRequest {
    image: String,
    mask: String,
}

#[derive(Deserialize)]
struct InpaintResponse {
    image: String,
}

/// POSTs `{"image", "mask"}` and expects `{"image"}`.
#[derive(Debug, Clone)]
pub struct HttpInpainter {
    endpoint: String,
    client: JsonClient,
}

impl HttpInpainter {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        Self {
            endpoint: endpoint.into(),
            client: JsonClient::new(timeout, None),
        }
    }
}

impl Inpainter for HttpInpainter {
    fn inpaint(&self, image: &RasterImage, mask: &BinaryMask) -> Result<RasterImage, AdapterError> {
        let body = InpaintRequest {
            image: http::encode_image(image)?,
            mask: http::encode_mask(mask)?,
        };
        let resp: InpaintResponse = self.client.post(&self.endpoint, &body)?;
        let out = http::decode_image(&resp.image)?;
        if out.shape() != image.shape() {
            return Err(ImageError::ShapeMismatch(image.shape(), out.shape()).into());
        }
        Ok(out)
    }
}

/// Where a segmenter gets its masks. Exactly one source must be set.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentationAdapterConfig {
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub stub_manifest: Option<PathBuf>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    60
}

impl SegmentationAdapterConfig {
    pub fn endpoint(url: impl Into<String>) -> Self {
        Self {
            endpoint: Some(url.into()),
            stub_manifest: None,
            timeout_secs: default_timeout_secs(),
        }
    }

    pub fn stub(path: impl Into<PathBuf>) -> Self {
        Self {
            endpoint: None,
            stub_manifest: Some(path.into()),
            timeout_secs: default_timeout_secs(),
        }
    }

    pub fn build(&self) -> Result<Box<dyn Segmenter>, AdapterError> {
        match (&self.endpoint, &self.stub_manifest) {
            (Some(url), None) => Ok(Box::new(HttpSegmenter::new(
                url.clone(),
                Duration::from_secs(self.timeout_secs.max(1)),
            ))),
            (None, Some(path)) => Ok(Box::new(StubSegmenter::load(path)?)),
            _ => Err(AdapterError::Config(
                "set exactly one of endpoint and stub_manifest".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalMode {
    Remove,
    Retain,
}

#[derive(Debug, Clone)]
pub struct RemovalOutcome {
    pub image: RasterImage,
    pub descriptor: ObjectDescriptor,
    pub coarse: BinaryMask,
    /// Mask the final step operated on: the dilated refined mask for removal,
    /// the undilated one for retention.
    pub applied_mask: BinaryMask,
    /// Label of the chosen candidate; `None` when refinement fell back to the coarse mask.
    pub refined_label: Option<String>,
    pub tokens: usize,
}

impl RemovalOutcome {
    pub fn degraded(&self) -> bool {
        self.refined_label.is_none()
    }
}

pub struct RemovalPipeline {
    description: Box<dyn Segmenter>,
    category: Box<dyn Segmenter>,
    inpainter: Box<dyn Inpainter>,
    pub dilation_radius: u32,
    pub metric: OverlapMetric,
    pub language: Language,
    prompts: PromptEngine,
    model_id: String,
}

impl RemovalPipeline {
    pub fn new(description: Box<dyn Segmenter>, category: Box<dyn Segmenter>, inpainter: Box<dyn Inpainter>) -> Self {
        Self {
            description,
            category,
            inpainter,
            dilation_radius: DEFAULT_DILATION_RADIUS,
            metric: OverlapMetric::default(),
            language: Language::En,
            prompts: PromptEngine::bundled(),
            model_id: String::new(),
        }
    }

    /// Both segmenters from one stub manifest, naive inpainting.
    pub fn stub(manifest: impl AsRef<Path>) -> Result<Self, AdapterError> {
        let seg = StubSegmenter::load(manifest)?;
        Ok(Self::new(Box::new(seg.clone()), Box::new(seg), Box::new(NaiveInpainter)))
    }

    pub fn with_prompts(mut self, prompts: PromptEngine) -> Self {
        self.prompts = prompts;
        self
    }

    pub fn with_model_id(mut self, model_id: impl Into<String>) -> Self {
        self.model_id = model_id.into();
        self
    }

    /// One descriptor call, re-requested once on a malformed reply.
    pub fn extract_descriptors(
        &self,
        instruction: &str,
        backend: &dyn LlmBackend,
    ) -> Result<(ObjectDescriptor, usize), RemovalError> {
        if instruction.trim().is_empty() {
            return Err(RemovalError::EmptyInstruction);
        }
        let system = self.prompts.render_descriptor_prompt(self.language);
        let ex = exchange(backend, &system, &[], instruction, &self.model_id, DEFAULT_RETRIES, |text| {
            parse_object_descriptors(text).map_err(ReplyError::from)
        });
        match ex.result {
            Ok(d) => Ok((d, ex.tokens)),
            Err(ExchangeError::Reply(cause)) => Err(RemovalError::Descriptor {
                cause,
                tokens_spent: ex.tokens,
            }),
            Err(ExchangeError::Backend(source)) => Err(RemovalError::Backend {
                source,
                tokens_spent: ex.tokens,
            }),
        }
    }

    pub fn run(
        &self,
        image: &RasterImage,
        image_id: &str,
        instruction: &str,
        backend: &dyn LlmBackend,
        mode: RemovalMode,
    ) -> Result<RemovalOutcome, RemovalError> {
        let (descriptor, tokens) = self.extract_descriptors(instruction, backend)?;
        let adapter = |stage| {
            move |source: AdapterError| RemovalError::Adapter {
                stage,
                source,
                tokens_spent: tokens,
            }
        };
        let coarse = self
            .description
            .segment(image, image_id, &SegmentQuery::Description(&descriptor.description))
            .map_err(adapter(RemovalStage::Segmentation))?
            .into_iter()
            .next()
            .ok_or(AdapterError::NoMask)
            .map_err(adapter(RemovalStage::Segmentation))?
            .mask;
        let candidates = self
            .category
            .segment(image, image_id, &SegmentQuery::Category(&descriptor.category))
            .map_err(adapter(RemovalStage::Segmentation))?;
        let image_err = |stage| {
            move |source: ImageError| RemovalError::Image {
                stage,
                source,
                tokens_spent: tokens,
            }
        };
        image.check_mask(&coarse).map_err(image_err(RemovalStage::Segmentation))?;

        let (refined, refined_label) = match refine_mask_index(&coarse, &candidates, self.metric) {
            Ok(i) => (candidates[i].mask.clone(), Some(candidates[i].label.clone())),
            Err(e @ (RefineError::EmptyCandidates | RefineError::NoOverlap)) => {
                log::warn!("mask refinement degraded to the coarse mask: {e}");
                (coarse.clone(), None)
            }
            Err(e) => return Err(RemovalError::Refine(e)),
        };

        let (out, applied_mask) = match mode {
            RemovalMode::Remove => {
                let dilated = dilate_mask(&refined, self.dilation_radius);
                let filled = self
                    .inpainter
                    .inpaint(image, &dilated)
                    .map_err(adapter(RemovalStage::Inpainting))?;
                // Only the hole may change, whatever the inpainter did elsewhere.
                let out = composite(image, &filled, &dilated).map_err(image_err(RemovalStage::Compositing))?;
                (out, dilated)
            }
            RemovalMode::Retain => (
                retain_object(image, &refined).map_err(image_err(RemovalStage::Compositing))?,
                refined,
            ),
        };
        Ok(RemovalOutcome {
            image: out,
            descriptor,
            coarse,
            applied_mask,
            refined_label,
            tokens,
        })
    }
}

/// `fill` inside `mask`, `base` everywhere else.
fn composite(base: &RasterImage, fill: &RasterImage, mask: &BinaryMask) -> Result<RasterImage, ImageError> {
    if base.shape() != fill.shape() {
        return Err(ImageError::ShapeMismatch(base.shape(), fill.shape()));
    }
    base.check_mask(mask)?;
    let (w, h) = base.dimensions();
    let mut out = base.clone();
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                out.pixel_mut(x, y).copy_from_slice(fill.pixel(x, y));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::psnr;
    use crate::llm::{Matcher, ScriptEntry, ScriptFixture, ScriptedBackend};

    fn lm(label: &str, mask: BinaryMask) -> LabeledMask {
        LabeledMask {
            label: label.into(),
            mask,
        }
    }

    fn descriptor_backend(response: &str) -> ScriptedBackend {
        ScriptedBackend::new(ScriptFixture {
            strict: false,
            entries: vec![ScriptEntry::new(Matcher::Regex(".".into()), response)],
        })
        .unwrap()
    }

    fn square_scene() -> (RasterImage, RasterImage, BinaryMask) {
        let truth = RasterImage::filled_rgb(64, 64, [128, 128, 128]);
        let square = BinaryMask::rect(64, 64, 20, 20, 10, 10);
        let mut src = truth.clone();
        for y in 20..30 {
            for x in 20..30 {
                src.pixel_mut(x, y).copy_from_slice(&[230, 20, 20]);
            }
        }
        (src, truth, square)
    }

    fn stub_pipeline(coarse: BinaryMask, candidates: Vec<LabeledMask>) -> RemovalPipeline {
        let mut seg = StubSegmenter::new();
        seg.insert("scene", Some(coarse), candidates);
        RemovalPipeline::new(Box::new(seg.clone()), Box::new(seg), Box::new(NaiveInpainter))
    }

    #[test]
    fn refine_prefers_first_maximum() {
        let coarse = BinaryMask::rect(10, 10, 0, 0, 10, 1);
        let c = vec![
            lm("a", BinaryMask::rect(10, 10, 0, 0, 5, 1)),
            lm("b", BinaryMask::rect(10, 10, 0, 0, 9, 1)),
            lm("c", BinaryMask::rect(10, 10, 1, 0, 9, 1)),
        ];
        assert_eq!(refine_mask(&coarse, &c).unwrap().label, "b");
        assert_eq!(refine_mask(&c[2].mask, &c).unwrap().label, "c");
        assert_eq!(refine_mask(&coarse, &[]), Err(RefineError::EmptyCandidates));
        let far = vec![lm("z", BinaryMask::rect(10, 10, 0, 5, 2, 2))];
        assert_eq!(refine_mask(&coarse, &far), Err(RefineError::NoOverlap));
    }

    #[test]
    fn removes_red_square_exactly() {
        let (src, truth, square) = square_scene();
        let blob = BinaryMask::rect(64, 64, 50, 50, 6, 6);
        let slop = dilate_mask(&square, 2);
        let p = stub_pipeline(slop, vec![lm("blob", blob), lm("square", square.clone())]);
        let b = descriptor_backend("Category: square\nDescription: the red square");
        let out = p.run(&src, "scene", "remove the red square", &b, RemovalMode::Remove).unwrap();
        assert_eq!(out.refined_label.as_deref(), Some("square"));
        assert_eq!(out.image, truth);
        assert_eq!(psnr(&out.image, &truth).unwrap(), 99.0);
        assert_eq!(out.applied_mask, dilate_mask(&square, DEFAULT_DILATION_RADIUS));
        assert!(out.tokens > 0);
    }

    #[test]
    fn retain_keeps_only_square() {
        let (src, _, square) = square_scene();
        let p = stub_pipeline(square.clone(), vec![lm("square", square.clone())]);
        let b = descriptor_backend("Category: square\nDescription: the red square");
        let out = p.run(&src, "scene", "keep the red square", &b, RemovalMode::Retain).unwrap();
        for y in 0..64 {
            for x in 0..64 {
                let want: &[u8] = if square.get(x, y) { &[230, 20, 20] } else { &[255, 255, 255] };
                assert_eq!(out.image.pixel(x, y), want);
            }
        }
    }

    #[test]
    fn no_overlap_falls_back_to_coarse() {
        let (src, _, square) = square_scene();
        let p = stub_pipeline(square.clone(), vec![lm("far", BinaryMask::rect(64, 64, 0, 0, 3, 3))]);
        let b = descriptor_backend("Category: square\nDescription: the red square");
        let out = p.run(&src, "scene", "keep the square", &b, RemovalMode::Retain).unwrap();
        assert!(out.degraded());
        assert_eq!(out.applied_mask, square);
    }

    #[test]
    fn descriptor_errors() {
        let p = stub_pipeline(BinaryMask::empty(2, 2), vec![]);
        let b = descriptor_backend("Category: dog\nDescription: the brown dog on the left");
        let (d, _) = p.extract_descriptors("remove the brown dog on the left", &b).unwrap();
        assert_eq!((d.category.as_str(), d.description.as_str()), ("dog", "the brown dog on the left"));

        let b = descriptor_backend("Category: \nDescription: it");
        let err = p.extract_descriptors("remove it", &b).unwrap_err();
        assert!(matches!(err, RemovalError::Descriptor { .. }));
        assert_eq!(b.request_count(), 2);
        assert!(matches!(p.extract_descriptors("  ", &b), Err(RemovalError::EmptyInstruction)));
    }

    #[test]
    fn unreachable_adapter_is_a_segmentation_error() {
        let (src, _, _) = square_scene();
        let seg = HttpSegmenter::new("http://127.0.0.1:9/segment", Duration::from_millis(500));
        let p = RemovalPipeline::new(Box::new(seg.clone()), Box::new(seg), Box::new(NaiveInpainter));
        let b = descriptor_backend("Category: square\nDescription: the red square");
        let err = p.run(&src, "scene", "remove the red square", &b, RemovalMode::Remove).unwrap_err();
        assert_eq!(err.stage(), RemovalStage::Segmentation);
        assert!(err.tokens_spent() > 0);
    }

    #[test]
    fn config_requires_one_source() {
        assert!(SegmentationAdapterConfig::default().build().is_err());
        let both = SegmentationAdapterConfig {
            endpoint: Some("http://x".into()),
            stub_manifest: Some("m.json".into()),
            timeout_secs: 1,
        };
        assert!(both.build().is_err());
        assert!(SegmentationAdapterConfig::endpoint("http://x").build().is_ok());
    }

    #[test]
    fn stub_manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (_, _, square) = square_scene();
        square.save_png(dir.path().join("coarse.png")).unwrap();
        square.save_png(dir.path().join("sq.png")).unwrap();
        let manifest = StubManifest {
            images: BTreeMap::from([(
                "scene".to_string(),
                StubImageEntry {
                    description: Some("coarse.png".into()),
                    category: vec![StubMaskRef {
                        label: "square".into(),
                        mask: "sq.png".into(),
                    }],
                },
            )]),
        };
        let path = dir.path().join("manifest.json");
        std::fs::write(&path, serde_json::to_string(&manifest).unwrap()).unwrap();
        let seg = StubSegmenter::load(&path).unwrap();
        let img = RasterImage::filled_rgb(64, 64, [0, 0, 0]);
        let got = seg.segment(&img, "scene", &SegmentQuery::Category("square")).unwrap();
        assert_eq!(got[0].mask, square);
        assert!(matches!(
            seg.segment(&img, "other", &SegmentQuery::Category("x")),
            Err(AdapterError::UnknownImage(_))
        ));
    }
}
