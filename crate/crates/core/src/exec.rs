//! The executor catalog: what each leaf function's `executor_id` does to an image.
//!
//! Pixel operations run locally. Object removal and retention go through the
//! [`RemovalPipeline`]; the learned functions (Open Eyes, Image Enhancement)
//! go through an [`ImageService`], which is an identity stub unless an
//! external endpoint is configured.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::http::{self, HttpError, JsonClient};
use crate::imaging::{
    adjust_brightness, apply_filter, recolor_region, scale_region, BinaryMask, Filter, ImageError,
    RasterImage, Shade, ShapeWarp,
};
use crate::llm::LlmBackend;
use crate::removal::{RemovalError, RemovalMode, RemovalPipeline};

/// Lipstick shades, in registry order.
pub const SHADES: [(&str, &str, [u8; 3]); 9] = [
    ("lipstick.pure_red", "Pure Red", [220, 20, 30]),
    ("lipstick.burnt_tomato", "Burnt Tomato", [203, 65, 50]),
    ("lipstick.pure_orange", "Pure Orange", [240, 110, 30]),
    ("lipstick.rose_pink", "Rose Pink", [230, 100, 140]),
    ("lipstick.coral", "Coral", [248, 120, 100]),
    ("lipstick.berry", "Berry", [140, 30, 70]),
    ("lipstick.nude_beige", "Nude Beige", [200, 140, 120]),
    ("lipstick.plum", "Plum", [120, 40, 90]),
    ("lipstick.deep_wine", "Deep Wine", [100, 20, 35]),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServiceKind {
    OpenEyes,
    ImageEnhancement,
}

impl ServiceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ServiceKind::OpenEyes => "open_eyes",
            ServiceKind::ImageEnhancement => "image_enhancement",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Operation {
    Brightness(i32),
    Lipstick(Shade),
    Filter(Filter),
    Shape(ShapeWarp),
    Remove,
    Retain,
    Service(ServiceKind),
}

const FIXED: [(&str, fn() -> Operation); 15] = [
    ("brightness.whiten", || Operation::Brightness(1)),
    ("brightness.darken", || Operation::Brightness(-1)),
    ("filter.grayscale", || Operation::Filter(Filter::Grayscale)),
    ("filter.sepia", || Operation::Filter(Filter::Sepia)),
    ("filter.warm", || Operation::Filter(Filter::Warm)),
    ("filter.cool", || Operation::Filter(Filter::Cool)),
    ("filter.vintage", || Operation::Filter(Filter::Vintage)),
    ("shape.enlarge_eyes", || Operation::Shape(ShapeWarp::ENLARGE_EYES)),
    ("shape.widen_eye_distance", || Operation::Shape(ShapeWarp::WIDEN_EYE_DISTANCE)),
    ("shape.slim_face", || Operation::Shape(ShapeWarp::SLIM_FACE)),
    ("shape.narrow_nose", || Operation::Shape(ShapeWarp::NARROW_NOSE)),
    ("object.remove", || Operation::Remove),
    ("object.retain", || Operation::Retain),
    ("service.open_eyes", || Operation::Service(ServiceKind::OpenEyes)),
    ("service.image_enhancement", || Operation::Service(ServiceKind::ImageEnhancement)),
];

/// Every executor id the built-in catalog can run.
pub fn executor_ids() -> Vec<String> {
    FIXED
        .iter()
        .map(|(id, _)| *id)
        .chain(SHADES.iter().map(|(id, _, _)| *id))
        .map(String::from)
        .collect()
}

pub fn operation(executor_id: &str) -> Option<Operation> {
    if let Some((_, make)) = FIXED.iter().find(|(id, _)| *id == executor_id) {
        return Some(make());
    }
    SHADES
        .iter()
        .find(|(id, _, _)| *id == executor_id)
        .map(|(_, name, rgb)| Operation::Lipstick(Shade::new(*name, *rgb)))
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ServiceError {
    #[error(transparent)]
    Http(#[from] HttpError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("service returned a {got:?} image for a {want:?} input")]
    Shape {
        want: (u32, u32, u8),
        got: (u32, u32, u8),
    },
}

/// Backend for functions that need a learned model.
pub trait ImageService: Send + Sync {
    fn apply(&self, kind: ServiceKind, image: &RasterImage) -> Result<RasterImage, ServiceError>;
}

/// Returns the input unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubImageService;

impl ImageService for StubImageService {
    fn apply(&self, _kind: ServiceKind, image: &RasterImage) -> Result<RasterImage, ServiceError> {
        Ok(image.clone())
    }
}

/// POSTs `{"operation": "...", "image": "<base64 PNG>"}` to `{endpoint}/{operation}`
/// and expects `{"image": "<base64 PNG>"}` of the same shape back.
#[derive(Debug, Clone)]
pub struct HttpImageService {
    endpoint: String,
    client: JsonClient,
}

#[derive(Serialize)]
struct ServiceRequest<'a> {
    operation: &'a str,
    image: String,
}

#[derive(Deserialize)]
struct ServiceResponse {
    image: String,
}

impl HttpImageService {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        Self {
            endpoint: endpoint.into(),
            client: JsonClient::new(timeout, None),
        }
    }
}

impl ImageService for HttpImageService {
    fn apply(&self, kind: ServiceKind, image: &RasterImage) -> Result<RasterImage, ServiceError> {
        let url = format!("{}/{}", self.endpoint.trim_end_matches('/'), kind.as_str());
        let body = ServiceRequest {
            operation: kind.as_str(),
            image: http::encode_image(image)?,
        };
        let resp: ServiceResponse = self.client.post(&url, &body)?;
        let out = http::decode_image(&resp.image)?;
        if out.shape() != image.shape() {
            return Err(ServiceError::Shape {
                want: image.shape(),
                got: out.shape(),
            });
        }
        Ok(out)
    }
}

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("no executor registered under {0:?}")]
    UnknownExecutor(String),
    #[error("function {0:?} has no executor binding")]
    Unbound(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("image service: {0}")]
    Service(#[from] ServiceError),
    #[error("object removal is not configured")]
    RemovalUnavailable,
    #[error(transparent)]
    Removal(#[from] RemovalError),
}

impl ExecError {
    /// Model tokens consumed before the error, if the step made model calls.
    pub fn tokens_spent(&self) -> usize {
        match self {
            ExecError::Removal(e) => e.tokens_spent(),
            _ => 0,
        }
    }
}

/// What the executors may consult besides the image itself.
pub struct ExecutionContext<'a> {
    /// The user's instruction; object removal derives its target from it.
    pub instruction: &'a str,
    /// Region for masked edits (skin, lips, eyes). `None` means the whole image.
    pub region: Option<&'a BinaryMask>,
    /// Stable id used by stub segmentation manifests. Defaults to the image digest.
    pub image_id: Option<&'a str>,
    pub backend: &'a dyn LlmBackend,
    pub removal: Option<&'a RemovalPipeline>,
    pub services: &'a dyn ImageService,
}

impl<'a> ExecutionContext<'a> {
    pub fn new(instruction: &'a str, backend: &'a dyn LlmBackend) -> Self {
        Self {
            instruction,
            region: None,
            image_id: None,
            backend,
            removal: None,
            services: &StubImageService,
        }
    }
}

/// Result of one executor run. `tokens` counts model tokens the step spent.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub image: RasterImage,
    pub tokens: usize,
}

pub fn run_operation(
    op: &Operation,
    image: &RasterImage,
    ctx: &ExecutionContext<'_>,
) -> Result<StepOutput, ExecError> {
    let whole;
    let region = match ctx.region {
        Some(m) => m,
        None => {
            whole = BinaryMask::full(image.width(), image.height());
            &whole
        }
    };
    let local = |image| StepOutput { image, tokens: 0 };
    Ok(match op {
        Operation::Brightness(degree) => local(adjust_brightness(image, ctx.region, *degree)?),
        Operation::Lipstick(shade) => local(recolor_region(image, region, shade)?),
        Operation::Filter(f) => local(apply_filter(image, *f)?),
        Operation::Shape(warp) => local(scale_region(image, region, *warp)?),
        Operation::Service(kind) => local(ctx.services.apply(*kind, image)?),
        Operation::Remove | Operation::Retain => {
            let pipeline = ctx.removal.ok_or(ExecError::RemovalUnavailable)?;
            let mode = if *op == Operation::Remove {
                RemovalMode::Remove
            } else {
                RemovalMode::Retain
            };
            let digest;
            let image_id = match ctx.image_id {
                Some(id) => id,
                None => {
                    digest = image.digest();
                    &digest
                }
            };
            let out = pipeline.run(image, image_id, ctx.instruction, ctx.backend, mode)?;
            StepOutput {
                tokens: out.tokens,
                image: out.image,
            }
        }
    })
}

pub fn run_executor(
    executor_id: &str,
    image: &RasterImage,
    ctx: &ExecutionContext<'_>,
) -> Result<StepOutput, ExecError> {
    let op = operation(executor_id).ok_or_else(|| ExecError::UnknownExecutor(executor_id.to_string()))?;
    run_operation(&op, image, ctx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ScriptFixture, ScriptedBackend};
    use crate::registry::FunctionRegistry;

    #[test]
    fn catalog_covers_bundled_registry() {
        let registry = FunctionRegistry::bundled();
        for (leaf, _) in registry.leaves() {
            let id = leaf.executor_id.as_ref().unwrap();
            assert!(operation(id.as_str()).is_some(), "{id}");
        }
        assert_eq!(executor_ids().len(), 24);
    }

    #[test]
    fn shade_names_match_registry() {
        let registry = FunctionRegistry::bundled();
        for (id, name, _) in SHADES {
            let leaf = registry
                .leaves()
                .find(|(l, _)| l.executor_id.as_ref().map(|e| e.as_str()) == Some(id))
                .unwrap()
                .0;
            assert_eq!(leaf.name, name);
        }
    }

    #[test]
    fn stubs_are_identity_and_removal_needs_pipeline() {
        let backend = ScriptedBackend::new(ScriptFixture::default()).unwrap();
        let ctx = ExecutionContext::new("x", &backend);
        let img = RasterImage::from_fn_rgb(5, 4, |x, y| [x as u8 * 40, y as u8 * 50, 9]);
        let out = run_executor("service.open_eyes", &img, &ctx).unwrap();
        assert_eq!(out.image, img);
        assert!(matches!(
            run_executor("object.remove", &img, &ctx),
            Err(ExecError::RemovalUnavailable)
        ));
        assert!(matches!(
            run_executor("nope", &img, &ctx),
            Err(ExecError::UnknownExecutor(_))
        ));
    }

    #[test]
    fn region_limits_masked_edits() {
        let backend = ScriptedBackend::new(ScriptFixture::default()).unwrap();
        let img = RasterImage::filled_rgb(6, 6, [100, 100, 100]);
        let mask = BinaryMask::rect(6, 6, 1, 1, 2, 2);
        let mut ctx = ExecutionContext::new("x", &backend);
        ctx.region = Some(&mask);
        let out = run_executor("brightness.whiten", &img, &ctx).unwrap().image;
        assert_eq!(out.pixel(1, 1), &[112, 112, 112]);
        assert_eq!(out.pixel(4, 4), &[100, 100, 100]);
    }
}
