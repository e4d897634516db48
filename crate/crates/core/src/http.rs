//! Small blocking JSON-over-HTTP client shared by the chat backend and the
//! external image/segmentation service adapters.

use std::time::Duration;

use base64::Engine as _;
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::imaging::{BinaryMask, ImageError, RasterImage};

const MAX_RESPONSE_BYTES: u64 = 256 * 1024 * 1024;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HttpError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("authentication rejected (status {0})")]
    Auth(u16),
    #[error("timed out: {0}")]
    Timeout(String),
    #[error("server returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("protocol: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone)]
pub struct JsonClient {
    agent: ureq::Agent,
    bearer: Option<String>,
}

impl JsonClient {
    pub fn new(timeout: Duration, bearer: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent, bearer }
    }

    pub fn post<B: Serialize, R: DeserializeOwned>(&self, url: &str, body: &B) -> Result<R, HttpError> {
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(token) = &self.bearer {
            req = req.header("Authorization", format!("Bearer {token}"));
        }
        let mut resp = req.send_json(body).map_err(map_ureq)?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .with_config()
            .limit(MAX_RESPONSE_BYTES)
            .read_to_string()
            .map_err(map_ureq)?;
        match status {
            200..=299 => serde_json::from_str(&text).map_err(|e| HttpError::Protocol(e.to_string())),
            401 | 403 => Err(HttpError::Auth(status)),
            _ => Err(HttpError::Status {
                status,
                body: text.chars().take(512).collect(),
            }),
        }
    }
}

fn map_ureq(err: ureq::Error) -> HttpError {
    match err {
        ureq::Error::Timeout(t) => HttpError::Timeout(t.to_string()),
        ureq::Error::Json(e) => HttpError::Protocol(e.to_string()),
        ureq::Error::Protocol(e) => HttpError::Protocol(e.to_string()),
        other => HttpError::Transport(other.to_string()),
    }
}

pub(crate) fn encode_image(image: &RasterImage) -> Result<String, ImageError> {
    Ok(base64::engine::general_purpose::STANDARD.encode(image.encode_png()?))
}

pub(crate) fn decode_image(b64: &str) -> Result<RasterImage, ImageError> {
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(b64)
        .map_err(|e| ImageError::Decode(e.to_string()))?;
    RasterImage::decode(&bytes)
}

pub(crate) fn encode_mask(mask: &BinaryMask) -> Result<String, ImageError> {
    Ok(base64::engine::general_purpose::STANDARD.encode(mask.encode_png()?))
}

pub(crate) fn decode_mask(b64: &str) -> Result<BinaryMask, ImageError> {
    Ok(BinaryMask::from_image(&decode_image(b64)?))
}
