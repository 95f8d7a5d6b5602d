//! JSON bodies of the HTTP prediction protocol.
//!
//! - `POST /v1/classify`: [`ClassifyRequest`] → [`ClassifyResponse`]
//! - `POST /v1/generate`: [`GenerateRequest`] → [`GenerateResponse`]
//! - `GET /v1/health` → [`HealthResponse`]
//!
//! Failures carry an [`ErrorBody`] with a 4xx or 5xx status.

use serde::{Deserialize, Serialize};

pub const CLASSIFY_PATH: &str = "/v1/classify";
pub const GENERATE_PATH: &str = "/v1/generate";
pub const HEALTH_PATH: &str = "/v1/health";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairInput {
    pub segment_a: String,
    pub segment_b: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifyRequest {
    pub task: String,
    pub model: String,
    pub inputs: Vec<PairInput>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifyResponse {
    pub predictions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextInput {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub task: String,
    pub model: String,
    pub inputs: Vec<TextInput>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub generations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}
