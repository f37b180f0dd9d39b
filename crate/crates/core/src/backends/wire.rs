//! JSON bodies of the model-server protocol.
//!
//! | route                | request               | response               |
//! |----------------------|-----------------------|------------------------|
//! | `POST /embed`        | [`EmbedRequest`]      | [`EmbedResponse`]      |
//! | `POST /generate`     | [`GenerateRequest`]   | [`GenerateResponse`]   |
//! | `POST /cross_encode` | [`CrossEncodeRequest`]| [`CrossEncodeResponse`]|
//! | `GET /checkpoints`   | -                     | [`CheckpointsResponse`]|

use serde::{Deserialize, Serialize};

use super::EmbeddingCheckpoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
    pub checkpoint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub dim: usize,
    pub vectors: Vec<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_new_tokens: usize,
    pub repetition_penalty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossEncodeRequest {
    pub pairs: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossEncodeResponse {
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointsResponse {
    pub checkpoints: Vec<EmbeddingCheckpoint>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn bodies_match_protocol_field_names() {
        let req = CrossEncodeRequest {
            pairs: vec![("q".into(), "p".into())],
        };
        assert_eq!(
            serde_json::to_value(&req).unwrap(),
            json!({"pairs": [["q", "p"]]})
        );

        let ck: CheckpointsResponse = serde_json::from_value(json!({
            "checkpoints": [{"id": "base", "step": 0, "dim": 384}]
        }))
        .unwrap();
        assert_eq!(ck.checkpoints[0].checkpoint_id, "base");

        let g = GenerateRequest {
            prompt: "p".into(),
            temperature: 0.0,
            max_new_tokens: 500,
            repetition_penalty: 1.1,
        };
        assert_eq!(
            serde_json::to_value(&g).unwrap(),
            json!({"prompt": "p", "temperature": 0.0, "max_new_tokens": 500, "repetition_penalty": 1.1})
        );
    }
}
