//! Blocking HTTP client for the model-server protocol in [`super::wire`].

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::wire::{
    CheckpointsResponse, CrossEncodeRequest, CrossEncodeResponse, EmbedRequest, EmbedResponse,
    GenerateRequest, GenerateResponse,
};
use super::{
    CheckpointSource, CrossEncoderBackend, EmbeddingBackend, EmbeddingCheckpoint,
    GenerationBackend, GenerationParams, Prompt,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct HttpBackend {
    base_url: String,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(endpoint: &str, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpBackend {
            base_url: endpoint.trim_end_matches('/').to_string(),
            agent,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.base_url
    }

    fn post<B: Serialize, R: DeserializeOwned>(&self, route: &str, body: &B) -> Result<R> {
        let url = format!("{}{route}", self.base_url);
        self.agent
            .post(&url)
            .send_json(body)
            .and_then(|mut r| r.body_mut().read_json::<R>())
            .map_err(|e| Error::Backend(format!("POST {url}: {e}")))
    }

    fn get<R: DeserializeOwned>(&self, route: &str) -> Result<R> {
        let url = format!("{}{route}", self.base_url);
        self.agent
            .get(&url)
            .call()
            .and_then(|mut r| r.body_mut().read_json::<R>())
            .map_err(|e| Error::Backend(format!("GET {url}: {e}")))
    }
}

impl EmbeddingBackend for HttpBackend {
    fn embed(&self, texts: &[String], checkpoint: &EmbeddingCheckpoint) -> Result<Vec<Vec<f32>>> {
        let resp: EmbedResponse = self.post(
            "/embed",
            &EmbedRequest {
                texts: texts.to_vec(),
                checkpoint: checkpoint.checkpoint_id.clone(),
            },
        )?;
        if resp.dim != checkpoint.dim {
            return Err(Error::DimensionMismatch {
                expected: checkpoint.dim,
                actual: resp.dim,
            });
        }
        Ok(resp.vectors)
    }
}

impl GenerationBackend for HttpBackend {
    fn generate(&self, prompt: &Prompt, params: &GenerationParams) -> Result<String> {
        let resp: GenerateResponse = self.post(
            "/generate",
            &GenerateRequest {
                prompt: prompt.to_plain_text(),
                temperature: params.temperature,
                max_new_tokens: params.max_new_tokens,
                repetition_penalty: params.repetition_penalty,
            },
        )?;
        Ok(resp.text)
    }
}

impl CrossEncoderBackend for HttpBackend {
    fn cross_encode(&self, pairs: &[(String, String)]) -> Result<Vec<f64>> {
        let resp: CrossEncodeResponse = self.post(
            "/cross_encode",
            &CrossEncodeRequest {
                pairs: pairs.to_vec(),
            },
        )?;
        Ok(resp.scores)
    }
}

impl CheckpointSource for HttpBackend {
    fn list_checkpoints(&self) -> Result<Vec<EmbeddingCheckpoint>> {
        let resp: CheckpointsResponse = self.get("/checkpoints")?;
        Ok(resp.checkpoints)
    }
}
