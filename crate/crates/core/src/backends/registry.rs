use std::collections::HashSet;
use std::fs;
use std::path::Path;

use super::{wire::CheckpointsResponse, CheckpointSource, EmbeddingCheckpoint};
use crate::error::{Error, Result};

/// Validated, step-ordered set of embedding checkpoints.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointRegistry {
    checkpoints: Vec<EmbeddingCheckpoint>,
}

impl CheckpointRegistry {
    pub fn new(mut checkpoints: Vec<EmbeddingCheckpoint>) -> Result<Self> {
        if checkpoints.is_empty() {
            return Err(Error::Registry("empty registry".into()));
        }
        checkpoints.sort_by(|a, b| {
            a.step
                .cmp(&b.step)
                .then_with(|| a.checkpoint_id.cmp(&b.checkpoint_id))
        });
        let mut steps = HashSet::new();
        let mut ids = HashSet::new();
        for c in &checkpoints {
            if !steps.insert(c.step) {
                return Err(Error::Registry(format!("duplicate step {}", c.step)));
            }
            if !ids.insert(c.checkpoint_id.as_str()) {
                return Err(Error::Registry(format!(
                    "duplicate checkpoint id {:?}",
                    c.checkpoint_id
                )));
            }
            if c.dim == 0 {
                return Err(Error::Registry(format!(
                    "checkpoint {:?} has dim 0",
                    c.checkpoint_id
                )));
            }
        }
        let dim = checkpoints[0].dim;
        if let Some(c) = checkpoints.iter().find(|c| c.dim != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: c.dim,
            });
        }
        if checkpoints[0].step != 0 {
            return Err(Error::Registry("no base checkpoint at step 0".into()));
        }
        Ok(CheckpointRegistry { checkpoints })
    }

    /// Parse a registry file with the `GET /checkpoints` body layout.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let body: CheckpointsResponse = serde_json::from_str(&raw)?;
        Self::new(body.checkpoints)
    }

    pub fn checkpoints(&self) -> &[EmbeddingCheckpoint] {
        &self.checkpoints
    }

    pub fn base(&self) -> &EmbeddingCheckpoint {
        &self.checkpoints[0]
    }

    pub fn dim(&self) -> usize {
        self.checkpoints[0].dim
    }

    pub fn by_step(&self, step: u64) -> Option<&EmbeddingCheckpoint> {
        self.checkpoints.iter().find(|c| c.step == step)
    }

    pub fn by_id(&self, id: &str) -> Option<&EmbeddingCheckpoint> {
        self.checkpoints.iter().find(|c| c.checkpoint_id == id)
    }

    /// Fails unless `checkpoint` is registered with the same step and dim.
    pub fn check(&self, checkpoint: &EmbeddingCheckpoint) -> Result<()> {
        match self.by_id(&checkpoint.checkpoint_id) {
            Some(c) if c == checkpoint => Ok(()),
            Some(c) if c.dim != checkpoint.dim => Err(Error::DimensionMismatch {
                expected: c.dim,
                actual: checkpoint.dim,
            }),
            _ => Err(Error::UnknownCheckpoint(checkpoint.checkpoint_id.clone())),
        }
    }
}

/// Checkpoints from any source, sorted by step.
pub fn list_checkpoints(source: &dyn CheckpointSource) -> Result<Vec<EmbeddingCheckpoint>> {
    Ok(CheckpointRegistry::new(source.list_checkpoints()?)?.checkpoints)
}
