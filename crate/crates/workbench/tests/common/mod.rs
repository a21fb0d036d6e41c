#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use themeloom_core::{fixtures, BinaryMatrix, Dims};
use themeloom_gateway::transport::{HttpRequest, HttpResponse, Transport};
use themeloom_gateway::{Gateway, MockRevision, ProviderConfig, RetryPolicy};
use themeloom_workbench::workflow::project_gateway;
use themeloom_workbench::Project;

pub const FIXTURE: Dims = Dims { statements: 17, themes: 11 };

/// Fixture corpus and codebook (version 1, active).
pub fn fixture_project(root: &Path) -> Project {
    let mut p = Project::init(root, "fixture").unwrap();
    p.set_corpus(fixtures::corpus()).unwrap();
    p.add_codebook(fixtures::codebook()).unwrap();
    p
}

pub fn mock(project: &Project, seed: u64) -> Gateway {
    project_gateway(project, ProviderConfig::mock(seed)).unwrap()
}

pub fn reviser(project: &Project, seed: u64, revision: MockRevision) -> Gateway {
    let mut c = ProviderConfig::mock(seed);
    c.mock.revision = revision;
    project_gateway(project, c).unwrap()
}

/// Always answers with `status` and `body`.
pub struct Fixed {
    pub status: u16,
    pub body: String,
}

impl Transport for Fixed {
    fn send(&self, _: &HttpRequest) -> Result<HttpResponse, String> {
        Ok(HttpResponse { status: self.status, retry_after_secs: None, body: self.body.clone() })
    }
}

/// An OpenAI-style gateway whose every request gets `status` / `body`.
pub fn scripted_openai(project: &Project, status: u16, body: &str) -> Gateway {
    let mut c = ProviderConfig::openai("gpt-test");
    c.retry = RetryPolicy::none();
    project_gateway(project, c)
        .unwrap()
        .with_credentials(|_| Some("sk-test".into()))
        .with_transport(Arc::new(Fixed { status, body: body.to_string() }))
}

pub fn openai_body(text: &str) -> String {
    serde_json::json!({"model": "gpt-test-0601", "choices": [{"message": {"content": text}}]}).to_string()
}

pub fn random_binary(rng: &mut ChaCha8Rng, name: &str, dims: Dims) -> BinaryMatrix {
    let bits = (0..dims.cells()).map(|_| rng.random_bool(0.3)).collect();
    BinaryMatrix::new(name, dims, bits).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
