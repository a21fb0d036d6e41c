//! Provider selection shared by CLI flags and API request bodies.

use clap::Args;
use serde::Deserialize;
use themeloom_gateway::{MockRevision, MockThemes, ProviderConfig, ProviderKind};

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default)]
pub struct ProviderArgs {
    /// mock, openai_compatible, anthropic_compatible or local_http
    #[arg(long, default_value = "mock")]
    pub provider: String,
    #[arg(long)]
    pub model: Option<String>,
    /// Mock provider seed
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub base_url: Option<String>,
    /// Environment variable holding the API key
    #[arg(long)]
    pub credential_env: Option<String>,
    #[arg(long)]
    pub max_in_flight: Option<usize>,
    /// Mock revision: add this to every prior score instead of echoing
    #[arg(long, allow_negative_numbers = true)]
    pub mock_shift: Option<i16>,
    /// Mock revision: leave shifted scores without justifications
    #[arg(long)]
    pub mock_unjustified: bool,
    /// Mock theme generation: answer in prose instead of a list
    #[arg(long)]
    pub mock_prose: bool,
}

impl ProviderArgs {
    pub fn mock(seed: u64) -> Self {
        Self { provider: "mock".into(), seed: Some(seed), ..Self::default() }
    }

    pub fn to_config(&self) -> Result<ProviderConfig, String> {
        let name = self.provider.trim();
        let kind = if name.is_empty() {
            ProviderKind::Mock
        } else {
            ProviderKind::parse(name).ok_or_else(|| {
                let known: Vec<_> = ProviderKind::ALL.iter().map(|k| k.as_str()).collect();
                format!("unknown provider {name:?}; expected one of {}", known.join(", "))
            })?
        };
        let model = self.model.as_deref();
        let need_model = || model.ok_or_else(|| format!("--model is required for the {kind} provider"));
        let mut c = match kind {
            ProviderKind::Mock => ProviderConfig::mock(self.seed.unwrap_or(0)),
            ProviderKind::OpenaiCompatible => ProviderConfig::openai(need_model()?),
            ProviderKind::AnthropicCompatible => ProviderConfig::anthropic(need_model()?),
            ProviderKind::LocalHttp => {
                let base = self.base_url.as_deref().ok_or("--base-url is required for the local_http provider")?;
                ProviderConfig::local(base, need_model()?)
            }
        };
        if kind != ProviderKind::Mock {
            if self.seed.is_some() || self.mock_shift.is_some() || self.mock_unjustified || self.mock_prose {
                return Err("mock options apply only to the mock provider".into());
            }
        } else if let Some(m) = model {
            c.model_id = m.to_string();
        }
        if let Some(url) = &self.base_url {
            c.base_url = url.clone();
        }
        if let Some(var) = &self.credential_env {
            c.credential_ref = Some(var.clone());
        }
        if let Some(t) = self.temperature {
            c.temperature = t;
        }
        if let Some(n) = self.max_in_flight {
            c.max_in_flight = n;
        }
        if let Some(delta) = self.mock_shift {
            c.mock.revision = MockRevision::Shift { delta, justify: !self.mock_unjustified };
        }
        if self.mock_prose {
            c.mock.themes = MockThemes::Prose;
        }
        c.validate().map_err(|e| e.to_string())?;
        Ok(c)
    }
}
