use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use crate::refmodel::{Model, RefModelBackend};

use super::http::{HttpBackend, HttpMode, RetryPolicy};
use super::stub::{StubBackend, StubKind};
use super::{Backend, BackendError, BackendFactory};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    HttpClassifier,
    HttpGenerator,
    StubSymmetric,
    StubOrderSensitive,
    RefModel,
}

impl FromStr for BackendKind {
    type Err = BackendError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.replace('_', "-").as_str() {
            "http-classifier" => BackendKind::HttpClassifier,
            "http-generator" => BackendKind::HttpGenerator,
            "stub-symmetric" | "symmetric" => BackendKind::StubSymmetric,
            "stub-order-sensitive" | "order-sensitive" => BackendKind::StubOrderSensitive,
            "refmodel" => BackendKind::RefModel,
            other => return Err(BackendError::Descriptor(format!("unknown backend kind `{other}`"))),
        })
    }
}

/// How to reach a model, parsed from a flat `key=value,key=value` string:
///
/// ```text
/// kind=http-classifier,endpoint=http://127.0.0.1:8080,model=roberta-base
/// kind=stub-order-sensitive,seed=3
/// kind=refmodel,model=runs/model-{seed}.calm
/// ```
///
/// For `refmodel`, `{seed}` in the path is replaced by the run seed.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendDescriptor {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub model_name: String,
    pub run_seed: Option<u64>,
    pub retry: RetryPolicy,
    pub timeout: Duration,
}

impl BackendDescriptor {
    pub fn stub(kind: StubKind, seed: u64) -> Self {
        BackendDescriptor {
            kind: match kind {
                StubKind::Symmetric => BackendKind::StubSymmetric,
                StubKind::OrderSensitive => BackendKind::StubOrderSensitive,
            },
            endpoint: None,
            model_name: match kind {
                StubKind::Symmetric => "stub-symmetric".into(),
                StubKind::OrderSensitive => "stub-order-sensitive".into(),
            },
            run_seed: Some(seed),
            retry: RetryPolicy::default(),
            timeout: Duration::from_secs(60),
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let missing = |what: &str| Err(BackendError::Descriptor(format!("`{what}` is required for this kind")));
        match self.kind {
            BackendKind::HttpClassifier | BackendKind::HttpGenerator if self.endpoint.is_none() => missing("endpoint"),
            BackendKind::StubSymmetric | BackendKind::StubOrderSensitive if self.run_seed.is_none() => missing("seed"),
            BackendKind::RefModel if self.model_name.is_empty() => missing("model"),
            _ => Ok(()),
        }
    }

    /// First run seed; later runs use consecutive seeds.
    pub fn base_seed(&self) -> u64 {
        self.run_seed.unwrap_or(0)
    }
}

impl FromStr for BackendDescriptor {
    type Err = BackendError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |msg: String| BackendError::Descriptor(msg);
        let mut kind = None;
        let mut endpoint = None;
        let mut model = None;
        let mut seed = None;
        let mut retry = RetryPolicy::default();
        let mut timeout = Duration::from_secs(60);
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, got `{part}`")))?;
            let num = |v: &str| v.parse::<u64>().map_err(|_| bad(format!("`{k}` must be an integer")));
            match k {
                "kind" => kind = Some(v.parse::<BackendKind>()?),
                "endpoint" => endpoint = Some(v.to_string()),
                "model" => model = Some(v.to_string()),
                "seed" => seed = Some(num(v)?),
                "retries" => retry.attempts = num(v)? as u32,
                "backoff_ms" => retry.initial_backoff = Duration::from_millis(num(v)?),
                "timeout_ms" => timeout = Duration::from_millis(num(v)?),
                other => return Err(bad(format!("unknown key `{other}`"))),
            }
        }
        let kind = kind.ok_or_else(|| bad("missing `kind`".into()))?;
        let model_name = model.unwrap_or_else(|| match kind {
            BackendKind::StubSymmetric => "stub-symmetric".into(),
            BackendKind::StubOrderSensitive => "stub-order-sensitive".into(),
            _ => String::new(),
        });
        let d = BackendDescriptor {
            kind,
            endpoint,
            model_name,
            run_seed: seed,
            retry,
            timeout,
        };
        d.validate()?;
        Ok(d)
    }
}

impl BackendFactory for BackendDescriptor {
    fn model_name(&self) -> &str {
        &self.model_name
    }

    fn open(&self, run_seed: u64) -> Result<Box<dyn Backend>, BackendError> {
        self.validate()?;
        let http = |mode| -> Result<Box<dyn Backend>, BackendError> {
            let endpoint = self.endpoint.as_deref().unwrap_or_default();
            Ok(Box::new(HttpBackend::new(endpoint, &self.model_name, mode, self.retry, self.timeout)?))
        };
        match self.kind {
            BackendKind::HttpClassifier => http(HttpMode::Classifier),
            BackendKind::HttpGenerator => http(HttpMode::Generator),
            BackendKind::StubSymmetric => Ok(Box::new(StubBackend::new(StubKind::Symmetric, run_seed))),
            BackendKind::StubOrderSensitive => Ok(Box::new(StubBackend::new(StubKind::OrderSensitive, run_seed))),
            BackendKind::RefModel => {
                let path = self.model_name.replace("{seed}", &run_seed.to_string());
                let model = Model::load(&path).map_err(|e| BackendError::Model(format!("{path}: {e}")))?;
                Ok(Box::new(RefModelBackend::new(Arc::new(model))))
            }
        }
    }
}
