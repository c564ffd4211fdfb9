//! Speaker-change predictors.
//!
//! [`ChangePredictor`] is the seam the pipelines run against. The built-in
//! logistic baseline and the remote HTTP client both implement it, and so
//! does the simulation oracle in [`crate::synth`].

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LinearModel, Mode, ModelFile, Parameters, SoftmaxModel};
use crate::transcript::Conversation;
use crate::windowing::{MpmWindow, SpmContext};

/// Change probabilities for the `|w| - 1` boundaries of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPrediction {
    pub window_index: usize,
    pub probabilities: Vec<f64>,
}

impl WindowPrediction {
    pub fn new(window: &MpmWindow, probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.len() != window.boundary_count() {
            return Err(Error::validation(format!(
                "window {} has {} boundaries but {} probabilities",
                window.window_index,
                window.boundary_count(),
                probabilities.len()
            )));
        }
        if let Some(p) = probabilities.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::validation(format!("probability {p} outside [0,1]")));
        }
        Ok(WindowPrediction {
            window_index: window.window_index,
            probabilities,
        })
    }
}

pub trait ChangePredictor: Send + Sync {
    fn mode(&self) -> Mode;

    /// Probability of a change at `ctx.change_index`.
    fn predict_spm(&self, conv: &Conversation, ctx: &SpmContext) -> Result<f64>;

    /// Probabilities for every boundary inside `window`.
    fn predict_mpm(&self, conv: &Conversation, window: &MpmWindow) -> Result<WindowPrediction>;
}

#[derive(Debug, Clone)]
pub enum PredictorHandle {
    Builtin { mode: Mode, model: LinearModel },
    Multispeaker(SoftmaxModel),
    Remote(RemotePredictor),
}

impl PredictorHandle {
    pub fn builtin(mode: Mode, model: LinearModel) -> Result<Self> {
        if mode == Mode::Multispeaker {
            return Err(Error::config("a binary model cannot run in multispeaker mode"));
        }
        Ok(PredictorHandle::Builtin { mode, model })
    }

    pub fn from_model_file(file: ModelFile) -> Self {
        match file.params {
            Parameters::Binary(model) => PredictorHandle::Builtin { mode: file.mode, model },
            Parameters::Softmax(model) => PredictorHandle::Multispeaker(model),
        }
    }

    fn require(&self, wanted: Mode) -> Result<()> {
        let mode = self.mode();
        if mode != wanted {
            return Err(Error::config(format!("predictor is in {mode} mode, {wanted} requested")));
        }
        Ok(())
    }
}

impl ChangePredictor for PredictorHandle {
    fn mode(&self) -> Mode {
        match self {
            PredictorHandle::Builtin { mode, .. } => *mode,
            PredictorHandle::Multispeaker(_) => Mode::Multispeaker,
            PredictorHandle::Remote(r) => r.mode,
        }
    }

    fn predict_spm(&self, conv: &Conversation, ctx: &SpmContext) -> Result<f64> {
        self.require(Mode::Spm)?;
        match self {
            PredictorHandle::Builtin { model, .. } => {
                let x = model.featurizer.featurize(ctx.left(), ctx.right(), &ctx.sentences);
                Ok(model.probability(&x))
            }
            PredictorHandle::Remote(remote) => remote.predict_spm(conv, ctx),
            PredictorHandle::Multispeaker(_) => unreachable!("mode checked"),
        }
    }

    fn predict_mpm(&self, conv: &Conversation, window: &MpmWindow) -> Result<WindowPrediction> {
        self.require(Mode::Mpm)?;
        if window.len() < 2 {
            return Err(Error::validation("a window needs at least 2 sentences"));
        }
        match self {
            PredictorHandle::Builtin { model, .. } => {
                let sentences = window.sentences(conv);
                let probs = sentences
                    .windows(2)
                    .map(|pair| model.probability(&model.featurizer.featurize(&pair[0], &pair[1], sentences)))
                    .collect();
                WindowPrediction::new(window, probs)
            }
            PredictorHandle::Remote(remote) => remote.predict_mpm(conv, window),
            PredictorHandle::Multispeaker(_) => unreachable!("mode checked"),
        }
    }
}

/// Body of `POST /v1/predict`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    pub id: String,
    pub mode: Mode,
    pub sentences: Vec<String>,
    pub boundary_offset: Option<usize>,
}

impl PredictRequest {
    pub fn expected_len(&self) -> usize {
        match self.mode {
            Mode::Mpm => self.sentences.len().saturating_sub(1),
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub id: String,
    pub probabilities: Vec<f64>,
}

/// Checks a response against the request it answers.
pub fn validate_response(req: &PredictRequest, resp: &PredictResponse) -> Result<()> {
    let protocol = |message: String| Error::Protocol {
        request: req.id.clone(),
        message,
    };
    if resp.id != req.id {
        return Err(protocol(format!("response id {:?} does not echo request id", resp.id)));
    }
    if resp.probabilities.len() != req.expected_len() {
        return Err(protocol(format!(
            "expected {} probabilities, got {}",
            req.expected_len(),
            resp.probabilities.len()
        )));
    }
    if let Some(p) = resp.probabilities.iter().find(|p| !(p.is_finite() && (0.0..=1.0).contains(*p))) {
        return Err(protocol(format!("probability {p} outside [0,1]")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    /// Base URL, e.g. `http://127.0.0.1:8080`.
    pub endpoint: String,
    /// Extra attempts after the first transport failure.
    pub retries: u32,
    /// Delay before the first retry; doubled on each further retry.
    pub backoff: Duration,
    pub timeout: Duration,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        RemoteConfig {
            endpoint: endpoint.into(),
            retries: 3,
            backoff: Duration::from_millis(100),
            timeout: Duration::from_secs(30),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RemotePredictor {
    pub mode: Mode,
    config: RemoteConfig,
    agent: ureq::Agent,
}

impl RemotePredictor {
    pub fn new(mode: Mode, config: RemoteConfig) -> Result<Self> {
        if config.endpoint.trim().is_empty() {
            return Err(Error::config("remote endpoint is empty"));
        }
        if mode == Mode::Multispeaker {
            return Err(Error::config("the predictor protocol supports spm and mpm modes only"));
        }
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        Ok(RemotePredictor { mode, config, agent })
    }

    fn url(&self) -> String {
        format!("{}/v1/predict", self.config.endpoint.trim_end_matches('/'))
    }

    /// Sends one request, retrying transport failures with exponential backoff.
    pub fn send(&self, req: &PredictRequest) -> Result<PredictResponse> {
        let mut delay = self.config.backoff;
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.send_once(req) {
                Err(Error::Transport { message, .. }) if attempt <= self.config.retries => {
                    log::warn!("request {} failed ({message}); retrying in {delay:?}", req.id);
                    thread::sleep(delay);
                    delay *= 2;
                }
                Err(Error::Transport { message, .. }) => {
                    return Err(Error::Transport {
                        request: req.id.clone(),
                        attempts: attempt,
                        message,
                    })
                }
                other => return other,
            }
        }
    }

    fn send_once(&self, req: &PredictRequest) -> Result<PredictResponse> {
        let protocol = |message: String| Error::Protocol {
            request: req.id.clone(),
            message,
        };
        let mut resp = self.agent.post(&self.url()).send_json(req).map_err(|e| match e {
            ureq::Error::Json(e) => protocol(e.to_string()),
            other => Error::Transport {
                request: req.id.clone(),
                attempts: 1,
                message: other.to_string(),
            },
        })?;
        let status = resp.status().as_u16();
        if status != 200 {
            return Err(protocol(format!("HTTP status {status}")));
        }
        let body: PredictResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| protocol(format!("undecodable response: {e}")))?;
        validate_response(req, &body)?;
        Ok(body)
    }

    pub fn predict_spm(&self, conv: &Conversation, ctx: &SpmContext) -> Result<f64> {
        let req = PredictRequest {
            id: format!("{}/spm/{}", conv.id, ctx.change_index),
            mode: Mode::Spm,
            sentences: ctx.sentences.iter().map(|s| s.text.clone()).collect(),
            boundary_offset: Some(ctx.boundary_offset),
        };
        Ok(self.send(&req)?.probabilities[0])
    }

    pub fn predict_mpm(&self, conv: &Conversation, window: &MpmWindow) -> Result<WindowPrediction> {
        let req = PredictRequest {
            id: format!("{}/mpm/{}", conv.id, window.window_index),
            mode: Mode::Mpm,
            sentences: window.sentences(conv).iter().map(|s| s.text.clone()).collect(),
            boundary_offset: None,
        };
        WindowPrediction::new(window, self.send(&req)?.probabilities)
    }
}
