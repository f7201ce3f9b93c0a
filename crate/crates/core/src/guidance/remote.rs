use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::wire::{
    self, CapabilitiesBody, DenoiseBody, DepthBody, EpsResponse, ImageResponse, InpaintBody, RefineBody,
};
use super::{
    Capability, DenoiseRequest, DepthRequest, GuidanceError, GuidanceProvider, GuidanceResult, InpaintRequest,
    LatentSpec, RefineRequest, Tensor,
};
use crate::render::Camera;

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteOptions {
    pub timeout: Duration,
    /// Attempts per request, including the first.
    pub max_attempts: u32,
    /// Delay before the first retry; doubles after each failure.
    pub backoff: Duration,
}

impl Default for RemoteOptions {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(120),
            max_attempts: 3,
            backoff: Duration::from_millis(250),
        }
    }
}

impl RemoteOptions {
    /// Total sleep before giving up on a request that always fails.
    pub fn backoff_total(&self) -> Duration {
        (0..self.max_attempts.saturating_sub(1))
            .map(|k| self.backoff * 2u32.pow(k))
            .sum()
    }
}

/// Client for a guidance bridge speaking the JSON protocol over HTTP/1.1.
pub struct RemoteProvider {
    base: String,
    agent: ureq::Agent,
    options: RemoteOptions,
    handshake: CapabilitiesBody,
}

impl std::fmt::Debug for RemoteProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteProvider")
            .field("base", &self.base)
            .field("options", &self.options)
            .field("capabilities", &self.handshake.capabilities)
            .finish()
    }
}

impl RemoteProvider {
    /// Connects and performs the capability handshake.
    pub fn connect(endpoint: &str, options: RemoteOptions) -> GuidanceResult<Self> {
        if options.max_attempts == 0 {
            return Err(GuidanceError::Config("max_attempts must be at least 1".into()));
        }
        let agent = ureq::AgentBuilder::new().timeout(options.timeout).build();
        let mut provider = Self {
            base: endpoint.trim_end_matches('/').to_string(),
            agent,
            options,
            handshake: CapabilitiesBody {
                capabilities: Vec::new(),
                latent: LatentSpec::default(),
                cameras: None,
            },
        };
        provider.handshake = provider.call::<(), CapabilitiesBody>("GET", "/capabilities", None)?;
        Ok(provider)
    }

    pub fn endpoint(&self) -> &str {
        &self.base
    }

    fn call<B: Serialize, R: DeserializeOwned>(&self, method: &str, path: &str, body: Option<&B>) -> GuidanceResult<R> {
        let url = format!("{}{path}", self.base);
        let payload = body.map(|b| serde_json::to_string(b).expect("serializable request"));
        let mut last = GuidanceError::Http {
            status: None,
            message: "no attempt made".into(),
        };
        for attempt in 0..self.options.max_attempts {
            if attempt > 0 {
                let delay = self.options.backoff * 2u32.pow(attempt - 1);
                log::warn!("{method} {path}: retrying in {delay:?} after: {last}");
                thread::sleep(delay);
            }
            let req = self.agent.request(method, &url).set("Content-Type", "application/json");
            let result = match &payload {
                Some(p) => req.send_string(p),
                None => req.call(),
            };
            match result {
                Ok(resp) => {
                    let text = resp.into_string().map_err(|e| GuidanceError::Http {
                        status: Some(200),
                        message: e.to_string(),
                    })?;
                    return wire::parse_body(&text);
                }
                Err(ureq::Error::Status(code, resp)) => {
                    let text = resp.into_string().unwrap_or_default();
                    let message = serde_json::from_str::<wire::ErrorBody>(&text)
                        .map(|e| e.error)
                        .unwrap_or(text);
                    last = GuidanceError::Http {
                        status: Some(code),
                        message,
                    };
                    // Client errors will not change on retry.
                    if (400..500).contains(&code) && code != 429 && code != 408 {
                        return Err(last);
                    }
                }
                Err(ureq::Error::Transport(t)) => {
                    last = GuidanceError::Http {
                        status: None,
                        message: t.to_string(),
                    };
                }
            }
        }
        Err(last.context(format!(
            "{method} {url} failed after {} attempts",
            self.options.max_attempts
        )))
    }

    fn require_remote(&self, cap: Capability) -> GuidanceResult<()> {
        self.require(cap)
    }
}

impl GuidanceProvider for RemoteProvider {
    fn capabilities(&self) -> Vec<Capability> {
        self.handshake.capabilities.clone()
    }

    fn latent_spec(&self) -> LatentSpec {
        self.handshake.latent
    }

    fn registered_cameras(&self) -> Option<Vec<Camera>> {
        self.handshake.cameras.clone()
    }

    fn denoise(&self, req: &DenoiseRequest) -> GuidanceResult<Tensor> {
        self.require_remote(Capability::Denoise)?;
        let r: EpsResponse = self.call("POST", "/denoise", Some(&DenoiseBody::from_request(req)))?;
        Tensor::from_wire(&r.eps_hat)
    }

    fn depth_to_image(&self, req: &DepthRequest) -> GuidanceResult<Tensor> {
        self.require_remote(Capability::DepthToImage)?;
        let r: ImageResponse = self.call("POST", "/depth2img", Some(&DepthBody::from_request(req)))?;
        Tensor::from_wire(&r.image)
    }

    fn inpaint(&self, req: &InpaintRequest) -> GuidanceResult<Tensor> {
        self.require_remote(Capability::Inpaint)?;
        let r: ImageResponse = self.call("POST", "/inpaint", Some(&InpaintBody::from_request(req)))?;
        Tensor::from_wire(&r.image)
    }

    fn refine(&self, req: &RefineRequest) -> GuidanceResult<Tensor> {
        self.require_remote(Capability::Refine)?;
        let r: ImageResponse = self.call("POST", "/refine", Some(&RefineBody::from_request(req)))?;
        Tensor::from_wire(&r.image)
    }
}
