//! JSON bodies of the bridge protocol and a transport-free request handler.
//!
//! Besides the required keys, request bodies may carry `camera`, `x0` and `eps`; these feed
//! offline oracles and are ignored by model-backed services. `/capabilities` may likewise list
//! the `cameras` a fixed-view provider knows.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{
    Capability, DenoiseRequest, DepthRequest, GuidanceError, GuidanceProvider, GuidanceResult, InpaintRequest,
    LatentSpec, OracleHints, RefineRequest, Tensor, WireTensor,
};
use crate::render::Camera;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapabilitiesBody {
    pub capabilities: Vec<Capability>,
    pub latent: LatentSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cameras: Option<Vec<Camera>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WireHints {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<Camera>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<WireTensor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<WireTensor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseBody {
    pub latent: WireTensor,
    pub t: usize,
    pub prompt: String,
    pub guidance_scale: f64,
    #[serde(flatten)]
    pub hints: WireHints,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthBody {
    pub depth: WireTensor,
    pub prompt: String,
    #[serde(flatten)]
    pub hints: WireHints,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InpaintBody {
    pub image: WireTensor,
    pub mask: WireTensor,
    pub depth: Option<WireTensor>,
    pub prompt: String,
    #[serde(flatten)]
    pub hints: WireHints,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineBody {
    pub image: WireTensor,
    pub prompt: String,
    pub steps: usize,
    #[serde(flatten)]
    pub hints: WireHints,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsResponse {
    pub eps_hat: WireTensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageResponse {
    pub image: WireTensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

fn hints_to_wire(h: &OracleHints) -> WireHints {
    WireHints {
        camera: h.camera.clone(),
        x0: h.clean.as_ref().map(Tensor::to_wire),
        eps: h.noise.as_ref().map(Tensor::to_wire),
    }
}

fn hints_from_wire(h: &WireHints) -> GuidanceResult<OracleHints> {
    let field = |name: &str, t: &Option<WireTensor>| {
        t.as_ref()
            .map(Tensor::from_wire)
            .transpose()
            .map_err(|e| e.context(format!("field `{name}`")))
    };
    Ok(OracleHints {
        camera: h.camera.clone(),
        clean: field("x0", &h.x0)?,
        noise: field("eps", &h.eps)?,
    })
}

fn tensor(name: &str, t: &WireTensor) -> GuidanceResult<Tensor> {
    Tensor::from_wire(t).map_err(|e| match e {
        GuidanceError::Protocol { field, message } => GuidanceError::Protocol {
            field: format!("{name}.{field}"),
            message,
        },
        other => other,
    })
}

impl DenoiseBody {
    pub fn from_request(r: &DenoiseRequest) -> Self {
        Self {
            latent: r.latent.to_wire(),
            t: r.t,
            prompt: r.prompt.clone(),
            guidance_scale: r.guidance_scale,
            hints: hints_to_wire(&r.hints),
        }
    }

    pub fn to_request(&self) -> GuidanceResult<DenoiseRequest> {
        Ok(DenoiseRequest {
            latent: tensor("latent", &self.latent)?,
            t: self.t,
            prompt: self.prompt.clone(),
            guidance_scale: self.guidance_scale,
            hints: hints_from_wire(&self.hints)?,
        })
    }
}

impl DepthBody {
    pub fn from_request(r: &DepthRequest) -> Self {
        Self {
            depth: r.depth.to_wire(),
            prompt: r.prompt.clone(),
            hints: hints_to_wire(&r.hints),
        }
    }

    pub fn to_request(&self) -> GuidanceResult<DepthRequest> {
        Ok(DepthRequest {
            depth: tensor("depth", &self.depth)?,
            prompt: self.prompt.clone(),
            hints: hints_from_wire(&self.hints)?,
        })
    }
}

impl InpaintBody {
    pub fn from_request(r: &InpaintRequest) -> Self {
        Self {
            image: r.image.to_wire(),
            mask: r.mask.to_wire(),
            depth: r.depth.as_ref().map(Tensor::to_wire),
            prompt: r.prompt.clone(),
            hints: hints_to_wire(&r.hints),
        }
    }

    pub fn to_request(&self) -> GuidanceResult<InpaintRequest> {
        Ok(InpaintRequest {
            image: tensor("image", &self.image)?,
            mask: tensor("mask", &self.mask)?,
            depth: self.depth.as_ref().map(|d| tensor("depth", d)).transpose()?,
            prompt: self.prompt.clone(),
            hints: hints_from_wire(&self.hints)?,
        })
    }
}

impl RefineBody {
    pub fn from_request(r: &RefineRequest) -> Self {
        Self {
            image: r.image.to_wire(),
            prompt: r.prompt.clone(),
            steps: r.steps,
            hints: hints_to_wire(&r.hints),
        }
    }

    pub fn to_request(&self) -> GuidanceResult<RefineRequest> {
        Ok(RefineRequest {
            image: tensor("image", &self.image)?,
            prompt: self.prompt.clone(),
            steps: self.steps,
            hints: hints_from_wire(&self.hints)?,
        })
    }
}

/// Parses a JSON body, naming the offending field on failure.
pub fn parse_body<T: DeserializeOwned>(body: &str) -> GuidanceResult<T> {
    serde_json::from_str(body).map_err(|e| {
        let msg = e.to_string();
        let field = msg
            .split('`')
            .nth(1)
            .map(str::to_string)
            .unwrap_or_else(|| "body".into());
        GuidanceError::Protocol { field, message: msg }
    })
}

fn status_for(e: &GuidanceError) -> u16 {
    match e.root() {
        GuidanceError::Unsupported(_) => 501,
        GuidanceError::Protocol { .. }
        | GuidanceError::Shape(_)
        | GuidanceError::UnknownCamera(_)
        | GuidanceError::MissingHint(_)
        | GuidanceError::Config(_) => 400,
        _ => 500,
    }
}

fn respond<T: Serialize>(r: GuidanceResult<T>) -> (u16, String) {
    match r {
        Ok(v) => (200, serde_json::to_string(&v).expect("serializable response")),
        Err(e) => (
            status_for(&e),
            serde_json::to_string(&ErrorBody { error: e.to_string() }).unwrap(),
        ),
    }
}

/// Serves one protocol request against a provider, returning the HTTP status and JSON body.
pub fn handle(provider: &dyn GuidanceProvider, method: &str, path: &str, body: &str) -> (u16, String) {
    let require = |cap| provider.require(cap);
    match (method, path) {
        ("GET", "/capabilities") => respond(Ok(CapabilitiesBody {
            capabilities: provider.capabilities(),
            latent: provider.latent_spec(),
            cameras: provider.registered_cameras(),
        })),
        ("POST", "/denoise") => respond((|| {
            require(Capability::Denoise)?;
            let req = parse_body::<DenoiseBody>(body)?.to_request()?;
            Ok(EpsResponse {
                eps_hat: provider.denoise(&req)?.to_wire(),
            })
        })()),
        ("POST", "/depth2img") => respond((|| {
            require(Capability::DepthToImage)?;
            let req = parse_body::<DepthBody>(body)?.to_request()?;
            Ok(ImageResponse {
                image: provider.depth_to_image(&req)?.to_wire(),
            })
        })()),
        ("POST", "/inpaint") => respond((|| {
            require(Capability::Inpaint)?;
            let req = parse_body::<InpaintBody>(body)?.to_request()?;
            Ok(ImageResponse {
                image: provider.inpaint(&req)?.to_wire(),
            })
        })()),
        ("POST", "/refine") => respond((|| {
            require(Capability::Refine)?;
            let req = parse_body::<RefineBody>(body)?.to_request()?;
            Ok(ImageResponse {
                image: provider.refine(&req)?.to_wire(),
            })
        })()),
        _ => (
            404,
            serde_json::to_string(&ErrorBody {
                error: format!("no route for {method} {path}"),
            })
            .unwrap(),
        ),
    }
}
