use super::{
    Capability, DenoiseRequest, DepthRequest, GuidanceError, GuidanceProvider, GuidanceResult, InpaintRequest,
    LatentSpec, RefineRequest, Tensor,
};

/// Noise prediction rule of [`MockProvider`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DenoiseMock {
    /// Returns the true noise.
    Perfect,
    /// True noise plus a constant.
    Offset(f64),
    /// Returns the noised latent itself.
    Echo,
}

/// Model-free provider: a configurable denoiser, grayscale depth-to-image, a constant-grey
/// inpainter and an identity refiner.
#[derive(Debug, Clone)]
pub struct MockProvider {
    pub denoiser: DenoiseMock,
    pub latent: LatentSpec,
    pub fill: f64,
}

impl MockProvider {
    pub fn new(denoiser: DenoiseMock, latent: LatentSpec) -> Self {
        Self {
            denoiser,
            latent,
            fill: 0.5,
        }
    }

    pub fn perfect(latent: LatentSpec) -> Self {
        Self::new(DenoiseMock::Perfect, latent)
    }
}

fn grey_to_rgb(t: &Tensor) -> GuidanceResult<Tensor> {
    match t.shape[..] {
        [h, w, 1] => Ok(Tensor {
            shape: vec![h, w, 3],
            data: t.data.iter().flat_map(|&v| [v, v, v]).collect(),
        }),
        _ => Err(GuidanceError::Shape(format!(
            "expected an H x W x 1 tensor, got {:?}",
            t.shape
        ))),
    }
}

impl GuidanceProvider for MockProvider {
    fn capabilities(&self) -> Vec<Capability> {
        Capability::ALL.to_vec()
    }

    fn latent_spec(&self) -> LatentSpec {
        self.latent
    }

    fn denoise(&self, req: &DenoiseRequest) -> GuidanceResult<Tensor> {
        let out = match self.denoiser {
            DenoiseMock::Echo => req.latent.clone(),
            DenoiseMock::Perfect | DenoiseMock::Offset(_) => {
                let mut eps = req.hints.noise.clone().ok_or(GuidanceError::MissingHint("noise"))?;
                if let DenoiseMock::Offset(c) = self.denoiser {
                    eps.data.iter_mut().for_each(|v| *v += c);
                }
                eps
            }
        };
        Ok(out.to_f32_precision())
    }

    fn depth_to_image(&self, req: &DepthRequest) -> GuidanceResult<Tensor> {
        Ok(grey_to_rgb(&req.depth)?.to_f32_precision())
    }

    fn inpaint(&self, req: &InpaintRequest) -> GuidanceResult<Tensor> {
        let mask = req.mask.to_mask()?;
        let mut out = req.image.clone();
        for (p, &m) in mask.data.iter().enumerate() {
            if m {
                out.data[3 * p..3 * p + 3].fill(self.fill);
            }
        }
        Ok(out.to_f32_precision())
    }

    fn refine(&self, req: &RefineRequest) -> GuidanceResult<Tensor> {
        Ok(req.image.clone())
    }
}
