use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{GuidanceError, GuidanceResult};
use crate::imaging::{Image, Mask};

/// Dense row-major tensor. Values are `f64` in memory and `f32` on the wire.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> GuidanceResult<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(GuidanceError::Shape(format!(
                "shape {shape:?} holds {n} values but {} were given",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![value; n],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn ensure_shape(&self, what: &str, shape: &[usize]) -> GuidanceResult<()> {
        if self.shape != shape {
            return Err(GuidanceError::Shape(format!(
                "{what}: expected {shape:?}, got {:?}",
                self.shape
            )));
        }
        Ok(())
    }

    /// Rounds every value to the nearest `f32`.
    pub fn to_f32_precision(mut self) -> Self {
        for v in &mut self.data {
            *v = *v as f32 as f64;
        }
        self
    }

    pub fn from_image(img: &Image) -> Self {
        Self {
            shape: vec![img.height, img.width, img.channels],
            data: img.data.clone(),
        }
    }

    pub fn from_mask(mask: &Mask) -> Self {
        Self {
            shape: vec![mask.height, mask.width, 1],
            data: mask.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    /// Interprets an `H x W x C` tensor as an image.
    pub fn to_image(&self) -> GuidanceResult<Image> {
        match self.shape[..] {
            [h, w, c] => Ok(Image::from_data(w, h, c, self.data.clone())),
            _ => Err(GuidanceError::Shape(format!(
                "expected an H x W x C tensor, got {:?}",
                self.shape
            ))),
        }
    }

    pub fn to_mask(&self) -> GuidanceResult<Mask> {
        match self.shape[..] {
            [h, w, 1] | [h, w] => Ok(Mask {
                width: w,
                height: h,
                data: self.data.iter().map(|&v| v >= 0.5).collect(),
            }),
            _ => Err(GuidanceError::Shape(format!(
                "expected an H x W x 1 mask, got {:?}",
                self.shape
            ))),
        }
    }

    pub fn to_wire(&self) -> WireTensor {
        let mut bytes = Vec::with_capacity(4 * self.data.len());
        for &v in &self.data {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        WireTensor {
            shape: self.shape.clone(),
            dtype: "f32".into(),
            data: STANDARD.encode(bytes),
        }
    }

    pub fn from_wire(w: &WireTensor) -> GuidanceResult<Self> {
        if w.dtype != "f32" {
            return Err(GuidanceError::Protocol {
                field: "dtype".into(),
                message: format!("unsupported dtype {:?}", w.dtype),
            });
        }
        let bytes = STANDARD.decode(&w.data).map_err(|e| GuidanceError::Protocol {
            field: "data".into(),
            message: e.to_string(),
        })?;
        let n: usize = w.shape.iter().product();
        if bytes.len() != 4 * n {
            return Err(GuidanceError::Protocol {
                field: "data".into(),
                message: format!("{} bytes for shape {:?}", bytes.len(), w.shape),
            });
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Ok(Self {
            shape: w.shape.clone(),
            data,
        })
    }
}

/// `{"shape": [...], "dtype": "f32", "data": base64}` with little-endian row-major payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireTensor {
    pub shape: Vec<usize>,
    pub dtype: String,
    pub data: String,
}
