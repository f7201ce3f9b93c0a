use super::{GuidanceError, GuidanceResult, LatentSpec, Tensor};
use crate::imaging::Image;

/// Value of the padding channel appended to three-channel normals.
pub const PAD_VALUE: f64 = 0.5;

/// `out x in` matrix averaging input cells over each output cell's footprint.
fn area_weights(input: usize, output: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let (lo, hi) = (o as f64 * scale, (o + 1) as f64 * scale);
            let mut row = Vec::new();
            let mut i = lo.floor() as usize;
            while (i as f64) < hi && i < input {
                let overlap = (hi.min(i as f64 + 1.0) - lo.max(i as f64)).max(0.0);
                if overlap > 0.0 {
                    row.push((i, overlap / scale));
                }
                i += 1;
            }
            row
        })
        .collect()
}

fn check_dims(img_h: usize, img_w: usize, spec: &LatentSpec) -> GuidanceResult<()> {
    if spec.h > img_h || spec.w > img_w || spec.h == 0 || spec.w == 0 {
        return Err(GuidanceError::Shape(format!(
            "cannot map a {img_h}x{img_w} map onto a {}x{} latent (upsampling is not supported)",
            spec.h, spec.w
        )));
    }
    if spec.c != 3 && spec.c != 4 {
        return Err(GuidanceError::Shape(format!(
            "latent channel count {} is not 3 or 4",
            spec.c
        )));
    }
    Ok(())
}

/// Area-averaged downsample of an encoded normal map to the latent grid, padded with a
/// constant channel when the latent has four channels.
pub fn normals_to_latent(normals: &Image, spec: &LatentSpec) -> GuidanceResult<Tensor> {
    if normals.channels != 3 {
        return Err(GuidanceError::Shape(format!(
            "normal map has {} channels",
            normals.channels
        )));
    }
    check_dims(normals.height, normals.width, spec)?;
    let wy = area_weights(normals.height, spec.h);
    let wx = area_weights(normals.width, spec.w);
    let mut out = Tensor::zeros(spec.shape());
    for (i, ry) in wy.iter().enumerate() {
        for (j, rx) in wx.iter().enumerate() {
            let base = (i * spec.w + j) * spec.c;
            let mut acc = [0.0; 3];
            for &(a, wa) in ry {
                for &(b, wb) in rx {
                    let px = normals.pixel(b, a);
                    for c in 0..3 {
                        acc[c] += wa * wb * px[c];
                    }
                }
            }
            out.data[base..base + 3].copy_from_slice(&acc);
            if spec.c == 4 {
                out.data[base + 3] = PAD_VALUE;
            }
        }
    }
    Ok(out)
}

/// Transpose of the linear part of [`normals_to_latent`]: pulls a latent gradient back to
/// an `height x width x 3` normal-map gradient. The padding channel has no inputs.
pub fn latent_to_normals_adjoint(
    grad: &Tensor,
    spec: &LatentSpec,
    height: usize,
    width: usize,
) -> GuidanceResult<Image> {
    grad.ensure_shape("latent gradient", &spec.shape())?;
    check_dims(height, width, spec)?;
    let wy = area_weights(height, spec.h);
    let wx = area_weights(width, spec.w);
    let mut out = Image::new(width, height, 3);
    for (i, ry) in wy.iter().enumerate() {
        for (j, rx) in wx.iter().enumerate() {
            let base = (i * spec.w + j) * spec.c;
            let g = &grad.data[base..base + 3];
            for &(a, wa) in ry {
                for &(b, wb) in rx {
                    let px = out.pixel_mut(b, a);
                    for c in 0..3 {
                        px[c] += wa * wb * g[c];
                    }
                }
            }
        }
    }
    Ok(out)
}
