//! Batched, gradient-free restoration and description of range images.

use autograd::{Binder, Graph, Tensor, Var};

use crate::error::{Error, Result};
use crate::ldr::LdrNet;
use crate::lpr::LprNet;
use crate::range_image::RangeImage;

pub const CHUNK: usize = 16;

/// Stacks equally sized images into `[B, 2, H, W]`.
pub fn stack(images: &[&RangeImage], max_range: f64) -> Result<Tensor> {
    let first = images.first().ok_or_else(|| Error::input("cannot stack zero images"))?;
    let (h, w) = (first.height(), first.width());
    let mut data = Vec::with_capacity(images.len() * 2 * h * w);
    for img in images {
        if (img.height(), img.width()) != (h, w) {
            return Err(Error::input(format!(
                "image is {}x{}, batch expects {h}x{w}",
                img.height(),
                img.width()
            )));
        }
        data.extend_from_slice(img.to_tensor(max_range).data());
    }
    Ok(Tensor::new(&[images.len(), 2, h, w], data))
}

fn check_finite(t: &Tensor, what: &str) -> Result<()> {
    if t.all_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite values in {what}")))
    }
}

/// Restores every image through `ldr`; `None` is identity restoration.
pub fn restore(ldr: Option<&LdrNet>, images: &[RangeImage], max_range: f64) -> Result<Vec<RangeImage>> {
    let Some(ldr) = ldr else {
        return Ok(images.to_vec());
    };
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(CHUNK) {
        let refs: Vec<&RangeImage> = chunk.iter().collect();
        let x = stack(&refs, max_range)?;
        let g = Graph::new();
        let b = Binder::new(&g, &ldr.params, false);
        let y = ldr.forward(&b, g.constant(x))?.value();
        check_finite(&y, "restored images")?;
        out.extend((0..chunk.len()).map(|i| RangeImage::from_tensor(&y, i, max_range)));
    }
    Ok(out)
}

fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    let d = t.shape()[1];
    t.data().chunks(d).map(<[f64]>::to_vec).collect()
}

/// Global descriptors, one row per image.
pub fn describe(lpr: &LprNet, images: &[RangeImage], max_range: f64) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(CHUNK) {
        let refs: Vec<&RangeImage> = chunk.iter().collect();
        let x = stack(&refs, max_range)?;
        let g = Graph::new();
        let b = Binder::new(&g, &lpr.params, false);
        let d = lpr.forward(&b, g.constant(x))?.value();
        check_finite(&d, "descriptors")?;
        out.extend(rows(&d));
    }
    Ok(out)
}

/// Descriptors of a batch already on a graph, as plain rows.
pub fn var_rows(v: Var<'_>) -> Vec<Vec<f64>> {
    rows(&v.value())
}
