use super::{sign, LossGrad};
use crate::error::Result;
use crate::image::Image;

/// Mean absolute error over every sample.
pub fn l1_loss(render: &Image, gt: &Image) -> Result<LossGrad> {
    render.check_same_shape(gt, "l1 loss")?;
    let n = render.len().max(1) as f64;
    let mut grad = Image::zeros(render.width(), render.height(), render.channels());
    let mut sum = 0.0;
    for ((g, r), t) in grad.data_mut().iter_mut().zip(render.data()).zip(gt.data()) {
        let d = r - t;
        sum += d.abs();
        *g = sign(d) / n;
    }
    Ok(LossGrad {
        value: sum / n,
        grad,
    })
}
