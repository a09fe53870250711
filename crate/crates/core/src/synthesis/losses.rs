use crate::error::{Error, Result};
use crate::tensor::{Graph, StftResolution, Tensor};

pub const DEFAULT_STFT_RESOLUTIONS: [StftResolution; 3] = [
    StftResolution::new(512, 128, 512),
    StftResolution::new(1024, 256, 1024),
    StftResolution::new(2048, 512, 2048),
];

/// Multi-resolution STFT loss: per resolution the spectral convergence
/// `||S| - |S^|| / ||S||` (Frobenius) plus the mean absolute log-magnitude
/// difference, summed over resolutions. `y` is the reference.
pub fn stft_loss_tensor<'g>(y: Tensor<'g>, y_hat: Tensor<'g>, resolutions: &[StftResolution]) -> Result<Tensor<'g>> {
    if y.numel() != y_hat.numel() {
        return Err(Error::Shape(format!(
            "STFT loss on {} vs {} samples",
            y.numel(),
            y_hat.numel()
        )));
    }
    if resolutions.is_empty() {
        return Err(Error::Parameter("STFT loss needs at least one resolution".into()));
    }
    let mut total: Option<Tensor<'g>> = None;
    for &res in resolutions {
        let s = y.stft_magnitude(res)?;
        let s_hat = y_hat.stft_magnitude(res)?;
        let sc = s.sub(s_hat)?.square().sum().sqrt().div(s.square().sum().sqrt())?;
        let mag = s.log().sub(s_hat.log())?.abs().mean();
        let term = sc.add(mag)?;
        total = Some(match total {
            Some(t) => t.add(term)?,
            None => term,
        });
    }
    Ok(total.expect("non-empty resolutions"))
}

pub fn stft_loss(y: &[f64], y_hat: &[f64], resolutions: &[StftResolution]) -> Result<f64> {
    let g = Graph::new();
    let a = g.constant(y.to_vec(), &[y.len()])?;
    let b = g.constant(y_hat.to_vec(), &[y_hat.len()])?;
    Ok(stft_loss_tensor(a, b, resolutions)?.item())
}

/// Mean absolute difference per layer, averaged over every
/// (discriminator, layer) pair.
pub fn feature_matching_loss_tensor<'g>(real: &[Vec<Tensor<'g>>], fake: &[Vec<Tensor<'g>>]) -> Result<Tensor<'g>> {
    if real.len() != fake.len() {
        return Err(Error::Shape(format!("{} vs {} discriminators", real.len(), fake.len())));
    }
    let mut terms = Vec::new();
    for (r, f) in real.iter().zip(fake) {
        if r.len() != f.len() {
            return Err(Error::Shape(format!("{} vs {} feature layers", r.len(), f.len())));
        }
        for (a, b) in r.iter().zip(f) {
            if a.shape() != b.shape() {
                return Err(Error::Shape(format!("feature {:?} vs {:?}", a.shape(), b.shape())));
            }
            terms.push(a.sub(*b)?.abs().mean());
        }
    }
    let first = *terms.first().ok_or_else(|| Error::Shape("no feature layers".into()))?;
    let n = terms.len() as f64;
    let mut acc = first;
    for t in &terms[1..] {
        acc = acc.add(*t)?;
    }
    Ok(acc.scale(1.0 / n))
}

pub fn feature_matching_loss(real: &[Vec<Vec<f64>>], fake: &[Vec<Vec<f64>>]) -> Result<f64> {
    let g = Graph::new();
    let lift = |m: &[Vec<Vec<f64>>]| -> Result<Vec<Vec<Tensor<'_>>>> {
        m.iter()
            .map(|layers| layers.iter().map(|l| g.constant(l.clone(), &[l.len()])).collect())
            .collect()
    };
    Ok(feature_matching_loss_tensor(&lift(real)?, &lift(fake)?)?.item())
}

/// Least-squares GAN losses summed over discriminators:
/// `adv_g = mean (D(y^) - 1)^2`, `adv_d = mean (D(y) - 1)^2 + mean D(y^)^2`.
pub fn adversarial_losses_tensor<'g>(real: &[Tensor<'g>], fake: &[Tensor<'g>]) -> Result<(Tensor<'g>, Tensor<'g>)> {
    if real.len() != fake.len() || real.is_empty() {
        return Err(Error::Shape(format!(
            "{} real vs {} fake discriminator outputs",
            real.len(),
            fake.len()
        )));
    }
    let mut adv_g: Option<Tensor<'g>> = None;
    let mut adv_d: Option<Tensor<'g>> = None;
    let add = |acc: Option<Tensor<'g>>, t: Tensor<'g>| -> Result<Tensor<'g>> {
        match acc {
            Some(a) => a.add(t),
            None => Ok(t),
        }
    };
    for (r, f) in real.iter().zip(fake) {
        let g = f.add_scalar(-1.0).square().mean();
        let d = r.add_scalar(-1.0).square().mean().add(f.square().mean())?;
        adv_g = Some(add(adv_g, g)?);
        adv_d = Some(add(adv_d, d)?);
    }
    Ok((adv_g.expect("non-empty"), adv_d.expect("non-empty")))
}

pub fn adversarial_losses(real: &[Vec<f64>], fake: &[Vec<f64>]) -> Result<(f64, f64)> {
    let g = Graph::new();
    let lift = |m: &[Vec<f64>]| -> Result<Vec<Tensor<'_>>> {
        m.iter().map(|v| g.constant(v.clone(), &[v.len()])).collect()
    };
    let (a, d) = adversarial_losses_tensor(&lift(real)?, &lift(fake)?)?;
    Ok((a.item(), d.item()))
}
