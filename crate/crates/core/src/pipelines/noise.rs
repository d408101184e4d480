use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::PipelineError;
use crate::raster::Raster;

/// Adds i.i.d. `N(0, sigma^2)` noise; values are not clamped.
pub fn add_gaussian_noise(image: &Raster, sigma: f64, seed: u64) -> Result<Raster, PipelineError> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(PipelineError::InvalidConfig { name: "sigma", value: sigma });
    }
    let mut out = image.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, sigma).map_err(|_| PipelineError::InvalidConfig { name: "sigma", value: sigma })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in out.data_mut() {
        *v += normal.sample(&mut rng);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_statistics() {
        let img = Raster::filled(64, 64, 0.5);
        assert_eq!(add_gaussian_noise(&img, 0.0, 3).unwrap(), img);
        let a = add_gaussian_noise(&img, 0.1, 7).unwrap();
        assert_eq!(a, add_gaussian_noise(&img, 0.1, 7).unwrap());
        assert_ne!(a, add_gaussian_noise(&img, 0.1, 8).unwrap());
        let n = a.len() as f64;
        let mean = a.data().iter().map(|v| v - 0.5).sum::<f64>() / n;
        assert!(mean.abs() <= 3.0 * 0.1 / n.sqrt());
        let var = a.data().iter().map(|v| (v - 0.5 - mean).powi(2)).sum::<f64>() / n;
        assert!((var.sqrt() - 0.1).abs() < 0.01);
        assert!(add_gaussian_noise(&img, -1.0, 0).is_err());
    }
}
