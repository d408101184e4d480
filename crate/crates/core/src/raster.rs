use alloc::vec;
use alloc::vec::Vec;

/// Row-major grayscale image with real-valued pixels.
///
/// Pixel `(x, y)` has its centre at `(x + 0.5, y + 0.5)` in pixel units; `y`
/// grows downwards, matching the south direction of [`crate::mesh`].
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Raster {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            width * height,
            "raster data length {} does not match {}x{}",
            data.len(),
            width,
            height
        );
        Self { width, height, data }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self::new(width, height, vec![value; width * height])
    }

    /// Evaluates `f(x, y)` at every pixel index.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn same_shape(&self, other: &Raster) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Bilinear interpolation at fractional pixel-index coordinates, or `None`
    /// outside the hull of pixel centres `[0, w-1] x [0, h-1]`.
    pub fn bilinear(&self, x: f64, y: f64) -> Option<f64> {
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        if !(0.0..=max_x).contains(&x) || !(0.0..=max_y).contains(&y) {
            return None;
        }
        let x0 = crate::math::floor(x) as usize;
        let y0 = crate::math::floor(y) as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let top = (1.0 - fx) * self.get(x0, y0) + fx * self.get(x1, y0);
        let bottom = (1.0 - fx) * self.get(x0, y1) + fx * self.get(x1, y1);
        Some((1.0 - fy) * top + fy * bottom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_reproduces_affine() {
        let r = Raster::from_fn(5, 4, |x, y| 0.5 + 0.1 * x as f64 - 0.2 * y as f64);
        let v = r.bilinear(1.25, 2.5).unwrap();
        assert!((v - (0.5 + 0.125 - 0.5)).abs() < 1e-14);
        assert_eq!(r.bilinear(4.0, 3.0), Some(r.get(4, 3)));
        assert!(r.bilinear(4.01, 0.0).is_none());
        assert!(r.bilinear(-0.01, 0.0).is_none());
    }
}
