//! Image quality (PSNR, MSSIM), flow errors (endpoint, angular) and the
//! colour-wheel visualisation of flow fields.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{acos, atan2, floor, hypot, log10, sqrt};
use crate::raster::Raster;

/// Flow components above this magnitude mark unknown ground truth.
pub const UNKNOWN_FLOW_THRESHOLD: f64 = 1e9;

/// Side of the square SSIM window.
pub const SSIM_WINDOW: usize = 7;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// Dense two-component flow on a pixel grid, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    data: Vec<[f64; 2]>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, data: Vec<[f64; 2]>) -> Self {
        assert_eq!(data.len(), width * height, "flow data length");
        Self { width, height, data }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::new(width, height, vec![[0.0; 2]; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 2]) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    /// Builds a flow from its two component rasters.
    pub fn from_components(u: &Raster, v: &Raster) -> Self {
        assert!(u.same_shape(v));
        let data = u.data().iter().zip(v.data()).map(|(&a, &b)| [a, b]).collect();
        Self::new(u.width(), u.height(), data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 2] {
        self.data[y * self.width + x]
    }

    pub fn data(&self) -> &[[f64; 2]] {
        &self.data
    }

    pub fn component(&self, k: usize) -> Raster {
        Raster::new(self.width, self.height, self.data.iter().map(|p| p[k]).collect())
    }
}

pub fn is_unknown(p: [f64; 2]) -> bool {
    !(p[0].abs() <= UNKNOWN_FLOW_THRESHOLD && p[1].abs() <= UNKNOWN_FLOW_THRESHOLD)
}

/// 8-bit RGB image, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[u8; 3]>,
}

/// `10 log10(1 / MSE)`; `+inf` for identical images.
pub fn psnr(u: &Raster, reference: &Raster) -> f64 {
    assert!(u.same_shape(reference), "psnr needs equally sized images");
    let n = u.len() as f64;
    let mse = u.data().iter().zip(reference.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * log10(1.0 / mse)
    }
}

/// Mean SSIM over all `7 x 7` windows (stride 1, uniform weights, population
/// statistics). The window shrinks to the image for images smaller than 7.
pub fn mssim(u: &Raster, reference: &Raster) -> f64 {
    assert!(u.same_shape(reference), "mssim needs equally sized images");
    let wx = SSIM_WINDOW.min(u.width());
    let wy = SSIM_WINDOW.min(u.height());
    let npx = (wx * wy) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for y0 in 0..=u.height() - wy {
        for x0 in 0..=u.width() - wx {
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for y in y0..y0 + wy {
                for x in x0..x0 + wx {
                    let a = u.get(x, y);
                    let b = reference.get(x, y);
                    sa += a;
                    sb += b;
                    saa += a * a;
                    sbb += b * b;
                    sab += a * b;
                }
            }
            let ma = sa / npx;
            let mb = sb / npx;
            let va = (saa / npx - ma * ma).max(0.0);
            let vb = (sbb / npx - mb * mb).max(0.0);
            let cov = sab / npx - ma * mb;
            total += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
            count += 1;
        }
    }
    total / count as f64
}

/// Mean and population standard deviation over the known pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorStats {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

fn stats(values: &[Option<f64>]) -> ErrorStats {
    let known: Vec<f64> = values.iter().flatten().copied().collect();
    let count = known.len();
    if count == 0 {
        return ErrorStats { mean: f64::NAN, std: f64::NAN, count };
    }
    let mean = known.iter().sum::<f64>() / count as f64;
    let var = known.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / count as f64;
    ErrorStats { mean, std: sqrt(var), count }
}

/// Per-pixel Euclidean distance to the ground truth (`None` where unknown).
pub fn endpoint_error(flow: &FlowField, gt: &FlowField) -> (Vec<Option<f64>>, ErrorStats) {
    assert!(flow.width == gt.width && flow.height == gt.height);
    let e: Vec<Option<f64>> = flow
        .data
        .iter()
        .zip(&gt.data)
        .map(|(u, g)| (!is_unknown(*g)).then(|| hypot(u[0] - g[0], u[1] - g[1])))
        .collect();
    let s = stats(&e);
    (e, s)
}

/// Angle between the space-time vectors `(u, 1)` and `(g, 1)`, in radians.
pub fn angular_error(flow: &FlowField, gt: &FlowField) -> (Vec<Option<f64>>, ErrorStats) {
    assert!(flow.width == gt.width && flow.height == gt.height);
    let e: Vec<Option<f64>> = flow
        .data
        .iter()
        .zip(&gt.data)
        .map(|(u, g)| {
            (!is_unknown(*g)).then(|| {
                let num = 1.0 + u[0] * g[0] + u[1] * g[1];
                let den = sqrt(1.0 + u[0] * u[0] + u[1] * u[1]) * sqrt(1.0 + g[0] * g[0] + g[1] * g[1]);
                acos((num / den).clamp(-1.0, 1.0))
            })
        })
        .collect();
    let s = stats(&e);
    (e, s)
}

fn color_wheel() -> Vec<[f64; 3]> {
    let segments: [(usize, [f64; 3], [f64; 3]); 6] = [
        (15, [255.0, 0.0, 0.0], [0.0, 255.0, 0.0]),
        (6, [255.0, 255.0, 0.0], [-255.0, 0.0, 0.0]),
        (4, [0.0, 255.0, 0.0], [0.0, 0.0, 255.0]),
        (11, [0.0, 255.0, 255.0], [0.0, -255.0, 0.0]),
        (13, [0.0, 0.0, 255.0], [255.0, 0.0, 0.0]),
        (6, [255.0, 0.0, 255.0], [0.0, 0.0, -255.0]),
    ];
    let mut wheel = Vec::with_capacity(55);
    for (n, base, slope) in segments {
        for i in 0..n {
            let t = floor(i as f64 * 255.0 / n as f64) / 255.0;
            wheel.push([base[0] + slope[0] * t, base[1] + slope[1] * t, base[2] + slope[2] * t]);
        }
    }
    wheel
}

/// Colour of the normalised flow vector `(fx, fy)`: hue from direction,
/// saturation from magnitude, white at zero.
pub fn wheel_color(fx: f64, fy: f64) -> [u8; 3] {
    let wheel = color_wheel();
    let ncols = wheel.len();
    let rad = sqrt(fx * fx + fy * fy);
    let a = atan2(-fy, -fx) / core::f64::consts::PI;
    let fk = (a + 1.0) / 2.0 * (ncols - 1) as f64;
    let k0 = floor(fk) as usize % ncols;
    let k1 = (k0 + 1) % ncols;
    let f = fk - floor(fk);
    let mut out = [0u8; 3];
    for b in 0..3 {
        let c0 = wheel[k0][b] / 255.0;
        let c1 = wheel[k1][b] / 255.0;
        let mut col = (1.0 - f) * c0 + f * c1;
        if rad <= 1.0 {
            col = 1.0 - rad * (1.0 - col);
        } else {
            col *= 0.75;
        }
        out[b] = floor(255.0 * col) as u8;
    }
    out
}

/// Colour-wheel rendering normalised by `max_mag` (default: the largest
/// known magnitude). Unknown pixels are black.
pub fn flow_to_color(flow: &FlowField, max_mag: Option<f64>) -> RgbImage {
    let max = max_mag.unwrap_or_else(|| {
        flow.data.iter().filter(|p| !is_unknown(**p)).map(|p| sqrt(p[0] * p[0] + p[1] * p[1])).fold(0.0, f64::max)
    });
    let scale = if max > 0.0 { 1.0 / max } else { 1.0 };
    let data = flow
        .data
        .iter()
        .map(|p| if is_unknown(*p) { [0, 0, 0] } else { wheel_color(p[0] * scale, p[1] * scale) })
        .collect();
    RgbImage { width: flow.width, height: flow.height, data }
}
