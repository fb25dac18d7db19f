/// Row-major interleaved RGB buffer.
///
/// Stored images hold unit-interval, gamma-encoded values. Intermediate
/// linear-space buffers produced with clipping disabled may exceed 1; use
/// [`Image::is_unit`] to check.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

#[inline]
pub fn quantize(v: f32) -> u8 {
    (f64::from(v).clamp(0.0, 1.0) * 255.0).round() as u8
}

#[inline]
pub fn dequantize(q: u8) -> f32 {
    f32::from(q) / 255.0
}

impl Image {
    pub fn new(height: usize, width: usize) -> Self {
        Self { height, width, data: vec![0.0; height * width * 3] }
    }

    pub fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(height * width * 3);
        for _ in 0..height * width {
            data.extend_from_slice(&rgb);
        }
        Self { height, width, data }
    }

    /// Wraps an interleaved buffer. Panics if the length is not `h*w*3`.
    pub fn from_raw(height: usize, width: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), height * width * 3, "pixel buffer length mismatch");
        Self { height, width, data }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(y, x));
            }
        }
        Self { height, width, data }
    }

    pub fn from_bytes(height: usize, width: usize, bytes: &[u8]) -> Self {
        assert_eq!(bytes.len(), height * width * 3);
        Self { height, width, data: bytes.iter().map(|&q| dequantize(q)).collect() }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize(v)).collect()
    }

    /// Snaps every channel onto the 8-bit grid used by the dataset format.
    pub fn quantized(&self) -> Image {
        Image { height: self.height, width: self.width, data: self.data.iter().map(|&v| dequantize(quantize(v))).collect() }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_raw(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, y: usize, x: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn pixels(&self) -> impl Iterator<Item = [f32; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    pub fn map_pixels(&self, mut f: impl FnMut([f32; 3]) -> [f32; 3]) -> Image {
        let mut data = Vec::with_capacity(self.data.len());
        for p in self.pixels() {
            data.extend_from_slice(&f(p));
        }
        Image { height: self.height, width: self.width, data }
    }

    /// Per-channel mean in f64.
    pub fn channel_means(&self) -> [f64; 3] {
        let mut acc = [0.0f64; 3];
        for p in self.data.chunks_exact(3) {
            for c in 0..3 {
                acc[c] += f64::from(p[c]);
            }
        }
        let n = self.pixel_count().max(1) as f64;
        acc.map(|s| s / n)
    }

    pub fn is_unit(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }

    /// Nearest-neighbour resize.
    pub fn resize_nearest(&self, height: usize, width: usize) -> Image {
        if (height, width) == self.dims() {
            return self.clone();
        }
        Image::from_fn(height, width, |y, x| {
            let sy = (y * self.height) / height;
            let sx = (x * self.width) / width;
            self.pixel(sy, sx)
        })
    }

    pub fn max_abs_diff(&self, other: &Image) -> f32 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max)
    }

    pub fn mean_abs_diff(&self, other: &Image) -> f64 {
        let s: f64 = self.data.iter().zip(&other.data).map(|(a, b)| f64::from((a - b).abs())).sum();
        s / self.data.len().max(1) as f64
    }
}
