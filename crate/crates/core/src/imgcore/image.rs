use crate::error::{Error, Result};

/// A linear-light floating point image stored row-major with interleaved
/// channels (`data[(y * width + x) * channels + c]`).
///
/// Photographs, albedo and shading maps are nonnegative; normal maps are the
/// one exception and carry signed components, so nonnegativity is checked
/// where it matters rather than enforced here.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearImage {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl LinearImage {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "channel count must be 1 or 3, got {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::InvalidArgument(format!(
                "{height}x{width}x{channels} image needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinitePixel {
                index: index / channels,
            });
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Self {
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        assert!(value.is_finite());
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f32) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn same_dims(&self, other: &LinearImage) -> bool {
        self.dims() == other.dims()
    }

    pub fn same_size(&self, other: &LinearImage) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn is_nonnegative(&self) -> bool {
        self.data.iter().all(|&v| v >= 0.0)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> LinearImage {
        LinearImage {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..*self
        }
    }

    /// Applies `f` pairwise; both images must have identical dimensions.
    pub fn zip_map(&self, other: &LinearImage, f: impl Fn(f32, f32) -> f32) -> Result<LinearImage> {
        if !self.same_dims(other) {
            return Err(Error::shape(
                "zip_map",
                &[self.height, self.width, self.channels],
                &[other.height, other.width, other.channels],
            ));
        }
        Ok(LinearImage {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            ..*self
        })
    }

    pub fn scale(&self, s: f32) -> LinearImage {
        self.map(|v| v * s)
    }

    /// Rec. 709 luminance of a 3-channel image; single-channel images are returned as is.
    pub fn luminance(&self) -> LinearImage {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| (0.2126 * p[0] as f64 + 0.7152 * p[1] as f64 + 0.0722 * p[2] as f64) as f32)
            .collect();
        LinearImage {
            height: self.height,
            width: self.width,
            channels: 1,
            data,
        }
    }

    /// Replicates a single-channel image into three channels.
    pub fn to_rgb(&self) -> LinearImage {
        if self.channels == 3 {
            return self.clone();
        }
        let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
        LinearImage {
            height: self.height,
            width: self.width,
            channels: 3,
            data,
        }
    }

    pub fn max_value(&self) -> f32 {
        self.data.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    pub fn min_value(&self) -> f32 {
        self.data.iter().copied().fold(f32::INFINITY, f32::min)
    }

    /// Mean over all values, accumulated in 64 bits.
    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len().max(1) as f64
    }

    /// Raw little-endian bytes of the payload, used for content hashing.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }
}

/// Sorted median of a sample (mean of the two middle values for even counts).
pub(crate) fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Value at the given quantile (nearest-rank on the sorted sample).
pub(crate) fn quantile(values: &[f32], q: f64) -> f32 {
    assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}
