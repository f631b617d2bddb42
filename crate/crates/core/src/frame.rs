use thiserror::Error;

/// Smallest accepted frame side, in pixels.
pub const MIN_FRAME_SIDE: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FrameError {
    #[error("frame {width}x{height} is smaller than {MIN_FRAME_SIDE}x{MIN_FRAME_SIDE}")]
    TooSmall { width: usize, height: usize },
    #[error("rgb buffer has {actual} bytes, expected {expected}")]
    BufferSize { expected: usize, actual: usize },
}

/// An 8-bit RGB frame with its derived luma plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    rgb: Vec<u8>,
    gray: Vec<u8>,
}

/// `round(0.299 R + 0.587 G + 0.114 B)` in exact integer arithmetic.
#[inline]
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
}

impl Frame {
    pub fn from_rgb(width: usize, height: usize, rgb: Vec<u8>) -> Result<Self, FrameError> {
        if width < MIN_FRAME_SIDE || height < MIN_FRAME_SIDE {
            return Err(FrameError::TooSmall { width, height });
        }
        let expected = width * height * 3;
        if rgb.len() != expected {
            return Err(FrameError::BufferSize {
                expected,
                actual: rgb.len(),
            });
        }
        let gray = rgb.chunks_exact(3).map(|p| luma(p[0], p[1], p[2])).collect();
        Ok(Self {
            width,
            height,
            rgb,
            gray,
        })
    }

    /// Gray frame replicated into all three channels.
    pub fn from_gray(width: usize, height: usize, gray: &[u8]) -> Result<Self, FrameError> {
        let rgb = gray.iter().flat_map(|&v| [v, v, v]).collect();
        Self::from_rgb(width, height, rgb)
    }

    /// Builds a frame by evaluating `f(x, y)` for every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Result<Self, FrameError> {
        let mut rgb = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                rgb.extend_from_slice(&f(x, y));
            }
        }
        Self::from_rgb(width, height, rgb)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn rgb(&self) -> &[u8] {
        &self.rgb
    }

    pub fn gray(&self) -> &[u8] {
        &self.gray
    }

    pub fn into_rgb(self) -> Vec<u8> {
        self.rgb
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    #[inline]
    pub fn gray_at(&self, x: usize, y: usize) -> u8 {
        self.gray[y * self.width + x]
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn luma_matches_rounded_weights() {
        for &(r, g, b) in &[(255, 255, 255), (0, 0, 0), (10, 200, 33), (250, 1, 128)] {
            let f = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
            assert_eq!(luma(r, g, b) as f64, f.round());
        }
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(matches!(
            Frame::from_rgb(8, 32, vec![0; 8 * 32 * 3]),
            Err(FrameError::TooSmall { .. })
        ));
        assert!(matches!(
            Frame::from_rgb(16, 16, vec![0; 10]),
            Err(FrameError::BufferSize { .. })
        ));
    }
}
