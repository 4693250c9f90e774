//! Pixel-level primitives: RGB buffers, binary masks, affine warping, hard
//! alpha compositing and exact integer mean-stacking.
//!
//! Coordinates are continuous with pixel `(i, j)` covering `[i, i+1) × [j, j+1)`,
//! so its center sits at `(i + 0.5, j + 0.5)`.

use std::path::Path;

use crate::error::{Error, Result};

pub const CHANNELS: usize = 3;

/// Threshold applied to mask samples on ingestion.
pub const MASK_THRESHOLD: u8 = 128;

/// Row-major interleaved 8-bit RGB image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimensions(format!("{width}x{height}")));
        }
        if data.len() != width * height * CHANNELS {
            return Err(Error::Dimensions(format!(
                "{width}x{height} RGB needs {} samples, got {}",
                width * height * CHANNELS,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(width * height * CHANNELS)
            .collect();
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * CHANNELS;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * CHANNELS;
        self.data[i..i + CHANNELS].copy_from_slice(&rgb);
    }

    /// Sub-image covering columns `x0..x0+w` and rows `y0..y0+h`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::Dimensions(format!(
                "crop {w}x{h}+{x0}+{y0} outside {}x{}",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(w * h * CHANNELS);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * CHANNELS;
            data.extend_from_slice(&self.data[start..start + w * CHANNELS]);
        }
        Self::new(w, h, data)
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                out.set_pixel(self.width - 1 - x, y, self.pixel(x, y));
            }
        }
        out
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })?
            .to_rgb8();
        let (w, h) = img.dimensions();
        Self::new(w as usize, h as usize, img.into_raw())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        image::save_buffer(
            path,
            &self.data,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::Rgb8,
        )
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Binary mask; every sample is 0 or 255.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskBuffer {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl MaskBuffer {
    /// Builds a mask, thresholding samples at [`MASK_THRESHOLD`].
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimensions(format!("{width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::Dimensions(format!(
                "{width}x{height} mask needs {} samples, got {}",
                width * height,
                data.len()
            )));
        }
        let data = data
            .into_iter()
            .map(|v| if v >= MASK_THRESHOLD { 255 } else { 0 })
            .collect();
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, on: bool) -> Result<Self> {
        Self::new(width, height, vec![if on { 255 } else { 0 }; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn is_on(&self, x: usize, y: usize) -> bool {
        self.get(x, y) != 0
    }

    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.data[y * self.width + x] = if on { 255 } else { 0 };
    }

    pub fn count_on(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Inclusive bounding box `(x_min, y_min, x_max, y_max)` of the on-pixels.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bbox: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.is_on(x, y) {
                    bbox = Some(match bbox {
                        None => (x, y, x, y),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                    });
                }
            }
        }
        bbox
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::Dimensions(format!(
                "crop {w}x{h}+{x0}+{y0} outside {}x{}",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            let start = y * self.width + x0;
            data.extend_from_slice(&self.data[start..start + w]);
        }
        Self::new(w, h, data)
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                out.data[y * self.width + (self.width - 1 - x)] = self.get(x, y);
            }
        }
        out
    }

    /// Loads a single-channel or replicated-channel PNG and thresholds it.
    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })?
            .to_luma8();
        let (w, h) = img.dimensions();
        Self::new(w as usize, h as usize, img.into_raw())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        image::save_buffer(
            path,
            &self.data,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::L8,
        )
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// A cut-out segment: pixels, binary alpha and a reference point (the feet).
#[derive(Clone, Debug, PartialEq)]
pub struct Sprite {
    pub pixels: ImageBuffer,
    pub alpha: MaskBuffer,
    pub anchor: (f64, f64),
}

impl Sprite {
    pub fn new(pixels: ImageBuffer, alpha: MaskBuffer, anchor: (f64, f64)) -> Result<Self> {
        if pixels.dims() != alpha.dims() {
            return Err(Error::DimensionMismatch {
                expected: pixels.dims(),
                actual: alpha.dims(),
            });
        }
        let (w, h) = pixels.dims();
        if !(0.0..=w as f64).contains(&anchor.0) || !(0.0..=h as f64).contains(&anchor.1) {
            return Err(Error::InvalidInput(format!(
                "anchor {anchor:?} outside sprite {w}x{h}"
            )));
        }
        Ok(Self {
            pixels,
            alpha,
            anchor,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.pixels.dims()
    }
}

/// `(x, y) -> (a·x + b·y + c, d·x + e·y + f)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineTransform {
    pub m: [[f64; 3]; 2],
}

const SINGULAR_EPS: f64 = 1e-12;

impl AffineTransform {
    pub const IDENTITY: AffineTransform = AffineTransform {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
    };

    pub fn new(a: f64, b: f64, c: f64, d: f64, e: f64, f: f64) -> Self {
        Self {
            m: [[a, b, c], [d, e, f]],
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self::new(1.0, 0.0, tx, 0.0, 1.0, ty)
    }

    pub fn scale(sx: f64, sy: f64) -> Self {
        Self::new(sx, 0.0, 0.0, 0.0, sy, 0.0)
    }

    /// Rotation by `radians` (clockwise on screen, since y points down).
    pub fn rotation(radians: f64) -> Self {
        let (s, c) = radians.sin_cos();
        Self::new(c, -s, 0.0, s, c, 0.0)
    }

    /// Maps `from` onto `to` after scaling by `scale` and rotating by `radians`
    /// about `from`.
    pub fn pinned(from: (f64, f64), to: (f64, f64), scale: f64, radians: f64) -> Self {
        AffineTransform::translation(to.0, to.1)
            .then_after(&AffineTransform::rotation(radians))
            .then_after(&AffineTransform::scale(scale, scale))
            .then_after(&AffineTransform::translation(-from.0, -from.1))
    }

    /// `self ∘ inner`: applies `inner` first.
    pub fn then_after(&self, inner: &AffineTransform) -> AffineTransform {
        let [[a, b, c], [d, e, f]] = self.m;
        let [[p, q, r], [s, t, u]] = inner.m;
        AffineTransform::new(
            a * p + b * s,
            a * q + b * t,
            a * r + b * u + c,
            d * p + e * s,
            d * q + e * t,
            d * r + e * u + f,
        )
    }

    pub fn determinant(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn is_invertible(&self) -> bool {
        let det = self.determinant();
        det.is_finite() && det.abs() > SINGULAR_EPS
    }

    pub fn inverse(&self) -> Result<AffineTransform> {
        if !self.is_invertible() {
            return Err(Error::NonInvertible);
        }
        let [[a, b, c], [d, e, f]] = self.m;
        let det = self.determinant();
        let (ia, ib, id, ie) = (e / det, -b / det, -d / det, a / det);
        Ok(AffineTransform::new(
            ia,
            ib,
            -(ia * c + ib * f),
            id,
            ie,
            -(id * c + ie * f),
        ))
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let [[a, b, c], [d, e, f]] = self.m;
        (a * x + b * y + c, d * x + e * y + f)
    }
}

#[inline]
fn quantize(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Bilinear sample at continuous index-space location `(u, v)` with edge clamping.
#[inline]
fn sample_bilinear(img: &ImageBuffer, u: f64, v: f64) -> [u8; 3] {
    let (w, h) = (img.width as isize, img.height as isize);
    let x0f = u.floor();
    let y0f = v.floor();
    let fx = u - x0f;
    let fy = v - y0f;
    let x0 = (x0f as isize).clamp(0, w - 1) as usize;
    let x1 = (x0f as isize + 1).clamp(0, w - 1) as usize;
    let y0 = (y0f as isize).clamp(0, h - 1) as usize;
    let y1 = (y0f as isize + 1).clamp(0, h - 1) as usize;
    let p00 = img.pixel(x0, y0);
    let p10 = img.pixel(x1, y0);
    let p01 = img.pixel(x0, y1);
    let p11 = img.pixel(x1, y1);
    let mut out = [0u8; 3];
    for ch in 0..CHANNELS {
        let top = (1.0 - fx) * p00[ch] as f64 + fx * p10[ch] as f64;
        let bottom = (1.0 - fx) * p01[ch] as f64 + fx * p11[ch] as f64;
        out[ch] = quantize((1.0 - fy) * top + fy * bottom);
    }
    out
}

/// Warps `src` through `t` onto a canvas of the requested size.
///
/// Every output pixel center is inverse-mapped into the source. Alpha takes the
/// nearest source sample (so it stays binary) and is 0 outside the source;
/// color is bilinear with edge clamping where alpha is on and 0 elsewhere.
pub fn affine_warp(
    src: &Sprite,
    t: &AffineTransform,
    out_width: usize,
    out_height: usize,
) -> Result<Sprite> {
    if out_width == 0 || out_height == 0 {
        return Err(Error::Dimensions(format!("{out_width}x{out_height}")));
    }
    let inv = t.inverse()?;
    let (sw, sh) = src.dims();
    let mut pixels = vec![0u8; out_width * out_height * CHANNELS];
    let mut alpha = vec![0u8; out_width * out_height];

    // Only the (slightly padded) forward image of the source rectangle can land
    // inside the source.
    let corners = [
        t.apply(0.0, 0.0),
        t.apply(sw as f64, 0.0),
        t.apply(0.0, sh as f64),
        t.apply(sw as f64, sh as f64),
    ];
    let min_x = corners.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
    let max_x = corners.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max);
    let min_y = corners.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let max_y = corners.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    let clamp_range = |lo: f64, hi: f64, n: usize| -> (usize, usize) {
        if !lo.is_finite() || !hi.is_finite() {
            return (0, n);
        }
        let lo = (lo.floor() - 1.0).clamp(0.0, n as f64) as usize;
        let hi = (hi.ceil() + 1.0).clamp(0.0, n as f64) as usize;
        (lo, hi)
    };
    let (x_lo, x_hi) = clamp_range(min_x, max_x, out_width);
    let (y_lo, y_hi) = clamp_range(min_y, max_y, out_height);

    for oy in y_lo..y_hi {
        for ox in x_lo..x_hi {
            let (px, py) = inv.apply(ox as f64 + 0.5, oy as f64 + 0.5);
            if !(px >= 0.0 && py >= 0.0 && px < sw as f64 && py < sh as f64) {
                continue;
            }
            let (sx, sy) = (px.floor() as usize, py.floor() as usize);
            if sx >= sw || sy >= sh || !src.alpha.is_on(sx, sy) {
                continue;
            }
            let rgb = sample_bilinear(&src.pixels, px - 0.5, py - 0.5);
            let o = oy * out_width + ox;
            alpha[o] = 255;
            pixels[o * CHANNELS..o * CHANNELS + CHANNELS].copy_from_slice(&rgb);
        }
    }

    Ok(Sprite {
        pixels: ImageBuffer::new(out_width, out_height, pixels)?,
        alpha: MaskBuffer::new(out_width, out_height, alpha)?,
        anchor: t.apply(src.anchor.0, src.anchor.1),
    })
}

/// Hard binary paste: sprite pixel where alpha is on, background elsewhere.
pub fn alpha_composite(background: &ImageBuffer, sprite: &Sprite) -> Result<ImageBuffer> {
    if background.dims() != sprite.dims() {
        return Err(Error::DimensionMismatch {
            expected: background.dims(),
            actual: sprite.dims(),
        });
    }
    let mut out = background.clone();
    let src = sprite.pixels.data();
    for (i, &a) in sprite.alpha.data().iter().enumerate() {
        if a != 0 {
            out.data[i * CHANNELS..(i + 1) * CHANNELS]
                .copy_from_slice(&src[i * CHANNELS..(i + 1) * CHANNELS]);
        }
    }
    Ok(out)
}

/// Round-half-up integer mean `sum / count`.
#[inline]
pub fn rounded_mean(sum: u32, count: u32) -> u8 {
    ((2 * sum as u64 + count as u64) / (2 * count as u64)) as u8
}

/// Per-sample arithmetic mean of equally sized frames, accumulated in integers.
pub fn mean_stack(frames: &[ImageBuffer]) -> Result<ImageBuffer> {
    let first = frames
        .first()
        .ok_or(Error::EmptySequence("mean_stack needs at least one frame"))?;
    let mut sums = vec![0u32; first.data.len()];
    for frame in frames {
        if frame.dims() != first.dims() {
            return Err(Error::DimensionMismatch {
                expected: first.dims(),
                actual: frame.dims(),
            });
        }
        for (s, &v) in sums.iter_mut().zip(&frame.data) {
            *s += v as u32;
        }
    }
    let n = frames.len() as u32;
    let data = sums.into_iter().map(|s| rounded_mean(s, n)).collect();
    ImageBuffer::new(first.width, first.height, data)
}

/// Bilinear resize (half-pixel centers, edge clamped) to `out_w × out_h`,
/// returned as planar RGB scaled to `[0, 1]`.
///
/// An image already at the target size maps to exactly `sample / 255`.
pub fn resize_normalized(img: &ImageBuffer, out_w: usize, out_h: usize) -> Vec<f32> {
    let (w, h) = img.dims();
    let plane = out_w * out_h;
    let mut out = vec![0f32; plane * CHANNELS];
    let sx = w as f64 / out_w as f64;
    let sy = h as f64 / out_h as f64;
    let axis = |o: usize, scale: f64, n: usize| -> (usize, usize, f64) {
        let s = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
        let i0 = (s.floor() as usize).min(n - 1);
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, s - i0 as f64)
    };
    let xs: Vec<_> = (0..out_w).map(|x| axis(x, sx, w)).collect();
    for y in 0..out_h {
        let (y0, y1, fy) = axis(y, sy, h);
        for (x, &(x0, x1, fx)) in xs.iter().enumerate() {
            let p00 = img.pixel(x0, y0);
            let p10 = img.pixel(x1, y0);
            let p01 = img.pixel(x0, y1);
            let p11 = img.pixel(x1, y1);
            for ch in 0..CHANNELS {
                let top = (1.0 - fx) * p00[ch] as f64 + fx * p10[ch] as f64;
                let bottom = (1.0 - fx) * p01[ch] as f64 + fx * p11[ch] as f64;
                let v = (1.0 - fy) * top + fy * bottom;
                out[ch * plane + y * out_w + x] = (v / 255.0) as f32;
            }
        }
    }
    out
}

/// Places images side by side on a shared canvas (top aligned, black fill).
pub fn concat_horizontal(images: &[ImageBuffer]) -> Result<ImageBuffer> {
    if images.is_empty() {
        return Err(Error::EmptySequence("concat_horizontal needs an image"));
    }
    let width: usize = images.iter().map(|i| i.width).sum();
    let height = images.iter().map(|i| i.height).max().unwrap_or(1);
    let mut out = ImageBuffer::filled(width, height, [0, 0, 0])?;
    let mut x0 = 0;
    for img in images {
        for y in 0..img.height {
            for x in 0..img.width {
                out.set_pixel(x0 + x, y, img.pixel(x, y));
            }
        }
        x0 += img.width;
    }
    Ok(out)
}
