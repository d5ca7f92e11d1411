//! Procedural sprite scenes with exact ground truth.
//!
//! Each object is a textured disc whose pattern (sector colours, hub, ring) is
//! derived from its id. Queries composite a rotated, rescaled and
//! gain-adjusted sprite over a smooth value-noise background and add Gaussian
//! pixel noise. Reference views show the sprite at a fixed size on flat gray.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::{Rotation3, SquareBox};
use crate::image::Image;

/// Deterministic RNG for a named sub-stream of `seed`.
pub fn stream_rng(seed: u64, name: &str, index: u64) -> ChaCha8Rng {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in name.as_bytes().iter().chain(&index.to_le_bytes()) {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(h);
    rng
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SceneSpec {
    pub seed: u64,
    pub object_id: u32,
    /// `(u, v)` of the object centre, pixels.
    pub center: [f64; 2],
    /// Side of the square box enclosing the sprite disc, pixels.
    pub size: f64,
    /// In-plane rotation about the optical axis, degrees.
    pub rotation_deg: f64,
    pub background_id: u32,
    pub illumination_gain: f64,
    pub noise_sigma: f64,
    pub width: usize,
    pub height: usize,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::param("frame dims must be >= 1"));
        }
        if !(self.size >= 8.0) {
            return Err(Error::param(alloc::format!("object size {} is below 8 px", self.size)));
        }
        let b = self.truth();
        let (x0, y0, x1, y1) = b.extents();
        if !(x0 >= 0.0 && y0 >= 0.0 && x1 <= self.width as f64 && y1 <= self.height as f64) {
            return Err(Error::param(alloc::format!(
                "object box at {:?} size {} leaves the {}x{} frame",
                self.center,
                self.size,
                self.width,
                self.height
            )));
        }
        if !(0.5..=2.0).contains(&self.illumination_gain) {
            return Err(Error::param("illumination gain must lie in [0.5, 2.0]"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::param("noise sigma must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn truth(&self) -> SquareBox {
        SquareBox::new(self.center, self.size)
    }

    pub fn rotation(&self) -> Rotation3 {
        Rotation3::about_z(self.rotation_deg.to_radians())
    }
}

/// Procedural pattern of one object id: a disc split into radial bands and
/// angular sectors, each cell with its own colour, plus an off-centre spot.
#[derive(Debug, Clone)]
pub struct Sprite {
    /// Outer radius of each band, increasing, the last one 1.
    bands: Vec<f64>,
    sectors: usize,
    /// `bands.len() × sectors` colours, band-major.
    cells: Vec<[f32; 3]>,
    phase: f64,
    spot: ([f64; 2], f64, [f32; 3]),
}

fn random_color(rng: &mut ChaCha8Rng) -> [f32; 3] {
    // full range: under strong gain some cells saturate, which keeps contrast
    // differences between cells visible at every illumination
    [rng.random_range(10.0..245.0), rng.random_range(10.0..245.0), rng.random_range(10.0..245.0)]
}

impl Sprite {
    pub fn new(object_id: u32) -> Self {
        let mut rng = stream_rng(object_id as u64, "sprite", 0);
        let bands = alloc::vec![rng.random_range(0.3..0.4), rng.random_range(0.62..0.72), 1.0];
        let sectors = rng.random_range(3..=4);
        let cells = (0..bands.len() * sectors).map(|_| random_color(&mut rng)).collect();
        Sprite {
            bands,
            sectors,
            cells,
            phase: rng.random_range(0.0..2.0 * PI),
            spot: (
                [rng.random_range(-0.4..0.4), rng.random_range(0.35..0.5)],
                rng.random_range(0.12..0.2),
                random_color(&mut rng),
            ),
        }
    }

    /// Colour at local coordinates `(x, y)` in units of the disc radius, or
    /// `None` outside the disc.
    pub fn color_at(&self, x: f64, y: f64) -> Option<[f32; 3]> {
        let r = libm::sqrt(x * x + y * y);
        if r > 1.0 {
            return None;
        }
        let (sx, sy) = (x - self.spot.0[0], y - self.spot.0[1]);
        if sx * sx + sy * sy <= self.spot.1 * self.spot.1 {
            return Some(self.spot.2);
        }
        let band = self.bands.iter().position(|&b| r <= b).unwrap_or(self.bands.len() - 1);
        let mut a = libm::atan2(y, x) + self.phase;
        a -= 2.0 * PI * libm::floor(a / (2.0 * PI));
        let sector = (((a / (2.0 * PI)) * self.sectors as f64) as usize).min(self.sectors - 1);
        Some(self.cells[band * self.sectors + sector])
    }
}

/// Smooth two-octave value-noise texture.
#[derive(Debug, Clone)]
pub struct Background {
    lattice: Vec<f64>,
    cells: usize,
    period: f64,
    colors: [[f64; 3]; 2],
    detail: f64,
}

impl Background {
    pub fn new(background_id: u32) -> Self {
        let mut rng = stream_rng(background_id as u64, "background", 0);
        let cells = 24;
        let lattice = (0..cells * cells).map(|_| rng.random_range(0.0..1.0)).collect();
        let pick = |rng: &mut ChaCha8Rng| [rng.random_range(60.0..200.0), rng.random_range(60.0..200.0), rng.random_range(60.0..200.0)];
        let colors = [pick(&mut rng), pick(&mut rng)];
        Background { lattice, cells, period: rng.random_range(28.0..56.0), colors, detail: rng.random_range(0.15..0.35) }
    }

    fn value(&self, x: f64, y: f64) -> f64 {
        let n = self.cells;
        let (fx, fy) = (libm::floor(x), libm::floor(y));
        let (tx, ty) = (x - fx, y - fy);
        let (sx, sy) = (tx * tx * (3.0 - 2.0 * tx), ty * ty * (3.0 - 2.0 * ty));
        let at = |i: f64, j: f64| {
            let (i, j) = ((i as i64).rem_euclid(n as i64) as usize, (j as i64).rem_euclid(n as i64) as usize);
            self.lattice[j * n + i]
        };
        let top = at(fx, fy) * (1.0 - sx) + at(fx + 1.0, fy) * sx;
        let bot = at(fx, fy + 1.0) * (1.0 - sx) + at(fx + 1.0, fy + 1.0) * sx;
        top * (1.0 - sy) + bot * sy
    }

    pub fn color_at(&self, x: f64, y: f64) -> [f64; 3] {
        let t = (1.0 - self.detail) * self.value(x / self.period, y / self.period)
            + self.detail * self.value(x / (self.period / 4.0) + 7.3, y / (self.period / 4.0) + 3.1);
        let [a, b] = self.colors;
        [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t]
    }
}

/// Flat gray used behind reference views.
pub const REFERENCE_GRAY: [u8; 3] = [128, 128, 128];
/// `background_id` that selects the flat reference gray instead of a texture.
pub const FLAT_BACKGROUND: u32 = u32::MAX;

enum Backdrop<'a> {
    Flat([u8; 3]),
    Texture(&'a Background),
}

fn composite(
    width: usize,
    height: usize,
    sprite: &Sprite,
    center: [f64; 2],
    size: f64,
    rotation_deg: f64,
    gain: f64,
    backdrop: Backdrop<'_>,
) -> Result<Image> {
    let radius = size / 2.0;
    let (s, c) = (libm::sin(-rotation_deg.to_radians()), libm::cos(-rotation_deg.to_radians()));
    Image::from_fn(width, height, |px, py| {
        let bg = match &backdrop {
            Backdrop::Flat(p) => [p[0] as f64, p[1] as f64, p[2] as f64],
            Backdrop::Texture(t) => t.color_at(px as f64 + 0.5, py as f64 + 0.5),
        };
        let (dx, dy) = (px as f64 + 0.5 - center[0], py as f64 + 0.5 - center[1]);
        let r = libm::sqrt(dx * dx + dy * dy);
        // one-pixel feathered disc edge
        let alpha = (radius - r + 0.5).clamp(0.0, 1.0);
        let mut out = bg;
        if alpha > 0.0 {
            let (lx, ly) = ((c * dx - s * dy) / radius, (s * dx + c * dy) / radius);
            let scale = 1.0 / libm::sqrt(lx * lx + ly * ly).max(1.0);
            if let Some(col) = sprite.color_at(lx * scale, ly * scale) {
                for k in 0..3 {
                    let fg = (col[k] as f64 * gain).min(255.0);
                    out[k] = alpha * fg + (1.0 - alpha) * bg[k];
                }
            }
        }
        [to_u8(out[0]), to_u8(out[1]), to_u8(out[2])]
    })
}

#[inline]
fn to_u8(v: f64) -> u8 {
    libm::round(v).clamp(0.0, 255.0) as u8
}

/// Renders a query scene. Returns the image and its ground-truth box.
pub fn generate_scene(spec: &SceneSpec) -> Result<(Image, SquareBox)> {
    spec.validate()?;
    let sprite = Sprite::new(spec.object_id);
    let texture = (spec.background_id != FLAT_BACKGROUND).then(|| Background::new(spec.background_id));
    let backdrop = match &texture {
        Some(t) => Backdrop::Texture(t),
        None => Backdrop::Flat(REFERENCE_GRAY),
    };
    let mut img = composite(
        spec.width,
        spec.height,
        &sprite,
        spec.center,
        spec.size,
        spec.rotation_deg,
        spec.illumination_gain,
        backdrop,
    )?;
    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma).map_err(|_| Error::param("invalid noise sigma"))?;
        let mut rng = stream_rng(spec.seed, "noise", spec.object_id as u64);
        let (w, h) = (img.width(), img.height());
        for y in 0..h {
            for x in 0..w {
                let p = img.pixel(x, y);
                let mut q = [0u8; 3];
                for k in 0..3 {
                    let n: f64 = normal.sample(&mut rng);
                    q[k] = to_u8(p[k] as f64 + n);
                }
                img.set_pixel(x, y, q);
            }
        }
    }
    Ok((img, spec.truth()))
}

/// Reference views of one object at evenly spaced in-plane angles.
#[derive(Debug, Clone)]
pub struct ReferenceViews {
    pub images: Vec<Image>,
    pub rotations: Vec<Rotation3>,
    pub angles_deg: Vec<f64>,
    /// Object box in each view (identical across views).
    pub boxes: Vec<SquareBox>,
    pub s_r: f64,
}

/// Side of the square frame used for reference views of size `s_r`.
pub fn reference_frame(s_r: f64) -> usize {
    libm::round(3.0 * s_r) as usize
}

pub fn generate_reference_set(object_id: u32, n_refs: usize, s_r: f64) -> Result<ReferenceViews> {
    if n_refs < 1 {
        return Err(Error::param("at least one reference view is required"));
    }
    if !(s_r >= 8.0) {
        return Err(Error::param("reference size must be >= 8 px"));
    }
    let frame = reference_frame(s_r);
    let center = [frame as f64 / 2.0, frame as f64 / 2.0];
    let sprite = Sprite::new(object_id);
    let angles_deg: Vec<f64> = (0..n_refs).map(|i| 360.0 * i as f64 / n_refs as f64).collect();
    let images = angles_deg
        .iter()
        .map(|&a| composite(frame, frame, &sprite, center, s_r, a, 1.0, Backdrop::Flat(REFERENCE_GRAY)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ReferenceViews {
        images,
        rotations: angles_deg.iter().map(|a| Rotation3::about_z(a.to_radians())).collect(),
        boxes: alloc::vec![SquareBox::new(center, s_r); n_refs],
        angles_deg,
        s_r,
    })
}

/// Distribution of query scene parameters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SceneSampling {
    pub width: usize,
    pub height: usize,
    pub size_range: [f64; 2],
    pub gain_range: [f64; 2],
    pub noise_range: [f64; 2],
    pub n_backgrounds: u32,
}

impl Default for SceneSampling {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            size_range: [24.0, 96.0],
            gain_range: [0.5, 2.0],
            noise_range: [0.0, 6.0],
            n_backgrounds: 16,
        }
    }
}

/// Scene `index` of `object_id`. With `scale_ratio = 1` the size is the base
/// draw from `size_range`; otherwise it is redrawn from `[s/p, s·p]` on a
/// separate stream and clamped to fit the frame, leaving every other
/// parameter unchanged.
pub fn sample_scene(seed: u64, object_id: u32, index: u64, sampling: &SceneSampling, scale_ratio: f64) -> Result<SceneSpec> {
    if !(scale_ratio >= 1.0) {
        return Err(Error::param("scale ratio must be >= 1"));
    }
    let mut rng = stream_rng(seed, "scene", ((object_id as u64) << 32) | index);
    let [lo, hi] = sampling.size_range;
    let base = rng.random_range(lo..=hi);
    let fu: f64 = rng.random_range(0.0..=1.0);
    let fv: f64 = rng.random_range(0.0..=1.0);
    let rotation_deg = rng.random_range(0.0..360.0);
    let background_id = rng.random_range(0..sampling.n_backgrounds.max(1));
    let illumination_gain = rng.random_range(sampling.gain_range[0]..=sampling.gain_range[1]);
    let noise_sigma = rng.random_range(sampling.noise_range[0]..=sampling.noise_range[1]);

    let max_side = sampling.width.min(sampling.height) as f64;
    let size = if scale_ratio > 1.0 {
        let mut sweep = stream_rng(seed, "sweep", ((object_id as u64) << 32) | index);
        sweep.random_range(base / scale_ratio..=base * scale_ratio).clamp(8.0, max_side)
    } else {
        base
    };
    let center = [
        size / 2.0 + fu * (sampling.width as f64 - size),
        size / 2.0 + fv * (sampling.height as f64 - size),
    ];
    let spec = SceneSpec {
        seed,
        object_id,
        center,
        size,
        rotation_deg,
        background_id,
        illumination_gain,
        noise_sigma,
        width: sampling.width,
        height: sampling.height,
    };
    spec.validate()?;
    Ok(spec)
}
