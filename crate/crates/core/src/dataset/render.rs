//! Lambertian scenes of textured spheres in front of a floor and back wall,
//! lit by a camera-mounted point flash and a directional ambient light.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{SceneRecord, Split};
use crate::error::{Error, Result};
use crate::formation::{compose_flash_photograph, AmbientLight, IntrinsicComponents, ShadingMap, K_MAX, K_MIN};
use crate::imgcore::{quantile, LinearImage};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    /// Square image side in pixels.
    pub resolution: usize,
    /// Inclusive range of sphere counts.
    pub objects: (usize, usize),
    /// Inclusive range of ambient temperatures.
    pub kelvin: (f64, f64),
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            resolution: 64,
            objects: (1, 4),
            kelvin: (K_MIN, K_MAX),
        }
    }
}

impl SceneConfig {
    fn validate(&self) -> Result<()> {
        if self.resolution < 16 {
            return Err(Error::Config(format!("resolution must be >= 16, got {}", self.resolution)));
        }
        if self.objects.0 > self.objects.1 {
            return Err(Error::Config(format!("empty object range {:?}", self.objects)));
        }
        let (lo, hi) = self.kelvin;
        if !(K_MIN <= lo && lo <= hi && hi <= K_MAX) {
            return Err(Error::Config(format!("kelvin range {lo}..{hi} outside [{K_MIN}, {K_MAX}]")));
        }
        Ok(())
    }
}

type V3 = [f64; 3];

fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn scale(a: V3, s: f64) -> V3 {
    a.map(|v| v * s)
}

fn sub(a: V3, b: V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn normalize(a: V3) -> V3 {
    scale(a, 1.0 / dot(a, a).sqrt())
}

#[derive(Clone, Copy, Debug)]
enum Pattern {
    Waves { freq: f64, phase: f64 },
    Checker { freq: f64 },
    Stripes { freq: f64, angle: f64 },
}

/// Two colours blended by a piecewise-smooth pattern over surface coordinates.
#[derive(Clone, Copy, Debug)]
struct Texture {
    a: V3,
    b: V3,
    pattern: Pattern,
}

impl Texture {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let mut color = || std::array::from_fn(|_| rng.random_range(0.05..0.95));
        let (a, b) = (color(), color());
        let pattern = match rng.random_range(0..3) {
            0 => Pattern::Waves {
                freq: rng.random_range(1.0..6.0),
                phase: rng.random_range(0.0..std::f64::consts::TAU),
            },
            1 => Pattern::Checker {
                freq: rng.random_range(1.0..4.0),
            },
            _ => Pattern::Stripes {
                freq: rng.random_range(1.5..5.0),
                angle: rng.random_range(0.0..std::f64::consts::PI),
            },
        };
        Self { a, b, pattern }
    }

    fn at(&self, u: f64, v: f64) -> V3 {
        let t = match self.pattern {
            Pattern::Waves { freq, phase } => 0.5 + 0.5 * (freq * u + phase).sin() * (freq * v).cos(),
            Pattern::Checker { freq } => {
                let cell = (freq * u).floor() as i64 + (freq * v).floor() as i64;
                if cell.rem_euclid(2) == 0 { 0.0 } else { 1.0 }
            }
            Pattern::Stripes { freq, angle } => {
                let s = u * angle.cos() + v * angle.sin();
                if (freq * s).rem_euclid(1.0) < 0.5 { 0.0 } else { 1.0 }
            }
        };
        std::array::from_fn(|i| (self.a[i] * (1.0 - t) + self.b[i] * t).clamp(0.05, 0.95))
    }
}

#[derive(Clone, Copy, Debug)]
enum Shape {
    Sphere { center: V3, radius: f64 },
    /// Points with `dot(normal, p) == offset`; the normal faces the camera.
    Plane { normal: V3, offset: f64 },
}

#[derive(Clone, Copy, Debug)]
struct Object {
    shape: Shape,
    texture: Texture,
}

struct Hit {
    t: f64,
    point: V3,
    normal: V3,
    albedo: V3,
}

impl Object {
    fn intersect(&self, dir: V3) -> Option<Hit> {
        match self.shape {
            Shape::Sphere { center, radius } => {
                // Ray from the origin: |t d - c|^2 = r^2 with |d| = 1.
                let b = dot(dir, center);
                let disc = b * b - dot(center, center) + radius * radius;
                if disc < 0.0 {
                    return None;
                }
                let t = b - disc.sqrt();
                if t <= 1e-6 {
                    return None;
                }
                let point = scale(dir, t);
                let normal = normalize(sub(point, center));
                let u = normal[0].atan2(-normal[2]);
                let v = normal[1].asin();
                Some(Hit { t, point, normal, albedo: self.texture.at(u * radius, v * radius) })
            }
            Shape::Plane { normal, offset } => {
                let denom = dot(normal, dir);
                if denom.abs() < 1e-9 {
                    return None;
                }
                let t = offset / denom;
                if t <= 1e-6 {
                    return None;
                }
                let point = scale(dir, t);
                // In-plane coordinates: drop the dominant normal axis.
                let (u, v) = if normal[1].abs() > normal[2].abs() { (point[0], point[2]) } else { (point[0], point[1]) };
                Some(Hit { t, point, normal, albedo: self.texture.at(u, v) })
            }
        }
    }
}

/// Renders one scene. The same seed always yields the same record.
pub fn render_synthetic(seed: u64, config: &SceneConfig) -> Result<SceneRecord> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = config.resolution;
    let half_fov = (30.0f64).to_radians().tan();

    let wall_z = rng.random_range(4.0..6.0);
    let floor_y = -rng.random_range(0.8..1.4);
    let mut objects = vec![
        Object {
            shape: Shape::Plane { normal: [0.0, 0.0, -1.0], offset: -wall_z },
            texture: Texture::random(&mut rng),
        },
        Object {
            shape: Shape::Plane { normal: [0.0, 1.0, 0.0], offset: floor_y },
            texture: Texture::random(&mut rng),
        },
    ];
    for _ in 0..rng.random_range(config.objects.0..=config.objects.1) {
        let z = rng.random_range(2.0..wall_z - 0.8);
        let radius = rng.random_range(0.25..0.7);
        let x = rng.random_range(-0.6..0.6) * z * half_fov;
        let y = (floor_y + radius + rng.random_range(0.0..0.6)).min(z * half_fov);
        objects.push(Object {
            shape: Shape::Sphere { center: [x, y, z], radius },
            texture: Texture::random(&mut rng),
        });
    }
    let ambient_strength = rng.random_range(0.15..0.5);
    let sun = normalize([rng.random_range(-1.0..1.0), rng.random_range(0.3..1.0), -rng.random_range(0.2..1.0)]);
    let kelvin = if config.kelvin.0 == config.kelvin.1 {
        config.kelvin.0
    } else {
        rng.random_range(config.kelvin.0..=config.kelvin.1)
    };
    let ambient = AmbientLight::from_kelvin(kelvin)?;

    let pixels = n * n;
    let mut albedo = Vec::with_capacity(3 * pixels);
    let mut normals = Vec::with_capacity(3 * pixels);
    let mut depth = Vec::with_capacity(pixels);
    let mut s_f = Vec::with_capacity(pixels);
    let mut s_a = Vec::with_capacity(pixels);
    for py in 0..n {
        for px in 0..n {
            let sx = ((px as f64 + 0.5) / n as f64 * 2.0 - 1.0) * half_fov;
            let sy = (1.0 - (py as f64 + 0.5) / n as f64 * 2.0) * half_fov;
            let dir = normalize([sx, sy, 1.0]);
            let hit = objects
                .iter()
                .filter_map(|o| o.intersect(dir))
                .min_by(|a, b| a.t.total_cmp(&b.t))
                .ok_or_else(|| Error::Config("camera ray escaped the scene".into()))?;
            let to_light = scale(dir, -1.0);
            let dist2 = dot(hit.point, hit.point);
            s_f.push((dot(hit.normal, to_light).max(0.0) / dist2) as f32);
            s_a.push((ambient_strength + dot(hit.normal, sun).max(0.0)) as f32);
            albedo.extend(hit.albedo.map(|v| v as f32));
            normals.extend(hit.normal.map(|v| v as f32));
            depth.push(hit.point[2] as f32);
        }
    }
    for shading in [&mut s_f, &mut s_a] {
        let p95 = quantile(shading, 0.95);
        if p95 <= 0.0 {
            return Err(Error::Config("scene receives no light".into()));
        }
        shading.iter_mut().for_each(|v| *v /= p95);
    }

    let components = IntrinsicComponents::new(
        LinearImage::new(n, n, 3, albedo)?,
        ShadingMap::new(LinearImage::new(n, n, 1, s_a)?)?,
        ShadingMap::new(LinearImage::new(n, n, 1, s_f)?)?,
        ambient,
    )?;
    let (photo, ambient_image, flash_image) = compose_flash_photograph(&components)?;
    Ok(SceneRecord {
        id: format!("seed{seed}"),
        photo,
        ambient_image,
        flash_image,
        components,
        depth: LinearImage::new(n, n, 1, depth)?,
        normals: LinearImage::new(n, n, 3, normals)?,
        split: Split::Train,
    })
}
