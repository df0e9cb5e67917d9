//! Analytic scenes: spheres, axis-aligned boxes and bounded planes with procedural
//! textures and Lambertian shading.

use crate::camera::Vec3;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Texture {
    Solid([f64; 3]),
    /// 3D checkerboard with `cells_per_meter` cells along each world axis.
    Checker {
        even: [f64; 3],
        odd: [f64; 3],
        cells_per_meter: f64,
    },
}

/// Shifts checker cell borders off the faces of unit-aligned geometry.
const CHECKER_PHASE: f64 = 0.371;

impl Texture {
    pub fn albedo(&self, p: &Vec3) -> [f64; 3] {
        match *self {
            Texture::Solid(c) => c,
            Texture::Checker {
                even,
                odd,
                cells_per_meter,
            } => {
                let cell: i64 = p.iter().map(|x| (x * cells_per_meter + CHECKER_PHASE).floor() as i64).sum();
                if cell.rem_euclid(2) == 0 {
                    even
                } else {
                    odd
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    Sphere { center: Vec3, radius: f64 },
    Cuboid { min: Vec3, max: Vec3 },
    /// Square patch of half-width `extent` centered on `point`.
    Plane { point: Vec3, normal: Vec3, extent: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Primitive {
    pub shape: Shape,
    pub texture: Texture,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub t: f64,
    /// Unit normal facing the incoming ray.
    pub normal: Vec3,
    pub primitive: usize,
}

fn facing(normal: Vec3, dir: &Vec3) -> Vec3 {
    if normal.dot(dir) > 0.0 {
        -normal
    } else {
        normal
    }
}

/// Two unit vectors spanning the plane orthogonal to `n`.
fn plane_basis(n: &Vec3) -> (Vec3, Vec3) {
    let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let u = n.cross(&helper).normalize();
    let v = n.cross(&u);
    (u, v)
}

impl Shape {
    /// Nearest intersection with `t > t_min`, as `(t, outward-or-facing normal)`.
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3, t_min: f64) -> Option<(f64, Vec3)> {
        match *self {
            Shape::Sphere { center, radius } => {
                let oc = origin - center;
                let b = oc.dot(dir);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let root = disc.sqrt();
                // stable pair of roots of t² + 2bt + c
                let q = if b > 0.0 { -b - root } else { -b + root };
                let (mut t0, mut t1) = (q, if q != 0.0 { c / q } else { 0.0 });
                if t0 > t1 {
                    std::mem::swap(&mut t0, &mut t1);
                }
                let t = if t0 > t_min {
                    t0
                } else if t1 > t_min {
                    t1
                } else {
                    return None;
                };
                Some((t, (origin + dir * t - center) / radius))
            }
            Shape::Cuboid { min, max } => {
                let mut t_enter = f64::NEG_INFINITY;
                let mut t_exit = f64::INFINITY;
                let mut enter_axis = 0;
                let mut exit_axis = 0;
                for k in 0..3 {
                    if dir[k] == 0.0 {
                        if origin[k] < min[k] || origin[k] > max[k] {
                            return None;
                        }
                        continue;
                    }
                    let a = (min[k] - origin[k]) / dir[k];
                    let b = (max[k] - origin[k]) / dir[k];
                    let (near, far) = if a < b { (a, b) } else { (b, a) };
                    if near > t_enter {
                        t_enter = near;
                        enter_axis = k;
                    }
                    if far < t_exit {
                        t_exit = far;
                        exit_axis = k;
                    }
                }
                if t_enter > t_exit {
                    return None;
                }
                let (t, axis) = if t_enter > t_min {
                    (t_enter, enter_axis)
                } else if t_exit > t_min {
                    (t_exit, exit_axis)
                } else {
                    return None;
                };
                let mut n = Vec3::zeros();
                n[axis] = -dir[axis].signum();
                Some((t, n))
            }
            Shape::Plane { point, normal, extent } => {
                let n = normal.normalize();
                let denom = n.dot(dir);
                if denom.abs() < 1e-15 {
                    return None;
                }
                let t = (point - origin).dot(&n) / denom;
                if t <= t_min {
                    return None;
                }
                let rel = origin + dir * t - point;
                let (u, v) = plane_basis(&n);
                if rel.dot(&u).abs() > extent || rel.dot(&v).abs() > extent {
                    return None;
                }
                Some((t, n))
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            Shape::Sphere { radius, .. } => *radius > 0.0,
            Shape::Cuboid { min, max } => (0..3).all(|k| min[k] < max[k]),
            Shape::Plane { normal, extent, .. } => normal.norm() > 0.0 && *extent > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("degenerate primitive {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub name: String,
    pub primitives: Vec<Primitive>,
    pub background: [f64; 3],
    /// Direction towards the light.
    pub light_dir: Vec3,
    /// Fraction of albedo visible without direct light.
    pub ambient: f64,
}

pub const SCENE_NAMES: [&str; 3] = ["cube", "plane", "sphere"];

fn grey_checker(cells_per_meter: f64) -> Texture {
    Texture::Checker {
        even: [0.85, 0.85, 0.8],
        odd: [0.35, 0.35, 0.4],
        cells_per_meter,
    }
}

fn ground(z: f64, extent: f64) -> Primitive {
    Primitive {
        shape: Shape::Plane {
            point: Vec3::new(0.0, 0.0, z),
            normal: Vec3::z(),
            extent,
        },
        texture: grey_checker(2.0),
    }
}

impl Scene {
    /// Built-in scenes, all centered on the origin and fitting inside a radius of about 2.2 m.
    pub fn named(name: &str) -> Result<Scene> {
        let primitives = match name {
            "cube" => vec![
                Primitive {
                    shape: Shape::Cuboid {
                        min: Vec3::new(-0.5, -0.5, -0.5),
                        max: Vec3::new(0.5, 0.5, 0.5),
                    },
                    texture: Texture::Checker {
                        even: [0.9, 0.25, 0.15],
                        odd: [0.15, 0.35, 0.85],
                        cells_per_meter: 6.0,
                    },
                },
                ground(-0.5, 1.5),
            ],
            "plane" => vec![ground(0.0, 2.0)],
            "sphere" => vec![
                Primitive {
                    shape: Shape::Sphere {
                        center: Vec3::new(0.0, 0.0, 0.2),
                        radius: 0.7,
                    },
                    texture: Texture::Checker {
                        even: [0.95, 0.8, 0.2],
                        odd: [0.2, 0.6, 0.3],
                        cells_per_meter: 5.0,
                    },
                },
                ground(-0.5, 1.5),
            ],
            other => {
                return Err(Error::Config(format!(
                    "unknown scene '{other}', expected one of {}",
                    SCENE_NAMES.join(", ")
                )))
            }
        };
        Ok(Scene {
            name: name.to_string(),
            primitives,
            background: [0.0; 3],
            light_dir: Vec3::new(0.4, -0.3, 1.0).normalize(),
            ambient: 0.35,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.primitives.is_empty() {
            return Err(Error::Config("scene has no primitives".into()));
        }
        self.primitives.iter().try_for_each(|p| p.shape.validate())
    }

    pub fn intersect(&self, origin: &Vec3, dir: &Vec3) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        for (i, p) in self.primitives.iter().enumerate() {
            if let Some((t, n)) = p.shape.intersect(origin, dir, 0.0) {
                if best.is_none_or(|b| t < b.t) {
                    best = Some(Hit {
                        t,
                        normal: facing(n, dir),
                        primitive: i,
                    });
                }
            }
        }
        best
    }

    /// Color and depth along a unit ray; misses give the background and depth 0.
    pub fn trace(&self, origin: &Vec3, dir: &Vec3) -> ([f64; 3], f64) {
        match self.intersect(origin, dir) {
            None => (self.background, 0.0),
            Some(hit) => {
                let p = origin + dir * hit.t;
                let albedo = self.primitives[hit.primitive].texture.albedo(&p);
                let diffuse = hit.normal.dot(&self.light_dir).max(0.0);
                let shade = self.ambient + (1.0 - self.ambient) * diffuse;
                (albedo.map(|a| (a * shade).clamp(0.0, 1.0)), hit.t)
            }
        }
    }
}
