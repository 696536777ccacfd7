//! Parametric shape descriptions with analytic occupancy.
//!
//! A [`ShapeSpec`] is the authoritative definition of a shape: primitives
//! are closed solids in a canonical frame (centered at the origin, axis
//! along z where one exists) and composites are unions of rigidly posed
//! primitives. Inside/outside queries are answered analytically, so
//! ground-truth labels never depend on tessellation quality.

use nalgebra::{Point3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb3, ScaleTranslate};
use crate::scalar::Real;

/// Rigid placement of a composite part: rotate by the axis-angle vector
/// `rotation` (direction = axis, length = angle in radians), then
/// translate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct Pose<T: Real> {
    pub rotation: Vector3<T>,
    pub translation: Vector3<T>,
}

impl<T: Real> Pose<T> {
    pub fn identity() -> Self {
        Self {
            rotation: Vector3::zeros(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Vector3<T>, translation: Vector3<T>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    fn quaternion(&self) -> UnitQuaternion<T> {
        UnitQuaternion::from_scaled_axis(self.rotation)
    }

    /// Local frame -> world frame.
    pub fn apply(&self, p: &Point3<T>) -> Point3<T> {
        self.quaternion() * p + self.translation
    }

    /// World frame -> local frame.
    pub fn invert(&self, p: &Point3<T>) -> Point3<T> {
        self.quaternion().inverse() * (p - self.translation)
    }
}

/// One rigidly posed primitive inside a composite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub struct PosedPart<T: Real> {
    pub primitive: ShapeSpec<T>,
    pub pose: Pose<T>,
}

/// A closed solid: a canonical primitive or a union of posed primitives.
///
/// All primitives contain their boundary (closed-set semantics), so a
/// query exactly on the surface counts as inside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[serde(bound = "T: Real + Serialize + serde::de::DeserializeOwned")]
pub enum ShapeSpec<T: Real> {
    /// Ball of the given radius centered at the origin.
    Sphere { radius: T },
    /// Axis-aligned box with the given full side lengths, centered at the
    /// origin.
    Box { extents: Vector3<T> },
    /// Torus around the z axis: tube of radius `minor_radius` swept along
    /// the circle of radius `major_radius` in the xy plane.
    Torus { major_radius: T, minor_radius: T },
    /// Cylinder along the z axis with the given radius and full height.
    Cylinder { radius: T, height: T },
    /// Union of rigidly posed primitives.
    Composite { parts: Vec<PosedPart<T>> },
}

impl<T: Real> ShapeSpec<T> {
    /// Check the structural invariants: strictly positive dimensions, a
    /// torus tube that does not swallow its hole, at least two parts per
    /// composite, and no nested composites.
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Sphere { radius } => {
                if *radius <= T::zero() {
                    return Err(Error::InvalidSpec("sphere radius must be > 0".into()));
                }
            }
            Self::Box { extents } => {
                if extents.iter().any(|&e| e <= T::zero()) {
                    return Err(Error::InvalidSpec("box extents must be > 0".into()));
                }
            }
            Self::Torus {
                major_radius,
                minor_radius,
            } => {
                if *minor_radius <= T::zero() || *major_radius <= *minor_radius {
                    return Err(Error::InvalidSpec(
                        "torus needs 0 < minor_radius < major_radius".into(),
                    ));
                }
            }
            Self::Cylinder { radius, height } => {
                if *radius <= T::zero() || *height <= T::zero() {
                    return Err(Error::InvalidSpec(
                        "cylinder radius and height must be > 0".into(),
                    ));
                }
            }
            Self::Composite { parts } => {
                if parts.len() < 2 {
                    return Err(Error::InvalidSpec(
                        "composite needs at least two parts".into(),
                    ));
                }
                for part in parts {
                    if matches!(part.primitive, Self::Composite { .. }) {
                        return Err(Error::InvalidSpec(
                            "composite parts must be primitives".into(),
                        ));
                    }
                    part.primitive.validate()?;
                }
            }
        }
        Ok(())
    }

    pub fn is_composite(&self) -> bool {
        matches!(self, Self::Composite { .. })
    }

    /// Analytic inside test in the spec's own frame (boundary inclusive).
    pub fn contains(&self, q: &Point3<T>) -> bool {
        match self {
            Self::Sphere { radius } => q.coords.norm_squared() <= *radius * *radius,
            Self::Box { extents } => {
                let half = T::of(0.5);
                q.x.abs() <= extents.x * half
                    && q.y.abs() <= extents.y * half
                    && q.z.abs() <= extents.z * half
            }
            Self::Torus {
                major_radius,
                minor_radius,
            } => {
                let ring = (q.x * q.x + q.y * q.y).sqrt() - *major_radius;
                ring * ring + q.z * q.z <= *minor_radius * *minor_radius
            }
            Self::Cylinder { radius, height } => {
                q.x * q.x + q.y * q.y <= *radius * *radius
                    && q.z.abs() <= *height * T::of(0.5)
            }
            Self::Composite { parts } => parts
                .iter()
                .any(|p| p.primitive.contains(&p.pose.invert(q))),
        }
    }

    /// Strict inside test: true only in the open interior, so points
    /// exactly on the boundary are excluded. Used to reject surface samples
    /// of one part that are buried inside another.
    pub fn contains_interior(&self, q: &Point3<T>) -> bool {
        match self {
            Self::Sphere { radius } => q.coords.norm_squared() < *radius * *radius,
            Self::Box { extents } => {
                let half = T::of(0.5);
                q.x.abs() < extents.x * half
                    && q.y.abs() < extents.y * half
                    && q.z.abs() < extents.z * half
            }
            Self::Torus {
                major_radius,
                minor_radius,
            } => {
                let ring = (q.x * q.x + q.y * q.y).sqrt() - *major_radius;
                ring * ring + q.z * q.z < *minor_radius * *minor_radius
            }
            Self::Cylinder { radius, height } => {
                q.x * q.x + q.y * q.y < *radius * *radius
                    && q.z.abs() < *height * T::of(0.5)
            }
            Self::Composite { parts } => parts
                .iter()
                .any(|p| p.primitive.contains_interior(&p.pose.invert(q))),
        }
    }

    /// Bounding box of the canonical (unposed) primitive; for composites,
    /// the union of part boxes. Conservative under rotation: rotated boxes
    /// are bounded by their rotated corners, spheres stay tight.
    pub fn bbox(&self) -> Aabb3<T> {
        match self {
            Self::Sphere { radius } => centered_box(Vector3::new(*radius, *radius, *radius)),
            Self::Box { extents } => centered_box(extents * T::of(0.5)),
            Self::Torus {
                major_radius,
                minor_radius,
            } => {
                let reach = *major_radius + *minor_radius;
                centered_box(Vector3::new(reach, reach, *minor_radius))
            }
            Self::Cylinder { radius, height } => {
                centered_box(Vector3::new(*radius, *radius, *height * T::of(0.5)))
            }
            Self::Composite { parts } => {
                let mut out: Option<Aabb3<T>> = None;
                for part in parts {
                    let b = match part.primitive {
                        // A posed ball is still a ball: keep the box tight.
                        Self::Sphere { radius } => {
                            let c = Point3::from(part.pose.translation);
                            Aabb3::new(
                                c - Vector3::new(radius, radius, radius),
                                c + Vector3::new(radius, radius, radius),
                            )
                        }
                        _ => rotated_bbox(&part.primitive.bbox(), &part.pose),
                    };
                    out = Some(match out {
                        Some(acc) => acc.union(&b),
                        None => b,
                    });
                }
                out.expect("validated composite has parts")
            }
        }
    }

    /// Apply a similarity transform: dimensions scale uniformly, part
    /// rotations are unchanged, part translations map through `tf`.
    pub fn transformed(&self, tf: &ScaleTranslate<T>) -> Self {
        let s = tf.scale;
        match self {
            Self::Sphere { radius } => Self::Sphere { radius: *radius * s },
            Self::Box { extents } => Self::Box { extents: extents * s },
            Self::Torus {
                major_radius,
                minor_radius,
            } => Self::Torus {
                major_radius: *major_radius * s,
                minor_radius: *minor_radius * s,
            },
            Self::Cylinder { radius, height } => Self::Cylinder {
                radius: *radius * s,
                height: *height * s,
            },
            Self::Composite { parts } => Self::Composite {
                parts: parts
                    .iter()
                    .map(|p| PosedPart {
                        primitive: p.primitive.transformed(tf),
                        pose: Pose {
                            rotation: p.pose.rotation,
                            translation: p.pose.translation * s + tf.translation,
                        },
                    })
                    .collect(),
            },
        }
    }

    /// Rescale and recenter so the bounding box is centered at the origin
    /// with longest side 1 (the canonical frame for training data).
    pub fn normalized_to_unit_cube(&self) -> Self {
        let bb = self.bbox();
        let scale = T::one() / bb.longest_side();
        let translation = -bb.center().coords * scale;
        self.transformed(&ScaleTranslate { scale, translation })
    }

    /// The primitives that make up this shape, each with its pose; a bare
    /// primitive yields itself with the identity pose.
    pub fn posed_parts(&self) -> Vec<PosedPart<T>> {
        match self {
            Self::Composite { parts } => parts.clone(),
            prim => vec![PosedPart {
                primitive: prim.clone(),
                pose: Pose::identity(),
            }],
        }
    }
}

/// Ground-truth occupancy: true iff `q` lies in the closed solid, union
/// semantics for composites.
pub fn occupancy_oracle<T: Real>(spec: &ShapeSpec<T>, q: &Point3<T>) -> bool {
    spec.contains(q)
}

fn centered_box<T: Real>(half: Vector3<T>) -> Aabb3<T> {
    Aabb3::new(Point3::from(-half), Point3::from(half))
}

/// Bounding box of a rigidly posed box: transform all eight corners.
fn rotated_bbox<T: Real>(local: &Aabb3<T>, pose: &Pose<T>) -> Aabb3<T> {
    let corners = [
        Point3::new(local.min.x, local.min.y, local.min.z),
        Point3::new(local.max.x, local.min.y, local.min.z),
        Point3::new(local.min.x, local.max.y, local.min.z),
        Point3::new(local.max.x, local.max.y, local.min.z),
        Point3::new(local.min.x, local.min.y, local.max.z),
        Point3::new(local.max.x, local.min.y, local.max.z),
        Point3::new(local.min.x, local.max.y, local.max.z),
        Point3::new(local.max.x, local.max.y, local.max.z),
    ];
    Aabb3::from_points(corners.iter().map(|c| pose.apply(c)).collect::<Vec<_>>().iter())
        .expect("eight corners")
}

#[cfg(test)]
mod tests {
    use super::*;

    type Spec = ShapeSpec<f64>;

    #[test]
    fn sphere_contains_center_and_boundary() {
        let s = Spec::Sphere { radius: 0.4 };
        assert!(s.contains(&Point3::new(0.0, 0.0, 0.0)));
        assert!(s.contains(&Point3::new(0.4, 0.0, 0.0)));
        assert!(!s.contains(&Point3::new(0.4 + 1e-12, 0.0, 0.0)));
    }

    #[test]
    fn torus_has_a_hole() {
        let t = Spec::Torus {
            major_radius: 0.3,
            minor_radius: 0.1,
        };
        assert!(!t.contains(&Point3::new(0.0, 0.0, 0.0)));
        assert!(t.contains(&Point3::new(0.3, 0.0, 0.0)));
        assert!(t.contains(&Point3::new(0.25, 0.0, 0.05)));
        assert!(!t.contains(&Point3::new(0.3, 0.0, 0.11)));
    }

    #[test]
    fn composite_union_covers_disjoint_parts() {
        let two_boxes = Spec::Composite {
            parts: vec![
                PosedPart {
                    primitive: Spec::Box {
                        extents: Vector3::new(0.2, 0.2, 0.2),
                    },
                    pose: Pose::new(Vector3::zeros(), Vector3::new(-0.3, 0.0, 0.0)),
                },
                PosedPart {
                    primitive: Spec::Box {
                        extents: Vector3::new(0.2, 0.2, 0.2),
                    },
                    pose: Pose::new(Vector3::zeros(), Vector3::new(0.3, 0.0, 0.0)),
                },
            ],
        };
        two_boxes.validate().unwrap();
        assert!(two_boxes.contains(&Point3::new(0.3, 0.0, 0.0)));
        assert!(two_boxes.contains(&Point3::new(-0.3, 0.05, 0.0)));
        assert!(!two_boxes.contains(&Point3::new(0.0, 0.0, 0.0)));
    }

    #[test]
    fn rotated_box_contains_follows_pose() {
        // 90 degrees about z: the long x side now spans y.
        let part = PosedPart {
            primitive: Spec::Box {
                extents: Vector3::new(0.6, 0.1, 0.1),
            },
            pose: Pose::new(
                Vector3::new(0.0, 0.0, std::f64::consts::FRAC_PI_2),
                Vector3::zeros(),
            ),
        };
        let spec = Spec::Composite {
            parts: vec![
                part,
                PosedPart {
                    primitive: Spec::Sphere { radius: 0.05 },
                    pose: Pose::new(Vector3::zeros(), Vector3::new(0.45, 0.0, 0.0)),
                },
            ],
        };
        assert!(spec.contains(&Point3::new(0.0, 0.29, 0.0)));
        assert!(!spec.contains(&Point3::new(0.29, 0.0, 0.0)));
    }

    #[test]
    fn validation_rejects_bad_dimensions() {
        assert!(Spec::Sphere { radius: 0.0 }.validate().is_err());
        assert!(Spec::Torus {
            major_radius: 0.1,
            minor_radius: 0.2,
        }
        .validate()
        .is_err());
        assert!(Spec::Composite { parts: vec![] }.validate().is_err());
        let nested = Spec::Composite {
            parts: vec![
                PosedPart {
                    primitive: Spec::Composite { parts: vec![] },
                    pose: Pose::identity(),
                },
                PosedPart {
                    primitive: Spec::Sphere { radius: 0.1 },
                    pose: Pose::identity(),
                },
            ],
        };
        assert!(nested.validate().is_err());
    }

    #[test]
    fn bbox_is_conservative_and_tight_for_spheres() {
        let s = Spec::Sphere { radius: 0.4 };
        let b = s.bbox();
        assert_eq!(b.min, Point3::new(-0.4, -0.4, -0.4));
        assert_eq!(b.max, Point3::new(0.4, 0.4, 0.4));

        // A posed sphere keeps a tight box even though boxes go through
        // the corner transform.
        let c = Spec::Composite {
            parts: vec![
                PosedPart {
                    primitive: Spec::Sphere { radius: 0.1 },
                    pose: Pose::new(Vector3::new(1.0, 2.0, 3.0), Vector3::new(0.2, 0.0, 0.0)),
                },
                PosedPart {
                    primitive: Spec::Sphere { radius: 0.1 },
                    pose: Pose::new(Vector3::zeros(), Vector3::new(-0.2, 0.0, 0.0)),
                },
            ],
        };
        let b = c.bbox();
        for a in 0..3 {
            approx::assert_relative_eq!(b.min[a], [-0.3, -0.1, -0.1][a], epsilon = 1e-12);
            approx::assert_relative_eq!(b.max[a], [0.3, 0.1, 0.1][a], epsilon = 1e-12);
        }
    }

    #[test]
    fn transformed_spec_matches_transformed_queries() {
        let spec = Spec::Composite {
            parts: vec![
                PosedPart {
                    primitive: Spec::Cylinder {
                        radius: 0.2,
                        height: 0.5,
                    },
                    pose: Pose::new(Vector3::new(0.3, -0.2, 0.9), Vector3::new(0.1, 0.2, -0.1)),
                },
                PosedPart {
                    primitive: Spec::Torus {
                        major_radius: 0.25,
                        minor_radius: 0.08,
                    },
                    pose: Pose::new(Vector3::new(-1.0, 0.4, 0.0), Vector3::new(-0.2, 0.1, 0.3)),
                },
            ],
        };
        let tf = ScaleTranslate {
            scale: 0.7,
            translation: Vector3::new(0.05, -0.1, 0.2),
        };
        let moved = spec.transformed(&tf);
        for i in 0..500 {
            let t = i as f64 / 500.0;
            let q = Point3::new(t - 0.5, (3.0 * t).sin() * 0.4, (5.0 * t).cos() * 0.4);
            assert_eq!(spec.contains(&q), moved.contains(&tf.apply(&q)), "at {q}");
        }
    }

    #[test]
    fn spec_json_roundtrip() {
        let spec = Spec::Composite {
            parts: vec![
                PosedPart {
                    primitive: Spec::Sphere { radius: 0.25 },
                    pose: Pose::new(Vector3::new(0.1, 0.0, 0.0), Vector3::new(0.0, 0.3, 0.0)),
                },
                PosedPart {
                    primitive: Spec::Box {
                        extents: Vector3::new(0.5, 0.3, 0.2),
                    },
                    pose: Pose::identity(),
                },
            ],
        };
        let json = serde_json::to_string(&spec).unwrap();
        let back: Spec = serde_json::from_str(&json).unwrap();
        assert_eq!(spec, back);
    }
}
