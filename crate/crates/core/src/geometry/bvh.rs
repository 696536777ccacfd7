//! Bounding-volume hierarchy over mesh triangles, used by ray-parity
//! inside tests and nearest-surface queries. Median split on the widest
//! centroid axis; triangles are copied into leaf order for locality.

use nalgebra::{Point3, Vector3};

use crate::scalar::Real;

use super::aabb::Aabb3;
use super::mesh::TriMesh;
use super::tri::{self, RayHit};

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone)]
struct Node<T: Real> {
    bbox: Aabb3<T>,
    /// Leaf: `start..start+len` into the reordered triangle arrays.
    /// Inner: `len == 0`, children at `left` and `left + 1`... stored
    /// explicitly to keep traversal branch-free of arithmetic mistakes.
    left: u32,
    right: u32,
    start: u32,
    len: u32,
}

#[derive(Debug, Clone)]
pub struct Bvh<T: Real> {
    nodes: Vec<Node<T>>,
    verts: Vec<[Point3<T>; 3]>,
    face_ids: Vec<u32>,
}

impl<T: Real> Bvh<T> {
    pub fn build(mesh: &TriMesh<T>) -> Self {
        let n = mesh.triangle_count();
        assert!(n > 0, "BVH over an empty mesh");
        let mut order: Vec<u32> = (0..n as u32).collect();
        let centroids: Vec<Point3<T>> = (0..n)
            .map(|i| {
                let [a, b, c] = mesh.triangle(i);
                let third = T::of(1.0 / 3.0);
                Point3::from((a.coords + b.coords + c.coords) * third)
            })
            .collect();

        let mut nodes = Vec::with_capacity(2 * n);
        build_node(mesh, &centroids, &mut order, 0, &mut nodes);

        let verts = order.iter().map(|&f| mesh.triangle(f as usize)).collect();
        Self {
            nodes,
            verts,
            face_ids: order,
        }
    }

    /// Visit every ray intersection with t > 0 (plus grazing pseudo-hits).
    pub fn for_each_ray_hit<F: FnMut(u32, RayHit<T>)>(
        &self,
        origin: &Point3<T>,
        dir: &Vector3<T>,
        mut f: F,
    ) {
        let inv_dir = Vector3::new(T::one() / dir.x, T::one() / dir.y, T::one() / dir.z);
        let mut stack = vec![0u32];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni as usize];
            if !node
                .bbox
                .intersects_ray(origin, &inv_dir, T::of(f64::INFINITY))
            {
                continue;
            }
            if node.len > 0 {
                for i in node.start..node.start + node.len {
                    let [a, b, c] = &self.verts[i as usize];
                    if let Some(hit) = tri::ray_intersect(origin, dir, a, b, c) {
                        f(self.face_ids[i as usize], hit);
                    }
                }
            } else {
                stack.push(node.left);
                stack.push(node.right);
            }
        }
    }

    /// Closest surface point to `x`: (face id, point, squared distance).
    pub fn nearest(&self, x: &Point3<T>) -> (u32, Point3<T>, T) {
        let mut best_d2 = T::of(f64::INFINITY);
        let mut best_point = Point3::origin();
        let mut best_face = 0u32;
        // Depth-first with near-child-first ordering and distance pruning.
        let mut stack = vec![0u32];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni as usize];
            if node.bbox.distance_squared(x) >= best_d2 {
                continue;
            }
            if node.len > 0 {
                for i in node.start..node.start + node.len {
                    let [a, b, c] = &self.verts[i as usize];
                    let p = tri::closest_point(x, a, b, c);
                    let d2 = (p - x).norm_squared();
                    if d2 < best_d2 {
                        best_d2 = d2;
                        best_point = p;
                        best_face = self.face_ids[i as usize];
                    }
                }
            } else {
                let dl = self.nodes[node.left as usize].bbox.distance_squared(x);
                let dr = self.nodes[node.right as usize].bbox.distance_squared(x);
                // Push the farther child first so the nearer is explored
                // next; tightens best_d2 early.
                if dl <= dr {
                    stack.push(node.right);
                    stack.push(node.left);
                } else {
                    stack.push(node.left);
                    stack.push(node.right);
                }
            }
        }
        (best_face, best_point, best_d2)
    }
}

fn build_node<T: Real>(
    mesh: &TriMesh<T>,
    centroids: &[Point3<T>],
    order: &mut [u32],
    start: u32,
    nodes: &mut Vec<Node<T>>,
) -> u32 {
    let mut bbox: Option<Aabb3<T>> = None;
    for &f in order.iter() {
        let [a, b, c] = mesh.triangle(f as usize);
        for p in [a, b, c] {
            match &mut bbox {
                Some(bb) => bb.grow(&p),
                None => bbox = Some(Aabb3::new(p, p)),
            }
        }
    }
    let bbox = bbox.expect("non-empty range");
    let my_index = nodes.len() as u32;
    nodes.push(Node {
        bbox,
        left: 0,
        right: 0,
        start,
        len: 0,
    });

    if order.len() <= LEAF_SIZE {
        nodes[my_index as usize].len = order.len() as u32;
        return my_index;
    }

    // Widest axis of the centroid cloud.
    let cb = Aabb3::from_points(order.iter().map(|&f| &centroids[f as usize]))
        .expect("non-empty range");
    let size = cb.size();
    let axis = if size.x >= size.y && size.x >= size.z {
        0
    } else if size.y >= size.z {
        1
    } else {
        2
    };

    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&fa, &fb| {
        centroids[fa as usize][axis]
            .partial_cmp(&centroids[fb as usize][axis])
            .expect("finite centroid coordinates")
    });

    // Degenerate spreads (all centroids equal) still split by count, which
    // keeps the recursion bounded.
    let (lo, hi) = order.split_at_mut(mid);
    let left = build_node(mesh, centroids, lo, start, nodes);
    let right = build_node(mesh, centroids, hi, start + mid as u32, nodes);
    nodes[my_index as usize].left = left;
    nodes[my_index as usize].right = right;
    my_index
}
