use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::GtElement;
use crate::annotations::StructuralClass;
use crate::extent::{PlanarPolygonSet, PlaneBasis};
use crate::geometry::{Plane, Vec3};
use crate::region::{self, Ring};
use crate::ElementId;

pub const WALL_HEIGHT: f64 = 2.7;
const BIG: f64 = 100.0;

/// Room shape, camera center and the yaw the camera pan starts from.
pub struct Layout {
    pub elements: Vec<GtElement>,
    pub center: Vec3,
    pub start_yaw: f64,
}

fn set_from_rings(
    id: u32,
    class: StructuralClass,
    plane: Plane,
    rings: &[Vec<Vec3>],
) -> PlanarPolygonSet {
    let mut s = PlanarPolygonSet::empty(ElementId(id), class, plane);
    let mut rings2: Vec<Ring> = rings
        .iter()
        .map(|r| r.iter().map(|p| s.basis.to_2d(p)).collect())
        .collect();
    if rings2
        .first()
        .is_some_and(|r| region::signed_ring_area(r) < 0.0)
    {
        rings2.iter_mut().for_each(|r| r.reverse());
    }
    s.region = region::from_rings(&rings2);
    s
}

/// Faces of the convex polyhedron `{X : n_i . X + d_i >= 0}`.
fn convex_faces(halfspaces: &[(Plane, StructuralClass)], first_id: u32) -> Vec<PlanarPolygonSet> {
    halfspaces
        .iter()
        .enumerate()
        .map(|(i, (plane, class))| {
            let basis = PlaneBasis::for_plane(plane);
            let mut ring: Ring = vec![[-BIG, -BIG], [BIG, -BIG], [BIG, BIG], [-BIG, BIG]];
            for (j, (other, _)) in halfspaces.iter().enumerate() {
                if i == j {
                    continue;
                }
                let a = other.normal.dot(&basis.e1);
                let b = other.normal.dot(&basis.e2);
                let c = other.signed_distance(&basis.origin);
                ring = region::clip_ring_half_plane(&ring, a, b, c);
            }
            let mut s = PlanarPolygonSet::empty(ElementId(first_id + i as u32), *class, *plane);
            s.basis = basis;
            s.region = region::from_rings(&[ring]);
            s
        })
        .collect()
}

fn plane(n: Vec3, point: Vec3) -> Plane {
    let n = n.normalize();
    Plane::new(n, -n.dot(&point), ElementId(0)).expect("unit normal")
}

fn required(sets: Vec<PlanarPolygonSet>) -> Vec<GtElement> {
    sets.into_iter()
        .map(|set| GtElement {
            set,
            required: true,
        })
        .collect()
}

fn box_halfspaces(x0: f64, x1: f64, y0: f64, y1: f64, h: f64) -> Vec<(Plane, StructuralClass)> {
    vec![
        (plane(Vec3::z(), Vec3::zeros()), StructuralClass::Floor),
        (
            plane(-Vec3::z(), Vec3::new(0.0, 0.0, h)),
            StructuralClass::Ceiling,
        ),
        (
            plane(Vec3::x(), Vec3::new(x0, 0.0, 0.0)),
            StructuralClass::Wall,
        ),
        (
            plane(-Vec3::x(), Vec3::new(x1, 0.0, 0.0)),
            StructuralClass::Wall,
        ),
        (
            plane(Vec3::y(), Vec3::new(0.0, y0, 0.0)),
            StructuralClass::Wall,
        ),
        (
            plane(-Vec3::y(), Vec3::new(0.0, y1, 0.0)),
            StructuralClass::Wall,
        ),
    ]
}

/// Axis-aligned rectangle on a vertical wall, `along` measured from the wall's
/// horizontal midpoint, heights from the floor.
fn wall_rect(wall: &PlanarPolygonSet, along: (f64, f64), heights: (f64, f64)) -> Vec<Vec3> {
    let n = wall.plane.normal;
    let u = n.cross(&Vec3::z()).normalize();
    let verts: Vec<Vec3> = wall.rings_3d().into_iter().flatten().collect();
    let ts: Vec<f64> = verts.iter().map(|p| p.dot(&u)).collect();
    let mid = 0.5
        * (ts.iter().cloned().fold(f64::INFINITY, f64::min)
            + ts.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    // a point of the wall at floor height
    let base = verts
        .iter()
        .min_by(|a, b| a.z.total_cmp(&b.z))
        .copied()
        .unwrap();
    let base = base + u * (mid - base.dot(&u));
    let base = Vec3::new(base.x, base.y, 0.0);
    let corner = |t: f64, z: f64| {
        let p = base + u * t + Vec3::new(0.0, 0.0, z);
        // keep the point on the wall plane for slightly non-vertical inputs
        p - n * wall.plane.signed_distance(&p)
    };
    vec![
        corner(along.0, heights.0),
        corner(along.1, heights.0),
        corner(along.1, heights.1),
        corner(along.0, heights.1),
    ]
}

/// Cuts a wall rectangle out of `host` and returns it as its own element.
fn add_opening(
    host: &mut PlanarPolygonSet,
    id: u32,
    class: StructuralClass,
    along: (f64, f64),
    heights: (f64, f64),
) -> PlanarPolygonSet {
    let rect = wall_rect(host, along, heights);
    let mut ring: Ring = rect.iter().map(|p| host.basis.to_2d(p)).collect();
    if region::signed_ring_area(&ring) < 0.0 {
        ring.reverse();
    }
    let mut opening = PlanarPolygonSet::empty(ElementId(id), class, host.plane);
    opening.basis = host.basis;
    opening.region = region::from_rings(&[ring]);
    host.region = region::difference(&host.region, &opening.region);
    opening
}

fn jitter(rng: &mut ChaCha8Rng, x: f64, rel: f64) -> f64 {
    x * (1.0 + rng.random_range(-rel..=rel))
}

pub fn cuboid(rng: &mut ChaCha8Rng) -> Layout {
    let (w, d) = (jitter(rng, 4.2, 0.15), jitter(rng, 3.6, 0.15));
    let mut faces = convex_faces(&box_halfspaces(0.0, w, 0.0, d, WALL_HEIGHT), 0);
    let wall = rng.random_range(2..6);
    let win = add_opening(
        &mut faces[wall],
        6,
        StructuralClass::Window,
        (-0.5, 0.5),
        (0.9, 1.8),
    );
    faces.push(win);
    Layout {
        elements: required(faces),
        center: Vec3::new(w / 2.0, d / 2.0, 1.4),
        start_yaw: rng.random_range(0.0..std::f64::consts::TAU),
    }
}

pub fn manhattan(rng: &mut ChaCha8Rng) -> Layout {
    // L-shaped plan: a w x d rectangle with the (w - cw) x (d - cd) corner removed
    let (w, d) = (jitter(rng, 5.0, 0.1), jitter(rng, 4.4, 0.1));
    let (cw, cd) = (w * jitter(rng, 0.55, 0.1), d * jitter(rng, 0.55, 0.1));
    let plan = [[0.0, 0.0], [w, 0.0], [w, cd], [cw, cd], [cw, d], [0.0, d]];
    let h = WALL_HEIGHT;
    let mut sets = Vec::new();
    let lift = |z: f64| {
        plan.iter()
            .map(|p| Vec3::new(p[0], p[1], z))
            .collect::<Vec<_>>()
    };
    sets.push(set_from_rings(
        0,
        StructuralClass::Floor,
        plane(Vec3::z(), Vec3::zeros()),
        &[lift(0.0)],
    ));
    sets.push(set_from_rings(
        1,
        StructuralClass::Ceiling,
        plane(-Vec3::z(), Vec3::new(0.0, 0.0, h)),
        &[lift(h)],
    ));
    for k in 0..plan.len() {
        let (a, b) = (plan[k], plan[(k + 1) % plan.len()]);
        let (pa, pb) = (Vec3::new(a[0], a[1], 0.0), Vec3::new(b[0], b[1], 0.0));
        let dir = pb - pa;
        let inward = Vec3::new(-dir.y, dir.x, 0.0);
        let ring = vec![
            pa,
            pb,
            pb + Vec3::new(0.0, 0.0, h),
            pa + Vec3::new(0.0, 0.0, h),
        ];
        sets.push(set_from_rings(
            2 + k as u32,
            StructuralClass::Wall,
            plane(inward, pa),
            &[ring],
        ));
    }
    // door on the long wall along x = 0
    let host = 2 + 5;
    let door = add_opening(
        &mut sets[host],
        8,
        StructuralClass::Door,
        (-0.45, 0.45),
        (0.0, 2.05),
    );
    sets.push(door);
    let center = Vec3::new(cw * 0.55, cd * 0.6, 1.4);
    Layout {
        elements: required(sets),
        center,
        start_yaw: rng.random_range(0.0..std::f64::consts::TAU),
    }
}

pub fn generic(rng: &mut ChaCha8Rng) -> Layout {
    let radius = jitter(rng, 2.6, 0.1);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let corners: Vec<[f64; 2]> = (0..5)
        .map(|k| {
            let t = phase + std::f64::consts::TAU * k as f64 / 5.0 + rng.random_range(-0.15..0.15);
            [radius * t.cos(), radius * t.sin()]
        })
        .collect();
    let slanted = rng.random_range(0..5);
    let mut hs = vec![
        (plane(Vec3::z(), Vec3::zeros()), StructuralClass::Floor),
        (
            plane(-Vec3::z(), Vec3::new(0.0, 0.0, WALL_HEIGHT)),
            StructuralClass::Ceiling,
        ),
    ];
    for k in 0..5 {
        let (a, b) = (corners[k], corners[(k + 1) % 5]);
        let dir = Vec3::new(b[0] - a[0], b[1] - a[1], 0.0).normalize();
        let inward = Vec3::new(-dir.y, dir.x, 0.0);
        let base = Vec3::new(a[0], a[1], 0.0);
        if k == slanted {
            // leans into the room by 15 degrees
            let t = 15f64.to_radians();
            hs.push((
                plane(inward * t.cos() - Vec3::z() * t.sin(), base),
                StructuralClass::Slanted,
            ));
        } else {
            hs.push((plane(inward, base), StructuralClass::Wall));
        }
    }
    let mut faces = convex_faces(&hs, 0);
    let host = 2 + (slanted + 2) % 5;
    let win = add_opening(
        &mut faces[host],
        7,
        StructuralClass::Window,
        (-0.4, 0.4),
        (1.0, 1.8),
    );
    faces.push(win);
    Layout {
        elements: required(faces),
        center: Vec3::new(0.0, 0.0, 1.4),
        start_yaw: rng.random_range(0.0..std::f64::consts::TAU),
    }
}

/// Two rooms side by side; the shared wall has an open doorway and the first
/// room has a closed door.
pub fn composite(rng: &mut ChaCha8Rng) -> Layout {
    let (a, b) = (jitter(rng, 4.0, 0.1), jitter(rng, 3.8, 0.1));
    let c = jitter(rng, 3.5, 0.1);
    let h = WALL_HEIGHT;
    let mut room1 = convex_faces(&box_halfspaces(0.0, a, 0.0, b, h), 0);
    // room1[3] is the shared wall x = a
    let doorway: Ring = {
        let r = wall_rect(&room1[3], (-0.5, 0.5), (0.0, 2.1));
        let mut ring: Ring = r.iter().map(|p| room1[3].basis.to_2d(p)).collect();
        if region::signed_ring_area(&ring) < 0.0 {
            ring.reverse();
        }
        ring
    };
    room1[3].region = region::difference(&room1[3].region, &region::from_rings(&[doorway]));
    let door = add_opening(
        &mut room1[4],
        6,
        StructuralClass::Door,
        (-0.45, 0.45),
        (0.0, 2.05),
    );
    let mut hs2 = box_halfspaces(a, a + c, 0.0, b, h);
    hs2.remove(2);
    // the second room's walls are clipped by its own box, including x >= a
    let mut room2 = convex_faces(&hs2, 7);
    let shared = plane(Vec3::x(), Vec3::new(a, 0.0, 0.0));
    for s in &mut room2 {
        let (aa, bb, cc) = (
            shared.normal.dot(&s.basis.e1),
            shared.normal.dot(&s.basis.e2),
            shared.signed_distance(&s.basis.origin),
        );
        s.region = region::clip_half_plane(&s.region, aa, bb, cc);
    }
    let mut elements = required(room1);
    elements.push(GtElement {
        set: door,
        required: true,
    });
    elements.extend(room2.into_iter().map(|set| GtElement {
        set,
        required: false,
    }));
    Layout {
        elements,
        center: Vec3::new(a * 0.45, b / 2.0, 1.4),
        start_yaw: -std::f64::consts::FRAC_PI_2 * 0.8,
    }
}

/// The same layout with every element and the camera center moved by `t`.
pub fn translated(layout: Layout, t: Vec3) -> Layout {
    let elements = layout
        .elements
        .into_iter()
        .map(|e| {
            let rings: Vec<Vec<Vec3>> = e
                .set
                .rings_3d()
                .into_iter()
                .map(|r| r.into_iter().map(|p| p + t).collect())
                .collect();
            let p = e.set.plane;
            let plane = Plane::new(p.normal, p.offset - p.normal.dot(&t), p.element_id)
                .expect("unit normal");
            GtElement {
                set: set_from_rings(e.set.element_id.0, e.set.class, plane, &rings),
                required: e.required,
            }
        })
        .collect();
    Layout {
        elements,
        center: layout.center + t,
        start_yaw: layout.start_yaw,
    }
}
