//! Planar regions (polygon sets with holes) and pixel masks.
//!
//! Boolean operations are delegated to `geo`. Ring orientation follows the
//! file convention: positive shoelace area marks an outer boundary, negative a hole.

use geo::{Area, BooleanOps, Coord, LineString, MapCoords, MultiPolygon, Polygon};

use crate::geometry::Vec2;

pub type Region = MultiPolygon<f64>;
pub type Ring = Vec<[f64; 2]>;

pub fn empty() -> Region {
    MultiPolygon::new(vec![])
}

pub fn is_empty(r: &Region) -> bool {
    r.0.is_empty()
}

/// Shoelace signed area of an open or closed ring.
pub fn signed_ring_area(ring: &[[f64; 2]]) -> f64 {
    let n = ring.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        acc += a[0] * b[1] - b[0] * a[1];
    }
    0.5 * acc
}

fn ring_contains(ring: &[[f64; 2]], p: [f64; 2]) -> bool {
    let mut inside = false;
    let n = ring.len();
    let mut j = n.wrapping_sub(1);
    for i in 0..n {
        let (a, b) = (ring[i], ring[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn open_ring(ring: &[[f64; 2]]) -> Ring {
    let mut r: Ring = ring.to_vec();
    if r.len() > 1 && r.first() == r.last() {
        r.pop();
    }
    r
}

fn to_linestring(ring: &[[f64; 2]]) -> LineString<f64> {
    LineString::from(
        ring.iter()
            .map(|p| Coord { x: p[0], y: p[1] })
            .collect::<Vec<_>>(),
    )
}

/// Builds a region from rings; each hole attaches to the smallest outer ring
/// containing its first vertex. Orphan holes are ignored. The result is
/// normalized by a boolean union, which also repairs self-intersections.
pub fn from_rings(rings: &[Ring]) -> Region {
    let rings: Vec<Ring> = rings
        .iter()
        .map(|r| open_ring(r))
        .filter(|r| r.len() >= 3 && r.iter().all(|p| p[0].is_finite() && p[1].is_finite()))
        .collect();
    let mut outers: Vec<(usize, f64)> = Vec::new();
    let mut holes = Vec::new();
    for (i, r) in rings.iter().enumerate() {
        let a = signed_ring_area(r);
        if a > 0.0 {
            outers.push((i, a));
        } else if a < 0.0 {
            holes.push(i);
        }
    }
    let mut hole_of: Vec<Vec<usize>> = vec![Vec::new(); outers.len()];
    for h in holes {
        let p = rings[h][0];
        let host = outers
            .iter()
            .enumerate()
            .filter(|(_, (o, _))| ring_contains(&rings[*o], p))
            .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
            .map(|(k, _)| k);
        if let Some(k) = host {
            hole_of[k].push(h);
        }
    }
    let polys: Vec<Polygon<f64>> = outers
        .iter()
        .zip(hole_of)
        .map(|((o, _), hs)| {
            Polygon::new(
                to_linestring(&rings[*o]),
                hs.iter().map(|h| to_linestring(&rings[*h])).collect(),
            )
        })
        .collect();
    normalize(&MultiPolygon::new(polys))
}

pub fn from_polygon(ring: &[Vec2]) -> Region {
    from_rings(&[ring.iter().map(|p| [p.x, p.y]).collect()])
}

pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Region {
    from_rings(&[vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]]])
}

/// Rings of a region: outer rings with positive area, holes negative, open (no repeated endpoint).
pub fn to_rings(r: &Region) -> Vec<Ring> {
    let mut out = Vec::new();
    for poly in &r.0 {
        let mut ext: Ring = open_ring(
            &poly
                .exterior()
                .0
                .iter()
                .map(|c| [c.x, c.y])
                .collect::<Vec<_>>(),
        );
        if signed_ring_area(&ext) < 0.0 {
            ext.reverse();
        }
        out.push(ext);
        for hole in poly.interiors() {
            let mut h = open_ring(&hole.0.iter().map(|c| [c.x, c.y]).collect::<Vec<_>>());
            if signed_ring_area(&h) > 0.0 {
                h.reverse();
            }
            out.push(h);
        }
    }
    out
}

/// Outer ring and holes per component, positively oriented outer.
pub fn components(r: &Region) -> Vec<(Ring, Vec<Ring>)> {
    r.0.iter()
        .map(|poly| {
            let single = MultiPolygon::new(vec![poly.clone()]);
            let mut rings = to_rings(&single).into_iter();
            let outer = rings.next().unwrap_or_default();
            (outer, rings.collect())
        })
        .collect()
}

pub fn area(r: &Region) -> f64 {
    r.unsigned_area()
}

fn quantized(r: &Region) -> Region {
    r.map_coords(|c| Coord {
        x: (c.x * 1e7).round() / 1e7,
        y: (c.y * 1e7).round() / 1e7,
    })
}

/// Runs a boolean operation, retrying on a coarser grid if the overlay
/// engine panics on degenerate input and returning `fallback` if that fails too.
fn guarded(
    a: &Region,
    b: &Region,
    op: fn(&Region, &Region) -> Region,
    fallback: impl FnOnce() -> Region,
) -> Region {
    if let Some(r) = quietly(|| op(a, b)) {
        return r;
    }
    log::warn!("polygon overlay failed on degenerate input; retrying on a 1e-7 grid");
    let (qa, qb) = (quantized(a), quantized(b));
    quietly(|| op(&qa, &qb)).unwrap_or_else(|| {
        log::warn!("polygon overlay failed again; using a fallback result");
        fallback()
    })
}

thread_local! {
    static SILENCED: std::cell::Cell<bool> = const { std::cell::Cell::new(false) };
}

/// Catches a panic in `f` without printing the usual panic message.
fn quietly<T>(f: impl FnOnce() -> T) -> Option<T> {
    static HOOK: std::sync::Once = std::sync::Once::new();
    HOOK.call_once(|| {
        let previous = std::panic::take_hook();
        std::panic::set_hook(Box::new(move |info| {
            if !SILENCED.with(|s| s.get()) {
                previous(info);
            }
        }));
    });
    SILENCED.with(|s| s.set(true));
    let out = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f));
    SILENCED.with(|s| s.set(false));
    out.ok()
}

pub fn normalize(r: &Region) -> Region {
    guarded(r, &empty(), |a, b| a.union(b), || r.clone())
}

pub fn union(a: &Region, b: &Region) -> Region {
    guarded(a, b, |a, b| a.union(b), || a.clone())
}

pub fn union_all<'a>(regions: impl IntoIterator<Item = &'a Region>) -> Region {
    let mut acc = empty();
    for r in regions {
        acc = union(&acc, r);
    }
    acc
}

pub fn intersection(a: &Region, b: &Region) -> Region {
    guarded(a, b, |a, b| a.intersection(b), empty)
}

pub fn difference(a: &Region, b: &Region) -> Region {
    guarded(a, b, |a, b| a.difference(b), || a.clone())
}

/// Rounds every vertex to a `tol` grid and drops repeated vertices.
pub fn snap(r: &Region, tol: f64) -> Region {
    let q = |v: f64| (v / tol).round() * tol;
    let rings: Vec<Ring> = to_rings(r)
        .into_iter()
        .map(|ring| {
            let mut out: Ring = Vec::with_capacity(ring.len());
            for p in ring {
                let s = [q(p[0]), q(p[1])];
                if out.last() != Some(&s) {
                    out.push(s);
                }
            }
            if out.len() > 1 && out.first() == out.last() {
                out.pop();
            }
            out
        })
        .collect();
    from_rings(&rings)
}

/// Even-odd point containment over all rings.
pub fn contains(r: &Region, p: &Vec2) -> bool {
    let q = [p.x, p.y];
    r.0.iter().any(|poly| {
        let ext: Vec<[f64; 2]> = poly.exterior().0.iter().map(|c| [c.x, c.y]).collect();
        ring_contains(&ext, q)
            && !poly.interiors().iter().any(|h| {
                let hv: Vec<[f64; 2]> = h.0.iter().map(|c| [c.x, c.y]).collect();
                ring_contains(&hv, q)
            })
    })
}

pub fn segments(r: &Region) -> Vec<([f64; 2], [f64; 2])> {
    let mut segs = Vec::new();
    for ring in to_rings(r) {
        let n = ring.len();
        for i in 0..n {
            segs.push((ring[i], ring[(i + 1) % n]));
        }
    }
    segs
}

/// Closest point on segment `ab` to `p`.
pub fn closest_on_segment(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> [f64; 2] {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    [a[0] + t * d[0], a[1] + t * d[1]]
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Nearest boundary point and its distance; `None` for an empty segment list.
pub fn nearest_on_segments(segs: &[([f64; 2], [f64; 2])], p: [f64; 2]) -> Option<([f64; 2], f64)> {
    segs.iter()
        .map(|(a, b)| {
            let c = closest_on_segment(*a, *b, p);
            (c, dist(c, p))
        })
        .min_by(|x, y| x.1.total_cmp(&y.1))
}

/// Distance from `p` to the region: zero inside, boundary distance outside.
pub fn distance_to(r: &Region, segs: &[([f64; 2], [f64; 2])], p: &Vec2) -> f64 {
    if contains(r, p) {
        return 0.0;
    }
    nearest_on_segments(segs, [p.x, p.y]).map_or(f64::INFINITY, |(_, d)| d)
}

pub fn polyline_distance(line: &[Vec2], p: [f64; 2]) -> f64 {
    line.windows(2)
        .map(|w| dist(closest_on_segment([w[0].x, w[0].y], [w[1].x, w[1].y], p), p))
        .fold(f64::INFINITY, f64::min)
}

/// Sutherland-Hodgman clip of a ring against `a x + b y + c >= 0`.
pub fn clip_ring_half_plane(ring: &[[f64; 2]], a: f64, b: f64, c: f64) -> Ring {
    let f = |p: [f64; 2]| a * p[0] + b * p[1] + c;
    let n = ring.len();
    let mut out = Vec::with_capacity(n + 2);
    for i in 0..n {
        let (p, q) = (ring[i], ring[(i + 1) % n]);
        let (fp, fq) = (f(p), f(q));
        if fp >= 0.0 {
            out.push(p);
        }
        if (fp >= 0.0) != (fq >= 0.0) {
            let t = fp / (fp - fq);
            out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
    }
    out
}

/// Clips every ring of a region against a half-plane.
pub fn clip_half_plane(r: &Region, a: f64, b: f64, c: f64) -> Region {
    let rings: Vec<Ring> = to_rings(r)
        .iter()
        .map(|ring| clip_ring_half_plane(ring, a, b, c))
        .collect();
    from_rings(&rings)
}

/// A rectangle of given bounds clipped to a half-plane, as a region.
pub fn half_plane_in_box(a: f64, b: f64, c: f64, bounds: [f64; 4]) -> Region {
    let [x0, y0, x1, y1] = bounds;
    let ring = clip_ring_half_plane(&[[x0, y0], [x1, y0], [x1, y1], [x0, y1]], a, b, c);
    from_rings(&[ring])
}

pub fn bounds(r: &Region) -> Option<[f64; 4]> {
    let mut b = [
        f64::INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::NEG_INFINITY,
    ];
    let mut any = false;
    for ring in to_rings(r) {
        for p in ring {
            any = true;
            b[0] = b[0].min(p[0]);
            b[1] = b[1].min(p[1]);
            b[2] = b[2].max(p[0]);
            b[3] = b[3].max(p[1]);
        }
    }
    any.then_some(b)
}

/// Binary image sampled at pixel centers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|v| **v).count()
    }

    /// Intersection-over-union; `None` when both masks are empty.
    pub fn iou(&self, other: &Mask) -> Option<f64> {
        assert_eq!((self.width, self.height), (other.width, other.height));
        let (mut inter, mut uni) = (0usize, 0usize);
        for (a, b) in self.data.iter().zip(&other.data) {
            inter += (*a && *b) as usize;
            uni += (*a || *b) as usize;
        }
        (uni > 0).then(|| inter as f64 / uni as f64)
    }

    /// Square (Chebyshev) dilation by `radius` pixels.
    pub fn dilate(&self, radius: usize) -> Mask {
        let mut out = Mask::new(self.width, self.height);
        let r = radius as isize;
        for y in 0..self.height {
            for x in 0..self.width {
                if !self.get(x, y) {
                    continue;
                }
                for dy in -r..=r {
                    for dx in -r..=r {
                        let (nx, ny) = (x as isize + dx, y as isize + dy);
                        if nx >= 0
                            && ny >= 0
                            && (nx as usize) < self.width
                            && (ny as usize) < self.height
                        {
                            out.set(nx as usize, ny as usize, true);
                        }
                    }
                }
            }
        }
        out
    }

    pub fn erode(&self, radius: usize) -> Mask {
        let mut inv = self.clone();
        inv.data.iter_mut().for_each(|v| *v = !*v);
        let mut d = inv.dilate(radius);
        d.data.iter_mut().for_each(|v| *v = !*v);
        d
    }
}

/// Even-odd scanline fill at pixel centers `(c + 0.5, r + 0.5)`.
pub fn rasterize(r: &Region, width: usize, height: usize) -> Mask {
    let mut mask = Mask::new(width, height);
    let segs = segments(r);
    if segs.is_empty() {
        return mask;
    }
    let mut xs: Vec<f64> = Vec::new();
    for row in 0..height {
        let y = row as f64 + 0.5;
        xs.clear();
        for (a, b) in &segs {
            if (a[1] > y) != (b[1] > y) {
                xs.push(a[0] + (y - a[1]) * (b[0] - a[0]) / (b[1] - a[1]));
            }
        }
        xs.sort_by(f64::total_cmp);
        for span in xs.chunks_exact(2) {
            // columns whose center lies in [x0, x1)
            let c0 = (span[0] - 0.5).ceil().max(0.0) as usize;
            let c1 = ((span[1] - 0.5).ceil().max(0.0) as usize).min(width);
            for c in c0..c1 {
                mask.set(c, row, true);
            }
        }
    }
    mask
}
