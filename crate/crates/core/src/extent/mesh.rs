use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};

use super::{ExtentError, PlanarPolygonSet};
use crate::annotations::StructuralClass;
use crate::geometry::Vec3;
use crate::region;
use crate::ElementId;

/// Triangle mesh with one element label and class per triangle.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LayoutMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    pub element_ids: Vec<ElementId>,
    pub classes: Vec<StructuralClass>,
}

impl LayoutMesh {
    pub fn triangle(&self, k: usize) -> [Vec3; 3] {
        self.triangles[k].map(|i| self.vertices[i as usize])
    }

    pub fn triangle_area(&self, k: usize) -> f64 {
        let [a, b, c] = self.triangle(k);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    /// Summed triangle area per element.
    pub fn element_areas(&self) -> BTreeMap<ElementId, f64> {
        let mut out = BTreeMap::new();
        for k in 0..self.triangles.len() {
            *out.entry(self.element_ids[k]).or_insert(0.0) += self.triangle_area(k);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }
}

fn triangulate_one(set: &PlanarPolygonSet, mesh: &mut LayoutMesh) -> Result<(), ExtentError> {
    let fail = |reason: String| ExtentError::TriangulationFailure {
        element: set.element_id,
        reason,
    };
    let expected = set.area();
    let mut got = 0.0;
    for (outer, holes) in region::components(&set.region) {
        let mut flat = Vec::new();
        let mut hole_idx = Vec::new();
        for p in &outer {
            flat.extend_from_slice(p);
        }
        for h in &holes {
            hole_idx.push(flat.len() / 2);
            for p in h {
                flat.extend_from_slice(p);
            }
        }
        let idx = earcutr::earcut(&flat, &hole_idx, 2).map_err(|e| fail(format!("{e:?}")))?;
        let base = mesh.vertices.len() as u32;
        let pts: Vec<[f64; 2]> = flat.chunks(2).map(|c| [c[0], c[1]]).collect();
        mesh.vertices
            .extend(pts.iter().map(|p| set.basis.to_3d(*p)));
        for t in idx.chunks(3) {
            let [a, b, c] = [pts[t[0]], pts[t[1]], pts[t[2]]];
            let area2 = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
            if area2.abs() <= 1e-15 {
                continue;
            }
            got += 0.5 * area2.abs();
            mesh.triangles
                .push([base + t[0] as u32, base + t[1] as u32, base + t[2] as u32]);
            mesh.element_ids.push(set.element_id);
            mesh.classes.push(set.class);
        }
    }
    if expected > 0.0 && ((got - expected) / expected).abs() > 1e-6 {
        return Err(fail(format!(
            "triangle area {got} differs from polygon area {expected}"
        )));
    }
    Ok(())
}

/// Triangulates every polygon set; empty extents contribute nothing.
/// Elements that fail are left out and reported.
pub fn triangulate(sets: &[PlanarPolygonSet]) -> (LayoutMesh, Vec<ExtentError>) {
    let mut mesh = LayoutMesh::default();
    let mut errors = Vec::new();
    for set in sets {
        let (nv, nt) = (mesh.vertices.len(), mesh.triangles.len());
        if let Err(e) = triangulate_one(set, &mut mesh) {
            mesh.vertices.truncate(nv);
            mesh.triangles.truncate(nt);
            mesh.element_ids.truncate(nt);
            mesh.classes.truncate(nt);
            errors.push(e);
        }
    }
    (mesh, errors)
}

/// Mesh of structural extents and openings. Each opening is cut out of its
/// host surface so no two triangles overlap.
pub fn assemble_mesh(
    structural: &BTreeMap<ElementId, PlanarPolygonSet>,
    openings: &[PlanarPolygonSet],
    hosts: &BTreeMap<ElementId, ElementId>,
) -> (LayoutMesh, Vec<ExtentError>) {
    let mut sets: Vec<PlanarPolygonSet> = structural.values().cloned().collect();
    for o in openings {
        if let Some(h) = hosts.get(&o.element_id) {
            if let Some(host) = sets.iter_mut().find(|s| s.element_id == *h) {
                host.region = region::difference(&host.region, &o.region);
            }
        }
    }
    sets.extend(openings.iter().cloned());
    triangulate(&sets)
}

/// Binary little-endian PLY with `element_id` and `class_id` per face.
pub fn write_ply(mesh: &LayoutMesh, mut w: impl Write) -> std::io::Result<()> {
    write!(
        w,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n\
         element face {}\nproperty list uchar int vertex_indices\nproperty int element_id\nproperty int class_id\nend_header\n",
        mesh.vertices.len(),
        mesh.triangles.len()
    )?;
    for v in &mesh.vertices {
        for c in [v.x, v.y, v.z] {
            w.write_all(&c.to_le_bytes())?;
        }
    }
    for k in 0..mesh.triangles.len() {
        w.write_all(&[3u8])?;
        for i in mesh.triangles[k] {
            w.write_all(&(i as i32).to_le_bytes())?;
        }
        w.write_all(&(mesh.element_ids[k].0 as i32).to_le_bytes())?;
        w.write_all(&(mesh.classes[k].id() as i32).to_le_bytes())?;
    }
    Ok(())
}

/// Reads meshes in the layout produced by [`write_ply`].
pub fn read_ply(mut r: impl BufRead) -> Result<LayoutMesh, ExtentError> {
    let bad = |m: &str| ExtentError::Format(m.to_string());
    let mut header = Vec::new();
    loop {
        let mut line = String::new();
        if r.read_line(&mut line)? == 0 {
            return Err(bad("missing end_header"));
        }
        let line = line.trim().to_string();
        if line == "end_header" {
            break;
        }
        header.push(line);
    }
    if header.first().map(String::as_str) != Some("ply")
        || !header
            .iter()
            .any(|l| l == "format binary_little_endian 1.0")
    {
        return Err(bad("expected a binary little-endian PLY"));
    }
    let count = |name: &str| -> Result<usize, ExtentError> {
        header
            .iter()
            .find_map(|l| l.strip_prefix(&format!("element {name} ")))
            .and_then(|n| n.trim().parse().ok())
            .ok_or_else(|| bad(&format!("missing element {name}")))
    };
    let expected_props = [
        "property double x",
        "property double y",
        "property double z",
        "property list uchar int vertex_indices",
        "property int element_id",
        "property int class_id",
    ];
    let props: Vec<&str> = header
        .iter()
        .filter(|l| l.starts_with("property"))
        .map(String::as_str)
        .collect();
    if props != expected_props {
        return Err(bad("unsupported property layout"));
    }
    let (nv, nf) = (count("vertex")?, count("face")?);
    let mut buf8 = [0u8; 8];
    let mut buf4 = [0u8; 4];
    let mut mesh = LayoutMesh::default();
    for _ in 0..nv {
        let mut c = [0.0; 3];
        for x in &mut c {
            r.read_exact(&mut buf8)?;
            *x = f64::from_le_bytes(buf8);
        }
        mesh.vertices.push(Vec3::new(c[0], c[1], c[2]));
    }
    let mut read_i32 = |r: &mut dyn Read| -> Result<i32, ExtentError> {
        r.read_exact(&mut buf4)?;
        Ok(i32::from_le_bytes(buf4))
    };
    for _ in 0..nf {
        let mut n = [0u8];
        r.read_exact(&mut n)?;
        if n[0] != 3 {
            return Err(bad("only triangles are supported"));
        }
        let mut t = [0u32; 3];
        for i in &mut t {
            let v = read_i32(&mut r)?;
            if v < 0 || v as usize >= nv {
                return Err(bad("vertex index out of range"));
            }
            *i = v as u32;
        }
        let id = read_i32(&mut r)?;
        let class = read_i32(&mut r)?;
        let class = u8::try_from(class)
            .ok()
            .and_then(StructuralClass::from_id)
            .ok_or_else(|| bad("unknown class id"))?;
        mesh.triangles.push(t);
        mesh.element_ids.push(ElementId(
            u32::try_from(id).map_err(|_| bad("negative element id"))?,
        ));
        mesh.classes.push(class);
    }
    Ok(mesh)
}

/// Wavefront OBJ with one group per element.
pub fn write_obj(mesh: &LayoutMesh, mut w: impl Write) -> std::io::Result<()> {
    for v in &mesh.vertices {
        writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
    }
    let mut current = None;
    for k in 0..mesh.triangles.len() {
        let id = mesh.element_ids[k];
        if current != Some(id) {
            writeln!(w, "g element_{}_{:?}", id.0, mesh.classes[k])?;
            current = Some(id);
        }
        let [a, b, c] = mesh.triangles[k];
        writeln!(w, "f {} {} {}", a + 1, b + 1, c + 1)?;
    }
    Ok(())
}
