//! Structured meshes of the unit square with globally oriented edges.

use crate::error::{Error, Result};
use crate::geometry::GeoMap;
use nalgebra::Point2;
use std::collections::HashMap;
use std::fmt::Write as _;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Shape {
    Triangle,
    Quadrilateral,
}

impl Shape {
    pub fn n_vertices(self) -> usize {
        match self {
            Shape::Triangle => 3,
            Shape::Quadrilateral => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Shape::Triangle => "triangle",
            Shape::Quadrilateral => "quadrilateral",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MeshFamily {
    Rect,
    Tri,
    Trap,
}

impl MeshFamily {
    pub fn name(self) -> &'static str {
        match self {
            MeshFamily::Rect => "rect",
            MeshFamily::Tri => "tri",
            MeshFamily::Trap => "trap",
        }
    }

    pub fn shape(self) -> Shape {
        match self {
            MeshFamily::Tri => Shape::Triangle,
            MeshFamily::Rect | MeshFamily::Trap => Shape::Quadrilateral,
        }
    }

    pub fn is_affine(self) -> bool {
        !matches!(self, MeshFamily::Trap)
    }
}

impl std::str::FromStr for MeshFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rect" => Ok(MeshFamily::Rect),
            "tri" => Ok(MeshFamily::Tri),
            "trap" => Ok(MeshFamily::Trap),
            _ => Err(Error::Study(format!("unknown mesh family `{s}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Element {
    pub shape: Shape,
    /// Counterclockwise.
    pub vertex_ids: Vec<usize>,
    /// Local edge `l` joins local vertices `l` and `l+1`.
    pub edge_ids: Vec<usize>,
    /// `+1` when the outward normal of local edge `l` agrees with the global
    /// edge normal, `-1` otherwise.
    pub edge_signs: Vec<i8>,
}

/// Global direction runs from `vertex_ids[0]` to `vertex_ids[1]` and the
/// global normal is that direction rotated clockwise. Interior edges put the
/// lower vertex id first; boundary edges are directed so the normal is
/// outward from the domain.
#[derive(Clone, Debug)]
pub struct Edge {
    pub vertex_ids: [usize; 2],
    pub adjacent_element_ids: Vec<usize>,
    pub boundary: bool,
}

#[derive(Clone, Debug)]
pub struct Mesh2D {
    pub vertices: Vec<Point2<f64>>,
    pub elements: Vec<Element>,
    pub edges: Vec<Edge>,
    pub family: MeshFamily,
    pub h: f64,
}

fn check_level(i: u32) -> Result<usize> {
    if !(1..=8).contains(&i) {
        return Err(Error::LevelOutOfRange(i));
    }
    Ok(1usize << i)
}

fn grid_vertices(n: usize, offset: impl Fn(usize, usize) -> f64) -> Vec<Point2<f64>> {
    let h = 1.0 / n as f64;
    let mut v = Vec::with_capacity((n + 1) * (n + 1));
    for r in 0..=n {
        for c in 0..=n {
            v.push(Point2::new(c as f64 * h, r as f64 * h + offset(c, r)));
        }
    }
    v
}

fn grid_quads(n: usize) -> Vec<Vec<usize>> {
    let id = |c: usize, r: usize| r * (n + 1) + c;
    let mut cells = Vec::with_capacity(n * n);
    for r in 0..n {
        for c in 0..n {
            cells.push(vec![id(c, r), id(c + 1, r), id(c + 1, r + 1), id(c, r + 1)]);
        }
    }
    cells
}

/// Uniform `2^i x 2^i` grid of squares with `h = 2^{-i}`.
pub fn build_rect_mesh(i: u32) -> Result<Mesh2D> {
    let n = check_level(i)?;
    let vertices = grid_vertices(n, |_, _| 0.0);
    Ok(Mesh2D::from_cells(
        vertices,
        grid_quads(n),
        MeshFamily::Rect,
        1.0 / n as f64,
    ))
}

/// Each square of the rectangular grid split along its lower-left to
/// upper-right diagonal.
pub fn build_tri_mesh(i: u32) -> Result<Mesh2D> {
    let n = check_level(i)?;
    let vertices = grid_vertices(n, |_, _| 0.0);
    let cells = grid_quads(n)
        .into_iter()
        .flat_map(|q| [vec![q[0], q[1], q[2]], vec![q[0], q[2], q[3]]])
        .collect();
    Ok(Mesh2D::from_cells(
        vertices,
        cells,
        MeshFamily::Tri,
        1.0 / n as f64,
    ))
}

/// Trapezoids of width `h` whose vertical sides measure `0.75h` and `1.25h`.
///
/// Vertices on odd grid rows are lifted by `+h/4` on even grid columns and
/// lowered by `h/4` on odd ones; even rows (including `y = 0` and `y = 1`)
/// stay on the grid.
pub fn build_trap_mesh(i: u32) -> Result<Mesh2D> {
    let n = check_level(i)?;
    let h = 1.0 / n as f64;
    let vertices = grid_vertices(n, |c, r| {
        if r % 2 == 1 {
            if c % 2 == 0 {
                0.25 * h
            } else {
                -0.25 * h
            }
        } else {
            0.0
        }
    });
    Ok(Mesh2D::from_cells(
        vertices,
        grid_quads(n),
        MeshFamily::Trap,
        h,
    ))
}

pub fn build_mesh(family: MeshFamily, i: u32) -> Result<Mesh2D> {
    match family {
        MeshFamily::Rect => build_rect_mesh(i),
        MeshFamily::Tri => build_tri_mesh(i),
        MeshFamily::Trap => build_trap_mesh(i),
    }
}

impl Mesh2D {
    /// Builds topology for counterclockwise cells and orients the edges.
    pub fn from_cells(
        vertices: Vec<Point2<f64>>,
        cells: Vec<Vec<usize>>,
        family: MeshFamily,
        h: f64,
    ) -> Self {
        let elements = cells
            .into_iter()
            .map(|vertex_ids| Element {
                shape: if vertex_ids.len() == 3 {
                    Shape::Triangle
                } else {
                    Shape::Quadrilateral
                },
                edge_ids: Vec::new(),
                edge_signs: Vec::new(),
                vertex_ids,
            })
            .collect();
        Mesh2D {
            vertices,
            elements,
            edges: Vec::new(),
            family,
            h,
        }
        .orient_edges()
    }

    /// Rebuilds the edge list from element connectivity. Edges are numbered
    /// in order of first appearance; each element records the sign of its
    /// outward normal against the global one.
    pub fn orient_edges(mut self) -> Self {
        let mut lookup: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        for (eid, el) in self.elements.iter_mut().enumerate() {
            let nv = el.vertex_ids.len();
            el.edge_ids.clear();
            el.edge_signs.clear();
            for l in 0..nv {
                let a = el.vertex_ids[l];
                let b = el.vertex_ids[(l + 1) % nv];
                let key = (a.min(b), a.max(b));
                let id = *lookup.entry(key).or_insert_with(|| {
                    edges.push(Edge {
                        vertex_ids: [key.0, key.1],
                        adjacent_element_ids: Vec::new(),
                        boundary: false,
                    });
                    edges.len() - 1
                });
                edges[id].adjacent_element_ids.push(eid);
                el.edge_ids.push(id);
                el.edge_signs.push(if a < b { 1 } else { -1 });
            }
        }
        for e in &mut edges {
            e.boundary = e.adjacent_element_ids.len() == 1;
        }
        self.edges = edges;
        self.orient_boundary_outward();
        self
    }

    /// Boundary edges take the direction of their single element so that
    /// the global normal points out of the domain.
    fn orient_boundary_outward(&mut self) {
        for (id, e) in self.edges.iter_mut().enumerate() {
            if !e.boundary {
                continue;
            }
            let el = &mut self.elements[e.adjacent_element_ids[0]];
            let l = el.edge_ids.iter().position(|&x| x == id).unwrap();
            if el.edge_signs[l] < 0 {
                e.vertex_ids.swap(0, 1);
                el.edge_signs[l] = 1;
            }
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_boundary_edges(&self) -> usize {
        self.edges.iter().filter(|e| e.boundary).count()
    }

    pub fn element_vertices(&self, e: usize) -> Vec<Point2<f64>> {
        self.elements[e]
            .vertex_ids
            .iter()
            .map(|&v| self.vertices[v])
            .collect()
    }

    pub fn geo_map(&self, e: usize) -> GeoMap {
        let v = self.element_vertices(e);
        match self.elements[e].shape {
            Shape::Triangle => GeoMap::triangle([v[0], v[1], v[2]]),
            Shape::Quadrilateral => GeoMap::quadrilateral([v[0], v[1], v[2], v[3]]),
        }
    }

    pub fn element_area(&self, e: usize) -> f64 {
        let v = self.element_vertices(e);
        let n = v.len();
        0.5 * (0..n)
            .map(|i| {
                let (a, b) = (v[i], v[(i + 1) % n]);
                a.x * b.y - b.x * a.y
            })
            .sum::<f64>()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_elements()).map(|e| self.element_area(e)).sum()
    }

    /// Relabels vertices by `perm` (old id -> new id) and rebuilds the edge
    /// orientation. Element order and local vertex order are kept.
    pub fn relabel_vertices(&self, perm: &[usize]) -> Mesh2D {
        assert_eq!(perm.len(), self.n_vertices());
        let mut vertices = vec![Point2::origin(); self.n_vertices()];
        for (old, &new) in perm.iter().enumerate() {
            vertices[new] = self.vertices[old];
        }
        let cells = self
            .elements
            .iter()
            .map(|el| el.vertex_ids.iter().map(|&v| perm[v]).collect())
            .collect();
        Mesh2D::from_cells(vertices, cells, self.family, self.h)
    }

    /// Plain-text dump: `v x y` per vertex, `e shape v0 v1 ...` per element.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            let _ = writeln!(out, "v {} {}", v.x, v.y);
        }
        for el in &self.elements {
            let _ = write!(out, "e {}", el.shape.name());
            for v in &el.vertex_ids {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
        out
    }
}
