//! Uniform right-isoceles triangulations of the unit square.

use crate::error::{Error, Result};
use crate::field::Point;

/// Uniform triangulation of `(0,1)²` with `n_div` cells per side.
///
/// Every square cell `[i h, (i+1) h] × [j h, (j+1) h]` is split along the
/// diagonal from its lower-left to its upper-right corner. Node `(i, j)` has
/// index `j (n_div + 1) + i`; the two triangles of cell `(i, j)` have indices
/// `2 (j n_div + i)` (below the diagonal) and `2 (j n_div + i) + 1` (above it).
/// Both are stored counterclockwise.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangularMesh {
    n_div: usize,
    h: f64,
    nodes: Vec<Point>,
    elements: Vec<[usize; 3]>,
    boundary_mask: Vec<bool>,
}

/// Builds the uniform mesh with `n_div` subdivisions per side.
pub fn build_mesh(n_div: usize) -> Result<TriangularMesh> {
    TriangularMesh::new(n_div)
}

impl TriangularMesh {
    pub fn new(n_div: usize) -> Result<Self> {
        if n_div < 2 {
            return Err(Error::TooCoarse(n_div));
        }
        let h = 1.0 / n_div as f64;
        let side = n_div + 1;

        let mut nodes = Vec::with_capacity(side * side);
        let mut boundary_mask = Vec::with_capacity(side * side);
        for j in 0..side {
            for i in 0..side {
                nodes.push([i as f64 * h, j as f64 * h]);
                boundary_mask.push(i == 0 || j == 0 || i == n_div || j == n_div);
            }
        }

        let mut elements = Vec::with_capacity(2 * n_div * n_div);
        for j in 0..n_div {
            for i in 0..n_div {
                let v00 = j * side + i;
                let v10 = v00 + 1;
                let v01 = v00 + side;
                let v11 = v01 + 1;
                elements.push([v00, v10, v11]);
                elements.push([v00, v11, v01]);
            }
        }

        Ok(Self {
            n_div,
            h,
            nodes,
            elements,
            boundary_mask,
        })
    }

    pub fn n_div(&self) -> usize {
        self.n_div
    }

    /// Cell side length `1 / n_div`.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary_mask
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn num_interior_nodes(&self) -> usize {
        (self.n_div - 1) * (self.n_div - 1)
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * (self.n_div + 1) + i
    }

    pub fn signed_area(&self, element: usize) -> f64 {
        let [a, b, c] = self.elements[element].map(|v| self.nodes[v]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    /// Maps barycentric coordinates on `element` to a physical point.
    pub fn barycentric_to_point(&self, element: usize, bary: [f64; 3]) -> Point {
        let [a, b, c] = self.elements[element].map(|v| self.nodes[v]);
        [
            bary[0] * a[0] + bary[1] * b[0] + bary[2] * c[0],
            bary[0] * a[1] + bary[1] * b[1] + bary[2] * c[1],
        ]
    }

    /// Finds the element containing `p` together with its barycentric
    /// coordinates. Points outside the closed square are clamped onto it.
    pub fn locate(&self, p: Point) -> (usize, [f64; 3]) {
        let n = self.n_div as f64;
        let sx = (p[0].clamp(0.0, 1.0)) * n;
        let sy = (p[1].clamp(0.0, 1.0)) * n;
        let i = (sx.floor() as usize).min(self.n_div - 1);
        let j = (sy.floor() as usize).min(self.n_div - 1);
        let xi = sx - i as f64;
        let eta = sy - j as f64;
        let cell = 2 * (j * self.n_div + i);
        if xi >= eta {
            (cell, [1.0 - xi, xi - eta, eta])
        } else {
            (cell + 1, [1.0 - eta, xi, eta - xi])
        }
    }

    /// Evaluates the P1 interpolant with nodal values `coeffs` at `p`.
    pub fn eval_p1(&self, coeffs: &[f64], p: Point) -> f64 {
        let (e, bary) = self.locate(p);
        let [a, b, c] = self.elements[e];
        bary[0] * coeffs[a] + bary[1] * coeffs[b] + bary[2] * coeffs[c]
    }

    /// Edge diameter of every element (the hypotenuse, `h √2`).
    pub fn element_diameter(&self) -> f64 {
        self.h * std::f64::consts::SQRT_2
    }
}
