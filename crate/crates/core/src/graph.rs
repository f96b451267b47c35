//! Compartment networks, weighted Laplacians and equitable partitions.
//!
//! Compartments are graph vertices classed `A` or `B`; channels are edges
//! whose weight is `diffusivity / (length * width)` in s⁻¹. The partition
//! into the two classes is *equitable* when every vertex of one class sends
//! the same total edge weight into the other class; an equitable network
//! reduces to a 2×2 quotient Laplacian acting on class-homogeneous states.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cell type hosted by a compartment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellClass {
    A,
    B,
}

/// One compartment: a well-mixed chamber holding a colony of one cell type.
#[derive(Debug, Clone, PartialEq)]
pub struct Compartment {
    pub id: String,
    pub class: CellClass,
}

/// One channel between two compartments; `length` in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Channel {
    pub a: usize,
    pub b: usize,
    pub length: f64,
}

/// How channel widths are determined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelWidth {
    /// One global width in meters for every channel.
    Global(f64),
    /// Width derived per edge as `length / factor`.
    LengthFactor(f64),
}

/// Weight of a channel of length `l` and width `w` for species diffusing
/// with coefficient `d` (all SI): `d / (l * w)` in s⁻¹.
pub fn edge_weight(length: f64, width: f64, diffusivity: f64) -> Result<f64> {
    if !(length > 0.0) || !(width > 0.0) || !(diffusivity > 0.0) {
        return Err(Error::domain(format!(
            "channel geometry must be positive: length {length}, width {width}, diffusivity {diffusivity}"
        )));
    }
    Ok(diffusivity / (length * width))
}

/// An undirected compartment network with channel geometry.
///
/// Vertices are stored A-class first; constructors re-order their input and
/// keep the caller's ids, so downstream matrices always follow the A-first
/// labeling convention.
#[derive(Debug, Clone)]
pub struct CompartmentGraph {
    vertices: Vec<Compartment>,
    edges: Vec<Channel>,
    width: ChannelWidth,
    diffusivity: f64,
}

impl CompartmentGraph {
    pub fn new(
        vertices: Vec<Compartment>,
        edges: Vec<Channel>,
        width: ChannelWidth,
        diffusivity: f64,
    ) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::domain("graph needs at least one compartment"));
        }
        for (i, v) in vertices.iter().enumerate() {
            if vertices[..i].iter().any(|u| u.id == v.id) {
                return Err(Error::domain(format!("duplicate compartment id '{}'", v.id)));
            }
        }
        match width {
            ChannelWidth::Global(w) if !(w > 0.0) => {
                return Err(Error::domain("channel width must be positive"));
            }
            ChannelWidth::LengthFactor(k) if !(k > 0.0) => {
                return Err(Error::domain("width factor must be positive"));
            }
            _ => {}
        }
        if !(diffusivity > 0.0) {
            return Err(Error::domain("diffusivity must be positive"));
        }

        // Re-label A-class compartments first, keeping the input order within
        // each class.
        let mut order: Vec<usize> = (0..vertices.len()).collect();
        order.sort_by_key(|&i| match vertices[i].class {
            CellClass::A => 0,
            CellClass::B => 1,
        });
        let mut new_index = vec![0usize; vertices.len()];
        for (new, &old) in order.iter().enumerate() {
            new_index[old] = new;
        }
        let vertices: Vec<Compartment> = order.iter().map(|&i| vertices[i].clone()).collect();
        let edges: Vec<Channel> = edges
            .into_iter()
            .map(|e| Channel { a: new_index[e.a], b: new_index[e.b], length: e.length })
            .collect();

        for e in &edges {
            if e.a >= vertices.len() || e.b >= vertices.len() {
                return Err(Error::domain("channel endpoint out of range"));
            }
            if e.a == e.b {
                return Err(Error::domain("channel endpoints must differ"));
            }
            if !(e.length > 0.0) {
                return Err(Error::domain("channel length must be positive"));
            }
        }

        Ok(CompartmentGraph { vertices, edges, width, diffusivity })
    }

    /// Symmetric two-compartment network (one A, one B, one channel).
    pub fn two_compartment(length: f64, width: ChannelWidth, diffusivity: f64) -> Result<Self> {
        CompartmentGraph::new(
            vec![
                Compartment { id: "A1".into(), class: CellClass::A },
                Compartment { id: "B1".into(), class: CellClass::B },
            ],
            vec![Channel { a: 0, b: 1, length }],
            width,
            diffusivity,
        )
    }

    pub fn vertices(&self) -> &[Compartment] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Channel] {
        &self.edges
    }

    pub fn diffusivity(&self) -> f64 {
        self.diffusivity
    }

    pub fn width(&self) -> ChannelWidth {
        self.width
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn n_a(&self) -> usize {
        self.vertices.iter().filter(|v| v.class == CellClass::A).count()
    }

    pub fn n_b(&self) -> usize {
        self.len() - self.n_a()
    }

    fn channel_width(&self, e: &Channel) -> f64 {
        match self.width {
            ChannelWidth::Global(w) => w,
            ChannelWidth::LengthFactor(k) => e.length / k,
        }
    }

    /// Weight of one stored channel.
    pub fn channel_weight(&self, e: &Channel) -> Result<f64> {
        edge_weight(e.length, self.channel_width(e), self.diffusivity)
    }

    /// Weighted Laplacian in the A-first labeling: off-diagonal `d_ij`,
    /// diagonal minus the row sum of off-diagonals.
    pub fn laplacian(&self) -> Result<DMatrix<f64>> {
        let n = self.len();
        let mut l = DMatrix::zeros(n, n);
        for e in &self.edges {
            let d = self.channel_weight(e)?;
            l[(e.a, e.b)] += d;
            l[(e.b, e.a)] += d;
            l[(e.a, e.a)] -= d;
            l[(e.b, e.b)] -= d;
        }
        Ok(l)
    }

    /// Weighted Laplacian re-labelled with B-class compartments first, as the
    /// reverse-direction transceiver sees it.
    pub fn laplacian_b_first(&self) -> Result<DMatrix<f64>> {
        let l = self.laplacian()?;
        let (n_a, n) = (self.n_a(), self.len());
        let perm: Vec<usize> = (n_a..n).chain(0..n_a).collect();
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = l[(perm[i], perm[j])];
            }
        }
        Ok(out)
    }

    /// Verifies the class partition is equitable and builds the quotient.
    ///
    /// For each vertex the total edge weight into the *other* class must be
    /// invariant within its class, up to relative tolerance `tol`. On failure
    /// the error names the worst-offending vertex pair and the discrepancy.
    pub fn check_equitable(&self, tol: f64) -> Result<LaplacianPair> {
        let full = self.laplacian()?;
        let n = self.len();
        let mut cross = vec![0.0f64; n];
        for e in &self.edges {
            if self.vertices[e.a].class != self.vertices[e.b].class {
                let d = self.channel_weight(e)?;
                cross[e.a] += d;
                cross[e.b] += d;
            }
        }

        let mut dbar = [0.0f64; 2];
        for class in [CellClass::A, CellClass::B] {
            let members: Vec<usize> = (0..n)
                .filter(|&i| self.vertices[i].class == class)
                .collect();
            if members.is_empty() {
                return Err(Error::domain("both compartment classes must be nonempty"));
            }
            let mut lo = members[0];
            let mut hi = members[0];
            for &i in &members[1..] {
                if cross[i] < cross[lo] {
                    lo = i;
                }
                if cross[i] > cross[hi] {
                    hi = i;
                }
            }
            let spread = cross[hi] - cross[lo];
            let scale = cross[hi].abs().max(1e-300);
            if spread > tol * scale {
                return Err(Error::NotEquitable {
                    vertex_a: self.vertices[hi].id.clone(),
                    vertex_b: self.vertices[lo].id.clone(),
                    discrepancy: spread,
                    relative: spread / scale,
                });
            }
            let mean = members.iter().map(|&i| cross[i]).sum::<f64>() / members.len() as f64;
            dbar[if class == CellClass::A { 0 } else { 1 }] = mean;
        }

        let quotient = DMatrix::from_row_slice(
            2,
            2,
            &[-dbar[0], dbar[0], dbar[1], -dbar[1]],
        );
        let class_map = self
            .vertices
            .iter()
            .map(|v| if v.class == CellClass::A { 0 } else { 1 })
            .collect();
        Ok(LaplacianPair { full, quotient, class_map, dbar_ab: dbar[0], dbar_ba: dbar[1] })
    }
}

/// A full Laplacian together with its 2×2 quotient.
#[derive(Debug, Clone)]
pub struct LaplacianPair {
    /// N×N Laplacian, A-first labeling (s⁻¹).
    pub full: DMatrix<f64>,
    /// 2×2 quotient Laplacian (s⁻¹).
    pub quotient: DMatrix<f64>,
    /// Class index per vertex: 0 for A, 1 for B.
    pub class_map: Vec<usize>,
    /// Common edge weight from any A compartment into class B (s⁻¹).
    pub dbar_ab: f64,
    /// Common edge weight from any B compartment into class A (s⁻¹).
    pub dbar_ba: f64,
}
