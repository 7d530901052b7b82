//! Sampled fields on rectangular lattices.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::geometry::{lattice_indices, BoxDomain};

/// A map sampled on a rectangular vertex lattice with Dirichlet boundary
/// flags. Nodes on the outermost layer are frozen by default; frozen values
/// never change during minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    box_domain: BoxDomain,
    nodes_per_axis: Vec<usize>,
    spacing: Vec<f64>,
    n_comp: usize,
    /// Node-major storage: `values[node * n_comp + c]`.
    values: Vec<f64>,
    dirichlet: Vec<bool>,
}

impl GridField {
    /// Zero-initialized field; outermost nodes are flagged Dirichlet.
    pub fn zeros(box_domain: &BoxDomain, nodes_per_axis: &[usize], n_comp: usize) -> Result<Self> {
        if nodes_per_axis.len() != box_domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: box_domain.dim(),
                got: nodes_per_axis.len(),
                context: "grid axes",
            });
        }
        if nodes_per_axis.iter().any(|&k| k < 3) {
            return Err(Error::invalid("grid needs at least 3 nodes per axis"));
        }
        if n_comp == 0 {
            return Err(Error::invalid("grid field needs at least one component"));
        }
        let spacing: Vec<f64> = (0..box_domain.dim())
            .map(|a| box_domain.side(a) / (nodes_per_axis[a] - 1) as f64)
            .collect();
        let total: usize = nodes_per_axis.iter().product();
        let mut field = Self {
            box_domain: box_domain.clone(),
            nodes_per_axis: nodes_per_axis.to_vec(),
            spacing,
            n_comp,
            values: vec![0.0; total * n_comp],
            dirichlet: vec![false; total],
        };
        for idx in lattice_indices(nodes_per_axis) {
            if field.is_boundary(&idx) {
                let flat = field.flat_index(&idx);
                field.dirichlet[flat] = true;
            }
        }
        Ok(field)
    }

    /// Sample `f` at every node.
    pub fn sample(
        box_domain: &BoxDomain,
        nodes_per_axis: &[usize],
        n_comp: usize,
        f: impl Fn(&[f64]) -> DVector<f64>,
    ) -> Result<Self> {
        let mut field = Self::zeros(box_domain, nodes_per_axis, n_comp)?;
        for idx in lattice_indices(nodes_per_axis) {
            let x = field.node_coords(&idx);
            let v = f(&x);
            field.set_value(&idx, v.as_slice());
        }
        Ok(field)
    }

    pub fn box_domain(&self) -> &BoxDomain {
        &self.box_domain
    }

    pub fn dim(&self) -> usize {
        self.nodes_per_axis.len()
    }

    pub fn components(&self) -> usize {
        self.n_comp
    }

    pub fn nodes_per_axis(&self) -> &[usize] {
        &self.nodes_per_axis
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn node_count(&self) -> usize {
        self.nodes_per_axis.iter().product()
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for (a, &i) in idx.iter().enumerate() {
            debug_assert!(i < self.nodes_per_axis[a]);
            flat = flat * self.nodes_per_axis[a] + i;
        }
        flat
    }

    pub fn node_coords(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .enumerate()
            .map(|(a, &i)| self.box_domain.lo[a] + i as f64 * self.spacing[a])
            .collect()
    }

    pub fn is_boundary(&self, idx: &[usize]) -> bool {
        idx.iter()
            .enumerate()
            .any(|(a, &i)| i == 0 || i + 1 == self.nodes_per_axis[a])
    }

    /// Nodes whose full central stencil exists (at least one cell from every
    /// face).
    pub fn is_interior(&self, idx: &[usize]) -> bool {
        !self.is_boundary(idx)
    }

    pub fn is_dirichlet(&self, idx: &[usize]) -> bool {
        self.dirichlet[self.flat_index(idx)]
    }

    pub fn set_dirichlet(&mut self, idx: &[usize], frozen: bool) {
        let flat = self.flat_index(idx);
        self.dirichlet[flat] = frozen;
    }

    pub fn value_at(&self, idx: &[usize]) -> DVector<f64> {
        let flat = self.flat_index(idx) * self.n_comp;
        DVector::from_column_slice(&self.values[flat..flat + self.n_comp])
    }

    pub fn set_value(&mut self, idx: &[usize], v: &[f64]) {
        debug_assert_eq!(v.len(), self.n_comp);
        let flat = self.flat_index(idx) * self.n_comp;
        self.values[flat..flat + self.n_comp].copy_from_slice(v);
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn dirichlet_mask(&self) -> &[bool] {
        &self.dirichlet
    }

    /// Lexicographic list of all node indices.
    pub fn all_indices(&self) -> Vec<Vec<usize>> {
        lattice_indices(&self.nodes_per_axis)
    }

    /// Lexicographic list of interior (full-stencil) node indices.
    pub fn interior_indices(&self) -> Vec<Vec<usize>> {
        self.all_indices()
            .into_iter()
            .filter(|idx| self.is_interior(idx))
            .collect()
    }

    /// Clamp an index to the interior band so boundary rows can borrow the
    /// nearest valid stencil.
    pub fn clamp_to_interior(&self, idx: &[usize]) -> Vec<usize> {
        idx.iter()
            .enumerate()
            .map(|(a, &i)| i.clamp(1, self.nodes_per_axis[a] - 2))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_shape_and_boundary_flags() {
        let b = BoxDomain::cube(2, 0.0, 1.0).unwrap();
        let g = GridField::zeros(&b, &[5, 5], 1).unwrap();
        assert_eq!(g.node_count(), 25);
        assert_eq!(g.spacing(), &[0.25, 0.25]);
        assert!(g.is_dirichlet(&[0, 3]));
        assert!(g.is_dirichlet(&[4, 4]));
        assert!(!g.is_dirichlet(&[2, 2]));
        assert_eq!(g.node_coords(&[2, 2]), vec![0.5, 0.5]);
    }

    #[test]
    fn sample_stores_values() {
        let b = BoxDomain::cube(2, 0.0, 1.0).unwrap();
        let g = GridField::sample(&b, &[3, 3], 2, |x| {
            DVector::from_vec(vec![x[0], x[1] * 2.0])
        })
        .unwrap();
        let v = g.value_at(&[1, 2]);
        assert_eq!(v[0], 0.5);
        assert_eq!(v[1], 2.0);
    }

    #[test]
    fn too_small_grid_rejected() {
        let b = BoxDomain::cube(2, 0.0, 1.0).unwrap();
        assert!(GridField::zeros(&b, &[2, 5], 1).is_err());
    }

    #[test]
    fn interior_band_clamp() {
        let b = BoxDomain::cube(2, 0.0, 1.0).unwrap();
        let g = GridField::zeros(&b, &[5, 5], 1).unwrap();
        assert_eq!(g.clamp_to_interior(&[0, 4]), vec![1, 3]);
        assert_eq!(g.clamp_to_interior(&[2, 2]), vec![2, 2]);
        assert_eq!(g.interior_indices().len(), 9);
    }
}
