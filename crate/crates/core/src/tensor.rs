//! Dense complex arrays with named dimensions.
//!
//! The simulator moves a handful of 3-D quantities around (pilots, received
//! symbols) whose axis order is easy to get wrong; naming the dimensions keeps
//! the index arithmetic honest. Layout is row-major over the declared order:
//! the last-named dimension is fastest.

use crate::error::{CoreError, Result};
use crate::types::{CMatrix, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTensor {
    dims: Vec<(String, usize)>,
    data: Vec<C64>,
}

impl ComplexTensor {
    pub fn new(dims: Vec<(String, usize)>, data: Vec<C64>) -> Result<Self> {
        let expected: usize = dims.iter().map(|(_, e)| e).product();
        if expected != data.len() {
            return Err(CoreError::InvalidArgument(format!(
                "tensor data length {} does not match extents product {}",
                data.len(),
                expected
            )));
        }
        for (i, (name, _)) in dims.iter().enumerate() {
            if dims[i + 1..].iter().any(|(n, _)| n == name) {
                return Err(CoreError::InvalidArgument(format!(
                    "duplicate dimension name {name:?}"
                )));
            }
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Vec<(String, usize)>) -> Result<Self> {
        let len = dims.iter().map(|(_, e)| e).product();
        Self::new(dims, vec![C64::new(0.0, 0.0); len])
    }

    pub fn dims(&self) -> &[(String, usize)] {
        &self.dims
    }

    pub fn extent(&self, name: &str) -> Option<usize> {
        self.dims.iter().find(|(n, _)| n == name).map(|&(_, e)| e)
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    fn flat(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        let mut flat = 0;
        for (i, &(_, extent)) in self.dims.iter().enumerate() {
            debug_assert!(idx[i] < extent, "index {} out of bounds {extent}", idx[i]);
            flat = flat * extent + idx[i];
        }
        flat
    }

    pub fn get(&self, idx: &[usize]) -> C64 {
        self.data[self.flat(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: C64) {
        let flat = self.flat(idx);
        self.data[flat] = value;
    }

    /// For a `(subcarrier, symbol, antenna)` tensor: the `antenna x symbol`
    /// matrix of one subcarrier. Entry `(a, k)` is `self[n, k, a]`.
    pub fn subcarrier_matrix(&self, subcarrier: usize) -> CMatrix {
        assert_eq!(self.dims.len(), 3, "subcarrier_matrix expects a 3-D tensor");
        let symbols = self.dims[1].1;
        let antennas = self.dims[2].1;
        CMatrix::from_fn(antennas, symbols, |a, k| self.get(&[subcarrier, k, a]))
    }
}
