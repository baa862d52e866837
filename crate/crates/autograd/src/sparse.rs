//! Fixed sparse linear maps applied independently to every sample of a batch.
//!
//! Gathers, scatters, im2col, grid packing and frame differences are all
//! instances of `y = M x` for a constant sparse `M`. Storing both `M` and
//! `Mᵀ` in CSR form makes the adjoint of the op another application of the
//! same map, which keeps the op set closed under differentiation.

use crate::Tensor;

#[derive(Debug, Clone)]
struct Csr {
    ptr: Vec<u32>,
    idx: Vec<u32>,
    val: Vec<f64>,
}

impl Csr {
    fn build(rows: usize, entries: &[(usize, usize, f64)], row_of: impl Fn(&(usize, usize, f64)) -> (usize, usize)) -> Self {
        let mut counts = vec![0u32; rows + 1];
        for e in entries {
            counts[row_of(e).0 + 1] += 1;
        }
        for r in 0..rows {
            counts[r + 1] += counts[r];
        }
        let mut fill = counts.clone();
        let mut idx = vec![0u32; entries.len()];
        let mut val = vec![0.0; entries.len()];
        for e in entries {
            let (row, col) = row_of(e);
            let slot = fill[row] as usize;
            idx[slot] = col as u32;
            val[slot] = e.2;
            fill[row] += 1;
        }
        Self { ptr: counts, idx, val }
    }

    fn apply(&self, input: &[f64], output: &mut [f64]) {
        for (row, out) in output.iter_mut().enumerate() {
            let (lo, hi) = (self.ptr[row] as usize, self.ptr[row + 1] as usize);
            let mut acc = 0.0;
            for k in lo..hi {
                acc += self.val[k] * input[self.idx[k] as usize];
            }
            *out = acc;
        }
    }
}

/// A sparse linear map from per-sample arrays of `in_shape` to `out_shape`.
#[derive(Debug, Clone)]
pub struct SparseMap {
    in_shape: Vec<usize>,
    out_shape: Vec<usize>,
    forward: Csr,
    adjoint: Csr,
}

impl SparseMap {
    /// Builds the map from `(output_index, input_index, weight)` triplets.
    /// Duplicate triplets accumulate.
    pub fn from_triplets(
        in_shape: impl Into<Vec<usize>>,
        out_shape: impl Into<Vec<usize>>,
        entries: Vec<(usize, usize, f64)>,
    ) -> Self {
        let in_shape = in_shape.into();
        let out_shape = out_shape.into();
        let in_len: usize = in_shape.iter().product();
        let out_len: usize = out_shape.iter().product();
        for &(o, i, _) in &entries {
            assert!(o < out_len && i < in_len, "triplet ({o}, {i}) out of range");
        }
        let forward = Csr::build(out_len, &entries, |e| (e.0, e.1));
        let adjoint = Csr::build(in_len, &entries, |e| (e.1, e.0));
        Self {
            in_shape,
            out_shape,
            forward,
            adjoint,
        }
    }

    pub fn in_shape(&self) -> &[usize] {
        &self.in_shape
    }

    pub fn out_shape(&self) -> &[usize] {
        &self.out_shape
    }

    pub fn in_len(&self) -> usize {
        self.in_shape.iter().product()
    }

    pub fn out_len(&self) -> usize {
        self.out_shape.iter().product()
    }

    pub fn nnz(&self) -> usize {
        self.forward.val.len()
    }

    /// Applies the map (or its adjoint) to each leading block of `input`.
    pub fn apply(&self, input: &Tensor, adjoint: bool) -> Tensor {
        let (csr, src_len, dst_shape) = if adjoint {
            (&self.adjoint, self.out_len(), &self.in_shape)
        } else {
            (&self.forward, self.in_len(), &self.out_shape)
        };
        let dst_len: usize = dst_shape.iter().product();
        assert!(
            src_len > 0 && input.len() % src_len == 0,
            "sparse map expects blocks of {src_len} values, got tensor {:?}",
            input.shape()
        );
        let blocks = input.len() / src_len;
        let mut out = vec![0.0; blocks * dst_len];
        for b in 0..blocks {
            csr.apply(
                &input.data()[b * src_len..(b + 1) * src_len],
                &mut out[b * dst_len..(b + 1) * dst_len],
            );
        }
        let mut shape = vec![blocks];
        shape.extend_from_slice(dst_shape);
        Tensor::new(shape, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adjoint_matches_dense_transpose() {
        let map = SparseMap::from_triplets(
            [3],
            [2],
            vec![(0, 0, 1.0), (0, 2, 2.0), (1, 1, -1.0), (1, 1, 0.5)],
        );
        let x = Tensor::new([1, 3], vec![1.0, 2.0, 3.0]);
        assert_eq!(map.apply(&x, false).data(), &[7.0, -1.0]);
        let y = Tensor::new([1, 2], vec![1.0, 1.0]);
        assert_eq!(map.apply(&y, true).data(), &[1.0, -0.5, 2.0]);
    }

    #[test]
    fn blocks_are_independent() {
        let map = SparseMap::from_triplets([2], [1], vec![(0, 0, 1.0), (0, 1, 1.0)]);
        let x = Tensor::new([3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let y = map.apply(&x, false);
        assert_eq!(y.shape(), &[3, 1]);
        assert_eq!(y.data(), &[3.0, 7.0, 11.0]);
    }
}
