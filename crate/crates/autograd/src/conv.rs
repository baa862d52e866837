use std::sync::Arc;

use crate::{SparseMap, Var};

/// Geometry of a 2D convolution over per-sample `[channels, height, width]`
/// arrays, together with its im2col gather.
///
/// The same geometry describes the transposed convolution that maps the
/// conv's output size back to its input size.
#[derive(Debug, Clone)]
pub struct ConvGeometry {
    pub channels: usize,
    pub in_size: [usize; 2],
    pub kernel: [usize; 2],
    pub stride: [usize; 2],
    pub padding: [usize; 2],
    pub out_size: [usize; 2],
    im2col: Arc<SparseMap>,
}

impl ConvGeometry {
    /// Returns `None` when the kernel does not fit the padded input.
    pub fn new(
        channels: usize,
        in_size: [usize; 2],
        kernel: [usize; 2],
        stride: [usize; 2],
        padding: [usize; 2],
    ) -> Option<Self> {
        let mut out_size = [0; 2];
        for d in 0..2 {
            let padded = in_size[d] + 2 * padding[d];
            if stride[d] == 0 || kernel[d] == 0 || padded < kernel[d] {
                return None;
            }
            out_size[d] = (padded - kernel[d]) / stride[d] + 1;
        }
        let [kh, kw] = kernel;
        let [h, w] = in_size;
        let [oh, ow] = out_size;
        let taps = kh * kw;
        let positions = oh * ow;
        let mut entries = Vec::with_capacity(channels * taps * positions);
        for c in 0..channels {
            for i in 0..kh {
                for j in 0..kw {
                    let row = c * taps + i * kw + j;
                    for oy in 0..oh {
                        let y = (oy * stride[0] + i) as isize - padding[0] as isize;
                        if y < 0 || y >= h as isize {
                            continue;
                        }
                        for ox in 0..ow {
                            let x = (ox * stride[1] + j) as isize - padding[1] as isize;
                            if x < 0 || x >= w as isize {
                                continue;
                            }
                            let src = (c * h + y as usize) * w + x as usize;
                            entries.push((row * positions + oy * ow + ox, src, 1.0));
                        }
                    }
                }
            }
        }
        let im2col = Arc::new(SparseMap::from_triplets(
            [channels, h, w],
            [channels * taps, positions],
            entries,
        ));
        Some(Self {
            channels,
            in_size,
            kernel,
            stride,
            padding,
            out_size,
            im2col,
        })
    }

    /// Number of weights per output channel (`channels · kh · kw`).
    pub fn patch_len(&self) -> usize {
        self.channels * self.kernel[0] * self.kernel[1]
    }

    pub fn positions(&self) -> usize {
        self.out_size[0] * self.out_size[1]
    }

    pub fn im2col(&self) -> &Arc<SparseMap> {
        &self.im2col
    }
}

fn add_channel_bias(y: Var, bias: &Var, batch: usize, positions: usize) -> Var {
    y.add(&bias.bcast_last(&[positions]).bcast_first(&[batch]))
}

/// `x: [N, C, H, W]`, `weight: [C_out, C·kh·kw]`, `bias: [C_out]`
/// → `[N, C_out, H_out, W_out]`.
pub fn conv2d(x: &Var, weight: &Var, bias: &Var, geom: &ConvGeometry) -> Var {
    let n = x.shape()[0];
    let c_out = weight.shape()[0];
    let cols = x.sparse(geom.im2col());
    let y = Var::bmm(weight, &cols, false, false, Some(n));
    let y = add_channel_bias(y, bias, n, geom.positions());
    y.reshape(&[n, c_out, geom.out_size[0], geom.out_size[1]])
}

/// Transposed convolution. `geom` is the geometry of the forward conv that
/// maps this layer's output size to its input size.
///
/// `x: [N, C_in, H_in, W_in]` with `[H_in, W_in] == geom.out_size`,
/// `weight: [C_in, C_out·kh·kw]`, `bias: [C_out]`
/// → `[N, C_out, geom.in_size]`.
pub fn conv_transpose2d(x: &Var, weight: &Var, bias: &Var, geom: &ConvGeometry) -> Var {
    let n = x.shape()[0];
    let c_in = weight.shape()[0];
    let xf = x.reshape(&[n, c_in, geom.positions()]);
    let cols = Var::bmm(weight, &xf, true, false, Some(n));
    let y = cols.sparse_adjoint(geom.im2col());
    let [h, w] = geom.in_size;
    let y = y.reshape(&[n, geom.channels, h * w]);
    add_channel_bias(y, bias, n, h * w).reshape(&[n, geom.channels, h, w])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{grad, Tensor};

    fn naive_conv(
        x: &Tensor,
        w: &Tensor,
        b: &Tensor,
        g: &ConvGeometry,
    ) -> Vec<f64> {
        let [n, c, h, wd] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
        let co = w.shape()[0];
        let [kh, kw] = g.kernel;
        let [oh, ow] = g.out_size;
        let mut out = vec![0.0; n * co * oh * ow];
        for s in 0..n {
            for o in 0..co {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = b.data()[o];
                        for ci in 0..c {
                            for i in 0..kh {
                                for j in 0..kw {
                                    let y = (oy * g.stride[0] + i) as isize - g.padding[0] as isize;
                                    let xx = (ox * g.stride[1] + j) as isize - g.padding[1] as isize;
                                    if y < 0 || xx < 0 || y >= h as isize || xx >= wd as isize {
                                        continue;
                                    }
                                    acc += w.data()[o * c * kh * kw + ci * kh * kw + i * kw + j]
                                        * x.data()[((s * c + ci) * h + y as usize) * wd + xx as usize];
                                }
                            }
                        }
                        out[((s * co + o) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_direct_loops() {
        let geom = ConvGeometry::new(3, [5, 7], [3, 4], [2, 2], [1, 1]).unwrap();
        assert_eq!(geom.out_size, [3, 3]);
        let x = Tensor::from_fn([2, 3, 5, 7], |i| ((i * 31 % 17) as f64 - 8.0) / 5.0);
        let w = Tensor::from_fn([4, 36], |i| ((i * 13 % 7) as f64 - 3.0) / 4.0);
        let b = Tensor::from_fn([4], |i| i as f64 * 0.1);
        let y = conv2d(
            &Var::constant(x.clone()),
            &Var::constant(w.clone()),
            &Var::constant(b.clone()),
            &geom,
        );
        assert_eq!(y.shape(), &[2, 4, 3, 3]);
        for (a, e) in y.value().data().iter().zip(naive_conv(&x, &w, &b, &geom)) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn transposed_conv_is_adjoint_of_conv() {
        // <conv(x), y> == <x, convT(y)> with zero biases and shared weights.
        let geom = ConvGeometry::new(2, [6, 8], [4, 4], [2, 2], [1, 1]).unwrap();
        let x = Tensor::from_fn([1, 2, 6, 8], |i| (i as f64 * 0.7).sin());
        let w = Tensor::from_fn([3, 32], |i| (i as f64 * 0.3).cos());
        let [oh, ow] = geom.out_size;
        let y = Tensor::from_fn([1, 3, oh, ow], |i| (i as f64 * 0.2).sin());
        let cx = conv2d(
            &Var::constant(x.clone()),
            &Var::constant(w.clone()),
            &Var::constant(Tensor::zeros([3])),
            &geom,
        );
        let ty = conv_transpose2d(
            &Var::constant(y.clone()),
            &Var::constant(w.reshape([3, 32])),
            &Var::constant(Tensor::zeros([2])),
            &geom,
        );
        let lhs: f64 = cx.value().data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = ty.value().data().iter().zip(x.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
    }

    #[test]
    fn conv_weight_gradient_matches_finite_difference() {
        let geom = ConvGeometry::new(2, [4, 5], [3, 3], [1, 2], [1, 1]).unwrap();
        let x = Tensor::from_fn([2, 2, 4, 5], |i| ((i * 7 % 5) as f64 - 2.0) / 3.0);
        let w0 = Tensor::from_fn([3, 18], |i| ((i * 3 % 11) as f64 - 5.0) / 7.0);
        let b = Var::constant(Tensor::zeros([3]));
        let f = |w: &Tensor| {
            conv2d(&Var::constant(x.clone()), &Var::constant(w.clone()), &b, &geom)
                .value()
                .data()
                .iter()
                .map(|v| v.tanh())
                .sum::<f64>()
        };
        let w = Var::param(w0.clone());
        let loss = conv2d(&Var::constant(x.clone()), &w, &b, &geom).tanh().sum();
        let g = grad(&loss, &[&w], false).remove(0);
        for i in 0..w0.len() {
            let mut p = w0.clone();
            let mut m = w0.clone();
            p.data_mut()[i] += 1e-6;
            m.data_mut()[i] -= 1e-6;
            let fd = (f(&p) - f(&m)) / 2e-6;
            assert!((g.value().data()[i] - fd).abs() < 1e-6 * (1.0 + fd.abs()));
        }
    }
}
