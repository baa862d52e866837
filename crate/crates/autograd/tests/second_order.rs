use jumps_autograd::{conv2d, grad, ConvGeometry, Tensor, Var};
use proptest::prelude::*;

/// f(x) = Σ tanh(a·x)² · (x² + 1)^-½, built from several ops.
fn composite(x: &Var, a: f64) -> Var {
    let t = x.scale(a).tanh().square();
    let d = x.square().add_scalar(1.0).powf(-0.5);
    t.mul(&d).sum()
}

fn composite_grad_sum(x0: &[f64], a: f64) -> f64 {
    let x = Var::param(Tensor::new([x0.len()], x0.to_vec()));
    let g = grad(&composite(&x, a), &[&x], false).remove(0);
    g.value().sum()
}

proptest! {
    #[test]
    fn hessian_vector_product_matches_finite_differences(
        xs in proptest::collection::vec(-2.0f64..2.0, 1..6),
        a in 0.2f64..1.5,
    ) {
        let x = Var::param(Tensor::new([xs.len()], xs.clone()));
        let g = grad(&composite(&x, a), &[&x], true).remove(0);
        let hv = grad(&g.sum(), &[&x], false).remove(0);
        for i in 0..xs.len() {
            let mut p = xs.clone();
            let mut m = xs.clone();
            p[i] += 1e-5;
            m[i] -= 1e-5;
            let fd = (composite_grad_sum(&p, a) - composite_grad_sum(&m, a)) / 2e-5;
            let got = hv.value().data()[i];
            prop_assert!((got - fd).abs() <= 1e-6 * (1.0 + fd.abs()), "{got} vs {fd}");
        }
    }
}

/// Gradient-penalty shape: the weight gradient of (‖∇ₓ D(x)‖ − 1)² for a
/// one-layer leaky conv critic.
#[test]
fn input_gradient_norm_is_differentiable_in_weights() {
    let geom = ConvGeometry::new(2, [3, 4], [2, 2], [1, 1], [0, 0]).unwrap();
    let x0 = Tensor::from_fn([1, 2, 3, 4], |i| ((i * 5 % 7) as f64 - 3.0) / 4.0);
    let w0 = Tensor::from_fn([2, 8], |i| ((i * 3 % 5) as f64 - 2.0) / 3.0);
    let bias = Tensor::new([2], vec![0.1, -0.2]);

    let penalty = |w: &Var, create: bool| -> (Var, Var) {
        let x = Var::param(x0.clone());
        let score = conv2d(&x, w, &Var::constant(bias.clone()), &geom)
            .leaky_relu(0.2)
            .tanh()
            .sum();
        let gx = grad(&score, &[&x], create).remove(0);
        let norm = gx.reshape(&[1, 24]).norm_last(24);
        (norm.add_scalar(-1.0).square().sum(), x)
    };

    let w = Var::param(w0.clone());
    let (p, _) = penalty(&w, true);
    let gw = grad(&p, &[&w], false).remove(0);
    for i in 0..w0.len() {
        let mut plus = w0.clone();
        let mut minus = w0.clone();
        plus.data_mut()[i] += 1e-6;
        minus.data_mut()[i] -= 1e-6;
        let fp = penalty(&Var::constant(plus), false).0.item();
        let fm = penalty(&Var::constant(minus), false).0.item();
        let fd = (fp - fm) / 2e-6;
        let got = gw.value().data()[i];
        assert!((got - fd).abs() <= 1e-5 * (1.0 + fd.abs()), "w[{i}]: {got} vs {fd}");
    }
}
