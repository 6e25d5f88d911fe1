use super::*;
use crate::rng::SeedRng;

fn t(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::new(shape, data.to_vec()).unwrap()
}

fn random(shape: &[usize], rng: &mut SeedRng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.normal()).collect()).unwrap()
}

/// Central-difference check of d(sum(w ⊙ f(x)))/dx for a single-input op.
fn check_unary(shape: &[usize], seed: u64, f: impl Fn(&mut Graph, Var) -> Var) {
    let mut rng = SeedRng::new(seed);
    let x0 = random(shape, &mut rng);
    let out_probe = {
        let mut g = Graph::new();
        let x = g.constant(x0.clone());
        let y = f(&mut g, x);
        g.value(y).shape().to_vec()
    };
    let w = random(&out_probe, &mut rng);
    let eval = |x: &Tensor| -> (f64, Option<Tensor>) {
        let mut g = Graph::new();
        let xv = g.variable(x.clone());
        let y = f(&mut g, xv);
        let wv = g.constant(w.clone());
        let p = g.mul(y, wv).unwrap();
        let l = g.sum(p);
        let value = g.value(l).data()[0];
        let grads = g.backward(l).unwrap();
        (value, grads.get(xv).cloned())
    };
    let (_, analytic) = eval(&x0);
    let analytic = analytic.expect("gradient reaches input");
    let h = 1e-5;
    for i in 0..x0.len() {
        let mut plus = x0.clone();
        plus.data_mut()[i] += h;
        let mut minus = x0.clone();
        minus.data_mut()[i] -= h;
        let numeric = (eval(&plus).0 - eval(&minus).0) / (2.0 * h);
        let a = analytic.data()[i];
        let rel = libm::fabs(a - numeric) / f64::max(1e-6, f64::max(libm::fabs(a), libm::fabs(numeric)));
        assert!(rel < 1e-6 || libm::fabs(a - numeric) < 1e-9, "entry {i}: analytic {a} numeric {numeric}");
    }
}

#[test]
fn matmul_identity_and_dot() {
    let mut g = Graph::new();
    let i = g.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
    let b = g.constant(t(&[2, 2], &[3.0, 4.0, 5.0, 6.0]));
    let y = g.matmul(i, b).unwrap();
    assert_eq!(g.value(y).data(), &[3.0, 4.0, 5.0, 6.0]);
    let r = g.constant(t(&[1, 2], &[1.0, 2.0]));
    let c = g.constant(t(&[2, 1], &[3.0, 4.0]));
    let d = g.matmul(r, c).unwrap();
    assert_eq!(g.value(d).data(), &[11.0]);
}

#[test]
fn matmul_shape_error_names_both_shapes() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::zeros(&[2, 3]));
    let b = g.constant(Tensor::zeros(&[2, 3]));
    let err = g.matmul(a, b).unwrap_err();
    assert_eq!(err, Error::dim("matmul", &[2, 3], &[2, 3]));
}

#[test]
fn matmul_sum_gradient_is_ones_times_b_transpose() {
    let mut rng = SeedRng::new(7);
    let a0 = random(&[4, 5], &mut rng);
    let b0 = random(&[5, 3], &mut rng);
    let mut g = Graph::new();
    let a = g.variable(a0.clone());
    let b = g.constant(b0.clone());
    let y = g.matmul(a, b).unwrap();
    let l = g.sum(y);
    let grads = g.backward(l).unwrap();
    let ga = grads.get(a).unwrap();
    // ones(4,3)·bᵀ: every row is the row-sums of b.
    for i in 0..4 {
        for k in 0..5 {
            let expect: f64 = (0..3).map(|j| b0.at(&[k, j])).sum();
            assert!((ga.at(&[i, k]) - expect).abs() < 1e-12);
        }
    }
    check_unary(&[4, 5], 7, |g, x| {
        let b = g.constant(b0.clone());
        g.matmul(x, b).unwrap()
    });
}

#[test]
fn batched_matmul_broadcast_gradients() {
    let mut rng = SeedRng::new(3);
    let b0 = random(&[4, 2], &mut rng);
    check_unary(&[2, 3, 3, 4], 11, |g, x| {
        let b = g.constant(b0.clone());
        g.matmul(x, b).unwrap()
    });
    let a0 = random(&[3, 1, 2, 4], &mut rng);
    check_unary(&[2, 4, 5], 12, |g, x| {
        let a = g.constant(a0.clone());
        g.matmul(a, x).unwrap()
    });
}

#[test]
fn softmax_values() {
    let mut g = Graph::new();
    let x = g.constant(t(&[2], &[0.0, 0.0]));
    let y = g.softmax(x, 0).unwrap();
    assert_eq!(g.value(y).data(), &[0.5, 0.5]);
    let x = g.constant(t(&[2], &[1000.0, 0.0]));
    let y = g.softmax(x, 0).unwrap();
    assert_eq!(g.value(y).data()[0], 1.0);
    assert!(g.value(y).data()[1] < 1e-300);
    let x = g.constant(t(&[3], &[1.0, 2.0, 3.0]));
    let y = g.softmax(x, 0).unwrap();
    // e^x / Σe^x evaluated directly
    let z = libm::exp(1.0) + libm::exp(2.0) + libm::exp(3.0);
    let expect = [libm::exp(1.0) / z, libm::exp(2.0) / z, libm::exp(3.0) / z];
    for (v, e) in g.value(y).data().iter().zip(expect) {
        assert!((v - e).abs() < 1e-15);
    }
    for (v, e) in g.value(y).data().iter().zip([0.09003, 0.24473, 0.66524]) {
        assert!((v - e).abs() < 1e-5);
    }
    assert!(g.softmax(x, 1).is_err());
}

#[test]
fn softmax_gradient_inner_axis() {
    check_unary(&[2, 4, 3], 5, |g, x| g.softmax(x, 1).unwrap());
    check_unary(&[3, 5], 6, |g, x| g.softmax(x, 1).unwrap());
}

#[test]
fn layer_norm_cases() {
    let mut g = Graph::new();
    let gamma = g.constant(Tensor::ones(&[4]));
    let beta = g.constant(Tensor::zeros(&[4]));
    let x = g.constant(Tensor::ones(&[1, 4]));
    let y = g.layer_norm(x, gamma, beta, 1e-12).unwrap();
    assert_eq!(g.value(y).data(), &[0.0; 4]);

    let gamma2 = g.constant(Tensor::ones(&[2]));
    let beta2 = g.constant(Tensor::zeros(&[2]));
    let x = g.constant(t(&[1, 2], &[1.0, 3.0]));
    let y = g.layer_norm(x, gamma2, beta2, 1e-12).unwrap();
    assert!((g.value(y).data()[0] + 1.0).abs() < 1e-9);
    assert!((g.value(y).data()[1] - 1.0).abs() < 1e-9);

    let zero = g.constant(Tensor::zeros(&[3]));
    let five = g.constant(t(&[3], &[5.0, 6.0, 7.0]));
    let mut rng = SeedRng::new(1);
    let x = g.constant(random(&[4, 3], &mut rng));
    let y = g.layer_norm(x, zero, five, 1e-12).unwrap();
    for row in g.value(y).data().chunks(3) {
        assert_eq!(row, &[5.0, 6.0, 7.0]);
    }
}

#[test]
fn layer_norm_gradients_all_inputs() {
    let mut rng = SeedRng::new(21);
    let gamma0 = random(&[6], &mut rng);
    let beta0 = random(&[6], &mut rng);
    let x0 = random(&[3, 6], &mut rng);
    check_unary(&[3, 6], 2, |g, x| {
        let gm = g.constant(gamma0.clone());
        let bt = g.constant(beta0.clone());
        g.layer_norm(x, gm, bt, 1e-12).unwrap()
    });
    check_unary(&[6], 3, |g, gm| {
        let xv = g.constant(x0.clone());
        let bt = g.constant(beta0.clone());
        g.layer_norm(xv, gm, bt, 1e-12).unwrap()
    });
}

#[test]
fn elementwise_and_activation_gradients() {
    let mut rng = SeedRng::new(4);
    let other = random(&[3, 4], &mut rng);
    let bias = random(&[4], &mut rng);
    check_unary(&[3, 4], 1, |g, x| g.gelu(x));
    check_unary(&[3, 4], 1, |g, x| g.tanh(x));
    check_unary(&[3, 4], 1, |g, x| g.sigmoid(x));
    check_unary(&[3, 4], 1, |g, x| g.relu(x));
    check_unary(&[3, 4], 1, |g, x| {
        let o = g.constant(other.clone());
        g.mul(x, o).unwrap()
    });
    check_unary(&[4], 1, |g, b| {
        let o = g.constant(other.clone());
        g.sub(o, b).unwrap()
    });
    check_unary(&[4], 1, |g, b| {
        let o = g.constant(other.clone());
        let s = g.add(o, b).unwrap();
        g.mul(s, b).unwrap()
    });
    check_unary(&[3, 4], 1, |g, x| {
        let b = g.constant(bias.clone());
        let y = g.mul(x, b).unwrap();
        g.scale(y, -2.5)
    });
}

#[test]
fn shape_ops_gradients() {
    check_unary(&[2, 3, 4], 9, |g, x| g.permute(x, &[2, 0, 1]).unwrap());
    check_unary(&[2, 3, 4], 9, |g, x| g.transpose(x).unwrap());
    check_unary(&[2, 3, 4], 9, |g, x| g.slice(x, 1, 1, 2).unwrap());
    check_unary(&[2, 3, 4], 9, |g, x| {
        let a = g.slice(x, 2, 0, 1).unwrap();
        g.concat(&[x, a, x], 2).unwrap()
    });
    check_unary(&[5, 3], 9, |g, x| g.gather(x, &[4, 0, 4, 2]).unwrap());
    check_unary(&[2, 6], 9, |g, x| {
        let y = g.reshape(x, &[3, 4]).unwrap();
        g.softmax(y, 1).unwrap()
    });
}

#[test]
fn cross_entropy_gradient_and_value() {
    let mut g = Graph::new();
    let z = g.constant(Tensor::zeros(&[3, 2]));
    let l = g.cross_entropy(z, &[0, 1, 1]).unwrap();
    assert!((g.value(l).data()[0] - core::f64::consts::LN_2).abs() < 1e-15);
    check_unary(&[4, 3], 8, |g, x| {
        let l = g.cross_entropy(x, &[0, 2, 1, 2]).unwrap();
        g.scale(l, 1.0)
    });
    assert!(g.cross_entropy(z, &[0, 2, 1]).is_err());
}

#[test]
fn backward_simple_cases() {
    let mut g = Graph::new();
    let w = g.variable(t(&[3], &[1.0, -2.0, 0.5]));
    let l = g.sum(w);
    let grads = g.backward(l).unwrap();
    assert_eq!(grads.get(w).unwrap().data(), &[1.0, 1.0, 1.0]);

    let mut g = Graph::new();
    let w = g.variable(t(&[2], &[1.0, 2.0]));
    let sq = g.mul(w, w).unwrap();
    let l = g.sum(sq);
    let grads = g.backward(l).unwrap();
    assert_eq!(grads.get(w).unwrap().data(), &[2.0, 4.0]);
}

#[test]
fn backward_rejects_non_scalar() {
    let mut g = Graph::new();
    let w = g.variable(Tensor::ones(&[2]));
    assert!(matches!(g.backward(w), Err(Error::Usage(_))));
}

#[test]
fn repeated_param_binding_accumulates() {
    let mut store = crate::params::ParamStore::new(crate::params::StoreTag::Encoder);
    let id = store.insert("w", t(&[2], &[3.0, 4.0]));
    let mut g = Graph::new();
    let a = g.param(&store, id);
    let b = g.param(&store, id);
    assert_eq!(a, b);
    let s = g.add(a, b).unwrap();
    let l = g.sum(s);
    let grads = g.backward(l).unwrap();
    assert_eq!(grads.param(id).unwrap().data(), &[2.0, 2.0]);
}

#[test]
fn dropout_modes() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::ones(&[100_000]));
    assert_eq!(g.dropout(x, 0.1, None).unwrap(), x);
    assert!(matches!(g.dropout(x, 1.0, None), Err(Error::Config(_))));
    assert!(matches!(g.dropout(x, -0.1, None), Err(Error::Config(_))));
    let mut rng = SeedRng::new(99);
    let y = g.dropout(x, 0.1, Some(&mut rng)).unwrap();
    let dropped = g.value(y).data().iter().filter(|&&v| v == 0.0).count();
    let rate = dropped as f64 / 100_000.0;
    assert!((0.09..=0.11).contains(&rate), "rate {rate}");
    let kept = g.value(y).data().iter().find(|&&v| v != 0.0).unwrap();
    assert!((kept - 1.0 / 0.9).abs() < 1e-15);
}

#[test]
fn gelu_at_zero() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(&[1]));
    let y = g.gelu(x);
    assert_eq!(g.value(y).data(), &[0.0]);
}
