use cartmech_autodiff::{checkpoint, fd, Backend, Eager, Mlp, ParamStore, Shape, Tape, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const OPS: usize = 12;

/// Scalar test functions built from every differentiable primitive; `x` has shape `(1, 2, 3)`.
fn composite<B: Backend>(b: &B, x: &B::T, which: usize) -> B::T {
    let aux = b.constant(Tensor::new(Shape::new(1, 2, 3), vec![0.3, -0.7, 1.1, 0.5, 0.9, -0.2]));
    match which {
        0 => b.sum(&b.mul(&b.add(x, &aux), &b.sub(x, &aux))),
        1 => b.sum(&b.div(&aux, x)),
        2 => b.sum(&b.tanh(&b.scale(x, 0.7))),
        3 => b.sum(&b.mul(&b.exp(x), &b.ln(x))),
        4 => b.sum(&b.add(&b.sin(x), &b.cos(&b.square(x)))),
        5 => b.sum(&b.mul(&b.sqrt(x), &b.softplus(&b.neg(x)))),
        6 => b.sum(&b.abs(&b.add_scalar(x, -2.0))),
        7 => {
            let m = b.matmul_t(x, true, &aux, false);
            b.trace(&b.matmul(&m, &m))
        }
        8 => {
            let v = b.reshape(x, Shape::new(1, 3, 2));
            let spd = b.constant(Tensor::new(Shape::new(1, 3, 3), vec![3.0, 0.4, 0.1, 0.4, 2.5, -0.3, 0.1, -0.3, 2.0]));
            let a = b.add(&spd, &b.matmul(&v, &b.transpose(&v)));
            let rhs = b.constant(Tensor::new(Shape::new(1, 3, 1), vec![0.5, -1.0, 2.0]));
            b.sum(&b.square(&b.solve(&a, &rhs).unwrap()))
        }
        9 => {
            let joined = b.concat(&[&b.slice(x, 2, 2, 1), &b.slice(x, 2, 0, 2)], 2);
            b.sum(&b.square(&b.sum_last(&b.mul(&joined, &aux))))
        }
        10 => b.sum(&b.dot_last(x, &aux)),
        _ => {
            let bias = b.constant(Tensor::new(Shape::new(1, 1, 3), vec![0.1, 0.2, 0.3]));
            b.sum(&b.square(&b.add(x, &bias)))
        }
    }
}

fn tape_gradient(x: &[f64], which: usize) -> Vec<f64> {
    let tape = Tape::new();
    let v = tape.leaf(Tensor::new(Shape::new(1, 2, 3), x.to_vec()));
    let out = composite(&tape, &v, which);
    tape.backward(&out).unwrap().wrt(v).unwrap().into_data()
}

fn eager_value(x: &[f64], which: usize) -> f64 {
    composite(&Eager, &Tensor::new(Shape::new(1, 2, 3), x.to_vec()), which).item()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn every_primitive_matches_central_differences(x in prop::collection::vec(0.3f64..1.5, 6), which in 0..OPS) {
        let analytic = tape_gradient(&x, which);
        let numeric = fd::gradient(|y| eager_value(y, which), &x, 1e-6);
        prop_assert!(fd::relative_error(&analytic, &numeric) < 1e-6, "op {}", which);
    }

    #[test]
    fn tape_and_eager_values_agree(x in prop::collection::vec(0.3f64..1.5, 6), which in 0..OPS) {
        let tape = Tape::new();
        let v = tape.leaf(Tensor::new(Shape::new(1, 2, 3), x.clone()));
        let out = composite(&tape, &v, which);
        prop_assert_eq!(tape.value(&out).item(), eager_value(&x, which));
    }
}

fn network(seed: u64) -> (Mlp, ParamStore) {
    let mlp = Mlp::with_hidden("v", 4, &[7, 7], 1);
    let mut store = ParamStore::new();
    mlp.init(&mut store, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    (mlp, store)
}

/// `Σ_rows ‖∇ₓ V(x)‖²` with the input gradient built as graph operations.
fn gradient_energy<B: Backend>(b: &B, mlp: &Mlp, store: &ParamStore, x: &Tensor) -> B::T {
    let bound = store.bind(b);
    let (_, g) = mlp.input_gradient(b, &bound, &b.constant(x.clone()));
    b.sum(&b.square(&g))
}

#[test]
fn parameter_gradient_through_input_gradient_matches_differences() {
    let (mlp, store) = network(3);
    let x = Tensor::new(Shape::new(1, 5, 4), (0..20).map(|i| (i as f64 * 0.37).sin()).collect());
    let tape = Tape::new();
    let bound = store.bind(&tape);
    let (_, g) = mlp.input_gradient(&tape, &bound, &tape.constant(x.clone()));
    let out = tape.sum(&tape.square(&g));
    let grads = tape.backward(&out).unwrap();
    let analytic: Vec<f64> = bound.gradients(&grads).unwrap().into_iter().flat_map(Tensor::into_data).collect();
    let theta = store.flatten();
    let numeric = fd::gradient(
        |y| {
            let mut s = store.clone();
            s.unflatten(y);
            gradient_energy(&Eager, &mlp, &s, &x).item()
        },
        &theta,
        1e-6,
    );
    assert!(fd::relative_error(&analytic, &numeric) < 1e-4);
}

#[test]
fn input_gradient_matches_differences_of_the_output() {
    let (mlp, store) = network(4);
    let x: Vec<f64> = vec![0.2, -0.5, 0.9, 0.1];
    let bound = store.bind(&Eager);
    let (_, g) = mlp.input_gradient(&Eager, &bound, &Tensor::new(Shape::new(1, 1, 4), x.clone()));
    let numeric = fd::gradient(|y| mlp.forward(&Eager, &bound, &Tensor::new(Shape::new(1, 1, 4), y.to_vec())).item(), &x, 1e-6);
    assert!(fd::relative_error(g.data(), &numeric) < 1e-7);
}

#[test]
fn backward_passes_are_deterministic() {
    let (mlp, store) = network(5);
    let x = Tensor::new(Shape::new(1, 3, 4), (0..12).map(|i| i as f64 * 0.1 - 0.5).collect());
    let run = || {
        let tape = Tape::new();
        let bound = store.bind(&tape);
        let (_, g) = mlp.input_gradient(&tape, &bound, &tape.constant(x.clone()));
        let out = tape.sum(&tape.square(&g));
        let grads = tape.backward(&out).unwrap();
        bound.gradients(&grads).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn checkpoints_round_trip_through_files() {
    let (_, store) = network(6);
    let dir = std::env::temp_dir().join(format!("cartmech-ckpt-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("m.ckpt");
    checkpoint::save(&path, &store, "{\"note\":1}").unwrap();
    let (back, meta) = checkpoint::load(&path).unwrap();
    std::fs::remove_dir_all(&dir).unwrap();
    assert_eq!(meta, "{\"note\":1}");
    assert_eq!(back.names(), store.names());
    assert_eq!(back.flatten(), store.flatten());
    assert_eq!(checkpoint::to_bytes(&back, &meta), checkpoint::to_bytes(&store, "{\"note\":1}"));
}
