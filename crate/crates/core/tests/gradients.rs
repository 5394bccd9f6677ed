//! Central finite-difference checks of every differentiable primitive and of
//! the complete training objective, in f64.

use ssresnet::gradcheck::{check, DEFAULT_STEP};
use ssresnet::losses::{mse_consistency, total_loss, weighted_cross_entropy, ClassWeights};
use ssresnet::model::{ModelConfig, SSResNet};
use ssresnet::tensor::{conv2d, ops};
use ssresnet::{RngState, Tensor64};

const TOL: f64 = 1e-3;

fn random(shape: &[usize], rng: &mut RngState) -> Vec<f64> {
    (0..shape.iter().product::<usize>()).map(|_| rng.normal()).collect()
}

/// Reduce `out` to a scalar with a fixed random quadratic so every output
/// element gets a distinct upstream gradient.
fn reduce(out: &Tensor64, target: &[f64]) -> Tensor64 {
    let t = Tensor64::new(target.to_vec(), out.shape()).unwrap();
    ops::sum(&ops::square(&ops::sub(out, &t).unwrap()))
}

/// Worst relative error over all inputs of `f`.
fn max_error(shapes: &[&[usize]], seed: u64, f: impl Fn(&[Tensor64]) -> Tensor64) -> f64 {
    let mut rng = RngState::new(seed);
    let values: Vec<Vec<f64>> = shapes.iter().map(|s| random(s, &mut rng)).collect();
    for (s, v) in shapes.iter().zip(&values) {
        assert!(v.len() <= 64, "input {s:?} larger than 64 elements");
    }
    let leaves: Vec<Tensor64> = values.iter().zip(shapes).map(|(v, s)| Tensor64::param(v.clone(), s).unwrap()).collect();
    let probe_out = f(&leaves);
    let target = random(probe_out.shape(), &mut rng);
    let loss = reduce(&probe_out, &target);
    loss.backward().unwrap();

    let mut worst: f64 = 0.0;
    for i in 0..shapes.len() {
        let analytic = leaves[i].grad_or_zeros();
        let report = check(&values[i], &analytic, None, DEFAULT_STEP, |probe| {
            let inputs: Vec<Tensor64> = values
                .iter()
                .zip(shapes)
                .enumerate()
                .map(|(j, (v, s))| Tensor64::new(if j == i { probe.to_vec() } else { v.clone() }, s).unwrap())
                .collect();
            reduce(&f(&inputs), &target).item()
        });
        worst = worst.max(report.max_rel_error);
    }
    worst
}

#[test]
fn elementwise_and_reductions() {
    let s: &[usize] = &[3, 4];
    assert!(max_error(&[s, s], 1, |x| ops::add(&x[0], &x[1]).unwrap()) < TOL);
    assert!(max_error(&[s, s], 2, |x| ops::sub(&x[0], &x[1]).unwrap()) < TOL);
    assert!(max_error(&[s], 3, |x| ops::scale(&x[0], -1.7)) < TOL);
    assert!(max_error(&[s], 4, |x| ops::square(&x[0])) < TOL);
    assert!(max_error(&[s], 5, |x| ops::sum(&x[0])) < TOL);
    assert!(max_error(&[s], 6, |x| ops::mean(&x[0])) < TOL);
    assert!(max_error(&[s], 7, |x| ops::relu(&x[0])) < TOL);
    assert!(max_error(&[s], 8, |x| x[0].reshape(&[2, 6]).unwrap()) < TOL);
}

#[test]
fn softmax_family() {
    assert!(max_error(&[&[4, 5]], 11, |x| ops::softmax(&x[0]).unwrap()) < TOL);
    assert!(max_error(&[&[4, 5]], 12, |x| ops::log_softmax(&x[0]).unwrap()) < TOL);
    let picks = [(0, 1, 2.0), (2, 4, -0.5), (3, 0, 1.0), (0, 1, 0.25)];
    assert!(max_error(&[&[4, 5]], 13, |x| ops::pick_weighted_sum(&x[0], &picks).unwrap()) < TOL);
}

#[test]
fn dropout_with_fixed_mask() {
    let err = max_error(&[&[2, 2, 3, 3]], 21, |x| {
        ops::dropout(&x[0], 0.4, &mut RngState::new(99), true).unwrap()
    });
    assert!(err < TOL, "{err}");
}

#[test]
fn batch_norm_training_and_inference() {
    let shapes: &[&[usize]] = &[&[4, 2, 2, 3], &[2], &[2]];
    let train = max_error(shapes, 31, |x| {
        ops::batch_norm(&x[0], &x[1], &x[2], &[0.0; 2], &[1.0; 2], true, 0.1, 1e-5).unwrap().output
    });
    assert!(train < TOL, "training {train}");
    let infer = max_error(shapes, 32, |x| {
        ops::batch_norm(&x[0], &x[1], &x[2], &[0.3, -0.2], &[1.5, 0.7], false, 0.1, 1e-5).unwrap().output
    });
    assert!(infer < TOL, "inference {infer}");
}

#[test]
fn pooling_and_dense() {
    assert!(max_error(&[&[2, 2, 4, 4]], 41, |x| ops::max_pool2d(&x[0], 2, 2).unwrap()) < TOL);
    assert!(max_error(&[&[1, 1, 5, 5]], 42, |x| ops::max_pool2d(&x[0], 3, 1).unwrap()) < TOL);
    assert!(max_error(&[&[2, 3, 3, 3]], 43, |x| ops::global_avg_pool(&x[0]).unwrap()) < TOL);
    assert!(max_error(&[&[4, 6], &[3, 6], &[3]], 44, |x| ops::dense(&x[0], &x[1], &x[2]).unwrap()) < TOL);
}

#[test]
fn convolution() {
    let shapes: &[&[usize]] = &[&[2, 2, 4, 4], &[3, 2, 3, 3], &[3]];
    assert!(max_error(shapes, 51, |x| conv2d(&x[0], &x[1], &x[2], 1, 1).unwrap()) < TOL);
    assert!(max_error(&[&[1, 2, 5, 5], &[2, 2, 3, 3], &[2]], 52, |x| conv2d(&x[0], &x[1], &x[2], 2, 0).unwrap()) < TOL);
    assert!(max_error(&[&[1, 1, 6, 6], &[2, 1, 2, 2], &[2]], 53, |x| conv2d(&x[0], &x[1], &x[2], 2, 1).unwrap()) < TOL);
}

/// Every parameter gradient of `wcel + λ·msel` through the whole two-path
/// network with dropout active, on a single 8x8 image (64 input elements).
#[test]
fn full_objective() {
    let cfg = ModelConfig {
        input_size: 8,
        stem_channels: 2,
        path_channels: 2,
        n_shared_blocks: 1,
        m_sup_blocks: 1,
        k_unsup_blocks: 1,
        dropout_rate: 0.2,
        ..ModelConfig::default()
    };
    let model = SSResNet::<f64>::build(&cfg, &RngState::new(5)).unwrap();
    let mut rng = RngState::new(6);
    let x = Tensor64::new(random(&[1, 1, 8, 8], &mut rng), &[1, 1, 8, 8]).unwrap();
    let labels = [Some(2)];
    let weights = ClassWeights::new(vec![1.0, 2.0, 5.0]).unwrap();
    let dropout = RngState::new(7);

    let objective = |m: &SSResNet<f64>| {
        let mut pass = m.begin_pass(true, &dropout);
        let z = m.shared_forward(&mut pass, &x).unwrap();
        let zs = m.supervised_forward(&mut pass, &z).unwrap();
        let zu = m.unsupervised_forward(&mut pass, &z).unwrap();
        let w = weighted_cross_entropy(&zs, &labels, &weights).unwrap();
        let c = mse_consistency(&zs, &zu).unwrap();
        (total_loss(&w, &c, 0.7).unwrap(), pass)
    };
    let (loss, pass) = objective(&model);
    loss.backward().unwrap();
    let grads = pass.grads();

    for (i, p) in model.params().iter().enumerate() {
        let idx: Vec<usize> = (0..p.data.len().min(64)).collect();
        let report = check(&p.data, &grads[i], Some(&idx), DEFAULT_STEP, |probe| {
            let mut m = model.clone();
            m.params_mut()[i].data = probe.to_vec();
            objective(&m).0.item()
        });
        assert!(report.passes(TOL), "{}: {report:?}", p.name);
    }
}
