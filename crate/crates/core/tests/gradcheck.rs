//! Central finite differences vs reverse-mode gradients for every
//! differentiable operation. The finite-difference side rebuilds the forward
//! pass from scratch per probe, so it shares no gradient code with the tape.

use matl_core::{NodeId, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const OP_TOL: f64 = 1e-4;
const SEEDS: u64 = 20;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let n: usize = shape.iter().product::<usize>().max(1);
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::new(shape, data)
}

/// Random tensor with every element kept away from zero, for graphs that
/// route through the relu kink.
fn rand_tensor_off_kink(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let mut t = rand_tensor(rng, shape);
    for v in t.data_mut() {
        if v.abs() < 5e-3 {
            *v += if *v >= 0.0 { 0.01 } else { -0.01 };
        }
    }
    t
}

/// Random tensor bounded into (lo, hi), for log domains.
fn rand_tensor_in(rng: &mut ChaCha8Rng, shape: Vec<usize>, lo: f64, hi: f64) -> Tensor {
    let n: usize = shape.iter().product::<usize>().max(1);
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor::new(shape, data)
}

fn finite_diff(mut f: impl FnMut(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + H;
        let fp = f(&probe);
        probe[i] = orig - H;
        let fm = f(&probe);
        probe[i] = orig;
        grad[i] = (fp - fm) / (2.0 * H);
    }
    grad
}

fn assert_close(ad: &[f64], fd: &[f64], tol: f64, what: &str) {
    assert_eq!(ad.len(), fd.len(), "{what}: gradient length");
    for (i, (&a, &f)) in ad.iter().zip(fd).enumerate() {
        let denom = a.abs().max(f.abs()).max(1e-6);
        let rel = (a - f).abs() / denom;
        assert!(rel < tol, "{what}[{i}]: ad={a} fd={f} rel={rel}");
    }
}

/// Compare tape gradients against finite differences for a scalar-valued
/// graph built by `build` over the given input tensors.
fn check_grad(
    inputs: &[Tensor],
    tol: f64,
    what: &str,
    build: impl Fn(&mut Tape, &[NodeId]) -> NodeId,
) {
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| tape.param(t)).collect();
    let loss = build(&mut tape, &ids);
    tape.backward(loss).expect("backward");
    let ad_grads: Vec<Vec<f64>> = ids
        .iter()
        .map(|&id| tape.grad(id).expect("leaf grad").to_vec())
        .collect();

    for (which, input) in inputs.iter().enumerate() {
        let fd = finite_diff(
            |x| {
                let mut t = Tape::new();
                let ids: Vec<NodeId> = inputs
                    .iter()
                    .enumerate()
                    .map(|(j, tj)| {
                        if j == which {
                            t.constant(Tensor::new(tj.shape().to_vec(), x.to_vec()))
                        } else {
                            t.constant(tj.clone())
                        }
                    })
                    .collect();
                let l = build(&mut t, &ids);
                t.value(l).item()
            },
            input.data(),
        );
        assert_close(&ad_grads[which], &fd, tol, &format!("{what} input {which}"));
    }
}

/// Fixed random probe weights so the scalar loss exercises the whole
/// Jacobian, not just the all-ones direction.
fn probe_sum(tape: &mut Tape, y: NodeId, rng: &mut ChaCha8Rng) -> NodeId {
    let shape = tape.value(y).shape().to_vec();
    let w = tape.constant(rand_tensor(rng, shape));
    let p = tape.mul(y, w).unwrap();
    tape.sum_all(p).unwrap()
}

#[test]
fn matmul_grad_of_plain_sum() {
    // the stated oracle case: d sum(a·b) on random 3x3 inputs
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rand_tensor(&mut rng, vec![3, 3]);
        let b = rand_tensor(&mut rng, vec![3, 3]);
        check_grad(&[a, b], OP_TOL, "matmul sum", |t, ids| {
            let c = t.matmul(ids[0], ids[1]).unwrap();
            t.sum_all(c).unwrap()
        });
    }
}

#[test]
fn matmul_grad_probed() {
    for seed in 100..100 + SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rand_tensor(&mut rng, vec![2, 4]);
        let b = rand_tensor(&mut rng, vec![4, 3]);
        let wrng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
        check_grad(&[a, b], OP_TOL, "matmul probe", move |t, ids| {
            let c = t.matmul(ids[0], ids[1]).unwrap();
            probe_sum(t, c, &mut wrng.clone())
        });
    }
}

#[test]
fn softmax_rows_jvp() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rand_tensor(&mut rng, vec![2, 4]);
        let wrng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(777));
        check_grad(&[x], OP_TOL, "softmax_rows", move |t, ids| {
            let y = t.softmax_rows(ids[0]).unwrap();
            probe_sum(t, y, &mut wrng.clone())
        });
    }
}

#[test]
fn elementwise_composite_relu_affine() {
    // relu(a·x + b) against finite differences
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rand_tensor_off_kink(&mut rng, vec![3, 3]);
        let x = rand_tensor_off_kink(&mut rng, vec![3, 2]);
        let b = rand_tensor_off_kink(&mut rng, vec![3, 2]);
        let wrng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(31));
        check_grad(&[a, x, b], OP_TOL, "relu(ax+b)", move |t, ids| {
            let ax = t.matmul(ids[0], ids[1]).unwrap();
            let pre = t.add(ax, ids[2]).unwrap();
            let y = t.relu(pre);
            probe_sum(t, y, &mut wrng.clone())
        });
    }
}

#[test]
fn tanh_exp_log_scale_grads() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rand_tensor(&mut rng, vec![2, 3]);
        let wrng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(91));
        check_grad(&[x], OP_TOL, "tanh", move |t, ids| {
            let y = t.tanh(ids[0]);
            probe_sum(t, y, &mut wrng.clone())
        });

        let x = rand_tensor(&mut rng, vec![5]);
        let wrng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(92));
        check_grad(&[x], OP_TOL, "exp", move |t, ids| {
            let y = t.exp(ids[0]);
            probe_sum(t, y, &mut wrng.clone())
        });

        let x = rand_tensor_in(&mut rng, vec![4], 0.2, 2.0);
        let wrng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(93));
        check_grad(&[x], OP_TOL, "log", move |t, ids| {
            let y = t.log(ids[0]).unwrap();
            probe_sum(t, y, &mut wrng.clone())
        });

        let x = rand_tensor(&mut rng, vec![3, 2]);
        check_grad(&[x], OP_TOL, "scale", |t, ids| {
            let y = t.scale(ids[0], -2.5);
            t.sum_all(y).unwrap()
        });
    }
}

#[test]
fn mul_equal_and_scalar_broadcast_grads() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rand_tensor(&mut rng, vec![2, 3]);
        let b = rand_tensor(&mut rng, vec![2, 3]);
        let wrng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(55));
        check_grad(&[a, b], OP_TOL, "mul", move |t, ids| {
            let y = t.mul(ids[0], ids[1]).unwrap();
            probe_sum(t, y, &mut wrng.clone())
        });

        let v = rand_tensor(&mut rng, vec![4]);
        let s = rand_tensor(&mut rng, vec![]);
        let wrng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(56));
        check_grad(&[v, s], OP_TOL, "mul scalar-broadcast", move |t, ids| {
            let y = t.mul(ids[0], ids[1]).unwrap();
            probe_sum(t, y, &mut wrng.clone())
        });
    }
}

#[test]
fn concat_cols_gradient_split() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rand_tensor(&mut rng, vec![2, 2]);
        let b = rand_tensor(&mut rng, vec![2, 3]);
        let wrng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(7));
        check_grad(&[a, b], OP_TOL, "concat_cols", move |t, ids| {
            let y = t.concat_cols(ids[0], ids[1]).unwrap();
            probe_sum(t, y, &mut wrng.clone())
        });
    }
}

#[test]
fn transpose_and_reduce_grads() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rand_tensor(&mut rng, vec![3, 2]);
        let wrng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(11));
        check_grad(&[x], OP_TOL, "transpose", move |t, ids| {
            let y = t.transpose(ids[0]).unwrap();
            probe_sum(t, y, &mut wrng.clone())
        });

        let x = rand_tensor(&mut rng, vec![3, 4]);
        let wrng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(12));
        check_grad(&[x], OP_TOL, "reduce_sum axis0", move |t, ids| {
            let y = t.reduce_sum(ids[0], 0).unwrap();
            probe_sum(t, y, &mut wrng.clone())
        });

        let x = rand_tensor(&mut rng, vec![3, 4]);
        let wrng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(13));
        check_grad(&[x], OP_TOL, "reduce_mean axis1", move |t, ids| {
            let y = t.reduce_mean(ids[0], 1).unwrap();
            probe_sum(t, y, &mut wrng.clone())
        });
    }
}

#[test]
fn select_minimum_clamp_grads() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rand_tensor(&mut rng, vec![4, 3]);
        let idx = vec![2, 0, 1, 2];
        let wrng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(21));
        let idx2 = idx.clone();
        check_grad(&[x], OP_TOL, "select_per_row", move |t, ids| {
            let y = t.select_per_row(ids[0], &idx2).unwrap();
            probe_sum(t, y, &mut wrng.clone())
        });

        let a = rand_tensor_off_kink(&mut rng, vec![5]);
        let b = rand_tensor_off_kink(&mut rng, vec![5]);
        let wrng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(22));
        check_grad(&[a, b], OP_TOL, "minimum", move |t, ids| {
            let y = t.minimum(ids[0], ids[1]).unwrap();
            probe_sum(t, y, &mut wrng.clone())
        });

        // keep samples away from the clamp corners like the relu kink
        let mut x = rand_tensor(&mut rng, vec![6]);
        for v in x.data_mut() {
            if (*v - 0.5).abs() < 5e-3 || (*v + 0.5).abs() < 5e-3 {
                *v += 0.02;
            }
        }
        let wrng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(23));
        check_grad(&[x], OP_TOL, "clamp", move |t, ids| {
            let y = t.clamp(ids[0], -0.5, 0.5).unwrap();
            probe_sum(t, y, &mut wrng.clone())
        });
    }
}

#[test]
fn gradients_accumulate_across_branches() {
    // a graph where x feeds k branches must yield the sum of single-branch grads
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = rand_tensor(&mut rng, vec![3]);

    let branch = |t: &mut Tape, id: NodeId, which: usize| -> NodeId {
        match which {
            0 => t.tanh(id),
            1 => {
                let y = t.mul(id, id).unwrap();
                t.scale(y, 0.5)
            }
            _ => t.scale(id, 3.0),
        }
    };

    let mut single = vec![vec![0.0; 3]; 3];
    for (which, slot) in single.iter_mut().enumerate() {
        let mut t = Tape::new();
        let id = t.param(&x);
        let y = branch(&mut t, id, which);
        let l = t.sum_all(y).unwrap();
        t.backward(l).unwrap();
        slot.copy_from_slice(t.grad(id).unwrap());
    }

    let mut t = Tape::new();
    let id = t.param(&x);
    let y0 = branch(&mut t, id, 0);
    let y1 = branch(&mut t, id, 1);
    let y2 = branch(&mut t, id, 2);
    let s0 = t.add(y0, y1).unwrap();
    let s1 = t.add(s0, y2).unwrap();
    let l = t.sum_all(s1).unwrap();
    t.backward(l).unwrap();
    let combined = t.grad(id).unwrap();

    for i in 0..3 {
        let expected = single[0][i] + single[1][i] + single[2][i];
        assert!((combined[i] - expected).abs() < 1e-12);
    }
}

#[test]
fn operations_are_bit_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let a = rand_tensor(&mut rng, vec![4, 4]);
    let b = rand_tensor(&mut rng, vec![4, 4]);

    let run = || {
        let mut t = Tape::new();
        let ia = t.param(&a);
        let ib = t.param(&b);
        let c = t.matmul(ia, ib).unwrap();
        let s = t.softmax_rows(c).unwrap();
        let th = t.tanh(s);
        let l = t.mean_all(th).unwrap();
        t.backward(l).unwrap();
        (
            t.value(th).data().to_vec(),
            t.grad(ia).unwrap().to_vec(),
        )
    };

    let (v1, g1) = run();
    let (v2, g2) = run();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&v1), bits(&v2));
    assert_eq!(bits(&g1), bits(&g2));
}
