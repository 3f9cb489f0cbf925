//! Central finite-difference checks for every autodiff op, in f64.
//!
//! The loss is a fixed random projection of the op output so that sign or
//! transposition errors cannot cancel.

use dd3g::nn::{Graph, NodeId};
use dd3g::rng::{draw_range, seeded_rng};
use dd3g::tensor::Tensor;

fn random_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = seeded_rng(seed, "gradcheck-input");
    Tensor::from_fn(shape, |_| draw_range(&mut rng, -1.0, 1.0))
}

fn projection_weights(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeded_rng(seed, "gradcheck-proj");
    (0..len).map(|_| draw_range(&mut rng, -1.0, 1.0)).collect()
}

/// Builds the op via `build`, projects to a scalar, and compares analytic
/// input gradients against central finite differences.
fn gradcheck(
    name: &str,
    shapes: &[&[usize]],
    seed: u64,
    build: impl Fn(&mut Graph<f64>, &[NodeId]) -> NodeId,
) {
    let inputs: Vec<Tensor<f64>> = shapes
        .iter()
        .enumerate()
        .map(|(i, s)| random_tensor(s, seed + i as u64))
        .collect();

    let eval = |inputs: &[Tensor<f64>], record: bool| -> (f64, Option<Vec<Vec<f64>>>) {
        let mut g = if record { Graph::new() } else { Graph::inference() };
        let ids: Vec<NodeId> = inputs.iter().map(|t| g.leaf(t.clone(), true)).collect();
        let out = build(&mut g, &ids);
        let w = projection_weights(g.value(out).len(), seed ^ 0xabc);
        let wn = g.constant(Tensor::new(g.shape(out).to_vec().as_slice(), w));
        let prod = g.mul(out, wn);
        let loss = g.mean_all(prod);
        let lv = g.value(loss).item();
        if record {
            let grads = g.backward_scalar(loss);
            let gs = ids
                .iter()
                .map(|id| grads.get(*id).map(|s| s.to_vec()).unwrap_or_default())
                .collect();
            (lv, Some(gs))
        } else {
            (lv, None)
        }
    };

    let (_, analytic) = eval(&inputs, true);
    let analytic = analytic.unwrap();
    let h = 1e-5;
    for (i, t) in inputs.iter().enumerate() {
        assert!(
            !analytic[i].is_empty(),
            "{name}: input {i} received no gradient"
        );
        for j in 0..t.len() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += h;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= h;
            let fd = (eval(&plus, false).0 - eval(&minus, false).0) / (2.0 * h);
            let an = analytic[i][j];
            let err = (an - fd).abs();
            assert!(
                err <= 1e-6 * (1.0 + fd.abs()),
                "{name}: input {i} elem {j}: analytic {an:.9e} vs fd {fd:.9e}"
            );
        }
    }
}

#[test]
fn elementwise_ops() {
    gradcheck("add", &[&[2, 3], &[2, 3]], 1, |g, ids| g.add(ids[0], ids[1]));
    gradcheck("sub", &[&[2, 3], &[2, 3]], 2, |g, ids| g.sub(ids[0], ids[1]));
    gradcheck("mul", &[&[2, 3], &[2, 3]], 3, |g, ids| g.mul(ids[0], ids[1]));
    gradcheck("div", &[&[2, 3], &[2, 3]], 4, |g, ids| {
        // keep the denominator away from zero
        let b = g.mul_scalar(ids[1], 0.25);
        let b = g.add_scalar(b, 2.0);
        g.div(ids[0], b)
    });
    gradcheck("silu", &[&[3, 4]], 5, |g, ids| g.silu(ids[0]));
    gradcheck("sigmoid", &[&[3, 4]], 6, |g, ids| g.sigmoid(ids[0]));
    gradcheck("tanh", &[&[3, 4]], 7, |g, ids| g.tanh_op(ids[0]));
    gradcheck("exp", &[&[3, 4]], 8, |g, ids| g.exp_op(ids[0]));
    gradcheck("affine_scalar", &[&[3, 4]], 9, |g, ids| {
        let a = g.mul_scalar(ids[0], -1.7);
        g.add_scalar(a, 0.3)
    });
}

#[test]
fn matmul_and_bias() {
    gradcheck("matmul", &[&[3, 4], &[4, 5]], 10, |g, ids| {
        g.matmul(ids[0], ids[1])
    });
    gradcheck("add_bias_rows", &[&[4, 3], &[3]], 11, |g, ids| {
        g.add_bias_rows(ids[0], ids[1])
    });
}

#[test]
fn shape_ops() {
    gradcheck("reshape", &[&[2, 6]], 12, |g, ids| g.reshape(ids[0], &[3, 4]));
    gradcheck("concat_dim1", &[&[2, 2, 3], &[2, 4, 3]], 13, |g, ids| {
        g.concat_dim1(ids[0], ids[1])
    });
    gradcheck("concat_last", &[&[2, 3], &[2, 4]], 14, |g, ids| {
        g.concat_last(ids[0], ids[1])
    });
    gradcheck("narrow_dim1", &[&[2, 5, 2, 2]], 15, |g, ids| {
        g.narrow_dim1(ids[0], 1, 3)
    });
    gradcheck("repeat_rows", &[&[3, 2]], 16, |g, ids| g.repeat_rows(ids[0], 4));
    gradcheck("mean_all", &[&[3, 5]], 17, |g, ids| g.mean_all(ids[0]));
}

#[test]
fn conv_variants() {
    gradcheck(
        "conv3x3_s1",
        &[&[2, 3, 5, 5], &[4, 3, 3, 3], &[4]],
        18,
        |g, ids| g.conv2d(ids[0], ids[1], ids[2], 1, 1),
    );
    gradcheck(
        "conv3x3_s2",
        &[&[1, 2, 6, 6], &[3, 2, 3, 3], &[3]],
        19,
        |g, ids| g.conv2d(ids[0], ids[1], ids[2], 2, 1),
    );
    gradcheck(
        "conv4x4_s4_patchify",
        &[&[1, 3, 8, 8], &[5, 3, 4, 4], &[5]],
        20,
        |g, ids| g.conv2d(ids[0], ids[1], ids[2], 4, 0),
    );
    gradcheck(
        "conv1x1",
        &[&[2, 3, 4, 4], &[2, 3, 1, 1], &[2]],
        21,
        |g, ids| g.conv2d(ids[0], ids[1], ids[2], 1, 0),
    );
}

#[test]
fn norm_ops() {
    gradcheck(
        "group_norm",
        &[&[2, 4, 3, 3], &[4], &[4]],
        22,
        |g, ids| g.group_norm(ids[0], ids[1], ids[2], 2, 1e-5),
    );
    gradcheck("layer_norm", &[&[4, 6], &[6], &[6]], 23, |g, ids| {
        g.layer_norm(ids[0], ids[1], ids[2], 1e-5)
    });
}

#[test]
fn attention_ops() {
    gradcheck(
        "self_attention",
        &[&[2, 4, 6], &[2, 4, 6], &[2, 4, 6]],
        24,
        |g, ids| g.attention(ids[0], ids[1], ids[2], 2),
    );
    gradcheck(
        "cross_attention",
        &[&[1, 3, 4], &[1, 5, 4], &[1, 5, 4]],
        25,
        |g, ids| g.attention(ids[0], ids[1], ids[2], 2),
    );
}

#[test]
fn layout_ops() {
    gradcheck("images_to_tokens", &[&[4, 3, 2, 2]], 26, |g, ids| {
        g.images_to_tokens(ids[0], 2)
    });
    gradcheck("tokens_to_images", &[&[2, 8, 3]], 27, |g, ids| {
        g.tokens_to_images(ids[0], 2, 2, 2)
    });
    gradcheck(
        "add_bias_grouped",
        &[&[4, 3, 2, 2], &[2, 3]],
        28,
        |g, ids| g.add_bias_grouped(ids[0], ids[1], 2),
    );
    gradcheck("avg_pool2", &[&[1, 2, 4, 4]], 29, |g, ids| g.avg_pool2(ids[0]));
    gradcheck("upsample_nearest2", &[&[1, 2, 3, 3]], 30, |g, ids| {
        g.upsample_nearest2(ids[0])
    });
}

#[test]
fn composed_network_chunk() {
    // a realistic composition: conv -> groupnorm -> silu -> tokens -> attention
    gradcheck(
        "composite",
        &[&[2, 2, 4, 4], &[3, 2, 3, 3], &[3], &[3], &[3]],
        31,
        |g, ids| {
            let c = g.conv2d(ids[0], ids[1], ids[2], 1, 1);
            let n = g.group_norm(c, ids[3], ids[4], 3, 1e-5);
            let s = g.silu(n);
            let t = g.images_to_tokens(s, 2);
            g.attention(t, t, t, 1)
        },
    );
}

#[test]
fn deterministic_forward_backward() {
    // identical graphs produce bit-identical values and grads
    let run = || {
        let t = random_tensor(&[3, 8], 99);
        let mut g = Graph::<f64>::new();
        let x = g.leaf(t, true);
        let s = g.silu(x);
        let m = g.mean_all(s);
        let grads = g.backward_scalar(m);
        (g.value(m).item().to_bits(), grads.get(x).unwrap().to_vec())
    };
    let (v1, g1) = run();
    let (v2, g2) = run();
    assert_eq!(v1, v2);
    assert_eq!(
        g1.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
        g2.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
    );
}
