//! Finite-difference checks for every differentiable operation, in f64.

use hard_core::diffcore::gradcheck::check_gradients;
use hard_core::diffcore::{
    affine_grid, cross_entropy, grid_sample_bilinear, kl_divergence, mse, reparam_with_noise,
    softmax_with_temperature, Conv2dSpec, Graph, Rng, Tensor, Var,
};
use hard_core::Result;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;
const INSTANCES: u64 = 5;

/// Contracts `out` with fixed pseudo-random weights so any output shape yields a
/// scalar whose gradient exercises every entry.
fn contract<'g>(g: &'g Graph, out: Var<'g>, seed: u64) -> Result<Var<'g>> {
    let mut rng = Rng::seed(seed ^ 0xfeed);
    let w = g.constant(Tensor::randn(out.shape(), &mut rng));
    Ok(out.mul(w)?.sum())
}

fn dims(rng: &mut Rng, n: usize) -> Vec<usize> {
    (0..n).map(|_| 1 + rng.below(6)).collect()
}

fn assert_check<F>(name: &str, inputs: &[Tensor], f: F)
where
    F: for<'g> Fn(&'g Graph, &[Var<'g>]) -> Result<Var<'g>>,
{
    let report = check_gradients(inputs, H, f).unwrap();
    assert!(
        report.passes(TOL),
        "{name}: relative errors {:?}",
        report.relative_errors
    );
}

#[test]
fn elementwise_ops() {
    for seed in 0..INSTANCES {
        let mut rng = Rng::seed(seed);
        let shape = dims(&mut rng, 2);
        let a = Tensor::randn(shape.clone(), &mut rng);
        let b = Tensor::randn(shape.clone(), &mut rng);
        let pos = Tensor::uniform(shape.clone(), 0.5, 3.0, &mut rng);
        assert_check("add", &[a.clone(), b.clone()], |g, v| contract(g, v[0].add(v[1])?, seed));
        assert_check("sub", &[a.clone(), b.clone()], |g, v| contract(g, v[0].sub(v[1])?, seed));
        assert_check("mul", &[a.clone(), b.clone()], |g, v| contract(g, v[0].mul(v[1])?, seed));
        assert_check("relu", &[a.clone()], |g, v| contract(g, v[0].relu(), seed));
        assert_check("exp", &[a.clone()], |g, v| contract(g, v[0].exp(), seed));
        assert_check("log", &[pos.clone()], |g, v| contract(g, v[0].log(), seed));
        assert_check("cos", &[a.clone()], |g, v| contract(g, v[0].cos(), seed));
        assert_check("square", &[a.clone()], |g, v| contract(g, v[0].square(), seed));
        assert_check("scale", &[a.clone()], |g, v| contract(g, v[0].scale(-1.7).add_scalar(0.3), seed));
    }
}

#[test]
fn reductions_and_shapes() {
    for seed in 0..INSTANCES {
        let mut rng = Rng::seed(100 + seed);
        let shape = dims(&mut rng, 3);
        let a = Tensor::randn(shape.clone(), &mut rng);
        assert_check("sum", &[a.clone()], |_, v| Ok(v[0].square().sum()));
        assert_check("mean", &[a.clone()], |_, v| Ok(v[0].square().mean()));
        let flat = shape.iter().product::<usize>();
        assert_check("reshape", &[a.clone()], |g, v| contract(g, v[0].reshape([flat])?, seed));
        assert_check("permute", &[a.clone()], |g, v| contract(g, v[0].permute(&[2, 0, 1])?, seed));
        assert_check("broadcast_rows", &[a.clone()], |g, v| {
            contract(g, v[0].broadcast_rows(3), seed)
        });
        let rows = shape[0];
        let idx: Vec<usize> = (0..4).map(|_| rng.below(rows)).collect();
        assert_check("select_rows", &[a.clone()], |g, v| contract(g, v[0].select_rows(&idx)?, seed));
        let bias = Tensor::randn([shape[2]], &mut rng);
        assert_check("add_row_vector", &[a.clone(), bias], |g, v| {
            contract(g, v[0].add_row_vector(v[1])?, seed)
        });
    }
}

#[test]
fn matrix_products() {
    for seed in 0..INSTANCES {
        let mut rng = Rng::seed(200 + seed);
        let d = dims(&mut rng, 4);
        let a = Tensor::randn([d[0], d[1]], &mut rng);
        let b = Tensor::randn([d[1], d[2]], &mut rng);
        assert_check("matmul", &[a, b], |g, v| contract(g, v[0].matmul(v[1])?, seed));
        let a = Tensor::randn([d[3], d[0], d[1]], &mut rng);
        let b = Tensor::randn([d[3], d[1], d[2]], &mut rng);
        assert_check("bmm", &[a, b], |g, v| contract(g, v[0].bmm(v[1])?, seed));
    }
}

#[test]
fn convolution_and_pooling() {
    for seed in 0..INSTANCES {
        let mut rng = Rng::seed(300 + seed);
        let (b, c, o) = (1 + rng.below(2), 1 + rng.below(3), 1 + rng.below(3));
        let (h, w) = (3 + rng.below(4), 3 + rng.below(4));
        let spec = Conv2dSpec {
            stride: 1 + rng.below(2),
            padding: rng.below(2),
        };
        let x = Tensor::randn([b, c, h, w], &mut rng);
        let k = Tensor::randn([o, c, 3, 3], &mut rng);
        let bias = Tensor::randn([o], &mut rng);
        assert_check("conv2d", &[x.clone(), k, bias], |g, v| {
            contract(g, v[0].conv2d(v[1], v[2], spec)?, seed)
        });
        assert_check("global_avg_pool", &[x], |g, v| contract(g, v[0].global_avg_pool()?, seed));
    }
}

#[test]
fn softmax_and_losses() {
    for seed in 0..INSTANCES {
        let mut rng = Rng::seed(400 + seed);
        let (rows, classes) = (1 + rng.below(5), 2 + rng.below(5));
        let a = Tensor::randn([rows, classes], &mut rng);
        let b = Tensor::randn([rows, classes], &mut rng);
        let t = rng.uniform(0.5, 5.0);
        assert_check("softmax", &[a.clone()], |g, v| {
            contract(g, softmax_with_temperature(v[0], t)?, seed)
        });
        assert_check("kl", &[a.clone(), b.clone()], |_, v| {
            kl_divergence(
                softmax_with_temperature(v[0], t)?,
                softmax_with_temperature(v[1], t)?,
            )
        });
        assert_check("mse", &[a.clone(), b.clone()], |_, v| mse(v[0], v[1]));
        let labels: Vec<usize> = (0..rows).map(|_| rng.below(classes)).collect();
        assert_check("cross_entropy", &[a], |_, v| cross_entropy(v[0], &labels));
    }
}

#[test]
fn kl_of_softmaxes_against_finite_differences() {
    // KL(softmax(a), softmax(b)) with respect to b, C = 5.
    for seed in 0..INSTANCES {
        let mut rng = Rng::seed(450 + seed);
        let a = Tensor::randn([5], &mut rng);
        let b = Tensor::randn([5], &mut rng);
        let report = check_gradients(&[b], H, |g, v| {
            let p = softmax_with_temperature(g.constant(a.clone()), 1.0)?;
            kl_divergence(p, softmax_with_temperature(v[0], 1.0)?)
        })
        .unwrap();
        assert!(report.passes(TOL), "{:?}", report.relative_errors);
    }
}

#[test]
fn spatial_ops() {
    for seed in 0..INSTANCES {
        let mut rng = Rng::seed(500 + seed);
        let (b, c) = (1 + rng.below(2), 1 + rng.below(2));
        let (h, w) = (2 + rng.below(5), 2 + rng.below(5));
        let mut theta = Tensor::new([b, 2, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0].repeat(b)).unwrap();
        for v in theta.data_mut() {
            *v += rng.uniform(-0.2, 0.2);
        }
        assert_check("affine_grid", &[theta.clone()], |g, v| {
            contract(g, affine_grid(v[0], h, w)?, seed)
        });

        let img = Tensor::randn([b, c, h, w], &mut rng);
        let (oh, ow) = (1 + rng.below(5), 1 + rng.below(5));
        let grid = Tensor::uniform([b, oh, ow, 2], -0.95, 0.95, &mut rng);
        assert_check("grid_sample (image, grid)", &[img.clone(), grid], |g, v| {
            contract(g, grid_sample_bilinear(v[0], v[1])?, seed)
        });
        assert_check("affine resampling via theta", &[img, theta], |g, v| {
            let grid = affine_grid(v[1], h, w)?;
            contract(g, grid_sample_bilinear(v[0], grid)?, seed)
        });
    }
}

#[test]
fn reparametrization() {
    for seed in 0..INSTANCES {
        let mut rng = Rng::seed(600 + seed);
        let shape = dims(&mut rng, 2);
        let mu = Tensor::randn(shape.clone(), &mut rng);
        let ls = Tensor::uniform(shape.clone(), -1.0, 0.5, &mut rng);
        let z = Tensor::randn(shape, &mut rng);
        assert_check("reparam", &[mu, ls], |g, v| {
            contract(g, reparam_with_noise(v[0], v[1], &z)?, seed)
        });
    }
}
