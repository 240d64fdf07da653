//! Learnable augmentors `x~ = g_a(x)` and static control augmentations.
//!
//! An [`Augmentor`] owns plain parameter tensors. Training binds them to a graph
//! with [`Augmentor::bind`] and calls [`Augmentor::forward`]; frozen snapshots use
//! [`Augmentor::augment`], which still lets gradients reach the input.

mod affine;
mod baselines;
mod gaussian;
mod mix;

pub use affine::{AffineAug, IDENTITY_THETA, INITIAL_SIGMA};
pub use baselines::{
    mixup_baseline, mixup_batch, oracle_shift_baseline, random_affine_baseline, PixelAffine,
    RandomAffineRanges,
};
pub use gaussian::GaussianAug;
pub use mix::{MixAug, DEFAULT_EMBED, DEFAULT_GROUP, DEFAULT_PATCH};

use crate::diffcore::{Graph, Rng, Tensor, Var};
use crate::error::{Error, FormatError, Result};
use crate::models::Checkpoint;

#[derive(Clone, Debug, PartialEq)]
pub enum Augmentor {
    Gaussian(GaussianAug),
    Affine(AffineAug),
    Mix(MixAug),
    /// `inner` first, then the affine resampling.
    Composed(Box<Augmentor>, AffineAug),
}

impl Augmentor {
    pub fn kind(&self) -> &'static str {
        match self {
            Augmentor::Gaussian(_) => "gaussian",
            Augmentor::Affine(_) => "affine",
            Augmentor::Mix(_) => "mix",
            Augmentor::Composed(..) => "composed",
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Augmentor::Gaussian(a) => vec![&a.mu, &a.log_sigma],
            Augmentor::Affine(a) => vec![&a.theta_mu, &a.theta_log_sigma],
            Augmentor::Mix(a) => vec![&a.projection, &a.query_mu, &a.query_log_sigma],
            Augmentor::Composed(inner, a) => {
                let mut p = inner.params();
                p.extend([&a.theta_mu, &a.theta_log_sigma]);
                p
            }
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Augmentor::Gaussian(a) => vec![&mut a.mu, &mut a.log_sigma],
            Augmentor::Affine(a) => vec![&mut a.theta_mu, &mut a.theta_log_sigma],
            Augmentor::Mix(a) => vec![&mut a.projection, &mut a.query_mu, &mut a.query_log_sigma],
            Augmentor::Composed(inner, a) => {
                let mut p = inner.params_mut();
                p.extend([&mut a.theta_mu, &mut a.theta_log_sigma]);
                p
            }
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        match self {
            Augmentor::Gaussian(_) => vec!["mu".into(), "log_sigma".into()],
            Augmentor::Affine(_) => vec!["theta_mu".into(), "theta_log_sigma".into()],
            Augmentor::Mix(_) => vec!["projection".into(), "query_mu".into(), "query_log_sigma".into()],
            Augmentor::Composed(inner, _) => {
                let mut names: Vec<String> = inner.param_names().into_iter().map(|n| format!("inner.{n}")).collect();
                names.extend(["affine.theta_mu".into(), "affine.theta_log_sigma".into()]);
                names
            }
        }
    }

    pub fn bind<'g>(&self, g: &'g Graph, trainable: bool) -> Vec<Var<'g>> {
        self.params()
            .into_iter()
            .map(|p| if trainable { g.leaf(p.clone()) } else { g.constant(p.clone()) })
            .collect()
    }

    /// Augments `x` with parameters bound by [`Augmentor::bind`]. All randomness
    /// comes from `rng`, so reseeding it freezes the draw.
    pub fn forward<'g>(&self, params: &[Var<'g>], x: Var<'g>, rng: &mut Rng) -> Result<Var<'g>> {
        let n = self.params().len();
        if params.len() != n {
            return Err(Error::shape("augment", format!("{} parameters for {n}", params.len())));
        }
        match self {
            Augmentor::Gaussian(a) => a.forward(params[0], params[1], x, rng),
            Augmentor::Affine(a) => a.forward(params[0], params[1], x, rng),
            Augmentor::Mix(a) => Ok(a.forward_with_weights(params[0], params[1], params[2], x, rng)?.0),
            Augmentor::Composed(inner, a) => {
                let y = inner.forward(&params[..n - 2], x, rng)?;
                a.forward(params[n - 2], params[n - 1], y, rng)
            }
        }
    }

    /// Forward pass with frozen parameters.
    pub fn augment<'g>(&self, x: Var<'g>, rng: &mut Rng) -> Result<Var<'g>> {
        let params = self.bind(x.graph(), false);
        self.forward(&params, x, rng)
    }

    pub fn augment_tensor(&self, x: &Tensor, rng: &mut Rng) -> Result<Tensor> {
        let g = Graph::new();
        Ok((*self.augment(g.constant(x.clone()), rng)?.value()).clone())
    }

    /// Per-tile mixing weights `[B / G, K, G]` for a Mix augmentor.
    pub fn mix_weights(&self, x: &Tensor, rng: &mut Rng) -> Result<Tensor> {
        let Augmentor::Mix(a) = self else {
            return Err(Error::invalid("mix_weights", format!("{} augmentor", self.kind())));
        };
        let g = Graph::new();
        let p = self.bind(&g, false);
        let (_, w) = a.forward_with_weights(p[0], p[1], p[2], g.constant(x.clone()), rng)?;
        Ok((*w.value()).clone())
    }

    /// Architecture string for snapshots, e.g. `aug:affine` or
    /// `aug:composed(aug:mix:1-4-32-2)`.
    pub fn descriptor(&self) -> String {
        match self {
            Augmentor::Gaussian(a) => format!("aug:gaussian:{}", a.dim()),
            Augmentor::Affine(_) => "aug:affine".into(),
            Augmentor::Mix(a) => format!("aug:mix:{}-{}-{}-{}", a.channels(), a.patch, a.embed(), a.group),
            Augmentor::Composed(inner, _) => format!("aug:composed({})", inner.descriptor()),
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(
            self.descriptor(),
            self.param_names().into_iter().zip(self.params().into_iter().cloned()).collect(),
        )
    }

    /// Rebuilds an augmentor from a snapshot, deriving the layout from its
    /// descriptor.
    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        let mut aug = Self::template(&ck.descriptor)?;
        let specs: Vec<(String, Vec<usize>)> = aug
            .param_names()
            .into_iter()
            .zip(aug.params().into_iter().map(|t| t.shape().to_vec()))
            .collect();
        let tensors = ck.into_tensors(&specs)?;
        for (p, t) in aug.params_mut().into_iter().zip(tensors) {
            *p = t;
        }
        Ok(aug)
    }

    fn template(descriptor: &str) -> Result<Self> {
        let bad = || Error::Format(FormatError::Malformed(format!("unknown augmentor descriptor {descriptor:?}")));
        if descriptor == "aug:affine" {
            return Ok(Augmentor::Affine(AffineAug::default()));
        }
        if let Some(d) = descriptor.strip_prefix("aug:gaussian:") {
            let dim = d.parse().map_err(|_| bad())?;
            return GaussianAug::new(dim, 0.0, 1.0).map(Augmentor::Gaussian).map_err(|_| bad());
        }
        if let Some(rest) = descriptor.strip_prefix("aug:mix:") {
            let v: Vec<usize> = rest.split('-').map(str::parse).collect::<Result<_, _>>().map_err(|_| bad())?;
            let [c, p, e, g] = v[..] else { return Err(bad()) };
            let mut rng = Rng::seed(0);
            return MixAug::new(c, p, e, g, &mut rng).map(Augmentor::Mix).map_err(|_| bad());
        }
        if let Some(inner) = descriptor.strip_prefix("aug:composed(").and_then(|s| s.strip_suffix(')')) {
            return Ok(Augmentor::Composed(Box::new(Self::template(inner)?), AffineAug::default()));
        }
        Err(bad())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::shift_with_offsets;
    use crate::models::{cos_teacher, Checkpoint};
    use std::f64::consts::PI;

    const TINY: f64 = -40.0; // log sigma; exp(-40) ~ 4e-18

    fn frozen_gaussian(mu: f64) -> Augmentor {
        Augmentor::Gaussian(GaussianAug {
            mu: Tensor::full([1], mu),
            log_sigma: Tensor::full([1], TINY),
        })
    }

    fn frozen_affine(theta: [f64; 6]) -> Augmentor {
        Augmentor::Affine(AffineAug {
            theta_mu: Tensor::new([2, 3], theta.to_vec()).unwrap(),
            theta_log_sigma: Tensor::full([2, 3], TINY),
        })
    }

    #[test]
    fn gaussian_identity_limit_and_periodic_shift() {
        let mut rng = Rng::seed(1);
        let x = Tensor::uniform([16, 1], -3.0, 3.0, &mut rng);
        let y = frozen_gaussian(0.0).augment_tensor(&x, &mut rng).unwrap();
        assert!(y.data().iter().zip(x.data()).all(|(a, b)| (a - b).abs() < 1e-12));
        let y = frozen_gaussian(2.0 * PI).augment_tensor(&x, &mut rng).unwrap();
        for (a, b) in cos_teacher(&y).data().iter().zip(cos_teacher(&x).data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn gaussian_unit_noise_statistics() {
        let aug = Augmentor::Gaussian(GaussianAug::new(1, 0.0, 1.0).unwrap());
        let mut rng = Rng::seed(2);
        let y = aug.augment_tensor(&Tensor::zeros([10_000, 1]), &mut rng).unwrap();
        let n = y.len() as f64;
        let mean = y.sum() / n;
        let std = (y.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((0.95..=1.05).contains(&std), "{std}");
    }

    #[test]
    fn affine_identity_and_one_pixel_shift() {
        let mut rng = Rng::seed(3);
        let x = Tensor::uniform([2, 1, 6, 7], 0.0, 1.0, &mut rng);
        let y = Augmentor::Affine(AffineAug::with_mean(IDENTITY_THETA, (-40f64).exp()))
            .augment_tensor(&x, &mut rng)
            .unwrap();
        assert!(y.data().iter().zip(x.data()).all(|(a, b)| (a - b).abs() < 1e-6));

        let w = 7;
        let shift = 2.0 / (w as f64 - 1.0);
        let y = frozen_affine([1.0, 0.0, shift, 0.0, 1.0, 0.0]).augment_tensor(&x, &mut rng).unwrap();
        // Sampling one pixel to the right moves content one pixel left.
        let oracle = shift_with_offsets(&x, &[(0, -1), (0, -1)]).unwrap();
        for b in 0..2 {
            for i in 0..6 {
                for j in 0..w - 1 {
                    let k = (b * 6 + i) * w + j;
                    assert!((y.data()[k] - oracle.data()[k]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn affine_scaling_fixes_center() {
        let mut rng = Rng::seed(4);
        let x = Tensor::uniform([1, 1, 7, 7], 0.0, 1.0, &mut rng);
        let y = frozen_affine([0.5, 0.0, 0.0, 0.0, 0.5, 0.0]).augment_tensor(&x, &mut rng).unwrap();
        assert!((y.data()[3 * 7 + 3] - x.data()[3 * 7 + 3]).abs() < 1e-12);
    }

    fn mix(group: usize) -> Augmentor {
        let mut rng = Rng::seed(5);
        Augmentor::Mix(MixAug::new(1, 2, 4, group, &mut rng).unwrap())
    }

    #[test]
    fn mix_identical_images_are_fixed_points() {
        let mut rng = Rng::seed(6);
        let one = Tensor::uniform([1, 1, 4, 6], 0.0, 1.0, &mut rng);
        let x = Tensor::new([2, 1, 4, 6], [one.data(), one.data()].concat()).unwrap();
        let y = mix(2).augment_tensor(&x, &mut rng).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mix_extreme_query_selects_one_image() {
        let mut rng = Rng::seed(7);
        let mut x = Tensor::uniform([2, 1, 4, 4], 0.0, 1.0, &mut rng);
        // Image 1 is all zeros, image 0 strictly positive; a projection of ones
        // and a huge positive query make image 0 win every tile.
        x.data_mut()[16..].iter_mut().for_each(|v| *v = 0.0);
        x.data_mut()[..16].iter_mut().for_each(|v| *v += 0.5);
        let aug = Augmentor::Mix(MixAug {
            patch: 2,
            group: 2,
            projection: Tensor::full([4, 3], 1.0),
            query_mu: Tensor::full([3], 1e4),
            query_log_sigma: Tensor::full([3], TINY),
        });
        let y = aug.augment_tensor(&x, &mut rng).unwrap();
        for b in 0..2 {
            assert_eq!(&y.data()[b * 16..(b + 1) * 16], &x.data()[..16]);
        }
    }

    #[test]
    fn mix_weights_lie_on_simplex() {
        let mut rng = Rng::seed(8);
        for group in [2, 3] {
            let aug = mix(group);
            for _ in 0..20 {
                let x = Tensor::randn([group * 2, 1, 4, 6], &mut rng);
                let w = aug.mix_weights(&x, &mut rng).unwrap();
                assert_eq!(w.shape(), &[2, 6, group]);
                for row in w.data().chunks(group) {
                    assert!(row.iter().all(|&v| v >= 0.0));
                    assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn mix_shape_errors() {
        let mut rng = Rng::seed(9);
        assert!(mix(2).augment_tensor(&Tensor::zeros([3, 1, 4, 4]), &mut rng).is_err());
        assert!(mix(2).augment_tensor(&Tensor::zeros([2, 1, 5, 4]), &mut rng).is_err());
        assert!(mix(2).augment_tensor(&Tensor::zeros([2, 2, 4, 4]), &mut rng).is_err());
    }

    #[test]
    fn shapes_are_preserved() {
        let mut rng = Rng::seed(10);
        let img = Tensor::uniform([4, 1, 8, 8], 0.0, 1.0, &mut rng);
        for aug in [
            Augmentor::Affine(AffineAug::default()),
            Augmentor::Gaussian(GaussianAug::new(64, 0.0, 0.1).unwrap()),
            Augmentor::Mix(MixAug::with_defaults(1, &mut rng).unwrap()),
            Augmentor::Composed(Box::new(mix(2)), AffineAug::default()),
        ] {
            assert_eq!(aug.augment_tensor(&img, &mut rng).unwrap().shape(), img.shape());
        }
    }

    #[test]
    fn snapshots_round_trip() {
        let mut rng = Rng::seed(11);
        for aug in [
            Augmentor::Affine(AffineAug::with_mean([1.1, 0.2, 0.0, -0.1, 0.9, 0.3], 0.05)),
            Augmentor::Gaussian(GaussianAug::new(3, 0.5, 2.0).unwrap()),
            Augmentor::Mix(MixAug::with_defaults(1, &mut rng).unwrap()),
            Augmentor::Composed(Box::new(mix(3)), AffineAug::default()),
        ] {
            let bytes = aug.checkpoint().encode();
            let back = Augmentor::from_checkpoint(Checkpoint::decode(&bytes).unwrap()).unwrap();
            assert_eq!(back, aug);
        }
        let bogus = Checkpoint::new("aug:vae", vec![]);
        assert!(Augmentor::from_checkpoint(bogus).is_err());
    }

    #[test]
    fn mixup_examples() {
        let mut rng = Rng::seed(12);
        let a = Tensor::randn([3, 2], &mut rng);
        let b = Tensor::randn([3, 2], &mut rng);
        assert_eq!(mixup_baseline(&a, &b, 0.0).unwrap(), a);
        assert_eq!(mixup_baseline(&a, &b, 1.0).unwrap(), b);
        let half = mixup_baseline(&Tensor::zeros([1]), &Tensor::full([1], 2.0), 0.5).unwrap();
        assert_eq!(half.data(), &[1.0]);
        assert!(mixup_baseline(&a, &b, 1.5).is_err());
        assert!(mixup_baseline(&a, &b, -0.1).is_err());
        for _ in 0..10 {
            let alpha = rng.uniform(0.0, 1.0);
            let y = mixup_baseline(&a, &b, alpha).unwrap();
            for ((v, p), q) in y.data().iter().zip(a.data()).zip(b.data()) {
                assert!((v - ((1.0 - alpha) * p + alpha * q)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn random_affine_zero_ranges_is_identity() {
        let mut rng = Rng::seed(13);
        let x = Tensor::uniform([3, 1, 9, 9], 0.0, 1.0, &mut rng);
        let y = random_affine_baseline(&x, &mut rng, &RandomAffineRanges::zero()).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn random_affine_pure_shift_matches_fractional_shift() {
        let mut rng = Rng::seed(14);
        let ranges = RandomAffineRanges {
            max_shift: 4.0,
            ..RandomAffineRanges::zero()
        };
        let (h, w) = (12, 12);
        let x = Tensor::uniform([1, 1, h, w], 0.0, 1.0, &mut rng);
        let mut probe = rng.clone();
        let tf = PixelAffine::sample(&ranges, &mut probe);
        let y = random_affine_baseline(&x, &mut rng, &ranges).unwrap();
        let [tx, ty] = tf.t;
        // Bilinear oracle for content moved by (tx, ty).
        let px = |i: i64, j: i64| {
            if (0..h as i64).contains(&i) && (0..w as i64).contains(&j) {
                x.data()[i as usize * w + j as usize]
            } else {
                0.0
            }
        };
        for i in 0..h {
            for j in 0..w {
                let (si, sj) = (i as f64 - ty, j as f64 - tx);
                let (i0, j0) = (si.floor(), sj.floor());
                let (fi, fj) = (si - i0, sj - j0);
                let (i0, j0) = (i0 as i64, j0 as i64);
                let v = (1.0 - fi) * ((1.0 - fj) * px(i0, j0) + fj * px(i0, j0 + 1))
                    + fi * ((1.0 - fj) * px(i0 + 1, j0) + fj * px(i0 + 1, j0 + 1));
                assert!((y.data()[i * w + j] - v).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn random_affine_defaults_keep_digit_box_visible() {
        let mut rng = Rng::seed(15);
        let ranges = RandomAffineRanges::defaults_for(28);
        let mut img = vec![0.0; 28 * 28];
        for i in 4..24 {
            for j in 4..24 {
                img[i * 28 + j] = 1.0;
            }
        }
        let x = Tensor::new([1, 1, 28, 28], img).unwrap();
        for _ in 0..200 {
            let tf = PixelAffine::sample(&ranges, &mut rng);
            if tf.keeps_box(20, 28, 28) {
                // Every box corner lands on a pixel center inside the canvas.
                let y = random_affine_baseline(&x, &mut rng.clone(), &ranges).unwrap();
                assert!(y.data().iter().all(|v| (0.0..=1.0 + 1e-12).contains(v)));
            }
        }
        // The sampler itself never returns a draw that clips the box.
        let x = Tensor::zeros([64, 1, 28, 28]);
        assert!(random_affine_baseline(&x, &mut rng, &ranges).is_ok());
        let impossible = RandomAffineRanges {
            scale: (1.6, 1.7),
            ..ranges
        };
        assert!(random_affine_baseline(&x, &mut rng, &impossible).is_err());
    }

    #[test]
    fn degenerate_ranges_rejected() {
        let mut rng = Rng::seed(16);
        let x = Tensor::zeros([1, 1, 8, 8]);
        let bad = RandomAffineRanges {
            scale: (1.2, 0.8),
            ..RandomAffineRanges::zero()
        };
        assert!(random_affine_baseline(&x, &mut rng, &bad).is_err());
    }

    #[test]
    fn oracle_shift_matches_index_shift() {
        let mut rng = Rng::seed(17);
        let x = Tensor::uniform([5, 1, 10, 10], 0.0, 1.0, &mut rng);
        assert_eq!(oracle_shift_baseline(&x, &mut rng, 0).unwrap(), x);
        let mut a = Rng::seed(18);
        let mut b = Rng::seed(18);
        let offsets = crate::data::draw_offsets(5, 3, &mut a);
        let y = oracle_shift_baseline(&x, &mut b, 3).unwrap();
        let z = shift_with_offsets(&x, &offsets).unwrap();
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&y), bits(&z));
        assert!(oracle_shift_baseline(&x, &mut rng, 10).is_err());
    }

    #[test]
    fn oracle_shift_draws_are_uniform() {
        let mut rng = Rng::seed(19);
        let m = 2;
        let offsets = crate::data::draw_offsets(10_000, m, &mut rng);
        let cells = (2 * m + 1) * (2 * m + 1);
        let mut counts = vec![0f64; cells];
        for (dy, dx) in offsets {
            counts[((dy + 2) * 5 + dx + 2) as usize] += 1.0;
        }
        let expected = 10_000.0 / cells as f64;
        let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
        // 99th percentile of chi-square with 24 degrees of freedom.
        assert!(chi2 < 42.98, "chi2 = {chi2}");
    }
}
