use crate::diffcore::{reparam_sample, Rng, Tensor, Var};
use crate::error::{Error, Result};

/// Patch-wise mixing across groups of `group` images.
///
/// Each `patch x patch` tile is projected to an embedding and scored against one
/// query per group (dot product). A softmax over the group's images at every
/// tile location gives convex weights, and every group member receives the
/// weighted combination of the group's tiles.
#[derive(Clone, Debug, PartialEq)]
pub struct MixAug {
    pub patch: usize,
    pub group: usize,
    /// `[C * patch * patch, E]`
    pub projection: Tensor,
    /// `[E]`
    pub query_mu: Tensor,
    /// `[E]`
    pub query_log_sigma: Tensor,
}

pub const DEFAULT_GROUP: usize = 2;
pub const DEFAULT_PATCH: usize = 4;
pub const DEFAULT_EMBED: usize = 32;

impl MixAug {
    pub fn new(channels: usize, patch: usize, embed: usize, group: usize, rng: &mut Rng) -> Result<Self> {
        if channels == 0 || patch == 0 || embed == 0 || group < 2 {
            return Err(Error::invalid(
                "MixAug::new",
                format!("channels {channels}, patch {patch}, embed {embed}, group {group}"),
            ));
        }
        let fan_in = channels * patch * patch;
        let scale = 1.0 / (fan_in as f64).sqrt();
        Ok(Self {
            patch,
            group,
            projection: Tensor::randn([fan_in, embed], rng).map(|v| v * scale),
            query_mu: Tensor::randn([embed], rng),
            query_log_sigma: Tensor::zeros([embed]),
        })
    }

    pub fn with_defaults(channels: usize, rng: &mut Rng) -> Result<Self> {
        Self::new(channels, DEFAULT_PATCH, DEFAULT_EMBED, DEFAULT_GROUP, rng)
    }

    pub fn channels(&self) -> usize {
        self.projection.shape()[0] / (self.patch * self.patch)
    }

    pub fn embed(&self) -> usize {
        self.projection.shape()[1]
    }

    /// Mixed batch and the weights `[B / G, K, G]` over each group's images at
    /// each of the `K` tile locations.
    pub(crate) fn forward_with_weights<'g>(
        &self,
        projection: Var<'g>,
        query_mu: Var<'g>,
        query_log_sigma: Var<'g>,
        x: Var<'g>,
        rng: &mut Rng,
    ) -> Result<(Var<'g>, Var<'g>)> {
        let s = x.shape();
        let (p, g) = (self.patch, self.group);
        if s.len() != 4 || s[1] != self.channels() {
            return Err(Error::shape(
                "mix_augment",
                format!("expected [B, {}, H, W], got {s:?}", self.channels()),
            ));
        }
        let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
        if b % g != 0 {
            return Err(Error::invalid("mix_augment", format!("batch {b} not divisible by group {g}")));
        }
        if h % p != 0 || w % p != 0 {
            return Err(Error::invalid("mix_augment", format!("patch {p} does not divide {h}x{w}")));
        }
        let (hp, wp) = (h / p, w / p);
        let (k, d, groups) = (hp * wp, c * p * p, b / g);

        // [B, C, H, W] -> [B, K, C*P*P]
        let patches = x
            .reshape([b, c, hp, p, wp, p])?
            .permute(&[0, 2, 4, 1, 3, 5])?
            .reshape([b, k, d])?;
        let emb = patches.reshape([b * k, d])?.matmul(projection)?.reshape([b, k, self.embed()])?;

        let queries = reparam_sample(
            query_mu.broadcast_rows(groups),
            query_log_sigma.broadcast_rows(groups),
            rng,
        )?;
        let member_group: Vec<usize> = (0..b).map(|i| i / g).collect();
        let q = queries.select_rows(&member_group)?.reshape([b, self.embed(), 1])?;
        let scores = emb.bmm(q)?.reshape([groups, g, k])?.permute(&[0, 2, 1])?;
        let weights = scores.softmax_last(1.0)?;

        let grouped = patches.reshape([groups, g, k, d])?.permute(&[0, 2, 1, 3])?.reshape([groups * k, g, d])?;
        let mixed = weights.reshape([groups * k, 1, g])?.bmm(grouped)?.reshape([groups, k, d])?;
        let out = mixed
            .select_rows(&member_group)?
            .reshape([b, hp, wp, c, p, p])?
            .permute(&[0, 3, 1, 4, 2, 5])?
            .reshape([b, c, h, w])?;
        Ok((out, weights))
    }
}
