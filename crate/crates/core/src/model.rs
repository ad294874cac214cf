//! Small differentiable classifiers with hand-written backward passes.
//!
//! Three architectures share one flat parameter vector layout:
//!
//! | arch       | segments (in order)                            |
//! |------------|------------------------------------------------|
//! | `linear`   | `w` [C×d], `b` [C]                             |
//! | `mlp`      | `w1` [h×d], `b1` [h], `w2` [C×h], `b2` [C]     |
//! | `attnpool` | `emb` [V×e], `query` [e], `w` [C×e], `b` [C]   |
//!
//! Matrices are row-major. The attention-pooling model scores each token
//! embedding against a single learned query, softmaxes the scores into
//! per-token weights and classifies the weighted mean embedding.

use std::fmt;
use std::io::Write;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::aggregate::LabelDistribution;
use crate::error::{Error, Result};
use crate::featurize::Features;
use crate::math;
use crate::seeding;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Linear,
    Mlp,
    #[serde(alias = "attn_pool")]
    AttnPool,
}

impl Arch {
    pub const ALL: [Arch; 3] = [Arch::Linear, Arch::Mlp, Arch::AttnPool];

    pub fn takes_sequences(self) -> bool {
        self == Arch::AttnPool
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Linear => "linear",
            Self::Mlp => "mlp",
            Self::AttnPool => "attnpool",
        })
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "mlp" => Ok(Self::Mlp),
            "attnpool" | "attn_pool" => Ok(Self::AttnPool),
            other => Err(Error::Argument(format!("unknown architecture {other:?}"))),
        }
    }
}

/// Architecture and dimensions. `input_dim` is the feature dimension for
/// `linear`/`mlp` and the vocabulary size for `attnpool`; `hidden_dim` is
/// the MLP width or the embedding size (unused by `linear`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub arch: Arch,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub class_count: usize,
    pub seed: u64,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim < 1 || self.hidden_dim < 1 {
            return Err(Error::Argument(format!(
                "model dimensions must be >= 1: input_dim={}, hidden_dim={}",
                self.input_dim, self.hidden_dim
            )));
        }
        if self.class_count < 2 {
            return Err(Error::Argument(format!(
                "class_count must be >= 2, got {}",
                self.class_count
            )));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let (d, h, c) = (self.input_dim, self.hidden_dim, self.class_count);
        match self.arch {
            Arch::Linear => c * d + c,
            Arch::Mlp => h * d + h + c * h + c,
            Arch::AttnPool => d * h + h + c * h + c,
        }
    }

    /// Named parameter segments in storage order.
    pub fn segments(&self) -> Vec<(&'static str, Range<usize>)> {
        let (d, h, c) = (self.input_dim, self.hidden_dim, self.class_count);
        let sizes: Vec<(&'static str, usize)> = match self.arch {
            Arch::Linear => vec![("w", c * d), ("b", c)],
            Arch::Mlp => vec![("w1", h * d), ("b1", h), ("w2", c * h), ("b2", c)],
            Arch::AttnPool => vec![("emb", d * h), ("query", h), ("w", c * h), ("b", c)],
        };
        let mut start = 0;
        sizes
            .into_iter()
            .map(|(name, n)| {
                let r = start..start + n;
                start += n;
                (name, r)
            })
            .collect()
    }

    fn fan_in(&self, segment: &str) -> Option<usize> {
        match (self.arch, segment) {
            (Arch::Linear, "w") | (Arch::Mlp, "w1") => Some(self.input_dim),
            (Arch::Mlp, "w2") => Some(self.hidden_dim),
            // embeddings and the query are scaled like a layer over the embedding
            (Arch::AttnPool, "emb" | "query" | "w") => Some(self.hidden_dim),
            _ => None,
        }
    }
}

/// Borrowed model input.
#[derive(Debug, Clone, Copy)]
pub enum ModelInput<'a> {
    /// Dense features for `linear` and `mlp`.
    Vector(&'a [f64]),
    /// Token ids for `attnpool`; looked up in the embedding table.
    Tokens(&'a [usize]),
    /// Pre-embedded token sequence for `attnpool` (used by attribution paths).
    Embedded(&'a [Vec<f64>]),
}

impl<'a> From<&'a Features> for ModelInput<'a> {
    fn from(f: &'a Features) -> Self {
        match f {
            Features::Vector(v) => ModelInput::Vector(&v.0),
            Features::Sequence(s) => ModelInput::Tokens(s.ids()),
        }
    }
}

#[derive(Debug, Clone)]
enum CacheState {
    Linear {
        x: Vec<f64>,
    },
    Mlp {
        x: Vec<f64>,
        pre: Vec<f64>,
        hidden: Vec<f64>,
    },
    AttnPool {
        tokens: Option<Vec<usize>>,
        embeddings: Vec<Vec<f64>>,
        alpha: Vec<f64>,
        pooled: Vec<f64>,
    },
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    spec: ModelSpec,
    state: CacheState,
}

impl ForwardCache {
    /// Per-token attention weights (attention pooling only).
    pub fn attention(&self) -> Option<&[f64]> {
        match &self.state {
            CacheState::AttnPool { alpha, .. } => Some(alpha),
            _ => None,
        }
    }

    /// Hidden representation: MLP post-activation or the pooled embedding.
    pub fn hidden(&self) -> Option<&[f64]> {
        match &self.state {
            CacheState::Mlp { hidden, .. } => Some(hidden),
            CacheState::AttnPool { pooled, .. } => Some(pooled),
            CacheState::Linear { .. } => None,
        }
    }

    pub fn pre_activations(&self) -> Option<&[f64]> {
        match &self.state {
            CacheState::Mlp { pre, .. } => Some(pre),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InputGradient {
    Vector(Vec<f64>),
    /// One gradient row per token embedding.
    Embedded(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: Vec<f64>,
    pub input: Option<InputGradient>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    spec: ModelSpec,
    params: Vec<f64>,
}

impl ClassifierModel {
    /// Weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` from a stream
    /// seeded by `spec.seed`; biases zero.
    pub fn init(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = seeding::stream(spec.seed, &["init", &spec.arch.to_string()]);
        let mut params = vec![0.0; spec.param_count()];
        for (name, range) in spec.segments() {
            if let Some(fan_in) = spec.fan_in(name) {
                let bound = 1.0 / (fan_in as f64).sqrt();
                for p in &mut params[range] {
                    *p = rng.random_range(-bound..=bound);
                }
            }
        }
        Ok(Self { spec, params })
    }

    pub fn from_params(spec: ModelSpec, params: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if params.len() != spec.param_count() {
            return Err(Error::Argument(format!(
                "{} parameters given, {} arch with these dims needs {}",
                params.len(),
                spec.arch,
                spec.param_count()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Validation("non-finite parameter".into()));
        }
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn class_count(&self) -> usize {
        self.spec.class_count
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn range(&self, name: &str) -> Range<usize> {
        self.spec
            .segments()
            .into_iter()
            .find(|(n, _)| *n == name)
            .map(|(_, r)| r)
            .unwrap_or_else(|| panic!("{} has no segment {name}", self.spec.arch))
    }

    /// Named parameter segment, e.g. `"w"` or `"b1"`.
    pub fn segment(&self, name: &str) -> &[f64] {
        let r = self.range(name);
        &self.params[r]
    }

    pub fn segment_mut(&mut self, name: &str) -> &mut [f64] {
        let r = self.range(name);
        &mut self.params[r]
    }

    /// Embedding rows for a token sequence (attention pooling only).
    pub fn embed(&self, ids: &[usize]) -> Result<Vec<Vec<f64>>> {
        if self.spec.arch != Arch::AttnPool {
            return Err(Error::UnsupportedArchitecture(format!(
                "{} has no embedding table",
                self.spec.arch
            )));
        }
        let e = self.spec.hidden_dim;
        let emb = self.segment("emb");
        ids.iter()
            .map(|&t| {
                if t >= self.spec.input_dim {
                    Err(Error::Argument(format!(
                        "token id {t} outside vocabulary of {}",
                        self.spec.input_dim
                    )))
                } else {
                    Ok(emb[t * e..(t + 1) * e].to_vec())
                }
            })
            .collect()
    }

    pub fn forward(&self, input: ModelInput<'_>) -> Result<(Vec<f64>, ForwardCache)> {
        let (d, h, c) = (self.spec.input_dim, self.spec.hidden_dim, self.spec.class_count);
        let (logits, state) = match (self.spec.arch, input) {
            (Arch::Linear, ModelInput::Vector(x)) => {
                self.check_vector(x)?;
                let z = affine(self.segment("w"), self.segment("b"), x, c, d);
                (z, CacheState::Linear { x: x.to_vec() })
            }
            (Arch::Mlp, ModelInput::Vector(x)) => {
                self.check_vector(x)?;
                let pre = affine(self.segment("w1"), self.segment("b1"), x, h, d);
                let hidden: Vec<f64> = pre.iter().map(|&v| v.max(0.0)).collect();
                let z = affine(self.segment("w2"), self.segment("b2"), &hidden, c, h);
                (
                    z,
                    CacheState::Mlp {
                        x: x.to_vec(),
                        pre,
                        hidden,
                    },
                )
            }
            (Arch::AttnPool, ModelInput::Tokens(ids)) => {
                let embeddings = self.embed(ids)?;
                self.attend(Some(ids.to_vec()), embeddings)
            }
            (Arch::AttnPool, ModelInput::Embedded(rows)) => {
                if let Some(bad) = rows.iter().find(|r| r.len() != h) {
                    return Err(Error::Argument(format!(
                        "embedding row has length {}, expected {h}",
                        bad.len()
                    )));
                }
                self.attend(None, rows.to_vec())
            }
            (arch, other) => {
                return Err(Error::Argument(format!(
                    "{arch} model cannot take {} input",
                    match other {
                        ModelInput::Vector(_) => "vector",
                        ModelInput::Tokens(_) => "token-sequence",
                        ModelInput::Embedded(_) => "embedded-sequence",
                    }
                )))
            }
        };
        Ok((
            logits,
            ForwardCache {
                spec: self.spec,
                state,
            },
        ))
    }

    fn check_vector(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.spec.input_dim {
            return Err(Error::Argument(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.spec.input_dim
            )));
        }
        Ok(())
    }

    fn attend(&self, tokens: Option<Vec<usize>>, embeddings: Vec<Vec<f64>>) -> (Vec<f64>, CacheState) {
        let (h, c) = (self.spec.hidden_dim, self.spec.class_count);
        let query = self.segment("query");
        let scores: Vec<f64> = embeddings.iter().map(|e| math::dot(query, e)).collect();
        // an empty sequence pools to the zero vector
        let alpha = if scores.is_empty() {
            Vec::new()
        } else {
            math::softmax(&scores)
        };
        let mut pooled = vec![0.0; h];
        for (a, e) in alpha.iter().zip(&embeddings) {
            for (p, v) in pooled.iter_mut().zip(e) {
                *p += a * v;
            }
        }
        let z = affine(self.segment("w"), self.segment("b"), &pooled, c, h);
        (
            z,
            CacheState::AttnPool {
                tokens,
                embeddings,
                alpha,
                pooled,
            },
        )
    }

    pub fn logits(&self, input: ModelInput<'_>) -> Result<Vec<f64>> {
        Ok(self.forward(input)?.0)
    }

    pub fn predict_proba(&self, input: ModelInput<'_>) -> Result<LabelDistribution> {
        Ok(LabelDistribution::from_logits(&self.logits(input)?))
    }

    /// Gradient of `logits · d_logits` with respect to every parameter and,
    /// when `with_input` is set, the input (features or token embeddings).
    pub fn backward(&self, cache: &ForwardCache, d_logits: &[f64], with_input: bool) -> Result<Gradients> {
        let mut params = vec![0.0; self.params.len()];
        let input = self.backward_into(cache, d_logits, &mut params, with_input)?;
        Ok(Gradients { params, input })
    }

    /// Like [`backward`](Self::backward) but adds the parameter gradient into
    /// `grad` instead of allocating.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        d_logits: &[f64],
        grad: &mut [f64],
        with_input: bool,
    ) -> Result<Option<InputGradient>> {
        if cache.spec.arch != self.spec.arch
            || cache.spec.input_dim != self.spec.input_dim
            || cache.spec.hidden_dim != self.spec.hidden_dim
            || cache.spec.class_count != self.spec.class_count
        {
            return Err(Error::Argument(
                "forward cache was produced by a model of a different shape".into(),
            ));
        }
        if d_logits.len() != self.spec.class_count {
            return Err(Error::Argument(format!(
                "d_logits has length {}, expected {}",
                d_logits.len(),
                self.spec.class_count
            )));
        }
        if grad.len() != self.params.len() {
            return Err(Error::Argument("gradient buffer has wrong length".into()));
        }
        let (d, h, c) = (self.spec.input_dim, self.spec.hidden_dim, self.spec.class_count);
        let g = d_logits;
        let input = match &cache.state {
            CacheState::Linear { x } => {
                let w = self.range("w");
                let b = self.range("b");
                outer_add(&mut grad[w], g, x);
                add(&mut grad[b], g);
                with_input.then(|| InputGradient::Vector(transpose_mul(self.segment("w"), g, c, d)))
            }
            CacheState::Mlp { x, pre, hidden } => {
                let (w1, b1, w2, b2) = (self.range("w1"), self.range("b1"), self.range("w2"), self.range("b2"));
                outer_add(&mut grad[w2], g, hidden);
                add(&mut grad[b2], g);
                let d_hidden = transpose_mul(self.segment("w2"), g, c, h);
                let d_pre: Vec<f64> = d_hidden
                    .iter()
                    .zip(pre)
                    .map(|(&dh, &p)| if p > 0.0 { dh } else { 0.0 })
                    .collect();
                outer_add(&mut grad[w1], &d_pre, x);
                add(&mut grad[b1], &d_pre);
                with_input.then(|| InputGradient::Vector(transpose_mul(self.segment("w1"), &d_pre, h, d)))
            }
            CacheState::AttnPool {
                tokens,
                embeddings,
                alpha,
                pooled,
            } => {
                let (emb, q, w, b) = (self.range("emb"), self.range("query"), self.range("w"), self.range("b"));
                outer_add(&mut grad[w], g, pooled);
                add(&mut grad[b], g);
                let d_pooled = transpose_mul(self.segment("w"), g, c, h);
                let d_alpha: Vec<f64> = embeddings.iter().map(|e| math::dot(&d_pooled, e)).collect();
                let mean: f64 = alpha.iter().zip(&d_alpha).map(|(a, da)| a * da).sum();
                let d_scores: Vec<f64> = alpha
                    .iter()
                    .zip(&d_alpha)
                    .map(|(a, da)| a * (da - mean))
                    .collect();
                let query = self.segment("query");
                {
                    let dq = &mut grad[q];
                    for (ds, e) in d_scores.iter().zip(embeddings) {
                        for (g, v) in dq.iter_mut().zip(e) {
                            *g += ds * v;
                        }
                    }
                }
                let d_emb: Vec<Vec<f64>> = alpha
                    .iter()
                    .zip(&d_scores)
                    .map(|(a, ds)| {
                        d_pooled
                            .iter()
                            .zip(query)
                            .map(|(dp, qv)| a * dp + ds * qv)
                            .collect()
                    })
                    .collect();
                if let Some(ids) = tokens {
                    let table = &mut grad[emb];
                    for (&t, row) in ids.iter().zip(&d_emb) {
                        add(&mut table[t * h..(t + 1) * h], row);
                    }
                }
                with_input.then_some(InputGradient::Embedded(d_emb))
            }
        };
        Ok(input)
    }

    /// Width of the hidden representation used for layer conductance.
    pub fn hidden_width(&self) -> Result<usize> {
        match self.spec.arch {
            Arch::Linear => Err(Error::UnsupportedArchitecture(
                "linear model has no hidden layer".into(),
            )),
            Arch::Mlp | Arch::AttnPool => Ok(self.spec.hidden_dim),
        }
    }

    /// `∂logit_target / ∂hidden`. Constant because logits are affine in the
    /// hidden representation for both layered architectures.
    pub fn hidden_logit_weights(&self, target: usize) -> Result<Vec<f64>> {
        let h = self.hidden_width()?;
        self.check_class(target)?;
        let w = match self.spec.arch {
            Arch::Mlp => self.segment("w2"),
            _ => self.segment("w"),
        };
        Ok(w[target * h..(target + 1) * h].to_vec())
    }

    /// Directional derivative of the hidden representation at `point` along
    /// `direction` (a Jacobian-vector product).
    pub fn hidden_tangent(&self, point: ModelInput<'_>, direction: ModelInput<'_>) -> Result<Vec<f64>> {
        let (d, h) = (self.spec.input_dim, self.spec.hidden_dim);
        match (self.spec.arch, point, direction) {
            (Arch::Mlp, ModelInput::Vector(x), ModelInput::Vector(dx)) => {
                self.check_vector(x)?;
                self.check_vector(dx)?;
                let w1 = self.segment("w1");
                let pre = affine(w1, self.segment("b1"), x, h, d);
                let zero = vec![0.0; h];
                let dpre = affine(w1, &zero, dx, h, d);
                Ok(pre
                    .iter()
                    .zip(dpre)
                    .map(|(&p, dp)| if p > 0.0 { dp } else { 0.0 })
                    .collect())
            }
            (Arch::AttnPool, ModelInput::Embedded(rows), ModelInput::Embedded(drows)) => {
                if rows.len() != drows.len() {
                    return Err(Error::Argument("point and direction differ in length".into()));
                }
                if rows.is_empty() {
                    return Ok(vec![0.0; h]);
                }
                let query = self.segment("query");
                let scores: Vec<f64> = rows.iter().map(|e| math::dot(query, e)).collect();
                let alpha = math::softmax(&scores);
                let d_scores: Vec<f64> = drows.iter().map(|de| math::dot(query, de)).collect();
                let mean: f64 = alpha.iter().zip(&d_scores).map(|(a, ds)| a * ds).sum();
                let mut tangent = vec![0.0; h];
                for t in 0..rows.len() {
                    let d_alpha = alpha[t] * (d_scores[t] - mean);
                    for k in 0..h {
                        tangent[k] += d_alpha * rows[t][k] + alpha[t] * drows[t][k];
                    }
                }
                Ok(tangent)
            }
            (Arch::Linear, ..) => Err(Error::UnsupportedArchitecture(
                "linear model has no hidden layer".into(),
            )),
            _ => Err(Error::Argument(
                "hidden tangent needs vector input for mlp and embedded input for attnpool".into(),
            )),
        }
    }

    fn check_class(&self, target: usize) -> Result<()> {
        if target >= self.spec.class_count {
            return Err(Error::Argument(format!(
                "target class {target} outside [0, {})",
                self.spec.class_count
            )));
        }
        Ok(())
    }

    /// Checkpoint bytes: one JSON header line, then the parameters as
    /// little-endian f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = CheckpointHeader {
            format: CHECKPOINT_FORMAT.into(),
            version: 1,
            arch: self.spec.arch,
            seed: self.spec.seed,
            spec: self.spec,
            param_count: self.params.len(),
        };
        let mut out = serde_json::to_vec(&header).expect("header serializes");
        out.push(b'\n');
        out.reserve(self.params.len() * 8);
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let newline = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Validation("checkpoint has no header line".into()))?;
        let header: CheckpointHeader = serde_json::from_slice(&bytes[..newline])?;
        if header.format != CHECKPOINT_FORMAT {
            return Err(Error::Validation(format!(
                "not a model checkpoint (format {:?})",
                header.format
            )));
        }
        let body = &bytes[newline + 1..];
        if body.len() != header.param_count * 8 {
            return Err(Error::Validation(format!(
                "checkpoint body has {} bytes, header promises {} parameters",
                body.len(),
                header.param_count
            )));
        }
        let params = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Self::from_params(header.spec, params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

const CHECKPOINT_FORMAT: &str = "perspective-model";

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    format: String,
    version: u32,
    arch: Arch,
    seed: u64,
    spec: ModelSpec,
    param_count: usize,
}

/// `W x + b` for row-major `W` [rows × cols]. Zero inputs are skipped, which
/// matters for sparse bag-of-words features.
fn affine(w: &[f64], b: &[f64], x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = b.to_vec();
    for (i, &xi) in x.iter().enumerate().take(cols) {
        if xi == 0.0 {
            continue;
        }
        for r in 0..rows {
            out[r] += w[r * cols + i] * xi;
        }
    }
    out
}

/// `Wᵀ g` for row-major `W` [rows × cols].
fn transpose_mul(w: &[f64], g: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for r in 0..rows {
        if g[r] == 0.0 {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for (o, v) in out.iter_mut().zip(row) {
            *o += g[r] * v;
        }
    }
    out
}

/// `grad += g xᵀ`.
fn outer_add(grad: &mut [f64], g: &[f64], x: &[f64]) {
    let cols = x.len();
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (r, &gr) in g.iter().enumerate() {
            grad[r * cols + i] += gr * xi;
        }
    }
}

fn add(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(arch: Arch, d: usize, h: usize, c: usize, seed: u64) -> ModelSpec {
        ModelSpec {
            arch,
            input_dim: d,
            hidden_dim: h,
            class_count: c,
            seed,
        }
    }

    #[test]
    fn init_is_deterministic() {
        let s = spec(Arch::Mlp, 7, 5, 3, 42);
        assert_eq!(ClassifierModel::init(s).unwrap(), ClassifierModel::init(s).unwrap());
        let other = ClassifierModel::init(ModelSpec { seed: 43, ..s }).unwrap();
        assert_ne!(other, ClassifierModel::init(s).unwrap());
    }

    #[test]
    fn linear_param_count() {
        let m = ClassifierModel::init(spec(Arch::Linear, 10, 1, 2, 0)).unwrap();
        assert_eq!(m.params().len(), 22);
        assert_eq!(spec(Arch::Mlp, 10, 4, 3, 0).param_count(), 40 + 4 + 12 + 3);
        assert_eq!(spec(Arch::AttnPool, 10, 4, 3, 0).param_count(), 40 + 4 + 12 + 3);
    }

    #[test]
    fn initial_biases_are_zero_and_weights_bounded() {
        for arch in Arch::ALL {
            let s = spec(arch, 9, 4, 3, 1);
            let m = ClassifierModel::init(s).unwrap();
            for (name, _) in s.segments() {
                let seg = m.segment(name);
                match s.fan_in(name) {
                    None => assert!(seg.iter().all(|&v| v == 0.0), "{arch} {name}"),
                    Some(f) => {
                        let bound = 1.0 / (f as f64).sqrt();
                        assert!(seg.iter().all(|v| v.abs() <= bound));
                        assert!(seg.iter().any(|&v| v != 0.0));
                    }
                }
            }
        }
    }

    #[test]
    fn linear_identity_weights() {
        let mut m = ClassifierModel::init(spec(Arch::Linear, 2, 1, 2, 0)).unwrap();
        m.segment_mut("w").copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        let z = m.logits(ModelInput::Vector(&[3.0, -1.0])).unwrap();
        assert_eq!(z, vec![3.0, -1.0]);
    }

    #[test]
    fn mlp_zero_weights_give_zero_logits() {
        let s = spec(Arch::Mlp, 4, 3, 2, 0);
        let m = ClassifierModel::from_params(s, vec![0.0; s.param_count()]).unwrap();
        assert_eq!(m.logits(ModelInput::Vector(&[1.0, 2.0, 3.0, 4.0])).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn attnpool_equal_embeddings_uniform_attention() {
        let s = spec(Arch::AttnPool, 5, 3, 2, 3);
        let mut m = ClassifierModel::init(s).unwrap();
        let row = [0.3, -0.2, 0.5];
        for t in 0..5 {
            m.segment_mut("emb")[t * 3..t * 3 + 3].copy_from_slice(&row);
        }
        let (_, cache) = m.forward(ModelInput::Tokens(&[0, 2, 4, 1])).unwrap();
        for a in cache.attention().unwrap() {
            assert!((a - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_weights_sum_to_one_and_shift_invariant() {
        let s = spec(Arch::AttnPool, 6, 4, 2, 9);
        let m = ClassifierModel::init(s).unwrap();
        let ids = [0usize, 3, 5, 3];
        let (_, cache) = m.forward(ModelInput::Tokens(&ids)).unwrap();
        let alpha = cache.attention().unwrap().to_vec();
        assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        // repeated token 3 gets the same weight at both positions
        assert_eq!(alpha[1], alpha[3]);
        let shifted: Vec<f64> = ids
            .iter()
            .map(|&t| math::dot(m.segment("query"), &m.embed(&[t]).unwrap()[0]) + 5.0)
            .collect();
        let alpha2 = math::softmax(&shifted);
        for (a, b) in alpha.iter().zip(&alpha2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn predict_proba_examples() {
        let mut m = ClassifierModel::init(spec(Arch::Linear, 1, 1, 2, 0)).unwrap();
        m.segment_mut("w").copy_from_slice(&[0.0, 0.0]);
        assert_eq!(m.predict_proba(ModelInput::Vector(&[1.0])).unwrap().probs(), &[0.5, 0.5]);
        m.segment_mut("b").copy_from_slice(&[1.0, 0.0]);
        let p = m.predict_proba(ModelInput::Vector(&[1.0])).unwrap();
        assert!((p.probs()[0] - 0.7311).abs() < 5e-5);
        m.segment_mut("b").copy_from_slice(&[6.0, 5.0]);
        let q = m.predict_proba(ModelInput::Vector(&[1.0])).unwrap();
        assert!((p.probs()[0] - q.probs()[0]).abs() < 1e-15);
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        for arch in Arch::ALL {
            let m = ClassifierModel::init(spec(arch, 6, 4, 3, 2)).unwrap();
            let x = [0.1, 0.0, 0.4, 0.2, 0.0, 0.9];
            let ids = [1usize, 4, 4];
            let input = if arch.takes_sequences() {
                ModelInput::Tokens(&ids)
            } else {
                ModelInput::Vector(&x)
            };
            let (_, cache) = m.forward(input).unwrap();
            let g = m.backward(&cache, &[0.0; 3], true).unwrap();
            assert!(g.params.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn linear_input_gradient_closed_form() {
        let m = ClassifierModel::init(spec(Arch::Linear, 3, 1, 2, 5)).unwrap();
        let (_, cache) = m.forward(ModelInput::Vector(&[0.2, -0.1, 0.7])).unwrap();
        let g = [0.3, -1.1];
        let grads = m.backward(&cache, &g, true).unwrap();
        let w = m.segment("w");
        let expect: Vec<f64> = (0..3).map(|i| w[i] * g[0] + w[3 + i] * g[1]).collect();
        assert_eq!(grads.input, Some(InputGradient::Vector(expect)));
    }

    #[test]
    fn mismatched_inputs_and_caches_are_rejected() {
        let lin = ClassifierModel::init(spec(Arch::Linear, 3, 1, 2, 0)).unwrap();
        assert!(matches!(lin.forward(ModelInput::Vector(&[1.0])), Err(Error::Argument(_))));
        assert!(matches!(lin.forward(ModelInput::Tokens(&[0])), Err(Error::Argument(_))));
        let other = ClassifierModel::init(spec(Arch::Linear, 4, 1, 2, 0)).unwrap();
        let (_, cache) = other.forward(ModelInput::Vector(&[1.0; 4])).unwrap();
        assert!(matches!(lin.backward(&cache, &[1.0, 0.0], false), Err(Error::Argument(_))));
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        for arch in Arch::ALL {
            let m = ClassifierModel::init(spec(arch, 8, 3, 4, 11)).unwrap();
            let bytes = m.to_bytes();
            let back = ClassifierModel::from_bytes(&bytes).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.to_bytes(), bytes);
        }
        assert!(ClassifierModel::from_bytes(b"{}\n").is_err());
    }
}
