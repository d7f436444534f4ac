use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{init_normal, Checkpoint, ParamStore, Tensor};
use super::tokenizer::{encode_buckets, DEFAULT_BUCKETS, IMAGE_FEATURE_DIM};
use super::{
    dot, matvec, merge_features, merge_features_backward, BackendError, BackendKind, BackendRef,
    ImageSource, ImageTokens, MatchRoute, QueryFusion, ToyBackendConfig, TrainableBackend,
};

const TOKEN_EMBEDDING: &str = "qformer.token_embedding";
const POSITIONAL: &str = "qformer.positional";
const QUERIES: &str = "qformer.queries";
const OUT: &str = "qformer.out";
const IMAGE_PROJ: &str = "image_encoder.proj";
const PROJ_W: &str = "proj.weight";
const PROJ_B: &str = "proj.bias";
const GUIDED_W: &str = "proj_guided.weight";
const GUIDED_B: &str = "proj_guided.bias";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyFusionConfig {
    pub seed: u64,
    pub dim: usize,
    pub buckets: usize,
    pub image_feature_dim: usize,
    pub image_tokens: usize,
    pub queries: usize,
    pub max_text_len: usize,
}

/// Single-layer query transformer over a linear image tokenizer.
///
/// Each learned query is shifted by the pooled text embedding, attends over
/// the image tokens, and the attended vector is gated elementwise by the
/// text-conditioned query before a `tanh` output layer. Query outputs are
/// mean-pooled into the feature vector.
#[derive(Debug, Clone)]
pub struct ToyFusion {
    config: ToyFusionConfig,
    params: ParamStore,
    images: ImageSource,
}

struct QformerPass {
    ids: Vec<usize>,
    queries: Vec<Vec<f64>>,
    attention: Vec<Vec<f64>>,
    attended: Vec<Vec<f64>>,
    gated: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
    features: Vec<f64>,
}

impl ToyFusion {
    pub fn new(seed: u64, dim: usize) -> Result<Self, BackendError> {
        if dim < 4 {
            return Err(BackendError::Config(format!("feature dim must be >= 4, got {dim}")));
        }
        let config = ToyFusionConfig {
            seed,
            dim,
            buckets: DEFAULT_BUCKETS,
            image_feature_dim: IMAGE_FEATURE_DIM,
            image_tokens: 4,
            queries: 4,
            max_text_len: 512,
        };
        let d = dim;
        let k = config.image_feature_dim;
        let mut p = ParamStore::new();
        p.insert(TOKEN_EMBEDDING, init_normal(seed, TOKEN_EMBEDDING, &[config.buckets, d], 0.5));
        p.insert(POSITIONAL, init_normal(seed, POSITIONAL, &[config.max_text_len, d], 0.1));
        p.insert(QUERIES, init_normal(seed, QUERIES, &[config.queries, d], 0.5));
        p.insert(OUT, init_normal(seed, OUT, &[d, d], 1.0 / (d as f64).sqrt()));
        p.insert(
            IMAGE_PROJ,
            init_normal(seed, IMAGE_PROJ, &[config.image_tokens * d, k], 1.0 / (k as f64).sqrt()),
        );
        p.insert(PROJ_W, init_normal(seed, PROJ_W, &[d], 1.0 / (d as f64).sqrt()));
        p.insert(PROJ_B, Tensor::zeros(&[1]));
        p.insert(GUIDED_W, init_normal(seed, GUIDED_W, &[4 * d], 0.5 / (d as f64).sqrt()));
        p.insert(GUIDED_B, Tensor::zeros(&[1]));
        Ok(Self {
            config,
            params: p,
            images: ImageSource::Hashed,
        })
    }

    pub(crate) fn from_parts(config: ToyFusionConfig, params: ParamStore) -> Result<Self, BackendError> {
        let d = config.dim;
        let shapes: [(&str, Vec<usize>); 9] = [
            (TOKEN_EMBEDDING, vec![config.buckets, d]),
            (POSITIONAL, vec![config.max_text_len, d]),
            (QUERIES, vec![config.queries, d]),
            (OUT, vec![d, d]),
            (IMAGE_PROJ, vec![config.image_tokens * d, config.image_feature_dim]),
            (PROJ_W, vec![d]),
            (PROJ_B, vec![1]),
            (GUIDED_W, vec![4 * d]),
            (GUIDED_B, vec![1]),
        ];
        for (name, shape) in shapes {
            match params.try_get(name) {
                Some(t) if t.shape == shape => {}
                Some(t) => {
                    return Err(BackendError::Checkpoint(format!(
                        "{name}: shape {:?}, expected {shape:?}",
                        t.shape
                    )))
                }
                None => return Err(BackendError::Checkpoint(format!("missing tensor {name}"))),
            }
        }
        Ok(Self {
            config,
            params,
            images: ImageSource::Hashed,
        })
    }

    pub fn config(&self) -> &ToyFusionConfig {
        &self.config
    }

    pub fn set_image_source(&mut self, source: ImageSource) {
        self.images = source;
    }

    /// Zeroes both projection heads.
    pub fn zero_projection(&mut self) {
        for name in [PROJ_W, PROJ_B, GUIDED_W, GUIDED_B] {
            self.params.get_mut(name).data.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    fn image_tokens_from_feature(&self, feature: &[f64]) -> Vec<Vec<f64>> {
        let flat = matvec(&self.params.get(IMAGE_PROJ).data, self.config.image_feature_dim, feature);
        flat.chunks_exact(self.config.dim).map(<[f64]>::to_vec).collect()
    }

    fn forward(&self, tokens: &[Vec<f64>], text: &str) -> Result<QformerPass, BackendError> {
        if text.trim().is_empty() {
            return Err(BackendError::EmptyText);
        }
        let d = self.config.dim;
        if tokens.iter().any(|z| z.len() != d) {
            return Err(BackendError::DimMismatch {
                left: tokens.first().map_or(0, Vec::len),
                right: d,
            });
        }
        let ids = encode_buckets(text, self.config.buckets, self.config.max_text_len)?;
        let emb = self.params.get(TOKEN_EMBEDDING);
        let pos = self.params.get(POSITIONAL);
        let mut pooled = vec![0.0; d];
        for (j, &b) in ids.iter().enumerate() {
            for ((a, e), p) in pooled.iter_mut().zip(emb.row(b)).zip(pos.row(j)) {
                *a += e + p;
            }
        }
        let n = ids.len() as f64;
        pooled.iter_mut().for_each(|a| *a /= n);

        let scale = 1.0 / (d as f64).sqrt();
        let query_table = self.params.get(QUERIES);
        let out_w = &self.params.get(OUT).data;
        let nq = self.config.queries;
        let mut pass = QformerPass {
            ids,
            queries: Vec::with_capacity(nq),
            attention: Vec::with_capacity(nq),
            attended: Vec::with_capacity(nq),
            gated: Vec::with_capacity(nq),
            outputs: Vec::with_capacity(nq),
            features: vec![0.0; d],
        };
        for r in 0..nq {
            let u: Vec<f64> = query_table.row(r).iter().zip(&pooled).map(|(q, h)| q + h).collect();
            let logits: Vec<f64> = tokens.iter().map(|z| dot(&u, z) * scale).collect();
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            let alpha: Vec<f64> = exps.iter().map(|e| e / total).collect();
            let mut c = vec![0.0; d];
            for (a, z) in alpha.iter().zip(tokens) {
                for (ci, zi) in c.iter_mut().zip(z) {
                    *ci += a * zi;
                }
            }
            let g: Vec<f64> = c.iter().zip(&u).map(|(ci, ui)| ci * ui).collect();
            let o: Vec<f64> = matvec(out_w, d, &g).into_iter().map(f64::tanh).collect();
            for (f, oi) in pass.features.iter_mut().zip(&o) {
                *f += oi;
            }
            pass.queries.push(u);
            pass.attention.push(alpha);
            pass.attended.push(c);
            pass.gated.push(g);
            pass.outputs.push(o);
        }
        pass.features.iter_mut().for_each(|f| *f /= nq as f64);
        Ok(pass)
    }

    /// Backpropagates `d_features` through one query-transformer pass.
    /// Returns the gradient with respect to the image tokens.
    fn backward(
        &self,
        tokens: &[Vec<f64>],
        pass: &QformerPass,
        d_features: &[f64],
        grads: &mut ParamStore,
    ) -> Vec<Vec<f64>> {
        let d = self.config.dim;
        let nq = self.config.queries;
        let scale = 1.0 / (d as f64).sqrt();
        let out_w = &self.params.get(OUT).data;
        let mut d_tokens = vec![vec![0.0; d]; tokens.len()];
        let mut d_pooled = vec![0.0; d];
        for r in 0..nq {
            let o = &pass.outputs[r];
            let d_pre: Vec<f64> = (0..d)
                .map(|i| d_features[i] / nq as f64 * (1.0 - o[i] * o[i]))
                .collect();
            let g_out = grads.get_mut(OUT);
            for (row, dp) in g_out.data.chunks_mut(d).zip(&d_pre) {
                for (g, x) in row.iter_mut().zip(&pass.gated[r]) {
                    *g += dp * x;
                }
            }
            let mut d_gated = vec![0.0; d];
            for i in 0..d {
                for j in 0..d {
                    d_gated[j] += out_w[i * d + j] * d_pre[i];
                }
            }
            let u = &pass.queries[r];
            let c = &pass.attended[r];
            let alpha = &pass.attention[r];
            let d_c: Vec<f64> = (0..d).map(|i| d_gated[i] * u[i]).collect();
            let mut d_u: Vec<f64> = (0..d).map(|i| d_gated[i] * c[i]).collect();

            let d_alpha: Vec<f64> = tokens.iter().map(|z| dot(&d_c, z)).collect();
            for (s, dz) in d_tokens.iter_mut().enumerate() {
                for (g, dc) in dz.iter_mut().zip(&d_c) {
                    *g += alpha[s] * dc;
                }
            }
            let weighted = dot(alpha, &d_alpha);
            for (s, z) in tokens.iter().enumerate() {
                let d_logit = alpha[s] * (d_alpha[s] - weighted) * scale;
                for i in 0..d {
                    d_u[i] += d_logit * z[i];
                    d_tokens[s][i] += d_logit * u[i];
                }
            }
            for (g, du) in grads.get_mut(QUERIES).row_mut(r).iter_mut().zip(&d_u) {
                *g += du;
            }
            for (p, du) in d_pooled.iter_mut().zip(&d_u) {
                *p += du;
            }
        }
        let n = pass.ids.len() as f64;
        d_pooled.iter_mut().for_each(|g| *g /= n);
        let g_emb = grads.get_mut(TOKEN_EMBEDDING);
        for &b in &pass.ids {
            for (g, dp) in g_emb.row_mut(b).iter_mut().zip(&d_pooled) {
                *g += dp;
            }
        }
        let g_pos = grads.get_mut(POSITIONAL);
        for j in 0..pass.ids.len() {
            for (g, dp) in g_pos.row_mut(j).iter_mut().zip(&d_pooled) {
                *g += dp;
            }
        }
        d_tokens
    }

    fn accumulate_image_grad(&self, feature: &[f64], d_tokens: &[Vec<f64>], grads: &mut ParamStore) {
        let k = self.config.image_feature_dim;
        let g = grads.get_mut(IMAGE_PROJ);
        for (row, dz) in d_tokens.iter().flatten().enumerate() {
            for (gi, f) in g.data[row * k..(row + 1) * k].iter_mut().zip(feature) {
                *gi += dz * f;
            }
        }
    }
}

impl QueryFusion for ToyFusion {
    fn encode_image(&self, image_ref: &str) -> Result<ImageTokens, BackendError> {
        let feature = self.images.feature(image_ref, self.config.image_feature_dim)?;
        Ok(ImageTokens(self.image_tokens_from_feature(&feature)))
    }

    fn qformer(&self, image: &ImageTokens, text: &str) -> Result<Vec<f64>, BackendError> {
        Ok(self.forward(&image.0, text)?.features)
    }

    fn feature_dim(&self) -> usize {
        self.config.dim
    }

    fn project(&self, features: &[f64]) -> Result<f64, BackendError> {
        let w = &self.params.get(PROJ_W).data;
        if features.len() != w.len() {
            return Err(BackendError::DimMismatch {
                left: features.len(),
                right: w.len(),
            });
        }
        Ok(dot(w, features) + self.params.get(PROJ_B).data[0])
    }

    fn project_guided(&self, merged: &[f64]) -> Result<f64, BackendError> {
        let w = &self.params.get(GUIDED_W).data;
        if merged.len() != w.len() {
            return Err(BackendError::DimMismatch {
                left: merged.len(),
                right: w.len(),
            });
        }
        Ok(dot(w, merged) + self.params.get(GUIDED_B).data[0])
    }

    fn has_guided_head(&self) -> bool {
        true
    }
}

impl TrainableBackend for ToyFusion {
    fn kind(&self) -> BackendKind {
        BackendKind::Fusion
    }

    fn scorer(&self) -> BackendRef<'_> {
        BackendRef::Fusion(self)
    }

    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn image_encoder_params(&self) -> Vec<String> {
        vec![IMAGE_PROJ.to_string()]
    }

    fn match_with_grad(
        &self,
        image_ref: &str,
        route: MatchRoute<'_>,
        upstream: f64,
        grads: &mut ParamStore,
    ) -> Result<f64, BackendError> {
        let feature = self.images.feature(image_ref, self.config.image_feature_dim)?;
        let tokens = self.image_tokens_from_feature(&feature);
        match route {
            MatchRoute::Single(text) => {
                let pass = self.forward(&tokens, text)?;
                let score = self.project(&pass.features)?;
                for (g, x) in grads.get_mut(PROJ_W).data.iter_mut().zip(&pass.features) {
                    *g += upstream * x;
                }
                grads.get_mut(PROJ_B).data[0] += upstream;
                let d_features: Vec<f64> =
                    self.params.get(PROJ_W).data.iter().map(|w| upstream * w).collect();
                let d_tokens = self.backward(&tokens, &pass, &d_features, grads);
                self.accumulate_image_grad(&feature, &d_tokens, grads);
                Ok(score)
            }
            MatchRoute::Merged { unguided, guided } => {
                let first = self.forward(&tokens, unguided)?;
                let second = self.forward(&tokens, guided)?;
                let merged = merge_features(&first.features, &second.features)?;
                let score = self.project_guided(&merged)?;
                for (g, m) in grads.get_mut(GUIDED_W).data.iter_mut().zip(&merged) {
                    *g += upstream * m;
                }
                grads.get_mut(GUIDED_B).data[0] += upstream;
                let d_merged: Vec<f64> =
                    self.params.get(GUIDED_W).data.iter().map(|w| upstream * w).collect();
                let (d1, d2) = merge_features_backward(&first.features, &second.features, &d_merged);
                let mut d_tokens = self.backward(&tokens, &first, &d1, grads);
                for (acc, extra) in d_tokens.iter_mut().zip(self.backward(&tokens, &second, &d2, grads)) {
                    for (a, e) in acc.iter_mut().zip(extra) {
                        *a += e;
                    }
                }
                self.accumulate_image_grad(&feature, &d_tokens, grads);
                Ok(score)
            }
        }
    }

    fn save_checkpoint(&self, path: &Path) -> Result<(), BackendError> {
        Checkpoint::new(ToyBackendConfig::ToyFusion(self.config.clone()), &self.params).save(path)
    }
}
