use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{init_normal, Checkpoint, ParamStore, Tensor};
use super::tokenizer::{encode_buckets, DEFAULT_BUCKETS, IMAGE_FEATURE_DIM};
use super::{
    cosine_score, dot, l2_norm, matvec, BackendError, BackendKind, BackendRef, DualEncoder,
    ImageSource, MatchRoute, ToyBackendConfig, TrainableBackend,
};

pub const BASE_TEXT_LEN: usize = 77;
pub const EXTENDED_TEXT_LEN: usize = 512;

const TOKEN_EMBEDDING: &str = "text_encoder.token_embedding";
const POSITIONAL: &str = "text_encoder.positional";
const TEXT_HEAD: &str = "text_encoder.head";
const IMAGE_PROJ: &str = "image_encoder.proj";
const TEMPERATURE: &str = "temperature";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyDualConfig {
    pub seed: u64,
    pub dim: usize,
    pub buckets: usize,
    pub image_feature_dim: usize,
    pub max_text_len: usize,
    /// Table length before the last positional extension, if any.
    pub extended_from: Option<usize>,
}

/// Embedding-bag text tower and linear image tower.
///
/// Text: hash-bucket token embeddings plus positional rows, mean-pooled and
/// passed through a linear head. Image: linear map of the image
/// pseudo-feature. Temperature starts at `ln(1 / 0.07)`.
#[derive(Debug, Clone)]
pub struct ToyDualEncoder {
    config: ToyDualConfig,
    params: ParamStore,
    images: ImageSource,
}

impl ToyDualEncoder {
    pub fn new(seed: u64, dim: usize) -> Result<Self, BackendError> {
        if dim < 4 {
            return Err(BackendError::Config(format!("embedding dim must be >= 4, got {dim}")));
        }
        let config = ToyDualConfig {
            seed,
            dim,
            buckets: DEFAULT_BUCKETS,
            image_feature_dim: IMAGE_FEATURE_DIM,
            max_text_len: BASE_TEXT_LEN,
            extended_from: None,
        };
        let k = config.image_feature_dim;
        let mut params = ParamStore::new();
        params.insert(TOKEN_EMBEDDING, init_normal(seed, TOKEN_EMBEDDING, &[config.buckets, dim], 0.5));
        params.insert(POSITIONAL, init_normal(seed, POSITIONAL, &[config.max_text_len, dim], 0.1));
        params.insert(TEXT_HEAD, init_normal(seed, TEXT_HEAD, &[dim, dim], 1.0 / (dim as f64).sqrt()));
        params.insert(IMAGE_PROJ, init_normal(seed, IMAGE_PROJ, &[dim, k], 1.0 / (k as f64).sqrt()));
        params.insert(
            TEMPERATURE,
            Tensor {
                shape: vec![1],
                data: vec![(1.0f64 / 0.07).ln()],
            },
        );
        Ok(Self {
            config,
            params,
            images: ImageSource::Hashed,
        })
    }

    pub(crate) fn from_parts(config: ToyDualConfig, params: ParamStore) -> Result<Self, BackendError> {
        let expect = |name: &str, shape: &[usize]| -> Result<(), BackendError> {
            match params.try_get(name) {
                Some(t) if t.shape == shape => Ok(()),
                Some(t) => Err(BackendError::Checkpoint(format!(
                    "{name}: shape {:?}, expected {shape:?}",
                    t.shape
                ))),
                None => Err(BackendError::Checkpoint(format!("missing tensor {name}"))),
            }
        };
        let d = config.dim;
        expect(TOKEN_EMBEDDING, &[config.buckets, d])?;
        expect(POSITIONAL, &[config.max_text_len, d])?;
        expect(TEXT_HEAD, &[d, d])?;
        expect(IMAGE_PROJ, &[d, config.image_feature_dim])?;
        expect(TEMPERATURE, &[1])?;
        Ok(Self {
            config,
            params,
            images: ImageSource::Hashed,
        })
    }

    pub fn config(&self) -> &ToyDualConfig {
        &self.config
    }

    pub fn set_image_source(&mut self, source: ImageSource) {
        self.images = source;
    }

    pub fn set_log_temperature(&mut self, t: f64) {
        self.params.get_mut(TEMPERATURE).data[0] = t;
    }

    pub fn positional_table(&self) -> &Tensor {
        self.params.get(POSITIONAL)
    }

    fn image_feature(&self, image_ref: &str) -> Result<Vec<f64>, BackendError> {
        self.images.feature(image_ref, self.config.image_feature_dim)
    }

    fn token_ids(&self, text: &str) -> Result<Vec<usize>, BackendError> {
        encode_buckets(text, self.config.buckets, self.config.max_text_len)
    }

    /// Mean of token-embedding plus positional rows.
    fn pooled(&self, ids: &[usize]) -> Vec<f64> {
        let emb = self.params.get(TOKEN_EMBEDDING);
        let pos = self.params.get(POSITIONAL);
        let mut acc = vec![0.0; self.config.dim];
        for (j, &b) in ids.iter().enumerate() {
            for ((a, e), p) in acc.iter_mut().zip(emb.row(b)).zip(pos.row(j)) {
                *a += e + p;
            }
        }
        let n = ids.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    fn project_image(&self, feature: &[f64]) -> Vec<f64> {
        matvec(&self.params.get(IMAGE_PROJ).data, self.config.image_feature_dim, feature)
    }

    fn project_text(&self, pooled: &[f64]) -> Vec<f64> {
        matvec(&self.params.get(TEXT_HEAD).data, self.config.dim, pooled)
    }

    fn grad_single(
        &self,
        image_ref: &str,
        text: &str,
        upstream: f64,
        grads: &mut ParamStore,
    ) -> Result<f64, BackendError> {
        if text.trim().is_empty() {
            return Err(BackendError::EmptyText);
        }
        let d = self.config.dim;
        let k = self.config.image_feature_dim;
        let feature = self.image_feature(image_ref)?;
        let image = self.project_image(&feature);
        let ids = self.token_ids(text)?;
        let pooled = self.pooled(&ids);
        let text_vec = self.project_text(&pooled);
        let t = self.log_temperature();
        let score = cosine_score(&image, &text_vec, t)?;

        let (ni, nt) = (l2_norm(&image), l2_norm(&text_vec));
        let ih: Vec<f64> = image.iter().map(|x| x / ni).collect();
        let th: Vec<f64> = text_vec.iter().map(|x| x / nt).collect();
        grads.get_mut(TEMPERATURE).data[0] += upstream * score;

        let dcos = upstream * t.exp();
        // d norm(v) / dv applied to g: (g - v_hat <v_hat, g>) / |v|
        let gt: Vec<f64> = ih.iter().map(|x| dcos * x).collect();
        let gi: Vec<f64> = th.iter().map(|x| dcos * x).collect();
        let pt = dot(&th, &gt);
        let pi = dot(&ih, &gi);
        let d_text: Vec<f64> = (0..d).map(|r| (gt[r] - th[r] * pt) / nt).collect();
        let d_image: Vec<f64> = (0..d).map(|r| (gi[r] - ih[r] * pi) / ni).collect();

        let g_img = grads.get_mut(IMAGE_PROJ);
        for (row, dr) in g_img.data.chunks_mut(k).zip(&d_image) {
            for (g, f) in row.iter_mut().zip(&feature) {
                *g += dr * f;
            }
        }
        let g_head = grads.get_mut(TEXT_HEAD);
        for (row, dr) in g_head.data.chunks_mut(d).zip(&d_text) {
            for (g, h) in row.iter_mut().zip(&pooled) {
                *g += dr * h;
            }
        }
        let head = &self.params.get(TEXT_HEAD).data;
        let mut d_pooled = vec![0.0; d];
        for r in 0..d {
            for c in 0..d {
                d_pooled[c] += head[r * d + c] * d_text[r];
            }
        }
        let n = ids.len() as f64;
        d_pooled.iter_mut().for_each(|g| *g /= n);
        let g_emb = grads.get_mut(TOKEN_EMBEDDING);
        for &b in &ids {
            for (g, dp) in g_emb.row_mut(b).iter_mut().zip(&d_pooled) {
                *g += dp;
            }
        }
        let g_pos = grads.get_mut(POSITIONAL);
        for j in 0..ids.len() {
            for (g, dp) in g_pos.row_mut(j).iter_mut().zip(&d_pooled) {
                *g += dp;
            }
        }
        Ok(score)
    }
}

impl DualEncoder for ToyDualEncoder {
    fn encode_image(&self, image_ref: &str) -> Result<Vec<f64>, BackendError> {
        Ok(self.project_image(&self.image_feature(image_ref)?))
    }

    fn encode_text(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        let ids = self.token_ids(text)?;
        Ok(self.project_text(&self.pooled(&ids)))
    }

    fn log_temperature(&self) -> f64 {
        self.params.get(TEMPERATURE).data[0]
    }

    fn max_text_len(&self) -> usize {
        self.config.max_text_len
    }
}

impl TrainableBackend for ToyDualEncoder {
    fn kind(&self) -> BackendKind {
        BackendKind::Dual
    }

    fn scorer(&self) -> BackendRef<'_> {
        BackendRef::Dual(self)
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
        match route {
            MatchRoute::Single(text) => self.grad_single(image_ref, text, upstream, grads),
            MatchRoute::Merged { .. } => Err(BackendError::NoGuidedHead),
        }
    }

    fn save_checkpoint(&self, path: &Path) -> Result<(), BackendError> {
        Checkpoint::new(ToyBackendConfig::ToyDual(self.config.clone()), &self.params).save(path)
    }
}

/// Grows the positional table to `new_len` rows.
///
/// Existing rows are copied bit-for-bit; new rows are drawn from a zero-mean
/// normal whose standard deviation matches the existing table.
pub fn extend_positional_table(
    backend: &ToyDualEncoder,
    new_len: usize,
) -> Result<ToyDualEncoder, BackendError> {
    let old_len = backend.config.max_text_len;
    if new_len <= old_len {
        return Err(BackendError::Shrink {
            current: old_len,
            requested: new_len,
        });
    }
    let d = backend.config.dim;
    let old = backend.params.get(POSITIONAL);
    let n = old.data.len() as f64;
    let mean = old.data.iter().sum::<f64>() / n;
    let std = (old.data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let fresh = init_normal(
        backend.config.seed ^ (new_len as u64).rotate_left(32),
        "text_encoder.positional.extension",
        &[new_len - old_len, d],
        std,
    );
    let mut data = old.data.clone();
    data.extend_from_slice(&fresh.data);

    let mut out = backend.clone();
    out.params.insert(
        POSITIONAL,
        Tensor {
            shape: vec![new_len, d],
            data,
        },
    );
    out.config.max_text_len = new_len;
    out.config.extended_from = Some(old_len);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::dual_match;

    fn words(n: usize) -> String {
        (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn same_seed_same_params() {
        let a = ToyDualEncoder::new(7, 16).unwrap();
        let b = ToyDualEncoder::new(7, 16).unwrap();
        let c = ToyDualEncoder::new(8, 16).unwrap();
        assert_eq!(a.params.content_hash(), b.params.content_hash());
        assert_ne!(a.params.content_hash(), c.params.content_hash());
        assert!(ToyDualEncoder::new(7, 3).is_err());
    }

    #[test]
    fn empty_text_is_rejected() {
        let b = ToyDualEncoder::new(7, 8).unwrap();
        assert!(matches!(b.encode_text(""), Err(BackendError::EmptyText)));
    }

    #[test]
    fn long_texts_are_tail_truncated() {
        let b = ToyDualEncoder::new(1, 8).unwrap();
        let head = b.encode_text(&words(77)).unwrap();
        let longer = b.encode_text(&format!("{} extra tail words", words(77))).unwrap();
        assert_eq!(head, longer);
    }

    #[test]
    fn extension_copies_rows_and_keeps_short_encodings() {
        let b = ToyDualEncoder::new(7, 16).unwrap();
        let e = extend_positional_table(&b, EXTENDED_TEXT_LEN).unwrap();
        let old = b.positional_table();
        let new = e.positional_table();
        assert_eq!(new.shape, vec![512, 16]);
        assert_eq!(&new.data[..old.data.len()], &old.data[..]);
        assert!(new.data.iter().all(|x| x.is_finite()));
        let text = words(60);
        assert_eq!(b.encode_text(&text).unwrap(), e.encode_text(&text).unwrap());
        assert_eq!(e.config().extended_from, Some(77));

        let one = extend_positional_table(&b, 78).unwrap();
        assert_eq!(one.positional_table().shape, vec![78, 16]);
        assert!(matches!(
            extend_positional_table(&b, 77),
            Err(BackendError::Shrink { .. })
        ));
    }

    #[test]
    fn gradient_score_matches_dual_match() {
        let b = ToyDualEncoder::new(3, 8).unwrap();
        let mut g = b.params.zeros_like();
        let s = b
            .match_with_grad("img/1", MatchRoute::Single("a photo of a dog"), 1.0, &mut g)
            .unwrap();
        assert_eq!(s, dual_match(&b, "img/1", "a photo of a dog").unwrap());
        assert_eq!(g.get(TEMPERATURE).data[0], s);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let b = ToyDualEncoder::new(11, 6).unwrap();
        let (img, text) = ("synth/1/dog", "what is it dog");
        let mut g = b.params.zeros_like();
        b.match_with_grad(img, MatchRoute::Single(text), 1.0, &mut g).unwrap();
        let ids = b.token_ids(text).unwrap();
        let probes: Vec<(&str, usize)> = vec![
            (TEMPERATURE, 0),
            (IMAGE_PROJ, 5),
            (IMAGE_PROJ, 40),
            (TEXT_HEAD, 7),
            (TEXT_HEAD, 30),
            (TOKEN_EMBEDDING, ids[0] * 6 + 2),
            (TOKEN_EMBEDDING, ids[3] * 6 + 5),
            (POSITIONAL, 3 * 6 + 1),
        ];
        let h = 1e-6;
        for (name, idx) in probes {
            let mut plus = b.clone();
            plus.params.get_mut(name).data[idx] += h;
            let mut minus = b.clone();
            minus.params.get_mut(name).data[idx] -= h;
            let fd = (dual_match(&plus, img, text).unwrap() - dual_match(&minus, img, text).unwrap()) / (2.0 * h);
            let an = g.get(name).data[idx];
            assert!(
                (fd - an).abs() <= 1e-6 * (1.0 + an.abs()),
                "{name}[{idx}]: analytic {an} vs fd {fd}"
            );
        }
    }
}
