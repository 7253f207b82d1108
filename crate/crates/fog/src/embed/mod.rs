//! Embedding providers that map rendered frames and intention texts into a
//! shared vector space, plus the cosine similarity the score functions
//! compare in.

mod cache;
mod mock;
mod remote;

pub use cache::CachedEmbedder;
pub use mock::MockEmbedder;
pub use remote::RemoteEmbedder;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Image;

/// A finite, not-all-zero vector in the provider's embedding space. The mock
/// provider uses 3 dimensions; remote providers choose their own width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    vec: Vec<f64>,
}

impl Embedding {
    pub fn new(vec: Vec<f64>) -> Result<Self> {
        if vec.is_empty() {
            return Err(Error::invalid("embedding is empty"));
        }
        if !vec.iter().all(|x| x.is_finite()) {
            return Err(Error::invalid("embedding has non-finite entries"));
        }
        if vec.iter().all(|x| *x == 0.0) {
            return Err(Error::invalid("embedding is all-zero"));
        }
        Ok(Embedding { vec })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.vec
    }

    pub fn len(&self) -> usize {
        self.vec.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vec.is_empty()
    }
}

/// Cosine similarity, clamped into [-1, 1] to absorb rounding on near-parallel
/// inputs.
pub fn cosine(u: &Embedding, v: &Embedding) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::invalid(format!(
            "cosine needs equal lengths, got {} and {}",
            u.len(),
            v.len()
        )));
    }
    let dot: f64 = u.vec.iter().zip(&v.vec).map(|(a, b)| a * b).sum();
    let nu: f64 = u.vec.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv: f64 = v.vec.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::invalid("cosine of a zero vector"));
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Provider interface. Implementations are safe for concurrent read-only
/// use; batching and caching happen behind this boundary.
pub trait Embedder: Send + Sync {
    /// One embedding per image, in input order.
    fn embed_images(&self, images: &[&Image]) -> Result<Vec<Embedding>>;

    /// One embedding per text, in input order. Empty strings are rejected.
    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Embedding>>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    Mock,
    Remote,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmbedderConfig {
    pub kind: EmbedderKind,
    /// Base URL of the remote service; required when kind is remote.
    pub endpoint: Option<String>,
    pub batch_size: usize,
    pub timeout_secs: u64,
    pub cache_capacity: usize,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig {
            kind: EmbedderKind::Mock,
            endpoint: None,
            batch_size: 64,
            timeout_secs: 30,
            cache_capacity: 4096,
        }
    }
}

impl EmbedderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kind == EmbedderKind::Remote && self.endpoint.is_none() {
            return Err(Error::invalid("remote embedder needs an endpoint"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("embedder batch_size must be >= 1"));
        }
        if self.cache_capacity == 0 {
            return Err(Error::invalid("embedder cache_capacity must be >= 1"));
        }
        Ok(())
    }
}

/// Build the configured provider wrapped in the LRU cache. The handle is
/// shared: one provider serves every scorer in a run.
pub fn make_embedder(config: &EmbedderConfig) -> Result<std::sync::Arc<dyn Embedder>> {
    config.validate()?;
    let inner: Box<dyn Embedder> = match config.kind {
        EmbedderKind::Mock => Box::new(MockEmbedder::new()),
        EmbedderKind::Remote => Box::new(RemoteEmbedder::new(
            config.endpoint.clone().expect("validated above"),
            config.batch_size,
            config.timeout_secs,
        )),
    };
    Ok(std::sync::Arc::new(CachedEmbedder::new(
        inner,
        config.cache_capacity,
    )?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_rejects_degenerate_vectors() {
        assert!(Embedding::new(vec![]).is_err());
        assert!(Embedding::new(vec![0.0, 0.0]).is_err());
        assert!(Embedding::new(vec![1.0, f64::NAN]).is_err());
        assert!(Embedding::new(vec![0.0, 1.0]).is_ok());
    }

    #[test]
    fn cosine_basics() {
        let e = |v: &[f64]| Embedding::new(v.to_vec()).unwrap();
        assert_eq!(cosine(&e(&[2.0, 0.0, 0.0]), &e(&[2.0, 0.0, 0.0])).unwrap(), 1.0);
        assert_eq!(cosine(&e(&[1.0, 0.0, 0.0]), &e(&[0.0, 1.0, 0.0])).unwrap(), 0.0);
        let orange = e(&[1.0, 0.5, 0.0]);
        let blue = e(&[0.0, 0.0, 1.0]);
        assert_eq!(cosine(&blue, &orange).unwrap(), 0.0);
    }

    #[test]
    fn cosine_is_symmetric_and_rejects_mismatch() {
        let e = |v: &[f64]| Embedding::new(v.to_vec()).unwrap();
        let u = e(&[0.3, -0.8, 0.1]);
        let v = e(&[-0.5, 0.2, 0.9]);
        assert_eq!(cosine(&u, &v).unwrap(), cosine(&v, &u).unwrap());
        assert!(cosine(&u, &e(&[1.0])).is_err());
    }

    #[test]
    fn cosine_magnitude_is_bounded_under_fuzz() {
        use rand::Rng;

        use crate::rng::{stream, StreamId};
        let mut rng = stream(41, StreamId::Eval);
        for _ in 0..10_000 {
            let dim = rng.random_range(1..=8);
            let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
                (0..dim).map(|_| rng.random_range(-1e3..=1e3)).collect()
            };
            let (u, v) = (draw(&mut rng), draw(&mut rng));
            if u.iter().all(|x| *x == 0.0) || v.iter().all(|x| *x == 0.0) {
                continue;
            }
            let c = cosine(
                &Embedding::new(u).unwrap(),
                &Embedding::new(v).unwrap(),
            )
            .unwrap();
            assert!((-1.0..=1.0).contains(&c));
        }
    }

    #[test]
    fn remote_config_requires_endpoint() {
        let cfg = EmbedderConfig {
            kind: EmbedderKind::Remote,
            ..EmbedderConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(make_embedder(&cfg).is_err());
    }
}
