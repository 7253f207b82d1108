//! Content-addressed LRU cache in front of any provider, so repeated frames
//! and intention texts hit the network at most once.

use std::num::NonZeroUsize;
use std::sync::Mutex;

use lru::LruCache;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::types::Image;

use super::{Embedder, Embedding};

type Key = [u8; 32];

fn image_key(img: &Image) -> Key {
    let mut h = Sha256::new();
    h.update(b"image");
    h.update(img.data());
    h.finalize().into()
}

fn text_key(text: &str) -> Key {
    let mut h = Sha256::new();
    h.update(b"text");
    h.update(text.as_bytes());
    h.finalize().into()
}

pub struct CachedEmbedder {
    inner: Box<dyn Embedder>,
    cache: Mutex<LruCache<Key, Embedding>>,
}

impl CachedEmbedder {
    pub fn new(inner: Box<dyn Embedder>, capacity: usize) -> Result<Self> {
        let capacity = NonZeroUsize::new(capacity)
            .ok_or_else(|| Error::invalid("cache capacity must be >= 1"))?;
        Ok(CachedEmbedder {
            inner,
            cache: Mutex::new(LruCache::new(capacity)),
        })
    }

    /// Resolve a keyed batch: serve hits from the cache, fetch the misses in
    /// one inner call, and splice results back in input order.
    fn lookup<T: ?Sized>(
        &self,
        items: &[&T],
        key_of: impl Fn(&T) -> Key,
        fetch: impl Fn(&[&T]) -> Result<Vec<Embedding>>,
    ) -> Result<Vec<Embedding>> {
        let keys: Vec<Key> = items.iter().map(|it| key_of(it)).collect();
        let mut out: Vec<Option<Embedding>> = {
            let mut cache = self.cache.lock().expect("cache lock poisoned");
            keys.iter().map(|k| cache.get(k).cloned()).collect()
        };
        let miss_idx: Vec<usize> = (0..items.len()).filter(|i| out[*i].is_none()).collect();
        if !miss_idx.is_empty() {
            let misses: Vec<&T> = miss_idx.iter().map(|&i| items[i]).collect();
            let fetched = fetch(&misses)?;
            let mut cache = self.cache.lock().expect("cache lock poisoned");
            for (&i, emb) in miss_idx.iter().zip(fetched) {
                cache.put(keys[i], emb.clone());
                out[i] = Some(emb);
            }
        }
        Ok(out.into_iter().map(|e| e.expect("all slots filled")).collect())
    }
}

impl Embedder for CachedEmbedder {
    fn embed_images(&self, images: &[&Image]) -> Result<Vec<Embedding>> {
        self.lookup(images, image_key, |miss| self.inner.embed_images(miss))
    }

    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Embedding>> {
        self.lookup(texts, text_key, |miss| self.inner.embed_texts(miss))
    }
}
