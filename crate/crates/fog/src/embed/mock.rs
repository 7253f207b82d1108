//! Hand-computable stand-in for a vision-language embedder: images map to
//! their normalized channel means, known intention texts to fixed anchors.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::types::Image;

use super::{Embedder, Embedding};

/// Known phrases and their anchor directions, normalized at lookup.
const DICTIONARY: [(&str, [f64; 3]); 4] = [
    ("ground is blue", [0.0, 0.0, 1.0]),
    ("ground is orange", [1.0, 0.5, 0.0]),
    ("agent flips over", [1.0, 0.0, 0.0]),
    ("agent stands normally", [0.0, 1.0, 0.0]),
];

pub struct MockEmbedder;

impl MockEmbedder {
    pub fn new() -> Self {
        MockEmbedder
    }
}

impl Default for MockEmbedder {
    fn default() -> Self {
        Self::new()
    }
}

fn normalize(v: [f64; 3]) -> Result<Embedding> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return Err(Error::invalid("cannot normalize a zero vector"));
    }
    Embedding::new(v.map(|x| x / norm).to_vec())
}

/// Deterministic unit vector for a phrase outside the dictionary, seeded by
/// the phrase's content hash.
fn hashed_direction(text: &str) -> Embedding {
    let digest = Sha256::digest(text.as_bytes());
    let seed = u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
        if let Ok(e) = normalize(v) {
            return e;
        }
    }
}

impl Embedder for MockEmbedder {
    fn embed_images(&self, images: &[&Image]) -> Result<Vec<Embedding>> {
        images
            .iter()
            .map(|img| normalize(img.channel_means()))
            .collect()
    }

    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Embedding>> {
        texts
            .iter()
            .map(|text| {
                if text.is_empty() {
                    return Err(Error::invalid("cannot embed an empty string"));
                }
                match DICTIONARY.iter().find(|(k, _)| k == text) {
                    Some((_, anchor)) => normalize(*anchor),
                    None => Ok(hashed_direction(text)),
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;
    use crate::types::IMAGE_BYTES;

    fn solid(r: u8, g: u8, b: u8) -> Image {
        Image::solid(r, g, b)
    }

    #[test]
    fn all_blue_image_embeds_to_unit_blue() {
        let e = MockEmbedder::new();
        let out = e.embed_images(&[&solid(0, 0, 255)]).unwrap();
        assert_eq!(out[0].as_slice(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn all_gray_image_embeds_to_diagonal() {
        let e = MockEmbedder::new();
        let out = e.embed_images(&[&solid(128, 128, 128)]).unwrap();
        let want = 1.0 / 3.0_f64.sqrt();
        for x in out[0].as_slice() {
            assert_abs_diff_eq!(*x, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn batches_preserve_order() {
        let e = MockEmbedder::new();
        let (a, b, c) = (solid(255, 0, 0), solid(0, 255, 0), solid(0, 0, 255));
        let out = e.embed_images(&[&a, &b, &c]).unwrap();
        assert_eq!(out[0].as_slice(), &[1.0, 0.0, 0.0]);
        assert_eq!(out[1].as_slice(), &[0.0, 1.0, 0.0]);
        assert_eq!(out[2].as_slice(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn dictionary_anchors_resolve() {
        let e = MockEmbedder::new();
        let out = e
            .embed_texts(&["ground is blue", "ground is orange"])
            .unwrap();
        assert_eq!(out[0].as_slice(), &[0.0, 0.0, 1.0]);
        // Independent oracle: (1, 0.5, 0) / sqrt(1.25).
        let norm = 1.25_f64.sqrt();
        assert_abs_diff_eq!(out[1].as_slice()[0], 1.0 / norm, epsilon = 1e-12);
        assert_abs_diff_eq!(out[1].as_slice()[1], 0.5 / norm, epsilon = 1e-12);
        assert_eq!(out[1].as_slice()[2], 0.0);
    }

    #[test]
    fn flip_anchors_are_orthogonal() {
        let e = MockEmbedder::new();
        let out = e
            .embed_texts(&["agent flips over", "agent stands normally"])
            .unwrap();
        assert_eq!(out[0].as_slice(), &[1.0, 0.0, 0.0]);
        assert_eq!(out[1].as_slice(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn unknown_phrases_are_deterministic_unit_vectors() {
        let e = MockEmbedder::new();
        let a = e.embed_texts(&["walk on two legs"]).unwrap();
        let b = e.embed_texts(&["walk on two legs"]).unwrap();
        assert_eq!(a, b);
        let norm: f64 = a[0].as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
        assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-12);
        let other = e.embed_texts(&["walk on three legs"]).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn empty_text_is_rejected() {
        let e = MockEmbedder::new();
        assert!(e.embed_texts(&[""]).is_err());
    }

    #[test]
    fn image_embedding_is_pure() {
        let e = MockEmbedder::new();
        let mut data = vec![0u8; IMAGE_BYTES];
        for (i, byte) in data.iter_mut().enumerate() {
            *byte = (i % 251) as u8;
        }
        let img = Image::new(data).unwrap();
        assert_eq!(
            e.embed_images(&[&img]).unwrap(),
            e.embed_images(&[&img]).unwrap()
        );
    }
}
