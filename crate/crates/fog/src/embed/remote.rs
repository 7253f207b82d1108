//! HTTP provider for a real embedding service, speaking a one-endpoint
//! protocol: POST /embed with a typed item batch, embeddings back in order.

use std::io::Cursor;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Image, IMAGE_HEIGHT, IMAGE_WIDTH};

use super::{Embedder, Embedding};

/// Attempts per batch before the transport error propagates (one initial
/// try plus retries).
const MAX_ATTEMPTS: u32 = 3;

#[derive(Serialize)]
struct EmbedRequest<'a> {
    kind: &'static str,
    items: Vec<&'a str>,
}

#[derive(Deserialize)]
struct EmbedResponse {
    embeddings: Vec<Vec<f64>>,
}

pub struct RemoteEmbedder {
    url: String,
    batch_size: usize,
    agent: ureq::Agent,
}

impl RemoteEmbedder {
    pub fn new(endpoint: String, batch_size: usize, timeout_secs: u64) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(timeout_secs)))
            .build();
        RemoteEmbedder {
            url: format!("{}/embed", endpoint.trim_end_matches('/')),
            batch_size: batch_size.max(1),
            agent: config.into(),
        }
    }

    fn post_batch(&self, kind: &'static str, items: &[&str]) -> Result<Vec<Embedding>> {
        let request = EmbedRequest {
            kind,
            items: items.to_vec(),
        };
        let mut last_error = String::new();
        for _attempt in 0..MAX_ATTEMPTS {
            match self.try_once(&request) {
                Ok(vecs) if vecs.len() == items.len() => {
                    return vecs.into_iter().map(Embedding::new).collect();
                }
                Ok(vecs) => {
                    last_error = format!(
                        "response had {} embeddings for {} items",
                        vecs.len(),
                        items.len()
                    );
                }
                Err(e) => last_error = e,
            }
        }
        Err(Error::Transport {
            attempts: MAX_ATTEMPTS,
            message: last_error,
        })
    }

    fn try_once(&self, request: &EmbedRequest<'_>) -> std::result::Result<Vec<Vec<f64>>, String> {
        let mut response = self
            .agent
            .post(&self.url)
            .send_json(request)
            .map_err(|e| e.to_string())?;
        let parsed: EmbedResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| format!("bad response body: {e}"))?;
        Ok(parsed.embeddings)
    }

    fn embed_batched(&self, kind: &'static str, items: &[&str]) -> Result<Vec<Embedding>> {
        let mut out = Vec::with_capacity(items.len());
        for chunk in items.chunks(self.batch_size) {
            out.extend(self.post_batch(kind, chunk)?);
        }
        Ok(out)
    }
}

fn encode_png(img: &Image) -> Result<String> {
    let buf = image::RgbImage::from_raw(
        IMAGE_WIDTH as u32,
        IMAGE_HEIGHT as u32,
        img.data().to_vec(),
    )
    .expect("image buffer has the fixed frame size");
    let mut png = Vec::new();
    buf.write_to(&mut Cursor::new(&mut png), image::ImageFormat::Png)
        .map_err(|e| Error::invalid(format!("png encoding failed: {e}")))?;
    Ok(BASE64.encode(&png))
}

impl Embedder for RemoteEmbedder {
    fn embed_images(&self, images: &[&Image]) -> Result<Vec<Embedding>> {
        let encoded: Vec<String> = images.iter().map(|i| encode_png(i)).collect::<Result<_>>()?;
        let refs: Vec<&str> = encoded.iter().map(String::as_str).collect();
        self.embed_batched("image", &refs)
    }

    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Embedding>> {
        for t in texts {
            if t.is_empty() {
                return Err(Error::invalid("cannot embed an empty string"));
            }
        }
        self.embed_batched("text", texts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_slash_is_normalized() {
        let e = RemoteEmbedder::new("http://host:1/".into(), 8, 1);
        assert_eq!(e.url, "http://host:1/embed");
        let e = RemoteEmbedder::new("http://host:1".into(), 8, 1);
        assert_eq!(e.url, "http://host:1/embed");
    }

    #[test]
    fn png_encoding_round_trips() {
        let img = crate::envs::render_point_room(2.0, 3.0);
        let b64 = encode_png(&img).unwrap();
        let png = BASE64.decode(b64).unwrap();
        let back = image::load_from_memory(&png).unwrap().to_rgb8();
        assert_eq!(back.into_raw(), img.data());
    }

    #[test]
    fn unreachable_endpoint_fails_with_attempt_count() {
        // Reserved TEST-NET-1 address; connections fail fast.
        let e = RemoteEmbedder::new("http://192.0.2.1:9".into(), 8, 1);
        match e.embed_texts(&["hello"]) {
            Err(Error::Transport { attempts, .. }) => assert_eq!(attempts, MAX_ATTEMPTS),
            other => panic!("expected transport error, got {other:?}"),
        }
    }
}
