use super::{EmbeddingError, EmbeddingProvider};

pub const DEFAULT_DIMENSION: usize = 256;

/// Offline embedder: character 3-grams of the lowercased, space-padded text
/// are hashed (FNV-1a, 64-bit) into `dim` buckets and counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEmbedder {
    dim: usize,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIMENSION)
    }
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn features(&self, text: &str) -> Vec<f32> {
        let mut cleaned = String::with_capacity(text.len() + 2);
        cleaned.push(' ');
        let mut last_space = true;
        for c in text.chars().flat_map(char::to_lowercase) {
            if c.is_alphanumeric() {
                cleaned.push(c);
                last_space = false;
            } else if !last_space {
                cleaned.push(' ');
                last_space = true;
            }
        }
        if !last_space {
            cleaned.push(' ');
        }
        let chars: Vec<char> = cleaned.chars().collect();
        let mut out = vec![0.0f32; self.dim];
        let mut buf = [0u8; 12];
        for gram in chars.windows(3) {
            let mut len = 0;
            for c in gram {
                len += c.encode_utf8(&mut buf[len..]).len();
            }
            let bucket = (fnv1a(&buf[..len]) % self.dim as u64) as usize;
            out[bucket] += 1.0;
        }
        out
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl EmbeddingProvider for HashingEmbedder {
    fn id(&self) -> String {
        format!("hashing-3gram-fnv1a-d{}", self.dim)
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbeddingError> {
        Ok(texts.iter().map(|t| self.features(t)).collect())
    }
}
