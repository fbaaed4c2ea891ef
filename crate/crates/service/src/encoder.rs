//! Text encoder backends. Every backend returns unit vectors of the
//! configured dimension.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use ecosearch_core::embedding::{l2_norm, normalized};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, ServiceError};

pub const DEFAULT_ENCODER_TIMEOUT: Duration = Duration::from_secs(10);

/// Which backend to use, as given on the command line:
/// `remote URL`, `lookup FILE` or `test`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EncoderSpec {
    Remote(String),
    Lookup(PathBuf),
    Test,
}

impl FromStr for EncoderSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        let (kind, arg) = match s.split_once(|c: char| c.is_whitespace() || c == '=') {
            Some((k, a)) => (k, a.trim()),
            None => (s, ""),
        };
        match (kind, arg) {
            ("test", "") => Ok(EncoderSpec::Test),
            ("remote", url) if !url.is_empty() => Ok(EncoderSpec::Remote(url.to_string())),
            ("lookup", path) if !path.is_empty() => Ok(EncoderSpec::Lookup(PathBuf::from(path))),
            _ => Err(format!(
                "expected `remote URL`, `lookup FILE` or `test`, got `{s}`"
            )),
        }
    }
}

impl fmt::Display for EncoderSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EncoderSpec::Remote(url) => write!(f, "remote {url}"),
            EncoderSpec::Lookup(path) => write!(f, "lookup {}", path.display()),
            EncoderSpec::Test => f.write_str("test"),
        }
    }
}

#[derive(Serialize)]
struct RemoteRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct RemoteResponse {
    embedding: Vec<f32>,
}

#[derive(Deserialize)]
struct LookupEntry {
    text: String,
    embedding: Vec<f32>,
}

pub enum Encoder {
    /// POSTs `{"text": ...}` and expects `{"embedding": [...]}`.
    Remote {
        url: String,
        dim: usize,
        agent: ureq::Agent,
    },
    /// Exact-text table loaded from JSON lines `{"text", "embedding"}`.
    Lookup {
        dim: usize,
        table: HashMap<String, Vec<f32>>,
    },
    /// Seeded from a SHA-256 of the text; for tests and demos.
    DeterministicTest { dim: usize },
}

impl fmt::Debug for Encoder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Encoder::Remote { url, dim, .. } => write!(f, "Remote({url}, dim {dim})"),
            Encoder::Lookup { dim, table } => write!(f, "Lookup({} entries, dim {dim})", table.len()),
            Encoder::DeterministicTest { dim } => write!(f, "DeterministicTest(dim {dim})"),
        }
    }
}

impl Encoder {
    pub fn from_spec(spec: &EncoderSpec, dim: usize, timeout: Duration) -> Result<Self> {
        match spec {
            EncoderSpec::Remote(url) => Ok(Self::remote(url, dim, timeout)),
            EncoderSpec::Lookup(path) => Self::lookup_file(path, dim),
            EncoderSpec::Test => Ok(Encoder::DeterministicTest { dim }),
        }
    }

    pub fn remote(url: &str, dim: usize, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(true)
            .build()
            .into();
        Encoder::Remote {
            url: url.to_string(),
            dim,
            agent,
        }
    }

    pub fn lookup_file(path: &Path, dim: usize) -> Result<Self> {
        let reader = BufReader::new(File::open(path).map_err(|e| {
            ServiceError::Config(format!("cannot open lookup file {}: {e}", path.display()))
        })?);
        let mut table = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: LookupEntry = serde_json::from_str(&line).map_err(|e| {
                ServiceError::Config(format!("{}:{}: {e}", path.display(), i + 1))
            })?;
            let v = check_vector(entry.embedding, dim)?;
            table.insert(entry.text, v);
        }
        Ok(Encoder::Lookup { dim, table })
    }

    pub fn dim(&self) -> usize {
        match self {
            Encoder::Remote { dim, .. } | Encoder::Lookup { dim, .. } | Encoder::DeterministicTest { dim } => *dim,
        }
    }

    pub fn encode(&self, text: &str) -> Result<Vec<f32>> {
        if text.trim().is_empty() {
            return Err(ServiceError::InvalidRequest("query text is empty".into()));
        }
        match self {
            Encoder::Remote { url, dim, agent } => {
                let mut resp = agent
                    .post(url)
                    .send_json(RemoteRequest { text })
                    .map_err(|e| ServiceError::EncoderUnavailable(format!("{url}: {e}")))?;
                let body: RemoteResponse = resp
                    .body_mut()
                    .read_json()
                    .map_err(|e| ServiceError::EncoderUnavailable(format!("{url}: bad response: {e}")))?;
                check_vector(body.embedding, *dim)
            }
            Encoder::Lookup { table, .. } => table.get(text).cloned().ok_or_else(|| {
                ServiceError::InvalidRequest(format!("no stored embedding for query {text:?}"))
            }),
            Encoder::DeterministicTest { dim } => Ok(test_vector(text, *dim)),
        }
    }
}

fn check_vector(v: Vec<f32>, dim: usize) -> Result<Vec<f32>> {
    if v.len() != dim {
        return Err(ServiceError::Config(format!(
            "encoder returned dimension {}, index expects {dim}",
            v.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(ServiceError::EncoderUnavailable("encoder returned a non-finite value".into()));
    }
    normalized(&v).ok_or_else(|| {
        ServiceError::EncoderUnavailable(format!("encoder returned a vector of norm {}", l2_norm(&v)))
    })
}

fn test_vector(text: &str, dim: usize) -> Vec<f32> {
    let seed: [u8; 32] = Sha256::digest(text.as_bytes()).into();
    let mut rng = ChaCha8Rng::from_seed(seed);
    loop {
        let v: Vec<f32> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        if let Some(u) = normalized(&v) {
            return u;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_parsing() {
        assert_eq!("test".parse::<EncoderSpec>().unwrap(), EncoderSpec::Test);
        assert_eq!(
            "remote http://localhost:9000/embed".parse::<EncoderSpec>().unwrap(),
            EncoderSpec::Remote("http://localhost:9000/embed".into())
        );
        assert_eq!(
            "lookup=/tmp/q.jsonl".parse::<EncoderSpec>().unwrap(),
            EncoderSpec::Lookup("/tmp/q.jsonl".into())
        );
        assert!("remote".parse::<EncoderSpec>().is_err());
        assert!("clip".parse::<EncoderSpec>().is_err());
    }

    #[test]
    fn deterministic_vectors() {
        let e = Encoder::DeterministicTest { dim: 16 };
        let a = e.encode("dead bird").unwrap();
        assert_eq!(a, e.encode("dead bird").unwrap());
        assert_ne!(a, e.encode("dead birds").unwrap());
        assert!((l2_norm(&a) - 1.0).abs() < 1e-6);
        assert!(e.encode("  ").is_err());
    }

    #[test]
    fn wrong_dimension_is_config_error() {
        assert!(matches!(check_vector(vec![1.0; 7], 8), Err(ServiceError::Config(_))));
        assert!(matches!(check_vector(vec![0.0; 8], 8), Err(ServiceError::EncoderUnavailable(_))));
    }
}
