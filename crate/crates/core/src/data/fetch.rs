use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Environment variable naming the default cache directory.
pub const CACHE_DIR_ENV: &str = "FLYNN_CACHE_DIR";

const INDEX_FILE: &str = "index.json";

#[derive(Clone, Debug)]
pub struct FetchOptions {
    pub attempts: u32,
    pub initial_backoff: Duration,
    pub timeout: Duration,
}

impl Default for FetchOptions {
    fn default() -> Self {
        Self {
            attempts: 3,
            initial_backoff: Duration::from_millis(250),
            timeout: Duration::from_secs(60),
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn read_index(dir: &Path) -> Result<BTreeMap<String, String>> {
    let path = dir.join(INDEX_FILE);
    match std::fs::read(&path) {
        Ok(bytes) => Ok(serde_json::from_slice(&bytes)?),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(BTreeMap::new()),
        Err(e) => Err(Error::file(path, e)),
    }
}

fn write_index(dir: &Path, index: &BTreeMap<String, String>) -> Result<()> {
    let path = dir.join(INDEX_FILE);
    let tmp = dir.join(format!("{INDEX_FILE}.tmp"));
    std::fs::write(&tmp, serde_json::to_vec_pretty(index)?).map_err(|e| Error::file(&tmp, e))?;
    std::fs::rename(&tmp, &path).map_err(|e| Error::file(&path, e))
}

fn download(url: &str, opts: &FetchOptions) -> Result<Vec<u8>> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(opts.timeout))
        .build()
        .into();
    let mut backoff = opts.initial_backoff;
    let mut last = String::new();
    for attempt in 1..=opts.attempts.max(1) {
        match agent.get(url).call() {
            Ok(mut resp) => match resp.body_mut().with_config().limit(u64::MAX).read_to_vec() {
                Ok(bytes) => return Ok(bytes),
                Err(e) => last = e.to_string(),
            },
            Err(e) => last = e.to_string(),
        }
        if attempt < opts.attempts {
            std::thread::sleep(backoff);
            backoff *= 2;
        }
    }
    Err(Error::Network {
        url: url.to_string(),
        attempts: opts.attempts.max(1),
        reason: last,
    })
}

/// Downloads `url` into `cache_dir` once and returns the cached file path.
///
/// Files are named by the SHA-256 of their content; `index.json` maps URLs to
/// hashes. A cached file whose content no longer matches its name is fetched
/// again, and the fresh download must hash to the recorded value.
pub fn fetch_dataset(url: &str, cache_dir: impl AsRef<Path>, opts: &FetchOptions) -> Result<PathBuf> {
    if !(url.starts_with("http://") || url.starts_with("https://")) {
        return Err(Error::Param(format!("not an HTTP(S) URL: {url}")));
    }
    let dir = cache_dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    let mut index = read_index(dir)?;

    let recorded = index.get(url).cloned();
    if let Some(hash) = &recorded {
        let path = dir.join(hash);
        if let Ok(bytes) = std::fs::read(&path) {
            if &sha256_hex(&bytes) == hash {
                return Ok(path);
            }
        }
    }

    let bytes = download(url, opts)?;
    let hash = sha256_hex(&bytes);
    if let Some(expected) = recorded {
        if expected != hash {
            return Err(Error::HashMismatch {
                url: url.to_string(),
                expected,
                actual: hash,
            });
        }
    }
    let path = dir.join(&hash);
    std::fs::write(&path, &bytes).map_err(|e| Error::file(&path, e))?;
    index.insert(url.to_string(), hash);
    write_index(dir, &index)?;
    Ok(path)
}
