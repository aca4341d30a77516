//! Feature cache stored in the tensor container. Entries are keyed by the
//! SHA-256 of the image file bytes and the feature settings, so a second
//! run over unchanged files recomputes nothing.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rfdfin_core::features::{FeatureConfig, FreqMap, SampleFeatures, Wanted};
use rfdfin_core::nn::checkpoint::{decode_tensors, encode_tensors};
use rfdfin_core::nn::Tensor;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Per-part state stored in the `flags` tensor.
const ABSENT: f32 = 0.0;
const PRESENT: f32 = 1.0;
/// Computed, but the image had no usable ridge.
const NONE: f32 = 2.0;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CacheEntry {
    pub features: SampleFeatures,
    /// Parts that were computed, whether or not they produced a value.
    pub computed: [bool; 3],
}

impl CacheEntry {
    pub fn new(features: SampleFeatures, wanted: Wanted) -> Self {
        Self { features, computed: [wanted.ridge, wanted.ridge_flipped, wanted.freq] }
    }

    pub fn covers(&self, wanted: Wanted) -> bool {
        let [r, rf, f] = self.computed;
        (r || !wanted.ridge) && (rf || !wanted.ridge_flipped) && (f || !wanted.freq)
    }

    /// Parts of `wanted` still to compute.
    pub fn missing(&self, wanted: Wanted) -> Wanted {
        let [r, rf, f] = self.computed;
        Wanted { ridge: wanted.ridge && !r, ridge_flipped: wanted.ridge_flipped && !rf, freq: wanted.freq && !f }
    }

    /// Adds the computed parts of `other`.
    pub fn merge(&mut self, other: CacheEntry) {
        let [r, rf, f] = other.computed;
        if r {
            self.features.ridge = other.features.ridge;
            self.computed[0] = true;
        }
        if rf {
            self.features.ridge_flipped = other.features.ridge_flipped;
            self.computed[1] = true;
        }
        if f {
            self.features.freq = other.features.freq;
            self.computed[2] = true;
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureCache {
    entries: BTreeMap<String, CacheEntry>,
}

/// Hex SHA-256 of the file bytes followed by the feature settings.
pub fn content_key(bytes: &[u8], cfg: &FeatureConfig) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    h.update(serde_json::to_vec(cfg).expect("feature config serializes"));
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn vector(name: String, v: &[f32]) -> (String, Tensor) {
    (name, Tensor::new(&[v.len()], v.to_vec()).expect("rank-1 shape"))
}

fn corrupt(msg: String) -> rfdfin_core::Error {
    rfdfin_core::Error::Corrupt(msg)
}

impl FeatureCache {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&CacheEntry> {
        self.entries.get(key)
    }

    pub fn insert(&mut self, key: String, entry: CacheEntry) {
        match self.entries.get_mut(&key) {
            Some(old) => old.merge(entry),
            None => {
                self.entries.insert(key, entry);
            }
        }
    }

    pub fn to_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (key, e) in &self.entries {
            let f = &e.features;
            let state = |done: bool, has: bool| if !done { ABSENT } else if has { PRESENT } else { NONE };
            let flags = vec![
                state(e.computed[0], f.ridge.is_some()),
                state(e.computed[1], f.ridge_flipped.is_some()),
                state(e.computed[2], f.freq.is_some()),
            ];
            out.push(vector(format!("{key}.flags"), &flags));
            if let Some(r) = &f.ridge {
                out.push(vector(format!("{key}.ridge"), r));
            }
            if let Some(r) = &f.ridge_flipped {
                out.push(vector(format!("{key}.ridge_flipped"), r));
            }
            if let Some(m) = &f.freq {
                let t = Tensor::new(&[m.height, m.width], m.values.clone()).expect("plane shape");
                out.push((format!("{key}.freq"), t));
            }
        }
        out
    }

    pub fn from_tensors(tensors: Vec<(String, Tensor)>) -> rfdfin_core::Result<Self> {
        let mut parts: BTreeMap<String, BTreeMap<String, Tensor>> = BTreeMap::new();
        for (name, t) in tensors {
            let (key, part) = name.rsplit_once('.').ok_or_else(|| corrupt(format!("cache tensor {name} has no part")))?;
            parts.entry(key.to_string()).or_default().insert(part.to_string(), t);
        }
        let mut entries = BTreeMap::new();
        for (key, mut p) in parts {
            let flags = p.remove("flags").ok_or_else(|| corrupt(format!("cache entry {key} has no flags")))?;
            if flags.data().len() != 3 {
                return Err(corrupt(format!("cache entry {key}: {} flags", flags.data().len())));
            }
            let mut take = |part: &str, flag: f32| -> rfdfin_core::Result<(bool, Option<Tensor>)> {
                let t = p.remove(part);
                match (flag, t.is_some()) {
                    (f, false) if f == ABSENT || f == NONE => Ok((f == NONE, None)),
                    (f, true) if f == PRESENT => Ok((true, t)),
                    _ => Err(corrupt(format!("cache entry {key}: flag {flag} disagrees with {part}"))),
                }
            };
            let fl = flags.data();
            let (r_done, r) = take("ridge", fl[0])?;
            let (rf_done, rf) = take("ridge_flipped", fl[1])?;
            let (f_done, f) = take("freq", fl[2])?;
            let freq = match f {
                Some(t) if t.shape().len() == 2 => {
                    Some(FreqMap { width: t.shape()[1], height: t.shape()[0], values: t.data().to_vec() })
                }
                Some(_) => return Err(corrupt(format!("cache entry {key}: spectrum is not a plane"))),
                None => None,
            };
            if let Some(extra) = p.keys().next() {
                return Err(corrupt(format!("cache entry {key}: unknown part {extra}")));
            }
            let features = SampleFeatures {
                ridge: r.map(|t| t.data().to_vec()),
                ridge_flipped: rf.map(|t| t.data().to_vec()),
                freq,
            };
            entries.insert(key, CacheEntry { features, computed: [r_done, rf_done, f_done] });
        }
        Ok(Self { entries })
    }

    /// An absent file yields an empty cache; a damaged one is an error.
    pub fn load(path: &Path) -> CliResult<Self> {
        if !path.exists() {
            return Ok(Self::default());
        }
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        decode_tensors(&bytes).and_then(Self::from_tensors).map_err(|e| CliError::artifact(path, e))
    }

    /// Writes through a temporary file so an interrupted save keeps the
    /// previous cache intact.
    pub fn save(&self, path: &Path) -> CliResult<()> {
        let bytes = encode_tensors(&self.to_tensors())?;
        let tmp = path.with_extension("rfdf.tmp");
        fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SampleFeatures {
        SampleFeatures {
            ridge: Some((0..128).map(|i| i as f32).collect()),
            ridge_flipped: None,
            freq: Some(FreqMap { width: 3, height: 2, values: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0] }),
        }
    }

    #[test]
    fn round_trip_keeps_flags() {
        let mut c = FeatureCache::default();
        c.insert("aa".into(), CacheEntry::new(sample(), Wanted::ALL));
        c.insert("bb".into(), CacheEntry::new(SampleFeatures::default(), Wanted { ridge: true, ridge_flipped: false, freq: false }));
        let back = FeatureCache::from_tensors(c.to_tensors()).unwrap();
        assert_eq!(back, c);
        assert!(back.get("aa").unwrap().covers(Wanted::ALL));
        let bb = back.get("bb").unwrap();
        assert!(bb.covers(Wanted { ridge: true, ridge_flipped: false, freq: false }));
        assert!(!bb.covers(Wanted::EVAL));
        assert!(bb.features.no_ridges());
    }

    #[test]
    fn merge_adds_parts() {
        let mut c = FeatureCache::default();
        let ridge_only = Wanted { ridge: true, ridge_flipped: false, freq: false };
        let mut s = sample();
        s.freq = None;
        c.insert("k".into(), CacheEntry::new(s, ridge_only));
        let freq_only = Wanted { ridge: false, ridge_flipped: false, freq: true };
        assert_eq!(c.get("k").unwrap().missing(Wanted::EVAL), freq_only);
        c.insert("k".into(), CacheEntry::new(SampleFeatures { freq: sample().freq, ..Default::default() }, freq_only));
        let e = c.get("k").unwrap();
        assert!(e.covers(Wanted::EVAL));
        assert_eq!(e.features.ridge, sample().ridge);
    }

    #[test]
    fn keys_depend_on_bytes_and_settings() {
        let cfg = FeatureConfig::default();
        let k = content_key(b"abc", &cfg);
        assert_eq!(k.len(), 64);
        assert_eq!(k, content_key(b"abc", &cfg));
        assert_ne!(k, content_key(b"abd", &cfg));
        let other = FeatureConfig { sigma: 1.0, ..cfg };
        assert_ne!(k, content_key(b"abc", &other));
    }

    #[test]
    fn inconsistent_flags_rejected() {
        let mut t = FeatureCache::default();
        t.insert("k".into(), CacheEntry::new(sample(), Wanted::ALL));
        let mut tensors = t.to_tensors();
        tensors.retain(|(n, _)| n != "k.ridge");
        assert!(FeatureCache::from_tensors(tensors).is_err());
    }
}
