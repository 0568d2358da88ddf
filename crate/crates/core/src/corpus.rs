//! Unpaired and paired corpora, in memory and on disk.
//!
//! Unpaired layout: `noisy/NNNN.png`, `clean/NNNN.png`, optional
//! `truth/NNNN.raw` + `truth/NNNN.json`, and `manifest.json`.
//!
//! Paired layout: `pairs/NNNN_noisy.png`, `pairs/NNNN_clean.png`,
//! `pairs/NNNN_noise.raw` + `pairs/NNNN_noise.json` (and `pairs/NNNN_hr.png`
//! for super-resolution pairs), plus `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::patch::{load_patch, save_patch, ImagePatch, NoiseMap, PEAK_8BIT};
use crate::synth::{CropSpec, NoiseSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub seed: u64,
    pub noise: NoiseSpec,
    pub split_ratio: f64,
    pub crop: Option<CropSpec>,
    pub channels: usize,
    pub noisy_sources: Vec<usize>,
    pub clean_sources: Vec<usize>,
    pub noisy_count: usize,
    pub clean_count: usize,
}

/// Noisy set and clean set drawn from disjoint sources.
#[derive(Debug, Clone, PartialEq)]
pub struct UnpairedCorpus {
    noisy: Vec<ImagePatch>,
    clean: Vec<ImagePatch>,
    /// Injected noise per noisy patch, when known (synthetic corpora).
    truth: Option<Vec<NoiseMap>>,
    manifest: CorpusManifest,
}

fn uniform_channels<'a>(patches: impl Iterator<Item = &'a ImagePatch>) -> Result<Option<usize>> {
    let mut channels = None;
    for p in patches {
        match channels {
            None => channels = Some(p.channels()),
            Some(c) if c != p.channels() => {
                return Err(Error::ChannelMismatch {
                    expected: c,
                    found: p.channels(),
                })
            }
            _ => {}
        }
    }
    Ok(channels)
}

impl UnpairedCorpus {
    pub fn new(
        noisy: Vec<ImagePatch>,
        clean: Vec<ImagePatch>,
        truth: Option<Vec<NoiseMap>>,
        manifest: CorpusManifest,
    ) -> Result<Self> {
        uniform_channels(noisy.iter().chain(clean.iter()))?;
        if let Some(t) = &truth {
            if t.len() != noisy.len() {
                return Err(Error::shape(noisy.len(), t.len()));
            }
            for (n, m) in noisy.iter().zip(t) {
                if n.shape() != m.shape() {
                    return Err(Error::shape(n.shape(), m.shape()));
                }
            }
        }
        Ok(Self {
            noisy,
            clean,
            truth,
            manifest,
        })
    }

    pub fn noisy(&self) -> &[ImagePatch] {
        &self.noisy
    }

    pub fn clean(&self) -> &[ImagePatch] {
        &self.clean
    }

    pub fn truth(&self) -> Option<&[NoiseMap]> {
        self.truth.as_deref()
    }

    pub fn manifest(&self) -> &CorpusManifest {
        &self.manifest
    }

    pub fn channels(&self) -> usize {
        self.noisy.first().or(self.clean.first()).map_or(0, |p| p.channels())
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let noisy_dir = dir.join("noisy");
        let clean_dir = dir.join("clean");
        create_dir(&noisy_dir)?;
        create_dir(&clean_dir)?;
        for (i, p) in self.noisy.iter().enumerate() {
            save_patch(p, noisy_dir.join(format!("{i:04}.png")))?;
        }
        for (i, p) in self.clean.iter().enumerate() {
            save_patch(p, clean_dir.join(format!("{i:04}.png")))?;
        }
        if let Some(truth) = &self.truth {
            let truth_dir = dir.join("truth");
            create_dir(&truth_dir)?;
            for (i, m) in truth.iter().enumerate() {
                write_noise_map(m, truth_dir.join(format!("{i:04}")))?;
            }
        }
        write_json(dir.join("manifest.json"), &self.manifest)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        if !dir.is_dir() {
            return Err(Error::MissingFile(dir.into()));
        }
        let manifest: CorpusManifest = read_json(dir.join("manifest.json"))?;
        let noisy = load_dir(&dir.join("noisy"))?;
        let clean = load_dir(&dir.join("clean"))?;
        let truth_dir = dir.join("truth");
        let truth = if truth_dir.is_dir() {
            Some(
                (0..noisy.len())
                    .map(|i| read_noise_map(truth_dir.join(format!("{i:04}"))))
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };
        Self::new(noisy, clean, truth, manifest)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    Denoise,
    SuperResolution { scale: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairManifest {
    pub seed: u64,
    pub kind: PairKind,
    pub count: usize,
    /// Index of the noisy patch whose extracted map was used, per pair.
    pub noise_sources: Vec<usize>,
}

/// One constructed training pair. `noisy = clip(clean + noise)`; for
/// super-resolution pairs `clean` is the low-resolution image and `hr` the
/// training target.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub noisy: ImagePatch,
    pub clean: ImagePatch,
    pub noise: NoiseMap,
    pub hr: Option<ImagePatch>,
}

impl Pair {
    /// Pixels where `noisy - clean` differs from `noise` by more than `tol`,
    /// ignoring pixels where `noisy` sits on a clip boundary. Returns
    /// `(checked, violations)`.
    pub fn identity_violations(&self, tol: f64) -> (usize, usize) {
        let mut checked = 0;
        let mut bad = 0;
        for ((&n, &c), &m) in self.noisy.data().iter().zip(self.clean.data()).zip(self.noise.data()) {
            if n <= 0.0 || n >= PEAK_8BIT {
                continue;
            }
            checked += 1;
            if ((n - c) - m).abs() > tol {
                bad += 1;
            }
        }
        (checked, bad)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedCorpus {
    pairs: Vec<Pair>,
    manifest: PairManifest,
}

impl PairedCorpus {
    pub fn new(pairs: Vec<Pair>, manifest: PairManifest) -> Result<Self> {
        uniform_channels(pairs.iter().map(|p| &p.noisy))?;
        for p in &pairs {
            if p.noisy.shape() != p.clean.shape() || p.noise.shape() != p.clean.shape() {
                return Err(Error::shape(p.clean.shape(), p.noisy.shape()));
            }
        }
        Ok(Self { pairs, manifest })
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    pub fn manifest(&self) -> &PairManifest {
        &self.manifest
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let pairs_dir = dir.join("pairs");
        create_dir(&pairs_dir)?;
        for (i, p) in self.pairs.iter().enumerate() {
            save_patch(&p.noisy, pairs_dir.join(format!("{i:04}_noisy.png")))?;
            save_patch(&p.clean, pairs_dir.join(format!("{i:04}_clean.png")))?;
            write_noise_map(&p.noise, pairs_dir.join(format!("{i:04}_noise")))?;
            if let Some(hr) = &p.hr {
                save_patch(hr, pairs_dir.join(format!("{i:04}_hr.png")))?;
            }
        }
        write_json(dir.join("manifest.json"), &self.manifest)
    }

    /// Reads a paired corpus. PNG members come back quantized to 8 bits;
    /// noise maps are exact.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest: PairManifest = read_json(dir.join("manifest.json"))?;
        let pairs_dir = dir.join("pairs");
        let pairs = (0..manifest.count)
            .map(|i| {
                let hr_path = pairs_dir.join(format!("{i:04}_hr.png"));
                Ok(Pair {
                    noisy: load_patch(pairs_dir.join(format!("{i:04}_noisy.png")))?,
                    clean: load_patch(pairs_dir.join(format!("{i:04}_clean.png")))?,
                    noise: read_noise_map(pairs_dir.join(format!("{i:04}_noise")))?,
                    hr: if hr_path.exists() {
                        Some(load_patch(hr_path)?)
                    } else {
                        None
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(pairs, manifest)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RawHeader {
    /// `[channels, height, width]`.
    shape: [usize; 3],
    dtype: String,
    layout: String,
}

/// Writes `<stem>.raw` (f32 little-endian, channel-major) and `<stem>.json`.
pub fn write_noise_map(map: &NoiseMap, stem: impl AsRef<Path>) -> Result<()> {
    let stem = stem.as_ref();
    let mut bytes = Vec::with_capacity(map.data().len() * 4);
    for &v in map.data() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let raw = stem.with_extension("raw");
    fs::write(&raw, bytes).map_err(|e| Error::io(&raw, e))?;
    let (h, w, c) = map.shape();
    write_json(
        stem.with_extension("json"),
        &RawHeader {
            shape: [c, h, w],
            dtype: "f32le".into(),
            layout: "chw".into(),
        },
    )
}

pub fn read_noise_map(stem: impl AsRef<Path>) -> Result<NoiseMap> {
    let stem = stem.as_ref();
    let header: RawHeader = read_json(stem.with_extension("json"))?;
    let raw = stem.with_extension("raw");
    let bytes = fs::read(&raw).map_err(|e| Error::io(&raw, e))?;
    let [c, h, w] = header.shape;
    if header.dtype != "f32le" || bytes.len() != c * h * w * 4 {
        return Err(Error::CorruptImage {
            path: raw,
            reason: format!("expected {} f32le values", c * h * w),
        });
    }
    let data = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    NoiseMap::new(h, w, c, data)
}

pub(crate) fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub(crate) fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.into(),
        source: e,
    })?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.into(),
        source: e,
    })
}

/// Sorted `*.png` files of a directory.
pub fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    Ok(files)
}

pub fn load_dir(dir: &Path) -> Result<Vec<ImagePatch>> {
    png_files(dir)?.iter().map(load_patch).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{build_unpaired_corpus, smooth_scenes, GaussianNoiseSpec};

    #[test]
    fn unpaired_round_trip_on_disk() {
        let tmp = tempfile::tempdir().unwrap();
        let sources: Vec<ImagePatch> = smooth_scenes(4, 12, 12, 1, 1.0, 1)
            .into_iter()
            .map(|p| p.quantize_8bit())
            .collect();
        let noise = NoiseSpec::Gaussian(GaussianNoiseSpec::new(10.0, 0).unwrap());
        let corpus = build_unpaired_corpus(&sources, &noise, 0.5, None, 5).unwrap();
        corpus.save(tmp.path()).unwrap();
        let back = UnpairedCorpus::load(tmp.path()).unwrap();
        assert_eq!(back.manifest(), corpus.manifest());
        assert_eq!(back.clean(), corpus.clean());
        assert_eq!(back.noisy().len(), 2);
        for (a, b) in back.noisy().iter().zip(corpus.noisy()) {
            assert_eq!(a, &b.quantize_8bit());
        }
        for (a, b) in back.truth().unwrap().iter().zip(corpus.truth().unwrap()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(*x, *y as f32 as f64);
            }
        }
    }

    #[test]
    fn missing_corpus_dir_is_reported() {
        let err = UnpairedCorpus::load("/definitely/not/here").unwrap_err();
        assert!(matches!(err, Error::MissingFile(_)));
    }

    #[test]
    fn noise_map_raw_format() {
        let tmp = tempfile::tempdir().unwrap();
        let m = NoiseMap::new(2, 3, 1, vec![-1.5, 0.0, 2.25, 1e-3, 7.0, -0.125]).unwrap();
        let stem = tmp.path().join("0000_noise");
        write_noise_map(&m, &stem).unwrap();
        let bytes = fs::read(stem.with_extension("raw")).unwrap();
        assert_eq!(bytes.len(), 24);
        assert_eq!(&bytes[..4], &(-1.5f32).to_le_bytes());
        let header: serde_json::Value = read_json(stem.with_extension("json")).unwrap();
        assert_eq!(header["shape"], serde_json::json!([1, 2, 3]));
        let back = read_noise_map(&stem).unwrap();
        assert_eq!(back.data()[0], -1.5);
        assert_eq!(back.data()[3], 1e-3f32 as f64);
    }
}
