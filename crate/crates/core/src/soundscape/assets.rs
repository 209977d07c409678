//! Sample library: WAV files on disk, or a built-in placeholder set.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::rules::{catalog_category, Category, SoundCatalog, SOUND_CATALOG};

pub const ENGINE_RATE: u32 = 44_100;

#[derive(Debug, thiserror::Error)]
pub enum AssetError {
    #[error("cannot read asset directory {path}: {source}")]
    Dir {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot decode {path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
    #[error("{0}: empty sample")]
    Empty(PathBuf),
    #[error("duplicate asset id {0:?}")]
    Duplicate(String),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
}

/// A decoded sample, interleaved stereo at the engine rate.
#[derive(Debug, Clone)]
pub struct SoundAsset {
    pub id: String,
    pub category: Category,
    frames: Arc<[f32]>,
    /// Peak absolute sample value.
    pub base_loudness: f32,
}

impl SoundAsset {
    pub fn from_stereo(id: impl Into<String>, samples: Vec<f32>) -> Self {
        let id = id.into();
        let peak = samples.iter().fold(0.0f32, |m, s| m.max(s.abs()));
        SoundAsset {
            category: catalog_category(&id).unwrap_or(Category::Other),
            id,
            frames: samples.into(),
            base_loudness: peak,
        }
    }

    pub fn samples(&self) -> &Arc<[f32]> {
        &self.frames
    }

    /// Length in stereo frames.
    pub fn len_frames(&self) -> usize {
        self.frames.len() / 2
    }
}

#[derive(Debug, Clone, Default)]
pub struct AssetLibrary {
    assets: BTreeMap<String, SoundAsset>,
}

impl AssetLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, asset: SoundAsset) -> Result<(), AssetError> {
        if self.assets.contains_key(&asset.id) {
            return Err(AssetError::Duplicate(asset.id));
        }
        self.assets.insert(asset.id.clone(), asset);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&SoundAsset> {
        self.assets.get(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.assets.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.assets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assets.is_empty()
    }

    pub fn catalog(&self) -> SoundCatalog {
        SoundCatalog::from_ids(self.ids())
    }

    /// Loads every `*.wav` in `dir`; the asset id is the file stem.
    pub fn load_dir(dir: &Path) -> Result<Self, AssetError> {
        let entries = fs::read_dir(dir).map_err(|source| AssetError::Dir { path: dir.to_path_buf(), source })?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")))
            .collect();
        paths.sort();
        let mut lib = AssetLibrary::new();
        for path in paths {
            let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let samples = read_wav(&path)?;
            lib.insert(SoundAsset::from_stereo(id, samples))?;
        }
        Ok(lib)
    }

    /// Writes every asset as 16-bit stereo WAV into `dir`.
    pub fn export(&self, dir: &Path) -> Result<(), AssetError> {
        fs::create_dir_all(dir).map_err(|source| AssetError::Dir { path: dir.to_path_buf(), source })?;
        for asset in self.assets.values() {
            let path = dir.join(format!("{}.wav", asset.id));
            let werr = |source| AssetError::Write { path: path.clone(), source };
            let mut w = hound::WavWriter::create(&path, stereo_spec()).map_err(werr)?;
            for s in asset.samples().iter() {
                w.write_sample(to_i16(*s)).map_err(werr)?;
            }
            w.finalize().map_err(werr)?;
        }
        Ok(())
    }

    /// Deterministic stand-ins for every stock sound id, so the engine runs
    /// without a recorded sample pack. Timbre follows the category: filtered
    /// noise for weather, chirps for birds and animals, gusts for wind,
    /// crackle for fire, taps for the woodpecker.
    pub fn placeholder() -> Self {
        let mut lib = AssetLibrary::new();
        for (id, category) in SOUND_CATALOG {
            lib.insert(SoundAsset::from_stereo(*id, synthesize(id, *category))).expect("unique stock ids");
        }
        lib
    }
}

pub fn stereo_spec() -> hound::WavSpec {
    hound::WavSpec {
        channels: 2,
        sample_rate: ENGINE_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    }
}

pub fn to_i16(s: f32) -> i16 {
    (s.clamp(-1.0, 1.0) * 32767.0).round() as i16
}

/// Decodes a WAV file to interleaved stereo f32 at the engine rate.
pub fn read_wav(path: &Path) -> Result<Vec<f32>, AssetError> {
    let derr = |source| AssetError::Decode { path: path.to_path_buf(), source };
    let mut reader = hound::WavReader::open(path).map_err(derr)?;
    let spec = reader.spec();
    let channels = usize::from(spec.channels.max(1));
    let raw: Vec<f32> = match spec.sample_format {
        hound::SampleFormat::Float => reader.samples::<f32>().collect::<Result<_, _>>().map_err(derr)?,
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1i64 << (spec.bits_per_sample - 1)) as f32;
            reader.samples::<i32>().map(|s| s.map(|v| v as f32 * scale)).collect::<Result<_, _>>().map_err(derr)?
        }
    };
    let stereo: Vec<f32> = raw
        .chunks_exact(channels)
        .flat_map(|frame| {
            let l = frame[0];
            let r = if channels > 1 { frame[1] } else { l };
            [l, r]
        })
        .collect();
    if stereo.is_empty() {
        return Err(AssetError::Empty(path.to_path_buf()));
    }
    Ok(resample_linear(&stereo, spec.sample_rate, ENGINE_RATE))
}

/// Linear-interpolation resampling of interleaved stereo.
pub fn resample_linear(stereo: &[f32], from: u32, to: u32) -> Vec<f32> {
    if from == to || from == 0 {
        return stereo.to_vec();
    }
    let n_in = stereo.len() / 2;
    let n_out = ((n_in as u64 * u64::from(to)) / u64::from(from)).max(1) as usize;
    let step = f64::from(from) / f64::from(to);
    let mut out = Vec::with_capacity(n_out * 2);
    for i in 0..n_out {
        let pos = i as f64 * step;
        let i0 = (pos.floor() as usize).min(n_in - 1);
        let i1 = (i0 + 1).min(n_in - 1);
        let frac = (pos - i0 as f64) as f32;
        for ch in 0..2 {
            let a = stereo[i0 * 2 + ch];
            let b = stereo[i1 * 2 + ch];
            out.push(a + (b - a) * frac);
        }
    }
    out
}

fn seed_of(id: &str) -> u64 {
    // FNV-1a
    id.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

fn synthesize(id: &str, category: Category) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed_of(id));
    let rate = ENGINE_RATE as f32;
    let secs: f32 = match category {
        Category::Ping => 0.5,
        Category::NormalBird | Category::FinAnimal => rng.gen_range(0.5..0.9),
        _ => rng.gen_range(0.9..1.4),
    };
    let n = (secs * rate) as usize;
    let mut mono = vec![0f32; n];
    match category {
        Category::NormalBird | Category::FinAnimal | Category::Other => {
            // A few pitch-swept chirps; animals sit lower than birds.
            let base: f32 = if category == Category::NormalBird {
                rng.gen_range(2000.0..4000.0)
            } else {
                rng.gen_range(200.0..900.0)
            };
            let chirps = rng.gen_range(2..5);
            let len = n / chirps;
            for c in 0..chirps {
                let sweep: f32 = rng.gen_range(-0.5..0.8);
                let mut phase = 0f32;
                for j in 0..len * 3 / 4 {
                    let t = j as f32 / len as f32;
                    let f = base * (1.0 + sweep * t);
                    phase += std::f32::consts::TAU * f / rate;
                    let env = (std::f32::consts::PI * t / 0.75).sin();
                    mono[c * len + j] = phase.sin() * env;
                }
            }
        }
        Category::SynWeather | Category::RstWind | Category::CounterFire => {
            // One-pole low-passed noise; cutoff and modulation vary by id.
            let alpha: f32 = match category {
                Category::SynWeather => rng.gen_range(0.05..0.6),
                _ => rng.gen_range(0.02..0.1),
            };
            let gust: f32 = rng.gen_range(0.5..3.0);
            let mut y = 0f32;
            for (j, s) in mono.iter_mut().enumerate() {
                let x: f32 = rng.gen_range(-1.0..1.0);
                y += alpha * (x - y);
                let t = j as f32 / n as f32;
                let env = (std::f32::consts::PI * t).sin();
                let m = match category {
                    Category::RstWind => 0.6 + 0.4 * (std::f32::consts::TAU * gust * t).sin(),
                    Category::CounterFire if rng.gen_bool(0.002) => 4.0,
                    _ => 1.0,
                };
                *s = y * env * m;
            }
        }
        Category::Ping => {
            for tap in 0..5 {
                let at = tap * n / 6;
                for j in 0..(rate as usize / 100) {
                    let decay = (-(j as f32) / 60.0).exp();
                    mono[at + j] = (std::f32::consts::TAU * 1800.0 * j as f32 / rate).sin() * decay;
                }
            }
        }
    }
    let peak = mono.iter().fold(0f32, |m, s| m.max(s.abs())).max(1e-9);
    mono.iter()
        .flat_map(|s| {
            let v = s / peak * 0.5;
            [v, v]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn placeholder_covers_stock_catalog_deterministically() {
        let a = AssetLibrary::placeholder();
        let b = AssetLibrary::placeholder();
        assert_eq!(a.len(), SOUND_CATALOG.len());
        for id in a.ids() {
            let (x, y) = (a.get(id).unwrap(), b.get(id).unwrap());
            assert_eq!(x.samples(), y.samples());
            assert!((x.base_loudness - 0.5).abs() < 1e-6, "{id}");
            assert_eq!(x.category, catalog_category(id).unwrap());
        }
    }

    #[test]
    fn wav_round_trip_and_mono_resample() {
        let dir = tempfile::tempdir().unwrap();
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 22_050,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let path = dir.path().join("thunder.wav");
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for i in 0..2205 {
            w.write_sample(((i % 100) as i16 - 50) * 300).unwrap();
        }
        w.finalize().unwrap();
        std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();

        let lib = AssetLibrary::load_dir(dir.path()).unwrap();
        assert_eq!(lib.len(), 1);
        let a = lib.get("thunder").unwrap();
        assert_eq!(a.category, Category::SynWeather);
        assert_eq!(a.len_frames(), 4410);
        let s = a.samples();
        assert_eq!(s[0], s[1]);

        let out = tempfile::tempdir().unwrap();
        lib.export(out.path()).unwrap();
        let again = AssetLibrary::load_dir(out.path()).unwrap();
        assert_eq!(again.get("thunder").unwrap().len_frames(), 4410);
    }

    #[test]
    fn unknown_stem_is_other_category() {
        let a = SoundAsset::from_stereo("my_gong", vec![0.1, 0.1]);
        assert_eq!(a.category, Category::Other);
    }

    #[test]
    fn bad_directory_and_file() {
        assert!(matches!(AssetLibrary::load_dir(Path::new("/nonexistent")), Err(AssetError::Dir { .. })));
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("x.wav"), b"not a wav").unwrap();
        assert!(matches!(AssetLibrary::load_dir(dir.path()), Err(AssetError::Decode { .. })));
    }

    #[test]
    fn resample_preserves_duration() {
        let input: Vec<f32> = (0..96_000).map(|i| (i % 7) as f32 / 7.0).collect();
        let out = resample_linear(&input, 48_000, 44_100);
        assert_eq!(out.len() / 2, 44_100);
    }
}
