//! Dataset manifests: which clean utterance, impulse response, noise and SNR
//! make up every simulated row. One JSON object per line.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::synth::{GeneratorKind, GeneratorSpec};
use super::{generate_rir, synthesize_sample, MixtureSample, Rir, RoomSpec};
use crate::error::{invalid_config, invalid_input, Error, Result};
use crate::signal::{wav, Waveform};

/// Extra noise material beyond the utterance length, so segments can be cut.
const NOISE_EXTRA_SECS: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    /// Number of synthetic clean utterances (ignored when `clean_dir` is set).
    #[serde(default)]
    pub clean: usize,
    /// Folder of clean 8 kHz WAV files, used in sorted path order.
    #[serde(default)]
    pub clean_dir: Option<PathBuf>,
    pub rt60: Vec<f64>,
    /// Impulse responses for this split; defaults to one per RT60 value.
    #[serde(default)]
    pub rirs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    #[serde(default = "defaults::sample_rate")]
    pub sample_rate: u32,
    #[serde(default = "defaults::utterance_secs")]
    pub utterance_secs: f64,
    #[serde(default = "defaults::snr_db")]
    pub snr_db: Vec<f64>,
    /// Generator names (`white`, `pink`, ...) or WAV paths.
    #[serde(default = "defaults::seen_noises")]
    pub seen_noises: Vec<String>,
    /// Noise types reserved for the test split.
    #[serde(default = "defaults::unseen_noises")]
    pub unseen_noises: Vec<String>,
    #[serde(default = "defaults::rooms")]
    pub rooms: Vec<[f64; 3]>,
    pub train: SplitConfig,
    pub dev: SplitConfig,
    pub test: SplitConfig,
}

mod defaults {
    pub fn seed() -> u64 {
        1
    }
    pub fn sample_rate() -> u32 {
        crate::SAMPLE_RATE
    }
    pub fn utterance_secs() -> f64 {
        1.5
    }
    pub fn snr_db() -> Vec<f64> {
        vec![-5.0, 0.0, 5.0, 10.0]
    }
    pub fn seen_noises() -> Vec<String> {
        ["white", "pink", "babble"].map(String::from).to_vec()
    }
    pub fn unseen_noises() -> Vec<String> {
        ["brown", "hum"].map(String::from).to_vec()
    }
    pub fn rooms() -> Vec<[f64; 3]> {
        vec![[6.0, 4.0, 3.0], [5.0, 4.5, 2.8], [7.0, 5.0, 3.2]]
    }
}

impl SimulationConfig {
    /// Desk-scale corpus: 20/5/5 synthetic utterances, 4 impulse responses per
    /// split with RT60 between 0.3 and 0.6 s, SNR in {-5, 0, 5, 10} dB.
    pub fn toy(seed: u64) -> Self {
        let split = |clean: usize| SplitConfig {
            clean,
            clean_dir: None,
            rt60: vec![0.3, 0.4, 0.5, 0.6],
            rirs: None,
        };
        SimulationConfig {
            seed,
            sample_rate: defaults::sample_rate(),
            utterance_secs: defaults::utterance_secs(),
            snr_db: defaults::snr_db(),
            seen_noises: defaults::seen_noises(),
            unseen_noises: defaults::unseen_noises(),
            rooms: vec![[6.0, 4.0, 3.0]],
            train: split(20),
            dev: split(5),
            test: split(5),
        }
    }

    pub fn splits(&self) -> [(&'static str, &SplitConfig); 3] {
        [("train", &self.train), ("dev", &self.dev), ("test", &self.test)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseCondition {
    Seen,
    Unseen,
}

impl NoiseCondition {
    pub fn name(self) -> &'static str {
        match self {
            NoiseCondition::Seen => "seen",
            NoiseCondition::Unseen => "unseen",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomGeometry {
    pub dims: [f64; 3],
    pub src: [f64; 3],
    pub mic: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clean_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clean_generator: Option<GeneratorSpec>,
    pub rir_id: String,
    pub room: RoomGeometry,
    pub rt60: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_generator: Option<GeneratorSpec>,
    pub noise_condition: NoiseCondition,
    pub snr_db: f64,
    pub split: String,
    pub seed: u64,
}

impl ManifestRow {
    pub fn room_spec(&self, sample_rate: u32) -> RoomSpec {
        RoomSpec {
            dims: self.room.dims,
            src_pos: self.room.src,
            mic_pos: self.room.mic,
            rt60: self.rt60,
            sample_rate,
        }
    }

    pub fn noise_id(&self) -> String {
        match (&self.noise_path, &self.noise_generator) {
            (Some(p), _) => p.display().to_string(),
            (None, Some(g)) => format!("{}#{}", g.kind, g.seed),
            (None, None) => String::from("none"),
        }
    }

    pub fn load_clean(&self, sample_rate: u32) -> Result<Waveform> {
        match (&self.clean_path, &self.clean_generator) {
            (Some(p), _) => wav::read_wav(p, sample_rate),
            (None, Some(g)) => Ok(g.render(sample_rate)),
            (None, None) => Err(invalid_input(format!("row {} has no clean source", self.id))),
        }
    }

    pub fn load_noise(&self, sample_rate: u32) -> Result<Waveform> {
        match (&self.noise_path, &self.noise_generator) {
            (Some(p), _) => wav::read_wav(p, sample_rate),
            (None, Some(g)) => Ok(g.render(sample_rate)),
            (None, None) => Err(invalid_input(format!("row {} has no noise source", self.id))),
        }
    }
}

enum Source {
    Path(PathBuf),
    Generator(GeneratorKind),
}

fn parse_noise(name: &str) -> Source {
    match name.parse::<GeneratorKind>() {
        Ok(kind) if kind != GeneratorKind::Speech => Source::Generator(kind),
        _ => Source::Path(PathBuf::from(name)),
    }
}

fn list_wavs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            invalid_config(format!("cannot read clean directory {}: {e}", dir.display()))
        })?;
        if entry.file_type().is_file()
            && entry.path().extension().is_some_and(|e| e.eq_ignore_ascii_case("wav"))
        {
            out.push(entry.into_path());
        }
    }
    Ok(out)
}

/// Source and microphone positions at least 0.5 m from every wall and
/// 1 to 2.5 m apart.
fn sample_positions(dims: [f64; 3], rng: &mut ChaCha8Rng) -> Result<([f64; 3], [f64; 3])> {
    let margin = 0.5;
    if dims.iter().any(|&l| l <= 2.0 * margin + 0.1) {
        return Err(invalid_config(format!("room {dims:?} is too small")));
    }
    let draw = |rng: &mut ChaCha8Rng| -> [f64; 3] {
        [
            rng.random_range(margin..dims[0] - margin),
            rng.random_range(margin..dims[1] - margin),
            rng.random_range(1.0f64.min(dims[2] / 2.0)..(2.0f64).min(dims[2] - margin)),
        ]
    };
    let mut last = (draw(rng), draw(rng));
    for _ in 0..1000 {
        let (s, m) = last;
        let d = ((s[0] - m[0]).powi(2) + (s[1] - m[1]).powi(2) + (s[2] - m[2]).powi(2)).sqrt();
        if (1.0..=2.5).contains(&d) {
            return Ok(last);
        }
        last = (draw(rng), draw(rng));
    }
    Ok(last)
}

/// Enumerates clean x impulse-response rows for every split, drawing one noise
/// and one SNR per row. SNRs are balanced: each clean utterance cycles through
/// a shuffled copy of the SNR grid. On the test split, rows alternate between
/// seen and unseen noise types when unseen noises are configured.
pub fn build_manifest(cfg: &SimulationConfig) -> Result<Vec<ManifestRow>> {
    if cfg.snr_db.is_empty() {
        return Err(invalid_config("SNR grid is empty"));
    }
    if cfg.seen_noises.is_empty() {
        return Err(invalid_config("no training noises configured"));
    }
    if cfg.rooms.is_empty() {
        return Err(invalid_config("no rooms configured"));
    }
    if cfg.utterance_secs <= 0.0 {
        return Err(invalid_config("utterance length must be positive"));
    }
    let seen: Vec<Source> = cfg.seen_noises.iter().map(|s| parse_noise(s)).collect();
    let unseen: Vec<Source> = cfg.unseen_noises.iter().map(|s| parse_noise(s)).collect();

    let mut rows = Vec::new();
    for (split_idx, (name, split)) in cfg.splits().into_iter().enumerate() {
        if split.rt60.is_empty() {
            return Err(invalid_config(format!("{name}: RT60 grid is empty")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(
            cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(split_idx as u64 + 1),
        );
        let cleans: Vec<Source> = match &split.clean_dir {
            Some(dir) => list_wavs(dir)?.into_iter().map(Source::Path).collect(),
            None => (0..split.clean).map(|_| Source::Generator(GeneratorKind::Speech)).collect(),
        };
        if cleans.is_empty() {
            return Err(invalid_config(format!("{name}: no clean utterances")));
        }
        let n_rirs = split.rirs.unwrap_or(split.rt60.len());
        if n_rirs == 0 {
            return Err(invalid_config(format!("{name}: zero impulse responses")));
        }
        let mut rirs = Vec::with_capacity(n_rirs);
        for j in 0..n_rirs {
            let dims = cfg.rooms[j % cfg.rooms.len()];
            let (src, mic) = sample_positions(dims, &mut rng)?;
            rirs.push((format!("{name}-rir{j:03}"), RoomGeometry { dims, src, mic }, split.rt60[j % split.rt60.len()]));
        }
        let use_unseen = name == "test" && !unseen.is_empty();
        let mut counter = 0usize;
        for (i, clean) in cleans.iter().enumerate() {
            let (clean_path, clean_generator) = match clean {
                Source::Path(p) => (Some(p.clone()), None),
                Source::Generator(kind) => (
                    None,
                    Some(GeneratorSpec {
                        kind: *kind,
                        seed: rng.random(),
                        seconds: cfg.utterance_secs,
                    }),
                ),
            };
            let mut snrs = cfg.snr_db.clone();
            snrs.shuffle(&mut rng);
            for (j, (rir_id, room, rt60)) in rirs.iter().enumerate() {
                let condition = if use_unseen && counter % 2 == 1 {
                    NoiseCondition::Unseen
                } else {
                    NoiseCondition::Seen
                };
                counter += 1;
                let pool = match condition {
                    NoiseCondition::Seen => &seen,
                    NoiseCondition::Unseen => &unseen,
                };
                let (noise_path, noise_generator) = match &pool[rng.random_range(0..pool.len())] {
                    Source::Path(p) => (Some(p.clone()), None),
                    Source::Generator(kind) => (
                        None,
                        Some(GeneratorSpec {
                            kind: *kind,
                            seed: rng.random(),
                            seconds: cfg.utterance_secs + NOISE_EXTRA_SECS,
                        }),
                    ),
                };
                rows.push(ManifestRow {
                    id: format!("{name}-{i:05}-{j:03}"),
                    clean_path: clean_path.clone(),
                    clean_generator: clean_generator.clone(),
                    rir_id: rir_id.clone(),
                    room: room.clone(),
                    rt60: *rt60,
                    noise_path,
                    noise_generator,
                    noise_condition: condition,
                    snr_db: snrs[j % snrs.len()],
                    split: name.to_string(),
                    seed: rng.random(),
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_manifest(path: impl AsRef<Path>, rows: &[ManifestRow]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut buf, row)?;
        buf.push(b'\n');
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
    }
    let mut file = std::fs::File::create(path)
        .map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    file.write_all(&buf)
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRow>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| Error::io(format!("opening manifest {}", path.display()), e))?;
    let mut rows = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(&line)?);
    }
    Ok(rows)
}

/// Impulse responses for every distinct `rir_id` among `rows`.
pub fn generate_rirs(rows: &[ManifestRow], sample_rate: u32) -> BTreeMap<String, Result<Arc<Rir>>> {
    let mut unique: BTreeMap<String, RoomSpec> = BTreeMap::new();
    for row in rows {
        unique.entry(row.rir_id.clone()).or_insert_with(|| row.room_spec(sample_rate));
    }
    let specs: Vec<(String, RoomSpec)> = unique.into_iter().collect();
    specs
        .into_par_iter()
        .map(|(id, spec)| (id, generate_rir(&spec).map(Arc::new)))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// Renders every row; failures are returned per row.
pub fn synthesize_rows(rows: &[ManifestRow], sample_rate: u32) -> Vec<Result<MixtureSample>> {
    let rirs = generate_rirs(rows, sample_rate);
    rows.par_iter()
        .map(|row| {
            let rir = match &rirs[&row.rir_id] {
                Ok(r) => r.clone(),
                Err(e) => return Err(Error::Infeasible(format!("{}: {e}", row.id))),
            };
            let clean = row.load_clean(sample_rate)?;
            let noise = row.load_noise(sample_rate)?;
            synthesize_sample(&clean, &rir, &noise, row)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full_scale() -> SimulationConfig {
        let grid = |lo: f64, hi: f64, step: f64| -> Vec<f64> {
            let n = ((hi - lo) / step).round() as usize + 1;
            (0..n).map(|k| ((lo + step * k as f64) * 100.0).round() / 100.0).collect()
        };
        SimulationConfig {
            train: SplitConfig { clean: 4620, clean_dir: None, rt60: grid(0.2, 2.0, 0.2), rirs: None },
            dev: SplitConfig { clean: 551, clean_dir: None, rt60: grid(0.3, 1.9, 0.2), rirs: None },
            test: SplitConfig { clean: 268, clean_dir: None, rt60: grid(0.35, 1.95, 0.1), rirs: Some(18) },
            ..SimulationConfig::toy(3)
        }
    }

    #[test]
    fn full_scale_row_counts() {
        let rows = build_manifest(&full_scale()).unwrap();
        let count = |s: &str| rows.iter().filter(|r| r.split == s).count();
        assert_eq!(count("train"), 46200);
        assert_eq!(count("dev"), 4959);
        assert_eq!(count("test"), 4824);
        let cfg = full_scale();
        assert_eq!(cfg.train.rt60.len(), 10);
        assert_eq!(cfg.dev.rt60.len(), 9);
    }

    #[test]
    fn toy_manifest_is_reproducible() {
        let a = build_manifest(&SimulationConfig::toy(7)).unwrap();
        let b = build_manifest(&SimulationConfig::toy(7)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().filter(|r| r.split == "train").count(), 80);
        let c = build_manifest(&SimulationConfig::toy(8)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn snr_grid_is_balanced_and_unseen_only_in_test() {
        let rows = build_manifest(&SimulationConfig::toy(7)).unwrap();
        for snr in [-5.0, 0.0, 5.0, 10.0] {
            let n = rows.iter().filter(|r| r.split == "train" && r.snr_db == snr).count();
            assert_eq!(n, 20);
        }
        assert!(rows
            .iter()
            .filter(|r| r.split != "test")
            .all(|r| r.noise_condition == NoiseCondition::Seen));
        let unseen = rows
            .iter()
            .filter(|r| r.noise_condition == NoiseCondition::Unseen)
            .count();
        assert_eq!(unseen, 10);
        for r in rows.iter().filter(|r| r.noise_condition == NoiseCondition::Unseen) {
            let kind = r.noise_generator.as_ref().unwrap().kind;
            assert!(matches!(kind, GeneratorKind::Brown | GeneratorKind::Hum));
        }
    }

    #[test]
    fn empty_sources_are_config_errors() {
        let mut cfg = SimulationConfig::toy(1);
        cfg.train.clean = 0;
        assert!(matches!(build_manifest(&cfg), Err(Error::InvalidConfig(_))));
        let mut cfg = SimulationConfig::toy(1);
        cfg.seen_noises.clear();
        assert!(matches!(build_manifest(&cfg), Err(Error::InvalidConfig(_))));
        let mut cfg = SimulationConfig::toy(1);
        cfg.dev.rt60.clear();
        assert!(matches!(build_manifest(&cfg), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn jsonl_round_trip() {
        let rows = build_manifest(&SimulationConfig::toy(2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        write_manifest(&path, &rows).unwrap();
        assert_eq!(read_manifest(&path).unwrap(), rows);
        let first = std::fs::read_to_string(&path).unwrap();
        let line: serde_json::Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
        for key in ["id", "clean_generator", "rir_id", "room", "rt60", "noise_generator", "snr_db", "split", "seed"] {
            assert!(line.get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn rendered_rows_satisfy_mixture_invariants() {
        let rows = build_manifest(&SimulationConfig::toy(5)).unwrap();
        let subset: Vec<ManifestRow> = rows.into_iter().filter(|r| r.split == "dev").take(4).collect();
        for (row, sample) in subset.iter().zip(synthesize_rows(&subset, 8000)) {
            let s = sample.unwrap();
            for i in 0..s.mixture.len() {
                assert_eq!(s.mixture.samples[i], s.reverberant_speech.samples[i] + s.noise.samples[i]);
            }
            let snr = super::super::measure_snr_db(&s.reverberant_speech, &s.noise);
            assert!((snr - row.snr_db).abs() < 0.01, "{snr} vs {}", row.snr_db);
        }
    }
}
