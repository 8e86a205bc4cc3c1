use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::Plane;
use crate::error::{HaruError, Result};
use crate::noise::NoiseParams;

const MAGIC: &str = "#HMANIFEST v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PatchRole {
    Noisy,
    Clean,
}

impl PatchRole {
    pub fn as_str(self) -> &'static str {
        match self {
            PatchRole::Noisy => "noisy",
            PatchRole::Clean => "clean",
        }
    }
}

impl FromStr for PatchRole {
    type Err = HaruError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noisy" => Ok(PatchRole::Noisy),
            "clean" => Ok(PatchRole::Clean),
            _ => Err(HaruError::Manifest(format!("unknown role '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = HaruError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(HaruError::Manifest(format!("unknown split '{s}'"))),
        }
    }
}

/// One patch file. Geometry fields locate the patch in its source slice.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    /// Relative to the manifest's directory.
    pub path: String,
    pub role: PatchRole,
    pub pair_id: u64,
    pub split: Split,
    pub volume_id: String,
    pub plane: Plane,
    pub slice_index: usize,
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
    pub overlap: bool,
}

impl ManifestEntry {
    fn same_geometry(&self, other: &ManifestEntry) -> bool {
        self.volume_id == other.volume_id
            && self.plane == other.plane
            && self.slice_index == other.slice_index
            && (self.x, self.y, self.width, self.height)
                == (other.x, other.y, other.width, other.height)
            && self.split == other.split
    }

    fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.path,
            self.role.as_str(),
            self.pair_id,
            self.split,
            self.volume_id,
            self.plane,
            self.slice_index,
            self.x,
            self.y,
            self.width,
            self.height,
            u8::from(self.overlap)
        )
    }

    fn parse(line: &str, lineno: usize) -> Result<Self> {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 12 {
            return Err(HaruError::Manifest(format!(
                "line {lineno}: expected 12 fields, found {}",
                f.len()
            )));
        }
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| HaruError::Manifest(format!("line {lineno}: '{s}': {e}")))
        };
        Ok(ManifestEntry {
            path: f[0].to_string(),
            role: f[1].parse()?,
            pair_id: f[2]
                .parse()
                .map_err(|e| HaruError::Manifest(format!("line {lineno}: pair id: {e}")))?,
            split: f[3].parse()?,
            volume_id: f[4].to_string(),
            plane: f[5]
                .parse()
                .map_err(|e| HaruError::Manifest(format!("line {lineno}: {e}")))?,
            slice_index: num(f[6])?,
            x: num(f[7])?,
            y: num(f[8])?,
            width: num(f[9])?,
            height: num(f[10])?,
            overlap: match f[11] {
                "0" => false,
                "1" => true,
                other => {
                    return Err(HaruError::Manifest(format!(
                        "line {lineno}: overlap flag '{other}'"
                    )))
                }
            },
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub noise: NoiseParams,
    /// Seed of the volume split shuffle.
    pub seed: u64,
    /// Name of the random generator that produced the noise.
    pub rng: String,
}

impl DatasetManifest {
    pub fn new(noise: NoiseParams, seed: u64) -> Self {
        DatasetManifest {
            entries: Vec::new(),
            noise,
            seed,
            rng: crate::noise::RNG_NAME.to_string(),
        }
    }

    /// Every noisy entry has exactly one clean partner of identical
    /// geometry, and no volume appears in two splits.
    pub fn validate(&self) -> Result<()> {
        let mut by_pair: HashMap<u64, [Option<&ManifestEntry>; 2]> = HashMap::new();
        for e in &self.entries {
            if e.path.is_empty()
                || e.path.contains(['\t', '\n'])
                || e.volume_id.contains(['\t', '\n'])
            {
                return Err(HaruError::Manifest(format!(
                    "entry for pair {} has an unusable path or volume id",
                    e.pair_id
                )));
            }
            let slot = &mut by_pair.entry(e.pair_id).or_default()[e.role as usize];
            if slot.is_some() {
                return Err(HaruError::Manifest(format!(
                    "duplicate pair id {} for role {}",
                    e.pair_id,
                    e.role.as_str()
                )));
            }
            *slot = Some(e);
        }
        for (id, pair) in &by_pair {
            match pair {
                [Some(n), Some(c)] => {
                    if !n.same_geometry(c) {
                        return Err(HaruError::Manifest(format!(
                            "pair {id}: noisy and clean geometry differ"
                        )));
                    }
                }
                [Some(_), None] => {
                    return Err(HaruError::Manifest(format!(
                        "noisy entry of pair {id} has no clean partner"
                    )))
                }
                _ => {
                    return Err(HaruError::Manifest(format!(
                        "clean entry of pair {id} has no noisy partner"
                    )))
                }
            }
        }
        let mut split_of: HashMap<&str, Split> = HashMap::new();
        for e in &self.entries {
            match split_of.insert(&e.volume_id, e.split) {
                Some(prev) if prev != e.split => {
                    return Err(HaruError::Manifest(format!(
                        "split leakage: volume '{}' in both {prev} and {}",
                        e.volume_id, e.split
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// `(noisy, clean)` pairs of a split, ordered by pair id.
    pub fn pairs(&self, split: Split) -> Vec<(&ManifestEntry, &ManifestEntry)> {
        let mut map: BTreeMap<u64, [Option<&ManifestEntry>; 2]> = BTreeMap::new();
        for e in self.entries.iter().filter(|e| e.split == split) {
            map.entry(e.pair_id).or_default()[e.role as usize] = Some(e);
        }
        map.into_values()
            .filter_map(|p| match p {
                [Some(n), Some(c)] => Some((n, c)),
                _ => None,
            })
            .collect()
    }

    fn header_line(&self) -> String {
        let n = &self.noise;
        format!(
            "{MAGIC}\tsigma_q={}\tsigma_e={}\tnoise_seed={}\tclip={}\tjitter={}\tseed={}\trng={}",
            n.sigma_q, n.sigma_e, n.seed, n.clip, n.jitter, self.seed, self.rng
        )
    }

    pub fn to_text(&self) -> String {
        let mut out = self.header_line();
        out.push('\n');
        for e in &self.entries {
            out.push_str(&e.to_line());
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| HaruError::Manifest("empty manifest".into()))?;
        let mut fields = header.split('\t');
        if fields.next() != Some(MAGIC) {
            return Err(HaruError::Manifest(format!("bad header '{header}'")));
        }
        let mut kv = HashMap::new();
        for f in fields {
            let (k, v) = f
                .split_once('=')
                .ok_or_else(|| HaruError::Manifest(format!("bad header field '{f}'")))?;
            kv.insert(k, v);
        }
        let get = |k: &str| {
            kv.get(k)
                .copied()
                .ok_or_else(|| HaruError::Manifest(format!("header lacks '{k}'")))
        };
        let bad = |k: &str| HaruError::Manifest(format!("header field '{k}' unparsable"));
        let noise = NoiseParams {
            sigma_q: get("sigma_q")?.parse().map_err(|_| bad("sigma_q"))?,
            sigma_e: get("sigma_e")?.parse().map_err(|_| bad("sigma_e"))?,
            seed: get("noise_seed")?.parse().map_err(|_| bad("noise_seed"))?,
            clip: get("clip")?.parse().map_err(|_| bad("clip"))?,
            jitter: get("jitter")?.parse().map_err(|_| bad("jitter"))?,
        };
        let mut m = DatasetManifest {
            entries: Vec::new(),
            noise,
            seed: get("seed")?.parse().map_err(|_| bad("seed"))?,
            rng: get("rng")?.to_string(),
        };
        for (i, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            m.entries.push(ManifestEntry::parse(line, i + 2)?);
        }
        Ok(m)
    }
}

pub fn write_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    manifest.validate()?;
    fs::write(path, manifest.to_text()).map_err(|e| HaruError::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| HaruError::io(path, e))?;
    let m = DatasetManifest::parse(&text)?;
    m.validate()?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn entry(pair_id: u64, role: PatchRole, split: Split, vol: &str) -> ManifestEntry {
        ManifestEntry {
            path: format!("patches/{pair_id:06}_{}.png", role.as_str()),
            role,
            pair_id,
            split,
            volume_id: vol.to_string(),
            plane: Plane::Axial,
            slice_index: 3,
            x: 10,
            y: 20,
            width: 64,
            height: 64,
            overlap: false,
        }
    }

    fn params() -> NoiseParams {
        NoiseParams::new(0.04, 0.02, 9, true).unwrap()
    }

    #[test]
    fn empty_manifest_is_valid() {
        let m = DatasetManifest::new(params(), 1);
        let back = DatasetManifest::parse(&m.to_text()).unwrap();
        back.validate().unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn missing_clean_partner_rejected() {
        let mut m = DatasetManifest::new(params(), 1);
        m.entries
            .push(entry(0, PatchRole::Noisy, Split::Train, "a"));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.tsv");
        fs::write(&p, m.to_text()).unwrap();
        assert!(matches!(read_manifest(&p), Err(HaruError::Manifest(_))));
    }

    #[test]
    fn duplicates_and_leakage_rejected() {
        let mut m = DatasetManifest::new(params(), 1);
        m.entries
            .push(entry(0, PatchRole::Noisy, Split::Train, "a"));
        m.entries
            .push(entry(0, PatchRole::Clean, Split::Train, "a"));
        m.validate().unwrap();
        m.entries
            .push(entry(0, PatchRole::Noisy, Split::Train, "a"));
        assert!(m.validate().is_err());
        m.entries.pop();
        m.entries.push(entry(1, PatchRole::Noisy, Split::Val, "a"));
        m.entries.push(entry(1, PatchRole::Clean, Split::Val, "a"));
        assert!(m.validate().unwrap_err().to_string().contains("leakage"));
    }

    fn arb_manifest() -> impl Strategy<Value = DatasetManifest> {
        (
            prop::collection::vec(
                (
                    0usize..3,
                    0usize..5000,
                    0usize..5000,
                    any::<bool>(),
                    0usize..40,
                ),
                100,
            ),
            any::<u64>(),
            0.0f64..0.2,
            0.0f64..0.2,
        )
            .prop_map(|(raw, seed, sq, se)| {
                let mut m =
                    DatasetManifest::new(NoiseParams::new(sq, se, seed ^ 7, false).unwrap(), seed);
                for (i, (vol, x, y, ov, idx)) in raw.into_iter().enumerate() {
                    let split = [Split::Train, Split::Val, Split::Test][vol];
                    for role in [PatchRole::Noisy, PatchRole::Clean] {
                        let mut e = entry(i as u64, role, split, &format!("vol{vol}"));
                        e.x = x;
                        e.y = y;
                        e.overlap = ov;
                        e.slice_index = idx;
                        m.entries.push(e);
                    }
                }
                m
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn write_read_round_trip(m in arb_manifest()) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("m.tsv");
            write_manifest(&m, &p).unwrap();
            prop_assert_eq!(read_manifest(&p).unwrap(), m);
        }
    }
}
