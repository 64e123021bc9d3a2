use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{read_grid, Grid, GridError, Split, SplitScheme, Timestamp};

/// One frame: a rain file and a radar file sharing a timestamp. Paths are
/// relative to the manifest's root unless absolute.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub timestamp: Timestamp,
    pub rain: PathBuf,
    pub radar: PathBuf,
}

/// Frame index of a corpus.
///
/// Text form: one `timestamp<TAB>rain_path<TAB>radar_path` line per frame,
/// timestamp in minutes since the epoch; blank lines and `#` comments are
/// ignored.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
    /// Set when the manifest was restricted with [`DatasetManifest::split`].
    pub split: Option<Split>,
}

impl DatasetManifest {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DatasetManifest {
            root: root.into(),
            entries: Vec::new(),
            split: None,
        }
    }

    pub fn parse(text: &str, root: impl Into<PathBuf>) -> Result<Self, GridError> {
        let mut m = DatasetManifest::new(root);
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| GridError::Manifest { line: i + 1, msg };
            let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(err(format!("expected 3 tab-separated fields, got {}", fields.len())));
            }
            let ts: i64 = fields[0]
                .parse()
                .map_err(|_| err(format!("bad timestamp {:?}", fields[0])))?;
            let timestamp = Timestamp(ts);
            if !timestamp.is_aligned() {
                return Err(err(format!("timestamp {ts} is not a multiple of 10")));
            }
            m.entries.push(ManifestEntry {
                timestamp,
                rain: PathBuf::from(fields[1]),
                radar: PathBuf::from(fields[2]),
            });
        }
        m.entries.sort_by_key(|e| e.timestamp);
        if let Some(w) = m.entries.windows(2).find(|w| w[0].timestamp == w[1].timestamp) {
            return Err(GridError::Manifest {
                line: 0,
                msg: format!("duplicate timestamp {}", w[0].timestamp.0),
            });
        }
        Ok(m)
    }

    /// Load a manifest file; relative paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, GridError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| GridError::io(path, e))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, root)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# timestamp\train\tradar\n");
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{}\t{}\t{}",
                e.timestamp.0,
                e.rain.display(),
                e.radar.display()
            );
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GridError> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| GridError::io(path, e))
    }

    /// Entries falling in `split`; assignment depends only on each timestamp.
    pub fn split(&self, scheme: &SplitScheme, split: Split) -> Self {
        DatasetManifest {
            root: self.root.clone(),
            entries: self
                .entries
                .iter()
                .filter(|e| scheme.split(e.timestamp) == split)
                .cloned()
                .collect(),
            split: Some(split),
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn load_frame(&self, entry: &ManifestEntry) -> Result<(Grid, Grid), GridError> {
        let rain = read_grid(self.resolve(&entry.rain))?;
        let radar = read_grid(self.resolve(&entry.radar))?;
        Ok((rain, radar))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
