use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Matching, ModelError, PreferenceProfile};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: malformed JSON: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Invalid { path: PathBuf, source: ModelError },
}

/// On-disk instance: 0-based indices, best partner first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub n: usize,
    pub men: Vec<Vec<usize>>,
    pub women: Vec<Vec<usize>>,
}

impl From<&PreferenceProfile> for InstanceFile {
    fn from(p: &PreferenceProfile) -> Self {
        InstanceFile {
            n: p.n(),
            men: p.men_prefs().to_vec(),
            women: p.women_prefs().to_vec(),
        }
    }
}

impl TryFrom<InstanceFile> for PreferenceProfile {
    type Error = ModelError;

    fn try_from(f: InstanceFile) -> Result<Self, Self::Error> {
        PreferenceProfile::new(f.n, f.men, f.women)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchingFile {
    pub pairs: Vec<[usize; 2]>,
}

impl From<&Matching> for MatchingFile {
    fn from(m: &Matching) -> Self {
        MatchingFile {
            pairs: m.pairs().map(|(a, b)| [a, b]).collect(),
        }
    }
}

fn read(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T, IoError> {
    serde_json::from_str(text).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Canonical text: compact JSON and a trailing newline.
pub fn instance_to_string(profile: &PreferenceProfile) -> String {
    let mut s = serde_json::to_string(&InstanceFile::from(profile)).expect("plain data serializes");
    s.push('\n');
    s
}

pub fn parse_instance(text: &str) -> Result<PreferenceProfile, IoError> {
    parse_instance_at(Path::new("<input>"), text)
}

fn parse_instance_at(path: &Path, text: &str) -> Result<PreferenceProfile, IoError> {
    let file: InstanceFile = parse(path, text)?;
    PreferenceProfile::try_from(file).map_err(|source| IoError::Invalid {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_instance(path: impl AsRef<Path>) -> Result<PreferenceProfile, IoError> {
    let path = path.as_ref();
    parse_instance_at(path, &read(path)?)
}

pub fn write_instance(path: impl AsRef<Path>, profile: &PreferenceProfile) -> Result<(), IoError> {
    write(path.as_ref(), &instance_to_string(profile))
}

pub fn matching_to_string(matching: &Matching) -> String {
    let mut s = serde_json::to_string(&MatchingFile::from(matching)).expect("plain data serializes");
    s.push('\n');
    s
}

/// Reads a matching; the pairs are checked against `profile`.
pub fn read_matching(
    path: impl AsRef<Path>,
    profile: &PreferenceProfile,
) -> Result<Matching, IoError> {
    let path = path.as_ref();
    let file: MatchingFile = parse(path, &read(path)?)?;
    let invalid = |source| IoError::Invalid {
        path: path.to_path_buf(),
        source,
    };
    let matching = Matching::from_pairs(file.pairs.iter().map(|&[m, w]| (m, w))).map_err(invalid)?;
    matching.validate(profile).map_err(invalid)?;
    Ok(matching)
}

pub fn write_matching(path: impl AsRef<Path>, matching: &Matching) -> Result<(), IoError> {
    write(path.as_ref(), &matching_to_string(matching))
}
