//! On-disk layout: the chain file plus a `<chain>.keys/` directory holding
//! one file per rabbit and a directory of issued identifiers.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use petition_core::group::Group;
use petition_core::protocol::RabbitSecrets;

use crate::CliError;

pub fn keys_dir(chain: &Path) -> PathBuf {
    let mut name = chain.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".keys");
    chain.with_file_name(name)
}

fn rabbit_path(chain: &Path, index: u32) -> PathBuf {
    keys_dir(chain).join(format!("rabbit-{index}.json"))
}

fn directory_path(chain: &Path) -> PathBuf {
    keys_dir(chain).join("directory.json")
}

/// Writes through a temporary file in the same directory and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| CliError::io(&dir, e))?;
    tmp.write_all(contents).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn save_rabbits<G: Group>(chain: &Path, secrets: &[RabbitSecrets<G>]) -> Result<(), CliError> {
    for s in secrets {
        let json = serde_json::to_vec_pretty(s).expect("secrets always serialize");
        write_atomic(&rabbit_path(chain, s.index), &json)?;
    }
    Ok(())
}

pub fn load_rabbits<G: Group>(chain: &Path, k: u32) -> Result<Vec<RabbitSecrets<G>>, CliError> {
    (1..=k)
        .map(|i| {
            let path = rabbit_path(chain, i);
            let text = read_text(&path)?;
            let s: RabbitSecrets<G> = serde_json::from_str(&text)
                .map_err(|e| CliError::io(&path, std::io::Error::other(e)))?;
            if s.index != i {
                return Err(CliError::io(&path, std::io::Error::other("rabbit index mismatch")));
            }
            Ok(s)
        })
        .collect()
}

/// Deletes every rabbit's key file. Returns how many were removed.
pub fn erase_rabbits(chain: &Path, k: u32) -> Result<usize, CliError> {
    let mut removed = 0;
    for i in 1..=k {
        let path = rabbit_path(chain, i);
        match fs::remove_file(&path) {
            Ok(()) => removed += 1,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(CliError::io(&path, e)),
        }
    }
    Ok(removed)
}

/// Identity evidence by identifier hex, kept by the validators for display.
pub fn load_directory(chain: &Path) -> BTreeMap<String, String> {
    fs::read_to_string(directory_path(chain))
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok())
        .unwrap_or_default()
}

pub fn save_directory(chain: &Path, dir: &BTreeMap<String, String>) -> Result<(), CliError> {
    let json = serde_json::to_vec_pretty(dir).expect("maps always serialize");
    write_atomic(&directory_path(chain), &json)
}
