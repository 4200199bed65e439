//! Filesystem layout shared by run and experiment directories.

use std::io;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

/// First 8 hex digits of SHA-256 over `bytes`.
pub fn short_digest(bytes: &[u8]) -> String {
    hex::encode(&Sha256::digest(bytes)[..4])
}

/// Creates `<root>/<UTC timestamp>-<digest>`, appending `-N` when that
/// name is already taken.
pub fn create_artifact_dir(root: &Path, digest: &str) -> io::Result<(String, PathBuf)> {
    std::fs::create_dir_all(root)?;
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    let base = format!("{stamp}-{digest}");
    for n in 0.. {
        let id = if n == 0 { base.clone() } else { format!("{base}-{n}") };
        let dir = root.join(&id);
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok((id, dir)),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e),
        }
    }
    unreachable!("unbounded suffix search")
}

/// Writes through a sibling temp file and renames, so readers never
/// observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}
