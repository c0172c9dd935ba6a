//! Results directories. Everything is written into a sibling staging
//! directory and renamed into place, so a results directory is never
//! observable half-written. An existing non-empty destination is only
//! replaced under --force; a destination holding a manifest is the normal
//! rerun case and gets the pointed message.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

#[derive(Debug)]
pub struct OutDir {
    staged: PathBuf,
    dest: PathBuf,
}

impl OutDir {
    /// Prepares a staging directory next to `dest`, refusing up front when
    /// committing would need --force.
    pub fn stage(dest: &Path, force: bool) -> io::Result<OutDir> {
        if dest.exists() && !force {
            if dest.join("manifest.json").exists() {
                return Err(io::Error::other(format!(
                    "{} already holds a manifest; pass --force to replace it",
                    dest.display()
                )));
            }
            if dest.read_dir()?.next().is_some() {
                return Err(io::Error::other(format!(
                    "{} exists and is not empty; pass --force to replace it",
                    dest.display()
                )));
            }
        }
        let name = dest
            .file_name()
            .ok_or_else(|| io::Error::other("output path needs a directory name"))?;
        let mut staged_name = name.to_os_string();
        staged_name.push(".staging");
        let staged = dest.with_file_name(staged_name);
        if staged.exists() {
            fs::remove_dir_all(&staged)?;
        }
        fs::create_dir_all(&staged)?;
        Ok(OutDir {
            staged,
            dest: dest.to_path_buf(),
        })
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> io::Result<()> {
        fs::write(self.staged.join(name), contents)
    }

    /// Moves the staged directory into place, replacing the destination.
    pub fn commit(self) -> io::Result<PathBuf> {
        if self.dest.exists() {
            fs::remove_dir_all(&self.dest)?;
        }
        fs::rename(&self.staged, &self.dest)?;
        Ok(self.dest)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}
