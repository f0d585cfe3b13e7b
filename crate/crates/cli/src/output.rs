//! Output files: provenance header, then the body, written through a
//! temporary file in the target directory and renamed into place so a
//! failed run never leaves a partial file behind.

use std::io::Write;
use std::path::Path;

use crate::CliError;

pub struct Provenance {
    pub config_sha256: String,
    pub seed: u64,
}

impl Provenance {
    /// `#` comment lines for CSV outputs.
    pub fn csv_header(&self) -> String {
        format!("# config_sha256={}\n# seed={}\n", self.config_sha256, self.seed)
    }
}

/// Writes `body` to `path`, or to stdout when `path` is `None`.
pub fn emit(path: Option<&Path>, body: &[u8]) -> Result<(), CliError> {
    match path {
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(body)?;
            out.flush()?;
            Ok(())
        }
        Some(path) => {
            let dir = match path.parent() {
                Some(d) if !d.as_os_str().is_empty() => d,
                _ => Path::new("."),
            };
            let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
            tmp.write_all(body)?;
            tmp.as_file().sync_all()?;
            tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        emit(Some(&path), b"a,b\n1,2\n").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"a,b\n1,2\n");
        emit(Some(&path), b"c\n").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"c\n");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn missing_directory_fails_cleanly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nope").join("out.csv");
        assert!(emit(Some(&path), b"x").is_err());
        assert!(!path.exists());
    }
}
