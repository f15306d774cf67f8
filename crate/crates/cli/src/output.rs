use std::cell::RefCell;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

/// The only place commands write to. Every file name is a plain name inside
/// the root, so nothing lands outside `--out`.
pub struct OutDir {
    root: PathBuf,
    written: RefCell<Vec<String>>,
}

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root)?;
        Ok(OutDir {
            root: root.to_path_buf(),
            written: RefCell::new(Vec::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn target(&self, name: &str) -> PathBuf {
        assert!(
            !name.contains(['/', '\\']) && name != ".." && !name.is_empty(),
            "output names are plain file names"
        );
        let mut w = self.written.borrow_mut();
        if !w.iter().any(|n| n == name) {
            w.push(name.to_string());
        }
        self.root.join(name)
    }

    pub fn file(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        Ok(BufWriter::new(File::create(self.target(name))?))
    }

    /// Runs a core writer against a new file and flushes it.
    pub fn with<F>(&self, name: &str, write: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> foodcast_core::Result<()>,
    {
        let mut f = self.file(name)?;
        write(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut f = self.file(name)?;
        serde_json::to_writer_pretty(&mut f, value).map_err(foodcast_core::Error::from)?;
        f.write_all(b"\n")?;
        f.flush()?;
        Ok(())
    }

    /// Written files in first-write order, with sizes and digests.
    pub fn manifest(&self) -> Result<Vec<FileEntry>, CliError> {
        self.written
            .borrow()
            .iter()
            .map(|name| {
                let bytes = std::fs::read(self.root.join(name))?;
                let digest = Sha256::digest(&bytes);
                Ok(FileEntry {
                    name: name.clone(),
                    bytes: bytes.len() as u64,
                    sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
                })
            })
            .collect()
    }
}
