use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

/// Stages output files next to their destination and renames them into
/// place only on [`Publisher::commit`]. Dropping a publisher without
/// committing removes the staged files and leaves earlier results alone.
pub struct Publisher {
    dir: PathBuf,
    staged: Vec<(NamedTempFile, PathBuf)>,
}

impl Publisher {
    pub fn new(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Publisher {
            dir: dir.to_owned(),
            staged: Vec::new(),
        })
    }

    pub fn stage<F>(&mut self, name: &str, write: F) -> io::Result<()>
    where
        F: FnOnce(&mut dyn Write) -> io::Result<()>,
    {
        let tmp = NamedTempFile::with_prefix_in(format!(".{name}."), &self.dir)?;
        {
            let mut w = BufWriter::new(tmp.as_file());
            write(&mut w)?;
            w.flush()?;
        }
        self.staged.push((tmp, self.dir.join(name)));
        Ok(())
    }

    pub fn commit(self) -> io::Result<Vec<PathBuf>> {
        let mut published = Vec::new();
        for (tmp, dest) in self.staged {
            tmp.persist(&dest).map_err(|e| e.error)?;
            published.push(dest);
        }
        Ok(published)
    }
}
