use std::path::{Path, PathBuf};

/// Files written by the current command; removed on failure.
#[derive(Debug, Default)]
pub struct Outputs {
    written: Vec<PathBuf>,
}

impl Outputs {
    /// Registers `path` right before it is written.
    pub fn track<'a>(&mut self, path: &'a Path) -> &'a Path {
        self.written.push(path.to_path_buf());
        path
    }

    pub fn cleanup(&mut self) {
        for p in self.written.drain(..) {
            if p.exists() {
                if let Err(e) = std::fs::remove_file(&p) {
                    log::warn!("could not remove partial output {}: {e}", p.display());
                } else {
                    log::info!("removed partial output {}", p.display());
                }
            }
        }
    }
}
