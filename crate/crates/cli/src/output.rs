//! Output files. Everything written through an [`OutputSet`] is removed
//! again unless the set is committed.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use levelsim::stats::TestReport;

use crate::run::{ReplicateOutput, TRAJECTORY_HEADER};

pub struct OutputSet {
    dir: PathBuf,
    created_dir: bool,
    files: Vec<PathBuf>,
    committed: bool,
}

impl OutputSet {
    pub fn new(dir: &Path) -> io::Result<Self> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), created_dir, files: Vec::new(), committed: false })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> io::Result<PathBuf> {
        let path = self.dir.join(name);
        self.files.push(path.clone());
        fs::write(&path, bytes)?;
        Ok(path)
    }

    pub fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for OutputSet {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        if self.created_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}

pub fn trajectories_csv(outputs: &[ReplicateOutput]) -> Vec<u8> {
    let mut buf = Vec::new();
    writeln!(buf, "{TRAJECTORY_HEADER}").unwrap();
    for row in outputs.iter().flat_map(|o| &o.rows) {
        writeln!(buf, "{}", row.csv()).unwrap();
    }
    buf
}

pub fn reports_csv<'a>(reports: impl IntoIterator<Item = &'a TestReport>) -> Vec<u8> {
    let mut buf = Vec::new();
    writeln!(buf, "{}", TestReport::CSV_HEADER).unwrap();
    for r in reports {
        writeln!(buf, "{}", r.csv_row()).unwrap();
    }
    buf
}

/// Writes the trajectory table and any event logs.
pub fn write_run(set: &mut OutputSet, file: &str, outputs: &[ReplicateOutput]) -> io::Result<()> {
    set.write(file, &trajectories_csv(outputs))?;
    for (i, o) in outputs.iter().enumerate() {
        if let Some(ev) = &o.events {
            set.write(&format!("events_{i}.csv"), ev)?;
        }
    }
    Ok(())
}
