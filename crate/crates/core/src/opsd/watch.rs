//! Polling helpers: new files in a directory and appended lines in a log.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};
use std::time::SystemTime;

/// Reports files that appeared or changed since the previous poll.
#[derive(Debug)]
pub struct DirWatcher {
    dir: PathBuf,
    seen: BTreeMap<PathBuf, (u64, Option<SystemTime>)>,
}

impl DirWatcher {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        DirWatcher {
            dir: dir.into(),
            seen: BTreeMap::new(),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Regular files that are new or whose size or mtime changed, sorted by
    /// path. Hidden files and `*.tmp` are ignored.
    pub fn poll(&mut self) -> std::io::Result<Vec<PathBuf>> {
        let mut changed = Vec::new();
        for entry in std::fs::read_dir(&self.dir)? {
            let entry = entry?;
            let meta = entry.metadata()?;
            if !meta.is_file() {
                continue;
            }
            let path = entry.path();
            let name = entry.file_name();
            let name = name.to_string_lossy();
            if name.starts_with('.') || name.ends_with(".tmp") {
                continue;
            }
            let stamp = (meta.len(), meta.modified().ok());
            if self.seen.get(&path) != Some(&stamp) {
                self.seen.insert(path.clone(), stamp);
                changed.push(path);
            }
        }
        changed.sort();
        Ok(changed)
    }
}

/// Follows a growing text file, returning complete lines only.
#[derive(Debug)]
pub struct LineTail {
    path: PathBuf,
    offset: u64,
    partial: String,
}

impl LineTail {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        LineTail {
            path: path.into(),
            offset: 0,
            partial: String::new(),
        }
    }

    /// Lines appended since the last call. A file that shrank is treated as
    /// rotated and read from the start. A missing file yields nothing.
    pub fn poll(&mut self) -> std::io::Result<Vec<String>> {
        let mut f = match File::open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(vec![]),
            Err(e) => return Err(e),
        };
        let len = f.metadata()?.len();
        if len < self.offset {
            self.offset = 0;
            self.partial.clear();
        }
        f.seek(SeekFrom::Start(self.offset))?;
        let mut buf = Vec::new();
        f.read_to_end(&mut buf)?;
        self.offset += buf.len() as u64;
        self.partial.push_str(&String::from_utf8_lossy(&buf));
        let mut lines = Vec::new();
        while let Some(i) = self.partial.find('\n') {
            let line: String = self.partial.drain(..=i).collect();
            lines.push(line.trim_end_matches(['\n', '\r']).to_owned());
        }
        Ok(lines)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn dir_watcher_sees_new_and_changed_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = DirWatcher::new(dir.path());
        assert!(w.poll().unwrap().is_empty());
        std::fs::write(dir.path().join("b.exe"), b"x").unwrap();
        std::fs::write(dir.path().join("a.exe"), b"x").unwrap();
        std::fs::write(dir.path().join("c.tmp"), b"x").unwrap();
        let got = w.poll().unwrap();
        assert_eq!(got, vec![dir.path().join("a.exe"), dir.path().join("b.exe")]);
        assert!(w.poll().unwrap().is_empty());
        std::fs::write(dir.path().join("a.exe"), b"xyz").unwrap();
        assert_eq!(w.poll().unwrap(), vec![dir.path().join("a.exe")]);
    }

    #[test]
    fn tail_returns_complete_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("access.log");
        let mut t = LineTail::new(&p);
        assert!(t.poll().unwrap().is_empty());
        let mut f = File::create(&p).unwrap();
        write!(f, "one\ntw").unwrap();
        f.flush().unwrap();
        assert_eq!(t.poll().unwrap(), vec!["one"]);
        write!(f, "o\nthree\n").unwrap();
        f.flush().unwrap();
        assert_eq!(t.poll().unwrap(), vec!["two", "three"]);
        std::fs::write(&p, "new\n").unwrap();
        assert_eq!(t.poll().unwrap(), vec!["new"]);
    }
}
