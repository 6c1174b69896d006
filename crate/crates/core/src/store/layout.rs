use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Result, SiaError};

/// Directory layout of a store rooted at `root`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreLayout {
    pub root: PathBuf,
}

impl StoreLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        StoreLayout { root: root.into() }
    }

    pub fn records_dir(&self) -> PathBuf {
        self.root.join("records")
    }

    pub fn media_dir(&self) -> PathBuf {
        self.root.join("media")
    }

    pub fn schema_dir(&self) -> PathBuf {
        self.root.join("schema")
    }

    pub fn index_dir(&self) -> PathBuf {
        self.root.join("index")
    }

    pub fn index_file(&self) -> PathBuf {
        self.index_dir().join("snapshot.json")
    }

    pub fn reference_file(&self) -> PathBuf {
        self.schema_dir().join("reference.xml")
    }

    pub fn lock_file(&self) -> PathBuf {
        self.root.join(".sia.lock")
    }

    pub fn record_file(&self, id: &str) -> PathBuf {
        self.records_dir().join(format!("{id}.xml"))
    }

    pub(crate) fn record_temp(&self, id: &str) -> PathBuf {
        self.records_dir().join(format!(".{id}.xml.tmp"))
    }

    pub(crate) fn record_staged(&self, id: &str, version: u32) -> PathBuf {
        self.records_dir().join(format!(".{id}.v{version}.staged"))
    }

    pub fn schema_file(&self, version: u32) -> PathBuf {
        self.schema_dir().join(format!("v{version}.xml"))
    }

    pub fn create_dirs(&self) -> Result<()> {
        for dir in [
            self.records_dir(),
            self.media_dir(),
            self.schema_dir(),
            self.index_dir(),
        ] {
            fs::create_dir_all(&dir)?;
        }
        Ok(())
    }

    /// Resolves an asset href relative to `media/`. Absolute paths, URLs and
    /// `..` components are refused.
    pub fn media_path(&self, href: &str) -> Option<PathBuf> {
        if href.is_empty() || href.contains("://") || href.starts_with('/') || href.contains('\\') {
            return None;
        }
        let rel = Path::new(href);
        if rel
            .components()
            .any(|c| !matches!(c, std::path::Component::Normal(_)))
        {
            return None;
        }
        Some(self.media_dir().join(rel))
    }
}

/// Exclusive advisory lock on the store directory, held until dropped.
#[derive(Debug)]
pub struct StoreLock {
    _file: File,
    path: PathBuf,
}

impl StoreLock {
    pub fn acquire(layout: &StoreLayout) -> Result<StoreLock> {
        let path = layout.lock_file();
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)?;
        match file.try_lock() {
            Ok(()) => Ok(StoreLock { _file: file, path }),
            Err(fs::TryLockError::WouldBlock) => Err(SiaError::Locked(path)),
            Err(fs::TryLockError::Error(e)) => Err(e.into()),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

pub(crate) fn sync_dir(dir: &Path) -> Result<()> {
    File::open(dir)?.sync_all()?;
    Ok(())
}

/// Writes `bytes` to `path` and flushes them to disk.
pub(crate) fn write_synced(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = File::create(path)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    Ok(())
}

pub(crate) fn rename_synced(from: &Path, to: &Path) -> Result<()> {
    fs::rename(from, to)?;
    if let Some(dir) = to.parent() {
        sync_dir(dir)?;
    }
    Ok(())
}

/// Lowercase slug of `title`, at most 60 bytes; `record` when nothing is left.
pub fn slugify(title: &str) -> String {
    let mut out = String::new();
    for c in title.chars().flat_map(char::to_lowercase) {
        let mapped = match c {
            'a'..='z' | '0'..='9' => Some(c),
            'à' | 'á' | 'â' | 'ã' | 'ä' | 'å' => Some('a'),
            'ç' => Some('c'),
            'è' | 'é' | 'ê' | 'ë' => Some('e'),
            'ì' | 'í' | 'î' | 'ï' => Some('i'),
            'ñ' => Some('n'),
            'ò' | 'ó' | 'ô' | 'õ' | 'ö' | 'ø' => Some('o'),
            'ù' | 'ú' | 'û' | 'ü' => Some('u'),
            'ý' | 'ÿ' => Some('y'),
            _ => None,
        };
        match mapped {
            Some(c) => {
                if out.len() >= 60 {
                    break;
                }
                out.push(c);
            }
            None if !out.is_empty() && !out.ends_with('-') => out.push('-'),
            None => {}
        }
    }
    while out.ends_with('-') {
        out.pop();
    }
    if out.is_empty() {
        out.push_str("record");
    }
    out
}

/// Media type guessed from a file extension.
pub fn media_type_for(path: &Path) -> &'static str {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    match ext.as_str() {
        "jpg" | "jpeg" => "image/jpeg",
        "png" => "image/png",
        "gif" => "image/gif",
        "tif" | "tiff" => "image/tiff",
        "webp" => "image/webp",
        "svg" => "image/svg+xml",
        "x3d" => "model/x3d+xml",
        "wrl" => "model/vrml",
        "txt" => "text/plain",
        "html" | "htm" => "text/html",
        "xml" => "application/xml",
        "pdf" => "application/pdf",
        _ => "application/octet-stream",
    }
}
