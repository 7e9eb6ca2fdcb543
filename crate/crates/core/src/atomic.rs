//! Write-then-rename file output, so readers never observe partial files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{CoreError, Result};

pub fn write_atomic<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = Path::new(&tmp);
    let file = File::create(tmp).map_err(|e| CoreError::io(tmp, e))?;
    let mut w = BufWriter::new(file);
    let filled = fill(&mut w).and_then(|()| w.flush().map_err(|e| CoreError::io(tmp, e)));
    if let Err(e) = filled {
        let _ = std::fs::remove_file(tmp);
        return Err(e);
    }
    drop(w);
    std::fs::rename(tmp, path).map_err(|e| CoreError::io(path, e))
}

pub fn write_string(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, |w| w.write_all(text.as_bytes()).map_err(|e| CoreError::io(path, e)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failed_fill_leaves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        write_string(&p, "hello").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "hello");
        let q = dir.path().join("b.txt");
        assert!(write_atomic(&q, |_| Err(CoreError::Format("boom".into()))).is_err());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
