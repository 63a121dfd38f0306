//! File output: atomic writes and the CSV metadata preamble.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::config::PanelConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Writes through a temporary sibling and renames it into place, so a
/// reader never sees a partial file.
pub fn write_atomic<F>(path: &Path, body: F) -> io::Result<()>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        body(&mut w)?;
        w.flush()?;
    }
    fs::rename(&tmp, path)
}

/// `# key=value` lines identifying the code version and the panel.
pub fn metadata(panel: &PanelConfig, extra: &[(&str, String)]) -> Vec<(String, String)> {
    let mut m = vec![
        ("version".to_string(), VERSION.to_string()),
        ("panel".to_string(), panel.name.clone()),
        (
            "config".to_string(),
            serde_json::to_string(panel).expect("panel serializes"),
        ),
    ];
    m.extend(extra.iter().map(|(k, v)| (k.to_string(), v.clone())));
    m
}
