//! Run configuration, report envelope, and atomic file output.
//!
//! Every run is describable by a single JSON document (the serialized
//! subcommand arguments). `--config FILE` supplies defaults for a run;
//! explicitly passed flags override the file's fields. Reports embed the
//! fully resolved configuration so results are reproducible from the
//! report alone.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

/// Report envelope written by every subcommand.
#[derive(Debug, Serialize)]
pub struct RunReport<C: Serialize, T: Serialize> {
    pub config_echo: C,
    pub results: T,
    pub tool_version: String,
    pub wall_time_s: f64,
}

pub fn tool_version() -> String {
    format!("subinf {}", env!("CARGO_PKG_VERSION"))
}

/// Write `content` to `path` atomically: a temp file in the same directory
/// is persisted over the target, so partial reports never appear.
pub fn atomic_write(path: &Path, content: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(d) => tempfile::NamedTempFile::new_in(d)?,
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    tmp.write_all(content)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Serialize a report and write it atomically (or to stdout when `path` is
/// absent).
pub fn emit_report<C: Serialize, T: Serialize>(
    path: Option<&Path>,
    report: &RunReport<C, T>,
) -> std::io::Result<()> {
    let mut body = serde_json::to_string_pretty(report)?;
    body.push('\n');
    match path {
        Some(p) => atomic_write(p, body.as_bytes()),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

/// Load a JSON config file into any deserializable argument struct.
pub fn load_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("reading {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("parsing {}: {e}", path.display()))
}

/// Parse "lo,hi;lo,hi;(...)" into per-axis bounds.
pub fn parse_box(spec: &str) -> Result<subinf::BoxDomain, String> {
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for axis in spec.split(';') {
        let (a, b) = axis
            .split_once(',')
            .ok_or_else(|| format!("axis `{axis}` must be lo,hi"))?;
        lo.push(parse_f64(a)?);
        hi.push(parse_f64(b)?);
    }
    subinf::BoxDomain::new(lo, hi).map_err(|e| e.to_string())
}

/// Parse "a,b,c" into a vector.
pub fn parse_vec(spec: &str) -> Result<Vec<f64>, String> {
    spec.split(',').map(parse_f64).collect()
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| format!("bad number `{s}`"))
}

/// Parse a list of points "x,y;x,y;(...)".
pub fn parse_points(spec: &str) -> Result<Vec<Vec<f64>>, String> {
    spec.split(';').map(parse_vec).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_and_vec_parsing() {
        let b = parse_box("-1,1;0,2").unwrap();
        assert_eq!(b.lo, vec![-1.0, 0.0]);
        assert_eq!(b.hi, vec![1.0, 2.0]);
        assert!(parse_box("1,0").is_err());
        assert_eq!(parse_vec("1,2.5").unwrap(), vec![1.0, 2.5]);
        assert_eq!(
            parse_points("0,0;1,0").unwrap(),
            vec![vec![0.0, 0.0], vec![1.0, 0.0]]
        );
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        atomic_write(&path, b"first").unwrap();
        atomic_write(&path, b"second").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "second");
    }
}
