//! CSV artifacts: a block of `# ` comment lines followed by an RFC 4180
//! table. Floats use the shortest round-trip form with `inf`, `-inf` and
//! `nan` sentinels.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};

pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

/// Renders the comment header, the column names and the rows.
pub fn render(comments: &str, header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut out = comments.as_bytes().to_vec();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
    }
    Ok(out)
}

/// Writes through a temporary sibling and renames, so a file that exists
/// is always complete.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

/// Data rows of a CSV written by [`render`], as string records.
pub fn read_rows(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let header = r.headers()?.iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(String::from).collect()))
        .collect::<Result<_, _>>()?;
    Ok((header, rows))
}

pub fn parse_f64(s: &str) -> f64 {
    match s {
        "inf" => f64::INFINITY,
        "-inf" => f64::NEG_INFINITY,
        _ => s.parse().unwrap_or(f64::NAN),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sentinels_and_round_trip() {
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
        assert_eq!(fmt_f64(f64::NAN), "nan");
        assert_eq!(fmt_f64(0.1), "0.1");
        for v in [1e-300, 0.1 + 0.2, -3.5e12, f64::INFINITY] {
            assert_eq!(parse_f64(&fmt_f64(v)), v);
        }
        assert!(parse_f64("nan").is_nan());
    }

    #[test]
    fn render_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a/b.csv");
        let bytes = render(
            "# x = 1\n",
            &["a", "error"],
            &[vec!["1".into(), "bad, \"quoted\"".into()]],
        )
        .unwrap();
        write_atomic(&path, &bytes).unwrap();
        let (h, rows) = read_rows(&path).unwrap();
        assert_eq!(h, vec!["a", "error"]);
        assert_eq!(rows, vec![vec!["1".to_string(), "bad, \"quoted\"".to_string()]]);
        assert!(!path.with_extension("partial").exists());
    }
}
