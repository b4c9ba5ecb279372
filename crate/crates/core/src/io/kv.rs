//! Flat `key = value` text files. Blank lines and `#` comments are
//! ignored; keys keep file order.

use std::path::Path;

use crate::error::FileError;

pub fn parse(path: &Path, text: &str) -> Result<Vec<(String, String)>, FileError> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| FileError::schema(path, idx + 1, "expected `key = value`"))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(FileError::schema(path, idx + 1, "empty key"));
        }
        if out.iter().any(|(k, _)| k == key) {
            return Err(FileError::schema(
                path,
                idx + 1,
                format!("duplicate key {key:?}"),
            ));
        }
        out.push((key.to_string(), value.trim().to_string()));
    }
    Ok(out)
}

pub fn render(header: &str, pairs: &[(&str, String)]) -> String {
    let mut out = String::new();
    if !header.is_empty() {
        for line in header.lines() {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
    }
    for (k, v) in pairs {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(v);
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_skips_comments_and_blanks() {
        let text = "# hello\n\na = 1\n b = two \n";
        let kv = parse(Path::new("t"), text).unwrap();
        assert_eq!(
            kv,
            vec![("a".into(), "1".into()), ("b".into(), "two".into())]
        );
    }

    #[test]
    fn parse_rejects_garbage_and_duplicates() {
        assert!(parse(Path::new("t"), "no equals sign").is_err());
        assert!(parse(Path::new("t"), "a = 1\na = 2").is_err());
        assert!(parse(Path::new("t"), "= 1").is_err());
    }

    #[test]
    fn render_then_parse() {
        let text = render("note", &[("x", "1".into()), ("y", "2".into())]);
        let kv = parse(Path::new("t"), &text).unwrap();
        assert_eq!(kv.len(), 2);
    }
}
