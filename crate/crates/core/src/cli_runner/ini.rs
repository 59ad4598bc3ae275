//! Minimal sectioned `key = value` reader.

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub section: String,
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// Parses `[section]` headers and `key = value` lines. `#` and `;` start
/// comments. Keys must sit inside a section and may appear once per section.
pub fn parse(text: &str, file: &str) -> Result<Vec<Entry>> {
    let mut out: Vec<Entry> = Vec::new();
    let mut section: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |msg: String| Error::Parse {
            file: file.to_string(),
            line: line_no,
            msg,
        };
        let line = raw.split(['#', ';']).next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err(format!("unterminated section header {line:?}")))?
                .trim();
            if name.is_empty() {
                return Err(err("empty section name".into()));
            }
            section = Some(name.to_string());
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(err(format!("expected key = value, found {line:?}")));
        };
        let Some(section) = section.clone() else {
            return Err(err(format!(
                "key {:?} appears before any section",
                key.trim()
            )));
        };
        let key = key.trim().to_string();
        if key.is_empty() {
            return Err(err("empty key".into()));
        }
        if out.iter().any(|e| e.section == section && e.key == key) {
            return Err(err(format!("duplicate key {section}.{key}")));
        }
        out.push(Entry {
            section,
            key,
            value: value.trim().to_string(),
            line: line_no,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_keys_and_comments() {
        let text =
            "# top\n[run]\nseed = 7 ; inline\n\n[sps]\np_resel=0.4\nth_sps_dbm = -80 # dBm\n";
        let e = parse(text, "t.ini").unwrap();
        assert_eq!(e.len(), 3);
        assert_eq!(
            (
                e[0].section.as_str(),
                e[0].key.as_str(),
                e[0].value.as_str()
            ),
            ("run", "seed", "7")
        );
        assert_eq!(e[2].value, "-80");
        assert_eq!(e[2].line, 7);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("seed = 1\n", 1),
            ("[run]\nseed\n", 2),
            ("[run\n", 1),
            ("[run]\nseed=1\nseed=2\n", 3),
        ];
        for (text, line) in cases {
            match parse(text, "t.ini") {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn empty_input() {
        assert!(parse("", "t.ini").unwrap().is_empty());
    }
}
