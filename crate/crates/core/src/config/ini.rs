//! Minimal line-oriented `key = value` reader with `[section]` headers.

use super::ConfigError;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Entry {
    pub section: String,
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// Split `text` into entries. `#` and `;` start comments; blank lines are
/// skipped. Duplicate keys within a section are rejected.
pub(crate) fn read(text: &str) -> Result<Vec<Entry>, ConfigError> {
    let mut section: Option<String> = None;
    let mut entries: Vec<Entry> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = strip_comment(raw).trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::at(line, "unterminated section header"))?
                .trim();
            if name.is_empty() {
                return Err(ConfigError::at(line, "empty section name"));
            }
            section = Some(name.to_ascii_lowercase());
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| ConfigError::at(line, format!("expected `key = value`, got `{content}`")))?;
        let key = key.trim().to_ascii_lowercase();
        if key.is_empty() {
            return Err(ConfigError::at(line, "empty key"));
        }
        let section = section
            .clone()
            .ok_or_else(|| ConfigError::at(line, format!("key `{key}` outside of any section")))?;
        if let Some(prev) = entries.iter().find(|e| e.section == section && e.key == key) {
            return Err(ConfigError::at(
                line,
                format!("duplicate key `{key}` (first set on line {})", prev.line),
            ));
        }
        entries.push(Entry {
            section,
            key,
            value: value.trim().to_string(),
            line,
        });
    }
    Ok(entries)
}

fn strip_comment(line: &str) -> &str {
    match line.find(['#', ';']) {
        Some(i) => &line[..i],
        None => line,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_comments() {
        let text = "# header\n[Fleet]\ntrucks = 60 ; inline\n\n[simulation]\nseed=7\n";
        let e = read(text).unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!((e[0].section.as_str(), e[0].key.as_str(), e[0].value.as_str()), ("fleet", "trucks", "60"));
        assert_eq!(e[0].line, 3);
        assert_eq!(e[1].line, 6);
    }

    #[test]
    fn errors_carry_lines() {
        assert_eq!(read("trucks = 1").unwrap_err().line, Some(1));
        assert_eq!(read("[fleet]\n\ntrucks 60").unwrap_err().line, Some(3));
        assert_eq!(read("[fleet]\na=1\na=2").unwrap_err().line, Some(3));
        assert_eq!(read("[fleet").unwrap_err().line, Some(1));
    }
}
