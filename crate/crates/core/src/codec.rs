//! Line-format helpers shared by every on-disk and on-wire record.
//!
//! All records are `|`-separated UTF-8 lines. Free-text fields (location
//! labels, personal data) are percent-encoded so that they never contain the
//! separator, a newline or a space.

use percent_encoding::{percent_decode_str, utf8_percent_encode, AsciiSet, CONTROLS};

use crate::error::ParseError;

/// Bytes escaped in free-text fields.
const FIELD: &AsciiSet = &CONTROLS.add(b'|').add(b'%').add(b' ').add(b',');

pub fn encode_field(raw: &str) -> String {
    utf8_percent_encode(raw, FIELD).to_string()
}

pub fn decode_field(encoded: &str) -> Result<String, ParseError> {
    percent_decode_str(encoded)
        .decode_utf8()
        .map(|s| s.into_owned())
        .map_err(|_| ParseError::new(format!("invalid percent-encoding in {encoded:?}")))
}

/// Splits a record line and checks its leading tag and field count.
pub fn split_record<'a>(line: &'a str, tag: &str, fields: usize) -> Result<Vec<&'a str>, ParseError> {
    let parts: Vec<&str> = line.split('|').collect();
    if parts.first() != Some(&tag) {
        return Err(ParseError::new(format!("expected `{tag}|` record, got {line:?}")));
    }
    if parts.len() != fields {
        return Err(ParseError::new(format!(
            "`{tag}` record has {} fields, expected {fields}",
            parts.len()
        )));
    }
    Ok(parts)
}

pub fn parse_num<T: std::str::FromStr>(field: &str, what: &str) -> Result<T, ParseError> {
    field
        .parse()
        .map_err(|_| ParseError::new(format!("invalid {what}: {field:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn escapes_separators() {
        assert_eq!(encode_field("on the walk"), "on%20the%20walk");
        assert_eq!(encode_field("a|b,c%"), "a%7Cb%2Cc%25");
    }

    #[test]
    fn record_shape_is_checked() {
        assert!(split_record("policy|1|3|600", "policy", 4).is_ok());
        assert!(split_record("policy|1|3", "policy", 4).is_err());
        assert!(split_record("entry|1|3|600", "policy", 4).is_err());
    }

    proptest! {
        #[test]
        fn field_round_trip(s in "\\PC*") {
            let enc = encode_field(&s);
            prop_assert!(!enc.contains('|') && !enc.contains(' ') && !enc.contains('\n'));
            prop_assert_eq!(decode_field(&enc).unwrap(), s);
        }
    }
}
