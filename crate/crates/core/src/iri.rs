//! IRI values and the small amount of IRI algebra the engine needs:
//! scheme detection, base-relative resolution, and percent-encoding of
//! substituted values in IRI positions.

use alloc::string::String;
use core::fmt;

use serde::Serialize;

/// An absolute IRI.
///
/// The parser expands every prefixed or relative name before any model
/// value is constructed, so downstream code may assume absoluteness.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct Iri(String);

impl Iri {
    pub fn new(value: impl Into<String>) -> Self {
        Iri(value.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// The segment after the last `#` or `/`, used for deterministic names
    /// of generated sources and mapping rules.
    pub fn local_name(&self) -> &str {
        match self.0.rfind(['#', '/']) {
            Some(idx) => &self.0[idx + 1..],
            None => &self.0,
        }
    }
}

impl fmt::Display for Iri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Iri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}>", self.0)
    }
}

impl From<&str> for Iri {
    fn from(value: &str) -> Self {
        Iri::new(value)
    }
}

impl AsRef<str> for Iri {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// True when `value` starts with an RFC 3987 scheme (`letter (letter | digit
/// | "+" | "-" | ".")* ":"`).
pub fn has_scheme(value: &str) -> bool {
    let mut chars = value.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() => {}
        _ => return false,
    }
    for c in chars {
        match c {
            ':' => return true,
            c if c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.') => {}
            _ => return false,
        }
    }
    false
}

/// Resolve `reference` against `base`.
///
/// Handles the forms the mapping dialect produces: absolute IRIs pass
/// through, fragment references replace the base fragment, and other
/// relative references replace the last path segment.
pub fn resolve(base: &str, reference: &str) -> String {
    if has_scheme(reference) {
        return String::from(reference);
    }
    let mut out = String::new();
    if let Some(frag) = reference.strip_prefix('#') {
        out.push_str(strip_fragment(base));
        out.push('#');
        out.push_str(frag);
        return out;
    }
    let base = strip_fragment(base);
    // Replace everything after the last slash of the base path.
    let cut = match base.find("://") {
        Some(scheme_end) => match base[scheme_end + 3..].rfind('/') {
            Some(idx) => scheme_end + 3 + idx + 1,
            None => base.len(),
        },
        None => match base.rfind([':', '/']) {
            Some(idx) => idx + 1,
            None => base.len(),
        },
    };
    out.push_str(&base[..cut]);
    if !out.ends_with(['/', ':']) {
        out.push('/');
    }
    out.push_str(reference);
    out
}

fn strip_fragment(iri: &str) -> &str {
    match iri.find('#') {
        Some(idx) => &iri[..idx],
        None => iri,
    }
}

/// Percent-encode every byte outside the RFC 3986 unreserved set.
pub fn percent_encode(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    for byte in value.bytes() {
        if byte.is_ascii_alphanumeric() || matches!(byte, b'-' | b'.' | b'_' | b'~') {
            out.push(byte as char);
        } else {
            const HEX: &[u8; 16] = b"0123456789ABCDEF";
            out.push('%');
            out.push(HEX[(byte >> 4) as usize] as char);
            out.push(HEX[(byte & 0x0f) as usize] as char);
        }
    }
    out
}

/// Turn a raw cell value into an IRI: absolute values pass through, anything
/// else is percent-encoded and attached to the base as a fragment.
pub fn iri_from_value(base: &str, value: &str) -> String {
    if has_scheme(value) {
        return String::from(value);
    }
    let mut out = String::from(strip_fragment(base));
    if !out.ends_with(['/', '#']) {
        out.push('#');
    }
    out.push_str(&percent_encode(value));
    out
}

/// Namespace IRIs of the vocabulary the mapping dialect uses.
pub mod vocab {
    pub const RR: &str = "http://www.w3.org/ns/r2rml#";
    pub const RML: &str = "http://semweb.mmlab.be/ns/rml#";
    pub const QL: &str = "http://semweb.mmlab.be/ns/ql#";
    pub const FNML: &str = "http://semweb.mmlab.be/ns/fnml#";
    pub const FNO: &str = "https://w3id.org/function/ontology#";
    pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scheme_detection() {
        assert!(has_scheme("http://example.com/x"));
        assert!(has_scheme("urn:x"));
        assert!(!has_scheme("example.com/x"));
        assert!(!has_scheme("#frag"));
        assert!(!has_scheme("1:2"));
        assert!(!has_scheme(""));
    }

    #[test]
    fn fragment_resolution() {
        assert_eq!(resolve("http://ex.org/base", "#TM1"), "http://ex.org/base#TM1");
        assert_eq!(resolve("http://ex.org/base#old", "#TM1"), "http://ex.org/base#TM1");
        assert_eq!(resolve("http://ex.org/base", "http://other/x"), "http://other/x");
    }

    #[test]
    fn path_resolution() {
        assert_eq!(resolve("http://ex.org/a/b", "c"), "http://ex.org/a/c");
        assert_eq!(resolve("urn:doc", "c"), "urn:c");
    }

    #[test]
    fn encoding() {
        assert_eq!(percent_encode("primary site"), "primary%20site");
        assert_eq!(percent_encode("a~b_c-d.e"), "a~b_c-d.e");
        assert_eq!(percent_encode("ü"), "%C3%BC");
    }

    #[test]
    fn value_to_iri() {
        assert_eq!(
            iri_from_value("http://ex.org/base", "BCR_1001C~T"),
            "http://ex.org/base#BCR_1001C~T"
        );
        assert_eq!(iri_from_value("http://ex.org/base", "http://x/y"), "http://x/y");
    }
}
