//! Typed in-memory model of the mapping dialect: a document is a set of
//! mapping rules (triples maps) over logical sources, plus the function
//! maps they reference. Everything is immutable after construction and
//! carries absolute IRIs only.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::iri::{vocab, Iri};

/// Default base for documents without a `@base` directive.
pub const DEFAULT_BASE: &str = "http://example.com/base";

/// Prefixes every document carries so serialized output is always
/// self-contained. Rebinding them is rejected at parse time.
pub const RESERVED_PREFIXES: [(&str, &str); 5] = [
    ("rr", vocab::RR),
    ("rml", vocab::RML),
    ("ql", vocab::QL),
    ("fnml", vocab::FNML),
    ("fno", vocab::FNO),
];

/// A parsed mapping document: the rule set of one data integration system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingDocument {
    pub base: String,
    /// prefix -> namespace IRI, used only for serialization.
    pub prefixes: BTreeMap<String, String>,
    pub triples_maps: Vec<TriplesMap>,
    pub function_maps: Vec<FunctionMap>,
}

impl MappingDocument {
    pub fn new(base: impl Into<String>) -> Self {
        let mut prefixes = BTreeMap::new();
        for (prefix, ns) in RESERVED_PREFIXES {
            prefixes.insert(String::from(prefix), String::from(ns));
        }
        MappingDocument {
            base: base.into(),
            prefixes,
            triples_maps: Vec::new(),
            function_maps: Vec::new(),
        }
    }

    pub fn triples_map(&self, id: &Iri) -> Option<&TriplesMap> {
        self.triples_maps.iter().find(|tm| &tm.id == id)
    }

    pub fn function_map(&self, id: &Iri) -> Option<&FunctionMap> {
        self.function_maps.iter().find(|fm| &fm.id == id)
    }

    /// Ids of function maps referenced from a subject or object position,
    /// in document order, each listed once.
    pub fn referenced_function_maps(&self) -> Vec<Iri> {
        let mut seen: Vec<Iri> = Vec::new();
        for tm in &self.triples_maps {
            let mut push = |id: &Iri| {
                if !seen.contains(id) {
                    seen.push(id.clone());
                }
            };
            if let SubjectSpec::FunctionRef(id) = &tm.subject {
                push(id);
            }
            for pom in &tm.predicate_object_maps {
                if let ObjectSpec::FunctionRef(id) = &pom.object {
                    push(id);
                }
            }
        }
        seen
    }
}

/// One mapping rule: binds a logical source to a subject generator and a
/// list of predicate/object generators.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriplesMap {
    pub id: Iri,
    pub source: SourceDescriptor,
    pub subject: SubjectSpec,
    pub predicate_object_maps: Vec<PredicateObjectMap>,
}

/// Where a logical source's rows come from.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, serde::Serialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum SourceDescriptor {
    /// A CSV file with a header row, located relative to a sources root.
    CsvFile { path: String },
    /// A SELECT query against a relational backend. The connection string
    /// names an embedded single-file database.
    SqlQuery { connection: String, query: String },
    /// Representable but not executable; rejected at rewrite and
    /// materialization time.
    Unsupported {
        source: String,
        formulation: Formulation,
        iterator: Option<String>,
    },
}

impl SourceDescriptor {
    /// Canonical key used to resolve a descriptor to loaded rows.
    pub fn key(&self) -> String {
        match self {
            SourceDescriptor::CsvFile { path } => format!("csv:{path}"),
            SourceDescriptor::SqlQuery { connection, query } => {
                format!("sql:{connection}:{query}")
            }
            SourceDescriptor::Unsupported { source, formulation, .. } => {
                format!("unsupported:{formulation}:{source}")
            }
        }
    }

    pub fn formulation(&self) -> Formulation {
        match self {
            SourceDescriptor::CsvFile { .. } => Formulation::Csv,
            SourceDescriptor::SqlQuery { .. } => Formulation::Sql,
            SourceDescriptor::Unsupported { formulation, .. } => *formulation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Formulation {
    Csv,
    Sql,
    XPath,
    JsonPath,
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Formulation::Csv => "CSV",
            Formulation::Sql => "SQL",
            Formulation::XPath => "XPath",
            Formulation::JsonPath => "JSONPath",
        })
    }
}

/// Subject generator of a triples map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SubjectSpec {
    Term(TermMap),
    FunctionRef(Iri),
    Constant(Iri),
}

/// One predicate/object generator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredicateObjectMap {
    pub predicate: PredicateSpec,
    pub object: ObjectSpec,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PredicateSpec {
    Constant(Iri),
    Term(TermMap),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ObjectSpec {
    Term(TermMap),
    FunctionRef(Iri),
    Ref(RefObjectMap),
    Constant(ConstTerm),
}

/// A template, attribute reference, or constant generating one RDF term per
/// source row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TermMap {
    pub form: TermForm,
    /// Explicit override of the position-dependent default.
    pub term_type: Option<TermType>,
    pub datatype: Option<Iri>,
    pub language: Option<String>,
}

impl TermMap {
    pub fn template(template: Template) -> Self {
        TermMap { form: TermForm::Template(template), term_type: None, datatype: None, language: None }
    }

    pub fn reference(attr: impl Into<String>) -> Self {
        TermMap { form: TermForm::Reference(attr.into()), term_type: None, datatype: None, language: None }
    }

    pub fn constant(term: ConstTerm) -> Self {
        TermMap { form: TermForm::Constant(term), term_type: None, datatype: None, language: None }
    }

    /// Attribute names this term map reads, in order of first mention.
    pub fn referenced_attributes(&self) -> Vec<&str> {
        match &self.form {
            TermForm::Template(t) => t.placeholders().collect(),
            TermForm::Reference(attr) => alloc::vec![attr.as_str()],
            TermForm::Constant(_) => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TermForm {
    Template(Template),
    Reference(String),
    Constant(ConstTerm),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermType {
    Iri,
    Literal,
}

/// A constant RDF term written directly in the mapping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConstTerm {
    Iri(Iri),
    Literal {
        lexical: String,
        datatype: Option<Iri>,
        language: Option<String>,
    },
}

/// A string template with `{attribute}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    raw: String,
    parts: Vec<TemplatePart>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TemplatePart {
    Text(String),
    Placeholder(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateError(pub String);

impl fmt::Display for TemplateError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid template: {}", self.0)
    }
}

impl Template {
    /// Parse a template. `\{`, `\}` and `\\` escape the delimiters; at least
    /// one placeholder is required.
    pub fn parse(raw: &str) -> Result<Self, TemplateError> {
        let mut parts = Vec::new();
        let mut text = String::new();
        let mut chars = raw.chars();
        let mut saw_placeholder = false;
        while let Some(c) = chars.next() {
            match c {
                '\\' => match chars.next() {
                    Some(esc @ ('{' | '}' | '\\')) => text.push(esc),
                    _ => return Err(TemplateError(String::from("dangling escape"))),
                },
                '{' => {
                    if !text.is_empty() {
                        parts.push(TemplatePart::Text(core::mem::take(&mut text)));
                    }
                    let mut name = String::new();
                    loop {
                        match chars.next() {
                            Some('}') => break,
                            Some('{') => {
                                return Err(TemplateError(String::from("nested placeholder")))
                            }
                            Some(c) => name.push(c),
                            None => {
                                return Err(TemplateError(String::from("unclosed placeholder")))
                            }
                        }
                    }
                    if name.is_empty() {
                        return Err(TemplateError(String::from("empty placeholder")));
                    }
                    saw_placeholder = true;
                    parts.push(TemplatePart::Placeholder(name));
                }
                '}' => return Err(TemplateError(String::from("unmatched '}'"))),
                c => text.push(c),
            }
        }
        if !text.is_empty() {
            parts.push(TemplatePart::Text(text));
        }
        if !saw_placeholder {
            return Err(TemplateError(String::from("no placeholder")));
        }
        Ok(Template { raw: String::from(raw), parts })
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn parts(&self) -> &[TemplatePart] {
        &self.parts
    }

    pub fn placeholders(&self) -> impl Iterator<Item = &str> {
        self.parts.iter().filter_map(|p| match p {
            TemplatePart::Placeholder(name) => Some(name.as_str()),
            TemplatePart::Text(_) => None,
        })
    }
}

/// An equi-join to the subject of another triples map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefObjectMap {
    pub parent: Iri,
    pub join: Vec<JoinCondition>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinCondition {
    pub child: JoinKey,
    pub parent: JoinKey,
}

/// A join key: an attribute name, or (grammar-valid but unsupported) a
/// function map reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum JoinKey {
    Attribute(String),
    FunctionRef(Iri),
}

/// A declared transformation over source attributes, referenced from term
/// positions by id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionMap {
    pub id: Iri,
    /// Name IRI matched against the function registry.
    pub function: Iri,
    pub output_predicate: Iri,
    pub source: SourceDescriptor,
    pub parameters: Vec<FunctionParam>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionParam {
    pub predicate: Iri,
    pub value: ParamValue,
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParamValue {
    Reference(String),
    Constant(ConstTerm),
    /// Nested function application; representable, always rejected.
    FunctionRef(Iri),
}

/// Derive a default output predicate from a function name IRI.
pub fn default_output_predicate(function: &Iri) -> Iri {
    if function.as_str().contains('#') {
        Iri::new(format!("{}-output", function.as_str()))
    } else {
        Iri::new(format!("{}#output", function.as_str()))
    }
}

/// A structural well-formedness violation. Diagnostics are values; whether
/// they abort an operation depends on the caller.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Diagnostic {
    DuplicateTriplesMap(Iri),
    DuplicateFunctionMap(Iri),
    UnresolvedTriplesMap { referenced_from: Iri, missing: Iri },
    UnresolvedFunctionMap { referenced_from: Iri, missing: Iri },
    NestedFunction { function_map: Iri, parameter: Iri },
    NoParameters(Iri),
    UnsupportedSource { owner: Iri, formulation: Formulation },
    EmptyJoin { child: Iri, parent: Iri },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::DuplicateTriplesMap(id) => write!(f, "duplicate triples map id <{id}>"),
            Diagnostic::DuplicateFunctionMap(id) => write!(f, "duplicate function map id <{id}>"),
            Diagnostic::UnresolvedTriplesMap { referenced_from, missing } => write!(
                f,
                "<{referenced_from}> references missing triples map <{missing}>"
            ),
            Diagnostic::UnresolvedFunctionMap { referenced_from, missing } => write!(
                f,
                "<{referenced_from}> references missing function map <{missing}>"
            ),
            Diagnostic::NestedFunction { function_map, parameter } => write!(
                f,
                "unsupported construct: nested function in parameter <{parameter}> of <{function_map}>"
            ),
            Diagnostic::NoParameters(id) => write!(f, "function map <{id}> has no parameters"),
            Diagnostic::UnsupportedSource { owner, formulation } => {
                write!(f, "unsupported {formulation} logical source on <{owner}>")
            }
            Diagnostic::EmptyJoin { child, parent } => write!(
                f,
                "join from <{child}> to <{parent}> over a different source needs at least one condition"
            ),
        }
    }
}

impl Diagnostic {
    /// Fatal diagnostics make a document unusable for rewriting or
    /// materialization; the rest are warnings about representable-but-
    /// rejected constructs.
    pub fn is_fatal(&self) -> bool {
        matches!(
            self,
            Diagnostic::DuplicateTriplesMap(_)
                | Diagnostic::DuplicateFunctionMap(_)
                | Diagnostic::UnresolvedTriplesMap { .. }
                | Diagnostic::UnresolvedFunctionMap { .. }
        )
    }
}

/// Check every structural invariant of the document; empty result iff the
/// document is well-formed.
pub fn validate_document(doc: &MappingDocument) -> Vec<Diagnostic> {
    let mut out = Vec::new();

    for (idx, tm) in doc.triples_maps.iter().enumerate() {
        if doc.triples_maps[..idx].iter().any(|other| other.id == tm.id) {
            out.push(Diagnostic::DuplicateTriplesMap(tm.id.clone()));
        }
    }
    for (idx, fm) in doc.function_maps.iter().enumerate() {
        if doc.function_maps[..idx].iter().any(|other| other.id == fm.id) {
            out.push(Diagnostic::DuplicateFunctionMap(fm.id.clone()));
        }
    }

    for tm in &doc.triples_maps {
        if let SubjectSpec::FunctionRef(id) = &tm.subject {
            if doc.function_map(id).is_none() {
                out.push(Diagnostic::UnresolvedFunctionMap {
                    referenced_from: tm.id.clone(),
                    missing: id.clone(),
                });
            }
        }
        for pom in &tm.predicate_object_maps {
            match &pom.object {
                ObjectSpec::FunctionRef(id) => {
                    if doc.function_map(id).is_none() {
                        out.push(Diagnostic::UnresolvedFunctionMap {
                            referenced_from: tm.id.clone(),
                            missing: id.clone(),
                        });
                    }
                }
                ObjectSpec::Ref(rom) => {
                    match doc.triples_map(&rom.parent) {
                        None => out.push(Diagnostic::UnresolvedTriplesMap {
                            referenced_from: tm.id.clone(),
                            missing: rom.parent.clone(),
                        }),
                        Some(parent) => {
                            if rom.join.is_empty() && parent.source != tm.source {
                                out.push(Diagnostic::EmptyJoin {
                                    child: tm.id.clone(),
                                    parent: rom.parent.clone(),
                                });
                            }
                        }
                    }
                }
                ObjectSpec::Term(_) | ObjectSpec::Constant(_) => {}
            }
        }
        if let SourceDescriptor::Unsupported { formulation, .. } = &tm.source {
            out.push(Diagnostic::UnsupportedSource {
                owner: tm.id.clone(),
                formulation: *formulation,
            });
        }
    }

    for fm in &doc.function_maps {
        if fm.parameters.is_empty() {
            out.push(Diagnostic::NoParameters(fm.id.clone()));
        }
        for param in &fm.parameters {
            if let ParamValue::FunctionRef(_) = param.value {
                out.push(Diagnostic::NestedFunction {
                    function_map: fm.id.clone(),
                    parameter: param.predicate.clone(),
                });
            }
        }
        if let SourceDescriptor::Unsupported { formulation, .. } = &fm.source {
            out.push(Diagnostic::UnsupportedSource {
                owner: fm.id.clone(),
                formulation: *formulation,
            });
        }
    }

    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_parsing() {
        let t = Template::parse("http://ex/mut/{GENOMIC_MUTATION_ID}").unwrap();
        assert_eq!(t.placeholders().collect::<Vec<_>>(), ["GENOMIC_MUTATION_ID"]);
        let t = Template::parse("{a}-{b}").unwrap();
        assert_eq!(t.placeholders().collect::<Vec<_>>(), ["a", "b"]);
        let t = Template::parse("\\{x\\}{attr}").unwrap();
        assert_eq!(t.parts()[0], TemplatePart::Text(String::from("{x}")));
        assert!(Template::parse("no placeholder").is_err());
        assert!(Template::parse("{unclosed").is_err());
        assert!(Template::parse("{}").is_err());
    }

    #[test]
    fn local_names() {
        assert_eq!(Iri::new("http://ex/base#TriplesMap1").local_name(), "TriplesMap1");
        assert_eq!(Iri::new("http://ex/base/FunctionMap1").local_name(), "FunctionMap1");
    }

    #[test]
    fn validate_flags_unresolved_parent() {
        let mut doc = MappingDocument::new(DEFAULT_BASE);
        doc.triples_maps.push(TriplesMap {
            id: Iri::new("http://ex/base#TM1"),
            source: SourceDescriptor::CsvFile { path: String::from("s.csv") },
            subject: SubjectSpec::Constant(Iri::new("http://ex/base#s")),
            predicate_object_maps: alloc::vec![PredicateObjectMap {
                predicate: PredicateSpec::Constant(Iri::new("http://ex/p")),
                object: ObjectSpec::Ref(RefObjectMap {
                    parent: Iri::new("http://ex/base#Missing"),
                    join: Vec::new(),
                }),
            }],
        });
        let diags = validate_document(&doc);
        assert_eq!(diags.len(), 1);
        assert!(matches!(diags[0], Diagnostic::UnresolvedTriplesMap { .. }));
        assert!(diags[0].is_fatal());
    }
}
