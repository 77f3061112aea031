//! Reference materializer: evaluates a mapping document (with or without
//! function references) over loaded sources and produces the knowledge
//! graph as a triple set. This is the equivalence oracle for the rewrite
//! engine — the original and rewritten systems must materialize to the
//! identical set.
//!
//! Joins are hash joins keyed on the child attribute tuple; NULL never
//! matches NULL. Duplicate triples collapse by set semantics.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use hashbrown::HashMap;

use crate::iri::{self, Iri};
use crate::model::{
    validate_document, ConstTerm, Diagnostic, FunctionMap, JoinKey, MappingDocument, ObjectSpec,
    ParamValue, PredicateSpec, SourceDescriptor, SubjectSpec, Template, TermForm, TermMap,
    TermType, TriplesMap,
};
use crate::registry::{FunctionError, FunctionRegistry};
use crate::relation::{Cell, Relation, RelationError, SourceSet};

/// One RDF term.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Term {
    Iri(String),
    Literal { lexical: String, datatype: Option<String>, language: Option<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct RdfTriple {
    pub subject: String,
    pub predicate: String,
    pub object: Term,
}

/// Set-semantics triple collection; equality is order-insensitive.
pub type TripleSet = BTreeSet<RdfTriple>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MaterializeError {
    Invalid(Vec<Diagnostic>),
    MissingSource(String),
    Relation(RelationError),
    Function(FunctionError),
    UnsupportedConstruct(String),
}

impl fmt::Display for MaterializeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaterializeError::Invalid(diags) => {
                write!(f, "invalid document:")?;
                for d in diags {
                    write!(f, " {d};")?;
                }
                Ok(())
            }
            MaterializeError::MissingSource(key) => write!(f, "no rows loaded for source {key}"),
            MaterializeError::Relation(e) => write!(f, "{e}"),
            MaterializeError::Function(e) => write!(f, "{e}"),
            MaterializeError::UnsupportedConstruct(what) => {
                write!(f, "unsupported construct: {what}")
            }
        }
    }
}

impl core::error::Error for MaterializeError {}

impl From<RelationError> for MaterializeError {
    fn from(e: RelationError) -> Self {
        MaterializeError::Relation(e)
    }
}

impl From<FunctionError> for MaterializeError {
    fn from(e: FunctionError) -> Self {
        MaterializeError::Function(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermPosition {
    Subject,
    Predicate,
    Object,
}

/// Expand a template against one row. NULL in any placeholder yields NULL.
/// In IRI positions each substituted value is percent-encoded; the template
/// scaffold is kept verbatim.
pub fn expand_template(
    template: &Template,
    attributes: &[String],
    row: &[Cell],
    iri_safe: bool,
) -> Result<Option<String>, RelationError> {
    let mut out = String::new();
    for part in template.parts() {
        match part {
            crate::model::TemplatePart::Text(text) => out.push_str(text),
            crate::model::TemplatePart::Placeholder(attr) => {
                let idx = attributes
                    .iter()
                    .position(|a| a == attr)
                    .ok_or_else(|| RelationError::UnknownAttribute(attr.clone()))?;
                match &row[idx] {
                    None => return Ok(None),
                    Some(value) => {
                        if iri_safe {
                            out.push_str(&iri::percent_encode(value));
                        } else {
                            out.push_str(value);
                        }
                    }
                }
            }
        }
    }
    Ok(Some(out))
}

/// Effective term type of a term map at a position, before explicit
/// overrides. Templates in object position produce IRIs only when the
/// template text starts with a scheme; references default to literals.
pub fn default_term_type(position: TermPosition, form: &TermForm) -> TermType {
    match position {
        TermPosition::Subject | TermPosition::Predicate => TermType::Iri,
        TermPosition::Object => match form {
            TermForm::Template(t) => {
                if iri::has_scheme(t.raw()) {
                    TermType::Iri
                } else {
                    TermType::Literal
                }
            }
            TermForm::Reference(_) => TermType::Literal,
            TermForm::Constant(_) => TermType::Iri,
        },
    }
}

/// A term map compiled against a concrete relation: attribute names resolved
/// to column indices, the effective term type fixed.
struct CompiledTerm {
    form: CompiledForm,
    term_type: TermType,
    datatype: Option<String>,
    language: Option<String>,
}

enum CompiledForm {
    Template(Template),
    Reference(usize),
    Constant(Term),
}

impl CompiledTerm {
    fn compile(
        term: &TermMap,
        position: TermPosition,
        rel: &Relation,
    ) -> Result<Self, MaterializeError> {
        let form = match &term.form {
            TermForm::Template(t) => {
                for attr in t.placeholders() {
                    rel.attribute_index(attr)?;
                }
                CompiledForm::Template(t.clone())
            }
            TermForm::Reference(attr) => CompiledForm::Reference(rel.attribute_index(attr)?),
            TermForm::Constant(c) => CompiledForm::Constant(const_to_term(c)),
        };
        Ok(CompiledTerm {
            term_type: term.term_type.unwrap_or_else(|| default_term_type(position, &term.form)),
            datatype: term.datatype.as_ref().map(|d| d.as_str().to_owned()),
            language: term.language.clone(),
            form,
        })
    }

    fn eval(&self, rel: &Relation, row: &[Cell], base: &str) -> Result<Option<Term>, MaterializeError> {
        let raw = match &self.form {
            CompiledForm::Constant(term) => return Ok(Some(term.clone())),
            CompiledForm::Template(t) => {
                expand_template(t, rel.attributes(), row, self.term_type == TermType::Iri)?
            }
            CompiledForm::Reference(idx) => row[*idx].clone(),
        };
        Ok(raw.map(|value| self.build(value, base)))
    }

    fn build(&self, value: String, base: &str) -> Term {
        match self.term_type {
            TermType::Iri => Term::Iri(iri::iri_from_value(base, &value)),
            TermType::Literal => Term::Literal {
                lexical: value,
                datatype: self.datatype.clone(),
                language: self.language.clone(),
            },
        }
    }
}

fn const_to_term(c: &ConstTerm) -> Term {
    match c {
        ConstTerm::Iri(iri) => Term::Iri(iri.as_str().to_owned()),
        ConstTerm::Literal { lexical, datatype, language } => Term::Literal {
            lexical: lexical.clone(),
            datatype: datatype.as_ref().map(|d| d.as_str().to_owned()),
            language: language.clone(),
        },
    }
}

/// Per-row argument source for a compiled function call.
enum ArgSource {
    Attr(usize),
    Const(String),
}

struct CompiledCall {
    function: Iri,
    args: Vec<ArgSource>,
}

impl CompiledCall {
    /// Match mapping parameters to the registered signature by parameter
    /// predicate, then resolve attribute references against the relation.
    fn compile(
        fm: &FunctionMap,
        registry: &FunctionRegistry,
        rel: &Relation,
    ) -> Result<Self, MaterializeError> {
        let signature = registry.signature(&fm.function)?.clone();
        for param in &fm.parameters {
            if !signature.params.iter().any(|p| p.predicate == param.predicate) {
                return Err(FunctionError::ParameterMismatch {
                    function: fm.function.clone(),
                    predicate: param.predicate.clone(),
                }
                .into());
            }
        }
        let mut args = Vec::with_capacity(signature.params.len());
        for spec in &signature.params {
            let supplied = fm.parameters.iter().find(|p| p.predicate == spec.predicate);
            match supplied {
                None if spec.required => {
                    return Err(FunctionError::ParameterMismatch {
                        function: fm.function.clone(),
                        predicate: spec.predicate.clone(),
                    }
                    .into())
                }
                None => args.push(ArgSource::Const(String::new())),
                Some(param) => match &param.value {
                    ParamValue::Reference(attr) => {
                        args.push(ArgSource::Attr(rel.attribute_index(attr)?))
                    }
                    ParamValue::Constant(ConstTerm::Iri(iri)) => {
                        args.push(ArgSource::Const(iri.as_str().to_owned()))
                    }
                    ParamValue::Constant(ConstTerm::Literal { lexical, .. }) => {
                        args.push(ArgSource::Const(lexical.clone()))
                    }
                    ParamValue::FunctionRef(id) => {
                        return Err(MaterializeError::UnsupportedConstruct(format!(
                            "nested function <{id}> as a parameter of <{}>",
                            fm.id
                        )))
                    }
                },
            }
        }
        Ok(CompiledCall { function: fm.function.clone(), args })
    }

    fn eval(
        &self,
        registry: &FunctionRegistry,
        row: &[Cell],
    ) -> Result<Option<String>, MaterializeError> {
        let mut args: Vec<Option<&str>> = Vec::with_capacity(self.args.len());
        for source in &self.args {
            match source {
                ArgSource::Attr(idx) => args.push(row[*idx].as_deref()),
                ArgSource::Const(value) => args.push(Some(value.as_str())),
            }
        }
        Ok(registry.evaluate(&self.function, &args)?)
    }
}

/// Evaluate the document over the loaded sources into its triple set.
///
/// Function references are executed directly (this is the baseline path);
/// a rewritten document simply contains none.
pub fn materialize(
    doc: &MappingDocument,
    sources: &SourceSet,
    registry: &FunctionRegistry,
) -> Result<TripleSet, MaterializeError> {
    let fatal: Vec<Diagnostic> =
        validate_document(doc).into_iter().filter(Diagnostic::is_fatal).collect();
    if !fatal.is_empty() {
        return Err(MaterializeError::Invalid(fatal));
    }

    let mut engine = Engine { doc, sources, registry, subjects: BTreeMap::new() };

    // Subject terms are computed once per rule and reused both for the
    // rule's own triples and as join-parent values.
    for tm in &doc.triples_maps {
        engine.subjects_for(tm)?;
    }

    let mut out = TripleSet::new();
    for tm in &doc.triples_maps {
        engine.emit(tm, &mut out)?;
    }
    Ok(out)
}

struct Engine<'a> {
    doc: &'a MappingDocument,
    sources: &'a SourceSet,
    registry: &'a FunctionRegistry,
    subjects: BTreeMap<Iri, Vec<Option<Term>>>,
}

impl<'a> Engine<'a> {
    fn relation(&self, source: &SourceDescriptor, owner: &Iri) -> Result<&'a Relation, MaterializeError> {
        if let SourceDescriptor::Unsupported { formulation, .. } = source {
            return Err(MaterializeError::UnsupportedConstruct(format!(
                "{formulation} logical source on <{owner}>"
            )));
        }
        self.sources
            .get(source)
            .ok_or_else(|| MaterializeError::MissingSource(source.key()))
    }

    fn subjects_for(&mut self, tm: &TriplesMap) -> Result<(), MaterializeError> {
        let rel = self.relation(&tm.source, &tm.id)?;
        let base = &self.doc.base;
        let terms = match &tm.subject {
            SubjectSpec::Constant(iri) => {
                alloc::vec![Some(Term::Iri(iri.as_str().to_owned())); rel.len()]
            }
            SubjectSpec::Term(term) => {
                let compiled = CompiledTerm::compile(term, TermPosition::Subject, rel)?;
                let mut out = Vec::with_capacity(rel.len());
                for row in rel.rows() {
                    out.push(compiled.eval(rel, row, base)?);
                }
                out
            }
            SubjectSpec::FunctionRef(id) => {
                let fm = self.doc.function_map(id).expect("validated reference");
                let call = CompiledCall::compile(fm, self.registry, rel)?;
                let mut out = Vec::with_capacity(rel.len());
                for row in rel.rows() {
                    let term = call
                        .eval(self.registry, row)?
                        .map(|value| Term::Iri(iri::iri_from_value(base, &value)));
                    out.push(term);
                }
                out
            }
        };
        self.subjects.insert(tm.id.clone(), terms);
        Ok(())
    }

    fn emit(&mut self, tm: &TriplesMap, out: &mut TripleSet) -> Result<(), MaterializeError> {
        if tm.predicate_object_maps.is_empty() {
            return Ok(());
        }
        let rel = self.relation(&tm.source, &tm.id)?;
        let base = self.doc.base.clone();
        let subjects = self.subjects.get(&tm.id).expect("precomputed").clone();

        for pom in &tm.predicate_object_maps {
            let predicate = match &pom.predicate {
                PredicateSpec::Constant(iri) => Predicate::Constant(iri.as_str().to_owned()),
                PredicateSpec::Term(term) => {
                    Predicate::Compiled(CompiledTerm::compile(term, TermPosition::Predicate, rel)?)
                }
            };
            match &pom.object {
                ObjectSpec::Constant(c) => {
                    let object = const_to_term(c);
                    self.emit_rows(rel, &subjects, &predicate, &base, out, |_, _| {
                        Ok(Some(object.clone()))
                    })?;
                }
                ObjectSpec::Term(term) => {
                    let compiled = CompiledTerm::compile(term, TermPosition::Object, rel)?;
                    self.emit_rows(rel, &subjects, &predicate, &base, out, |rel, row| {
                        compiled.eval(rel, row, &base)
                    })?;
                }
                ObjectSpec::FunctionRef(id) => {
                    let fm = self.doc.function_map(id).expect("validated reference");
                    let call = CompiledCall::compile(fm, self.registry, rel)?;
                    self.emit_rows(rel, &subjects, &predicate, &base, out, |_, row| {
                        Ok(call.eval(self.registry, row)?.map(|value| Term::Literal {
                            lexical: value,
                            datatype: None,
                            language: None,
                        }))
                    })?;
                }
                ObjectSpec::Ref(rom) => {
                    let mut child_attrs = Vec::new();
                    let mut parent_attrs = Vec::new();
                    for cond in &rom.join {
                        match (&cond.child, &cond.parent) {
                            (JoinKey::Attribute(c), JoinKey::Attribute(p)) => {
                                child_attrs.push(c.clone());
                                parent_attrs.push(p.clone());
                            }
                            _ => {
                                return Err(MaterializeError::UnsupportedConstruct(format!(
                                    "function map in a join condition of <{}>",
                                    tm.id
                                )))
                            }
                        }
                    }
                    let table = self.parent_table(&rom.parent, &parent_attrs)?;
                    let child_indices = rel.attribute_indices(&child_attrs)?;
                    if child_indices.is_empty() {
                        // Joinless referencing map over the same source:
                        // every child row pairs with every parent subject.
                        let all: Vec<Term> =
                            table.values().flat_map(|terms| terms.iter().cloned()).collect();
                        self.emit_join(rel, &subjects, &predicate, &base, out, |_| Some(&all))?;
                    } else {
                        self.emit_join(rel, &subjects, &predicate, &base, out, |row| {
                            let mut key: Vec<String> = Vec::with_capacity(child_indices.len());
                            for &idx in &child_indices {
                                match &row[idx] {
                                    // NULL never matches NULL.
                                    None => return None,
                                    Some(v) => key.push(v.clone()),
                                }
                            }
                            table.get(&key)
                        })?;
                    }
                }
            }
        }
        Ok(())
    }

    fn emit_rows(
        &self,
        rel: &Relation,
        subjects: &[Option<Term>],
        predicate: &Predicate,
        base: &str,
        out: &mut TripleSet,
        mut object: impl FnMut(&Relation, &[Cell]) -> Result<Option<Term>, MaterializeError>,
    ) -> Result<(), MaterializeError> {
        for (row, subject) in rel.rows().iter().zip(subjects) {
            let Some(subject) = subject else { continue };
            let subject = iri_subject(subject)?;
            let Some(predicate) = predicate.eval(rel, row, base)? else { continue };
            if let Some(object) = object(rel, row)? {
                out.insert(RdfTriple { subject, predicate, object });
            }
        }
        Ok(())
    }

    fn emit_join<'t>(
        &self,
        rel: &Relation,
        subjects: &[Option<Term>],
        predicate: &Predicate,
        base: &str,
        out: &mut TripleSet,
        mut matches: impl FnMut(&[Cell]) -> Option<&'t Vec<Term>>,
    ) -> Result<(), MaterializeError> {
        for (row, subject) in rel.rows().iter().zip(subjects) {
            let Some(subject) = subject else { continue };
            let subject = iri_subject(subject)?;
            let Some(predicate) = predicate.eval(rel, row, base)? else { continue };
            if let Some(terms) = matches(row) {
                for term in terms {
                    out.insert(RdfTriple {
                        subject: subject.clone(),
                        predicate: predicate.clone(),
                        object: term.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Hash table from parent join-key tuples to the parent subject terms of
    /// the matching rows. Rows with a NULL key cell or a NULL subject do not
    /// participate.
    fn parent_table(
        &self,
        parent: &Iri,
        parent_attrs: &[String],
    ) -> Result<HashMap<Vec<String>, Vec<Term>>, MaterializeError> {
        let parent_tm = self.doc.triples_map(parent).expect("validated reference");
        let rel = self.relation(&parent_tm.source, parent)?;
        let indices = rel.attribute_indices(parent_attrs)?;
        let subjects = self.subjects.get(parent).expect("precomputed");
        let mut table: HashMap<Vec<String>, Vec<Term>> = HashMap::new();
        'rows: for (row, subject) in rel.rows().iter().zip(subjects) {
            let Some(subject) = subject else { continue };
            let mut key = Vec::with_capacity(indices.len());
            for &idx in &indices {
                match &row[idx] {
                    None => continue 'rows,
                    Some(v) => key.push(v.clone()),
                }
            }
            let terms = table.entry(key).or_default();
            if !terms.contains(subject) {
                terms.push(subject.clone());
            }
        }
        Ok(table)
    }
}

enum Predicate {
    Constant(String),
    Compiled(CompiledTerm),
}

impl Predicate {
    fn eval(&self, rel: &Relation, row: &[Cell], base: &str) -> Result<Option<String>, MaterializeError> {
        match self {
            Predicate::Constant(iri) => Ok(Some(iri.clone())),
            Predicate::Compiled(term) => match term.eval(rel, row, base)? {
                Some(Term::Iri(iri)) => Ok(Some(iri)),
                Some(Term::Literal { .. }) => Err(MaterializeError::UnsupportedConstruct(
                    "literal in predicate position".to_owned(),
                )),
                None => Ok(None),
            },
        }
    }
}

fn iri_subject(term: &Term) -> Result<String, MaterializeError> {
    match term {
        Term::Iri(iri) => Ok(iri.clone()),
        Term::Literal { lexical, .. } => Err(MaterializeError::UnsupportedConstruct(format!(
            "literal subject \"{lexical}\" on a rule with predicate-object maps"
        ))),
    }
}

// ---------------------------------------------------------------------------
// N-Triples
// ---------------------------------------------------------------------------

fn escape_literal(value: &str, out: &mut String) {
    for c in value.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
}

fn format_term(term: &Term, out: &mut String) {
    match term {
        Term::Iri(iri) => {
            out.push('<');
            out.push_str(iri);
            out.push('>');
        }
        Term::Literal { lexical, datatype, language } => {
            out.push('"');
            escape_literal(lexical, out);
            out.push('"');
            if let Some(dt) = datatype {
                out.push_str("^^<");
                out.push_str(dt);
                out.push('>');
            } else if let Some(lang) = language {
                out.push('@');
                out.push_str(lang);
            }
        }
    }
}

/// Render a triple set as N-Triples text, one triple per line, lines sorted
/// lexicographically for reproducibility.
pub fn format_ntriples(triples: &TripleSet) -> String {
    let mut lines: Vec<String> = Vec::with_capacity(triples.len());
    for triple in triples {
        let mut line = String::new();
        line.push('<');
        line.push_str(&triple.subject);
        line.push_str("> <");
        line.push_str(&triple.predicate);
        line.push_str("> ");
        format_term(&triple.object, &mut line);
        line.push_str(" .");
        lines.push(line);
    }
    lines.sort_unstable();
    let mut out = lines.join("\n");
    if !out.is_empty() {
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NtParseError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for NtParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl core::error::Error for NtParseError {}

/// Parse N-Triples text produced by [`format_ntriples`] (or any plain
/// IRI/literal N-Triples without blank nodes).
pub fn parse_ntriples(text: &str) -> Result<TripleSet, NtParseError> {
    let mut out = TripleSet::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut scanner = NtScanner { rest: line, line: line_no };
        let subject = scanner.iri()?;
        scanner.whitespace();
        let predicate = scanner.iri()?;
        scanner.whitespace();
        let object = scanner.term()?;
        scanner.whitespace();
        scanner.expect('.')?;
        out.insert(RdfTriple { subject, predicate, object });
    }
    Ok(out)
}

struct NtScanner<'a> {
    rest: &'a str,
    line: usize,
}

impl<'a> NtScanner<'a> {
    fn err(&self, message: impl Into<String>) -> NtParseError {
        NtParseError { line: self.line, message: message.into() }
    }

    fn whitespace(&mut self) {
        self.rest = self.rest.trim_start();
    }

    fn expect(&mut self, c: char) -> Result<(), NtParseError> {
        if let Some(rest) = self.rest.strip_prefix(c) {
            self.rest = rest;
            Ok(())
        } else {
            Err(self.err(format!("expected '{c}'")))
        }
    }

    fn iri(&mut self) -> Result<String, NtParseError> {
        self.expect('<')?;
        match self.rest.find('>') {
            Some(end) => {
                let iri = self.rest[..end].to_owned();
                self.rest = &self.rest[end + 1..];
                Ok(iri)
            }
            None => Err(self.err("unterminated IRI")),
        }
    }

    fn term(&mut self) -> Result<Term, NtParseError> {
        if self.rest.starts_with('<') {
            return Ok(Term::Iri(self.iri()?));
        }
        self.expect('"')?;
        let mut lexical = String::new();
        let mut chars = self.rest.char_indices();
        let end = loop {
            let Some((idx, c)) = chars.next() else {
                return Err(self.err("unterminated literal"));
            };
            match c {
                '"' => break idx + 1,
                '\\' => match chars.next() {
                    Some((_, 't')) => lexical.push('\t'),
                    Some((_, 'n')) => lexical.push('\n'),
                    Some((_, 'r')) => lexical.push('\r'),
                    Some((_, '"')) => lexical.push('"'),
                    Some((_, '\\')) => lexical.push('\\'),
                    other => {
                        return Err(self.err(format!("unsupported escape {:?}", other.map(|o| o.1))))
                    }
                },
                c => lexical.push(c),
            }
        };
        self.rest = &self.rest[end..];
        if let Some(rest) = self.rest.strip_prefix("^^") {
            self.rest = rest;
            let datatype = self.iri()?;
            return Ok(Term::Literal { lexical, datatype: Some(datatype), language: None });
        }
        if let Some(rest) = self.rest.strip_prefix('@') {
            let end = rest.find(|c: char| c.is_whitespace()).unwrap_or(rest.len());
            let language = rest[..end].to_owned();
            self.rest = &rest[end..];
            return Ok(Term::Literal { lexical, datatype: None, language: Some(language) });
        }
        Ok(Term::Literal { lexical, datatype: None, language: None })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn template_expansion() {
        let t = Template::parse("http://ex/mut/{GENOMIC_MUTATION_ID}").unwrap();
        let attrs = vec![String::from("GENOMIC_MUTATION_ID")];
        let row = vec![Some(String::from("COSV123"))];
        assert_eq!(
            expand_template(&t, &attrs, &row, true).unwrap().as_deref(),
            Some("http://ex/mut/COSV123")
        );
        let null_row = vec![None];
        assert_eq!(expand_template(&t, &attrs, &null_row, true).unwrap(), None);
    }

    #[test]
    fn template_encodes_values_in_iri_position() {
        let t = Template::parse("http://ex/site/{Primary site}").unwrap();
        let attrs = vec![String::from("Primary site")];
        let row = vec![Some(String::from("primary site"))];
        assert_eq!(
            expand_template(&t, &attrs, &row, true).unwrap().as_deref(),
            Some("http://ex/site/primary%20site")
        );
        assert_eq!(
            expand_template(&t, &attrs, &row, false).unwrap().as_deref(),
            Some("http://ex/site/primary site")
        );
    }

    #[test]
    fn ntriples_roundtrip() {
        let mut set = TripleSet::new();
        set.insert(RdfTriple {
            subject: String::from("http://ex/s"),
            predicate: String::from("http://ex/p"),
            object: Term::Literal {
                lexical: String::from("line\nbreak \"quoted\""),
                datatype: None,
                language: None,
            },
        });
        set.insert(RdfTriple {
            subject: String::from("http://ex/s"),
            predicate: String::from("http://ex/p"),
            object: Term::Iri(String::from("http://ex/o")),
        });
        let text = format_ntriples(&set);
        assert_eq!(parse_ntriples(&text).unwrap(), set);
    }

    #[test]
    fn empty_set_formats_to_empty_text() {
        assert_eq!(format_ntriples(&TripleSet::new()), "");
        assert_eq!(parse_ntriples("").unwrap(), TripleSet::new());
    }
}
