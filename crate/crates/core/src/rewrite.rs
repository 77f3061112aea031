//! The rewrite engine: converts a data integration system whose mapping
//! rules call transformation functions into an equivalent function-free
//! system.
//!
//! Two data-source transformations and two mapping transformations work
//! together:
//!
//! * function materialization — project the input attributes of each
//!   function out of its source, deduplicate, evaluate the function once per
//!   distinct tuple, and store the tuples extended with the output attribute
//!   as a generated source (`output_<fn>`);
//! * source projection — narrow every rule's source to exactly the
//!   attributes the rule reads, again with duplicate removal
//!   (`project_<rule>`);
//! * object-position rewrite — a function object becomes an equi-join (over
//!   the function's input attributes) to a generated rule whose subject
//!   reads the output attribute;
//! * subject-position rewrite — a function subject moves the rule onto the
//!   generated output source and turns each original object into a join
//!   back to the projected source.
//!
//! In `sql-pushdown` mode the generated joins are fused into the SQL text of
//! a single logical source per rule instead of being emitted as join
//! conditions.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::Serialize;

use crate::iri::Iri;
use crate::materialize::{default_term_type, TermPosition};
use crate::model::{
    validate_document, ConstTerm, Diagnostic, FunctionMap, JoinCondition, JoinKey,
    MappingDocument, ObjectSpec, ParamValue, PredicateObjectMap, PredicateSpec, RefObjectMap,
    SourceDescriptor, SubjectSpec, TermMap, TermType, TriplesMap,
};
use crate::registry::{FunctionError, FunctionRegistry};
use crate::relation::{distinct_project, Cell, Relation, RelationError, SourceSet};

/// How the rewritten system is laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewriteMode {
    /// Function materialization, source projection, and join-based mapping
    /// rewrites; generated sources are CSV files.
    Full,
    /// Function materialization and mapping rewrites only; rules keep their
    /// original sources.
    Dtr1Only,
    /// SQL sources only: joins are fused into the logical-source queries of
    /// single rules instead of emitted as join conditions.
    SqlPushdown,
}

impl fmt::Display for RewriteMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RewriteMode::Full => "full",
            RewriteMode::Dtr1Only => "dtr1-only",
            RewriteMode::SqlPushdown => "sql-pushdown",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RewriteError {
    Invalid(Vec<Diagnostic>),
    UnknownFunction(Iri),
    Function(FunctionError),
    /// A rule references a function declared over a different logical
    /// source.
    CrossSourceFunction { function_map: Iri, triples_map: Iri },
    Relation(RelationError),
    MissingSource(String),
    UnsupportedConstruct(String),
    Precondition(String),
}

impl fmt::Display for RewriteError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RewriteError::Invalid(diags) => {
                write!(f, "invalid document:")?;
                for d in diags {
                    write!(f, " {d};")?;
                }
                Ok(())
            }
            RewriteError::UnknownFunction(name) => write!(f, "unknown function <{name}>"),
            RewriteError::Function(e) => write!(f, "{e}"),
            RewriteError::CrossSourceFunction { function_map, triples_map } => write!(
                f,
                "<{triples_map}> references <{function_map}> declared over a different source"
            ),
            RewriteError::Relation(e) => write!(f, "{e}"),
            RewriteError::MissingSource(key) => write!(f, "no rows loaded for source {key}"),
            RewriteError::UnsupportedConstruct(what) => {
                write!(f, "unsupported construct: {what}")
            }
            RewriteError::Precondition(what) => write!(f, "precondition violated: {what}"),
        }
    }
}

impl core::error::Error for RewriteError {}

impl From<RelationError> for RewriteError {
    fn from(e: RelationError) -> Self {
        RewriteError::Relation(e)
    }
}

impl From<FunctionError> for RewriteError {
    fn from(e: FunctionError) -> Self {
        match e {
            FunctionError::Unknown(name) => RewriteError::UnknownFunction(name),
            other => RewriteError::Function(other),
        }
    }
}

/// Why a source was generated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case", rename_all_fields = "snake_case")]
pub enum Provenance {
    /// Distinct function-input tuples extended with the output attribute.
    FunctionOutput { function_map: Iri },
    /// Distinct projection of a rule's referenced attributes.
    Projection { triples_map: Iri },
}

/// A source produced by the rewrite, still in memory. The IO layer persists
/// `relation` at the location `descriptor` points to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedRelation {
    /// Deterministic stem, e.g. `output_FunctionMap1`; file and table names
    /// derive from it.
    pub name: String,
    pub relation: Relation,
    pub descriptor: SourceDescriptor,
    pub origin: SourceDescriptor,
    pub provenance: Provenance,
    /// The defining attributes: function inputs for outputs, the projected
    /// attribute list for projections.
    pub key_attrs: Vec<String>,
}

impl GeneratedRelation {
    pub fn info(&self) -> GeneratedSourceInfo {
        GeneratedSourceInfo {
            name: self.name.clone(),
            descriptor: self.descriptor.clone(),
            origin: self.origin.clone(),
            provenance: self.provenance.clone(),
            attributes: self.relation.attributes().to_vec(),
            key_attrs: self.key_attrs.clone(),
            rows: self.relation.len(),
        }
    }
}

/// Report entry for one generated source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GeneratedSourceInfo {
    pub name: String,
    pub descriptor: SourceDescriptor,
    pub origin: SourceDescriptor,
    pub provenance: Provenance,
    pub attributes: Vec<String>,
    pub key_attrs: Vec<String>,
    pub rows: usize,
}

/// Ledger of what one rewrite did.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RewriteReport {
    pub mode: RewriteMode,
    pub generated_sources: Vec<GeneratedSourceInfo>,
    pub created_maps: Vec<Iri>,
    pub removed_maps: Vec<Iri>,
    /// Function evaluations performed during the rewrite, per function name.
    pub function_eval_counts: BTreeMap<Iri, u64>,
}

/// Result of rewriting one system.
#[derive(Debug, Clone)]
pub struct RewriteOutcome {
    pub document: MappingDocument,
    pub generated: Vec<GeneratedRelation>,
    pub report: RewriteReport,
}

impl RewriteOutcome {
    /// The original sources extended with the generated relations, keyed by
    /// their descriptors — enough to materialize the rewritten document
    /// in memory (except for fused SQL sources, which need a database).
    pub fn extended_sources(&self, base: &SourceSet) -> SourceSet {
        let mut out = base.clone();
        for generated in &self.generated {
            out.insert(&generated.descriptor, generated.relation.clone());
        }
        out
    }
}

/// Name of the attribute holding materialized function results. A source
/// with several functions gets `functionOutput_2`, `functionOutput_3`, ...
pub const OUTPUT_ATTRIBUTE: &str = "functionOutput";

// ---------------------------------------------------------------------------
// Planning
// ---------------------------------------------------------------------------

struct PlannedFunction {
    fm: FunctionMap,
    /// Distinct source attributes feeding the function, in signature order
    /// of first use.
    input_attrs: Vec<String>,
    output_attr: String,
    stem: String,
}

struct Planner<'a> {
    doc: &'a MappingDocument,
    sources: &'a SourceSet,
    registry: &'a FunctionRegistry,
}

impl<'a> Planner<'a> {
    fn relation(&self, source: &SourceDescriptor, owner: &Iri) -> Result<&'a Relation, RewriteError> {
        if let SourceDescriptor::Unsupported { formulation, .. } = source {
            return Err(RewriteError::UnsupportedConstruct(format!(
                "{formulation} logical source on <{owner}>"
            )));
        }
        self.sources
            .get(source)
            .ok_or_else(|| RewriteError::MissingSource(source.key()))
    }

    fn plan(&self) -> Result<Vec<PlannedFunction>, RewriteError> {
        let mut used_stems: BTreeSet<String> = BTreeSet::new();
        let mut outputs_per_source: BTreeMap<String, usize> = BTreeMap::new();
        let mut plans = Vec::new();

        // Each function map enters the plan exactly once, however many rules
        // reference it.
        for fm_id in self.doc.referenced_function_maps() {
            let fm = self.doc.function_map(&fm_id).expect("validated reference");
            for tm in &self.doc.triples_maps {
                let references = matches!(&tm.subject, SubjectSpec::FunctionRef(id) if id == &fm_id)
                    || tm.predicate_object_maps.iter().any(
                        |pom| matches!(&pom.object, ObjectSpec::FunctionRef(id) if id == &fm_id),
                    );
                if references && tm.source != fm.source {
                    return Err(RewriteError::CrossSourceFunction {
                        function_map: fm_id.clone(),
                        triples_map: tm.id.clone(),
                    });
                }
            }

            let rel = self.relation(&fm.source, &fm.id)?;
            let signature = self.registry.signature(&fm.function)?.clone();
            for param in &fm.parameters {
                if let ParamValue::FunctionRef(nested) = &param.value {
                    return Err(RewriteError::UnsupportedConstruct(format!(
                        "nested function <{nested}> as a parameter of <{}>",
                        fm.id
                    )));
                }
                if !signature.params.iter().any(|p| p.predicate == param.predicate) {
                    return Err(FunctionError::ParameterMismatch {
                        function: fm.function.clone(),
                        predicate: param.predicate.clone(),
                    }
                    .into());
                }
            }

            let mut input_attrs: Vec<String> = Vec::new();
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
                    Some(param) => {
                        if let ParamValue::Reference(attr) = &param.value {
                            rel.attribute_index(attr)?;
                            if !input_attrs.contains(attr) {
                                input_attrs.push(attr.clone());
                            }
                        }
                    }
                    None => {}
                }
            }
            if input_attrs.is_empty() {
                return Err(RewriteError::UnsupportedConstruct(format!(
                    "<{}> reads no source attributes; there is nothing to join on",
                    fm.id
                )));
            }

            // Output attribute names are unique per source, skipping any
            // collision with existing source attributes.
            let source_key = fm.source.key();
            let ordinal = outputs_per_source.entry(source_key).or_insert(0);
            let output_attr = loop {
                *ordinal += 1;
                let candidate = if *ordinal == 1 {
                    OUTPUT_ATTRIBUTE.to_owned()
                } else {
                    format!("{OUTPUT_ATTRIBUTE}_{ordinal}")
                };
                if !rel.attributes().contains(&candidate) {
                    break candidate;
                }
            };
            let stem = unique_name(&format!("output_{}", fm.id.local_name()), &mut used_stems);
            plans.push(PlannedFunction { fm: fm.clone(), input_attrs, output_attr, stem });
        }
        Ok(plans)
    }
}

fn unique_name(candidate: &str, used: &mut BTreeSet<String>) -> String {
    if used.insert(candidate.to_owned()) {
        return candidate.to_owned();
    }
    let mut n = 2;
    loop {
        let name = format!("{candidate}_{n}");
        if used.insert(name.clone()) {
            return name;
        }
        n += 1;
    }
}

fn unique_iri(candidate: String, used: &mut BTreeSet<Iri>) -> Iri {
    if used.insert(Iri::new(candidate.clone())) {
        return Iri::new(candidate);
    }
    let mut n = 2;
    loop {
        let iri = Iri::new(format!("{candidate}_{n}"));
        if used.insert(iri.clone()) {
            return iri;
        }
        n += 1;
    }
}

// ---------------------------------------------------------------------------
// Data-source transformations
// ---------------------------------------------------------------------------

/// Materialize one function: distinct-project its input attributes and
/// evaluate it once per distinct tuple (the first data transformation).
///
/// The resulting relation has the input attributes plus the output
/// attribute; its projection back onto the inputs equals the projection of
/// the origin, and every row satisfies `row[output] = f(row[inputs])`.
pub fn project_function_inputs(
    doc: &MappingDocument,
    sources: &SourceSet,
    registry: &FunctionRegistry,
    function_map: &Iri,
) -> Result<GeneratedRelation, RewriteError> {
    let planner = Planner { doc, sources, registry };
    let plans = planner.plan()?;
    let plan = plans
        .into_iter()
        .find(|p| &p.fm.id == function_map)
        .ok_or_else(|| {
            RewriteError::Precondition(format!(
                "<{function_map}> is not referenced from any term position"
            ))
        })?;
    materialize_function(&planner, &plan, RewriteMode::Full)
}

fn materialize_function(
    planner: &Planner<'_>,
    plan: &PlannedFunction,
    mode: RewriteMode,
) -> Result<GeneratedRelation, RewriteError> {
    let fm = &plan.fm;
    let rel = planner.relation(&fm.source, &fm.id)?;
    let distinct = distinct_project(rel, &plan.input_attrs)?;
    let signature = planner.registry.signature(&fm.function)?.clone();

    // Argument layout over the projected tuple, in signature order.
    enum Arg {
        Attr(usize),
        Const(String),
        Absent,
    }
    let mut layout = Vec::with_capacity(signature.params.len());
    for spec in &signature.params {
        let supplied = fm.parameters.iter().find(|p| p.predicate == spec.predicate);
        layout.push(match supplied {
            None => Arg::Absent,
            Some(param) => match &param.value {
                ParamValue::Reference(attr) => {
                    Arg::Attr(distinct.attribute_index(attr).expect("projected attribute"))
                }
                ParamValue::Constant(ConstTerm::Iri(iri)) => Arg::Const(iri.as_str().to_owned()),
                ParamValue::Constant(ConstTerm::Literal { lexical, .. }) => {
                    Arg::Const(lexical.clone())
                }
                ParamValue::FunctionRef(_) => unreachable!("rejected during planning"),
            },
        });
    }

    let mut attributes = plan.input_attrs.clone();
    attributes.push(plan.output_attr.clone());
    let mut rows: Vec<Vec<Cell>> = Vec::with_capacity(distinct.len());
    for tuple in distinct.rows() {
        let args: Vec<Option<&str>> = layout
            .iter()
            .map(|arg| match arg {
                Arg::Attr(idx) => tuple[*idx].as_deref(),
                Arg::Const(value) => Some(value.as_str()),
                Arg::Absent => None,
            })
            .collect();
        let output = planner.registry.evaluate(&fm.function, &args)?;
        let mut row = tuple.clone();
        row.push(output);
        rows.push(row);
    }
    let relation = Relation::new(attributes, rows)?;

    let descriptor = match mode {
        RewriteMode::Full | RewriteMode::Dtr1Only => {
            SourceDescriptor::CsvFile { path: format!("{}.csv", plan.stem) }
        }
        RewriteMode::SqlPushdown => {
            let connection = match &fm.source {
                SourceDescriptor::SqlQuery { connection, .. } => connection.clone(),
                _ => {
                    return Err(RewriteError::Precondition(format!(
                        "sql-pushdown requires a SQL source on <{}>",
                        fm.id
                    )))
                }
            };
            SourceDescriptor::SqlQuery {
                connection,
                query: format!("SELECT * FROM {}", quote_ident(&plan.stem)),
            }
        }
    };

    Ok(GeneratedRelation {
        name: plan.stem.clone(),
        relation,
        descriptor,
        origin: fm.source.clone(),
        provenance: Provenance::FunctionOutput { function_map: fm.id.clone() },
        key_attrs: plan.input_attrs.clone(),
    })
}

/// The attributes a rule reads: subject, predicates, objects, join-condition
/// child attributes, the input attributes of every function it references,
/// and any attribute another rule's join demands from it as a parent.
/// Ordered by first mention, each attribute once.
pub fn referenced_attributes(
    doc: &MappingDocument,
    tm: &TriplesMap,
) -> Result<Vec<String>, RewriteError> {
    let mut out: Vec<String> = Vec::new();
    let mut push = |attr: &str| {
        if !out.iter().any(|a| a == attr) {
            out.push(attr.to_owned());
        }
    };
    let push_function_inputs = |push: &mut dyn FnMut(&str), fm_id: &Iri| {
        if let Some(fm) = doc.function_map(fm_id) {
            for param in &fm.parameters {
                if let ParamValue::Reference(attr) = &param.value {
                    push(attr);
                }
            }
        }
    };

    match &tm.subject {
        SubjectSpec::Term(term) => {
            for attr in term.referenced_attributes() {
                push(attr);
            }
        }
        SubjectSpec::FunctionRef(id) => push_function_inputs(&mut push, id),
        SubjectSpec::Constant(_) => {}
    }
    for pom in &tm.predicate_object_maps {
        if let PredicateSpec::Term(term) = &pom.predicate {
            for attr in term.referenced_attributes() {
                push(attr);
            }
        }
        match &pom.object {
            ObjectSpec::Term(term) => {
                for attr in term.referenced_attributes() {
                    push(attr);
                }
            }
            ObjectSpec::FunctionRef(id) => push_function_inputs(&mut push, id),
            ObjectSpec::Ref(rom) => {
                for cond in &rom.join {
                    match &cond.child {
                        JoinKey::Attribute(attr) => push(attr),
                        JoinKey::FunctionRef(id) => {
                            return Err(RewriteError::UnsupportedConstruct(format!(
                                "function map <{id}> in a join condition of <{}>",
                                tm.id
                            )))
                        }
                    }
                }
            }
            ObjectSpec::Constant(_) => {}
        }
    }
    // Attributes other rules join against when this rule is their parent
    // must survive the projection too.
    for other in &doc.triples_maps {
        for pom in &other.predicate_object_maps {
            if let ObjectSpec::Ref(rom) = &pom.object {
                if rom.parent == tm.id {
                    for cond in &rom.join {
                        match &cond.parent {
                            JoinKey::Attribute(attr) => push(attr),
                            JoinKey::FunctionRef(id) => {
                                return Err(RewriteError::UnsupportedConstruct(format!(
                                    "function map <{id}> in a join condition of <{}>",
                                    other.id
                                )))
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Project a rule's source down to its referenced attributes with duplicate
/// removal (the second data transformation).
pub fn project_referenced_attributes(
    doc: &MappingDocument,
    sources: &SourceSet,
    triples_map: &Iri,
) -> Result<GeneratedRelation, RewriteError> {
    let tm = doc
        .triples_map(triples_map)
        .ok_or_else(|| RewriteError::Precondition(format!("unknown rule <{triples_map}>")))?;
    let attrs = referenced_attributes(doc, tm)?;
    if attrs.is_empty() {
        return Err(RewriteError::Precondition(format!(
            "<{triples_map}> references no attributes"
        )));
    }
    if let SourceDescriptor::Unsupported { formulation, .. } = &tm.source {
        return Err(RewriteError::UnsupportedConstruct(format!(
            "{formulation} logical source on <{}>",
            tm.id
        )));
    }
    let rel = sources
        .get(&tm.source)
        .ok_or_else(|| RewriteError::MissingSource(tm.source.key()))?;
    let relation = distinct_project(rel, &attrs)?;
    let mut used = BTreeSet::new();
    let stem = unique_name(&format!("project_{}", tm.id.local_name()), &mut used);
    Ok(GeneratedRelation {
        name: stem.clone(),
        descriptor: SourceDescriptor::CsvFile { path: format!("{stem}.csv") },
        origin: tm.source.clone(),
        provenance: Provenance::Projection { triples_map: tm.id.clone() },
        key_attrs: attrs,
        relation,
    })
}

// ---------------------------------------------------------------------------
// SQL text generation
// ---------------------------------------------------------------------------

fn quote_ident(name: &str) -> String {
    format!("\"{}\"", name.replace('"', "\"\""))
}

/// `SELECT DISTINCT <attrs> FROM (<origin>)` — projection pushed into the
/// source database, no data movement.
pub fn distinct_query(origin_query: &str, attrs: &[String]) -> String {
    let cols: Vec<String> = attrs.iter().map(|a| quote_ident(a)).collect();
    format!("SELECT DISTINCT {} FROM ({origin_query})", cols.join(", "))
}

/// Fused query joining the projected origin with one materialized output
/// table per function. LEFT JOINs keep rows whose function inputs are NULL,
/// mirroring the join-condition semantics where only the function-valued
/// triple is skipped.
fn fused_query(
    origin_query: &str,
    attrs: &[String],
    outputs: &[(&str, &str, &[String])], // (table stem, output attr, join attrs)
) -> String {
    let mut select: Vec<String> = attrs.iter().map(|a| format!("p.{}", quote_ident(a))).collect();
    for (idx, (_, output_attr, _)) in outputs.iter().enumerate() {
        select.push(format!("f{}.{}", idx + 1, quote_ident(output_attr)));
    }
    let mut query = format!(
        "SELECT {} FROM ({}) AS p",
        select.join(", "),
        distinct_query(origin_query, attrs)
    );
    for (idx, (stem, _, join_attrs)) in outputs.iter().enumerate() {
        let alias = format!("f{}", idx + 1);
        let conditions: Vec<String> = join_attrs
            .iter()
            .map(|attr| format!("p.{q} = {alias}.{q}", q = quote_ident(attr)))
            .collect();
        query.push_str(&format!(
            " LEFT JOIN {} AS {alias} ON {}",
            quote_ident(stem),
            conditions.join(" AND ")
        ));
    }
    query
}

// ---------------------------------------------------------------------------
// The rewrite itself
// ---------------------------------------------------------------------------

/// Rewrite a data integration system into an equivalent function-free one.
///
/// Returns the rewritten document, the generated sources (still in memory),
/// and a report. The document references the generated sources through the
/// descriptors recorded on each [`GeneratedRelation`]; persisting them is
/// the caller's concern.
pub fn rewrite_system(
    doc: &MappingDocument,
    sources: &SourceSet,
    registry: &FunctionRegistry,
    mode: RewriteMode,
) -> Result<RewriteOutcome, RewriteError> {
    let diags = validate_document(doc);
    let fatal: Vec<Diagnostic> = diags.into_iter().filter(Diagnostic::is_fatal).collect();
    if !fatal.is_empty() {
        return Err(RewriteError::Invalid(fatal));
    }

    let counts_before = registry.eval_counts();
    let planner = Planner { doc, sources, registry };
    let plans = planner.plan()?;

    if mode == RewriteMode::SqlPushdown {
        for tm in &doc.triples_maps {
            if !matches!(tm.source, SourceDescriptor::SqlQuery { .. }) {
                return Err(RewriteError::Precondition(format!(
                    "sql-pushdown requires SQL logical sources, <{}> has {}",
                    tm.id,
                    tm.source.formulation()
                )));
            }
        }
    }

    let mut generated: Vec<GeneratedRelation> = Vec::new();
    let mut outputs: BTreeMap<Iri, GeneratedRelation> = BTreeMap::new();
    let mut plan_for: BTreeMap<Iri, &PlannedFunction> = BTreeMap::new();
    for plan in &plans {
        let output = materialize_function(&planner, plan, mode)?;
        generated.push(output.clone());
        outputs.insert(plan.fm.id.clone(), output);
        plan_for.insert(plan.fm.id.clone(), plan);
    }

    let mut used_ids: BTreeSet<Iri> = doc.triples_maps.iter().map(|tm| tm.id.clone()).collect();
    let mut used_stems: BTreeSet<String> = generated.iter().map(|g| g.name.clone()).collect();

    let mut rewriter = Rewriter {
        doc,
        planner: &planner,
        mode,
        outputs: &outputs,
        plan_for: &plan_for,
        used_ids: &mut used_ids,
        used_stems: &mut used_stems,
        generated_projections: Vec::new(),
        created: Vec::new(),
        removed: Vec::new(),
        replacements: BTreeMap::new(),
        shared_maps: BTreeMap::new(),
        columns: BTreeMap::new(),
    };

    let mut result_maps: Vec<TriplesMap> = Vec::new();
    for tm in &doc.triples_maps {
        rewriter.rewrite_rule(tm, &mut result_maps)?;
    }
    // Shared output-backed rules are appended after the rewritten rules.
    for (_, shared) in core::mem::take(&mut rewriter.shared_maps) {
        result_maps.push(shared);
    }

    // Joins pointing at replaced rules follow them to their rewrites.
    let replacements = rewriter.replacements.clone();
    for tm in &mut result_maps {
        for pom in &mut tm.predicate_object_maps {
            if let ObjectSpec::Ref(rom) = &mut pom.object {
                if let Some(new_parent) = replacements.get(&rom.parent) {
                    rom.parent = new_parent.clone();
                }
            }
        }
    }
    rewriter.check_join_columns(&result_maps)?;

    let mut document = MappingDocument::new(doc.base.clone());
    document.prefixes = doc.prefixes.clone();
    document.triples_maps = result_maps;
    document.function_maps = doc
        .function_maps
        .iter()
        .filter(|fm| !plan_for.contains_key(&fm.id))
        .cloned()
        .collect();

    let created = rewriter.created.clone();
    let removed = rewriter.removed.clone();
    generated.extend(rewriter.generated_projections);

    let counts_after = registry.eval_counts();
    let function_eval_counts = counts_after
        .into_iter()
        .filter_map(|(name, after)| {
            let before = counts_before.get(&name).copied().unwrap_or(0);
            (after > before).then_some((name, after - before))
        })
        .collect();

    let report = RewriteReport {
        mode,
        generated_sources: generated.iter().map(GeneratedRelation::info).collect(),
        created_maps: created,
        removed_maps: removed,
        function_eval_counts,
    };
    Ok(RewriteOutcome { document, generated, report })
}

struct Rewriter<'a> {
    doc: &'a MappingDocument,
    planner: &'a Planner<'a>,
    mode: RewriteMode,
    outputs: &'a BTreeMap<Iri, GeneratedRelation>,
    plan_for: &'a BTreeMap<Iri, &'a PlannedFunction>,
    used_ids: &'a mut BTreeSet<Iri>,
    used_stems: &'a mut BTreeSet<String>,
    generated_projections: Vec<GeneratedRelation>,
    created: Vec<Iri>,
    removed: Vec<Iri>,
    replacements: BTreeMap<Iri, Iri>,
    /// One shared output-backed rule per function map (object case).
    shared_maps: BTreeMap<Iri, TriplesMap>,
    /// Attribute sets of the rewritten rules' sources, for join checking.
    columns: BTreeMap<Iri, Vec<String>>,
}

impl<'a> Rewriter<'a> {
    fn base(&self) -> &str {
        &self.doc.base
    }

    fn rewrite_rule(
        &mut self,
        tm: &TriplesMap,
        out: &mut Vec<TriplesMap>,
    ) -> Result<(), RewriteError> {
        let subject_fm = match &tm.subject {
            SubjectSpec::FunctionRef(id) => Some(id.clone()),
            _ => None,
        };
        let has_object_fm = tm
            .predicate_object_maps
            .iter()
            .any(|pom| matches!(pom.object, ObjectSpec::FunctionRef(_)));

        if subject_fm.is_some() && has_object_fm {
            return Err(RewriteError::UnsupportedConstruct(format!(
                "<{}> uses functions in both subject and object positions",
                tm.id
            )));
        }

        match subject_fm {
            Some(fm_id) => self.rewrite_subject_position(tm, &fm_id, out),
            None if has_object_fm => self.rewrite_object_positions(tm, out),
            None => {
                // Function-free rule: only the source narrows.
                let mut kept = tm.clone();
                kept.source = self.projected_source(tm)?;
                self.columns.insert(kept.id.clone(), self.columns_of_source(tm, None)?);
                out.push(kept);
                Ok(())
            }
        }
    }

    /// The source a rule keeps after rewriting: the distinct projection of
    /// its referenced attributes in full mode, the original source in
    /// dtr1-only mode, the wrapped DISTINCT query in pushdown mode.
    fn projected_source(&mut self, tm: &TriplesMap) -> Result<SourceDescriptor, RewriteError> {
        match self.mode {
            RewriteMode::Dtr1Only => Ok(tm.source.clone()),
            RewriteMode::Full => {
                let attrs = referenced_attributes(self.doc, tm)?;
                if attrs.is_empty() {
                    // Nothing referenced (constant-only rule): keep as is.
                    return Ok(tm.source.clone());
                }
                let rel = self.planner.relation(&tm.source, &tm.id)?;
                let relation = distinct_project(rel, &attrs)?;
                let stem =
                    unique_name(&format!("project_{}", tm.id.local_name()), self.used_stems);
                let descriptor = SourceDescriptor::CsvFile { path: format!("{stem}.csv") };
                self.generated_projections.push(GeneratedRelation {
                    name: stem,
                    relation,
                    descriptor: descriptor.clone(),
                    origin: tm.source.clone(),
                    provenance: Provenance::Projection { triples_map: tm.id.clone() },
                    key_attrs: attrs,
                });
                Ok(descriptor)
            }
            RewriteMode::SqlPushdown => {
                let attrs = referenced_attributes(self.doc, tm)?;
                if attrs.is_empty() {
                    return Ok(tm.source.clone());
                }
                let SourceDescriptor::SqlQuery { connection, query } = &tm.source else {
                    unreachable!("pushdown precondition checked");
                };
                Ok(SourceDescriptor::SqlQuery {
                    connection: connection.clone(),
                    query: distinct_query(query, &attrs),
                })
            }
        }
    }

    fn columns_of_source(
        &self,
        tm: &TriplesMap,
        extra_outputs: Option<&[String]>,
    ) -> Result<Vec<String>, RewriteError> {
        let mut cols = match self.mode {
            RewriteMode::Dtr1Only => {
                self.planner.relation(&tm.source, &tm.id)?.attributes().to_vec()
            }
            RewriteMode::Full | RewriteMode::SqlPushdown => {
                let attrs = referenced_attributes(self.doc, tm)?;
                if attrs.is_empty() {
                    self.planner.relation(&tm.source, &tm.id)?.attributes().to_vec()
                } else {
                    attrs
                }
            }
        };
        if let Some(outputs) = extra_outputs {
            cols.extend(outputs.iter().cloned());
        }
        Ok(cols)
    }

    /// Object-position rewrite: each function object becomes a join to the
    /// shared output-backed rule of its function.
    fn rewrite_object_positions(
        &mut self,
        tm: &TriplesMap,
        out: &mut Vec<TriplesMap>,
    ) -> Result<(), RewriteError> {
        if self.mode == RewriteMode::SqlPushdown {
            return self.fuse_object_positions(tm, out);
        }

        let new_id = unique_iri(
            format!("{}#{}_rw", self.base(), tm.id.local_name()),
            self.used_ids,
        );
        let mut poms = Vec::with_capacity(tm.predicate_object_maps.len());
        for pom in &tm.predicate_object_maps {
            match &pom.object {
                ObjectSpec::FunctionRef(fm_id) => {
                    let shared_id = self.shared_output_rule(fm_id)?;
                    let plan = self.plan_for[fm_id];
                    let join = plan
                        .input_attrs
                        .iter()
                        .map(|attr| JoinCondition {
                            child: JoinKey::Attribute(attr.clone()),
                            parent: JoinKey::Attribute(attr.clone()),
                        })
                        .collect();
                    poms.push(PredicateObjectMap {
                        predicate: pom.predicate.clone(),
                        object: ObjectSpec::Ref(RefObjectMap { parent: shared_id, join }),
                    });
                }
                _ => poms.push(pom.clone()),
            }
        }

        let rewritten = TriplesMap {
            id: new_id.clone(),
            source: self.projected_source(tm)?,
            subject: tm.subject.clone(),
            predicate_object_maps: poms,
        };
        self.columns.insert(new_id.clone(), self.columns_of_source(tm, None)?);
        self.removed.push(tm.id.clone());
        self.created.push(new_id);
        self.replacements.insert(tm.id.clone(), rewritten.id.clone());
        out.push(rewritten);
        Ok(())
    }

    /// The rule over `output_<fn>` whose subject reads the output attribute.
    /// Created once per function, shared by every referencing rule. Its
    /// subject keeps the term type a function object would have produced
    /// (a plain literal), so the join reproduces the original term exactly.
    fn shared_output_rule(&mut self, fm_id: &Iri) -> Result<Iri, RewriteError> {
        if let Some(existing) = self.shared_maps.get(fm_id) {
            return Ok(existing.id.clone());
        }
        let plan = self.plan_for[fm_id];
        let output = &self.outputs[fm_id];
        let id = unique_iri(
            format!("{}#TM_F_{}", self.base(), fm_id.local_name()),
            self.used_ids,
        );
        let mut subject = TermMap::reference(plan.output_attr.clone());
        subject.term_type = Some(TermType::Literal);
        let rule = TriplesMap {
            id: id.clone(),
            source: output.descriptor.clone(),
            subject: SubjectSpec::Term(subject),
            predicate_object_maps: Vec::new(),
        };
        self.columns.insert(id.clone(), output.relation.attributes().to_vec());
        self.created.push(id.clone());
        self.shared_maps.insert(fm_id.clone(), rule);
        Ok(id)
    }

    /// Subject-position rewrite: the rule moves onto the output source with
    /// the output attribute as subject; each original object becomes a join
    /// back to a per-object rule over the projected source.
    fn rewrite_subject_position(
        &mut self,
        tm: &TriplesMap,
        fm_id: &Iri,
        out: &mut Vec<TriplesMap>,
    ) -> Result<(), RewriteError> {
        for pom in &tm.predicate_object_maps {
            if matches!(pom.predicate, PredicateSpec::Term(_)) {
                return Err(RewriteError::UnsupportedConstruct(format!(
                    "non-constant predicate in subject-position rewrite of <{}>",
                    tm.id
                )));
            }
            if matches!(pom.object, ObjectSpec::Ref(_)) {
                return Err(RewriteError::UnsupportedConstruct(format!(
                    "join object in subject-position rewrite of <{}>",
                    tm.id
                )));
            }
        }
        if self.mode == RewriteMode::SqlPushdown {
            return self.fuse_subject_position(tm, fm_id, out);
        }

        let plan = self.plan_for[fm_id];
        let output = &self.outputs[fm_id];
        let new_id = unique_iri(
            format!("{}#{}_rw", self.base(), tm.id.local_name()),
            self.used_ids,
        );

        // Parent rules live on the projected source (or the original one
        // when projection is disabled). A rule without predicate-object
        // maps needs no parents and no projection.
        let parent_source = if tm.predicate_object_maps.is_empty() {
            None
        } else {
            Some(match self.mode {
                RewriteMode::Dtr1Only => tm.source.clone(),
                _ => self.projected_source(tm)?,
            })
        };
        let parent_columns = self.columns_of_source(tm, None)?;

        let mut poms = Vec::with_capacity(tm.predicate_object_maps.len());
        for (idx, pom) in tm.predicate_object_maps.iter().enumerate() {
            let parent_id = unique_iri(
                format!("{}#{}_pom{}", self.base(), tm.id.local_name(), idx + 1),
                self.used_ids,
            );
            // The parent's subject is the original object term, pinned to
            // the term type it had in object position so the join yields
            // the identical term.
            let subject = match &pom.object {
                ObjectSpec::Term(term) => {
                    let mut pinned = term.clone();
                    pinned.term_type = Some(
                        term.term_type
                            .unwrap_or_else(|| default_term_type(TermPosition::Object, &term.form)),
                    );
                    SubjectSpec::Term(pinned)
                }
                ObjectSpec::Constant(c) => SubjectSpec::Term(TermMap::constant(c.clone())),
                ObjectSpec::FunctionRef(_) | ObjectSpec::Ref(_) => {
                    unreachable!("rejected above")
                }
            };
            let parent_rule = TriplesMap {
                id: parent_id.clone(),
                source: parent_source.clone().expect("parents exist only with maps"),
                subject,
                predicate_object_maps: Vec::new(),
            };
            self.columns.insert(parent_id.clone(), parent_columns.clone());
            self.created.push(parent_id.clone());
            out.push(parent_rule);

            let join = plan
                .input_attrs
                .iter()
                .map(|attr| JoinCondition {
                    child: JoinKey::Attribute(attr.clone()),
                    parent: JoinKey::Attribute(attr.clone()),
                })
                .collect();
            poms.push(PredicateObjectMap {
                predicate: pom.predicate.clone(),
                object: ObjectSpec::Ref(RefObjectMap { parent: parent_id, join }),
            });
        }

        let rewritten = TriplesMap {
            id: new_id.clone(),
            source: output.descriptor.clone(),
            subject: SubjectSpec::Term(TermMap::reference(plan.output_attr.clone())),
            predicate_object_maps: poms,
        };
        self.columns.insert(new_id.clone(), output.relation.attributes().to_vec());
        self.removed.push(tm.id.clone());
        self.created.push(new_id);
        self.replacements.insert(tm.id.clone(), rewritten.id.clone());
        out.push(rewritten);
        Ok(())
    }

    /// Pushdown variant of the object-position rewrite: one rule whose
    /// logical source fuses the projection and the output tables.
    fn fuse_object_positions(
        &mut self,
        tm: &TriplesMap,
        out: &mut Vec<TriplesMap>,
    ) -> Result<(), RewriteError> {
        let attrs = referenced_attributes(self.doc, tm)?;
        let SourceDescriptor::SqlQuery { connection, query } = &tm.source else {
            unreachable!("pushdown precondition checked");
        };

        let mut fused_outputs: Vec<(&str, &str, &[String])> = Vec::new();
        let mut output_attrs: Vec<String> = Vec::new();
        let mut seen: BTreeSet<Iri> = BTreeSet::new();
        for pom in &tm.predicate_object_maps {
            if let ObjectSpec::FunctionRef(fm_id) = &pom.object {
                if seen.insert(fm_id.clone()) {
                    let plan: &PlannedFunction = self.plan_for[fm_id];
                    fused_outputs.push((
                        plan.stem.as_str(),
                        plan.output_attr.as_str(),
                        plan.input_attrs.as_slice(),
                    ));
                    output_attrs.push(plan.output_attr.clone());
                }
            }
        }

        let fused = SourceDescriptor::SqlQuery {
            connection: connection.clone(),
            query: fused_query(query, &attrs, &fused_outputs),
        };
        let new_id = unique_iri(
            format!("{}#{}_rw", self.base(), tm.id.local_name()),
            self.used_ids,
        );
        let mut poms = Vec::with_capacity(tm.predicate_object_maps.len());
        for pom in &tm.predicate_object_maps {
            match &pom.object {
                ObjectSpec::FunctionRef(fm_id) => {
                    let plan = self.plan_for[fm_id];
                    let mut object = TermMap::reference(plan.output_attr.clone());
                    object.term_type = Some(TermType::Literal);
                    poms.push(PredicateObjectMap {
                        predicate: pom.predicate.clone(),
                        object: ObjectSpec::Term(object),
                    });
                }
                _ => poms.push(pom.clone()),
            }
        }

        let rewritten = TriplesMap {
            id: new_id.clone(),
            source: fused,
            subject: tm.subject.clone(),
            predicate_object_maps: poms,
        };
        self.columns.insert(new_id.clone(), self.columns_of_source(tm, Some(&output_attrs))?);
        self.removed.push(tm.id.clone());
        self.created.push(new_id);
        self.replacements.insert(tm.id.clone(), rewritten.id.clone());
        out.push(rewritten);
        Ok(())
    }

    /// Pushdown variant of the subject-position rewrite.
    fn fuse_subject_position(
        &mut self,
        tm: &TriplesMap,
        fm_id: &Iri,
        out: &mut Vec<TriplesMap>,
    ) -> Result<(), RewriteError> {
        let attrs = referenced_attributes(self.doc, tm)?;
        let SourceDescriptor::SqlQuery { connection, query } = &tm.source else {
            unreachable!("pushdown precondition checked");
        };
        let plan = self.plan_for[fm_id];
        let fused = SourceDescriptor::SqlQuery {
            connection: connection.clone(),
            query: fused_query(
                query,
                &attrs,
                &[(plan.stem.as_str(), plan.output_attr.as_str(), plan.input_attrs.as_slice())],
            ),
        };
        let new_id = unique_iri(
            format!("{}#{}_rw", self.base(), tm.id.local_name()),
            self.used_ids,
        );
        let rewritten = TriplesMap {
            id: new_id.clone(),
            source: fused,
            subject: SubjectSpec::Term(TermMap::reference(plan.output_attr.clone())),
            predicate_object_maps: tm.predicate_object_maps.clone(),
        };
        self.columns.insert(
            new_id.clone(),
            self.columns_of_source(tm, Some(&[plan.output_attr.clone()]))?,
        );
        self.removed.push(tm.id.clone());
        self.created.push(new_id);
        self.replacements.insert(tm.id.clone(), rewritten.id.clone());
        out.push(rewritten);
        Ok(())
    }

    /// Every join in the rewritten document must find its child and parent
    /// attributes in the (possibly projected) sources.
    fn check_join_columns(&self, maps: &[TriplesMap]) -> Result<(), RewriteError> {
        let column_of = |id: &Iri| self.columns.get(id);
        for tm in maps {
            for pom in &tm.predicate_object_maps {
                let ObjectSpec::Ref(rom) = &pom.object else { continue };
                for cond in &rom.join {
                    if let (JoinKey::Attribute(child), JoinKey::Attribute(parent)) =
                        (&cond.child, &cond.parent)
                    {
                        if let Some(cols) = column_of(&tm.id) {
                            if !cols.contains(child) {
                                return Err(RewriteError::UnsupportedConstruct(format!(
                                    "join attribute '{child}' not available on rewritten <{}>",
                                    tm.id
                                )));
                            }
                        }
                        if let Some(cols) = column_of(&rom.parent) {
                            if !cols.contains(parent) {
                                return Err(RewriteError::UnsupportedConstruct(format!(
                                    "join attribute '{parent}' not available on rewritten <{}>",
                                    rom.parent
                                )));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
