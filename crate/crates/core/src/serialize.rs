//! Deterministic serializer for mapping documents. Output is byte-stable
//! for a given document: prefixes sorted, mapping rules sorted by id,
//! a fixed property order inside every block. `parse(serialize(doc))`
//! reproduces `doc` structurally.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::model::{
    default_output_predicate, ConstTerm, FunctionMap, JoinKey, MappingDocument, ObjectSpec,
    ParamValue, PredicateObjectMap, PredicateSpec, RefObjectMap, SourceDescriptor, SubjectSpec,
    TermForm, TermMap, TermType, TriplesMap,
};

/// Serialize a mapping document to the dialect's text form.
pub fn serialize_mapping_document(doc: &MappingDocument) -> String {
    let mut w = Writer::new(doc);
    w.out.push_str("@base <");
    w.out.push_str(&doc.base);
    w.out.push_str("> .\n");
    for (prefix, ns) in &doc.prefixes {
        w.out.push_str(&format!("@prefix {prefix}: <{ns}> .\n"));
    }

    let mut triples_maps: Vec<&TriplesMap> = doc.triples_maps.iter().collect();
    triples_maps.sort_by(|a, b| a.id.cmp(&b.id));
    for tm in triples_maps {
        w.out.push('\n');
        w.triples_map(tm);
    }

    let mut function_maps: Vec<&FunctionMap> = doc.function_maps.iter().collect();
    function_maps.sort_by(|a, b| a.id.cmp(&b.id));
    for fm in function_maps {
        w.out.push('\n');
        w.function_map(fm);
    }
    w.out
}

struct Writer<'d> {
    doc: &'d MappingDocument,
    out: String,
}

impl<'d> Writer<'d> {
    fn new(doc: &'d MappingDocument) -> Self {
        Writer { doc, out: String::new() }
    }

    /// Render an IRI as `<#frag>` against the base, a prefixed name, or a
    /// full IRI reference, in that order of preference.
    fn iri(&self, iri: &str) -> String {
        let base_prefix = match self.doc.base.find('#') {
            Some(idx) => &self.doc.base[..idx],
            None => self.doc.base.as_str(),
        };
        if let Some(rest) = iri.strip_prefix(base_prefix) {
            if let Some(frag) = rest.strip_prefix('#') {
                if !frag.is_empty() && !frag.contains(['>', '<', ' ']) {
                    return format!("<#{frag}>");
                }
            }
        }
        let mut best: Option<(&str, &str)> = None;
        for (prefix, ns) in &self.doc.prefixes {
            if let Some(local) = iri.strip_prefix(ns.as_str()) {
                let safe = !local.is_empty()
                    && local.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-'));
                if safe && best.is_none_or(|(_, n)| ns.len() > n.len()) {
                    best = Some((prefix, ns));
                }
            }
        }
        match best {
            Some((prefix, ns)) => format!("{prefix}:{}", &iri[ns.len()..]),
            None => format!("<{iri}>"),
        }
    }

    fn string(&self, value: &str) -> String {
        let mut out = String::with_capacity(value.len() + 2);
        out.push('"');
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
        out.push('"');
        out
    }

    fn literal(&self, lexical: &str, datatype: &Option<crate::iri::Iri>, language: &Option<String>) -> String {
        let mut out = self.string(lexical);
        if let Some(dt) = datatype {
            out.push_str("^^");
            out.push_str(&self.iri(dt.as_str()));
        } else if let Some(lang) = language {
            out.push('@');
            out.push_str(lang);
        }
        out
    }

    fn const_term(&self, term: &ConstTerm) -> String {
        match term {
            ConstTerm::Iri(iri) => self.iri(iri.as_str()),
            ConstTerm::Literal { lexical, datatype, language } => {
                self.literal(lexical, datatype, language)
            }
        }
    }

    fn triples_map(&mut self, tm: &TriplesMap) {
        let id = self.iri(tm.id.as_str());
        self.out.push_str(&format!("{id} a rr:TriplesMap ;\n"));
        self.logical_source(&tm.source, 1);
        self.out.push_str(" ;\n");
        match &tm.subject {
            SubjectSpec::Term(term) => {
                self.out.push_str(&format!("    rr:subjectMap [ {} ]", self.term_map_props(term)));
            }
            SubjectSpec::FunctionRef(id) => {
                self.out.push_str(&format!("    rr:subjectMap {}", self.iri(id.as_str())));
            }
            SubjectSpec::Constant(iri) => {
                self.out.push_str(&format!("    rr:subject {}", self.iri(iri.as_str())));
            }
        }
        for pom in &tm.predicate_object_maps {
            self.out.push_str(" ;\n");
            self.predicate_object_map(pom);
        }
        self.out.push_str(" .\n");
    }

    fn logical_source(&mut self, source: &SourceDescriptor, indent: usize) {
        let pad = "    ".repeat(indent);
        self.out.push_str(&format!("{pad}rml:logicalSource [\n"));
        match source {
            SourceDescriptor::CsvFile { path } => {
                self.out.push_str(&format!("{pad}    rml:source {} ;\n", self.string(path)));
                self.out.push_str(&format!("{pad}    rml:referenceFormulation ql:CSV ]"));
            }
            SourceDescriptor::SqlQuery { connection, query } => {
                self.out.push_str(&format!("{pad}    rml:source {} ;\n", self.string(connection)));
                self.out.push_str(&format!("{pad}    rml:query {} ;\n", self.string(query)));
                self.out.push_str(&format!("{pad}    rml:referenceFormulation ql:SQL ]"));
            }
            SourceDescriptor::Unsupported { source, formulation, iterator } => {
                self.out.push_str(&format!("{pad}    rml:source {} ;\n", self.string(source)));
                if let Some(it) = iterator {
                    self.out.push_str(&format!("{pad}    rml:iterator {} ;\n", self.string(it)));
                }
                self.out.push_str(&format!(
                    "{pad}    rml:referenceFormulation ql:{formulation} ]"
                ));
            }
        }
    }

    fn term_map_props(&self, term: &TermMap) -> String {
        let mut parts: Vec<String> = Vec::new();
        match &term.form {
            TermForm::Template(t) => parts.push(format!("rr:template {}", self.string(t.raw()))),
            TermForm::Reference(attr) => {
                parts.push(format!("rml:reference {}", self.string(attr)))
            }
            TermForm::Constant(c) => parts.push(format!("rr:constant {}", self.const_term(c))),
        }
        match term.term_type {
            Some(TermType::Iri) => parts.push(String::from("rr:termType rr:IRI")),
            Some(TermType::Literal) => parts.push(String::from("rr:termType rr:Literal")),
            None => {}
        }
        if let Some(dt) = &term.datatype {
            parts.push(format!("rr:datatype {}", self.iri(dt.as_str())));
        }
        if let Some(lang) = &term.language {
            parts.push(format!("rr:language {}", self.string(lang)));
        }
        parts.join(" ; ")
    }

    fn predicate_object_map(&mut self, pom: &PredicateObjectMap) {
        self.out.push_str("    rr:predicateObjectMap [\n");
        match &pom.predicate {
            PredicateSpec::Constant(iri) => {
                self.out.push_str(&format!("        rr:predicate {} ;\n", self.iri(iri.as_str())));
            }
            PredicateSpec::Term(term) => {
                self.out.push_str(&format!(
                    "        rr:predicateMap [ {} ] ;\n",
                    self.term_map_props(term)
                ));
            }
        }
        match &pom.object {
            ObjectSpec::Term(term) => {
                self.out
                    .push_str(&format!("        rr:objectMap [ {} ] ]", self.term_map_props(term)));
            }
            ObjectSpec::FunctionRef(id) => {
                self.out.push_str(&format!("        rr:objectMap {} ]", self.iri(id.as_str())));
            }
            ObjectSpec::Constant(c) => {
                self.out.push_str(&format!("        rr:object {} ]", self.const_term(c)));
            }
            ObjectSpec::Ref(rom) => {
                self.ref_object_map(rom);
            }
        }
    }

    fn ref_object_map(&mut self, rom: &RefObjectMap) {
        self.out.push_str(&format!(
            "        rr:objectMap [ a rr:RefObjectMap ;\n            rr:parentTriplesMap {}",
            self.iri(rom.parent.as_str())
        ));
        for cond in &rom.join {
            let child = self.join_key(&cond.child);
            let parent = self.join_key(&cond.parent);
            self.out.push_str(&format!(
                " ;\n            rr:joinCondition [ rr:child {child} ; rr:parent {parent} ]"
            ));
        }
        self.out.push_str(" ] ]");
    }

    fn join_key(&self, key: &JoinKey) -> String {
        match key {
            JoinKey::Attribute(attr) => self.string(attr),
            JoinKey::FunctionRef(id) => self.iri(id.as_str()),
        }
    }

    fn function_map(&mut self, fm: &FunctionMap) {
        let id = self.iri(fm.id.as_str());
        self.out.push_str(&format!("{id} a fnml:FunctionTermMap ;\n"));
        self.out.push_str("    fnml:functionValue [\n");
        self.logical_source(&fm.source, 2);
        self.out.push_str(" ;\n");
        // The execution block carries the inline declaration only when the
        // output predicate deviates from the derived default.
        if fm.output_predicate == default_output_predicate(&fm.function) {
            self.out.push_str(&format!(
                "        rr:predicateObjectMap [ a fno:Execution ;\n            fno:executes {} ]",
                self.iri(fm.function.as_str())
            ));
        } else {
            self.out.push_str(&format!(
                "        rr:predicateObjectMap [ a fno:Execution ;\n            fno:executes [ a fno:Function ;\n                fno:name {} ;\n                fno:returns [ fno:predicate {} ] ] ]",
                self.string(fm.function.as_str()),
                self.iri(fm.output_predicate.as_str())
            ));
        }
        for param in &fm.parameters {
            self.out.push_str(" ;\n        rr:predicateObjectMap [\n");
            self.out
                .push_str(&format!("            fno:predicate {}", self.iri(param.predicate.as_str())));
            if !param.required {
                self.out.push_str(" ;\n            fno:required \"false\"");
            }
            match &param.value {
                ParamValue::Reference(attr) => {
                    self.out.push_str(&format!(
                        " ;\n            rr:objectMap [ rml:reference {} ] ]",
                        self.string(attr)
                    ));
                }
                ParamValue::Constant(c) => {
                    self.out
                        .push_str(&format!(" ;\n            rr:object {} ]", self.const_term(c)));
                }
                ParamValue::FunctionRef(id) => {
                    self.out
                        .push_str(&format!(" ;\n            rr:objectMap {} ]", self.iri(id.as_str())));
                }
            }
        }
        self.out.push_str(" ] .\n");
    }
}
