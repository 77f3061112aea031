//! Synthetic testbeds: a wide biomedical-flavored table with a controlled
//! duplication rate, and mapping documents fanning one shared function out
//! over a configurable number of rules. Generation is deterministic for a
//! given seed.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::iri::Iri;
use crate::model::{
    default_output_predicate, FunctionMap, FunctionParam, MappingDocument, ObjectSpec, ParamValue,
    PredicateObjectMap, PredicateSpec, SourceDescriptor, SubjectSpec, Template, TermMap,
    TriplesMap,
};
use crate::registry::FN_NS;
use crate::relation::{Cell, Relation};

pub const TESTBED_BASE: &str = "http://example.com/testbed";

/// Total attribute count of a generated dataset; only a handful are ever
/// referenced by the generated mappings.
pub const DATASET_ATTRIBUTES: usize = 39;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FunctionKind {
    Simple,
    Complex,
}

impl FunctionKind {
    /// Registry name of the built-in backing this kind.
    pub fn function_iri(&self) -> Iri {
        match self {
            FunctionKind::Simple => Iri::new(format!("{FN_NS}simple-bench")),
            FunctionKind::Complex => Iri::new(format!("{FN_NS}complex-bench")),
        }
    }

    /// Dataset attributes feeding the function.
    pub fn input_attributes(&self) -> &'static [&'static str] {
        match self {
            FunctionKind::Simple => &["Mutation genome position"],
            FunctionKind::Complex => &["gene", "hgvs"],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    Csv,
    Sql,
}

/// Whether duplicates copy whole records or only the function-input values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DuplicationKind {
    Record,
    Key,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestbedSpec {
    pub rows: usize,
    /// Fraction of rows that are copies of earlier rows, in `[0, 1)`.
    pub duplicate_rate: f64,
    pub triples_maps: usize,
    pub function: FunctionKind,
    pub backend: Backend,
    pub seed: u64,
    pub duplication: DuplicationKind,
}

impl TestbedSpec {
    pub fn new(rows: usize, duplicate_rate: f64, triples_maps: usize, function: FunctionKind) -> Self {
        TestbedSpec {
            rows,
            duplicate_rate,
            triples_maps,
            function,
            backend: Backend::Csv,
            seed: 42,
            duplication: DuplicationKind::Record,
        }
    }

    pub fn validate(&self) -> Result<(), TestbedError> {
        if self.rows == 0 {
            return Err(TestbedError("rows must be at least 1".to_string()));
        }
        if !(0.0..1.0).contains(&self.duplicate_rate) {
            return Err(TestbedError("duplicate rate must be in [0, 1)".to_string()));
        }
        if self.triples_maps == 0 {
            return Err(TestbedError("at least one rule is required".to_string()));
        }
        Ok(())
    }

    /// Count of rows that are copies of earlier rows: `ceil(rows * rate)`,
    /// capped so at least one original row remains.
    pub fn duplicate_rows(&self) -> usize {
        let scaled = self.rows as f64 * self.duplicate_rate;
        let mut n = scaled as usize;
        if (n as f64) < scaled {
            n += 1;
        }
        n.min(self.rows - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestbedError(pub String);

impl fmt::Display for TestbedError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid testbed spec: {}", self.0)
    }
}

impl core::error::Error for TestbedError {}

const GENES: &[&str] = &[
    "BCR", "ABL1", "TP53", "EGFR", "KRAS", "BRAF", "PIK3CA", "PTEN", "NRAS", "JAK2", "KIT",
    "ALK", "RET", "MET", "FLT3", "IDH1",
];
const SITES: &[&str] = &[
    "lung", "breast", "prostate", "large intestine", "haematopoietic and lymphoid tissue",
    "skin", "ovary", "pancreas", "kidney", "liver",
];
const BASES: &[&str] = &["A", "C", "G", "T"];

/// Attribute names of a generated dataset: the five the mappings may
/// reference, then unreferenced filler up to [`DATASET_ATTRIBUTES`].
pub fn dataset_attributes() -> Vec<String> {
    let mut attrs: Vec<String> = alloc::vec![
        "GENOMIC_MUTATION_ID".to_string(),
        "gene".to_string(),
        "hgvs".to_string(),
        "Mutation genome position".to_string(),
        "Primary site".to_string(),
    ];
    for i in attrs.len()..DATASET_ATTRIBUTES {
        attrs.push(format!("extra_{:02}", i - 4));
    }
    attrs
}

/// Generate the dataset rows. The first `rows - duplicate_rows()` rows are
/// pairwise distinct (every referenced attribute embeds the row ordinal);
/// the rest are copies of earlier rows — whole records, or just the
/// function-input values for key-level duplication.
pub fn generate_dataset(spec: &TestbedSpec) -> Result<Relation, TestbedError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let attrs = dataset_attributes();
    let n_dup = spec.duplicate_rows();
    let n_unique = spec.rows - n_dup;

    let fresh_row = |ordinal: usize, rng: &mut ChaCha8Rng| -> Vec<Cell> {
        let gene = GENES[(rng.next_u32() as usize) % GENES.len()];
        let reference = BASES[(rng.next_u32() as usize) % BASES.len()];
        let alternate = BASES[(rng.next_u32() as usize) % BASES.len()];
        let chromosome = 1 + (rng.next_u32() % 22);
        let start = 1_000_000 + ordinal as u64 * 37;
        let site = SITES[(rng.next_u32() as usize) % SITES.len()];
        let mut row: Vec<Cell> = Vec::with_capacity(DATASET_ATTRIBUTES);
        row.push(Some(format!("COSV{:08}", 56_000_000 + ordinal)));
        row.push(Some(gene.to_string()));
        row.push(Some(format!("c.{}{reference}>{alternate}", 100 + ordinal)));
        row.push(Some(format!("{chromosome}:{start}-{start}")));
        row.push(Some(site.to_string()));
        for _ in 5..DATASET_ATTRIBUTES {
            row.push(Some(format!("v{}", rng.next_u32() % 1000)));
        }
        row
    };

    let mut rows: Vec<Vec<Cell>> = Vec::with_capacity(spec.rows);
    for i in 0..n_unique {
        rows.push(fresh_row(i, &mut rng));
    }
    let input_indices: Vec<usize> = spec
        .function
        .input_attributes()
        .iter()
        .map(|name| attrs.iter().position(|a| a == name).expect("known attribute"))
        .collect();
    for k in 0..n_dup {
        let donor = (rng.next_u64() as usize) % n_unique;
        match spec.duplication {
            DuplicationKind::Record => rows.push(rows[donor].clone()),
            DuplicationKind::Key => {
                // Fresh record sharing only the function-input values.
                let mut row = fresh_row(n_unique + k, &mut rng);
                for &idx in &input_indices {
                    row[idx] = rows[donor][idx].clone();
                }
                rows.push(row);
            }
        }
    }
    Relation::new(attrs, rows).map_err(|e| TestbedError(e.to_string()))
}

/// Generate the mapping document: `triples_maps` rules over one source, each
/// with one function-valued predicate-object map referencing the single
/// shared function map, plus one or two plain attribute maps.
pub fn generate_mappings(spec: &TestbedSpec, source: &SourceDescriptor) -> Result<MappingDocument, TestbedError> {
    spec.validate()?;
    let mut doc = MappingDocument::new(TESTBED_BASE);
    doc.prefixes.insert("ex".to_string(), "http://example.com/".to_string());

    let function = spec.function.function_iri();
    let param_predicates: Vec<Iri> = match spec.function {
        FunctionKind::Simple => alloc::vec![Iri::new(format!("{FN_NS}input"))],
        FunctionKind::Complex => {
            alloc::vec![Iri::new(format!("{FN_NS}first")), Iri::new(format!("{FN_NS}second"))]
        }
    };
    let fm_id = Iri::new(format!("{TESTBED_BASE}#FunctionMap1"));
    let parameters = param_predicates
        .into_iter()
        .zip(spec.function.input_attributes())
        .map(|(predicate, attr)| FunctionParam {
            predicate,
            value: ParamValue::Reference((*attr).to_string()),
            required: true,
        })
        .collect();
    doc.function_maps.push(FunctionMap {
        id: fm_id.clone(),
        output_predicate: default_output_predicate(&function),
        function,
        source: source.clone(),
        parameters,
    });

    // Plain attribute maps rotate through a pool so the union of referenced
    // attributes stays fixed while individual rules differ.
    let plain_pool: &[(&str, &str)] = match spec.function {
        FunctionKind::Simple => {
            &[("site", "Primary site"), ("gene", "gene"), ("hgvs", "hgvs")]
        }
        FunctionKind::Complex => {
            &[("site", "Primary site"), ("position", "Mutation genome position")]
        }
    };

    for i in 1..=spec.triples_maps {
        let template = Template::parse(&format!(
            "http://example.com/r{i}/{{GENOMIC_MUTATION_ID}}"
        ))
        .expect("static template");
        let mut poms = alloc::vec![PredicateObjectMap {
            predicate: PredicateSpec::Constant(Iri::new(format!("http://example.com/p{i}_variant"))),
            object: ObjectSpec::FunctionRef(fm_id.clone()),
        }];
        let mut plains = alloc::vec![plain_pool[(i - 1) % plain_pool.len()]];
        if i % 2 == 0 {
            let second = plain_pool[i % plain_pool.len()];
            if second != plains[0] {
                plains.push(second);
            }
        }
        for (name, attr) in plains {
            poms.push(PredicateObjectMap {
                predicate: PredicateSpec::Constant(Iri::new(format!(
                    "http://example.com/p{i}_{name}"
                ))),
                object: ObjectSpec::Term(TermMap::reference(attr)),
            });
        }
        doc.triples_maps.push(TriplesMap {
            id: Iri::new(format!("{TESTBED_BASE}#TriplesMap{i}")),
            source: source.clone(),
            subject: SubjectSpec::Term(TermMap::template(template.clone())),
            predicate_object_maps: poms,
        });
    }
    Ok(doc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relation::distinct_project;

    fn csv_source() -> SourceDescriptor {
        SourceDescriptor::CsvFile { path: "dataset.csv".to_string() }
    }

    #[test]
    fn duplicate_rate_produces_expected_distinct_count() {
        let spec = TestbedSpec::new(1000, 0.75, 4, FunctionKind::Simple);
        let rel = generate_dataset(&spec).unwrap();
        assert_eq!(rel.len(), 1000);
        let all = rel.attributes().to_vec();
        let distinct = distinct_project(&rel, &all).unwrap();
        assert_eq!(distinct.len(), 250);
    }

    #[test]
    fn zero_rate_means_all_rows_distinct() {
        let spec = TestbedSpec::new(200, 0.0, 4, FunctionKind::Complex);
        let rel = generate_dataset(&spec).unwrap();
        let all = rel.attributes().to_vec();
        assert_eq!(distinct_project(&rel, &all).unwrap().len(), 200);
    }

    #[test]
    fn same_seed_is_identical() {
        let spec = TestbedSpec::new(100, 0.25, 4, FunctionKind::Simple);
        assert_eq!(generate_dataset(&spec).unwrap(), generate_dataset(&spec).unwrap());
        let mut other = spec;
        other.seed = 43;
        assert_ne!(generate_dataset(&spec).unwrap(), generate_dataset(&other).unwrap());
    }

    #[test]
    fn key_duplication_repeats_inputs_not_records() {
        let mut spec = TestbedSpec::new(100, 0.5, 4, FunctionKind::Simple);
        spec.duplication = DuplicationKind::Key;
        let rel = generate_dataset(&spec).unwrap();
        let all = rel.attributes().to_vec();
        // Whole records stay distinct, the function key does not.
        assert_eq!(distinct_project(&rel, &all).unwrap().len(), 100);
        let keys: Vec<String> =
            spec.function.input_attributes().iter().map(|s| (*s).to_string()).collect();
        assert_eq!(distinct_project(&rel, &keys).unwrap().len(), 50);
    }

    #[test]
    fn dataset_has_the_documented_width() {
        let spec = TestbedSpec::new(10, 0.0, 4, FunctionKind::Simple);
        let rel = generate_dataset(&spec).unwrap();
        assert_eq!(rel.attributes().len(), DATASET_ATTRIBUTES);
    }

    #[test]
    fn mappings_share_one_function_map() {
        let spec = TestbedSpec::new(10, 0.0, 10, FunctionKind::Complex);
        let doc = generate_mappings(&spec, &csv_source()).unwrap();
        assert_eq!(doc.triples_maps.len(), 10);
        assert_eq!(doc.function_maps.len(), 1);
        let refs = doc.referenced_function_maps();
        assert_eq!(refs.len(), 1);
        let occurrences: usize = doc
            .triples_maps
            .iter()
            .flat_map(|tm| &tm.predicate_object_maps)
            .filter(|pom| matches!(pom.object, ObjectSpec::FunctionRef(_)))
            .count();
        assert_eq!(occurrences, 10);
    }

    #[test]
    fn minimal_single_rule_document() {
        let spec = TestbedSpec::new(10, 0.0, 1, FunctionKind::Simple);
        let doc = generate_mappings(&spec, &csv_source()).unwrap();
        assert_eq!(doc.triples_maps.len(), 1);
        assert!(crate::model::validate_document(&doc).is_empty());
    }

    #[test]
    fn referenced_attribute_union_is_stable() {
        for kind in [FunctionKind::Simple, FunctionKind::Complex] {
            let spec = TestbedSpec::new(10, 0.0, 4, kind);
            let doc = generate_mappings(&spec, &csv_source()).unwrap();
            let mut union: Vec<String> = Vec::new();
            for tm in &doc.triples_maps {
                for attr in crate::rewrite::referenced_attributes(&doc, tm).unwrap() {
                    if !union.contains(&attr) {
                        union.push(attr);
                    }
                }
            }
            assert_eq!(union.len(), 5, "union for {kind:?}: {union:?}");
        }
    }
}
