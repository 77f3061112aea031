//! In-memory relations: the carrier for logical-source rows, projections,
//! duplicate elimination, and function materialization. Cells are
//! `Option<String>`; `None` is the SQL NULL marker and is distinct from the
//! empty string a CSV field produces.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use hashbrown::HashSet;

use crate::model::SourceDescriptor;

/// A table cell; `None` marks NULL.
pub type Cell = Option<String>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RelationError {
    UnknownAttribute(String),
    /// Duplicate attribute name in a header or result set.
    Schema(String),
    /// A row's cell count does not match the header.
    RowWidth { expected: usize, got: usize },
}

impl fmt::Display for RelationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RelationError::UnknownAttribute(name) => write!(f, "unknown attribute '{name}'"),
            RelationError::Schema(name) => write!(f, "duplicate attribute name '{name}'"),
            RelationError::RowWidth { expected, got } => {
                write!(f, "row has {got} cells, header has {expected}")
            }
        }
    }
}

impl core::error::Error for RelationError {}

/// An ordered-attribute table with string cells.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Relation {
    attributes: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl Relation {
    /// Build a relation, checking attribute uniqueness and row widths.
    pub fn new(attributes: Vec<String>, rows: Vec<Vec<Cell>>) -> Result<Self, RelationError> {
        for (idx, attr) in attributes.iter().enumerate() {
            if attributes[..idx].contains(attr) {
                return Err(RelationError::Schema(attr.clone()));
            }
        }
        for row in &rows {
            if row.len() != attributes.len() {
                return Err(RelationError::RowWidth { expected: attributes.len(), got: row.len() });
            }
        }
        Ok(Relation { attributes, rows })
    }

    pub fn empty(attributes: Vec<String>) -> Result<Self, RelationError> {
        Relation::new(attributes, Vec::new())
    }

    pub fn attributes(&self) -> &[String] {
        &self.attributes
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push_row(&mut self, row: Vec<Cell>) -> Result<(), RelationError> {
        if row.len() != self.attributes.len() {
            return Err(RelationError::RowWidth { expected: self.attributes.len(), got: row.len() });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn attribute_index(&self, name: &str) -> Result<usize, RelationError> {
        self.attributes
            .iter()
            .position(|a| a == name)
            .ok_or_else(|| RelationError::UnknownAttribute(String::from(name)))
    }

    pub fn attribute_indices(&self, names: &[String]) -> Result<Vec<usize>, RelationError> {
        names.iter().map(|n| self.attribute_index(n)).collect()
    }
}

/// Project `rel` onto `attrs` (in the given order) and drop duplicate rows.
///
/// Dedup compares exact cell values; NULL equals NULL. The first occurrence
/// of each distinct tuple fixes the output order, so the result is
/// deterministic for a given input row order.
pub fn distinct_project(rel: &Relation, attrs: &[String]) -> Result<Relation, RelationError> {
    let indices = rel.attribute_indices(attrs)?;
    let mut seen: HashSet<Vec<Cell>> = HashSet::with_capacity(rel.len());
    let mut rows = Vec::new();
    for row in rel.rows() {
        let projected: Vec<Cell> = indices.iter().map(|&i| row[i].clone()).collect();
        if seen.insert(projected.clone()) {
            rows.push(projected);
        }
    }
    Relation::new(attrs.to_vec(), rows)
}

/// Loaded relations keyed by the descriptor they came from. The rewrite
/// engine and the materializer take their inputs here instead of touching
/// files or connections.
#[derive(Debug, Clone, Default)]
pub struct SourceSet {
    map: BTreeMap<String, Relation>,
}

impl SourceSet {
    pub fn new() -> Self {
        SourceSet::default()
    }

    pub fn insert(&mut self, descriptor: &SourceDescriptor, relation: Relation) {
        self.map.insert(descriptor.key(), relation);
    }

    pub fn get(&self, descriptor: &SourceDescriptor) -> Option<&Relation> {
        self.map.get(&descriptor.key())
    }

    pub fn contains(&self, descriptor: &SourceDescriptor) -> bool {
        self.map.contains_key(&descriptor.key())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::borrow::ToOwned;
    use alloc::vec;

    fn cell(s: &str) -> Cell {
        Some(s.to_owned())
    }

    fn names(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| (*s).to_owned()).collect()
    }

    #[test]
    fn rejects_duplicate_attributes() {
        let err = Relation::new(names(&["a", "a"]), vec![]).unwrap_err();
        assert_eq!(err, RelationError::Schema("a".to_owned()));
    }

    #[test]
    fn distinct_project_collapses_equal_tuples() {
        // Rows 2 and 4 share the projected value, so one of them goes.
        let rel = Relation::new(
            names(&["id", "position"]),
            vec![
                vec![cell("1"), cell("7:140453136")],
                vec![cell("2"), cell("9:133738306")],
                vec![cell("3"), cell("12:25398284")],
                vec![cell("4"), cell("9:133738306")],
            ],
        )
        .unwrap();
        let projected = distinct_project(&rel, &names(&["position"])).unwrap();
        assert_eq!(projected.len(), 3);
        assert_eq!(projected.attributes(), &names(&["position"])[..]);
    }

    #[test]
    fn distinct_project_identity_on_duplicate_free() {
        let rel = Relation::new(
            names(&["a", "b"]),
            vec![vec![cell("1"), cell("x")], vec![cell("2"), cell("y")]],
        )
        .unwrap();
        let projected = distinct_project(&rel, &names(&["a", "b"])).unwrap();
        assert_eq!(projected, rel);
    }

    #[test]
    fn null_equals_null_for_dedup_but_not_empty_string() {
        let rel = Relation::new(
            names(&["a"]),
            vec![vec![None], vec![cell("")], vec![None], vec![cell("")]],
        )
        .unwrap();
        let projected = distinct_project(&rel, &names(&["a"])).unwrap();
        assert_eq!(projected.len(), 2);
        assert_eq!(projected.rows()[0], vec![None]);
        assert_eq!(projected.rows()[1], vec![cell("")]);
    }

    #[test]
    fn unknown_attribute_is_an_error() {
        let rel = Relation::new(names(&["a"]), vec![]).unwrap();
        let err = distinct_project(&rel, &names(&["b"])).unwrap_err();
        assert_eq!(err, RelationError::UnknownAttribute("b".to_owned()));
    }
}
