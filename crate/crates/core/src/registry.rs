//! Declared transformation functions: signatures, a write-once registry,
//! and the built-in catalog. Every implementation must be pure and
//! deterministic; materializing a function once per distinct input tuple is
//! only lossless under that assumption. The registry counts evaluations so
//! callers can verify the once-per-distinct-tuple property.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::sync::atomic::{AtomicU64, Ordering};

use crate::iri::Iri;

/// Namespace of the built-in functions.
pub const FN_NS: &str = "http://example.com/fn#";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FunctionError {
    Duplicate(Iri),
    Unknown(Iri),
    ArityMismatch { function: Iri, expected: usize, got: usize },
    /// A mapping supplies a parameter predicate the signature does not
    /// declare, or omits a required one.
    ParameterMismatch { function: Iri, predicate: Iri },
}

impl fmt::Display for FunctionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FunctionError::Duplicate(name) => write!(f, "function <{name}> already registered"),
            FunctionError::Unknown(name) => write!(f, "unknown function <{name}>"),
            FunctionError::ArityMismatch { function, expected, got } => {
                write!(f, "<{function}> expects {expected} arguments, got {got}")
            }
            FunctionError::ParameterMismatch { function, predicate } => {
                write!(f, "<{function}> has no parameter <{predicate}>")
            }
        }
    }
}

impl core::error::Error for FunctionError {}

/// Declared shape of a function: ordered input parameters and one output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionSignature {
    pub name: Iri,
    pub params: Vec<ParamSpec>,
    pub output_predicate: Iri,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub predicate: Iri,
    pub required: bool,
}

impl FunctionSignature {
    /// Count of required inputs.
    pub fn arity(&self) -> usize {
        self.params.iter().filter(|p| p.required).count()
    }
}

type EvalFn = fn(&[Option<&str>]) -> Option<String>;

/// A registered function: signature plus a pure evaluation rule mapping a
/// tuple of cells to one cell.
#[derive(Clone)]
pub struct FunctionImpl {
    pub signature: FunctionSignature,
    eval: EvalFn,
}

impl fmt::Debug for FunctionImpl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FunctionImpl").field("signature", &self.signature).finish()
    }
}

impl FunctionImpl {
    pub fn new(signature: FunctionSignature, eval: EvalFn) -> Self {
        FunctionImpl { signature, eval }
    }
}

/// Write-once function registry with per-function evaluation counters.
///
/// `evaluate` is reentrant; counters use atomics so a populated registry can
/// be shared freely.
#[derive(Debug, Default)]
pub struct FunctionRegistry {
    functions: BTreeMap<Iri, FunctionImpl>,
    counters: BTreeMap<Iri, AtomicU64>,
}

impl FunctionRegistry {
    pub fn new() -> Self {
        FunctionRegistry::default()
    }

    /// Registry pre-loaded with the built-in catalog.
    pub fn with_builtins() -> Self {
        let mut registry = FunctionRegistry::new();
        for builtin in builtin_catalog() {
            registry.register(builtin).expect("builtin names are distinct");
        }
        registry
    }

    pub fn register(&mut self, implementation: FunctionImpl) -> Result<(), FunctionError> {
        let name = implementation.signature.name.clone();
        if self.functions.contains_key(&name) {
            return Err(FunctionError::Duplicate(name));
        }
        self.counters.insert(name.clone(), AtomicU64::new(0));
        self.functions.insert(name, implementation);
        Ok(())
    }

    pub fn lookup(&self, name: &Iri) -> Option<&FunctionImpl> {
        self.functions.get(name)
    }

    pub fn signature(&self, name: &Iri) -> Result<&FunctionSignature, FunctionError> {
        self.functions
            .get(name)
            .map(|f| &f.signature)
            .ok_or_else(|| FunctionError::Unknown(name.clone()))
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &Iri> {
        self.functions.keys()
    }

    /// Evaluate a function on one argument tuple, ordered like the
    /// signature's parameters. A NULL in any required position propagates to
    /// a NULL result without running the rule body. Every call counts as one
    /// evaluation.
    pub fn evaluate(&self, name: &Iri, args: &[Option<&str>]) -> Result<Option<String>, FunctionError> {
        let function = self.functions.get(name).ok_or_else(|| FunctionError::Unknown(name.clone()))?;
        let params = &function.signature.params;
        if args.len() != params.len() {
            return Err(FunctionError::ArityMismatch {
                function: name.clone(),
                expected: params.len(),
                got: args.len(),
            });
        }
        self.counters
            .get(name)
            .expect("counter registered with function")
            .fetch_add(1, Ordering::Relaxed);
        for (param, arg) in params.iter().zip(args) {
            if param.required && arg.is_none() {
                return Ok(None);
            }
        }
        Ok((function.eval)(args))
    }

    /// Snapshot of evaluation counts per function.
    pub fn eval_counts(&self) -> BTreeMap<Iri, u64> {
        self.counters
            .iter()
            .map(|(name, counter)| (name.clone(), counter.load(Ordering::Relaxed)))
            .collect()
    }
}

fn fn_iri(local: &str) -> Iri {
    Iri::new(format!("{FN_NS}{local}"))
}

/// The built-in catalog.
///
/// `variant-id` composes a unified variant identifier from a gene name and a
/// coding alteration: strip the leading `c.`, replace `>` with `~`, join
/// with `_` ("BCR" + "c.1001C>T" -> "BCR_1001C~T").
///
/// `simple-bench` takes one input and performs one operation (lowercase);
/// `complex-bench` takes two inputs and performs five operations (trim both,
/// lowercase, join with `_`, replace spaces with `-`, prefix a constant
/// tag).
pub fn builtin_catalog() -> Vec<FunctionImpl> {
    let variant_id = FunctionImpl::new(
        FunctionSignature {
            name: fn_iri("variant-id"),
            params: alloc::vec![
                ParamSpec { predicate: fn_iri("gene"), required: true },
                ParamSpec { predicate: fn_iri("hgvs"), required: true },
            ],
            output_predicate: fn_iri("variant-id-output"),
        },
        |args| {
            let gene = args[0]?;
            let hgvs = args[1]?;
            let alteration = hgvs.strip_prefix("c.").unwrap_or(hgvs);
            Some(format!("{gene}_{}", alteration.replace('>', "~")))
        },
    );

    let simple_bench = FunctionImpl::new(
        FunctionSignature {
            name: fn_iri("simple-bench"),
            params: alloc::vec![ParamSpec { predicate: fn_iri("input"), required: true }],
            output_predicate: fn_iri("simple-bench-output"),
        },
        |args| Some(args[0]?.to_lowercase()),
    );

    let complex_bench = FunctionImpl::new(
        FunctionSignature {
            name: fn_iri("complex-bench"),
            params: alloc::vec![
                ParamSpec { predicate: fn_iri("first"), required: true },
                ParamSpec { predicate: fn_iri("second"), required: true },
            ],
            output_predicate: fn_iri("complex-bench-output"),
        },
        |args| {
            let first = args[0]?.trim();
            let second = args[1]?.trim();
            let joined = format!("{}_{}", first.to_lowercase(), second.to_lowercase());
            Some(format!("tag_{}", joined.replace(' ', "-")))
        },
    );

    alloc::vec![variant_id, simple_bench, complex_bench]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn register_then_lookup() {
        let registry = FunctionRegistry::with_builtins();
        assert!(registry.lookup(&fn_iri("variant-id")).is_some());
        assert!(registry.len() >= 3);
    }

    #[test]
    fn duplicate_registration_is_rejected() {
        let mut registry = FunctionRegistry::with_builtins();
        let again = builtin_catalog().into_iter().next().unwrap();
        assert_eq!(
            registry.register(again).unwrap_err(),
            FunctionError::Duplicate(fn_iri("variant-id"))
        );
    }

    #[test]
    fn variant_id_composes_the_documented_identifier() {
        let registry = FunctionRegistry::with_builtins();
        let out = registry
            .evaluate(&fn_iri("variant-id"), &[Some("BCR"), Some("c.1001C>T")])
            .unwrap();
        assert_eq!(out.as_deref(), Some("BCR_1001C~T"));
    }

    #[test]
    fn null_propagates_without_running_the_body() {
        let registry = FunctionRegistry::with_builtins();
        let out = registry.evaluate(&fn_iri("variant-id"), &[Some("BCR"), None]).unwrap();
        assert_eq!(out, None);
    }

    #[test]
    fn complex_bench_golden() {
        let registry = FunctionRegistry::with_builtins();
        let out = registry
            .evaluate(&fn_iri("complex-bench"), &[Some(" Lung "), Some("Carcinoma X")])
            .unwrap();
        assert_eq!(out.as_deref(), Some("tag_lung_carcinoma-x"));
    }

    #[test]
    fn arities_match_the_declared_complexity() {
        let registry = FunctionRegistry::with_builtins();
        assert_eq!(registry.signature(&fn_iri("simple-bench")).unwrap().arity(), 1);
        assert_eq!(registry.signature(&fn_iri("complex-bench")).unwrap().arity(), 2);
    }

    #[test]
    fn arity_mismatch_is_an_error() {
        let registry = FunctionRegistry::with_builtins();
        let err = registry.evaluate(&fn_iri("simple-bench"), &[Some("a"), Some("b")]).unwrap_err();
        assert!(matches!(err, FunctionError::ArityMismatch { expected: 1, got: 2, .. }));
    }

    #[test]
    fn evaluation_counts_accumulate() {
        let registry = FunctionRegistry::with_builtins();
        for _ in 0..5 {
            registry.evaluate(&fn_iri("simple-bench"), &[Some("AbC")]).unwrap();
        }
        assert_eq!(registry.eval_counts()[&fn_iri("simple-bench")], 5);
        assert_eq!(registry.eval_counts()[&fn_iri("complex-bench")], 0);
    }

    #[test]
    fn determinism_across_repeated_calls() {
        let registry = FunctionRegistry::with_builtins();
        let first = registry.evaluate(&fn_iri("simple-bench"), &[Some("MiXeD")]).unwrap();
        let second = registry.evaluate(&fn_iri("simple-bench"), &[Some("MiXeD")]).unwrap();
        assert_eq!(first, second);
        assert_eq!(first.as_deref(), Some("mixed"));
    }
}
