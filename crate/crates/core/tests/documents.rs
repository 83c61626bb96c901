use std::path::PathBuf;

use formsym::factorize::{reduce, FactorizeError, ReduceOptions};
use formsym::model::ModelError;
use formsym::{load_equation, load_equation_file, EquationKind, GroupTag};

fn equations_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../equations")
}

#[test]
fn shipped_equations_load() {
    let mut count = 0;
    for entry in std::fs::read_dir(equations_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "eq") {
            let eq = load_equation_file(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert_eq!(eq.name(), path.file_stem().unwrap().to_str().unwrap());
            count += 1;
        }
    }
    assert!(count >= 8);
}

#[test]
fn shipped_equations_reduce_as_documented() {
    let load = |name: &str| load_equation_file(equations_dir().join(format!("{name}.eq"))).unwrap();
    for name in ["exp", "hs", "2hd1", "rk2", "lin_32", "hd0"] {
        let reduced = reduce(&load(name), &ReduceOptions::default()).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(!reduced.reduction.describe().is_empty(), "{name}");
    }
    assert!(matches!(reduce(&load("nonred"), &ReduceOptions::default()), Err(FactorizeError::NoSymmetry)));
}

#[test]
fn linear_documents_use_the_complex_group() {
    let eq = load_equation_file(equations_dir().join("lin_32.eq")).unwrap();
    assert!(matches!(eq.kind(), EquationKind::Linear { .. }));
    assert_eq!(eq.group(), GroupTag::AdditiveComplex);
}

#[test]
fn malformed_documents_are_rejected() {
    let base = "[equation]\norder = 1\ngroup = \"additive\"\nkind = \"general\"\nrhs = \"a*x0\"\n\n[params]\na = 2\n";
    assert!(load_equation(base).is_ok());
    assert!(matches!(load_equation("order = 1"), Err(ModelError::MissingKey(_))));
    assert!(matches!(load_equation(&base.replace("order = 1", "order = 0")), Err(ModelError::InvalidValue { .. })));
    assert!(matches!(load_equation(&base.replace("\"general\"", "\"cubic\"")), Err(ModelError::UnknownKind(_))));
    assert!(matches!(load_equation(&base.replace("\"additive\"", "\"cyclic\"")), Err(ModelError::UnknownGroup(_))));
    assert!(matches!(load_equation(&base.replace("a*x0", "a*x3")), Err(ModelError::UnknownVariable { .. })));
    assert!(matches!(load_equation(&base.replace("a*x0", "a*x0 +")), Err(ModelError::Expr { .. })));
    assert!(matches!(load_equation("[equation"), Err(ModelError::Document(_))));
}
