mod common;

use common::*;
use lfrb::basis::{load_basis, save_basis};
use lfrb::io::{load_system, save_system};
use lfrb::model::ConductivityPoint;
use lfrb::numerics::dense::{frobenius_distance, relative_distance};
use lfrb::numerics::exact_leadfield;

#[test]
fn basis_roundtrip_preserves_online_results() {
    let (sys, _) = synthetic(24, 11);
    let grid = small_grid();
    let basis = greedy(&sys, &grid, 7);
    let dir = tempfile::tempdir().unwrap();
    save_basis(dir.path(), &basis).unwrap();
    let back = load_basis(dir.path()).unwrap();
    assert_eq!(back.supports, basis.supports);
    assert_eq!(back.provenance, basis.provenance);
    for s in grid.samples().iter().step_by(3) {
        let a = basis.approximate(s).unwrap();
        let b = back.approximate(s).unwrap();
        assert_eq!(a.alpha.alpha, b.alpha.alpha);
        assert_eq!(frobenius_distance(&a.leadfield, &b.leadfield), 0.0);
    }
}

#[test]
fn loaded_basis_can_be_extended() {
    let (sys, _) = synthetic(24, 12);
    let grid = small_grid();
    let mut basis = greedy(&sys, &grid, 5);
    let dir = tempfile::tempdir().unwrap();
    save_basis(dir.path(), &basis).unwrap();
    let mut back = load_basis(dir.path()).unwrap();
    let extra = ConductivityPoint::new(vec![1.3, 0.2, 1.0]).unwrap();
    basis.add_support(&sys, &extra, None).unwrap();
    back.add_support(&sys, &extra, None).unwrap();
    let probe = ConductivityPoint::new(vec![0.8, 0.05, 1.0]).unwrap();
    let (a, b) = (basis.solve(&probe).unwrap(), back.solve(&probe).unwrap());
    assert_eq!(a.alpha, b.alpha);
    let l = back.approximate(&extra).unwrap().leadfield;
    assert!(relative_distance(&l, &exact_leadfield(&sys, &extra).unwrap()) < 1e-8);
}

#[test]
fn system_roundtrip_reassembles_identically() {
    let (sys, spec) = synthetic(16, 2);
    let dir = tempfile::tempdir().unwrap();
    save_system(dir.path(), "synthetic", &sys, &spec.domain).unwrap();
    let (back, _) = load_system(dir.path()).unwrap();
    let s = ConductivityPoint::new(vec![1.7, 0.02, 1.0]).unwrap();
    assert!(relative_distance(&back.assemble_h(&s).unwrap(), &sys.assemble_h(&s).unwrap()) <= 1e-12);
    assert!(relative_distance(&back.assemble_d(&s).unwrap(), &sys.assemble_d(&s).unwrap()) <= 1e-12);
}

#[test]
fn corrupt_basis_file_is_a_format_error() {
    let (sys, _) = synthetic(12, 1);
    let basis = greedy(&sys, &small_grid(), 4);
    let dir = tempfile::tempdir().unwrap();
    save_basis(dir.path(), &basis).unwrap();
    let f = dir.path().join("gram_hi.lfrb");
    let bytes = std::fs::read(&f).unwrap();
    std::fs::write(&f, &bytes[..bytes.len() - 8]).unwrap();
    assert!(matches!(load_basis(dir.path()), Err(lfrb::Error::Format { .. })));
}
