use std::fs;

use fastfem::mesh::{generate_beam, load_tetgen, write_tetgen};
use fastfem::Error;
use tempfile::tempdir;

fn write_pair(dir: &std::path::Path, node: &str, ele: &str) -> (std::path::PathBuf, std::path::PathBuf) {
    let (n, e) = (dir.join("m.node"), dir.join("m.ele"));
    fs::write(&n, node).unwrap();
    fs::write(&e, ele).unwrap();
    (n, e)
}

const NODES0: &str = "4 3 0 0\n0 0 0 0\n1 1 0 0\n2 0 1 0\n3 0 0 1\n";
const ELE0: &str = "1 4 0\n0 0 1 2 3\n";

#[test]
fn single_tet_files() {
    let dir = tempdir().unwrap();
    let (n, e) = write_pair(dir.path(), NODES0, ELE0);
    let m = load_tetgen(&n, &e).unwrap();
    assert_eq!(m.num_elements(), 1);
    assert_eq!(m.num_nodes(), 4);
    assert_eq!(m.nodes()[1], [1.0, 0.0, 0.0]);
}

#[test]
fn one_based_matches_zero_based() {
    let dir = tempdir().unwrap();
    let (n0, e0) = write_pair(dir.path(), NODES0, ELE0);
    let zero = load_tetgen(&n0, &e0).unwrap();
    let sub = dir.path().join("one");
    fs::create_dir(&sub).unwrap();
    let (n1, e1) = write_pair(
        &sub,
        "# one-based\n4 3 0 0\n1 0 0 0\n2 1 0 0\n3 0 1 0\n4 0 0 1\n",
        "1 4 0\n1 1 2 3 4 # trailing comment\n",
    );
    let one = load_tetgen(&n1, &e1).unwrap();
    assert_eq!(zero.nodes(), one.nodes());
    assert_eq!(zero.elements(), one.elements());
}

#[test]
fn regenerated_beam_round_trips_exactly() {
    let dir = tempdir().unwrap();
    let mesh = generate_beam(4, 3, 5, 0.037).unwrap().translated([0.1, -0.2, 0.3]);
    let (n, e) = (dir.path().join("b.node"), dir.path().join("b.ele"));
    write_tetgen(&mesh, &n, &e).unwrap();
    let back = load_tetgen(&n, &e).unwrap();
    assert_eq!(back.nodes(), mesh.nodes());
    assert_eq!(back.elements(), mesh.elements());
}

fn parse_line(err: Error) -> usize {
    match err {
        Error::Parse { line, .. } => line,
        other => panic!("expected a parse error, got {other}"),
    }
}

#[test]
fn malformed_files_name_the_line() {
    let dir = tempdir().unwrap();
    let (n, e) = write_pair(dir.path(), "4 2 0 0\n", ELE0);
    assert_eq!(parse_line(load_tetgen(&n, &e).unwrap_err()), 1);

    let (n, e) = write_pair(dir.path(), "4 3 0 0\n0 0 0 0\n1 1 0\n2 0 1 0\n3 0 0 1\n", ELE0);
    assert_eq!(parse_line(load_tetgen(&n, &e).unwrap_err()), 3);

    let (n, e) = write_pair(dir.path(), NODES0, "1 4 0\n0 0 1 2 9\n");
    assert_eq!(parse_line(load_tetgen(&n, &e).unwrap_err()), 2);

    let (n, e) = write_pair(dir.path(), "x 3 0 0\n", ELE0);
    let err = load_tetgen(&n, &e).unwrap_err();
    assert!(err.to_string().starts_with("mesh: "), "{err}");
}

#[test]
fn missing_file_is_an_io_error() {
    let dir = tempdir().unwrap();
    let err = load_tetgen(dir.path().join("none.node"), dir.path().join("none.ele")).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
}
