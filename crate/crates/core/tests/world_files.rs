use geoloc::world::{
    generate_synthetic_world, load_graph, parse_graph, save_graph, write_graph, Layout, SyntheticWorldConfig,
};
use geoloc::Error;

#[test]
fn generated_world_survives_file_roundtrip() {
    let cfg = SyntheticWorldConfig { layout: Layout::Grid { cols: 101, rows: 100, block: 10 }, seed: 17, ..Default::default() };
    let g = generate_synthetic_world(&cfg).unwrap();
    assert_eq!(g.len(), 2000);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.graph");
    save_graph(&g, &path).unwrap();
    let back = load_graph(&path).unwrap();
    assert_eq!(back.locations(), g.locations());
    assert_eq!(write_graph(&back), std::fs::read_to_string(&path).unwrap());
}

#[test]
fn planar_world_roundtrip() {
    let cfg = SyntheticWorldConfig { layout: Layout::RandomPlanar { node_count: 300 }, seed: 2, ..Default::default() };
    let g = generate_synthetic_world(&cfg).unwrap();
    let back = parse_graph(&write_graph(&g)).unwrap();
    assert_eq!(back.locations(), g.locations());
}

#[test]
fn malformed_files_name_the_problem() {
    let dangling = "N 0 0 0 0 -\nN 1 10 0 0 -\nE 0 7\n";
    match parse_graph(dangling) {
        Err(e) => assert!(e.to_string().contains('7'), "{e}"),
        Ok(_) => panic!("dangling edge accepted"),
    }
    let garbage = "N 0 0 0 0 -\nN 1 banana 0 0 -\n";
    assert!(matches!(parse_graph(garbage), Err(Error::Parse { line: 2, .. })));
    let dup = "N 0 0 0 0 -\nN 1 10 0 0 -\nE 0 1\nE 1 0\n";
    assert!(parse_graph(dup).is_err());
}
