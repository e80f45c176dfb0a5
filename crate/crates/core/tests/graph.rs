mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tendon_hand::config::TendonFile;
use tendon_hand::tendon_model::{
    build_connection_matrices, count_branches, enumerate_branches, long_finger_graph, matrix_csv, validate_graph,
    SegmentEdge, TendonGraph, Vertex,
};

fn graph(n_m: usize, n_j: usize, n_t: usize, edges: &[(Vertex, Vertex)]) -> TendonGraph {
    TendonGraph {
        muscles: (0..n_m).map(|i| format!("M{i}")).collect(),
        junctions: (0..n_j).map(|i| format!("J{i}")).collect(),
        terminals: (0..n_t).map(|i| format!("T{i}")).collect(),
        segments: edges
            .iter()
            .enumerate()
            .map(|(i, (from, to))| SegmentEdge {
                id: i + 1,
                from: *from,
                to: *to,
            })
            .collect(),
    }
}

#[test]
fn golden_matrices() {
    let o = common::check_golden_matrices();
    assert!(o.pass, "{}", o.detail);
}

#[test]
fn single_segment_tendon() {
    let g = graph(1, 0, 1, &[(Vertex::Muscle(0), Vertex::Terminal(0))]);
    let c = count_branches(&g).unwrap();
    assert_eq!((c.n_b, c.n_j, c.n_ct, c.n_s, c.n_m), (1, 0, 0, 1, 1));
    let b = enumerate_branches(&g).unwrap();
    assert_eq!(b.len(), 1);
    assert_eq!(b[0].segments, vec![1]);
}

#[test]
fn three_way_split() {
    use Vertex::{Junction as J, Muscle as M, Terminal as T};
    let g = graph(1, 1, 3, &[(M(0), J(0)), (J(0), T(0)), (J(0), T(1)), (J(0), T(2))]);
    let c = count_branches(&g).unwrap();
    assert_eq!((c.n_b, c.n_j, c.n_ct, c.n_s, c.n_m), (3, 1, 3, 4, 1));
    assert_eq!(c.n_b, common::count_paths(&g));
}

#[test]
fn long_finger_branches() {
    let b = enumerate_branches(&long_finger_graph()).unwrap();
    assert_eq!(b.len(), 10);
    assert_eq!(b[3].segments, vec![3, 8, 15, 18]);
    assert_eq!(b[7].segments, vec![4, 12, 17, 18]);
    let muscles: Vec<usize> = b.iter().map(|x| x.muscle).collect();
    assert_eq!(muscles, vec![0, 1, 1, 2, 2, 3, 3, 3, 4, 4]);
}

#[test]
fn long_finger_matrix_rows() {
    let m = build_connection_matrices(&long_finger_graph()).unwrap();
    let ones: Vec<usize> = (0..18).filter(|&s| m.c_bs[(3, s)] == 1.0).map(|s| s + 1).collect();
    assert_eq!(ones, vec![3, 8, 15, 18]);
    assert_eq!(m.c_bs.row(3).sum(), 4.0);
    let j1: Vec<(usize, f64)> = (0..18).filter(|&s| m.c_js[(0, s)] != 0.0).map(|s| (s + 1, m.c_js[(0, s)])).collect();
    assert_eq!(j1, vec![(2, -1.0), (6, 1.0), (7, 1.0)]);
    assert_eq!(m.c_tb[(1, 1)], 0.5);
    assert_eq!(m.c_tb[(1, 2)], 0.5);
    for b in 5..8 {
        assert_eq!(m.c_tb[(3, b)], 1.0 / 3.0);
    }
    for row in 0..5 {
        assert!((m.c_tb.row(row).sum() - 1.0).abs() < 1e-15);
    }
}

#[test]
fn default_file_matches_built_in_graph() {
    let g = TendonFile::embedded().unwrap().graph().unwrap();
    assert_eq!(g, long_finger_graph());
    assert!(validate_graph(&g).is_valid());
}

#[test]
fn counting_on_random_graphs() {
    let o = common::check_counting(500);
    assert!(o.pass, "{}", o.detail);
}

#[test]
fn random_graphs_are_valid() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let g = common::random_graph(&mut rng);
        let report = validate_graph(&g);
        assert!(report.is_valid(), "{report}");
    }
}

#[test]
fn csv_round_trips_through_the_golden_reader() {
    let g = long_finger_graph();
    let m = build_connection_matrices(&g).unwrap();
    let rows: Vec<String> = g.junctions.clone();
    let cols: Vec<String> = (1..=18).map(|s| format!("s{s}")).collect();
    let text = matrix_csv(&m.c_js, &rows, &cols);
    let (r, c, back) = common::read_matrix_csv(&text);
    assert_eq!(r, rows);
    assert_eq!(c, cols);
    assert_eq!(back, m.c_js);
}
