use relmem_web::{compare_selection, judge_scores, render_shape};

#[test]
fn separated_clusters_get_one_exemplar_each() {
    let mut pts = Vec::new();
    for i in 0..10 {
        let jitter = i as f32 * 0.01;
        pts.extend([jitter, 0.0]);
        pts.extend([10.0 + jitter, 10.0]);
    }
    let c = compare_selection(&pts, 2, 4).unwrap();
    for sel in [&c.greedy, &c.kmeans] {
        assert_eq!(sel.indices.len(), 2);
        let sides: Vec<usize> = sel.indices.iter().map(|i| i % 2).collect();
        assert!(sides.contains(&0) && sides.contains(&1), "{:?}", sel.indices);
        assert!(sel.loss < 0.1);
    }
    let json = relmem_web::compare_selection_js(&pts, 2, 4).unwrap();
    assert!(json.contains("\"greedy\"") && json.contains("\"kmeans\""));
}

#[test]
fn every_class_renders() {
    for class in ["line", "angle", "triangle", "quadrilateral", "pentagon"] {
        let s = render_shape(class, 1).unwrap();
        assert!(s.pixels.iter().any(|&p| p > 0.0), "{class}");
    }
}

#[test]
fn wider_dead_zone_zeroes_more_entries() {
    let scores = [-0.25, 0.15, 0.4, 0.05];
    let zeros = |g| judge_scores(&scores, g).unwrap().signature.iter().filter(|&&s| s == 0).count();
    assert!(zeros(0.0) <= zeros(0.1) && zeros(0.1) <= zeros(0.3));
    assert_eq!(zeros(0.5), 4);
}
