use plscore_wasm::{biplot_inner, ci_forest_inner, cv_votes_inner, simulate_inner};

fn data(family: &str) -> String {
    simulate_inner(50, 5, family, 0.05, 4).unwrap()
}

#[test]
fn biplot_from_simulated_csv() {
    let svg = biplot_inner(&data("gaussian"), "y", "gaussian", 2).unwrap();
    assert!(svg.starts_with("<?xml"));
    assert_eq!(svg.matches("class=\"arrow\"").count(), 5);
}

#[test]
fn forest_marks_every_predictor() {
    let svg = ci_forest_inner(&data("binomial"), "y", "binomial", 2, "yt", 200, "percentile", 1).unwrap();
    let marked = svg.matches("<line class=\"sig\"").count() + svg.matches("<line class=\"nonsig\"").count();
    assert_eq!(marked, 5);
    let again = ci_forest_inner(&data("binomial"), "y", "binomial", 2, "yt", 200, "percentile", 1).unwrap();
    assert_eq!(svg, again);
}

#[test]
fn votes_chart_has_one_bar_per_count() {
    let svg = cv_votes_inner(&data("poisson"), "y", "poisson", 3, 5, 4, "q2chi2_threshold", 2).unwrap();
    assert_eq!(svg.matches("class=\"bar\"").count(), 4);
}

#[test]
fn errors_are_machine_readable() {
    let err = biplot_inner(&data("gaussian"), "y", "gamma", 2).unwrap_err();
    let v: serde_json::Value = serde_json::from_str(&err).unwrap();
    assert_eq!(v["class"], "config");
    let err = biplot_inner("a,b\n1,2\n", "y", "gaussian", 2).unwrap_err();
    assert!(err.contains("\"status\":\"error\""));
}
