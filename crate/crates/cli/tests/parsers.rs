use bellreg_cli::config::parse_config;
use bellreg_cli::data::{parse_dataset_str, DatasetOptions};
use proptest::prelude::*;

proptest! {
    #[test]
    fn dataset_parser_never_panics(text in "\\PC{0,200}") {
        let _ = parse_dataset_str(&text, &DatasetOptions::default());
    }

    #[test]
    fn dataset_parser_rows_round_trip(
        rows in proptest::collection::vec((0u64..50, -1e3f64..1e3, -1e3f64..1e3), 3..40),
    ) {
        let mut text = String::from("y,a,b\n");
        for (y, a, b) in &rows {
            text.push_str(&format!("{y},{a},{b}\n"));
        }
        let d = parse_dataset_str(&text, &DatasetOptions::default()).unwrap();
        prop_assert_eq!(d.dataset.n(), rows.len());
        for (i, (y, a, b)) in rows.iter().enumerate() {
            prop_assert_eq!(d.dataset.y()[i], *y);
            prop_assert_eq!(d.dataset.x()[(i, 1)], *a);
            prop_assert_eq!(d.dataset.x()[(i, 2)], *b);
        }
    }

    #[test]
    fn config_parser_never_panics(text in "\\PC{0,200}") {
        let _ = parse_config(&text);
    }

    #[test]
    fn config_round_trips(seed in any::<u64>(), n_iter in 2usize..100_000, tau in 1e-3f64..1e6) {
        let text = format!(r#"{{"seed": {seed}, "mcmc": {{"n_iter": {n_iter}, "burn_in": 1}}, "prior": {{"kind": "flat", "tau": {tau}}}}}"#);
        let c = parse_config(&text).unwrap();
        let again = parse_config(&serde_json::to_string(&c).unwrap()).unwrap();
        prop_assert_eq!(&again, &c);
        prop_assert_eq!(again.hash(), c.hash());
    }
}

#[test]
fn fuzz_seeds_parse() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus");
    for entry in std::fs::read_dir(root.join("parse_config")).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(parse_config(&text).is_ok(), "{}", path.display());
    }
    for name in ["mine_fracture.csv", "small.csv", "float_counts.csv"] {
        let text = std::fs::read_to_string(root.join("parse_dataset").join(name)).unwrap();
        assert!(parse_dataset_str(&text, &DatasetOptions::default()).is_ok(), "{name}");
    }
}
