use std::path::Path;

use netalloc::formats::{load_results, results_string, ResultRow, RESULTS_HEADER};
use netalloc::io::{edge_list_string, features_string, load_dataset, read_edge_list, read_features, save_dataset};
use netalloc::{Error, ExperimentConfig};
use netalloc_core::dgp::Dataset;
use netalloc_core::graph::{barabasi_albert, watts_strogatz};
use netalloc_core::rng::stream;
use netalloc_core::Matrix;
use proptest::prelude::*;
use tempfile::TempDir;

fn read(text: &str) -> netalloc::Result<netalloc_core::Graph> {
    read_edge_list(text.as_bytes(), Path::new("mem.edges"))
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6f64..1e6, -1.0f64..1.0, Just(0.0), Just(-0.0), Just(f64::MIN_POSITIVE)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn edge_lists_round_trip(n in 6usize..200, seed in any::<u64>(), ws in any::<bool>()) {
        let g = if ws {
            watts_strogatz(n, 4, 0.2, &mut stream(seed, 0)).unwrap()
        } else {
            barabasi_albert(n, 2, &mut stream(seed, 0)).unwrap()
        };
        let text = edge_list_string(&g);
        let back = read(&text).unwrap();
        prop_assert_eq!(&back, &g);
        prop_assert_eq!(edge_list_string(&back), text);
    }

    #[test]
    fn edge_orientation_and_order_do_not_matter(n in 6usize..80, seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::Rng;
        let g = barabasi_albert(n, 2, &mut stream(seed, 0)).unwrap();
        let mut rng = stream(seed, 1);
        let mut lines: Vec<String> = g
            .edges()
            .map(|(i, j)| if rng.random_bool(0.5) { format!("{j} {i}") } else { format!("{i} {j}") })
            .collect();
        lines.shuffle(&mut rng);
        let text = format!("n {n}\n{}\n", lines.join("\n"));
        prop_assert_eq!(read(&text).unwrap(), g);
    }

    #[test]
    fn reversed_duplicate_is_reported_at_its_line(n in 6usize..80, seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let g = barabasi_albert(n, 2, &mut stream(seed, 0)).unwrap();
        let edges: Vec<(usize, usize)> = g.edges().collect();
        let (i, j) = edges[pick.index(edges.len())];
        let mut text = edge_list_string(&g);
        text.push_str(&format!("{j} {i}\n"));
        let line = edges.len() + 2;
        match read(&text) {
            Err(Error::Parse { line: l, .. }) => prop_assert_eq!(l, line),
            other => prop_assert!(false, "expected a parse error, got {:?}", other),
        }
    }

    #[test]
    fn features_round_trip_bit_exactly(rows in 1usize..20, cols in 1usize..6, values in prop::collection::vec(finite(), 120)) {
        let data: Vec<f64> = values.into_iter().cycle().take(rows * cols).collect();
        let x = Matrix::from_vec(rows, cols, data).unwrap();
        let text = features_string(&x);
        let back = read_features(text.as_bytes(), Path::new("mem.csv")).unwrap();
        prop_assert_eq!(back.rows(), rows);
        for (a, b) in back.as_slice().iter().zip(x.as_slice()) {
            prop_assert_eq!(a.to_bits() == b.to_bits() || (*a == 0.0 && *b == 0.0), true);
        }
    }

    #[test]
    fn datasets_round_trip(t in prop::collection::vec(any::<bool>(), 1..50), seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = stream(seed, 0);
        let z = (0..t.len()).map(|_| rng.random_range(0.0..=1.0)).collect();
        let y = (0..t.len()).map(|_| if rng.random_bool(0.3) { 1.0 } else { rng.random_range(0.0..1.0) }).collect();
        let data = Dataset { t, z, y };
        let dir = TempDir::new().unwrap();
        let p = dir.path().join("d.csv");
        save_dataset(&data, &p).unwrap();
        prop_assert_eq!(load_dataset(&p).unwrap(), data);
    }

    #[test]
    fn results_round_trip(
        rows in prop::collection::vec(
            (0usize..5000, 0.0f64..100.0, finite(), prop::option::of(finite()), prop::option::of(finite()), prop::option::of(0.0f64..1e4)),
            0..20,
        )
    ) {
        let rows: Vec<ResultRow> = rows
            .into_iter()
            .enumerate()
            .map(|(i, (k, k_pct, tte, liftup, riseo, seconds))| ResultRow {
                run_id: format!("r/seed={i}/beta=0.3"),
                method: "greedy".into(),
                k,
                k_pct,
                tte,
                liftup,
                riseo,
                seconds,
            })
            .collect();
        let text = results_string(&rows);
        prop_assert!(text.starts_with(RESULTS_HEADER));
        let dir = TempDir::new().unwrap();
        let p = dir.path().join("results.csv");
        std::fs::write(&p, &text).unwrap();
        prop_assert_eq!(load_results(&p).unwrap(), rows);
    }

    #[test]
    fn budgets_stay_within_the_network(n in 0usize..10_000, a in 0.0f64..=100.0, b in 0.0f64..=100.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(ExperimentConfig::budget(hi, n) <= n);
        prop_assert!(ExperimentConfig::budget(lo, n) <= ExperimentConfig::budget(hi, n));
        prop_assert_eq!(ExperimentConfig::budget(100.0, n), n);
        prop_assert_eq!(ExperimentConfig::budget(0.0, n), 0);
    }
}
