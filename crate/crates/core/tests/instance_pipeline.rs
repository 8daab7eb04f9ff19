use proptest::prelude::*;
use rec_apc::instances::{
    generate_instance, ingest_ratings, read_assignments, ClusterMode, GeneratorConfig,
    IngestConfig, Rating, RatingsTable,
};
use rec_apc::Instance;

fn ratings_table() -> impl Strategy<Value = RatingsTable> {
    (2usize..8, 2usize..8).prop_flat_map(|(users, items)| {
        prop::collection::vec(prop::option::weighted(0.7, 1u8..=5), users * items).prop_map(
            move |cells| {
                let mut ratings = Vec::new();
                for (idx, cell) in cells.iter().enumerate() {
                    let (u, i) = (idx / items, idx % items);
                    // the diagonal guarantees every user and item appears
                    let r = if u % items == i || i % users == u {
                        Some(cell.unwrap_or(3))
                    } else {
                        *cell
                    };
                    if let Some(r) = r {
                        ratings.push(Rating {
                            user_id: format!("u{u}"),
                            item_id: format!("i{i}"),
                            rating: f64::from(r),
                        });
                    }
                }
                RatingsTable::new(ratings, 5.0).unwrap()
            },
        )
    })
}

proptest! {
    #[test]
    fn generated_instances_round_trip(k in 1usize..6, m in 1usize..6, seed in any::<u64>()) {
        let inst = generate_instance(&GeneratorConfig::new(k, m, seed)).unwrap();
        let back = Instance::from_json(&inst.to_json()).unwrap();
        prop_assert_eq!(&back, &inst);
        for row in 0..k {
            prop_assert!(inst.row(row).iter().all(|p| (0.01..=0.99).contains(p)));
        }
        let total: f64 = inst.prior().weights().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coclustering_objective_never_increases(table in ratings_table(), seed in any::<u64>()) {
        let config = IngestConfig {
            n_user_clusters: 2,
            n_item_clusters: 2,
            mode: ClusterMode::AlternatingKmeans,
            noise_std: 0.0,
            seed,
        };
        let out = ingest_ratings(&table, &config).unwrap();
        let trace = &out.metadata.objective_trace;
        prop_assert!(trace.len() <= 2 * 100 + 1);
        for w in trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9, "{:?}", trace);
        }
        let total: f64 = out.instance.prior().weights().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_ingest_is_pure(table in ratings_table(), seed in any::<u64>()) {
        let config = IngestConfig {
            n_user_clusters: 2,
            n_item_clusters: 2,
            mode: ClusterMode::AlternatingKmeans,
            noise_std: 0.0,
            seed,
        };
        prop_assert_eq!(ingest_ratings(&table, &config).unwrap(), ingest_ratings(&table, &config).unwrap());
    }
}

#[test]
fn external_assignment_files() {
    let table = RatingsTable::from_reader(
        "user_id,item_id,rating\na,x,5\na,y,1\nb,x,4\nb,y,2\nc,x,1\nc,y,5\n".as_bytes(),
        5.0,
    )
    .unwrap();
    let users = read_assignments("user_id,cluster\na,1\nb,1\nc,2\n".as_bytes()).unwrap();
    let items = read_assignments("item_id,cluster\nx,1\ny,2\n".as_bytes()).unwrap();
    let config = IngestConfig {
        n_user_clusters: 2,
        n_item_clusters: 2,
        mode: ClusterMode::External { users, items },
        noise_std: 0.0,
        seed: 0,
    };
    let out = ingest_ratings(&table, &config).unwrap();
    let inst = out.instance;
    // item cluster 1 (x): users {a,b} average 4.5, user c rates 1
    assert!((inst.pref(0, 0) - 0.9).abs() < 1e-12);
    assert!((inst.pref(0, 1) - 0.2).abs() < 1e-12);
    assert!((inst.pref(1, 0) - 0.3).abs() < 1e-12);
    assert!((inst.pref(1, 1) - 0.99).abs() < 1e-12);
    assert!((inst.prior()[0] - 2.0 / 3.0).abs() < 1e-12);
}
