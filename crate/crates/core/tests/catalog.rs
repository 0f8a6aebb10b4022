use etas_core::catalog::read_catalog;
use etas_core::{load_catalog, split_domain, validate, Catalog, CsvFormat, Event, TimeDomain};
use proptest::prelude::*;

fn events_strategy() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1e4f64..1e4, 0.0f64..9.0), 0..200)
}

#[test]
fn csv_round_trip_through_a_file() {
    let cat = Catalog::from_pairs(&[(0.1, 3.0), (1.0 / 3.0, 4.25), (1e-9, 2.5), (500.0, 6.7)]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cat.csv");
    cat.save_csv(&path).unwrap();
    let back = load_catalog(&path, &CsvFormat::default()).unwrap();
    assert_eq!(back.events(), cat.events());
}

#[test]
fn alternative_column_names_and_missing_ids() {
    let text = "ts,mag\n2.0,3.1\n1.0,2.9\n";
    let cat = read_catalog(text.as_bytes(), &CsvFormat::default()).unwrap();
    assert_eq!(cat.len(), 2);
    assert_eq!(cat.events()[0], Event::new(1.0, 2.9, 1));
}

#[test]
fn malformed_rows_report_their_line() {
    let text = "time,magnitude\n1.0,3.0\nabc,3.0\n";
    let err = read_catalog(text.as_bytes(), &CsvFormat::default()).unwrap_err();
    assert!(err.to_string().contains('3'), "{err}");
    assert!(read_catalog("time,magnitude\n1.0,NaN\n".as_bytes(), &CsvFormat::default()).is_err());
    assert!(read_catalog("when,magnitude\n1.0,3.0\n".as_bytes(), &CsvFormat::default()).is_err());
}

#[test]
fn duplicate_ids_are_rejected() {
    let ev = vec![Event::new(1.0, 3.0, 7), Event::new(2.0, 3.0, 7)];
    assert!(Catalog::new(ev).is_err());
}

#[test]
fn validation_counts() {
    let cat = Catalog::from_pairs(&[(-1.0, 3.0), (1.0, 2.0), (1.0, 3.0), (20.0, 4.0)]);
    let dom = TimeDomain::new(0.0, 10.0, 2.5).unwrap();
    let r = validate(&cat, &dom);
    assert_eq!(r.n_events, 4);
    assert_eq!(r.below_m0, 1);
    assert_eq!(r.duplicate_times, 1);
    assert_eq!(r.outside_domain, 2);
    assert_eq!(r.max_magnitude, Some(4.0));
}

proptest! {
    #[test]
    fn csv_round_trip(pairs in events_strategy()) {
        let cat = Catalog::from_pairs(&pairs);
        let mut buf = Vec::new();
        cat.write_csv(&mut buf).unwrap();
        let back = read_catalog(buf.as_slice(), &CsvFormat::default()).unwrap();
        prop_assert_eq!(back.len(), cat.len());
        for (a, b) in back.iter().zip(cat.iter()) {
            prop_assert!((a.time - b.time).abs() <= 1e-12 * b.time.abs());
            prop_assert!((a.magnitude - b.magnitude).abs() <= 1e-12 * b.magnitude.abs());
            prop_assert_eq!(a.id, b.id);
        }
    }

    #[test]
    fn catalogue_is_time_ordered(pairs in events_strategy()) {
        let cat = Catalog::from_pairs(&pairs);
        for w in cat.events().windows(2) {
            prop_assert!(w[0].time <= w[1].time);
        }
    }

    #[test]
    fn split_partitions_events_above_threshold(
        pairs in events_strategy(),
        t1 in -5e3f64..0.0,
        len in 1.0f64..1e4,
    ) {
        let cat = Catalog::from_pairs(&pairs);
        let dom = TimeDomain::new(t1, t1 + len, 2.5).unwrap();
        let (hist, modeled) = split_domain(&cat, &dom);
        prop_assert!(hist.iter().all(|e| e.time < dom.t1));
        prop_assert!(modeled.iter().all(|e| e.time >= dom.t1 && e.time <= dom.t2));
        let kept = cat.iter().filter(|e| e.magnitude >= 2.5 && e.time <= dom.t2).count();
        prop_assert_eq!(hist.len() + modeled.len(), kept);
    }
}
