mod common;

use common::*;

const INSTANCES: u64 = 200;

#[test]
fn conv1d_matches_direct_summation_exactly() {
    for i in 0..INSTANCES {
        let (got, want) = conv1d_case(i, true);
        assert_eq!(got, want, "instance {i}");
    }
}

#[test]
fn conv2d_matches_direct_summation_exactly() {
    for i in 0..INSTANCES {
        let (got, want) = conv2d_case(i, true);
        assert_eq!(got, want, "instance {i}");
    }
}

#[test]
fn convs_match_direct_summation_on_real_values() {
    for i in 0..INSTANCES {
        for (got, want) in [conv1d_case(i, false), conv2d_case(i, false)] {
            assert_eq!(got.len(), want.len());
            for (a, b) in got.iter().zip(&want) {
                assert!(
                    (a - b).abs() <= 1e-12 * (1.0 + b.abs()),
                    "instance {i}: {a} vs {b}"
                );
            }
        }
    }
}

#[test]
fn dtw_matches_brute_force_exactly() {
    for i in 0..INSTANCES {
        let (path, best, optimal) = dtw_case(i);
        assert_eq!(path.total_cost, best, "instance {i}: cost");
        assert!(
            optimal.contains(&path.pairs),
            "instance {i}: {:?} is not an optimal path",
            path.pairs
        );
    }
}
