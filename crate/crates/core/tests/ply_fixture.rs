//! A hand-built three-splat PLY (see `data/gen_three_splats.py`) checked
//! against values computed independently with numpy.

use nalgebra::{Quaternion, Vector3};
use splatgen_core::splat::ply::{parse_ply, write_ply};
use splatgen_core::splat::evaluate_sh;

struct Expected {
    mean: [f64; 3],
    opacity: f64,
    scale: [f64; 3],
    quat: [f64; 4],
    cov: [[f64; 3]; 3],
    rgb: [f64; 3],
}

const EXPECTED: [Expected; 3] = [
    Expected {
        mean: [0.0, 0.0, 0.0],
        opacity: 0.5,
        scale: [0.1353352832366127; 3],
        quat: [1.0, 0.0, 0.0, 0.0],
        cov: [
            [0.018315638888734182, 0.0, 0.0],
            [0.0, 0.018315638888734182, 0.0],
            [0.0, 0.0, 0.018315638888734182],
        ],
        rgb: [0.5, 0.5, 0.5],
    },
    Expected {
        mean: [1.5, -0.25, 0.75],
        opacity: 0.8807970779778823,
        scale: [0.049787068367863944, 0.36787944117144233, 0.011108996538242306],
        quat: [0.9233805090715749, 0.10259783858802751, -0.3077935234082171, 0.20519567717605502],
        cov: [
            [0.027794051922368824, -0.052945245675111885, -0.0027310037992536607],
            [-0.05294524567511188, 0.10860269829052026, 0.008094885701056894],
            [-0.0027310037992536607, 0.008094885701056894, 0.0015406950044766685],
        ],
        rgb: [0.7456792849350853, 0.47511053651824137, 0.5992865164705053],
    },
    Expected {
        mean: [-2.0, 3.0, 0.10000000149011612],
        opacity: 0.18242552380635635,
        scale: [0.6065306597126334, 0.0820849986238988, 0.3011941975501432],
        quat: [0.0, 0.0, 0.0, 1.0],
        cov: [
            [0.36787944117144233, 0.0, 0.0],
            [0.0, 0.006737946999085468, 0.0],
            [0.0, 0.0, 0.09071794463787469],
        ],
        rgb: [0.3036403143690854, 0.708345083324684, 0.5048860251918367],
    },
];

fn fixture() -> Vec<u8> {
    std::fs::read(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/three_splats.ply")).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}

#[test]
fn three_splat_fixture_matches_numpy() {
    let cloud = parse_ply(&fixture(), "fixture").unwrap();
    assert_eq!(cloud.len(), 3);
    assert_eq!(cloud.sh_degree(), 1);
    let view = Vector3::new(0.6, 0.0, 0.8);
    for (g, e) in cloud.gaussians().iter().zip(&EXPECTED) {
        for i in 0..3 {
            assert!(close(g.mean[i], e.mean[i], 1e-12), "mean {i}");
            assert!(close(g.scale[i], e.scale[i], 1e-12), "scale {i}");
        }
        assert!(close(g.opacity, e.opacity, 1e-12));
        // q and -q are the same rotation
        let want = Quaternion::new(e.quat[0], e.quat[1], e.quat[2], e.quat[3]);
        assert!((g.rotation.quaternion().dot(&want).abs() - 1.0).abs() < 1e-12);
        let cov = g.covariance();
        for r in 0..3 {
            for c in 0..3 {
                assert!((cov[(r, c)] - e.cov[r][c]).abs() < 1e-12, "cov ({r},{c})");
            }
        }
        let rgb = evaluate_sh(&g.sh, &view, 1).unwrap();
        for ch in 0..3 {
            assert!((rgb[ch] - e.rgb[ch]).abs() < 1e-12, "rgb {ch}");
        }
    }
}

#[test]
fn fixture_survives_write_and_reparse() {
    let cloud = parse_ply(&fixture(), "fixture").unwrap();
    let again = parse_ply(&write_ply(&cloud), "fixture").unwrap();
    for (a, b) in cloud.gaussians().iter().zip(again.gaussians()) {
        assert!((a.mean - b.mean).norm() < 1e-6);
        assert!((a.opacity - b.opacity).abs() < 1e-6);
        assert!((a.covariance() - b.covariance()).norm() < 1e-6);
    }
}
