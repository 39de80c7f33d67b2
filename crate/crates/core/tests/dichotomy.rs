use rslab::frac::FracParams;
use rslab::fujita::{dichotomy_sweep, Amplitude, SweepAxis, SweepConfig, SweepReport};
use rslab::spectral::auto_box_half_length;

fn system() -> SweepConfig {
    SweepConfig {
        axis: SweepAxis::System {
            rho1: 3.0,
            rho2s: vec![1.0, 4.0],
        },
        amplitude: Amplitude::Explicit { value: 0.003 },
        ..SweepConfig::default()
    }
}

fn assert_blow_times_close(a: &SweepReport, b: &SweepReport) {
    assert_eq!(a.statuses, b.statuses);
    for (x, y) in a.points.iter().zip(&b.points) {
        if let (Some(s), Some(t)) = (x.t_blow, y.t_blow) {
            assert!((s - t).abs() <= 0.2 * s.min(t), "blow-up times {s} vs {t}");
        }
    }
}

#[test]
fn halving_the_step_keeps_classification() {
    for base in [SweepConfig::default(), system()] {
        let coarse = dichotomy_sweep(&base).unwrap();
        let fine = dichotomy_sweep(&SweepConfig {
            dt_max: base.dt_max / 2.0,
            cfl: base.cfl / 2.0,
            ..base.clone()
        })
        .unwrap();
        assert_blow_times_close(&coarse, &fine);
    }
}

#[test]
fn doubling_points_and_box_keeps_classification() {
    for base in [SweepConfig::default(), system()] {
        let params = FracParams::new(base.alpha, base.k).unwrap();
        let half = auto_box_half_length(&params, base.t_end);
        let a = dichotomy_sweep(&SweepConfig {
            box_half_length: Some(half),
            ..base.clone()
        })
        .unwrap();
        let b = dichotomy_sweep(&SweepConfig {
            points_per_axis: 2 * base.points_per_axis,
            box_half_length: Some(2.0 * half),
            ..base.clone()
        })
        .unwrap();
        assert_blow_times_close(&a, &b);
    }
}

#[test]
fn sweep_is_deterministic() {
    let cfg = SweepConfig {
        axis: SweepAxis::Scalar { rhos: vec![2.0, 4.0] },
        ..SweepConfig::default()
    };
    let a = serde_json::to_string(&dichotomy_sweep(&cfg).unwrap()).unwrap();
    let b = serde_json::to_string(&dichotomy_sweep(&cfg).unwrap()).unwrap();
    assert_eq!(a, b);
    let rep: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert_eq!(rep["schema_version"], 1);
    assert_eq!(rep["metadata"]["config_hash"], cfg.hash());
}
