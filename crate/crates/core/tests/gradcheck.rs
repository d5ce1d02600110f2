use ingrasp::costs::CostWeights;
use ingrasp::fixtures::{gradcheck_scene, synthetic_grasp};
use ingrasp::gradcheck::{relative_error, run_gradcheck, GradcheckConfig, TERMS};
use nalgebra::DVector;

fn quick() -> GradcheckConfig {
    GradcheckConfig {
        samples: 15,
        ..GradcheckConfig::default()
    }
}

#[test]
fn every_term_passes() {
    let report = run_gradcheck(&synthetic_grasp(), &gradcheck_scene(), &CostWeights::default(), &quick()).unwrap();
    let names: Vec<&str> = report.terms.iter().map(|t| t.term.as_str()).collect();
    assert_eq!(names, TERMS);
    for t in &report.terms {
        assert!(t.passed, "{} failed with {}", t.term, t.max_relative_error);
        assert_eq!(t.samples, 15, "{} checked too few samples", t.term);
        assert!(t.max_relative_error <= 1e-5);
    }
    assert!(report.passed());
}

#[test]
fn injected_fault_is_named() {
    for term in ["relative_orientation", "collision"] {
        let cfg = GradcheckConfig {
            inject_fault: Some(term.into()),
            ..quick()
        };
        let report = run_gradcheck(&synthetic_grasp(), &gradcheck_scene(), &CostWeights::default(), &cfg).unwrap();
        let failed: Vec<&str> = report.failures().map(|t| t.term.as_str()).collect();
        assert_eq!(failed, vec![term]);
        assert!(!report.passed());
    }
}

#[test]
fn unknown_fault_is_an_error() {
    let cfg = GradcheckConfig {
        inject_fault: Some("nope".into()),
        ..quick()
    };
    assert!(run_gradcheck(&synthetic_grasp(), &gradcheck_scene(), &CostWeights::default(), &cfg).is_err());
}

#[test]
fn same_seed_same_report() {
    let cfg = GradcheckConfig {
        samples: 5,
        seed: 31,
        ..GradcheckConfig::default()
    };
    let run = || run_gradcheck(&synthetic_grasp(), &gradcheck_scene(), &CostWeights::default(), &cfg).unwrap();
    assert_eq!(run().terms, run().terms);
}

#[test]
fn relative_error_is_scale_aware() {
    let a = DVector::from_vec(vec![1.0, 2.0]);
    assert_eq!(relative_error(&a, &a), 0.0);
    let b = DVector::from_vec(vec![1.0, 2.0 + 2e-6]);
    let e = relative_error(&a, &b);
    assert!(e > 0.0 && e < 1e-5);
}
