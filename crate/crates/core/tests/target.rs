use wbmia::data::{gen_gnb_meta_params, gen_synthetic};
use wbmia::target::{closed_form_gnb_linear, evaluate_model, TargetSpec};

#[test]
fn closed_form_model_is_at_least_as_good_as_trained_linear() {
    for s in 0..3 {
        let truth = gen_gnb_meta_params(10, 20, s).unwrap();
        let train = gen_synthetic(&truth, 1000, 10 + s).unwrap();
        let test = gen_synthetic(&truth, 1000, 20 + s).unwrap();
        let closed = closed_form_gnb_linear(&truth).unwrap();
        let trained = TargetSpec::linear().train(&train, 30 + s).unwrap();
        let a = evaluate_model(&closed, &test).unwrap().accuracy;
        let b = evaluate_model(&trained, &test).unwrap().accuracy;
        assert!(a >= b - 0.02, "closed form {a} vs trained {b}");
    }
}
