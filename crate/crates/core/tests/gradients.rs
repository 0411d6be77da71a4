mod common;

use common::{gradient_error, random_case};

#[test]
fn fifty_random_models_match_central_differences() {
    let worst = (0..50u64).map(gradient_error).fold(0.0, f64::max);
    assert!(worst < 1e-4, "worst relative error {worst:e}");
}

#[test]
fn random_cases_exercise_the_reversal_path() {
    for seed in 0..50u64 {
        let (model, batch) = random_case(seed);
        assert!(!model.domain_heads.is_empty());
        assert!(model.n_params() <= 400, "{}", model.n_params());
        let (loss, _) = model.loss_and_grads(&batch).unwrap();
        let parts = loss.reconstruction + loss.per_task.iter().sum::<f64>() + loss.per_domain.iter().sum::<f64>();
        assert!((loss.total - parts).abs() < 1e-9);
    }
}

#[test]
fn encoder_update_flips_sign_of_domain_gradient() {
    // with only the domain loss active the encoder gradient is exactly
    // -lambda times the gradient of that loss
    let (mut model, batch) = random_case(7);
    model.config.alpha = 0.0;
    model.config.beta = 0.0;
    let n_enc = model.n_encoder_params();
    let lambda = model.config.lambda;
    let g1 = model.loss_and_grads(&batch).unwrap().1.flatten();
    model.config.lambda = 1.0;
    model.reversal.lambda = 1.0;
    let g_unit = model.loss_and_grads(&batch).unwrap().1.flatten();
    for i in 0..n_enc {
        assert!((g1[i] - lambda * g_unit[i]).abs() <= 1e-12 * (1.0 + g1[i].abs()), "{i}");
    }
}

