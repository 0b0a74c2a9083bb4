use std::ffi::CStr;
use std::ptr;

use trustmdp_ffi::*;

fn defaults(horizon: u32) -> (TmParams, TmRewardConfig) {
    let mut p = TmParams { alpha0: 0.0, beta0: 0.0, w_success: 0.0, w_failure: 0.0 };
    let mut c = TmRewardConfig {
        w_health: 0.0,
        w_time: 0.0,
        w_trust: 0.0,
        health_loss: 0.0,
        rarv_time: 0.0,
        horizon: 0,
    };
    unsafe {
        assert_eq!(tm_params_default(&mut p), TmStatus::Ok);
        assert_eq!(tm_reward_config_default(horizon, &mut c), TmStatus::Ok);
    }
    (p, c)
}

fn last_error() -> String {
    let p = tm_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(tm_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn trust_update_matches_counts() {
    let p = TmParams { alpha0: 2.0, beta0: 3.0, w_success: 0.5, w_failure: 1.5 };
    let (mut a, mut b) = (2.0, 3.0);
    unsafe {
        assert_eq!(tm_update_state(&p, 1, &mut a, &mut b), TmStatus::Ok);
        assert_eq!(tm_update_state(&p, 0, &mut a, &mut b), TmStatus::Ok);
    }
    assert_eq!((a, b), (2.5, 4.5));
    let mut m = 0.0;
    unsafe { assert_eq!(tm_trust_mean(a, b, &mut m), TmStatus::Ok) };
    assert_eq!(m, 2.5 / 7.0);

    let mut traj = [0.0; 3];
    let perf = [1u8, 1, 0];
    unsafe { assert_eq!(tm_predict_trajectory(&p, perf.as_ptr(), 3, traj.as_mut_ptr()), TmStatus::Ok) };
    assert_eq!(traj, [2.5 / 5.5, 3.0 / 6.0, 3.0 / 7.5]);
}

#[test]
fn performance_truth_table() {
    let (_, cfg) = defaults(10);
    let mut out = 9u8;
    let cases = [
        (TmAction::UseRarv, true, 1),
        (TmAction::UseRarv, false, 0),
        (TmAction::NoRarv, true, 0),
        (TmAction::NoRarv, false, 1),
    ];
    for (rec, threat, want) in cases {
        unsafe { assert_eq!(tm_performance(rec, threat, &cfg, &mut out), TmStatus::Ok) };
        assert_eq!(out, want, "{rec:?} threat={threat}");
    }
}

#[test]
fn errors_are_reported() {
    let (p, cfg) = defaults(10);
    let mut m = 0.0;
    unsafe {
        assert_eq!(tm_trust_mean(-1.0, 1.0, &mut m), TmStatus::InvalidArgument);
        assert!(!last_error().is_empty());
        assert_eq!(tm_trust_mean(1.0, 1.0, ptr::null_mut()), TmStatus::NullPointer);
        assert!(last_error().contains("out"));
        assert_eq!(tm_trust_mean(1.0, 1.0, &mut m), TmStatus::Ok);
        assert!(tm_last_error_message().is_null());

        let (mut a, mut b) = (1.0, 1.0);
        assert_eq!(tm_update_state(&p, 2, &mut a, &mut b), TmStatus::InvalidArgument);
        assert_eq!((a, b), (1.0, 1.0));

        let bad = TmRewardConfig { w_health: f64::NAN, ..cfg };
        let mut out = 0u8;
        assert_eq!(tm_performance(TmAction::NoRarv, true, &bad, &mut out), TmStatus::InvalidArgument);
        assert_eq!(tm_predict_trajectory(&p, ptr::null(), 2, &mut m), TmStatus::NullPointer);
        assert_eq!(tm_predict_trajectory(&p, ptr::null(), 0, ptr::null_mut()), TmStatus::Ok);

        let mut f_p = 0.0;
        assert_eq!(tm_anova_p_value(1.0, 0.0, 5.0, &mut f_p), TmStatus::InvalidArgument);
    }
}

#[test]
fn anova_tail_probability() {
    let mut p = 0.0;
    unsafe { assert_eq!(tm_anova_p_value(0.0, 2.0, 42.0, &mut p), TmStatus::Ok) };
    assert_eq!(p, 1.0);
    // F(2, d) has survival function (1 + 2F/d)^(-d/2).
    unsafe { assert_eq!(tm_anova_p_value(4.991, 2.0, 42.0, &mut p), TmStatus::Ok) };
    let want = (1.0f64 + 2.0 * 4.991 / 42.0).powf(-21.0);
    assert!((p - want).abs() < 1e-10, "{p} vs {want}");
}

#[test]
fn fit_recovers_generating_parameters() {
    let truth = TmParams { alpha0: 3.0, beta0: 2.0, w_success: 1.2, w_failure: 2.5 };
    let perf: Vec<u8> = (0..30).map(|i| u8::from(i % 4 != 0)).collect();
    let mut traj = vec![0.0; perf.len()];
    unsafe { tm_predict_trajectory(&truth, perf.as_ptr(), perf.len(), traj.as_mut_ptr()) };
    let stages: Vec<u32> = (1..=30).collect();
    let (init, _) = defaults(30);
    let mut fitted = init;
    let st = unsafe {
        tm_fit_params(stages.as_ptr(), traj.as_ptr(), 30, perf.as_ptr(), 30, &init, &mut fitted)
    };
    assert_eq!(st, TmStatus::Ok, "{}", last_error());
    let mut refit = vec![0.0; 30];
    unsafe { tm_predict_trajectory(&fitted, perf.as_ptr(), 30, refit.as_mut_ptr()) };
    let rmse = (traj.iter().zip(&refit).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 30.0).sqrt();
    assert!(rmse < 0.02, "rmse {rmse}");

    let short = [1u8; 3];
    let st = unsafe {
        tm_fit_params(stages.as_ptr(), traj.as_ptr(), 30, short.as_ptr(), 3, &init, &mut fitted)
    };
    assert_eq!(st, TmStatus::InvalidArgument);
}

#[test]
fn recommend_extremes() {
    let (p, cfg) = defaults(5);
    let mut a = TmAction::UseRarv;
    let mut v = f64::NAN;
    unsafe {
        assert_eq!(tm_recommend(&p, &cfg, 1, 1.0, 1.0, 0.0, &mut a, &mut v), TmStatus::Ok);
        assert_eq!(a, TmAction::NoRarv);
        assert!(v.is_finite());
        assert_eq!(tm_recommend(&p, &cfg, 1, 1.0, 1.0, 1.0, &mut a, ptr::null_mut()), TmStatus::Ok);
        assert_eq!(a, TmAction::UseRarv);
        assert_eq!(tm_recommend(&p, &cfg, 9, 1.0, 1.0, 0.5, &mut a, &mut v), TmStatus::InvalidArgument);
    }
}

#[test]
fn agent_lifecycle() {
    let (p, cfg) = defaults(6);
    let mut agent: *mut TmAgent = ptr::null_mut();
    unsafe {
        assert_eq!(tm_agent_new(&p, &cfg, 0.3, 2, &mut agent), TmStatus::Ok);
        assert!(!agent.is_null());

        assert_eq!(tm_agent_report_trust(agent, 0.5), TmStatus::InvalidState);
        assert_eq!(tm_agent_observe(agent, true, ptr::null_mut()), TmStatus::InvalidState);

        let mut prev = 0.0;
        tm_agent_trust_estimate(agent, &mut prev);
        for site in 1..=6u32 {
            let mut stage = 0;
            tm_agent_stage(agent, &mut stage);
            assert_eq!(stage, site);
            let (mut a1, mut a2) = (TmAction::NoRarv, TmAction::UseRarv);
            assert_eq!(tm_agent_recommend(agent, &mut a1), TmStatus::Ok);
            assert_eq!(tm_agent_recommend(agent, &mut a2), TmStatus::Ok);
            assert_eq!(a1, a2);
            let mut perf = 9u8;
            let threat = a1 == TmAction::UseRarv;
            assert_eq!(tm_agent_observe(agent, threat, &mut perf), TmStatus::Ok);
            assert_eq!(perf, 1);
            assert_eq!(tm_agent_observe(agent, threat, &mut perf), TmStatus::InvalidState);
            assert_eq!(tm_agent_report_trust(agent, 1.5), TmStatus::InvalidArgument);
            assert_eq!(tm_agent_report_trust(agent, 0.9), TmStatus::Ok);
        }
        let mut a = TmAction::NoRarv;
        assert_eq!(tm_agent_recommend(agent, &mut a), TmStatus::InvalidState);
        assert!(last_error().contains("expected"));

        let mut fitted = p;
        assert_eq!(tm_agent_params(agent, &mut fitted), TmStatus::Ok);
        assert_ne!(fitted, p, "refits should have moved the parameters");
        let mut est = 0.0;
        tm_agent_trust_estimate(agent, &mut est);
        assert!(est > 0.0 && est < 1.0);

        tm_agent_free(agent);
        tm_agent_free(ptr::null_mut());

        let mut other: *mut TmAgent = ptr::null_mut();
        assert_eq!(tm_agent_new(&p, &cfg, 1.5, 0, &mut other), TmStatus::InvalidArgument);
        assert!(other.is_null());
        assert_eq!(tm_agent_recommend(ptr::null_mut(), &mut a), TmStatus::NullPointer);
    }
}
