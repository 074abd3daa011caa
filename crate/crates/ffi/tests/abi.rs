use std::ffi::{CStr, CString};
use std::ptr;

use stackelberg_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(stk_last_error()) }.to_string_lossy().into_owned()
}

fn linear(beta: &[f64], budget: f64) -> *mut StkGame {
    let mut game = ptr::null_mut();
    let status = unsafe { stk_game_linear_new(beta.as_ptr(), beta.len(), 0.0, budget, &mut game) };
    assert_eq!(status, StkStatus::Ok, "{}", last_error());
    assert!(!game.is_null());
    game
}

#[test]
fn losses_and_gradients_match_closed_forms() {
    let game = linear(&[1.0, 0.0], 2.0);
    let mu = [1.0, 0.0];
    let theta = [0.2, 0.0];
    let mut value = f64::NAN;
    unsafe {
        assert_eq!(stk_game_dim(game), 2);
        assert_eq!(stk_decision_loss(game, mu.as_ptr(), theta.as_ptr(), 2, &mut value), StkStatus::Ok);
        assert!((value - 0.34).abs() < 1e-15);
        assert_eq!(stk_agent_loss(game, mu.as_ptr(), theta.as_ptr(), 2, &mut value), StkStatus::Ok);
        assert!((value + 0.2).abs() < 1e-15);
        let mut grad = [0.0; 2];
        assert_eq!(stk_decision_grad_theta(game, mu.as_ptr(), theta.as_ptr(), 2, grad.as_mut_ptr()), StkStatus::Ok);
        // (theta - beta) + (mu.theta) mu
        assert!((grad[0] - (-0.8 + 0.2)).abs() < 1e-15 && grad[1] == 0.0);
        assert_eq!(stk_agent_grad_mu(game, mu.as_ptr(), theta.as_ptr(), 2, grad.as_mut_ptr()), StkStatus::Ok);
        assert_eq!(grad, [-0.2, -0.0]);
        stk_game_free(game);
    }
}

#[test]
fn equilibria_cross_the_boundary() {
    let game = linear(&[1.0, 0.0], 2.0);
    let mut theta = [0.0; 2];
    let mut mu = [0.0; 2];
    let mut risks = StkRisks::default();
    unsafe {
        let status = stk_equilibria(game, theta.as_mut_ptr(), mu.as_mut_ptr(), 2, &mut risks);
        assert_eq!(status, StkStatus::Ok, "{}", last_error());
        stk_game_free(game);
    }
    assert!((theta[0] - 0.2).abs() < 1e-15 && theta[1] == 0.0);
    assert!((mu[0] - 1.0).abs() < 1e-15 && mu[1] == 0.0);
    assert!((risks.dm_leads_risk_dm - 0.4).abs() < 1e-12);
    assert!((risks.agents_lead_risk_dm - 0.25).abs() < 1e-12);
    assert!((risks.dm_leads_risk_agents + 0.4).abs() < 1e-12);
    assert!((risks.agents_lead_risk_agents + 0.5).abs() < 1e-12);
}

#[test]
fn errors_map_to_status_codes() {
    let game = linear(&[1.0, 0.0], 2.0);
    let v = [0.0; 3];
    let mut value = 0.0;
    unsafe {
        assert_eq!(stk_decision_loss(ptr::null(), v.as_ptr(), v.as_ptr(), 2, &mut value), StkStatus::NullPointer);
        assert!(last_error().contains("game"));
        assert_eq!(stk_decision_loss(game, ptr::null(), v.as_ptr(), 2, &mut value), StkStatus::NullPointer);
        assert_eq!(stk_decision_loss(game, v.as_ptr(), v.as_ptr(), 3, &mut value), StkStatus::DimensionMismatch);
        assert_eq!(stk_decision_loss(game, v.as_ptr(), v.as_ptr(), 2, &mut value), StkStatus::Ok);
        assert_eq!(last_error(), "");
        let mut grad = [0.0; 1];
        assert_eq!(
            stk_decision_grad_theta(game, v.as_ptr(), v.as_ptr(), 2, ptr::null_mut()),
            StkStatus::NullPointer
        );
        assert_eq!(stk_equilibria(game, grad.as_mut_ptr(), grad.as_mut_ptr(), 1, ptr::null_mut()), StkStatus::NullPointer);
        stk_game_free(game);

        let flat = linear(&[0.0, 0.0], 1.0);
        let mut risks = StkRisks::default();
        let mut a = [0.0; 2];
        let mut b = [0.0; 2];
        assert_eq!(stk_equilibria(flat, a.as_mut_ptr(), b.as_mut_ptr(), 2, &mut risks), StkStatus::DegenerateGame);
        stk_game_free(flat);

        let mut out = ptr::null_mut();
        let beta = [1.0];
        assert_eq!(stk_game_linear_new(beta.as_ptr(), 1, 0.0, -1.0, &mut out), StkStatus::Config);
        assert!(out.is_null());
        let bad = CString::new(r#"{"variant": "logistic-constrained", "p": 1.5, "alpha": [2], "n": 10, "budget": 1}"#).unwrap();
        assert_eq!(stk_game_from_json(bad.as_ptr(), &mut out), StkStatus::Config);
        let junk = CString::new("{").unwrap();
        assert_eq!(stk_game_from_json(junk.as_ptr(), &mut out), StkStatus::Config);
        stk_game_free(ptr::null_mut());
        stk_trace_free(ptr::null_mut());
        assert_eq!(stk_game_dim(ptr::null()), 0);
        assert_eq!(stk_trace_len(ptr::null()), 0);
    }
}

#[test]
fn runs_produce_readable_traces() {
    let json = CString::new(r#"{"variant": "logistic-costly", "p": 0.5, "alpha": [1.5, 1.5], "n": 50, "lambda": 1}"#).unwrap();
    let run = CString::new(
        r#"{"order": "proactive", "epochs": 30, "inner_steps": 5, "eta0": 0.1, "eta_exponent": 0.75,
            "delta0": 1, "delta_exponent": 0.25, "fast_step": 0.01}"#,
    )
    .unwrap();
    unsafe {
        let mut game = ptr::null_mut();
        assert_eq!(stk_game_from_json(json.as_ptr(), &mut game), StkStatus::Ok, "{}", last_error());
        assert_eq!(stk_game_dim(game), 2);
        let mut trace = ptr::null_mut();
        assert_eq!(stk_run(game, run.as_ptr(), 7, &mut trace), StkStatus::Ok, "{}", last_error());
        assert_eq!(stk_trace_len(trace), 30);
        let mut theta = [0.0; 2];
        let mut mu = [0.0; 2];
        let mut rec = StkEpoch::default();
        assert_eq!(stk_trace_epoch(trace, 29, theta.as_mut_ptr(), mu.as_mut_ptr(), 2, &mut rec), StkStatus::Ok);
        assert_eq!(rec.epoch, 30);
        assert_eq!(rec.has_br_gap, 1);
        assert!(rec.loss_dm.is_finite() && rec.running_avg_dm.is_finite());
        assert_eq!(stk_trace_epoch(trace, 30, ptr::null_mut(), ptr::null_mut(), 2, &mut rec), StkStatus::InvalidArgument);
        assert_eq!(stk_trace_epoch(trace, 0, ptr::null_mut(), ptr::null_mut(), 0, &mut rec), StkStatus::Ok);
        assert_eq!(rec.epoch, 1);

        // same seed, same trace
        let mut again = ptr::null_mut();
        assert_eq!(stk_run(game, run.as_ptr(), 7, &mut again), StkStatus::Ok);
        let mut rec2 = StkEpoch::default();
        let mut theta2 = [0.0; 2];
        stk_trace_epoch(again, 29, theta2.as_mut_ptr(), ptr::null_mut(), 2, &mut rec2);
        assert_eq!(theta, theta2);
        assert_eq!(rec.epoch, 1);
        stk_trace_free(again);

        let wrong = CString::new(r#"{"order": "sideways"}"#).unwrap();
        let mut none = ptr::null_mut();
        assert_eq!(stk_run(game, wrong.as_ptr(), 0, &mut none), StkStatus::Config);
        assert!(none.is_null());
        stk_trace_free(trace);
        stk_game_free(game);
    }
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(stk_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/stackelberg.h")).unwrap();
    for name in [
        "stk_last_error",
        "stk_version",
        "stk_game_linear_new",
        "stk_game_from_json",
        "stk_game_free",
        "stk_game_dim",
        "stk_decision_loss",
        "stk_agent_loss",
        "stk_decision_grad_theta",
        "stk_agent_grad_mu",
        "stk_equilibria",
        "stk_run",
        "stk_trace_free",
        "stk_trace_len",
        "stk_trace_epoch",
        "typedef struct StkGame StkGame",
        "STK_STATUS_DIVERGED = 6",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

/// Compiles a C program against the generated header and links it to the
/// static library built alongside this test.
#[test]
fn c_program_links_against_static_library() {
    let manifest = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    // target/<profile>/deps/abi-<hash> -> target/<profile>
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|d| d.parent()).unwrap();
    let lib = profile_dir.join("libstackelberg_ffi.a");
    if !lib.exists() {
        eprintln!("skipping: {} not built", lib.display());
        return;
    }
    let compiler = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let out_dir = tempfile::tempdir().unwrap();
    let binary = out_dir.path().join("smoke");
    let status = std::process::Command::new(&compiler)
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&binary)
        .status();
    let Ok(status) = status else {
        eprintln!("skipping: no C compiler ({compiler})");
        return;
    };
    assert!(status.success(), "C compilation failed");
    let output = std::process::Command::new(&binary).output().unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    assert!(String::from_utf8_lossy(&output.stdout).starts_with("ok "));
}
