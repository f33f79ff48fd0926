//! The C ABI, exercised from Rust and checked against the core crate.

use std::ffi::{CStr, CString};
use std::ptr;

use simulpl::latency::{latency_scores, ReadWriteTrace, TraceEvent};
use simulpl::losses::{simuldpo_loss, LossConfig, TokenScores};
use simulpl_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(simulpl_last_error_message()) }
        .to_str()
        .unwrap()
        .to_string()
}

unsafe fn wait_one_trace() -> *mut SimulplTrace {
    let mut t = ptr::null_mut();
    assert_eq!(simulpl_trace_new(3, 3, &mut t), SimulplStatus::Ok);
    for w in ["a", "b", "c"] {
        assert_eq!(simulpl_trace_read(t, 1), SimulplStatus::Ok);
        let w = CString::new(w).unwrap();
        assert_eq!(simulpl_trace_write(t, w.as_ptr()), SimulplStatus::Ok);
    }
    t
}

#[test]
fn trace_handle_computes_latency() {
    unsafe {
        let t = wait_one_trace();
        let mut scores = SimulplLatency::default();
        assert_eq!(simulpl_trace_latency(t, &mut scores), SimulplStatus::Ok);
        let events = vec![
            TraceEvent::Read(1),
            TraceEvent::Write("a".into()),
            TraceEvent::Read(1),
            TraceEvent::Write("b".into()),
            TraceEvent::Read(1),
            TraceEvent::Write("c".into()),
        ];
        let core = latency_scores(&ReadWriteTrace::new(events, 3, 3).unwrap()).unwrap();
        assert_eq!((scores.al, scores.laal, scores.ap, scores.dal), (core.al, core.laal, core.ap, core.dal));

        let mut g = [0usize; 3];
        let mut len = 0;
        assert_eq!(simulpl_trace_delays(t, g.as_mut_ptr(), g.len(), &mut len), SimulplStatus::Ok);
        assert_eq!((len, g), (3, [1, 2, 3]));

        let mut from_delays = SimulplLatency::default();
        assert_eq!(simulpl_latency_from_delays(g.as_ptr(), 3, 3, 3, &mut from_delays), SimulplStatus::Ok);
        assert_eq!(from_delays, scores);

        let mut text = [0 as std::ffi::c_char; 16];
        assert_eq!(simulpl_trace_hypothesis(t, text.as_mut_ptr(), text.len(), &mut len), SimulplStatus::Ok);
        assert_eq!(CStr::from_ptr(text.as_ptr()).to_str().unwrap(), "a b c");
        assert_eq!(len, 6);
        simulpl_trace_free(t);
    }
}

#[test]
fn invalid_events_are_rejected_and_explained() {
    unsafe {
        let mut t = ptr::null_mut();
        assert_eq!(simulpl_trace_new(2, 2, &mut t), SimulplStatus::Ok);
        let w = CString::new("x").unwrap();
        assert_eq!(simulpl_trace_write(t, w.as_ptr()), SimulplStatus::Invalid);
        assert!(last_error().contains("WRITE before any READ"), "{}", last_error());
        assert_eq!(simulpl_trace_read(t, 3), SimulplStatus::Invalid);
        assert_eq!(simulpl_trace_read(t, 0), SimulplStatus::Invalid);
        // failed appends leave the trace untouched
        assert_eq!(simulpl_trace_read(t, 2), SimulplStatus::Ok);
        assert_eq!(last_error(), "");
        let mut scores = SimulplLatency::default();
        assert_eq!(simulpl_trace_latency(t, &mut scores), SimulplStatus::Undefined);
        assert_eq!(simulpl_trace_latency(ptr::null(), &mut scores), SimulplStatus::NullPointer);
        simulpl_trace_free(t);
        simulpl_trace_free(ptr::null_mut());
    }
}

#[test]
fn buffers_report_required_length() {
    unsafe {
        let t = wait_one_trace();
        let mut len = 0;
        assert_eq!(simulpl_trace_delays(t, ptr::null_mut(), 0, &mut len), SimulplStatus::BufferTooSmall);
        assert_eq!(len, 3);
        simulpl_trace_free(t);
    }
}

#[test]
fn order_metrics() {
    unsafe {
        let reversed = [4usize, 3, 2, 1];
        let mut count = 0u64;
        assert_eq!(simulpl_inversion_count(reversed.as_ptr(), 4, &mut count), SimulplStatus::Ok);
        assert_eq!(count, 6);
        let mut nir = 0.0;
        assert_eq!(simulpl_nir(reversed.as_ptr(), 4, &mut nir), SimulplStatus::Ok);
        assert_eq!(nir, 100.0);
        assert_eq!(simulpl_nir(reversed.as_ptr(), 1, &mut nir), SimulplStatus::Undefined);

        let mut b = SimulplWorstCase::default();
        assert_eq!(simulpl_worst_case_al_bound(10, 4, 10, 8, 20, &mut b), SimulplStatus::Ok);
        assert_eq!((b.al_worst, b.bound), (8.125, 9.25));
        assert_eq!(simulpl_worst_case_al_bound(0, 4, 10, 8, 20, &mut b), SimulplStatus::Invalid);
    }
}

#[test]
fn prefix_extraction() {
    unsafe {
        // target word 1 needs source word 2, word 2 needs source word 1
        let links = [SimulplLink { target: 1, source: 2 }, SimulplLink { target: 2, source: 1 }];
        let mut pairs = [SimulplPrefixPair::default(); 4];
        let mut len = 0;
        let status = simulpl_extract_prefixes(links.as_ptr(), 2, 3, 2, pairs.as_mut_ptr(), pairs.len(), &mut len);
        assert_eq!(status, SimulplStatus::Ok);
        let got: Vec<(usize, usize)> =
            pairs[..len].iter().map(|p| (p.source_prefix_len, p.target_prefix_len)).collect();
        assert_eq!(got, [(2, 2), (3, 2)]);

        let bad = [SimulplLink { target: 1, source: 9 }];
        let status = simulpl_extract_prefixes(bad.as_ptr(), 1, 3, 2, pairs.as_mut_ptr(), pairs.len(), &mut len);
        assert_eq!(status, SimulplStatus::Invalid);
    }
}

#[test]
fn dpo_loss_matches_core() {
    let w = TokenScores::new(vec![-0.5, -0.2, -0.1], vec![-0.6, -0.4, -0.3], vec![0.9, 0.7, 0.2]).unwrap();
    let l = TokenScores::new(vec![-1.0, -0.3], vec![-0.8, -0.4], vec![0.6, 0.4]).unwrap();
    let core = simuldpo_loss(&w, &l, &LossConfig::default()).unwrap();
    let view = |s: &TokenScores| SimulplTokenScores {
        logp_policy: s.logp_policy.as_ptr(),
        logp_ref: s.logp_ref.as_ptr(),
        confidence: s.confidence.as_ptr(),
        len: s.logp_policy.len(),
    };
    let (mut gw_lp, mut gw_c, mut gl_lp) = ([0.0; 3], [0.0; 3], [0.0; 2]);
    let mut gw = SimulplScoreGrad {
        logp_policy: gw_lp.as_mut_ptr(),
        confidence: gw_c.as_mut_ptr(),
    };
    let mut gl = SimulplScoreGrad {
        logp_policy: gl_lp.as_mut_ptr(),
        confidence: ptr::null_mut(),
    };
    let cfg = simulpl_loss_config_default();
    let mut value = 0.0;
    let status = unsafe { simulpl_simuldpo_loss(&view(&w), &view(&l), &cfg, &mut value, &mut gw, &mut gl) };
    assert_eq!(status, SimulplStatus::Ok);
    assert_eq!(value, core.value);
    assert_eq!(gw_lp.to_vec(), core.grads[0].logp_policy);
    assert_eq!(gw_c.to_vec(), core.grads[0].confidence);
    assert_eq!(gl_lp.to_vec(), core.grads[1].logp_policy);

    // positive log-probabilities are invalid
    let bad_lp = [0.5, -0.1];
    let bad = SimulplTokenScores {
        logp_policy: bad_lp.as_ptr(),
        ..view(&l)
    };
    let status = unsafe { simulpl_msft_loss(&bad, &mut value, ptr::null_mut()) };
    assert_eq!(status, SimulplStatus::Invalid);
    let status = unsafe { simulpl_simulkto_loss(&view(&w), true, 0.0, &cfg, &mut value, ptr::null_mut()) };
    assert_eq!(status, SimulplStatus::Ok);
    assert!(value.is_finite());
}

#[test]
fn model_handle_simulates() {
    use simulpl::toy::{run_msft, save_checkpoint, ToyConfig};
    let cfg = ToyConfig {
        train_size: 40,
        eval_size: 5,
        msft_epochs: 3,
        ..ToyConfig::default()
    };
    let run = run_msft(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&path, &run.model).unwrap();
    let source = run.eval[0].example.source.text();
    unsafe {
        let mut model = ptr::null_mut();
        let c_path = CString::new(path.to_str().unwrap()).unwrap();
        assert_eq!(simulpl_model_load(c_path.as_ptr(), &mut model), SimulplStatus::Ok);
        let mut trace = ptr::null_mut();
        let c_src = CString::new(source).unwrap();
        let status = simulpl_model_simulate(model, c_src.as_ptr(), 2, 0.5, 30, 4, &mut trace);
        assert_eq!(status, SimulplStatus::Ok, "{}", last_error());
        let mut len = 0;
        assert_eq!(simulpl_trace_hyp_len(trace, &mut len), SimulplStatus::Ok);
        assert!(len <= 30);
        simulpl_trace_free(trace);
        assert_eq!(simulpl_model_simulate(model, c_src.as_ptr(), 0, 0.5, 30, 4, &mut trace), SimulplStatus::Invalid);
        simulpl_model_free(model);

        let missing = CString::new(dir.path().join("nope").to_str().unwrap()).unwrap();
        assert_eq!(simulpl_model_load(missing.as_ptr(), &mut model), SimulplStatus::Invalid);
        assert!(!last_error().is_empty());
    }
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(simulpl_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
