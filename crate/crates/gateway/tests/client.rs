mod common;

use std::sync::Arc;
use std::time::Duration;

use common::*;
use themeloom_gateway::transport::{build_request, HttpResponse};
use themeloom_gateway::{Gateway, GatewayError, ProviderConfig, ResponseCache};

fn openai_gateway(transport: Arc<dyn themeloom_gateway::transport::Transport>, sleeper: Arc<RecordingSleeper>) -> Gateway {
    Gateway::new(ProviderConfig::openai("gpt-4"))
        .unwrap()
        .with_transport(transport)
        .with_sleeper(sleeper)
        .with_credentials(|name| (name == "OPENAI_API_KEY").then(|| "sk-test".to_string()))
}

#[test]
fn missing_credential_names_the_variable_and_sends_nothing() {
    let t = Scripted::new(vec![]);
    let g = Gateway::new(ProviderConfig::anthropic("claude-3-opus"))
        .unwrap()
        .with_transport(t.clone())
        .with_credentials(|_| None);
    let err = g.complete(&prompts(1)[0]).unwrap_err();
    assert_eq!(err, GatewayError::MissingCredential { variable: "ANTHROPIC_API_KEY".into() });
    assert!(err.to_string().contains("ANTHROPIC_API_KEY"));
    assert_eq!(g.provider_calls(), 0);
    assert!(t.seen.lock().unwrap().is_empty());
}

#[test]
fn transient_failures_back_off_then_succeed() {
    let t = Scripted::new(vec![reply(503, "busy"), Err("connection reset".into()), reply(200, &ok_body("done"))]);
    let sleeper = Arc::new(RecordingSleeper::default());
    let g = openai_gateway(t.clone(), sleeper.clone());
    let r = g.complete(&prompts(1)[0]).unwrap();
    assert_eq!(r.text, "done");
    assert_eq!(r.provider_echo, "echo-1");
    assert!(!r.from_cache);
    assert_eq!(g.provider_calls(), 3);
    let waits = sleeper.waits.lock().unwrap().clone();
    assert_eq!(waits.len(), 2);
    assert!((800..=1200).contains(&waits[0].as_millis()));
    assert!((3200..=4800).contains(&waits[1].as_millis()));
    let seen = t.seen.lock().unwrap();
    assert!(seen[0].headers.contains(&("authorization".into(), "Bearer sk-test".into())));
}

#[test]
fn retries_are_bounded() {
    let t = Scripted::new((0..4).map(|_| Err("refused".to_string())).collect());
    let sleeper = Arc::new(RecordingSleeper::default());
    let g = openai_gateway(t, sleeper.clone());
    match g.complete(&prompts(1)[0]) {
        Err(GatewayError::Network { attempts: 4, .. }) => {}
        other => panic!("{other:?}"),
    }
    let waits: Vec<u128> = sleeper.waits.lock().unwrap().iter().map(|d| d.as_millis()).collect();
    assert_eq!(waits.len(), 3);
    for (w, nominal) in waits.iter().zip([1000u128, 4000, 16000]) {
        assert!(*w >= nominal * 8 / 10 && *w <= nominal * 12 / 10, "{w} vs {nominal}");
    }
}

#[test]
fn rate_limit_honours_retry_after() {
    let limited = Ok(HttpResponse { status: 429, retry_after_secs: Some(7), body: String::new() });
    let t = Scripted::new(vec![limited, reply(200, &ok_body("ok"))]);
    let sleeper = Arc::new(RecordingSleeper::default());
    let g = openai_gateway(t, sleeper.clone());
    assert_eq!(g.complete(&prompts(1)[0]).unwrap().text, "ok");
    assert_eq!(*sleeper.waits.lock().unwrap(), vec![Duration::from_secs(7)]);

    let always = (0..4).map(|_| Ok(HttpResponse { status: 429, retry_after_secs: Some(1), body: String::new() }));
    let g = openai_gateway(Scripted::new(always.collect()), Arc::new(RecordingSleeper::default()));
    assert!(matches!(g.complete(&prompts(1)[0]), Err(GatewayError::RateLimited { attempts: 4, retry_after_secs: Some(1) })));
}

#[test]
fn auth_and_client_errors_are_not_retried() {
    let t = Scripted::new(vec![reply(401, r#"{"error":{"message":"bad key"}}"#)]);
    let g = openai_gateway(t, Arc::new(RecordingSleeper::default()));
    let err = g.complete(&prompts(1)[0]).unwrap_err();
    assert_eq!(err, GatewayError::Unauthorized { status: 401, message: "bad key".into() });
    assert_eq!(g.provider_calls(), 1);

    let t = Scripted::new(vec![reply(400, r#"{"error":{"message":"context too long"}}"#)]);
    let g = openai_gateway(t, Arc::new(RecordingSleeper::default()));
    assert_eq!(
        g.complete(&prompts(1)[0]).unwrap_err(),
        GatewayError::Provider { status: 400, message: "context too long".into() }
    );
}

#[test]
fn cache_serves_identical_prompts_with_one_call() {
    let dir = tempfile::tempdir().unwrap();
    let cache = Arc::new(ResponseCache::open(dir.path()).unwrap());
    let t = Jittery::new(None);
    let g = openai_gateway(t.clone(), Arc::new(RecordingSleeper::default())).with_cache(cache.clone());
    let p = prompts(1).remove(0);
    let first = g.complete(&p).unwrap();
    assert!(!first.from_cache);
    let second = g.complete(&p).unwrap();
    assert!(second.from_cache);
    assert_eq!(second.text, first.text);

    let same: Vec<_> = std::iter::repeat_n(prompts(2).remove(1), 12).collect();
    let out = g.complete_batch(&same).unwrap();
    assert!(out.iter().all(|r| r.as_ref().unwrap().text == out[0].as_ref().unwrap().text));
    assert_eq!(g.provider_calls(), 2, "one call per distinct prompt");
    assert_eq!(cache.len(), 2);

    // A fresh gateway over the same cache directory replays without calls.
    let replay = openai_gateway(Jittery::new(None), Arc::new(RecordingSleeper::default()))
        .with_cache(Arc::new(ResponseCache::open(dir.path()).unwrap()));
    assert_eq!(replay.complete(&p).unwrap().text, first.text);
    assert_eq!(replay.provider_calls(), 0);
}

#[test]
fn batch_preserves_order_and_bounds_concurrency() {
    let ps = prompts(17);
    let t = Jittery::new(None);
    let mut config = ProviderConfig::openai("gpt-4");
    config.max_in_flight = 4;
    let g = Gateway::new(config.clone()).unwrap().with_transport(t.clone()).with_credentials(|_| Some("k".into()));
    let out = g.complete_batch(&ps).unwrap();
    assert_eq!(out.len(), 17);
    for (p, r) in ps.iter().zip(&out) {
        let expected = digest(&build_request(&config, p, Some("k")).body);
        assert_eq!(r.as_ref().unwrap().text, expected);
    }
    let peak = t.peak.load(std::sync::atomic::Ordering::SeqCst);
    assert!((1..=4).contains(&peak), "peak in-flight {peak}");

    let one = g.complete_batch(&ps[..1]).unwrap().remove(0).unwrap();
    let direct = g.complete(&ps[0]).unwrap();
    assert_eq!((&one.text, &one.provider_echo, one.from_cache), (&direct.text, &direct.provider_echo, direct.from_cache));
    assert_eq!(g.complete_batch(&[]), Err(GatewayError::EmptyBatch));
}

#[test]
fn batch_reports_failures_positionally() {
    let ps = prompts(6);
    let t = Jittery::new(Some("guidance number 3"));
    let g = Gateway::new(ProviderConfig::openai("gpt-4")).unwrap().with_transport(t).with_credentials(|_| Some("k".into()));
    let out = g.complete_batch(&ps).unwrap();
    for (i, r) in out.iter().enumerate() {
        assert_eq!(r.is_err(), i == 3, "position {i}");
    }
    assert!(out[3].as_ref().unwrap_err().is_auth());
}
