#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeSet;

use common::{chat_reply, embeddings_reply, Stub};
use savetag::embedding::{encode_remote, EncoderConfig, EncoderKind};
use savetag::error::Error;
use savetag::generation::{ChatMessage, GeneratorConfig, GeneratorKind, RemoteGenerator, Role};
use serde_json::{json, Value};

fn keys(v: &Value) -> BTreeSet<String> {
    v.as_object().unwrap().keys().cloned().collect()
}

fn encoder(base: &str, batch_size: usize, retries: usize) -> EncoderConfig {
    EncoderConfig {
        kind: EncoderKind::Remote,
        endpoint: base.to_string(),
        model: "stub-embed".into(),
        batch_size,
        retries,
        backoff_ms: 1,
        timeout_secs: 10,
        ..EncoderConfig::default()
    }
}

fn generator(base: &str, retries: usize) -> GeneratorConfig {
    GeneratorConfig {
        kind: GeneratorKind::Remote,
        endpoint: base.to_string(),
        model: "stub-chat".into(),
        temperature: 0.25,
        max_tokens: 77,
        retries,
        backoff_ms: 1,
        timeout_secs: 10,
        ..GeneratorConfig::default()
    }
}

fn texts(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

#[test]
fn embeddings_batches_keep_order_and_wire_shape() {
    let stub = Stub::start(|_, _, body| (200, embeddings_reply(body)));
    let input = texts(&["a", "bbb", "cc"]);
    let emb = encode_remote(&input, &encoder(&stub.base, 2, 0)).unwrap();
    let reqs = stub.requests();
    assert_eq!(reqs.len(), 2);
    let mut sent = Vec::new();
    for r in &reqs {
        assert_eq!(r.path, "/v1/embeddings");
        assert_eq!(keys(&r.body), BTreeSet::from(["input".to_string(), "model".to_string()]));
        assert_eq!(r.body["model"], "stub-embed");
        sent.extend(r.body["input"].as_array().unwrap().iter().map(|t| t.as_str().unwrap().to_string()));
    }
    sent.sort();
    let mut want = input.clone();
    want.sort();
    assert_eq!(sent, want);
    for (row, text) in emb.rows().outer_iter().zip(&input) {
        let raw = [text.len() as f64, f64::from(text.as_bytes()[0]), 1.0];
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (got, r) in row.iter().zip(raw) {
            assert!((got - r / norm).abs() < 1e-12);
        }
    }
}

#[test]
fn embeddings_survive_two_server_errors() {
    let stub = Stub::start(|call, _, body| match call {
        0 | 1 => (500, "{}".into()),
        _ => (200, embeddings_reply(body)),
    });
    let emb = encode_remote(&texts(&["x", "yy"]), &encoder(&stub.base, 8, 2)).unwrap();
    assert_eq!(emb.len(), 2);
    assert_eq!(stub.requests().len(), 3);
}

#[test]
fn embeddings_report_failing_batch_after_retries() {
    let stub = Stub::start(|call, _, body| if call == 0 { (200, embeddings_reply(body)) } else { (503, "{}".into()) });
    let err = encode_remote(&texts(&["a", "b", "c"]), &encoder(&stub.base, 2, 1)).unwrap_err();
    match err {
        Error::Exhausted { batch, attempts, .. } => {
            assert_eq!(batch, 1);
            assert_eq!(attempts, 2);
        }
        other => panic!("unexpected error {other:?}"),
    }
    assert_eq!(stub.requests().len(), 3);
}

#[test]
fn embeddings_reject_dimension_change_between_batches() {
    let stub = Stub::start(|call, _, body| {
        if call == 0 {
            (200, embeddings_reply(body))
        } else {
            (200, json!({"data": [{"index": 0, "embedding": [1.0, 2.0]}]}).to_string())
        }
    });
    let err = encode_remote(&texts(&["a", "b", "c"]), &encoder(&stub.base, 2, 0)).unwrap_err();
    assert!(matches!(err, Error::Exhausted { batch: 1, .. }), "{err:?}");
}

#[test]
fn chat_request_matches_wire_shape() {
    let stub = Stub::start(|_, _, _| (200, chat_reply("<START>a text<END>")));
    let gen = RemoteGenerator::new(&generator(&stub.base, 0)).unwrap();
    let messages = vec![
        ChatMessage { role: Role::System, content: "sys".into() },
        ChatMessage { role: Role::User, content: "hello".into() },
    ];
    assert_eq!(gen.complete(&messages, 0).unwrap(), "<START>a text<END>");
    let reqs = stub.requests();
    assert_eq!(reqs.len(), 1);
    assert_eq!(reqs[0].path, "/v1/chat/completions");
    assert_eq!(
        reqs[0].body,
        json!({
            "model": "stub-chat",
            "messages": [
                {"role": "system", "content": "sys"},
                {"role": "user", "content": "hello"}
            ],
            "temperature": 0.25,
            "max_tokens": 77
        })
    );
    assert_eq!(reqs[0].authorization, None);
}

#[test]
fn chat_retries_server_errors_and_missing_content() {
    let stub = Stub::start(|call, _, _| match call {
        0 => (500, "{}".into()),
        1 => (200, json!({"choices": []}).to_string()),
        _ => (200, chat_reply("ok")),
    });
    let gen = RemoteGenerator::new(&generator(&stub.base, 2)).unwrap();
    let msg = [ChatMessage { role: Role::User, content: "q".into() }];
    assert_eq!(gen.complete(&msg, 5).unwrap(), "ok");
    assert_eq!(stub.requests().len(), 3);

    let dead = Stub::start(|_, _, _| (500, "{}".into()));
    let gen = RemoteGenerator::new(&generator(&dead.base, 1)).unwrap();
    assert!(matches!(gen.complete(&msg, 5), Err(Error::Exhausted { batch: 5, attempts: 2, .. })));
}

#[test]
fn api_key_is_sent_as_bearer_token() {
    let var = "SAVETAG_PROTOCOL_TEST_KEY";
    std::env::set_var(var, "sekret");
    let stub = Stub::start(|_, _, _| (200, chat_reply("ok")));
    let cfg = GeneratorConfig { api_key_env: Some(var.into()), ..generator(&stub.base, 0) };
    let gen = RemoteGenerator::new(&cfg).unwrap();
    gen.complete(&[ChatMessage { role: Role::User, content: "q".into() }], 0).unwrap();
    assert_eq!(stub.requests()[0].authorization.as_deref(), Some("Bearer sekret"));
}
