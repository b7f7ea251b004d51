//! The external translator against a local HTTP stub.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;

use geoforge_core::reasoner::{Mode, ReasoningGraph, Transition};
use geoforge_core::statement::Statement;
use geoforge_core::translator::{
    connect_thinking, translate_steps, Backend, ExternalBackend, TranslateError,
};
use serde_json::Value;

struct Seen {
    authorization: Option<String>,
    body: Value,
}

/// Answers `replies.len()` requests in order, reporting each request.
fn stub(replies: Vec<String>) -> (String, mpsc::Receiver<Seen>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!(
        "http://{}/v1/chat/completions",
        listener.local_addr().unwrap()
    );
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for reply in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let (mut len, mut auth) = (0usize, None);
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let (name, value) = line.split_once(':').unwrap_or((line, ""));
                match name.to_ascii_lowercase().as_str() {
                    "content-length" => len = value.trim().parse().unwrap(),
                    "authorization" => auth = Some(value.trim().to_string()),
                    _ => {}
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            tx.send(Seen {
                authorization: auth,
                body: serde_json::from_slice(&body).unwrap(),
            })
            .unwrap();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                reply.len(),
                reply
            )
            .unwrap();
        }
    });
    (url, rx)
}

fn completion(text: &str) -> String {
    serde_json::json!({ "choices": [{ "message": { "role": "assistant", "content": text } }] })
        .to_string()
}

fn isosceles_graph() -> ReasoningGraph {
    let s = |t: &str| t.parse::<Statement>().unwrap();
    ReasoningGraph::from_parts(
        vec![s("eq_seg(A,B;A,C)"), s("eq_angle(A,B,C;A,C,B)")],
        1,
        vec![Transition {
            premises: vec![0],
            rule: "isosceles_base_angles".into(),
            conclusion: 1,
        }],
        Mode::Single,
        false,
    )
    .unwrap()
}

fn backend(url: &str, retries: u32) -> Backend {
    let mut ext = ExternalBackend::new(url, "test-model");
    ext.retries = retries;
    ext.timeout_secs = 5;
    ext.api_key = Some("secret".into());
    Backend::External(ext)
}

#[test]
fn step_and_bridge_requests() {
    let (url, rx) = stub(vec![
        completion("Because AB = AC, the base angles ∠ABC and ∠ACB are equal."),
        completion("We are given AB = AC, which is what we need."),
    ]);
    let g = isosceles_graph();
    let b = backend(&url, 0);
    let steps = translate_steps(&g, g.transitions(), &b).unwrap();
    assert_eq!(steps.len(), 1);
    assert_eq!(
        steps[0].rule_text,
        "Because AB = AC, the base angles ∠ABC and ∠ACB are equal."
    );
    let sol = connect_thinking(&g, &steps, 1, false, &b).unwrap();
    assert_eq!(
        sol.steps[0].bridge,
        "We are given AB = AC, which is what we need."
    );
    assert!(!sol.bridges_checked);

    let first = rx.recv().unwrap();
    assert_eq!(first.authorization.as_deref(), Some("Bearer secret"));
    assert_eq!(first.body["model"], "test-model");
    assert_eq!(first.body["temperature"], 0);
    let messages = first.body["messages"].as_array().unwrap();
    assert_eq!(messages[0]["role"], "system");
    assert!(messages[1]["content"]
        .as_str()
        .unwrap()
        .contains("eq_seg(A,B;A,C)"));
    let second = rx.recv().unwrap();
    assert!(second.body["messages"][1]["content"]
        .as_str()
        .unwrap()
        .contains("Goal:"));
}

#[test]
fn malformed_replies_are_retried_then_surfaced() {
    let (url, rx) = stub(vec![
        r#"{"choices": []}"#.to_string(),
        r#"{"unexpected": true}"#.to_string(),
    ]);
    let g = isosceles_graph();
    let err = translate_steps(&g, g.transitions(), &backend(&url, 1)).unwrap_err();
    assert!(matches!(err, TranslateError::Malformed(_)), "{err}");
    assert_eq!(rx.iter().take(2).count(), 2);
}

#[test]
fn retry_recovers_from_one_bad_reply() {
    let (url, _rx) = stub(vec![r#"{"choices": []}"#.to_string(), completion("Fine.")]);
    let g = isosceles_graph();
    let steps = translate_steps(&g, g.transitions(), &backend(&url, 1)).unwrap();
    assert_eq!(steps[0].rule_text, "Fine.");
}
