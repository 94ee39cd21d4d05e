use std::thread;
use std::time::Duration;

use hikma_core::agents::{AdapterError, AgentAdapter, AgentRequest, HttpAdapter, TemplateRole};
use hikma_core::clock::SystemClock;

/// Serves `n` requests with a fixed status and body, returning each request body.
fn serve(status: u16, body: &'static str, n: usize) -> (String, thread::JoinHandle<Vec<serde_json::Value>>) {
    let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
    let url = format!("http://{}/complete", server.server_addr().to_ip().unwrap());
    let handle = thread::spawn(move || {
        let mut seen = Vec::new();
        for mut req in server.incoming_requests().take(n) {
            let mut s = String::new();
            req.as_reader().read_to_string(&mut s).unwrap();
            seen.push(serde_json::from_str(&s).unwrap_or(serde_json::Value::Null));
            req.respond(tiny_http::Response::from_string(body).with_status_code(status)).unwrap();
        }
        seen
    });
    (url, handle)
}

fn request() -> AgentRequest {
    AgentRequest {
        template_id: "hikma.generation.v1".into(),
        prompt: "Paper ID: PT1-SOCP-01".into(),
        agent_id: "author-agent".into(),
        role: TemplateRole::Generation,
    }
}

fn call(url: &str) -> Result<String, AdapterError> {
    HttpAdapter::new(url, Duration::from_secs(5)).unwrap().complete(&request(), &SystemClock)
}

#[test]
fn posts_the_request_and_returns_output() {
    let (url, h) = serve(200, r#"{"output":"\\documentclass{article}"}"#, 1);
    assert_eq!(call(&url).unwrap(), "\\documentclass{article}");
    let sent = h.join().unwrap();
    assert_eq!(sent[0]["agent_id"], "author-agent");
    assert_eq!(sent[0]["template_id"], "hikma.generation.v1");
    assert_eq!(sent[0]["prompt"], "Paper ID: PT1-SOCP-01");
}

#[test]
fn server_errors_and_throttling_are_transient() {
    for status in [500, 503, 429] {
        let (url, h) = serve(status, "busy", 1);
        assert!(matches!(call(&url), Err(AdapterError::Transport(_))), "{status}");
        h.join().unwrap();
    }
}

#[test]
fn client_errors_and_bad_bodies_are_permanent() {
    let (url, h) = serve(400, "no", 1);
    assert!(matches!(call(&url), Err(AdapterError::Protocol(_))));
    h.join().unwrap();
    let (url, h) = serve(200, r#"{"text":"x"}"#, 1);
    assert!(matches!(call(&url), Err(AdapterError::Protocol(_))));
    h.join().unwrap();
}

#[test]
fn unreachable_endpoint_is_transient() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    assert!(matches!(call(&format!("http://127.0.0.1:{port}/")), Err(AdapterError::Transport(_))));
}
