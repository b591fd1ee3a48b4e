//! Scoring-endpoint client tests against a minimal in-process HTTP server.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use pcqa::evaluator::{score_point_cloud, EndpointConfig, EvalError, ANSWER_PREFIX, QUESTION};
use pcqa::rating::{logits_to_probabilities, RatingLevel};

enum Reply {
    Json(String),
    Status(u16),
}

/// One-thread HTTP server answering a fixed sequence of replies; captures
/// each request body.
fn spawn_server(replies: Vec<Reply>) -> (String, Arc<Mutex<Vec<String>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = format!("http://{}", listener.local_addr().unwrap());
    let bodies = Arc::new(Mutex::new(Vec::new()));
    let captured = bodies.clone();
    std::thread::spawn(move || {
        for reply in replies {
            let Ok((stream, _)) = listener.accept() else { return };
            handle(stream, reply, &captured);
        }
    });
    (addr, bodies)
}

fn handle(mut stream: TcpStream, reply: Reply, captured: &Mutex<Vec<String>>) {
    let mut buf = Vec::new();
    let mut chunk = [0u8; 4096];
    let header_end = loop {
        let n = stream.read(&mut chunk).unwrap();
        if n == 0 {
            return;
        }
        buf.extend_from_slice(&chunk[..n]);
        if let Some(pos) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
            break pos + 4;
        }
    };
    let headers = String::from_utf8_lossy(&buf[..header_end]).to_string();
    let content_length: usize = headers
        .lines()
        .find_map(|l| {
            let (name, value) = l.split_once(':')?;
            name.eq_ignore_ascii_case("content-length")
                .then(|| value.trim().parse().ok())?
        })
        .unwrap_or(0);
    while buf.len() < header_end + content_length {
        let n = stream.read(&mut chunk).unwrap();
        if n == 0 {
            break;
        }
        buf.extend_from_slice(&chunk[..n]);
    }
    let body = String::from_utf8_lossy(&buf[header_end..header_end + content_length]).to_string();
    captured.lock().unwrap().push(body);

    let (status_line, payload) = match reply {
        Reply::Json(json) => ("HTTP/1.1 200 OK".to_string(), json),
        Reply::Status(code) => (format!("HTTP/1.1 {code} ERR"), "{}".to_string()),
    };
    let response = format!(
        "{status_line}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    );
    let _ = stream.write_all(response.as_bytes());
}

fn top_logprobs_json(pairs: &[(&str, f64)]) -> String {
    let top: Vec<String> = pairs
        .iter()
        .map(|(t, l)| format!(r#"{{"token":"{t}","logprob":{l}}}"#))
        .collect();
    format!(
        r#"{{"choices":[{{"logprobs":{{"content":[{{"token":"{}","logprob":{},"top_logprobs":[{}]}}]}}}}]}}"#,
        pairs[0].0,
        pairs[0].1,
        top.join(",")
    )
}

fn fake_images(dir: &std::path::Path) -> Vec<PathBuf> {
    (1..=6)
        .map(|k| {
            let path = dir.join(format!("face{k}.png"));
            image::RgbImage::from_pixel(2, 2, image::Rgb([k as u8 * 10, 0, 0]))
                .save_with_format(&path, image::ImageFormat::Png)
                .unwrap();
            path
        })
        .collect()
}

fn config(addr: &str, retries: usize) -> EndpointConfig {
    EndpointConfig {
        base_url: addr.to_string(),
        model: "rating-model".to_string(),
        timeout_secs: 5,
        max_concurrency: 2,
        retries,
        api_key: Some("test-key".to_string()),
    }
}

#[test]
fn scores_and_sends_the_documented_request() {
    let json = top_logprobs_json(&[
        (" good", -0.3),
        (" fair", -1.5),
        (" excellent", -2.0),
        (" poor", -4.0),
        (" bad", -6.0),
        (" the", -7.0),
    ]);
    let (addr, bodies) = spawn_server(vec![Reply::Json(json)]);
    let dir = tempfile::tempdir().unwrap();
    let images = fake_images(dir.path());

    let eval = score_point_cloud(&images, &config(&addr, 0)).unwrap();
    assert_eq!(eval.argmax(), RatingLevel::Good);
    let expected = logits_to_probabilities([-6.0, -4.0, -1.5, -0.3, -2.0]).unwrap();
    assert_eq!(eval, expected);

    let bodies = bodies.lock().unwrap();
    assert_eq!(bodies.len(), 1);
    let request: serde_json::Value = serde_json::from_str(&bodies[0]).unwrap();
    assert_eq!(request["model"], "rating-model");
    assert_eq!(request["max_tokens"], 1);
    assert_eq!(request["logprobs"], true);
    assert!(request["top_logprobs"].as_u64().unwrap() >= 20);
    let messages = request["messages"].as_array().unwrap();
    assert_eq!(messages.len(), 2);
    assert_eq!(messages[0]["role"], "user");
    let content = messages[0]["content"].as_array().unwrap();
    assert_eq!(content[0]["type"], "text");
    assert_eq!(content[0]["text"], QUESTION);
    let image_parts: Vec<_> = content[1..].iter().collect();
    assert_eq!(image_parts.len(), 6);
    for part in image_parts {
        assert_eq!(part["type"], "image_url");
        let url = part["image_url"]["url"].as_str().unwrap();
        assert!(url.starts_with("data:image/png;base64,"));
    }
    assert_eq!(messages[1]["role"], "assistant");
    assert_eq!(messages[1]["content"], ANSWER_PREFIX);
}

#[test]
fn retries_transient_server_errors() {
    let json = top_logprobs_json(&[(" poor", -0.2), (" bad", -1.0)]);
    let (addr, bodies) = spawn_server(vec![
        Reply::Status(500),
        Reply::Status(503),
        Reply::Json(json),
    ]);
    let dir = tempfile::tempdir().unwrap();
    let images = fake_images(dir.path());

    let eval = score_point_cloud(&images, &config(&addr, 2)).unwrap();
    assert_eq!(eval.argmax(), RatingLevel::Poor);
    assert_eq!(bodies.lock().unwrap().len(), 3, "two retries after two 5xx");
}

#[test]
fn client_errors_do_not_retry() {
    let (addr, bodies) = spawn_server(vec![Reply::Status(404)]);
    let dir = tempfile::tempdir().unwrap();
    let images = fake_images(dir.path());
    let err = score_point_cloud(&images, &config(&addr, 3)).unwrap_err();
    assert!(matches!(err, EvalError::MalformedResponse(_)), "{err:?}");
    assert_eq!(bodies.lock().unwrap().len(), 1);
}

#[test]
fn unreachable_endpoint_reports_attempts() {
    // Bind then drop to get a port with nothing listening.
    let port = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let dir = tempfile::tempdir().unwrap();
    let images = fake_images(dir.path());
    let cfg = config(&format!("http://127.0.0.1:{port}"), 1);
    match score_point_cloud(&images, &cfg) {
        Err(EvalError::EndpointUnreachable { attempts, .. }) => assert_eq!(attempts, 2),
        other => panic!("expected EndpointUnreachable, got {other:?}"),
    }
}

#[test]
fn missing_adjectives_are_an_error() {
    let json = top_logprobs_json(&[(" the", -0.2), (" fine", -1.0)]);
    let (addr, _) = spawn_server(vec![Reply::Json(json)]);
    let dir = tempfile::tempdir().unwrap();
    let images = fake_images(dir.path());
    assert!(matches!(
        score_point_cloud(&images, &config(&addr, 0)),
        Err(EvalError::NoRatingTokenFound)
    ));
}

#[test]
fn malformed_payload_is_reported() {
    let (addr, _) = spawn_server(vec![Reply::Json("{\"nope\": 1}".to_string())]);
    let dir = tempfile::tempdir().unwrap();
    let images = fake_images(dir.path());
    assert!(matches!(
        score_point_cloud(&images, &config(&addr, 0)),
        Err(EvalError::MalformedResponse(_))
    ));
}

#[test]
fn missing_image_file_fails_before_any_request() {
    let (addr, bodies) = spawn_server(vec![Reply::Status(200)]);
    let paths: Vec<PathBuf> = (1..=6).map(|k| PathBuf::from(format!("/nope/f{k}.png"))).collect();
    assert!(matches!(
        score_point_cloud(&paths, &config(&addr, 0)),
        Err(EvalError::MissingProjection(_))
    ));
    assert!(bodies.lock().unwrap().is_empty());
}
