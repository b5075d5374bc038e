use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;
use std::time::Duration;

use corelink_core::scorer::{RemoteScorer, ScoreError, SentenceScorer};
use corelink_core::synth::fixtures;

/// Serves one request with `respond(request_body) -> (status, body)`.
fn one_shot(respond: impl FnOnce(&str) -> (u16, String) + Send + 'static) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut len = 0;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            if line == "\r\n" || line.is_empty() {
                break;
            }
            if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                len = v.trim().parse().unwrap();
            }
        }
        let mut body = vec![0; len];
        reader.read_exact(&mut body).unwrap();
        let (status, out) = respond(&String::from_utf8(body).unwrap());
        let mut stream = stream;
        write!(
            stream,
            "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{out}",
            out.len()
        )
        .unwrap();
    });
    format!("http://{addr}/score")
}

#[test]
fn remote_scores_are_used_in_order() {
    let url = one_shot(|req| {
        let v: serde_json::Value = serde_json::from_str(req).unwrap();
        assert_eq!(v["sentences"][2], "Then he hugged me .");
        (200, r#"{"scores": [0.1, 0.2, 0.95]}"#.into())
    });
    let scorer = RemoteScorer::new(url.clone(), Duration::from_secs(5));
    assert_eq!(scorer.id(), format!("remote:{url}"));
    let scores = scorer.score(&fixtures::two_chain()).unwrap();
    assert_eq!(
        scores.iter().map(|s| s.probability).collect::<Vec<_>>(),
        vec![0.1, 0.2, 0.95]
    );
}

#[test]
fn length_mismatch_is_an_error() {
    let url = one_shot(|_| (200, r#"{"scores": [0.1]}"#.into()));
    let err = RemoteScorer::new(url, Duration::from_secs(5))
        .score(&fixtures::two_chain())
        .unwrap_err();
    assert!(matches!(err, ScoreError::Remote { sentence_id: 0, .. }), "{err}");
}

#[test]
fn out_of_range_score_names_the_sentence() {
    let url = one_shot(|_| (200, r#"{"scores": [0.1, 1.5, 0.2]}"#.into()));
    let err = RemoteScorer::new(url, Duration::from_secs(5))
        .score(&fixtures::two_chain())
        .unwrap_err();
    assert!(matches!(err, ScoreError::Remote { sentence_id: 1, .. }), "{err}");
}

#[test]
fn server_error_and_unreachable_endpoint() {
    let url = one_shot(|_| (500, "{}".into()));
    assert!(RemoteScorer::new(url, Duration::from_secs(5))
        .score(&fixtures::two_chain())
        .is_err());

    let closed = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    let scorer = RemoteScorer::new(format!("http://{closed}/"), Duration::from_secs(2));
    assert!(matches!(
        scorer.score(&fixtures::two_chain()),
        Err(ScoreError::Remote { .. })
    ));
}
