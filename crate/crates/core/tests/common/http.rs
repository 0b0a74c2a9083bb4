use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

pub async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(match body {
            Some(v) => Body::from(v.to_string()),
            None => Body::empty(),
        })
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, v)
}

/// Plays one site: fetch, choose, report. Returns the choice response.
pub async fn play_site(app: &Router, id: &str, follow: bool, slider: i64) -> Value {
    let (st, site) = call(app, "GET", &format!("/sessions/{id}/site"), None).await;
    assert_eq!(st, StatusCode::OK, "{site}");
    let rec = site["recommendation"].as_str().unwrap().to_string();
    let action = match (follow, rec.as_str()) {
        (true, a) => a.to_string(),
        (false, "use_rarv") => "no_rarv".to_string(),
        (false, _) => "use_rarv".to_string(),
    };
    let (st, out) = call(app, "POST", &format!("/sessions/{id}/choice"), Some(serde_json::json!({ "action": action }))).await;
    assert_eq!(st, StatusCode::OK, "{out}");
    let (st, ack) = call(app, "POST", &format!("/sessions/{id}/trust"), Some(serde_json::json!({ "slider": slider }))).await;
    assert_eq!(st, StatusCode::OK, "{ack}");
    out
}
