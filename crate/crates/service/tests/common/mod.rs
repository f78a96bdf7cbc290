#![allow(dead_code)]

use std::path::Path;

use pedafeed_service::{build_state, AppState, ServiceConfig};
use serde_json::{json, Value};
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

pub struct Server {
    pub base: String,
    pub state: AppState,
    pub client: reqwest::Client,
    shutdown: oneshot::Sender<()>,
    handle: JoinHandle<()>,
}

pub fn config(storage: &Path) -> ServiceConfig {
    ServiceConfig { storage_path: storage.to_path_buf(), ..ServiceConfig::default() }
}

impl Server {
    pub async fn start(config: &ServiceConfig) -> Self {
        let state = build_state(config).await.expect("service state");
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let (shutdown, rx) = oneshot::channel();
        let serving = state.clone();
        let handle = tokio::spawn(async move {
            pedafeed_service::serve(serving, listener, async {
                let _ = rx.await;
            })
            .await
            .unwrap();
        });
        Self { base, state, client: reqwest::Client::new(), shutdown, handle }
    }

    pub async fn stop(self) {
        let _ = self.shutdown.send(());
        self.handle.await.unwrap();
    }

    pub async fn get(&self, path: &str) -> (u16, Value) {
        let response = self.client.get(format!("{}{path}", self.base)).send().await.unwrap();
        let status = response.status().as_u16();
        (status, response.json().await.unwrap_or(Value::Null))
    }

    pub async fn post(&self, path: &str, body: &Value) -> (u16, Value) {
        self.post_raw(path, body.to_string()).await
    }

    pub async fn post_raw(&self, path: &str, body: String) -> (u16, Value) {
        let response = self
            .client
            .post(format!("{}{path}", self.base))
            .header("content-type", "application/json")
            .body(body)
            .send()
            .await
            .unwrap();
        let status = response.status().as_u16();
        (status, response.json().await.unwrap_or(Value::Null))
    }

    pub async fn feedback(&self, student: &str, task: &str, code: &str, question: Option<&str>) -> (u16, Value) {
        let mut body = json!({ "student_id": student, "task_id": task, "source_code": code });
        if let Some(q) = question {
            body["text_input"] = json!(q);
        }
        self.post("/api/feedback", &body).await
    }
}
