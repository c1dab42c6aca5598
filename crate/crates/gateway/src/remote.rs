//! Distiller backed by an external HTTP service.

use std::time::Duration;

use csi_core::model::Assertion;
use csi_core::relay::{DistillRequest, DistillResponse, Distiller, DistillerKind, RelayError};

/// POSTs a [`DistillRequest`] as JSON and expects a [`DistillResponse`].
///
/// Uses a blocking client, so it must not be called from inside an async
/// runtime; the server runs it on the session thread.
#[derive(Debug, Clone)]
pub struct RemoteDistiller {
    url: String,
    client: reqwest::blocking::Client,
}

impl RemoteDistiller {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Result<Self, RelayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| RelayError::RemoteUnavailable(e.to_string()))?;
        Ok(Self {
            url: url.into(),
            client,
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl Distiller for RemoteDistiller {
    fn kind(&self) -> DistillerKind {
        DistillerKind::Remote
    }

    fn distill(
        &self,
        request: &DistillRequest,
        room_size: usize,
    ) -> Result<Vec<Assertion>, RelayError> {
        let unavailable = |e: reqwest::Error| RelayError::RemoteUnavailable(e.to_string());
        let response = self.client.post(&self.url).json(request).send().map_err(unavailable)?;
        let status = response.status();
        if !status.is_success() {
            return Err(RelayError::RemoteUnavailable(format!("status {status}")));
        }
        let body: DistillResponse = response.json().map_err(unavailable)?;
        Ok(body
            .into_assertions(&request.room_id, room_size, usize::MAX)
            .into_iter()
            .filter(|a| !request.already_relayed.contains(&a.id))
            .take(request.max_assertions)
            .collect())
    }
}
