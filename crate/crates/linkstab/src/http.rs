//! The real probe transport: one HTTP(S) GET per probe.
//!
//! A probe succeeds once a 2xx or 3xx status line and headers arrive
//! within the timeout; the body is never awaited, since the tick measures
//! reachability, not transfer. Redirects are not followed (a redirect
//! already proves the line works). TLS certificate validation stays on —
//! a TLS failure is a connect error.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use reqwest::blocking::Client;
use reqwest::redirect;

use crate::probe::{
    FailureKind, LineBinding, ProbeError, ProbeOutcome, ProbeTarget, ProbeTransport, SourceBinding,
};

/// One HTTP client per line, built once so the per-line source binding is
/// applied to every socket that line opens.
pub struct HttpTransport {
    clients: HashMap<u32, Client>,
}

impl HttpTransport {
    pub fn new(lines: &[LineBinding]) -> Result<Self, ProbeError> {
        let mut clients = HashMap::with_capacity(lines.len());
        for line in lines {
            let mut builder = Client::builder()
                .redirect(redirect::Policy::none())
                .pool_max_idle_per_host(0);
            match &line.source {
                Some(SourceBinding::Address(addr)) => {
                    builder = builder.local_address(*addr);
                }
                Some(SourceBinding::Interface(name)) => {
                    builder = builder.interface(name);
                }
                None => {}
            }
            let client = builder.build().map_err(|e| ProbeError::ClientBuild {
                line: line.id,
                reason: e.to_string(),
            })?;
            clients.insert(line.id, client);
        }
        Ok(HttpTransport { clients })
    }
}

impl ProbeTransport for HttpTransport {
    fn probe(&self, line: &LineBinding, target: &ProbeTarget, timeout: Duration) -> ProbeOutcome {
        let start = Instant::now();
        let Some(client) = self.clients.get(&line.id) else {
            // Line not registered at build time; count it as unreachable.
            return ProbeOutcome::failure(
                line.id,
                &target.label,
                start.elapsed(),
                FailureKind::ConnectError,
            );
        };
        match client.get(target.url.as_str()).timeout(timeout).send() {
            Ok(response) => {
                let status = response.status();
                if status.is_success() || status.is_redirection() {
                    ProbeOutcome::success(line.id, &target.label, start.elapsed())
                } else {
                    ProbeOutcome::failure(
                        line.id,
                        &target.label,
                        start.elapsed(),
                        FailureKind::HttpError,
                    )
                }
            }
            Err(e) => {
                let kind = if e.is_timeout() {
                    FailureKind::Timeout
                } else {
                    FailureKind::ConnectError
                };
                ProbeOutcome::failure(line.id, &target.label, start.elapsed(), kind)
            }
        }
    }
}
