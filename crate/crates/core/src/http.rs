//! Minimal blocking JSON-over-HTTP helper for the remote providers.

use std::time::Duration;

use ureq::Agent;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Transport {
    Timeout,
    Failed(String),
}

pub(crate) fn agent(timeout: Duration) -> Agent {
    Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

/// POSTs a JSON body and returns `(status, body)` for every HTTP status.
pub(crate) fn post_json(
    agent: &Agent,
    url: &str,
    bearer: Option<&str>,
    body: &serde_json::Value,
) -> Result<(u16, String), Transport> {
    let mut req = agent.post(url).header("Content-Type", "application/json");
    if let Some(token) = bearer {
        req = req.header("Authorization", format!("Bearer {token}"));
    }
    let resp = req.send_json(body).map_err(classify)?;
    let status = resp.status().as_u16();
    let text = resp.into_body().read_to_string().map_err(classify)?;
    Ok((status, text))
}

fn classify(e: ureq::Error) -> Transport {
    match e {
        ureq::Error::Timeout(_) => Transport::Timeout,
        ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => Transport::Timeout,
        other => Transport::Failed(other.to_string()),
    }
}
