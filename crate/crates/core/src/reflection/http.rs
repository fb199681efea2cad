use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Duration;

use ureq::Agent;

use super::protocol::{
    parse_credit, parse_distill, parse_policy, parse_priors, parse_reflect, render_credit, render_distill,
    render_policy, render_priors, render_reflect,
};
use super::{
    BackendError, CreditRequest, CreditResponse, DistillRequest, PolicyRequest, PriorRequest, ReflectionBackend,
    ReflectionInsight, ReflectionRequest,
};
use crate::memory::{DistilledPattern, RetrievalPolicy};

pub const ENV_BACKEND_URL: &str = "AEL_BACKEND_URL";
pub const ENV_BACKEND_TOKEN: &str = "AEL_BACKEND_TOKEN";
pub const ENV_BACKEND_AUDIT: &str = "AEL_BACKEND_AUDIT";

#[derive(Debug, Clone, PartialEq)]
pub struct HttpConfig {
    pub url: String,
    pub token: Option<String>,
    pub timeout: Duration,
    pub retries: u32,
    pub temperature: f64,
    /// Every request and response is appended here verbatim.
    pub audit_log: Option<PathBuf>,
}

impl HttpConfig {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            token: None,
            timeout: Duration::from_secs(30),
            retries: 2,
            temperature: 0.3,
            audit_log: None,
        }
    }
}

/// Remote completion backend speaking the text protocol over HTTP POST.
pub struct HttpBackend {
    config: HttpConfig,
    agent: Agent,
    audit: Option<Mutex<File>>,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend").field("url", &self.config.url).finish()
    }
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        if config.url.is_empty() {
            return Err(BackendError::Config("empty backend url".into()));
        }
        let audit = match &config.audit_log {
            Some(p) => Some(Mutex::new(
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(p)
                    .map_err(|e| BackendError::Config(format!("audit log {}: {e}", p.display())))?,
            )),
            None => None,
        };
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(true)
            .build()
            .into();
        Ok(Self { config, agent, audit })
    }

    /// Endpoint from AEL_BACKEND_URL, bearer token from AEL_BACKEND_TOKEN,
    /// optional audit file from AEL_BACKEND_AUDIT.
    pub fn from_env() -> Result<Self, BackendError> {
        let url = std::env::var(ENV_BACKEND_URL)
            .map_err(|_| BackendError::Config(format!("{ENV_BACKEND_URL} is not set")))?;
        let mut cfg = HttpConfig::new(url);
        cfg.token = std::env::var(ENV_BACKEND_TOKEN).ok();
        cfg.audit_log = std::env::var(ENV_BACKEND_AUDIT).ok().map(PathBuf::from);
        Self::new(cfg)
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn audit(&self, kind: &str, body: &str) {
        log::debug!("backend {kind}:\n{body}");
        if let Some(f) = &self.audit {
            if let Ok(mut f) = f.lock() {
                let _ = writeln!(f, "===== {kind} =====\n{body}");
            }
        }
    }

    fn post_once(&self, body: &str) -> Result<String, BackendError> {
        let mut req = self.agent.post(&self.config.url);
        if let Some(t) = &self.config.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let mut resp = req
            .content_type("text/plain; charset=utf-8")
            .send(body)
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        resp.body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(e.to_string()))
    }

    fn exchange<T>(&self, request: String, parse: impl Fn(&str) -> Result<T, BackendError>) -> Result<T, BackendError> {
        self.audit("request", &request);
        let mut last = BackendError::Transport("no attempt made".into());
        for attempt in 0..=self.config.retries {
            match self.post_once(&request) {
                Ok(text) => {
                    self.audit("response", &text);
                    // a well-formed reply that fails to parse is not retried
                    return parse(&text);
                }
                Err(e) => {
                    log::warn!("backend attempt {} failed: {e}", attempt + 1);
                    last = e;
                }
            }
        }
        Err(last)
    }
}

impl ReflectionBackend for HttpBackend {
    fn name(&self) -> &str {
        "http"
    }

    fn reflect(&self, req: &ReflectionRequest) -> Result<ReflectionInsight, BackendError> {
        self.exchange(render_reflect(req, self.config.temperature), parse_reflect)
    }

    fn distill(&self, req: &DistillRequest) -> Result<Vec<DistilledPattern>, BackendError> {
        self.exchange(render_distill(req, self.config.temperature), |t| parse_distill(t, req))
    }

    fn credit(&self, req: &CreditRequest) -> Result<CreditResponse, BackendError> {
        self.exchange(render_credit(req, self.config.temperature), parse_credit)
    }

    fn priors(&self, req: &PriorRequest) -> Result<BTreeMap<String, (f64, f64)>, BackendError> {
        self.exchange(render_priors(req, self.config.temperature), parse_priors)
    }

    fn propose_policy(&self, req: &PolicyRequest) -> Result<Option<RetrievalPolicy>, BackendError> {
        self.exchange(render_policy(req, self.config.temperature), parse_policy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::credit::{EpisodeOutcome, PlannerTrace};
    use std::io::{BufRead, BufReader, Read};
    use std::net::TcpListener;
    use std::thread;

    /// Serves `replies` one connection each and returns the request bodies.
    fn mock(replies: Vec<(u16, &'static str)>) -> (String, thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/complete", listener.local_addr().unwrap());
        let h = thread::spawn(move || {
            let mut bodies = Vec::new();
            for (status, reply) in replies {
                let (stream, _) = listener.accept().unwrap();
                let mut r = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    r.read_line(&mut line).unwrap();
                    if line.trim().is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut body = vec![0; len];
                r.read_exact(&mut body).unwrap();
                bodies.push(String::from_utf8(body).unwrap());
                let mut w = stream;
                write!(
                    w,
                    "HTTP/1.1 {status} X\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                    reply.len()
                )
                .unwrap();
            }
            bodies
        });
        (url, h)
    }

    fn outcome() -> EpisodeOutcome {
        EpisodeOutcome {
            score: -0.4,
            per_tool_hits: BTreeMap::new(),
            planner_trace: PlannerTrace {
                steps_completed: 1.0,
                prediction_correct: false,
            },
            memory_usefulness: 0.5,
        }
    }

    #[test]
    fn credit_roundtrip_with_retry_and_audit() {
        let (url, h) = mock(vec![
            (503, "busy"),
            (200, "```response\nplanner: -0.3\ntools: 0.2\nmemory: 0\n```"),
        ]);
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = HttpConfig::new(url);
        cfg.token = Some("secret".into());
        cfg.audit_log = Some(dir.path().join("audit.log"));
        let b = HttpBackend::new(cfg).unwrap();
        let r = b
            .credit(&CreditRequest {
                outcome: outcome(),
                contradiction: true,
            })
            .unwrap();
        assert_eq!(r.credit.planner, -0.3);
        let bodies = h.join().unwrap();
        assert_eq!(bodies.len(), 2);
        assert!(bodies[1].contains("contradiction: true"));
        let log = std::fs::read_to_string(dir.path().join("audit.log")).unwrap();
        assert!(log.contains("### OUTCOME"));
        assert!(log.contains("planner: -0.3"));
    }

    #[test]
    fn malformed_reply_falls_back_to_structural() {
        let (url, h) = mock(vec![(200, "planner: maybe")]);
        let mut cfg = HttpConfig::new(url);
        cfg.retries = 0;
        let b = HttpBackend::new(cfg).unwrap();
        let o = outcome();
        let g = crate::credit::llm_fcc_credit(&o, true, &b);
        assert_eq!(g, crate::credit::structural_credit(&o));
        h.join().unwrap();
    }

    #[test]
    fn unreachable_endpoint_is_transport_error() {
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let mut cfg = HttpConfig::new(format!("http://127.0.0.1:{port}/"));
        cfg.retries = 1;
        cfg.timeout = Duration::from_secs(2);
        let b = HttpBackend::new(cfg).unwrap();
        let e = b.priors(&PriorRequest { arms: vec![] }).unwrap_err();
        assert!(matches!(e, BackendError::Transport(_)));
    }
}
