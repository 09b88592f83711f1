use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};

use super::backend::{BackendError, ChatBackend, ChatRequest, ChatResponse};
use super::GatewayError;
use crate::retry::RetryPolicy;

/// Sends `request` to `backend`, retrying transport failures.
pub fn complete(
    request: &ChatRequest,
    backend: &dyn ChatBackend,
    retry: &RetryPolicy,
) -> Result<ChatResponse, GatewayError> {
    if request.prompt.is_empty() {
        return Err(GatewayError::Contract("prompt is empty".into()));
    }
    let correlation_id = request.correlation_id.clone();
    match retry.run(
        |e| matches!(e, BackendError::Transport(_)),
        |_| backend.chat(request),
    ) {
        Ok((mut resp, attempts)) => {
            if resp.text.trim().is_empty() {
                return Err(GatewayError::Generation {
                    message: "backend returned empty text".into(),
                    correlation_id,
                });
            }
            resp.attempts = attempts;
            resp.correlation_id = correlation_id;
            Ok(resp)
        }
        Err((BackendError::Transport(message), attempts)) => Err(GatewayError::Transport {
            attempts,
            message,
            correlation_id,
        }),
        Err((BackendError::Refusal(message), _)) => Err(GatewayError::Generation {
            message,
            correlation_id,
        }),
    }
}

struct Limiter {
    max: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

impl Limiter {
    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().expect("limiter lock");
        while *n >= self.max {
            n = self.freed.wait(n).expect("limiter lock");
        }
        *n += 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Limiter);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().expect("limiter lock") -= 1;
        self.0.freed.notify_one();
    }
}

/// A backend plus retry policy, concurrency bound and correlation ids.
pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    retry: RetryPolicy,
    limiter: Option<Limiter>,
    next_id: AtomicU64,
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>, retry: RetryPolicy, max_concurrency: Option<usize>) -> Self {
        Self {
            backend,
            retry,
            limiter: max_concurrency.map(|max| Limiter {
                max: max.max(1),
                in_flight: Mutex::new(0),
                freed: Condvar::new(),
            }),
            next_id: AtomicU64::new(1),
        }
    }

    pub fn backend_id(&self) -> String {
        self.backend.id()
    }

    pub fn model(&self) -> String {
        self.backend.model()
    }

    pub fn inst_wrap(&self) -> bool {
        self.backend.inst_wrap()
    }

    pub fn complete(&self, mut request: ChatRequest) -> Result<ChatResponse, GatewayError> {
        if request.correlation_id.is_empty() {
            request.correlation_id = format!("req-{}", self.next_id.fetch_add(1, Ordering::SeqCst));
        }
        let _permit = self.limiter.as_ref().map(Limiter::acquire);
        tracing::debug!(correlation_id = %request.correlation_id, model = %request.model, "chat completion");
        complete(&request, self.backend.as_ref(), &self.retry)
    }
}
