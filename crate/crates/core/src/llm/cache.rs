use std::collections::HashMap;
use std::sync::{Condvar, Mutex, RwLock};

use super::{ChatRequest, ChatResponse, LlmError, LlmProvider};

type CacheKey = (String, String, String);

/// Memoizes responses by (provider id, model, request hash). Last write wins;
/// under the temperature-0 policy identical keys carry identical responses.
pub struct CachedProvider<P> {
    inner: P,
    cache: RwLock<HashMap<CacheKey, ChatResponse>>,
}

impl<P: LlmProvider> CachedProvider<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }

    pub fn len(&self) -> usize {
        self.cache.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<P: LlmProvider> LlmProvider for CachedProvider<P> {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let key = (self.inner.id(), request.model.clone(), request.request_hash());
        if let Some(hit) = self.cache.read().unwrap_or_else(|e| e.into_inner()).get(&key) {
            return Ok(hit.clone());
        }
        let response = self.inner.complete(request)?;
        self.cache
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(key, response.clone());
        Ok(response)
    }
}

/// Bounds the number of in-flight `complete` calls to the wrapped provider.
pub struct ConcurrencyLimited<P> {
    inner: P,
    limit: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

impl<P: LlmProvider> ConcurrencyLimited<P> {
    pub fn new(inner: P, limit: usize) -> Self {
        Self {
            inner,
            limit: limit.max(1),
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
        }
    }
}

struct Permit<'a> {
    in_flight: &'a Mutex<usize>,
    freed: &'a Condvar,
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.in_flight.lock().unwrap_or_else(|e| e.into_inner()) -= 1;
        self.freed.notify_one();
    }
}

impl<P: LlmProvider> LlmProvider for ConcurrencyLimited<P> {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        {
            let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
            while *n >= self.limit {
                n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
            }
            *n += 1;
        }
        let _permit = Permit {
            in_flight: &self.in_flight,
            freed: &self.freed,
        };
        self.inner.complete(request)
    }
}
