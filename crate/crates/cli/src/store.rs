//! In-memory session storage with least-recently-used eviction.

use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex};

use lru::LruCache;
use tokscope_core::{AnalysisSession, SessionId};

/// Evicted ids remembered so that late lookups can tell "gone" from
/// "never existed".
const EVICTED_MEMORY: usize = 1 << 16;

#[derive(Debug)]
pub enum Lookup {
    Found(Arc<AnalysisSession>),
    Gone,
    Unknown,
}

#[derive(Debug)]
struct Inner {
    live: LruCache<SessionId, Arc<AnalysisSession>>,
    evicted: LruCache<SessionId, ()>,
}

#[derive(Debug)]
pub struct SessionStore {
    inner: Mutex<Inner>,
}

impl SessionStore {
    pub fn new(capacity: NonZeroUsize) -> Self {
        SessionStore {
            inner: Mutex::new(Inner {
                live: LruCache::new(capacity),
                evicted: LruCache::new(NonZeroUsize::new(EVICTED_MEMORY).expect("non-zero")),
            }),
        }
    }

    /// Stores `session`, evicting the least recently used one if full.
    pub fn insert(&self, session: AnalysisSession) -> Arc<AnalysisSession> {
        let session = Arc::new(session);
        let mut inner = self.inner.lock().expect("session store poisoned");
        if let Some((old, _)) = inner.live.push(session.id(), session.clone()) {
            if old != session.id() {
                inner.evicted.put(old, ());
            }
        }
        session
    }

    pub fn get(&self, id: SessionId) -> Lookup {
        let mut inner = self.inner.lock().expect("session store poisoned");
        if let Some(s) = inner.live.get(&id) {
            return Lookup::Found(s.clone());
        }
        if inner.evicted.contains(&id) {
            Lookup::Gone
        } else {
            Lookup::Unknown
        }
    }

    pub fn len(&self) -> usize {
        self.inner
            .lock()
            .expect("session store poisoned")
            .live
            .len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
