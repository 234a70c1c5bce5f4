use std::sync::Mutex;

use super::{ChatBackend, ChatRequest, ChatResponse, LlmError};

/// Caps the total tokens spent through a backend.
///
/// A request reserves its `max_tokens` before it is sent (the input size is
/// only known from the reply), so a request is refused when the spent tokens
/// plus that reservation would pass the budget. The reservation is replaced
/// by the reported usage once the reply arrives.
pub struct BudgetedBackend<B> {
    inner: B,
    budget: u64,
    spent: Mutex<u64>,
}

impl<B: ChatBackend> BudgetedBackend<B> {
    pub fn new(inner: B, budget: u64) -> Self {
        BudgetedBackend {
            inner,
            budget,
            spent: Mutex::new(0),
        }
    }

    pub fn spent(&self) -> u64 {
        *self.spent.lock().unwrap()
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: ChatBackend> ChatBackend for BudgetedBackend<B> {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let reserved = u64::from(req.max_tokens);
        {
            let mut spent = self.spent.lock().unwrap();
            if *spent + reserved > self.budget {
                return Err(LlmError::BudgetExceeded {
                    used: *spent,
                    requested: reserved,
                    budget: self.budget,
                });
            }
            *spent += reserved;
        }
        let result = self.inner.complete(req);
        let mut spent = self.spent.lock().unwrap();
        *spent -= reserved;
        if let Ok(resp) = &result {
            *spent += resp.usage.total();
        }
        result
    }
}
