use std::sync::{Arc, Mutex, RwLock};

use super::{AccessRequest, CompiledPolicy, Decision, Policy, PolicyError, PolicyRule};

/// A published policy version together with its compiled index.
#[derive(Debug)]
pub struct PolicySnapshot {
    policy: Policy,
    compiled: CompiledPolicy,
}

impl PolicySnapshot {
    fn new(policy: Policy) -> Self {
        let compiled = CompiledPolicy::new(&policy);
        Self { policy, compiled }
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn version(&self) -> u64 {
        self.policy.version()
    }

    pub fn evaluate(&self, request: &AccessRequest) -> Decision {
        self.compiled.evaluate(request)
    }
}

/// Holder of the live policy.
///
/// Writers publish complete snapshots by swapping an `Arc`; an evaluator
/// that grabbed a snapshot keeps seeing exactly that version even if a new
/// one is installed meanwhile. Edits are serialized by a writer lock, so a
/// read-modify-install sequence never loses a concurrent edit.
#[derive(Debug)]
pub struct PolicyStore {
    current: RwLock<Arc<PolicySnapshot>>,
    writer: Mutex<()>,
}

impl Default for PolicyStore {
    fn default() -> Self {
        Self::new()
    }
}

impl PolicyStore {
    /// Store holding the empty policy at version 0.
    pub fn new() -> Self {
        Self::restore(Policy::default()).expect("empty policy is valid")
    }

    /// Store publishing `policy` with the version it already carries.
    pub fn restore(policy: Policy) -> Result<Self, PolicyError> {
        policy.validate()?;
        Ok(Self { current: RwLock::new(Arc::new(PolicySnapshot::new(policy))), writer: Mutex::new(()) })
    }

    pub fn snapshot(&self) -> Arc<PolicySnapshot> {
        Arc::clone(&self.current.read().unwrap_or_else(|e| e.into_inner()))
    }

    pub fn version(&self) -> u64 {
        self.snapshot().version()
    }

    pub fn evaluate(&self, request: &AccessRequest) -> Decision {
        self.snapshot().evaluate(request)
    }

    /// Publishes `policy` as the next version. Invalid policies are rejected
    /// whole and the previous version stays active.
    pub fn install(&self, policy: Policy) -> Result<u64, PolicyError> {
        let _w = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        self.publish(policy)
    }

    pub fn append_rule(&self, rule: PolicyRule) -> Result<u64, PolicyError> {
        let _w = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let mut next = self.snapshot().policy.clone();
        next.rules.push(rule);
        self.publish(next)
    }

    pub fn remove_rule(&self, index: usize) -> Result<u64, PolicyError> {
        let _w = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let mut next = self.snapshot().policy.clone();
        if index >= next.rules.len() {
            return Err(PolicyError::IndexOutOfRange { index, len: next.rules.len() });
        }
        next.rules.remove(index);
        self.publish(next)
    }

    // Caller holds the writer lock.
    fn publish(&self, mut policy: Policy) -> Result<u64, PolicyError> {
        policy.validate()?;
        let version = self.version() + 1;
        policy.set_version(version);
        let snapshot = Arc::new(PolicySnapshot::new(policy));
        *self.current.write().unwrap_or_else(|e| e.into_inner()) = snapshot;
        Ok(version)
    }
}
