use std::collections::HashMap;

use super::{AccessRequest, Action, Decision, Object, Policy, Reason, RuleKind};
use crate::origin::Origin;

const NONE: u32 = u32::MAX;
const ORIGINS: usize = Origin::ALL.len();

/// Earliest rule index per (origin, access mode) at one trie node.
type Slots = [[u32; 2]; ORIGINS];

#[derive(Debug, Clone)]
struct Node {
    children: HashMap<String, Node>,
    first: Slots,
}

impl Default for Node {
    fn default() -> Self {
        Self { children: HashMap::new(), first: [[NONE; 2]; ORIGINS] }
    }
}

/// Indexed form of a [`Policy`].
///
/// Path rules live in a component trie where each node keeps the earliest
/// matching rule index per origin and access mode, so a lookup is one walk
/// down the request path. Interface rules are a hash lookup. Decisions are
/// identical to [`Policy::evaluate`].
#[derive(Debug, Clone)]
pub struct CompiledPolicy {
    enforce_unknown: bool,
    root: Node,
    interfaces: HashMap<String, [u32; ORIGINS]>,
    actions: Vec<Action>,
}

impl CompiledPolicy {
    pub fn new(policy: &Policy) -> Self {
        let mut root = Node::default();
        let mut interfaces: HashMap<String, [u32; ORIGINS]> = HashMap::new();
        for (idx, rule) in policy.rules.iter().enumerate() {
            let idx = idx as u32;
            match &rule.kind {
                RuleKind::PathPrefix { prefix, mode } => {
                    let mut node = &mut root;
                    for c in prefix.components() {
                        node = node.children.entry(c.clone()).or_default();
                    }
                    for o in rule.origins.iter() {
                        for m in mode.modes() {
                            let slot = &mut node.first[o.index()][m.index()];
                            *slot = (*slot).min(idx);
                        }
                    }
                }
                RuleKind::Interface { name } => {
                    let slots = interfaces.entry(name.as_str().to_string()).or_insert([NONE; ORIGINS]);
                    for o in rule.origins.iter() {
                        slots[o.index()] = slots[o.index()].min(idx);
                    }
                }
            }
        }
        Self {
            enforce_unknown: policy.enforce_unknown,
            root,
            interfaces,
            actions: policy.rules.iter().map(|r| r.action).collect(),
        }
    }

    pub fn evaluate(&self, request: &AccessRequest) -> Decision {
        let o = request.origin;
        match o {
            Origin::Bootstrap => return Decision::exempt(Reason::BootstrapExempt),
            Origin::Unknown if !self.enforce_unknown => return Decision::exempt(Reason::UnknownExempt),
            _ => {}
        }
        let best = match &request.object {
            Object::File { path, mode } => {
                let (oi, mi) = (o.index(), mode.index());
                let mut node = &self.root;
                let mut best = node.first[oi][mi];
                for c in path.components() {
                    match node.children.get(c) {
                        Some(child) => {
                            node = child;
                            best = best.min(node.first[oi][mi]);
                        }
                        None => break,
                    }
                }
                best
            }
            Object::Interface(name) => self.interfaces.get(name.as_str()).map_or(NONE, |s| s[o.index()]),
        };
        if best == NONE {
            Decision::exempt(Reason::DefaultAllow)
        } else {
            Decision::matched(best as usize, self.actions[best as usize])
        }
    }
}

impl From<&Policy> for CompiledPolicy {
    fn from(policy: &Policy) -> Self {
        CompiledPolicy::new(policy)
    }
}
