//! Flat indexing of every binary variable the quadratic model uses: the four
//! schedule tensors plus the three slack families, in fixed block order.

use std::sync::Arc;

use crate::schedule::Layout;

/// A symbolic variable name, the inverse of a flat index.
///
/// `AssignSlack` absorbs idle slots on the assigned VM, `RunSlack` pads the
/// start-window inequality, and `SeqSlack` absorbs slots where a predecessor
/// has finished but the successor does not start. For `SeqSlack`, `step`
/// names the predecessor step and `vm` the successor step's VM.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarRef {
    X { chain: usize, step: usize, vm: usize },
    Y { chain: usize, step: usize, vm: usize, slot: usize },
    Z { chain: usize, step: usize, vm: usize, slot: usize },
    P { chain: usize, step: usize, vm: usize, slot: usize },
    AssignSlack { chain: usize, step: usize, vm: usize, slot: usize },
    RunSlack { chain: usize, step: usize, vm: usize, slot: usize },
    SeqSlack { chain: usize, step: usize, vm: usize, slot: usize },
}

/// Maps tensor coordinates to flat indices `0..len()`.
///
/// Block order: `x`, `y`, `z`, `p`, assign slacks, run slacks, seq slacks.
/// Within a block, indices run lexicographically over
/// `(chain, step, vm, slot)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableMap {
    layout: Arc<Layout>,
    horizon: usize,
}

impl VariableMap {
    pub(crate) fn new(layout: Arc<Layout>, horizon: usize) -> VariableMap {
        VariableMap { layout, horizon }
    }

    pub(crate) fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn len(&self) -> usize {
        let a = self.layout.total_assign();
        let s = self.layout.total_seq();
        a + 5 * a * self.horizon + s * self.horizon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn x_at(&self, a: usize) -> usize {
        a
    }

    pub(crate) fn y_at(&self, a: usize, tz: usize) -> usize {
        self.layout.total_assign() + a * self.horizon + tz
    }

    pub(crate) fn z_at(&self, a: usize, tz: usize) -> usize {
        let a_total = self.layout.total_assign();
        a_total + a_total * self.horizon + a * self.horizon + tz
    }

    pub(crate) fn p_at(&self, a: usize, tz: usize) -> usize {
        let a_total = self.layout.total_assign();
        a_total + 2 * a_total * self.horizon + a * self.horizon + tz
    }

    pub(crate) fn assign_slack_at(&self, a: usize, tz: usize) -> usize {
        let a_total = self.layout.total_assign();
        a_total + 3 * a_total * self.horizon + a * self.horizon + tz
    }

    pub(crate) fn run_slack_at(&self, a: usize, tz: usize) -> usize {
        let a_total = self.layout.total_assign();
        a_total + 4 * a_total * self.horizon + a * self.horizon + tz
    }

    pub(crate) fn seq_slack_at(&self, s: usize, tz: usize) -> usize {
        let a_total = self.layout.total_assign();
        a_total + 5 * a_total * self.horizon + s * self.horizon + tz
    }

    /// Flat index of a symbolic variable, `None` if the combination does not
    /// exist in this instance (incapable VM, out-of-range slot or step).
    pub fn index(&self, var: VarRef) -> Option<usize> {
        let slot_ok = |slot: usize| (1..=self.horizon).contains(&slot);
        match var {
            VarRef::X { chain, step, vm } => {
                Some(self.x_at(self.layout.assign_slot(chain, step, vm)?))
            }
            VarRef::Y { chain, step, vm, slot } if slot_ok(slot) => {
                Some(self.y_at(self.layout.assign_slot(chain, step, vm)?, slot - 1))
            }
            VarRef::Z { chain, step, vm, slot } if slot_ok(slot) => {
                Some(self.z_at(self.layout.assign_slot(chain, step, vm)?, slot - 1))
            }
            VarRef::P { chain, step, vm, slot } if slot_ok(slot) => {
                Some(self.p_at(self.layout.assign_slot(chain, step, vm)?, slot - 1))
            }
            VarRef::AssignSlack { chain, step, vm, slot } if slot_ok(slot) => {
                Some(self.assign_slack_at(self.layout.assign_slot(chain, step, vm)?, slot - 1))
            }
            VarRef::RunSlack { chain, step, vm, slot } if slot_ok(slot) => {
                Some(self.run_slack_at(self.layout.assign_slot(chain, step, vm)?, slot - 1))
            }
            VarRef::SeqSlack { chain, step, vm, slot } if slot_ok(slot) => {
                Some(self.seq_slack_at(self.layout.seq_slot(chain, step, vm)?, slot - 1))
            }
            _ => None,
        }
    }

    /// Symbolic name of a flat index, `None` past `len()`.
    pub fn describe(&self, idx: usize) -> Option<VarRef> {
        if idx >= self.len() {
            return None;
        }
        let a_total = self.layout.total_assign();
        let h = self.horizon;
        if idx < a_total {
            let (chain, step, vm) = self.layout.describe_assign(idx);
            return Some(VarRef::X { chain, step, vm });
        }
        let rest = idx - a_total;
        let block = rest / (a_total * h).max(1);
        if block < 5 && a_total > 0 {
            let within = rest - block * a_total * h;
            let (chain, step, vm) = self.layout.describe_assign(within / h);
            let slot = within % h + 1;
            return Some(match block {
                0 => VarRef::Y { chain, step, vm, slot },
                1 => VarRef::Z { chain, step, vm, slot },
                2 => VarRef::P { chain, step, vm, slot },
                3 => VarRef::AssignSlack { chain, step, vm, slot },
                _ => VarRef::RunSlack { chain, step, vm, slot },
            });
        }
        let within = rest - 5 * a_total * h;
        let (chain, step, vm) = self.layout.describe_seq(within / h);
        let slot = within % h + 1;
        Some(VarRef::SeqSlack { chain, step, vm, slot })
    }
}
