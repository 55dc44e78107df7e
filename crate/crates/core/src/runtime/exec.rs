//! Evaluation of one issued node on one party.

use std::collections::HashMap;
use std::sync::Arc;

use super::RunError;
use crate::backend::{KernelArg, KernelOp};
use crate::field::Fp;
use crate::graph::{CircuitGraph, NodeId, NodeKind};
use crate::linear::{run_linear_layer, TilePlan};
use crate::sched::Issue;
use crate::spdz::{batch_id, Online, ShareBatch, TriplePool};
use crate::value::Value;

/// Triple offsets reserved for one execution of a node.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Reservation {
    pub scalar: usize,
    pub matrix: usize,
}

pub struct ExecCtx {
    pub graph: Arc<CircuitGraph>,
    pub online: Arc<Online>,
    pub pool: Arc<TriplePool>,
    pub plans: HashMap<NodeId, TilePlan>,
}

impl ExecCtx {
    /// Turns a public value into a sharing of itself, so values the graph
    /// calls private are always shared at runtime.
    fn promote(&self, v: Value) -> Result<Value, RunError> {
        match v.public_values() {
            Some(p) => {
                let zero = ShareBatch::zeros(p.len());
                let out = self.online.kernel(KernelOp::Add, vec![KernelArg::Shared(zero.as_slice()), KernelArg::Public(p)])?;
                Ok(Value::from_output(out))
            }
            None => Ok(v),
        }
    }

    fn local(&self, op: KernelOp, args: &[Value]) -> Result<Value, RunError> {
        let out = self.online.kernel(op, args.iter().map(|a| a.arg()).collect())?;
        Ok(Value::from_output(out))
    }

    pub async fn execute(&self, issue: Issue<Value>, res: Reservation) -> Result<Value, RunError> {
        let g = &self.graph;
        let (id, visit) = (issue.id, issue.visit);
        let mut args = Vec::with_capacity(issue.args.len());
        for (a, &o) in issue.args.into_iter().zip(&issue.operands) {
            let promote = g.node(o).privacy.is_private() && !matches!(issue.kind, NodeKind::Load);
            args.push(if promote { self.promote(a)? } else { a });
        }
        match &issue.kind {
            NodeKind::Adder | NodeKind::AddBatch => self.local(KernelOp::Add, &args),
            NodeKind::Subtract | NodeKind::SubBatch => self.local(KernelOp::Sub, &args),
            NodeKind::ReduceAdd => self.local(KernelOp::ReduceAdd, &args),
            NodeKind::Multiplier | NodeKind::MultBatch => match (args[0].shares(), args[1].shares()) {
                (Some(x), Some(y)) => {
                    let t = self.pool.claim_scalar(res.scalar, x.len())?;
                    Ok(Value::shared(self.online.beaver_mul(batch_id(id, visit, 0), x, y, t).await?))
                }
                _ => self.local(KernelOp::Mul, &args),
            },
            NodeKind::ReduceMul => match args[0].shares() {
                Some(x) => Ok(Value::shared(self.product_tree(id, visit, x.to_batch(), res.scalar).await?)),
                None => Ok(Value::public(vec![args[0].public_values().unwrap().iter().fold(Fp::ONE, |s, &v| s * v)])),
            },
            NodeKind::Load => {
                let lanes = g.node(id).lanes as usize;
                let start = args[1].public_values().and_then(|s| s.first().copied()).ok_or(RunError::PrivateIndex { node: id })?;
                let start = start.value() as usize;
                args[0].view(start..start + lanes).ok_or(RunError::LoadOutOfBounds { node: id, start, lanes, len: args[0].len() })
            }
            NodeKind::Compare { pred } => {
                let (Some(a), Some(b)) = (args[0].public_values(), args[1].public_values()) else {
                    return Err(RunError::PrivateComparison { node: id });
                };
                if a.len() != b.len() {
                    return Err(RunError::Internal(format!("compare {id}: {} vs {} lanes", a.len(), b.len())));
                }
                Ok(Value::public(a.iter().zip(b).map(|(x, y)| Fp::new(pred.eval(x.signed(), y.signed()) as u32)).collect()))
            }
            NodeKind::LinearLayer { .. } => {
                let plan = &self.plans[&id];
                let [x, w, b] = <[Value; 3]>::try_from(args).map_err(|_| RunError::Internal("linear layer arity".into()))?;
                Ok(run_linear_layer(self.online.clone(), self.pool.clone(), id, visit, plan, x, w, b, res.matrix).await?)
            }
            NodeKind::Root => match args.into_iter().next() {
                None => Ok(Value::public(Vec::new())),
                Some(v) => match v.shares() {
                    Some(s) => Ok(Value::public(self.online.open(batch_id(id, visit, 0), s).await?)),
                    None => Ok(v),
                },
            },
            other => Err(RunError::Internal(format!("node {id} of kind {} is not executable", other.name()))),
        }
    }

    /// Product of all lanes by a log-depth tree of batched Beaver
    /// multiplications, `n - 1` triples in total.
    async fn product_tree(&self, id: NodeId, visit: u32, mut cur: ShareBatch, mut offset: usize) -> Result<ShareBatch, RunError> {
        let mut level = 0;
        while cur.len() > 1 {
            let h = cur.len() / 2;
            let t = self.pool.claim_scalar(offset, h)?;
            offset += h;
            let mut next = self.online.beaver_mul(batch_id(id, visit, level), cur.slice(0..h), cur.slice(h..2 * h), t).await?;
            if cur.len() % 2 == 1 {
                next.push(cur.get(2 * h));
            }
            cur = next;
            level += 1;
        }
        Ok(cur)
    }
}
