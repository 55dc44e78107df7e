//! `y = W x + b` with `W` cut into contiguous row blocks. Each block is
//! multiplied with its own matrix triple, and blocks run as independent
//! tasks whose results are stitched back together in row order.

use std::sync::Arc;

use crate::backend::{KernelArg, KernelOp};
use crate::field::{Fp, P};
use crate::spdz::{batch_id, MatrixTriple, Online, ShareBatch, ShareSlice, SpdzError, TriplePool};
use crate::value::Value;

/// Default elements of `W` per tile.
pub const DEFAULT_SLICE: u64 = 262_140;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Tile {
    pub index: u32,
    pub row_start: u32,
    pub rows: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TilePlan {
    pub din: u32,
    pub dout: u32,
    pub slice: u64,
    pub rows_per_tile: u32,
    pub tiles: Vec<Tile>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TileResult {
    pub row_start: u32,
    pub rows: u32,
    pub z: ShareBatch,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LinearError {
    #[error("slice of {slice} elements cannot hold a row of {din}")]
    SliceTooSmall { din: u32, slice: u64 },
    #[error("linear layer has an empty dimension")]
    EmptyLayer,
    #[error("{what} has {got} elements, expected {expected}")]
    Shape { what: &'static str, expected: usize, got: usize },
    #[error(transparent)]
    Spdz(#[from] SpdzError),
    #[error("tile task failed: {0}")]
    Task(String),
}

pub fn plan_tiles(din: u32, dout: u32, slice: u64) -> Result<TilePlan, LinearError> {
    if din == 0 || dout == 0 {
        return Err(LinearError::EmptyLayer);
    }
    if slice < din as u64 {
        return Err(LinearError::SliceTooSmall { din, slice });
    }
    let rows_per_tile = (slice / din as u64).min(dout as u64) as u32;
    let tiles = (0..dout)
        .step_by(rows_per_tile as usize)
        .enumerate()
        .map(|(i, start)| Tile { index: i as u32, row_start: start, rows: rows_per_tile.min(dout - start) })
        .collect();
    Ok(TilePlan { din, dout, slice, rows_per_tile, tiles })
}

/// Dot products over the field with one reduction per call.
fn dot(a: &[Fp], b: &[Fp]) -> Fp {
    let mut acc: u128 = 0;
    for (x, y) in a.iter().zip(b) {
        acc += x.value() as u128 * y.value() as u128;
    }
    Fp::from_u64((acc % P as u128) as u64)
}

/// One tile: open `D = W_t - A` and `E = x - B` together, then
/// `Z = C + D B + A E + D E` plus the bias slice.
pub async fn run_tile(
    online: &Online,
    tag: u64,
    tile: Tile,
    x: ShareSlice<'_>,
    w_tile: ShareSlice<'_>,
    b_slice: KernelArg<'_>,
    mt: &MatrixTriple,
) -> Result<TileResult, LinearError> {
    let (rows, din) = (tile.rows as usize, x.len());
    if (mt.rows, mt.cols) != (tile.rows, din as u32) {
        return Err(SpdzError::TripleShapeMismatch { index: tile.index as usize, want: (tile.rows, din as u32), have: (mt.rows, mt.cols) }.into());
    }
    check("W tile", rows * din, w_tile.len())?;
    check("bias slice", rows, b_slice.len())?;

    let mut de = ShareBatch::with_capacity(rows * din + din);
    for (w, a) in [(w_tile, mt.a.as_slice()), (x, mt.b.as_slice())] {
        for i in 0..w.len() {
            de.push(w.get(i) - a.get(i));
        }
    }
    let opened = online.open(tag, de.as_slice()).await?;
    let (d, e) = opened.split_at(rows * din);

    let (party, al) = (online.party(), online.alpha_share());
    let mut z = ShareBatch::with_capacity(rows);
    for r in 0..rows {
        let row = r * din..(r + 1) * din;
        let dr = &d[row.clone()];
        let de = dot(dr, e);
        let v = mt.c.values[r] + dot(dr, &mt.b.values) + dot(&mt.a.values[row.clone()], e);
        let m = mt.c.macs[r] + dot(dr, &mt.b.macs) + dot(&mt.a.macs[row], e);
        z.values.push(if party == 0 { v + de } else { v });
        z.macs.push(m + al * de);
    }
    let z = match online.kernel(KernelOp::Add, vec![KernelArg::Shared(z.as_slice()), b_slice])? {
        crate::backend::KernelOutput::Shared(s) => s,
        crate::backend::KernelOutput::Public(_) => unreachable!(),
    };
    Ok(TileResult { row_start: tile.row_start, rows: tile.rows, z })
}

fn check(what: &'static str, expected: usize, got: usize) -> Result<(), LinearError> {
    if expected == got {
        Ok(())
    } else {
        Err(LinearError::Shape { what, expected, got })
    }
}

/// Places tile results by row; the order of `results` is irrelevant.
pub fn assemble(plan: &TilePlan, results: Vec<TileResult>) -> ShareBatch {
    let mut out = ShareBatch::zeros(plan.dout as usize);
    for t in results {
        let s = t.row_start as usize;
        out.values[s..s + t.rows as usize].copy_from_slice(&t.z.values);
        out.macs[s..s + t.rows as usize].copy_from_slice(&t.z.macs);
    }
    out
}

/// Matrix triples the layer consumes: one per tile when both `W` and `x`
/// are secret, none otherwise.
pub fn layer_demand(plan: &TilePlan, w_private: bool, x_private: bool) -> Vec<(u32, u32)> {
    if w_private && x_private {
        plan.tiles.iter().map(|t| (t.rows, plan.din)).collect()
    } else {
        Vec::new()
    }
}

/// Evaluates the layer for node `node` on visit `visit`. Secret-by-secret
/// layers spawn one task per tile, claiming matrix triples
/// `matrix_offset..` in tile order.
#[allow(clippy::too_many_arguments)]
pub async fn run_linear_layer(
    online: Arc<Online>,
    pool: Arc<TriplePool>,
    node: u32,
    visit: u32,
    plan: &TilePlan,
    x: Value,
    w: Value,
    b: Value,
    matrix_offset: usize,
) -> Result<Value, LinearError> {
    let (din, dout) = (plan.din as usize, plan.dout as usize);
    check("x", din, x.len())?;
    check("W", din * dout, w.len())?;
    check("b", dout, b.len())?;

    if !(x.is_private() && w.is_private()) {
        let y = local_matvec(plan, &x, &w);
        return Ok(Value::from_output(online.kernel(KernelOp::Add, vec![y.arg(), b.arg()])?));
    }

    let mut tasks = tokio::task::JoinSet::new();
    for &tile in &plan.tiles {
        let (online, pool, x, b) = (online.clone(), pool.clone(), x.clone(), b.clone());
        let rs = tile.row_start as usize..(tile.row_start + tile.rows) as usize;
        let w_tile = w.view(rs.start * din..rs.end * din).expect("checked shape");
        let b_slice = b.view(rs).expect("checked shape");
        tasks.spawn(async move {
            let mt = pool.claim_matrix(matrix_offset + tile.index as usize, tile.rows, din as u32)?;
            let tag = batch_id(node, visit, tile.index);
            run_tile(&online, tag, tile, x.shares().unwrap(), w_tile.shares().unwrap(), b_slice.arg(), mt).await
        });
    }
    let mut results = Vec::with_capacity(plan.tiles.len());
    while let Some(r) = tasks.join_next().await {
        results.push(r.map_err(|e| LinearError::Task(e.to_string()))??);
    }
    Ok(Value::shared(assemble(plan, results)))
}

/// `W x` when at most one side is secret: a purely local linear map.
fn local_matvec(plan: &TilePlan, x: &Value, w: &Value) -> Value {
    let din = plan.din as usize;
    let rows = 0..plan.dout as usize;
    match (x, w) {
        (Value::Public(..), Value::Public(..)) => {
            let (xv, wv) = (x.public_values().unwrap(), w.public_values().unwrap());
            Value::public(rows.map(|r| dot(&wv[r * din..(r + 1) * din], xv)).collect())
        }
        (Value::Shared(..), Value::Public(..)) => {
            let (xs, wv) = (x.shares().unwrap(), w.public_values().unwrap());
            let mut out = ShareBatch::with_capacity(plan.dout as usize);
            for r in rows {
                let wr = &wv[r * din..(r + 1) * din];
                out.values.push(dot(wr, xs.values));
                out.macs.push(dot(wr, xs.macs));
            }
            Value::shared(out)
        }
        (Value::Public(..), Value::Shared(..)) => {
            let (xv, ws) = (x.public_values().unwrap(), w.shares().unwrap());
            let mut out = ShareBatch::with_capacity(plan.dout as usize);
            for r in rows {
                let row = r * din..(r + 1) * din;
                out.values.push(dot(&ws.values[row.clone()], xv));
                out.macs.push(dot(&ws.macs[row], xv));
            }
            Value::shared(out)
        }
        (Value::Shared(..), Value::Shared(..)) => unreachable!("secret-by-secret layers go through tiles"),
    }
}
