//! Setup-time loading: circuit, triple store and input files, plus the
//! checks that must pass before any party goes online.
//!
//! Input files (`MPCI`, little-endian): magic, version u32, parameter
//! count u32, then per parameter the name length u32 and UTF-8 bytes, the
//! element count u64 and one u32 per element. A JSON sidecar listing the
//! shapes is written next to every input file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::demand::{static_demand, Demand};
use crate::field::Fp;
use crate::graph::{deserialize_circuit, CircuitFileError, CircuitGraph, NodeId};
use crate::linear::LinearError;
use crate::spdz::{batch_id, MaskRequest, Online, SpdzError, TripleStore};
use crate::value::Value;

pub const INPUT_MAGIC: &[u8; 4] = b"MPCI";
pub const INPUT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
    #[error("version mismatch: {0}")]
    VersionMismatch(String),
    #[error("corrupt input file: {0}")]
    Corrupt(String),
    #[error("input {name} has {got} elements, circuit expects {expected}")]
    ShapeMismatch { name: String, expected: u64, got: usize },
    #[error("input {0} is not a parameter of the circuit")]
    UnknownInput(String),
    #[error("no value for input {0}, which this party owns")]
    MissingInput(String),
    #[error("not enough {what}: need {needed}, store has {available} (short by {})", needed - available)]
    InsufficientTriples { what: &'static str, needed: usize, available: usize },
    #[error("matrix triple {index} is {have:?}, circuit needs {want:?}")]
    MatrixShape { index: usize, want: (u32, u32), have: (u32, u32) },
    #[error("no input mask left for {name}")]
    MaskExhausted { name: String },
    #[error("store is for party {store} of {parties}, running as party {party} of {n}")]
    WrongParty { store: u32, parties: u32, party: usize, n: usize },
    #[error(transparent)]
    Circuit(#[from] CircuitFileError),
    #[error(transparent)]
    Store(#[from] SpdzError),
    #[error(transparent)]
    Plan(#[from] LinearError),
}

fn read(path: &Path) -> Result<Vec<u8>, IoError> {
    std::fs::read(path).map_err(|source| IoError::File { path: path.to_path_buf(), source })
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    std::fs::write(path, bytes).map_err(|source| IoError::File { path: path.to_path_buf(), source })
}

/// Cleartext parameter values by name.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InputBundle {
    pub params: BTreeMap<String, Vec<Fp>>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    version: u32,
    params: Vec<SidecarParam>,
}

#[derive(Serialize, Deserialize)]
struct SidecarParam {
    name: String,
    len: usize,
}

impl InputBundle {
    pub fn new(params: BTreeMap<String, Vec<Fp>>) -> InputBundle {
        InputBundle { params }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(INPUT_MAGIC);
        out.extend_from_slice(&INPUT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, vals) in &self.params {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(vals.len() as u64).to_le_bytes());
            for v in vals {
                out.extend_from_slice(&v.value().to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<InputBundle, IoError> {
        let mut r = Cursor { b: bytes, at: 0 };
        if r.take(4)? != INPUT_MAGIC {
            return Err(IoError::VersionMismatch("missing MPCI magic".into()));
        }
        let version = r.u32()?;
        if version != INPUT_VERSION {
            return Err(IoError::VersionMismatch(format!("input file version {version}, expected {INPUT_VERSION}")));
        }
        let count = r.u32()?;
        let mut params = BTreeMap::new();
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?).map_err(|_| IoError::Corrupt("parameter name is not UTF-8".into()))?.to_string();
            let n = r.u64()? as usize;
            if n > (bytes.len() - r.at) / 4 {
                return Err(IoError::Corrupt(format!("{name}: {n} elements run past the end of the file")));
            }
            let mut vals = Vec::with_capacity(n);
            for _ in 0..n {
                let w = r.u32()?;
                vals.push(Fp::from_canonical(w).ok_or_else(|| IoError::Corrupt(format!("{name}: {w} is not a field element")))?);
            }
            if params.insert(name.clone(), vals).is_some() {
                return Err(IoError::Corrupt(format!("parameter {name} appears twice")));
            }
        }
        if r.at != bytes.len() {
            return Err(IoError::Corrupt("trailing bytes".into()));
        }
        Ok(InputBundle { params })
    }

    /// Shape listing for inspection; not read back.
    pub fn sidecar_json(&self) -> String {
        let s = Sidecar {
            version: INPUT_VERSION,
            params: self.params.iter().map(|(n, v)| SidecarParam { name: n.clone(), len: v.len() }).collect(),
        };
        serde_json::to_string_pretty(&s).expect("sidecar serializes")
    }

    /// Writes the binary file and `<path>.json` next to it.
    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        write(path, &self.to_bytes())?;
        write(&sidecar_path(path), self.sidecar_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<InputBundle, IoError> {
        InputBundle::from_bytes(&read(path)?)
    }

    /// The subset of parameters owned by `party` under `store`'s masks.
    pub fn owned_by(&self, store: &TripleStore, party: usize) -> InputBundle {
        let params = self
            .params
            .iter()
            .filter(|(n, _)| store.mask(n).is_some_and(|m| m.owner as usize == party))
            .map(|(n, v)| (n.clone(), v.clone()))
            .collect();
        InputBundle { params }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

struct Cursor<'a> {
    b: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IoError> {
        let s = self.b.get(self.at..self.at + n).ok_or_else(|| IoError::Corrupt("truncated".into()))?;
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, IoError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, IoError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Owner of parameter `index` when none is given: parameters are dealt
/// round-robin over the parties.
pub fn default_owner(index: usize, parties: usize) -> u32 {
    (index % parties) as u32
}

/// One mask request per circuit input, owners from `owners` or
/// [`default_owner`].
pub fn mask_requests(g: &CircuitGraph, parties: usize, owners: &BTreeMap<String, u32>) -> Vec<MaskRequest> {
    g.inputs
        .iter()
        .enumerate()
        .map(|(i, d)| MaskRequest {
            name: d.name.clone(),
            owner: owners.get(&d.name).copied().unwrap_or_else(|| default_owner(i, parties)),
            private: d.privacy.is_private(),
            len: d.len as usize,
        })
        .collect()
}

/// Fails unless `store` covers `demand`: enough scalar triples, and
/// matrix triples of the right shapes in order.
pub fn check_supply(store: &TripleStore, demand: &Demand) -> Result<(), IoError> {
    if store.scalar.len() < demand.scalar {
        return Err(IoError::InsufficientTriples { what: "scalar triples", needed: demand.scalar, available: store.scalar.len() });
    }
    if store.matrix.len() < demand.matrix.len() {
        return Err(IoError::InsufficientTriples { what: "matrix triples", needed: demand.matrix.len(), available: store.matrix.len() });
    }
    for (index, (&want, t)) in demand.matrix.iter().zip(&store.matrix).enumerate() {
        if (t.rows, t.cols) != want {
            return Err(IoError::MatrixShape { index, want, have: (t.rows, t.cols) });
        }
    }
    Ok(())
}

/// Checks a party's inputs against the circuit and the store's masks.
pub fn check_inputs(g: &CircuitGraph, store: &TripleStore, inputs: &InputBundle) -> Result<(), IoError> {
    for (name, v) in &inputs.params {
        let d = g.input_by_name(name).ok_or_else(|| IoError::UnknownInput(name.clone()))?;
        if v.len() as u64 != d.len {
            return Err(IoError::ShapeMismatch { name: name.clone(), expected: d.len, got: v.len() });
        }
    }
    for d in &g.inputs {
        let m = store.mask(&d.name).ok_or_else(|| IoError::MaskExhausted { name: d.name.clone() })?;
        if d.privacy.is_private() && (!m.private || m.shares.len() as u64 != d.len) {
            return Err(IoError::MaskExhausted { name: d.name.clone() });
        }
        if m.owner == store.party && !inputs.params.contains_key(&d.name) {
            return Err(IoError::MissingInput(d.name.clone()));
        }
    }
    Ok(())
}

/// Everything a party loads before going online.
#[derive(Debug)]
pub struct RunBundle {
    pub graph: CircuitGraph,
    pub store: TripleStore,
    pub inputs: InputBundle,
    /// Time spent reading and validating the circuit file.
    pub circuit_time: Duration,
    /// Time spent on the store and inputs.
    pub setup_time: Duration,
}

/// Loads and cross-checks the three setup files. `inputs` may be omitted
/// by a party that owns no inputs.
pub fn load_run_bundle(circuit: &Path, triples: &Path, inputs: Option<&Path>, slice: u64) -> Result<RunBundle, IoError> {
    let t0 = Instant::now();
    let graph = deserialize_circuit(&read(circuit)?)?;
    let t1 = Instant::now();
    let (store, inputs) = load_setup(&graph, triples, inputs, slice)?;
    Ok(RunBundle { graph, store, inputs, circuit_time: t1 - t0, setup_time: t1.elapsed() })
}

/// Loads a party's triple store and inputs for an already loaded circuit
/// and checks them against it. Only the inputs the store says this party
/// owns are kept.
pub fn load_setup(graph: &CircuitGraph, triples: &Path, inputs: Option<&Path>, slice: u64) -> Result<(TripleStore, InputBundle), IoError> {
    if !triples.exists() {
        // nothing preprocessed: report what is missing rather than the path
        let d = static_demand(graph, slice)?;
        return Err(match (d.scalar, d.matrix.len()) {
            (0, 0) => IoError::MaskExhausted { name: graph.inputs.first().map_or_else(String::new, |i| i.name.clone()) },
            (0, m) => IoError::InsufficientTriples { what: "matrix triples", needed: m, available: 0 },
            (s, _) => IoError::InsufficientTriples { what: "scalar triples", needed: s, available: 0 },
        });
    }
    let store = TripleStore::from_bytes(&read(triples)?)?;
    let inputs = match inputs {
        Some(p) => InputBundle::load(p)?,
        None => InputBundle::default(),
    };
    let inputs = inputs.owned_by(&store, store.party as usize);
    check_inputs(graph, &store, &inputs)?;
    check_supply(&store, &static_demand(graph, slice)?)?;
    Ok((store, inputs))
}

/// Secret-shares private inputs through their masks and broadcasts
/// public ones from their owners. Returns the value of every input node.
pub async fn share_inputs(online: &Online, g: &CircuitGraph, store: &TripleStore, inputs: &InputBundle) -> Result<Vec<(NodeId, Value)>, IoError> {
    let mut out = Vec::with_capacity(g.inputs.len());
    for d in &g.inputs {
        let mask = store.mask(&d.name).ok_or_else(|| IoError::MaskExhausted { name: d.name.clone() })?;
        let clear = inputs.params.get(&d.name).map(|v| v.as_slice());
        let tag = batch_id(d.node, 0, 0);
        let v = if d.privacy.is_private() {
            if mask.shares.len() as u64 != d.len {
                return Err(IoError::MaskExhausted { name: d.name.clone() });
            }
            Value::shared(online.share_input(tag, mask, clear).await?)
        } else {
            Value::public(online.share_public(tag, mask.owner as usize, d.len as usize, clear).await?)
        };
        out.push((d.node, v));
    }
    Ok(out)
}
