//! Historical markings.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::ChromosomeKind;

/// The structural event an innovation id was issued for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum MutationSignature {
    /// The (source, sink, edge) triple shared by all minimal chromosomes.
    Minimal { kind: ChromosomeKind },
    /// Splitting an edge: (new node, inbound edge, outbound edge).
    Split { kind: ChromosomeKind, edge: u64 },
    /// A new connection between two existing nodes.
    Connect { kind: ChromosomeKind, src: u64, dst: u64 },
}

/// Issues innovation ids. Identical structural mutations within one
/// generation receive identical ids; the minimal-genome ids are permanent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnovationRegistry {
    next_id: u64,
    #[serde(with = "cache_entries")]
    structural_cache: BTreeMap<MutationSignature, Vec<u64>>,
}

impl Default for InnovationRegistry {
    fn default() -> Self {
        Self::new()
    }
}

impl InnovationRegistry {
    pub fn new() -> Self {
        Self {
            next_id: 0,
            structural_cache: BTreeMap::new(),
        }
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    /// Forget per-generation signatures.
    pub fn begin_generation(&mut self) {
        self.structural_cache
            .retain(|sig, _| matches!(sig, MutationSignature::Minimal { .. }));
    }

    /// Ids for `signature`, issuing `count` fresh ones on first sight.
    pub fn ids_for(&mut self, signature: MutationSignature, count: usize) -> Vec<u64> {
        if let Some(ids) = self.structural_cache.get(&signature) {
            if ids.len() == count {
                return ids.clone();
            }
        }
        let ids = self.fresh(count);
        self.structural_cache.insert(signature, ids.clone());
        ids
    }

    /// Ids never shared with any other mutation.
    pub fn fresh(&mut self, count: usize) -> Vec<u64> {
        let start = self.next_id;
        self.next_id += count as u64;
        (start..self.next_id).collect()
    }

    pub fn cached(&self, signature: &MutationSignature) -> Option<&[u64]> {
        self.structural_cache.get(signature).map(Vec::as_slice)
    }
}

// JSON object keys must be strings, so the cache is stored as a list of pairs.
mod cache_entries {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Entry {
        signature: MutationSignature,
        ids: Vec<u64>,
    }

    pub fn serialize<S: Serializer>(map: &BTreeMap<MutationSignature, Vec<u64>>, s: S) -> Result<S::Ok, S::Error> {
        let entries: Vec<Entry> = map
            .iter()
            .map(|(k, v)| Entry {
                signature: *k,
                ids: v.clone(),
            })
            .collect();
        entries.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<MutationSignature, Vec<u64>>, D::Error> {
        let entries = Vec::<Entry>::deserialize(d)?;
        Ok(entries.into_iter().map(|e| (e.signature, e.ids)).collect())
    }
}
