use std::collections::HashMap;

use serde::Serialize;

use super::{Program, Statement};

/// `producer` stores `tensor`, `consumer` reads it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct DepEdge {
    pub producer: usize,
    pub consumer: usize,
    pub tensor: String,
}

/// A load whose result is stored directly, within one nest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CopyPair {
    pub nest: usize,
    pub load: usize,
    pub store: usize,
}

/// Producer→consumer edges in program order: by consumer, then by the order
/// in which the consumer first reads each tensor.
pub fn dependence_edges(program: &Program) -> Vec<DepEdge> {
    let mut producer: HashMap<&str, usize> = HashMap::new();
    let mut edges = Vec::new();
    for (ci, nest) in program.nests.iter().enumerate() {
        for t in nest.reads() {
            if let Some(&pi) = producer.get(t) {
                edges.push(DepEdge { producer: pi, consumer: ci, tensor: t.to_string() });
            }
        }
        for t in nest.writes() {
            producer.insert(t, ci);
        }
    }
    edges
}

pub fn find_copy_pairs(program: &Program) -> Vec<CopyPair> {
    let mut pairs = Vec::new();
    for (ni, nest) in program.nests.iter().enumerate() {
        let mut loads: HashMap<&str, usize> = HashMap::new();
        for (si, stmt) in nest.body.iter().enumerate() {
            match stmt {
                Statement::Load { result, .. } => {
                    loads.insert(result, si);
                }
                Statement::Store { value, .. } => {
                    if let Some(&li) = loads.get(value.as_str()) {
                        pairs.push(CopyPair { nest: ni, load: li, store: si });
                    }
                }
                _ => {}
            }
        }
    }
    pairs
}
