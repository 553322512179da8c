//! K-way merge of time-ordered generators.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::error::EngineFault;
use crate::time::Picos;

pub trait Timestamped {
    fn timestamp(&self) -> Picos;
}

impl Timestamped for Picos {
    fn timestamp(&self) -> Picos {
        *self
    }
}

impl Timestamped for crate::fsm::FsmEvent {
    fn timestamp(&self) -> Picos {
        self.t
    }
}

struct Head<T> {
    item: T,
    source: usize,
}

impl<T: Ord> PartialEq for Head<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Ord> Eq for Head<T> {}

impl<T: Ord> PartialOrd for Head<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Ord> Ord for Head<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.item.cmp(&other.item).then(self.source.cmp(&other.source))
    }
}

/// Merged view of several generators. Items come out in `Ord` order; equal
/// items keep the order of the generators that produced them.
///
/// A generator whose timestamps go backwards yields an
/// [`EngineFault::NonMonotoneGenerator`] and ends the merge.
pub struct MergeStreams<I: Iterator> {
    generators: Vec<I>,
    heads: BinaryHeap<Reverse<Head<I::Item>>>,
    fault: Option<EngineFault>,
    done: bool,
}

pub fn merge_streams<I>(generators: Vec<I>) -> MergeStreams<I>
where
    I: Iterator,
    I::Item: Ord + Timestamped,
{
    let mut generators = generators;
    let mut heads = BinaryHeap::with_capacity(generators.len());
    for (source, g) in generators.iter_mut().enumerate() {
        if let Some(item) = g.next() {
            heads.push(Reverse(Head { item, source }));
        }
    }
    MergeStreams {
        generators,
        heads,
        fault: None,
        done: false,
    }
}

impl<I> MergeStreams<I>
where
    I: Iterator,
    I::Item: Ord + Timestamped,
{
    /// The next item without consuming it. A pending fault peeks as `None`
    /// only once the merge is exhausted, so callers must still drain it.
    pub fn peek(&self) -> Option<&I::Item> {
        if self.done {
            return None;
        }
        self.heads.peek().map(|h| &h.0.item)
    }
}

impl<I> Iterator for MergeStreams<I>
where
    I: Iterator,
    I::Item: Ord + Timestamped,
{
    type Item = Result<I::Item, EngineFault>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        if let Some(fault) = self.fault.take() {
            self.done = true;
            return Some(Err(fault));
        }
        let Reverse(Head { item, source }) = self.heads.pop()?;
        if let Some(next) = self.generators[source].next() {
            if next.timestamp() < item.timestamp() {
                self.fault = Some(EngineFault::NonMonotoneGenerator {
                    generator: source,
                    prev: item.timestamp(),
                    next: next.timestamp(),
                });
            } else {
                self.heads.push(Reverse(Head { item: next, source }));
            }
        }
        Some(Ok(item))
    }
}
