//! Interned, append-only relations with semi-naive frontiers.
//!
//! Tuples are stored flat in insertion order, so "old", "delta" and "full"
//! are all row-id ranges of the same buffer.

use std::hash::BuildHasher;
use std::ops::Range;

use hashbrown::HashTable;
use rustc_hash::{FxBuildHasher, FxHashMap};

#[derive(Default, Debug, Clone)]
pub(crate) struct Interner {
    names: Vec<String>,
    ids: FxHashMap<String, u32>,
}

impl Interner {
    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = u32::try_from(self.names.len()).expect("too many distinct constants");
        self.names.push(name.to_owned());
        self.ids.insert(name.to_owned(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }
}

/// Which rows of a relation a join step may read.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Span {
    /// Rows known before the previous iteration.
    Old,
    /// Rows added by the previous iteration.
    Delta,
    /// Everything visible in the current iteration.
    Full,
}

#[derive(Debug, Default)]
struct ColumnIndex {
    upto: usize,
    postings: FxHashMap<u32, Vec<u32>>,
}

#[derive(Debug)]
pub(crate) struct Relation {
    arity: usize,
    data: Vec<u32>,
    rows: usize,
    table: HashTable<u32>,
    indexes: Vec<Option<ColumnIndex>>,
    stable: usize,
    frontier: usize,
}

fn hash_tuple(tuple: &[u32]) -> u64 {
    FxBuildHasher.hash_one(tuple)
}

impl Relation {
    pub fn new(arity: usize) -> Self {
        Relation {
            arity,
            data: Vec::new(),
            rows: 0,
            table: HashTable::new(),
            indexes: (0..arity).map(|_| None).collect(),
            stable: 0,
            frontier: 0,
        }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn row(&self, id: u32) -> &[u32] {
        let start = id as usize * self.arity;
        &self.data[start..start + self.arity]
    }

    pub fn find(&self, tuple: &[u32]) -> Option<u32> {
        debug_assert_eq!(tuple.len(), self.arity);
        self.table
            .find(hash_tuple(tuple), |&id| self.row(id) == tuple)
            .copied()
    }

    pub fn contains(&self, tuple: &[u32]) -> bool {
        self.find(tuple).is_some()
    }

    pub fn insert(&mut self, tuple: &[u32]) -> bool {
        debug_assert_eq!(tuple.len(), self.arity);
        let hash = hash_tuple(tuple);
        let Relation {
            data, table, arity, ..
        } = self;
        let row = |id: u32| {
            let start = id as usize * *arity;
            &data[start..start + *arity]
        };
        if table.find(hash, |&id| row(id) == tuple).is_some() {
            return false;
        }
        let id = u32::try_from(self.rows).expect("relation exceeds u32 rows");
        self.data.extend_from_slice(tuple);
        self.rows += 1;
        let Relation {
            data, table, arity, ..
        } = self;
        table.insert_unique(hash, id, |&other| {
            let start = other as usize * *arity;
            hash_tuple(&data[start..start + *arity])
        });
        true
    }

    pub fn span(&self, span: Span) -> Range<usize> {
        match span {
            Span::Old => 0..self.stable,
            Span::Delta => self.stable..self.frontier,
            Span::Full => 0..self.frontier,
        }
    }

    /// Everything currently stored counts as new (start of a stage).
    pub fn open_stage(&mut self) {
        self.stable = 0;
        self.frontier = self.rows;
    }

    /// Everything currently stored is final.
    pub fn seal(&mut self) {
        self.stable = self.rows;
        self.frontier = self.rows;
    }

    /// Moves the frontier past the rows added during the last iteration.
    /// Returns true if that delta is non-empty.
    pub fn advance(&mut self) -> bool {
        self.stable = self.frontier;
        self.frontier = self.rows;
        self.frontier > self.stable
    }

    pub fn ensure_index(&mut self, col: usize) {
        let arity = self.arity;
        let index = self.indexes[col].get_or_insert_with(ColumnIndex::default);
        while index.upto < self.rows {
            let id = index.upto;
            let value = self.data[id * arity + col];
            index.postings.entry(value).or_default().push(id as u32);
            index.upto += 1;
        }
    }

    /// Row ids with `value` in column `col` restricted to `span`. The index
    /// must have been brought up to date with [`Relation::ensure_index`].
    pub fn lookup(&self, col: usize, value: u32, span: Span) -> &[u32] {
        let index = self.indexes[col]
            .as_ref()
            .expect("column index requested before it was built");
        debug_assert!(index.upto >= self.frontier);
        let Some(ids) = index.postings.get(&value) else {
            return &[];
        };
        let range = self.span(span);
        let lo = ids.partition_point(|&id| (id as usize) < range.start);
        let hi = ids.partition_point(|&id| (id as usize) < range.end);
        &ids[lo..hi]
    }
}
