//! Trait vectors, the global trait registry and the alignment container.
//!
//! A [`TraitSequence`] keeps a running alive count and a dense index set of
//! present columns (array + reverse slot map, delete by swap-with-last), so
//! state updates, alive counts and uniform random alive-column draws are all
//! constant time regardless of sparsity.

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SeqError {
    #[error("column {column} out of range for length {len}")]
    ColumnOutOfRange { column: usize, len: usize },
    #[error("no alive trait to draw from")]
    NoAliveTrait,
    #[error("invalid state symbol '{symbol}' at position {pos}")]
    BadSymbol { symbol: char, pos: usize },
    #[error("hidden-state vector length {hidden} does not match sequence length {len}")]
    HiddenLengthMismatch { hidden: usize, len: usize },
    #[error("meaning-class id {class} out of range for {count} classes")]
    ClassOutOfRange { class: usize, count: usize },
    #[error("a registry needs at least one meaning class")]
    NoClasses,
    #[error("duplicate taxon '{0}' in alignment")]
    DuplicateTaxon(String),
    #[error("alignment rows must share one column count")]
    RaggedRows,
}

/// Observable state of one trait column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum TraitState {
    Absent = 0,
    Present = 1,
    Missing = 2,
}

impl TraitState {
    pub fn symbol(self) -> char {
        match self {
            TraitState::Absent => '0',
            TraitState::Present => '1',
            TraitState::Missing => '?',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        match c {
            '0' => Some(TraitState::Absent),
            '1' => Some(TraitState::Present),
            '?' => Some(TraitState::Missing),
            _ => None,
        }
    }
}

/// Covarion hidden regime of a site.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiteActivity {
    Variant,
    Invariant,
}

const NO_SLOT: u32 = u32::MAX;

/// Dense set of present column indices with O(1) insert, delete and
/// uniform random choice.
#[derive(Debug, Clone, Default)]
struct AliveSet {
    members: Vec<u32>,
    /// slot[col] = position of col in `members`, or NO_SLOT.
    slot: Vec<u32>,
}

impl AliveSet {
    fn grow(&mut self, len: usize) {
        if self.slot.len() < len {
            self.slot.resize(len, NO_SLOT);
        }
    }

    fn contains(&self, col: usize) -> bool {
        self.slot[col] != NO_SLOT
    }

    fn insert(&mut self, col: usize) {
        debug_assert!(!self.contains(col));
        self.slot[col] = self.members.len() as u32;
        self.members.push(col as u32);
    }

    fn remove(&mut self, col: usize) {
        let pos = self.slot[col] as usize;
        debug_assert_ne!(self.slot[col], NO_SLOT);
        let last = *self.members.last().expect("set not empty");
        self.members[pos] = last;
        self.slot[last as usize] = pos as u32;
        self.members.pop();
        self.slot[col] = NO_SLOT;
    }

    fn len(&self) -> usize {
        self.members.len()
    }

    fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<usize> {
        if self.members.is_empty() {
            return None;
        }
        Some(self.members[rng.random_range(0..self.members.len())] as usize)
    }
}

/// One language's trait vector with cached alive count and alive-index set,
/// plus an optional covarion hidden-regime vector.
#[derive(Debug, Clone, Default)]
pub struct TraitSequence {
    states: Vec<TraitState>,
    alive: AliveSet,
    hidden: Option<Vec<SiteActivity>>,
}

impl TraitSequence {
    pub fn from_states(states: Vec<TraitState>) -> Self {
        let mut seq = Self {
            states: Vec::new(),
            alive: AliveSet::default(),
            hidden: None,
        };
        for s in states {
            seq.push(s);
        }
        seq
    }

    /// Parse a value string over `0`, `1` and `?`.
    pub fn from_value_str(text: &str) -> Result<Self, SeqError> {
        let mut states = Vec::with_capacity(text.len());
        for (pos, c) in text.chars().enumerate() {
            states.push(TraitState::from_symbol(c).ok_or(SeqError::BadSymbol { symbol: c, pos })?);
        }
        Ok(Self::from_states(states))
    }

    pub fn all_present(len: usize) -> Self {
        Self::from_states(vec![TraitState::Present; len])
    }

    pub fn all_absent(len: usize) -> Self {
        Self::from_states(vec![TraitState::Absent; len])
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, column: usize) -> TraitState {
        self.states[column]
    }

    pub fn states(&self) -> &[TraitState] {
        &self.states
    }

    /// Store `state` at `column`, updating the alive caches in O(1).
    pub fn set_state(&mut self, column: usize, state: TraitState) -> Result<(), SeqError> {
        if column >= self.states.len() {
            return Err(SeqError::ColumnOutOfRange {
                column,
                len: self.states.len(),
            });
        }
        let old = self.states[column];
        if old == state {
            return Ok(());
        }
        if old == TraitState::Present {
            self.alive.remove(column);
        }
        if state == TraitState::Present {
            self.alive.insert(column);
        }
        self.states[column] = state;
        Ok(())
    }

    /// Append a column; hidden sites (if any) start variant.
    pub fn push(&mut self, state: TraitState) {
        let col = self.states.len();
        self.states.push(state);
        self.alive.grow(col + 1);
        if state == TraitState::Present {
            self.alive.insert(col);
        }
        if let Some(h) = &mut self.hidden {
            h.push(SiteActivity::Variant);
        }
    }

    /// Pad with absent columns up to `len` (no-op if already that long).
    pub fn ensure_len(&mut self, len: usize) {
        while self.states.len() < len {
            self.push(TraitState::Absent);
        }
    }

    pub fn alive_count(&self) -> usize {
        self.alive.len()
    }

    /// Uniformly random present column, O(1).
    pub fn random_alive_index<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize, SeqError> {
        self.alive.pick(rng).ok_or(SeqError::NoAliveTrait)
    }

    pub fn has_missing(&self) -> bool {
        self.states.contains(&TraitState::Missing)
    }

    pub fn hidden(&self) -> Option<&[SiteActivity]> {
        self.hidden.as_deref()
    }

    pub fn hidden_mut(&mut self) -> Option<&mut [SiteActivity]> {
        self.hidden.as_deref_mut()
    }

    pub fn set_hidden(&mut self, hidden: Vec<SiteActivity>) -> Result<(), SeqError> {
        if hidden.len() != self.states.len() {
            return Err(SeqError::HiddenLengthMismatch {
                hidden: hidden.len(),
                len: self.states.len(),
            });
        }
        self.hidden = Some(hidden);
        Ok(())
    }

    pub fn clear_hidden(&mut self) {
        self.hidden = None;
    }

    pub fn value_string(&self) -> String {
        self.states.iter().map(|s| s.symbol()).collect()
    }

    /// Full recount of present entries; the oracle for the cached count.
    pub fn recount_alive(&self) -> usize {
        self.states
            .iter()
            .filter(|&&s| s == TraitState::Present)
            .count()
    }

    /// True when the alive caches agree exactly with the state vector.
    pub fn audit_alive(&self) -> bool {
        if self.alive.len() != self.recount_alive() {
            return false;
        }
        self.states.iter().enumerate().all(|(i, &s)| {
            let in_set = self.alive.slot.get(i).is_some_and(|&x| x != NO_SLOT);
            in_set == (s == TraitState::Present)
        })
    }
}

/// Globally unique trait identifier, allocated in birth order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TraitId(pub usize);

pub type ClassId = usize;

/// Allocator of fresh trait ids and their meaning-class assignments.
/// Columns are appended in birth order so ids are never reused and the
/// id-to-column mapping stays a bijection onto the column range.
#[derive(Debug, Clone)]
pub struct TraitRegistry {
    column_of: Vec<usize>,
    class_of: Vec<ClassId>,
    columns_by_class: Vec<Vec<usize>>,
}

impl TraitRegistry {
    /// Registry over the root columns with their class assignments;
    /// `class_count` must cover every id in `root_classes` and be at least 1.
    pub fn new(root_classes: &[ClassId], class_count: usize) -> Result<Self, SeqError> {
        if class_count == 0 {
            return Err(SeqError::NoClasses);
        }
        let mut reg = Self {
            column_of: Vec::with_capacity(root_classes.len()),
            class_of: Vec::with_capacity(root_classes.len()),
            columns_by_class: vec![Vec::new(); class_count],
        };
        for &class in root_classes {
            reg.allocate(class)?;
        }
        Ok(reg)
    }

    /// One class per root column (the "single trait per meaning class"
    /// convention); an empty root still gets one class for later births.
    pub fn per_column(root_len: usize) -> Self {
        let classes: Vec<ClassId> = (0..root_len).collect();
        Self::new(&classes, root_len.max(1)).expect("classes cover count")
    }

    /// Root columns split into `class_count` equal contiguous blocks; the
    /// first `root_len % class_count` blocks take the extra column.
    pub fn contiguous(root_len: usize, class_count: usize) -> Result<Self, SeqError> {
        if class_count == 0 || class_count > root_len.max(1) {
            return Err(SeqError::NoClasses);
        }
        let base = root_len / class_count;
        let extra = root_len % class_count;
        let mut classes = Vec::with_capacity(root_len);
        for c in 0..class_count {
            let size = base + usize::from(c < extra);
            classes.extend(std::iter::repeat_n(c, size));
        }
        Self::new(&classes, class_count)
    }

    /// Allocate a fresh trait id in `class`; returns (id, column index).
    pub fn allocate(&mut self, class: ClassId) -> Result<(TraitId, usize), SeqError> {
        if class >= self.columns_by_class.len() {
            return Err(SeqError::ClassOutOfRange {
                class,
                count: self.columns_by_class.len(),
            });
        }
        let id = TraitId(self.class_of.len());
        let column = self.column_of.len();
        self.column_of.push(column);
        self.class_of.push(class);
        self.columns_by_class[class].push(column);
        Ok((id, column))
    }

    /// Uniformly random existing class, for traits born mid-simulation.
    pub fn random_class<R: Rng + ?Sized>(&self, rng: &mut R) -> ClassId {
        rng.random_range(0..self.columns_by_class.len())
    }

    pub fn column_count(&self) -> usize {
        self.column_of.len()
    }

    pub fn trait_count(&self) -> usize {
        self.class_of.len()
    }

    pub fn class_count(&self) -> usize {
        self.columns_by_class.len()
    }

    pub fn column_of(&self, id: TraitId) -> usize {
        self.column_of[id.0]
    }

    pub fn class_of_trait(&self, id: TraitId) -> ClassId {
        self.class_of[id.0]
    }

    /// Class of a column (ids are allocated in column order).
    pub fn class_of_column(&self, column: usize) -> ClassId {
        self.class_of[column]
    }

    pub fn columns_of_class(&self, class: ClassId) -> &[usize] {
        &self.columns_by_class[class]
    }

    pub fn column_classes(&self) -> &[ClassId] {
        &self.class_of
    }
}

/// Languages-by-columns matrix with per-column trait and class metadata.
/// Rows cover every tree node during simulation; `leaf_rows` flags the taxa
/// that make it into output.
#[derive(Debug, Clone)]
pub struct Alignment {
    taxa: Vec<String>,
    rows: Vec<TraitSequence>,
    leaf_rows: Vec<bool>,
    column_traits: Vec<TraitId>,
    column_classes: Vec<ClassId>,
    class_count: usize,
}

impl Alignment {
    pub fn new(
        taxa: Vec<String>,
        rows: Vec<TraitSequence>,
        leaf_rows: Vec<bool>,
        registry: &TraitRegistry,
    ) -> Result<Self, SeqError> {
        assert_eq!(taxa.len(), rows.len());
        assert_eq!(taxa.len(), leaf_rows.len());
        let width = registry.column_count();
        if rows.iter().any(|r| r.len() != width) {
            return Err(SeqError::RaggedRows);
        }
        let mut seen = std::collections::HashSet::new();
        for t in &taxa {
            if !seen.insert(t.as_str()) {
                return Err(SeqError::DuplicateTaxon(t.clone()));
            }
        }
        Ok(Self {
            taxa,
            rows,
            leaf_rows,
            column_traits: (0..width).map(TraitId).collect(),
            column_classes: registry.column_classes().to_vec(),
            class_count: registry.class_count(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn column_count(&self) -> usize {
        self.column_traits.len()
    }

    pub fn taxa(&self) -> &[String] {
        &self.taxa
    }

    pub fn row(&self, i: usize) -> &TraitSequence {
        &self.rows[i]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut TraitSequence {
        &mut self.rows[i]
    }

    pub fn is_leaf_row(&self, i: usize) -> bool {
        self.leaf_rows[i]
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn column_classes(&self) -> &[ClassId] {
        &self.column_classes
    }

    pub fn column_trait(&self, column: usize) -> TraitId {
        self.column_traits[column]
    }

    /// Allocate a fresh trait in `class` and append its column to every
    /// row: absent everywhere except present in `owner`.
    pub fn append_trait(
        &mut self,
        registry: &mut TraitRegistry,
        owner: usize,
        class: ClassId,
    ) -> Result<usize, SeqError> {
        let (id, column) = registry.allocate(class)?;
        for row in &mut self.rows {
            row.push(TraitState::Absent);
        }
        self.rows[owner].set_state(column, TraitState::Present)?;
        self.column_traits.push(id);
        self.column_classes.push(class);
        Ok(column)
    }

    /// Restriction to the leaf rows, preserving row order.
    pub fn leaves_only(&self) -> Alignment {
        let keep: Vec<usize> = (0..self.rows.len())
            .filter(|&i| self.leaf_rows[i])
            .collect();
        Alignment {
            taxa: keep.iter().map(|&i| self.taxa[i].clone()).collect(),
            rows: keep.iter().map(|&i| self.rows[i].clone()).collect(),
            leaf_rows: vec![true; keep.len()],
            column_traits: self.column_traits.clone(),
            column_classes: self.column_classes.clone(),
            class_count: self.class_count,
        }
    }

    /// First column index of each class that has any columns, in class order.
    pub fn class_start_positions(&self) -> Vec<usize> {
        let mut first = vec![usize::MAX; self.class_count];
        for (col, &class) in self.column_classes.iter().enumerate() {
            if first[class] == usize::MAX {
                first[class] = col;
            }
        }
        first.into_iter().filter(|&c| c != usize::MAX).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn set_state_updates_alive_count() {
        let mut seq = TraitSequence::from_value_str("0000").unwrap();
        seq.set_state(1, TraitState::Present).unwrap();
        assert_eq!(seq.alive_count(), 1);
        // Borrowing into an already-present trait changes nothing.
        seq.set_state(1, TraitState::Present).unwrap();
        assert_eq!(seq.alive_count(), 1);
        seq.set_state(1, TraitState::Absent).unwrap();
        assert_eq!(seq.alive_count(), 0);
    }

    #[test]
    fn set_state_out_of_range() {
        let mut seq = TraitSequence::all_absent(3);
        assert!(matches!(
            seq.set_state(3, TraitState::Present),
            Err(SeqError::ColumnOutOfRange { .. })
        ));
    }

    #[test]
    fn random_tape_recount_matches_cache() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let mut seq = TraitSequence::all_absent(64);
        for _ in 0..10_000 {
            let col = rng.random_range(0..seq.len());
            let state = match rng.random_range(0..3) {
                0 => TraitState::Absent,
                1 => TraitState::Present,
                _ => TraitState::Missing,
            };
            seq.set_state(col, state).unwrap();
            if rng.random_range(0..50) == 0 {
                seq.push(TraitState::Present);
            }
        }
        assert_eq!(seq.alive_count(), seq.recount_alive());
        assert!(seq.audit_alive());
    }

    #[test]
    fn random_alive_index_single_column() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let seq = TraitSequence::from_value_str("0100").unwrap();
        for _ in 0..100 {
            assert_eq!(seq.random_alive_index(&mut rng).unwrap(), 1);
        }
        let empty = TraitSequence::all_absent(4);
        assert!(matches!(
            empty.random_alive_index(&mut rng),
            Err(SeqError::NoAliveTrait)
        ));
    }

    #[test]
    fn random_alive_index_is_uniform() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let seq = TraitSequence::from_value_str("0110").unwrap();
        let n = 10_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[seq.random_alive_index(&mut rng).unwrap()] += 1;
        }
        assert_eq!(counts[0] + counts[3], 0);
        for &c in &[counts[1], counts[2]] {
            let f = c as f64 / n as f64;
            assert!((f - 0.5).abs() < 0.02, "frequency {f}");
        }
    }

    #[test]
    fn sparse_draws_cost_like_dense_draws() {
        // O(1) sampling: drawing from 3-of-2449 alive must not be slower in
        // order of magnitude than drawing from a 50%-dense sequence.
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mut sparse = TraitSequence::all_absent(2449);
        for col in [7, 900, 2000] {
            sparse.set_state(col, TraitState::Present).unwrap();
        }
        let mut dense = TraitSequence::all_absent(2449);
        for col in 0..2449 {
            if col % 2 == 0 {
                dense.set_state(col, TraitState::Present).unwrap();
            }
        }
        let draws = 2_000_000;
        let time = |seq: &TraitSequence, rng: &mut ChaCha12Rng| {
            let start = std::time::Instant::now();
            let mut acc = 0usize;
            for _ in 0..draws {
                acc = acc.wrapping_add(seq.random_alive_index(rng).unwrap());
            }
            std::hint::black_box(acc);
            start.elapsed().as_secs_f64()
        };
        let t_dense = time(&dense, &mut rng);
        let t_sparse = time(&sparse, &mut rng);
        assert!(
            t_sparse < 10.0 * t_dense + 0.05,
            "sparse {t_sparse}s vs dense {t_dense}s"
        );
    }

    #[test]
    fn append_trait_births_one_column() {
        let mut registry = TraitRegistry::per_column(0);
        let mut align = Alignment::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![TraitSequence::default(); 3],
            vec![true; 3],
            &registry,
        )
        .unwrap();
        let col = align.append_trait(&mut registry, 0, 0).unwrap();
        assert_eq!(col, 0);
        assert_eq!(align.row(0).value_string(), "1");
        assert_eq!(align.row(1).value_string(), "0");
        assert_eq!(align.row(2).value_string(), "0");
    }

    #[test]
    fn append_trait_preserves_id_uniqueness() {
        let mut registry = TraitRegistry::per_column(2449);
        let mut align = Alignment::new(
            vec!["x".into()],
            vec![TraitSequence::all_present(2449)],
            vec![true],
            &registry,
        )
        .unwrap();
        let col = align.append_trait(&mut registry, 0, 17).unwrap();
        assert_eq!(col, 2449);
        assert_eq!(align.column_count(), 2450);
        assert_eq!(registry.trait_count(), 2450);
        let mut ids: Vec<TraitId> = (0..align.column_count())
            .map(|c| align.column_trait(c))
            .collect();
        ids.dedup();
        assert_eq!(ids.len(), 2450);
    }

    #[test]
    fn thousand_births_all_ids_distinct() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let mut registry = TraitRegistry::per_column(4);
        let mut align = Alignment::new(
            vec!["a".into(), "b".into()],
            vec![TraitSequence::all_present(4); 2],
            vec![true; 2],
            &registry,
        )
        .unwrap();
        let mut ids = std::collections::HashSet::new();
        for _ in 0..1000 {
            let class = registry.random_class(&mut rng);
            let owner = rng.random_range(0..2);
            let col = align.append_trait(&mut registry, owner, class).unwrap();
            assert!(ids.insert(align.column_trait(col)));
        }
        assert_eq!(ids.len(), 1000);
    }

    #[test]
    fn contiguous_classes_partition_columns() {
        let reg = TraitRegistry::contiguous(10, 3).unwrap();
        assert_eq!(reg.column_classes(), &[0, 0, 0, 0, 1, 1, 1, 2, 2, 2]);
        assert!(TraitRegistry::contiguous(10, 0).is_err());
    }

    #[test]
    fn bad_value_string_reports_position() {
        let err = TraitSequence::from_value_str("01x0").unwrap_err();
        assert!(matches!(
            err,
            SeqError::BadSymbol {
                symbol: 'x',
                pos: 2
            }
        ));
    }
}
