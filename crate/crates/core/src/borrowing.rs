//! Whole-tree generation with concurrent borrowing.
//!
//! Both engines sweep age from the root to the present over the intervals
//! of the branch-event schedule and run exact Gillespie steps inside each
//! interval: rates are recomputed after every event, and waiting times are
//! redrawn from the boundary whenever the alive set changes (memorylessness
//! keeps this exact). Borrowing donors are weighted by their alive-trait
//! count so the realized per-trait borrowing rate is `borrow_rate *
//! death_rate` per alive trait; recipients are uniform among the other
//! alive lineages.

use rand::Rng;
use thiserror::Error;

use crate::log::{EventKind, EventLog, EventRecord};
use crate::num::{exp_draw, Real};
use crate::rate::{RateMatrix, SquareMatrix};
use crate::seq::{Alignment, TraitRegistry, TraitSequence, TraitState};
use crate::substitution::{EmptyTraitGuard, SimError};
use crate::tree::{AncestorBound, NodeId, Tree};

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("fraction must lie in [0, 1), got {0}")]
    FractionOutOfRange(f64),
    #[error("root length must be at least 1")]
    EmptyRoot,
    #[error("joint-state generators need 2 to 10 languages, got {0}")]
    BadLanguageCount(usize),
}

/// Cached totals of the sweep: the alive lineage set, the site and
/// alive-trait sums over it, and the current age. Every event updates the
/// caches; audits recount them from the sequences.
#[derive(Debug, Clone)]
pub struct TreeSimState<F> {
    pub age: F,
    pub alive: Vec<NodeId>,
    /// Sum of |l_i| over alive languages.
    pub total_sites: usize,
    /// Sum of k_i (alive traits) over alive languages.
    pub total_alive: usize,
}

impl<F: Real> TreeSimState<F> {
    /// Total GTR event rate: mutation over all sites plus borrowing over
    /// all alive traits.
    pub fn gtr_total_rate(&self, mutation_rate: F, borrow_rate: F) -> F {
        mutation_rate * F::of(self.total_sites as f64)
            + borrow_rate * mutation_rate * F::of(self.total_alive as f64)
    }

    /// Total stochastic-Dollo event rate: per-language births plus
    /// per-trait deaths plus per-trait borrowing.
    pub fn sd_total_rate(&self, birth_rate: F, death_rate: F, borrow_rate: F) -> F {
        birth_rate * F::of(self.alive.len() as f64)
            + death_rate * F::of(self.total_alive as f64)
            + death_rate * borrow_rate * F::of(self.total_alive as f64)
    }
}

/// True when a death event may remove a trait without emptying the
/// language: the no-empty-meaning-class check.
pub fn death_check(seq: &TraitSequence) -> bool {
    seq.alive_count() > 1
}

fn death_allowed(
    seq: &TraitSequence,
    registry: &TraitRegistry,
    column: usize,
    guard: EmptyTraitGuard,
) -> bool {
    match guard {
        EmptyTraitGuard::Off => true,
        EmptyTraitGuard::Language => death_check(seq),
        EmptyTraitGuard::MeaningClass => {
            let class = registry.class_of_column(column);
            registry
                .columns_of_class(class)
                .iter()
                .filter(|&&c| c < seq.len() && seq.state(c) == TraitState::Present)
                .count()
                > 1
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtrBorrowingParams<F> {
    /// Per-site flip rate (symmetric gain/loss).
    pub mutation_rate: F,
    /// Borrowing multiplier of the mutation rate, per alive trait.
    pub borrow_rate: F,
    pub reach: AncestorBound<F>,
    pub guard: EmptyTraitGuard,
    /// Recount the cached totals every this many events; 0 disables.
    pub audit_every: u64,
}

impl<F: Real> GtrBorrowingParams<F> {
    pub fn new(mutation_rate: F, borrow_rate: F) -> Self {
        Self {
            mutation_rate,
            borrow_rate,
            reach: AncestorBound::Unbounded,
            guard: EmptyTraitGuard::Off,
            audit_every: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdBorrowingParams<F> {
    pub birth_rate: F,
    pub death_rate: F,
    /// Borrowing multiplier of the death rate, per alive trait.
    pub borrow_rate: F,
    pub reach: AncestorBound<F>,
    pub guard: EmptyTraitGuard,
    /// Recount the cached totals every this many events; 0 disables.
    pub audit_every: u64,
}

impl<F: Real> SdBorrowingParams<F> {
    pub fn new(birth_rate: F, death_rate: F, borrow_rate: F) -> Self {
        Self {
            birth_rate,
            death_rate,
            borrow_rate,
            reach: AncestorBound::Unbounded,
            guard: EmptyTraitGuard::Off,
            audit_every: 0,
        }
    }
}

struct Sweep<'a, F> {
    tree: &'a Tree<F>,
    align: Alignment,
    state: TreeSimState<F>,
    events_done: u64,
}

impl<'a, F: Real> Sweep<'a, F> {
    fn start(
        tree: &'a Tree<F>,
        root_seq: &TraitSequence,
        registry: &TraitRegistry,
    ) -> Result<Self, SimError> {
        if root_seq.has_missing() {
            return Err(SimError::MissingMarker);
        }
        if registry.column_count() != root_seq.len() {
            return Err(SimError::RegistryBehind {
                registry: registry.column_count(),
                seq: root_seq.len(),
            });
        }
        let mut align = crate::evolve::working_alignment(tree, registry)?;
        let children = tree.node(tree.root()).children.clone();
        for &c in &children {
            *align.row_mut(c) = root_seq.clone();
        }
        let state = TreeSimState {
            age: tree.height(),
            alive: children,
            total_sites: 2 * root_seq.len(),
            total_alive: 2 * root_seq.alive_count(),
        };
        Ok(Self {
            tree,
            align,
            state,
            events_done: 0,
        })
    }

    fn log_event(
        &self,
        log: &mut Option<&mut EventLog<F>>,
        language: NodeId,
        column: Option<usize>,
        kind: EventKind,
    ) {
        if let Some(log) = log.as_deref_mut() {
            log.push(EventRecord {
                age: self.state.age,
                language,
                column,
                kind,
            });
        }
    }

    /// Donor (language, alive column) pair chosen uniformly over all alive
    /// traits: language weighted by its alive count.
    fn pick_donor<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(usize, NodeId, usize), SimError> {
        debug_assert!(self.state.total_alive > 0);
        let mut ticket = rng.random_range(0..self.state.total_alive);
        for (idx, &lang) in self.state.alive.iter().enumerate() {
            let k = self.align.row(lang).alive_count();
            if ticket < k {
                let column = self.align.row(lang).random_alive_index(rng)?;
                return Ok((idx, lang, column));
            }
            ticket -= k;
        }
        unreachable!("total_alive covers the alive languages")
    }

    fn pick_recipient<R: Rng + ?Sized>(&self, donor_idx: usize, rng: &mut R) -> NodeId {
        let n = self.state.alive.len();
        debug_assert!(n >= 2);
        let r = rng.random_range(0..n - 1);
        self.state.alive[if r >= donor_idx { r + 1 } else { r }]
    }

    /// Borrowing event shared by both models: donor trait re-set present in
    /// the recipient if the kinship window allows it, vetoes logged.
    fn borrow_event<R: Rng + ?Sized>(
        &mut self,
        reach: AncestorBound<F>,
        rng: &mut R,
        log: &mut Option<&mut EventLog<F>>,
    ) -> Result<(), SimError> {
        let (donor_idx, donor, column) = self.pick_donor(rng)?;
        if self.state.alive.len() < 2 {
            self.log_event(log, donor, Some(column), EventKind::VetoedBorrowNoPartner);
            return Ok(());
        }
        let recipient = self.pick_recipient(donor_idx, rng);
        if self
            .tree
            .mrca_within(donor, recipient, self.state.age, reach)?
        {
            if self.align.row(recipient).state(column) == TraitState::Absent {
                self.state.total_alive += 1;
            }
            // A trait already present is re-set without a state change.
            self.align
                .row_mut(recipient)
                .set_state(column, TraitState::Present)?;
            self.log_event(log, recipient, Some(column), EventKind::Borrow { donor });
        } else {
            self.log_event(
                log,
                recipient,
                Some(column),
                EventKind::VetoedBorrowDistance { donor },
            );
        }
        Ok(())
    }

    fn split(&mut self, node: NodeId) {
        let parent_row = self.align.row(node).clone();
        let k = parent_row.alive_count();
        let width = parent_row.len();
        for &c in &self.tree.node(node).children {
            *self.align.row_mut(c) = parent_row.clone();
        }
        let pos = self
            .state
            .alive
            .iter()
            .position(|&x| x == node)
            .expect("split node is alive");
        self.state.alive.swap_remove(pos);
        self.state
            .alive
            .extend_from_slice(&self.tree.node(node).children);
        self.state.total_sites += width;
        self.state.total_alive += k;
    }

    fn maybe_audit(&mut self, audit_every: u64, width: usize) -> Result<(), SimError> {
        self.events_done += 1;
        if audit_every == 0 || !self.events_done.is_multiple_of(audit_every) {
            return Ok(());
        }
        let mut alive_total = 0usize;
        for &lang in &self.state.alive {
            let row = self.align.row(lang);
            if !row.audit_alive() {
                return Err(SimError::AuditFailure(format!(
                    "alive cache of language {lang} disagrees with its states"
                )));
            }
            alive_total += row.recount_alive();
        }
        let site_total = self.state.alive.len() * width;
        if alive_total != self.state.total_alive || site_total != self.state.total_sites {
            return Err(SimError::AuditFailure(format!(
                "cached totals (sites {}, alive {}) vs recount (sites {}, alive {})",
                self.state.total_sites, self.state.total_alive, site_total, alive_total
            )));
        }
        Ok(())
    }

    fn finish(self) -> Alignment {
        self.align
    }
}

/// GTR tree generation with borrowing: Gillespie sweep where a mutation
/// event flips a uniformly random (language, site) and a borrowing event
/// copies a random alive donor trait into a random other lineage.
pub fn evolve_tree_gtr_borrowing<F: Real, R: Rng + ?Sized>(
    tree: &Tree<F>,
    root_seq: &TraitSequence,
    params: &GtrBorrowingParams<F>,
    registry: &mut TraitRegistry,
    rng: &mut R,
    mut log: Option<&mut EventLog<F>>,
) -> Result<Alignment, SimError> {
    if params.mutation_rate < F::zero() || params.borrow_rate < F::zero() {
        return Err(SimError::InvalidRate("rates must be non-negative"));
    }
    let width = root_seq.len();
    let mut sweep = Sweep::start(tree, root_seq, registry)?;
    let schedule = tree.event_schedule();
    for interval in &schedule.intervals {
        loop {
            let total = sweep
                .state
                .gtr_total_rate(params.mutation_rate, params.borrow_rate);
            if total <= F::zero() {
                break;
            }
            let step = exp_draw(rng, total);
            if sweep.state.age - step <= interval.lower {
                break;
            }
            sweep.state.age -= step;
            let u = F::unit_uniform(rng);
            let p_mutation = params.mutation_rate * F::of(sweep.state.total_sites as f64) / total;
            if u < p_mutation {
                let ticket = rng.random_range(0..sweep.state.total_sites);
                let lang = sweep.state.alive[ticket / width];
                let column = ticket % width;
                match sweep.align.row(lang).state(column) {
                    TraitState::Absent => {
                        sweep
                            .align
                            .row_mut(lang)
                            .set_state(column, TraitState::Present)?;
                        sweep.state.total_alive += 1;
                        sweep.log_event(&mut log, lang, Some(column), EventKind::GainMutation);
                    }
                    TraitState::Present => {
                        if death_allowed(sweep.align.row(lang), registry, column, params.guard) {
                            sweep
                                .align
                                .row_mut(lang)
                                .set_state(column, TraitState::Absent)?;
                            sweep.state.total_alive -= 1;
                            sweep.log_event(&mut log, lang, Some(column), EventKind::LossMutation);
                        } else {
                            sweep.log_event(&mut log, lang, Some(column), EventKind::VetoedDeath);
                        }
                    }
                    TraitState::Missing => unreachable!("clean sequences checked at start"),
                }
            } else {
                sweep.borrow_event(params.reach, rng, &mut log)?;
            }
            sweep.maybe_audit(params.audit_every, width)?;
        }
        sweep.state.age = interval.lower;
        if let Some(node) = interval.split_at_lower {
            sweep.split(node);
        }
    }
    Ok(sweep.finish())
}

/// Stochastic-Dollo tree generation with borrowing: births allocate fresh
/// registry traits in a uniformly chosen alive language, deaths remove a
/// uniformly chosen alive (language, trait) pair, borrowing re-births the
/// donor's trait column in the recipient.
pub fn evolve_tree_sd_borrowing<F: Real, R: Rng + ?Sized>(
    tree: &Tree<F>,
    root_seq: &TraitSequence,
    params: &SdBorrowingParams<F>,
    registry: &mut TraitRegistry,
    rng: &mut R,
    mut log: Option<&mut EventLog<F>>,
) -> Result<Alignment, SimError> {
    if params.birth_rate < F::zero()
        || params.death_rate < F::zero()
        || params.borrow_rate < F::zero()
    {
        return Err(SimError::InvalidRate("rates must be non-negative"));
    }
    let mut width = root_seq.len();
    let mut sweep = Sweep::start(tree, root_seq, registry)?;
    let schedule = tree.event_schedule();
    for interval in &schedule.intervals {
        loop {
            let total =
                sweep
                    .state
                    .sd_total_rate(params.birth_rate, params.death_rate, params.borrow_rate);
            if total <= F::zero() {
                break;
            }
            let step = exp_draw(rng, total);
            if sweep.state.age - step <= interval.lower {
                break;
            }
            sweep.state.age -= step;
            let u = F::unit_uniform(rng);
            let p_birth = params.birth_rate * F::of(sweep.state.alive.len() as f64) / total;
            let p_death = params.death_rate * F::of(sweep.state.total_alive as f64) / total;
            if u < p_birth {
                let owner = sweep.state.alive[rng.random_range(0..sweep.state.alive.len())];
                let class = registry.random_class(rng);
                let column = sweep.align.append_trait(registry, owner, class)?;
                width = registry.column_count();
                sweep.state.total_alive += 1;
                sweep.state.total_sites += sweep.state.alive.len();
                sweep.log_event(&mut log, owner, Some(column), EventKind::Birth);
            } else if u < p_birth + p_death {
                let (_, lang, column) = sweep.pick_donor(rng)?;
                if death_allowed(sweep.align.row(lang), registry, column, params.guard) {
                    sweep
                        .align
                        .row_mut(lang)
                        .set_state(column, TraitState::Absent)?;
                    sweep.state.total_alive -= 1;
                    sweep.log_event(&mut log, lang, Some(column), EventKind::Death);
                } else {
                    sweep.log_event(&mut log, lang, Some(column), EventKind::VetoedDeath);
                }
            } else {
                sweep.borrow_event(params.reach, rng, &mut log)?;
            }
            sweep.maybe_audit(params.audit_every, width)?;
        }
        sweep.state.age = interval.lower;
        if let Some(node) = interval.split_at_lower {
            sweep.split(node);
        }
    }
    Ok(sweep.finish())
}

// ---------------------------------------------------------------------------
// Rate calibration
// ---------------------------------------------------------------------------

/// Fraction of traits borrowed over 1000 years at rate `b` (per-year units).
pub fn borrowing_percentage<F: Real>(rate: F) -> F {
    F::one() - (-rate * F::of(1000.0)).exp()
}

/// Borrowing rate realizing a per-1000-year borrowed fraction.
pub fn rate_for_borrowing_percentage<F: Real>(fraction: F) -> Result<F, CalibrationError> {
    if !(fraction >= F::zero() && fraction < F::one()) {
        return Err(CalibrationError::FractionOutOfRange(fraction.as_f64()));
    }
    Ok(-(F::one() - fraction).ln() / F::of(1000.0))
}

/// Published borrowing-rate calibration pairs `(rate, percentage)` used to
/// configure experiment sweeps. The mapping is taken as authoritative for
/// experiment configuration and is not derived from [`borrowing_percentage`].
pub const BORROWING_RATE_TABLE: [(f64, f64); 9] = [
    (0.0, 0.0),
    (0.045, 1.0),
    (0.224, 5.0),
    (0.448, 10.0),
    (0.672, 15.0),
    (0.896, 20.0),
    (1.344, 30.0),
    (1.793, 40.0),
    (2.241, 50.0),
];

/// Stochastic-Dollo rates from the mean proportion of traits lost per 1000
/// years and the root length: death = -ln(1 - loss)/1000, birth = length *
/// death, so the stationary mean trait count equals the root length.
pub fn derive_sd_rates<F: Real>(
    loss_fraction_per_1000y: F,
    root_length: usize,
) -> Result<(F, F), CalibrationError> {
    if !(loss_fraction_per_1000y >= F::zero() && loss_fraction_per_1000y < F::one()) {
        return Err(CalibrationError::FractionOutOfRange(
            loss_fraction_per_1000y.as_f64(),
        ));
    }
    if root_length == 0 {
        return Err(CalibrationError::EmptyRoot);
    }
    let death = -(F::one() - loss_fraction_per_1000y).ln() / F::of(1000.0);
    let birth = F::of(root_length as f64) * death;
    Ok((birth, death))
}

/// Symmetric GTR mutation rate from the probability of switching state over
/// 1000 years: p(1000) = (1 - exp(-2*mu*1000))/2.
pub fn gtr_rate_for_switch_probability<F: Real>(p: F) -> Result<F, CalibrationError> {
    if !(p >= F::zero() && p < F::of(0.5)) {
        return Err(CalibrationError::FractionOutOfRange(p.as_f64()));
    }
    Ok(-(F::one() - F::of(2.0) * p).ln() / F::of(2000.0))
}

fn joint_generator_with<F: Real>(
    n_languages: usize,
    gain_rate: impl Fn(u32) -> F,
    loss_rate: F,
) -> Result<RateMatrix<F>, CalibrationError> {
    if !(2..=10).contains(&n_languages) {
        return Err(CalibrationError::BadLanguageCount(n_languages));
    }
    let dim = 1usize << n_languages;
    let mut m = SquareMatrix::zeros(dim);
    for s in 0..dim {
        let mut out = F::zero();
        for j in 0..n_languages {
            let bit = 1usize << j;
            let rate = if s & bit != 0 {
                loss_rate
            } else {
                gain_rate((s & !bit).count_ones())
            };
            m.set(s, s ^ bit, rate);
            out += rate;
        }
        m.set(s, s, -out);
    }
    Ok(RateMatrix::from_matrix(m).expect("constructed conservative"))
}

/// Per-column joint-state generator over `n` languages under symmetric GTR
/// with borrowing, built by extending the two-language pair matrix rule:
/// bit j of the state is language j's trait, a present bit dies at the
/// mutation rate, and an absent bit turns on at `(1 + borrow) * mutation`
/// whenever any other language holds the trait (plain `mutation`
/// otherwise). For two languages the boost and the per-donor event rate
/// coincide; see [`realized_joint_state_generator`] for the law the sweep
/// engines actually produce at three or more languages.
pub fn joint_state_generator<F: Real>(
    n_languages: usize,
    mutation_rate: F,
    borrow_rate: F,
) -> Result<RateMatrix<F>, CalibrationError> {
    joint_generator_with(
        n_languages,
        |donors| {
            if donors > 0 {
                mutation_rate + borrow_rate * mutation_rate
            } else {
                mutation_rate
            }
        },
        mutation_rate,
    )
}

/// The joint-state law the Gillespie engines realize: each donor language
/// holding the trait initiates transfers at `borrow * mutation`, spread
/// uniformly over the `n - 1` possible recipients, so an absent bit turns
/// on at `mutation + borrow * mutation * donors / (n - 1)`. Identical to
/// [`joint_state_generator`] for two languages; for more, the per-recipient
/// rate grows with the donor count instead of staying flat.
pub fn realized_joint_state_generator<F: Real>(
    n_languages: usize,
    mutation_rate: F,
    borrow_rate: F,
) -> Result<RateMatrix<F>, CalibrationError> {
    let share = F::of(1.0 / (n_languages as f64 - 1.0));
    joint_generator_with(
        n_languages,
        |donors| mutation_rate + borrow_rate * mutation_rate * F::of(donors as f64) * share,
        mutation_rate,
    )
}
