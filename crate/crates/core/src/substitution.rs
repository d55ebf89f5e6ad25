//! Single-branch evolution kernels.
//!
//! Two GTR variants (transition-matrix redraw and explicit per-site jump
//! simulation), the covarion chain over observable-state x hidden-regime
//! pairs, and the stochastic-Dollo birth/death walk. Kernels mutate a
//! sequence in place over an elapsed branch time and optionally log every
//! event.

use rand::Rng;
use thiserror::Error;

use crate::log::{BranchLog, EventKind};
use crate::num::{exp_draw, Real};
use crate::rate::{sample_row, transition_matrix, RateError, RateMatrix};
use crate::seq::{SeqError, SiteActivity, TraitRegistry, TraitSequence, TraitState};
use crate::tree::AncestorBound;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("sequence contains missing markers; corrupt data only after simulation")]
    MissingMarker,
    #[error("covarion evolution needs hidden states on the sequence")]
    MissingHidden,
    #[error("elapsed time must be non-negative, got {0}")]
    NegativeElapsed(f64),
    #[error("invalid rate: {0}")]
    InvalidRate(&'static str),
    #[error("model mismatch: {0}")]
    ModelMismatch(&'static str),
    #[error("registry covers {registry} columns but the sequence has {seq}")]
    RegistryBehind { registry: usize, seq: usize },
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error(transparent)]
    Seq(#[from] SeqError),
    #[error("bookkeeping audit failed: {0}")]
    AuditFailure(String),
    #[error(transparent)]
    Tree(#[from] crate::tree::TreeError),
}

/// Substitution model parameters; exactly the fields of the active model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelParams<F> {
    Gtr {
        gain: F,
        loss: F,
    },
    Covarion {
        gain: F,
        loss: F,
        switch_rate: F,
        return_factor: F,
    },
    Dollo {
        birth_rate: F,
        death_rate: F,
    },
}

impl<F: Real> ModelParams<F> {
    pub fn validate(&self) -> Result<(), SimError> {
        let all_nonneg = match *self {
            ModelParams::Gtr { gain, loss } => gain >= F::zero() && loss >= F::zero(),
            ModelParams::Covarion {
                gain,
                loss,
                switch_rate,
                return_factor,
            } => {
                gain >= F::zero()
                    && loss >= F::zero()
                    && switch_rate >= F::zero()
                    && return_factor >= F::zero()
            }
            ModelParams::Dollo {
                birth_rate,
                death_rate,
            } => birth_rate >= F::zero() && death_rate >= F::zero(),
        };
        if all_nonneg {
            Ok(())
        } else {
            Err(SimError::InvalidRate("model rates must be non-negative"))
        }
    }
}

/// Which death events the no-empty-meaning-class guard vetoes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmptyTraitGuard {
    /// No veto.
    #[default]
    Off,
    /// Veto deaths that would leave the whole language without alive traits.
    Language,
    /// Veto deaths that would empty the trait's meaning class in that language.
    MeaningClass,
}

/// Full model configuration for a tree run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateConfig<F> {
    pub model: ModelParams<F>,
    /// Borrowing intensity as a multiplier of the per-trait death/mutation rate.
    pub borrow_rate: F,
    /// Kinship window for local borrowing.
    pub reach: AncestorBound<F>,
    pub guard: EmptyTraitGuard,
}

impl<F: Real> RateConfig<F> {
    pub fn without_borrowing(model: ModelParams<F>) -> Self {
        Self {
            model,
            borrow_rate: F::zero(),
            reach: AncestorBound::Unbounded,
            guard: EmptyTraitGuard::Off,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.model.validate()?;
        if self.borrow_rate < F::zero() {
            return Err(SimError::InvalidRate("borrowing rate must be non-negative"));
        }
        if let AncestorBound::Within(z) = self.reach {
            if z < F::zero() {
                return Err(SimError::InvalidRate("kinship window must be non-negative"));
            }
        }
        Ok(())
    }
}

/// How a branch kernel realizes the chain: one transition-matrix redraw per
/// site, or explicit event-by-event jumps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KernelMode {
    #[default]
    Matrix,
    Events,
}

fn check_clean(seq: &TraitSequence) -> Result<(), SimError> {
    if seq.has_missing() {
        Err(SimError::MissingMarker)
    } else {
        Ok(())
    }
}

fn check_elapsed<F: Real>(elapsed: F) -> Result<(), SimError> {
    if elapsed < F::zero() {
        Err(SimError::NegativeElapsed(elapsed.as_f64()))
    } else {
        Ok(())
    }
}

fn state_bit(state: TraitState) -> usize {
    match state {
        TraitState::Absent => 0,
        TraitState::Present => 1,
        TraitState::Missing => unreachable!("kernels reject missing markers"),
    }
}

fn bit_state(bit: usize) -> TraitState {
    if bit == 0 {
        TraitState::Absent
    } else {
        TraitState::Present
    }
}

/// Redraw every site from its row of P(elapsed) = exp(Q * elapsed).
pub fn gtr_evolve_matrix<F: Real, R: Rng + ?Sized>(
    seq: &mut TraitSequence,
    q: &RateMatrix<F>,
    elapsed: F,
    rng: &mut R,
) -> Result<(), SimError> {
    if q.dim() != 2 {
        return Err(SimError::ModelMismatch(
            "GTR kernel needs a 2-state generator",
        ));
    }
    check_clean(seq)?;
    check_elapsed(elapsed)?;
    let p = transition_matrix(q, elapsed)?;
    for col in 0..seq.len() {
        let from = state_bit(seq.state(col));
        let to = sample_row(p.row(from), rng);
        seq.set_state(col, bit_state(to))?;
    }
    Ok(())
}

/// Per-site jump simulation: exponential waiting times at the current
/// state's exit rate, redrawn after every jump, each flip logged.
pub fn gtr_evolve_events<F: Real, R: Rng + ?Sized>(
    seq: &mut TraitSequence,
    q: &RateMatrix<F>,
    elapsed: F,
    rng: &mut R,
    mut log: Option<BranchLog<'_, F>>,
) -> Result<(), SimError> {
    if q.dim() != 2 {
        return Err(SimError::ModelMismatch(
            "GTR kernel needs a 2-state generator",
        ));
    }
    check_clean(seq)?;
    check_elapsed(elapsed)?;
    for col in 0..seq.len() {
        let mut state = state_bit(seq.state(col));
        let mut t = F::zero();
        loop {
            let exit = q.exit_rate(state);
            if exit <= F::zero() {
                break;
            }
            t += exp_draw(rng, exit);
            if t >= elapsed {
                break;
            }
            state = 1 - state;
            if let Some(branch) = log.as_mut() {
                let kind = if state == 1 {
                    EventKind::GainMutation
                } else {
                    EventKind::LossMutation
                };
                branch.record(t, Some(col), kind);
            }
        }
        seq.set_state(col, bit_state(state))?;
    }
    Ok(())
}

/// Joint covarion state index over {0v, 1v, 0i, 1i}.
fn covarion_index(state: TraitState, activity: SiteActivity) -> usize {
    state_bit(state)
        + if activity == SiteActivity::Invariant {
            2
        } else {
            0
        }
}

fn covarion_split(index: usize) -> (TraitState, SiteActivity) {
    let state = bit_state(index & 1);
    let activity = if index >= 2 {
        SiteActivity::Invariant
    } else {
        SiteActivity::Variant
    };
    (state, activity)
}

/// Stationary share of variant sites in the hidden regime chain.
pub fn stationary_variant_share<F: Real>(return_factor: F) -> F {
    return_factor / (F::one() + return_factor)
}

/// Hidden regimes drawn from the stationary distribution of the hidden chain.
pub fn draw_stationary_hidden<F: Real, R: Rng + ?Sized>(
    len: usize,
    return_factor: F,
    rng: &mut R,
) -> Vec<SiteActivity> {
    let p_variant = stationary_variant_share(return_factor);
    (0..len)
        .map(|_| {
            if F::unit_uniform(rng) < p_variant {
                SiteActivity::Variant
            } else {
                SiteActivity::Invariant
            }
        })
        .collect()
}

/// Evolve a sequence with hidden regimes on the 4-state covarion chain;
/// the observable alignment state is the projection onto {0, 1}.
pub fn covarion_evolve<F: Real, R: Rng + ?Sized>(
    seq: &mut TraitSequence,
    model: &ModelParams<F>,
    elapsed: F,
    mode: KernelMode,
    rng: &mut R,
    mut log: Option<BranchLog<'_, F>>,
) -> Result<(), SimError> {
    let ModelParams::Covarion {
        gain,
        loss,
        switch_rate,
        return_factor,
    } = *model
    else {
        return Err(SimError::ModelMismatch(
            "covarion kernel needs covarion parameters",
        ));
    };
    check_clean(seq)?;
    check_elapsed(elapsed)?;
    if seq.hidden().is_none() {
        return Err(SimError::MissingHidden);
    }
    let q = RateMatrix::covarion(gain, loss, switch_rate, return_factor)?;
    match mode {
        KernelMode::Matrix => {
            let p = transition_matrix(&q, elapsed)?;
            for col in 0..seq.len() {
                let from = covarion_index(seq.state(col), seq.hidden().unwrap()[col]);
                let to = sample_row(p.row(from), rng);
                let (state, activity) = covarion_split(to);
                seq.set_state(col, state)?;
                seq.hidden_mut().unwrap()[col] = activity;
            }
        }
        KernelMode::Events => {
            for col in 0..seq.len() {
                let mut idx = covarion_index(seq.state(col), seq.hidden().unwrap()[col]);
                let mut t = F::zero();
                loop {
                    let exit = q.exit_rate(idx);
                    if exit <= F::zero() {
                        break;
                    }
                    t += exp_draw(rng, exit);
                    if t >= elapsed {
                        break;
                    }
                    let next = q.sample_jump(idx, rng);
                    if let Some(branch) = log.as_mut() {
                        let kind = match (idx & 1, next & 1) {
                            (0, 1) => EventKind::GainMutation,
                            (1, 0) => EventKind::LossMutation,
                            _ => EventKind::RegimeSwitch,
                        };
                        branch.record(t, Some(col), kind);
                    }
                    idx = next;
                }
                let (state, activity) = covarion_split(idx);
                seq.set_state(col, state)?;
                seq.hidden_mut().unwrap()[col] = activity;
            }
        }
    }
    Ok(())
}

/// Stochastic-Dollo walk: waiting times at rate (birth + k * death) with k
/// the current alive count, refreshed after every event; births allocate
/// fresh registry traits, deaths remove a uniformly chosen alive trait.
pub fn sd_evolve<F: Real, R: Rng + ?Sized>(
    seq: &mut TraitSequence,
    birth_rate: F,
    death_rate: F,
    elapsed: F,
    registry: &mut TraitRegistry,
    rng: &mut R,
    mut log: Option<BranchLog<'_, F>>,
) -> Result<(), SimError> {
    check_clean(seq)?;
    check_elapsed(elapsed)?;
    if birth_rate < F::zero() || death_rate < F::zero() {
        return Err(SimError::InvalidRate("Dollo rates must be non-negative"));
    }
    if registry.column_count() < seq.len() {
        return Err(SimError::RegistryBehind {
            registry: registry.column_count(),
            seq: seq.len(),
        });
    }
    // Catch up with columns other lineages have birthed meanwhile.
    seq.ensure_len(registry.column_count());
    let mut t = F::zero();
    loop {
        let k = F::of(seq.alive_count() as f64);
        let total = birth_rate + k * death_rate;
        if total <= F::zero() {
            break;
        }
        t += exp_draw(rng, total);
        if t >= elapsed {
            break;
        }
        let u = F::unit_uniform(rng);
        if u <= birth_rate / total {
            let class = registry.random_class(rng);
            let (_, column) = registry.allocate(class)?;
            seq.ensure_len(column + 1);
            seq.set_state(column, TraitState::Present)?;
            if let Some(branch) = log.as_mut() {
                branch.record(t, Some(column), EventKind::Birth);
            }
        } else {
            let column = seq.random_alive_index(rng)?;
            seq.set_state(column, TraitState::Absent)?;
            if let Some(branch) = log.as_mut() {
                branch.record(t, Some(column), EventKind::Death);
            }
        }
    }
    Ok(())
}
