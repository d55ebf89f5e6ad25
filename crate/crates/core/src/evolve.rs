//! Non-borrowing whole-tree generation: copy the parent language at each
//! split and evolve every branch independently with the configured
//! single-branch kernel, level-order for reproducible rng consumption.

use rand::Rng;

use crate::log::{BranchLog, EventLog};
use crate::num::Real;
use crate::rate::RateMatrix;
use crate::seq::{Alignment, TraitRegistry, TraitSequence};
use crate::substitution::{
    covarion_evolve, draw_stationary_hidden, gtr_evolve_events, gtr_evolve_matrix, sd_evolve,
    KernelMode, ModelParams, RateConfig, SimError,
};
use crate::tree::Tree;

/// Row names (taxon labels, synthesized for internal nodes) and leaf flags
/// in node-id order.
pub(crate) fn node_labels<F: Real>(tree: &Tree<F>) -> (Vec<String>, Vec<bool>) {
    let mut taxa = Vec::with_capacity(tree.len());
    let mut leaf_rows = Vec::with_capacity(tree.len());
    for (id, node) in tree.nodes() {
        leaf_rows.push(node.is_leaf());
        taxa.push(match &node.label {
            Some(label) => label.clone(),
            None => format!("__internal_{id}"),
        });
    }
    (taxa, leaf_rows)
}

/// Working alignment with one all-absent row per tree node, leaf rows
/// flagged, registry metadata attached.
pub(crate) fn working_alignment<F: Real>(
    tree: &Tree<F>,
    registry: &TraitRegistry,
) -> Result<Alignment, SimError> {
    let (taxa, leaf_rows) = node_labels(tree);
    let rows = vec![TraitSequence::all_absent(registry.column_count()); tree.len()];
    Ok(Alignment::new(taxa, rows, leaf_rows, registry)?)
}

/// Evolve `root_seq` down `tree`: every child receives its parent's
/// language evolved over the branch length. Returns the alignment over all
/// nodes (leaf rows flagged); Dollo runs share `registry` so columns are
/// globally consistent.
pub fn evolve_tree<F: Real, R: Rng + ?Sized>(
    tree: &Tree<F>,
    root_seq: &TraitSequence,
    config: &RateConfig<F>,
    mode: KernelMode,
    registry: &mut TraitRegistry,
    rng: &mut R,
    mut log: Option<&mut EventLog<F>>,
) -> Result<Alignment, SimError> {
    config.validate()?;
    if root_seq.has_missing() {
        return Err(SimError::MissingMarker);
    }
    if registry.column_count() != root_seq.len() {
        return Err(SimError::RegistryBehind {
            registry: registry.column_count(),
            seq: root_seq.len(),
        });
    }
    let mut rows = vec![TraitSequence::default(); tree.len()];

    let mut root_row = root_seq.clone();
    let gtr_matrix = match config.model {
        ModelParams::Gtr { gain, loss } => Some(RateMatrix::gtr(gain, loss)?),
        ModelParams::Covarion { return_factor, .. } => {
            if root_row.hidden().is_none() {
                root_row.set_hidden(draw_stationary_hidden(root_row.len(), return_factor, rng))?;
            }
            None
        }
        ModelParams::Dollo { .. } => None,
    };
    rows[tree.root()] = root_row;

    let mut queue = std::collections::VecDeque::from([tree.root()]);
    while let Some(parent) = queue.pop_front() {
        let parent_age = tree.node(parent).age;
        for &child in &tree.node(parent).children {
            let elapsed = parent_age - tree.node(child).age;
            let mut seq = rows[parent].clone();
            let branch = log.as_deref_mut().map(|l| BranchLog {
                log: l,
                language: child,
                start_age: parent_age,
            });
            match config.model {
                ModelParams::Gtr { .. } => {
                    let q = gtr_matrix.as_ref().expect("built above");
                    match mode {
                        KernelMode::Matrix => gtr_evolve_matrix(&mut seq, q, elapsed, rng)?,
                        KernelMode::Events => gtr_evolve_events(&mut seq, q, elapsed, rng, branch)?,
                    }
                }
                ModelParams::Covarion { .. } => {
                    covarion_evolve(&mut seq, &config.model, elapsed, mode, rng, branch)?;
                }
                ModelParams::Dollo {
                    birth_rate,
                    death_rate,
                } => {
                    sd_evolve(
                        &mut seq, birth_rate, death_rate, elapsed, registry, rng, branch,
                    )?;
                }
            }
            rows[child] = seq;
            queue.push_back(child);
        }
    }

    // Later births widen the registry; pad earlier rows to the final width.
    let width = registry.column_count();
    for row in &mut rows {
        row.ensure_len(width);
    }
    let (taxa, leaf_rows) = node_labels(tree);
    Ok(Alignment::new(taxa, rows, leaf_rows, registry)?)
}
