//! Post-hoc corruption of finished alignments: missing languages and
//! missing meaning classes. Simulation kernels never see `?`; these
//! transforms run strictly afterwards.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use thiserror::Error;

use crate::num::Real;
use crate::seq::{Alignment, TraitState};

#[derive(Debug, Error)]
pub enum MissingError {
    #[error("probability must lie in [0, 1], got {0}")]
    BadProbability(f64),
    #[error("alignment has no meaning-class metadata")]
    NoClassMetadata,
}

/// Per-language / per-class corruption event tallies, for the binomial
/// validation fits.
#[derive(Debug, Clone, Default)]
pub struct MissingReport {
    pub events_per_language: Vec<u64>,
    pub events_per_class: Vec<u64>,
}

fn check_probability<F: Real>(p: F) -> Result<f64, MissingError> {
    let p = p.as_f64();
    if !(0.0..=1.0).contains(&p) {
        return Err(MissingError::BadProbability(p));
    }
    Ok(p)
}

/// Make languages partially unknown: per language, a Binomial(columns, p)
/// number of events each turning one distinct uniformly chosen column into
/// `?`. Sampling distinct columns makes exactly that many entries missing.
pub fn apply_missing_languages<F: Real, R: Rng + ?Sized>(
    align: &mut Alignment,
    p: F,
    rng: &mut R,
) -> Result<MissingReport, MissingError> {
    let p = check_probability(p)?;
    let width = align.column_count();
    let mut report = MissingReport {
        events_per_language: Vec::with_capacity(align.n_rows()),
        events_per_class: Vec::new(),
    };
    let binomial = if p > 0.0 && width > 0 {
        Some(Binomial::new(width as u64, p).expect("checked parameters"))
    } else {
        None
    };
    for lang in 0..align.n_rows() {
        let events = match &binomial {
            Some(b) => b.sample(rng),
            None => 0,
        };
        let picks = rand::seq::index::sample(rng, width, events as usize);
        let row = align.row_mut(lang);
        for col in picks {
            row.set_state(col, TraitState::Missing)
                .expect("column in range");
        }
        report.events_per_language.push(events);
    }
    Ok(report)
}

/// Make meaning classes partially unknown: per class, a Binomial(languages,
/// p) number of events, each setting a uniformly chosen column of the class
/// in a uniformly chosen language to `?` (languages may repeat).
pub fn apply_missing_meaning_classes<F: Real, R: Rng + ?Sized>(
    align: &mut Alignment,
    p: F,
    rng: &mut R,
) -> Result<MissingReport, MissingError> {
    let p = check_probability(p)?;
    if align.column_count() > 0 && align.column_classes().is_empty() {
        return Err(MissingError::NoClassMetadata);
    }
    let n_rows = align.n_rows();
    let class_count = align.class_count();
    let mut columns_by_class: Vec<Vec<usize>> = vec![Vec::new(); class_count];
    for (col, &class) in align.column_classes().iter().enumerate() {
        columns_by_class[class].push(col);
    }
    let mut report = MissingReport {
        events_per_language: Vec::new(),
        events_per_class: Vec::with_capacity(class_count),
    };
    let binomial = if p > 0.0 && n_rows > 0 {
        Some(Binomial::new(n_rows as u64, p).expect("checked parameters"))
    } else {
        None
    };
    for columns in &columns_by_class {
        if columns.is_empty() {
            report.events_per_class.push(0);
            continue;
        }
        let events = match &binomial {
            Some(b) => b.sample(rng),
            None => 0,
        };
        for _ in 0..events {
            let lang = rng.random_range(0..n_rows);
            let col = columns[rng.random_range(0..columns.len())];
            align
                .row_mut(lang)
                .set_state(col, TraitState::Missing)
                .expect("column in range");
        }
        report.events_per_class.push(events);
    }
    Ok(report)
}
