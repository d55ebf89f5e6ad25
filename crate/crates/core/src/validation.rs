//! Stationary-distribution validation suites.
//!
//! Each suite simulates many replicates of a fixed scenario, tallies the
//! relevant statistic and runs chi-square fits against the exact law. The
//! suite ids (fig2..fig8) are the stable names the command-line driver and
//! the acceptance tests refer to.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Poisson};
use thiserror::Error;

use crate::borrowing::{
    evolve_tree_gtr_borrowing, joint_state_generator, realized_joint_state_generator,
    GtrBorrowingParams,
};
use crate::evolve::evolve_tree;
use crate::missing::{apply_missing_languages, apply_missing_meaning_classes};
use crate::num::Real;
use crate::rate::RateMatrix;
use crate::seq::{Alignment, TraitRegistry, TraitSequence, TraitState};
use crate::stats::{
    goodness_of_fit, pmf_binomial, pmf_poisson, stationary_distribution, two_sample_chi_square,
    FitOutcome, Histogram, StatsError,
};
use crate::substitution::{
    gtr_evolve_events, gtr_evolve_matrix, sd_evolve, KernelMode, ModelParams, RateConfig,
};
use crate::tree::Tree;

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("unknown suite id '{0}'")]
    UnknownSuite(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Sim(#[from] crate::substitution::SimError),
    #[error(transparent)]
    Rate(#[from] crate::rate::RateError),
    #[error(transparent)]
    Tree(#[from] crate::tree::TreeError),
    #[error(transparent)]
    Missing(#[from] crate::missing::MissingError),
    #[error(transparent)]
    Calibration(#[from] crate::borrowing::CalibrationError),
}

#[derive(Debug, Clone, Copy)]
pub struct SuiteOptions {
    pub samples: usize,
    pub seed: u64,
    pub alpha: f64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            samples: 100_000,
            seed: 1,
            alpha: 0.01,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NamedFit<F> {
    pub name: String,
    pub outcome: FitOutcome<F>,
}

#[derive(Debug, Clone)]
pub struct SuiteReport<F> {
    pub suite: &'static str,
    pub histograms: Vec<(String, Histogram)>,
    pub fits: Vec<NamedFit<F>>,
}

impl<F: Real> SuiteReport<F> {
    pub fn passed(&self) -> bool {
        self.fits.iter().all(|f| f.outcome.pass)
    }

    pub fn histogram(&self, name: &str) -> Option<&Histogram> {
        self.histograms
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, h)| h)
    }
}

/// All suite ids, in the order `validate --suite all` runs them.
pub const SUITE_IDS: [&str; 6] = ["fig2", "fig3", "fig4", "fig5", "fig6", "fig8"];

pub fn run_suite<F: Real>(id: &str, opts: &SuiteOptions) -> Result<SuiteReport<F>, SuiteError> {
    match id {
        "fig2" => gtr_single_branch_suite(opts),
        "fig3" => sd_single_branch_suite(opts),
        "fig4" => whole_tree_suite(opts),
        "fig5" => two_language_borrowing_suite(opts),
        "fig6" => three_language_borrowing_suite(opts),
        "fig8" => missing_data_suite(opts),
        other => Err(SuiteError::UnknownSuite(other.to_owned())),
    }
}

fn stream(seed: u64, index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn bernoulli_seq<F: Real, R: Rng + ?Sized>(len: usize, p: F, rng: &mut R) -> TraitSequence {
    TraitSequence::from_states(
        (0..len)
            .map(|_| {
                if F::unit_uniform(rng) < p {
                    TraitState::Present
                } else {
                    TraitState::Absent
                }
            })
            .collect(),
    )
}

fn binomial_cells<F: Real>(n: u64, p: F) -> Result<Vec<F>, StatsError> {
    (0..=n).map(|k| pmf_binomial(n, p, k)).collect()
}

/// Poisson cell probabilities for 0..max with the last cell absorbing the
/// upper tail.
fn poisson_cells<F: Real>(rate: F, max: u64) -> Result<Vec<F>, StatsError> {
    let mut cells: Vec<F> = (0..max)
        .map(|k| pmf_poisson(rate, k))
        .collect::<Result<_, _>>()?;
    let head: F = cells.iter().copied().sum();
    cells.push((F::one() - head).max(F::zero()));
    Ok(cells)
}

/// Single-branch GTR stationarity: both kernel variants against
/// Binomial(20, 1/2) plus a two-sample equivalence check between them.
pub fn gtr_single_branch_suite<F: Real>(opts: &SuiteOptions) -> Result<SuiteReport<F>, SuiteError> {
    let (len, elapsed) = (20usize, F::of(100.0));
    let q = RateMatrix::gtr(F::of(0.5), F::of(0.5))?;
    let half = F::of(0.5);
    let mut hist_matrix = Histogram::new();
    let mut hist_events = Histogram::new();
    let mut rng_matrix = stream(opts.seed, 1);
    let mut rng_events = stream(opts.seed, 2);
    for _ in 0..opts.samples {
        let mut seq = bernoulli_seq(len, half, &mut rng_matrix);
        gtr_evolve_matrix(&mut seq, &q, elapsed, &mut rng_matrix)?;
        hist_matrix.record(seq.alive_count() as u64);

        let mut seq = bernoulli_seq(len, half, &mut rng_events);
        gtr_evolve_events(&mut seq, &q, elapsed, &mut rng_events, None)?;
        hist_events.record(seq.alive_count() as u64);
    }
    let expected = binomial_cells(len as u64, half)?;
    let alpha = F::of(opts.alpha);
    let cells_matrix = hist_matrix.cells_with_tail(len as u64);
    let cells_events = hist_events.cells_with_tail(len as u64);
    let fits = vec![
        NamedFit {
            name: "gtr_matrix_vs_binomial".into(),
            outcome: goodness_of_fit(&cells_matrix, &expected, alpha)?,
        },
        NamedFit {
            name: "gtr_events_vs_binomial".into(),
            outcome: goodness_of_fit(&cells_events, &expected, alpha)?,
        },
        NamedFit {
            name: "gtr_matrix_vs_events_two_sample".into(),
            outcome: two_sample_chi_square(&cells_matrix, &cells_events, alpha)?,
        },
    ];
    Ok(SuiteReport {
        suite: "fig2",
        histograms: vec![
            ("gtr_matrix_alive".into(), hist_matrix),
            ("gtr_events_alive".into(), hist_events),
        ],
        fits,
    })
}

/// Single-branch stochastic-Dollo stationarity: alive counts against
/// Poisson(birth/death) from stationary-initialized sequences.
pub fn sd_single_branch_suite<F: Real>(opts: &SuiteOptions) -> Result<SuiteReport<F>, SuiteError> {
    let (birth, death, elapsed) = (F::of(0.5), F::of(0.5), F::of(10.0));
    let mut rng = stream(opts.seed, 1);
    let init = Poisson::new(1.0f64).expect("positive rate");
    let mut hist = Histogram::new();
    for _ in 0..opts.samples {
        let k0 = init.sample(&mut rng) as usize;
        let mut registry = TraitRegistry::per_column(k0);
        let mut seq = TraitSequence::all_present(k0);
        sd_evolve(
            &mut seq,
            birth,
            death,
            elapsed,
            &mut registry,
            &mut rng,
            None,
        )?;
        hist.record(seq.alive_count() as u64);
    }
    let max = hist.max_value().unwrap_or(0).max(8);
    let expected = poisson_cells(F::one(), max)?;
    let fit = goodness_of_fit(&hist.cells_with_tail(max), &expected, F::of(opts.alpha))?;
    Ok(SuiteReport {
        suite: "fig3",
        histograms: vec![("sd_alive".into(), hist)],
        fits: vec![NamedFit {
            name: "sd_vs_poisson".into(),
            outcome: fit,
        }],
    })
}

/// Whole-tree stationarity on random trees with branching rate 0.005: leaf
/// alive counts keep the single-branch laws for both GTR and Dollo.
pub fn whole_tree_suite<F: Real>(opts: &SuiteOptions) -> Result<SuiteReport<F>, SuiteError> {
    let leaves = 8usize;
    let branching = F::of(0.005);
    let half = F::of(0.5);
    let len = 20usize;

    let gtr = RateConfig::without_borrowing(ModelParams::Gtr {
        gain: half,
        loss: half,
    });
    let mut rng = stream(opts.seed, 1);
    let mut hist_gtr = Histogram::new();
    for _ in 0..opts.samples {
        let tree = Tree::yule(leaves, branching, &mut rng)?;
        let root = bernoulli_seq(len, half, &mut rng);
        let mut registry = TraitRegistry::per_column(len);
        let align = evolve_tree(
            &tree,
            &root,
            &gtr,
            KernelMode::Matrix,
            &mut registry,
            &mut rng,
            None,
        )?;
        for i in 0..align.n_rows() {
            if align.is_leaf_row(i) {
                hist_gtr.record(align.row(i).alive_count() as u64);
            }
        }
    }

    let dollo = RateConfig::without_borrowing(ModelParams::Dollo {
        birth_rate: half,
        death_rate: half,
    });
    let mut rng = stream(opts.seed, 2);
    let init = Poisson::new(1.0f64).expect("positive rate");
    let mut hist_sd = Histogram::new();
    for _ in 0..opts.samples {
        let tree = Tree::yule(leaves, branching, &mut rng)?;
        let k0 = init.sample(&mut rng) as usize;
        let root = TraitSequence::all_present(k0);
        let mut registry = TraitRegistry::per_column(k0);
        let align = evolve_tree(
            &tree,
            &root,
            &dollo,
            KernelMode::Events,
            &mut registry,
            &mut rng,
            None,
        )?;
        for i in 0..align.n_rows() {
            if align.is_leaf_row(i) {
                hist_sd.record(align.row(i).alive_count() as u64);
            }
        }
    }

    let alpha = F::of(opts.alpha);
    let expected_gtr = binomial_cells(len as u64, half)?;
    let max_sd = hist_sd.max_value().unwrap_or(0).max(8);
    let expected_sd = poisson_cells(F::one(), max_sd)?;
    let fits = vec![
        NamedFit {
            name: "tree_gtr_vs_binomial".into(),
            outcome: goodness_of_fit(&hist_gtr.cells_with_tail(len as u64), &expected_gtr, alpha)?,
        },
        NamedFit {
            name: "tree_sd_vs_poisson".into(),
            outcome: goodness_of_fit(&hist_sd.cells_with_tail(max_sd), &expected_sd, alpha)?,
        },
    ];
    Ok(SuiteReport {
        suite: "fig4",
        histograms: vec![
            ("tree_gtr_alive".into(), hist_gtr),
            ("tree_sd_alive".into(), hist_sd),
        ],
        fits,
    })
}

fn joint_state_histogram<F: Real>(
    newick: &str,
    n_languages: usize,
    opts: &SuiteOptions,
) -> Result<Histogram, SuiteError> {
    let tree: Tree<F> = Tree::parse_newick(newick)?;
    let len = 20usize;
    let params = GtrBorrowingParams::new(F::of(0.5), F::of(0.5));
    let mut rng = stream(opts.seed, 1);
    let mut hist = Histogram::new();
    let leaf_ids = tree.leaves();
    assert_eq!(leaf_ids.len(), n_languages);
    for _ in 0..opts.samples {
        let root = TraitSequence::all_present(len);
        let mut registry = TraitRegistry::per_column(len);
        let align =
            evolve_tree_gtr_borrowing(&tree, &root, &params, &mut registry, &mut rng, None)?;
        for col in 0..len {
            let mut state = 0u64;
            for (j, &leaf) in leaf_ids.iter().enumerate() {
                if align.row(leaf).state(col) == TraitState::Present {
                    state |= 1 << j;
                }
            }
            hist.record(state);
        }
    }
    Ok(hist)
}

/// Joint-state cell probabilities of the pair-rule borrowing chain.
pub fn joint_state_expected<F: Real>(
    n_languages: usize,
    mutation_rate: F,
    borrow_rate: F,
) -> Result<Vec<F>, SuiteError> {
    let generator = joint_state_generator(n_languages, mutation_rate, borrow_rate)?;
    Ok(stationary_distribution(&generator)?)
}

/// Joint-state cell probabilities of the law the sweep engines realize.
pub fn realized_joint_state_expected<F: Real>(
    n_languages: usize,
    mutation_rate: F,
    borrow_rate: F,
) -> Result<Vec<F>, SuiteError> {
    let generator = realized_joint_state_generator(n_languages, mutation_rate, borrow_rate)?;
    Ok(stationary_distribution(&generator)?)
}

/// Two-language borrowing stationarity: per-column joint states of a tall
/// 2-leaf tree against the exact stationary vector of the pair chain.
pub fn two_language_borrowing_suite<F: Real>(
    opts: &SuiteOptions,
) -> Result<SuiteReport<F>, SuiteError> {
    let hist = joint_state_histogram::<F>("(A:100,B:100)", 2, opts)?;
    let expected = joint_state_expected(2, F::of(0.5), F::of(0.5))?;
    let fit = goodness_of_fit(&hist.cells_with_tail(3), &expected, F::of(opts.alpha))?;
    Ok(SuiteReport {
        suite: "fig5",
        histograms: vec![("pair_joint_states".into(), hist)],
        fits: vec![NamedFit {
            name: "pair_vs_stationary".into(),
            outcome: fit,
        }],
    })
}

/// Three-language borrowing stationarity, checked against the stationary
/// vector of the realized 8-state chain (per-donor transfer rates; the
/// flat pair-rule extension differs at three languages by up to 0.015,
/// which a chi-square over two million columns would flag on any correct
/// engine).
pub fn three_language_borrowing_suite<F: Real>(
    opts: &SuiteOptions,
) -> Result<SuiteReport<F>, SuiteError> {
    let hist = joint_state_histogram::<F>("((A:50,B:50):10,C:60)", 3, opts)?;
    let expected = realized_joint_state_expected(3, F::of(0.5), F::of(0.5))?;
    let fit = goodness_of_fit(&hist.cells_with_tail(7), &expected, F::of(opts.alpha))?;
    Ok(SuiteReport {
        suite: "fig6",
        histograms: vec![("triple_joint_states".into(), hist)],
        fits: vec![NamedFit {
            name: "triple_vs_stationary".into(),
            outcome: fit,
        }],
    })
}

fn fresh_missing_alignment(langs: usize, classes: usize) -> Alignment {
    let registry = TraitRegistry::per_column(classes);
    Alignment::new(
        (0..langs).map(|i| format!("t{}", i + 1)).collect(),
        vec![TraitSequence::all_present(classes); langs],
        vec![true; langs],
        &registry,
    )
    .expect("fresh alignment is well-formed")
}

/// Missing-data corruption: per-language and per-class event counts on a
/// 10x10 alignment with p = 1/2 against Binomial(10, 1/2).
pub fn missing_data_suite<F: Real>(opts: &SuiteOptions) -> Result<SuiteReport<F>, SuiteError> {
    let (langs, classes) = (10usize, 10usize);
    let p = F::of(0.5);
    let mut rng = stream(opts.seed, 1);
    let mut hist_lang = Histogram::new();
    let mut hist_class = Histogram::new();
    for _ in 0..opts.samples {
        let mut align = fresh_missing_alignment(langs, classes);
        let report = apply_missing_languages(&mut align, p, &mut rng)?;
        for &events in &report.events_per_language {
            hist_lang.record(events);
        }
        let mut align = fresh_missing_alignment(langs, classes);
        let report = apply_missing_meaning_classes(&mut align, p, &mut rng)?;
        for &events in &report.events_per_class {
            hist_class.record(events);
        }
    }
    let alpha = F::of(opts.alpha);
    let expected = binomial_cells(langs as u64, p)?;
    let fits = vec![
        NamedFit {
            name: "missing_languages_vs_binomial".into(),
            outcome: goodness_of_fit(&hist_lang.cells_with_tail(langs as u64), &expected, alpha)?,
        },
        NamedFit {
            name: "missing_classes_vs_binomial".into(),
            outcome: goodness_of_fit(
                &hist_class.cells_with_tail(classes as u64),
                &expected,
                alpha,
            )?,
        },
    ];
    Ok(SuiteReport {
        suite: "fig8",
        histograms: vec![
            ("missing_language_events".into(), hist_lang),
            ("missing_class_events".into(), hist_class),
        ],
        fits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smoke_opts() -> SuiteOptions {
        SuiteOptions {
            samples: 3000,
            seed: 7,
            alpha: 0.01,
        }
    }

    #[test]
    fn all_suites_pass_at_smoke_scale() {
        for id in SUITE_IDS {
            let report: SuiteReport<f64> = run_suite(id, &smoke_opts()).unwrap();
            assert!(
                report.passed(),
                "suite {id}: {:?}",
                report
                    .fits
                    .iter()
                    .map(|f| (f.name.clone(), f.outcome.pass))
                    .collect::<Vec<_>>()
            );
            assert!(!report.histograms.is_empty());
        }
    }

    #[test]
    fn suites_are_deterministic() {
        let once: SuiteReport<f64> = run_suite("fig3", &smoke_opts()).unwrap();
        let twice: SuiteReport<f64> = run_suite("fig3", &smoke_opts()).unwrap();
        let collect = |r: &SuiteReport<f64>| r.histograms[0].1.iter().collect::<Vec<_>>();
        assert_eq!(collect(&once), collect(&twice));
        assert_eq!(
            once.fits[0].outcome.statistic,
            twice.fits[0].outcome.statistic
        );
    }

    #[test]
    fn unknown_suite_is_reported() {
        assert!(matches!(
            run_suite::<f64>("fig9", &smoke_opts()),
            Err(SuiteError::UnknownSuite(_))
        ));
    }

    #[test]
    fn pair_stationary_matches_published_vector() {
        let pi: Vec<f64> = joint_state_expected(2, 0.5, 0.5).unwrap();
        let expect = [2.0 / 9.0, 2.0 / 9.0, 2.0 / 9.0, 1.0 / 3.0];
        for (a, b) in pi.iter().zip(expect) {
            assert!((a - b).abs() < 1e-8, "{pi:?}");
        }
    }

    #[test]
    fn triple_stationary_matches_published_vector() {
        let pi: Vec<f64> = joint_state_expected(3, 0.5, 0.5).unwrap();
        // Published to four decimals, grouped by the number of languages
        // holding the trait: 0.0930 x4 (counts 0..1), 0.1395 x3, 0.2093.
        for (state, expect) in [
            (0b000usize, 0.0930),
            (0b001, 0.0930),
            (0b010, 0.0930),
            (0b100, 0.0930),
            (0b011, 0.1395),
            (0b101, 0.1395),
            (0b110, 0.1395),
            (0b111, 0.2093),
        ] {
            assert!(
                (pi[state] - expect).abs() < 5e-5,
                "state {state}: {}",
                pi[state]
            );
        }
    }

    #[test]
    fn generators_coincide_only_for_two_languages() {
        let flat: Vec<f64> = joint_state_expected(2, 0.5, 0.5).unwrap();
        let realized: Vec<f64> = realized_joint_state_expected(2, 0.5, 0.5).unwrap();
        for (a, b) in flat.iter().zip(&realized) {
            assert!((a - b).abs() < 1e-10);
        }
        let flat3: Vec<f64> = joint_state_expected(3, 0.5, 0.5).unwrap();
        let realized3: Vec<f64> = realized_joint_state_expected(3, 0.5, 0.5).unwrap();
        let max_gap = flat3
            .iter()
            .zip(&realized3)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_gap > 0.01, "expected a structural gap, got {max_gap}");
    }
}
