//! The generate pipeline: from a parsed configuration to finished
//! alignments, one per replicate, each on its own deterministic rng stream
//! derived from (master seed, replicate index).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Poisson};
use thiserror::Error;

use crate::borrowing::{
    evolve_tree_gtr_borrowing, evolve_tree_sd_borrowing, GtrBorrowingParams, SdBorrowingParams,
};
use crate::config::{MissingSpec, RootSpec, RunConfig, TreeSource};
use crate::missing::{apply_missing_languages, apply_missing_meaning_classes, MissingError};
use crate::num::Real;
use crate::seq::{Alignment, SeqError, TraitRegistry, TraitSequence};
use crate::substitution::{ModelParams, SimError};
use crate::tree::{Tree, TreeError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Seq(#[from] SeqError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Missing(#[from] MissingError),
    #[error("cannot read tree file '{path}': {source}")]
    TreeFile {
        path: String,
        source: std::io::Error,
    },
    #[error("tree file '{0}' holds no tree")]
    EmptyTreeFile(String),
    #[error("the GTR engine needs a symmetric rate (gain == loss)")]
    AsymmetricGtr,
    #[error("a stationary root draw needs the Dollo model")]
    StationaryRootNeedsDollo,
    #[error("meaning-class count {classes} cannot partition {columns} root columns")]
    BadClassCount { classes: usize, columns: usize },
    #[error("the covarion model is not available through the config pipeline")]
    CovarionUnsupported,
}

#[derive(Debug, Clone, Copy)]
pub struct GenerateOptions {
    /// Contiguous meaning-class count over the root columns; 0 means one
    /// class per column.
    pub meaning_classes: usize,
    pub replicates: usize,
    pub seed: u64,
}

/// One replicate's tree and full alignment (all nodes; leaf rows flagged).
#[derive(Debug, Clone)]
pub struct Replicate<F> {
    pub index: usize,
    pub tree: Tree<F>,
    pub alignment: Alignment,
}

/// Short model tag used as the output data id.
pub fn model_tag<F: Real>(model: &ModelParams<F>) -> &'static str {
    match model {
        ModelParams::Gtr { .. } => "GTR",
        ModelParams::Covarion { .. } => "COV",
        ModelParams::Dollo { .. } => "SD",
    }
}

fn replicate_rng(seed: u64, index: usize) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

fn registry_for(root_len: usize, meaning_classes: usize) -> Result<TraitRegistry, RunError> {
    if meaning_classes == 0 {
        Ok(TraitRegistry::per_column(root_len))
    } else {
        TraitRegistry::contiguous(root_len, meaning_classes).map_err(|_| RunError::BadClassCount {
            classes: meaning_classes,
            columns: root_len,
        })
    }
}

fn root_sequence<F: Real, R: Rng + ?Sized>(
    config: &RunConfig<F>,
    rng: &mut R,
) -> Result<TraitSequence, RunError> {
    Ok(match &config.root {
        RootSpec::Bits(bits) => TraitSequence::from_value_str(bits)?,
        RootSpec::AllPresent(len) => TraitSequence::all_present(*len),
        RootSpec::StationaryDollo => {
            let ModelParams::Dollo {
                birth_rate,
                death_rate,
            } = config.model
            else {
                return Err(RunError::StationaryRootNeedsDollo);
            };
            let mean = (birth_rate / death_rate).as_f64();
            let k = Poisson::new(mean)
                .map_err(|_| RunError::StationaryRootNeedsDollo)?
                .sample(rng) as usize;
            TraitSequence::all_present(k)
        }
    })
}

/// Run the configured simulation; returns one replicate per rng stream.
pub fn run_config<F: Real>(
    config: &RunConfig<F>,
    opts: &GenerateOptions,
) -> Result<Vec<Replicate<F>>, RunError> {
    let fixed_tree: Option<Tree<F>> = match &config.tree {
        TreeSource::Newick(text) => Some(Tree::parse_newick(text)?),
        TreeSource::File(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| RunError::TreeFile {
                path: path.display().to_string(),
                source,
            })?;
            let trees = crate::io::parse_tree_file(&text)?;
            Some(
                trees
                    .into_iter()
                    .next()
                    .ok_or_else(|| RunError::EmptyTreeFile(path.display().to_string()))?,
            )
        }
        TreeSource::Yule { .. } => None,
    };

    let mut out = Vec::with_capacity(opts.replicates);
    for index in 0..opts.replicates {
        let mut rng = replicate_rng(opts.seed, index);
        let tree = match (&fixed_tree, &config.tree) {
            (Some(tree), _) => tree.clone(),
            (None, TreeSource::Yule { leaves, birth_rate }) => {
                Tree::yule(*leaves, *birth_rate, &mut rng)?
            }
            _ => unreachable!("fixed tree covers the other sources"),
        };
        let root = root_sequence(config, &mut rng)?;
        let mut registry = registry_for(root.len(), opts.meaning_classes)?;
        let mut alignment = match config.model {
            ModelParams::Gtr { gain, loss } => {
                if gain != loss {
                    return Err(RunError::AsymmetricGtr);
                }
                let params = GtrBorrowingParams {
                    mutation_rate: gain,
                    borrow_rate: config.borrow_rate,
                    reach: config.reach,
                    guard: config.guard,
                    audit_every: 0,
                };
                evolve_tree_gtr_borrowing(&tree, &root, &params, &mut registry, &mut rng, None)?
            }
            ModelParams::Dollo {
                birth_rate,
                death_rate,
            } => {
                let params = SdBorrowingParams {
                    birth_rate,
                    death_rate,
                    borrow_rate: config.borrow_rate,
                    reach: config.reach,
                    guard: config.guard,
                    audit_every: 0,
                };
                evolve_tree_sd_borrowing(&tree, &root, &params, &mut registry, &mut rng, None)?
            }
            ModelParams::Covarion { .. } => return Err(RunError::CovarionUnsupported),
        };
        let mut leaves = alignment.leaves_only();
        match config.missing {
            MissingSpec::None => {}
            MissingSpec::Languages(p) => {
                apply_missing_languages(&mut leaves, p, &mut rng)?;
            }
            MissingSpec::MeaningClasses(p) => {
                apply_missing_meaning_classes(&mut leaves, p, &mut rng)?;
            }
        }
        alignment = leaves;
        out.push(Replicate {
            index,
            tree,
            alignment,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;
    use crate::io::alignment_to_xml;
    use crate::seq::TraitState;

    const SD_CONFIG: &str = r#"<beast version='2.0'>
        <tree newick='((((english:0.02,(german:0.01,french:0.01):0.4):0.01,spanish:0.3):0.2,italian:0.6):0.3,irish:0.6)'/>
        <run>
            <root value="01010101010100100010101010000100"/>
            <subModel spec='ExplicitBinaryStochasticDollo' birth="0.5" death="0.5" borrowrate="0.0" borrowzrate="0.0" noEmptyTrait="false"/>
            <missingModel spec='MissingLanguageModel' rate="0.5"/>
        </run>
    </beast>"#;

    #[test]
    fn generates_leaf_alignments_with_missing_data() {
        let config: RunConfig<f64> = parse_config(SD_CONFIG).unwrap();
        let opts = GenerateOptions {
            meaning_classes: 2,
            replicates: 2,
            seed: 9,
        };
        let replicates = run_config(&config, &opts).unwrap();
        assert_eq!(replicates.len(), 2);
        for rep in &replicates {
            assert_eq!(rep.alignment.n_rows(), 6);
            let mut taxa = rep.alignment.taxa().to_vec();
            taxa.sort();
            assert_eq!(
                taxa,
                ["english", "french", "german", "irish", "italian", "spanish"]
            );
            // Missing-language corruption at rate 0.5 marks plenty of cells.
            let missing: usize = (0..6)
                .map(|i| {
                    rep.alignment
                        .row(i)
                        .states()
                        .iter()
                        .filter(|&&s| s == TraitState::Missing)
                        .count()
                })
                .sum();
            assert!(missing > 0);
        }
    }

    #[test]
    fn identical_seed_gives_byte_identical_output() {
        let config: RunConfig<f64> = parse_config(SD_CONFIG).unwrap();
        let opts = GenerateOptions {
            meaning_classes: 0,
            replicates: 1,
            seed: 4242,
        };
        let one = run_config(&config, &opts).unwrap();
        let two = run_config(&config, &opts).unwrap();
        let xml_one = alignment_to_xml(&one[0].alignment, "SD", "fixed");
        let xml_two = alignment_to_xml(&two[0].alignment, "SD", "fixed");
        assert_eq!(xml_one, xml_two);
    }

    #[test]
    fn replicates_differ_across_streams() {
        let config: RunConfig<f64> = parse_config(SD_CONFIG).unwrap();
        let opts = GenerateOptions {
            meaning_classes: 0,
            replicates: 2,
            seed: 4242,
        };
        let reps = run_config(&config, &opts).unwrap();
        let a = alignment_to_xml(&reps[0].alignment, "SD", "fixed");
        let b = alignment_to_xml(&reps[1].alignment, "SD", "fixed");
        assert_ne!(a, b);
    }

    #[test]
    fn yule_source_draws_a_fresh_tree_per_replicate() {
        let text = r#"<beast version='2.0'>
            <tree leaves='6' birthrate='0.2'/>
            <run>
                <root length='10'/>
                <subModel spec='ExplicitBinaryGTR' rate="0.3" borrowrate="0.1"/>
            </run>
        </beast>"#;
        let config: RunConfig<f64> = parse_config(text).unwrap();
        let opts = GenerateOptions {
            meaning_classes: 5,
            replicates: 2,
            seed: 1,
        };
        let reps = run_config(&config, &opts).unwrap();
        assert_eq!(reps[0].tree.leaves().len(), 6);
        assert_ne!(reps[0].tree.to_newick(), reps[1].tree.to_newick());
        for rep in &reps {
            assert_eq!(rep.alignment.column_count(), 10);
            assert_eq!(rep.alignment.class_start_positions(), vec![0, 2, 4, 6, 8]);
        }
    }

    #[test]
    fn stationary_root_requires_dollo() {
        let text = r#"<beast version='2.0'>
            <tree newick='(A:1,B:1)'/>
            <run>
                <root stationary='true'/>
                <subModel spec='ExplicitBinaryGTR' rate="0.3"/>
            </run>
        </beast>"#;
        let config: RunConfig<f64> = parse_config(text).unwrap();
        let opts = GenerateOptions {
            meaning_classes: 0,
            replicates: 1,
            seed: 1,
        };
        assert!(matches!(
            run_config(&config, &opts),
            Err(RunError::StationaryRootNeedsDollo)
        ));
    }
}
