//! Run configuration: the XML format consumed by `generate`.
//!
//! The schema is BEAST-style XML: a `tree` element carrying an inline
//! Newick string, and a `run` element holding a
//! `root` sequence, a `subModel` (`ExplicitBinaryGTR` with a single `rate`,
//! or `ExplicitBinaryStochasticDollo` with `birth` and `death`), and an
//! optional `missingModel`. `borrowzrate="0.0"` means an unbounded
//! borrowing distance. Extensions beyond the original format: the tree may
//! instead come from a file (`file` attribute) or be Yule-generated
//! (`leaves` and `birthrate` attributes), and the root may be given as
//! `length` (all-present) or `stationary="true"` (Dollo stationary draw).

use std::fmt::Write as _;
use std::path::PathBuf;

use thiserror::Error;

use crate::num::Real;
use crate::substitution::{EmptyTraitGuard, ModelParams};
use crate::tree::AncestorBound;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("malformed XML: {0}")]
    Xml(String),
    #[error("missing element <{0}>")]
    MissingElement(&'static str),
    #[error("element <{element}> needs attribute '{attr}'")]
    MissingAttr {
        element: &'static str,
        attr: &'static str,
    },
    #[error("bad value '{value}' for {what}: {why}")]
    BadValue {
        what: &'static str,
        value: String,
        why: String,
    },
    #[error("unknown spec '{0}'")]
    UnknownSpec(String),
    #[error("config needs exactly one tree source")]
    AmbiguousTreeSource,
    #[error("root bit string may contain only 0 and 1 (found '{0}')")]
    BadRootSymbol(char),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeSource<F> {
    Newick(String),
    File(PathBuf),
    Yule { leaves: usize, birth_rate: F },
}

#[derive(Debug, Clone, PartialEq)]
pub enum RootSpec {
    /// Explicit 0/1 string.
    Bits(String),
    /// All-present root of this length.
    AllPresent(usize),
    /// Length drawn from the Dollo stationary Poisson(birth/death).
    StationaryDollo,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MissingSpec<F> {
    None,
    Languages(F),
    MeaningClasses(F),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig<F> {
    pub tree: TreeSource<F>,
    pub root: RootSpec,
    pub model: ModelParams<F>,
    pub borrow_rate: F,
    pub reach: AncestorBound<F>,
    pub guard: EmptyTraitGuard,
    pub missing: MissingSpec<F>,
}

fn parse_number<F: Real>(value: &str, what: &'static str) -> Result<F, ConfigError> {
    let x: f64 = value.parse().map_err(|e| ConfigError::BadValue {
        what,
        value: value.to_owned(),
        why: format!("{e}"),
    })?;
    if !x.is_finite() {
        return Err(ConfigError::BadValue {
            what,
            value: value.to_owned(),
            why: "must be finite".into(),
        });
    }
    Ok(F::of(x))
}

fn parse_flag(value: &str) -> Result<EmptyTraitGuard, ConfigError> {
    match value.to_ascii_lowercase().as_str() {
        "false" | "0" | "off" => Ok(EmptyTraitGuard::Off),
        "true" | "1" | "language" => Ok(EmptyTraitGuard::Language),
        "class" | "meaningclass" => Ok(EmptyTraitGuard::MeaningClass),
        other => Err(ConfigError::BadValue {
            what: "noEmptyTrait",
            value: other.to_owned(),
            why: "expected false, true or class".into(),
        }),
    }
}

/// Parse a configuration document.
pub fn parse_config<F: Real>(text: &str) -> Result<RunConfig<F>, ConfigError> {
    let doc = roxmltree::Document::parse(text).map_err(|e| ConfigError::Xml(e.to_string()))?;
    let beast = doc.root_element();

    let tree_el = beast
        .descendants()
        .find(|n| n.has_tag_name("tree"))
        .ok_or(ConfigError::MissingElement("tree"))?;
    let mut sources = Vec::new();
    if let Some(newick) = tree_el.attribute("newick") {
        sources.push(TreeSource::Newick(newick.to_owned()));
    }
    if let Some(file) = tree_el.attribute("file") {
        sources.push(TreeSource::File(PathBuf::from(file)));
    }
    if let Some(leaves) = tree_el.attribute("leaves") {
        let leaves: usize = leaves.parse().map_err(|e| ConfigError::BadValue {
            what: "tree leaves",
            value: leaves.to_owned(),
            why: format!("{e}"),
        })?;
        let rate = tree_el
            .attribute("birthrate")
            .ok_or(ConfigError::MissingAttr {
                element: "tree",
                attr: "birthrate",
            })?;
        sources.push(TreeSource::Yule {
            leaves,
            birth_rate: parse_number(rate, "tree birthrate")?,
        });
    }
    if sources.len() != 1 {
        return Err(ConfigError::AmbiguousTreeSource);
    }
    let tree = sources.pop().expect("one source");

    let run = beast
        .descendants()
        .find(|n| n.has_tag_name("run"))
        .ok_or(ConfigError::MissingElement("run"))?;

    let root_el = run
        .children()
        .find(|n| n.has_tag_name("root"))
        .ok_or(ConfigError::MissingElement("root"))?;
    let root = if let Some(value) = root_el.attribute("value") {
        for c in value.chars() {
            if c != '0' && c != '1' {
                return Err(ConfigError::BadRootSymbol(c));
            }
        }
        RootSpec::Bits(value.to_owned())
    } else if let Some(length) = root_el.attribute("length") {
        RootSpec::AllPresent(length.parse().map_err(|e| ConfigError::BadValue {
            what: "root length",
            value: length.to_owned(),
            why: format!("{e}"),
        })?)
    } else if root_el.attribute("stationary") == Some("true") {
        RootSpec::StationaryDollo
    } else {
        return Err(ConfigError::MissingAttr {
            element: "root",
            attr: "value",
        });
    };

    let sub = run
        .children()
        .find(|n| n.has_tag_name("subModel"))
        .ok_or(ConfigError::MissingElement("subModel"))?;
    let spec = sub.attribute("spec").ok_or(ConfigError::MissingAttr {
        element: "subModel",
        attr: "spec",
    })?;
    let model = match spec {
        "ExplicitBinaryGTR" => {
            let rate = sub.attribute("rate").ok_or(ConfigError::MissingAttr {
                element: "subModel",
                attr: "rate",
            })?;
            let rate: F = parse_number(rate, "GTR rate")?;
            ModelParams::Gtr {
                gain: rate,
                loss: rate,
            }
        }
        "ExplicitBinaryStochasticDollo" => {
            let birth = sub.attribute("birth").ok_or(ConfigError::MissingAttr {
                element: "subModel",
                attr: "birth",
            })?;
            let death = sub.attribute("death").ok_or(ConfigError::MissingAttr {
                element: "subModel",
                attr: "death",
            })?;
            ModelParams::Dollo {
                birth_rate: parse_number(birth, "Dollo birth")?,
                death_rate: parse_number(death, "Dollo death")?,
            }
        }
        other => return Err(ConfigError::UnknownSpec(other.to_owned())),
    };
    let borrow_rate: F = match sub.attribute("borrowrate") {
        Some(v) => parse_number(v, "borrowrate")?,
        None => F::zero(),
    };
    // borrowzrate = 0.0 means an unbounded local-borrowing distance.
    let reach = match sub.attribute("borrowzrate") {
        Some(v) => {
            let z: F = parse_number(v, "borrowzrate")?;
            if z == F::zero() {
                AncestorBound::Unbounded
            } else {
                AncestorBound::Within(z)
            }
        }
        None => AncestorBound::Unbounded,
    };
    let guard = match sub.attribute("noEmptyTrait") {
        Some(v) => parse_flag(v)?,
        None => EmptyTraitGuard::Off,
    };

    let missing = match run.children().find(|n| n.has_tag_name("missingModel")) {
        None => MissingSpec::None,
        Some(el) => {
            let spec = el.attribute("spec").ok_or(ConfigError::MissingAttr {
                element: "missingModel",
                attr: "spec",
            })?;
            let rate = el.attribute("rate").ok_or(ConfigError::MissingAttr {
                element: "missingModel",
                attr: "rate",
            })?;
            let rate: F = parse_number(rate, "missing rate")?;
            if rate < F::zero() || rate > F::one() {
                return Err(ConfigError::BadValue {
                    what: "missing rate",
                    value: rate.to_string(),
                    why: "must lie in [0, 1]".into(),
                });
            }
            if rate == F::zero() {
                MissingSpec::None
            } else {
                match spec {
                    "MissingLanguageModel" => MissingSpec::Languages(rate),
                    "MissingMeaningClassModel" => MissingSpec::MeaningClasses(rate),
                    other => return Err(ConfigError::UnknownSpec(other.to_owned())),
                }
            }
        }
    };

    Ok(RunConfig {
        tree,
        root,
        model,
        borrow_rate,
        reach,
        guard,
        missing,
    })
}

/// Write a configuration back out; `parse_config` of the result is the
/// identity on every field.
pub fn config_to_xml<F: Real>(config: &RunConfig<F>) -> String {
    let mut out = String::new();
    out.push_str("<beast version='2.0'>\n");
    match &config.tree {
        TreeSource::Newick(newick) => {
            let _ = writeln!(
                out,
                "    <tree id='tree' spec='beast.util.TreeParser' IsLabelledNewick='true' newick='{newick}'/>"
            );
        }
        TreeSource::File(path) => {
            let _ = writeln!(out, "    <tree id='tree' file='{}'/>", path.display());
        }
        TreeSource::Yule { leaves, birth_rate } => {
            let _ = writeln!(
                out,
                "    <tree id='tree' leaves='{leaves}' birthrate='{}'/>",
                birth_rate.as_f64()
            );
        }
    }
    out.push_str("    <run spec='LanguageSequenceGen' tree='@tree'>\n");
    match &config.root {
        RootSpec::Bits(bits) => {
            let _ = writeln!(
                out,
                "        <root spec='Sequence' value=\"{bits}\" taxon=\"root\"/>"
            );
        }
        RootSpec::AllPresent(len) => {
            let _ = writeln!(
                out,
                "        <root spec='Sequence' length='{len}' taxon=\"root\"/>"
            );
        }
        RootSpec::StationaryDollo => {
            out.push_str("        <root spec='Sequence' stationary='true' taxon=\"root\"/>\n");
        }
    }
    let z = match config.reach {
        AncestorBound::Unbounded => 0.0,
        AncestorBound::Within(z) => z.as_f64(),
    };
    let guard = match config.guard {
        EmptyTraitGuard::Off => "false",
        EmptyTraitGuard::Language => "true",
        EmptyTraitGuard::MeaningClass => "class",
    };
    match config.model {
        ModelParams::Gtr { gain, .. } => {
            let _ = writeln!(
                out,
                "        <subModel spec='ExplicitBinaryGTR' rate=\"{}\" borrowrate=\"{}\" borrowzrate=\"{}\" noEmptyTrait=\"{}\"/>",
                gain.as_f64(),
                config.borrow_rate.as_f64(),
                z,
                guard
            );
        }
        ModelParams::Dollo {
            birth_rate,
            death_rate,
        } => {
            let _ = writeln!(
                out,
                "        <subModel spec='ExplicitBinaryStochasticDollo' birth=\"{}\" death=\"{}\" borrowrate=\"{}\" borrowzrate=\"{}\" noEmptyTrait=\"{}\"/>",
                birth_rate.as_f64(),
                death_rate.as_f64(),
                config.borrow_rate.as_f64(),
                z,
                guard
            );
        }
        ModelParams::Covarion { .. } => {
            unreachable!("covarion is not part of the config schema")
        }
    }
    match config.missing {
        MissingSpec::None => {
            out.push_str("        <missingModel spec='MissingLanguageModel' rate=\"0\"/>\n");
        }
        MissingSpec::Languages(p) => {
            let _ = writeln!(
                out,
                "        <missingModel spec='MissingLanguageModel' rate=\"{}\"/>",
                p.as_f64()
            );
        }
        MissingSpec::MeaningClasses(p) => {
            let _ = writeln!(
                out,
                "        <missingModel spec='MissingMeaningClassModel' rate=\"{}\"/>",
                p.as_f64()
            );
        }
    }
    out.push_str("    </run>\n</beast>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SD_EXAMPLE_CONFIG: &str = r#"<beast version='2.0'
       namespace='beast.evolution.alignment:
       beast.evolution.substitutionmodel'>

    <tree id='tree' spec='beast.util.TreeParser' IsLabelledNewick='true' newick='((((english:0.02,(german:0.01,
    french:0.01):0.4):0.01,spanish:0.3):0.2,
    italian:0.6):0.3,irish:0.6)'/>

    <run spec="beast.app.seqgen.LanguageSequenceGen" tree='@tree'>
        <root spec='Sequence' value="01010101010100100010101010000100" taxon="root"/>

        <subModel spec='ExplicitBinaryStochasticDollo' birth="0.5" death = "0.5" borrowrate ="0.0" borrowzrate="0.0" noEmptyTrait="false"/>
    <missingModel spec='MissingLanguageModel' rate="0.5"/>
    </run>
</beast>"#;

    #[test]
    fn parses_the_full_sd_example() {
        let config: RunConfig<f64> = parse_config(SD_EXAMPLE_CONFIG).unwrap();
        assert!(matches!(&config.tree, TreeSource::Newick(n) if n.contains("english:0.02")));
        assert_eq!(
            config.root,
            RootSpec::Bits("01010101010100100010101010000100".into())
        );
        assert_eq!(
            config.model,
            ModelParams::Dollo {
                birth_rate: 0.5,
                death_rate: 0.5
            }
        );
        assert_eq!(config.borrow_rate, 0.0);
        assert_eq!(config.reach, AncestorBound::Unbounded);
        assert_eq!(config.guard, EmptyTraitGuard::Off);
        assert_eq!(config.missing, MissingSpec::Languages(0.5));
        // 32-trait root.
        match &config.root {
            RootSpec::Bits(bits) => assert_eq!(bits.len(), 32),
            other => panic!("unexpected root {other:?}"),
        }
    }

    #[test]
    fn minimal_gtr_config_disables_borrowing() {
        let text = r#"<beast version='2.0'>
            <tree newick='(A:1,B:1)'/>
            <run>
                <root value="0101"/>
                <subModel spec='ExplicitBinaryGTR' rate="0.5" borrowrate="0.0"/>
            </run>
        </beast>"#;
        let config: RunConfig<f64> = parse_config(text).unwrap();
        assert_eq!(config.borrow_rate, 0.0);
        assert_eq!(
            config.model,
            ModelParams::Gtr {
                gain: 0.5,
                loss: 0.5
            }
        );
        assert_eq!(config.missing, MissingSpec::None);
    }

    #[test]
    fn zero_z_rate_means_unbounded_distance() {
        let text = r#"<beast version='2.0'>
            <tree newick='(A:1,B:1)'/>
            <run>
                <root value="01"/>
                <subModel spec='ExplicitBinaryGTR' rate="0.5" borrowrate="0.5" borrowzrate="0.0"/>
            </run>
        </beast>"#;
        let config: RunConfig<f64> = parse_config(text).unwrap();
        assert_eq!(config.reach, AncestorBound::Unbounded);
        assert_eq!(config.borrow_rate, 0.5);
        let local = text.replace("borrowzrate=\"0.0\"", "borrowzrate=\"2.5\"");
        let config: RunConfig<f64> = parse_config(&local).unwrap();
        assert_eq!(config.reach, AncestorBound::Within(2.5));
    }

    #[test]
    fn unknown_spec_is_rejected() {
        let text = r#"<beast version='2.0'>
            <tree newick='(A:1,B:1)'/>
            <run>
                <root value="01"/>
                <subModel spec='BrownianBorrowing' rate="0.5"/>
            </run>
        </beast>"#;
        assert!(matches!(
            parse_config::<f64>(text),
            Err(ConfigError::UnknownSpec(s)) if s == "BrownianBorrowing"
        ));
    }

    #[test]
    fn malformed_bit_string_is_rejected() {
        let text = r#"<beast version='2.0'>
            <tree newick='(A:1,B:1)'/>
            <run>
                <root value="01?1"/>
                <subModel spec='ExplicitBinaryGTR' rate="0.5"/>
            </run>
        </beast>"#;
        assert!(matches!(
            parse_config::<f64>(text),
            Err(ConfigError::BadRootSymbol('?'))
        ));
    }

    #[test]
    fn config_echo_round_trips_every_field() {
        let configs: Vec<RunConfig<f64>> = vec![
            parse_config(SD_EXAMPLE_CONFIG).unwrap(),
            RunConfig {
                tree: TreeSource::Yule {
                    leaves: 80,
                    birth_rate: 0.00055,
                },
                root: RootSpec::AllPresent(2449),
                model: ModelParams::Gtr {
                    gain: 0.5,
                    loss: 0.5,
                },
                borrow_rate: 0.448,
                reach: AncestorBound::Within(1000.0),
                guard: EmptyTraitGuard::Language,
                missing: MissingSpec::MeaningClasses(0.25),
            },
        ];
        for config in configs {
            let echoed = config_to_xml(&config);
            let reparsed: RunConfig<f64> = parse_config(&echoed).unwrap();
            assert_eq!(reparsed, config);
        }
    }
}
