//! Hand-written reaction templates over random substituents: a small
//! stand-in corpus whose real reactions share consistent bond changes.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chem::{parse_reaction, Reaction};

/// A substituent in two spellings: `head` attaches through its last
/// top-level atom (`{head}X`), `tail` through its first (`X{tail}`).
struct Group {
    head: &'static str,
    tail: &'static str,
}

const ALKYL: &[Group] = &[
    Group { head: "C", tail: "C" },
    Group { head: "CC", tail: "CC" },
    Group { head: "CCC", tail: "CCC" },
    Group { head: "CC(C)", tail: "C(C)C" },
    Group { head: "CCCC", tail: "CCCC" },
    Group { head: "CC(C)C", tail: "CC(C)C" },
    Group { head: "CC(C)(C)", tail: "C(C)(C)C" },
    Group { head: "CCCCC", tail: "CCCCC" },
    Group { head: "C1CCCCC1", tail: "C1CCCCC1" },
    Group { head: "COCC", tail: "CCOC" },
];

const ARYL: &[Group] = &[
    Group { head: "c1ccccc1", tail: "c1ccccc1" },
    Group { head: "Cc1ccc(cc1)", tail: "c1ccc(C)cc1" },
    Group { head: "Clc1ccc(cc1)", tail: "c1ccc(Cl)cc1" },
    Group { head: "COc1ccc(cc1)", tail: "c1ccc(OC)cc1" },
    Group { head: "Fc1ccc(cc1)", tail: "c1ccc(F)cc1" },
    Group { head: "c1ccc2cc(ccc2c1)", tail: "c1ccc2ccccc2c1" },
    Group { head: "c1ccncc1", tail: "c1cccnc1" },
    Group { head: "O=[N+]([O-])c1ccc(cc1)", tail: "c1ccc([N+](=O)[O-])cc1" },
];

pub const TEMPLATE_LABELS: [&str; 4] = ["esterification", "n_alkylation", "bromination", "amide_formation"];

fn any_group(rng: &mut ChaCha8Rng) -> &'static Group {
    if rng.random_bool(0.5) {
        ALKYL.choose(rng).expect("non-empty")
    } else {
        ARYL.choose(rng).expect("non-empty")
    }
}

fn instantiate(template: usize, rng: &mut ChaCha8Rng) -> String {
    match template {
        // Acid + alcohol, acid catalyst.
        0 => {
            let (a, b) = (any_group(rng), ALKYL.choose(rng).unwrap());
            let cat = if rng.random_bool(0.5) { ">OS(=O)(=O)O>" } else { ">>" };
            format!("{}C(=O)O.O{}{cat}{}C(=O)O{}", a.head, b.tail, a.head, b.tail)
        }
        // Amine + alkyl bromide, carbonate base.
        1 => {
            let (a, b) = (any_group(rng), ALKYL.choose(rng).unwrap());
            let base = if rng.random_bool(0.5) { ">O=C([O-])[O-].[K+].[K+]>" } else { ">>" };
            format!("{}N.Br{}{base}{}N{}", a.head, b.tail, a.head, b.tail)
        }
        // Benzylic bromination with NBS, radical initiator.
        2 => {
            let a = ARYL.choose(rng).unwrap();
            let init = if rng.random_bool(0.5) { ".CC(C)(C#N)N=NC(C)(C)C#N" } else { "" };
            format!("{}C.O=C1CCC(=O)N1Br{init}>>{}CBr", a.head, a.head)
        }
        // Acid chloride + amine, tertiary-amine base.
        _ => {
            let (a, b) = (any_group(rng), any_group(rng));
            let base = if rng.random_bool(0.5) { ">CCN(CC)CC>" } else { ">>" };
            format!("{}C(=O)Cl.N{}{base}{}C(=O)N{}", a.head, b.tail, a.head, b.tail)
        }
    }
}

/// `n` template reactions with ids `T{index}` and the template name as
/// class label. Deterministic in `seed`.
pub fn synth_templates(n: usize, seed: u64) -> Vec<Reaction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let t = rng.random_range(0..TEMPLATE_LABELS.len());
            let smiles = instantiate(t, &mut rng);
            let mut rxn = parse_reaction(&smiles, &format!("T{i}"))
                .unwrap_or_else(|e| panic!("template {t} produced unparseable {smiles}: {e}"));
            rxn.class_label = Some(TEMPLATE_LABELS[t].to_string());
            rxn
        })
        .collect()
}
