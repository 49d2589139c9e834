use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{sigmoid, Scalar, Tape, Var};
use crate::chem::{MolecularGraph, Reaction};

use super::features::batch_molecules;
use super::layers::{
    attention_pool, classify_real, gcn_forward, interaction_embed, jumping_knowledge, pad_molecule_set, side_pool,
    transformer_layer, LayerNames,
};
use super::{EncoderConfig, EncoderError, JkMode, ModelCheckpoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Reactants,
    Products,
}

impl Side {
    /// Parameter-name prefix of this side's encoder set.
    pub fn prefix(self) -> &'static str {
        match self {
            Side::Reactants => "reactant",
            Side::Products => "product",
        }
    }
}

/// Tape handles produced while encoding one side.
pub struct SideTrace {
    /// `m×n_atoms` pooling weights; row `i` covers molecule `i`.
    pub pool_weights: Var,
    /// Atom boundaries of the molecules inside `pool_weights`.
    pub atom_offsets: Vec<usize>,
    /// `[layer][head]` attention matrices, `max×max`.
    pub attention: Vec<Vec<Var>>,
    pub mask: Arc<[bool]>,
    pub side_vector: Var,
}

pub struct ForwardPass {
    pub embedding: Var,
    pub logit: Var,
    pub reactants: SideTrace,
    pub products: SideTrace,
}

/// How far each side's molecule sequence is padded before the Transformer.
///
/// Masked slots never feed back into real ones, so both settings give
/// bit-identical embeddings; `Compact` just skips the dead rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Pad to `max_components`, as exposed in the attention bundle.
    Full,
    /// Pad to the side's own component count.
    Compact,
}

fn encode_side<T: Scalar>(
    tape: &mut Tape<T>,
    cfg: &EncoderConfig,
    names: &LayerNames,
    side: Side,
    mols: &[MolecularGraph],
    padding: Padding,
) -> Result<SideTrace, EncoderError> {
    if mols.len() > cfg.max_components {
        return Err(EncoderError::TooManyComponents { side, count: mols.len(), max: cfg.max_components });
    }
    let pre = side.prefix();
    let (feats, adj, offsets) = batch_molecules::<T>(mols);
    let mut h = tape.constant(feats);
    let a_hat = tape.constant(adj);
    let mut layers = Vec::with_capacity(cfg.gnn_layers);
    for l in 0..cfg.gnn_layers {
        let w = names.get(&format!("{pre}.gcn.{l}.weight"))?;
        let b = names.get(&format!("{pre}.gcn.{l}.bias"))?;
        h = gcn_forward(tape, h, a_hat, w, b, cfg.activation)?;
        layers.push(h);
    }
    let projection = match cfg.jk_mode {
        JkMode::ConcatProject => {
            Some((names.get(&format!("{pre}.jk.weight"))?, names.get(&format!("{pre}.jk.bias"))?))
        }
        JkMode::Last => None,
    };
    let nodes = jumping_knowledge(tape, &layers, cfg.gnn_layers, cfg.jk_mode, projection)?;
    let (mol_vecs, pool_weights) = attention_pool(
        tape,
        nodes,
        &offsets,
        names.get(&format!("{pre}.pool.gate.weight"))?,
        names.get(&format!("{pre}.pool.gate.bias"))?,
        names.get(&format!("{pre}.pool.value.weight"))?,
    )?;
    let width = match padding {
        Padding::Full => cfg.max_components,
        Padding::Compact => mols.len(),
    };
    let (mut x, mask) = pad_molecule_set(tape, mol_vecs, width, side)?;
    let mut attention = Vec::with_capacity(cfg.tf_layers);
    for l in 0..cfg.tf_layers {
        let (next, attn) =
            transformer_layer(tape, x, &mask, names, &format!("{pre}.tf.{l}"), cfg.tf_heads, cfg.activation)?;
        x = next;
        attention.push(attn);
    }
    let side_vector = side_pool(tape, x, &mask, cfg.side_pool)?;
    Ok(SideTrace { pool_weights, atom_offsets: offsets, attention, mask, side_vector })
}

/// Records the full model on `tape`: both side encoders, the interaction
/// head and the classifier logit.
pub fn forward<T: Scalar>(
    tape: &mut Tape<T>,
    cfg: &EncoderConfig,
    names: &LayerNames,
    rxn: &Reaction,
    padding: Padding,
) -> Result<ForwardPass, EncoderError> {
    let reactants = encode_side(tape, cfg, names, Side::Reactants, &rxn.reactant_components, padding)?;
    let products = encode_side(tape, cfg, names, Side::Products, &rxn.product_components, padding)?;
    let embedding = interaction_embed(tape, reactants.side_vector, products.side_vector, names)?;
    let logit = classify_real(tape, embedding, names)?;
    Ok(ForwardPass { embedding, logit, reactants, products })
}

/// The fixed-length reaction descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactionEmbedding {
    pub values: Vec<f32>,
}

impl AsRef<[f32]> for ReactionEmbedding {
    fn as_ref(&self) -> &[f32] {
        &self.values
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoleculeAttention {
    pub side: Side,
    pub component: usize,
    /// Post-softmax pooling weight per atom; sums to one.
    pub atom_weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerAttention {
    pub side: Side,
    pub layer: usize,
    /// Row-major `size×size` matrix per head.
    pub heads: Vec<Vec<f64>>,
    pub size: usize,
    /// Real (unpadded) molecule rows.
    pub mask: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionBundle {
    pub molecules: Vec<MoleculeAttention>,
    pub transformer: Vec<LayerAttention>,
}

fn collect_side<T: Scalar>(tape: &Tape<T>, side: Side, trace: &SideTrace, bundle: &mut AttentionBundle) {
    let w = tape.value(trace.pool_weights);
    for i in 0..trace.atom_offsets.len() - 1 {
        let row = w.row_slice(i);
        bundle.molecules.push(MoleculeAttention {
            side,
            component: i,
            atom_weights: row[trace.atom_offsets[i]..trace.atom_offsets[i + 1]].iter().map(|v| v.as_f64()).collect(),
        });
    }
    for (layer, heads) in trace.attention.iter().enumerate() {
        let size = trace.mask.len();
        bundle.transformer.push(LayerAttention {
            side,
            layer,
            heads: heads.iter().map(|&a| tape.value(a).to_f64_vec()).collect(),
            size,
            mask: trace.mask.to_vec(),
        });
    }
}

/// Reusable 32-bit inference state: the checkpoint's tensors are recorded
/// once as tape constants and every call rewinds the tape afterwards.
pub struct InferenceSession<'a> {
    model: &'a ModelCheckpoint,
    tape: Tape<f32>,
    names: LayerNames,
    base: usize,
}

impl<'a> InferenceSession<'a> {
    pub fn new(model: &'a ModelCheckpoint) -> Self {
        let mut tape = Tape::<f32>::new();
        let vars: BTreeMap<String, Var> =
            model.params.iter().map(|(k, v)| (k.clone(), tape.constant(v.clone()))).collect();
        let base = tape.len();
        InferenceSession { model, tape, names: LayerNames::new(vars), base }
    }

    fn run<R>(
        &mut self,
        rxn: &Reaction,
        padding: Padding,
        read: impl FnOnce(&Tape<f32>, &ForwardPass) -> R,
    ) -> Result<R, EncoderError> {
        let result =
            forward(&mut self.tape, &self.model.config, &self.names, rxn, padding).map(|pass| read(&self.tape, &pass));
        self.tape.truncate(self.base);
        result
    }

    pub fn embed(&mut self, rxn: &Reaction) -> Result<(ReactionEmbedding, AttentionBundle), EncoderError> {
        self.run(rxn, Padding::Full, |tape, pass| {
            let emb = ReactionEmbedding { values: tape.value(pass.embedding).data().to_vec() };
            let mut bundle = AttentionBundle { molecules: Vec::new(), transformer: Vec::new() };
            collect_side(tape, Side::Reactants, &pass.reactants, &mut bundle);
            collect_side(tape, Side::Products, &pass.products, &mut bundle);
            (emb, bundle)
        })
    }

    /// Embedding only, skipping the attention copy.
    pub fn embedding(&mut self, rxn: &Reaction) -> Result<ReactionEmbedding, EncoderError> {
        self.run(rxn, Padding::Compact, |tape, pass| ReactionEmbedding { values: tape.value(pass.embedding).data().to_vec() })
    }

    /// Probability that `rxn` is real.
    pub fn probability(&mut self, rxn: &Reaction) -> Result<f64, EncoderError> {
        self.run(rxn, Padding::Compact, |tape, pass| f64::from(sigmoid(tape.value(pass.logit).data()[0])))
    }
}

/// Inference in 32-bit: the embedding plus the attention needed for
/// interpretation.
pub fn embed_reaction(
    model: &ModelCheckpoint,
    rxn: &Reaction,
) -> Result<(ReactionEmbedding, AttentionBundle), EncoderError> {
    InferenceSession::new(model).embed(rxn)
}

/// Probability that `rxn` is real under `model`.
pub fn classify_probability(model: &ModelCheckpoint, rxn: &Reaction) -> Result<f64, EncoderError> {
    InferenceSession::new(model).probability(rxn)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{check_gradients, Tensor};
    use crate::chem::parse_reaction;
    use crate::encoder::{Activation, JkMode};

    fn rxn(s: &str) -> Reaction {
        parse_reaction(s, "t").unwrap()
    }

    fn small() -> EncoderConfig {
        let w = 8;
        EncoderConfig {
            gnn_hidden: w,
            d_model: w,
            tf_heads: 2,
            ffn_dim: 2 * w,
            emb_dim: w,
            max_components: 4,
            ..EncoderConfig::default()
        }
    }

    #[test]
    fn methane_identity_reaction_embeds() {
        let model = ModelCheckpoint::init(EncoderConfig::default(), 0).unwrap();
        let (emb, bundle) = embed_reaction(&model, &rxn("C>>C")).unwrap();
        assert_eq!(emb.values.len(), 128);
        assert!(emb.values.iter().all(|v| v.is_finite()));
        assert_eq!(bundle.molecules.len(), 2);
        for m in &bundle.molecules {
            assert_eq!(m.atom_weights, vec![1.0]);
        }
        assert_eq!(bundle.transformer.len(), 8);
        // A single real row attends only to itself.
        for layer in &bundle.transformer {
            for head in &layer.heads {
                assert_eq!(head[0], 1.0);
                for q in 0..layer.size {
                    for k in 1..layer.size {
                        assert_eq!(head[q * layer.size + k], 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn symmetric_atoms_share_pool_weight() {
        let model = ModelCheckpoint::init(EncoderConfig::default(), 5).unwrap();
        let (_, bundle) = embed_reaction(&model, &rxn("CC.OCCO>>CCOCCO")).unwrap();
        let w = &bundle.molecules[0].atom_weights;
        assert_eq!(w[0], w[1]);
        for m in &bundle.molecules {
            assert!((m.atom_weights.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn padding_does_not_change_the_embedding() {
        let r = rxn("CC(=O)O.OCC>>CC(=O)OCC.O");
        let mut model = ModelCheckpoint::init(EncoderConfig { max_components: 2, ..EncoderConfig::default() }, 9).unwrap();
        let tight = embed_reaction(&model, &r).unwrap().0;
        model.config.max_components = 10;
        let padded = embed_reaction(&model, &r).unwrap().0;
        assert_eq!(tight, padded);
        assert_eq!(InferenceSession::new(&model).embedding(&r).unwrap(), padded);
    }

    #[test]
    fn compact_padding_gives_identical_gradients() {
        let r = rxn("CC(=O)O.OCC.O>>CC(=O)OCC");
        let model = ModelCheckpoint::init(EncoderConfig::default(), 4).unwrap();
        let grads = |padding| {
            let mut tape = Tape::<f32>::new();
            let vars: BTreeMap<String, Var> =
                model.params.iter().map(|(k, v)| (k.clone(), tape.param(v.clone()))).collect();
            let names = LayerNames::new(vars);
            let pass = forward(&mut tape, &model.config, &names, &r, padding).unwrap();
            let loss = tape.bce_with_logits(pass.logit, 1.0).unwrap();
            let mut g = tape.backward(loss).unwrap();
            names.vars().iter().map(|(k, &v)| (k.clone(), g.take(v).unwrap())).collect::<Vec<_>>()
        };
        assert_eq!(grads(Padding::Full), grads(Padding::Compact));
    }

    #[test]
    fn component_order_does_not_matter() {
        let model = ModelCheckpoint::init(EncoderConfig::default(), 2).unwrap();
        let a = embed_reaction(&model, &rxn("CC(=O)Cl.OCc1ccccc1.CCN(CC)CC>>CC(=O)OCc1ccccc1")).unwrap().0;
        let b = embed_reaction(&model, &rxn("CCN(CC)CC.CC(=O)Cl.OCc1ccccc1>>CC(=O)OCc1ccccc1")).unwrap().0;
        let num: f32 = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).powi(2)).sum::<f32>().sqrt();
        let den: f32 = a.values.iter().map(|x| x * x).sum::<f32>().sqrt();
        assert!(num / den < 1e-5, "{}", num / den);
    }

    #[test]
    fn swapping_sides_changes_the_embedding() {
        let model = ModelCheckpoint::init(EncoderConfig::default(), 2).unwrap();
        let a = embed_reaction(&model, &rxn("CCO>>CC=O")).unwrap().0;
        let b = embed_reaction(&model, &rxn("CC=O>>CCO")).unwrap().0;
        assert_ne!(a, b);
    }

    #[test]
    fn too_many_components() {
        let model = ModelCheckpoint::init(small(), 0).unwrap();
        assert_eq!(
            embed_reaction(&model, &rxn("C.C.C.C.C>>C")).unwrap_err(),
            EncoderError::TooManyComponents { side: Side::Reactants, count: 5, max: 4 }
        );
    }

    #[test]
    fn session_reuse_matches_fresh_runs() {
        let model = ModelCheckpoint::init(small(), 4).unwrap();
        let rs = [rxn("CCO>>CC=O"), rxn("CC(=O)Cl.NC>>CC(=O)NC"), rxn("C.C.C.C>>CCCC")];
        let mut session = InferenceSession::new(&model);
        for r in rs.iter().chain(rs.iter()) {
            assert_eq!(session.embed(r).unwrap(), embed_reaction(&model, r).unwrap());
        }
        let big = rxn("C.C.C.C.C>>C");
        assert!(session.embedding(&big).is_err());
        assert_eq!(session.embedding(&rs[0]).unwrap(), embed_reaction(&model, &rs[0]).unwrap().0);
    }

    #[test]
    fn zero_classifier_gives_one_half() {
        let mut model = ModelCheckpoint::init(small(), 0).unwrap();
        for name in ["classifier.weight", "classifier.bias"] {
            let t = model.params.get_mut(name).unwrap();
            t.data_mut().fill(0.0);
        }
        assert_eq!(classify_probability(&model, &rxn("CCO>>CC=O")).unwrap(), 0.5);
    }

    fn grad_report(cfg: EncoderConfig) -> crate::autodiff::GradCheckReport {
        let model = ModelCheckpoint::init(cfg.clone(), 21).unwrap();
        let params: BTreeMap<String, Tensor<f64>> = model.params.iter().map(|(k, v)| (k.clone(), v.cast())).collect();
        let batch = [rxn("CC(=O)O.OCC>>CC(=O)OCC"), rxn("c1ccccc1.BrBr>>Brc1ccccc1")];
        check_gradients::<_, EncoderError>(&params, 1e-3, |tape, vars| {
            let names = LayerNames::new(vars.clone());
            let mut losses = Vec::new();
            for (i, r) in batch.iter().enumerate() {
                let pass = forward(tape, &cfg, &names, r, Padding::Full)?;
                losses.push(tape.bce_with_logits(pass.logit, (i % 2) as f64)?);
            }
            let all = tape.concat_cols(&losses)?;
            let total = tape.sum(all)?;
            Ok(tape.scale(total, 0.5)?)
        })
        .unwrap()
    }

    #[test]
    fn full_model_gradients_match_finite_differences() {
        let r = grad_report(EncoderConfig { activation: Activation::Gelu, ..small() });
        assert_eq!(r.skipped_kinks, 0);
        assert!(r.max_rel_err < 1e-4, "{r:?}");
        let r = grad_report(EncoderConfig { jk_mode: JkMode::Last, ..small() });
        assert!(r.max_rel_err < 1e-4, "{r:?}");
        assert!(r.skipped_kinks * 20 < r.checked, "{r:?}");
    }
}
