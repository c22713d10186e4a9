//! Joint training of the backbone and both hypergraph paths, test-time
//! inference and evaluation.
//!
//! Each epoch embeds the training slices, rebuilds the individual hypergraph
//! and the per-class prototype hypergraphs from the detached embeddings,
//! propagates both, classifies with one shared head and minimizes
//! `α·L_individual + β·L_group`. Inference uses only the individual
//! hypergraph, built over every slice.

mod adam;
mod metrics;

pub use adam::Adam;
pub use metrics::{accuracy, binary_auc, macro_auc, MetricsReport, SliceMetrics};

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::backbone::{self, BackboneKind, BackboneParams, EmbeddingTable, StackedSlices, DEFAULT_HIDDEN};
use crate::dyngraph::{DynamicGraph, SplitSpec};
use crate::error::{Error, Result};
use crate::hyperbuild::{
    build_group_union, build_individual, group_prototypes, Aggregation, GroupPrototype, Metric, TauScales,
    DEFAULT_CLUSTERS, DEFAULT_K,
};
use crate::hyperprop::{HgnnParams, PropMode, Propagator, DEFAULT_LAYERS};
use crate::numcore::{DenseMatrix, Rng, SparseMatrix, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Ablation {
    /// Individual and group paths.
    #[default]
    Full,
    IndividualOnly,
    /// Trains on prototypes only; inference applies the group kernels to
    /// each vertex on its own.
    GroupOnly,
    /// No hypergraphs: backbone plus classifier head.
    BackboneOnly,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation::Full,
        Ablation::IndividualOnly,
        Ablation::GroupOnly,
        Ablation::BackboneOnly,
    ];

    fn individual(self) -> bool {
        matches!(self, Ablation::Full | Ablation::IndividualOnly)
    }

    fn group(self) -> bool {
        matches!(self, Ablation::Full | Ablation::GroupOnly)
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Ablation::Full),
            "individual_only" => Ok(Ablation::IndividualOnly),
            "group_only" => Ok(Ablation::GroupOnly),
            "backbone_only" => Ok(Ablation::BackboneOnly),
            other => Err(Error::param("ablation", format!("unknown mode `{other}`"))),
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ablation::Full => "full",
            Ablation::IndividualOnly => "individual_only",
            Ablation::GroupOnly => "group_only",
            Ablation::BackboneOnly => "backbone_only",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub k: usize,
    /// `None` picks [`TauScales::defaults_for`] the graph's slice count.
    pub taus: Option<TauScales>,
    pub m_clusters: usize,
    pub agg: Aggregation,
    pub metric: Metric,
    pub alpha: f64,
    pub beta: f64,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub hidden: usize,
    pub backbone: BackboneKind,
    pub prop: PropMode,
    pub layers: usize,
    pub ablation: Ablation,
    /// Rebuild the hypergraphs every this many epochs.
    pub rebuild_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            taus: None,
            m_clusters: DEFAULT_CLUSTERS,
            agg: Aggregation::Avg,
            metric: Metric::Euclidean,
            alpha: 1.0,
            beta: 0.5,
            lr: 0.01,
            epochs: 100,
            seed: 0,
            hidden: DEFAULT_HIDDEN,
            backbone: BackboneKind::Gcn,
            prop: PropMode::Message,
            layers: DEFAULT_LAYERS,
            ablation: Ablation::Full,
            rebuild_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let weight = |name: &'static str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::param(name, format!("{v} must be finite and non-negative")))
            }
        };
        weight("alpha", self.alpha)?;
        weight("beta", self.beta)?;
        if self.alpha + self.beta <= 0.0 {
            return Err(Error::param("alpha", "alpha + beta must be positive"));
        }
        if self.ablation.group() && !self.ablation.individual() && self.beta == 0.0 {
            return Err(Error::param("beta", "group_only training needs beta > 0"));
        }
        if !self.ablation.group() && self.alpha == 0.0 {
            return Err(Error::param("alpha", format!("{} training needs alpha > 0", self.ablation)));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::param("lr", format!("{} must be positive", self.lr)));
        }
        if self.epochs == 0 {
            return Err(Error::param("epochs", "must be at least 1"));
        }
        if self.hidden == 0 {
            return Err(Error::param("hidden", "must be at least 1"));
        }
        if self.m_clusters == 0 {
            return Err(Error::param("m-clusters", "must be at least 1"));
        }
        if self.layers == 0 {
            return Err(Error::param("layers", "must be at least 1"));
        }
        if self.rebuild_every == 0 {
            return Err(Error::param("rebuild-every", "must be at least 1"));
        }
        if let Some(t) = self.taus {
            TauScales::new(t.short, t.mid, t.long)?;
        }
        Ok(())
    }

    pub fn taus_for(&self, slices: usize) -> TauScales {
        self.taus.unwrap_or_else(|| TauScales::defaults_for(slices))
    }
}

/// Everything that is learned.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub backbone: BackboneParams,
    pub individual: HgnnParams,
    pub group: HgnnParams,
    /// `h x C`, shared by both paths.
    pub head: DenseMatrix,
}

impl ModelParams {
    pub fn init(cfg: &TrainConfig, input_dim: usize, classes: usize) -> Self {
        let root = Rng::new(cfg.seed).substream("init");
        Self {
            backbone: BackboneParams::init(cfg.backbone, input_dim, cfg.hidden, &mut root.substream("backbone")),
            individual: HgnnParams::init(cfg.hidden, cfg.layers, &mut root.substream("individual")),
            group: HgnnParams::init(cfg.hidden, cfg.layers, &mut root.substream("group")),
            head: root.substream("head").glorot_uniform(cfg.hidden, classes),
        }
    }

    pub fn hidden(&self) -> usize {
        self.backbone.hidden()
    }

    pub fn num_classes(&self) -> usize {
        self.head.cols()
    }

    /// Backbone weights, individual kernels, group kernels, head.
    pub fn tensors(&self) -> Vec<&DenseMatrix> {
        let mut v: Vec<&DenseMatrix> = self.backbone.weights.iter().collect();
        v.extend(&self.individual.thetas);
        v.extend(&self.group.thetas);
        v.push(&self.head);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut DenseMatrix> {
        let mut v: Vec<&mut DenseMatrix> = self.backbone.weights.iter_mut().collect();
        v.extend(&mut self.individual.thetas);
        v.extend(&mut self.group.thetas);
        v.push(&mut self.head);
        v
    }

    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        self.individual.validate(self.hidden())?;
        self.group.validate(self.hidden())?;
        if self.head.rows() != self.hidden() || !self.head.is_finite() {
            return Err(Error::shape("head", format!("{:?} with hidden {}", self.head.shape(), self.hidden())));
        }
        Ok(())
    }
}

/// Tape handles for every tensor of [`ModelParams`].
struct ParamVars {
    all: Vec<Var>,
    backbone: usize,
    layers: usize,
}

impl ParamVars {
    fn new(tape: &mut Tape, params: &ModelParams) -> Self {
        Self {
            all: params.tensors().into_iter().map(|t| tape.leaf(t.clone())).collect(),
            backbone: params.backbone.weights.len(),
            layers: params.individual.layers(),
        }
    }

    fn backbone(&self) -> &[Var] {
        &self.all[..self.backbone]
    }

    fn individual(&self) -> &[Var] {
        &self.all[self.backbone..self.backbone + self.layers]
    }

    fn group(&self) -> &[Var] {
        &self.all[self.backbone + self.layers..self.backbone + 2 * self.layers]
    }

    fn head(&self) -> Var {
        *self.all.last().expect("head")
    }
}

/// Mean cross-entropy of `logits` against `targets`; fails on zero rows.
pub fn individual_loss(tape: &mut Tape, logits: Var, targets: Arc<Vec<usize>>) -> Result<Var> {
    tape.cross_entropy(logits, targets)
}

/// Mean cross-entropy of prototype logits against their classes. With no
/// prototypes the group term is vacuous and contributes 0.
pub fn group_loss(tape: &mut Tape, logits: Var, classes: Arc<Vec<usize>>) -> Result<Var> {
    if classes.is_empty() {
        log::warn!("no group prototypes; group loss is 0");
        return Ok(tape.leaf(DenseMatrix::scalar(0.0)));
    }
    tape.cross_entropy(logits, classes)
}

/// `α·l_in + β·l_group`.
pub fn total_loss(tape: &mut Tape, l_in: Var, l_group: Var, alpha: f64, beta: f64) -> Result<Var> {
    let a = tape.scale(l_in, alpha);
    let b = tape.scale(l_group, beta);
    tape.add(a, b)
}

/// Differentiable prototype vectors: rows of `z` aggregated per prototype.
fn prototype_rows(tape: &mut Tape, z: Var, protos: &[GroupPrototype], agg: Aggregation) -> Result<Var> {
    let zv = tape.value(z);
    let cols = zv.cols();
    match agg {
        Aggregation::Avg => {
            let mut t = Vec::new();
            for (p, proto) in protos.iter().enumerate() {
                let w = 1.0 / proto.members.len() as f64;
                t.extend(proto.members.iter().map(|&r| (p, r, w)));
            }
            let avg = SparseMatrix::from_triplets(protos.len(), zv.rows(), t)?;
            tape.spmm(Arc::new(avg), z)
        }
        Aggregation::Max | Aggregation::Min => {
            let better = |a: f64, b: f64| if agg == Aggregation::Max { a > b } else { a < b };
            let mut idx = Vec::with_capacity(protos.len() * cols);
            for proto in protos {
                for c in 0..cols {
                    let mut best = proto.members[0];
                    for &r in &proto.members[1..] {
                        if better(zv.get(r, c), zv.get(best, c)) {
                            best = r;
                        }
                    }
                    idx.push(best);
                }
            }
            tape.select_elements(z, Arc::new(idx))
        }
    }
}

struct IndividualPath {
    prop: Propagator,
    /// Stacked rows of the hypergraph vertices.
    rows: Arc<Vec<usize>>,
    /// Vertex positions with a label, and those labels.
    labeled: Arc<Vec<usize>>,
    targets: Arc<Vec<usize>>,
}

struct GroupPath {
    prototypes: Vec<GroupPrototype>,
    prop: Propagator,
    order: Arc<Vec<usize>>,
    classes: Arc<Vec<usize>>,
}

/// Positions in `rows` whose stacked row carries a label, and the labels.
fn labeled_rows(n: usize, labels: &[Vec<Option<usize>>], rows: &[usize]) -> (Vec<usize>, Vec<usize>) {
    rows.iter()
        .enumerate()
        .filter_map(|(pos, &r)| labels[r / n][r % n].map(|y| (pos, y)))
        .unzip()
}

/// Stacked rows of present vertices, slice-major.
fn present_rows(presence: &[Vec<bool>]) -> Vec<usize> {
    let n = presence.first().map_or(0, Vec::len);
    presence
        .iter()
        .enumerate()
        .flat_map(|(t, p)| p.iter().enumerate().filter(|(_, &on)| on).map(move |(i, _)| t * n + i))
        .collect()
}

fn build_individual_path(
    table: &EmbeddingTable,
    labels: &[Vec<Option<usize>>],
    cfg: &TrainConfig,
    taus: TauScales,
) -> Result<IndividualPath> {
    let hg = build_individual(table, cfg.k, taus, cfg.metric)?;
    let prop = Propagator::build(&hg, &hg.features, cfg.metric, cfg.prop)?;
    let (labeled, targets) = labeled_rows(table.num_nodes(), labels, &hg.source_rows);
    Ok(IndividualPath {
        prop,
        rows: Arc::new(hg.source_rows),
        labeled: Arc::new(labeled),
        targets: Arc::new(targets),
    })
}

fn build_group_path(
    table: &EmbeddingTable,
    labels: &[Vec<Option<usize>>],
    classes: usize,
    cfg: &TrainConfig,
    taus: TauScales,
    rng: &Rng,
) -> Result<Option<GroupPath>> {
    let prototypes = group_prototypes(table, labels, classes, cfg.m_clusters, cfg.agg, rng)?;
    if prototypes.is_empty() {
        return Ok(None);
    }
    let hg = build_group_union(&prototypes, cfg.k, taus, cfg.metric)?;
    let prop = Propagator::build(&hg, &hg.features, cfg.metric, cfg.prop)?;
    let classes = hg.source_rows.iter().map(|&p| prototypes[p].class).collect();
    Ok(Some(GroupPath {
        prototypes,
        prop,
        order: Arc::new(hg.source_rows),
        classes: Arc::new(classes),
    }))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub individual: f64,
    pub group: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub params: ModelParams,
    pub curve: Vec<EpochStats>,
}

impl TrainedModel {
    pub fn loss_curve(&self) -> Vec<f64> {
        self.curve.iter().map(|e| e.loss).collect()
    }
}

fn check_graph(g: &DynamicGraph, split: &SplitSpec) -> Result<()> {
    if split.num_slices() != g.num_slices() {
        return Err(Error::param(
            "split-t",
            format!("split covers {} slices, graph has {}", split.num_slices(), g.num_slices()),
        ));
    }
    Ok(())
}

/// The training loss over the training slices. Hypergraphs and pair
/// weights are rebuilt from detached embeddings by [`Objective::rebuild`] and
/// stay constant in between.
struct Objective<'a> {
    cfg: &'a TrainConfig,
    classes: usize,
    stacked: StackedSlices,
    labels: Vec<Vec<Option<usize>>>,
    taus: TauScales,
    root: Rng,
    baseline_rows: Arc<Vec<usize>>,
    baseline_targets: Arc<Vec<usize>>,
    individual: Option<IndividualPath>,
    group: Option<GroupPath>,
}

/// Loss handles of one forward pass.
struct LossTerms {
    total: Var,
    individual: Option<Var>,
    group: Option<Var>,
}

impl<'a> Objective<'a> {
    fn new(g: &DynamicGraph, split: &SplitSpec, cfg: &'a TrainConfig) -> Result<Self> {
        cfg.validate()?;
        check_graph(g, split)?;
        let train_slices = split.train_end() + 1;
        let stacked = StackedSlices::prefix(g, train_slices)?;
        let labels: Vec<Vec<Option<usize>>> = g.label_matrix().into_iter().take(train_slices).collect();
        let rows = present_rows(stacked.presence());
        let (pos, targets) = labeled_rows(g.num_nodes(), &labels, &rows);
        Ok(Self {
            cfg,
            classes: g.num_classes(),
            baseline_rows: Arc::new(pos.iter().map(|&p| rows[p]).collect()),
            baseline_targets: Arc::new(targets),
            stacked,
            labels,
            taus: cfg.taus_for(g.num_slices()),
            root: Rng::new(cfg.seed),
            individual: None,
            group: None,
        })
    }

    fn embed(&self, tape: &mut Tape, vars: &ParamVars) -> Result<Var> {
        backbone::forward(tape, self.cfg.backbone, vars.backbone(), &self.stacked)
    }

    fn rebuild(&mut self, z: &DenseMatrix, epoch: usize) -> Result<()> {
        let cfg = self.cfg;
        let table = EmbeddingTable::new(z.clone(), self.stacked.presence().to_vec())?;
        if cfg.ablation.individual() {
            self.individual = Some(build_individual_path(&table, &self.labels, cfg, self.taus)?);
        }
        if cfg.ablation.group() {
            let rng = self.root.substream_indexed("prototypes", epoch as u64);
            self.group = build_group_path(&table, &self.labels, self.classes, cfg, self.taus, &rng)?;
        }
        Ok(())
    }

    fn loss(&self, tape: &mut Tape, z: Var, vars: &ParamVars) -> Result<LossTerms> {
        let cfg = self.cfg;
        let individual = match (&self.individual, cfg.ablation) {
            (Some(path), _) => {
                let zi = tape.gather_rows(z, path.rows.clone())?;
                let out = path.prop.forward(tape, zi, vars.individual())?;
                let sel = tape.gather_rows(out, path.labeled.clone())?;
                let logits = tape.matmul(sel, vars.head())?;
                Some(individual_loss(tape, logits, path.targets.clone())?)
            }
            (None, Ablation::BackboneOnly) => {
                let sel = tape.gather_rows(z, self.baseline_rows.clone())?;
                let logits = tape.matmul(sel, vars.head())?;
                Some(individual_loss(tape, logits, self.baseline_targets.clone())?)
            }
            (None, _) => None,
        };
        let group = if cfg.ablation.group() {
            Some(match &self.group {
                Some(path) => {
                    let protos = prototype_rows(tape, z, &path.prototypes, cfg.agg)?;
                    let ordered = tape.gather_rows(protos, path.order.clone())?;
                    let out = path.prop.forward(tape, ordered, vars.group())?;
                    let logits = tape.matmul(out, vars.head())?;
                    group_loss(tape, logits, path.classes.clone())?
                }
                None => {
                    let empty = tape.leaf(DenseMatrix::zeros(0, self.classes));
                    group_loss(tape, empty, Arc::new(Vec::new()))?
                }
            })
        } else {
            None
        };

        let zero = tape.leaf(DenseMatrix::scalar(0.0));
        let (alpha, beta) = match cfg.ablation {
            Ablation::GroupOnly => (0.0, cfg.beta),
            Ablation::Full => (cfg.alpha, cfg.beta),
            _ => (cfg.alpha, 0.0),
        };
        let total = total_loss(tape, individual.unwrap_or(zero), group.unwrap_or(zero), alpha, beta)?;
        Ok(LossTerms { total, individual, group })
    }
}

/// The epoch-0 training loss of `params` as a function of its tensors, with
/// the hypergraphs built once from `params` and then held fixed. The
/// closure takes one tape leaf per tensor in [`ModelParams::tensors`] order.
pub fn frozen_loss<'a>(
    g: &DynamicGraph,
    split: &SplitSpec,
    cfg: &'a TrainConfig,
    params: &ModelParams,
) -> Result<impl Fn(&mut Tape, &[Var]) -> Result<Var> + 'a> {
    params.validate()?;
    let mut objective = Objective::new(g, split, cfg)?;
    let mut tape = Tape::new();
    let vars = ParamVars::new(&mut tape, params);
    let z = objective.embed(&mut tape, &vars)?;
    objective.rebuild(tape.value(z), 0)?;
    let (backbone, layers) = (params.backbone.weights.len(), params.individual.layers());
    Ok(move |tape: &mut Tape, leaves: &[Var]| {
        let vars = ParamVars {
            all: leaves.to_vec(),
            backbone,
            layers,
        };
        let z = objective.embed(tape, &vars)?;
        Ok(objective.loss(tape, z, &vars)?.total)
    })
}

/// Trains from a fresh initialization derived from `cfg.seed`.
pub fn train(g: &DynamicGraph, split: &SplitSpec, cfg: &TrainConfig) -> Result<TrainedModel> {
    let mut objective = Objective::new(g, split, cfg)?;
    let mut params = ModelParams::init(cfg, g.feature_dim(), g.num_classes());
    let shapes: Vec<_> = params.tensors().iter().map(|t| t.shape()).collect();
    let mut opt = Adam::new(cfg.lr, &shapes);
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut tape = Tape::new();
        let vars = ParamVars::new(&mut tape, &params);
        let z = objective.embed(&mut tape, &vars)?;
        if epoch % cfg.rebuild_every == 0 {
            objective.rebuild(tape.value(z), epoch)?;
        }
        let terms = objective.loss(&mut tape, z, &vars)?;
        let value = tape.value(terms.total).to_scalar()?;
        if !value.is_finite() {
            return Err(Error::Diverged { epoch: epoch + 1, loss: value });
        }
        curve.push(EpochStats {
            epoch: epoch + 1,
            loss: value,
            individual: terms.individual.map_or(Ok(0.0), |v| tape.value(v).to_scalar())?,
            group: terms.group.map_or(Ok(0.0), |v| tape.value(v).to_scalar())?,
        });
        log::debug!("epoch {} loss {value}", epoch + 1);

        let grads = tape.backward(terms.total)?;
        let g_all: Vec<DenseMatrix> = vars.all.iter().map(|&v| grads.get_or_zeros(v, &tape)).collect();
        opt.step(&mut params.tensors_mut(), &g_all)?;
    }
    Ok(TrainedModel { params, curve })
}

/// Class probabilities for every `(node, slice)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    n: usize,
    /// `slices·n x C`; rows of absent vertices are zero.
    pub probabilities: DenseMatrix,
    pub presence: Vec<Vec<bool>>,
}

impl Prediction {
    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn num_slices(&self) -> usize {
        self.presence.len()
    }

    pub fn probabilities_of(&self, node: usize, slice: usize) -> Option<&[f64]> {
        self.presence[slice][node].then(|| self.probabilities.row(slice * self.n + node))
    }

    /// Most probable class; lowest index on ties.
    pub fn label(&self, node: usize, slice: usize) -> Option<usize> {
        self.probabilities_of(node, slice).map(|p| {
            p.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (c, &x)| if x > best.1 { (c, x) } else { best })
                .0
        })
    }
}

/// Scores every vertex of every slice. No label is read.
pub fn predict(g: &DynamicGraph, split: &SplitSpec, params: &ModelParams, cfg: &TrainConfig) -> Result<Prediction> {
    cfg.validate()?;
    check_graph(g, split)?;
    params.validate()?;
    let stacked = StackedSlices::prefix(g, g.num_slices())?;
    let mut tape = Tape::new();
    let vars = ParamVars::new(&mut tape, params);
    let z = backbone::forward(&mut tape, params.backbone.kind, vars.backbone(), &stacked)?;
    let table = EmbeddingTable::new(tape.value(z).clone(), stacked.presence().to_vec())?;
    let rows = present_rows(table.presence());

    let (rows, out) = match cfg.ablation {
        Ablation::Full | Ablation::IndividualOnly => {
            let hg = build_individual(&table, cfg.k, cfg.taus_for(g.num_slices()), cfg.metric)?;
            let prop = Propagator::build(&hg, &hg.features, cfg.metric, cfg.prop)?;
            let zi = tape.gather_rows(z, Arc::new(hg.source_rows.clone()))?;
            (hg.source_rows, prop.forward(&mut tape, zi, vars.individual())?)
        }
        Ablation::GroupOnly => {
            let mut h = tape.gather_rows(z, Arc::new(rows.clone()))?;
            for &theta in vars.group() {
                let pre = tape.matmul(h, theta)?;
                h = tape.relu(pre);
            }
            (rows, h)
        }
        Ablation::BackboneOnly => {
            let h = tape.gather_rows(z, Arc::new(rows.clone()))?;
            (rows, h)
        }
    };
    let logits = tape.matmul(out, vars.head())?;
    let probs = tape.value(logits).softmax_rows();
    let mut probabilities = DenseMatrix::zeros(table.stacked().rows(), params.num_classes());
    for (k, &r) in rows.iter().enumerate() {
        probabilities.row_mut(r).copy_from_slice(probs.row(k));
    }
    Ok(Prediction {
        n: g.num_nodes(),
        probabilities,
        presence: stacked.presence().to_vec(),
    })
}

/// Accuracy and macro-AUC over the labelled, present vertices of the test
/// slices.
pub fn evaluate(g: &DynamicGraph, split: &SplitSpec, pred: &Prediction, loss_curve: Vec<f64>) -> Result<MetricsReport> {
    check_graph(g, split)?;
    if pred.num_slices() != g.num_slices() || pred.num_nodes() != g.num_nodes() {
        return Err(Error::shape("evaluate", "prediction does not match the graph"));
    }
    let classes = g.num_classes();
    let mut report = MetricsReport {
        loss_curve,
        ..MetricsReport::default()
    };
    let mut all_scores = Vec::new();
    let mut all_pred = Vec::new();
    let mut all_truth = Vec::new();
    for t in split.test_slices() {
        let mut scores = Vec::new();
        let mut predicted = Vec::new();
        let mut truth = Vec::new();
        for (i, label) in g.snapshot(t).labels.iter().enumerate() {
            if let (Some(y), Some(p)) = (label, pred.probabilities_of(i, t)) {
                scores.extend_from_slice(p);
                predicted.push(pred.label(i, t).expect("present"));
                truth.push(*y);
            }
        }
        if truth.is_empty() {
            continue;
        }
        let score_m = DenseMatrix::from_vec(truth.len(), classes, scores.clone())?;
        report.per_slice.push(SliceMetrics {
            slice: t,
            evaluated: truth.len(),
            accuracy: accuracy(&predicted, &truth)?,
            macro_auc: macro_auc(&score_m, &truth).ok(),
        });
        all_scores.extend(scores);
        all_pred.extend(predicted);
        all_truth.extend(truth);
    }
    report.evaluated = all_truth.len();
    if all_truth.is_empty() {
        log::warn!("no labelled test vertex is present; the report is empty");
        return Ok(report);
    }
    report.accuracy = Some(accuracy(&all_pred, &all_truth)?);
    let score_m = DenseMatrix::from_vec(all_truth.len(), classes, all_scores)?;
    report.macro_auc = macro_auc(&score_m, &all_truth).ok();
    Ok(report)
}

/// Trains, predicts and evaluates in one go.
pub fn run(g: &DynamicGraph, split: &SplitSpec, cfg: &TrainConfig) -> Result<(TrainedModel, MetricsReport)> {
    let model = train(g, split, cfg)?;
    let pred = predict(g, split, &model.params, cfg)?;
    let report = evaluate(g, split, &pred, model.loss_curve())?;
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyngraph::{generate_sbm, split, SbmParams};

    fn small_cfg(ablation: Ablation) -> TrainConfig {
        TrainConfig {
            k: 2,
            m_clusters: 2,
            hidden: 8,
            epochs: 5,
            ablation,
            ..TrainConfig::default()
        }
    }

    fn small_graph() -> DynamicGraph {
        generate_sbm(&SbmParams::new(12, 4, 2, 0.5, 0.05, 0.1).with_seed(4)).unwrap()
    }

    #[test]
    fn frozen_loss_gradients_match_differences() {
        let g = generate_sbm(&SbmParams::new(10, 3, 2, 0.5, 0.05, 0.1).with_seed(2)).unwrap();
        let s = split(&g, 1).unwrap();
        for (agg, prop, backbone) in [
            (Aggregation::Avg, PropMode::Message, BackboneKind::Gcn),
            (Aggregation::Max, PropMode::Spectral, BackboneKind::Sage),
        ] {
            let cfg = TrainConfig { agg, prop, backbone, hidden: 4, ..small_cfg(Ablation::Full) };
            let params = ModelParams::init(&cfg, g.feature_dim(), g.num_classes());
            let loss = frozen_loss(&g, &s, &cfg, &params).unwrap();
            let tensors: Vec<DenseMatrix> = params.tensors().into_iter().cloned().collect();
            let report = crate::numcore::grad_check(loss, &tensors, 1e-5).unwrap();
            assert!(report.max_rel_error < 1e-4, "{agg} {prop} {backbone}: {report:?}");
        }
    }

    #[test]
    fn config_validation() {
        let ok = TrainConfig::default();
        ok.validate().unwrap();
        let bad = |f: fn(&mut TrainConfig)| {
            let mut c = TrainConfig::default();
            f(&mut c);
            assert!(matches!(c.validate(), Err(Error::Parameter { .. })), "{c:?}");
        };
        bad(|c| {
            c.alpha = 0.0;
            c.beta = 0.0;
        });
        bad(|c| c.epochs = 0);
        bad(|c| c.alpha = -1.0);
        bad(|c| c.lr = 0.0);
        bad(|c| {
            c.ablation = Ablation::GroupOnly;
            c.beta = 0.0;
        });
        assert!("both".parse::<Ablation>().is_err());
    }

    #[test]
    fn loss_examples() {
        let mut tape = Tape::new();
        let uniform = tape.leaf(DenseMatrix::zeros(2, 4));
        let l = individual_loss(&mut tape, uniform, Arc::new(vec![0, 3])).unwrap();
        assert!((tape.value(l).to_scalar().unwrap() - 4f64.ln()).abs() < 1e-12);

        let peaked = tape.leaf(DenseMatrix::from_rows(&[[0.0, 60.0, 0.0]]));
        let l = group_loss(&mut tape, peaked, Arc::new(vec![1])).unwrap();
        assert!(tape.value(l).to_scalar().unwrap() < 1e-20);

        let empty = tape.leaf(DenseMatrix::zeros(0, 3));
        let l = group_loss(&mut tape, empty, Arc::new(vec![])).unwrap();
        assert_eq!(tape.value(l).to_scalar().unwrap(), 0.0);

        let a = tape.leaf(DenseMatrix::scalar(0.5));
        let b = tape.leaf(DenseMatrix::scalar(0.25));
        let t = total_loss(&mut tape, a, b, 1.0, 1.0).unwrap();
        assert_eq!(tape.value(t).to_scalar().unwrap(), 0.75);
        let t = total_loss(&mut tape, a, b, 2.0, 0.0).unwrap();
        assert_eq!(tape.value(t).to_scalar().unwrap(), 1.0);
    }

    #[test]
    fn hand_cross_entropy() {
        // Two vertices, logits [1,2,0] -> class 1 and [0.5,0.5,3] -> class 0.
        let rows = [[1.0, 2.0, 0.0], [0.5, 0.5, 3.0]];
        let mut tape = Tape::new();
        let l = tape.leaf(DenseMatrix::from_rows(&rows));
        let loss = individual_loss(&mut tape, l, Arc::new(vec![1, 0])).unwrap();
        let ce = |r: &[f64; 3], y: usize| r.iter().map(|x| x.exp()).sum::<f64>().ln() - r[y];
        let expected = (ce(&rows[0], 1) + ce(&rows[1], 0)) / 2.0;
        assert!((tape.value(loss).to_scalar().unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn prototype_rows_match_plain_aggregation() {
        let z = DenseMatrix::from_rows(&[[1.0, 5.0], [3.0, 2.0], [0.0, -1.0]]);
        let proto = GroupPrototype { class: 0, cluster: 0, slice: 0, members: vec![0, 1], vector: vec![] };
        for agg in [Aggregation::Avg, Aggregation::Max, Aggregation::Min] {
            let mut tape = Tape::new();
            let zv = tape.leaf(z.clone());
            let p = prototype_rows(&mut tape, zv, std::slice::from_ref(&proto), agg).unwrap();
            let want = agg.reduce(&[z.row(0), z.row(1)]);
            assert_eq!(tape.value(p).row(0), want.as_slice(), "{agg}");
        }
    }

    #[test]
    fn every_mode_trains_and_predicts() {
        let g = small_graph();
        let s = split(&g, 2).unwrap();
        for mode in Ablation::ALL {
            let (model, report) = run(&g, &s, &small_cfg(mode)).unwrap();
            assert_eq!(model.curve.len(), 5);
            assert_eq!(report.per_slice.len(), 1);
            assert_eq!(report.evaluated, 12);
            let acc = report.accuracy.unwrap();
            assert!((0.0..=1.0).contains(&acc), "{mode}");
            if mode == Ablation::IndividualOnly || mode == Ablation::BackboneOnly {
                assert!(model.curve.iter().all(|e| e.group == 0.0));
            }
        }
    }

    #[test]
    fn same_seed_same_report() {
        let g = small_graph();
        let s = split(&g, 2).unwrap();
        let cfg = small_cfg(Ablation::Full);
        assert_eq!(run(&g, &s, &cfg).unwrap().1.to_csv(), run(&g, &s, &cfg).unwrap().1.to_csv());
    }

    #[test]
    fn test_labels_are_never_read() {
        let g = small_graph();
        let s = split(&g, 2).unwrap();
        let cfg = small_cfg(Ablation::Full);
        let model = train(&g, &s, &cfg).unwrap();
        let masked = g.with_labels_masked(s.test_slices());
        assert_eq!(
            predict(&g, &s, &model.params, &cfg).unwrap(),
            predict(&masked, &s, &model.params, &cfg).unwrap()
        );
        assert_eq!(train(&masked, &s, &cfg).unwrap(), model);
    }

    #[test]
    fn divergence_reports_the_epoch() {
        let g = small_graph();
        let s = split(&g, 2).unwrap();
        let cfg = TrainConfig { lr: 1e300, ..small_cfg(Ablation::BackboneOnly) };
        match train(&g, &s, &cfg) {
            Err(Error::Diverged { epoch, .. }) => assert!(epoch >= 2),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
