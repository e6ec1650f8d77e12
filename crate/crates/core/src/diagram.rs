//! Diagram enumeration, vertex labelling, symmetry factors and evaluation.
//!
//! A diagram joins the external points `t1..tn` and `K` unlabeled four-leg
//! vertices with two kinds of components: directed free propagators
//! `D_w(a -> b) = (hbar / 2 omega) e^{-i omega (t_a - t_b)}` and cumulant
//! blobs. A blob of arity `k` stands for the cumulant part of `C_k`, i.e.
//! `(hbar / 2 omega)^{k/2} sum_m chi_{m,k-m} e_m(e^{i omega t}, e^{-i omega t})`
//! summed over which `m` legs are creation legs; for `k = 2` the propagator
//! part is carried by a separate `D_w` component.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{argument, Error, Result};
use crate::json::ComplexValue;
use crate::labels::{Branch, InternalLabel, TimeLabel};
use crate::params::PhysicalParams;
use crate::quadrature::{integrate, QuadratureSpec, ThetaConstraint};
use crate::tables::ChiTable;
use crate::wick::CumulantEvaluator;
use crate::C64;

pub const MAX_ORDER: usize = 2;
/// Largest total leg count `n + 4K` the enumerator accepts.
pub const MAX_LEGS: usize = 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Node {
    External(usize),
    Vertex(usize),
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::External(i) => write!(f, "t{}", i + 1),
            Node::Vertex(v) => write!(f, "v{}", v + 1),
        }
    }
}

impl From<Node> for String {
    fn from(n: Node) -> String {
        n.to_string()
    }
}

impl TryFrom<String> for Node {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        let parse = |rest: &str| rest.parse::<usize>().ok().filter(|&k| k >= 1).map(|k| k - 1);
        let node = match s.split_at_checked(1) {
            Some(("t", rest)) => parse(rest).map(Node::External),
            Some(("v", rest)) => parse(rest).map(Node::Vertex),
            _ => None,
        };
        node.ok_or_else(|| Error::Parse(format!("node '{s}' is neither tN nor vN")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Component {
    /// Free propagator; `from == to` is a loop on a vertex.
    Propagator { from: Node, to: Node },
    /// Cumulant blob; legs sorted, a vertex may appear several times.
    Blob { legs: Vec<Node> },
}

impl Component {
    fn nodes(&self) -> Vec<Node> {
        match self {
            Component::Propagator { from, to } => vec![*from, *to],
            Component::Blob { legs } => legs.clone(),
        }
    }

    fn relabeled(&self, perm: &[usize]) -> Self {
        let map = |n: Node| match n {
            Node::Vertex(v) => Node::Vertex(perm[v]),
            e => e,
        };
        match self {
            Component::Propagator { from, to } => Component::Propagator { from: map(*from), to: map(*to) },
            Component::Blob { legs } => Component::Blob { legs: legs.iter().map(|&n| map(n)).sorted().collect() },
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Component::Propagator { from, to } => write!(f, "{from}->{to}"),
            Component::Blob { legs } => write!(f, "C{}({})", legs.len(), legs.iter().join(",")),
        }
    }
}

/// A diagram in canonical form: components sorted, vertex numbering the
/// lexicographically smallest over all vertex permutations.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Diagram {
    n: usize,
    order: usize,
    components: Vec<Component>,
}

#[derive(Deserialize)]
struct DiagramWire {
    n: usize,
    order: usize,
    components: Vec<Component>,
}

impl<'de> Deserialize<'de> for Diagram {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let w = DiagramWire::deserialize(d)?;
        Diagram::new(w.n, w.order, w.components).map_err(serde::de::Error::custom)
    }
}

fn vertex_perms(order: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..order).permutations(order)
}

fn canonical_components(order: usize, components: &[Component]) -> Vec<Component> {
    vertex_perms(order)
        .map(|perm| components.iter().map(|c| c.relabeled(&perm)).sorted().collect::<Vec<_>>())
        .min()
        .unwrap_or_default()
}

impl Diagram {
    /// Validates and canonicalizes.
    pub fn new(n: usize, order: usize, components: Vec<Component>) -> Result<Self> {
        if order > MAX_ORDER {
            return Err(Error::UnsupportedOrder(order));
        }
        let mut ext_legs = vec![0usize; n];
        let mut vertex_legs = vec![0usize; order];
        let mut count = |node: Node| -> Result<()> {
            match node {
                Node::External(i) if i < n => ext_legs[i] += 1,
                Node::Vertex(v) if v < order => vertex_legs[v] += 1,
                _ => return Err(argument(format!("node {node} outside a diagram with {n} externals and {order} vertices"))),
            }
            Ok(())
        };
        let mut components = components;
        for c in &mut components {
            match c {
                Component::Blob { legs } => {
                    if legs.is_empty() {
                        return Err(argument("blob without legs"));
                    }
                    legs.sort();
                }
                Component::Propagator { from, to } => {
                    if from == to && matches!(from, Node::External(_)) {
                        return Err(argument("an external point cannot carry a loop"));
                    }
                    if let (Node::External(a), Node::External(b)) = (*from, *to) {
                        if a > b {
                            return Err(argument("propagators between external points run from the earlier slot"));
                        }
                    }
                }
            }
            for node in c.nodes() {
                count(node)?;
            }
        }
        if ext_legs.iter().any(|&k| k != 1) {
            return Err(argument("every external point needs exactly one leg"));
        }
        if vertex_legs.iter().any(|&k| k != 4) {
            return Err(argument("every vertex needs exactly four legs"));
        }
        if has_mixed_directions(&components) {
            return Err(argument("propagators between two vertices must share one direction"));
        }
        Ok(Self { n, order, components: canonical_components(order, &components) })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn propagators(&self) -> impl Iterator<Item = (Node, Node)> + '_ {
        self.components.iter().filter_map(|c| match c {
            Component::Propagator { from, to } => Some((*from, *to)),
            _ => None,
        })
    }

    pub fn blobs(&self) -> impl Iterator<Item = &[Node]> + '_ {
        self.components.iter().filter_map(|c| match c {
            Component::Blob { legs } => Some(legs.as_slice()),
            _ => None,
        })
    }

    pub fn max_blob_arity(&self) -> usize {
        self.blobs().map(<[Node]>::len).max().unwrap_or(0)
    }

    pub fn connected(&self) -> bool {
        let index = |node: Node| match node {
            Node::External(i) => i,
            Node::Vertex(v) => self.n + v,
        };
        let total = self.n + self.order;
        let mut parent: Vec<usize> = (0..total).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for c in &self.components {
            let nodes = c.nodes();
            for w in nodes.windows(2) {
                let (a, b) = (find(&mut parent, index(w[0])), find(&mut parent, index(w[1])));
                parent[a] = b;
            }
        }
        let root = find(&mut parent, 0);
        (0..total).all(|x| find(&mut parent, x) == root)
    }

    /// Leg-level contraction patterns with vertices and their legs labeled
    /// that realize this diagram for one fixed vertex numbering.
    fn labeled_patterns(&self) -> u64 {
        let fact = |k: usize| (1..=k as u64).product::<u64>();
        let mut total = fact(4).pow(self.order as u32);
        for c in &self.components {
            for (_, mult) in c.nodes().iter().filter(|n| matches!(n, Node::Vertex(_))).counts() {
                total /= fact(mult);
            }
        }
        for (_, r) in self.components.iter().counts() {
            total /= fact(r);
        }
        total
    }

    /// Number of leg-level contraction patterns in this class, counting all
    /// vertex numberings.
    pub fn pattern_count(&self) -> u64 {
        let images: HashSet<Vec<Component>> = vertex_perms(self.order)
            .map(|perm| self.components.iter().map(|c| c.relabeled(&perm)).sorted().collect())
            .collect();
        images.len() as u64 * self.labeled_patterns()
    }

    /// Divisor `S` with `(4!)^K K! / S` equal to the pattern count.
    pub fn symmetry_factor(&self) -> u64 {
        let group = 24u64.pow(self.order as u32) * (1..=self.order as u64).product::<u64>();
        let count = self.pattern_count();
        debug_assert_eq!(group % count, 0);
        group / count
    }

    pub fn to_dot(&self, assignments: &[LabelAssignment]) -> String {
        let mut out = String::from("digraph diagram {\n");
        for i in 0..self.n {
            out += &format!("  t{0} [shape=box, label=\"t{0}\"];\n", i + 1);
        }
        for v in 0..self.order {
            let labels = assignments.iter().map(|a| a.labels()[v].to_string()).collect::<BTreeSet<_>>();
            out += &format!(
                "  v{0} [shape=circle, style=filled, fillcolor=gray80, label=\"v{0}\\n{{{1}}}\"];\n",
                v + 1,
                labels.iter().join(", ")
            );
        }
        for (b, legs) in self.blobs().enumerate() {
            let k = legs.len();
            let coeffs = (0..=k).map(|m| format!("chi_{m}{}", k - m)).join(" ");
            out += &format!("  b{b} [shape=doublecircle, label=\"C{k}\\n{coeffs}\"];\n");
            for leg in legs {
                out += &format!("  b{b} -> {leg} [color=red, dir=none];\n");
            }
        }
        for (from, to) in self.propagators() {
            out += &format!("  {from} -> {to};\n");
        }
        out += "}\n";
        out
    }
}

impl fmt::Display for Diagram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.components.iter().join(", "))
    }
}

fn has_mixed_directions(components: &[Component]) -> bool {
    let edges: HashSet<(Node, Node)> = components
        .iter()
        .filter_map(|c| match c {
            Component::Propagator { from, to } if from != to => Some((*from, *to)),
            _ => None,
        })
        .collect();
    edges.iter().any(|(a, b)| edges.contains(&(*b, *a)))
}

/// Multiset partitions of the legs: each external point once, each vertex
/// four times. Blocks are sorted, the list of blocks too.
fn leg_partitions(n: usize, order: usize, max_block: usize) -> Vec<Vec<Vec<Node>>> {
    let legs: Vec<Node> = (0..n).map(Node::External).chain((0..order).flat_map(|v| [Node::Vertex(v); 4])).collect();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut blocks: Vec<Vec<Node>> = Vec::new();
    fn rec(
        legs: &[Node],
        i: usize,
        prev: usize,
        max_block: usize,
        blocks: &mut Vec<Vec<Node>>,
        seen: &mut HashSet<Vec<Vec<Node>>>,
        out: &mut Vec<Vec<Vec<Node>>>,
    ) {
        if i == legs.len() {
            let mut key: Vec<Vec<Node>> = blocks.iter().map(|b| b.iter().copied().sorted().collect()).collect();
            key.sort();
            if seen.insert(key.clone()) {
                out.push(key);
            }
            return;
        }
        // copies of one vertex go to blocks in non-decreasing order
        let start = if i > 0 && legs[i - 1] == legs[i] { prev } else { 0 };
        for b in start..blocks.len() {
            if blocks[b].len() < max_block {
                blocks[b].push(legs[i]);
                rec(legs, i + 1, b, max_block, blocks, seen, out);
                blocks[b].pop();
            }
        }
        blocks.push(vec![legs[i]]);
        rec(legs, i + 1, blocks.len() - 1, max_block, blocks, seen, out);
        blocks.pop();
    }
    rec(&legs, 0, 0, max_block, &mut blocks, &mut seen, &mut out);
    out
}

fn block_options(block: &[Node], max_blob: usize) -> Vec<Component> {
    let mut opts = Vec::new();
    if block.len() <= max_blob {
        opts.push(Component::Blob { legs: block.to_vec() });
    }
    if let [a, b] = *block {
        opts.push(Component::Propagator { from: a, to: b });
        if a != b && matches!(b, Node::Vertex(_)) {
            opts.push(Component::Propagator { from: b, to: a });
        }
    }
    opts
}

/// Every diagram with `n` external points, `order` vertices and blobs of at
/// most `max_blob` legs, disconnected ones included.
pub fn enumerate_diagrams(n: usize, order: usize, max_blob: usize) -> Result<Arc<Vec<Diagram>>> {
    type Key = (usize, usize, usize);
    static CACHE: OnceLock<Mutex<HashMap<Key, Arc<Vec<Diagram>>>>> = OnceLock::new();
    if order > MAX_ORDER {
        return Err(Error::UnsupportedOrder(order));
    }
    if n == 0 {
        return Err(argument("at least one external point is required"));
    }
    let legs = n + 4 * order;
    if legs > MAX_LEGS {
        return Err(argument(format!("{legs} legs exceed the enumeration limit of {MAX_LEGS}")));
    }
    let max_blob = max_blob.min(legs);
    let key = (n, order, max_blob);
    let cache = CACHE.get_or_init(Default::default);
    if let Some(found) = cache.lock().expect("diagram cache poisoned").get(&key) {
        return Ok(found.clone());
    }
    let mut found = BTreeSet::new();
    for partition in leg_partitions(n, order, max_blob.max(2)) {
        let options: Vec<Vec<Component>> = partition.iter().map(|b| block_options(b, max_blob)).collect();
        for choice in options.iter().multi_cartesian_product() {
            let components: Vec<Component> = choice.into_iter().cloned().collect();
            if has_mixed_directions(&components) {
                continue;
            }
            found.insert(canonical_components(order, &components));
        }
        if options.is_empty() {
            found.insert(Vec::new());
        }
    }
    let list = Arc::new(found.into_iter().map(|components| Diagram { n, order, components }).collect::<Vec<_>>());
    cache.lock().expect("diagram cache poisoned").insert(key, list.clone());
    Ok(list)
}

/// Label of every vertex, indexed by vertex number.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabelAssignment(Vec<InternalLabel>);

impl LabelAssignment {
    pub fn new(labels: Vec<InternalLabel>) -> Self {
        Self(labels)
    }

    pub fn labels(&self) -> &[InternalLabel] {
        &self.0
    }

    /// Labels with copy indices separating vertices that share a label.
    pub fn time_labels(&self) -> Vec<TimeLabel> {
        self.0
            .iter()
            .enumerate()
            .map(|(v, l)| l.with_copy(self.0[..v].iter().filter(|m| *m == l).count()))
            .collect()
    }
}

impl fmt::Display for LabelAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.0.iter().join(", "))
    }
}

fn node_rank(node: Node, labels: &[InternalLabel]) -> usize {
    match node {
        Node::External(i) => TimeLabel::External { slot: i }.rank(),
        Node::Vertex(v) => labels[v].rank(),
    }
}

fn satisfies_constraints(d: &Diagram, labels: &[InternalLabel]) -> bool {
    d.propagators().all(|(from, to)| match (from, to) {
        (Node::External(_), Node::External(_)) => true,
        (Node::Vertex(_), Node::Vertex(_)) => node_rank(from, labels) <= node_rank(to, labels),
        _ => node_rank(from, labels) < node_rank(to, labels),
    })
}

/// All vertex labellings compatible with every propagator direction.
pub fn label_assignments(d: &Diagram) -> Vec<LabelAssignment> {
    let all: Vec<InternalLabel> = InternalLabel::all(d.n).collect();
    (0..d.order)
        .map(|_| all.iter().copied())
        .multi_cartesian_product()
        .filter(|labels| satisfies_constraints(d, labels))
        .map(LabelAssignment)
        .collect()
}

/// Product of step functions attached to one labelling, over vertex times.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StepWeight {
    Zero,
    /// Product of `theta(s_later - s_earlier)`; empty means 1.
    Theta(Vec<ThetaConstraint>),
}

impl StepWeight {
    pub fn is_zero(&self) -> bool {
        matches!(self, StepWeight::Zero)
    }

    pub fn render(&self, assignment: &LabelAssignment) -> String {
        match self {
            StepWeight::Zero => "0".into(),
            StepWeight::Theta(cs) if cs.is_empty() => "1".into(),
            StepWeight::Theta(cs) => {
                let names = assignment.time_labels();
                cs.iter().map(|c| format!("theta({} - {})", names[c.later], names[c.earlier])).join(" ")
            }
        }
    }
}

pub fn step_weight(d: &Diagram, assignment: &LabelAssignment) -> StepWeight {
    let labels = assignment.labels();
    if !satisfies_constraints(d, labels) {
        return StepWeight::Zero;
    }
    let mut thetas = BTreeSet::new();
    for (from, to) in d.propagators() {
        let (Node::Vertex(u), Node::Vertex(w)) = (from, to) else { continue };
        if u == w {
            continue;
        }
        if labels[u] == labels[w] {
            // within a `-` point the earlier operator is the later time
            let c = match labels[u].branch {
                Branch::Minus => ThetaConstraint { later: u, earlier: w },
                Branch::Plus => ThetaConstraint { later: w, earlier: u },
            };
            thetas.insert((c.later, c.earlier));
        } else if labels[u].rank() > labels[w].rank() {
            return StepWeight::Zero;
        }
    }
    StepWeight::Theta(thetas.into_iter().map(|(later, earlier)| ThetaConstraint { later, earlier }).collect())
}

/// `+i lambda / hbar` on a `+` point and `-i lambda / hbar` on a `-` point,
/// integrated over `[t0, t_j]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VertexFactor {
    pub factor: C64,
    pub interval: (f64, f64),
}

pub fn vertex_factor(label: InternalLabel, times: &[f64], p: &PhysicalParams) -> Result<VertexFactor> {
    let upper = *times.get(label.slot).ok_or_else(|| argument(format!("no external time for {label}")))?;
    let factor = C64::new(0.0, label.branch.phase_sign() * p.lambda() / p.hbar());
    Ok(VertexFactor { factor, interval: (p.t0(), upper) })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagramValue {
    pub total: C64,
    /// Contribution of each labelling with nonzero step weight.
    pub terms: Vec<(LabelAssignment, C64)>,
}

fn evaluate_with(
    d: &Diagram,
    eval: &CumulantEvaluator,
    times: &[f64],
    p: &PhysicalParams,
    quad: &QuadratureSpec,
) -> Result<DiagramValue> {
    if times.len() != d.n {
        return Err(argument(format!("diagram has {} external points, got {} times", d.n, times.len())));
    }
    if let Some(&t) = times.iter().find(|&&t| t < p.t0()) {
        return Err(Error::Domain { value: t, lo: p.t0(), hi: f64::INFINITY });
    }
    if d.max_blob_arity() > eval.max_order() {
        return Err(argument(format!("a blob of arity {} needs a larger cumulant table", d.max_blob_arity())));
    }
    let scale = p.propagator_scale();
    let omega = p.omega();
    let inv_s = 1.0 / d.symmetry_factor() as f64;
    let integrand = |s: &[f64]| {
        let time = |node: Node| match node {
            Node::External(i) => times[i],
            Node::Vertex(v) => s[v],
        };
        let mut acc = C64::new(1.0, 0.0);
        let mut buf = [0.0; MAX_LEGS];
        for c in &d.components {
            acc *= match c {
                Component::Propagator { from, to } if from == to => C64::new(scale, 0.0),
                Component::Propagator { from, to } => C64::from_polar(scale, -omega * (time(*from) - time(*to))),
                Component::Blob { legs } => {
                    for (slot, &leg) in buf.iter_mut().zip(legs) {
                        *slot = time(leg);
                    }
                    eval.blob(&buf[..legs.len()])
                }
            };
        }
        acc
    };
    let mut terms = Vec::new();
    let mut total = C64::new(0.0, 0.0);
    for assignment in label_assignments(d) {
        let StepWeight::Theta(constraints) = step_weight(d, &assignment) else { continue };
        let mut prefactor = C64::new(inv_s, 0.0);
        let mut region = Vec::with_capacity(d.order);
        for &label in assignment.labels() {
            let vf = vertex_factor(label, times, p)?;
            prefactor *= vf.factor;
            region.push(vf.interval);
        }
        let value = prefactor * integrate(&region, &constraints, quad, integrand)?.value;
        total += value;
        terms.push((assignment, value));
    }
    Ok(DiagramValue { total, terms })
}

pub fn evaluate_diagram(
    d: &Diagram,
    chi: &ChiTable<C64>,
    times: &[f64],
    p: &PhysicalParams,
    quad: &QuadratureSpec,
) -> Result<DiagramValue> {
    quad.validate()?;
    evaluate_with(d, &CumulantEvaluator::new(chi, p), times, p, quad)
}

/// Diagrams of one order whose blobs can be nonzero for the given cumulants.
pub fn contributing_diagrams(n: usize, order: usize, chi: &ChiTable<C64>, p: &PhysicalParams) -> Result<Vec<Diagram>> {
    let eval = CumulantEvaluator::new(chi, p);
    let legs = n + 4 * order;
    if chi.max_order() < legs {
        return Err(argument(format!("order-{order} diagrams with {n} external points need cumulants up to order {legs}")));
    }
    let top = (1..=legs).rev().find(|&k| eval.blob_active(k)).unwrap_or(0);
    Ok(enumerate_diagrams(n, order, top)?
        .iter()
        .filter(|d| d.blobs().all(|b| eval.blob_active(b.len())))
        .cloned()
        .collect())
}

/// Diagram sums of orders `0..=order`.
pub fn diagrammatic_orders(
    chi: &ChiTable<C64>,
    times: &[f64],
    p: &PhysicalParams,
    order: usize,
    quad: &QuadratureSpec,
) -> Result<Vec<C64>> {
    if order > MAX_ORDER {
        return Err(Error::UnsupportedOrder(order));
    }
    if times.is_empty() {
        return Err(argument("at least one time is required"));
    }
    quad.validate()?;
    let eval = CumulantEvaluator::new(chi, p);
    (0..=order)
        .map(|k| {
            contributing_diagrams(times.len(), k, chi, p)?
                .par_iter()
                .map(|d| evaluate_with(d, &eval, times, p, quad).map(|v| v.total))
                .try_reduce(|| C64::new(0.0, 0.0), |a, b| Ok(a + b))
        })
        .collect()
}

/// Correlator through order `order` as a sum over diagrams.
pub fn correlator_diagrammatic(
    chi: &ChiTable<C64>,
    times: &[f64],
    p: &PhysicalParams,
    order: usize,
    quad: &QuadratureSpec,
) -> Result<C64> {
    Ok(diagrammatic_orders(chi, times, p, order, quad)?.into_iter().sum())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssignmentReport {
    pub labels: Vec<String>,
    pub step_weight: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<ComplexValue>,
}

/// Serializable description of a diagram, its labellings and optionally
/// its value.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagramReport {
    pub diagram: Diagram,
    pub text: String,
    pub symmetry_factor: u64,
    pub connected: bool,
    pub assignments: Vec<AssignmentReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<ComplexValue>,
}

impl DiagramReport {
    pub fn new(d: &Diagram, value: Option<&DiagramValue>) -> Self {
        let assignments = label_assignments(d)
            .into_iter()
            .map(|a| AssignmentReport {
                labels: a.time_labels().iter().map(|l| l.to_string()).collect(),
                step_weight: step_weight(d, &a).render(&a),
                value: value.and_then(|v| v.terms.iter().find(|(b, _)| *b == a)).map(|(_, x)| (*x).into()),
            })
            .collect();
        Self {
            diagram: d.clone(),
            text: d.to_string(),
            symmetry_factor: d.symmetry_factor(),
            connected: d.connected(),
            assignments,
            value: value.map(|v| v.total.into()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturbation::correlator_perturbative;
    use crate::states::{chi_table, StateSpec};
    use crate::wick::wightman_free;
    use proptest::prelude::*;

    const T1: Node = Node::External(0);
    const T2: Node = Node::External(1);
    const V1: Node = Node::Vertex(0);
    const V2: Node = Node::Vertex(1);

    fn prop(from: Node, to: Node) -> Component {
        Component::Propagator { from, to }
    }

    fn blob(legs: &[Node]) -> Component {
        Component::Blob { legs: legs.to_vec() }
    }

    fn label(slot: usize, branch: Branch) -> InternalLabel {
        InternalLabel::new(slot, branch)
    }

    fn label_rows(d: &Diagram) -> Vec<Vec<InternalLabel>> {
        label_assignments(d).into_iter().map(|a| a.labels().to_vec()).collect()
    }

    #[test]
    fn free_two_point_diagrams() {
        let all = enumerate_diagrams(2, 0, 2).unwrap();
        assert_eq!(all.len(), 3);
        let connected: Vec<_> = all.iter().filter(|d| d.connected()).collect();
        assert_eq!(connected.len(), 2);
        assert!(connected.contains(&&Diagram::new(2, 0, vec![prop(T1, T2)]).unwrap()));
        assert!(connected.contains(&&Diagram::new(2, 0, vec![blob(&[T1, T2])]).unwrap()));
        let single = enumerate_diagrams(1, 0, 4).unwrap();
        assert_eq!(*single, vec![Diagram::new(1, 0, vec![blob(&[T1])]).unwrap()]);
    }

    #[test]
    fn tadpole_with_blob_is_enumerated() {
        let tadpole = Diagram::new(2, 1, vec![blob(&[T1, V1]), prop(V1, T2), blob(&[V1, V1])]).unwrap();
        assert!(enumerate_diagrams(2, 1, 6).unwrap().contains(&tadpole));
    }

    #[test]
    fn enumeration_respects_invariants() {
        for (n, k) in [(1, 1), (2, 1), (3, 1), (1, 2), (2, 2)] {
            let all = enumerate_diagrams(n, k, n + 4 * k).unwrap();
            let distinct: HashSet<_> = all.iter().collect();
            assert_eq!(distinct.len(), all.len());
            for d in all.iter() {
                let rebuilt = Diagram::new(n, k, d.components().to_vec()).unwrap();
                assert_eq!(&rebuilt, d);
            }
        }
    }

    #[test]
    fn pattern_counts_cover_every_contraction() {
        // summed over classes, pattern counts reproduce every leg partition
        // with each pair tagged as blob or propagator
        let tagged = |legs: usize, pair_options: &dyn Fn(&[usize]) -> u64| -> u64 {
            crate::wick::set_partitions(legs)
                .unwrap()
                .iter()
                .map(|p| p.blocks().iter().map(|b| if b.len() == 2 { pair_options(b) } else { 1 }).product::<u64>())
                .sum()
        };
        let all = enumerate_diagrams(4, 0, 4).unwrap();
        assert_eq!(all.iter().map(Diagram::pattern_count).sum::<u64>(), tagged(4, &|_| 2));
        // leg 0 is the external point: its pairs carry a blob or either
        // direction, pairs of vertex legs a blob or a loop
        let all = enumerate_diagrams(1, 1, 5).unwrap();
        let want = tagged(5, &|b| if b[0] == 0 { 3 } else { 2 });
        assert_eq!(all.iter().map(Diagram::pattern_count).sum::<u64>(), want);
    }

    #[test]
    fn symmetry_factors_of_reference_figures() {
        let cases = [
            (Diagram::new(2, 1, vec![prop(T1, V1), prop(V1, T2), prop(V1, V1)]), 2),
            (Diagram::new(2, 1, vec![blob(&[T1, V1]), prop(V1, T2), blob(&[V1, V1])]), 2),
            (Diagram::new(1, 1, vec![blob(&[T1]), prop(V1, V1), prop(V1, V1)]), 8),
            (Diagram::new(1, 1, vec![blob(&[T1]), prop(V1, V1), blob(&[V1, V1])]), 4),
            (Diagram::new(2, 2, vec![prop(T1, V1), prop(V1, V2), prop(V2, T2), prop(V1, V1), prop(V2, V2)]), 4),
            (Diagram::new(2, 2, vec![prop(T1, V1), prop(V1, V2), prop(V1, V2), prop(V1, V2), prop(V2, T2)]), 6),
            (Diagram::new(1, 1, vec![prop(T1, V1), blob(&[V1, V1, V1])]), 6),
        ];
        for (d, s) in cases {
            let d = d.unwrap();
            assert_eq!(d.symmetry_factor(), s, "{d}");
        }
    }

    #[test]
    fn reference_label_sets() {
        let exchange = Diagram::new(2, 1, vec![prop(T1, V1), prop(V1, T2), prop(V1, V1)]).unwrap();
        assert_eq!(label_rows(&exchange), vec![vec![label(0, Branch::Minus)], vec![label(1, Branch::Plus)]]);
        let chain = Diagram::new(2, 2, vec![prop(T1, V1), prop(V1, V2), prop(V2, T2), prop(V1, V1), prop(V2, V2)]).unwrap();
        let rows: BTreeSet<Vec<InternalLabel>> = label_rows(&chain).into_iter().collect();
        let (m1, p2) = (label(0, Branch::Minus), label(1, Branch::Plus));
        // the canonical numbering may reverse the chain
        let want: BTreeSet<_> = [vec![m1, m1], vec![m1, p2], vec![p2, p2]].into_iter().collect();
        let want_rev: BTreeSet<_> = [vec![m1, m1], vec![p2, m1], vec![p2, p2]].into_iter().collect();
        assert!(rows == want || rows == want_rev, "{rows:?}");
        let tadpole = Diagram::new(2, 1, vec![blob(&[T1, V1]), prop(V1, T2), blob(&[V1, V1])]).unwrap();
        assert_eq!(
            label_rows(&tadpole),
            vec![vec![label(0, Branch::Plus)], vec![label(0, Branch::Minus)], vec![label(1, Branch::Plus)]]
        );
    }

    #[test]
    fn step_weight_rules() {
        let sunset = Diagram::new(2, 2, vec![prop(T1, V1), prop(V1, V2), prop(V1, V2), prop(V1, V2), prop(V2, T2)]).unwrap();
        let (src, tgt) = sunset.propagators().find_map(|(a, b)| match (a, b) {
            (Node::Vertex(u), Node::Vertex(w)) => Some((u, w)),
            _ => None,
        }).unwrap();
        let mut both = vec![label(0, Branch::Minus); 2];
        let w = step_weight(&sunset, &LabelAssignment::new(both.clone()));
        assert_eq!(w, StepWeight::Theta(vec![ThetaConstraint { later: src, earlier: tgt }]));
        both[src] = label(0, Branch::Minus);
        both[tgt] = label(1, Branch::Plus);
        assert_eq!(step_weight(&sunset, &LabelAssignment::new(both.clone())), StepWeight::Theta(vec![]));
        both.swap(0, 1);
        assert!(step_weight(&sunset, &LabelAssignment::new(both)).is_zero());
        let plus = LabelAssignment::new(vec![label(1, Branch::Plus); 2]);
        assert_eq!(step_weight(&sunset, &plus), StepWeight::Theta(vec![ThetaConstraint { later: tgt, earlier: src }]));
        assert!(step_weight(&sunset, &plus).render(&plus).starts_with("theta(t^("));
    }

    #[test]
    fn vertex_factors() {
        let p = PhysicalParams::default().with_lambda(0.3).unwrap().with_t0(-1.0).unwrap();
        let vf = vertex_factor(label(1, Branch::Plus), &[0.5, 2.0], &p).unwrap();
        assert_eq!(vf.factor, C64::new(0.0, 0.3));
        assert_eq!(vf.interval, (-1.0, 2.0));
        let vf = vertex_factor(label(0, Branch::Minus), &[0.5, 2.0], &p).unwrap();
        assert_eq!(vf.factor, C64::new(0.0, -0.3));
        assert_eq!(vf.interval, (-1.0, 0.5));
        // a vertex fed from t2 and feeding t1 has nowhere to sit
        let stuck = Diagram::new(2, 1, vec![prop(T2, V1), prop(V1, T1), prop(V1, V1)]).unwrap();
        assert!(label_assignments(&stuck).is_empty());
    }

    #[test]
    fn uni_dentate_blob_value() {
        let p = PhysicalParams::new(1.3, 0.7).unwrap();
        let phi = C64::new(0.4, -0.9);
        let chi = chi_table(&StateSpec::coherent(phi), 1, &p).unwrap();
        let d = Diagram::new(1, 0, vec![blob(&[T1])]).unwrap();
        let v = evaluate_diagram(&d, &chi, &[0.8], &p, &QuadratureSpec::default()).unwrap().total;
        let want = (phi * C64::from_polar(1.0, -1.3 * 0.8) + phi.conj() * C64::from_polar(1.0, 1.3 * 0.8)) * (0.7f64 / 2.6).sqrt();
        assert!((v - want).norm() < 1e-14);
    }

    #[test]
    fn zeroth_order_sum_is_free_correlator() {
        let p = PhysicalParams::new(0.9, 1.2).unwrap().with_t0(-1.0).unwrap();
        let state = StateSpec::mixture([(0.5, StateSpec::coherent(C64::new(0.3, 0.1))), (0.5, StateSpec::thermal(1.1))]);
        let chi = chi_table(&state, 4, &p).unwrap();
        let times = [0.3, 1.4, -0.2, 0.7];
        let v = correlator_diagrammatic(&chi, &times, &p, 0, &QuadratureSpec::default()).unwrap();
        let want = wightman_free(4, &chi).unwrap().eval(&times, &p).unwrap();
        assert!((v - want).norm() < 1e-13);
    }

    #[test]
    fn second_order_vacuum_bubble_value() {
        // (i lambda)^2 / 6 over the ordered square for labels (1+, 1+)
        let p = PhysicalParams::default().with_lambda(0.2).unwrap();
        let phi = C64::new(0.3, 0.2);
        let chi = chi_table(&StateSpec::coherent(phi), 10, &p).unwrap();
        let d = Diagram::new(
            2,
            2,
            vec![prop(T1, T2), prop(V1, V2), prop(V1, V2), prop(V1, V2), blob(&[V1]), blob(&[V2])],
        )
        .unwrap();
        assert_eq!(d.symmetry_factor(), 6);
        let times = [0.8, 0.5];
        let value = evaluate_diagram(&d, &chi, &times, &p, &QuadratureSpec::default()).unwrap();
        let target = LabelAssignment::new(vec![label(0, Branch::Plus); 2]);
        let got = value.terms.iter().find(|(a, _)| *a == target).unwrap().1;
        let c1 = |s: f64| (phi * C64::from_polar(1.0, -s) + phi.conj() * C64::from_polar(1.0, s)) * 0.5f64.sqrt();
        let dw = |a: f64, b: f64| C64::from_polar(0.5, -(a - b));
        let (src, tgt) = d.propagators().find_map(|(a, b)| match (a, b) {
            (Node::Vertex(u), Node::Vertex(w)) => Some((u, w)),
            _ => None,
        }).unwrap();
        // + point: the source vertex is the earlier time
        let c = [ThetaConstraint { later: tgt, earlier: src }];
        let want = integrate(&[(0.0, 0.8), (0.0, 0.8)], &c, &QuadratureSpec::default(), |s| {
            dw(s[src], s[tgt]).powu(3) * c1(s[0]) * c1(s[1]) * dw(0.8, 0.5)
        })
        .unwrap()
        .value
            * (C64::new(0.0, 0.2).powu(2) / 6.0);
        assert!((got - want).norm() < 1e-12 * want.norm());
    }

    fn equivalence(state: StateSpec, times: &[f64], order: usize) {
        let p = PhysicalParams::new(1.1, 0.9).unwrap().with_lambda_rel(0.02).unwrap().with_t0(-0.2).unwrap();
        let chi = chi_table(&state, times.len() + 4 * order, &p).unwrap();
        let quad = QuadratureSpec::default();
        let diag = diagrammatic_orders(&chi, times, &p, order, &quad).unwrap();
        let pert = crate::perturbation::perturbative_orders(&chi, times, &p, order, &quad).unwrap();
        for (k, (a, b)) in diag.iter().zip(&pert).enumerate() {
            assert!((a - b).norm() <= 1e-8 * b.norm().max(1e-12), "{state:?} order {k}: {a} vs {b}");
        }
        let total = correlator_perturbative(&chi, times, &p, order, &quad).unwrap();
        assert!((diag.iter().sum::<C64>() - total).norm() <= 1e-8 * total.norm().max(1e-12), "{state:?}: {diag:?} vs {total}");
    }

    #[test]
    fn diagrams_match_expansion_first_order() {
        equivalence(StateSpec::Vacuum, &[0.7, 0.2], 1);
        equivalence(StateSpec::coherent(C64::new(0.6, -0.3)), &[0.7, 0.2], 1);
        equivalence(StateSpec::thermal(0.8), &[0.2, 0.9, 0.4], 1);
        equivalence(StateSpec::thermal(0.8), &[0.2, 0.9, 0.4, 0.1], 1);
        equivalence(StateSpec::Number { n: 1 }, &[0.7, 0.2], 1);
    }

    #[test]
    fn diagrams_match_expansion_second_order() {
        equivalence(StateSpec::thermal(1.2), &[0.6, 0.3], 2);
    }

    #[test]
    fn dot_and_json_exports() {
        let tadpole = Diagram::new(2, 1, vec![blob(&[T1, V1]), prop(V1, T2), blob(&[V1, V1])]).unwrap();
        let dot = tadpole.to_dot(&label_assignments(&tadpole));
        assert!(dot.contains("doublecircle") && dot.contains("v1 -> t2") && dot.contains("color=red"));
        assert!(dot.contains("t_{1+}, t_{1-}, t_{2+}"));
        let text = serde_json::to_string(&tadpole).unwrap();
        let back: Diagram = serde_json::from_str(&text).unwrap();
        assert_eq!(back, tadpole);
        let report = DiagramReport::new(&tadpole, None);
        assert_eq!(report.symmetry_factor, 2);
        assert_eq!(report.assignments.len(), 3);
        assert!(serde_json::from_str::<Diagram>(r#"{"n":1,"order":0,"components":[]}"#).is_err());
    }

    proptest! {
        #[test]
        fn canonical_form_is_idempotent_under_relabeling(index in 0usize..10_000, swap in any::<bool>()) {
            let all = enumerate_diagrams(2, 2, 4).unwrap();
            let d = &all[index % all.len()];
            let perm = if swap { vec![1, 0] } else { vec![0, 1] };
            let moved: Vec<Component> = d.components().iter().map(|c| c.relabeled(&perm)).collect();
            let rebuilt = Diagram::new(2, 2, moved).unwrap();
            prop_assert_eq!(&rebuilt, d);
            prop_assert_eq!(Diagram::new(2, 2, rebuilt.components().to_vec()).unwrap(), rebuilt);
        }
    }
}
