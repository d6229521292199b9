use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layer::{Activation, DenseLayer};
use super::params::{ParameterVector, Role};
use super::Matrix;
use crate::error::{Error, Result};

/// Flat access to a model's trainable parameters in the canonical order.
pub trait Parameterized {
    fn param_count(&self) -> usize;

    /// Role of every parameter, in flattening order.
    fn roles(&self) -> Vec<Role>;

    fn visit(&self, f: &mut dyn FnMut(f64));

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut f64));

    fn flatten(&self) -> ParameterVector {
        let mut values = Vec::with_capacity(self.param_count());
        self.visit(&mut |v| values.push(v));
        ParameterVector::new(values, self.roles()).expect("roles match parameter count")
    }

    /// Overwrites every parameter from `params`.
    fn load(&mut self, params: &ParameterVector) -> Result<()> {
        self.load_values(params.values())
    }

    fn load_values(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::dim("unflatten", self.param_count(), values.len()));
        }
        let mut it = values.iter();
        self.visit_mut(&mut |p| *p = *it.next().expect("length checked"));
        Ok(())
    }

    /// Copy of `self` carrying the parameters in `params`.
    fn unflatten(&self, params: &ParameterVector) -> Result<Self>
    where
        Self: Clone + Sized,
    {
        let mut m = self.clone();
        m.load(params)?;
        Ok(m)
    }
}

/// Hash of shapes and parameter bits; ties a forward cache to the exact
/// parameters that produced it.
fn fingerprint<P: Parameterized + ?Sized>(model: &P, shape: &[usize]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    let mut mix = |x: u64| {
        h ^= x;
        h = h.wrapping_mul(0x0100_0000_01B3);
    };
    for &s in shape {
        mix(s as u64);
    }
    model.visit(&mut |v| mix(v.to_bits()));
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialModel {
    layers: Vec<DenseLayer>,
}

#[derive(Debug, Clone)]
pub struct SequentialCache {
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
    acts: Vec<Matrix>,
    fingerprint: u64,
}

impl SequentialCache {
    pub fn output(&self) -> &Matrix {
        self.acts.last().expect("cache is never empty")
    }

    /// Input to the last layer (penultimate activations).
    pub fn features(&self) -> &Matrix {
        &self.acts[self.acts.len() - 2]
    }
}

impl SequentialModel {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("a sequential model needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::dim("adjacent layers", pair[0].out_dim(), pair[1].in_dim()));
            }
        }
        Ok(Self { layers })
    }

    /// Dense network with layer widths `dims` (input first), `hidden`
    /// activation between layers and `output` activation on the last layer.
    pub fn mlp<R: Rng + ?Sized>(dims: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Config("mlp needs input and output widths".into()));
        }
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| DenseLayer::init(w[0], w[1], if i == last { output } else { hidden }, rng))
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    fn shape(&self) -> Vec<usize> {
        self.layers.iter().flat_map(|l| [l.in_dim(), l.out_dim()]).collect()
    }

    pub fn fingerprint(&self) -> u64 {
        fingerprint(self, &self.shape())
    }

    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim() {
            return Err(Error::dim("model input", self.input_dim(), x.cols()));
        }
        let mut a = self.layers[0].forward(x)?;
        for l in &self.layers[1..] {
            a = l.forward(&a)?;
        }
        Ok(a)
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, SequentialCache)> {
        if x.cols() != self.input_dim() {
            return Err(Error::dim("model input", self.input_dim(), x.cols()));
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for l in &self.layers {
            let next = l.forward(acts.last().expect("non-empty"))?;
            acts.push(next);
        }
        let out = acts.last().expect("non-empty").clone();
        Ok((
            out,
            SequentialCache {
                acts,
                fingerprint: self.fingerprint(),
            },
        ))
    }

    fn check_cache(&self, cache: &SequentialCache, d_out: &Matrix) -> Result<()> {
        if cache.acts.len() != self.layers.len() + 1 || cache.fingerprint != self.fingerprint() {
            return Err(Error::StaleCache(
                "cache was produced by a different model or parameters".into(),
            ));
        }
        let out = cache.output();
        if d_out.rows() != out.rows() || d_out.cols() != out.cols() {
            return Err(Error::dim(
                "loss gradient",
                out.rows() * out.cols(),
                d_out.rows() * d_out.cols(),
            ));
        }
        Ok(())
    }

    /// Reverse pass. `feature_grad` is an extra gradient on the penultimate
    /// activations (added before propagating further back). Returns the flat
    /// parameter gradient and the gradient with respect to the input.
    pub fn backward_raw(
        &self,
        cache: &SequentialCache,
        d_out: &Matrix,
        feature_grad: Option<&Matrix>,
    ) -> Result<(Vec<f64>, Matrix)> {
        self.check_cache(cache, d_out)?;
        let n_layers = self.layers.len();
        let mut grads = vec![0.0; self.param_count()];
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for l in &self.layers {
            offsets.push(off);
            off += l.param_count();
        }
        let mut d = d_out.clone();
        for li in (0..n_layers).rev() {
            let layer = &self.layers[li];
            let g = layer.backward(&cache.acts[li], &cache.acts[li + 1], &d);
            let o = offsets[li];
            let nw = g.weights.len();
            grads[o..o + nw].copy_from_slice(&g.weights);
            grads[o + nw..o + nw + g.bias.len()].copy_from_slice(&g.bias);
            d = g.input;
            if li == n_layers - 1 {
                if let Some(fg) = feature_grad {
                    if fg.rows() != d.rows() || fg.cols() != d.cols() {
                        return Err(Error::dim("feature gradient", d.cols(), fg.cols()));
                    }
                    d.add_assign(fg)?;
                }
            }
        }
        Ok((grads, d))
    }

    pub fn backward(&self, cache: &SequentialCache, d_out: &Matrix) -> Result<ParameterVector> {
        let (g, _) = self.backward_raw(cache, d_out, None)?;
        ParameterVector::new(g, self.roles())
    }
}

impl Parameterized for SequentialModel {
    fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    /// The last layer is the classifier; earlier layers form the extractor.
    fn roles(&self) -> Vec<Role> {
        let last = self.layers.len() - 1;
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                let role = if i == last { Role::Classifier } else { Role::Global };
                std::iter::repeat_n(role, l.param_count())
            })
            .collect()
    }

    fn visit(&self, f: &mut dyn FnMut(f64)) {
        for l in &self.layers {
            l.params().for_each(|v| f(*v));
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut f64)) {
        for l in &mut self.layers {
            l.params_mut().for_each(&mut *f);
        }
    }
}

/// Two parallel extractors whose concatenated outputs feed a head:
/// `head([global_extractor(x); local_extractor(x)])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FendaModel {
    global_extractor: SequentialModel,
    local_extractor: SequentialModel,
    head: SequentialModel,
}

#[derive(Debug, Clone)]
pub struct FendaCache {
    global: SequentialCache,
    local: SequentialCache,
    head: SequentialCache,
}

impl FendaCache {
    /// Global extractor output.
    pub fn global_features(&self) -> &Matrix {
        self.global.output()
    }

    /// Local extractor output.
    pub fn local_features(&self) -> &Matrix {
        self.local.output()
    }
}

impl FendaModel {
    pub fn new(
        global_extractor: SequentialModel,
        local_extractor: SequentialModel,
        head: SequentialModel,
    ) -> Result<Self> {
        if global_extractor.input_dim() != local_extractor.input_dim() {
            return Err(Error::dim(
                "extractor inputs",
                global_extractor.input_dim(),
                local_extractor.input_dim(),
            ));
        }
        let latent = global_extractor.output_dim() + local_extractor.output_dim();
        if head.input_dim() != latent {
            return Err(Error::dim("head input", latent, head.input_dim()));
        }
        Ok(Self {
            global_extractor,
            local_extractor,
            head,
        })
    }

    pub fn global_extractor(&self) -> &SequentialModel {
        &self.global_extractor
    }

    pub fn local_extractor(&self) -> &SequentialModel {
        &self.local_extractor
    }

    pub fn local_extractor_mut(&mut self) -> &mut SequentialModel {
        &mut self.local_extractor
    }

    pub fn head(&self) -> &SequentialModel {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut SequentialModel {
        &mut self.head
    }

    pub fn input_dim(&self) -> usize {
        self.global_extractor.input_dim()
    }

    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        let z = self.global_extractor.predict(x)?;
        let zl = self.local_extractor.predict(x)?;
        self.head.predict(&z.hcat(&zl)?)
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, FendaCache)> {
        let (z, global) = self.global_extractor.forward(x)?;
        let (zl, local) = self.local_extractor.forward(x)?;
        let (pred, head) = self.head.forward(&z.hcat(&zl)?)?;
        Ok((pred, FendaCache { global, local, head }))
    }

    /// Reverse pass with optional extra gradients on the two extractor outputs.
    pub fn backward_raw(
        &self,
        cache: &FendaCache,
        d_out: &Matrix,
        global_feature_grad: Option<&Matrix>,
        local_feature_grad: Option<&Matrix>,
    ) -> Result<Vec<f64>> {
        let (g_head, d_latent) = self.head.backward_raw(&cache.head, d_out, None)?;
        let (mut dz, mut dzl) = d_latent.hsplit(self.global_extractor.output_dim());
        if let Some(fg) = global_feature_grad {
            dz.add_assign(fg)?;
        }
        if let Some(fg) = local_feature_grad {
            dzl.add_assign(fg)?;
        }
        let (g_global, _) = self.global_extractor.backward_raw(&cache.global, &dz, None)?;
        let (g_local, _) = self.local_extractor.backward_raw(&cache.local, &dzl, None)?;
        let mut grads = g_global;
        grads.extend(g_local);
        grads.extend(g_head);
        Ok(grads)
    }

    pub fn backward(&self, cache: &FendaCache, d_out: &Matrix) -> Result<ParameterVector> {
        let g = self.backward_raw(cache, d_out, None, None)?;
        ParameterVector::new(g, self.roles())
    }
}

impl Parameterized for FendaModel {
    fn param_count(&self) -> usize {
        self.global_extractor.param_count() + self.local_extractor.param_count() + self.head.param_count()
    }

    fn roles(&self) -> Vec<Role> {
        let mut r = vec![Role::Global; self.global_extractor.param_count()];
        r.extend(std::iter::repeat_n(Role::Local, self.local_extractor.param_count()));
        r.extend(std::iter::repeat_n(Role::Classifier, self.head.param_count()));
        r
    }

    fn visit(&self, f: &mut dyn FnMut(f64)) {
        self.global_extractor.visit(f);
        self.local_extractor.visit(f);
        self.head.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut f64)) {
        self.global_extractor.visit_mut(f);
        self.local_extractor.visit_mut(f);
        self.head.visit_mut(f);
    }
}

/// Any model a client can train or evaluate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Sequential(SequentialModel),
    Fenda(FendaModel),
}

#[derive(Debug, Clone)]
pub enum ForwardCache {
    Sequential(SequentialCache),
    Fenda(FendaCache),
}

/// Extra gradients on intermediate representations, used by the
/// contrastive objectives. For a sequential model only `global` applies and
/// targets the penultimate activations.
#[derive(Debug, Clone, Default)]
pub struct FeatureGrads {
    pub global: Option<Matrix>,
    pub local: Option<Matrix>,
}

impl ForwardCache {
    /// Representation used by contrastive losses: penultimate activations of
    /// a sequential model, or the global extractor output of a FENDA model.
    pub fn features(&self) -> &Matrix {
        match self {
            ForwardCache::Sequential(c) => c.features(),
            ForwardCache::Fenda(c) => c.global_features(),
        }
    }

    pub fn local_features(&self) -> Option<&Matrix> {
        match self {
            ForwardCache::Sequential(_) => None,
            ForwardCache::Fenda(c) => Some(c.local_features()),
        }
    }
}

impl Model {
    pub fn input_dim(&self) -> usize {
        match self {
            Model::Sequential(m) => m.input_dim(),
            Model::Fenda(m) => m.input_dim(),
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        match self {
            Model::Sequential(m) => m.predict(x),
            Model::Fenda(m) => m.predict(x),
        }
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, ForwardCache)> {
        match self {
            Model::Sequential(m) => m.forward(x).map(|(p, c)| (p, ForwardCache::Sequential(c))),
            Model::Fenda(m) => m.forward(x).map(|(p, c)| (p, ForwardCache::Fenda(c))),
        }
    }

    pub fn backward(&self, cache: &ForwardCache, d_out: &Matrix) -> Result<ParameterVector> {
        self.backward_with_features(cache, d_out, &FeatureGrads::default())
    }

    pub fn backward_with_features(
        &self,
        cache: &ForwardCache,
        d_out: &Matrix,
        extra: &FeatureGrads,
    ) -> Result<ParameterVector> {
        let g = match (self, cache) {
            (Model::Sequential(m), ForwardCache::Sequential(c)) => {
                if extra.local.is_some() {
                    return Err(Error::Config("sequential models have no local features".into()));
                }
                m.backward_raw(c, d_out, extra.global.as_ref())?.0
            }
            (Model::Fenda(m), ForwardCache::Fenda(c)) => {
                m.backward_raw(c, d_out, extra.global.as_ref(), extra.local.as_ref())?
            }
            _ => return Err(Error::StaleCache("cache kind does not match model kind".into())),
        };
        ParameterVector::new(g, self.roles())
    }

    pub fn as_sequential(&self) -> Option<&SequentialModel> {
        match self {
            Model::Sequential(m) => Some(m),
            Model::Fenda(_) => None,
        }
    }

    pub fn as_fenda(&self) -> Option<&FendaModel> {
        match self {
            Model::Fenda(m) => Some(m),
            Model::Sequential(_) => None,
        }
    }
}

impl Parameterized for Model {
    fn param_count(&self) -> usize {
        match self {
            Model::Sequential(m) => m.param_count(),
            Model::Fenda(m) => m.param_count(),
        }
    }

    fn roles(&self) -> Vec<Role> {
        match self {
            Model::Sequential(m) => m.roles(),
            Model::Fenda(m) => m.roles(),
        }
    }

    fn visit(&self, f: &mut dyn FnMut(f64)) {
        match self {
            Model::Sequential(m) => m.visit(f),
            Model::Fenda(m) => m.visit(f),
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut f64)) {
        match self {
            Model::Sequential(m) => m.visit_mut(f),
            Model::Fenda(m) => m.visit_mut(f),
        }
    }
}

/// APFL's twin networks: a federated copy and a personal copy of one architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinModel {
    pub global: SequentialModel,
    pub personal: SequentialModel,
}

impl TwinModel {
    pub fn new(global: SequentialModel, personal: SequentialModel) -> Result<Self> {
        if global.shape() != personal.shape() {
            return Err(Error::Config("twin models must share an architecture".into()));
        }
        Ok(Self { global, personal })
    }

    /// `alpha * personal + (1 - alpha) * global`, parameter by parameter.
    pub fn mixed(&self, alpha: f64) -> SequentialModel {
        let mut out = self.global.clone();
        let mut personal = Vec::with_capacity(self.personal.param_count());
        self.personal.visit(&mut |v| personal.push(v));
        let mut it = personal.into_iter();
        out.visit_mut(&mut |w| {
            let v = it.next().expect("same architecture");
            *w = alpha * v + (1.0 - alpha) * *w;
        });
        out
    }
}

impl Parameterized for TwinModel {
    fn param_count(&self) -> usize {
        self.global.param_count() + self.personal.param_count()
    }

    fn roles(&self) -> Vec<Role> {
        let mut r = vec![Role::Global; self.global.param_count()];
        r.extend(std::iter::repeat_n(Role::Local, self.personal.param_count()));
        r
    }

    fn visit(&self, f: &mut dyn FnMut(f64)) {
        self.global.visit(f);
        self.personal.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut f64)) {
        self.global.visit_mut(f);
        self.personal.visit_mut(f);
    }
}
