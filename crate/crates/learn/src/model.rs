//! Learned dynamics models.
//!
//! Every model maps Cartesian Lagrangian data `(x, ẋ)` into its own state
//! space, integrates there, and maps predictions back, so losses and metrics
//! are always computed on the same Cartesian quantities.

use std::path::Path;

use cartmech_autodiff::{checkpoint, Backend, Bound, Eager, Mlp, ParamStore, Shape, Tensor};
use cartmech_core::constraints::ConstraintLinearization;
use cartmech_core::dynamics::{constrained_lagrangian_flow, projected_hamiltonian_flow, FlowGeometry};
use cartmech_core::integrators::rollout_fixed_on;
use cartmech_core::systems::{System, SystemConfig, SystemSpec};
use cartmech_core::BodySpec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LearnError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Constrained Hamiltonian network on `(x, p)`.
    Chnn,
    /// Constrained Lagrangian network on `(x, ẋ)`.
    Clnn,
    /// Direct dynamics network on Cartesian `(x, ẋ)`.
    Node,
    /// Direct dynamics network on chain angles `(q, q̇)`.
    NodeAngular,
    /// Hamiltonian network on chain angles `(q, p)` with `M⁻¹(q) = L(q)L(q)ᵀ`.
    Hnn2d,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [Self::Chnn, Self::Clnn, Self::Node, Self::NodeAngular, Self::Hnn2d];

    pub fn name(self) -> &'static str {
        match self {
            Self::Chnn => "chnn",
            Self::Clnn => "clnn",
            Self::Node => "node",
            Self::NodeAngular => "node_angular",
            Self::Hnn2d => "hnn2d",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| LearnError::Config(format!("unknown model kind `{s}`")))
    }

    /// Works in chain angles rather than Cartesian coordinates.
    pub fn is_angular(self) -> bool {
        matches!(self, Self::NodeAngular | Self::Hnn2d)
    }

    /// Uses the known constraints.
    pub fn is_constrained(self) -> bool {
        matches!(self, Self::Chnn | Self::Clnn)
    }
}

fn default_hidden() -> Vec<usize> {
    vec![256, 256, 256]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    /// One enable flag per system constraint; `None` keeps all of them.
    #[serde(default)]
    pub constraint_mask: Option<Vec<bool>>,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, hidden: Vec<usize>) -> Self {
        Self { kind, hidden, constraint_mask: None }
    }
}

/// Initial second moment of learned bodies.
pub const INITIAL_MOMENT: f64 = 0.1;
/// Floor added to the diagonal of the learned Cholesky factor.
pub const CHOLESKY_FLOOR: f64 = 1e-3;

/// `exp(sign·Σθ)·matrix` contribution to `M⁻¹ ⊗ I` or `M ⊗ I`.
#[derive(Clone, Debug)]
struct MassTerm {
    params: Vec<String>,
    sign: f64,
    matrix: Tensor,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Metadata {
    format: String,
    spec: ModelSpec,
    system: SystemConfig,
}

const METADATA_FORMAT: &str = "cartmech-model";

#[derive(Clone, Debug)]
pub struct Model {
    pub spec: ModelSpec,
    pub system_config: SystemConfig,
    /// Ground-truth structure: topology for constraints, oracle for angles.
    pub system: System,
    pub params: ParamStore,
    frozen: Vec<String>,
    nets: Vec<Mlp>,
    k_terms: Vec<MassTerm>,
    m_terms: Vec<MassTerm>,
    lin: Option<ConstraintLinearization>,
    chain: Option<(Tensor, Tensor)>,
    tri: Option<(Tensor, Tensor)>,
}

/// Model parameters and constants placed on a backend.
pub struct Prepared<T> {
    pub params: Bound<T>,
    geo: Option<FlowGeometry<T>>,
    m_flat: Option<T>,
    chain: Option<(T, T)>,
    tri: Option<(T, T)>,
}

/// `A ⊗ I_d` for an `n × n` matrix given as a closure, as a `(1, dn, dn)` tensor.
fn kron_tensor(n: usize, d: usize, a: impl Fn(usize, usize) -> f64) -> Tensor {
    let dn = d * n;
    let mut t = Tensor::zeros(Shape::new(1, dn, dn));
    let data = t.data_mut();
    for i in 0..n {
        for j in 0..n {
            let v = a(i, j);
            if v != 0.0 {
                for k in 0..d {
                    data[(k + d * i) * dn + k + d * j] = v;
                }
            }
        }
    }
    t
}

fn mass_terms(bodies: &[BodySpec], d: usize) -> (Vec<MassTerm>, Vec<MassTerm>, Vec<(String, f64, bool)>) {
    let n: usize = bodies.iter().map(BodySpec::points).sum();
    let (mut k_terms, mut m_terms, mut params) = (Vec::new(), Vec::new(), Vec::new());
    let mut start = 0;
    for (b, body) in bodies.iter().enumerate() {
        let np = body.points();
        let log_m = format!("mass.{b}.log_m");
        let init_m = if body.learn_mass { 0.0 } else { body.mass.ln() };
        params.push((log_m.clone(), init_m, body.learn_mass));
        k_terms.push(MassTerm {
            params: vec![log_m.clone()],
            sign: -1.0,
            matrix: kron_tensor(n, d, |i, j| {
                f64::from((start..start + np).contains(&i) && (start..start + np).contains(&j))
            }),
        });
        m_terms.push(MassTerm {
            params: vec![log_m.clone()],
            sign: 1.0,
            matrix: kron_tensor(n, d, |i, j| f64::from(i == start && j == start)),
        });
        for a in 0..body.moments.len() {
            let log_l = format!("mass.{b}.log_l{a}");
            let init_l = if body.learn_moments { INITIAL_MOMENT.ln() } else { body.moments[a].ln() };
            params.push((log_l.clone(), init_l, body.learn_moments));
            let p = start + 1 + a;
            k_terms.push(MassTerm {
                params: vec![log_m.clone(), log_l.clone()],
                sign: -1.0,
                matrix: kron_tensor(n, d, |i, j| f64::from(i == p && j == p)),
            });
            let e = |i: usize| {
                if i == start {
                    1.0
                } else if i == p {
                    -1.0
                } else {
                    0.0
                }
            };
            m_terms.push(MassTerm {
                params: vec![log_m.clone(), log_l],
                sign: 1.0,
                matrix: kron_tensor(n, d, |i, j| e(i) * e(j)),
            });
        }
        start += np;
    }
    (k_terms, m_terms, params)
}

fn assemble<B: Backend>(b: &B, p: &Bound<B::T>, terms: &[MassTerm]) -> B::T {
    let mut acc: Option<B::T> = None;
    for t in terms {
        let mut s = p.get(&t.params[0]).clone();
        for name in &t.params[1..] {
            s = b.add(&s, p.get(name));
        }
        let term = b.mul(&b.exp(&b.scale(&s, t.sign)), &b.constant(t.matrix.clone()));
        acc = Some(match acc {
            None => term,
            Some(a) => b.add(&a, &term),
        });
    }
    acc.expect("at least one body")
}

/// Constant maps from `sin q`, `cos q` (each `(B, 1, N)`) to interleaved chain positions.
fn chain_maps(lengths: &[f64]) -> (Tensor, Tensor) {
    let n = lengths.len();
    let mut ax = Tensor::zeros(Shape::new(1, n, 2 * n));
    let mut ay = Tensor::zeros(Shape::new(1, n, 2 * n));
    for k in 0..n {
        for i in k..n {
            ax.data_mut()[k * 2 * n + 2 * i] = lengths[k];
            ay.data_mut()[k * 2 * n + 2 * i + 1] = lengths[k];
        }
    }
    (ax, ay)
}

/// Selection matrices scattering packed lower-triangular entries into a row-major `N × N` matrix,
/// split into off-diagonal and diagonal parts.
fn triangle_maps(n: usize) -> (Tensor, Tensor) {
    let t = n * (n + 1) / 2;
    let mut off = Tensor::zeros(Shape::new(1, t, n * n));
    let mut diag = Tensor::zeros(Shape::new(1, t, n * n));
    let mut idx = 0;
    for i in 0..n {
        for j in 0..=i {
            let target = if i == j { &mut diag } else { &mut off };
            target.data_mut()[idx * n * n + i * n + j] = 1.0;
            idx += 1;
        }
    }
    (off, diag)
}

impl Model {
    /// Fresh model with Glorot-initialized networks and unit masses.
    pub fn new(spec: ModelSpec, system_config: SystemConfig, rng: &mut impl Rng) -> Result<Self> {
        if spec.hidden.is_empty() || spec.hidden.contains(&0) {
            return Err(LearnError::Config("hidden layer sizes must be positive".into()));
        }
        let mut system = System::build(&system_config)?;
        if let Some(mask) = &spec.constraint_mask {
            system = system.with_mask(mask)?;
        }
        let dn = system.dn();
        let mut params = ParamStore::new();
        let mut frozen = Vec::new();
        let (mut k_terms, mut m_terms, mut lin, mut chain, mut tri) = (vec![], vec![], None, None, None);
        let nets = match spec.kind {
            ModelKind::Chnn | ModelKind::Clnn => {
                let (k, m, mass_params) = mass_terms(&system.ctx.topology.bodies, system.d());
                for (name, init, learn) in mass_params {
                    params.insert(name.clone(), Tensor::scalar(init))?;
                    if !learn {
                        frozen.push(name);
                    }
                }
                k_terms = k;
                m_terms = m;
                lin = Some(ConstraintLinearization::new(&system.ctx.topology)?);
                vec![Mlp::with_hidden("V", dn, &spec.hidden, 1)]
            }
            ModelKind::Node => vec![Mlp::with_hidden("f", 2 * dn, &spec.hidden, 2 * dn)],
            ModelKind::NodeAngular | ModelKind::Hnn2d => {
                let SystemSpec::NPendulum { n, lengths, .. } = &system_config.spec else {
                    return Err(LearnError::Config(format!(
                        "{} models only support pendulum chains, not {}",
                        spec.kind.name(),
                        system_config.name()
                    )));
                };
                chain = Some(chain_maps(lengths));
                if spec.kind == ModelKind::NodeAngular {
                    vec![Mlp::with_hidden("f", 3 * n, &spec.hidden, 2 * n)]
                } else {
                    tri = Some(triangle_maps(*n));
                    vec![
                        Mlp::with_hidden("V", 2 * n, &spec.hidden, 1),
                        Mlp::with_hidden("L", 2 * n, &spec.hidden, n * (n + 1) / 2),
                    ]
                }
            }
        };
        for net in &nets {
            net.init(&mut params, rng)?;
        }
        Ok(Self { spec, system_config, system, params, frozen, nets, k_terms, m_terms, lin, chain, tri })
    }

    /// Model with the given parameters, checked against the expected names and shapes.
    pub fn from_params(spec: ModelSpec, system_config: SystemConfig, params: ParamStore) -> Result<Self> {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut model = Self::new(spec, system_config, &mut rng)?;
        if params.names() != model.params.names() {
            return Err(LearnError::Config(format!(
                "parameter names {:?} do not match the model ({:?})",
                params.names(),
                model.params.names()
            )));
        }
        for (name, value) in params.iter() {
            model.params.set(name, value.clone())?;
        }
        Ok(model)
    }

    /// Same parameters with a different constraint mask.
    pub fn with_mask(&self, mask: Option<Vec<bool>>) -> Result<Self> {
        let mut spec = self.spec.clone();
        spec.constraint_mask = mask;
        Self::from_params(spec, self.system_config.clone(), self.params.clone())
    }

    pub fn kind(&self) -> ModelKind {
        self.spec.kind
    }

    /// Whether the optimizer may update parameter `name`.
    pub fn trainable(&self, name: &str) -> bool {
        !self.frozen.iter().any(|f| f == name)
    }

    /// Flattened Cartesian position length.
    pub fn dn(&self) -> usize {
        self.system.dn()
    }

    /// Number of chain links for angular models.
    fn links(&self) -> usize {
        self.dn() / 2
    }

    /// Length of the model's internal state.
    pub fn state_dim(&self) -> usize {
        if self.kind().is_angular() {
            2 * self.links()
        } else {
            2 * self.dn()
        }
    }

    fn net(&self, prefix: &str) -> &Mlp {
        self.nets
            .iter()
            .find(|m| m.weight_name(0).starts_with(&format!("{prefix}.")))
            .expect("network present")
    }

    pub fn prepare<B: Backend>(&self, b: &B, store: &ParamStore) -> Prepared<B::T> {
        let params = store.bind(b);
        let mut geo = None;
        let mut m_flat = None;
        if let Some(lin) = &self.lin {
            let k = assemble(b, &params, &self.k_terms);
            geo = Some(FlowGeometry::from_parts(b, lin, k));
            if self.kind() == ModelKind::Chnn {
                m_flat = Some(assemble(b, &params, &self.m_terms));
            }
        }
        let pair = |p: &Option<(Tensor, Tensor)>| p.as_ref().map(|(a, c)| (b.constant(a.clone()), b.constant(c.clone())));
        Prepared { geo, m_flat, chain: pair(&self.chain), tri: pair(&self.tri), params }
    }

    /// Learned `M⁻¹ ⊗ I` and `M ⊗ I` of a constrained model, as `dn × dn` row-major data.
    pub fn learned_mass(&self) -> Option<(Tensor, Tensor)> {
        self.lin.as_ref()?;
        let p = self.params.bind(&Eager);
        Some((assemble(&Eager, &p, &self.k_terms), assemble(&Eager, &p, &self.m_terms)))
    }

    /// Learned `(mass, moments)` per body of a constrained model.
    pub fn learned_bodies(&self) -> Vec<(f64, Vec<f64>)> {
        if !self.kind().is_constrained() {
            return Vec::new();
        }
        self.system
            .ctx
            .topology
            .bodies
            .iter()
            .enumerate()
            .map(|(b, body)| {
                let get = |n: String| self.params.get(&n).map(|t| t.item().exp()).unwrap_or(f64::NAN);
                let m = get(format!("mass.{b}.log_m"));
                let l = (0..body.moments.len()).map(|a| get(format!("mass.{b}.log_l{a}"))).collect();
                (m, l)
            })
            .collect()
    }

    fn gradient_of_potential<B: Backend>(&self, b: &B, pre: &Prepared<B::T>, x: &B::T) -> B::T {
        let s = b.shape(x);
        let xr = b.reshape(x, Shape::new(1, s.batch, s.cols));
        let (_, g) = self.net("V").input_gradient(b, &pre.params, &xr);
        b.reshape(&g, s)
    }

    /// Angle features `(sin q, cos q)` as `(1, B, 2N)`.
    fn features<B: Backend>(&self, b: &B, q: &B::T) -> (B::T, B::T, B::T) {
        let s = b.shape(q);
        let (sq, cq) = (b.sin(q), b.cos(q));
        let f = b.reshape(&b.concat(&[&sq, &cq], 2), Shape::new(1, s.batch, 2 * s.cols));
        (f, sq, cq)
    }

    /// Learned Cholesky factor `L(q)` as `(B, N, N)` plus the raw network output and hidden states.
    fn cholesky<B: Backend>(&self, b: &B, pre: &Prepared<B::T>, feat: &B::T, n: usize) -> (B::T, B::T, Vec<B::T>) {
        let (off, diag) = pre.tri.as_ref().expect("triangle maps");
        let batch = b.shape(feat).rows;
        let (raw, hidden) = self.net("L").forward_cached(b, &pre.params, feat);
        let raw = b.reshape(&raw, Shape::new(batch, 1, n * (n + 1) / 2));
        let d = b.add_scalar(&b.softplus(&raw), CHOLESKY_FLOOR);
        let flat = b.add(&b.matmul(&raw, off), &b.matmul(&d, diag));
        (b.reshape(&flat, Shape::new(batch, n, n)), raw, hidden)
    }

    /// `ż` in the model's state space for `(B, 1, state_dim)` states.
    pub fn dynamics<B: Backend>(&self, b: &B, pre: &Prepared<B::T>, z: &B::T) -> cartmech_core::Result<B::T> {
        let batch = b.shape(z).batch;
        match self.kind() {
            ModelKind::Chnn => {
                let dn = self.dn();
                let geo = pre.geo.as_ref().expect("geometry");
                let x = b.slice(z, 2, 0, dn);
                let p = b.slice(z, 2, dn, dn);
                let gv = self.gradient_of_potential(b, pre, &x);
                let (xd, pd) = projected_hamiltonian_flow(b, geo, &x, &p, &gv)?;
                Ok(b.concat(&[&xd, &pd], 2))
            }
            ModelKind::Clnn => {
                let dn = self.dn();
                let geo = pre.geo.as_ref().expect("geometry");
                let x = b.slice(z, 2, 0, dn);
                let v = b.slice(z, 2, dn, dn);
                let gv = self.gradient_of_potential(b, pre, &x);
                let a = constrained_lagrangian_flow(b, geo, &x, &v, &gv)?;
                Ok(b.concat(&[&v, &a], 2))
            }
            ModelKind::Node => {
                let d = self.state_dim();
                let zr = b.reshape(z, Shape::new(1, batch, d));
                Ok(b.reshape(&self.net("f").forward(b, &pre.params, &zr), Shape::new(batch, 1, d)))
            }
            ModelKind::NodeAngular => {
                let n = self.links();
                let q = b.slice(z, 2, 0, n);
                let qd = b.slice(z, 2, n, n);
                let f = b.concat(&[&b.sin(&q), &b.cos(&q), &qd], 2);
                let f = b.reshape(&f, Shape::new(1, batch, 3 * n));
                Ok(b.reshape(&self.net("f").forward(b, &pre.params, &f), Shape::new(batch, 1, 2 * n)))
            }
            ModelKind::Hnn2d => {
                let n = self.links();
                let q = b.slice(z, 2, 0, n);
                let p = b.slice(z, 2, n, n);
                let (feat, sq, cq) = self.features(b, &q);
                let (l, raw, hidden) = self.cholesky(b, pre, &feat, n);
                let pcol = b.reshape(&p, Shape::new(batch, n, 1));
                let u = b.matmul_t(&l, true, &pcol, false);
                let qdot = b.reshape(&b.matmul(&l, &u), Shape::new(batch, 1, n));
                // T = ‖Lᵀp‖²/2 so ∂T/∂L = p uᵀ on the lower triangle.
                let gl = b.reshape(&b.matmul_t(&pcol, false, &u, true), Shape::new(batch, 1, n * n));
                let (off, diag) = pre.tri.as_ref().expect("triangle maps");
                let sig = b.add_scalar(&b.neg(&b.exp(&b.neg(&b.softplus(&raw)))), 1.0);
                let g_raw = b.add(
                    &b.matmul_t(&gl, false, off, true),
                    &b.mul(&b.matmul_t(&gl, false, diag, true), &sig),
                );
                let g_raw = b.reshape(&g_raw, Shape::new(1, batch, n * (n + 1) / 2));
                let g_kin = self.net("L").pullback(b, &pre.params, &hidden, &g_raw);
                let (_, g_pot) = self.net("V").input_gradient(b, &pre.params, &feat);
                let gf = b.reshape(&b.add(&g_kin, &g_pot), Shape::new(batch, 1, 2 * n));
                let g_sin = b.slice(&gf, 2, 0, n);
                let g_cos = b.slice(&gf, 2, n, n);
                let dh_dq = b.sub(&b.mul(&g_sin, &cq), &b.mul(&g_cos, &sq));
                Ok(b.concat(&[&qdot, &b.neg(&dh_dq)], 2))
            }
        }
    }

    /// Maps Cartesian `(x, ẋ)` data of shape `(B, 1, 2dn)` into the model's state space.
    pub fn encode<B: Backend>(&self, b: &B, pre: &Prepared<B::T>, z: &Tensor) -> cartmech_core::Result<B::T> {
        let dn = self.dn();
        let s = z.shape();
        assert_eq!((s.rows, s.cols), (1, 2 * dn), "encode expects (B, 1, {}) Cartesian states", 2 * dn);
        match self.kind() {
            ModelKind::Chnn => {
                let x = b.constant(z.slice(2, 0, dn));
                let v = b.constant(z.slice(2, dn, dn));
                let p = b.matmul(&v, pre.m_flat.as_ref().expect("mass"));
                Ok(b.concat(&[&x, &p], 2))
            }
            ModelKind::Clnn | ModelKind::Node => Ok(b.constant(z.clone())),
            ModelKind::NodeAngular | ModelKind::Hnn2d => {
                let oracle = self.system.pendulum_oracle().expect("pendulum chain");
                let n = self.links();
                let mut q = Vec::with_capacity(s.batch * n);
                let mut qd = Vec::with_capacity(s.batch * n);
                for row in z.data().chunks(2 * dn) {
                    let (a, r) = oracle.angles(&row[..dn], &row[dn..]);
                    q.extend(a);
                    qd.extend(r);
                }
                let q = b.constant(Tensor::new(Shape::new(s.batch, 1, n), q));
                let qd = b.constant(Tensor::new(Shape::new(s.batch, 1, n), qd));
                if self.kind() == ModelKind::NodeAngular {
                    return Ok(b.concat(&[&q, &qd], 2));
                }
                let (feat, _, _) = self.features(b, &q);
                let (l, _, _) = self.cholesky(b, pre, &feat, n);
                let minv = b.matmul_t(&l, false, &l, true);
                let p = b.solve(&minv, &b.reshape(&qd, Shape::new(s.batch, n, 1)))?;
                Ok(b.concat(&[&q, &b.reshape(&p, Shape::new(s.batch, 1, n))], 2))
            }
        }
    }

    /// Maps model states back to Cartesian `(x, ẋ)` of shape `(B, 1, 2dn)`.
    pub fn decode<B: Backend>(&self, b: &B, pre: &Prepared<B::T>, z: &B::T) -> B::T {
        let batch = b.shape(z).batch;
        match self.kind() {
            ModelKind::Chnn => {
                let dn = self.dn();
                let x = b.slice(z, 2, 0, dn);
                let p = b.slice(z, 2, dn, dn);
                let v = b.matmul(&p, &pre.geo.as_ref().expect("geometry").k);
                b.concat(&[&x, &v], 2)
            }
            ModelKind::Clnn | ModelKind::Node => z.clone(),
            ModelKind::NodeAngular | ModelKind::Hnn2d => {
                let n = self.links();
                let q = b.slice(z, 2, 0, n);
                let second = b.slice(z, 2, n, n);
                let qd = if self.kind() == ModelKind::Hnn2d {
                    let (feat, _, _) = self.features(b, &q);
                    let (l, _, _) = self.cholesky(b, pre, &feat, n);
                    let pcol = b.reshape(&second, Shape::new(batch, n, 1));
                    let u = b.matmul_t(&l, true, &pcol, false);
                    b.reshape(&b.matmul(&l, &u), Shape::new(batch, 1, n))
                } else {
                    second
                };
                let (ax, ay) = pre.chain.as_ref().expect("chain maps");
                let (sq, cq) = (b.sin(&q), b.cos(&q));
                let x = b.sub(&b.matmul(&sq, ax), &b.matmul(&cq, ay));
                let v = b.add(&b.matmul(&b.mul(&qd, &cq), ax), &b.matmul(&b.mul(&qd, &sq), ay));
                b.concat(&[&x, &v], 2)
            }
        }
    }

    /// RK4 rollout from Cartesian initial states. Returns `steps + 1` Cartesian states `(B, 1, 2dn)`.
    pub fn rollout<B: Backend>(
        &self,
        b: &B,
        pre: &Prepared<B::T>,
        z0: &Tensor,
        steps: usize,
        dt: f64,
        substeps: usize,
    ) -> cartmech_core::Result<Vec<B::T>> {
        let s0 = self.encode(b, pre, z0)?;
        let states = rollout_fixed_on(b, |z| self.dynamics(b, pre, z), &s0, steps, dt, substeps)?;
        Ok(states.iter().map(|s| self.decode(b, pre, s)).collect())
    }

    fn metadata(&self) -> Result<String> {
        Ok(serde_json::to_string(&Metadata {
            format: METADATA_FORMAT.into(),
            spec: self.spec.clone(),
            system: self.system_config.clone(),
        })?)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        Ok(checkpoint::to_bytes(&self.params, &self.metadata()?))
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let (params, meta) = checkpoint::from_bytes(buf)?;
        Self::from_checkpoint(params, &meta)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        checkpoint::save(path, &self.params, &self.metadata()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (params, meta) = checkpoint::load(path)?;
        Self::from_checkpoint(params, &meta)
    }

    fn from_checkpoint(params: ParamStore, meta: &str) -> Result<Self> {
        let meta: Metadata = serde_json::from_str(meta)?;
        if meta.format != METADATA_FORMAT {
            return Err(LearnError::Config(format!("checkpoint metadata format `{}` is not a model", meta.format)));
        }
        Self::from_params(meta.spec, meta.system, params)
    }
}
