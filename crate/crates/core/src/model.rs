//! Agent and network models.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::linalg::{cholesky, Matrix};
use crate::mechanism::{noise_scale, output_sensitivity, privatize_static, AdjacencyParams, NoiseScale, PrivacyParams};
use crate::rng::{substream, StreamRole};

/// One agent: dynamics xᵢ(k+1) = Aᵢxᵢ(k) + Bᵢuᵢ(k) + wᵢ(k), output yᵢ = Cᵢxᵢ,
/// and the privacy requirements it places on its output and reference limit.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentModel {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    /// Process-noise covariance Wᵢ.
    pub w: Matrix,
    /// (εᵢ, δᵢ) protecting the output trajectory.
    pub output_privacy: PrivacyParams,
    /// (ε̄ᵢ, δ̄ᵢ) protecting the reference limit.
    pub reference_privacy: PrivacyParams,
    pub adjacency: AdjacencyParams,
    /// Sensitivity of the reference-limit query; `None` means βᵢ.
    pub static_sensitivity: Option<f64>,
    /// Reference limit x̄ᵢ.
    pub reference_limit: Vec<f64>,
    /// Public initial estimate x̂ᵢ(0).
    pub initial_mean: Vec<f64>,
    /// True initial state; `None` lets the simulator draw it around `initial_mean`.
    pub initial_state: Option<Vec<f64>>,
}

impl AgentModel {
    pub fn state_dim(&self) -> usize {
        self.a.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.c.rows()
    }

    /// Checks shapes and definiteness. `label` prefixes error keys.
    pub fn validate(&self, label: &str) -> Result<()> {
        let n = self.a.rows();
        let bad = |key: &str, reason: String| Err(Error::validation(format!("{label}.{key}"), reason));
        if n == 0 || !self.a.is_square() {
            return bad(
                "a",
                format!("must be square and nonempty, got {}x{}", self.a.rows(), self.a.cols()),
            );
        }
        if self.b.rows() != n || self.b.cols() == 0 {
            return bad(
                "b",
                format!("must be {n}xm with m >= 1, got {}x{}", self.b.rows(), self.b.cols()),
            );
        }
        if self.c.cols() != n || self.c.rows() == 0 {
            return bad(
                "c",
                format!("must be qx{n} with q >= 1, got {}x{}", self.c.rows(), self.c.cols()),
            );
        }
        if self.w.shape() != (n, n) {
            return bad("w", format!("must be {n}x{n}, got {}x{}", self.w.rows(), self.w.cols()));
        }
        if !self.w.is_symmetric(1e-9) || cholesky(&self.w).is_err() {
            return bad("w", "must be symmetric positive definite".into());
        }
        for (key, v) in [
            ("reference_limit", &self.reference_limit),
            ("initial_mean", &self.initial_mean),
        ] {
            if v.len() != n {
                return bad(key, format!("must have length {n}, got {}", v.len()));
            }
        }
        if let Some(x0) = &self.initial_state {
            if x0.len() != n {
                return bad("initial_state", format!("must have length {n}, got {}", x0.len()));
            }
        }
        if let Some(s) = self.static_sensitivity {
            if !(s.is_finite() && s >= 0.0) {
                return bad("static_sensitivity", format!("must be finite and >= 0, got {s}"));
            }
        }
        self.output_privacy
            .validate()
            .map_err(|e| Error::validation(format!("{label}.output_privacy"), e.to_string()))?;
        self.reference_privacy
            .validate()
            .map_err(|e| Error::validation(format!("{label}.reference_privacy"), e.to_string()))?;
        Ok(())
    }

    /// σᵢ for the output mechanism: noise_scale(εᵢ, δᵢ, s₁(Cᵢ)bᵢ).
    pub fn output_noise_scale(&self) -> Result<NoiseScale> {
        noise_scale(
            self.output_privacy,
            output_sensitivity(&self.c, self.adjacency.trajectory_radius)?,
        )
    }

    /// σ̄ᵢ for the reference mechanism.
    pub fn reference_noise_scale(&self) -> Result<NoiseScale> {
        noise_scale(
            self.reference_privacy,
            self.static_sensitivity.unwrap_or(self.adjacency.static_radius),
        )
    }
}

/// Index ranges of one agent inside the aggregate vectors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AgentBlock {
    pub state: Range<usize>,
    pub input: Range<usize>,
    pub output: Range<usize>,
}

/// Block-diagonal network model together with the cost weights and the
/// privatized reference limit the cloud works with.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkModel {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub w: Matrix,
    /// Output privacy noise covariance V.
    pub v: Matrix,
    /// Reference privacy noise covariance W̄.
    pub w_bar: Matrix,
    pub q: Matrix,
    pub r: Matrix,
    /// True reference limit x̄ (never seen by the cloud).
    pub x_bar: Vec<f64>,
    /// Privatized reference limit x̃.
    pub x_tilde: Vec<f64>,
    pub blocks: Vec<AgentBlock>,
}

fn require_pd(name: &str, m: &Matrix) -> Result<()> {
    if !m.is_symmetric(1e-9) {
        return Err(Error::NotPositiveDefinite(format!("{name} is not symmetric")));
    }
    cholesky(m).map_err(|e| Error::NotPositiveDefinite(format!("{name}: {e}")))?;
    Ok(())
}

impl NetworkModel {
    /// Builds a network from aggregate matrices treated as a single block.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: Matrix,
        b: Matrix,
        c: Matrix,
        w: Matrix,
        v: Matrix,
        w_bar: Matrix,
        q: Matrix,
        r: Matrix,
        x_bar: Vec<f64>,
        x_tilde: Vec<f64>,
    ) -> Result<Self> {
        let blocks = vec![AgentBlock {
            state: 0..a.rows(),
            input: 0..b.cols(),
            output: 0..c.rows(),
        }];
        let net = Self {
            a,
            b,
            c,
            w,
            v,
            w_bar,
            q,
            r,
            x_bar,
            x_tilde,
            blocks,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn state_dim(&self) -> usize {
        self.a.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.c.rows()
    }

    pub fn agent_count(&self) -> usize {
        self.blocks.len()
    }

    /// Shape checks plus definiteness of Q and R.
    pub fn validate(&self) -> Result<()> {
        let (n, m, p) = (self.a.rows(), self.b.cols(), self.c.rows());
        let checks: [(&str, &Matrix, (usize, usize)); 7] = [
            ("A", &self.a, (n, n)),
            ("B", &self.b, (n, m)),
            ("C", &self.c, (p, n)),
            ("W", &self.w, (n, n)),
            ("V", &self.v, (p, p)),
            ("W̄", &self.w_bar, (n, n)),
            ("Q", &self.q, (n, n)),
        ];
        for (name, mat, shape) in checks {
            if mat.shape() != shape {
                return Err(Error::dim(format!(
                    "{name} must be {}x{}, got {}x{}",
                    shape.0,
                    shape.1,
                    mat.rows(),
                    mat.cols()
                )));
            }
        }
        if self.r.shape() != (m, m) {
            return Err(Error::dim(format!(
                "R must be {m}x{m}, got {}x{}",
                self.r.rows(),
                self.r.cols()
            )));
        }
        if self.x_bar.len() != n || self.x_tilde.len() != n {
            return Err(Error::dim(format!("reference vectors must have length {n}")));
        }
        require_pd("Q", &self.q)?;
        require_pd("R", &self.r)?;
        Ok(())
    }

    /// Same network with different privacy noise covariances.
    pub fn with_noise(&self, v: Matrix, w_bar: Matrix) -> Result<Self> {
        let mut net = self.clone();
        net.v = v;
        net.w_bar = w_bar;
        net.validate()?;
        Ok(net)
    }

    /// Same network with V = σ²I and W̄ = σ̄²I.
    pub fn with_uniform_noise(&self, sigma: f64, sigma_bar: f64) -> Result<Self> {
        self.with_noise(
            Matrix::identity(self.output_dim()).scale(sigma * sigma),
            Matrix::identity(self.state_dim()).scale(sigma_bar * sigma_bar),
        )
    }

    /// Same network with a different privatized reference.
    pub fn with_reference(&self, x_tilde: Vec<f64>) -> Result<Self> {
        let mut net = self.clone();
        net.x_tilde = x_tilde;
        net.validate()?;
        Ok(net)
    }
}

/// Aggregates agents into the network model and privatizes each reference
/// limit with its own substream of `seed`.
pub fn assemble_network(agents: &[AgentModel], q: &Matrix, r: &Matrix, seed: u64) -> Result<NetworkModel> {
    let mut x_tilde = Vec::new();
    for (i, ag) in agents.iter().enumerate() {
        let mut rng = substream(seed, i as u64, StreamRole::ReferenceNoise);
        x_tilde.extend(privatize_static(
            &ag.reference_limit,
            ag.reference_noise_scale()?,
            &mut rng,
        ));
    }
    assemble_network_with_reference(agents, q, r, x_tilde)
}

/// Aggregates agents using a caller-supplied privatized reference x̃.
pub fn assemble_network_with_reference(
    agents: &[AgentModel],
    q: &Matrix,
    r: &Matrix,
    x_tilde: Vec<f64>,
) -> Result<NetworkModel> {
    if agents.is_empty() {
        return Err(Error::validation("agents", "at least one agent is required"));
    }
    let mut blocks = Vec::with_capacity(agents.len());
    let (mut ns, mut ms, mut ps) = (0, 0, 0);
    let mut v_diag = Vec::new();
    let mut wbar_diag = Vec::new();
    let mut x_bar = Vec::new();
    for (i, ag) in agents.iter().enumerate() {
        ag.validate(&format!("agents[{i}]"))?;
        let (n, m, p) = (ag.state_dim(), ag.input_dim(), ag.output_dim());
        blocks.push(AgentBlock {
            state: ns..ns + n,
            input: ms..ms + m,
            output: ps..ps + p,
        });
        ns += n;
        ms += m;
        ps += p;
        let s = ag.output_noise_scale()?.variance();
        v_diag.extend(std::iter::repeat(s).take(p));
        let sb = ag.reference_noise_scale()?.variance();
        wbar_diag.extend(std::iter::repeat(sb).take(n));
        x_bar.extend_from_slice(&ag.reference_limit);
    }
    let collect = |f: fn(&AgentModel) -> &Matrix| agents.iter().map(|a| f(a).clone()).collect::<Vec<_>>();
    let net = NetworkModel {
        a: Matrix::block_diag(&collect(|a| &a.a)),
        b: Matrix::block_diag(&collect(|a| &a.b)),
        c: Matrix::block_diag(&collect(|a| &a.c)),
        w: Matrix::block_diag(&collect(|a| &a.w)),
        v: Matrix::from_diag(&v_diag),
        w_bar: Matrix::from_diag(&wbar_diag),
        q: q.clone(),
        r: r.clone(),
        x_bar,
        x_tilde,
        blocks,
    };
    net.validate()?;
    Ok(net)
}
