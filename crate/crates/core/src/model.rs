//! The periodically rocked open bosonic dimer.
//!
//! States live in the fixed-`N` sector spanned by `|n>`, `n = 0..=N`, where
//! `n` counts bosons on site 1 and site 2 holds the remaining `N - n`.
//! Every operator is tridiagonal (or diagonal) in that basis.

use ndarray::{Array2, ArrayView2};
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::band::Banded;
use crate::error::{Error, Result};
use crate::scalar::{cr, Real, C};

/// Physical parameters of the dimer and its drive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + for<'a> Deserialize<'a>")]
pub struct ModelParams<T> {
    /// Tunneling amplitude `J`.
    #[serde(rename = "J")]
    pub tunneling: T,
    /// On-site interaction strength `U`.
    #[serde(rename = "U")]
    pub interaction: T,
    /// Dissipative coupling `gamma`.
    pub gamma: T,
    /// Modulation amplitude `A` of `eps(t) = A sin(2 pi t / T)`.
    #[serde(rename = "A")]
    pub amplitude: T,
    /// Modulation period `T`.
    #[serde(rename = "T")]
    pub period: T,
    /// Total boson number `N`.
    #[serde(rename = "N")]
    pub particles: usize,
}

impl<T: Real> ModelParams<T> {
    /// Reference drive (`J = 1`, `gamma = 0.1`, `A = 3.4`, `T = 2 pi`) at the
    /// given interaction and particle number.
    pub fn reference(interaction: T, particles: usize) -> Self {
        Self {
            tunneling: T::one(),
            interaction,
            gamma: T::lit(0.1),
            amplitude: T::lit(3.4),
            period: T::TAU(),
            particles,
        }
    }

    pub fn with_interaction(mut self, u: T) -> Self {
        self.interaction = u;
        self
    }

    pub fn with_particles(mut self, n: usize) -> Self {
        self.particles = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::InvalidParticleNumber(0));
        }
        let finite = [self.tunneling, self.interaction, self.gamma, self.amplitude, self.period]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("non-finite model parameter".into()));
        }
        if self.period <= T::zero() {
            return Err(Error::InvalidParameter(format!("period must be positive, got {}", self.period)));
        }
        if self.gamma < T::zero() {
            return Err(Error::InvalidParameter(format!("gamma must be non-negative, got {}", self.gamma)));
        }
        Ok(())
    }

    /// Drive frequency `2 pi / T`.
    #[inline]
    pub fn omega(&self) -> T {
        T::TAU() / self.period
    }

    /// On-site modulation `eps(t) = A sin(Omega t)`.
    #[inline]
    pub fn modulation(&self, t: T) -> T {
        self.amplitude * (self.omega() * t).sin()
    }

    /// Prefactor `2U/N` of the interaction term.
    #[inline]
    pub fn interaction_prefactor(&self) -> T {
        T::two() * self.interaction / T::from_usize_lossy(self.particles)
    }

    /// Prefactor `gamma/N` of the dissipator.
    #[inline]
    pub fn dissipation_rate(&self) -> T {
        self.gamma / T::from_usize_lossy(self.particles)
    }
}

/// Fock-sector matrices of the dimer.
#[derive(Debug, Clone)]
pub struct DimerOperators<T: Real> {
    /// Hilbert-space dimension `N + 1`.
    pub dim: usize,
    /// `b1^dag b2 + b2^dag b1`.
    pub hop: Banded<T>,
    /// `n2 - n1`.
    pub imbalance: Banded<T>,
    /// `sum_g n_g (n_g - 1)`.
    pub interaction: Banded<T>,
    /// `V = (b1^dag + b2^dag)(b1 - b2)`.
    pub jump: Banded<T>,
    /// `V^dag V`, pentadiagonal.
    pub jump_dag_jump: Banded<T>,
}

/// Off-diagonal hopping element `<n+1| b1^dag b2 |n> = sqrt((n+1)(N-n))`.
#[inline]
fn raise_element<T: Real>(n: usize, total: usize) -> T {
    T::from_usize_lossy((n + 1) * (total - n)).sqrt()
}

impl<T: Real> DimerOperators<T> {
    pub fn build(particles: usize) -> Result<Self> {
        if particles == 0 {
            return Err(Error::InvalidParticleNumber(0));
        }
        let total = particles;
        let dim = total + 1;

        let mut hop = Banded::zeros(dim, 1, 1);
        let mut jump = Banded::zeros(dim, 1, 1);
        for n in 0..total {
            let el = raise_element::<T>(n, total);
            hop.set(n + 1, n, cr(el));
            hop.set(n, n + 1, cr(el));
            // V = n1 - n2 - b1^dag b2 + b2^dag b1
            jump.set(n + 1, n, cr(-el));
            jump.set(n, n + 1, cr(el));
        }
        for n in 0..dim {
            jump.set(n, n, cr(T::from_usize_lossy(2 * n) - T::from_usize_lossy(total)));
        }

        let imbalance: Vec<T> = (0..dim)
            .map(|n| T::from_usize_lossy(total - n) - T::from_usize_lossy(n))
            .collect();
        let interaction: Vec<T> = (0..dim)
            .map(|n| {
                let m = total - n;
                T::from_usize_lossy(n * n.saturating_sub(1) + m * m.saturating_sub(1))
            })
            .collect();

        let jump_dag_jump = jump.adjoint().matmul(&jump)?;
        Ok(Self {
            dim,
            hop,
            imbalance: Banded::diagonal(&imbalance),
            interaction: Banded::diagonal(&interaction),
            jump,
            jump_dag_jump,
        })
    }

    #[inline]
    pub fn particles(&self) -> usize {
        self.dim - 1
    }

    pub(crate) fn check(&self, params: &ModelParams<T>) -> Result<()> {
        if params.particles + 1 != self.dim {
            return Err(Error::DimensionMismatch {
                expected: params.particles + 1,
                found: self.dim,
            });
        }
        Ok(())
    }

    /// Time-independent part `-J hop + (2U/N) interaction`.
    pub fn static_hamiltonian(&self, params: &ModelParams<T>) -> Result<Banded<T>> {
        self.check(params)?;
        self.hop
            .scale(cr(-params.tunneling))
            .add_scaled(&self.interaction, cr(params.interaction_prefactor()))
    }

    /// Bounds used to pick a stable RK4 step: `(offset, radius, decay)` with
    /// `||H(t) - offset|| <= radius` for every `t` and `||V^dag V|| <= decay`.
    ///
    /// The hop and imbalance terms form the spin rotation
    /// `-2J Jx - 2 eps Jz` whose norm is exactly `N sqrt(J^2 + eps^2)`.
    pub fn spectral_bounds(&self, params: &ModelParams<T>) -> (T, T, T) {
        let g = params.interaction_prefactor();
        let (lo, hi) = (0..self.dim)
            .map(|n| g * self.interaction.get(n, n).re)
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), v| (lo.min(v), hi.max(v)));
        let nn = T::from_usize_lossy(self.particles());
        let rotation = nn * params.tunneling.hypot(params.amplitude);
        let offset = (lo + hi) * T::half();
        let radius = rotation + (hi - lo) * T::half();
        // V = 2 a_s^dag a_a; its largest singular value is 2 max_k sqrt((k+1)(N-k)).
        let total = self.particles();
        let vmax = (0..total)
            .map(|k| raise_element::<T>(k, total))
            .fold(T::zero(), T::max)
            * T::two();
        (offset, radius, vmax * vmax)
    }
}

/// `H(t) = -J hop + (2U/N) interaction + A sin(2 pi t / T) imbalance`.
pub fn hamiltonian_at<T: Real>(params: &ModelParams<T>, ops: &DimerOperators<T>, t: T) -> Result<Banded<T>> {
    ops.static_hamiltonian(params)?
        .add_scaled(&ops.imbalance, cr(params.modulation(t)))
}

/// `D(rho) = (gamma/N) (V rho V^dag - {V^dag V, rho} / 2)`.
pub fn dissipator_apply<T: Real>(
    params: &ModelParams<T>,
    ops: &DimerOperators<T>,
    rho: ArrayView2<'_, C<T>>,
) -> Result<Array2<C<T>>> {
    ops.check(params)?;
    let d = ops.dim;
    if rho.dim() != (d, d) {
        return Err(Error::DimensionMismatch { expected: d, found: rho.nrows() });
    }
    let rate = params.dissipation_rate();
    let src: Vec<C<T>> = rho.iter().copied().collect();
    let mut out = vec![C::zero(); d * d];
    if rate == T::zero() {
        return Ok(Array2::from_shape_vec((d, d), out).expect("square"));
    }
    let mut tmp = vec![C::zero(); d * d];
    ops.jump.left_mul_acc(C::new(T::one(), T::zero()), &src, &mut tmp);
    ops.jump.adjoint().right_mul_acc(cr(rate), &tmp, &mut out);
    let half = cr(-rate * T::half());
    ops.jump_dag_jump.left_mul_acc(half, &src, &mut out);
    ops.jump_dag_jump.right_mul_acc(half, &src, &mut out);
    Ok(Array2::from_shape_vec((d, d), out).expect("square"))
}

/// The in-phase state `(b1^dag + b2^dag)^N |vac>`, normalized; `V` annihilates it.
pub fn symmetric_state<T: Real>(particles: usize) -> Vec<C<T>> {
    let n = particles;
    let ln2 = T::LN_2();
    (0..=n)
        .map(|k| {
            let log_amp = T::half() * (ln_binomial::<T>(n, k) - T::from_usize_lossy(n) * ln2);
            cr(log_amp.exp())
        })
        .collect()
}

/// `ln C(n, k)` via a running sum of logarithms.
pub(crate) fn ln_binomial<T: Real>(n: usize, k: usize) -> T {
    let k = k.min(n - k);
    (0..k)
        .map(|i| (T::from_usize_lossy(n - i) / T::from_usize_lossy(i + 1)).ln())
        .sum()
}
