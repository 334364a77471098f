//! Classic fixed-step fourth-order Runge-Kutta over flat state slices.

use std::ops::{Add, Mul};

use num_traits::Zero;

use crate::scalar::Real;

/// Element type of an RK4 state vector: closed under addition and real scaling.
pub trait StateElem<T>: Copy + Zero + Add<Output = Self> + Mul<T, Output = Self> + Send + Sync {}

impl<T, S> StateElem<T> for S where S: Copy + Zero + Add<Output = S> + Mul<T, Output = S> + Send + Sync {}

/// Reusable stage buffers for one state dimension.
#[derive(Debug, Clone)]
pub struct Rk4<S> {
    k1: Vec<S>,
    k2: Vec<S>,
    k3: Vec<S>,
    k4: Vec<S>,
    stage: Vec<S>,
}

impl<S: Copy + Zero> Rk4<S> {
    pub fn new(len: usize) -> Self {
        Self {
            k1: vec![S::zero(); len],
            k2: vec![S::zero(); len],
            k3: vec![S::zero(); len],
            k4: vec![S::zero(); len],
            stage: vec![S::zero(); len],
        }
    }

    pub fn len(&self) -> usize {
        self.k1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k1.is_empty()
    }

    /// Advances `y` from `t` to `t + dt`. `rhs(t, y, dy)` must overwrite `dy`.
    pub fn step<T, F>(&mut self, rhs: &mut F, t: T, dt: T, y: &mut [S])
    where
        T: Real,
        S: StateElem<T>,
        F: FnMut(T, &[S], &mut [S]),
    {
        debug_assert_eq!(y.len(), self.k1.len());
        let half = dt * T::half();
        let t_mid = t + half;

        rhs(t, y, &mut self.k1);
        for ((s, &yi), &k) in self.stage.iter_mut().zip(y.iter()).zip(&self.k1) {
            *s = yi + k * half;
        }
        rhs(t_mid, &self.stage, &mut self.k2);
        for ((s, &yi), &k) in self.stage.iter_mut().zip(y.iter()).zip(&self.k2) {
            *s = yi + k * half;
        }
        rhs(t_mid, &self.stage, &mut self.k3);
        for ((s, &yi), &k) in self.stage.iter_mut().zip(y.iter()).zip(&self.k3) {
            *s = yi + k * dt;
        }
        rhs(t + dt, &self.stage, &mut self.k4);

        let sixth = dt / T::lit(6.0);
        let two = T::two();
        for (i, yi) in y.iter_mut().enumerate() {
            let incr = self.k1[i] + (self.k2[i] + self.k3[i]) * two + self.k4[i];
            *yi = *yi + incr * sixth;
        }
    }
}

/// Uniform step grid covering `[t0, t0 + span]`.
///
/// Times are computed as `t0 + i * dt`, never accumulated, so splitting a run
/// at a step boundary reproduces the same grid up to rounding of `t0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepGrid<T> {
    pub t0: T,
    pub dt: T,
    pub steps: u64,
}

impl<T: Real> StepGrid<T> {
    #[inline]
    pub fn time(&self, i: u64) -> T {
        self.t0 + self.dt * T::from_u64(i).expect("step index representable")
    }

    pub fn end(&self) -> T {
        self.time(self.steps)
    }
}
