//! Statevector simulation of the hybrid quantum-classical Hadamard transform.
//!
//! Only Hadamard gates act on a real initial state, so amplitudes stay real and
//! are stored as `f64`. Readout is either the exact Born distribution or a
//! seeded multinomial draw of `shots` outcomes.
//!
//! Measurement loses signs. The hybrid transform sidesteps that by replacing
//! `x[0]` with `b = eps + sum |x_k|`, which makes every coefficient of the
//! shifted vector strictly positive, then removing the shift's contribution
//! (`delta = (b - x[0]) / sqrt(N)`) from each recovered magnitude.

use alloc::format;
use alloc::vec::Vec;

use rand_distr::{Binomial, Distribution};

use crate::hadamard::{ensure_pow2, naive_ht, Convention};
use crate::scalar::fsqrt;
use crate::{derive_seed, seeded_rng, Error, Matrix, Result};

const NORM_TOLERANCE: f64 = 1e-9;

/// Real amplitudes of an `M`-qubit register, basis states in natural order.
#[derive(Debug, Clone, PartialEq)]
pub struct Statevector {
    amplitudes: Vec<f64>,
    num_qubits: u32,
}

impl Statevector {
    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn num_qubits(&self) -> u32 {
        self.num_qubits
    }

    pub fn norm(&self) -> f64 {
        fsqrt(self.amplitudes.iter().map(|a| a * a).sum::<f64>())
    }
}

/// How measurement probabilities are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasurementPlan {
    /// Squared amplitudes, no shot noise.
    Exact,
    /// Empirical frequencies over `shots` measurements drawn with `seed`.
    Sampled { shots: u64, seed: u64 },
}

impl MeasurementPlan {
    fn validate(&self) -> Result<()> {
        match self {
            MeasurementPlan::Sampled { shots: 0, .. } => Err(Error::Config(
                "sampled measurement needs at least one shot".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Same plan with an independent seed derived from `path`.
    pub fn derive(&self, path: &[u64]) -> Self {
        match *self {
            MeasurementPlan::Exact => MeasurementPlan::Exact,
            MeasurementPlan::Sampled { shots, seed } => MeasurementPlan::Sampled {
                shots,
                seed: derive_seed(seed, path),
            },
        }
    }
}

/// Choice of the positive shift margin added to `sum |x_k|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Epsilon {
    Absolute(f64),
    /// `r * (1 + sum |x_k|)`, scale-aware.
    Relative(f64),
}

impl Default for Epsilon {
    fn default() -> Self {
        Epsilon::Relative(1e-3)
    }
}

impl From<f64> for Epsilon {
    fn from(value: f64) -> Self {
        Epsilon::Absolute(value)
    }
}

impl Epsilon {
    fn resolve(self, abs_sum: f64) -> Result<f64> {
        let eps = match self {
            Epsilon::Absolute(e) => e,
            Epsilon::Relative(r) => r * (1.0 + abs_sum),
        };
        if !eps.is_finite() || eps <= 0.0 {
            return Err(Error::Config(format!(
                "epsilon must be positive and finite, got {eps}"
            )));
        }
        Ok(eps)
    }
}

/// Intermediate quantities of one hybrid transform.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridHtReport {
    pub result: Vec<f64>,
    /// Replacement for `x[0]`.
    pub b: f64,
    /// Norm of the shifted vector.
    pub c: f64,
    /// Per-coefficient correction removed from `c * sqrt(p_k)`.
    pub delta: f64,
    pub probabilities: Vec<f64>,
}

/// Loads a unit-norm vector as register amplitudes.
pub fn prepare_state(xbar: &[f64]) -> Result<Statevector> {
    ensure_pow2(xbar.len())?;
    let norm = fsqrt(xbar.iter().map(|a| a * a).sum::<f64>());
    if (norm - 1.0).abs() > NORM_TOLERANCE {
        return Err(Error::NotNormalized { norm });
    }
    Ok(Statevector {
        amplitudes: xbar.to_vec(),
        num_qubits: xbar.len().trailing_zeros(),
    })
}

/// Applies a Hadamard gate to every qubit, one gate at a time.
pub fn apply_hadamard_all(state: &Statevector) -> Statevector {
    let mut amps = state.amplitudes.clone();
    let r = core::f64::consts::FRAC_1_SQRT_2;
    for qubit in 0..state.num_qubits {
        let stride = 1usize << qubit;
        for base in (0..amps.len()).step_by(2 * stride) {
            for i in base..base + stride {
                let (a0, a1) = (amps[i], amps[i + stride]);
                amps[i] = r * (a0 + a1);
                amps[i + stride] = r * (a0 - a1);
            }
        }
    }
    Statevector {
        amplitudes: amps,
        num_qubits: state.num_qubits,
    }
}

/// Measures every qubit and returns the outcome distribution over basis states.
pub fn measure(state: &Statevector, plan: MeasurementPlan) -> Result<Vec<f64>> {
    plan.validate()?;
    let exact: Vec<f64> = state.amplitudes.iter().map(|a| a * a).collect();
    match plan {
        MeasurementPlan::Exact => Ok(exact),
        MeasurementPlan::Sampled { shots, seed } => {
            let counts = sample_counts(&exact, shots, seed)?;
            Ok(counts
                .into_iter()
                .map(|c| c as f64 / shots as f64)
                .collect())
        }
    }
}

/// Multinomial draw by sequential conditional binomials.
fn sample_counts(probabilities: &[f64], shots: u64, seed: u64) -> Result<Vec<u64>> {
    let mut rng = seeded_rng(seed);
    let mut remaining = shots;
    let mut mass_left = 1.0f64;
    let mut counts = Vec::with_capacity(probabilities.len());
    let last = probabilities.len() - 1;
    for (k, &p) in probabilities.iter().enumerate() {
        if k == last || remaining == 0 {
            counts.push(if k == last { remaining } else { 0 });
            continue;
        }
        let q = if mass_left > 0.0 {
            (p / mass_left).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let draw = Binomial::new(remaining, q)
            .map_err(|e| Error::Config(format!("binomial({remaining}, {q}): {e}")))?
            .sample(&mut rng);
        counts.push(draw);
        remaining -= draw;
        mass_left -= p;
    }
    Ok(counts)
}

/// Hybrid quantum-classical Hadamard transform of an arbitrary real vector.
///
/// In exact mode the result equals the symmetric-normalized transform.
pub fn hybrid_ht(
    x: &[f64],
    epsilon: impl Into<Epsilon>,
    plan: MeasurementPlan,
) -> Result<HybridHtReport> {
    ensure_pow2(x.len())?;
    plan.validate()?;
    let n = x.len();
    let abs_sum: f64 = x.iter().map(|v| v.abs()).sum();
    let b = epsilon.into().resolve(abs_sum)? + abs_sum;

    let mut shifted = x.to_vec();
    shifted[0] = b;
    let c = fsqrt(shifted.iter().map(|v| v * v).sum::<f64>());
    let xbar: Vec<f64> = shifted.iter().map(|v| v / c).collect();
    let state = prepare_state(&xbar)?;
    let evolved = apply_hadamard_all(&state);
    let probabilities = measure(&evolved, plan)?;

    let delta = (b - x[0]) / fsqrt(n as f64);
    let result = probabilities
        .iter()
        .map(|&p| c * fsqrt(p) - delta)
        .collect();
    Ok(HybridHtReport {
        result,
        b,
        c,
        delta,
        probabilities,
    })
}

/// Row pass then column pass of [`hybrid_ht`] over a matrix.
///
/// Every 1D call measures with its own seed derived from `(plan.seed, pass, index)`.
pub fn hybrid_ht2d(
    x: &Matrix<f64>,
    epsilon: impl Into<Epsilon>,
    plan: MeasurementPlan,
) -> Result<Matrix<f64>> {
    let epsilon = epsilon.into();
    let (rows, cols) = x.shape();
    ensure_pow2(rows)?;
    ensure_pow2(cols)?;
    plan.validate()?;
    let mut out = x.clone();
    for r in 0..rows {
        let report = hybrid_ht(out.row(r), epsilon, plan.derive(&[0, r as u64]))?;
        out.as_mut_slice()[r * cols..(r + 1) * cols].copy_from_slice(&report.result);
    }
    let mut column = alloc::vec![0.0; rows];
    for c in 0..cols {
        for (r, slot) in column.iter_mut().enumerate() {
            *slot = out.get(r, c);
        }
        let report = hybrid_ht(&column, epsilon, plan.derive(&[1, c as u64]))?;
        for (r, v) in report.result.into_iter().enumerate() {
            out.set(r, c, v);
        }
    }
    Ok(out)
}

/// True iff every symmetric-normalized Hadamard coefficient of `x` is strictly positive.
pub fn lemma1_check(x: &[f64]) -> bool {
    match naive_ht(x, Convention::Symmetric) {
        Ok(coeffs) => coeffs.iter().all(|&v| v > 0.0),
        Err(_) => false,
    }
}

/// The shifted vector `[b, x_1, ..., x_{N-1}]` whose transform is all positive.
pub fn shifted_input(x: &[f64], epsilon: impl Into<Epsilon>) -> Result<Vec<f64>> {
    ensure_pow2(x.len())?;
    let abs_sum: f64 = x.iter().map(|v| v.abs()).sum();
    let mut shifted = x.to_vec();
    shifted[0] = epsilon.into().resolve(abs_sum)? + abs_sum;
    Ok(shifted)
}
