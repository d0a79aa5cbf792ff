//! Exact quantum reference in a truncated Fock basis for Hamiltonians that
//! are diagonal in the occupation numbers.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::dynamics::Xi;
use crate::error::{Error, Result};
use crate::hamiltonian::{CoherentLabel, KerrPairModel};

/// Probability mass allowed beyond the cutoff.
pub const TAIL_BOUND: f64 = 1e-12;
/// Extra levels added to the minimal cutoff.
pub const CUTOFF_MARGIN: usize = 5;

/// Poisson probabilities `p_0..=p_n_cut` for the given mean, computed in log
/// space.
pub fn poisson_weights(mean: f64, n_cut: usize) -> Vec<f64> {
    if mean == 0.0 {
        let mut w = vec![0.0; n_cut + 1];
        w[0] = 1.0;
        return w;
    }
    let ln_mean = mean.ln();
    let mut ln_p = -mean;
    let mut out = Vec::with_capacity(n_cut + 1);
    out.push(ln_p.exp());
    for n in 1..=n_cut {
        ln_p += ln_mean - (n as f64).ln();
        out.push(ln_p.exp());
    }
    out
}

/// `P(N > n_cut)` for a Poisson variable, summed term by term.
pub fn poisson_tail(mean: f64, n_cut: usize) -> f64 {
    if mean == 0.0 {
        return 0.0;
    }
    let ln_mean = mean.ln();
    let mut ln_p = -mean;
    for n in 1..=n_cut {
        ln_p += ln_mean - (n as f64).ln();
    }
    let mut tail = 0.0;
    let mut n = n_cut + 1;
    loop {
        ln_p += ln_mean - (n as f64).ln();
        let p = ln_p.exp();
        tail += p;
        if n as f64 > mean && (p == 0.0 || p < tail * 1e-17) {
            break;
        }
        n += 1;
    }
    tail
}

/// Smallest cutoff with tail below [`TAIL_BOUND`], plus [`CUTOFF_MARGIN`].
pub fn default_cutoff(mean: f64) -> usize {
    let mut n = mean.ceil() as usize;
    while poisson_tail(mean, n) >= TAIL_BOUND {
        n += 1;
    }
    n + CUTOFF_MARGIN
}

fn check_tail(mean: f64, n_cut: usize) -> Result<()> {
    let tail = poisson_tail(mean, n_cut);
    if tail >= TAIL_BOUND {
        return Err(Error::InsufficientCutoff { n_cut, tail });
    }
    Ok(())
}

/// Amplitudes over occupation numbers, row-major in `(n, m)` for two modes.
#[derive(Clone, Debug, PartialEq)]
pub struct FockState {
    n_modes: usize,
    n_cut: usize,
    amplitudes: Vec<Complex64>,
}

impl FockState {
    pub fn new(n_modes: usize, n_cut: usize, amplitudes: Vec<Complex64>) -> Result<Self> {
        let dim = n_cut + 1;
        let expected = if n_modes == 1 { dim } else { dim * dim };
        if !(n_modes == 1 || n_modes == 2) || amplitudes.len() != expected {
            return Err(Error::InvalidParameter(format!(
                "{n_modes}-mode state with cutoff {n_cut} needs {expected} amplitudes, got {}",
                amplitudes.len()
            )));
        }
        Ok(FockState {
            n_modes,
            n_cut,
            amplitudes,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn n_cut(&self) -> usize {
        self.n_cut
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    /// Amplitude of `|n>` (one mode) or `|n, m>` (two modes).
    pub fn amplitude(&self, n: usize, m: usize) -> Complex64 {
        match self.n_modes {
            1 => self.amplitudes[n],
            _ => self.amplitudes[n * (self.n_cut + 1) + m],
        }
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Tensor product of two single-mode states with a common cutoff.
    pub fn product(x: &FockState, y: &FockState) -> Result<Self> {
        if x.n_modes != 1 || y.n_modes != 1 || x.n_cut != y.n_cut {
            return Err(Error::InvalidParameter(
                "product needs two single-mode states with one cutoff".into(),
            ));
        }
        let amplitudes = x
            .amplitudes
            .iter()
            .flat_map(|a| y.amplitudes.iter().map(move |b| a * b))
            .collect();
        FockState::new(2, x.n_cut, amplitudes)
    }
}

/// `exp(-|z|^2/2) sum_n z^n / sqrt(n!) |n>`, renormalised after truncation.
pub fn coherent_fock(z: Complex64, n_cut: usize) -> Result<FockState> {
    check_tail(z.norm_sqr(), n_cut)?;
    let mut amps = Vec::with_capacity(n_cut + 1);
    let mut c = Complex64::new((-0.5 * z.norm_sqr()).exp(), 0.0);
    amps.push(c);
    for n in 1..=n_cut {
        c = c * z / (n as f64).sqrt();
        amps.push(c);
    }
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    for a in &mut amps {
        *a /= norm;
    }
    FockState::new(1, n_cut, amps)
}

/// `|z_x> (x) |z_y>` with the default cutoff for the larger amplitude unless
/// one is given.
pub fn coherent_pair(z: &[Complex64], n_cut: Option<usize>) -> Result<FockState> {
    if z.len() != 2 {
        return Err(Error::ModeMismatch { expected: 2, got: z.len() });
    }
    let n_cut = n_cut.unwrap_or_else(|| default_cutoff(z[0].norm_sqr().max(z[1].norm_sqr())));
    FockState::product(&coherent_fock(z[0], n_cut)?, &coherent_fock(z[1], n_cut)?)
}

/// Multiplies each amplitude by `exp(-i E T / hbar)` for a number-diagonal
/// spectrum `E(n, m)`.
pub fn evolve_diagonal<F: Fn(usize, usize) -> f64>(state: &FockState, level: F, duration: f64, hbar: f64) -> FockState {
    let dim = state.n_cut + 1;
    let amplitudes = state
        .amplitudes
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let (n, m) = if state.n_modes == 1 { (k, 0) } else { (k / dim, k % dim) };
            a * Complex64::from_polar(1.0, -level(n, m) * duration / hbar)
        })
        .collect();
    FockState {
        amplitudes,
        ..state.clone()
    }
}

pub fn evolve_kerr(state: &FockState, kerr: &KerrPairModel, duration: f64) -> Result<FockState> {
    if state.n_modes != 2 {
        return Err(Error::ModeMismatch { expected: 2, got: state.n_modes });
    }
    Ok(evolve_diagonal(state, |n, m| kerr.level(n, m), duration, kerr.hbar))
}

/// Reduced density matrix of mode `x`.
#[derive(Clone, Debug)]
pub struct ReducedDensity {
    pub matrix: DMatrix<Complex64>,
}

impl ReducedDensity {
    pub fn hermiticity_defect(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    /// Eigenvalues of the hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let herm = (&self.matrix + self.matrix.adjoint()) * Complex64::new(0.5, 0.0);
        let mut ev: Vec<f64> = herm.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// `Tr rho^2 = sum |rho_ij|^2` for hermitian `rho`.
    pub fn purity(&self) -> f64 {
        self.matrix.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Traces out mode `y`.
pub fn reduced_density(state: &FockState) -> Result<ReducedDensity> {
    if state.n_modes != 2 {
        return Err(Error::ModeMismatch { expected: 2, got: state.n_modes });
    }
    let dim = state.n_cut + 1;
    let psi = DMatrix::from_row_slice(dim, dim, &state.amplitudes);
    Ok(ReducedDensity {
        matrix: &psi * psi.adjoint(),
    })
}

pub fn reduced_purity(state: &FockState) -> Result<f64> {
    Ok(reduced_density(state)?.purity())
}

/// `sum_{n,m} p_n p_m exp(-4 |z0y|^2 sin^2(Gamma T (n - m) / 2))` with Poisson
/// weights of mean `|z0x|^2`.
pub fn kerr_exact_purity_sum(
    z0x: Complex64,
    z0y: Complex64,
    gamma: f64,
    duration: f64,
    n_cut: Option<usize>,
) -> Result<f64> {
    let mean = z0x.norm_sqr();
    let n_cut = n_cut.unwrap_or_else(|| default_cutoff(mean));
    check_tail(mean, n_cut)?;
    let p = poisson_weights(mean, n_cut);
    let k = 4.0 * z0y.norm_sqr();
    let phase = gamma * duration;
    // the summand depends on n - m only
    let mut total = 0.0;
    for d in -(n_cut as i64)..=(n_cut as i64) {
        let overlap: f64 = (0..=n_cut)
            .filter_map(|n| {
                let m = n as i64 - d;
                (0..=n_cut as i64).contains(&m).then(|| p[n] * p[m as usize])
            })
            .sum();
        if overlap == 0.0 {
            continue;
        }
        let s = (0.5 * phase * d as f64).sin();
        total += overlap * (-k * s * s).exp();
    }
    Ok(total)
}

/// `1 - 2x`.
pub fn short_time_purity(z0: &[Complex64], gamma: f64, duration: f64) -> f64 {
    1.0 - 2.0 * z0[0].norm_sqr() * z0[1].norm_sqr() * (gamma * duration).powi(2)
}

/// `<z2| exp(-i xi H T / hbar) |z1>` for a number-diagonal spectrum
/// `E(n, m)` (the second index is ignored for one mode).
pub fn exact_diagonal_propagator<F: Fn(usize, usize) -> f64>(
    level: F,
    label1: &CoherentLabel,
    label2: &CoherentLabel,
    duration: f64,
    xi: Xi,
    n_cut: Option<usize>,
) -> Result<Complex64> {
    let n = label1.n_modes();
    if label2.n_modes() != n {
        return Err(Error::ModeMismatch { expected: n, got: label2.n_modes() });
    }
    let mean = label1.z().iter().chain(label2.z()).map(|z| z.norm_sqr()).fold(0.0, f64::max);
    let n_cut = n_cut.unwrap_or_else(|| default_cutoff(mean));
    let build = |label: &CoherentLabel| -> Result<FockState> {
        if n == 1 {
            coherent_fock(label.z()[0], n_cut)
        } else {
            coherent_pair(label.z(), Some(n_cut))
        }
    };
    let ket = evolve_diagonal(&build(label1)?, level, duration * xi.sign(), label1.hbar());
    let bra = build(label2)?;
    Ok(bra.amplitudes.iter().zip(&ket.amplitudes).map(|(b, k)| b.conj() * k).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn coherent_states() {
        let vac = coherent_fock(c(0.0, 0.0), 3).unwrap();
        assert_eq!(vac.amplitudes()[0], c(1.0, 0.0));
        assert!(poisson_tail(1.0, 20) < 1e-12);
        let s = coherent_fock(c(1.0, 0.0), 20).unwrap();
        assert_relative_eq!(s.norm(), 1.0, epsilon = 1e-14);
        assert!(matches!(coherent_fock(c(3.0, 0.0), 5), Err(Error::InsufficientCutoff { .. })));
    }

    #[test]
    fn tail_matches_direct_sum() {
        let mean = 2.5;
        let w = poisson_weights(mean, 60);
        let direct: f64 = w[11..].iter().sum();
        assert_relative_eq!(poisson_tail(mean, 10), direct, max_relative = 1e-12);
    }

    #[test]
    fn bell_pair_purity() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let amps = vec![c(h, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(h, 0.0)];
        let s = FockState::new(2, 1, amps).unwrap();
        assert_relative_eq!(reduced_purity(&s).unwrap(), 0.5, epsilon = 1e-15);
        let prod = coherent_pair(&[c(0.5, 0.1), c(-0.2, 0.7)], None).unwrap();
        assert_relative_eq!(reduced_purity(&prod).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn exact_sum_reference_points() {
        let one = c(1.0, 0.0);
        assert_relative_eq!(kerr_exact_purity_sum(one, one, 0.1, 0.0, None).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(kerr_exact_purity_sum(one, one, 0.1, 2.0 * PI / 0.1, None).unwrap(), 1.0, epsilon = 1e-10);
        let half_period = kerr_exact_purity_sum(one, one, 1.0, PI, None).unwrap();
        let e = |k: f64| (-k).exp();
        assert_relative_eq!(half_period, (1.0 + 2.0 * e(4.0) - e(8.0)) / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn sum_agrees_with_state_route() {
        let kerr = KerrPairModel::new(1.0, 1.3, 0.2, 1.0).unwrap();
        let z = [c(0.9, 0.3), c(-0.6, 0.5)];
        let state = coherent_pair(&z, None).unwrap();
        for t in [0.3, 1.7, 5.0] {
            let evolved = evolve_kerr(&state, &kerr, t).unwrap();
            let rho = reduced_density(&evolved).unwrap();
            assert!(rho.hermiticity_defect() < 1e-12);
            assert_relative_eq!(rho.trace().re, 1.0, epsilon = 1e-10);
            assert!(rho.eigenvalues()[0] > -1e-10);
            let sum = kerr_exact_purity_sum(z[0], z[1], kerr.gamma, t, None).unwrap();
            assert_relative_eq!(rho.purity(), sum, epsilon = 1e-10);
        }
    }

    #[test]
    fn harmonic_propagator_from_fock_sum() {
        let l1 = CoherentLabel::new(&[c(0.5, -0.5)], 1.0).unwrap();
        let l2 = CoherentLabel::new(&[c(1.0, 0.5)], 1.0).unwrap();
        let t = 1.3;
        for xi in [Xi::Plus, Xi::Minus] {
            let k = exact_diagonal_propagator(|n, _| n as f64 + 0.5, &l1, &l2, t, xi, None).unwrap();
            let exact = crate::propagator::exact_ho_propagator(1.0, &l1, &l2, t, xi).unwrap();
            assert!((k - exact).norm() < 1e-12);
        }
    }
}
