//! Brute-force reference for the finite-bath model.
//!
//! The Hamiltonian is assembled from explicit Kronecker products of Pauli and
//! truncated ladder matrices, and `exp(−iHt)` is computed by scaling and squaring a
//! truncated Taylor series. Nothing here calls into the eigendecomposition path.

#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    CMat::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

fn kron_all(ops: &[CMat]) -> CMat {
    let mut out = ops[0].clone();
    for op in &ops[1..] {
        out = kron(&out, op);
    }
    out
}

fn annihilation(levels: usize) -> CMat {
    CMat::from_fn(levels, levels, |i, j| if j == i + 1 { c((j as f64).sqrt()) } else { c(0.0) })
}

/// Model parameters, mirrored from the library's documented conventions.
#[derive(Debug, Clone, Copy)]
pub struct Model {
    pub alpha: f64,
    pub omega_c: f64,
    pub n_modes: usize,
    pub n_max: usize,
    pub beta: f64,
    pub delta: f64,
    pub epsilon: f64,
}

impl Model {
    pub fn frequencies(&self) -> Vec<f64> {
        let dw = 2.0 * self.omega_c / self.n_modes as f64;
        (1..=self.n_modes).map(|i| dw * i as f64).collect()
    }

    pub fn couplings(&self) -> Vec<f64> {
        let dw = 2.0 * self.omega_c / self.n_modes as f64;
        self.frequencies()
            .iter()
            .map(|&w| {
                let j = 2.0 * self.alpha / std::f64::consts::PI * w * (-w / self.omega_c).exp();
                (j * dw).sqrt()
            })
            .collect()
    }

    pub fn dim_env(&self) -> usize {
        (self.n_max + 1).pow(self.n_modes as u32)
    }

    pub fn hamiltonian(&self) -> CMat {
        let levels = self.n_max + 1;
        let id_mode = CMat::identity(levels, levels);
        let id2 = CMat::identity(2, 2);
        let sx = CMat::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)]);
        let sz = CMat::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)]);
        let a = annihilation(levels);
        let ad = a.adjoint();
        let x = &a + &ad;
        let num = &ad * &a;

        let mut ops = vec![id2.clone()];
        ops.extend(std::iter::repeat_n(id_mode.clone(), self.n_modes));
        let id_full = kron_all(&ops);

        let mut h = id_full.clone() * c(0.0);
        let mut spin = ops.clone();
        spin[0] = sx.clone();
        h += kron_all(&spin) * c(0.5 * self.delta);
        spin[0] = sz.clone();
        h += kron_all(&spin) * c(0.5 * self.epsilon);

        for (i, (&w, &ci)) in self.frequencies().iter().zip(&self.couplings()).enumerate() {
            let mut o = ops.clone();
            o[i + 1] = num.clone();
            h += kron_all(&o) * c(w);
            let mut o = ops.clone();
            o[0] = sz.clone();
            o[i + 1] = x.clone();
            h += kron_all(&o) * c(0.5 * ci);
        }
        h
    }

    /// Gibbs weights over Fock states with the same truncation rule
    /// (largest first until the retained mass reaches 1 − 1e−6), renormalized.
    pub fn gibbs(&self) -> Vec<(usize, f64)> {
        let levels = self.n_max + 1;
        let w = self.frequencies();
        let energies: Vec<f64> = (0..self.dim_env())
            .map(|e| {
                let mut rest = e;
                let mut energy = 0.0;
                for i in (0..self.n_modes).rev() {
                    energy += (rest % levels) as f64 * w[i];
                    rest /= levels;
                }
                energy
            })
            .collect();
        let b: Vec<f64> = energies.iter().map(|&e| (-self.beta * e).exp()).collect();
        let z: f64 = b.iter().sum();
        let mut idx: Vec<usize> = (0..b.len()).collect();
        idx.sort_by(|&x, &y| b[y].partial_cmp(&b[x]).unwrap().then(x.cmp(&y)));
        let mut kept = Vec::new();
        let mut cum = 0.0;
        for i in idx {
            cum += b[i] / z;
            kept.push(i);
            if cum >= 1.0 - 1e-6 {
                break;
            }
        }
        kept.into_iter().map(|i| (i, b[i] / z / cum)).collect()
    }
}

fn one_norm(m: &CMat) -> f64 {
    (0..m.ncols()).map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
}

/// `exp(−iHt)` by scaling and squaring of a 30-term Taylor series.
pub fn propagator(h: &CMat, t: f64) -> CMat {
    let a = h * Complex64::new(0.0, -t);
    let norm = one_norm(&a);
    let mut s = 0;
    while norm / 2f64.powi(s) > 0.25 {
        s += 1;
    }
    let a = a * c(1.0 / 2f64.powi(s));
    let n = a.nrows();
    let mut out = CMat::identity(n, n);
    let mut term = CMat::identity(n, n);
    for k in 1..=30 {
        term = &term * &a * c(1.0 / k as f64);
        out += &term;
    }
    for _ in 0..s {
        out = &out * &out;
    }
    out
}

/// Left-well probability after evolving `|L⟩ ⊗ |e⟩`.
fn p_left(u: &CMat, e: usize, dim_env: usize) -> f64 {
    (0..dim_env).map(|r| u[(r, e)].norm_sqr()).sum()
}

pub fn thermal_correlator(model: &Model, t: f64) -> f64 {
    let u = propagator(&model.hamiltonian(), t);
    let d = model.dim_env();
    model
        .gibbs()
        .into_iter()
        .map(|(e, w)| {
            let p = p_left(&u, e, d);
            w * p * (1.0 - p)
        })
        .sum()
}

/// `|L⟩ ⊗ |vacuum⟩` evolved for `t_p`.
pub fn prepared_state(model: &Model, t_p: f64) -> Vec<Complex64> {
    let u = propagator(&model.hamiltonian(), t_p);
    u.column(0).iter().copied().collect()
}

/// `|⟨P_LL|P_LR⟩|` of the prepared state.
pub fn branch_overlap(model: &Model, t_p: f64) -> f64 {
    let psi = prepared_state(model, t_p);
    let d = model.dim_env();
    let (l, r) = psi.split_at(d);
    let nl: f64 = l.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let nr: f64 = r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let ov: Complex64 = l.iter().zip(r).map(|(a, b)| a.conj() * b).sum();
    ov.norm() / (nl * nr)
}

/// Midpoint-sampled window average of `P_L − P_R` starting from `psi`.
pub fn asymmetry(model: &Model, psi: &[Complex64], t_a: f64, t_b: f64, n: usize) -> f64 {
    let h = model.hamiltonian();
    let d = model.dim_env();
    let v = nalgebra::DVector::from_column_slice(psi);
    let mut acc = 0.0;
    for j in 0..n {
        let t = t_a + (j as f64 + 0.5) * (t_b - t_a) / n as f64;
        let out = propagator(&h, t) * &v;
        let pl: f64 = out.iter().take(d).map(|z| z.norm_sqr()).sum();
        let pr: f64 = out.iter().skip(d).map(|z| z.norm_sqr()).sum();
        acc += pl - pr;
    }
    acc / n as f64
}
