//! Trigonometric polynomials in the observation, optionally multiplied by a
//! power of a kernel: `Σ_k φ(x)^{p_k} (a_k cos(ω_k x) + b_k sin(ω_k x))`.
//!
//! Functionals of this shape have population expectations that reduce to
//! a handful of Fourier pairings, which stay accurate for heavy tails.

use crate::kernels::KernelProfile;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrigAtom {
    pub omega: f64,
    pub power: u32,
    pub cos: f64,
    pub sin: f64,
}

impl TrigAtom {
    pub fn constant(value: f64) -> Self {
        Self { omega: 0.0, power: 0, cos: value, sin: 0.0 }
    }

    /// Same atom with `ω ≥ 0` and no sine part at `ω = 0`.
    fn normalised(mut self) -> Self {
        if self.omega < 0.0 {
            self.omega = -self.omega;
            self.sin = -self.sin;
        }
        if self.omega == 0.0 {
            self.sin = 0.0;
        }
        self
    }

    pub fn eval(&self, x: f64, kernel: &KernelProfile) -> f64 {
        let w = if self.power == 0 { 1.0 } else { kernel.eval(x).powi(self.power as i32) };
        let (s, c) = (self.omega * x).sin_cos();
        w * (self.cos * c + self.sin * s)
    }

    pub(crate) fn product(&self, other: &Self) -> [TrigAtom; 2] {
        let (c1, s1, c2, s2) = (self.cos, self.sin, other.cos, other.sin);
        let power = self.power + other.power;
        [
            TrigAtom {
                omega: self.omega - other.omega,
                power,
                cos: 0.5 * (c1 * c2 + s1 * s2),
                sin: 0.5 * (s1 * c2 - c1 * s2),
            }
            .normalised(),
            TrigAtom {
                omega: self.omega + other.omega,
                power,
                cos: 0.5 * (c1 * c2 - s1 * s2),
                sin: 0.5 * (s1 * c2 + c1 * s2),
            }
            .normalised(),
        ]
    }
}

/// Vector-valued trigonometric polynomial: one atom list per component.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigForm {
    pub kernel: KernelProfile,
    pub components: Vec<Vec<TrigAtom>>,
}

impl TrigForm {
    pub fn new(kernel: KernelProfile, components: Vec<Vec<TrigAtom>>) -> Self {
        let components = components
            .into_iter()
            .map(|c| c.into_iter().map(TrigAtom::normalised).collect())
            .collect();
        Self { kernel, components }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        self.components
            .iter()
            .map(|atoms| atoms.iter().map(|a| a.eval(x, &self.kernel)).sum())
            .collect()
    }

    /// Atoms of the product of components `i` and `j`.
    pub fn product(&self, i: usize, j: usize) -> Vec<TrigAtom> {
        let mut out = Vec::with_capacity(2 * self.components[i].len() * self.components[j].len());
        for a in &self.components[i] {
            for b in &self.components[j] {
                out.extend(a.product(b));
            }
        }
        out
    }

    /// Adds `shift[j]` to component `j`.
    pub fn shifted(mut self, shift: &[f64]) -> Self {
        for (atoms, &s) in self.components.iter_mut().zip(shift) {
            atoms.push(TrigAtom::constant(s));
        }
        self
    }

    /// `(self - other) / step` componentwise, requiring matching atom layouts.
    pub fn difference_quotient(&self, other: &Self, step: f64) -> Option<Self> {
        if self.components.len() != other.components.len() {
            return None;
        }
        let mut components = Vec::with_capacity(self.components.len());
        for (a, b) in self.components.iter().zip(&other.components) {
            if a.len() != b.len() {
                return None;
            }
            let mut atoms = Vec::with_capacity(a.len());
            for (x, y) in a.iter().zip(b) {
                if x.omega != y.omega || x.power != y.power {
                    return None;
                }
                atoms.push(TrigAtom { cos: (x.cos - y.cos) / step, sin: (x.sin - y.sin) / step, ..*x });
            }
            components.push(atoms);
        }
        Some(Self { kernel: self.kernel, components })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn atom() -> impl Strategy<Value = TrigAtom> {
        (-3.0f64..3.0, 0u32..3, -2.0f64..2.0, -2.0f64..2.0).prop_map(|(omega, power, cos, sin)| TrigAtom { omega, power, cos, sin })
    }

    proptest! {
        #[test]
        fn product_expansion_is_exact(a in atom(), b in atom(), x in -10.0f64..10.0, s in 0.3f64..3.0) {
            let k = KernelProfile::gaussian(s).unwrap().centered_at(0.4);
            let form = TrigForm::new(k, vec![vec![a], vec![b]]);
            let direct = a.eval(x, &k) * b.eval(x, &k);
            let expanded: f64 = form.product(0, 1).iter().map(|t| t.eval(x, &k)).sum();
            prop_assert!((direct - expanded).abs() < 1e-12);
        }

        #[test]
        fn normalisation_preserves_values(a in atom(), x in -10.0f64..10.0) {
            let k = KernelProfile::classical();
            prop_assert!((a.eval(x, &k) - a.normalised().eval(x, &k)).abs() < 1e-12);
        }
    }

    #[test]
    fn shift_and_difference() {
        let k = KernelProfile::classical();
        let f = TrigForm::new(k, vec![vec![TrigAtom { omega: 1.0, power: 0, cos: 2.0, sin: 1.0 }]]);
        let g = TrigForm::new(k, vec![vec![TrigAtom { omega: 1.0, power: 0, cos: 1.0, sin: 1.0 }]]);
        let d = f.difference_quotient(&g, 0.5).unwrap();
        assert_eq!(d.components[0][0].cos, 2.0);
        assert_eq!(d.components[0][0].sin, 0.0);
        let s = f.shifted(&[3.0]);
        assert!((s.eval(0.0)[0] - 5.0).abs() < 1e-15);
    }
}
