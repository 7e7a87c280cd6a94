//! Plane-wave Gaussian pulses: time-domain values, normal derivatives,
//! closed-form temporal spectra and combined-field right-hand sides.
//!
//! Spectra use `F(omega) = int f(t) e^{+i omega t} dt`, the sign for which the
//! kernel `e^{i kappa R} / (4 pi R)` is outgoing and synthesized fields are
//! causal.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{SurfaceMesh, Vec3};
use crate::operators::KernelParams;

type C64 = Complex64;

/// Largest admissible tail level of the pulse before and after illumination.
pub const EPS_TAIL_MAX: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum IncidentError {
    #[error("direction must be a nonzero finite vector")]
    BadDirection,
    #[error("pulse width must be positive, got {0}")]
    BadWidth(f64),
    #[error("carrier frequency must be nonnegative, got {0}")]
    BadCarrier(f64),
    #[error("wavespeed must be positive, got {0}")]
    BadWavespeed(f64),
    #[error("amplitude must be finite")]
    BadAmplitude,
    #[error("pulse tail at t = 0 is {eps_tail:.3e}, above the limit {limit:.1e}; increase the delay")]
    TailTooLarge { eps_tail: f64, limit: f64 },
}

/// `b(r, t) = a exp(-phi^2 / (2 sigma^2)) cos(omega_c phi)`,
/// `phi = t - t0 - d.r / c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncidentPulse {
    pub direction: Vec3,
    pub carrier: f64,
    pub width: f64,
    pub delay: f64,
    pub amplitude: f64,
    pub c: f64,
}

impl IncidentPulse {
    /// Validates the parameters and normalizes the direction.
    pub fn new(
        direction: Vec3,
        carrier: f64,
        width: f64,
        delay: f64,
        amplitude: f64,
        c: f64,
    ) -> Result<Self, IncidentError> {
        let len = direction.norm();
        if !(len.is_finite() && len > 0.0) {
            return Err(IncidentError::BadDirection);
        }
        if !(width > 0.0 && width.is_finite()) {
            return Err(IncidentError::BadWidth(width));
        }
        if !(carrier >= 0.0 && carrier.is_finite()) {
            return Err(IncidentError::BadCarrier(carrier));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(IncidentError::BadWavespeed(c));
        }
        if !amplitude.is_finite() || !delay.is_finite() {
            return Err(IncidentError::BadAmplitude);
        }
        Ok(Self {
            direction: direction / len,
            carrier,
            width,
            delay,
            amplitude,
            c,
        })
    }

    #[inline]
    fn phase(&self, r: Vec3, t: f64) -> f64 {
        t - self.delay - self.direction.dot(r) / self.c
    }

    #[inline]
    fn envelope(&self, phi: f64) -> f64 {
        (-phi * phi / (2.0 * self.width * self.width)).exp()
    }

    /// Time derivative of the pulse profile at phase `phi`.
    #[inline]
    fn profile_derivative(&self, phi: f64) -> f64 {
        let e = self.envelope(phi);
        let s2 = self.width * self.width;
        self.amplitude * e * (-(phi / s2) * (self.carrier * phi).cos() - self.carrier * (self.carrier * phi).sin())
    }

    pub fn evaluate_b(&self, r: Vec3, t: f64) -> f64 {
        let phi = self.phase(r, t);
        self.amplitude * self.envelope(phi) * (self.carrier * phi).cos()
    }

    /// `d b / d t`.
    pub fn evaluate_dtb(&self, r: Vec3, t: f64) -> f64 {
        self.profile_derivative(self.phase(r, t))
    }

    /// `n . grad b = -(n.d / c) db/dt`.
    pub fn evaluate_dndb(&self, r: Vec3, normal: Vec3, t: f64) -> f64 {
        let nd = normal.dot(self.direction);
        if nd == 0.0 {
            return 0.0;
        }
        -(nd / self.c) * self.profile_derivative(self.phase(r, t))
    }

    /// Spectrum of the profile without the propagation phase.
    #[inline]
    fn profile_spectrum(&self, omega: f64) -> f64 {
        let s = self.width;
        let g = |x: f64| (-s * s * x * x / 2.0).exp();
        self.amplitude * s * (std::f64::consts::PI / 2.0).sqrt() * (g(omega - self.carrier) + g(omega + self.carrier))
    }

    /// Closed-form temporal spectrum of `b(r, .)`.
    pub fn spectrum_b(&self, r: Vec3, omega: f64) -> C64 {
        let shift = self.delay + self.direction.dot(r) / self.c;
        C64::from_polar(self.profile_spectrum(omega), omega * shift)
    }

    /// Closed-form temporal spectrum of `n . grad b(r, .)`.
    pub fn spectrum_dnb(&self, r: Vec3, normal: Vec3, omega: f64) -> C64 {
        let nd = normal.dot(self.direction);
        if nd == 0.0 {
            return C64::new(0.0, 0.0);
        }
        C64::new(0.0, omega * nd / self.c) * self.spectrum_b(r, omega)
    }

    /// Half-width in time beyond which the envelope is below `eps`.
    pub fn half_duration(&self, eps: f64) -> f64 {
        self.width * (-2.0 * eps.ln()).sqrt()
    }

    /// Tail level `exp(-t_eff^2 / (2 sigma^2))` at `t = 0` over the mesh,
    /// with `t_eff` the smallest phase lag of the pulse centre. Returns 1
    /// when the centre has already reached part of the obstacle at `t = 0`.
    pub fn eps_tail(&self, mesh: &SurfaceMesh) -> f64 {
        let t_eff = self.delay + self.min_projection(mesh) / self.c;
        if t_eff <= 0.0 {
            return 1.0;
        }
        self.envelope(t_eff)
    }

    /// Rejects pulses with a tail above [`EPS_TAIL_MAX`] at `t = 0`.
    pub fn check_tail(&self, mesh: &SurfaceMesh) -> Result<f64, IncidentError> {
        let eps_tail = self.eps_tail(mesh);
        if eps_tail > EPS_TAIL_MAX {
            return Err(IncidentError::TailTooLarge {
                eps_tail,
                limit: EPS_TAIL_MAX,
            });
        }
        Ok(eps_tail)
    }

    /// Time after which the envelope on the obstacle stays below `eps`.
    pub fn illumination_end(&self, mesh: &SurfaceMesh, eps: f64) -> f64 {
        self.delay + self.max_projection(mesh) / self.c + self.half_duration(eps)
    }

    fn min_projection(&self, mesh: &SurfaceMesh) -> f64 {
        mesh.vertices().iter().map(|v| self.direction.dot(*v)).fold(f64::INFINITY, f64::min)
    }

    fn max_projection(&self, mesh: &SurfaceMesh) -> f64 {
        mesh.vertices().iter().map(|v| self.direction.dot(*v)).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `spectrum_dnB(r_j) - i eta spectrum_B(r_j)` at every panel centroid.
pub fn cfie_rhs(pulse: &IncidentPulse, mesh: &SurfaceMesh, params: &KernelParams) -> Vec<C64> {
    let i_eta = C64::new(0.0, params.eta);
    mesh.centroids()
        .iter()
        .zip(mesh.normals())
        .map(|(r, n)| pulse.spectrum_dnb(*r, *n, params.omega) - i_eta * pulse.spectrum_b(*r, params.omega))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_sphere;
    use crate::operators::weighted_norm;

    fn pulse() -> IncidentPulse {
        IncidentPulse::new(Vec3::new(0.0, 0.0, 1.0), 4.0, 0.5, 4.1, 1.3, 1.0).unwrap()
    }

    #[test]
    fn centre_and_tail() {
        let p = pulse();
        assert_eq!(p.evaluate_b(Vec3::ZERO, p.delay), p.amplitude);
        let t = p.delay - 10.0 * p.width;
        assert!(p.evaluate_b(Vec3::ZERO, t).abs() <= (-50.0f64).exp() * p.amplitude);
    }

    #[test]
    fn validation() {
        assert_eq!(
            IncidentPulse::new(Vec3::ZERO, 1.0, 1.0, 0.0, 1.0, 1.0),
            Err(IncidentError::BadDirection)
        );
        assert!(IncidentPulse::new(Vec3::new(1.0, 0.0, 0.0), 1.0, 0.0, 0.0, 1.0, 1.0).is_err());
        assert!(IncidentPulse::new(Vec3::new(1.0, 0.0, 0.0), -1.0, 1.0, 0.0, 1.0, 1.0).is_err());
        let p = IncidentPulse::new(Vec3::new(2.0, 0.0, 0.0), 1.0, 1.0, 0.0, 1.0, 1.0).unwrap();
        assert!((p.direction.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tail_check() {
        let mesh = build_sphere(1.0, 1);
        let p = pulse();
        let eps = p.check_tail(&mesh).unwrap();
        assert!(eps <= EPS_TAIL_MAX);
        let late = IncidentPulse { delay: 2.0, ..p };
        assert!(matches!(late.check_tail(&mesh), Err(IncidentError::TailTooLarge { .. })));
        let end = p.illumination_end(&mesh, 1e-8);
        for v in mesh.vertices() {
            for k in 0..20 {
                let t = end + 0.3 * k as f64;
                assert!(p.evaluate_b(*v, t).abs() <= 1e-8 * p.amplitude);
            }
        }
    }

    #[test]
    fn wave_equation_residual_is_second_order() {
        let p = IncidentPulse::new(Vec3::new(1.0, 2.0, 2.0), 3.0, 0.6, 1.0, 1.0, 1.7).unwrap();
        let (r, t) = (Vec3::new(0.3, -0.2, 0.5), 1.4);
        let residual = |h: f64| {
            let b = |r: Vec3, t: f64| p.evaluate_b(r, t);
            let b0 = b(r, t);
            let btt = (b(r, t + h) - 2.0 * b0 + b(r, t - h)) / (h * h);
            let mut lap = 0.0;
            for e in [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 1.0)] {
                lap += (b(r + e * h, t) - 2.0 * b0 + b(r - e * h, t)) / (h * h);
            }
            (btt - p.c * p.c * lap).abs()
        };
        let (r1, r2) = (residual(4e-3), residual(2e-3));
        assert!(r1 < 1e-2 && r2 < r1 / 3.0, "{r1} {r2}");
    }

    #[test]
    fn normal_derivative() {
        let p = pulse();
        let r = Vec3::new(0.2, 0.1, -0.4);
        assert_eq!(p.evaluate_dndb(r, Vec3::new(1.0, 0.0, 0.0), 4.0), 0.0);
        let t = 4.05;
        let along = p.evaluate_dndb(r, p.direction, t);
        assert!((along + p.evaluate_dtb(r, t) / p.c).abs() < 1e-14);
        let n = Vec3::new(0.3, -0.5, 0.8).normalized();
        let fd = |h: f64| (p.evaluate_b(r + n * h, t) - p.evaluate_b(r - n * h, t)) / (2.0 * h);
        let exact = p.evaluate_dndb(r, n, t);
        let (e1, e2) = ((fd(1e-3) - exact).abs(), (fd(5e-4) - exact).abs());
        assert!(e1 < 1e-4 * exact.abs().max(1.0));
        assert!(e2 < e1 / 3.0);
    }

    #[test]
    fn spectrum_closed_forms() {
        let p = IncidentPulse::new(Vec3::new(0.0, 0.0, 1.0), 2.0, 0.7, 0.0, 1.0, 1.0).unwrap();
        let s = p.spectrum_b(Vec3::ZERO, 2.0);
        let expect = 0.7 * (std::f64::consts::PI / 2.0).sqrt() * (1.0 + (-2.0 * 0.49 * 4.0f64).exp());
        assert!((s.re - expect).abs() < 1e-15 && s.im == 0.0);
        let q = pulse();
        let r = Vec3::new(0.1, 0.4, 0.7);
        for w in [0.3, 1.7, 5.0] {
            assert!((q.spectrum_b(r, -w) - q.spectrum_b(r, w).conj()).norm() < 1e-15);
            let n = Vec3::new(0.0, 0.6, 0.8);
            assert!((q.spectrum_dnb(r, n, -w) - q.spectrum_dnb(r, n, w).conj()).norm() < 1e-15);
            assert_eq!(q.spectrum_dnb(r, Vec3::new(1.0, 0.0, 0.0), w), C64::new(0.0, 0.0));
        }
    }

    /// Spectra against a trapezoid quadrature of sampled time signals, which
    /// is spectrally accurate for the smooth, rapidly decaying pulse.
    #[test]
    fn spectra_match_sampled_transform() {
        let p = pulse();
        let r = Vec3::new(0.3, -0.1, 0.6);
        let n = Vec3::new(0.0, 0.6, 0.8);
        let (t0, t1, m) = (-6.0, 16.0, 8192usize);
        let dt = (t1 - t0) / m as f64;
        let transform = |f: &dyn Fn(f64) -> f64, w: f64| -> C64 {
            (0..m)
                .map(|k| {
                    let t = t0 + k as f64 * dt;
                    C64::from_polar(f(t) * dt, w * t)
                })
                .sum()
        };
        let peak = p.spectrum_b(r, p.carrier).norm();
        let dpeak = p.spectrum_dnb(r, n, p.carrier + 1.0).norm();
        for k in 0..20 {
            let w = 0.5 * k as f64 + 0.13;
            let num = transform(&|t| p.evaluate_b(r, t), w);
            assert!((num - p.spectrum_b(r, w)).norm() <= 1e-8 * peak, "B at {w}");
            let num = transform(&|t| p.evaluate_dndb(r, n, t), w);
            assert!((num - p.spectrum_dnb(r, n, w)).norm() <= 1e-8 * dpeak, "dnB at {w}");
        }
    }

    #[test]
    fn rhs_coupling_and_envelope() {
        let mesh = build_sphere(1.0, 1);
        let p = pulse();
        let zero = IncidentPulse { amplitude: 0.0, ..p };
        assert!(cfie_rhs(&zero, &mesh, &KernelParams::new(3.0, 1.0, 1.0))
            .iter()
            .all(|z| *z == C64::new(0.0, 0.0)));
        for (w, eta) in [(0.5, 1.0), (3.0, 3.0)] {
            let params = KernelParams::new(w, 1.0, 1.0);
            let rhs = cfie_rhs(&p, &mesh, &params);
            for ((x, r), nrm) in rhs.iter().zip(mesh.centroids()).zip(mesh.normals()) {
                let e = p.spectrum_dnb(*r, *nrm, w) - C64::new(0.0, eta) * p.spectrum_b(*r, w);
                assert!((x - e).norm() < 1e-15);
            }
        }
        let grid: Vec<f64> = (0..80).map(|k| 0.1 + 0.1 * k as f64).collect();
        let env: Vec<f64> = grid
            .iter()
            .map(|&w| {
                let params = KernelParams::new(w, 1.0, 1.0);
                weighted_norm(mesh.areas(), &cfie_rhs(&p, &mesh, &params))
            })
            .collect();
        let imax = (0..env.len()).max_by(|&a, &b| env[a].total_cmp(&env[b])).unwrap();
        assert!((grid[imax] - p.carrier).abs() <= 1.0, "peak at {}", grid[imax]);
    }
}
