//! Linear Gaussian state-space model with a two-dimensional state and scalar
//! observations:
//!
//! ```text
//! X_0 ~ N(mu0, Sigma0),  X_n = F X_{n-1} + V_n,  V_n ~ N(0, Q)
//! Y_n = G X_n + W_n,  W_n ~ N(0, R)
//! ```
//!
//! [`LinearGaussianModel::tracking`] builds the integrated random-walk
//! instance `F = [[1,1],[0,1]]`, `G = (1,0)`, `Q = nu2 [[1/3,1/2],[1/2,1]]`,
//! `R = tau2`.

use nalgebra::{Matrix2, RowVector2, Vector2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SmcError};
use crate::gaussian::{log_normal_1d, min_eigenvalue, psd_factor, symmetrize, AffineKernel, Gaussian2};
use crate::kalman::{kalman_filter, GaussianBelief};
use crate::model::{HmmModel, ProposalKind, StateSpaceModel};

#[derive(Debug, Clone)]
pub struct LinearGaussianModel {
    f: Matrix2<f64>,
    g: RowVector2<f64>,
    q: Matrix2<f64>,
    r: f64,
    mu0: Vector2<f64>,
    sigma0: Matrix2<f64>,
    q_factor: Matrix2<f64>,
    sigma0_factor: Matrix2<f64>,
    q_density: Gaussian2,
    /// Law of `X_1`.
    initial: GaussianBelief,
    initial_density: Gaussian2,
}

impl LinearGaussianModel {
    pub fn new(
        f: Matrix2<f64>,
        g: RowVector2<f64>,
        q: Matrix2<f64>,
        r: f64,
        mu0: Vector2<f64>,
        sigma0: Matrix2<f64>,
    ) -> Result<Self> {
        for (name, c) in [("Q", &q), ("Sigma0", &sigma0)] {
            if (c - c.transpose()).amax() > 1e-12 {
                return Err(SmcError::InvalidModel(format!("{name} is not symmetric")));
            }
            if min_eigenvalue(c) < -1e-10 {
                return Err(SmcError::InvalidModel(format!("{name} is not positive semidefinite")));
            }
        }
        if !(r >= 0.0) || !r.is_finite() {
            return Err(SmcError::InvalidModel(format!("observation variance {r} must be >= 0")));
        }
        let initial = GaussianBelief::new(mu0, sigma0).predict(&f, &q);
        Ok(LinearGaussianModel {
            q_factor: psd_factor(&q)?,
            sigma0_factor: psd_factor(&sigma0)?,
            q_density: Gaussian2::new(&q)?,
            initial_density: Gaussian2::new(&initial.cov)?,
            initial,
            f,
            g,
            q,
            r,
            mu0,
            sigma0,
        })
    }

    /// Integrated random walk with state noise `nu2` and observation noise
    /// `tau2`, started from `X_0 ~ N(0, I)`.
    pub fn tracking(nu2: f64, tau2: f64) -> Result<Self> {
        if !(nu2 >= 0.0) {
            return Err(SmcError::InvalidModel(format!("nu2 = {nu2} must be >= 0")));
        }
        Self::new(
            Matrix2::new(1.0, 1.0, 0.0, 1.0),
            RowVector2::new(1.0, 0.0),
            Matrix2::new(1.0 / 3.0, 0.5, 0.5, 1.0) * nu2,
            tau2,
            Vector2::zeros(),
            Matrix2::identity(),
        )
    }

    pub fn with_initial(&self, mu0: Vector2<f64>, sigma0: Matrix2<f64>) -> Result<Self> {
        Self::new(self.f, self.g, self.q, self.r, mu0, sigma0)
    }

    pub fn f(&self) -> &Matrix2<f64> {
        &self.f
    }
    pub fn g(&self) -> &RowVector2<f64> {
        &self.g
    }
    pub fn q(&self) -> &Matrix2<f64> {
        &self.q
    }
    pub fn r(&self) -> f64 {
        self.r
    }
    pub fn mu0(&self) -> &Vector2<f64> {
        &self.mu0
    }
    pub fn sigma0(&self) -> &Matrix2<f64> {
        &self.sigma0
    }

    /// Law of `X_1`.
    pub fn initial_belief(&self) -> &GaussianBelief {
        &self.initial
    }

    fn observe_mean(&self, x: &Vector2<f64>) -> f64 {
        self.g[0] * x[0] + self.g[1] * x[1]
    }
}

impl StateSpaceModel for LinearGaussianModel {
    type State = Vector2<f64>;
    type Obs = f64;

    fn state_dim(&self) -> usize {
        2
    }

    fn sample_x0<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector2<f64> {
        self.mu0 + self.sigma0_factor * crate::gaussian::standard_normal2(rng)
    }

    fn sample_transition<R: Rng + ?Sized>(&self, rng: &mut R, x_prev: &Vector2<f64>, _n: usize) -> Vector2<f64> {
        self.f * x_prev + self.q_factor * crate::gaussian::standard_normal2(rng)
    }

    fn sample_observation<R: Rng + ?Sized>(&self, rng: &mut R, x: &Vector2<f64>, _n: usize) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.observe_mean(x) + self.r.sqrt() * z
    }

    fn log_initial(&self, x: &Vector2<f64>) -> f64 {
        self.initial_density.log_pdf(x, &self.initial.mean)
    }

    fn log_f(&self, x_prev: &Vector2<f64>, x: &Vector2<f64>, _n: usize) -> f64 {
        self.q_density.log_pdf(x, &(self.f * x_prev))
    }

    fn log_g(&self, y: &f64, x: &Vector2<f64>, _n: usize) -> f64 {
        log_normal_1d(*y, self.observe_mean(x), self.r)
    }

    fn log_f_bound(&self) -> Option<f64> {
        match self.q_density {
            Gaussian2::Full { .. } => Some(self.q_density.log_peak()),
            Gaussian2::PointMass => None,
        }
    }
}

/// Choice of artificial densities `xi_n` for the backward filter.
#[derive(Debug, Clone)]
pub enum XiChoice {
    /// `xi_n = p(x_n | y_{1:n-1})` from a Kalman filter over the observations.
    KalmanPredictive,
    /// The same Gaussian at every time.
    Fixed(GaussianBelief),
    /// One belief per time `n = 1..=T`.
    Sequence(Vec<GaussianBelief>),
}

#[derive(Debug, Clone, Copy)]
struct CombineKernel {
    a_prev: Matrix2<f64>,
    a_next: Matrix2<f64>,
    obs_gain: Vector2<f64>,
    noise: Gaussian2,
}

/// Linear Gaussian model conditioned on observations, with its `xi`
/// sequence and proposal family.
#[derive(Debug, Clone)]
pub struct LinearGaussianHmm {
    model: LinearGaussianModel,
    observations: Vec<f64>,
    proposals: ProposalKind,
    xi: Vec<GaussianBelief>,
    xi_density: Vec<Gaussian2>,
    fwd_first: GaussianBelief,
    fwd_first_density: Gaussian2,
    /// Forward kernels for `n = 2..=T` at index `n - 2`.
    fwd_kernels: Vec<AffineKernel>,
    bwd_last: GaussianBelief,
    bwd_last_density: Gaussian2,
    /// Backward kernels for `n = 1..T` at index `n - 1`.
    bwd_kernels: Vec<AffineKernel>,
    combine: CombineKernel,
}

impl LinearGaussianHmm {
    pub fn new(
        model: LinearGaussianModel,
        observations: Vec<f64>,
        xi: XiChoice,
        proposals: ProposalKind,
    ) -> Result<Self> {
        let horizon = observations.len();
        if horizon == 0 {
            return Err(SmcError::InvalidModel("no observations".into()));
        }
        if !matches!(model.q_density, Gaussian2::Full { .. }) || !(model.r > 0.0) {
            return Err(SmcError::InvalidModel(
                "particle filtering needs a positive definite Q and R > 0".into(),
            ));
        }
        if observations.iter().any(|y| !y.is_finite()) {
            return Err(SmcError::InvalidModel("non-finite observation".into()));
        }
        let xi = match xi {
            XiChoice::KalmanPredictive => kalman_filter(&model, &observations)?.predicted,
            XiChoice::Fixed(b) => vec![b; horizon],
            XiChoice::Sequence(v) => {
                if v.len() != horizon {
                    return Err(SmcError::InvalidModel(format!(
                        "xi sequence has {} entries for horizon {horizon}",
                        v.len()
                    )));
                }
                v
            }
        };
        let xi_density = xi
            .iter()
            .map(|b| match b.density()? {
                Gaussian2::PointMass => Err(SmcError::InvalidModel("xi must have a density".into())),
                d => Ok(d),
            })
            .collect::<Result<Vec<_>>>()?;

        let (f, g, q, r) = (model.f, model.g, model.q, model.r);
        let q_inv = q
            .try_inverse()
            .ok_or_else(|| SmcError::InvalidModel("Q is singular".into()))?;

        let (fwd_first, fwd_kernels, bwd_last, bwd_kernels, combine);
        match proposals {
            ProposalKind::Prior => {
                fwd_first = model.initial;
                fwd_kernels = (2..=horizon)
                    .map(|_| AffineKernel {
                        a: f,
                        b: Vector2::zeros(),
                        noise: model.q_density,
                    })
                    .collect();
                bwd_last = xi[horizon - 1];
                bwd_kernels = (1..horizon)
                    .map(|n| AffineKernel {
                        a: Matrix2::zeros(),
                        b: xi[n - 1].mean,
                        noise: xi_density[n - 1],
                    })
                    .collect();
                combine = CombineKernel {
                    a_prev: f,
                    a_next: Matrix2::zeros(),
                    obs_gain: Vector2::zeros(),
                    noise: model.q_density,
                };
            }
            ProposalKind::Adapted => {
                fwd_first = model.initial.update(&g, r, observations[0])?.0;
                // x_n | x_{n-1}, y_n ~ N((I - K G) F x_{n-1} + K y_n, (I - K G) Q)
                let (post, _) = GaussianBelief::new(Vector2::zeros(), q).update(&g, r, 0.0)?;
                let s = (g * q * g.transpose())[(0, 0)] + r;
                let gain: Vector2<f64> = q * g.transpose() / s;
                let a = (Matrix2::identity() - gain * g) * f;
                let noise = post.density()?;
                fwd_kernels = observations[1..]
                    .iter()
                    .map(|&y| AffineKernel { a, b: gain * y, noise })
                    .collect();

                bwd_last = xi[horizon - 1].update(&g, r, observations[horizon - 1])?.0;
                // x_n | x_{n+1} under xi_n(x) g(y_n | x) f(x_{n+1} | x)
                bwd_kernels = (1..horizon)
                    .map(|n| {
                        let (upd, _) = xi[n - 1].update(&g, r, observations[n - 1])?;
                        let s = upd.predict(&f, &q).cov;
                        let s_inv = s
                            .try_inverse()
                            .ok_or_else(|| SmcError::Numerical("singular backward predictive".into()))?;
                        let j = upd.cov * f.transpose() * s_inv;
                        let cov = symmetrize(&(upd.cov - j * s * j.transpose()));
                        Ok(AffineKernel {
                            a: j,
                            b: upd.mean - j * f * upd.mean,
                            noise: Gaussian2::new(&cov)?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;

                let precision = q_inv + g.transpose() * g / r + f.transpose() * q_inv * f;
                let cov = precision
                    .try_inverse()
                    .ok_or_else(|| SmcError::Numerical("singular bridging precision".into()))?;
                let cov = symmetrize(&cov);
                combine = CombineKernel {
                    a_prev: cov * q_inv * f,
                    a_next: cov * f.transpose() * q_inv,
                    obs_gain: cov * g.transpose() / r,
                    noise: Gaussian2::new(&cov)?,
                };
            }
        }

        Ok(LinearGaussianHmm {
            fwd_first_density: fwd_first.density()?,
            bwd_last_density: bwd_last.density()?,
            model,
            observations,
            proposals,
            xi,
            xi_density,
            fwd_first,
            fwd_kernels,
            bwd_last,
            bwd_kernels,
            combine,
        })
    }

    pub fn model(&self) -> &LinearGaussianModel {
        &self.model
    }

    pub fn proposals(&self) -> ProposalKind {
        self.proposals
    }

    pub fn xi_beliefs(&self) -> &[GaussianBelief] {
        &self.xi
    }

    fn combine_mean(&self, x_prev: &Vector2<f64>, x_next: &Vector2<f64>, n: usize) -> Vector2<f64> {
        let c = &self.combine;
        c.a_prev * x_prev + c.a_next * x_next + c.obs_gain * self.observations[n - 1]
    }
}

impl StateSpaceModel for LinearGaussianHmm {
    type State = Vector2<f64>;
    type Obs = f64;

    fn state_dim(&self) -> usize {
        2
    }
    fn sample_x0<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector2<f64> {
        self.model.sample_x0(rng)
    }
    fn sample_transition<R: Rng + ?Sized>(&self, rng: &mut R, x_prev: &Vector2<f64>, n: usize) -> Vector2<f64> {
        self.model.sample_transition(rng, x_prev, n)
    }
    fn sample_observation<R: Rng + ?Sized>(&self, rng: &mut R, x: &Vector2<f64>, n: usize) -> f64 {
        self.model.sample_observation(rng, x, n)
    }
    fn log_initial(&self, x: &Vector2<f64>) -> f64 {
        self.model.log_initial(x)
    }
    fn log_f(&self, x_prev: &Vector2<f64>, x: &Vector2<f64>, n: usize) -> f64 {
        self.model.log_f(x_prev, x, n)
    }
    fn log_g(&self, y: &f64, x: &Vector2<f64>, n: usize) -> f64 {
        self.model.log_g(y, x, n)
    }
    fn log_f_bound(&self) -> Option<f64> {
        self.model.log_f_bound()
    }
}

impl HmmModel for LinearGaussianHmm {
    fn observations(&self) -> &[f64] {
        &self.observations
    }

    fn log_xi(&self, x: &Vector2<f64>, n: usize) -> f64 {
        self.xi_density[n - 1].log_pdf(x, &self.xi[n - 1].mean)
    }

    fn sample_forward_proposal<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        x_prev: Option<&Vector2<f64>>,
        n: usize,
    ) -> Vector2<f64> {
        match x_prev {
            None => self.fwd_first_density.sample(rng, &self.fwd_first.mean),
            Some(xp) => self.fwd_kernels[n - 2].sample(rng, xp),
        }
    }

    fn log_q_fwd(&self, x: &Vector2<f64>, x_prev: Option<&Vector2<f64>>, n: usize) -> f64 {
        match x_prev {
            None => self.fwd_first_density.log_pdf(x, &self.fwd_first.mean),
            Some(xp) => self.fwd_kernels[n - 2].log_pdf(x, xp),
        }
    }

    fn sample_backward_proposal<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        x_next: Option<&Vector2<f64>>,
        n: usize,
    ) -> Vector2<f64> {
        match x_next {
            None => self.bwd_last_density.sample(rng, &self.bwd_last.mean),
            Some(xn) => self.bwd_kernels[n - 1].sample(rng, xn),
        }
    }

    fn log_q_bwd(&self, x: &Vector2<f64>, x_next: Option<&Vector2<f64>>, n: usize) -> f64 {
        match x_next {
            None => self.bwd_last_density.log_pdf(x, &self.bwd_last.mean),
            Some(xn) => self.bwd_kernels[n - 1].log_pdf(x, xn),
        }
    }

    fn sample_combining_proposal<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        x_prev: &Vector2<f64>,
        x_next: &Vector2<f64>,
        n: usize,
    ) -> Vector2<f64> {
        let mean = self.combine_mean(x_prev, x_next, n);
        self.combine.noise.sample(rng, &mean)
    }

    fn log_q_combine(&self, x: &Vector2<f64>, x_prev: &Vector2<f64>, x_next: &Vector2<f64>, n: usize) -> f64 {
        self.combine.noise.log_pdf(x, &self.combine_mean(x_prev, x_next, n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::simulate;
    use crate::rng::RngStream;

    fn hmm(kind: ProposalKind) -> LinearGaussianHmm {
        let model = LinearGaussianModel::tracking(2.0, 3.0).unwrap();
        let mut rng = RngStream::new(1, 0);
        let traj = simulate(&model, &mut rng, 12).unwrap();
        LinearGaussianHmm::new(model, traj.observations, XiChoice::KalmanPredictive, kind).unwrap()
    }

    #[test]
    fn tracking_matrices() {
        let m = LinearGaussianModel::tracking(6.0, 2.5).unwrap();
        assert_eq!(*m.f(), Matrix2::new(1.0, 1.0, 0.0, 1.0));
        assert_eq!(*m.g(), RowVector2::new(1.0, 0.0));
        assert_eq!(*m.q(), Matrix2::new(2.0, 3.0, 3.0, 6.0));
        assert_eq!(m.r(), 2.5);
    }

    #[test]
    fn zero_noise_path_is_constant() {
        let m = LinearGaussianModel::tracking(0.0, 0.0)
            .unwrap()
            .with_initial(Vector2::zeros(), Matrix2::zeros())
            .unwrap();
        let mut rng = RngStream::new(3, 3);
        let traj = simulate(&m, &mut rng, 20).unwrap();
        assert!(traj.states.iter().all(|x| *x == Vector2::zeros()));
        assert!(traj.observations.iter().all(|&y| y == 0.0));
    }

    #[test]
    fn degenerate_model_rejected_for_filtering() {
        let m = LinearGaussianModel::tracking(0.0, 1.0).unwrap();
        assert!(LinearGaussianHmm::new(m, vec![0.0], XiChoice::KalmanPredictive, ProposalKind::Adapted).is_err());
    }

    /// The adapted proposals are exact conditionals, so `f g / q` (forward)
    /// and `f f g / q` (bridging) must not depend on the sampled state.
    #[test]
    fn adapted_proposals_are_exact_conditionals() {
        let h = hmm(ProposalKind::Adapted);
        let xp = Vector2::new(0.4, -0.3);
        let xn = Vector2::new(1.1, 0.2);
        let n = 5;
        let y = h.observation(n);
        let ratio = |x: Vector2<f64>| h.log_g(y, &x, n) + h.log_f(&xp, &x, n) - h.log_q_fwd(&x, Some(&xp), n);
        let r0 = ratio(Vector2::new(0.0, 0.0));
        for x in [Vector2::new(1.0, 2.0), Vector2::new(-3.0, 0.5)] {
            assert!((ratio(x) - r0).abs() < 1e-9);
        }
        let bridge = |x: Vector2<f64>| {
            h.log_f(&xp, &x, n) + h.log_f(&x, &xn, n + 1) + h.log_g(y, &x, n) - h.log_q_combine(&x, &xp, &xn, n)
        };
        let b0 = bridge(Vector2::new(0.0, 0.0));
        for x in [Vector2::new(1.0, 2.0), Vector2::new(-3.0, 0.5)] {
            assert!((bridge(x) - b0).abs() < 1e-9);
        }
        let back = |x: Vector2<f64>| {
            h.log_xi(&x, n) + h.log_g(y, &x, n) + h.log_f(&x, &xn, n + 1) - h.log_q_bwd(&x, Some(&xn), n)
        };
        let k0 = back(Vector2::new(0.0, 0.0));
        for x in [Vector2::new(1.0, 2.0), Vector2::new(-3.0, 0.5)] {
            assert!((back(x) - k0).abs() < 1e-9);
        }
    }

    #[test]
    fn prior_proposals_cancel_prior_terms() {
        let h = hmm(ProposalKind::Prior);
        let x = Vector2::new(0.2, 0.9);
        let xp = Vector2::new(-0.1, 0.3);
        assert!((h.log_q_fwd(&x, None, 1) - h.log_initial(&x)).abs() < 1e-12);
        assert!((h.log_q_fwd(&x, Some(&xp), 4) - h.log_f(&xp, &x, 4)).abs() < 1e-12);
        assert!((h.log_q_bwd(&x, Some(&xp), 4) - h.log_xi(&x, 4)).abs() < 1e-12);
        assert!((h.log_q_bwd(&x, None, 12) - h.log_xi(&x, 12)).abs() < 1e-12);
    }
}
