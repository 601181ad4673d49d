//! Reference numerical solvers for the three testbed PDEs.
//!
//! Grids include both endpoints (linspace convention), so for periodic
//! problems the last point duplicates the first: solvers evolve the n-1
//! unique points with period equal to the axis extent and emit frames with
//! the duplicate filled in.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{AxisKind, FieldTensor, Grid};
use crate::spectral::{wavenumbers, Fft1d, Fft2d};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdeKind {
    Advection,
    Burgers,
    Wave2d,
}

impl PdeKind {
    pub fn label(&self) -> &'static str {
        match self {
            PdeKind::Advection => "advection",
            PdeKind::Burgers => "burgers",
            PdeKind::Wave2d => "wave2d",
        }
    }

    pub fn from_label(s: &str) -> Result<PdeKind> {
        match s {
            "advection" => Ok(PdeKind::Advection),
            "burgers" => Ok(PdeKind::Burgers),
            "wave2d" => Ok(PdeKind::Wave2d),
            other => Err(Error::Parse(format!("unknown pde kind '{other}'"))),
        }
    }
}

/// Solver configuration; the stability bound of the chosen scheme is
/// asserted at construction.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub kind: PdeKind,
    /// Physical parameter: advection speed v, viscosity nu, or wave speed c.
    pub param: f64,
    /// Spatial grid.
    pub space: Grid,
    pub dt: f64,
    pub steps: usize,
    /// Temporal subsample stride on the output.
    pub stride: usize,
}

impl SolverConfig {
    pub fn new(
        kind: PdeKind,
        param: f64,
        space: Grid,
        dt: f64,
        steps: usize,
        stride: usize,
    ) -> Result<SolverConfig> {
        if !dt.is_finite() || dt <= 0.0 {
            return Err(Error::Config(format!("time step must be positive, got {dt}")));
        }
        if !param.is_finite() {
            return Err(Error::Config("physical parameter must be finite".into()));
        }
        if stride == 0 || steps % stride != 0 || steps / stride < 2 {
            return Err(Error::Config(
                "steps must be a multiple of stride with at least two strided steps".into(),
            ));
        }
        if space.has_time() {
            return Err(Error::Config("solver grid must be spatial only".into()));
        }
        let cfg = SolverConfig {
            kind,
            param,
            space,
            dt,
            steps,
            stride,
        };
        cfg.check_stability()?;
        Ok(cfg)
    }

    fn check_stability(&self) -> Result<()> {
        match self.kind {
            PdeKind::Advection => {
                if self.space.ndim() != 1 || self.space.axis_index(AxisKind::SpaceX).is_none() {
                    return Err(Error::Config("advection solver wants a 1D space-x grid".into()));
                }
                let h = self.space.axes()[0].spacing();
                // Crank-Nicolson is unconditionally stable; the Courant
                // number is bounded as an accuracy guard.
                let courant = self.param.abs() * self.dt / h;
                if courant > 4.0 {
                    return Err(Error::Config(format!(
                        "advection Courant number {courant:.3} exceeds the accuracy bound 4"
                    )));
                }
            }
            PdeKind::Burgers => {
                if self.space.ndim() != 1 {
                    return Err(Error::Config("burgers solver is 1D".into()));
                }
                if self.param < 0.0 {
                    return Err(Error::Config("viscosity must be non-negative".into()));
                }
            }
            PdeKind::Wave2d => {
                if self.space.ndim() != 2 {
                    return Err(Error::Config("wave solver is 2D".into()));
                }
                let hx = self.space.axes()[0].spacing();
                let hy = self.space.axes()[1].spacing();
                let kmax = ((std::f64::consts::PI / hx).powi(2)
                    + (std::f64::consts::PI / hy).powi(2))
                .sqrt();
                let cfl = self.param.abs() * self.dt * kmax;
                if cfl >= 2.0 {
                    return Err(Error::Config(format!(
                        "leapfrog stability violated: c*dt*kmax = {cfl:.3} >= 2"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Space-time grid of the strided rollout.
    pub fn output_grid(&self) -> Result<Grid> {
        let frames = self.steps / self.stride + 1;
        self.space
            .with_time(0.0, self.dt * self.steps as f64, frames)
    }

    pub fn solve(&self, ic: &FieldTensor) -> Result<FieldTensor> {
        match self.kind {
            PdeKind::Advection => solve_advection_crank_nicolson(self, ic),
            PdeKind::Burgers => solve_burgers_spectral(self, ic),
            PdeKind::Wave2d => solve_wave_spectral(self, ic),
        }
    }
}

fn check_ic(cfg: &SolverConfig, ic: &FieldTensor) -> Result<()> {
    if *ic.grid() != cfg.space {
        return Err(Error::GridMismatch("initial condition is not on the solver grid".into()));
    }
    ic.assert_finite()
}

fn collect_rollout(cfg: &SolverConfig, frames: Vec<Vec<f64>>) -> Result<FieldTensor> {
    let grid = cfg.output_grid()?;
    let flat: Vec<f64> = frames.into_iter().flatten().collect();
    let arr = ndarray::ArrayD::from_shape_vec(ndarray::IxDyn(&grid.shape()), flat)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let out = FieldTensor::new(grid, arr)?;
    out.assert_finite()?;
    Ok(out)
}

/// Extend a 1D unique-point state with the duplicated endpoint.
fn close_1d(u: &[f64]) -> Vec<f64> {
    let mut f = u.to_vec();
    f.push(u[0]);
    f
}

/// Solve a cyclic tridiagonal system with uniform bands.
/// Row i: sub*x[i-1] + diag*x[i] + sup*x[i+1] = rhs[i], indices wrapped.
fn solve_cyclic_tridiagonal(sub: f64, diag: f64, sup: f64, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = rhs.len();
    let alpha = sup; // A[n-1][0]
    let beta = sub; // A[0][n-1]
    let gamma = -diag;
    let mut b = vec![diag; n];
    b[0] = diag - gamma;
    b[n - 1] = diag - alpha * beta / gamma;
    let solve_tridiag = |b: &[f64], d: &[f64]| -> Result<Vec<f64>> {
        let mut cp = vec![0.0; n];
        let mut dp = vec![0.0; n];
        let mut denom = b[0];
        if denom.abs() < 1e-300 {
            return Err(Error::Numerical("singular tridiagonal system".into()));
        }
        cp[0] = sup / denom;
        dp[0] = d[0] / denom;
        for i in 1..n {
            denom = b[i] - sub * cp[i - 1];
            if denom.abs() < 1e-300 {
                return Err(Error::Numerical("singular tridiagonal system".into()));
            }
            cp[i] = sup / denom;
            dp[i] = (d[i] - sub * dp[i - 1]) / denom;
        }
        let mut x = vec![0.0; n];
        x[n - 1] = dp[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = dp[i] - cp[i] * x[i + 1];
        }
        Ok(x)
    };
    let x = solve_tridiag(&b, rhs)?;
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = alpha;
    let z = solve_tridiag(&b, &u)?;
    let fact = (x[0] + beta * x[n - 1] / gamma) / (1.0 + z[0] + beta * z[n - 1] / gamma);
    Ok(x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect())
}

/// Crank-Nicolson advection with central differences and periodic wrap.
/// The implicit cyclic tridiagonal system is solved exactly each step.
pub fn solve_advection_crank_nicolson(cfg: &SolverConfig, ic: &FieldTensor) -> Result<FieldTensor> {
    check_ic(cfg, ic)?;
    let n = cfg.space.shape()[0] - 1; // unique periodic points
    let h = cfg.space.axes()[0].spacing();
    let r = cfg.param * cfg.dt / (4.0 * h);
    let mut u: Vec<f64> = ic.values().iter().take(n).cloned().collect();
    let mut frames = Vec::with_capacity(cfg.steps / cfg.stride + 1);
    frames.push(close_1d(&u));
    let mut rhs = vec![0.0; n];
    for step in 1..=cfg.steps {
        for i in 0..n {
            let prev = u[(i + n - 1) % n];
            let next = u[(i + 1) % n];
            rhs[i] = u[i] - r * (next - prev);
        }
        u = solve_cyclic_tridiagonal(-r, 1.0, r, &rhs)?;
        if step % cfg.stride == 0 {
            frames.push(close_1d(&u));
        }
    }
    collect_rollout(cfg, frames)
}

/// Pseudo-spectral Burgers: 2/3-rule dealiased nonlinear term, diffusion
/// handled exactly by an integrating factor, RK4 substeps under an
/// advective CFL with safety factor 0.5.
pub fn solve_burgers_spectral(cfg: &SolverConfig, ic: &FieldTensor) -> Result<FieldTensor> {
    check_ic(cfg, ic)?;
    let n = cfg.space.shape()[0] - 1;
    let h = cfg.space.axes()[0].spacing();
    let length = cfg.space.axes()[0].max - cfg.space.axes()[0].min;
    let nu = cfg.param;
    let fft = Fft1d::new(n);
    let k = wavenumbers(n, length);
    let dealias: Vec<f64> = (0..n)
        .map(|i| {
            let m = if i <= n / 2 { i } else { n - i };
            if m as f64 <= n as f64 / 3.0 {
                1.0
            } else {
                0.0
            }
        })
        .collect();

    let nonlinear = |spec: &[Complex64]| -> Vec<Complex64> {
        let u = fft.inverse_real(spec);
        let mut dspec: Vec<Complex64> = spec
            .iter()
            .zip(&k)
            .map(|(s, &kk)| s * Complex64::new(0.0, kk))
            .collect();
        let ux = fft.inverse_real(&dspec);
        for ((d, &uu), &uxx) in dspec.iter_mut().zip(&u).zip(&ux) {
            *d = Complex64::new(-uu * uxx, 0.0);
        }
        fft.forward(&mut dspec);
        for (d, &m) in dspec.iter_mut().zip(&dealias) {
            *d *= m;
        }
        dspec
    };

    let u0: Vec<f64> = ic.values().iter().take(n).cloned().collect();
    let mut spec = fft.forward_real(&u0);
    let mut frames = Vec::with_capacity(cfg.steps / cfg.stride + 1);
    frames.push(close_1d(&u0));

    for step in 1..=cfg.steps {
        let u = fft.inverse_real(&spec);
        let umax = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !umax.is_finite() {
            return Err(Error::Numerical(format!(
                "burgers solution blew up before step {step}"
            )));
        }
        let dt_stable = 0.5 * h / umax.max(1e-12);
        let substeps = (cfg.dt / dt_stable).ceil().max(1.0) as usize;
        let dt = cfg.dt / substeps as f64;
        let e_half: Vec<f64> = k
            .iter()
            .map(|&kk| (-nu * kk * kk * dt / 2.0).exp())
            .collect();
        let e_full: Vec<f64> = e_half.iter().map(|&e| e * e).collect();
        for _ in 0..substeps {
            // integrating-factor RK4
            let k1 = nonlinear(&spec);
            let mut stage: Vec<Complex64> = spec
                .iter()
                .zip(&k1)
                .zip(&e_half)
                .map(|((&s, &n1), &e)| (s + n1 * (dt / 2.0)) * e)
                .collect();
            let k2 = nonlinear(&stage);
            stage = spec
                .iter()
                .zip(&k2)
                .zip(&e_half)
                .map(|((&s, &n2), &e)| s * e + n2 * (dt / 2.0))
                .collect();
            let k3 = nonlinear(&stage);
            stage = spec
                .iter()
                .zip(&k3)
                .zip(&e_half)
                .zip(&e_full)
                .map(|(((&s, &n3), &eh), &ef)| s * ef + n3 * eh * dt)
                .collect();
            let k4 = nonlinear(&stage);
            spec = spec
                .iter()
                .enumerate()
                .map(|(i, &s)| {
                    s * e_full[i]
                        + (k1[i] * e_full[i] + (k2[i] + k3[i]) * (2.0 * e_half[i]) + k4[i])
                            * (dt / 6.0)
                })
                .collect();
        }
        if step % cfg.stride == 0 {
            let frame = fft.inverse_real(&spec);
            if frame.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!(
                    "burgers solution blew up at output step {step}"
                )));
            }
            frames.push(close_1d(&frame));
        }
    }
    collect_rollout(cfg, frames)
}

/// Fourier spectral Laplacian with leapfrog time stepping; zero initial
/// velocity realised by the standard first half-step.
pub fn solve_wave_spectral(cfg: &SolverConfig, ic: &FieldTensor) -> Result<FieldTensor> {
    check_ic(cfg, ic)?;
    let shape = cfg.space.shape();
    let (nx, ny) = (shape[0] - 1, shape[1] - 1);
    let lx = cfg.space.axes()[0].max - cfg.space.axes()[0].min;
    let ly = cfg.space.axes()[1].max - cfg.space.axes()[1].min;
    let fft = Fft2d::new(nx, ny);
    let kx = wavenumbers(nx, lx);
    let ky = wavenumbers(ny, ly);
    let c = cfg.param;
    let dt = cfg.dt;
    let omega2: Vec<f64> = (0..nx * ny)
        .map(|i| {
            let (r, s) = (i / ny, i % ny);
            c * c * (kx[r] * kx[r] + ky[s] * ky[s])
        })
        .collect();

    let mut prev = vec![Complex64::default(); nx * ny];
    for r in 0..nx {
        for s in 0..ny {
            prev[r * ny + s] = Complex64::new(ic.values()[[r, s]], 0.0);
        }
    }
    fft.forward(&mut prev);
    // first step with zero initial velocity
    let mut curr: Vec<Complex64> = prev
        .iter()
        .zip(&omega2)
        .map(|(&u, &w2)| u - u * (0.5 * dt * dt * w2))
        .collect();

    let to_frame = |spec: &[Complex64]| -> Vec<f64> {
        let mut buf = spec.to_vec();
        fft.inverse(&mut buf);
        // close the torus: duplicate first row/column at the far end
        let mut frame = vec![0.0; (nx + 1) * (ny + 1)];
        for r in 0..=nx {
            for s in 0..=ny {
                frame[r * (ny + 1) + s] = buf[(r % nx) * ny + (s % ny)].re;
            }
        }
        frame
    };

    let mut frames = Vec::with_capacity(cfg.steps / cfg.stride + 1);
    frames.push(to_frame(&prev));
    if cfg.stride == 1 {
        frames.push(to_frame(&curr));
    }
    for step in 2..=cfg.steps {
        let next: Vec<Complex64> = curr
            .iter()
            .zip(&prev)
            .zip(&omega2)
            .map(|((&u1, &u0), &w2)| u1 * 2.0 - u0 - u1 * (dt * dt * w2))
            .collect();
        prev = curr;
        curr = next;
        if step % cfg.stride == 0 {
            frames.push(to_frame(&curr));
        }
    }
    collect_rollout(cfg, frames)
}

/// Discrete leapfrog energy invariant from two consecutive frames: the
/// half-step kinetic term plus the spectral product form of the gradient
/// term. Conserved to roundoff by the scheme.
pub fn wave_leapfrog_energy(
    frame0: &FieldTensor,
    frame1: &FieldTensor,
    c: f64,
    dt: f64,
) -> Result<f64> {
    frame0.check_same_grid(frame1)?;
    let shape = frame0.grid().shape();
    if shape.len() != 2 {
        return Err(Error::Config("wave energy wants 2D spatial frames".into()));
    }
    let (nx, ny) = (shape[0] - 1, shape[1] - 1);
    let lx = frame0.grid().axes()[0].max - frame0.grid().axes()[0].min;
    let ly = frame0.grid().axes()[1].max - frame0.grid().axes()[1].min;
    let fft = Fft2d::new(nx, ny);
    let kx = wavenumbers(nx, lx);
    let ky = wavenumbers(ny, ly);
    let unique = |f: &FieldTensor| -> Vec<Complex64> {
        let mut buf = vec![Complex64::default(); nx * ny];
        for r in 0..nx {
            for s in 0..ny {
                buf[r * ny + s] = Complex64::new(f.values()[[r, s]], 0.0);
            }
        }
        fft.forward(&mut buf);
        buf
    };
    let s0 = unique(frame0);
    let s1 = unique(frame1);
    let norm = 1.0 / (nx * ny) as f64;
    let mut kinetic = 0.0;
    let mut potential = 0.0;
    for i in 0..nx * ny {
        let (r, s) = (i / ny, i % ny);
        let k2 = kx[r] * kx[r] + ky[s] * ky[s];
        let dudt = (s1[i] - s0[i]) / dt;
        kinetic += 0.5 * dudt.norm_sqr();
        potential += 0.5 * c * c * k2 * (s0[i] * s1[i].conj()).re;
    }
    Ok((kinetic + potential) * norm)
}
