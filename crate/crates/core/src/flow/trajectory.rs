use std::io::Write;

use serde::Serialize;

use super::ode::{integrate, integrate_terminal, StepPolicy};
use crate::problem::ProblemSpec;
use crate::{Error, Matrix, Result, Vector};

/// Sampled solution `(X, P, U)` of the characteristic system from seed `z`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CharTrajectory {
    pub seed: Vector,
    pub times: Vec<f64>,
    pub x: Vec<Vector>,
    pub p: Vec<Vector>,
    pub u: Vec<f64>,
    /// Formal order of the integrator that produced the samples.
    pub order: u8,
}

/// Variational samples `(X_z, P_z, U_z)` along a [`CharTrajectory`].
/// `U_z` is stored as a column vector holding the row `∂U/∂z`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarTrajectory {
    pub char: CharTrajectory,
    pub xz: Vec<Matrix>,
    pub pz: Vec<Matrix>,
    pub uz: Vec<Vector>,
}

/// Empirical bounds over a trajectory, used to size shooting boxes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryBounds {
    pub max_x: f64,
    pub max_xdot: f64,
    pub max_p: f64,
    pub max_u: f64,
}

/// State at a single time, used to restart integrations.
#[derive(Debug, Clone, PartialEq)]
pub struct CharState {
    pub x: Vector,
    pub p: Vector,
    pub u: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarState {
    pub char: CharState,
    pub xz: Matrix,
    pub pz: Matrix,
    pub uz: Vector,
}

fn pack_char(s: &CharState) -> Vector {
    let n = s.x.len();
    let mut y = Vector::zeros(2 * n + 1);
    y.rows_mut(0, n).copy_from(&s.x);
    y.rows_mut(n, n).copy_from(&s.p);
    y[2 * n] = s.u;
    y
}

fn unpack_char(y: &Vector, n: usize) -> CharState {
    CharState {
        x: y.rows(0, n).into_owned(),
        p: y.rows(n, n).into_owned(),
        u: y[2 * n],
    }
}

fn pack_var(s: &VarState) -> Vector {
    let n = s.char.x.len();
    let base = 2 * n + 1;
    let mut y = Vector::zeros(base + 2 * n * n + n);
    y.rows_mut(0, base).copy_from(&pack_char(&s.char));
    y.rows_mut(base, n * n).copy_from_slice(s.xz.as_slice());
    y.rows_mut(base + n * n, n * n).copy_from_slice(s.pz.as_slice());
    y.rows_mut(base + 2 * n * n, n).copy_from(&s.uz);
    y
}

fn unpack_var(y: &Vector, n: usize) -> VarState {
    let base = 2 * n + 1;
    VarState {
        char: unpack_char(y, n),
        xz: Matrix::from_column_slice(n, n, &y.as_slice()[base..base + n * n]),
        pz: Matrix::from_column_slice(n, n, &y.as_slice()[base + n * n..base + 2 * n * n]),
        uz: y.rows(base + 2 * n * n, n).into_owned(),
    }
}

fn lie_rhs(spec: &ProblemSpec, s: f64, y: &Vector) -> Result<Vector> {
    let n = spec.n;
    let st = unpack_char(y, n);
    let j = spec.hamiltonian_jet(s, &st.x, &st.p, st.u, 1)?;
    let mut dy = Vector::zeros(2 * n + 1);
    dy.rows_mut(0, n).copy_from(&j.h_p);
    dy.rows_mut(n, n).copy_from(&(-&j.h_x - &st.p * j.h_u));
    dy[2 * n] = st.p.dot(&j.h_p) - j.value;
    Ok(dy)
}

fn var_rhs(spec: &ProblemSpec, s: f64, y: &Vector) -> Result<Vector> {
    let n = spec.n;
    let base = 2 * n + 1;
    let ys = y.as_slice();
    let x = y.rows(0, n).into_owned();
    let p = y.rows(n, n).into_owned();
    let u = ys[2 * n];
    let j = spec.hamiltonian_jet(s, &x, &p, u, 2)?;
    let xz = nalgebra::DMatrixView::from_slice(&ys[base..base + n * n], n, n);
    let pz = nalgebra::DMatrixView::from_slice(&ys[base + n * n..base + 2 * n * n], n, n);
    let uz = &ys[base + 2 * n * n..];
    let mut dy = Vector::zeros(y.len());
    let out = dy.as_mut_slice();
    for i in 0..n {
        out[i] = j.h_p[i];
        out[n + i] = -j.h_x[i] - p[i] * j.h_u;
    }
    out[2 * n] = p.dot(&j.h_p) - j.value;
    // column k of each block is the derivative with respect to z_k
    for k in 0..n {
        // lin_u = h_xuᵀ X_z + h_puᵀ P_z + h_uu U_zᵀ
        let mut lin_u = j.h_uu * uz[k];
        for m in 0..n {
            lin_u += j.h_xu[m] * xz[(m, k)] + j.h_pu[m] * pz[(m, k)];
        }
        let mut udot = -j.h_u * uz[k];
        for i in 0..n {
            let mut xd = j.h_pu[i] * uz[k];
            let mut pd = -j.h_xu[i] * uz[k] - j.h_u * pz[(i, k)] - p[i] * lin_u;
            for m in 0..n {
                xd += j.h_px[(i, m)] * xz[(m, k)] + j.h_pp[(i, m)] * pz[(m, k)];
                pd -= j.h_xx[(i, m)] * xz[(m, k)] + j.h_px[(m, i)] * pz[(m, k)];
            }
            out[base + k * n + i] = xd;
            out[base + n * n + k * n + i] = pd;
            udot += p[i] * xd - j.h_x[i] * xz[(i, k)];
        }
        out[base + 2 * n * n + k] = udot;
    }
    Ok(dy)
}

fn check_seed(spec: &ProblemSpec, z: &Vector) -> Result<()> {
    if z.len() != spec.n {
        return Err(Error::InvalidInput(format!(
            "seed has dimension {}, problem has n = {}",
            z.len(),
            spec.n
        )));
    }
    Ok(())
}

/// Initial characteristic state `(z, Du₀(z), u₀(z))`.
pub fn initial_state(spec: &ProblemSpec, z: &Vector) -> CharState {
    CharState {
        x: z.clone(),
        p: spec.du0(z),
        u: spec.u0(z),
    }
}

pub fn initial_var_state(spec: &ProblemSpec, z: &Vector) -> VarState {
    VarState {
        char: initial_state(spec, z),
        xz: Matrix::identity(spec.n, spec.n),
        pz: spec.d2u0(z),
        uz: spec.du0(z),
    }
}

/// Integrates the characteristic system from an arbitrary state at `s0`
/// to `s1` (either direction).
pub fn integrate_lie_from(
    spec: &ProblemSpec,
    seed: &Vector,
    s0: f64,
    state: &CharState,
    s1: f64,
    policy: StepPolicy,
) -> Result<CharTrajectory> {
    let n = spec.n;
    let (times, ys) = integrate(
        |s, y| lie_rhs(spec, s, y),
        s0,
        pack_char(state),
        s1,
        policy,
        &[],
        "characteristic state",
    )?;
    let mut traj = CharTrajectory {
        seed: seed.clone(),
        times,
        x: Vec::with_capacity(ys.len()),
        p: Vec::with_capacity(ys.len()),
        u: Vec::with_capacity(ys.len()),
        order: policy.order(),
    };
    for y in &ys {
        let st = unpack_char(y, n);
        traj.x.push(st.x);
        traj.p.push(st.p);
        traj.u.push(st.u);
    }
    Ok(traj)
}

pub fn integrate_lie(spec: &ProblemSpec, z: &Vector, t_end: f64, policy: StepPolicy) -> Result<CharTrajectory> {
    check_seed(spec, z)?;
    if !(t_end > 0.0) {
        return Err(Error::InvalidInput(format!("t_end must be positive, got {t_end}")));
    }
    integrate_lie_from(spec, z, 0.0, &initial_state(spec, z), t_end, policy)
}

pub fn integrate_variational_from(
    spec: &ProblemSpec,
    seed: &Vector,
    s0: f64,
    state: &VarState,
    s1: f64,
    policy: StepPolicy,
    breaks: &[f64],
) -> Result<VarTrajectory> {
    let n = spec.n;
    let (times, ys) = integrate(
        |s, y| var_rhs(spec, s, y),
        s0,
        pack_var(state),
        s1,
        policy,
        breaks,
        "variational state",
    )?;
    let mut out = VarTrajectory {
        char: CharTrajectory {
            seed: seed.clone(),
            times,
            x: Vec::with_capacity(ys.len()),
            p: Vec::with_capacity(ys.len()),
            u: Vec::with_capacity(ys.len()),
            order: policy.order(),
        },
        xz: Vec::with_capacity(ys.len()),
        pz: Vec::with_capacity(ys.len()),
        uz: Vec::with_capacity(ys.len()),
    };
    for y in &ys {
        let st = unpack_var(y, n);
        out.char.x.push(st.char.x);
        out.char.p.push(st.char.p);
        out.char.u.push(st.char.u);
        out.xz.push(st.xz);
        out.pz.push(st.pz);
        out.uz.push(st.uz);
    }
    Ok(out)
}

/// Joint integration of the characteristic and variational systems.
pub fn integrate_variational(spec: &ProblemSpec, z: &Vector, t_end: f64, policy: StepPolicy) -> Result<VarTrajectory> {
    integrate_variational_with_breaks(spec, z, t_end, policy, &[])
}

/// As [`integrate_variational`], with the listed times forced onto the grid.
pub fn integrate_variational_with_breaks(
    spec: &ProblemSpec,
    z: &Vector,
    t_end: f64,
    policy: StepPolicy,
    breaks: &[f64],
) -> Result<VarTrajectory> {
    check_seed(spec, z)?;
    if !(t_end > 0.0) {
        return Err(Error::InvalidInput(format!("t_end must be positive, got {t_end}")));
    }
    integrate_variational_from(spec, z, 0.0, &initial_var_state(spec, z), t_end, policy, breaks)
}

/// Terminal variational state at `t` (identity state at `t = 0`).
pub fn flow_terminal(spec: &ProblemSpec, z: &Vector, t: f64, policy: StepPolicy) -> Result<VarState> {
    check_seed(spec, z)?;
    let y = integrate_terminal(
        |s, y| var_rhs(spec, s, y),
        0.0,
        pack_var(&initial_var_state(spec, z)),
        t,
        policy,
        "variational state",
    )?;
    Ok(unpack_var(&y, spec.n))
}

/// Terminal variational state at `s1` from an arbitrary state at `s0`.
pub fn flow_terminal_from(spec: &ProblemSpec, s0: f64, state: &VarState, s1: f64, policy: StepPolicy) -> Result<VarState> {
    let y = integrate_terminal(|s, y| var_rhs(spec, s, y), s0, pack_var(state), s1, policy, "variational state")?;
    Ok(unpack_var(&y, spec.n))
}

/// Two-sided bump-and-difference approximation of `(X_z, P_z, U_z)` at `t`
/// from the characteristic flow alone.
pub fn bump_jacobian(spec: &ProblemSpec, z: &Vector, t: f64, policy: StepPolicy, bump: f64) -> Result<(Matrix, Matrix, Vector)> {
    let n = spec.n;
    let mut xz = Matrix::zeros(n, n);
    let mut pz = Matrix::zeros(n, n);
    let mut uz = Vector::zeros(n);
    for k in 0..n {
        let mut zp = z.clone();
        zp[k] += bump;
        let mut zm = z.clone();
        zm[k] -= bump;
        let a = integrate_lie(spec, &zp, t, policy)?;
        let b = integrate_lie(spec, &zm, t, policy)?;
        let (ia, ib) = (a.len() - 1, b.len() - 1);
        xz.set_column(k, &((&a.x[ia] - &b.x[ib]) / (2.0 * bump)));
        pz.set_column(k, &((&a.p[ia] - &b.p[ib]) / (2.0 * bump)));
        uz[k] = (a.u[ia] - b.u[ib]) / (2.0 * bump);
    }
    Ok((xz, pz, uz))
}

impl CharTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("non-empty trajectory")
    }

    pub fn state(&self, j: usize) -> CharState {
        CharState {
            x: self.x[j].clone(),
            p: self.p[j].clone(),
            u: self.u[j],
        }
    }

    pub fn terminal(&self) -> CharState {
        self.state(self.len() - 1)
    }

    /// `H_p` at each sample.
    pub fn velocities(&self, spec: &ProblemSpec) -> Result<Vec<Vector>> {
        (0..self.len())
            .map(|j| spec.velocity(self.times[j], &self.x[j], &self.p[j], self.u[j]))
            .collect()
    }

    pub fn bounds(&self, spec: &ProblemSpec) -> Result<TrajectoryBounds> {
        let v = self.velocities(spec)?;
        Ok(TrajectoryBounds {
            max_x: self.x.iter().map(|x| x.norm()).fold(0.0, f64::max),
            max_xdot: v.iter().map(|x| x.norm()).fold(0.0, f64::max),
            max_p: self.p.iter().map(|x| x.norm()).fold(0.0, f64::max),
            max_u: self.u.iter().map(|x| x.abs()).fold(0.0, f64::max),
        })
    }

    /// Midpoint collocation residual of the characteristic system, using
    /// cubic Hermite interpolation between samples.
    pub fn collocation_residual(&self, spec: &ProblemSpec) -> Result<f64> {
        let ys: Vec<Vector> = (0..self.len()).map(|j| pack_char(&self.state(j))).collect();
        let fs: Vec<Vector> = (0..self.len())
            .map(|j| lie_rhs(spec, self.times[j], &ys[j]))
            .collect::<Result<_>>()?;
        let mut worst: f64 = 0.0;
        for j in 0..self.len().saturating_sub(1) {
            let h = self.times[j + 1] - self.times[j];
            let ym = (&ys[j] + &ys[j + 1]) * 0.5 + (&fs[j] - &fs[j + 1]) * (h / 8.0);
            let dym = (&ys[j + 1] - &ys[j]) * (1.5 / h) - (&fs[j] + &fs[j + 1]) * 0.25;
            let f = lie_rhs(spec, self.times[j] + 0.5 * h, &ym)?;
            worst = worst.max((dym - f).amax());
        }
        Ok(worst)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let n = self.seed.len();
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["s".to_string()];
        header.extend((0..n).map(|i| format!("x{i}")));
        header.extend((0..n).map(|i| format!("p{i}")));
        header.push("u".into());
        wr.write_record(&header)?;
        for j in 0..self.len() {
            let mut row = vec![format!("{:.17e}", self.times[j])];
            row.extend(self.x[j].iter().map(|v| format!("{v:.17e}")));
            row.extend(self.p[j].iter().map(|v| format!("{v:.17e}")));
            row.push(format!("{:.17e}", self.u[j]));
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }
}

impl VarTrajectory {
    pub fn len(&self) -> usize {
        self.char.len()
    }

    pub fn is_empty(&self) -> bool {
        self.char.is_empty()
    }

    pub fn state(&self, j: usize) -> VarState {
        VarState {
            char: self.char.state(j),
            xz: self.xz[j].clone(),
            pz: self.pz[j].clone(),
            uz: self.uz[j].clone(),
        }
    }

    pub fn det_xz(&self, j: usize) -> f64 {
        self.xz[j].determinant()
    }

    /// `max_j ‖U_z(s_j) − Pᵀ(s_j) X_z(s_j)‖∞`.
    pub fn solve_u_residual(&self) -> f64 {
        (0..self.len())
            .map(|j| (&self.uz[j] - self.xz[j].transpose() * &self.char.p[j]).amax())
            .fold(0.0, f64::max)
    }

    /// `min_j ‖(X_z θ, P_z θ, U_z θ)‖` for a direction θ.
    pub fn nonvanishing(&self, theta: &Vector) -> f64 {
        (0..self.len())
            .map(|j| {
                let a = (&self.xz[j] * theta).norm_squared();
                let b = (&self.pz[j] * theta).norm_squared();
                let c = self.uz[j].dot(theta).powi(2);
                (a + b + c).sqrt()
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let n = self.char.seed.len();
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["s".to_string()];
        header.extend((0..n).map(|i| format!("x{i}")));
        header.extend((0..n).map(|i| format!("p{i}")));
        header.push("u".into());
        for name in ["xz", "pz"] {
            for i in 0..n {
                for k in 0..n {
                    header.push(format!("{name}{i}{k}"));
                }
            }
        }
        header.extend((0..n).map(|i| format!("uz{i}")));
        wr.write_record(&header)?;
        for j in 0..self.len() {
            let c = &self.char;
            let mut row = vec![format!("{:.17e}", c.times[j])];
            row.extend(c.x[j].iter().map(|v| format!("{v:.17e}")));
            row.extend(c.p[j].iter().map(|v| format!("{v:.17e}")));
            row.push(format!("{:.17e}", c.u[j]));
            for m in [&self.xz[j], &self.pz[j]] {
                for i in 0..n {
                    for k in 0..n {
                        row.push(format!("{:.17e}", m[(i, k)]));
                    }
                }
            }
            row.extend(self.uz[j].iter().map(|v| format!("{v:.17e}")));
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{caratheodory_solve, herglotz_residual, SampledCurve};
    use crate::problem::InitialDatum;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_vec(xs.to_vec())
    }

    fn linear(a: f64) -> InitialDatum {
        InitialDatum::Linear { a: vec![a] }
    }

    #[test]
    fn classical_linear_datum_closed_form() {
        let s = ProblemSpec::classical(1, linear(1.0)).unwrap();
        let tr = integrate_lie(&s, &v(&[0.0]), 2.0, StepPolicy::default()).unwrap();
        let end = tr.terminal();
        assert!((end.x[0] - 2.0).abs() < 1e-8);
        assert!((end.p[0] - 1.0).abs() < 1e-8);
        assert!((end.u - 1.0).abs() < 1e-8);
    }

    #[test]
    fn contact_linear_datum_closed_form() {
        let s = ProblemSpec::contact(1, 1.0, linear(1.0)).unwrap();
        let tr = integrate_lie(&s, &v(&[0.0]), 1.0, StepPolicy::default()).unwrap();
        let end = tr.terminal();
        let e = (-1f64).exp();
        assert!((end.p[0] - e).abs() < 1e-6);
        assert!((end.x[0] - (1.0 - e)).abs() < 1e-6);
    }

    #[test]
    fn focusing_initial_condition_is_exact() {
        let s = ProblemSpec::focusing(1, 1.0).unwrap();
        let st = initial_state(&s, &v(&[1.0]));
        assert_eq!((st.x[0], st.p[0], st.u), (1.0, -1.0, -0.5));
        let tr = integrate_variational(&s, &v(&[0.3]), 1.0, StepPolicy::default()).unwrap();
        assert_eq!(tr.xz[0][(0, 0)], 1.0);
        for j in 0..tr.len() {
            assert!((tr.xz[j][(0, 0)] - (1.0 - tr.char.times[j])).abs() < 1e-8);
        }
        assert!(tr.det_xz(tr.len() - 1).abs() < 1e-8);
    }

    #[test]
    fn flat_hessian_variational_state() {
        let s = ProblemSpec::classical(2, InitialDatum::Linear { a: vec![0.5, -1.0] }).unwrap();
        let tr = integrate_variational(&s, &v(&[0.2, 0.1]), 1.5, StepPolicy::default()).unwrap();
        for j in 0..tr.len() {
            assert!((&tr.xz[j] - Matrix::identity(2, 2)).amax() < 1e-12);
            assert!(tr.pz[j].amax() < 1e-12);
            assert!((&tr.uz[j] - v(&[0.5, -1.0])).amax() < 1e-12);
        }
    }

    #[test]
    fn variational_matches_bump_and_difference() {
        let s = ProblemSpec::contact(2, 0.4, InitialDatum::DoubleWell).unwrap();
        let z = v(&[0.3, -0.8]);
        let st = flow_terminal(&s, &z, 1.3, StepPolicy::default()).unwrap();
        let (xz, pz, uz) = bump_jacobian(&s, &z, 1.3, StepPolicy::default(), 1e-5).unwrap();
        assert!((&st.xz - xz).amax() < 1e-7);
        assert!((&st.pz - pz).amax() < 1e-7);
        assert!((&st.uz - uz).amax() < 1e-7);
    }

    #[test]
    fn time_reversal_returns_to_seed() {
        let s = ProblemSpec::contact(1, 0.7, InitialDatum::DoubleWell).unwrap();
        let z = v(&[0.9]);
        let fwd = integrate_lie(&s, &z, 2.0, StepPolicy::default()).unwrap();
        let back = integrate_lie_from(&s, &z, 2.0, &fwd.terminal(), 0.0, StepPolicy::default()).unwrap();
        let end = back.terminal();
        assert!((&end.x - &z).amax() < 1e-7);
        assert!((end.u - s.u0(&z)).abs() < 1e-7);
    }

    #[test]
    fn caratheodory_examples() {
        let c = ProblemSpec::classical(1, linear(0.0)).unwrap();
        let still = SampledCurve::straight(0.3, 1.7, &v(&[0.4]), &v(&[0.4]), 5).unwrap();
        assert_eq!(caratheodory_solve(&c, &still, 2.5).unwrap().terminal(), 2.5);
        let line = SampledCurve::straight(0.0, 1.0, &v(&[0.0]), &v(&[1.0]), 11).unwrap();
        assert!((caratheodory_solve(&c, &line, 0.0).unwrap().terminal() - 0.5).abs() < 1e-8);

        let d = ProblemSpec::contact(1, 1.0, linear(0.0)).unwrap();
        let still = SampledCurve::straight(0.5, 2.0, &v(&[1.0]), &v(&[1.0]), 4).unwrap();
        let r = caratheodory_solve(&d, &still, 3.0).unwrap();
        assert_eq!(r.u[0], 3.0);
        assert!((r.terminal() - 3.0 * (-1.5f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn herglotz_detects_corrupted_momentum() {
        for s in [
            ProblemSpec::classical(1, linear(0.7)).unwrap(),
            ProblemSpec::contact(1, 1.0, linear(0.7)).unwrap(),
        ] {
            let tr = integrate_lie(&s, &v(&[0.2]), 2.0, StepPolicy::default()).unwrap();
            assert!(herglotz_residual(&s, &tr).unwrap().max() <= 1e-6);
            let mut bad = tr.clone();
            bad.p.iter_mut().for_each(|p| p[0] += 0.1);
            assert!(herglotz_residual(&s, &bad).unwrap().max() >= 0.05);
        }
    }

    #[test]
    fn collocation_residual_is_small() {
        let s = ProblemSpec::contact(1, 1.0, InitialDatum::DoubleWell).unwrap();
        let tr = integrate_lie(&s, &v(&[0.5]), 2.0, StepPolicy::default()).unwrap();
        assert!(tr.collocation_residual(&s).unwrap() < 1e-8);
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let s = ProblemSpec::classical(1, linear(1.0)).unwrap();
        let tr = integrate_variational(&s, &v(&[0.0]), 0.05, StepPolicy::default()).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("s,x0,p0,u,xz00,pz00,uz0"));
        assert_eq!(text.lines().count(), tr.len() + 1);
    }
}
