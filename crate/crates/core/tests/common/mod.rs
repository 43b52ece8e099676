//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use cellid::objective::SuiteObjective;
use cellid::params::CellParameters;
use cellid::protocols::{build_suite, make_cc_discharge, make_dst, DatasetSuite, Termination};
use cellid::spm::{init_state, simulate_profile, DiscreteSpm};
use cellid::ConfigSet;

pub const F: f64 = 96485.33212;
pub const R_GAS: f64 = 8.314462618;

pub fn reference() -> CellParameters {
    ConfigSet::builtin().cell.reference_parameters()
}

pub fn reference_suite() -> DatasetSuite {
    let set = ConfigSet::builtin();
    build_suite(&set.cell.reference_parameters(), &set.cell.protocol, &set.dst).unwrap()
}

pub fn suite_objective(suite: &DatasetSuite) -> SuiteObjective {
    let set = ConfigSet::builtin();
    SuiteObjective::new(
        suite,
        &set.cell.reference_parameters(),
        set.optimizers.objective.penalty_voltage,
        set.optimizers.objective.validation_pooling,
    )
    .unwrap()
}

/// Spherical diffusion `dc/dt = D/r^2 d/dr(r^2 dc/dr)` on `n` equal shells,
/// implicit Euler in time, with `D dc/dr = q` at the surface and no flux at
/// the centre.
pub struct SphereFvm {
    radius: f64,
    d: f64,
    c: Vec<f64>,
}

impl SphereFvm {
    pub fn new(n: usize, radius: f64, d: f64, c0: f64) -> Self {
        SphereFvm {
            radius,
            d,
            c: vec![c0; n],
        }
    }

    fn dr(&self) -> f64 {
        self.radius / self.c.len() as f64
    }

    /// Advances by `dt` with inward surface flux density `q` [mol/m^2/s].
    pub fn step(&mut self, q: f64, dt: f64) {
        let n = self.c.len();
        let dr = self.dr();
        let vol = |i: usize| (((i + 1) as f64 * dr).powi(3) - (i as f64 * dr).powi(3)) / 3.0;
        let face = |i: usize| ((i + 1) as f64 * dr).powi(2) * self.d / dr; // between i and i+1
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            let v = vol(i) / dt;
            diag[i] = v;
            rhs[i] = v * self.c[i];
            if i > 0 {
                let k = face(i - 1);
                lower[i] = -k;
                diag[i] += k;
            }
            if i + 1 < n {
                let k = face(i);
                upper[i] = -k;
                diag[i] += k;
            }
        }
        rhs[n - 1] += self.radius * self.radius * q;
        // Thomas algorithm
        for i in 1..n {
            let m = lower[i] / diag[i - 1];
            diag[i] -= m * upper[i - 1];
            rhs[i] -= m * rhs[i - 1];
        }
        self.c[n - 1] = rhs[n - 1] / diag[n - 1];
        for i in (0..n - 1).rev() {
            self.c[i] = (rhs[i] - upper[i] * self.c[i + 1]) / diag[i];
        }
    }

    /// Surface value extrapolated from the outer shell centre with flux `q`.
    pub fn surface(&self, q: f64) -> f64 {
        self.c[self.c.len() - 1] + 0.5 * self.dr() * q / self.d
    }

    /// Volume average.
    pub fn average(&self) -> f64 {
        let dr = self.dr();
        let total: f64 = self
            .c
            .iter()
            .enumerate()
            .map(|(i, c)| c * (((i + 1) as f64 * dr).powi(3) - (i as f64 * dr).powi(3)))
            .sum();
        total / self.radius.powi(3)
    }
}

/// Inward flux densities `(q_n, q_p)` for cell current `i` (charge positive).
pub fn surface_fluxes(p: &CellParameters, i: f64) -> (f64, f64) {
    let (f, e) = (&p.fixed, &p.estimands);
    let s_n = 3.0 * f.a_n * f.l_n * e.eps_n / f.r_s_n;
    let s_p = 3.0 * f.a_p * f.l_p * e.eps_p / f.r_s_p;
    (i / (F * s_n), -i / (F * s_p))
}

/// Terminal voltage from surface concentrations, written out directly.
pub fn voltage_from_surface(p: &CellParameters, cs_n: f64, cs_p: f64, i: f64) -> f64 {
    let (f, e) = (&p.fixed, &p.estimands);
    let s_n = 3.0 * f.a_n * f.l_n * e.eps_n / f.r_s_n;
    let s_p = 3.0 * f.a_p * f.l_p * e.eps_p / f.r_s_p;
    let j0_n = e.r_eff_n * (f.c_e * cs_n * (e.c_max_n - cs_n)).sqrt();
    let j0_p = e.r_eff_p * (f.c_e * cs_p * (e.c_max_p - cs_p)).sqrt();
    let k = 2.0 * R_GAS * f.temperature / F;
    let eta_n = k * (-i / (2.0 * s_n * j0_n)).asinh();
    let eta_p = k * (i / (2.0 * s_p * j0_p)).asinh();
    p.ocp_p.eval(cs_p / e.c_max_p) - p.ocp_n.eval(cs_n / e.c_max_n) + eta_p - eta_n + i * e.r0
}

/// Per-step `(cs_n, cs_p, voltage)` of the two-state parabolic model,
/// written out without the library's coefficient tables.
pub fn straight_line_spm(p: &CellParameters, currents: &[f64], dt: f64) -> Vec<(f64, f64, f64)> {
    let (f, e) = (&p.fixed, &p.estimands);
    let (mut cb_n, mut cb_p) = (e.c_n0, e.c_p0);
    let (mut q_n, mut q_p) = (0.0, 0.0);
    let mut out = Vec::with_capacity(currents.len());
    for &i in currents {
        let vn = F * f.a_n * f.l_n * e.eps_n;
        let vp = F * f.a_p * f.l_p * e.eps_p;
        cb_n += dt * i / vn;
        cb_p -= dt * i / vp;
        q_n = (1.0 - 30.0 * e.d_n * dt / (f.r_s_n * f.r_s_n)) * q_n + 15.0 * dt * i / (2.0 * f.r_s_n * vn);
        q_p = (1.0 - 30.0 * e.d_p * dt / (f.r_s_p * f.r_s_p)) * q_p - 15.0 * dt * i / (2.0 * f.r_s_p * vp);
        let cs_n = cb_n + 8.0 * f.r_s_n / 35.0 * q_n + f.r_s_n * f.r_s_n / (35.0 * e.d_n * 3.0 * vn) * i;
        let cs_p = cb_p + 8.0 * f.r_s_p / 35.0 * q_p - f.r_s_p * f.r_s_p / (35.0 * e.d_p * 3.0 * vp) * i;
        out.push((cs_n, cs_p, voltage_from_surface(p, cs_n, cs_p, i)));
    }
    out
}

pub struct Comparison {
    pub worst_cs_rel: f64,
    pub worst_v_after_60s: f64,
    pub rows: usize,
}

/// Runs the parabolic model and a 200-shell diffusion solution side by side
/// for a constant-current discharge ending at the lower cutoff.
pub fn compare_with_fvm(p: &CellParameters, c_rate: f64) -> Comparison {
    let dt = 1.0;
    let profile = make_cc_discharge(c_rate, p, 1.5 / c_rate, dt).unwrap();
    let trace = simulate_profile(p, &profile).unwrap();
    assert_eq!(trace.termination, Termination::VMin);
    let model = DiscreteSpm::new(p, dt).unwrap();
    let (f, e) = (&p.fixed, &p.estimands);
    let mut neg = SphereFvm::new(200, f.r_s_n, e.d_n, e.c_n0);
    let mut pos = SphereFvm::new(200, f.r_s_p, e.d_p, e.c_p0);
    let mut state = init_state(p);
    let substeps = 4;
    let mut out = Comparison {
        worst_cs_rel: 0.0,
        worst_v_after_60s: 0.0,
        rows: trace.len(),
    };
    for row in &trace.rows {
        let i = row.current;
        let (q_n, q_p) = surface_fluxes(p, i);
        for _ in 0..substeps {
            neg.step(q_n, dt / substeps as f64);
            pos.step(q_p, dt / substeps as f64);
        }
        state = model.step(&state, i);
        let (cs_n, cs_p) = model.surface(&state, i);
        let (ref_n, ref_p) = (neg.surface(q_n), pos.surface(q_p));
        out.worst_cs_rel = out
            .worst_cs_rel
            .max(((cs_n - ref_n) / ref_n).abs())
            .max(((cs_p - ref_p) / ref_p).abs());
        if row.t > 60.0 {
            let v_ref = voltage_from_surface(p, ref_n, ref_p, i);
            out.worst_v_after_60s = out.worst_v_after_60s.max((row.voltage - v_ref).abs());
        }
    }
    out
}

/// Worst relative deviations over the DST trace of (a) each average
/// concentration from plain coulomb counting and (b) the total lithium
/// inventory from its initial value.
pub fn dst_bookkeeping_drift(p: &CellParameters) -> (f64, f64) {
    let set = ConfigSet::builtin();
    let profile = make_dst(p, set.cell.protocol.dst_repetitions, &set.dst, 1.0).unwrap();
    let trace = simulate_profile(p, &profile).unwrap();
    assert!(trace.len() > 1000);
    let (f, e) = (&p.fixed, &p.estimands);
    let model = DiscreteSpm::new(p, 1.0).unwrap();
    let vol_n = F * f.a_n * f.l_n * e.eps_n;
    let vol_p = F * f.a_p * f.l_p * e.eps_p;
    let total0 = vol_n * e.c_n0 + vol_p * e.c_p0;
    let mut s = init_state(p);
    let mut charge = 0.0;
    let (mut worst_count, mut worst_total): (f64, f64) = (0.0, 0.0);
    for row in &trace.rows {
        s = model.step(&s, row.current);
        charge += row.current * trace.dt;
        let expected_n = e.c_n0 + charge / vol_n;
        let expected_p = e.c_p0 - charge / vol_p;
        worst_count = worst_count
            .max(((s.cbar_n - expected_n) / expected_n).abs())
            .max(((s.cbar_p - expected_p) / expected_p).abs());
        let total = vol_n * s.cbar_n + vol_p * s.cbar_p;
        worst_total = worst_total.max(((total - total0) / total0).abs());
    }
    (worst_count, worst_total)
}
