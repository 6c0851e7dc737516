//! The six subcommands. Each writes its tables and a `report.txt` into the
//! output directory; all numerical work goes through ordered parallel maps,
//! so output bytes do not depend on the thread count.

use std::path::{Path, PathBuf};

use manakov_core::floquet::{
    char_data, discriminant_centered, f_function, identity_residuals, label_by_continuity, CharData,
    IdentityResiduals, IDENTITY_TOL,
};
use manakov_core::linalg::c;
use manakov_core::monodromy::monodromy;
use manakov_core::quasimomentum::{
    action_variables, gap_discriminant_bounds, gap_invariants, gap_profiles, hamiltonian_bounds, herglotz_check,
    moments_asymptotic_fit, moments_gap_sum, moments_tilted_fit, QMoments, QmConfig,
};
use manakov_core::spectra::{
    assemble_gaps, audit_gap_signs, branch_points_in_disc, classify_spectrum, eigenvalue_prediction,
    eigenvalues_in_disc, f_zeros, AsymptoticModel, BranchKind, BranchPoint, Parity, PeriodicEigenvalue,
    SpectraOptions, SpectrumLabel,
};
use manakov_core::zs::{reduction_check, zs_eigenvalues, zs_gap_estimate, ReductionReport, ZsPotential};
use manakov_core::{Error, PeriodicPotential, C64};
use rayon::prelude::*;

use crate::config::{Resolved, RunConfig};
use crate::output::{cplx, num, Report, Table};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Monodromy,
    Scan,
    Spectrum,
    Traces,
    ZsCheck,
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Monodromy => "monodromy",
            Command::Scan => "scan",
            Command::Spectrum => "spectrum",
            Command::Traces => "traces",
            Command::ZsCheck => "zs-check",
            Command::Verify => "verify",
        }
    }
}

/// Result of a completed run. `failures > 0` means some check failed or
/// some disc could not be resolved; the details are in the report.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: String,
    pub files: Vec<PathBuf>,
    pub failures: usize,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.failures == 0 {
            0
        } else {
            2
        }
    }
}

/// Validates `cfg`, runs `cmd` on a pool of `cfg.threads` workers and writes
/// the artifacts.
pub fn run(cfg: &RunConfig, cmd: Command) -> Result<Outcome, CliError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        let mut ctx = Ctx::new(cfg, cmd)?;
        match cmd {
            Command::Monodromy => run_monodromy(&mut ctx)?,
            Command::Scan => run_scan(&mut ctx)?,
            Command::Spectrum => run_spectrum(&mut ctx)?,
            Command::Traces => run_traces(&mut ctx)?,
            Command::ZsCheck => run_zs_check(&mut ctx)?,
            Command::Verify => run_verify(&mut ctx)?,
        }
        ctx.finish()
    })
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    digest: String,
    out: PathBuf,
    pot: Resolved,
    opts: SpectraOptions,
    ns: Vec<i64>,
    report: Report,
    files: Vec<PathBuf>,
    failures: usize,
}

impl<'a> Ctx<'a> {
    fn new(cfg: &'a RunConfig, cmd: Command) -> Result<Self, CliError> {
        let digest = cfg.digest()?;
        let pot = cfg.potential.resolve()?;
        let opts = SpectraOptions { disc_radius: cfg.grid.disc_radius, ..SpectraOptions::default() }
            .with_tol_scale(cfg.tol_scale);
        let mut report = Report::new(cmd.name(), &digest);
        report.section("potential");
        let v = &pot.v;
        let mc = v.motion_constants();
        let b = v.beta_spectrum();
        report.line("k_max", v.k_max());
        report.line("modes", v.modes().count());
        report.line("norm", num(v.norm()));
        report.line("H0 H1 H2", format!("{} {} {}", num(mc.h0), num(mc.h1), num(mc.h2)));
        report.line("beta1 beta2 beta3", format!("{} {} {}", num(b.beta1), num(b.beta2), num(b.beta3)));
        report.line("beta_o", num(b.beta_o));
        if let Some(r) = pot.projection_residual {
            report.line("projection_residual", num(r));
        }
        if pot.zs.is_some() {
            report.line("preset", "zs");
        }
        Ok(Self {
            cfg,
            digest,
            out: cfg.out.clone(),
            pot,
            opts,
            ns: cfg.n_range()?.indices(),
            report,
            files: Vec::new(),
            failures: 0,
        })
    }

    fn v(&self) -> &PeriodicPotential {
        &self.pot.v
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn table(&mut self, name: &str, t: &Table) -> Result<(), CliError> {
        let p = self.path(name);
        t.write(&p, &self.digest)?;
        self.files.push(p);
        Ok(())
    }

    /// One pass/fail line in the report.
    fn check(&mut self, name: &str, value: f64, tol: f64, ok: bool) {
        if !ok {
            self.failures += 1;
        }
        self.report.line(name, format!("{} (tol {}) {}", num(value), num(tol), if ok { "PASS" } else { "FAIL" }));
    }

    fn finish(mut self) -> Result<Outcome, CliError> {
        self.report.section("summary");
        self.report.line("failures", self.failures);
        let p = self.path("report.txt");
        self.report.write(&p)?;
        self.files.push(p);
        Ok(Outcome { report: self.report.as_str().to_string(), files: self.files, failures: self.failures })
    }
}

/// A per-disc failure. Refusals (no nondegenerate structure to locate) are
/// recorded but are not failures.
struct Diag {
    n: i64,
    stage: &'static str,
    error: Error,
}

impl Diag {
    fn is_failure(&self) -> bool {
        !matches!(self.error, Error::Refused(_) | Error::DegenerateFamily { .. })
    }
}

fn diagnostics_table(diags: &[Diag]) -> Table {
    let mut t = Table::new(&["n", "stage", "failure", "error"]);
    for d in diags {
        let msg = d.error.to_string().replace(',', ";");
        t.push(vec![d.n.to_string(), d.stage.into(), (d.is_failure() as u8).to_string(), msg]);
    }
    t
}

fn split<T>(ns: &[i64], stage: &'static str, results: Vec<manakov_core::Result<Vec<T>>>, diags: &mut Vec<Diag>) -> Vec<T> {
    let mut out = Vec::new();
    for (&n, r) in ns.iter().zip(results) {
        match r {
            Ok(v) => out.extend(v),
            Err(error) => diags.push(Diag { n, stage, error }),
        }
    }
    out
}

fn run_monodromy(ctx: &mut Ctx) -> Result<(), CliError> {
    let lams: Vec<C64> = ctx.cfg.monodromy.lambdas.iter().map(|p| c(p[0], p[1])).collect();
    if lams.is_empty() {
        return Err(CliError::Config("monodromy needs monodromy.lambdas".into()));
    }
    let v = ctx.v().clone();
    let ms = lams.par_iter().map(|&l| monodromy(&v, l)).collect::<manakov_core::Result<Vec<_>>>()?;
    let mut header = vec!["lambda_re".to_string(), "lambda_im".to_string()];
    for i in 1..=3 {
        for j in 1..=3 {
            header.push(format!("psi{i}{j}_re"));
            header.push(format!("psi{i}{j}_im"));
        }
    }
    header.extend(["est_error".into(), "steps".into()]);
    let mut t = Table::new(&header);
    let mut worst = 0.0f64;
    for m in &ms {
        let mut row: Vec<String> = cplx(m.lambda).into();
        for i in 0..3 {
            for j in 0..3 {
                row.extend(cplx(m.psi[(i, j)]));
            }
        }
        row.push(num(m.est_error));
        row.push(m.steps.to_string());
        t.push(row);
        worst = worst.max(m.est_error);
    }
    ctx.table("monodromy.csv", &t)?;
    ctx.report.section("monodromy");
    ctx.report.line("points", ms.len());
    ctx.report.line("max_est_error", num(worst));
    Ok(())
}

fn run_scan(ctx: &mut Ctx) -> Result<(), CliError> {
    let v = ctx.v().clone();
    let xs = ctx.cfg.scan_grid();
    let im = ctx.cfg.grid.scan_im;
    let cds: Vec<CharData> = xs.par_iter().map(|&x| char_data(&v, c(x, im))).collect::<manakov_core::Result<_>>()?;
    let labels = label_by_continuity(&cds);
    let spectrum = if im == 0.0 { Some(classify_spectrum(&v, &xs, &ctx.opts)?) } else { None };
    let mut t = Table::new(&[
        "lambda_re", "lambda_im", "T_re", "T_im", "WT_re", "WT_im", "D_re", "D_im", "f_re", "f_im", "Delta1_re",
        "Delta1_im", "Delta2_re", "Delta2_im", "Delta3_re", "Delta3_im", "label", "unimodular", "degenerate",
    ]);
    let (mut sigma1, mut inconsistent) = (0usize, 0usize);
    for (i, (cd, m)) in cds.iter().zip(&labels).enumerate() {
        let mut row: Vec<String> = cplx(cd.lambda).into();
        row.extend(cplx(cd.t));
        row.extend(cplx(cd.ttil));
        row.extend(cplx(discriminant_centered(cd)));
        row.extend(cplx(f_function(cd)));
        for d in m.lyapunov().delta {
            row.extend(cplx(d));
        }
        match &spectrum {
            Some(s) => {
                let p = s[i];
                row.push(
                    match p.label {
                        SpectrumLabel::Sigma1 => "sigma1",
                        SpectrumLabel::Sigma3 => "sigma3",
                        SpectrumLabel::Endpoint => "endpoint",
                    }
                    .into(),
                );
                row.push(p.unimodular.to_string());
                sigma1 += (p.label == SpectrumLabel::Sigma1) as usize;
                inconsistent += (!p.consistent) as usize;
            }
            None => {
                row.push("-".into());
                row.push("-".into());
            }
        }
        row.push((m.degenerate as u8).to_string());
        t.push(row);
    }
    ctx.table("scan.csv", &t)?;
    ctx.report.section("scan");
    ctx.report.line("points", xs.len());
    ctx.report.line("scan_im", num(im));
    if spectrum.is_some() {
        ctx.report.line("sigma1_points", sigma1);
        ctx.report.line("label_multiplier_inconsistent", inconsistent);
    }
    Ok(())
}

/// `None` with a reason when `𝔇` has no four-zeros-per-disc structure.
fn branch_refusal(v: &PeriodicPotential) -> Option<Error> {
    let beta_o = v.beta_spectrum().beta_o;
    if v.is_zero() || !(beta_o > 1e-14 * v.norm_sq().powi(2)) {
        Some(Error::DegenerateFamily { beta_o })
    } else {
        None
    }
}

fn branch_points(v: &PeriodicPotential, ns: &[i64], opts: &SpectraOptions, diags: &mut Vec<Diag>) -> Vec<BranchPoint> {
    if let Some(error) = branch_refusal(v) {
        diags.push(Diag { n: ns[0], stage: "branch_points", error });
        return Vec::new();
    }
    let per: Vec<_> = ns.par_iter().map(|&n| branch_points_in_disc(v, n, opts)).collect();
    split(ns, "branch_points", per, diags)
}

fn kind_name(k: BranchKind) -> &'static str {
    match k {
        BranchKind::Real => "real",
        BranchKind::ComplexPair => "complex",
        BranchKind::Degenerate => "degenerate",
    }
}

fn run_spectrum(ctx: &mut Ctx) -> Result<(), CliError> {
    let v = ctx.v().clone();
    let ns = ctx.ns.clone();
    let mut diags = Vec::new();
    let points = branch_points(&v, &ns, &ctx.opts, &mut diags);
    let model = AsymptoticModel::new(&v);
    let mut t = Table::new(&["n", "j", "re", "im", "kind", "multiplicity", "residual", "predicted"]);
    for p in &points {
        let pred = if p.n != 0 { num(model.branch_prediction(p.n, p.j.clamp(1, 3))) } else { "-".into() };
        t.push(vec![
            p.n.to_string(),
            p.j.to_string(),
            num(p.location.re),
            num(p.location.im),
            kind_name(p.kind).into(),
            p.multiplicity.to_string(),
            num(p.residual),
            pred,
        ]);
    }
    ctx.table("branch_points.csv", &t)?;

    let gaps = assemble_gaps(&points);
    let mut t = Table::new(&["n", "j", "lam_minus", "lam_plus", "width"]);
    for g in &gaps {
        t.push(vec![g.n.to_string(), g.j.to_string(), num(g.lam_minus), num(g.lam_plus), num(g.width())]);
    }
    ctx.table("gaps.csv", &t)?;

    let per: Vec<_> = ns.par_iter().map(|&n| eigenvalues_in_disc(&v, n, &ctx.opts)).collect();
    let eigs: Vec<PeriodicEigenvalue> = split(&ns, "eigenvalues", per, &mut diags);
    let mut t = Table::new(&["n", "j", "parity", "re", "im", "multiplicity", "predicted"]);
    for e in &eigs {
        let pred = eigenvalue_prediction(&v, e.n)[(e.j.max(1) as usize - 1).min(2)];
        let parity = if e.parity == Parity::Periodic { "periodic" } else { "antiperiodic" };
        t.push(vec![
            e.n.to_string(),
            e.j.to_string(),
            parity.into(),
            num(e.value.re),
            num(e.value.im),
            e.multiplicity.to_string(),
            num(pred),
        ]);
    }
    ctx.table("eigenvalues.csv", &t)?;

    let per: Vec<_> = ns.iter().map(|&n| f_zeros(&v, &[n], &ctx.opts)).collect();
    let fz = split(&ns, "f_zeros", per, &mut diags);
    let mut t = Table::new(&["n", "re", "im", "multiplicity", "predicted"]);
    for z in &fz {
        let pred = if z.n != 0 { num(model.f_zero_prediction(z.n)) } else { "-".into() };
        t.push(vec![z.n.to_string(), num(z.value.re), num(z.value.im), z.multiplicity.to_string(), pred]);
    }
    ctx.table("f_zeros.csv", &t)?;
    ctx.table("diagnostics.csv", &diagnostics_table(&diags))?;

    ctx.report.section("spectrum");
    ctx.report.line("n_range", &ctx.cfg.n_range);
    ctx.report.line("disc_radius", num(ctx.opts.disc_radius));
    ctx.report.line("branch_points", points.len());
    ctx.report.line("complex_branch_points", points.iter().filter(|p| p.kind != BranchKind::Real).count());
    ctx.report.line("gaps_open", gaps.iter().filter(|g| !g.is_empty()).count());
    ctx.report.line("gaps_closed", gaps.iter().filter(|g| g.is_empty()).count());
    ctx.report.line("periodic_eigenvalues", eigs.len());
    ctx.report.line("f_zeros", fz.len());
    if !gaps.is_empty() {
        let audit = audit_gap_signs(&v, &gaps, 8)?;
        ctx.report.section("sign audit");
        let inside = audit.max_inside;
        ctx.check("max D inside gaps", inside, 0.0, !(inside >= 0.0));
        let between = audit.min_between;
        let tol = ctx.opts.endpoint_tol;
        ctx.check("min D between gaps", between, tol, !(between < -tol));
    }
    report_diags(ctx, &diags);
    Ok(())
}

fn report_diags(ctx: &mut Ctx, diags: &[Diag]) {
    ctx.report.section("diagnostics");
    ctx.report.line("entries", diags.len());
    for d in diags {
        ctx.report.line(&format!("n={} {}", d.n, d.stage), &d.error);
        if d.is_failure() {
            ctx.failures += 1;
        }
    }
}

fn moments_row(t: &mut Table, name: &str, m: &QMoments) {
    let rel = m.relative_to_targets();
    let mut row = vec![name.to_string()];
    row.extend(m.q.map(num));
    row.extend(m.error.map(num));
    row.extend(rel.map(num));
    row.push(num(m.residual));
    t.push(row);
}

fn run_traces(ctx: &mut Ctx) -> Result<(), CliError> {
    let v = ctx.v().clone();
    if let Some(e) = branch_refusal(&v) {
        return Err(e.into());
    }
    let ns = ctx.ns.clone();
    let points = manakov_core::spectra::locate_branch_points(&v, &ns, &ctx.opts)?;
    let gaps = assemble_gaps(&points);
    let tc = ctx.cfg.traces.clone();
    let profiles = gap_profiles(&v, &gaps, tc.gap_nodes)?;
    let mc = v.motion_constants();

    let qcfg = QmConfig::from_branch_points(&points);
    let gs = moments_gap_sum(&v, &gaps, tc.order)?;
    let fit = moments_asymptotic_fit(&v, &qcfg)?;
    let tilted = moments_tilted_fit(&v, &qcfg)?;
    let mut t = Table::new(&[
        "route", "Q0", "Q1", "Q2", "err0", "err1", "err2", "rel0", "rel1", "rel2", "fit_residual",
    ]);
    let mut row = vec!["two_thirds_H".to_string()];
    row.extend([mc.h0, mc.h1, mc.h2].map(|h| num(2.0 / 3.0 * h)));
    row.extend(std::iter::repeat("0".to_string()).take(7));
    t.push(row);
    moments_row(&mut t, "gap_sum", &gs);
    moments_row(&mut t, "asymptotic_fit", &fit);
    moments_row(&mut t, "tilted_fit", &tilted);
    ctx.table("traces.csv", &t)?;

    let hb = hamiltonian_bounds(&v, &profiles);
    let slack = hb.slack();
    let mut t = Table::new(&["inequality", "h2", "rhs", "tail", "slack", "holds"]);
    for (name, rhs, tail, s) in [("H1", hb.rhs_h1, hb.tail_h1, slack[0]), ("H2", hb.rhs_h2, hb.tail_h2, slack[1])] {
        t.push(vec![name.into(), num(hb.h2), num(rhs), num(tail), num(s), ((s >= 0.0) as u8).to_string()]);
    }
    ctx.table("bounds.csv", &t)?;

    let (actions, sum) = action_variables(&v, &gaps, tc.order)?;
    let mut t = Table::new(&["n", "j", "action"]);
    for a in &actions {
        t.push(vec![a.n.to_string(), a.j.to_string(), num(a.value)]);
    }
    ctx.table("actions.csv", &t)?;

    // Slit heights of the comb domain: 𝔮 along each gap.
    let mut t = Table::new(&["n", "j", "lambda", "q", "q1", "q2", "p1p2"]);
    for p in &profiles {
        for nd in &p.nodes {
            t.push(vec![
                p.gap.n.to_string(),
                p.gap.j.to_string(),
                num(nd.lambda),
                num(nd.q()),
                num(nd.q1),
                num(nd.q2),
                num(nd.p1p2),
            ]);
        }
    }
    ctx.table("gap_profiles.csv", &t)?;

    let hp: Vec<C64> = tc.herglotz.iter().map(|p| c(p[0], p[1])).collect();
    let herg = herglotz_check(&v, &gaps, &hp, &qcfg, tc.order)?;
    let mut t = Table::new(&["lambda_re", "lambda_im", "direct_re", "direct_im", "represented_re", "represented_im", "residual"]);
    for r in &herg.rows {
        let mut row: Vec<String> = cplx(r.lambda).into();
        row.extend(cplx(r.direct));
        row.extend(cplx(r.represented));
        row.push(num(r.residual));
        t.push(row);
    }
    ctx.table("herglotz.csv", &t)?;

    let inv = gap_invariants(&v, &profiles);
    let db = gap_discriminant_bounds(&profiles);
    let r = &mut ctx.report;
    r.section("traces");
    r.line("n_range", &ctx.cfg.n_range);
    r.line("lambda_c", num(qcfg.lambda_c));
    r.line("gaps_open", gaps.iter().filter(|g| !g.is_empty()).count());
    for (name, m) in [("gap_sum", &gs), ("asymptotic_fit", &fit), ("tilted_fit", &tilted)] {
        r.line(&format!("{name} Q"), format!("{} {} {}", num(m.q[0]), num(m.q[1]), num(m.q[2])));
        let rel = m.relative_to_targets();
        r.line(&format!("{name} rel_to_2/3H"), format!("{} {} {}", num(rel[0]), num(rel[1]), num(rel[2])));
    }
    r.section("gap invariants");
    r.line("q_mismatch", num(inv.q_mismatch));
    r.line("p_spread", num(inv.p_spread));
    r.line("p_lattice", num(inv.p_lattice));
    r.line("min_q max_q q_bound", format!("{} {} {}", num(inv.min_q), num(inv.max_q), num(inv.q_bound)));
    r.line("discriminant_identity_rel", num(db.max_relative));
    r.line("discriminant_bound_violations", db.lower_violations + db.upper_violations);
    r.section("hamiltonian bounds");
    r.line("tau_plus tau_bullet", format!("{} {}", num(hb.tau_plus), num(hb.tau_bullet)));
    r.line("H1 slack", num(slack[0]));
    r.line("H2 slack", num(slack[1]));
    r.section("herglotz");
    r.line("max_residual", num(herg.max_residual()));
    r.line("truncation", num(herg.truncation));
    r.section("action variables");
    r.line("count", actions.len());
    r.line("sum", num(sum));
    r.line("norm_sq", num(v.norm_sq()));
    Ok(())
}

fn reduction_table(t: &mut Table, idx: usize, rep: &ReductionReport) {
    for r in &rep.rows {
        t.push(vec![
            idx.to_string(),
            num(r.lambda),
            num(r.delta_zs),
            num(r.multiplier),
            num(r.lyapunov),
            num(r.vanishing),
            num(r.discriminant),
            num(r.integrator_error),
        ]);
    }
}

/// Largest reduction residual the checks accept.
const REDUCTION_TOL: f64 = 1e-7;

fn run_zs_check(ctx: &mut Ctx) -> Result<(), CliError> {
    let zs: ZsPotential =
        ctx.pot.zs.clone().ok_or_else(|| CliError::Config("zs-check needs potential.preset = \"zs\"".into()))?;
    let grid = ctx.cfg.scan_grid();
    let mut dirs = vec![zs.clone()];
    if let Some(e) = ctx.cfg.zs.second_e {
        dirs.push(zs.with_direction([c(e[0][0], e[0][1]), c(e[1][0], e[1][1])])?);
    }
    let mut t = Table::new(&[
        "direction", "lambda", "delta_zs", "multiplier", "lyapunov", "vanishing", "discriminant", "integrator_error",
    ]);
    let mut maxima = Vec::new();
    for (i, u) in dirs.iter().enumerate() {
        let rep = reduction_check(u, &grid)?;
        reduction_table(&mut t, i, &rep);
        maxima.push(rep.max);
    }
    ctx.table("reduction.csv", &t)?;

    let ns = ctx.ns.clone();
    let eigs = zs_eigenvalues(&zs, &ns, &ctx.opts)?;
    let v = ctx.v().clone();
    let bps = if ctx.cfg.zs.compare_branch_points {
        Some(manakov_core::spectra::locate_branch_points(&v, &ns, &ctx.opts)?)
    } else {
        None
    };
    let mut t = Table::new(&["n", "re", "im", "multiplicity", "branch_point_distance"]);
    let mut worst_match = 0.0f64;
    for e in &eigs {
        let d = bps.as_ref().map(|b| b.iter().map(|p| (p.location - e.value).norm()).fold(f64::INFINITY, f64::min));
        if let Some(d) = d {
            worst_match = worst_match.max(d);
        }
        t.push(vec![
            e.n.to_string(),
            num(e.value.re),
            num(e.value.im),
            e.multiplicity.to_string(),
            d.map(num).unwrap_or_else(|| "-".into()),
        ]);
    }
    ctx.table("zs_eigenvalues.csv", &t)?;

    let est = zs_gap_estimate(&zs, &ns, &ctx.opts)?;
    let mut t = Table::new(&["n", "lam_minus", "lam_plus", "width", "predicted", "asymptotic_residual", "delta_residual"]);
    for g in &est.gaps {
        t.push(vec![
            g.n.to_string(),
            num(g.lam_minus),
            num(g.lam_plus),
            num(g.width()),
            num(g.predicted),
            num(g.asymptotic_residual),
            num(g.delta_residual),
        ]);
    }
    ctx.table("zs_gaps.csv", &t)?;

    let tol = REDUCTION_TOL * ctx.cfg.tol_scale;
    ctx.report.section("reduction");
    for (i, m) in maxima.iter().enumerate() {
        for (name, x) in ["multiplier", "lyapunov", "vanishing", "discriminant"].iter().zip(m) {
            ctx.check(&format!("direction {i} {name}"), *x, tol, *x <= tol);
        }
    }
    ctx.report.section("eigenvalues");
    ctx.report.line("zs_eigenvalues", eigs.len());
    if let Some(b) = &bps {
        ctx.report.line("branch_points_3x3", b.len());
        ctx.check("max distance to a branch point", worst_match, tol, worst_match <= tol);
    }
    ctx.report.section("gap estimate (reported)");
    ctx.report.line("norm_u", num(est.norm_u));
    ctx.report.line("g", num(est.g));
    ctx.report.line("tail", num(est.tail));
    ctx.report.line("lower_slack", format!("{} {}", num(est.lower_slack), if est.lower_holds() { "holds" } else { "violated" }));
    ctx.report.line("upper_slack", format!("{} {}", num(est.upper_slack), if est.upper_holds() { "holds" } else { "violated" }));
    Ok(())
}

fn run_verify(ctx: &mut Ctx) -> Result<(), CliError> {
    let v = ctx.v().clone();
    let ts = ctx.cfg.tol_scale;
    let lams = ctx.cfg.strip_grid();
    let rows: Vec<IdentityResiduals> =
        lams.par_iter().map(|&l| identity_residuals(&v, l)).collect::<manakov_core::Result<_>>()?;
    let mut t = Table::new(&["lambda_re", "lambda_im", "det", "symmetry", "product", "delta_disc", "im_d", "holds"]);
    let mut worst = [0.0f64; 5];
    for r in &rows {
        let vals = [r.det, r.symmetry, r.product, r.delta_disc, r.im_d];
        for (w, x) in worst.iter_mut().zip(vals) {
            *w = w.max(x);
        }
        let mut row: Vec<String> = cplx(r.lambda).into();
        row.extend(vals.map(num));
        row.push((r.holds(ts) as u8).to_string());
        t.push(row);
    }
    ctx.table("identities.csv", &t)?;
    ctx.report.section("identities");
    ctx.report.line("points", rows.len());
    let names = ["det psi = e^{i lambda}", "symmetry", "multiplier product", "4 D f^2 = D_Delta", "Im D on real axis"];
    for ((name, w), tol) in names.iter().zip(worst).zip(IDENTITY_TOL) {
        ctx.check(name, w, tol * ts, w <= tol * ts);
    }

    ctx.report.section("potential");
    let b = v.beta_spectrum();
    let mc = v.motion_constants();
    let scale = mc.h0.max(1e-300);
    let e1 = (b.beta1 + b.beta2 - b.beta3).abs().max((b.beta3 - mc.h0).abs()) / scale;
    ctx.check("beta1 + beta2 = beta3 = H0", e1, 1e-12 * ts, e1 <= 1e-12 * ts);
    let e2 = (b.beta_o - (b.beta2 - b.beta1).powi(2)).abs() / (mc.h0 * mc.h0).max(f64::MIN_POSITIVE);
    ctx.check("beta_o = (beta2 - beta1)^2", e2, 1e-10 * ts, e2 <= 1e-10 * ts);

    ctx.report.section("discs");
    if v.is_zero() {
        ctx.report.line("branch points", "trivial (v = 0: every disc holds the free crossing)");
    } else if let Some(e) = branch_refusal(&v) {
        ctx.report.line("branch points", format!("skipped: {e}"));
    } else {
        let ns = ctx.ns.clone();
        let mut diags = Vec::new();
        let points = branch_points(&v, &ns, &ctx.opts, &mut diags);
        let mut t = Table::new(&["n", "count", "real", "holds"]);
        let mut bad = 0usize;
        for &n in &ns {
            let here: Vec<&BranchPoint> = points.iter().filter(|p| p.n == n).collect();
            if diags.iter().any(|d| d.n == n) {
                continue;
            }
            let count: usize = here.iter().map(|p| p.multiplicity).sum();
            let real: usize = here.iter().filter(|p| p.kind == BranchKind::Real).map(|p| p.multiplicity).sum();
            // The four-zeros count is asymptotic; below |n| = 5 it is
            // reported but not required.
            let ok = count == 4 || n.abs() < 5;
            bad += (!ok) as usize;
            t.push(vec![n.to_string(), count.to_string(), real.to_string(), (ok as u8).to_string()]);
        }
        ctx.table("disc_counts.csv", &t)?;
        ctx.check("discs without four zeros (|n| >= 5)", bad as f64, 0.0, bad == 0);
        let gaps = assemble_gaps(&points);
        if !gaps.is_empty() {
            let audit = audit_gap_signs(&v, &gaps, 8)?;
            ctx.check("max D inside gaps", audit.max_inside, 0.0, !(audit.max_inside >= 0.0));
            let tol = ctx.opts.endpoint_tol;
            ctx.check("min D between gaps", audit.min_between, tol, !(audit.min_between < -tol));
        }
        report_diags(ctx, &diags);
    }

    if let Some(zs) = ctx.pot.zs.clone() {
        ctx.report.section("reduction");
        let grid: Vec<f64> = (0..=80).map(|i| -10.0 + 0.25 * i as f64 + 0.013).collect();
        let rep = reduction_check(&zs, &grid)?;
        let tol = REDUCTION_TOL * ts;
        for (name, x) in ["multiplier", "lyapunov", "vanishing", "discriminant"].iter().zip(rep.max) {
            ctx.check(name, x, tol, x <= tol);
        }
    }
    Ok(())
}

/// Loads a config, applies command-line overrides and runs.
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub n_range: Option<String>,
    pub threads: Option<usize>,
    pub tol_scale: Option<f64>,
}

pub fn load_with_overrides(path: &Path, o: &Overrides) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(p) = &o.out {
        cfg.out = p.clone();
    }
    if let Some(r) = &o.n_range {
        cfg.n_range = r.clone();
    }
    if let Some(t) = o.threads {
        cfg.threads = t;
    }
    if let Some(x) = o.tol_scale {
        cfg.tol_scale = x;
    }
    Ok(cfg)
}
