use collabmech::alpha::{self, default_tolerance, g_normalized, normalized_bracket, solve_a_m, AlphaSolution};
use collabmech::analytics::{baseline_penalties, e_of_m, penalty_at_nstar, pos_mechany};
use collabmech::simulation::{
    self, closed_form_penalty, deviation_menu, highdim_menu, highdim_nic_check, nash_deviation_sweep,
    run_replications, MechanismKind, Scenario, SweepRow, SE_THRESHOLD,
};
use collabmech::{Error, Family, ProblemParams};

use crate::report::{Cell, Report};
use crate::{CliError, ParamArgs, SimArgs};

const FIGURE_FAILURE: u8 = 3;
const STATISTICAL_FAILURE: u8 = 4;
const ANALYTIC_FAILURE: u8 = 5;

const FIGURE_M_MIN: usize = 5;
const FIGURE_M_MAX: usize = 500;

pub fn solve_alpha(args: &ParamArgs) -> Result<Report, CliError> {
    if args.agents <= 4 {
        return Err(Error::NoCorruptionRegime(args.agents).into());
    }
    let p = args.resolve()?;
    let sol = solve_alpha_for(&p)?;
    let mut r = Report::new(
        "solve-alpha",
        &["alpha", "a_m", "bracket_lo", "bracket_hi", "residual", "iterations", "warnings"],
        ANALYTIC_FAILURE,
    );
    r.row(vec![
        sol.alpha.into(),
        sol.a_m.into(),
        sol.bracket_lo.into(),
        sol.bracket_hi.into(),
        sol.residual.into(),
        sol.iterations.into(),
        sol.warnings.join("; ").into(),
    ]);
    r.params = Some(p);
    r.solution = Some(sol);
    Ok(r)
}

fn solve_alpha_for(p: &ProblemParams) -> Result<AlphaSolution, CliError> {
    Ok(alpha::solve_alpha(p, default_tolerance(p))?)
}

/// Alpha where the mechanism needs one, zero otherwise.
fn alpha_for(p: &ProblemParams, mechanism: MechanismKind) -> Result<(f64, Option<AlphaSolution>), CliError> {
    if mechanism == MechanismKind::CrossCheckCorrupt && p.uses_corruption() {
        let sol = solve_alpha_for(p)?;
        Ok((sol.alpha, Some(sol)))
    } else {
        Ok((0.0, None))
    }
}

fn check_figure_range((lo, hi): (usize, usize)) -> Result<(), CliError> {
    if lo < FIGURE_M_MIN || hi > FIGURE_M_MAX {
        return Err(CliError::Flags(format!(
            "--m-range must lie within {FIGURE_M_MIN}:{FIGURE_M_MAX}, got {lo}:{hi}"
        )));
    }
    Ok(())
}

pub fn g_check(range: (usize, usize)) -> Result<Report, CliError> {
    check_figure_range(range)?;
    let mut r = Report::new("figures g-check", &["m", "g_upper"], FIGURE_FAILURE);
    let mut negative = Vec::new();
    for m in range.0..=range.1 {
        let (_, hi) = normalized_bracket(m);
        let g = g_normalized(hi, m)?;
        if !(g > 0.0) {
            negative.push(m);
        }
        r.row(vec![m.into(), g.into()]);
    }
    r.assert(negative.is_empty(), format!("G > 0 at the upper bracket end; violations at m = {negative:?}"));
    if range.0 <= 20 && range.1 > 20 {
        r.note("C_m drops from 20 to 5 after m = 20, so the curve jumps there");
    }
    Ok(r)
}

pub fn em_check(range: (usize, usize)) -> Result<Report, CliError> {
    check_figure_range(range)?;
    let mut r = Report::new("figures em-check", &["m", "e_m", "five_over_m"], FIGURE_FAILURE);
    let mut violations = Vec::new();
    for m in range.0..=range.1 {
        let e = e_of_m(m, solve_a_m(m, 1e-13)?);
        let bound = 5.0 / m as f64;
        if !(e < bound) {
            violations.push(m);
        }
        r.row(vec![m.into(), e.into(), bound.into()]);
    }
    r.assert(violations.is_empty(), format!("E(m) < 5/m; violations at m = {violations:?}"));
    Ok(r)
}

pub fn pos_table(args: &ParamArgs, range: (usize, usize)) -> Result<Report, CliError> {
    if range.0 < 5 {
        return Err(Error::NoCorruptionRegime(range.0).into());
    }
    let mut r = Report::new("experiment pos-table", &["m", "alpha", "pos"], ANALYTIC_FAILURE);
    let mut out_of_range = Vec::new();
    let mut worst_identity: f64 = 0.0;
    for m in range.0..=range.1 {
        let p = args.resolve_for(m)?;
        let alpha = solve_alpha_for(&p)?.alpha;
        let pos = pos_mechany(&p, alpha)?;
        let social = m as f64 * penalty_at_nstar(&p, alpha)?;
        worst_identity = worst_identity.max((social / baseline_penalties(&p).global_min_social - pos).abs());
        if !(pos > 1.0 && pos < 2.0) {
            out_of_range.push(m);
        }
        r.row(vec![m.into(), alpha.into(), pos.into()]);
    }
    r.assert(out_of_range.is_empty(), format!("1 < PoS < 2; violations at m = {out_of_range:?}"));
    r.assert(
        worst_identity < 1e-9,
        format!("PoS equals the social penalty over its minimum; max gap {worst_identity:.3e}"),
    );
    Ok(r)
}

fn scenario(args: &SimArgs) -> Result<(Scenario, Option<AlphaSolution>), CliError> {
    let p = args.params.resolve()?;
    let mechanism = args.mechanism();
    let (alpha, sol) = alpha_for(&p, mechanism)?;
    let mut sc = Scenario::recommended(p, mechanism, alpha, args.distribution()?, args.replications, args.seed)?;
    if let Some(grid) = args.mu_grid() {
        sc.mu_grid = grid;
        sc.validate()?;
    }
    Ok((sc, sol))
}

fn base_report(command: &str, columns: &[&str], failure: u8, sc: &Scenario, sol: Option<AlphaSolution>) -> Report {
    let mut r = Report::new(command, columns, failure);
    r.params = Some(sc.params);
    r.solution = sol;
    r.seed = Some(sc.master_seed);
    r.replications = Some(sc.replications);
    r
}

const SWEEP_COLUMNS: [&str; 8] =
    ["label", "samples", "penalty", "std_error", "closed_form", "advantage_in_se", "profitable", "note"];

fn sweep_row(row: &SweepRow) -> Vec<Cell> {
    vec![
        row.label.as_str().into(),
        row.strategy.samples.into(),
        row.penalty.as_ref().map(|p| p.total).into(),
        row.penalty.as_ref().map(|p| p.std_error).into(),
        row.closed_form.into(),
        row.advantage_in_se.into(),
        row.profitable.into(),
        row.note.clone().unwrap_or_default().into(),
    ]
}

pub fn nash_sweep(args: &SimArgs) -> Result<Report, CliError> {
    if args.mu_grid.is_some() {
        return Err(CliError::Flags(
            "nash-sweep picks the mu grid per deviation; --mu-grid is not accepted here".into(),
        ));
    }
    let (sc, sol) = scenario(args)?;
    let menu = deviation_menu(&sc.params, sc.mechanism, sc.alpha, args.unrestricted)?;
    let sweep = nash_deviation_sweep(&sc, 0, &menu)?;
    let mut r = base_report("experiment nash-sweep", &SWEEP_COLUMNS, STATISTICAL_FAILURE, &sc, sol);
    r.row(vec![
        "recommended".into(),
        sc.profile[0].samples.into(),
        sweep.recommended.total.into(),
        sweep.recommended.std_error.into(),
        sweep.recommended_closed_form.into(),
        0.0.into(),
        false.into(),
        "".into(),
    ]);
    for row in &sweep.rows {
        r.row(sweep_row(row));
    }
    let profitable: Vec<&str> = sweep.rows.iter().filter(|x| x.profitable).map(|x| x.label.as_str()).collect();
    // incentive compatibility is only claimed for cross-check-and-corrupt and
    // for the other two mechanisms within their restricted strategy spaces
    let claimed = match sc.mechanism {
        MechanismKind::CrossCheckCorrupt => true,
        MechanismKind::SizeCheck | MechanismKind::CorruptDeploy { .. } => !args.unrestricted,
        MechanismKind::Pool => false,
    };
    if claimed {
        r.assert(
            profitable.is_empty(),
            format!("no deviation beats the recommendation by {SE_THRESHOLD} SE; profitable: {profitable:?}"),
        );
    } else {
        r.note(format!(
            "this mechanism is not incentive compatible in this strategy space; profitable deviations (expected): {profitable:?}"
        ));
    }
    Ok(r)
}

pub fn ir_check(args: &SimArgs) -> Result<Report, CliError> {
    let (sc, sol) = scenario(args)?;
    let ir = simulation::ir_check(&sc, 0)?;
    let mut r = base_report(
        "experiment ir-check",
        &["participating", "std_error", "standalone", "ok"],
        STATISTICAL_FAILURE,
        &sc,
        sol,
    );
    r.row(vec![ir.participating.into(), ir.std_error.into(), ir.standalone.into(), ir.ok.into()]);
    r.assert(ir.ok, format!("participating penalty + {SE_THRESHOLD} SE below the standalone penalty"));
    Ok(r)
}

pub fn mc_vs_closed_form(args: &SimArgs) -> Result<Report, CliError> {
    let (sc, sol) = scenario(args)?;
    let p = sc.params;
    if sc.mechanism == MechanismKind::CrossCheckCorrupt
        && p.uses_corruption()
        && !matches!(sc.distribution.family(), Family::Gaussian { .. })
    {
        return Err(CliError::Flags(
            "the cross-check closed form assumes Gaussian data; use --distribution gaussian".into(),
        ));
    }
    let closed = closed_form_penalty(&p, sc.mechanism, sc.alpha, &sc.profile[0])?
        .ok_or_else(|| CliError::Flags("no closed form is available for this configuration".into()))?;
    let pen = run_replications(&sc, 0)?;
    let closed_risk = closed - pen.cost;
    let mut r = base_report(
        "experiment mc-vs-closed-form",
        &["mu", "mean_sq_error", "std_error", "closed_form_risk", "z"],
        STATISTICAL_FAILURE,
        &sc,
        sol,
    );
    let mut worst: f64 = 0.0;
    for cell in &pen.per_mu {
        let z = (cell.mean_sq_error - closed_risk) / cell.std_error;
        worst = worst.max(z.abs());
        r.row(vec![cell.mu[0].into(), cell.mean_sq_error.into(), cell.std_error.into(), closed_risk.into(), z.into()]);
    }
    r.assert(
        worst <= SE_THRESHOLD,
        format!("empirical risk within {SE_THRESHOLD} SE of {closed_risk:.10} at every mean; max |z| = {worst:.3}"),
    );
    Ok(r)
}

pub fn highdim_check(args: &SimArgs) -> Result<Report, CliError> {
    if args.mechanism != crate::MechanismArg::CrossCheck {
        return Err(CliError::Flags("highdim-check runs cross-check only".into()));
    }
    if args.mu_grid.is_some() {
        return Err(CliError::Flags("highdim-check picks the mu grid per deviation".into()));
    }
    let (sc, sol) = scenario(args)?;
    let menu = highdim_menu(&sc.params, sc.alpha)?;
    let h = highdim_nic_check(&sc, 0, &menu)?;
    let mut r = base_report("experiment highdim-check", &SWEEP_COLUMNS, STATISTICAL_FAILURE, &sc, sol);
    r.row(vec![
        "recommended".into(),
        sc.profile[0].samples.into(),
        h.recommended.total.into(),
        h.recommended.std_error.into(),
        None.into(),
        0.0.into(),
        false.into(),
        "".into(),
    ]);
    for row in &h.rows {
        r.row(sweep_row(row));
    }
    r.assert(
        h.ok,
        format!(
            "recommended / best deviation ('{}') = {:.4} (se {:.4}) within {:.4}",
            h.menu_min_label, h.ratio, h.ratio_std_error, h.bound
        ),
    );
    r.assert(h.pos_ok, format!("social penalty ratio {:.4} below {:.4}", h.pos_proxy, h.pos_bound));
    Ok(r)
}
