//! The five subcommands: check, reduce, run, compare, sweep.

use crate::config::{
    IntegratorSection, ReducedFileBody, RunSection, ScenarioConfig, SystemSection,
};
use crate::output::{fmt, render_report, write_csv, write_plot_script, ReportLine};
use anyhow::{anyhow, bail};
use contact_reduce::expr::Expression;
use contact_reduce::integrate::{
    integrate, integrate_symplectic, reparametrize, ContactRhs, EventSpec, IntegratorConfig,
    Method, StopReason, Trajectory,
};
use contact_reduce::lifted::lifted_scaling_symmetry;
use contact_reduce::phase::{
    ContactSystem, Guard, Params, ScalarField, SymplecticSystem, VectorField,
};
use contact_reduce::reduction::{
    compare_reduced, contact_reduce as reduce_op, validate_chart, AdaptedChart,
    ReducedContactSystem, ReductionConfig,
};
use contact_reduce::scaling::{
    check_scaling_function, check_scaling_symmetry, local_action_solution, loop_action,
    sample_points, SampleSpec, ScalingFunction, ScalingSymmetry,
};
use contact_reduce::systems::{instantiate, BlowupRhs, NBodyBlowup, ScenarioSpace, SystemBundle};
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub struct Ctx {
    pub cfg: ScenarioConfig,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub tol: f64,
    pub quiet: bool,
}

impl Ctx {
    fn say(&self, msg: &str) {
        if !self.quiet {
            println!("{msg}");
        }
    }
}

fn bundle_params(sys: &SystemSection) -> Vec<(String, f64)> {
    sys.params.iter().map(|(k, v)| (k.clone(), *v)).collect()
}

fn get_bundle(sys: &SystemSection) -> anyhow::Result<SystemBundle> {
    let id = sys
        .bundle
        .as_deref()
        .ok_or_else(|| anyhow!("this command needs [system].bundle"))?;
    let params = bundle_params(sys);
    let borrowed: Vec<(&str, f64)> = params.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    Ok(instantiate(id, &borrowed)?)
}

fn inline_system(sys: &SystemSection) -> anyhow::Result<SymplecticSystem> {
    let vars = sys
        .variables
        .clone()
        .ok_or_else(|| anyhow!("inline systems need [system].variables"))?;
    let h_text = sys
        .hamiltonian
        .as_deref()
        .ok_or_else(|| anyhow!("inline systems need [system].hamiltonian"))?;
    let param_names: Vec<String> = sys.params.keys().cloned().collect();
    let param_pairs: Vec<(&str, f64)> = sys.params.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    let h = Expression::parse_owned(h_text, &vars, &param_names)?;
    let mut guard = Guard::none();
    for g in &sys.guard {
        guard = guard.and_expr_above(
            Expression::parse_owned(g, &vars, &param_names)?,
            sys.guard_min,
        );
    }
    let system = SymplecticSystem::new(
        vars,
        ScalarField::from_expression(h),
        Params::new(&param_pairs),
        guard,
    )?;
    Ok(if sys.separable {
        system.separable()
    } else {
        system
    })
}

fn integrator_config(
    section: &IntegratorSection,
    var_names: &[String],
    param_values: &[f64],
    param_names: &[String],
) -> anyhow::Result<IntegratorConfig> {
    let mut cfg = IntegratorConfig {
        method: Method::parse(&section.method)?,
        step: section.step,
        abs_tol: section.abs_tol,
        rel_tol: section.rel_tol,
        max_steps: section.max_steps,
        events: Vec::new(),
    };
    for ev in &section.events {
        let expr = Expression::parse_owned(&ev.expr, var_names, param_names)?;
        let params = param_values.to_vec();
        cfg.events.push(EventSpec {
            name: ev.name.clone(),
            field: Arc::new(move |x: &[f64]| expr.eval(x, &params)),
            threshold: ev.below,
        });
    }
    Ok(cfg)
}

// ---------------------------------------------------------------------------
// check

pub fn cmd_check(ctx: &Ctx) -> anyhow::Result<i32> {
    let scaling = ctx
        .cfg
        .scaling
        .as_ref()
        .ok_or_else(|| anyhow!("check needs a [scaling] section"))?;

    let (system, symmetry, spec, rho): (
        SymplecticSystem,
        ScalingSymmetry,
        SampleSpec,
        Option<ScalingFunction>,
    ) = if ctx.cfg.system.bundle.is_some() {
        let bundle = get_bundle(&ctx.cfg.system)?;
        if scaling.lifted {
            let l = bundle
                .lift
                .as_ref()
                .ok_or_else(|| anyhow!("bundle `{}` has no lifted variant", bundle.id))?;
            let d = lifted_scaling_symmetry(l, scaling.degree.unwrap_or(1.0))?;
            (l.system.clone(), d, l.sample_spec(), None)
        } else {
            let mut d = bundle.symmetries.first().cloned().ok_or_else(|| {
                anyhow!(
                    "bundle `{}` has no direct scaling symmetry; set lifted = true",
                    bundle.id
                )
            })?;
            if let Some(deg) = scaling.degree {
                d.degree = deg;
            }
            let rho = match &scaling.chart {
                Some(id) => Some(bundle.scaling_function(id)?.clone()),
                None => None,
            };
            (bundle.system.clone(), d, bundle.sample_spec.clone(), rho)
        }
    } else {
        let system = inline_system(&ctx.cfg.system)?;
        let comps = scaling
            .symmetry
            .as_ref()
            .ok_or_else(|| anyhow!("inline check needs [scaling].symmetry"))?;
        let texts: Vec<&str> = comps.iter().map(|s| s.as_str()).collect();
        let field = VectorField::parse(&texts, &system.var_names, &system.params.names)?;
        let degree = scaling
            .degree
            .ok_or_else(|| anyhow!("inline check needs [scaling].degree"))?;
        let spec = SampleSpec::standard(system.n_dof);
        let rho = match &scaling.rho {
            Some(text) => Some(ScalingFunction::new(
                text,
                Expression::parse_owned(text, &system.var_names, &system.params.names)?,
            )),
            None => None,
        };
        (system, ScalingSymmetry::new(field, degree), spec, rho)
    };

    let samples = sample_points(&spec, &system.guard, &system.params.values, 100, ctx.seed)?;
    let report = check_scaling_symmetry(&system, &symmetry, &samples, ctx.tol)?;
    let mut lines = vec![
        ReportLine {
            key: "liouville_residual".into(),
            value: report.liouville_residual,
            tolerance: Some(ctx.tol),
        },
        ReportLine {
            key: "degree_residual".into(),
            value: report.degree_residual,
            tolerance: Some(ctx.tol),
        },
        ReportLine {
            key: "commutator_residual".into(),
            value: report.commutator_residual,
            tolerance: Some(ctx.tol),
        },
        ReportLine {
            key: "condition_lh_residual".into(),
            value: report.condition_lh_residual,
            tolerance: Some(ctx.tol),
        },
    ];
    if let Some(rho) = &rho {
        let r = check_scaling_function(&symmetry, rho, &samples, &system.params.values)?;
        lines.push(ReportLine {
            key: format!("scaling_function_residual[{}]", rho.id),
            value: r,
            tolerance: Some(ctx.tol),
        });
    }
    let (text, pass) = render_report(&lines);
    println!("{text}");
    Ok(if pass { 0 } else { 1 })
}

// ---------------------------------------------------------------------------
// reduce

fn reduced_file_text(red: &ReducedContactSystem, parent: &str) -> String {
    let contact = &red.contact;
    let mut out = String::from("[reduced_system]\n");
    out.push_str(&format!("parent = \"{parent}\"\n"));
    out.push_str(&format!("chart = \"{}\"\n", red.provenance.chart_id));
    out.push_str(&format!("degree = {:?}\n", contact.degree));
    let vars: Vec<String> = contact
        .var_names
        .iter()
        .map(|v| format!("\"{v}\""))
        .collect();
    out.push_str(&format!("variables = [{}]\n", vars.join(", ")));
    out.push_str(&format!(
        "hamiltonian = \"{}\"\n",
        red.h0_expression().to_text()
    ));
    let angular: Vec<String> = red.chart.angular.iter().map(|b| b.to_string()).collect();
    out.push_str(&format!("angular = [{}]\n", angular.join(", ")));
    if !contact.params.names.is_empty() {
        out.push_str("\n[reduced_system.params]\n");
        for (name, value) in contact.params.names.iter().zip(&contact.params.values) {
            out.push_str(&format!("{name} = {value:?}\n"));
        }
    }
    out
}

pub fn cmd_reduce(ctx: &Ctx) -> anyhow::Result<i32> {
    let scaling = ctx
        .cfg
        .scaling
        .as_ref()
        .ok_or_else(|| anyhow!("reduce needs a [scaling] section"))?;

    let (red, parent, report_lines) = if ctx.cfg.system.bundle.is_some() {
        let bundle = get_bundle(&ctx.cfg.system)?;
        if scaling.lifted {
            let rl = bundle
                .reduced_lift
                .as_ref()
                .ok_or_else(|| anyhow!("bundle `{}` has no lifted reduction", bundle.id))?;
            (rl.red.clone(), format!("{}-lifted", bundle.id), vec![])
        } else {
            let chart_id = scaling
                .chart
                .as_deref()
                .ok_or_else(|| anyhow!("reduce needs [scaling].chart"))?;
            let red = bundle.reduction(chart_id)?.clone();
            let d = &bundle.symmetries[0];
            let rho = bundle.scaling_function(chart_id)?;
            let chart = bundle.chart(chart_id)?;
            let cfg = ReductionConfig::standard(bundle.system.n_dof)
                .with_sample_spec(bundle.sample_spec.clone());
            let chart_report = validate_chart(&bundle.system, d, rho, chart, &cfg)?;
            let lines = vec![
                ReportLine {
                    key: "chart_inverse_residual".into(),
                    value: chart_report.inverse_residual,
                    tolerance: Some(cfg.tol_inverse),
                },
                ReportLine {
                    key: "chart_pushforward_residual".into(),
                    value: chart_report.pushforward_residual,
                    tolerance: Some(cfg.tol_pushforward),
                },
                ReportLine {
                    key: "chart_pullback_residual".into(),
                    value: chart_report.pullback_residual,
                    tolerance: Some(cfg.tol_pullback),
                },
            ];
            (red, bundle.id.clone(), lines)
        }
    } else {
        // Fully inline reduction: system + symmetry + rho + chart.
        let system = inline_system(&ctx.cfg.system)?;
        let comps = scaling
            .symmetry
            .as_ref()
            .ok_or_else(|| anyhow!("inline reduce needs [scaling].symmetry"))?;
        let texts: Vec<&str> = comps.iter().map(|s| s.as_str()).collect();
        let field = VectorField::parse(&texts, &system.var_names, &system.params.names)?;
        let degree = scaling
            .degree
            .ok_or_else(|| anyhow!("inline reduce needs [scaling].degree"))?;
        let d = ScalingSymmetry::new(field, degree);
        let rho_text = scaling
            .rho
            .as_deref()
            .ok_or_else(|| anyhow!("inline reduce needs [scaling].rho"))?;
        let rho = ScalingFunction::new(
            rho_text,
            Expression::parse_owned(rho_text, &system.var_names, &system.params.names)?,
        );
        let ic = scaling
            .inline_chart
            .as_ref()
            .ok_or_else(|| anyhow!("inline reduce needs [scaling].inline_chart"))?;
        let fwd: Vec<Expression> = ic
            .forward
            .iter()
            .map(|t| Expression::parse_owned(t, &system.var_names, &system.params.names))
            .collect::<contact_reduce::Result<_>>()?;
        let inv: Vec<Expression> = ic
            .inverse
            .iter()
            .map(|t| Expression::parse_owned(t, &ic.vars, &system.params.names))
            .collect::<contact_reduce::Result<_>>()?;
        let mut domain = Guard::none();
        for g in &ic.domain {
            domain = domain.and_expr_above(
                Expression::parse_owned(g, &system.var_names, &system.params.names)?,
                ic.domain_min,
            );
        }
        let chart = AdaptedChart::new(&ic.id, fwd, inv, ic.angular.clone(), domain)?;
        let cfg = ReductionConfig::standard(system.n_dof);
        let red = reduce_op(&system, &d, &rho, &chart, Guard::none(), &cfg)?;
        (red, "inline".to_string(), vec![])
    };

    let (report_text, _) = render_report(&report_lines);
    ctx.say(&report_text);
    std::fs::create_dir_all(&ctx.out_dir)?;
    let path = ctx
        .out_dir
        .join(format!("{parent}-{}-reduced.toml", red.provenance.chart_id));
    std::fs::write(&path, reduced_file_text(&red, &parent))?;
    println!("reduced system written to {}", path.display());
    println!(
        "H0 = {}  (degree {})",
        red.h0_expression().to_text(),
        red.contact.degree
    );
    Ok(0)
}

// ---------------------------------------------------------------------------
// run

enum RunTarget {
    Original(Box<SystemBundle>, Option<SymplecticSystem>),
    Reduced(Box<ReducedContactSystem>),
    ReducedFromFile(ContactSystem),
    Blowup(NBodyBlowup, Box<SystemBundle>),
}

impl RunTarget {
    fn var_names(&self) -> Vec<String> {
        match self {
            RunTarget::Original(b, inline) => inline
                .as_ref()
                .map(|s| s.var_names.clone())
                .unwrap_or_else(|| b.system.var_names.clone()),
            RunTarget::Reduced(r) => r.contact.var_names.clone(),
            RunTarget::ReducedFromFile(c) => c.var_names.clone(),
            RunTarget::Blowup(nb, _) => {
                let mut names = Vec::new();
                for i in 0..nb.n {
                    for a in 0..nb.d {
                        names.push(format!("s{}_{a}", i + 1));
                    }
                }
                for i in 0..nb.n {
                    for a in 0..nb.d {
                        names.push(format!("y{}_{a}", i + 1));
                    }
                }
                names
            }
        }
    }
}

fn resolve_run_target(ctx: &Ctx) -> anyhow::Result<RunTarget> {
    let sys = &ctx.cfg.system;
    if let Some(path) = &sys.reduced_file {
        let body: ReducedFileBody = crate::config::load_reduced_file(Path::new(path))?;
        let params: Vec<(&str, f64)> = body.params.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        let param_names: Vec<String> = body.params.keys().cloned().collect();
        let h = Expression::parse_owned(&body.hamiltonian, &body.variables, &param_names)?;
        let contact = ContactSystem::new(
            body.variables.clone(),
            ScalarField::from_expression(h),
            body.degree,
            Params::new(&params),
            Guard::none(),
        )?;
        if !body.angular.is_empty() && body.angular.len() != body.variables.len() {
            bail!(
                "reduced-system file: {} angular flags for {} variables",
                body.angular.len(),
                body.variables.len()
            );
        }
        if !ctx.quiet {
            println!(
                "loaded reduced system: parent {}, chart {}, degree {}",
                body.parent, body.chart, body.degree
            );
        }
        return Ok(RunTarget::ReducedFromFile(contact));
    }

    let run = ctx.cfg.run.as_ref();
    let space = run
        .map(|r| r.space.clone())
        .unwrap_or_else(|| "original".to_string());
    let scenario_space = match run {
        Some(r) if sys.bundle.is_some() => match &r.scenario {
            Some(name) => Some(get_bundle(sys)?.scenario(name)?.space.clone()),
            None => None,
        },
        _ => None,
    };

    let effective_space = match &scenario_space {
        Some(ScenarioSpace::Original) => "original".to_string(),
        Some(ScenarioSpace::Reduced { .. }) => "reduced".to_string(),
        Some(ScenarioSpace::Blowup) => "blowup".to_string(),
        None => space,
    };

    match effective_space.as_str() {
        "original" => {
            if sys.bundle.is_some() {
                Ok(RunTarget::Original(Box::new(get_bundle(sys)?), None))
            } else {
                let inline = inline_system(sys)?;
                // Bundle slot unused for inline runs; kepler is a cheap
                // placeholder that keeps the enum simple.
                Ok(RunTarget::Original(
                    Box::new(instantiate("kepler", &[])?),
                    Some(inline),
                ))
            }
        }
        "reduced" => {
            let bundle = get_bundle(sys)?;
            let chart_id = match (&ctx.cfg.scaling, &scenario_space) {
                (Some(s), _) if s.chart.is_some() => s.chart.clone().unwrap(),
                (_, Some(ScenarioSpace::Reduced { chart })) => chart.clone(),
                _ => bail!("reduced runs need [scaling].chart"),
            };
            if ctx.cfg.scaling.as_ref().map(|s| s.lifted).unwrap_or(false) {
                let rl = bundle
                    .reduced_lift
                    .as_ref()
                    .ok_or_else(|| anyhow!("bundle has no lifted reduction"))?;
                return Ok(RunTarget::Reduced(Box::new(rl.red.clone())));
            }
            Ok(RunTarget::Reduced(Box::new(
                bundle.reduction(&chart_id)?.clone(),
            )))
        }
        "blowup" => {
            let bundle = get_bundle(sys)?;
            if bundle.id != "nbody_blowup" {
                bail!("blowup runs need the nbody_blowup bundle");
            }
            let n = bundle.system.n_dof; // n*d degrees of freedom upstairs
            let d = bundle_params(sys)
                .iter()
                .find(|(k, _)| k == "d")
                .map(|(_, v)| *v as usize)
                .unwrap_or(2);
            Ok(RunTarget::Blowup(
                NBodyBlowup { n: n / d, d },
                Box::new(bundle),
            ))
        }
        other => bail!("unknown run space `{other}`"),
    }
}

fn initial_state(
    ctx: &Ctx,
    target: &RunTarget,
    run: &RunSection,
    names: &[String],
) -> anyhow::Result<(Vec<f64>, (f64, f64))> {
    // Scenario defaults, overridable by explicit initial data and spans.
    let mut initial: Option<Vec<f64>> = None;
    let mut span: Option<(f64, f64)> = None;
    if let Some(name) = &run.scenario {
        let bundle = match target {
            RunTarget::Original(b, _) => Some(b),
            RunTarget::Blowup(_, b) => Some(b),
            RunTarget::Reduced(_) => None,
            RunTarget::ReducedFromFile(_) => None,
        };
        let sc = match bundle {
            Some(b) => b.scenario(name)?.clone(),
            None => get_bundle(&ctx.cfg.system)?.scenario(name)?.clone(),
        };
        initial = Some(sc.initial.clone());
        span = Some(sc.span);
    }
    if let Some(x) = &run.initial {
        initial = Some(x.clone());
    }
    if let Some(named) = &run.initial_named {
        let mut x = vec![0.0; names.len()];
        for (k, v) in named {
            let idx = names
                .iter()
                .position(|n| n == k)
                .ok_or_else(|| anyhow!("unknown state variable `{k}`"))?;
            x[idx] = *v;
        }
        initial = Some(x);
    }
    if let Some(up) = &run.initial_upstairs {
        match target {
            RunTarget::Reduced(red) => {
                initial = Some(red.chart.reduced_point(up, &red.contact.params.values)?);
            }
            _ => bail!("initial_upstairs only applies to reduced runs"),
        }
    }
    if let Some(ts) = run.t_span {
        span = Some((ts[0], ts[1]));
    }
    if let Some(ts) = run.tau_span {
        span = Some((ts[0], ts[1]));
    }
    let initial = initial.ok_or_else(|| anyhow!("no initial conditions given"))?;
    if initial.len() != names.len() {
        bail!(
            "initial state has {} entries; the system has {} coordinates ({})",
            initial.len(),
            names.len(),
            names.join(", ")
        );
    }
    let span = span.ok_or_else(|| anyhow!("no t_span/tau_span given"))?;
    Ok((initial, span))
}

fn run_trajectory(ctx: &Ctx, target: &RunTarget) -> anyhow::Result<(Trajectory, Vec<String>)> {
    let run = ctx
        .cfg
        .run
        .as_ref()
        .ok_or_else(|| anyhow!("run needs a [run] section"))?;
    let names = target.var_names();
    let (x0, span) = initial_state(ctx, target, run, &names)?;

    let (param_values, param_names): (Vec<f64>, Vec<String>) = match target {
        RunTarget::Original(b, inline) => {
            let s = inline.as_ref().unwrap_or(&b.system);
            (s.params.values.clone(), s.params.names.clone())
        }
        RunTarget::Reduced(r) => (
            r.contact.params.values.clone(),
            r.contact.params.names.clone(),
        ),
        RunTarget::ReducedFromFile(c) => (c.params.values.clone(), c.params.names.clone()),
        RunTarget::Blowup(..) => (vec![], vec![]),
    };
    let icfg = integrator_config(&ctx.cfg.integrator, &names, &param_values, &param_names)?;

    let mut traj = match target {
        RunTarget::Original(b, inline) => {
            let s = inline.as_ref().unwrap_or(&b.system);
            let t = integrate_symplectic(s, &x0, span, &icfg)?;
            // Optional τ column via the configured scaling function.
            if ctx.cfg.output.tau {
                let scaling = ctx
                    .cfg
                    .scaling
                    .as_ref()
                    .ok_or_else(|| anyhow!("output.tau needs a [scaling] section"))?;
                let chart_id = scaling
                    .chart
                    .as_deref()
                    .ok_or_else(|| anyhow!("output.tau needs [scaling].chart"))?;
                let rho = b.scaling_function(chart_id)?.rho.clone();
                let lambda = scaling
                    .degree
                    .or_else(|| b.symmetries.first().map(|d| d.degree))
                    .ok_or_else(|| anyhow!("output.tau needs a degree"))?;
                let pv = param_values.clone();
                let rho_fn = move |x: &[f64]| rho.eval(x, &pv);
                reparametrize(&t, &rho_fn, lambda)?
            } else {
                t
            }
        }
        RunTarget::Reduced(r) => integrate(&ContactRhs(&r.contact), &x0, span, &icfg)?,
        RunTarget::ReducedFromFile(c) => integrate(&ContactRhs(c), &x0, span, &icfg)?,
        RunTarget::Blowup(nb, _) => integrate(&BlowupRhs(*nb), &x0, span, &icfg)?,
    };

    // Diagnostics columns.
    for diag in &ctx.cfg.output.diagnostics {
        if diag == "energy" {
            let col: Vec<f64> = match target {
                RunTarget::Original(b, inline) => {
                    let s = inline.as_ref().unwrap_or(&b.system);
                    traj.samples
                        .iter()
                        .map(|smp| s.h(&smp.state))
                        .collect::<contact_reduce::Result<_>>()?
                }
                RunTarget::Reduced(r) => traj
                    .samples
                    .iter()
                    .map(|smp| r.contact.h(&smp.state))
                    .collect::<contact_reduce::Result<_>>()?,
                RunTarget::ReducedFromFile(c) => traj
                    .samples
                    .iter()
                    .map(|smp| c.h(&smp.state))
                    .collect::<contact_reduce::Result<_>>()?,
                RunTarget::Blowup(nb, _) => traj
                    .samples
                    .iter()
                    .map(|smp| nb.hamiltonian(&smp.state))
                    .collect::<contact_reduce::Result<_>>()?,
            };
            traj.diagnostics.push(("energy".into(), col));
        } else {
            let expr = Expression::parse_owned(diag, &names, &param_names)?;
            let col: Vec<f64> = traj
                .samples
                .iter()
                .map(|smp| expr.eval(&smp.state, &param_values))
                .collect::<contact_reduce::Result<_>>()?;
            traj.diagnostics.push((diag.clone(), col));
        }
    }
    Ok((traj, names))
}

pub fn cmd_run(ctx: &Ctx) -> anyhow::Result<i32> {
    let target = resolve_run_target(ctx)?;
    let (traj, names) = run_trajectory(ctx, &target)?;
    std::fs::create_dir_all(&ctx.out_dir)?;
    let csv_name = ctx
        .cfg
        .output
        .csv
        .clone()
        .unwrap_or_else(|| "run.csv".into());
    let csv_path = ctx.out_dir.join(&csv_name);
    let diagnostics = traj.diagnostics.clone();
    write_csv(&csv_path, &traj, &names, &diagnostics)?;
    ctx.say(&format!(
        "{} samples, stop reason {}, written to {}",
        traj.len(),
        traj.stop.label(),
        csv_path.display()
    ));
    if ctx.cfg.output.plot_script {
        let has_tau = traj.samples.iter().all(|s| s.tau.is_some());
        let gp_path = csv_path.with_extension("gp");
        write_plot_script(&gp_path, &csv_name, &names, has_tau)?;
        ctx.say(&format!("plot script written to {}", gp_path.display()));
    }
    match &traj.stop {
        StopReason::Failure(msg) => {
            eprintln!("numerical failure: {msg}");
            Ok(3)
        }
        _ => Ok(0),
    }
}

// ---------------------------------------------------------------------------
// compare

pub fn cmd_compare(ctx: &Ctx) -> anyhow::Result<i32> {
    let compare = ctx
        .cfg
        .compare
        .as_ref()
        .ok_or_else(|| anyhow!("compare needs a [compare] section"))?;
    let bundle = get_bundle(&ctx.cfg.system)?;

    if compare.mode == "parallelism" {
        let (worst, pairs) = contact_reduce::systems::cross_reduction_parallelism(&bundle, 100)?;
        let (text, pass) = render_report(&[ReportLine {
            key: "parallelism_residual".into(),
            value: worst,
            tolerance: Some(compare.tolerance),
        }]);
        println!("pairs = {pairs}");
        println!("{text}");
        return Ok(if pass { 0 } else { 1 });
    }

    let scaling = ctx
        .cfg
        .scaling
        .as_ref()
        .ok_or_else(|| anyhow!("compare needs a [scaling] section"))?;
    let chart_id = scaling
        .chart
        .as_deref()
        .ok_or_else(|| anyhow!("compare needs [scaling].chart"))?;
    let red = bundle.reduction(chart_id)?;
    let d = &bundle.symmetries[0];
    let lambda = scaling.degree.unwrap_or(d.degree);
    let rho = bundle.scaling_function(chart_id)?;

    let run = ctx
        .cfg
        .run
        .as_ref()
        .ok_or_else(|| anyhow!("compare needs a [run] section with upstairs initial data"))?;
    let x0 = run
        .initial
        .clone()
        .ok_or_else(|| anyhow!("compare needs [run].initial (upstairs coordinates)"))?;

    let span = match (run.t_span, compare.periods) {
        (Some(ts), _) => (ts[0], ts[1]),
        (None, Some(periods)) => {
            let energy = bundle.system.h(&x0)?;
            if energy >= 0.0 {
                bail!("cannot infer a radial period at non-negative energy; give t_span");
            }
            let a = -1.0 / (2.0 * energy);
            (0.0, periods * std::f64::consts::TAU * a.powf(1.5))
        }
        (None, None) => bail!("compare needs [run].t_span or [compare].periods"),
    };

    let names = bundle.system.var_names.clone();
    let icfg = integrator_config(
        &ctx.cfg.integrator,
        &names,
        &bundle.system.params.values,
        &bundle.system.params.names,
    )?;
    let up = integrate_symplectic(&bundle.system, &x0, span, &icfg)?;
    let rho_expr = rho.rho.clone();
    let pv = bundle.system.params.values.clone();
    let rho_fn = move |x: &[f64]| rho_expr.eval(x, &pv);
    let up = reparametrize(&up, &rho_fn, lambda)?;

    let red0 = red.chart.reduced_point(&x0, &bundle.system.params.values)?;
    let tau_end = up.last().tau.unwrap();
    let down = integrate(&ContactRhs(&red.contact), &red0, (0.0, tau_end), &icfg)?;
    let report = compare_reduced(&up, red, &down, compare.grid)?;

    let mut lines = vec![ReportLine {
        key: "sup_deviation".into(),
        value: report.sup_deviation,
        tolerance: Some(compare.tolerance),
    }];
    for (name, dev) in &report.per_coordinate {
        lines.push(ReportLine {
            key: format!("deviation[{name}]"),
            value: *dev,
            tolerance: None,
        });
    }
    let (text, pass) = render_report(&lines);
    println!(
        "tau overlap [{:.6}, {:.6}], grid {}",
        report.tau_overlap.0, report.tau_overlap.1, report.n_grid
    );
    println!("{text}");
    Ok(if pass { 0 } else { 1 })
}

// ---------------------------------------------------------------------------
// sweep

pub fn cmd_sweep(ctx: &Ctx) -> anyhow::Result<i32> {
    let sweep = ctx
        .cfg
        .sweep
        .as_ref()
        .ok_or_else(|| anyhow!("sweep needs a [sweep] section"))?;
    if sweep.axes.is_empty() {
        bail!("sweep needs at least one axis");
    }
    for axis in &sweep.axes {
        match axis.target.as_str() {
            "initial" => {
                if axis.index.is_none() {
                    bail!("initial axes need an index");
                }
            }
            "param" => {
                if axis.name.is_none() {
                    bail!("param axes need a name");
                }
            }
            other => bail!("unknown sweep axis target `{other}`"),
        }
    }

    // Cartesian product of axis values.
    let mut combos: Vec<Vec<f64>> = vec![vec![]];
    for axis in &sweep.axes {
        let mut next = Vec::new();
        for combo in &combos {
            for v in &axis.values {
                let mut c = combo.clone();
                c.push(*v);
                next.push(c);
            }
        }
        combos = next;
    }
    std::fs::create_dir_all(&ctx.out_dir)?;

    let threads = std::env::var("CONTACT_REDUCE_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok());
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(t) = threads {
            b = b.num_threads(t.max(1));
        }
        b.build()?
    };

    use rayon::prelude::*;
    let rows: Vec<String> = pool.install(|| {
        combos
            .par_iter()
            .enumerate()
            .map(|(i, combo)| sweep_one(ctx, sweep, i, combo))
            .collect()
    });

    let mut header = vec!["run".to_string()];
    for (i, axis) in sweep.axes.iter().enumerate() {
        match axis.target.as_str() {
            "initial" => header.push(format!("initial[{}]", axis.index.unwrap())),
            _ => header.push(axis.name.clone().unwrap_or_else(|| format!("axis{i}"))),
        }
    }
    header.push("status".into());
    header.push("stop".into());
    for r in &sweep.report {
        header.push(r.clone());
    }
    let summary_path = ctx.out_dir.join("summary.csv");
    let mut text = header.join(",");
    text.push('\n');
    for row in rows {
        text.push_str(&row);
        text.push('\n');
    }
    std::fs::write(&summary_path, text)?;
    println!(
        "{} runs, summary written to {}",
        combos.len(),
        summary_path.display()
    );
    Ok(0)
}

fn sweep_one(
    ctx: &Ctx,
    sweep: &crate::config::SweepSection,
    index: usize,
    combo: &[f64],
) -> String {
    let mut cells: Vec<String> = vec![format!("run_{index:03}")];
    for v in combo {
        cells.push(fmt(*v));
    }
    match sweep_one_inner(ctx, sweep, index, combo) {
        Ok((stop, reports)) => {
            cells.push("ok".into());
            cells.push(stop);
            for r in reports {
                cells.push(fmt(r));
            }
        }
        Err(e) => {
            cells.push(format!("error:{}", e.to_string().replace(',', ";")));
            cells.push(String::new());
            for _ in &sweep.report {
                cells.push("nan".into());
            }
        }
    }
    cells.join(",")
}

fn sweep_one_inner(
    ctx: &Ctx,
    sweep: &crate::config::SweepSection,
    index: usize,
    combo: &[f64],
) -> anyhow::Result<(String, Vec<f64>)> {
    // Rebuild a private scenario with the axis values applied.
    let mut run = ctx
        .cfg
        .run
        .as_ref()
        .ok_or_else(|| anyhow!("sweep needs a [run] section"))?
        .clone();
    let mut params = ctx.cfg.system.params.clone();
    for (axis, value) in sweep.axes.iter().zip(combo) {
        match axis.target.as_str() {
            "initial" => {
                let idx = axis.index.unwrap();
                let init = run
                    .initial
                    .as_mut()
                    .ok_or_else(|| anyhow!("initial axes need [run].initial"))?;
                if idx >= init.len() {
                    bail!("axis index {idx} out of range");
                }
                init[idx] = *value;
            }
            _ => {
                params.insert(axis.name.clone().unwrap(), *value);
            }
        }
    }

    // Local context with patched run/params and a per-run CSV path.
    let mut cfg = crate::config::ScenarioConfig {
        system: crate::config::SystemSection {
            bundle: ctx.cfg.system.bundle.clone(),
            variables: ctx.cfg.system.variables.clone(),
            hamiltonian: ctx.cfg.system.hamiltonian.clone(),
            guard: ctx.cfg.system.guard.clone(),
            guard_min: ctx.cfg.system.guard_min,
            separable: ctx.cfg.system.separable,
            reduced_file: ctx.cfg.system.reduced_file.clone(),
            matter: ctx.cfg.system.matter.clone(),
            params,
        },
        scaling: None,
        integrator: ctx.cfg.integrator.clone(),
        run: Some(run),
        output: crate::config::OutputSection {
            csv: Some(format!("run_{index:03}.csv")),
            tau: false,
            plot_script: false,
            diagnostics: vec![],
        },
        compare: None,
        sweep: None,
    };
    cfg.output.diagnostics = vec!["energy".into()];
    let local = Ctx {
        cfg,
        out_dir: ctx.out_dir.clone(),
        seed: ctx.seed,
        tol: ctx.tol,
        quiet: true,
    };

    let target = resolve_run_target(&local)?;
    let (traj, names) = run_trajectory(&local, &target)?;
    let csv_path = local.out_dir.join(format!("run_{index:03}.csv"));
    write_csv(&csv_path, &traj, &names, &traj.diagnostics)?;

    let mut reports = Vec::new();
    for r in &sweep.report {
        let value = match r.as_str() {
            "loop_action" => match &target {
                RunTarget::Original(b, inline) => {
                    let s = inline.as_ref().unwrap_or(&b.system);
                    let run_ref = local.cfg.run.as_ref().unwrap();
                    let (x0, span) = initial_state(&local, &target, run_ref, &names)?;
                    let icfg = integrator_config(
                        &local.cfg.integrator,
                        &names,
                        &s.params.values,
                        &s.params.names,
                    )?;
                    let t = local_action_solution(s, &x0, span.1, &icfg)?;
                    loop_action(&t)?
                }
                _ => bail!("loop_action reports need an original-space run"),
            },
            "energy_drift" => {
                let col = traj
                    .diagnostics
                    .iter()
                    .find(|(n, _)| n == "energy")
                    .map(|(_, c)| c)
                    .ok_or_else(|| anyhow!("energy diagnostic missing"))?;
                col.iter()
                    .map(|v| (v - col[0]).abs())
                    .fold(0.0f64, f64::max)
            }
            "final_energy" => {
                let col = traj
                    .diagnostics
                    .iter()
                    .find(|(n, _)| n == "energy")
                    .map(|(_, c)| c)
                    .ok_or_else(|| anyhow!("energy diagnostic missing"))?;
                *col.last().unwrap()
            }
            other => bail!("unknown sweep report `{other}`"),
        };
        reports.push(value);
    }
    Ok((traj.stop.label(), reports))
}
