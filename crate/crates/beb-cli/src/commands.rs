//! Command implementations.

use anyhow::{bail, Context, Result};
use beb_core::amplitude::{
    amplitude_coeffs, amplitude_coeffs_shifted, computed_orbit, pd_amplitudes, sn_branch_amplitudes,
};
use beb_core::continuation::{
    brute_force_diagram, continue_curve, continue_cycle, cycles_at, find_codim2, locate_on_slice, seed_state,
    Codim2Options, Codim2Point, ContinuationOptions, CurveOptions, DiagramOptions, Observable, Seed,
};
use beb_core::equilibria::{
    classify_beb, pseudo_equilibrium, regular_equilibrium, sticking_spectrum, EquilibriumInfo,
};
use beb_core::flow::{simulate, FlowOptions, SimOptions};
use beb_core::models::{BuiltinName, ModelFamily};
use beb_core::normalform::{coefficients_fd, coefficients_report, BifKind, FdOptions};
use beb_core::poincare::MapFamily;
use beb_core::spec_io::ModelSource;
use beb_core::{HybridModel, ParamPoint, Vector};
use beb_core::Complex;
use serde_json::{json, Value};

use crate::output::{emit, json_document, Cell, Csv, Header};
use crate::parse::MuRange;
use crate::setup::{Family, ModelSetup};
use crate::{Codim2Args, Command, ContinueWhat, KindArg, ModelArgs, ObservableArg, RunArgs, ValidationFailed};

pub fn dispatch(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Validate { model, out } => validate(model, out.as_deref()),
        Command::Classify {
            model,
            mu,
            eta,
            family_param,
            out,
        } => classify(model, *mu, *eta, family_param.as_deref(), out.as_deref()),
        Command::Simulate {
            model,
            run,
            mu,
            eta,
            family_param,
            x0,
            t_end,
        } => simulate_cmd(model, run, *mu, *eta, family_param.as_deref(), x0.as_deref(), *t_end),
        Command::Diagram {
            model,
            run,
            mu_range,
            eta,
            family_param,
            transient,
            window,
            observable,
            sweep_up,
        } => diagram(
            model,
            run,
            mu_range,
            *eta,
            family_param.as_deref(),
            DiagramSettings {
                transient: *transient,
                window: *window,
                observable: *observable,
                sweep_up: *sweep_up,
            },
        ),
        Command::Codim2 { model, run, search } => codim2(model, run, search),
        Command::Coeffs {
            model,
            run,
            search,
            coeff_param,
            flip,
        } => coeffs(model, run, search, coeff_param.as_deref(), *flip),
        Command::Amplitude {
            model,
            run,
            kind,
            eta,
            family_param,
            mu_range,
            mu_max,
            t_max,
            shifted,
            blown_up,
        } => amplitude(
            model,
            run,
            AmplitudeSettings {
                kind: bif_kind(*kind),
                eta: *eta,
                family_param: family_param.clone(),
                mu_range: *mu_range,
                mu_max: *mu_max,
                t_max: *t_max,
                shifted: *shifted,
                blown_up: *blown_up,
            },
        ),
        Command::Continue {
            model,
            run,
            what,
            kind,
            bracket,
            eta,
            family_param,
            mu,
            step,
            max_step,
            steps,
            ds,
            t_max,
        } => match what {
            ContinueWhat::Cycle => continue_cycles(
                model,
                run,
                *eta,
                family_param.as_deref(),
                mu.unwrap_or((0.0, 0.05)),
                ContinuationOptions {
                    step: *step,
                    max_step: *max_step,
                    ..ContinuationOptions::default()
                },
                *t_max,
            ),
            ContinueWhat::Curve => {
                let Some(kind) = kind else {
                    bail!("--what curve needs --type sn|pd");
                };
                let search = Codim2Args {
                    kind: *kind,
                    bracket: *bracket,
                    family_param: family_param.clone(),
                    scan_points: 21,
                    t_max: *t_max,
                    max_seeds: 8,
                };
                continue_bif_curve(model, run, &search, *steps, *ds)
            }
        },
    }
}

fn bif_kind(k: KindArg) -> BifKind {
    match k {
        KindArg::Sn => BifKind::SaddleNode,
        KindArg::Pd => BifKind::PeriodDoubling,
    }
}

fn load(model: &ModelArgs) -> Result<ModelSetup> {
    ModelSetup::from_flags(model.model.as_deref(), model.builtin.as_deref(), &model.params)
}

fn require_valid(model: &HybridModel) -> Result<()> {
    let report = model.validate_model();
    let failed: Vec<String> = report.failures().map(|c| format!("{} ({})", c.name, c.detail)).collect();
    if !failed.is_empty() {
        return Err(ValidationFailed(failed.join("; ")).into());
    }
    Ok(())
}

/// Flow options: the integrator defaults, or the tighter set used for
/// return maps that are differentiated numerically.
fn flow_options(run: &RunArgs, precise: bool) -> FlowOptions {
    let mut f = if precise { FlowOptions::precise() } else { FlowOptions::default() };
    if let Some(r) = run.rtol {
        f.tol.rtol = r;
    }
    if let Some(a) = run.atol {
        f.tol.atol = a;
    }
    f
}

fn model_label(setup: &ModelSetup) -> String {
    match &setup.source {
        ModelSource::Builtin(b) => {
            let params: Vec<String> = b.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
            if params.is_empty() {
                format!("builtin {}", b.name.as_str())
            } else {
                format!("builtin {} {}", b.name.as_str(), params.join(" "))
            }
        }
        ModelSource::Explicit(m) => format!("explicit n={}", m.n()),
    }
}

fn header(
    command: &str,
    setup: &ModelSetup,
    flow: &FlowOptions,
    seed: u64,
    extra: Vec<(&str, String)>,
) -> Result<Header> {
    Ok(Header {
        command: command.to_string(),
        model: model_label(setup),
        model_sha256: setup.model_hash()?,
        rtol: flow.tol.rtol,
        atol: flow.tol.atol,
        seed,
        extra: extra.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
    })
}

/// Builtin parameter playing the role of eta on a slice.
fn slice_param(name: Option<BuiltinName>) -> Option<&'static str> {
    match name {
        Some(BuiltinName::Sn3d) => Some("b2"),
        Some(BuiltinName::Pd3d) => Some("sigma"),
        _ => None,
    }
}

/// Builtin parameter searched for codimension-two points.
fn search_param(name: Option<BuiltinName>) -> Option<&'static str> {
    match name {
        Some(BuiltinName::Sn3d) => Some("b2"),
        Some(BuiltinName::Pd3d) => Some("r"),
        _ => None,
    }
}

fn default_bracket(name: Option<BuiltinName>, param: &str) -> Option<(f64, f64)> {
    match (name, param) {
        (Some(BuiltinName::Sn3d), "b2") => Some((1.5, 2.0)),
        (Some(BuiltinName::Pd3d), "r") => Some((0.5, 0.8)),
        _ => None,
    }
}

/// Family for commands where eta is optional: a family only when eta is given.
fn optional_family(setup: &ModelSetup, eta: Option<f64>, param: Option<&str>) -> Result<(Family, f64)> {
    match eta {
        None => {
            let fam = setup.family(None)?;
            Ok((fam, 0.0))
        }
        Some(e) => {
            let p = param.or(slice_param(setup.builtin_name()));
            let Some(p) = p else {
                bail!("--eta needs --family-param for this model");
            };
            Ok((setup.family(Some(p))?, e))
        }
    }
}

fn complex_list(z: &[Complex<f64>]) -> Value {
    Value::Array(z.iter().map(|c| json!([c.re, c.im])).collect())
}

fn equilibrium_json(e: &beb_core::Result<EquilibriumInfo>) -> Value {
    match e {
        Ok(info) => json!({
            "location": info.location.as_slice(),
            "kind": info.kind,
            "admissible": info.admissible,
            "spectrum": complex_list(&info.spectrum),
            "residual": info.residual,
        }),
        Err(err) => json!({"error": err.to_string()}),
    }
}

fn validate(model: &ModelArgs, out: Option<&std::path::Path>) -> Result<()> {
    let setup = load(model)?;
    let report = setup.model.validate_model();
    let flow = FlowOptions::default();
    let h = header("validate", &setup, &flow, 0, vec![])?;
    let result = json!({"passed": report.passed(), "checks": report.checks});
    emit(out, &json_document(&h, result))?;
    let failed: Vec<String> = report.failures().map(|c| format!("{} ({})", c.name, c.detail)).collect();
    if !failed.is_empty() {
        return Err(ValidationFailed(failed.join("; ")).into());
    }
    Ok(())
}

fn classify(
    model: &ModelArgs,
    mu: Option<f64>,
    eta: Option<f64>,
    family_param: Option<&str>,
    out: Option<&std::path::Path>,
) -> Result<()> {
    let setup = load(model)?;
    let (fam, eta_v) = optional_family(&setup, eta, family_param)?;
    let m = fam.model_at(eta_v)?;
    let class = classify_beb(&m);
    let mut result = json!({"classification": class});
    match sticking_spectrum(&m) {
        Ok(s) => {
            result["sticking"] = json!({
                "nonzero": complex_list(&s.nonzero),
                "removed": complex_list(&s.removed),
                "det_restricted": s.det_restricted,
                "det_identity_residual": s.det_identity_residual,
            })
        }
        Err(e) => result["sticking"] = json!({"error": e.to_string()}),
    }
    if let Some(mu) = mu {
        let p = ParamPoint::new(mu, eta_v);
        result["mu"] = json!(mu);
        result["regular"] = equilibrium_json(&regular_equilibrium(&m, p));
        result["pseudo"] = equilibrium_json(&pseudo_equilibrium(&m, p));
    }
    let flow = FlowOptions::default();
    let mut extra = vec![];
    if let Some(e) = eta {
        extra.push(("eta", e.to_string()));
    }
    let h = header("classify", &setup, &flow, 0, extra)?;
    emit(out, &json_document(&h, result))
}

fn simulate_cmd(
    model: &ModelArgs,
    run: &RunArgs,
    mu: f64,
    eta: Option<f64>,
    family_param: Option<&str>,
    x0: Option<&[f64]>,
    t_end: f64,
) -> Result<()> {
    let setup = load(model)?;
    let (fam, eta_v) = optional_family(&setup, eta, family_param)?;
    let m = fam.model_at(eta_v)?;
    require_valid(&m)?;
    let x0 = match x0 {
        Some(v) => {
            if v.len() != m.n() {
                bail!("--x0: expected {} values, got {}", m.n(), v.len());
            }
            Vector::from_column_slice(v)
        }
        None => seed_state(
            &m,
            &Seed::PseudoEquilibrium {
                offset: 1.0 + run.seed as f64,
            },
            mu,
            eta_v,
        )?,
    };
    let flow = flow_options(run, false);
    let sim = SimOptions {
        flow,
        record: true,
        ..SimOptions::default()
    };
    let tr = simulate(&m, &x0, ParamPoint::new(mu, eta_v), t_end, &sim)?;
    let n = m.n();
    let mut cols: Vec<String> = vec!["t".into()];
    cols.extend((1..=n).map(|i| format!("x{i}")));
    cols.push("event_flag".into());
    let colrefs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let h = header(
        "simulate",
        &setup,
        &flow,
        run.seed,
        vec![("mu", mu.to_string()), ("eta", eta_v.to_string()), ("t_end", t_end.to_string())],
    )?;
    let mut csv = Csv::new(&h, &colrefs);
    // (time, order, state, flag); at an impact the pre row precedes the post row.
    let mut rows: Vec<(f64, u8, Vec<f64>, u64)> = Vec::new();
    for e in &tr.events {
        rows.push((e.time, 0, e.state_pre.clone(), 1));
        rows.push((e.time, 1, e.state_post.clone(), 1));
    }
    let event_at = |t: f64| tr.events.iter().any(|e| (e.time - t).abs() <= 1e-12 * t.abs().max(1.0));
    for seg in &tr.segments {
        let dur = seg.t_end - seg.t_start;
        for s in &seg.steps {
            if s.t0 >= dur {
                break;
            }
            let t = seg.t_start + s.t0;
            if s.t0 == 0.0 && event_at(t) {
                continue;
            }
            rows.push((t, 2, s.y0.clone(), 0));
        }
    }
    if !event_at(tr.final_time) {
        rows.push((tr.final_time, 3, tr.final_state.clone(), 0));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for (t, _, x, flag) in rows {
        let mut cells = vec![Cell::Num(t)];
        cells.extend(x.into_iter().map(Cell::Num));
        cells.push(Cell::Int(flag));
        csv.row(&cells);
    }
    csv.comment(&format!("terminated_by = {:?}", tr.terminated_by));
    emit(run.out.as_deref(), &csv.finish())
}

struct DiagramSettings {
    transient: f64,
    window: f64,
    observable: ObservableArg,
    sweep_up: bool,
}

fn diagram(
    model: &ModelArgs,
    run: &RunArgs,
    range: &MuRange,
    eta: Option<f64>,
    family_param: Option<&str>,
    s: DiagramSettings,
) -> Result<()> {
    let setup = load(model)?;
    let (fam, eta_v) = optional_family(&setup, eta, family_param)?;
    let m = fam.model_at(eta_v)?;
    require_valid(&m)?;
    let flow = flow_options(run, false);
    let observable = match s.observable {
        ObservableArg::ImpactVelocity => Observable::ImpactVelocity,
        ObservableArg::MaxFirstState => Observable::MaxFirstState,
    };
    let opts = DiagramOptions {
        transient: s.transient,
        window: s.window,
        seeds: vec![Seed::PseudoEquilibrium {
            offset: 1.0 + run.seed as f64,
        }],
        sweep_up: s.sweep_up,
        sim: SimOptions {
            flow,
            record: false,
            ..SimOptions::default()
        },
    };
    let grid = range.grid();
    let model_at = move |_mu: f64| Ok(m.clone());
    let res = brute_force_diagram(&model_at, eta_v, &grid, observable, &opts)?;
    let h = header(
        "diagram",
        &setup,
        &flow,
        run.seed,
        vec![
            ("eta", eta_v.to_string()),
            ("transient", s.transient.to_string()),
            ("window", s.window.to_string()),
            ("sweep_up", s.sweep_up.to_string()),
        ],
    )?;
    let mut csv = Csv::new(&h, &["mu", "seed_id", "observable_value"]);
    for p in &res.samples {
        csv.row(&[Cell::Num(p.mu), Cell::Int(p.seed_id as u64), Cell::Num(p.value)]);
    }
    for (mu, id, why) in &res.flagged {
        csv.comment(&format!("flagged mu={mu} seed_id={id}: {why}"));
    }
    emit(run.out.as_deref(), &csv.finish())
}

struct Codim2Run {
    setup: ModelSetup,
    param: String,
    bracket: (f64, f64),
    point: Codim2Point,
    flow: FlowOptions,
}

fn run_codim2(model: &ModelArgs, run: &RunArgs, search: &Codim2Args) -> Result<Codim2Run> {
    let setup = load(model)?;
    require_valid(&setup.model)?;
    let name = setup.builtin_name();
    let Some(param) = search.family_param.as_deref().or(search_param(name)) else {
        bail!("--family-param is required for this model");
    };
    let Some(bracket) = search.bracket.or(default_bracket(name, param)) else {
        bail!("--bracket is required for this model and parameter");
    };
    let fam = setup.family(Some(param))?;
    let flow = flow_options(run, true);
    let opts = Codim2Options {
        scan_points: search.scan_points,
        t_max: search.t_max,
        max_seeds: search.max_seeds,
        flow,
    };
    let point = find_codim2(&fam, bif_kind(search.kind), bracket, &opts)?;
    Ok(Codim2Run {
        setup,
        param: param.to_string(),
        bracket,
        point,
        flow,
    })
}

fn codim2(model: &ModelArgs, run: &RunArgs, search: &Codim2Args) -> Result<()> {
    let r = run_codim2(model, run, search)?;
    let p = &r.point;
    let result = json!({
        "kind": p.kind.as_str(),
        "family_param": r.param,
        "eta0": p.eta0,
        "u_hat": p.u_hat.as_slice(),
        "v": p.v.as_slice(),
        "period": p.fixed_point.period,
        "multipliers": complex_list(&p.fixed_point.multipliers),
        "residual": p.residual,
        "iterations": p.iterations,
    });
    let h = header(
        "codim2",
        &r.setup,
        &r.flow,
        run.seed,
        vec![("bracket", format!("{}:{}", r.bracket.0, r.bracket.1))],
    )?;
    emit(run.out.as_deref(), &json_document(&h, result))
}

fn coeffs(
    model: &ModelArgs,
    run: &RunArgs,
    search: &Codim2Args,
    coeff_param: Option<&str>,
    flip: bool,
) -> Result<()> {
    let r = run_codim2(model, run, search)?;
    let name = r.setup.builtin_name();
    let cparam = match coeff_param {
        Some(p) => p.to_string(),
        None if name == Some(BuiltinName::Pd3d) => "sigma".to_string(),
        None => r.param.clone(),
    };
    // The codimension-two model, varied in the coefficient parameter.
    let fixed = r.setup.with_value(&r.param, r.point.eta0)?;
    let fam = fixed.family(Some(&cparam))?;
    let eta_ref = if cparam == r.param { r.point.eta0 } else { fam.current()? };
    let mf = MapFamily::new(&fam, eta_ref)?.with_flow(r.flow);
    let nf = coefficients_fd(
        &mf,
        &r.point.u_hat,
        ParamPoint::new(0.0, eta_ref),
        r.point.kind,
        &FdOptions::default(),
    )?;
    let nf = if flip { nf.sign_flipped() } else { nf };
    let mut result = coefficients_report(&nf);
    result["codim2"] = json!({"family_param": r.param, "eta0": r.point.eta0});
    result["eta_param"] = json!(cparam);
    let h = header(
        "coeffs",
        &r.setup,
        &r.flow,
        run.seed,
        vec![
            ("bracket", format!("{}:{}", r.bracket.0, r.bracket.1)),
            ("flip", flip.to_string()),
        ],
    )?;
    emit(run.out.as_deref(), &json_document(&h, result))
}

struct AmplitudeSettings {
    kind: BifKind,
    eta: Option<f64>,
    family_param: Option<String>,
    mu_range: Option<MuRange>,
    mu_max: f64,
    t_max: f64,
    shifted: bool,
    blown_up: bool,
}

fn default_slice(name: Option<BuiltinName>) -> Option<f64> {
    match name {
        Some(BuiltinName::Sn3d) => Some(1.85),
        Some(BuiltinName::Pd3d) => Some(0.82),
        _ => None,
    }
}

fn amplitude(model: &ModelArgs, run: &RunArgs, s: AmplitudeSettings) -> Result<()> {
    let setup = load(model)?;
    require_valid(&setup.model)?;
    let name = setup.builtin_name();
    let Some(param) = s.family_param.clone().or(slice_param(name).map(String::from)) else {
        bail!("--family-param is required for this model");
    };
    let fam = setup.family(Some(&param))?;
    let eta = match s.eta.or(default_slice(name)) {
        Some(e) => e,
        None => fam.current()?,
    };
    let flow = flow_options(run, true);
    let mf = MapFamily::new(&fam, eta)?.with_flow(flow);
    let (bp, _) = locate_on_slice(&mf, s.kind, eta, s.mu_max, s.t_max, &ContinuationOptions::default())
        .context("locating the bifurcation on the slice")?;
    let mu_c = bp.mu;
    let reference = ParamPoint::new(mu_c, eta);
    let nf = coefficients_fd(&mf, &bp.u_hat, reference, s.kind, &FdOptions::default())?;
    let model_eta = fam.model_at(eta)?;
    let ac = if s.shifted {
        amplitude_coeffs_shifted(&model_eta, mf.scale, &nf)?
    } else {
        amplitude_coeffs(&model_eta, mf.scale, reference, &bp.u_hat, &nf.eig.v)?
    };
    let range = s.mu_range.unwrap_or(MuRange {
        lo: 0.5 * mu_c,
        hi: mu_c,
        n: 11,
    });

    let computed = |mu: f64, z: f64, k: usize| -> Option<Vec<f64>> {
        let scale = if s.blown_up { 1.0 } else { mu * ac.kappa };
        computed_orbit(&mf, &nf, mu, z, k)
            .ok()
            .map(|o| o.velocities.into_iter().map(|x| x * scale).collect())
    };
    let orig = |hat: Option<f64>, mu: f64| hat.map(|x| if s.blown_up { x } else { x * mu * ac.kappa });
    let mut extra = vec![
        ("eta", eta.to_string()),
        ("mu_c", mu_c.to_string()),
        ("shifted", s.shifted.to_string()),
        ("units", if s.blown_up { "blown_up" } else { "original" }.to_string()),
        ("l0", ac.l0.to_string()),
        ("l1", ac.l1.to_string()),
        ("L01", ac.l01.to_string()),
        ("L11", ac.l11.to_string()),
        ("kappa", ac.kappa.to_string()),
    ];
    extra.push(("kind", s.kind.as_str().to_string()));
    let h = header("amplitude", &setup, &flow, run.seed, extra)?;
    let text = match s.kind {
        BifKind::SaddleNode => {
            let mut csv = Csv::new(
                &h,
                &["mu", "A_pred_branch1", "A_pred_branch2", "A_sim_branch1", "A_sim_branch2"],
            );
            for mu in range.grid() {
                let a = sn_branch_amplitudes(&nf, &ac, mu, mu_c)?;
                let sim = |z: Option<f64>| z.and_then(|z| computed(mu, z, 1)).map(|v| v[0]);
                csv.row(&[
                    Cell::Num(mu),
                    Cell::Opt(orig(a.hat_plus, mu)),
                    Cell::Opt(orig(a.hat_minus, mu)),
                    Cell::Opt(sim(a.z_plus)),
                    Cell::Opt(sim(a.z_minus)),
                ]);
            }
            csv.finish()
        }
        BifKind::PeriodDoubling => {
            let mut csv = Csv::new(
                &h,
                &[
                    "mu",
                    "A_pred_branch1",
                    "A_pred_branch2",
                    "A_sim_branch1",
                    "A_sim_branch2",
                    "A_pred_fixed",
                    "A_sim_fixed",
                ],
            );
            for mu in range.grid() {
                let a = pd_amplitudes(&nf, &ac, mu, mu_c)?;
                let fixed = computed(mu, a.z_fixed, 1).map(|v| v[0]);
                let (s1, s2) = match a.z_two_plus.and_then(|z| computed(mu, z, 2)) {
                    Some(v) => {
                        let (hi, lo) = if v[0] >= v[1] { (v[0], v[1]) } else { (v[1], v[0]) };
                        // Match the larger computed velocity with the larger prediction.
                        match (a.hat_two_plus, a.hat_two_minus) {
                            (Some(p), Some(q)) if p < q => (Some(lo), Some(hi)),
                            _ => (Some(hi), Some(lo)),
                        }
                    }
                    None => (None, None),
                };
                csv.row(&[
                    Cell::Num(mu),
                    Cell::Opt(orig(a.hat_two_plus, mu)),
                    Cell::Opt(orig(a.hat_two_minus, mu)),
                    Cell::Opt(s1),
                    Cell::Opt(s2),
                    Cell::Opt(orig(Some(a.hat_fixed), mu)),
                    Cell::Opt(fixed),
                ]);
            }
            csv.finish()
        }
    };
    emit(run.out.as_deref(), &text)
}

fn continue_cycles(
    model: &ModelArgs,
    run: &RunArgs,
    eta: Option<f64>,
    family_param: Option<&str>,
    mu: (f64, f64),
    opts: ContinuationOptions,
    t_max: f64,
) -> Result<()> {
    let setup = load(model)?;
    require_valid(&setup.model)?;
    let name = setup.builtin_name();
    let param = family_param.or(slice_param(name));
    let fam = setup.family(param)?;
    let eta = match eta {
        Some(e) => e,
        None => fam.current()?,
    };
    let flow = flow_options(run, true);
    let mf = MapFamily::new(&fam, eta)?.with_flow(flow);
    let seeds = cycles_at(&mf, mu.0, eta, t_max);
    if seeds.is_empty() {
        return Err(beb_core::BebError::no_convergence(format!("no cycle found at mu = {}", mu.0), 0, f64::NAN).into());
    }
    let h = header(
        "continue",
        &setup,
        &flow,
        run.seed,
        vec![("what", "cycle".into()), ("eta", eta.to_string()), ("mu", format!("{}:{}", mu.0, mu.1))],
    )?;
    let mut csv = Csv::new(&h, &["seed_id", "mu", "eta", "period", "lambda_re", "lambda_abs", "event"]);
    for (id, (u, _)) in seeds.iter().enumerate() {
        let branch = match continue_cycle(&mf, eta, u, mu, &opts) {
            Ok(b) => b,
            Err(e) => {
                csv.comment(&format!("seed_id={id}: {e}"));
                continue;
            }
        };
        for p in &branch.points {
            let lead = p
                .multipliers
                .iter()
                .copied()
                .max_by(|a, b| a.norm().total_cmp(&b.norm()))
                .unwrap_or(Complex::new(f64::NAN, 0.0));
            let event = match p.event {
                Some(e) => serde_json::to_value(e)?.as_str().unwrap_or_default().to_string(),
                None => String::new(),
            };
            csv.row(&[
                Cell::Int(id as u64),
                Cell::Num(p.mu),
                Cell::Num(p.eta),
                Cell::Num(p.period),
                Cell::Num(lead.re),
                Cell::Num(lead.norm()),
                Cell::Text(event),
            ]);
        }
        if let Some(t) = &branch.truncated {
            csv.comment(&format!("seed_id={id} stopped: {t}"));
        }
    }
    emit(run.out.as_deref(), &csv.finish())
}

fn continue_bif_curve(model: &ModelArgs, run: &RunArgs, search: &Codim2Args, steps: usize, ds: f64) -> Result<()> {
    let r = run_codim2(model, run, search)?;
    let fam = r.setup.family(Some(&r.param))?;
    let mf = MapFamily::new(&fam, r.point.eta0)?.with_flow(r.flow);
    let curve = continue_curve(
        &mf,
        r.point.kind,
        (0.0, r.point.eta0, &r.point.u_hat, &r.point.v),
        &CurveOptions {
            ds,
            steps,
            ..CurveOptions::default()
        },
    )?;
    let h = header(
        "continue",
        &r.setup,
        &r.flow,
        run.seed,
        vec![
            ("what", "curve".into()),
            ("kind", r.point.kind.as_str().into()),
            ("family_param", r.param.clone()),
            ("tangent_at_origin", curve.tangent_at_origin.to_string()),
        ],
    )?;
    let mut csv = Csv::new(&h, &["mu", "eta", "period", "lambda_crit"]);
    for p in &curve.points {
        csv.row(&[Cell::Num(p.mu), Cell::Num(p.eta), Cell::Num(p.period), Cell::Num(p.lambda_crit)]);
    }
    emit(run.out.as_deref(), &csv.finish())
}
