//! One function per pipeline; each writes its artifacts and returns a summary line.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use serde_json::json;

use super::config::{Params, Pipeline, RunConfig};
use super::plot::PlotSeries;
use super::{Outputs, PipelineError};
use crate::counterexample::{build_solution, residual_check, smoothness_probe, CounterexampleSpec};
use crate::deformation::{deform_snapshots, verify_monotone, DeformOptions, DeformationGenerator, DomainSpec, WeightFunction};
use crate::estimates::{discretize, packet_battery, perturbed_survival, subelliptic_ratio, Periodization, Profile, TorusGrid};
use crate::fbi::{
    fbi_transform, fbi_transform_fn, geometric_ladder, normalized_magnitude, read_sampled_binary, read_sampled_csv,
    write_field_csv, write_sampled_binary, Axis, ComplexGrid, FBIField, SampledFunction, TransformOptions,
};
use crate::gevrey::{fit_all, wf_mask, write_fits_csv, write_mask_pbm};
use crate::realization::{coherent_battery, elliptic_lower_bound, identity_defect, RealSymbol, RealizationOp};
use crate::spectral::{anharmonic_eigs, eigen_residual, EigenPair, SpectralOptions};
use crate::symbolic::{compute_nu, parse_rational, parse_symbol, parse_vector_fields, Nu, VectorFieldSystem, DEFAULT_MAX_LEN};

type Result<T> = std::result::Result<T, PipelineError>;

pub(crate) fn dispatch(cfg: &RunConfig, out: &mut Outputs) -> Result<String> {
    let p = cfg.params();
    match cfg.pipeline {
        Pipeline::Nu => nu(&p, out),
        Pipeline::Fbi => fbi(&p, out),
        Pipeline::Gevrey => gevrey(&p, out),
        Pipeline::Eig => eig(&p, out),
        Pipeline::Counterexample => counterexample(&p, out),
        Pipeline::Deform => deform(&p, out),
        Pipeline::Realize => realize(&p, out),
        Pipeline::Estimate => estimate(&p, out),
    }
}

fn bad(key: &str, msg: impl std::fmt::Display) -> PipelineError {
    PipelineError::config(format!("key '{key}': {msg}"))
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> std::result::Result<(), String>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| PipelineError::config(format!("formatting output: {e}")))?;
    Ok(buf)
}

/// `fields` or `grushin_k` (default Grushin k = 2).
fn field_system(p: &Params) -> Result<VectorFieldSystem> {
    match (p.opt_str("fields")?, p.opt_usize("grushin_k")?) {
        (Some(_), Some(_)) => Err(PipelineError::config("give either 'fields' or 'grushin_k', not both")),
        (Some(src), None) => Ok(parse_vector_fields(src)?),
        (None, k) => {
            let k = k.unwrap_or(2);
            if !(2..=12).contains(&k) {
                return Err(bad("grushin_k", "must lie in 2..=12"));
            }
            Ok(VectorFieldSystem::grushin(k as u32))
        }
    }
}

fn nu(p: &Params, out: &mut Outputs) -> Result<String> {
    let sys = field_system(p)?;
    let n = sys.dim();
    let point = match p.opt_text_list("point")? {
        Some(v) => {
            if v.len() != 2 * n {
                return Err(bad("point", format!("needs {} entries (x; ξ), got {}", 2 * n, v.len())));
            }
            v.iter().map(|s| parse_rational(s)).collect::<std::result::Result<Vec<_>, _>>()?
        }
        None => (0..2 * n).map(|i| crate::symbolic::rational(i64::from(i == 2 * n - 1))).collect(),
    };
    let max_len = p.usize("max_len", DEFAULT_MAX_LEN)?;
    let report = compute_nu(&sys, &point, max_len)?;
    let fields: Vec<String> = sys.fields().iter().map(|f| f.to_string()).collect();
    out.json(
        "nu.json",
        json!({
            "system": sys.label(),
            "fields": fields,
            "max_len": max_len,
            "report": report.to_json(),
        }),
    )?;
    Ok(match report.nu {
        Nu::Finite(k) => format!("nu = {k}"),
        Nu::Infinite { budget } => format!("nu = infinite (no bracket up to length {budget})"),
    })
}

/// Complex grid, λ ladder and the transform of the configured input.
fn transform(p: &Params) -> Result<(FBIField, String, Option<SampledFunction>)> {
    let (rl, rh, rn) = p.span("re", (-1.0, 1.0, 5))?;
    let (il, ih, inn) = p.span("im", (-1.0, 0.0, 3))?;
    let grid = ComplexGrid::one_dim(Axis::span(rl, rh, rn)?, Axis::span(il, ih, inn)?)?;
    let (ll, lh, ln) = p.span("lambdas", (4.0, 256.0, 8))?;
    let lambdas = geometric_ladder(ll, lh, ln);
    let support = p.f64("support", 12.0)?;
    match (p.opt_str("input")?, p.opt_str("function")?) {
        (Some(_), Some(_)) => Err(PipelineError::config("give either 'input' or 'function', not both")),
        (Some(path), None) => {
            let u = read_input(Path::new(path))?;
            let f = fbi_transform(&u, &grid, &lambdas)?;
            Ok((f, format!("file {path}"), None))
        }
        (None, name) => match name.unwrap_or("gaussian") {
            "gaussian" => {
                let f = fbi_transform_fn(
                    |y| Complex64::new((-0.5 * y[0] * y[0]).exp(), 0.0),
                    &[(-support, support)],
                    &grid,
                    &lambdas,
                    TransformOptions::default(),
                )?;
                Ok((f, format!("gaussian exp(-y^2/2) on [-{support}, {support}]"), None))
            }
            "delta" => {
                let lmax = lambdas.iter().cloned().fold(0.0, f64::max);
                let im_max = il.abs().max(ih.abs()).max(1e-300);
                let h = (0.5 / lmax).sqrt().min(1.0 / (lmax * im_max));
                let half = ((1.0 / h).ceil() as usize).max(2);
                let u = SampledFunction::delta_1d(Axis::span(-1.0, 1.0, 2 * half + 1)?, 0.0)?;
                let f = fbi_transform(&u, &grid, &lambdas)?;
                Ok((f, "delta at 0".into(), Some(u)))
            }
            other => Err(bad("function", format!("unknown built-in '{other}' (gaussian or delta)"))),
        },
    }
}

fn read_input(path: &Path) -> Result<SampledFunction> {
    let file = std::fs::File::open(path)
        .map_err(|e| PipelineError::config(format!("cannot open {}: {e}", path.display())))?;
    let reader = std::io::BufReader::new(file);
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => Ok(read_sampled_csv(reader)?),
        Some("bin") => Ok(read_sampled_binary(reader)?),
        _ => Err(bad("input", "extension must be .csv or .bin")),
    }
}

fn field_summary(f: &FBIField, source: &str) -> serde_json::Value {
    json!({
        "input": source,
        "grid_points": f.grid().len(),
        "lambdas": f.lambdas(),
        "error_bound": f.error_bound(),
        "noise_floor": f.noise_floor(),
    })
}

fn fbi(p: &Params, out: &mut Outputs) -> Result<String> {
    let (f, source, sampled) = transform(p)?;
    let mut buf = Vec::new();
    write_field_csv(&f, &mut buf)?;
    out.write("field.csv", &buf)?;
    if let Some(u) = sampled {
        let mut bin = Vec::new();
        write_sampled_binary(&u, &mut bin)?;
        out.write("input.bin", &bin)?;
    }
    out.json("summary.json", field_summary(&f, &source))?;
    let m = normalized_magnitude(&f);
    let nl = f.lambdas().len();
    let mut series = PlotSeries::new("magnitude", "normalized |Tu| against lambda per probe point", &["lambda", "m"]);
    for q in 0..f.grid().len() {
        let x = f.grid().point(q)[0];
        let rows = (0..nl).map(|l| vec![f.lambdas()[l], m[q * nl + l]]).collect();
        series = series.block(format!("x = {} {:+}i", x.re, x.im), rows);
    }
    out.plot(series);
    let worst = f.error_bound().iter().cloned().fold(0.0, f64::max);
    Ok(format!("transformed {} points x {} lambdas (max error bound {worst:.2e})", f.grid().len(), nl))
}

fn gevrey(p: &Params, out: &mut Outputs) -> Result<String> {
    let (f, source, _) = transform(p)?;
    let order = p.f64("order", 1.0)?;
    let threshold = p.f64("threshold", 4.0)?;
    let results = fit_all(&f);
    let nl = f.lambdas().len();
    let mut fits = Vec::new();
    let mut per_point = Vec::new();
    for (q, r) in results.into_iter().enumerate() {
        let x = f.grid().point(q)[0];
        match r {
            Ok(fit) => {
                per_point.push(json!({"x": [x.re, x.im], "s_hat": fit.s_hat, "decay": fit.has_decay()}));
                fits.push(fit);
            }
            Err(e) => per_point.push(json!({"x": [x.re, x.im], "error": e.to_string()})),
        }
    }
    let mask = wf_mask(&f, order, threshold)?;
    let buf = csv_bytes(|b| write_fits_csv(&fits, b).map_err(|e| e.to_string()))?;
    out.write("fits.csv", &buf)?;
    let mut pbm = Vec::new();
    write_mask_pbm(&f, &mask, &format!("points where m ≤ exp(-lambda^(1/{order})/{threshold})"), &mut pbm)
        .map_err(|e| PipelineError::config(format!("formatting mask: {e}")))?;
    out.write("mask.pbm", &pbm)?;
    let mut summary = field_summary(&f, &source);
    summary["order"] = json!(order);
    summary["threshold"] = json!(threshold);
    summary["points"] = json!(per_point);
    summary["mask_count"] = json!(mask.iter().filter(|&&b| b).count());
    out.json("summary.json", summary)?;
    let m = normalized_magnitude(&f);
    let mut series = PlotSeries::new("decay", "log(-log m) against log lambda per probe point", &["log_lambda", "log_minus_log_m"]);
    for q in 0..f.grid().len() {
        let x = f.grid().point(q)[0];
        let rows = (0..nl)
            .filter(|&l| m[q * nl + l] > 0.0 && m[q * nl + l] < 1.0)
            .map(|l| vec![f.lambdas()[l].ln(), (-m[q * nl + l].ln()).ln()])
            .collect();
        series = series.block(format!("x = {} {:+}i", x.re, x.im), rows);
    }
    out.plot(series);
    let decaying = fits.iter().filter(|f| f.has_decay()).count();
    Ok(format!("{decaying} of {} points decay; {} in the order-{order} mask", f.grid().len(), mask.iter().filter(|&&b| b).count()))
}

fn spectral_options(p: &Params) -> Result<SpectralOptions> {
    let d = SpectralOptions::default();
    Ok(SpectralOptions {
        npoints: p.usize("npoints", d.npoints)?,
        halfwidth: p.opt_f64("halfwidth")?,
        tol: p.f64("tol", d.tol)?,
    })
}

fn eig(p: &Params, out: &mut Outputs) -> Result<String> {
    let k = p.usize("k", 2)? as u32;
    let count = p.usize("count", 6)?;
    let pairs = anharmonic_eigs(k, count, spectral_options(p)?)?;
    let residuals = pairs.iter().map(eigen_residual).collect::<std::result::Result<Vec<_>, _>>()?;
    let buf = csv_bytes(|b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["index", "energy", "parity", "residual"]).map_err(|e| e.to_string())?;
        for (e, r) in pairs.iter().zip(&residuals) {
            w.write_record([e.index.to_string(), format!("{:.17e}", e.energy), format!("{:?}", e.parity), format!("{r:.3e}")])
                .map_err(|e| e.to_string())?;
        }
        w.flush().map_err(|e| e.to_string())
    })?;
    out.write("eigenvalues.csv", &buf)?;
    let axis = *pairs[0].axis();
    let buf = csv_bytes(|b| {
        let mut w = csv::Writer::from_writer(b);
        let mut header = vec!["x".to_string()];
        header.extend(pairs.iter().map(|e| format!("phi{}", e.index)));
        w.write_record(&header).map_err(|e| e.to_string())?;
        for i in 0..axis.count {
            let mut row = vec![format!("{:.17e}", axis.coord(i))];
            row.extend(pairs.iter().map(|e| format!("{:.17e}", e.values()[i])));
            w.write_record(&row).map_err(|e| e.to_string())?;
        }
        w.flush().map_err(|e| e.to_string())
    })?;
    out.write("eigenfunctions.csv", &buf)?;
    let mut bin = Vec::new();
    write_sampled_binary(&pairs[0].as_sampled(), &mut bin)?;
    out.write("ground_state.bin", &bin)?;
    out.json(
        "summary.json",
        json!({
            "k": k,
            "eigenpairs": pairs.iter().zip(&residuals).map(|(e, r)| {
                let mut m = e.metadata();
                m["residual"] = json!(r);
                m
            }).collect::<Vec<_>>(),
        }),
    )?;
    let mut series = PlotSeries::new("eigenfunctions", "eigenfunctions of -d^2/dx^2 + x^(2(k-1))", &["x", "phi"]);
    for e in &pairs {
        let rows = (0..axis.count).map(|i| vec![axis.coord(i), e.values()[i]]).collect();
        series = series.block(format!("n = {}, E = {:.10}", e.index, e.energy), rows);
    }
    out.plot(series);
    let energies: Vec<String> = pairs.iter().map(|e| format!("{:.8}", e.energy)).collect();
    Ok(format!("k = {k}: E = [{}]", energies.join(", ")))
}

fn eigenpair(k: u32, index: usize) -> Result<EigenPair> {
    let mut pairs = anharmonic_eigs(k, index + 1, SpectralOptions::default())?;
    Ok(pairs.swap_remove(index))
}

fn counterexample(p: &Params, out: &mut Outputs) -> Result<String> {
    let d = CounterexampleSpec::default();
    let spec = CounterexampleSpec {
        k: p.usize("k", d.k as usize)? as u32,
        eigen_index: p.usize("eigen_index", d.eigen_index)?,
        rho_max: p.f64("rho_max", d.rho_max)?,
        rho_steps: p.usize("rho_steps", d.rho_steps)?,
        x1_halfwidth: p.f64("x1_halfwidth", d.x1_halfwidth)?,
        n1: p.usize("n1", d.n1)?,
        n2: p.opt_usize("n2")?,
        tail_tol: p.f64("tail_tol", d.tail_tol)?,
    };
    spec.validate()?;
    let e = eigenpair(spec.k, spec.eigen_index)?;
    let cx = build_solution(&spec, &e)?;
    let residual = residual_check(&cx.u, &spec, &e)?;
    let refined = if p.bool("refine", false)? {
        let fine = spec.refined();
        let u = build_solution(&fine, &e)?;
        Some(residual_check(&u.u, &fine, &e)?)
    } else {
        None
    };
    let slot = (spec.eigen_index % 2) as u8;
    let probe = smoothness_probe(&cx.u, slot)?;
    let mut bin = Vec::new();
    write_sampled_binary(&cx.u, &mut bin)?;
    out.write("u.bin", &bin)?;
    out.json(
        "report.json",
        json!({
            "spec": spec,
            "build": cx.report,
            "residual": residual,
            "refined_residual": refined,
            "smoothness": probe,
        }),
    )?;
    let x1 = cx.u.axis(0);
    let row = (0..x1.count).min_by(|&a, &b| x1.coord(a).abs().total_cmp(&x1.coord(b).abs())).unwrap_or(0);
    let x2 = cx.u.axis(1);
    let rows = (0..x2.count)
        .map(|j| {
            let v = cx.u.get(&[row, j]);
            vec![x2.coord(j), v.re, v.im]
        })
        .collect();
    out.plot(PlotSeries::new("slice", "u(0, x2) over one period", &["x2", "re", "im"]).block("x1 = 0", rows));
    Ok(format!(
        "residual {residual:.3e}{}; tail exponent {}",
        refined.map_or(String::new(), |r| format!(" (refined {r:.3e})")),
        probe.exponent.map_or("none (smooth)".into(), |s| format!("{s:.3}"))
    ))
}

fn deform(p: &Params, out: &mut Outputs) -> Result<String> {
    let n = p.usize("n", 41)?;
    let a = p.f64("extent", 2.0)?;
    let axis = Axis::span(-a, a, n)?;
    let grid = ComplexGrid::one_dim(axis, axis)?;
    let base = WeightFunction::phi0(&grid)?;
    let r = p.opt_usize("r")?.map(|r| r as u32);
    let gen = match p.str("generator", "quadratic")? {
        "quadratic" => {
            let c = p.f64_array("center", [0.0, 0.0])?;
            DeformationGenerator::quadratic((c[0], c[1]), r.unwrap_or(2))
        }
        src => DeformationGenerator::polynomial(parse_symbol(src, Some(1))?, r)?,
    };
    let lambda = p.f64("lambda", 4.0)?;
    let t = p.f64("t", 0.1)?;
    if !(t > 0.0) {
        return Err(bad("t", "must be positive"));
    }
    let snaps = p.usize("snapshots", 8)?.max(1);
    let times: Vec<f64> = (1..=snaps).map(|i| t * i as f64 / snaps as f64).collect();
    let opts = DeformOptions {
        t_max: t,
        ..Default::default()
    };
    let runs = deform_snapshots(&base, &gen, &times, lambda, opts)?;
    let dom = DomainSpec::boxes(&grid, Complex64::new(0.0, 0.0), p.f64("r_outer", 1.5)?, p.f64("r_inner", 0.5)?)?;
    let last = runs.last().expect("at least one snapshot");
    let mono = verify_monotone(last, &dom)?;
    let buf = csv_bytes(|b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["x_re", "x_im", "phi0", "phi_t", "h_base"]).map_err(|e| e.to_string())?;
        for q in 0..grid.len() {
            let x = grid.point(q)[0];
            w.write_record([x.re, x.im, base.values()[q], last.weight.values()[q], last.h_base[q]].map(|v| format!("{v:.17e}")))
                .map_err(|e| e.to_string())?;
        }
        w.flush().map_err(|e| e.to_string())
    })?;
    out.write("weight.csv", &buf)?;
    let growth: Vec<Vec<f64>> = std::iter::once(vec![0.0, 0.0])
        .chain(runs.iter().zip(&times).map(|(d, &s)| {
            let g = d.weight.values().iter().zip(base.values()).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
            vec![s, g]
        }))
        .collect();
    out.json(
        "monotone.json",
        json!({
            "lambda": lambda,
            "t": t,
            "steps": last.steps,
            "dt": last.dt,
            "max_rel_imag": last.max_rel_imag,
            "report": mono,
            "growth": growth,
        }),
    )?;
    out.plot(PlotSeries::new("growth", "max(Phi_t - Phi_0) against t", &["t", "max_gap"]).block("snapshots", growth));
    Ok(format!(
        "min gap {:.3e}, c' = {}, c'/(min h/2) = {}",
        mono.min_gap,
        mono.c_prime.map_or("n/a".into(), |c| format!("{c:.4}")),
        mono.c_ratio.map_or("n/a".into(), |c| format!("{c:.4}"))
    ))
}

fn realize(p: &Params, out: &mut Outputs) -> Result<String> {
    let check = p.str("check", "identity")?;
    let symbol = RealSymbol::from_poly(&parse_symbol(p.str("symbol", "1")?, Some(1))?)?;
    let default_ladder: &[f64] = if check == "identity" { &[2.0, 20.0, 200.0, 2000.0] } else { &[4.0, 16.0, 64.0, 256.0] };
    let ladder = p.f64_list("lambdas", default_ladder)?;
    let lmax = ladder.iter().cloned().fold(0.0, f64::max);
    if ladder.is_empty() || ladder.iter().any(|&l| !(l >= 1.0)) {
        return Err(bad("lambdas", "needs at least one value ≥ 1"));
    }
    let op = RealizationOp::standard(
        symbol,
        p.f64("order", 0.0)?,
        p.f64("a", 0.5)?,
        p.f64("inner", 0.25)?,
        lmax,
        p.f64("resolution", 0.5)?,
    )?;
    let centers = coherent_battery(&op, p.usize("centers", 20)?)?;
    let (value, rows, summary) = match check {
        "identity" => {
            let r = identity_defect(&op, &centers, &ladder, p.f64("c", 64.0)?)?;
            let rows = r.per_lambda.iter().map(|d| vec![d.lambda.ln(), d.worst_ratio.ln()]).collect();
            let s = format!("identity defect C' = {:.3e}, slope {:.3}", r.c_prime, r.growth_slope);
            (serde_json::to_value(&r), rows, s)
        }
        "elliptic" => {
            let r = elliptic_lower_bound(&op, p.f64("c0", 1.0)?, &centers, &ladder, p.f64("c", 8.0)?)?;
            let rows = r.per_lambda.iter().map(|d| vec![d.lambda.ln(), d.worst_ratio.ln()]).collect();
            let s = format!("elliptic bound measured C = {:.4} (c0 = {})", r.measured_c, r.c0);
            (serde_json::to_value(&r), rows, s)
        }
        other => return Err(bad("check", format!("unknown check '{other}' (identity or elliptic)"))),
    };
    let value = value.map_err(|e| PipelineError::config(format!("serializing report: {e}")))?;
    out.json(
        "report.json",
        json!({
            "check": check,
            "symbol": op.symbol.to_string(),
            "grid_points": op.grid().len(),
            "polarization_degree": op.polarization().degree,
            "result": value,
        }),
    )?;
    out.plot(PlotSeries::new("ratio", &format!("{check} check: log worst ratio against log lambda"), &["log_lambda", "log_ratio"]).block(check, rows));
    Ok(summary)
}

fn periodization(name: &str) -> Result<Periodization> {
    match name {
        "identity" => Ok(Periodization::Identity),
        "sin" => Ok(Periodization::Sin),
        "one_minus_cos" => Ok(Periodization::OneMinusCos),
        other => Err(bad("periodization", format!("unknown substitution '{other}'"))),
    }
}

fn estimate(p: &Params, out: &mut Outputs) -> Result<String> {
    let sys = field_system(p)?;
    let per = match p.opt_text_list("periodization")? {
        None => [Periodization::Sin, Periodization::Identity],
        Some(v) if v.len() == 2 => [periodization(&v[0])?, periodization(&v[1])?],
        Some(_) => return Err(bad("periodization", "needs two entries")),
    };
    let xi0 = p.f64_array("xi0", [0.0, 1.0])?;
    if xi0.iter().any(|v| v.fract() != 0.0) {
        return Err(bad("xi0", "entries must be integers"));
    }
    let n = p.f64_array("n", [1024.0, 64.0])?;
    let period = p.f64_array("period", [2.0 * PI, 2.0 * PI / 256.0])?;
    let grid = TorusGrid::new([n[0] as usize, n[1] as usize], period)?;
    let op = discretize(&sys, grid, per, [xi0[0] as i64, xi0[1] as i64])?;
    let r = op.r;
    let scaling = match (p.opt_f64("scaling")?, r) {
        (Some(s), _) => s,
        (None, Some(r)) => r as f64,
        (None, None) => return Err(bad("scaling", "required when the Hörmander condition fails")),
    };
    let modes: Vec<u32> = p
        .f64_list("modes", &[1.0, 2.0, 4.0, 8.0, 16.0])?
        .into_iter()
        .map(|m| if m >= 1.0 && m.fract() == 0.0 { Ok(m as u32) } else { Err(bad("modes", "must be positive integers")) })
        .collect::<Result<_>>()?;
    let eigen_k = r.unwrap_or(2).max(2) as u32;
    let profile = match p.str("profile", "gaussian")? {
        "gaussian" => Profile::Gaussian,
        "eigen" => Profile::Eigen(eigenpair(eigen_k, p.usize("eigen_index", 0)?)?),
        other => return Err(bad("profile", format!("unknown profile '{other}' (gaussian or eigen)"))),
    };
    let battery = packet_battery(&grid, &profile, scaling, &modes)?;
    let report = match p.opt_f64("theta")? {
        Some(theta) => {
            let eigenvalue = match p.opt_str("eigenvalue") {
                Ok(Some("auto")) => Some(eigenpair(eigen_k, 0)?.energy),
                Ok(Some(other)) => return Err(bad("eigenvalue", format!("'{other}' is neither a number nor \"auto\""))),
                Ok(None) => None,
                Err(_) => p.opt_f64("eigenvalue")?,
            };
            perturbed_survival(&op, theta, p.f64("coupling", 0.0)?, &battery, eigenvalue)?
        }
        None => {
            if p.has("coupling") || p.has("eigenvalue") {
                return Err(PipelineError::config("'coupling' and 'eigenvalue' need 'theta'"));
            }
            let s = match (p.opt_f64("sobolev")?, r) {
                (Some(s), _) => s,
                (None, Some(r)) => 1.0 / r as f64,
                (None, None) => return Err(bad("sobolev", "required when the Hörmander condition fails")),
            };
            subelliptic_ratio(&op, s, &battery)?
        }
    };
    let buf = csv_bytes(|b| report.write_csv(b).map_err(|e| e.to_string()))?;
    out.write("ratios.csv", &buf)?;
    out.json(
        "report.json",
        json!({
            "system": sys.label(),
            "hoermander_r": r,
            "torus": grid,
            "periodization": per,
            "report": report,
        }),
    )?;
    let rows = report.rows.iter().map(|r| vec![r.frequency.ln(), r.ratio.ln()]).collect();
    out.plot(PlotSeries::new("ratio", "log ratio against log frequency", &["log_frequency", "log_ratio"]).block(report.battery.clone(), rows));
    Ok(match report.verdict {
        crate::estimates::Verdict::Bounded => format!("bounded (slope {:.3})", report.slope),
        crate::estimates::Verdict::Growing { rate } => format!("growing at rate {rate:.3}"),
    })
}
