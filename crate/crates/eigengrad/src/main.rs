//! Batch driver: evaluate derivative bundles described by a spec file,
//! sweep eigenvalue traces, and ingest contingency tables.
//!
//! Exit codes: 0 success, 2 validation error, 3 numerical refusal
//! (degenerate eigenvalue and friends), 4 finite-difference check failure.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::Serialize;

use eigengrad::deriv::{evd_jacobian, gevd_jacobian, DerivOptions};
use eigengrad::delta::{
    chain_from_bundle, delta_bias, delta_bias_per_n, delta_covariance, delta_covariance_per_n,
    MultinomialDesign,
};
use eigengrad::error::{Error, Result};
use eigengrad::fa::{
    mdfa_gradient, mdfa_hessian, mdfa_trace_norm, swain_gradient, swain_hessian, swain_value,
    uls_gradient, uls_hessian, uls_value, FaProblem, SwainF,
};
use eigengrad::family::{make_ca, make_mca, make_mdfa, MatrixFamily};
use eigengrad::fd::{fd_check_bundle, fd_jacobian, FdConfig, FdReport, FdTolerances};
use eigengrad::gsvd::{gsvd_hessian_values, gsvd_jacobian, gsvd_solve};
use eigengrad::linalg::{gevd_solve, GinverseKind, SymMatrix};
use eigengrad::spec::{rows_to_sym, FamilySpec, Kind, OutputFormat, ProblemSpec, TensorOut};

#[derive(Parser)]
#[command(name = "eigengrad", version, about = "Derivatives of generalized eigen- and singular-value decompositions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GinverseArg {
    Reflexive,
    Mp,
    Nelson,
}

impl From<GinverseArg> for GinverseKind {
    fn from(a: GinverseArg) -> Self {
        match a {
            GinverseArg::Reflexive => GinverseKind::ReflexiveSpectral,
            GinverseArg::Mp => GinverseKind::MoorePenroseBordered,
            GinverseArg::Nelson => GinverseKind::NelsonSubmatrix,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TableKind {
    Ca,
    Mca,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the derivative bundle requested by a spec file.
    Run {
        spec: PathBuf,
        #[arg(long)]
        hessian_values: bool,
        #[arg(long)]
        hessian_vectors: bool,
        #[arg(long, value_enum)]
        ginverse: Option<GinverseArg>,
        #[arg(long)]
        fd_check: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
    },
    /// Sweep a single-parameter family and emit eigenvalue traces as CSV.
    Trace {
        spec: PathBuf,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long)]
        steps: usize,
        /// Append block averages of consecutive eigenvalues (block size).
        #[arg(long)]
        block: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert a CSV table of counts into a family spec file.
    Ingest {
        csv: PathBuf,
        #[arg(long, value_enum)]
        kind: TableKind,
        /// Number of categorical variables (MCA long format only).
        #[arg(long)]
        vars: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Exit-code classification: "bad input" vs. "math says no".
fn exit_code_of(e: &Error) -> u8 {
    match e {
        Error::NotPositiveDefinite { .. }
        | Error::DegenerateEigenvalue { .. }
        | Error::SingularBordered
        | Error::SingularSubmatrix { .. }
        | Error::DegenerateSingularValue { .. }
        | Error::ZeroSingularValue { .. }
        | Error::RankDeficient { .. }
        | Error::RankDrop { .. }
        | Error::DomainError(_) => 3,
        Error::EvalFailure { source, .. } => exit_code_of(source),
        _ => 2,
    }
}

#[derive(Serialize)]
struct ErrorRecord {
    error: String,
    code: u8,
}

fn fail(e: Error) -> ExitCode {
    let code = exit_code_of(&e);
    let rec = ErrorRecord {
        error: e.to_string(),
        code,
    };
    eprintln!("{}", serde_json::to_string(&rec).unwrap());
    ExitCode::from(code)
}

fn gap_tol_from_env() -> Result<Option<f64>> {
    match std::env::var("EIGENGRAD_GAP_TOL") {
        Ok(v) => v
            .parse::<f64>()
            .map(Some)
            .map_err(|_| Error::Invalid(format!("EIGENGRAD_GAP_TOL is not a number: {v}"))),
        Err(_) => Ok(None),
    }
}

#[derive(Serialize)]
struct FdQuantityOut {
    max_discrepancy: f64,
    tol: f64,
    pass: bool,
}

#[derive(Serialize)]
struct FdReportOut {
    dl: FdQuantityOut,
    dx: FdQuantityOut,
    #[serde(skip_serializing_if = "Option::is_none")]
    ddl: Option<FdQuantityOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ddx: Option<FdQuantityOut>,
    pass: bool,
}

impl From<&FdReport> for FdReportOut {
    fn from(r: &FdReport) -> Self {
        let conv = |q: &eigengrad::fd::FdQuantityReport| FdQuantityOut {
            max_discrepancy: q.max_discrepancy,
            tol: q.tol,
            pass: q.pass,
        };
        FdReportOut {
            dl: conv(&r.dl),
            dx: conv(&r.dx),
            ddl: r.ddl.as_ref().map(conv),
            ddx: r.ddx.as_ref().map(conv),
            pass: r.pass(),
        }
    }
}

/// Everything `run` can emit, as named flat tensors.
#[derive(Serialize)]
struct RunOutput {
    kind: Kind,
    theta: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    scalars: Vec<(String, f64)>,
    tensors: Vec<(String, TensorOut)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fd_report: Option<FdReportOut>,
}

fn write_output(out: &RunOutput, path: Option<&PathBuf>, format: OutputFormat) -> Result<()> {
    let text = match format {
        OutputFormat::Json => {
            serde_json::to_string_pretty(out).map_err(|e| Error::Invalid(e.to_string()))?
        }
        OutputFormat::Csv => {
            // Long format: name, indices (up to 4, blank-padded), value.
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["name", "i0", "i1", "i2", "i3", "value"])
                .map_err(|e| Error::Invalid(e.to_string()))?;
            for (i, v) in out.theta.iter().enumerate() {
                w.write_record([
                    "theta",
                    &i.to_string(),
                    "",
                    "",
                    "",
                    &format!("{v:.16e}"),
                ])
                .map_err(|e| Error::Invalid(e.to_string()))?;
            }
            for (name, v) in &out.scalars {
                w.write_record([name.as_str(), "", "", "", "", &format!("{v:.16e}")])
                    .map_err(|e| Error::Invalid(e.to_string()))?;
            }
            for (name, t) in &out.tensors {
                let rank = t.shape.len();
                let mut idx = vec![0usize; rank];
                for v in &t.data {
                    let mut rec = vec![name.clone()];
                    for k in 0..4 {
                        rec.push(if k < rank { idx[k].to_string() } else { String::new() });
                    }
                    rec.push(format!("{v:.16e}"));
                    w.write_record(&rec).map_err(|e| Error::Invalid(e.to_string()))?;
                    for k in (0..rank).rev() {
                        idx[k] += 1;
                        if idx[k] < t.shape[k] {
                            break;
                        }
                        idx[k] = 0;
                    }
                }
            }
            String::from_utf8(w.into_inner().map_err(|e| Error::Invalid(e.to_string()))?)
                .map_err(|e| Error::Invalid(e.to_string()))?
        }
    };
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Error::Invalid(e.to_string())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn sym_tensor(name: &str, m: &SymMatrix) -> (String, TensorOut) {
    (
        name.to_string(),
        TensorOut::from_matrix("i", "j", m.mat()),
    )
}

#[allow(clippy::too_many_arguments)]
fn run_spec(
    spec: &ProblemSpec,
    hessian_values: bool,
    hessian_vectors: bool,
    ginverse: Option<GinverseArg>,
    fd_check: bool,
    out_path: Option<&PathBuf>,
    format: Option<FormatArg>,
) -> Result<u8> {
    let theta = spec.theta_vec()?;
    let opts = DerivOptions {
        ginverse: ginverse
            .map(GinverseKind::from)
            .or(spec.options.ginverse)
            .unwrap_or(GinverseKind::ReflexiveSpectral),
        hessian_values: hessian_values || spec.options.hessian_values || hessian_vectors
            || spec.options.hessian_vectors,
        hessian_vectors: hessian_vectors || spec.options.hessian_vectors,
        gap_tol: gap_tol_from_env()?.or(spec.options.gap_tol),
    };
    let fd_check = fd_check || spec.options.fd_check;
    let tols = FdTolerances {
        dl: spec.options.tolerances.dl.unwrap_or(1e-6),
        dx: spec.options.tolerances.dx.unwrap_or(1e-5),
        ddl: spec.options.tolerances.ddl.unwrap_or(1e-4),
        ddx: spec.options.tolerances.ddx.unwrap_or(1e-4),
    };
    let format = match format {
        Some(FormatArg::Json) => OutputFormat::Json,
        Some(FormatArg::Csv) => OutputFormat::Csv,
        None => spec.output.format,
    };
    let out_path: Option<PathBuf> = out_path
        .cloned()
        .or_else(|| spec.output.path.as_ref().map(PathBuf::from));

    let mut scalars = Vec::new();
    let mut tensors = Vec::new();
    let mut fd_report: Option<FdReportOut> = None;
    let mut fd_failed = false;

    match spec.kind {
        Kind::Gevd | Kind::Evd => {
            let fam = spec.require_family()?.build()?;
            let bundle = if spec.kind == Kind::Evd {
                evd_jacobian(fam.as_ref(), &theta, &opts)?
            } else {
                gevd_jacobian(fam.as_ref(), &theta, &opts)?
            };
            tensors.push((
                "lambda".into(),
                TensorOut::from_vector("nu", &bundle.lambda),
            ));
            tensors.push(("x".into(), TensorOut::from_matrix("i", "nu", &bundle.x)));
            tensors.push(("dl".into(), TensorOut::from_matrix("nu", "s", &bundle.dl)));
            tensors.push((
                "dx".into(),
                TensorOut::from_tensor3("i", "s", "nu", &bundle.dx),
            ));
            if let Some(ddl) = &bundle.ddl {
                tensors.push(("ddl".into(), TensorOut::from_tensor3("s", "t", "nu", ddl)));
            }
            if let Some(ddx) = &bundle.ddx {
                tensors.push((
                    "ddx".into(),
                    TensorOut::from_tensor4("s", "t", "i", "nu", ddx),
                ));
            }
            if fd_check {
                let report = fd_check_bundle(fam.as_ref(), &theta, &opts, &tols, &FdConfig::default())?;
                fd_failed = !report.pass();
                fd_report = Some(FdReportOut::from(&report));
            }
        }
        Kind::Gsvd => {
            let fam = spec.require_family()?.build_gsvd()?;
            let bundle = gsvd_jacobian(&fam, &theta, opts.gap_tol)?;
            tensors.push((
                "lambda".into(),
                TensorOut::from_vector("nu", &bundle.solution.lambda),
            ));
            tensors.push((
                "x".into(),
                TensorOut::from_matrix("i", "nu", &bundle.solution.x),
            ));
            tensors.push((
                "y".into(),
                TensorOut::from_matrix("i", "nu", &bundle.solution.y),
            ));
            tensors.push((
                "dlambda".into(),
                TensorOut::from_matrix("nu", "s", &bundle.dlambda),
            ));
            tensors.push((
                "dx".into(),
                TensorOut::from_tensor3("i", "s", "nu", &bundle.dx),
            ));
            tensors.push((
                "dy".into(),
                TensorOut::from_tensor3("i", "s", "nu", &bundle.dy),
            ));
            if opts.hessian_values {
                let ddl = gsvd_hessian_values(&fam, &theta, opts.gap_tol)?;
                tensors.push((
                    "ddlambda".into(),
                    TensorOut::from_tensor3("s", "t", "nu", &ddl),
                ));
            }
            if fd_check {
                use eigengrad::gsvd::GsvdFamily;
                let lam_of = |th: &DVector<f64>| {
                    Ok(gsvd_solve(&fam.f(th), &fam.g(th), &fam.h(th))?.lambda)
                };
                let jac = fd_jacobian(&lam_of, &theta, &FdConfig::default())?;
                let mut disc = 0.0f64;
                for nu in 0..jac.nrows() {
                    for s in 0..jac.ncols() {
                        disc = disc.max(eigengrad::fd::discrepancy(
                            bundle.dlambda[(nu, s)],
                            jac[(nu, s)],
                        ));
                    }
                }
                fd_failed = disc > tols.dl;
                fd_report = Some(FdReportOut {
                    dl: FdQuantityOut {
                        max_discrepancy: disc,
                        tol: tols.dl,
                        pass: !fd_failed,
                    },
                    dx: FdQuantityOut {
                        max_discrepancy: 0.0,
                        tol: tols.dx,
                        pass: true,
                    },
                    ddl: None,
                    ddx: None,
                    pass: !fd_failed,
                });
            }
        }
        Kind::Uls => {
            let c = spec.require_covariance()?;
            let p = spec
                .n_factors
                .ok_or_else(|| Error::Invalid("uls needs n_factors".into()))?;
            let prob = FaProblem::new(c, p)?;
            let d = DVector::from_vec(
                spec.d_diagonal
                    .clone()
                    .unwrap_or_else(|| vec![0.0; prob.order()]),
            );
            scalars.push(("value".into(), uls_value(&prob, &d)?));
            tensors.push((
                "gradient".into(),
                TensorOut::from_vector("i", &uls_gradient(&prob, &d)?),
            ));
            if opts.hessian_values {
                tensors.push(sym_tensor("hessian", &uls_hessian(&prob, &d)?));
            }
        }
        Kind::Swain => {
            let s = spec.require_covariance()?;
            let p = spec
                .n_factors
                .ok_or_else(|| Error::Invalid("swain needs n_factors".into()))?;
            let prob = FaProblem::new(s.clone(), p)?;
            let f = match spec.discrepancy.as_deref() {
                Some("ml") | None => SwainF::Ml,
                Some("gls_sample") => SwainF::GlsSample,
                Some("geodesic") => SwainF::Geodesic,
                Some("gls_model") => SwainF::GlsModel,
                Some(other) => {
                    return Err(Error::Invalid(format!("unknown discrepancy: {other}")))
                }
            };
            let d = match &spec.d_diagonal {
                Some(v) => SymMatrix::from_diagonal(&DVector::from_vec(v.clone())),
                None => s.clone(),
            };
            scalars.push(("value".into(), swain_value(&prob, &f, &d)?));
            tensors.push((
                "gradient".into(),
                TensorOut::from_vector("i", &swain_gradient(&prob, &f, &d)?),
            ));
            if opts.hessian_values {
                tensors.push(sym_tensor("hessian", &swain_hessian(&prob, &f, &d)?));
            }
        }
        Kind::Mdfa => {
            let fam = match spec.require_family()? {
                FamilySpec::Mdfa { c, t0, pattern } => make_mdfa(
                    rows_to_sym(c)?,
                    eigengrad::spec::rows_to_dmatrix(t0)?,
                    pattern,
                )?,
                _ => return Err(Error::Invalid("mdfa kind needs an mdfa family".into())),
            };
            scalars.push(("value".into(), mdfa_trace_norm(&fam, &theta)?));
            tensors.push((
                "gradient".into(),
                TensorOut::from_vector("s", &mdfa_gradient(&fam, &theta)?),
            ));
            if opts.hessian_values {
                tensors.push(sym_tensor("hessian", &mdfa_hessian(&fam, &theta)?));
            }
        }
        Kind::DeltaCa | Kind::DeltaMca => {
            let fam: Box<dyn MatrixFamily> = spec.require_family()?.build()?;
            let n_obs = spec
                .n_obs
                .ok_or_else(|| Error::Invalid("delta kinds need n_obs".into()))?;
            let chain_opts = DerivOptions {
                hessian_values: true,
                gap_tol: opts.gap_tol,
                ..DerivOptions::default()
            };
            let bundle = gevd_jacobian(fam.as_ref(), &theta, &chain_opts)?;
            let stat = chain_from_bundle(fam.as_ref(), &theta, &bundle)?;
            let design = MultinomialDesign::new(theta.clone(), n_obs)?;
            tensors.push((
                "lambda".into(),
                TensorOut::from_vector("nu", &bundle.lambda),
            ));
            tensors.push(sym_tensor("covariance", &delta_covariance(&design, &stat)?));
            tensors.push(sym_tensor(
                "covariance_per_n",
                &delta_covariance_per_n(&design, &stat)?,
            ));
            tensors.push((
                "bias".into(),
                TensorOut::from_vector("nu", &delta_bias(&design, &stat)?),
            ));
            tensors.push((
                "bias_per_n".into(),
                TensorOut::from_vector("nu", &delta_bias_per_n(&design, &stat)?),
            ));
        }
    }

    let out = RunOutput {
        kind: spec.kind,
        theta: theta.iter().cloned().collect(),
        scalars,
        tensors,
        fd_report,
    };
    write_output(&out, out_path.as_ref(), format)?;
    Ok(if fd_failed { 4 } else { 0 })
}

fn run_trace(
    spec: &ProblemSpec,
    from: f64,
    to: f64,
    steps: usize,
    block: Option<usize>,
    out_path: Option<&PathBuf>,
) -> Result<()> {
    if steps < 2 {
        return Err(Error::Invalid("steps must be at least 2".into()));
    }
    let fam = spec.require_family()?.build()?;
    if fam.p() != 1 {
        return Err(Error::NotSingleParameter { p: fam.p() });
    }
    let n = fam.n();
    if let Some(b) = block {
        if b == 0 || n % b != 0 {
            return Err(Error::Invalid(format!(
                "block size {b} must divide the order {n}"
            )));
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["theta".to_string()];
    for nu in 0..n {
        header.push(format!("lambda{}", nu + 1));
    }
    if let Some(b) = block {
        for k in 0..(n / b) {
            header.push(format!("avg{}", k + 1));
        }
    }
    header.push("status".into());
    w.write_record(&header).map_err(|e| Error::Invalid(e.to_string()))?;
    for step in 0..steps {
        let th = from + (to - from) * step as f64 / (steps - 1) as f64;
        let theta = DVector::from_element(1, th);
        let mut rec = vec![format!("{th:.16e}")];
        match gevd_solve(&fam.a(&theta), &fam.b(&theta)) {
            Ok(sol) => {
                for nu in 0..n {
                    rec.push(format!("{:.16e}", sol.lambda[nu]));
                }
                if let Some(b) = block {
                    for k in 0..(n / b) {
                        let avg: f64 =
                            (0..b).map(|j| sol.lambda[k * b + j]).sum::<f64>() / b as f64;
                        rec.push(format!("{avg:.16e}"));
                    }
                }
                rec.push("ok".into());
            }
            Err(e) => {
                // Eigenvalues unavailable here; leave the cells empty and
                // flag the row.
                let extra = n + block.map_or(0, |b| n / b);
                rec.extend(std::iter::repeat(String::new()).take(extra));
                rec.push(e.to_string());
            }
        }
        w.write_record(&rec).map_err(|e| Error::Invalid(e.to_string()))?;
    }
    let text = String::from_utf8(w.into_inner().map_err(|e| Error::Invalid(e.to_string()))?)
        .map_err(|e| Error::Invalid(e.to_string()))?;
    match out_path {
        Some(p) => fs::write(p, text).map_err(|e| Error::Invalid(e.to_string())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn read_csv_numbers(path: &PathBuf) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Invalid(e.to_string()))?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Invalid(e.to_string()))?;
        let row: Vec<f64> = rec
            .iter()
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Invalid(format!("not a number: {v}")))
            })
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyTable);
    }
    let ncols = rows[0].len();
    for (i, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            return Err(Error::RaggedRows { row: i });
        }
    }
    Ok(rows)
}

fn run_ingest(
    csv_path: &PathBuf,
    kind: TableKind,
    vars: Option<usize>,
    out_path: Option<&PathBuf>,
) -> Result<()> {
    let rows = read_csv_numbers(csv_path)?;
    let (family, kind_out) = match kind {
        TableKind::Ca => {
            // Validates counts and proportions.
            make_ca(&rows)?;
            (FamilySpec::Ca { table: rows }, Kind::DeltaCa)
        }
        TableKind::Mca => {
            let m = vars.ok_or_else(|| {
                Error::Invalid("--vars (number of categorical variables) is required for mca".into())
            })?;
            // Long format: indicator columns then a trailing count column.
            let k = rows[0].len() - 1;
            let mut profiles = Vec::with_capacity(rows.len());
            let mut counts = Vec::with_capacity(rows.len());
            for (i, r) in rows.iter().enumerate() {
                let mut prof = Vec::with_capacity(k);
                for (j, v) in r[..k].iter().enumerate() {
                    if *v == 0.0 || *v == 1.0 {
                        prof.push(*v as u8);
                    } else {
                        return Err(Error::Invalid(format!(
                            "indicator cell ({i}, {j}) must be 0 or 1, got {v}"
                        )));
                    }
                }
                if r[k] < 0.0 {
                    return Err(Error::NegativeCell { row: i, col: k });
                }
                profiles.push(prof);
                counts.push(r[k]);
            }
            let total: f64 = counts.iter().sum();
            if total <= 0.0 {
                return Err(Error::EmptyTable);
            }
            let weights: Vec<f64> = counts.iter().map(|c| c / total).collect();
            make_mca(&profiles, &weights, m)?;
            (
                FamilySpec::Mca {
                    profiles,
                    weights,
                    m,
                },
                Kind::DeltaMca,
            )
        }
    };
    let spec = ProblemSpec {
        kind: kind_out,
        family: Some(family),
        covariance: None,
        theta: Vec::new(),
        options: Default::default(),
        output: Default::default(),
        n_factors: None,
        discrepancy: None,
        d_diagonal: None,
        n_obs: None,
    };
    let text = serde_json::to_string_pretty(&spec).map_err(|e| Error::Invalid(e.to_string()))?;
    match out_path {
        Some(p) => fs::write(p, text).map_err(|e| Error::Invalid(e.to_string())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn load_spec(path: &PathBuf) -> Result<ProblemSpec> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Invalid(format!("spec parse error: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome: Result<u8> = match &cli.command {
        Command::Run {
            spec,
            hessian_values,
            hessian_vectors,
            ginverse,
            fd_check,
            out,
            format,
        } => load_spec(spec).and_then(|s| {
            run_spec(
                &s,
                *hessian_values,
                *hessian_vectors,
                *ginverse,
                *fd_check,
                out.as_ref(),
                *format,
            )
        }),
        Command::Trace {
            spec,
            from,
            to,
            steps,
            block,
            out,
        } => load_spec(spec)
            .and_then(|s| run_trace(&s, *from, *to, *steps, *block, out.as_ref()))
            .map(|_| 0),
        Command::Ingest {
            csv,
            kind,
            vars,
            out,
        } => run_ingest(csv, *kind, *vars, out.as_ref()).map(|_| 0),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => fail(e),
    }
}
