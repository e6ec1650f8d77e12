use std::fmt;
use std::fs;
use std::path::Path;
use std::process::ExitCode;

use serde::Serialize;

use wightman::diagram::{self, label_assignments, step_weight, Diagram, DiagramReport};
use wightman::fock::{self, Converged};
use wightman::json::{ComplexValue, TableEntry};
use wightman::perturbation::{perturbative_orders, required_order};
use wightman::states::{chi_table, ChiRoute};
use wightman::verify::{run_suite, Suite};
use wightman::{ChiTable64, PhysicalParams, QuadratureSpec, StateSpec, C64};

use crate::{ChiArgs, Command, CorrelatorArgs, DiagramArgs, Format, PhysicsArgs, QuadArgs, VerifyArgs};

#[derive(Debug)]
pub enum CliError {
    Library(wightman::Error),
    Usage(String),
    Io(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        use wightman::Error as E;
        ExitCode::from(match self {
            CliError::Library(E::Truncation { .. }) => 3,
            CliError::Library(E::Convergence { .. }) => 4,
            CliError::Library(_) | CliError::Usage(_) => 2,
            CliError::Io(_) => 1,
        })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Library(e) => write!(f, "{e}"),
            CliError::Usage(s) => write!(f, "{s}"),
            CliError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl From<wightman::Error> for CliError {
    fn from(e: wightman::Error) -> Self {
        CliError::Library(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

pub fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Chi(args) => chi(args),
        Command::Correlator(args) => correlator(args),
        Command::Diagrams(args) => diagrams(args),
        Command::Verify(args) => verify(args),
    }
}

fn load_state(arg: &str) -> Result<StateSpec> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_owned()
    } else {
        fs::read_to_string(arg).map_err(|e| CliError::Usage(format!("cannot read state file '{arg}': {e}")))?
    };
    Ok(StateSpec::from_json(&text)?)
}

fn params(a: &PhysicsArgs) -> Result<PhysicalParams> {
    Ok(PhysicalParams::new(a.omega, a.hbar)?.with_lambda_rel(a.lambda_rel)?.with_t0(a.t0)?)
}

fn quadrature(a: &QuadArgs) -> Result<QuadratureSpec> {
    let spec = QuadratureSpec { base_nodes: a.quad_nodes, tol: a.quad_tol, ..QuadratureSpec::default() };
    spec.validate()?;
    Ok(spec)
}

pub fn parse_times(text: &str) -> Result<Vec<Vec<f64>>> {
    let tuples: Vec<Vec<f64>> = text
        .split(';')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|tuple| {
            tuple
                .split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|e| CliError::Usage(format!("bad time '{x}': {e}"))))
                .collect()
        })
        .collect::<Result<_>>()?;
    if tuples.is_empty() {
        return Err(CliError::Usage("--times needs at least one tuple".into()));
    }
    Ok(tuples)
}

fn thermal_beta(state: &StateSpec) -> Result<f64> {
    match state {
        StateSpec::Thermal { beta } => Ok(*beta),
        _ => Err(CliError::Usage("--interacting-thermal needs a thermal state".into())),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("plain data serializes") + "\n"
}

#[derive(Serialize)]
struct ChiOutput {
    route: ChiRoute,
    #[serde(skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
    max_order: usize,
    entries: Vec<TableEntry>,
}

fn chi(args: ChiArgs) -> Result<ExitCode> {
    let state = load_state(&args.state)?;
    let p = params(&args.physics)?;
    let numeric = |c: Converged<ChiTable64>| (ChiRoute::Oracle, Some(c.dim), c.value);
    let (route, dim, table) = if args.interacting_thermal {
        numeric(fock::chi_interacting_thermal(thermal_beta(&state)?, args.max_order, &p)?)
    } else if args.oracle || state.chi_route() == ChiRoute::Oracle {
        numeric(fock::chi_numeric_state(&state, args.max_order, &p)?)
    } else {
        (state.chi_route(), None, chi_table(&state, args.max_order, &p)?)
    };
    let output = ChiOutput { route, dim, max_order: args.max_order, entries: table.to_entries() };
    let text = match args.format {
        Format::Json => to_json(&output),
        Format::Csv => {
            let route = serde_json::to_value(route).expect("route serializes");
            let route = route.as_str().unwrap_or_default().to_owned();
            let mut s = String::from("route,m,n,re,im\n");
            for e in &output.entries {
                s += &format!("{route},{},{},{:.17e},{:.17e}\n", e.m, e.n, e.re, e.im);
            }
            s
        }
        Format::Dot => return Err(CliError::Usage("chi supports json and csv".into())),
    };
    emit(args.out.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct OracleComparison {
    value: ComplexValue,
    dim: usize,
    abs_delta: f64,
    rel_delta: f64,
}

#[derive(Serialize)]
struct CorrelatorRow {
    times: Vec<f64>,
    order: usize,
    perturbative_orders: Vec<ComplexValue>,
    perturbative: ComplexValue,
    diagrammatic: ComplexValue,
    route_delta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle: Option<OracleComparison>,
}

#[derive(Serialize)]
struct CorrelatorOutput<'a> {
    results: &'a [CorrelatorRow],
}

fn correlator(args: CorrelatorArgs) -> Result<ExitCode> {
    let state = load_state(&args.state)?;
    let p = params(&args.physics)?;
    let quad = quadrature(&args.quad)?;
    let tuples = parse_times(&args.times)?;
    let beta = if args.interacting_thermal { Some(thermal_beta(&state)?) } else { None };
    let mut rows = Vec::with_capacity(tuples.len());
    for times in tuples {
        let needed = required_order(times.len(), args.order);
        let chi = match beta {
            Some(b) => fock::chi_interacting_thermal(b, needed, &p)?.value,
            None => fock::chi_table_auto(&state, needed, &p)?,
        };
        let orders = perturbative_orders(&chi, &times, &p, args.order, &quad)?;
        let perturbative: C64 = orders.iter().sum();
        let diagrammatic: C64 = diagram::diagrammatic_orders(&chi, &times, &p, args.order, &quad)?.into_iter().sum();
        let oracle = if args.compare_oracle {
            let exact = match beta {
                Some(b) => fock::wightman_exact_interacting_thermal(b, &times, &p)?,
                None => fock::wightman_exact_anharmonic(&state, &times, &p)?,
            };
            let abs_delta = (perturbative - exact.value).norm();
            Some(OracleComparison {
                value: exact.value.into(),
                dim: exact.dim,
                abs_delta,
                rel_delta: abs_delta / exact.value.norm().max(f64::MIN_POSITIVE),
            })
        } else {
            None
        };
        rows.push(CorrelatorRow {
            order: args.order,
            perturbative_orders: orders.into_iter().map(Into::into).collect(),
            perturbative: perturbative.into(),
            diagrammatic: diagrammatic.into(),
            route_delta: (perturbative - diagrammatic).norm(),
            oracle,
            times,
        });
    }
    let text = match args.format {
        Format::Json => to_json(&CorrelatorOutput { results: &rows }),
        Format::Csv => {
            let mut s = String::from("times,order,perturbative_re,perturbative_im,diagrammatic_re,diagrammatic_im");
            if args.compare_oracle {
                s += ",oracle_re,oracle_im,abs_delta,rel_delta";
            }
            s += "\n";
            for r in &rows {
                let times = r.times.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(" ");
                s += &format!(
                    "{times},{},{:.17e},{:.17e},{:.17e},{:.17e}",
                    r.order, r.perturbative.re, r.perturbative.im, r.diagrammatic.re, r.diagrammatic.im
                );
                if let Some(o) = &r.oracle {
                    s += &format!(",{:.17e},{:.17e},{:.6e},{:.6e}", o.value.re, o.value.im, o.abs_delta, o.rel_delta);
                }
                s += "\n";
            }
            s
        }
        Format::Dot => return Err(CliError::Usage("correlator supports json and csv".into())),
    };
    emit(args.out.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}

/// DOT text with the symmetry factor and the step weight of every
/// labelling attached as graph annotations.
fn annotated_dot(d: &Diagram, report: &DiagramReport) -> String {
    let assignments = label_assignments(d);
    let dot = d.to_dot(&assignments);
    let mut header = format!("  label=\"{}  S = {}\";\n", report.text, report.symmetry_factor);
    header += &format!("  // symmetry factor: {}\n", report.symmetry_factor);
    for (a, row) in assignments.iter().zip(&report.assignments) {
        let labels = a.labels().iter().map(|l| l.to_string()).collect::<Vec<_>>().join(", ");
        header += &format!("  // labels [{labels}]: {}", step_weight(d, a).render(a));
        if let Some(v) = row.value {
            header += &format!(" value {} {:+}i", v.re, v.im);
        }
        header += "\n";
    }
    if let Some(v) = report.value {
        header += &format!("  // value: {} {:+}i\n", v.re, v.im);
    }
    let (first, rest) = dot.split_once('\n').expect("dot has a header line");
    format!("{first}\n{header}{rest}")
}

fn diagrams(args: DiagramArgs) -> Result<ExitCode> {
    let p = params(&args.physics)?;
    let quad = quadrature(&args.quad)?;
    let legs = required_order(args.points, args.order);
    let evaluation = match (&args.state, &args.times) {
        (Some(state), Some(times)) => {
            let state = load_state(state)?;
            let mut tuples = parse_times(times)?;
            if tuples.len() != 1 || tuples[0].len() != args.points {
                return Err(CliError::Usage(format!("--times must be one tuple of {} times", args.points)));
            }
            Some((fock::chi_table_auto(&state, legs, &p)?, tuples.remove(0)))
        }
        (Some(_), None) => return Err(CliError::Usage("--state needs --times".into())),
        (None, Some(_)) => return Err(CliError::Usage("--times needs --state".into())),
        (None, None) => None,
    };
    let list: Vec<Diagram> = match &evaluation {
        Some((chi, _)) => diagram::contributing_diagrams(args.points, args.order, chi, &p)?,
        None => diagram::enumerate_diagrams(args.points, args.order, legs)?.to_vec(),
    };
    let list: Vec<Diagram> = list.into_iter().filter(|d| !args.connected || d.connected()).collect();
    let ext = match args.format {
        Format::Dot => "dot",
        Format::Json => "json",
        Format::Csv => return Err(CliError::Usage("diagrams supports dot and json".into())),
    };
    fs::create_dir_all(&args.out)?;
    for (i, d) in list.iter().enumerate() {
        let value = match &evaluation {
            Some((chi, times)) => Some(diagram::evaluate_diagram(d, chi, times, &p, &quad)?),
            None => None,
        };
        let report = DiagramReport::new(d, value.as_ref());
        let text = match args.format {
            Format::Dot => annotated_dot(d, &report),
            _ => to_json(&report),
        };
        let path = args.out.join(format!("diagram_{:03}.{ext}", i + 1));
        fs::write(&path, text)?;
        println!("{}\tS={}\t{}", path.display(), report.symmetry_factor, report.text);
    }
    println!("{} diagrams", list.len());
    Ok(ExitCode::SUCCESS)
}

fn verify(args: VerifyArgs) -> Result<ExitCode> {
    let suite: Suite = args.suite.parse()?;
    let reports = run_suite(suite, args.seed);
    for r in &reports {
        println!("{r}");
    }
    let failed = reports.iter().filter(|r| !r.pass).count();
    println!("{} of {} criteria passed", reports.len() - failed, reports.len());
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(5) })
}
