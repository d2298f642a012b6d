use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};

use qnn::control::lyapunov::{VerifyMethod, GRID_POINTS};
use qnn::control::{
    build_closed_loop, solve_steady_state, Controller, LmiConfig, LmiObjective, Region, SetPoint,
};
use qnn::data_io::{
    dataset_from_table, io_log_from_table, load_delimited, load_idx, write_table, DataError, Dataset,
    LabeledImages, ModelFile, PixelScale, DOWNSAMPLE_METHOD,
};
use qnn::decomposition::{decompose_network, DecompositionConfig, DecompositionError};
use qnn::network::ActivationParams;
use qnn::pipelines::{
    is_infeasible, is_solver_failure, predict, run_classification, run_lipschitz, run_regression, run_synthesis,
    run_sysid, PipelineError, RunReport, SynthesisMode,
};
use qnn::sdp::SolverConfig;
use qnn::training::{Loss, TrainingConfig};

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_SOLVER: u8 = 4;
const EXIT_INFEASIBLE: u8 = 5;

#[derive(Parser)]
#[command(name = "qnn", version, about = "Quadratic neural networks: convex training, identification and control")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Global {
    /// Quadratic activation coefficient.
    #[arg(long, global = true, default_value_t = 0.0937, allow_hyphen_values = true)]
    a: f64,
    #[arg(long, global = true, default_value_t = 0.5, allow_hyphen_values = true)]
    b: f64,
    #[arg(long, global = true, default_value_t = 0.4688, allow_hyphen_values = true)]
    c: f64,
    /// Seed recorded in every report.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory (or file for table-producing commands).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Solver tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    L2,
    Linf,
}

#[derive(Args, Clone)]
struct TrainArgs {
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
    #[arg(long, value_enum, default_value_t = LossArg::L2)]
    loss: LossArg,
    /// Append a constant-one input column.
    #[arg(long)]
    offset: bool,
}

#[derive(Args)]
struct TableArgs {
    /// Delimited text file ('#' comments, whitespace or commas).
    #[arg(long)]
    data: PathBuf,
    /// Zero-based input columns.
    #[arg(long, value_delimiter = ',', required = true)]
    inputs: Vec<usize>,
    /// Zero-based output columns.
    #[arg(long, value_delimiter = ',')]
    outputs: Vec<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a regression network and decompose it into neurons.
    Train {
        #[command(flatten)]
        table: TableArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Recover explicit neurons from a saved network.
    Decompose {
        #[arg(long)]
        model: PathBuf,
    },
    /// Evaluate a saved network on a table.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        inputs: Vec<usize>,
    },
    /// Train a one-hot classifier and report held-out accuracy.
    Classify {
        /// Directory holding the four MNIST IDX files.
        #[arg(long, conflicts_with_all = ["train", "test"])]
        mnist_dir: Option<PathBuf>,
        /// Prepared table: features then a label column.
        #[arg(long, requires = "test")]
        train: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        classes: usize,
        /// Leading training samples to use.
        #[arg(long)]
        train_size: Option<usize>,
        #[arg(long)]
        test_size: Option<usize>,
        /// Keep MNIST pixels on the 0-255 scale.
        #[arg(long)]
        raw_pixels: bool,
        #[command(flatten)]
        train_args: TrainArgs,
    },
    /// Identify a state-space model from an input-output log.
    Sysid {
        #[command(flatten)]
        table: TableArgs,
        #[arg(long, default_value_t = 1)]
        delays: usize,
        #[arg(long, default_value_t = 1.0)]
        train_frac: f64,
        #[arg(long)]
        sample_period: Option<f64>,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Solve for the inputs holding a model at an output setpoint.
    SteadyState {
        #[arg(long)]
        model: PathBuf,
        /// Output setpoint y★, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        setpoint: Vec<f64>,
    },
    /// Synthesize a state-feedback controller with a Lyapunov certificate.
    SynthLmi {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        /// `global`, `cube:R` or `lo:hi,lo:hi,…`.
        #[arg(long, default_value = "global", allow_hyphen_values = true)]
        region: String,
        /// Only require feasibility instead of minimizing the condition number.
        #[arg(long)]
        feasibility: bool,
        #[arg(long, default_value_t = 1)]
        l_degree: u32,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Guaranteed-cost lower bound and the induced controller.
    CostBound {
        #[arg(long)]
        model: PathBuf,
        /// Diagonal of Q (one entry per state).
        #[arg(long, value_delimiter = ',', required = true)]
        q: Vec<f64>,
        /// Diagonal of R (one entry per input).
        #[arg(long, value_delimiter = ',', required = true)]
        r: Vec<f64>,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Check a constant-gain controller against a quadratic Lyapunov function.
    Verify {
        #[arg(long)]
        model: PathBuf,
        /// Gain matrix K, row-major, m × nx.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        gain: Vec<f64>,
        /// Lyapunov matrix P, row-major (identity if omitted).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        p: Vec<f64>,
        /// Output setpoint y★ (origin if omitted).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        setpoint: Vec<f64>,
        #[arg(long, default_value = "global", allow_hyphen_values = true)]
        region: String,
        /// Sample a grid instead of solving for an SOS certificate.
        #[arg(long)]
        grid: bool,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Roll out a model under its saved controller or a given input sequence.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        x0: Vec<f64>,
        #[arg(long, default_value_t = 50)]
        steps: usize,
        /// Open-loop input table, one row per step.
        #[arg(long)]
        inputs: Option<PathBuf>,
    },
    /// Per-output Lipschitz constants on an input box.
    Lipschitz {
        #[arg(long)]
        model: PathBuf,
        /// Bound on ‖x‖∞.
        #[arg(long, default_value_t = 1.0)]
        x_bound: f64,
    },
    /// Downsample MNIST IDX files into a delimited table.
    MnistPrep {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        raw_pixels: bool,
        #[arg(long)]
        limit: Option<usize>,
    },
}

#[derive(Args, Clone)]
struct SimArgs {
    /// Initial states `a,b;c,d` for closed-loop rollouts.
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<String>,
    #[arg(long, default_value_t = 100)]
    steps: usize,
}

impl Global {
    fn activation(&self) -> Result<ActivationParams> {
        ActivationParams::new(self.a, self.b, self.c).map_err(|e| usage(e.to_string()))
    }

    fn solver(&self) -> SolverConfig {
        let mut s = SolverConfig::default();
        if let Some(t) = self.tol {
            s.eps_abs = t;
            s.eps_infeasible = t;
        }
        s
    }

    fn training(&self, t: &TrainArgs) -> Result<TrainingConfig> {
        Ok(TrainingConfig {
            activation: self.activation()?,
            beta: t.beta,
            loss: match t.loss {
                LossArg::L2 => Loss::SquaredL2,
                LossArg::Linf => Loss::InfinityNorm,
            },
            offset_augment: t.offset,
            solver: self.solver(),
        })
    }
}

/// Argument errors found after parsing.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    if let Some(p) = e.downcast_ref::<PipelineError>() {
        if is_infeasible(p) {
            return EXIT_INFEASIBLE;
        }
        if is_solver_failure(p) {
            return EXIT_SOLVER;
        }
        if let PipelineError::InvalidArgument(_) = p {
            return EXIT_USAGE;
        }
        return EXIT_DATA;
    }
    EXIT_DATA
}

fn parse_region(s: &str, n: usize) -> Result<Region> {
    let s = s.trim();
    if s == "global" {
        return Ok(Region::Global);
    }
    if let Some(r) = s.strip_prefix("cube:") {
        let r: f64 = r.parse().map_err(|_| usage(format!("bad cube radius {r:?}")))?;
        return Ok(Region::cube(n, r));
    }
    let bounds = s
        .split(',')
        .map(|pair| {
            let (lo, hi) = pair.split_once(':').ok_or_else(|| usage(format!("bad bound {pair:?}")))?;
            let lo: f64 = lo.trim().parse().map_err(|_| usage(format!("bad bound {pair:?}")))?;
            let hi: f64 = hi.trim().parse().map_err(|_| usage(format!("bad bound {pair:?}")))?;
            Ok((lo, hi))
        })
        .collect::<Result<Vec<_>>>()?;
    let region = Region::Box(bounds);
    region.validate(n).map_err(|e| usage(e.to_string()))?;
    Ok(region)
}

fn parse_states(s: Option<&str>, n: usize) -> Result<Vec<DVector<f64>>> {
    let Some(s) = s else { return Ok(Vec::new()) };
    s.split(';')
        .map(|part| {
            let v = part
                .split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|_| usage(format!("bad state entry {t:?}"))))
                .collect::<Result<Vec<_>>>()?;
            if v.len() != n {
                return Err(usage(format!("initial state {part:?} needs {n} entries")));
            }
            Ok(DVector::from_vec(v))
        })
        .collect()
}

fn square(entries: &[f64], n: usize, what: &str) -> Result<DMatrix<f64>> {
    if entries.len() != n * n {
        return Err(usage(format!("{what} needs {} entries, got {}", n * n, entries.len())));
    }
    Ok(DMatrix::from_row_slice(n, n, entries))
}

fn load_model(path: &Path) -> Result<ModelFile> {
    ModelFile::load(path)
        .map_err(PipelineError::from)
        .with_context(|| format!("loading {}", path.display()))
}

fn out_dir(g: &Global, default: &str) -> PathBuf {
    g.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn print_report(report: &RunReport) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(report)?);
    Ok(())
}

fn pipeline<T>(r: Result<T, impl Into<PipelineError>>) -> Result<T> {
    r.map_err(|e| anyhow::Error::new(e.into()))
}

fn labeled_table(path: &Path, classes: usize) -> Result<Dataset> {
    let table = pipeline(load_delimited(path))?;
    if table.ncols() < 2 {
        return Err(anyhow::Error::new(PipelineError::Data(DataError::SchemaError(
            "need feature columns and a label column".into(),
        ))));
    }
    let nf = table.ncols() - 1;
    let labels: Vec<usize> = table.column(nf).iter().map(|&v| v as usize).collect();
    let y = pipeline(qnn::data_io::one_hot_matrix(&labels, classes))?;
    let mut ds = pipeline(Dataset::new(table.columns(0, nf).into_owned(), y))?;
    ds.labels = Some(labels);
    Ok(ds)
}

fn mnist_split(dir: &Path, prefix: &str, scale: PixelScale) -> Result<LabeledImages> {
    pipeline(load_idx(
        dir.join(format!("{prefix}-images-idx3-ubyte")),
        dir.join(format!("{prefix}-labels-idx1-ubyte")),
        scale,
    ))
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Train { table, train } => {
            let data = pipeline(load_delimited(&table.data))?;
            if table.outputs.is_empty() {
                return Err(usage("--outputs is required"));
            }
            let ds = pipeline(dataset_from_table(&data, &table.inputs, &table.outputs))?;
            let cfg = g.training(train)?;
            let decomp = DecompositionConfig::new(g.tol.unwrap_or(1e-5)).map_err(|e| usage(e.to_string()))?;
            let mut run = pipeline(run_regression(&ds, &cfg, &decomp))?;
            run.report.notes.push(format!("seed {}", g.seed));
            pipeline(run.save(&out_dir(g, "qnn-train")))?;
            print_report(&run.report)
        }
        Command::Decompose { model } => {
            let mut file = load_model(model)?;
            let net = pipeline(file.network())?;
            let cfg = DecompositionConfig::new(g.tol.unwrap_or(1e-5)).map_err(|e| usage(e.to_string()))?;
            let neurons = decompose_network(&net, &cfg, 1e-6)
                .map_err(|e: DecompositionError| anyhow::Error::new(PipelineError::from(e)))?;
            for (k, ns) in neurons.outputs.iter().enumerate() {
                for n in ns {
                    let w: Vec<String> = n.w.iter().map(|v| format!("{v:.6}")).collect();
                    println!("output {k}: alpha {:.6} w [{}]", n.alpha, w.join(", "));
                }
            }
            println!("neurons: {}", neurons.total());
            if let Some(out) = &g.out {
                file = file.with_neurons(&neurons);
                pipeline(file.save(out))?;
            }
            Ok(())
        }
        Command::Predict { model, data, inputs } => {
            let file = load_model(model)?;
            let net = pipeline(file.network())?;
            let table = pipeline(load_delimited(data))?;
            let x = pipeline(qnn::data_io::select_columns(&table, inputs))?;
            let y = pipeline(predict(&net, &x, file.offset))?;
            match &g.out {
                Some(out) => {
                    let header: Vec<String> = (0..y.ncols()).map(|k| format!("yhat{k}")).collect();
                    pipeline(write_table(out, &header.iter().map(String::as_str).collect::<Vec<_>>(), &y))?
                }
                None => {
                    for r in y.row_iter() {
                        let line: Vec<String> = r.iter().map(|v| format!("{v:?}")).collect();
                        println!("{}", line.join(" "));
                    }
                }
            }
            Ok(())
        }
        Command::Classify {
            mnist_dir,
            train,
            test,
            classes,
            train_size,
            test_size,
            raw_pixels,
            train_args,
        } => {
            let scale = if *raw_pixels { PixelScale::Raw } else { PixelScale::Unit };
            let (tr, te) = match (mnist_dir, train, test) {
                (Some(dir), _, _) => (
                    pipeline(mnist_split(dir, "train", scale)?.to_dataset(*classes))?,
                    pipeline(mnist_split(dir, "t10k", scale)?.to_dataset(*classes))?,
                ),
                (None, Some(a), Some(b)) => (labeled_table(a, *classes)?, labeled_table(b, *classes)?),
                _ => return Err(usage("give --mnist-dir or both --train and --test")),
            };
            let tr = train_size.map_or(tr.clone(), |n| tr.head(n));
            let te = test_size.map_or(te.clone(), |n| te.head(n));
            let cfg = g.training(train_args)?;
            let mut run = pipeline(run_classification(&tr, &te, &cfg))?;
            run.report.notes.push(format!("seed {}", g.seed));
            if mnist_dir.is_some() {
                run.report.notes.push(format!("preprocessing: {DOWNSAMPLE_METHOD}, pixels {scale:?}"));
                run.model.preprocessing = Some(format!("{DOWNSAMPLE_METHOD}; pixels {scale:?}"));
            }
            let dir = out_dir(g, "qnn-classify");
            pipeline(std::fs::create_dir_all(&dir).map_err(DataError::from))?;
            pipeline(run.model.save(dir.join("model.json")))?;
            run.report.artifacts.push(dir.join("model.json"));
            pipeline(run.report.save(&dir))?;
            print_report(&run.report)
        }
        Command::Sysid {
            table,
            delays,
            train_frac,
            sample_period,
            train,
        } => {
            let data = pipeline(load_delimited(&table.data))?;
            if table.outputs.is_empty() {
                return Err(usage("--outputs is required"));
            }
            let log = pipeline(io_log_from_table(&data, &table.inputs, &table.outputs, *sample_period))?;
            let mut run = pipeline(run_sysid(&log, *delays, *train_frac, &g.training(train)?))?;
            run.report.notes.push(format!("seed {}", g.seed));
            pipeline(run.save(&out_dir(g, "qnn-sysid")))?;
            print_report(&run.report)
        }
        Command::SteadyState { model, setpoint } => {
            let m = pipeline(load_model(model)?.state_space())?;
            if setpoint.len() != m.n_outputs() {
                return Err(usage(format!("setpoint needs {} entries", m.n_outputs())));
            }
            let x_star = qnn::control::replicate(&DVector::from_column_slice(setpoint), m.delays());
            let ss = pipeline(solve_steady_state(&m, &x_star))?;
            if ss.arbitrary {
                println!("arbitrary: every input holds the setpoint (reporting 0)");
            }
            for s in &ss.solutions {
                let v: Vec<String> = s.iter().map(|v| format!("{v:?}")).collect();
                println!("u* = [{}]", v.join(", "));
            }
            Ok(())
        }
        Command::SynthLmi {
            model,
            epsilon,
            region,
            feasibility,
            l_degree,
            sim,
        } => {
            let file = load_model(model)?;
            let m = pipeline(file.state_space())?;
            let cfg = LmiConfig {
                epsilon: *epsilon,
                region: parse_region(region, m.n_states())?,
                objective: if *feasibility {
                    LmiObjective::Feasibility
                } else {
                    LmiObjective::MinConditionNumber
                },
                l_degree: *l_degree,
                solver: g.solver(),
            };
            synthesis(g, &file, &m, &SynthesisMode::Lmi(cfg), sim, "qnn-synth")
        }
        Command::CostBound { model, q, r, sim } => {
            let file = load_model(model)?;
            let m = pipeline(file.state_space())?;
            if q.len() != m.n_states() || r.len() != m.n_inputs() {
                return Err(usage(format!("need {} Q and {} R entries", m.n_states(), m.n_inputs())));
            }
            let mode = SynthesisMode::CostBound {
                q: DMatrix::from_diagonal(&DVector::from_column_slice(q)),
                r: DMatrix::from_diagonal(&DVector::from_column_slice(r)),
                solver: g.solver(),
            };
            synthesis(g, &file, &m, &mode, sim, "qnn-cost-bound")
        }
        Command::Verify {
            model,
            gain,
            p,
            setpoint,
            region,
            grid,
            sim,
        } => {
            let file = load_model(model)?;
            let m = pipeline(file.state_space())?;
            let (nx, nu) = (m.n_states(), m.n_inputs());
            if gain.len() != nx * nu {
                return Err(usage(format!("gain needs {} entries", nx * nu)));
            }
            let k = DMatrix::from_row_slice(nu, nx, gain);
            let pm = if p.is_empty() { DMatrix::identity(nx, nx) } else { square(p, nx, "P")? };
            let (x_star, u_star) = if setpoint.is_empty() {
                (DVector::zeros(nx), DVector::zeros(nu))
            } else {
                let y = DVector::from_column_slice(setpoint);
                let x = qnn::control::replicate(&y, m.delays());
                let ss = pipeline(solve_steady_state(&m, &x))?;
                (SetPoint::from_output(y, m.delays(), ss.solutions[0].clone()).x_star, ss.solutions[0].clone())
            };
            let region = parse_region(region, nx)?;
            let method = if *grid {
                VerifyMethod::Grid {
                    points: GRID_POINTS,
                    tol: g.tol.unwrap_or(1e-7),
                }
            } else {
                VerifyMethod::Sos(g.solver())
            };
            let mode = SynthesisMode::Verify {
                controller: Controller::constant(&k, x_star, u_star),
                p: pm,
                region,
                method,
            };
            synthesis(g, &file, &m, &mode, sim, "qnn-verify")
        }
        Command::Simulate {
            model,
            x0,
            steps,
            inputs,
        } => {
            let file = load_model(model)?;
            let m = pipeline(file.state_space())?;
            if x0.len() != m.n_states() {
                return Err(usage(format!("x0 needs {} entries", m.n_states())));
            }
            let x0 = DVector::from_column_slice(x0);
            let states = match (inputs, &file.controller) {
                (Some(path), _) => {
                    let u = pipeline(load_delimited(path))?;
                    pipeline(m.simulate(&x0, &u))?.states
                }
                (None, Some(c)) => {
                    let cl = pipeline(build_closed_loop(&m, &pipeline(c.to_controller())?))?;
                    let mut traj = vec![x0];
                    for _ in 0..*steps {
                        let next = cl.step(traj.last().expect("nonempty"));
                        traj.push(next);
                    }
                    traj
                }
                (None, None) => return Err(usage("model has no controller; pass --inputs")),
            };
            let nx = m.n_states();
            let table = DMatrix::from_fn(states.len(), nx + 1, |t, j| if j == 0 { t as f64 } else { states[t][j - 1] });
            let header: Vec<String> = std::iter::once("t".to_string()).chain((0..nx).map(|k| format!("x{k}"))).collect();
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            match &g.out {
                Some(out) => pipeline(write_table(out, &header, &table))?,
                None => {
                    println!("# {}", header.join(" "));
                    for r in table.row_iter() {
                        let line: Vec<String> = r.iter().map(|v| format!("{v:?}")).collect();
                        println!("{}", line.join(" "));
                    }
                }
            }
            Ok(())
        }
        Command::Lipschitz { model, x_bound } => {
            let net = pipeline(load_model(model)?.network())?;
            let (mut report, _) = pipeline(run_lipschitz(&net, *x_bound))?;
            if let Some(dir) = &g.out {
                pipeline(std::fs::create_dir_all(dir).map_err(DataError::from))?;
                pipeline(report.save(dir))?;
            }
            print_report(&report)
        }
        Command::MnistPrep {
            images,
            labels,
            raw_pixels,
            limit,
        } => {
            let scale = if *raw_pixels { PixelScale::Raw } else { PixelScale::Unit };
            let set = pipeline(load_idx(images, labels, scale))?;
            let ds = pipeline(set.to_dataset(10))?;
            let ds = limit.map_or(ds.clone(), |n| ds.head(n));
            let labels = ds.labels.clone().unwrap_or_default();
            let table = DMatrix::from_fn(ds.len(), ds.x.ncols() + 1, |i, j| {
                if j < ds.x.ncols() {
                    ds.x[(i, j)]
                } else {
                    labels[i] as f64
                }
            });
            let out = g.out.clone().unwrap_or_else(|| PathBuf::from("mnist.txt"));
            let mut header: Vec<String> = (0..ds.x.ncols()).map(|k| format!("p{k}")).collect();
            header.push("label".into());
            pipeline(write_table(&out, &header.iter().map(String::as_str).collect::<Vec<_>>(), &table))?;
            println!("wrote {} samples ({DOWNSAMPLE_METHOD}) to {}", ds.len(), out.display());
            Ok(())
        }
    }
}

fn synthesis(
    g: &Global,
    file: &ModelFile,
    m: &qnn::sysid::StateSpaceModel,
    mode: &SynthesisMode,
    sim: &SimArgs,
    default_dir: &str,
) -> Result<()> {
    let x0s = parse_states(sim.x0.as_deref(), m.n_states())?;
    let mut run = pipeline(run_synthesis(m, mode, &x0s, sim.steps))?;
    run.report.notes.push(format!("seed {}", g.seed));
    pipeline(run.save(&out_dir(g, default_dir), file))?;
    print_report(&run.report)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.global.verbose {
            log::LevelFilter::Debug
        } else {
            log::LevelFilter::Warn
        })
        .parse_default_env()
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
