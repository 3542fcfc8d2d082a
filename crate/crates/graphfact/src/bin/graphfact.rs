//! Command-line driver: verification suites, evaluation of `φ`, and sector homology.
//! Exit codes: 0 pass, 1 verification failure, 2 usage or input error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use graphfact::composition_complex::CompositionComplex;
use graphfact::eval_map::EvalMap;
use graphfact::homology_engine::{deg4_pages, harrison_homology, verify_recursion, SectorSpec, Split, Verdict};
use graphfact::pd_algebra::PDAlgebra;
use graphfact::poly::Poly;
use graphfact::scalars::{Coeff, HbarSeries, Q};
use graphfact::suites::{self, Suite, SuiteConfig};
use graphfact::{Error, Result};

#[derive(Parser)]
#[command(name = "graphfact", version, about = "Exact computations with decorated graph complexes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a verification suite.
    Verify {
        #[arg(value_parser = parse_suite)]
        suite: Suite,
        #[command(flatten)]
        config: Config,
    },
    /// Evaluate `φ` (or `φ_m` with --mc-element) on a graph and polynomials.
    Eval {
        /// Graph JSON file.
        graph: PathBuf,
        /// Polynomials: a JSON list, or one polynomial per line.
        polys: PathBuf,
        /// Maurer–Cartan element `m` of the polynomial algebra, e.g. "hbar*x1*x2".
        #[arg(long = "mc-element")]
        mc_element: Option<String>,
        #[command(flatten)]
        config: Config,
    },
    /// Homology of a truncated sector.
    Homology {
        space: Space,
        #[command(flatten)]
        config: Config,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Space {
    /// `(Graphs_M(r), δ_split)` compared with the configuration model.
    Graphs,
    /// The Harrison complex of the polynomial algebra.
    Harrison,
    /// `E⁰` and `E¹` of the `deg⁴` filtration on composition trees.
    Pages,
}

#[derive(Args, Clone)]
struct Config {
    /// sphere, torus, or file:PATH with a Poincaré duality algebra in JSON.
    #[arg(long, default_value = "sphere")]
    algebra: String,
    /// Dimension of the manifold.
    #[arg(long = "n", default_value_t = 2)]
    n: i64,
    /// Number of variable pairs `x_i, p_i`.
    #[arg(long = "N", default_value_t = 1)]
    big_n: usize,
    #[arg(long, default_value_t = 2)]
    arity: usize,
    #[arg(long = "max-internal", default_value_t = 3)]
    max_internal: usize,
    #[arg(long = "max-edges", default_value_t = 4)]
    max_edges: usize,
    #[arg(long = "max-decorations", default_value_t = 2)]
    max_decorations: usize,
    /// Bound on the number of variables in tree letters.
    #[arg(long = "max-weight", default_value_t = 3)]
    max_weight: usize,
    /// Random inputs per randomized check.
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long = "hbar-order", default_value_t = 2)]
    hbar_order: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the JSON report here.
    #[arg(long = "json")]
    json: Option<PathBuf>,
}

fn parse_suite(s: &str) -> std::result::Result<Suite, String> {
    s.parse::<Suite>().map_err(|e| {
        let names: Vec<&str> = Suite::ALL.iter().map(|x| x.name()).collect();
        format!("{e}; expected one of {}", names.join(", "))
    })
}

impl Config {
    fn algebra(&self) -> Result<Arc<PDAlgebra>> {
        let alg = match self.algebra.as_str() {
            "sphere" => PDAlgebra::sphere(self.n),
            "torus" => PDAlgebra::torus(),
            other => match other.strip_prefix("file:") {
                Some(path) => PDAlgebra::from_json_str(&read(Path::new(path))?)?,
                None => return Err(Error::Parse(format!("unknown algebra '{other}'"))),
            },
        };
        Ok(Arc::new(alg))
    }

    fn suite_config(&self) -> Result<SuiteConfig> {
        let mut c = SuiteConfig::new(self.algebra()?, self.big_n);
        c.arity = self.arity;
        c.max_internal = self.max_internal;
        c.max_edges = self.max_edges;
        c.max_decorations = self.max_decorations;
        c.max_weight = self.max_weight;
        c.tree_max_internal = self.max_internal.min(c.tree_max_internal);
        c.tree_max_edges = self.max_edges.min(c.tree_max_edges);
        c.samples = self.samples;
        c.hbar_order = self.hbar_order;
        c.seed = self.seed;
        Ok(c)
    }

    fn sector(&self) -> SectorSpec {
        SectorSpec::new(self.arity, self.max_internal, self.max_edges, self.max_decorations)
    }

    fn write_json(&self, v: &Value) -> Result<()> {
        if let Some(path) = &self.json {
            let text = serde_json::to_string_pretty(v)?;
            std::fs::write(path, text + "\n").map_err(|e| with_path(path, e))?;
        }
        Ok(())
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| with_path(path, e))
}

fn with_path(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

/// Outcome of a command, mapped to the exit code.
enum Outcome {
    Pass,
    Fail,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Verify { suite, config } => cmd_verify(suite, &config),
        Command::Eval { graph, polys, mc_element, config } => cmd_eval(&graph, &polys, mc_element.as_deref(), &config),
        Command::Homology { space, config } => cmd_homology(space, &config),
    };
    match result {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn cmd_verify(suite: Suite, config: &Config) -> Result<Outcome> {
    let report = suites::run(suite, &config.suite_config()?)?;
    print!("{}", report.to_lines());
    let verdict = if report.passed() { "PASS" } else { "FAIL" };
    println!("{verdict} {}", suite.name());
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    config.write_json(&report.to_json())?;
    Ok(if report.passed() { Outcome::Pass } else { Outcome::Fail })
}

/// A JSON list of strings or term lists, or one polynomial per line (`#` starts a comment).
fn read_polys<C: Coeff>(path: &Path, e: &EvalMap) -> Result<Vec<Poly<C>>> {
    let text = read(path)?;
    let table = e.vars().table();
    if text.trim_start().starts_with('[') {
        let v: Value = serde_json::from_str(&text)?;
        let items = v.as_array().ok_or_else(|| Error::Parse("expected a list of polynomials".into()))?;
        return items
            .iter()
            .enumerate()
            .map(|(i, item)| {
                match item {
                    Value::String(s) => Poly::parse(table, s),
                    other => Poly::from_json(table, other),
                }
                .map_err(|err| Error::Parse(format!("{} entry {}: {err}", path.display(), i + 1)))
            })
            .collect();
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| Poly::parse(table, l.trim()).map_err(|err| Error::Parse(format!("{} line {}: {err}", path.display(), i + 1))))
        .collect()
}

fn cmd_eval(graph: &Path, polys: &Path, mc: Option<&str>, config: &Config) -> Result<Outcome> {
    let e = EvalMap::new(config.big_n, config.algebra()?)?;
    let gv: Value = serde_json::from_str(&read(graph)?).map_err(|err| Error::Parse(format!("{}: {err}", graph.display())))?;
    let (g, negate) = e.graphs().graph_from_json(&gv)?;
    let out = match mc {
        None => {
            let f: Vec<Poly<Q>> = read_polys(polys, &e)?;
            let x = e.phi(&g, &f)?;
            let x = if negate { x.neg() } else { x };
            json!({ "text": x.render(), "terms": x.to_json() })
        }
        Some(m) => {
            let m: Poly<HbarSeries> = e.vars().parse::<HbarSeries>(m)?.map_coeffs(|c| c.truncate(config.hbar_order));
            let f: Vec<Poly<HbarSeries>> = read_polys(polys, &e)?;
            let x = e.phi_m(&m, &g, &f)?.map_coeffs(|c| c.truncate(config.hbar_order));
            let x = if negate { x.neg() } else { x };
            json!({ "text": x.render(), "terms": x.to_json() })
        }
    };
    println!("{}", out["text"].as_str().unwrap_or_default());
    config.write_json(&out)?;
    Ok(Outcome::Pass)
}

fn cmd_homology(space: Space, config: &Config) -> Result<Outcome> {
    let alg = config.algebra()?;
    match space {
        Space::Graphs => {
            let report = verify_recursion(&alg, config.arity, &config.sector(), Split::Reduced)?;
            print!("{}", report.to_table());
            let undecided = report.rows.iter().filter(|r| r.verdict == Verdict::Inconclusive).count();
            if undecided > 0 {
                eprintln!("warning: {undecided} degrees inconclusive: the truncation is not sound there");
            }
            config.write_json(&report.to_json())?;
            Ok(if report.passed() { Outcome::Pass } else { Outcome::Fail })
        }
        Space::Harrison => {
            let cc = CompositionComplex::new(config.big_n, alg)?;
            let rows = harrison_homology(&cc, config.arity)?;
            println!("{:>6} {:>7} {:>6} {:>9}", "weight", "letters", "dim", "homology");
            for r in &rows {
                println!("{:>6} {:>7} {:>6} {:>9}", r.weight, r.letters, r.dim, r.homology);
            }
            let concentrated = rows.iter().all(|r| r.homology == 0 || (r.weight, r.letters) == (1, 1));
            println!("{}", if concentrated { "concentrated on V" } else { "NOT concentrated on V" });
            let v = json!({
                "rows": rows.iter().map(|r| json!({ "weight": r.weight, "letters": r.letters, "dim": r.dim, "homology": r.homology })).collect::<Vec<_>>(),
                "concentrated": concentrated,
            });
            config.write_json(&v)?;
            Ok(if concentrated { Outcome::Pass } else { Outcome::Fail })
        }
        Space::Pages => {
            let cc = CompositionComplex::new(config.big_n, alg)?;
            let report = deg4_pages(&cc, config.arity, config.max_weight, &config.sector())?;
            println!("d0: {}", report.d0().join(", "));
            println!("d1: {}", report.d1().join(", "));
            println!("{:>4} {:>7} {:>6} {:>6}", "p", "degree", "E0", "E1");
            let mut undecided = 0;
            for r in &report.rows {
                let e1 = r.e1.map_or_else(|| "-".to_string(), |x| x.to_string());
                undecided += usize::from(r.e1.is_none());
                println!("{:>4} {:>7} {:>6} {:>6}", r.p, r.degree, r.e0, e1);
            }
            if undecided > 0 {
                eprintln!("warning: {undecided} rows inconclusive: the truncation is not sound there");
            }
            config.write_json(&report.to_json())?;
            Ok(Outcome::Pass)
        }
    }
}
