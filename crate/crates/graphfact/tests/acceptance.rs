//! The nine acceptance criteria, each an exact check over a bounded sector.
//! Prints one PASS/FAIL line per criterion and exits nonzero if any fails.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use graphfact::pd_algebra::PDAlgebra;
use graphfact::suites::{run, Suite, SuiteConfig, SuiteReport};

#[derive(Clone, Copy)]
enum Alg {
    Sphere(i64),
    Torus,
}

impl Alg {
    fn build(self) -> Arc<PDAlgebra> {
        Arc::new(match self {
            Alg::Sphere(n) => PDAlgebra::sphere(n),
            Alg::Torus => PDAlgebra::torus(),
        })
    }

    fn label(self) -> String {
        match self {
            Alg::Sphere(n) => format!("S{n}"),
            Alg::Torus => "T2".into(),
        }
    }
}

const SURFACES_AND_S3: [Alg; 3] = [Alg::Sphere(2), Alg::Sphere(3), Alg::Torus];

/// One suite run: algebra, number of variable pairs, and config overrides.
struct Job {
    suite: Suite,
    alg: Alg,
    big_n: usize,
    tweak: fn(&mut SuiteConfig),
}

struct Criterion {
    number: usize,
    title: &'static str,
    jobs: Vec<Job>,
}

fn jobs(suite: Suite, algs: &[Alg], big_n: usize, tweak: fn(&mut SuiteConfig)) -> Vec<Job> {
    algs.iter().map(|&alg| Job { suite, alg, big_n, tweak }).collect()
}

fn criteria() -> Vec<Criterion> {
    vec![
        Criterion {
            number: 1,
            title: "differentials square to zero",
            jobs: jobs(Suite::DSquared, &SURFACES_AND_S3, 1, |c| {
                c.arity = 2;
                c.max_internal = 3;
                c.max_edges = 4;
                c.max_weight = 3;
            }),
        },
        Criterion {
            number: 2,
            title: "phi intertwines delta_pair and Delta",
            jobs: jobs(Suite::ChainMap, &SURFACES_AND_S3, 2, |c| c.samples = 500),
        },
        Criterion {
            number: 3,
            title: "module descent identities",
            jobs: jobs(Suite::Descent, &SURFACES_AND_S3, 2, |c| c.samples = 200),
        },
        Criterion {
            number: 4,
            title: "long graph / tall forest pairing perfect",
            jobs: jobs(Suite::Pairing, &[Alg::Sphere(2), Alg::Sphere(3)], 1, |c| c.arity = 4),
        },
        Criterion {
            number: 5,
            title: "graph homology matches recursion and model",
            jobs: jobs(Suite::Recursion, &SURFACES_AND_S3, 1, |c| c.arity = 2),
        },
        Criterion {
            number: 6,
            title: "Harrison homology concentrated on V",
            jobs: [1, 2]
                .into_iter()
                .flat_map(|big_n| jobs(Suite::Harrison, &[Alg::Sphere(2), Alg::Sphere(3)], big_n, |c| c.arity = 3))
                .collect(),
        },
        Criterion {
            number: 7,
            title: "filtration degree audit",
            jobs: jobs(Suite::DegreeAudit, &SURFACES_AND_S3, 1, |_| {}),
        },
        Criterion {
            number: 8,
            title: "twisted identities and hbar = 0 recovery",
            jobs: jobs(Suite::Twisted, &SURFACES_AND_S3, 2, |c| c.hbar_order = 2),
        },
        Criterion {
            number: 9,
            title: "isomod identity",
            jobs: jobs(Suite::Isomod, &SURFACES_AND_S3, 2, |c| c.arity = 3),
        },
    ]
}

fn run_job(job: &Job) -> (String, Result<SuiteReport, String>) {
    let mut cfg = SuiteConfig::new(job.alg.build(), job.big_n);
    (job.tweak)(&mut cfg);
    let label = format!("{} {} N={}", job.suite.name(), job.alg.label(), job.big_n);
    (label, run(job.suite, &cfg).map_err(|e| e.to_string()))
}

fn main() -> ExitCode {
    let criteria = criteria();
    let start = Instant::now();
    let outcomes: Vec<Vec<(String, Result<SuiteReport, String>)>> = std::thread::scope(|s| {
        let handles: Vec<_> = criteria
            .iter()
            .map(|c| s.spawn(move || c.jobs.iter().map(run_job).collect::<Vec<_>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("criterion thread")).collect()
    });

    let mut all = true;
    for (c, runs) in criteria.iter().zip(&outcomes) {
        let mut failures = Vec::new();
        for (label, res) in runs {
            match res {
                Ok(rep) if rep.passed() => {}
                Ok(rep) => {
                    let bad: Vec<&str> = rep.checks.iter().filter(|k| !k.passed).map(|k| k.name.as_str()).collect();
                    failures.push(format!("{label}: {}", bad.join("; ")));
                }
                Err(e) => failures.push(format!("{label}: error: {e}")),
            }
        }
        let checks: usize = runs.iter().filter_map(|(_, r)| r.as_ref().ok()).map(|r| r.checks.len()).sum();
        let verdict = if failures.is_empty() { "PASS" } else { "FAIL" };
        println!("{verdict} criterion {}: {} ({} runs, {checks} checks)", c.number, c.title, runs.len());
        for f in &failures {
            println!("    {f}");
        }
        for (label, rep) in runs.iter().filter_map(|(l, r)| r.as_ref().ok().map(|r| (l, r))) {
            for w in &rep.warnings {
                println!("    note: {label}: {w}");
            }
        }
        all &= failures.is_empty();
    }
    println!("acceptance finished in {:.1} s", start.elapsed().as_secs_f64());
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
