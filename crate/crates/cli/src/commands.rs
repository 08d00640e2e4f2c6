//! One function per subcommand: resolved settings in, CSV text and a JSON
//! summary out.

use looptree::estimators::{
    domination_report, survival_curve, threshold_bisection, Experiment, Model, ThresholdSettings,
};
use looptree::explore::TreeSource;
use looptree::gwt::{
    expected_y, h_of_beta, heavy_tail_condition, link_threshold, poisson_sufficient,
    GeneratingFunction,
};
use looptree::multilink::unilink_branching_criterion;
use looptree::percolation::{pruning_probability, PruningParams, DEFAULT_QUADRATURE_NODES};
use looptree::potential::{
    branching_number_estimate, conductance_profile, pruned_branching_probe, BranchingSettings,
    Gauge,
};
use looptree::OffspringLaw;
use serde_json::{json, Value};

use crate::config::{check, required, Grid, Settings};
use crate::error::CliError;

pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    GenTree,
    Survival,
    Threshold,
    Dominate,
    PruneProb,
    GwtCheck,
    Conductance,
    Probe53,
    Unilink,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::GenTree => "gen-tree",
            CommandKind::Survival => "survival",
            CommandKind::Threshold => "threshold",
            CommandKind::Dominate => "dominate",
            CommandKind::PruneProb => "prune-prob",
            CommandKind::GwtCheck => "gwt-check",
            CommandKind::Conductance => "conductance",
            CommandKind::Probe53 => "probe-53",
            CommandKind::Unilink => "unilink",
        }
    }

    /// Settings the command reads besides `seed`, `threads` and `out`.
    pub fn keys(self) -> &'static [&'static str] {
        match self {
            CommandKind::GenTree => &["tree", "depth"],
            CommandKind::Survival => &[
                "model",
                "tree",
                "betas",
                "u",
                "depth",
                "replicas",
                "quadrature_nodes",
                "quenched",
            ],
            CommandKind::Threshold => &[
                "model",
                "tree",
                "u",
                "depth",
                "replicas",
                "quadrature_nodes",
                "quenched",
                "target",
                "tolerance",
                "z",
            ],
            CommandKind::Dominate => &[
                "tree",
                "betas",
                "u",
                "depth",
                "replicas",
                "quadrature_nodes",
                "quenched",
                "z",
            ],
            CommandKind::PruneProb => &["d_max", "lambdas", "us", "quadrature_nodes"],
            CommandKind::GwtCheck => &["law", "betas", "eps"],
            CommandKind::Conductance => &["tree", "depth", "q", "q_tolerance"],
            CommandKind::Probe53 => &["tree", "lambda", "u", "depth", "components", "q_tolerance"],
            CommandKind::Unilink => &["law", "beta", "u", "depth", "replicas"],
        }
    }

    /// Fixed CSV header of the command's output.
    pub fn header(self) -> &'static str {
        match self {
            CommandKind::GenTree => "id,parent_id,depth",
            CommandKind::Survival => "model,beta,u,D,N,estimate,stderr",
            CommandKind::Threshold => "model,u,D,target,beta_hat,ci_lo,ci_hi,seed",
            CommandKind::Dominate => "beta,u,D,N,p_loop,p_delay_link,p_link,z_loop_delay,z_delay_link,violation",
            CommandKind::PruneProb => "d,d_star,lambda,u,r",
            CommandKind::GwtCheck => "quantity,x,value,verdict",
            CommandKind::Conductance => "depth,q,conductance",
            CommandKind::Probe53 => "tree,lambda,u,D,components,attempts,br_before,br_after_mean,stderr",
            CommandKind::Unilink => {
                "law,beta,u,D,N,mean_c1,stderr,supercritical,mean_loop_length,loop_length_stderr,truncation_hits"
            }
        }
    }
}

/// What a command produced.
pub struct Output {
    pub csv: String,
    pub summary: Value,
}

impl Output {
    fn new(kind: CommandKind) -> Self {
        Self {
            csv: format!("{}\n", kind.header()),
            summary: json!({}),
        }
    }

    fn row(&mut self, fields: &[String]) {
        self.csv.push_str(&fields.join(","));
        self.csv.push('\n');
    }
}

/// Rejects any setting the command does not read.
pub fn check_keys(kind: CommandKind, s: &Settings) -> Result<(), CliError> {
    for key in s.present() {
        let common = matches!(key, "seed" | "threads" | "out");
        if !common && !kind.keys().contains(&key) {
            return Err(CliError::Config(format!(
                "`{key}` is not used by `{}`",
                kind.name()
            )));
        }
    }
    Ok(())
}

/// Fills every unset setting the command reads and that has a default, so
/// the run record shows exactly what was used.
pub fn with_defaults(kind: CommandKind, s: &Settings) -> Settings {
    let mut r = s.clone();
    let uses = |key: &str| kind.keys().contains(&key);
    let threshold = ThresholdSettings::default();
    r.seed.get_or_insert(DEFAULT_SEED);
    if uses("u") {
        r.u.get_or_insert(1.0);
    }
    if uses("quadrature_nodes") {
        r.quadrature_nodes.get_or_insert(DEFAULT_QUADRATURE_NODES);
    }
    if uses("quenched") {
        r.quenched.get_or_insert(false);
    }
    if uses("q_tolerance") {
        r.q_tolerance
            .get_or_insert(BranchingSettings::default().q_tolerance);
    }
    match kind {
        CommandKind::Threshold => {
            r.target.get_or_insert(threshold.target);
            r.tolerance.get_or_insert(threshold.tolerance);
            r.z.get_or_insert(threshold.z);
        }
        CommandKind::Dominate => {
            r.z.get_or_insert(3.0);
        }
        CommandKind::PruneProb => {
            r.d_max.get_or_insert(8);
            r.lambdas.get_or_insert(Grid(vec![0.2, 0.5, 1.0, 2.0, 5.0]));
            r.us.get_or_insert(Grid(vec![0.0, 0.5, 1.0]));
        }
        CommandKind::GwtCheck => {
            r.betas
                .get_or_insert_with(|| Grid((1..=20).map(|i| 0.1 * i as f64).collect()));
            r.eps.get_or_insert(Grid(vec![1e-2, 1e-3, 1e-4]));
        }
        _ => {}
    }
    r
}

pub fn run(kind: CommandKind, s: &Settings) -> Result<Output, CliError> {
    check_keys(kind, s)?;
    let s = &with_defaults(kind, s);
    match kind {
        CommandKind::GenTree => gen_tree(s),
        CommandKind::Survival => survival(s),
        CommandKind::Threshold => threshold(s),
        CommandKind::Dominate => dominate(s),
        CommandKind::PruneProb => prune_prob(s),
        CommandKind::GwtCheck => gwt_check(s),
        CommandKind::Conductance => conductance(s),
        CommandKind::Probe53 => probe(s),
        CommandKind::Unilink => unilink(s),
    }
}

fn seed(s: &Settings) -> u64 {
    s.seed.unwrap_or(DEFAULT_SEED)
}

fn tree_source(s: &Settings) -> Result<TreeSource, CliError> {
    required(&s.tree, "tree")?
        .parse::<TreeSource>()
        .map_err(|e| CliError::Config(format!("`tree`: {e}")))
}

fn law(s: &Settings) -> Result<OffspringLaw, CliError> {
    required(&s.law, "law")?
        .parse::<OffspringLaw>()
        .map_err(|e| CliError::Config(format!("`law`: {e}")))
}

fn model(s: &Settings) -> Result<Model, CliError> {
    required(&s.model, "model")?
        .parse::<Model>()
        .map_err(|e| CliError::Config(format!("`model`: {e}")))
}

fn unit_interval(value: f64, key: &str) -> Result<f64, CliError> {
    check(
        (0.0..=1.0).contains(&value),
        key,
        format!("must lie in [0, 1], got {value}"),
    )?;
    Ok(value)
}

fn positive_rates(values: &[f64], key: &str) -> Result<(), CliError> {
    check(!values.is_empty(), key, "empty list")?;
    for &b in values {
        check(
            b.is_finite() && b > 0.0,
            key,
            format!("values must be finite and > 0, got {b}"),
        )?;
    }
    Ok(())
}

fn sorted_rates(s: &Settings) -> Result<Vec<f64>, CliError> {
    let betas = required(&s.betas, "betas")?.0;
    positive_rates(&betas, "betas")?;
    check(
        betas.windows(2).all(|w| w[0] <= w[1]),
        "betas",
        "must be sorted ascending",
    )?;
    Ok(betas)
}

fn replicas(s: &Settings) -> Result<usize, CliError> {
    let n = required(&s.replicas, "replicas")?;
    check(n >= 2, "replicas", format!("need at least 2, got {n}"))?;
    Ok(n)
}

fn depth(s: &Settings) -> Result<usize, CliError> {
    let d = required(&s.depth, "depth")?;
    check(d >= 1, "depth", "must be at least 1")?;
    Ok(d)
}

/// The tree source for Monte Carlo runs; with `quenched` a Galton-Watson
/// law is replaced by one tree drawn from the seed.
fn experiment(s: &Settings) -> Result<Experiment, CliError> {
    let depth = depth(s)?;
    let mut source = tree_source(s)?;
    if s.quenched.unwrap_or(false) && matches!(source, TreeSource::GaltonWatson(_)) {
        source = TreeSource::fixed(source.materialize(depth, seed(s))?);
    }
    let u = unit_interval(s.u.unwrap_or(1.0), "u")?;
    let mut exp = Experiment::new(source, u, depth, replicas(s)?, seed(s));
    exp.quadrature_nodes = s.quadrature_nodes.unwrap_or(DEFAULT_QUADRATURE_NODES);
    check(
        exp.quadrature_nodes >= 64,
        "quadrature_nodes",
        "must be at least 64",
    )?;
    Ok(exp)
}

fn gen_tree(s: &Settings) -> Result<Output, CliError> {
    let source = tree_source(s)?;
    let tree = source.materialize(required(&s.depth, "depth")?, seed(s))?;
    Ok(Output {
        csv: tree.to_csv(),
        summary: json!({ "vertices": tree.len(), "max_depth": tree.max_depth(), "level_sizes": tree.level_sizes() }),
    })
}

fn survival(s: &Settings) -> Result<Output, CliError> {
    let model = model(s)?;
    let betas = sorted_rates(s)?;
    let exp = experiment(s)?;
    let curve = survival_curve(model, &exp, &betas)?;
    let mut out = Output::new(CommandKind::Survival);
    for ((beta, est), se) in curve.betas.iter().zip(&curve.estimates).zip(&curve.stderrs) {
        out.row(&[
            model.to_string(),
            beta.to_string(),
            exp.u.to_string(),
            exp.depth.to_string(),
            exp.replicas.to_string(),
            est.to_string(),
            se.to_string(),
        ]);
    }
    out.summary = json!({ "tree": curve.tree });
    Ok(out)
}

fn threshold(s: &Settings) -> Result<Output, CliError> {
    let model = model(s)?;
    let exp = experiment(s)?;
    let defaults = ThresholdSettings::default();
    let settings = ThresholdSettings {
        target: s.target.unwrap_or(defaults.target),
        tolerance: s.tolerance.unwrap_or(defaults.tolerance),
        z: s.z.unwrap_or(defaults.z),
        ..defaults
    };
    check(
        settings.target > 0.0 && settings.target < 1.0,
        "target",
        "must lie in (0, 1)",
    )?;
    check(settings.tolerance > 0.0, "tolerance", "must be positive")?;
    check(settings.z > 0.0, "z", "must be positive")?;
    let est = threshold_bisection(model, &exp, settings)?;
    let mut out = Output::new(CommandKind::Threshold);
    out.row(&[
        model.to_string(),
        exp.u.to_string(),
        exp.depth.to_string(),
        settings.target.to_string(),
        est.beta_hat.to_string(),
        est.ci.0.to_string(),
        est.ci.1.to_string(),
        exp.seed.to_string(),
    ]);
    out.summary = json!({
        "tree": exp.source.to_string(),
        "replicas": exp.replicas,
        "scan": est.scan.iter().map(|(b, p)| json!([b, p])).collect::<Vec<_>>(),
    });
    Ok(out)
}

fn dominate(s: &Settings) -> Result<Output, CliError> {
    let betas = sorted_rates(s)?;
    let exp = experiment(s)?;
    let z = s.z.unwrap_or(3.0);
    check(z > 0.0, "z", "must be positive")?;
    let rows = domination_report(&exp, &betas, z)?;
    let mut out = Output::new(CommandKind::Dominate);
    for r in &rows {
        out.row(&[
            r.beta.to_string(),
            exp.u.to_string(),
            exp.depth.to_string(),
            exp.replicas.to_string(),
            r.p_loop.to_string(),
            r.p_delay.to_string(),
            r.p_link.to_string(),
            r.z_loop_delay.to_string(),
            r.z_delay_link.to_string(),
            r.violation.to_string(),
        ]);
    }
    out.summary = json!({ "tree": exp.source.to_string(), "violations": rows.iter().filter(|r| r.violation).count() });
    Ok(out)
}

#[allow(clippy::needless_range_loop)]
fn prune_prob(s: &Settings) -> Result<Output, CliError> {
    let d_max = s.d_max.unwrap_or(8);
    check(d_max >= 2, "d_max", "must be at least 2")?;
    let lambdas = s
        .lambdas
        .clone()
        .map_or(vec![0.2, 0.5, 1.0, 2.0, 5.0], |g| g.0);
    positive_rates(&lambdas, "lambdas")?;
    let us = s.us.clone().map_or(vec![0.0, 0.5, 1.0], |g| g.0);
    check(!us.is_empty(), "us", "empty list")?;
    for &u in &us {
        unit_interval(u, "us")?;
    }
    let nodes = s.quadrature_nodes.unwrap_or(DEFAULT_QUADRATURE_NODES);
    let mut out = Output::new(CommandKind::PruneProb);
    let mut monotone = true;
    for &lambda in &lambdas {
        for &u in &us {
            let params = PruningParams::with_nodes(lambda, u, nodes)?;
            let mut table = vec![vec![0.0; d_max + 1]; d_max + 1];
            for d in 2..=d_max {
                for d_star in 1..=d_max {
                    let r = pruning_probability(d, Some(d_star), &params)?;
                    table[d][d_star] = r;
                    out.row(&[
                        d.to_string(),
                        d_star.to_string(),
                        lambda.to_string(),
                        u.to_string(),
                        r.to_string(),
                    ]);
                }
            }
            for d in 2..=d_max {
                for d_star in 1..=d_max {
                    let r = table[d][d_star];
                    monotone &= (d == 2 || r <= table[d - 1][d_star] + 1e-15)
                        && (d_star == 1 || r <= table[d][d_star - 1] + 1e-15);
                }
            }
        }
    }
    out.summary = json!({ "non_increasing_in_d_and_d_star": monotone, "quadrature_nodes": nodes });
    Ok(out)
}

fn gwt_check(s: &Settings) -> Result<Output, CliError> {
    let law = law(s)?;
    let f = GeneratingFunction::new(&law)?;
    let betas = s
        .betas
        .clone()
        .map_or_else(|| (1..=20).map(|i| 0.1 * i as f64).collect(), |g| g.0);
    positive_rates(&betas, "betas")?;
    let eps = s.eps.clone().map_or(vec![1e-2, 1e-3, 1e-4], |g| g.0);
    for &e in &eps {
        check(
            e > 0.0 && e < 1.0,
            "eps",
            format!("values must lie in (0, 1), got {e}"),
        )?;
    }
    let mut out = Output::new(CommandKind::GwtCheck);
    let mean = law.mean();
    let threshold = link_threshold(mean)?;
    out.row(&[
        "link_threshold".into(),
        String::new(),
        threshold.to_string(),
        String::new(),
    ]);
    for &beta in &betas {
        out.row(&[
            "h".into(),
            beta.to_string(),
            h_of_beta(beta)?.to_string(),
            String::new(),
        ]);
    }
    for &beta in &betas {
        let y = expected_y(beta, &f)?;
        out.row(&[
            "expected_y".into(),
            beta.to_string(),
            y.to_string(),
            (y > 1.0).to_string(),
        ]);
    }
    if let OffspringLaw::Poisson(lambda) = law {
        for &beta in &betas {
            let value = beta * (-beta).exp() * lambda;
            out.row(&[
                "poisson_sufficient".into(),
                beta.to_string(),
                value.to_string(),
                poisson_sufficient(beta, lambda).to_string(),
            ]);
        }
    }
    for c in heavy_tail_condition(&f, &eps)? {
        out.row(&[
            "heavy_tail".into(),
            c.epsilon.to_string(),
            c.lhs.to_string(),
            c.holds.to_string(),
        ]);
    }
    out.summary =
        json!({ "law": law.to_string(), "mean": mean, "evaluation": format!("{:?}", f.mode()) });
    Ok(out)
}

fn conductance(s: &Settings) -> Result<Output, CliError> {
    let depth = depth(s)?;
    let tree = tree_source(s)?.materialize(depth, seed(s))?;
    let qs = required(&s.q, "q")?.0;
    check(!qs.is_empty(), "q", "empty list")?;
    for &q in &qs {
        check(
            q > 0.0 && q <= 1.0,
            "q",
            format!("values must lie in (0, 1], got {q}"),
        )?;
    }
    let depths: Vec<usize> = (1..=depth).collect();
    let mut out = Output::new(CommandKind::Conductance);
    for &q in &qs {
        let report = conductance_profile(&tree, &Gauge::exponential(&tree, q)?, &depths);
        for (k, c) in report.depths.iter().zip(&report.conductance) {
            out.row(&[k.to_string(), q.to_string(), c.to_string()]);
        }
    }
    let settings = BranchingSettings {
        q_tolerance: s
            .q_tolerance
            .unwrap_or(BranchingSettings::default().q_tolerance),
        ..BranchingSettings::default()
    };
    check(
        settings.q_tolerance > 0.0,
        "q_tolerance",
        "must be positive",
    )?;
    let branching = match branching_number_estimate(&tree, depth, settings) {
        Ok(b) => {
            json!({ "branching_number": b.branching_number, "q_hat": b.q_hat, "window": [b.window.0, b.window.1],
                         "slope_at_boundary": b.slope_at_boundary })
        }
        Err(e) => json!({ "error": e.to_string() }),
    };
    out.summary =
        json!({ "vertices": tree.len(), "max_depth": tree.max_depth(), "branching": branching });
    Ok(out)
}

fn probe(s: &Settings) -> Result<Output, CliError> {
    let depth = depth(s)?;
    let source = tree_source(s)?;
    let tree = source.materialize(depth, seed(s))?;
    let lambda = required(&s.lambda, "lambda")?;
    check(
        lambda.is_finite() && lambda > 0.0,
        "lambda",
        "must be finite and > 0",
    )?;
    let u = unit_interval(s.u.unwrap_or(1.0), "u")?;
    let components = required(&s.components, "components")?;
    let settings = BranchingSettings {
        q_tolerance: s
            .q_tolerance
            .unwrap_or(BranchingSettings::default().q_tolerance),
        ..BranchingSettings::default()
    };
    let result = pruned_branching_probe(&tree, lambda, u, depth, components, seed(s), settings)?;
    let mut out = Output::new(CommandKind::Probe53);
    out.row(&[
        source.to_string(),
        lambda.to_string(),
        u.to_string(),
        depth.to_string(),
        components.to_string(),
        result.attempts.to_string(),
        result.br_before.to_string(),
        result.br_after_mean.to_string(),
        result.stderr.to_string(),
    ]);
    out.summary = json!({ "br_after": result.br_after, "gap_in_stderrs": (result.br_before - result.br_after_mean) / result.stderr });
    Ok(out)
}

fn unilink(s: &Settings) -> Result<Output, CliError> {
    let law = law(s)?;
    let beta = required(&s.beta, "beta")?;
    check(
        beta.is_finite() && beta > 0.0,
        "beta",
        "must be finite and > 0",
    )?;
    let u = unit_interval(s.u.unwrap_or(1.0), "u")?;
    let depth = depth(s)?;
    let n = replicas(s)?;
    let r = unilink_branching_criterion(&law, beta, u, depth, n, seed(s))?;
    let mut out = Output::new(CommandKind::Unilink);
    out.row(&[
        law.to_string(),
        beta.to_string(),
        u.to_string(),
        depth.to_string(),
        n.to_string(),
        r.mean_c1.to_string(),
        r.stderr.to_string(),
        r.supercritical.to_string(),
        r.mean_loop_length.to_string(),
        r.loop_length_stderr.to_string(),
        r.truncation_hits.to_string(),
    ]);
    let rate = match law {
        OffspringLaw::Poisson(lambda) => json!(beta * (-beta).exp() * lambda),
        _ => Value::Null,
    };
    out.summary = json!({ "poisson_unilink_rate": rate });
    Ok(out)
}
