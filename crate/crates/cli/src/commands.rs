use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use bsnf_core::bsnf::Witness;
use bsnf_core::hanf::{hnf_to_positive, HanfBudget, HanfContext};
use bsnf_core::lowerbound::{
    chain_family, coreach_formula, forest_signature, iso_formula, lemma8_scenario, phi_h, tree_encoding, tree_family,
};
use bsnf_core::oracle::{check_shard, Comparison, PoolMode, PoolSpec, ShardResult};
use bsnf_core::parse::parse_formula;
use bsnf_core::rtype::TypeBudget;
use bsnf_core::transform::{fo_to_bsnf_in, positive_to_bsnf, GammaStrategy, PipelineOptions, TypeOptions};
use bsnf_core::{Error, Formula, Signature};
use clap::{Args, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use crate::config::{Common, Format, Settings};
use crate::error::CliError;

type Out<'a> = &'a mut dyn Write;

/// Prints a record as one JSON line, or as `# key: value` lines after
/// `head` in text mode.
fn emit<T: Serialize>(s: &Settings, out: Out, head: Option<&str>, record: &T) -> Result<(), CliError> {
    match s.format {
        Format::Json => {
            let line = serde_json::to_string(record).map_err(|e| CliError::Usage(e.to_string()))?;
            writeln!(out, "{line}")?;
        }
        Format::Text => {
            if let Some(h) = head {
                writeln!(out, "{h}")?;
            }
            if let Value::Object(m) = serde_json::to_value(record).map_err(|e| CliError::Usage(e.to_string()))? {
                for (k, v) in m {
                    if k == "command" || (head.is_some() && k == "formula") {
                        continue;
                    }
                    match v {
                        Value::String(t) => writeln!(out, "# {k}: {t}")?,
                        Value::Null => {}
                        other => writeln!(out, "# {k}: {other}")?,
                    }
                }
            }
        }
    }
    Ok(())
}

fn read_formula(path: &Path) -> Result<Formula, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    parse_formula(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn signature_for(s: &Settings, formulas: &[&Formula]) -> Result<Signature, CliError> {
    if let Some(sig) = &s.signature {
        return Ok(sig.clone());
    }
    let mut sig = Signature::default();
    for f in formulas {
        sig = sig.merge(&f.inferred_signature())?;
    }
    Ok(sig)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Stage {
    Hnf,
    #[value(name = "hnf+")]
    PositiveHnf,
    Bsnf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Gamma {
    Compact,
    Registry,
}

#[derive(Args, Debug)]
pub struct NormalizeArgs {
    /// Formula text; with --input the formula is read from a file instead.
    pub formula: Option<String>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub stage: Option<Stage>,
    /// How component neighbourhoods are described in type formulas.
    #[arg(long, value_enum)]
    pub gamma: Option<Gamma>,
    /// Fix the Hanf radius instead of searching for the least consistent one.
    #[arg(long)]
    pub radius: Option<usize>,
}

#[derive(Serialize)]
struct Sizes {
    input: usize,
    hnf: usize,
    #[serde(rename = "hnf+", skip_serializing_if = "Option::is_none")]
    positive: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bsnf: Option<usize>,
}

#[derive(Serialize)]
struct NormalizeRecord {
    command: &'static str,
    stage: &'static str,
    formula: String,
    free: Vec<String>,
    signature: String,
    degree: usize,
    sizes: Sizes,
    radius: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    prefix: Option<usize>,
    hanf_radius: usize,
    threshold: usize,
    witness_structures: usize,
    witness_rows: usize,
    tuple_types: usize,
    sphere_types: usize,
    leaves: usize,
}

pub fn normalize(c: &Common, a: &NormalizeArgs, out: Out) -> Result<u8, CliError> {
    let s = Settings::resolve(c, &["stage", "gamma", "radius", "input"])?;
    let text = match (&a.formula, &a.input, s.extra.get("input")) {
        (Some(t), None, _) => t.clone(),
        (None, Some(p), _) => std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?,
        (None, None, Some(p)) => std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{p}: {e}")))?,
        (Some(_), Some(_), _) => return Err(CliError::Usage("give the formula either inline or with --input".into())),
        (None, None, None) => {
            let mut t = String::new();
            std::io::Read::read_to_string(&mut std::io::stdin(), &mut t)?;
            t
        }
    };
    let phi = parse_formula(&text)?;
    let stage = s.pick(a.stage, "stage")?.unwrap_or(Stage::Bsnf);
    let strategy = match s.pick(a.gamma, "gamma")?.unwrap_or(Gamma::Compact) {
        Gamma::Compact => GammaStrategy::Compact,
        Gamma::Registry => GammaStrategy::Registry,
    };
    let d = s
        .degree
        .ok_or_else(|| CliError::Usage("normalize needs a degree bound (local normal forms do not exist for unbounded degree)".into()))?;
    let sig = signature_for(&s, &[&phi])?;
    let types = TypeBudget {
        max_elements: s.type_size,
        ..TypeBudget::default()
    };
    let budget = HanfBudget {
        types,
        pool_size: s.pool_size.unwrap_or(HanfBudget::default().pool_size),
        radius: s.pick_num(a.radius, "radius")?,
        max_evaluations: s.pool_ceiling,
        ..HanfBudget::default()
    };
    let ctx = HanfContext::new(&sig, d, &budget)?;
    let opts = PipelineOptions {
        hanf: budget,
        types: TypeOptions { strategy, budget: types },
    };
    let (hnf, report) = ctx.fo_to_hnf(&phi)?;
    let hnf_f = hnf.to_formula();
    let mut sizes = Sizes {
        input: phi.size_in(&sig),
        hnf: hnf_f.size_in(&sig),
        positive: None,
        bsnf: None,
    };
    let (emitted, radius, prefix, leaves, stage_name) = match stage {
        Stage::Hnf => (hnf_f, hnf.radius, None, hnf.leaf_count(), "hnf"),
        Stage::PositiveHnf => {
            let pos = hnf_to_positive(&hnf, d, &sig, &types)?;
            let f = pos.to_formula();
            sizes.positive = Some(f.size_in(&sig));
            (f, pos.radius, None, pos.leaf_count(), "hnf+")
        }
        Stage::Bsnf => {
            let pos = hnf_to_positive(&hnf, d, &sig, &types)?;
            sizes.positive = Some(pos.to_formula().size_in(&sig));
            let b = positive_to_bsnf(&pos, d, &sig, &opts.types)?;
            let f = b.to_formula();
            sizes.bsnf = Some(f.size_in(&sig));
            (f, b.radius, Some(b.prefix.len()), pos.leaf_count(), "bsnf")
        }
    };
    let formula = emitted.to_string();
    let record = NormalizeRecord {
        command: "normalize",
        stage: stage_name,
        formula: formula.clone(),
        free: phi.free_vars().iter().map(|v| v.to_string()).collect(),
        signature: sig.to_string(),
        degree: d,
        sizes,
        radius,
        prefix,
        hanf_radius: report.radius,
        threshold: report.threshold,
        witness_structures: report.pool_structures,
        witness_rows: report.rows,
        tuple_types: report.tuple_types,
        sphere_types: report.sphere_types,
        leaves,
    };
    match &s.out {
        Some(p) => {
            std::fs::write(p, format!("{formula}\n"))?;
            emit(&s, out, None, &record)?;
        }
        None => emit(&s, out, Some(&formula), &record)?,
    }
    Ok(0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PoolKind {
    /// Every labelled structure.
    Exhaustive,
    /// One structure per isomorphism class.
    Iso,
    /// Seeded random sample.
    Random,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    pub phi: PathBuf,
    pub psi: PathBuf,
    #[arg(long, value_enum)]
    pub pool: Option<PoolKind>,
    /// Sample count for the random pool.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Smallest structure in the pool.
    #[arg(long = "min-size")]
    pub min_size: Option<usize>,
}

#[derive(Serialize)]
struct CheckRecord {
    command: &'static str,
    verdict: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    structures: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    evaluations: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    assignment: Option<serde_json::Map<String, Value>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    structure: Option<String>,
}

fn run_shards(cmp: &Comparison, spec: &PoolSpec, jobs: usize) -> Result<ShardResult, Error> {
    if jobs == 1 {
        return check_shard(cmp, spec, 0, 1);
    }
    let results: Vec<Result<ShardResult, Error>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..jobs).map(|i| scope.spawn(move || check_shard(cmp, spec, i, jobs))).collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut merged = ShardResult {
        first: None,
        structures: 0,
        evaluations: 0,
    };
    for r in results {
        let r = r?;
        merged.structures = merged.structures.max(r.structures);
        merged.evaluations = merged.evaluations.max(r.evaluations);
        if let Some((i, w)) = r.first {
            if merged.first.as_ref().is_none_or(|(j, _)| i < *j) {
                merged.first = Some((i, w));
            }
        }
    }
    Ok(merged)
}

pub fn check(c: &Common, a: &CheckArgs, out: Out) -> Result<u8, CliError> {
    let s = Settings::resolve(c, &["pool", "samples", "min-size"])?;
    let phi = read_formula(&a.phi)?;
    let psi = read_formula(&a.psi)?;
    let sig = signature_for(&s, &[&phi, &psi])?;
    let cmp = Comparison::new(&phi, &psi)?;
    let mut spec = PoolSpec::new(Arc::new(sig), s.degree, s.pool_size.unwrap_or(4))
        .sizes(s.pick_num(a.min_size, "min-size")?.unwrap_or(1), s.pool_size.unwrap_or(4))
        .with_max_evaluations(s.pool_ceiling);
    match s.pick(a.pool, "pool")?.unwrap_or(PoolKind::Exhaustive) {
        PoolKind::Exhaustive => spec.mode = PoolMode::Exhaustive,
        PoolKind::Iso => spec = spec.iso_classes(),
        PoolKind::Random => {
            let seed = s.seed.ok_or_else(|| CliError::Usage("the random pool needs --seed".into()))?;
            spec = spec.random(seed, s.pick_num(a.samples, "samples")?.unwrap_or(1000));
        }
    }
    let r = run_shards(&cmp, &spec, s.jobs)?;
    match r.first {
        None => {
            let record = CheckRecord {
                command: "check",
                verdict: "agree",
                structures: Some(r.structures),
                evaluations: Some(r.evaluations),
                assignment: None,
                structure: None,
            };
            emit(&s, out, None, &record)?;
            Ok(0)
        }
        Some((_, Witness { structure, assignment })) => {
            let text = structure.to_string();
            if let Some(p) = &s.out {
                std::fs::write(p, &text)?;
            }
            let record = CheckRecord {
                command: "check",
                verdict: "counterexample",
                structures: None,
                evaluations: None,
                assignment: Some(assignment.iter().map(|(v, e)| (v.to_string(), Value::from(*e))).collect()),
                structure: Some(text.clone()),
            };
            match s.format {
                Format::Json => emit(&s, out, None, &record)?,
                Format::Text => {
                    writeln!(out, "# verdict: counterexample")?;
                    let asg: Vec<String> = assignment.iter().map(|(v, e)| format!("{v}={e}")).collect();
                    writeln!(out, "# assignment: {}", asg.join(" "))?;
                    write!(out, "{text}")?;
                }
            }
            Ok(1)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FamilyKind {
    TreeEncoding,
    ChainFamily,
    TreeFamily,
    PhiH,
    Iso,
    Coreach,
    Lemma8,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(value_enum)]
    pub family: FamilyKind,
    /// Index of the tree encoding.
    #[arg(long)]
    pub index: Option<u64>,
    /// Height of chains and trees.
    #[arg(long)]
    pub height: Option<usize>,
    /// Degree parameter of trees and formulas.
    #[arg(long)]
    pub d: Option<usize>,
    /// Parameter h of phi_h and iso.
    #[arg(long)]
    pub h: Option<u32>,
    /// Distance bound of coreach.
    #[arg(long)]
    pub l: Option<usize>,
    /// How many chains the Lemma 8 scenario duplicates.
    #[arg(long)]
    pub members: Option<usize>,
    /// Refuse families with more members (or encodings with more nodes).
    #[arg(long = "max-members")]
    pub max_members: Option<usize>,
}

#[derive(Serialize)]
struct FileRecord {
    command: &'static str,
    family: &'static str,
    file: String,
    kind: &'static str,
    size: usize,
}

fn need<T>(v: Option<T>, name: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Usage(format!("this family needs --{name}")))
}

pub fn generate(c: &Common, a: &GenerateArgs, out: Out) -> Result<u8, CliError> {
    let s = Settings::resolve(c, &["index", "height", "d", "h", "l", "members", "max-members"])?;
    let index = s.pick_num(a.index, "index")?;
    let height = s.pick_num(a.height, "height")?;
    let d = s.pick_num(a.d, "d")?;
    let h = s.pick_num(a.h, "h")?;
    let l = s.pick_num(a.l, "l")?;
    let members = s.pick_num(a.members, "members")?;
    let max = s.pick_num(a.max_members, "max-members")?.unwrap_or(4096);
    let dir = s.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let name = a.family.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();
    let mut files: Vec<(String, String, &'static str, usize)> = Vec::new();
    let structure = |files: &mut Vec<_>, file: String, a: &bsnf_core::Structure| {
        files.push((file, a.to_string(), "structure", a.size()));
    };
    match a.family {
        FamilyKind::TreeEncoding => {
            let i = need(index, "index")?;
            let t = tree_encoding(i, max)?;
            structure(&mut files, format!("{name}-i{i}.txt"), &t.structure);
        }
        FamilyKind::ChainFamily | FamilyKind::TreeFamily => {
            let ht = need(height, "height")?;
            let fam = if a.family == FamilyKind::ChainFamily {
                chain_family(ht, max)?
            } else {
                tree_family(need(d, "d")?, ht, max)?
            };
            let prefix = match a.family {
                FamilyKind::ChainFamily => format!("{name}-h{ht}"),
                _ => format!("{name}-d{}-h{ht}", d.unwrap_or(2)),
            };
            let width = fam.len().saturating_sub(1).to_string().len().max(3);
            for (k, t) in fam.iter().enumerate() {
                structure(&mut files, format!("{prefix}-{k:0width$}.txt"), &t.structure);
            }
        }
        FamilyKind::PhiH | FamilyKind::Iso | FamilyKind::Coreach => {
            let dd = need(d, "d")?;
            if dd < 2 {
                return Err(CliError::Usage("--d must be at least 2".into()));
            }
            let (f, file) = match a.family {
                FamilyKind::PhiH => {
                    let hh = need(h, "h")?;
                    (phi_h(dd, hh), format!("{name}-d{dd}-h{hh}.fo"))
                }
                FamilyKind::Iso => {
                    let hh = need(h, "h")?;
                    (iso_formula(dd, hh), format!("{name}-d{dd}-h{hh}.fo"))
                }
                _ => {
                    let ll = need(l, "l")?;
                    (coreach_formula(dd, ll), format!("{name}-d{dd}-l{ll}.fo"))
                }
            };
            let size = f.size_in(&forest_signature(dd));
            files.push((file, format!("{f}\n"), "formula", size));
        }
        FamilyKind::Lemma8 => {
            let ht = need(height, "height")?;
            let k = members.unwrap_or(3);
            let fam = chain_family(ht, max)?;
            if k == 0 || k > fam.len() {
                return Err(CliError::Usage(format!("--members must be between 1 and {}", fam.len())));
            }
            let parts: Vec<_> = fam.into_iter().take(k).map(|t| t.structure).collect();
            let (full, reduced) = lemma8_scenario(&parts, None)?;
            structure(&mut files, format!("{name}-h{ht}-m{k}-full.txt"), &full);
            structure(&mut files, format!("{name}-h{ht}-m{k}-reduced.txt"), &reduced);
        }
    }
    std::fs::create_dir_all(&dir)?;
    for (file, body, kind, size) in files {
        std::fs::write(dir.join(&file), body)?;
        let record = FileRecord {
            command: "generate",
            family: match a.family {
                FamilyKind::TreeEncoding => "tree-encoding",
                FamilyKind::ChainFamily => "chain-family",
                FamilyKind::TreeFamily => "tree-family",
                FamilyKind::PhiH => "phi-h",
                FamilyKind::Iso => "iso",
                FamilyKind::Coreach => "coreach",
                FamilyKind::Lemma8 => "lemma8",
            },
            file: file.clone(),
            kind,
            size,
        };
        match s.format {
            Format::Json => emit(&s, out, None, &record)?,
            Format::Text => writeln!(out, "{file}\t{kind}\t{size}")?,
        }
    }
    Ok(0)
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[arg(long = "h-min", default_value_t = 1)]
    pub h_min: u32,
    #[arg(long = "h-max", default_value_t = 6)]
    pub h_max: u32,
    /// Degree parameter of the formulas and trees.
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    /// Also run the normal form pipeline on phi_h (witness pool from --pool-size, default 3).
    #[arg(long)]
    pub pipeline: bool,
}

#[derive(Serialize)]
struct StatsRow {
    h: u32,
    d: usize,
    phi_h_size: usize,
    iso_size: usize,
    coreach_size: usize,
    family_members: Option<usize>,
    family_status: String,
    bsnf_size: Option<usize>,
    bsnf_status: String,
}

fn status(e: &Error) -> String {
    match e {
        Error::Resource(_) | Error::Overflow(_) => "budget".into(),
        Error::Inconsistent(_) => "inconsistent".into(),
        _ => "error".into(),
    }
}

pub fn stats(c: &Common, a: &StatsArgs, out: Out) -> Result<u8, CliError> {
    let s = Settings::resolve(c, &[])?;
    if a.d < 2 || a.h_min > a.h_max {
        return Err(CliError::Usage("need d ≥ 2 and h-min ≤ h-max".into()));
    }
    if a.h_max > 16 {
        return Err(CliError::Core(Error::Resource(format!("h-max {} is beyond the size guard", a.h_max))));
    }
    let sig = forest_signature(a.d);
    let max = 4096;
    let degree = a.d;
    let ctx = if a.pipeline {
        let budget = HanfBudget {
            pool_size: s.pool_size.unwrap_or(3),
            max_evaluations: s.pool_ceiling,
            types: TypeBudget {
                max_elements: s.type_size,
                ..TypeBudget::default()
            },
            ..HanfBudget::default()
        };
        Some((HanfContext::new(&sig, degree, &budget)?, budget))
    } else {
        None
    };
    let mut rows = Vec::new();
    for h in a.h_min..=a.h_max {
        let phi = phi_h(a.d, h);
        let (family_members, family_status) = match tree_family(a.d, h as usize, max) {
            Ok(f) => (Some(f.len()), "ok".to_string()),
            Err(e) => (None, status(&e)),
        };
        let (bsnf_size, bsnf_status) = match &ctx {
            None => (None, "skipped".to_string()),
            Some((ctx, budget)) => {
                let opts = PipelineOptions {
                    hanf: *budget,
                    types: TypeOptions {
                        strategy: GammaStrategy::Compact,
                        budget: budget.types,
                    },
                };
                match fo_to_bsnf_in(ctx, &phi, &opts) {
                    Ok(p) => (Some(p.bsnf.to_formula().size_in(&sig)), "ok".to_string()),
                    Err(e) => (None, status(&e)),
                }
            }
        };
        rows.push(StatsRow {
            h,
            d: a.d,
            phi_h_size: phi.size_in(&sig),
            iso_size: iso_formula(a.d, h).size_in(&sig),
            coreach_size: coreach_formula(a.d, 1usize << h).size_in(&sig),
            family_members,
            family_status,
            bsnf_size,
            bsnf_status,
        });
    }
    match s.format {
        Format::Json => {
            for r in &rows {
                emit(&s, out, None, r)?;
            }
        }
        Format::Text => {
            writeln!(out, "h\td\tphi_h_size\tiso_size\tcoreach_size\tfamily_members\tfamily_status\tbsnf_size\tbsnf_status")?;
            let opt = |v: Option<usize>| v.map_or("-".to_string(), |x| x.to_string());
            for r in &rows {
                writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    r.h,
                    r.d,
                    r.phi_h_size,
                    r.iso_size,
                    r.coreach_size,
                    opt(r.family_members),
                    r.family_status,
                    opt(r.bsnf_size),
                    r.bsnf_status
                )?;
            }
        }
    }
    Ok(0)
}
