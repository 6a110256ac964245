//! Declarative scenario files and the runner behind the `chsim` binary.
//!
//! A scenario is a JSON object
//!
//! ```json
//! { "version": 1, "kind": "measurement", "id": "optional", "payload": { … } }
//! ```
//!
//! with one payload schema per kind: `measurement`, `joint-measurement`,
//! `noncontextuality`, `histories`, `valuation` and `framework-combine`.
//! Operators are written either as matrices (rows of entries, each entry a
//! real number or an `[re, im]` pair) or by name: `spin_half_sx`,
//! `spin_half_sy`, `spin_half_sz`, `identity:<n>`, `diag:[v0, v1, …]`.
//!
//! Every run produces a [`Report`]; nothing here panics on bad input.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::frameworks::{combine_frameworks, Combination, Framework};
use crate::histories::{
    conditional_probability, consistency_of, decoherence_matrix_with_limit, history_probabilities,
    HistoryFamily, TimedEvent, DEFAULT_MAX_HISTORIES,
};
use crate::linalg::{c, ComplexMatrix, StateVector, C64, DEFAULT_MAX_DIM};
use crate::measurement::{
    a_marginal, born_probabilities, build_joint_model_with, build_pointer_model_with,
    coarse_outcome_probability, counterfactual_pivot, evolve_property, noncontextuality_check,
    outcome_set_probability, verify_calibration, MeasurementModel, PointerOptions,
};
use crate::properties::{
    common_refinement, spectral_decompose, Decomposition, Observable, Projector,
};
use crate::random::{random_noncontextual_triple, random_state};
use crate::report::{canonical_json, exit, Report, Status};
use crate::tol;
use crate::valuation::{
    detect_shared_projectors, search_valuation, SearchOutcome, ValuationProblem,
};

pub const KINDS: [&str; 6] = [
    "measurement",
    "joint-measurement",
    "noncontextuality",
    "histories",
    "valuation",
    "framework-combine",
];

/// Flags shared by every subcommand.
#[derive(Clone, Debug)]
pub struct RunOptions {
    /// Pass/fail threshold for report checks. Type invariants keep the
    /// library tolerances.
    pub tolerance: f64,
    /// Overrides the seed of generated-corpus scenarios.
    pub seed: Option<u64>,
    pub max_dim: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            tolerance: tol::IDENTITY,
            seed: None,
            max_dim: DEFAULT_MAX_DIM,
        }
    }
}

// ---------------------------------------------------------------- schema

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum Amplitude {
    Real(f64),
    Complex([f64; 2]),
}

impl Amplitude {
    fn value(&self) -> C64 {
        match *self {
            Amplitude::Real(x) => c(x, 0.0),
            Amplitude::Complex([re, im]) => c(re, im),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum OperatorSpec {
    Named(String),
    Matrix(Vec<Vec<Amplitude>>),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProjectorSpec {
    /// Projector onto the ray of a (not necessarily normalized) ket.
    Ray(Vec<Amplitude>),
    /// Projector onto the span of mutually orthogonal kets, each
    /// normalized first.
    Span(Vec<Vec<Amplitude>>),
    Matrix(Vec<Vec<Amplitude>>),
    Identity(usize),
    /// `I − P`.
    Complement(Box<ProjectorSpec>),
}

/// Exactly one of `observable` (its spectral decomposition) or `projectors`.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecompositionSpec {
    pub observable: Option<OperatorSpec>,
    pub projectors: Option<Vec<ProjectorSpec>>,
    pub labels: Option<Vec<String>>,
}

/// Probability of a pointer set given either a coarse property (named by
/// the pointers whose measured projectors sum to it) or a prepared state.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoarseCheck {
    pub name: String,
    pub property: Option<Vec<String>>,
    pub prepared: Option<ProjectorSpec>,
    pub pointers: Vec<String>,
    pub expect: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementPayload {
    pub measured: DecompositionSpec,
    pub dim_m: usize,
    pub ready_rank: Option<usize>,
    pub prepared: ProjectorSpec,
    /// `"calibrated"` (default) or `"identity"`.
    pub dynamics: Option<String>,
    pub expect: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    pub coarse: Vec<CoarseCheck>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointPayload {
    pub a: OperatorSpec,
    pub b: OperatorSpec,
    pub dim_m: Option<usize>,
    pub prepared: ProjectorSpec,
    pub expect: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    pub coarse: Vec<CoarseCheck>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratedCorpus {
    pub cases: usize,
    pub min_dim: usize,
    pub max_dim: usize,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoncontextualityPayload {
    pub a: Option<OperatorSpec>,
    pub b: Option<OperatorSpec>,
    pub c: Option<OperatorSpec>,
    pub prepared: Option<ProjectorSpec>,
    /// Eigenvalue of A whose eigenprojector serves as the pivot.
    pub pivot_value: Option<f64>,
    pub dim_m: Option<usize>,
    pub generated: Option<GeneratedCorpus>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum AtFirstTime {
    /// `"measured"` or `"prepared"`.
    Named(String),
    Decomposition(DecompositionSpec),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementFamilySpec {
    pub measured: DecompositionSpec,
    pub dim_m: usize,
    pub ready_rank: Option<usize>,
    pub prepared: ProjectorSpec,
    pub at_t1: AtFirstTime,
}

/// Either `measurement` or `initial` + `event_sets` (+ optional `steps`).
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub measurement: Option<MeasurementFamilySpec>,
    pub initial: Option<ProjectorSpec>,
    pub steps: Option<Vec<OperatorSpec>>,
    pub event_sets: Option<Vec<DecompositionSpec>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSpec {
    pub time: usize,
    pub labels: Vec<String>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionalSpec {
    pub name: String,
    pub given: EventSpec,
    pub target: EventSpec,
    pub expect: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistoriesPayload {
    pub family: FamilySpec,
    /// Second family; the scenario is then about the combination.
    pub combine_with: Option<FamilySpec>,
    pub expect: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    pub conditionals: Vec<ConditionalSpec>,
    pub max_histories: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValuationPayload {
    pub contexts: Option<Vec<Vec<String>>>,
    pub decompositions: Option<Vec<DecompositionSpec>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreProbabilityForm {
    pub measured: DecompositionSpec,
    pub dim_m: usize,
    pub prepared: ProjectorSpec,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameworkPayload {
    pub first: Option<DecompositionSpec>,
    pub second: Option<DecompositionSpec>,
    pub names: Option<[String; 2]>,
    /// `{V̂, I − V̂}` for the evolved prepared state against the pointers.
    pub measurement: Option<PreProbabilityForm>,
}

#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum Payload {
    Measurement(MeasurementPayload),
    JointMeasurement(JointPayload),
    Noncontextuality(NoncontextualityPayload),
    Histories(HistoriesPayload),
    Valuation(ValuationPayload),
    FrameworkCombine(FrameworkPayload),
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub id: String,
    pub payload: Payload,
}

impl Scenario {
    pub fn kind(&self) -> &'static str {
        match self.payload {
            Payload::Measurement(_) => "measurement",
            Payload::JointMeasurement(_) => "joint-measurement",
            Payload::Noncontextuality(_) => "noncontextuality",
            Payload::Histories(_) => "histories",
            Payload::Valuation(_) => "valuation",
            Payload::FrameworkCombine(_) => "framework-combine",
        }
    }
}

/// Scenario id used when the file has none: the file stem.
pub fn default_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Reads and validates a scenario file. On failure returns the list of
/// problems found.
pub fn load_scenario(path: &Path) -> std::result::Result<Scenario, Vec<String>> {
    let text = fs::read_to_string(path)
        .map_err(|e| vec![format!("cannot read {}: {e}", path.display())])?;
    parse_scenario(&text, &default_id(path))
}

pub fn parse_scenario(text: &str, fallback_id: &str) -> std::result::Result<Scenario, Vec<String>> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| vec![format!("malformed JSON: {e}")])?;
    let Value::Object(map) = value else {
        return Err(vec!["scenario must be a JSON object".into()]);
    };
    let mut problems = Vec::new();
    for key in map.keys() {
        if !["version", "kind", "payload", "id", "description"].contains(&key.as_str()) {
            problems.push(format!("unknown field `{key}`"));
        }
    }
    for key in ["version", "kind", "payload"] {
        if !map.contains_key(key) {
            problems.push(format!("missing field `{key}`"));
        }
    }
    match map.get("version") {
        Some(v) if v.as_u64() == Some(1) => {}
        Some(v) => problems.push(format!("field `version`: expected 1, found {v}")),
        None => {}
    }
    let kind = match map.get("kind") {
        Some(Value::String(k)) if KINDS.contains(&k.as_str()) => Some(k.clone()),
        Some(k) => {
            problems.push(format!(
                "field `kind`: {k} is not one of {}",
                KINDS.join(", ")
            ));
            None
        }
        None => None,
    };
    let id = match map.get("id") {
        None => fallback_id.to_string(),
        Some(Value::String(s)) => s.clone(),
        Some(other) => {
            problems.push(format!("field `id`: expected a string, found {other}"));
            fallback_id.to_string()
        }
    };
    if let (Some(kind), Some(payload)) = (kind, map.get("payload")) {
        match parse_payload(&kind, payload.clone()) {
            Ok(payload) if problems.is_empty() => return Ok(Scenario { id, payload }),
            Ok(_) => {}
            Err(e) => problems.push(format!("field `payload`: {e}")),
        }
    }
    Err(problems)
}

fn parse_payload(kind: &str, v: Value) -> serde_json::Result<Payload> {
    Ok(match kind {
        "measurement" => Payload::Measurement(serde_json::from_value(v)?),
        "joint-measurement" => Payload::JointMeasurement(serde_json::from_value(v)?),
        "noncontextuality" => Payload::Noncontextuality(serde_json::from_value(v)?),
        "histories" => Payload::Histories(serde_json::from_value(v)?),
        "valuation" => Payload::Valuation(serde_json::from_value(v)?),
        "framework-combine" => Payload::FrameworkCombine(serde_json::from_value(v)?),
        _ => unreachable!("kind checked against KINDS"),
    })
}

// ---------------------------------------------------------------- resolution

fn check_dim(dim: usize, max_dim: usize) -> Result<()> {
    if dim > max_dim {
        return Err(Error::Capacity {
            what: "operator dimension",
            requested: dim,
            limit: max_dim,
        });
    }
    Ok(())
}

fn matrix_from(rows: &[Vec<Amplitude>], max_dim: usize) -> Result<ComplexMatrix> {
    check_dim(rows.len(), max_dim)?;
    let rows: Vec<Vec<C64>> = rows
        .iter()
        .map(|r| r.iter().map(Amplitude::value).collect())
        .collect();
    ComplexMatrix::from_rows(&rows)
}

fn ket_from(amps: &[Amplitude], max_dim: usize) -> Result<StateVector> {
    check_dim(amps.len(), max_dim)?;
    StateVector::new(amps.iter().map(Amplitude::value).collect())
}

pub fn resolve_operator(spec: &OperatorSpec, max_dim: usize) -> Result<ComplexMatrix> {
    match spec {
        OperatorSpec::Matrix(rows) => matrix_from(rows, max_dim),
        OperatorSpec::Named(name) => named_operator(name, max_dim),
    }
}

fn named_operator(name: &str, max_dim: usize) -> Result<ComplexMatrix> {
    let half = 0.5;
    match name {
        "spin_half_sx" => ComplexMatrix::from_real_rows(&[&[0.0, half], &[half, 0.0]]),
        "spin_half_sy" => ComplexMatrix::from_rows(&[
            vec![c(0.0, 0.0), c(0.0, -half)],
            vec![c(0.0, half), c(0.0, 0.0)],
        ]),
        "spin_half_sz" => Ok(ComplexMatrix::diagonal(&[half, -half])),
        _ => {
            if let Some(n) = name.strip_prefix("identity:") {
                let n: usize = n
                    .trim()
                    .parse()
                    .map_err(|_| Error::validation(format!("bad dimension in `{name}`")))?;
                check_dim(n, max_dim)?;
                Ok(ComplexMatrix::identity(n))
            } else if let Some(list) = name.strip_prefix("diag:") {
                let values: Vec<f64> = serde_json::from_str(list.trim())
                    .map_err(|_| Error::validation(format!("bad value list in `{name}`")))?;
                check_dim(values.len(), max_dim)?;
                if values.is_empty() {
                    return Err(Error::validation("`diag:` needs at least one value"));
                }
                Ok(ComplexMatrix::diagonal(&values))
            } else {
                Err(Error::validation(format!("unknown operator name `{name}`")))
            }
        }
    }
}

pub fn resolve_observable(spec: &OperatorSpec, max_dim: usize) -> Result<Observable> {
    spectral_decompose(&resolve_operator(spec, max_dim)?)
}

pub fn resolve_projector(spec: &ProjectorSpec, max_dim: usize) -> Result<Projector> {
    match spec {
        ProjectorSpec::Ray(amps) => Projector::ray(&ket_from(amps, max_dim)?),
        ProjectorSpec::Span(kets) => {
            let kets = kets
                .iter()
                .map(|k| ket_from(k, max_dim)?.normalized())
                .collect::<Result<Vec<_>>>()?;
            let Some(dim) = kets.first().map(StateVector::dim) else {
                return Err(Error::validation("`span` needs at least one ket"));
            };
            Projector::span(dim, &kets)
        }
        ProjectorSpec::Matrix(rows) => Projector::new(matrix_from(rows, max_dim)?),
        ProjectorSpec::Identity(n) => {
            check_dim(*n, max_dim)?;
            Ok(Projector::identity(*n))
        }
        ProjectorSpec::Complement(inner) => Ok(resolve_projector(inner, max_dim)?.complement()),
    }
}

pub fn resolve_decomposition(spec: &DecompositionSpec, max_dim: usize) -> Result<Decomposition> {
    let d = match (&spec.observable, &spec.projectors) {
        (Some(op), None) => resolve_observable(op, max_dim)?.decomposition().clone(),
        (None, Some(ps)) => {
            let ps = ps
                .iter()
                .map(|p| resolve_projector(p, max_dim))
                .collect::<Result<Vec<_>>>()?;
            Decomposition::new(ps, None)?
        }
        _ => {
            return Err(Error::validation(
                "a decomposition needs exactly one of `observable` or `projectors`",
            ))
        }
    };
    match &spec.labels {
        Some(l) => d.with_labels(l.clone()),
        None => Ok(d),
    }
}

fn pointer_index(model: &MeasurementModel, label: &str) -> Result<usize> {
    model
        .pointers()
        .index_of(label)
        .ok_or_else(|| Error::validation(format!("no pointer labelled `{label}`")))
}

/// `Σ R_k` over the measured projectors read out by the named pointers.
fn property_from_pointers(model: &MeasurementModel, labels: &[String]) -> Result<Projector> {
    let mut ks = Vec::with_capacity(labels.len());
    for l in labels {
        let alpha = pointer_index(model, l)?;
        if alpha == 0 {
            return Err(Error::validation(format!(
                "`{l}` is the catch-all pointer, not a measured outcome"
            )));
        }
        ks.push(alpha - 1);
    }
    model.measured().event_projector(ks)
}

// ---------------------------------------------------------------- running

/// Loads and runs one scenario file.
pub fn run_scenario(path: &Path, options: &RunOptions) -> Report {
    match load_scenario(path) {
        Ok(s) => run(&s, options),
        Err(problems) => Report::invalid(default_id(path), &problems),
    }
}

/// Runs an already parsed scenario.
pub fn run(scenario: &Scenario, options: &RunOptions) -> Report {
    let mut report = Report::new(scenario.id.clone());
    let outcome = match &scenario.payload {
        Payload::Measurement(p) => run_measurement(p, options, &mut report),
        Payload::JointMeasurement(p) => run_joint(p, options, &mut report),
        Payload::Noncontextuality(p) => run_noncontextuality(p, options, &mut report),
        Payload::Histories(p) => run_histories(p, options, &mut report),
        Payload::Valuation(p) => run_valuation(p, options, &mut report),
        Payload::FrameworkCombine(p) => run_framework(p, options, &mut report),
    };
    finish(report, outcome)
}

/// Merges an error into whatever the scenario reported before failing.
fn finish(mut report: Report, outcome: Result<()>) -> Report {
    if let Err(e) = outcome {
        let failed = Report::from_error(report.scenario_id.clone(), &e);
        let metrics = std::mem::take(&mut report.metrics);
        let mut narratives = std::mem::take(&mut report.narratives);
        report = failed;
        report.metrics = metrics;
        narratives.append(&mut report.narratives);
        report.narratives = narratives;
    }
    report.check_finite();
    report
}

fn pointer_options(
    ready_rank: Option<usize>,
    prefix: &str,
    options: &RunOptions,
) -> PointerOptions {
    PointerOptions {
        ready_rank: ready_rank.unwrap_or(1),
        prefix: prefix.to_string(),
        max_dim: options.max_dim,
    }
}

fn report_distribution(
    model: &MeasurementModel,
    prepared: &Projector,
    expect: Option<&BTreeMap<String, f64>>,
    options: &RunOptions,
    report: &mut Report,
) -> Result<()> {
    let dist = born_probabilities(model, prepared)?;
    for (label, p) in dist.iter() {
        report.metric(format!("pr.{label}"), p);
    }
    report.metric("pr_total", dist.total());
    if let Some(expect) = expect {
        let mut worst: f64 = 0.0;
        for (label, want) in expect {
            let got = dist
                .probability(label)
                .ok_or_else(|| Error::validation(format!("no pointer labelled `{label}`")))?;
            worst = worst.max((got - want).abs());
        }
        report.metric("expected_max_deviation", worst);
        report.fail_unless(worst <= options.tolerance, || {
            format!("outcome probabilities deviate from expectation by {worst:e}")
        });
    }
    Ok(())
}

fn report_calibration(model: &MeasurementModel, options: &RunOptions, report: &mut Report) {
    let cal = verify_calibration(model);
    report.metric("calibration_max_violation", cal.max_violation);
    report.fail_unless(cal.passes_at(options.tolerance), || {
        format!(
            "apparatus is not calibrated: max ‖Π V − δ V‖ = {:e}",
            cal.max_violation
        )
    });
}

fn report_coarse(
    model: &MeasurementModel,
    checks: &[CoarseCheck],
    options: &RunOptions,
    report: &mut Report,
) -> Result<()> {
    for check in checks {
        let pointers = check
            .pointers
            .iter()
            .map(|l| pointer_index(model, l))
            .collect::<Result<Vec<_>>>()?;
        let p = match (&check.property, &check.prepared) {
            (Some(labels), None) => {
                let property = property_from_pointers(model, labels)?;
                coarse_outcome_probability(model, &property, &pointers)?
            }
            (None, Some(prepared)) => {
                let prepared = resolve_projector(prepared, options.max_dim)?;
                outcome_set_probability(model, &prepared, &pointers)?
            }
            _ => {
                return Err(Error::validation(format!(
                    "coarse check `{}` needs exactly one of `property` or `prepared`",
                    check.name
                )))
            }
        };
        report.metric(format!("coarse.{}", check.name), p);
        if let Some(want) = check.expect {
            report.fail_unless((p - want).abs() <= options.tolerance, || {
                format!("coarse check `{}`: {p} instead of {want}", check.name)
            });
        }
    }
    Ok(())
}

fn report_pre_probability(
    model: &MeasurementModel,
    prepared: &Projector,
    report: &mut Report,
) -> Result<()> {
    let v = evolve_property(model, prepared)?;
    for (label, pi) in model
        .pointers()
        .labels()
        .iter()
        .zip(model.pointers().projectors())
    {
        report.metric(
            format!("evolved_commutator.{label}"),
            v.evolved.commutator_norm(pi),
        );
    }
    Ok(())
}

fn run_measurement(
    p: &MeasurementPayload,
    options: &RunOptions,
    report: &mut Report,
) -> Result<()> {
    let measured = resolve_decomposition(&p.measured, options.max_dim)?;
    let mut model = build_pointer_model_with(
        &measured,
        p.dim_m,
        &pointer_options(p.ready_rank, "pi", options),
    )?;
    match p.dynamics.as_deref() {
        None | Some("calibrated") => {}
        Some("identity") => {
            model = model.with_unitary(ComplexMatrix::identity(model.total_dim()))?;
            report.narrate("dynamics replaced by the identity");
        }
        Some(other) => {
            return Err(Error::validation(format!(
                "unknown dynamics `{other}` (expected calibrated or identity)"
            )))
        }
    }
    let prepared = resolve_projector(&p.prepared, options.max_dim)?;
    report.metric("outcomes", measured.len());
    report.metric("joint_dim", model.total_dim());
    report_calibration(&model, options, report);
    report_pre_probability(&model, &prepared, report)?;
    report_distribution(&model, &prepared, p.expect.as_ref(), options, report)?;
    report_coarse(&model, &p.coarse, options, report)
}

fn run_joint(p: &JointPayload, options: &RunOptions, report: &mut Report) -> Result<()> {
    let a = resolve_observable(&p.a, options.max_dim)?;
    let b = resolve_observable(&p.b, options.max_dim)?;
    let refinement = common_refinement(&a, &b)?;
    let dim_m = p.dim_m.unwrap_or(refinement.len() + 1);
    let model = build_joint_model_with(&a, &b, dim_m, &pointer_options(None, "xi", options))?;
    let prepared = resolve_projector(&p.prepared, options.max_dim)?;

    let err_a = (&refinement.reconstruct_a() - &a.matrix()).frobenius_norm();
    let err_b = (&refinement.reconstruct_b() - &b.matrix()).frobenius_norm();
    report.metric("refinement_size", refinement.len());
    report.metric("refinement_a_error", err_a);
    report.metric("refinement_b_error", err_b);
    report.fail_unless(err_a.max(err_b) <= options.tolerance, || {
        format!("refinement does not reproduce A and B (errors {err_a:e}, {err_b:e})")
    });
    for (j, (va, vb)) in refinement
        .values_a()
        .iter()
        .zip(refinement.values_b())
        .enumerate()
    {
        report.narrate(format!("xi{}: a = {va}, b = {vb}", j + 1));
    }
    report_calibration(&model, options, report);
    report_distribution(&model, &prepared, p.expect.as_ref(), options, report)?;
    let marginal = a_marginal(&model, &prepared)?;
    for (v, pr) in marginal.values.iter().zip(&marginal.probabilities) {
        report.metric(format!("a_marginal.{v}"), *pr);
    }
    report_coarse(&model, &p.coarse, options, report)
}

fn run_noncontextuality(
    p: &NoncontextualityPayload,
    options: &RunOptions,
    report: &mut Report,
) -> Result<()> {
    let explicit = [&p.a, &p.b, &p.c].iter().filter(|o| o.is_some()).count();
    if explicit != 0 && explicit != 3 {
        return Err(Error::validation("give all of `a`, `b`, `c` or none"));
    }
    if explicit == 0 && p.generated.is_none() {
        return Err(Error::validation(
            "nothing to check: no triple and no `generated` corpus",
        ));
    }
    if let (Some(a), Some(b), Some(c)) = (&p.a, &p.b, &p.c) {
        let a = resolve_observable(a, options.max_dim)?;
        let b = resolve_observable(b, options.max_dim)?;
        let c = resolve_observable(c, options.max_dim)?;
        let dim_m = p.dim_m.unwrap_or(a.dim() + 1);
        let prepared = match &p.prepared {
            Some(s) => resolve_projector(s, options.max_dim)?,
            None => Projector::identity(a.dim()),
        };
        let nc = noncontextuality_check(&a, &b, &c, &prepared, dim_m)?;
        report.metric("marginal_max_difference", nc.max_difference);
        report.metric("commutator_bc", nc.commutator_bc);
        for (v, (pb, pc)) in nc
            .with_b
            .values
            .iter()
            .zip(nc.with_b.probabilities.iter().zip(&nc.with_c.probabilities))
        {
            report.metric(format!("a_marginal_with_b.{v}"), *pb);
            report.metric(format!("a_marginal_with_c.{v}"), *pc);
        }
        report.fail_unless(nc.max_difference <= options.tolerance, || {
            format!("A-marginals differ by {:e}", nc.max_difference)
        });
        if let Some(value) = p.pivot_value {
            let k = a
                .index_of_value(value)
                .ok_or_else(|| Error::validation(format!("{value} is not an eigenvalue of A")))?;
            let pivot = a.decomposition().projector(k).clone();
            let m_b = build_joint_model_with(&a, &b, dim_m, &pointer_options(None, "xi", options))?;
            let m_c = build_joint_model_with(&a, &c, dim_m, &pointer_options(None, "xi", options))?;
            let pr = counterfactual_pivot(&m_b, &m_c, &pivot)?;
            report.metric("pivot_probability", pr);
            report.fail_unless((pr - 1.0).abs() <= options.tolerance, || {
                format!("counterfactual apparatus reproduces the pivot with probability {pr}")
            });
        }
    }
    if let Some(g) = &p.generated {
        let seed = options.seed.or(p.seed).unwrap_or(0);
        run_generated_triples(g, seed, options, report)?;
    }
    Ok(())
}

fn run_generated_triples(
    g: &GeneratedCorpus,
    seed: u64,
    options: &RunOptions,
    report: &mut Report,
) -> Result<()> {
    if g.min_dim < 2 || g.min_dim > g.max_dim {
        return Err(Error::validation(
            "generated corpus needs 2 ≤ min_dim ≤ max_dim",
        ));
    }
    check_dim(g.max_dim * (g.max_dim + 1), options.max_dim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_difference: f64 = 0.0;
    let mut min_commutator = f64::INFINITY;
    let mut pivot_deviation: f64 = 0.0;
    for _ in 0..g.cases {
        let dim = rng.gen_range(g.min_dim..=g.max_dim);
        let (a, b, c) = random_noncontextual_triple(&mut rng, dim)?;
        let prepared = Projector::ray(&random_state(&mut rng, dim))?;
        let nc = noncontextuality_check(&a, &b, &c, &prepared, dim + 1)?;
        max_difference = max_difference.max(nc.max_difference);
        min_commutator = min_commutator.min(nc.commutator_bc);
        let k = rng.gen_range(0..a.len());
        let pivot = a.decomposition().projector(k).clone();
        let opts = pointer_options(None, "xi", options);
        let m_b = build_joint_model_with(&a, &b, dim + 1, &opts)?;
        let m_c = build_joint_model_with(&a, &c, dim + 1, &opts)?;
        let pr = counterfactual_pivot(&m_b, &m_c, &pivot)?;
        pivot_deviation = pivot_deviation.max((pr - 1.0).abs());
    }
    report.metric("generated_cases", g.cases);
    report.metric("generated_seed", seed);
    report.metric("generated_max_difference", max_difference);
    if g.cases > 0 {
        report.metric("generated_min_commutator_bc", min_commutator);
    }
    report.metric("generated_max_pivot_deviation", pivot_deviation);
    report.fail_unless(max_difference.max(pivot_deviation) <= options.tolerance, || {
        format!("generated corpus: marginal difference {max_difference:e}, pivot deviation {pivot_deviation:e}")
    });
    Ok(())
}

fn build_family(spec: &FamilySpec, options: &RunOptions) -> Result<HistoryFamily> {
    match (&spec.measurement, &spec.initial, &spec.event_sets) {
        (Some(m), None, None) if spec.steps.is_none() => {
            let measured = resolve_decomposition(&m.measured, options.max_dim)?;
            let model = build_pointer_model_with(
                &measured,
                m.dim_m,
                &pointer_options(m.ready_rank, "pi", options),
            )?;
            let prepared = resolve_projector(&m.prepared, options.max_dim)?;
            let at_t1 = match &m.at_t1 {
                AtFirstTime::Named(n) if n == "measured" => measured.clone(),
                AtFirstTime::Named(n) if n == "prepared" => {
                    Decomposition::binary(&prepared, Some(("psi", "notpsi")))?
                }
                AtFirstTime::Named(n) => {
                    return Err(Error::validation(format!(
                        "`at_t1` must be measured, prepared or a decomposition, not `{n}`"
                    )))
                }
                AtFirstTime::Decomposition(d) => resolve_decomposition(d, options.max_dim)?,
            };
            HistoryFamily::measurement_family(&model, &prepared, &at_t1)
        }
        (None, Some(initial), Some(sets)) => {
            let initial = resolve_projector(initial, options.max_dim)?;
            let sets = sets
                .iter()
                .map(|d| resolve_decomposition(d, options.max_dim))
                .collect::<Result<Vec<_>>>()?;
            match &spec.steps {
                None => HistoryFamily::static_family(initial, sets),
                Some(steps) => {
                    let steps = steps
                        .iter()
                        .map(|u| resolve_operator(u, options.max_dim))
                        .collect::<Result<Vec<_>>>()?;
                    HistoryFamily::new(initial, steps, sets)
                }
            }
        }
        _ => Err(Error::validation(
            "a family is either `measurement` or `initial` + `event_sets` (+ `steps`)",
        )),
    }
}

fn timed_event(family: &HistoryFamily, e: &EventSpec) -> Result<TimedEvent> {
    let set = e
        .time
        .checked_sub(1)
        .and_then(|k| family.event_sets().get(k))
        .ok_or_else(|| Error::validation(format!("no event set at time t{}", e.time)))?;
    let indices = e
        .labels
        .iter()
        .map(|l| {
            set.index_of(l)
                .ok_or_else(|| Error::validation(format!("no `{l}` at time t{}", e.time)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TimedEvent::new(e.time, indices))
}

fn run_histories(p: &HistoriesPayload, options: &RunOptions, report: &mut Report) -> Result<()> {
    let limit = p.max_histories.unwrap_or(DEFAULT_MAX_HISTORIES);
    let mut family = build_family(&p.family, options)?;
    if let Some(other) = &p.combine_with {
        let other = build_family(other, options)?;
        for (name, f) in [("first", &family), ("second", &other)] {
            let c = consistency_of(&decoherence_matrix_with_limit(f, limit)?);
            report.metric(format!("{name}.max_off_diagonal"), c.max_off_diagonal);
            report.fail_unless(c.max_off_diagonal <= options.tolerance, || {
                format!("{name} family is itself inconsistent")
            });
        }
        family = family.combine(&other)?;
        report.narrate("evaluating the combined family");
    }

    let d = decoherence_matrix_with_limit(&family, limit)?;
    let consistency = consistency_of(&d);
    report.metric("history_count", d.len());
    report.metric("max_off_diagonal", consistency.max_off_diagonal);
    report.metric("decoherence_hermitian_defect", d.hermitian_defect());
    if consistency.max_off_diagonal > options.tolerance {
        if let Some((h, k)) = &consistency.worst_pair {
            report.narrate(format!(
                "largest interference between `{}` and `{}`",
                family.describe(h),
                family.describe(k)
            ));
        }
        report.narrate("family is inconsistent: probabilities refused");
        report.set_status(crate::report::Status::Violation);
        return Ok(());
    }

    let probs = history_probabilities(&family)?;
    report.metric("pr_total", probs.total());
    for (h, pr) in probs.histories.iter().zip(&probs.probabilities) {
        report.metric(format!("pr.{}", family.describe(h)), *pr);
    }
    if let Some(expect) = &p.expect {
        let mut worst: f64 = 0.0;
        for (name, want) in expect {
            let got = probs
                .histories
                .iter()
                .position(|h| &family.describe(h) == name)
                .map(|i| probs.probabilities[i])
                .ok_or_else(|| Error::validation(format!("no history `{name}` in the family")))?;
            worst = worst.max((got - want).abs());
        }
        report.metric("expected_max_deviation", worst);
        report.fail_unless(worst <= options.tolerance, || {
            format!("history probabilities deviate from expectation by {worst:e}")
        });
    }
    for cond in &p.conditionals {
        let given = timed_event(&family, &cond.given)?;
        let target = timed_event(&family, &cond.target)?;
        let pr = conditional_probability(&family, &given, &target)?;
        report.metric(format!("conditional.{}", cond.name), pr);
        if let Some(want) = cond.expect {
            report.fail_unless((pr - want).abs() <= options.tolerance, || {
                format!("conditional `{}`: {pr} instead of {want}", cond.name)
            });
        }
    }
    Ok(())
}

fn run_valuation(p: &ValuationPayload, options: &RunOptions, report: &mut Report) -> Result<()> {
    let problem = match (&p.contexts, &p.decompositions) {
        (Some(contexts), None) => ValuationProblem::from_named_contexts(contexts)?,
        (None, Some(decs)) => {
            let decs = decs
                .iter()
                .map(|d| resolve_decomposition(d, options.max_dim))
                .collect::<Result<Vec<_>>>()?;
            let (problem, sharing) = detect_shared_projectors(&decs)?;
            report.metric("shared_identifiers", sharing.shared.len());
            report.metric("bridges", sharing.bridges.len());
            report.metric(
                "has_noncommuting_contexts",
                usize::from(sharing.noncommuting),
            );
            for (i, j, ids) in &sharing.bridges {
                let names: Vec<&str> = ids
                    .iter()
                    .map(|&k| problem.identifiers()[k].as_str())
                    .collect();
                report.narrate(format!("contexts {i} and {j} share {}", names.join(", ")));
            }
            problem
        }
        _ => {
            return Err(Error::validation(
                "valuation needs exactly one of `contexts` or `decompositions`",
            ))
        }
    };
    report.metric("identifiers", problem.identifiers().len());
    report.metric("contexts", problem.contexts().len());
    match search_valuation(&problem)? {
        SearchOutcome::Found(v) => {
            report.metric("valuation_found", 1usize);
            report.narrate(format!(
                "witness: {}",
                v.true_identifiers(&problem).join(", ")
            ));
        }
        SearchOutcome::Exhausted(cert) => {
            report.metric("valuation_found", 0usize);
            report.metric("nodes_examined", cert.nodes_examined);
            report.metric("branches_pruned", cert.branches_pruned);
            report.narrate("no noncontextual valuation exists: search exhausted");
            report.set_status(Status::Violation);
        }
    }
    Ok(())
}

fn run_framework(p: &FrameworkPayload, options: &RunOptions, report: &mut Report) -> Result<()> {
    let [n1, n2] = p
        .names
        .clone()
        .unwrap_or_else(|| ["first".to_string(), "second".to_string()]);
    let (f1, f2) = match (&p.first, &p.second, &p.measurement) {
        (Some(a), Some(b), None) => (
            Framework::new(n1, resolve_decomposition(a, options.max_dim)?),
            Framework::new(n2, resolve_decomposition(b, options.max_dim)?),
        ),
        (None, None, Some(m)) => {
            let measured = resolve_decomposition(&m.measured, options.max_dim)?;
            let model = build_pointer_model_with(
                &measured,
                m.dim_m,
                &pointer_options(None, "pi", options),
            )?;
            let prepared = resolve_projector(&m.prepared, options.max_dim)?;
            let v = evolve_property(&model, &prepared)?;
            let pre = Decomposition::binary(&v.evolved, Some(("V", "notV")))?;
            (
                Framework::new(n1, pre),
                Framework::new(n2, model.pointers().clone()),
            )
        }
        _ => {
            return Err(Error::validation(
                "framework-combine needs `first` and `second`, or `measurement`",
            ))
        }
    };
    match combine_frameworks(&f1, &f2)? {
        Combination::Combined(f) => {
            report.metric("refinement_size", f.sample_space().len());
            report.narrate(format!("combined framework `{}`", f.name()));
        }
        Combination::Violation(v) => {
            report.metric("commutator_norm", v.commutator_norm);
            report.metric("noncommuting_pairs", v.noncommuting_pairs);
            report.narrate(format!(
                "single framework rule: `{}` in {} does not commute with `{}` in {}",
                v.first.1, v.first_framework, v.second.1, v.second_framework
            ));
            report.set_status(Status::Violation);
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- subcommands

fn model_of(scenario: &Scenario, options: &RunOptions) -> Result<MeasurementModel> {
    match &scenario.payload {
        Payload::Measurement(p) => {
            let measured = resolve_decomposition(&p.measured, options.max_dim)?;
            let model = build_pointer_model_with(
                &measured,
                p.dim_m,
                &pointer_options(p.ready_rank, "pi", options),
            )?;
            match p.dynamics.as_deref() {
                Some("identity") => model.with_unitary(ComplexMatrix::identity(model.total_dim())),
                _ => Ok(model),
            }
        }
        Payload::JointMeasurement(p) => {
            let a = resolve_observable(&p.a, options.max_dim)?;
            let b = resolve_observable(&p.b, options.max_dim)?;
            let dim_m = match p.dim_m {
                Some(d) => d,
                None => common_refinement(&a, &b)?.len() + 1,
            };
            build_joint_model_with(&a, &b, dim_m, &pointer_options(None, "xi", options))
        }
        _ => Err(Error::validation(format!(
            "calibration needs a measurement or joint-measurement scenario, not {}",
            scenario.kind()
        ))),
    }
}

fn with_loaded(
    path: &Path,
    options: &RunOptions,
    body: impl FnOnce(&Scenario, &RunOptions, &mut Report) -> Result<()>,
) -> Report {
    match load_scenario(path) {
        Ok(s) => {
            let mut report = Report::new(s.id.clone());
            let outcome = body(&s, options, &mut report);
            finish(report, outcome)
        }
        Err(problems) => Report::invalid(default_id(path), &problems),
    }
}

/// Full calibration table of a measurement scenario's apparatus.
pub fn calibrate(path: &Path, options: &RunOptions) -> Report {
    with_loaded(path, options, |s, options, report| {
        let model = model_of(s, options)?;
        let cal = verify_calibration(&model);
        for (k, row) in cal.violations.iter().enumerate() {
            for (alpha, v) in row.iter().enumerate() {
                report.metric(
                    format!(
                        "violation.{}.{}",
                        model.measured().label(k),
                        model.pointers().label(alpha)
                    ),
                    *v,
                );
            }
        }
        report.metric("calibration_max_violation", cal.max_violation);
        report.fail_unless(cal.passes_at(options.tolerance), || {
            format!(
                "apparatus is not calibrated (max violation {:e})",
                cal.max_violation
            )
        });
        Ok(())
    })
}

/// Common refinement of the first two observables of a scenario.
pub fn refine(path: &Path, options: &RunOptions) -> Report {
    with_loaded(path, options, |s, options, report| {
        let (a, b) = match &s.payload {
            Payload::JointMeasurement(p) => (&p.a, &p.b),
            Payload::Noncontextuality(NoncontextualityPayload {
                a: Some(a),
                b: Some(b),
                ..
            }) => (a, b),
            _ => {
                return Err(Error::validation(
                    "refine needs a joint-measurement or explicit noncontextuality scenario",
                ))
            }
        };
        let a = resolve_observable(a, options.max_dim)?;
        let b = resolve_observable(b, options.max_dim)?;
        let r = common_refinement(&a, &b)?;
        report.metric("refinement_size", r.len());
        let d = r.decomposition();
        for j in 0..r.len() {
            let label = d.label(j);
            report.metric(format!("{label}.a"), r.values_a()[j]);
            report.metric(format!("{label}.b"), r.values_b()[j]);
            report.metric(format!("{label}.rank"), d.projector(j).rank());
        }
        let err_a = (&r.reconstruct_a() - &a.matrix()).frobenius_norm();
        let err_b = (&r.reconstruct_b() - &b.matrix()).frobenius_norm();
        report.metric("refinement_a_error", err_a);
        report.metric("refinement_b_error", err_b);
        report.fail_unless(err_a.max(err_b) <= options.tolerance, || {
            "refinement does not reproduce A and B".to_string()
        });
        Ok(())
    })
}

/// Decoherence matrix of a histories scenario: every entry on or above the
/// diagonal with magnitude above `1e-15`.
pub fn consistency(path: &Path, options: &RunOptions) -> Report {
    with_loaded(path, options, |s, options, report| {
        let Payload::Histories(p) = &s.payload else {
            return Err(Error::validation("consistency needs a histories scenario"));
        };
        let mut family = build_family(&p.family, options)?;
        if let Some(other) = &p.combine_with {
            family = family.combine(&build_family(other, options)?)?;
        }
        let limit = p.max_histories.unwrap_or(DEFAULT_MAX_HISTORIES);
        let d = decoherence_matrix_with_limit(&family, limit)?;
        for (i, h) in d.histories().iter().enumerate() {
            report.narrate(format!("h{i} = {}", family.describe(h)));
        }
        for i in 0..d.len() {
            for j in i..d.len() {
                let z = d.get(i, j);
                if z.norm() > 1e-15 {
                    report.metric(format!("d.h{i}.h{j}.re"), z.re);
                    report.metric(format!("d.h{i}.h{j}.im"), z.im);
                }
            }
        }
        let c = consistency_of(&d);
        report.metric("history_count", d.len());
        report.metric("max_off_diagonal", c.max_off_diagonal);
        if c.max_off_diagonal > options.tolerance {
            report.narrate("family is inconsistent");
            report.set_status(Status::Violation);
        }
        Ok(())
    })
}

/// Runs a valuation scenario; other kinds are refused.
pub fn valuation(path: &Path, options: &RunOptions) -> Report {
    with_loaded(path, options, |s, options, report| match &s.payload {
        Payload::Valuation(p) => run_valuation(p, options, report),
        _ => Err(Error::validation("valuation needs a valuation scenario")),
    })
}

// ---------------------------------------------------------------- batch

/// Scenario files named by `inputs`: files as given, directories expanded to
/// their `*.json` entries in name order.
pub fn collect_paths(inputs: &[PathBuf]) -> std::io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(input)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            entries.sort();
            out.extend(entries);
        } else {
            out.push(input.clone());
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct BatchReport {
    pub paths: Vec<PathBuf>,
    pub reports: Vec<Report>,
}

impl BatchReport {
    pub fn exit_code(&self) -> i32 {
        self.reports
            .iter()
            .map(Report::exit_code)
            .max()
            .unwrap_or(exit::PASS)
    }

    pub fn count(&self, status: Status) -> usize {
        self.reports.iter().filter(|r| r.status == status).count()
    }

    pub fn to_json(&self) -> String {
        let counts: serde_json::Map<String, Value> =
            [Status::Pass, Status::Fail, Status::Violation, Status::Error]
                .into_iter()
                .map(|s| (s.as_str().to_string(), Value::from(self.count(s))))
                .collect();
        let scenarios: Vec<Value> = self
            .reports
            .iter()
            .map(|r| serde_json::to_value(r).expect("reports serialize"))
            .collect();
        let v = serde_json::json!({
            "counts": counts,
            "exit_code": self.exit_code(),
            "scenarios": scenarios,
        });
        canonical_json(&v)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.reports {
            out.push_str(&r.to_text());
            out.push('\n');
        }
        out.push_str(&format!(
            "{} scenarios: {} pass, {} fail, {} violation, {} error\n",
            self.reports.len(),
            self.count(Status::Pass),
            self.count(Status::Fail),
            self.count(Status::Violation),
            self.count(Status::Error)
        ));
        out
    }
}

/// Runs every scenario independently on `jobs` worker threads. Reports come
/// back in input order whatever the parallelism.
pub fn batch(paths: &[PathBuf], jobs: usize, options: &RunOptions) -> Result<BatchReport> {
    if paths.is_empty() {
        return Err(Error::validation("batch needs at least one scenario file"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Numeric(format!("cannot start worker threads: {e}")))?;
    let reports = pool.install(|| {
        paths
            .par_iter()
            .map(|p| run_scenario(p, options))
            .collect::<Vec<_>>()
    });
    Ok(BatchReport {
        paths: paths.to_vec(),
        reports,
    })
}
