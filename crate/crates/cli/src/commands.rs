//! Subcommand implementations. Each returns the bytes it wants written.

use std::f64::consts::PI;
use std::path::Path;

use anisoft::diffeo::{invariance_experiment, Diffeomorphism};
use anisoft::faadibruno::{enumerate_terms, verification_rows, MultiIndex, VerificationRow};
use anisoft::family::{random_band_limited, random_gaussians, TestFunction};
use anisoft::grid::io::read_binary;
use anisoft::littlewood_paley::build_partition;
use anisoft::local_means::{build_kernels, local_means_norm, maximal_inequality_experiment, LocalMeansSystem, MaximalParams};
use anisoft::mixed_norms::IntegrabilityVector;
use anisoft::multipliers::{axis_power_symbol, lambda_r, lift_roundtrip, multiply_spectrum, xi_symbol, MultiplierSymbol};
use anisoft::spaces::{b_norm_spectral, f_norm_spectral, h_norm_spectral, multiplier_band};
use anisoft::{AnisotropyVector, Error, GridSpec, RatioStats, Result, SpaceParams, SpectralFunction};
use serde::Serialize;

use crate::config::{ExperimentConfig, FamilyConfig, FamilyKind};

pub const DEFAULT_SEED: u64 = 0x5eed;

/// Command-line overrides shared by the experiment subcommands.
#[derive(Debug, Clone, Default)]
pub struct SpaceOverrides {
    pub s: Option<f64>,
    pub a: Option<Vec<f64>>,
    pub p: Option<Vec<f64>>,
    pub q: Option<f64>,
    pub grid: Option<Vec<usize>>,
    pub box_lengths: Option<Vec<f64>>,
    pub family: Option<String>,
}

/// Settings after merging the config file with command-line flags.
pub struct Context {
    pub seed: u64,
    pub spec: GridSpec,
    pub points: Vec<SpaceParams>,
    pub family: FamilyConfig,
}

impl Context {
    /// Flags win over the config file; missing values fall back to per-command defaults.
    pub fn resolve(cfg: &ExperimentConfig, seed: Option<u64>, o: &SpaceOverrides, defaults: &Defaults) -> Result<Self> {
        let seed = seed.or(cfg.seed).unwrap_or(DEFAULT_SEED);
        let mut points = Vec::new();
        let flags_given = o.s.is_some() || o.a.is_some() || o.p.is_some() || o.q.is_some();
        if flags_given || cfg.space.is_empty() {
            let base = cfg.space.first();
            let a = o.a.clone().or_else(|| base.map(|b| b.a.clone())).unwrap_or_else(|| defaults.a.clone());
            let n = a.len();
            let p = o
                .p
                .clone()
                .or_else(|| base.map(|b| b.p.iter().map(|v| v.value()).collect()))
                .unwrap_or_else(|| vec![2.0; n]);
            let s = o.s.or(base.map(|b| b.s)).unwrap_or(defaults.s);
            let q = o.q.or(base.map(|b| b.q.value())).unwrap_or(2.0);
            points.push(space(s, a, p, q)?);
        } else {
            for b in &cfg.space {
                points.push(space(b.s, b.a.clone(), b.p.iter().map(|v| v.value()).collect(), b.q.value())?);
            }
        }
        let n = points[0].a.dim();
        if points.iter().any(|p| p.a.dim() != n) {
            return Err(Error::Configuration("all space entries must share the dimension".into()));
        }
        let cfg_grid = cfg.grid.as_ref();
        let default_points = if n >= 3 { 20 } else { defaults.points };
        let pts = o
            .grid
            .clone()
            .or_else(|| cfg_grid.map(|g| g.points.clone()))
            .unwrap_or_else(|| vec![default_points; n]);
        let lengths = o
            .box_lengths
            .clone()
            .or_else(|| cfg_grid.map(|g| g.box_lengths.clone()))
            .unwrap_or_else(|| vec![defaults.box_length; n]);
        if pts.len() != n || lengths.len() != n {
            return Err(Error::Configuration(format!("grid needs {n} points and {n} box lengths to match a")));
        }
        let spec = GridSpec::new(pts, lengths)?;
        let family = match &o.family {
            Some(text) => FamilyConfig::parse(text)?,
            None => cfg.family.clone().unwrap_or_else(|| FamilyConfig::parse(defaults.family).expect("valid default")),
        };
        Ok(Self { seed, spec, points, family })
    }

    pub fn first(&self) -> &SpaceParams {
        &self.points[0]
    }

    /// Test functions of the configured family on the context grid.
    pub fn family_members(&self) -> Result<Vec<TestFunction>> {
        let spec = &self.spec;
        let a = &self.first().a;
        let f = &self.family;
        match f.kind {
            FamilyKind::Gaussians => {
                let l = spec.box_lengths();
                let lo: Vec<f64> = l.iter().map(|v| 0.4 * v).collect();
                let hi: Vec<f64> = l.iter().map(|v| 0.6 * v).collect();
                let lmin = l.iter().copied().fold(f64::INFINITY, f64::min);
                Ok(random_gaussians(spec.dim(), f.count, (&lo, &hi), (0.09 * lmin, 0.11 * lmin), self.seed))
            }
            FamilyKind::Modes | FamilyKind::BandLimited => {
                let cutoff = f.cutoff.unwrap_or(8.0);
                random_band_limited(spec, a, cutoff, f.count, f.modes.unwrap_or(8), self.seed)
            }
        }
    }
}

pub struct Defaults {
    pub a: Vec<f64>,
    pub s: f64,
    pub points: usize,
    pub box_length: f64,
    pub family: &'static str,
}

impl Defaults {
    pub fn standard(family: &'static str) -> Self {
        Self { a: vec![2.0, 1.0], s: 1.0, points: 32, box_length: 2.0 * PI, family }
    }
}

pub fn space(s: f64, a: Vec<f64>, p: Vec<f64>, q: f64) -> Result<SpaceParams> {
    SpaceParams::new(s, AnisotropyVector::new(a)?, IntegrabilityVector::new(p, q)?)
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn list<T: std::fmt::Debug>(v: &[T]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(";")
}

/// CSV with a fixed header, `.` decimals and LF line endings.
pub fn csv(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

pub fn aniso_dist(a: &[f64], x: &[f64]) -> Result<Vec<u8>> {
    let av = AnisotropyVector::new(a.to_vec())?;
    let (d, res) = av.distance_with_residual(x)?;
    csv(&["a", "x", "distance", "residual"], &[vec![list(a), list(x), num(d), num(res)]])
}

pub fn partition_check(ctx: &Context) -> Result<Vec<u8>> {
    let mut rows = Vec::new();
    for p in &ctx.points {
        let rep = build_partition(&p.a, &ctx.spec)?.report();
        rows.push(vec![
            list(p.a.weights()),
            list(ctx.spec.points()),
            list(ctx.spec.box_lengths()),
            rep.levels.to_string(),
            rep.covered_points.to_string(),
            num(rep.max_sum_deviation),
            rep.corona_violations.to_string(),
            rep.range_violations.to_string(),
            rep.max_active_levels.to_string(),
        ]);
    }
    csv(
        &[
            "a",
            "points",
            "box_lengths",
            "levels",
            "covered_points",
            "max_sum_deviation",
            "corona_violations",
            "range_violations",
            "max_active_levels",
        ],
        &rows,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceKind {
    F,
    B,
    H,
}

pub fn norm(kind: SpaceKind, params: &SpaceParams, input: &Path) -> Result<Vec<u8>> {
    let file = std::fs::File::open(input)
        .map_err(|e| Error::Configuration(format!("cannot open input {}: {e}", input.display())))?;
    let u = read_binary(std::io::BufReader::new(file))?;
    if u.spec().dim() != params.a.dim() {
        return Err(Error::Usage(format!("input has {} axes but a has {}", u.spec().dim(), params.a.dim())));
    }
    let sys = build_partition(&params.a, u.spec())?;
    let spectral = u.to_spectral();
    let mut rows = Vec::new();
    match kind {
        SpaceKind::F | SpaceKind::B => {
            let rep = if kind == SpaceKind::F {
                f_norm_spectral(&spectral, params, &sys)?
            } else {
                b_norm_spectral(&spectral, params, &sys)?
            };
            for (j, c) in rep.per_level.iter().enumerate() {
                rows.push(vec![j.to_string(), num(*c)]);
            }
            rows.push(vec!["tail_fraction".into(), num(rep.tail_fraction)]);
            rows.push(vec!["total".into(), num(rep.value)]);
        }
        SpaceKind::H => {
            rows.push(vec!["total".into(), num(h_norm_spectral(&spectral, params.s, &params.pq, &sys)?)]);
        }
    }
    csv(&["level", "value"], &rows)
}

fn spectra(fam: &[TestFunction], spec: &GridSpec) -> Result<Vec<SpectralFunction>> {
    fam.iter().map(|f| f.spectral(spec)).collect()
}

fn band_row(op: &str, resolution: usize, st: &RatioStats, extra: f64) -> Vec<String> {
    vec![op.into(), resolution.to_string(), num(st.min), num(st.max), num(st.mean), st.count.to_string(), num(extra)]
}

/// Ratio bands of the lift operators at the grid and its refinement, with round-trip errors.
pub fn lift_check(ctx: &Context, r: f64) -> Result<Vec<u8>> {
    let params = ctx.first();
    let a = &params.a;
    let fam = ctx.family_members()?;
    let mut ops: Vec<(String, MultiplierSymbol, f64)> =
        vec![("lambda_r".into(), lambda_r(a, r), r), ("xi_t".into(), xi_symbol(a, r), r)];
    for k in 1..=a.dim() {
        let mu = r / (2.0 * a.weights()[k - 1]);
        ops.push((format!("axis_power_{k}"), axis_power_symbol(a.dim(), k, mu)?, r));
    }
    let mut rows = Vec::new();
    for spec in [ctx.spec.clone(), ctx.spec.refined()] {
        let sys = build_partition(a, &spec)?;
        let us = spectra(&fam, &spec)?;
        for (name, sym, shift) in &ops {
            let st = multiplier_band(&us, sym, *shift, params, &sys)?;
            let mut worst: f64 = 0.0;
            for u in &us {
                let g = u.to_grid();
                let back = if name == "lambda_r" {
                    lift_roundtrip(a, r, u)?
                } else {
                    anisoft::apply_multiplier(&sym.reciprocal(), &multiply_spectrum(sym, u)?)?
                };
                worst = worst.max(back.max_diff(&g)? / g.max_abs().max(f64::MIN_POSITIVE));
            }
            rows.push(band_row(name, spec.points()[0], &st, worst));
        }
    }
    csv(&["op", "resolution", "min", "max", "mean", "count", "roundtrip_error"], &rows)
}

fn ratio_rows(rows: &mut Vec<Vec<String>>, resolution: usize, pairs: &[(f64, f64)]) {
    for (id, (lhs, rhs)) in pairs.iter().enumerate() {
        rows.push(vec![id.to_string(), resolution.to_string(), num(*lhs), num(*rhs), num(lhs / rhs)]);
    }
}

const RATIO_HEADER: [&str; 5] = ["id", "resolution", "lhs", "rhs", "ratio"];

/// `local_means_norm / f_norm` per function at the grid and its refinement.
pub fn local_means_compare(ctx: &Context, laplacian_power: usize, radius: f64) -> Result<Vec<u8>> {
    let params = ctx.first();
    let kp = build_kernels(params.a.dim(), laplacian_power, radius)?;
    let fam = ctx.family_members()?;
    let mut rows = Vec::new();
    for spec in [ctx.spec.clone(), ctx.spec.refined()] {
        let sys = build_partition(&params.a, &spec)?;
        let lms = LocalMeansSystem::new(&kp, &sys, params.s)?;
        let pairs: Vec<(f64, f64)> = spectra(&fam, &spec)?
            .iter()
            .map(|u| Ok((local_means_norm(u, params, &lms)?, f_norm_spectral(u, params, &sys)?.value)))
            .collect::<Result<_>>()?;
        ratio_rows(&mut rows, spec.points()[0], &pairs);
    }
    csv(&RATIO_HEADER, &rows)
}

/// Maximal-function side over plain convolution side per function; refuses when domination fails.
pub fn maximal_check(ctx: &Context, r: Option<Vec<f64>>, laplacian_power: usize) -> Result<Vec<u8>> {
    let params = ctx.first();
    let mp = match r {
        Some(r) => MaximalParams::new(r)?,
        None => MaximalParams::default_for(params),
    };
    let kp = build_kernels(params.a.dim(), laplacian_power, 1.0)?;
    let fam = ctx.family_members()?;
    let mut rows = Vec::new();
    for spec in [ctx.spec.clone(), ctx.spec.refined()] {
        let sys = build_partition(&params.a, &spec)?;
        let lms = LocalMeansSystem::new(&kp, &sys, params.s)?;
        let rep = maximal_inequality_experiment(&spectra(&fam, &spec)?, params, &mp, &lms)?;
        if !rep.domination_holds {
            return Err(Error::Numerical("maximal function fell below the convolution it dominates".into()));
        }
        let pairs: Vec<(f64, f64)> = rep.sides.iter().map(|s| (s.kernel_maximal, s.kernel_convolution)).collect();
        ratio_rows(&mut rows, spec.points()[0], &pairs);
    }
    csv(&RATIO_HEADER, &rows)
}

/// Parses `kind:key=value,...`; axes are counted from 1 and lists use `/`.
pub fn parse_sigma(text: &str, spec: &GridSpec) -> Result<Diffeomorphism> {
    let n = spec.dim();
    let l = spec.box_lengths();
    let (kind, rest) = text.split_once(':').unwrap_or((text, ""));
    let mut kv = std::collections::BTreeMap::new();
    for item in rest.split(',').filter(|s| !s.is_empty()) {
        let (k, v) = item.split_once('=').ok_or_else(|| Error::Usage(format!("sigma option '{item}' needs key=value")))?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    let float = |k: &str, d: f64| -> Result<f64> {
        kv.get(k).map_or(Ok(d), |v| v.parse().map_err(|_| Error::Usage(format!("sigma option {k}='{v}' is not a number"))))
    };
    let floats = |k: &str| -> Result<Option<Vec<f64>>> {
        kv.get(k)
            .map(|v| {
                v.split('/').map(|x| x.parse::<f64>().map_err(|_| Error::Usage(format!("sigma option {k}='{v}' is not a list"))))
                    .collect()
            })
            .transpose()
    };
    let axis = |k: &str, d: usize| -> Result<usize> {
        let v = kv.get(k).map_or(Ok(d), |v| v.parse::<usize>().map_err(|_| Error::Usage(format!("sigma option {k}='{v}'"))))?;
        if v == 0 || v > n {
            return Err(Error::Usage(format!("sigma axis {k}={v} outside 1..={n}")));
        }
        Ok(v - 1)
    };
    let lmin = l.iter().copied().fold(f64::INFINITY, f64::min);
    let radius = float("radius", 0.25 * lmin)?;
    let known: &[&str] = match kind {
        "identity" => &[],
        "translation" => &["shift"],
        "shear" => &["eps", "target", "driver", "center", "radius"],
        "swirl" => &["angle", "i", "k", "radius"],
        "radial" => &["eps", "axes", "radius"],
        other => return Err(Error::Usage(format!("unknown sigma kind '{other}'"))),
    };
    if let Some(k) = kv.keys().find(|k| !known.contains(&k.as_str())) {
        return Err(Error::Usage(format!("sigma kind '{kind}' has no option '{k}'")));
    }
    match kind {
        "identity" => Ok(Diffeomorphism::identity(n)),
        "translation" => {
            let shift = floats("shift")?.unwrap_or_else(|| vec![0.0; n]);
            if shift.len() != n {
                return Err(Error::Usage(format!("translation shift needs {n} entries")));
            }
            Ok(Diffeomorphism::translation(shift))
        }
        "shear" => {
            let driver = axis("driver", 2.min(n))?;
            Diffeomorphism::shear(n, axis("target", 1)?, driver, float("eps", 0.1)?, float("center", l[driver] / 2.0)?, radius)
        }
        "swirl" => {
            let (i, k) = (axis("i", 1)?, axis("k", 2.min(n))?);
            Diffeomorphism::swirl(n, (i, k), (l[i] / 2.0, l[k] / 2.0), radius, float("angle", 0.5)?)
        }
        "radial" => {
            let axes: Vec<usize> = match floats("axes")? {
                Some(v) => v.iter().map(|&x| axis_from(x, n)).collect::<Result<_>>()?,
                None => vec![0],
            };
            let center = axes.iter().map(|&i| l[i] / 2.0).collect();
            Diffeomorphism::radial(n, axes, center, radius, float("eps", 0.1)?)
        }
        _ => unreachable!(),
    }
}

fn axis_from(x: f64, n: usize) -> Result<usize> {
    if x.fract() != 0.0 || x < 1.0 || x > n as f64 {
        return Err(Error::Usage(format!("axis {x} outside 1..={n}")));
    }
    Ok(x as usize - 1)
}

pub fn diffeo_invariance(ctx: &Context, sigma: &str) -> Result<Vec<u8>> {
    let fam = ctx.family_members()?;
    let sigma = parse_sigma(sigma, &ctx.spec)?;
    let mut rows = Vec::new();
    for spec in [ctx.spec.clone(), ctx.spec.refined()] {
        for r in invariance_experiment(&fam, &sigma, &ctx.points, &spec)? {
            rows.push(vec![
                r.f_id.to_string(),
                num(r.s),
                list(&r.p),
                num(r.q),
                list(&r.a),
                r.hypothesis_ok.to_string(),
                num(r.ratio),
                r.resolution.to_string(),
            ]);
        }
    }
    csv(&["f_id", "s", "p", "q", "a", "hypothesis_ok", "ratio", "resolution"], &rows)
}

pub fn faa_di_bruno_terms(gamma: &[usize], n: usize, m: usize) -> Result<Vec<u8>> {
    let e = enumerate_terms(&MultiIndex::new(gamma.to_vec()), n, m)?;
    let rows: Vec<Vec<String>> = e
        .terms
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let factors: Vec<String> = t
                .factors
                .iter()
                .map(|f| format!("f{}{}^{}", f.component + 1, f.beta, f.power))
                .collect();
            vec![i.to_string(), t.coefficient.to_string(), t.alpha.to_string(), factors.join(" "), t.to_string()]
        })
        .collect();
    csv(&["term", "coefficient", "alpha", "factors", "expression"], &rows)
}

pub fn verification_csv(rows: &[VerificationRow]) -> Result<Vec<u8>> {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.pair.to_string(),
                r.n.to_string(),
                r.m.to_string(),
                list(&r.gamma),
                num(r.expansion),
                num(r.finite_difference),
                num(r.relative_error),
                r.passed.to_string(),
            ]
        })
        .collect();
    csv(&["pair", "n", "m", "gamma", "expansion", "finite_difference", "relative_error", "passed"], &body)
}

pub fn faa_di_bruno_verify() -> Result<(Vec<u8>, bool)> {
    let rows = verification_rows();
    Ok((verification_csv(&rows)?, rows.iter().all(|r| r.passed)))
}

#[derive(Serialize)]
struct BandSummary {
    coarse: RatioStats,
    fine: RatioStats,
    endpoint_drift: f64,
}

#[derive(Serialize)]
struct Report {
    seed: u64,
    points: Vec<usize>,
    box_lengths: Vec<f64>,
    s: f64,
    a: Vec<f64>,
    p: Vec<f64>,
    q: f64,
    partition_max_sum_deviation: f64,
    partition_corona_violations: usize,
    local_means_over_f_norm: BandSummary,
    maximal_over_convolution: BandSummary,
    maximal_domination_holds: bool,
    chain_rule_rows: usize,
    chain_rule_worst_relative_error: f64,
    chain_rule_passed: bool,
}

fn summary(c: RatioStats, f: RatioStats) -> BandSummary {
    BandSummary { endpoint_drift: c.endpoint_drift(&f), coarse: c, fine: f }
}

/// One JSON document summarising the main checks at the configured point.
pub fn report(ctx: &Context) -> Result<Vec<u8>> {
    let params = ctx.first();
    let part = build_partition(&params.a, &ctx.spec)?.report();
    let kp = build_kernels(params.a.dim(), 2, 1.0)?;
    let mp = MaximalParams::default_for(params);
    let fam = ctx.family_members()?;
    let mut lm = Vec::new();
    let mut mx = Vec::new();
    let mut dominated = true;
    for spec in [ctx.spec.clone(), ctx.spec.refined()] {
        let sys = build_partition(&params.a, &spec)?;
        let lms = LocalMeansSystem::new(&kp, &sys, params.s)?;
        let us = spectra(&fam, &spec)?;
        let pairs: Vec<(f64, f64)> = us
            .iter()
            .map(|u| Ok((local_means_norm(u, params, &lms)?, f_norm_spectral(u, params, &sys)?.value)))
            .collect::<Result<_>>()?;
        lm.push(RatioStats::from_pairs(pairs));
        let rep = maximal_inequality_experiment(&us, params, &mp, &lms)?;
        dominated &= rep.domination_holds;
        mx.push(rep.maximal_vs_convolution);
    }
    let rows = verification_rows();
    let report = Report {
        seed: ctx.seed,
        points: ctx.spec.points().to_vec(),
        box_lengths: ctx.spec.box_lengths().to_vec(),
        s: params.s,
        a: params.a.weights().to_vec(),
        p: params.pq.p().to_vec(),
        q: params.pq.q(),
        partition_max_sum_deviation: part.max_sum_deviation,
        partition_corona_violations: part.corona_violations,
        local_means_over_f_norm: summary(lm[0], lm[1]),
        maximal_over_convolution: summary(mx[0], mx[1]),
        maximal_domination_holds: dominated,
        chain_rule_rows: rows.len(),
        chain_rule_worst_relative_error: rows.iter().map(|r| r.relative_error).fold(0.0, f64::max),
        chain_rule_passed: rows.iter().all(|r| r.passed),
    };
    let mut out = serde_json::to_vec_pretty(&report).map_err(|e| Error::Format(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}
