use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::svg::{Panel, Series, SvgDoc};
use super::*;
use crate::clf::{synthesize, ClfCertificate, Synthesis};
use crate::hj::{solve_with, AffineDynamics2, BrsOptions, BrsSolution, Freeze, HjDynamics, QuantifierOrder, ValueGrid};
use crate::plants::quadcopter::Quadcopter;
use crate::plants::quadruped::{axis_uncertainty, Load, QuadrupedNominal, QuadrupedPlant};
use crate::plants::sim::{simulate, AncillaryBlock, InvariantStats, Trajectory};
use crate::roa::{find_wmax, SafeRegion, WmaxReport};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(io_err(&path))?;
    Ok(path)
}

fn say(log: &mut dyn Write, text: &str) -> Result<()> {
    log.write_all(text.as_bytes()).map_err(|source| HarnessError::Io {
        path: "<output>".into(),
        source,
    })
}

fn rows(m: &crate::matrixkit::DenseMatrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

// ---------------------------------------------------------------- synthesis

#[derive(Debug, Clone)]
pub struct BlockSynthesis {
    pub name: String,
    pub synthesis: Synthesis,
}

pub fn synth(sc: &Scenario) -> Result<Vec<BlockSynthesis>> {
    sc.ancillary
        .iter()
        .map(|a| {
            let model = sc.linear_model(a)?;
            let synthesis = synthesize(&model, &a.clf).map_err(|source| HarnessError::Synthesis {
                block: a.name.clone(),
                source,
            })?;
            Ok(BlockSynthesis {
                name: a.name.clone(),
                synthesis,
            })
        })
        .collect()
}

/// Plain-text certificate file (TOML).
#[derive(Debug, Clone, Serialize)]
pub struct CertificateFile {
    pub block: String,
    pub q: Vec<f64>,
    pub r: Vec<f64>,
    pub lambda: f64,
    pub mu: f64,
    pub k: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    pub block_max_eig: f64,
    pub certificate_max_eig: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub roa_level: Option<f64>,
}

impl CertificateFile {
    pub fn new(name: &str, s: &Synthesis, cert: &ClfCertificate) -> Self {
        Self {
            block: name.to_string(),
            q: cert.params.q.clone(),
            r: cert.params.r.clone(),
            lambda: cert.params.lambda,
            mu: cert.params.mu,
            k: rows(&cert.k),
            p: rows(&cert.p),
            block_max_eig: s.block_max_eig,
            certificate_max_eig: s.certificate_max_eig,
            w_max: cert.w_max,
            roa_level: cert.w_max.map(|_| cert.roa_level),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("certificate serializes")
    }
}

pub fn cmd_synth(sc: &Scenario, out: &Path, log: &mut dyn Write) -> Result<Vec<BlockSynthesis>> {
    let blocks = synth(sc)?;
    if blocks.is_empty() {
        return Err(HarnessError::Config("scenario has no ancillary blocks".into()));
    }
    for b in &blocks {
        let s = &b.synthesis;
        let file = CertificateFile::new(&b.name, s, &s.certificate);
        let text = file.to_toml();
        let path = write_file(out, &format!("certificate_{}.toml", b.name), &text)?;
        let mut msg = format!("[synth.{}]\nstatus = \"{:?}\"\n", b.name, s.solution.status);
        let _ = writeln!(msg, "block_max_eig = {:.6e}", s.block_max_eig);
        let _ = writeln!(msg, "certificate_max_eig = {:.6e}", s.certificate_max_eig);
        let _ = writeln!(msg, "K = {:?}", file.k);
        let _ = writeln!(msg, "P = {:?}", file.p);
        let _ = writeln!(msg, "file = {:?}\n", path.display().to_string());
        say(log, &msg)?;
    }
    Ok(blocks)
}

// ------------------------------------------------------------ reachability

#[derive(Debug, Clone)]
pub struct BlockReach {
    pub name: String,
    pub solution: BrsSolution,
    pub safe: SafeRegion,
}

fn hj_dynamics(sc: &Scenario, a: &AncillaryConfig, hj: &HjConfig) -> Box<dyn HjDynamics> {
    match (&hj.dynamics, &sc.plant) {
        (HjDynamicsConfig::DoubleIntegrator { u_max }, _) => Box::new(AffineDynamics2::double_integrator(*u_max)),
        (HjDynamicsConfig::MassAxis { force_max, delta_m }, PlantConfig::Quadruped { params, load }) => {
            let mut p = *params;
            if let Some(dm) = delta_m.or(load.mass) {
                p.delta_m = dm;
            }
            let vertical = a.subsystem == Subsystem::Z;
            let pushing = load.kind == LoadKind::Push;
            Box::new(axis_uncertainty(&p, vertical, pushing, *force_max))
        }
        _ => unreachable!("validated scenario"),
    }
}

pub fn reach_block(sc: &Scenario, a: &AncillaryConfig) -> Result<Option<BlockReach>> {
    let Some(hj) = &a.hj else { return Ok(None) };
    let dyn_ = hj_dynamics(sc, a, hj);
    let opts = BrsOptions {
        mode: QuantifierOrder::ControlMinimizes,
        freeze: match hj.solve {
            SolveKind::Reach => Freeze::Reach,
            SolveKind::Invariance => Freeze::Invariance,
        },
        stencil: hj.stencil,
        dt: None,
    };
    let hj_err = |source| HarnessError::Hj {
        block: a.name.clone(),
        source,
    };
    let solution = solve_with(&hj.grid, &hj.target, dyn_.as_ref(), hj.horizon, opts, |_| {}).map_err(hj_err)?;
    let safe = SafeRegion::new(solution.value.clone(), &hj.target).map_err(|source| HarnessError::Roa {
        block: a.name.clone(),
        source,
    })?;
    Ok(Some(BlockReach {
        name: a.name.clone(),
        solution,
        safe,
    }))
}

pub fn cmd_hj_brs(sc: &Scenario, out: &Path, log: &mut dyn Write) -> Result<Vec<BlockReach>> {
    let mut all = Vec::new();
    for a in &sc.ancillary {
        if let Some(r) = reach_block(sc, a)? {
            let path = write_file(out, &format!("value_{}.csv", r.name), &r.solution.value.to_csv_string())?;
            let inside = r
                .safe
                .value
                .v
                .iter()
                .zip(&r.safe.target.v)
                .filter(|(v, l)| v.max(**l) <= 0.0)
                .count();
            let msg = format!(
                "[hj.{}]\nsteps = {}\ndt = {:.6e}\nfinal_time = {:.6}\nconverged = {}\nsafe_nodes = {}\ntotal_nodes = {}\nfile = {:?}\n\n",
                r.name,
                r.solution.steps,
                r.solution.dt,
                r.solution.value.time,
                r.solution.converged,
                inside,
                r.safe.value.v.len(),
                path.display().to_string()
            );
            say(log, &msg)?;
            all.push(r);
        }
    }
    if all.is_empty() {
        return Err(HarnessError::Config("no block has an hj section".into()));
    }
    Ok(all)
}

// -------------------------------------------------------------------- w_max

#[derive(Debug, Clone)]
pub struct BlockWmax {
    pub name: String,
    pub synthesis: Synthesis,
    /// Certificate with `w_max` and the invariant level filled in.
    pub certificate: ClfCertificate,
    pub report: Option<WmaxReport>,
    pub value: Option<ValueGrid>,
}

pub fn wmax(sc: &Scenario) -> Result<Vec<BlockWmax>> {
    let synths = synth(sc)?;
    sc.ancillary
        .iter()
        .zip(synths)
        .map(|(a, s)| {
            let mut cert = s.synthesis.certificate.clone();
            let (report, value) = if let Some(w) = a.w_max {
                cert.set_w_max(w);
                (None, None)
            } else {
                let r = reach_block(sc, a)?.expect("hj section present");
                let opts = a.hj.as_ref().map(|h| h.wmax).unwrap_or_default();
                let rep = find_wmax(&mut cert, &r.safe, opts).map_err(|source| match source {
                    RoaError::NoSafeRoa => HarnessError::NoSafeRoa {
                        block: a.name.clone(),
                        source,
                    },
                    source => HarnessError::Roa {
                        block: a.name.clone(),
                        source,
                    },
                })?;
                (Some(rep), Some(r.safe.value))
            };
            Ok(BlockWmax {
                name: a.name.clone(),
                synthesis: s.synthesis,
                certificate: cert,
                report,
                value,
            })
        })
        .collect()
}

pub fn cmd_wmax(sc: &Scenario, out: &Path, log: &mut dyn Write) -> Result<Vec<BlockWmax>> {
    let all = wmax(sc)?;
    if all.is_empty() {
        return Err(HarnessError::Config("scenario has no ancillary blocks".into()));
    }
    for b in &all {
        let file = CertificateFile::new(&b.name, &b.synthesis, &b.certificate);
        write_file(out, &format!("certificate_{}.toml", b.name), &file.to_toml())?;
        let mut msg = format!("[wmax.{}]\n", b.name);
        match &b.report {
            Some(r) => {
                msg.push_str("source = \"reachability\"\n");
                msg.push_str(&r.to_string());
            }
            None => {
                msg.push_str("source = \"fixed\"\n");
                let _ = writeln!(msg, "w_max = {:.6}", b.certificate.w_max.unwrap_or(f64::NAN));
                let _ = writeln!(msg, "roa_level = {:.6}", b.certificate.roa_level);
            }
        }
        if let Some(v) = &b.value {
            let path = write_file(out, &format!("value_{}.csv", b.name), &v.to_csv_string())?;
            let _ = writeln!(msg, "value_file = {:?}", path.display().to_string());
        }
        msg.push('\n');
        say(log, &msg)?;
    }
    Ok(all)
}

pub fn ancillary_blocks(sc: &Scenario, w: &[BlockWmax]) -> Vec<AncillaryBlock> {
    sc.ancillary
        .iter()
        .zip(w)
        .map(|(a, b)| AncillaryBlock::from_certificate(&a.name, a.states.clone(), a.controls.clone(), &b.certificate))
        .collect()
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, Serialize)]
pub struct BlockMetrics {
    pub name: String,
    pub roa_level: f64,
    pub exits: usize,
    pub live_exits: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entry_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_exit_time: Option<f64>,
    pub max_ratio_after_entry: f64,
    pub fraction_outside: f64,
    /// Half-widths of the box enclosing the invariant ellipsoid, per state.
    pub bands: Vec<f64>,
    /// Samples where some block error lies outside its band.
    pub band_violations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Metrics {
    pub scenario: String,
    pub mode: ControllerMode,
    pub samples: usize,
    pub final_time: f64,
    pub diverged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stopped: Option<String>,
    pub rms_error: Vec<f64>,
    pub max_abs_error: Vec<f64>,
    pub mpc_clamped: usize,
    pub blocks: Vec<BlockMetrics>,
}

impl Metrics {
    pub fn from_run(sc: &Scenario, mode: ControllerMode, tr: &Trajectory, blocks: &[AncillaryBlock]) -> Result<Self> {
        let n = sc.dims().0;
        let mut out = Vec::new();
        for (b, blk) in blocks.iter().enumerate() {
            let InvariantStats {
                entry_time,
                first_exit_time,
                exits,
                max_ratio_after_entry,
                fraction_outside,
            } = tr.invariant_stats(b);
            let bands = blk.error_bands()?;
            let band_violations = tr
                .states
                .iter()
                .zip(&tr.anchors)
                .filter(|(x, xb)| blk.error(x, xb).iter().zip(&bands).any(|(e, w)| e.abs() > *w))
                .count();
            out.push(BlockMetrics {
                name: blk.name.clone(),
                roa_level: blk.level,
                exits,
                live_exits: tr.live_exits[b],
                entry_time,
                first_exit_time,
                max_ratio_after_entry,
                fraction_outside,
                bands,
                band_violations,
            });
        }
        Ok(Self {
            scenario: sc.name.clone(),
            mode,
            samples: tr.len(),
            final_time: tr.times.last().copied().unwrap_or(0.0),
            diverged: tr.diverged,
            stopped: tr.stopped.clone(),
            rms_error: (0..n).map(|i| tr.rms_error(i, 0.0)).collect(),
            max_abs_error: (0..n).map(|i| tr.max_abs_error(i, 0.0)).collect(),
            mpc_clamped: tr.mpc_clamped,
            blocks: out,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("metrics serialize")
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub mode: ControllerMode,
    pub trajectory: Trajectory,
    pub metrics: Metrics,
}

/// Closed-loop run with already computed ancillary blocks.
pub fn run_mode(sc: &Scenario, mode: ControllerMode, blocks: &[AncillaryBlock]) -> Result<RunOutput> {
    let reference = sc.reference_fn();
    let mut x0 = reference(0.0).x;
    if let Some(off) = &sc.initial_offset {
        for (x, o) in x0.iter_mut().zip(off) {
            *x += o;
        }
    }
    let mut cfg = sc.sim.clone();
    cfg.mode = mode;
    let policy = sc.disturbance_policy();
    let trajectory = match &sc.plant {
        PlantConfig::Quadcopter { params } => {
            let mut plant = Quadcopter { params: *params };
            simulate(
                &mut plant,
                &Quadcopter { params: *params },
                &sc.mpc,
                &reference,
                blocks,
                &policy,
                &cfg,
                &x0,
            )?
        }
        PlantConfig::Quadruped { params, load } => {
            let mass = load.mass.unwrap_or(params.delta_m);
            let load = match load.kind {
                LoadKind::None => Load::none(),
                LoadKind::Carry => Load::carry(mass),
                LoadKind::Push => Load::push(mass, params),
            };
            let mut plant = QuadrupedPlant::new(*params, load, x0[0]);
            let model = QuadrupedNominal { params: *params };
            simulate(&mut plant, &model, &sc.mpc, &reference, blocks, &policy, &cfg, &x0)?
        }
    };
    let metrics = Metrics::from_run(sc, mode, &trajectory, blocks)?;
    Ok(RunOutput {
        mode,
        trajectory,
        metrics,
    })
}

fn mode_name(mode: ControllerMode) -> &'static str {
    match mode {
        ControllerMode::Nominal => "nominal",
        ControllerMode::Robust => "robust",
    }
}

fn write_run(sc: &Scenario, run: &RunOutput, blocks: &[AncillaryBlock], out: &Path, log: &mut dyn Write) -> Result<()> {
    let tag = mode_name(run.mode);
    let tr = &run.trajectory;
    let csv = write_file(out, &format!("trajectory_{tag}.csv"), &tr.to_csv_string())?;
    write_file(
        out,
        &format!("trajectory_{tag}.svg"),
        &trajectory_svg(sc, tr, blocks, tag),
    )?;
    write_file(out, &format!("errors_{tag}.svg"), &errors_svg(&[run], blocks, tag)?)?;
    let metrics = run.metrics.to_toml();
    write_file(out, &format!("metrics_{tag}.toml"), &metrics)?;
    say(
        log,
        &format!("# {}\n{metrics}csv = {:?}\n\n", sc.name, csv.display().to_string()),
    )
}

pub fn cmd_simulate(sc: &Scenario, out: &Path, log: &mut dyn Write) -> Result<RunOutput> {
    let (blocks, _) = prepare_blocks(sc, sc.mode)?;
    let run = run_mode(sc, sc.mode, &blocks)?;
    write_run(sc, &run, &blocks, out, log)?;
    Ok(run)
}

/// Nominal runs skip synthesis when there is nothing to certify against;
/// otherwise the blocks are built so that `E(e)` is still logged.
fn prepare_blocks(sc: &Scenario, mode: ControllerMode) -> Result<(Vec<AncillaryBlock>, Vec<BlockWmax>)> {
    if sc.ancillary.is_empty() {
        if mode == ControllerMode::Robust {
            return Err(HarnessError::Config(
                "robust mode needs at least one ancillary block".into(),
            ));
        }
        return Ok((Vec::new(), Vec::new()));
    }
    let w = wmax(sc)?;
    Ok((ancillary_blocks(sc, &w), w))
}

#[derive(Debug, Clone)]
pub struct Reproduction {
    pub figure: Figure,
    pub blocks: Vec<AncillaryBlock>,
    pub wmax: Vec<BlockWmax>,
    pub nominal: RunOutput,
    pub robust: RunOutput,
}

/// Runs the bundled scenario of a figure in both controller modes.
pub fn reproduce(figure: Figure, seed: Option<u64>) -> Result<Reproduction> {
    let mut sc = figure.scenario();
    if let Some(s) = seed {
        sc.seed = s;
    }
    let (blocks, wmax) = prepare_blocks(&sc, ControllerMode::Robust)?;
    let (nominal, robust) = std::thread::scope(|s| {
        let nom = s.spawn(|| run_mode(&sc, ControllerMode::Nominal, &blocks));
        let rob = run_mode(&sc, ControllerMode::Robust, &blocks);
        (nom.join().expect("simulation thread panicked"), rob)
    });
    Ok(Reproduction {
        figure,
        blocks,
        wmax,
        nominal: nominal?,
        robust: robust?,
    })
}

pub fn cmd_reproduce(figure: Figure, seed: Option<u64>, out: &Path, log: &mut dyn Write) -> Result<Reproduction> {
    let rep = reproduce(figure, seed)?;
    let mut sc = figure.scenario();
    if let Some(s) = seed {
        sc.seed = s;
    }
    let dir = out.join(figure.id());
    write_file(&dir, "scenario.toml", figure.config_text())?;
    for b in &rep.wmax {
        let file = CertificateFile::new(&b.name, &b.synthesis, &b.certificate);
        write_file(&dir, &format!("certificate_{}.toml", b.name), &file.to_toml())?;
        if let Some(v) = &b.value {
            write_file(&dir, &format!("value_{}.csv", b.name), &v.to_csv_string())?;
        }
    }
    for run in [&rep.nominal, &rep.robust] {
        write_run(&sc, run, &rep.blocks, &dir, log)?;
    }
    write_file(
        &dir,
        "comparison.svg",
        &errors_svg(&[&rep.nominal, &rep.robust], &rep.blocks, "nominal vs robust")?,
    )?;
    Ok(rep)
}

// -------------------------------------------------------------------- csv

/// Re-derives per-block exit counts from a trajectory CSV: pairs of columns
/// `E*` / `roa_level*`, counting crossings above the level after first
/// entry.
pub fn exits_from_csv(csv: &str) -> Result<Vec<(String, usize)>> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| HarnessError::Config("empty CSV".into()))?
        .split(',')
        .collect();
    let pairs: Vec<(String, usize, usize)> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| **h == "E" || h.starts_with("E_"))
        .map(|(i, h)| {
            let suffix = h.strip_prefix('E').unwrap_or("");
            let level = header
                .iter()
                .position(|c| *c == format!("roa_level{suffix}"))
                .unwrap_or(i + 1);
            let name = suffix.strip_prefix('_').unwrap_or("E").to_string();
            (name, i, level)
        })
        .collect();
    let mut counts = vec![0usize; pairs.len()];
    let mut inside = vec![None::<bool>; pairs.len()];
    for line in lines {
        let cells: Vec<f64> = line
            .split(',')
            .map(|c| {
                c.parse::<f64>()
                    .map_err(|e| HarnessError::Config(format!("bad CSV cell {c:?}: {e}")))
            })
            .collect::<Result<_>>()?;
        for (k, (_, ei, li)) in pairs.iter().enumerate() {
            let now = cells[*ei] <= cells[*li];
            if inside[k] == Some(true) && !now {
                counts[k] += 1;
            }
            if inside[k].is_some() || now {
                inside[k] = Some(now);
            }
        }
    }
    Ok(pairs.into_iter().zip(counts).map(|((n, _, _), c)| (n, c)).collect())
}

// -------------------------------------------------------------------- plots

const STATE_NAMES: [&str; 6] = ["y", "z", "phi", "y_dot", "z_dot", "phi_dot"];

fn thin<T: Copy>(v: impl Iterator<Item = T>, len: usize) -> Vec<T> {
    let stride = (len / 1500).max(1);
    v.step_by(stride).collect()
}

fn trajectory_svg(sc: &Scenario, tr: &Trajectory, blocks: &[AncillaryBlock], tag: &str) -> String {
    let mut doc = SvgDoc::new(format!("{} ({tag})", sc.name));
    if let PlantConfig::Quadcopter { .. } = sc.plant {
        let path = |rows: &Vec<Vec<f64>>| thin(rows.iter().map(|x| (x[0], x[1])), rows.len());
        doc.push(Panel {
            title: "path".into(),
            x_label: "y [m]".into(),
            y_label: "z [m]".into(),
            series: vec![
                Series::dashed("reference", "#555555", path(&tr.refs)),
                Series::solid("actual", "#1f77b4", path(&tr.states)),
            ],
            equal_aspect: true,
            y_range: None,
        });
    }
    let mut shown: Vec<usize> = blocks.iter().flat_map(|b| b.states.iter().copied()).collect();
    if shown.is_empty() {
        shown = (0..tr.states.first().map_or(0, Vec::len)).collect();
    }
    for i in shown {
        let series = |rows: &Vec<Vec<f64>>| thin(tr.times.iter().zip(rows).map(|(t, x)| (*t, x[i])), tr.len());
        doc.push(Panel {
            title: STATE_NAMES.get(i).copied().unwrap_or("x").to_string(),
            x_label: "t [s]".into(),
            y_label: STATE_NAMES.get(i).copied().unwrap_or("x").to_string(),
            series: vec![
                Series::dashed("reference", "#555555", series(&tr.refs)),
                Series::solid("actual", "#1f77b4", series(&tr.states)),
            ],
            equal_aspect: false,
            y_range: None,
        });
    }
    doc.render()
}

fn errors_svg(runs: &[&RunOutput], blocks: &[AncillaryBlock], title: &str) -> Result<String> {
    let colors = ["#d62728", "#1f77b4"];
    let mut doc = SvgDoc::new(format!("tracking error vs invariant band ({title})"));
    for blk in blocks {
        let bands = blk.error_bands()?;
        for (k, &i) in blk.states.iter().enumerate() {
            let mut series = Vec::new();
            let t_end = runs
                .iter()
                .filter_map(|r| r.trajectory.times.last())
                .fold(0.0_f64, |a, b| a.max(*b));
            for (r, run) in runs.iter().enumerate() {
                let tr = &run.trajectory;
                let pts = thin(
                    tr.times
                        .iter()
                        .zip(tr.states.iter().zip(&tr.anchors))
                        .map(|(t, (x, xb))| (*t, x[i] - xb[i])),
                    tr.len(),
                );
                series.push(Series::solid(mode_name(run.mode), colors[r % 2], pts));
            }
            series.push(Series::dashed(
                "band",
                "#2ca02c",
                vec![(0.0, bands[k]), (t_end, bands[k])],
            ));
            series.push(Series::dashed(
                "",
                "#2ca02c",
                vec![(0.0, -bands[k]), (t_end, -bands[k])],
            ));
            let name = STATE_NAMES.get(i).copied().unwrap_or("x");
            doc.push(Panel {
                title: format!("{} error, block {}", name, blk.name),
                x_label: "t [s]".into(),
                y_label: format!("e_{name}"),
                series,
                equal_aspect: false,
                y_range: Some([-2.5 * bands[k], 2.5 * bands[k]]),
            });
        }
        let b = blocks.iter().position(|x| x.name == blk.name).unwrap_or(0);
        let mut series = Vec::new();
        for (r, run) in runs.iter().enumerate() {
            let tr = &run.trajectory;
            let pts = thin(
                tr.times.iter().zip(&tr.energies[b]).map(|(t, e)| (*t, e / blk.level)),
                tr.len(),
            );
            series.push(Series::solid(mode_name(run.mode), colors[r % 2], pts));
        }
        let t_end = runs
            .iter()
            .filter_map(|r| r.trajectory.times.last())
            .fold(0.0_f64, |a, b| a.max(*b));
        series.push(Series::dashed("E = c", "#2ca02c", vec![(0.0, 1.0), (t_end, 1.0)]));
        doc.push(Panel {
            title: format!("E(e) / c, block {}", blk.name),
            x_label: "t [s]".into(),
            y_label: "E / c".into(),
            series,
            equal_aspect: false,
            y_range: Some([0.0, 2.5]),
        });
    }
    Ok(doc.render())
}
