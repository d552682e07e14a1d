use anyhow::{anyhow, bail, ensure, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use transdiff::feynman_kac::{
    case_model, compare_with_reference, local_time_identification, reference_expected_pcaf_1d, richardson_check,
    CaseDescriptor, ComparisonReport,
};
use transdiff::geometry::InterfaceKind;
use transdiff::linalg::{self, Matrix};
use transdiff::pde::{discrete_density_aronson, semigroup_identity_suite, Boundary, SemigroupOptions};
use transdiff::quad::{self, Tolerance};
use transdiff::sde::Simulator;
use transdiff::stats::MeanVar;
use transdiff::{CoefficientField, DiscreteOperator, Grid1D, InterfaceGeometry, SimConfig, Skew1DModel};

use crate::config::{
    positive_list, Aronson, CoefficientSpec, DensityCheck, EnsembleDump, Experiment, FkCompare, GeometrySpec,
    Localtime, SimSpec, SpectralSuite,
};
use crate::report::{num, Check, Outcome, Table};

pub fn run(exp: &Experiment) -> Result<Outcome> {
    match exp {
        Experiment::FkCompare(c) => fk_compare(c),
        Experiment::DensityCheck(c) => density_check(c),
        Experiment::SpectralSuite(c) => spectral_suite(c),
        Experiment::Aronson(c) => aronson(c),
        Experiment::Localtime(c) => match c.geometry.dimension() {
            1 => localtime::<1>(c),
            2 => localtime::<2>(c),
            3 => localtime::<3>(c),
            d => bail!("geometry dimension {d} not supported (1 to 3)"),
        },
        Experiment::EnsembleDump(c) => match c.geometry.dimension() {
            1 => ensemble_dump::<1>(c),
            2 => ensemble_dump::<2>(c),
            3 => ensemble_dump::<3>(c),
            d => bail!("geometry dimension {d} not supported (1 to 3)"),
        },
    }
}

fn array<const D: usize>(name: &str, v: &[f64]) -> Result<[f64; D]> {
    v.try_into().map_err(|_| anyhow!("{name} has {} components, expected {D}", v.len()))
}

fn geometry<const D: usize>(spec: &GeometrySpec) -> Result<InterfaceGeometry<D>> {
    Ok(match spec {
        GeometrySpec::Hyperplane { normal, offset } => InterfaceGeometry::hyperplane(array("normal", normal)?, *offset)?,
        GeometrySpec::Sphere { center, radius, plus_inside } => {
            InterfaceGeometry::sphere_oriented(array("center", center)?, *radius, *plus_inside)?
        }
    })
}

fn matrix<const D: usize>(name: &str, m: &[Vec<f64>]) -> Result<Matrix<f64, D>> {
    ensure!(m.len() == D, "{name} has {} rows, expected {D}", m.len());
    let mut out = [[0.0; D]; D];
    for (i, row) in m.iter().enumerate() {
        out[i] = array(name, row)?;
    }
    Ok(out)
}

fn field<const D: usize>(spec: &CoefficientSpec) -> Result<CoefficientField<D>> {
    match spec {
        CoefficientSpec::Diagonal { eps_plus, eps_minus } => Ok(CoefficientField::diagonal(*eps_plus, *eps_minus)?),
        CoefficientSpec::Constant { a_plus, a_minus, lambda, big_lambda } => {
            let f = CoefficientField::constant(matrix("a_plus", a_plus)?, matrix("a_minus", a_minus)?, *lambda, *big_lambda)?;
            let audit = f.audit_ellipticity(&[linalg::zero()])?;
            if !audit.pass {
                bail!(
                    "coefficient matrices violate uniform ellipticity and boundedness: eigenvalues in [{}, {}], declared [{}, {}], asymmetry {}",
                    audit.observed_min,
                    audit.observed_max,
                    lambda,
                    big_lambda,
                    audit.max_asymmetry
                );
            }
            Ok(f)
        }
    }
}

fn sim_config(spec: &SimSpec, seed: u64, horizon: f64) -> SimConfig {
    let mut cfg = SimConfig::new(spec.dt_bulk, spec.layer_halfwidth, horizon, spec.n_paths, seed).with_scheme(spec.scheme);
    if let Some(mode) = spec.local_time_mode {
        cfg = cfg.with_local_time_mode(mode);
    }
    cfg
}

fn required_horizon(spec: &SimSpec) -> Result<f64> {
    spec.horizon.ok_or_else(|| anyhow!("sim.horizon is required for this experiment"))
}

fn fk_compare(c: &FkCompare) -> Result<Outcome> {
    positive_list("case.times", c.case.times())?;
    ensure!(!c.case.probes().is_empty(), "case.probes must not be empty");
    ensure!(c.bias_budget >= 0.0 && c.bias_budget.is_finite(), "bias_budget must be nonnegative and finite");
    let horizon = c.case.times().iter().copied().fold(0.0, f64::max);
    if let Some(h) = c.sim.horizon {
        ensure!(h >= horizon, "sim.horizon {h} is shorter than the latest probe time {horizon}");
    }
    let cfg = sim_config(&c.sim, c.seed, horizon);
    c.case.reference_operator()?;
    match &c.case {
        CaseDescriptor::Line { .. } => fk_compare_in::<1>(c, &cfg),
        CaseDescriptor::Radial { dimension: 2, .. } => fk_compare_in::<2>(c, &cfg),
        CaseDescriptor::Radial { dimension: 3, .. } => fk_compare_in::<3>(c, &cfg),
        CaseDescriptor::Radial { dimension, .. } => bail!("radial dimension {dimension} not supported (2 or 3)"),
    }
}

fn fk_compare_in<const D: usize>(c: &FkCompare, cfg: &SimConfig) -> Result<Outcome> {
    let (field, geom, _) = case_model::<D>(&c.case)?;
    let mut out = Outcome { warnings: Simulator::new(&field, &geom, cfg)?.warnings().to_vec(), ..Outcome::default() };
    let mut table = Table::new(
        "probes.csv",
        &["dt", "probe", "t", "mc_mean", "std_error", "reference", "discrepancy", "tolerance", "pass"],
    );
    let mut record = |rep: &ComparisonReport, dt: f64, out: &mut Outcome| {
        for p in &rep.probes {
            out.checks.push(Check::at_most(format!("dt={dt} probe={} t={}: |MC-FV|", p.probe, p.t), p.discrepancy, p.tolerance));
            table.push(vec![
                num(dt),
                num(p.probe),
                num(p.t),
                num(p.mc.mean),
                num(p.mc.std_error),
                num(p.reference),
                num(p.discrepancy),
                num(p.tolerance),
                p.pass.to_string(),
            ]);
        }
        out.checks.push(Check::zero(format!("dt={dt}: support violations"), rep.support_violations));
        out.checks.push(Check::zero(format!("dt={dt}: monotonicity violations"), rep.monotonicity_violations));
    };
    if c.richardson {
        let r = richardson_check::<D>(&c.case, cfg, c.bias_budget)?;
        record(&r.coarse, cfg.dt_bulk, &mut out);
        record(&r.fine, cfg.dt_bulk / 2.0, &mut out);
        out.checks.push(Check::at_most("systematic part at dt/2", r.fine.systematic_part, r.coarse.systematic_part));
    } else {
        let r = compare_with_reference::<D>(&c.case, cfg, c.bias_budget)?;
        record(&r, cfg.dt_bulk, &mut out);
    }
    out.tables.push(table);
    Ok(out)
}

fn tight() -> Tolerance {
    Tolerance { abs: 1e-13, rel: 1e-12, max_intervals: 8000 }
}

fn density_check(c: &DensityCheck) -> Result<Outcome> {
    let m = Skew1DModel::new(c.eps_plus, c.eps_minus)?;
    positive_list("times", &c.times)?;
    ensure!(!c.starts.is_empty(), "starts must not be empty");
    ensure!(c.starts.iter().all(|x| x.is_finite()), "starts must be finite");
    if let Some(o) = &c.oracle {
        ensure!(o.t > 0.0 && o.dt > 0.0 && o.half_width > 0.0, "oracle t, dt and half_width must be positive");
        Grid1D::uniform(-o.half_width, o.half_width, o.cells, Some(0.0), Boundary::Neumann)?;
    }
    if let Some(s) = &c.sampler {
        ensure!(s.dt > 0.0 && s.draws > 0, "sampler needs positive dt and draws");
    }
    let big = c.eps_plus.max(c.eps_minus);
    let mut out = Outcome::default();
    let (mut norm, mut sym, mut cont, mut flux) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut table = Table::new("density.csv", &["t", "x", "y", "density"]);
    for &t in &c.times {
        for &x in &c.starts {
            let p = |y: f64| m.transition_density(t, x, y);
            let reach = 40.0 * (big * t).sqrt() + 10.0 * x.abs();
            let mut breaks = vec![-reach, -10.0 * x.abs() - 1e-3, 0.0, 10.0 * x.abs() + 1e-3, reach];
            breaks.sort_by(|a, b| a.total_cmp(b));
            let mass = quad::integrate_panels(|y| m.transition_density(t, x, y).unwrap_or(f64::NAN), &breaks, tight())?;
            norm = norm.max((mass - 1.0).abs());
            for &y in &c.starts {
                let (a, b) = (p(y)?, m.transition_density(t, y, x)?);
                if a.max(b) > 0.0 {
                    sym = sym.max((a - b).abs() / a.max(b));
                }
            }
            let (up, down) = (p(1e-300)?, p(-1e-300)?);
            if up > 0.0 {
                cont = cont.max((up - down).abs() / up);
            }
            let d = 1e-5;
            let p0 = p(0.0)?;
            let right = c.eps_plus * (-3.0 * p0 + 4.0 * p(d)? - p(2.0 * d)?) / (2.0 * d);
            let left = c.eps_minus * (3.0 * p0 - 4.0 * p(-d)? + p(-2.0 * d)?) / (2.0 * d);
            let scale = right.abs().max(left.abs()).max(p0 * big / t.sqrt());
            if scale > 0.0 {
                flux = flux.max((right - left).abs() / scale);
            }
            let span = 5.0 * (2.0 * big * t).sqrt() + x.abs();
            for k in 0..=200 {
                let y = -span + 2.0 * span * k as f64 / 200.0;
                table.push(vec![num(t), num(x), num(y), num(p(y)?)]);
            }
        }
    }
    out.checks.push(Check::at_most("normalization", norm, 1e-8));
    out.checks.push(Check::at_most("symmetry (relative)", sym, 1e-10));
    out.checks.push(Check::at_most("interface continuity (relative)", cont, 1e-10));
    out.checks.push(Check::at_most("flux continuity (relative)", flux, 1e-6));
    if c.times.len() >= 2 {
        let (s, t) = (c.times[0], c.times[1]);
        let mut ck = 0.0f64;
        for &x in &c.starts {
            for &y in &c.starts {
                let f = |z: f64| m.transition_density(s, x, z).unwrap_or(f64::NAN) * m.transition_density(t, z, y).unwrap_or(f64::NAN);
                let reach = 40.0 * (big * (s + t)).sqrt() + 10.0 * x.abs().max(y.abs());
                let mut breaks = vec![-reach, 0.0, x, y, reach];
                breaks.sort_by(|a, b| a.total_cmp(b));
                breaks.dedup();
                let lhs = quad::integrate_panels(f, &breaks, tight())?;
                ck = ck.max((lhs - m.transition_density(s + t, x, y)?).abs());
            }
        }
        out.checks.push(Check::at_most("Chapman-Kolmogorov", ck, 1e-6));
    }
    out.tables.push(table);

    if let Some(o) = &c.oracle {
        let g = Grid1D::uniform(-o.half_width, o.half_width, o.cells, Some(0.0), Boundary::Neumann)?;
        let op = DiscreteOperator::assemble_1d(c.eps_plus, c.eps_minus, g)?;
        let e = op.grid().interface_edge().ok_or_else(|| anyhow!("oracle grid has no interface edge"))?;
        let mut u0 = vec![0.0; op.n()];
        let w = c.eps_plus / (c.eps_plus + c.eps_minus);
        u0[e] = w / op.volumes()[e];
        u0[e - 1] = (1.0 - w) / op.volumes()[e - 1];
        let u = op.solve_crank_nicolson(&u0, o.t, o.dt)?;
        let mut sup = 0.0f64;
        let mut oracle = Table::new("oracle.csv", &["y", "density", "finite_volume"]);
        let stride = (op.n() / 2000).max(1);
        for (i, (y, v)) in op.centers().iter().zip(&u).enumerate() {
            let p = m.transition_density(o.t, 0.0, *y)?;
            sup = sup.max((p - v).abs());
            if i % stride == 0 {
                oracle.push(vec![num(*y), num(p), num(*v)]);
            }
        }
        out.checks.push(Check::at_most(format!("sup distance to finite volume at t={}", o.t), sup, o.tolerance));
        out.tables.push(oracle);
    }

    if let Some(s) = &c.sampler {
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        let mut plus = MeanVar::default();
        for _ in 0..s.draws {
            plus.push(f64::from(u8::from(m.sample_step(s.start, s.dt, &mut rng).y > 0.0)));
        }
        let reach = 40.0 * (big * s.dt).sqrt() + 10.0 * s.start.abs();
        let mut breaks = vec![0.0, s.start.max(0.0), reach];
        breaks.dedup();
        let q = quad::integrate_panels(|y| m.transition_density(s.dt, s.start, y).unwrap_or(f64::NAN), &breaks, tight())?;
        out.checks.push(Check::at_most(
            format!("sampler P(y>0) vs quadrature {q:.6}, |freq - q|"),
            (plus.mean - q).abs(),
            3.0 * plus.std_error(),
        ));
    }
    Ok(out)
}

fn line_operator(ep: f64, em: f64, half_width: f64, cells: usize) -> Result<DiscreteOperator> {
    let g = Grid1D::uniform(-half_width, half_width, cells, Some(0.0), Boundary::Neumann)?;
    Ok(DiscreteOperator::assemble_1d(ep, em, g)?)
}

fn spectral_suite(c: &SpectralSuite) -> Result<Outcome> {
    let op = line_operator(c.eps_plus, c.eps_minus, c.grid.half_width, c.grid.cells)?;
    ensure!(c.grid.cells <= 4096, "spectral suite needs cells <= 4096 for the eigendecomposition");
    ensure!(c.n_pairs > 0, "n_pairs must be positive");
    let mut opts = SemigroupOptions { lambda: c.lambda, n_pairs: c.n_pairs, seed: c.seed, ..SemigroupOptions::default() };
    if let Some(l) = c.lambda {
        ensure!(l > 0.0 && l.is_finite(), "lambda must be positive and finite");
    }
    if let Some(s) = &c.s_grid {
        positive_list("s_grid", s)?;
        opts.s_grid = s.clone();
    }
    if let Some(t) = &c.t_list {
        positive_list("t_list", t)?;
        opts.t_list = t.clone();
    }
    let op = op.decompose()?;
    let inv = op.invariants();
    let r = semigroup_identity_suite(&op, &opts)?;
    let mut out = Outcome::default();
    out.checks.push(Check::at_most("operator symmetry defect", inv.symmetry_defect, 1e-12));
    if let Some(rs) = inv.max_row_sum {
        out.checks.push(Check::at_most("max row sum / norm", rs / inv.operator_norm, 1e-12));
    }
    if let Some(me) = inv.min_eigenvalue {
        out.checks.push(Check::at_least("min eigenvalue of -A_h / norm", me / inv.operator_norm, -1e-10));
    }
    out.checks.push(Check::at_most("symmetry (relative)", r.symmetry.value, r.symmetry.tolerance));
    out.checks.push(Check::at_least("fundamental estimate margin", r.fundamental_margin.value, 0.0));
    out.checks.push(Check::at_least("direct gradient bound margin", r.direct_margin, 0.0));
    out.checks.push(Check::at_least("ellipticity link margin", r.ellipticity_link_margin, 0.0));
    out.checks.push(Check::at_least("energy decay margin", r.energy_decay_margin, 0.0));
    out.checks.push(Check::at_most("integrated identity residual", r.integrated_residual.value, r.integrated_residual.tolerance));
    out.checks.push(Check::at_most("derivative identity excess", r.derivative_excess.value, r.derivative_excess.tolerance));
    let mut table = Table::new("spectrum.csv", &["k", "gamma"]);
    for (k, g) in op.spectrum()?.values.iter().enumerate() {
        table.push(vec![k.to_string(), num(*g)]);
    }
    out.tables.push(table);
    Ok(out)
}

fn aronson(c: &Aronson) -> Result<Outcome> {
    ensure!(!c.coefficients.is_empty(), "coefficients must list at least one (eps_plus, eps_minus) pair");
    positive_list("times", &c.times)?;
    ensure!(c.grid.cells <= 4096, "aronson check needs cells <= 4096 for the eigendecomposition");
    let ops = c
        .coefficients
        .iter()
        .map(|&(ep, em)| line_operator(ep, em, c.grid.half_width, c.grid.cells))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Outcome::default();
    let mut table = Table::new("aronson.csv", &["eps_plus", "eps_minus", "t", "fitted_m", "min_kernel", "symmetry_defect", "pairs"]);
    for (op, &(ep, em)) in ops.into_iter().zip(&c.coefficients) {
        let op = op.decompose()?;
        let r = discrete_density_aronson(&op, &c.times)?;
        let tag = format!("eps=({ep},{em})");
        for row in &r.rows {
            out.checks.push(Check::at_least(format!("{tag} t={}: fitted M", row.t), row.fitted_m, 1.0));
            out.checks.push(Check::at_least(format!("{tag} t={}: min interior kernel", row.t), row.min_kernel, f64::MIN_POSITIVE));
            out.checks.push(Check::at_most(format!("{tag} t={}: kernel symmetry defect", row.t), row.max_symmetry_defect, 1e-10));
            table.push(vec![num(ep), num(em), num(row.t), num(row.fitted_m), num(row.min_kernel), num(row.max_symmetry_defect), row.pairs.to_string()]);
        }
        let finite = r.rows.iter().all(|row| row.fitted_m.is_finite());
        out.checks.push(Check::at_most(format!("{tag}: M spread max/min"), if finite { r.stability.value } else { f64::INFINITY }, 2.0));
    }
    out.tables.push(table);
    Ok(out)
}

fn localtime<const D: usize>(c: &Localtime) -> Result<Outcome> {
    let geom = geometry::<D>(&c.geometry)?;
    let field = field::<D>(&c.coefficients)?;
    ensure!(field.diagonal_constants().is_some(), "localtime needs diagonal coefficients");
    let x0 = array::<D>("x0", &c.x0)?;
    positive_list("layer_halfwidths", &c.layer_halfwidths)?;
    let horizon = required_horizon(&c.sim)?;
    let cfg = sim_config(&c.sim, c.seed, horizon);
    let mut warnings = Vec::new();
    for &h in &c.layer_halfwidths {
        let mut probe = cfg.clone();
        probe.layer_halfwidth = h;
        warnings.extend(Simulator::new(&field, &geom, &probe)?.warnings().iter().cloned());
    }
    let reference = match (&c.reference, geom.kind()) {
        (None, _) => None,
        (Some(g), InterfaceKind::Hyperplane { offset, normal }) if D == 1 && *offset == 0.0 => {
            let (ep, em) = field.diagonal_constants().unwrap_or((1.0, 1.0));
            // orient the line so that D₊ is x > 0
            let x = x0[0] * normal[0];
            Some(reference_expected_pcaf_1d(ep, em, x, horizon, g.half_width, g.cells)?)
        }
        (Some(_), _) => bail!("reference needs a 1D hyperplane interface at the origin"),
    };
    let r = local_time_identification(&x0, &field, &geom, &cfg, &c.layer_halfwidths, reference)?;
    let mut out = Outcome { warnings, ..Outcome::default() };
    let mut table = Table::new(
        "localtime.csv",
        &["layer_halfwidth", "skew_step_mean", "skew_step_se", "occupation_mean", "occupation_se", "relative_difference", "paths_with_positive_k"],
    );
    for l in &r.levels {
        let h = l.layer_halfwidth;
        out.checks.push(Check::at_most(format!("h={h}: |skew - occupation| / skew"), l.relative_difference, c.agreement));
        out.checks.push(Check::zero(format!("h={h}: support violations"), l.support_violations));
        out.checks.push(Check::zero(format!("h={h}: monotonicity violations"), l.monotonicity_violations));
        table.push(vec![
            num(h),
            num(l.skew_step.mean),
            num(l.skew_step.std_error),
            num(l.occupation.mean),
            num(l.occupation.std_error),
            num(l.relative_difference),
            l.paths_with_positive_k.to_string(),
        ]);
    }
    for (i, (s, o)) in r.skew_step_trend.iter().zip(&r.occupation_trend).enumerate() {
        let (a, b) = (c.layer_halfwidths[i], c.layer_halfwidths[i + 1]);
        out.checks.push(Check::at_most(format!("skew_step change h={a}->{b}"), *s, c.trend));
        out.checks.push(Check::at_most(format!("occupation change h={a}->{b}"), *o, c.trend));
    }
    if let (Some(re), Some(last)) = (reference, r.levels.last()) {
        let rel = (last.skew_step.mean - re).abs() / re.abs().max(f64::MIN_POSITIVE);
        out.checks.push(Check::at_most(format!("skew_step vs finite-volume E[K_T] = {re:.6}"), rel, c.agreement));
    }
    out.tables.push(table);
    Ok(out)
}

fn ensemble_dump<const D: usize>(c: &EnsembleDump) -> Result<Outcome> {
    let geom = geometry::<D>(&c.geometry)?;
    let field = field::<D>(&c.coefficients)?;
    let x0 = array::<D>("x0", &c.x0)?;
    let horizon = required_horizon(&c.sim)?;
    let mut cfg = sim_config(&c.sim, c.seed, horizon);
    cfg.record_positions = c.trace;
    let sim = Simulator::new(&field, &geom, &cfg)?;
    let trs = sim.run_paths(&x0, |_, tr| tr)?;
    let mut out = Outcome { warnings: sim.warnings().to_vec(), ..Outcome::default() };
    let coords: Vec<String> = (1..=D).map(|k| format!("x{k}")).collect();
    let mut header: Vec<&str> = vec!["path"];
    header.extend(coords.iter().map(String::as_str));
    header.extend(["k", "k_skew_step", "k_occupation", "occupation_plus", "occupation_minus", "occupation_layer"]);
    let mut terminals = Table::new("terminals.csv", &header);
    let mut trace_header: Vec<&str> = vec!["path", "t"];
    trace_header.extend(coords.iter().map(String::as_str));
    trace_header.push("k");
    let mut traces = Table::new("traces.csv", &trace_header);
    let (mut sv, mut mv, mut occ_dev) = (0u64, 0u64, 0.0f64);
    for (i, tr) in trs.iter().enumerate() {
        sv += tr.support_violations;
        mv += tr.monotonicity_violations;
        occ_dev = occ_dev.max((tr.occupation_plus + tr.occupation_minus + tr.occupation_layer - horizon).abs());
        let mut row = vec![i.to_string()];
        row.extend(tr.terminal.iter().map(|v| num(*v)));
        row.extend([tr.k, tr.k_skew_step, tr.k_occupation, tr.occupation_plus, tr.occupation_minus, tr.occupation_layer].map(num));
        terminals.push(row);
        for (t, x, k) in &tr.positions {
            let mut row = vec![i.to_string(), num(*t)];
            row.extend(x.iter().map(|v| num(*v)));
            row.push(num(*k));
            traces.push(row);
        }
    }
    out.checks.push(Check::zero("support violations", sv));
    out.checks.push(Check::zero("monotonicity violations", mv));
    out.checks.push(Check::at_most("occupation identity deviation", occ_dev, 1e-12 * horizon));
    out.tables.push(terminals);
    if c.trace {
        out.tables.push(traces);
    }
    Ok(out)
}
