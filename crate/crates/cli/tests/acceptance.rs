//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line. API-level criteria go through gridflux-core; the
//! scenario, performance, and determinism criteria drive the compiled
//! binary end to end.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gridflux_core::acgrid::{
    emit_branch, emit_cpl, emit_machine, emit_slack, cpl_ammeters, BranchSpec, BusPair, CplSpec,
    MachineSpec, SlackSpec,
};
use gridflux_core::hvdc::{
    emit_hvdc, hvdc_signals, inverter_algebra, rectifier_algebra, HvdcControlParams, HvdcParams,
    CONVERSION_FACTOR,
};
use gridflux_core::solver::{
    bdf1_step, dc_operating_point, newton_solve, run_transient, SolverOptions, SystemState,
};
use gridflux_core::{
    build_layout, elaborate, parse_netlist, stamp_all, DaeSystem, NetlistDocument,
};

fn repo_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn compile_doc(doc: &NetlistDocument) -> DaeSystem {
    let flat = elaborate(doc).unwrap();
    let layout = build_layout(&flat).unwrap();
    stamp_all(&flat, &layout).unwrap()
}

fn compile_file(rel: &str) -> DaeSystem {
    let text = fs::read_to_string(repo_path(rel)).unwrap();
    compile_doc(&parse_netlist(&text).unwrap())
}

fn tight_opts() -> SolverOptions {
    SolverOptions {
        rel_tol: 1e-9,
        abs_tol: 1e-9,
        newton_tol: 1e-9,
        ..Default::default()
    }
}

fn pass(n: u32, what: &str) {
    println!("criterion {n}: PASS - {what}");
}

/// Dense Gaussian elimination with partial pivoting; the independent oracle
/// for the linear MNA criterion.
fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    x
}

/// Criterion 1: the linear two-conductance divider solves exactly in one
/// Newton iteration, against an independent dense solve, in under 1 ms.
#[test]
fn criterion_1_linear_mna_oracle() {
    let sys = compile_file("netlists/fig1.cir");
    let zero = DVector::zeros(3);

    // Hand-assembled coefficient matrix of the 3x3 nodal system.
    let oracle = gauss_solve(
        vec![
            vec![1.0, -1.0, 1.0],
            vec![-1.0, 2.0, 0.0],
            vec![1.0, 0.0, 0.0],
        ],
        vec![0.0, 0.0, 1.0],
    );

    let started = Instant::now();
    let (x, iters) =
        newton_solve(&sys, &zero, 0.0, 0.0, &zero, &SolverOptions::default()).unwrap();
    let elapsed = started.elapsed();

    assert_eq!(iters, 1, "expected exactly one Newton iteration");
    for (i, expect) in oracle.iter().enumerate() {
        assert!(
            (x[i] - expect).abs() <= 1e-12,
            "x[{i}] = {} vs oracle {expect}",
            x[i]
        );
    }
    assert!((x[0] - 1.0).abs() <= 1e-12);
    assert!((x[1] - 0.5).abs() <= 1e-12);
    assert!((x[2] + 0.5).abs() <= 1e-12);
    assert!(
        elapsed.as_secs_f64() < 1e-3,
        "solve took {:?}",
        elapsed
    );
    pass(1, &format!("(1, 0.5, -0.5) in 1 iteration, {elapsed:?}"));
}

/// Criterion 2: backward Euler matches the closed-form recurrence
/// (1+h)^-n to 1e-9 and its error against e^-t halves with h.
#[test]
fn criterion_2_bdf1_order() {
    let sys = compile_file("netlists/rc.cir");
    let opts = SolverOptions::default();
    let started = Instant::now();

    let mut max_errors = Vec::new();
    for &h in &[0.1f64, 0.05, 0.025] {
        let steps = (1.0 / h).round() as usize;
        let mut state = SystemState::new(0.0, DVector::from_vec(vec![1.0]));
        let mut recurrence = 1.0;
        let mut max_err: f64 = 0.0;
        for k in 1..=steps {
            state = bdf1_step(&sys, &state, h, &opts).unwrap();
            recurrence /= 1.0 + h;
            assert!(
                (state.x[0] - recurrence).abs() <= 1e-9,
                "h={h} step {k}: {} vs recurrence {recurrence}",
                state.x[0]
            );
            max_err = max_err.max((state.x[0] - (-(k as f64) * h).exp()).abs());
        }
        max_errors.push(max_err);
    }
    let elapsed = started.elapsed();
    for w in max_errors.windows(2) {
        let ratio = w[1] / w[0];
        assert!(
            (0.4..=0.6).contains(&ratio),
            "error ratio {ratio} outside 0.5 +- 20%"
        );
    }
    assert!(elapsed.as_secs_f64() < 1e-2, "took {elapsed:?}");
    pass(2, &format!("recurrence match and order-1 halving, {elapsed:?}"));
}

/// Criterion 3: the constant power load satisfies V I* = P + jQ at every
/// accepted point of a slack-branch-load run, and its limiter clamps the
/// current when the bus collapses.
#[test]
fn criterion_3_cpl_contract() {
    let started = Instant::now();
    let src_bus = BusPair::new("s");
    let load_bus = BusPair::new("l");
    let mut doc = NetlistDocument {
        title: "cpl contract".into(),
        ..Default::default()
    };
    doc.devices.extend(emit_slack(&SlackSpec {
        bus: src_bus.clone(),
        v_mag: 1.0507,
        v_angle: 0.51_f64.to_radians(),
    }));
    doc.devices.extend(emit_branch(&BranchSpec {
        from: src_bus,
        to: load_bus.clone(),
        x: 0.05,
    }));
    doc.devices
        .extend(emit_cpl(&CplSpec::new(load_bus.clone(), 0.9, 0.49)));
    let sys = compile_doc(&doc);

    let opts = SolverOptions {
        t_stop: 0.1,
        step_h: 0.01,
        ..tight_opts()
    };
    let (amm_r, amm_i) = cpl_ammeters(&load_bus);
    let vars = vec![
        "V(lR)".to_string(),
        "V(lI)".to_string(),
        format!("I({amm_r})"),
        format!("I({amm_i})"),
    ];
    let w = run_transient(&sys, &opts, &vars).unwrap();
    for row in 0..w.len() {
        let v_r = w.columns[0][row];
        let v_i = w.columns[1][row];
        let i_r = w.columns[2][row];
        let i_i = w.columns[3][row];
        // S = V conj(I)
        let p = v_r * i_r + v_i * i_i;
        let q = v_i * i_r - v_r * i_i;
        let err = ((p - 0.9).powi(2) + (q - 0.49).powi(2)).sqrt();
        assert!(err < 1e-6, "row {row}: |V I* - S| = {err}");
    }

    // Collapsed bus: raw quotient far above the limit, current clamped.
    let mut doc = NetlistDocument {
        title: "cpl clamp".into(),
        ..Default::default()
    };
    doc.devices.extend(emit_slack(&SlackSpec {
        bus: BusPair::new("l"),
        v_mag: 1e-6,
        v_angle: 0.0,
    }));
    doc.devices
        .extend(emit_cpl(&CplSpec::new(BusPair::new("l"), 1.0, 0.0)));
    let sys = compile_doc(&doc);
    let x = dc_operating_point(&sys, &tight_opts()).unwrap();
    let i_r = x[sys.layout.var_index(&format!("I({amm_r})")).unwrap()];
    assert!(
        (i_r.abs() - 1000.0).abs() < 1e-9,
        "limiter should clamp at 1000, got {i_r}"
    );
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1e-2, "took {elapsed:?}");
    pass(3, &format!("power recovered to 1e-6 and limiter clamps, {elapsed:?}"));
}

/// Criterion 4: converter algebra spot values against direct evaluation of
/// the published relations, and the angle identity over random inputs.
#[test]
fn criterion_4_converter_algebra() {
    let p = HvdcParams::default();

    let out = rectifier_algebra(1.0, 1.0, 0.0, 0.0, &p);
    assert!(
        (out.e_rec - 1.35047).abs() <= 1e-5,
        "E = {} vs 3*sqrt(2)/pi",
        out.e_rec
    );

    // Overlap spot value. The oracle is direct evaluation:
    // acos(cos 0.21 - sqrt(2)*1*0.2/1.35047) - 0.21 = 0.484160; the
    // criterion's transcribed constant (0.48397) differs from its own
    // oracle by 1.9e-4 and the oracle value is asserted here.
    let oracle = (0.21_f64.cos() - 2.0_f64.sqrt() * 0.2 / 1.35047).acos() - 0.21;
    let out = rectifier_algebra(1.0, 1.0, 0.21, 1.0, &p);
    assert!(
        (out.mu - oracle).abs() <= 1e-4,
        "mu = {} vs oracle {oracle}",
        out.mu
    );
    println!(
        "criterion 4: note - overlap oracle {oracle:.6} (transcribed 0.48397 is 1.9e-4 off)"
    );

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let v_ac = rng.gen_range(0.4..1.6);
        let k = rng.gen_range(0.9..1.1);
        let beta = rng.gen_range(0.02..std::f64::consts::FRAC_PI_2);
        let i_dc = rng.gen_range(0.0..2.0);
        let out = inverter_algebra(v_ac, k, beta, i_dc, &p);
        assert!(
            (beta - (out.gamma + out.mu)).abs() <= 1e-9,
            "beta {beta} != gamma {} + mu {}",
            out.gamma,
            out.mu
        );
    }
    pass(4, "E and overlap match direct evaluation; beta = gamma + mu over 1000 draws");
}

/// Criterion 5: an isolated link between stiff sources regulates to the
/// 1.0 pu current order within 5 simulated seconds and balances converter
/// powers against the mesh loss.
#[test]
fn criterion_5_dc_link_steady_state() {
    let rec = BusPair::new("busr");
    let inv = BusPair::new("busi");
    let p = HvdcParams {
        x_cr: 0.02,
        x_ci: 0.02,
        dc_line_r: 0.05,
        x_dc: Some(0.111),
        ..Default::default()
    };
    let cp = HvdcControlParams {
        alpha_min: 0.1,
        alpha_max: 1.4,
        extinction_control: false,
        ..Default::default()
    };
    let mut doc = NetlistDocument {
        title: "isolated link".into(),
        ..Default::default()
    };
    for b in [&rec, &inv] {
        doc.devices.extend(emit_slack(&SlackSpec {
            bus: (*b).clone(),
            v_mag: 1.0,
            v_angle: 0.0,
        }));
    }
    doc.devices.extend(emit_hvdc(&p, &cp, &rec, &inv).unwrap());
    let sys = compile_doc(&doc);
    let sig = hvdc_signals(&rec);

    let opts = SolverOptions {
        t_stop: 5.0,
        step_h: 0.01,
        abs_tol: 1e-8,
        rel_tol: 1e-8,
        newton_tol: 1e-8,
        ..Default::default()
    };
    let idc_var = format!("I({})", sig.idc_device);
    let prec_var = format!("V({})", sig.p_rec_node);
    let pinv_var = format!("V({})", sig.p_inv_node);
    let w = run_transient(&sys, &opts, &[idc_var.clone(), prec_var.clone(), pinv_var.clone()])
        .unwrap();

    let idc = w.last(&idc_var).unwrap();
    assert!((idc - 1.0).abs() <= 0.02, "i_dc(5s) = {idc}");
    let audit = w.last(&prec_var).unwrap() - w.last(&pinv_var).unwrap() - idc * idc * 0.05;
    assert!(audit.abs() <= 1e-3, "power audit residue {audit}");
    pass(5, &format!("i_dc = {idc:.4} pu, audit residue {audit:.2e}"));
}

fn gridflux() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gridflux"))
}

struct Csv {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn read_csv(path: &Path) -> Csv {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines
        .next()
        .unwrap()
        .split(',')
        .map(|s| s.to_string())
        .collect();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    Csv { header, rows }
}

impl Csv {
    fn col(&self, name: &str) -> Vec<f64> {
        let idx = self
            .header
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .unwrap_or_else(|| panic!("column {name} missing from {:?}", self.header));
        self.rows.iter().map(|r| r[idx]).collect()
    }
}

fn run_case4bus(dir: &Path, ec: &str, tstop: f64) -> (PathBuf, f64) {
    let out = dir.join(format!("case4bus_{ec}_{tstop}.csv"));
    let started = Instant::now();
    let status = gridflux()
        .args([
            "run",
            "case4bus",
            "--extinction-control",
            ec,
            "--tstop",
            &tstop.to_string(),
            "--step",
            "0.01",
            "--reltol",
            "1e-1",
            "--abstol",
            "1e-3",
            "--print",
            "VM(bus1)",
            "--print",
            "V(bus2R)",
            "--print",
            "V(bus2I)",
            "--print",
            "V(hvdc.bus1.alpha)",
            "--print",
            "V(hvdc.bus1.beta)",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    assert!(status.success(), "gridflux run failed");
    (out, elapsed)
}

/// Criteria 6 and 7: the four-bus study, 200 s at 10 ms with the published
/// tolerances. Without extinction-angle control the rectifier-side bus sits
/// below 1.0 pu; with control at the 20-degree reference it recovers to
/// 1.0 pu or above while the advance angle holds the reference; the
/// infinity bus stays pinned throughout. The controlled run must finish
/// within the 60 s wall-clock envelope.
#[test]
fn criterion_6_and_7_case_study() {
    let dir = tempfile::tempdir().unwrap();

    let (off_csv, _) = run_case4bus(dir.path(), "off", 200.0);
    let (on_csv, on_secs) = run_case4bus(dir.path(), "on", 200.0);

    let off = read_csv(&off_csv);
    let on = read_csv(&on_csv);
    assert_eq!(off.rows.len(), 20001, "expected 20001 rows");
    assert_eq!(on.rows.len(), 20001);

    // Steady state = the last 10% of the run.
    let tail = |v: &[f64]| v[v.len() - v.len() / 10..].to_vec();

    // (a) without extinction-angle control the rectifier bus is depressed.
    let vm1_off = tail(&off.col("VM(bus1)"));
    let max_off = vm1_off.iter().cloned().fold(f64::MIN, f64::max);
    assert!(max_off < 1.0, "VM(bus1) without control = {max_off}");

    // (b) with control the rectifier bus recovers to 1.0 pu or above.
    let vm1_on = tail(&on.col("VM(bus1)"));
    let min_on = vm1_on.iter().cloned().fold(f64::MAX, f64::min);
    assert!(min_on >= 1.0, "VM(bus1) with control = {min_on}");

    // (c) the advance angle settles on the 20-degree reference.
    let beta = tail(&on.col("V(hvdc.bus1.beta)"));
    for b in &beta {
        assert!((b - 0.349).abs() <= 0.01, "beta = {b}");
    }

    // (d) the infinity bus is pinned at 1.0 angle 0 for the whole run.
    for csv in [&off, &on] {
        for (r, i) in csv.col("V(bus2R)").iter().zip(csv.col("V(bus2I)").iter()) {
            assert!((r - 1.0).abs() <= 1e-9 && i.abs() <= 1e-9, "bus2 at {r}+j{i}");
        }
    }

    // Firing-angle clamp safety across both runs.
    for csv in [&off, &on] {
        for a in csv.col("V(hvdc.bus1.alpha)") {
            assert!((0.21 - 1e-9..=0.35 + 1e-9).contains(&a), "alpha = {a}");
        }
    }

    pass(
        6,
        &format!("VM(bus1) {max_off:.4} off / {min_on:.4} on, beta on reference, bus2 pinned"),
    );

    assert!(on_secs <= 60.0, "200 s study took {on_secs:.1}s wall clock");
    pass(7, &format!("200 s study in {on_secs:.2}s wall clock"));
}

/// Criterion 8: the shipped netlist corpus parses, elaborates, and stamps;
/// the constant-power-load instance line carries its documented parameters,
/// and the HVDC subcircuit accepts the full published parameter list.
#[test]
fn criterion_8_parser_corpus() {
    for rel in [
        "netlists/fig1.cir",
        "netlists/rc.cir",
        "netlists/slack_bus.cir",
        "netlists/cpl_load.cir",
        "netlists/hvdc_link.cir",
    ] {
        let text = fs::read_to_string(repo_path(rel)).unwrap();
        let doc = parse_netlist(&text).unwrap_or_else(|e| panic!("{rel}: {e}"));
        let flat = elaborate(&doc).unwrap_or_else(|e| panic!("{rel}: {e}"));
        let layout = build_layout(&flat).unwrap_or_else(|e| panic!("{rel}: {e}"));
        stamp_all(&flat, &layout).unwrap_or_else(|e| panic!("{rel}: {e}"));
    }

    // The load instance elaborates to P=0.9, Q=0.49 with the default
    // current limit: check through the expression values.
    let text = fs::read_to_string(repo_path("netlists/cpl_load.cir")).unwrap();
    let flat = elaborate(&parse_netlist(&text).unwrap()).unwrap();
    let b = flat.device("Xload1.BloadR").unwrap();
    let expr = b.expr.as_ref().unwrap();
    let mut bind = gridflux_core::Bindings::new();
    bind.insert(gridflux_core::Ref::voltage("bus1R"), 1.0);
    bind.insert(gridflux_core::Ref::voltage("bus1I"), 0.0);
    assert!((expr.eval(&bind).unwrap() - 0.9).abs() < 1e-9);
    bind.insert(gridflux_core::Ref::voltage("bus1R"), 1e-5);
    assert_eq!(expr.eval(&bind).unwrap(), 1000.0, "default current limit");
    let bi = flat.device("Xload1.BloadI").unwrap();
    bind.insert(gridflux_core::Ref::voltage("bus1R"), 1.0);
    assert!((bi.expr.as_ref().unwrap().eval(&bind).unwrap() + 0.49).abs() < 1e-9);

    // The published HVDC instantiation line works against the library
    // with its full parameter list.
    let lib = fs::read_to_string(repo_path("lib/powergrid.cir")).unwrap();
    let src = format!(
        "{lib}\n\
         Xs1 bus1R bus1I SLACK\n\
         Xs2 bus2R bus2I SLACK\n\
         Xhvdc Module bus1R bus2R bus1I bus2I CHVDC2\n\
         + PARAMS: I_rate=1 Tr=0.005 V_rate=1 Tur=1 Tdr=1\n\
         + V1=1 V2=1 Imax1=1 Imax2=1\n\
         + Alpha_min_r=0.21 Alpha_max_r=0.35 rmin=0 rmax=1\n\
         + Talpr=1 Alpha_max_ram=0.21 Tap=1.0 Xc=0.2 Gdc=0.111 Nbr=6\n\
         .END\n"
    );
    let doc = parse_netlist(&src).unwrap();
    let flat = elaborate(&doc).unwrap();
    let layout = build_layout(&flat).unwrap();
    stamp_all(&flat, &layout).unwrap();
    pass(8, "corpus parses/elaborates/stamps; instance parameters verified");
}

/// Criterion 9: behavioral-source Jacobians match central finite
/// differences at randomized well-conditioned points for every device
/// family.
#[test]
fn criterion_9_jacobian_vs_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);

    let mut check = |label: &str, doc: &NetlistDocument| {
        let sys = compile_doc(doc);
        let n = sys.layout.total();
        let x_base = dc_operating_point(&sys, &tight_opts())
            .unwrap_or_else(|e| panic!("{label}: {e}"));
        for trial in 0..10 {
            let x0 = DVector::from_fn(n, |i, _| x_base[i] + rng.gen_range(-1e-3..1e-3));
            let j = sys.jacobian(&x0, 0.0, 0.0).unwrap();
            let h = 1e-6;
            let zero = DVector::zeros(n);
            for col in 0..n {
                let mut xp = x0.clone();
                xp[col] += h;
                let mut xm = x0.clone();
                xm[col] -= h;
                let fp = sys.residual(&xp, &zero, 0.0).unwrap();
                let fm = sys.residual(&xm, &zero, 0.0).unwrap();
                for row in 0..n {
                    let fd = (fp[row] - fm[row]) / (2.0 * h);
                    let sym = j[(row, col)];
                    assert!(
                        (sym - fd).abs() <= 1e-5 * fd.abs().max(1.0),
                        "{label} trial {trial} J[{row},{col}]: sym {sym} vs fd {fd}"
                    );
                }
            }
        }
    };

    // Constant power load on a stiff bus.
    let bus = BusPair::new("l");
    let mut doc = NetlistDocument::default();
    doc.devices.extend(emit_slack(&SlackSpec {
        bus: bus.clone(),
        v_mag: 1.05,
        v_angle: 0.1,
    }));
    doc.devices.extend(emit_cpl(&CplSpec::new(bus, 0.9, 0.49)));
    check("cpl", &doc);

    // AC branch between two pinned buses.
    let a = BusPair::new("a");
    let b = BusPair::new("b");
    let mut doc = NetlistDocument::default();
    doc.devices.extend(emit_slack(&SlackSpec {
        bus: a.clone(),
        v_mag: 1.0,
        v_angle: 0.0,
    }));
    doc.devices.extend(emit_slack(&SlackSpec {
        bus: b.clone(),
        v_mag: 0.97,
        v_angle: -0.05,
    }));
    doc.devices.extend(emit_branch(&BranchSpec {
        from: a,
        to: b,
        x: 0.1,
    }));
    check("branch", &doc);

    // Swing machine against an infinite bus.
    let g = BusPair::new("g");
    let inf = BusPair::new("inf");
    let mut doc = NetlistDocument::default();
    doc.devices.extend(emit_slack(&SlackSpec {
        bus: inf.clone(),
        v_mag: 1.0,
        v_angle: 0.0,
    }));
    doc.devices.extend(emit_branch(&BranchSpec {
        from: g.clone(),
        to: inf,
        x: 0.1,
    }));
    doc.devices.extend(emit_machine(&MachineSpec {
        bus: g,
        h: 3.0,
        d: 0.5,
        xd_p: 0.2,
        p_mech: 0.5,
        e_mag: 1.05,
    }));
    check("machine", &doc);

    // Full HVDC assembly between stiff buses.
    let rec = BusPair::new("busr");
    let inv = BusPair::new("busi");
    let p = HvdcParams {
        x_cr: 0.02,
        x_ci: 0.02,
        dc_line_r: 0.05,
        x_dc: Some(0.111),
        ..Default::default()
    };
    let cp = HvdcControlParams {
        alpha_min: 0.1,
        alpha_max: 1.4,
        ..Default::default()
    };
    let mut doc = NetlistDocument::default();
    for b in [&rec, &inv] {
        doc.devices.extend(emit_slack(&SlackSpec {
            bus: (*b).clone(),
            v_mag: 1.0,
            v_angle: 0.0,
        }));
    }
    doc.devices.extend(emit_hvdc(&p, &cp, &rec, &inv).unwrap());
    check("hvdc", &doc);

    pass(9, "symbolic Jacobians match central differences for all device families");
}

/// Criterion 10: identical configurations produce byte-identical CSV.
#[test]
fn criterion_10_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let status = gridflux()
            .args([
                "run",
                "case4bus",
                "--extinction-control",
                "on",
                "--tstop",
                "2",
                "--step",
                "0.01",
                "--out",
            ])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    let bytes_a = fs::read(&a).unwrap();
    let bytes_b = fs::read(&b).unwrap();
    assert_eq!(bytes_a, bytes_b, "repeated runs differ");
    pass(10, &format!("{} bytes byte-identical across runs", bytes_a.len()));
}

/// The conversion-factor constant used throughout the converter algebra.
#[test]
fn conversion_factor_reference() {
    assert!((CONVERSION_FACTOR - 1.35047).abs() < 1e-5);
}
