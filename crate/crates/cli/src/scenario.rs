//! The built-in four-bus, two-area study: an HVDC link between bus 1
//! (rectifier) and bus 2 (inverter/infinity bus), a machine on bus 4, and a
//! constant power load on bus 3.
//!
//! Which buses host the machine and the load is a documented reconstruction;
//! everything is overridable through a TOML scenario file.

use anyhow::{anyhow, Context, Result};
use serde::Deserialize;

use gridflux_core::acgrid::{
    emit_branch, emit_cpl, emit_machine, emit_slack, slack_ammeters, BranchSpec, BusPair,
    CplSpec, MachineSpec, SlackSpec,
};
use gridflux_core::hvdc::{emit_hvdc, HvdcControlParams, HvdcParams, Vdcol};
use gridflux_core::solver::{dc_operating_point, SolverOptions};
use gridflux_core::{build_layout, stamp_all, NetlistDocument};

/// Machine constants. Only `h`, `d`, and `x_d_p` drive the classical model;
/// the remaining constants are carried for completeness and ignored.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MachineConfig {
    pub h: f64,
    pub d: f64,
    pub x_d_p: f64,
    pub t_d_p: f64,
    pub t_d_pp: f64,
    pub t_q_p: f64,
    pub t_q_pp: f64,
    pub x_d: f64,
    pub x_d_pp: f64,
    pub x_q: f64,
    pub x_q_p: f64,
    pub x_q_pp: f64,
    pub x_l: f64,
    pub r_a: f64,
}

impl Default for MachineConfig {
    fn default() -> Self {
        MachineConfig {
            h: 3.0,
            d: 0.5,
            x_d_p: 0.2,
            t_d_p: 7.0,
            t_d_pp: 0.03,
            t_q_p: 0.75,
            t_q_pp: 0.05,
            x_d: 2.1,
            x_d_pp: 0.18,
            x_q: 0.5,
            x_q_p: 0.25,
            x_q_pp: 0.18,
            x_l: 0.15,
            r_a: 0.0,
        }
    }
}

/// HVDC link constants.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HvdcConfig {
    pub x_cr: f64,
    pub x_ci: f64,
    pub n_rec: f64,
    pub n_inv: f64,
    pub tap: f64,
    pub r_cr: f64,
    pub r_ci: f64,
    pub dc_line_r: f64,
    pub x_dc: f64,
    pub p_dc_rec: f64,
    pub p_dc_inv: f64,
    pub i_dc_ref: f64,
    pub v_ac_ref: f64,
    pub t_meas: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub beta_ref_deg: f64,
    pub t_alpha: f64,
    pub kp_cc: f64,
    pub ki_cc: f64,
    pub kp_ec: f64,
    pub ki_ec: f64,
    pub vdcol_v1: f64,
    pub vdcol_v2: f64,
    pub vdcol_imax1: f64,
    pub vdcol_imax2: f64,
}

impl Default for HvdcConfig {
    fn default() -> Self {
        let p = HvdcParams::default();
        let cp = HvdcControlParams::default();
        HvdcConfig {
            x_cr: p.x_cr,
            x_ci: p.x_ci,
            n_rec: p.n_rec,
            n_inv: p.n_inv,
            tap: p.k_r,
            r_cr: p.r_cr,
            r_ci: p.r_ci,
            dc_line_r: p.dc_line_r,
            x_dc: 0.111,
            p_dc_rec: p.p_dc_rec,
            p_dc_inv: p.p_dc_inv,
            i_dc_ref: cp.i_dc_ref,
            v_ac_ref: cp.v_ac_ref,
            t_meas: cp.t_meas,
            alpha_min: cp.alpha_min,
            alpha_max: cp.alpha_max,
            beta_ref_deg: 20.0,
            t_alpha: cp.t_alpha,
            kp_cc: cp.kp_cc,
            ki_cc: cp.ki_cc,
            kp_ec: cp.kp_ec,
            ki_ec: cp.ki_ec,
            vdcol_v1: cp.vdcol.v1,
            vdcol_v2: cp.vdcol.v2,
            vdcol_imax1: cp.vdcol.imax1,
            vdcol_imax2: cp.vdcol.imax2,
        }
    }
}

/// Full scenario description with the published defaults.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub x_12: f64,
    pub x_13: f64,
    pub x_14: f64,
    pub x_23: f64,
    /// Infinity-bus voltage magnitude at bus 2.
    pub v_2: f64,
    /// Machine-bus voltage-magnitude target at bus 4.
    pub v_4: f64,
    /// Constant power load at bus 3.
    pub load_p: f64,
    pub load_q: f64,
    /// Scheduled machine output, pu: the unit carries the bulk of its
    /// area's demand (load plus most of the rectifier draw) and the
    /// infinity bus balances the remainder.
    pub machine_p_dispatch: f64,
    pub machine: MachineConfig,
    pub hvdc: HvdcConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            x_12: 0.2,
            x_13: 0.1,
            x_14: 0.1,
            x_23: 0.1,
            v_2: 1.0,
            v_4: 1.0971,
            load_p: 0.9,
            load_q: 0.49,
            machine_p_dispatch: 1.2,
            machine: MachineConfig::default(),
            hvdc: HvdcConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<ScenarioConfig> {
        toml::from_str(text).context("invalid scenario file")
    }

    pub fn hvdc_params(&self, appendix_c_scaling: bool) -> HvdcParams {
        HvdcParams {
            x_cr: self.hvdc.x_cr,
            x_ci: self.hvdc.x_ci,
            n_rec: self.hvdc.n_rec,
            n_inv: self.hvdc.n_inv,
            k_r: self.hvdc.tap,
            k_i: self.hvdc.tap,
            r_cr: self.hvdc.r_cr,
            r_ci: self.hvdc.r_ci,
            dc_line_r: self.hvdc.dc_line_r,
            dc_line_l: 0.0,
            l_smooth_r: 0.0,
            l_smooth_i: 0.0,
            omega: gridflux_core::acgrid::OMEGA_SYNC,
            x_dc: Some(self.hvdc.x_dc),
            p_dc_rec: self.hvdc.p_dc_rec,
            p_dc_inv: self.hvdc.p_dc_inv,
            appendix_c_scaling,
        }
    }

    pub fn hvdc_control(&self, extinction_control: bool) -> HvdcControlParams {
        HvdcControlParams {
            i_dc_ref: self.hvdc.i_dc_ref,
            v_ac_ref: self.hvdc.v_ac_ref,
            t_meas: self.hvdc.t_meas,
            alpha_min: self.hvdc.alpha_min,
            alpha_max: self.hvdc.alpha_max,
            vdcol: Vdcol {
                v1: self.hvdc.vdcol_v1,
                v2: self.hvdc.vdcol_v2,
                imax1: self.hvdc.vdcol_imax1,
                imax2: self.hvdc.vdcol_imax2,
            },
            extinction_control,
            beta_ref: self.hvdc.beta_ref_deg.to_radians(),
            kp_cc: self.hvdc.kp_cc,
            ki_cc: self.hvdc.ki_cc,
            kp_ec: self.hvdc.kp_ec,
            ki_ec: self.hvdc.ki_ec,
            t_alpha: self.hvdc.t_alpha,
        }
    }
}

pub fn bus(name: &str) -> BusPair {
    BusPair::new(name)
}

/// Shared network cards: slack, branches, load, HVDC. The machine bus is
/// handled by the caller (pinned during initialization, dynamic afterwards).
fn network_cards(
    sc: &ScenarioConfig,
    extinction_control: bool,
    appendix_c_scaling: bool,
) -> Result<Vec<gridflux_core::DeviceCard>> {
    let bus1 = bus("bus1");
    let bus2 = bus("bus2");
    let bus3 = bus("bus3");
    let bus4 = bus("bus4");

    let mut cards = Vec::new();
    cards.extend(emit_slack(&SlackSpec {
        bus: bus2.clone(),
        v_mag: sc.v_2,
        v_angle: 0.0,
    }));
    for (from, to, x) in [
        (&bus1, &bus2, sc.x_12),
        (&bus1, &bus3, sc.x_13),
        (&bus1, &bus4, sc.x_14),
        (&bus2, &bus3, sc.x_23),
    ] {
        cards.extend(emit_branch(&BranchSpec {
            from: from.clone(),
            to: to.clone(),
            x,
        }));
    }
    cards.extend(emit_cpl(&CplSpec::new(bus3, sc.load_p, sc.load_q)));
    cards.extend(
        emit_hvdc(
            &sc.hvdc_params(appendix_c_scaling),
            &sc.hvdc_control(extinction_control),
            &bus1,
            &bus2,
        )
        .map_err(|e| anyhow!("{e}"))?,
    );
    Ok(cards)
}

/// Machine boundary conditions extracted from a pinned-bus DC solve.
#[derive(Debug, Clone, Copy)]
pub struct MachineInit {
    pub e_mag: f64,
    pub p_mech: f64,
    pub delta0: f64,
}

/// One pinned-bus DC solve: bus 4 held at (v_4, theta4) with the full
/// network (HVDC included) live, returning the machine boundary quantities
/// that hold that state.
fn pinned_solve(
    sc: &ScenarioConfig,
    theta4: f64,
    extinction_control: bool,
    appendix_c_scaling: bool,
) -> Result<MachineInit> {
    let bus4 = bus("bus4");
    let mut doc = NetlistDocument {
        title: "four-bus initialization".into(),
        ..Default::default()
    };
    doc.devices
        .extend(network_cards(sc, extinction_control, appendix_c_scaling)?);
    doc.devices.extend(emit_slack(&SlackSpec {
        bus: bus4.clone(),
        v_mag: sc.v_4,
        v_angle: theta4,
    }));

    let flat = gridflux_core::elaborate(&doc)?;
    let layout = build_layout(&flat)?;
    let sys = stamp_all(&flat, &layout)?;
    let x = dc_operating_point(&sys, &SolverOptions::default())
        .map_err(|e| anyhow!("initialization operating point failed: {e}"))?;

    let var = |name: &str| -> Result<f64> {
        sys.layout
            .var_index(name)
            .map(|i| x[i])
            .ok_or_else(|| anyhow!("missing variable {name}"))
    };
    let (amm_r, amm_i) = slack_ammeters(&bus4);
    let (v_r, v_i) = (var("V(bus4R)")?, var("V(bus4I)")?);
    let (i_r, i_i) = (var(&format!("I({amm_r})"))?, var(&format!("I({amm_i})"))?);

    // E = V + j x_d' I; p_mech balances the injected power Re(V I*).
    let xdp = sc.machine.x_d_p;
    let e_r = v_r - xdp * i_i;
    let e_i = v_i + xdp * i_r;
    Ok(MachineInit {
        e_mag: (e_r * e_r + e_i * e_i).sqrt(),
        p_mech: v_r * i_r + v_i * i_i,
        delta0: e_i.atan2(e_r),
    })
}

/// Initialization pass: find the bus-4 angle at which the pinned machine
/// bus delivers its scheduled power (secant iteration), then read off the
/// EMF and mechanical power that make the swing equation stationary there.
fn machine_init(
    sc: &ScenarioConfig,
    extinction_control: bool,
    appendix_c_scaling: bool,
) -> Result<MachineInit> {
    let target = sc.machine_p_dispatch;
    let mut th_a = 0.0;
    let mut init_a = pinned_solve(sc, th_a, extinction_control, appendix_c_scaling)?;
    let mut f_a = init_a.p_mech - target;
    if f_a.abs() < 1e-9 {
        return Ok(init_a);
    }
    let mut th_b = 0.1;
    let mut init_b = pinned_solve(sc, th_b, extinction_control, appendix_c_scaling)?;
    let mut f_b = init_b.p_mech - target;
    for _ in 0..30 {
        if (f_b - f_a).abs() < 1e-12 {
            break;
        }
        let th_c = th_b - f_b * (th_b - th_a) / (f_b - f_a);
        let init_c = pinned_solve(sc, th_c, extinction_control, appendix_c_scaling)?;
        let f_c = init_c.p_mech - target;
        th_a = th_b;
        f_a = f_b;
        init_a = init_b;
        th_b = th_c;
        f_b = f_c;
        init_b = init_c;
        if f_b.abs() < 1e-9 {
            return Ok(init_b);
        }
    }
    if f_b.abs() > 1e-3 {
        return Err(anyhow!(
            "machine dispatch {target} pu unreachable (best {:.4} pu)",
            init_b.p_mech
        ));
    }
    let _ = (init_a, f_a);
    Ok(init_b)
}

/// Construct the four-bus case as a netlist document, including the two-pass
/// machine initialization so the study starts at equilibrium.
pub fn build_case4bus(
    sc: &ScenarioConfig,
    extinction_control: bool,
    appendix_c_scaling: bool,
) -> Result<NetlistDocument> {
    let init = machine_init(sc, extinction_control, appendix_c_scaling)?;
    log::info!(
        "machine initialization: e_mag={:.4} p_mech={:.4} delta0={:.4} rad",
        init.e_mag,
        init.p_mech,
        init.delta0
    );

    let mut doc = NetlistDocument {
        title: "four-bus two-area system with hvdc".into(),
        ..Default::default()
    };
    doc.devices
        .extend(network_cards(sc, extinction_control, appendix_c_scaling)?);
    doc.devices.extend(emit_machine(&MachineSpec {
        bus: bus("bus4"),
        h: sc.machine.h,
        d: sc.machine.d,
        xd_p: sc.machine.x_d_p,
        p_mech: init.p_mech,
        e_mag: init.e_mag,
    }));
    Ok(doc)
}

/// Default waveform selection for the study: bus magnitudes, converter
/// angles, and the DC current.
pub fn default_case4bus_prints() -> Vec<String> {
    let sig = gridflux_core::hvdc::hvdc_signals(&bus("bus1"));
    vec![
        "VM(bus1)".into(),
        "VM(bus2)".into(),
        "VM(bus3)".into(),
        "VM(bus4)".into(),
        format!("V({})", sig.alpha_node),
        format!("V({})", sig.beta_node),
        format!("V({})", sig.gamma_node),
        format!("I({})", sig.idc_device),
    ]
}
