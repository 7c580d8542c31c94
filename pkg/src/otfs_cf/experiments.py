"""Scenario configuration, seeded drop execution, statistics and CSV output.

A scenario is a YAML document with sections mirroring the modules (system,
channel, geometry, power, estimation, evaluation, run, optional sweep).
Unknown keys are rejected.  Each drop draws its randomness from
SeedSequence(seed, spawn_key=(drop,)), so results do not depend on the worker
count and sweep points share geometry (common random numbers).
"""

from __future__ import annotations

import io
import subprocess
import time
import typing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from . import ofdm
from .channel import (PROFILES, ChannelProfile, delay_tap_max, doppler_from_speed, doppler_index_max,
                      sample_network_paths)
from .dd_core import DDDims
from .estimation import EpConfig, ep_interference_var, ep_mmse_coeff, simulate_ep_pilot, simulate_sp_frames, sp_gamma_closed_form
from .geometry import assemble_beta, sample_shadowing, sample_topology
from .link_sim import (DENSE_CAP, dense_link_operators, downlink_mmse_sic_bound, level4_se,
                       simulate_downlink_mr, uplink_levels)
from .se_closed_form import (PowerConfig, distinct_delay_kernels, dl_power_control_full,
                             downlink_se, network_kernels, overhead_factors, uplink_se)

SCHEMA_VERSION = 1


@dataclass
class SystemSection:
    carrier_hz: float = 4e9
    delta_f: float = 15e3
    M: int = 32
    N: int = 16
    N_dl: int = -1
    N_ul: int = -1
    speed_kmph: float = 300.0
    nu_max_hz: float | None = None  # overrides the speed-derived value


@dataclass
class ChannelSection:
    profile: str = "EVB"
    tap_delays_ns: list | None = None
    tap_powers_db: list | None = None
    doppler_mode: str = "uniform-index"
    frac_doppler: bool = False
    delay_scale: float = 1.0  # multiplies every tap delay (tau_max sweeps)


@dataclass
class GeometrySection:
    num_aps: int = 40
    num_users: int = 8
    side: float = 1000.0
    beta_mode: str = "split"
    shadow_std_db: float = 4.0
    decorrelation_m: float = 9.0


@dataclass
class PowerSection:
    ap_power: float = 1.0
    user_power: float = 0.2
    alpha_che: float | None = None
    noise_figure_db: float = 9.0
    noise_override_dbm: float | None = None
    # direct normalized SNRs (analytical regimes); any left None is derived
    rho_d: float | None = None
    rho_dt: float | None = None
    rho_pil: float | None = None
    # power scaling with the AP count: rho_d = E_d / M_a^2, rho_dt = E_u / M_a
    E_d: float | None = None
    E_u: float | None = None


@dataclass
class EstimationSection:
    k_hat: int = 0
    sp_processing_gain: float = 1.0
    scheme: str = "ep"  # estimator feeding the Monte-Carlo metrics


@dataclass
class EvaluationSection:
    metrics: list = field(default_factory=lambda: ["otfs_ep_dl", "ofdm_bt_dl"])
    trials: int = 200
    isi: str = "row-sum"
    uplink_form: str = "derived"
    dense_cap: int = DENSE_CAP


@dataclass
class RunSection:
    drops: int = 200
    seed: int = 1
    workers: int = 1


@dataclass
class SweepSection:
    param: str = ""
    values: list = field(default_factory=list)


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    description: str = ""
    schema_version: int = SCHEMA_VERSION
    system: SystemSection = field(default_factory=SystemSection)
    channel: ChannelSection = field(default_factory=ChannelSection)
    geometry: GeometrySection = field(default_factory=GeometrySection)
    power: PowerSection = field(default_factory=PowerSection)
    estimation: EstimationSection = field(default_factory=EstimationSection)
    evaluation: EvaluationSection = field(default_factory=EvaluationSection)
    run: RunSection = field(default_factory=RunSection)
    sweep: SweepSection | None = None


CLOSED_FORM_METRICS = {
    "otfs_ep_dl", "otfs_sp_dl", "otfs_ep_ul", "otfs_sp_ul",
    "ofdm_bt_dl", "ofdm_sp_dl", "ofdm_bt_ul", "ofdm_sp_ul",
}
MC_METRICS = {
    "mse_ep", "mse_sp", "dl_mc", "dl_sic",
    "ul_l2_mr", "ul_l2_lmmse", "ul_l3_mr", "ul_l3_lmmse",
    "ofdm_l4_mmse", "ofdm_l4_mr",
}
DENSE_METRICS = {"dl_mc", "dl_sic", "ul_l2_mr", "ul_l2_lmmse", "ul_l3_mr", "ul_l3_lmmse"}
_SECTIONS = {f.name: f for f in fields(ScenarioConfig)}


def _from_dict(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ValueError(f"{where}: expected a mapping")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ValueError(f"{where}: unknown keys {sorted(unknown)}")
    hints = typing.get_type_hints(cls)
    kwargs = {}
    for k, v in data.items():
        sub = _section_type(cls, k)
        if sub is not None and v is not None:
            kwargs[k] = _from_dict(sub, v, f"{where}.{k}")
        else:
            kwargs[k] = _coerce(hints[k], v, f"{where}.{k}")
    return cls(**kwargs)


def _coerce(hint, value, where):
    """Convert scalars to the annotated type (YAML 1.1 reads 4.0e9 as a string)."""
    args = set(typing.get_args(hint)) or {hint}
    if value is None:
        if type(None) in args:
            return None
        raise ValueError(f"{where}: must not be null")
    for t in (bool, int, float, str, list):
        if t not in args:
            continue
        if t is bool:
            if isinstance(value, bool):
                return value
            continue
        if t is int and not isinstance(value, bool):
            try:
                f = float(value)
            except (TypeError, ValueError):
                continue
            if f.is_integer():
                return int(f)
            continue
        if t is float and not isinstance(value, bool):
            try:
                return float(value)
            except (TypeError, ValueError):
                continue
        if t is str and isinstance(value, str):
            return value
        if t is list and isinstance(value, list):
            return value
    raise ValueError(f"{where}: cannot interpret {value!r} as {hint}")


def _section_type(cls, name):
    if cls is not ScenarioConfig:
        return None
    return {"system": SystemSection, "channel": ChannelSection, "geometry": GeometrySection,
            "power": PowerSection, "estimation": EstimationSection, "evaluation": EvaluationSection,
            "run": RunSection, "sweep": SweepSection}.get(name)


def config_from_dict(data: dict) -> ScenarioConfig:
    cfg = _from_dict(ScenarioConfig, data, "scenario")
    if cfg.schema_version != SCHEMA_VERSION:
        raise ValueError(f"schema version {cfg.schema_version} not supported (expected {SCHEMA_VERSION})")
    return cfg


def load_config(path) -> ScenarioConfig:
    with open(path) as fh:
        return config_from_dict(yaml.safe_load(fh) or {})


def config_to_dict(cfg: ScenarioConfig) -> dict:
    return asdict(cfg)


def set_param(cfg: ScenarioConfig, dotted: str, value) -> ScenarioConfig:
    section, _, key = dotted.partition(".")
    if section not in _SECTIONS or not key:
        raise ValueError(f"bad sweep parameter {dotted!r}")
    sec = getattr(cfg, section)
    if not hasattr(sec, key):
        raise ValueError(f"bad sweep parameter {dotted!r}")
    return replace(cfg, **{section: replace(sec, **{key: value})})


# ---------------------------------------------------------------------------
# derived quantities and validation


@dataclass(frozen=True)
class Derived:
    dims: DDDims
    profile: ChannelProfile
    nu_max: float
    k_max: int
    l_max: int
    n_guard: int
    ep_capacity: int
    alpha: float
    rho_d: float
    rho_dt: float
    rho_pil: float
    omega_dl: float
    omega_ul_ep: float
    omega_ul_sp: float
    ofdm: ofdm.OfdmConfig


def derive(cfg: ScenarioConfig) -> Derived:
    s = cfg.system
    dims = DDDims(s.M, s.N, s.N_dl, s.N_ul)
    base = PROFILES.get(cfg.channel.profile)
    if base is None and cfg.channel.tap_delays_ns is None:
        raise ValueError(f"unknown profile {cfg.channel.profile!r} and no tap delays given")
    delays = tuple(cfg.channel.tap_delays_ns) if cfg.channel.tap_delays_ns is not None else base.tap_delays_ns
    powers = (tuple(cfg.channel.tap_powers_db) if cfg.channel.tap_powers_db is not None
              else (base.tap_powers_db if base is not None and len(base.tap_powers_db) == len(delays)
                    else (0.0,) * len(delays)))
    if cfg.channel.delay_scale <= 0:
        raise ValueError("delay_scale must be positive")
    delays = tuple(float(t) * cfg.channel.delay_scale for t in delays)
    profile = ChannelProfile(cfg.channel.profile, delays, powers, cfg.channel.doppler_mode,
                             cfg.channel.frac_doppler)
    if s.nu_max_hz is not None:
        nu_max = float(s.nu_max_hz)
        k_max = doppler_index_max(nu_max, s.N, s.delta_f)
    else:
        nu_max, k_max = doppler_from_speed(s.speed_kmph, s.carrier_hz, s.N, s.delta_f)
    l_max = delay_tap_max(profile.tau_max, s.M, s.delta_f)
    if l_max >= s.M:
        raise ValueError(f"delay spread needs {l_max + 1} delay bins but M={s.M}")
    ep = EpConfig(dims, k_max, l_max, cfg.estimation.k_hat)
    alpha = cfg.power.alpha_che if cfg.power.alpha_che is not None else ep.n_guard / dims.size
    pc = PowerConfig(cfg.power.ap_power, cfg.power.user_power, alpha, cfg.power.noise_figure_db,
                     cfg.power.noise_override_dbm)
    rho_d, rho_dt, rho_pil = pc.normalized(s.M, s.delta_f, alpha)
    p = cfg.power
    Ma = cfg.geometry.num_aps
    rho_d = p.rho_d if p.rho_d is not None else rho_d
    rho_dt = p.rho_dt if p.rho_dt is not None else rho_dt
    rho_pil = p.rho_pil if p.rho_pil is not None else rho_pil
    if p.E_d is not None:
        rho_d = p.E_d / Ma**2
    if p.E_u is not None:
        rho_dt = p.E_u / Ma
    w_dl, w_ep = overhead_factors(dims, ep.n_guard, "ep")
    _, w_sp = overhead_factors(dims, 0, "sp")
    ocfg = ofdm.make_config(s.delta_f, profile.tau_max, nu_max)
    return Derived(dims, profile, nu_max, k_max, l_max, ep.n_guard, ep.max_users, alpha, rho_d, rho_dt,
                   rho_pil, w_dl, w_ep, w_sp, ocfg)


def validate(cfg: ScenarioConfig) -> Derived:
    """Check every cross-field constraint; return the derived quantities."""
    ev = cfg.evaluation
    for m in ev.metrics:
        if m not in CLOSED_FORM_METRICS | MC_METRICS:
            raise ValueError(f"unknown metric {m!r}")
    if not ev.metrics:
        raise ValueError("no metrics requested")
    if ev.isi not in ("row-sum", "row-energy"):
        raise ValueError(f"unknown isi form {ev.isi!r}")
    if ev.uplink_form not in ("derived", "printed"):
        raise ValueError(f"unknown uplink form {ev.uplink_form!r}")
    if cfg.estimation.scheme not in ("ep", "sp"):
        raise ValueError(f"unknown estimation scheme {cfg.estimation.scheme!r}")
    if cfg.run.drops < 0 or cfg.run.workers < 1 or ev.trials < 1:
        raise ValueError("drops must be >= 0, workers and trials >= 1")
    points = [cfg] if cfg.sweep is None else [set_param(cfg, cfg.sweep.param, v) for v in cfg.sweep.values]
    if cfg.sweep is not None and not cfg.sweep.values:
        raise ValueError("sweep without values")
    out = None
    for c in points:
        d = derive(c)
        uses_ep = any("_ep_" in m or m == "mse_ep" for m in c.evaluation.metrics) or (
            c.estimation.scheme == "ep" and any(m in DENSE_METRICS for m in c.evaluation.metrics))
        if uses_ep and c.geometry.num_users > d.ep_capacity:
            raise ValueError(f"{c.geometry.num_users} users exceed the EP capacity {d.ep_capacity} "
                             f"(N_guard={d.n_guard}, MN={d.dims.size})")
        if any(m in DENSE_METRICS for m in c.evaluation.metrics) and \
                c.geometry.num_aps * d.dims.size > c.evaluation.dense_cap:
            raise ValueError(f"M_a x MN = {c.geometry.num_aps * d.dims.size} exceeds dense cap "
                             f"{c.evaluation.dense_cap}")
        if any(m.startswith("ofdm_l4") for m in c.evaluation.metrics) and \
                c.geometry.num_aps * d.dims.M > c.evaluation.dense_cap:
            raise ValueError("M_a x M exceeds the dense cap for level-4 OFDM")
        if c.geometry.beta_mode not in ("split", "profile", "uniform", "unit"):
            raise ValueError(f"unknown beta mode {c.geometry.beta_mode!r}")
        out = out or d
    return out


# ---------------------------------------------------------------------------
# one drop


def _kernels(paths, dims, adjoint_first=False):
    Ma, Ku, L = paths.shape
    if paths.distinct_delays():
        return distinct_delay_kernels(Ma, Ku, L)
    return network_kernels(paths, dims, adjoint_first)


def evaluate_drop(cfg: ScenarioConfig, drop: int) -> dict:
    """Per-user values of every requested metric for one network drop."""
    d = derive(cfg)
    ss = np.random.SeedSequence(cfg.run.seed, spawn_key=(drop,))
    geo_rng, path_rng, mc_rng = (np.random.default_rng(s) for s in ss.spawn(3))
    g = cfg.geometry
    topo = sample_topology(g.num_aps, g.num_users, g.side, geo_rng)
    shadow = sample_shadowing(topo, geo_rng, g.shadow_std_db, g.decorrelation_m)
    beta = assemble_beta(topo, shadow, d.profile.L, g.beta_mode, d.profile.tap_powers_db).beta
    dims = d.dims
    paths = sample_network_paths(d.profile, dims, cfg.system.delta_f, d.nu_max, beta, path_rng)
    metrics = cfg.evaluation.metrics
    N = dims.N
    ev = cfg.evaluation
    out = {}

    gam = {}

    def gamma(scheme):
        if scheme not in gam:
            if scheme == "ep":
                gam[scheme] = ep_mmse_coeff(beta, d.rho_pil, d.rho_dt, 1.0, N, d.k_max, cfg.estimation.k_hat).gamma
            else:
                gam[scheme] = sp_gamma_closed_form(beta, d.rho_pil, d.rho_dt, 1.0,
                                                   cfg.estimation.sp_processing_gain)
        return gam[scheme]

    kern = {}

    def kernels(adj):
        if adj not in kern:
            kern[adj] = _kernels(paths, dims, adj)
        return kern[adj]

    for scheme in ("ep", "sp"):
        if f"otfs_{scheme}_dl" in metrics:
            gm = gamma(scheme)
            out[f"otfs_{scheme}_dl"] = downlink_se(gm, beta, dl_power_control_full(gm), d.rho_d,
                                                            *kernels(False), d.omega_dl, ev.isi)
        if f"otfs_{scheme}_ul" in metrics:
            w = d.omega_ul_ep if scheme == "ep" else d.omega_ul_sp
            adj = ev.uplink_form == "derived"
            out[f"otfs_{scheme}_ul"] = uplink_se(gamma(scheme), beta, 1.0, d.rho_dt, *kernels(adj), w,
                                                          ev.isi, ev.uplink_form)

    if any(m.startswith("ofdm_") for m in metrics):
        nu_hz = (paths.doppler + paths.frac) * cfg.system.delta_f / N
        nu_norm = nu_hz / cfg.system.delta_f
        oc = d.ofdm
        w_ul = 1 - dims.N_dl / dims.N_T
        okern = {}

        def ok(adj):
            if adj not in okern:
                okern[adj] = ofdm.ofdm_kernels(paths.delay, nu_norm, dims.M, adj)
            return okern[adj]

        g_bt = ofdm.bt_gamma(beta, d.rho_pil, 1.0, ofdm.ici_fraction(nu_norm, dims.M))
        for name, gm, bp in (("bt", g_bt, True), ("sp", None, False)):
            if gm is None:
                gm = gamma("sp")
            if f"ofdm_{name}_dl" in metrics:
                out[f"ofdm_{name}_dl"] = ofdm.ofdm_downlink_se(gm, beta, dl_power_control_full(gm), d.rho_d,
                                                               *ok(False), nu_hz, oc, d.omega_dl, bp)
            if f"ofdm_{name}_ul" in metrics:
                out[f"ofdm_{name}_ul"] = ofdm.ofdm_uplink_se(gm, beta, 1.0, d.rho_dt, *ok(True), nu_hz, oc,
                                                             w_ul, bp)
        for comb in ("mmse", "mr"):
            if f"ofdm_l4_{comb}" in metrics:
                Q = ofdm.link_q_bars(paths.delay, nu_norm, dims.M)
                out[f"ofdm_l4_{comb}"] = w_ul * ofdm.ofdm_overhead(oc) * level4_se(
                    Q, beta, g_bt, d.rho_dt, 1.0, ev.trials, np.random.default_rng(mc_rng.integers(2**63)),
                    comb, dense_cap=ev.dense_cap)

    if "mse_ep" in metrics:
        q = ep_mmse_coeff(beta, d.rho_pil, d.rho_dt, 1.0, N, d.k_max, cfg.estimation.k_hat)
        i_var = ep_interference_var(beta, d.rho_dt, 1.0, N, d.k_max, cfg.estimation.k_hat)[:, :, None]
        h, _, hh = simulate_ep_pilot(beta, q.c, d.rho_pil, 1.0, i_var, ev.trials, mc_rng)
        out["mse_ep"] = np.mean(np.sum(np.abs(h - hh) ** 2, axis=-1), axis=(0, 1))
    if "mse_sp" in metrics:
        ops = [[paths.operators(p, u, dims) for u in range(g.num_users)] for p in range(g.num_aps)]
        mse = np.zeros(g.num_users)
        for p in range(g.num_aps):
            hs, hhs, _, _ = simulate_sp_frames(ops[p], list(beta[p]), d.rho_pil, d.rho_dt, 1.0, 1.0, None,
                                               ev.trials, mc_rng)
            for u in range(g.num_users):
                mse[u] += np.mean(np.sum(np.abs(hs[u] - hhs[u]) ** 2, axis=-1)) / g.num_aps
        out["mse_sp"] = mse

    dense = [m for m in metrics if m in DENSE_METRICS]
    if dense:
        T = dense_link_operators(paths, dims)
        gm = gamma(cfg.estimation.scheme)
        w_ul = d.omega_ul_ep if cfg.estimation.scheme == "ep" else d.omega_ul_sp
        if "dl_mc" in metrics:
            st = simulate_downlink_mr(T, beta, gm, dl_power_control_full(gm), d.rho_d, ev.trials, mc_rng)
            out["dl_mc"] = d.omega_dl * st.se
        if "dl_sic" in metrics:
            joint, _ = downlink_mmse_sic_bound(T, beta, gm, dl_power_control_full(gm), d.rho_d, ev.trials, mc_rng)
            out["dl_sic"] = d.omega_dl * joint
        combs = [c for c in ("mr", "lmmse") if f"ul_l2_{c}" in metrics or f"ul_l3_{c}" in metrics]
        if combs:
            lv = uplink_levels(T, beta, gm, d.rho_dt, 1.0, ev.trials, mc_rng, combs, dense_cap=ev.dense_cap)
            for c in combs:
                for lvl in ("2", "3"):
                    if f"ul_l{lvl}_{c}" in metrics:
                        out[f"ul_l{lvl}_{c}"] = w_ul * lv[c][f"level{lvl}"]
    return {m: np.asarray(out[m], float) for m in metrics}


def _drop_task(args):
    cfg_dict, point, drop = args
    cfg = config_from_dict(cfg_dict)
    return point, drop, evaluate_drop(cfg, drop)


# ---------------------------------------------------------------------------
# report


@dataclass
class SEReport:
    name: str
    seed: int
    metrics: list
    points: list  # sweep values (or [None])
    sweep_param: str
    values: dict  # metric -> (points, drops, users)
    git: str = "unknown"
    runtime_s: float = 0.0  # kept out of the CSV so output stays byte-stable

    @property
    def drops(self) -> int:
        first = next(iter(self.values.values()), None)
        return 0 if first is None else first.shape[1]

    def aggregates(self) -> list[dict]:
        rows = []
        for pi, pt in enumerate(self.points):
            for m in self.metrics:
                v = self.values[m][pi]
                flat = v[~np.isnan(v)]
                sums = np.nansum(v, axis=1)
                # users of one drop share geometry, so errors are taken over drop means
                dm = sums / np.maximum(np.sum(~np.isnan(v), axis=1), 1)
                n = flat.size
                rows.append({
                    "point": pt, "metric": m,
                    "mean": float(flat.mean()) if n else float("nan"),
                    "stderr": float(dm.std(ddof=1) / np.sqrt(dm.size)) if dm.size > 1 else float("nan"),
                    "median": float(np.median(flat)) if n else float("nan"),
                    "p5": float(np.percentile(flat, 5, method="hazen")) if n else float("nan"),
                    "max": float(flat.max()) if n else float("nan"),
                    "sum_mean": float(sums.mean()) if sums.size else float("nan"),
                    "sum_stderr": float(sums.std(ddof=1) / np.sqrt(sums.size)) if sums.size > 1 else float("nan"),
                })
        return rows

    def stat(self, metric: str, key: str, point_index: int = 0) -> float:
        for r in self.aggregates():
            if r["metric"] == metric and r["point"] == self.points[point_index]:
                return r[key]
        raise KeyError(metric)


def git_describe() -> str:
    try:
        res = subprocess.run(["git", "describe", "--always", "--tags"], cwd=Path(__file__).parent,
                             capture_output=True, text=True, timeout=5)
        return res.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def run_scenario(cfg: ScenarioConfig, workers: int | None = None) -> SEReport:
    t0 = time.perf_counter()
    validate(cfg)
    workers = cfg.run.workers if workers is None else workers
    points = [None] if cfg.sweep is None else list(cfg.sweep.values)
    cfgs = [cfg] if cfg.sweep is None else [set_param(cfg, cfg.sweep.param, v) for v in points]
    tasks = [(config_to_dict(c), pi, drop) for pi, c in enumerate(cfgs) for drop in range(cfg.run.drops)]
    Ku = max(c.geometry.num_users for c in cfgs)
    # points with fewer users (user-count sweeps) are NaN-padded
    values = {m: np.full((len(points), cfg.run.drops, Ku), np.nan) for m in cfg.evaluation.metrics}
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_drop_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        results = [_drop_task(t) for t in tasks]
    for pi, drop, res in results:
        for m, v in res.items():
            values[m][pi, drop, : v.size] = v
    return SEReport(cfg.name, cfg.run.seed, list(cfg.evaluation.metrics), points,
                    cfg.sweep.param if cfg.sweep else "", values, git_describe(),
                    time.perf_counter() - t0)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def report_to_csv(report: SEReport) -> str:
    buf = io.StringIO()
    buf.write(f"# schema_version: {SCHEMA_VERSION}\n")
    buf.write(f"# scenario: {report.name}\n")
    buf.write(f"# seed: {report.seed}\n")
    buf.write(f"# git_describe: {report.git}\n")
    if report.sweep_param:
        buf.write(f"# sweep: {report.sweep_param}\n")
    buf.write(",".join(["point", "drop", "user"] + report.metrics) + "\n")
    for pi, pt in enumerate(report.points):
        for dr in range(report.drops):
            Ku = report.values[report.metrics[0]].shape[2]
            for u in range(Ku):
                vals = [report.values[m][pi, dr, u] for m in report.metrics]
                if all(np.isnan(vals)):
                    continue
                row = [_fmt(pt), str(dr), str(u)] + [_fmt(x) for x in vals]
                buf.write(",".join(row) + "\n")
    buf.write("# aggregates\n")
    keys = ["point", "metric", "mean", "stderr", "median", "p5", "max", "sum_mean", "sum_stderr"]
    buf.write(",".join(keys) + "\n")
    if report.drops:
        for r in report.aggregates():
            buf.write(",".join(_fmt(r[k]) for k in keys) + "\n")
    return buf.getvalue()


def emit_csv(report: SEReport, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report_to_csv(report), encoding="utf-8")
    return path


def parse_csv(text: str):
    """(rows, aggregates) as lists of dicts; numeric fields as floats."""
    body, _, agg = text.partition("# aggregates\n")
    lines = [l for l in body.splitlines() if l and not l.startswith("#")]

    def table(ls):
        if not ls:
            return []
        head = ls[0].split(",")
        out = []
        for l in ls[1:]:
            rec = {}
            for k, v in zip(head, l.split(",")):
                try:
                    rec[k] = float(v)
                except ValueError:
                    rec[k] = v
            out.append(rec)
        return out

    return table(lines), table([l for l in agg.splitlines() if l])


def cdf_table(report: SEReport, metric: str, point_index: int = 0):
    """Sorted values with empirical quantiles (i + 0.5) / n; linear
    interpolation at 0.05 reproduces the p5 aggregate."""
    v = report.values[metric][point_index]
    v = np.sort(v[~np.isnan(v)])
    return v, (np.arange(v.size) + 0.5) / v.size


def emit_cdf(report: SEReport, path) -> Path:
    buf = io.StringIO()
    buf.write("point,metric,value,quantile\n")
    for pi, pt in enumerate(report.points):
        for m in report.metrics:
            v, qt = cdf_table(report, m, pi)
            for a, b in zip(v, qt):
                buf.write(f"{_fmt(pt)},{m},{a!r},{b!r}\n")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def compare_modulations(a: SEReport, b: SEReport, metric_a: str | None = None, metric_b: str | None = None):
    """Ratio a/b of every aggregate statistic for one metric of each report."""
    if a.drops != b.drops:
        raise ValueError(f"drop counts differ ({a.drops} vs {b.drops})")
    ma = metric_a or a.metrics[0]
    mb = metric_b or b.metrics[0]
    out = []
    for pi in range(min(len(a.points), len(b.points))):
        ra = {r["metric"]: r for r in a.aggregates() if r["point"] == a.points[pi]}[ma]
        rb = {r["metric"]: r for r in b.aggregates() if r["point"] == b.points[pi]}[mb]
        row = {"point": a.points[pi]}
        for k in ("mean", "median", "p5", "max", "sum_mean"):
            row[k] = ra[k] / rb[k] if rb[k] != 0 else float("inf")
        out.append(row)
    return out
