"""Declarative run configuration: a single YAML file drives collection,
training and flight, with dotted-path command-line overrides.

Validation happens before anything runs: gain positive-definiteness, loop-rate
divisibility, ground-effect singularity clearance, and + when a model is
attached + the allocation contraction and tracking gain certificates.
"""

from __future__ import annotations

import copy
import hashlib
import json
from importlib import resources

import numpy as np
import yaml

from .aero import DisturbanceField, DragParams, GroundEffectParams, TableParams
from .control import ControllerGains
from .learn.training import SGDConfig
from .sim.harness import ExcitationConfig, NoiseConfig, RateConfig
from .vehicle import VehicleParams, build_allocation_matrix


class ConfigError(ValueError):
    pass


def default_config():
    with resources.files("quadland.configs").joinpath("default.yaml").open() as fh:
        return yaml.safe_load(fh)


def load_config(path=None, overrides=()):
    """Load YAML config (or the packaged default), then apply key=value
    overrides given as dotted paths, e.g. train.gamma=2.0."""
    cfg = default_config()
    if path is not None:
        with open(path) as fh:
            user = yaml.safe_load(fh) or {}
        _deep_update(cfg, user)
    for item in overrides:
        if "=" not in item:
            raise ConfigError("override %r is not key=value" % item)
        key, _, raw = item.partition("=")
        _set_path(cfg, key.strip(), yaml.safe_load(raw))
    return cfg


def _deep_update(base, extra):
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _deep_update(base[k], v)
        else:
            base[k] = v


def _set_path(cfg, dotted, value):
    node = cfg
    parts = dotted.split(".")
    for p in parts[:-1]:
        if p not in node or not isinstance(node[p], dict):
            node[p] = {}
        node = node[p]
    node[parts[-1]] = value


def config_hash(cfg):
    return hashlib.sha256(dump_config(cfg).encode()).hexdigest()


def dump_config(cfg):
    return yaml.safe_dump(cfg, sort_keys=True, default_flow_style=False)


# ---------------------------------------------------------------------------
# builders


def vehicle_params(cfg) -> VehicleParams:
    v = cfg["vehicle"]
    return VehicleParams(
        m=float(v["m"]), J=np.diag([float(x) for x in v["J"]]),
        g_mag=float(v["g_mag"]), c_T=float(v["c_T"]), c_Q=float(v["c_Q"]),
        l_arm=float(v["l_arm"]), rotor_diameter=float(v["rotor_diameter"]),
        air_density=float(v["air_density"]),
        u_max=float(v["u_max_rpm"]) ** 2)


def disturbance_field(cfg) -> DisturbanceField | None:
    f = cfg["field"]
    ge_cfg = f.get("ground_effect", {})
    ge = None
    if ge_cfg.get("enabled", True):
        ge = GroundEffectParams(mu=float(ge_cfg["mu"]), D=float(cfg["vehicle"]["rotor_diameter"]),
                                n0=float(ge_cfg["n0"]), c_t0=float(ge_cfg["c_t0"]),
                                ct_rel_slope=float(ge_cfg["ct_rel_slope"]))
    drag_cfg = f.get("drag", {})
    drag = (DragParams(c1=float(drag_cfg["c1"]), c2=float(drag_cfg["c2"]))
            if drag_cfg.get("enabled", True) else None)
    tb_cfg = f.get("table", {})
    table = None
    if tb_cfg.get("enabled", False):
        table = TableParams(x0=float(tb_cfg["x0"]), x1=float(tb_cfg["x1"]),
                            y0=float(tb_cfg["y0"]), y1=float(tb_cfg["y1"]),
                            table_height=float(tb_cfg["table_height"]),
                            edge_width=float(tb_cfg["edge_width"]))
    if ge is None and drag is None and table is None:
        return None
    return DisturbanceField(
        ground_effect=ge, drag=drag, table=table,
        rotor_offset=float(f["rotor_offset"]), min_height=float(f["min_height"]),
        force_bound=float(f["force_bound"]), tau_bound=float(f["tau_bound"]),
        tau_a=np.array([float(x) for x in f["tau_a"]]))


def controller_gains(cfg) -> ControllerGains:
    g = cfg["gains"]
    return ControllerGains(
        Lambda=float(g["Lambda"]) * np.eye(3), Kv=float(g["Kv"]) * np.eye(3),
        K_omega=float(g["K_omega"]) * np.eye(3),
        Lambda_R=float(g["Lambda_R"]) * np.eye(3),
        integral=bool(g["integral"]), integral_limit=float(g["integral_limit"]),
        fp_iters=int(g["fp_iters"]), fp_tol=float(g["fp_tol"]),
        rho_assumed=float(g["rho_assumed"]))


def rate_config(cfg) -> RateConfig:
    r = cfg["rates"]
    return RateConfig(physics_dt=float(r["physics_dt"]),
                      alloc_every=int(r["alloc_every"]),
                      attitude_every=int(r["attitude_every"]),
                      position_every=int(r["position_every"]),
                      log_every=int(r["log_every"]))


def noise_config(cfg) -> NoiseConfig:
    n = cfg["noise"]
    return NoiseConfig(enabled=bool(n["enabled"]), pos_sigma=float(n["pos_sigma"]),
                       vel_sigma=float(n["vel_sigma"]))


def sgd_config(cfg) -> SGDConfig:
    t = cfg["train"]
    policy = t["u_scale_policy"]
    if policy not in ("auto", "std"):
        policy = float(policy)
    return SGDConfig(batch_size=int(t["batch_size"]), lr=float(t["lr"]),
                     lr_decay=float(t["lr_decay"]), epochs=int(t["epochs"]),
                     seed=int(cfg["seed"]), hidden=int(t["hidden"]),
                     spectral_normalization=bool(t["spectral_normalization"]),
                     u_scale_policy=policy,
                     contraction_margin=float(t["contraction_margin"]))


def validate(cfg, model=None):
    """Reject configurations that violate the run preconditions.

    model: optional loaded SpecNormNet whose certificates are checked against
    this config's airframe.  Raises ConfigError with every failure listed.
    """
    problems = []
    try:
        params = vehicle_params(cfg)
    except ValueError as e:
        raise ConfigError("vehicle: %s" % e)
    try:
        field = disturbance_field(cfg)
    except ValueError as e:
        raise ConfigError("field: %s" % e)
    try:
        gains = controller_gains(cfg)
    except ValueError as e:
        raise ConfigError("gains: %s" % e)
    try:
        rate_config(cfg).validate()
    except ValueError as e:
        problems.append("rates: %s" % e)

    if field is not None and field.ground_effect is not None:
        if field.min_height <= field.ground_effect.singular_height:
            problems.append("field.min_height inside the singular band")

    B0 = build_allocation_matrix(params)
    sigma_b0_inv = float(np.linalg.svd(np.linalg.inv(B0), compute_uv=False)[0])
    if model is not None:
        L_a_u = model.certified_u_slope()
        contraction = sigma_b0_inv * L_a_u
        if contraction >= 1.0:
            problems.append(
                "contraction certificate fails: sigma(B0^-1)*L_a_u = %.3f >= 1"
                % contraction)
        if gains.lambda_min_Kv <= L_a_u * gains.rho_assumed:
            problems.append(
                "gain condition fails: lambda_min(Kv)=%.3f <= L_a*rho_assumed=%.3e"
                % (gains.lambda_min_Kv, L_a_u * gains.rho_assumed))
    if problems:
        raise ConfigError("; ".join(problems))
    return {"sigma_B0_inv": sigma_b0_inv}


def resolved_copy(cfg):
    return copy.deepcopy(cfg)


def write_resolved(cfg, path):
    with open(path, "w") as fh:
        fh.write(dump_config(cfg))


def to_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
