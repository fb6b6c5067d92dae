"""Command-line pipeline: collect -> train -> fly -> evaluate -> sweep.

Every command reads one declarative config (plus --set overrides), validates
it before running, and writes deterministic artifacts (CSV/JSON only) into the
output directory together with the fully-resolved config for provenance.

Exit codes: 0 success, 2 validation/certificate failure, 3 divergence, 4 I/O.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import config as cfgmod
from .config import ConfigError
from .control import ContractionError, GainConditionError
from .learn import (CertificateError, SpecNormNet, TrainingSet, audit_lipschitz,
                    extract_labels, train)
from .learn.net import feature_names
from .sim import (DivergenceError, FlightLog, collect_scenario, ellipse_scenario,
                  evaluate, hover_scenario, landing_scenario, run_scenario,
                  table_collect_scenario)
from .sim.scenarios import Scenario
from .learn.audit import LipschitzAudit


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = cfgmod.load_config(args.config, args.overrides or [])
        return args.func(cfg, args)
    except (ConfigError, CertificateError, ContractionError, GainConditionError) as e:
        print("error: %s" % e, file=sys.stderr)
        return 2
    except DivergenceError as e:
        print("error: %s" % e, file=sys.stderr)
        return 3
    except OSError as e:
        print("error: %s" % e, file=sys.stderr)
        return 4


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="quadland",
        description="Quadrotor near-ground flight pipeline: synthetic "
                    "disturbance fields, Lipschitz-certified disturbance "
                    "learning, and stability-verified tracking control.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", help="YAML config file (defaults built in)")
    common.add_argument("--set", dest="overrides", action="append", metavar="KEY=VALUE",
                        help="override a config entry, e.g. train.gamma=2.0")
    common.add_argument("--out", help="output directory (overrides output_dir)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("collect", parents=[common],
                       help="fly the scripted data-collection program")
    p.add_argument("--table", action="store_true",
                   help="collect near-table data instead of the height sweep")
    p.add_argument("--duration", type=float,
                   help="total duration [s]; scales the default program")
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("train", parents=[common],
                       help="train the disturbance predictor from flight logs")
    p.add_argument("--log", dest="logs", action="append", required=True,
                   help="flight log CSV (repeatable)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("fly", parents=[common],
                       help="fly the configured scenario and write metrics")
    p.add_argument("--model", help="model JSON for the neural controller")
    p.set_defaults(func=cmd_fly)

    p = sub.add_parser("evaluate", parents=[common],
                       help="recompute metrics from a stored flight log")
    p.add_argument("--log", required=True)
    p.add_argument("--model", help="model JSON providing eps_m/certificates")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", parents=[common],
                       help="comparison sweeps over arch, gamma or gains")
    p.add_argument("--axis", choices=["arch", "gamma", "gains"], required=True)
    p.add_argument("--log", dest="logs", action="append",
                   help="flight log CSV for label extraction (repeatable)")
    p.add_argument("--model", help="model JSON (gains axis)")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_sweep)
    return parser


def _prepare_out(cfg, args):
    out = args.out or cfg["output_dir"]
    os.makedirs(out, exist_ok=True)
    cfgmod.write_resolved(cfg, os.path.join(out, "config.yaml"))
    return out


def _scenario_from_config(cfg, kind=None, controller=None) -> Scenario:
    sc = cfg["scenario"]
    kind = kind or sc["kind"]
    field = cfgmod.disturbance_field(cfg)
    seed = int(sc.get("seed", cfg["seed"]))
    if kind == "landing":
        out = landing_scenario(field, duration=float(sc["duration"]),
                               apex=float(sc["apex"]), seed=seed)
    elif kind == "hover":
        out = hover_scenario(field, z=float(sc["hover_z"]),
                             duration=float(sc["duration"]), seed=seed)
    elif kind == "cross_table":
        out = ellipse_scenario(field, periods=float(sc["periods"]), seed=seed)
    else:
        raise ConfigError("unknown scenario kind %r" % kind)
    out.controller = controller or sc["controller"]
    out.rates = cfgmod.rate_config(cfg)
    out.noise = cfgmod.noise_config(cfg)
    return out


# ---------------------------------------------------------------------------
# collect


def cmd_collect(cfg, args):
    cfgmod.validate(cfg)
    out = _prepare_out(cfg, args)
    params = cfgmod.vehicle_params(cfg)
    gains = cfgmod.controller_gains(cfg)
    field = cfgmod.disturbance_field(cfg)
    col = cfg["collect"]
    seed = int(cfg["seed"])

    if args.table:
        if field is None or field.table is None:
            raise ConfigError("table collection requires field.table.enabled")
        duration = float(args.duration or col["table_duration"])
        scenario = table_collect_scenario(field, seed=seed, duration=duration,
                                          noise=bool(col["noise"]),
                                          excitation=bool(col["excitation"]))
        stem = "collect_table"
    else:
        p1, p2 = float(col["part1_duration"]), float(col["part2_duration"])
        if args.duration:
            scale = float(args.duration) / (p1 + p2)
            p1, p2 = p1 * scale, p2 * scale
        scenario = collect_scenario(field, seed=seed, part1_duration=p1,
                                    part2_duration=p2,
                                    n_heights=int(col["n_heights"]),
                                    z_lo=float(col["z_lo"]), z_hi=float(col["z_hi"]),
                                    noise=bool(col["noise"]),
                                    excitation=bool(col["excitation"]))
        stem = "collect"
    scenario.rates = cfgmod.rate_config(cfg)

    log = run_scenario(scenario, params, gains, predictor=None)
    log.meta["config_hash"] = cfgmod.config_hash(cfg)
    log.to_csv(os.path.join(out, stem + ".csv"))
    log.write_sidecar(os.path.join(out, stem + ".json"))
    print("wrote %s (%d records, %.1f s)" % (os.path.join(out, stem + ".csv"),
                                             len(log.t), scenario.duration))
    return 0


# ---------------------------------------------------------------------------
# train


def _load_training_set(cfg, log_paths):
    params = cfgmod.vehicle_params(cfg)
    t = cfg["train"]
    Xs, Ys, tags, zs, ns, vzs = [], [], [], [], [], []
    hasher = hashlib.sha256()
    for path in log_paths:
        sidecar = os.path.splitext(path)[0] + ".json"
        meta = {}
        if os.path.exists(sidecar):
            with open(sidecar) as fh:
                meta = json.load(fh)
        with open(path, "rb") as fh:
            hasher.update(fh.read())
        log = FlightLog.from_csv(path, meta=meta)
        lowpass = float(t["lowpass_hz"]) if meta.get("noise_enabled") else None
        ds = extract_labels(log, params, attitude=t["attitude"],
                            include_xy=bool(t["include_xy"]),
                            lowpass_hz=lowpass, val_fraction=0.0, seed=0)
        Xs.append(ds.X)
        Ys.append(ds.Y)
        tags.append(ds.tags)
        zs.append(ds.z)
        ns.append(ds.n_rotor)
        vzs.append(ds.vz)
    data = TrainingSet.from_arrays(
        np.concatenate(Xs), np.concatenate(Ys),
        feature_names(t["attitude"], bool(t["include_xy"])),
        tags=np.concatenate(tags), z=np.concatenate(zs),
        n_rotor=np.concatenate(ns), vz=np.concatenate(vzs),
        val_fraction=float(t["val_fraction"]), seed=int(cfg["seed"]),
        attitude=t["attitude"], include_xy=bool(t["include_xy"]))
    return data, hasher.hexdigest()


def cmd_train(cfg, args):
    certs = cfgmod.validate(cfg)
    out = _prepare_out(cfg, args)
    data, data_hash = _load_training_set(cfg, args.logs)
    t = cfg["train"]
    result = train(data, arch=t["arch"], gamma=float(t["gamma"]),
                   sgd=cfgmod.sgd_config(cfg), sigma_b0_inv=certs["sigma_B0_inv"])
    audit = audit_lipschitz(result.net, seed=int(cfg["seed"]))
    contraction = certs["sigma_B0_inv"] * audit.L_a_u

    provenance = {
        "arch": t["arch"],
        "config_hash": cfgmod.config_hash(cfg),
        "data_hash": data_hash,
        "seed": int(cfg["seed"]),
        "n_records": len(data),
        "train_max_err": result.train_max_err,
        "val_max_err": result.val_max_err,
        "eps_m": result.eps_m,
        "val_rmse": result.final_val_rmse,
        "audit": audit.to_dict(),
        "contraction": contraction,
    }
    model_path = os.path.join(out, "model.json")
    cfgmod.to_json(result.net.to_dict(provenance=provenance), model_path)
    with open(os.path.join(out, "loss_curve.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "lr", "train_loss_N", "val_loss_N"])
        for epoch, lr, tr, va in result.loss_curve_rows():
            w.writerow([epoch, repr(lr), repr(tr), repr(va)])

    print("wrote %s" % model_path)
    print("Lipschitz report: certified=%.4g empirical=%.4g gamma=%s" %
          (audit.certified_bound, audit.empirical_estimate, result.net.gamma))
    print("  L_a_u=%.4g N/RPM^2, sigma(B0^-1)*L_a_u=%.4g, eps_m=%.4g N" %
          (audit.L_a_u, contraction, result.eps_m))
    return 0


# ---------------------------------------------------------------------------
# fly / evaluate


def _load_model(path):
    with open(path) as fh:
        d = json.load(fh)
    net = SpecNormNet.from_dict(d)
    return net, d.get("provenance", {})


def cmd_fly(cfg, args):
    sc_cfg = cfg["scenario"]
    net, prov = (None, {})
    if sc_cfg["controller"] in ("neural",) or args.model:
        if sc_cfg["controller"] == "neural" and not args.model:
            raise ConfigError("scenario.controller=neural requires --model")
    if args.model and sc_cfg["controller"] != "baseline":
        net, prov = _load_model(args.model)
    cfgmod.validate(cfg, model=net)
    out = _prepare_out(cfg, args)
    params = cfgmod.vehicle_params(cfg)
    gains = cfgmod.controller_gains(cfg)
    scenario = _scenario_from_config(cfg)

    log = run_scenario(scenario, params, gains, predictor=net)
    log.meta["config_hash"] = cfgmod.config_hash(cfg)
    if prov:
        log.meta["model_provenance"] = {k: prov[k] for k in
                                        ("eps_m", "audit", "contraction", "arch")
                                        if k in prov}
    stem = "fly_%s" % scenario.name
    log.to_csv(os.path.join(out, stem + ".csv"))
    log.write_sidecar(os.path.join(out, stem + ".json"))

    audit = LipschitzAudit.from_dict(prov["audit"]) if "audit" in prov else None
    metrics = evaluate(log, gains, audit=audit, eps_m=prov.get("eps_m"),
                       params=params)
    cfgmod.to_json(metrics.to_dict(), os.path.join(out, stem + "_metrics.json"))
    print("wrote %s: terminal|z err|=%.4f m, max|s|=%.3f, envelope violations=%d"
          % (stem, metrics.terminal_height_error, metrics.max_s,
             metrics.envelope_violations))
    return 0


def cmd_evaluate(cfg, args):
    params = cfgmod.vehicle_params(cfg)
    gains = cfgmod.controller_gains(cfg)
    sidecar = os.path.splitext(args.log)[0] + ".json"
    meta = {}
    if os.path.exists(sidecar):
        with open(sidecar) as fh:
            meta = json.load(fh)
    log = FlightLog.from_csv(args.log, meta=meta)
    audit, eps_m = None, None
    if args.model:
        _, prov = _load_model(args.model)
        eps_m = prov.get("eps_m")
        if "audit" in prov:
            audit = LipschitzAudit.from_dict(prov["audit"])
    metrics = evaluate(log, gains, audit=audit, eps_m=eps_m, params=params)
    out = _prepare_out(cfg, args)
    path = os.path.join(out, os.path.splitext(os.path.basename(args.log))[0]
                        + "_metrics.json")
    cfgmod.to_json(metrics.to_dict(), path)
    print(json.dumps(metrics.to_dict(), indent=2, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# sweep


def cmd_sweep(cfg, args):
    out = _prepare_out(cfg, args)
    workers = args.workers or int(cfg["sweep"].get("workers", 1))
    if args.axis == "arch":
        rows = _sweep_arch(cfg, args, workers)
        path = os.path.join(out, "sweep_arch.csv")
    elif args.axis == "gamma":
        rows = _sweep_gamma(cfg, args)
        path = os.path.join(out, "sweep_gamma.csv")
    else:
        rows = _sweep_gains(cfg, args, out)
        path = os.path.join(out, "sweep_gains.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in rows:
            w.writerow(row)
    print("wrote %s" % path)
    return 0


def _arch_case(payload):
    cfg, logs, arch = payload
    certs = cfgmod.validate(cfg)
    params = cfgmod.vehicle_params(cfg)
    gains = cfgmod.controller_gains(cfg)
    net, audit, eps_m = None, None, None
    if arch != "baseline":
        data, _ = _load_training_set(cfg, logs)
        t = dict(cfg["train"], arch=arch)
        result = train(data, arch=arch, gamma=float(t["gamma"]),
                       sgd=cfgmod.sgd_config(cfg),
                       sigma_b0_inv=certs["sigma_B0_inv"])
        net = result.net
        audit = audit_lipschitz(net, seed=int(cfg["seed"]))
        eps_m = result.eps_m
    scenario = _scenario_from_config(cfg, kind="landing",
                                     controller="baseline" if net is None else "neural")
    log = run_scenario(scenario, params, gains, predictor=net)
    m = evaluate(log, gains, audit=audit, eps_m=eps_m, params=params)
    return [arch, repr(m.terminal_height_error), repr(m.takeoff_rms_z),
            repr(m.max_s), repr(m.eps_m_used), str(m.envelope_violations)]


def _sweep_arch(cfg, args, workers):
    if not args.logs:
        raise ConfigError("arch sweep requires --log")
    archs = ["4layer", "1layer", "0layer", "baseline"]
    payloads = [(cfg, args.logs, a) for a in archs]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_arch_case, payloads))
    else:
        results = [_arch_case(p) for p in payloads]
    return [["arch", "terminal_height_error", "takeoff_rms_z", "max_s",
             "eps_m", "envelope_violations"]] + results


def _sweep_gamma(cfg, args):
    """Certificate status per gamma under the fixed (std) u-feature scale."""
    if not args.logs:
        raise ConfigError("gamma sweep requires --log")
    from .learn.training import build_input_spec, check_train_certificate
    base = cfgmod.load_config(None, [])
    certs = cfgmod.validate(cfg)
    data, _ = _load_training_set(cfg, args.logs)
    rows = [["gamma", "status", "worst_case_contraction"]]
    for gamma in cfg["sweep"]["gammas"]:
        sgd = cfgmod.sgd_config(cfg)
        sgd.u_scale_policy = "std"
        spec = build_input_spec(data, float(gamma), sgd, certs["sigma_B0_inv"])
        u_cols = spec.u_indices
        worst = (certs["sigma_B0_inv"] * float(gamma) * spec.output_scale
                 / float(np.min(spec.scale[u_cols])))
        try:
            check_train_certificate(float(gamma), spec, certs["sigma_B0_inv"])
            status = "certified"
        except CertificateError:
            status = "refused"
        rows.append([repr(float(gamma)), status, repr(worst)])
    del base
    return rows


def _sweep_gains(cfg, args, out):
    if not args.model:
        raise ConfigError("gains sweep requires --model")
    net, prov = _load_model(args.model)
    params = cfgmod.vehicle_params(cfg)
    audit = LipschitzAudit.from_dict(prov["audit"]) if "audit" in prov else None
    rows = [["kv_scale", "terminal_height_error", "steady_p_err", "max_s",
             "envelope_violations", "log_file"]]
    for scale in cfg["sweep"]["kv_scales"]:
        sub = cfgmod.resolved_copy(cfg)
        sub["gains"]["Kv"] = float(cfg["gains"]["Kv"]) * float(scale)
        cfgmod.validate(sub, model=net)
        gains = cfgmod.controller_gains(sub)
        scenario = _scenario_from_config(sub, kind="landing", controller="neural")
        log = run_scenario(scenario, params, gains, predictor=net)
        stem = "sweep_gains_kv%g" % scale
        log.to_csv(os.path.join(out, stem + ".csv"))
        log.write_sidecar(os.path.join(out, stem + ".json"))
        m = evaluate(log, gains, audit=audit, eps_m=prov.get("eps_m"), params=params)
        rows.append([repr(float(scale)), repr(m.terminal_height_error),
                     repr(m.steady_p_err), repr(m.max_s),
                     str(m.envelope_violations), stem + ".csv"])
    return rows


if __name__ == "__main__":
    sys.exit(main())
