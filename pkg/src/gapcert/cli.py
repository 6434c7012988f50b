"""Command-line front end.

Subcommands
-----------
verify       build and solve a certificate MILP, emit a JSON report
attack       projected-gradient search for a high-gap scenario
oracle       exhaustive latent-grid scan (small cases only)
train        fit a proxy on sampled instances and save the weights
gen          write a deterministic batch of sampled instances
export-mps   dump the certificate MILP in fixed MPS format

Any subcommand accepts --config pointing at a TOML file whose keys
mirror the long flag names (dashes become underscores); explicit flags
win over file values.  Reports go to --out when given, stdout otherwise.
Exit status: 0 on success, 2 when a time limit truncated the solve (the
partial report is still written), 1 on any error — errors print a
single JSON line on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys

try:
    import tomllib
except ModuleNotFoundError:         # 3.10
    import tomli as tomllib

import numpy as np

from . import dcopf, knapsack
from .attack import AttackConfig, build_vfa, pga_vfa
from .lp_core import to_mps
from .milp import MilpLimits
from .neural import init_network, load_weights, save_weights, toy_train
from .verify import grid_slack, oracle_grid, verify

_HIDDEN = (16, 16)   # layout used when no weights file is supplied

_DEFAULTS = {
    "family": "dcopf", "case": None, "weights": None, "u": 0.1,
    "freeze_beta": "", "formulation": "compact", "obbt": "lp",
    "warm": "reference", "time_limit": None, "gap": None, "seed": 0,
    "workers": 1, "starts": 8, "partitions": 1, "cuts": 64,
    "resolution": 25, "samples": 64, "epochs": 50, "lr": 1e-3,
    "count": 16, "out": None, "config": None,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):   # JSON diagnostics, not usage dumps
        raise UsageError(message)


def _build_parser() -> argparse.ArgumentParser:
    top = _Parser(prog="gapcert")
    sub = top.add_subparsers(dest="command", required=True)

    def add(name, *flags):
        p = sub.add_parser(name)
        spec = {
            "family": dict(choices=("dcopf", "knapsack")),
            "case": dict(help="desk case name or JSON file"),
            "weights": dict(help="weights JSON (default: seeded init)"),
            "u": dict(type=float),
            "freeze_beta": dict(metavar="I,J,...",
                                help="pin these beta coordinates (dispatch)"),
            "formulation": dict(choices=("compact", "bilevel")),
            "obbt": dict(choices=("lp", "milp", "off")),
            "warm": dict(choices=("none", "reference", "pga")),
            "time_limit": dict(type=float, metavar="SECONDS"),
            "gap": dict(type=float, help="relative gap to stop at"),
            "seed": dict(type=int),
            "workers": dict(type=int),
            "starts": dict(type=int),
            "partitions": dict(type=int),
            "cuts": dict(type=int),
            "resolution": dict(type=int),
            "samples": dict(type=int),
            "epochs": dict(type=int),
            "lr": dict(type=float),
            "count": dict(type=int),
            "out": dict(),
            "config": dict(help="TOML defaults file"),
        }
        for f in flags + ("config",):
            p.add_argument("--" + f.replace("_", "-"), default=None,
                           **spec[f])
        return p

    add("verify", "family", "case", "weights", "u", "freeze_beta",
        "formulation", "obbt", "warm", "time_limit", "gap", "seed",
        "workers", "starts", "partitions", "cuts", "out")
    add("attack", "family", "case", "weights", "u", "freeze_beta", "seed",
        "workers", "starts", "partitions", "cuts", "out")
    add("oracle", "family", "case", "weights", "u", "freeze_beta",
        "resolution", "seed", "out")
    add("train", "family", "case", "u", "samples", "epochs", "lr", "seed",
        "out")
    add("gen", "family", "case", "u", "count", "seed", "out")
    add("export-mps", "family", "case", "weights", "u", "freeze_beta",
        "formulation", "obbt", "seed", "out")
    return top


def _settings(args) -> dict:
    table = {}
    if getattr(args, "config", None):
        with open(args.config, "rb") as fh:
            table = tomllib.load(fh)
    out = {}
    for key, dflt in _DEFAULTS.items():
        val = getattr(args, key, None)
        if val is None:
            val = table.get(key, dflt)
        out[key] = val
    return out


def _load_case(family, name):
    desk = dcopf.DESK_CASES if family == "dcopf" else knapsack.DESK_CASES
    if name is None:
        name = "2bus" if family == "dcopf" else "k5"
    if name in desk:
        return desk[name](), name
    loader = dcopf.load_case if family == "dcopf" else knapsack.load_case
    try:
        return loader(name), name
    except FileNotFoundError:
        raise ValueError(f"unknown case {name!r}: not a desk case "
                         f"({', '.join(sorted(desk))}) or readable file")


def _parse_frozen(text) -> tuple:
    if not text:
        return ()
    return tuple(int(t) for t in str(text).split(",") if t != "")


def _make_domain(family, case, s):
    if family == "dcopf":
        return dcopf.LoadDomain(case.d_ref, u=float(s["u"]),
                                frozen_beta=_parse_frozen(s["freeze_beta"]))
    if _parse_frozen(s["freeze_beta"]):
        raise ValueError("freeze-beta applies to the dispatch family only")
    return knapsack.KnapsackDomain(K=case.K, u=float(s["u"]))


def _load_net(family, case, s):
    if s["weights"]:
        return load_weights(s["weights"])
    if family == "dcopf":
        sizes = (case.B, *_HIDDEN, case.B)
    else:
        sizes = (case.K + 1, *_HIDDEN, case.K)
    return init_network(sizes, seed=int(s["seed"]))


def _emit(doc, out_path) -> None:
    text = json.dumps(doc, indent=1) + "\n"
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _limits(s) -> MilpLimits:
    kw = {}
    if s["time_limit"] is not None:
        kw["time_s"] = float(s["time_limit"])
    if s["gap"] is not None:
        kw["gap_rel"] = float(s["gap"])
    return MilpLimits(**kw)


def _attack_cfg(s) -> AttackConfig:
    return AttackConfig(n_starts=int(s["starts"]),
                        n_partitions=int(s["partitions"]),
                        n_cuts=int(s["cuts"]),
                        workers=int(s["workers"]))


def _cmd_verify(s) -> int:
    case, label = _load_case(s["family"], s["case"])
    domain = _make_domain(s["family"], case, s)
    net = _load_net(s["family"], case, s)
    rep = verify(case, net, domain, formulation=s["formulation"],
                 obbt_mode=s["obbt"], warm=s["warm"], limits=_limits(s),
                 seed=int(s["seed"]), attack_cfg=_attack_cfg(s),
                 label=label)
    _emit(rep.to_json_dict(), s["out"])
    if rep.status == "OPTIMAL":
        return 0
    if rep.status == "TIME_LIMIT":
        return 2
    raise RuntimeError(f"solve ended with status {rep.status}")


def _cmd_attack(s) -> int:
    case, _ = _load_case(s["family"], s["case"])
    domain = _make_domain(s["family"], case, s)
    net = _load_net(s["family"], case, s)
    cfg = _attack_cfg(s)
    vfa = build_vfa(case, domain, cfg.n_cuts, seed=int(s["seed"]))
    res = pga_vfa(case, net, domain, vfa, cfg, seed=int(s["seed"]))
    _emit(res.to_json_dict(), s["out"])
    return 0


def _cmd_oracle(s) -> int:
    case, _ = _load_case(s["family"], s["case"])
    domain = _make_domain(s["family"], case, s)
    net = _load_net(s["family"], case, s)
    grid = oracle_grid(case, net, domain, resolution=int(s["resolution"]))
    _emit({"best_gap": grid.best_gap,
           "best_latent": list(grid.best_latent),
           "points": grid.points,
           "slack": grid_slack(grid.gaps)}, s["out"])
    return 0


def _cmd_train(s) -> int:
    case, _ = _load_case(s["family"], s["case"])
    seed = int(s["seed"])
    n = int(s["samples"])
    if s["family"] == "dcopf":
        pairs, _ = dcopf.generate_instances(case, n, seed=seed)
        rows = np.array([d for d, _ in pairs])
    else:
        rng = np.random.default_rng(seed)
        u = float(s["u"])
        rows = np.array([
            knapsack.scaled_inputs(case, a, b)
            for a, b in zip(rng.uniform(1 - u, 1 + u, n),
                            rng.uniform(1 - u, 1 + u, (n, case.K)))])
    losses = []
    net = toy_train(case, rows, epochs=int(s["epochs"]), lr=float(s["lr"]),
                    hidden=_HIDDEN, seed=seed,
                    on_epoch=lambda e, loss: losses.append(loss))
    out = s["out"] or "weights.json"
    save_weights(net, out)
    sys.stdout.write(json.dumps(
        {"out": out, "epochs": len(losses),
         "final_loss": losses[-1] if losses else None}) + "\n")
    return 0


def _cmd_gen(s) -> int:
    case, label = _load_case(s["family"], s["case"])
    seed, n = int(s["seed"]), int(s["count"])
    if s["family"] == "dcopf":
        pairs, skipped = dcopf.generate_instances(case, n, seed=seed)
        rows = [{"d": [float(v) for v in d], "phi": sol.objective}
                for d, sol in pairs]
        doc = {"family": "dcopf", "case": label, "seed": seed,
               "skipped": skipped, "rows": rows}
    else:
        rng = np.random.default_rng(seed)
        u = float(s["u"])
        rows = []
        for _ in range(n):
            a = float(rng.uniform(1 - u, 1 + u))
            b = rng.uniform(1 - u, 1 + u, case.K)
            rows.append({"alpha": a, "beta": [float(v) for v in b],
                         "inputs": [float(v) for v in
                                    knapsack.scaled_inputs(case, a, b)]})
        doc = {"family": "knapsack", "case": label, "seed": seed,
               "rows": rows}
    out = s["out"] or "instances.json"
    with open(out, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    sys.stdout.write(json.dumps({"out": out, "count": n}) + "\n")
    return 0


def _cmd_export_mps(s) -> int:
    case, label = _load_case(s["family"], s["case"])
    domain = _make_domain(s["family"], case, s)
    net = _load_net(s["family"], case, s)
    if s["family"] == "knapsack" and s["formulation"] == "bilevel":
        raise ValueError("bilevel unavailable for non-convex family")
    from .encodings import ibp, obbt
    from .verify import _input_box
    box = _input_box(case, domain)
    bounds = ibp(net, box) if s["obbt"] == "off" else \
        obbt(net, box, relax=(s["obbt"] == "lp"))
    if s["family"] == "dcopf":
        if s["formulation"] == "bilevel":
            model = dcopf.build_bilevel_milp(case, net, domain,
                                             bounds=bounds)
        else:
            model = dcopf.build_compact_milp(case, net, domain,
                                             bounds=bounds)
    else:
        model = knapsack.build_knapsack_compact_milp(case, net, domain,
                                                     bounds=bounds)
    text = to_mps(model.problem.lp, name=label.upper().replace("-", ""),
                  binary_idx=model.problem.binary_idx)
    out = s["out"] or f"{label}-{s['formulation']}.mps"
    with open(out, "w") as fh:
        fh.write(text)
    sys.stdout.write(json.dumps(
        {"out": out, "rows": model.problem.lp.n_rows,
         "binaries": len(model.problem.binary_idx)}) + "\n")
    return 0


_COMMANDS = {
    "verify": _cmd_verify,
    "attack": _cmd_attack,
    "oracle": _cmd_oracle,
    "train": _cmd_train,
    "gen": _cmd_gen,
    "export-mps": _cmd_export_mps,
}


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        return _COMMANDS[args.command](_settings(args))
    except SystemExit as exc:        # argparse --help
        return 0 if exc.code in (0, None) else 1
    except Exception as exc:
        print(json.dumps({"error": str(exc), "type": type(exc).__name__}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
