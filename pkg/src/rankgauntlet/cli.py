"""Operator entry point: run one experiment, sweep a parameter, or verify oracles.

Config files are flat-section key=value text (INI); any key can be overridden
on the command line with ``--set section.key=value``.  Unknown sections or
keys are hard errors so a typo cannot silently change an experiment.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import os
import sys
import time
from configparser import ConfigParser
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .errors import ConfigError, RankGauntletError
from .oracles import (
    brute_force_assignment,
    central_difference_gradient,
    crossing_edges_by_enumeration,
    random_ranking,
    theorem_bounds_exact,
    vote_oracle,
)
from .permopt import ContinuousMatrix, SinkhornConfig, attack_loss, hungarian_round, sinkhorn
from .ranking import majority_vote
from .sim import (
    DatasetSpec,
    ExperimentConfig,
    MetricsReport,
    round_csv_lines,
    run_experiment,
    summary_lines,
)
from .subnet import TrainConfig
from .vulnid import BenignEstimate, extract_vulnerable, vulnerable_bounds

SEED_ENV_VAR = "RANKGAUNTLET_SEED"

_SCHEMA: dict[str, dict[str, type]] = {
    "experiment": {
        "seed": int,
        "n_clients": int,
        "clients_per_round": int,
        "rounds": int,
        "m": int,
        "k_percent": float,
        "architecture": str,
        "partition": str,
        "beta": float,
    },
    "dataset": {
        "kind": str,
        "samples": int,
        "features": int,
        "classes": int,
        "center_scale": float,
        "noise": float,
        "train_fraction": float,
        "path": str,
    },
    "train": {
        "local_epochs": int,
        "batch_size": int,
        "learning_rate": float,
        "momentum": float,
        "weight_decay": float,
    },
    "attack": {
        "name": str,
        "zeta": float,
        "estimation": str,
        "sigma": float,
        "on_empty": str,
    },
    "defense": {
        "name": str,
        "xi": float,
        "xi_step": float,
        "subsample_dims": int,
        "filter_frac": float,
        "root_samples": int,
    },
    "sinkhorn": {
        "iterations": int,
        "temperature": float,
        "epochs": int,
        "learning_rate": float,
        "gumbel_noise": bool,
    },
}

_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def _parse_value(section: str, key: str, raw: str):
    try:
        caster = _SCHEMA[section][key]
    except KeyError:
        raise ConfigError(f"unknown config key [{section}] {key}") from None
    raw = raw.strip()
    if caster is bool:
        low = raw.lower()
        if low in _BOOL_TRUE:
            return True
        if low in _BOOL_FALSE:
            return False
        raise ConfigError(f"[{section}] {key}: expected a boolean, got {raw!r}")
    try:
        return caster(raw)
    except ValueError:
        raise ConfigError(
            f"[{section}] {key}: expected {caster.__name__}, got {raw!r}"
        ) from None


def load_config_dict(path: str) -> dict[str, dict]:
    parser = ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    out: dict[str, dict] = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        out[section] = {
            key: _parse_value(section, key, raw)
            for key, raw in parser.items(section)
        }
    return out


def apply_overrides(conf: dict[str, dict], sets: list[str]) -> dict[str, dict]:
    for item in sets:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set needs section.key=value, got {item!r}")
        section, dot, name = key.strip().partition(".")
        if not dot:
            raise ConfigError(f"--set key must be dotted (section.key): {item!r}")
        conf.setdefault(section, {})[name] = _parse_value(section, name, value)
    return conf


def build_experiment(conf: dict[str, dict]) -> ExperimentConfig:
    exp = dict(conf.get("experiment", {}))
    if "architecture" in exp:
        try:
            exp["architecture"] = tuple(
                int(tok) for tok in str(exp["architecture"]).split(",")
            )
        except ValueError:
            raise ConfigError(f"bad architecture {exp['architecture']!r}") from None
    attack = dict(conf.get("attack", {}))
    defense = dict(conf.get("defense", {}))
    try:
        return ExperimentConfig(
            **exp,
            dataset=DatasetSpec(**conf.get("dataset", {})),
            train=TrainConfig(**conf.get("train", {})),
            sinkhorn=SinkhornConfig(**conf.get("sinkhorn", {})),
            attack=attack.pop("name", "none"),
            attack_params=attack,
            defense=defense.pop("name", "frl"),
            defense_params=defense,
        )
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_experiment(path: str, sets: list[str]) -> ExperimentConfig:
    conf = load_config_dict(path)
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        conf.setdefault("experiment", {})["seed"] = _parse_value(
            "experiment", "seed", env_seed
        )
    apply_overrides(conf, sets)
    return build_experiment(conf)


def write_outputs(
    report: MetricsReport, cfg: ExperimentConfig, out_root: Path, duration: float
) -> Path:
    out_dir = out_root / f"exp-{report.config_hash}"
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "rounds.csv").write_text(
        "\n".join(round_csv_lines(report)) + "\n", encoding="ascii"
    )
    (out_dir / "summary.txt").write_text(
        "\n".join(summary_lines(report, cfg)) + "\n", encoding="ascii"
    )
    manifest = {
        "config_hash": report.config_hash,
        "artifact_version": __version__,
        "seed": cfg.seed,
        "output_dir": str(out_dir),
        "duration_s": round(duration, 3),
        "kernel_backend": kernels.BACKEND,
        "config": {k: v for k, v in cfg.flat_items()},
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="ascii"
    )
    return out_dir


def cmd_run(args) -> int:
    cfg = load_experiment(args.config, args.set)
    started = time.monotonic()
    report = run_experiment(cfg)
    out_dir = write_outputs(report, cfg, Path(args.out), time.monotonic() - started)
    print(f"wrote {out_dir} (phi={report.phi:.2f} acc={report.acc_attacked:.4f})")
    return 0


def _sweep_point(payload):
    path, sets, axis, value, out = payload
    cfg = load_experiment(path, sets + [f"{axis}={value}"])
    started = time.monotonic()
    report = run_experiment(cfg)
    write_outputs(report, cfg, Path(out), time.monotonic() - started)
    return value, report.phi, report.rho_mean, report.est_acc_mean


def cmd_sweep(args) -> int:
    values = [v for v in (tok.strip() for tok in args.values.split(",")) if v]
    if not values:
        raise ConfigError("sweep needs a non-empty value list")
    base = load_experiment(args.config, args.set)  # validates config + axis early
    apply_overrides({}, [f"{args.axis}={values[0]}"])
    out_root = Path(args.out)
    payloads = [(args.config, args.set, args.axis, v, args.out) for v in values]
    if args.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_point, payloads))
    else:
        rows = [_sweep_point(p) for p in payloads]
    out_root.mkdir(parents=True, exist_ok=True)
    axis_slug = args.axis.replace(".", "-")
    sweep_path = out_root / f"sweep-{base.config_hash()}-{axis_slug}.csv"
    lines = ["value,phi,rho,est_acc"]
    for value, phi, rho, est in rows:
        lines.append(f"{value},{phi:.6f},{rho:.6f},{est:.6f}")
    sweep_path.write_text("\n".join(lines) + "\n", encoding="ascii")
    print(f"wrote {sweep_path}")
    return 0


def run_oracle_suite(inject_fault: bool = False) -> list[dict]:
    """Cross-check the implementation against the embedded brute-force oracles."""
    rng = np.random.default_rng(20250810)
    results = []

    # 1. 2-D majority vote vs the 1-D sum-of-argsorts vote
    cases, failures = 0, 0
    for _ in range(200):
        n = int(rng.integers(2, 9))
        n_clients = int(rng.integers(1, 8))
        rankings = [random_ranking(rng, n) for _ in range(n_clients)]
        got = majority_vote(rankings).order
        want = vote_oracle([r.order for r in rankings])
        if inject_fault and cases == 17:
            want = want[::-1].copy()
        cases += 1
        failures += int(not np.array_equal(got, want))
    results.append({"family": "vote-equivalence", "cases": cases, "failures": failures})

    # 2. Theorem-1 band is necessary: enumerate all malicious rankings
    cases, failures = 0, 0
    for _ in range(40):
        n = int(rng.integers(4, 7))
        n_benign = int(rng.integers(1, 4))
        benign = [rng.permutation(n) + 1 for _ in range(n_benign)]
        k = float(rng.choice([25.0, 50.0, 75.0]))
        movable, _ = crossing_edges_by_enumeration(benign, m=1, k_percent=k)
        lower, upper, rep = theorem_bounds_exact(benign, m=1, k_percent=k)
        cases += 1
        out_of_band = [e for e in movable if not (lower < rep[e - 1] < upper)]
        failures += int(bool(out_of_band))
    results.append(
        {"family": "theorem1-enumeration", "cases": cases, "failures": failures}
    )

    # 3. Hungarian rounding vs brute force over all d! assignments
    cases, failures = 0, 0
    for _ in range(20):
        d = int(rng.integers(2, 6))
        ds = sinkhorn(
            ContinuousMatrix(rng.random((d, d))),
            SinkhornConfig(iterations=30, temperature=1.0),
        )
        perm = hungarian_round(ds)
        got = sum(ds.values[i, perm.cols[i] - 1] for i in range(d))
        want, _ = brute_force_assignment(ds.values)
        cases += 1
        failures += int(abs(got - want) > 1e-12)
    results.append(
        {"family": "hungarian-brute-force", "cases": cases, "failures": failures}
    )

    # 4. Attack-loss gradients vs central finite differences
    cfg = SinkhornConfig(iterations=20, temperature=0.5)
    cases, failures = 0, 0
    for _ in range(6):
        n = 6
        n_mal = int(rng.integers(1, 3))
        rankings = [random_ranking(rng, n) for _ in range(n_mal)]
        est = BenignEstimate(values=rng.normal(10, 3, n), method="alternative", round_t=0)
        vrange = vulnerable_bounds(est, m=2, k_percent=50)
        if vrange.edge_ids.size < 2 or vrange.edge_ids.size > 4:
            continue
        r_v = extract_vulnerable(rankings, vrange)
        d = r_v[0].d
        xs = [rng.normal(size=(d, d)) for _ in range(n_mal)]
        _, grads = attack_loss([ContinuousMatrix(x) for x in xs], r_v, cfg=cfg)
        ok = True
        for u in range(n_mal):
            def f(xu, u=u):
                alt = [x.copy() for x in xs]
                alt[u] = xu
                loss, _ = attack_loss([ContinuousMatrix(x) for x in alt], r_v, cfg=cfg)
                return loss

            fd = central_difference_gradient(f, xs[u])
            rel = np.abs(fd - grads[u]).max() / max(np.abs(fd).max(), 1e-12)
            ok = ok and rel <= 1e-4
        cases += 1
        failures += int(not ok)
    results.append(
        {"family": "sinkhorn-gradient-fd", "cases": cases, "failures": failures}
    )

    # 5. Sinkhorn output is doubly stochastic
    cases, failures = 0, 0
    for tau in (1.0, 0.1):
        for _ in range(10):
            d = int(rng.integers(2, 11))
            ds = sinkhorn(
                ContinuousMatrix(rng.normal(size=(d, d))),
                SinkhornConfig(iterations=50, temperature=tau),
            )
            cases += 1
            failures += int(ds.max_marginal_error() > 1e-6)
    results.append(
        {"family": "sinkhorn-doubly-stochastic", "cases": cases, "failures": failures}
    )
    return results


def cmd_verify(args) -> int:
    results = run_oracle_suite(inject_fault=args.self_test_fail)
    width = max(len(r["family"]) for r in results)
    all_ok = True
    for r in results:
        ok = r["failures"] == 0
        all_ok = all_ok and ok
        status = "PASS" if ok else f"FAIL({r['failures']})"
        print(f"{r['family']:<{width}}  cases={r['cases']:<4d}  {status}")
    return 0 if all_ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="rankgauntlet",
        description="Federated ranking-learning experiments: attacks, defenses, metrics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment from a config file")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--set", action="append", default=[], metavar="K=V")
    p_run.add_argument("--out", default="runs")
    p_run.set_defaults(fn=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run one experiment per axis value")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--axis", required=True, metavar="SECTION.KEY")
    p_sweep.add_argument("--values", required=True, metavar="V1,V2,...")
    p_sweep.add_argument("--set", action="append", default=[], metavar="K=V")
    p_sweep.add_argument("--out", default="runs")
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.set_defaults(fn=cmd_sweep)

    p_verify = sub.add_parser("verify", help="run the embedded oracle suite")
    p_verify.add_argument("--self-test-fail", action="store_true", help=argparse.SUPPRESS)
    p_verify.set_defaults(fn=cmd_verify)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (RankGauntletError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
