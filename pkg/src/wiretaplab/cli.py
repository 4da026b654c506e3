"""Command-line front end: configuration, subcommands, result persistence.

Configuration is a flat JSON object with dotted keys mirroring the module
fields; ``--set key=value`` flags override file values, and the fully
resolved configuration is echoed into the output directory for provenance.
Exit codes: 0 success, 2 configuration error, 3 enumeration budget exceeded,
4 missing input file, 5 invariant failure, 1 unexpected error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, bounds, channel, ecc, hashdesign, oracle, pipeline
from .pipeline import SystemConfig, substream

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BUDGET = 3
EXIT_MISSING = 4
EXIT_INVARIANT = 5

_DEFAULTS = {
    "system.k": 3,
    "system.b": 1,
    "system.code": "hamming74",
    "system.channel_eve": "bsc:0.1",
    "system.channel_bob": "bsc:0.1",
    "system.uhf": True,
    "seed": 42,
    "data.count": 10000,
    "estimator": "oracle",
    "train.samples": 100000,
    "train.eval_samples": 20000,
    "train.batch_size": 512,
    "train.lr": 1e-3,
    "train.epochs": 110,
    "train.curriculum": "auto",  # auto|fixed
    "oracle.mc_samples": 200000,
    "design.max_leakage": 1.0,
    "design.max_iters": 32,
    "design.retrain": "fresh-per-k",
    "sweep.values": "0.0:0.5:0.05",
    "bounds.samples": 20000,
    "ber.count": 100000,
}


class CliError(Exception):
    def __init__(self, message: str, exit_code: int):
        super().__init__(message)
        self.exit_code = exit_code


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(_DEFAULTS)
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise CliError(f"config file not found: {path}", EXIT_MISSING)
        try:
            loaded = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise CliError(f"config is not valid JSON: {e}", EXIT_CONFIG)
        if not isinstance(loaded, dict):
            raise CliError("config must be a JSON object", EXIT_CONFIG)
        cfg.update(loaded)
    for item in args.set or []:
        if "=" not in item:
            raise CliError(f"--set needs key=value, got {item!r}", EXIT_CONFIG)
        key, _, val = item.partition("=")
        cfg[key.strip()] = _parse_value(val.strip())
    if args.seed is not None:
        cfg["seed"] = args.seed
    return cfg


def build_system(cfg: dict) -> SystemConfig:
    try:
        code = ecc.parse_code(str(cfg["system.code"]))
        eve = channel.parse_channel(str(cfg["system.channel_eve"]))
        bob = channel.parse_channel(str(cfg["system.channel_bob"]))
        return SystemConfig(k=int(cfg["system.k"]), b=int(cfg["system.b"]),
                            code=code, channel_eve=eve, channel_bob=bob,
                            uhf_enabled=bool(cfg["system.uhf"]),
                            seed=int(cfg["seed"]))
    except (ValueError, KeyError) as e:
        raise CliError(f"cannot resolve system config: {e}", EXIT_CONFIG)


def build_schedule(cfg: dict, system: SystemConfig, difficulty=None):
    from .neural import awgn_curriculum, bsc_curriculum, fixed_schedule
    kw = {"train_samples": int(cfg["train.samples"]),
          "eval_samples": int(cfg["train.eval_samples"]),
          "batch_size": int(cfg["train.batch_size"]),
          "lr": float(cfg["train.lr"])}
    epochs = int(cfg["train.epochs"])
    if difficulty is not None or cfg["train.curriculum"] == "fixed":
        if difficulty is None:
            difficulty = (system.channel_eve.p
                          if system.channel_eve.kind == "bsc"
                          else system.channel_eve.snr_db)
        return fixed_schedule(float(difficulty), epochs, **kw)
    if system.channel_eve.kind == "bsc":
        return bsc_curriculum(epochs, **kw)
    return awgn_curriculum(epochs, **kw)


def _sweep_values(cfg: dict) -> list[float]:
    spec = cfg["sweep.values"]
    if isinstance(spec, list):
        return [float(v) for v in spec]
    text = str(spec)
    if ":" in text:
        try:
            lo, hi, step = (float(v) for v in text.split(":"))
        except ValueError:
            raise CliError(f"bad sweep range {text!r}", EXIT_CONFIG)
        n = int(round((hi - lo) / step)) + 1
        return [round(lo + i * step, 12) for i in range(n)]
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise CliError(f"bad sweep values {text!r}", EXIT_CONFIG)


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo_config(out: Path, cfg: dict, command: str) -> None:
    payload = {"version": __version__, "command": command, "config": cfg}
    (out / "config.json").write_text(json.dumps(payload, indent=2) + "\n")


def _provenance_line(cfg: dict) -> str:
    return "# config: " + json.dumps(
        {"version": __version__, **cfg}, sort_keys=True)


def _write_csv(path: Path, cfg: dict, header: list[str],
               rows: list[dict]) -> None:
    lines = [_provenance_line(cfg), ",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(row[h]) for h in header))
    path.write_text("\n".join(lines) + "\n")


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".10g")
    return str(v)


def _write_json(path: Path, cfg: dict, payload: dict) -> None:
    doc = {"version": __version__, "config": cfg, "result": payload}
    path.write_text(json.dumps(doc, indent=2) + "\n")


def cmd_gen_data(args) -> int:
    cfg = resolve_config(args)
    out = _outdir(args)
    system = build_system(cfg)
    batch = pipeline.generate(system, int(cfg["data.count"]), with_bob=True)
    (out / "dataset.wtp").write_bytes(pipeline.save_dataset(system, batch))
    _echo_config(out, cfg, "gen-data")
    print(f"wrote {out / 'dataset.wtp'} ({batch.count} samples, "
          f"{system.describe()['code']}, eve={system.channel_eve.name})")
    return EXIT_OK


def cmd_train(args) -> int:
    from .neural import CnbmmConfig, train_cnbmm
    from .neural.cnbmm import save_checkpoint
    cfg = resolve_config(args)
    out = _outdir(args)
    system = build_system(cfg)
    schedule = build_schedule(cfg, system)
    model_cfg = CnbmmConfig(n_in=system.n, k_out=system.k)
    model, trace = train_cnbmm(system, model_cfg, schedule)
    (out / "model.cnb").write_bytes(
        save_checkpoint(model, getattr(model, "_ema_shadow", None)))
    ber_cache: dict[float, float] = {}
    lines = []
    for row in trace:
        d = row["difficulty"]
        if d not in ber_cache:
            from .neural.training import _with_difficulty
            ber = pipeline.measure_ber(_with_difficulty(system, d),
                                       int(cfg["train.eval_samples"]))
            ber_cache[d] = ber["secret_ber"]
        rec = {"epoch": row["epoch"], "difficulty": d,
               "mi_raw_bits": row["raw_bits"],
               "mi_proj_per_bit": row["projected_bits"] / system.k,
               "loss": row["loss"], "secret_ber": ber_cache[d]}
        lines.append(json.dumps(rec, sort_keys=True))
    (out / "train_trace.jsonl").write_text("\n".join(lines) + "\n")
    _echo_config(out, cfg, "train")
    print(f"trained {schedule.epochs} epochs; final projected estimate "
          f"{trace[-1]['projected_bits']:.4f} bits of {system.k}")
    return EXIT_OK


def cmd_estimate(args) -> int:
    cfg = resolve_config(args)
    out = _outdir(args)
    data_path = Path(args.data)
    if not data_path.is_file():
        raise CliError(f"dataset not found: {data_path}", EXIT_MISSING)
    header, batch = pipeline.load_dataset(data_path.read_bytes())
    system = build_system({**cfg, "system.k": header["k"],
                           "system.b": header["b"],
                           "system.channel_eve": header["channel_eve"],
                           "system.channel_bob": header["channel_bob"],
                           "system.uhf": header["uhf_enabled"],
                           "seed": header["seed"]})
    if system.n != header["n"]:
        raise CliError(
            f"code {system.code.name} has n={system.n} but the dataset "
            f"carries n={header['n']}; set system.code to match", EXIT_CONFIG)
    estimator = str(cfg["estimator"])
    if estimator == "oracle":
        exhaustive = (system.channel_eve.kind == "bsc"
                      and system.n <= oracle.MAX_EXHAUSTIVE_N)
        if exhaustive:
            res = oracle.exact_mi(system)
        else:
            res = oracle.exact_mi(system, method="mc",
                                  mc_samples=int(cfg["oracle.mc_samples"]))
        raw, stderr = res["value_bits"], res["stderr_bits"]
    elif estimator == "cnbmm":
        from .neural import vclub_estimate
        from .neural.cnbmm import load_checkpoint
        if not args.model:
            raise CliError("estimator cnbmm needs --model", EXIT_CONFIG)
        model_path = Path(args.model)
        if not model_path.is_file():
            raise CliError(f"model not found: {model_path}", EXIT_MISSING)
        model, shadow = load_checkpoint(model_path.read_bytes())
        if shadow is not None:
            for p, s in zip(model.parameters(), shadow):
                p.value = s
        rep = vclub_estimate(model, batch.z_eve, batch.m_s, batch.eve_soft,
                             substream(system.seed, 14))
        raw, stderr = rep.raw_bits, 0.0
    else:
        raise CliError(f"estimator {estimator!r} not usable here; "
                       "choose oracle or cnbmm", EXIT_CONFIG)
    proj = min(max(raw, 0.0), system.k)
    payload = {"estimator": estimator, "mi_raw_bits": raw,
               "mi_projected_bits": proj,
               "mi_proj_per_bit": proj / system.k,
               "stderr_bits": stderr, "k": system.k,
               "samples": batch.count}
    _write_json(out / "estimate.json", cfg, payload)
    _echo_config(out, cfg, "estimate")
    print(json.dumps(payload))
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = resolve_config(args)
    out = _outdir(args)
    system = build_system(cfg)
    exhaustive = (system.channel_eve.kind == "bsc"
                  and system.n <= oracle.MAX_EXHAUSTIVE_N)
    if exhaustive:
        mi = oracle.exact_mi(system)
        ent = oracle.exact_cond_entropy(system)
        club = oracle.club_with_oracle(system)
        payload = {"mi": mi, "cond_entropy": ent, "club": club}
    else:
        mi = oracle.exact_mi(system, method="mc",
                             mc_samples=int(cfg["oracle.mc_samples"]))
        payload = {"mi": mi}
    _write_json(out / "oracle.json", cfg, payload)
    _echo_config(out, cfg, "oracle")
    print(json.dumps(payload["mi"]))
    return EXIT_OK


def cmd_ber_sweep(args) -> int:
    from .neural.training import _with_difficulty
    cfg = resolve_config(args)
    out = _outdir(args)
    system = build_system(cfg)
    rows = []
    for d in _sweep_values(cfg):
        stage = _with_difficulty(system, d)
        ber = pipeline.measure_ber(stage, int(cfg["ber.count"]))
        rows.append({"snr_db_or_pe": d,
                     "raw_ber": ber["raw_ber"],
                     "raw_ber_halfwidth": ber["raw_ber_halfwidth"],
                     "secret_ber": ber["secret_ber"],
                     "secret_ber_halfwidth": ber["secret_ber_halfwidth"]})
    _write_csv(out / "ber_sweep.csv", cfg,
               ["snr_db_or_pe", "raw_ber", "raw_ber_halfwidth",
                "secret_ber", "secret_ber_halfwidth"], rows)
    _echo_config(out, cfg, "ber-sweep")
    print(f"wrote {out / 'ber_sweep.csv'} ({len(rows)} rows)")
    return EXIT_OK


def cmd_bounds(args) -> int:
    cfg = resolve_config(args)
    out = _outdir(args)
    system = build_system(cfg)
    n_samples = int(cfg["bounds.samples"])
    report = bounds.minimize_b(system, n_samples=n_samples)
    grid = bounds.b_grid_trace(system, n_samples=n_samples)
    rows = [{"epsilon": r["epsilon"], "B_bits": r["b_bits"],
             "mean_psi": r["mean_psi"], "accept_frac": r["accept_frac"]}
            for r in grid]
    _write_csv(out / "bounds_grid.csv", cfg,
               ["epsilon", "B_bits", "mean_psi", "accept_frac"], rows)
    _write_json(out / "bounds.json", cfg, report.as_dict())
    _echo_config(out, cfg, "bounds")
    print(json.dumps({"eps_star": report.eps_star, "b_bits": report.b_bits,
                      "g_bits": report.g_bits}))
    return EXIT_OK


def cmd_design_hash(args) -> int:
    cfg = resolve_config(args)
    out = _outdir(args)
    system = build_system(cfg)
    estimator = str(cfg["estimator"])
    schedule = None
    if estimator != "oracle":
        schedule = build_schedule(cfg, system)
    try:
        dcfg = hashdesign.DesignConfig(
            max_leakage=float(cfg["design.max_leakage"]), base=system,
            estimator=estimator, schedule=schedule,
            retrain=str(cfg["design.retrain"]),
            max_iters=int(cfg["design.max_iters"]),
            mc_samples=int(cfg["oracle.mc_samples"]))
    except ValueError as e:
        raise CliError(str(e), EXIT_CONFIG)
    trace = hashdesign.design(dcfg)
    _write_json(out / "design_trace.json", cfg, trace.as_dict())
    _echo_config(out, cfg, "design-hash")
    print(json.dumps({"final_k": trace.final_k,
                      "final_leakage": trace.final_leakage,
                      "termination": trace.termination,
                      "num_updates": trace.num_updates}))
    if trace.termination in ("iter-cap",) or not trace.budget_met:
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_leakage_sweep(args) -> int:
    from .neural.training import _with_difficulty
    cfg = resolve_config(args)
    out = _outdir(args)
    system = build_system(cfg)
    estimator = str(cfg["estimator"])
    rows = []
    for d in _sweep_values(cfg):
        for uhf in (True, False):
            from dataclasses import replace
            stage = replace(_with_difficulty(system, d), uhf_enabled=uhf)
            raw, stderr = _sweep_point(stage, estimator, cfg, d)
            proj = min(max(raw, 0.0), stage.k)
            ber = pipeline.measure_ber(stage, int(cfg["ber.count"]))
            rows.append({"snr_db_or_pe": d, "estimator": estimator,
                         "uhf": int(uhf), "mi_raw_bits": raw,
                         "mi_proj_per_bit": proj / stage.k,
                         "ber": ber["secret_ber"], "stderr": stderr})
    _write_csv(out / "leakage_sweep.csv", cfg,
               ["snr_db_or_pe", "estimator", "uhf", "mi_raw_bits",
                "mi_proj_per_bit", "ber", "stderr"], rows)
    _echo_config(out, cfg, "leakage-sweep")
    print(f"wrote {out / 'leakage_sweep.csv'} ({len(rows)} rows)")
    return EXIT_OK


def _sweep_point(stage: SystemConfig, estimator: str, cfg: dict,
                 difficulty: float) -> tuple[float, float]:
    if estimator == "oracle":
        exhaustive = (stage.channel_eve.kind == "bsc"
                      and stage.n <= oracle.MAX_EXHAUSTIVE_N)
        if exhaustive:
            res = oracle.exact_mi(stage)
        else:
            res = oracle.exact_mi(stage, method="mc",
                                  mc_samples=int(cfg["oracle.mc_samples"]))
        return res["value_bits"], res["stderr_bits"]
    if estimator == "cnbmm":
        from .neural import CnbmmConfig, ema_vclub, train_cnbmm
        schedule = build_schedule(cfg, stage, difficulty=difficulty)
        model_cfg = CnbmmConfig(n_in=stage.n, k_out=stage.k)
        model, _ = train_cnbmm(stage, model_cfg, schedule,
                               eval_each_epoch=False)
        rep = ema_vclub(model, stage, difficulty, schedule.eval_samples)
        return rep.raw_bits, 0.0
    if estimator == "gaussian-club":
        from .neural import gauss_club_estimate
        rep = gauss_club_estimate(stage, build_schedule(cfg, stage,
                                                        difficulty=difficulty))
        return rep.raw_bits, 0.0
    if estimator == "mine":
        from .neural import mine_estimate
        rep = mine_estimate(stage, build_schedule(cfg, stage,
                                                  difficulty=difficulty))
        return rep.raw_bits, 0.0
    raise CliError(f"unknown estimator {estimator!r}", EXIT_CONFIG)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wiretaplab",
        description="Wiretap-channel link simulation and leakage estimation.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat JSON config file (dotted keys)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the global seed (default 42)")
        p.add_argument("--out", default="out", help="output directory")

    handlers = {
        "gen-data": (cmd_gen_data, "generate and save a dataset"),
        "train": (cmd_train, "train the mixture-model estimator"),
        "estimate": (cmd_estimate, "estimate leakage on a saved dataset"),
        "oracle": (cmd_oracle, "exact leakage of the configured system"),
        "ber-sweep": (cmd_ber_sweep, "bit error rates over difficulties"),
        "bounds": (cmd_bounds, "entropy-gap bound minimization"),
        "design-hash": (cmd_design_hash, "closed-loop hash size selection"),
        "leakage-sweep": (cmd_leakage_sweep,
                          "leakage over difficulty x hashing grids"),
    }
    for name, (fn, help_text) in handlers.items():
        p = sub.add_parser(name, help=help_text)
        common(p)
        p.set_defaults(handler=fn)
        if name == "estimate":
            p.add_argument("--data", required=True, help="dataset file")
            p.add_argument("--model", help="model checkpoint (cnbmm)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.handler(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except oracle.EnumerationBudgetError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BUDGET
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MISSING
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
