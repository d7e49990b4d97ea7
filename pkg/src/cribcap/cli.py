"""Command-line front end.

Subcommands: ``bounds`` (auxiliary alphabet bounds), ``rates`` (evaluate
one auxiliary system), ``capacity`` (search for a lower bound),
``example`` (the built-in worked channel), and ``simulate`` (Monte Carlo
of the block-Markov scheme). Structured results are JSON with the full
resolved configuration echoed back; sweeps are CSV. Exit codes: 0
success, 2 usage, 3 validation, 4 resource limit.

The environment variable ``CRIBCAP_SEED`` overrides the default seed;
an explicit ``--seed`` flag wins over both.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from . import example as example_mod
from .channel import (
    AuxiliarySystem,
    ChannelSpec,
    SpecValidationError,
    aux_to_dict,
    help_rate,
    load_aux,
    load_channel,
    rate_pair,
)
from .search import SearchBudget, capacity_lower_bound, cardinality_bounds
from .simulate import SchemeParams, SimulationLimitError, estimate_error

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_RESOURCE = 4


@dataclass
class RunConfig:
    """A fully validated invocation: inputs are loaded before any work."""

    subcommand: str
    options: dict
    channel: ChannelSpec | None = None
    aux: AuxiliarySystem | None = None


def _default_seed() -> int:
    env = os.environ.get("CRIBCAP_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError as e:
        raise SpecValidationError(f"CRIBCAP_SEED must be an integer, got {env!r}") from e


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cribcap",
        description="Achievable rates and coding simulation for state-dependent "
        "channels with a rate-limited cribbing helper.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_common(p, channel_required=True):
        p.add_argument("--channel", help="channel definition JSON file", required=channel_required)
        p.add_argument("--output", help="write the report here instead of stdout")
        p.add_argument("--seed", type=int, default=None, help="RNG seed (default: CRIBCAP_SEED or 0)")

    p = sub.add_parser("bounds", help="auxiliary alphabet size bounds for a channel")
    add_common(p)

    p = sub.add_parser("rates", help="evaluate the rate pair of one auxiliary system")
    add_common(p)
    p.add_argument("--aux", required=True, help="auxiliary system JSON file")

    p = sub.add_parser("capacity", help="search for a capacity lower bound")
    add_common(p)
    p.add_argument("--u-size", type=int, required=True)
    p.add_argument("--v-size", type=int, required=True)
    p.add_argument("--aux", help="auxiliary JSON whose maps warm-start the search")
    p.add_argument("--max-map-candidates", type=int, default=128)
    p.add_argument("--restarts", type=int, default=4)
    p.add_argument("--grid-resolution", type=int, default=1)
    p.add_argument("--local-steps", type=int, default=50)
    p.add_argument("--helper-ignores-v", action="store_true",
                   help="restrict to symbol-by-symbol helper maps")
    p.add_argument("--stochastic", action="store_true",
                   help="refine the best candidate over stochastic kernels and report the gain")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("example", help="the built-in worked channel")
    p.add_argument("--alpha", type=float, help="evaluate a single mixing weight")
    p.add_argument("--alpha-sweep", help="grid as start:stop:step, e.g. 0:1:0.01")
    p.add_argument("--format", choices=("json", "csv"), default=None,
                   help="default: json for --alpha, csv for --alpha-sweep")
    p.add_argument("--output")
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("simulate", help="Monte Carlo of the block-Markov scheme")
    add_common(p, channel_required=False)
    p.add_argument("--aux", help="auxiliary system JSON file")
    p.add_argument("--example-alpha", type=float,
                   help="use the built-in worked channel and its construction at this alpha")
    p.add_argument("--n", type=int, required=True, help="sub-block length")
    p.add_argument("--blocks", type=int, default=4, help="number of sub-blocks B")
    p.add_argument("--rate", type=float, required=True, help="nominal rate R in bits/use")
    p.add_argument("--delta", type=float, default=0.05, help="typicality slack")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--mode", choices=("auto", "codebook", "counts"), default="auto")
    p.add_argument("--oracle-helper", action="store_true",
                   help="force the helper onto the true previous message")
    p.add_argument("--fixed-codebook", action="store_true",
                   help="share one codebook across trials instead of redrawing")
    p.add_argument("--cell-budget", type=int, default=None,
                   help="cell cap for codebook mode (default 50e6)")
    p.add_argument("--n-sweep", help="comma list of sub-block lengths; emits CSV")
    p.add_argument("--workers", type=int, default=1)

    return parser


def parse_and_validate(argv) -> RunConfig:
    """Parse flags and load every input file before any computation."""
    parser = build_parser()
    args = parser.parse_args(argv)
    options = vars(args).copy()
    sub = options.pop("subcommand")
    if options.get("seed") is None:
        options["seed"] = _default_seed()

    channel = None
    aux = None
    if sub == "simulate":
        if options.get("example_alpha") is not None:
            if options.get("channel") or options.get("aux"):
                parser.error("--example-alpha replaces --channel/--aux")
            channel = example_mod.make_example_channel()
            aux = example_mod.make_example_aux(options["example_alpha"]).aux
        else:
            if not options.get("channel") or not options.get("aux"):
                parser.error("simulate needs --channel and --aux (or --example-alpha)")
            channel = load_channel(options["channel"])
            aux = load_aux(options["aux"], channel)
    elif sub == "example":
        if (options.get("alpha") is None) == (options.get("alpha_sweep") is None):
            parser.error("example needs exactly one of --alpha or --alpha-sweep")
    else:
        channel = load_channel(options["channel"])
        if options.get("aux"):
            aux = load_aux(options["aux"], channel)
        elif sub == "rates":
            parser.error("rates needs --aux")
    return RunConfig(subcommand=sub, options=options, channel=channel, aux=aux)


def _round_floats(obj, digits: int = 12):
    """Normalize floats to 12 significant digits for stable reports."""
    if isinstance(obj, float):
        return float(f"{obj:.{digits}g}")
    if isinstance(obj, dict):
        return {k: _round_floats(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v, digits) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return _round_floats(float(obj), digits)
    return obj


def emit_report(payload, fmt: str, path: str | None) -> None:
    """Write a JSON report or CSV rows to ``path`` or stdout."""
    if fmt == "json":
        text = json.dumps(_round_floats(payload), indent=2, sort_keys=True) + "\n"
    else:
        rows = payload
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        for row in rows:
            writer.writerow(_round_floats(row))
        text = buf.getvalue()
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _echo_config(cfg: RunConfig) -> dict:
    out = {"subcommand": cfg.subcommand}
    for k, v in sorted(cfg.options.items()):
        if v is not None and k not in ("output",):
            out[k] = v
    return out


def _json_report(cfg: RunConfig, result: dict) -> dict:
    return {
        "config": _echo_config(cfg),
        "result": result,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }


def _cmd_bounds(cfg: RunConfig):
    cb = cardinality_bounds(cfg.channel)
    result = {"L": cb.L, "v_max": cb.v_max, "u_max": cb.u_max,
              "help_rate": help_rate(cfg.channel)}
    emit_report(_json_report(cfg, result), "json", cfg.options.get("output"))


def _cmd_rates(cfg: RunConfig):
    rp = rate_pair(cfg.channel, cfg.aux)
    result = {
        "i_uv_y": rp.i_uv_y,
        "i_u_x_given_vt": rp.i_u_x_given_vt,
        "rate_bound": rp.bound,
        "help_rate": help_rate(cfg.channel),
    }
    emit_report(_json_report(cfg, result), "json", cfg.options.get("output"))


def _cmd_capacity(cfg: RunConfig):
    o = cfg.options
    budget = SearchBudget(
        max_map_candidates=o["max_map_candidates"],
        restarts=o["restarts"],
        grid_resolution=o["grid_resolution"],
        local_steps=o["local_steps"],
        seed=o["seed"],
    )
    include = []
    if cfg.aux is not None:
        if not (cfg.aux.helper_is_deterministic and cfg.aux.encoder_is_deterministic):
            raise SpecValidationError("warm-start aux must use deterministic maps")
        if cfg.aux.u_size != o["u_size"] or cfg.aux.v_size != o["v_size"]:
            raise SpecValidationError(
                "warm-start aux sizes must match --u-size/--v-size"
            )
        include.append((cfg.aux.helper, cfg.aux.encoder))
    res = capacity_lower_bound(
        cfg.channel,
        o["u_size"],
        o["v_size"],
        budget,
        include=include,
        helper_ignores_v=o["helper_ignores_v"],
        workers=o["workers"],
        stochastic_refine=o["stochastic"],
    )
    result = {
        "best_rate": res.best_rate,
        "rate_pair": {
            "i_uv_y": res.rate_pair.i_uv_y,
            "i_u_x_given_vt": res.rate_pair.i_u_x_given_vt,
        },
        "evaluations": res.evaluations,
        "seed": res.seed,
        "best_aux": aux_to_dict(res.best_aux),
    }
    if res.stochastic_gain is not None:
        result["stochastic_gain"] = res.stochastic_gain
    emit_report(_json_report(cfg, result), "json", cfg.options.get("output"))


def _parse_sweep(spec: str):
    try:
        start, stop, step = (float(part) for part in spec.split(":"))
    except ValueError as e:
        raise SpecValidationError(f"--alpha-sweep expects start:stop:step, got {spec!r}") from e
    if step <= 0:
        raise SpecValidationError("--alpha-sweep step must be positive")
    count = int(round((stop - start) / step)) + 1
    return [min(start + k * step, stop) for k in range(count)]


def _cmd_example(cfg: RunConfig):
    o = cfg.options
    if o.get("alpha") is not None:
        fmt = o.get("format") or "json"
        rows = example_mod.alpha_sweep([o["alpha"]])
        if fmt == "json":
            result = rows[0] | {"baselines": example_mod.baselines()}
            emit_report(_json_report(cfg, result), "json", o.get("output"))
        else:
            emit_report(rows, "csv", o.get("output"))
        return
    alphas = _parse_sweep(o["alpha_sweep"])
    fmt = o.get("format") or "csv"
    rows = example_mod.alpha_sweep(alphas)
    if fmt == "csv":
        emit_report(rows, "csv", o.get("output"))
    else:
        emit_report(_json_report(cfg, {"sweep": rows}), "json", o.get("output"))


def _sim_params(o: dict, n: int) -> SchemeParams:
    return SchemeParams(
        n=n,
        B=o["blocks"],
        R=o["rate"],
        delta=o["delta"],
        seed=o["seed"],
        trials=o["trials"],
    )


def _cmd_simulate(cfg: RunConfig):
    o = cfg.options
    kwargs = dict(
        mode=o["mode"],
        oracle_helper=o["oracle_helper"],
        fixed_codebook=o["fixed_codebook"],
        workers=o["workers"],
    )
    if o.get("cell_budget") is not None:
        kwargs["cell_budget"] = o["cell_budget"]
    if o.get("n_sweep"):
        try:
            ns = [int(part) for part in o["n_sweep"].split(",")]
        except ValueError as e:
            raise SpecValidationError(f"--n-sweep expects comma-separated integers") from e
        rows = []
        for n in ns:
            rep = estimate_error(_sim_params(o, n), cfg.channel, cfg.aux, **kwargs)
            rows.append(
                {
                    "n": n,
                    "M": rep.M,
                    "mode": rep.mode,
                    "realized_rate": rep.realized_rate,
                    "effective_rate": rep.effective_rate,
                    "overall_error_rate": rep.overall_error_rate,
                    "wilson_halfwidth": rep.wilson_halfwidth,
                }
            )
        emit_report(rows, "csv", o.get("output"))
        return
    rep = estimate_error(_sim_params(o, o["n"]), cfg.channel, cfg.aux, **kwargs)
    result = {
        "overall_error_rate": rep.overall_error_rate,
        "helper_error_rate": list(rep.helper_error_rate),
        "decoder_error_rate": list(rep.decoder_error_rate),
        "trials": rep.trials,
        "wilson_halfwidth": rep.wilson_halfwidth,
        "mode": rep.mode,
        "M": rep.M,
        "nominal_rate": rep.nominal_rate,
        "realized_rate": rep.realized_rate,
        "effective_rate": rep.effective_rate,
    }
    emit_report(_json_report(cfg, result), "json", o.get("output"))


_COMMANDS = {
    "bounds": _cmd_bounds,
    "rates": _cmd_rates,
    "capacity": _cmd_capacity,
    "example": _cmd_example,
    "simulate": _cmd_simulate,
}


def main(argv=None) -> int:
    try:
        cfg = parse_and_validate(argv if argv is not None else sys.argv[1:])
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK
    except (SpecValidationError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        _COMMANDS[cfg.subcommand](cfg)
    except SimulationLimitError as e:
        print(f"resource limit: {e}", file=sys.stderr)
        return EXIT_RESOURCE
    except (SpecValidationError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
