"""Command line front end.

Every subcommand prints a JSON envelope {schema_version, config_echo,
results} to standard output (or ``--out``) and may write CSV artifacts.
Exit codes: 0 success, 1 invalid input, 2 numerical failure, 3 harness FAIL.
Errors go to standard error as a single line ``E:<exit code>:<name>: message``.
"""

from __future__ import annotations

import argparse
import json
import math
import re
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .atoms import validate
from .edgeworth import build_series, edgeworth_error, evaluate
from .errors import EdgelabError, ValidationError
from .exactdist import exact_law
from .lattice import character_of, haar_sample, lattice_of
from .limitlaw import sample_limit_ensemble
from .resonance import fourier_oracle, locate_peak, structure_constants, tilde_delta

SCHEMA_VERSION = "1"
HARNESSES = ("limit", "diophantine", "llt", "joint", "mixscale")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from e


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from e


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--threads", type=int, default=1, help="worker processes")
    p.add_argument("--out", type=str, default=None, help="write the JSON envelope here")
    p.add_argument("--config", type=str, default=None, help="key=value file; flags win")


def _add_dist(p: argparse.ArgumentParser) -> None:
    p.add_argument("--atoms", type=_floats, default="-1,0,1", help="comma-separated atoms")
    p.add_argument("--probs", type=_floats, default="0.25,0.5,0.25", help="comma-separated probabilities")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="edgelab", formatter_class=fmt,
                     description="Edgeworth errors of discrete sums and their lattice limit laws.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("exact-law", formatter_class=fmt, help="exact law of S_n")
    _add_dist(p)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--merge-tol", type=float, default=None)
    p.add_argument("--method", choices=["multinomial", "convolve"], default="multinomial")
    p.add_argument("--csv", type=str, default=None, help="write value,mass rows here")

    p = sub.add_parser("edgeworth", formatter_class=fmt, help="Edgeworth expansion E_r(z)")
    _add_dist(p)
    p.add_argument("--r", type=int, default=2)
    p.add_argument("--z", type=float, default=0.0)
    p.add_argument("--n", type=int, default=100)

    p = sub.add_parser("error", formatter_class=fmt, help="exact error E_r(z) - P(S_n <= z sigma sqrt n)")
    _add_dist(p)
    p.add_argument("--r", type=int, default=None, help="order (default: number of offsets d)")
    p.add_argument("--z", type=float, default=0.0)
    p.add_argument("--n", type=int, default=100)

    p = sub.add_parser("resonance", formatter_class=fmt, help="structure constants and one resonant peak")
    _add_dist(p)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--k", type=int, default=1)

    p = sub.add_parser("tilde-delta", formatter_class=fmt, help="resonant-sum approximation of the error")
    _add_dist(p)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--z", type=float, default=0.0)
    p.add_argument("--delta", type=float, default=ex.RESONANCE_DELTA)
    p.add_argument("--K", type=float, default=ex.RESONANCE_K)

    p = sub.add_parser("fourier-oracle", formatter_class=fmt, help="error by direct Fourier inversion")
    _add_dist(p)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--z", type=float, default=0.0)
    p.add_argument("--K1", type=float, default=8.0)
    p.add_argument("--tol", type=float, default=None)

    p = sub.add_parser("lattice", formatter_class=fmt, help="lattice and character of a distribution, or a Haar draw")
    _add_dist(p)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--z", type=float, default=0.0)
    p.add_argument("--haar", type=int, default=None, help="dimension of a Haar draw instead")
    p.add_argument("--index", type=int, default=0)

    p = sub.add_parser("limit-sample", formatter_class=fmt, help="ensemble of limit variables")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--which", choices=["X", "hatX", "Y"], default="X")
    p.add_argument("--N", type=int, default=1000)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--z", type=float, default=0.0)
    p.add_argument("--method", choices=["ewald", "ball"], default="ewald")
    p.add_argument("--csv", type=str, default=None)
    _add_dist(p)

    p = sub.add_parser("harness", formatter_class=fmt, help="statistical harness")
    p.add_argument("name", choices=HARNESSES)
    p.add_argument("--N", type=int, default=None, help="ensemble size (harness default if unset)")
    p.add_argument("--n-list", type=_ints, default=None, help="comma-separated n values")
    p.add_argument("--z", type=float, default=0.0)

    for sp in sub.choices.values():
        _add_common(sp)
        for act in sp._actions:
            # the defaults formatter only annotates actions that carry help text
            if act.help is None:
                act.help = act.dest.replace("_", " ")
    return parser


def _split_negative(argv: list[str]) -> list[str]:
    """Attach values such as '-1,0,1' to the preceding flag so that they are
    not taken for options."""
    out = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if (tok.startswith("--") and "=" not in tok and i + 1 < len(argv)
                and re.fullmatch(r"-[0-9.][0-9.,eE+-]*", argv[i + 1])):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


def _read_config(path: str, parser: argparse.ArgumentParser, known: set[str]) -> dict:
    vals = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValidationError(f"config line without '=': {line!r}")
        k, v = (s.strip() for s in line.split("=", 1))
        key = k.replace("-", "_")
        if key not in known:
            raise ValidationError(f"unknown config key {k!r}")
        vals[key] = v
    return vals


def _subparser(parser, command):
    for act in parser._subparsers._group_actions:
        return act.choices[command]


def parse(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    argv = _split_negative(list(argv))
    args = parser.parse_args(argv)
    if args.config:
        sp = _subparser(parser, args.command)
        known = {a.dest for a in sp._actions if a.dest not in ("help", "config")}
        cfg = _read_config(args.config, sp, known)
        # typed through the parser: config values first, explicit flags last
        extra = []
        for k, v in cfg.items():
            if k == "name":
                continue
            extra += [f"--{k.replace('_', '-')}={v}"]
        pos = [args.command] + ([args.name] if args.command == "harness" else [])
        rest = argv[argv.index(args.command) + 1:]
        if args.command == "harness":
            rest = rest[1:]
        args = parser.parse_args(pos + extra + rest)
    return args


def _dist(args):
    return validate(args.atoms, args.probs)


def _echo(args) -> dict:
    out = {}
    for k, v in sorted(vars(args).items()):
        if isinstance(v, np.ndarray):
            v = v.tolist()
        out[k] = v
    return out


def emit(results, fmt: str, path) -> int:
    """Write ``results`` as CSV (a header plus rows) or sorted-key JSON."""
    if fmt == "json":
        data = (json.dumps(results, sort_keys=True, indent=1, allow_nan=True) + "\n").encode("utf-8")
    elif fmt == "csv":
        header, rows = results
        lines = [",".join(header)]
        for row in rows:
            lines.append(",".join(f"{x:.17g}" if isinstance(x, float) else str(x) for x in row))
        data = ("\n".join(lines) + "\n").encode("utf-8")
    else:
        raise ValidationError(f"unknown format {fmt!r}")
    with open(path, "wb") as fh:
        fh.write(data)
    return len(data)


def _run(args) -> tuple[dict, int]:
    cmd = args.command
    if cmd == "exact-law":
        D = _dist(args)
        law = exact_law(D, args.n, args.merge_tol, method=args.method)
        res = {"n": law.n, "support_size": int(law.values.size), "values": law.values.tolist(),
               "masses": law.masses.tolist(), "merge_tol": law.merge_tol,
               "dropped_mass": law.dropped_mass}
        if args.csv:
            law.to_csv(args.csv)
            res["artifacts"] = [args.csv]
        return res, 0
    if cmd == "edgeworth":
        D = _dist(args)
        s = build_series(D, args.r)
        return {"value": float(evaluate(s, args.z, args.n)), "series": json.loads(s.to_json())}, 0
    if cmd == "error":
        D = _dist(args)
        r = D.d if args.r is None else args.r
        v = float(edgeworth_error(D, args.n, r, args.z))
        return {"error": v, "scaled": v * args.n ** (D.d / 2), "r": r}, 0
    if cmd == "resonance":
        D = _dist(args)
        sc = structure_constants(D)
        t = locate_peak(D, args.k, args.n)
        term = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in vars(t).items()}
        return {"Dmat": sc.Dmat.tolist(), "omega": sc.omega.tolist(), "q": sc.q.tolist(),
                "Lambda": sc.Lambda, "H": sc.H, "alpha": sc.alpha, "term": term}, 0
    if cmd == "tilde-delta":
        D = _dist(args)
        v = tilde_delta(D, args.n, args.z, args.delta, args.K)
        return {"tilde_delta": v, "scaled": v * args.n ** (D.d / 2)}, 0
    if cmd == "fourier-oracle":
        D = _dist(args)
        v = fourier_oracle(D, args.n, args.z, args.K1, args.tol)
        return {"value": v, "scaled": v * args.n ** (D.d / 2)}, 0
    if cmd == "lattice":
        if args.haar is not None:
            L, chi = haar_sample(args.haar, args.seed, args.index)
        else:
            D = _dist(args)
            L = lattice_of(args.n, D)
            chi = character_of(args.n, D, args.z, L)
        return {"basis": L.basis.tolist(), "reduced": L.reduced.tolist(),
                "unimodular": L.unimodular.tolist(), "theta": chi.theta.tolist(),
                "approx": L.approx}, 0
    if cmd == "limit-sample":
        params = {"c": args.c}
        if args.which == "hatX":
            params.update({"D": _dist(args), "z": args.z})
        ens = sample_limit_ensemble(args.d, args.which, params, args.N, args.seed, args.method)
        res = {"summary": ens.summary(), "values": ens.values.tolist(), "flags": ens.flags}
        if args.csv:
            ens.to_csv(args.csv)
            res["artifacts"] = [args.csv]
        return res, 0
    if cmd == "harness":
        kw = {}
        name = args.name
        if name == "limit":
            kw = {"z": args.z, "seed": args.seed, "threads": args.threads}
            if args.N:
                kw["N"] = args.N
            if args.n_list:
                kw["n_list"] = tuple(args.n_list)
            rep = ex.harness_limit(**kw)
        elif name == "diophantine":
            if args.n_list:
                kw["n_list"] = tuple(args.n_list)
            rep = ex.harness_diophantine(**kw)
        elif name == "llt":
            kw = {"z": args.z, "seed": args.seed, "threads": args.threads}
            if args.N:
                kw["N_c"] = args.N
            rep = ex.harness_llt(**kw)
        elif name == "joint":
            kw = {"z1": args.z, "seed": args.seed, "threads": args.threads}
            if args.N:
                kw["N"] = args.N
            rep = ex.harness_joint(**kw)
        else:
            kw = {"seed": args.seed, "threads": args.threads}
            if args.N:
                kw["N"] = args.N
            if args.n_list:
                kw["n_list"] = tuple(args.n_list)
            rep = ex.harness_mixscale(**kw)
        return rep, (0 if rep["pass"] else 3)
    raise ValidationError(f"unknown command {cmd!r}")


def dispatch(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse(argv)
        results, code = _run(args)
        env = {"schema_version": SCHEMA_VERSION, "config_echo": _echo(args), "results": results}
        text = json.dumps(env, sort_keys=True, indent=1, default=_default) + "\n"
        if args.out:
            Path(args.out).write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
        return code
    except EdgelabError as e:
        msg = str(e).replace("\n", " ")
        sys.stderr.write(f"E:{e.exit_code}:{e.code}: {msg}\n")
        return e.exit_code
    except OSError as e:
        sys.stderr.write(f"E:1:IoError: {e}\n")
        return 1


def _default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    raise TypeError(f"not serialisable: {type(o).__name__}")


def main() -> None:
    sys.exit(dispatch())
