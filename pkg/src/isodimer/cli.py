"""Command-line front end.

Every subcommand writes its artifacts into ``--out`` through a temporary
file that is renamed on success, and every artifact starts with a header
recording the tool version, the resolved configuration and the seed.

Exit codes: 0 success, 2 bad configuration, 3 numerical failure,
4 validation failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .geometry import (
    GeometryError,
    Hexagon,
    IsoradialGraph,
    Parallelogram,
    build_lozenge_with_diagonals,
    build_periodic_lozenge_with_diagonals,
    build_square_lattice,
    build_triangular_lattice,
    validate_isoradial,
)
from .kernel import ExactInverseKernel, KernelError, kernel_table, kernel_table_csv
from .sampler import RngStream, sample_lozenge_tiling

EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_VALIDATION = 4

LATTICE_ALIASES = {"tri": "tri", "honeycomb": "tri", "square": "square", "lozenge-diag": "lozenge-diag"}

DEFAULTS = {
    "lattice": "tri",
    "extent": [4, 4, 4],
    "mesh": None,
    "seed": 0,
    "samples": None,
    "out": "out",
    "threads": os.cpu_count() or 1,
    "k": 2,
    "pairs": 200,
    "rmin": 2.0,
    "rmax": 20.0,
}


# experiment commands run at a finer mesh and larger sample count
COMMAND_DEFAULTS = {
    "moments": {"mesh": 1 / 32, "samples": 20000},
    "quadri": {"samples": 1000},
}


class ConfigError(ValueError):
    pass


class ValidationFailure(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# configuration


def _load_config_file(path: str) -> dict:
    try:
        import tomllib  # type: ignore[import-not-found]
    except ModuleNotFoundError:
        import tomli as tomllib
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        doc = _load_config_file(args.config)
        unknown = set(doc) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(doc)
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    cfg["command"] = args.command
    per_cmd = COMMAND_DEFAULTS.get(args.command, {})
    for key in ("mesh", "samples"):
        if cfg[key] is None:
            cfg[key] = per_cmd.get(key, {"mesh": 1.0, "samples": 100}[key])
    lat = LATTICE_ALIASES.get(str(cfg["lattice"]))
    if lat is None:
        raise ConfigError(f"unknown lattice {cfg['lattice']!r}")
    cfg["lattice"] = lat
    ext = [int(x) for x in cfg["extent"]]
    if len(ext) not in (2, 3) or min(ext) <= 0:
        raise ConfigError("extent needs two or three positive integers")
    cfg["extent"] = ext
    if lat == "square" and len(ext) != 2:
        raise ConfigError("square lattice extent is W H")
    for key, kind in (("mesh", float), ("seed", int), ("samples", int), ("threads", int), ("k", int),
                      ("pairs", int), ("rmin", float), ("rmax", float)):
        try:
            cfg[key] = kind(cfg[key])
        except (TypeError, ValueError):
            raise ConfigError(f"bad value for {key}: {cfg[key]!r}") from None
    if not cfg["mesh"] > 0 or cfg["samples"] < 0 or cfg["threads"] < 1 or cfg["k"] < 1:
        raise ConfigError("mesh must be positive, samples non-negative, threads and k at least 1")
    cfg["out"] = str(cfg["out"])
    return cfg


def header(cfg: dict) -> dict:
    return {"tool": "isodimer", "version": __version__, "config": cfg, "seed": cfg["seed"]}


def _header_lines(cfg: dict) -> str:
    return f"# isodimer {__version__}\n# config: {json.dumps(cfg, sort_keys=True)}\n# seed: {cfg['seed']}\n"


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _region(cfg: dict):
    ext = cfg["extent"]
    return Hexagon(*ext) if len(ext) == 3 else Parallelogram(*ext)


def build_graph(cfg: dict) -> IsoradialGraph:
    lat = cfg["lattice"]
    if lat == "tri":
        return build_triangular_lattice(_region(cfg), cfg["mesh"])
    if lat == "square":
        return build_square_lattice(Parallelogram(*cfg["extent"]), cfg["mesh"])
    if len(cfg["extent"]) == 2:
        return build_periodic_lozenge_with_diagonals(tuple(cfg["extent"]), cfg["mesh"])
    tiling = sample_lozenge_tiling(_region(cfg), RngStream(cfg["seed"], 0), cfg["mesh"])
    return build_lozenge_with_diagonals(tiling)


def _validated(cfg: dict) -> IsoradialGraph:
    g = build_graph(cfg)
    rep = validate_isoradial(g)
    if not rep.passed:
        raise ValidationFailure("; ".join(rep.messages[:5]))
    return g


def _central_white(g: IsoradialGraph) -> int:
    fz = g.face_z()
    w = g.whites
    return int(w[np.argmin(np.abs(fz[w] - fz.mean()))])


# ---------------------------------------------------------------------------
# subcommands


def cmd_build(cfg: dict) -> str:
    g = _validated(cfg)
    doc = {"header": header(cfg), **g.to_dict()}
    write_atomic(Path(cfg["out"]) / "graph.json", json.dumps(doc) + "\n")
    return f"built {g}"


def cmd_validate(cfg: dict) -> str:
    g = build_graph(cfg)
    rep = validate_isoradial(g)
    lines = [_header_lines(cfg), f"passed: {rep.passed}\n", f"max_radius_deviation: {rep.max_radius_deviation!r}\n"]
    lines += [m + "\n" for m in rep.messages]
    write_atomic(Path(cfg["out"]) / "validation.txt", "".join(lines))
    if not rep.passed:
        raise ValidationFailure("; ".join(rep.messages[:5]))
    return f"valid: max radius deviation {rep.max_radius_deviation:.3g}"


def cmd_kernel(cfg: dict) -> str:
    g = _validated(cfg)
    ek = ExactInverseKernel(g)
    w = _central_white(g)
    fz = g.face_z() / g.scale_length
    d = np.abs(fz[g.blacks] - fz[w])
    cand = g.blacks[(d >= cfg["rmin"]) & (d <= cfg["rmax"])]
    rng = RngStream(cfg["seed"], 1).generator
    if len(cand) > cfg["pairs"]:
        cand = np.sort(rng.choice(cand, cfg["pairs"], replace=False))
    rows = kernel_table(g, [(int(b), w) for b in cand], ek)
    write_atomic(Path(cfg["out"]) / "kernel.csv", _header_lines(cfg) + kernel_table_csv(rows))
    return f"kernel table with {len(rows)} pairs"


def cmd_probs(cfg: dict) -> str:
    from .gibbs import Statistic, cylinder_statistic, statistics_csv

    g = _validated(cfg)
    ek = ExactInverseKernel(g)
    g.meta["_exact_kernel"] = ek
    stats = []
    worst = 0.0
    for e in g.dual_edges:
        s = cylinder_statistic(g, [int(e)], ek)
        s.description = f"edge {int(e)} theta/pi={g.theta[e] / math.pi:.12g}"
        worst = max(worst, abs(s.value - g.theta[e] / math.pi))
        stats.append(s)
    write_atomic(Path(cfg["out"]) / "probs.csv", _header_lines(cfg) + statistics_csv(stats))
    vals = sorted({round(s.value, 12) for s in stats})
    if worst > 1e-8:
        raise ValidationFailure(f"edge probability deviates from theta/pi by {worst:.3g}")
    return "edge probabilities: " + ", ".join(f"{v:.12f}" for v in vals) + f" (max |p - theta/pi| = {worst:.2e})"


def cmd_sample(cfg: dict) -> str:
    from .sampler import sample_matchings

    g = _validated(cfg)
    S = sample_matchings(g, cfg["samples"], cfg["seed"])
    lines = [json.dumps({"header": header(cfg)})]
    lines += [json.dumps([int(e) for e in row]) for row in S]
    write_atomic(Path(cfg["out"]) / "samples.jsonl", "\n".join(lines) + "\n")
    return f"{len(S)} matchings written"


def cmd_height(cfg: dict) -> str:
    from .height import height_from_indicator
    from .sampler import sample_matchings

    g = _validated(cfg)
    S = sample_matchings(g, cfg["samples"], cfg["seed"])
    out = [_header_lines(cfg), "sample,vertex_id,x,y,h\n"]
    for k, row in enumerate(S):
        ind = np.zeros(len(g.edges), dtype=np.int8)
        ind[row] = 1
        h = height_from_indicator(g, ind)
        for v, (x, y) in enumerate(g.vertices):
            out.append(f"{k},{v},{x!r},{y!r},{h.values[v]!r}\n")
    write_atomic(Path(cfg["out"]) / "heights.csv", "".join(out))
    return f"{len(S)} height fields written"


def cmd_moments(cfg: dict) -> str:
    from .gff import ComparisonReport, increment_moment

    est, target = increment_moment(cfg["k"], cfg["mesh"], cfg["samples"], cfg["seed"])
    rep = ComparisonReport(header={"isodimer": __version__, "config": json.dumps(cfg, sort_keys=True),
                                   "seed": cfg["seed"]})
    rep.add(f"increment_moment_k{cfg['k']}", cfg["mesh"], est.mean, est.std_error, target,
            "within 3 SE" if est.within(target) else "outside 3 SE")
    write_atomic(Path(cfg["out"]) / "moments.csv", rep.to_csv())
    write_atomic(Path(cfg["out"]) / "moments.txt", rep.summary() + "\n")
    return rep.summary()


def cmd_quadri(cfg: dict) -> str:
    from .quadri import QuadriSampler, central_pairs, empirical_independence

    ext = cfg["extent"]
    region = Hexagon(*ext) if len(ext) == 3 else Hexagon(ext[0], ext[1], ext[0])
    qs = QuadriSampler(region, cfg["mesh"])
    S = qs.sample(cfg["samples"], cfg["seed"])
    lines = [json.dumps({"header": header(cfg)})]
    for tiling_edges, L, em in S:
        lines.append(json.dumps({
            "lozenge_edges": [int(e) for e in tiling_edges],
            "quadri_tiles": [{"edge": int(e), "type": L.edge_label(int(e))} for e in em],
        }))
    write_atomic(Path(cfg["out"]) / "quadri.jsonl", "\n".join(lines) + "\n")
    msg = f"{len(S)} quadri-tilings written"
    if len(S) >= 1000:
        T = qs.T
        p1, p2 = central_pairs(T)
        rep = empirical_independence(S, p1, p2, T)
        text = (_header_lines(cfg) + "correlation,std_error,n\n"
                + f"{rep.correlation!r},{rep.std_error!r},{rep.n}\n")
        write_atomic(Path(cfg["out"]) / "independence.csv", text)
        msg += f"; corr(dh1, dh2) = {rep.correlation:.4f} +- {rep.std_error:.4f}"
    return msg


COMMANDS = {
    "build": cmd_build,
    "validate": cmd_validate,
    "kernel": cmd_kernel,
    "probs": cmd_probs,
    "sample": cmd_sample,
    "height": cmd_height,
    "moments": cmd_moments,
    "quadri": cmd_quadri,
}


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--lattice", choices=sorted(LATTICE_ALIASES))
    common.add_argument("--extent", type=int, nargs="+", metavar="N", help="W H, or A B C for a hexagon")
    common.add_argument("--mesh", type=float)
    common.add_argument("--seed", type=int)
    common.add_argument("--samples", type=int)
    common.add_argument("--out")
    common.add_argument("--threads", type=int)
    common.add_argument("--config", help="TOML file; command-line flags take precedence")
    p = argparse.ArgumentParser(prog="isodimer", description="Dimers on isoradial graphs.")
    p.add_argument("--version", action="version", version=f"isodimer {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp_ = sub.add_parser(name, parents=[common])
        if name == "moments":
            sp_.add_argument("--k", type=int, help="moment order (2, 3 or 4)")
        if name == "kernel":
            sp_.add_argument("--pairs", type=int)
            sp_.add_argument("--rmin", type=float)
            sp_.add_argument("--rmax", type=float)
    return p


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"isodimer: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        msg = COMMANDS[cfg["command"]](cfg)
    except ValidationFailure as exc:
        print(f"isodimer: validation failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except GeometryError as exc:
        print(f"isodimer: validation failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (KernelError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"isodimer: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"isodimer: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(msg)
    return 0


if __name__ == "__main__":
    sys.exit(main())
