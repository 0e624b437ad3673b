"""``carrying-simplex`` command-line interface.

Exit codes: 0 success, 1 failed hypothesis / check / convergence,
2 inconclusive verification, 3 unusable input.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .errors import CarryingSimplexError, InputError, NonConverged, NumericalError
from .flow import DEFAULT_TOL, flow_trajectory, write_trajectory_csv
from .model import (SystemSpec, check_H2, check_H4, search_H3tilde, spec_from_dict,
                    spec_to_dict)
from .poincare import normalize_spec, poincare_map
from .simplex import (construct_sigma, direction_grid, read_family, read_mesh_csv,
                      section_family, write_family, write_mesh_csv)
from . import verify as V

log = logging.getLogger("carrying_simplex")

EXIT_OK, EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_INPUT = 0, 1, 2, 3
UNVERIFIED = "hypotheses-unverified"


class RunConfig:
    """Everything that determines the outputs of one command."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.command = args.command
        for name in ("tol", "int_tol", "epsilon", "kappa"):
            if getattr(args, name) <= 0:
                raise InputError(f"--{name.replace('_', '-')} must be > 0")
        if args.mesh_res < 1:
            raise InputError("--mesh-res must be >= 1")
        if args.sections < 1 or args.horizon < 1:
            raise InputError("--sections and --horizon must be >= 1")
        self.spec_doc = _load_json(args.spec) if args.spec else None
        self.spec = spec_from_dict(self.spec_doc) if self.spec_doc is not None else None
        self.unverified = False

    @property
    def params(self) -> dict:
        a = self.args
        return {"m": a.mesh_res, "epsilon": a.epsilon, "kappa": a.kappa, "tol": a.tol,
                "int_tol": a.int_tol, "n_sections": a.sections, "horizon": a.horizon,
                "seed": a.seed, "max_iters": a.max_iters}

    @property
    def hash(self) -> str:
        doc = {"command": self.command, "spec": self.spec_doc, "params": self.params}
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def meta(self, **extra) -> dict:
        out = {"tool": "carrying-simplex", "version": __version__, "config_hash": self.hash,
               "command": self.command, "seed": self.args.seed, "params": self.params}
        if self.unverified:
            out["stamp"] = UNVERIFIED
        out.update(extra)
        return out

    def comment(self, *flags) -> str:
        words = [f"carrying-simplex {__version__}", f"config={self.hash}",
                 f"seed={self.args.seed}"]
        if self.unverified:
            words.append(UNVERIFIED)
        return " ".join(words + list(flags))


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def _dump(obj, path=None):
    text = json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _point(text: str, d: int) -> np.ndarray:
    try:
        x = np.array([float(v) for v in text.split(",")])
    except ValueError as exc:
        raise InputError(f"cannot parse point {text!r}") from exc
    if x.shape != (d,):
        raise InputError(f"point must have {d} comma-separated coordinates")
    return x


def _need_spec(cfg: RunConfig) -> SystemSpec:
    if cfg.spec is None:
        raise InputError("--spec is required for this command")
    return cfg.spec


def _out_dir(cfg: RunConfig) -> str:
    out = cfg.args.out or "out"
    os.makedirs(out, exist_ok=True)
    return out


# -- hypothesis gate ------------------------------------------------------


def hypothesis_reports(spec: SystemSpec, seed: int = 0) -> list:
    """Mandatory reports (H2, H3tilde, weak H4) followed by the strict H4 evidence."""
    return [check_H2(spec), search_H3tilde(spec), check_H4(spec, mode="weak", seed=seed),
            check_H4(spec, mode="strict", seed=seed)]


def _gate(cfg: RunConfig) -> int | None:
    reports = hypothesis_reports(cfg.spec, cfg.args.seed)
    failed = [r.hypothesis for r in reports[:3] if not r.passed]
    if not failed:
        return None
    if cfg.args.force:
        log.warning("hypotheses failed (%s); continuing under --force", ", ".join(failed))
        cfg.unverified = True
        return None
    _dump([r.to_dict() for r in reports])
    log.error("hypotheses failed: %s (use --force to override)", ", ".join(failed))
    return EXIT_FAIL


# -- commands -------------------------------------------------------------


def cmd_check(cfg: RunConfig) -> int:
    spec = _need_spec(cfg)
    reports = hypothesis_reports(spec, cfg.args.seed)
    doc = {"meta": cfg.meta(), "reports": [r.to_dict() for r in reports]}
    _dump(doc, os.path.join(_out_dir(cfg), "hypotheses.json") if cfg.args.out else None)
    return EXIT_OK if all(r.passed for r in reports[:3]) else EXIT_FAIL


def cmd_axes(cfg: RunConfig) -> int:
    spec = _need_spec(cfg)
    code = _gate(cfg)
    if code is not None:
        return code
    _, profiles = normalize_spec(spec, cfg.args.int_tol)
    doc = {"meta": cfg.meta(), "axes": [p.to_dict() for p in profiles]}
    _dump(doc, os.path.join(_out_dir(cfg), "axes.json") if cfg.args.out else None)
    return EXIT_OK


def cmd_simulate(cfg: RunConfig) -> int:
    spec = _need_spec(cfg)
    a = cfg.args
    x0 = _point(a.x0, spec.d) if a.x0 else np.full(spec.d, 0.5)
    t1 = spec.T * a.horizon if a.t1 is None else a.t1
    if a.n < 2:
        raise InputError("--n must be >= 2")
    times = np.linspace(a.t0, t1, a.n)
    res = flow_trajectory(spec, a.t0, times, x0, a.int_tol)
    target = os.path.join(_out_dir(cfg), "trajectory.csv") if a.out else sys.stdout
    write_trajectory_csv(target, res, spec.d, cfg.comment())
    return EXIT_OK


def cmd_poincare(cfg: RunConfig) -> int:
    spec = _need_spec(cfg)
    a = cfg.args
    x = _point(a.x0, spec.d) if a.x0 else np.full(spec.d, 0.5)
    n = a.horizon if a.n is None else a.n
    rows = [x]
    for _ in range(n):
        x = poincare_map(spec, x, a.int_tol)
        rows.append(x)
    own = bool(a.out)
    fh = open(os.path.join(_out_dir(cfg), "poincare.csv"), "w", newline="") if own else sys.stdout
    try:
        fh.write(f"# {cfg.comment()}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n"] + [f"x{i + 1}" for i in range(spec.d)])
        for k, r in enumerate(rows):
            w.writerow([k] + [f"{v:.17g}" for v in r])
    finally:
        if own:
            fh.close()
    return EXIT_OK


def _write_history(path, history, comment):
    with open(path, "w", newline="") as fh:
        fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "gap", "delta_lower", "delta_upper"])
        for row in history:
            w.writerow([row.iter, f"{row.gap:.17g}", f"{row.delta_lower:.17g}",
                        f"{row.delta_upper:.17g}"])


def _sigma(cfg: RunConfig):
    """Normalize, construct Sigma_0; returns (normalized spec, profiles, sigma0, history, ok)."""
    a = cfg.args
    nspec, profiles = normalize_spec(cfg.spec, a.int_tol)
    grid = direction_grid(cfg.spec.d, a.mesh_res)
    try:
        sigma0, history = construct_sigma(nspec, grid, a.epsilon, a.kappa, a.tol, a.max_iters,
                                          a.int_tol, a.threads)
        ok = True
    except NonConverged as exc:
        if not isinstance(exc.partial, tuple):
            raise
        sigma0, history = exc.partial
        ok = False
    return nspec, profiles, sigma0, history, ok


def cmd_simplex(cfg: RunConfig) -> int:
    spec = _need_spec(cfg)
    code = _gate(cfg)
    if code is not None:
        return code
    out = _out_dir(cfg)
    started = time.perf_counter()
    try:
        nspec, profiles, sigma0, history, ok = _sigma(cfg)
    except NonConverged as exc:
        _dump({"meta": cfg.meta(), "converged": False, "status": "failed", "error": str(exc),
               "epsilon_log": exc.partial}, os.path.join(out, "summary.json"))
        raise
    flags = () if ok else ("partial",)
    comment = cfg.comment(*flags)
    write_mesh_csv(os.path.join(out, "sigma0.csv"), sigma0, comment)
    _write_history(os.path.join(out, "gap_history.csv"), history, comment)
    summary = {"meta": cfg.meta(), "converged": ok, "iterations": len(history),
               "final_gap": history[-1].gap if len(history) else None,
               "epsilon_used": history.eps, "epsilon_log": history.eps_log,
               "scale": list(nspec.scale), "axes": [p.to_dict() for p in profiles],
               "d": spec.d, "T": spec.T, "normalized_spec": spec_to_dict(nspec)
               if spec.family != "callable" else None}
    if ok:
        fam = section_family(nspec, sigma0, cfg.args.sections, cfg.args.int_tol, cfg.args.threads)
        write_family(os.path.join(out, "sections"), fam,
                     {"comment": comment, "tol": cfg.args.tol, "gap": sigma0.error_bar,
                      **cfg.meta()})
        summary["sections"] = {"n": len(fam), "wrap_error": fam.wrap_error,
                               "wrap_radial_error": fam.wrap_radial_error,
                               "continuity_modulus": fam.continuity_modulus}
    else:
        summary["status"] = "partial"
    _dump(summary, os.path.join(out, "summary.json"))
    # wall-clock time lives in its own file so the other outputs stay reproducible byte for byte
    _dump({"config_hash": cfg.hash, "runtime_seconds": time.perf_counter() - started},
          os.path.join(out, "timing.json"))
    log.info("iterations=%d gap=%.3e converged=%s", len(history), summary["final_gap"], ok)
    return EXIT_OK if ok else EXIT_FAIL


def _load_sigma(cfg: RunConfig):
    path = cfg.args.sigma or os.path.join(cfg.args.out or "out", "sigma0.csv")
    if not os.path.exists(path):
        raise InputError(f"{path} not found (run the simplex command first or pass --sigma)")
    return read_mesh_csv(path)


def _normalized(cfg: RunConfig):
    nspec, _ = normalize_spec(cfg.spec, cfg.args.int_tol)
    return nspec


def cmd_sections(cfg: RunConfig) -> int:
    _need_spec(cfg)
    code = _gate(cfg)
    if code is not None:
        return code
    sigma0 = _load_sigma(cfg)
    nspec = _normalized(cfg)
    fam = section_family(nspec, sigma0, cfg.args.sections, cfg.args.int_tol, cfg.args.threads)
    index = write_family(os.path.join(_out_dir(cfg), "sections"), fam,
                         {"comment": cfg.comment(), "tol": cfg.args.tol, **cfg.meta()})
    _dump({"meta": cfg.meta(), "wrap_error": index["wrap_error"],
           "continuity_modulus": index["continuity_modulus"]})
    return EXIT_OK


def verification_reports(nspec: SystemSpec, spec: SystemSpec, fam, args) -> list:
    sigma0 = fam.meshes[0]
    reports = [V.check_unordered(sigma0, "weak")]
    if check_H4(spec, mode="strict", seed=args.seed).passed:
        reports.append(V.check_unordered(sigma0, "strict"))
    x0 = _point(args.x0, spec.d) if args.x0 else np.full(spec.d, 0.5)
    reports += [
        V.check_retrotone(nspec, args.pairs, seed=args.seed, int_tol=args.int_tol),
        V.check_attraction(nspec, fam, args.starts, args.horizon, seed=args.seed,
                           int_tol=args.int_tol),
        V.check_origin_repeller(nspec, fam, seed=args.seed, int_tol=args.int_tol),
        V.check_asymptotic_phase(nspec, x0, sigma0, args.horizon, int_tol=args.int_tol),
        V.check_lipschitz_projection(sigma0),
        V.check_conjugacy(nspec, fam, seed=args.seed, tol=10 * args.tol, int_tol=args.int_tol),
    ]
    return reports


def cmd_verify(cfg: RunConfig) -> int:
    spec = _need_spec(cfg)
    code = _gate(cfg)
    if code is not None:
        return code
    a = cfg.args
    sec_dir = os.path.join(a.out or "out", "sections")
    if a.sigma is None and os.path.exists(os.path.join(sec_dir, "index.json")):
        fam = read_family(sec_dir)
        nspec = _normalized(cfg)
    else:
        if a.sigma is not None:
            sigma0 = _load_sigma(cfg)
            nspec = _normalized(cfg)
        else:
            nspec, _, sigma0, _, ok = _sigma(cfg)
            if not ok:
                raise NonConverged(sigma0.error_bar, "Sigma_0 did not converge")
        fam = section_family(nspec, sigma0, a.sections, a.int_tol, a.threads)
    reports = verification_reports(nspec, spec, fam, a)
    docs = [dict(r.to_dict(), meta=cfg.meta()) for r in reports]
    _dump(docs)
    if a.out:
        _dump(docs, os.path.join(_out_dir(cfg), "verify.json"))
    if any(r.inconclusive for r in reports):
        return EXIT_INCONCLUSIVE if all(r.passed or r.inconclusive for r in reports) else EXIT_FAIL
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


def cmd_export(cfg: RunConfig) -> int:
    """Gnuplot-ready copies of Sigma_0 and the sections in original coordinates."""
    out = cfg.args.out or "out"
    summary = _load_json(os.path.join(out, "summary.json"))
    scale = np.asarray(summary["scale"], dtype=float)
    sigma0 = _load_sigma(cfg)
    meshes = [sigma0]
    sec_dir = os.path.join(out, "sections")
    if os.path.exists(os.path.join(sec_dir, "index.json")):
        meshes = list(read_family(sec_dir).meshes)
    exp = os.path.join(out, "export")
    os.makedirs(exp, exist_ok=True)
    d = sigma0.grid.d
    header = ["s"] + [f"x{i + 1}" for i in range(d)]
    comment = summary["meta"].get("config_hash", "")
    for name, group in (("sigma0_original.dat", [sigma0]), ("sections_original.dat", meshes)):
        with open(os.path.join(exp, name), "w") as fh:
            fh.write(f"# carrying-simplex {__version__} config={comment}\n")
            fh.write("# " + " ".join(header) + "\n")
            for mesh in group:
                for p in mesh.points * scale:
                    fh.write(" ".join(f"{v:.17g}" for v in (mesh.s, *p)) + "\n")
                fh.write("\n")
    return EXIT_OK


COMMANDS = {"check": cmd_check, "axes": cmd_axes, "simulate": cmd_simulate,
            "poincare": cmd_poincare, "simplex": cmd_simplex, "sections": cmd_sections,
            "verify": cmd_verify, "export": cmd_export}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--spec", help="system spec JSON file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--tol", type=float, default=1e-6, help="mesh convergence tolerance")
    common.add_argument("--int-tol", type=float, default=DEFAULT_TOL, help="integrator tolerance")
    common.add_argument("--mesh-res", type=int, default=32, help="grid resolution m")
    common.add_argument("--epsilon", type=float, default=0.1)
    common.add_argument("--kappa", type=float, default=0.1)
    common.add_argument("--sections", type=int, default=16)
    common.add_argument("--horizon", type=int, default=20, help="periods")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    common.add_argument("--max-iters", type=int, default=500)
    common.add_argument("--force", action="store_true", help="run even if hypotheses fail")
    common.add_argument("--sigma", help="existing sigma0.csv to use")
    common.add_argument("--x0", help="comma-separated initial point")
    common.add_argument("--t0", type=float, default=0.0)
    common.add_argument("--t1", type=float, default=None)
    common.add_argument("--n", type=int, default=None, help="samples / iterates")
    common.add_argument("--pairs", type=int, default=1000, help="retrotone pairs")
    common.add_argument("--starts", type=int, default=100, help="attraction starts")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="carrying-simplex", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {"check": "hypothesis checks", "axes": "axis fixed points and periodic orbits",
             "simulate": "trajectory CSV", "poincare": "iterates of the period map",
             "simplex": "construct Sigma_0 and its sections", "sections": "section family",
             "verify": "property checks", "export": "gnuplot-ready original coordinates"}
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "simulate" and args.n is None:
        args.n = 101
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = RunConfig(args)
        return COMMANDS[args.command](cfg)
    except InputError as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except (NumericalError, CarryingSimplexError) as exc:
        log.error("%s", exc)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
