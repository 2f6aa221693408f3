"""Command-line entry point: ``adsorb run|enumerate|relax|evaluate|build-slab``.

Settings come from built-in defaults, then an optional INI file
(``--config``), then command-line flags; later sources win.  INI sections
are query, run, calculator, llm, placement, relax and eval; keys are the
flag names with dashes replaced by underscores.

Exit codes: 0 success, 1 runtime error, 2 every configuration filtered,
3 agent failure without fallback, 64 usage error.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import math
import os
import platform
import sys
import time
from collections import Counter
from pathlib import Path

import numpy as np

from . import __version__
from .agent.llm import API_KEY_ENV, HttpChat, LlmConfig
from .agent.loop import AgentConfig, Query, run_agent_loop
from .agent.mock import MockBackend
from .calculator import LJCalculator, default_params, reference_energies
from .errors import AdsorbError, AgentFailure, AllFilteredError, ChatAuthError
from .evaluation import EvalParams, evaluate_file
from .io import read_extxyz, save_extxyz, write_extxyz
from .placement import (generate_configurations, heuristic_configurations,
                        random_configurations)
from .registry import adsorbate_from_registry
from .relax import (AnomalyThresholds, FireParams, adsorption_energy, relax_all,
                    relax_structure)
from .sites import enumerate_heuristic_sites
from .slab import build_slab, default_bulk
from .structures import TAG_ADSORBATE, SlabMetadata
from .wire import HttpCalculator, SubprocessCalculator

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FILTERED = 2
EXIT_AGENT = 3
EXIT_USAGE = 64

STRATEGIES = ("agent", "heuristic", "random", "all")
FALLBACKS = ("error", "heuristic")


def parse_miller(text):
    text = str(text).strip().strip("()")
    parts = text.replace(",", " ").split()
    if len(parts) == 1 and len(parts[0]) == 3 and parts[0].isdigit():
        parts = list(parts[0])
    try:
        vals = tuple(int(x) for x in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad Miller index {text!r}") from None
    if len(vals) != 3:
        raise argparse.ArgumentTypeError(f"Miller index needs three integers, got {text!r}")
    return vals


def parse_pair(text):
    parts = str(text).replace(",", " ").replace("x", " ").split()
    try:
        vals = tuple(int(x) for x in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad supercell {text!r}") from None
    if len(vals) != 2:
        raise argparse.ArgumentTypeError(f"supercell needs two integers, got {text!r}")
    return vals


def parse_bool(text):
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


_FIRE = FireParams()
_THRESH = AnomalyThresholds()

# section -> [(key, type, default, help)]
OPTIONS = {
    "query": [
        ("adsorbate", str, None, "adsorbate registry key or extXYZ path"),
        ("catalyst", str, None, "bulk formula, e.g. Pt or Pd3Cu"),
        ("miller", parse_miller, None, "Miller index, e.g. 1,1,1"),
        ("slab", str, None, "slab extXYZ file (instead of building one)"),
        ("lattice_constant", float, None, "cubic lattice constant in A"),
        ("layers", int, 3, "atomic layers in the slab"),
        ("supercell", parse_pair, (2, 2), "in-plane repetitions, e.g. 2,2"),
        ("vacuum", float, 15.0, "vacuum thickness in A"),
        ("shift", float, 0.0, "termination shift in [0, 1)"),
    ],
    "run": [
        ("strategy", str, "agent", "agent, heuristic, random or all"),
        ("seed", int, 0, "base random seed"),
        ("parallelism", int, 1, "worker processes for relaxations"),
        ("output", str, "adsorb-run", "output directory"),
        ("fallback", str, "error", "on agent failure: error or heuristic"),
        ("random_count", int, 50, "random configurations for the random strategy"),
    ],
    "calculator": [
        ("calculator", str, "builtin", "builtin, an http(s) URL, or a command line"),
        ("cutoff", float, 8.0, "LJ cutoff in A (builtin)"),
        ("calc_timeout", float, 300.0, "external calculator timeout in s"),
    ],
    "llm": [
        ("llm", str, "live", "live, or mock:DIR for scripted replies"),
        ("base_url", str, LlmConfig.base_url, "chat-completions base URL"),
        ("model", str, LlmConfig.model, "model name"),
        ("temperature", float, LlmConfig.temperature, "sampling temperature"),
        ("top_p", float, LlmConfig.top_p, "nucleus sampling"),
        ("max_retries", int, LlmConfig.max_retries, "chat attempts per call"),
        ("llm_timeout", float, LlmConfig.timeout, "chat request timeout in s"),
        ("max_cycles", int, 3, "planner/critic cycles"),
        ("llm_critic", parse_bool, False, "add an advisory LLM review to the rule critic"),
        ("llm_indexer", parse_bool, False, "ask the LLM for binding indices"),
    ],
    "placement": [
        ("height", float, 2.0, "initial height above the site in A"),
        ("n_var", int, 3, "azimuth variants per agent site"),
        ("n_max", int, 48, "cap on agent configurations"),
        ("margin", float, 0.5, "site-matching margin"),
        ("binding_index", int, 0, "adsorbate atom facing the surface (heuristic)"),
        ("weighting", str, "uniform", "binding-center weighting: uniform or mass"),
    ],
    "relax": [
        ("fmax", float, _FIRE.fmax, "force convergence threshold in eV/A"),
        ("max_steps", int, _FIRE.max_steps, "FIRE step limit"),
        ("max_step_length", float, _FIRE.max_step_length, "largest move per step in A"),
        ("bond_scale", float, _THRESH.bond_scale, "dissociation: bond length factor"),
        ("max_stretch", float, _THRESH.max_stretch, "dissociation: absolute stretch in A"),
        ("desorption_distance", float, _THRESH.desorption_distance, "desorption distance in A"),
        ("reconstruction_distance", float, _THRESH.reconstruction_distance,
         "surface displacement limit in A"),
    ],
    "eval": [
        ("epsilon", float, 0.1, "energy tolerance in eV"),
        ("sr_mode", str, "lenient", "success-ratio mode: strict or lenient"),
    ],
}

COMMAND_SECTIONS = {
    "run": ("query", "run", "calculator", "llm", "placement", "relax"),
    "enumerate": ("query",),
    "relax": ("calculator", "relax"),
    "evaluate": ("eval",),
    "build-slab": ("query",),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _flag(key):
    return "--" + key.replace("_", "-")


def _add_sections(p, sections):
    for sec in sections:
        g = p.add_argument_group(sec)
        for key, typ, default, help_ in OPTIONS[sec]:
            if typ is parse_bool:
                g.add_argument(_flag(key), dest=key, action=argparse.BooleanOptionalAction,
                               default=None, help=f"{help_} (default {default})")
            else:
                g.add_argument(_flag(key), dest=key, type=typ, default=None,
                               help=f"{help_} (default {default})")


def build_parser():
    ap = _Parser(prog="adsorb", description="Adsorption-configuration search and evaluation")
    ap.add_argument("--version", action="version", version=f"adsorb {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="search for the lowest-energy adsorption configuration")
    p.add_argument("--config", help="INI file with default settings")
    p.add_argument("--no-timestamps", action="store_true",
                   help="omit wall times and dates so reports are byte-reproducible")
    _add_sections(p, COMMAND_SECTIONS["run"])

    p = sub.add_parser("enumerate", help="list heuristic adsorption sites of a slab as JSON")
    p.add_argument("--config")
    p.add_argument("--out", help="write JSON here instead of stdout")
    _add_sections(p, COMMAND_SECTIONS["enumerate"])

    p = sub.add_parser("relax", help="relax one extXYZ structure")
    p.add_argument("--config")
    p.add_argument("--in", dest="input", required=True, help="extXYZ input")
    p.add_argument("--out", help="write the relaxed structure here")
    p.add_argument("--trajectory", help="write every step as multi-frame extXYZ")
    p.add_argument("--adsorbate", help="registry key: treat tag-2 atoms as this molecule")
    _add_sections(p, COMMAND_SECTIONS["relax"])

    p = sub.add_parser("evaluate", help="compute SR, LEDR, RSR and consistency metrics")
    p.add_argument("records", help="records CSV or JSON")
    p.add_argument("--config")
    p.add_argument("--solutions", help="solution triples JSON for the consistency ratio")
    p.add_argument("--json", dest="json_out", help="also write the JSON report here")
    p.add_argument("--format", choices=("text", "json"), default="text")
    _add_sections(p, COMMAND_SECTIONS["evaluate"])

    p = sub.add_parser("build-slab", help="build a slab and write it as extXYZ")
    p.add_argument("--config")
    p.add_argument("--out", required=True, help="output extXYZ path")
    _add_sections(p, COMMAND_SECTIONS["build-slab"])
    return ap


def resolve_settings(args, sections):
    """Defaults, then the INI file, then flags."""
    out = {}
    for sec in sections:
        for key, typ, default, _ in OPTIONS[sec]:
            out[key] = default
    path = getattr(args, "config", None)
    if path:
        cp = configparser.ConfigParser()
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except OSError as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from None
        except configparser.Error as exc:
            raise UsageError(f"bad config {path}: {exc}") from None
        for sec in cp.sections():
            if sec not in OPTIONS:
                raise UsageError(f"{path}: unknown section [{sec}]")
            known = {k: t for k, t, _, _ in OPTIONS[sec]}
            for key, raw in cp.items(sec):
                if key not in known:
                    raise UsageError(f"{path}: unknown key {key!r} in [{sec}]")
                if sec not in sections:
                    continue
                try:
                    out[key] = known[key](raw)
                except (ValueError, argparse.ArgumentTypeError) as exc:
                    raise UsageError(f"{path}: [{sec}] {key}: {exc}") from None
    for key in out:
        v = getattr(args, key, None)
        if v is not None:
            out[key] = v
    return out


# --- builders ----------------------------------------------------------------

def load_or_build_slab(cfg):
    if cfg.get("slab"):
        slab = read_extxyz(cfg["slab"])
        if cfg.get("miller") is None and "miller" in slab.info:
            cfg["miller"] = parse_miller(slab.info["miller"])
        if cfg.get("catalyst") is None and "bulk_formula" in slab.info:
            cfg["catalyst"] = str(slab.info["bulk_formula"])
        return slab
    if not cfg.get("catalyst") or cfg.get("miller") is None:
        raise UsageError("give --slab, or both --catalyst and --miller")
    bulk = default_bulk(cfg["catalyst"], cfg.get("lattice_constant"))
    meta = SlabMetadata(cfg["catalyst"], cfg["miller"], cfg["shift"], True, cfg["layers"],
                        cfg["vacuum"])
    return build_slab(bulk, meta, cfg["supercell"])


def make_calculator(cfg, ads=None):
    spec = cfg["calculator"]
    if spec == "builtin":
        return LJCalculator(default_params(cfg["cutoff"]), adsorbate=ads)
    if spec.startswith(("http://", "https://")):
        return HttpCalculator(spec, cfg["calc_timeout"])
    return SubprocessCalculator(spec, cfg["calc_timeout"])


def fire_params(cfg):
    return FireParams(fmax=cfg["fmax"], max_steps=cfg["max_steps"],
                      max_step_length=cfg["max_step_length"])


def thresholds(cfg):
    return AnomalyThresholds(cfg["bond_scale"], cfg["max_stretch"], cfg["desorption_distance"],
                             cfg["reconstruction_distance"])


def make_chat(cfg, query):
    """Chat backend plus a provenance record for the report."""
    spec = cfg["llm"]
    if spec.startswith("mock:"):
        backend = MockBackend.load(spec[len("mock:"):])
        fx = backend.find(query.adsorbate_key, query.catalyst_formula, query.miller)
        digest = hashlib.sha256(Path(fx.path).read_bytes()).hexdigest()
        return fx.chat(), {"mode": "mock", "fixture": Path(fx.path).name, "sha256": digest}
    if spec != "live":
        raise UsageError(f"--llm must be 'live' or 'mock:DIR', got {spec!r}")
    key = os.environ.get(API_KEY_ENV)
    if not key:
        raise ChatAuthError(f"live LLM mode needs an API key in ${API_KEY_ENV}")
    conf = LlmConfig(cfg["base_url"], cfg["model"], cfg["temperature"], cfg["top_p"],
                     cfg["max_retries"], cfg["llm_timeout"]).resolved()
    return HttpChat(conf, key), {"mode": "live", "base_url": conf.base_url, "model": conf.model}


def _finite(x):
    return float(x) if x is not None and math.isfinite(x) else None


def json_safe(obj):
    """Replace non-finite floats with None so the output is strict JSON."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    return obj


def _dumps(doc):
    return json.dumps(json_safe(doc), indent=2, allow_nan=False) + "\n"


def _config_snapshot(cfg):
    snap = {}
    for k, v in cfg.items():
        if k == "output":
            continue
        snap[k] = list(v) if isinstance(v, tuple) else v
    return snap


def _versions():
    return {"adsorb": __version__, "numpy": np.__version__,
            "python": platform.python_version()}


# --- run ---------------------------------------------------------------------

def run_pipeline(cfg, timestamps=True):
    """Execute a search; returns (exit code, report dict, best structure or None)."""
    t0 = time.perf_counter()
    if cfg["strategy"] not in STRATEGIES:
        raise UsageError(f"--strategy must be one of {', '.join(STRATEGIES)}")
    if cfg["fallback"] not in FALLBACKS:
        raise UsageError(f"--fallback must be one of {', '.join(FALLBACKS)}")
    if not cfg.get("adsorbate"):
        raise UsageError("--adsorbate is required")
    slab = load_or_build_slab(cfg)
    ads = adsorbate_from_registry(cfg["adsorbate"])
    query = Query(ads.key, cfg.get("catalyst") or "unknown", cfg.get("miller") or (0, 0, 1),
                  cfg.get("slab"))
    calc = make_calculator(cfg, ads)
    fire = fire_params(cfg)
    report = {
        "system": {"adsorbate": ads.key, "catalyst": query.catalyst_formula,
                   "miller": list(query.miller), "n_slab_atoms": len(slab),
                   "slab_fingerprint": slab.fingerprint()},
        "strategy": cfg["strategy"],
        "seed": cfg["seed"],
        "config": _config_snapshot(cfg),
        "versions": _versions(),
        "solution": None,
        "transcript": [],
    }
    sites = enumerate_heuristic_sites(slab)
    groups = []
    code = EXIT_OK
    if cfg["strategy"] in ("agent", "all"):
        chat, llm_info = make_chat(cfg, query)
        report["llm"] = llm_info
        agent_cfg = AgentConfig(chat, cfg["max_cycles"], use_llm_critic=cfg["llm_critic"],
                                use_llm_indexer=cfg["llm_indexer"])
        try:
            result = run_agent_loop(query, slab, agent_cfg, ads)
        except AgentFailure as exc:
            report["transcript"] = exc.transcript or []
            report["agent_error"] = str(exc)
            if cfg["fallback"] != "heuristic":
                report["status"] = "agent-failure"
                return EXIT_AGENT, _stamp(report, t0, timestamps), None
            report["fallback"] = "heuristic"
            if cfg["strategy"] == "agent":
                groups.append(("heuristic", heuristic_configurations(
                    slab, ads, cfg["binding_index"], cfg["seed"], cfg["height"], sites)))
        else:
            report["solution"] = result.solution.as_dict()
            report["binding"] = list(result.binding)
            report["transcript"] = result.transcript
            groups.append(("agent", generate_configurations(
                slab, ads, result.solution, result.binding, cfg["n_max"], cfg["seed"],
                cfg["n_var"], cfg["margin"], cfg["height"], sites, cfg["weighting"])))
    if cfg["strategy"] in ("heuristic", "all"):
        groups.append(("heuristic", heuristic_configurations(
            slab, ads, cfg["binding_index"], cfg["seed"], cfg["height"], sites)))
    if cfg["strategy"] in ("random", "all"):
        groups.append(("random", random_configurations(
            slab, ads, cfg["random_count"], cfg["seed"], cfg["height"])))

    configs = [c for _, group in groups for c in group]
    e_slab, e_gas = reference_energies(slab, ads, calc, fire)
    results = relax_all(configs, calc, fire, cfg["parallelism"], thresholds(cfg))
    entries = []
    for k, (c, r) in enumerate(zip(configs, results)):
        entries.append({
            "id": k, **c.provenance, "status": r.status, "steps": r.steps,
            "energy": _finite(r.energy), "delta_e": _finite(r.energy - e_slab - e_gas),
            "max_force": _finite(r.max_force), "anomalies": r.anomalies.as_dict(),
            "valid": r.valid, "message": r.message,
        })
    report["e_slab"] = e_slab
    report["e_gas"] = e_gas
    report["configurations"] = entries
    report["n_init"] = len(configs)
    report["n_init_by_strategy"] = {name: len(g) for name, g in groups}
    report["n_sites"] = dict(Counter(s.kind for s in sites))
    report["n_init_algorithm"] = len(sites) + cfg["random_count"]
    best = None
    try:
        rec = adsorption_energy(results, e_slab, e_gas)
    except AllFilteredError as exc:
        report["status"] = "all-filtered"
        report["error"] = str(exc)
        report["delta_e"] = [_finite(x) for x in (r.energy - e_slab - e_gas for r in results)]
        report["delta_e_ads"] = None
        report["argmin"] = None
        code = EXIT_FILTERED
    else:
        report["status"] = "ok"
        report["delta_e"] = [_finite(x) for x in rec.delta_e]
        report["delta_e_ads"] = rec.delta_e_ads
        report["argmin"] = rec.argmin
        report["n_valid"] = rec.n_valid
        report["n_anomalous"] = rec.n_anomalous
        best = results[rec.argmin].final
        best = best.replace(info={**best.info, "delta_e_ads": rec.delta_e_ads,
                                  "config_id": rec.argmin})
    return code, _stamp(report, t0, timestamps), best


def _stamp(report, t0, timestamps):
    if timestamps:
        report["wall_time_s"] = time.perf_counter() - t0
        report["created"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    return report


def write_run_outputs(outdir, report, best):
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(_dumps(report))
    (out / "transcript.json").write_text(_dumps(report.get("transcript", [])))
    if best is not None:
        (out / "best.extxyz").write_text(write_extxyz(best, always_tags=True))


def cmd_run(args):
    cfg = resolve_settings(args, COMMAND_SECTIONS["run"])
    code, report, best = run_pipeline(cfg, timestamps=not args.no_timestamps)
    write_run_outputs(cfg["output"], report, best)
    if code == EXIT_OK:
        print(f"delta_e_ads = {report['delta_e_ads']:.6f} eV from {report['n_init']} "
              f"configurations (best id {report['argmin']}); report in {cfg['output']}")
    elif code == EXIT_FILTERED:
        print(f"error: {report['error']}", file=sys.stderr)
    else:
        print(f"error: {report['agent_error']}", file=sys.stderr)
    return code


# --- utility commands --------------------------------------------------------

def cmd_enumerate(args):
    cfg = resolve_settings(args, COMMAND_SECTIONS["enumerate"])
    slab = load_or_build_slab(cfg)
    sites = enumerate_heuristic_sites(slab)
    counts = Counter(s.kind for s in sites)
    doc = {"n_sites": len(sites),
           "counts": {k: counts.get(k, 0) for k in ("ontop", "bridge", "hollow")},
           "sites": [s.as_dict() for s in sites]}
    text = _dumps(doc)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_relax(args):
    cfg = resolve_settings(args, COMMAND_SECTIONS["relax"])
    s = read_extxyz(args.input)
    ads = adsorbate_from_registry(args.adsorbate) if args.adsorbate else None
    calc = make_calculator(cfg, ads)
    if isinstance(calc, LJCalculator):
        calc.params.check(s.symbols)
    # anomaly checks need both a slab and an adsorbate
    tags = set(s.tags.tolist())
    thr = thresholds(cfg) if TAG_ADSORBATE in tags and tags - {TAG_ADSORBATE} else None
    r = relax_structure(s, calc, fire_params(cfg), bool(args.trajectory), thr)
    if args.out:
        save_extxyz(args.out, r.final, always_tags=True)
    if args.trajectory and r.trajectory:
        r.write_trajectory(args.trajectory)
    doc = {"status": r.status, "energy": _finite(r.energy), "max_force": _finite(r.max_force),
           "steps": r.steps, "message": r.message}
    if thr is not None:
        doc["anomalies"] = r.anomalies.as_dict()
    sys.stdout.write(_dumps(doc))
    return EXIT_OK if r.status == "converged" else EXIT_ERROR


def cmd_evaluate(args):
    cfg = resolve_settings(args, COMMAND_SECTIONS["evaluate"])
    params = EvalParams(cfg["epsilon"], sr_mode=cfg["sr_mode"])
    rep = evaluate_file(args.records, params, args.solutions)
    doc = _dumps(rep.as_dict())
    if args.json_out:
        Path(args.json_out).write_text(doc)
    sys.stdout.write(doc if args.format == "json" else rep.to_text())
    return EXIT_OK


def cmd_build_slab(args):
    cfg = resolve_settings(args, COMMAND_SECTIONS["build-slab"])
    if cfg.get("slab"):
        raise UsageError("build-slab builds from --catalyst and --miller; --slab is not used")
    slab = load_or_build_slab(cfg)
    save_extxyz(args.out, slab, always_tags=True)
    print(f"wrote {len(slab)} atoms to {args.out}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "enumerate": cmd_enumerate, "relax": cmd_relax,
            "evaluate": cmd_evaluate, "build-slab": cmd_build_slab}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"adsorb {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AgentFailure as exc:
        print(f"adsorb {args.command}: agent failure: {exc}", file=sys.stderr)
        return EXIT_AGENT
    except AllFilteredError as exc:
        print(f"adsorb {args.command}: {exc}", file=sys.stderr)
        return EXIT_FILTERED
    except (AdsorbError, OSError, ValueError) as exc:
        print(f"adsorb {args.command}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
