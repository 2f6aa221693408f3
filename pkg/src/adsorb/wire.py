"""Out-of-process calculators over a small JSON protocol.

Request:  {"cell": [9 floats], "symbols": [...], "positions": [[x, y, z], ...], "tags": [...]}
Response: {"energy": float, "forces": [[fx, fy, fz], ...]}

Transports: HTTP POST to ``<base>/calculate`` or a subprocess exchanging
one JSON document per line on stdin/stdout.  Errors are never retried.

``python -m adsorb.wire serve-http|serve-stdio`` runs a stub server that
answers with the built-in LJ calculator (or zeros with ``--echo``).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import selectors
import shlex
import subprocess
import sys
import time
import urllib.error
import urllib.request
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .calculator import EnergyForces, LJCalculator, default_params
from .errors import CalculatorError, NonFiniteError
from .registry import adsorbate_from_registry
from .structures import Lattice, Structure

DEFAULT_TIMEOUT = 300.0


def encode_request(s: Structure) -> dict:
    return {
        "cell": [float(x) for x in s.lattice.cell.reshape(-1)],
        "symbols": list(s.symbols),
        "positions": [[float(x) for x in p] for p in s.positions],
        "tags": [int(t) for t in s.tags],
    }


def decode_request(doc: dict, pbc=(True, True, True)) -> Structure:
    return Structure(Lattice(np.reshape(doc["cell"], (3, 3)), pbc), doc["symbols"],
                     doc["positions"], doc["tags"])


def decode_response(doc, n_atoms, transport) -> EnergyForces:
    if not isinstance(doc, dict) or "energy" not in doc or "forces" not in doc:
        raise CalculatorError(f"{transport}: response lacks 'energy'/'forces': {str(doc)[:200]}")
    try:
        energy = float(doc["energy"])
        forces = np.array(doc["forces"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise CalculatorError(f"{transport}: malformed response ({exc})") from None
    if forces.ndim != 2 or forces.shape[1] != 3:
        raise CalculatorError(f"{transport}: forces must be N x 3, got shape {forces.shape}")
    if len(forces) != n_atoms:
        raise CalculatorError(
            f"{transport}: force length mismatch ({len(forces)} forces for {n_atoms} atoms)")
    if not (math.isfinite(energy) and np.all(np.isfinite(forces))):
        raise NonFiniteError(f"{transport}: non-finite energy or forces")
    return EnergyForces(energy, forces)


class HttpCalculator:
    """POSTs each structure to ``{base_url}/calculate``."""

    def __init__(self, base_url, timeout=DEFAULT_TIMEOUT):
        self.base_url = base_url.rstrip("/")
        self.timeout = float(timeout)
        self.key = "http:" + self.base_url

    def __repr__(self):
        return f"HttpCalculator({self.base_url!r})"

    def __call__(self, s: Structure) -> EnergyForces:
        url = self.base_url + "/calculate"
        body = json.dumps(encode_request(s)).encode()
        req = urllib.request.Request(url, data=body, method="POST",
                                     headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                raw = resp.read()
        except urllib.error.HTTPError as exc:
            excerpt = exc.read()[:200].decode(errors="replace")
            raise CalculatorError(f"POST {url}: HTTP {exc.code}: {excerpt}") from None
        except (urllib.error.URLError, TimeoutError, OSError) as exc:
            reason = getattr(exc, "reason", exc)
            raise CalculatorError(f"POST {url}: {reason} (timeout {self.timeout} s)") from None
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError:
            raise CalculatorError(
                f"POST {url}: response is not JSON: {raw[:200].decode(errors='replace')}") from None
        return decode_response(doc, len(s), f"POST {url}")


class SubprocessCalculator:
    """Talks to a long-running child process, one JSON line each way.

    The child is started on first use and not carried across pickling, so
    each worker process gets its own connection.
    """

    def __init__(self, command, timeout=DEFAULT_TIMEOUT):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout = float(timeout)
        self.key = "cmd:" + hashlib.sha256(" ".join(self.command).encode()).hexdigest()[:16]
        self._proc = None
        self._sel = None
        self._buf = b""

    def __repr__(self):
        return f"SubprocessCalculator({' '.join(self.command)!r})"

    def __getstate__(self):
        return {"command": self.command, "timeout": self.timeout, "key": self.key}

    def __setstate__(self, state):
        self.__init__(state["command"], state["timeout"])

    def _start(self):
        try:
            self._proc = subprocess.Popen(self.command, stdin=subprocess.PIPE,
                                          stdout=subprocess.PIPE, stderr=subprocess.PIPE)
        except OSError as exc:
            raise CalculatorError(f"cannot start calculator {self.command}: {exc}") from None
        self._sel = selectors.DefaultSelector()
        self._sel.register(self._proc.stdout, selectors.EVENT_READ)
        self._buf = b""

    def _stderr_tail(self):
        try:
            return self._proc.stderr.read()[-300:].decode(errors="replace")
        except Exception:
            return ""

    def _readline(self):
        deadline = time.monotonic() + self.timeout
        fd = self._proc.stdout.fileno()
        while b"\n" not in self._buf:
            remaining = deadline - time.monotonic()
            if remaining <= 0 or not self._sel.select(remaining):
                self.close()
                raise CalculatorError(f"calculator {self.command[0]} timed out after {self.timeout} s")
            chunk = os.read(fd, 65536)
            if not chunk:
                code = self._proc.poll()
                tail = self._stderr_tail()
                self._proc = None
                raise CalculatorError(
                    f"calculator {self.command[0]} closed its output (exit code {code}); "
                    f"stderr: {tail.strip()}")
            self._buf += chunk
        line, self._buf = self._buf.split(b"\n", 1)
        return line

    def __call__(self, s: Structure) -> EnergyForces:
        if self._proc is None or self._proc.poll() is not None:
            self._start()
        try:
            self._proc.stdin.write(json.dumps(encode_request(s)).encode() + b"\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise CalculatorError(f"calculator {self.command[0]}: write failed ({exc})") from None
        line = self._readline()
        try:
            doc = json.loads(line)
        except json.JSONDecodeError:
            raise CalculatorError(
                f"calculator {self.command[0]}: response is not JSON: "
                f"{line[:200].decode(errors='replace')}") from None
        return decode_response(doc, len(s), f"calculator {self.command[0]}")

    def close(self):
        if self._proc is not None:
            self._proc.kill()
            self._proc.wait()
            self._proc = None

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass


def external_energy_forces(s: Structure, endpoint, timeout=DEFAULT_TIMEOUT) -> EnergyForces:
    """One-shot evaluation against an http(s) URL or a command line."""
    if endpoint.startswith(("http://", "https://")):
        return HttpCalculator(endpoint, timeout)(s)
    calc = SubprocessCalculator(endpoint, timeout)
    try:
        return calc(s)
    finally:
        calc.close()


# --- stub servers -----------------------------------------------------------

def _stub_calc(args):
    if args.echo:
        return lambda s: EnergyForces(0.0, np.zeros((len(s), 3)))
    params = default_params(args.cutoff)
    ads = adsorbate_from_registry(args.adsorbate) if args.adsorbate else None
    return LJCalculator(params, adsorbate=ads)


def _answer(calc, doc, pbc):
    ef = calc(decode_request(doc, pbc))
    return {"energy": ef.energy, "forces": ef.forces.tolist()}


def serve_stdio(calc, pbc, stdin=None, stdout=None):
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    for line in stdin:
        if not line.strip():
            continue
        stdout.write(json.dumps(_answer(calc, json.loads(line), pbc)) + "\n")
        stdout.flush()


def make_http_server(calc, pbc, host="127.0.0.1", port=0):
    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            if self.path.rstrip("/") != "/calculate":
                self.send_error(404)
                return
            n = int(self.headers.get("Content-Length", 0))
            try:
                body = json.dumps(_answer(calc, json.loads(self.rfile.read(n)), pbc)).encode()
            except Exception as exc:
                self.send_error(400, str(exc)[:200])
                return
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def log_message(self, *args):
            pass

    return ThreadingHTTPServer((host, port), Handler)


def main(argv=None):
    ap = argparse.ArgumentParser(prog="python -m adsorb.wire",
                                 description="LJ stub server for the external calculator protocol")
    ap.add_argument("mode", choices=["serve-http", "serve-stdio"])
    ap.add_argument("--port", type=int, default=8765)
    ap.add_argument("--host", default="127.0.0.1")
    ap.add_argument("--cutoff", type=float, default=8.0)
    ap.add_argument("--adsorbate", help="registry key: use adsorbate restraints for tag-2 atoms")
    ap.add_argument("--pbc", default="T T F", help="periodicity flags for incoming cells")
    ap.add_argument("--echo", action="store_true", help="answer zero energy and forces")
    args = ap.parse_args(argv)
    pbc = tuple(x.upper().startswith("T") for x in args.pbc.split())
    calc = _stub_calc(args)
    if args.mode == "serve-stdio":
        serve_stdio(calc, pbc)
        return 0
    server = make_http_server(calc, pbc, args.host, args.port)
    print(f"listening on http://{args.host}:{server.server_address[1]}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    sys.exit(main())
