"""Command line entry point and experiment runners.

Subcommands ``recover``, ``certify`` and ``sop`` write one JSON document;
``fig1``, ``table1`` and ``fig3`` write CSV tables whose leading ``#``
lines carry the resolved configuration.  Exit codes: 0 success, 2 usage
error, 3 numerical flag (non-converged solve, ill-conditioned fit,
invalid certificate or inadmissible kernel).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .certificate import DEFAULT_NU, CertificateError, admissibility_check, build_certificate, sop_certificate, verify_certificate
from .manifold import ManifoldError, random_separated_support
from .refine import RecoveryConfig, display_samples, recover, support_error
from .signal import MeasurementSet, SpikeTrain, add_noise, forward, real_line_train, sop_forward
from .solver import SolverConfig
from .sop import recover_pulses

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3
PI = math.pi
DEFAULT_NUS = (PI / 2, PI, 3 * PI / 2, 2 * PI, 5 * PI / 2)
DEFAULT_DEGREES = (5, 8, 10)
DEFAULT_NOISE_SDS = (0.0, 0.05, 0.1, 0.2, 0.5)
ERROR_STATISTIC = (
    "mean over trials of the per-trial mean matched distance; max over trials of the per-trial max; "
    "pairs farther apart than half the minimum separation nu/(2N) count as one missed and one spurious spike"
)


class UsageError(ValueError):
    """Malformed configuration or arguments."""


@dataclass
class ExperimentConfig:
    """Resolved settings of one CLI run.

    ``nus``, ``degrees`` and ``noise_sds`` are the sweeps of ``fig1``,
    ``table1`` and ``fig3``; the scalar fields drive single runs.
    """

    experiment: str = "recover"
    manifold: str = "sphere"
    degree: int = 8
    nu: float | None = None
    nus: list = field(default_factory=lambda: list(DEFAULT_NUS))
    degrees: list = field(default_factory=lambda: list(DEFAULT_DEGREES))
    noise_sds: list = field(default_factory=lambda: list(DEFAULT_NOISE_SDS))
    trials: int = 1
    spikes: int = 10
    amp_sd: float = 10.0
    noise_sd: float = 0.0
    seed: int = 0
    grid: int | None = None
    slide: bool = True
    kernel: str = "gaussian"
    sigma: float = 1.0
    nonneg: bool = False
    input: str | None = None
    display: int = 0
    csv: str | None = None
    out: str | None = None

    def validate(self) -> None:
        if self.trials < 1:
            raise UsageError("trials must be at least 1")
        if self.degree < 1 or any(int(n) < 1 for n in self.degrees):
            raise UsageError("degree must be at least 1")
        if self.spikes < 0:
            raise UsageError("spikes must be nonnegative")
        if self.noise_sd < 0 or any(s < 0 for s in self.noise_sds):
            raise UsageError("noise sd must be nonnegative")
        if self.sigma <= 0:
            raise UsageError("sigma must be positive")
        if self.experiment in ("fig1", "table1", "fig3") and self.manifold != "sphere":
            raise UsageError(f"{self.experiment} runs on the sphere")
        for path in (self.out, self.csv):
            if path:
                parent = os.path.dirname(os.path.abspath(path))
                if not os.access(parent, os.W_OK):
                    raise UsageError(f"cannot write to {path}")

    def to_dict(self) -> dict:
        return asdict(self)


def default_nu(manifold: str) -> float:
    return DEFAULT_NU[manifold]


# ---------------------------------------------------------------------------
# trials


def trial_seed(seed: int, trial: int) -> int:
    return seed + trial


def make_trial(manifold: str, N: int, nu: float, spikes: int, seed: int, amp_sd: float = 10.0) -> SpikeTrain:
    """Random ``nu / N``-separated support with iid normal amplitudes of sd ``amp_sd``."""
    T = random_separated_support(manifold, N, nu, spikes, seed=seed)
    amps = amp_sd * np.random.default_rng([seed, 1]).standard_normal(len(T))
    return SpikeTrain(T, amps)


def _recovery_config(cfg: ExperimentConfig, noise_sd: float) -> RecoveryConfig:
    return RecoveryConfig(grid=cfg.grid, noise_sd=noise_sd, slide=cfg.slide, solver=SolverConfig(nonneg=cfg.nonneg))


def match_gate(N: int, nu: float) -> float:
    """Largest distance at which an estimate is credited to a true spike.

    Within half the minimum separation an estimate is closer to its own
    spike than to any other.
    """
    return nu / (2 * N)


def run_trial(cfg: ExperimentConfig, N: int, nu: float, trial: int, noise_sd: float = 0.0) -> dict:
    """One seeded generate, measure, recover and score cycle."""
    seed = trial_seed(cfg.seed, trial)
    x = make_trial(cfg.manifold, N, nu, cfg.spikes, seed, cfg.amp_sd)
    y = forward(x, N)
    if noise_sd > 0:
        y = add_noise(y, noise_sd, seed=[seed, 2])
    r = recover(y, _recovery_config(cfg, noise_sd))
    e = support_error(x.support, r.estimate.support, gate=match_gate(N, nu))
    return {
        "trial": trial,
        "seed": seed,
        "spikes": len(x),
        "mean_error": e.mean,
        "max_error": e.max,
        "missed": e.unmatched_true,
        "spurious": e.unmatched_est,
        "converged": r.solver.get("converged", True),
        "gap": r.solver.get("rel_gap", 0.0),
        "flags": r.flags,
    }


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("SRKIT_THREADS", "1")))
    except ValueError:
        raise UsageError("SRKIT_THREADS must be an integer") from None


def run_trials(cfg: ExperimentConfig, N: int, nu: float, noise_sd: float = 0.0) -> list:
    """All trials of one sweep point, in trial order."""
    idx = range(cfg.trials)
    n = min(_threads(), cfg.trials)
    if n == 1:
        return [run_trial(cfg, N, nu, i, noise_sd) for i in idx]
    with ThreadPoolExecutor(n) as ex:
        return list(ex.map(lambda i: run_trial(cfg, N, nu, i, noise_sd), idx))


def summarize(rows: list) -> dict:
    """Aggregate per-trial errors; trials without a matched pair are counted as failures."""
    means = np.array([r["mean_error"] for r in rows], dtype=float)
    maxes = np.array([r["max_error"] for r in rows], dtype=float)
    ok = np.isfinite(means)
    return {
        "mean_error": float(means[ok].mean()) if ok.any() else math.nan,
        "max_error": float(maxes[ok].max()) if ok.any() else math.nan,
        "failures": int((~ok).sum()),
        "missed": int(sum(r["missed"] for r in rows)),
        "spurious": int(sum(r["spurious"] for r in rows)),
        "not_converged": int(sum(not r["converged"] for r in rows)),
        "max_rel_gap": float(max(r["gap"] for r in rows)),
    }


def _csv(cfg: ExperimentConfig, key: str, rows: list) -> str:
    buf = io.StringIO()
    buf.write("# config: " + json.dumps(cfg.to_dict(), sort_keys=True) + "\n")
    buf.write("# error statistic: " + ERROR_STATISTIC + "\n")
    cols = [key, "mean_error", "max_error", "failures", "missed", "spurious", "not_converged", "max_rel_gap"]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([repr(float(r[c])) if isinstance(r[c], float) else r[c] for c in cols])
    return buf.getvalue()


def run_fig1(cfg: ExperimentConfig) -> tuple[str, list]:
    """Mean and max recovery error against the separation constant."""
    rows = [{"nu": float(nu), **summarize(run_trials(cfg, cfg.degree, nu))} for nu in cfg.nus]
    return _csv(cfg, "nu", rows), rows


def run_table1(cfg: ExperimentConfig) -> tuple[str, list]:
    """Localization error for each degree at the configured separation."""
    nu = cfg.nu if cfg.nu is not None else default_nu("sphere")
    rows = [{"N": int(N), **summarize(run_trials(cfg, int(N), nu))} for N in cfg.degrees]
    return _csv(cfg, "N", rows), rows


def run_fig3(cfg: ExperimentConfig) -> tuple[str, list]:
    """Recovery error against the noise standard deviation."""
    nu = cfg.nu if cfg.nu is not None else default_nu("sphere")
    rows = [{"noise_sd": float(sd), **summarize(run_trials(cfg, cfg.degree, nu, sd))} for sd in cfg.noise_sds]
    return _csv(cfg, "noise_sd", rows), rows


# ---------------------------------------------------------------------------
# single runs


def run_recover(cfg: ExperimentConfig) -> tuple[dict, int, dict]:
    """Recover from ``cfg.input`` measurements or from a seeded synthetic trial.

    Returns the JSON document, the exit code and side outputs keyed by path.
    """
    truth = None
    if cfg.input:
        with open(cfg.input) as fh:
            y = MeasurementSet.from_json(fh.read())
        cfg = replace(cfg, manifold=y.manifold, degree=y.N)
    else:
        nu = cfg.nu if cfg.nu is not None else default_nu(cfg.manifold)
        truth = make_trial(cfg.manifold, cfg.degree, nu, cfg.spikes, cfg.seed, cfg.amp_sd)
        y = forward(truth, cfg.degree)
        if cfg.noise_sd > 0:
            y = add_noise(y, cfg.noise_sd, seed=[cfg.seed, 2])
    r = recover(y, _recovery_config(cfg, cfg.noise_sd), truth=truth)
    doc = {"experiment": "recover", "config": cfg.to_dict(), "result": r.to_dict()}
    if truth is not None:
        doc["truth"] = truth.to_dict()
    side = {}
    if cfg.csv:
        side[cfg.csv] = r.to_csv(truth)
    if cfg.display > 0 and cfg.out:
        side[os.path.splitext(cfg.out)[0] + "_display.csv"] = display_samples(y, _display_points(y.manifold, cfg.display))
    return doc, EXIT_NUMERIC if r.flags else EXIT_OK, side


def _display_points(manifold: str, n: int) -> np.ndarray:
    from .manifold import fibonacci_sphere, uniform_grid

    return fibonacci_sphere(n) if manifold == "sphere" else uniform_grid(manifold, n)


def run_certify(cfg: ExperimentConfig) -> tuple[dict, int, dict]:
    """Build and verify a certificate for a random separated support with random signs.

    With ``manifold = real_line`` the kernel's admissibility report is
    produced and, if it passes, a pulse certificate at ``nu`` sigma spacing.
    """
    rng = np.random.default_rng([cfg.seed, 3])
    doc = {"experiment": "certify", "config": cfg.to_dict()}
    if cfg.manifold == "real_line":
        adm = admissibility_check(cfg.kernel)
        doc["admissibility"] = adm.to_dict()
        if not adm.passed:
            return doc, EXIT_NUMERIC, {}
        nu = cfg.nu if cfg.nu is not None else default_nu("real_line")
        gaps = nu * cfg.sigma * (1.0 + rng.random(max(cfg.spikes - 1, 0)))
        pts = np.concatenate([[0.0], np.cumsum(gaps)])[: max(cfg.spikes, 1)]
        u = rng.choice([-1.0, 1.0], len(pts))
        _, rep = sop_certificate(pts, u, cfg.kernel, cfg.sigma, nu=nu, admissibility=adm)
        doc.update(support=pts.tolist(), signs=u.tolist(), report=rep.to_dict())
        return doc, EXIT_OK if rep.verdict else EXIT_NUMERIC, {}
    nu = cfg.nu if cfg.nu is not None else default_nu(cfg.manifold)
    T = random_separated_support(cfg.manifold, cfg.degree, nu, cfg.spikes, seed=cfg.seed)
    u = rng.choice([-1.0, 1.0], len(T))
    doc.update(support=T.points.tolist(), signs=u.tolist())
    try:
        q = build_certificate(T, u, cfg.degree, nu=nu)
    except CertificateError as exc:
        doc["error"] = str(exc)
        return doc, EXIT_NUMERIC, {}
    rep = verify_certificate(q, T, u)
    doc["condition"] = q.condition
    doc["report"] = rep.to_dict()
    return doc, EXIT_OK if rep.verdict else EXIT_NUMERIC, {}


def run_sop(cfg: ExperimentConfig) -> tuple[dict, int, dict]:
    """Seeded pulse-stream recovery; an inadmissible kernel stops before solving."""
    adm = admissibility_check(cfg.kernel)
    doc = {"experiment": "sop", "config": cfg.to_dict(), "admissibility": adm.to_dict()}
    if not adm.passed:
        return doc, EXIT_NUMERIC, {}
    rng = np.random.default_rng([cfg.seed, 4])
    nu = cfg.nu if cfg.nu is not None else default_nu("real_line")
    n = max(cfg.spikes, 1)
    gaps = nu * cfg.sigma * (1.0 + 0.5 * rng.random(n - 1))
    pts = np.concatenate([[0.0], np.cumsum(gaps)])
    amps = cfg.amp_sd * rng.standard_normal(n)
    if cfg.nonneg:
        amps = np.abs(amps)
    truth = real_line_train(pts, amps)
    y = sop_forward(truth, cfg.kernel, cfg.sigma)
    if cfg.noise_sd > 0:
        y = add_noise(y, cfg.noise_sd, seed=[cfg.seed, 2])
    r = recover_pulses(y, cfg=_recovery_config(cfg, cfg.noise_sd), truth=truth)
    doc.update(truth=truth.to_dict(), result=r.to_dict())
    side = {cfg.csv: r.to_csv(truth)} if cfg.csv else {}
    return doc, EXIT_NUMERIC if r.flags else EXIT_OK, side


# ---------------------------------------------------------------------------
# argument handling


_PI_TERM = re.compile(r"^(?:([0-9.eE+-]+)\s*\*\s*)?pi(?:\s*/\s*([0-9.eE+-]+))?$")


def _number(tok: str) -> float:
    """A float, or a multiple of pi written as ``pi``, ``2*pi``, ``pi/2`` or ``3*pi/2``."""
    m = _PI_TERM.match(tok)
    if m:
        return float(m.group(1) or 1.0) * PI / float(m.group(2) or 1.0)
    return float(tok)


def _floats(text: str) -> list:
    out = []
    for tok in str(text).split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            out.append(_number(tok))
        except ValueError:
            raise UsageError(f"cannot read number {tok!r}") from None
    return out


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"cannot read boolean {text!r}")


_LISTS = {"nus", "degrees", "noise_sds"}


def _coerce(name: str, value):
    """Convert a flag or config-file value to the type of ``ExperimentConfig.name``."""
    if value is None:
        return None
    if name in _LISTS:
        vals = value if isinstance(value, list) else _floats(value)
        return [int(v) for v in vals] if name == "degrees" else vals
    kind = {f.name: f.type for f in fields(ExperimentConfig)}[name]
    try:
        if "bool" in kind:
            return _bool(value)
        if "int" in kind:
            return int(value)
        if "float" in kind:
            return _floats(value)[0] if isinstance(value, str) else float(value)
    except (TypeError, ValueError, IndexError):
        raise UsageError(f"bad value for {name}: {value!r}") from None
    return str(value)


def read_config_file(path: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment, dashes in keys read as underscores."""
    known = {f.name for f in fields(ExperimentConfig)}
    out = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    with fh:
        for no, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{no}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in known or key == "experiment":
                raise UsageError(f"{path}:{no}: unknown key {key!r}")
            out[key] = _coerce(key, value)
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="srkit", description="Spike recovery on the torus, interval and sphere, and pulse deconvolution.")
    sub = p.add_subparsers(dest="experiment", required=True, parser_class=_Parser)
    S = argparse.SUPPRESS
    for name, helptext in [
        ("recover", "recover a spike train and write RecoveryResult JSON"),
        ("certify", "build and verify a dual certificate"),
        ("sop", "recover a pulse stream"),
        ("fig1", "error against separation constant (sphere)"),
        ("table1", "localization error for several degrees (sphere)"),
        ("fig3", "error against noise level (sphere)"),
    ]:
        s = sub.add_parser(name, help=helptext, argument_default=S)
        s.add_argument("--config", help="key=value file; flags override it")
        s.add_argument("--manifold", choices=["torus", "interval", "sphere", "real_line"])
        s.add_argument("--degree", "-N", type=int)
        s.add_argument("--nu", help="separation constant; accepts expressions such as 2*pi")
        s.add_argument("--nus", help="comma separated separation sweep")
        s.add_argument("--degrees", help="comma separated degrees")
        s.add_argument("--noise-sds", dest="noise_sds", help="comma separated noise levels")
        s.add_argument("--trials", type=int)
        s.add_argument("--spikes", type=int)
        s.add_argument("--amp-sd", dest="amp_sd", type=float)
        s.add_argument("--seed", type=int)
        s.add_argument("--noise-sd", dest="noise_sd", type=float)
        s.add_argument("--grid", type=int, help="grid size of the discretized problem")
        s.add_argument("--slide", help="joint location refinement (true/false)")
        s.add_argument("--kernel", choices=["gaussian", "cauchy", "triangle"])
        s.add_argument("--sigma", type=float)
        s.add_argument("--nonneg", action="store_const", const=True)
        s.add_argument("--input", help="MeasurementSet JSON to recover from")
        s.add_argument("--display", type=int, help="display samples written next to --out")
        s.add_argument("--csv", help="per-spike CSV of true and estimated spikes")
        s.add_argument("--out", help="output path; standard output when omitted")
    return p


_EXPERIMENT_DEFAULTS = {
    "recover": {},
    "certify": {"manifold": "torus", "degree": 20, "spikes": 4},
    "sop": {"manifold": "real_line", "spikes": 3},
    "fig1": {"trials": 20},
    "table1": {"trials": 10},
    "fig3": {"trials": 10},
}


def resolve_config(argv: list) -> ExperimentConfig:
    """Defaults, then the ``--config`` file, then explicit flags."""
    ns = vars(build_parser().parse_args(argv))
    experiment = ns.pop("experiment")
    values = dict(_EXPERIMENT_DEFAULTS[experiment])
    path = ns.pop("config", None)
    if path:
        values.update(read_config_file(path))
    for k, v in ns.items():
        values[k] = _coerce(k, v)
    cfg = ExperimentConfig(experiment=experiment, **values)
    cfg.validate()
    return cfg


RUNNERS = {"recover": run_recover, "certify": run_certify, "sop": run_sop}
TABLES = {"fig1": run_fig1, "table1": run_table1, "fig3": run_fig3}


def _emit(text: str, path: str | None) -> None:
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv: list | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = resolve_config(argv)
        if cfg.experiment in TABLES:
            text, _ = TABLES[cfg.experiment](cfg)
            _emit(text, cfg.out)
            return EXIT_OK
        doc, code, side = RUNNERS[cfg.experiment](cfg)
    except (UsageError, ManifoldError, ValueError, OSError) as exc:
        sys.stderr.write(f"srkit: error: {exc}\n")
        return EXIT_USAGE
    _emit(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n", cfg.out)
    for path, text in side.items():
        _emit(text, path)
    return code


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")


if __name__ == "__main__":
    sys.exit(main())
