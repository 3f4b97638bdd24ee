"""Scan driver: oracle + method runs over geometry-labelled FCIDUMP files."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import re
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

from savqe.ansatz import AnsatzProgram
from savqe.exceptions import ConfigError, CouplingError
from savqe.hamiltonian import ActiveSpaceHamiltonian, parse_fcidump
from savqe.oracle import CasciResult, casci_solve, csf_character
from savqe.pool import OperatorPool, build_uccsd_pool
from savqe.states import CsfReference, build_csf, enumerate_csfs
from savqe.vqe import SolverConfig, SolverReport, compute_error_metrics, solve_adapt, solve_fuccsd

__all__ = [
    "MethodSpec",
    "ScanPoint",
    "ScanConfig",
    "PointReport",
    "MetricsRow",
    "ScanReport",
    "ScanIOError",
    "load_scan_config",
    "run_scan",
    "emit_reports",
    "bundled_fcidump",
    "leading_csfs",
]

log = logging.getLogger(__name__)

METRICS_HEADER = ["method", "operators", "mad_mEh", "max_error_mEh"]


class ScanIOError(OSError):
    """An integral file of a scan point cannot be read."""


def bundled_fcidump(name: str) -> Path:
    """Path of a packaged FCIDUMP, e.g. ``bundled_fcidump("h4_1.10")``."""
    path = resources.files("savqe") / "data" / f"{name}.fcidump"
    if not path.is_file():
        raise FileNotFoundError(f"no bundled FCIDUMP named {name!r}")
    return Path(str(path))


_METHOD_RE = re.compile(r"^\s*(fuccsd|adapt)\s*\(\s*([^)]*)\s*\)\s*$", re.IGNORECASE)


@dataclass(frozen=True)
class MethodSpec:
    """``fuccsd(n)``, ``adapt(standard)`` or ``adapt(<fraction>)``."""

    kind: str
    n_layers: int | None = None
    fraction: float | None = None

    @classmethod
    def parse(cls, text: str) -> MethodSpec:
        match = _METHOD_RE.match(text)
        if not match:
            raise ConfigError(f"unknown method {text!r}")
        kind, arg = match.group(1).lower(), match.group(2).strip().lower()
        try:
            if kind == "fuccsd":
                n = int(arg)
                if n < 1:
                    raise ValueError
                return cls("fuccsd", n_layers=n)
            fraction = 1.0 if arg in ("standard", "") else float(arg)
        except ValueError:
            raise ConfigError(f"bad argument in method {text!r}") from None
        if not 0.0 < fraction <= 1.0:
            raise ConfigError(f"selection fraction {fraction} outside (0, 1]")
        return cls("adapt", fraction=fraction)

    @property
    def name(self) -> str:
        if self.kind == "fuccsd":
            return f"fuccsd({self.n_layers})"
        return "adapt(standard)" if self.fraction >= 1.0 else f"adapt({self.fraction:.2f})"

    @property
    def slug(self) -> str:
        """File-name friendly form of :attr:`name`."""
        if self.kind == "fuccsd":
            return f"fuccsd{self.n_layers}"
        return "adapt_standard" if self.fraction >= 1.0 else f"adapt_{self.fraction:.2f}"


@dataclass(frozen=True)
class ScanPoint:
    label: str
    fcidump: str


@dataclass
class ScanConfig:
    """One reproducible scan.

    ``references`` is a list of CSF occupation strings (one per state) or the
    string ``"auto"``, which takes the leading CSF of each oracle root at the
    first scan point.  ``initialization`` is ``"zeros"`` or
    ``"chain_previous"``.  The pool's occupied orbitals are the doubly
    occupied orbitals of the first reference when it is closed-shell and
    the lowest ``N/2`` orbitals otherwise.
    """

    scan_points: list[ScanPoint]
    methods: list[MethodSpec]
    references: list[str] | str
    n_states: int | None = None
    weights: list[float] | None = None
    initialization: str = "zeros"
    output_dir: str = "scan_output"
    solver: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        labels = [p.label for p in self.scan_points]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"scan labels are not unique: {labels}")
        if not self.scan_points:
            raise ConfigError("scan has no points")
        if self.initialization not in ("zeros", "chain_previous"):
            raise ConfigError(f"unknown initialization {self.initialization!r}")
        if isinstance(self.references, str):
            if self.references != "auto":
                raise ConfigError("references must be a list of CSF strings or 'auto'")
            if self.n_states is None:
                raise ConfigError("references='auto' requires n_states")
        else:
            if self.n_states is None:
                self.n_states = len(self.references)
            if self.n_states != len(self.references):
                raise ConfigError(f"{len(self.references)} references for n_states={self.n_states}")
        allowed = set(SolverConfig.__dataclass_fields__) - {"n_states", "weights", "initialization",
                                                          "initial_parameters", "warm_start_path"}
        unknown = set(self.solver) - allowed
        if unknown:
            raise ConfigError(f"unknown solver settings {sorted(unknown)}")

    @classmethod
    def from_dict(cls, data: Mapping, base_dir: str | os.PathLike = ".") -> ScanConfig:
        base = Path(base_dir)
        points = []
        for entry in data["scan_points"]:
            path = str(entry["fcidump"])
            if path.startswith("bundled:"):
                path = str(bundled_fcidump(path.split(":", 1)[1]))
            elif not os.path.isabs(path):
                path = str(base / path)
            points.append(ScanPoint(str(entry["label"]), path))
        return cls(
            scan_points=points,
            methods=[MethodSpec.parse(m) for m in data.get("methods", [])],
            references=data["references"],
            n_states=data.get("n_states"),
            weights=data.get("weights"),
            initialization=data.get("initialization", "zeros"),
            output_dir=str(base / data.get("output_dir", "scan_output")),
            solver=dict(data.get("solver", {})),
        )

    def solver_config(self) -> SolverConfig:
        return SolverConfig(n_states=self.n_states, weights=self.weights, **self.solver)


def load_scan_config(path: str | os.PathLike) -> ScanConfig:
    """Read a JSON scan document; relative paths resolve against its directory."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    except KeyError as exc:
        raise ConfigError(f"{path}: missing key {exc}") from None
    try:
        return ScanConfig.from_dict(data, path.parent)
    except KeyError as exc:
        raise ConfigError(f"{path}: missing key {exc}") from None


@dataclass
class PointReport:
    label: str
    oracle_energies: list[float]
    methods: dict[str, SolverReport]
    characters: list[list[tuple[str, float]]]

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "oracle_energies": self.oracle_energies,
            "methods": {k: v.to_dict() for k, v in self.methods.items()},
            "characters": [[list(t) for t in root] for root in self.characters],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> PointReport:
        return cls(
            label=data["label"],
            oracle_energies=list(data["oracle_energies"]),
            methods={k: SolverReport.from_dict(v) for k, v in data["methods"].items()},
            characters=[[(str(a), float(b)) for a, b in root] for root in data["characters"]],
        )


@dataclass
class MetricsRow:
    method: str
    operators: int
    mad_mEh: float
    max_error_mEh: float
    operators_min: int
    operators_max: int


@dataclass
class ScanReport:
    points: list[PointReport]
    metrics: list[MetricsRow]
    references: list[str]

    @property
    def converged(self) -> bool:
        return all(r.converged for p in self.points for r in p.methods.values())

    def to_dict(self) -> dict:
        return {
            "references": self.references,
            "points": [p.to_dict() for p in self.points],
            "metrics": [asdict(m) for m in self.metrics],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> ScanReport:
        return cls(
            points=[PointReport.from_dict(p) for p in data["points"]],
            metrics=[MetricsRow(**m) for m in data["metrics"]],
            references=list(data["references"]),
        )

    @classmethod
    def load(cls, path: str | os.PathLike) -> ScanReport:
        return cls.from_dict(json.loads(Path(path).read_text()))


def metrics_table(points: Sequence[PointReport]) -> list[MetricsRow]:
    """One row per method, aggregated over all scan points."""
    rows = []
    names = [] if not points else list(points[0].methods)
    for name in names:
        reports = {p.label: p.methods[name] for p in points}
        oracle = {p.label: p.oracle_energies for p in points}
        m = compute_error_metrics(reports, oracle)
        rows.append(MetricsRow(name, int(round(m.operators_mean)), m.mad, m.max_error, m.operators_min, m.operators_max))
    return rows


def leading_csfs(characters: Sequence[Sequence[tuple[str, float]]], n_states: int) -> list[str]:
    """Leading CSF label of each root, skipping labels already taken."""
    chosen: list[str] = []
    for root in characters[:n_states]:
        for label, _ in root:
            if label not in chosen:
                chosen.append(label)
                break
        else:
            raise ConfigError("could not find distinct leading CSFs for every state")
    return chosen


def _occupied_partition(ref: CsfReference, n_orbitals: int) -> list[int]:
    if ref.is_closed_shell:
        return ref.doubly_occupied()
    return list(range(ref.n_electrons // 2))


_ORACLE_CACHE: dict[tuple[str, int], tuple[ActiveSpaceHamiltonian, CasciResult]] = {}


def _load_point(point: ScanPoint) -> tuple[str, ActiveSpaceHamiltonian]:
    try:
        text = Path(point.fcidump).read_text()
    except OSError as exc:
        raise ScanIOError(f"scan point {point.label!r}: cannot read {point.fcidump}: {exc}") from exc
    return hashlib.sha256(text.encode()).hexdigest(), parse_fcidump(text)


def _oracle(digest: str, h: ActiveSpaceHamiltonian, n_roots: int) -> CasciResult:
    key = (digest, n_roots)
    if key not in _ORACLE_CACHE:
        _ORACLE_CACHE[key] = (h, casci_solve(h, n_roots))
    return _ORACLE_CACHE[key][1]


def _run_method(
    spec: MethodSpec,
    h: ActiveSpaceHamiltonian,
    pool: OperatorPool,
    refs: list[CsfReference],
    base: SolverConfig,
    seed: SolverReport | None,
) -> SolverReport:
    if spec.kind == "fuccsd":
        if seed is not None:
            cfg = SolverConfig(**{**base.__dict__, "initialization": "explicit",
                                  "initial_parameters": seed.final_parameters})
        else:
            cfg = base
        return solve_fuccsd(h, pool, refs, spec.n_layers, cfg)
    cfg = SolverConfig(**{**base.__dict__, "adapt_selection_fraction": spec.fraction})
    initial = None
    if seed is not None:
        initial = AnsatzProgram(pool, seed.generator_ids, seed.final_parameters)
    return solve_adapt(h, pool, refs, cfg, initial_program=initial)


def run_scan(config: ScanConfig, threads: int | None = None, dry_run: bool = False) -> ScanReport | None:
    """Run the oracle and every method at every scan point.

    With ``initialization="chain_previous"`` each method's final program at
    point ``i-1`` seeds point ``i`` (so points run in scan order); with
    ``"zeros"`` points are independent and run on up to ``threads`` workers.
    All inputs are validated before any solve; ``dry_run`` stops there and
    returns ``None``.

    Raises:
        ScanIOError: an FCIDUMP cannot be read.
        ConfigError: references do not fit a point's active space.
    """
    loaded = [_load_point(p) for p in config.scan_points]
    base = config.solver_config()
    n_states = config.n_states
    first_h = loaded[0][1]
    for point, (_, h) in zip(config.scan_points, loaded):
        if (h.n_electrons, h.n_spatial_orbitals) != (first_h.n_electrons, first_h.n_spatial_orbitals):
            raise ConfigError(f"scan point {point.label!r} has a different active space")
    if config.references != "auto":
        try:
            refs = [build_csf(r) for r in config.references]
        except CouplingError as exc:
            raise ConfigError(str(exc)) from exc
        for point, (_, h) in zip(config.scan_points, loaded):
            for ref in refs:
                if ref.n_orbitals != h.n_spatial_orbitals or (ref.n_alpha, ref.n_beta) != (h.n_alpha, h.n_beta):
                    raise ConfigError(
                        f"reference {ref.label!r} does not match the ({h.n_electrons},{h.n_spatial_orbitals}) "
                        f"active space of point {point.label!r}"
                    )
    if dry_run:
        return None

    n_roots = max(n_states, 1)
    csf_basis = enumerate_csfs(first_h.n_electrons, first_h.n_spatial_orbitals)
    oracles = [_oracle(d, h, n_roots) for d, h in loaded]
    characters = [csf_character(o, csf_basis, 0.10) for o in oracles]
    if config.references == "auto":
        labels = leading_csfs(characters[0], n_states)
        refs = [build_csf(r) for r in labels]
    else:
        labels = list(config.references)
    m = first_h.n_spatial_orbitals
    occ = _occupied_partition(refs[0], m)
    pool = build_uccsd_pool(m, occ, [p for p in range(m) if p not in occ])

    # build every generator's matrix and exponential kernel up front so the
    # worker threads only read shared state
    sector = first_h.sector_basis()
    for gen in pool:
        gen.kernel(sector)

    results: list[dict[str, SolverReport]] = [{} for _ in loaded]
    for spec in config.methods:
        if config.initialization == "chain_previous":
            seed = None
            for i, (_, h) in enumerate(loaded):
                results[i][spec.name] = seed = _run_method(spec, h, pool, refs, base, seed)
        else:
            workers = max(1, threads or 1)
            with ThreadPoolExecutor(max_workers=workers) as ex:
                futures = [ex.submit(_run_method, spec, h, pool, refs, base, None) for _, h in loaded]
                for i, fut in enumerate(futures):
                    results[i][spec.name] = fut.result()
        for i, point in enumerate(config.scan_points):
            r = results[i][spec.name]
            log.info("%s @ %s: converged=%s n_ops=%d wall=%.1fs", spec.name, point.label,
                     r.converged, r.parameter_count, r.wall_time)

    points = [
        PointReport(p.label, o.energies[:n_states].tolist(), res, ch)
        for p, o, res, ch in zip(config.scan_points, oracles, results, characters)
    ]
    return ScanReport(points, metrics_table(points), labels)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def emit_reports(report: ScanReport, directory: str | os.PathLike) -> list[Path]:
    """Write metrics, trace, character and JSON report files; return their paths.

    Files: ``metrics.csv``, ``trace_<method>_<label>.csv``,
    ``characters_<label>.csv``, ``point_<label>.json`` and ``report.json``.
    On failure every file written by this call is removed.
    """
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def emit(name: str, writer) -> None:
        target = out / name
        fd, tmp = tempfile.mkstemp(dir=out, prefix=".tmp_")
        os.close(fd)
        try:
            writer(Path(tmp))
            os.replace(tmp, target)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise
        written.append(target)

    try:
        emit("metrics.csv", lambda p: _write_csv(
            p, METRICS_HEADER,
            [[m.method, m.operators, repr(m.mad_mEh), repr(m.max_error_mEh)] for m in report.metrics],
        ))
        for point in report.points:
            for name, sr in point.methods.items():
                slug = MethodSpec.parse(name).slug
                emit(f"trace_{slug}_{point.label}.csv", sr.write_trace_csv)
            emit(f"characters_{point.label}.csv", lambda p, pt=point: _write_csv(
                p, ["state", "csf_label", "weight"],
                [[k, label, repr(w)] for k, root in enumerate(pt.characters) for label, w in root],
            ))
            emit(f"point_{point.label}.json",
                 lambda p, pt=point: p.write_text(json.dumps(pt.to_dict(), indent=1) + "\n"))
        emit("report.json", lambda p: p.write_text(json.dumps(report.to_dict(), indent=1) + "\n"))
    except OSError:
        for path in written:
            path.unlink(missing_ok=True)
        raise
    return written


def format_metrics(rows: Sequence[MetricsRow]) -> str:
    lines = [f"{'method':<18}{'operators':>10}{'MAD (mEh)':>14}{'max (mEh)':>14}"]
    for r in rows:
        lines.append(f"{r.method:<18}{r.operators:>10d}{r.mad_mEh:>14.6f}{r.max_error_mEh:>14.6f}")
    return "\n".join(lines)

