"""
Experiments

Each experiment returns an ExperimentReport: a summary dict
{estimate, stderr, target, pass, ...}, one CSV row per sample or per check, and
a metadata block. Sample budgets are split over a fixed number of chains, each
with its own (seed, chain_id) stream, so results do not depend on how many
worker processes run them.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.stats import linregress

from .config import get_settings
from .errors import ParameterError
from .lattice import Topology, TrackAngles, build_lattice, lattice_from_dict, top_left
from .loops import Quad, Restriction, arm_event, crossing, lmax, reaches
from .rcm import (
    FREE,
    BoundaryConditions,
    Configuration,
    HeatBathChain,
    as_params,
    exact_distribution,
    make_rng,
    star_graph,
    triangle_graph,
)
from .serialize import git_describe, package_version, read_json, spec_hash, write_csv, write_json
from .transform import StarTrianglePatch, exchange_boundary, exchange_pushforward, forward_outcomes

logger = logging.getLogger(__name__)

Z_THRESHOLD = 3.0
CROSSING_ALLOWANCE = 0.03
RSW_BAND = (0.05, 0.95)
STAR_TRIANGLE_TOL = 1e-12
EXCHANGE_TOL = 1e-10
NEGATIVE_CONTROL_MIN = 1e-3
DEFAULT_CHAINS = 4


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    lattice: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    budget: int = 1
    seed: int | None = None
    output: str | None = None
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in EXPERIMENTS:
            raise ParameterError(f"unknown experiment {self.name!r}; choose from {sorted(EXPERIMENTS)}")
        if int(self.budget) < 1:
            raise ParameterError(f"sample budget must be positive, got {self.budget}")
        if self.seed is None:
            object.__setattr__(self, "seed", get_settings().seed)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {"name", "lattice", "model", "budget", "seed", "output", "options"}
        extra = set(data) - known
        if extra:
            raise ParameterError(f"unknown experiment fields: {sorted(extra)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path, name=None):
        data = read_json(path)
        if name is not None:
            data = {**data, "name": name}
        return cls.from_dict(data)

    def kwargs(self):
        return {**self.lattice, **self.model, **self.options, "samples": int(self.budget), "seed": int(self.seed)}


@dataclass(frozen=True, eq=False)
class ExperimentReport:
    spec: ExperimentSpec
    summary: dict
    rows: list

    @property
    def passed(self):
        return bool(self.summary.get("pass"))

    @property
    def metadata(self):
        return {
            "experiment": self.spec.name,
            "seed": self.spec.seed,
            "git_describe": git_describe(),
            "spec_hash": spec_hash(self.spec.to_dict()),
            "version": package_version(),
        }

    def to_dict(self):
        return {"metadata": self.metadata, "spec": self.spec.to_dict(), "summary": self.summary}

    def save(self, directory=None):
        """Write <name>_<hash>.json and .csv; returns both paths."""
        if self.spec.output:
            base = Path(self.spec.output)
        else:
            directory = Path(directory) if directory is not None else get_settings().results_dir
            base = directory / f"{self.spec.name}_{self.metadata['spec_hash'][:12]}"
        json_path = write_json(base.with_suffix(".json"), self.to_dict())
        csv_path = write_csv(base.with_suffix(".csv"), self.rows)
        logger.info("saved %s and %s", json_path, csv_path)
        return json_path, csv_path


def _run_shards(worker, tasks, workers=None):
    workers = get_settings().workers if workers is None else workers
    if workers <= 1 or len(tasks) <= 1:
        return [worker(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(worker, tasks))


def _split(total, parts):
    parts = max(1, min(parts, total))
    return [total // parts + (1 if c < total % parts else 0) for c in range(parts)]


def _binomial(hits, n):
    est = hits / n if n else float("nan")
    return est, math.sqrt(est * (1.0 - est) / n) if n else float("nan")


# ---------------------------------------------------------------------------
# Measure preservation
# ---------------------------------------------------------------------------


def random_star_angles(rng):
    """Three star angles in (0, pi) summing to pi."""
    return tuple(float(a) for a in math.pi * rng.dirichlet((1.0, 1.0, 1.0)))


def star_triangle_pushforward(patch, triangle_dist):
    """Law of the star configuration when the triangle is drawn from `triangle_dist`."""
    out = np.zeros(8)
    for mask, prob in enumerate(triangle_dist.probabilities):
        if prob == 0.0:
            continue
        config = tuple((mask >> j) & 1 for j in range(3))
        for p, star in forward_outcomes(patch, config):
            out[star[0] | star[1] << 1 | star[2] << 2] += prob * p
    return out


def exp_measure_preservation(
    samples=5,
    seed=None,
    q_values=(1.0, 1.5, 2.0, 3.0, 4.0),
    torus_q=(1.0, 2.0, 4.0),
    alpha=math.pi / 3,
    beta=math.pi / 2,
    torus_width=4,
    perturb=0.9,
    workers=None,
):
    """Exact TV distances for the star-triangle coupling and track exchanges, with a negative control."""
    spec = ExperimentSpec(
        name="measure-preservation",
        lattice={"alpha": alpha, "beta": beta, "torus_width": torus_width},
        model={"q_values": list(q_values), "torus_q": list(torus_q)},
        budget=samples,
        seed=seed,
        options={"perturb": perturb},
    )
    rng = make_rng(spec.seed, 0)
    rows = []
    boundaries = {"free": FREE, "AB wired": BoundaryConditions.partition([{0, 1}])}
    star_tv = 0.0
    negative_tv = math.inf
    for q in q_values:
        for k in range(samples):
            angles = random_star_angles(rng)
            patch = StarTrianglePatch.from_angles(q, angles)
            for label, bc in boundaries.items():
                tri = exact_distribution(triangle_graph(probabilities=patch.triangle_p), bc, q)
                star = exact_distribution(star_graph(probabilities=patch.star_p), bc, q)
                tv = star.total_variation(star_triangle_pushforward(patch, tri))
                star_tv = max(star_tv, tv)
                rows.append({"check": "star-triangle", "q": q, "case": f"{k}/{label}", "tv": tv,
                             "tol": STAR_TRIANGLE_TOL, "pass": tv < STAR_TRIANGLE_TOL})
            skewed = exact_distribution(triangle_graph(probabilities=[p * perturb for p in patch.triangle_p]), FREE, q)
            star = exact_distribution(star_graph(probabilities=patch.star_p), FREE, q)
            tv = star.total_variation(star_triangle_pushforward(patch, skewed))
            negative_tv = min(negative_tv, tv)
            rows.append({"check": "negative-control", "q": q, "case": str(k), "tv": tv,
                         "tol": NEGATIVE_CONTROL_MIN, "pass": tv > NEGATIVE_CONTROL_MIN})

    exchange_tv = 0.0
    for q in torus_q:
        lat = build_lattice(TrackAngles((beta, alpha)), torus_width, topology=Topology.TORUS)
        tv = _exchange_tv(lat, FREE, q, 1)
        exchange_tv = max(exchange_tv, tv)
        rows.append({"check": "torus-exchange", "q": q, "case": f"W={torus_width}", "tv": tv,
                     "tol": EXCHANGE_TOL, "pass": tv < EXCHANGE_TOL})
        box = build_lattice(TrackAngles((beta, alpha, beta)), 2)
        tv = _exchange_tv(box, exchange_boundary(box, 1), q, 1)
        exchange_tv = max(exchange_tv, tv)
        rows.append({"check": "box-exchange", "q": q, "case": "W=2", "tv": tv,
                     "tol": EXCHANGE_TOL, "pass": tv < EXCHANGE_TOL})

    passed = all(r["pass"] for r in rows)
    summary = {
        "estimate": max(star_tv, exchange_tv),
        "stderr": 0.0,
        "target": 0.0,
        "pass": passed,
        "star_triangle_max_tv": star_tv,
        "exchange_max_tv": exchange_tv,
        "negative_control_min_tv": negative_tv,
    }
    return ExperimentReport(spec=spec, summary=summary, rows=rows)


def _exchange_tv(lat, bc, q, i):
    dist = exact_distribution(lat, bc, q)
    pushed = exchange_pushforward(dist, i)
    target = exact_distribution(pushed.graph, bc, q)
    return target.total_variation(pushed)


# ---------------------------------------------------------------------------
# Crossing probabilities
# ---------------------------------------------------------------------------


def square_region(alpha, side, margin=2.0):
    """Box lattice of uniform angle alpha containing a centered square of the given side."""
    s, c = math.sin(alpha), math.cos(alpha)
    height = int(math.ceil((side + 2.0 * margin) / s))
    span = side + 2.0 * margin + height * abs(c)
    width = int(math.ceil((span + 1.0) / 2.0))
    lat = build_lattice(TrackAngles.uniform(alpha, height), width)
    shift = height * c
    x_lo, x_hi = max(0.0, shift), lat.columns - 1 + min(0.0, shift)
    center = ((x_lo + x_hi) / 2.0, height * s / 2.0)
    return lat, Quad.centered_square(center, side / 2.0)


def _crossing_shard(task):
    lattice_data, quad, q, seed, chain_id, count, thin, burn_in = task
    lat = lattice_from_dict(lattice_data)
    chain = HeatBathChain(lat, FREE, q, seed=seed, chain_id=chain_id).sweep(burn_in)
    outcomes = []
    for _ in range(count):
        chain.sweep(thin)
        outcomes.append(int(crossing(chain.configuration(), quad)))
    return outcomes


def _crossing_estimate(lat, quad, q, samples, seed, chains, thin, burn_in, chain_base, workers):
    tasks = [
        (lat.to_dict(), quad, q, seed, chain_base + c, n, thin, burn_in)
        for c, n in enumerate(_split(samples, chains))
    ]
    return [x for shard in _run_shards(_crossing_shard, tasks, workers) for x in shard]


def exp_crossing_universality(
    alpha=math.pi / 3,
    q=1.0,
    size=200,
    samples=10_000,
    seed=None,
    chains=DEFAULT_CHAINS,
    thin=2,
    burn_in=None,
    workers=None,
):
    """Square-crossing probability on L(pi/2) against L(alpha) at the same physical size."""
    as_params(q)
    spec = ExperimentSpec(
        name="crossing-universality",
        lattice={"alpha": alpha, "size": size},
        model={"q": q},
        budget=samples,
        seed=seed,
        options={"chains": chains, "thin": thin, "burn_in": burn_in},
    )
    rows, estimates = [], {}
    for label, angle, base in (("pi/2", math.pi / 2, 0), ("alpha", alpha, 1000)):
        lat, quad = square_region(angle, size)
        b = burn_in if burn_in is not None else get_settings().burn_in_factor * max(lat.width, lat.height)
        outcomes = _crossing_estimate(lat, quad, q, samples, spec.seed, chains, thin, b, base, workers)
        estimates[label] = _binomial(sum(outcomes), len(outcomes))
        rows += [{"sample": k, "lattice": label, "event": "square-crossing", "outcome": x} for k, x in enumerate(outcomes)]
    (p0, s0), (p1, s1) = estimates["pi/2"], estimates["alpha"]
    diff = p1 - p0
    pooled = math.sqrt(s0 * s0 + s1 * s1)
    z = diff / pooled if pooled > 0 else 0.0
    summary = {
        "estimate": diff,
        "stderr": pooled,
        "target": 0.0,
        "pass": abs(diff) < CROSSING_ALLOWANCE + Z_THRESHOLD * pooled,
        "p_square": p0,
        "p_alpha": p1,
        "z": z,
    }
    return ExperimentReport(spec=spec, summary=summary, rows=rows)


def exp_rsw_probe(q=1.0, sizes=(32, 64, 128), samples=1000, seed=None, chains=DEFAULT_CHAINS, thin=2, burn_in=None, workers=None):
    """Long-way crossing of a 2:1 rectangle on the square lattice at several sizes."""
    as_params(q)
    sizes = [int(n) for n in sizes]
    if any(n < 4 for n in sizes):
        raise ParameterError(f"rectangle sizes must be at least 4, got {sizes}")
    spec = ExperimentSpec(
        name="rsw-probe",
        lattice={"sizes": sizes},
        model={"q": q},
        budget=samples,
        seed=seed,
        options={"chains": chains, "thin": thin, "burn_in": burn_in},
    )
    rows, per_size = [], []
    lo, hi = RSW_BAND
    for idx, n in enumerate(sizes):
        lat = build_lattice(TrackAngles.uniform(math.pi / 2, n + 2), n + 2)
        quad = Quad.rectangle(1.0, 1.0, 2.0 * n + 1.0, n + 1.0)
        b = burn_in if burn_in is not None else get_settings().burn_in_factor * max(lat.width, lat.height)
        outcomes = _crossing_estimate(lat, quad, q, samples, spec.seed, chains, thin, b, 1000 * idx, workers)
        est, se = _binomial(sum(outcomes), len(outcomes))
        per_size.append({"size": n, "estimate": est, "stderr": se, "in_band": lo < est < hi})
        rows += [{"sample": k, "size": n, "event": "rectangle-crossing", "outcome": x} for k, x in enumerate(outcomes)]
    summary = {
        "estimate": min(s["estimate"] for s in per_size),
        "stderr": max(s["stderr"] for s in per_size),
        "target": list(RSW_BAND),
        "pass": all(s["in_band"] for s in per_size),
        "sizes": per_size,
    }
    return ExperimentReport(spec=spec, summary=summary, rows=rows)


# ---------------------------------------------------------------------------
# Incipient infinite cluster: which side the lowest-highest vertex takes
# ---------------------------------------------------------------------------


def iic_lattice(alpha, beta, R):
    """
    Box lattice whose only alpha track runs between origin and origin+.

    Returns (lattice, origin, origin+). With the alpha track directly above the
    origin, the origin branch of the two-rooted event has weight
    sin(alpha) / (sin(alpha) + sin(beta)).
    """
    margin = int(R) + 3
    height = 2 * margin
    angles = TrackAngles.mixed(height, alpha, beta=beta, tracks=[margin])
    cosines = np.abs(np.cos(np.asarray(angles.angles))).sum()
    width = int(math.ceil((2 * margin + cosines + 2) / 2.0)) + 1
    lat = build_lattice(angles, width)
    offsets = lat.line_offsets[:, 0]
    x_mid = (offsets.max() + lat.columns - 1 + offsets.min()) / 2.0
    line = lat.line_vertices(margin)
    origin = int(line[int(np.argmin(np.abs(lat.coords[line, 0] - x_mid)))])
    return lat, origin, top_left(lat, origin)


def _iic_shard(task):
    lattice_data, q, origin, plus, R, seed, chain_id, target, gap, burn_in, max_checks = task
    lat = lattice_from_dict(lattice_data)
    chain = HeatBathChain(lat, FREE, q, seed=seed, chain_id=chain_id).sweep(burn_in)
    accepted = []
    checks = 0
    while len(accepted) < target and checks < max_checks:
        chain.sweep(gap)
        checks += 1
        cfg = chain.configuration()
        e0 = lmax(cfg, origin) == origin and reaches(cfg, origin, R)
        ep = lmax(cfg, plus) == plus and reaches(cfg, plus, R)
        if e0 or ep:
            accepted.append(0.5 if e0 and ep else (1.0 if e0 else 0.0))
    return accepted, checks


def exp_iic_ratio(
    alpha=math.pi / 3,
    beta=math.pi / 2,
    q=1.0,
    R=16,
    samples=2000,
    seed=None,
    chains=DEFAULT_CHAINS,
    gap=10,
    burn_in=None,
    max_checks=None,
    tolerance=0.05,
    workers=None,
):
    """Fraction of accepted events rooted at the origin, below the alpha track, against sin a / (sin a + sin b)."""
    as_params(q)
    spec = ExperimentSpec(
        name="iic-ratio",
        lattice={"alpha": alpha, "beta": beta, "R": R},
        model={"q": q},
        budget=samples,
        seed=seed,
        options={"chains": chains, "gap": gap, "burn_in": burn_in, "max_checks": max_checks, "tolerance": tolerance},
    )
    lat, origin, plus = iic_lattice(alpha, beta, R)
    b = burn_in if burn_in is not None else get_settings().burn_in_factor * max(lat.width, lat.height)
    cap = max_checks if max_checks is not None else 1000 * samples
    quotas = _split(samples, chains)
    tasks = [
        (lat.to_dict(), q, origin, plus, R, spec.seed, c, n, gap, b, max(1, cap // len(quotas)))
        for c, n in enumerate(quotas)
    ]
    weights, checks, rows = [], 0, []
    for c, (accepted, n_checks) in enumerate(_run_shards(_iic_shard, tasks, workers)):
        checks += n_checks
        for w in accepted:
            rows.append({"sample": len(weights), "chain": c, "branch": "origin" if w == 1.0 else ("both" if w == 0.5 else "plus"), "weight_origin": w})
            weights.append(w)
    if len(weights) < samples:
        logger.warning("accepted %d of %d requested events within %d checks", len(weights), samples, checks)
    target = math.sin(alpha) / (math.sin(alpha) + math.sin(beta))
    est = float(np.mean(weights)) if weights else float("nan")
    se = math.sqrt(est * (1.0 - est) / len(weights)) if weights else float("nan")
    summary = {
        "estimate": est,
        "stderr": se,
        "target": target,
        "pass": bool(weights) and abs(est - target) <= tolerance,
        "plus_fraction": 1.0 - est,
        "accepted": len(weights),
        "checks": checks,
    }
    return ExperimentReport(spec=spec, summary=summary, rows=rows)


# ---------------------------------------------------------------------------
# Arm events
# ---------------------------------------------------------------------------


def arm_lattice(R_max):
    m = int(R_max) + 3
    lat = build_lattice(TrackAngles.uniform(math.pi / 2, 2 * m), m + 1)
    return lat, lat.vertex(m, m)


def _arm_shard(task):
    lattice_data, q, center, sigma, r, radii, restriction, inject, seed, chain_id, count, thin, burn_in = task
    lat = lattice_from_dict(lattice_data)
    chain = None if inject else HeatBathChain(lat, FREE, q, seed=seed, chain_id=chain_id).sweep(burn_in)
    out = []
    for _ in range(count):
        if inject == "full":
            cfg = Configuration.full(lat)
        elif inject == "empty":
            cfg = Configuration.empty(lat)
        else:
            cfg = chain.sweep(thin).configuration()
        out.append([int(arm_event(cfg, sigma, r, R, restriction=restriction, center=center)) for R in radii])
    return out


def exp_arm_decay(
    q=1.0,
    sigma="010",
    radii=(2, 4, 6, 8),
    samples=1000,
    seed=None,
    r=1,
    restriction=Restriction.HALF_TOP,
    inject=None,
    chains=DEFAULT_CHAINS,
    thin=2,
    burn_in=None,
    workers=None,
):
    """Arm-event frequencies against R with a log-log slope fit."""
    as_params(q)
    radii = sorted(int(R) for R in radii)
    restriction = Restriction(restriction)
    if inject not in (None, "full", "empty"):
        raise ParameterError(f"inject must be None, 'full' or 'empty', got {inject!r}")
    if radii[0] <= r:
        raise ParameterError(f"radii must exceed r={r}")
    spec = ExperimentSpec(
        name="arm-decay",
        lattice={"radii": radii, "r": r},
        model={"q": q},
        budget=samples,
        seed=seed,
        options={"sigma": sigma, "restriction": restriction.value, "inject": inject,
                 "chains": chains, "thin": thin, "burn_in": burn_in},
    )
    lat, center = arm_lattice(radii[-1])
    b = burn_in if burn_in is not None else get_settings().burn_in_factor * max(lat.width, lat.height)
    tasks = [
        (lat.to_dict(), q, center, sigma, r, radii, restriction, inject, spec.seed, c, n, thin, b)
        for c, n in enumerate(_split(samples, chains))
    ]
    outcomes = np.array([x for shard in _run_shards(_arm_shard, tasks, workers) for x in shard], dtype=np.int64)
    rows = [
        {"sample": k, "R": R, "event": f"A{sigma}", "outcome": int(outcomes[k, j])}
        for k in range(len(outcomes))
        for j, R in enumerate(radii)
    ]
    freq = outcomes.mean(axis=0)
    se = np.sqrt(freq * (1.0 - freq) / len(outcomes))
    monotone = all(freq[j + 1] <= freq[j] + se[j] + se[j + 1] for j in range(len(radii) - 1))
    fit = {"slope": None, "stderr": None, "ci": None}
    positive = freq > 0
    if positive.sum() >= 3:
        res = linregress(np.log(np.asarray(radii)[positive]), np.log(freq[positive]))
        fit = {"slope": res.slope, "stderr": res.stderr,
               "ci": [res.slope - 1.96 * res.stderr, res.slope + 1.96 * res.stderr]}
    summary = {
        "estimate": fit["slope"],
        "stderr": fit["stderr"],
        "target": None,
        "pass": monotone,
        "frequencies": {str(R): float(f) for R, f in zip(radii, freq)},
        "ci": fit["ci"],
    }
    return ExperimentReport(spec=spec, summary=summary, rows=rows)


EXPERIMENTS = {
    "measure-preservation": exp_measure_preservation,
    "crossing-universality": exp_crossing_universality,
    "iic-ratio": exp_iic_ratio,
    "rsw-probe": exp_rsw_probe,
    "arm-decay": exp_arm_decay,
}


def run_experiment(spec, workers=None):
    report = EXPERIMENTS[spec.name](**spec.kwargs(), workers=workers)
    if spec.output:
        report = replace(report, spec=replace(report.spec, output=spec.output))
    return report


# ---------------------------------------------------------------------------
# Saved reports
# ---------------------------------------------------------------------------


def list_reports(directory=None):
    """Summaries of saved reports, newest name first."""
    directory = Path(directory) if directory is not None else get_settings().results_dir
    out = []
    for path in sorted(directory.glob("*.json"), reverse=True):
        try:
            data = read_json(path)
            meta, summary = data["metadata"], data["summary"]
        except Exception as e:
            logger.warning("skipping %s: %s", path, e)
            continue
        out.append({
            "path": path,
            "experiment": meta.get("experiment"),
            "seed": meta.get("seed"),
            "estimate": summary.get("estimate"),
            "pass": summary.get("pass"),
        })
    return out


def _flatten(data, prefix=""):
    flat = {}
    for key, value in data.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, name + "."))
        else:
            flat[name] = value
    return flat


def compare_reports(path_a, path_b):
    """Changed, added and removed fields between two saved reports, one line each."""
    a, b = read_json(path_a), read_json(path_b)
    changes = []
    for section in ("metadata", "spec", "summary"):
        fa, fb = _flatten(a.get(section, {})), _flatten(b.get(section, {}))
        for key in sorted(set(fb) - set(fa)):
            changes.append(f"  + {section}.{key} added: {fb[key]}")
        for key in sorted(set(fa) - set(fb)):
            changes.append(f"  - {section}.{key} removed")
        for key in sorted(set(fa) & set(fb)):
            if fa[key] != fb[key]:
                changes.append(f"  Δ {section}.{key}: {fa[key]} → {fb[key]}")
    return changes
