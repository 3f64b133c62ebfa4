"""
Experiments over the constructions: Dixon-style sampling, density
demonstrations and single constructions, with JSON Lines reports.

Every trial draws from its own PCG64 stream seeded by (seed, trial index),
so reports do not depend on worker count or scheduling. Set
LIBREDENSE_SEED to override the configured seed.
"""
from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from functools import lru_cache
from itertools import repeat
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import pandas as pd
from dotenv import dotenv_values, load_dotenv
from tqdm import tqdm

from errors import ConfigError, LibreDenseError, ProfileExhaustedError, TrialTimeoutError
from freeword import ReducedWord, format_word, parse_word, random_word
from freetop import CosetNeighborhood, FiniteQuotient, density_witness_free_group, quotient_apply
from logger import audit_logger
from oracle import l_free_check
from perm import FinPerm, OpenBox, SuppPerm, box_member, complete_box, random_finperm
from product import (
    DegreeProfile,
    ProductBox,
    ProductElement,
    box_membership,
    dense_witnesses,
    plant_free_blocks,
    prod2_family,
    prod_main_family,
)
from stallings import is_free_basis

load_dotenv()

SCHEMA_VERSION = "1"
EXPERIMENT_KINDS = ("dixon-sample", "density-demo", "construct")
EXECUTION_KEYS = ("workers", "timeout")
GROUP_KINDS = ("sym", "supp", "product", "free")

MAX_POINT_CONSTRAINTS = 5
MAX_COORDINATE_CONSTRAINTS = 2
MAX_COSET_CONSTRAINTS = 2


@dataclass(frozen=True)
class GroupSpec:
    """
    Which group an experiment runs in:

        sym:<m>                finite symmetric group S_m
        supp:<B>               finitely supported permutations, random ones
                               drawn with support inside {1..B}
        product:<path>         product of symmetric groups from a profile file
        product:reserve=<k>:<d0,d1,...>   the same, inline
        product:visible=<d0,d1,...>       visible degrees with a reserve sized
                                          for the dense family at the bound
        free:<path>            free group with a quotient file for constraints
        free:<m>               free group of rank 2, random quotients into S_m
    """
    kind: str
    value: str

    @classmethod
    def parse(cls, text: str) -> "GroupSpec":
        kind, sep, value = text.strip().partition(":")
        if not sep or kind not in GROUP_KINDS or not value:
            raise ConfigError(f"group must look like <{'|'.join(GROUP_KINDS)}>:<value>, got '{text}'")
        if kind in ("sym", "supp") and not value.isdigit():
            raise ConfigError(f"{kind} needs an integer, got '{value}'")
        return cls(kind, value)

    @property
    def degree(self) -> int:
        return int(self.value)

    def __str__(self) -> str:
        return f"{self.kind}:{self.value}"


def _as_bool(value: Any) -> bool:
    return str(value).strip().lower() in ("1", "true", "yes", "on")


def read_config_values(path: str | Path) -> dict[str, Any]:
    """Raw key=value pairs of an experiment file; values stay strings."""
    if not Path(path).exists():
        raise ConfigError(f"config file {path} does not exist")
    return {k: v for k, v in dotenv_values(path).items() if v is not None}


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    group: GroupSpec
    tuple_size: int
    word_bound: int
    sample_count: int = 1
    seed: int = 0
    output: str | None = None
    csv: str | None = None
    workers: int = 1
    timeout: float = 10.0
    record_timings: bool = False
    attempts: int = 20

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"unknown experiment kind '{self.kind}'")
        if self.tuple_size < 1:
            raise ConfigError("tuple_size must be at least 1")
        if self.word_bound < 1:
            raise ConfigError("word_bound must be at least 1")
        if self.sample_count < 1:
            raise ConfigError("sample_count must be at least 1")
        if self.workers < 1 or self.timeout <= 0 or self.attempts < 1:
            raise ConfigError("workers, timeout and attempts must be positive")

    @classmethod
    def from_mapping(cls, values: dict[str, Any]) -> "ExperimentConfig":
        """Builds a config from string values; LIBREDENSE_SEED wins over 'seed'."""
        missing = [k for k in ("kind", "group", "tuple_size", "word_bound") if not values.get(k)]
        if missing:
            raise ConfigError(f"missing config keys: {', '.join(missing)}")
        try:
            seed = int(os.getenv("LIBREDENSE_SEED") or values.get("seed") or 0)
            return cls(
                kind=str(values["kind"]),
                group=values["group"] if isinstance(values["group"], GroupSpec) else GroupSpec.parse(str(values["group"])),
                tuple_size=int(values["tuple_size"]),
                word_bound=int(values["word_bound"]),
                sample_count=int(values.get("sample_count") or 1),
                seed=seed,
                output=values.get("output") or None,
                csv=values.get("csv") or None,
                workers=int(values.get("workers") or 1),
                timeout=float(values.get("timeout") or 10.0),
                record_timings=_as_bool(values.get("record_timings") or False),
                attempts=int(values.get("attempts") or 20),
            )
        except ValueError as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"bad config value: {e}") from None

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_mapping(read_config_values(path))

    def to_json(self) -> dict:
        """The config as echoed into reports; execution-only knobs are left out."""
        data = asdict(self)
        data["group"] = str(self.group)
        for key in EXECUTION_KEYS:
            data.pop(key)
        return data


@dataclass
class TrialRecord:
    trial: int
    success: bool
    free: bool | None = None
    witness: str | None = None
    error: str | None = None
    elements: list = field(default_factory=list)
    details: dict = field(default_factory=dict)
    elapsed: float = 0.0

    def to_json(self, include_timing: bool = False) -> dict:
        data = {
            "schema": SCHEMA_VERSION,
            "record": "trial",
            "trial": self.trial,
            "success": self.success,
            "free": self.free,
            "witness": self.witness,
            "error": self.error,
            "elements": self.elements,
            "details": self.details,
        }
        if include_timing:
            data["elapsed"] = round(self.elapsed, 6)
        return data


@dataclass
class ReportRecord:
    config: ExperimentConfig
    trials: list[TrialRecord]

    @property
    def free_count(self) -> int:
        return sum(1 for t in self.trials if t.free)

    @property
    def success_count(self) -> int:
        return sum(1 for t in self.trials if t.success)

    @property
    def fraction(self) -> Fraction:
        return Fraction(self.free_count, self.config.sample_count)

    @property
    def all_succeeded(self) -> bool:
        return self.success_count == len(self.trials)

    def aggregate(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "record": "aggregate",
            "config": self.config.to_json(),
            "sample_count": self.config.sample_count,
            "free_count": self.free_count,
            "success_count": self.success_count,
            "fraction": str(self.fraction),
            "fraction_float": float(self.fraction),
        }


# ---------------------------------------------------------------------------
# Element encoding
# ---------------------------------------------------------------------------

def encode_element(e) -> Any:
    if isinstance(e, ReducedWord):
        return format_word(e)
    if isinstance(e, ProductElement):
        return e.to_json()
    return str(e)


def decode_tuple(group: GroupSpec, elements: Sequence, rank: int | None = None,
                 word_bound: int = 1) -> tuple:
    """Inverse of encode_element for one group."""
    if group.kind == "sym":
        return tuple(FinPerm(tuple(int(x) for x in e.split())) for e in elements)
    if group.kind == "supp":
        return tuple(SuppPerm.from_cycles(e) for e in elements)
    if group.kind == "product":
        profile = load_profile(group.value, word_bound)
        return tuple(ProductElement.from_json(e, profile) for e in elements)
    return tuple(parse_word(e, rank) for e in elements)


@lru_cache(maxsize=8)
def load_profile(value: str, word_bound: int) -> DegreeProfile:
    if value.startswith("visible="):
        visible = tuple(int(d) for d in value.split("=", 1)[1].split(",") if d.strip())
        return DegreeProfile.for_dense_family(visible, word_bound)
    if Path(value).exists():
        return DegreeProfile.from_file(value)
    return DegreeProfile.parse_inline(value)


@lru_cache(maxsize=4)
def _dense_family(value: str, word_bound: int):
    return prod_main_family(load_profile(value, word_bound), word_bound)


def _quotient_for(group: GroupSpec, rng) -> FiniteQuotient:
    if group.value.isdigit():
        return FiniteQuotient(tuple(random_finperm(group.degree, rng) for _ in range(2)))
    return FiniteQuotient.from_file(group.value)


def reverify_trial(config: ExperimentConfig, record: dict) -> bool:
    """Re-runs the recorded oracle on a serialized tuple."""
    if not record.get("elements"):
        return False
    rank = record.get("details", {}).get("rank")
    elements = decode_tuple(config.group, record["elements"], rank, config.word_bound)
    if config.group.kind == "free":
        return is_free_basis(elements) == bool(record["free"])
    return l_free_check(elements, config.word_bound).free == bool(record["free"])


# ---------------------------------------------------------------------------
# Trials
# ---------------------------------------------------------------------------

def _random_point_box(bound: int, rng) -> OpenBox:
    k = int(rng.integers(0, min(MAX_POINT_CONSTRAINTS, bound) + 1))
    alphas = rng.choice(bound, size=k, replace=False) + 1
    betas = rng.choice(bound, size=k, replace=False) + 1
    return OpenBox.of(zip(alphas.tolist(), betas.tolist()))


def _dixon_trial(config: ExperimentConfig, rng, deadline: float, record: TrialRecord):
    group, n, bound = config.group, config.tuple_size, config.word_bound
    if group.kind == "free":
        rank = max(n, 2)
        words = tuple(random_word(rank, int(rng.integers(1, bound + 1)), rng) for _ in range(n))
        record.free = is_free_basis(words)
        record.elements = [encode_element(w) for w in words]
        record.details = {"method": "stallings", "rank": rank}
        record.success = True
        return
    if group.kind == "sym":
        elements = tuple(random_finperm(group.degree, rng) for _ in range(n))
    elif group.kind == "supp":
        elements = tuple(complete_box(OpenBox(), "random", rng, support_bound=group.degree) for _ in range(n))
    else:
        profile = load_profile(group.value, bound)
        elements = tuple(
            ProductElement.from_map(profile, {i: random_finperm(d, rng) for i, d in enumerate(profile.degrees)})
            for _ in range(n)
        )
    verdict = l_free_check(elements, bound, deadline=deadline)
    record.free = verdict.free
    record.witness = verdict.to_json()["witness"]
    record.elements = [encode_element(e) for e in elements]
    record.details = {"method": "oracle", "bound": bound}
    record.success = True


def _density_permutations(config: ExperimentConfig, rng, deadline: float, record: TrialRecord):
    group, n, bound = config.group, config.tuple_size, config.word_bound
    boxes = [_random_point_box(group.degree, rng) for _ in range(n)]
    limit = group.degree if group.kind == "sym" else None
    try:
        planted = plant_free_blocks(boxes, bound, degree_limit=limit)
        elements = tuple(p.to_finperm(limit) for p in planted) if limit else planted
        method = "planted"
    except ProfileExhaustedError:
        # no room for disjoint blocks inside S_m: sample completions instead
        method = "rejection"
        elements = None
        for _ in range(config.attempts):
            candidate = tuple(
                complete_box(box, "random", rng, support_bound=group.degree).to_finperm(group.degree)
                for box in boxes
            )
            if l_free_check(candidate, bound, deadline=deadline).free:
                elements = candidate
                break
        if elements is None:
            record.error = f"no free completion in {config.attempts} attempts"
            record.details = {"method": method, "boxes": [str(b) for b in boxes]}
            return
    inside = all(box_member(e, box) for e, box in zip(elements, boxes))
    verdict = l_free_check(elements, bound, deadline=deadline)
    record.free = verdict.free
    record.witness = verdict.to_json()["witness"]
    record.elements = [encode_element(e) for e in elements]
    record.details = {"method": method, "in_boxes": inside, "boxes": [str(b) for b in boxes]}
    record.success = inside and verdict.free


def _density_product(config: ExperimentConfig, rng, deadline: float, record: TrialRecord):
    family = _dense_family(config.group.value, config.word_bound)
    profile = family.profile
    boxes = []
    for _ in range(config.tuple_size):
        k = int(rng.integers(0, min(MAX_COORDINATE_CONSTRAINTS, profile.visible_count) + 1))
        coords = sorted(int(c) for c in rng.choice(profile.visible_count, size=k, replace=False))
        boxes.append(ProductBox.of(profile, {c: random_finperm(profile.degrees[c], rng) for c in coords}))
    elements = dense_witnesses(family, boxes)
    inside = all(box_membership(e, box) for e, box in zip(elements, boxes))
    verdict = l_free_check(elements, config.word_bound, deadline=deadline)
    record.free = verdict.free
    record.witness = verdict.to_json()["witness"]
    record.elements = [encode_element(e) for e in elements]
    record.details = {
        "method": "dense_family",
        "in_boxes": inside,
        "boxes": [{str(i): str(p) for i, p in b.required} for b in boxes],
    }
    record.success = inside and verdict.free


def _density_free(config: ExperimentConfig, rng, deadline: float, record: TrialRecord):
    q = _quotient_for(config.group, rng)
    total_rank = max(config.tuple_size, q.rank)
    k = int(rng.integers(0, min(MAX_COSET_CONSTRAINTS, q.rank, config.tuple_size) + 1))
    constraints = []
    for _ in range(k):
        target = random_word(q.rank, int(rng.integers(0, 4)), rng)
        constraints.append(CosetNeighborhood(q, quotient_apply(q, target)))
    words = density_witness_free_group(q.rank, constraints, total_rank, deadline=deadline)
    inside = all(u.lift(total_rank).contains(w) for u, w in zip(constraints, words))
    record.free = is_free_basis(words)
    record.elements = [encode_element(w) for w in words]
    record.details = {
        "method": "fin_case",
        "rank": total_rank,
        "in_boxes": inside,
        "quotient": q.to_text(),
        "targets": [str(u.target) for u in constraints],
    }
    record.success = inside and record.free


def _construct_trial(config: ExperimentConfig, rng, deadline: float, record: TrialRecord):
    group, n, bound = config.group, config.tuple_size, config.word_bound
    if group.kind == "product":
        elements = tuple(prod2_family(load_profile(group.value, bound), n, bound))
    elif group.kind == "free":
        words = density_witness_free_group(n, (), n)
        record.free = is_free_basis(words)
        record.elements = [encode_element(w) for w in words]
        record.details = {"method": "standard_basis", "rank": n}
        record.success = record.free
        return
    else:
        planted = plant_free_blocks([OpenBox()] * n, bound, degree_limit=group.degree if group.kind == "sym" else None)
        elements = tuple(p.to_finperm(group.degree) for p in planted) if group.kind == "sym" else planted
    verdict = l_free_check(elements, bound, deadline=deadline)
    record.free = verdict.free
    record.witness = verdict.to_json()["witness"]
    record.elements = [encode_element(e) for e in elements]
    record.details = {"method": "planted"}
    record.success = verdict.free


_DENSITY = {
    "sym": _density_permutations,
    "supp": _density_permutations,
    "product": _density_product,
    "free": _density_free,
}


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng([seed, trial])


def run_trial(config: ExperimentConfig, trial: int) -> TrialRecord:
    """One trial; library errors and timeouts become failed records."""
    rng = trial_rng(config.seed, trial)
    record = TrialRecord(trial=trial, success=False)
    start = time.perf_counter()
    deadline = start + config.timeout
    try:
        if config.kind == "dixon-sample":
            _dixon_trial(config, rng, deadline, record)
        elif config.kind == "density-demo":
            _DENSITY[config.group.kind](config, rng, deadline, record)
        else:
            _construct_trial(config, rng, deadline, record)
    except TrialTimeoutError:
        record.success = False
        record.error = f"timeout after {config.timeout}s"
    except LibreDenseError as e:
        record.success = False
        record.error = f"{type(e).__name__}: {e}"
    record.elapsed = time.perf_counter() - start
    if not record.success:
        audit_logger.log_event("TRIAL_FAILED", {
            "kind": config.kind,
            "group": str(config.group),
            "trial": trial,
            "error": record.error,
            "elapsed": record.elapsed,
        })
    return record


def run_experiment(config: ExperimentConfig, progress: bool = False) -> ReportRecord:
    trials = range(config.sample_count)
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = pool.map(run_trial, repeat(config), trials, chunksize=max(1, config.sample_count // (4 * config.workers)))
            records = list(tqdm(results, total=config.sample_count, desc=config.kind, disable=not progress))
    else:
        records = [run_trial(config, t) for t in tqdm(trials, desc=config.kind, disable=not progress)]
    records.sort(key=lambda r: r.trial)
    return ReportRecord(config, records)


def dixon_sample(config: ExperimentConfig, progress: bool = False) -> ReportRecord:
    """Fraction of uniformly drawn tuples that are free up to the word bound."""
    if config.kind != "dixon-sample":
        raise ConfigError(f"dixon_sample needs kind 'dixon-sample', got '{config.kind}'")
    return run_experiment(config, progress)


def density_demo(config: ExperimentConfig, progress: bool = False) -> ReportRecord:
    """Random basic open boxes, a constructed free tuple inside each, verified."""
    if config.kind != "density-demo":
        raise ConfigError(f"density_demo needs kind 'density-demo', got '{config.kind}'")
    return run_experiment(config, progress)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def report_lines(report: ReportRecord) -> list[str]:
    include_timing = report.config.record_timings
    lines = [json.dumps(t.to_json(include_timing), sort_keys=True) for t in report.trials]
    lines.append(json.dumps(report.aggregate(), sort_keys=True))
    return lines


def write_report(report: ReportRecord, path: str | Path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(report_lines(report)) + "\n")
    audit_logger.log_event("REPORT_WRITTEN", {
        "path": str(path),
        "trials": len(report.trials),
        "fraction": str(report.fraction),
        "wall_clock": sum(t.elapsed for t in report.trials),
    })


def report_frame(report: ReportRecord) -> pd.DataFrame:
    return pd.DataFrame([
        {
            "trial": t.trial,
            "success": t.success,
            "free": t.free,
            "witness": t.witness,
            "error": t.error,
            "method": t.details.get("method"),
            "elapsed": t.elapsed,
        }
        for t in report.trials
    ])


def write_csv(report: ReportRecord, path: str | Path):
    report_frame(report).to_csv(path, index=False)


def read_report(path: str | Path) -> tuple[list[dict], dict]:
    """(trial records, aggregate record) from a JSON Lines report."""
    records = [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]
    for r in records:
        if r.get("schema") != SCHEMA_VERSION:
            raise ConfigError(f"{path}: unsupported report schema {r.get('schema')!r}")
    trials = [r for r in records if r["record"] == "trial"]
    aggregate = next((r for r in records if r["record"] == "aggregate"), None)
    if aggregate is None:
        raise ConfigError(f"{path}: no aggregate record")
    return trials, aggregate


def save_outputs(report: ReportRecord):
    if report.config.output:
        write_report(report, report.config.output)
    if report.config.csv:
        write_csv(report, report.config.csv)
