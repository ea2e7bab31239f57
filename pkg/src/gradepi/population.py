"""Synthetic population, CSV ingestion, and the bipartite agent-venue contact graph."""

from __future__ import annotations

import csv
import math
from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import IntegrityError, InvalidSpec, ParseError

VENUE_KINDS: tuple[str, ...] = ("household", "school", "workplace", "pub", "cinema", "other")
LEISURE_KINDS: tuple[str, ...] = ("pub", "cinema", "other")
SEXES: tuple[str, ...] = ("female", "male")
ETHNICITIES: tuple[str, ...] = ("Maori", "Pacific", "Asian", "European", "MELAA", "Other")
AGE_BANDS: tuple[str, ...] = ("0-4", "5-11", "12-17", "18-24", "25-44", "45-64", "65+")
AGE_BAND_EDGES = np.array([0, 5, 12, 18, 25, 45, 65, 101])

SCHOOL_AGES = (5, 18)
WORKING_AGES = (19, 64)
ADULT_AGE = 18
_OLDEST_DRAWN = 95

AGENTS_HEADER = (
    "agent_id", "age", "sex", "ethnicity", "vaccinated",
    "household_id", "school_id", "work_id", "region",
)
LEISURE_COLUMNS = ("pub_id", "cinema_id", "other_id")
VENUES_HEADER = ("venue_id", "kind", "region")


def age_band_index(age: np.ndarray | int) -> np.ndarray:
    return np.searchsorted(AGE_BAND_EDGES, np.asarray(age), side="right") - 1


# --- domain types -----------------------------------------------------------

@dataclass(frozen=True)
class Agent:
    id: int
    age: int
    sex: str
    ethnicity: str
    vaccinated: bool
    household_id: int
    region: str
    school_id: int | None = None
    work_id: int | None = None
    leisure: dict[str, int] = field(default_factory=dict)


@dataclass(frozen=True)
class Venue:
    id: int
    kind: str
    region: str
    members: tuple[int, ...]


@dataclass
class VenueKindParams:
    """Contact intensity ``rho`` and contact frequency ``q`` per venue kind."""

    rho: dict[str, float] = field(default_factory=lambda: {k: 1.0 for k in VENUE_KINDS})
    q: dict[str, float] = field(default_factory=lambda: {k: 1.0 for k in VENUE_KINDS})

    def __post_init__(self) -> None:
        for name, table in (("rho", self.rho), ("q", self.q)):
            unknown = set(table) - set(VENUE_KINDS)
            if unknown:
                raise InvalidSpec(f"{name}: unknown venue kinds {sorted(unknown)}")
            for kind in VENUE_KINDS:
                table.setdefault(kind, 1.0)
                value = float(table[kind])
                if not (value > 0 and math.isfinite(value)):
                    raise InvalidSpec(f"{name}[{kind}] must be positive, got {value}")
                table[kind] = value

    def rho_array(self) -> np.ndarray:
        return np.array([self.rho[k] for k in VENUE_KINDS])

    def q_array(self) -> np.ndarray:
        return np.array([self.q[k] for k in VENUE_KINDS])


@dataclass
class PopulationSpec:
    n_agents: int = 1000
    region_weights: dict[str, float] = field(default_factory=lambda: {"A": 1.0})
    household_mean_size: float = 3.0
    household_max_size: int = 8
    household_size_distribution: list[float] | None = None
    school_count: int = 2
    workplace_count: int = 20
    employment_fraction: float = 0.7
    pub_count: int = 0
    cinema_count: int = 0
    other_count: int = 0
    leisure_attendance: dict[str, float] = field(
        default_factory=lambda: {"pub": 0.3, "cinema": 0.2, "other": 0.3}
    )
    age_marginals: dict[str, float] = field(default_factory=lambda: {
        "0-4": 0.07, "5-11": 0.10, "12-17": 0.08, "18-24": 0.10,
        "25-44": 0.28, "45-64": 0.24, "65+": 0.13,
    })
    sex_marginals: dict[str, float] = field(
        default_factory=lambda: {"female": 0.51, "male": 0.49}
    )
    ethnicity_marginals: dict[str, float] = field(default_factory=lambda: {
        "Maori": 0.16, "Pacific": 0.09, "Asian": 0.15,
        "European": 0.54, "MELAA": 0.02, "Other": 0.04,
    })
    vaccination_coverage_by_age: dict[str, float] | float = 0.9

    def coverage_array(self) -> np.ndarray:
        cov = self.vaccination_coverage_by_age
        if isinstance(cov, Mapping):
            unknown = set(cov) - set(AGE_BANDS)
            if unknown:
                raise InvalidSpec(f"vaccination coverage: unknown age bands {sorted(unknown)}")
            arr = np.array([float(cov.get(b, 0.0)) for b in AGE_BANDS])
        else:
            arr = np.full(len(AGE_BANDS), float(cov))
        if np.any(arr < 0) or np.any(arr > 1):
            raise InvalidSpec("vaccination coverage must lie in [0, 1]")
        return arr

    def validate(self) -> None:
        if self.n_agents < 1:
            raise InvalidSpec("n_agents must be at least 1")
        for name, table, cats in (
            ("age_marginals", self.age_marginals, AGE_BANDS),
            ("sex_marginals", self.sex_marginals, SEXES),
            ("ethnicity_marginals", self.ethnicity_marginals, ETHNICITIES),
            ("region_weights", self.region_weights, None),
        ):
            _marginal(name, table, cats)
        if self.household_size_distribution is not None:
            sizes = np.asarray(self.household_size_distribution, dtype=float)
            if sizes.size == 0 or np.any(sizes < 0) or abs(sizes.sum() - 1.0) > 1e-9:
                raise InvalidSpec("household_size_distribution must be a normalized list")
        elif not (self.household_mean_size >= 1.0 and self.household_max_size >= 1):
            raise InvalidSpec("zero households: household sizes must be at least 1")
        if not 0.0 <= self.employment_fraction <= 1.0:
            raise InvalidSpec("employment_fraction must lie in [0, 1]")
        for kind, frac in self.leisure_attendance.items():
            if kind not in LEISURE_KINDS or not 0.0 <= frac <= 1.0:
                raise InvalidSpec(f"invalid leisure attendance {kind}={frac}")
        for name in ("school_count", "workplace_count", "pub_count", "cinema_count", "other_count"):
            if getattr(self, name) < 0:
                raise InvalidSpec(f"{name} must be non-negative")
        self.coverage_array()


def _marginal(name: str, table: Mapping[str, float], categories) -> np.ndarray:
    if categories is not None:
        unknown = set(table) - set(categories)
        if unknown:
            raise InvalidSpec(f"{name}: unknown categories {sorted(unknown)}")
        probs = np.array([float(table.get(c, 0.0)) for c in categories])
    else:
        probs = np.array([float(v) for v in table.values()])
    if probs.size == 0 or np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
        raise InvalidSpec(f"{name} must be non-negative and sum to 1 (got {probs.sum()!r})")
    return probs


# --- population -------------------------------------------------------------

@dataclass(eq=False)
class Population:
    """Struct-of-arrays population. Agent and venue indices are dense from 0.

    Membership arrays hold venue indices, with -1 meaning no membership.
    ``agent_ids`` and ``venue_ids`` preserve external ids for file output.
    """

    agent_ids: np.ndarray
    age: np.ndarray
    sex: np.ndarray
    ethnicity: np.ndarray
    vaccinated: np.ndarray
    household: np.ndarray
    school: np.ndarray
    work: np.ndarray
    leisure: np.ndarray  # (n_agents, len(LEISURE_KINDS))
    region: np.ndarray
    venue_ids: np.ndarray
    venue_kind: np.ndarray
    venue_region: np.ndarray
    region_labels: tuple[str, ...]

    @property
    def n_agents(self) -> int:
        return int(self.age.shape[0])

    @property
    def n_venues(self) -> int:
        return int(self.venue_kind.shape[0])

    def age_band(self) -> np.ndarray:
        return age_band_index(self.age)

    def memberships(self) -> np.ndarray:
        """(n_agents, 3 + len(LEISURE_KINDS)) venue index table, -1 for none."""
        return np.column_stack([self.household, self.school, self.work, self.leisure])

    def region_mask(self, label: str) -> np.ndarray:
        if label not in self.region_labels:
            raise IntegrityError(f"unknown region {label!r}")
        return self.region == self.region_labels.index(label)

    def venue_members(self) -> list[list[int]]:
        members: list[list[int]] = [[] for _ in range(self.n_venues)]
        for a, row in enumerate(self.memberships()):
            for v in row:
                if v >= 0:
                    members[v].append(a)
        return members

    def agents(self) -> Iterator[Agent]:
        vid = self.venue_ids
        for i in range(self.n_agents):
            leisure = {
                kind: int(vid[self.leisure[i, j]])
                for j, kind in enumerate(LEISURE_KINDS) if self.leisure[i, j] >= 0
            }
            yield Agent(
                id=int(self.agent_ids[i]),
                age=int(self.age[i]),
                sex=SEXES[self.sex[i]],
                ethnicity=ETHNICITIES[self.ethnicity[i]],
                vaccinated=bool(self.vaccinated[i]),
                household_id=int(vid[self.household[i]]),
                region=self.region_labels[self.region[i]],
                school_id=int(vid[self.school[i]]) if self.school[i] >= 0 else None,
                work_id=int(vid[self.work[i]]) if self.work[i] >= 0 else None,
                leisure=leisure,
            )

    def venues(self) -> Iterator[Venue]:
        for v, members in enumerate(self.venue_members()):
            yield Venue(
                id=int(self.venue_ids[v]),
                kind=VENUE_KINDS[self.venue_kind[v]],
                region=self.region_labels[self.venue_region[v]],
                members=tuple(int(self.agent_ids[a]) for a in members),
            )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Population):
            return NotImplemented
        if self.region_labels != other.region_labels:
            return False
        return all(
            np.array_equal(getattr(self, name), getattr(other, name))
            for name in (
                "agent_ids", "age", "sex", "ethnicity", "vaccinated", "household", "school",
                "work", "leisure", "region", "venue_ids", "venue_kind", "venue_region",
            )
        )

    def write(self, agents_path: str | Path, venues_path: str | Path | None = None,
              comment: str | None = None) -> None:
        """Write ``agents.csv`` and ``venues.csv``.

        Leisure memberships are appended as extra trailing columns only when
        the population has any.
        """
        agents_path = Path(agents_path)
        venues_path = Path(venues_path) if venues_path else _default_venues_path(agents_path)
        vid = self.venue_ids
        with_leisure = bool(np.any(self.leisure >= 0))
        header = AGENTS_HEADER + (LEISURE_COLUMNS if with_leisure else ())

        def ref(v: int) -> str:
            return str(int(vid[v])) if v >= 0 else ""

        with open(agents_path, "w", newline="") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for i in range(self.n_agents):
                row = [
                    int(self.agent_ids[i]), int(self.age[i]), SEXES[self.sex[i]],
                    ETHNICITIES[self.ethnicity[i]], int(bool(self.vaccinated[i])),
                    ref(self.household[i]), ref(self.school[i]), ref(self.work[i]),
                    self.region_labels[self.region[i]],
                ]
                if with_leisure:
                    row.extend(ref(v) for v in self.leisure[i])
                w.writerow(row)
        with open(venues_path, "w", newline="") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(VENUES_HEADER)
            for v in range(self.n_venues):
                w.writerow([int(vid[v]), VENUE_KINDS[self.venue_kind[v]],
                            self.region_labels[self.venue_region[v]]])


def _default_venues_path(agents_path: Path) -> Path:
    return agents_path.with_name("venues.csv")


def _household_sizes(spec: PopulationSpec, n: int, rng: np.random.Generator) -> list[int]:
    if spec.household_size_distribution is not None:
        probs = np.asarray(spec.household_size_distribution, dtype=float)
    else:
        # Truncated geometric on 1..max whose untruncated mean is household_mean_size.
        k = np.arange(1, spec.household_max_size + 1)
        success = 1.0 / spec.household_mean_size
        probs = success * (1.0 - success) ** (k - 1)
        probs = probs / probs.sum()
    sizes: list[int] = []
    remaining = n
    while remaining > 0:
        s = int(rng.choice(len(probs), p=probs)) + 1
        s = min(s, remaining)
        sizes.append(s)
        remaining -= s
    return sizes


def _allocate(total: int, weights: np.ndarray, needed: np.ndarray) -> np.ndarray:
    """Split ``total`` venues across regions in proportion to ``weights``.

    Every region that needs a venue of this kind gets at least one when
    ``total`` is positive.
    """
    if total == 0:
        return np.zeros(len(weights), dtype=int)
    counts = np.floor(total * weights).astype(int)
    counts[needed & (counts == 0)] = 1
    counts[~needed] = 0
    return counts


def generate_synthetic(spec: PopulationSpec, seed: int) -> Population:
    """Draw a desk-scale synthetic population with households, schools, workplaces and leisure."""
    spec.validate()
    rng = np.random.default_rng(seed)
    n = spec.n_agents
    region_labels = tuple(spec.region_weights)
    region_w = _marginal("region_weights", spec.region_weights, None)

    region = np.sort(rng.choice(len(region_labels), size=n, p=region_w))
    band = rng.choice(len(AGE_BANDS), size=n, p=_marginal("age", spec.age_marginals, AGE_BANDS))
    lo = AGE_BAND_EDGES[band]
    hi = np.minimum(AGE_BAND_EDGES[band + 1], _OLDEST_DRAWN + 1)
    age = lo + np.floor(rng.random(n) * (hi - lo)).astype(int)
    sex = rng.choice(len(SEXES), size=n, p=_marginal("sex", spec.sex_marginals, SEXES))
    ethnicity = rng.choice(
        len(ETHNICITIES), size=n, p=_marginal("ethnicity", spec.ethnicity_marginals, ETHNICITIES)
    )
    vaccinated = rng.random(n) < spec.coverage_array()[band]

    venue_kind: list[int] = []
    venue_region: list[int] = []

    def new_venue(kind: str, reg: int) -> int:
        venue_kind.append(VENUE_KINDS.index(kind))
        venue_region.append(reg)
        return len(venue_kind) - 1

    household = np.full(n, -1, dtype=np.int64)
    for r in range(len(region_labels)):
        members = np.flatnonzero(region == r)
        if members.size == 0:
            continue
        order = rng.permutation(members)
        start = 0
        for size in _household_sizes(spec, members.size, rng):
            household[order[start:start + size]] = new_venue("household", r)
            start += size

    def assign(kind: str, total: int, eligible: np.ndarray) -> np.ndarray:
        out = np.full(n, -1, dtype=np.int64)
        needed = np.array([np.any(eligible & (region == r)) for r in range(len(region_labels))])
        counts = _allocate(total, region_w, needed)
        for r, count in enumerate(counts):
            if count == 0:
                continue
            ids = np.array([new_venue(kind, r) for _ in range(count)])
            who = np.flatnonzero(eligible & (region == r))
            out[who] = ids[rng.integers(0, count, size=who.size)]
        return out

    school_age = (age >= SCHOOL_AGES[0]) & (age <= SCHOOL_AGES[1])
    school = assign("school", spec.school_count, school_age)
    working_age = (age >= WORKING_AGES[0]) & (age <= WORKING_AGES[1])
    employed = working_age & (rng.random(n) < spec.employment_fraction)
    work = assign("workplace", spec.workplace_count, employed)
    leisure = np.full((n, len(LEISURE_KINDS)), -1, dtype=np.int64)
    for j, kind in enumerate(LEISURE_KINDS):
        count = getattr(spec, f"{kind}_count")
        attends = (age >= ADULT_AGE) & (rng.random(n) < spec.leisure_attendance.get(kind, 0.0))
        leisure[:, j] = assign(kind, count, attends)

    pop = Population(
        agent_ids=np.arange(n, dtype=np.int64),
        age=age.astype(np.int64),
        sex=sex.astype(np.int64),
        ethnicity=ethnicity.astype(np.int64),
        vaccinated=vaccinated,
        household=household,
        school=school,
        work=work,
        leisure=leisure,
        region=region.astype(np.int64),
        venue_ids=np.arange(len(venue_kind), dtype=np.int64),
        venue_kind=np.array(venue_kind, dtype=np.int64),
        venue_region=np.array(venue_region, dtype=np.int64),
        region_labels=region_labels,
    )
    return _drop_empty_venues(pop)


def _drop_empty_venues(pop: Population) -> Population:
    table = pop.memberships()
    used = np.zeros(pop.n_venues, dtype=bool)
    used[table[table >= 0]] = True
    if used.all():
        return pop
    remap = np.full(pop.n_venues, -1, dtype=np.int64)
    remap[used] = np.arange(int(used.sum()))

    def fix(a: np.ndarray) -> np.ndarray:
        return np.where(a >= 0, remap[np.maximum(a, 0)], -1)

    return Population(
        agent_ids=pop.agent_ids, age=pop.age, sex=pop.sex, ethnicity=pop.ethnicity,
        vaccinated=pop.vaccinated, household=fix(pop.household), school=fix(pop.school),
        work=fix(pop.work), leisure=fix(pop.leisure), region=pop.region,
        venue_ids=np.arange(int(used.sum()), dtype=np.int64),
        venue_kind=pop.venue_kind[used], venue_region=pop.venue_region[used],
        region_labels=pop.region_labels,
    )


# --- ingestion --------------------------------------------------------------

def _read_rows(path: Path, expected: tuple[str, ...], optional: tuple[str, ...] = ()):
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise ParseError(f"cannot open: {exc.strerror}", path=str(path)) from exc
    with fh:
        reader = csv.reader(fh)
        header = None
        for row in reader:
            if row and not row[0].startswith("#"):
                header = tuple(h.strip() for h in row)
                break
        if header is None:
            raise ParseError("file is empty", line=1, path=str(path))
        if header not in (expected, expected + optional):
            raise ParseError(f"unexpected header {','.join(header)}", line=reader.line_num,
                             path=str(path))
        rows = []
        for row in reader:
            if not row or row[0].startswith("#"):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}",
                                 line=reader.line_num, path=str(path))
            rows.append((reader.line_num, dict(zip(header, (c.strip() for c in row)))))
    if not rows:
        raise ParseError("no data rows", line=reader.line_num, path=str(path))
    return rows


def _int(value: str, line: int, path: Path, column: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ParseError(f"{column}: not an integer: {value!r}", line=line, path=str(path)) from None


def load_population(agents_path: str | Path, venues_path: str | Path | None = None) -> Population:
    """Load and validate a population from ``agents.csv`` and ``venues.csv``.

    ``agents_path`` may also be a directory holding both files.
    """
    agents_path = Path(agents_path)
    if agents_path.is_dir():
        venues_path = venues_path or agents_path / "venues.csv"
        agents_path = agents_path / "agents.csv"
    venues_path = Path(venues_path) if venues_path else _default_venues_path(agents_path)

    venue_rows = _read_rows(venues_path, VENUES_HEADER)
    region_labels: list[str] = []
    venue_index: dict[int, int] = {}
    venue_ids, venue_kind, venue_region = [], [], []
    for line, row in venue_rows:
        vid = _int(row["venue_id"], line, venues_path, "venue_id")
        if vid in venue_index:
            raise IntegrityError(f"{venues_path}:{line}: duplicate venue id {vid}")
        if row["kind"] not in VENUE_KINDS:
            raise ParseError(f"unknown venue kind {row['kind']!r}", line=line, path=str(venues_path))
        if row["region"] not in region_labels:
            region_labels.append(row["region"])
        venue_index[vid] = len(venue_ids)
        venue_ids.append(vid)
        venue_kind.append(VENUE_KINDS.index(row["kind"]))
        venue_region.append(region_labels.index(row["region"]))

    agent_rows = _read_rows(agents_path, AGENTS_HEADER, LEISURE_COLUMNS)
    n = len(agent_rows)
    seen: set[int] = set()
    cols = {k: np.zeros(n, dtype=np.int64) for k in ("id", "age", "sex", "eth", "reg")}
    vacc = np.zeros(n, dtype=bool)
    refs = np.full((n, 3 + len(LEISURE_KINDS)), -1, dtype=np.int64)
    ref_columns = ("household_id", "school_id", "work_id") + LEISURE_COLUMNS
    ref_kinds = ("household", "school", "workplace") + LEISURE_KINDS
    for i, (line, row) in enumerate(agent_rows):
        aid = _int(row["agent_id"], line, agents_path, "agent_id")
        if aid in seen:
            raise IntegrityError(f"{agents_path}:{line}: duplicate agent id {aid}")
        seen.add(aid)
        age = _int(row["age"], line, agents_path, "age")
        if not 0 <= age <= 100:
            raise ParseError(f"age {age} outside [0, 100]", line=line, path=str(agents_path))
        if row["sex"] not in SEXES:
            raise ParseError(f"unknown sex {row['sex']!r}", line=line, path=str(agents_path))
        if row["ethnicity"] not in ETHNICITIES:
            raise ParseError(f"unknown ethnicity {row['ethnicity']!r}", line=line,
                             path=str(agents_path))
        if row["vaccinated"] not in ("0", "1"):
            raise ParseError("vaccinated must be 0 or 1", line=line, path=str(agents_path))
        if row["region"] not in region_labels:
            region_labels.append(row["region"])
        cols["id"][i] = aid
        cols["age"][i] = age
        cols["sex"][i] = SEXES.index(row["sex"])
        cols["eth"][i] = ETHNICITIES.index(row["ethnicity"])
        cols["reg"][i] = region_labels.index(row["region"])
        vacc[i] = row["vaccinated"] == "1"
        for j, (column, kind) in enumerate(zip(ref_columns, ref_kinds)):
            raw = row.get(column, "")
            if raw == "":
                if column == "household_id":
                    raise IntegrityError(f"{agents_path}:{line}: agent {aid} has no household")
                continue
            vid = _int(raw, line, agents_path, column)
            if vid not in venue_index:
                raise IntegrityError(f"{agents_path}:{line}: {column} {vid} does not exist")
            v = venue_index[vid]
            if VENUE_KINDS[venue_kind[v]] != kind:
                raise IntegrityError(
                    f"{agents_path}:{line}: {column} {vid} is a {VENUE_KINDS[venue_kind[v]]}"
                )
            refs[i, j] = v

    pop = Population(
        agent_ids=cols["id"], age=cols["age"], sex=cols["sex"], ethnicity=cols["eth"],
        vaccinated=vacc, household=refs[:, 0], school=refs[:, 1], work=refs[:, 2],
        leisure=refs[:, 3:], region=cols["reg"],
        venue_ids=np.array(venue_ids, dtype=np.int64),
        venue_kind=np.array(venue_kind, dtype=np.int64),
        venue_region=np.array(venue_region, dtype=np.int64),
        region_labels=tuple(region_labels),
    )
    table = pop.memberships()
    used = np.zeros(pop.n_venues, dtype=bool)
    used[table[table >= 0]] = True
    if not used.all():
        empty = int(pop.venue_ids[np.flatnonzero(~used)[0]])
        raise IntegrityError(f"{venues_path}: venue {empty} has no members")
    return pop


# --- contact graph ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ContactGraph:
    """Bipartite agent-venue edges sorted by agent, with CSR offsets."""

    e_agent: np.ndarray
    e_venue: np.ndarray
    e_kind: np.ndarray
    agent_offsets: np.ndarray
    n_agents: int
    n_venues: int
    venue_kind: np.ndarray

    @property
    def n_edges(self) -> int:
        return int(self.e_agent.shape[0])

    def agent_degree(self) -> np.ndarray:
        return np.diff(self.agent_offsets)

    def venue_degree(self) -> np.ndarray:
        return np.bincount(self.e_venue, minlength=self.n_venues)

    def venues_of(self, agent: int) -> np.ndarray:
        return self.e_venue[self.agent_offsets[agent]:self.agent_offsets[agent + 1]]


def build_contact_graph(pop: Population, params: VenueKindParams | None = None) -> ContactGraph:
    """One edge per (agent, venue membership), grouped by agent."""
    if params is not None and not isinstance(params, VenueKindParams):
        raise InvalidSpec("params must be VenueKindParams")
    table = pop.memberships()
    if np.any(pop.household < 0):
        raise IntegrityError("every agent needs a household")
    agent_idx, col = np.nonzero(table >= 0)
    e_venue = table[agent_idx, col]
    e_kind = pop.venue_kind[e_venue]
    offsets = np.zeros(pop.n_agents + 1, dtype=np.int64)
    np.cumsum(np.bincount(agent_idx, minlength=pop.n_agents), out=offsets[1:])
    return ContactGraph(
        e_agent=agent_idx.astype(np.int64),
        e_venue=e_venue.astype(np.int64),
        e_kind=e_kind.astype(np.int64),
        agent_offsets=offsets,
        n_agents=pop.n_agents,
        n_venues=pop.n_venues,
        venue_kind=pop.venue_kind.copy(),
    )
