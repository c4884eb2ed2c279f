"""Domain types, case validation, built-in test systems, and SES scaling.

All case files and embedded data carry MW/MVAr; conversion to per-unit on
``s_base`` happens inside the numerical layers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict, replace

import numpy as np


@dataclass(frozen=True)
class Bus:
    id: int
    is_slack: bool = False
    v_min: float = 0.95
    v_max: float = 1.05


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    r: float
    x: float
    s_max: float  # MW


@dataclass(frozen=True)
class Generator:
    bus: int
    a: float  # $/MW^2 h
    b: float  # $/MWh
    c: float  # $/h
    p_min: float
    p_max: float
    q_min: float
    q_max: float


@dataclass(frozen=True)
class Aggregator:
    bus: int
    sigma: float   # socioeconomic score, dimensionless weight
    gamma: float   # $/MWh
    mu: float      # $/MW^2 h
    p_n: float     # normal active demand, MW
    p_c: float     # critical active demand, MW
    q_n: float     # normal reactive demand, MVAr
    q_c: float     # critical reactive demand, MVAr


@dataclass(frozen=True)
class CaseData:
    name: str
    s_base: float
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    generators: tuple[Generator, ...]
    aggregators: tuple[Aggregator, ...]
    metadata: dict = field(default_factory=dict, compare=False)

    def bus_index(self, bus_id: int) -> int:
        for k, bus in enumerate(self.buses):
            if bus.id == bus_id:
                return k
        raise KeyError(f"unknown bus id {bus_id}")

    def slack_index(self) -> int:
        for k, bus in enumerate(self.buses):
            if bus.is_slack:
                return k
        raise ValueError("case has no slack bus")

    def aggregators_at(self, bus_id: int) -> list[Aggregator]:
        if all(b.id != bus_id for b in self.buses):
            raise KeyError(f"unknown bus id {bus_id}")
        return [a for a in self.aggregators if a.bus == bus_id]

    def aggregator(self, bus_id: int, index: int) -> Aggregator:
        """Aggregator ``index`` (1-based) at a bus."""
        aggs = self.aggregators_at(bus_id)
        if not 1 <= index <= len(aggs):
            raise KeyError(f"no aggregator ({bus_id},{index})")
        return aggs[index - 1]


def validate_case(case: CaseData) -> list[str]:
    """Check every structural invariant; return one message per violation."""
    out: list[str] = []
    bus_ids = [b.id for b in case.buses]
    if len(set(bus_ids)) != len(bus_ids):
        out.append("duplicate bus ids")
    if case.s_base <= 0:
        out.append("s_base must be positive")

    n_slack = sum(1 for b in case.buses if b.is_slack)
    if n_slack == 0:
        out.append("no slack bus")
    elif n_slack > 1:
        out.append("multiple slack buses")

    for b in case.buses:
        if not (0 < b.v_min <= b.v_max):
            out.append(f"bus {b.id}: voltage limits must satisfy 0 < v_min <= v_max")

    known = set(bus_ids)
    for ln in case.lines:
        tag = f"line {ln.from_bus}-{ln.to_bus}"
        if ln.from_bus == ln.to_bus:
            out.append(f"{tag}: self loop")
        if ln.from_bus not in known or ln.to_bus not in known:
            out.append(f"{tag}: references unknown bus")
        if ln.x == 0:
            out.append(f"{tag}: zero reactance")
        if ln.s_max <= 0:
            out.append(f"{tag}: nonpositive flow limit")

    for k, g in enumerate(case.generators):
        tag = f"generator {k} at bus {g.bus}"
        if g.bus not in known:
            out.append(f"{tag}: references unknown bus")
        if g.p_min > g.p_max:
            out.append(f"{tag}: p_min > p_max")
        if g.q_min > g.q_max:
            out.append(f"{tag}: q_min > q_max")
        if g.a < 0:
            out.append(f"{tag}: negative quadratic cost coefficient")

    for k, a in enumerate(case.aggregators):
        tag = f"aggregator {k} at bus {a.bus}"
        if a.bus not in known:
            out.append(f"{tag}: references unknown bus")
        if a.sigma < 0:
            out.append(f"{tag}: negative sigma")
        if a.gamma <= 0 or a.mu <= 0:
            out.append(f"{tag}: gamma and mu must be positive")
        if not 0 <= a.p_c <= a.p_n:
            out.append(f"{tag}: active limits must satisfy 0 <= p_c <= p_n")
        if not 0 <= a.q_c <= a.q_n:
            out.append(f"{tag}: reactive limits must satisfy 0 <= q_c <= q_n")

    demand_buses = {a.bus for a in case.aggregators}
    for d in sorted(demand_buses):
        n = sum(1 for a in case.aggregators if a.bus == d)
        if not 1 <= n <= 3:
            out.append(f"bus {d}: hosts {n} aggregators, expected 1-3")

    if case.buses and not _connected(case):
        out.append("network graph is not connected")
    return out


def _connected(case: CaseData) -> bool:
    adj: dict[int, set[int]] = {b.id: set() for b in case.buses}
    for ln in case.lines:
        if ln.from_bus in adj and ln.to_bus in adj:
            adj[ln.from_bus].add(ln.to_bus)
            adj[ln.to_bus].add(ln.from_bus)
    seen = {case.buses[0].id}
    stack = [case.buses[0].id]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return len(seen) == len(case.buses)


def scale_ses(case: CaseData, factor: float) -> CaseData:
    """Return a copy with every aggregator sigma multiplied by ``factor``."""
    if factor <= 0:
        raise ValueError("SES scale factor must be positive")
    aggs = tuple(replace(a, sigma=a.sigma * factor) for a in case.aggregators)
    return replace(case, aggregators=aggs)


def bus_demand(case: CaseData, bus: int, p_values) -> float:
    """Total active demand (MW) of the aggregators at ``bus``.

    ``p_values`` is indexed like ``case.aggregators``.
    """
    p_values = np.asarray(p_values, dtype=float)
    if p_values.shape != (len(case.aggregators),):
        raise ValueError("p_values length must match the aggregator count")
    if all(b.id != bus for b in case.buses):
        raise KeyError(f"unknown bus id {bus}")
    return float(sum(p for a, p in zip(case.aggregators, p_values) if a.bus == bus))


# ---------------------------------------------------------------------------
# built-in cases


def builtin_case(name: str) -> CaseData:
    if name == "five_bus":
        return _five_bus()
    if name == "rts24":
        return _rts24()
    raise KeyError(f"unknown built-in case '{name}' (expected five_bus or rts24)")


# Standard published PJM 5-bus electrical data; generator MW limits are
# uniformly derated to 92% so that total capacity (1407.6 MW) stays below the
# aggregate normal demand of 1410.39 MW (scarcity construction).
_FIVE_BUS_DERATE = 0.92

_FIVE_BUS_BRANCHES = [
    # from, to, r, x, s_max (event-reduced ratings)
    (1, 2, 0.00281, 0.0281, 200.0),
    (1, 4, 0.00304, 0.0304, 100.0),
    (1, 5, 0.00064, 0.0064, 120.0),
    (2, 3, 0.00108, 0.0108, 100.0),
    (3, 4, 0.00297, 0.0297, 150.0),
    (4, 5, 0.00297, 0.0297, 120.0),
]

_FIVE_BUS_GENS = [
    # bus, a, b, c, p_max (pre-derate), q_min, q_max
    (1, 2.0, 14.0, 60.0, 40.0, -30.0, 30.0),
    (1, 2.0, 15.0, 35.0, 170.0, -127.5, 127.5),
    (3, 2.0, 30.0, 25.0, 520.0, -390.0, 390.0),
    (4, 2.0, 40.0, 20.0, 200.0, -150.0, 150.0),
    (5, 2.0, 10.0, 50.0, 600.0, -450.0, 450.0),
]

_FIVE_BUS_AGGS = [
    # bus, sigma, gamma, mu, p_n, p_c, q_n, q_c
    (2, 15.0, 11.05, 0.016, 84.62, 42.00, 25.69, 13.81),
    (2, 85.0, 38.68, 0.045, 338.49, 168.00, 102.78, 55.22),
    (3, 56.0, 63.54, 0.066, 211.56, 105.00, 64.24, 34.51),
    (3, 32.0, 45.34, 0.034, 211.56, 105.00, 64.24, 34.51),
    (4, 100.0, 29.99, 0.089, 324.39, 161.00, 98.48, 52.92),
    (4, 77.0, 21.23, 0.024, 105.78, 52.50, 32.12, 17.26),
    (4, 105.0, 10.0, 0.087, 133.99, 66.50, 40.68, 21.86),
]


def _five_bus() -> CaseData:
    buses = tuple(Bus(id=i, is_slack=(i == 1)) for i in range(1, 6))
    lines = tuple(Line(f, t, r, x, s) for f, t, r, x, s in _FIVE_BUS_BRANCHES)
    gens = tuple(
        Generator(bus, a, b, c, 0.0, pmax * _FIVE_BUS_DERATE, qmin, qmax)
        for bus, a, b, c, pmax, qmin, qmax in _FIVE_BUS_GENS
    )
    aggs = tuple(Aggregator(*row) for row in _FIVE_BUS_AGGS)
    meta = {
        "note": "PJM 5-bus base data; line charging ignored (series-only model)",
        "p_max_derate": _FIVE_BUS_DERATE,
    }
    return CaseData("five_bus", 100.0, buses, lines, gens, aggs, meta)


# IEEE 24-bus reliability test system: standard topology, impedances, unit
# set and cost coefficients. Line ratings are reduced to a seeded random
# fraction in [15%, 80%] of original; aggregators are synthetic (seeded)
# following the scarcity construction rules.

_RTS24_BRANCHES = [
    # from, to, r, x, original rating (MW)
    (1, 2, 0.0026, 0.0139, 175.0),
    (1, 3, 0.0546, 0.2112, 175.0),
    (1, 5, 0.0218, 0.0845, 175.0),
    (2, 4, 0.0328, 0.1267, 175.0),
    (2, 6, 0.0497, 0.1920, 175.0),
    (3, 9, 0.0308, 0.1190, 175.0),
    (3, 24, 0.0023, 0.0839, 400.0),
    (4, 9, 0.0268, 0.1037, 175.0),
    (5, 10, 0.0228, 0.0883, 175.0),
    (6, 10, 0.0139, 0.0605, 175.0),
    (7, 8, 0.0159, 0.0614, 175.0),
    (8, 9, 0.0427, 0.1651, 175.0),
    (8, 10, 0.0427, 0.1651, 175.0),
    (9, 11, 0.0023, 0.0839, 400.0),
    (9, 12, 0.0023, 0.0839, 400.0),
    (10, 11, 0.0023, 0.0839, 400.0),
    (10, 12, 0.0023, 0.0839, 400.0),
    (11, 13, 0.0061, 0.0476, 500.0),
    (11, 14, 0.0054, 0.0418, 500.0),
    (12, 13, 0.0061, 0.0476, 500.0),
    (12, 23, 0.0124, 0.0966, 500.0),
    (13, 23, 0.0111, 0.0865, 500.0),
    (14, 16, 0.0050, 0.0389, 500.0),
    (15, 16, 0.0022, 0.0173, 500.0),
    (15, 21, 0.0063, 0.0490, 500.0),
    (15, 21, 0.0063, 0.0490, 500.0),
    (15, 24, 0.0067, 0.0519, 500.0),
    (16, 17, 0.0033, 0.0259, 500.0),
    (16, 19, 0.0030, 0.0231, 500.0),
    (17, 18, 0.0018, 0.0144, 500.0),
    (17, 22, 0.0135, 0.1053, 500.0),
    (18, 21, 0.0033, 0.0259, 500.0),
    (18, 21, 0.0033, 0.0259, 500.0),
    (19, 20, 0.0051, 0.0396, 500.0),
    (19, 20, 0.0051, 0.0396, 500.0),
    (20, 23, 0.0028, 0.0216, 500.0),
    (20, 23, 0.0028, 0.0216, 500.0),
    (21, 22, 0.0087, 0.0678, 500.0),
]

# Unit classes: (a, b, c, p_min, p_max, q_min, q_max)
_RTS24_UNITS = {
    "U12": (0.328412, 56.564, 86.3852, 2.4, 12.0, 0.0, 6.0),
    "U20": (0.0, 130.0, 400.6849, 4.0, 20.0, 0.0, 10.0),
    "U50": (0.0, 0.001, 0.001, 0.0, 50.0, -10.0, 16.0),
    "U76": (0.014142, 16.0811, 212.3076, 15.2, 76.0, -25.0, 30.0),
    "U100": (0.052672, 43.6615, 781.521, 25.0, 100.0, 0.0, 60.0),
    "U155": (0.008342, 12.3883, 382.2391, 54.25, 155.0, -50.0, 80.0),
    "U197": (0.00717, 48.5804, 832.7575, 68.95, 197.0, 0.0, 80.0),
    "U350": (0.004895, 11.8495, 665.1094, 140.0, 350.0, -25.0, 150.0),
    "U400": (0.000213, 4.4231, 395.3749, 100.0, 400.0, -50.0, 200.0),
    "SyncCond": (0.0, 0.0, 0.0, 0.0, 0.0, -50.0, 200.0),
}

_RTS24_GEN_SITES = [
    (1, "U20", 2), (1, "U76", 2),
    (2, "U20", 2), (2, "U76", 2),
    (7, "U100", 3),
    (13, "U197", 3),
    (14, "SyncCond", 1),
    (15, "U12", 5), (15, "U155", 1),
    (16, "U155", 1),
    (18, "U400", 1),
    (21, "U400", 1),
    (22, "U50", 6),
    (23, "U155", 2), (23, "U350", 1),
]

# Bus loads of the RTS (MW); demand buses only.
_RTS24_LOADS = {
    1: 108.0, 2: 97.0, 3: 180.0, 4: 74.0, 5: 71.0, 6: 136.0, 7: 125.0,
    8: 171.0, 9: 175.0, 10: 195.0, 13: 265.0, 14: 194.0, 15: 317.0,
    16: 100.0, 18: 333.0, 19: 181.0, 20: 128.0,
}

# Seed chosen so the sampled congestion pattern leaves every critical load
# deliverable (several seeds produce islanded scarcity pockets that make the
# case infeasible).
RTS24_SEED = 2025


def _rts24() -> CaseData:
    rng = np.random.default_rng(RTS24_SEED)
    buses = tuple(Bus(id=i, is_slack=(i == 13)) for i in range(1, 25))

    # Ratings reduced into [15%, 80%] of original to induce congestion.
    fracs = rng.uniform(0.15, 0.80, size=len(_RTS24_BRANCHES))
    lines = tuple(
        Line(f, t, r, x, round(rate * frac, 2))
        for (f, t, r, x, rate), frac in zip(_RTS24_BRANCHES, fracs)
    )

    gens = []
    for bus, unit, count in _RTS24_GEN_SITES:
        a, b, c, pmin, pmax, qmin, qmax = _RTS24_UNITS[unit]
        gens.extend(Generator(bus, a, b, c, pmin, pmax, qmin, qmax)
                    for _ in range(count))
    gens = tuple(gens)

    p_cap = sum(g.p_max for g in gens)
    q_cap = sum(g.q_max for g in gens)
    total_load = sum(_RTS24_LOADS.values())
    # Normal demands scaled above total generation capacity (scarcity rule);
    # reactive normals likewise exceed total reactive capability.
    p_scale = 1.06 * p_cap / total_load
    q_ratio = 1.05 * q_cap / (p_scale * total_load)

    aggs = []
    for bus_id in sorted(_RTS24_LOADS):
        p_total = _RTS24_LOADS[bus_id] * p_scale
        n_agg = int(rng.integers(2, 4))
        shares = rng.uniform(0.5, 1.5, size=n_agg)
        shares /= shares.sum()
        for share in shares:
            p_n = round(p_total * share, 2)
            p_c = round(0.496 * p_n, 2)
            q_n = round(q_ratio * p_n, 2)
            q_c = round(0.537 * q_n, 2)
            sigma = round(rng.uniform(10.0, 110.0), 1)
            gamma = round(rng.uniform(10.0, 65.0), 2)
            saturation = p_n * rng.uniform(1.2, 2.5)
            mu = round(gamma / saturation, 5)
            aggs.append(Aggregator(bus_id, sigma, gamma, mu, p_n, p_c, q_n, q_c))
    aggs = tuple(aggs)

    meta = {
        "note": "IEEE 24-bus RTS topology; synthetic seeded aggregators; "
                "line charging ignored (series-only model)",
        "aggregator_seed": RTS24_SEED,
        "rating_fraction_range": [0.15, 0.80],
    }
    return CaseData("rts24", 100.0, buses, lines, gens, aggs, meta)


# ---------------------------------------------------------------------------
# case file I/O (JSON, MW/MVAr units)


def case_to_dict(case: CaseData) -> dict:
    return {
        "name": case.name,
        "s_base": case.s_base,
        "buses": [asdict(b) for b in case.buses],
        "lines": [asdict(ln) for ln in case.lines],
        "generators": [asdict(g) for g in case.generators],
        "aggregators": [asdict(a) for a in case.aggregators],
        "metadata": case.metadata,
    }


def case_from_dict(doc: dict) -> CaseData:
    return CaseData(
        name=doc.get("name", "unnamed"),
        s_base=float(doc["s_base"]),
        buses=tuple(Bus(**b) for b in doc["buses"]),
        lines=tuple(Line(**ln) for ln in doc["lines"]),
        generators=tuple(Generator(**g) for g in doc["generators"]),
        aggregators=tuple(Aggregator(**a) for a in doc["aggregators"]),
        metadata=doc.get("metadata", {}),
    )


def save_case(case: CaseData, path) -> None:
    with open(path, "w") as fh:
        json.dump(case_to_dict(case), fh, indent=2)
        fh.write("\n")


def load_case(path) -> CaseData:
    with open(path) as fh:
        return case_from_dict(json.load(fh))
