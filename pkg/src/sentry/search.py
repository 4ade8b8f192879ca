"""NSGA-II over contract input vectors, maximizing (accuracy, coverage).

Chromosomes are plain big-integer gene tuples. Variation is uniform
crossover plus two mutations (uniform integer deltas, random segment
reorder); selection is binary tournament on (rank, crowding); survival is
the usual elitist 2N -> N front-then-crowding truncation. Everything is
driven by one seeded RNG stream, so a fixed seed reproduces a run exactly.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from . import astnodes as A
from .astnodes import INIT_NAME
from .dataflow import InputSlot
from .detectors import Finding, run_all
from .errors import InfeasibleConstraints
from .executor import ExecTrace, Limits, coverage, execute
from .metrics import finding_matches_label
from .pipeline import Analysis
from .program_model import resolve_function

Genes = tuple[int, ...]


@dataclass
class SearchConfig:
    pop_size: int = 50
    max_iters: int = 200
    select_k: int = 20
    crossover_rate: float = 0.6
    mutation_rate: float = 0.75
    seed: int = 0
    stagnation_window: int = 40  # 0 disables early stop


@dataclass
class Individual:
    genes: Genes
    f1: float = 0.0  # detection accuracy
    f2: float = 0.0  # statement coverage
    rank: int = 0  # 1 = best front
    crowding: float = 0.0

    @property
    def fitness(self) -> tuple[float, float]:
        return (self.f1, self.f2)


@dataclass
class ConstraintSet:
    bounds: list[tuple[int, int]]
    # functional equality dependencies: gene[dst] is re-derived from gene[src]
    dependencies: list[tuple[int, int]] = field(default_factory=list)
    # derived-constructor requirements forwarded to base constructors:
    # (gene index, comparison op, literal); violations reject the chromosome
    inheritance: list[tuple[int, str, int]] = field(default_factory=list)


_OPS = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
}

_FLIP = {"<": ">", "<=": ">=", ">": "<", ">=": "<=", "==": "==", "!=": "!="}


def build_constraints(analysis: Analysis) -> ConstraintSet:
    """Bounds from slot types; equality dependencies from same-function
    require(p == q) over two parameters; inheritance predicates from base
    constructor requires on directly forwarded constructor parameters."""
    slots = analysis.program.slots
    cs = ConstraintSet(bounds=[s.bounds for s in slots])
    index_of: dict[tuple, int] = {s.origin: i for i, s in enumerate(slots)}

    by_name = {c.name: c for c in analysis.unit.contracts}

    def top_level_requires(fn_def: A.FunctionDef):
        for s in fn_def.body.statements:
            if isinstance(s, A.RequireStmt):
                yield s.cond

    for lc in analysis.roots:
        entry_ids = ([lc.entry_ctor] if lc.entry_ctor else []) + lc.public_order
        for fn_id in entry_ids:
            fn = lc.funcs[fn_id]
            if fn.name == INIT_NAME:
                fn_def = None
                for c in by_name.values():
                    if c.name == fn.defining_contract:
                        fn_def = next(f for f in c.functions if f.is_constructor)
                assert fn_def is not None
            else:
                resolved = resolve_function(analysis.unit, analysis.ig, lc.root, fn.name)
                assert resolved is not None
                fn_def = resolved[1]
            params = {p.name for p in fn_def.params}
            for cond in top_level_requires(fn_def):
                if (isinstance(cond, A.Bin) and cond.op == "=="
                        and isinstance(cond.left, A.Ident)
                        and isinstance(cond.right, A.Ident)
                        and cond.left.name in params and cond.right.name in params
                        and cond.left.name != cond.right.name):
                    src = index_of[("param", fn_id, cond.left.name)]
                    dst = index_of[("param", fn_id, cond.right.name)]
                    cs.dependencies.append((min(src, dst), max(src, dst)))

        if lc.entry_ctor is None:
            continue
        entry_fn = lc.funcs[lc.entry_ctor]
        owner = by_name[entry_fn.defining_contract]
        ctor_def = next(f for f in owner.functions if f.is_constructor)
        ctor_params = [p.name for p in ctor_def.params]
        for base_name, args in ctor_def.base_invocations:
            base = by_name.get(base_name)
            if base is None:
                continue
            base_ctor = next((f for f in base.functions if f.is_constructor), None)
            if base_ctor is None:
                continue
            for pos, arg in enumerate(args):
                if not (isinstance(arg, A.Ident) and arg.name in ctor_params):
                    continue
                gene = index_of.get(("param", lc.entry_ctor, arg.name))
                if gene is None:
                    continue
                base_param = base_ctor.params[pos].name
                for cond in top_level_requires(base_ctor):
                    if not isinstance(cond, A.Bin) or cond.op not in _OPS:
                        continue
                    if (isinstance(cond.left, A.Ident) and cond.left.name == base_param
                            and isinstance(cond.right, A.Lit)):
                        cs.inheritance.append((gene, cond.op, cond.right.value))
                    elif (isinstance(cond.right, A.Ident) and cond.right.name == base_param
                          and isinstance(cond.left, A.Lit)):
                        cs.inheritance.append((gene, _FLIP[cond.op], cond.left.value))
    return cs


def enforce_constraints(genes: Genes, cs: ConstraintSet) -> Genes | None:
    """Repair bounds by truncation and equality dependencies by re-deriving
    the dependent gene; inheritance violations reject the chromosome."""
    out = list(genes)
    for i, (lo, hi) in enumerate(cs.bounds):
        if out[i] < lo:
            out[i] = lo
        elif out[i] > hi:
            out[i] = hi
    for src, dst in cs.dependencies:
        lo, hi = cs.bounds[dst]
        out[dst] = min(max(out[src], lo), hi)
    for gene, op, literal in cs.inheritance:
        if not _OPS[op](out[gene], literal):
            return None
    return tuple(out)


# ---------------------------------------------------------------------------
# NSGA-II primitives


def dominates(a: tuple[float, float], b: tuple[float, float]) -> bool:
    return a[0] >= b[0] and a[1] >= b[1] and (a[0] > b[0] or a[1] > b[1])


def fast_nondominated_sort(fitnesses: list[tuple[float, float]]) -> list[list[int]]:
    n = len(fitnesses)
    dominated_by: list[list[int]] = [[] for _ in range(n)]
    domination_count = [0] * n
    fronts: list[list[int]] = [[]]
    for p in range(n):
        for q in range(n):
            if p == q:
                continue
            if dominates(fitnesses[p], fitnesses[q]):
                dominated_by[p].append(q)
            elif dominates(fitnesses[q], fitnesses[p]):
                domination_count[p] += 1
        if domination_count[p] == 0:
            fronts[0].append(p)
    i = 0
    while fronts[i]:
        nxt: list[int] = []
        for p in fronts[i]:
            for q in dominated_by[p]:
                domination_count[q] -= 1
                if domination_count[q] == 0:
                    nxt.append(q)
        i += 1
        fronts.append(sorted(nxt))
    fronts.pop()
    return fronts


def crowding_distance(front: list[int],
                      fitnesses: list[tuple[float, float]]) -> dict[int, float]:
    if not front:
        return {}
    if len(front) <= 2:
        return {i: float("inf") for i in front}
    dist = {i: 0.0 for i in front}
    for m in (0, 1):
        ordered = sorted(front, key=lambda i: fitnesses[i][m])
        dist[ordered[0]] = float("inf")
        dist[ordered[-1]] = float("inf")
        span = fitnesses[ordered[-1]][m] - fitnesses[ordered[0]][m]
        if span == 0:
            continue  # a flat objective adds nothing
        for k in range(1, len(ordered) - 1):
            if dist[ordered[k]] == float("inf"):
                continue
            gap = fitnesses[ordered[k + 1]][m] - fitnesses[ordered[k - 1]][m]
            dist[ordered[k]] += gap / span
    return dist


def select_parents(pop: list[Individual], k: int, rng: random.Random) -> list[Individual]:
    """Binary tournament on (rank, crowding); final ties flip a fair coin."""
    pool: list[Individual] = []
    for _ in range(k):
        a = pop[rng.randrange(len(pop))]
        b = pop[rng.randrange(len(pop))]
        if a.rank != b.rank:
            pool.append(a if a.rank < b.rank else b)
        elif a.crowding != b.crowding:
            pool.append(a if a.crowding > b.crowding else b)
        else:
            pool.append(a if rng.random() < 0.5 else b)
    return pool


def crossover(a: Genes, b: Genes, pc: float, rng: random.Random) -> tuple[Genes, Genes]:
    """Uniform crossover: each child gene comes from one parent, its sibling
    takes the complement."""
    assert len(a) == len(b)
    if rng.random() >= pc:
        return tuple(a), tuple(b)
    c1, c2 = [], []
    for ga, gb in zip(a, b):
        if rng.random() < 0.5:
            c1.append(ga)
            c2.append(gb)
        else:
            c1.append(gb)
            c2.append(ga)
    return tuple(c1), tuple(c2)


def mutate(genes: Genes, pm: float, bounds: list[tuple[int, int]],
           rng: random.Random) -> Genes:
    """With probability pm apply one operator chosen by fair coin:
    uniform integer deltas (span/16, truncated into bounds) or a random
    reorder of one segment (moved genes clamped into their new slots)."""
    if rng.random() >= pm:
        return genes
    m = len(genes)
    out = list(genes)
    if rng.random() < 0.5:
        for i in range(m):
            if rng.random() < 1.0 / m:
                lo, hi = bounds[i]
                amp = max(1, (hi - lo) // 16)
                out[i] = min(max(out[i] + rng.randint(-amp, amp), lo), hi)
    else:
        if m >= 2:
            p = rng.randrange(m - 1)
            q = rng.randrange(p + 1, m)
            segment = out[p:q + 1]
            rng.shuffle(segment)
            out[p:q + 1] = segment
            for i in range(p, q + 1):
                lo, hi = bounds[i]
                out[i] = min(max(out[i], lo), hi)
    return tuple(out)


# ---------------------------------------------------------------------------
# fitness evaluation


@dataclass
class EvalContext:
    analysis: Analysis
    labels: list  # corpus.Label entries for this unit
    limits: Limits = field(default_factory=Limits)
    cache: dict[Genes, tuple[float, float]] = field(default_factory=dict)
    traces: dict[tuple, ExecTrace] = field(default_factory=dict)  # deduplicated union

    def remember(self, trace: ExecTrace) -> None:
        self.traces.setdefault(trace.signature(), trace)


def accuracy_of(findings: list[Finding], labels: list, census_total: int) -> float:
    """Detection-accuracy objective: matched label score mass over the label
    count; on unlabeled contracts, cleanliness (penalized per finding)."""
    if not labels:
        if not findings:
            return 1.0
        return 1.0 - min(1.0, len(findings) / max(1, census_total))
    total = 0.0
    for label in labels:
        best = 0.0
        for f in findings:
            if finding_matches_label(f, label):
                best = max(best, f.score)
        total += best
    return total / len(labels)


def evaluate(genes: Genes, ctx: EvalContext) -> tuple[float, float]:
    cached = ctx.cache.get(genes)
    if cached is not None:
        return cached
    trace, counters = execute(ctx.analysis.program, list(genes), ctx.limits)
    ctx.remember(trace)
    f2 = coverage(counters, ctx.analysis.census)
    findings = run_all(ctx.analysis.artifacts, [trace])
    f1 = accuracy_of(findings, ctx.labels, ctx.analysis.census.total)
    ctx.cache[genes] = (f1, f2)
    return (f1, f2)


# ---------------------------------------------------------------------------
# population initialization and the generation loop


def init_population(slots: list[InputSlot], specials: dict[int, list[int]],
                    cs: ConstraintSet, cfg: SearchConfig,
                    rng: random.Random) -> list[Individual]:
    """Random chromosomes, except a quarter seeded from special values
    (cycled so every harvested value appears in some seed individual)."""
    if not slots:
        raise InfeasibleConstraints("program has no input slots")
    n_seeded = cfg.pop_size // 4
    pop: list[Individual] = []
    attempts = 0
    j = 0
    while len(pop) < cfg.pop_size:
        attempts += 1
        if attempts > cfg.pop_size * 100:
            raise InfeasibleConstraints(
                f"no feasible chromosome in {attempts - 1} attempts")
        if j < n_seeded:
            genes = tuple(
                specials[s.index][(j + s.index) % len(specials[s.index])]
                for s in slots)
        else:
            genes = tuple(rng.randrange(s.bounds[0], s.bounds[1] + 1) for s in slots)
        repaired = enforce_constraints(genes, cs)
        if repaired is None:
            if j < n_seeded:
                j += 1  # this seed combination conflicts; fall through to random
            continue
        pop.append(Individual(genes=repaired))
        j += 1
    return pop


@dataclass
class SearchResult:
    front: list[Individual]
    population: list[Individual]
    history: dict[str, list[float]]
    generations: int
    traces: list[ExecTrace]
    initial_coverage: float  # generation-0 population average
    final_coverage: float  # best ever
    initial_accuracy: float
    final_accuracy: float
    seed: int


def _rank_population(pop: list[Individual]) -> list[list[int]]:
    fits = [ind.fitness for ind in pop]
    fronts = fast_nondominated_sort(fits)
    for depth, front in enumerate(fronts, start=1):
        dist = crowding_distance(front, fits)
        for i in front:
            pop[i].rank = depth
            pop[i].crowding = dist[i]
    return fronts


def _record(history: dict[str, list[float]], pop: list[Individual]) -> None:
    history["best_accuracy"].append(max(i.f1 for i in pop))
    history["best_coverage"].append(max(i.f2 for i in pop))
    history["avg_accuracy"].append(sum(i.f1 for i in pop) / len(pop))
    history["avg_coverage"].append(sum(i.f2 for i in pop) / len(pop))


def run(ctx: EvalContext, cfg: SearchConfig) -> SearchResult:
    """The full generation loop; deterministic for a fixed seed."""
    rng = random.Random(cfg.seed)
    slots = ctx.analysis.program.slots
    cs = build_constraints(ctx.analysis)
    pop = init_population(slots, ctx.analysis.specials, cs, cfg, rng)
    for ind in pop:
        ind.f1, ind.f2 = evaluate(ind.genes, ctx)
    _rank_population(pop)

    history: dict[str, list[float]] = {
        "best_accuracy": [], "best_coverage": [],
        "avg_accuracy": [], "avg_coverage": []}
    _record(history, pop)
    best_seen = (history["best_accuracy"][0], history["best_coverage"][0])
    stagnant = 0
    generations = 0

    for _gen in range(cfg.max_iters):
        pool = select_parents(pop, cfg.select_k, rng)
        offspring: list[Individual] = []
        attempts = 0
        while len(offspring) < cfg.pop_size:
            attempts += 1
            if attempts > cfg.pop_size * 100:
                while len(offspring) < cfg.pop_size:  # constraints too tight: clone
                    offspring.append(Individual(
                        genes=pool[len(offspring) % len(pool)].genes))
                break
            a = pool[rng.randrange(len(pool))]
            b = pool[rng.randrange(len(pool))]
            for child in crossover(a.genes, b.genes, cfg.crossover_rate, rng):
                mutated = mutate(child, cfg.mutation_rate, cs.bounds, rng)
                repaired = enforce_constraints(mutated, cs)
                if repaired is not None and len(offspring) < cfg.pop_size:
                    offspring.append(Individual(genes=repaired))
        for ind in offspring:
            ind.f1, ind.f2 = evaluate(ind.genes, ctx)

        union = pop + offspring
        fits = [ind.fitness for ind in union]
        fronts = fast_nondominated_sort(fits)
        survivors: list[Individual] = []
        for front in fronts:
            dist = crowding_distance(front, fits)
            if len(survivors) + len(front) <= cfg.pop_size:
                chosen = front
            else:
                room = cfg.pop_size - len(survivors)
                chosen = sorted(front, key=lambda i: (-dist[i], i))[:room]
            survivors.extend(chosen)
            if len(survivors) >= cfg.pop_size:
                break
        pop = [union[i] for i in survivors]
        _rank_population(pop)
        generations += 1
        _record(history, pop)

        now_best = (history["best_accuracy"][-1], history["best_coverage"][-1])
        if cfg.stagnation_window:
            if now_best == best_seen:
                stagnant += 1
                if stagnant >= cfg.stagnation_window:
                    break
            else:
                stagnant = 0
                best_seen = now_best
        else:
            best_seen = max(best_seen, now_best)

    front = sorted((ind for ind in pop if ind.rank == 1),
                   key=lambda i: (i.f1, i.f2, i.genes))
    return SearchResult(
        front=front, population=pop, history=history, generations=generations,
        traces=list(ctx.traces.values()),
        initial_coverage=history["avg_coverage"][0],
        final_coverage=max(history["best_coverage"]),
        initial_accuracy=history["avg_accuracy"][0],
        final_accuracy=max(history["best_accuracy"]),
        seed=cfg.seed)
