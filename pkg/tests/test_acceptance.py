"""End-to-end acceptance checks; each prints one PASS/FAIL line."""
import functools
import math
import time
from fractions import Fraction

import numpy as np

from cemads import bench, problems
from cemads.blackbox import FAILED, OK, BoundBox, Evaluation, evaluate, from_functions, violation
from cemads.cache import Cache, CacheEntry, best, dominates, elites, sort_by_best
from cemads.ce import ESCAPE, NORMAL, CeParams, CeSearch, ce_optimize
from cemads.cli import main
from cemads.mads import EvalRecord, MadsConfig, RunHistory, solve
from cemads.mesh import FAILURE, SUCCESS, init_mesh, on_mesh, poll_directions, poll_points, project, update_sizes


def bimodal(x):
    return float(-np.exp(-((x[0] - 2.0) ** 2)) - 0.8 * np.exp(-((x[0] + 2.0) ** 2)))


def test_1_standalone_ce_bimodal(verdict):
    p = from_functions("bimodal", bimodal, n=1)
    params = CeParams(n_s=50, n_e=10, alpha=0.7)
    t0 = time.perf_counter()
    hits = 0
    for seed in range(100):
        res = ce_optimize(p, params, [0.0], 10.0, np.random.default_rng(seed), 10**6, max_iter=20)
        hits += len(res.trace) <= 20 and abs(res.trace[-1].mu[0] - 2.0) <= 0.1
    elapsed = time.perf_counter() - t0
    ok = hits >= 90 and elapsed < 5.0
    verdict(1, ok, f"{hits}/100 seeds with |mu - 2| <= 0.1 within 20 iterations, {elapsed:.2f}s (need >= 90, < 5s)")
    assert ok


def brute_h(c, in_bounds, status):
    if not in_bounds or status != OK:
        return math.inf
    # exact rational sum of the rounded squares, rounded once
    total = sum((Fraction(max(v, 0.0) * max(v, 0.0)) for v in c), Fraction(0))
    h = float(total)
    return math.ulp(0.0) if h == 0.0 and any(v > 0 for v in c) else h


def test_2_violation_oracle(verdict):
    rng = np.random.default_rng(2)
    mismatches = 0
    for _ in range(1000):
        m = int(rng.integers(0, 12))
        c = rng.normal(scale=10.0 ** rng.integers(-3, 4), size=m)
        inside = bool(rng.random() < 0.9)
        status = OK if rng.random() < 0.95 else FAILED
        mismatches += violation(c, inside, status) != brute_h(c.tolist(), inside, status)
    bad_points = 0
    checked = 0
    for spec in problems.catalog():
        if spec.m == 0:
            continue
        p = spec.make()
        box = spec.sampling_box
        for x in rng.uniform(box.lower, box.upper, size=(1000, spec.n)):
            e = evaluate(p, x)
            feasible = e.status == OK and bool(np.all(x >= spec.bounds.lower) and np.all(x <= spec.bounds.upper))
            feasible = feasible and bool(np.all(e.c <= 0))
            bad_points += (e.h == 0.0) != feasible
            checked += 1
    ok = mismatches == 0 and bad_points == 0
    verdict(2, ok, f"{mismatches} h mismatches on 1000 vectors, {bad_points} h=0/feasibility disagreements on {checked} points")
    assert ok


def test_3_best_and_dominance(verdict):
    rng = np.random.default_rng(3)
    fs = np.array([-1.0, 0.0, 1.0, 2.0, 5.0, math.inf])
    hs = np.array([0.0, 0.0, 0.5, 1.0, 3.0, math.inf])

    def draw():
        return CacheEntry(np.zeros(1), float(rng.choice(fs)), float(rng.choice(hs)), int(rng.integers(0, 50)))

    violations = 0
    for _ in range(10_000):
        a, b, c = draw(), draw(), draw()
        violations += dominates(a, a)
        violations += best(a, a) is not a
        if a.gen != b.gen:
            violations += best(a, b) is not best(b, a)
        if (a.f, a.h) == (b.f, b.h) and a.gen != b.gen:
            older = a if a.gen < b.gen else b
            violations += best(a, b) is not older
        if dominates(a, b) and dominates(b, c):
            violations += not dominates(a, c)
    for _ in range(300):
        cache = Cache(head_size=4)
        for i in range(int(rng.integers(1, 40))):
            cache.insert(Evaluation(np.array([float(i)]), float(rng.choice(fs)), float(rng.choice(hs)), np.zeros(0)))
        n_e = int(rng.integers(1, 8))
        head = elites(cache, n_e)
        violations += head[0] is not functools.reduce(best, cache)
        violations += [e.gen for e in head] != [e.gen for e in sort_by_best(cache)[:n_e]]
    verdict(3, violations == 0, f"{violations} violations over 10^4 random triples and 300 caches")
    assert violations == 0


def test_4_mesh_invariants(verdict):
    rng = np.random.default_rng(4)
    violations = 0
    for _ in range(2000):
        n = int(rng.integers(1, 9))
        lo = rng.uniform(-100, 0, n)
        box = BoundBox(np.where(rng.random(n) < 0.3, -np.inf, lo), np.where(rng.random(n) < 0.3, np.inf, lo + rng.uniform(1, 200, n)))
        p = from_functions("p", lambda x: 0.0, n=n, bounds=box)
        start = np.where(np.isfinite(box.lower), box.lower, 0.0)
        ms = init_mesh(p, start)
        for _ in range(int(rng.integers(0, 40))):
            ms = update_sizes(ms, FAILURE if rng.random() < 0.7 else SUCCESS)
        x = ms.center + rng.normal(scale=10.0, size=n) * ms.Delta
        y = project(ms, x)
        violations += not np.array_equal(project(ms, y), y)
        dirs = poll_directions(ms, rng)
        D = np.array(dirs)
        violations += len(dirs) != 2 * n or np.linalg.matrix_rank(D[:n]) != n
        violations += not np.array_equal(D[n:], -D[:n])
        violations += sum(not on_mesh(ms, q) for q in poll_points(ms, dirs))
    p3 = from_functions("p", lambda x: 0.0, n=3, bounds=BoundBox([0.0, -np.inf, 0.0], [1.0, np.inf, 50.0]))
    base = init_mesh(p3, [0.5, 0.0, 1.0])
    n_seq = 100_000
    outcomes = rng.random((n_seq, 12)) < 0.5
    for row in outcomes:
        ms = base
        for s in row:
            ms = update_sizes(ms, SUCCESS if s else FAILURE)
            if np.any(ms.delta > ms.Delta) or np.any(ms.Delta > ms.Delta_init) or np.any(ms.delta <= 0):
                violations += 1
    verdict(4, violations == 0, f"{violations} violations over 2000 mesh states and {n_seq} update sequences")
    assert violations == 0


def test_5_mads_local_convergence(verdict):
    t0 = time.perf_counter()
    results = []
    sphere = from_functions("sphere", lambda x: float(x @ x), n=2)
    rosen = problems.get("ROSENBROCK")
    for seed in range(5):
        s = solve(sphere, [2.0, -1.5], MadsConfig(3000, seed)).best.f
        r = solve(rosen.make(), rosen.x0, MadsConfig(3000, seed)).best.f
        results.append((s, r))
    elapsed = time.perf_counter() - t0
    ok = all(s <= 1e-6 and r <= 1e-4 for s, r in results) and elapsed < 10.0
    worst_s = max(s for s, _ in results)
    worst_r = max(r for _, r in results)
    verdict(5, ok, f"worst sphere f {worst_s:.2e} (<= 1e-6), worst Rosenbrock f {worst_r:.2e} (<= 1e-4), {elapsed:.2f}s (< 10s)")
    assert ok


FEASIBILITY_PROBLEMS = ["CRESCENT", "SNAKE", "DISK", "HS83", "G2_10"]


def test_6_constrained_feasibility(verdict):
    inst = bench.make_instances(FEASIBILITY_PROBLEMS, 10, [0, 1, 2])
    hists = bench.run_campaign([bench.Algorithm("CE-MADS")], inst)
    per = {name: 0 for name in FEASIBILITY_PROBLEMS}
    for key, h in hists.items():
        per[key.problem] += h.best_feasible is not None
    frac = sum(per.values()) / len(hists)
    ok = frac >= 0.95
    detail = ", ".join(f"{k} {v}/30" for k, v in per.items())
    verdict(6, ok, f"h = 0 reached in {frac:.1%} of {len(hists)} runs ({detail}; need >= 95%)")
    assert ok


CAMPAIGN_PROBLEMS = ["RASTRIGIN", "GRIEWANK", "BRANIN", "SNAKE", "HS19", "MEZMONTES"]
MULTIMODAL = [n for n in CAMPAIGN_PROBLEMS if problems.get(n).multimodal]


def _final(hists, alg, subset):
    # data profile over the subset, with references from both algorithms
    sub = {k: h for k, h in hists.items() if k.problem in subset}
    return bench.profile_report(sub, 1e-3).curves[alg].final


def test_7_ce_search_advantage(verdict):
    t0 = time.perf_counter()
    inst = bench.make_instances(CAMPAIGN_PROBLEMS, 20, [0, 1, 2])
    hists = bench.run_campaign([bench.Algorithm("MADS", ce=False), bench.Algorithm("CE-MADS")], inst)
    elapsed = time.perf_counter() - t0
    mads, ce = _final(hists, "MADS", CAMPAIGN_PROBLEMS), _final(hists, "CE-MADS", CAMPAIGN_PROBLEMS)
    mads_mm, ce_mm = _final(hists, "MADS", MULTIMODAL), _final(hists, "CE-MADS", MULTIMODAL)
    ok = ce >= mads and ce_mm > mads_mm and elapsed < 600
    verdict(
        7,
        ok,
        f"final fraction at tau=1e-3: CE-MADS {ce:.4f} vs MADS {mads:.4f} (need >=); "
        f"multimodal {ce_mm:.4f} vs {mads_mm:.4f} (need >); {elapsed:.0f}s (< 600s)",
    )
    assert ok


def test_8_data_profile_oracle(verdict):
    rng = np.random.default_rng(8)
    mismatches = 0
    cases = 0
    for _ in range(50):
        hs = {}
        for p in range(4):
            n = int(rng.integers(1, 6))
            for alg in ["A", "B"]:
                for i in range(3):
                    length = int(rng.integers(1, 30))
                    fs = np.round(rng.normal(size=length), 1)
                    hs_ = rng.choice([0.0, 0.0, 2.0], size=length)
                    recs = [EvalRecord(j, np.zeros(n), float(f), float(h), "poll") for j, (f, h) in enumerate(zip(fs, hs_))]
                    hs[bench.RunKey(alg, f"P{p}", i, 0)] = RunHistory(f"P{p}", n, 0, 30, 0, records=recs)
        # one problem where every run is identical: f_fea = f_star
        same = [EvalRecord(j, np.zeros(2), 3.0, h, "poll") for j, h in enumerate([1.0, 0.0, 0.0])]
        for alg in ["A", "B"]:
            hs[bench.RunKey(alg, "SAME", 0, 0)] = RunHistory("SAME", 2, 0, 30, 0, records=list(same))
        for tau in [1e-1, 1e-3]:
            curves = bench.data_profile(hs, tau)
            t_max = curves["A"].points[-1][0]
            # recount: solve evaluation per run from a matrix of best feasible values
            solved = {}
            for prob in {k.problem for k in hs}:
                keys = [k for k in hs if k.problem == prob]
                fmat = {k: [r.f if r.h == 0.0 else math.inf for r in hs[k].records] for k in keys}
                firsts = [next(v for v in fmat[k] if v < math.inf) for k in keys if min(fmat[k]) < math.inf]
                if not firsts:
                    continue
                f_fea, f_star = max(firsts), min(min(v) for v in fmat.values())
                for k in keys:
                    running = np.minimum.accumulate(fmat[k])
                    ok_idx = np.nonzero((running < math.inf) & (f_fea - running >= (1 - tau) * (f_fea - f_star)))[0]
                    solved[k] = None if ok_idx.size == 0 else (int(ok_idx[0]) + 1, hs[k].n)
            for alg in ["A", "B"]:
                ks = [k for k in solved if k.algorithm == alg]
                want = [
                    (t, sum(1 for k in ks if solved[k] is not None and solved[k][0] <= t * (solved[k][1] + 1)) / len(ks))
                    for t in range(t_max + 1)
                ]
                cases += 1
                mismatches += list(curves[alg].points) != want
    verdict(8, mismatches == 0, f"{mismatches} mismatches against brute-force recount over {cases} curves")
    assert mismatches == 0


def _walled():
    return from_functions("walled", lambda x: float(np.sum(x**2)), lambda x: [abs(x[0] - 40.0) - 0.5], n=2, m=1)


def test_9_trigger_semantics(verdict):
    runs = []
    for name in ["ROSENBROCK", "SNAKE", "HS83", "G2_10", "MEZMONTES"]:
        spec = problems.get(name)
        for seed in range(3):
            runs.append(solve(spec.make(), spec.x0, MadsConfig(1000 * (spec.n + 1), seed, [CeSearch()])))
    for seed in range(3):
        runs.append(solve(_walled(), [0.0, 0.0], MadsConfig(600, seed, [CeSearch()])))
    bad = 0
    normal_acts = escapes = 0
    limit = CeParams().stall_limit
    for h in runs:
        acts = [e for e in h.events if e.get("type") == "ce_activation"]
        norms = [e["sigma_p_after"] for e in acts if e["mode"] == NORMAL]
        normal_acts += len(norms)
        bad += sum(a <= b for a, b in zip(norms, norms[1:]))
        for e in acts:
            if e["mode"] == ESCAPE:
                escapes += 1
                bad += e["infeasible_stall"] < limit
    ok = bad == 0 and escapes > 0
    verdict(9, ok, f"{bad} violations over {normal_acts} normal and {escapes} escape activations in {len(runs)} runs")
    assert ok


def test_10_determinism(verdict, tmp_path, capsys):
    logs = {}
    for problem in ["HS83", "SNAKE"]:
        for workers in ["1", "4"]:
            for rep in range(2):
                path = tmp_path / f"{problem}_{workers}_{rep}.jsonl"
                code = main(["solve", "--problem", problem, "--budget", "800", "--seed", "3", "--workers", workers, "--log", str(path)])
                assert code == 0
                logs[(problem, workers, rep)] = path.read_bytes()
    capsys.readouterr()
    distinct = {p: len({v for k, v in logs.items() if k[0] == p}) for p in ["HS83", "SNAKE"]}
    ok = all(v == 1 for v in distinct.values())
    verdict(10, ok, f"distinct logs per problem over workers 1/4 x 2 repeats: {distinct} (need 1 each)")
    assert ok
