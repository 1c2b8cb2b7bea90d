"""Experiment runner: ``secpriv --experiment NAME [options]`` writes one CSV.

Every CSV starts with ``#`` metadata lines (experiment, seed, horizon,
false-alarm probability, scenario) followed by a header row. Output depends
only on the arguments, so identical invocations give identical bytes.

Exit status: 0 on success, 1 on usage or configuration errors, 2 when the
problem is well formed but numerically unsolvable.
"""

from __future__ import annotations

import argparse
import io
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from scipy import stats

from .chi2 import detection_probability
from .config import ScenarioConfig, builtin_config, load_config
from .detector import aggregate, batch_model, build_setup, detection_parameters, glrt, process, stack_attack
from .exceptions import InvalidInputError, NumericalError
from .privacy import assess, check_sufficient_condition, is_more_private
from .system import simulate
from .tradeoff import (
    admissible_region,
    build_noise_design,
    compare_mechanism_sets,
    extreme_attacks,
    solve_noise_design,
    strict_tradeoff_check,
)

EXPERIMENTS = (
    "pd-surface",
    "detect",
    "montecarlo",
    "privacy-compare",
    "tradeoff-map",
    "noise-sweep",
    "noise-design",
    "powergrid-demo",
)
CHUNK = 2000


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="secpriv", description="Attack detection under privacy-limited sharing: experiment runner.")
    p.add_argument("--experiment", required=True, choices=EXPERIMENTS)
    p.add_argument(
        "--config",
        default=None,
        help="scenario file, or a built-in name: masking, powergrid, random (default depends on experiment)",
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=10000, help="Monte Carlo batches per hypothesis")
    p.add_argument("--pfa", type=float, default=None, help="false-alarm probability (default from scenario)")
    p.add_argument("--horizon", type=int, default=None, help="batch length T (default from scenario)")
    p.add_argument("--out", default="-", help="output CSV path, '-' for stdout")
    p.add_argument("--workers", type=int, default=1, help="threads for Monte Carlo chunks")
    p.add_argument("--sigmas", type=_floats, default=[0.0, 0.5, 1.0, 2.0, 4.0], help="noise-sweep levels")
    p.add_argument("--epsilons", type=_floats, default=[0, 1, 2, 5, 10, 20, 50, 100], help="noise-design floors")
    p.add_argument("--qmax", type=int, default=20, help="largest q on the pd-surface grid")
    p.add_argument("--lambdas", type=_floats, default=[0, 1, 2, 5, 10, 20, 40, 80], help="pd-surface SNR grid")
    p.add_argument("--grid", type=_floats, default=None, help="tradeoff-map SNR grid")
    return p


def _scenario(args) -> ScenarioConfig:
    src = args.config
    if src is None:
        src = "masking" if args.experiment in ("detect", "montecarlo") else "powergrid"
    cfg = load_config(src) if Path(src).suffix == ".cfg" or Path(src).exists() else builtin_config(src)
    if args.horizon is not None:
        if cfg.attack is not None and args.horizon != cfg.horizon:
            vals = cfg.attack.values
            reps = int(np.ceil(args.horizon / vals.shape[0]))
            cfg.attack.values = np.tile(vals, (reps, 1))[: args.horizon]
        cfg.horizon = args.horizon
    if args.pfa is not None:
        cfg.p_false_alarm = args.pfa
    if not 0 < cfg.p_false_alarm < 1:
        raise UsageError("--pfa must lie in (0, 1)")
    if cfg.horizon < 1:
        raise UsageError("--horizon must be at least 1")
    cfg.extra["source"] = src
    return cfg


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class _Table:
    def __init__(self, meta: dict, columns):
        self.meta = meta
        self.columns = list(columns)
        self.rows = []
        self.notes = []

    def add(self, *vals):
        self.rows.append(vals)

    def render(self) -> str:
        buf = io.StringIO()
        buf.write("# " + " ".join(f"{k}={_fmt(v)}" for k, v in self.meta.items()) + "\n")
        for n in self.notes:
            buf.write(f"# {n}\n")
        buf.write(",".join(self.columns) + "\n")
        for r in self.rows:
            buf.write(",".join(_fmt(v) for v in r) + "\n")
        return buf.getvalue()


def _meta(args, cfg=None, **kw):
    m = {"experiment": args.experiment, "seed": args.seed}
    if cfg is not None:
        m.update(T=cfg.horizon, P_F=cfg.p_false_alarm, scenario=cfg.name or cfg.extra.get("source"))
    else:
        m.update(T="na", P_F=args.pfa if args.pfa is not None else 0.05)
    m.update(kw)
    return m


def _stacked_attack(cfg: ScenarioConfig):
    if cfg.attack is None or cfg.attack.target != cfg.detector:
        return np.zeros(cfg.horizon * cfg.system[cfg.detector].n)
    return stack_attack(cfg.system[cfg.detector].Ba, cfg.attack.values)


def _first_set(cfg):
    if not cfg.mechanism_sets:
        raise UsageError("scenario defines no mechanism set")
    return cfg.mechanism_sets[cfg.set_names[0]]


def exp_pd_surface(args):
    pfa = args.pfa if args.pfa is not None else 0.05
    if not 0 < pfa < 1:
        raise UsageError("--pfa must lie in (0, 1)")
    t = _Table(_meta(args, P_F=pfa), ["q", "lambda", "threshold", "p_detect"])
    t.meta["P_F"] = pfa
    for q in range(1, args.qmax + 1):
        for lam in args.lambdas:
            pt = detection_probability(q, lam, pfa)
            t.add(q, lam, pt.threshold, pt.p_detect)
    return t


def exp_detect(args):
    cfg = _scenario(args)
    rows = []
    for name, mechs in cfg.mechanism_sets.items():
        model = batch_model(cfg.system, mechs, cfg.horizon, cfg.detector)
        setup = build_setup(model)
        tr = simulate(cfg.system, cfg.attack, cfg.horizon, seed=args.seed)
        batch = aggregate(tr, mechs, cfg.detector, model=model)
        z = process(batch, setup)
        res = glrt(z, setup, cfg.p_false_alarm)
        q, lam = detection_parameters(setup, _stacked_attack(cfg))
        pd = detection_probability(q, lam, cfg.p_false_alarm).p_detect
        rows.append((name, q, res.statistic, res.threshold, res.decision, lam, pd))
    t = _Table(_meta(args, cfg), ["mechanisms", "q", "statistic", "threshold", "decision", "lambda", "p_detect"])
    for r in rows:
        t.add(*r)
    return t


def _mc_chunk(cfg, mechs, setup, model, attack, seed, n):
    tr = simulate(cfg.system, attack, cfg.horizon, seed=seed, n_trials=n)
    z = process(aggregate(tr, mechs, cfg.detector, model=model), setup)
    return int(np.count_nonzero(glrt(z, setup, cfg.p_false_alarm).alarm))


def _chunk_seeds(seed: int, n_chunks: int, stream: int) -> list[int]:
    ss = np.random.SeedSequence([seed, stream])
    return [int(c.generate_state(1, np.uint64)[0] >> 1) for c in ss.spawn(n_chunks)]


def exp_montecarlo(args):
    cfg = _scenario(args)
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    if args.workers < 1:
        raise UsageError("--workers must be at least 1")
    mechs = _first_set(cfg)
    model = batch_model(cfg.system, mechs, cfg.horizon, cfg.detector)
    setup = build_setup(model)
    a = _stacked_attack(cfg)
    q, lam = detection_parameters(setup, a)
    sizes = [CHUNK] * (args.trials // CHUNK) + ([args.trials % CHUNK] if args.trials % CHUNK else [])
    t = _Table(_meta(args, cfg, trials=args.trials, q=q), ["hypothesis", "trials", "alarms", "empirical", "ci_low", "ci_high", "analytic", "lambda"])
    cases = [("H0", None, 0.0, cfg.p_false_alarm)]
    if cfg.attack is not None:
        cases.append(("H1", cfg.attack, lam, detection_probability(q, lam, cfg.p_false_alarm).p_detect))
    for stream, (label, attack, lam_k, analytic) in enumerate(cases):
        seeds = _chunk_seeds(args.seed, len(sizes), stream)
        jobs = list(zip(seeds, sizes))
        with ThreadPoolExecutor(max_workers=args.workers) as ex:
            counts = list(ex.map(lambda sn: _mc_chunk(cfg, mechs, setup, model, attack, *sn), jobs))
        k = sum(counts)
        ci = stats.binomtest(k, args.trials).proportion_ci(0.95, method="wilson")
        t.add(label, args.trials, k, k / args.trials, ci.low, ci.high, analytic, lam_k)
    return t


def exp_privacy_compare(args):
    cfg = _scenario(args)
    names = cfg.set_names
    if len(names) < 1:
        raise UsageError("scenario defines no mechanism set")
    t = _Table(
        _meta(args, cfg),
        ["subsystem", "candidate", "reference", "trace_sigma_e_candidate", "trace_sigma_e_reference", "more_private", "reason", "sufficient_condition"],
    )
    for j in cfg.system.others(cfg.detector):
        sub = cfg.system[j]
        for b in range(len(names)):
            for a in range(len(names)):
                if a == b:
                    continue
                cand, ref = cfg.mechanism_sets[names[b]].get(j), cfg.mechanism_sets[names[a]].get(j)
                if cand is None or ref is None:
                    continue
                res = is_more_private(cand, ref, sub.C, sub.Sigma_v, cfg.horizon)
                tc = np.trace(assess(cand, sub.C, sub.Sigma_v, cfg.horizon).Sigma_e)
                tr = np.trace(assess(ref, sub.C, sub.Sigma_v, cfg.horizon).Sigma_e)
                t.add(j + 1, names[b], names[a], tc, tr, res.holds, res.reason, check_sufficient_condition(cand, ref))
    return t


def exp_tradeoff_map(args):
    cfg = _scenario(args)
    if len(cfg.set_names) < 2:
        raise UsageError("tradeoff-map needs two mechanism sets")
    n1, n2 = cfg.set_names[0], cfg.set_names[-1]
    rep = compare_mechanism_sets(
        cfg.system, cfg.mechanism_sets[n1], cfg.mechanism_sets[n2], cfg.horizon, cfg.p_false_alarm, detector=cfg.detector, check_order=False
    )
    grid = args.grid or list(np.linspace(0.0, 60.0, 31))
    pts = admissible_region(rep.Lambda1, rep.Lambda2, grid, rep.q1, rep.q2, cfg.p_false_alarm)
    t = _Table(
        _meta(args, cfg, reference=n1, private=n2, q_reference=rep.q1, q_private=rep.q2, mu_min=rep.mu_min, mu_max=rep.mu_max, mu_max_finite=rep.mu_max_finite),
        ["lambda_private", "lambda_reference", "admissible", "p_detect_reference", "p_detect_private", "better"],
    )
    names = {"case1": n1, "case2": n2}
    for p in pts:
        t.add(p.x, p.y, p.admissible, p.pd1, p.pd2, names[p.better] if p.admissible else "")
    t.notes.append(f"attack along the smallest-ratio direction: lambda_reference/lambda_private={rep.mu_min!r}")
    return t


def exp_noise_sweep(args):
    cfg = _scenario(args)
    base = _first_set(cfg)
    sw = strict_tradeoff_check(cfg.system, base, args.sigmas, _stacked_attack(cfg), cfg.p_false_alarm, cfg.horizon, cfg.detector)
    t = _Table(_meta(args, cfg, base=cfg.set_names[0], strictly_decreasing=sw.strictly_decreasing), ["sigma", "q", "lambda", "p_detect", "p_miss"])
    for row in zip(sw.sigmas, sw.q, sw.lam, sw.p_detect, sw.p_miss):
        t.add(*row)
    return t


def exp_noise_design(args):
    cfg = _scenario(args)
    base = _first_set(cfg)
    prob = build_noise_design(cfg.system, base, cfg.horizon, detector=cfg.detector)
    subs = [j + 1 for j in prob.subsystems]
    cols = ["epsilon", "cost"] + [f"block_cost_{j}" for j in subs] + [f"sigma_r_{j}" for j in subs]
    t = _Table(_meta(args, cfg, base=cfg.set_names[0], l1=prob.l1), cols)
    t.notes.append("sigma_r_j: optimal covariance of subsystem j, row-major, entries separated by spaces")
    for e in args.epsilons:
        if e < 0:
            raise UsageError("--epsilons must be nonnegative")
        sol = solve_noise_design(prob.with_epsilon(e))
        covs = [" ".join(repr(float(x)) for x in S.ravel()) for S in sol.Sigmas]
        t.add(e, sol.cost, *sol.block_costs, *covs)
    return t


def exp_powergrid_demo(args):
    from .powergrid import reference_scenario

    if args.config not in (None, "powergrid"):
        raise UsageError("powergrid-demo builds its own scenario; use --seed to redraw reactances")
    sc = reference_scenario(seed=args.seed)
    T = args.horizon or sc.horizon
    pfa = args.pfa if args.pfa is not None else sc.p_false_alarm
    if not 0 < pfa < 1:
        raise UsageError("--pfa must lie in (0, 1)")
    a = stack_attack(sc.system[0].Ba, np.full((T, 1), sc.attack.values[0, 0]))
    meta = {"experiment": args.experiment, "seed": args.seed, "T": T, "P_F": pfa, "scenario": "powergrid"}
    t = _Table(meta, ["row", "case", "sigma", "q", "lambda", "p_detect", "more_private_than_previous"])
    prev = None
    for k in sorted(sc.mechanisms):
        mechs = sc.mechanisms[k]
        st = build_setup(batch_model(sc.system, mechs, T))
        q, lam = detection_parameters(st, a)
        ordered = ""
        if prev is not None:
            ordered = all(check_sufficient_condition(mechs[j], prev[j]) for j in mechs)
        t.add("case", k, "", q, lam, detection_probability(q, lam, pfa).p_detect, ordered)
        prev = mechs
    sw = strict_tradeoff_check(sc.system, sc.mechanisms[0], args.sigmas, a, pfa, T)
    for s, q, lam, pd in zip(sw.sigmas, sw.q, sw.lam, sw.p_detect):
        t.add("noise", 0, s, q, lam, pd, "")
    rep = compare_mechanism_sets(sc.system, sc.mechanisms[0], sc.mechanisms[2], T, pfa)
    lo, _ = extreme_attacks(rep.Lambda1, rep.Lambda2)
    scale = np.sqrt(10.0 / float(lo @ rep.Lambda2 @ lo))
    rec = compare_mechanism_sets(sc.system, sc.mechanisms[0], sc.mechanisms[2], T, pfa, [scale * lo], check_order=False).records[0]
    t.notes.append(
        f"smallest-ratio attack: lambda0={rec.lam1!r} lambda2={rec.lam2!r} P_D0={rec.pd1!r} P_D2={rec.pd2!r} verdict={rec.verdict}"
    )
    return t


RUNNERS = {
    "pd-surface": exp_pd_surface,
    "detect": exp_detect,
    "montecarlo": exp_montecarlo,
    "privacy-compare": exp_privacy_compare,
    "tradeoff-map": exp_tradeoff_map,
    "noise-sweep": exp_noise_sweep,
    "noise-design": exp_noise_design,
    "powergrid-demo": exp_powergrid_demo,
}


def run(argv=None) -> tuple[int, str]:
    """Run one experiment; returns ``(exit_status, csv_text_or_message)``."""
    try:
        args = build_parser().parse_args(argv)
        text = RUNNERS[args.experiment](args).render()
    except UsageError as exc:
        return 1, f"secpriv: usage error: {exc}"
    except NumericalError as exc:
        return 2, f"secpriv: numerical error: {exc}"
    except InvalidInputError as exc:
        return 1, f"secpriv: invalid input: {exc}"
    return 0, text


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    if any(a in ("-h", "--help") for a in argv):
        build_parser().print_help()
        return 0
    status, text = run(argv)
    if status:
        print(text, file=sys.stderr)
        return status
    out = next((argv[i + 1] for i, a in enumerate(argv[:-1]) if a == "--out"), None)
    out = next((a.split("=", 1)[1] for a in argv if a.startswith("--out=")), out)
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        try:
            Path(out).write_text(text)
        except OSError as exc:
            print(f"secpriv: cannot write {out}: {exc.strerror}", file=sys.stderr)
            return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
