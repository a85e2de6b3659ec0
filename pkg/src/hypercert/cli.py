"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data or numeric error. Error lines
on stderr start with ``USAGE:``, ``DATA:`` or ``NUMERIC:``.
"""
import argparse
import os
import sys

from . import synth
from .bounds import MODES, certificate_to_text, certify, inputs_from_weights
from .errors import DataError, NumericError
from .evalstats import savitzky_golay, pearson
from .experiment import load_study_config, read_rows, run_study, write_rows
from .hypergraph import ARCHS
from .models import prepare
from .perturb import PerturbTrialConfig, run_suite, write_report
from .train import TrainConfig, dataset_margin_loss, split_indices, train_model, write_log
from .weights import load_weights, save_weights

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _need_file(path, what):
    if not os.path.exists(path):
        raise DataError(f"{what} not found: {path}")


def _out_parent(path):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def cmd_gen_data(a):
    cfg = synth.GenConfig(model=a.model.upper(), N=a.n, p=a.p, blocks=a.blocks, p_in=a.p_in,
                          p_out=a.p_out, M_cap=a.m_cap, R_cap=a.r_cap, pool=a.pool,
                          num_classes=a.classes, d=a.dim, B_cap=a.b_cap, seed=a.seed)
    ds = synth.generate(cfg)
    man = synth.serialize(ds, a.out)
    p = man["pooled"]
    print(f"wrote {len(ds)} samples to {a.out}: max K={p['K']} M={p['M']} R={p['R']} D={p['D']}")


def _arch(name):
    for a in ARCHS:
        if a.lower() == name.lower():
            return a
    raise UsageError(f"unknown architecture {name!r}; choose from {', '.join(ARCHS)}")


def cmd_train(a):
    arch = _arch(a.arch)
    _need_file(a.dataset, "dataset")
    ds = synth.load(a.dataset)
    tc = TrainConfig(optimizer=a.optimizer, lr=a.lr, epochs=a.epochs, batch_size=a.batch,
                     l2=a.l2, gamma=a.gamma, seed=a.seed, L=a.l, hidden=a.hidden, alpha=a.alpha,
                     order_M=a.order)
    res = train_model(arch, ds.samples, tc, ds.manifest.get("num_classes"))
    _out_parent(a.out_weights)
    save_weights(res.weights, a.out_weights)
    if a.out_log:
        _out_parent(a.out_log)
        write_log(res.log, a.out_log)
    last = res.log[-1] if res.log else None
    msg = f"trained {arch} L={a.l} on {len(res.train_idx)} samples"
    if last:
        msg += f"; final ce={last['ce_loss']:.4g} train margin loss={last['train_margin_loss']:.4g}"
    print(msg)


def _train_split(w, n):
    meta = w.meta or {}
    if "seed" in meta and "split" in meta:
        tr, _, _ = split_indices(n, tuple(meta["split"]), int(meta["seed"]))
        return tr
    return list(range(n))


def cmd_certify(a):
    _need_file(a.weights, "weights file")
    _need_file(a.dataset, "dataset")
    w = load_weights(a.weights)
    if a.arch is not None and _arch(a.arch) != w.arch:
        raise DataError(f"--arch {a.arch} does not match weights architecture {w.arch}")
    ds = synth.load(a.dataset)
    tr = _train_split(w, len(ds))
    insts = [prepare(w.arch, ds.samples[i].hg, ds.samples[i].features, w.order_M) for i in tr]
    emp = dataset_margin_loss(w, insts, [ds.samples[i].label for i in tr], a.gamma)
    p = ds.pooled
    inp = inputs_from_weights(
        w, a.gamma, a.delta, a.train_size or len(tr), a.b or ds.manifest["B_cap"],
        a.stat_m or p["M"], a.stat_r or p["R"], p["D"] if a.stat_d is None else a.stat_d)
    cert = certify(inp, emp, a.mode)
    prov = {"weights": a.weights, "dataset_manifest_sha256": synth.manifest_hash(a.dataset),
            "mode": a.mode}
    _out_parent(a.out)
    with open(a.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(certificate_to_text(cert, prov))
    print(f"{w.arch} {a.mode} bound: empirical={emp:.4g} complexity=1e{cert.log10_complexity:.3f} "
          f"total={cert.total:.6g}")


def cmd_perturb(a):
    _need_file(a.weights, "weights file")
    _need_file(a.dataset, "dataset")
    w = load_weights(a.weights)
    if a.arch is not None and _arch(a.arch) != w.arch:
        raise DataError(f"--arch {a.arch} does not match weights architecture {w.arch}")
    ds = synth.load(a.dataset)
    chosen = ds.samples[:a.instances]
    pairs = [(w, prepare(w.arch, s.hg, s.features, w.order_M)) for s in chosen]
    cfg = PerturbTrialConfig(w.arch, a.trials, a.rho, a.seed)
    rep = run_suite(cfg, pairs)
    _out_parent(a.out)
    write_report(rep, a.out)
    print(f"{w.arch}: {len(rep.rows)} trials, satisfaction rate {rep.satisfaction_rate:.6g}, "
          f"max tightness {rep.max_tightness:.4g}")
    if rep.satisfaction_rate < 1.0:
        raise NumericError("measured drift exceeded the bound in some trials")


def cmd_correlate(a):
    _need_file(a.study_config, "study config")
    cfg = load_study_config(a.study_config, a.out_dir)
    for _, path in cfg.dataset_entries():
        _need_file(path, "dataset")
    rows, summary = run_study(cfg)
    bad = sum(r["status"] != "ok" for r in rows)
    print(f"{len(rows)} cells ({bad} failed); summary in {os.path.join(a.out_dir, 'summary.csv')}")
    for s in summary:
        print(f"  {s['arch']} L={s['L']}: r={s['r'] if s['r'] == '' else format(s['r'], '.3f')} n={s['n']}")


REPORT_FIELDS = ("arch", "L", "dataset", "empirical", "log10_bound", "empirical_smooth",
                 "log10_bound_smooth", "r")


def _smooth(ys, window, order):
    """Savitzky-Golay with the window shrunk to fit short groups."""
    w = min(window, len(ys) if len(ys) % 2 else len(ys) - 1)
    if w <= order:
        return list(ys)
    return savitzky_golay(ys, w, order)


def cmd_report(a):
    if a.smooth_window % 2 != 1 or a.smooth_window <= a.smooth_order or a.smooth_order < 0:
        raise UsageError("--smooth-window must be odd and larger than --smooth-order >= 0")
    _need_file(a.study_csv, "study table")
    rows = [r for r in read_rows(a.study_csv) if r.get("status") == "ok"]
    groups = {}
    for r in rows:
        groups.setdefault((r["arch"], int(r["L"])), []).append(r)
    out = []
    for key in sorted(groups):
        g = sorted(groups[key], key=lambda r: r["dataset"])
        emp = [float(r["empirical"]) for r in g]
        lb = [float(r["log10_bound"]) for r in g]
        se = _smooth(emp, a.smooth_window, a.smooth_order)
        sb = _smooth(lb, a.smooth_window, a.smooth_order)
        try:
            rr = pearson(lb, emp)
        except DataError:
            rr = ""
        for r, e, b, x, y in zip(g, emp, lb, se, sb):
            out.append({"arch": key[0], "L": key[1], "dataset": r["dataset"], "empirical": e,
                        "log10_bound": b, "empirical_smooth": float(x),
                        "log10_bound_smooth": float(y), "r": rr})
    _out_parent(a.out)
    write_rows(out, REPORT_FIELDS, a.out)
    print(f"wrote {len(out)} rows for {len(groups)} (arch, L) groups to {a.out}")


def build_parser():
    p = _Parser(prog="hypercert", description="Hypergraph neural network certificates.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("gen-data", help="generate a synthetic dataset")
    g.add_argument("--model", choices=["er", "sbm", "ER", "SBM"], required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--p", type=float, default=0.1)
    g.add_argument("--blocks", type=int, default=2)
    g.add_argument("--p-in", type=float, default=0.3)
    g.add_argument("--p-out", type=float, default=0.02)
    g.add_argument("--m-cap", type=int, required=True)
    g.add_argument("--r-cap", type=int, required=True)
    g.add_argument("--pool", type=int, required=True)
    g.add_argument("--classes", type=int, default=3)
    g.add_argument("--dim", type=int, default=8)
    g.add_argument("--b-cap", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_gen_data)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--arch", required=True)
    t.add_argument("--dataset", required=True)
    t.add_argument("--l", type=int, default=2)
    t.add_argument("--lr", type=float, default=0.01)
    t.add_argument("--epochs", type=int, default=100)
    t.add_argument("--batch", type=int, default=20)
    t.add_argument("--l2", type=float, default=1e-4)
    t.add_argument("--gamma", type=float, default=0.25)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--hidden", type=int, default=64)
    t.add_argument("--alpha", type=float, default=0.5)
    t.add_argument("--order", type=int, default=None)
    t.add_argument("--optimizer", choices=["SGD", "Adam"], default=None)
    t.add_argument("--out-weights", required=True)
    t.add_argument("--out-log", default=None)
    t.set_defaults(fn=cmd_train)

    c = sub.add_parser("certify", help="compute a bound certificate")
    c.add_argument("--arch", default=None)
    c.add_argument("--weights", required=True)
    c.add_argument("--dataset", required=True)
    c.add_argument("--gamma", type=float, default=0.25)
    c.add_argument("--delta", type=float, default=0.05)
    c.add_argument("--mode", choices=MODES, default="appendix")
    c.add_argument("--train-size", type=int, default=None, help="override m")
    c.add_argument("--stat-m", type=int, default=None, help="override pooled max hyperedge size")
    c.add_argument("--stat-r", type=int, default=None, help="override pooled max incident count")
    c.add_argument("--stat-d", type=int, default=None, help="override pooled max degree")
    c.add_argument("--b", type=float, default=None, help="override the feature norm cap")
    c.add_argument("--out", required=True)
    c.set_defaults(fn=cmd_certify)

    v = sub.add_parser("perturb-verify", help="check perturbation bounds empirically")
    v.add_argument("--arch", default=None)
    v.add_argument("--weights", required=True)
    v.add_argument("--dataset", required=True)
    v.add_argument("--trials", type=int, default=100)
    v.add_argument("--rho", type=float, default=1.0)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--instances", type=int, default=5)
    v.add_argument("--out", required=True)
    v.set_defaults(fn=cmd_perturb)

    r = sub.add_parser("correlate", help="run a study grid")
    r.add_argument("--study-config", required=True)
    r.add_argument("--out-dir", required=True)
    r.set_defaults(fn=cmd_correlate)

    s = sub.add_parser("report", help="smooth and tabulate a study")
    s.add_argument("--study-csv", required=True)
    s.add_argument("--smooth-window", type=int, default=5)
    s.add_argument("--smooth-order", type=int, default=2)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_report)
    return p


def dispatch(argv) -> int:
    parser = build_parser()
    try:
        if not argv:
            raise UsageError("no command given")
        args = parser.parse_args(argv)
        if getattr(args, "fn", None) is None:
            raise UsageError("no command given")
        args.fn(args)
    except UsageError as exc:
        sys.stderr.write(parser.format_usage())
        sys.stderr.write(f"USAGE: {exc}\n")
        return EXIT_USAGE
    except NumericError as exc:
        sys.stderr.write(f"NUMERIC: {exc}\n")
        return EXIT_DATA
    except DataError as exc:
        sys.stderr.write(f"DATA: {exc}\n")
        return EXIT_DATA
    return EXIT_OK


def main():
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
