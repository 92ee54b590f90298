"""``kglink`` command-line driver.

Every command that writes files builds them in a temporary sibling
directory and renames it into place only after ``manifest.json`` is
written, so an output directory is either complete or absent.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import shutil
import sys
import tempfile
from contextlib import contextmanager
from pathlib import Path

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
MANIFEST = "manifest.json"
MODEL_FILE = "model.json"
LATENT_KINDS = ("rescal", "emlp", "ermlp", "ntn", "se", "transe")
MODEL_KINDS = ("rescal-als",) + LATENT_KINDS + ("pra", "are", "additive", "stacked")
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


# config ---------------------------------------------------------------------

def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment, keys use ``-`` or ``_``."""
    out = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected 'key = value'")
        key, value = (x.strip() for x in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _parse_bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def apply_config(parser: argparse.ArgumentParser, values: dict) -> None:
    """Install config values as parser defaults so explicit flags still win."""
    actions = {a.dest: a for a in parser._actions}
    defaults = {}
    for key, value in values.items():
        action = actions.get(key)
        if action is None or key in ("command", "help", "config"):
            raise UsageError(f"unknown config key {key!r}")
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = _parse_bool(value)
        elif action.nargs in ("+", "*"):
            defaults[key] = [action.type(v) if action.type else v for v in value.split()]
        else:
            defaults[key] = action.type(value) if action.type else value
    parser.set_defaults(**defaults)


# artifacts --------------------------------------------------------------------

def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def versions() -> dict:
    import numpy
    import scipy

    from . import __version__, kernels

    return {
        "kglink": __version__, "numpy": numpy.__version__, "scipy": scipy.__version__,
        "python": platform.python_version(), "backend": kernels.BACKEND,
    }


def replay_args(args) -> dict:
    skip = {"out", "config", "force", "func", "manifest"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


@contextmanager
def artifact_dir(out, args, seeds: dict | None = None, force: bool = False):
    """Yield a temporary directory that becomes ``out`` once the block succeeds."""
    out = Path(out)
    if out.exists() and any(out.iterdir()) and not force:
        raise UsageError(f"{out} exists and is not empty (use --force to replace it)")
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        yield tmp
        files = {
            str(p.relative_to(tmp)): _sha256(p)
            for p in sorted(tmp.rglob("*")) if p.is_file()
        }
        manifest = {
            "format": "kglink-manifest",
            "version": 1,
            "command": args.command,
            "args": replay_args(args),
            "seed": args.seed,
            "derived_seeds": seeds or {},
            "versions": versions(),
            "files": files,
        }
        (tmp / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        if out.exists():
            shutil.rmtree(out)
        os.replace(tmp, out)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _abs(path) -> str:
    return str(Path(path).resolve())


# loading helpers ----------------------------------------------------------

def _load_graph_arg(path):
    from .graph import load_graph

    p = Path(path)
    if p.is_dir():
        p = p / "graph.npz"
    if not p.exists():
        raise DataError(f"no graph at {path}")
    return load_graph(p)


def load_split_dir(path):
    """``(full_graph, train_graph, (train, valid, test))`` from a split directory."""
    from .graph import read_split

    d = Path(path)
    if not (d / "split.json").exists():
        raise DataError(f"{path} is not a split directory")
    full = _load_graph_arg(d)
    parts, _ = read_split(d, full)
    return full, full.with_triples(parts[0]), parts


def _constraints(args, train_kg):
    from .graph import infer_type_constraints

    return infer_type_constraints(train_kg) if args.constraints == "infer" else None


def load_model_dir(path, train_kg):
    """Scorer object for a trained model directory."""
    from .fusion import StackedModel, load_additive, load_are
    from .graphfeat import PraScorer
    from .latent import load_model

    d = Path(path)
    if not (d / MODEL_FILE).exists():
        raise DataError(f"{path} is not a model directory")
    info = json.loads((d / MODEL_FILE).read_text())
    kind = info["kind"]
    if kind in ("rescal-als",) + LATENT_KINDS:
        model = load_model(d / "model.kglm")
        if (model.num_entities, model.num_relations) != (train_kg.num_entities, train_kg.num_relations):
            raise DataError("model dimensions do not match the graph")
        return model
    if kind == "pra":
        return PraScorer.load(d / "pra.json", train_kg)
    if kind == "are":
        return load_are(d, train_kg)
    if kind == "additive":
        return load_additive(d / "additive.npz", train_kg)
    if kind == "stacked":
        stacked = StackedModel.from_json(json.loads((d / "stacked.json").read_text()))
        bases = [load_model_dir(d / b, train_kg) for b in info["bases"]]
        return stacked.bind(bases)
    raise DataError(f"unknown model kind {kind!r}")


def _model_info(path) -> dict:
    p = Path(path) / MODEL_FILE
    if not p.exists():
        raise DataError(f"{path} is not a model directory")
    return json.loads(p.read_text())


def _split_for(args) -> str:
    """``--split`` if given, else the split recorded with the model."""
    if args.split:
        return args.split
    recorded = _model_info(args.model).get("split")
    if recorded is None:
        raise UsageError("no --split given and the model does not record one")
    return str(Path(args.model) / recorded)


# commands -----------------------------------------------------------------

def cmd_import(args) -> int:
    from .graph import ingest_triples, parse_triple_lines, save_graph

    rows = []
    for name in args.input:
        try:
            with open(name, encoding="utf-8") as fh:
                rows.extend(fields for _, fields in parse_triple_lines(fh))
        except OSError as exc:
            raise DataError(f"cannot read {name}: {exc}") from exc
    kg = ingest_triples(rows)
    with artifact_dir(args.out, args, force=args.force) as tmp:
        save_graph(tmp / "graph.npz", kg)
        _write_json(tmp / "summary.json", {
            "entities": kg.num_entities, "relations": kg.num_relations, "triples": len(kg),
        })
    print(f"imported {len(kg)} triples, {kg.num_entities} entities, "
          f"{kg.num_relations} relations -> {args.out}")
    return EXIT_OK


def cmd_split(args) -> int:
    from .graph import holdout_split, save_graph, write_split
    from .seeding import derive_seed

    kg = _load_graph_arg(args.graph)
    seed = derive_seed(args.seed, "split")
    try:
        parts = holdout_split(kg, args.ratios, seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    with artifact_dir(args.out, args, {"split": seed}, args.force) as tmp:
        save_graph(tmp / "graph.npz", kg)
        write_split(tmp, kg, parts, args.ratios, seed)
    print(f"split {len(kg)} triples into {[len(p) for p in parts]} -> {args.out}")
    return EXIT_OK


def _write_loss_csv(path: Path, trace, header="epoch,loss") -> None:
    lines = [header] + [f"{e},{v!r}" for e, v in enumerate(trace)]
    path.write_text("\n".join(lines) + "\n")


def _latent_config(args, kind):
    from .latent import ModelConfig

    dim = args.dim
    return ModelConfig(
        kind, dim,
        relation_dim=args.relation_dim or dim,
        hidden_a=args.hidden if args.hidden is not None else dim,
        hidden_b=args.hidden if args.hidden is not None else dim,
        hidden_c=args.hidden if args.hidden is not None else dim,
        nonlinearity=args.nonlinearity,
        distance=args.distance,
    )


def _train_into(tmp: Path, kind: str, args, full, train_kg, parts, seeds: dict) -> dict:
    """Fit one model of ``kind`` and write its files into ``tmp``; returns model.json."""
    from .seeding import derive_seed

    info = {"format": "kglink-model", "version": 1, "kind": kind}
    constraints = _constraints(args, train_kg)
    if kind == "rescal-als":
        from .latent import fit_rescal_als, save_model

        seeds["init"] = derive_seed(args.seed, "train", kind, "init")
        model, trace = fit_rescal_als(train_kg, args.dim, args.lambda_e, args.lambda_w,
                                      args.epochs, seeds["init"])
        save_model(tmp / "model.kglm", model)
        _write_loss_csv(tmp / "loss.csv", trace.losses, "iteration,loss")
        info["pinv_fallback"] = trace.pinv_fallback
    elif kind in LATENT_KINDS:
        from .latent import init_model, save_model
        from .sampling import EpochSampler
        from .training import TrainConfig, sgd_train

        seeds["init"] = derive_seed(args.seed, "train", kind, "init")
        seeds["sgd"] = derive_seed(args.seed, "train", kind, "sgd")
        model = init_model(_latent_config(args, kind), train_kg.num_entities,
                           train_kg.num_relations, seeds["init"])
        trace = []
        if args.epochs > 0:
            cfg = TrainConfig(loss=args.loss, learning_rate=args.lr, epochs=args.epochs,
                              l2=args.l2, regime=args.regime, seed=seeds["sgd"],
                              margin=args.margin, normalize_entities=args.normalize)
            sampler = EpochSampler(train_kg, args.regime, constraints, known=train_kg)
            model, trace = sgd_train(model, train_kg, sampler, cfg, constraints)
        save_model(tmp / "model.kglm", model)
        _write_loss_csv(tmp / "loss.csv", trace)
    elif kind == "pra":
        from .graphfeat import PraScorer, fit_pra
        from .sampling import build_training_set

        seeds["negatives"] = derive_seed(args.seed, "train", kind, "negatives")
        triples, labels = build_training_set(train_kg, "perturb", constraints,
                                             seeds["negatives"]).arrays()
        models, skipped = {}, []
        for k in range(train_kg.num_relations):
            sel = triples[:, 1] == k
            pos, neg = triples[sel & (labels == 1)], triples[sel & (labels == 0)]
            if len(pos) == 0 or len(neg) == 0:
                skipped.append(train_kg.relations[k])
                continue
            models[k] = fit_pra(train_kg, k, pos, neg, args.l1, max_length=args.max_length,
                                budget=args.budget, seed=derive_seed(args.seed, "pra-paths", k))
        PraScorer(models, train_kg).save(tmp / "pra.json")
        info["skipped_relations"] = skipped
        info["num_paths"] = int(sum(len(m.path_types) for m in models.values()))
    elif kind == "are":
        from .fusion import AreConfig, fit_are, save_are

        cfg = AreConfig(rank=args.dim, l1=args.l1, l2=args.l2, learning_rate=args.lr,
                        rounds=args.epochs, max_length=args.max_length, budget=args.budget,
                        seed=derive_seed(args.seed, "train", kind))
        seeds["are"] = cfg.seed
        model, trace = fit_are(train_kg, None, cfg)
        save_are(tmp, model)
        _write_loss_csv(tmp / "loss.csv", trace, "round,loss")
    elif kind == "additive":
        from .fusion import fit_additive, save_additive

        seeds["additive"] = derive_seed(args.seed, "train", kind)
        model, trace = fit_additive(train_kg, None, args.dim, args.lr, args.l2, args.epochs,
                                    seeds["additive"])
        save_additive(tmp / "additive.npz", model)
        _write_loss_csv(tmp / "loss.csv", trace)
    elif kind == "stacked":
        import numpy as np

        from .fusion import fit_stacker
        from .training import as_scorer, labeled_eval_set

        bases = [b for b in args.base.split(",") if b]
        if len(bases) < 2 or any(b not in MODEL_KINDS or b == "stacked" for b in bases):
            raise UsageError("--base needs two or more non-stacked model kinds, e.g. transe,pra")
        if len(parts[1]) == 0:
            raise DataError("stacking needs a non-empty validation split")
        names, scorers = [], []
        for n, b in enumerate(bases):
            sub = tmp / f"base-{n}-{b}"
            sub.mkdir()
            _write_json(sub / MODEL_FILE, _train_into(sub, b, args, full, train_kg, parts,
                                                      seeds.setdefault(f"base-{n}", {})))
            names.append(sub.name)
            scorers.append(load_model_dir(sub, train_kg))
        seeds["fusion"] = derive_seed(args.seed, "train", kind, "fusion")
        triples, labels = labeled_eval_set(parts[1], full, constraints, seeds["fusion"])
        S = np.column_stack([as_scorer(s)(triples) for s in scorers])
        stacked = fit_stacker(S, labels, names=names)
        _write_json(tmp / "stacked.json", stacked.to_json())
        info["bases"] = names
    else:
        raise UsageError(f"unknown model kind {kind!r}")
    return info


def cmd_train(args) -> int:
    full, train_kg, parts = load_split_dir(args.split)
    seeds: dict = {}
    with artifact_dir(args.out, args, seeds, args.force) as tmp:
        info = _train_into(tmp, args.model, args, full, train_kg, parts, seeds)
        # relative to the model directory; tmp and the final directory are siblings
        info["split"] = os.path.relpath(_abs(args.split), _abs(tmp))
        _write_json(tmp / MODEL_FILE, info)
    print(f"trained {args.model} -> {args.out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .seeding import derive_seed
    from .training import evaluate

    full, train_kg, parts = load_split_dir(_split_for(args))
    scorer = load_model_dir(args.model, train_kg)
    test = parts[{"test": 2, "valid": 1}[args.part]]
    if len(test) == 0:
        raise DataError(f"the {args.part} split is empty")
    seed = derive_seed(args.seed, "evaluate")
    report = evaluate(scorer, test, full, _constraints(args, train_kg),
                      filtered=not args.raw, seed=seed, both_sides=not args.object_only)
    metrics = report.to_dict()
    metrics["protocol"] = "raw" if args.raw else "filtered"
    metrics["part"] = args.part
    with artifact_dir(args.out, args, {"evaluate": seed}, args.force) as tmp:
        _write_json(tmp / "metrics.json", metrics)
        keys = sorted(metrics)
        (tmp / "metrics.tsv").write_text(
            "\t".join(keys) + "\n" + "\t".join(str(metrics[k]) for k in keys) + "\n")
        rows = ["subject\trelation\tobject\tobject_rank\tsubject_rank"]
        for n, t in enumerate(test):
            s, r, o = full.names(t)
            sub = report.subject_ranks[n] if report.subject_ranks else ""
            rows.append(f"{s}\t{r}\t{o}\t{report.object_ranks[n]}\t{sub}")
        (tmp / "ranks.tsv").write_text("\n".join(rows) + "\n")
    print(json.dumps({k: metrics[k] for k in ("auc_roc", "auc_pr", "mrr")}, sort_keys=True))
    return EXIT_OK


def cmd_predict(args) -> int:
    import numpy as np

    from .training import as_scorer

    full, train_kg, _ = load_split_dir(_split_for(args))
    scorer = as_scorer(load_model_dir(args.model, train_kg))
    if (args.subject is None) == (args.object is None):
        raise UsageError("give exactly one of --subject or --object")
    try:
        k = full.relation_id(args.relation)
        anchor = full.entity_id(args.subject if args.subject is not None else args.object)
    except KeyError as exc:
        raise DataError(f"unknown name {exc}") from exc
    ids = np.arange(full.num_entities)
    cands = np.empty((len(ids), 3), dtype=np.int64)
    if args.subject is not None:
        cands[:] = (anchor, k, 0)
        cands[:, 2] = ids
    else:
        cands[:] = (0, k, anchor)
        cands[:, 0] = ids
    scores = np.asarray(scorer(cands), dtype=np.float64)
    keep = ~train_kg.contains_many(cands) if args.exclude_known else np.ones(len(ids), bool)
    order = [i for i in np.lexsort((ids, -scores)) if keep[i]][: args.top]
    col = 2 if args.subject is not None else 0
    print("rank\tentity\tscore")
    for rank, i in enumerate(order, 1):
        print(f"{rank}\t{full.entities[cands[i, col]]}\t{float(scores[i])!r}")
    return EXIT_OK


def cmd_rules(args) -> int:
    from .graphfeat import pra_rules

    info = _model_info(args.model)
    full, train_kg, _ = load_split_dir(_split_for(args))
    model = load_model_dir(args.model, train_kg)
    if info["kind"] == "pra":
        pra = model.models
    elif info["kind"] == "are":
        pra = model.pra
    else:
        raise UsageError("rules needs a pra or are model")
    lines = []
    for k in sorted(pra):
        for text, weight in pra_rules(pra[k], train_kg):
            lines.append(f"{weight!r}\t{text}")
    text = "".join(line + "\n" for line in lines)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _relation_rows(model):
    import numpy as np

    layout = model.layout()
    names = sorted(n for n, owner in layout.items() if owner == "relation")
    return names, np.hstack([model.params[n].reshape(model.num_relations, -1) for n in names])


def cmd_export(args) -> int:
    info = _model_info(args.model)
    if info["kind"] not in ("rescal-als",) + LATENT_KINDS:
        raise UsageError("export-embeddings needs a latent model")
    full, train_kg, _ = load_split_dir(_split_for(args))
    model = load_model_dir(args.model, train_kg)
    E = model.params["E"]
    rel_names, R = _relation_rows(model)
    with artifact_dir(args.out, args, force=args.force) as tmp:
        for fname, names, M, what in (("entities.tsv", full.entities, E, "E"),
                                      ("relations.tsv", full.relations, R, "+".join(rel_names))):
            head = (f"# kglink-embeddings version=1 kind={model.kind} matrix={what} "
                    f"rows={M.shape[0]} cols={M.shape[1]}")
            body = ["\t".join([name] + [repr(float(v)) for v in row]) for name, row in zip(names, M)]
            (tmp / fname).write_text("\n".join([head] + body) + "\n", encoding="utf-8")
    print(f"exported {E.shape[0]} entity and {R.shape[0]} relation rows -> {args.out}")
    return EXIT_OK


def read_embeddings(path):
    """``(header_fields, names, matrix)`` from an exported TSV."""
    import numpy as np

    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("# kglink-embeddings"):
        raise DataError(f"{path}: missing embedding header")
    header = dict(kv.split("=", 1) for kv in lines[0].split()[2:])
    names, rows = [], []
    for line in lines[1:]:
        parts = line.split("\t")
        names.append(parts[0])
        rows.append([float(x) for x in parts[1:]])
    return header, names, np.array(rows, dtype=np.float64).reshape(len(rows), -1)


def cmd_pipeline(args) -> int:
    """import -> split -> train -> evaluate into one directory.

    Stages run inside the (temporary) output directory with relative
    paths, so their manifests do not depend on where the run happened.
    """
    inputs = [_abs(x) for x in args.input]
    for name in inputs:
        if not Path(name).is_file():
            raise DataError(f"no such input file: {name}")
    with artifact_dir(args.out, args, force=args.force) as tmp:
        common = ["--seed", str(args.seed)]
        if args.deterministic:
            common.append("--deterministic")
        steps = [
            ("graph", ["import", *inputs]),
            ("split", ["split", "graph", "--ratios", *map(str, args.ratios)]),
            ("model", ["train", "split", "--model", args.model, *_train_flags(args)]),
            ("eval", ["evaluate", "model", "--split", "split", "--part", args.part,
                      "--constraints", args.constraints] + (["--raw"] if args.raw else [])),
        ]
        cwd = os.getcwd()
        os.chdir(tmp)
        try:
            for name, argv in steps:
                code = run(argv + common + ["--out", name])
                if code != EXIT_OK:
                    raise _StageFailed(code, name)
        finally:
            os.chdir(cwd)
    print(f"pipeline finished -> {args.out}")
    return EXIT_OK


class _StageFailed(Exception):
    def __init__(self, code, stage):
        super().__init__(f"pipeline stage {stage!r} failed")
        self.code = code


_TRAIN_FLAGS = ("dim", "relation_dim", "hidden", "nonlinearity", "distance", "loss", "lr",
                "epochs", "l2", "l1", "regime", "margin", "lambda_e", "lambda_w", "max_length",
                "budget", "base", "constraints")


def _train_flags(args) -> list:
    out = []
    for key in _TRAIN_FLAGS:
        value = getattr(args, key)
        if value is None:
            continue
        out += [f"--{key.replace('_', '-')}", str(value)]
    if args.normalize:
        out.append("--normalize")
    return out


def cmd_replay(args) -> int:
    """Re-run the command recorded in a manifest with a new output directory."""
    try:
        manifest = json.loads(Path(args.manifest).read_text())
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read manifest {args.manifest}: {exc}") from exc
    if manifest.get("format") != "kglink-manifest":
        raise DataError(f"{args.manifest} is not a manifest")
    recorded = manifest["args"]
    parser = build_parser()
    ns = parser.parse_args([manifest["command"]] + _required_positionals(manifest["command"], recorded)
                           + ["--out", args.out])
    for key, value in recorded.items():
        setattr(ns, key, value)
    ns.out, ns.force, ns.config = args.out, args.force, None
    return ns.func(ns)


def _required_positionals(command, recorded) -> list:
    keys = {"import": ["input"], "split": ["graph"], "train": ["split"], "evaluate": ["model"],
            "export-embeddings": ["model"], "pipeline": ["input"]}.get(command)
    if keys is None:
        raise UsageError(f"command {command!r} cannot be replayed")
    out = []
    for key in keys:
        value = recorded[key]
        out += value if isinstance(value, list) else [value]
    return out


# parser -------------------------------------------------------------------

def _add_common(p, out_required=True):
    p.add_argument("--seed", type=int, default=0, help="top-level seed (default 0)")
    p.add_argument("--config", help="flat 'key = value' file; flags override it")
    p.add_argument("--threads", type=int, default=None, help="cap BLAS/OpenMP worker threads")
    p.add_argument("--deterministic", action="store_true",
                   help="single-threaded numerics for bit-identical replay")
    if out_required is not None:
        p.add_argument("--out", required=out_required, help="output directory")
        p.add_argument("--force", action="store_true", help="replace an existing output directory")


def _add_train_options(p):
    g = p.add_argument_group("model and training")
    g.add_argument("--model", choices=MODEL_KINDS, default="transe")
    g.add_argument("--dim", type=int, default=10, help="entity dimension / ARE rank")
    g.add_argument("--relation-dim", type=int, default=None)
    g.add_argument("--hidden", type=int, default=None, help="hidden sizes for MLP/NTN/SE models")
    g.add_argument("--nonlinearity", choices=("tanh", "identity"), default="tanh")
    g.add_argument("--distance", choices=("squared", "l1"), default="squared")
    g.add_argument("--loss", choices=("margin", "log", "squared"), default="margin")
    g.add_argument("--lr", type=float, default=0.05)
    g.add_argument("--epochs", type=int, default=50, help="epochs, ALS sweeps or ARE rounds")
    g.add_argument("--l2", type=float, default=0.0)
    g.add_argument("--l1", type=float, default=1e-3, help="PRA sparsity strength")
    g.add_argument("--regime", choices=("perturb", "lcwa", "cwa"), default="perturb")
    g.add_argument("--margin", type=float, default=1.0)
    g.add_argument("--normalize", action="store_true", help="project TransE entities to unit norm")
    g.add_argument("--lambda-e", type=float, default=0.0)
    g.add_argument("--lambda-w", type=float, default=0.0)
    g.add_argument("--max-length", type=int, default=2, help="PRA path length limit")
    g.add_argument("--budget", type=int, default=None, help="PRA path type budget")
    g.add_argument("--base", default="transe,pra", help="comma-separated kinds for stacking")
    g.add_argument("--constraints", choices=("none", "infer"), default="none")


def _add_eval_options(p):
    p.add_argument("--part", choices=("test", "valid"), default="test")
    p.add_argument("--raw", action="store_true", help="raw instead of filtered ranks")
    if "--constraints" not in p._option_string_actions:
        p.add_argument("--constraints", choices=("none", "infer"), default="none")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kglink", description="Knowledge graph link prediction.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("import", help="TSV or N-Triples -> binary graph")
    p.add_argument("input", nargs="+")
    _add_common(p)
    p.set_defaults(func=cmd_import)

    p = sub.add_parser("split", help="train/valid/test split")
    p.add_argument("graph", help="graph directory or .npz file")
    p.add_argument("--ratios", type=float, nargs=3, default=[0.8, 0.1, 0.1])
    _add_common(p)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="fit a model on a split's training part")
    p.add_argument("split")
    _add_train_options(p)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="ranking metrics on held-out triples")
    p.add_argument("model")
    p.add_argument("--split", default=None)
    p.add_argument("--object-only", action="store_true", help="rank objects only")
    _add_eval_options(p)
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="top completions for (s, r, ?) or (?, r, o)")
    p.add_argument("model")
    p.add_argument("--split", default=None)
    p.add_argument("--subject")
    p.add_argument("--relation", required=True)
    p.add_argument("--object")
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--exclude-known", action="store_true", help="drop training triples")
    _add_common(p, out_required=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("rules", help="PRA paths as weighted Horn clauses")
    p.add_argument("model")
    p.add_argument("--split", default=None)
    _add_common(p, out_required=None)
    p.add_argument("--out", default=None, help="write rules to a file instead of stdout")
    p.set_defaults(func=cmd_rules)

    p = sub.add_parser("export-embeddings", help="entity and relation matrices as TSV")
    p.add_argument("model")
    p.add_argument("--split", default=None)
    _add_common(p)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("pipeline", help="import, split, train and evaluate in one run")
    p.add_argument("input", nargs="+")
    p.add_argument("--ratios", type=float, nargs=3, default=[0.8, 0.1, 0.1])
    _add_train_options(p)
    _add_eval_options(p)
    _add_common(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("replay", help="re-run a recorded manifest")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_replay, seed=None, config=None, threads=None, deterministic=False)
    return parser


def _set_threads(argv) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--threads", type=int, default=None)
    pre.add_argument("--deterministic", action="store_true")
    known, _ = pre.parse_known_args(argv)
    threads = 1 if known.deterministic else known.threads
    if threads is not None:
        for var in THREAD_VARS:
            os.environ[var] = str(max(int(threads), 1))


def _parse(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        sub = parser._subparsers._group_actions[0].choices[args.command]
        apply_config(sub, read_config(args.config))
        args = parser.parse_args(argv)
    return args


def run(argv) -> int:
    """Parse ``argv`` and run the command; returns the exit status."""
    try:
        args = _parse(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"kglink: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"kglink: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    from numpy.linalg import LinAlgError

    from .fusion import AreDiverged
    from .graph import ParseError
    from .training import TrainingDiverged

    try:
        return args.func(args)
    except _StageFailed as exc:
        print(f"kglink: {exc}", file=sys.stderr)
        return exc.code
    except UsageError as exc:
        print(f"kglink: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingDiverged, AreDiverged, LinAlgError, FloatingPointError) as exc:
        print(f"kglink: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, ParseError, FileNotFoundError, KeyError, IndexError, ValueError) as exc:
        print(f"kglink: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    _set_threads(argv)
    return run(argv)


if __name__ == "__main__":
    sys.exit(main())
