"""Command-line interface: prepare, train, evaluate, oracle-check, sweep.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure. `--threads` must take effect before numpy loads its BLAS, so the
heavy modules are imported inside the commands.
"""

from __future__ import annotations

import dataclasses
import json
import os
import sys
from pathlib import Path

import click

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _set_threads(n):
    if n is None:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def _fail(code, message):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_config_file(path):
    import yaml

    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        _fail(EXIT_CONFIG, f"{path}: config must be a mapping")
    return data


def _build_train_config(config_path, overrides):
    from .errors import ConfigError
    from .training import TrainConfig

    values = _load_config_file(config_path) if config_path else {}
    fields = {f.name for f in dataclasses.fields(TrainConfig)}
    unknown = set(values) - fields
    if unknown:
        _fail(EXIT_CONFIG, f"unknown config keys: {sorted(unknown)}")
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return TrainConfig(**values).validate()
    except ConfigError as exc:
        _fail(EXIT_CONFIG, str(exc))


def _load_dataset(data_train, data_valid, data_test, pair_format, seed):
    from .data import assemble, load_adjacency_list, load_pair_list
    from .errors import DataFormatError

    load = load_pair_list if pair_format else load_adjacency_list
    try:
        train = load(data_train)
        valid = load(data_valid) if data_valid else None
        test = load(data_test) if data_test else None
    except FileNotFoundError as exc:
        _fail(EXIT_DATA, str(exc))
    except DataFormatError as exc:
        _fail(EXIT_DATA, str(exc))
    return assemble(train, valid=valid, test=test, seed=seed)


def _data_options(fn):
    opts = [
        click.option("--data-train", required=True, type=click.Path(), help="Train interactions file."),
        click.option("--data-valid", type=click.Path(), help="Validation interactions file."),
        click.option("--data-test", type=click.Path(), help="Test interactions file."),
        click.option("--pair-format", is_flag=True,
                     help="Files are `user item` pairs instead of adjacency lists."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _train_options(fn):
    opts = [
        click.option("--config", "config_path", type=click.Path(exists=True),
                     help="YAML config; CLI flags override it."),
        click.option("--lambda", "lam", type=float, default=None, help="User-item constraint weight."),
        click.option("--gamma", type=float, default=None, help="Item-item constraint weight."),
        click.option("--K", "neighbors", type=int, default=None, help="Neighbors per item."),
        click.option("--R", "negatives", type=int, default=None, help="Negatives per positive."),
        click.option("--dim", type=int, default=None, help="Embedding dimension."),
        click.option("--lr", type=float, default=None),
        click.option("--batch-size", type=int, default=None),
        click.option("--reg", type=float, default=None, help="Weight decay."),
        click.option("--epochs", "max_epochs", type=int, default=None),
        click.option("--patience", type=int, default=None),
        click.option("--init-std", type=float, default=None),
        click.option("--seed", type=int, default=None),
        click.option("--use-item-pair-loss", is_flag=True, default=None,
                     help="Ablation: tie positive items to their neighbors instead of the user."),
        click.option("--use-user-user-loss", is_flag=True, default=None,
                     help="Ablation: add the user-user constraint loss."),
        click.option("--strict-negatives", is_flag=True, default=None,
                     help="Exclude the user's full train history when sampling negatives."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


@click.group()
@click.option("--threads", type=int, default=None,
              help="BLAS/OpenMP thread cap; 1 guarantees reproducibility.")
def main(threads):
    """Embedding-based recommendation via graph-convolution limit constraints."""
    _set_threads(threads)


@main.command()
@_data_options
@click.option("--K", "neighbors", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--output-dir", type=click.Path(), default="out", show_default=True)
@click.option("--cache/--no-cache", default=True, show_default=True,
              help="Cache the neighbor index keyed by dataset hash and K.")
def prepare(data_train, data_valid, data_test, pair_format, neighbors, seed,
            output_dir, cache):
    """Build and cache the graph structures; print dataset statistics."""
    from . import graph as graph_mod
    from .reporting import write_manifest

    dataset = _load_dataset(data_train, data_valid, data_test, pair_format, seed)
    bipartite = graph_mod.build_graph(dataset)
    index = graph_mod.load_neighbor_index(dataset, neighbors) if cache else None
    if index is None:
        co = graph_mod.build_cooccurrence(bipartite)
        index = graph_mod.build_neighbor_index(co, neighbors)
        if cache:
            path = graph_mod.save_neighbor_index(index, dataset)
            click.echo(f"neighbor index cached at {path}")
    manifest_path = write_manifest(dataset, Path(output_dir) / "manifest.json")
    stats = dataset.manifest()
    click.echo(f"users:        {stats['num_users']}")
    click.echo(f"items:        {stats['num_items']}")
    click.echo(f"interactions: {stats['num_interactions']}")
    click.echo(f"density:      {stats['density']:.3%}")
    click.echo(f"manifest written to {manifest_path}")


@main.command()
@_data_options
@_train_options
@click.option("--checkpoint", type=click.Path(), default="out/model.ckpt",
              show_default=True, help="Where to write the best checkpoint.")
@click.option("--output-dir", type=click.Path(), default="out", show_default=True)
def train(data_train, data_valid, data_test, pair_format, config_path,
          checkpoint, output_dir, **overrides):
    """Train embeddings; write the best checkpoint, a line-JSON log, and figures."""
    from .errors import NumericError
    from .reporting import plot_training_curves
    from .training import fit

    config = _build_train_config(config_path, overrides)
    dataset = _load_dataset(data_train, data_valid, data_test, pair_format, config.seed)
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "train_log.jsonl"
    try:
        with open(log_path, "w") as log_file:
            model, log = fit(dataset, config, log_file=log_file,
                             progress=lambda r: click.echo(json.dumps(r)))
    except NumericError as exc:
        _fail(EXIT_NUMERIC, str(exc))
    Path(checkpoint).parent.mkdir(parents=True, exist_ok=True)
    model.save(checkpoint)
    figure = plot_training_curves(log, out / "train_curves.png")
    click.echo(f"checkpoint: {checkpoint}")
    click.echo(f"log:        {log_path}")
    click.echo(f"figure:     {figure}")


@main.command()
@_data_options
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--cutoffs", default="20", show_default=True,
              help="Comma-separated ranking cutoffs.")
@click.option("--split", type=click.Choice(["valid", "test"]), default="test",
              show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--output-dir", type=click.Path(), default="out", show_default=True)
def evaluate(data_train, data_valid, data_test, pair_format, checkpoint,
             cutoffs, split, seed, output_dir):
    """Rank all candidate items per user and report Recall@K / NDCG@K."""
    from .errors import DataFormatError
    from .evaluation import EvalError, evaluate as run_eval
    from .model import EmbeddingModel
    from .reporting import write_eval_report

    try:
        ks = [int(tok) for tok in cutoffs.split(",") if tok.strip()]
    except ValueError:
        _fail(EXIT_CONFIG, f"bad --cutoffs value {cutoffs!r}")
    dataset = _load_dataset(data_train, data_valid, data_test, pair_format, seed)
    try:
        model = EmbeddingModel.load(checkpoint)
    except DataFormatError as exc:
        _fail(EXIT_DATA, str(exc))
    if model.user_embeddings.shape[0] != dataset.num_users or \
            model.item_embeddings.shape[0] != dataset.num_items:
        _fail(EXIT_DATA, "checkpoint shape does not match the dataset")
    try:
        report = run_eval(model, dataset, cutoffs=ks, split=split)
    except EvalError as exc:
        _fail(EXIT_DATA, str(exc))
    write_eval_report(report, output_dir, stem=f"eval_{split}")
    click.echo(report.to_table())


@main.command("oracle-check")
@click.option("--graphs", type=int, default=20, show_default=True,
              help="Number of random graphs per suite.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--max-nodes", type=int, default=50, show_default=True)
@click.option("--graph-file", type=click.Path(exists=True), default=None,
              help="Optional edge list `a b` per line, checked in addition.")
def oracle_check(graphs, seed, max_nodes, graph_file):
    """Verify the propagation-limit closed form and the dot-product expansion."""
    import numpy as np

    from . import propagation as prop

    rng = np.random.default_rng(seed)
    failures = 0
    worst_gap, worst_residual = 0.0, 0.0
    for _ in range(graphs):
        n = int(rng.integers(2, max_nodes + 1))
        g = prop.random_connected_graph(n, rng)
        steps, gap = prop.steps_to_limit(g)
        worst_gap = max(worst_gap, gap)
        if steps is None:
            failures += 1
            click.echo(f"FAIL convergence: n={n} gap={gap:.3e}")
    for _ in range(graphs):
        nu = int(rng.integers(1, 11))
        ni = int(rng.integers(1, 11))
        g = prop.random_bipartite_graph(nu, ni, rng)
        emb = rng.standard_normal((g.num_nodes, 8))
        u = int(rng.integers(0, nu))
        i = nu + int(rng.integers(0, ni))
        residual = prop.dot_decomposition_check(g, emb, u, i, num_users=nu)
        worst_residual = max(worst_residual, residual)
        if residual > 1e-10:
            failures += 1
            click.echo(f"FAIL decomposition: residual={residual:.3e}")
    if graph_file:
        edges = [tuple(map(int, line.split())) for line in
                 Path(graph_file).read_text().splitlines() if line.strip()]
        n = max(max(e) for e in edges) + 1
        a = np.zeros((n, n))
        for u, v in edges:
            a[u, v] = a[v, u] = 1.0
        np.fill_diagonal(a, 0.0)
        g = prop.DenseGraph(adjacency=a)
        steps, gap = prop.steps_to_limit(g)
        worst_gap = max(worst_gap, gap)
        if steps is None:
            failures += 1
            click.echo(f"FAIL convergence on {graph_file}: gap={gap:.3e}")
    click.echo(f"max limit gap:        {worst_gap:.3e}")
    click.echo(f"max residual:         {worst_residual:.3e}")
    click.echo("PASS" if failures == 0 else f"FAIL ({failures} checks)")
    if failures:
        sys.exit(EXIT_NUMERIC)


@main.command()
@_data_options
@_train_options
@click.option("--lambda-grid", default="0.5,1.0", show_default=True)
@click.option("--gamma-grid", default="1.0,2.5", show_default=True)
@click.option("--k-grid", default=None, help="Optional neighbor-count grid.")
@click.option("--output-dir", type=click.Path(), default="out", show_default=True)
def sweep(data_train, data_valid, data_test, pair_format, config_path,
          lambda_grid, gamma_grid, k_grid, output_dir, **overrides):
    """Grid sweep over the loss weights; emit a CSV and a figure of results."""
    from . import graph as graph_mod
    from .errors import NumericError
    from .evaluation import evaluate as run_eval
    from .reporting import plot_sweep, write_sweep_csv
    from .training import fit

    def _grid(text):
        try:
            return [float(tok) for tok in text.split(",") if tok.strip()]
        except ValueError:
            _fail(EXIT_CONFIG, f"bad grid {text!r}")

    base = _build_train_config(config_path, overrides)
    lams = _grid(lambda_grid)
    gammas = _grid(gamma_grid)
    ks = [int(v) for v in _grid(k_grid)] if k_grid else [base.neighbors]
    dataset = _load_dataset(data_train, data_valid, data_test, pair_format, base.seed)
    bipartite = graph_mod.build_graph(dataset)
    co = graph_mod.build_cooccurrence(bipartite)
    rows = []
    for k in ks:
        index = graph_mod.build_neighbor_index(co, k) if k >= 1 else None
        for lam in lams:
            for gamma in gammas:
                cfg = dataclasses.replace(base, lam=lam, gamma=gamma, neighbors=k)
                try:
                    model, _ = fit(dataset, cfg, bipartite=bipartite, index=index)
                except NumericError as exc:
                    _fail(EXIT_NUMERIC, str(exc))
                report = run_eval(model, dataset, cutoffs=[20], split="test")
                row = {"lam": lam, "gamma": gamma, "K": k,
                       "recall@20": report.recall[20], "ndcg@20": report.ndcg[20]}
                rows.append(row)
                click.echo(json.dumps(row))
    out = Path(output_dir)
    csv_path = write_sweep_csv(rows, out / "sweep.csv")
    fig_path = plot_sweep(rows, out / "sweep.png")
    click.echo(f"csv:    {csv_path}")
    click.echo(f"figure: {fig_path}")


if __name__ == "__main__":
    main()
