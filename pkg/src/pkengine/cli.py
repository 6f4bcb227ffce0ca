"""Command-line entry points for the full pipeline.

Every subcommand is a thin wrapper over the library; `serve` hosts the
review service.  Failures print a single machine-parsable line
``error: <message>`` on stderr and exit nonzero.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import synthetic
from .annotate import annotate as annotate_post
from .annotate import fragment, render_report
from .dataset import (
    AgreementPolicy,
    ReviewLog,
    ReviewState,
    export_dataset,
    finalize,
    load_posts,
    propose,
)
from .embeddings import (
    EmbeddingStore,
    KernelConfig,
    condition_key,
    fragment_key,
    hash_embed,
    hash_embedder,
    load_store,
    save_store,
)
from .engine import load_model, pk_checksum, predict, save_model, soft_label_distribution
from .errors import PkEngineError
from .metrics import evaluate
from .pk import parse_pk, validate_against_labels
from .prompting import HttpCompletionClient, PromptTemplate, ReplayClient, prompt_predict
from .training import TrainConfig, cross_entropy_loss, fit_gammas, train


def _load_pk(path: str):
    return parse_pk(Path(path).read_text(encoding="utf-8"))


def _kernel(kind: str, scale: float | None) -> KernelConfig:
    if kind in ("gauss", "gaussian"):
        if scale is None:
            raise PkEngineError("gaussian kernel requires --scale")
        return KernelConfig(kind="gaussian", scale=scale)
    return KernelConfig()


@click.group()
def cli():
    """Process-knowledge classification over text embeddings."""


@cli.command("parse-pk")
@click.argument("pk_file", type=click.Path(exists=True))
@click.option("--labels", default=None, help="Comma-separated dataset labels to validate against.")
def parse_pk_cmd(pk_file, labels):
    """Parse and validate a process-knowledge file."""
    pk = _load_pk(pk_file)
    if labels is not None:
        validate_against_labels(pk, set(labels.split(",")))
    click.echo(f"conditions: {len(pk.conditions)}")
    for cond in pk.conditions:
        click.echo(f"  {cond.id}: {cond.text}")
    click.echo(f"rules: {len(pk.rules)}")
    for rule in pk.rules:
        click.echo(f"  {rule.as_source()}")
    if pk.fallback_label is not None:
        click.echo(f"  else -> {pk.fallback_label}")
    click.echo(f"labels: {', '.join(pk.label_set)}")
    click.echo(f"checksum: {pk_checksum(pk)}")


@cli.command("embed")
@click.option("--input", "input_file", type=click.Path(exists=True), required=True,
              help='Line-delimited {"id", "text"} records.')
@click.option("--out", type=click.Path(), required=True)
@click.option("--dim", default=256, show_default=True)
@click.option("--seed", default=7, show_default=True)
@click.option("--pk", "pk_file", type=click.Path(exists=True), default=None,
              help="Also embed this pk's condition texts under cond:<id>.")
@click.option("--fragments", is_flag=True, help="Also embed 3-sentence fragments by content hash.")
def embed_cmd(input_file, out, dim, seed, pk_file, fragments):
    """Dump deterministic hash embeddings in the embedding file format."""
    posts = load_posts(input_file)
    store = EmbeddingStore(dim=dim, name=Path(out).stem)
    for post in posts:
        store.add(post.id, hash_embed(post.text, dim, seed))
    if fragments:
        for post in posts:
            for frag in fragment(post.id, post.text):
                key = fragment_key(frag.text)
                if key not in store:
                    store.add(key, hash_embed(frag.text, dim, seed))
    if pk_file is not None:
        pk = _load_pk(pk_file)
        for cond in pk.conditions:
            store.add(condition_key(cond.id), hash_embed(cond.text, dim, seed))
    save_store(store, out)
    click.echo(f"wrote {len(store)} embeddings of dim {dim} to {out}")


def _training_data(posts, store):
    data = []
    for post in posts:
        if post.gold_label is None:
            raise PkEngineError(f"post {post.id!r} has no label")
        data.append((store.get(post.id), post.gold_label))
    return data


@cli.command("train")
@click.option("--pk", "pk_file", type=click.Path(exists=True), required=True)
@click.option("--data", "data_file", type=click.Path(exists=True), required=True)
@click.option("--embeddings", type=click.Path(exists=True), required=True)
@click.option("--config", "config_file", type=click.Path(exists=True), default=None,
              help="JSON file mirroring the training config; explicit flags override it.")
@click.option("--optimizer", type=click.Choice(["grid", "newton"]), default="grid",
              show_default=True)
@click.option("--kernel", type=click.Choice(["cosine", "gauss", "gaussian"]), default="cosine",
              show_default=True)
@click.option("--scale", type=float, default=None, help="Gaussian kernel scale in [-1,1], nonzero.")
@click.option("--grid-step", type=float, default=0.001, show_default=True)
@click.option("--tau", type=float, default=0.05, show_default=True)
@click.option("--max-epochs", type=int, default=100, show_default=True)
@click.option("--batch-size", type=int, default=16, show_default=True)
@click.option("--early-stop-delta", type=float, default=0.001, show_default=True)
@click.option("--theta-init", type=click.Choice(["zeros", "random"]), default="zeros",
              show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--sentiment", "sentiment_file", type=click.Path(exists=True), default=None,
              help='Oracle verdicts, line-delimited {"id", "positive"}; enables gamma fitting.')
@click.option("--out", type=click.Path(), required=True)
@click.option("--report", "report_file", type=click.Path(), default=None)
@click.pass_context
def train_cmd(ctx, pk_file, data_file, embeddings, config_file, optimizer, kernel, scale,
              grid_step, tau, max_epochs, batch_size, early_stop_delta, theta_init, seed,
              sentiment_file, out, report_file):
    """Fit per-condition thresholds (and optionally sentiment bands)."""
    pk = _load_pk(pk_file)
    posts = load_posts(data_file)
    store = load_store(embeddings)
    values = {
        "optimizer": optimizer,
        "kernel": _kernel(kernel, scale),
        "grid_step": grid_step,
        "tau": tau,
        "max_epochs": max_epochs,
        "batch_size": batch_size,
        "early_stop_delta": early_stop_delta,
        "seed": seed,
        "theta_init": theta_init,
    }
    if config_file is not None:
        try:
            doc = json.loads(Path(config_file).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise PkEngineError(f"{config_file}: not valid JSON: {exc}")
        flag_of = {"optimizer": "optimizer", "grid_step": "grid_step", "tau": "tau",
                   "max_epochs": "max_epochs", "batch_size": "batch_size",
                   "early_stop_delta": "early_stop_delta", "hessian_epsilon": None,
                   "seed": "seed", "theta_init": "theta_init", "kernel": None}
        unknown = set(doc) - set(flag_of)
        if unknown:
            raise PkEngineError(f"{config_file}: unknown config keys: {', '.join(sorted(unknown))}")
        from click.core import ParameterSource

        def flag_given(name):
            return ctx.get_parameter_source(name) != ParameterSource.DEFAULT

        for key, value in doc.items():
            if key == "kernel":
                if not (flag_given("kernel") or flag_given("scale")):
                    values["kernel"] = KernelConfig.from_dict(value)
            elif key == "hessian_epsilon":
                values["hessian_epsilon"] = value
            elif not flag_given(flag_of[key]):
                values[key] = value  # explicit flags win over the file
    cfg = TrainConfig(**values)
    data = _training_data(posts, store)
    model, report = train(pk, data, store, cfg)
    if sentiment_file is not None:
        verdicts = {}
        with open(sentiment_file, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    rec = json.loads(line)
                    verdicts[rec["id"]] = bool(rec["positive"])
        model = fit_gammas(model, [(p.id, store.get(p.id)) for p in posts], store, verdicts, cfg)
    model.metadata["embedding_dim"] = store.dim
    save_model(model, out)
    if report_file is not None:
        Path(report_file).write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    click.echo(
        f"trained {optimizer}/{cfg.kernel.kind}: loss={report.final_loss:.6f} "
        f"epochs={report.epochs_run} converged={report.converged}"
    )
    click.echo(f"model written to {out}")


def _read_eval_records(path):
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                records.append((rec["id"], rec["text"], rec["label"], rec.get("conditions")))
            except (json.JSONDecodeError, KeyError) as exc:
                raise PkEngineError(f"{path}:{lineno}: malformed record: {exc}")
    if not records:
        raise PkEngineError(f"{path}: no records")
    return records


@cli.command("eval")
@click.option("--model", "model_file", type=click.Path(exists=True), required=True)
@click.option("--data", "data_file", type=click.Path(exists=True), required=True)
@click.option("--embeddings", type=click.Path(exists=True), required=True)
@click.option("--json", "json_out", type=click.Path(), default=None)
def eval_cmd(model_file, data_file, embeddings, json_out):
    """Evaluate a trained model: accuracy, AUC-ROC, per-label and per-condition."""
    model = load_model(model_file)
    store = load_store(embeddings)
    records = _read_eval_records(data_file)
    golds, preds, dists, cond_pairs = [], [], [], []
    for pid, _text, gold, conditions in records:
        x = store.get(pid)
        label, evals = predict(model, x, store)
        golds.append(gold)
        preds.append(label)
        dists.append(soft_label_distribution(model, x, store))
        if conditions:
            cond_pairs.append(({e.condition_id: e.satisfied for e in evals}, conditions))
    result = evaluate(golds, preds, dists, condition_truths=cond_pairs or None)
    majority = max(set(golds), key=golds.count)
    baseline = golds.count(majority) / len(golds)
    loss = cross_entropy_loss(model, [(store.get(r[0]), r[2]) for r in records], store)
    click.echo(result.format_table())
    click.echo(f"{'cross_entropy':<24}{loss:.6f}")
    click.echo(f"{'baseline(majority=' + majority + ')':<24}{baseline:.4f}")
    if json_out is not None:
        doc = result.to_dict()
        doc["cross_entropy"] = loss
        doc["majority_baseline"] = {"label": majority, "accuracy": baseline}
        Path(json_out).write_text(json.dumps(doc, indent=2) + "\n")


@cli.command("annotate")
@click.option("--model", "model_file", type=click.Path(exists=True), required=True)
@click.option("--post", "post_file", type=click.Path(exists=True), required=True)
@click.option("--embeddings", type=click.Path(exists=True), default=None)
@click.option("--dim", type=int, default=None,
              help="Hash embedder dim; defaults to the model's recorded embedding_dim, then 256.")
@click.option("--seed", default=7, show_default=True, help="Hash embedder seed (no --embeddings).")
@click.option("--format", "fmt", type=click.Choice(["human", "structured"]), default="human",
              show_default=True)
@click.option("--label-source", type=click.Choice(["post", "fragments"]), default="post",
              show_default=True)
def annotate_cmd(model_file, post_file, embeddings, dim, seed, fmt, label_source):
    """Explain one post: fragment-level condition tags plus the fired rule."""
    model = load_model(model_file)
    text = Path(post_file).read_text(encoding="utf-8").strip()
    store = load_store(embeddings) if embeddings else None
    if dim is None:
        dim = int(model.metadata.get("embedding_dim", 256))
    embedder = hash_embedder(store.dim if store else dim, seed)
    report = annotate_post(
        model, Path(post_file).stem, text,
        store=store, embedder=embedder, label_source=label_source,
    )
    click.echo(render_report(report, format=fmt))


@cli.command("build-dataset")
@click.option("--pk", "pk_file", type=click.Path(exists=True), required=True)
@click.option("--posts", "posts_file", type=click.Path(exists=True), default=None)
@click.option("--store", "store_files", type=click.Path(exists=True), multiple=True)
@click.option("--threshold", type=float, default=0.5, show_default=True)
@click.option("--log", "log_file", type=click.Path(), required=True)
@click.option("--finalize", "do_finalize", is_flag=True)
@click.option("--min-reviewers", type=int, default=3, show_default=True)
@click.option("--out", type=click.Path(), default=None)
@click.option("--report", "report_file", type=click.Path(), default=None)
def build_dataset_cmd(pk_file, posts_file, store_files, threshold, log_file, do_finalize,
                      min_reviewers, out, report_file):
    """Propose labels into a review log, or finalize a reviewed log."""
    pk = _load_pk(pk_file)
    log = ReviewLog(log_file)
    if do_finalize:
        state = ReviewState.from_log(pk, log)
        posts, rep = finalize(
            pk, list(state.tasks.values()), AgreementPolicy(min_reviewers=min_reviewers)
        )
        if out is None:
            raise PkEngineError("--finalize requires --out for the dataset file")
        export_dataset(posts, out)
        click.echo(
            f"finalized {rep.finalized}/{rep.total_tasks} "
            f"(retained {rep.retained}, edited {rep.edited}, ties {rep.excluded_ties})"
        )
        kappa = "n/a" if rep.kappa is None else f"{rep.kappa:.4f}"
        click.echo(f"kappa ({rep.kappa_statistic}): {kappa}")
        if report_file is not None:
            Path(report_file).write_text(json.dumps(rep.to_dict(), indent=2) + "\n")
        return
    if posts_file is None or not store_files:
        raise PkEngineError("proposal mode requires --posts and at least one --store")
    posts = load_posts(posts_file)
    stores = [load_store(path) for path in store_files]
    tasks = propose(pk, posts, stores, threshold=threshold)
    state = ReviewState.from_log(pk, log)
    for task in tasks:
        event = {"event": "task", "task": task.to_dict()}
        state.apply_event(event)
        log.append(event)
    flagged = sum(1 for t in tasks if t.proposal.mandatory_edit)
    click.echo(f"proposed {len(tasks)} tasks ({flagged} flagged for mandatory edit) -> {log_file}")


@cli.command("prompt-eval")
@click.option("--pk", "pk_file", type=click.Path(exists=True), required=True)
@click.option("--post", "post_file", type=click.Path(exists=True), required=True)
@click.option("--template", "template_file", type=click.Path(exists=True), default=None)
@click.option("--replay", "replay_file", type=click.Path(), default=None,
              help="Replay fixture; with --endpoint, records into it.")
@click.option("--endpoint", default=None, help="Completion endpoint URL for live calls.")
@click.option("--rate", type=float, default=None, help="Max requests per second.")
def prompt_eval_cmd(pk_file, post_file, template_file, replay_file, endpoint, rate):
    """Evaluate conditions by prompting a completion endpoint (or a replay fixture)."""
    from importlib import resources

    from .prompting import TokenBucket

    pk = _load_pk(pk_file)
    post = Path(post_file).read_text(encoding="utf-8").strip()
    if template_file is not None:
        template = PromptTemplate.load(template_file)
    else:
        template = PromptTemplate(
            resources.files("pkengine").joinpath("data/prompt_template.txt").read_text()
        )
    inner = None
    if endpoint is not None:
        bucket = TokenBucket(rate_per_second=rate) if rate else None
        inner = HttpCompletionClient(endpoint=endpoint, bucket=bucket)
    if replay_file is not None:
        client = ReplayClient(replay_file, inner=inner)
    elif inner is not None:
        client = inner
    else:
        raise PkEngineError("need --replay and/or --endpoint")
    result = prompt_predict(client, template, pk, post)
    click.echo(json.dumps(
        {
            "label": result.label,
            "verdicts": result.verdicts,
            "abstained": result.abstained,
            "sentiment": result.sentiment,
        },
        indent=2,
    ))


@cli.command("synth")
@click.option("--pk", "pk_file", type=click.Path(exists=True), required=True)
@click.option("--n", type=int, default=400, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), required=True)
def synth_cmd(pk_file, n, seed, out):
    """Generate a synthetic labeled corpus from condition-keyed templates."""
    pk = _load_pk(pk_file)
    corpus = synthetic.generate_corpus(pk, n, seed=seed)
    synthetic.write_corpus(corpus, out)
    click.echo(f"wrote {n} posts to {out}")


@cli.command("serve")
@click.option("--pk", "pk_file", type=click.Path(exists=True), required=True)
@click.option("--log", "log_file", type=click.Path(), required=True)
@click.option("--model", "model_file", type=click.Path(exists=True), default=None)
@click.option("--embeddings", type=click.Path(exists=True), default=None)
@click.option("--dim", default=256, show_default=True)
@click.option("--seed", default=7, show_default=True)
@click.option("--min-reviewers", type=int, default=1, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8351, show_default=True)
def serve_cmd(pk_file, log_file, model_file, embeddings, dim, seed, min_reviewers, host, port):
    """Run the review service over an existing task log."""
    import uvicorn

    from .service import ServiceState, create_app

    pk = _load_pk(pk_file)
    model = load_model(model_file) if model_file else None
    store = load_store(embeddings) if embeddings else None
    state = ServiceState.open(
        pk=pk,
        log_path=log_file,
        model=model,
        store=store,
        embedder=hash_embedder(store.dim if store else dim, seed),
        min_reviewers=min_reviewers,
    )
    uvicorn.run(create_app(state), host=host, port=port, log_level="warning")


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except click.Abort:
        return 130
    except FileNotFoundError as exc:
        click.echo(f"error: file not found: {exc.filename} (check the path)", err=True)
        return 1
    except PkEngineError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
