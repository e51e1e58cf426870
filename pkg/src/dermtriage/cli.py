"""Command line interface.

Exit codes: 0 on success, 1 when some work failed (partial batch
failures, runtime errors), 2 for usage or configuration problems.
"""

from __future__ import annotations

import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click

from .datasetio import SplitSpec, load_manifest, stratified_split, write_manifest
from .ensemble import average_distribution, vote
from .errors import (
    ConfigurationError,
    DermTriageError,
    ParameterError,
    ParseError,
)
from .imaging import NlmParams, denoise_nlm, equalize_histogram, load_image, resize, save_image
from .inference import image_key, load_roster, predict_all
from .llmclient import LlmConfig, StubTransport
from .metrics import load_predictions, rates_table, render_rates, render_summary, summarize

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


def _fail(message, code):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _guard(fn):
    """Run fn, mapping package errors onto exit codes."""
    try:
        return fn()
    except (ConfigurationError, ParameterError) as exc:
        _fail(str(exc), 2)
    except DermTriageError as exc:
        _fail(str(exc), 1)


@click.group()
def main():
    """Skin lesion triage tools."""


def _pipeline(arr, *, denoise, nlm, equalize, size):
    if denoise:
        arr = denoise_nlm(arr, nlm)
    if equalize:
        arr = equalize_histogram(arr)
    return resize(arr, size, size)


@main.command()
@click.argument("input_dir", type=click.Path(exists=True, file_okay=False))
@click.argument("output_dir", type=click.Path(file_okay=False))
@click.option("--no-denoise", is_flag=True, help="Skip denoising.")
@click.option("--nlm-h", type=float, default=0.1, show_default=True)
@click.option("--patch", type=int, default=3, show_default=True, help="Patch radius.")
@click.option("--search", type=int, default=10, show_default=True, help="Search radius.")
@click.option("--no-equalize", is_flag=True, help="Skip histogram equalization.")
@click.option("--size", type=int, default=224, show_default=True)
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def preprocess(
    input_dir, output_dir, no_denoise, nlm_h, patch, search, no_equalize,
    size, workers, as_json,
):
    """Denoise, equalize, and resize every image in INPUT_DIR."""
    try:
        nlm = NlmParams(patch_radius=patch, search_radius=search, h=nlm_h)
        if size < 1 or workers < 1:
            raise ParameterError("--size and --workers must be >= 1")
    except ParameterError as exc:
        _fail(str(exc), 2)

    in_root = Path(input_dir)
    out_root = Path(output_dir)
    out_root.mkdir(parents=True, exist_ok=True)
    files = sorted(
        p for p in in_root.iterdir()
        if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
    )
    if not files:
        _fail(f"no PNG or JPEG files in {input_dir}", 2)

    def handle(path):
        try:
            arr = load_image(path)
            arr = _pipeline(
                arr,
                denoise=not no_denoise,
                nlm=nlm,
                equalize=not no_equalize,
                size=size,
            )
            save_image(out_root / (path.stem + ".png"), arr)
            return path.name, None
        except Exception as exc:
            return path.name, str(exc)

    if workers == 1:
        results = [handle(path) for path in files]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(handle, files))
    results.sort(key=lambda item: item[0])
    failures = [{"file": name, "error": err} for name, err in results if err]
    summary = {
        "processed": len(results) - len(failures),
        "failed": failures,
        "output_dir": str(out_root),
    }
    if as_json:
        click.echo(json.dumps(summary, indent=2))
    else:
        click.echo(f"processed {summary['processed']} of {len(results)} files")
        for failure in failures:
            click.echo(f"  failed {failure['file']}: {failure['error']}", err=True)
    if failures:
        sys.exit(1)


@main.command()
@click.argument("manifest_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--train", type=float, default=0.8, show_default=True)
@click.option("--val", type=float, default=0.1, show_default=True)
@click.option("--test", type=float, default=0.1, show_default=True)
@click.option("--output-dir", type=click.Path(file_okay=False), default=None)
@click.option("--json", "as_json", is_flag=True)
def split(manifest_path, seed, train, val, test, output_dir, as_json):
    """Write stratified train/val/test manifests next to MANIFEST_PATH."""

    def run():
        spec = SplitSpec(
            train_fraction=train, val_fraction=val, test_fraction=test, seed=seed
        )
        manifest = load_manifest(manifest_path)
        parts = stratified_split(manifest, spec)
        source = Path(manifest_path)
        target_dir = Path(output_dir) if output_dir else source.parent
        target_dir.mkdir(parents=True, exist_ok=True)
        names = ("train", "val", "test")
        payload = {}
        for name, part in zip(names, parts):
            out_path = target_dir / f"{source.stem}.{name}.txt"
            write_manifest(part, out_path)
            payload[name] = {"path": str(out_path), "count": len(part), "by_class": part.counts()}
        if as_json:
            click.echo(json.dumps(payload, indent=2))
        else:
            for name in names:
                click.echo(f"{name}: {payload[name]['count']} -> {payload[name]['path']}")

    _guard(run)


@main.command()
@click.option("--image", "image_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--backends", "roster_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--no-denoise", is_flag=True)
@click.option("--nlm-h", type=float, default=0.1, show_default=True)
@click.option("--patch", type=int, default=3, show_default=True)
@click.option("--search", type=int, default=10, show_default=True)
@click.option("--no-equalize", is_flag=True)
@click.option("--size", type=int, default=224, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def classify(
    image_path, roster_path, no_denoise, nlm_h, patch, search, no_equalize, size, as_json
):
    """Classify one image with the backend roster and majority vote."""

    def run():
        nlm = NlmParams(patch_radius=patch, search_radius=search, h=nlm_h)
        roster = load_roster(roster_path)
        arr = load_image(image_path)
        processed = _pipeline(
            arr, denoise=not no_denoise, nlm=nlm, equalize=not no_equalize, size=size
        )
        predictions = predict_all(roster, processed)
        decision = vote(predictions, expected_size=len(roster))
        payload = {
            "decision": decision.to_dict(),
            "average_distribution": average_distribution(predictions),
            "image_key": image_key(processed),
        }
        if as_json:
            click.echo(json.dumps(payload, indent=2))
        else:
            click.echo(f"final class: {decision.final_class}")
            click.echo(f"votes: {decision.votes}")
            click.echo(f"consensus: {decision.consensus}")
            click.echo(f"confidence: {decision.confidence:.3f}")
            if decision.needs_review:
                click.echo("flagged for specialist review")

    _guard(run)


@main.command()
@click.option("--predictions", "predictions_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--table", "as_table", is_flag=True, help="Also print per-class rates.")
@click.option("--json", "as_json", is_flag=True)
def evaluate(predictions_path, as_table, as_json):
    """Score a prediction file (lines of id,truth,p_nv,p_bcc)."""

    def run():
        try:
            samples = load_predictions(predictions_path)
        except ParseError as exc:
            _fail(str(exc), 1)
        report = summarize(samples)
        rates = rates_table(samples)
        if as_json:
            click.echo(json.dumps({"summary": report.to_dict(), "rates": rates}, indent=2))
        else:
            click.echo(render_summary(report))
            if as_table:
                click.echo(render_rates(rates))

    _guard(run)


@main.command()
@click.option("--decision", "decision_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--offline-stub", "stub_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--json", "as_json", is_flag=True)
def report(decision_path, stub_path, as_json):
    """Generate a patient report for a saved classify --json decision.

    Uses LLM_BASE_URL / LLM_API_KEY / LLM_MODEL from the environment, or
    canned completions with --offline-stub FIXTURE.
    """
    from .ensemble import EnsembleDecision
    from .reporting import ReportRequest, generate_report

    def run():
        with open(decision_path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
        decision = EnsembleDecision.from_dict(data.get("decision", data))
        request = ReportRequest.from_decision(decision)
        transport = None
        if stub_path is not None:
            transport = StubTransport.from_fixture(stub_path)
            config = LlmConfig(base_url="stub://local")
        else:
            config = LlmConfig.from_env()
        generated = generate_report(request, config, transport=transport)
        if as_json:
            click.echo(json.dumps(generated.to_dict(), indent=2))
        else:
            click.echo(generated.to_text())

    _guard(run)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--data-dir", default=None, help="Case storage directory.")
@click.option("--backends", "roster_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--no-denoise", is_flag=True)
@click.option("--no-equalize", is_flag=True)
@click.option("--size", type=int, default=224, show_default=True)
def serve(host, port, data_dir, roster_path, no_denoise, no_equalize, size):
    """Run the HTTP service."""
    import uvicorn

    from .service import ServiceConfig, create_app

    def run():
        overrides = {
            "backends": load_roster(roster_path),
            "denoise": not no_denoise,
            "equalize": not no_equalize,
            "image_size": size,
        }
        if data_dir:
            overrides["data_dir"] = data_dir
        config = ServiceConfig.from_env(**overrides)
        uvicorn.run(create_app(config), host=host, port=port)

    _guard(run)


if __name__ == "__main__":
    main()
