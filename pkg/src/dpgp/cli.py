"""Command line client for the release service.

Subcommands mirror the service endpoints (ingest, fit, release, hpselect,
bench) plus ``serve``.  By default requests run against an in-process app,
so no server needs to be running; ``--server`` points at a remote one.
All outputs are written as JSON reports plus flat CSV files for plotting.
"""
from __future__ import annotations

import argparse
import asyncio
import csv
import io
import json
import sys
from pathlib import Path

import httpx
import numpy as np


def _load_config(path: str) -> dict:
    with open(path) as handle:
        return json.load(handle)


def _inline_to_csv(inline: dict) -> tuple[str, list[str], str]:
    """Turn an inline data block into CSV text plus its schema."""
    X = np.atleast_2d(np.asarray(inline["x"], dtype=float))
    if X.shape[0] == 1 and np.asarray(inline["x"]).ndim == 1:
        X = X.T
    y = np.asarray(inline["y"], dtype=float).ravel()
    columns = [f"x{d}" for d in range(X.shape[1])]
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(columns + ["y"])
    for row, target in zip(X, y):
        writer.writerow([repr(float(v)) for v in row] + [repr(float(target))])
    return buffer.getvalue(), columns, "y"


def _ingest_payload(config: dict) -> dict:
    data = config.get("data")
    if data is None:
        raise SystemExit("config has no 'data' block")
    if "csv" in data:
        csv_text = Path(data["csv"]).read_text()
        input_columns = data["input_columns"]
        output_column = data["output_column"]
    elif "inline" in data:
        csv_text, input_columns, output_column = _inline_to_csv(data["inline"])
    else:
        raise SystemExit("data block needs either 'csv' or 'inline'")
    payload = {
        "csv_text": csv_text,
        "input_columns": input_columns,
        "output_column": output_column,
        "label": config.get("label", ""),
    }
    if data.get("where") is not None:
        payload["where"] = data["where"]
    if data.get("clip") is not None:
        payload["clip"] = data["clip"]
    return payload


def _test_inputs(config: dict) -> list[list[float]]:
    if "test_inputs" in config:
        points = np.atleast_2d(np.asarray(config["test_inputs"], dtype=float))
        return points.tolist()
    if "test_grid" in config:
        grid = config["test_grid"]
        axes = [
            np.linspace(float(lo), float(hi), int(num))
            for lo, hi, num in zip(grid["low"], grid["high"], grid["num"])
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1).tolist()
    raise SystemExit("config needs 'test_inputs' or 'test_grid' for a release")


async def _post(client: httpx.AsyncClient, path: str, payload: dict) -> dict:
    response = await client.post(path, json=payload)
    if response.status_code != 200:
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        raise SystemExit(f"{path} failed ({response.status_code}): {detail}")
    return response.json()


def _client(server: str | None) -> httpx.AsyncClient:
    if server:
        return httpx.AsyncClient(base_url=server, timeout=600.0)
    from .service import create_app

    return httpx.AsyncClient(
        transport=httpx.ASGITransport(app=create_app()),
        base_url="http://dpgp.internal",
        timeout=600.0,
    )


def _write_json(out_dir: Path, name: str, payload: dict) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def _write_csv(out_dir: Path, name: str, header: list[str], rows) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)
    return path


async def _ingested_dataset(client, config) -> dict:
    return await _post(client, "/ingest", _ingest_payload(config))


def _apply_overrides(config: dict, args) -> dict:
    config = dict(config)
    if getattr(args, "seed", None) is not None:
        config["seed"] = args.seed
    return config


async def _cmd_ingest(args) -> None:
    config = _apply_overrides(_load_config(args.config), args)
    async with _client(args.server) as client:
        response = await _ingested_dataset(client, config)
    path = _write_json(Path(args.out), "ingest.json", response)
    print(f"ingested {response['n_used']} rows ({response['n_rejected']} rejected) -> {path}")


async def _cmd_fit(args) -> None:
    config = _apply_overrides(_load_config(args.config), args)
    async with _client(args.server) as client:
        ingest = await _ingested_dataset(client, config)
        response = await _post(
            client,
            "/fit",
            {"dataset": ingest["dataset"], "kernel": config["kernel"]},
        )
    path = _write_json(Path(args.out), "fit.json", response)
    print(f"fit n={response['n']} train_rmse={response['train_rmse']:.4g} -> {path}")


async def _cmd_release(args) -> None:
    config = _apply_overrides(_load_config(args.config), args)
    out_dir = Path(args.out)
    async with _client(args.server) as client:
        ingest = await _ingested_dataset(client, config)
        test_inputs = _test_inputs(config)
        payload = {
            "dataset": ingest["dataset"],
            "mechanism": config["mechanism"],
            "epsilon": config["epsilon"],
            "delta": config["delta"],
            "kernel": config.get("kernel"),
            "grid": config.get("grid"),
            "bins": config.get("bins"),
            "test_inputs": test_inputs,
            "seed": config.get("seed", 0),
            "noise_multiplier": config.get("noise_multiplier", 1.0),
            "label": config.get("label", ""),
        }
        response = await _post(client, "/release", payload)
    report_path = _write_json(out_dir, "release.json", response)

    dim = len(test_inputs[0])
    header = [f"x{d}" for d in range(dim)]
    header += ["released", "reference_mean", "posterior_std", "dp_noise_std"]
    noise = response["noise_std"] or [""] * len(test_inputs)
    post_var = response["posterior_var"] or [""] * len(test_inputs)
    rows = []
    for i, point in enumerate(test_inputs):
        post_std = np.sqrt(post_var[i]) if post_var[i] != "" else ""
        rows.append(
            list(point)
            + [response["values"][i], response["reference_mean"][i], post_std, noise[i]]
        )
    csv_path = _write_csv(out_dir, "predictions.csv", header, rows)
    if response.get("warning"):
        print(response["warning"], file=sys.stderr)
    print(f"released {len(test_inputs)} predictions -> {report_path}, {csv_path}")


async def _cmd_hpselect(args) -> None:
    config = _apply_overrides(_load_config(args.config), args)
    out_dir = Path(args.out)
    async with _client(args.server) as client:
        ingest = await _ingested_dataset(client, config)
        payload = {
            "dataset": ingest["dataset"],
            "grid": config["grid"],
            "seed": config.get("seed", 0),
            "probe_epsilons": config.get("probe_epsilons", []),
        }
        response = await _post(client, "/hpselect", payload)
    report_path = _write_json(out_dir, "hpselect.json", response)

    candidates = config["grid"]["candidates"]
    dim = len(candidates[0]["lengthscales"])
    header = ["index", "variance"]
    header += [f"lengthscale_{d}" for d in range(dim)]
    header += ["noise_variance", "utility", "sensitivity", "probability", "chosen"]
    rows = []
    for i, cand in enumerate(candidates):
        rows.append(
            [i, cand["variance"]]
            + list(cand["lengthscales"])
            + [
                cand.get("noise_variance", 0.0),
                response["utilities"][i],
                response["sensitivities"][i],
                response["probabilities"][i],
                int(i == response["chosen_index"]),
            ]
        )
    table_path = _write_csv(out_dir, "candidates.csv", header, rows)

    paths = [report_path, table_path]
    if response["probe"]:
        probe_rows = [
            [row["epsilon"], i, p]
            for row in response["probe"]
            for i, p in enumerate(row["probabilities"])
        ]
        paths.append(
            _write_csv(
                out_dir,
                "selection_probabilities.csv",
                ["epsilon", "candidate_index", "probability"],
                probe_rows,
            )
        )
    print(
        f"selected candidate {response['chosen_index']} "
        f"-> {', '.join(str(p) for p in paths)}"
    )


async def _cmd_bench(args) -> None:
    config = _apply_overrides(_load_config(args.config), args)
    out_dir = Path(args.out)
    async with _client(args.server) as client:
        ingest = await _ingested_dataset(client, config)
        payload = {
            "dataset": ingest["dataset"],
            "mechanism": config["mechanism"],
            "epsilon": config["epsilon"],
            "delta": config["delta"],
            "kernel": config.get("kernel"),
            "grid": config.get("grid"),
            "bins": config.get("bins"),
            "n_folds": config.get("n_folds", 30),
            "train_size": config.get("train_size"),
            "test_size": config.get("test_size"),
            "seed": config.get("seed", 0),
            "noise_multiplier": config.get("noise_multiplier", 1.0),
            "label": config.get("label", ""),
        }
        response = await _post(client, "/bench", payload)
    report = response["report"]
    report_path = _write_json(out_dir, "bench.json", report)
    rows = [
        [k, "" if r is None else r, e or ""]
        for k, (r, e) in enumerate(zip(report["fold_rmse"], report["fold_errors"]))
    ]
    csv_path = _write_csv(out_dir, "fold_rmse.csv", ["fold", "rmse", "error"], rows)
    if report.get("warning"):
        print(report["warning"], file=sys.stderr)
    print(
        f"bench {report['mechanism']}: rmse {report['rmse_mean']:.4g} "
        f"+/- {report['rmse_ci95']:.4g} (95% CI, {report['n_folds']} folds) "
        f"-> {report_path}, {csv_path}"
    )


def _cmd_serve(args) -> None:
    import uvicorn

    uvicorn.run("dpgp.service:app", host=args.host, port=args.port)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpgp",
        description="Differentially private GP regression releases and benchmarks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_seed=True):
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--server", default=None, help="remote service URL (default: in-process)")
        if with_seed:
            p.add_argument("--seed", type=int, default=None, help="override the config seed")

    add_common(sub.add_parser("ingest", help="parse, clip and center a dataset"), with_seed=False)
    add_common(sub.add_parser("fit", help="non-private GP fit diagnostics"), with_seed=False)
    add_common(sub.add_parser("release", help="one DP release at test inputs"))
    add_common(sub.add_parser("hpselect", help="DP hyperparameter selection"))
    add_common(sub.add_parser("bench", help="cross-validated mechanism benchmark"))

    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    return parser


_COMMANDS = {
    "ingest": _cmd_ingest,
    "fit": _cmd_fit,
    "release": _cmd_release,
    "hpselect": _cmd_hpselect,
    "bench": _cmd_bench,
}


def main(argv: list[str] | None = None) -> None:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        _cmd_serve(args)
        return
    asyncio.run(_COMMANDS[args.command](args))


if __name__ == "__main__":
    main()
