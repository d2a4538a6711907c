"""The ``cfx`` command: explain, score, query, compare and an interactive
query loop over spec documents and classifier models.

Exit codes: 0 success (query answered true), 1 query answered false,
2 usage error, 3 runtime error, 4 query had no models to answer against.
stdout carries results only; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import shlex
import sys
from typing import Sequence

from .classifiers import Classifier, load_decision_tree, load_naive_bayes, load_tabulated
from .engine import (
    ComparisonReport,
    ModelSet,
    SearchConfig,
    answer_query,
    compare_classifiers,
    enumerate_counterfactuals,
    minimal_counterfactuals,
)
from .errors import CfxError
from .external import DEFAULT_TIMEOUT, HttpClassifier, SubprocessClassifier
from .model import CounterfactualModel, load_empirical_distribution, uniform_distribution
from .scores import ReportOptions, ScoreRecord, score_report
from .speclang import SpecDocument, check_formula, format_formula, parse_formula, parse_spec

EXIT_TRUE = 0
EXIT_FALSE = 1
EXIT_USAGE = 2
EXIT_RUNTIME = 3
EXIT_NO_MODELS = 4

_MINIMALITY = {"card": "cardinality", "subset": "subset", "none": "none"}


class _UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cfx",
        description="Counterfactual explanations for classifiers over categorical features.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("spec", help="path to a spec document (.cfx)")
        sp.add_argument(
            "--classifier",
            action="append",
            required=True,
            metavar="KIND:REF",
            help="tree:PATH | nb:PATH | tab:PATH | external:COMMAND | http:URL "
            "(repeat for compare)",
        )
        sp.add_argument("--entity", required=True, help="entity name from the spec")
        sp.add_argument(
            "--classes",
            help="comma-separated class list, required for external/http classifiers",
        )
        sp.add_argument("--format", choices=("table", "json"), default="table")
        sp.add_argument("--minimality", choices=tuple(_MINIMALITY), default="card")
        sp.add_argument("--max-changes", type=int, default=None)
        sp.add_argument("--target", default=None, help="require this resulting class")
        sp.add_argument("--k", type=int, default=2, help="max contingency size for scores")
        sp.add_argument("--budget", type=int, default=1_000_000)
        sp.add_argument("--parallelism", type=int, default=1)
        sp.add_argument(
            "--dist",
            default="uniform",
            help="population distribution: uniform | marginals | empirical:PATH",
        )

    sp = sub.add_parser("counterfactuals", help="list counterfactual models")
    common(sp)

    sp = sub.add_parser("score", help="attribution scores per feature")
    common(sp)
    sp.add_argument(
        "--score",
        required=True,
        help="comma-separated subset of xresp,resp,shap or 'all'",
    )

    sp = sub.add_parser("query", help="answer a formula bravely or cautiously")
    common(sp)
    sp.add_argument("--mode", required=True, choices=("brave", "cautious"))
    sp.add_argument("formula", help="query formula")

    sp = sub.add_parser("compare", help="compare two classifiers on one entity")
    common(sp)

    sp = sub.add_parser("repl", help="interactive query loop")
    common(sp)

    return parser


def _timeout_seconds() -> float:
    raw = os.environ.get("CFX_TIMEOUT_MS")
    if raw is None:
        return DEFAULT_TIMEOUT
    try:
        return max(int(raw), 1) / 1000.0
    except ValueError:
        raise _UsageError(f"CFX_TIMEOUT_MS must be an integer, got {raw!r}") from None


def _build_classifier(ref: str, doc: SpecDocument, args) -> Classifier:
    if ref.startswith(("http://", "https://")):
        kind, rest = "http", ref
    else:
        kind, sep, rest = ref.partition(":")
        if not sep or not rest:
            raise _UsageError(f"classifier ref {ref!r} is not KIND:REF")
    if kind == "tree":
        return load_decision_tree(rest, doc.schema)
    if kind == "nb":
        return load_naive_bayes(rest, doc.schema)
    if kind == "tab":
        return load_tabulated(rest, doc.schema)
    if kind in ("external", "http"):
        if not args.classes:
            raise _UsageError(f"{kind}: classifier needs --classes")
        classes = [c.strip() for c in args.classes.split(",") if c.strip()]
        if not classes:
            raise _UsageError("--classes must name at least one class")
        timeout = _timeout_seconds()
        if kind == "external":
            return SubprocessClassifier(shlex.split(rest), classes, timeout=timeout)
        return HttpClassifier(rest, classes, timeout=timeout)
    raise _UsageError(
        f"unknown classifier kind {kind!r} (tree, nb, tab, external, http)"
    )


# ---------------------------------------------------------------------------
# data builders: the JSON output IS this data; tables render the same dict


def _model_data(m: CounterfactualModel) -> dict:
    return {
        "size": len(m.changed),
        "changes": m.intervention.as_dict(),
        "label": m.label,
        "result": m.result.as_dict(),
    }


def _modelset_data(ms: ModelSet) -> dict:
    return {
        "original": {"values": ms.original.as_dict(), "label": ms.original_label},
        "minimality": ms.minimality,
        "exhausted": ms.exhausted,
        "count": len(ms.models),
        "models": [_model_data(m) for m in ms.models],
    }


def _record_data(rec: ScoreRecord) -> dict:
    data: dict = {"value": rec.value}
    if rec.contingency_size is not None:
        data["contingency_size"] = rec.contingency_size
    if rec.witness is not None:
        data["witness"] = {
            "contingency": rec.witness.contingency_dict(),
            "flip_value": rec.witness.flip_value,
        }
    return data


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _columns(headers: list[str], rows: list[list[str]]) -> list[str]:
    widths = [
        max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
        for i, h in enumerate(headers)
    ]
    out = ["  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip()]
    for r in rows:
        out.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
    return out


def _model_line(m: dict) -> str:
    changes = ", ".join(f"{n}->{v}" for n, v in m["changes"].items())
    result = ", ".join(f"{n}={v}" for n, v in m["result"].items())
    return f"{{{changes}}} => {m['label']}  [size {m['size']}; result {{{result}}}]"


def _render_modelset(data: dict) -> list[str]:
    orig = data["original"]
    values = ", ".join(f"{n}={v}" for n, v in orig["values"].items())
    lines = [
        f"original: {{{values}}} => {orig['label']}",
        f"minimality: {data['minimality']}  exhausted: {_fmt(data['exhausted'])}  "
        f"models: {data['count']}",
    ]
    for m in data["models"]:
        lines.append("  " + _model_line(m))
    return lines


def _witness_cell(rec: dict) -> str:
    w = rec.get("witness")
    if w is None:
        return "-"
    gamma = ", ".join(f"{n}={v}" for n, v in w["contingency"].items())
    return f"{{{gamma}}} -> {w['flip_value']} (s={rec['contingency_size']})"


def _render_score(data: dict) -> list[str]:
    lines = [
        f"entity: {data['entity']}",
        f"original label: {data['original_label']}",
        f"minimal models: {data['minimal_count']}"
        + (f" (size {data['minimal_size']})" if data["minimal_size"] is not None else ""),
        f"k: {data['k']}",
    ]
    headers = ["feature"]
    for s in data["scores"]:
        headers.append(s)
        if s in ("xresp", "resp"):
            headers.append(f"{s} witness")
    rows = []
    for row in data["rows"]:
        cells = [row["feature"]]
        for s in data["scores"]:
            rec = row.get(s)
            if rec is None:
                cells.append("-")
                if s in ("xresp", "resp"):
                    cells.append("-")
                continue
            cells.append(_fmt(rec["value"]))
            if s in ("xresp", "resp"):
                cells.append(_witness_cell(rec))
        rows.append(cells)
    lines.extend(_columns(headers, rows))
    return lines


def _render_query(data: dict) -> list[str]:
    lines = [
        f"mode: {data['mode']}",
        f"formula: {data['formula']}",
        f"status: {data['status']}",
        f"{data['witness_kind']}: {len(data['witnesses'])}",
    ]
    for m in data["witnesses"]:
        lines.append("  " + _model_line(m))
    return lines


def _render_compare(data: dict) -> list[str]:
    lines = [
        f"label a: {data['label_a']}",
        f"label b: {data['label_b']}",
        "models a:",
    ]
    lines.extend("  " + l for l in _render_modelset(data["models_a"]))
    lines.append("models b:")
    lines.extend("  " + l for l in _render_modelset(data["models_b"]))
    lines.append(
        "changed-sets only in a: "
        + (", ".join("{" + ", ".join(s) + "}" for s in data["changed_only_a"]) or "-")
    )
    lines.append(
        "changed-sets only in b: "
        + (", ".join("{" + ", ".join(s) + "}" for s in data["changed_only_b"]) or "-")
    )
    rows = [
        [r["feature"], _fmt(r["a"]), _fmt(r["b"]), _fmt(r["delta"])]
        for r in data["xresp"]
    ]
    lines.extend(_columns(["feature", "xresp a", "xresp b", "delta"], rows))
    for note in data["notes"]:
        lines.append(f"note: {note}")
    return lines


def _emit(data: dict, table_lines: list[str], fmt: str, out) -> None:
    if fmt == "json":
        out.write(json.dumps(data, indent=2) + "\n")
    else:
        out.write("\n".join(table_lines) + "\n")


def _query_data(mode: str, formula, answer) -> dict:
    return {
        "command": "query",
        "mode": mode,
        "formula": format_formula(formula),
        "status": answer.status,
        "witness_kind": "counterexamples" if answer.status == "false" and mode == "cautious" else "witnesses",
        "witnesses": [_model_data(m) for m in answer.witnesses],
    }


def _query_exit(status: str) -> int:
    return {"true": EXIT_TRUE, "false": EXIT_FALSE, "no-models": EXIT_NO_MODELS}[status]


def _run(args, out) -> int:
    with open(args.spec, "r", encoding="utf-8") as fh:
        doc = parse_spec(fh.read())
    entity = doc.entities.get(args.entity)
    if entity is None:
        raise _UsageError(
            f"entity {args.entity!r} not found in {args.spec} "
            f"(has: {', '.join(doc.entities) or 'none'})"
        )
    refs = args.classifier
    want = 2 if args.command == "compare" else 1
    if len(refs) != want:
        raise _UsageError(
            f"{args.command} needs exactly {want} --classifier, got {len(refs)}"
        )
    classifiers = []
    try:
        for ref in refs:
            classifiers.append(_build_classifier(ref, doc, args))
        constraints = doc.constraints_for(entity)
        for clf in classifiers:
            for c in constraints:
                check_formula(c, doc.schema, clf.classes)
        cfg = SearchConfig(
            target=args.target,
            max_changes=args.max_changes,
            minimality=_MINIMALITY[args.minimality],
            constraints=constraints,
            budget=args.budget,
            parallelism=args.parallelism,
        )
        clf = classifiers[0]
        if args.command == "counterfactuals":
            if cfg.minimality == "none":
                ms = enumerate_counterfactuals(doc.schema, entity, clf, cfg)
            else:
                ms = minimal_counterfactuals(doc.schema, entity, clf, cfg)
            data = {"command": "counterfactuals", "entity": args.entity}
            data.update(_modelset_data(ms))
            _emit(data, [f"entity: {args.entity}"] + _render_modelset(data), args.format, out)
            return EXIT_TRUE
        if args.command == "score":
            raw = args.score.strip()
            scores = (
                list(ScoreReportNames)
                if raw == "all"
                else [s.strip() for s in raw.split(",") if s.strip()]
            )
            dist = _resolve_dist(args.dist, doc)
            report = score_report(
                doc.schema,
                entity,
                clf,
                ReportOptions(
                    scores=tuple(scores),
                    k=args.k,
                    distribution=dist,
                    constraints=constraints,
                ),
            )
            rows = []
            for r in report.rows:
                row: dict = {"feature": r.feature}
                if r.xresp is not None:
                    row["xresp"] = _record_data(r.xresp)
                if r.resp is not None:
                    row["resp"] = _record_data(r.resp)
                if r.shap is not None:
                    row["shap"] = _record_data(r.shap)
                rows.append(row)
            data = {
                "command": "score",
                "entity": args.entity,
                "original_label": report.original_label,
                "minimal_count": report.minimal_count,
                "minimal_size": report.minimal_size,
                "k": args.k,
                "scores": scores,
                "rows": rows,
            }
            _emit(data, _render_score(data), args.format, out)
            return EXIT_TRUE
        if args.command == "query":
            ms = minimal_counterfactuals(doc.schema, entity, clf, cfg)
            formula = parse_formula(args.formula, doc.schema, clf.classes)
            answer = answer_query(ms, formula, args.mode)
            data = _query_data(args.mode, formula, answer)
            _emit(data, _render_query(data), args.format, out)
            return _query_exit(answer.status)
        if args.command == "compare":
            report = compare_classifiers(
                doc.schema, entity, classifiers[0], classifiers[1], cfg, k=args.k
            )
            data = _compare_data(args.entity, doc, report)
            _emit(data, _render_compare(data), args.format, out)
            return EXIT_TRUE
        if args.command == "repl":
            ms = minimal_counterfactuals(doc.schema, entity, clf, cfg)
            return _repl(ms, doc, clf, args.format, out)
        raise _UsageError(f"unknown command {args.command!r}")
    finally:
        for clf in classifiers:
            clf.close()


ScoreReportNames = ("xresp", "resp", "shap")


def _compare_data(entity_name: str, doc: SpecDocument, report: ComparisonReport) -> dict:
    return {
        "command": "compare",
        "entity": entity_name,
        "label_a": report.label_a,
        "label_b": report.label_b,
        "models_a": _modelset_data(report.models_a),
        "models_b": _modelset_data(report.models_b),
        "changed_only_a": [list(s) for s in report.changed_only_a],
        "changed_only_b": [list(s) for s in report.changed_only_b],
        "xresp": [
            {
                "feature": n,
                "a": report.xresp_a[n],
                "b": report.xresp_b[n],
                "delta": report.xresp_delta[n],
            }
            for n in doc.schema.names
        ],
        "notes": list(report.notes),
    }


def _resolve_dist(arg: str, doc: SpecDocument):
    if arg == "uniform":
        return uniform_distribution(doc.schema)
    if arg == "marginals":
        return doc.product_distribution()
    if arg.startswith("empirical:"):
        path = arg[len("empirical:") :]
        if not path:
            raise _UsageError("empirical distribution needs a path: empirical:PATH")
        return load_empirical_distribution(doc.schema, path)
    raise _UsageError(
        f"unknown distribution {arg!r} (uniform | marginals | empirical:PATH)"
    )


def _repl(ms: ModelSet, doc: SpecDocument, clf: Classifier, fmt: str, out) -> int:
    while True:
        out.write("cfx> ")
        out.flush()
        line = sys.stdin.readline()
        if not line:
            out.write("\n")
            return EXIT_TRUE
        line = line.strip()
        if not line:
            continue
        if line == "quit":
            return EXIT_TRUE
        if line.startswith("brave?"):
            mode, text = "brave", line[len("brave?") :]
        elif line.startswith("cautious?"):
            mode, text = "cautious", line[len("cautious?") :]
        else:
            print(
                "expected 'brave? FORMULA', 'cautious? FORMULA' or 'quit'",
                file=sys.stderr,
            )
            continue
        try:
            formula = parse_formula(text.strip(), doc.schema, clf.classes)
        except CfxError as err:
            print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
            continue
        answer = answer_query(ms, formula, mode)
        data = _query_data(mode, formula, answer)
        if fmt == "json":
            out.write(json.dumps(data) + "\n")
        else:
            out.write("\n".join(_render_query(data)) + "\n")
        out.flush()


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return _run(args, sys.stdout)
    except _UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (CfxError, OSError) as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
