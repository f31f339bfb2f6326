"""
Result reports for vl-distill
Comparison tables of ID / zero-shot OOD / few-shot OOD accuracy cells, rendered
deterministically from run manifests
"""

from typing import Any, Dict, List, Optional, Sequence

from src.core.errors import CacheCorrupt
from src.persistence.run_manifest import RunManifest, epoch_records, results_from_history
from src.utils.config import dump_json

REPORT_SCHEMA_VERSION = 1
CELL_TOLERANCE = 1e-12


def _percent(value: Optional[float]) -> str:
    return "-" if value is None else f"{100.0 * value:.1f}"


def cell(manifest: RunManifest) -> str:
    """x1 / x2 / x3 in percent"""
    r = manifest.results
    return f"{_percent(r.id_accuracy)} / {_percent(r.ood_zero_shot)} / {_percent(r.ood_fewshot)}"


def check_against_log(manifest: RunManifest):
    """The reported cells must equal the last-epoch averages of the manifest's own log"""
    expected = results_from_history(epoch_records(manifest))
    found = manifest.results
    pairs = [("id_accuracy", expected.id_accuracy, found.id_accuracy),
             ("ood_zero_shot", expected.ood_zero_shot, found.ood_zero_shot),
             ("ood_fewshot", expected.ood_fewshot, found.ood_fewshot)]
    for name, want, got in pairs:
        if (want is None) != (got is None) or (want is not None and abs(want - got) > CELL_TOLERANCE):
            raise CacheCorrupt(f"Run '{manifest.name}': {name}={got} disagrees with its epoch log ({want})",
                               run=manifest.name)


def report_rows(manifests: Sequence[RunManifest]) -> List[Dict[str, Any]]:
    rows = []
    for manifest in manifests:
        check_against_log(manifest)
        r = manifest.results
        rows.append({
            "run": manifest.name,
            "losses": manifest.config.get("losses", {}).get("enabled", []),
            "seed": manifest.seeds.get("seed"),
            "id": r.id_accuracy,
            "ood_zero_shot": r.ood_zero_shot,
            "ood_fewshot": r.ood_fewshot,
            "cell": cell(manifest),
        })
    return rows


def render_table(manifests: Sequence[RunManifest]) -> str:
    """
    Plain-text comparison table, one row per run

    Args:
        manifests: Runs in display order

    Returns:
        Table text ending in a newline
    """
    rows = report_rows(manifests)
    header = ("run", "losses", "ID / 0-shot OOD / few-shot OOD")
    body = [(row["run"], "+".join(row["losses"]) or "-", row["cell"]) for row in rows]
    widths = [max(len(line[i]) for line in [header] + body) for i in range(len(header))]

    def fmt(line) -> str:
        return "  ".join(value.ljust(width) for value, width in zip(line, widths)).rstrip()

    lines = [fmt(header), fmt(tuple("-" * w for w in widths))] + [fmt(line) for line in body]
    return "\n".join(lines) + "\n"


def render_json(manifests: Sequence[RunManifest]) -> str:
    return dump_json({"schema_version": REPORT_SCHEMA_VERSION, "rows": report_rows(manifests)})
