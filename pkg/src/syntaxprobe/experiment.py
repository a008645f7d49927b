"""Layer sweep orchestration: for every (task, layer) cell train a probe,
evaluate it, and collect the results next to the baselines.

Cells are independent jobs; each derives its own seed from the plan seed
and the cell name, so serial and parallel execution produce identical
reports and a rerun with the same seeds is byte-exact. Best layers break
ties toward the shallower layer. The depth-hierarchy statistic
(best pos layer <= parent <= grandparent <= great-grandparent) is
recorded in the report but never enforced.
"""

from __future__ import annotations

import json
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict

from . import baselines as bl
from . import probe as pr
from . import repstore as rs
from . import tasks as tk

WORD_TASKS = ("pos", "parent", "grandparent", "greatgrandparent")
ARC_BASELINE = 0.5  # balanced binary construction
ARC_LABELS = ("arc", "noarc")

REPORT_VERSION = 1


@dataclass
class ExperimentPlan:
    reps_path: str
    tasks: list
    layers: list
    out_dir: str
    seed: int = 0
    constituency_train: str = None
    constituency_eval: str = None
    dependency_train: str = None
    dependency_eval: str = None
    train: pr.TrainConfig = field(default_factory=pr.TrainConfig)
    jobs: int = 1

    def validate(self):
        known = set(WORD_TASKS) | {"arc"}
        unknown = [t for t in self.tasks if t not in known]
        if unknown:
            raise ValueError(f"unknown tasks: {unknown}")
        if not self.layers:
            raise ValueError("layer list is empty")
        needs_const = any(t in WORD_TASKS for t in self.tasks)
        if needs_const and not (self.constituency_train and self.constituency_eval):
            raise ValueError("word tasks require constituency train and eval corpora")
        if "arc" in self.tasks and not (self.dependency_train and self.dependency_eval):
            raise ValueError("the arc task requires dependency train and eval corpora")


@dataclass
class ExperimentReport:
    tasks: list
    layers: list
    cells: dict  # task -> {layer: accuracy}
    baselines: dict  # task -> accuracy
    best_layer: dict  # task -> layer index
    hierarchy_holds: bool | None
    seed: int
    version: int = REPORT_VERSION

    def to_json(self):
        payload = asdict(self)
        # Stable key order and layer keys as strings for byte-exact reruns.
        payload["cells"] = {
            t: {str(l): self.cells[t][l] for l in sorted(self.cells[t])} for t in sorted(self.cells)
        }
        payload["baselines"] = {t: self.baselines[t] for t in sorted(self.baselines)}
        payload["best_layer"] = {t: self.best_layer[t] for t in sorted(self.best_layer)}
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text):
        payload = json.loads(text)
        payload["cells"] = {
            t: {int(l): a for l, a in cells.items()} for t, cells in payload["cells"].items()
        }
        return cls(**payload)


def cell_seed(base_seed, task, layer):
    """Stable per-cell seed so parallel and serial runs agree."""
    return zlib.crc32(f"{base_seed}:{task}:{layer}".encode("utf-8"))


def _best_layer(cells_for_task):
    # argmax; ties go to the shallowest layer
    best = None
    for layer in sorted(cells_for_task):
        if best is None or cells_for_task[layer] > cells_for_task[best]:
            best = layer
    return best


def _hierarchy(best_layer):
    if not all(t in best_layer for t in WORD_TASKS):
        return None
    depths = [best_layer[t] for t in WORD_TASKS]
    return all(a <= b for a, b in zip(depths, depths[1:]))


def sweep(reps, plan, const_train=None, const_eval=None, dep_train=None, dep_eval=None,
          run_dir=None):
    """Run all (task, layer) cells against in-memory corpora."""
    plan_tasks = list(plan.tasks)
    layers = sorted(plan.layers)
    jobs = []
    for task_name in plan_tasks:
        if task_name in WORD_TASKS:
            level = tk.TASK_LEVELS[task_name]
            train_task = tk.extract_word_labels(const_train, level)
            eval_task = tk.extract_word_labels(const_eval, level)
            vocab = tk.build_vocabulary(train_task)
            table = bl.fit_majority(train_task, const_train)
            baseline = bl.evaluate_majority(table, eval_task, const_eval)
            source = (const_train, const_eval)
        else:
            train_task = tk.generate_arc_pairs(dep_train, seed=cell_seed(plan.seed, "arc-train", -1))
            eval_task = tk.generate_arc_pairs(dep_eval, seed=cell_seed(plan.seed, "arc-eval", -1))
            vocab = tk.LabelVocabulary(
                labels=ARC_LABELS, index={l: i for i, l in enumerate(ARC_LABELS)}
            )
            baseline = ARC_BASELINE
            source = (None, None)
        jobs.append((task_name, train_task, eval_task, vocab, baseline, source))

    cells = {t: {} for t in plan_tasks}
    baselines = {}

    def run_cell(args):
        task_name, train_task, eval_task, vocab, layer = args
        seed = cell_seed(plan.seed, task_name, layer)
        config = pr.TrainConfig(
            learning_rate=plan.train.learning_rate,
            batch_size=plan.train.batch_size,
            max_epochs=plan.train.max_epochs,
            patience=plan.train.patience,
            seed=seed,
            holdout_fraction=plan.train.holdout_fraction,
            hidden_dim=plan.train.hidden_dim,
            use_bias=plan.train.use_bias,
        )
        train_data = rs.align(reps, train_task, vocab, layer)
        eval_data = rs.align(reps, eval_task, vocab, layer)
        log_path = None
        if run_dir is not None:
            log_path = f"{run_dir}/train_{task_name}_layer{layer}.csv"
        try:
            model, _ = pr.train(train_data, vocab, config, log_path=log_path)
        except (pr.NumericalError, ValueError, rs.AlignmentError) as e:
            raise RuntimeError(f"cell ({task_name}, layer {layer}) failed: {e}") from e
        return task_name, layer, pr.evaluate(model, eval_data)

    cell_args = []
    for task_name, train_task, eval_task, vocab, baseline, _ in jobs:
        baselines[task_name] = baseline
        for layer in layers:
            cell_args.append((task_name, train_task, eval_task, vocab, layer))

    if plan.jobs > 1:
        with ThreadPoolExecutor(max_workers=plan.jobs) as pool:
            results = list(pool.map(run_cell, cell_args))
    else:
        results = [run_cell(a) for a in cell_args]
    for task_name, layer, acc in results:
        cells[task_name][layer] = acc

    best = {t: _best_layer(cells[t]) for t in plan_tasks}
    return ExperimentReport(
        tasks=plan_tasks,
        layers=layers,
        cells=cells,
        baselines=baselines,
        best_layer=best,
        hierarchy_holds=_hierarchy(best),
        seed=plan.seed,
    )


def run_experiment(plan, run_dir=None):
    """Load the plan's files, run the sweep, and return the report."""
    from .treebank import Corpus, parse_ptb, parse_conllu

    plan.validate()
    reps = rs.read_wrep(plan.reps_path)
    missing = [l for l in plan.layers if l < 0 or l >= reps.num_layers]
    if missing:
        raise ValueError(f"layers {missing} not present in {plan.reps_path}")

    def load_ptb(path, tag):
        with open(path, encoding="utf-8") as f:
            return Corpus(parse_ptb(f.read(), source=path), split_tag=tag)

    def load_conllu(path, tag):
        with open(path, encoding="utf-8") as f:
            sentences, rejections = parse_conllu(f.read(), source=path)
        if rejections:
            raise ValueError(f"{path}: rejected sentences: {rejections}")
        return Corpus(sentences, split_tag=tag)

    const_train = const_eval = dep_train = dep_eval = None
    if any(t in WORD_TASKS for t in plan.tasks):
        const_train = load_ptb(plan.constituency_train, "train")
        const_eval = load_ptb(plan.constituency_eval, "eval")
    if "arc" in plan.tasks:
        dep_train = load_conllu(plan.dependency_train, "train")
        dep_eval = load_conllu(plan.dependency_eval, "eval")
    return sweep(reps, plan, const_train, const_eval, dep_train, dep_eval, run_dir=run_dir)


# --- emission ---------------------------------------------------------------


def emit_table(report, path):
    """TSV mirroring the report: one row per task, baseline column first,
    then one column per layer at 4 decimals; the best cell carries '*'."""
    lines = ["task\tbaseline\t" + "\t".join(f"layer{l}" for l in report.layers)]
    for task in report.tasks:
        cols = [task, f"{report.baselines[task]:.4f}"]
        for layer in report.layers:
            cell = f"{report.cells[task][layer]:.4f}"
            if layer == report.best_layer[task]:
                cell += "*"
            cols.append(cell)
        lines.append("\t".join(cols))
    text = "\n".join(lines) + "\n"
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)
    return text


def emit_layer_curves(report, csv_path, svg_path):
    """Accuracy-vs-layer curves: CSV data plus a static SVG.

    Per task the SVG holds one solid polyline, one dashed horizontal
    baseline, and one star marker on the best layer.
    """
    lines = ["task,layer,accuracy"]
    for task in report.tasks:
        for layer in report.layers:
            lines.append(f"{task},{layer},{report.cells[task][layer]:.4f}")
    with open(csv_path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
    svg = render_curves_svg(report)
    with open(svg_path, "w", encoding="utf-8") as f:
        f.write(svg)


_PALETTE = ("#2a7ab9", "#e2801a", "#3fa055", "#c2423f", "#8565b8", "#777777")


def _star_points(cx, cy, outer=7.0, inner=2.8):
    import math

    pts = []
    for k in range(10):
        r = outer if k % 2 == 0 else inner
        angle = -math.pi / 2 + k * math.pi / 5
        pts.append(f"{cx + r * math.cos(angle):.2f},{cy + r * math.sin(angle):.2f}")
    return " ".join(pts)


def render_curves_svg(report, width=640, height=420):
    margin = 50
    layers = report.layers
    lo = min(layers)
    hi = max(layers)
    span = max(hi - lo, 1)

    def sx(layer):
        return margin + (layer - lo) / span * (width - 2 * margin)

    def sy(acc):
        return height - margin - acc * (height - 2 * margin)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" '
        f'stroke="black"/>',
    ]
    for l in layers:
        parts.append(
            f'<text x="{sx(l):.2f}" y="{height - margin + 18}" font-size="11" '
            f'text-anchor="middle">{l}</text>'
        )
    for i, task in enumerate(report.tasks):
        color = _PALETTE[i % len(_PALETTE)]
        pts = " ".join(f"{sx(l):.2f},{sy(report.cells[task][l]):.2f}" for l in layers)
        parts.append(
            f'<polyline class="series" fill="none" stroke="{color}" '
            f'stroke-width="2" points="{pts}"/>'
        )
        by = sy(report.baselines[task])
        parts.append(
            f'<line class="baseline" x1="{margin}" y1="{by:.2f}" '
            f'x2="{width - margin}" y2="{by:.2f}" stroke="{color}" '
            f'stroke-dasharray="6 4" stroke-width="1"/>'
        )
        best = report.best_layer[task]
        parts.append(
            f'<polygon class="star" fill="{color}" '
            f'points="{_star_points(sx(best), sy(report.cells[task][best]))}"/>'
        )
        parts.append(
            f'<text x="{width - margin + 4}" y="{sy(report.cells[task][layers[-1]]):.2f}" '
            f'font-size="11" fill="{color}">{task}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def compare_reports(a, b, path=None):
    """Per-cell accuracy deltas (a minus b) as CSV text."""
    if set(a.tasks) != set(b.tasks) or set(a.layers) != set(b.layers):
        raise ValueError(
            f"reports are not comparable: tasks {sorted(a.tasks)} vs {sorted(b.tasks)}, "
            f"layers {a.layers} vs {b.layers}"
        )
    lines = ["task,layer,delta"]
    for task in a.tasks:
        for layer in a.layers:
            delta = a.cells[task][layer] - b.cells[task][layer]
            lines.append(f"{task},{layer},{delta:.4f}")
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
    return text
