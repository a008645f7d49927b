import numpy as np
import pytest

import synthgrammar
from conftest import random_reps

from syntaxprobe import tasks as tk
from syntaxprobe.experiment import (
    ExperimentPlan,
    ExperimentReport,
    cell_seed,
    compare_reports,
    emit_layer_curves,
    emit_table,
    render_curves_svg,
    sweep,
)
from syntaxprobe.probe import TrainConfig
from syntaxprobe.repstore import LayeredRepresentations, RepSentence
from syntaxprobe.treebank import Corpus


def small_corpora():
    train = Corpus(synthgrammar.generate_corpus(60, seed=31, prefix="tr"))
    eval_ = Corpus(synthgrammar.generate_corpus(40, seed=32, prefix="ev"), split_tag="eval")
    return train, eval_


def noise_reps_for(corpora, dims, seed=0):
    rng = np.random.default_rng(seed)
    sentences, ids = [], []
    for corpus in corpora:
        for tree in corpus:
            sentences.append([t for t, _ in tree.leaves()])
            ids.append(tree.sentence_id)
    return random_reps(rng, sentences, dims, ids=ids)


def fast_plan(tasks, layers, seed=0):
    return ExperimentPlan(
        reps_path="<memory>", tasks=tasks, layers=layers, out_dir=".", seed=seed,
        train=TrainConfig(max_epochs=6, patience=6, hidden_dim=30),
    )


def canned_lm_parent_report():
    # Values from a published probing table, used as a fixed formatting fixture.
    cells = {"parent": {0: 0.8126, 1: 0.8724, 2: 0.9232, 3: 0.9137, 4: 0.9000}}
    return ExperimentReport(
        tasks=["parent"], layers=[0, 1, 2, 3, 4], cells=cells,
        baselines={"parent": 0.8190}, best_layer={"parent": 2},
        hierarchy_holds=None, seed=0,
    )


class TestSweep:
    def test_cell_arity(self):
        train, eval_ = small_corpora()
        reps = noise_reps_for([train, eval_], dims=[4, 4])
        plan = fast_plan(["pos", "parent", "grandparent", "greatgrandparent"], [0, 1])
        report = sweep(reps, plan, train, eval_)
        assert sum(len(v) for v in report.cells.values()) == 8
        assert len(report.baselines) == 4
        assert all(0.0 <= a <= 1.0 for cells in report.cells.values() for a in cells.values())

    def test_noise_representations_fall_to_global_majority(self):
        # Noise features carry no lexical identity, so the probe can at best
        # learn the global label distribution: its accuracy lands at the
        # global-majority rate (counted independently) and below the
        # per-word majority baseline.
        train, eval_ = small_corpora()
        reps = noise_reps_for([train, eval_], dims=[8])
        plan = fast_plan(["parent"], [0])
        plan.train = TrainConfig(max_epochs=20, patience=20, hidden_dim=30)
        report = sweep(reps, plan, train, eval_)
        from collections import Counter

        train_labels = Counter(l for _, _, l in tk.extract_word_labels(train, 1).examples)
        top_label = train_labels.most_common(1)[0][0]
        eval_labels = [l for _, _, l in tk.extract_word_labels(eval_, 1).examples]
        global_rate = sum(1 for l in eval_labels if l == top_label) / len(eval_labels)
        assert abs(report.cells["parent"][0] - global_rate) <= 0.05
        assert report.cells["parent"][0] <= report.baselines["parent"]

    def test_one_hot_gold_labels_are_recovered(self):
        train, eval_ = small_corpora()
        task_labels = {}
        for corpus in (train, eval_):
            t = tk.extract_word_labels(corpus, 1)
            for sid, idx, label in t.examples:
                task_labels[(sid, idx)] = label
        labels = sorted(set(task_labels.values()))
        width = max(len(labels), 2)
        sentences = []
        rng = np.random.default_rng(1)
        for corpus in (train, eval_):
            for tree in corpus:
                tokens = [t for t, _ in tree.leaves()]
                noise = rng.standard_normal((len(tokens), width)).astype(np.float32)
                onehot = np.zeros((len(tokens), width), dtype=np.float32)
                for i in range(len(tokens)):
                    onehot[i, labels.index(task_labels[(tree.sentence_id, i)])] = 1.0
                sentences.append(
                    RepSentence(tree.sentence_id, tuple(tokens), [noise, onehot])
                )
        reps = LayeredRepresentations(layer_dims=[width, width], sentences=sentences)
        plan = fast_plan(["parent"], [1])
        plan.train = TrainConfig(max_epochs=20, patience=20, hidden_dim=30)
        report = sweep(reps, plan, train, eval_)
        assert report.cells["parent"][1] >= 0.99

    def test_arc_task_baseline_and_cells(self):
        train, eval_ = small_corpora()
        dep_train = Corpus([synthgrammar.to_dependency(t) for t in train])
        dep_eval = Corpus([synthgrammar.to_dependency(t) for t in eval_], split_tag="eval")
        reps = noise_reps_for([train, eval_], dims=[4])
        plan = fast_plan(["arc"], [0])
        report = sweep(reps, plan, dep_train=dep_train, dep_eval=dep_eval)
        assert report.baselines["arc"] == 0.5
        assert 0 in report.cells["arc"]

    def test_rerun_is_byte_exact(self):
        train, eval_ = small_corpora()
        reps = noise_reps_for([train, eval_], dims=[4, 4])
        plan = fast_plan(["pos", "parent"], [0, 1], seed=9)
        a = sweep(reps, plan, train, eval_).to_json()
        b = sweep(reps, plan, train, eval_).to_json()
        assert a.encode() == b.encode()

    def test_parallel_equals_serial(self):
        train, eval_ = small_corpora()
        reps = noise_reps_for([train, eval_], dims=[4, 4])
        plan = fast_plan(["pos", "parent"], [0, 1], seed=9)
        serial = sweep(reps, plan, train, eval_).to_json()
        plan.jobs = 4
        parallel = sweep(reps, plan, train, eval_).to_json()
        assert serial == parallel

    def test_best_layer_tie_breaks_shallow(self):
        report = ExperimentReport(
            tasks=["pos"], layers=[0, 1, 2], cells={"pos": {0: 0.5, 1: 0.7, 2: 0.7}},
            baselines={"pos": 0.4}, best_layer={}, hierarchy_holds=None, seed=0,
        )
        from syntaxprobe.experiment import _best_layer

        assert _best_layer(report.cells["pos"]) == 1

    def test_cell_seed_stable(self):
        assert cell_seed(3, "pos", 1) == cell_seed(3, "pos", 1)
        assert cell_seed(3, "pos", 1) != cell_seed(3, "pos", 2)
        assert cell_seed(3, "pos", 1) != cell_seed(4, "pos", 1)

    def test_report_json_round_trip(self):
        report = canned_lm_parent_report()
        again = ExperimentReport.from_json(report.to_json())
        assert again.cells == report.cells
        assert again.to_json() == report.to_json()


class TestEmitTable:
    def test_paper_style_row(self, tmp_path):
        report = canned_lm_parent_report()
        text = emit_table(report, tmp_path / "t.tsv")
        lines = text.splitlines()
        assert lines[0] == "task\tbaseline\tlayer0\tlayer1\tlayer2\tlayer3\tlayer4"
        assert lines[1] == "parent\t0.8190\t0.8126\t0.8724\t0.9232*\t0.9137\t0.9000"

    def test_single_task_single_row(self, tmp_path):
        report = canned_lm_parent_report()
        text = emit_table(report, tmp_path / "t.tsv")
        assert len(text.splitlines()) == 2

    def test_regeneration_is_byte_identical(self, tmp_path):
        report = canned_lm_parent_report()
        a = emit_table(report, tmp_path / "a.tsv")
        b = emit_table(report, tmp_path / "b.tsv")
        assert (tmp_path / "a.tsv").read_bytes() == (tmp_path / "b.tsv").read_bytes()
        assert a == b

    def test_arc_variant_schema(self, tmp_path):
        report = ExperimentReport(
            tasks=["arc"], layers=[0, 1, 2, 3, 4],
            cells={"arc": {0: 0.62, 1: 0.74, 2: 0.78, 3: 0.80, 4: 0.73}},
            baselines={"arc": 0.5}, best_layer={"arc": 3}, hierarchy_holds=None, seed=0,
        )
        text = emit_table(report, tmp_path / "arc.tsv")
        assert text.splitlines()[1] == "arc\t0.5000\t0.6200\t0.7400\t0.7800\t0.8000*\t0.7300"


def two_task_report():
    return ExperimentReport(
        tasks=["pos", "parent"], layers=[0, 1, 2],
        cells={"pos": {0: 0.6, 1: 0.8, 2: 0.7}, "parent": {0: 0.5, 1: 0.6, 2: 0.9}},
        baselines={"pos": 0.55, "parent": 0.45},
        best_layer={"pos": 1, "parent": 2}, hierarchy_holds=None, seed=0,
    )


class TestCurves:
    def test_svg_element_counts(self, tmp_path):
        report = two_task_report()
        emit_layer_curves(report, tmp_path / "c.csv", tmp_path / "c.svg")
        svg = (tmp_path / "c.svg").read_text()
        assert svg.count('class="series"') == 2
        assert svg.count('class="baseline"') == 2
        assert svg.count('class="star"') == 2

    def test_csv_row_count(self, tmp_path):
        report = two_task_report()
        emit_layer_curves(report, tmp_path / "c.csv", tmp_path / "c.svg")
        lines = (tmp_path / "c.csv").read_text().strip().splitlines()
        assert len(lines) == 1 + 2 * 3

    def test_star_on_deepest_layer_for_monotone_series(self):
        report = ExperimentReport(
            tasks=["pos"], layers=[0, 1, 2], cells={"pos": {0: 0.1, 1: 0.2, 2: 0.3}},
            baselines={"pos": 0.15}, best_layer={"pos": 2}, hierarchy_holds=None, seed=0,
        )
        svg = render_curves_svg(report)
        star = svg.split('class="star"')[1]
        # star x coordinate equals the last layer's x position
        assert f'{50 + (2 - 0) / 2 * (640 - 100):.2f}'.split(".")[0] in star


class TestCompare:
    def test_identical_reports_zero_deltas(self):
        a = two_task_report()
        text = compare_reports(a, a)
        rows = text.strip().splitlines()[1:]
        assert all(row.endswith("0.0000") for row in rows)

    def test_mismatched_layers_rejected(self):
        a = two_task_report()
        b = two_task_report()
        b.layers = [5, 6, 7]
        with pytest.raises(ValueError):
            compare_reports(a, b)

    def test_single_cell_difference(self):
        a = two_task_report()
        b = two_task_report()
        b.cells = {t: dict(cells) for t, cells in b.cells.items()}
        b.cells["parent"][2] = 0.8
        rows = compare_reports(a, b).strip().splitlines()[1:]
        nonzero = [r for r in rows if not r.endswith("0.0000")]
        assert nonzero == ["parent,2,0.1000"]
