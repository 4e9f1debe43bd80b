"""Figure rendering: every chart lands on disk as a real PNG."""

import math

from crossaug.augmenter import AugmentationReport
from crossaug.corpus import Corpus, DomainSimilarityReport, LabeledSentence
from crossaug.reports import (
    experiment_chart,
    filter_chart,
    similarity_chart,
    training_curves,
)
from crossaug.tagger import ExperimentResult, F1Report
from crossaug.trainer import EpochLog

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def assert_png(path):
    data = path.read_bytes()
    assert data[: len(PNG_MAGIC)] == PNG_MAGIC
    assert len(data) > 1000


def entry(phase, epoch, detrans=float("nan")):
    return EpochLog(phase=phase, epoch=epoch, loss_noise=2.0 / (epoch + 1),
                    loss_trans=0.0 if phase == 1 else 1.5, loss_adv=0.7,
                    dev_ppl_denoise=8.0 / (epoch + 1), dev_ppl_detrans=detrans,
                    criterion=8.0 / (epoch + 1))


class TestTrainingCurves:
    def test_phase1_only(self, tmp_path):
        history = [entry(1, i) for i in range(4)]
        out = tmp_path / "curves.png"
        training_curves(history, out)
        assert_png(out)

    def test_two_phases_with_detransform(self, tmp_path):
        history = [entry(1, i) for i in range(3)]
        history += [entry(2, 3 + i, detrans=5.0 - i) for i in range(3)]
        out = tmp_path / "curves.png"
        training_curves(history, out)
        assert_png(out)

    def test_all_nan_detransform_is_fine(self, tmp_path):
        history = [entry(1, i) for i in range(2)]
        out = tmp_path / "c.png"
        training_curves(history, out)
        assert_png(out)
        assert math.isnan(history[0].dev_ppl_detrans)


class TestExperimentChart:
    def test_renders(self, tmp_path):
        result = ExperimentResult(
            source=F1Report.from_counts(2, 2, 2),
            source_gen=F1Report.from_counts(3, 1, 1),
            target=F1Report.from_counts(4, 0, 0),
            source_size=10, source_gen_size=12, target_size=8,
        )
        out = tmp_path / "exp.png"
        experiment_chart(result, out)
        assert_png(out)

    def test_all_zero_scores(self, tmp_path):
        zero = F1Report.from_counts(0, 0, 0)
        result = ExperimentResult(source=zero, source_gen=zero, target=zero,
                                  source_size=1, source_gen_size=1,
                                  target_size=1)
        out = tmp_path / "exp.png"
        experiment_chart(result, out)
        assert_png(out)


class TestFilterChart:
    def test_renders(self, tmp_path):
        generated = Corpus("g", (LabeledSentence(("x",), ("B-GPE",)),), ("GPE",))
        report = AugmentationReport(generated=generated, produced=5,
                                    rejected_rule1=2, rejected_rule2=1,
                                    rejected_rule3=1, accepted=1)
        out = tmp_path / "filters.png"
        filter_chart(report, out)
        assert_png(out)


class TestSimilarityChart:
    def test_renders_multiple_bars(self, tmp_path):
        reports = {
            "a vs b": DomainSimilarityReport.from_counts(63666, 14056),
            "c vs d": DomainSimilarityReport.from_counts(76347, 1375),
        }
        out = tmp_path / "sim.png"
        similarity_chart(reports, out)
        assert_png(out)
