"""Taxonomy loading, grouped label selection, and diagnosis prompts."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecgalign.ddp import (
    DiagnosisSelection,
    GroupedClassifier,
    LabelDef,
    fit_group_classifiers,
    load_classifier,
    load_taxonomy,
    render_prompt,
    save_classifier,
    select,
)
from ecgalign.errors import DegenerateLabels, IoError, MalformedManifest

# ------------------------------------------------------------------- taxonomy


def test_packaged_taxonomy_loads_and_covers_all_groups() -> None:
    labels = load_taxonomy()
    assert len(labels) >= 3
    codes = [d.code for d in labels]
    assert len(codes) == len(set(codes))
    groups = {d.group for d in labels}
    assert groups == {"Disease", "Form", "Rhythm"}
    by_code = {d.code: d for d in labels}
    assert by_code["SR"].group == "Rhythm"
    assert by_code["SR"].description == "sinus rhythm"
    assert by_code["LBBB"].group == "Disease"


def test_load_taxonomy_from_explicit_file(tmp_path) -> None:
    p = tmp_path / "tax.json"
    p.write_text(
        '[{"code": "X", "description": "thing", "group": "Form",'
        ' "synonyms": ["alias"]}]'
    )
    labels = load_taxonomy(p)
    assert labels == [LabelDef("X", "thing", "Form", ("alias",))]


def test_load_taxonomy_missing_file() -> None:
    with pytest.raises(IoError):
        load_taxonomy("/nonexistent/tax.json")


@pytest.mark.parametrize(
    "payload",
    [
        "not json",
        '{"code": "X"}',  # object, not array
        '[{"code": "X", "group": "Form"}]',  # missing description
        '[{"code": "X", "description": "d", "group": "Nope"}]',  # bad group
        '[{"code": "X", "description": "d", "group": "Form"},'
        ' {"code": "X", "description": "d2", "group": "Form"}]',  # dup code
    ],
)
def test_load_taxonomy_rejects_malformed(tmp_path, payload: str) -> None:
    p = tmp_path / "tax.json"
    p.write_text(payload)
    with pytest.raises(MalformedManifest):
        load_taxonomy(p)


def test_labeldef_validates_group() -> None:
    with pytest.raises(ValueError):
        LabelDef("X", "x", "Other")


# ------------------------------------------------------------------ selection


def test_select_thresholds_disease_and_form_argmaxes_rhythm(
    tiny_taxonomy,
) -> None:
    # tiny_taxonomy order: SR, AFIB (Rhythm), NORM, LBBB (Disease),
    # PVC, STD (Form)
    probs = [0.2, 0.7, 0.9, 0.6, 0.4, 0.55]
    sel = select(probs, tiny_taxonomy, tau_disease=0.5, tau_form=0.5)
    assert sel.rhythm.code == "AFIB"
    assert [d.code for d in sel.disease] == ["NORM", "LBBB"]
    assert [d.code for d in sel.form] == ["STD"]
    # probabilities carry only the selected labels
    assert set(sel.probabilities) == {"AFIB", "NORM", "LBBB", "STD"}
    assert sel.probabilities["AFIB"] == pytest.approx(0.7)


def test_select_rhythm_always_present_even_below_threshold(
    tiny_taxonomy,
) -> None:
    sel = select([0.1, 0.05, 0.0, 0.0, 0.0, 0.0], tiny_taxonomy)
    assert sel.rhythm.code == "SR"
    assert sel.disease == [] and sel.form == []


def test_select_rhythm_tie_takes_lowest_index(tiny_taxonomy) -> None:
    sel = select([0.4, 0.4, 0.0, 0.0, 0.0, 0.0], tiny_taxonomy)
    assert sel.rhythm.code == "SR"


def test_select_validates_inputs(tiny_taxonomy) -> None:
    with pytest.raises(ValueError):
        select([0.5, 0.5], tiny_taxonomy)
    with pytest.raises(ValueError):
        select([1.5, 0, 0, 0, 0, 0], tiny_taxonomy)
    with pytest.raises(ValueError):
        select([-0.1, 0, 0, 0, 0, 0], tiny_taxonomy)


SIX_LABELS = [
    LabelDef("SR", "sinus rhythm", "Rhythm"),
    LabelDef("AFIB", "atrial fibrillation", "Rhythm"),
    LabelDef("NORM", "normal ECG", "Disease"),
    LabelDef("LBBB", "left bundle branch block", "Disease"),
    LabelDef("PVC", "premature ventricular contractions", "Form"),
    LabelDef("STD", "non-specific ST depression", "Form"),
]


@settings(max_examples=40, deadline=None)
@given(
    probs=st.lists(
        st.floats(min_value=0.0, max_value=1.0), min_size=6, max_size=6
    ),
    tau_lo=st.floats(min_value=0.0, max_value=1.0),
    tau_hi=st.floats(min_value=0.0, max_value=1.0),
)
def test_select_monotone_in_threshold(
    probs, tau_lo: float, tau_hi: float
) -> None:
    """Raising a threshold can only shrink that group's selection."""
    if tau_lo > tau_hi:
        tau_lo, tau_hi = tau_hi, tau_lo
    loose = select(probs, SIX_LABELS, tau_disease=tau_lo, tau_form=tau_lo)
    strict = select(probs, SIX_LABELS, tau_disease=tau_hi, tau_form=tau_hi)
    assert {d.code for d in strict.disease} <= {d.code for d in loose.disease}
    assert {d.code for d in strict.form} <= {d.code for d in loose.form}
    # rhythm is threshold-independent
    assert strict.rhythm.code == loose.rhythm.code


# ------------------------------------------------------------------ rendering


def test_render_prompt_exact_two_clause_sentence() -> None:
    sel = DiagnosisSelection(
        rhythm=LabelDef("SR", "sinus rhythm", "Rhythm"),
        disease=[LabelDef("LBBB", "left bundle branch block", "Disease")],
        form=[],
    )
    assert (
        render_prompt(sel)
        == "Sinus rhythm is present; Left bundle branch block is present."
    )


def test_render_prompt_orders_rhythm_disease_form() -> None:
    sel = DiagnosisSelection(
        rhythm=LabelDef("SR", "sinus rhythm", "Rhythm"),
        disease=[LabelDef("MI", "myocardial infarction", "Disease")],
        form=[LabelDef("PVC", "premature ventricular contractions", "Form")],
    )
    assert render_prompt(sel) == (
        "Sinus rhythm is present; Myocardial infarction is present; "
        "Premature ventricular contractions is present."
    )


def test_render_prompt_empty_selection_is_empty_string() -> None:
    assert render_prompt(DiagnosisSelection(rhythm=None, disease=[], form=[])) == ""


def test_render_prompt_single_clause_still_terminated() -> None:
    sel = DiagnosisSelection(
        rhythm=LabelDef("AFIB", "atrial fibrillation", "Rhythm"),
        disease=[],
        form=[],
    )
    assert render_prompt(sel) == "Atrial fibrillation is present."


# ----------------------------------------------------------------- classifier


def grouped_training_data(tiny_taxonomy, seed: int = 0):
    rng = np.random.default_rng(seed)
    n, c = 60, len(tiny_taxonomy)
    labels = np.zeros((n, c))
    # exactly one rhythm per record, independent disease/form flags
    labels[np.arange(n), rng.integers(0, 2, size=n)] = 1.0
    labels[:, 2:] = (rng.random((n, c - 2)) < 0.4).astype(float)
    basis = rng.normal(size=(c, 8)) * 3.0
    embs = labels @ basis + rng.normal(scale=0.05, size=(n, 8))
    return embs, labels


def test_fit_group_classifiers_learns_separable_labels(tiny_taxonomy) -> None:
    embs, labels = grouped_training_data(tiny_taxonomy)
    clf = fit_group_classifiers(embs, labels, tiny_taxonomy, steps=600)
    probs = clf.predict_probs(embs)
    assert probs.shape == labels.shape
    preds = probs >= 0.5
    assert (preds == labels.astype(bool)).mean() > 0.95


def test_fit_group_classifiers_validates_shapes(tiny_taxonomy) -> None:
    with pytest.raises(DegenerateLabels):
        fit_group_classifiers(np.ones((4, 2)), np.ones((4, 0)), [])
    with pytest.raises(ValueError):
        fit_group_classifiers(np.ones((4, 2)), np.ones((4, 3)), tiny_taxonomy)


def test_untrained_labels_read_zero_probability(tiny_taxonomy) -> None:
    embs, labels = grouped_training_data(tiny_taxonomy)
    labels[:, 5] = 0.0  # STD never occurs in training
    clf = fit_group_classifiers(embs, labels, tiny_taxonomy, steps=100)
    probs = clf.predict_probs(embs[:3])
    assert np.all(probs[:, 5] == 0.0)
    # so the default threshold can never select it
    sel = select(probs[0], tiny_taxonomy)
    assert all(d.code != "STD" for d in sel.form)


def test_classifier_save_load_round_trip(tmp_path, tiny_taxonomy) -> None:
    embs, labels = grouped_training_data(tiny_taxonomy)
    clf = fit_group_classifiers(embs, labels, tiny_taxonomy, steps=50)
    path = tmp_path / "clf.bin"
    save_classifier(clf, path)
    back = load_classifier(path)
    assert back.labels == clf.labels
    assert np.array_equal(back.probe.trained, clf.probe.trained)
    # the container stores float32, so expect single precision back
    np.testing.assert_allclose(
        back.probe.weights, clf.probe.weights, rtol=1e-6, atol=1e-6
    )
    np.testing.assert_allclose(
        back.probe.bias, clf.probe.bias, rtol=1e-6, atol=1e-6
    )
    np.testing.assert_allclose(
        back.predict_probs(embs[:4]), clf.predict_probs(embs[:4]), atol=1e-4
    )
