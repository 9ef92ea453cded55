"""Pause annotation, truncation negatives, dataset builds, and scoring."""

import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from s2s.sftdata import (
    DEFAULT_TAU_MS,
    AnnotateError,
    Boundary,
    BuildConfig,
    BuildError,
    EvalError,
    EvalMetrics,
    Label,
    SftExample,
    SourceDialogue,
    Utterance,
    annotate_pauses,
    boundary_examples,
    build_dataset,
    evaluate,
    export_records,
    import_records,
    load_corpus,
    load_dialogue,
    load_labels,
    make_negative,
    make_negatives,
    render_report_row,
    truncate_utterance,
    whitespace_tokens,
)


def utt(speaker, text, t0, t1):
    return Utterance(speaker=speaker, text=text, t_start_ms=t0, t_end_ms=t1)


def dlg(*utts, id="d0"):
    return SourceDialogue(id=id, utterances=tuple(utts))


# --- pause annotation ----------------------------------------------------------

def test_pause_labels_by_tau():
    d = dlg(
        utt("user", "tell me something", 0, 1000),
        utt("agent", "well then", 1700, 2500),      # pause 700  -> Respond
        utt("user", "go on", 3100, 3500),           # pause 600  -> Continue
        utt("agent", "and another thing", 3400, 4200),  # pause -100 -> Interrupt
    )
    got = annotate_pauses(d)
    assert got == [
        Boundary(index=0, pause_ms=700, label=Label.RESPOND),
        Boundary(index=1, pause_ms=600, label=Label.CONTINUE),
        Boundary(index=2, pause_ms=-100, label=Label.INTERRUPT),
    ]


def test_tau_boundary_is_inclusive():
    d = dlg(utt("user", "a", 0, 0), utt("agent", "b", 699, 700))
    assert annotate_pauses(d)[0].label is Label.CONTINUE
    d = dlg(utt("user", "a", 0, 0), utt("agent", "b", 700, 701))
    assert annotate_pauses(d)[0].label is Label.RESPOND
    # zero pause counts as continue, not interrupt
    d = dlg(utt("user", "a", 0, 500), utt("agent", "b", 500, 900))
    assert annotate_pauses(d)[0].label is Label.CONTINUE


def test_same_speaker_overlap_is_annotation_error():
    d = dlg(utt("user", "a", 0, 1000), utt("user", "b", 900, 1500))
    with pytest.raises(AnnotateError):
        annotate_pauses(d)


def test_dialogue_requires_time_order():
    with pytest.raises(AnnotateError):
        dlg(utt("user", "a", 1000, 1200), utt("agent", "b", 500, 800))


def test_utterance_rejects_negative_duration():
    with pytest.raises(AnnotateError):
        utt("user", "a", 100, 50)


def test_custom_tau():
    d = dlg(utt("user", "a", 0, 0), utt("agent", "b", 400, 500))
    assert annotate_pauses(d, tau_ms=400)[0].label is Label.RESPOND
    assert annotate_pauses(d, tau_ms=401)[0].label is Label.CONTINUE


@given(
    st.lists(st.tuples(st.integers(0, 2000), st.integers(0, 1500)), min_size=2, max_size=12),
    st.integers(100, 1500),
)
@settings(max_examples=200, deadline=None)
def test_annotation_matches_independent_oracle(gaps, tau):
    """Alternating speakers with arbitrary gaps: labels must follow the
    sign/threshold rule computed independently here."""
    t = 0
    utts = []
    pauses = []
    for i, (gap, dur) in enumerate(gaps):
        start = t + gap - 500  # allow negative pauses up to 500 ms
        if i == 0:
            start = 0
        start = max(start, utts[-1].t_start_ms if utts else 0)  # keep start order
        end = start + dur
        utts.append(utt("user" if i % 2 == 0 else "agent", f"u{i}", start, end))
        if i > 0:
            pauses.append(start - utts[-2].t_end_ms)
        t = end
    got = annotate_pauses(dlg(*utts), tau_ms=tau)
    for boundary, pause in zip(got, pauses):
        assert boundary.pause_ms == pause
        if pause < 0:
            want = Label.INTERRUPT
        elif pause >= tau:
            want = Label.RESPOND
        else:
            want = Label.CONTINUE
        assert boundary.label is want


def test_boundary_examples_carry_full_prefix():
    d = dlg(
        utt("user", "one", 0, 100),
        utt("agent", "two", 900, 1000),
        utt("user", "three", 1100, 1200),
    )
    examples = boundary_examples(d)
    assert len(examples) == 2
    assert [u.text for u in examples[0].prefix] == ["one"]
    assert [u.text for u in examples[1].prefix] == ["one", "two"]
    assert examples[0].label is Label.RESPOND
    assert not examples[0].is_negative
    assert examples[0].pause_ms == 800


# --- truncation negatives --------------------------------------------------------

def test_truncation_keeps_strict_prefix_and_scales_time():
    u = utt("user", "one two three four", 1000, 2000)
    cut1 = truncate_utterance(u, 1)
    assert cut1.text == "one"
    assert cut1.t_end_ms == 1250
    cut3 = truncate_utterance(u, 3)
    assert cut3.text == "one two three"
    assert cut3.t_end_ms == 1750
    for bad in (0, 4, 5):
        with pytest.raises(ValueError):
            truncate_utterance(u, bad)


def test_make_negative_shape():
    d = dlg(
        utt("user", "hello there", 0, 400),
        utt("agent", "hi how are you today", 1200, 2200),
    )
    ex = make_negative(d, 1, 2)
    assert ex.label is Label.CONTINUE
    assert ex.is_negative
    assert ex.pause_ms is None
    assert ex.cut_position == 2
    assert ex.prefix[-1].text == "hi how"
    assert ex.prefix[0].text == "hello there"  # untouched context before the cut


def test_negative_invariants_enforced():
    with pytest.raises(ValueError):
        SftExample(dialogue_id="d", prefix=(), label=Label.INTERRUPT, is_negative=True)
    with pytest.raises(ValueError):
        SftExample(dialogue_id="d", prefix=(), label=Label.CONTINUE,
                   is_negative=True, pause_ms=10)
    with pytest.raises(ValueError):
        SftExample(dialogue_id="d", prefix=(), label=Label.RESPOND, is_negative=False)


def test_make_negatives_sampling_is_seeded_and_without_replacement():
    d = dlg(*[utt("user" if i % 2 == 0 else "agent",
                  f"word{i} extra tokens here", i * 1000, i * 1000 + 500)
              for i in range(8)])
    first, skipped = make_negatives(d, 5, seed=42)
    second, _ = make_negatives(d, 5, seed=42)
    assert [e.as_dict() for e in first] == [e.as_dict() for e in second]
    assert skipped == 0
    sources = [(e.prefix[-1].t_start_ms, e.cut_position) for e in first]
    assert len(set(s for s, _ in sources)) == len(sources)  # distinct utterances
    different, _ = make_negatives(d, 5, seed=43)
    assert [e.as_dict() for e in different] != [e.as_dict() for e in first]


def test_make_negatives_skips_short_utterances():
    d = dlg(
        utt("user", "hi", 0, 100),          # 1 token: ineligible
        utt("agent", "well hello", 500, 900),
    )
    examples, skipped = make_negatives(d, 5, seed=0)
    assert len(examples) == 1
    assert skipped == 1


def test_make_negatives_explicit_cuts():
    d = dlg(utt("user", "a b c d", 0, 400), utt("agent", "e f", 500, 700))
    examples, skipped = make_negatives(d, 0, cuts=[(0, 2), (1, 1)])
    assert [(e.prefix[-1].text, e.cut_position) for e in examples] == [("a b", 2), ("e", 1)]
    assert skipped == 0


@given(st.text(alphabet="ab ", min_size=3, max_size=60), st.data())
@settings(max_examples=200, deadline=None)
def test_truncation_is_always_a_strict_prefix(text, data):
    tokens = whitespace_tokens(text)
    if len(tokens) < 2:
        return
    cut = data.draw(st.integers(1, len(tokens) - 1))
    u = utt("user", text, 0, 1000)
    truncated = truncate_utterance(u, cut)
    assert whitespace_tokens(truncated.text) == tokens[:cut]
    assert len(truncated.text) < len(" ".join(tokens)) or truncated.text != " ".join(tokens)
    assert u.t_start_ms <= truncated.t_end_ms <= u.t_end_ms


# --- dataset build -----------------------------------------------------------------

def corpus(n_dialogues=6, utts_per=8, seed=1):
    rng = random.Random(seed)
    out = []
    for di in range(n_dialogues):
        t = 0
        utts = []
        for ui in range(utts_per):
            words = " ".join(f"w{rng.randrange(30)}" for _ in range(rng.randint(1, 6)))
            dur = rng.randint(200, 1500)
            utts.append(utt("user" if ui % 2 == 0 else "agent", words, t, t + dur))
            t += dur + rng.randint(0, 1400)  # non-negative pauses only
        out.append(dlg(*utts, id=f"d{di}"))
    return out


def test_build_dataset_counts_and_manifest():
    dialogues = corpus()
    examples, manifest = build_dataset(dialogues, BuildConfig(neg_ratio=1.0, seed=7))
    n_pos = sum(len(d.utterances) - 1 for d in dialogues)
    assert manifest["positives"] == n_pos
    assert manifest["negatives"] == min(n_pos, manifest["negatives"])
    assert manifest["total"] == len(examples) == manifest["positives"] + manifest["negatives"]
    assert sum(manifest["by_label"].values()) == manifest["total"]
    assert sum(manifest["by_dialogue"].values()) == manifest["total"]
    assert manifest["tau_ms"] == DEFAULT_TAU_MS
    assert manifest["seed"] == 7
    negatives = [e for e in examples if e.is_negative]
    assert all(e.label is Label.CONTINUE for e in negatives)


def test_build_dataset_neg_ratio_scales():
    dialogues = corpus()
    _, m_half = build_dataset(dialogues, BuildConfig(neg_ratio=0.5, seed=0))
    _, m_zero = build_dataset(dialogues, BuildConfig(neg_ratio=0.0, seed=0))
    assert m_zero["negatives"] == 0
    assert m_half["negatives"] == round(0.5 * m_half["positives"])


def test_build_dataset_is_deterministic_per_seed(tmp_path):
    dialogues = corpus()
    a, ma = build_dataset(dialogues, BuildConfig(seed=5))
    b, mb = build_dataset(dialogues, BuildConfig(seed=5))
    export_records(a, tmp_path / "a.ndjson")
    export_records(b, tmp_path / "b.ndjson")
    assert (tmp_path / "a.ndjson").read_bytes() == (tmp_path / "b.ndjson").read_bytes()
    assert ma == mb
    c, _ = build_dataset(dialogues, BuildConfig(seed=6))
    assert [e.as_dict() for e in c] != [e.as_dict() for e in a]


def test_build_dataset_rejects_empty_corpus():
    with pytest.raises(BuildError):
        build_dataset([])


def test_corpus_round_trip_via_files(tmp_path):
    dialogues = corpus(n_dialogues=3)
    for d in dialogues:
        lines = "\n".join(json.dumps(u.as_dict()) for u in d.utterances)
        (tmp_path / f"{d.id}.ndjson").write_text(lines + "\n")
    loaded = load_corpus(tmp_path)
    assert [d.id for d in loaded] == ["d0", "d1", "d2"]
    assert loaded[0].utterances == dialogues[0].utterances
    one = load_dialogue(tmp_path / "d1.ndjson")
    assert one.id == "d1"


def test_export_import_round_trip(tmp_path):
    examples, _ = build_dataset(corpus(), BuildConfig(seed=3))
    path = tmp_path / "data.ndjson"
    summary = export_records(examples, path)
    assert summary["total"] == len(examples)
    again = import_records(path)
    assert [e.as_dict() for e in again] == [e.as_dict() for e in examples]


# --- scoring ------------------------------------------------------------------------

def labels(spec):
    table = {"i": Label.INTERRUPT, "r": Label.RESPOND, "c": Label.CONTINUE}
    return [table[ch] for ch in spec]


def test_confusion_matrix_small_case():
    gold = labels("iircc")
    pred = labels("icrci")
    m = evaluate(pred, gold)
    assert (m.tp, m.fp, m.fn, m.tn) == (1, 1, 1, 2)
    assert m.accuracy == pytest.approx(3 / 5)
    assert m.precision == pytest.approx(1 / 2)
    assert m.recall == pytest.approx(1 / 2)


def test_degenerate_denominators_are_none():
    m = evaluate(labels("cc"), labels("cc"))
    assert m.precision is None
    assert m.recall is None
    assert m.accuracy == 1.0
    assert render_report_row(m) == "1.00 - -"


def test_evaluate_rejects_mismatch_and_empty():
    with pytest.raises(EvalError):
        evaluate(labels("ic"), labels("i"))
    with pytest.raises(EvalError):
        evaluate([], [])


def test_report_row_fixture():
    # tp=83 fp=23 fn=17 tn=321: accuracy 404/444, precision 83/106, recall 83/100
    gold = labels("i" * 100 + "c" * 344)
    pred = labels("i" * 83 + "r" * 17 + "i" * 23 + "c" * 321)
    m = evaluate(pred, gold)
    assert (m.tp, m.fp, m.fn, m.tn) == (83, 23, 17, 321)
    assert render_report_row(m) == "0.91 0.78 0.83"


@given(st.lists(st.tuples(st.sampled_from(list(Label)), st.sampled_from(list(Label))),
                min_size=1, max_size=400))
@settings(max_examples=300, deadline=None)
def test_metrics_match_brute_force(pairs):
    pred = [p for p, _ in pairs]
    gold = [g for _, g in pairs]
    m = evaluate(pred, gold)
    tp = sum(1 for p, g in pairs if p is Label.INTERRUPT and g is Label.INTERRUPT)
    fp = sum(1 for p, g in pairs if p is Label.INTERRUPT and g is not Label.INTERRUPT)
    fn = sum(1 for p, g in pairs if p is not Label.INTERRUPT and g is Label.INTERRUPT)
    tn = len(pairs) - tp - fp - fn
    assert (m.tp, m.fp, m.fn, m.tn) == (tp, fp, fn, tn)
    assert m.accuracy == pytest.approx((tp + tn) / len(pairs))
    if tp + fp:
        assert m.precision == pytest.approx(tp / (tp + fp))
    else:
        assert m.precision is None
    if tp + fn:
        assert m.recall == pytest.approx(tp / (tp + fn))
    else:
        assert m.recall is None


def test_load_labels(tmp_path):
    path = tmp_path / "labels.txt"
    path.write_text("interrupt\nrespond\n\ncontinue\nRESPOND\n")
    assert load_labels(path) == labels("ircr")
    bad = tmp_path / "bad.txt"
    bad.write_text("interrupt\nmaybe\n")
    with pytest.raises(EvalError):
        load_labels(bad)
