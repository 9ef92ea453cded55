"""
Turn-taking training data from timed transcripts
================================================

Label the pauses of a small dialogue (respond / continue / interrupt),
add truncation negatives, and score a mock predictor with the standard
report row: accuracy, precision, recall.
"""

from s2s.sftdata import (
    BuildConfig,
    Label,
    SourceDialogue,
    Utterance,
    annotate_pauses,
    build_dataset,
    evaluate,
    render_report_row,
)

# one dialogue with every pause regime: a long gap (respond), a short
# gap (continue), and an overlap across speakers (interrupt)
dialogue = SourceDialogue(id="demo", utterances=(
    Utterance("user", "so what do you think about the plan", 0, 2100),
    Utterance("agent", "it holds together", 3000, 4200),         # pause 900
    Utterance("user", "right and the budget works too", 4500, 6000),  # pause 300
    Utterance("agent", "about that, one concern", 5800, 7000),   # pause -200
))

print("pause labels:")
for b in annotate_pauses(dialogue):
    print(f"  after utterance {b.index}: pause={b.pause_ms:5d} ms -> {b.label.value}")

# negatives are cut-off copies of real utterances; same seed, same bytes
examples, manifest = build_dataset([dialogue], BuildConfig(neg_ratio=1.0, seed=7))
print(f"\nbuilt {manifest['total']} examples "
      f"({manifest['positives']} boundary, {manifest['negatives']} truncation)")
for ex in examples:
    tail = ex.prefix[-1].text
    kind = "truncated" if ex.is_negative else f"pause {ex.pause_ms} ms"
    print(f"  {ex.label.value:9s} [{kind}] ...{tail[-30:]!r}")

# score predictions that call one extra interruption
gold = [ex.label for ex in examples]
pred = list(gold)
pred[next(i for i, l in enumerate(gold) if l is Label.CONTINUE)] = Label.INTERRUPT
metrics = evaluate(pred, gold)
print(f"\nacc/prec/recall: {render_report_row(metrics)}")
print(f"counts: tp={metrics.tp} fp={metrics.fp} fn={metrics.fn} tn={metrics.tn}")
