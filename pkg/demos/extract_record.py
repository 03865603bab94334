"""
Reading one catalogue record
============================

Pull the labelled fields out of the stored record page and print them.
"""

from pathlib import Path

from bibharvest import DEFAULT_LABEL_MAP, completion_rate, extract_record

page = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "bimo0001291967.html"
html = page.read_text(encoding="utf-8")

# Rows are matched by their "label-row" cell; the value is the second cell.
result = extract_record(html, page.as_uri(), DEFAULT_LABEL_MAP)
for key, value in result.record.populated():
    print(f"{key:>30}: {value}")

# Labels the map does not know are reported instead of guessed.
print("unknown labels:", result.unknown_labels or "none")
print(f"completion: {completion_rate(result.record):.2%}")
