"""
Rendering scraper prompts
=========================

Print both built-in prompt specs, then fill a placeholder by hand.
"""

from bibharvest.promptgen import expand_placeholders, load_spec, render_prompt, section_headers

for name in ("scraper_single", "scraper_loop"):
    text = render_prompt(load_spec(name))
    print(f"--- {name}: {len(section_headers(text))} sections ---")
    print(text)

# XXXX-style tokens can be bound to one value or a list of them.
line = "Match <strong>XXXX</strong> in each row."
print(expand_placeholders(line, {"XXXX": ["Título", "Editorial"]}))
