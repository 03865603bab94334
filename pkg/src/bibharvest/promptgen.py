"""Five-section prompt rendering.

A :class:`PromptSpec` describes a code-generation prompt as Role, Context and
purpose, Inputs and constraints, Input and output examples, and Detailed
steps. :func:`render_prompt` turns it into markdown-ish text meant to be
pasted into a chat interface by a person; nothing here talks to a model.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import yaml

SECTION_HEADERS = (
    "**Role**",
    "**Context and purpose**",
    "**Inputs and constraints**",
    "**Input and output examples**",
    "**Detailed steps**",
)
MODALITIES = ("mandatory", "optional")
OPTIONAL_MARKER = "optionally:"

_PLACEHOLDER = re.compile(r"\b([A-Z])\1{3,}\b")


class PromptError(Exception):
    pass


class InvalidSpec(PromptError):
    def __init__(self, violations: Sequence[str]):
        super().__init__("; ".join(violations))
        self.violations = list(violations)


class UnboundPlaceholder(PromptError):
    pass


@dataclass
class Role:
    domains: list[str]
    expertise: list[str] = field(default_factory=list)


@dataclass
class Context:
    problem: str
    environment: str = ""
    level_of_detail: Optional[str] = None


@dataclass
class Constraint:
    text: str
    modality: str = "mandatory"


@dataclass
class IOExample:
    input: str
    output: str


@dataclass
class PromptSpec:
    role: Role
    context: Context
    constraints: list[Constraint] = field(default_factory=list)
    io_examples: Optional[list[IOExample]] = None
    steps: list[str] = field(default_factory=list)

    @classmethod
    def from_dict(cls, data: Mapping) -> "PromptSpec":
        try:
            role = data["role"]
            context = data["context"]
            examples = data.get("io_examples")
            return cls(
                role=Role(list(role["domains"]), list(role.get("expertise") or [])),
                context=Context(
                    context["problem"],
                    context.get("environment") or "",
                    context.get("level_of_detail"),
                ),
                constraints=[
                    Constraint(c["text"], c.get("modality", "mandatory"))
                    if isinstance(c, Mapping)
                    else Constraint(c)
                    for c in data.get("constraints") or []
                ],
                io_examples=None
                if examples is None
                else [IOExample(e["input"], e["output"]) for e in examples],
                steps=list(data["steps"]),
            )
        except (KeyError, TypeError) as exc:
            raise InvalidSpec([f"malformed prompt spec: missing or bad {exc}"]) from exc

    def to_dict(self) -> dict:
        out = {
            "role": {"domains": list(self.role.domains), "expertise": list(self.role.expertise)},
            "context": {
                "problem": self.context.problem,
                "environment": self.context.environment,
                "level_of_detail": self.context.level_of_detail,
            },
            "constraints": [{"text": c.text, "modality": c.modality} for c in self.constraints],
            "steps": list(self.steps),
        }
        if self.io_examples is not None:
            out["io_examples"] = [{"input": e.input, "output": e.output} for e in self.io_examples]
        return out


def validate_spec(spec: PromptSpec) -> list[str]:
    """Return one message per violated invariant; empty means renderable."""
    violations = []
    if not spec.role.domains or not all(_filled(d) for d in spec.role.domains):
        violations.append("role.domains: must list at least one non-empty domain")
    if not _filled(spec.context.problem):
        violations.append("context.problem: must be non-empty")
    for i, c in enumerate(spec.constraints):
        if not _filled(c.text):
            violations.append(f"constraints[{i}].text: must be non-empty")
        if c.modality not in MODALITIES:
            violations.append(f"constraints[{i}].modality: must be mandatory or optional")
    if not spec.steps or not all(_filled(s) for s in spec.steps):
        violations.append("steps: must list at least one non-empty step")
    return violations


def _filled(text) -> bool:
    return isinstance(text, str) and text.strip() != ""


def _join(items: Sequence[str]) -> str:
    if len(items) == 1:
        return items[0]
    return ", ".join(items[:-1]) + " and " + items[-1]


def _role(role: Role) -> str:
    text = f"You are a researcher in the area of {_join(role.domains)}."
    if role.expertise:
        text += f" Your expertise is in {_join(role.expertise)}."
    return text


def _context(ctx: Context) -> str:
    lines = [f"# *Problem* {ctx.problem}"]
    if _filled(ctx.environment):
        lines.append(f"# *Development environment* {ctx.environment}")
    if _filled(ctx.level_of_detail):
        lines.append(f"# *Level of detail* {ctx.level_of_detail}")
    return "\n".join(lines)


def _constraint(c: Constraint) -> str:
    text = c.text
    if c.modality == "optional":
        text = f"{OPTIONAL_MARKER} {text}"
    return f"# {text}"


def _examples(examples: Sequence[IOExample]) -> str:
    blocks = []
    numbered = len(examples) > 1
    for n, ex in enumerate(examples, start=1):
        suffix = f" {n}" if numbered else ""
        blocks.append(f"# Input example{suffix}\n{ex.input}")
        blocks.append(f"# Output example{suffix}\n{ex.output}")
    return "\n\n".join(blocks)


def render_prompt(spec: PromptSpec) -> str:
    """Render the sections that ``spec`` provides, in canonical order.

    The constraints section is left out when there are no constraints and the
    examples section when ``io_examples`` is empty or absent. Sections are
    separated by one blank line; output ends with a newline.

    Raises:
        InvalidSpec: :func:`validate_spec` reported violations.
    """
    violations = validate_spec(spec)
    if violations:
        raise InvalidSpec(violations)
    role_h, context_h, constraints_h, examples_h, steps_h = SECTION_HEADERS
    sections = [
        f"{role_h}\n{_role(spec.role)}",
        f"{context_h}\n{_context(spec.context)}",
    ]
    if spec.constraints:
        sections.append(f"{constraints_h}\n" + "\n".join(_constraint(c) for c in spec.constraints))
    if spec.io_examples:
        sections.append(f"{examples_h}\n{_examples(spec.io_examples)}")
    steps = "\n".join(f"{n}. {s}" for n, s in enumerate(spec.steps, start=1))
    sections.append(f"{steps_h}\n{steps}")
    return "\n\n".join(sections) + "\n"


def section_headers(text: str) -> list[str]:
    """Canonical headers found at line starts in a rendered prompt, in order."""
    return [line for line in text.splitlines() if line in SECTION_HEADERS]


def expand_placeholders(template: str, bindings: Mapping[str, Sequence[str]]) -> str:
    """Replace ``XXXX``-style tokens (one capital letter repeated 4+ times).

    A single bound value is substituted as-is; several values are written as
    ``(a, b, c)``.

    Raises:
        UnboundPlaceholder: a token in ``template`` has no binding.
    """
    missing = sorted({m.group(0) for m in _PLACEHOLDER.finditer(template)} - set(bindings))
    if missing:
        raise UnboundPlaceholder(f"no binding for {', '.join(missing)}")

    def sub(match: re.Match) -> str:
        values = list(bindings[match.group(0)])
        if len(values) == 1:
            return values[0]
        return "(" + ", ".join(values) + ")"

    return _PLACEHOLDER.sub(sub, template)


BUILTIN_SPECS = ("scraper_single", "scraper_loop")


def load_spec(source: Union[str, Path, Mapping]) -> PromptSpec:
    """Load a spec from a mapping, a YAML/JSON file, or a built-in name."""
    if isinstance(source, Mapping):
        return PromptSpec.from_dict(source)
    if str(source) in BUILTIN_SPECS:
        text = resources.files("bibharvest").joinpath(f"prompt_specs/{source}.yaml").read_text(
            encoding="utf-8"
        )
    else:
        text = Path(source).read_text(encoding="utf-8")
    data = yaml.safe_load(text)
    if not isinstance(data, Mapping):
        raise InvalidSpec([f"{source}: expected a mapping at top level"])
    return PromptSpec.from_dict(data)
