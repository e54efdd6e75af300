"""Template decomposition of high-level fold commands into sub-task plans.

Each task family carries a paraphrase bank of surface commands. Variant
indices {0, 1} are the "seen instruction" pool, {2, 3} the "unseen
instruction" pool; the unseen-task condition holds out a whole family.
Sub-task surface forms vary with the variant through the preposition slot.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

from .grammar import (GrammarError, PlanningError, SubTask, normalize_text,
                      validate_subtask)

TASK_FAMILIES = ("DSF", "DTF", "FCIF", "TF", "TSF")
AUX_FAMILIES = ("SLEEVE_IN",)

FAMILY_KIND = {
    "DSF": "towel",
    "DTF": "towel",
    "FCIF": "towel",
    "TF": "trousers",
    "TSF": "t-shirt",
    "SLEEVE_IN": "t-shirt",
}

CLOTH_DISPLAY = {"towel": "Towel", "t-shirt": "T-Shirt", "trousers": "Trousers"}

# Sub-task preposition per paraphrase variant; variant 0 is the canonical
# phrasing used by the worked examples.
PREP_VARIANTS = ("to", "onto", "over", "towards")

SEEN_VARIANTS = (0, 1)
UNSEEN_VARIANTS = (2, 3)


@dataclass(frozen=True)
class PlanTemplate:
    family: str
    kind: str
    steps: tuple[tuple[str, str], ...]   # (pick landmark, place landmark)

    def instantiate(self, variant: int = 0) -> list[str]:
        prep = PREP_VARIANTS[variant % len(PREP_VARIANTS)]
        cloth = CLOTH_DISPLAY[self.kind]
        return [f"Grasp the {pick} of the {cloth} and place it {prep} the {place}"
                for pick, place in self.steps]


_TEMPLATES: dict[str, PlanTemplate] = {
    "DSF": PlanTemplate("DSF", "towel",
                        (("left edge", "right edge"),
                         ("top edge", "bottom edge"))),
    "DTF": PlanTemplate("DTF", "towel",
                        (("top-left corner", "bottom-right corner"),)),
    "FCIF": PlanTemplate("FCIF", "towel",
                         (("top-left corner", "center"),
                          ("top-right corner", "center"),
                          ("bottom-left corner", "center"),
                          ("bottom-right corner", "center"))),
    "TF": PlanTemplate("TF", "trousers",
                       (("left waist", "right waist"),
                        ("left leg", "right leg"))),
    "TSF": PlanTemplate("TSF", "t-shirt",
                        (("left sleeve", "left middle part"),
                         ("right sleeve", "right middle part"),
                         ("bottom", "shoulder"))),
    "SLEEVE_IN": PlanTemplate("SLEEVE_IN", "t-shirt",
                              (("left sleeve", "left middle part"),
                               ("right sleeve", "right middle part"))),
}

_COMMAND_BANK: dict[str, tuple[str, ...]] = {
    "DSF": (
        "Fold the Towel in half from left to right and then from top to bottom",
        "Fold the Towel in half twice to make a rectangle",
        "Do a double straight fold on the Towel",
        "Fold the Towel straight in half two times",
    ),
    "DTF": (
        "Fold the Towel in half diagonally",
        "Fold the Towel into a triangle",
        "Do a triangle fold on the Towel",
        "Fold the Towel corner to corner",
    ),
    "FCIF": (
        "Fold all corners of the Towel to the center",
        "Fold the four corners of the Towel inward",
        "Bring every corner of the Towel to the middle",
        "Do a four corners inward fold on the Towel",
    ),
    "TF": (
        "Fold the Trousers in half from left to right",
        "Fold the Trousers in half",
        "Fold the Trousers from the left side over to the right side",
        "Do a half fold on the Trousers",
    ),
    "TSF": (
        "Fold the T-Shirt",
        "Fold the T-Shirt neatly",
        "Do a standard fold on the T-Shirt",
        "Fold up the T-Shirt for storage",
    ),
    "SLEEVE_IN": (
        "Fold the sleeve towards the inner of the T-Shirt",
        "Fold the sleeves inward on the T-Shirt",
        "Bring the sleeves of the T-Shirt inward",
        "Tuck the sleeves of the T-Shirt in",
    ),
}

_BANK_INDEX = {normalize_text(cmd): (family, variant)
               for family, cmds in _COMMAND_BANK.items()
               for variant, cmd in enumerate(cmds)}


def command_bank(family: Optional[str] = None) -> dict[str, tuple[str, ...]]:
    if family is not None:
        return {family: _COMMAND_BANK[family]}
    return dict(_COMMAND_BANK)


def plan_for(family: str) -> PlanTemplate:
    if family not in _TEMPLATES:
        raise PlanningError(f"no template for task family {family!r}")
    return _TEMPLATES[family]


@dataclass(frozen=True)
class HighLevelCommand:
    text: str
    task_family: Optional[str]       # one of TASK_FAMILIES/AUX_FAMILIES, or None
    cloth_kind: Optional[str]
    variant: int = 0

    @property
    def known(self) -> bool:
        return self.task_family is not None


def _detect_kind(norm: str) -> Optional[str]:
    if "towel" in norm:
        return "towel"
    if "shirt" in norm:
        return "t-shirt"
    if "trousers" in norm or "pants" in norm:
        return "trousers"
    return None


def _heuristic_family(norm: str, kind: Optional[str]) -> Optional[str]:
    words = set(norm.split())
    if not ({"fold", "folding", "folded"} & words):
        return None
    if "diagonal" in norm or "triangle" in norm or "corner to corner" in norm:
        return "DTF"
    if "corners" in words and ({"center", "middle", "inward"} & words):
        return "FCIF"
    if kind == "t-shirt" and ("sleeve" in norm) and ({"inner", "inward", "in"} & words):
        return "SLEEVE_IN"
    if kind == "t-shirt":
        return "TSF"
    if kind == "trousers":
        return "TF"
    if kind == "towel" and "half" in words and ({"twice", "two", "rectangle"} & words
                                                or ("left" in words and "top" in words)):
        return "DSF"
    return None


def parse_command(text: str) -> HighLevelCommand:
    """Recognize a high-level command: exact paraphrase-bank match first,
    then keyword heuristics. Unknown commands are returned unresolved."""
    norm = normalize_text(text)
    if not norm:
        raise PlanningError("empty command")
    hit = _BANK_INDEX.get(norm)
    if hit is not None:
        family, variant = hit
        return HighLevelCommand(text.strip(), family, FAMILY_KIND[family], variant)
    kind = _detect_kind(norm)
    family = _heuristic_family(norm, kind)
    if family is not None:
        return HighLevelCommand(text.strip(), family, FAMILY_KIND[family], 0)
    return HighLevelCommand(text.strip(), None, kind, 0)


def decompose(command: Union[str, HighLevelCommand]) -> list[SubTask]:
    """Deterministic template decomposition into validated sub-tasks.

    A command that is already a grammar-valid atomic instruction passes
    through as a single-element plan.
    """
    if isinstance(command, str):
        try:
            return [validate_subtask(command)]
        except GrammarError:
            pass
        command = parse_command(command)
    if not command.known:
        raise PlanningError(
            f"cannot decompose {command.text!r}: task family not recognized "
            f"(cloth kind: {command.cloth_kind}); an LLM backend may handle it")
    template = plan_for(command.task_family)
    texts = template.instantiate(command.variant)
    return [validate_subtask(t, cloth_kind=template.kind) for t in texts]
