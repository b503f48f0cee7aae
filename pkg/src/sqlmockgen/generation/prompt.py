"""Prompt assembly from the versioned template assets."""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

TEMPLATE_VERSION = "v1"
RETRY_PREFIX = "Previous attempt failed validation: "
NO_CONSTRAINTS = "(none)"

_SLOT = re.compile(r"\{([a-z_]+)\}")


@lru_cache(maxsize=None)
def load_template(name: str, version: str = TEMPLATE_VERSION) -> str:
    return resources.files(__package__).joinpath("templates", f"{name}.{version}.txt").read_text(encoding="utf-8")


def fill(template: str, **slots: str) -> str:
    """Substitute ``{name}`` slots in one pass so inserted text is never re-expanded."""

    def sub(m: re.Match) -> str:
        key = m.group(1)
        return slots[key] if key in slots else m.group(0)

    return _SLOT.sub(sub, template)


@dataclass(frozen=True)
class Prompt:
    system: str
    user: str
    text: str


def build_generation_prompt(
    constraints: str,
    signals: str,
    row_count: int,
    col_names: str,
    user_input: str,
    proto_description: str,
    retry_context: str | None = None,
) -> Prompt:
    prefix = fill(load_template("system_prefix"), constraints=constraints or NO_CONSTRAINTS)
    system = fill(load_template("system_instruction"), system_prompt_prefix=prefix, data_generation_signals=signals)
    user = fill(
        load_template("user_instruction"),
        number_of_data_points=str(row_count),
        col_names=col_names,
        user_input=user_input,
        proto_description=proto_description,
    )
    text = fill(load_template("generate_prompt"), system_instruction=system, user_instruction=user)
    if retry_context:
        suffix = RETRY_PREFIX + retry_context
        user = user + suffix + "\n"
        text = text + suffix
    return Prompt(system, user, text)


def build_judge_prompt(data: str, constraints: str) -> Prompt:
    system = load_template("judge_system")
    user = fill(load_template("judge_user"), data=data, constraints=constraints or NO_CONSTRAINTS)
    return Prompt(system, user, f"system:{system}\nuser:{user}\nmodel:\n")
