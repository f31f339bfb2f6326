"""
Prompt styles for vl-distill
Instruction templates sent to the description generator, and the label prompts
"""

from enum import Enum


class PromptStyle(str, Enum):
    """How label text is built: plain prompt or one of the description styles"""

    PLAIN = "plain"
    ORIGINAL = "original"
    SUCCINCT = "succinct"
    DETAILED = "detailed"
    DISTINCT = "distinct"

    @property
    def enriched(self) -> bool:
        return self is not PromptStyle.PLAIN


PLAIN_PROMPT = "A photo of a {label}"

ENRICHED_PROMPT = "a photo of {label}"

DESCRIPTION_SEPARATOR = ", "


ORIGINAL_TEMPLATE = (
    "Use a single sentence to describe the appearance and shape of {cls}. "
    "Only describe the shape and appearance."
)

SUCCINCT_TEMPLATE = (
    "Use a single sentence to broadly describe the appearance and shape of {cls}. "
    "Don't give too much details. Only describe the shape and appearance."
)

DETAILED_TEMPLATE = (
    "Use a single sentence and short, simple, descriptive phrases to describe "
    "the detailed appearance and detailed shape of {cls}."
)

DISTINCT_TEMPLATE = (
    "Use a single sentence to describe the unique, distinctive appearance and shape of {cls}. "
    "Only describe the unique, distinctive shape and appearance."
)


STYLE_TEMPLATES = {
    PromptStyle.ORIGINAL: ORIGINAL_TEMPLATE,
    PromptStyle.SUCCINCT: SUCCINCT_TEMPLATE,
    PromptStyle.DETAILED: DETAILED_TEMPLATE,
    PromptStyle.DISTINCT: DISTINCT_TEMPLATE,
}


def instruction_for(label: str, style: PromptStyle) -> str:
    """
    Fill a style's instruction template for one label

    Args:
        label: Class name
        style: An enriched prompt style

    Returns:
        Instruction text for the generator
    """
    style = PromptStyle(style)
    if not style.enriched:
        raise ValueError("The plain style has no generator instruction")
    return STYLE_TEMPLATES[style].format(cls=label)
