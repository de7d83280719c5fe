"""Prompt templates.  Any change to a template must bump its version string,
since the version is part of every cache key."""

from __future__ import annotations

POST_PROMPT_VERSION = "post-v1"
LABEL_PROMPT_VERSION = "label-v1"
DETECT_PROMPT_VERSION = "detect-v1"

POST_INSTRUCTION = (
    "Your task is to analyze the characteristics of a user based on a piece of text "
    "published by the user on the Internet. You are required to analyze it from the "
    "perspectives of semantic, sentiments, and linguistics. Note that if the text is "
    "incomplete and ends with an ellipsis, it may have been truncated due to external "
    "reasons, in which case you should ignore it."
)

LABEL_INSTRUCTION = (
    "Your task is to analyze the characteristics of a user based on the MBTI personality "
    "trait {pole}. You are required to analyze it from the perspectives of semantic, "
    "sentiments, and linguistics."
)

FORMAT_CLAUSE = (
    "Answer with a JSON object with exactly three string fields: "
    '"semantic", "sentiment" and "linguistic", one analysis paragraph each.'
)


def build_post_prompt(post: str) -> str:
    if not post:
        raise ValueError("post must be non-empty")
    return f"{POST_INSTRUCTION} post:{post}\n\n{FORMAT_CLAUSE}"


def build_label_prompt(pole: str) -> str:
    return f"{LABEL_INSTRUCTION.format(pole=pole)}\n\n{FORMAT_CLAUSE}"


DETECT_INSTRUCTION = (
    "The following posts were written by one user on a social media site. "
    "Predict the user's MBTI personality type."
)
DETECT_ANSWER = "Give the answer as a single four-letter MBTI type such as INTJ."
DETECT_COT = (
    "Think step by step: consider the evidence for each of the four dimensions "
    "(I/E, S/N, T/F, P/J) in turn, then state the four-letter MBTI type on the last line."
)


def _format_posts(posts) -> str:
    return "\n".join(f"- {p}" for p in posts)


def build_detect_prompt(posts, mode: str = "zero_shot", shots=()) -> str:
    if mode not in ("zero_shot", "cot", "few_shot"):
        raise ValueError(f"unknown detection mode {mode!r}")
    parts = [DETECT_INSTRUCTION]
    if mode == "few_shot":
        for n, (shot_posts, code) in enumerate(shots, 1):
            parts.append(f"Example {n} posts:\n{_format_posts(shot_posts)}\nExample {n} type: {code}")
    parts.append(f"Posts:\n{_format_posts(posts)}")
    parts.append(DETECT_COT if mode == "cot" else DETECT_ANSWER)
    return "\n\n".join(parts)
