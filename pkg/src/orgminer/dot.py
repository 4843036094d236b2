"""Small helpers for emitting Graphviz DOT text deterministically."""

PERFORMATIVE_CLASSES = {
    "delegate": "delegation",
    "cfp": "negotiation",
    "propose": "negotiation",
    "accept-proposal": "negotiation",
    "reject-proposal": "negotiation",
    "refuse": "negotiation",
    "request": "information",
    "inform": "information",
    "failure": "information",
    "execute": "execution",
}

CLASS_COLORS = {
    "delegation": "firebrick",
    "negotiation": "darkgoldenrod",
    "information": "steelblue",
    "execution": "gray40",
    "other": "black",
}


def performative_class(performative: str) -> str:
    return PERFORMATIVE_CLASSES.get(str(performative), "other")


def edge_color(performative: str) -> str:
    return CLASS_COLORS[performative_class(performative)]


def quote(text) -> str:
    text = str(text).replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
    return f'"{text}"'


def attrs(**kwargs) -> str:
    body = ", ".join(f"{k}={quote(v)}" for k, v in kwargs.items())
    return f" [{body}]" if body else ""
