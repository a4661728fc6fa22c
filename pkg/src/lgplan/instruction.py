"""Goal specifications and the instruction DSL.

Grammar (whitespace-insensitive, identifiers case-insensitive):

    spec    := clause (";" clause)*
    clause  := IDENT "(" objlist ["|" obj] ")"
    objlist := obj ("," obj)*
    obj     := "o" INTEGER

Example: "line(o3,o5,o7); left(o2|o3)" places objects 3, 5, 7 in a row and
object 2 to the left of object 3.  Pattern identifiers are resolved against
the pattern database's synonym keys.
"""

import json
import os
import re
from dataclasses import dataclass

from lgplan.patterns import PatternDatabase, PatternError


class InstructionError(ValueError):
    """Base class for goal specification errors."""


class DslSyntaxError(InstructionError):
    """Malformed DSL text; carries the 1-based line and column."""

    def __init__(self, message, line, col):
        self.line = line
        self.col = col
        super().__init__(f"line {line}, column {col}: {message}")


class UnknownPatternError(InstructionError):
    pass


class GoalValidationError(InstructionError):
    pass


@dataclass(frozen=True)
class SubGoal:
    """One pattern bound to an ordered list of object ids."""

    pattern: str
    objects: tuple
    anchor: int = None

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(int(o) for o in self.objects))
        if not self.objects:
            raise GoalValidationError(f"sub-goal {self.pattern!r} binds no objects")
        if len(set(self.objects)) != len(self.objects):
            raise GoalValidationError(
                f"sub-goal {self.pattern!r} lists an object twice"
            )
        if self.anchor is not None:
            object.__setattr__(self, "anchor", int(self.anchor))
            if self.anchor in self.objects:
                raise GoalValidationError(
                    f"sub-goal {self.pattern!r} anchors on one of its own objects"
                )

    def to_json(self) -> dict:
        data = {"pattern": self.pattern, "objects": list(self.objects)}
        if self.anchor is not None:
            data["anchor"] = self.anchor
        return data

    @classmethod
    def from_json(cls, data: dict) -> "SubGoal":
        return cls(
            pattern=data["pattern"],
            objects=tuple(data["objects"]),
            anchor=data.get("anchor"),
        )


@dataclass(frozen=True)
class GoalSpec:
    """A conjunction of sub-goals."""

    subgoals: tuple

    def __post_init__(self):
        object.__setattr__(self, "subgoals", tuple(self.subgoals))
        if not self.subgoals:
            raise GoalValidationError("goal needs at least one sub-goal")

    def to_json(self) -> dict:
        return {"subgoals": [sg.to_json() for sg in self.subgoals]}

    @classmethod
    def from_json(cls, data: dict) -> "GoalSpec":
        return cls(tuple(SubGoal.from_json(sg) for sg in data["subgoals"]))


def load_goal(path) -> GoalSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return GoalSpec.from_json(json.load(fh))


def save_goal(goal: GoalSpec, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(goal.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- pattern key resolution ------------------------------------------------------


def _norm_tokens(text: str) -> list:
    return [t for t in re.split(r"[\s_:+\-,./]+", text.strip().lower()) if t]


def resolve_pattern_key(key: str, db: PatternDatabase = None) -> str:
    """Map a free-form pattern key to a canonical pattern name.

    Tries exact match, then case/punctuation-normalized match, then the
    pattern with the highest synonym token overlap (ties broken by
    lexicographically smallest pattern name).
    """
    if db is None:
        db = PatternDatabase()
    for name, prior in db.patterns.items():
        if key == name or key in prior.keys:
            return name
    norm = " ".join(_norm_tokens(key))
    if not norm:
        raise UnknownPatternError("empty pattern key")
    for name, prior in db.patterns.items():
        candidates = (name,) + prior.keys
        if any(norm == " ".join(_norm_tokens(c)) for c in candidates):
            return name
    key_tokens = set(_norm_tokens(key))
    best_name = None
    best_score = 0
    for name in sorted(db.patterns):
        prior = db.patterns[name]
        vocab = set(_norm_tokens(name))
        for syn in prior.keys:
            vocab.update(_norm_tokens(syn))
        score = len(key_tokens & vocab)
        if score > best_score:
            best_score = score
            best_name = name
    if best_name is None:
        raise UnknownPatternError(f"unknown pattern {key!r}")
    return best_name


# -- DSL parsing -------------------------------------------------------------------


class _Tokenizer:
    def __init__(self, text):
        self.text = text
        self.pos = 0
        self.line = 1
        self.col = 1

    def _advance(self, n=1):
        for _ in range(n):
            if self.pos < len(self.text) and self.text[self.pos] == "\n":
                self.line += 1
                self.col = 1
            else:
                self.col += 1
            self.pos += 1

    def tokens(self):
        out = []
        text = self.text
        while self.pos < len(text):
            ch = text[self.pos]
            if ch.isspace():
                self._advance()
                continue
            line, col = self.line, self.col
            if ch in "();,|":
                out.append((ch, ch, line, col))
                self._advance()
                continue
            if ch.isalpha() or ch == "_":
                start = self.pos
                while self.pos < len(text) and (text[self.pos].isalnum()
                                                or text[self.pos] == "_"):
                    self._advance()
                word = text[start:self.pos]
                obj = re.fullmatch(r"[oO](\d+)", word)
                if obj:
                    out.append(("OBJ", int(obj.group(1)), line, col))
                elif word.lower().startswith("o_") and len(word) > 2:
                    out.append(("OBJNAME", word[2:].lower(), line, col))
                else:
                    out.append(("IDENT", word.lower(), line, col))
                continue
            raise DslSyntaxError(f"unexpected character {ch!r}", line, col)
        out.append(("EOF", None, self.line, self.col))
        return out


class _Parser:
    def __init__(self, tokens, db, names=None):
        self.tokens = tokens
        self.i = 0
        self.db = db
        self.names = names

    def peek(self):
        return self.tokens[self.i]

    def take(self, kind, what):
        tok = self.tokens[self.i]
        if tok[0] != kind:
            raise DslSyntaxError(f"expected {what}", tok[2], tok[3])
        self.i += 1
        return tok

    def object_ref(self, what):
        """Object id from an 'oN' token or an 'o_<name>' scene lookup."""
        tok = self.peek()
        if tok[0] == "OBJ":
            self.i += 1
            return tok[1]
        if tok[0] == "OBJNAME":
            self.i += 1
            if self.names is None:
                raise DslSyntaxError(
                    f"object name {tok[1]!r} needs a scene to resolve",
                    tok[2], tok[3])
            ids = self.names.get(tok[1], ())
            if not ids:
                raise DslSyntaxError(f"no object named {tok[1]!r}",
                                     tok[2], tok[3])
            if len(ids) > 1:
                raise DslSyntaxError(f"object name {tok[1]!r} is ambiguous",
                                     tok[2], tok[3])
            return ids[0]
        raise DslSyntaxError(f"expected {what}", tok[2], tok[3])

    def parse(self):
        subgoals = [self.clause()]
        while self.peek()[0] == ";":
            self.take(";", "';'")
            subgoals.append(self.clause())
        tok = self.peek()
        if tok[0] != "EOF":
            raise DslSyntaxError("expected ';' or end of input", tok[2], tok[3])
        return GoalSpec(tuple(subgoals))

    def clause(self):
        ident = self.take("IDENT", "a pattern name")
        try:
            pattern = resolve_pattern_key(ident[1], self.db)
        except UnknownPatternError as exc:
            raise DslSyntaxError(str(exc), ident[2], ident[3]) from None
        self.take("(", "'('")
        objects = [self.object_ref("an object like 'o3'")]
        while self.peek()[0] == ",":
            self.take(",", "','")
            objects.append(self.object_ref("an object like 'o3'"))
        anchor = None
        if self.peek()[0] == "|":
            self.take("|", "'|'")
            anchor = self.object_ref("an anchor object like 'o3'")
        self.take(")", "')'")
        try:
            return SubGoal(pattern=pattern, objects=tuple(objects), anchor=anchor)
        except GoalValidationError as exc:
            raise DslSyntaxError(str(exc), ident[2], ident[3]) from None


def parse_dsl(text: str, db: PatternDatabase = None, scene=None) -> GoalSpec:
    """Parse DSL text into a GoalSpec.

    Syntax errors carry line and column.  When a scene is given, object
    references are checked against it.
    """
    if db is None:
        db = PatternDatabase()
    tokens = _Tokenizer(text).tokens()
    if tokens[0][0] == "EOF":
        raise DslSyntaxError("empty specification", 1, 1)
    names = None
    if scene is not None:
        names = {}
        for obj in scene.objects():
            names.setdefault(obj.name.lower(), []).append(obj.id)
    goal = _Parser(tokens, db, names).parse()
    if scene is not None:
        validate_goal(goal, scene, db)
    return goal


def _dsl_ident(pattern: str) -> str:
    if pattern.startswith("spatial:"):
        return pattern.split(":", 1)[1]
    return pattern


def render_dsl(goal: GoalSpec) -> str:
    """Serialize a GoalSpec to canonical DSL text.

    parse_dsl(render_dsl(goal)) round-trips for any valid goal.
    """
    clauses = []
    for sg in goal.subgoals:
        body = ",".join(f"o{oid}" for oid in sg.objects)
        if sg.anchor is not None:
            body += f"|o{sg.anchor}"
        clauses.append(f"{_dsl_ident(sg.pattern)}({body})")
    return "; ".join(clauses)


def validate_goal(goal: GoalSpec, scene, db: PatternDatabase = None) -> None:
    """Check a goal against a scene and the pattern database.

    Verifies object references, anchor use and anchor acyclicity; raises
    GoalValidationError on the first violation.
    """
    if db is None:
        db = PatternDatabase()
    scene_ids = set(scene.ids())
    for sg in goal.subgoals:
        try:
            prior = db.get(sg.pattern)
        except PatternError as exc:
            raise GoalValidationError(str(exc)) from None
        for oid in sg.objects:
            if oid not in scene_ids:
                raise GoalValidationError(f"unknown object reference o{oid}")
        if prior.kind == "spatial":
            if sg.anchor is None:
                raise GoalValidationError(
                    f"spatial pattern {sg.pattern!r} needs an anchor object"
                )
            if sg.anchor not in scene_ids:
                raise GoalValidationError(f"unknown object reference o{sg.anchor}")
        elif sg.anchor is not None:
            raise GoalValidationError(
                f"pattern {sg.pattern!r} does not take an anchor"
            )
    # anchor dependencies between sub-goals must not form a cycle
    n = len(goal.subgoals)
    edges = {i: set() for i in range(n)}
    for i, sg in enumerate(goal.subgoals):
        if sg.anchor is None:
            continue
        for j, other in enumerate(goal.subgoals):
            if i != j and sg.anchor in other.objects:
                edges[i].add(j)
    state = {}

    def visit(i):
        if state.get(i) == "done":
            return
        if state.get(i) == "active":
            raise GoalValidationError("cyclic goal: anchor dependencies form a loop")
        state[i] = "active"
        for j in edges[i]:
            visit(j)
        state[i] = "done"

    for i in range(n):
        visit(i)


# -- LLM adapter -------------------------------------------------------------------

LLM_KEY_ENV = "LGPLAN_LLM_KEY"

_SYSTEM_RULES = """\
You translate tabletop rearrangement requests into a tiny specification
language.  Reply with one line in exactly this grammar and nothing else:

    spec    := clause (";" clause)*
    clause  := PATTERN "(" o<ID> ("," o<ID>)* ["|" o<ID>] ")"

PATTERN is one of: {patterns}.  The part after "|" names the anchor object
for relative patterns (left/right/front/behind and combinations).  Use only
object ids that exist in the scene listing supplied by the user.
"""


class LlmError(InstructionError):
    """LLM transport failure or unusable reply."""


@dataclass(frozen=True)
class LlmConfig:
    endpoint: str
    model: str
    temperature: float = 0.0


def build_prompt(scene, request: str, db: PatternDatabase = None) -> list:
    """Chat messages for goal translation: system rules, then the scene
    listing (one line per object: id, name, color) and the user query."""
    if db is None:
        db = PatternDatabase()
    rules = _SYSTEM_RULES.format(patterns=", ".join(_dsl_ident(n) for n in db.names()))
    lines = [
        f"o{obj.id}: {obj.name} (color: {obj.color})" for obj in scene.objects()
    ]
    user = "Objects on the table:\n" + "\n".join(lines) + f"\n\nRequest: {request}"
    return [
        {"role": "system", "content": rules},
        {"role": "user", "content": user},
    ]


def _http_transport(endpoint, payload, api_key):
    import requests

    resp = requests.post(
        endpoint,
        json=payload,
        headers={"Authorization": f"Bearer {api_key}"},
        timeout=60,
    )
    resp.raise_for_status()
    return resp.json()


class RecordingTransport:
    """Wraps a transport and records request/response pairs to a fixture."""

    def __init__(self, inner, path):
        self.inner = inner
        self.path = path
        self.records = []

    def __call__(self, endpoint, payload, api_key):
        response = self.inner(endpoint, payload, api_key)
        self.records.append({"request": payload, "response": response})
        with open(self.path, "w", encoding="utf-8") as fh:
            json.dump(self.records, fh, indent=2)
        return response


class ReplayTransport:
    """Feeds back recorded responses in order; never touches the network."""

    def __init__(self, source):
        if isinstance(source, (str, os.PathLike)):
            with open(source, "r", encoding="utf-8") as fh:
                self.records = json.load(fh)
        else:
            self.records = list(source)
        self.cursor = 0

    def __call__(self, endpoint, payload, api_key):
        if self.cursor >= len(self.records):
            raise LlmError("replay fixture exhausted")
        record = self.records[self.cursor]
        self.cursor += 1
        return record["response"]


def _reply_text(response) -> str:
    try:
        return response["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        raise LlmError("malformed completion response") from None


def llm_to_goal(scene, request: str, config: LlmConfig, db: PatternDatabase = None,
                transport=None) -> GoalSpec:
    """Translate a natural-language request into a GoalSpec via an LLM.

    The reply is parsed with parse_dsl; on a parse failure the error is fed
    back to the model once before giving up.  The API key is read from the
    LGPLAN_LLM_KEY environment variable.
    """
    api_key = os.environ.get(LLM_KEY_ENV)
    if not api_key:
        raise LlmError(f"{LLM_KEY_ENV} is not set")
    if transport is None:
        transport = _http_transport
    if db is None:
        db = PatternDatabase()
    messages = build_prompt(scene, request, db)
    last_error = None
    for _ in range(2):
        payload = {
            "model": config.model,
            "temperature": config.temperature,
            "messages": messages,
        }
        try:
            response = transport(config.endpoint, payload, api_key)
        except LlmError:
            raise
        except Exception as exc:
            raise LlmError(f"transport failed: {exc}") from exc
        reply = _reply_text(response)
        try:
            return parse_dsl(reply, db, scene)
        except InstructionError as exc:
            last_error = exc
            messages = messages + [
                {"role": "assistant", "content": reply},
                {
                    "role": "user",
                    "content": (
                        f"That reply failed to parse: {exc}. "
                        "Reply again with only a valid specification line."
                    ),
                },
            ]
    raise LlmError(f"could not parse model reply after retry: {last_error}")
