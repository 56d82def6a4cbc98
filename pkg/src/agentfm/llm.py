"""LLM gateway: OpenAI-compatible chat completions with tool calling, plus a
deterministic scripted mock so nothing in the test suite needs a live model.

Environment for the HTTP provider::

    AGENTFM_LLM_ENDPOINT   base URL; requests go to {endpoint}/chat/completions
    AGENTFM_LLM_KEY        bearer token (optional)
    AGENTFM_LLM_MODEL      model name
"""

from __future__ import annotations

import json
import logging
import math
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence

import httpx

from .errors import ConfigError, GatewayError, InvalidArgumentError, ProtocolError

log = logging.getLogger(__name__)

PARAM_TYPES = ("string", "boolean", "enum", "string_list", "object_list")


@dataclass(frozen=True)
class Message:
    role: str
    text: str

    def __post_init__(self):
        if self.role not in ("user", "assistant"):
            raise InvalidArgumentError(f"unknown message role {self.role!r}")


@dataclass(frozen=True)
class ToolParam:
    name: str
    type: str
    description: str = ""
    enum: tuple[str, ...] = ()
    fields: tuple["ToolParam", ...] = ()  # item fields for object_list
    required: bool = True

    def __post_init__(self):
        if self.type not in PARAM_TYPES:
            raise InvalidArgumentError(f"unsupported parameter type {self.type!r}")
        if self.type == "enum" and not self.enum:
            raise InvalidArgumentError(f"enum parameter {self.name!r} needs values")

    def json_schema(self) -> dict:
        if self.type == "string":
            out = {"type": "string"}
        elif self.type == "boolean":
            out = {"type": "boolean"}
        elif self.type == "enum":
            out = {"type": "string", "enum": list(self.enum)}
        elif self.type == "string_list":
            out = {"type": "array", "items": {"type": "string"}}
        else:
            out = {"type": "array", "items": _object_schema(self.fields)}
        if self.description:
            out["description"] = self.description
        return out

    def validate(self, value, path: str):
        t = self.type
        if t == "boolean":
            if not isinstance(value, bool):
                raise ProtocolError(f"{path}: expected boolean, got {value!r}")
        elif t == "string":
            if not isinstance(value, str):
                raise ProtocolError(f"{path}: expected string, got {value!r}")
        elif t == "enum":
            if value not in self.enum:
                raise ProtocolError(f"{path}: {value!r} not in {list(self.enum)}")
        elif t == "string_list":
            if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
                raise ProtocolError(f"{path}: expected list of strings, got {value!r}")
        else:
            if not isinstance(value, list):
                raise ProtocolError(f"{path}: expected list, got {value!r}")
            return [_validate_fields(self.fields, item, f"{path}[{i}]") for i, item in enumerate(value)]
        return value


def _object_schema(params: Sequence[ToolParam]) -> dict:
    return {
        "type": "object",
        "properties": {p.name: p.json_schema() for p in params},
        "required": [p.name for p in params if p.required],
    }


def _validate_fields(params: Sequence[ToolParam], args, path: str) -> dict:
    if not isinstance(args, Mapping):
        raise ProtocolError(f"{path}: expected an object, got {args!r}")
    out = {}
    for p in params:
        if p.name not in args:
            if p.required:
                raise ProtocolError(f"{path}: missing argument {p.name!r}")
            continue
        out[p.name] = p.validate(args[p.name], f"{path}.{p.name}")
    return out


@dataclass(frozen=True)
class ToolSchema:
    name: str
    description: str
    params: tuple[ToolParam, ...] = ()

    def to_openai(self) -> dict:
        return {
            "type": "function",
            "function": {
                "name": self.name,
                "description": self.description,
                "parameters": _object_schema(self.params),
            },
        }

    def validate(self, arguments) -> dict:
        return _validate_fields(self.params, arguments, self.name)


@dataclass(frozen=True)
class ChatRequest:
    system_prompt: str
    messages: tuple[Message, ...]
    tools: tuple[ToolSchema, ...] = ()
    temperature: float = 0.0
    max_tokens: int = 512
    force_tool: bool = True

    def __post_init__(self):
        object.__setattr__(self, "messages", tuple(self.messages))
        object.__setattr__(self, "tools", tuple(self.tools))
        if not self.messages:
            raise InvalidArgumentError("a chat request needs at least one message")
        names = [t.name for t in self.tools]
        if len(set(names)) != len(names):
            raise InvalidArgumentError("tool names must be unique within a request")
        if self.temperature < 0:
            raise InvalidArgumentError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise InvalidArgumentError("max_tokens must be positive")

    def flat_prompt(self) -> str:
        return "\n".join([self.system_prompt] + [m.text for m in self.messages])

    def tool(self, name: str) -> Optional[ToolSchema]:
        for t in self.tools:
            if t.name == name:
                return t
        return None


@dataclass(frozen=True)
class ToolCall:
    name: str
    arguments: Mapping[str, Any]


@dataclass(frozen=True)
class ChatResponse:
    text: Optional[str] = None
    tool_call: Optional[ToolCall] = None
    usage: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.text is None and self.tool_call is None:
            raise InvalidArgumentError("a response needs text or a tool call")

    @classmethod
    def from_json(cls, obj: Mapping) -> "ChatResponse":
        call = obj.get("tool_call")
        return cls(
            text=obj.get("text"),
            tool_call=ToolCall(call["name"], dict(call.get("arguments", {}))) if call else None,
            usage=dict(obj.get("usage", {})),
        )

    def to_json(self) -> dict:
        out: dict = {}
        if self.text is not None:
            out["text"] = self.text
        if self.tool_call is not None:
            out["tool_call"] = {"name": self.tool_call.name, "arguments": dict(self.tool_call.arguments)}
        return out


def validate_response(request: ChatRequest, response: ChatResponse) -> ChatResponse:
    """Check a tool call against the schema the request offered."""
    call = response.tool_call
    if call is None:
        return response
    schema = request.tool(call.name)
    if schema is None:
        raise ProtocolError(f"model called unknown tool {call.name!r}")
    args = schema.validate(call.arguments)
    return ChatResponse(text=response.text, tool_call=ToolCall(call.name, args), usage=response.usage)


class Gateway:
    """Base provider. Subclasses implement ``_complete``."""

    def chat(self, request: ChatRequest) -> ChatResponse:
        return validate_response(request, self._complete(request))

    def _complete(self, request: ChatRequest) -> ChatResponse:  # pragma: no cover
        raise NotImplementedError


class HttpProvider(Gateway):
    def __init__(
        self,
        endpoint: str,
        model: str,
        key: Optional[str] = None,
        *,
        retries: int = 3,
        backoff: float = 0.5,
        timeout: float = 120.0,
        client: Optional[httpx.Client] = None,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.key = key
        self.retries = retries
        self.backoff = backoff
        self._client = client or httpx.Client(timeout=timeout)

    @classmethod
    def from_env(cls, env: Optional[Mapping[str, str]] = None, **kwargs) -> "HttpProvider":
        env = os.environ if env is None else env
        endpoint = env.get("AGENTFM_LLM_ENDPOINT")
        if not endpoint:
            raise ConfigError("AGENTFM_LLM_ENDPOINT is not set")
        model = env.get("AGENTFM_LLM_MODEL") or "qwen2.5-72b-instruct"
        return cls(endpoint, model, env.get("AGENTFM_LLM_KEY"), **kwargs)

    def payload(self, request: ChatRequest) -> dict:
        messages = [{"role": "system", "content": request.system_prompt}]
        messages += [{"role": m.role, "content": m.text} for m in request.messages]
        body: dict = {
            "model": self.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        if request.tools:
            body["tools"] = [t.to_openai() for t in request.tools]
            if request.force_tool and len(request.tools) == 1:
                body["tool_choice"] = {"type": "function", "function": {"name": request.tools[0].name}}
            else:
                body["tool_choice"] = "auto"
        return body

    def _post(self, body: dict) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.key:
            headers["Authorization"] = f"Bearer {self.key}"
        url = f"{self.endpoint}/chat/completions"
        last = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self._client.post(url, json=body, headers=headers)
            except httpx.TransportError as exc:
                last = exc
                log.warning("LLM transport error (attempt %d): %s", attempt + 1, exc)
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = GatewayError(f"HTTP {resp.status_code}")
                log.warning("LLM endpoint returned %d (attempt %d)", resp.status_code, attempt + 1)
                continue
            if resp.status_code >= 400:
                raise GatewayError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()
            except ValueError as exc:
                raise ProtocolError(f"endpoint returned non-JSON body: {exc}") from exc
        raise GatewayError(f"LLM endpoint unreachable after {self.retries + 1} attempts: {last}")

    def _complete(self, request: ChatRequest) -> ChatResponse:
        data = self._post(self.payload(request))
        try:
            msg = data["choices"][0]["message"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProtocolError("response has no choices[0].message") from exc
        call = None
        tool_calls = msg.get("tool_calls") or []
        if tool_calls:
            fn = tool_calls[0].get("function", {})
            raw = fn.get("arguments") or "{}"
            try:
                args = json.loads(raw) if isinstance(raw, str) else dict(raw)
            except ValueError as exc:
                raise ProtocolError(f"tool arguments are not valid JSON: {raw!r}") from exc
            call = ToolCall(fn.get("name", ""), args)
        text = msg.get("content")
        if text is None and call is None:
            raise ProtocolError("response message carries neither content nor a tool call")
        usage = {k: int(v) for k, v in (data.get("usage") or {}).items() if isinstance(v, (int, float))}
        return ChatResponse(text=text, tool_call=call, usage=usage)


DEFAULT_MOCK_RESPONSE = ChatResponse(text="no scripted response")


@dataclass(frozen=True)
class _Rule:
    needles: tuple[str, ...]
    response: Optional[ChatResponse]
    error: Optional[str] = None


class MockProvider(Gateway):
    """Scripted provider: the first rule whose substrings all occur in the
    flattened prompt answers; otherwise the default response is returned.

    A rule's response may instead be ``{"error": "..."}`` to simulate an
    outage (raises :class:`GatewayError`).
    """

    def __init__(self, default: ChatResponse = DEFAULT_MOCK_RESPONSE):
        self.default = default
        self._rules: list[_Rule] = []
        self._lock = threading.Lock()
        self.calls: list[ChatRequest] = []

    def script_response(self, matcher, response) -> None:
        needles = (matcher,) if isinstance(matcher, str) else tuple(matcher)
        if isinstance(response, Mapping) and "error" in response:
            self._rules.append(_Rule(needles, None, str(response["error"])))
            return
        if isinstance(response, Mapping):
            response = ChatResponse.from_json(response)
        self._rules.append(_Rule(needles, response))

    def fail_on(self, matcher, message: str = "simulated outage") -> None:
        self.script_response(matcher, {"error": message})

    def _complete(self, request: ChatRequest) -> ChatResponse:
        prompt = request.flat_prompt()
        with self._lock:
            self.calls.append(request)
        for rule in self._rules:
            if all(n in prompt for n in rule.needles):
                if rule.error is not None:
                    raise GatewayError(rule.error)
                return rule.response
        return self.default

    @classmethod
    def from_script(cls, script: Mapping) -> "MockProvider":
        default = script.get("default")
        mock = cls(ChatResponse.from_json(default) if default else DEFAULT_MOCK_RESPONSE)
        for rule in script.get("rules", []):
            mock.script_response(rule["match"], rule["response"])
        return mock

    @classmethod
    def from_file(cls, path) -> "MockProvider":
        with open(path, encoding="utf-8") as fh:
            return cls.from_script(json.load(fh))


def script_response(mock: MockProvider, matcher, response) -> None:
    if not isinstance(mock, MockProvider):
        raise ConfigError("script_response needs the mock provider")
    mock.script_response(matcher, response)


def make_gateway(provider: str, script_path=None, env=None) -> Gateway:
    if provider == "mock":
        return MockProvider.from_file(script_path) if script_path else MockProvider()
    if provider == "http":
        return HttpProvider.from_env(env)
    raise ConfigError(f"unknown LLM provider {provider!r}")


YES_NO_TOOL = ToolSchema(
    name="answer",
    description="Give the final yes/no answer to the question.",
    params=(ToolParam("answer", "enum", "yes or no", enum=("yes", "no")),),
)


def yes_no_request(question_prompt: str, context: str, system_prompt: str = "", tool: ToolSchema = YES_NO_TOOL) -> ChatRequest:
    return ChatRequest(
        system_prompt=system_prompt or "Answer the question by calling the tool.",
        messages=(Message("user", f"{context}\n\n{question_prompt}" if context else question_prompt),),
        tools=(tool,),
    )


def ask_yes_no(question_prompt: str, context: str, llm: Gateway, *, system_prompt: str = "", tool: ToolSchema = YES_NO_TOOL) -> bool:
    """Strict yes/no via a single enum-typed tool; free text is a protocol error."""
    response = llm.chat(yes_no_request(question_prompt, context, system_prompt, tool))
    if response.tool_call is None or response.tool_call.name != tool.name:
        raise ProtocolError("expected a yes/no tool call, got free text")
    (param,) = tool.params
    return response.tool_call.arguments[param.name] == "yes"


# -- prompt budgeting -------------------------------------------------------


def estimate_tokens(text: str) -> int:
    return math.ceil(len(text) / 4)


@dataclass
class PromptBlock:
    name: str
    text: str
    droppable: bool = True


def assemble_prompt(blocks: Sequence[PromptBlock], budget_tokens: int) -> tuple[str, list[str]]:
    """Join blocks, dropping droppable ones oldest-first until within budget.

    Returns the text and the names of dropped blocks. If the fixed blocks
    alone exceed the budget the last one is cut to fit.
    """
    kept = list(blocks)
    dropped: list[str] = []

    def size(bs):
        return estimate_tokens("\n\n".join(b.text for b in bs))

    while size(kept) > budget_tokens:
        victim = next((b for b in kept if b.droppable), None)
        if victim is None:
            break
        kept.remove(victim)
        dropped.append(victim.name)
    text = "\n\n".join(b.text for b in kept)
    if estimate_tokens(text) > budget_tokens:
        text = text[: budget_tokens * 4]
        dropped.append("<tail>")
    if dropped:
        text += f"\n\n(context truncated: {', '.join(dropped)})"
        if estimate_tokens(text) > budget_tokens:
            text = text[: budget_tokens * 4]
    return text, dropped
