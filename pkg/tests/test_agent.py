"""Tool-calling agent loop: dispatch, bounds, relevance, summaries."""
import json

import pytest

from dschecker import (
    AgentConfig,
    AgentError,
    CorrectAnswer,
    ErrorCode,
    Gateway,
    GenerationParams,
    MalformedVerdict,
    ModelTurn,
    ScriptedProvider,
    ToolCall,
    call_summary,
    dispatch_tool,
    run_agent,
)
from dschecker.agent import NUDGE_FINAL

from conftest import load_golden

PARAMS = GenerationParams(model_name="test-model")

NO_VERDICT = json.dumps(
    {
        "correct": "no",
        "patch": "@@ -1,1 +1,1 @@\n-import pandas as pd\n+import pandas as pd  # reviewed",
        "explanation": "the snippet misuses the API",
    }
)


def doc_call(call_id="c1", api="sklearn.impute.SimpleImputer"):
    return ToolCall(id=call_id, name="get_api_documentation", arguments={"api_name": api})


def var_call(call_id="v1", variable="df", line=4):
    return ToolCall(
        id=call_id,
        name="get_variable_info",
        arguments={"variable_name": variable, "line_number": line},
    )


def scripted_gateway(*turns):
    return Gateway(ScriptedProvider(list(turns)))


# --- dispatch ----------------------------------------------------------------


def test_dispatch_documentation_lookup(misuse_record, docs_index):
    text = dispatch_tool(doc_call(), misuse_record, docs_index)
    assert "SimpleImputer" in text
    assert "strategy" in text


def test_dispatch_unknown_api_becomes_error_text(misuse_record, docs_index):
    text = dispatch_tool(doc_call(api="torch.nn.Linear"), misuse_record, docs_index)
    assert text.startswith("error:")
    assert "torch.nn.Linear" in text


def test_dispatch_ambiguous_api_reports_candidates(misuse_record, docs_index):
    text = dispatch_tool(doc_call(api="plot"), misuse_record, docs_index)
    assert text.startswith("error:")
    assert "ambiguous" in text


def test_dispatch_variable_info(misuse_record, docs_index, replay_runner):
    text = dispatch_tool(var_call(), misuse_record, docs_index, runner=replay_runner)
    assert "Variable `df` at line 4" in text
    assert "B (float64, 0 non-null)" in text


def test_dispatch_hallucinated_variable(misuse_record, docs_index, replay_runner):
    text = dispatch_tool(
        var_call(variable="phantom"), misuse_record, docs_index, runner=replay_runner
    )
    assert text == "error: variable 'phantom' does not appear in the snippet"


def test_dispatch_line_out_of_range(misuse_record, docs_index, replay_runner):
    text = dispatch_tool(
        var_call(line=99), misuse_record, docs_index, runner=replay_runner
    )
    assert text.startswith("error: line 99 is outside the snippet")


def test_dispatch_variable_without_runner(misuse_record, docs_index):
    text = dispatch_tool(var_call(), misuse_record, docs_index, runner=None)
    assert text == "error: no execution engine available for variable inspection"


# --- loop behavior -----------------------------------------------------------


def test_agent_returns_verdict_after_tool_round(misuse_record, docs_index, replay_runner):
    gateway = scripted_gateway(
        ModelTurn(tool_calls=(doc_call(),)),
        ModelTurn(final_text=NO_VERDICT),
    )
    verdict, log = run_agent(
        misuse_record, docs_index, gateway, AgentConfig(), runner=replay_runner, params=PARAMS
    )
    assert verdict.correct is CorrectAnswer.NO
    assert len(log) == 1
    assert log[0].tool == "get_api_documentation"
    assert log[0].relevant is True


def test_agent_exhausts_after_budget_plus_nudge(misuse_record, docs_index):
    # An always-calling model consumes exactly max_iterations tool rounds,
    # then one nudge; a further call attempt raises AGENT_EXHAUSTED.
    max_iterations = 3
    provider = ScriptedProvider(
        [ModelTurn(tool_calls=(doc_call(f"c{i}"),)) for i in range(max_iterations + 1)]
    )
    gateway = Gateway(provider)
    with pytest.raises(AgentError) as err:
        run_agent(
            misuse_record,
            docs_index,
            gateway,
            AgentConfig(max_iterations=max_iterations),
            params=PARAMS,
        )
    assert err.value.code is ErrorCode.AGENT_EXHAUSTED
    # max_iterations tool turns + 1 consumed by the post-nudge attempt.
    assert provider.consumed == max_iterations + 1


def test_agent_counts_calls_individually_when_configured(misuse_record, docs_index):
    # One turn with two calls; allow_unlimited_calls=False bills per call,
    # exhausting a budget of 2 in a single round.
    provider = ScriptedProvider(
        [
            ModelTurn(tool_calls=(doc_call("a"), doc_call("b"))),
            ModelTurn(tool_calls=(doc_call("c"),)),
        ]
    )
    with pytest.raises(AgentError):
        run_agent(
            misuse_record,
            docs_index,
            Gateway(provider),
            AgentConfig(max_iterations=2, allow_unlimited_calls=False),
            params=PARAMS,
        )
    assert provider.consumed == 2


def test_agent_accepts_verdict_on_the_nudge(misuse_record, docs_index):
    gateway = scripted_gateway(
        ModelTurn(tool_calls=(doc_call(),)),
        ModelTurn(final_text='{"correct": "yes"}'),
    )
    verdict, log = run_agent(
        misuse_record, docs_index, gateway, AgentConfig(max_iterations=1), params=PARAMS
    )
    assert verdict.correct is CorrectAnswer.YES
    assert len(log) == 1


def test_agent_reprompts_malformed_final_once(misuse_record, docs_index):
    gateway = scripted_gateway(
        ModelTurn(final_text="I think it is wrong but here is no JSON"),
        ModelTurn(final_text='{"correct": "yes"}'),
    )
    verdict, _ = run_agent(misuse_record, docs_index, gateway, AgentConfig(), params=PARAMS)
    assert verdict.correct is CorrectAnswer.YES


def test_agent_gives_up_after_second_malformed_final(misuse_record, docs_index):
    gateway = scripted_gateway(
        ModelTurn(final_text="still just prose"),
        ModelTurn(final_text="more prose, no object"),
    )
    with pytest.raises(MalformedVerdict):
        run_agent(misuse_record, docs_index, gateway, AgentConfig(), params=PARAMS)


def test_relevance_tags(misuse_record, docs_index, replay_runner):
    gateway = scripted_gateway(
        ModelTurn(
            tool_calls=(
                doc_call("a", "SimpleImputer"),  # suffix of target: relevant
                doc_call("b", "pandas.read_csv"),  # unrelated API
                var_call("c"),  # probed variable: relevant
                var_call("d", variable="imp", line=6),  # not a probe target
            )
        ),
        ModelTurn(final_text=NO_VERDICT),
    )
    _, log = run_agent(
        misuse_record, docs_index, gateway, AgentConfig(), runner=replay_runner, params=PARAMS
    )
    assert [c.relevant for c in log] == [True, False, True, False]


def test_call_summary_matches_golden(misuse_record, docs_index, replay_runner):
    gateway = scripted_gateway(
        ModelTurn(tool_calls=(doc_call(),)),
        ModelTurn(final_text=NO_VERDICT),
    )
    _, log = run_agent(
        misuse_record, docs_index, gateway, AgentConfig(), runner=replay_runner, params=PARAMS
    )
    assert call_summary(log) + "\n" == load_golden("call_summary.txt")


def test_call_summary_groups_by_tool():
    from dschecker import CallRecord

    log = [
        CallRecord("get_variable_info", {"variable_name": "df"}, "aaa", True),
        CallRecord("get_api_documentation", {"api_name": "x"}, "bbb", False),
        CallRecord("get_variable_info", {"variable_name": "z"}, "ccc", False),
    ]
    text = call_summary(log)
    lines = text.splitlines()
    assert lines[0] == "calls: 3 total"
    assert "get_variable_info: 2 (relevant: 1)" in lines[1]
    assert "get_api_documentation: 1 (relevant: 0)" in lines[2]
    assert "[relevant]" in lines[3]
    assert "[relevant]" not in lines[4]


def test_nudge_text_is_stable():
    # The nudge is part of the recorded conversation; changing it silently
    # would invalidate every existing transcript.
    assert NUDGE_FINAL == "Respond now with the JSON verdict object."


def test_agent_config_rejects_zero_iterations():
    with pytest.raises(ValueError):
        AgentConfig(max_iterations=0)
