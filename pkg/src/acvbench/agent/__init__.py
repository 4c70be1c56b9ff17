from acvbench.agent.policies import LlmConfig, LlmPolicy, ReplayPolicy, Rule, ScriptedPolicy, load_rules
from acvbench.agent.runtime import Agent, AgentSession, Entry, PolicyOutput, Transcript

__all__ = [
    "Agent",
    "AgentSession",
    "Entry",
    "LlmConfig",
    "LlmPolicy",
    "PolicyOutput",
    "ReplayPolicy",
    "Rule",
    "ScriptedPolicy",
    "Transcript",
    "load_rules",
]
